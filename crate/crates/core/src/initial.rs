//! Initial CDF estimate from low-reserve auctions.
//!
//! Final selling prices are mapped through the inverse of `G_lambda` (the CDF
//! of the final price as a function of `F`), first observed prices through
//! `1 - sqrt(1 - G)` (the CDF of the minimum of two valuations). The two are
//! spliced: first-price estimate at the low end, selling-price estimate at
//! the high end, a linear bridge in between.

use serde::Serialize;
use thiserror::Error;

use crate::model::{cdf_to_theta, interpolate, CurveKind, ModelError, MonotoneCurve, ObservedDataset, ThetaVector};

#[derive(Debug, Error)]
pub enum InitialError {
    #[error("q must lie in (0, 1) and epsilon must be positive (got q={q}, epsilon={epsilon})")]
    BadParameters { q: f64, epsilon: f64 },
    #[error("no reserve window of half-width {epsilon} holds a {q} fraction of auctions")]
    NoWindow { q: f64, epsilon: f64 },
    #[error("lambda * tau must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("eta must lie in [0, 1], got {0}")]
    EtaOutOfRange(f64),
    #[error("no low-reserve auction sold above its reserve; relax q or epsilon")]
    NoSoldAuctions,
    #[error("non-monotone composite at knot {0}")]
    NonMonotone(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the low-reserve auctions were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SelectionRule {
    /// Smallest reserve window of half-width `epsilon` holding a `q`
    /// fraction of all auctions. `epsilon = None` picks the default.
    Window { q: f64, epsilon: Option<f64> },
    /// Every auction with reserve strictly below the threshold.
    Threshold(f64),
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule::Window { q: 0.25, epsilon: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowReserveSelection {
    pub r_min: f64,
    pub rule: SelectionRule,
    /// Half-width actually used (`NaN` under a threshold rule).
    pub epsilon: f64,
    /// Selected auction indices, ascending.
    pub members: Vec<usize>,
}

/// Default window half-width: 1% of the median final price of sold
/// auctions, but at least 0.01.
pub fn default_epsilon(dataset: &ObservedDataset) -> f64 {
    let mut prices: Vec<f64> = dataset
        .auctions()
        .iter()
        .filter(|a| a.sold())
        .map(|a| a.final_price())
        .collect();
    if prices.is_empty() {
        return 0.01;
    }
    prices.sort_by(f64::total_cmp);
    let n = prices.len();
    let median = if n % 2 == 1 { prices[n / 2] } else { 0.5 * (prices[n / 2 - 1] + prices[n / 2]) };
    (0.01 * median).max(0.01)
}

/// Smallest `r >= 0` whose window around it holds at least `q K` reserves.
///
/// The window count only changes at `r_k +- epsilon`, so the candidates are
/// 0 and every positive `r_k - epsilon`. At a candidate `c` the captured set
/// is taken as the one just to its right, `(c - epsilon, c + epsilon]`, since
/// the open window at the infimum itself can miss the reserve that defines it.
pub fn select_low_reserve(
    dataset: &ObservedDataset,
    q: f64,
    epsilon: f64,
) -> Result<LowReserveSelection, InitialError> {
    if !(q > 0.0 && q < 1.0 && epsilon > 0.0 && epsilon.is_finite()) {
        return Err(InitialError::BadParameters { q, epsilon });
    }
    let reserves: Vec<f64> = dataset.auctions().iter().map(|a| a.reserve()).collect();
    let needed = q * reserves.len() as f64;
    let mut sorted = reserves.clone();
    sorted.sort_by(f64::total_cmp);
    let mut candidates = vec![0.0];
    candidates.extend(sorted.iter().map(|r| r - epsilon).filter(|&c| c > 0.0));
    for c in candidates {
        let lo = sorted.partition_point(|&r| r <= c - epsilon);
        let hi = sorted.partition_point(|&r| r <= c + epsilon);
        if (hi - lo) as f64 >= needed {
            let members = (0..reserves.len())
                .filter(|&k| reserves[k] > c - epsilon && reserves[k] <= c + epsilon)
                .collect();
            return Ok(LowReserveSelection {
                r_min: c,
                rule: SelectionRule::Window { q, epsilon: Some(epsilon) },
                epsilon,
                members,
            });
        }
    }
    Err(InitialError::NoWindow { q, epsilon })
}

/// All auctions with reserve below `threshold`.
pub fn select_below_threshold(dataset: &ObservedDataset, threshold: f64) -> LowReserveSelection {
    let members: Vec<usize> = (0..dataset.len())
        .filter(|&k| dataset.auctions()[k].reserve() < threshold)
        .collect();
    let r_min = members
        .iter()
        .map(|&k| dataset.auctions()[k].reserve())
        .fold(f64::INFINITY, f64::min);
    LowReserveSelection { r_min, rule: SelectionRule::Threshold(threshold), epsilon: f64::NAN, members }
}

/// Applies a [`SelectionRule`], resolving the default window width.
pub fn select(dataset: &ObservedDataset, rule: SelectionRule) -> Result<LowReserveSelection, InitialError> {
    match rule {
        SelectionRule::Window { q, epsilon } => {
            let eps = epsilon.unwrap_or_else(|| default_epsilon(dataset));
            let mut s = select_low_reserve(dataset, q, eps)?;
            s.rule = rule;
            Ok(s)
        }
        SelectionRule::Threshold(t) => Ok(select_below_threshold(dataset, t)),
    }
}

/// CDF of the final selling price at `eta = F(x)`, given at least two bids
/// above a negligible reserve and `a = lambda tau` expected arrivals.
pub fn g_lambda_cdf(eta: f64, a: f64) -> Result<f64, InitialError> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(InitialError::NonPositiveRate(a));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(InitialError::EtaOutOfRange(eta));
    }
    let s = a * (1.0 - eta);
    let ea = (-a).exp();
    let es = (-s).exp();
    // numerator rewritten so that eta = 0 and eta = 1 are exact
    let num = s * (es - ea) + es - ea * (1.0 + a * eta);
    let den = 1.0 - ea * (1.0 + a);
    Ok((num / den).clamp(0.0, 1.0))
}

/// Inverse of [`g_lambda_cdf`] in `eta`, by bisection to 1e-10.
pub fn g_lambda_inverse(p: f64, a: f64) -> Result<f64, InitialError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(InitialError::EtaOutOfRange(p));
    }
    g_lambda_cdf(0.0, a)?;
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if g_lambda_cdf(mid, a)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Empirical CDF of `samples` as a step curve, transformed pointwise.
fn transformed_ecdf(mut samples: Vec<f64>, f: impl Fn(f64) -> Result<f64, InitialError>) -> Result<MonotoneCurve, InitialError> {
    samples.sort_by(f64::total_cmp);
    samples.dedup();
    let n = samples.len() as f64;
    let mut values = Vec::with_capacity(samples.len());
    for j in 1..=samples.len() {
        values.push(f((j as f64 / n).min(1.0))?);
    }
    Ok(MonotoneCurve::new(samples, values, CurveKind::Step)?)
}

/// Final-price estimate: `G_lambda^{-1}` of the empirical CDF of final
/// prices of selected auctions sold above their reserve.
pub fn estimate_f_sp(
    dataset: &ObservedDataset,
    selection: &LowReserveSelection,
    lambda_hat: f64,
) -> Result<MonotoneCurve, InitialError> {
    let prices: Vec<f64> = selection
        .members
        .iter()
        .map(|&k| &dataset.auctions()[k])
        .filter(|a| a.num_jumps() > 0)
        .map(|a| a.final_price())
        .collect();
    if prices.is_empty() {
        return Err(InitialError::NoSoldAuctions);
    }
    let a = lambda_hat * dataset.duration();
    transformed_ecdf(prices, |p| g_lambda_inverse(p, a))
}

/// First-price estimate: `1 - sqrt(1 - G)` of the empirical CDF of first
/// standing prices above the reserve.
pub fn estimate_f_fp(dataset: &ObservedDataset, selection: &LowReserveSelection) -> Result<MonotoneCurve, InitialError> {
    let first: Vec<f64> = selection
        .members
        .iter()
        .filter_map(|&k| dataset.auctions()[k].first_jump())
        .collect();
    if first.is_empty() {
        return Err(InitialError::NoSoldAuctions);
    }
    transformed_ecdf(first, |p| Ok(1.0 - (1.0 - p).sqrt()))
}

/// Where the bridge between the two estimates ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum SpliceRule {
    /// End the bridge at `max(p1, p2)`, so it always reaches the region
    /// where the final-price estimate is informative.
    #[default]
    MaxAnchor,
    /// End the bridge at `p1` even when `p1 < p2`.
    FirstPrice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpliceAnchors {
    /// Largest first standing price.
    pub p1: f64,
    /// Smallest final selling price.
    pub p2: f64,
    /// Right end of the bridge.
    pub target: f64,
    /// Left end of the bridge.
    pub c: f64,
    /// First-price estimate at `c` (a left limit when the supremum is not
    /// attained).
    pub fp_at_c: f64,
    /// Final-price estimate at `target`.
    pub sp_at_target: f64,
}

pub fn compute_anchors(
    fp: &MonotoneCurve,
    sp: &MonotoneCurve,
    rule: SpliceRule,
) -> Result<SpliceAnchors, InitialError> {
    let (Some(&p1), Some(&p2)) = (fp.knots().last(), sp.knots().first()) else {
        return Err(InitialError::NoSoldAuctions);
    };
    let target = match rule {
        SpliceRule::MaxAnchor => p1.max(p2),
        SpliceRule::FirstPrice => p1,
    };
    let v = sp.eval(target);
    let m = p1.min(p2);
    let (c, fp_at_c) = if fp.eval(m) <= v {
        (m, fp.eval(m))
    } else {
        // first knot where the first-price estimate passes v; c is its
        // supremum, approached from the left
        let j = fp.values().iter().position(|&f| f > v).expect("fp(m) > v");
        let kappa = fp.knots()[j];
        (kappa, fp.eval_left(kappa))
    };
    Ok(SpliceAnchors { p1, p2, target, c, fp_at_c, sp_at_target: v })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialEstimate {
    /// Spliced estimate at the observed knots.
    pub step: MonotoneCurve,
    /// Linear interpolation of `step`, anchored at `(0, 0)`.
    pub continuous: MonotoneCurve,
    pub anchors: SpliceAnchors,
}

/// Splices the two estimates: first-price up to `c`, a linear bridge to
/// `(target, sp(target))`, final-price beyond.
pub fn combine_initial(
    fp: &MonotoneCurve,
    sp: &MonotoneCurve,
    anchors: SpliceAnchors,
) -> Result<InitialEstimate, InitialError> {
    let SpliceAnchors { c, target, fp_at_c, sp_at_target, .. } = anchors;
    let bridge = |x: f64| {
        if target > c {
            fp_at_c + (sp_at_target - fp_at_c) * (x - c) / (target - c)
        } else {
            fp_at_c
        }
    };
    let mut all: Vec<f64> = fp.knots().iter().chain(sp.knots()).copied().collect();
    all.push(c);
    all.push(target);
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut values = Vec::with_capacity(all.len());
    for &x in &all {
        let v = if x < c {
            fp.eval(x)
        } else if x == c {
            fp_at_c
        } else if x <= target {
            bridge(x)
        } else {
            sp.eval(x)
        };
        values.push(v.clamp(0.0, 1.0));
    }
    for (i, w) in values.windows(2).enumerate() {
        // the bridge endpoints are exact, so any decrease is a real error
        if w[1] < w[0] - 1e-12 {
            return Err(InitialError::NonMonotone(all[i + 1]));
        }
    }
    for i in 1..values.len() {
        values[i] = values[i].max(values[i - 1]);
    }
    let step = MonotoneCurve::new(all, values, CurveKind::Step)?;
    let continuous = interpolate(&step, true)?;
    Ok(InitialEstimate { step, continuous, anchors })
}

/// Survival ratios of `f_init` on the grid `z`.
pub fn initial_theta(f_init: &MonotoneCurve, z: &[f64]) -> ThetaVector {
    let values: Vec<f64> = z.iter().map(|&x| f_init.eval(x)).collect();
    cdf_to_theta(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{theta_to_cdf, AuctionRecord, Jump};

    fn reserves_only(rs: &[f64]) -> ObservedDataset {
        ObservedDataset::new(rs.iter().map(|&r| AuctionRecord::new(r, 10.0, vec![], false).unwrap()).collect()).unwrap()
    }

    fn step(knots: &[f64], values: &[f64]) -> MonotoneCurve {
        MonotoneCurve::new(knots.to_vec(), values.to_vec(), CurveKind::Step).unwrap()
    }

    #[test]
    fn window_selection_examples() {
        let s = select_low_reserve(&reserves_only(&[0.0, 0.0, 0.0]), 0.6, 0.5).unwrap();
        assert_eq!((s.r_min, s.members), (0.0, vec![0, 1, 2]));
        let s = select_low_reserve(&reserves_only(&[0.0, 0.0, 100.0]), 0.5, 1.0).unwrap();
        assert_eq!((s.r_min, s.members), (0.0, vec![0, 1]));
        // windows around 50 and 50.5 overlap only for centres above 49.5
        let s = select_low_reserve(&reserves_only(&[5.0, 50.0, 50.5, 90.0]), 0.5, 1.0).unwrap();
        assert_eq!(s.r_min, 49.5);
        assert_eq!(s.members, vec![1, 2]);
        assert!(select_low_reserve(&reserves_only(&[1.0, 5.0, 9.0]), 0.5, 1.0).is_err());
        assert!(select_low_reserve(&reserves_only(&[1.0]), 1.5, 1.0).is_err());
    }

    #[test]
    fn threshold_selection() {
        let s = select_below_threshold(&reserves_only(&[0.99, 10.0, 3.0, 25.0]), 10.0);
        assert_eq!(s.members, vec![0, 2]);
        assert_eq!(s.r_min, 0.99);
    }

    #[test]
    fn g_lambda_endpoints_exact() {
        for a in [0.5, 1.0, 2.0, 10.0, 100.0] {
            assert!(g_lambda_cdf(0.0, a).unwrap().abs() <= 1e-12);
            assert!((g_lambda_cdf(1.0, a).unwrap() - 1.0).abs() <= 1e-12);
        }
        assert!(g_lambda_cdf(0.5, 0.0).is_err());
    }

    #[test]
    fn g_lambda_matches_probabilistic_series() {
        // sum over n >= 2 of P(second max <= x | n) P(N = n | N >= 2)
        let (eta, a) = (0.5f64, 2.0f64);
        let mut pmf = (-a).exp();
        let mut total = 0.0;
        let mut mass = 0.0;
        for n in 1..200u32 {
            pmf *= a / n as f64;
            if n >= 2 {
                let p = n as f64 * eta.powi(n as i32 - 1) * (1.0 - eta) + eta.powi(n as i32);
                total += p * pmf;
                mass += pmf;
            }
        }
        assert!((g_lambda_cdf(eta, a).unwrap() - total / mass).abs() < 1e-14);
    }

    #[test]
    fn g_lambda_inverse_round_trip() {
        for a in [0.5, 3.0, 100.0] {
            for p in [0.01, 0.2, 0.5, 0.9] {
                let eta = g_lambda_inverse(p, a).unwrap();
                assert!((g_lambda_cdf(eta, a).unwrap() - p).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn fp_square_root_inverse() {
        let d = ObservedDataset::new(
            [1.0, 2.0, 3.0, 4.0]
                .iter()
                .map(|&x| AuctionRecord::new(0.0, 10.0, vec![Jump { price: x, wait: 1.0 }], true).unwrap())
                .collect(),
        )
        .unwrap();
        let s = select_below_threshold(&d, 1.0);
        let fp = estimate_f_fp(&d, &s).unwrap();
        assert_eq!(fp.eval(0.5), 0.0);
        assert!((fp.eval(3.0) - 0.5).abs() < 1e-15);
        let sp = estimate_f_sp(&d, &s, 0.3).unwrap();
        assert_eq!(sp.eval(0.9), 0.0);
        assert_eq!(sp.eval(4.5), 1.0);
    }

    #[test]
    fn identical_two_knot_inputs_splice_to_themselves() {
        let h = step(&[1.0, 2.0], &[0.4, 1.0]);
        let a = compute_anchors(&h, &h, SpliceRule::MaxAnchor).unwrap();
        assert_eq!((a.c, a.target), (1.0, 2.0));
        let init = combine_initial(&h, &h, a).unwrap();
        assert_eq!(init.step, h);
    }

    #[test]
    fn degenerate_bridge_concatenates() {
        let fp = step(&[1.0, 3.0], &[0.2, 0.5]);
        let sp = step(&[3.0, 4.0], &[0.6, 1.0]);
        let a = compute_anchors(&fp, &sp, SpliceRule::MaxAnchor).unwrap();
        assert_eq!((a.p1, a.p2, a.c, a.target), (3.0, 3.0, 3.0, 3.0));
        let init = combine_initial(&fp, &sp, a).unwrap();
        assert_eq!(init.step.knots(), &[1.0, 3.0, 4.0]);
        assert_eq!(init.step.values(), &[0.2, 0.5, 1.0]);
    }

    #[test]
    fn unattained_splice_uses_left_limit() {
        let fp = step(&[1.0, 2.0, 5.0], &[0.3, 0.7, 1.0]);
        let sp = step(&[4.0, 6.0], &[0.5, 1.0]);
        // m = 4, fp(4) = 0.7 > sp(5) = 0.5, so c is the knot at 2
        let a = compute_anchors(&fp, &sp, SpliceRule::MaxAnchor).unwrap();
        assert_eq!((a.c, a.fp_at_c, a.target), (2.0, 0.3, 5.0));
        let init = combine_initial(&fp, &sp, a).unwrap();
        assert!(init.step.values().windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(init.continuous.eval(0.0), 0.0);
        assert!((init.step.eval(4.0) - (0.3 + 0.2 * 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(init.step.eval(5.0), 0.5);
    }

    #[test]
    fn theta_round_trip_on_grid() {
        let f = MonotoneCurve::new(vec![0.0, 1.0, 3.0], vec![0.0, 0.5, 0.75], CurveKind::Linear).unwrap();
        assert_eq!(initial_theta(&f, &[1.0, 3.0]).0, vec![0.5, 0.5]);
        let zero = MonotoneCurve::new(vec![0.0, 9.0], vec![0.0, 0.0], CurveKind::Linear).unwrap();
        assert_eq!(initial_theta(&zero, &[1.0, 2.0]).0, vec![1.0, 1.0]);
        let z = [0.5, 1.5, 2.0, 2.9];
        let th = initial_theta(&f, &z);
        let back = theta_to_cdf(&th, &z).unwrap();
        for (&x, &v) in z.iter().zip(back.values()) {
            assert!((f.eval(x) - v).abs() < 1e-12);
        }
    }
}
