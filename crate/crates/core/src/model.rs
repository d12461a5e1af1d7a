//! Domain types, validation, cross-auction pooling and the survival-ratio
//! reparametrisation of a CDF.

use std::fmt;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid auction: {}", format_violations(.0))]
    InvalidAuction(Vec<Violation>),
    #[error("dataset has no auctions")]
    EmptyDataset,
    #[error("auction {index} has duration {found}, expected {expected}")]
    MixedDuration { index: usize, found: f64, expected: f64 },
    #[error("tie among pooled prices at {value} (add noise before pooling)")]
    Tie { value: f64 },
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("theta has length {theta}, price grid has length {grid}")]
    LengthMismatch { theta: usize, grid: usize },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// One broken auction invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite,
    NegativeReserve(f64),
    NonPositiveDuration(f64),
    FirstJumpNotAboveReserve { price: f64, reserve: f64 },
    NonIncreasingPrice { index: usize, price: f64, previous: f64 },
    NonPositiveWait { index: usize, wait: f64 },
    WaitsExceedDuration { total: f64, duration: f64 },
    JumpsWithoutSale,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite => write!(f, "non-finite field"),
            Violation::NegativeReserve(r) => write!(f, "reserve {r} is negative"),
            Violation::NonPositiveDuration(d) => write!(f, "duration {d} is not positive"),
            Violation::FirstJumpNotAboveReserve { price, reserve } => {
                write!(f, "first jump {price} is not above reserve {reserve}")
            }
            Violation::NonIncreasingPrice { index, price, previous } => {
                write!(f, "jump {index} price {price} does not exceed {previous}")
            }
            Violation::NonPositiveWait { index, wait } => {
                write!(f, "jump {index} wait {wait} is not positive")
            }
            Violation::WaitsExceedDuration { total, duration } => {
                write!(f, "waits sum to {total}, exceeding duration {duration}")
            }
            Violation::JumpsWithoutSale => write!(f, "jumps recorded on an unsold auction"),
        }
    }
}

/// A standing-price change: the new price and the wait since the previous
/// change (or since the start, for the first jump).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jump {
    pub price: f64,
    pub wait: f64,
}

/// Observed summary of one auction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuctionRecord {
    reserve: f64,
    duration: f64,
    jumps: Vec<Jump>,
    sold: bool,
}

impl AuctionRecord {
    /// Validates the fields, listing every violated invariant on failure.
    pub fn new(reserve: f64, duration: f64, jumps: Vec<Jump>, sold: bool) -> Result<Self, ModelError> {
        let mut bad = Vec::new();
        if !reserve.is_finite()
            || !duration.is_finite()
            || jumps.iter().any(|j| !j.price.is_finite() || !j.wait.is_finite())
        {
            return Err(ModelError::InvalidAuction(vec![Violation::NonFinite]));
        }
        if reserve < 0.0 {
            bad.push(Violation::NegativeReserve(reserve));
        }
        if duration <= 0.0 {
            bad.push(Violation::NonPositiveDuration(duration));
        }
        let mut previous = reserve;
        for (index, j) in jumps.iter().enumerate() {
            if j.price <= previous {
                if index == 0 {
                    bad.push(Violation::FirstJumpNotAboveReserve { price: j.price, reserve });
                } else {
                    bad.push(Violation::NonIncreasingPrice { index, price: j.price, previous });
                }
            }
            if j.wait <= 0.0 {
                bad.push(Violation::NonPositiveWait { index, wait: j.wait });
            }
            previous = j.price;
        }
        let total: f64 = jumps.iter().map(|j| j.wait).sum();
        if total > duration {
            bad.push(Violation::WaitsExceedDuration { total, duration });
        }
        if !jumps.is_empty() && !sold {
            bad.push(Violation::JumpsWithoutSale);
        }
        if bad.is_empty() {
            Ok(AuctionRecord { reserve, duration, jumps, sold })
        } else {
            Err(ModelError::InvalidAuction(bad))
        }
    }

    pub fn reserve(&self) -> f64 {
        self.reserve
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn sold(&self) -> bool {
        self.sold
    }

    /// Number of standing-price changes, M.
    pub fn num_jumps(&self) -> usize {
        self.jumps.len()
    }

    /// Final standing price (the reserve when there were no jumps).
    pub fn final_price(&self) -> f64 {
        self.jumps.last().map_or(self.reserve, |j| j.price)
    }

    /// First standing price above the reserve, if any.
    pub fn first_jump(&self) -> Option<f64> {
        self.jumps.first().map(|j| j.price)
    }

    /// Time spent at the reserve: the first wait, or the whole duration.
    pub fn first_wait(&self) -> f64 {
        self.jumps.first().map_or(self.duration, |j| j.wait)
    }

    /// Time from the last jump to the close.
    pub fn tail_time(&self) -> f64 {
        (self.duration - self.jumps.iter().map(|j| j.wait).sum::<f64>()).max(0.0)
    }

    /// Absolute times of the jumps, measured from the start.
    pub fn jump_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.jumps
            .iter()
            .map(|j| {
                t += j.wait;
                t
            })
            .collect()
    }

    /// `(price, time held)` for the reserve and each jump price in order.
    pub fn holding_times(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.jumps.len() + 1);
        let mut price = self.reserve;
        for j in &self.jumps {
            out.push((price, j.wait));
            price = j.price;
        }
        out.push((price, self.tail_time()));
        out
    }
}

/// K auctions sharing one duration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservedDataset {
    auctions: Vec<AuctionRecord>,
    duration: f64,
}

impl ObservedDataset {
    pub fn new(auctions: Vec<AuctionRecord>) -> Result<Self, ModelError> {
        let first = auctions.first().ok_or(ModelError::EmptyDataset)?;
        let duration = first.duration;
        for (index, a) in auctions.iter().enumerate() {
            if a.duration != duration {
                return Err(ModelError::MixedDuration { index, found: a.duration, expected: duration });
            }
        }
        Ok(ObservedDataset { auctions, duration })
    }

    pub fn auctions(&self) -> &[AuctionRecord] {
        &self.auctions
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.auctions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.auctions.is_empty()
    }

    /// Sub-dataset with the given auctions, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, ModelError> {
        ObservedDataset::new(indices.iter().map(|&i| self.auctions[i].clone()).collect())
    }
}

/// Where a pooled price came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Origin {
    Reserve { auction: usize },
    Jump { auction: usize, index: usize },
}

/// Pooled order structure across auctions. All index fields are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledData {
    pub num_auctions: usize,
    /// Sorted jump prices from every auction.
    pub xbar: Vec<f64>,
    /// Holding time of each `xbar` entry.
    pub tbar: Vec<f64>,
    /// Sorted jump prices together with the reserves.
    pub z: Vec<f64>,
    /// Holding time of each `z` entry.
    pub ttilde: Vec<f64>,
    pub origin: Vec<Origin>,
    /// Position of each `xbar` entry inside `z`.
    pub u: Vec<usize>,
    /// Ranks in `xbar` of final prices of auctions sold above reserve.
    pub s: Vec<usize>,
    /// The same final prices, ranked in `z`.
    pub sbar: Vec<usize>,
    /// Sold auctions, including those sold at the reserve.
    pub sold: Vec<usize>,
    /// Time at the reserve for each sold auction.
    pub t0: Vec<f64>,
    /// `l[i]` = number of `u` entries at or before position `i`.
    pub l: Vec<usize>,
    /// `qsize[i]` = number of `sbar` entries at or after position `i`.
    pub qsize: Vec<usize>,
}

impl PooledData {
    /// Number of pooled jump prices.
    pub fn ell(&self) -> usize {
        self.xbar.len()
    }

    /// Number of parameters, one per `z` entry.
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Merges every auction's reserve and jump prices into sorted order.
pub fn pool(dataset: &ObservedDataset) -> Result<PooledData, ModelError> {
    let mut entries: Vec<(f64, f64, Origin)> = Vec::new();
    for (k, a) in dataset.auctions().iter().enumerate() {
        for (i, (price, hold)) in a.holding_times().into_iter().enumerate() {
            let origin = if i == 0 {
                Origin::Reserve { auction: k }
            } else {
                Origin::Jump { auction: k, index: i - 1 }
            };
            entries.push((price, hold, origin));
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(ModelError::Tie { value: w[0].0 });
    }

    let n = entries.len();
    let mut z = Vec::with_capacity(n);
    let mut ttilde = Vec::with_capacity(n);
    let mut origin = Vec::with_capacity(n);
    let mut xbar = Vec::new();
    let mut tbar = Vec::new();
    let mut u = Vec::new();
    // rank in z of every (auction, jump index), for locating final prices
    let mut final_pos = vec![None; dataset.len()];
    for (pos, &(price, hold, o)) in entries.iter().enumerate() {
        z.push(price);
        ttilde.push(hold);
        origin.push(o);
        if let Origin::Jump { auction, index } = o {
            if index + 1 == dataset.auctions()[auction].num_jumps() {
                final_pos[auction] = Some((pos, xbar.len()));
            }
            u.push(pos);
            xbar.push(price);
            tbar.push(hold);
        }
    }

    let mut s = Vec::new();
    let mut sbar = Vec::new();
    let mut sold = Vec::new();
    let mut t0 = Vec::new();
    for (k, a) in dataset.auctions().iter().enumerate() {
        if a.sold() {
            sold.push(k);
            t0.push(a.first_wait());
        }
        if let Some((pz, px)) = final_pos[k] {
            sbar.push(pz);
            s.push(px);
        }
    }
    s.sort_unstable();
    sbar.sort_unstable();

    let mut l = vec![0usize; n];
    let mut count = 0;
    let mut next = 0;
    for (i, li) in l.iter_mut().enumerate() {
        if next < u.len() && u[next] == i {
            count += 1;
            next += 1;
        }
        *li = count;
    }
    let mut qsize = vec![0usize; n];
    let mut count = 0;
    let mut next = sbar.len();
    for i in (0..n).rev() {
        if next > 0 && sbar[next - 1] == i {
            count += 1;
            next -= 1;
        }
        qsize[i] = count;
    }

    Ok(PooledData {
        num_auctions: dataset.len(),
        xbar,
        tbar,
        z,
        ttilde,
        origin,
        u,
        s,
        sbar,
        sold,
        t0,
        l,
        qsize,
    })
}

/// Adds Uniform(0, cap_k) noise to values that tie with another value, where
/// `caps[k]` bounds the perturbation of entry `k`. Entries with a
/// non-positive cap are left alone. Returns the number of perturbed entries.
pub fn jitter_ties<R: Rng + ?Sized>(values: &mut [f64], caps: &[f64], rng: &mut R) -> usize {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut tied = vec![false; values.len()];
    for w in order.windows(2) {
        if values[w[0]] == values[w[1]] {
            tied[w[0]] = true;
            tied[w[1]] = true;
        }
    }
    let mut moved = 0;
    for (k, t) in tied.into_iter().enumerate() {
        if t && caps[k] > 0.0 {
            values[k] += rng.random::<f64>() * caps[k];
            moved += 1;
        }
    }
    moved
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveKind {
    Step,
    Linear,
}

/// A CDF on `[0, inf)` given by knots. Below the first knot it is 0 and past
/// the last knot it stays at the last value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneCurve {
    knots: Vec<f64>,
    values: Vec<f64>,
    kind: CurveKind,
}

impl MonotoneCurve {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, kind: CurveKind) -> Result<Self, ModelError> {
        if knots.len() != values.len() {
            return Err(ModelError::InvalidCurve(format!(
                "{} knots but {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidCurve("non-finite entry".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::InvalidCurve("knots not strictly increasing".into()));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(ModelError::InvalidCurve("values decrease".into()));
        }
        if values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(ModelError::InvalidCurve("value outside [0, 1]".into()));
        }
        Ok(MonotoneCurve { knots, values, kind })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        // number of knots <= x
        let j = self.knots.partition_point(|&k| k <= x);
        if j == 0 {
            return 0.0;
        }
        if j == self.knots.len() || self.kind == CurveKind::Step {
            return self.values[j - 1];
        }
        let (x0, x1) = (self.knots[j - 1], self.knots[j]);
        let (y0, y1) = (self.values[j - 1], self.values[j]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Left limit at `x`.
    pub fn eval_left(&self, x: f64) -> f64 {
        let j = self.knots.partition_point(|&k| k < x);
        if j == 0 {
            return 0.0;
        }
        if j == self.knots.len() || self.kind == CurveKind::Step {
            return self.values[j - 1];
        }
        self.eval(x)
    }
}

/// Survival ratios `G(z_i) / G(z_{i-1})`, one per pooled price.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaVector(pub Vec<f64>);

impl ThetaVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Step CDF on `z` with `F(z_i) = 1 - prod_{j<=i} theta_j`.
pub fn theta_to_cdf(theta: &ThetaVector, z: &[f64]) -> Result<MonotoneCurve, ModelError> {
    if theta.len() != z.len() {
        return Err(ModelError::LengthMismatch { theta: theta.len(), grid: z.len() });
    }
    let mut g = 1.0;
    let mut values = Vec::with_capacity(z.len());
    let mut last: f64 = 0.0;
    for &t in &theta.0 {
        g *= t.clamp(0.0, 1.0);
        // guard against 1 - g wobbling downward by an ulp
        last = last.max(1.0 - g);
        values.push(last);
    }
    MonotoneCurve::new(z.to_vec(), values, CurveKind::Step)
}

/// Inverse of [`theta_to_cdf`] with the convention `0/0 = 0`.
pub fn cdf_to_theta(values: &[f64]) -> ThetaVector {
    let mut prev = 1.0;
    let theta = values
        .iter()
        .map(|&f| {
            let g = 1.0 - f;
            let t = if prev <= 0.0 { 0.0 } else { (g / prev).clamp(0.0, 1.0) };
            prev = g;
            t
        })
        .collect();
    ThetaVector(theta)
}

/// Piecewise-linear curve through the knots of `curve`, optionally starting
/// from `(0, 0)`.
pub fn interpolate(curve: &MonotoneCurve, anchor_zero: bool) -> Result<MonotoneCurve, ModelError> {
    let mut knots = Vec::with_capacity(curve.len() + 1);
    let mut values = Vec::with_capacity(curve.len() + 1);
    if anchor_zero && curve.knots.first().is_some_and(|&k| k > 0.0) {
        knots.push(0.0);
        values.push(0.0);
    }
    knots.extend_from_slice(&curve.knots);
    values.extend_from_slice(&curve.values);
    MonotoneCurve::new(knots, values, CurveKind::Linear)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jumps(v: &[(f64, f64)]) -> Vec<Jump> {
        v.iter().map(|&(price, wait)| Jump { price, wait }).collect()
    }

    #[test]
    fn narrated_auction_record_is_valid() {
        let a = AuctionRecord::new(
            2.0,
            115.0,
            jumps(&[(5.09, 5.96), (8.05, 3.69), (10.14, 14.35)]),
            true,
        )
        .unwrap();
        assert_eq!(a.num_jumps(), 3);
        assert_eq!(a.final_price(), 10.14);
        assert!((a.tail_time() - 91.0).abs() < 1e-9);
    }

    #[test]
    fn unsold_without_jumps_is_valid() {
        let a = AuctionRecord::new(10.0, 100.0, vec![], false).unwrap();
        assert_eq!(a.first_wait(), 100.0);
        assert_eq!(a.holding_times(), vec![(10.0, 100.0)]);
    }

    #[test]
    fn rejects_jump_below_reserve() {
        let err = AuctionRecord::new(5.0, 100.0, jumps(&[(4.0, 1.0)]), true).unwrap_err();
        match err {
            ModelError::InvalidAuction(v) => {
                assert_eq!(v, vec![Violation::FirstJumpNotAboveReserve { price: 4.0, reserve: 5.0 }])
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn lists_every_violation() {
        let err = AuctionRecord::new(
            1.0,
            3.0,
            jumps(&[(2.0, 2.0), (1.5, -1.0), (3.0, 5.0)]),
            false,
        )
        .unwrap_err();
        let ModelError::InvalidAuction(v) = err else { panic!() };
        assert_eq!(v.len(), 4, "{v:?}");
    }

    #[test]
    fn theta_cdf_examples() {
        let z = [1.0, 2.0];
        let c = theta_to_cdf(&ThetaVector(vec![0.5, 0.5]), &z).unwrap();
        assert_eq!(c.values(), &[0.5, 0.75]);
        let c = theta_to_cdf(&ThetaVector(vec![1.0; 2]), &z).unwrap();
        assert_eq!(c.values(), &[0.0, 0.0]);

        assert_eq!(cdf_to_theta(&[0.0, 0.0, 0.0]).0, vec![1.0, 1.0, 1.0]);
        assert_eq!(cdf_to_theta(&[0.5, 1.0]).0, vec![0.5, 0.0]);
        let t = cdf_to_theta(&[0.2, 0.2, 0.6]).0;
        for (a, b) in t.iter().zip([0.8, 1.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        // past an absorbing one everything is 0/0
        assert_eq!(cdf_to_theta(&[1.0, 1.0]).0, vec![0.0, 0.0]);
    }

    #[test]
    fn interpolate_examples() {
        let c = MonotoneCurve::new(vec![5.0], vec![1.0], CurveKind::Step).unwrap();
        let l = interpolate(&c, true).unwrap();
        assert_eq!(l.knots(), &[0.0, 5.0]);
        assert!((l.eval(2.5) - 0.5).abs() < 1e-15);

        let c = MonotoneCurve::new(vec![1.0, 3.0], vec![0.2, 0.8], CurveKind::Step).unwrap();
        let l = interpolate(&c, false).unwrap();
        assert!((l.eval(2.0) - 0.5).abs() < 1e-15);
        for (&k, &v) in c.knots().iter().zip(c.values()) {
            assert_eq!(l.eval(k), v);
        }
    }

    #[test]
    fn curve_evaluation_conventions() {
        let s = MonotoneCurve::new(vec![1.0, 2.0], vec![0.3, 0.9], CurveKind::Step).unwrap();
        assert_eq!(s.eval(0.5), 0.0);
        assert_eq!(s.eval(1.5), 0.3);
        assert_eq!(s.eval(9.0), 0.9);
        assert_eq!(s.eval_left(2.0), 0.3);
        let l = MonotoneCurve::new(vec![1.0, 2.0], vec![0.3, 0.9], CurveKind::Linear).unwrap();
        assert_eq!(l.eval_left(1.0), 0.0);
        assert!((l.eval_left(1.5) - 0.6).abs() < 1e-15);
        assert!(MonotoneCurve::new(vec![1.0, 2.0], vec![0.5, 0.4], CurveKind::Step).is_err());
        assert!(MonotoneCurve::new(vec![2.0, 1.0], vec![0.1, 0.4], CurveKind::Step).is_err());
    }

    #[test]
    fn pooling_empty_case() {
        let d = ObservedDataset::new(vec![AuctionRecord::new(3.0, 10.0, vec![], false).unwrap()]).unwrap();
        let p = pool(&d).unwrap();
        assert_eq!(p.ell(), 0);
        assert_eq!(p.z, vec![3.0]);
        assert!(p.s.is_empty() && p.sold.is_empty());
        assert_eq!(p.ttilde, vec![10.0]);
    }

    #[test]
    fn pool_rejects_ties() {
        let d = ObservedDataset::new(vec![
            AuctionRecord::new(0.0, 10.0, vec![], false).unwrap(),
            AuctionRecord::new(0.0, 10.0, vec![], false).unwrap(),
        ])
        .unwrap();
        assert!(matches!(pool(&d), Err(ModelError::Tie { .. })));
    }

    #[test]
    fn jitter_only_moves_tied_entries() {
        let mut v = vec![0.0, 0.0, 5.0, 7.0, 7.0];
        let caps = vec![0.01, 0.01, 0.01, 0.01, 0.0];
        let mut rng = crate::rng::substream(1, 0);
        let moved = jitter_ties(&mut v, &caps, &mut rng);
        assert_eq!(moved, 3);
        assert_eq!(v[2], 5.0);
        assert_eq!(v[4], 7.0);
        assert!(v[0] > 0.0 && v[0] < 0.01 && v[0] != v[1]);
    }

    #[test]
    fn mixed_durations_rejected() {
        let r = ObservedDataset::new(vec![
            AuctionRecord::new(0.0, 10.0, vec![], false).unwrap(),
            AuctionRecord::new(1.0, 11.0, vec![], false).unwrap(),
        ]);
        assert!(matches!(r, Err(ModelError::MixedDuration { index: 1, .. })));
        assert!(matches!(ObservedDataset::new(vec![]), Err(ModelError::EmptyDataset)));
    }
}
