//! Kolmogorov-Smirnov and total-variation distances, the simulation study
//! harness, and the train/test protocol for observed data.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lambda::GTable;
use crate::model::{CurveKind, MonotoneCurve, ObservedDataset};
use crate::pipeline::{fit, FitOptions};
use crate::rng::{derive_seed, substream};
use crate::simulate::{run_study, ReservePolicy, SimConfig, ValuationDistribution};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("total variation needs piecewise-linear curves")]
    StepCurve,
    #[error("empty curve")]
    EmptyCurve,
    #[error("train fraction must lie in (0, 1), got {0}")]
    BadRatio(f64),
    #[error("split of {0} auctions leaves an empty side")]
    TooSmall(usize),
    #[error("every replicate failed; last error: {0}")]
    AllFailed(String),
}

/// The second argument of a distance: another estimate or a known law.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Curve(&'a MonotoneCurve),
    Dist(&'a ValuationDistribution),
}

impl<'a> From<&'a MonotoneCurve> for Target<'a> {
    fn from(c: &'a MonotoneCurve) -> Self {
        Target::Curve(c)
    }
}

impl<'a> From<&'a ValuationDistribution> for Target<'a> {
    fn from(d: &'a ValuationDistribution) -> Self {
        Target::Dist(d)
    }
}

fn sorted_union(mut v: Vec<f64>) -> Vec<f64> {
    v.retain(|x| x.is_finite());
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `sup_x |F1(x) - F2(x)|`.
///
/// Between two curves the difference is linear between union knots, so the
/// supremum is attained at a knot or its left limit. Against a distribution
/// the knots are supplemented by a 1000-point grid and cell midpoints.
pub fn ks_distance<'a>(a: &MonotoneCurve, b: impl Into<Target<'a>>) -> f64 {
    match b.into() {
        Target::Curve(b) => {
            let pts = sorted_union(a.knots().iter().chain(b.knots()).copied().collect());
            pts.iter()
                .map(|&x| (a.eval(x) - b.eval(x)).abs().max((a.eval_left(x) - b.eval_left(x)).abs()))
                .fold(0.0, f64::max)
        }
        Target::Dist(d) => {
            let last = a.knots().last().copied().unwrap_or(0.0);
            let upper = last.max(d.quantile(1.0 - 1e-9));
            let mut pts: Vec<f64> = a.knots().to_vec();
            pts.extend(d.breakpoints().into_iter().filter(|&x| x >= 0.0 && x <= upper));
            pts.extend((0..=1000).map(|i| upper * i as f64 / 1000.0));
            let pts = sorted_union(pts);
            let mids: Vec<f64> = pts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            let at_knots = pts
                .iter()
                .map(|&x| {
                    let f = d.cdf(x);
                    (a.eval(x) - f).abs().max((a.eval_left(x) - f).abs())
                })
                .fold(0.0, f64::max);
            mids.iter().map(|&x| (a.eval(x) - d.cdf(x)).abs()).fold(at_knots, f64::max)
        }
    }
}

fn require_linear(c: &MonotoneCurve) -> Result<(), MetricError> {
    if c.is_empty() {
        return Err(MetricError::EmptyCurve);
    }
    if c.kind() != CurveKind::Linear {
        return Err(MetricError::StepCurve);
    }
    Ok(())
}

/// Density of a piecewise-linear curve on the cell `[x0, x1]`.
fn slope_on(c: &MonotoneCurve, x0: f64, x1: f64) -> f64 {
    let k = c.knots();
    if x0 < k[0] || x1 > k[k.len() - 1] {
        return 0.0;
    }
    (c.eval_left(x1) - c.eval(x0)) / (x1 - x0)
}

/// Half the L1 distance between the densities.
///
/// A curve puts an atom of size `F(first knot)` at its first knot, and any
/// mass it leaves short of 1 at infinity.
pub fn tv_distance<'a>(a: &MonotoneCurve, b: impl Into<Target<'a>>) -> Result<f64, MetricError> {
    require_linear(a)?;
    let a_atom = (a.knots()[0], a.values()[0]);
    let a_missing = 1.0 - a.values()[a.len() - 1];
    match b.into() {
        Target::Curve(b) => {
            require_linear(b)?;
            let pts = sorted_union(a.knots().iter().chain(b.knots()).copied().collect());
            let mut total = 0.0;
            for w in pts.windows(2) {
                total += (slope_on(a, w[0], w[1]) - slope_on(b, w[0], w[1])).abs() * (w[1] - w[0]);
            }
            let b_atom = (b.knots()[0], b.values()[0]);
            total += if a_atom.0 == b_atom.0 {
                (a_atom.1 - b_atom.1).abs()
            } else {
                a_atom.1 + b_atom.1
            };
            total += (a_missing - (1.0 - b.values()[b.len() - 1])).abs();
            Ok((0.5 * total).min(1.0))
        }
        Target::Dist(d) => {
            let first = a.knots()[0];
            let last = a.knots()[a.len() - 1];
            let mut pts: Vec<f64> = a.knots().to_vec();
            pts.extend(d.breakpoints().into_iter().filter(|&x| x > first && x < last));
            let pts = sorted_union(pts);
            // law's mass outside the curve's support, plus the curve's atoms
            let outside = d.cdf(first) + (1.0 - d.cdf(last));
            let fixed = outside + a_atom.1 + a_missing;
            let mut m = 16;
            let mut prev = fixed + cells_l1(a, d, &pts, m);
            loop {
                m *= 2;
                let next = fixed + cells_l1(a, d, &pts, m);
                if (next - prev).abs() < 1e-5 || m >= 4096 {
                    return Ok((0.5 * next).min(1.0));
                }
                prev = next;
            }
        }
    }
}

/// Total variation between the two laws coarsened to `bins` equal-width
/// cells spanning both supports, with the mass below and above the span
/// as two further cells.
///
/// Unlike [`tv_distance`] this shrinks as an estimate converges even when
/// the estimate's density is rough, so it is reported alongside.
pub fn binned_tv_distance<'a>(a: &MonotoneCurve, b: impl Into<Target<'a>>, bins: usize) -> Result<f64, MetricError> {
    if a.is_empty() {
        return Err(MetricError::EmptyCurve);
    }
    let bins = bins.max(1);
    let b = b.into();
    let (b_lo, b_hi) = match b {
        Target::Curve(c) => {
            if c.is_empty() {
                return Err(MetricError::EmptyCurve);
            }
            (c.knots()[0], c.knots()[c.len() - 1])
        }
        Target::Dist(d) => (d.quantile(0.0), d.quantile(1.0 - 1e-9)),
    };
    let lo = a.knots()[0].min(b_lo);
    let hi = a.knots()[a.len() - 1].max(b_hi);
    let fb = |x: f64| match b {
        Target::Curve(c) => c.eval(x),
        Target::Dist(d) => d.cdf(x),
    };
    let edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
    let fa: Vec<f64> = edges.iter().map(|&x| a.eval(x)).collect();
    let fbv: Vec<f64> = edges.iter().map(|&x| fb(x)).collect();
    let mut total = (fa[0] - fbv[0]).abs() + (fa[bins] - fbv[bins]).abs();
    for i in 1..=bins {
        total += ((fa[i] - fa[i - 1]) - (fbv[i] - fbv[i - 1])).abs();
    }
    Ok((0.5 * total).min(1.0))
}

/// `sum over cells of int |slope - f|`, splitting each cell where the
/// density crosses the slope so every piece has a constant sign and
/// integrates exactly through the CDF.
fn cells_l1(a: &MonotoneCurve, d: &ValuationDistribution, pts: &[f64], m: usize) -> f64 {
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let c = slope_on(a, x0, x1);
        let h = |x: f64| d.pdf(x) - c;
        let mut cuts = vec![x0];
        // sample strictly inside, where the density is continuous
        let mut prev_x = x0 + (x1 - x0) * 1e-9;
        let mut prev_h = h(prev_x);
        for i in 1..=m {
            let x = if i == m { x1 - (x1 - x0) * 1e-9 } else { x0 + (x1 - x0) * i as f64 / m as f64 };
            let hx = h(x);
            if (prev_h < 0.0) != (hx < 0.0) {
                let (mut lo, mut hi) = (prev_x, x);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if (h(mid) < 0.0) == (prev_h < 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cuts.push(0.5 * (lo + hi));
            }
            prev_x = x;
            prev_h = hx;
        }
        cuts.push(x1);
        for s in cuts.windows(2) {
            total += (c * (s[1] - s[0]) - (d.cdf(s[1]) - d.cdf(s[0]))).abs();
        }
    }
    total
}

/// Cell count of the binned total variation in study reports.
pub const STUDY_TV_BINS: usize = 100;

/// Distances of one replicate's estimates from the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateDistances {
    pub replicate: usize,
    pub ks_mle: f64,
    pub ks_init: f64,
    pub tv_mle: f64,
    pub tv_init: f64,
    pub binned_tv_mle: f64,
    pub binned_tv_init: f64,
    pub lambda_hat: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub label: String,
    pub replicates: usize,
    pub excluded: usize,
    pub ks_mle: f64,
    pub ks_init: f64,
    pub tv_mle: f64,
    pub tv_init: f64,
    pub binned_tv_mle: f64,
    pub binned_tv_init: f64,
    pub raw: Vec<ReplicateDistances>,
}

impl StudyReport {
    pub fn csv_header() -> &'static str {
        "setting,replicates,excluded,ks_mle,ks_init,tv_mle,tv_init,binned_tv_mle,binned_tv_init"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            self.label,
            self.replicates,
            self.excluded,
            self.ks_mle,
            self.ks_init,
            self.tv_mle,
            self.tv_init,
            self.binned_tv_mle,
            self.binned_tv_init
        )
    }
}

/// One cell of a simulation study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySetting {
    pub label: String,
    pub dist: ValuationDistribution,
    pub num_auctions: usize,
}

/// Shared simulation parameters of a study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyOptions {
    pub lambda: f64,
    pub tau: f64,
    pub reserve: ReservePolicy,
    pub fit: FitOptions,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions { lambda: 1.0, tau: 100.0, reserve: ReservePolicy::Constant(0.0), fit: FitOptions::default() }
    }
}

/// Seed of replicate `r` in setting `s`.
pub fn replicate_seed(base_seed: u64, setting: usize, r: usize) -> u64 {
    derive_seed(derive_seed(base_seed, setting as u64), r as u64)
}

pub fn run_replicate(
    setting: &StudySetting,
    seed: u64,
    replicate: usize,
    opts: &StudyOptions,
    table: &GTable,
) -> crate::Result<ReplicateDistances> {
    let config = SimConfig::new(opts.lambda, opts.tau, setting.num_auctions, seed).with_reserve(opts.reserve.clone());
    let data = run_study(&config, &setting.dist)?;
    let f = fit(&data, table, &opts.fit)?;
    let truth = Target::Dist(&setting.dist);
    Ok(ReplicateDistances {
        replicate,
        ks_mle: ks_distance(&f.f_mle, truth),
        ks_init: ks_distance(f.f_init(), truth),
        tv_mle: tv_distance(&f.f_mle, truth)?,
        tv_init: tv_distance(f.f_init(), truth)?,
        binned_tv_mle: binned_tv_distance(&f.f_mle, truth, STUDY_TV_BINS)?,
        binned_tv_init: binned_tv_distance(f.f_init(), truth, STUDY_TV_BINS)?,
        lambda_hat: f.lambda.lambda_hat,
        sweeps: f.ascent.sweeps,
    })
}

/// Runs every setting `replicates` times and averages the distances.
/// Replicates whose fit fails are logged and excluded.
pub fn replicate_table(
    settings: &[StudySetting],
    replicates: usize,
    base_seed: u64,
    opts: &StudyOptions,
    table: &GTable,
) -> Vec<StudyReport> {
    settings
        .iter()
        .enumerate()
        .map(|(s, setting)| {
            let results: Vec<_> = (0..replicates)
                .into_par_iter()
                .map(|r| run_replicate(setting, replicate_seed(base_seed, s, r), r, opts, table))
                .collect();
            let mut raw = Vec::with_capacity(replicates);
            let mut excluded = 0;
            for (r, res) in results.into_iter().enumerate() {
                match res {
                    Ok(d) => raw.push(d),
                    Err(e) => {
                        log::warn!("{} replicate {r} excluded: {e}", setting.label);
                        excluded += 1;
                    }
                }
            }
            let mean = |f: fn(&ReplicateDistances) -> f64| {
                if raw.is_empty() {
                    f64::NAN
                } else {
                    raw.iter().map(f).sum::<f64>() / raw.len() as f64
                }
            };
            StudyReport {
                label: setting.label.clone(),
                replicates: raw.len(),
                excluded,
                ks_mle: mean(|d| d.ks_mle),
                ks_init: mean(|d| d.ks_init),
                tv_mle: mean(|d| d.tv_mle),
                tv_init: mean(|d| d.tv_init),
                binned_tv_mle: mean(|d| d.binned_tv_mle),
                binned_tv_init: mean(|d| d.binned_tv_init),
                raw,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainTestReport {
    pub train_fraction: f64,
    pub replications: usize,
    pub skipped: usize,
    /// Mean TV between the training initial estimate and the test estimate.
    pub avg_tv_init: f64,
    /// Mean TV between the training and test likelihood estimates.
    pub avg_tv_mle: f64,
}

/// Repeatedly splits the auctions, fits both halves and compares the
/// training estimates with the test estimate.
pub fn train_test_eval(
    dataset: &ObservedDataset,
    train_fraction: f64,
    replications: usize,
    seed: u64,
    table: &GTable,
    opts: &FitOptions,
) -> crate::Result<TrainTestReport> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(MetricError::BadRatio(train_fraction).into());
    }
    let k = dataset.len();
    let n_train = (train_fraction * k as f64).round() as usize;
    if n_train == 0 || n_train >= k {
        return Err(MetricError::TooSmall(k).into());
    }
    let results: Vec<crate::Result<(f64, f64)>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut idx: Vec<usize> = (0..k).collect();
            idx.shuffle(&mut substream(seed, r as u64));
            let (train, test) = idx.split_at(n_train);
            let (mut train, mut test) = (train.to_vec(), test.to_vec());
            train.sort_unstable();
            test.sort_unstable();
            let f_train = fit(&dataset.subset(&train)?, table, opts)?;
            let f_test = fit(&dataset.subset(&test)?, table, opts)?;
            Ok((
                tv_distance(f_train.f_init(), &f_test.f_mle)?,
                tv_distance(&f_train.f_mle, &f_test.f_mle)?,
            ))
        })
        .collect();
    let mut sums = (0.0, 0.0);
    let mut used = 0;
    let mut last_err = None;
    for res in results {
        match res {
            Ok((a, b)) => {
                sums.0 += a;
                sums.1 += b;
                used += 1;
            }
            Err(e) => last_err = Some(e.to_string()),
        }
    }
    if used == 0 {
        return Err(MetricError::AllFailed(last_err.unwrap_or_default()).into());
    }
    Ok(TrainTestReport {
        train_fraction,
        replications: used,
        skipped: replications - used,
        avg_tv_init: sums.0 / used as f64,
        avg_tv_mle: sums.1 / used as f64,
    })
}
