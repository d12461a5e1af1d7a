//! HulC confidence bands: split the auctions into `B` batches, fit each, and
//! take the pointwise envelope. `B` depends on the level and on the median
//! bias of the estimator, which is approximated by simulation on the
//! probability scale.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::initial::SelectionRule;
use crate::lambda::GTable;
use crate::model::{CurveKind, MonotoneCurve, ObservedDataset};
use crate::pipeline::{fit, fit_initial, FitOptions};
use crate::rng::{derive_seed, substream};
use crate::simulate::{run_study, ReservePolicy, SimConfig, ValuationDistribution};

#[derive(Debug, Error)]
pub enum BandsError {
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("median bias must lie in [0, 0.5), got {0}")]
    BadDelta(f64),
    #[error("{batches} batches need at least as many auctions, got {auctions}")]
    TooFewAuctions { batches: usize, auctions: usize },
    #[error("at least {min} Monte Carlo replicates are required, got {got}")]
    TooFewReplicates { min: usize, got: usize },
    #[error("reserve profile has {got} entries for {expected} auctions")]
    ProfileLength { got: usize, expected: usize },
    #[error("every median-bias replicate failed; last error: {0}")]
    AllFailed(String),
    #[error("no batches to combine")]
    NoBatches,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EstimatorKind {
    Init,
    ConstrainedMle,
}

impl EstimatorKind {
    /// Fits the estimate of this kind.
    pub fn estimate(self, data: &ObservedDataset, table: &GTable, opts: &FitOptions) -> crate::Result<MonotoneCurve> {
        match self {
            EstimatorKind::Init => Ok(fit_initial(data, table, opts)?.initial.continuous),
            EstimatorKind::ConstrainedMle => {
                let mut o = *opts;
                o.ascent.constrained = true;
                Ok(fit(data, table, &o)?.f_mle)
            }
        }
    }
}

/// Smallest `B` with `(1/2 + delta)^B + (1/2 - delta)^B <= alpha`.
pub fn hulc_batches(alpha: f64, delta: f64) -> Result<usize, BandsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BandsError::BadAlpha(alpha));
    }
    if !(0.0..0.5).contains(&delta) {
        return Err(BandsError::BadDelta(delta));
    }
    let mut b = 1usize;
    while (0.5 + delta).powi(b as i32) + (0.5 - delta).powi(b as i32) > alpha {
        b += 1;
    }
    Ok(b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianBiasEstimate {
    pub delta: f64,
    pub kind: EstimatorKind,
    pub mc_reps: usize,
    /// Replicates whose fit failed.
    pub failed: usize,
    pub grid: Vec<f64>,
}

/// The grid `0.01, 0.02, ..., 0.99`.
pub fn bias_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Reserves on the probability scale: 0 for low-reserve auctions, the
/// current estimate at the reserve for the rest.
pub fn transformed_reserves(dataset: &ObservedDataset, low_reserve: &[usize], estimate: &MonotoneCurve) -> Vec<f64> {
    let mut out: Vec<f64> = dataset.auctions().iter().map(|a| estimate.eval(a.reserve())).collect();
    for &k in low_reserve {
        out[k] = 0.0;
    }
    out
}

/// Sup-norm median bias of the estimator on Uniform(0, 1) valuations.
///
/// Each replicate simulates `num_auctions` auctions at rate `lambda_hat`
/// with the given reserves and fits the estimator; the bias is
/// `max_y |median_r H_r(y) - y|` with the lower median.
#[allow(clippy::too_many_arguments)]
pub fn estimate_median_bias(
    kind: EstimatorKind,
    num_auctions: usize,
    lambda_hat: f64,
    tau: f64,
    reserve_profile: &[f64],
    mc_reps: usize,
    seed: u64,
    table: &GTable,
    opts: &FitOptions,
) -> crate::Result<MedianBiasEstimate> {
    if mc_reps < 100 {
        return Err(BandsError::TooFewReplicates { min: 100, got: mc_reps }.into());
    }
    if reserve_profile.len() != num_auctions {
        return Err(BandsError::ProfileLength { got: reserve_profile.len(), expected: num_auctions }.into());
    }
    let uniform = ValuationDistribution::uniform(0.0, 1.0)?;
    let grid = bias_grid();
    // zero reserves become distinct values below 1e-6, all caught by the
    // threshold
    let mut sim_opts = *opts;
    sim_opts.selection = SelectionRule::Threshold(1e-3);
    let results: Vec<crate::Result<Vec<f64>>> = (0..mc_reps)
        .into_par_iter()
        .map(|r| {
            let mut config = SimConfig::new(lambda_hat, tau, num_auctions, derive_seed(seed, r as u64))
                .with_reserve(ReservePolicy::Fixed(reserve_profile.to_vec()));
            config.tie_noise = 1e-6;
            let data = run_study(&config, &uniform)?;
            let h = kind.estimate(&data, table, &sim_opts)?;
            Ok(grid.iter().map(|&y| h.eval(y)).collect())
        })
        .collect();
    let mut curves = Vec::with_capacity(mc_reps);
    let mut last_err = String::new();
    for res in results {
        match res {
            Ok(v) => curves.push(v),
            Err(e) => last_err = e.to_string(),
        }
    }
    if curves.is_empty() {
        return Err(BandsError::AllFailed(last_err).into());
    }
    let failed = mc_reps - curves.len();
    let mut delta: f64 = 0.0;
    let mut column = vec![0.0; curves.len()];
    for (j, &y) in grid.iter().enumerate() {
        for (c, v) in column.iter_mut().zip(&curves) {
            *c = v[j];
        }
        column.sort_by(f64::total_cmp);
        let median = column[(column.len() - 1) / 2];
        delta = delta.max((median - y).abs());
    }
    Ok(MedianBiasEstimate { delta, kind, mc_reps, failed, grid })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceBand {
    pub knots: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Full-data estimate at the knots, when supplied.
    pub estimate: Option<Vec<f64>>,
    pub alpha: f64,
    pub batches: usize,
}

impl ConfidenceBand {
    pub fn lower_curve(&self) -> MonotoneCurve {
        MonotoneCurve::new(self.knots.clone(), self.lower.clone(), CurveKind::Linear).expect("envelope of CDFs")
    }

    pub fn upper_curve(&self) -> MonotoneCurve {
        MonotoneCurve::new(self.knots.clone(), self.upper.clone(), CurveKind::Linear).expect("envelope of CDFs")
    }

    /// Mean of `upper - lower` over the given points.
    pub fn mean_width_on(&self, xs: &[f64]) -> f64 {
        let (lo, hi) = (self.lower_curve(), self.upper_curve());
        xs.iter().map(|&x| hi.eval(x) - lo.eval(x)).sum::<f64>() / xs.len() as f64
    }

    pub fn with_estimate(mut self, estimate: &MonotoneCurve) -> Self {
        self.estimate = Some(self.knots.iter().map(|&x| estimate.eval(x)).collect());
        self
    }

    /// CSV with columns `x, lower, upper, estimate`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# alpha={}", self.alpha)?;
        writeln!(out, "# batches={}", self.batches)?;
        writeln!(out, "x,lower,upper,estimate")?;
        for i in 0..self.knots.len() {
            let est = self.estimate.as_ref().map_or(String::new(), |e| e[i].to_string());
            writeln!(out, "{},{},{},{}", self.knots[i], self.lower[i], self.upper[i], est)?;
        }
        Ok(())
    }
}

/// Pointwise envelope of curves on the union of their knots.
pub fn envelope(curves: &[MonotoneCurve], alpha: f64) -> Result<ConfidenceBand, BandsError> {
    if curves.is_empty() {
        return Err(BandsError::NoBatches);
    }
    let mut knots: Vec<f64> = curves.iter().flat_map(|c| c.knots().iter().copied()).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut lower = Vec::with_capacity(knots.len());
    let mut upper = Vec::with_capacity(knots.len());
    for &x in &knots {
        let vals = curves.iter().map(|c| c.eval(x));
        lower.push(vals.clone().fold(f64::INFINITY, f64::min));
        upper.push(vals.fold(f64::NEG_INFINITY, f64::max));
    }
    Ok(ConfidenceBand { knots, lower, upper, estimate: None, alpha, batches: curves.len() })
}

/// Fits each batch and returns the envelope of the fits.
pub fn band_from_batches(
    batches: &[ObservedDataset],
    kind: EstimatorKind,
    alpha: f64,
    table: &GTable,
    opts: &FitOptions,
) -> crate::Result<ConfidenceBand> {
    let curves = batches
        .par_iter()
        .map(|b| kind.estimate(b, table, opts))
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(envelope(&curves, alpha)?)
}

/// Randomly partitions the auctions into `batches` groups of near-equal size.
pub fn split_batches(dataset: &ObservedDataset, batches: usize, seed: u64) -> crate::Result<Vec<ObservedDataset>> {
    if batches == 0 || dataset.len() < batches {
        return Err(BandsError::TooFewAuctions { batches, auctions: dataset.len() }.into());
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut substream(seed, 0));
    (0..batches)
        .map(|b| {
            let mut part: Vec<usize> = idx.iter().skip(b).step_by(batches).copied().collect();
            part.sort_unstable();
            Ok(dataset.subset(&part)?)
        })
        .collect()
}

/// HulC band at level `1 - alpha` given the estimator's median bias.
#[allow(clippy::too_many_arguments)]
pub fn hulc_band(
    dataset: &ObservedDataset,
    kind: EstimatorKind,
    alpha: f64,
    delta: f64,
    seed: u64,
    table: &GTable,
    opts: &FitOptions,
) -> crate::Result<ConfidenceBand> {
    let b = hulc_batches(alpha, delta)?;
    let parts = split_batches(dataset, b, seed)?;
    band_from_batches(&parts, kind, alpha, table, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_counts() {
        assert_eq!(hulc_batches(0.10, 0.0).unwrap(), 5);
        assert_eq!(hulc_batches(0.05, 0.0).unwrap(), 6);
        assert!(hulc_batches(0.1, 0.5).is_err());
        assert!(hulc_batches(1.0, 0.0).is_err());
        assert!(hulc_batches(0.1, 0.2).unwrap() > 5);
        let mut last = 0;
        for d in [0.0, 0.1, 0.2, 0.3, 0.4, 0.45] {
            let b = hulc_batches(0.1, d).unwrap();
            assert!(b >= last);
            last = b;
        }
    }

    #[test]
    fn envelope_of_one_curve_is_that_curve() {
        let c = MonotoneCurve::new(vec![0.0, 1.0, 2.0], vec![0.0, 0.3, 1.0], CurveKind::Linear).unwrap();
        let band = envelope(std::slice::from_ref(&c), 0.5).unwrap();
        assert_eq!(band.lower, band.upper);
        assert_eq!(band.lower, c.values());
    }

    #[test]
    fn envelope_is_monotone_and_ordered() {
        let a = MonotoneCurve::new(vec![0.0, 1.0, 3.0], vec![0.0, 0.6, 1.0], CurveKind::Linear).unwrap();
        let b = MonotoneCurve::new(vec![0.0, 2.0, 4.0], vec![0.0, 0.4, 1.0], CurveKind::Linear).unwrap();
        let band = envelope(&[a, b], 0.1).unwrap();
        assert!(band.lower.iter().zip(&band.upper).all(|(l, u)| l <= u));
        assert!(band.lower.windows(2).all(|w| w[0] <= w[1]));
        assert!(band.upper.windows(2).all(|w| w[0] <= w[1]));
    }
}
