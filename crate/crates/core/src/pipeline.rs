//! End-to-end fit: arrival rate, initial estimate, then coordinate ascent.

use serde::Serialize;

use crate::error::Result;
use crate::initial::{
    combine_initial, compute_anchors, estimate_f_fp, estimate_f_sp, initial_theta, select, InitialEstimate,
    LowReserveSelection, SelectionRule, SpliceRule,
};
use crate::lambda::{estimate_lambda, GTable, LambdaEstimate};
use crate::mle::{coordinate_ascent, project_feasible, reconstruct_cdf, AscentOptions, AscentResult, LikelihoodContext};
use crate::model::{pool, MonotoneCurve, ObservedDataset, ThetaVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct FitOptions {
    pub selection: SelectionRule,
    pub splice: SpliceRule,
    /// `constrained` here selects the boundary-corrected estimate.
    pub ascent: AscentOptions,
    /// Also run the unconstrained ascent from the same start.
    pub also_unconstrained: bool,
}

/// Initial estimate and its ingredients, without the likelihood step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialFit {
    pub selection: LowReserveSelection,
    pub lambda: LambdaEstimate,
    pub f_fp: MonotoneCurve,
    pub f_sp: MonotoneCurve,
    pub initial: InitialEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub selection: LowReserveSelection,
    pub lambda: LambdaEstimate,
    pub f_fp: MonotoneCurve,
    pub f_sp: MonotoneCurve,
    pub initial: InitialEstimate,
    /// Pooled prices, the grid of the survival ratios.
    pub z: Vec<f64>,
    /// Smallest pooled jump price, if any.
    pub xbar_min: Option<f64>,
    pub theta0: ThetaVector,
    /// Coordinates of the start moved back into the feasible region.
    pub projected: Vec<usize>,
    pub ascent: AscentResult,
    /// The estimate produced under `options.ascent.constrained`.
    pub f_mle: MonotoneCurve,
    pub unconstrained: Option<(AscentResult, MonotoneCurve)>,
}

impl Fit {
    pub fn f_init(&self) -> &MonotoneCurve {
        &self.initial.continuous
    }
}

pub fn fit_initial(dataset: &ObservedDataset, table: &GTable, opts: &FitOptions) -> Result<InitialFit> {
    let selection = select(dataset, opts.selection)?;
    let lambda = estimate_lambda(dataset, table, &selection.members)?;
    let f_sp = estimate_f_sp(dataset, &selection, lambda.lambda_hat)?;
    let f_fp = estimate_f_fp(dataset, &selection)?;
    let anchors = compute_anchors(&f_fp, &f_sp, opts.splice)?;
    let initial = combine_initial(&f_fp, &f_sp, anchors)?;
    Ok(InitialFit { selection, lambda, f_fp, f_sp, initial })
}

pub fn fit(dataset: &ObservedDataset, table: &GTable, opts: &FitOptions) -> Result<Fit> {
    let InitialFit { selection, lambda, f_fp, f_sp, initial } = fit_initial(dataset, table, opts)?;
    let pooled = pool(dataset)?;
    let ctx = LikelihoodContext::new(&pooled, lambda.lambda_hat)?;
    let mut theta0 = initial_theta(&initial.continuous, &pooled.z);
    let projected = project_feasible(&ctx, &mut theta0, opts.ascent.constrained);
    if !projected.is_empty() {
        log::debug!("moved {} starting coordinates into the feasible region", projected.len());
    }
    let ascent = coordinate_ascent(&ctx, &theta0, &opts.ascent)?;
    if !ascent.converged {
        log::warn!("coordinate ascent stopped after {} sweeps without converging", ascent.sweeps);
    }
    let f_mle = reconstruct_cdf(&ascent.theta, &pooled.z)?;
    let unconstrained = if opts.also_unconstrained {
        let mut t0 = initial_theta(&initial.continuous, &pooled.z);
        project_feasible(&ctx, &mut t0, false);
        let o = AscentOptions { constrained: false, ..opts.ascent };
        let r = coordinate_ascent(&ctx, &t0, &o)?;
        let f = reconstruct_cdf(&r.theta, &pooled.z)?;
        Some((r, f))
    } else {
        None
    };
    Ok(Fit {
        selection,
        lambda,
        f_fp,
        f_sp,
        initial,
        z: pooled.z.clone(),
        xbar_min: pooled.xbar.first().copied(),
        theta0,
        projected,
        ascent,
        f_mle,
        unconstrained,
    })
}
