//! Profile log-likelihood in survival-ratio coordinates and its coordinate
//! ascent maximiser.
//!
//! With `theta_i = G(z_i) / G(z_{i-1})` the objective is
//!
//! ```text
//! sum_i c_i ln theta_i - lambda sum_i t_i prod_{j<=i} theta_j + sum_{i in u} ln(1 - theta_i)
//! ```
//!
//! where `c_i = |Q_i| + (ell - l_i)`. Holding the other coordinates fixed it
//! is concave in `theta_i`, and the maximiser has a closed form.

use serde::Serialize;
use thiserror::Error;

use crate::model::{interpolate, theta_to_cdf, ModelError, MonotoneCurve, PooledData, ThetaVector};

#[derive(Debug, Error)]
pub enum MleError {
    #[error("theta has length {found}, expected {expected}")]
    LengthMismatch { found: usize, expected: usize },
    #[error("log-likelihood at the starting point is not finite (coordinate {index})")]
    InfeasibleStart { index: usize },
    #[error("lambda_hat must be finite and non-negative, got {0}")]
    BadRate(f64),
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which closed-form update applies to a coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UpdateCase {
    /// A pooled jump price: interior root of a quadratic.
    Jump,
    /// Below the largest jump price: `min(1, c / A)`.
    Interior,
    /// Above the largest jump price: 0.
    Tail,
}

/// Everything the objective needs from the pooled data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodContext {
    pub lambda_hat: f64,
    pub ttilde: Vec<f64>,
    /// Coefficient of `ln theta_i`.
    pub coef: Vec<f64>,
    pub case: Vec<UpdateCase>,
    /// Position of the smallest jump price, if any.
    pub first_jump: Option<usize>,
}

impl LikelihoodContext {
    pub fn new(pooled: &PooledData, lambda_hat: f64) -> Result<Self, MleError> {
        if !(lambda_hat >= 0.0 && lambda_hat.is_finite()) {
            return Err(MleError::BadRate(lambda_hat));
        }
        let n = pooled.len();
        let ell = pooled.ell();
        let last_u = pooled.u.last().copied();
        let mut in_u = vec![false; n];
        for &i in &pooled.u {
            in_u[i] = true;
        }
        let coef = (0..n).map(|i| (pooled.qsize[i] + (ell - pooled.l[i])) as f64).collect();
        let case = (0..n)
            .map(|i| match last_u {
                _ if in_u[i] => UpdateCase::Jump,
                Some(last) if i < last => UpdateCase::Interior,
                _ => UpdateCase::Tail,
            })
            .collect();
        Ok(LikelihoodContext {
            lambda_hat,
            ttilde: pooled.ttilde.clone(),
            coef,
            case,
            first_jump: pooled.u.first().copied(),
        })
    }

    pub fn len(&self) -> usize {
        self.ttilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ttilde.is_empty()
    }

    fn check_len(&self, theta: &[f64]) -> Result<(), MleError> {
        if theta.len() != self.len() {
            return Err(MleError::LengthMismatch { found: theta.len(), expected: self.len() });
        }
        Ok(())
    }

    /// First coordinate that makes the objective `-inf`, if any.
    pub fn infeasible_at(&self, theta: &[f64]) -> Option<usize> {
        theta.iter().enumerate().position(|(i, &t)| {
            !(0.0..=1.0).contains(&t)
                || (t == 0.0 && self.coef[i] > 0.0)
                || (t == 1.0 && self.case[i] == UpdateCase::Jump)
        })
    }

    /// Log-likelihood up to an additive constant; `-inf` when infeasible.
    pub fn log_lik(&self, theta: &ThetaVector) -> f64 {
        let theta = theta.as_slice();
        if theta.len() != self.len() || self.infeasible_at(theta).is_some() {
            return f64::NEG_INFINITY;
        }
        let mut total = 0.0;
        let mut prod = 1.0;
        let mut exposure = 0.0;
        for (i, &t) in theta.iter().enumerate() {
            if self.coef[i] > 0.0 {
                total += self.coef[i] * t.ln();
            }
            if self.case[i] == UpdateCase::Jump {
                total += (-t).ln_1p();
            }
            prod *= t;
            exposure += self.ttilde[i] * prod;
        }
        total - self.lambda_hat * exposure
    }

    /// `A_i = lambda sum_{k>=i} t_k prod_{j<=k, j!=i} theta_j`, in O(n).
    pub fn compute_a(&self, theta: &ThetaVector, i: usize) -> f64 {
        let theta = theta.as_slice();
        let prefix: f64 = theta[..i].iter().product();
        let mut suffix = 0.0;
        for k in (i..theta.len()).rev() {
            suffix = self.ttilde[k] + if k + 1 < theta.len() { theta[k + 1] * suffix } else { 0.0 };
            if k == i {
                break;
            }
        }
        self.lambda_hat * prefix * suffix
    }

    /// Direct double sum for `A_i`, kept as an independent check.
    pub fn compute_a_naive(&self, theta: &ThetaVector, i: usize) -> f64 {
        let theta = theta.as_slice();
        let mut total = 0.0;
        for k in i..theta.len() {
            let mut p = self.ttilde[k];
            for (j, &t) in theta.iter().enumerate().take(k + 1) {
                if j != i {
                    p *= t;
                }
            }
            total += p;
        }
        self.lambda_hat * total
    }

    /// Maximiser of the objective in coordinate `i` given `A_i`.
    pub fn coord_update(&self, i: usize, a: f64) -> f64 {
        let c = self.coef[i];
        match self.case[i] {
            UpdateCase::Jump => case_one_root(a, c),
            UpdateCase::Interior | UpdateCase::Tail => {
                if c == 0.0 {
                    0.0
                } else if a <= 0.0 {
                    1.0
                } else {
                    (c / a).min(1.0)
                }
            }
        }
    }
}

/// Smaller root of `A t^2 - (A + B + 1) t + B = 0`, the maximiser of
/// `B ln t + ln(1 - t) - A t` on (0, 1). Written as `2B / (b + sqrt(D))` so
/// it stays accurate for extreme `A` and tends to `B / (B + 1)` as `A -> 0`.
pub fn case_one_root(a: f64, b: f64) -> f64 {
    let s = a + b + 1.0;
    let disc = (a - b + 1.0).powi(2) + 4.0 * b;
    2.0 * b / (s + disc.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AscentOptions {
    /// Stop once a sweep improves the objective by at most this much.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Hold coordinates up to and including the smallest jump price at
    /// their starting values.
    pub constrained: bool,
    /// Re-evaluate the objective after every single update and count
    /// decreases. Costs O(n) per update.
    pub check_ascent: bool,
    /// Compare every incremental `A_i` against the O(n^2) formula.
    pub verify_naive: bool,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions { tol: 1e-8, max_sweeps: 10_000, constrained: true, check_ascent: false, verify_naive: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AscentResult {
    pub theta: ThetaVector,
    /// Objective at the start and after each sweep.
    pub log: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Decreases seen by the per-update and per-sweep checks.
    pub violations: usize,
    /// Largest relative gap between incremental and naive `A_i`.
    pub max_a_gap: f64,
}

impl AscentResult {
    pub fn final_log_lik(&self) -> f64 {
        *self.log.last().expect("log holds the starting value")
    }
}

/// Roundoff allowance for the ascent checks.
fn slack(v: f64) -> f64 {
    1e-10 * (1.0 + v.abs())
}

/// Cyclic coordinate ascent from `theta0`.
pub fn coordinate_ascent(
    ctx: &LikelihoodContext,
    theta0: &ThetaVector,
    opts: &AscentOptions,
) -> Result<AscentResult, MleError> {
    ctx.check_len(theta0.as_slice())?;
    if !(opts.tol > 0.0) {
        return Err(MleError::BadTolerance);
    }
    if let Some(index) = ctx.infeasible_at(theta0.as_slice()) {
        return Err(MleError::InfeasibleStart { index });
    }
    let n = ctx.len();
    let frozen_upto = match (opts.constrained, ctx.first_jump) {
        (true, Some(u1)) => Some(u1),
        _ => None,
    };
    let mut theta = theta0.clone();
    let mut prev = ctx.log_lik(&theta);
    let mut log = vec![prev];
    let mut violations = 0;
    let mut max_a_gap: f64 = 0.0;
    let mut suffix = vec![0.0; n];
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < opts.max_sweeps {
        sweeps += 1;
        // suffix[i] depends only on coordinates after i, which the sweep
        // has not touched yet when it reaches i
        for i in (0..n).rev() {
            suffix[i] = ctx.ttilde[i] + if i + 1 < n { theta.0[i + 1] * suffix[i + 1] } else { 0.0 };
        }
        let mut prefix = 1.0;
        for i in 0..n {
            if frozen_upto.is_some_and(|u1| i <= u1) {
                prefix *= theta.0[i];
                continue;
            }
            let a = ctx.lambda_hat * prefix * suffix[i];
            if opts.verify_naive {
                let naive = ctx.compute_a_naive(&theta, i);
                max_a_gap = max_a_gap.max((a - naive).abs() / naive.abs().max(1e-300));
            }
            let before = if opts.check_ascent { ctx.log_lik(&theta) } else { 0.0 };
            theta.0[i] = ctx.coord_update(i, a);
            if opts.check_ascent {
                let after = ctx.log_lik(&theta);
                if after < before - slack(before) {
                    violations += 1;
                }
            }
            prefix *= theta.0[i];
        }
        let ll = ctx.log_lik(&theta);
        log.push(ll);
        if ll < prev - slack(prev) {
            violations += 1;
        }
        if ll - prev <= opts.tol {
            converged = true;
            break;
        }
        prev = ll;
    }
    Ok(AscentResult { theta, log, sweeps, converged, violations, max_a_gap })
}

/// Piecewise-linear CDF through `(0, 0)` and `(z_i, 1 - prod_{j<=i} theta_j)`.
pub fn reconstruct_cdf(theta: &ThetaVector, z: &[f64]) -> Result<MonotoneCurve, MleError> {
    Ok(interpolate(&theta_to_cdf(theta, z)?, true)?)
}

/// Replaces coordinates that would make the objective `-inf`.
///
/// Coordinates that the ascent will update are reset to 0.5; frozen ones
/// are nudged just inside the feasible region so the frozen curve moves by
/// at most `1e-9`. Returns the indices that changed.
pub fn project_feasible(ctx: &LikelihoodContext, theta: &mut ThetaVector, constrained: bool) -> Vec<usize> {
    let frozen_upto = if constrained { ctx.first_jump } else { None };
    let mut changed = Vec::new();
    for i in 0..theta.len() {
        let t = theta.0[i];
        let bad_zero = t <= 0.0 && ctx.coef[i] > 0.0;
        let bad_one = t >= 1.0 && ctx.case[i] == UpdateCase::Jump;
        if !(bad_zero || bad_one) {
            continue;
        }
        theta.0[i] = if frozen_upto.is_some_and(|u1| i <= u1) {
            if bad_zero { 1e-9 } else { 1.0 - 1e-9 }
        } else {
            0.5
        };
        changed.push(i);
    }
    changed
}
