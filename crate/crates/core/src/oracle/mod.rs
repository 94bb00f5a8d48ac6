//! Independent verification back-ends for the closed-form solvers.
//!
//! Three routes, none of which share code with [`crate::solver`] beyond the
//! basic matrix kernels:
//!
//! * [`eval_cost`] evaluates the bi-causal objective directly at any
//!   admissible coupling parameter, so closed-form optimality claims can be
//!   checked against explicit competitors;
//! * [`param`] searches the parameter space itself (dense grids with local
//!   refinement for `d = 1`, multi-start projected gradient ascent above);
//! * [`dpp`] discretizes a two-step scalar instance onto quadrature grids
//!   and runs the nested backward recursion, with entropic smoothing handled
//!   by log-domain Sinkhorn iterations;
//! * [`mc`] estimates coupling costs by plain Monte Carlo sampling, which is
//!   slow but makes no structural assumptions at all.
//!
//! The bi-causal objective being evaluated everywhere is
//!
//! ```text
//! J(P) = |a - b|^2 + tr(A + B) - sum_t 2 tr(P_t N_t)
//!        - (lambda/2) sum_t log det(I - P_t P_t^T),
//! ```
//!
//! over block contractions `P`, where `N_t = (M^T L)_{t,t}`. For
//! `lambda = 0` the entropy term is dropped and the feasible region is the
//! closed unit ball per block; for `lambda > 0` the objective is `+inf` on
//! the boundary, so maximizers are interior and unique.

pub mod dpp;
pub mod mc;
pub mod param;

pub use dpp::{grid_entropic_value, nested_sinkhorn, DiscreteInstance, SinkhornConfig};
pub use mc::{sample_cost_estimate, GaussianCouplingSampler, MixtureFixture, SampleStats};
pub use param::{param_search, ParamSearchConfig, ParamSearchReport};

use crate::coupling::BlockContraction;
use crate::error::{AwError, Result};
use crate::gausslaw::ProcessLaw;
use crate::matcore::{self, Mat};

/// Largest eigenvalue of `P_t P_t^T` tolerated before the entropy term is
/// declared infinite at `lambda > 0`.
pub const ENTROPY_BOUNDARY_TOL: f64 = 1e-13;

/// Evaluates the bi-causal objective at the coupling with parameter `p`.
///
/// This is a direct computation from the definition: it does not call the
/// closed-form solver and is therefore usable as a check against it. Errors
/// with [`AwError::SingularEntropy`] when `lambda > 0` and some block sits
/// on the unit-norm boundary (infinite relative entropy).
pub fn eval_cost(
    mu: &ProcessLaw,
    nu: &ProcessLaw,
    p: &BlockContraction,
    lambda: f64,
) -> Result<f64> {
    if mu.d() != nu.d() || mu.time_steps() != nu.time_steps() {
        return Err(AwError::DimensionMismatch {
            context: format!(
                "laws have shapes d={} T={} and d={} T={}",
                mu.d(),
                mu.time_steps(),
                nu.d(),
                nu.time_steps()
            ),
        });
    }
    if p.d() != mu.d() || p.time_steps() != mu.time_steps() {
        return Err(AwError::DimensionMismatch {
            context: format!(
                "parameter has shape d={} T={}, laws have d={} T={}",
                p.d(),
                p.time_steps(),
                mu.d(),
                mu.time_steps()
            ),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(AwError::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }

    let d = mu.d();
    let mtl = nu.chol().transpose().matmul(mu.chol())?;

    let mean_term: f64 = mu
        .mean()
        .iter()
        .zip(nu.mean())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let mut cost = mean_term + mu.cov().trace() + nu.cov().trace();

    for t in 0..p.time_steps() {
        let n_t = mtl.block(t, t, d)?;
        cost -= 2.0 * p.block(t).matmul(&n_t)?.trace();
        if lambda > 0.0 {
            let ppt = p.block(t).matmul(&p.block(t).transpose())?;
            let gap = Mat::identity(d).sub(&ppt)?;
            let (eigs, _) = matcore::sym_eig(&gap)?;
            let mut logdet = 0.0;
            for &e in &eigs {
                if e <= ENTROPY_BOUNDARY_TOL {
                    return Err(AwError::SingularEntropy { stage: t });
                }
                logdet += e.ln();
            }
            cost -= (lambda / 2.0) * logdet;
        }
    }
    Ok(cost)
}
