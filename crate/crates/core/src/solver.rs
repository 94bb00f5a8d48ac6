//! Closed-form solvers for the entropic adapted and classical Wasserstein
//! problems between non-degenerate Gaussian process laws.
//!
//! For `mu = N(a, A)`, `nu = N(b, B)` with lower Cholesky factors `L`, `M`,
//! and per-step diagonal blocks `N_t = (M^T L)_{t,t} = U_t S_t V_t^T`:
//!
//! ```text
//! AW2^2_lambda(mu, nu) = |a - b|^2 + tr(A + B) - 2 tr(D S)
//!                        - (lambda/2) log det(I - D^2),
//! ```
//!
//! where `S = diag(S_1, ..., S_T)` and `D = f_lambda(S)` acts on the
//! singular values elementwise. The optimal bi-causal coupling is Gaussian
//! with parameter blocks `P_t = V_t D_t U_t^T`; it is unique for
//! `lambda > 0`, and for `lambda = 0` exactly when no singular value
//! vanishes. On a zero singular value any entry in `[-1, 1]` is optimal; the
//! reported optimizer fills in 1 by default ([`ZeroMode::One`]), which keeps
//! `P_t` orthogonal and therefore the coupling Monge, or 0
//! ([`ZeroMode::Zero`]), the limit of the unique `lambda > 0` optimizers.
//!
//! The classical (non-adapted) entropic distance uses the cross-covariance
//!
//! ```text
//! C_lambda = (1/2) A^{1/2} (4 A^{1/2} B A^{1/2} + (lambda^2/4) I)^{1/2} A^{-1/2}
//!            - (lambda/4) I,
//! K_lambda = A^{-1/2} C_lambda B^{-1/2},
//! W2^2_lambda = |a - b|^2 + tr(A + B) - 2 tr(C_lambda)
//!               - (lambda/2) log det(I - K_lambda K_lambda^T),
//! ```
//!
//! which at `lambda = 0` is the Bures-Wasserstein form (the entropy term is
//! skipped there: `K_0` may have unit singular values). Since the adapted
//! problem optimizes over a subset of couplings, `W2 <= AW2` always, with
//! equality at `T = 1`.
//!
//! For `d = 1` the gap has a closed expression through
//! `g_lambda(s) = 2 s f_lambda(s) + (lambda/2) log(1 - f_lambda(s)^2)`
//! (even in `s`, with the `lambda = 0` limit `g_0(s) = 2 |s|`):
//! summing `g_lambda` over the singular values of the full matrix `M^T L`
//! versus over its diagonal entries gives `AW2^2 - W2^2`, a trace
//! inequality; [`trace_gap`] evaluates it.

use crate::coupling::{self, BlockContraction};
use crate::error::{AwError, Result};
use crate::gausslaw::ProcessLaw;
use crate::matcore::{self, Mat};

/// A singular value counts as zero when at or below this multiple of the
/// largest singular value across all stages; drives the `unique` flag and
/// the zero-mode fill-in.
pub const ZERO_SV_REL_TOL: f64 = 1e-9;

/// Fill-in rule for optimizer entries on zero singular values at
/// `lambda = 0` (where any value in `[-1, 1]` is optimal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroMode {
    /// Fill with 1: keeps each `P_t` orthogonal, so the reported optimizer
    /// is a Monge coupling whenever one exists.
    #[default]
    One,
    /// Fill with 0: the maximal-entropy choice, and the pointwise limit of
    /// the unique `lambda > 0` optimizers as `lambda` decreases to zero.
    Zero,
}

/// Options for [`solve_aw_with`]. The default is `ZeroMode::One`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    pub zero_mode: ZeroMode,
}

/// Per-step singular value decomposition of `N_t = (M^T L)_{t,t}`.
#[derive(Debug, Clone)]
pub struct StageSvd {
    /// Step index, 0-based.
    pub t: usize,
    pub n_t: Mat,
    pub u_t: Mat,
    /// Singular values of `N_t`, descending.
    pub s_t: Vec<f64>,
    pub v_t: Mat,
}

/// Full output of [`solve_aw`]: the value, its four assembly terms, the
/// per-step decompositions, and the optimizer with its classification flags.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// `AW2^2_lambda(mu, nu)`.
    pub value: f64,
    /// `|a - b|^2`.
    pub mean_term: f64,
    /// `tr(A + B)`.
    pub trace_term: f64,
    /// `2 tr(D S)` (entered with a minus sign).
    pub coupling_term: f64,
    /// `-(lambda/2) log det(I - D^2)`, zero when `lambda = 0`.
    pub entropy_term: f64,
    pub stages: Vec<StageSvd>,
    /// Optimal coupling parameter, blocks `P_t = V_t D_t U_t^T`.
    pub p_opt: BlockContraction,
    /// Whether the optimizer is unique: always for `lambda > 0`, and iff
    /// every singular value is nonzero for `lambda = 0`.
    pub unique: bool,
    /// Whether the reported optimizer is a Monge coupling.
    pub monge: bool,
    /// All singular values, concatenated in step order.
    pub s_diag: Vec<f64>,
    /// `f_lambda` of the singular values (after zero-mode fill-in).
    pub d_lambda_diag: Vec<f64>,
}

/// Output of [`solve_w2`].
#[derive(Debug, Clone)]
pub struct W2Report {
    /// `W2^2_lambda(mu, nu)`.
    pub value: f64,
    /// Optimal cross-covariance `C_lambda`.
    pub c_lambda: Mat,
    /// `K_lambda = A^{-1/2} C_lambda B^{-1/2}`.
    pub k_lambda: Mat,
    /// Joint covariance `[[A, C_lambda], [C_lambda^T, B]]` of the optimal
    /// coupling. Positive semidefinite; may be singular at `lambda = 0`
    /// (deterministic optimal maps), hence stored as a plain matrix.
    pub coupling_cov: Mat,
}

/// Closed-form entropic adapted distance with default options.
pub fn solve_aw(mu: &ProcessLaw, nu: &ProcessLaw, lambda: f64) -> Result<SolveReport> {
    solve_aw_with(mu, nu, lambda, SolveOptions::default())
}

/// Closed-form entropic adapted distance; see the module docs for the
/// formula. `lambda` must be non-negative.
pub fn solve_aw_with(
    mu: &ProcessLaw,
    nu: &ProcessLaw,
    lambda: f64,
    opts: SolveOptions,
) -> Result<SolveReport> {
    check_compatible(mu, nu, lambda)?;
    let d = mu.d();
    let steps = mu.time_steps();

    let mtl = nu.chol().transpose().matmul(mu.chol())?;
    let mut stages = Vec::with_capacity(steps);
    let mut s_diag = Vec::with_capacity(d * steps);
    for t in 0..steps {
        let n_t = mtl.block(t, t, d)?;
        let dec = matcore::svd(&n_t)?;
        s_diag.extend_from_slice(&dec.s);
        stages.push(StageSvd { t, n_t, u_t: dec.u, s_t: dec.s, v_t: dec.v });
    }

    let s_max = s_diag.iter().fold(0.0_f64, |acc, &s| acc.max(s));
    let zero_threshold = ZERO_SV_REL_TOL * s_max;
    let fill = match opts.zero_mode {
        ZeroMode::One => 1.0,
        ZeroMode::Zero => 0.0,
    };
    let d_of = |s: f64| -> f64 {
        if lambda > 0.0 {
            matcore::f_lambda(s, lambda)
        } else if s > zero_threshold {
            1.0
        } else {
            fill
        }
    };

    let mut d_lambda_diag = Vec::with_capacity(s_diag.len());
    let mut blocks = Vec::with_capacity(steps);
    for stage in &stages {
        let d_entries: Vec<f64> = stage.s_t.iter().map(|&s| d_of(s)).collect();
        d_lambda_diag.extend_from_slice(&d_entries);
        let p_t = stage
            .v_t
            .matmul(&Mat::diag(&d_entries))?
            .matmul(&stage.u_t.transpose())?;
        blocks.push(p_t);
    }
    let p_opt = BlockContraction::new(d, blocks)?;

    let mean_term = squared_distance(mu.mean(), nu.mean());
    let trace_term = mu.cov().trace() + nu.cov().trace();
    let coupling_term =
        2.0 * s_diag.iter().zip(&d_lambda_diag).map(|(s, dd)| s * dd).sum::<f64>();
    let entropy_term = if lambda > 0.0 {
        -(lambda / 2.0)
            * d_lambda_diag.iter().map(|&dd| (1.0 - dd * dd).ln()).sum::<f64>()
    } else {
        0.0
    };
    let value = mean_term + trace_term - coupling_term + entropy_term;

    let unique = lambda > 0.0 || s_diag.iter().all(|&s| s > zero_threshold);
    let monge = coupling::monge_check(&p_opt);

    Ok(SolveReport {
        value,
        mean_term,
        trace_term,
        coupling_term,
        entropy_term,
        stages,
        p_opt,
        unique,
        monge,
        s_diag,
        d_lambda_diag,
    })
}

/// Closed-form entropic classical (non-adapted) distance; see the module
/// docs. At `lambda = 0` this is the Bures-Wasserstein distance.
pub fn solve_w2(mu: &ProcessLaw, nu: &ProcessLaw, lambda: f64) -> Result<W2Report> {
    check_compatible(mu, nu, lambda)?;
    let n = mu.dim();
    let a = mu.cov().mat();
    let b = nu.cov().mat();

    let a_half = matcore::sym_pow(a, 0.5)?;
    let a_inv_half = matcore::sym_pow(a, -0.5)?;
    let mid = a_half
        .matmul(b)?
        .matmul(&a_half)?
        .scale(4.0)
        .add(&Mat::identity(n).scale(lambda * lambda / 4.0))?;
    let mid_half = matcore::sym_pow(&mid, 0.5)?;
    let c_lambda = a_half
        .matmul(&mid_half)?
        .matmul(&a_inv_half)?
        .scale(0.5)
        .sub(&Mat::identity(n).scale(lambda / 4.0))?;

    let b_inv_half = matcore::sym_pow(b, -0.5)?;
    let k_lambda = a_inv_half.matmul(&c_lambda)?.matmul(&b_inv_half)?;

    let entropy_term = if lambda > 0.0 {
        let kkt = k_lambda.matmul(&k_lambda.transpose())?;
        let (eigs, _) = matcore::sym_eig(&kkt)?;
        let mut logdet = 0.0;
        for &e in &eigs {
            let gap = 1.0 - e.max(0.0);
            if gap <= 0.0 {
                return Err(AwError::NumericalFailure(
                    "K_lambda reached a unit singular value at lambda > 0".into(),
                ));
            }
            logdet += gap.ln();
        }
        -(lambda / 2.0) * logdet
    } else {
        0.0
    };

    let value = squared_distance(mu.mean(), nu.mean()) + a.trace() + b.trace()
        - 2.0 * c_lambda.trace()
        + entropy_term;

    let mut coupling_cov = Mat::zeros(2 * n, 2 * n);
    coupling_cov.set_submatrix(0, 0, a)?;
    coupling_cov.set_submatrix(0, n, &c_lambda)?;
    coupling_cov.set_submatrix(n, 0, &c_lambda.transpose())?;
    coupling_cov.set_submatrix(n, n, b)?;

    Ok(W2Report { value, c_lambda, k_lambda, coupling_cov })
}

/// `g_lambda(s) = 2 s f_lambda(s) + (lambda/2) log(1 - f_lambda(s)^2)`,
/// the per-singular-value contribution to both closed forms. Even in `s`;
/// the `lambda = 0` limit is `2 |s|` (the entropy factor vanishes).
pub fn g_lambda(s: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 2.0 * s.abs();
    }
    let f = matcore::f_lambda(s, lambda);
    2.0 * s * f + (lambda / 2.0) * (1.0 - f * f).ln()
}

/// Trace-inequality gap `AW2^2 - W2^2` for one-dimensional processes,
/// evaluated as `sum_i g_lambda(sigma_i(M^T L)) - sum_t g_lambda((M^T L)_tt)`
/// (full-matrix singular values vs. diagonal entries). Non-negative up to
/// rounding. Only defined for `d = 1`.
pub fn trace_gap(mu: &ProcessLaw, nu: &ProcessLaw, lambda: f64) -> Result<f64> {
    check_compatible(mu, nu, lambda)?;
    if mu.d() != 1 {
        return Err(AwError::UnsupportedDimension {
            context: format!("trace_gap requires d = 1, got d = {}", mu.d()),
        });
    }
    let n = nu.chol().transpose().matmul(mu.chol())?;
    let dec = matcore::svd(&n)?;
    let full: f64 = dec.s.iter().map(|&s| g_lambda(s, lambda)).sum();
    let diag: f64 = (0..n.rows()).map(|t| g_lambda(n.get(t, t), lambda)).sum();
    Ok(full - diag)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_compatible(mu: &ProcessLaw, nu: &ProcessLaw, lambda: f64) -> Result<()> {
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
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(AwError::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}
