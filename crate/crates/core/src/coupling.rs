//! Gaussian bi-causal couplings and their classification.
//!
//! A Gaussian coupling of `mu = N(a, L L^T)` and `nu = N(b, M M^T)` is
//! bi-causal exactly when its cross-covariance factors as `C = L P M^T`
//! with `P = diag(P_1, ..., P_T)` block diagonal and every `P_t` a
//! contraction in spectral norm. This module constructs such couplings from
//! a [`BlockContraction`], inverts the factorization to test bi-causality of
//! an arbitrary Gaussian coupling, extracts the Monge (deterministic) map
//! when `P P^T = I`, and evaluates displacement interpolation between the
//! marginals.
//!
//! The bi-causality test is exact algebra; tolerances below only absorb
//! floating-point noise.

use crate::error::{AwError, Result};
use crate::gausslaw::ProcessLaw;
use crate::matcore::{self, Mat};

/// Absolute threshold on off-block-diagonal entries of `L^{-1} C M^{-T}`
/// when deciding bi-causality.
pub const BICAUSAL_OFF_BLOCK_TOL: f64 = 1e-9;

/// Slack on the unit spectral-norm bound for contraction blocks.
pub const CONTRACTION_NORM_TOL: f64 = 1e-9;

/// Threshold on `max_t ||P_t P_t^T - I||_max` for the Monge property.
pub const MONGE_TOL: f64 = 1e-9;

/// Relative tolerance when comparing coupling marginals against laws.
pub const MARGINAL_TOL: f64 = 1e-10;

/// Block-diagonal contraction parameter `P = diag(P_1, ..., P_T)`:
/// one `d x d` block per time step, each with spectral norm at most one
/// (up to [`CONTRACTION_NORM_TOL`]).
#[derive(Debug, Clone)]
pub struct BlockContraction {
    d: usize,
    blocks: Vec<Mat>,
}

impl BlockContraction {
    pub fn new(d: usize, blocks: Vec<Mat>) -> Result<Self> {
        if d == 0 || blocks.is_empty() {
            return Err(AwError::InvalidInput("need d >= 1 and at least one block".into()));
        }
        for (t, p) in blocks.iter().enumerate() {
            if p.rows() != d || p.cols() != d {
                return Err(AwError::DimensionMismatch {
                    context: format!("block {t} is {}x{}, expected {d}x{d}", p.rows(), p.cols()),
                });
            }
            let norm = matcore::spectral_norm(p)?;
            if norm > 1.0 + CONTRACTION_NORM_TOL {
                return Err(AwError::ContractionViolation { stage: t, norm });
            }
        }
        Ok(BlockContraction { d, blocks })
    }

    /// Scalar-block convenience constructor for `d = 1`.
    pub fn from_scalars(entries: &[f64]) -> Result<Self> {
        let blocks = entries.iter().map(|&x| Mat::diag(&[x])).collect();
        BlockContraction::new(1, blocks)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn time_steps(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    pub fn block(&self, t: usize) -> &Mat {
        &self.blocks[t]
    }

    /// The full `dT x dT` block-diagonal matrix.
    pub fn embed(&self) -> Mat {
        let n = self.d * self.blocks.len();
        let mut p = Mat::zeros(n, n);
        for (t, block) in self.blocks.iter().enumerate() {
            p.set_submatrix(t * self.d, t * self.d, block).expect("block fits by construction");
        }
        p
    }

    /// Largest spectral norm over the blocks.
    pub fn max_block_norm(&self) -> Result<f64> {
        let mut worst = 0.0_f64;
        for b in &self.blocks {
            worst = worst.max(matcore::spectral_norm(b)?);
        }
        Ok(worst)
    }
}

/// Gaussian coupling `N([a; b], [[A, C], [C^T, B]])` of two process laws.
#[derive(Debug, Clone)]
pub struct GaussianCoupling {
    d: usize,
    time_steps: usize,
    mean: Vec<f64>,
    cov: Mat,
}

impl GaussianCoupling {
    /// Assembles a coupling from explicit pieces, checking only shapes and
    /// symmetry of the assembled covariance; positive semidefiniteness is the
    /// caller's responsibility (couplings on the boundary of the contraction
    /// set are deliberately representable, e.g. Monge couplings).
    pub fn from_parts(d: usize, time_steps: usize, mean: Vec<f64>, cov: Mat) -> Result<Self> {
        let n2 = 2 * d * time_steps;
        if mean.len() != n2 || cov.rows() != n2 || cov.cols() != n2 {
            return Err(AwError::DimensionMismatch {
                context: format!(
                    "coupling needs mean {n2} and cov {n2}x{n2}, got {} and {}x{}",
                    mean.len(),
                    cov.rows(),
                    cov.cols()
                ),
            });
        }
        let skew = cov.sub(&cov.transpose())?.max_abs();
        if skew > 1e-10 * cov.max_abs().max(1.0) {
            return Err(AwError::InvalidInput(format!(
                "coupling covariance is not symmetric (skew {skew:.3e})"
            )));
        }
        Ok(GaussianCoupling { d, time_steps, mean, cov })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    /// Dimension of one marginal, `dT`.
    pub fn marginal_dim(&self) -> usize {
        self.d * self.time_steps
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &Mat {
        &self.cov
    }

    /// Marginal covariance of the first process.
    pub fn block_a(&self) -> Mat {
        let n = self.marginal_dim();
        self.cov.submatrix(0, n, 0, n).expect("shape checked at construction")
    }

    /// Marginal covariance of the second process.
    pub fn block_b(&self) -> Mat {
        let n = self.marginal_dim();
        self.cov.submatrix(n, 2 * n, n, 2 * n).expect("shape checked at construction")
    }

    /// Cross-covariance block `C`.
    pub fn cross(&self) -> Mat {
        let n = self.marginal_dim();
        self.cov.submatrix(0, n, n, 2 * n).expect("shape checked at construction")
    }
}

/// Builds the Gaussian bi-causal coupling `pi_P` with cross block
/// `C = L P M^T` (`P` embedded block-diagonally).
pub fn build_coupling(
    mu: &ProcessLaw,
    nu: &ProcessLaw,
    p: &BlockContraction,
) -> Result<GaussianCoupling> {
    check_same_shape(mu, nu)?;
    if p.d() != mu.d() || p.time_steps() != mu.time_steps() {
        return Err(AwError::DimensionMismatch {
            context: format!(
                "contraction has shape d={} T={}, laws have d={} T={}",
                p.d(),
                p.time_steps(),
                mu.d(),
                mu.time_steps()
            ),
        });
    }
    let n = mu.dim();
    let c = mu.chol().matmul(&p.embed())?.matmul(&nu.chol().transpose())?;
    let mut cov = Mat::zeros(2 * n, 2 * n);
    cov.set_submatrix(0, 0, mu.cov().mat())?;
    cov.set_submatrix(0, n, &c)?;
    cov.set_submatrix(n, 0, &c.transpose())?;
    cov.set_submatrix(n, n, nu.cov().mat())?;
    let mean = mu.mean().iter().chain(nu.mean()).copied().collect();
    GaussianCoupling::from_parts(mu.d(), mu.time_steps(), mean, cov)
}

/// Outcome of the bi-causality test: the recovered parameter
/// `P = L^{-1} C M^{-T}` together with the measurements that decided the
/// verdict.
#[derive(Debug, Clone)]
pub struct BicausalCheck {
    pub bicausal: bool,
    /// Recovered `dT x dT` parameter matrix (block diagonal iff bi-causal).
    pub p: Mat,
    /// Largest absolute entry outside the block diagonal.
    pub max_off_block: f64,
    /// Largest spectral norm among the diagonal blocks.
    pub max_block_norm: f64,
}

/// Tests whether a Gaussian coupling of `mu` and `nu` is bi-causal.
///
/// Recovers `P = L^{-1} C M^{-T}` by triangular solves and accepts iff the
/// off-block-diagonal part vanishes (to [`BICAUSAL_OFF_BLOCK_TOL`]) and every
/// diagonal block is a contraction. The recovered `P` is returned as
/// evidence either way.
pub fn is_bicausal(
    mu: &ProcessLaw,
    nu: &ProcessLaw,
    coupling: &GaussianCoupling,
) -> Result<BicausalCheck> {
    check_same_shape(mu, nu)?;
    if coupling.d() != mu.d() || coupling.time_steps() != mu.time_steps() {
        return Err(AwError::DimensionMismatch {
            context: "coupling shape does not match the laws".into(),
        });
    }
    let scale_a = mu.cov().mat().max_abs().max(1.0);
    let scale_b = nu.cov().mat().max_abs().max(1.0);
    let a_gap = coupling.block_a().sub(mu.cov().mat())?.max_abs();
    let b_gap = coupling.block_b().sub(nu.cov().mat())?.max_abs();
    if a_gap > MARGINAL_TOL * scale_a || b_gap > MARGINAL_TOL * scale_b {
        return Err(AwError::MarginalMismatch {
            context: format!("covariance block gaps {a_gap:.3e} / {b_gap:.3e}"),
        });
    }
    let n = mu.dim();
    let mean_gap = coupling
        .mean()
        .iter()
        .zip(mu.mean().iter().chain(nu.mean()))
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()));
    if mean_gap > 1e-12 * (1.0 + coupling.mean().iter().fold(0.0_f64, |a, x| a.max(x.abs()))) {
        return Err(AwError::MarginalMismatch {
            context: format!("mean gap {mean_gap:.3e}"),
        });
    }

    // P = L^{-1} C M^{-T}: first Y = L^{-1} C, then P M^T = Y i.e.
    // M P^T = Y^T, a second lower-triangular solve.
    let y = matcore::solve_lower(mu.chol(), &coupling.cross())?;
    let p = matcore::solve_lower(nu.chol(), &y.transpose())?.transpose();

    let d = mu.d();
    let steps = mu.time_steps();
    let mut max_off = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            if i / d == j / d {
                continue;
            }
            max_off = max_off.max(p.get(i, j).abs());
        }
    }
    let mut max_norm = 0.0_f64;
    for t in 0..steps {
        max_norm = max_norm.max(matcore::spectral_norm(&p.block(t, t, d)?)?);
    }
    Ok(BicausalCheck {
        bicausal: max_off <= BICAUSAL_OFF_BLOCK_TOL && max_norm <= 1.0 + CONTRACTION_NORM_TOL,
        p,
        max_off_block: max_off,
        max_block_norm: max_norm,
    })
}

/// True iff every block satisfies `P_t P_t^T = I` to [`MONGE_TOL`]; such
/// couplings are supported on the graph of a map.
pub fn monge_check(p: &BlockContraction) -> bool {
    monge_deviation(p) <= MONGE_TOL
}

/// `max_t ||P_t P_t^T - I||_max`, the quantity thresholded by `monge_check`.
pub fn monge_deviation(p: &BlockContraction) -> f64 {
    let eye = Mat::identity(p.d());
    p.blocks()
        .iter()
        .map(|b| {
            b.matmul(&b.transpose())
                .and_then(|g| g.sub(&eye))
                .map(|d| d.max_abs())
                .unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max)
}

/// The deterministic transport map of a Monge coupling:
/// `x -> H x + offset` with `H = M P^T L^{-1}` block lower triangular and
/// `offset = b - H a`.
#[derive(Debug, Clone)]
pub struct MongeMap {
    pub matrix: Mat,
    pub offset: Vec<f64>,
}

impl MongeMap {
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let hx = self.matrix.matvec(x)?;
        Ok(hx.iter().zip(&self.offset).map(|(v, o)| v + o).collect())
    }
}

/// Extracts the Monge map of `pi_P`; fails with `NotMonge` unless
/// `P P^T = I` within tolerance.
pub fn monge_map(mu: &ProcessLaw, nu: &ProcessLaw, p: &BlockContraction) -> Result<MongeMap> {
    check_same_shape(mu, nu)?;
    let deviation = monge_deviation(p);
    if deviation > MONGE_TOL {
        return Err(AwError::NotMonge { deviation });
    }
    // H = M P^T L^{-1}: solve L^T H^T = (M P^T)^T = P M^T.
    let mpt = nu.chol().matmul(&p.embed().transpose())?;
    let ht = matcore::solve_upper(&mu.chol().transpose(), &mpt.transpose())?;
    let h = ht.transpose();
    let ha = h.matvec(mu.mean())?;
    let offset = nu.mean().iter().zip(ha).map(|(b, v)| b - v).collect();
    Ok(MongeMap { matrix: h, offset })
}

/// Displacement interpolation of a coupling at time `t` in `[0, 1]`:
/// the law of `(1 - t) X + t Y`. Returns mean, covariance, and the smallest
/// covariance eigenvalue so callers can judge degeneracy themselves (the
/// endpoints are the marginals; midpoints may be singular).
pub fn interpolate(coupling: &GaussianCoupling, t: f64) -> Result<(Vec<f64>, Mat, f64)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(AwError::InvalidInput(format!("interpolation time {t} outside [0, 1]")));
    }
    let n = coupling.marginal_dim();
    let mean: Vec<f64> = (0..n)
        .map(|i| (1.0 - t) * coupling.mean()[i] + t * coupling.mean()[n + i])
        .collect();
    let a = coupling.block_a();
    let b = coupling.block_b();
    let c = coupling.cross();
    let sym_cross = c.add(&c.transpose())?;
    let cov = a
        .scale((1.0 - t) * (1.0 - t))
        .add(&sym_cross.scale(t * (1.0 - t)))?
        .add(&b.scale(t * t))?;
    let (eigs, _) = matcore::sym_eig(&cov)?;
    let min_eig = eigs.first().copied().unwrap_or(0.0);
    Ok((mean, cov, min_eig))
}

fn check_same_shape(mu: &ProcessLaw, nu: &ProcessLaw) -> Result<()> {
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
    Ok(())
}
