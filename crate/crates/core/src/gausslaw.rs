//! Gaussian process laws on `R^{dT}`: validation, Cholesky caching,
//! conditional laws, KL divergence.
//!
//! A [`ProcessLaw`] is a non-degenerate Gaussian `N(mean, cov)` viewed as the
//! law of a `d`-dimensional process over `T` time steps; coordinates are
//! grouped per step, so index `t * d + i` is coordinate `i` at step `t`.
//!
//! Conditioning on the first `t` steps uses the Cholesky factor directly:
//! with `L` lower Cholesky of the covariance,
//!
//! ```text
//! X_{>t} | X_{<=t} = x  ~  N( a_{>t} + L_{>t,<=t} L_{<=t,<=t}^{-1} (x - a_{<=t}),
//!                             L_{>t,>t} L_{>t,>t}^T )
//! ```
//!
//! and the conditional covariance does not depend on the conditioning point,
//! which the dynamic-programming oracle exploits (one grid of conditional
//! laws per step, translated by the mean map). The equivalent
//! Schur-complement formula exists only in tests, as an independent check.

use crate::error::{AwError, Result};
use crate::matcore::{self, Mat, SpdMat};

/// Non-degenerate Gaussian law of a `d`-dimensional, `T`-step process,
/// with its lower Cholesky factor cached at construction.
#[derive(Debug, Clone)]
pub struct ProcessLaw {
    d: usize,
    time_steps: usize,
    mean: Vec<f64>,
    cov: SpdMat,
    chol: Mat,
}

impl ProcessLaw {
    /// Spatial dimension per step.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of time steps.
    pub fn time_steps(&self) -> usize {
        self.time_steps
    }

    /// Total dimension `d * T`.
    pub fn dim(&self) -> usize {
        self.d * self.time_steps
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMat {
        &self.cov
    }

    /// Cached lower Cholesky factor of the covariance.
    pub fn chol(&self) -> &Mat {
        &self.chol
    }
}

/// Validates dimensions and positive definiteness, and caches the Cholesky
/// factor. `cov` is row-major `dT x dT`.
pub fn make_law(d: usize, time_steps: usize, mean: Vec<f64>, cov: Mat) -> Result<ProcessLaw> {
    if d == 0 || time_steps == 0 {
        return Err(AwError::InvalidInput("d and T must be positive".into()));
    }
    let n = d * time_steps;
    if mean.len() != n {
        return Err(AwError::DimensionMismatch {
            context: format!("mean has length {}, expected d*T = {}", mean.len(), n),
        });
    }
    if cov.rows() != n || cov.cols() != n {
        return Err(AwError::DimensionMismatch {
            context: format!("covariance is {}x{}, expected {n}x{n}", cov.rows(), cov.cols()),
        });
    }
    if mean.iter().any(|x| !x.is_finite()) {
        return Err(AwError::InvalidInput("mean entries must be finite".into()));
    }
    let cov = SpdMat::new(cov)?;
    let chol = matcore::cholesky(&cov);
    Ok(ProcessLaw { d, time_steps, mean, cov, chol })
}

/// Conditional law of the trailing steps given the first `t` steps, with the
/// conditioning point left free.
///
/// `mean_at(x_head)` evaluates the conditional mean; the covariance is fixed
/// (it does not depend on the conditioning point).
#[derive(Debug, Clone)]
pub struct ConditionalLaw {
    /// `L_{>t,<=t} L_{<=t,<=t}^{-1}`, the linear part of the mean map.
    mean_shift: Mat,
    /// `a_{>t} - mean_shift * a_{<=t}`, the affine part.
    base_mean: Vec<f64>,
    cov: SpdMat,
    head_dim: usize,
}

impl ConditionalLaw {
    pub fn mean_shift(&self) -> &Mat {
        &self.mean_shift
    }

    pub fn cov(&self) -> &SpdMat {
        &self.cov
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    /// Conditional mean given the head observation.
    pub fn mean_at(&self, x_head: &[f64]) -> Result<Vec<f64>> {
        if x_head.len() != self.head_dim {
            return Err(AwError::DimensionMismatch {
                context: format!("head has length {}, expected {}", x_head.len(), self.head_dim),
            });
        }
        let shifted = self.mean_shift.matvec(x_head)?;
        Ok(self.base_mean.iter().zip(shifted).map(|(b, s)| b + s).collect())
    }
}

/// Conditional law of steps `t..T` given steps `0..t`, `1 <= t <= T-1`.
pub fn conditional_map(law: &ProcessLaw, t: usize) -> Result<ConditionalLaw> {
    if t < 1 || t >= law.time_steps {
        return Err(AwError::IndexOutOfRange {
            context: format!("conditioning on {} of {} steps", t, law.time_steps),
        });
    }
    let d = law.d;
    let head = t * d;
    let tail = law.dim() - head;
    let l = law.chol();
    let l_head = l.submatrix(0, head, 0, head)?;
    let l_cross = l.submatrix(head, head + tail, 0, head)?;
    let l_tail = l.submatrix(head, head + tail, head, head + tail)?;

    // mean_shift = L_cross * L_head^{-1}, via L_head^T X^T = L_cross^T.
    let shift_t = matcore::solve_upper(&l_head.transpose(), &l_cross.transpose())?;
    let mean_shift = shift_t.transpose();

    let a_head = &law.mean[..head];
    let a_tail = &law.mean[head..];
    let shift_at_mean = mean_shift.matvec(a_head)?;
    let base_mean: Vec<f64> =
        a_tail.iter().zip(shift_at_mean).map(|(a, s)| a - s).collect();

    let cov = SpdMat::new(l_tail.matmul(&l_tail.transpose())?)?;
    Ok(ConditionalLaw { mean_shift, base_mean, cov, head_dim: head })
}

/// Conditional mean and covariance of the tail given `x_head` (the first
/// `t` steps). Thin wrapper over [`conditional_map`].
pub fn condition(law: &ProcessLaw, t: usize, x_head: &[f64]) -> Result<(Vec<f64>, SpdMat)> {
    let cond = conditional_map(law, t)?;
    let mean = cond.mean_at(x_head)?;
    Ok((mean, cond.cov.clone()))
}

/// KL divergence between Gaussians,
/// `KL(N(mp, Sp) || N(mq, Sq)) = (tr(Sq^{-1} Sp) + |mq - mp|^2_{Sq^{-1}} - k
/// + log det Sq - log det Sp) / 2`, evaluated through Cholesky factors.
pub fn kl_gaussians(
    p_mean: &[f64],
    p_cov: &SpdMat,
    q_mean: &[f64],
    q_cov: &SpdMat,
) -> Result<f64> {
    let k = p_cov.dim();
    if q_cov.dim() != k || p_mean.len() != k || q_mean.len() != k {
        return Err(AwError::DimensionMismatch {
            context: format!(
                "KL needs matching dimensions, got covs {}/{} and means {}/{}",
                k,
                q_cov.dim(),
                p_mean.len(),
                q_mean.len()
            ),
        });
    }
    let lp = matcore::cholesky(p_cov);
    let lq = matcore::cholesky(q_cov);

    // tr(Sq^{-1} Sp) = ||Lq^{-1} Lp||_F^2.
    let w = matcore::solve_lower(&lq, &lp)?;
    let trace_term = w.entries().iter().map(|x| x * x).sum::<f64>();

    let diff = Mat::new(k, 1, p_mean.iter().zip(q_mean).map(|(p, q)| p - q).collect())?;
    let z = matcore::solve_lower(&lq, &diff)?;
    let quad = z.entries().iter().map(|x| x * x).sum::<f64>();

    let logdet_q: f64 = (0..k).map(|i| lq.get(i, i).ln()).sum::<f64>() * 2.0;
    let logdet_p: f64 = (0..k).map(|i| lp.get(i, i).ln()).sum::<f64>() * 2.0;

    Ok(0.5 * (trace_term + quad - k as f64 + logdet_q - logdet_p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b}, got {a} (tol {tol})");
    }

    fn two_step_law() -> ProcessLaw {
        let cov = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 5.0]]).unwrap();
        make_law(1, 2, vec![0.0, 0.0], cov).unwrap()
    }

    /// d=2, T=2 law whose Cholesky has an off-diagonal block equal to a
    /// rotation minus the identity.
    fn rotation_law() -> ProcessLaw {
        let r = 2.0_f64.sqrt() / 10.0;
        let l21 = Mat::from_rows(&[vec![7.0 * r - 1.0, -r], vec![r, 7.0 * r - 1.0]]).unwrap();
        let mut l = Mat::identity(4);
        l.set_submatrix(2, 0, &l21).unwrap();
        let cov = l.matmul(&l.transpose()).unwrap();
        make_law(2, 2, vec![0.0; 4], cov).unwrap()
    }

    fn random_law(rng: &mut StdRng, d: usize, time_steps: usize) -> ProcessLaw {
        let n = d * time_steps;
        let g = Mat::new(n, n, (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let cov = g.matmul(&g.transpose()).unwrap().add(&Mat::identity(n).scale(0.4)).unwrap();
        let mean = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        make_law(d, time_steps, mean, cov).unwrap()
    }

    #[test]
    fn make_law_caches_cholesky() {
        let law = two_step_law();
        assert_eq!(law.chol().to_rows(), vec![vec![1.0, 0.0], vec![2.0, 1.0]]);
        assert_eq!(law.d(), 1);
        assert_eq!(law.time_steps(), 2);
    }

    #[test]
    fn make_law_standard_normal() {
        let law = make_law(1, 1, vec![0.0], Mat::identity(1)).unwrap();
        assert_eq!(law.chol().get(0, 0), 1.0);
        assert_eq!(law.dim(), 1);
    }

    #[test]
    fn make_law_recovers_rotation_block() {
        let law = rotation_law();
        let r = 2.0_f64.sqrt() / 10.0;
        let l21 = law.chol().submatrix(2, 4, 0, 2).unwrap();
        let expected =
            Mat::from_rows(&[vec![7.0 * r - 1.0, -r], vec![r, 7.0 * r - 1.0]]).unwrap();
        assert!(l21.sub(&expected).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn make_law_rejects_bad_input() {
        assert!(make_law(1, 2, vec![0.0], Mat::identity(2)).is_err());
        assert!(make_law(1, 2, vec![0.0, 0.0], Mat::identity(3)).is_err());
        let singular = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            make_law(1, 2, vec![0.0, 0.0], singular),
            Err(AwError::NotPositiveDefinite { .. })
        ));
        assert!(make_law(0, 2, vec![], Mat::zeros(0, 0)).is_err());
    }

    #[test]
    fn condition_two_step() {
        // Conditioning N(0, [[1,2],[2,5]]) on x1 = 1: mean 2*1, variance 5 - 4.
        let law = two_step_law();
        let (mean, cov) = condition(&law, 1, &[1.0]).unwrap();
        assert_close(mean[0], 2.0, 1e-14);
        assert_close(cov.get(0, 0), 1.0, 1e-14);
    }

    #[test]
    fn condition_at_the_mean_returns_tail_mean() {
        let mut rng = StdRng::seed_from_u64(2);
        for _ in 0..20 {
            let d = rng.gen_range(1..=3);
            let steps = rng.gen_range(2..=4);
            let law = random_law(&mut rng, d, steps);
            let t = rng.gen_range(1..steps);
            let head = &law.mean()[..t * d];
            let (mean, _) = condition(&law, t, head).unwrap();
            for (m, a) in mean.iter().zip(&law.mean()[t * d..]) {
                assert_close(*m, *a, 1e-10);
            }
        }
    }

    #[test]
    fn condition_rotation_law() {
        let law = rotation_law();
        let (mean, cov) = condition(&law, 1, &[1.0, 0.0]).unwrap();
        let r = 2.0_f64.sqrt() / 10.0;
        assert_close(mean[0], 7.0 * r - 1.0, 1e-14);
        assert_close(mean[1], r, 1e-14);
        assert!(cov.mat().sub(&Mat::identity(2)).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn condition_index_bounds() {
        let law = two_step_law();
        assert!(matches!(condition(&law, 0, &[]), Err(AwError::IndexOutOfRange { .. })));
        assert!(matches!(
            condition(&law, 2, &[0.0, 0.0]),
            Err(AwError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn conditional_covariance_identical_across_points() {
        let mut rng = StdRng::seed_from_u64(9);
        let law = random_law(&mut rng, 2, 3);
        let (_, cov_a) = condition(&law, 1, &[0.3, -1.0]).unwrap();
        let (_, cov_b) = condition(&law, 1, &[5.0, 2.0]).unwrap();
        // Covariance must not depend on the conditioning point: same bits.
        assert_eq!(cov_a.mat().entries(), cov_b.mat().entries());
    }

    /// Dense Schur-complement conditioning, written independently of the
    /// Cholesky-block route, as an oracle for `condition`.
    fn schur_condition(law: &ProcessLaw, t: usize, x_head: &[f64]) -> (Vec<f64>, Mat) {
        let d = law.d();
        let head = t * d;
        let n = law.dim();
        let a = law.cov().mat();
        let a11 = a.submatrix(0, head, 0, head).unwrap();
        let a12 = a.submatrix(0, head, head, n).unwrap();
        let a21 = a.submatrix(head, n, 0, head).unwrap();
        let a22 = a.submatrix(head, n, head, n).unwrap();
        // Invert A11 through its Cholesky factor: A11^{-1} B = L^-T L^-1 B.
        let l11 = matcore::chol_raw(&a11, 1e-12).unwrap();
        let inv_apply = |b: &Mat| {
            let y = matcore::solve_lower(&l11, b).unwrap();
            matcore::solve_upper(&l11.transpose(), &y).unwrap()
        };
        let diff =
            Mat::new(head, 1, x_head.iter().zip(&law.mean()[..head]).map(|(x, a)| x - a).collect())
                .unwrap();
        let mean_corr = a21.matmul(&inv_apply(&diff)).unwrap();
        let mean: Vec<f64> = law.mean()[head..]
            .iter()
            .zip(mean_corr.entries())
            .map(|(a, c)| a + c)
            .collect();
        let cov = a22.sub(&a21.matmul(&inv_apply(&a12)).unwrap()).unwrap();
        (mean, cov)
    }

    #[test]
    fn condition_matches_schur_complement_oracle() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..60 {
            let d = rng.gen_range(1..=3);
            let steps = rng.gen_range(2..=4);
            let law = random_law(&mut rng, d, steps);
            let t = rng.gen_range(1..steps);
            let x_head: Vec<f64> = (0..t * d).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let (mean, cov) = condition(&law, t, &x_head).unwrap();
            let (mean_o, cov_o) = schur_condition(&law, t, &x_head);
            for (a, b) in mean.iter().zip(&mean_o) {
                assert_close(*a, *b, 1e-9 * (1.0 + b.abs()));
            }
            assert!(
                cov.mat().sub(&cov_o).unwrap().max_abs() <= 1e-9 * (1.0 + cov_o.max_abs()),
                "conditional covariance disagrees with Schur oracle"
            );
        }
    }

    #[test]
    fn kl_identical_laws_is_zero() {
        let cov = SpdMat::new(Mat::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap()).unwrap();
        let kl = kl_gaussians(&[1.0, -2.0], &cov, &[1.0, -2.0], &cov).unwrap();
        assert_close(kl, 0.0, 1e-14);
    }

    #[test]
    fn kl_scalar_variance_ratio() {
        // KL(N(0,1) || N(0,e)) = (1/e - 1 + 1) / 2 = 1/(2e).
        let p = SpdMat::new(Mat::diag(&[1.0])).unwrap();
        let q = SpdMat::new(Mat::diag(&[std::f64::consts::E])).unwrap();
        let kl = kl_gaussians(&[0.0], &p, &[0.0], &q).unwrap();
        assert_close(kl, 0.5 / std::f64::consts::E, 1e-14);
    }

    #[test]
    fn kl_coupling_vs_product_closed_form() {
        // For the Gaussian coupling with cross block C = L P M^T, the KL
        // against the product of the marginals is -log det(I - P P^T) / 2
        // regardless of the factors; with P = diag(0.6, 0) this is
        // -ln(0.64)/2.
        let l = Mat::from_rows(&[vec![1.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let m = Mat::from_rows(&[vec![1.0, 0.0], vec![-1.0, 1.0]]).unwrap();
        let p = Mat::diag(&[0.6, 0.0]);
        let a = l.matmul(&l.transpose()).unwrap();
        let b = m.matmul(&m.transpose()).unwrap();
        let c = l.matmul(&p).unwrap().matmul(&m.transpose()).unwrap();

        let mut joint = Mat::zeros(4, 4);
        joint.set_submatrix(0, 0, &a).unwrap();
        joint.set_submatrix(0, 2, &c).unwrap();
        joint.set_submatrix(2, 0, &c.transpose()).unwrap();
        joint.set_submatrix(2, 2, &b).unwrap();

        let mut product = Mat::zeros(4, 4);
        product.set_submatrix(0, 0, &a).unwrap();
        product.set_submatrix(2, 2, &b).unwrap();

        let kl = kl_gaussians(
            &[0.0; 4],
            &SpdMat::new(joint).unwrap(),
            &[0.0; 4],
            &SpdMat::new(product).unwrap(),
        )
        .unwrap();
        assert_close(kl, -0.5 * (1.0 - 0.36_f64).ln(), 1e-12);
        assert_close(kl, 0.223_143_551_314_209_7, 1e-12);
    }

    #[test]
    fn kl_nonnegative_on_random_pairs() {
        let mut rng = StdRng::seed_from_u64(41);
        for _ in 0..50 {
            let n = rng.gen_range(1..=5);
            let p = random_law(&mut rng, 1, n);
            let q = random_law(&mut rng, 1, n);
            let kl =
                kl_gaussians(p.mean(), p.cov(), q.mean(), q.cov()).unwrap();
            assert!(kl >= -1e-12, "KL must be non-negative, got {kl}");
        }
    }

    #[test]
    fn kl_dimension_mismatch() {
        let p = SpdMat::new(Mat::identity(2)).unwrap();
        let q = SpdMat::new(Mat::identity(3)).unwrap();
        assert!(kl_gaussians(&[0.0; 2], &p, &[0.0; 3], &q).is_err());
    }
}
