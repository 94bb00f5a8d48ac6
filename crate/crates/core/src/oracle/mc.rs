//! Monte Carlo estimation of coupling costs.
//!
//! The estimators here know nothing about closed forms: they draw from an
//! explicit sampler for a coupling and average `|x - y|^2`. The relative
//! entropy part of the entropic objective is added analytically (it is a
//! deterministic functional of the coupling, not an expectation that needs
//! sampling). Gaussian couplings sample through the conditional
//! representation
//!
//! ```text
//! X = a + L Z,   Y = b + M (P^T Z + (I - P^T P)^{1/2} W),
//! ```
//!
//! with independent standard normal `Z, W`, which realizes the joint
//! covariance `[[A, L P M^T], [M P^T L^T, B]]` for any contraction `P`,
//! including boundary (deterministic) ones. A non-Gaussian fixture mixes
//! two deterministic couplings by a fair coin flip; both marginals stay
//! Gaussian while the coupling itself is a mixture, which is exactly the
//! situation where a degenerate flat direction admits optimizers outside
//! the Gaussian family.

use crate::coupling::BlockContraction;
use crate::error::{AwError, Result};
use crate::gausslaw::ProcessLaw;
use crate::matcore::{self, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy)]
pub struct SampleStats {
    pub mean: f64,
    pub stderr: f64,
}

/// Anything that can draw `(x, y)` pairs from a coupling and report the
/// relative entropy of the coupling against the product of its marginals.
pub trait CouplingSampler {
    /// Dimension of each marginal sample.
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>);
    /// `KL(pi | mu (x) nu)`; errors when infinite.
    fn kl_term(&self) -> Result<f64>;
}

/// Sampler for the Gaussian coupling `pi_P`.
#[derive(Debug, Clone)]
pub struct GaussianCouplingSampler {
    mean_mu: Vec<f64>,
    mean_nu: Vec<f64>,
    chol_mu: Mat,
    chol_nu: Mat,
    p_embed: Mat,
    /// `(I - P^T P)^{1/2}`, the conditional noise loading.
    comp: Mat,
    blocks: Vec<Mat>,
}

impl GaussianCouplingSampler {
    pub fn new(mu: &ProcessLaw, nu: &ProcessLaw, p: &BlockContraction) -> Result<Self> {
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
        let p_embed = p.embed();
        let gap = Mat::identity(mu.dim()).sub(&p_embed.transpose().matmul(&p_embed)?)?;
        // sym_pow clamps the tiny negative eigenvalues that appear when a
        // block sits exactly on the orthogonal boundary.
        let comp = matcore::sym_pow(&gap, 0.5)?;
        Ok(GaussianCouplingSampler {
            mean_mu: mu.mean().to_vec(),
            mean_nu: nu.mean().to_vec(),
            chol_mu: mu.chol().clone(),
            chol_nu: nu.chol().clone(),
            p_embed,
            comp,
            blocks: p.blocks().to_vec(),
        })
    }
}

impl CouplingSampler for GaussianCouplingSampler {
    fn dim(&self) -> usize {
        self.mean_mu.len()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let z: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let w: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let shapes = "dimensions validated at construction";
        let lz = self.chol_mu.matvec(&z).expect(shapes);
        let x: Vec<f64> = lz.iter().zip(&self.mean_mu).map(|(v, m)| v + m).collect();
        let mut driver = self.p_embed.transpose().matvec(&z).expect(shapes);
        let extra = self.comp.matvec(&w).expect(shapes);
        for (d, e) in driver.iter_mut().zip(&extra) {
            *d += e;
        }
        let my = self.chol_nu.matvec(&driver).expect(shapes);
        let y: Vec<f64> = my.iter().zip(&self.mean_nu).map(|(v, m)| v + m).collect();
        (x, y)
    }

    fn kl_term(&self) -> Result<f64> {
        let mut total = 0.0;
        for (t, p_t) in self.blocks.iter().enumerate() {
            let gap = Mat::identity(p_t.rows()).sub(&p_t.matmul(&p_t.transpose())?)?;
            let (eigs, _) = matcore::sym_eig(&gap)?;
            for &e in &eigs {
                if e <= 0.0 {
                    return Err(AwError::SingularEntropy { stage: t });
                }
                total -= 0.5 * e.ln();
            }
        }
        Ok(total)
    }
}

/// Fair mixture of two deterministic couplings with identical marginals;
/// non-Gaussian as a joint law even though both marginals are Gaussian.
#[derive(Debug, Clone)]
pub struct MixtureFixture {
    head: GaussianCouplingSampler,
    tail: GaussianCouplingSampler,
}

impl MixtureFixture {
    /// Builds the mixture of the couplings with parameters `plus` and
    /// `minus` between the given laws.
    pub fn new(
        mu: &ProcessLaw,
        nu: &ProcessLaw,
        plus: &BlockContraction,
        minus: &BlockContraction,
    ) -> Result<Self> {
        Ok(MixtureFixture {
            head: GaussianCouplingSampler::new(mu, nu, plus)?,
            tail: GaussianCouplingSampler::new(mu, nu, minus)?,
        })
    }

    /// The two-step instance with a flat first-stage direction, mixed over
    /// the extreme parameters `diag(+-1, 1)` of that direction.
    pub fn flat_direction() -> Result<Self> {
        let cov_a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 5.0]])?;
        let cov_b = Mat::from_rows(&[vec![1.0, -0.5], vec![-0.5, 1.25]])?;
        let mu = crate::gausslaw::make_law(1, 2, vec![0.0, 0.0], cov_a)?;
        let nu = crate::gausslaw::make_law(1, 2, vec![6.0, -6.0], cov_b)?;
        let plus = BlockContraction::from_scalars(&[1.0, 1.0])?;
        let minus = BlockContraction::from_scalars(&[-1.0, 1.0])?;
        MixtureFixture::new(&mu, &nu, &plus, &minus)
    }
}

impl CouplingSampler for MixtureFixture {
    fn dim(&self) -> usize {
        self.head.dim()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        if rng.gen_bool(0.5) {
            self.head.sample(rng)
        } else {
            self.tail.sample(rng)
        }
    }

    fn kl_term(&self) -> Result<f64> {
        Err(AwError::InvalidInput(
            "the mixture coupling is singular with respect to the product reference; \
             its relative entropy is infinite"
                .into(),
        ))
    }
}

/// Unbiased estimate of the coupling objective: the Monte Carlo mean of
/// `|x - y|^2` plus `lambda` times the sampler's exact entropy term.
pub fn sample_cost_estimate(
    sampler: &dyn CouplingSampler,
    lambda: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SampleStats> {
    if n_samples == 0 {
        return Err(AwError::InvalidInput("need at least one sample".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(AwError::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Welford running moments.
    let mut mean = 0.0_f64;
    let mut m2 = 0.0_f64;
    for k in 1..=n_samples {
        let (x, y) = sampler.sample(&mut rng);
        let sq: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let delta = sq - mean;
        mean += delta / (k as f64);
        m2 += delta * (sq - mean);
    }
    let stderr = if n_samples > 1 {
        (m2 / ((n_samples - 1) as f64) / (n_samples as f64)).sqrt()
    } else {
        f64::INFINITY
    };
    let kl = if lambda > 0.0 { lambda * sampler.kl_term()? } else { 0.0 };
    Ok(SampleStats { mean: mean + kl, stderr })
}

/// One standard normal draw by Box-Muller.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            let v: f64 = rng.gen();
            return (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos();
        }
    }
}
