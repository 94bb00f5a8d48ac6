//! Shared fixtures and generators for the integration suites.
//!
//! Each test target compiles this module independently and uses its own
//! subset of the helpers, so unused-code lints are suppressed here.
#![allow(dead_code)]

use awdist::coupling::BlockContraction;
use awdist::gausslaw::{make_law, ProcessLaw};
use awdist::matcore::{self, Mat};
use rand::rngs::StdRng;
use rand::Rng;

/// Two-step scalar pair with a flat first-stage direction (`N_11 = 0`): the
/// optimizer is degenerate along that axis and the value is 78.25.
pub fn flat_direction_pair() -> (ProcessLaw, ProcessLaw) {
    let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 5.0]]).unwrap();
    let b = Mat::from_rows(&[vec![1.0, -0.5], vec![-0.5, 1.25]]).unwrap();
    (
        make_law(1, 2, vec![0.0, 0.0], a).unwrap(),
        make_law(1, 2, vec![6.0, -6.0], b).unwrap(),
    )
}

/// Two-step scalar pair whose optimizer pairs the first stage antitonely:
/// value 77 at `lambda = 0` with parameter `diag(-1, 1)`.
pub fn antitone_pair() -> (ProcessLaw, ProcessLaw) {
    let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 5.0]]).unwrap();
    let b = Mat::from_rows(&[vec![1.0, -1.0], vec![-1.0, 2.0]]).unwrap();
    (
        make_law(1, 2, vec![0.0, 0.0], a).unwrap(),
        make_law(1, 2, vec![6.0, -6.0], b).unwrap(),
    )
}

/// Two-dimensional two-step pair whose optimal first block is the rotation
/// `(sqrt(2)/10) [[7, 1], [-1, 7]]` (block-diagonal but not diagonal).
pub fn rotation_pair() -> (ProcessLaw, ProcessLaw) {
    let r = 2.0_f64.sqrt() / 10.0;
    let l21 = Mat::from_rows(&[vec![7.0 * r - 1.0, -r], vec![r, 7.0 * r - 1.0]]).unwrap();
    let mut l = Mat::identity(4);
    l.set_submatrix(2, 0, &l21).unwrap();
    let a = l.matmul(&l.transpose()).unwrap();
    let mut m = Mat::identity(4);
    m.set_submatrix(2, 0, &Mat::identity(2)).unwrap();
    let b = m.matmul(&m.transpose()).unwrap();
    (
        make_law(2, 2, vec![0.0; 4], a).unwrap(),
        make_law(2, 2, vec![0.0; 4], b).unwrap(),
    )
}

/// Random well-conditioned SPD matrix of size `n`.
pub fn random_spd(rng: &mut StdRng, n: usize) -> Mat {
    let g = Mat::new(n, n, (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
    g.matmul(&g.transpose())
        .unwrap()
        .add(&Mat::identity(n).scale(0.4))
        .unwrap()
}

/// Random non-degenerate process law.
pub fn random_law(rng: &mut StdRng, d: usize, steps: usize) -> ProcessLaw {
    let n = d * steps;
    let mean = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    make_law(d, steps, mean, random_spd(rng, n)).unwrap()
}

/// Random law with covariance rescaled to spectral norm at most `cap`.
pub fn random_law_capped(rng: &mut StdRng, d: usize, steps: usize, cap: f64) -> ProcessLaw {
    let n = d * steps;
    let cov = random_spd(rng, n);
    let norm = matcore::spectral_norm(&cov).unwrap();
    let cov = if norm > cap { cov.scale(cap / norm) } else { cov };
    let mean = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    make_law(d, steps, mean, cov).unwrap()
}

/// Random block contraction with every block scaled to spectral norm at
/// most `cap` (strictly below 1 when `cap < 1`).
pub fn random_contraction(rng: &mut StdRng, d: usize, steps: usize, cap: f64) -> BlockContraction {
    let blocks = (0..steps)
        .map(|_| {
            let raw =
                Mat::new(d, d, (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let norm = matcore::spectral_norm(&raw).unwrap();
            if norm > cap {
                raw.scale(cap / norm)
            } else {
                raw
            }
        })
        .collect();
    BlockContraction::new(d, blocks).unwrap()
}

/// Random orthogonal matrix (QR-free: product of random rotations and sign
/// flips through the SVD of a random matrix).
pub fn random_orthogonal(rng: &mut StdRng, d: usize) -> Mat {
    let raw = Mat::new(d, d, (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let dec = matcore::svd(&raw).unwrap();
    dec.u.matmul(&dec.v.transpose()).unwrap()
}
