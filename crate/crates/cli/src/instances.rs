//! Bundled example instances, exercisable through the `examples` verb.
//!
//! `ex1` is a two-step scalar pair whose optimal coupling parameter is flat
//! in its first stage (a continuum of optimizers at lambda = 0); `ex2` is
//! the companion pair with a unique antitone-then-comonotone optimizer and
//! value 77; `ex3` is a two-dimensional pair whose first-stage optimizer is
//! a rotation block rather than a diagonal sign pattern.

use crate::schema::{mat_to_rows, InstanceFile};
use awdist::matcore::Mat;

/// All bundled instances, in (name, instance) form.
pub fn all() -> Vec<(&'static str, InstanceFile)> {
    vec![("ex1", ex1()), ("ex2", ex2()), ("ex3", ex3())]
}

/// Scalar two-step pair with a flat coupling direction at lambda = 0.
pub fn ex1() -> InstanceFile {
    InstanceFile {
        d: 1,
        time_steps: 2,
        a: vec![0.0, 0.0],
        b: vec![6.0, -6.0],
        cov_a: vec![vec![1.0, 2.0], vec![2.0, 5.0]],
        cov_b: vec![vec![1.0, -0.5], vec![-0.5, 1.25]],
        lambda: 0.0,
        p_blocks: None,
        times: None,
    }
}

/// Scalar two-step pair with a unique optimizer; value 77 at lambda = 0.
pub fn ex2() -> InstanceFile {
    InstanceFile {
        d: 1,
        time_steps: 2,
        a: vec![0.0, 0.0],
        b: vec![6.0, -6.0],
        cov_a: vec![vec![1.0, 2.0], vec![2.0, 5.0]],
        cov_b: vec![vec![1.0, -1.0], vec![-1.0, 2.0]],
        lambda: 0.0,
        p_blocks: None,
        times: None,
    }
}

/// Two-dimensional two-step pair whose optimal first-stage block is a
/// rotation. The first factor has a unit top block and an off-diagonal
/// block equal to R - I for the rotation R by angle asin(1/sqrt(50)); the
/// second factor has unit blocks everywhere below the diagonal.
pub fn ex3() -> InstanceFile {
    let r = 2f64.sqrt() / 10.0;
    let l21 = Mat::from_rows(&[vec![7.0 * r - 1.0, -r], vec![r, 7.0 * r - 1.0]])
        .expect("static 2x2 block");
    let eye = Mat::identity(2);
    let zero = Mat::zeros(2, 2);

    let mut l = Mat::zeros(4, 4);
    l.set_submatrix(0, 0, &eye).expect("static block placement");
    l.set_submatrix(0, 2, &zero).expect("static block placement");
    l.set_submatrix(2, 0, &l21).expect("static block placement");
    l.set_submatrix(2, 2, &eye).expect("static block placement");

    let mut m = Mat::zeros(4, 4);
    m.set_submatrix(0, 0, &eye).expect("static block placement");
    m.set_submatrix(2, 0, &eye).expect("static block placement");
    m.set_submatrix(2, 2, &eye).expect("static block placement");

    let cov_a = l.matmul(&l.transpose()).expect("static product");
    let cov_b = m.matmul(&m.transpose()).expect("static product");

    InstanceFile {
        d: 2,
        time_steps: 2,
        a: vec![0.0; 4],
        b: vec![0.0; 4],
        cov_a: mat_to_rows(&cov_a),
        cov_b: mat_to_rows(&cov_b),
        lambda: 0.0,
        p_blocks: None,
        times: None,
    }
}
