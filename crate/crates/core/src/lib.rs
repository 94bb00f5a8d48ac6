//! Closed-form entropic adapted Wasserstein distances between Gaussian
//! process laws.
//!
//! For non-degenerate Gaussian laws `mu = N(a, A)` and `nu = N(b, B)` of
//! `R^d`-valued discrete-time processes over `T` steps, the entropically
//! regularized adapted (bi-causal) squared distance admits a closed form. With
//! `L` and `M` the lower Cholesky factors of `A` and `B`, let
//! `N_t = (M^T L)_{t,t}` be the per-step diagonal blocks with singular value
//! decompositions `N_t = U_t S_t V_t^T`, `S = diag(S_1, ..., S_T)`, and
//! `D_lambda = f_lambda(S)` elementwise. Then
//!
//! ```text
//! AW2^2_lambda = |a - b|^2 + tr(A + B) - 2 tr(D_lambda S)
//!                - (lambda / 2) log det(I - D_lambda^2),
//! ```
//!
//! attained by the Gaussian coupling with cross-covariance `C = L P M^T`,
//! `P = diag(P_1, ..., P_T)`, `P_t = V_t (D_lambda)_t U_t^T`. The crate
//! computes this value and optimizer ([`solver`]), builds and classifies the
//! couplings ([`coupling`]), and checks every closed-form output against two
//! independent numerical oracles ([`oracle`]): direct parametric minimization
//! over block contractions, and a discretized dynamic-programming / Sinkhorn
//! solve of the underlying nested transport problem.
//!
//! The unregularized case is `lambda = 0`; all formulas degenerate continuously
//! (with `f_0 = sign`), and the classical (non-adapted) entropic distance is
//! available for comparison via [`solver::solve_w2`].

pub mod coupling;
pub mod error;
pub mod gausslaw;
pub mod matcore;
pub mod oracle;
pub mod solver;

pub use error::{AwError, Result};
