//! Solver library for nonlinear semi-infinite programs with semidefinite
//! constraints (SISDPs):
//!
//! ```text
//!     minimize    f(x)
//!     subject to  g(x, tau) <= 0   for every tau in T = [T_min, T_max],
//!                 F(x) = F_0 + sum_i x_i F_i  positive semidefinite,
//!                 A x = b                     (optional),
//! ```
//!
//! with smooth f, g convex in x for each index tau, and F affine.
//!
//! The primary method is a primal-dual path follower on the barrier KKT
//! system: the semi-infinite constraint is handled by local reduction to
//! finitely many maximizer functions, the semidefinite pair by Monteiro-Zhang
//! scaled complementarity, and each outer iteration takes a quadratic-program
//! step plus an optional second corrector step that makes the convergence
//! superlinear. A discretization (exchange) solver over growing finite index
//! sets serves as the baseline for comparison.

pub mod directions;
pub mod exchange;
pub mod generate;
pub mod path;
pub mod problem;
pub mod qp;
pub mod reduction;
pub mod symcone;

pub use symcone::{SvecVector, SymMatrix};
