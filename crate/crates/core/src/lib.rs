//! Minimax (guaranteed) state estimation for linear operator equations with
//! energy-bounded uncertainty, and its application to linear descriptor
//! systems `d/dt(Fx) - Cx = f`, `y = x + eta`.
//!
//! The crate is organised bottom-up:
//!
//! - [`operator`]: finite-dimensional estimators for `y = H phi + eta`,
//!   `L phi = f`. Euler equations, a priori and a posteriori errors,
//!   admissibility of directions, worst-case direction.
//! - [`descriptor`]: descriptor systems, their SVD canonical form and an
//!   index-1 forward simulator used to manufacture data.
//! - [`bvp`]: the minimax a posteriori estimator of a descriptor system,
//!   written as a linear two-point boundary value problem and solved with a
//!   Crank–Nicolson block-tridiagonal scheme.
//! - [`oracle`]: a discretize-then-optimize check that feeds explicit
//!   discretized operators to [`operator`] and compares against [`bvp`].
//! - [`grid`] and [`synth`]: time grids, sampled trajectories and seeded
//!   smooth signals.

pub mod bvp;
pub mod descriptor;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod operator;
pub mod oracle;
pub mod synth;

pub use bvp::{BvpCoefficients, DaeEstimate, DaeEstimator, DirectionalError, WorstCase};
pub use descriptor::{CanonicalDescriptor, DescriptorSystem};
pub use error::{Error, Result};
pub use grid::{TimeGrid, Trajectory};
pub use operator::{
    AdmissibilityReport, AposterioriResult, EstimationProblem, EulerSolution, Outcome,
};
pub use oracle::{ComparisonReport, DiscretizedProblem, RefinementStudy};
