//! Numerical laboratory for the Stein–Weiss gradients of trace-free symmetric
//! tensor fields on flat and conformally flat n-tori.
//!
//! The crate is organised bottom-up:
//!
//! * [`fiber`]: pointwise algebra of symmetric and trace-free symmetric tensors,
//!   index bookkeeping, dimension formulas and the irreducible projectors of
//!   `T* ⊗ S₀ᵖ`.
//! * [`geometry`]: periodic grids, analytic test metrics, spectral / fourth-order
//!   differentiation, Christoffel symbols, curvature and quadrature.
//! * [`fields`]: grid-sampled sections, the covariant derivative and its exact
//!   discrete adjoint, divergence, symmetrized derivative and L² pairings.
//! * [`gradients`]: `D₁`, `D₂`, `D₃`, their adjoint compositions, the Sampson
//!   Laplacian and the Weitzenböck curvature term.
//! * [`spectral`]: dense assembly, weighted eigenproblems, kernel counting and
//!   principal symbols.
//! * [`harness`]: identity suites, kernel experiments, convergence studies and
//!   report emission.

pub mod config;
pub mod error;
pub mod fiber;
pub mod fields;
pub mod geometry;
pub mod gradients;
pub mod harness;
pub mod spectral;

pub use error::{Error, Result};
pub use fiber::{
    ck_dim_bound, sym_dim, tracefree_dim, Algebra, Bundle, FiberProjectors, FiberTensor,
    FullTensor, MetricAtPoint, SymIndex,
};
pub use fields::Field;
pub use geometry::{GeometryCache, GridSpec, MetricPreset, Method, TrigPoly};
pub use gradients::{GradientOutput, Gradients, PointwiseMaps};
pub use config::ExperimentConfig;
pub use harness::{CheckRecord, Status, SuiteReport};
pub use spectral::{KernelCount, KernelPolicy, OperatorHandle, SpectrumReport};
