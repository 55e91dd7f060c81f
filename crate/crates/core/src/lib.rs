//! P1 finite elements on triangles for the rotating Gross–Pitaevskii
//! equation `i∂ₜu = Lu + (κ + β|u|²)u` with homogeneous Dirichlet data.
//!
//! The crate provides meshes and coefficient models, assembly of the linear
//! forms and of the cubic term, the mass-conserving implicit midpoint scheme
//! and Backward Euler with a Newton solver, a normalized gradient flow for
//! ground states, diagnostics and a convergence-order harness.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::needless_range_loop)]

pub mod assembly;
pub mod diagnostics;
pub mod error;
pub mod groundstate;
pub mod mesh;
pub mod model;
pub mod newton;
pub mod quadrature;
pub mod regularizer;
pub mod sparse;
pub mod steppers;
pub mod verification;

pub use num_complex::Complex64;

pub use assembly::{ComplexField, Cubic, DofMap, FeSpace, PointNonlinearity};
pub use diagnostics::{CsvSink, DiagnosticsRecord, DiagnosticsSink, NullSink};
pub use error::{Error, Result};
pub use groundstate::{dngf, GradientFlowConfig, GroundState, SeedProfile};
pub use mesh::{Mesh, Point, Rect};
pub use model::{gpe_rotating, harmonic_potential, validate_assumptions, AssumptionCheck, Coefficients};
pub use newton::{newton_solve, NewtonOptions, NewtonOutcome};
pub use quadrature::{QuadratureDegree, QuadratureRule};
pub use regularizer::RegularizedCubic;
pub use sparse::{BlockSparse, SolverKind, SparseComplexMatrix, SparsityPattern};
pub use steppers::{run, Scheme, StepResult, Stepper, StepperConfig, Systems, Trajectory};
pub use verification::{BenchmarkCase, EocTable};
