//! Impulsive second-order dynamic equations on time scales with Dirichlet
//! boundary conditions, solved through their energy functionals.

pub mod cli;
pub mod error;
pub mod expr;
pub mod functional;
pub mod linalg;
pub mod linear;
pub mod mountainpass;
pub mod quadrature;
pub mod space;
pub mod timescale;

pub use error::{Error, Result};
pub use expr::{parse, Expr};
pub use functional::{EnergyModel, Impulse, ImpulsiveProblem, JumpConvention};
pub use linear::{LinearImpulse, LinearProblem, SolveReport};
pub use space::DirichletSpace;
pub use timescale::{build_mesh, GridFunction, Segment, TimeScaleMesh, TimeScaleSpec};
