//! Numerical lab for Fredholm pairs of boundary conditions of the Dirac
//! operator on globally hyperbolic cylinders `[t0, t1] × S¹`.
//!
//! Boundary spaces are modeled on the eigenmodes of the circle Dirac
//! operator truncated to windows `|k| ≤ N`. Kernel and cokernel of a pair
//! are computed window by window and a verdict is read off from how they
//! grow. Closed-form index formulas for product cylinders are provided for
//! comparison.

pub mod boundary;
pub mod error;
pub mod evolution;
pub mod formulas;
pub mod fredholm;
pub mod golden;
pub mod linalg;
pub mod parallel;
pub mod runner;
pub mod scenario;
pub mod spectrum;

pub use boundary::{BoundaryCondition, GraphForm, GraphMap, Pairing, ProjectorMatrix, Side, SpectralCut, WeightRule};
pub use error::{Error, Result};
pub use evolution::{Evolution, Integrator, LengthProfile, WarpedProduct};
pub use formulas::{IndexPrediction, IndexTerms};
pub use fredholm::{fredholm_verdict, Cylinder, EngineOptions, FredholmReport, PairDiagnostics, Verdict};
pub use linalg::{CMatrix, RankPolicy};
pub use parallel::Execution;
pub use spectrum::{CircleDiracModel, ModeIndex, SpectrumModel, SpinStructure, SyntheticSpectrum, TruncationWindow};
