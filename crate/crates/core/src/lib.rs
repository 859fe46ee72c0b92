//! Morphoelastic post-burn wound contraction: a moving-mesh finite-element
//! simulator and a DeepONet surrogate trained on its output.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`geometry`]: wound shapes, convex combinations, domain sizing and RSAW.
//! - [`biomodel`]: pointwise constitutive relations and parameter sets.
//! - [`fem`]: meshing, time stepping, remeshing and simulation results.
//! - [`deeponet`]: branch/trunk network, backpropagation and Adam training.
//! - [`datapipe`]: training, convex-test and year-extension datasets.
//! - [`metrics`]: R², aRRMSE, aRelErr, error profiles and timing.
//! - [`cli`]: the `woundnet` command-line front end.

pub mod biomodel;
pub mod cli;
pub mod datapipe;
pub mod deeponet;
pub mod fem;
pub mod geometry;
pub mod metrics;

pub use biomodel::{KineticParams, VariableParams};
pub use deeponet::{Ablation, DeepONet, ShapeInfo, TrainConfig};
pub use fem::{SimConfig, SimResult};
pub use geometry::{BoundaryCurve, ShapeKind, WoundGeometry};
