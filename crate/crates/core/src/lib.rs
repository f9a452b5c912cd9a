//! Locally differentially private release of diffusion sensor measurements,
//! and recovery of the sources from the private measurements.
//!
//! The pipeline is:
//!
//! ```text
//! f0 --(diffusion operator)--> y --(Gaussian mechanism, per sensor)--> ỹ --(box-constrained BPD)--> f̂
//! ```
//!
//! Noise is calibrated to the ℓ₂ sensitivity of the operator under the
//! EMD-neighbour relation, and recovery is scored in Earth Mover Distance.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`emd`] | Earth Mover Distance (1D closed form and min-cost flow), ground metrics |
//! | [`diffusion`] | Heat kernel and graph diffusion operators, SBM graphs |
//! | [`privacy`] | Sensitivity, noise calibration, seeded release and backdoor removal |
//! | [`recovery`] | Basis Pursuit Denoising with a `[0,1]` box |
//! | [`bounds`] | Upper/lower EMD error bounds and the Fano packing |
//! | [`harness`] | Trials, sweeps, the graph community demo and CSV output |

pub mod bounds;
pub mod diffusion;
pub mod emd;
pub mod harness;
pub mod io;
pub mod privacy;
pub mod recovery;
pub mod rng;

pub use diffusion::{DiffusionOperator, Graph};
pub use emd::{GroundMetric, SourceVector};
pub use privacy::{NoiseMultiplier, PrivacyParams};
pub use recovery::{RecoveryProblem, RecoveryResult, SolverTolerances};
