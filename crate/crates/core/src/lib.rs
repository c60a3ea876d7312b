//! Robust Bayesian optimisation of sweet spots.
//!
//! A Gaussian-process surrogate of an expensive objective is sampled jointly
//! over candidate regions; the Monte-Carlo expected improvement in worst-case
//! quality of a hyperspherical region guides where to evaluate next.

pub mod acquisition;
pub mod benchmarks;
pub mod bounds;
pub mod error;
pub mod evo;
pub mod gp;
pub mod harness;
pub mod oracle;
pub mod realisation;
pub mod stats;
pub mod strategies;
pub mod sweetspot;

pub use acquisition::{AcquisitionConfig, BestSoFar};
pub use benchmarks::{Benchmark, BenchmarkId};
pub use bounds::Bounds;
pub use error::{Error, Result};
pub use evo::EvoConfig;
pub use gp::{Dataset, FitConfig, FitStatus, GpModel, KernelParams};
pub use harness::{ExperimentConfig, ExperimentResult, RunRecord};
pub use realisation::{Realisation, RealisationBlock};
pub use strategies::SamplingStrategy;
pub use sweetspot::{SweetSpot, SweetSpotShape};
