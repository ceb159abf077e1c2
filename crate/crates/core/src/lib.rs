//! Vessel segmentation for susceptibility source-separated MRI.

pub mod components;
pub mod eigen;
pub mod error;
pub mod grow;
pub mod hessian;
pub mod metrics;
pub mod mip;
pub mod nifti_io;
pub mod phantom;
pub mod pipeline;
pub mod refine;
pub mod seeds;
pub mod spectral;
pub mod stats;
pub mod vesselness;
pub mod volume;

pub use components::Connectivity;
pub use error::{Error, Result};
pub use grow::{GrowConfig, GrowLimits};
pub use metrics::MetricsReport;
pub use mip::{Axis, Image2, MipStack};
pub use phantom::{PhantomScene, SceneSpec};
pub use pipeline::{PipelineConfig, Segmentation};
pub use refine::RefineConfig;
pub use seeds::SeedConfig;
pub use vesselness::{MfatConfig, VesselnessResult};
pub use volume::{linear_index, BinaryMask3, Grid, Volume3};
