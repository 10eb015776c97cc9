//! Point-cloud matching with Proxy Match Transform layers and rigid shape
//! assembly of fractured parts.
//!
//! The pipeline runs bottom-up: [`geometry`] clouds and transforms,
//! [`features`] descriptor pyramids, [`pmt`] layers, [`matcher`] coarse and
//! fine matching, [`assembly`] pose estimation and synchronization, and
//! [`metrics`]. [`hdc`] holds the dense reference convolution and the
//! equivalence checks, [`synth`] the fracture generator, and [`scaling`]
//! the runtime and memory harness.

pub mod assembly;
pub mod error;
pub mod features;
pub mod geometry;
pub mod hdc;
pub mod matcher;
pub mod metrics;
pub mod pmt;
pub mod scaling;
pub mod synth;

pub use assembly::{assemble_multi, assemble_pair, Assembler, AssemblyConfig, AssemblyResult, MultiResult};
pub use error::{Error, Result};
pub use geometry::{PointCloud, RigidTransform, Vec3};
pub use matcher::{Correspondence, Correspondences, MatchConfig};
pub use metrics::MetricBundle;
pub use synth::{generate, FractureSample, FractureSpec};
