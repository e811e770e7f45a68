//! Pseudo ground-truth UV texture maps for 3D face reconstruction.
//!
//! The pipeline synthesizes and projects a morphable-model shape, samples the
//! visible texture into UV space, fits the model's texture basis to the
//! samples, and Poisson-blends the two into a complete map. A software
//! rasterizer with exact adjoints, a differentiable grid sampler and the loss
//! and metric suite support training and evaluation code built on top.

pub mod blend;
pub mod check;
pub mod config;
pub mod error;
pub mod imaging;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod synthetic;
pub mod texture_fit;
pub mod uv;

pub use error::{Error, Result};
pub use imaging::{Image, Planar};
pub use model::{load_model, project, MorphableModel, Pose, ProjectedVertices, Triangle, Vertices};
pub use raster::{rasterize, shade, shade_backward, visible_vertices, RasterBuffers, VisibilityMask};
pub use uv::{SamplingGrid, UvMap};
