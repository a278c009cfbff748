//! Layered-mesh volumetric avatars: baking from analytic scenes, a binary
//! asset container, affine texture blending, a software rasterizer with
//! ordered alpha compositing, and a streaming session protocol.

pub mod baker;
pub mod blend;
pub mod camera;
pub mod codec;
pub mod composite;
pub mod config;
pub mod error;
pub mod image;
pub mod math;
pub mod model;
pub mod oracle;
pub mod raster;
pub mod sample;
pub mod sh;
pub mod stream;

pub use error::{Error, InputError, Result};
