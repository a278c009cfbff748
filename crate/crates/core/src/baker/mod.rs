//! Analytic scenes and the export pipeline that turns them into assets:
//! hemisphere ray casting, spherical UVs, lattice meshes, map baking and
//! grid-stride decimation.

mod bake;
mod intersect;
mod scene;

use thiserror::Error;

use crate::error::InputError;

pub use bake::{
    bake_asset, bake_lattice, bake_maps, bake_mesh, decimate, decimation_indices, hemisphere_direction,
    lattice_to_mesh, spherical_uv, Lattice,
};
pub use intersect::{intersect_layer, intersect_layers, scan_interval, Hit, Ray, LEVEL_TOLERANCE, SCAN_STEPS};
pub use scene::{
    parse_scene, preset, AlphaProfile, AnalyticScene, ColorPattern, ShellField, SpecPattern, TexGen, WarpGen,
    PRESETS,
};

#[derive(Debug, Error)]
pub enum BakeError {
    #[error("degenerate scene: {missed} of {total} lattice cells miss at least one layer")]
    Degenerate { missed: usize, total: usize },
    #[error("{map} generator produced {value} at layer {layer}, basis {basis}, texel {texel}")]
    BadSample { map: &'static str, layer: usize, basis: usize, texel: usize, value: f64 },
    #[error("bake config: {0}")]
    Config(String),
    #[error(transparent)]
    Input(#[from] InputError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BakeConfig {
    /// Lattice samples per axis.
    pub grid_res: usize,
    pub tex_res: usize,
    pub warp_res: usize,
    pub include_specular: bool,
}

impl Default for BakeConfig {
    fn default() -> Self {
        Self { grid_res: 512, tex_res: 512, warp_res: 512, include_specular: false }
    }
}

impl BakeConfig {
    /// Warp maps follow the texture resolution.
    pub fn new(grid_res: usize, tex_res: usize, include_specular: bool) -> Self {
        Self { grid_res, tex_res, warp_res: tex_res, include_specular }
    }

    pub fn validate(&self) -> Result<(), BakeError> {
        for (name, v) in [("grid_res", self.grid_res), ("tex_res", self.tex_res), ("warp_res", self.warp_res)] {
            if v < 2 {
                return Err(BakeError::Config(format!("{name} must be at least 2, got {v}")));
            }
        }
        Ok(())
    }
}
