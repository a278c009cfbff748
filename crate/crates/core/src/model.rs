//! In-memory avatar model: expression parameters, blend mapper, layered
//! mesh, warp/texture bases and the asset that bundles them.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards.

use half::f16;

use crate::error::InputError;
use crate::math::Vec3;

/// Expression coefficient count of the reference face tracker.
pub const DEFAULT_PARAM_COUNT: usize = 63;
/// Band-1 and band-2 real SH coefficients per color channel.
pub const SH_COEFFS: usize = 8;
/// Specular values stored per texel (8 coefficients x RGB).
pub const SH_TEXEL_LEN: usize = SH_COEFFS * 3;
/// Sanity bound on a single warp offset component, in UV units.
pub const MAX_WARP_OFFSET: f32 = 2.0;
/// Container format version written by [`crate::codec`].
pub const FORMAT_VERSION: u16 = 1;

/// Per-frame face model coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionParams {
    values: Vec<f64>,
}

impl ExpressionParams {
    pub fn new(values: Vec<f64>) -> Result<Self, InputError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(InputError::NonFinite("expression parameters"));
        }
        Ok(Self { values })
    }

    pub fn zeros(count: usize) -> Self {
        Self { values: vec![0.0; count] }
    }

    /// Widens wire-precision values.
    pub fn from_f32(values: &[f32]) -> Result<Self, InputError> {
        Self::new(values.iter().map(|&v| v as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// Affine maps from expression parameters to warp weights (gamma) and
/// texture weights (beta). Each matrix is row-major with `params + 1`
/// columns; the last column is the constant offset.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendMapper {
    warp_rows: usize,
    tex_rows: usize,
    params: usize,
    warp: Vec<f32>,
    tex: Vec<f32>,
}

impl BlendMapper {
    pub fn new(
        warp_rows: usize,
        tex_rows: usize,
        params: usize,
        warp: Vec<f32>,
        tex: Vec<f32>,
    ) -> Result<Self, InputError> {
        let cols = params + 1;
        InputError::check_len("warp matrix", warp_rows * cols, warp.len())?;
        InputError::check_len("texture matrix", tex_rows * cols, tex.len())?;
        if warp.iter().chain(&tex).any(|v| !v.is_finite()) {
            return Err(InputError::NonFinite("blend matrix"));
        }
        Ok(Self { warp_rows, tex_rows, params, warp, tex })
    }

    /// Mapper whose weights ignore the parameters and always equal the given offsets.
    pub fn constant(params: usize, gamma: &[f32], beta: &[f32]) -> Result<Self, InputError> {
        let cols = params + 1;
        let mut warp = vec![0.0; gamma.len() * cols];
        let mut tex = vec![0.0; beta.len() * cols];
        for (r, &g) in gamma.iter().enumerate() {
            warp[r * cols + params] = g;
        }
        for (r, &b) in beta.iter().enumerate() {
            tex[r * cols + params] = b;
        }
        Self::new(gamma.len(), beta.len(), params, warp, tex)
    }

    pub fn warp_basis(&self) -> usize {
        self.warp_rows
    }

    pub fn tex_basis(&self) -> usize {
        self.tex_rows
    }

    pub fn param_count(&self) -> usize {
        self.params
    }

    pub fn columns(&self) -> usize {
        self.params + 1
    }

    pub fn warp_matrix(&self) -> &[f32] {
        &self.warp
    }

    pub fn tex_matrix(&self) -> &[f32] {
        &self.tex
    }

    pub fn warp_row(&self, row: usize) -> &[f32] {
        let c = self.columns();
        &self.warp[row * c..(row + 1) * c]
    }

    pub fn tex_row(&self, row: usize) -> &[f32] {
        let c = self.columns();
        &self.tex[row * c..(row + 1) * c]
    }
}

/// Per-frame basis weights shared by every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendWeights {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// One shell of the layered mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshLayer {
    pub positions: Vec<[f32; 3]>,
    pub canonical_uv: Vec<[f32; 2]>,
    pub indices: Vec<[u32; 3]>,
}

impl MeshLayer {
    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    /// Marks vertices referenced by at least one triangle.
    pub fn referenced(&self) -> Vec<bool> {
        let mut used = vec![false; self.positions.len()];
        for tri in &self.indices {
            for &i in tri {
                used[i as usize] = true;
            }
        }
        used
    }
}

/// N ordered shells baked on a shared `rows x cols` lattice. Layer 0 is the
/// shell nearest to a viewer in the front hemisphere.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredMesh {
    grid_rows: u32,
    grid_cols: u32,
    layers: Vec<MeshLayer>,
}

impl LayeredMesh {
    pub fn new(grid_rows: u32, grid_cols: u32, layers: Vec<MeshLayer>) -> Result<Self, InputError> {
        if layers.is_empty() {
            return Err(InputError::invalid("layered mesh", "no layers"));
        }
        for layer in &layers {
            let n = layer.positions.len();
            InputError::check_len("canonical uv count", n, layer.canonical_uv.len())?;
            if layer.positions.iter().flatten().any(|v| !v.is_finite()) {
                return Err(InputError::NonFinite("mesh positions"));
            }
            for uv in layer.canonical_uv.iter().flatten() {
                if !(-1.0..=1.0).contains(uv) {
                    return Err(InputError::OutOfRange { what: "canonical uv", value: *uv as f64 });
                }
            }
            if let Some(bad) = layer.indices.iter().flatten().find(|&&i| i as usize >= n) {
                return Err(InputError::OutOfRange { what: "triangle index", value: *bad as f64 });
            }
        }
        Ok(Self { grid_rows, grid_cols, layers })
    }

    pub fn grid(&self) -> (u32, u32) {
        (self.grid_rows, self.grid_cols)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[MeshLayer] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &MeshLayer {
        &self.layers[i]
    }

    pub fn triangle_count(&self) -> usize {
        self.layers.iter().map(|l| l.indices.len()).sum()
    }

    /// True when every lattice vertex used by all layers is strictly
    /// farther from `center` in layer `i` than in layer `i + 1`.
    pub fn is_nested(&self, center: Vec3) -> bool {
        let n = self.layers[0].positions.len();
        if self.layers.iter().any(|l| l.positions.len() != n) {
            return false;
        }
        let used: Vec<Vec<bool>> = self.layers.iter().map(MeshLayer::referenced).collect();
        (0..n).all(|v| {
            if !used.iter().all(|u| u[v]) {
                return true;
            }
            self.layers.windows(2).all(|pair| {
                let outer = (Vec3::from_f32(pair[0].positions[v]) - center).length();
                let inner = (Vec3::from_f32(pair[1].positions[v]) - center).length();
                outer > inner
            })
        })
    }
}

/// Number of texels in a square map of side `res`.
pub(crate) fn texels(res: usize) -> usize {
    res * res
}

/// `layers x basis` UV-offset maps, 2 channels per texel, 32-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpAtlas {
    layers: usize,
    basis: usize,
    res: usize,
    data: Vec<f32>,
}

impl WarpAtlas {
    pub fn new(layers: usize, basis: usize, res: usize, data: Vec<f32>) -> Result<Self, InputError> {
        if res == 0 {
            return Err(InputError::invalid("warp atlas", "zero resolution"));
        }
        InputError::check_len("warp atlas data", layers * basis * texels(res) * 2, data.len())?;
        for &v in &data {
            if !v.is_finite() {
                return Err(InputError::NonFinite("warp atlas"));
            }
            if v.abs() > MAX_WARP_OFFSET {
                return Err(InputError::OutOfRange { what: "warp offset", value: v as f64 });
            }
        }
        Ok(Self { layers, basis, res, data })
    }

    pub fn zeros(layers: usize, basis: usize, res: usize) -> Self {
        Self { layers, basis, res, data: vec![0.0; layers * basis * texels(res) * 2] }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn basis(&self) -> usize {
        self.basis
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn map(&self, layer: usize, basis: usize) -> &[f32] {
        let len = texels(self.res) * 2;
        let start = (layer * self.basis + basis) * len;
        &self.data[start..start + len]
    }
}

/// `layers x basis` appearance maps: 8-bit RGBA (diffuse + alpha) and
/// optional 16-bit specular SH (24 halves per texel).
#[derive(Debug, Clone, PartialEq)]
pub struct TextureAtlas {
    layers: usize,
    basis: usize,
    res: usize,
    rgba: Vec<u8>,
    specular: Option<Vec<f16>>,
}

impl TextureAtlas {
    pub fn new(
        layers: usize,
        basis: usize,
        res: usize,
        rgba: Vec<u8>,
        specular: Option<Vec<f16>>,
    ) -> Result<Self, InputError> {
        if res == 0 {
            return Err(InputError::invalid("texture atlas", "zero resolution"));
        }
        let n = layers * basis * texels(res);
        InputError::check_len("texture atlas rgba", n * 4, rgba.len())?;
        if let Some(sh) = &specular {
            InputError::check_len("texture atlas specular", n * SH_TEXEL_LEN, sh.len())?;
            if sh.iter().any(|v| !v.is_finite()) {
                return Err(InputError::NonFinite("specular coefficients"));
            }
        }
        Ok(Self { layers, basis, res, rgba, specular })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn basis(&self) -> usize {
        self.basis
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn has_specular(&self) -> bool {
        self.specular.is_some()
    }

    pub fn rgba(&self) -> &[u8] {
        &self.rgba
    }

    pub fn specular(&self) -> Option<&[f16]> {
        self.specular.as_deref()
    }

    pub fn rgba_map(&self, layer: usize, basis: usize) -> &[u8] {
        let len = texels(self.res) * 4;
        let start = (layer * self.basis + basis) * len;
        &self.rgba[start..start + len]
    }

    pub fn specular_map(&self, layer: usize, basis: usize) -> Option<&[f16]> {
        let len = texels(self.res) * SH_TEXEL_LEN;
        let start = (layer * self.basis + basis) * len;
        self.specular.as_ref().map(|s| &s[start..start + len])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssetMeta {
    pub layers: usize,
    pub warp_basis: usize,
    pub tex_basis: usize,
    pub params: usize,
    pub scene_center: [f32; 3],
    pub has_specular: bool,
    pub version: u16,
}

/// Everything streamed once per session.
#[derive(Debug, Clone, PartialEq)]
pub struct AvatarAsset {
    mesh: LayeredMesh,
    warps: WarpAtlas,
    textures: TextureAtlas,
    mapper: BlendMapper,
    meta: AssetMeta,
}

impl AvatarAsset {
    pub fn new(
        mesh: LayeredMesh,
        warps: WarpAtlas,
        textures: TextureAtlas,
        mapper: BlendMapper,
        scene_center: [f32; 3],
    ) -> Result<Self, InputError> {
        let layers = mesh.num_layers();
        InputError::check_len("warp atlas layers", layers, warps.layers())?;
        InputError::check_len("texture atlas layers", layers, textures.layers())?;
        InputError::check_len("warp basis vs mapper", mapper.warp_basis(), warps.basis())?;
        InputError::check_len("texture basis vs mapper", mapper.tex_basis(), textures.basis())?;
        if scene_center.iter().any(|v| !v.is_finite()) {
            return Err(InputError::NonFinite("scene center"));
        }
        let meta = AssetMeta {
            layers,
            warp_basis: mapper.warp_basis(),
            tex_basis: mapper.tex_basis(),
            params: mapper.param_count(),
            scene_center,
            has_specular: textures.has_specular(),
            version: FORMAT_VERSION,
        };
        Ok(Self { mesh, warps, textures, mapper, meta })
    }

    pub fn mesh(&self) -> &LayeredMesh {
        &self.mesh
    }

    pub fn warps(&self) -> &WarpAtlas {
        &self.warps
    }

    pub fn textures(&self) -> &TextureAtlas {
        &self.textures
    }

    pub fn mapper(&self) -> &BlendMapper {
        &self.mapper
    }

    pub fn meta(&self) -> &AssetMeta {
        &self.meta
    }

    pub fn scene_center(&self) -> Vec3 {
        Vec3::from_f32(self.meta.scene_center)
    }

    /// Same asset with a different mesh (decimation, tests).
    pub fn with_mesh(&self, mesh: LayeredMesh) -> Result<Self, InputError> {
        Self::new(mesh, self.warps.clone(), self.textures.clone(), self.mapper.clone(), self.meta.scene_center)
    }

    pub fn into_parts(self) -> (LayeredMesh, WarpAtlas, TextureAtlas, BlendMapper) {
        (self.mesh, self.warps, self.textures, self.mapper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_layer(scale: f32) -> MeshLayer {
        MeshLayer {
            positions: vec![
                [-scale, -scale, scale],
                [scale, -scale, scale],
                [-scale, scale, scale],
                [scale, scale, scale],
            ],
            canonical_uv: vec![[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]],
            indices: vec![[0, 1, 3], [0, 3, 2]],
        }
    }

    #[test]
    fn mesh_rejects_out_of_range_index() {
        let mut layer = quad_layer(1.0);
        layer.indices.push([0, 1, 4]);
        assert!(matches!(
            LayeredMesh::new(2, 2, vec![layer]),
            Err(InputError::OutOfRange { what: "triangle index", .. })
        ));
    }

    #[test]
    fn mesh_rejects_uv_outside_domain() {
        let mut layer = quad_layer(1.0);
        layer.canonical_uv[0][0] = -1.5;
        assert!(LayeredMesh::new(2, 2, vec![layer]).is_err());
    }

    #[test]
    fn nested_detects_order() {
        let good = LayeredMesh::new(2, 2, vec![quad_layer(2.0), quad_layer(1.0)]).unwrap();
        assert!(good.is_nested(Vec3::ZERO));
        let bad = LayeredMesh::new(2, 2, vec![quad_layer(1.0), quad_layer(2.0)]).unwrap();
        assert!(!bad.is_nested(Vec3::ZERO));
    }

    #[test]
    fn warp_atlas_rejects_large_offsets() {
        let err = WarpAtlas::new(1, 1, 1, vec![0.0, 2.5]).unwrap_err();
        assert!(matches!(err, InputError::OutOfRange { what: "warp offset", .. }));
    }

    #[test]
    fn asset_checks_cross_dimensions() {
        let mesh = LayeredMesh::new(2, 2, vec![quad_layer(1.0)]).unwrap();
        let warps = WarpAtlas::zeros(1, 2, 1);
        let tex = TextureAtlas::new(1, 1, 1, vec![0; 4], None).unwrap();
        let mapper = BlendMapper::constant(3, &[0.0], &[1.0]).unwrap();
        assert!(matches!(
            AvatarAsset::new(mesh, warps, tex, mapper, [0.0; 3]),
            Err(InputError::Dimension { .. })
        ));
    }

    #[test]
    fn params_reject_nan() {
        assert!(ExpressionParams::new(vec![0.0, f64::NAN]).is_err());
    }
}
