//! Software rasterizer for layered meshes: blend, warp, sample, evaluate
//! SH and composite layers front to back in their static order.

mod setup;

use half::f16;
use rayon::prelude::*;

use crate::blend::{blend_weights, quantize_unorm8, BlendBasis, BlendedTexture, BlendedWarp};
use crate::camera::Camera;
use crate::error::InputError;
use crate::image::RgbImage;
use crate::model::{AvatarAsset, ExpressionParams, LayeredMesh, TextureAtlas, WarpAtlas, SH_COEFFS, SH_TEXEL_LEN};
use crate::sample::{warp_uv, Footprint, MapView};
use crate::sh::{add_specular, sh_basis};

pub use setup::{setup_layer, ScreenTri, SUBPIXEL_BITS};

/// Pixels whose transmittance drops below this stop accepting layers.
pub const EARLY_OUT: f32 = 1.0 / 512.0;
const BAND_ROWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlendMode {
    /// Blend whole maps once per frame, then sample the blended maps.
    #[default]
    Prebaked,
    /// Sample every basis map per fragment, then apply the weights.
    Fused,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub mode: BlendMode,
    /// Record per-pixel fragment depths and check them against layer order.
    pub debug_abuffer: bool,
    pub background: [f64; 3],
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { mode: BlendMode::Prebaked, debug_abuffer: false, background: [0.0; 3] }
    }
}

/// Pixels where fragments arrive out of depth order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LayerOrderReport {
    pub fragments: usize,
    pub violations: Vec<(u32, u32)>,
}

impl LayerOrderReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: RgbImage,
    /// Residual transmittance per pixel.
    pub transmittance: Vec<f32>,
    /// Accumulated compositing weight per pixel.
    pub weight: Vec<f32>,
    pub layer_order: Option<LayerOrderReport>,
}

/// Renders one frame of `asset` for expression `params`.
pub fn render(
    asset: &AvatarAsset,
    params: &ExpressionParams,
    camera: &Camera,
    options: &RenderOptions,
) -> Result<Frame, InputError> {
    Renderer::new().render(asset, params, camera, options)
}

/// Renders with already blended maps (server-side blending). `options.mode`
/// is ignored.
pub fn render_blended(
    mesh: &LayeredMesh,
    warp: &BlendedWarp,
    tex: &BlendedTexture,
    camera: &Camera,
    options: &RenderOptions,
) -> Result<Frame, InputError> {
    Renderer::new().render_blended(mesh, warp, tex, camera, options)
}

/// Keeps blended maps and the framebuffer alive between frames so
/// repeated renders skip the large allocations. Output is identical to
/// [`render`].
#[derive(Default)]
pub struct Renderer {
    warp: Option<BlendedWarp>,
    tex: Option<BlendedTexture>,
    pixels: Vec<Pixel>,
}

impl Renderer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn render(
        &mut self,
        asset: &AvatarAsset,
        params: &ExpressionParams,
        camera: &Camera,
        options: &RenderOptions,
    ) -> Result<Frame, InputError> {
        let weights = blend_weights(asset.mapper(), params)?;
        match options.mode {
            BlendMode::Prebaked => {
                asset.warps().blend_into(&weights.gamma, &mut self.warp)?;
                asset.textures().blend_into(&weights.beta, &mut self.tex)?;
                let (warp, tex) = (self.warp.as_ref().expect("blended"), self.tex.as_ref().expect("blended"));
                Ok(rasterize(asset.mesh(), &Shader::Prebaked { warp, tex }, camera, options, &mut self.pixels))
            }
            BlendMode::Fused => {
                let shader = Shader::Fused {
                    warps: asset.warps(),
                    textures: asset.textures(),
                    gamma: weights.gamma.iter().map(|&g| g as f32).collect(),
                    beta: weights.beta.iter().map(|&b| b as f32).collect(),
                };
                Ok(rasterize(asset.mesh(), &shader, camera, options, &mut self.pixels))
            }
        }
    }

    pub fn render_blended(
        &mut self,
        mesh: &LayeredMesh,
        warp: &BlendedWarp,
        tex: &BlendedTexture,
        camera: &Camera,
        options: &RenderOptions,
    ) -> Result<Frame, InputError> {
        InputError::check_len("blended warp layers", mesh.num_layers(), warp.layers())?;
        InputError::check_len("blended texture layers", mesh.num_layers(), tex.layers())?;
        Ok(rasterize(mesh, &Shader::Prebaked { warp, tex }, camera, options, &mut self.pixels))
    }
}

/// Depth-versus-layer-order check for one view.
pub fn verify_layer_order(
    asset: &AvatarAsset,
    camera: &Camera,
    params: &ExpressionParams,
) -> Result<LayerOrderReport, InputError> {
    let options = RenderOptions { debug_abuffer: true, ..RenderOptions::default() };
    Ok(render(asset, params, camera, &options)?.layer_order.unwrap_or_default())
}

enum Shader<'a> {
    Prebaked { warp: &'a BlendedWarp, tex: &'a BlendedTexture },
    Fused { warps: &'a WarpAtlas, textures: &'a TextureAtlas, gamma: Vec<f32>, beta: Vec<f32> },
}

enum LayerShader<'a> {
    Prebaked {
        warp: MapView<'a, f32>,
        rgba: MapView<'a, f32>,
        sh: Option<MapView<'a, f32>>,
    },
    Fused {
        warps: Vec<(f32, MapView<'a, f32>)>,
        rgba: Vec<(f32, &'a [u8])>,
        sh: Vec<(f32, MapView<'a, f16>)>,
        warp_res: usize,
        tex_res: usize,
    },
}

impl<'a> Shader<'a> {
    fn has_specular(&self) -> bool {
        match self {
            Shader::Prebaked { tex, .. } => tex.specular().is_some(),
            Shader::Fused { textures, .. } => textures.has_specular(),
        }
    }

    fn layer(&self, i: usize) -> LayerShader<'_> {
        match self {
            Shader::Prebaked { warp, tex } => {
                LayerShader::Prebaked { warp: warp.layer(i), rgba: tex.layer_rgba(i), sh: tex.layer_specular(i) }
            }
            Shader::Fused { warps, textures, gamma, beta } => {
                let (wres, tres) = (warps.res(), textures.res());
                LayerShader::Fused {
                    warps: nonzero(gamma)
                        .map(|(j, g)| (g, MapView::new_unchecked(wres, 2, warps.map(i, j))))
                        .collect(),
                    rgba: nonzero(beta).map(|(k, b)| (b / 255.0, textures.rgba_map(i, k))).collect(),
                    sh: nonzero(beta)
                        .filter_map(|(k, b)| textures.specular_map(i, k).map(|m| (b, MapView::new_unchecked(tres, SH_TEXEL_LEN, m))))
                        .collect(),
                    warp_res: wres,
                    tex_res: tres,
                }
            }
        }
    }
}

fn nonzero(w: &[f32]) -> impl Iterator<Item = (usize, f32)> + '_ {
    w.iter().copied().enumerate().filter(|(_, v)| *v != 0.0)
}

impl LayerShader<'_> {
    /// Color (unclamped) and alpha (in `[0, 1]`) at canonical `uv`.
    #[inline]
    fn shade(&self, uv: [f32; 2], basis: Option<&[f64; SH_COEFFS]>) -> ([f32; 3], f32) {
        match self {
            LayerShader::Prebaked { warp, rgba, sh } => {
                let uvw = warp_uv(uv, warp);
                let fp = Footprint::new(rgba.res(), uvw);
                let c = rgba.sample_n::<4>(&fp);
                let mut rgb = [c[0], c[1], c[2]];
                if let (Some(sh), Some(basis)) = (sh, basis) {
                    let coeffs = sh.sample_n::<SH_TEXEL_LEN>(&fp);
                    add_specular(&mut rgb, &coeffs, basis);
                }
                (rgb, c[3])
            }
            LayerShader::Fused { warps, rgba, sh, warp_res, tex_res } => {
                let fp = Footprint::new(*warp_res, uv);
                let mut d = [0.0f32; 2];
                for (g, m) in warps {
                    m.accumulate(&fp, *g, &mut d);
                }
                let uvw = [uv[0] + d[0], uv[1] + d[1]];
                let fp = Footprint::new(*tex_res, uvw);
                let mut c = [0.0f32; 4];
                for (tap, &idx) in fp.index.iter().enumerate() {
                    // Blend each tap as a whole texel so alpha clamps
                    // before filtering, as it does for prebaked maps.
                    let mut texel = [0.0f32; 4];
                    for (s, map) in rgba {
                        let q = &map[idx * 4..idx * 4 + 4];
                        for ch in 0..4 {
                            texel[ch] += s * q[ch] as f32;
                        }
                    }
                    texel[3] = texel[3].clamp(0.0, 1.0);
                    for ch in 0..4 {
                        c[ch] += fp.weight[tap] * texel[ch];
                    }
                }
                let mut rgb = [c[0], c[1], c[2]];
                if let Some(basis) = basis {
                    if !sh.is_empty() {
                        let mut coeffs = [0.0f32; SH_TEXEL_LEN];
                        for (b, m) in sh {
                            m.accumulate(&fp, *b, &mut coeffs);
                        }
                        add_specular(&mut rgb, &coeffs, basis);
                    }
                }
                (rgb, c[3])
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pixel {
    rgb: [f32; 3],
    transmittance: f32,
    weight: f32,
    /// This layer's nearest fragment: `1 / w` (0 when empty) and UV.
    frag_inv_w: f32,
    frag_uv: [f32; 2],
    /// Depth of the previous layer's fragment (0 when none).
    last_depth: f32,
    violated: bool,
    fragments: u32,
}

impl Default for Pixel {
    fn default() -> Self {
        Self {
            rgb: [0.0; 3],
            transmittance: 1.0,
            weight: 0.0,
            frag_inv_w: 0.0,
            frag_uv: [0.0; 2],
            last_depth: 0.0,
            violated: false,
            fragments: 0,
        }
    }
}

fn rasterize(
    mesh: &LayeredMesh,
    shader: &Shader<'_>,
    camera: &Camera,
    options: &RenderOptions,
    pixels: &mut Vec<Pixel>,
) -> Frame {
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    let specular = shader.has_specular();
    pixels.clear();
    pixels.resize(w * h, Pixel::default());
    let bands = h.div_ceil(BAND_ROWS);
    let layers: Vec<_> = (0..mesh.num_layers())
        .map(|layer| {
            let tris = setup_layer(mesh.layer(layer), camera);
            let mut bins: Vec<Vec<u32>> = vec![Vec::new(); bands];
            for (i, t) in tris.iter().enumerate() {
                for bin in &mut bins[t.y0 as usize / BAND_ROWS..=t.y1 as usize / BAND_ROWS] {
                    bin.push(i as u32);
                }
            }
            (tris, bins, shader.layer(layer))
        })
        .collect();
    // Band-major so a band's pixels stay in cache across all layers.
    pixels.par_chunks_mut(BAND_ROWS * w).enumerate().for_each(|(band, px)| {
        let row0 = (band * BAND_ROWS) as u32;
        let rows = row0..row0 + (px.len() / w) as u32;
        for (tris, bins, ls) in &layers {
            for p in px.iter_mut() {
                p.frag_inv_w = 0.0;
            }
            // Per-layer depth test: keep the nearest fragment.
            for &ti in &bins[band] {
                setup::scan(&tris[ti as usize], rows.clone(), |f| {
                    let p = &mut px[(f.y - row0) as usize * w + f.x as usize];
                    if f.inv_w > p.frag_inv_w {
                        p.frag_inv_w = f.inv_w;
                        p.frag_uv = f.uv;
                    }
                });
            }
            for (k, p) in px.iter_mut().enumerate() {
                if p.frag_inv_w <= 0.0 {
                    continue;
                }
                if options.debug_abuffer {
                    let depth = 1.0 / p.frag_inv_w;
                    if depth < p.last_depth {
                        p.violated = true;
                    }
                    p.last_depth = depth;
                    p.fragments += 1;
                }
                if p.transmittance < EARLY_OUT {
                    continue;
                }
                // The fragment lies on the pixel's primary ray, so the view
                // direction is that ray.
                let basis = specular.then(|| {
                    let (x, y) = ((k % w) as u32, rows.start + (k / w) as u32);
                    sh_basis(camera.primary_ray(x, y).to_array())
                });
                let (rgb, alpha) = ls.shade(p.frag_uv, basis.as_ref());
                let wgt = alpha * p.transmittance;
                for c in 0..3 {
                    p.rgb[c] += wgt * rgb[c];
                }
                p.weight += wgt;
                p.transmittance *= 1.0 - alpha;
            }
        }
    });
    let bg = options.background;
    let data = pixels
        .iter()
        .flat_map(|p| (0..3).map(move |c| quantize_unorm8(p.rgb[c] as f64 + p.transmittance as f64 * bg[c])))
        .collect();
    let layer_order = options.debug_abuffer.then(|| LayerOrderReport {
        fragments: pixels.iter().map(|p| p.fragments as usize).sum(),
        violations: pixels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.violated)
            .map(|(i, _)| ((i % w) as u32, (i / w) as u32))
            .collect(),
    });
    Frame {
        image: RgbImage::new(w as u32, h as u32, data).expect("sized by construction"),
        transmittance: pixels.iter().map(|p| p.transmittance).collect(),
        weight: pixels.iter().map(|p| p.weight).collect(),
        layer_order,
    }
}
