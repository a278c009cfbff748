//! Ground-truth renderer: ray-traces the analytic scene per pixel with
//! continuous intersections, UVs and generator-evaluated maps.

use rayon::prelude::*;

use crate::baker::{intersect_layers, spherical_uv, AnalyticScene, Ray};
use crate::blend::{blend_weights, quantize_unorm8};
use crate::camera::Camera;
use crate::composite::FrontToBack;
use crate::error::InputError;
use crate::image::RgbImage;
use crate::model::{ExpressionParams, SH_TEXEL_LEN};
use crate::sh::sh_basis;

/// Per-pixel composite before the background blend.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleImage {
    pub width: u32,
    pub height: u32,
    /// Accumulated `sum w_i * rgb_i`, row-major, 3 per pixel.
    pub rgb: Vec<f64>,
    /// Residual transmittance per pixel.
    pub residual: Vec<f64>,
    /// Whether the primary ray met any layer.
    pub covered: Vec<bool>,
}

impl OracleImage {
    pub fn to_rgb8(&self, background: [f64; 3]) -> RgbImage {
        let data = self
            .rgb
            .chunks_exact(3)
            .zip(&self.residual)
            .flat_map(|(c, &t)| (0..3).map(move |k| quantize_unorm8(c[k] + t * background[k])))
            .collect();
        RgbImage::new(self.width, self.height, data).expect("sized by construction")
    }

    pub fn transmittance_f32(&self) -> Vec<f32> {
        self.residual.iter().map(|&t| t as f32).collect()
    }
}

/// Radiance and alpha of layer `layer` at the first hit `point` seen along
/// `dir`, with the weights already mapped from the expression.
pub fn shade_hit(
    scene: &AnalyticScene,
    layer: usize,
    point: crate::math::Vec3,
    dir: [f64; 3],
    gamma: &[f64],
    beta: &[f64],
    include_specular: bool,
) -> Result<(f64, [f64; 3]), InputError> {
    let uv = spherical_uv(point, scene.center())?;
    let mut warped = uv;
    for (j, &g) in gamma.iter().enumerate() {
        if g != 0.0 {
            let d = scene.warp_gen(layer, j).eval(uv);
            warped[0] += g * d[0];
            warped[1] += g * d[1];
        }
    }
    // Texture lookups clamp to the UV domain.
    let warped = [warped[0].clamp(-1.0, 1.0), warped[1].clamp(-1.0, 1.0)];
    let mut rgb = [0.0; 3];
    let mut alpha = 0.0;
    let mut sh = [0.0; SH_TEXEL_LEN];
    let mut sh_k = [0.0; SH_TEXEL_LEN];
    for (k, &b) in beta.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        let gen = scene.tex_gen(layer, k);
        let c = gen.color.eval(warped);
        for ch in 0..3 {
            rgb[ch] += b * c[ch];
        }
        alpha += b * gen.alpha.eval(warped);
        if include_specular {
            gen.specular.eval(warped, &mut sh_k);
            for (s, v) in sh.iter_mut().zip(&sh_k) {
                *s += b * v;
            }
        }
    }
    if include_specular {
        let basis = sh_basis(dir);
        for (m, y) in basis.iter().enumerate() {
            for ch in 0..3 {
                rgb[ch] += sh[m * 3 + ch] * y;
            }
        }
    }
    Ok((alpha.clamp(0.0, 1.0), rgb))
}

/// Ray-traces `scene` for one camera. Only hits on the front hemisphere of
/// each shell (the baked domain) contribute; layers composite in index
/// order.
pub fn oracle_render(
    scene: &AnalyticScene,
    params: &ExpressionParams,
    camera: &Camera,
    include_specular: bool,
) -> Result<OracleImage, InputError> {
    if camera.position().z - scene.center().z <= 0.0 {
        return Err(InputError::invalid("oracle camera", "camera is behind the scene's front hemisphere"));
    }
    let weights = blend_weights(scene.mapper(), params)?;
    let (w, h) = (camera.width(), camera.height());
    let rows: Vec<Vec<(FrontToBack, bool)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| trace_pixel(scene, camera, x, y, &weights.gamma, &weights.beta, include_specular))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let mut out = OracleImage {
        width: w,
        height: h,
        rgb: Vec::with_capacity(w as usize * h as usize * 3),
        residual: Vec::with_capacity(w as usize * h as usize),
        covered: Vec::with_capacity(w as usize * h as usize),
    };
    for (acc, covered) in rows.into_iter().flatten() {
        out.rgb.extend_from_slice(&acc.rgb);
        out.residual.push(acc.transmittance);
        out.covered.push(covered);
    }
    Ok(out)
}

fn trace_pixel(
    scene: &AnalyticScene,
    camera: &Camera,
    x: u32,
    y: u32,
    gamma: &[f64],
    beta: &[f64],
    include_specular: bool,
) -> Result<(FrontToBack, bool), InputError> {
    let dir = camera.primary_ray(x, y);
    let ray = Ray::new(camera.position(), dir);
    let mut acc = FrontToBack::default();
    let mut covered = false;
    for (layer, hit) in intersect_layers(scene, &ray).into_iter().enumerate() {
        let Some(hit) = hit else { continue };
        if hit.point.z - scene.center().z < 0.0 {
            continue;
        }
        covered = true;
        let (alpha, rgb) = shade_hit(scene, layer, hit.point, dir.to_array(), gamma, beta, include_specular)?;
        acc.push(alpha, rgb);
    }
    Ok((acc, covered))
}
