//! Analytic layered scenes standing in for a trained enrollment model.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, KeyValues};
use crate::error::InputError;
use crate::math::Vec3;
use crate::model::{BlendMapper, DEFAULT_PARAM_COUNT, SH_TEXEL_LEN};

/// Star-shaped shell field about the scene center:
/// `f(d) = 1 - |d / axes| * (1 + bump * sin(fa * azimuth) * cos(fe * elevation))`.
/// `f` grows toward the center, so with increasing level values the first
/// level crossed by an inward ray is the outermost shell.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellField {
    pub axes: [f64; 3],
    pub bump: f64,
    pub bump_freq: [f64; 2],
}

impl ShellField {
    pub fn sphere() -> Self {
        Self { axes: [1.0; 3], bump: 0.0, bump_freq: [0.0; 2] }
    }

    /// Field value at offset `d` from the scene center.
    #[inline]
    pub fn value(&self, d: Vec3) -> f64 {
        let e = Vec3::new(d.x / self.axes[0], d.y / self.axes[1], d.z / self.axes[2]).length();
        if self.bump == 0.0 || e == 0.0 {
            return 1.0 - e;
        }
        let az = d.x.atan2(d.z);
        let el = d.y.atan2(d.x.hypot(d.z));
        1.0 - e * (1.0 + self.bump * (self.bump_freq[0] * az).sin() * (self.bump_freq[1] * el).cos())
    }

    fn max_radius(&self) -> f64 {
        self.axes.iter().cloned().fold(0.0, f64::max) * (1.0 + self.bump.abs())
    }
}

/// Procedural UV-offset basis element.
#[derive(Debug, Clone, PartialEq)]
pub enum WarpGen {
    Zero,
    Constant([f64; 2]),
    /// `amp[c] * sin(freq[c] . uv + phase[c])` per channel.
    Sinusoid { amp: [f64; 2], freq: [[f64; 2]; 2], phase: [f64; 2] },
}

impl WarpGen {
    #[inline]
    pub fn eval(&self, uv: [f64; 2]) -> [f64; 2] {
        match self {
            WarpGen::Zero => [0.0; 2],
            WarpGen::Constant(d) => *d,
            WarpGen::Sinusoid { amp, freq, phase } => {
                let ch = |c: usize| amp[c] * (freq[c][0] * uv[0] + freq[c][1] * uv[1] + phase[c]).sin();
                [ch(0), ch(1)]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColorPattern {
    Constant([f64; 3]),
    /// `cells x cells` squares over `[-1, 1]^2`, cell `(0, 0)` gets `a`.
    Checker { cells: u32, a: [f64; 3], b: [f64; 3] },
    /// Linear in `|uv| / sqrt(2)` from `inner` to `outer`.
    Radial { inner: [f64; 3], outer: [f64; 3] },
    /// `base + amp * sin(freq[0] u + phase[0]) * cos(freq[1] v + phase[1])`.
    Sinusoid { base: [f64; 3], amp: [f64; 3], freq: [f64; 2], phase: [f64; 2] },
}

impl ColorPattern {
    #[inline]
    pub fn eval(&self, uv: [f64; 2]) -> [f64; 3] {
        match self {
            ColorPattern::Constant(c) => *c,
            ColorPattern::Checker { cells, a, b } => {
                let n = *cells as f64;
                let cell = |x: f64| (((x + 1.0) * 0.5 * n).floor()).clamp(0.0, n - 1.0) as u64;
                if (cell(uv[0]) + cell(uv[1])) % 2 == 0 {
                    *a
                } else {
                    *b
                }
            }
            ColorPattern::Radial { inner, outer } => {
                let t = ((uv[0] * uv[0] + uv[1] * uv[1]).sqrt() / 2f64.sqrt()).clamp(0.0, 1.0);
                [0, 1, 2].map(|c| inner[c] + (outer[c] - inner[c]) * t)
            }
            ColorPattern::Sinusoid { base, amp, freq, phase } => {
                let s = (freq[0] * uv[0] + phase[0]).sin() * (freq[1] * uv[1] + phase[1]).cos();
                [0, 1, 2].map(|c| base[c] + amp[c] * s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaProfile {
    Constant(f64),
    /// Linear in `|uv| / sqrt(2)` from `center` to `edge`.
    Radial { center: f64, edge: f64 },
    /// `base + amp * sin(freq . uv + phase)`.
    Sinusoid { base: f64, amp: f64, freq: [f64; 2], phase: f64 },
}

impl AlphaProfile {
    #[inline]
    pub fn eval(&self, uv: [f64; 2]) -> f64 {
        match self {
            AlphaProfile::Constant(a) => *a,
            AlphaProfile::Radial { center, edge } => {
                let t = ((uv[0] * uv[0] + uv[1] * uv[1]).sqrt() / 2f64.sqrt()).clamp(0.0, 1.0);
                center + (edge - center) * t
            }
            AlphaProfile::Sinusoid { base, amp, freq, phase } => {
                base + amp * (freq[0] * uv[0] + freq[1] * uv[1] + phase).sin()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpecPattern {
    None,
    /// Coefficient `q` is `amp * sin(freq . uv + phase + 0.7 q)`.
    Sinusoid { amp: f64, freq: [f64; 2], phase: f64 },
}

impl SpecPattern {
    #[inline]
    pub fn eval(&self, uv: [f64; 2], out: &mut [f64; SH_TEXEL_LEN]) {
        match self {
            SpecPattern::None => out.fill(0.0),
            SpecPattern::Sinusoid { amp, freq, phase } => {
                let base = freq[0] * uv[0] + freq[1] * uv[1] + phase;
                for (q, o) in out.iter_mut().enumerate() {
                    *o = amp * (base + 0.7 * q as f64).sin();
                }
            }
        }
    }
}

/// Texture basis element: diffuse color, alpha, specular SH.
#[derive(Debug, Clone, PartialEq)]
pub struct TexGen {
    pub color: ColorPattern,
    pub alpha: AlphaProfile,
    pub specular: SpecPattern,
}

impl TexGen {
    pub fn constant(rgb: [f64; 3], alpha: f64) -> Self {
        Self { color: ColorPattern::Constant(rgb), alpha: AlphaProfile::Constant(alpha), specular: SpecPattern::None }
    }
}

/// Layered implicit scene with procedural warp and texture bases and the
/// ground-truth blend mapper.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticScene {
    center: Vec3,
    field: ShellField,
    levels: Vec<f64>,
    warp_gens: Vec<WarpGen>,
    tex_gens: Vec<TexGen>,
    mapper: BlendMapper,
    bound_radius: f64,
}

impl AnalyticScene {
    pub fn new(
        center: Vec3,
        field: ShellField,
        levels: Vec<f64>,
        warp_gens: Vec<WarpGen>,
        tex_gens: Vec<TexGen>,
        mapper: BlendMapper,
    ) -> Result<Self, InputError> {
        let n = levels.len();
        if n == 0 {
            return Err(InputError::invalid("scene", "no layers"));
        }
        if !center.is_finite() {
            return Err(InputError::NonFinite("scene center"));
        }
        if field.axes.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(InputError::invalid("scene", "shell axes must be positive"));
        }
        if !(field.bump.abs() < 1.0) {
            return Err(InputError::OutOfRange { what: "bump", value: field.bump });
        }
        if levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(InputError::invalid("scene", "level values must be strictly increasing"));
        }
        if levels.iter().any(|&l| !(l < 1.0 && l.is_finite())) {
            return Err(InputError::invalid("scene", "level values must be below 1 (the center value)"));
        }
        InputError::check_len("warp generators", n * mapper.warp_basis(), warp_gens.len())?;
        InputError::check_len("texture generators", n * mapper.tex_basis(), tex_gens.len())?;
        let bound_radius = field.max_radius() * (1.0 - levels[0]) * 1.05 + 1e-3;
        Ok(Self { center, field, levels, warp_gens, tex_gens, mapper, bound_radius })
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn field(&self) -> &ShellField {
        &self.field
    }

    /// Scalar field in world coordinates.
    #[inline]
    pub fn field_at(&self, p: Vec3) -> f64 {
        self.field.value(p - self.center)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn layers(&self) -> usize {
        self.levels.len()
    }

    pub fn warp_basis(&self) -> usize {
        self.mapper.warp_basis()
    }

    pub fn tex_basis(&self) -> usize {
        self.mapper.tex_basis()
    }

    pub fn param_count(&self) -> usize {
        self.mapper.param_count()
    }

    pub fn mapper(&self) -> &BlendMapper {
        &self.mapper
    }

    /// Radius of a sphere about the center enclosing every shell.
    pub fn bound_radius(&self) -> f64 {
        self.bound_radius
    }

    pub fn warp_gen(&self, layer: usize, basis: usize) -> &WarpGen {
        &self.warp_gens[layer * self.warp_basis() + basis]
    }

    pub fn tex_gen(&self, layer: usize, basis: usize) -> &TexGen {
        &self.tex_gens[layer * self.tex_basis() + basis]
    }

    /// Same scene with a different mapper (tests, selector expressions).
    pub fn with_mapper(&self, mapper: BlendMapper) -> Result<Self, InputError> {
        Self::new(self.center, self.field.clone(), self.levels.clone(), self.warp_gens.clone(), self.tex_gens.clone(), mapper)
    }
}

/// Builds a scene from a `key = value` config. `preset` selects
/// `ellipsoid` (default), `checker`, `spheres` or `minimal`; remaining keys
/// override preset parameters.
pub fn parse_scene(text: &str) -> Result<AnalyticScene, ConfigError> {
    let mut kv = KeyValues::parse(text)?;
    let preset = kv.take_str("preset").unwrap_or_else(|| "ellipsoid".to_string());
    let scene = build_preset(&preset, &mut kv)?;
    kv.finish()?;
    Ok(scene)
}

pub const PRESETS: [&str; 4] = ["ellipsoid", "checker", "spheres", "minimal"];

/// A preset with all defaults.
pub fn preset(name: &str) -> Result<AnalyticScene, ConfigError> {
    build_preset(name, &mut KeyValues::default())
}

struct Dims {
    layers: usize,
    warp: usize,
    tex: usize,
    params: usize,
    center: Vec3,
    seed: u64,
}

fn common(kv: &mut KeyValues, layers: usize) -> Result<Dims, ConfigError> {
    let d = Dims {
        layers: kv.take_usize("layers")?.unwrap_or(layers),
        warp: kv.take_usize("warp_basis")?.unwrap_or(12),
        tex: kv.take_usize("tex_basis")?.unwrap_or(12),
        params: kv.take_usize("params")?.unwrap_or(DEFAULT_PARAM_COUNT),
        center: kv.take_vec3("center")?.unwrap_or(Vec3::ZERO),
        seed: kv.take_u64("seed")?.unwrap_or(1),
    };
    if d.layers == 0 || d.warp == 0 || d.tex == 0 {
        return Err(ConfigError::Value { key: "layers".into(), reason: "layer and basis counts must be positive".into() });
    }
    Ok(d)
}

fn build_preset(name: &str, kv: &mut KeyValues) -> Result<AnalyticScene, ConfigError> {
    match name {
        "ellipsoid" => smooth_scene(kv, false),
        "checker" => smooth_scene(kv, true),
        "spheres" => spheres_scene(kv),
        "minimal" => minimal_scene(kv),
        other => Err(ConfigError::Value { key: "preset".into(), reason: format!("unknown preset `{other}`") }),
    }
}

fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let v = rng.gen_range(lo..hi);
    if rng.gen_bool(0.5) {
        v
    } else {
        -v
    }
}

/// Mapper whose texture weights stay a convex combination for every
/// parameter vector in `[-1, 1]^p` when `gain <= 1`: offsets are `1/T`,
/// parameter columns sum to zero across rows and each row's perturbation
/// is bounded by `gain / T`.
fn smooth_mapper(rng: &mut ChaCha8Rng, d: &Dims, gain: f64, warp_gain: f64) -> Result<BlendMapper, InputError> {
    let (p, cols) = (d.params, d.params + 1);
    let mut warp = vec![0.0f32; d.warp * cols];
    for r in 0..d.warp {
        for c in 0..p {
            warp[r * cols + c] = (rng.gen_range(-1.0..1.0) * 0.5 * warp_gain / p.max(1) as f64) as f32;
        }
        warp[r * cols + p] = rng.gen_range(0.2..1.0) as f32;
    }
    let a = gain / (2.0 * d.tex as f64 * p.max(1) as f64);
    let mut tex = vec![0.0f64; d.tex * cols];
    for r in 0..d.tex {
        for c in 0..p {
            tex[r * cols + c] = rng.gen_range(-a..a);
        }
        tex[r * cols + p] = 1.0 / d.tex as f64;
    }
    for c in 0..p {
        let mean = (0..d.tex).map(|r| tex[r * cols + c]).sum::<f64>() / d.tex as f64;
        for r in 0..d.tex {
            tex[r * cols + c] -= mean;
        }
    }
    BlendMapper::new(d.warp, d.tex, p, warp, tex.into_iter().map(|v| v as f32).collect())
}

fn smooth_scene(kv: &mut KeyValues, checker: bool) -> Result<AnalyticScene, ConfigError> {
    let d = common(kv, 12)?;
    let axes = kv.take_vec3("axes")?.unwrap_or(Vec3::new(0.8, 1.0, 0.7));
    let bump = kv.take_f64("bump")?.unwrap_or(0.0);
    let scale_outer = kv.take_f64("scale_outer")?.unwrap_or(1.0);
    let scale_inner = kv.take_f64("scale_inner")?.unwrap_or(0.6);
    let warp_amp = kv.take_f64("warp_amp")?.unwrap_or(0.02);
    let color_amp = kv.take_f64("color_amp")?.unwrap_or(0.12);
    let alpha_outer = kv.take_f64("alpha_outer")?.unwrap_or(0.25);
    let alpha_inner = kv.take_f64("alpha_inner")?.unwrap_or(1.0);
    let spec_amp = kv.take_f64("spec_amp")?.unwrap_or(0.05);
    let gain = kv.take_f64("expr_gain")?.unwrap_or(1.0);
    let cells = kv.take_usize("cells")?.unwrap_or(8) as u32;
    if !(scale_outer > scale_inner && scale_inner > 0.0) {
        return Err(ConfigError::Value { key: "scale_inner".into(), reason: "need 0 < scale_inner < scale_outer".into() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    let n = d.layers;
    let frac = |i: usize| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
    let levels = (0..n).map(|i| 1.0 - (scale_outer + (scale_inner - scale_outer) * frac(i))).collect();

    let mut warp_gens = Vec::with_capacity(n * d.warp);
    for _ in 0..n * d.warp {
        let mut freq = [[0.0; 2]; 2];
        for row in freq.iter_mut() {
            *row = [signed(&mut rng, 0.5, 2.5), signed(&mut rng, 0.5, 2.5)];
        }
        warp_gens.push(WarpGen::Sinusoid {
            amp: [rng.gen_range(0.3..1.0) * warp_amp, rng.gen_range(0.3..1.0) * warp_amp],
            freq,
            phase: [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)],
        });
    }

    let mut tex_gens = Vec::with_capacity(n * d.tex);
    for i in 0..n {
        let alpha = (alpha_outer + (alpha_inner - alpha_outer) * frac(i)).clamp(0.0, 1.0);
        let headroom = alpha.min(1.0 - alpha);
        for _ in 0..d.tex {
            let color = if checker {
                let a = [0, 1, 2].map(|_| rng.gen_range(0.15..0.45));
                let b = [0, 1, 2].map(|_| rng.gen_range(0.55..0.85));
                ColorPattern::Checker { cells, a, b }
            } else {
                ColorPattern::Sinusoid {
                    base: [0, 1, 2].map(|_| rng.gen_range(0.3..0.7)),
                    amp: [0, 1, 2].map(|_| rng.gen_range(0.3..1.0) * color_amp),
                    freq: [signed(&mut rng, 0.5, 2.5), signed(&mut rng, 0.5, 2.5)],
                    phase: [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)],
                }
            };
            let alpha = AlphaProfile::Sinusoid {
                base: alpha,
                amp: 0.5 * headroom,
                freq: [signed(&mut rng, 0.5, 2.0), signed(&mut rng, 0.5, 2.0)],
                phase: rng.gen_range(0.0..TAU),
            };
            let specular = SpecPattern::Sinusoid {
                amp: spec_amp,
                freq: [signed(&mut rng, 0.5, 2.0), signed(&mut rng, 0.5, 2.0)],
                phase: rng.gen_range(0.0..PI),
            };
            tex_gens.push(TexGen { color, alpha, specular });
        }
    }

    let mapper = smooth_mapper(&mut rng, &d, gain, 1.0)?;
    let field = ShellField { axes: axes.to_array(), bump, bump_freq: [3.0, 2.0] };
    Ok(AnalyticScene::new(d.center, field, levels, warp_gens, tex_gens, mapper)?)
}

fn spheres_scene(kv: &mut KeyValues) -> Result<AnalyticScene, ConfigError> {
    let mut radii = kv.take_list("radii")?.unwrap_or_else(|| vec![2.0, 1.0]);
    radii.sort_by(|a, b| b.total_cmp(a));
    let d = common(kv, radii.len())?;
    if d.layers != radii.len() {
        return Err(ConfigError::Value { key: "layers".into(), reason: "must equal the number of radii".into() });
    }
    let gray = per_layer(kv, "gray", 0.5, d.layers)?;
    let alpha = per_layer(kv, "alpha", 1.0, d.layers)?;
    // Field 1 - |d| with radii r gives levels 1 - r; the largest radius comes first.
    let levels = radii.iter().map(|r| 1.0 - r).collect();
    let warp_gens = vec![WarpGen::Zero; d.layers * d.warp];
    let tex_gens = (0..d.layers * d.tex).map(|i| TexGen::constant([gray[i / d.tex]; 3], alpha[i / d.tex])).collect();
    let mut beta = vec![0.0f32; d.tex];
    beta[0] = 1.0;
    let mapper = BlendMapper::constant(d.params, &vec![0.0; d.warp], &beta)?;
    Ok(AnalyticScene::new(d.center, ShellField::sphere(), levels, warp_gens, tex_gens, mapper)?)
}

/// One value for every layer, or one per layer (outermost first).
fn per_layer(kv: &mut KeyValues, key: &str, default: f64, layers: usize) -> Result<Vec<f64>, ConfigError> {
    match kv.take_list(key)? {
        None => Ok(vec![default; layers]),
        Some(v) if v.len() == 1 => Ok(vec![v[0]; layers]),
        Some(v) if v.len() == layers => Ok(v),
        Some(v) => Err(ConfigError::Value { key: key.into(), reason: format!("expected 1 or {layers} values, got {}", v.len()) }),
    }
}

fn minimal_scene(kv: &mut KeyValues) -> Result<AnalyticScene, ConfigError> {
    let d = common(kv, 12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    let n = d.layers;
    let levels = (0..n).map(|i| 1.0 - (1.0 - 0.5 * i as f64 / n as f64)).collect();
    let warp_gens = vec![WarpGen::Zero; n * d.warp];
    let tex_gens = (0..n * d.tex)
        .map(|i| {
            let layer = i / d.tex;
            let alpha = if layer + 1 == n { 1.0 } else { 0.3 };
            TexGen::constant([0, 1, 2].map(|_| rng.gen_range(0.2..0.8)), alpha)
        })
        .collect();
    let mapper = smooth_mapper(&mut rng, &d, 1.0, 0.0)?;
    Ok(AnalyticScene::new(d.center, ShellField::sphere(), levels, warp_gens, tex_gens, mapper)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blend::blend_weights;
    use crate::model::ExpressionParams;

    #[test]
    fn presets_have_default_dimensions() {
        for name in ["ellipsoid", "checker", "minimal"] {
            let s = preset(name).unwrap();
            assert_eq!((s.layers(), s.warp_basis(), s.tex_basis(), s.param_count()), (12, 12, 12, 63), "{name}");
        }
    }

    #[test]
    fn overrides_apply_and_unknown_keys_fail() {
        let s = parse_scene("preset = ellipsoid\nlayers = 3\nwarp_basis = 2\ntex_basis = 4\nparams = 5\n").unwrap();
        assert_eq!((s.layers(), s.warp_basis(), s.tex_basis(), s.param_count()), (3, 2, 4, 5));
        assert!(parse_scene("preset = ellipsoid\nlayer = 3\n").is_err());
        assert!(parse_scene("preset = torus\n").is_err());
    }

    #[test]
    fn smooth_mapper_keeps_texture_weights_convex() {
        let s = preset("ellipsoid").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let p: Vec<f64> = (0..63).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w = blend_weights(s.mapper(), &ExpressionParams::new(p).unwrap()).unwrap();
            assert!(w.beta.iter().all(|&b| b >= -1e-6));
            assert!((w.beta.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn checker_pattern_cells() {
        let c = ColorPattern::Checker { cells: 2, a: [0.0; 3], b: [1.0; 3] };
        assert_eq!(c.eval([-0.9, -0.9]), [0.0; 3]);
        assert_eq!(c.eval([0.9, -0.9]), [1.0; 3]);
        assert_eq!(c.eval([0.9, 0.9]), [0.0; 3]);
        assert_eq!(c.eval([1.0, -1.0]), [1.0; 3]);
    }

    #[test]
    fn rejects_non_increasing_levels() {
        let m = BlendMapper::constant(1, &[0.0], &[1.0]).unwrap();
        let err = AnalyticScene::new(
            Vec3::ZERO,
            ShellField::sphere(),
            vec![0.5, 0.1],
            vec![WarpGen::Zero; 2],
            vec![TexGen::constant([0.5; 3], 1.0); 2],
            m,
        );
        assert!(err.is_err());
    }
}
