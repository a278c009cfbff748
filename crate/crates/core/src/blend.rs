//! Expression-driven blending: parameters to weights, weights to maps.

use half::f16;
use rayon::prelude::*;

use crate::error::InputError;
use crate::model::{texels, BlendMapper, BlendWeights, ExpressionParams, TextureAtlas, WarpAtlas, SH_TEXEL_LEN};
use crate::sample::MapView;

/// `gamma = warp_matrix * [p; 1]`, `beta = tex_matrix * [p; 1]`.
pub fn blend_weights(mapper: &BlendMapper, params: &ExpressionParams) -> Result<BlendWeights, InputError> {
    InputError::check_len("expression parameters", mapper.param_count(), params.len())?;
    let apply = |row: &[f32]| -> f64 {
        let (coeffs, offset) = row.split_at(row.len() - 1);
        coeffs.iter().zip(params.values()).map(|(&m, &p)| m as f64 * p).sum::<f64>() + offset[0] as f64
    };
    Ok(BlendWeights {
        gamma: (0..mapper.warp_basis()).map(|r| apply(mapper.warp_row(r))).collect(),
        beta: (0..mapper.tex_basis()).map(|r| apply(mapper.tex_row(r))).collect(),
    })
}

/// Per-layer blended UV-offset maps.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendedWarp {
    layers: usize,
    res: usize,
    data: Vec<f32>,
}

impl BlendedWarp {
    pub fn from_raw(layers: usize, res: usize, data: Vec<f32>) -> Result<Self, InputError> {
        InputError::check_len("blended warp", layers * texels(res) * 2, data.len())?;
        Ok(Self { layers, res, data })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn layer(&self, i: usize) -> MapView<'_, f32> {
        let len = texels(self.res) * 2;
        MapView::new_unchecked(self.res, 2, &self.data[i * len..(i + 1) * len])
    }
}

/// Per-layer blended appearance: RGBA as reals (alpha clamped to
/// `[0, 1]`, colors unclamped) and optional specular SH.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendedTexture {
    layers: usize,
    res: usize,
    rgba: Vec<f32>,
    specular: Option<Vec<f32>>,
}

impl BlendedTexture {
    pub fn from_raw(layers: usize, res: usize, rgba: Vec<f32>, specular: Option<Vec<f32>>) -> Result<Self, InputError> {
        let n = layers * texels(res);
        InputError::check_len("blended rgba", n * 4, rgba.len())?;
        if let Some(s) = &specular {
            InputError::check_len("blended specular", n * SH_TEXEL_LEN, s.len())?;
        }
        Ok(Self { layers, res, rgba, specular })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn rgba(&self) -> &[f32] {
        &self.rgba
    }

    pub fn specular(&self) -> Option<&[f32]> {
        self.specular.as_deref()
    }

    pub fn layer_rgba(&self, i: usize) -> MapView<'_, f32> {
        let len = texels(self.res) * 4;
        MapView::new_unchecked(self.res, 4, &self.rgba[i * len..(i + 1) * len])
    }

    pub fn layer_specular(&self, i: usize) -> Option<MapView<'_, f32>> {
        let len = texels(self.res) * SH_TEXEL_LEN;
        self.specular
            .as_ref()
            .map(|s| MapView::new_unchecked(self.res, SH_TEXEL_LEN, &s[i * len..(i + 1) * len]))
    }

    /// 8-bit RGBA with round-to-nearest after clamping to `[0, 1]`.
    pub fn quantized_rgba(&self) -> Vec<u8> {
        self.rgba.iter().map(|&v| quantize_unorm8(v as f64)).collect()
    }
}

pub fn quantize_unorm8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// A set of per-layer basis maps that can be linearly combined.
pub trait BlendBasis {
    type Blended;
    fn blend(&self, weights: &[f64]) -> Result<Self::Blended, InputError>;
    /// Like [`BlendBasis::blend`] but reuses `out`'s storage when it
    /// already exists.
    fn blend_into(&self, weights: &[f64], out: &mut Option<Self::Blended>) -> Result<(), InputError>;
}

/// Texel-wise `sum_j weights[j] * map[i][j]` for every layer `i`.
pub fn blend_maps<B: BlendBasis>(atlas: &B, weights: &[f64]) -> Result<B::Blended, InputError> {
    atlas.blend(weights)
}

fn nonzero(weights: &[f64]) -> impl Iterator<Item = (usize, f64)> + '_ {
    weights.iter().copied().enumerate().filter(|&(_, w)| w != 0.0)
}

/// `out = sum_k s_k * conv(map_k)` element-wise, in basis order per
/// element. Tiled so the accumulator stays in cache across basis maps.
fn accumulate<T: Copy>(out: &mut [f32], terms: &[(f32, &[T])], conv: impl Fn(T) -> f32) {
    const TILE: usize = 4096;
    let Some((&(s0, first), rest)) = terms.split_first() else {
        out.fill(0.0);
        return;
    };
    for (t, chunk) in out.chunks_mut(TILE).enumerate() {
        let range = t * TILE..t * TILE + chunk.len();
        for (o, &m) in chunk.iter_mut().zip(&first[range.clone()]) {
            *o = s0 * conv(m);
        }
        for &(s, map) in rest {
            for (o, &m) in chunk.iter_mut().zip(&map[range.clone()]) {
                *o += s * conv(m);
            }
        }
    }
}

/// Reuses `buf` when it has `len` elements, else allocates.
fn storage(buf: Option<Vec<f32>>, len: usize) -> Vec<f32> {
    match buf {
        Some(b) if b.len() == len => b,
        _ => vec![0.0; len],
    }
}

impl BlendBasis for WarpAtlas {
    type Blended = BlendedWarp;

    fn blend(&self, weights: &[f64]) -> Result<BlendedWarp, InputError> {
        let mut out = None;
        self.blend_into(weights, &mut out)?;
        Ok(out.expect("filled by blend_into"))
    }

    fn blend_into(&self, weights: &[f64], out: &mut Option<BlendedWarp>) -> Result<(), InputError> {
        InputError::check_len("warp weights", self.basis(), weights.len())?;
        let len = texels(self.res()) * 2;
        let mut data = storage(out.take().map(|b| b.data), self.layers() * len);
        data.par_chunks_mut(len).enumerate().for_each(|(i, out)| {
            let terms: Vec<(f32, &[f32])> = nonzero(weights).map(|(j, w)| (w as f32, self.map(i, j))).collect();
            accumulate(out, &terms, |m| m);
        });
        *out = Some(BlendedWarp { layers: self.layers(), res: self.res(), data });
        Ok(())
    }
}

impl BlendBasis for TextureAtlas {
    type Blended = BlendedTexture;

    fn blend(&self, weights: &[f64]) -> Result<BlendedTexture, InputError> {
        let mut out = None;
        self.blend_into(weights, &mut out)?;
        Ok(out.expect("filled by blend_into"))
    }

    fn blend_into(&self, weights: &[f64], out: &mut Option<BlendedTexture>) -> Result<(), InputError> {
        InputError::check_len("texture weights", self.basis(), weights.len())?;
        let n = texels(self.res());
        let (old_rgba, old_sh) = match out.take() {
            Some(b) => (Some(b.rgba), b.specular),
            None => (None, None),
        };
        let mut rgba = storage(old_rgba, self.layers() * n * 4);
        rgba.par_chunks_mut(n * 4).enumerate().for_each(|(i, out)| {
            let terms: Vec<(f32, &[u8])> =
                nonzero(weights).map(|(k, w)| ((w / 255.0) as f32, self.rgba_map(i, k))).collect();
            accumulate(out, &terms, |q| q as f32);
            for a in out.iter_mut().skip(3).step_by(4) {
                *a = a.clamp(0.0, 1.0);
            }
        });
        let specular = self.specular().map(|_| {
            let mut sh = storage(old_sh, self.layers() * n * SH_TEXEL_LEN);
            sh.par_chunks_mut(n * SH_TEXEL_LEN).enumerate().for_each(|(i, out)| {
                let terms: Vec<(f32, &[f16])> = nonzero(weights)
                    .map(|(k, w)| (w as f32, self.specular_map(i, k).expect("specular present")))
                    .collect();
                accumulate(out, &terms, f16::to_f32);
            });
            sh
        });
        *out = Some(BlendedTexture { layers: self.layers(), res: self.res(), rgba, specular });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mapper(rng: &mut ChaCha8Rng, w: usize, t: usize, p: usize) -> BlendMapper {
        let warp = (0..w * (p + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tex = (0..t * (p + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        BlendMapper::new(w, t, p, warp, tex).unwrap()
    }

    #[test]
    fn zero_params_give_offset_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_mapper(&mut rng, 4, 5, 6);
        let w = blend_weights(&m, &ExpressionParams::zeros(6)).unwrap();
        for r in 0..4 {
            assert_eq!(w.gamma[r], m.warp_row(r)[6] as f64);
        }
        for r in 0..5 {
            assert_eq!(w.beta[r], m.tex_row(r)[6] as f64);
        }
    }

    #[test]
    fn identity_mapper_selects_unit_vector() {
        let p = 5;
        let mut warp = vec![0.0; p * (p + 1)];
        for r in 0..p {
            warp[r * (p + 1) + r] = 1.0;
        }
        let m = BlendMapper::new(p, p, p, warp.clone(), warp).unwrap();
        let mut e1 = vec![0.0; p];
        e1[0] = 1.0;
        let w = blend_weights(&m, &ExpressionParams::new(e1.clone()).unwrap()).unwrap();
        assert_eq!(w.gamma, e1);
    }

    #[test]
    fn param_length_mismatch_is_rejected() {
        let m = BlendMapper::constant(63, &[1.0; 12], &[1.0; 12]).unwrap();
        assert!(matches!(
            blend_weights(&m, &ExpressionParams::zeros(62)),
            Err(InputError::Dimension { expected: 63, got: 62, .. })
        ));
    }

    // Independent oracle: explicit matrix arithmetic on the interpolated inputs.
    #[test]
    fn interpolation_commutes_with_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = 63;
            let m = random_mapper(&mut rng, 12, 12, p);
            let a: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.3 * x + 0.7 * y).collect();
            let direct = |row: &[f32], x: &[f64]| {
                let mut s = row[p] as f64;
                for c in 0..p {
                    s += row[c] as f64 * x[c];
                }
                s
            };
            let wm = blend_weights(&m, &ExpressionParams::new(mix.clone()).unwrap()).unwrap();
            for r in 0..12 {
                let expect = 0.3 * direct(m.warp_row(r), &a) + 0.7 * direct(m.warp_row(r), &b);
                assert!((wm.gamma[r] - expect).abs() <= 1e-6);
                let expect = 0.3 * direct(m.tex_row(r), &a) + 0.7 * direct(m.tex_row(r), &b);
                assert!((wm.beta[r] - expect).abs() <= 1e-6);
            }
        }
    }

    fn random_textures(rng: &mut ChaCha8Rng, layers: usize, basis: usize, res: usize, spec: bool) -> TextureAtlas {
        let n = layers * basis * res * res;
        let rgba = (0..n * 4).map(|_| rng.gen()).collect();
        let sh = spec.then(|| (0..n * SH_TEXEL_LEN).map(|_| f16::from_f32(rng.gen_range(-0.5..0.5))).collect());
        TextureAtlas::new(layers, basis, res, rgba, sh).unwrap()
    }

    #[test]
    fn selector_weights_reproduce_basis_element() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let atlas = random_textures(&mut rng, 2, 3, 4, true);
        let blended = blend_maps(&atlas, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(
            blended.quantized_rgba()[..64],
            atlas.rgba_map(0, 1)[..],
        );
        assert_eq!(blended.quantized_rgba()[64..], atlas.rgba_map(1, 1)[..]);
        let sh = blended.specular().unwrap();
        for (a, b) in sh[..16 * SH_TEXEL_LEN].iter().zip(atlas.specular_map(0, 1).unwrap()) {
            assert_eq!(*a, b.to_f32());
        }

        let warps = WarpAtlas::new(
            2,
            3,
            2,
            (0..2 * 3 * 4 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let bw = blend_maps(&warps, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(&bw.data()[..8], warps.map(0, 1));
    }

    #[test]
    fn zero_weights_give_zero_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let atlas = random_textures(&mut rng, 2, 3, 4, false);
        let blended = blend_maps(&atlas, &[0.0; 3]).unwrap();
        assert!(blended.rgba().iter().all(|&v| v == 0.0));
    }

    // Brute-force texel summation oracle.
    #[test]
    fn random_weights_match_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (layers, basis, res) = (3, 4, 4);
        let atlas = random_textures(&mut rng, layers, basis, res, false);
        let weights: Vec<f64> = (0..basis).map(|_| rng.gen_range(-0.6..0.9)).collect();
        let blended = blend_maps(&atlas, &weights).unwrap();
        for i in 0..layers {
            for t in 0..res * res {
                for c in 0..4 {
                    let mut s = 0.0f64;
                    for k in 0..basis {
                        s += weights[k] * atlas.rgba()[((i * basis + k) * res * res + t) * 4 + c] as f64 / 255.0;
                    }
                    if c == 3 {
                        s = s.clamp(0.0, 1.0);
                    }
                    let got = blended.rgba()[(i * res * res + t) * 4 + c] as f64;
                    assert!((got - s).abs() < 1e-5, "layer {i} texel {t} channel {c}: {got} vs {s}");
                }
            }
        }
    }

    #[test]
    fn wrong_weight_count_is_rejected() {
        let atlas = WarpAtlas::zeros(1, 3, 2);
        assert!(blend_maps(&atlas, &[1.0, 0.0]).is_err());
    }
}
