//! Continuous lookup of square UV-space maps.
//!
//! UV `(-1, -1)` sits on the center of texel `(0, 0)` and `(1, 1)` on the
//! center of texel `(res - 1, res - 1)`; `u` runs along columns and `v`
//! along rows. Coordinates outside `[-1, 1]` clamp to the edge.

use half::f16;

use crate::error::InputError;

/// A stored texel component that dequantizes to a real value.
pub trait Texel: Copy + Send + Sync {
    fn value(self) -> f32;
}

impl Texel for f32 {
    #[inline]
    fn value(self) -> f32 {
        self
    }
}

impl Texel for u8 {
    #[inline]
    fn value(self) -> f32 {
        self as f32 / 255.0
    }
}

impl Texel for f16 {
    #[inline]
    fn value(self) -> f32 {
        self.to_f32()
    }
}

/// UV coordinate of the center of texel index `i` along one axis.
pub fn texel_center(i: usize, res: usize) -> f64 {
    if res <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (res - 1) as f64
    }
}

/// The four texels and weights a bilinear lookup touches. Shared between
/// maps of equal resolution so fused sampling computes it once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub index: [usize; 4],
    pub weight: [f32; 4],
}

impl Footprint {
    #[inline]
    pub fn new(res: usize, uv: [f32; 2]) -> Self {
        if res == 1 {
            return Footprint { index: [0; 4], weight: [1.0, 0.0, 0.0, 0.0] };
        }
        let max = (res - 1) as f32;
        let x = ((uv[0] + 1.0) * 0.5 * max).clamp(0.0, max);
        let y = ((uv[1] + 1.0) * 0.5 * max).clamp(0.0, max);
        let x0 = (x.floor() as usize).min(res - 2);
        let y0 = (y.floor() as usize).min(res - 2);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let i00 = y0 * res + x0;
        Footprint {
            index: [i00, i00 + 1, i00 + res, i00 + res + 1],
            weight: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        }
    }
}

/// Borrowed square map with `channels` interleaved components per texel.
#[derive(Debug, Clone, Copy)]
pub struct MapView<'a, T> {
    res: usize,
    channels: usize,
    data: &'a [T],
}

impl<'a, T: Texel> MapView<'a, T> {
    pub fn new(res: usize, channels: usize, data: &'a [T]) -> Result<Self, InputError> {
        if res == 0 || channels == 0 {
            return Err(InputError::invalid("map", "empty map"));
        }
        InputError::check_len("map data", res * res * channels, data.len())?;
        Ok(Self { res, channels, data })
    }

    /// Caller guarantees the length invariant.
    pub(crate) fn new_unchecked(res: usize, channels: usize, data: &'a [T]) -> Self {
        debug_assert_eq!(data.len(), res * res * channels);
        Self { res, channels, data }
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn texel(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.res + col) * self.channels + channel].value()
    }

    /// Adds `scale * sample(footprint)` to `out`.
    #[inline]
    pub fn accumulate(&self, fp: &Footprint, scale: f32, out: &mut [f32]) {
        let c = self.channels;
        for (k, &idx) in fp.index.iter().enumerate() {
            let w = fp.weight[k] * scale;
            let base = idx * c;
            for (o, t) in out[..c].iter_mut().zip(&self.data[base..base + c]) {
                *o += w * t.value();
            }
        }
    }

    /// `sample_into` for a map known to have `N` channels.
    #[inline]
    pub fn sample_n<const N: usize>(&self, fp: &Footprint) -> [f32; N] {
        debug_assert_eq!(self.channels, N);
        let mut out = [0.0f32; N];
        for (&idx, &w) in fp.index.iter().zip(&fp.weight) {
            let t: &[T; N] = self.data[idx * N..idx * N + N].try_into().expect("N channels");
            for c in 0..N {
                out[c] += w * t[c].value();
            }
        }
        out
    }

    #[inline]
    pub fn sample_into(&self, uv: [f32; 2], out: &mut [f32]) {
        out[..self.channels].iter_mut().for_each(|o| *o = 0.0);
        self.accumulate(&Footprint::new(self.res, uv), 1.0, out);
    }
}

/// Bilinear lookup returning one value per channel.
pub fn sample_bilinear<T: Texel>(map: &MapView<'_, T>, uv: [f32; 2]) -> Vec<f32> {
    let mut out = vec![0.0; map.channels()];
    map.sample_into(uv, &mut out);
    out
}

/// `u' = u + W(u)` with the blended warp map of one layer. Not clamped.
#[inline]
pub fn warp_uv(uv: [f32; 2], warp: &MapView<'_, f32>) -> [f32; 2] {
    let d = warp.sample_n::<2>(&Footprint::new(warp.res(), uv));
    [uv[0] + d[0], uv[1] + d[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_center_is_average() {
        let data = [0.0f32, 1.0, 2.0, 3.0];
        let map = MapView::new(2, 1, &data).unwrap();
        assert_eq!(sample_bilinear(&map, [0.0, 0.0]), vec![1.5]);
    }

    #[test]
    fn texel_centers_reproduce_texels() {
        let data: Vec<f32> = (0..9).map(|v| v as f32 * 0.7).collect();
        let map = MapView::new(3, 1, &data).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let uv = [texel_center(c, 3) as f32, texel_center(r, 3) as f32];
                assert_eq!(sample_bilinear(&map, uv)[0], map.texel(r, c, 0));
            }
        }
    }

    #[test]
    fn constant_map_is_constant() {
        let data = vec![0.25f32; 4 * 4 * 2];
        let map = MapView::new(4, 2, &data).unwrap();
        for uv in [[-3.0, 0.2], [0.1, 0.9], [1.0, -1.0], [0.333, 5.0]] {
            let s = sample_bilinear(&map, uv);
            assert!(s.iter().all(|&v| (v - 0.25).abs() < 1e-7));
        }
    }

    #[test]
    fn out_of_range_clamps_to_edge() {
        let data = [0.0f32, 1.0, 2.0, 3.0];
        let map = MapView::new(2, 1, &data).unwrap();
        assert_eq!(sample_bilinear(&map, [5.0, 5.0]), vec![3.0]);
        assert_eq!(sample_bilinear(&map, [-5.0, -5.0]), vec![0.0]);
    }

    #[test]
    fn single_texel_map() {
        let data = [7u8, 9, 11, 255];
        let map = MapView::new(1, 4, &data).unwrap();
        let s = sample_bilinear(&map, [0.3, -0.8]);
        assert_eq!(s[3], 1.0);
    }

    #[test]
    fn zero_and_constant_warps() {
        let zero = vec![0.0f32; 8 * 8 * 2];
        let zmap = MapView::new(8, 2, &zero).unwrap();
        assert_eq!(warp_uv([0.3, -0.2], &zmap), [0.3, -0.2]);
        let drift: Vec<f32> = (0..8 * 8).flat_map(|_| [0.1f32, 0.0]).collect();
        let dmap = MapView::new(8, 2, &drift).unwrap();
        let w = warp_uv([0.3, -0.2], &dmap);
        assert!((w[0] - 0.4).abs() < 1e-6 && (w[1] + 0.2).abs() < 1e-7);
    }

    // Scalar oracle: a warp map that is an affine function of UV is
    // reproduced exactly by bilinear interpolation inside the domain.
    #[test]
    fn linear_ramp_warp_matches_scalar_oracle() {
        let res = 9;
        let ramp = |u: f64, v: f64| [0.05 * u - 0.02 * v + 0.01, 0.03 * v + 0.04 * u];
        let mut data = Vec::new();
        for r in 0..res {
            for c in 0..res {
                let d = ramp(texel_center(c, res), texel_center(r, res));
                data.extend([d[0] as f32, d[1] as f32]);
            }
        }
        let map = MapView::new(res, 2, &data).unwrap();
        for uv in [[0.123f32, -0.77], [-0.95, 0.5], [0.6, 0.61]] {
            let d = ramp(uv[0] as f64, uv[1] as f64);
            let got = warp_uv(uv, &map);
            assert!((got[0] as f64 - (uv[0] as f64 + d[0])).abs() < 1e-6);
            assert!((got[1] as f64 - (uv[1] as f64 + d[1])).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn sampling_is_linear_in_the_map(
            a in proptest::collection::vec(-1.0f32..1.0, 16),
            b in proptest::collection::vec(-1.0f32..1.0, 16),
            wa in -2.0f32..2.0, wb in -2.0f32..2.0,
            u in -1.2f32..1.2, v in -1.2f32..1.2,
        ) {
            let mix: Vec<f32> = a.iter().zip(&b).map(|(x, y)| wa * x + wb * y).collect();
            let ma = MapView::new(4, 1, &a).unwrap();
            let mb = MapView::new(4, 1, &b).unwrap();
            let mm = MapView::new(4, 1, &mix).unwrap();
            let lhs = sample_bilinear(&mm, [u, v])[0];
            let rhs = wa * sample_bilinear(&ma, [u, v])[0] + wb * sample_bilinear(&mb, [u, v])[0];
            prop_assert!((lhs - rhs).abs() <= 1e-5);
        }
    }
}
