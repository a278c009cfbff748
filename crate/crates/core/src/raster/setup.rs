//! Per-layer vertex projection, back-face culling, homogeneous clipping and
//! fixed-point triangle setup.

use crate::camera::Camera;
use crate::math::Vec3;
use crate::model::MeshLayer;

/// Sub-pixel precision of the fixed-point rasterizer.
pub const SUBPIXEL_BITS: u32 = 8;
const ONE: i64 = 1 << SUBPIXEL_BITS;
/// Clip against `|x|, |y| <= GUARD * w` instead of the viewport; pixels
/// outside the viewport are rejected by the bounding box.
const GUARD: f64 = 2.0;

#[derive(Debug, Clone, Copy)]
struct ClipVertex {
    clip: [f64; 4],
    uv: [f64; 2],
}

impl ClipVertex {
    fn lerp(&self, o: &ClipVertex, t: f64) -> ClipVertex {
        let mut clip = [0.0; 4];
        for (k, c) in clip.iter_mut().enumerate() {
            *c = self.clip[k] + (o.clip[k] - self.clip[k]) * t;
        }
        ClipVertex { clip, uv: [self.uv[0] + (o.uv[0] - self.uv[0]) * t, self.uv[1] + (o.uv[1] - self.uv[1]) * t] }
    }
}

/// Signed distances to the six clip planes; inside when all are `>= 0`.
fn plane_distances(c: &[f64; 4]) -> [f64; 6] {
    let [x, y, z, w] = *c;
    [z + w, w - z, GUARD * w + x, GUARD * w - x, GUARD * w + y, GUARD * w - y]
}

/// Triangle ready for scan conversion. Vertices are ordered so `area > 0`.
#[derive(Debug, Clone, Copy)]
pub struct ScreenTri {
    pub x: [i64; 3],
    pub y: [i64; 3],
    pub area: i64,
    pub inv_w: [f32; 3],
    /// Canonical UV premultiplied by `inv_w`.
    pub uv_w: [[f32; 2]; 3],
    /// Inclusive pixel bounds, already clamped to the viewport.
    pub x0: u32,
    pub x1: u32,
    pub y0: u32,
    pub y1: u32,
}

/// Front-facing, clipped screen triangles of one layer.
pub fn setup_layer(layer: &MeshLayer, camera: &Camera) -> Vec<ScreenTri> {
    let eye = camera.position();
    let clip: Vec<[f64; 4]> = layer.positions.iter().map(|p| camera.view_to_clip(camera.to_view(Vec3::from_f32(*p)))).collect();
    let mut out = Vec::new();
    let mut poly = Vec::with_capacity(12);
    let mut scratch = Vec::with_capacity(12);
    for tri in &layer.indices {
        let [a, b, c] = tri.map(|i| i as usize);
        let (pa, pb, pc) = (
            Vec3::from_f32(layer.positions[a]),
            Vec3::from_f32(layer.positions[b]),
            Vec3::from_f32(layer.positions[c]),
        );
        // Counterclockwise faces point at the viewing hemisphere.
        if (pb - pa).cross(pc - pa).dot(eye - pa) <= 0.0 {
            continue;
        }
        let verts = [a, b, c].map(|i| ClipVertex {
            clip: clip[i],
            uv: [layer.canonical_uv[i][0] as f64, layer.canonical_uv[i][1] as f64],
        });
        let d = verts.map(|v| plane_distances(&v.clip));
        let mut outside_all = false;
        let mut inside_all = true;
        for p in 0..6 {
            outside_all |= d.iter().all(|d| d[p] < 0.0);
            inside_all &= d.iter().all(|d| d[p] >= 0.0);
        }
        if outside_all {
            continue;
        }
        poly.clear();
        poly.extend_from_slice(&verts);
        if !inside_all {
            clip_polygon(&mut poly, &mut scratch);
            if poly.len() < 3 {
                continue;
            }
        }
        for k in 1..poly.len() - 1 {
            if let Some(t) = to_screen([poly[0], poly[k], poly[k + 1]], camera) {
                out.push(t);
            }
        }
    }
    out
}

fn clip_polygon(poly: &mut Vec<ClipVertex>, scratch: &mut Vec<ClipVertex>) {
    for plane in 0..6 {
        if poly.is_empty() {
            return;
        }
        scratch.clear();
        for i in 0..poly.len() {
            let cur = poly[i];
            let next = poly[(i + 1) % poly.len()];
            let dc = plane_distances(&cur.clip)[plane];
            let dn = plane_distances(&next.clip)[plane];
            if dc >= 0.0 {
                scratch.push(cur);
            }
            if (dc >= 0.0) != (dn >= 0.0) {
                scratch.push(cur.lerp(&next, dc / (dc - dn)));
            }
        }
        std::mem::swap(poly, scratch);
    }
}

fn to_screen(v: [ClipVertex; 3], camera: &Camera) -> Option<ScreenTri> {
    let mut x = [0i64; 3];
    let mut y = [0i64; 3];
    let mut inv_w = [0f32; 3];
    let mut uv_w = [[0f32; 2]; 3];
    for k in 0..3 {
        let p = camera.clip_to_pixel(v[k].clip);
        x[k] = (p[0] * ONE as f64).round() as i64;
        y[k] = (p[1] * ONE as f64).round() as i64;
        let iw = 1.0 / v[k].clip[3];
        inv_w[k] = iw as f32;
        uv_w[k] = [(v[k].uv[0] * iw) as f32, (v[k].uv[1] * iw) as f32];
    }
    let mut area = edge(x[0], y[0], x[1], y[1], x[2], y[2]);
    if area == 0 {
        return None;
    }
    if area < 0 {
        x.swap(1, 2);
        y.swap(1, 2);
        inv_w.swap(1, 2);
        uv_w.swap(1, 2);
        area = -area;
    }
    let (w, h) = (camera.width() as i64, camera.height() as i64);
    // Pixel centers sit at (i + 0.5) * ONE.
    let first = |lo: i64| (lo - ONE / 2 + ONE - 1).div_euclid(ONE);
    let last = |hi: i64| (hi - ONE / 2).div_euclid(ONE);
    let x0 = first(*x.iter().min().unwrap()).max(0);
    let x1 = last(*x.iter().max().unwrap()).min(w - 1);
    let y0 = first(*y.iter().min().unwrap()).max(0);
    let y1 = last(*y.iter().max().unwrap()).min(h - 1);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some(ScreenTri { x, y, area, inv_w, uv_w, x0: x0 as u32, x1: x1 as u32, y0: y0 as u32, y1: y1 as u32 })
}

/// Twice the signed area of `(a, b, p)`.
#[inline]
pub fn edge(ax: i64, ay: i64, bx: i64, by: i64, px: i64, py: i64) -> i64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Tie-break for pixel centers exactly on an edge: of the two directions
/// an edge is traversed in (one per adjacent triangle), exactly one owns it.
#[inline]
fn owns(ax: i64, ay: i64, bx: i64, by: i64) -> bool {
    let (dx, dy) = (bx - ax, by - ay);
    dy > 0 || (dy == 0 && dx < 0)
}

/// A covered pixel: coordinates and perspective-correct attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub x: u32,
    pub y: u32,
    pub inv_w: f32,
    pub uv: [f32; 2],
}

/// Calls `emit` for every pixel center of `tri` in rows `rows`.
#[inline]
pub fn scan(tri: &ScreenTri, rows: std::ops::Range<u32>, mut emit: impl FnMut(Fragment)) {
    let y_start = tri.y0.max(rows.start);
    let y_end = (tri.y1 + 1).min(rows.end);
    if y_start >= y_end {
        return;
    }
    let [x0, x1, x2] = tri.x;
    let [y0, y1, y2] = tri.y;
    // Edge k is opposite vertex k.
    let edges = [(x1, y1, x2, y2), (x2, y2, x0, y0), (x0, y0, x1, y1)];
    let bias = edges.map(|(ax, ay, bx, by)| if owns(ax, ay, bx, by) { 0 } else { -1 });
    let step_x = edges.map(|(_, ay, _, by)| -(by - ay) * ONE);
    let step_y = edges.map(|(ax, _, bx, _)| (bx - ax) * ONE);
    let px0 = tri.x0 as i64 * ONE + ONE / 2;
    let py0 = y_start as i64 * ONE + ONE / 2;
    let mut row = [0i64; 3];
    for k in 0..3 {
        let (ax, ay, bx, by) = edges[k];
        row[k] = edge(ax, ay, bx, by, px0, py0);
    }
    let inv_area = 1.0 / tri.area as f32;
    for y in y_start..y_end {
        let mut e = row;
        for x in tri.x0..=tri.x1 {
            if e[0] + bias[0] >= 0 && e[1] + bias[1] >= 0 && e[2] + bias[2] >= 0 {
                let l = [e[0] as f32 * inv_area, e[1] as f32 * inv_area, e[2] as f32 * inv_area];
                let iw = l[0] * tri.inv_w[0] + l[1] * tri.inv_w[1] + l[2] * tri.inv_w[2];
                let u = l[0] * tri.uv_w[0][0] + l[1] * tri.uv_w[1][0] + l[2] * tri.uv_w[2][0];
                let v = l[0] * tri.uv_w[0][1] + l[1] * tri.uv_w[1][1] + l[2] * tri.uv_w[2][1];
                emit(Fragment { x, y, inv_w: iw, uv: [u / iw, v / iw] });
            }
            for k in 0..3 {
                e[k] += step_x[k];
            }
        }
        for k in 0..3 {
            row[k] += step_y[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tri(pts: [(i64, i64); 3], w: u32, h: u32) -> Option<ScreenTri> {
        let mut x = pts.map(|p| p.0);
        let mut y = pts.map(|p| p.1);
        let mut area = edge(x[0], y[0], x[1], y[1], x[2], y[2]);
        if area == 0 {
            return None;
        }
        if area < 0 {
            x.swap(1, 2);
            y.swap(1, 2);
            area = -area;
        }
        let first = |lo: i64| (lo - ONE / 2 + ONE - 1).div_euclid(ONE);
        let last = |hi: i64| (hi - ONE / 2).div_euclid(ONE);
        let (x0, x1) = (first(*x.iter().min().unwrap()).max(0), last(*x.iter().max().unwrap()).min(w as i64 - 1));
        let (y0, y1) = (first(*y.iter().min().unwrap()).max(0), last(*y.iter().max().unwrap()).min(h as i64 - 1));
        if x0 > x1 || y0 > y1 {
            return None;
        }
        Some(ScreenTri {
            x,
            y,
            area,
            inv_w: [1.0; 3],
            uv_w: [[0.0; 2]; 3],
            x0: x0 as u32,
            x1: x1 as u32,
            y0: y0 as u32,
            y1: y1 as u32,
        })
    }

    fn coverage(t: &ScreenTri, w: u32, h: u32, counts: &mut [u32]) {
        scan(t, 0..h, |f| counts[(f.y * w + f.x) as usize] += 1);
    }

    // A fan of triangles around a shared center that tiles a quad must
    // cover each interior pixel exactly once, even with vertices and edges
    // landing exactly on pixel centers.
    #[test]
    fn shared_edges_are_watertight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (24u32, 24u32);
        for round in 0..200 {
            let snap = round % 2 == 0;
            let mut pick = |lo: i64, hi: i64| {
                let v = rng.gen_range(lo..hi);
                if snap {
                    v / ONE * ONE + ONE / 2
                } else {
                    v
                }
            };
            let c = (pick(8 * ONE, 16 * ONE), pick(8 * ONE, 16 * ONE));
            let corners = [(2 * ONE, 2 * ONE), (22 * ONE, 2 * ONE), (22 * ONE, 22 * ONE), (2 * ONE, 22 * ONE)];
            let mut counts = vec![0u32; (w * h) as usize];
            for k in 0..4 {
                if let Some(t) = tri([c, corners[k], corners[(k + 1) % 4]], w, h) {
                    coverage(&t, w, h, &mut counts);
                }
            }
            for y in 2..22 {
                for x in 2..22 {
                    let n = counts[(y * w + x) as usize];
                    assert_eq!(n, 1, "pixel ({x}, {y}) covered {n} times, center {c:?}");
                }
            }
        }
    }

    #[test]
    fn tiny_triangle_between_centers_is_empty() {
        assert!(tri([(10, 10), (100, 10), (10, 100)], 4, 4).is_none());
    }

    #[test]
    fn barycentrics_interpolate_linearly() {
        let mut t = tri([(0, 0), (8 * ONE, 0), (0, 8 * ONE)], 8, 8).unwrap();
        // Attribute u = pixel x coordinate / 8 at unit w.
        for k in 0..3 {
            t.uv_w[k] = [t.x[k] as f32 / ONE as f32 / 8.0, 0.0];
        }
        scan(&t, 0..8, |f| assert!((f.uv[0] - (f.x as f32 + 0.5) / 8.0).abs() < 1e-6));
    }
}
