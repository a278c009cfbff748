//! Ray / level-set intersection by fixed-step sign-change scan followed by
//! bisection. The scan interval is the ray's chord through the scene's
//! bounding sphere (clipped to `t >= 0`).

use crate::math::Vec3;

use super::scene::AnalyticScene;

pub const SCAN_STEPS: usize = 256;
pub const LEVEL_TOLERANCE: f64 = 1e-8;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub dir: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Self { origin, dir }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
}

/// `[near, far]` of the ray inside the bounding sphere, or `None`.
pub fn scan_interval(scene: &AnalyticScene, ray: &Ray) -> Option<(f64, f64)> {
    let oc = ray.origin - scene.center();
    let b = oc.dot(ray.dir);
    let c = oc.dot(oc) - scene.bound_radius() * scene.bound_radius();
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (near, far) = ((-b - s).max(0.0), -b + s);
    (far > near).then_some((near, far))
}

/// First crossing of layer `layer`'s level along the ray.
pub fn intersect_layer(scene: &AnalyticScene, ray: &Ray, layer: usize) -> Option<Vec3> {
    scan(scene, ray, &[layer]).pop().flatten().map(|h| h.point)
}

/// First crossing for every layer, sharing one scan. Identical to calling
/// [`intersect_layer`] per layer.
pub fn intersect_layers(scene: &AnalyticScene, ray: &Ray) -> Vec<Option<Hit>> {
    let all: Vec<usize> = (0..scene.layers()).collect();
    scan(scene, ray, &all)
}

fn scan(scene: &AnalyticScene, ray: &Ray, layers: &[usize]) -> Vec<Option<Hit>> {
    let mut out = vec![None; layers.len()];
    let Some((near, far)) = scan_interval(scene, ray) else {
        return out;
    };
    let step = (far - near) / SCAN_STEPS as f64;
    let f = |t: f64| scene.field_at(ray.at(t));
    let levels = scene.levels();
    let mut pending = layers.len();
    let mut t0 = near;
    let mut f0 = f(t0);
    for k in 1..=SCAN_STEPS {
        let t1 = near + step * k as f64;
        let f1 = f(t1);
        for (slot, &layer) in out.iter_mut().zip(layers) {
            if slot.is_some() {
                continue;
            }
            let level = levels[layer];
            if (f0 >= level) != (f1 >= level) {
                *slot = Some(bisect(&f, level, [(t0, f0), (t1, f1)], ray));
                pending -= 1;
            }
        }
        if pending == 0 {
            break;
        }
        t0 = t1;
        f0 = f1;
    }
    out
}

fn bisect(f: &impl Fn(f64) -> f64, level: f64, ends: [(f64, f64); 2], ray: &Ray) -> Hit {
    let [(mut lo, f_lo), (mut hi, f_hi)] = ends;
    let lo_above = f_lo >= level;
    let (mut best, mut best_g) = if (f_lo - level).abs() <= (f_hi - level).abs() {
        (lo, (f_lo - level).abs())
    } else {
        (hi, (f_hi - level).abs())
    };
    for _ in 0..MAX_BISECTIONS {
        if best_g <= LEVEL_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g = f(mid) - level;
        if g.abs() < best_g {
            best = mid;
            best_g = g.abs();
        }
        if (g >= 0.0) == lo_above {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Hit { t: best, point: ray.at(best) }
}
