//! Pinhole camera shared by the rasterizer and the ray-traced oracle.
//!
//! Right-handed view frame: the camera looks down `-z`, `+y` is up.
//! Pixel `(0, 0)` is the top-left corner; pixel centers sit at `+0.5`.

use crate::error::InputError;
use crate::math::{Quat, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    position: Vec3,
    target: Vec3,
    up: Vec3,
    fov_y: f64,
    width: u32,
    height: u32,
    near: f64,
    far: f64,
    // Derived orthonormal frame.
    forward: Vec3,
    right: Vec3,
    true_up: Vec3,
}

/// A point after projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    /// Homogeneous clip coordinates `(x, y, z, w)`, OpenGL depth convention.
    pub clip: [f64; 4],
    /// Continuous pixel coordinates.
    pub pixel: [f64; 2],
    /// View-space distance along the optical axis (`w`).
    pub depth: f64,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        position: Vec3,
        target: Vec3,
        up: Vec3,
        fov_y: f64,
        width: u32,
        height: u32,
        near: f64,
        far: f64,
    ) -> Result<Self, InputError> {
        if !(position.is_finite() && target.is_finite() && up.is_finite()) {
            return Err(InputError::NonFinite("camera vectors"));
        }
        if !(fov_y > 0.0 && fov_y < std::f64::consts::PI) {
            return Err(InputError::OutOfRange { what: "field of view", value: fov_y });
        }
        if width == 0 || height == 0 {
            return Err(InputError::invalid("camera", "zero image size"));
        }
        if !(near > 0.0 && near < far && far.is_finite()) {
            return Err(InputError::invalid("camera", format!("need 0 < near < far, got {near}..{far}")));
        }
        let forward = (target - position)
            .normalized()
            .ok_or_else(|| InputError::invalid("camera", "position equals target"))?;
        let side = forward.cross(up);
        let right = match side.normalized() {
            Some(r) if side.length() > 1e-9 * up.length() => r,
            _ => return Err(InputError::invalid("camera", "up is parallel to the view direction")),
        };
        let true_up = right.cross(forward);
        Ok(Self { position, target, up, fov_y, width, height, near, far, forward, right, true_up })
    }

    /// Camera on a sphere around `center` looking at it; azimuth is measured
    /// from `+z` toward `+x`, elevation toward `+y`.
    pub fn orbit(
        center: Vec3,
        distance: f64,
        azimuth: f64,
        elevation: f64,
        fov_y: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, InputError> {
        let dir = Vec3::new(elevation.cos() * azimuth.sin(), elevation.sin(), elevation.cos() * azimuth.cos());
        Self::new(center + dir * distance, center, Vec3::Y, fov_y, width, height, 0.01, distance * 4.0 + 10.0)
    }

    /// Camera at `translation` whose orientation rotates the canonical frame
    /// (looking down `-z`, `+y` up); intrinsics are copied from `self`.
    pub fn with_pose(&self, translation: Vec3, rotation: Quat) -> Result<Self, InputError> {
        let q = rotation.normalized().ok_or(InputError::NonFinite("pose rotation"))?;
        let forward = q.rotate(-Vec3::Z);
        let up = q.rotate(Vec3::Y);
        Self::new(translation, translation + forward, up, self.fov_y, self.width, self.height, self.near, self.far)
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn target(&self) -> Vec3 {
        self.target
    }

    pub fn up(&self) -> Vec3 {
        self.up
    }

    pub fn forward(&self) -> Vec3 {
        self.forward
    }

    pub fn fov_y(&self) -> f64 {
        self.fov_y
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn near(&self) -> f64 {
        self.near
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    fn tan_half(&self) -> f64 {
        (self.fov_y * 0.5).tan()
    }

    fn aspect(&self) -> f64 {
        self.width as f64 / self.height as f64
    }

    /// World point to view space (camera at origin looking down `-z`).
    pub fn to_view(&self, p: Vec3) -> Vec3 {
        let d = p - self.position;
        Vec3::new(d.dot(self.right), d.dot(self.true_up), -d.dot(self.forward))
    }

    pub fn view_to_clip(&self, v: Vec3) -> [f64; 4] {
        let t = self.tan_half();
        let (n, f) = (self.near, self.far);
        [
            v.x / (t * self.aspect()),
            v.y / t,
            (f + n) / (n - f) * v.z + 2.0 * f * n / (n - f),
            -v.z,
        ]
    }

    pub fn clip_to_pixel(&self, clip: [f64; 4]) -> [f64; 2] {
        let nx = clip[0] / clip[3];
        let ny = clip[1] / clip[3];
        [(nx + 1.0) * 0.5 * self.width as f64, (1.0 - ny) * 0.5 * self.height as f64]
    }

    /// Standard perspective projection. Points behind the camera produce
    /// meaningless pixels; the rasterizer clips before dividing.
    pub fn project(&self, p: Vec3) -> Projected {
        let clip = self.view_to_clip(self.to_view(p));
        Projected { clip, pixel: self.clip_to_pixel(clip), depth: clip[3] }
    }

    /// Unit direction through the center of pixel `(x, y)`.
    pub fn primary_ray(&self, x: u32, y: u32) -> Vec3 {
        let t = self.tan_half();
        let nx = 2.0 * (x as f64 + 0.5) / self.width as f64 - 1.0;
        let ny = 1.0 - 2.0 * (y as f64 + 0.5) / self.height as f64;
        let d = self.forward + self.right * (nx * t * self.aspect()) + self.true_up * (ny * t);
        d / d.length()
    }
}
