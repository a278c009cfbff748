//! View-dependent radiance from real spherical harmonics.
//!
//! Band 0 is folded into the stored diffuse color, so only the eight
//! band-1 and band-2 coefficients are evaluated here. Basis order:
//! `Y(1,-1) Y(1,0) Y(1,1) Y(2,-2) Y(2,-1) Y(2,0) Y(2,1) Y(2,2)`, real form
//! without the Condon-Shortley phase. Coefficients are stored
//! coefficient-major: `coeffs[m * 3 + channel]`.

use crate::error::InputError;
use crate::model::{SH_COEFFS, SH_TEXEL_LEN};

const C1: f64 = 0.488_602_511_902_919_9; // sqrt(3 / 4pi)
const C2: f64 = 1.092_548_430_592_079_2; // sqrt(15 / 4pi)
const C20: f64 = 0.315_391_565_252_520_05; // sqrt(5 / 16pi)
const C22: f64 = 0.546_274_215_296_039_6; // sqrt(15 / 16pi)

const NORM_TOLERANCE: f64 = 1e-6;

/// The eight band-1/band-2 basis values for a unit direction.
#[inline]
pub fn sh_basis(d: [f64; 3]) -> [f64; SH_COEFFS] {
    let [x, y, z] = d;
    [
        C1 * y,
        C1 * z,
        C1 * x,
        C2 * x * y,
        C2 * y * z,
        C20 * (3.0 * z * z - 1.0),
        C2 * x * z,
        C22 * (x * x - y * y),
    ]
}

/// `diffuse + sum_m coeffs[m] * Y_m(view_dir)`. Not clamped.
pub fn eval_sh(diffuse: [f64; 3], coeffs: &[f64], view_dir: [f64; 3]) -> Result<[f64; 3], InputError> {
    InputError::check_len("specular coefficients", SH_TEXEL_LEN, coeffs.len())?;
    let n = (view_dir[0] * view_dir[0] + view_dir[1] * view_dir[1] + view_dir[2] * view_dir[2]).sqrt();
    if !n.is_finite() || (n - 1.0).abs() > NORM_TOLERANCE {
        return Err(InputError::OutOfRange { what: "view direction norm", value: n });
    }
    let basis = sh_basis(view_dir);
    let mut rgb = diffuse;
    for (m, y) in basis.iter().enumerate() {
        for c in 0..3 {
            rgb[c] += coeffs[m * 3 + c] * y;
        }
    }
    Ok(rgb)
}

/// Rasterizer hot path; the direction is already normalized.
#[inline]
pub(crate) fn add_specular(rgb: &mut [f32; 3], coeffs: &[f32], basis: &[f64; SH_COEFFS]) {
    for (m, &y) in basis.iter().enumerate() {
        let y = y as f32;
        rgb[0] += coeffs[m * 3] * y;
        rgb[1] += coeffs[m * 3 + 1] * y;
        rgb[2] += coeffs[m * 3 + 2] * y;
    }
}
