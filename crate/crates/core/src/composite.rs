//! Ordered alpha compositing of layer samples, nearest layer first.

use crate::error::InputError;

#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pub rgb: [f64; 3],
    /// Product of `(1 - alpha)` over all layers.
    pub residual: f64,
    /// Per-layer contribution `alpha_i * prod_{j<i} (1 - alpha_j)`.
    pub weights: Vec<f64>,
}

/// Front-to-back accumulator used by both renderers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontToBack {
    pub rgb: [f64; 3],
    pub transmittance: f64,
}

impl Default for FrontToBack {
    fn default() -> Self {
        Self { rgb: [0.0; 3], transmittance: 1.0 }
    }
}

impl FrontToBack {
    /// Adds one layer behind everything accumulated so far and returns its weight.
    #[inline]
    pub fn push(&mut self, alpha: f64, rgb: [f64; 3]) -> f64 {
        let w = alpha * self.transmittance;
        for c in 0..3 {
            self.rgb[c] += w * rgb[c];
        }
        self.transmittance *= 1.0 - alpha;
        w
    }

    /// Final color over an opaque background.
    pub fn resolve(&self, background: [f64; 3]) -> [f64; 3] {
        let mut out = self.rgb;
        for c in 0..3 {
            out[c] += self.transmittance * background[c];
        }
        out
    }
}

pub fn composite(layers: &[(f64, [f64; 3])]) -> Result<Composite, InputError> {
    let mut acc = FrontToBack::default();
    let mut weights = Vec::with_capacity(layers.len());
    for &(alpha, rgb) in layers {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(InputError::OutOfRange { what: "alpha", value: alpha });
        }
        weights.push(acc.push(alpha, rgb));
    }
    Ok(Composite { rgb: acc.rgb, residual: acc.transmittance, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Back-to-front "over": C = a * c + (1 - a) * C_behind, starting from
    // an empty (zero, fully transmissive) background.
    fn over_back_to_front(layers: &[(f64, [f64; 3])]) -> ([f64; 3], f64) {
        let mut rgb = [0.0; 3];
        let mut trans = 1.0;
        for &(a, c) in layers.iter().rev() {
            for k in 0..3 {
                rgb[k] = a * c[k] + (1.0 - a) * rgb[k];
            }
            trans *= 1.0 - a;
        }
        (rgb, trans)
    }

    #[test]
    fn two_half_layers() {
        let out = composite(&[(0.5, [1.0; 3]), (0.5, [0.0; 3])]).unwrap();
        assert_eq!(out.weights, vec![0.5, 0.25]);
        assert_eq!(out.rgb, [0.5; 3]);
        assert_eq!(out.residual, 0.25);
    }

    #[test]
    fn opaque_front_occludes() {
        let out = composite(&[(1.0, [0.2; 3]), (0.7, [1.0; 3]), (0.3, [1.0; 3])]).unwrap();
        assert_eq!(out.weights, vec![1.0, 0.0, 0.0]);
        assert_eq!(out.residual, 0.0);
        assert_eq!(out.rgb, [0.2; 3]);
    }

    #[test]
    fn rejects_alpha_outside_unit_interval() {
        assert!(composite(&[(1.2, [0.0; 3])]).is_err());
        assert!(composite(&[(-0.1, [0.0; 3])]).is_err());
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_over_equivalence(
            layers in proptest::collection::vec((0.0f64..=1.0, proptest::array::uniform3(0.0f64..1.0)), 12)
        ) {
            let out = composite(&layers).unwrap();
            let total: f64 = out.weights.iter().sum::<f64>() + out.residual;
            prop_assert!((total - 1.0).abs() <= 1e-6);
            let (rgb, trans) = over_back_to_front(&layers);
            prop_assert!((trans - out.residual).abs() <= 1e-6);
            for c in 0..3 {
                prop_assert!((rgb[c] - out.rgb[c]).abs() <= 1e-6);
            }
        }
    }
}
