//! Linear head over the concatenated pair encoding `[z_i, z_j]`.
//!
//! Label 1 means `t_i >= t_j`: the second program is faster or equivalent.

use crate::error::{Error, Result};
use crate::linalg::{dot, sigmoid};
use crate::params::Parameters;

/// Probabilities are clamped to `[EPS, 1 - EPS]` inside the loss.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// Length `2d`: first half weighs `z_i`, second half `z_j`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ClassifierParams {
    pub fn zeros(latent_dim: usize) -> Self {
        ClassifierParams {
            weight: vec![0.0; 2 * latent_dim],
            bias: vec![0.0],
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.weight.len() / 2
    }

    pub fn logit(&self, z_i: &[f64], z_j: &[f64]) -> Result<f64> {
        let d = self.latent_dim();
        if z_i.len() != d || z_j.len() != d {
            return Err(Error::Shape(format!(
                "pair encodings have lengths {} and {}, expected {d}",
                z_i.len(),
                z_j.len()
            )));
        }
        Ok(dot(&self.weight[..d], z_i) + dot(&self.weight[d..], z_j) + self.bias[0])
    }

    /// Accumulates the gradient of `dlogit · logit` into `self`.
    pub fn accumulate(&mut self, z_i: &[f64], z_j: &[f64], dlogit: f64) {
        let d = self.latent_dim();
        for (w, z) in self.weight[..d].iter_mut().zip(z_i) {
            *w += dlogit * z;
        }
        for (w, z) in self.weight[d..].iter_mut().zip(z_j) {
            *w += dlogit * z;
        }
        self.bias[0] += dlogit;
    }

    /// `(dlogit/dz_i, dlogit/dz_j)`.
    pub fn input_grads(&self, dlogit: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.latent_dim();
        (
            self.weight[..d].iter().map(|w| w * dlogit).collect(),
            self.weight[d..].iter().map(|w| w * dlogit).collect(),
        )
    }
}

impl Parameters for ClassifierParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![("classifier.w".into(), &self.weight), ("classifier.b".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// `σ(w · [z_i, z_j] + b)`.
pub fn predict_pair(params: &ClassifierParams, z_i: &[f64], z_j: &[f64]) -> Result<f64> {
    Ok(sigmoid(params.logit(z_i, z_j)?))
}

pub fn decide(probability: f64, threshold: f64) -> u8 {
    u8::from(probability >= threshold)
}

/// Binary cross-entropy and its gradient with respect to the pre-sigmoid
/// logit, `p - y`.
pub fn bce_loss(p: f64, y: u8) -> (f64, f64) {
    let pc = p.clamp(EPS, 1.0 - EPS);
    let yf = f64::from(y);
    let loss = -(yf * pc.ln() + (1.0 - yf) * (1.0 - pc).ln());
    (loss, p - yf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_half() {
        let c = ClassifierParams::zeros(3);
        assert_eq!(predict_pair(&c, &[1.0, 2.0, 3.0], &[-1.0, 0.0, 9.0]).unwrap(), 0.5);
    }

    #[test]
    fn antisymmetric_weights_cancel_on_equal_inputs() {
        let c = ClassifierParams {
            weight: vec![1.0, 1.0, -1.0, -1.0],
            bias: vec![0.0],
        };
        assert_eq!(predict_pair(&c, &[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.5);
    }

    #[test]
    fn scalar_example() {
        let c = ClassifierParams {
            weight: vec![2.0, -2.0],
            bias: vec![0.0],
        };
        let p = predict_pair(&c, &[1.0], &[0.0]).unwrap();
        assert!((p - 0.880797).abs() < 1e-6);
        assert!(predict_pair(&c, &[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn bce_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce_loss(0.5, 0).0 - ln2).abs() < 1e-12);
        assert!((bce_loss(0.5, 1).0 - ln2).abs() < 1e-12);
        assert!(bce_loss(1.0, 1).0 <= -(1.0 - EPS).ln() + 1e-15);
        assert!(bce_loss(0.0, 0).0 < 1e-11);
        assert!((bce_loss(0.9, 0).0 - 2.302585).abs() < 1e-6);
        assert!(bce_loss(0.0, 1).0.is_finite());
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        for &(logit, y) in &[(0.3, 1u8), (-1.7, 0u8), (2.5, 0u8), (0.0, 1u8)] {
            let h = 1e-6;
            let f = |z: f64| bce_loss(sigmoid(z), y).0;
            let fd = (f(logit + h) - f(logit - h)) / (2.0 * h);
            let (_, g) = bce_loss(sigmoid(logit), y);
            assert!((fd - g).abs() < 1e-8, "logit {logit}: {fd} vs {g}");
        }
    }

    #[test]
    fn threshold_decision() {
        assert_eq!(decide(0.5, 0.5), 1);
        assert_eq!(decide(0.49, 0.5), 0);
    }
}
