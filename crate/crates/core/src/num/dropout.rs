//! Inverted-scaling dropout masks and DropConnect.
//!
//! Train-time masks carry the 1/(1-p) scale so inference is the identity.

use crate::num::tensor::{Scalar, Tensor};
use rand::Rng;

/// Bernoulli keep-mask with inverted scaling: entries are 0 with
/// probability `p`, else 1/(1-p). `p = 0` is all ones, `p = 1` all zeros.
pub fn dropout_mask<F: Scalar, R: Rng>(shape: &[usize], p: f64, rng: &mut R) -> Tensor<F> {
    let n: usize = shape.iter().product();
    if p <= 0.0 {
        return Tensor::full(shape, F::one());
    }
    if p >= 1.0 {
        return Tensor::zeros(shape);
    }
    let keep = F::of_f64(1.0 / (1.0 - p));
    let data = (0..n)
        .map(|_| if rng.gen::<f64>() < p { F::zero() } else { keep })
        .collect();
    Tensor::from_vec(shape, data).expect("mask shape")
}

/// DropConnect: zero individual weights with probability `p`, scaling
/// survivors by 1/(1-p). Identity at inference is the caller's branch.
pub fn dropconnect<F: Scalar, R: Rng>(weight: &Tensor<F>, p: f64, rng: &mut R) -> Tensor<F> {
    let mask = dropout_mask::<F, R>(weight.shape(), p, rng);
    let data = weight
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&w, &m)| w * m)
        .collect();
    Tensor::from_vec(weight.shape(), data).expect("weight shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::rng::RngTree;

    #[test]
    fn p_zero_is_identity() {
        let w = Tensor::<f32>::vector(vec![1.0, -2.0, 3.0]);
        let mut rng = RngTree::new(1).rng();
        assert_eq!(dropconnect(&w, 0.0, &mut rng), w);
    }

    #[test]
    fn p_one_is_all_zero() {
        let w = Tensor::<f32>::vector(vec![1.0, -2.0, 3.0]);
        let mut rng = RngTree::new(1).rng();
        let d = dropconnect(&w, 1.0, &mut rng);
        assert!(d.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_drop_rate_concentrates() {
        let w = Tensor::<f32>::full(&[100_000], 1.0);
        let mut rng = RngTree::new(42).child("dropconnect").rng();
        let d = dropconnect(&w, 0.5, &mut rng);
        let zeros = d.data().iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / 100_000.0;
        assert!((frac - 0.5).abs() < 0.01, "zero fraction {frac}");
        // survivors carry the inverted scale
        let kept = d.data().iter().find(|&&v| v != 0.0).unwrap();
        assert!((kept - 2.0).abs() < 1e-6);
    }
}
