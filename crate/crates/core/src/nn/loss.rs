//! Cross-entropy losses over activated outputs, with gradients taken all the
//! way back to the logits.
//!
//! Binary cross-entropy is the element-wise mean over output units.
//! Categorical cross-entropy first normalises the outputs to sum to one,
//! which is a no-op for softmax and makes a sigmoid head usable with it.
//! Probabilities are clamped to `[1e-7, 1 - 1e-7]`; a clamped entry passes
//! no gradient.

use std::fmt;
use std::str::FromStr;

use num_traits::Float;

use super::{Activation, NnError};

pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    BinaryCrossEntropy,
    CategoricalCrossEntropy,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::BinaryCrossEntropy => "binary_cross_entropy",
            LossKind::CategoricalCrossEntropy => "categorical_cross_entropy",
        })
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "binary_cross_entropy" | "bce" => Ok(LossKind::BinaryCrossEntropy),
            "categorical_cross_entropy" | "cce" => Ok(LossKind::CategoricalCrossEntropy),
            other => Err(format!("unknown loss '{other}'")),
        }
    }
}

fn clamp<T: Float>(p: T) -> (T, bool) {
    let lo = T::from(PROB_EPSILON).expect("epsilon representable");
    let hi = T::one() - lo;
    if p < lo {
        (lo, true)
    } else if p > hi {
        (hi, true)
    } else {
        (p, false)
    }
}

/// Loss and its gradient with respect to the output probabilities.
pub fn loss_and_prob_grad<T: Float>(probs: &[T], label: usize, loss: LossKind) -> Result<(T, Vec<T>), NnError> {
    let units = probs.len();
    if label >= units {
        return Err(NnError::Label { label, classes: units });
    }
    match loss {
        LossKind::BinaryCrossEntropy => {
            let n = T::from(units).expect("unit count representable");
            let mut total = T::zero();
            let grad = probs
                .iter()
                .enumerate()
                .map(|(u, &p)| {
                    let (pc, clipped) = clamp(p);
                    if u == label {
                        total = total - pc.ln();
                        if clipped { T::zero() } else { -T::one() / (pc * n) }
                    } else {
                        total = total - (T::one() - pc).ln();
                        if clipped { T::zero() } else { T::one() / ((T::one() - pc) * n) }
                    }
                })
                .collect();
            Ok((total / n, grad))
        }
        LossKind::CategoricalCrossEntropy => {
            let sum = probs.iter().copied().fold(T::zero(), |a, b| a + b);
            let q: Vec<T> = probs.iter().map(|&p| p / sum).collect();
            let (qc, clipped) = clamp(q[label]);
            let value = -qc.ln();
            if clipped {
                return Ok((value, vec![T::zero(); units]));
            }
            // dL/dq is -1/q at the label, zero elsewhere; push through q = p / sum.
            let dq = -T::one() / qc;
            let inner = dq * q[label];
            let grad = (0..units)
                .map(|i| {
                    let dqi = if i == label { dq } else { T::zero() };
                    (dqi - inner) / sum
                })
                .collect();
            Ok((value, grad))
        }
    }
}

/// Maps a gradient on activated outputs back to the logits.
pub fn activation_backward<T: Float>(probs: &[T], grad_probs: &[T], activation: Activation) -> Vec<T> {
    match activation {
        Activation::Softmax => {
            let inner = probs.iter().zip(grad_probs).fold(T::zero(), |a, (&p, &g)| a + p * g);
            probs.iter().zip(grad_probs).map(|(&p, &g)| p * (g - inner)).collect()
        }
        Activation::Sigmoid => probs.iter().zip(grad_probs).map(|(&p, &g)| g * p * (T::one() - p)).collect(),
        Activation::Relu => probs.iter().zip(grad_probs).map(|(&p, &g)| if p > T::zero() { g } else { T::zero() }).collect(),
        Activation::None => grad_probs.to_vec(),
    }
}

/// Loss and `dLoss/dLogits` for outputs produced by `activation`.
pub fn loss_and_grad<T: Float>(
    probs: &[T],
    label: usize,
    loss: LossKind,
    activation: Activation,
) -> Result<(T, Vec<T>), NnError> {
    let (value, grad_probs) = loss_and_prob_grad(probs, label, loss)?;
    Ok((value, activation_backward(probs, &grad_probs, activation)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_near_zero() {
        for loss in [LossKind::BinaryCrossEntropy, LossKind::CategoricalCrossEntropy] {
            let (v, g) = loss_and_grad(&[1.0f32, 0.0], 0, loss, Activation::Softmax).unwrap();
            assert!((0.0..=1.2e-7).contains(&v), "{loss}: {v}");
            assert!(g.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn uniform_binary_prediction() {
        let expected = -(0.5f64).ln();
        for loss in [LossKind::BinaryCrossEntropy, LossKind::CategoricalCrossEntropy] {
            let (v, _) = loss_and_grad(&[0.5f64, 0.5], 1, loss, Activation::Softmax).unwrap();
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn label_out_of_range() {
        let err = loss_and_grad(&[0.5f32, 0.5], 2, LossKind::BinaryCrossEntropy, Activation::Softmax);
        assert!(matches!(err, Err(NnError::Label { label: 2, classes: 2 })));
    }

    #[test]
    fn softmax_cce_gradient_is_p_minus_y() {
        let p = [0.2f64, 0.5, 0.3];
        let (_, g) = loss_and_grad(&p, 1, LossKind::CategoricalCrossEntropy, Activation::Softmax).unwrap();
        let expected = [0.2, -0.5, 0.3];
        for (a, b) in g.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
