//! Losses and regularizers. All arithmetic is double precision; callers cast
//! the resulting gradients to the network's element type.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairLabel {
    /// y = 0: both signals come from the same account.
    Same,
    /// y = 1: the signals come from different accounts.
    Different,
}

impl PairLabel {
    pub fn y(self) -> f64 {
        match self {
            PairLabel::Same => 0.0,
            PairLabel::Different => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairLossParams {
    pub margin: f64,
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairLoss {
    pub value: f64,
    pub grad1: Vec<f64>,
    pub grad2: Vec<f64>,
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

pub const CE_FLOOR: f64 = 1e-12;

/// Cross-entropy of softmax probabilities against `label`, with the gradient
/// with respect to the logits.
pub fn cross_entropy(probs: &[f64], label: usize) -> (f64, Vec<f64>) {
    let loss = -probs[label].max(CE_FLOOR).ln();
    let mut grad = probs.to_vec();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Penalty for components whose magnitude exceeds `p`.
pub fn regularizer_p(z: &[f64], p: f64) -> f64 {
    z.iter().map(|v| (v.abs() - p).max(0.0)).sum()
}

/// Penalty for components whose magnitude is below `q`.
pub fn regularizer_q(z: &[f64], q: f64) -> f64 {
    z.iter().map(|v| (q - v.abs()).max(0.0)).sum()
}

fn sign_or_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn regularizer_grad(z: f64, prm: &PairLossParams) -> f64 {
    let a = z.abs();
    let mut g = 0.0;
    if a > prm.p {
        g += prm.alpha * sign_or_zero(z);
    }
    if a < prm.q {
        g -= prm.beta * sign_or_zero(z);
    }
    g
}

/// Contrastive pair loss (Euclidean distance, not squared) plus the p/q
/// magnitude regularizers on both projections.
///
/// Kinks take the zero-side subgradient: the distance gradient vanishes at
/// zero distance, the hinge at exactly `margin`, the regularizers at exactly
/// `p`, `q` and `0`.
pub fn pairwise(z1: &[f64], z2: &[f64], label: PairLabel, prm: &PairLossParams) -> PairLoss {
    assert_eq!(z1.len(), z2.len(), "projection widths differ");
    let diff: Vec<f64> = z1.iter().zip(z2).map(|(a, b)| a - b).collect();
    let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();

    let (pair_term, coef) = match label {
        PairLabel::Same => (dist, if dist > 0.0 { 1.0 / dist } else { 0.0 }),
        PairLabel::Different => {
            let slack = prm.margin - dist;
            if slack > 0.0 {
                (slack, if dist > 0.0 { -1.0 / dist } else { 0.0 })
            } else {
                (0.0, 0.0)
            }
        }
    };
    let value = pair_term
        + prm.alpha * (regularizer_p(z1, prm.p) + regularizer_p(z2, prm.p))
        + prm.beta * (regularizer_q(z1, prm.q) + regularizer_q(z2, prm.q));

    let grad1 = diff
        .iter()
        .zip(z1)
        .map(|(d, &z)| coef * d + regularizer_grad(z, prm))
        .collect();
    let grad2 = diff
        .iter()
        .zip(z2)
        .map(|(d, &z)| -coef * d + regularizer_grad(z, prm))
        .collect();
    PairLoss {
        value,
        grad1,
        grad2,
    }
}
