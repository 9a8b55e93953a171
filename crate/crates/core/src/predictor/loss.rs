//! Ranking and regression losses with their gradients w.r.t. scores.

use super::pairs::Label;

/// Pairwise hinge: `max(0, -y * (s_a - s_b) + margin)`.
pub fn margin_ranking_loss(s_a: f64, s_b: f64, y: Label, margin: f64) -> f64 {
    (-y.sign() * (s_a - s_b) + margin).max(0.0)
}

/// Derivative of [`margin_ranking_loss`] w.r.t. `s_a` (the derivative
/// w.r.t. `s_b` is its negation). Zero on the flat side of the hinge,
/// including the kink.
pub fn margin_ranking_grad(s_a: f64, s_b: f64, y: Label, margin: f64) -> f64 {
    if -y.sign() * (s_a - s_b) + margin > 0.0 {
        -y.sign()
    } else {
        0.0
    }
}

/// `|prediction - target|`.
pub fn l1_loss(prediction: f64, target: f64) -> f64 {
    (prediction - target).abs()
}

/// Subgradient of [`l1_loss`] w.r.t. the prediction (0 at the kink).
pub fn l1_grad(prediction: f64, target: f64) -> f64 {
    if prediction > target {
        1.0
    } else if prediction < target {
        -1.0
    } else {
        0.0
    }
}

/// Regression target for a response length: `ln(1 + len)`.
pub fn pointwise_target(output_len: u32) -> f64 {
    (output_len as f64).ln_1p()
}

/// ListMLE negative log-likelihood of the permutation in which `scores`
/// are listed (first = ranked highest), with its gradient w.r.t. each score.
///
/// `nll = sum_i [ logsumexp(s_i..s_n) - s_i ]`
pub fn listmle_loss_and_grad(scores: &[f64]) -> (f64, Vec<f64>) {
    let n = scores.len();
    let mut grad = vec![0.0; n];
    if n == 0 {
        return (0.0, grad);
    }
    // Suffix log-sum-exp, computed back to front.
    let mut lse = vec![0.0; n];
    let mut acc = f64::NEG_INFINITY;
    for i in (0..n).rev() {
        acc = log_add_exp(acc, scores[i]);
        lse[i] = acc;
    }
    let loss = (0..n).map(|i| lse[i] - scores[i]).sum();
    // d/ds_j = sum_{i <= j} softmax over suffix i at j, minus 1.
    for j in 0..n {
        let mass: f64 = (0..=j).map(|i| (scores[j] - lse[i]).exp()).sum();
        grad[j] = mass - 1.0;
    }
    (loss, grad)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
