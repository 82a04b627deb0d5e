use super::tensor::Mat;

/// Numerically stable `log softmax`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    assert!(label < logits.len(), "label {label} out of range for {} classes", logits.len());
    -log_softmax(logits)[label]
}

/// Gradient of [`cross_entropy`] with respect to the logits.
pub fn cross_entropy_grad(logits: &[f64], label: usize) -> Vec<f64> {
    let mut p = softmax(logits);
    p[label] -= 1.0;
    p
}

/// Mean cross-entropy over a batch of logit rows and the gradient of that
/// mean with respect to the logits.
pub fn batch_loss_grad(logits: &Mat, labels: impl IntoIterator<Item = usize>) -> (f64, Mat) {
    let n = logits.rows as f64;
    let mut grad = logits.zeros_like();
    let mut total = 0.0;
    for (i, label) in labels.into_iter().enumerate() {
        let z = logits.row(i);
        total += cross_entropy(z, label);
        for (g, v) in grad.row_mut(i).iter_mut().zip(cross_entropy_grad(z, label)) {
            *g = v / n;
        }
    }
    (total / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn uniform_logits_give_ln_c() {
        assert!((cross_entropy(&[0.3; 4], 2) - 4f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(&[0.0; 2], 0) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_logit() {
        let mut z = [0.0; 4];
        z[1] = 1e6;
        assert!(cross_entropy(&z, 1) < 1e-6);
        assert!(cross_entropy(&z, 0) > 1e5);
    }

    #[test]
    fn matches_naive_formula() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let label = rng.random_range(0..4);
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            let naive = -(z[label].exp() / denom).ln();
            assert!((cross_entropy(&z, label) - naive).abs() < 1e-12);
            let g = cross_entropy_grad(&z, label);
            assert!(g.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
