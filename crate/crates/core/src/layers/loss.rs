use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Softmax negative log-likelihood. Returns the per-sample energy
/// `log Σ exp(z) - z[target]` and its gradient `softmax(z) - onehot(target)`.
pub fn softmax_nll(logits: &Tensor, target: usize) -> Result<(f64, Tensor)> {
    let z = logits.data();
    if target >= z.len() {
        return Err(Error::invalid(format!(
            "target class {target} out of range for {} logits",
            z.len()
        )));
    }
    let shift = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - shift).exp()).collect();
    let total: f64 = exps.iter().sum();
    let energy = total.ln() + shift - z[target];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[target] -= 1.0;
    Ok((energy, Tensor::from_vec(grad)))
}
