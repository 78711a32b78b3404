use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Flattens both operands and joins them, `a` first.
pub fn concat_features(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a.data());
    out.extend_from_slice(b.data());
    Tensor::from_vec(out)
}

/// Splits an upstream gradient at `len_a`, the inverse of [`concat_features`].
pub fn split_features(upstream: &Tensor, len_a: usize) -> Result<(Tensor, Tensor)> {
    if len_a > upstream.len() {
        return Err(Error::invalid(format!(
            "split point {len_a} beyond length {}",
            upstream.len()
        )));
    }
    let (a, b) = upstream.data().split_at(len_a);
    Ok((Tensor::from_vec(a.to_vec()), Tensor::from_vec(b.to_vec())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_and_order() {
        let a = Tensor::filled(&[512, 4, 4], 1.0);
        let b = Tensor::filled(&[16, 7, 7], 2.0);
        let c = concat_features(&a, &b);
        assert_eq!(c.len(), 8976);
        assert_eq!(c.data()[8191], 1.0);
        assert_eq!(c.data()[8192], 2.0);
    }

    #[test]
    fn empty_second_operand() {
        let a = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(concat_features(&a, &Tensor::from_vec(vec![])), a);
    }

    #[test]
    fn split_returns_segments() {
        let up = Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let (a, b) = split_features(&up, 2).unwrap();
        assert_eq!(a.data(), &[1.0, 2.0]);
        assert_eq!(b.data(), &[3.0, 4.0, 5.0]);
        assert!(split_features(&up, 6).is_err());
    }
}
