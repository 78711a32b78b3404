use super::LayerGrads;
use crate::error::Result;
use crate::tensor::Tensor;

pub fn tanh_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.tanh());
    out
}

/// Uses the cached forward output: `∂out/∂in = 1 - out²`.
pub fn tanh_backward(output: &Tensor, upstream: &Tensor) -> Result<LayerGrads> {
    upstream.ensure_shape(output.shape(), "tanh upstream gradient")?;
    let mut gin = upstream.clone();
    for (g, o) in gin.data_mut().iter_mut().zip(output.data()) {
        *g *= 1.0 - o * o;
    }
    Ok(LayerGrads::input_only(gin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::gradcheck::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_values() {
        let out = tanh_forward(&Tensor::from_vec(vec![0.0, 1.0]));
        let g = tanh_backward(&out, &Tensor::from_vec(vec![1.0, 1.0])).unwrap().input;
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(g.data()[0], 1.0);
        assert_abs_diff_eq!(out.data()[1], 0.761594, epsilon = 1e-6);
        assert_abs_diff_eq!(g.data()[1], 0.419974, epsilon = 1e-6);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let up: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let out = tanh_forward(&Tensor::from_vec(x.clone()));
            let g = tanh_backward(&out, &Tensor::from_vec(up.clone())).unwrap().input;
            let num = numeric_grad(&x, |v| dot(tanh_forward(&Tensor::from_vec(v.to_vec())).data(), &up));
            assert!(max_rel_error(g.data(), &num) <= 1e-6);
        }
    }
}
