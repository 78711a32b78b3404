use serde::{Deserialize, Serialize};

use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    weights: Tensor,
    bias: Tensor,
}

impl LinearLayer {
    /// `weights` is `(Nout, Nin)`, `bias` is `(Nout)`.
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let (nout, _) = weights.hw()?;
        bias.ensure_shape(&[nout], "linear bias")?;
        if !weights.is_finite() || !bias.is_finite() {
            return Err(Error::invalid("linear parameters must be finite"));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weights, &mut self.bias]
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.len() != self.inputs() {
            return Err(Error::invalid(format!(
                "linear layer expects {} inputs, got {}",
                self.inputs(),
                input.len()
            )));
        }
        Ok(())
    }

    /// `W·x + b`; the input is read as a flat vector.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let x = input.data();
        let out = self
            .weights
            .data()
            .chunks_exact(self.inputs())
            .zip(self.bias.data())
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        Ok(Tensor::from_vec(out))
    }

    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<LayerGrads> {
        self.check_input(input)?;
        upstream.ensure_shape(&[self.outputs()], "linear upstream gradient")?;
        let nin = self.inputs();
        let x = input.data();
        let mut gw = vec![0.0; self.weights.len()];
        let mut gin = vec![0.0; nin];
        for ((grow, wrow), &u) in gw
            .chunks_exact_mut(nin)
            .zip(self.weights.data().chunks_exact(nin))
            .zip(upstream.data())
        {
            for ((g, &xv), (gi, &w)) in grow.iter_mut().zip(x).zip(gin.iter_mut().zip(wrow)) {
                *g = u * xv;
                *gi += w * u;
            }
        }
        Ok(LayerGrads {
            weights: Some(Tensor::new(self.weights.shape().to_vec(), gw)?),
            bias: Some(upstream.clone()),
            input: Tensor::new(input.shape().to_vec(), gin)?,
        })
    }
}
