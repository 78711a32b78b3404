//! The two-stage ConvNet.
//!
//! ```text
//! input → conv1 → tanh → Lp pool → subtractive norm        (stage 1)
//!       → conv2 → tanh → Lp pool → subtractive norm        (stage 2)
//!       → flatten ─┬────────────────────────────────────┐
//!  MS only: stage 1 → Lp pool again → flatten ──────────┴→ concat → fc1 → tanh → fc2 → logits
//! ```
//!
//! In the multi-stage (MS) variant the classifier sees both stages; the
//! single-stage (SS) variant sees stage 2 only.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::container::{self, ContainerTensor};
use crate::error::{Error, Result};
use crate::layers::{
    concat_features, softmax_nll, split_features, tanh_backward, tanh_forward, ConvLayer,
    LinearLayer, LpPoolConfig, PoolExponent, SubtractiveNorm,
};
use crate::tensor::{GaussianKernel, Tensor};

pub const PARAM_NAMES: [&str; 8] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "fc1.weight",
    "fc1.bias",
    "fc2.weight",
    "fc2.bias",
];

const CONFIG_ENTRY: &str = "model_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub pooling_p: PoolExponent,
    pub multi_stage: bool,
    pub input_channels: usize,
    pub input_size: usize,
    pub stage1_features: usize,
    pub stage2_features: usize,
    pub hidden_units: usize,
    pub classes: usize,
    pub conv1_kernel: usize,
    pub conv2_kernel: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub norm_kernel: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            pooling_p: PoolExponent::Finite(2.0),
            multi_stage: true,
            input_channels: 3,
            input_size: 32,
            stage1_features: 16,
            stage2_features: 512,
            hidden_units: 20,
            classes: 10,
            conv1_kernel: 5,
            conv2_kernel: 7,
            pool_window: 2,
            pool_stride: 2,
            norm_kernel: 5,
            seed: 0,
        }
    }
}

/// Ordered `(layer, output shape)` pairs for a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapePlan {
    pub layers: Vec<(String, Vec<usize>)>,
}

impl ShapePlan {
    pub fn get(&self, layer: &str) -> Option<&[usize]> {
        self.layers
            .iter()
            .find(|(name, _)| name == layer)
            .map(|(_, s)| s.as_slice())
    }

    pub fn classifier_input(&self) -> usize {
        self.get("classifier_input").map_or(0, |s| s[0])
    }
}

fn bad(layer: &str, message: String) -> Error {
    Error::InvalidConfiguration {
        layer: layer.to_string(),
        message,
    }
}

fn conv_extent(layer: &str, size: usize, k: usize) -> Result<usize> {
    if k == 0 || k > size {
        return Err(bad(layer, format!("kernel {k} does not fit input extent {size}")));
    }
    Ok(size - k + 1)
}

fn pool_extent(layer: &str, size: usize, window: usize, stride: usize) -> Result<usize> {
    if window == 0 || stride == 0 || window > size {
        return Err(bad(
            layer,
            format!("window {window} / stride {stride} does not fit input extent {size}"),
        ));
    }
    if (size - window) % stride != 0 {
        return Err(bad(
            layer,
            format!(
                "({size} - {window}) / {stride} is not an integer, pooling would drop border samples"
            ),
        ));
    }
    Ok((size - window) / stride + 1)
}

fn norm_fits(layer: &str, size: usize, k: usize) -> Result<()> {
    if k % 2 == 0 || k / 2 >= size {
        return Err(bad(
            layer,
            format!("normalization kernel {k} needs odd size with half-width below extent {size}"),
        ));
    }
    Ok(())
}

pub fn shape_plan(config: &ModelConfig) -> Result<ShapePlan> {
    let c = config;
    for (name, v) in [
        ("input", c.input_channels),
        ("input", c.input_size),
        ("conv1", c.stage1_features),
        ("conv2", c.stage2_features),
        ("fc1", c.hidden_units),
        ("fc2", c.classes),
    ] {
        if v == 0 {
            return Err(bad(name, "extent must be positive".into()));
        }
    }
    let (f1, f2) = (c.stage1_features, c.stage2_features);
    let mut layers = vec![("input".to_string(), vec![c.input_channels, c.input_size, c.input_size])];
    let mut push = |name: &str, shape: Vec<usize>| layers.push((name.to_string(), shape));

    let s = conv_extent("conv1", c.input_size, c.conv1_kernel)?;
    push("conv1", vec![f1, s, s]);
    let s1 = pool_extent("pool1", s, c.pool_window, c.pool_stride)?;
    push("pool1", vec![f1, s1, s1]);
    norm_fits("norm1", s1, c.norm_kernel)?;
    push("norm1", vec![f1, s1, s1]);
    let s = conv_extent("conv2", s1, c.conv2_kernel)?;
    push("conv2", vec![f2, s, s]);
    let s2 = pool_extent("pool2", s, c.pool_window, c.pool_stride)?;
    push("pool2", vec![f2, s2, s2]);
    norm_fits("norm2", s2, c.norm_kernel)?;
    push("norm2", vec![f2, s2, s2]);
    let mut width = f2 * s2 * s2;
    push("flatten", vec![width]);
    if c.multi_stage {
        let sb = pool_extent("branch_pool", s1, c.pool_window, c.pool_stride)?;
        push("branch_pool", vec![f1, sb, sb]);
        push("branch_flatten", vec![f1 * sb * sb]);
        width += f1 * sb * sb;
    }
    push("classifier_input", vec![width]);
    push("fc1", vec![c.hidden_units]);
    push("fc2", vec![c.classes]);
    Ok(ShapePlan { layers })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    plan: ShapePlan,
    conv1: ConvLayer,
    conv2: ConvLayer,
    fc1: LinearLayer,
    fc2: LinearLayer,
    pool: LpPoolConfig,
    norm: SubtractiveNorm,
    generation: u64,
}

/// Every intermediate needed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) generation: u64,
    pub(crate) input: Tensor,
    pub(crate) t1: Tensor,
    pub(crate) p1: Tensor,
    pub(crate) n1: Tensor,
    pub(crate) t2: Tensor,
    pub(crate) p2: Tensor,
    pub(crate) branch: Option<Tensor>,
    pub(crate) features: Tensor,
    pub(crate) hidden: Tensor,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub energy: Option<f64>,
    pub loss_grad: Option<Tensor>,
    pub cache: ForwardCache,
}

/// Parameter gradients in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub tensors: Vec<Tensor>,
}

impl ModelGrads {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            tensors: model.params().iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive extents")
}

/// Parameters uniform on ±sqrt(1/fan_in), biases zero; deterministic in `seed`.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    let plan = shape_plan(config)?;
    let c = config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k1 = c.conv1_kernel;
    let k2 = c.conv2_kernel;
    let conv1 = ConvLayer::new(
        uniform(&mut rng, &[c.stage1_features, c.input_channels, k1, k1], c.input_channels * k1 * k1),
        Tensor::zeros(&[c.stage1_features]),
    )?;
    let conv2 = ConvLayer::new(
        uniform(&mut rng, &[c.stage2_features, c.stage1_features, k2, k2], c.stage1_features * k2 * k2),
        Tensor::zeros(&[c.stage2_features]),
    )?;
    let nin = plan.classifier_input();
    let fc1 = LinearLayer::new(
        uniform(&mut rng, &[c.hidden_units, nin], nin),
        Tensor::zeros(&[c.hidden_units]),
    )?;
    let fc2 = LinearLayer::new(
        uniform(&mut rng, &[c.classes, c.hidden_units], c.hidden_units),
        Tensor::zeros(&[c.classes]),
    )?;
    Model::from_layers(config.clone(), conv1, conv2, fc1, fc2)
}

impl Model {
    pub fn from_layers(
        config: ModelConfig,
        conv1: ConvLayer,
        conv2: ConvLayer,
        fc1: LinearLayer,
        fc2: LinearLayer,
    ) -> Result<Self> {
        let plan = shape_plan(&config)?;
        let pool = LpPoolConfig::new(
            config.pooling_p,
            GaussianKernel::with_default_sigma(config.pool_window)?,
            (config.pool_stride, config.pool_stride),
        )?;
        let norm = SubtractiveNorm::new(GaussianKernel::with_default_sigma(config.norm_kernel)?)?;
        let c = &config;
        let expect = [
            vec![c.stage1_features, c.input_channels, c.conv1_kernel, c.conv1_kernel],
            vec![c.stage1_features],
            vec![c.stage2_features, c.stage1_features, c.conv2_kernel, c.conv2_kernel],
            vec![c.stage2_features],
            vec![c.hidden_units, plan.classifier_input()],
            vec![c.hidden_units],
            vec![c.classes, c.hidden_units],
            vec![c.classes],
        ];
        let model = Self {
            config,
            plan,
            conv1,
            conv2,
            fc1,
            fc2,
            pool,
            norm,
            generation: 0,
        };
        for ((p, shape), name) in model.params().iter().zip(&expect).zip(PARAM_NAMES) {
            if p.shape() != shape.as_slice() {
                return Err(bad(
                    name,
                    format!("parameter shape {:?}, configuration needs {shape:?}", p.shape()),
                ));
            }
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn plan(&self) -> &ShapePlan {
        &self.plan
    }

    pub fn conv1(&self) -> &ConvLayer {
        &self.conv1
    }

    pub fn conv2(&self) -> &ConvLayer {
        &self.conv2
    }

    pub fn fc1(&self) -> &LinearLayer {
        &self.fc1
    }

    pub fn fc2(&self) -> &LinearLayer {
        &self.fc2
    }

    pub fn pool(&self) -> &LpPoolConfig {
        &self.pool
    }

    pub fn norm(&self) -> &SubtractiveNorm {
        &self.norm
    }

    pub fn params(&self) -> [&Tensor; 8] {
        [
            self.conv1.weights(),
            self.conv1.bias(),
            self.conv2.weights(),
            self.conv2.bias(),
            self.fc1.weights(),
            self.fc1.bias(),
            self.fc2.weights(),
            self.fc2.bias(),
        ]
    }

    /// Mutable parameter access. Invalidates every outstanding forward cache.
    pub fn params_mut(&mut self) -> [&mut Tensor; 8] {
        self.generation += 1;
        let [a, b] = self.conv1.params_mut();
        let [c, d] = self.conv2.params_mut();
        let [e, f] = self.fc1.params_mut();
        let [g, h] = self.fc2.params_mut();
        [a, b, c, d, e, f, g, h]
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check(&self, layer: &str, t: &Tensor) -> Result<()> {
        match self.plan.get(layer) {
            Some(s) if s == t.shape() => Ok(()),
            other => Err(Error::InvalidState(format!(
                "layer {layer} produced {:?}, plan says {other:?}",
                t.shape()
            ))),
        }
    }

    pub fn forward(&self, input: &Tensor, target: Option<usize>) -> Result<ForwardOutput> {
        let plan_input = self.plan.get("input").unwrap_or(&[]);
        input.ensure_shape(plan_input, "model input")?;

        let c1 = self.conv1.forward(input)?;
        self.check("conv1", &c1)?;
        let t1 = tanh_forward(&c1);
        let p1 = self.pool.forward(&t1)?;
        self.check("pool1", &p1)?;
        let n1 = self.norm.forward(&p1)?;

        let c2 = self.conv2.forward(&n1)?;
        self.check("conv2", &c2)?;
        let t2 = tanh_forward(&c2);
        let p2 = self.pool.forward(&t2)?;
        self.check("pool2", &p2)?;
        let n2 = self.norm.forward(&p2)?;

        let branch = if self.config.multi_stage {
            let b = self.pool.forward(&n1)?;
            self.check("branch_pool", &b)?;
            Some(b)
        } else {
            None
        };
        let features = match &branch {
            Some(b) => concat_features(&n2, b),
            None => n2.flatten(),
        };
        self.check("classifier_input", &features)?;
        let hidden = tanh_forward(&self.fc1.forward(&features)?);
        let logits = self.fc2.forward(&hidden)?;
        self.check("fc2", &logits)?;

        let (energy, loss_grad) = match target {
            Some(t) => {
                let (e, g) = softmax_nll(&logits, t)?;
                (Some(e), Some(g))
            }
            None => (None, None),
        };
        Ok(ForwardOutput {
            logits,
            energy,
            loss_grad,
            cache: ForwardCache {
                generation: self.generation,
                input: input.clone(),
                t1,
                p1,
                n1,
                t2,
                p2,
                branch,
                features,
                hidden,
            },
        })
    }

    /// Gradients of the energy for the given `∂E/∂logits`.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &Tensor) -> Result<ModelGrads> {
        if cache.generation != self.generation {
            return Err(Error::InvalidState(format!(
                "forward cache from parameter generation {} used at generation {}",
                cache.generation, self.generation
            )));
        }
        if cache.branch.is_some() != self.config.multi_stage {
            return Err(Error::InvalidState("forward cache from a different variant".into()));
        }
        let g_fc2 = self.fc2.backward(&cache.hidden, loss_grad)?;
        let dh = tanh_backward(&cache.hidden, &g_fc2.input)?.input;
        let g_fc1 = self.fc1.backward(&cache.features, &dh)?;

        let p2_shape = cache.p2.shape().to_vec();
        let (d_n2, d_branch) = split_features(&g_fc1.input, cache.p2.len())?;
        let d_p2 = self.norm.backward(&d_n2.reshape(&p2_shape)?)?.input;
        let d_t2 = self.pool.backward(&cache.t2, &cache.p2, &d_p2)?.input;
        let d_c2 = tanh_backward(&cache.t2, &d_t2)?.input;
        let g_conv2 = self.conv2.backward(&cache.n1, &d_c2)?;

        let mut d_n1 = g_conv2.input.clone();
        if let Some(branch) = &cache.branch {
            let d_b = d_branch.reshape(branch.shape())?;
            let via_branch = self.pool.backward(&cache.n1, branch, &d_b)?.input;
            for (a, b) in d_n1.data_mut().iter_mut().zip(via_branch.data()) {
                *a += b;
            }
        }
        let d_p1 = self.norm.backward(&d_n1)?.input;
        let d_t1 = self.pool.backward(&cache.t1, &cache.p1, &d_p1)?.input;
        let d_c1 = tanh_backward(&cache.t1, &d_t1)?.input;
        let g_conv1 = self.conv1.backward(&cache.input, &d_c1)?;

        let take = |g: crate::layers::LayerGrads| -> [Tensor; 2] {
            [g.weights.expect("weights"), g.bias.expect("bias")]
        };
        let mut tensors = Vec::with_capacity(8);
        for g in [g_conv1, g_conv2, g_fc1, g_fc2] {
            tensors.extend(take(g));
        }
        Ok(ModelGrads { tensors })
    }

    /// Forward + backward for one labelled sample.
    pub fn energy_and_grads(&self, input: &Tensor, target: usize) -> Result<(f64, ModelGrads)> {
        let out = self.forward(input, Some(target))?;
        let grads = self.backward(&out.cache, out.loss_grad.as_ref().expect("target given"))?;
        Ok((out.energy.expect("target given"), grads))
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let cfg = serde_json::to_vec(&self.config)
            .map_err(|e| Error::invalid(format!("serializing model config: {e}")))?;
        let mut entries = vec![ContainerTensor::u8(CONFIG_ENTRY, vec![cfg.len()], cfg)];
        for (name, p) in PARAM_NAMES.iter().zip(self.params()) {
            entries.push(ContainerTensor::f64(name, p.shape().to_vec(), p.data().to_vec()));
        }
        container::write_file(path, &entries)
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let entries = container::read_file(path)?;
        let find = |name: &str| {
            entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::format(0, format!("checkpoint has no `{name}` entry")))
        };
        let cfg_bytes = find(CONFIG_ENTRY)?.as_u8()?;
        let config: ModelConfig = serde_json::from_slice(cfg_bytes)
            .map_err(|e| Error::format(0, format!("bad model config: {e}")))?;
        let mut params = Vec::with_capacity(8);
        for name in PARAM_NAMES {
            let e = find(name)?;
            params.push(Tensor::new(e.dims.clone(), e.to_f64())?);
        }
        let mut it = params.into_iter();
        let mut next = || it.next().expect("eight parameters");
        let conv1 = ConvLayer::new(next(), next())?;
        let conv2 = ConvLayer::new(next(), next())?;
        let fc1 = LinearLayer::new(next(), next())?;
        let fc2 = LinearLayer::new(next(), next())?;
        Model::from_layers(config, conv1, conv2, fc1, fc2)
    }
}
