//! Layer-level finite-difference checks of `L = ⟨u, f(x)⟩` for a random `u`.

use super::{random_input, rel_error, rng, STEP};
use lpnet::layers::{
    softmax_nll, tanh_backward, tanh_forward, ConvLayer, LinearLayer, LpPoolConfig, PoolExponent, SubtractiveNorm,
};
use lpnet::tensor::{GaussianKernel, Tensor};

/// Five-point central difference of `f` at every coordinate of `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            let mut at = |d: f64| {
                probe[i] = orig + d;
                f(&probe)
            };
            let g = (at(-2.0 * STEP) - 8.0 * at(-STEP) + 8.0 * at(STEP) - at(2.0 * STEP)) / (12.0 * STEP);
            probe[i] = orig;
            g
        })
        .collect()
}

pub fn worst(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(&a, &n)| rel_error(a, n)).fold(0.0, f64::max)
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn with_data(t: &Tensor, v: &[f64]) -> Tensor {
    Tensor::new(t.shape().to_vec(), v.to_vec()).unwrap()
}

pub fn conv(seed: u64, cin: usize, cout: usize, k: usize, h: usize) -> f64 {
    let mut r = rng(seed);
    let w = random_input(&mut r, &[cout, cin, k, k]);
    let b = random_input(&mut r, &[cout]);
    let x = random_input(&mut r, &[cin, h, h]);
    let layer = ConvLayer::new(w.clone(), b.clone()).unwrap();
    let u = random_input(&mut r, layer.forward(&x).unwrap().shape());
    let g = layer.backward(&x, &u).unwrap();
    let loss = |w: &Tensor, b: &Tensor, x: &Tensor| dot(&u, &ConvLayer::new(w.clone(), b.clone()).unwrap().forward(x).unwrap());
    let gx = numeric_grad(x.data(), |v| loss(&w, &b, &with_data(&x, v)));
    let gw = numeric_grad(w.data(), |v| loss(&with_data(&w, v), &b, &x));
    let gb = numeric_grad(b.data(), |v| loss(&w, &with_data(&b, v), &x));
    worst(g.input.data(), &gx)
        .max(worst(g.weights.unwrap().data(), &gw))
        .max(worst(g.bias.unwrap().data(), &gb))
}

pub fn linear(seed: u64, nin: usize, nout: usize) -> f64 {
    let mut r = rng(seed);
    let w = random_input(&mut r, &[nout, nin]);
    let b = random_input(&mut r, &[nout]);
    let x = random_input(&mut r, &[nin]);
    let u = random_input(&mut r, &[nout]);
    let g = LinearLayer::new(w.clone(), b.clone()).unwrap().backward(&x, &u).unwrap();
    let loss =
        |w: &Tensor, b: &Tensor, x: &Tensor| dot(&u, &LinearLayer::new(w.clone(), b.clone()).unwrap().forward(x).unwrap());
    let gx = numeric_grad(x.data(), |v| loss(&w, &b, &with_data(&x, v)));
    let gw = numeric_grad(w.data(), |v| loss(&with_data(&w, v), &b, &x));
    let gb = numeric_grad(b.data(), |v| loss(&w, &with_data(&b, v), &x));
    worst(g.input.data(), &gx)
        .max(worst(g.weights.unwrap().data(), &gw))
        .max(worst(g.bias.unwrap().data(), &gb))
}

pub fn pool(seed: u64, p: PoolExponent, window: usize, stride: usize, h: usize) -> f64 {
    let mut r = rng(seed);
    let layer = LpPoolConfig::new(p, GaussianKernel::with_default_sigma(window).unwrap(), (stride, stride)).unwrap();
    let x = random_input(&mut r, &[2, h, h]);
    let y = layer.forward(&x).unwrap();
    let u = random_input(&mut r, y.shape());
    let g = layer.backward(&x, &y, &u).unwrap();
    let gx = numeric_grad(x.data(), |v| dot(&u, &layer.forward(&with_data(&x, v)).unwrap()));
    worst(g.input.data(), &gx)
}

pub fn norm(seed: u64, k: usize, h: usize) -> f64 {
    let mut r = rng(seed);
    let layer = SubtractiveNorm::new(GaussianKernel::with_default_sigma(k).unwrap()).unwrap();
    let x = random_input(&mut r, &[2, h, h]);
    let u = random_input(&mut r, &[2, h, h]);
    let g = layer.backward(&u).unwrap();
    let gx = numeric_grad(x.data(), |v| dot(&u, &layer.forward(&with_data(&x, v)).unwrap()));
    worst(g.input.data(), &gx)
}

pub fn tanh(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    let x = random_input(&mut r, &[n]);
    let u = random_input(&mut r, &[n]);
    let g = tanh_backward(&tanh_forward(&x), &u).unwrap();
    let gx = numeric_grad(x.data(), |v| dot(&u, &tanh_forward(&with_data(&x, v))));
    worst(g.input.data(), &gx)
}

pub fn loss(seed: u64, target: usize) -> f64 {
    let mut r = rng(seed);
    let z = random_input(&mut r, &[10]);
    let (_, g) = softmax_nll(&z, target).unwrap();
    let gz = numeric_grad(z.data(), |v| softmax_nll(&with_data(&z, v), target).unwrap().0);
    worst(g.data(), &gz)
}

/// Twenty seeded layer configurations: `(description, worst relative error)`.
pub fn layer_suite() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (i, (cin, cout, k, h)) in [(1, 2, 3, 6), (3, 4, 5, 9), (2, 3, 1, 4), (4, 2, 2, 7)].into_iter().enumerate() {
        out.push((format!("conv {cin}->{cout} k{k} on {h}x{h}"), conv(10 + i as u64, cin, cout, k, h)));
    }
    for (i, (nin, nout)) in [(5, 3), (12, 10), (1, 4)].into_iter().enumerate() {
        out.push((format!("linear {nin}->{nout}"), linear(20 + i as u64, nin, nout)));
    }
    let pools = [
        (PoolExponent::Finite(1.0), 2, 2, 8),
        (PoolExponent::Finite(2.0), 2, 2, 8),
        (PoolExponent::Finite(2.0), 3, 1, 7),
        (PoolExponent::Finite(3.5), 3, 2, 9),
        (PoolExponent::Finite(12.0), 2, 2, 6),
        (PoolExponent::Infinity, 2, 2, 6),
    ];
    for (i, (p, k, s, h)) in pools.into_iter().enumerate() {
        out.push((format!("pool p={p} k{k} s{s}"), pool(30 + i as u64, p, k, s, h)));
    }
    for (i, (k, h)) in [(3, 6), (5, 8), (7, 7)].into_iter().enumerate() {
        out.push((format!("subtractive norm k{k} on {h}x{h}"), norm(40 + i as u64, k, h)));
    }
    for (i, n) in [7, 30].into_iter().enumerate() {
        out.push((format!("tanh n={n}"), tanh(50 + i as u64, n)));
    }
    for (i, t) in [0, 7].into_iter().enumerate() {
        out.push((format!("softmax-nll target {t}"), loss(60 + i as u64, t)));
    }
    out
}
