//! A straight-line reimplementation of the forward pass, sharing nothing with
//! the library except the parameter values.

use super::{build, random_input, rng, small_config};
use lpnet::{Model, ModelConfig, PoolExponent};

type Map = Vec<Vec<Vec<f64>>>;

fn gaussian(k: usize) -> Vec<Vec<f64>> {
    let sigma = ((k as f64 - 1.0) / 4.0).max(0.25);
    let c = (k as f64 - 1.0) / 2.0;
    let mut g = vec![vec![0.0; k]; k];
    let mut total = 0.0;
    for (y, row) in g.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            let d2 = (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
            *v = (-d2 / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    for row in &mut g {
        for v in row {
            *v /= total;
        }
    }
    g
}

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
    j as usize
}

fn to_map(flat: &[f64], c: usize, h: usize, w: usize) -> Map {
    (0..c)
        .map(|ch| (0..h).map(|y| flat[(ch * h + y) * w..(ch * h + y + 1) * w].to_vec()).collect())
        .collect()
}

fn conv(x: &Map, weights: &[f64], bias: &[f64], k: usize) -> Map {
    let (cin, h, w) = (x.len(), x[0].len(), x[0][0].len());
    let cout = bias.len();
    let mut out = vec![vec![vec![0.0; w - k + 1]; h - k + 1]; cout];
    for o in 0..cout {
        for y in 0..h - k + 1 {
            for xx in 0..w - k + 1 {
                let mut s = bias[o];
                for i in 0..cin {
                    for a in 0..k {
                        for b in 0..k {
                            s += weights[((o * cin + i) * k + a) * k + b] * x[i][y + a][xx + b];
                        }
                    }
                }
                out[o][y][xx] = s;
            }
        }
    }
    out
}

fn tanh_map(x: &Map) -> Map {
    x.iter().map(|p| p.iter().map(|r| r.iter().map(|v| v.tanh()).collect()).collect()).collect()
}

fn pool(x: &Map, p: PoolExponent, k: usize, stride: usize) -> Map {
    let g = gaussian(k);
    let (h, w) = (x[0].len(), x[0][0].len());
    let (oh, ow) = ((h - k) / stride + 1, (w - k) / stride + 1);
    x.iter()
        .map(|plane| {
            (0..oh)
                .map(|oy| {
                    (0..ow)
                        .map(|ox| {
                            let cells = (0..k).flat_map(|a| (0..k).map(move |b| (a, b)));
                            match p {
                                PoolExponent::Infinity => cells
                                    .map(|(a, b)| plane[oy * stride + a][ox * stride + b].abs())
                                    .fold(0.0, f64::max),
                                PoolExponent::Finite(p) => cells
                                    .map(|(a, b)| g[a][b] * plane[oy * stride + a][ox * stride + b].abs().powf(p))
                                    .sum::<f64>()
                                    .powf(1.0 / p),
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn subtractive(x: &Map, k: usize) -> Map {
    let g = gaussian(k);
    let r = (k / 2) as isize;
    let (h, w) = (x[0].len(), x[0][0].len());
    x.iter()
        .map(|plane| {
            (0..h)
                .map(|y| {
                    (0..w)
                        .map(|xx| {
                            let mut mean = 0.0;
                            for a in 0..k {
                                for b in 0..k {
                                    let sy = mirror(y as isize + a as isize - r, h);
                                    let sx = mirror(xx as isize + b as isize - r, w);
                                    mean += g[a][b] * plane[sy][sx];
                                }
                            }
                            plane[y][xx] - mean
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn flatten(x: &Map) -> Vec<f64> {
    x.iter().flatten().flatten().copied().collect()
}

fn dense(x: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| b + (0..n).map(|i| weights[o * n + i] * x[i]).sum::<f64>())
        .collect()
}

pub fn oracle_logits(model: &Model, input: &[f64]) -> Vec<f64> {
    let c: &ModelConfig = model.config();
    let x = to_map(input, c.input_channels, c.input_size, c.input_size);
    let (pw, ps, nk) = (c.pool_window, c.pool_stride, c.norm_kernel);
    let n1 = subtractive(
        &pool(
            &tanh_map(&conv(&x, model.conv1().weights().data(), model.conv1().bias().data(), c.conv1_kernel)),
            c.pooling_p,
            pw,
            ps,
        ),
        nk,
    );
    let n2 = subtractive(
        &pool(
            &tanh_map(&conv(&n1, model.conv2().weights().data(), model.conv2().bias().data(), c.conv2_kernel)),
            c.pooling_p,
            pw,
            ps,
        ),
        nk,
    );
    let mut features = flatten(&n2);
    if c.multi_stage {
        features.extend(flatten(&pool(&n1, c.pooling_p, pw, ps)));
    }
    let hidden: Vec<f64> = dense(&features, model.fc1().weights().data(), model.fc1().bias().data())
        .into_iter()
        .map(f64::tanh)
        .collect();
    dense(&hidden, model.fc2().weights().data(), model.fc2().bias().data())
}

fn configs() -> Vec<ModelConfig> {
    let ps = [
        PoolExponent::Finite(1.0),
        PoolExponent::Finite(2.0),
        PoolExponent::Finite(3.0),
        PoolExponent::Finite(12.0),
        PoolExponent::Infinity,
    ];
    let mut out = Vec::new();
    for (i, p) in ps.into_iter().enumerate() {
        out.push(small_config(p, i % 2 == 0));
        out.push(ModelConfig { pool_window: 3, pool_stride: 1, multi_stage: i % 2 == 1, ..small_config(p, true) });
    }
    out
}

/// Largest logit difference over 50 seeded inputs and ten configurations.
pub fn max_oracle_gap() -> f64 {
    let mut worst: f64 = 0.0;
    let cfgs = configs();
    for i in 0..50 {
        let cfg = &cfgs[i % cfgs.len()];
        let model = build(cfg, 1000 + i as u64);
        let x = random_input(&mut rng(2000 + i as u64), &[3, 14, 14]);
        let got = model.forward(&x, None).unwrap().logits;
        let want = oracle_logits(&model, x.data());
        assert_eq!(got.len(), want.len());
        for (a, b) in got.data().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}
