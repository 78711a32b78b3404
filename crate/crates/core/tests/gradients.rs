mod common;

use common::*;
use lpnet::PoolExponent;

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for (i, p) in [1.0, 2.0, 3.5, 12.0].into_iter().enumerate() {
        for ms in [false, true] {
            let cfg = small_config(PoolExponent::Finite(p), ms);
            let model = build(&cfg, 10 + i as u64);
            let mut r = rng(100 + i as u64);
            let x = random_input(&mut r, &[3, 14, 14]);
            let err = model_grad_error(&model, &x, i * 3 % 10);
            assert!(err <= 1e-5, "p={p} ms={ms}: {err:e}");
        }
    }
}

#[test]
fn max_pooling_gradients_away_from_ties() {
    let model = build(&small_config(PoolExponent::Infinity, true), 3);
    let x = random_input(&mut rng(9), &[3, 14, 14]);
    let err = model_grad_error(&model, &x, 4);
    assert!(err <= 1e-5, "{err:e}");
}
