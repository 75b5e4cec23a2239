use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sewave::gradcheck::{check_random, GradTarget};
use sewave::nn::flow::flow_sample;
use sewave::nn::model::{block_stack, context, init_params};
use sewave::nn::{BlockParams, Flow, ModelConfig, ParamStore, Predictive, Tensor};
use sewave::stats::ks_distance;

fn random_flow(rng: &mut ChaCha8Rng, layers: usize, spread: f64) -> Flow {
    let raw: Vec<f64> = (0..4 * layers).map(|_| rng.gen_range(-spread..spread)).collect();
    Flow::from_raw(&raw).unwrap()
}

/// Simpson's rule on `n` (odd) equally spaced points.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / (n - 1) as f64;
    let mut s = f(a) + f(b);
    for i in 1..n - 1 {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Conditioner outputs near their zero initialisation keep the tails inside
/// the quadrature range; wider draws are covered by the CDF comparison below.
#[test]
fn flow_density_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..50 {
        let flow = random_flow(&mut rng, 1 + trial % 3, 0.1);
        let pred = Predictive::Flow { flow, scale: 1.0 };
        let mass = simpson(|r| pred.logpdf(r).exp(), -10.0, 10.0, 4001);
        assert!((mass - 1.0).abs() <= 1e-4, "trial {trial}: mass {mass}");
    }
}

#[test]
fn flow_density_matches_cdf_increment() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..30 {
        let flow = random_flow(&mut rng, 3, 1.5);
        let pred = Predictive::Flow { flow, scale: 1.0 };
        let mass = simpson(|r| pred.logpdf(r).exp(), -10.0, 10.0, 4001);
        let exact = pred.cdf(10.0) - pred.cdf(-10.0);
        assert!((mass - exact).abs() <= 1e-4, "trial {trial}: {mass} vs {exact}");
    }
}

#[test]
fn flow_inverse_on_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let flow = random_flow(&mut rng, 3, 2.0);
        for i in 0..=120 {
            let r = -6.0 + 0.1 * i as f64;
            let back = flow.forward(flow.inverse(r).0);
            assert!((back - r).abs() <= 1e-9, "{back} vs {r}");
        }
    }
}

#[test]
fn flow_samples_match_own_cdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..3 {
        let flow = random_flow(&mut rng, 3, 1.0);
        let pred = Predictive::Flow { flow, scale: 2.0 };
        let draws = pred.sample(100_000, rng.gen());
        let ks = ks_distance(|r| pred.cdf(r), &draws).unwrap();
        assert!(ks <= 0.02, "ks {ks}");
    }
}

#[test]
fn affine_pushforward_moments() {
    // log_scale = 3 tanh(raw / 3); pick raw so that the scale is exactly 2
    let raw = 3.0 * (2f64.ln() / 3.0).atanh();
    let flow = Flow::from_raw(&[1.0, raw, 0.0, 0.0]).unwrap();
    assert!((flow.layers[0].log_scale - 2f64.ln()).abs() < 1e-15);
    let x = Predictive::Flow { flow, scale: 1.0 }.sample(50_000, 3);
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    assert!((m - 1.0).abs() < 0.03, "mean {m}");
    assert!((sd - 2.0).abs() < 0.03, "std {sd}");
}

#[test]
fn identity_sampler_mean_bound() {
    let cfg = ModelConfig::default();
    let store = init_params(&cfg, 5).unwrap();
    let ctx = vec![0.3; cfg.n_filters];
    let n = 10_000;
    let x = flow_sample(&cfg, &store, 1, &ctx, 0.6, n, 9).unwrap();
    let m = x.iter().sum::<f64>() / n as f64;
    assert!(m.abs() <= 4.0 / (n as f64).sqrt());
}

#[test]
fn gradients_block_head_backbone() {
    for target in [GradTarget::Block, GradTarget::Head, GradTarget::Backbone] {
        for seed in 0..20 {
            let r = check_random(target, seed).unwrap();
            assert!(r.entries > 0);
            assert!(
                r.max_rel_error <= 1e-4,
                "{target:?} seed {seed} ({}): {} at {}",
                r.description,
                r.max_rel_error,
                r.worst
            );
        }
    }
}

#[test]
fn depth_zero_context_is_projected_last_step() {
    let cfg = ModelConfig {
        depth: 0,
        use_dwt: false,
        use_film: false,
        ..ModelConfig::default()
    };
    let store = init_params(&cfg, 2).unwrap();
    let window: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
    let c = context(&cfg, &store, &window, 0.5).unwrap();
    let w = store.get("input.w").unwrap();
    let b = store.get("input.b").unwrap();
    for (i, v) in c.iter().enumerate() {
        let expect = w.data[i] * window[31] + b.data[i];
        assert!((v - expect).abs() < 1e-15);
    }
}

#[test]
fn dwt_switch_keeps_context_width() {
    let window: Vec<f64> = (0..64).map(|i| (i as f64 * 0.11).cos()).collect();
    for use_dwt in [false, true] {
        let cfg = ModelConfig {
            use_dwt,
            ..ModelConfig::default()
        };
        let c = context(&cfg, &init_params(&cfg, 1).unwrap(), &window, 0.7).unwrap();
        assert_eq!(c.len(), cfg.n_filters);
    }
}

fn tied_context(store: &ParamStore, window: &[f64]) -> Vec<f64> {
    context(&ModelConfig::default(), store, window, 0.6).unwrap()
}

#[test]
fn shared_kernel_reaches_every_level() {
    let cfg = ModelConfig::default();
    let mut store = init_params(&cfg, 8).unwrap();
    let window: Vec<f64> = (0..128).map(|i| ((i * 7 % 13) as f64 - 6.0) / 4.0).collect();
    let before = tied_context(&store, &window);
    store.get_mut("block.shared.w_tanh").unwrap().data[0] += 0.5;
    let after = tied_context(&store, &window);
    assert!(before.iter().zip(&after).any(|(a, b)| a != b));
    let triples = store.names().filter(|n| n.ends_with(".w_tanh")).count();
    assert_eq!(triples, 1);
}

#[test]
fn untied_copies_reproduce_tied_pass() {
    let tied = ModelConfig::default();
    let untied = ModelConfig {
        weight_tied: false,
        ..tied.clone()
    };
    let t_store = init_params(&tied, 4).unwrap();
    let mut u_store = ParamStore::new();
    for (name, v) in t_store.iter() {
        match name.strip_prefix("block.shared.") {
            Some(rest) => {
                for l in 0..tied.depth {
                    u_store.insert(format!("block.{l}.{rest}"), v.clone());
                }
            }
            None => u_store.insert(name, v.clone()),
        }
    }
    let window: Vec<f64> = (0..128).map(|i| (i as f64 * 0.21).sin()).collect();
    let a = context(&tied, &t_store, &window, 0.65).unwrap();
    let b = context(&untied, &u_store, &window, 0.65).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12);
    }

    let x = Tensor::new(3, 64, (0..192).map(|i| (i as f64 * 0.05).sin()).collect());
    let blk = BlockParams::random(3, 3, 0.4, 6);
    let copies = [blk.clone(), blk.clone(), blk.clone()];
    let tied_out = block_stack(&x, &[&blk, &blk, &blk], &[1, 2, 4], None).unwrap();
    let untied_out = block_stack(&x, &copies.iter().collect::<Vec<_>>(), &[1, 2, 4], None).unwrap();
    assert!(tied_out.max_abs_diff(&untied_out) <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_round_trip_and_monotone(raw in proptest::collection::vec(-3.0f64..3.0, 12), y in -8.0f64..8.0) {
        let flow = Flow::from_raw(&raw).unwrap();
        let (z, _) = flow.inverse(y);
        prop_assert!((flow.forward(z) - y).abs() <= 1e-8 * (1.0 + y.abs()));
        prop_assert!(flow.cdf(y + 0.01) >= flow.cdf(y));
    }
}

