//! Finite-difference verification of the analytic gradients of the residual
//! block, the density heads and the full training loss.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::nn::flow::{head_logpdf_on_tape, head_raw_on_tape};
use crate::nn::model::{head_prefix, init_params, residual_block, Bound, BoundBlock};
use crate::nn::{HeadKind, ModelConfig, ParamStore, SpecLossMode, Tape, Tensor};
use crate::pipeline::train::{loss_and_grads, StepItem};
use crate::spectral::MIN_LOSS_SEGMENT;

pub const FD_STEP: f64 = 1e-4;
/// Denominator floor of the relative error, so that near-zero gradients are
/// judged on absolute error.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradTarget {
    /// One gated residual block with FiLM, against a random linear readout.
    Block,
    /// Conditioner and flow (or Gaussian) head log density.
    Head,
    /// Training loss through the whole network.
    Backbone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub target: GradTarget,
    pub description: String,
    pub entries: usize,
    pub max_rel_error: f64,
    /// `name[index]` of the worst entry.
    pub worst: String,
}

/// Central differences of `loss` over every entry of `params`, compared
/// with `analytic`.
pub fn finite_difference(
    params: &ParamStore,
    analytic: &BTreeMap<String, Vec<f64>>,
    loss: impl Fn(&ParamStore) -> Result<f64>,
) -> Result<(usize, f64, String)> {
    let mut p = params.clone();
    let (mut entries, mut max_rel, mut worst) = (0, 0.0f64, String::new());
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let a = analytic
            .get(&name)
            .ok_or_else(|| invalid(format!("no analytic gradient for {name}")))?;
        for i in 0..a.len() {
            let orig = p.get(&name)?.data[i];
            p.get_mut(&name).expect("present").data[i] = orig + FD_STEP;
            let up = loss(&p)?;
            p.get_mut(&name).expect("present").data[i] = orig - FD_STEP;
            let down = loss(&p)?;
            p.get_mut(&name).expect("present").data[i] = orig;
            let num = (up - down) / (2.0 * FD_STEP);
            let rel = (a[i] - num).abs() / a[i].abs().max(num.abs()).max(REL_FLOOR);
            entries += 1;
            if rel > max_rel || worst.is_empty() {
                max_rel = max_rel.max(rel);
                worst = format!("{name}[{i}]");
            }
        }
    }
    Ok((entries, max_rel, worst))
}

fn perturbed(store: &ParamStore, std: f64, rng: &mut ChaCha8Rng) -> ParamStore {
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut out = ParamStore::new();
    for (name, t) in store.iter() {
        let data = t.data.iter().map(|v| v + normal.sample(rng)).collect();
        out.insert(name, Tensor::new(t.rows, t.cols, data));
    }
    out
}

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

fn random_config(rng: &mut ChaCha8Rng) -> ModelConfig {
    ModelConfig {
        depth: rng.gen_range(1..=3),
        n_filters: rng.gen_range(2..=4),
        kernel_size: rng.gen_range(2..=3),
        flow_layers: rng.gen_range(1..=3),
        weight_tied: rng.gen(),
        use_dwt: rng.gen(),
        use_film: rng.gen(),
        head: if rng.gen_bool(0.75) { HeadKind::Flow } else { HeadKind::Gaussian },
        spec_loss: SpecLossMode::Off,
        ..ModelConfig::default()
    }
}

fn check_block(rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let (n, k) = (rng.gen_range(2..=4), rng.gen_range(2..=3));
    let d = 1 << rng.gen_range(0..3);
    let len = rng.gen_range(12..=20);
    let out_len = len - (k - 1) * d;
    let mut store = ParamStore::new();
    for (name, rows, cols) in [
        ("w_tanh", n, n * k),
        ("b_tanh", n, 1),
        ("w_sig", n, n * k),
        ("b_sig", n, 1),
        ("w_out", n, n),
        ("b_out", n, 1),
        ("gamma", n, 1),
        ("beta", n, 1),
    ] {
        store.insert(name, Tensor::new(rows, cols, noise(rng, rows * cols)));
    }
    let x = Tensor::new(n, len, noise(rng, n * len));
    let readout = Tensor::new(n, out_len, noise(rng, n * out_len));
    let forward = |p: &ParamStore, tape: &mut Tape| -> Result<(Bound, crate::nn::Var)> {
        let bound = Bound::new(tape, p, true);
        let b = BoundBlock {
            w_tanh: bound.get("w_tanh")?,
            b_tanh: bound.get("b_tanh")?,
            w_sig: bound.get("w_sig")?,
            b_sig: bound.get("b_sig")?,
            w_out: bound.get("w_out")?,
            b_out: bound.get("b_out")?,
            taps: k,
        };
        let xv = tape.constant(x.clone());
        let film = Some((bound.get("gamma")?, bound.get("beta")?));
        let y = residual_block(tape, xv, &b, d, out_len, film);
        let r = tape.constant(readout.clone());
        let prod = tape.mul(y, r);
        Ok((bound, tape.sum(prod)))
    };
    let mut tape = Tape::new();
    let (bound, root) = forward(&store, &mut tape)?;
    let g = tape.backward(root);
    let analytic = bound.gradients(&tape, &g);
    let (entries, max_rel, worst) = finite_difference(&store, &analytic, |p| {
        let mut t = Tape::new();
        let (_, r) = forward(p, &mut t)?;
        Ok(t.item(r))
    })?;
    Ok(GradCheckReport {
        target: GradTarget::Block,
        description: format!("channels {n}, kernel {k}, dilation {d}, length {len}"),
        entries,
        max_rel_error: max_rel,
        worst,
    })
}

fn check_head(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let cfg = random_config(rng);
    let t = [1, 5, 21][rng.gen_range(0..3)];
    let base = init_params(&cfg, seed)?;
    let pre = head_prefix(1);
    let mut head = ParamStore::new();
    for (name, v) in base.iter().filter(|(k, _)| k.starts_with(&format!("{pre}."))) {
        head.insert(name, v.clone());
    }
    let head = perturbed(&head, 0.3, rng);
    let ctx = noise(rng, cfg.n_filters);
    let h_hat = rng.gen_range(0.3..0.9);
    let targets: Vec<f64> = noise(rng, 4).iter().map(|v| v * (t as f64).sqrt()).collect();
    let forward = |p: &ParamStore, tape: &mut Tape| -> Result<(Bound, crate::nn::Var)> {
        let bound = Bound::new(tape, p, true);
        let c = tape.constant(Tensor::vector(ctx.clone()));
        let raw = head_raw_on_tape(tape, &bound, &pre, c, h_hat)?;
        let lps: Vec<_> = targets.iter().map(|&r| head_logpdf_on_tape(tape, cfg.head, raw, r, t)).collect();
        let all = tape.concat(&lps);
        Ok((bound, tape.sum(all)))
    };
    let mut tape = Tape::new();
    let (bound, root) = forward(&head, &mut tape)?;
    let g = tape.backward(root);
    let analytic = bound.gradients(&tape, &g);
    let (entries, max_rel, worst) = finite_difference(&head, &analytic, |p| {
        let mut tp = Tape::new();
        let (_, r) = forward(p, &mut tp)?;
        Ok(tp.item(r))
    })?;
    Ok(GradCheckReport {
        target: GradTarget::Head,
        description: format!("{:?} head, {} layers, width {}, T={t}", cfg.head, cfg.flow_layers, cfg.n_filters),
        entries,
        max_rel_error: max_rel,
        worst,
    })
}

fn check_backbone(rng: &mut ChaCha8Rng, seed: u64) -> Result<GradCheckReport> {
    let mut cfg = random_config(rng);
    let welch = rng.gen_bool(0.5);
    let (runs, run_len) = if welch { (1, MIN_LOSS_SEGMENT) } else { (1, rng.gen_range(2..=4)) };
    if welch {
        cfg.spec_loss = SpecLossMode::Welch;
        cfg.lambda_spec = 0.5;
    }
    let params = perturbed(&init_params(&cfg, seed)?, 0.2, rng);
    let win = rng.gen_range(16..=24);
    let series = noise(rng, win + run_len * runs + 1);
    let h_hat = rng.gen_range(0.3..0.9);
    let batch: Vec<StepItem> = (0..runs * run_len)
        .map(|s| StepItem {
            window: &series[s..s + win],
            target: series[s + win],
            h_hat,
        })
        .collect();
    let noise_seed = rng.gen();
    let (_, analytic) = loss_and_grads(&cfg, &params, &batch, runs, noise_seed)?;
    let (entries, max_rel, worst) = finite_difference(&params, &analytic, |p| {
        Ok(loss_and_grads(&cfg, p, &batch, runs, noise_seed)?.0.loss)
    })?;
    Ok(GradCheckReport {
        target: GradTarget::Backbone,
        description: format!(
            "depth {}, width {}, kernel {}, tied {}, dwt {}, film {}, {:?} head, welch {welch}",
            cfg.depth, cfg.n_filters, cfg.kernel_size, cfg.weight_tied, cfg.use_dwt, cfg.use_film, cfg.head
        ),
        entries,
        max_rel_error: max_rel,
        worst,
    })
}

/// Checks one randomly drawn configuration of `target`.
pub fn check_random(target: GradTarget, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match target {
        GradTarget::Block => check_block(&mut rng),
        GradTarget::Head => check_head(&mut rng, seed),
        GradTarget::Backbone => check_backbone(&mut rng, seed),
    }
}
