//! Conditional density heads.
//!
//! The flow maps a standard normal `z` through `K` monotone scalar layers
//!
//! ```text
//! y = m + exp(s) * sinh(exp(delta) * asinh(u) + eps)
//! ```
//!
//! whose parameters come from a perceptron on the context vector and the
//! Hurst estimate. Each layer is an affine scale-shift wrapped around a
//! sinh-arcsinh tail/skew transform, so the stack can bend away from a
//! Gaussian; with all raw parameters zero every layer is the identity.
//!
//! Targets at horizon `T` are divided by `sqrt(T)` before entering the flow,
//! so the untrained head is `N(0, T)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{head_prefix, Bound, HeadKind, ModelConfig, ParamStore};
use super::tape::{log_cosh, Tape, Unary, Var};
use super::tensor::Tensor;
use crate::error::{invalid, Result};
use crate::util::{norm_cdf, norm_logpdf, HALF_LN_2PI};

/// Raw conditioner outputs per flow layer: shift, log-scale, tail, skew.
pub const PARAMS_PER_LAYER: usize = 4;

const LOG_SCALE_BOUND: f64 = 3.0;
const SKEW_BOUND: f64 = 2.0;

/// One bounded flow layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowLayer {
    pub shift: f64,
    pub log_scale: f64,
    /// `delta`: log of the sinh-arcsinh tail weight.
    pub log_tail: f64,
    /// `eps`: sinh-arcsinh skew.
    pub skew: f64,
}

impl FlowLayer {
    pub const IDENTITY: FlowLayer = FlowLayer {
        shift: 0.0,
        log_scale: 0.0,
        log_tail: 0.0,
        skew: 0.0,
    };

    /// Maps raw perceptron outputs to bounded parameters.
    pub fn from_raw(raw: &[f64]) -> Self {
        Self {
            shift: raw[0],
            log_scale: LOG_SCALE_BOUND * (raw[1] / LOG_SCALE_BOUND).tanh(),
            log_tail: raw[2].tanh(),
            skew: SKEW_BOUND * (raw[3] / SKEW_BOUND).tanh(),
        }
    }

    pub fn forward(&self, u: f64) -> f64 {
        self.shift + self.log_scale.exp() * (self.log_tail.exp() * u.asinh() + self.skew).sinh()
    }

    /// `(u, ln |du/dy|)`.
    pub fn inverse(&self, y: f64) -> (f64, f64) {
        let q = (y - self.shift) * (-self.log_scale).exp();
        let v = q.asinh();
        let w = (v - self.skew) * (-self.log_tail).exp();
        let u = w.sinh();
        let logdet = -self.log_scale - self.log_tail - 0.5 * (q * q).ln_1p() + log_cosh(w);
        (u, logdet)
    }
}

/// Composition `g = g_{K-1} o ... o g_0` applied to standard normal noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub layers: Vec<FlowLayer>,
}

impl Flow {
    pub fn identity(k: usize) -> Self {
        Self {
            layers: vec![FlowLayer::IDENTITY; k],
        }
    }

    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() || raw.len() % PARAMS_PER_LAYER != 0 {
            return Err(invalid(format!("flow raw parameter count {} not a multiple of 4", raw.len())));
        }
        Ok(Self {
            layers: raw.chunks(PARAMS_PER_LAYER).map(FlowLayer::from_raw).collect(),
        })
    }

    pub fn forward(&self, z: f64) -> f64 {
        self.layers.iter().fold(z, |u, l| l.forward(u))
    }

    /// `(z, ln |dz/dy|)`.
    pub fn inverse(&self, y: f64) -> (f64, f64) {
        self.layers.iter().rev().fold((y, 0.0), |(u, ld), l| {
            let (v, d) = l.inverse(u);
            (v, ld + d)
        })
    }

    pub fn logpdf(&self, y: f64) -> f64 {
        let (z, ld) = self.inverse(y);
        norm_logpdf(z) + ld
    }

    pub fn cdf(&self, y: f64) -> f64 {
        norm_cdf(self.inverse(y).0)
    }
}

/// Predictive density of a horizon-`T` target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictive {
    /// `r = scale * g(z)`.
    Flow { flow: Flow, scale: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl Predictive {
    pub fn logpdf(&self, r: f64) -> f64 {
        match self {
            Predictive::Flow { flow, scale } => flow.logpdf(r / scale) - scale.ln(),
            Predictive::Gaussian { mean, std } => norm_logpdf((r - mean) / std) - std.ln(),
        }
    }

    pub fn cdf(&self, r: f64) -> f64 {
        match self {
            Predictive::Flow { flow, scale } => flow.cdf(r / scale),
            Predictive::Gaussian { mean, std } => norm_cdf((r - mean) / std),
        }
    }

    /// Deterministic per seed.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.transform(z)
            })
            .collect()
    }

    /// Pushes a standard normal draw through the predictive.
    pub fn transform(&self, z: f64) -> f64 {
        match self {
            Predictive::Flow { flow, scale } => scale * flow.forward(z),
            Predictive::Gaussian { mean, std } => mean + std * z,
        }
    }
}

/// Mean negative log density over paired predictives and targets.
pub fn nll(preds: &[Predictive], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(invalid(format!(
            "nll needs matching non-empty batches, got {} predictives and {} targets",
            preds.len(),
            targets.len()
        )));
    }
    Ok(-preds.iter().zip(targets).map(|(p, &r)| p.logpdf(r)).sum::<f64>() / targets.len() as f64)
}

/// Conditioner output vector for the head at `prefix`.
pub fn head_raw_on_tape(tape: &mut Tape, bound: &Bound, prefix: &str, ctx: Var, h_hat: f64) -> Result<Var> {
    let hv = tape.constant(Tensor::vector(vec![h_hat - 0.5]));
    let inp = tape.concat(&[ctx, hv]);
    let h1 = tape.linear(bound.get(&format!("{prefix}.w1"))?, inp, bound.get(&format!("{prefix}.b1"))?);
    let h1 = tape.tanh(h1);
    Ok(tape.linear(bound.get(&format!("{prefix}.w2"))?, h1, bound.get(&format!("{prefix}.b2"))?))
}

struct TapeLayer {
    shift: Var,
    log_scale: Var,
    log_tail: Var,
    skew: Var,
}

fn bounded(tape: &mut Tape, raw: Var, i: usize, bound: f64) -> Var {
    let r = tape.index(raw, i);
    let r = tape.scale(r, 1.0 / bound);
    let r = tape.tanh(r);
    tape.scale(r, bound)
}

fn tape_layers(tape: &mut Tape, raw: Var) -> Vec<TapeLayer> {
    let k = tape.value(raw).len() / PARAMS_PER_LAYER;
    (0..k)
        .map(|l| {
            let b = l * PARAMS_PER_LAYER;
            TapeLayer {
                shift: tape.index(raw, b),
                log_scale: bounded(tape, raw, b + 1, LOG_SCALE_BOUND),
                log_tail: bounded(tape, raw, b + 2, 1.0),
                skew: bounded(tape, raw, b + 3, SKEW_BOUND),
            }
        })
        .collect()
}

/// `ln p(y)` of the flow with conditioner outputs `raw`.
pub fn flow_logpdf_on_tape(tape: &mut Tape, raw: Var, y: f64) -> Var {
    let layers = tape_layers(tape, raw);
    let mut u = tape.scalar(y);
    let mut terms = Vec::new();
    for l in layers.iter().rev() {
        let neg_s = tape.scale(l.log_scale, -1.0);
        let inv_scale = tape.exp(neg_s);
        let centred = tape.sub(u, l.shift);
        let q = tape.mul(centred, inv_scale);
        let v = tape.unary(q, Unary::Asinh);
        let neg_d = tape.scale(l.log_tail, -1.0);
        let inv_tail = tape.exp(neg_d);
        let vs = tape.sub(v, l.skew);
        let w = tape.mul(vs, inv_tail);
        u = tape.unary(w, Unary::Sinh);
        let a = tape.unary(q, Unary::HalfLog1pSq);
        let b = tape.unary(w, Unary::LogCosh);
        terms.extend([neg_s, neg_d, tape.scale(a, -1.0), b]);
    }
    let sq = tape.unary(u, Unary::Square);
    let base = tape.scale(sq, -0.5);
    let base = tape.offset(base, -HALF_LN_2PI);
    terms.push(base);
    let all = tape.concat(&terms);
    tape.sum(all)
}

/// `g(z)` with conditioner outputs `raw`, differentiable in `raw`.
pub fn flow_forward_on_tape(tape: &mut Tape, raw: Var, z: f64) -> Var {
    let layers = tape_layers(tape, raw);
    let mut u = tape.scalar(z);
    for l in &layers {
        let a = tape.unary(u, Unary::Asinh);
        let tail = tape.exp(l.log_tail);
        let a = tape.mul(a, tail);
        let a = tape.add(a, l.skew);
        let s = tape.unary(a, Unary::Sinh);
        let scale = tape.exp(l.log_scale);
        let s = tape.mul(s, scale);
        u = tape.add(s, l.shift);
    }
    u
}

fn gaussian_parts(tape: &mut Tape, raw: Var) -> (Var, Var) {
    let mean = tape.index(raw, 0);
    let log_std = bounded(tape, raw, 1, LOG_SCALE_BOUND);
    (mean, log_std)
}

/// `ln N(y; mu, sigma^2)` with `(mu, ln sigma)` from `raw`.
pub fn gaussian_logpdf_on_tape(tape: &mut Tape, raw: Var, y: f64) -> Var {
    let (mean, log_std) = gaussian_parts(tape, raw);
    let yv = tape.scalar(y);
    let d = tape.sub(yv, mean);
    let neg = tape.scale(log_std, -1.0);
    let inv = tape.exp(neg);
    let z = tape.mul(d, inv);
    let sq = tape.unary(z, Unary::Square);
    let a = tape.scale(sq, -0.5);
    let lp = tape.sub(a, log_std);
    tape.offset(lp, -HALF_LN_2PI)
}

/// Log density of the horizon-`t` target `r` (on the unscaled axis).
pub fn head_logpdf_on_tape(tape: &mut Tape, kind: HeadKind, raw: Var, r: f64, t: usize) -> Var {
    let scale = (t as f64).sqrt();
    let lp = match kind {
        HeadKind::Flow => flow_logpdf_on_tape(tape, raw, r / scale),
        HeadKind::Gaussian => gaussian_logpdf_on_tape(tape, raw, r / scale),
    };
    tape.offset(lp, -scale.ln())
}

/// Draw `scale * g(z)` differentiable in `raw`.
pub fn head_sample_on_tape(tape: &mut Tape, kind: HeadKind, raw: Var, z: f64, t: usize) -> Var {
    let scale = (t as f64).sqrt();
    let y = match kind {
        HeadKind::Flow => flow_forward_on_tape(tape, raw, z),
        HeadKind::Gaussian => {
            let (mean, log_std) = gaussian_parts(tape, raw);
            let std = tape.exp(log_std);
            let zs = tape.scale(std, z);
            tape.add(zs, mean)
        }
    };
    tape.scale(y, scale)
}

/// Predictive of the head for horizon `t` given a frozen context vector.
pub fn predictive(cfg: &ModelConfig, store: &ParamStore, t: usize, ctx: &[f64], h_hat: f64) -> Result<Predictive> {
    let mut tape = Tape::new();
    let pre = head_prefix(t);
    let mut head = ParamStore::new();
    for name in ["w1", "b1", "w2", "b2"] {
        let full = format!("{pre}.{name}");
        head.insert(full.clone(), store.get(&full)?.clone());
    }
    let bound = Bound::new(&mut tape, &head, false);
    let c = tape.constant(Tensor::vector(ctx.to_vec()));
    let raw = head_raw_on_tape(&mut tape, &bound, &pre, c, h_hat)?;
    let raw = &tape.value(raw).data;
    let scale = (t as f64).sqrt();
    Ok(match cfg.head {
        HeadKind::Flow => Predictive::Flow {
            flow: Flow::from_raw(raw)?,
            scale,
        },
        HeadKind::Gaussian => Predictive::Gaussian {
            mean: scale * raw[0],
            std: scale * (LOG_SCALE_BOUND * (raw[1] / LOG_SCALE_BOUND).tanh()).exp(),
        },
    })
}

/// Log density of `r` under the model's horizon-`t` head for context `ctx`.
pub fn flow_logpdf(cfg: &ModelConfig, store: &ParamStore, t: usize, r: f64, ctx: &[f64], h_hat: f64) -> Result<f64> {
    Ok(predictive(cfg, store, t, ctx, h_hat)?.logpdf(r))
}

/// `n` draws from the horizon-`t` predictive, deterministic per seed.
pub fn flow_sample(
    cfg: &ModelConfig,
    store: &ParamStore,
    t: usize,
    ctx: &[f64],
    h_hat: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(predictive(cfg, store, t, ctx, h_hat)?.sample(n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_flow(seed: u64) -> Flow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..12)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.5 * z
            })
            .collect();
        Flow::from_raw(&raw).unwrap()
    }

    #[test]
    fn identity_is_standard_normal() {
        let f = Flow::identity(3);
        assert!((f.logpdf(0.0) + 0.918_938_533_204_672_7).abs() < 1e-15);
        for y in [-2.0, 0.3, 4.0] {
            assert!((f.logpdf(y) - norm_logpdf(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        for seed in 0..10 {
            let f = random_flow(seed);
            for i in 0..=120 {
                let r = -6.0 + 0.1 * i as f64;
                let (z, _) = f.inverse(r);
                assert!((f.forward(z) - r).abs() <= 1e-9, "seed {seed} r {r}");
            }
        }
    }

    #[test]
    fn tape_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw: Vec<f64> = (0..12)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let f = Flow::from_raw(&raw).unwrap();
        for y in [-3.0, -0.2, 0.0, 1.7] {
            let mut t = Tape::new();
            let r = t.constant(Tensor::vector(raw.clone()));
            let lp = flow_logpdf_on_tape(&mut t, r, y);
            assert!((t.item(lp) - f.logpdf(y)).abs() < 1e-12);
            let fw = flow_forward_on_tape(&mut t, r, y);
            assert!((t.item(fw) - f.forward(y)).abs() < 1e-12);
        }
    }
}
