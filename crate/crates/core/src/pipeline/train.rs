//! Training step and trainer.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::{Universe, WindowRef, RS_MIN_LEN};
use crate::error::{invalid, Error, Result};
use crate::nn::flow::{head_logpdf_on_tape, head_raw_on_tape, head_sample_on_tape, predictive, Predictive};
use crate::nn::model::{conv_param_count, context_on_tape, head_prefix, init_head, init_params, Bound};
use crate::nn::{Adam, HeadKind, ModelConfig, ParamStore, SpecLossMode, Tape, Tensor};
use crate::spectral::{spectral_loss, variance_surrogate, DEFAULT_SEGMENT, MIN_LOSS_SEGMENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HurstMode {
    /// One R/S estimate per ticker from its train part.
    PerSeries,
    /// R/S on the trailing `window` samples before each context end.
    Rolling { window: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// One trained model per seed.
    pub seeds: Vec<u64>,
    /// Horizon 1 trains the whole network; every other horizon gets its own
    /// head on the frozen backbone.
    pub horizons: Vec<usize>,
    pub test_split: usize,
    pub window_len: usize,
    pub hurst_mode: HurstMode,
    /// Fraction of each ticker's latest training windows held out for validation.
    pub validation_fraction: f64,
    /// Welch mode: contiguous runs per batch and windows per run.
    pub welch_runs: usize,
    pub welch_run_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 64,
            learning_rate: 1e-3,
            seeds: vec![0],
            horizons: vec![1, 5, 21, 63],
            test_split: 252,
            window_len: 128,
            hurst_mode: HurstMode::PerSeries,
            validation_fraction: 0.1,
            welch_runs: 8,
            welch_run_len: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(invalid("epochs must be >= 1"));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(invalid("horizons must be non-empty and positive"));
        }
        if self.batch_size == 0 || self.seeds.is_empty() {
            return Err(invalid("batch size and seed list must be non-empty"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        if self.window_len < 8 {
            return Err(invalid("window_len must be >= 8"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(invalid("validation_fraction must lie in [0, 1)"));
        }
        if let HurstMode::Rolling { window } = self.hurst_mode {
            if window < RS_MIN_LEN {
                return Err(invalid(format!("rolling Hurst window must be >= {RS_MIN_LEN}")));
            }
        }
        if self.welch_runs == 0 || self.welch_run_len < MIN_LOSS_SEGMENT {
            return Err(invalid(format!(
                "welch mode needs >= 1 run of >= {MIN_LOSS_SEGMENT} windows"
            )));
        }
        Ok(())
    }

    /// Horizons in ascending order with 1 always present.
    pub fn all_horizons(&self) -> Vec<usize> {
        let mut h = self.horizons.clone();
        h.push(1);
        h.sort_unstable();
        h.dedup();
        h
    }
}

/// Model families of the comparison and ablation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    WavenetGaussian,
    WavenetFlowFilm,
    SeWavenetFull,
    NoTying,
    NoWavelet,
    NoFilm,
    NoSpectral,
}

impl Variant {
    pub const TABLE: [Variant; 3] = [Variant::WavenetGaussian, Variant::WavenetFlowFilm, Variant::SeWavenetFull];
    pub const ABLATIONS: [Variant; 5] = [
        Variant::SeWavenetFull,
        Variant::NoTying,
        Variant::NoWavelet,
        Variant::NoFilm,
        Variant::NoSpectral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::WavenetGaussian => "wavenet_gaussian",
            Variant::WavenetFlowFilm => "wavenet_flow_film",
            Variant::SeWavenetFull => "se_wavenet_full",
            Variant::NoTying => "minus_tying",
            Variant::NoWavelet => "minus_wavelet",
            Variant::NoFilm => "minus_film",
            Variant::NoSpectral => "minus_spectral",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::WavenetGaussian => "WaveNet (Gaussian head)",
            Variant::WavenetFlowFilm => "WaveNet+Flow+Hurst-FiLM",
            Variant::SeWavenetFull => "SE-WaveNet (full)",
            Variant::NoTying => "- weight tying",
            Variant::NoWavelet => "- wavelet input layer",
            Variant::NoFilm => "- Hurst-FiLM",
            Variant::NoSpectral => "- spectral-consistency",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            Variant::WavenetGaussian,
            Variant::WavenetFlowFilm,
            Variant::SeWavenetFull,
            Variant::NoTying,
            Variant::NoWavelet,
            Variant::NoFilm,
            Variant::NoSpectral,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| invalid(format!("unknown variant '{s}'")))
    }

    /// Architecture of this variant; width, depth, kernel, flow depth and
    /// loss weights come from `base`, as does the full model's spectral mode.
    pub fn model_config(self, base: &ModelConfig) -> ModelConfig {
        let full = ModelConfig {
            weight_tied: true,
            use_dwt: true,
            use_film: true,
            head: HeadKind::Flow,
            ..base.clone()
        };
        match self {
            Variant::WavenetGaussian => ModelConfig {
                weight_tied: false,
                use_dwt: false,
                use_film: false,
                head: HeadKind::Gaussian,
                spec_loss: SpecLossMode::Off,
                ..full
            },
            Variant::WavenetFlowFilm => ModelConfig {
                weight_tied: false,
                use_dwt: false,
                spec_loss: SpecLossMode::Off,
                ..full
            },
            Variant::SeWavenetFull => full,
            Variant::NoTying => ModelConfig {
                weight_tied: false,
                ..full
            },
            Variant::NoWavelet => ModelConfig { use_dwt: false, ..full },
            Variant::NoFilm => ModelConfig { use_film: false, ..full },
            Variant::NoSpectral => ModelConfig {
                spec_loss: SpecLossMode::Off,
                ..full
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean reported loss (NLL plus weighted spectral term).
    pub train_loss: f64,
    pub train_nll: f64,
    pub val_nll: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub backbone: Vec<EpochStats>,
    /// Head-only training per horizon > 1.
    pub heads: BTreeMap<usize, Vec<EpochStats>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub name: String,
    pub config: ModelConfig,
    pub seed: u64,
    /// Backbone and one head per trained horizon.
    pub params: ParamStore,
    pub horizons: Vec<usize>,
    pub history: TrainHistory,
    pub conv_params: usize,
}

impl TrainedModel {
    /// Context vectors for the given windows.
    pub fn contexts(&self, u: &Universe, refs: &[WindowRef]) -> Result<Vec<Vec<f64>>> {
        contexts(&self.config, &self.params, u, refs)
    }

    /// Horizon-`t` predictives for windows with precomputed contexts.
    pub fn predictives(&self, u: &Universe, refs: &[WindowRef], ctx: &[Vec<f64>], t: usize) -> Result<Vec<Predictive>> {
        refs.iter()
            .zip(ctx)
            .map(|(&r, c)| predictive(&self.config, &self.params, t, c, u.h_hat(r)))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn contexts(cfg: &ModelConfig, params: &ParamStore, u: &Universe, refs: &[WindowRef]) -> Result<Vec<Vec<f64>>> {
    let backbone = backbone_store(params);
    refs.iter()
        .map(|&r| {
            let mut tape = Tape::new();
            let bound = Bound::new(&mut tape, &backbone, false);
            let c = context_on_tape(&mut tape, cfg, &bound, u.window(r), u.h_hat(r))?;
            Ok(tape.value(c).data.clone())
        })
        .collect()
}

fn subset(params: &ParamStore, keep: impl Fn(&str) -> bool) -> ParamStore {
    let mut out = ParamStore::new();
    for (k, v) in params.iter().filter(|(k, _)| keep(k)) {
        out.insert(k, v.clone());
    }
    out
}

fn is_head(name: &str) -> bool {
    name.starts_with("head")
}

fn backbone_store(params: &ParamStore) -> ParamStore {
    subset(params, |k| !is_head(k))
}

/// One training pair.
#[derive(Debug, Clone, Copy)]
pub struct StepItem<'a> {
    pub window: &'a [f64],
    pub target: f64,
    pub h_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// `nll + lambda_spec * spectral term`.
    pub loss: f64,
    pub nll: f64,
    pub spectral: f64,
}

/// Loss of a horizon-1 batch and its gradient with respect to the backbone
/// and the horizon-1 head. In Welch mode the batch is `welch_runs` equal
/// runs of consecutive windows; one reparameterised draw per window forms
/// the trajectories fed to the spectral loss.
pub fn loss_and_grads(
    cfg: &ModelConfig,
    params: &ParamStore,
    batch: &[StepItem],
    welch_runs: usize,
    noise_seed: u64,
) -> Result<(StepOutcome, BTreeMap<String, Vec<f64>>)> {
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let trainable = subset(params, |k| !is_head(k) || k.starts_with("head1."));
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, &trainable, true);
    let pre = head_prefix(1);
    let welch = cfg.spec_loss == SpecLossMode::Welch && cfg.lambda_spec > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut logps = Vec::with_capacity(batch.len());
    let mut draws = Vec::new();
    for item in batch {
        let c = context_on_tape(&mut tape, cfg, &bound, item.window, item.h_hat)?;
        let raw = head_raw_on_tape(&mut tape, &bound, &pre, c, item.h_hat)?;
        logps.push(head_logpdf_on_tape(&mut tape, cfg.head, raw, item.target, 1));
        if welch {
            let z: f64 = StandardNormal.sample(&mut rng);
            draws.push(head_sample_on_tape(&mut tape, cfg.head, raw, z, 1));
        }
    }
    let all = tape.concat(&logps);
    let sum = tape.sum(all);
    let nll_var = tape.scale(sum, -1.0 / batch.len() as f64);
    let nll = tape.item(nll_var);

    let (root, spectral) = match cfg.spec_loss {
        SpecLossMode::Welch if welch => {
            if batch.len() % welch_runs != 0 {
                return Err(invalid("welch batch must split into equal runs"));
            }
            let run_len = batch.len() / welch_runs;
            let values: Vec<f64> = draws.iter().map(|&d| tape.item(d)).collect();
            let runs: Vec<&[f64]> = values.chunks(run_len).collect();
            let h_mean = batch.iter().map(|b| b.h_hat).sum::<f64>() / batch.len() as f64;
            let sl = spectral_loss(&runs, h_mean, cfg.lambda_shape, run_len.min(DEFAULT_SEGMENT))?;
            let grads: Vec<Vec<f64>> = sl.grad.iter().flatten().map(|&g| vec![g]).collect();
            let spec = tape.external(sl.value, &draws, grads);
            let weighted = tape.scale(spec, cfg.lambda_spec);
            (tape.add(nll_var, weighted), sl.value)
        }
        SpecLossMode::VarianceSurrogate => {
            let targets: Vec<f64> = batch.iter().map(|b| b.target).collect();
            (nll_var, variance_surrogate(&targets))
        }
        _ => (nll_var, 0.0),
    };
    let loss = tape.item(root) + if cfg.spec_loss == SpecLossMode::VarianceSurrogate {
        cfg.lambda_spec * spectral
    } else {
        0.0
    };
    let g = tape.backward(root);
    Ok((
        StepOutcome {
            loss,
            nll,
            spectral,
        },
        bound.gradients(&tape, &g),
    ))
}

fn check_finite(out: &StepOutcome, params: &ParamStore) -> Result<()> {
    if out.loss.is_finite() {
        return Ok(());
    }
    let norms: Vec<String> = params.norms().iter().map(|(k, v)| format!("{k}={v:.4e}")).collect();
    Err(Error::Numerical(format!(
        "non-finite training loss (nll {}, spectral {}); parameter norms: {}",
        out.nll,
        out.spectral,
        norms.join(", ")
    )))
}

/// One optimiser update on a horizon-1 batch.
pub fn train_step(
    cfg: &ModelConfig,
    params: &mut ParamStore,
    opt: &mut Adam,
    batch: &[StepItem],
    welch_runs: usize,
    noise_seed: u64,
) -> Result<StepOutcome> {
    let (out, grads) = loss_and_grads(cfg, params, batch, welch_runs, noise_seed)?;
    check_finite(&out, params)?;
    opt.update(params, &grads)?;
    Ok(out)
}

/// Training and validation windows at horizon `t`, per ticker in time order.
fn split_windows(u: &Universe, t: usize, val_frac: f64) -> (Vec<Vec<WindowRef>>, Vec<WindowRef>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for i in 0..u.series.len() {
        let starts: Vec<WindowRef> = u.train_starts(i, t).map(|s| (i, s)).collect();
        let n_val = (starts.len() as f64 * val_frac).round() as usize;
        let cut = starts.len() - n_val;
        val.extend_from_slice(&starts[cut..]);
        train.push(starts[..cut].to_vec());
    }
    (train, val)
}

fn epoch_seed(seed: u64, stage: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(stage << 32)
        .wrapping_add(epoch as u64)
}

/// Mean NLL at horizon `t` over `refs` using cached contexts.
fn mean_nll(cfg: &ModelConfig, params: &ParamStore, u: &Universe, refs: &[WindowRef], ctx: &[Vec<f64>], t: usize) -> Result<f64> {
    let mut s = 0.0;
    for (&r, c) in refs.iter().zip(ctx) {
        s -= predictive(cfg, params, t, c, u.h_hat(r))?.logpdf(u.target(r, t));
    }
    Ok(s / refs.len() as f64)
}

/// Trains one model: the whole network at horizon 1, then a separate head
/// per remaining horizon on the frozen backbone.
pub fn train(u: &Universe, name: &str, cfg: &ModelConfig, tc: &TrainConfig, seed: u64) -> Result<TrainedModel> {
    cfg.validate()?;
    tc.validate()?;
    let mut params = init_params(cfg, seed)?;
    let mut history = TrainHistory::default();
    let welch = cfg.spec_loss == SpecLossMode::Welch && cfg.lambda_spec > 0.0;

    let (train_sets, val) = split_windows(u, 1, tc.validation_fraction);
    let mut opt = Adam::new(tc.learning_rate);
    for epoch in 0..tc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(seed, 1, epoch));
        let batches: Vec<Vec<WindowRef>> = if welch {
            let mut runs: Vec<&[WindowRef]> = train_sets
                .iter()
                .flat_map(|s| s.chunks_exact(tc.welch_run_len))
                .collect();
            runs.shuffle(&mut rng);
            runs.chunks_exact(tc.welch_runs).map(|c| c.concat()).collect()
        } else {
            let mut all: Vec<WindowRef> = train_sets.concat();
            all.shuffle(&mut rng);
            all.chunks(tc.batch_size).map(<[WindowRef]>::to_vec).collect()
        };
        if batches.is_empty() {
            return Err(invalid("not enough training windows for one batch"));
        }
        let (mut loss, mut nll, mut count) = (0.0, 0.0, 0usize);
        for (b, refs) in batches.iter().enumerate() {
            let items: Vec<StepItem> = refs
                .iter()
                .map(|&r| StepItem {
                    window: u.window(r),
                    target: u.target(r, 1),
                    h_hat: u.h_hat(r),
                })
                .collect();
            let out = train_step(
                cfg,
                &mut params,
                &mut opt,
                &items,
                tc.welch_runs,
                epoch_seed(seed, 2, epoch) ^ b as u64,
            )?;
            loss += out.loss * items.len() as f64;
            nll += out.nll * items.len() as f64;
            count += items.len();
        }
        let val_nll = if val.is_empty() {
            None
        } else {
            let ctx = contexts(cfg, &params, u, &val)?;
            Some(mean_nll(cfg, &params, u, &val, &ctx, 1)?)
        };
        history.backbone.push(EpochStats {
            epoch,
            train_loss: loss / count as f64,
            train_nll: nll / count as f64,
            val_nll,
        });
    }

    let extra: Vec<usize> = tc.all_horizons().into_iter().filter(|&t| t != 1).collect();
    if !extra.is_empty() {
        // contexts of every window that any horizon trains or validates on
        let all_refs: Vec<WindowRef> = (0..u.series.len())
            .flat_map(|i| u.train_starts(i, 1).map(move |s| (i, s)))
            .collect();
        let all_ctx = contexts(cfg, &params, u, &all_refs)?;
        let lookup: BTreeMap<WindowRef, usize> = all_refs.iter().enumerate().map(|(k, &r)| (r, k)).collect();
        for &t in &extra {
            let head = train_head(u, cfg, tc, seed, t, &all_ctx, &lookup, &mut history)?;
            params.merge(&head);
        }
    }
    Ok(TrainedModel {
        name: name.to_string(),
        config: cfg.clone(),
        seed,
        params,
        horizons: tc.all_horizons(),
        history,
        conv_params: conv_param_count(cfg),
    })
}

#[allow(clippy::too_many_arguments)]
fn train_head(
    u: &Universe,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    seed: u64,
    t: usize,
    all_ctx: &[Vec<f64>],
    lookup: &BTreeMap<WindowRef, usize>,
    history: &mut TrainHistory,
) -> Result<ParamStore> {
    let mut head = init_head(cfg, t, seed ^ ((t as u64) << 40))?;
    let pre = head_prefix(t);
    let (train_sets, val) = split_windows(u, t, tc.validation_fraction);
    let ctx_of = |r: &WindowRef| &all_ctx[lookup[r]];
    let mut opt = Adam::new(tc.learning_rate);
    let mut stats = Vec::new();
    for epoch in 0..tc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(seed, 100 + t as u64, epoch));
        let mut all: Vec<WindowRef> = train_sets.concat();
        all.shuffle(&mut rng);
        let (mut nll, mut count) = (0.0, 0usize);
        for refs in all.chunks(tc.batch_size) {
            let mut tape = Tape::new();
            let bound = Bound::new(&mut tape, &head, true);
            let mut lps = Vec::with_capacity(refs.len());
            for r in refs {
                let c = tape.constant(Tensor::vector(ctx_of(r).clone()));
                let raw = head_raw_on_tape(&mut tape, &bound, &pre, c, u.h_hat(*r))?;
                lps.push(head_logpdf_on_tape(&mut tape, cfg.head, raw, u.target(*r, t), t));
            }
            let all_lp = tape.concat(&lps);
            let s = tape.sum(all_lp);
            let root = tape.scale(s, -1.0 / refs.len() as f64);
            let out = StepOutcome {
                loss: tape.item(root),
                nll: tape.item(root),
                spectral: 0.0,
            };
            check_finite(&out, &head)?;
            let g = tape.backward(root);
            opt.update(&mut head, &bound.gradients(&tape, &g))?;
            nll += out.nll * refs.len() as f64;
            count += refs.len();
        }
        let val_nll = if val.is_empty() {
            None
        } else {
            let ctx: Vec<Vec<f64>> = val.iter().map(|r| ctx_of(r).clone()).collect();
            Some(mean_nll(cfg, &head, u, &val, &ctx, t)?)
        };
        stats.push(EpochStats {
            epoch,
            train_loss: nll / count.max(1) as f64,
            train_nll: nll / count.max(1) as f64,
            val_nll,
        });
    }
    history.heads.insert(t, stats);
    Ok(head)
}

/// Trains `variant` once per seed of `tc`.
pub fn train_variant(u: &Universe, variant: Variant, base: &ModelConfig, tc: &TrainConfig) -> Result<Vec<TrainedModel>> {
    train_variants(u, &[variant], base, tc)
}

/// Trains every `(variant, seed)` pair on its own thread; the output keeps
/// variant order, then seed order.
pub fn train_variants(u: &Universe, variants: &[Variant], base: &ModelConfig, tc: &TrainConfig) -> Result<Vec<TrainedModel>> {
    let jobs: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|&v| tc.seeds.iter().map(move |&s| (v, s)))
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(v, seed)| scope.spawn(move || train(u, v.name(), &v.model_config(base), tc, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}
