//! Network configuration, parameter storage and the dilated residual backbone.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use super::tensor::{conv_forward, Kernel, Tensor};
use crate::error::{invalid, Error, Result};
use crate::wavelet::dwt_db4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecLossMode {
    /// Welch-periodogram slope and shape loss on sampled trajectories.
    Welch,
    /// `(Var(targets) - 1)^2`; reported in the loss but carries no gradient.
    VarianceSurrogate,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Flow,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Number of residual blocks; block `l` uses dilation `2^l`.
    pub depth: usize,
    pub n_filters: usize,
    pub kernel_size: usize,
    pub flow_layers: usize,
    pub weight_tied: bool,
    pub use_dwt: bool,
    pub use_film: bool,
    pub head: HeadKind,
    pub spec_loss: SpecLossMode,
    pub lambda_spec: f64,
    pub lambda_shape: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            n_filters: 16,
            kernel_size: 3,
            flow_layers: 3,
            weight_tied: true,
            use_dwt: true,
            use_film: true,
            head: HeadKind::Flow,
            spec_loss: SpecLossMode::VarianceSurrogate,
            lambda_spec: 0.05,
            lambda_shape: 0.1,
        }
    }
}

impl ModelConfig {
    /// Depth 0 is accepted: the context is then the projected input.
    pub fn validate(&self) -> Result<()> {
        if self.n_filters == 0 {
            return Err(invalid("n_filters must be positive"));
        }
        if self.kernel_size < 2 {
            return Err(invalid(format!("kernel_size must be >= 2, got {}", self.kernel_size)));
        }
        if self.flow_layers == 0 {
            return Err(invalid("flow_layers must be >= 1"));
        }
        if self.depth > 20 {
            return Err(invalid(format!("depth {} is unreasonably large", self.depth)));
        }
        for (name, v) in [("lambda_spec", self.lambda_spec), ("lambda_shape", self.lambda_shape)] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        if self.use_dwt {
            2
        } else {
            1
        }
    }

    pub fn dilations(&self) -> Vec<usize> {
        (0..self.depth).map(|l| 1 << l).collect()
    }

    /// Number of (internal) time steps the last output depends on.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size - 1) * ((1 << self.depth) - 1)
    }

    pub fn head_outputs(&self) -> usize {
        match self.head {
            HeadKind::Flow => super::flow::PARAMS_PER_LAYER * self.flow_layers,
            HeadKind::Gaussian => 2,
        }
    }
}

/// Parameters of the dilated residual blocks only.
pub fn conv_param_count(cfg: &ModelConfig) -> usize {
    let (n, k) = (cfg.n_filters, cfg.kernel_size);
    let per_block = 2 * (n * n * k + n) + (n * n + n);
    if cfg.weight_tied {
        per_block
    } else {
        per_block * cfg.depth
    }
}

/// Named parameter tensors in deterministic (sorted) order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| invalid(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Copies every tensor of `other` into `self`, replacing same-named ones.
    pub fn merge(&mut self, other: &ParamStore) {
        for (k, v) in &other.tensors {
            self.tensors.insert(k.clone(), v.clone());
        }
    }

    /// Euclidean norm of each tensor.
    pub fn norms(&self) -> BTreeMap<String, f64> {
        self.tensors
            .iter()
            .map(|(k, t)| (k.clone(), t.data.iter().map(|v| v * v).sum::<f64>().sqrt()))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Name prefix of the block triple used at `level`.
pub fn block_prefix(cfg: &ModelConfig, level: usize) -> String {
    if cfg.weight_tied {
        "block.shared".to_string()
    } else {
        format!("block.{level}")
    }
}

/// Name prefix of the density head for horizon `t`.
pub fn head_prefix(t: usize) -> String {
    format!("head{t}")
}

fn gaussian_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    let normal = Normal::new(0.0, std).expect("positive std");
    Tensor::new(rows, cols, (0..rows * cols).map(|_| normal.sample(rng)).collect())
}

/// Backbone plus the horizon-1 head. Conv weights are scaled by
/// `1/sqrt(fan_in)`; the last layers of the FiLM and head perceptrons are
/// zero so the untrained model is the identity modulation and the standard
/// normal predictive.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, k, cin) = (cfg.n_filters, cfg.kernel_size, cfg.in_channels());
    let mut p = ParamStore::new();
    p.insert("input.w", gaussian_tensor(&mut rng, n, cin, 1.0 / (cin as f64).sqrt()));
    p.insert("input.b", Tensor::zeros(n, 1));
    let levels = if cfg.weight_tied { cfg.depth.min(1) } else { cfg.depth };
    for level in 0..levels {
        let pre = block_prefix(cfg, level);
        let conv_std = 1.0 / ((n * k) as f64).sqrt();
        p.insert(format!("{pre}.w_tanh"), gaussian_tensor(&mut rng, n, n * k, conv_std));
        p.insert(format!("{pre}.b_tanh"), Tensor::zeros(n, 1));
        p.insert(format!("{pre}.w_sig"), gaussian_tensor(&mut rng, n, n * k, conv_std));
        p.insert(format!("{pre}.b_sig"), Tensor::zeros(n, 1));
        p.insert(format!("{pre}.w_out"), gaussian_tensor(&mut rng, n, n, 0.5 / (n as f64).sqrt()));
        p.insert(format!("{pre}.b_out"), Tensor::zeros(n, 1));
    }
    if cfg.use_film {
        p.insert("film.w1", gaussian_tensor(&mut rng, n, 1, 1.0));
        p.insert("film.b1", Tensor::zeros(n, 1));
        p.insert("film.w2", Tensor::zeros(2 * n, n));
        p.insert("film.b2", Tensor::zeros(2 * n, 1));
    }
    p.merge(&init_head(cfg, 1, seed ^ 0x5eed_4ead)?);
    Ok(p)
}

/// Fresh identity-initialised density head for horizon `t`.
pub fn init_head(cfg: &ModelConfig, t: usize, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_filters;
    let pre = head_prefix(t);
    let mut p = ParamStore::new();
    p.insert(format!("{pre}.w1"), gaussian_tensor(&mut rng, n, n + 1, 1.0 / ((n + 1) as f64).sqrt()));
    p.insert(format!("{pre}.b1"), Tensor::zeros(n, 1));
    p.insert(format!("{pre}.w2"), Tensor::zeros(cfg.head_outputs(), n));
    p.insert(format!("{pre}.b2"), Tensor::zeros(cfg.head_outputs(), 1));
    Ok(p)
}

/// Weights of one gated residual block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub w_tanh: Kernel,
    pub b_tanh: Vec<f64>,
    pub w_sig: Kernel,
    pub b_sig: Vec<f64>,
    /// `channels x channels` 1x1 output projection.
    pub w_out: Tensor,
    pub b_out: Vec<f64>,
}

impl BlockParams {
    pub fn zeros(channels: usize, taps: usize) -> Self {
        Self {
            w_tanh: Kernel::zeros(channels, channels, taps),
            b_tanh: vec![0.0; channels],
            w_sig: Kernel::zeros(channels, channels, taps),
            b_sig: vec![0.0; channels],
            w_out: Tensor::zeros(channels, channels),
            b_out: vec![0.0; channels],
        }
    }

    pub fn random(channels: usize, taps: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |len: usize| gaussian_tensor(&mut rng, len, 1, scale).data;
        let n = channels;
        Self {
            w_tanh: Kernel::new(n, n, taps, draw(n * n * taps)),
            b_tanh: draw(n),
            w_sig: Kernel::new(n, n, taps, draw(n * n * taps)),
            b_sig: draw(n),
            w_out: Tensor::new(n, n, draw(n * n)),
            b_out: draw(n),
        }
    }

    pub fn channels(&self) -> usize {
        self.w_out.rows
    }

    pub fn from_store(store: &ParamStore, prefix: &str, taps: usize) -> Result<Self> {
        let get = |s: &str| store.get(&format!("{prefix}.{s}"));
        let kernel = |t: &Tensor| Kernel::new(t.rows, t.cols / taps, taps, t.data.clone());
        Ok(Self {
            w_tanh: kernel(get("w_tanh")?),
            b_tanh: get("b_tanh")?.data.clone(),
            w_sig: kernel(get("w_sig")?),
            b_sig: get("b_sig")?.data.clone(),
            w_out: get("w_out")?.clone(),
            b_out: get("b_out")?.data.clone(),
        })
    }

    fn bind(&self, tape: &mut Tape) -> BoundBlock {
        let k = &self.w_tanh;
        let s = &self.w_sig;
        BoundBlock {
            w_tanh: tape.constant(Tensor::new(k.out_channels, k.in_channels * k.taps, k.data.clone())),
            b_tanh: tape.constant(Tensor::vector(self.b_tanh.clone())),
            w_sig: tape.constant(Tensor::new(s.out_channels, s.in_channels * s.taps, s.data.clone())),
            b_sig: tape.constant(Tensor::vector(self.b_sig.clone())),
            w_out: tape.constant(self.w_out.clone()),
            b_out: tape.constant(Tensor::vector(self.b_out.clone())),
            taps: k.taps,
        }
    }
}

/// Per-channel modulation `gamma * x + beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilmParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl FilmParams {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
        }
    }
}

/// Causal dilated convolution over the full input length with zero left padding.
pub fn causal_dilated_conv(x: &Tensor, w: &Kernel, bias: Option<&[f64]>, dilation: usize) -> Result<Tensor> {
    if dilation == 0 {
        return Err(invalid("dilation must be >= 1"));
    }
    if w.in_channels != x.rows {
        return Err(invalid(format!(
            "kernel expects {} input channels, input has {}",
            w.in_channels, x.rows
        )));
    }
    if bias.is_some_and(|b| b.len() != w.out_channels) {
        return Err(invalid("bias length differs from output channels"));
    }
    let y = conv_forward(
        &x.data,
        x.cols,
        &w.data,
        bias,
        w.out_channels,
        w.in_channels,
        w.taps,
        dilation,
        x.cols,
    );
    Ok(Tensor::new(w.out_channels, x.cols, y))
}

/// Tied-kernel residual block with optional FiLM modulation.
pub fn sewn_block(x: &Tensor, shared: &BlockParams, dilation: usize, film: Option<&FilmParams>) -> Result<Tensor> {
    block_stack(x, &[shared], &[dilation], film)
}

/// Residual block with level-private weights and no modulation.
pub fn wavenet_block(x: &Tensor, own: &BlockParams, dilation: usize) -> Result<Tensor> {
    block_stack(x, &[own], &[dilation], None)
}

/// Applies `blocks[i]` at `dilations[i]` in sequence, full length, FiLM after
/// every block when given.
pub fn block_stack(
    x: &Tensor,
    blocks: &[&BlockParams],
    dilations: &[usize],
    film: Option<&FilmParams>,
) -> Result<Tensor> {
    if blocks.len() != dilations.len() {
        return Err(invalid("one dilation per block required"));
    }
    for b in blocks {
        if b.channels() != x.rows || b.w_tanh.in_channels != x.rows {
            return Err(invalid(format!(
                "block has {} channels, input has {}",
                b.channels(),
                x.rows
            )));
        }
    }
    if let Some(f) = film {
        if f.gamma.len() != x.rows || f.beta.len() != x.rows {
            return Err(invalid("FiLM width differs from channel count"));
        }
    }
    if dilations.contains(&0) {
        return Err(invalid("dilation must be >= 1"));
    }
    let mut tape = Tape::new();
    let mut h = tape.constant(x.clone());
    let film = film.map(|f| {
        (
            tape.constant(Tensor::vector(f.gamma.clone())),
            tape.constant(Tensor::vector(f.beta.clone())),
        )
    });
    for (b, &d) in blocks.iter().zip(dilations) {
        let bound = b.bind(&mut tape);
        h = residual_block(&mut tape, h, &bound, d, x.cols, film);
    }
    Ok(tape.value(h).clone())
}

/// Tape handles of one block's weights.
#[derive(Debug, Clone, Copy)]
pub struct BoundBlock {
    pub w_tanh: Var,
    pub b_tanh: Var,
    pub w_sig: Var,
    pub b_sig: Var,
    pub w_out: Var,
    pub b_out: Var,
    pub taps: usize,
}

/// `x + W_o(tanh(W_t *_d x) . sigmoid(W_s *_d x))` on the last `out_len`
/// columns of `x`, then FiLM.
pub fn residual_block(
    tape: &mut Tape,
    x: Var,
    b: &BoundBlock,
    dilation: usize,
    out_len: usize,
    film: Option<(Var, Var)>,
) -> Var {
    let t = tape.conv(x, b.w_tanh, Some(b.b_tanh), b.taps, dilation, out_len);
    let t = tape.tanh(t);
    let s = tape.conv(x, b.w_sig, Some(b.b_sig), b.taps, dilation, out_len);
    let s = tape.sigmoid(s);
    let z = tape.mul(t, s);
    let o = tape.conv(z, b.w_out, Some(b.b_out), 1, 1, out_len);
    let skip_from = tape.value(x).cols - out_len;
    let xs = tape.suffix_cols(x, skip_from);
    let y = tape.add(xs, o);
    match film {
        Some((g, beta)) => tape.channel_affine(y, g, beta),
        None => y,
    }
}

/// Parameters placed on a tape, by name.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Binds every tensor of `store`, as differentiable leaves when `trainable`.
    pub fn new(tape: &mut Tape, store: &ParamStore, trainable: bool) -> Self {
        let mut b = Self::default();
        b.extend(tape, store, trainable);
        b
    }

    pub fn extend(&mut self, tape: &mut Tape, store: &ParamStore, trainable: bool) {
        for (name, t) in store.iter() {
            let v = if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            };
            self.vars.insert(name.to_string(), v);
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| invalid(format!("parameter {name} not bound")))
    }

    fn block(&self, prefix: &str, taps: usize) -> Result<BoundBlock> {
        let g = |s: &str| self.get(&format!("{prefix}.{s}"));
        Ok(BoundBlock {
            w_tanh: g("w_tanh")?,
            b_tanh: g("b_tanh")?,
            w_sig: g("w_sig")?,
            b_sig: g("b_sig")?,
            w_out: g("w_out")?,
            b_out: g("b_out")?,
            taps,
        })
    }

    /// Gradient per bound name; zeros where the root does not depend on it.
    pub fn gradients(&self, tape: &Tape, grads: &Gradients) -> BTreeMap<String, Vec<f64>> {
        self.vars
            .iter()
            .map(|(name, &v)| {
                let g = grads
                    .get(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; tape.value(v).len()]);
                (name.clone(), g)
            })
            .collect()
    }
}

/// `(gamma, beta)` from the FiLM perceptron on `h_hat - 0.5`.
pub fn film_on_tape(tape: &mut Tape, bound: &Bound, n: usize, h_hat: f64) -> Result<(Var, Var)> {
    let hv = tape.constant(Tensor::vector(vec![h_hat - 0.5]));
    let h1 = tape.linear(bound.get("film.w1")?, hv, bound.get("film.b1")?);
    let h1 = tape.tanh(h1);
    let out = tape.linear(bound.get("film.w2")?, h1, bound.get("film.b2")?);
    let g = tape.slice(out, 0, n);
    let gamma = tape.offset(g, 1.0);
    let beta = tape.slice(out, n, n);
    Ok((gamma, beta))
}

/// Input tensor fed to the projection: the raw window, or its one-level Db4
/// approximation and detail stacked as two channels.
pub fn backbone_input(cfg: &ModelConfig, window: &[f64]) -> Result<Tensor> {
    if cfg.use_dwt {
        if window.len() < 4 {
            return Err(Error::TooShort {
                required: 4,
                actual: window.len(),
            });
        }
        let pair = dwt_db4(window)?;
        let n = pair.approx.len();
        let mut data = pair.approx;
        data.extend_from_slice(&pair.detail);
        Ok(Tensor::new(2, n, data))
    } else {
        if window.is_empty() {
            return Err(Error::TooShort { required: 1, actual: 0 });
        }
        Ok(Tensor::new(1, window.len(), window.to_vec()))
    }
}

/// Feature map `n_filters x out_len` covering the last `out_len` internal
/// time steps. Only the columns those outputs depend on are computed, which
/// gives the same values as a full-length pass.
pub fn backbone_on_tape(
    tape: &mut Tape,
    cfg: &ModelConfig,
    bound: &Bound,
    window: &[f64],
    h_hat: f64,
    out_len: usize,
) -> Result<Var> {
    let input = backbone_input(cfg, window)?;
    let n_int = input.cols;
    if out_len == 0 || out_len > n_int {
        return Err(invalid(format!("out_len {out_len} outside 1..={n_int}")));
    }
    // needed[l]: columns required at the input of block l
    let dil = cfg.dilations();
    let mut needed = vec![out_len; cfg.depth + 1];
    for l in (0..cfg.depth).rev() {
        needed[l] = (needed[l + 1] + (cfg.kernel_size - 1) * dil[l]).min(n_int);
    }
    let start = n_int - needed[0];
    let x = tape.constant(input);
    let x = tape.suffix_cols(x, start);
    let mut h = tape.conv(x, bound.get("input.w")?, Some(bound.get("input.b")?), 1, 1, needed[0]);
    let film = if cfg.use_film {
        Some(film_on_tape(tape, bound, cfg.n_filters, h_hat)?)
    } else {
        None
    };
    for l in 0..cfg.depth {
        let b = bound.block(&block_prefix(cfg, l), cfg.kernel_size)?;
        h = residual_block(tape, h, &b, dil[l], needed[l + 1], film);
    }
    Ok(h)
}

/// Context vector `c_T` (width `n_filters`) at the last time step.
pub fn context_on_tape(tape: &mut Tape, cfg: &ModelConfig, bound: &Bound, window: &[f64], h_hat: f64) -> Result<Var> {
    let h = backbone_on_tape(tape, cfg, bound, window, h_hat, 1)?;
    Ok(tape.column(h, 0))
}

/// Context vector from frozen parameters.
pub fn context(cfg: &ModelConfig, store: &ParamStore, window: &[f64], h_hat: f64) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, store, false);
    let c = context_on_tape(&mut tape, cfg, &bound, window, h_hat)?;
    Ok(tape.value(c).data.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_counts() {
        let mut cfg = ModelConfig::default();
        assert_eq!(conv_param_count(&cfg), 1840);
        cfg.weight_tied = false;
        assert_eq!(conv_param_count(&cfg), 7360);
    }

    #[test]
    fn tied_store_has_one_triple() {
        let p = init_params(&ModelConfig::default(), 1).unwrap();
        let blocks: Vec<_> = p.names().filter(|n| n.starts_with("block.")).collect();
        assert_eq!(blocks.len(), 6);
        assert!(blocks.iter().all(|n| n.starts_with("block.shared.")));
        let untied = init_params(
            &ModelConfig {
                weight_tied: false,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        assert_eq!(untied.names().filter(|n| n.starts_with("block.")).count(), 24);
    }

    #[test]
    fn hand_convolution() {
        let x = Tensor::new(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let w = Kernel::new(1, 1, 2, vec![1.0, 1.0]);
        let y = causal_dilated_conv(&x, &w, None, 2).unwrap();
        assert_eq!(y.data, vec![1.0, 2.0, 4.0, 6.0]);
        let id = Kernel::new(1, 1, 3, vec![1.0, 0.0, 0.0]);
        assert_eq!(causal_dilated_conv(&x, &id, None, 3).unwrap().data, x.data);
    }

    #[test]
    fn truncated_context_matches_full_pass() {
        for tied in [true, false] {
            for dwt in [true, false] {
                let cfg = ModelConfig {
                    weight_tied: tied,
                    use_dwt: dwt,
                    ..Default::default()
                };
                let mut p = init_params(&cfg, 7).unwrap();
                // non-trivial FiLM
                let w2 = p.get_mut("film.w2").unwrap();
                w2.data.iter_mut().enumerate().for_each(|(i, v)| *v = 0.01 * (i % 7) as f64);
                let window: Vec<f64> = (0..100).map(|i| ((i * 37 % 17) as f64 - 8.0) / 5.0).collect();
                let mut tape = Tape::new();
                let bound = Bound::new(&mut tape, &p, false);
                let n_int = backbone_input(&cfg, &window).unwrap().cols;
                let full = backbone_on_tape(&mut tape, &cfg, &bound, &window, 0.7, n_int).unwrap();
                let full_last = tape.value(full).last_col();
                let c = context(&cfg, &p, &window, 0.7).unwrap();
                assert_eq!(c, full_last.data);
            }
        }
    }
}
