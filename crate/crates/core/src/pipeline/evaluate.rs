//! Out-of-sample evaluation, paired comparisons and the ablation harness.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::data::{Universe, WindowRef};
use super::train::{train_variants, TrainConfig, TrainedModel, Variant};
use crate::baselines::{garch_fit, IidGaussian};
use crate::collapse::{curves_from_samples, model_collapse, optimal_collapse, EtaBand, HorizonSampler};
use crate::error::{invalid, Result};
use crate::nn::{ModelConfig, Predictive};
use crate::stats::{block_bootstrap_ci, holm_bonferroni, ks_uniform, tail_energy_distance, wilcoxon_signed_rank, TestResult};
use crate::synth::block_sums;
use crate::util;

pub const IID_NAME: &str = "iid_gaussian";
pub const GARCH_NAME: &str = "garch_1_1";
pub const COLLAPSE_HORIZONS: [usize; 4] = [1, 5, 21, 63];
pub const BOOTSTRAP_BLOCK: usize = 21;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const MODEL_COLLAPSE_SAMPLES: usize = 2000;

/// Metrics of one (model, seed, ticker, horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model: String,
    pub seed: u64,
    pub ticker: String,
    pub horizon: usize,
    /// Test-set size.
    pub n: usize,
    pub nll: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub ks: f64,
    /// `None` when either tail subset is empty.
    pub tail_energy: Option<f64>,
}

/// Aggregate of one (model, horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub label: String,
    pub conv_params: usize,
    pub horizon: usize,
    pub n_tickers: usize,
    pub n_seeds: usize,
    pub mean_nll: f64,
    /// Population std of per-ticker NLL (seed-averaged).
    pub ticker_std: f64,
    /// Population std of the universe-mean NLL across seeds.
    pub seed_std: f64,
    /// The larger of the two dispersions.
    pub error_bar: f64,
    pub mean_ks: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Comparison,
    Ablation,
}

/// Paired per-ticker test of `candidate` against `reference`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub family: Family,
    pub reference: String,
    pub candidate: String,
    pub horizon: usize,
    /// `mean NLL(candidate) - mean NLL(reference)`; positive means the candidate is worse.
    pub delta_nll: f64,
    /// `None` when fewer than five tickers differ.
    pub test: Option<TestResult>,
    pub holm_adjusted: Option<f64>,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseRow {
    pub model: String,
    pub h_star: f64,
    pub c_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub horizons: Vec<usize>,
    pub models: Vec<String>,
    pub tickers: Vec<String>,
    pub cells: Vec<Cell>,
    pub rows: Vec<ModelRow>,
    pub comparisons: Vec<Comparison>,
    /// Pooled disjoint block sums of the standardised series.
    pub empirical_collapse: Option<CollapseRow>,
    pub model_collapse: Vec<CollapseRow>,
}

impl EvalReport {
    pub fn row(&self, model: &str, horizon: usize) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.model == model && r.horizon == horizon)
    }

    pub fn comparison(&self, reference: &str, candidate: &str, horizon: usize) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.reference == reference && c.candidate == candidate && c.horizon == horizon)
    }
}

/// Test windows at horizon `t` for every ticker, and their targets.
fn test_set(u: &Universe, t: usize) -> Vec<(Vec<WindowRef>, Vec<f64>)> {
    (0..u.series.len())
        .map(|i| {
            let refs: Vec<WindowRef> = u.test_starts(i, t).map(|s| (i, s)).collect();
            let targets = refs.iter().map(|&r| u.target(r, t)).collect();
            (refs, targets)
        })
        .collect()
}

fn cell(model: &str, seed: u64, ticker: &str, t: usize, preds: &[Predictive], targets: &[f64]) -> Result<Cell> {
    let losses: Vec<f64> = preds.iter().zip(targets).map(|(p, &r)| -p.logpdf(r)).collect();
    let nll = util::mean(&losses);
    let (ci_lo, ci_hi) = if losses.len() >= 2 * BOOTSTRAP_BLOCK {
        block_bootstrap_ci(&losses, BOOTSTRAP_BLOCK, BOOTSTRAP_RESAMPLES, 0.95, seed ^ t as u64)?
    } else {
        (nll, nll)
    };
    let ks = ks_uniform(preds.iter().zip(targets).map(|(p, &r)| p.cdf(r)).collect())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
    let draws: Vec<f64> = preds
        .iter()
        .map(|p| {
            let z: f64 = StandardNormal.sample(&mut rng);
            p.transform(z)
        })
        .collect();
    let tail_energy = tail_energy_distance(&draws, targets, util::pop_std(targets));
    Ok(Cell {
        model: model.to_string(),
        seed,
        ticker: ticker.to_string(),
        horizon: t,
        n: targets.len(),
        nll,
        ci_lo,
        ci_hi,
        ks,
        tail_energy,
    })
}

/// Draws horizon-T values from a model's predictives over the test windows.
struct TestSampler<'a> {
    preds: BTreeMap<usize, Vec<Predictive>>,
    _u: &'a Universe,
}

impl HorizonSampler for TestSampler<'_> {
    fn sample(&mut self, horizon: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
        let p = self
            .preds
            .get(&horizon)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| invalid(format!("no predictives at horizon {horizon}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                p[i % p.len()].transform(z)
            })
            .collect())
    }
}

fn pooled_empirical_collapse(u: &Universe) -> Option<CollapseRow> {
    let samples: Vec<(usize, Vec<f64>)> = COLLAPSE_HORIZONS
        .iter()
        .map(|&t| (t, u.series.iter().flat_map(|s| block_sums(&s.values, t)).collect()))
        .collect();
    let (curves, _) = curves_from_samples(&samples).ok()?;
    let r = optimal_collapse(&curves, EtaBand::default()).ok()?;
    Some(CollapseRow {
        model: "empirical".into(),
        h_star: r.h_star,
        c_star: r.c_star,
    })
}

fn label_of(name: &str) -> String {
    match name {
        IID_NAME => "IID Gaussian".into(),
        GARCH_NAME => "GARCH(1,1)".into(),
        other => Variant::parse(other).map(|v| v.label().to_string()).unwrap_or_else(|_| other.to_string()),
    }
}

/// Evaluates trained models, and optionally the IID and GARCH baselines, on
/// the shared test windows at `horizons`.
pub fn evaluate(u: &Universe, models: &[TrainedModel], horizons: &[usize], baselines: bool) -> Result<EvalReport> {
    if models.is_empty() && !baselines {
        return Err(invalid("nothing to evaluate"));
    }
    if horizons.is_empty() {
        return Err(invalid("no evaluation horizons"));
    }
    for m in models {
        for &t in horizons {
            if !m.horizons.contains(&t) {
                return Err(invalid(format!("model {} has no head for horizon {t}", m.name)));
            }
        }
    }
    let tickers = u.tickers();
    let mut cells = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut conv: BTreeMap<String, usize> = BTreeMap::new();

    if baselines {
        for name in [IID_NAME, GARCH_NAME] {
            names.push(name.into());
            conv.insert(name.into(), 0);
        }
        for (i, s) in u.series.iter().enumerate() {
            let train = &s.values[..s.boundary];
            let iid = IidGaussian::fit(train)?;
            let garch = garch_fit(train)?;
            for &t in horizons {
                let (refs, targets) = &test_set(u, t)[i];
                let preds = vec![iid.predictive(t); refs.len()];
                cells.push(cell(IID_NAME, 0, &s.id, t, &preds, targets)?);
                let origins: Vec<usize> = refs.iter().map(|&(_, st)| st + u.window_len).collect();
                let preds = garch.predictives(&s.values, &origins, t)?;
                cells.push(cell(GARCH_NAME, 0, &s.id, t, &preds, targets)?);
            }
        }
    }

    let mut model_collapse_rows = Vec::new();
    let sets: BTreeMap<usize, Vec<(Vec<WindowRef>, Vec<f64>)>> = horizons
        .iter()
        .chain(COLLAPSE_HORIZONS.iter())
        .map(|&t| (t, test_set(u, t)))
        .collect();
    for m in models {
        if !names.contains(&m.name) {
            names.push(m.name.clone());
            conv.insert(m.name.clone(), m.conv_params);
        }
        // contexts of the horizon-1 test windows cover every other horizon
        let refs1: Vec<WindowRef> = sets[&1].iter().flat_map(|(r, _)| r.clone()).collect();
        let ctx1 = m.contexts(u, &refs1)?;
        let lookup: BTreeMap<WindowRef, usize> = refs1.iter().enumerate().map(|(k, &r)| (r, k)).collect();
        let mut by_h: BTreeMap<usize, Vec<Predictive>> = BTreeMap::new();
        for (&t, set) in &sets {
            if !m.horizons.contains(&t) {
                continue;
            }
            for (i, (refs, targets)) in set.iter().enumerate() {
                let ctx: Vec<Vec<f64>> = refs.iter().map(|r| ctx1[lookup[r]].clone()).collect();
                let preds = m.predictives(u, refs, &ctx, t)?;
                if horizons.contains(&t) {
                    cells.push(cell(&m.name, m.seed, &tickers[i], t, &preds, targets)?);
                }
                by_h.entry(t).or_default().extend(preds);
            }
        }
        let first_seed = models.iter().find(|o| o.name == m.name).map(|o| o.seed) == Some(m.seed);
        if first_seed && COLLAPSE_HORIZONS.iter().all(|t| m.horizons.contains(t)) {
            let mut sampler = TestSampler { preds: by_h, _u: u };
            if let Ok(mc) = model_collapse(
                &mut sampler,
                &COLLAPSE_HORIZONS,
                MODEL_COLLAPSE_SAMPLES,
                m.seed,
                EtaBand::default(),
                None,
            ) {
                model_collapse_rows.push(CollapseRow {
                    model: m.name.clone(),
                    h_star: mc.result.h_star,
                    c_star: mc.c_star_model,
                });
            }
        }
    }

    let rows = aggregate_rows(&cells, &names, &conv, horizons);
    Ok(EvalReport {
        horizons: horizons.to_vec(),
        models: names,
        tickers,
        cells,
        rows,
        comparisons: Vec::new(),
        empirical_collapse: pooled_empirical_collapse(u),
        model_collapse: model_collapse_rows,
    })
}

/// Seed-averaged NLL per ticker, in ticker order of first appearance.
fn per_ticker(cells: &[Cell], model: &str, t: usize) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.model == model && c.horizon == t) {
        let e = acc.entry(c.ticker.clone()).or_default();
        e.0 += c.nll;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn aggregate_rows(cells: &[Cell], names: &[String], conv: &BTreeMap<String, usize>, horizons: &[usize]) -> Vec<ModelRow> {
    let mut rows = Vec::new();
    for name in names {
        for &t in horizons {
            let mine: Vec<&Cell> = cells.iter().filter(|c| &c.model == name && c.horizon == t).collect();
            if mine.is_empty() {
                continue;
            }
            let tick: Vec<f64> = per_ticker(cells, name, t).into_values().collect();
            let mut by_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            for c in &mine {
                by_seed.entry(c.seed).or_default().push(c.nll);
            }
            let seed_means: Vec<f64> = by_seed.values().map(|v| util::mean(v)).collect();
            let ticker_std = util::pop_std(&tick);
            let seed_std = if seed_means.len() > 1 { util::pop_std(&seed_means) } else { 0.0 };
            let ks: Vec<f64> = mine.iter().map(|c| c.ks).collect();
            rows.push(ModelRow {
                model: name.clone(),
                label: label_of(name),
                conv_params: conv[name],
                horizon: t,
                n_tickers: tick.len(),
                n_seeds: seed_means.len(),
                mean_nll: util::mean(&tick),
                ticker_std,
                seed_std,
                error_bar: ticker_std.max(seed_std),
                mean_ks: util::mean(&ks),
            });
        }
    }
    rows
}

/// Wilcoxon tests of each candidate against `reference` on per-ticker NLL,
/// Holm-adjusted within each horizon. Appended to `report.comparisons`.
pub fn compare(report: &mut EvalReport, family: Family, reference: &str, candidates: &[&str], alpha: f64) -> Result<()> {
    for &t in &report.horizons {
        let base = per_ticker(&report.cells, reference, t);
        if base.is_empty() {
            return Err(invalid(format!("reference model {reference} has no results at horizon {t}")));
        }
        let mut fresh = Vec::new();
        for &cand in candidates {
            let other = per_ticker(&report.cells, cand, t);
            if other.keys().ne(base.keys()) {
                return Err(invalid(format!("{cand} and {reference} were evaluated on different tickers")));
            }
            let deltas: Vec<f64> = other.iter().map(|(k, v)| v - base[k]).collect();
            let test = if deltas.iter().all(|&d| d == 0.0) {
                Some(TestResult {
                    statistic: 0.0,
                    p_value: 1.0,
                    n: 0,
                    method: "identical".into(),
                })
            } else {
                wilcoxon_signed_rank(&deltas).ok()
            };
            fresh.push(Comparison {
                family,
                reference: reference.to_string(),
                candidate: cand.to_string(),
                horizon: t,
                delta_nll: util::mean(&other.values().copied().collect::<Vec<_>>()) - util::mean(&base.values().copied().collect::<Vec<_>>()),
                test,
                holm_adjusted: None,
                reject: false,
            });
        }
        let tested: Vec<usize> = (0..fresh.len()).filter(|&i| fresh[i].test.is_some()).collect();
        let ps: Vec<f64> = tested.iter().map(|&i| fresh[i].test.as_ref().unwrap().p_value).collect();
        let holm = holm_bonferroni(&ps, alpha)?;
        for (k, &i) in tested.iter().enumerate() {
            fresh[i].holm_adjusted = Some(holm.adjusted[k]);
            fresh[i].reject = holm.reject[k];
        }
        report.comparisons.extend(fresh);
    }
    Ok(())
}

/// Trains the three network families, evaluates them with both baselines and
/// tests every other model against the full SE-WaveNet.
pub fn run_comparison(u: &Universe, base: &ModelConfig, tc: &TrainConfig, eval_horizons: &[usize]) -> Result<(EvalReport, Vec<TrainedModel>)> {
    let models = train_variants(u, &Variant::TABLE, base, tc)?;
    let report = comparison_report(u, &models, eval_horizons)?;
    Ok((report, models))
}

fn comparison_report(u: &Universe, models: &[TrainedModel], eval_horizons: &[usize]) -> Result<EvalReport> {
    let mut report = evaluate(u, models, eval_horizons, true)?;
    compare(
        &mut report,
        Family::Comparison,
        Variant::SeWavenetFull.name(),
        &[IID_NAME, GARCH_NAME, Variant::WavenetGaussian.name(), Variant::WavenetFlowFilm.name()],
        0.05,
    )?;
    Ok(report)
}

fn ablation_report(u: &Universe, models: &[TrainedModel], eval_horizons: &[usize]) -> Result<EvalReport> {
    let mut report = evaluate(u, models, eval_horizons, false)?;
    let cands: Vec<&str> = Variant::ABLATIONS[1..].iter().map(|v| v.name()).collect();
    compare(&mut report, Family::Ablation, Variant::SeWavenetFull.name(), &cands, 0.05)?;
    Ok(report)
}

/// Retrains the full model and each single-ingredient ablation with the same
/// seeds and tests every ablation against the full model.
pub fn ablate(u: &Universe, base: &ModelConfig, tc: &TrainConfig, eval_horizons: &[usize]) -> Result<(EvalReport, Vec<TrainedModel>)> {
    let models = train_variants(u, &Variant::ABLATIONS, base, tc)?;
    let report = ablation_report(u, &models, eval_horizons)?;
    Ok((report, models))
}

/// Comparison and ablation reports with the full model trained once.
#[derive(Debug, Clone)]
pub struct PilotOutcome {
    pub comparison: EvalReport,
    pub ablation: EvalReport,
    pub models: Vec<TrainedModel>,
}

pub fn run_pilot(u: &Universe, base: &ModelConfig, tc: &TrainConfig, eval_horizons: &[usize]) -> Result<PilotOutcome> {
    let variants: Vec<Variant> = Variant::TABLE.into_iter().chain(Variant::ABLATIONS[1..].iter().copied()).collect();
    let models = train_variants(u, &variants, base, tc)?;
    let pick = |vs: &[Variant]| -> Vec<TrainedModel> {
        models
            .iter()
            .filter(|m| vs.iter().any(|v| v.name() == m.name))
            .cloned()
            .collect()
    };
    let comparison = comparison_report(u, &pick(&Variant::TABLE), eval_horizons)?;
    let ablation = ablation_report(u, &pick(&Variant::ABLATIONS), eval_horizons)?;
    Ok(PilotOutcome {
        comparison,
        ablation,
        models,
    })
}
