//! Command-line front end. Exit codes: 0 success, 1 user error, 2 internal failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sewave::collapse::{series_collapse, EtaBand};
use sewave::equivariance::{verify_corollary1, verify_corollary1_with, verify_prop1_with, StackCheck};
use sewave::estimators::{fscore, rs_hurst};
use sewave::gradcheck::{check_random, GradTarget};
use sewave::pipeline::{self, report, ExperimentConfig, TrainedModel, Variant};
use sewave::series::{load_csv, read_single_column, write_single_column, CsvFormat, TimeSeries};
use sewave::spectral::{spectral_fit, Band};
use sewave::synth::{synth_fgn, HurstExponent};

const OUT_DIR_ENV: &str = "SEWAVE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "sewave", version, about = "Scale-equivariant generative forecasting for self-similar series")]
struct Cli {
    /// Directory that relative output paths resolve against.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Unit-variance fractional Gaussian noise as a single-column CSV.
    Synth {
        #[arg(long)]
        hurst: f64,
        #[arg(long)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-ticker R/S and Allan-variance scores of a return or price panel.
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Return)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Characteristic-function collapse of a single series.
    Collapse {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,5,21,63")]
        horizons: Vec<usize>,
        #[arg(long, value_delimiter = ',', num_args = 2, default_value = "0.5,3.0")]
        eta_band: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Welch spectrum and spectral slope of a single series.
    Spectrum {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 256)]
        segment: usize,
        /// `f_min,f_max`; defaults to `4/segment,0.25`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        band: Option<Vec<f64>>,
        /// Hurst exponent of the target law; R/S estimate when omitted.
        #[arg(long)]
        hurst: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Equivariance identities and gradient checks on random weights.
    Verify {
        #[arg(long)]
        prop1: bool,
        #[arg(long)]
        corollary1: bool,
        #[arg(long)]
        gradients: bool,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains one variant per configured seed and saves the models.
    Train {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "se_wavenet_full")]
        variant: String,
    },
    /// Evaluates saved models (and the baselines) on the test windows.
    Evaluate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Model files written by `train`.
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        no_baselines: bool,
    },
    /// Trains the full model and every ablation and tests each against the full model.
    Ablate {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Converts a JSON report to another format.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
        format: ReportFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; defaults apply to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output subdirectory (relative to the output directory).
    #[arg(long, default_value = ".")]
    dest: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Return,
    Price,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

struct Out(Option<PathBuf>);

impl Out {
    fn path(&self, p: &Path) -> PathBuf {
        match &self.0 {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn write(&self, p: &Path, text: &str) -> anyhow::Result<PathBuf> {
        let path = self.path(p);
        if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|source| sewave::Error::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(&path, text).map_err(|source| sewave::Error::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

fn json<T: serde::Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v).map_err(sewave::Error::from)?)
}

fn load_series(path: &Path) -> anyhow::Result<TimeSeries> {
    let values = read_single_column(path)?;
    let id = path.file_stem().map_or("series".into(), |s| s.to_string_lossy().into_owned());
    Ok(TimeSeries::new(id, values)?)
}

fn experiment(args: &ExperimentArgs) -> anyhow::Result<ExperimentConfig> {
    Ok(match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let cfg = ExperimentConfig::default();
            cfg.validate()?;
            cfg
        }
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let out = Out(cli.out_dir);
    match cli.command {
        Command::Synth {
            hurst,
            length,
            seed,
            out: file,
        } => {
            let x = synth_fgn(HurstExponent::new(hurst)?, length, seed)?;
            let path = out.path(&file);
            if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            write_single_column(&path, x.values())?;
            println!("wrote {length} samples to {}", path.display());
        }
        Command::Estimate { input, format, out: file } => {
            let fmt = match format {
                Format::Return => CsvFormat::Return,
                Format::Price => CsvFormat::Price,
            };
            let panel = load_csv(&input, fmt)?;
            let mut text = String::from("ticker,h_rs,h_av,rho,excess_kurtosis,f,prefiltered\n");
            for s in panel.iter() {
                let h_rs = rs_hurst(s)?.value;
                let r = fscore(s)?;
                text.push_str(&format!(
                    "{},{h_rs},{},{},{},{},{}\n",
                    r.ticker, r.h_av, r.rho, r.excess_kurtosis, r.f, r.prefiltered
                ));
            }
            let path = out.write(&file, &text)?;
            println!("scored {} tickers into {}", panel.len(), path.display());
        }
        Command::Collapse {
            input,
            horizons,
            eta_band,
            out: file,
        } => {
            let x = load_series(&input)?;
            let band = EtaBand {
                min: eta_band[0],
                max: eta_band[1],
            };
            let r = series_collapse(x.values(), &horizons, band)?;
            let path = out.write(&file, &json(&r)?)?;
            println!("H* = {:.4}, C* = {:.5} ({})", r.h_star, r.c_star, path.display());
        }
        Command::Spectrum {
            input,
            segment,
            band,
            hurst,
            out: file,
        } => {
            let x = load_series(&input)?;
            let band = match band {
                Some(b) => Band { f_min: b[0], f_max: b[1] },
                None => Band::default_for(segment),
            };
            let h = match hurst {
                Some(h) => h,
                None => rs_hurst(&x)?.value,
            };
            let fit = spectral_fit(x.values(), segment, band, h)?;
            let path = out.write(&file, &json(&fit)?)?;
            println!("beta = {:.4} (target {:.4}) ({})", fit.beta_hat, fit.beta_target, path.display());
        }
        Command::Verify {
            prop1,
            corollary1,
            gradients,
            trials,
            seed,
            out: file,
        } => {
            if !(prop1 || corollary1 || gradients) {
                bail!(sewave::Error::InvalidInput(
                    "select at least one of --prop1, --corollary1, --gradients".into()
                ));
            }
            let mut report = serde_json::Map::new();
            if prop1 {
                let mut runs = Vec::new();
                for d in [1, 2, 4] {
                    runs.push(verify_prop1_with(3, 4, 256, d, trials, seed, false)?);
                }
                let max = runs.iter().map(|r| r.max_abs_residual).fold(0.0, f64::max);
                println!("prop1: max residual {max:e} over {} trials per dilation", trials);
                report.insert("prop1".into(), serde_json::to_value(runs).map_err(sewave::Error::from)?);
            }
            if corollary1 {
                let check = StackCheck::default();
                let tied = verify_corollary1(check, trials, seed)?;
                let untied = verify_corollary1_with(check, trials, seed, true)?;
                println!(
                    "corollary1: tied max interior residual {:e}, untied median {:e}",
                    tied.max_abs_residual,
                    untied.median_residual()
                );
                report.insert(
                    "corollary1".into(),
                    serde_json::json!({ "tied": tied, "untied_control": untied }),
                );
            }
            if gradients {
                let mut rows = Vec::new();
                for target in [GradTarget::Block, GradTarget::Head, GradTarget::Backbone] {
                    for i in 0..trials {
                        rows.push(check_random(target, seed.wrapping_add(i as u64))?);
                    }
                }
                let max = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
                println!("gradients: max relative error {max:e} over {} configurations", rows.len());
                report.insert("gradients".into(), serde_json::to_value(rows).map_err(sewave::Error::from)?);
            }
            let path = out.write(&file, &json(&report)?)?;
            println!("report in {}", path.display());
        }
        Command::Train { exp, variant } => {
            let cfg = experiment(&exp)?;
            let v = Variant::parse(&variant)?;
            let u = cfg.universe()?;
            let dir = out.path(&exp.dest);
            for m in pipeline::train_variant(&u, v, &cfg.model, &cfg.train)? {
                let name = format!("{}_seed{}.json", m.name, m.seed);
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                m.save(dir.join(&name))?;
                let last = m.history.backbone.last().expect("at least one epoch");
                println!(
                    "{} seed {}: train NLL {:.4}, validation NLL {} -> {}",
                    m.name,
                    m.seed,
                    last.train_nll,
                    last.val_nll.map_or("n/a".into(), |v| format!("{v:.4}")),
                    dir.join(name).display()
                );
            }
        }
        Command::Evaluate {
            exp,
            models,
            no_baselines,
        } => {
            let cfg = experiment(&exp)?;
            let u = cfg.universe()?;
            let trained: Vec<TrainedModel> = models.iter().map(TrainedModel::load).collect::<sewave::Result<_>>()?;
            let rep = pipeline::evaluate(&u, &trained, &cfg.horizons(), !no_baselines)?;
            let dir = out.path(&exp.dest);
            report::write_all(&rep, &dir)?;
            print!("{}", report::to_markdown(&rep)?);
        }
        Command::Ablate { exp } => {
            let cfg = experiment(&exp)?;
            let u = cfg.universe()?;
            let (rep, _) = pipeline::ablate(&u, &cfg.model, &cfg.train, &cfg.horizons())?;
            let dir = out.path(&exp.dest);
            report::write_all(&rep, &dir)?;
            print!("{}", report::to_markdown(&rep)?);
        }
        Command::Report { input, format, out: file } => {
            let text = std::fs::read_to_string(&input).map_err(|source| sewave::Error::Io {
                path: input.clone(),
                source,
            })?;
            let rep = report::from_json(&text)?;
            let body = match format {
                ReportFormat::Json => report::to_json(&rep)?,
                ReportFormat::Csv => report::to_csv(&rep)?,
                ReportFormat::Markdown => report::to_markdown(&rep)?,
            };
            let path = out.write(&file, &body)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<sewave::Error>() {
        Some(e) if !e.is_user_error() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_failures_map_to_two() {
        let internal = anyhow::Error::from(sewave::Error::Numerical("loss is NaN".into()));
        assert_eq!(exit_code(&internal), 2);
        let user = anyhow::Error::from(sewave::Error::InvalidInput("bad".into()));
        assert_eq!(exit_code(&user), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("creating dir")), 1);
    }

    #[test]
    fn relative_outputs_resolve_against_out_dir() {
        let out = Out(Some(PathBuf::from("/tmp/o")));
        assert_eq!(out.path(Path::new("a/b.json")), PathBuf::from("/tmp/o/a/b.json"));
        assert_eq!(out.path(Path::new("/abs.json")), PathBuf::from("/abs.json"));
        assert_eq!(Out(None).path(Path::new("x")), PathBuf::from("x"));
    }
}
