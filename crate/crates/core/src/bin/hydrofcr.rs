//! Command-line front end: each offline step of the study as a subcommand,
//! plus the four-mode batch run and its report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hydrofcr::hillchart::{load_training_csv, write_training_csv};
use hydrofcr::kpi::{KpiReport, Trace};
use hydrofcr::scenario::report::{kpi_path, trace_path, write_batch, write_comparison, write_plots, BASELINE};
use hydrofcr::scenario::{load_frequency_csv, run_batch, FrequencySeries, Pipeline, ScenarioConfig, ScenarioMode};
use hydrofcr::surrogate::{fit, EfficiencySurrogate};
use hydrofcr::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "hydrofcr", version, about = "Hydropower FCR simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML scenario configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the ground-truth hill chart on the training grid.
    GenHillchart,
    /// Fit the efficiency surrogate and save it as JSON.
    FitSurrogate {
        /// Training CSV from `gen-hillchart`; sampled afresh when omitted.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Build the Kaplan and variable-speed CAM tables.
    GenCam {
        /// Surrogate JSON from `fit-surrogate`; fitted afresh when omitted.
        #[arg(long)]
        surrogate: Option<PathBuf>,
    },
    /// Write the frequency series the simulation would use.
    GenFrequency {
        #[arg(long)]
        freq: Option<String>,
    },
    /// Run the configured modes on one frequency series.
    Simulate {
        /// `synthetic` or a `time_s,frequency_hz` CSV.
        #[arg(long)]
        freq: Option<String>,
        /// Comma-separated subset of only_hydro, hybrid_5kw, hybrid_9kw, var_speed.
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<ScenarioMode>>,
        #[arg(long)]
        surrogate: Option<PathBuf>,
    },
    /// Tabulate KPI reports against a baseline.
    Compare {
        /// KPI JSON files; defaults to every `kpi_*.json` in the output directory.
        reports: Vec<PathBuf>,
        #[arg(long, default_value = BASELINE)]
        baseline: String,
    },
    /// Draw the figures from traces in the output directory.
    Report {
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<ScenarioMode>>,
    },
}

fn load_config(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn frequency(cfg: &mut ScenarioConfig, arg: Option<&str>) -> Result<FrequencySeries> {
    match arg {
        None => cfg.frequency_series(),
        Some("synthetic") => {
            cfg.frequency.path = None;
            cfg.frequency_series()
        }
        Some(path) => {
            cfg.frequency.path = Some(PathBuf::from(path));
            load_frequency_csv(Path::new(path))
        }
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn pipeline(cfg: &ScenarioConfig, surrogate: Option<&Path>) -> Result<Pipeline> {
    match surrogate {
        Some(p) => Pipeline::with_surrogate(cfg, Pipeline::chart(cfg)?, EfficiencySurrogate::load(p)?),
        None => Pipeline::build(cfg),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    match cli.command {
        Command::GenHillchart => {
            let chart = Pipeline::chart(&cfg)?;
            let samples = Pipeline::training_set(&cfg, &chart)?;
            mkdir(out)?;
            let path = out.join("hillchart.csv");
            let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_training_csv(&samples, std::io::BufWriter::new(f))?;
            println!("{} samples -> {}", samples.len(), path.display());
        }
        Command::FitSurrogate { samples } => {
            let samples = match samples {
                Some(p) => load_training_csv(&p)?,
                None => Pipeline::training_set(&cfg, &Pipeline::chart(&cfg)?)?,
            };
            let model = fit(&samples, &cfg.surrogate.fit_config())?;
            mkdir(out)?;
            let path = out.join("surrogate.json");
            model.save(&path)?;
            let s = model.fit_stats();
            println!(
                "{} terms, held-out mse {:.3e}, r2 {:.4} -> {}",
                model.coefficients().len(),
                s.mse,
                s.r2,
                path.display()
            );
        }
        Command::GenCam { surrogate } => {
            let p = pipeline(&cfg, surrogate.as_deref())?;
            mkdir(out)?;
            p.kaplan.save(out, "cam_kaplan")?;
            p.varspeed.save(out, "cam_varspeed")?;
            println!(
                "kaplan {} rows, varspeed {} rows -> {}",
                p.kaplan.rows.len(),
                p.varspeed.rows.len(),
                out.display()
            );
        }
        Command::GenFrequency { freq } => {
            let series = frequency(&mut cfg, freq.as_deref())?;
            mkdir(out)?;
            let path = out.join("frequency.csv");
            series.save(&path)?;
            println!("{} samples -> {}", series.values.len(), path.display());
        }
        Command::Simulate { freq, modes, surrogate } => {
            if let Some(m) = modes {
                cfg.modes = m;
            }
            let series = frequency(&mut cfg, freq.as_deref())?;
            let p = pipeline(&cfg, surrogate.as_deref())?;
            let outcomes = run_batch(&cfg, &p, &series)?;
            let written = write_batch(out, &outcomes)?;
            if outcomes.iter().any(|o| o.mode == ScenarioMode::OnlyHydro) {
                print!(
                    "{}",
                    std::fs::read_to_string(out.join("comparison.txt")).map_err(|e| Error::io(out, e))?
                );
            }
            println!("{} files -> {}", written.len(), out.display());
        }
        Command::Compare { reports, baseline } => {
            let paths = if reports.is_empty() {
                ScenarioMode::ALL
                    .iter()
                    .map(|m| kpi_path(out, m.as_str()))
                    .filter(|p| p.exists())
                    .collect()
            } else {
                reports
            };
            if paths.is_empty() {
                return Err(Error::Empty(format!("no KPI reports in {}", out.display())));
            }
            let loaded = paths.iter().map(|p| KpiReport::load(p)).collect::<Result<Vec<_>>>()?;
            mkdir(out)?;
            write_comparison(out, &loaded, &baseline)?;
            print!(
                "{}",
                std::fs::read_to_string(out.join("comparison.txt")).map_err(|e| Error::io(out, e))?
            );
        }
        Command::Report { modes } => {
            let modes = modes.unwrap_or_else(|| cfg.modes.clone());
            let mut runs = Vec::new();
            for m in modes {
                let path = trace_path(out, m.as_str());
                if path.exists() {
                    runs.push((m.to_string(), Trace::load(&path)?));
                }
            }
            if runs.is_empty() {
                return Err(Error::Empty(format!(
                    "no traces in {}; run `simulate` first",
                    out.display()
                )));
            }
            let written = write_plots(out, &runs, &cfg.kpi)?;
            println!("{} figures -> {}", written.len(), out.display());
        }
    }
    Ok(())
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
