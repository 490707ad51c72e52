//! `arw`: adaptive rolling-window prediction intervals for drifting streams.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 I/O error.

mod config;
mod csvio;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use arw_core::experiment::{per_period_csv, run_experiment, summary_json};
use arw_core::quantile::{select_window, QuantileConfig, Variant, WindowGrid};

use error::{CliError, Result};

#[derive(Parser)]
#[command(name = "arw", version, about = "Adaptive rolling-window prediction intervals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Theory,
    Experiment,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Theory => Variant::Theory,
            VariantArg::Experiment => Variant::Experiment,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Full,
    Dyadic,
}

impl From<GridArg> for WindowGrid {
    fn from(g: GridArg) -> Self {
        match g {
            GridArg::Full => WindowGrid::Full,
            GridArg::Dyadic => WindowGrid::Dyadic,
        }
    }
}

/// Quantile-estimation flags shared by `calibrate` and `predict`.
#[derive(Args)]
struct QuantileArgs {
    /// Target miscoverage level.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Confidence parameter of the window-selection objective.
    #[arg(long, default_value_t = 0.1)]
    delta_prime: f64,
    /// Constant regime of the selection objective.
    #[arg(long, value_enum, default_value_t = VariantArg::Experiment)]
    variant: VariantArg,
    /// Candidate window grid.
    #[arg(long, value_enum, default_value_t = GridArg::Dyadic)]
    grid: GridArg,
}

impl QuantileArgs {
    fn to_config(&self) -> Result<QuantileConfig> {
        let cfg = QuantileConfig {
            alpha: self.alpha,
            delta_prime: self.delta_prime,
            variant: self.variant.into(),
            grid: self.grid.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic coverage experiment from a TOML manifest.
    RunSynthetic {
        /// Experiment manifest.
        #[arg(long)]
        config: PathBuf,
        /// Override the manifest's miscoverage level.
        #[arg(long)]
        alpha: Option<f64>,
        /// Override the manifest's selection confidence parameter.
        #[arg(long)]
        delta_prime: Option<f64>,
        /// Override the manifest's seed list (comma-separated).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override the manifest's constant regime.
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Override the manifest's window grid.
        #[arg(long, value_enum)]
        grid: Option<GridArg>,
        /// Output directory (defaults to the manifest's `out`, then
        /// $ARW_OUT_DIR, then the current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select a window and threshold from a `period,score` CSV stream.
    Calibrate {
        /// Calibration scores CSV.
        scores: PathBuf,
        #[command(flatten)]
        quantile: QuantileArgs,
        /// Write the per-window selection trace CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit prediction intervals for test rows using calibrated scores.
    Predict {
        /// Calibration scores CSV (`period,score`).
        scores: PathBuf,
        /// Test rows CSV (`id,mu_hat` or `id,mu_hat,sigma_hat`).
        predictions: PathBuf,
        #[command(flatten)]
        quantile: QuantileArgs,
        /// Output intervals CSV (defaults to `intervals.csv` in
        /// $ARW_OUT_DIR or the current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretty-print the MAE matrix of a summary JSON document.
    Report {
        /// Summary produced by `run-synthetic`.
        summary: PathBuf,
    },
}

fn out_dir(flag: Option<PathBuf>, config_out: Option<&str>) -> PathBuf {
    flag.or_else(|| config_out.map(PathBuf::from))
        .or_else(|| std::env::var_os("ARW_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::io(&format!("creating '{}'", parent.display()), e))?;
        }
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::io(&format!("writing '{}'", path.display()), e))
}

fn cmd_run_synthetic(
    config_path: &Path,
    alpha: Option<f64>,
    delta_prime: Option<f64>,
    seeds: Option<Vec<u64>>,
    variant: Option<VariantArg>,
    grid: Option<GridArg>,
    out: Option<PathBuf>,
) -> Result<()> {
    let file = config::load(config_path)?;
    let mut spec = file.to_spec()?;
    if let Some(a) = alpha {
        spec.alpha = a;
    }
    if let Some(d) = delta_prime {
        spec.delta_prime = d;
    }
    if let Some(s) = seeds {
        spec.seeds = s;
    }
    if let Some(v) = variant {
        spec.variant = v.into();
    }
    if let Some(g) = grid {
        spec.grid = g.into();
    }
    spec.validate()?;
    let result = run_experiment(&spec).map_err(|e| CliError::Data(e.to_string()))?;
    let dir = out_dir(out, file.out.as_deref());
    let summary_path = dir.join("summary.json");
    let csv_path = dir.join("per_period.csv");
    write_file(&summary_path, &summary_json(&result))?;
    write_file(&csv_path, &per_period_csv(&result))?;
    println!("wrote {}", summary_path.display());
    println!("wrote {}", csv_path.display());
    for cell in &result.cells {
        println!(
            "train_window={} method={} mae={} mean_width={}",
            cell.train_window,
            cell.report.method,
            cell.report.mae,
            cell.report.mean_width
        );
    }
    Ok(())
}

fn cmd_calibrate(scores_path: &Path, args: &QuantileArgs, out: Option<PathBuf>) -> Result<()> {
    let cfg = args.to_config()?;
    let scores = csvio::read_scores(scores_path)?;
    let trace = select_window(&scores, &cfg).map_err(|e| CliError::Data(e.to_string()))?;
    println!("chosen_k: {}", trace.chosen_k);
    println!("threshold: {}", trace.chosen_q);
    if let Some(path) = out {
        let mut csv = String::from("k,count,q_hat,psi,phi_hat,objective\n");
        for e in &trace.entries {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.k, e.count, e.q_hat, e.psi, e.phi_hat, e.objective
            ));
        }
        write_file(&path, &csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_predict(
    scores_path: &Path,
    predictions_path: &Path,
    args: &QuantileArgs,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = args.to_config()?;
    let scores = csvio::read_scores(scores_path)?;
    let rows = csvio::read_predictions(predictions_path)?;
    let trace = select_window(&scores, &cfg).map_err(|e| CliError::Data(e.to_string()))?;
    let threshold = trace.chosen_q;
    let mut csv = String::from("id,lower,upper,threshold,k_hat\n");
    for row in &rows {
        let radius = threshold * row.sigma_hat.unwrap_or(1.0);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.id,
            row.mu_hat - radius,
            row.mu_hat + radius,
            threshold,
            trace.chosen_k
        ));
    }
    let path = out.unwrap_or_else(|| out_dir(None, None).join("intervals.csv"));
    write_file(&path, &csv)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_report(summary_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(summary_path)
        .map_err(|e| CliError::io(&format!("reading '{}'", summary_path.display()), e))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", summary_path.display())))?;
    let cells = doc
        .get("cells")
        .and_then(|c| c.as_array())
        .ok_or_else(|| CliError::Data("summary has no 'cells' array".into()))?;

    let mut windows: Vec<u64> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for c in cells {
        let w = c["train_window"]
            .as_u64()
            .ok_or_else(|| CliError::Data("cell missing 'train_window'".into()))?;
        let m = c["method"]
            .as_str()
            .ok_or_else(|| CliError::Data("cell missing 'method'".into()))?;
        if !windows.contains(&w) {
            windows.push(w);
        }
        if !methods.iter().any(|x| x == m) {
            methods.push(m.to_string());
        }
    }
    println!(
        "scenario: {} ({}), {} seeds, alpha {}",
        doc["scenario"].as_str().unwrap_or("?"),
        if doc["stationary"].as_bool().unwrap_or(false) {
            "stationary"
        } else {
            "non-stationary"
        },
        doc["n_seeds"].as_u64().unwrap_or(0),
        doc["alpha"]
    );
    print!("{:>12}", "MAE % \\ k");
    for m in &methods {
        print!("{m:>10}");
    }
    println!();
    for &w in &windows {
        print!("{w:>12}");
        for m in &methods {
            let mae = cells.iter().find_map(|c| {
                (c["train_window"].as_u64() == Some(w) && c["method"].as_str() == Some(m))
                    .then(|| c["mae_percent"].as_f64())
                    .flatten()
            });
            match mae {
                Some(v) => print!("{v:>10.2}"),
                None => print!("{:>10}", "-"),
            }
        }
        println!();
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::RunSynthetic {
            config,
            alpha,
            delta_prime,
            seeds,
            variant,
            grid,
            out,
        } => cmd_run_synthetic(&config, alpha, delta_prime, seeds, variant, grid, out),
        Command::Calibrate { scores, quantile, out } => cmd_calibrate(&scores, &quantile, out),
        Command::Predict {
            scores,
            predictions,
            quantile,
            out,
        } => cmd_predict(&scores, &predictions, &quantile, out),
        Command::Report { summary } => cmd_report(&summary),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            err.exit_code()
        }
    }
}
