use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use ftsreg::experiments::{emit, mse_frequency_curves, mse_lag_curves, run_study, Format, StudyConfig};
use ftsreg::regression::{inverse_transform, schedule, estimate_filter};
use ftsreg::simulate::{simulate_pair, GroundTruth, ProcessSpec, TruthManifest};
use ftsreg::spectral::{kernel_moment_check, FuncSeries, SmoothingKernel};
use ftsreg::{verify, Error, GridContext, Result};

#[derive(Parser)]
#[command(name = "ftsreg", version, about = "Smoothed Fourier-Tikhonov regression for functional time series")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "FTSREG_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a coupled pair and write X.csv, Y.csv and truth.json.
    Simulate {
        /// ProcessSpec JSON; omitted fields take their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long = "T")]
        t_len: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        m: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit the filter with the rate-optimal schedule.
    Estimate {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long = "lags")]
        lags: usize,
        #[arg(long, default_value = "epanechnikov")]
        kernel: String,
        #[arg(long)]
        order: Option<usize>,
        /// truth.json from `simulate`; adds error metrics to the diagnostics.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo study.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write study.svg.
        #[arg(long)]
        plot: bool,
    },
    /// Print the moment table of a smoothing kernel.
    CheckKernel {
        #[arg(long, default_value = "epanechnikov")]
        name: String,
        #[arg(long)]
        order: Option<usize>,
    },
    /// Run the fast invariant suite.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Simulate {
            spec,
            t_len,
            seed,
            m,
            out_dir,
        } => simulate(spec.as_deref(), t_len, seed, m, &out_dir).map(|_| 0),
        Command::Estimate {
            x,
            y,
            alpha,
            beta,
            gamma,
            lags,
            kernel,
            order,
            truth,
            out,
        } => {
            let kernel = SmoothingKernel::by_name(&kernel, order)?;
            estimate(&x, &y, alpha, beta, gamma, lags, &kernel, truth.as_deref(), &out).map(|_| 0)
        }
        Command::Study { config, out_dir, plot } => study(&config, &out_dir, plot).map(|_| 0),
        Command::CheckKernel { name, order } => {
            let kernel = SmoothingKernel::by_name(&name, order)?;
            let report = kernel_moment_check(&kernel, kernel.order());
            println!("{report}");
            Ok(if report.pass { 0 } else { 2 })
        }
        Command::Verify { seed } => {
            let outcomes = verify::run_all(seed)?;
            for o in &outcomes {
                println!("{o}");
            }
            Ok(if outcomes.iter().all(|o| o.pass) { 0 } else { 2 })
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_series(path: &Path) -> Result<FuncSeries> {
    let file = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    FuncSeries::read_csv(BufReader::new(file))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn simulate(spec_path: Option<&Path>, t_len: usize, seed: u64, m: usize, out_dir: &Path) -> Result<()> {
    let spec: ProcessSpec = match spec_path {
        Some(p) => read_json(p)?,
        None => ProcessSpec::default(),
    };
    let grid = GridContext::new(m)?;
    let pair = simulate_pair(&spec, grid, t_len, seed)?;
    fs::create_dir_all(out_dir)?;
    let mut files = BTreeMap::new();
    for (name, series) in [("X.csv", &pair.x), ("Y.csv", &pair.y)] {
        let mut bytes = Vec::new();
        series.write_csv(&mut bytes)?;
        fs::write(out_dir.join(name), &bytes)?;
        files.insert(name.to_string(), sha256_hex(&bytes));
    }
    let manifest = TruthManifest {
        spec,
        m,
        t_len,
        seed,
        sha256: files,
        filter: pair.truth.filter().to_json(),
    };
    write_json(&out_dir.join("truth.json"), &manifest)
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    x_path: &Path,
    y_path: &Path,
    alpha: f64,
    beta: f64,
    gamma: f64,
    lags: usize,
    kernel: &SmoothingKernel,
    truth_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let x = read_series(x_path)?;
    let y = read_series(y_path)?;
    if x.len() != y.len() || x.grid() != y.grid() {
        return Err(Error::Dimension(format!(
            "X is {}x{} but Y is {}x{}",
            x.len(),
            x.grid().m(),
            y.len(),
            y.grid().m()
        )));
    }
    let sched = schedule(alpha, beta, gamma, x.len())?;
    let fit = estimate_filter(&x, &y, kernel, &sched, lags)?;

    // Parseval on the estimate itself: (1/T) Σ_s ‖Q̂_s‖² against Σ_ℓ ‖B̂_ℓ‖² over all T lags.
    let t = fit.qhat.len() as f64;
    let freq_energy: f64 = fit.qhat.ops().iter().map(|q| q.hs_norm().powi(2)).sum::<f64>() / t;
    let lag_energy: f64 = inverse_transform(fit.qhat.ops())?.iter().map(|b| b.hs_norm().powi(2)).sum();
    let mut diagnostics = json!({
        "imag_mass": fit.bank.imag_mass(),
        "hs_summability": fit.bank.hs_summability(),
        "guard": "ok",
        "kernel": kernel.name(),
        "schedule": {
            "alpha": sched.alpha,
            "beta": sched.beta,
            "gamma": sched.gamma,
            "T": sched.t_len,
            "zeta_T": sched.zeta,
            "B_T": sched.bandwidth,
            "rate_exponent": sched.rate_exponent,
        },
        "parseval": {
            "freq_energy": freq_energy,
            "lag_energy": lag_energy,
            "rel_err": if freq_energy > 0.0 { (freq_energy - lag_energy).abs() / freq_energy } else { 0.0 },
        },
    });
    if let Some(p) = truth_path {
        let manifest: TruthManifest = read_json(p)?;
        let grid = GridContext::new(manifest.m)?;
        if grid != x.grid() {
            return Err(Error::Dimension(format!("truth is on m={} but data on m={}", manifest.m, x.grid().m())));
        }
        let truth = GroundTruth::new(manifest.spec, grid)?;
        let curve = truth.transfer_curve(x.len());
        diagnostics["truth"] = json!({
            "mse_freq": mse_frequency_curves(fit.qhat.ops(), &curve)?,
            "mse_lag": mse_lag_curves(fit.qhat.ops(), &curve)?,
            "bank_sq_error": fit.bank.squared_distance(&truth.filter())?,
        });
    }
    let mut doc = serde_json::to_value(fit.bank.to_json())?;
    doc["diagnostics"] = diagnostics;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_json(out, &doc)
}

fn study(config: &Path, out_dir: &Path, plot: bool) -> Result<()> {
    let cfg: StudyConfig = read_json(config)?;
    let result = run_study(&cfg)?;
    fs::create_dir_all(out_dir)?;
    let mut formats = vec![("study.csv", Format::Csv), ("study.json", Format::Json)];
    if plot {
        formats.push(("study.svg", Format::Svg));
    }
    let mut files = BTreeMap::new();
    for (name, format) in formats {
        let bytes = emit(&result, format)?;
        fs::write(out_dir.join(name), &bytes)?;
        files.insert(name, sha256_hex(&bytes));
    }
    write_json(&out_dir.join("manifest.json"), &json!({ "config": cfg, "sha256": files }))?;
    if let (Some(slope), Some(se)) = (result.fitted_slope, result.fitted_slope_se) {
        println!("fitted slope {slope:.4} (se {se:.4}), predicted {:.4}", result.predicted_slope);
    }
    Ok(())
}
