//! `wavegan`: build wavelet tables, fit estimators, evaluate IPMs and run the
//! rate and interpolation experiments.
//!
//! Exit codes: 0 on success, 2 for invalid arguments or input, 3 for numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wavegan::besov::BoundSchedule;
use wavegan::config::{FitMode, RunConfig, EXAMPLE_CONFIG};
use wavegan::experiments::{run_interp, run_rates, InterpOutput, RatesOutput};
use wavegan::filters::daubechies_filter;
use wavegan::ipm::{empirical_moments, EmpiricalMeasure, IpmMode, IpmRecord};
use wavegan::basis::BasisSpec;
use wavegan::train::{fit_density_with, fit_wgan_with, init_generator, Checkpointer};
use wavegan::wavelet::{AxisKind, Wavelet};

const FILTERS_SCHEMA: &str = "# wavegan filters v1";
const TWO_SCALE_TOLERANCE: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "wavegan", version, about = "Wavelet GAN estimators with closed-form Besov IPMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Daubechies low-pass filter as CSV (`k,h`, coefficients summing to 2).
    Filters {
        /// Vanishing moments N_v.
        #[arg(long)]
        nv: usize,
        /// Output file (standard output when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Dyadic table of φ (or ψ) and its derivatives, with a two-scale residual report.
    Table {
        #[arg(long)]
        nv: usize,
        /// Grid level J: values on 2^{-J}·ℤ.
        #[arg(long, default_value_t = 12)]
        grid: u32,
        /// Highest derivative order to tabulate.
        #[arg(long, default_value_t = 0)]
        deriv: usize,
        /// Tabulate the wavelet ψ instead of φ.
        #[arg(long)]
        psi: bool,
        /// Table file; without it the table goes to standard output and the report to standard error.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit a generator (mode = "wgan") or a density (mode = "density") as configured.
    Fit {
        config: PathBuf,
        /// Directory for model.txt, report.json and checkpoints.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Data CSV (`x1,..,xp[,weight]`); drawn from the configured target when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Rate sweep over `n_grid`: rates.csv and rates.json.
    Rates {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Interpolation-inequality ladder: interp.csv and interp.json.
    InterpCheck {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Closed-form IPM between two point clouds, printed as a JSON record.
    Ipm {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long, value_enum, default_value_t = IpmKind::Ball)]
        mode: IpmKind,
        /// Ball order γ, or box smoothness η.
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Logarithmic exponent of the ball.
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        /// Box constant.
        #[arg(long, default_value_t = 1.0)]
        c_eta: f64,
        /// Finest discriminator level J_D.
        #[arg(long, default_value_t = 5)]
        level: u32,
        /// Domain radius K.
        #[arg(long, default_value_t = 1.25)]
        radius: f64,
        #[arg(long, default_value_t = 3)]
        nv: usize,
    },
    /// Draw a sample of the configured target as CSV.
    Sample {
        config: PathBuf,
        #[arg(short, long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the annotated example configuration.
    Config,
}

#[derive(Clone, Copy, ValueEnum)]
enum IpmKind {
    Box,
    Ball,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numeric(String),
}

impl From<wavegan::error::Error> for CliError {
    fn from(e: wavegan::error::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(output: Option<&Path>, contents: &str) -> CliResult<()> {
    match output {
        Some(p) => write(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn load_config(path: &Path) -> CliResult<RunConfig> {
    RunConfig::from_toml(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// A schema line, then RFC 4180 CSV of `rows`.
fn csv_with_header<T: Serialize>(schema: &str, rows: &[T]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Numeric(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| CliError::Numeric(e.to_string()))?;
    Ok(format!("# {schema}\n{}", String::from_utf8(body).expect("csv output is UTF-8")))
}

fn cmd_filters(nv: usize, output: Option<&Path>) -> CliResult<()> {
    let fb = daubechies_filter(nv)?;
    let mut out = format!("{FILTERS_SCHEMA} nv={nv}\nk,h\n");
    for (k, h) in fb.coeffs().iter().enumerate() {
        out.push_str(&format!("{k},{h:.16e}\n"));
    }
    emit(output, &out)
}

fn cmd_table(nv: usize, grid: u32, deriv: usize, psi: bool, output: Option<&Path>) -> CliResult<()> {
    let wavelet = Wavelet::new(nv, grid, deriv)?;
    let residual = wavelet.phi_table().two_scale_residual(wavelet.filter());
    let unity = wavelet.phi_table().partition_of_unity_residual();
    let table = wavelet.table(if psi { AxisKind::Wavelet } else { AxisKind::Scaling });
    let verdict = if residual < TWO_SCALE_TOLERANCE { "<" } else { ">=" };
    let report = format!(
        "two_scale_max_residual = {residual:.3e}\ntwo_scale_max_residual {verdict} {TWO_SCALE_TOLERANCE:e}\npartition_of_unity_residual = {unity:.3e}\n"
    );
    match output {
        Some(p) => {
            write(p, &table.to_csv())?;
            print!("{report}");
        }
        None => {
            print!("{}", table.to_csv());
            eprint!("{report}");
        }
    }
    if residual >= TWO_SCALE_TOLERANCE {
        return Err(CliError::Numeric(format!("two-scale residual {residual:e} exceeds {TWO_SCALE_TOLERANCE:e}")));
    }
    Ok(())
}

fn cmd_fit(config: &Path, out: &Path, data: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(config)?;
    let tc = &cfg.train;
    if cfg.mode == FitMode::Density && tc.d != tc.p {
        return Err(CliError::Usage(format!("dimension mismatch: density mode needs p = d (p = {}, d = {})", tc.p, tc.d)));
    }
    let wavelet = tc.wavelet()?;
    let x = match data {
        Some(path) => EmpiricalMeasure::from_csv(&read(path)?)?,
        None => cfg.build_target(wavelet.clone())?.sample(tc.n, tc.seed)?,
    };
    if x.dim() != tc.p {
        return Err(CliError::Usage(format!("dimension mismatch: data in dimension {} but p = {}", x.dim(), tc.p)));
    }
    let mut save_error = None;
    let mut checkpoint = |t: usize, text: String| -> wavegan::error::Result<String> {
        let name = format!("checkpoint-{t:06}.txt");
        if let Err(CliError::Usage(m) | CliError::Numeric(m)) = write(&out.join(&name), &text) {
            save_error.get_or_insert(m);
        }
        Ok(name)
    };
    let (model, report) = match cfg.mode {
        FitMode::Wgan => {
            let init = init_generator(tc, &cfg.init_strategy(&x), wavelet)?;
            let mut save = |t: usize, m: &wavegan::models::GeneratorModel| checkpoint(t, m.to_text());
            let hook = Checkpointer { every: cfg.checkpoint_every, save: &mut save };
            let (gm, report) = fit_wgan_with(&x, tc, &init, Some(hook))?;
            (gm.to_text(), report)
        }
        FitMode::Density => {
            let mut save = |t: usize, f: &wavegan::besov::CoefficientField| checkpoint(t, f.to_text());
            let hook = Checkpointer { every: cfg.checkpoint_every, save: &mut save };
            let (field, report) = fit_density_with(&x, tc, cfg.density_init, wavelet, Some(hook))?;
            (field.to_text(), report)
        }
    };
    if let Some(m) = save_error {
        return Err(CliError::Usage(m));
    }
    write(&out.join("model.txt"), &model)?;
    write(&out.join("report.json"), &to_json(&report))?;
    eprintln!(
        "fit: loss {:.6e} -> {:.6e} (best at iteration {}), {:.1}s",
        report.loss[0], report.best_loss[report.best_loss.len() - 1], report.best_iteration, report.wall_seconds
    );
    Ok(())
}

#[derive(Serialize)]
struct RatesJson<'a> {
    schema: &'a str,
    summaries: &'a [wavegan::experiments::RateSummary],
}

fn cmd_rates(config: &Path, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let RatesOutput { rows, summaries } = run_rates(&cfg)?;
    write(&out.join("rates.csv"), &csv_with_header(wavegan::experiments::RATES_SCHEMA, &rows)?)?;
    write(&out.join("rates.json"), &to_json(&RatesJson { schema: wavegan::experiments::RATES_SCHEMA, summaries: &summaries }))?;
    for s in &summaries {
        eprintln!(
            "rates: gamma {} slope {:.4} ± {:.4} (theory {:.4}, {} branch)",
            s.gamma, s.fitted_slope, s.stderr, s.theory.expected, s.theory.binding
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct InterpCsvRow {
    t: f64,
    d_high: f64,
    d_gamma: f64,
    ratio: String,
}

fn cmd_interp(config: &Path, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    let InterpOutput { rows, summary } = run_interp(&cfg)?;
    let csv_rows: Vec<InterpCsvRow> = rows
        .iter()
        .map(|r| InterpCsvRow {
            t: r.t,
            d_high: r.d_high,
            d_gamma: r.d_gamma,
            ratio: r.ratio.map_or_else(|| "undefined".to_string(), |v| v.to_string()),
        })
        .collect();
    write(&out.join("interp.csv"), &csv_with_header(wavegan::experiments::INTERP_SCHEMA, &csv_rows)?)?;
    write(&out.join("interp.json"), &to_json(&summary))?;
    eprintln!("interp-check: slope {:.4}, max/median {:.3}", summary.slope, summary.max_over_median);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ipm(mu: &Path, nu: &Path, kind: IpmKind, gamma: f64, b: f64, c_eta: f64, level: u32, radius: f64, nv: usize) -> CliResult<()> {
    let mu = EmpiricalMeasure::from_csv(&read(mu)?)?;
    let nu = EmpiricalMeasure::from_csv(&read(nu)?)?;
    let spec = BasisSpec::ambient(mu.dim(), radius, std::sync::Arc::new(Wavelet::for_smoothness(nv, 0.0)?))?;
    let mode = match kind {
        IpmKind::Box => IpmMode::Box(BoundSchedule::new(gamma, 1.0, c_eta, mu.dim())?),
        IpmKind::Ball => IpmMode::Ball { gamma, b },
    };
    let m = empirical_moments(&mu, &nu, &spec, level)?;
    print!("{}", to_json(&IpmRecord::new(&mode, level, mode.evaluate(&m))));
    Ok(())
}

fn cmd_sample(config: &Path, n: Option<usize>, seed: Option<u64>, output: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(config)?;
    let target = cfg.build_target(cfg.train.wavelet()?)?;
    let x = target.sample(n.unwrap_or(cfg.train.n), seed.unwrap_or(cfg.train.seed))?;
    emit(output, &x.to_csv())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Filters { nv, output } => cmd_filters(nv, output.as_deref()),
        Command::Table { nv, grid, deriv, psi, output } => cmd_table(nv, grid, deriv, psi, output.as_deref()),
        Command::Fit { config, out, data } => cmd_fit(&config, &out, data.as_deref()),
        Command::Rates { config, out } => cmd_rates(&config, &out),
        Command::InterpCheck { config, out } => cmd_interp(&config, &out),
        Command::Ipm { mu, nu, mode, gamma, b, c_eta, level, radius, nv } => {
            cmd_ipm(&mu, &nu, mode, gamma, b, c_eta, level, radius, nv)
        }
        Command::Sample { config, n, seed, output } => cmd_sample(&config, n, seed, output.as_deref()),
        Command::Config => {
            print!("{EXAMPLE_CONFIG}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
