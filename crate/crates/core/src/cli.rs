//! Batch entry point: argument parsing, run configuration, artifacts.
//!
//! Every run writes `manifest.cfg` into its output directory. The manifest is
//! the fully resolved configuration (thread count excluded), so
//! `cevsim <command> --config out/manifest.cfg` reproduces the CSVs byte for byte.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{model_from_config, write_linear_model, zcb_from_config, Config, ConfigError};
use crate::experiments::{
    diagnostic_ladder, estimate_strong_errors, reproduce_table, run_diagnostics,
    write_regression_csv, write_strong_error_csv, ExperimentError, LadderConfig, Scale,
    StrongErrorReport, TableId, PATH_DUMP_STREAM,
};
use crate::mlmc::{mlmc_estimate, MlmcConfig, MlmcError};
use crate::paths::{BrownianGrid, GridSpec, PathError};
use crate::rng::SeedId;
use crate::schemes::{simulate_path, SchemeError, SchemeId};

pub const SEED_ENV: &str = "CEVSIM_SEED";
const DEFAULT_SEED: u64 = 20_240_101;

#[derive(Debug, Parser)]
#[command(
    name = "cevsim",
    version,
    about = "Strong-error and MLMC experiments for CEV-type SDEs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration (`key = value` lines); a manifest from a previous run works too.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `CEVSIM_SEED` and `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 or absent uses every core. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_parser = ["desk", "full"])]
    pub scale: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "cevsim-out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mean absolute terminal error on a step-size ladder, with log-log fit.
    StrongError {
        /// Comma-separated schemes under test.
        #[arg(long)]
        scheme: Option<String>,
    },
    /// One-step error orders and reflection frequencies.
    Diagnostics,
    /// Regression orders for a grid of volatilities.
    Table {
        #[arg(long, value_parser = clap::value_parser!(u32).range(3..=4))]
        id: Option<u32>,
    },
    /// Multilevel Monte Carlo zero-coupon bond price.
    Mlmc {
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Writes one simulated trajectory and its Brownian increments.
    PathDump {
        #[arg(long)]
        scheme: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::StrongError { .. } => "strong-error",
            Command::Diagnostics => "diagnostics",
            Command::Table { .. } => "table",
            Command::Mlmc { .. } => "mlmc",
            Command::PathDump { .. } => "path-dump",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Mlmc(#[from] MlmcError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("thread pool: {0}")]
    Threads(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Experiment(
                ExperimentError::InvalidConfig(_) | ExperimentError::InsufficientPoints { .. },
            ) => 1,
            CliError::Mlmc(MlmcError::InvalidConfig(_) | MlmcError::UnsupportedScheme(_)) => 1,
            CliError::Scheme(SchemeError::UnsupportedParameters { .. }) => 1,
            _ => 2,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no reports to plot")]
    EmptyReport,
    #[error("report for {0} has no ladder points")]
    EmptyLadder(SchemeId),
    #[error("writing plot script: {0}")]
    Io(#[from] io::Error),
}

/// Gnuplot script drawing `mean_abs_error` against `dt` on log-log axes, one
/// series per scheme read from `csv_name`, plus a slope-one reference line.
pub fn plot_script(
    reports: &[StrongErrorReport<f64>],
    csv_name: &str,
) -> Result<String, PlotError> {
    let first = reports.first().ok_or(PlotError::EmptyReport)?;
    for r in reports {
        if r.points.is_empty() {
            return Err(PlotError::EmptyLadder(r.scheme));
        }
    }
    let anchor = first.points[0].mean_abs_error / first.points[0].dt;
    let png = Path::new(csv_name).with_extension("png");
    let mut s = String::new();
    s.push_str("set terminal pngcairo size 800,600\n");
    s.push_str(&format!("set output '{}'\n", png.display()));
    s.push_str("set datafile separator ','\n");
    s.push_str("set logscale xy\n");
    s.push_str("set key left top\n");
    s.push_str("set xlabel 'dt'\n");
    s.push_str("set ylabel 'mean absolute error'\n");
    s.push_str(&format!("identity(x) = {anchor:e} * x\n"));
    let mut series: Vec<String> = reports
        .iter()
        .map(|r| {
            format!(
                "'{csv_name}' using (strcol(1) eq '{0}' ? $2 : NaN):3 with linespoints title '{0}'",
                r.scheme
            )
        })
        .collect();
    series.push("identity(x) with lines dashtype 2 title 'slope 1'".into());
    s.push_str("plot ");
    s.push_str(&series.join(", \\\n     "));
    s.push('\n');
    Ok(s)
}

pub fn emit_plot_script(
    reports: &[StrongErrorReport<f64>],
    csv_name: &str,
    out_path: &Path,
) -> Result<(), PlotError> {
    let script = plot_script(reports, csv_name)?;
    fs::write(out_path, script)?;
    Ok(())
}

/// Parses `argv` (program name first), runs the command, returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse_scheme(key: &str, v: &str) -> Result<SchemeId, ConfigError> {
    v.parse().map_err(|reason| ConfigError::Invalid {
        key: key.into(),
        value: v.into(),
        reason,
    })
}

fn parse_schemes(key: &str, v: &str) -> Result<Vec<SchemeId>, ConfigError> {
    v.split(',').map(|s| parse_scheme(key, s)).collect()
}

fn join_schemes(schemes: &[SchemeId]) -> String {
    schemes
        .iter()
        .map(|s| s.name().to_ascii_lowercase())
        .collect::<Vec<_>>()
        .join(",")
}

/// Merges file, environment and flags into one configuration.
pub fn resolve_config(cli: &Cli, env_seed: Option<&str>) -> Result<Config, ConfigError> {
    let mut cfg = match &cli.common.config {
        Some(path) => Config::load(path)?,
        None => {
            let mut c = Config::new();
            write_linear_model(&mut c, 1.0, 1.0, 0.5, 10.0, 10.0, 1.0);
            c
        }
    };
    cfg.set("run.command", cli.command.name());
    cfg.set("run.version", env!("CARGO_PKG_VERSION"));

    if let Some(seed) = cli.common.seed {
        cfg.set("run.seed", seed);
    } else if let Some(v) = env_seed {
        let seed: u64 = v.trim().parse().map_err(|_| ConfigError::Invalid {
            key: SEED_ENV.into(),
            value: v.into(),
            reason: "expected an unsigned integer".into(),
        })?;
        cfg.set("run.seed", seed);
    }
    cfg.set_default("run.seed", DEFAULT_SEED);
    cfg.require::<u64>("run.seed")?;

    if let Some(s) = &cli.common.scale {
        cfg.set("run.scale", s);
    }
    cfg.set_default("run.scale", Scale::Desk);
    cfg.require::<Scale>("run.scale")?;

    match &cli.command {
        Command::StrongError { scheme } => {
            if let Some(s) = scheme {
                cfg.set(
                    "experiment.schemes",
                    join_schemes(&parse_schemes("--scheme", s)?),
                );
            }
            cfg.set_default("experiment.schemes", "sms");
        }
        Command::Table { id } => {
            if let Some(id) = id {
                cfg.set("table.id", id);
            }
            cfg.set_default("table.id", 3);
        }
        Command::Mlmc { epsilon, scheme } => {
            if let Some(e) = epsilon {
                cfg.set("mlmc.epsilon", e);
            }
            if let Some(s) = scheme {
                cfg.set(
                    "mlmc.scheme",
                    parse_scheme("--scheme", s)?.name().to_ascii_lowercase(),
                );
            }
            cfg.set_default("mlmc.epsilon", 1e-3);
            cfg.set_default("mlmc.scheme", "sms");
            for (k, v) in [
                ("zcb.a", 10.0),
                ("zcb.b", 10.0),
                ("zcb.sigma", 1.0),
                ("zcb.r0", 1.0),
                ("zcb.T", 1.0),
            ] {
                cfg.set_default(k, v);
            }
        }
        Command::PathDump { scheme } => {
            if let Some(s) = scheme {
                cfg.set(
                    "path.scheme",
                    parse_scheme("--scheme", s)?.name().to_ascii_lowercase(),
                );
            }
            cfg.set_default("path.scheme", "sms");
            cfg.set_default("path.index", 0);
        }
        Command::Diagnostics => {}
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let mut cfg = resolve_config(cli, env_seed.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Threads(e.to_string()))?;
    let out = &cli.common.out;
    fs::create_dir_all(out).map_err(io_err(format!("creating {}", out.display())))?;
    pool.install(|| match &cli.command {
        Command::StrongError { .. } => strong_error(&mut cfg, out),
        Command::Diagnostics => diagnostics(&mut cfg, out),
        Command::Table { .. } => table(&mut cfg, out),
        Command::Mlmc { .. } => mlmc(&mut cfg, out),
        Command::PathDump { .. } => path_dump(&mut cfg, out),
    })?;
    write_manifest(&cfg, out)
}

/// Writes `manifest.cfg` (the resolved configuration) into `out`.
pub fn write_manifest(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let path = out.join("manifest.cfg");
    let text = cfg.render(&["cevsim run manifest; rerun with --config <this file>"]);
    fs::write(&path, text).map_err(io_err(format!("writing {}", path.display())))
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = out.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(io_err(format!("creating {}", path.display())))
}

fn write_with<F>(out: &Path, name: &str, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let mut w = create(out, name)?;
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(io_err(format!("writing {name}")))
}

fn seed_and_scale(cfg: &Config) -> Result<(u64, Scale), ConfigError> {
    Ok((cfg.require("run.seed")?, cfg.require("run.scale")?))
}

fn strong_error(cfg: &mut Config, out: &Path) -> Result<(), CliError> {
    let model = model_from_config(cfg)?;
    let (seed, scale) = seed_and_scale(cfg)?;
    let schemes = parse_schemes("experiment.schemes", cfg.require_str("experiment.schemes")?)?;
    let mut ladder = LadderConfig::new(model, schemes[0], seed).with_scale(scale);
    if let Some(r) = cfg.get_str("experiment.reference") {
        ladder.reference_scheme = parse_scheme("experiment.reference", r)?;
    }
    if let Some(n) = cfg.get("experiment.trajectories")? {
        ladder.n_trajectories = n;
    }
    if let Some(r) = cfg.get_range("experiment.ladder")? {
        ladder.ladder_exponents = r;
    }
    if let Some(e) = cfg.get("experiment.reference_exponent")? {
        ladder.reference_exponent = e;
    }
    if let Some(h) = cfg.get("experiment.base_step")? {
        ladder.base_step = h;
    }
    cfg.set(
        "experiment.reference",
        ladder.reference_scheme.name().to_ascii_lowercase(),
    );
    cfg.set("experiment.trajectories", ladder.n_trajectories);
    cfg.set(
        "experiment.ladder",
        format!(
            "{}..={}",
            ladder.ladder_exponents.start(),
            ladder.ladder_exponents.end()
        ),
    );
    cfg.set("experiment.reference_exponent", ladder.reference_exponent);
    cfg.set("experiment.base_step", ladder.base_step);

    let reports = estimate_strong_errors(&ladder, &schemes)?;
    write_with(out, "strong_error.csv", |w| {
        write_strong_error_csv(&reports, w)
    })?;
    write_with(out, "regression.csv", |w| write_regression_csv(&reports, w))?;
    emit_plot_script(&reports, "strong_error.csv", &out.join("strong_error.gp"))?;
    println!("scheme  rho_hat  intercept  r_squared");
    for r in &reports {
        println!(
            "{}  rho_hat={:.4}  intercept={:.4}  r_squared={:.4}",
            r.scheme, r.rho_hat, r.intercept, r.r_squared
        );
    }
    Ok(())
}

fn diagnostics(cfg: &mut Config, out: &Path) -> Result<(), CliError> {
    let model = model_from_config(cfg)?;
    let (seed, scale) = seed_and_scale(cfg)?;
    let exps = cfg.get_range("diagnostics.exponents")?.unwrap_or(3..=6);
    let n = cfg.get_or("diagnostics.trajectories", scale.n_trajectories())?;
    cfg.set(
        "diagnostics.exponents",
        format!("{}..={}", exps.start(), exps.end()),
    );
    cfg.set("diagnostics.trajectories", n);
    let report = run_diagnostics(&model, &diagnostic_ladder(&model, exps), n, seed)?;
    write_with(out, "diagnostics.csv", |w| report.write_csv(w))?;
    println!("local_error_slope={:.4}", report.local_error_slope);
    println!(
        "corrected_local_error_slope={:.4}",
        report.corrected_local_error_slope
    );
    for r in &report.rows {
        println!(
            "dt={:.6e}  sign_flip_freq={:.3e}  pms_sms_divergence_freq={:.3e}",
            r.dt, r.sign_flip_freq, r.pms_sms_divergence_freq
        );
    }
    Ok(())
}

fn table(cfg: &mut Config, out: &Path) -> Result<(), CliError> {
    let (seed, scale) = seed_and_scale(cfg)?;
    let n: u32 = cfg.require("table.id")?;
    let id = TableId::from_number(n).ok_or_else(|| ConfigError::Invalid {
        key: "table.id".into(),
        value: n.to_string(),
        reason: "expected 3 or 4".into(),
    })?;
    let result = reproduce_table::<f64>(id, scale, seed)?;
    write_with(out, &format!("table{n}.csv"), |w| result.write_csv(w))?;
    let reports: Vec<StrongErrorReport<f64>> =
        result.rows.iter().flat_map(|r| r.reports.clone()).collect();
    write_with(out, &format!("table{n}_errors.csv"), |w| {
        writeln!(w, "alpha,sigma2,scheme,dt,mean_abs_error,std_error")?;
        for row in &result.rows {
            for r in &row.reports {
                for p in &r.points {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        row.alpha, row.sigma2, r.scheme, p.dt, p.mean_abs_error, p.standard_error
                    )?;
                }
            }
        }
        Ok(())
    })?;
    debug_assert!(!reports.is_empty());
    let labels: Vec<&str> = id.columns().iter().map(|c| c.0).collect();
    println!("alpha  sigma2  {}", labels.join("  "));
    for row in &result.rows {
        let cells: Vec<String> = row
            .cells
            .iter()
            .map(|c| {
                c.fit
                    .map_or_else(|| "n/a".to_string(), |(rho, _)| format!("{rho:.4}"))
            })
            .collect();
        println!("{}  {}  {}", row.alpha, row.sigma2, cells.join("  "));
    }
    Ok(())
}

fn mlmc(cfg: &mut Config, out: &Path) -> Result<(), CliError> {
    let model = zcb_from_config(cfg)?;
    let seed = cfg.require("run.seed")?;
    let scheme = parse_scheme("mlmc.scheme", cfg.require_str("mlmc.scheme")?)?;
    let mut mc = MlmcConfig::new(cfg.require("mlmc.epsilon")?, scheme, seed);
    mc.min_trajectories = cfg.get_or("mlmc.min_trajectories", mc.min_trajectories)?;
    mc.min_levels = cfg.get_or("mlmc.min_levels", mc.min_levels)?;
    mc.warmup_samples = cfg.get_or("mlmc.warmup_samples", mc.min_trajectories)?;
    cfg.set("mlmc.min_trajectories", mc.min_trajectories);
    cfg.set("mlmc.min_levels", mc.min_levels);
    cfg.set("mlmc.warmup_samples", mc.warmup_samples);

    let r = mlmc_estimate(&model, &mc)?;
    write_with(out, "mlmc_levels.csv", |w| r.write_levels_csv(w))?;
    write_with(out, "mlmc_summary.csv", |w| r.write_summary_csv(w))?;
    write_with(out, "timing.txt", |w| {
        writeln!(w, "seconds={:.3}", r.wall_time)
    })?;
    println!(
        "epsilon={} scheme={} L={} estimator={:.10} closed_form={:.10} observed_error={:.3e} samples={} fine_steps={} seconds={:.2}",
        r.epsilon,
        r.scheme,
        r.levels,
        r.estimator,
        r.closed_form,
        r.observed_error,
        r.total_samples(),
        r.total_fine_steps,
        r.wall_time
    );
    Ok(())
}

fn path_dump(cfg: &mut Config, out: &Path) -> Result<(), CliError> {
    let model = model_from_config(cfg)?;
    let (seed, scale) = seed_and_scale(cfg)?;
    let scheme = parse_scheme("path.scheme", cfg.require_str("path.scheme")?)?;
    let index: u64 = cfg.require("path.index")?;
    let n_steps = match cfg.get("path.n_steps")? {
        Some(n) => n,
        None => LadderConfig::new(model.clone(), scheme, seed).base_steps() << scale.ladder().end(),
    };
    cfg.set("path.n_steps", n_steps);
    let spec = GridSpec::new(model.horizon(), n_steps)?;
    let grid = BrownianGrid::generate(spec, SeedId::new(seed, PATH_DUMP_STREAM, index));
    let path = simulate_path(scheme, &model, &grid)?;
    write_with(out, "path.csv", |w| path.write_csv(w))?;
    write_with(out, "increments.bin", |w| grid.write_binary(w))?;
    println!(
        "scheme={} n_steps={} terminal={} reflections={}",
        scheme,
        n_steps,
        path.terminal(),
        path.reflect_count
    );
    Ok(())
}
