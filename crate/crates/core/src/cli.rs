//! `agc` command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::engine::{
    build_controller, compare, compute_metrics, default_cases, report_csv, run_closed_loop,
    BesCase, ControllerKind,
};
use crate::error::{Error, Result};
use crate::exec::{with_threads, Exec};
use crate::hindsight::{train_policy, SocPolicyTable};
use crate::signals::{load_ace_csv, synth_ace, AceSeries, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "agc",
    version,
    about = "AGC simulation with data-driven battery recharge control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic uncorrected-ACE series.
    Synth(SynthArgs),
    /// Train the SoC feedback policy by best-hindsight optimisation.
    Train(TrainArgs),
    /// Run one controller in closed loop and write the trace.
    Simulate(SimulateArgs),
    /// Run all controllers over the benchmark storage configurations.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set td_s=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for sweeps and comparison grids.
    #[arg(long, env = "AGC_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 24.0)]
    hours: f64,
    #[arg(long, default_value_t = 2.0)]
    dt: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mean_mw: Option<f64>,
    #[arg(long)]
    reversion_rate: Option<f64>,
    #[arg(long)]
    innovation_scale: Option<f64>,
    #[arg(long)]
    heavy_tail_mix: Option<f64>,
    #[arg(long)]
    jump_rate: Option<f64>,
    #[arg(long)]
    jump_scale: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Training ACE CSV.
    #[arg(long)]
    ace: PathBuf,
    /// Policy CSV to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    we: Option<f64>,
    #[arg(long)]
    window_min: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    stride_steps: Option<usize>,
    #[arg(long)]
    cd_mw: Option<f64>,
    #[arg(long)]
    duration_min: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ace: PathBuf,
    /// Trace CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// pjm, lqr or proposed.
    #[arg(long)]
    controller: Option<String>,
    /// Policy CSV (required by the proposed controller).
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    cd_mw: Option<f64>,
    #[arg(long)]
    duration_min: Option<f64>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Test ACE CSV.
    #[arg(long)]
    ace: PathBuf,
    /// Report CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Directory holding `<power>MW_<duration>min.csv` policy files.
    #[arg(long)]
    policy_dir: Option<PathBuf>,
    /// Train any policy not found in `--policy-dir` on this ACE CSV.
    #[arg(long)]
    train_ace: Option<PathBuf>,
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else if matches!(e, Error::Config(_) | Error::HorizonTooShort) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

fn build_config(common: &Common, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_str(&text)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {kv}`: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    for (k, v) in extra {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn opt<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn threaded<R: Send>(cfg: &RunConfig, f: impl FnOnce() -> R + Send) -> R {
    with_threads(cfg.threads.unwrap_or(0), f)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        seed: a.seed,
        dt_s: a.dt,
        horizon_s: a.hours * 3600.0,
        mean_mw: a.mean_mw.unwrap_or(d.mean_mw),
        reversion_rate_per_s: a.reversion_rate.unwrap_or(d.reversion_rate_per_s),
        innovation_scale_mw: a.innovation_scale.unwrap_or(d.innovation_scale_mw),
        heavy_tail_mix: a.heavy_tail_mix.unwrap_or(d.heavy_tail_mix),
        jump_rate_per_hour: a.jump_rate.unwrap_or(d.jump_rate_per_hour),
        jump_scale_mw: a.jump_scale.unwrap_or(d.jump_scale_mw),
    };
    let series = synth_ace(&cfg)?;
    series.write_csv(&a.out)?;
    println!("wrote {} samples to {}", series.len(), a.out.display());
    Ok(())
}

fn check_dt(ace: &AceSeries, cfg: &RunConfig) -> Result<()> {
    if (ace.dt_s() - cfg.dt_s).abs() > 1e-9 * cfg.dt_s {
        return Err(Error::Config(format!(
            "ACE file has dt = {} s but dt_s = {}",
            ace.dt_s(),
            cfg.dt_s
        )));
    }
    Ok(())
}

fn train_case(ace: &AceSeries, cfg: &RunConfig, case: &BesCase) -> Result<(SocPolicyTable, usize)> {
    let sweep = cfg.sweep_config(case)?;
    train_policy(ace, &sweep, cfg.bins, Exec::default())
}

/// Mean table gain over each tenth of the SoC range.
fn decile_means(table: &SocPolicyTable) -> Vec<f64> {
    let e = table.energy_mwh();
    let edges = table.edges();
    let mut sums = [0.0; 10];
    let mut counts = [0usize; 10];
    for (i, g) in table.gains().iter().enumerate() {
        let mid = 0.5 * (edges[i] + edges[i + 1]);
        let d = ((mid / e) * 10.0).floor().clamp(0.0, 9.0) as usize;
        sums[d] += g;
        counts[d] += 1;
    }
    sums.iter()
        .zip(counts)
        .map(|(s, c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect()
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = build_config(
        &a.common,
        &[
            ("we", opt(&a.we)),
            ("window_min", opt(&a.window_min)),
            ("bins", opt(&a.bins)),
            ("stride_steps", opt(&a.stride_steps)),
            ("cd_mw", opt(&a.cd_mw)),
            ("duration_min", opt(&a.duration_min)),
        ],
    )?;
    let ace = load_ace_csv(&a.ace)?;
    check_dt(&ace, &cfg)?;
    let (table, n) = threaded(&cfg, || train_case(&ace, &cfg, &cfg.case()))?;
    table.write_csv(&a.out)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "samples: {n}");
    for (d, g) in decile_means(&table).iter().enumerate() {
        let _ = writeln!(
            out,
            "decile {}-{}%: mean gain {g:.6} MW/MWh",
            d * 10,
            d * 10 + 10
        );
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = build_config(
        &a.common,
        &[
            ("controller", a.controller.clone()),
            ("cd_mw", opt(&a.cd_mw)),
            ("duration_min", opt(&a.duration_min)),
        ],
    )?;
    if cfg.controller == ControllerKind::Proposed && a.policy.is_none() {
        return Err(Error::Config(
            "the proposed controller needs --policy".into(),
        ));
    }
    let ace = load_ace_csv(&a.ace)?;
    check_dt(&ace, &cfg)?;
    let policy = match &a.policy {
        Some(p) => Some(Arc::new(SocPolicyTable::load_csv(p)?)),
        None => None,
    };
    let system = cfg.system();
    let plant = cfg.plant();
    let spec = build_controller(
        cfg.controller,
        &system.controller,
        &system.lqr,
        &plant,
        policy,
    )?;
    let trace = run_closed_loop(&ace, &spec, &plant, system.soc0(&plant))?;
    trace.write_csv(&a.out)?;
    let m = compute_metrics(&trace, plant.bes.soc_ref_mwh)?;
    println!("{},{}", m.mean_sq_pace_mw2 / 1e3, m.mean_sq_soc_dev_mwh2);
    Ok(())
}

/// File name of a case's policy inside `--policy-dir`.
pub fn policy_file_name(case: &BesCase) -> String {
    format!("{}.csv", case.label().replace('/', "_"))
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let cfg = build_config(&a.common, &[])?;
    let ace = load_ace_csv(&a.ace)?;
    check_dt(&ace, &cfg)?;
    let train = match &a.train_ace {
        Some(p) => {
            let t = load_ace_csv(p)?;
            check_dt(&t, &cfg)?;
            Some(t)
        }
        None => None,
    };
    let cases = default_cases();
    let system = cfg.system();

    threaded(&cfg, || -> Result<()> {
        let mut policies = Vec::with_capacity(cases.len());
        for case in &cases {
            let from_dir = a
                .policy_dir
                .as_ref()
                .map(|d| d.join(policy_file_name(case)))
                .filter(|p| p.is_file());
            let policy = match (from_dir, &train) {
                (Some(p), _) => Some(Arc::new(SocPolicyTable::load_csv(p)?)),
                (None, Some(t)) => Some(Arc::new(train_case(t, &cfg, case)?.0)),
                (None, None) => None,
            };
            policies.push(policy);
        }
        let rows = compare(
            &ace,
            &cases,
            &ControllerKind::ALL,
            &policies,
            &system,
            Exec::default(),
        )?;
        write_file(&a.out, &report_csv(&rows))?;
        print!("{}", report_csv(&rows));
        Ok(())
    })
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_classes() {
        assert_eq!(exit_code(&Error::NoConvergence(3)), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::HorizonTooShort), EXIT_USAGE);
        assert_eq!(exit_code(&Error::NonUniform { row: 3 }), EXIT_DATA);
        assert_eq!(
            exit_code(&Error::MissingPolicy(vec!["x".into()])),
            EXIT_DATA
        );
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["agc", "synth", "--seed", "7"]), EXIT_USAGE);
        assert_eq!(run(["agc", "bogus"]), EXIT_USAGE);
    }

    #[test]
    fn policy_names() {
        assert_eq!(
            policy_file_name(&BesCase::new(200.0, 15.0)),
            "200MW_15min.csv"
        );
    }
}
