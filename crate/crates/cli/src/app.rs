use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use cra_core::analytic::{beta1, drift_limit, drift_threshold, pairwise_error, throughput_cra2};
use cra_core::signal::{gen_pool, ml_fa_trial, ml_md_trial, spark_bruteforce, SparseScene};
use cra_core::sim::{estimate_replicas, simulate_stability, Mode};
use rayon::prelude::*;

use crate::config::{provenance, provenance_path, toml_int, ConfigArgs};
use crate::error::{CliError, Result};
use crate::sweep::{run_sweep, Metric, Preset, SweepSpec, SweepVar};
use crate::table::{emit_results, write_results, ResultRow};

/// Experiments for two-stage compressive random access.
///
/// Every command writes a CSV table (`sweep_var,value,metric,source,estimate,
/// std_error,sessions,seed`) to `--output`, or to stdout when no path is
/// given. With `--output`, the effective configuration is written next to
/// it as `<output>.provenance.toml`.
#[derive(Debug, Parser)]
#[command(name = "cra", version)]
pub struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, env = "CRA_WORKERS", global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form throughput, steady state and drift at one operating point.
    Analytic(AnalyticArgs),
    /// Simulate one scheme with one configuration.
    Simulate(SimulateArgs),
    /// Sweep one parameter, closed forms against simulation.
    Sweep(SweepArgs),
    /// Preamble-level detection experiments.
    #[command(subcommand)]
    Signal(SignalCommand),
    /// Backlog trajectories under fast retrial.
    Stability(StabilityArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// CSV destination; stdout if omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Predefined sweep.
    #[arg(long, conflicts_with_all = ["var", "grid"])]
    pub preset: Option<String>,
    /// Swept variable: lambda_T, L, M or p_err.
    #[arg(long, requires = "grid")]
    pub var: Option<String>,
    /// Comma-separated, strictly monotone values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
    /// Comma-separated subset of eta1, eta2, eta_ma, d_bar_ratio.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    /// Closed forms only.
    #[arg(long)]
    pub analytic_only: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Subcommand)]
pub enum SignalCommand {
    /// Pairwise ML missed-detection or false-alarm rate against Q(sqrt(snr / 2)).
    Trial(TrialArgs),
    /// Spark of random preamble pools.
    Spark(SparkArgs),
}

#[derive(Debug, Args)]
pub struct TrialArgs {
    /// md (drop an active user) or fa (add a virtual user).
    #[arg(long, default_value = "md")]
    pub kind: String,
    #[arg(long, default_value_t = 31)]
    pub preamble_len: usize,
    #[arg(long, default_value_t = 310)]
    pub pool_size: usize,
    /// Active users, on preambles 0..K.
    #[arg(long, default_value_t = 4)]
    pub active: usize,
    /// Comma-separated linear SNRs.
    #[arg(long, value_delimiter = ',', default_value = "0,1,4,16")]
    pub snr: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
    /// Seed of the preamble pool.
    #[arg(long, default_value_t = 0)]
    pub pool_seed: u64,
    /// Noise seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SparkArgs {
    #[arg(long, default_value_t = 4)]
    pub preamble_len: usize,
    #[arg(long, default_value_t = 8)]
    pub pool_size: usize,
    /// Number of pools; pool `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 50)]
    pub pools: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// Sessions per trajectory.
    #[arg(long, default_value_t = 10_000)]
    pub horizon: u64,
    /// Users waiting before the first session.
    #[arg(long, default_value_t = 0)]
    pub initial_backlog: u64,
    /// Stop a trajectory once its backlog exceeds this.
    #[arg(long)]
    pub ceiling: Option<u64>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

/// Executes `cli.command`, writing results and provenance.
pub fn run(cli: &Cli) -> Result<()> {
    let (command, rows, config, extra) = match &cli.command {
        Command::Analytic(a) => {
            let r = a.config.resolve()?;
            (
                "analytic",
                analytic_rows(&r.sim.params),
                r.to_table(),
                toml::Table::new(),
            )
        }
        Command::Simulate(a) => {
            let r = a.config.resolve()?;
            (
                "simulate",
                simulate_rows(&r.sim, &r.seeds)?,
                r.to_table(),
                toml::Table::new(),
            )
        }
        Command::Sweep(a) => {
            let (spec, table, extra) = sweep_spec(a)?;
            ("sweep", run_sweep(&spec)?, table, extra)
        }
        Command::Signal(SignalCommand::Trial(a)) => {
            let (rows, extra) = trial_rows(a)?;
            ("signal trial", rows, toml::Table::new(), extra)
        }
        Command::Signal(SignalCommand::Spark(a)) => {
            let (rows, extra) = spark_rows(a)?;
            ("signal spark", rows, toml::Table::new(), extra)
        }
        Command::Stability(a) => {
            let r = a.config.resolve()?;
            let sim = r.sim.with_mode(Mode::FastRetrial);
            let mut extra = toml::Table::new();
            extra.insert("horizon".into(), toml_int(a.horizon));
            extra.insert("initial_backlog".into(), toml_int(a.initial_backlog));
            if let Some(c) = a.ceiling {
                extra.insert("ceiling".into(), toml_int(c));
            }
            let mut table = r.to_table();
            table.insert("mode".into(), Mode::FastRetrial.as_str().into());
            let rows = stability_rows(&sim, &r.seeds, a)?;
            ("stability", rows, table, extra)
        }
    };

    let output = match &cli.command {
        Command::Analytic(a) => &a.out,
        Command::Simulate(a) => &a.out,
        Command::Sweep(a) => &a.out,
        Command::Signal(SignalCommand::Trial(a)) => &a.out,
        Command::Signal(SignalCommand::Spark(a)) => &a.out,
        Command::Stability(a) => &a.out,
    };
    match &output.output {
        Some(path) => {
            emit_results(&rows, path)?;
            let prov = provenance_path(path);
            std::fs::write(&prov, provenance(command, config, extra))
                .map_err(|e| CliError::io(&prov, e))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_results(&rows, &mut lock)
                .map_err(|e| CliError::io("<stdout>", std::io::Error::other(e)))?;
            lock.flush().map_err(|e| CliError::io("<stdout>", e))?;
        }
    }
    Ok(())
}

pub fn analytic_rows(p: &cra_core::ProtocolParams) -> Vec<ResultRow> {
    let v = p.normalized_load();
    let var = SweepVar::LambdaT.as_str();
    let ss = throughput_cra2(p);
    let mut rows: Vec<ResultRow> = Metric::ALL
        .iter()
        .map(|m| ResultRow::analytic(var, v, m.as_str(), m.analytic(p)))
        .collect();
    rows.push(ResultRow::analytic(var, v, "beta1", beta1(p)));
    rows.push(ResultRow::analytic(var, v, "beta2", ss.beta2));
    rows.push(ResultRow::analytic(var, v, "d_bar", ss.d_bar));
    rows.push(ResultRow::analytic(
        var,
        v,
        "mean_session_len",
        ss.mean_session_len,
    ));
    rows.push(ResultRow::analytic(var, v, "drift_limit", drift_limit(p)));
    if let Some(k0) = drift_threshold(p) {
        rows.push(ResultRow::analytic(var, v, "drift_threshold", k0 as f64));
    }
    rows
}

fn simulate_rows(cfg: &cra_core::SimConfig, seeds: &[u64]) -> Result<Vec<ResultRow>> {
    let p = &cfg.params;
    let t = p.transaction_time();
    let v = p.normalized_load();
    let var = SweepVar::LambdaT.as_str();
    let estimates = estimate_replicas(cfg, seeds)?;
    let mut rows = Vec::new();
    for (est, &seed) in estimates.iter().zip(seeds) {
        let n = est.sessions_run;
        rows.push(ResultRow::sim(
            var,
            v,
            "throughput",
            t * est.mean_throughput,
            Some(t * est.std_error),
            n,
            seed,
        ));
        rows.push(ResultRow::sim(
            var,
            v,
            "mean_d",
            est.mean_d,
            Some(est.d_std_error),
            n,
            seed,
        ));
        rows.push(ResultRow::sim(
            var,
            v,
            "mean_active",
            est.mean_active,
            Some(est.active_std_error),
            n,
            seed,
        ));
        rows.push(ResultRow::sim(
            var,
            v,
            "mean_session_len",
            est.mean_session_len,
            None,
            n,
            seed,
        ));
    }
    Ok(rows)
}

fn sweep_spec(a: &SweepArgs) -> Result<(SweepSpec, toml::Table, toml::Table)> {
    let r = a.config.resolve()?;
    let mut extra = toml::Table::new();
    let mut spec = match (&a.preset, &a.var, &a.grid) {
        (Some(name), _, _) => {
            let preset: Preset = name.parse()?;
            extra.insert("preset".into(), preset.as_str().into());
            preset.spec(r.sim, r.seeds.clone())
        }
        (None, Some(var), Some(grid)) => {
            let var: SweepVar = var.parse()?;
            SweepSpec {
                seeds: r.seeds.clone(),
                ..SweepSpec::new(r.sim, var, grid.clone())
            }
        }
        _ => {
            return Err(CliError::config(
                "sweep: give --preset or both --var and --grid",
            ))
        }
    };
    if let Some(names) = &a.metrics {
        spec.metrics = names.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    }
    spec.simulate = !a.analytic_only;

    let mut table = r.to_table();
    // Presets fix the base parameters.
    for (k, v) in provenance_params(&spec.base.params) {
        table.insert(k.into(), v);
    }
    extra.insert("var".into(), spec.var.as_str().into());
    extra.insert(
        "grid".into(),
        toml::Value::Array(spec.grid.iter().map(|&x| x.into()).collect()),
    );
    extra.insert(
        "metrics".into(),
        toml::Value::Array(spec.metrics.iter().map(|m| m.as_str().into()).collect()),
    );
    extra.insert("simulate".into(), spec.simulate.into());
    Ok((spec, table, extra))
}

fn provenance_params(p: &cra_core::ProtocolParams) -> Vec<(&'static str, toml::Value)> {
    vec![
        ("preamble_len", i64::from(p.preamble_len()).into()),
        ("payload_len", i64::from(p.payload_len()).into()),
        ("pool_size", i64::from(p.pool_size()).into()),
        ("feedback_total", p.feedback_total().into()),
        ("arrival_rate", p.arrival_rate().into()),
        ("p_md", p.p_md().into()),
        ("p_fa", p.p_fa().into()),
    ]
}

fn trial_rows(a: &TrialArgs) -> Result<(Vec<ResultRow>, toml::Table)> {
    let fa = match a.kind.as_str() {
        "md" => false,
        "fa" => true,
        other => {
            return Err(CliError::config(format!(
                "kind: unknown trial kind `{other}` (md, fa)"
            )))
        }
    };
    if a.active == 0 && !fa {
        return Err(CliError::config(
            "active: a missed-detection trial needs at least one user",
        ));
    }
    if a.active >= a.pool_size {
        return Err(CliError::config("active: must leave an unused preamble"));
    }
    if a.seeds.is_empty() || a.snr.is_empty() {
        return Err(CliError::config("snr and seeds must be nonempty"));
    }
    let pool = gen_pool(a.preamble_len, a.pool_size, a.pool_seed)?;
    let metric = if fa { "fa_rate" } else { "md_rate" };
    let mut rows = Vec::new();
    for &snr in &a.snr {
        if !(snr >= 0.0 && snr.is_finite()) {
            return Err(CliError::config(format!(
                "snr: {snr} is not a nonnegative linear SNR"
            )));
        }
        let scene = SparseScene::power_controlled((0..a.active).collect(), snr, 1.0)?;
        rows.push(ResultRow::analytic("snr", snr, metric, pairwise_error(snr)));
        for &seed in &a.seeds {
            let r = if fa {
                ml_fa_trial(&pool, &scene, a.active, snr, seed, a.trials)?
            } else {
                ml_md_trial(&pool, &scene, 0, seed, a.trials)?
            };
            rows.push(ResultRow::sim(
                "snr",
                snr,
                metric,
                r.rate,
                Some(r.std_error),
                r.trials,
                seed,
            ));
        }
    }
    let mut extra = toml::Table::new();
    extra.insert("kind".into(), a.kind.clone().into());
    extra.insert("preamble_len".into(), toml_int(a.preamble_len as u64));
    extra.insert("pool_size".into(), toml_int(a.pool_size as u64));
    extra.insert("active".into(), toml_int(a.active as u64));
    extra.insert(
        "snr".into(),
        toml::Value::Array(a.snr.iter().map(|&x| x.into()).collect()),
    );
    extra.insert("trials".into(), toml_int(a.trials));
    extra.insert("pool_seed".into(), toml_int(a.pool_seed));
    extra.insert(
        "seeds".into(),
        toml::Value::Array(a.seeds.iter().map(|&s| toml_int(s)).collect()),
    );
    extra.insert("rng".into(), cra_core::sim::rng::GENERATOR.into());
    Ok((rows, extra))
}

fn spark_rows(a: &SparkArgs) -> Result<(Vec<ResultRow>, toml::Table)> {
    let sparks: Vec<usize> = (0..a.pools)
        .into_par_iter()
        .map(|i| {
            let pool = gen_pool(a.preamble_len, a.pool_size, a.seed + i)?;
            spark_bruteforce(pool.matrix())
        })
        .collect::<std::result::Result<_, _>>()?;
    let rows = sparks
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            ResultRow::sim(
                "pool",
                i as f64,
                "spark",
                s as f64,
                None,
                1,
                a.seed + i as u64,
            )
        })
        .collect();
    let mut extra = toml::Table::new();
    extra.insert("preamble_len".into(), toml_int(a.preamble_len as u64));
    extra.insert("pool_size".into(), toml_int(a.pool_size as u64));
    extra.insert("pools".into(), toml_int(a.pools));
    extra.insert("seed".into(), toml_int(a.seed));
    Ok((rows, extra))
}

fn stability_rows(
    cfg: &cra_core::SimConfig,
    seeds: &[u64],
    a: &StabilityArgs,
) -> Result<Vec<ResultRow>> {
    let runs: Vec<_> = seeds
        .par_iter()
        .map(|&seed| {
            simulate_stability(
                &cfg.with_seed(seed),
                a.horizon,
                a.initial_backlog,
                a.ceiling,
            )
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut rows = Vec::new();
    for (traj, &seed) in runs.iter().zip(seeds) {
        let n = traj.len() as u64;
        for s in traj {
            rows.push(ResultRow::sim(
                "session",
                s.session as f64,
                "backlog",
                s.backlog as f64,
                None,
                n,
                seed,
            ));
        }
    }
    Ok(rows)
}
