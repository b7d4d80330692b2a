//! Flat key-value configuration shared by config files and command-line flags.
//!
//! Every key mirrors a `ProtocolParams` or `SimConfig` field name. A config
//! file (TOML) is read first, then any flag given on the command line
//! replaces the file's value. Unset keys fall back to the reference setting:
//! `N = 31`, `M = 256`, `L = 310`, `tau = 4`, `p_md = p_fa = 0.01`,
//! `lambda_T = 1`, CRA-2, drop mode, `10^5` measured and `10^3` warmup
//! sessions, seed 0.

use std::path::{Path, PathBuf};

use clap::Args;
use cra_core::sim::{rng, Mode, Scheme, SimConfig, DEFAULT_SESSIONS, DEFAULT_WARMUP};
use cra_core::ProtocolParams;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Preamble length N in symbols.
    #[arg(long)]
    pub preamble_len: Option<u32>,
    /// Payload length M in symbols.
    #[arg(long)]
    pub payload_len: Option<u32>,
    /// Preamble pool size L.
    #[arg(long)]
    pub pool_size: Option<u32>,
    /// Total feedback time tau in symbols.
    #[arg(long)]
    pub feedback_total: Option<f64>,
    /// Arrival rate lambda in users per symbol.
    #[arg(long, conflicts_with = "normalized_load")]
    pub arrival_rate: Option<f64>,
    /// Normalized load lambda_T = lambda (N + M).
    #[arg(long)]
    pub normalized_load: Option<f64>,
    /// Per-preamble missed-detection probability.
    #[arg(long)]
    pub p_md: Option<f64>,
    /// Per-preamble false-alarm probability.
    #[arg(long)]
    pub p_fa: Option<f64>,
    /// cra1, cra2 or maloha.
    #[arg(long)]
    pub scheme: Option<String>,
    /// drop or fast-retrial.
    #[arg(long)]
    pub mode: Option<String>,
    /// Measured sessions per run.
    #[arg(long)]
    pub n_sessions: Option<u64>,
    /// Unrecorded sessions before measurement.
    #[arg(long)]
    pub warmup_sessions: Option<u64>,
    /// Seed for single runs.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replicate seeds, comma separated; overrides `seed`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

/// Config file plus flag overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML file with any of the keys below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<Resolved> {
        let file = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        file.overridden_by(&self.settings).resolve()
    }
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_owned(),
            message: e.message().to_owned(),
        })
    }

    /// Keys set in `other` win.
    pub fn overridden_by(&self, other: &Settings) -> Settings {
        let mut out = Settings {
            preamble_len: other.preamble_len.or(self.preamble_len),
            payload_len: other.payload_len.or(self.payload_len),
            pool_size: other.pool_size.or(self.pool_size),
            feedback_total: other.feedback_total.or(self.feedback_total),
            arrival_rate: other.arrival_rate.or(self.arrival_rate),
            normalized_load: other.normalized_load.or(self.normalized_load),
            p_md: other.p_md.or(self.p_md),
            p_fa: other.p_fa.or(self.p_fa),
            scheme: other.scheme.clone().or_else(|| self.scheme.clone()),
            mode: other.mode.clone().or_else(|| self.mode.clone()),
            n_sessions: other.n_sessions.or(self.n_sessions),
            warmup_sessions: other.warmup_sessions.or(self.warmup_sessions),
            seed: other.seed.or(self.seed),
            seeds: other.seeds.clone().or_else(|| self.seeds.clone()),
        };
        // A load given on one layer replaces the other form from the layer below.
        if other.arrival_rate.is_some() {
            out.normalized_load = None;
        } else if other.normalized_load.is_some() {
            out.arrival_rate = None;
        }
        out
    }

    pub fn resolve(&self) -> Result<Resolved> {
        if self.arrival_rate.is_some() && self.normalized_load.is_some() {
            return Err(CliError::config(
                "set either arrival_rate or normalized_load, not both",
            ));
        }
        let reference = ProtocolParams::reference(1.0)?;
        let mut params = ProtocolParams::new(
            self.preamble_len.unwrap_or(reference.preamble_len()),
            self.payload_len.unwrap_or(reference.payload_len()),
            self.pool_size.unwrap_or(reference.pool_size()),
            self.feedback_total.unwrap_or(reference.feedback_total()),
            self.arrival_rate.unwrap_or(0.0),
            self.p_md.unwrap_or(reference.p_md()),
            self.p_fa.unwrap_or(reference.p_fa()),
        )?;
        if self.arrival_rate.is_none() {
            params = params.with_normalized_load(self.normalized_load.unwrap_or(1.0))?;
        }

        let scheme = match &self.scheme {
            Some(s) => s.parse::<Scheme>().map_err(|_| {
                CliError::config(format!("scheme: unknown value `{s}` (cra1, cra2, maloha)"))
            })?,
            None => Scheme::Cra2,
        };
        let mode = match &self.mode {
            Some(s) => s.parse::<Mode>().map_err(|_| {
                CliError::config(format!("mode: unknown value `{s}` (drop, fast-retrial)"))
            })?,
            None => Mode::Drop,
        };
        let seeds = match (&self.seeds, self.seed) {
            (Some(v), _) if v.is_empty() => return Err(CliError::config("seeds: list is empty")),
            (Some(v), _) => v.clone(),
            (None, Some(s)) => vec![s],
            (None, None) => vec![0],
        };
        let sim = SimConfig::new(params, scheme)
            .with_mode(mode)
            .with_sessions(
                self.n_sessions.unwrap_or(DEFAULT_SESSIONS),
                self.warmup_sessions.unwrap_or(DEFAULT_WARMUP),
            )
            .with_seed(seeds[0]);
        sim.validate()?;
        Ok(Resolved { sim, seeds })
    }
}

/// Fully specified run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub sim: SimConfig,
    pub seeds: Vec<u64>,
}

impl Resolved {
    pub fn params(&self) -> &ProtocolParams {
        &self.sim.params
    }

    /// Effective configuration as a TOML table using the file key names.
    pub fn to_table(&self) -> toml::Table {
        let p = &self.sim.params;
        let mut t = toml::Table::new();
        t.insert("preamble_len".into(), i64::from(p.preamble_len()).into());
        t.insert("payload_len".into(), i64::from(p.payload_len()).into());
        t.insert("pool_size".into(), i64::from(p.pool_size()).into());
        t.insert("feedback_total".into(), p.feedback_total().into());
        t.insert("arrival_rate".into(), p.arrival_rate().into());
        t.insert("p_md".into(), p.p_md().into());
        t.insert("p_fa".into(), p.p_fa().into());
        t.insert("scheme".into(), self.sim.scheme.as_str().into());
        t.insert("mode".into(), self.sim.mode.as_str().into());
        t.insert("n_sessions".into(), toml_int(self.sim.n_sessions));
        t.insert("warmup_sessions".into(), toml_int(self.sim.warmup_sessions));
        t.insert(
            "seeds".into(),
            toml::Value::Array(self.seeds.iter().map(|&s| toml_int(s)).collect()),
        );
        t
    }
}

/// TOML integers are signed; larger values are kept as strings.
pub(crate) fn toml_int(v: u64) -> toml::Value {
    match i64::try_from(v) {
        Ok(i) => i.into(),
        Err(_) => v.to_string().into(),
    }
}

/// Provenance record written next to every output file.
pub fn provenance(command: &str, settings: toml::Table, extra: toml::Table) -> String {
    let mut root = toml::Table::new();
    root.insert("command".into(), command.into());
    root.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    root.insert("rng".into(), rng::GENERATOR.into());
    root.insert("config".into(), toml::Value::Table(settings));
    if !extra.is_empty() {
        root.insert("run".into(), toml::Value::Table(extra));
    }
    toml::to_string(&root).expect("plain table serializes")
}

/// `results.csv` -> `results.csv.provenance.toml`.
pub fn provenance_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".provenance.toml");
    PathBuf::from(name)
}
