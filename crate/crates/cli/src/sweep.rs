//! One-dimensional parameter sweeps comparing closed forms with simulation.

use std::fmt;
use std::str::FromStr;

use cra_core::analytic::{throughput_cra1, throughput_cra2, throughput_maloha};
use cra_core::sim::{estimate_throughput, Scheme, SimConfig, ThroughputEstimate};
use cra_core::ProtocolParams;
use rayon::prelude::*;

use crate::error::{CliError, Result};
use crate::table::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    /// Normalized load `lambda (N + M)`.
    LambdaT,
    PoolSize,
    PayloadLen,
    /// `p_md = p_fa = value`.
    PErr,
}

impl SweepVar {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVar::LambdaT => "lambda_T",
            SweepVar::PoolSize => "L",
            SweepVar::PayloadLen => "M",
            SweepVar::PErr => "p_err",
        }
    }

    /// `base` with the swept quantity set to `v`; other fields, including
    /// the arrival rate for `L`, `M` and `p_err`, are kept.
    pub fn apply(&self, base: &ProtocolParams, v: f64) -> Result<ProtocolParams> {
        let p = match self {
            SweepVar::LambdaT => base.with_normalized_load(v)?,
            SweepVar::PoolSize => base.with_pool_size(as_count(v, "L")?)?,
            SweepVar::PayloadLen => base.with_payload_len(as_count(v, "M")?)?,
            SweepVar::PErr => base.with_error_probs(v, v)?,
        };
        Ok(p)
    }
}

fn as_count(v: f64, name: &str) -> Result<u32> {
    if v.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&v) {
        Ok(v as u32)
    } else {
        Err(CliError::config(format!(
            "grid: {name} value {v} is not a whole number"
        )))
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepVar {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda_T" | "lambda_t" => Ok(SweepVar::LambdaT),
            "L" | "pool_size" => Ok(SweepVar::PoolSize),
            "M" | "payload_len" => Ok(SweepVar::PayloadLen),
            "p_err" => Ok(SweepVar::PErr),
            other => Err(CliError::config(format!(
                "var: unknown sweep variable `{other}` (lambda_T, L, M, p_err)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Normalized CRA-1 throughput `T eta1`.
    Eta1,
    /// Normalized CRA-2 throughput `T eta2`.
    Eta2,
    /// Normalized multichannel ALOHA throughput `T eta_ma`.
    EtaMa,
    /// Stage-2 length against CRA-1's: `D M / (N M) = D / N`.
    DBarRatio,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Eta1, Metric::Eta2, Metric::EtaMa, Metric::DBarRatio];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Eta1 => "eta1",
            Metric::Eta2 => "eta2",
            Metric::EtaMa => "eta_ma",
            Metric::DBarRatio => "d_bar_ratio",
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            Metric::Eta1 => Scheme::Cra1,
            Metric::Eta2 | Metric::DBarRatio => Scheme::Cra2,
            Metric::EtaMa => Scheme::MultichannelAloha,
        }
    }

    pub fn analytic(&self, p: &ProtocolParams) -> f64 {
        let t = p.transaction_time();
        match self {
            Metric::Eta1 => t * throughput_cra1(p),
            Metric::Eta2 => t * throughput_cra2(p).eta2,
            Metric::EtaMa => t * throughput_maloha(p),
            Metric::DBarRatio => throughput_cra2(p).d_bar / p.preamble_len() as f64,
        }
    }

    /// Estimate and standard error from a run of [`Metric::scheme`].
    pub fn simulated(&self, p: &ProtocolParams, est: &ThroughputEstimate) -> (f64, f64) {
        let t = p.transaction_time();
        match self {
            Metric::DBarRatio => {
                let n = p.preamble_len() as f64;
                (est.mean_d / n, est.d_std_error / n)
            }
            _ => (t * est.mean_throughput, t * est.std_error),
        }
    }
}

impl FromStr for Metric {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CliError::config(format!("metrics: unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub var: SweepVar,
    pub grid: Vec<f64>,
    pub metrics: Vec<Metric>,
    pub seeds: Vec<u64>,
    /// Closed forms only when false.
    pub simulate: bool,
}

impl SweepSpec {
    pub fn new(base: SimConfig, var: SweepVar, grid: Vec<f64>) -> Self {
        Self {
            base,
            var,
            grid,
            metrics: Metric::ALL.to_vec(),
            seeds: vec![base.seed],
            simulate: true,
        }
    }

    /// Parameters at every grid point, after checking the grid.
    pub fn points(&self) -> Result<Vec<ProtocolParams>> {
        if self.grid.is_empty() {
            return Err(CliError::config("grid: no values"));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(CliError::config("grid: values must be finite"));
        }
        let increasing = self.grid.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.grid.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(CliError::config("grid: values must be strictly monotone"));
        }
        if self.metrics.is_empty() {
            return Err(CliError::config("metrics: no metrics selected"));
        }
        if self.simulate && self.seeds.is_empty() {
            return Err(CliError::config("seeds: no replicate seeds"));
        }
        self.base.validate()?;
        self.grid
            .iter()
            .map(|&v| self.var.apply(&self.base.params, v))
            .collect()
    }
}

/// Rows ordered by grid point, then metric, then source (closed form first),
/// then seed. Simulations run in parallel; the order does not depend on
/// scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    let points = spec.points()?;
    let mut schemes: Vec<Scheme> = Vec::new();
    for m in &spec.metrics {
        if !schemes.contains(&m.scheme()) {
            schemes.push(m.scheme());
        }
    }

    let sims: Vec<Vec<ThroughputEstimate>> = if spec.simulate {
        let jobs: Vec<(usize, Scheme, u64)> = (0..points.len())
            .flat_map(|i| {
                schemes
                    .iter()
                    .flat_map(move |&s| spec.seeds.iter().map(move |&seed| (i, s, seed)))
            })
            .collect();
        let results: Vec<ThroughputEstimate> = jobs
            .par_iter()
            .map(|&(i, scheme, seed)| {
                let mut cfg = spec.base.with_scheme(scheme).with_seed(seed);
                cfg.params = points[i];
                estimate_throughput(&cfg)
            })
            .collect::<std::result::Result<_, _>>()?;
        let per_point = schemes.len() * spec.seeds.len();
        results.chunks(per_point).map(<[_]>::to_vec).collect()
    } else {
        Vec::new()
    };

    let var = spec.var.as_str();
    let mut rows = Vec::new();
    for (i, (&v, p)) in spec.grid.iter().zip(&points).enumerate() {
        for m in &spec.metrics {
            rows.push(ResultRow::analytic(var, v, m.as_str(), m.analytic(p)));
            if !spec.simulate {
                continue;
            }
            let s = schemes
                .iter()
                .position(|&s| s == m.scheme())
                .expect("scheme listed");
            for (j, &seed) in spec.seeds.iter().enumerate() {
                let est = &sims[i][s * spec.seeds.len() + j];
                let (x, se) = m.simulated(p, est);
                rows.push(ResultRow::sim(
                    var,
                    v,
                    m.as_str(),
                    x,
                    Some(se),
                    est.sessions_run,
                    seed,
                ));
            }
        }
    }
    Ok(rows)
}

/// Named sweeps reproducing the standard experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Load `lambda_T` from 0.1 to 2.0 in steps of 0.1 at the reference setting.
    Fig3,
    /// Pool size from `2N` to `50N` at `lambda_T = 1`.
    Fig4,
    /// Payload length from 32 to 512 at fixed `lambda = 1/200`.
    Fig5,
    /// `p_md = p_fa` from 0 to 0.2 at `lambda_T = 1`.
    Fig6,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Fig3, Preset::Fig4, Preset::Fig5, Preset::Fig6];

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
        }
    }

    /// Base parameters of the preset (reference setting with the preset's load).
    pub fn base_params(&self) -> ProtocolParams {
        let p = ProtocolParams::reference(1.0).expect("reference setting is valid");
        match self {
            Preset::Fig5 => p.with_arrival_rate(1.0 / 200.0).expect("valid rate"),
            _ => p,
        }
    }

    pub fn grid(&self) -> (SweepVar, Vec<f64>) {
        match self {
            Preset::Fig3 => (
                SweepVar::LambdaT,
                (1..=20).map(|i| i as f64 / 10.0).collect(),
            ),
            Preset::Fig4 => (
                SweepVar::PoolSize,
                [2, 3, 5, 7, 10, 15, 20, 30, 40, 50]
                    .map(|k| (31 * k) as f64)
                    .to_vec(),
            ),
            Preset::Fig5 => (
                SweepVar::PayloadLen,
                (1..=16).map(|i| (32 * i) as f64).collect(),
            ),
            Preset::Fig6 => (
                SweepVar::PErr,
                vec![0.0, 0.005, 0.01, 0.02, 0.03, 0.05, 0.075, 0.1, 0.15, 0.2],
            ),
        }
    }

    /// Sweep over the preset grid using the run settings of `run`.
    pub fn spec(&self, run: SimConfig, seeds: Vec<u64>) -> SweepSpec {
        let (var, grid) = self.grid();
        let mut base = run;
        base.params = self.base_params();
        SweepSpec {
            seeds,
            ..SweepSpec::new(base, var, grid)
        }
    }
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                CliError::config(format!(
                    "preset: unknown preset `{s}` (fig3, fig4, fig5, fig6)"
                ))
            })
    }
}
