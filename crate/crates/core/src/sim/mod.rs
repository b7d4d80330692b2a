//! Session-level Monte Carlo simulation of CRA-1, CRA-2 and multichannel ALOHA.
//!
//! A session resolves the active users' preamble choices, the detector's
//! missed detections and false alarms, and the resulting successes and
//! session length. Consecutive sessions form a chain: users arriving during
//! session `t` are active in session `t + 1`.

mod engine;
pub mod rng;
mod session;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::ProtocolParams;

pub use engine::{
    estimate_replicas, estimate_throughput, occupancy_distribution, retrial_increment,
    sample_conditional, simulate_stability, ConditionalSample, MeanWithError, StabilityPoint,
};
pub use session::{SessionChain, SessionEngine};

/// Random access scheme under simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Grant-free: fixed Stage 2 of `N` spread payloads decoded by MUD.
    Cra1,
    /// Feedback after Stage 1; one payload slot per detected preamble.
    Cra2,
    /// Orthogonal preambles, `L = N`.
    MultichannelAloha,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Cra1, Scheme::Cra2, Scheme::MultichannelAloha];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Cra1 => "cra1",
            Scheme::Cra2 => "cra2",
            Scheme::MultichannelAloha => "maloha",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cra1" | "cra-1" => Ok(Scheme::Cra1),
            "cra2" | "cra-2" => Ok(Scheme::Cra2),
            "maloha" | "mc-aloha" | "mc_aloha" => Ok(Scheme::MultichannelAloha),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

/// What happens to users that did not succeed in a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Unsuccessful packets are lost.
    Drop,
    /// Unsuccessful users join the next session with a fresh preamble.
    FastRetrial,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Drop => "drop",
            Mode::FastRetrial => "fast-retrial",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drop" => Ok(Mode::Drop),
            "fast-retrial" | "fast_retrial" | "retrial" => Ok(Mode::FastRetrial),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

pub const DEFAULT_SESSIONS: u64 = 100_000;
pub const DEFAULT_WARMUP: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub params: ProtocolParams,
    pub scheme: Scheme,
    pub mode: Mode,
    /// Measured sessions, excluding warmup.
    pub n_sessions: u64,
    pub warmup_sessions: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(params: ProtocolParams, scheme: Scheme) -> Self {
        Self {
            params,
            scheme,
            mode: Mode::Drop,
            n_sessions: DEFAULT_SESSIONS,
            warmup_sessions: DEFAULT_WARMUP,
            seed: 0,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_sessions(mut self, n_sessions: u64, warmup_sessions: u64) -> Self {
        self.n_sessions = n_sessions;
        self.warmup_sessions = warmup_sessions;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sessions < 1 {
            return Err(Error::Config("n_sessions must be at least 1".into()));
        }
        if self.warmup_sessions >= self.n_sessions {
            return Err(Error::Config(format!(
                "warmup_sessions ({}) must be below n_sessions ({})",
                self.warmup_sessions, self.n_sessions
            )));
        }
        Ok(())
    }

    /// Number of preambles the scheme actually draws from.
    pub fn effective_pool(&self) -> u32 {
        match self.scheme {
            Scheme::MultichannelAloha => self.params.preamble_len(),
            _ => self.params.pool_size(),
        }
    }
}

/// Outcome of one session.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SessionTrace {
    pub session_index: u64,
    /// Active users `K`.
    pub active: u64,
    /// Preambles picked by at least one user (`B`).
    pub occupied: u64,
    /// Preambles picked by exactly one user (`B1`).
    pub singleton: u64,
    /// Preambles picked by two or more users (`B2`).
    pub multi: u64,
    /// Detected singleton preambles (`D1`).
    pub detected_singleton: u64,
    /// Detected collided preambles (`D2`).
    pub detected_multi: u64,
    /// False alarms (`D3`).
    pub false_slots: u64,
    /// `D = D1 + D2 + D3`.
    pub total_slots: u64,
    /// Session length in symbols.
    pub session_len: f64,
    pub successes: u64,
    /// Users carried into the next session (fast retrial only).
    pub backlog: u64,
}

/// Monte Carlo throughput estimate over one session chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputEstimate {
    /// Successes per symbol, `sum successes / sum session_len`.
    pub mean_throughput: f64,
    /// Batch-means standard error of `mean_throughput`.
    pub std_error: f64,
    pub sessions_run: u64,
    /// Measured time in symbols.
    pub total_time: f64,
    pub total_successes: u64,
    /// Mean detected preambles per session.
    pub mean_d: f64,
    pub d_std_error: f64,
    /// Mean active users per session.
    pub mean_active: f64,
    pub active_std_error: f64,
    pub mean_session_len: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert_eq!("fast-retrial".parse::<Mode>().unwrap(), Mode::FastRetrial);
        assert_eq!("drop".parse::<Mode>().unwrap(), Mode::Drop);
        assert!("csma".parse::<Scheme>().is_err());
    }

    #[test]
    fn config_validation() {
        let p = ProtocolParams::reference(1.0).unwrap();
        let cfg = SimConfig::new(p, Scheme::Cra2);
        assert!(cfg.validate().is_ok());
        assert!(cfg.with_sessions(0, 0).validate().is_err());
        assert!(cfg.with_sessions(10, 10).validate().is_err());
        assert_eq!(
            cfg.with_scheme(Scheme::MultichannelAloha).effective_pool(),
            31
        );
        // Every scheme/mode combination is accepted.
        for s in Scheme::ALL {
            for m in [Mode::Drop, Mode::FastRetrial] {
                assert!(cfg.with_scheme(s).with_mode(m).validate().is_ok());
            }
        }
    }
}
