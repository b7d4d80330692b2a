//! Closed-form model of CRA-1, CRA-2 and multichannel ALOHA.
//!
//! Collision probabilities and conditional means are exact in expectation
//! (linearity over preambles). The CRA-2 steady state is the fixed point
//! `x = c1 - c2 * exp(-x)` with `x = beta2 / L`, solved through the principal
//! branch of the Lambert W function.

use crate::error::{Error, Result};
use crate::params::ProtocolParams;
use crate::specfun::{lambert_w0, poisson_cdf, qfunc, INV_E};

/// Probability that a given preamble is picked by exactly one of `k` users.
pub fn alpha1(k: u64, pool_size: u32) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let l = pool_size as f64;
    k as f64 / l * ((k - 1) as f64 * (-1.0 / l).ln_1p()).exp()
}

/// Probability that a given preamble is picked by none of `k` users.
pub fn alpha2(k: u64, pool_size: u32) -> f64 {
    (k as f64 * (-1.0 / pool_size as f64).ln_1p()).exp()
}

/// Expected detected-preamble counts given `K` active users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMeans {
    /// Detected singleton preambles.
    pub d1: f64,
    /// Detected collided preambles.
    pub d2: f64,
    /// False-alarm preambles.
    pub d3: f64,
}

impl ConditionalMeans {
    pub fn total(&self) -> f64 {
        self.d1 + self.d2 + self.d3
    }
}

pub fn conditional_means(k: u64, p: &ProtocolParams) -> ConditionalMeans {
    let l = p.pool_size() as f64;
    let a1 = alpha1(k, p.pool_size());
    let a2 = alpha2(k, p.pool_size());
    let hit = 1.0 - p.p_md();
    ConditionalMeans {
        d1: hit * l * a1,
        d2: hit * l * (1.0 - a1 - a2).max(0.0),
        d3: p.p_fa() * l * a2,
    }
}

/// Coefficients `(c1, c2)` of the CRA-2 fixed-point equation.
pub fn fixed_point_coefficients(p: &ProtocolParams) -> (f64, f64) {
    let lambda = p.arrival_rate();
    let l = p.pool_size() as f64;
    let td = p.slot_duration();
    let c1 = lambda * (p.overhead() / l + td * (1.0 - p.p_md()));
    let c2 = lambda * td * (1.0 - p.p_md() - p.p_fa()).max(0.0);
    (c1, c2)
}

/// Argument `-c2 * exp(-c1)` handed to Lambert W. Always in `[-1/e, 0]` for
/// valid parameters since `c1 >= c2`.
pub fn lambert_argument(p: &ProtocolParams) -> f64 {
    let (c1, c2) = fixed_point_coefficients(p);
    let arg = -c2 * (-c1).exp();
    debug_assert!(
        (-INV_E - 1e-12..=0.0).contains(&arg),
        "Lambert argument {arg} outside [-1/e, 0]"
    );
    arg
}

fn principal_w(p: &ProtocolParams) -> f64 {
    lambert_w0(lambert_argument(p)).expect("c1 >= c2 keeps the argument above -1/e")
}

/// Mean number of active users per CRA-2 session in steady state.
pub fn solve_beta2(p: &ProtocolParams) -> f64 {
    let (c1, _) = fixed_point_coefficients(p);
    let beta2 = p.pool_size() as f64 * (c1 + principal_w(p));
    beta2.max(0.0)
}

/// Mean number of detected preambles (`D = D1 + D2 + D3`) in steady state.
pub fn mean_detected(p: &ProtocolParams) -> f64 {
    mean_detected_given_beta(p, solve_beta2(p))
}

fn mean_detected_given_beta(p: &ProtocolParams, beta2: f64) -> f64 {
    let l = p.pool_size() as f64;
    let unused = (-beta2 / l).exp();
    l * ((1.0 - p.p_md()) - unused * (1.0 - p.p_md() - p.p_fa()))
}

/// Same quantity as [`mean_detected`] via the Lambert W expression
/// `L (1 - P_MD + W / (lambda T_D))`. Requires `lambda > 0`.
pub fn mean_detected_lambert(p: &ProtocolParams) -> Result<f64> {
    let lambda = p.arrival_rate();
    if lambda <= 0.0 {
        return Err(Error::param("arrival_rate", "must be positive"));
    }
    let l = p.pool_size() as f64;
    Ok(l * (1.0 - p.p_md() + principal_w(p) / (lambda * p.slot_duration())))
}

/// CRA-2 steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub beta2: f64,
    pub d_bar: f64,
    pub d1_bar: f64,
    /// Successes per symbol.
    pub eta2: f64,
    pub mean_session_len: f64,
}

impl SteadyState {
    /// `eta2` recomputed as mean successes over mean session length.
    pub fn eta2_ratio(&self) -> f64 {
        self.d1_bar / self.mean_session_len
    }
}

pub fn throughput_cra2(p: &ProtocolParams) -> SteadyState {
    let beta2 = solve_beta2(p);
    let l = p.pool_size() as f64;
    let survive = (-beta2 / l).exp();
    let d_bar = mean_detected_given_beta(p, beta2);
    SteadyState {
        beta2,
        d_bar,
        d1_bar: (1.0 - p.p_md()) * beta2 * survive,
        eta2: p.arrival_rate() * (1.0 - p.p_md()) * survive,
        mean_session_len: p.overhead() + p.slot_duration() * d_bar,
    }
}

/// Mean active users per fixed-length session (CRA-1 and multichannel ALOHA).
pub fn beta1(p: &ProtocolParams) -> f64 {
    p.arrival_rate() * p.fixed_session_len()
}

/// CRA-1 throughput in successes per symbol. Stage-2 MUD decodes only when
/// fewer than `N` users are active.
pub fn throughput_cra1(p: &ProtocolParams) -> f64 {
    let n = p.preamble_len() as u64;
    if n < 2 {
        return 0.0;
    }
    let l = p.pool_size() as f64;
    let b1 = beta1(p);
    p.arrival_rate() * (1.0 - p.p_md()) * (-b1 / l).exp() * poisson_cdf(n - 2, b1 * (1.0 - 1.0 / l))
}

/// Multichannel ALOHA throughput: `L = N` orthogonal preambles, at most `N`
/// active users decodable.
pub fn throughput_maloha(p: &ProtocolParams) -> f64 {
    let n = p.preamble_len() as u64;
    let nf = n as f64;
    let b1 = beta1(p);
    p.arrival_rate()
        * (1.0 - p.p_md())
        * (-b1 / nf).exp()
        * poisson_cdf(n - 1, b1 * (1.0 - 1.0 / nf))
}

/// Expected one-session change of the active-user count under fast retrial.
pub fn drift(k: u64, p: &ProtocolParams) -> f64 {
    let m = conditional_means(k, p);
    let lambda = p.arrival_rate();
    let td = p.slot_duration();
    lambda * (p.overhead() + td * (m.d2 + m.d3)) - (1.0 - lambda * td) * m.d1
}

/// `lim_{K -> inf} drift(K)`.
pub fn drift_limit(p: &ProtocolParams) -> f64 {
    let l = p.pool_size() as f64;
    p.arrival_rate() * (p.overhead() + p.slot_duration() * (1.0 - p.p_md()) * l)
}

/// Smallest `K0` such that `drift(K) > 0` for every `K >= K0`.
///
/// Scans `K` up to `max(100 L, 10_000)`; past that point the singleton and
/// false-alarm terms are below double precision and the drift equals its
/// limit. Returns `None` when the limit itself is not positive.
pub fn drift_threshold(p: &ProtocolParams) -> Option<u64> {
    if drift_limit(p) <= 0.0 {
        return None;
    }
    let k_max = (100 * p.pool_size() as u64).max(10_000);
    let last_bad = (0..=k_max).rev().find(|&k| drift(k, p) <= 0.0);
    Some(last_bad.map_or(0, |k| k + 1))
}

/// Effective receive SNRs feeding the pairwise ML error bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBoundInputs {
    active_snr: Vec<f64>,
    virtual_snr: Vec<f64>,
    pool_size: u32,
}

impl ErrorBoundInputs {
    /// One linear SNR (`P_k |h_k|^2 / N0`) per active user; `K` is the list
    /// length. Virtual users default to the mean active SNR, the
    /// power-controlled case where every receive power is equal.
    pub fn new(active_snr: Vec<f64>, pool_size: u32) -> Result<Self> {
        let k = active_snr.len();
        if k == 0 {
            return Err(Error::param("active_snr", "need at least one active user"));
        }
        if k >= pool_size as usize {
            return Err(Error::param(
                "active_snr",
                "active count must be below the pool size",
            ));
        }
        check_snr("active_snr", &active_snr)?;
        let mean = active_snr.iter().sum::<f64>() / k as f64;
        let virtual_snr = vec![mean; pool_size as usize - k];
        Ok(Self {
            active_snr,
            virtual_snr,
            pool_size,
        })
    }

    pub fn with_virtual_snr(mut self, virtual_snr: Vec<f64>) -> Result<Self> {
        if virtual_snr.is_empty() {
            return Err(Error::param("virtual_snr", "must not be empty"));
        }
        check_snr("virtual_snr", &virtual_snr)?;
        self.virtual_snr = virtual_snr;
        Ok(self)
    }

    pub fn active_count(&self) -> usize {
        self.active_snr.len()
    }

    pub fn pool_size(&self) -> u32 {
        self.pool_size
    }
}

fn check_snr(field: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().find(|s| s.is_nan() || **s < 0.0) {
        Some(bad) => Err(Error::param(field, format!("SNR {bad} is negative or NaN"))),
        None => Ok(()),
    }
}

/// Pairwise ML error probability for a user at linear SNR `snr`.
pub fn pairwise_error(snr: f64) -> f64 {
    qfunc((snr / 2.0).sqrt())
}

/// Union bounds `(P_MD, P_FA)` built from single-user pairwise ML errors.
pub fn md_fa_bounds(e: &ErrorBoundInputs) -> (f64, f64) {
    let mean = |v: &[f64]| v.iter().map(|&s| pairwise_error(s)).sum::<f64>() / v.len() as f64;
    (mean(&e.active_snr), mean(&e.virtual_snr))
}

/// Probability that the detected support is wrong anywhere in a pool of
/// `pool_size` preambles when every per-preamble error has probability `eps`.
pub fn perr_approx(pool_size: u32, eps: f64) -> f64 {
    -(-(pool_size as f64) * eps).exp_m1()
}
