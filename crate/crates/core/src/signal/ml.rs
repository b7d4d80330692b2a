//! Pairwise maximum-likelihood comparisons with known channels.
//!
//! Each trial keeps `Psi` and `s` fixed and redraws only the noise, then
//! compares the residual of the true hypothesis with that of a competitor
//! differing in one preamble. Exact ties (possible only for a zero-energy
//! difference) count as half an error, the outcome of a fair tie-break.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{add_noise, PreamblePool, SparseScene};
use crate::error::{Error, Result};
use crate::sim::rng::stream;

const CHUNK: u64 = 20_000;

pub const SUPPORT_SEARCH_MAX_POOL: usize = 16;
pub const SUPPORT_SEARCH_MAX_K: usize = 3;

/// Empirical error rate over independent noise draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRate {
    pub rate: f64,
    /// Binomial standard error `sqrt(rate (1 - rate) / trials)`.
    pub std_error: f64,
    pub trials: u64,
    pub errors: u64,
    pub ties: u64,
}

impl TrialRate {
    fn new(trials: u64, errors: u64, ties: u64) -> Self {
        let n = trials.max(1) as f64;
        let rate = (errors as f64 + 0.5 * ties as f64) / n;
        Self {
            rate,
            std_error: (rate * (1.0 - rate) / n).sqrt(),
            trials,
            errors,
            ties,
        }
    }
}

/// Counts trials where `truth` loses to `competitor` under noise of variance
/// `noise_var`, chunked over independent streams of `seed`.
fn pairwise_trials(
    truth: &DVector<Complex64>,
    competitor: &DVector<Complex64>,
    noise_var: f64,
    seed: u64,
    n_trials: u64,
) -> TrialRate {
    let chunks = n_trials.div_ceil(CHUNK);
    let (errors, ties) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c + 1);
            let len = CHUNK.min(n_trials - c * CHUNK);
            let (mut errors, mut ties) = (0u64, 0u64);
            let mut y = truth.clone();
            for _ in 0..len {
                y.copy_from(truth);
                add_noise(&mut y, noise_var, &mut rng);
                let r_true = (&y - truth).norm_squared();
                let r_alt = (&y - competitor).norm_squared();
                if r_true > r_alt {
                    errors += 1;
                } else if r_true == r_alt {
                    ties += 1;
                }
            }
            (errors, ties)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    TrialRate::new(n_trials, errors, ties)
}

/// Rate at which the ML detector prefers the hypothesis that drops the active
/// user on preamble `index` over the true support. Converges to
/// `Q(sqrt(|c|^2 / (2 N0)))` for that user's coefficient `c`.
pub fn ml_md_trial(
    pool: &PreamblePool,
    scene: &SparseScene,
    index: usize,
    seed: u64,
    n_trials: u64,
) -> Result<TrialRate> {
    let truth = scene.mean_observation(pool)?;
    let pos = scene
        .support()
        .iter()
        .position(|&l| l == index)
        .ok_or(Error::IndexNotInSupport { index })?;
    let mut competitor = truth.clone();
    competitor.axpy(
        -scene.coefficients()[pos],
        &pool.matrix().column(index),
        Complex64::new(1.0, 0.0),
    );
    Ok(pairwise_trials(
        &truth,
        &competitor,
        scene.noise_var(),
        seed,
        n_trials,
    ))
}

/// Rate at which the ML detector prefers adding a virtual user on the unused
/// preamble `virtual_index`, received at linear SNR `virtual_snr`, over the
/// true support.
pub fn ml_fa_trial(
    pool: &PreamblePool,
    scene: &SparseScene,
    virtual_index: usize,
    virtual_snr: f64,
    seed: u64,
    n_trials: u64,
) -> Result<TrialRate> {
    if scene.support().contains(&virtual_index) {
        return Err(Error::IndexInSupport(virtual_index));
    }
    if virtual_index >= pool.pool_size() {
        return Err(Error::IndexOutOfRange {
            index: virtual_index,
            pool_size: pool.pool_size(),
        });
    }
    if virtual_snr.is_nan() || virtual_snr < 0.0 {
        return Err(Error::param("virtual_snr", "must be nonnegative"));
    }
    let truth = scene.mean_observation(pool)?;
    let amp = Complex64::new((virtual_snr * scene.noise_var()).sqrt(), 0.0);
    let mut competitor = truth.clone();
    competitor.axpy(
        amp,
        &pool.matrix().column(virtual_index),
        Complex64::new(1.0, 0.0),
    );
    Ok(pairwise_trials(
        &truth,
        &competitor,
        scene.noise_var(),
        seed,
        n_trials,
    ))
}

/// Exhaustive ML support detection with unknown coefficients: the size-`k`
/// column subset whose span leaves the smallest least-squares residual.
///
/// Reference only; limited to pools of at most 16 preambles and `k <= 3`.
pub fn ml_support_search(
    pool: &PreamblePool,
    y: &DVector<Complex64>,
    k: usize,
) -> Result<Vec<usize>> {
    let l = pool.pool_size();
    if l > SUPPORT_SEARCH_MAX_POOL {
        return Err(Error::SizeGuard {
            max: SUPPORT_SEARCH_MAX_POOL,
            got: l,
        });
    }
    if k > SUPPORT_SEARCH_MAX_K || k > pool.preamble_len() {
        return Err(Error::param(
            "k",
            format!("support size {k} not searchable"),
        ));
    }
    if y.len() != pool.preamble_len() {
        return Err(Error::param("y", "length must equal the preamble length"));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let residual = |subset: &[usize]| -> f64 {
        let a = DMatrix::from_columns(
            &subset
                .iter()
                .map(|&i| pool.matrix().column(i))
                .collect::<Vec<_>>(),
        );
        let x = a
            .clone()
            .svd(true, true)
            .solve(y, 1e-12)
            .expect("SVD computed with both factors");
        (y - a * x).norm_squared()
    };
    let best = (0..l)
        .combinations(k)
        .map(|s| {
            let r = residual(&s);
            (s, r)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(s, _)| s)
        .expect("at least one subset");
    Ok(best)
}
