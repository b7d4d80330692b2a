use rayon::prelude::*;

use super::rng::{seeded, stream};
use super::session::{poisson, SessionChain, SessionEngine};
use super::{Mode, Scheme, SimConfig, ThroughputEstimate};
use crate::error::{Error, Result};
use crate::params::ProtocolParams;

/// Batches used for batch-means standard errors.
pub const BATCHES: u64 = 30;

/// Independent draws per RNG stream in parallel experiments.
const CHUNK: u64 = 10_000;

#[derive(Debug, Clone, Copy, Default)]
struct BatchSums {
    sessions: u64,
    successes: u64,
    time: f64,
    slots: u64,
    active: u64,
}

/// Runs `warmup_sessions` unrecorded sessions followed by `n_sessions`
/// measured ones on a single chain seeded from `cfg.seed`.
pub fn estimate_throughput(cfg: &SimConfig) -> Result<ThroughputEstimate> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let mut chain = SessionChain::new(cfg);
    for _ in 0..cfg.warmup_sessions {
        chain.step(&mut rng);
    }

    let n = cfg.n_sessions;
    let n_batches = BATCHES.min(n);
    let mut batches = vec![BatchSums::default(); n_batches as usize];
    for i in 0..n {
        let t = chain.step(&mut rng);
        // Contiguous batches; the first `n % n_batches` get one extra session.
        let b = &mut batches[(i * n_batches / n) as usize];
        b.sessions += 1;
        b.successes += t.successes;
        b.time += t.session_len;
        b.slots += t.total_slots;
        b.active += t.active;
    }

    let total_time: f64 = batches.iter().map(|b| b.time).sum();
    let total_successes: u64 = batches.iter().map(|b| b.successes).sum();
    let total_slots: u64 = batches.iter().map(|b| b.slots).sum();
    let total_active: u64 = batches.iter().map(|b| b.active).sum();
    let rate = total_successes as f64 / total_time;

    let nb = n_batches as f64;
    let std_error = if n_batches > 1 {
        // Linearized ratio estimator over batches.
        let mean_time = total_time / nb;
        let ss: f64 = batches
            .iter()
            .map(|b| (b.successes as f64 - rate * b.time).powi(2))
            .sum();
        (ss / (nb * (nb - 1.0))).sqrt() / mean_time
    } else {
        0.0
    };
    let per_session = |f: fn(&BatchSums) -> u64| -> (f64, f64) {
        let mean = batches.iter().map(f).sum::<u64>() as f64 / n as f64;
        if n_batches < 2 {
            return (mean, 0.0);
        }
        let ss: f64 = batches
            .iter()
            .map(|b| (f(b) as f64 / b.sessions as f64 - mean).powi(2))
            .sum();
        (mean, (ss / (nb * (nb - 1.0))).sqrt())
    };
    let (mean_d, d_std_error) = per_session(|b| b.slots);
    let (mean_active, active_std_error) = per_session(|b| b.active);
    debug_assert_eq!(mean_d, total_slots as f64 / n as f64);
    debug_assert_eq!(mean_active, total_active as f64 / n as f64);

    Ok(ThroughputEstimate {
        mean_throughput: rate,
        std_error,
        sessions_run: n,
        total_time,
        total_successes,
        mean_d,
        d_std_error,
        mean_active,
        active_std_error,
        mean_session_len: total_time / n as f64,
    })
}

/// One independent chain per seed, run in parallel; output order follows `seeds`.
pub fn estimate_replicas(cfg: &SimConfig, seeds: &[u64]) -> Result<Vec<ThroughputEstimate>> {
    cfg.validate()?;
    seeds
        .par_iter()
        .map(|&seed| estimate_throughput(&cfg.with_seed(seed)))
        .collect()
}

/// Backlog after one session of a fast-retrial chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StabilityPoint {
    pub session: u64,
    pub active: u64,
    pub backlog: u64,
}

/// Backlog trajectory `Z(t) = K(t) - successes(t)` of a fast-retrial chain
/// that starts with `initial_backlog` waiting users.
///
/// Stops after `horizon` sessions, or right after the backlog first exceeds
/// `ceiling` when one is given.
pub fn simulate_stability(
    cfg: &SimConfig,
    horizon: u64,
    initial_backlog: u64,
    ceiling: Option<u64>,
) -> Result<Vec<StabilityPoint>> {
    if cfg.mode != Mode::FastRetrial {
        return Err(Error::Config(
            "stability runs require fast-retrial mode".into(),
        ));
    }
    let mut rng = seeded(cfg.seed);
    let mut chain = SessionChain::new(cfg).with_backlog(initial_backlog);
    let mut out = Vec::with_capacity(horizon.min(1 << 20) as usize);
    for _ in 0..horizon {
        let t = chain.step(&mut rng);
        out.push(StabilityPoint {
            session: t.session_index,
            active: t.active,
            backlog: t.backlog,
        });
        if ceiling.is_some_and(|c| t.backlog > c) {
            break;
        }
    }
    Ok(out)
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanWithError {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    sum: i128,
    sum_sq: i128,
}

impl Moments {
    fn push(&mut self, x: i64) {
        self.n += 1;
        self.sum += x as i128;
        self.sum_sq += (x as i128) * (x as i128);
    }

    fn merge(mut self, o: Moments) -> Moments {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self
    }

    fn finish(&self) -> MeanWithError {
        let n = self.n as f64;
        let mean = self.sum as f64 / n;
        let var = if self.n > 1 {
            ((self.sum_sq as f64 - self.sum as f64 * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        MeanWithError {
            mean,
            std_error: (var / n).sqrt(),
            n: self.n,
        }
    }
}

/// Splits `draws` into fixed chunks on distinct streams and sums results in
/// chunk order, so the outcome is independent of the worker count.
fn chunked<T, F>(draws: u64, seed: u64, init: T, f: F) -> Vec<T>
where
    T: Clone + Send + Sync,
    F: Fn(&mut super::rng::SimRng, u64, &mut T) + Sync,
{
    let chunks = draws.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c + 1);
            let len = CHUNK.min(draws - c * CHUNK);
            let mut acc = init.clone();
            f(&mut rng, len, &mut acc);
            acc
        })
        .collect()
}

/// Monte Carlo moments of the per-session counts given a fixed `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalSample {
    pub singleton: MeanWithError,
    pub occupied: MeanWithError,
    pub d1: MeanWithError,
    pub d2: MeanWithError,
    pub d3: MeanWithError,
}

/// Resolves `draws` independent CRA-2 sessions with exactly `k` active users.
pub fn sample_conditional(p: &ProtocolParams, k: u64, draws: u64, seed: u64) -> ConditionalSample {
    let parts = chunked(draws, seed, [Moments::default(); 5], |rng, len, acc| {
        let mut engine = SessionEngine::new(*p, Scheme::Cra2);
        for _ in 0..len {
            let t = engine.resolve(k, rng);
            acc[0].push(t.singleton as i64);
            acc[1].push(t.occupied as i64);
            acc[2].push(t.detected_singleton as i64);
            acc[3].push(t.detected_multi as i64);
            acc[4].push(t.false_slots as i64);
        }
    });
    let m = parts.into_iter().fold([Moments::default(); 5], |a, b| {
        [0, 1, 2, 3, 4].map(|i| a[i].merge(b[i]))
    });
    ConditionalSample {
        singleton: m[0].finish(),
        occupied: m[1].finish(),
        d1: m[2].finish(),
        d2: m[3].finish(),
        d3: m[4].finish(),
    }
}

/// Empirical histogram of the singleton count `B1` for `k` users on
/// `pool_size` preambles; index `b` holds the number of draws with `B1 = b`.
pub fn occupancy_distribution(pool_size: u32, k: u64, draws: u64, seed: u64) -> Result<Vec<u64>> {
    let p = ProtocolParams::new(1, 1, pool_size, 0.0, 0.0, 0.0, 0.0)?;
    let bins = pool_size as usize + 1;
    let parts = chunked(draws, seed, vec![0u64; bins], |rng, len, hist| {
        let mut engine = SessionEngine::new(p, Scheme::Cra2);
        for _ in 0..len {
            hist[engine.resolve(k, rng).singleton as usize] += 1;
        }
    });
    Ok(parts.into_iter().fold(vec![0u64; bins], |mut a, b| {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        a
    }))
}

/// Mean one-session change `K(t+1) - K(t)` of a fast-retrial CRA-2 chain
/// observed at `K(t) = k`.
pub fn retrial_increment(p: &ProtocolParams, k: u64, draws: u64, seed: u64) -> MeanWithError {
    let parts = chunked(draws, seed, Moments::default(), |rng, len, acc| {
        let mut engine = SessionEngine::new(*p, Scheme::Cra2);
        for _ in 0..len {
            let t = engine.resolve(k, rng);
            let arrivals = poisson(p.arrival_rate() * t.session_len, rng);
            acc.push(arrivals as i64 - t.successes as i64);
        }
    });
    parts
        .into_iter()
        .fold(Moments::default(), Moments::merge)
        .finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambda_t: f64, scheme: Scheme) -> SimConfig {
        SimConfig::new(ProtocolParams::reference(lambda_t).unwrap(), scheme)
    }

    #[test]
    fn zero_load_gives_zero_throughput() {
        for s in Scheme::ALL {
            let est = estimate_throughput(&cfg(0.0, s).with_sessions(500, 10)).unwrap();
            assert_eq!(est.mean_throughput, 0.0);
            assert_eq!(est.total_successes, 0);
            assert!(est.total_time > 0.0);
        }
    }

    #[test]
    fn same_seed_same_estimate() {
        let c = cfg(1.0, Scheme::Cra2)
            .with_sessions(2_000, 100)
            .with_seed(42);
        assert_eq!(
            estimate_throughput(&c).unwrap(),
            estimate_throughput(&c).unwrap()
        );
        let other = estimate_throughput(&c.with_seed(43)).unwrap();
        assert_ne!(estimate_throughput(&c).unwrap(), other);
    }

    #[test]
    fn replicas_follow_seed_order() {
        let c = cfg(0.6, Scheme::Cra1).with_sessions(500, 10);
        let reps = estimate_replicas(&c, &[3, 1, 2]).unwrap();
        assert_eq!(reps[1], estimate_throughput(&c.with_seed(1)).unwrap());
        assert_eq!(reps[0], estimate_throughput(&c.with_seed(3)).unwrap());
    }

    #[test]
    fn estimate_bookkeeping() {
        let c = cfg(1.0, Scheme::Cra2).with_sessions(1_003, 10);
        let e = estimate_throughput(&c).unwrap();
        assert_eq!(e.sessions_run, 1_003);
        assert!(e.std_error > 0.0 && e.d_std_error > 0.0);
        assert!((e.mean_throughput - e.total_successes as f64 / e.total_time).abs() < 1e-18);
        assert!((e.mean_session_len - (35.0 + 256.0 * e.mean_d)).abs() < 1e-9);

        let one = estimate_throughput(&c.with_sessions(1, 0)).unwrap();
        assert_eq!(one.std_error, 0.0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(estimate_throughput(&cfg(1.0, Scheme::Cra2).with_sessions(5, 5)).is_err());
        assert!(simulate_stability(&cfg(1.0, Scheme::Cra2), 10, 0, None).is_err());
    }

    #[test]
    fn stability_zero_rate_stays_empty() {
        let c = cfg(0.0, Scheme::Cra2).with_mode(Mode::FastRetrial);
        let traj = simulate_stability(&c, 1_000, 0, None).unwrap();
        assert_eq!(traj.len(), 1_000);
        assert!(traj.iter().all(|p| p.backlog == 0));
    }

    #[test]
    fn stability_stops_at_ceiling() {
        let c = cfg(3.0, Scheme::Cra2)
            .with_mode(Mode::FastRetrial)
            .with_seed(9);
        let traj = simulate_stability(&c, 10_000, 31, Some(310)).unwrap();
        assert!(traj.len() < 10_000);
        assert!(traj.last().unwrap().backlog > 310);
        assert!(traj[..traj.len() - 1].iter().all(|p| p.backlog <= 310));
    }

    #[test]
    fn parallel_helpers_are_deterministic() {
        let p = ProtocolParams::reference(1.0).unwrap();
        let a = sample_conditional(&p, 20, 25_000, 5);
        let b = sample_conditional(&p, 20, 25_000, 5);
        assert_eq!(a, b);
        assert_eq!(a.d1.n, 25_000);
        let h = occupancy_distribution(16, 4, 12_345, 1).unwrap();
        assert_eq!(h.iter().sum::<u64>(), 12_345);
        assert_eq!(h, occupancy_distribution(16, 4, 12_345, 1).unwrap());
    }
}
