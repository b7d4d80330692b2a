use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use super::{Mode, Scheme, SessionTrace, SimConfig};
use crate::params::ProtocolParams;

/// Resolves single sessions for a fixed scheme: preamble choices, detection
/// errors, successes and session length.
#[derive(Debug, Clone)]
pub struct SessionEngine {
    params: ProtocolParams,
    scheme: Scheme,
    pool_size: u32,
    counts: Vec<u32>,
    touched: Vec<u32>,
    choices: Vec<u32>,
}

/// Per-session preamble occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct Occupancy {
    pub singleton: u64,
    pub multi: u64,
    /// Users sharing a preamble with someone else.
    pub collided_users: u64,
}

impl SessionEngine {
    pub fn new(params: ProtocolParams, scheme: Scheme) -> Self {
        let pool_size = match scheme {
            Scheme::MultichannelAloha => params.preamble_len(),
            _ => params.pool_size(),
        };
        Self {
            params,
            scheme,
            pool_size,
            counts: vec![0; pool_size as usize],
            touched: Vec::new(),
            choices: Vec::new(),
        }
    }

    pub fn pool_size(&self) -> u32 {
        self.pool_size
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Session with `active` users, each picking a preamble uniformly.
    pub fn resolve<R: Rng + ?Sized>(&mut self, active: u64, rng: &mut R) -> SessionTrace {
        let mut choices = std::mem::take(&mut self.choices);
        choices.clear();
        choices.extend((0..active).map(|_| rng.random_range(0..self.pool_size)));
        let trace = self.resolve_choices(&choices, rng);
        self.choices = choices;
        trace
    }

    /// Session where user `i` transmits preamble `choices[i]`.
    ///
    /// # Panics
    /// If a choice is outside the pool.
    pub fn resolve_choices<R: Rng + ?Sized>(
        &mut self,
        choices: &[u32],
        rng: &mut R,
    ) -> SessionTrace {
        let occ = self.occupancy(choices);
        let active = choices.len() as u64;
        let occupied = occ.singleton + occ.multi;
        let hit = 1.0 - self.params.p_md();
        let detected_singleton = binomial(occ.singleton, hit, rng);
        let detected_multi = binomial(occ.multi, hit, rng);
        let false_slots = binomial(self.pool_size as u64 - occupied, self.params.p_fa(), rng);
        let total_slots = detected_singleton + detected_multi + false_slots;

        let n = self.params.preamble_len() as u64;
        let (successes, session_len) = match self.scheme {
            Scheme::Cra2 => (
                detected_singleton,
                self.params.cra2_session_len(total_slots),
            ),
            // MUD over N-chip spreading fails once K reaches N.
            Scheme::Cra1 => {
                let s = if active < n { detected_singleton } else { 0 };
                (s, self.params.fixed_session_len())
            }
            // Matches the decodable cap of the closed form: at most N active users.
            Scheme::MultichannelAloha => {
                let s = if active <= n { detected_singleton } else { 0 };
                (s, self.params.fixed_session_len())
            }
        };

        SessionTrace {
            session_index: 0,
            active,
            occupied,
            singleton: occ.singleton,
            multi: occ.multi,
            detected_singleton,
            detected_multi,
            false_slots,
            total_slots,
            session_len,
            successes,
            backlog: 0,
        }
    }

    pub(crate) fn occupancy(&mut self, choices: &[u32]) -> Occupancy {
        for &c in choices {
            let slot = &mut self.counts[c as usize];
            if *slot == 0 {
                self.touched.push(c);
            }
            *slot += 1;
        }
        let mut occ = Occupancy::default();
        for &c in &self.touched {
            let slot = &mut self.counts[c as usize];
            if *slot == 1 {
                occ.singleton += 1;
            } else {
                occ.multi += 1;
                occ.collided_users += *slot as u64;
            }
            *slot = 0;
        }
        self.touched.clear();
        occ
    }
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

pub(crate) fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean)
        .expect("finite positive mean")
        .sample(rng) as u64
}

/// A sequential chain of sessions. Arrivals during one session are the new
/// active users of the next.
#[derive(Debug, Clone)]
pub struct SessionChain {
    engine: SessionEngine,
    mode: Mode,
    prev_len: f64,
    backlog: u64,
    index: u64,
}

impl SessionChain {
    pub fn new(cfg: &SimConfig) -> Self {
        let engine = SessionEngine::new(cfg.params, cfg.scheme);
        let prev_len = initial_session_len(&cfg.params, cfg.scheme);
        Self {
            engine,
            mode: cfg.mode,
            prev_len,
            backlog: 0,
            index: 0,
        }
    }

    pub fn with_backlog(mut self, backlog: u64) -> Self {
        self.backlog = backlog;
        self
    }

    pub fn backlog(&self) -> u64 {
        self.backlog
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> SessionTrace {
        let arrivals = poisson(self.engine.params.arrival_rate() * self.prev_len, rng);
        let carried = match self.mode {
            Mode::Drop => 0,
            Mode::FastRetrial => self.backlog,
        };
        let mut trace = self.engine.resolve(arrivals + carried, rng);
        trace.session_index = self.index;
        trace.backlog = match self.mode {
            Mode::Drop => 0,
            Mode::FastRetrial => trace.active - trace.successes,
        };
        self.backlog = trace.backlog;
        self.prev_len = trace.session_len;
        self.index += 1;
        trace
    }
}

/// Length of the (virtual) session preceding the first one.
///
/// CRA-2 starts from `T~_P + T_D round(L (1 - exp(-lambda T / L)))`; warmup
/// removes the transient.
fn initial_session_len(p: &ProtocolParams, scheme: Scheme) -> f64 {
    match scheme {
        Scheme::Cra2 => {
            let l = p.pool_size() as f64;
            let guess = (l * (1.0 - (-p.normalized_load() / l).exp())).round();
            p.cra2_session_len(guess as u64)
        }
        Scheme::Cra1 | Scheme::MultichannelAloha => p.fixed_session_len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng::seeded;

    fn perfect(pool: u32) -> ProtocolParams {
        ProtocolParams::new(31, 256, pool, 4.0, 1.0 / 287.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn cra2_single_user_perfect_detection() {
        let p = perfect(310);
        let mut e = SessionEngine::new(p, Scheme::Cra2);
        let t = e.resolve(1, &mut seeded(1));
        assert_eq!((t.total_slots, t.successes), (1, 1));
        assert_eq!(t.session_len, p.overhead() + p.slot_duration());
    }

    #[test]
    fn cra2_pure_collision() {
        let mut e = SessionEngine::new(perfect(310), Scheme::Cra2);
        let t = e.resolve_choices(&[7, 7], &mut seeded(1));
        assert_eq!((t.total_slots, t.detected_multi, t.successes), (1, 1, 0));
        assert_eq!((t.occupied, t.singleton, t.multi), (1, 0, 1));
    }

    #[test]
    fn cra1_mud_fails_at_n_users() {
        let p = perfect(10_000);
        let mut e = SessionEngine::new(p, Scheme::Cra1);
        let distinct: Vec<u32> = (0..31).collect();
        let t = e.resolve_choices(&distinct, &mut seeded(2));
        assert_eq!(t.detected_singleton, 31);
        assert_eq!(t.successes, 0);
        let t = e.resolve_choices(&distinct[..30], &mut seeded(2));
        assert_eq!(t.successes, 30);
        let t = e.resolve(1, &mut seeded(3));
        assert_eq!(t.successes, 1);
        assert_eq!(t.session_len, p.fixed_session_len());
    }

    #[test]
    fn maloha_orthogonal_channels() {
        let p = perfect(310);
        let mut e = SessionEngine::new(p, Scheme::MultichannelAloha);
        assert_eq!(e.pool_size(), 31);
        let distinct: Vec<u32> = (0..31).collect();
        let t = e.resolve_choices(&distinct, &mut seeded(4));
        assert_eq!(t.successes, 31);
        let t = e.resolve_choices(&[3, 3], &mut seeded(4));
        assert_eq!(t.successes, 0);
        let t = e.resolve_choices(&[3, 3, 5], &mut seeded(4));
        assert_eq!(t.successes, 1);
    }

    #[test]
    fn trace_invariants_hold() {
        let p = ProtocolParams::new(31, 256, 40, 4.0, 1.0 / 287.0, 0.2, 0.1).unwrap();
        let mut e = SessionEngine::new(p, Scheme::Cra2);
        let mut rng = seeded(5);
        for k in [0u64, 1, 3, 17, 40, 90, 400] {
            for _ in 0..200 {
                let t = e.resolve(k, &mut rng);
                assert_eq!(t.occupied, t.singleton + t.multi);
                assert!(t.occupied <= k.min(40));
                assert!(t.detected_singleton <= t.singleton);
                assert!(t.detected_multi <= t.multi);
                assert!(t.false_slots <= 40 - t.occupied);
                assert_eq!(
                    t.total_slots,
                    t.detected_singleton + t.detected_multi + t.false_slots
                );
                assert_eq!(t.session_len, p.cra2_session_len(t.total_slots));
                assert!(t.successes <= t.detected_singleton);
            }
        }
    }

    #[test]
    fn occupancy_accounts_for_every_user() {
        let mut e = SessionEngine::new(perfect(50), Scheme::Cra2);
        let mut rng = seeded(6);
        for k in [0u32, 1, 2, 10, 49, 200] {
            let choices: Vec<u32> = (0..k).map(|_| rng.random_range(0..50)).collect();
            let occ = e.occupancy(&choices);
            assert_eq!(occ.singleton + occ.collided_users, k as u64);
            assert!(occ.collided_users >= 2 * occ.multi);
        }
    }

    #[test]
    fn zero_rate_chain_stays_empty() {
        let p = ProtocolParams::reference(0.0).unwrap();
        let cfg = SimConfig::new(p, Scheme::Cra2).with_mode(Mode::FastRetrial);
        let mut chain = SessionChain::new(&cfg);
        let mut rng = seeded(7);
        for _ in 0..100 {
            let t = chain.step(&mut rng);
            assert_eq!((t.active, t.successes, t.backlog), (0, 0, 0));
        }
    }

    #[test]
    fn chain_indexes_sessions_and_carries_backlog() {
        let p = ProtocolParams::reference(3.0).unwrap();
        let cfg = SimConfig::new(p, Scheme::Cra2).with_mode(Mode::FastRetrial);
        let mut chain = SessionChain::new(&cfg).with_backlog(31);
        let mut rng = seeded(8);
        let mut prev_backlog = 31;
        for i in 0..20 {
            let t = chain.step(&mut rng);
            assert_eq!(t.session_index, i);
            assert!(t.active >= prev_backlog);
            assert_eq!(t.backlog, t.active - t.successes);
            prev_backlog = t.backlog;
        }
    }
}
