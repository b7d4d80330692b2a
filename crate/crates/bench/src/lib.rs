//! Shared fixtures for the benchmarks.

use cra_core::signal::{gen_pool, PreamblePool, SparseScene};
use cra_core::sim::{Scheme, SimConfig};
use cra_core::ProtocolParams;

/// Reference setting at normalized load `lambda_t`.
pub fn reference(lambda_t: f64) -> ProtocolParams {
    ProtocolParams::reference(lambda_t).expect("reference load is valid")
}

/// Short simulation of `scheme` at the reference setting.
pub fn short_run(scheme: Scheme, lambda_t: f64, sessions: u64) -> SimConfig {
    SimConfig::new(reference(lambda_t), scheme)
        .with_sessions(sessions, sessions / 10)
        .with_seed(1)
}

/// Full-size pool with four power-controlled users.
pub fn detection_scene(snr: f64) -> (PreamblePool, SparseScene) {
    let pool = gen_pool(31, 310, 3).expect("valid pool shape");
    let scene = SparseScene::power_controlled(vec![3, 40, 77, 150], snr, 1.0).expect("valid scene");
    (pool, scene)
}
