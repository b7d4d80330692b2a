//! Complex-baseband model of the preamble stage.
//!
//! `y = Psi s + n` for Stage 1 and `r_m = Psi s_m + n_m` for the `M` Stage-2
//! symbols, where `s` is `K`-sparse with one entry `sqrt(P_k) h_k` per active
//! user and `n` is circularly-symmetric complex Gaussian noise.

mod ml;
mod spark;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sim::rng::seeded;

pub use ml::{
    ml_fa_trial, ml_md_trial, ml_support_search, TrialRate, SUPPORT_SEARCH_MAX_K,
    SUPPORT_SEARCH_MAX_POOL,
};
pub use spark::{
    mmv_identifiable, numerical_rank, spark_bruteforce, RANK_TOLERANCE, SPARK_MAX_COLUMNS,
};

/// `N x L` matrix of unit-norm preamble columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PreamblePool {
    matrix: DMatrix<Complex64>,
}

impl PreamblePool {
    /// Normalizes every column of `matrix` to unit Euclidean norm.
    pub fn from_matrix(mut matrix: DMatrix<Complex64>) -> Result<Self> {
        let (n, l) = matrix.shape();
        if n < 1 || l < n {
            return Err(Error::param(
                "matrix",
                format!("need L >= N >= 1, got {n} x {l}"),
            ));
        }
        for mut col in matrix.column_iter_mut() {
            let norm = col.norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::param("matrix", "columns must be nonzero and finite"));
            }
            col.unscale_mut(norm);
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn preamble_len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn pool_size(&self) -> usize {
        self.matrix.ncols()
    }

    /// `Psi s` for a sparse `s` given by `(index, value)` pairs.
    fn combine<'a>(
        &self,
        entries: impl IntoIterator<Item = (usize, &'a Complex64)>,
    ) -> DVector<Complex64> {
        let mut out = DVector::zeros(self.preamble_len());
        for (l, &c) in entries {
            out.axpy(c, &self.matrix.column(l), Complex64::new(1.0, 0.0));
        }
        out
    }
}

/// Draws an `N x L` pool with i.i.d. CSCG entries and normalizes the columns.
pub fn gen_pool(n: usize, l: usize, seed: u64) -> Result<PreamblePool> {
    if n < 1 || l < n {
        return Err(Error::param(
            "pool_size",
            format!("need L >= N >= 1, got N = {n}, L = {l}"),
        ));
    }
    let mut rng = seeded(seed);
    let m = DMatrix::from_fn(n, l, |_, _| cscg(1.0, &mut rng));
    PreamblePool::from_matrix(m)
}

/// One sample of `CN(0, var)`.
pub(crate) fn cscg<R: Rng + ?Sized>(var: f64, rng: &mut R) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

pub(crate) fn add_noise<R: Rng + ?Sized>(v: &mut DVector<Complex64>, var: f64, rng: &mut R) {
    for x in v.iter_mut() {
        *x += cscg(var, rng);
    }
}

/// Active support with per-user coefficients `sqrt(P_k) h_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseScene {
    support: Vec<usize>,
    coefficients: Vec<Complex64>,
    noise_var: f64,
    /// `data_symbols[m][k]` is symbol `m` of active user `k`.
    data_symbols: Option<Vec<Vec<Complex64>>>,
}

impl SparseScene {
    pub fn new(support: Vec<usize>, coefficients: Vec<Complex64>, noise_var: f64) -> Result<Self> {
        if support.len() != coefficients.len() {
            return Err(Error::param(
                "coefficients",
                "one coefficient per support index",
            ));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::param("support", "indices must be distinct"));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::param("noise_var", "must be positive and finite"));
        }
        Ok(Self {
            support,
            coefficients,
            noise_var,
            data_symbols: None,
        })
    }

    /// Scene where every active user is received at the same linear SNR
    /// (`|coefficient|^2 / noise_var`), as under ideal power control.
    pub fn power_controlled(support: Vec<usize>, snr: f64, noise_var: f64) -> Result<Self> {
        let amp = Complex64::new((snr * noise_var).sqrt(), 0.0);
        let coefficients = vec![amp; support.len()];
        Self::new(support, coefficients, noise_var)
    }

    pub fn with_data_symbols(mut self, symbols: Vec<Vec<Complex64>>) -> Result<Self> {
        if symbols.iter().any(|row| row.len() != self.support.len()) {
            return Err(Error::param(
                "data_symbols",
                "each row needs one symbol per active user",
            ));
        }
        self.data_symbols = Some(symbols);
        Ok(self)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn active_count(&self) -> usize {
        self.support.len()
    }

    pub fn data_symbols(&self) -> Option<&[Vec<Complex64>]> {
        self.data_symbols.as_deref()
    }

    pub(crate) fn check_against(&self, pool: &PreamblePool) -> Result<()> {
        let l = pool.pool_size();
        match self.support.iter().find(|&&i| i >= l) {
            Some(&index) => Err(Error::IndexOutOfRange {
                index,
                pool_size: l,
            }),
            None => Ok(()),
        }
    }

    /// Noise-free Stage-1 observation `Psi s`.
    pub fn mean_observation(&self, pool: &PreamblePool) -> Result<DVector<Complex64>> {
        self.check_against(pool)?;
        Ok(pool.combine(self.support.iter().copied().zip(&self.coefficients)))
    }
}

/// Stage-1 observation `y = Psi s + n`.
pub fn received_stage1<R: Rng + ?Sized>(
    pool: &PreamblePool,
    scene: &SparseScene,
    rng: &mut R,
) -> Result<DVector<Complex64>> {
    let mut y = scene.mean_observation(pool)?;
    add_noise(&mut y, scene.noise_var, rng);
    Ok(y)
}

/// Stage-2 observations `r_m = Psi s_m + n_m`, `m = 0..M`, where `s_m` has
/// the support of `s` and entries `sqrt(P_k) h_k d_{k,m}`.
pub fn received_stage2<R: Rng + ?Sized>(
    pool: &PreamblePool,
    scene: &SparseScene,
    rng: &mut R,
) -> Result<Vec<DVector<Complex64>>> {
    scene.check_against(pool)?;
    let symbols = scene
        .data_symbols
        .as_ref()
        .ok_or(Error::MissingDataSymbols)?;
    Ok(symbols
        .iter()
        .map(|row| {
            let weighted: Vec<Complex64> = scene
                .coefficients
                .iter()
                .zip(row)
                .map(|(c, d)| c * d)
                .collect();
            let mut r = pool.combine(scene.support.iter().copied().zip(&weighted));
            add_noise(&mut r, scene.noise_var, rng);
            r
        })
        .collect())
}

/// `[y; r_0; ...; r_{M-1}]`, of length `(1 + M) N`.
pub fn stack_observations(
    y: &DVector<Complex64>,
    stage2: &[DVector<Complex64>],
) -> DVector<Complex64> {
    let parts = std::iter::once(y).chain(stage2);
    DVector::from_iterator(
        y.len() * (1 + stage2.len()),
        parts.flat_map(|v| v.iter().copied()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn pool_columns_are_unit_norm() {
        for (n, l, seed) in [(1, 1, 0), (4, 8, 1), (31, 310, 2), (8, 24, 3)] {
            let pool = gen_pool(n, l, seed).unwrap();
            assert_eq!(pool.matrix().shape(), (n, l));
            let gram = pool.matrix().adjoint() * pool.matrix();
            for i in 0..l {
                assert!((gram[(i, i)].re - 1.0).abs() < 1e-12);
                assert!(gram[(i, i)].im.abs() < 1e-12);
            }
        }
        let single = gen_pool(1, 1, 9).unwrap();
        assert!((single.matrix()[(0, 0)].norm() - 1.0).abs() < 1e-15);
        assert_eq!(gen_pool(4, 8, 5).unwrap(), gen_pool(4, 8, 5).unwrap());
        assert!(gen_pool(5, 4, 0).is_err());
        assert!(gen_pool(0, 4, 0).is_err());
    }

    #[test]
    fn scene_validation() {
        assert!(SparseScene::new(vec![1, 1], vec![c(1.0), c(1.0)], 1.0).is_err());
        assert!(SparseScene::new(vec![1], vec![], 1.0).is_err());
        assert!(SparseScene::new(vec![1], vec![c(1.0)], 0.0).is_err());
        let s = SparseScene::new(vec![9], vec![c(1.0)], 1.0).unwrap();
        let pool = gen_pool(4, 8, 0).unwrap();
        assert!(matches!(
            received_stage1(&pool, &s, &mut seeded(0)),
            Err(Error::IndexOutOfRange {
                index: 9,
                pool_size: 8
            })
        ));
    }

    #[test]
    fn stage1_noiseless_single_user() {
        let pool = gen_pool(4, 8, 11).unwrap();
        let s = SparseScene::new(vec![5], vec![c(1.0)], 1e-300).unwrap();
        let y = received_stage1(&pool, &s, &mut seeded(1)).unwrap();
        let diff = (&y - pool.matrix().column(5)).norm();
        assert!(diff < 1e-140);
    }

    #[test]
    fn stage1_empty_scene_is_noise() {
        let pool = gen_pool(4, 8, 11).unwrap();
        let s = SparseScene::new(vec![], vec![], 2.0).unwrap();
        let y = received_stage1(&pool, &s, &mut seeded(2)).unwrap();
        let mut expect = DVector::zeros(4);
        add_noise(&mut expect, 2.0, &mut seeded(2));
        assert_eq!(y, expect);
    }

    #[test]
    fn stage1_is_deterministic() {
        let pool = gen_pool(8, 16, 3).unwrap();
        let s = SparseScene::power_controlled(vec![1, 4, 9], 10.0, 0.5).unwrap();
        let a = received_stage1(&pool, &s, &mut seeded(77)).unwrap();
        let b = received_stage1(&pool, &s, &mut seeded(77)).unwrap();
        let bytes = |v: &DVector<Complex64>| -> Vec<u8> {
            v.iter()
                .flat_map(|z| [z.re.to_le_bytes(), z.im.to_le_bytes()].concat())
                .collect()
        };
        assert_eq!(bytes(&a), bytes(&b));
    }

    #[test]
    fn stage2_requires_symbols_and_stacks() {
        let pool = gen_pool(4, 8, 4).unwrap();
        let s = SparseScene::new(vec![0, 3], vec![c(1.0), c(-0.5)], 1e-300).unwrap();
        assert_eq!(
            received_stage2(&pool, &s, &mut seeded(0)),
            Err(Error::MissingDataSymbols)
        );
        let m = 6;
        let s = s.with_data_symbols(vec![vec![c(1.0), c(1.0)]; m]).unwrap();
        let r = received_stage2(&pool, &s, &mut seeded(0)).unwrap();
        assert_eq!(r.len(), m);
        let mean = s.mean_observation(&pool).unwrap();
        for rm in &r {
            assert!((rm - &mean).norm() < 1e-140);
        }
        let y = received_stage1(&pool, &s, &mut seeded(1)).unwrap();
        assert_eq!(stack_observations(&y, &r).len(), (1 + m) * 4);

        let empty = SparseScene::new(vec![], vec![], 1.0)
            .unwrap()
            .with_data_symbols(vec![vec![]; 3])
            .unwrap();
        let r = received_stage2(&pool, &empty, &mut seeded(3)).unwrap();
        assert!(r.iter().all(|v| v.norm() > 0.0));
        assert!(SparseScene::new(vec![1], vec![c(1.0)], 1.0)
            .unwrap()
            .with_data_symbols(vec![vec![c(1.0), c(1.0)]])
            .is_err());
    }

    #[test]
    fn noise_has_requested_variance() {
        let mut rng = seeded(12);
        let n = 200_000;
        let var = 3.0;
        let (mut re2, mut im2) = (0.0, 0.0);
        for _ in 0..n {
            let z = cscg(var, &mut rng);
            re2 += z.re * z.re;
            im2 += z.im * z.im;
        }
        assert!((re2 / n as f64 - 1.5).abs() < 0.03);
        assert!((im2 / n as f64 - 1.5).abs() < 0.03);
    }
}
