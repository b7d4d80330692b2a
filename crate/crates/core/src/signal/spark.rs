use itertools::Itertools;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Singular values at or below this fraction of the largest singular value
/// of the whole matrix count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Column limit for the exhaustive spark search.
pub const SPARK_MAX_COLUMNS: usize = 24;

/// Number of singular values of `m` above `RANK_TOLERANCE * scale`.
pub fn numerical_rank(m: &DMatrix<Complex64>, scale: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let threshold = RANK_TOLERANCE * scale;
    m.singular_values()
        .iter()
        .filter(|&&s| s > threshold)
        .count()
}

/// Smallest number of linearly dependent columns of `m`.
///
/// Subsets are tested in increasing size. When every subset is independent
/// (possible only if `L <= N`) the result is `L + 1`.
pub fn spark_bruteforce(m: &DMatrix<Complex64>) -> Result<usize> {
    let (n, l) = m.shape();
    if l > SPARK_MAX_COLUMNS {
        return Err(Error::SizeGuard {
            max: SPARK_MAX_COLUMNS,
            got: l,
        });
    }
    let scale = m.singular_values().max();
    if scale == 0.0 {
        return Ok(1);
    }
    for size in 1..=l {
        // Any N + 1 columns in N dimensions are dependent.
        if size > n {
            return Ok(size);
        }
        let dependent = (0..l).combinations(size).any(|cols| {
            let sub = m.select_columns(cols.iter());
            numerical_rank(&sub, scale) < size
        });
        if dependent {
            return Ok(size);
        }
    }
    Ok(l + 1)
}

/// Support identifiability from multiple measurement vectors:
/// `K < (spark - 1 + rank(S)) / 2`.
pub fn mmv_identifiable(k: usize, spark: usize, rank_s: usize) -> bool {
    if k == 0 {
        return true;
    }
    // Compare 2K against spark - 1 + rank_S in integers.
    2 * k + 1 < spark + rank_s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::gen_pool;

    fn complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
        m.map(|x| Complex64::new(x, 0.0))
    }

    #[test]
    fn duplicated_column_has_spark_two() {
        let mut m = gen_pool(4, 8, 3).unwrap().matrix().clone();
        let c = m.column(1).into_owned();
        m.set_column(6, &c);
        assert_eq!(spark_bruteforce(&m).unwrap(), 2);
    }

    #[test]
    fn zero_column_has_spark_one() {
        let mut m = gen_pool(4, 8, 3).unwrap().matrix().clone();
        m.column_mut(2).fill(Complex64::new(0.0, 0.0));
        assert_eq!(spark_bruteforce(&m).unwrap(), 1);
        assert_eq!(spark_bruteforce(&DMatrix::zeros(3, 4)).unwrap(), 1);
    }

    #[test]
    fn generic_pool_is_full_spark() {
        let pool = gen_pool(4, 8, 10).unwrap();
        assert_eq!(spark_bruteforce(pool.matrix()).unwrap(), 5);
        assert_eq!(numerical_rank(pool.matrix(), 1.0), 4);
    }

    #[test]
    fn structured_matrices() {
        // Three columns in a plane: e1, e2, e1 + e2.
        let m = complex(&DMatrix::from_row_slice(
            3,
            4,
            &[
                1.0, 0.0, 1.0, 0.0, //
                0.0, 1.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        ));
        assert_eq!(spark_bruteforce(&m).unwrap(), 3);
        let id = complex(&DMatrix::identity(3, 3));
        assert_eq!(spark_bruteforce(&id).unwrap(), 4);
    }

    #[test]
    fn size_guard() {
        let m = DMatrix::<Complex64>::zeros(2, 25);
        assert_eq!(
            spark_bruteforce(&m),
            Err(Error::SizeGuard { max: 24, got: 25 })
        );
    }

    #[test]
    fn identifiability_boundary() {
        assert!(mmv_identifiable(3, 5, 4));
        assert!(!mmv_identifiable(4, 5, 4));
        assert!(mmv_identifiable(0, 1, 0));
        // Single measurement vector with a full-spark pool: K < (N + 1) / 2.
        for n in 1..20usize {
            for k in 0..=n {
                let want = k == 0 || 2 * k < n + 1;
                assert_eq!(mmv_identifiable(k, n + 1, 1), want, "N={n} K={k}");
            }
        }
    }
}
