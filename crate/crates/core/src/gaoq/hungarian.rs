//! Rectangular linear assignment (Hungarian algorithm with potentials).
//!
//! Solves `b x g` problems with `b <= g` exactly in `O(b^2 g)`.

use super::QuantizeError;

/// Optimal injective map from rows to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `columns[r]` is the column assigned to row `r`.
    pub columns: Vec<usize>,
    /// Sum of the original matrix entries along the assignment, accumulated in row order.
    pub total: f64,
}

/// Solves the assignment problem on `matrix` (`b` rows of length `g`, `b <= g`).
///
/// With `maximize` the entries are similarities and the total is maximized, otherwise they are
/// costs and the total is minimized.
pub fn hungarian(matrix: &[Vec<f64>], maximize: bool) -> Result<Assignment, QuantizeError> {
    let rows = matrix.len();
    if rows == 0 {
        return Ok(Assignment {
            columns: Vec::new(),
            total: 0.0,
        });
    }
    let cols = matrix[0].len();
    if matrix.iter().any(|r| r.len() != cols) {
        return Err(QuantizeError::InvalidInput("ragged assignment matrix".into()));
    }
    if rows > cols {
        return Err(QuantizeError::InvalidInput(format!(
            "cannot assign {rows} rows injectively into {cols} columns"
        )));
    }
    if matrix.iter().flatten().any(|v| !v.is_finite()) {
        return Err(QuantizeError::InvalidInput("non-finite assignment entry".into()));
    }
    let cost = |r: usize, c: usize| if maximize { -matrix[r][c] } else { matrix[r][c] };

    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for r in 1..=rows {
        owner[0] = r;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for c in 1..=cols {
                if used[c] {
                    continue;
                }
                let reduced = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if reduced < minv[c] {
                    minv[c] = reduced;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=cols {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut columns = vec![usize::MAX; rows];
    for c in 1..=cols {
        if owner[c] > 0 {
            columns[owner[c] - 1] = c - 1;
        }
    }
    let total = columns.iter().enumerate().map(|(r, &c)| matrix[r][c]).sum();
    Ok(Assignment { columns, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Best total over all injective maps, by enumeration.
    fn brute_force(m: &[Vec<f64>], maximize: bool) -> f64 {
        fn go(m: &[Vec<f64>], r: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64, maximize: bool) {
            if r == m.len() {
                if (maximize && acc > *best) || (!maximize && acc < *best) {
                    *best = acc;
                }
                return;
            }
            for c in 0..used.len() {
                if !used[c] {
                    used[c] = true;
                    go(m, r + 1, used, acc + m[r][c], best, maximize);
                    used[c] = false;
                }
            }
        }
        let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
        go(m, 0, &mut vec![false; m[0].len()], 0.0, &mut best, maximize);
        best
    }

    fn assert_injective(a: &Assignment, cols: usize) {
        let mut seen = vec![false; cols];
        for &c in &a.columns {
            assert!(c < cols && !seen[c]);
            seen[c] = true;
        }
    }

    #[test]
    fn identity_similarity() {
        let m: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let a = hungarian(&m, true).unwrap();
        assert_eq!(a.columns, vec![0, 1, 2, 3, 4]);
        assert_eq!(a.total, 5.0);
    }

    #[test]
    fn rectangular_two_by_four() {
        let m = vec![vec![0.9, 0.1, 0.2, 0.3], vec![0.8, 0.7, 0.1, 0.2]];
        let a = hungarian(&m, true).unwrap();
        assert_eq!(a.columns, vec![0, 1]);
        assert!((a.total - 1.6).abs() < 1e-12);
    }

    #[test]
    fn all_small_integer_matrices_match_enumeration() {
        for n in 2..=3usize {
            let cells = n * n;
            for code in 0..3usize.pow(cells as u32) {
                let mut x = code;
                let m: Vec<Vec<f64>> = (0..n)
                    .map(|_| {
                        (0..n)
                            .map(|_| {
                                let v = (x % 3) as f64;
                                x /= 3;
                                v
                            })
                            .collect()
                    })
                    .collect();
                for maximize in [true, false] {
                    let a = hungarian(&m, maximize).unwrap();
                    assert_injective(&a, n);
                    assert_eq!(a.total, brute_force(&m, maximize), "{m:?} max={maximize}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(hungarian(&[vec![1.0], vec![2.0]], true).is_err());
        assert!(hungarian(&[vec![f64::NAN, 1.0]], true).is_err());
        assert!(hungarian(&[vec![1.0, 2.0], vec![1.0]], true).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force(b in 1usize..=6, extra in 0usize..=2, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let g = b + extra;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m: Vec<Vec<f64>> = (0..b).map(|_| (0..g).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let a = hungarian(&m, true).unwrap();
            assert_injective(&a, g);
            prop_assert!((a.total - brute_force(&m, true)).abs() <= 1e-12);
        }
    }
}
