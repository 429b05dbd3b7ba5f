//! A small dense-tableau simplex used by the dominance programs.
//!
//! Maximizes c.x subject to a.x <= b and x >= 0. Every right-hand side must
//! be nonnegative, so the all-slack basis is feasible and no first phase is
//! needed. Pivots follow Bland's rule, which rules out cycling without
//! perturbation tricks; a generous pivot budget backstops numerical drift.

use crate::error::{Error, Result};

const TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Solution {
    pub objective: f64,
    pub x: Vec<f64>,
}

/// Maximize `c.x` over `rows[i].x <= b[i]`, `x >= 0`. Panics in debug builds
/// if some `b[i] < 0`; callers arrange their constraints so b is nonnegative.
pub fn maximize(c: &[f64], rows: &[Vec<f64>], b: &[f64]) -> Result<Solution> {
    let m = rows.len();
    let n = c.len();
    debug_assert_eq!(b.len(), m);
    debug_assert!(b.iter().all(|&x| x >= 0.0), "slack basis needs b >= 0");

    let width = n + m + 1; // structural vars, slacks, rhs
    let mut t = vec![0.0f64; (m + 1) * width];
    for (i, row) in rows.iter().enumerate() {
        debug_assert_eq!(row.len(), n);
        t[i * width..i * width + n].copy_from_slice(row);
        t[i * width + n + i] = 1.0;
        t[i * width + width - 1] = b[i];
    }
    for (j, &cj) in c.iter().enumerate() {
        t[m * width + j] = -cj;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_pivots = 10_000 + 100 * (n + m);
    for _ in 0..max_pivots {
        // entering variable: lowest index with a negative reduced cost
        let Some(enter) = (0..n + m).find(|&j| t[m * width + j] < -TOL) else {
            let mut x = vec![0.0; n];
            for (i, &bi) in basis.iter().enumerate() {
                if bi < n {
                    x[bi] = t[i * width + width - 1];
                }
            }
            return Ok(Solution { objective: t[m * width + width - 1], x });
        };
        // ratio test, ties resolved toward the lowest basis index
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i * width + enter];
            if a <= TOL {
                continue;
            }
            let ratio = t[i * width + width - 1] / a;
            let better = match leave {
                None => true,
                Some((r, best)) => {
                    ratio < best - TOL || (ratio < best + TOL && basis[i] < basis[r])
                }
            };
            if better {
                leave = Some((i, ratio));
            }
        }
        let Some((r, _)) = leave else {
            return Err(Error::LpUnbounded);
        };
        pivot(&mut t, width, m, r, enter);
        basis[r] = enter;
    }
    Err(Error::LpStalled(max_pivots))
}

fn pivot(t: &mut [f64], width: usize, m: usize, r: usize, c: usize) {
    let p = t[r * width + c];
    for v in &mut t[r * width..(r + 1) * width] {
        *v /= p;
    }
    t[r * width + c] = 1.0;
    for i in 0..=m {
        if i == r {
            continue;
        }
        let f = t[i * width + c];
        if f == 0.0 {
            continue;
        }
        for j in 0..width {
            t[i * width + j] -= f * t[r * width + j];
        }
        t[i * width + c] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn box_with_budget() {
        // max x + y st x <= 2, y <= 3, x + y <= 4
        let s = maximize(
            &[1.0, 1.0],
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            &[2.0, 3.0, 4.0],
        )
        .unwrap();
        assert_relative_eq!(s.objective, 4.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[0] + s.x[1], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn weighted_corner() {
        // max 3x + 2y st x + y <= 4, x + 3y <= 6
        let s = maximize(
            &[3.0, 2.0],
            &[vec![1.0, 1.0], vec![1.0, 3.0]],
            &[4.0, 6.0],
        )
        .unwrap();
        assert_relative_eq!(s.objective, 12.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_vertex() {
        // max x st x - y <= 0, x <= 1: the first pivot is degenerate
        let s = maximize(&[1.0, 0.0], &[vec![1.0, -1.0], vec![1.0, 0.0]], &[0.0, 1.0]).unwrap();
        assert_relative_eq!(s.objective, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unbounded_ray() {
        let err = maximize(&[1.0, 0.0], &[vec![-1.0, 1.0]], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::LpUnbounded));
    }

    #[test]
    fn origin_is_optimal() {
        let s = maximize(&[-1.0, -2.0], &[vec![1.0, 1.0]], &[5.0]).unwrap();
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.x, vec![0.0, 0.0]);
    }

    // Random bounded LPs: the result must be feasible and at least as good as
    // any sampled feasible point.
    #[test]
    fn random_lps_feasible_and_dominant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(1..=6);
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // strictly positive coefficients keep the region bounded
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.gen_range(0.1..1.0)).collect())
                .collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..3.0)).collect();
            let s = maximize(&c, &rows, &b).unwrap();

            for (row, &bi) in rows.iter().zip(&b) {
                let lhs: f64 = row.iter().zip(&s.x).map(|(a, x)| a * x).sum();
                assert!(lhs <= bi + 1e-7, "infeasible: {lhs} > {bi}");
            }
            assert!(s.x.iter().all(|&x| x >= -1e-12));
            let cx: f64 = c.iter().zip(&s.x).map(|(ci, x)| ci * x).sum();
            assert_relative_eq!(s.objective, cx, epsilon = 1e-7);

            for _ in 0..40 {
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                let worst = rows
                    .iter()
                    .zip(&b)
                    .map(|(row, &bi)| {
                        let lhs: f64 = row.iter().zip(&y).map(|(a, x)| a * x).sum();
                        if lhs > 0.0 { bi / lhs } else { f64::INFINITY }
                    })
                    .fold(f64::INFINITY, f64::min);
                let scale = worst.min(1.0);
                let cy: f64 = c.iter().zip(&y).map(|(ci, x)| ci * x * scale).sum();
                assert!(s.objective >= cy - 1e-7, "beaten by sampled point");
            }
        }
    }
}
