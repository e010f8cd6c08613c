//! Exact nearest-neighbour walk counts J^{*m}(x).
//!
//! Counts factor over coordinates: an m-step walk is an interleaving of
//! one-dimensional walks, so
//!   J^{*m}(x) = sum_{n_1+..+n_d=m} m!/(n_1!..n_d!) prod_i w(n_i, x_i)
//! with w(n, a) = C(n, (n+a)/2). We accumulate that sum axis by axis in
//! big integers and convert at the end.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{LabError, Result};
use crate::lattice::{check_dim, LatticePoint};

fn binomials(n: usize) -> Vec<Vec<BigUint>> {
    let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(n + 1);
    for r in 0..=n {
        let mut row = vec![BigUint::one(); r + 1];
        for k in 1..r {
            row[k] = &rows[r - 1][k - 1] + &rows[r - 1][k];
        }
        rows.push(row);
    }
    rows
}

/// One-dimensional n-step walks from 0 ending at displacement `a`.
/// With `period = Some(L)` endpoints are taken modulo L.
fn line_walks(n: usize, a: i64, period: Option<u64>, binom: &[Vec<BigUint>]) -> BigUint {
    let n_i = n as i64;
    let hit = |target: i64| -> Option<usize> {
        if target.abs() > n_i || (n_i + target) % 2 != 0 {
            None
        } else {
            Some(((n_i + target) / 2) as usize)
        }
    };
    match period {
        None => hit(a).map(|k| binom[n][k].clone()).unwrap_or_else(BigUint::zero),
        Some(l) => {
            let l = l as i64;
            let mut total = BigUint::zero();
            let base = a.rem_euclid(l);
            // all targets a + jL with |a + jL| <= n
            let mut t = base - ((base + n_i) / l) * l;
            while t <= n_i {
                if let Some(k) = hit(t) {
                    total += &binom[n][k];
                }
                t += l;
            }
            total
        }
    }
}

fn walk_count_impl(m: usize, x: &[i64], period: Option<u64>) -> BigUint {
    let binom = binomials(m);
    // ways[r] = number of interleaved walks using r steps on the axes seen so far
    let mut ways = vec![BigUint::zero(); m + 1];
    ways[0] = BigUint::one();
    for &a in x {
        let line: Vec<BigUint> = (0..=m).map(|n| line_walks(n, a, period, &binom)).collect();
        let mut next = vec![BigUint::zero(); m + 1];
        for (r, slot) in next.iter_mut().enumerate() {
            let mut acc = BigUint::zero();
            for n in 0..=r {
                if ways[r - n].is_zero() || line[n].is_zero() {
                    continue;
                }
                acc += &binom[r][n] * &ways[r - n] * &line[n];
            }
            *slot = acc;
        }
        ways = next;
    }
    ways.swap_remove(m)
}

/// J^{*m}(x) as an arbitrary-precision integer. m = 0 gives the delta function.
pub fn walk_count_big(m: usize, x: &LatticePoint, dim: usize) -> Result<BigUint> {
    check_dim(dim, x.dim())?;
    Ok(walk_count_impl(m, x.coords(), None))
}

/// J^{*m}(x) in 64 bits; errors instead of wrapping when the count is too large.
pub fn walk_convolution_power(m: usize, x: &LatticePoint, dim: usize) -> Result<u64> {
    if m == 0 {
        return Err(LabError::InvalidArgument("walk length must be at least 1".into()));
    }
    walk_count_big(m, x, dim)?.to_u64().ok_or(LabError::Overflow("u64"))
}

/// Walk counts on the periodic box of side `side` (endpoints modulo the side).
pub fn torus_walk_count(m: usize, x: &[i64], side: u64) -> BigUint {
    walk_count_impl(m, x, Some(side))
}

/// Same as [`torus_walk_count`] but as a float, for building diagram fields.
pub fn torus_walk_count_f64(m: usize, x: &[i64], side: u64) -> f64 {
    torus_walk_count(m, x, side).to_f64().unwrap_or(f64::INFINITY)
}

/// Upper bound m!(2d)^{(m-|x|)/2} for admissible parity, zero otherwise.
pub fn walk_count_bound(m: usize, x: &LatticePoint) -> BigUint {
    let norm = x.one_norm() as usize;
    if norm > m || (m - norm) % 2 != 0 {
        return BigUint::zero();
    }
    let mut fact = BigUint::one();
    for i in 2..=m {
        fact *= BigUint::from(i);
    }
    fact * BigUint::from(2 * x.dim()).pow(((m - norm) / 2) as u32)
}

/// Plain recursive enumeration, exponential in m; test oracle only.
pub fn walk_count_brute(m: usize, x: &[i64]) -> u64 {
    fn go(left: usize, pos: &mut Vec<i64>, target: &[i64]) -> u64 {
        let dist: i64 = pos.iter().zip(target).map(|(a, b)| (a - b).abs()).sum();
        if dist as usize > left {
            return 0;
        }
        if left == 0 {
            return 1;
        }
        let mut total = 0;
        for axis in 0..pos.len() {
            for s in [-1, 1] {
                pos[axis] += s;
                total += go(left - 1, pos, target);
                pos[axis] -= s;
            }
        }
        total
    }
    go(m, &mut vec![0; x.len()], x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn small_counts() {
        assert_eq!(walk_convolution_power(2, &p(&[0, 0, 0, 0]), 4).unwrap(), 8);
        for d in 1..=6 {
            assert_eq!(walk_convolution_power(3, &LatticePoint::origin(d), d).unwrap(), 0);
        }
        assert_eq!(walk_convolution_power(4, &p(&[0, 0]), 2).unwrap(), 36);
        assert_eq!(walk_count_brute(4, &[0, 0]), 36);
    }

    #[test]
    fn matches_brute_force() {
        for d in 1..=3usize {
            let r = 3i64;
            let mut pts = vec![vec![]];
            for _ in 0..d {
                pts = pts
                    .into_iter()
                    .flat_map(|v: Vec<i64>| {
                        (-r..=r).map(move |c| {
                            let mut w = v.clone();
                            w.push(c);
                            w
                        })
                    })
                    .collect();
            }
            for m in 1..=6 {
                for x in &pts {
                    let exact = walk_convolution_power(m, &p(x), d).unwrap();
                    assert_eq!(exact, walk_count_brute(m, x), "m={m} x={x:?}");
                }
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        let x = LatticePoint::origin(10);
        assert!(matches!(walk_convolution_power(40, &x, 10), Err(LabError::Overflow(_))));
        assert!(walk_count_big(40, &x, 10).unwrap() > BigUint::from(u64::MAX));
    }

    #[test]
    fn torus_counts_sum_to_total() {
        // on the torus every walk ends somewhere in the box
        let side = 5u64;
        let m = 6;
        let mut total = BigUint::zero();
        for a in -2..=2i64 {
            for b in -2..=2i64 {
                total += torus_walk_count(m, &[a, b], side);
            }
        }
        assert_eq!(total, BigUint::from(4u64.pow(m as u32)));
        // far from wrapping the torus count equals the Z^d count
        assert_eq!(torus_walk_count(2, &[1, 1], side), BigUint::from(2u32));
        // side 3: walks of length 3 can wrap once around
        assert_eq!(torus_walk_count(3, &[0], 3), BigUint::from(2u32));
    }

    #[test]
    fn bound_dominates() {
        for m in 1..=7 {
            for x in [p(&[0, 0]), p(&[1, 0]), p(&[2, 1]), p(&[3, 0])] {
                assert!(walk_count_big(m, &x, 2).unwrap() <= walk_count_bound(m, &x));
            }
        }
    }
}
