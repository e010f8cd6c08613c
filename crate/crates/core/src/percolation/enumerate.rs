//! Exhaustive enumeration of every configuration of a small box.
//!
//! For each site x we record, for every number k of occupied sites, how many
//! configurations have the event. The probability is then the exact
//! polynomial sum_k c_k p^k (1-p)^(N-k).

use rayon::prelude::*;

use super::config::SiteConfig;
use super::events::Dominators;
use crate::error::{invalid, Result};
use crate::field::{Field, Layout};
use crate::lattice::BoxSpec;

/// Largest box we enumerate.
pub const MAX_ENUM_SITES: u64 = 26;

#[derive(Clone, Debug)]
pub struct ExactTables {
    pub spec: BoxSpec,
    /// tau[site][k]
    pub tau: Vec<Vec<u64>>,
    /// P(0 <=> x) counts, neighbours included
    pub doubly: Vec<Vec<u64>>,
    /// sum of |C(0)| over configurations with k occupied sites
    pub cluster: Vec<u64>,
}

fn bernstein(coeffs: &[u64], n: usize, p: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, &c)| if c == 0 { 0.0 } else { c as f64 * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32) })
        .sum()
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Probability of an event from its per-weight configuration counts. Sums
/// over whichever of the event and its complement is rarer, so certain and
/// impossible events come out as exactly 1 and 0.
fn probability(coeffs: &[u64], n: usize, p: f64) -> f64 {
    let hits: u64 = coeffs.iter().sum();
    if hits <= (1u64 << n) / 2 {
        return bernstein(coeffs, n, p);
    }
    let misses: Vec<u64> = coeffs.iter().enumerate().map(|(k, &c)| binomial(n, k) - c).collect();
    1.0 - bernstein(&misses, n, p)
}

impl ExactTables {
    pub fn enumerate(spec: &BoxSpec) -> Result<Self> {
        let n = spec.n_sites();
        if n > MAX_ENUM_SITES {
            return invalid(format!("{n} sites is too many to enumerate"));
        }
        let ns = n as usize;
        let origin = spec.origin_index();
        let total = 1u64 << n;
        let chunks = 64u64.min(total);
        let parts: Vec<(Vec<Vec<u64>>, Vec<Vec<u64>>, Vec<u64>)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut tau = vec![vec![0u64; ns + 1]; ns];
                let mut doubly = vec![vec![0u64; ns + 1]; ns];
                let mut cluster = vec![0u64; ns + 1];
                for mask in (total * c / chunks)..(total * (c + 1) / chunks) {
                    let k = mask.count_ones() as usize;
                    let cfg = SiteConfig::from_mask(spec, mask).expect("small box");
                    let dom = Dominators::new(&cfg, origin);
                    cluster[k] += dom.cluster_len() as u64;
                    for id in 1..dom.cluster_len() as u32 {
                        let x = dom.sites[id as usize] as usize;
                        tau[x][k] += 1;
                        if dom.deepest_pivot_of_id(id).is_none() {
                            doubly[x][k] += 1;
                        }
                    }
                    for (x, top) in dom.boundary_entries() {
                        tau[x as usize][k] += 1;
                        if top == 0 {
                            doubly[x as usize][k] += 1;
                        }
                    }
                }
                (tau, doubly, cluster)
            })
            .collect();
        let mut tau = vec![vec![0u64; ns + 1]; ns];
        let mut doubly = vec![vec![0u64; ns + 1]; ns];
        let mut cluster = vec![0u64; ns + 1];
        for (t, d, c) in parts {
            for x in 0..ns {
                for k in 0..=ns {
                    tau[x][k] += t[x][k];
                    doubly[x][k] += d[x][k];
                }
            }
            for k in 0..=ns {
                cluster[k] += c[k];
            }
        }
        Ok(ExactTables { spec: spec.clone(), tau, doubly, cluster })
    }

    fn field(&self, coeffs: &[Vec<u64>], p: f64) -> Field {
        let n = self.spec.n_sites() as usize;
        Field { layout: Layout::dense(&self.spec), values: coeffs.iter().map(|c| probability(c, n, p)).collect() }
    }

    /// Exact tau_p(x) for every site.
    pub fn tau(&self, p: f64) -> Field {
        self.field(&self.tau, p)
    }

    /// Exact P(0 <=> x).
    pub fn doubly(&self, p: f64) -> Field {
        self.field(&self.doubly, p)
    }

    /// Exact zeroth coefficient P(0 <=> x) - J(x).
    pub fn pi0(&self, p: f64) -> Field {
        let d = self.doubly(p);
        d.sub(&Field::adjacency(&d.layout)).expect("same layout")
    }

    pub fn mean_cluster_size(&self, p: f64) -> f64 {
        bernstein(&self.cluster, self.spec.n_sites() as usize, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_is_geometric() {
        let spec = BoxSpec::free(1, 9).unwrap();
        let ex = ExactTables::enumerate(&spec).unwrap();
        let t = ex.tau(0.3);
        for x in 1..=4i64 {
            let want = 0.3f64.powi(x as i32 - 1);
            assert!((t.value_at(&[x]) - want).abs() < 1e-14);
            assert!((t.value_at(&[-x]) - want).abs() < 1e-14);
        }
        assert_eq!(t.value_at(&[0]), 0.0);
        // beyond the neighbours a line has a single path
        let d = ex.doubly(0.3);
        assert!((d.value_at(&[1]) - 1.0).abs() < 1e-12);
        assert_eq!(d.value_at(&[3]), 0.0);
    }

    #[test]
    fn square_conventions() {
        let spec = BoxSpec::free(2, 4).unwrap();
        let ex = ExactTables::enumerate(&spec).unwrap();
        for p in [0.0, 0.37, 1.0] {
            let t = ex.tau(p);
            assert_eq!(t.value_at(&[0, 0]), 0.0);
            assert!((t.value_at(&[1, 0]) - 1.0).abs() < 1e-14);
            let pi0 = ex.pi0(p);
            assert!(pi0.value_at(&[0, 1]).abs() < 1e-14);
            assert!(pi0.value_at(&[0, 0]).abs() < 1e-14);
        }
        // (1,1): the two corners alone give 3/4, detours add a little
        let t = ex.tau(0.5);
        assert!(t.value_at(&[1, 1]) > 0.75 && t.value_at(&[1, 1]) < 0.8);
        // both corners occupied already gives two disjoint paths
        assert!(ex.doubly(0.5).value_at(&[1, 1]) >= 0.25);
        assert_eq!(ex.mean_cluster_size(0.0), 1.0);
        assert_eq!(ex.mean_cluster_size(1.0), 16.0);
        // tau is nondecreasing in p
        let lo = ex.tau(0.3);
        let hi = ex.tau(0.6);
        assert!(lo.values.iter().zip(&hi.values).all(|(a, b)| a <= &(b + 1e-15)));
    }
}
