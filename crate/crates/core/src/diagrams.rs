//! Convolution diagrams of the two-point function: the triangle family and
//! T_p, the displacement quantities W_p(k) and H_p(k), and the V/W ladder.
//!
//! Everything is evaluated on the torus by FFT (or by symmetry-cell
//! transforms). Error bars come from re-evaluating each diagram on the
//! leave-one-batch-out tables.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::field::{Field, Layout};
use crate::fourier::Momentum;
use crate::lattice::BoxSpec;
use crate::percolation::estimators::circ;
use crate::percolation::{SiteTable, TwoPointTable};
use crate::rng::RngStream;
use crate::stats::{jackknife_stderr, Estimate, Margin};

/// Evaluate `f` on the full data (`None`) and with each batch deleted.
pub fn replicate_eval<T: Send>(n_reps: usize, f: impl Fn(Option<usize>) -> Result<T> + Sync) -> Result<(T, Vec<T>)> {
    let full = f(None)?;
    let reps: Result<Vec<T>> = (0..n_reps).into_par_iter().map(|b| f(Some(b))).collect();
    Ok((full, reps?))
}

/// Mean field of a table, or its leave-one-batch-out version.
pub fn table_field(table: &SiteTable, drop: Option<usize>) -> Field {
    match drop {
        None => table.mean(),
        Some(b) => {
            let sums = table.counts.without(b);
            let sizes = table.layout.cell_sizes();
            let n = sums.n.max(1) as f64;
            let values = sums.sum.iter().zip(&sizes).map(|(&s, &size)| table.scale * s as f64 / (n * size)).collect();
            Field { layout: table.layout.clone(), values }
        }
    }
}

/// Number of leave-one-out replicates a table supports.
pub fn replicate_count(table: &SiteTable) -> usize {
    let b = table.counts.batches.len();
    if b < 2 {
        0
    } else {
        b
    }
}

fn jack(full: f64, reps: &[f64], n: u64) -> Estimate {
    Estimate::jackknife(full, reps, n)
}

/// A supremum and where it is attained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Located {
    pub estimate: Estimate,
    pub at: Vec<i64>,
}

/// Point values of the triangle family for one table.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleValues {
    pub triangle: (f64, Vec<i64>),
    pub circ: (f64, Vec<i64>),
    pub bullet: (f64, Vec<i64>),
    pub bullet_origin: f64,
    pub bullet_circ: (f64, Vec<i64>),
    pub bullet_bullet_circ: (f64, Vec<i64>),
    pub t_p: f64,
}

/// p^2 (tau * tau * tau)(x) for every x.
pub fn open_triangle(tau: &Field, p: f64) -> Result<Field> {
    let s = tau.spectrum()?;
    s.map(|t| p * p * t * t * t).inverse()
}

pub fn triangle_values(tau: &Field, p: f64) -> Result<TriangleValues> {
    let s = tau.spectrum()?;
    let tri = s.map(|t| p * p * t * t * t).inverse()?;
    let tri_circ = s.map(|t| p * p * (1.0 + t) * t * t).inverse()?;
    let bul = s.map(|t| p * (1.0 + p * t) * t * t).inverse()?;
    let bul_circ = s.map(|t| p * (1.0 + p * t) * (1.0 + t) * t).inverse()?;
    let bbc = s.map(|t| (1.0 + p * t) * (1.0 + p * t) * (1.0 + t)).inverse()?;
    let triangle = tri.sup(false);
    let bullet_circ = bul_circ.sup(true);
    let bullet_bullet_circ = bbc.sup(false);
    let t_p = (1.0 + triangle.0) * bullet_circ.0 + triangle.0 * bullet_bullet_circ.0;
    Ok(TriangleValues {
        triangle,
        circ: tri_circ.sup(false),
        bullet: bul.sup(true),
        bullet_origin: bul.at_origin(),
        bullet_circ,
        bullet_bullet_circ,
        t_p,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramReport {
    pub p: f64,
    pub n_samples: u64,
    /// sup over x of the open triangle
    pub triangle: Located,
    pub circ: Located,
    /// sup over x != 0
    pub bullet: Located,
    pub bullet_origin: Estimate,
    /// sup over x != 0
    pub bullet_circ: Located,
    pub bullet_bullet_circ: Located,
    pub t_p: Estimate,
}

pub fn triangle_family(table: &TwoPointTable) -> Result<DiagramReport> {
    let p = table.p;
    let (full, reps) =
        replicate_eval(replicate_count(&table.tau), |b| triangle_values(&table_field(&table.tau, b), p))?;
    let n = table.n_samples();
    let loc = |pick: fn(&TriangleValues) -> &(f64, Vec<i64>)| {
        let r: Vec<f64> = reps.iter().map(|v| pick(v).0).collect();
        Located { estimate: jack(pick(&full).0, &r, n), at: pick(&full).1.clone() }
    };
    let scalar = |pick: fn(&TriangleValues) -> f64| {
        let r: Vec<f64> = reps.iter().map(pick).collect();
        jack(pick(&full), &r, n)
    };
    Ok(DiagramReport {
        p,
        n_samples: n,
        triangle: loc(|v| &v.triangle),
        circ: loc(|v| &v.circ),
        bullet: loc(|v| &v.bullet),
        bullet_origin: scalar(|v| v.bullet_origin),
        bullet_circ: loc(|v| &v.bullet_circ),
        bullet_bullet_circ: loc(|v| &v.bullet_bullet_circ),
        t_p: scalar(|v| v.t_p),
    })
}

/// p (tau_k * tau°)(x) as a field.
pub fn w_field(tau: &Field, p: f64, k: &Momentum) -> Result<Field> {
    let tk = tau.displaced(k.components())?;
    Ok(tk.convolve(&circ(tau))?.scale(p))
}

/// W_p(k) = max_x p (tau_k * tau°)(x) with its maximiser.
pub fn w_value(tau: &Field, p: f64, k: &Momentum) -> Result<(f64, Vec<i64>)> {
    if k.is_zero() || p == 0.0 {
        return Ok((0.0, vec![0; tau.layout.dim()]));
    }
    Ok(w_field(tau, p, k)?.sup(false))
}

pub fn w_displacement(table: &TwoPointTable, k: &Momentum) -> Result<Located> {
    let p = table.p;
    let (full, reps) = replicate_eval(replicate_count(&table.tau), |b| w_value(&table_field(&table.tau, b), p, k))?;
    let r: Vec<f64> = reps.iter().map(|v| v.0).collect();
    Ok(Located { estimate: jack(full.0, &r, table.n_samples()), at: full.1 })
}

fn dense_torus(tau: &Field) -> Result<BoxSpec> {
    match &tau.layout {
        Layout::Dense(s) if s.is_torus() => Ok(s.clone()),
        _ => Err(LabError::Unsupported("H_p is evaluated on dense torus tables only".into())),
    }
}

/// H_p(b1, b2; k) =
/// p^5 sum_{t,w,z,u,v} tau(z) tau(t-u) tau(t-z) tau_k(u-z) tau(t-w) tau(w-b1) tau(v-w) tau(v+b2-u).
///
/// With u = t + e fixed by its offset e, the z-sum and the (w, v)-sums are
/// plain convolutions in t, so each e costs two FFT convolutions.
pub fn h_value(tau: &Field, p: f64, k: &Momentum, b1: &[i64], b2: &[i64]) -> Result<f64> {
    let spec = dense_torus(tau)?;
    if p == 0.0 || k.is_zero() {
        return Ok(0.0);
    }
    let n = spec.n_sites();
    let tk = tau.displaced(k.components())?;
    let reflect = |f: &Field| -> Field {
        let values = (0..n).map(|i| f.values[spec.reflect(i) as usize]).collect();
        Field { layout: f.layout.clone(), values }
    };
    // A(y) = sum_s tau(s) tau(s + y)
    let a2 = reflect(tau).convolve(tau)?;
    let b1i = spec.index_of(b1)?;
    let b2i = spec.index_of(b2)?;
    let neg_b1 = spec.reflect(b1i);
    let terms: Result<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|e| {
            let te = tau.values[spec.reflect(e) as usize];
            if te == 0.0 {
                return Ok(0.0);
            }
            let neg_e = spec.reflect(e);
            // B_e(y) = tau(y) tau_k(y + e)
            let be: Vec<f64> = (0..n).map(|y| tau.values[y as usize] * tk.values[spec.translate(y, e) as usize]).collect();
            let ze = tau.convolve(&Field { layout: tau.layout.clone(), values: be })?;
            // C_e(s) = tau(s) A(b2 - e - s)
            let shift = spec.translate(b2i, neg_e);
            let ce: Vec<f64> =
                (0..n).map(|s| tau.values[s as usize] * a2.values[spec.translate(shift, spec.reflect(s)) as usize]).collect();
            let we = Field { layout: tau.layout.clone(), values: ce }.convolve(tau)?;
            let inner: f64 = (0..n).map(|t| ze.values[t as usize] * we.values[spec.translate(t, neg_b1) as usize]).sum();
            Ok(te * inner)
        })
        .collect();
    Ok(p.powi(5) * terms?.iter().sum::<f64>())
}

/// Sampled (b1, b2) pairs for the sup in H_p(k): short axis and diagonal
/// points plus random nonzero points with |b|_1 <= 3.
pub fn h_candidates(dim: usize, n_random: usize, rng: &RngStream) -> Vec<(Vec<i64>, Vec<i64>)> {
    let unit = |axis: usize, len: i64| {
        let mut v = vec![0i64; dim];
        v[axis] = len;
        v
    };
    let mut base = vec![unit(0, 1), unit(0, -1), unit(0, 2), unit(0, 3)];
    if dim > 1 {
        base.push(unit(1, 1));
        let mut diag = unit(0, 1);
        diag[1] = 1;
        base.push(diag);
    }
    let mut out: Vec<(Vec<i64>, Vec<i64>)> =
        base.iter().flat_map(|a| base.iter().map(move |b| (a.clone(), b.clone()))).collect();
    let mut r = rng.chacha(0x4862);
    let mut random_point = || loop {
        let v: Vec<i64> = (0..dim).map(|_| r.random_range(-3i64..=3)).collect();
        let norm: i64 = v.iter().map(|c| c.abs()).sum();
        if norm > 0 && norm <= 3 {
            return v;
        }
    };
    for _ in 0..n_random {
        let a = random_point();
        let b = random_point();
        out.push((a, b));
    }
    out
}

/// max over candidate pairs of H_p(b1, b2; k); returns the value and the maximising pair.
pub fn h_sup(tau: &Field, p: f64, k: &Momentum, candidates: &[(Vec<i64>, Vec<i64>)]) -> Result<(f64, Vec<i64>, Vec<i64>)> {
    let mut best = (f64::NEG_INFINITY, vec![], vec![]);
    for (b1, b2) in candidates {
        if b1.iter().all(|&c| c == 0) || b2.iter().all(|&c| c == 0) {
            continue;
        }
        let v = h_value(tau, p, k, b1, b2)?;
        if v > best.0 {
            best = (v, b1.clone(), b2.clone());
        }
    }
    if best.1.is_empty() {
        return invalid("no admissible (b1, b2) pair");
    }
    Ok(best)
}

/// Suprema of the scaled ladder quantities for one (m, n).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub m: usize,
    pub n: usize,
    /// p^(m+n-1) sup_a V^(m,n)(a)
    pub v: Estimate,
    /// p^(m+n) sup_a W^(m,n)(a; k)
    pub w: Estimate,
    /// p^(m+n) sup_a W~^(m,n)(a; k)
    pub w_tilde: Estimate,
}

/// V^(m,n) = J^{*m} * tau^{*n} as a field (exact walk counts for the J part).
pub fn v_field(tau: &Field, m: usize, n: usize) -> Result<Field> {
    let walks = Field::walk_power(&tau.layout, m)?;
    if n == 0 {
        return Ok(walks);
    }
    let mut parts = vec![&walks];
    parts.extend(std::iter::repeat_n(tau, n));
    Field::convolve_all(&parts)
}

/// (tau_k * V^(m,n)) and (J_k * V^(m,n)).
pub fn w_ladder_fields(tau: &Field, m: usize, n: usize, k: &Momentum) -> Result<(Field, Field)> {
    let v = v_field(tau, m, n)?;
    let tk = tau.displaced(k.components())?;
    let jk = Field::adjacency(&tau.layout).displaced(k.components())?;
    Ok((tk.convolve(&v)?, jk.convolve(&v)?))
}

pub fn ladder_values(tau: &Field, p: f64, m: usize, n: usize, k: &Momentum) -> Result<[f64; 3]> {
    let v = v_field(tau, m, n)?;
    let (w, wt) = w_ladder_fields(tau, m, n, k)?;
    let e = (m + n) as i32;
    let pv = if e >= 1 { p.powi(e - 1) } else { 1.0 / p };
    Ok([pv * v.sup(false).0, p.powi(e) * w.sup(false).0, p.powi(e) * wt.sup(false).0])
}

pub fn ladder(table: &TwoPointTable, m: usize, n: usize, k: &Momentum) -> Result<LadderEntry> {
    let p = table.p;
    let (full, reps) =
        replicate_eval(replicate_count(&table.tau), |b| ladder_values(&table_field(&table.tau, b), p, m, n, k))?;
    let nn = table.n_samples();
    let est = |i: usize| jack(full[i], &reps.iter().map(|r| r[i]).collect::<Vec<_>>(), nn);
    Ok(LadderEntry { m, n, v: est(0), w: est(1), w_tilde: est(2) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementReport {
    pub k: Momentum,
    pub w: Located,
    /// H_p(k) with the maximising (b1, b2); dense tori only
    pub h: Option<(Estimate, Vec<i64>, Vec<i64>)>,
    pub ladder: Vec<LadderEntry>,
}

/// W_p(k), H_p(k) where the layout allows it, and the ladder for the given (m, n) pairs.
pub fn displacement_report(
    table: &TwoPointTable,
    k: &Momentum,
    h_pairs: Option<&[(Vec<i64>, Vec<i64>)]>,
    ladder_pairs: &[(usize, usize)],
) -> Result<DisplacementReport> {
    let p = table.p;
    let w = w_displacement(table, k)?;
    let h = match (h_pairs, &table.layout()) {
        (Some(pairs), Layout::Dense(s)) if s.is_torus() => {
            let (value, b1, b2) = h_sup(&table.mean(), p, k, pairs)?;
            // replicates are evaluated at the maximiser of the full data
            let reps: Result<Vec<f64>> = (0..replicate_count(&table.tau))
                .into_par_iter()
                .map(|b| h_value(&table_field(&table.tau, Some(b)), p, k, &b1, &b2))
                .collect();
            Some((jack(value, &reps?, table.n_samples()), b1, b2))
        }
        _ => None,
    };
    let ladder = ladder_pairs.iter().map(|&(m, n)| ladder(table, m, n, k)).collect::<Result<Vec<_>>>()?;
    Ok(DisplacementReport { k: k.clone(), w, h, ladder })
}

/// One term c p^power (J^{*walks} * tau^{*taus}) of the recursive bound on tau^{*n}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionTerm {
    pub walks: usize,
    pub taus: usize,
    pub power: usize,
    pub coefficient: f64,
}

/// Apply tau <= J + p J * tau to one tau factor at a time, starting from
/// tau^{*n}, until a term has at least m walk factors or no tau left.
pub fn extraction_terms(m: usize, n: usize) -> Vec<ExtractionTerm> {
    fn go(a: usize, j: usize, n: usize, m: usize, acc: &mut std::collections::BTreeMap<(usize, usize), f64>) {
        if j == 0 || a >= m {
            *acc.entry((a, j)).or_insert(0.0) += 1.0;
            return;
        }
        go(a + 1, j - 1, n, m, acc);
        go(a + 1, j, n, m, acc);
    }
    let mut acc = std::collections::BTreeMap::new();
    go(0, n, n, m, &mut acc);
    acc.into_iter()
        .map(|((a, j), c)| ExtractionTerm { walks: a, taus: j, power: a + j - n, coefficient: c })
        .collect()
}

/// Right side of the recursive bound as a field.
pub fn extraction_bound(tau: &Field, p: f64, terms: &[ExtractionTerm]) -> Result<Field> {
    let mut total = Field::zeros(&tau.layout);
    for t in terms {
        let v = v_field(tau, t.walks, t.taus)?;
        total = total.add(&v.scale(t.coefficient * p.powi(t.power as i32)))?;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    /// tau(x) <= J(x) + p (J * tau)(x), worst displacement
    pub pointwise: Margin,
    /// tau^{*n}(x) <= sum of extraction terms, worst displacement
    pub convolved: Margin,
    /// largest coefficient in the recursive bound
    pub constant: f64,
    pub terms: Vec<ExtractionTerm>,
}

/// Worst point of `rhs - lhs` judged by margin + sigmas * stderr.
pub fn pointwise_margin(
    full: &(Field, Field),
    reps: &[(Field, Field)],
    n: u64,
    sigmas: f64,
    skip_origin: bool,
) -> Margin {
    let (lhs, rhs) = full;
    let origin = lhs.layout.origin_cell();
    let mut best: Option<(f64, Margin)> = None;
    for c in 0..lhs.values.len() {
        if skip_origin && c == origin {
            continue;
        }
        let r: Vec<f64> = reps.iter().map(|(l, h)| h.values[c] - l.values[c]).collect();
        let se = jackknife_stderr(&r);
        let m = rhs.values[c] - lhs.values[c];
        let score = m + sigmas * se;
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, Margin::new(lhs.values[c], rhs.values[c], se, n).at(lhs.layout.representative(c))));
        }
    }
    best.map(|b| b.1).unwrap_or_else(|| Margin::new(0.0, 0.0, 0.0, n))
}

fn extraction_fields(tau: &Field, p: f64, m: usize, n: usize) -> Result<[(Field, Field); 2]> {
    let j = Field::adjacency(&tau.layout);
    let rhs = j.add(&j.convolve(tau)?.scale(p))?;
    let terms = extraction_terms(m, n);
    let lhs_n = v_field(tau, 0, n)?;
    let rhs_n = extraction_bound(tau, p, &terms)?;
    Ok([(tau.clone(), rhs), (lhs_n, rhs_n)])
}

pub fn tau_extraction_check_field(tau: &Field, p: f64, m: usize, n: usize) -> Result<ExtractionReport> {
    let [a, b] = extraction_fields(tau, p, m, n)?;
    let terms = extraction_terms(m, n);
    Ok(ExtractionReport {
        pointwise: pointwise_margin(&a, &[], 0, 0.0, false),
        convolved: pointwise_margin(&b, &[], 0, 0.0, false),
        constant: terms.iter().map(|t| t.coefficient).fold(0.0, f64::max),
        terms,
    })
}

pub fn tau_extraction_check(table: &TwoPointTable, m: usize, n: usize, sigmas: f64) -> Result<ExtractionReport> {
    if m == 0 || n == 0 {
        return invalid("need m, n >= 1");
    }
    let p = table.p;
    let (full, reps) =
        replicate_eval(replicate_count(&table.tau), |b| extraction_fields(&table_field(&table.tau, b), p, m, n))?;
    let nn = table.n_samples();
    let ra: Vec<(Field, Field)> = reps.iter().map(|r| r[0].clone()).collect();
    let rb: Vec<(Field, Field)> = reps.iter().map(|r| r[1].clone()).collect();
    let terms = extraction_terms(m, n);
    Ok(ExtractionReport {
        pointwise: pointwise_margin(&full[0], &ra, nn, sigmas, false),
        convolved: pointwise_margin(&full[1], &rb, nn, sigmas, false),
        constant: terms.iter().map(|t| t.coefficient).fold(0.0, f64::max),
        terms,
    })
}
