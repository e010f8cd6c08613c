//! The Ornstein-Zernike residual of the truncated expansion.
//!
//! tau = J + Pi_n + p (J + Pi_n) * tau + R_n holds exactly on the torus, so
//! the real-space residual is the remainder itself. For n = 0 the pass also
//! samples the remainder directly; for n = 1 that image is
//! r0 + Pi^(1) + p Pi^(1) * tau.

use serde::{Deserialize, Serialize};

use super::{transform_values, ExpansionEstimate, Snapshot};
use crate::diagrams::replicate_eval;
use crate::error::{invalid, Result};
use crate::field::Field;
use crate::fourier::Momentum;
use crate::stats::{jackknife_stderr, Estimate, Margin};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OzeReport {
    pub p: f64,
    pub n: usize,
    pub momenta: Vec<Momentum>,
    /// tau^(k) - a(k) / (1 - p a(k)) with a = J^ + Pi_n^
    pub fourier_residual: Vec<Estimate>,
    #[serde(skip)]
    pub realspace_residual: Option<Field>,
    /// sum_x |residual(x)|
    pub abs_sum: Estimate,
    /// sum_x residual(x)
    pub signed_sum: Estimate,
    /// sum_x [residual(x) - sampled remainder image(x)]; zero up to noise
    pub image_gap: Estimate,
    /// bound on sum_x |R_{p,n}(x)|
    pub remainder_bound: Estimate,
    /// n = 1 only: 0 <= sum_x R_{p,1}(x) <= p Pi^(1)^(0) tau^(0), as the upper margin
    pub bound_margin: Option<Margin>,
}

impl OzeReport {
    pub fn image_consistent(&self, sigmas: f64) -> bool {
        self.image_gap.value.abs() <= sigmas * self.image_gap.stderr + 1e-12
    }
}

fn residual_field(s: &Snapshot, p: f64, n: usize) -> Result<Field> {
    let j = Field::adjacency(&s.tau.layout);
    let direct = j.add(&s.partial_sum(n)?)?;
    s.tau.sub(&direct)?.sub(&direct.convolve(&s.tau)?.scale(p))
}

fn image_field(s: &Snapshot, p: f64, n: usize) -> Result<Field> {
    match n {
        0 => Ok(s.r0.clone()),
        _ => s.r0.add(&s.pi1)?.add(&s.pi1.convolve(&s.tau)?.scale(p)),
    }
}

struct OzeValues {
    abs_sum: f64,
    signed_sum: f64,
    gap: f64,
    fourier: Vec<f64>,
}

fn oze_values(s: &Snapshot, p: f64, n: usize, ks: &[Momentum]) -> Result<OzeValues> {
    let res = residual_field(s, p, n)?;
    let img = image_field(s, p, n)?;
    let a = Field::adjacency(&s.tau.layout).add(&s.partial_sum(n)?)?;
    let a_hat = transform_values(&a, ks)?;
    let t_hat = transform_values(&s.tau, ks)?;
    let fourier = a_hat.iter().zip(&t_hat).map(|(&a, &t)| t - a / (1.0 - p * a)).collect();
    Ok(OzeValues { abs_sum: res.abs_sum(), signed_sum: res.sum(), gap: res.sum() - img.sum(), fourier })
}

/// Residual of the order-n expansion (n in {0, 1}) at the momenta `ks`.
pub fn oze_residual(est: &ExpansionEstimate, n: usize, ks: &[Momentum]) -> Result<OzeReport> {
    if n > 1 {
        return invalid("only the first two coefficients are sampled");
    }
    let p = est.p;
    let (full, reps) = replicate_eval(est.replicates(), |b| oze_values(&est.snapshot(b), p, n, ks))?;
    let nn = est.n_samples();
    let jack = |f: fn(&OzeValues) -> f64| {
        let r: Vec<f64> = reps.iter().map(f).collect();
        Estimate::jackknife(f(&full), &r, nn)
    };
    let fourier_residual = (0..ks.len())
        .map(|i| {
            let r: Vec<f64> = reps.iter().map(|v| v.fourier[i]).collect();
            Estimate::jackknife(full.fourier[i], &r, nn)
        })
        .collect();
    let remainder_bound = est.remainder_bound(n)?;
    let bound_margin = if n == 1 {
        let (bf, br) = replicate_eval(est.replicates(), |b| {
            let s = est.snapshot(b);
            Ok((residual_field(&s, p, 1)?.sum(), p * s.pi1.sum() * s.tau.sum()))
        })?;
        let r: Vec<f64> = br.iter().map(|(l, h)| h - l).collect();
        Some(Margin::new(bf.0, bf.1, jackknife_stderr(&r), nn))
    } else {
        None
    };
    Ok(OzeReport {
        p,
        n,
        momenta: ks.to_vec(),
        fourier_residual,
        realspace_residual: Some(residual_field(&est.snapshot(None), p, n)?),
        abs_sum: jack(|v| v.abs_sum),
        signed_sum: jack(|v| v.signed_sum),
        image_gap: jack(|v| v.gap),
        remainder_bound,
        bound_margin,
    })
}

/// sum|R_0| - sum|R_1| on the same pass, with a joint error bar.
pub fn oze_improvement(est: &ExpansionEstimate) -> Result<Estimate> {
    let p = est.p;
    let (full, reps) = replicate_eval(est.replicates(), |b| {
        let s = est.snapshot(b);
        Ok(residual_field(&s, p, 0)?.abs_sum() - residual_field(&s, p, 1)?.abs_sum())
    })?;
    Ok(Estimate::jackknife(full, &reps, est.n_samples()))
}

/// a - b for estimates from independent runs.
pub fn independent_difference(a: &Estimate, b: &Estimate) -> Estimate {
    Estimate::new(a.value - b.value, a.stderr.hypot(b.stderr), a.n.min(b.n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Layout;
    use crate::lattice::BoxSpec;
    use crate::rng::RngStream;

    fn est(p: f64, n: u64) -> ExpansionEstimate {
        let spec = BoxSpec::torus(2, 7).unwrap();
        super::super::estimate_expansion(&Layout::dense(&spec), p, n, &RngStream::new(21, 0)).unwrap()
    }

    #[test]
    fn exact_at_zero_density() {
        let e = est(0.0, 100);
        let ks = vec![Momentum::zero(2), Momentum::on_grid(&[1, 2], 7)];
        for n in 0..2 {
            let r = oze_residual(&e, n, &ks).unwrap();
            assert_eq!(r.abs_sum.value, 0.0);
            assert!(r.fourier_residual.iter().all(|f| f.value.abs() < 1e-12));
        }
        assert!(oze_residual(&e, 2, &ks).is_err());
    }

    #[test]
    fn residual_matches_sampled_remainder() {
        let e = est(0.3, 4000);
        let ks = vec![Momentum::zero(2)];
        let r0 = oze_residual(&e, 0, &ks).unwrap();
        assert!(r0.image_consistent(4.0), "{:?}", r0.image_gap);
        assert!(r0.signed_sum.value < 0.0);
        assert!(r0.abs_sum.value <= r0.remainder_bound.value + 4.0 * r0.remainder_bound.stderr);
        let r1 = oze_residual(&e, 1, &ks).unwrap();
        assert!(r1.image_consistent(4.0), "{:?}", r1.image_gap);
        let m = r1.bound_margin.unwrap();
        assert!(m.holds_within(4.0), "{m:?}");
        assert!(m.lhs > -4.0 * r1.signed_sum.stderr);
        assert!(oze_improvement(&e).unwrap().value > 0.0);
    }
}
