//! Acceptance run: one line per criterion, nonzero exit if any fails.
//!
//! Set LACELAB_CRITERIA=1,4,5 to run a subset.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use lacelab::bootstrap::{check_infrared, forbidden_region_scan};
use lacelab::expansion::{
    auto_layout, bounds_suite, check_displacement_bounds, check_subcritical, choose_side, diff_inequality_check,
    estimate_expansion, gamma_fit, independent_difference, oze_improvement, oze_residual, pc_expansion_reference,
    pc_scan, ExpansionEstimate, NamedMargin, PcEstimate, PcMethod,
};
use lacelab::experiment::{run, ExperimentConfig, ResultArchive};
use lacelab::field::{Field, Layout};
use lacelab::fourier::{cosine_split_check, green_delta_margin, rw_integral, GreenParams, Momentum, MomentumGrid};
use lacelab::lattice::BoxSpec;
use lacelab::percolation::enumerate::ExactTables;
use lacelab::percolation::estimators::estimate_two_point_on;
use lacelab::rng::RngStream;
use lacelab::walks::walk_convolution_power;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// tolerances and budgets, fixed here
const C1_SIGMAS: f64 = 4.0;
const C2_SIGMAS: f64 = 3.0;
const C5_SIGMAS: f64 = 3.0;
const C5_FFT_TOL: f64 = 1e-10;
const C5_ROUNDING: f64 = 1e-12;
const C5_MARGIN_FLOOR: f64 = -1e-12;
const C6_SIGMAS: f64 = 4.0;
const C7_SIGMAS: f64 = 3.0;
const C8_IR_ORDER: f64 = 10.0;
const C8_BOUND_SIGMAS: f64 = 4.0;
const C9_REL_TOL: f64 = 0.15;
const C10_SYNTH_TOL: f64 = 0.01;
const C10_MF_RANGE: (f64, f64) = (0.85, 1.15);
const C10_CONTROL_MIN: f64 = 1.2;

const DECAY_SIDES: &[u64] = &[5, 7, 9, 11, 13, 15, 17];
const PILOT_SAMPLES: u64 = 100_000;

fn rng(seed: u64) -> RngStream {
    RngStream::new(seed, 0)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Estimates several criteria need; each is computed once.
#[derive(Default)]
struct Shared {
    pc: HashMap<usize, PcEstimate>,
    expansion: HashMap<(usize, u64), (u64, ExpansionEstimate)>,
}

impl Shared {
    fn pc(&mut self, dim: usize) -> PcEstimate {
        self.pc
            .entry(dim)
            .or_insert_with(|| {
                let (samples, points) = if dim >= 7 { (20_000, 9) } else { (4_000, 9) };
                let r = pc_scan(dim, &PcMethod::default_for(dim), None, points, samples, &rng(900 + dim as u64))
                    .expect("critical scan");
                println!("    p_c scan d={dim}: {:.6} [{:.6}, {:.6}]", r.estimate.value, r.estimate.ci_low, r.estimate.ci_high);
                r.estimate
            })
            .clone()
    }

    /// Nested estimate at 2dp = tenths / 10 on the decay-rule torus.
    fn expansion(&mut self, dim: usize, tenths: u64) -> &(u64, ExpansionEstimate) {
        if !self.expansion.contains_key(&(dim, tenths)) {
            let p = tenths as f64 / 10.0 / (2 * dim) as f64;
            let pc = self.pc(dim);
            assert!(!check_subcritical(p, Some(&pc)).expect("p below the critical estimate"));
            let side = choose_side(dim, p, DECAY_SIDES, PILOT_SAMPLES, &rng(500 + dim as u64)).expect("decay rule").side;
            let layout = auto_layout(dim, side).unwrap();
            let t = Instant::now();
            let est = estimate_expansion(&layout, p, 1_000_000, &rng(1000 + 10 * dim as u64 + tenths)).unwrap();
            println!("    nested pass d={dim} 2dp=0.{tenths} L={side}: {:.0}s", t.elapsed().as_secs_f64());
            self.expansion.insert((dim, tenths), (side, est));
        }
        &self.expansion[&(dim, tenths)]
    }
}

fn close(a: f64, b: f64, se: f64, sigmas: f64) -> bool {
    (a - b).abs() <= sigmas * se
}

/// Binomial standard error at the exact value, for cells the sample never hit.
fn exact_se(v: f64, n: u64) -> f64 {
    (v.clamp(0.0, 1.0) * (1.0 - v.clamp(0.0, 1.0)) / n as f64).sqrt()
}

fn c1_exact_oracle(_: &mut Shared) -> Verdict {
    let spec = BoxSpec::free(2, 4).unwrap();
    let exact = ExactTables::enumerate(&spec).unwrap();
    let layout = Layout::dense(&spec);
    let n = 100_000;
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for (i, p) in [0.2, 0.5, 0.8].into_iter().enumerate() {
        let est = estimate_expansion(&layout, p, n, &rng(11 + i as u64)).unwrap();
        let tau = (est.two_point.tau.mean(), est.two_point.tau.stderr(), exact.tau(p));
        let pi0 = (est.pi0.mean(), est.pi0.stderr(), exact.pi0(p));
        for (name, (mean, se, ex)) in [("tau", tau), ("doubly", pi0)] {
            for c in 0..ex.values.len() {
                let s = se.values[c].max(exact_se(ex.values[c], n));
                let z = if s > 0.0 { (mean.values[c] - ex.values[c]).abs() / s } else { 0.0 };
                worst = worst.max(z);
                if !close(mean.values[c], ex.values[c], s, C1_SIGMAS) {
                    bad.push(format!("{name} p={p} x={:?}", ex.layout.representative(c)));
                }
            }
        }
        let ec = est.two_point.mean_cluster_size();
        let z = (ec.value - exact.mean_cluster_size(p)).abs() / ec.stderr;
        worst = worst.max(z);
        if z > C1_SIGMAS {
            bad.push(format!("E|C| p={p}"));
        }
    }
    verdict(bad.is_empty(), format!("worst deviation {worst:.2} stderr over 3 densities; failures {bad:?}"))
}

fn c2_line(_: &mut Shared) -> Verdict {
    let layout = auto_layout(1, 129).unwrap();
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for (i, p) in [0.3, 0.5, 0.7].into_iter().enumerate() {
        let t = estimate_two_point_on(&layout, p, 100_000, &rng(21 + i as u64)).unwrap();
        for x in 1..=5i64 {
            let e = t.at(&[x]);
            let want = p.powi(x as i32 - 1);
            let ok = if x == 1 { e.value == 1.0 } else { close(e.value, want, e.stderr, C2_SIGMAS) };
            if e.stderr > 0.0 {
                worst = worst.max((e.value - want).abs() / e.stderr);
            }
            if !ok {
                bad.push(format!("tau p={p} x={x}"));
            }
        }
        let chi = t.susceptibility();
        let want = 1.0 + 2.0 * p / (1.0 - p);
        worst = worst.max((chi.value - want).abs() / chi.stderr);
        if !close(chi.value, want, chi.stderr, C2_SIGMAS) {
            bad.push(format!("chi p={p}: {} vs {want}", chi.value));
        }
    }
    verdict(bad.is_empty(), format!("worst deviation {worst:.2} stderr; failures {bad:?}"))
}

fn c3_conventions(_: &mut Shared) -> Verdict {
    let mut bad = Vec::new();
    for spec in [BoxSpec::free(2, 4).unwrap(), BoxSpec::torus(2, 4).unwrap(), BoxSpec::torus(3, 2).unwrap()] {
        let exact = ExactTables::enumerate(&spec).unwrap();
        let layout = Layout::dense(&spec);
        for p in [0.1, 0.5, 0.9] {
            let (tau, doubly, pi0) = (exact.tau(p), exact.doubly(p), exact.pi0(p));
            let mc = estimate_expansion(&layout, p, 2_000, &rng(31)).unwrap();
            let (mt, ms) = (mc.two_point.tau.mean(), mc.two_point.tau.stderr());
            for c in 0..tau.values.len() {
                let x = tau.layout.representative(c);
                let norm: i64 = x.iter().map(|v| v.abs()).sum();
                let pins: Vec<(&str, f64, f64)> = match norm {
                    0 => vec![("tau", tau.values[c], 0.0), ("doubly", doubly.values[c], 0.0), ("pi0", pi0.values[c], 0.0)],
                    1 => vec![("tau", tau.values[c], 1.0), ("doubly", doubly.values[c], 1.0), ("pi0", pi0.values[c], 0.0)],
                    _ => vec![],
                };
                for (name, got, want) in pins {
                    if got != want {
                        bad.push(format!("{name}({x:?}) = {got} at p={p}"));
                    }
                }
                if norm <= 1 && (ms.values[c] != 0.0 || mt.values[c] != norm as f64) {
                    bad.push(format!("sampled tau({x:?}) = {} +- {}", mt.values[c], ms.values[c]));
                }
            }
        }
    }
    verdict(bad.is_empty(), format!("pins on three boxes at three densities; failures {bad:?}"))
}

fn c4_walks(_: &mut Shared) -> Verdict {
    let mut bad = Vec::new();
    for d in 1..=6usize {
        let origin = vec![0i64; d];
        if walk_convolution_power(2, &origin.clone().into(), d).unwrap() != 2 * d as u64 {
            bad.push(format!("J*2(0) d={d}"));
        }
        if walk_convolution_power(3, &origin.clone().into(), d).unwrap() != 0 {
            bad.push(format!("J*3(0) d={d}"));
        }
        // side 13 keeps walks of length <= 6 from wrapping
        let layout = auto_layout(d, 13).unwrap();
        for m in 1..=6usize {
            let f = Field::walk_power(&layout, m).unwrap();
            let total: f64 = (0..f.values.len()).map(|c| f.values[c] * layout.cell_size(c)).sum();
            if total != (2.0 * d as f64).powi(m as i32) {
                bad.push(format!("sum J*{m} d={d}: {total}"));
            }
            for c in 0..f.values.len() {
                let x = layout.representative(c);
                let norm: i64 = x.iter().map(|v| v.abs()).sum();
                let direct = walk_convolution_power(m, &x.clone().into(), d).unwrap() as f64;
                if f.values[c] != direct || ((m as i64 - norm) % 2 != 0 && direct != 0.0) {
                    bad.push(format!("J*{m}({x:?}) d={d}"));
                }
            }
        }
    }
    verdict(bad.is_empty(), format!("d = 1..6, m <= 6; failures {bad:?}"))
}

fn c5_fourier(_: &mut Shared) -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for d in [7usize, 9, 11] {
        let r = rw_integral(1, 0.0, GreenParams::new(1.0).unwrap(), d, 1_000_000, &rng(51 + d as u64)).unwrap();
        let ok = close(r.estimate.value, 1.0 / (2 * d) as f64, r.estimate.stderr, C5_SIGMAS);
        pass &= ok;
        notes.push(format!("d={d} integral {:.5}+-{:.5}", r.estimate.value, r.estimate.stderr));
    }
    // FFT against the direct double sum
    let spec = BoxSpec::torus(2, 8).unwrap();
    let layout = Layout::dense(&spec);
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut fft_err = 0.0f64;
    for _ in 0..20 {
        // the dense spectrum drops imaginary parts, so inputs are even
        let raw_a: Vec<f64> = (0..64).map(|_| r.random::<f64>()).collect();
        let raw_b: Vec<f64> = (0..64).map(|_| r.random::<f64>()).collect();
        let even = |raw: &[f64]| {
            Field::from_fn(&layout, |x| {
                let i = spec.index_of(x).unwrap() as usize;
                let neg: Vec<i64> = x.iter().map(|v| -v).collect();
                let j = spec.index_of(&neg).unwrap() as usize;
                raw[i] + raw[j]
            })
        };
        let (a, b) = (even(&raw_a), even(&raw_b));
        let conv = a.convolve(&b).unwrap();
        for c in 0..64 {
            let x = layout.representative(c);
            let mut direct = 0.0;
            for c2 in 0..64 {
                let y = layout.representative(c2);
                let diff: Vec<i64> = x.iter().zip(&y).map(|(u, v)| u - v).collect();
                direct += a.value_at(&y) * b.value_at(&diff);
            }
            fft_err = fft_err.max((conv.values[c] - direct).abs());
        }
    }
    pass &= fft_err <= C5_FFT_TOL;
    notes.push(format!("fft error {fft_err:.1e}"));
    // second difference of a sampled tau against its displaced transform
    let t = estimate_two_point_on(&layout, 0.4, 2_000, &rng(52)).unwrap().tau.mean();
    let mut delta_err = 0.0f64;
    for mk in 0..8i64 {
        for ml in 0..8i64 {
            let k = Momentum::on_grid(&[mk, 1], 8);
            let l = Momentum::on_grid(&[ml, 3], 8);
            let at = |q: &Momentum| t.fourier_at(q.components());
            let lhs = at(&l.add(&k)) + at(&l.sub(&k)) - 2.0 * at(&l);
            let rhs = -2.0 * t.displaced(k.components()).unwrap().fourier_at(l.components());
            delta_err = delta_err.max((lhs - rhs).abs() / (1.0 + t.sum()));
        }
    }
    pass &= delta_err <= C5_ROUNDING;
    notes.push(format!("second-difference error {delta_err:.1e}"));
    let mut worst_green = f64::INFINITY;
    let mut worst_split = f64::INFINITY;
    for _ in 0..10_000 {
        let d = r.random_range(1..=12usize);
        let lambda = r.random_range(0.0..1.0f64).max(1e-9);
        let mom = |r: &mut ChaCha8Rng| Momentum::new((0..d).map(|_| r.random_range(-PI..PI)).collect());
        let (k, l) = (mom(&mut r), mom(&mut r));
        worst_green = worst_green.min(green_delta_margin(GreenParams::new(lambda).unwrap(), &k, &l).unwrap());
        let parts: Vec<f64> = (0..r.random_range(1..=6)).map(|_| r.random_range(-PI..PI)).collect();
        worst_split = worst_split.min(cosine_split_check(parts.iter().sum(), &parts).unwrap());
    }
    pass &= worst_green >= C5_MARGIN_FLOOR && worst_split >= C5_MARGIN_FLOOR;
    notes.push(format!("min margins: Delta_k G {worst_green:.2e}, cosine split {worst_split:.2e}"));
    verdict(pass, notes.join("; "))
}

fn c6_inequalities(sh: &mut Shared) -> Verdict {
    let mut pass = true;
    let mut notes = Vec::new();
    for dim in [9usize, 11] {
        for tenths in [5u64, 8] {
            let (side, est) = sh.expansion(dim, tenths);
            let (side, est) = (*side, est.clone());
            let layout = est.two_point.layout().clone();
            let axis = MomentumGrid::Axis.momenta(&layout, &rng(0));
            let mut margins = bounds_suite(&est, &axis, &axis[1]).unwrap();
            for k in &axis[2..] {
                margins.push(NamedMargin::new("displacement-n1", check_displacement_bounds(&est, k, None).unwrap().n1));
            }
            let h = 0.05 * est.p;
            let diff = diff_inequality_check(&layout, est.p, h, 1_000_000, &rng(600 + dim as u64 + tenths)).unwrap();
            margins.push(NamedMargin::new("diff-tau-hat", diff.tau_hat));
            margins.push(NamedMargin::new("diff-chi", diff.chi));
            let failed: Vec<String> = margins
                .iter()
                .filter(|m| !m.margin.holds_within(C6_SIGMAS))
                .map(|m| format!("{} {:?}", m.name, m.margin.margin))
                .collect();
            let tightest = margins
                .iter()
                .filter(|m| m.margin.margin.stderr > 0.0)
                .map(|m| (m.margin.margin.value / m.margin.margin.stderr, m.name.as_str()))
                .fold((f64::INFINITY, ""), |a, b| if b.0 < a.0 { b } else { a });
            pass &= failed.is_empty();
            notes.push(format!(
                "d={dim} 2dp=0.{tenths} L={side}: {} margins, tightest {} at {:.1} stderr{}",
                margins.len(),
                tightest.1,
                tightest.0,
                if failed.is_empty() { String::new() } else { format!(", FAILED {failed:?}") }
            ));
        }
    }
    verdict(pass, notes.join("; "))
}

fn c7_oze(sh: &mut Shared) -> Verdict {
    let (_, e11) = sh.expansion(11, 8);
    let improvement = oze_improvement(e11).unwrap();
    let z1 = improvement.value / improvement.stderr;
    let abs_sum = |sh: &mut Shared, d: usize| {
        let (_, e) = sh.expansion(d, 8);
        let ks = vec![Momentum::zero(d)];
        oze_residual(e, 1, &ks).unwrap().abs_sum
    };
    let a9 = abs_sum(sh, 9);
    let a13 = abs_sum(sh, 13);
    let drop = independent_difference(&a9, &a13);
    let z2 = drop.value / drop.stderr;
    verdict(
        z1 >= C7_SIGMAS && z2 >= C7_SIGMAS,
        format!(
            "d=11: sum|R0| - sum|R1| = {:.4e} ({z1:.1} stderr); n=1 sums d=9 {:.4e}, d=13 {:.4e}, drop {z2:.1} stderr",
            improvement.value, a9.value, a13.value
        ),
    )
}

fn c8_infrared(sh: &mut Shared) -> Verdict {
    let mut notes = Vec::new();
    let mut fits = Vec::new();
    let mut tables = Vec::new();
    for dim in [9usize, 13] {
        let p = 0.9 * sh.pc(dim).value;
        let side = choose_side(dim, p, DECAY_SIDES, PILOT_SAMPLES, &rng(700 + dim as u64)).unwrap().side;
        let layout = auto_layout(dim, side).unwrap();
        let table = estimate_two_point_on(&layout, p, 200_000, &rng(710 + dim as u64)).unwrap();
        let ks = MomentumGrid::Full.indices(&layout, &rng(0));
        let r = check_infrared(&table, &ks, None).unwrap();
        notes.push(format!("d={dim} L={side} p={p:.5}: C = {:.3}+-{:.3} over {} momenta", r.c_fit.value, r.c_fit.stderr, ks.len()));
        fits.push(r.c_fit);
        tables.push((table, ks));
    }
    // one constant for both dimensions
    let c_single = fits.iter().map(|f| f.value + C8_BOUND_SIGMAS * f.stderr).fold(f64::MIN, f64::max);
    let mut ir_ok = true;
    for (table, ks) in &tables {
        ir_ok &= check_infrared(table, ks, Some(c_single)).unwrap().min_margin >= 0.0;
    }
    let ratio = fits[0].value.abs().max(fits[1].value.abs()) / fits[0].value.abs().min(fits[1].value.abs());
    let same_order = ratio <= C8_IR_ORDER;
    notes.push(format!("single C = {c_single:.3}, ratio {ratio:.2}"));

    // forbidden-region scan at d = 13
    let pc13 = sh.pc(13).value;
    let ps: Vec<f64> = (0..=9).map(|i| 0.1 * i as f64 * pc13).collect();
    let side = choose_side(13, ps[9], DECAY_SIDES, PILOT_SAMPLES, &rng(720)).unwrap().side;
    let layout = auto_layout(13, side).unwrap();
    let ks = MomentumGrid::Axis.indices(&layout, &rng(0));
    let scan = forbidden_region_scan(&layout, &ps, 100_000, &rng(721), &ks, &ks).unwrap();
    let f0 = scan.rows[0].f.value;
    let fmax = scan.rows.iter().map(|r| r.f.value).fold(0.0, f64::max);
    let scan_ok = f0 == 0.0 && scan.continuous && scan.bounded;
    notes.push(format!("d=13 scan L={side}: f(0) = {f0}, max f = {fmax:.3}, continuous {}, bounded {}", scan.continuous, scan.bounded));

    // low-dimensional control, expected to leave the region f <= 3
    let pc2 = sh.pc(2).value;
    let ps2: Vec<f64> = (1..=10).map(|i| 0.098 * i as f64 * pc2).collect();
    let layout2 = auto_layout(2, 32).unwrap();
    let ks2 = MomentumGrid::Axis.indices(&layout2, &rng(0));
    let control = forbidden_region_scan(&layout2, &ps2, 20_000, &rng(722), &ks2, &ks2).unwrap();
    let fmax2 = control.rows.iter().map(|r| r.f.value).fold(0.0, f64::max);
    let control_ok = !control.bounded;
    notes.push(format!("d=2 control up to 0.98 p_c: max f = {fmax2:.3}, violates f <= 3: {control_ok}"));
    verdict(ir_ok && same_order && scan_ok && control_ok, notes.join("; "))
}

fn c9_series(sh: &mut Shared) -> Verdict {
    let mut rel = Vec::new();
    let mut notes = Vec::new();
    for dim in [8usize, 10, 12] {
        let pc = sh.pc(dim);
        let reference = pc_expansion_reference(dim, 3).unwrap();
        let r = (pc.value - reference).abs() / reference;
        notes.push(format!("d={dim}: 2d p_c {:.5} vs series {:.5} ({:.2}%)", 2.0 * dim as f64 * pc.value, 2.0 * dim as f64 * reference, 100.0 * r));
        rel.push(r);
    }
    let pass = rel[1] <= C9_REL_TOL && rel[2] < rel[0] && rel[1] <= rel[0];
    verdict(pass, notes.join("; "))
}

fn c10_gamma(sh: &mut Shared) -> Verdict {
    let mut notes = Vec::new();
    let pc = 0.1;
    let ps: Vec<f64> = (0..8).map(|i| 0.05 + 0.006 * i as f64).collect();
    let chis: Vec<f64> = ps.iter().map(|p| 0.3 / (pc - p)).collect();
    let synth = gamma_fit(&ps, &chis, pc).unwrap();
    let synth_ok = (synth.slope + 1.0).abs() <= C10_SYNTH_TOL;
    notes.push(format!("synthetic slope {:.4}", synth.slope));

    let mc_gamma = |sh: &mut Shared, dim: usize, layout: Option<Layout>, samples: u64| {
        let pc = sh.pc(dim).value;
        let ps: Vec<f64> = (0..6).map(|i| (0.5 + 0.08 * i as f64) * pc).collect();
        let layout = layout.unwrap_or_else(|| {
            let side = choose_side(dim, ps[5], DECAY_SIDES, PILOT_SAMPLES, &rng(800 + dim as u64)).unwrap().side;
            auto_layout(dim, side).unwrap()
        });
        let chis: Vec<f64> = ps
            .iter()
            .map(|&p| estimate_two_point_on(&layout, p, samples, &rng(810 + dim as u64)).unwrap().susceptibility().value)
            .collect();
        (gamma_fit(&ps, &chis, pc).unwrap(), layout.side())
    };
    let (g11, side11) = mc_gamma(sh, 11, None, 100_000);
    let mf_ok = (C10_MF_RANGE.0..=C10_MF_RANGE.1).contains(&g11.gamma);
    notes.push(format!("d=11 L={side11}: gamma {:.3}+-{:.3}", g11.gamma, g11.slope_stderr));
    let (g2, _) = mc_gamma(sh, 2, Some(auto_layout(2, 64).unwrap()), 20_000);
    let control_ok = g2.gamma > C10_CONTROL_MIN;
    notes.push(format!("d=2 L=64: gamma {:.3}", g2.gamma));
    verdict(synth_ok && mf_ok && control_ok, notes.join("; "))
}

fn c11_determinism(_: &mut Shared) -> Verdict {
    let root = std::env::temp_dir().join(format!("lacelab-acceptance-{}", std::process::id()));
    let mut configs = Vec::new();
    let mut base = |cmd: &str, dim: usize, side: u64, p: f64, samples: u64| {
        let mut c = ExperimentConfig::new(cmd);
        (c.dim, c.side, c.p_grid, c.n_samples, c.seed) = (dim, side, vec![p], samples, 77);
        c.out = root.join(cmd);
        configs.push(c);
    };
    base("two-point", 3, 6, 0.2, 2_000);
    base("diagrams", 3, 6, 0.2, 1_000);
    base("rw-integrals", 7, 2, 0.5, 5_000);
    base("pi-coefficients", 5, 5, 0.05, 1_000);
    base("oze-check", 5, 5, 0.05, 1_000);
    base("bounds-check", 5, 5, 0.05, 1_000);
    base("bootstrap-scan", 5, 5, 0.05, 1_000);
    base("ir-bound", 5, 5, 0.05, 1_000);
    base("pc-scan", 2, 2, 0.5, 300);
    base("gamma-fit", 5, 7, 0.05, 500);
    base("oracle-enum", 2, 4, 0.5, 1);
    configs[8].options.insert("sizes".into(), "8,16".into());
    configs[8].options.insert("points".into(), "5".into());
    configs[9].options.insert("pc".into(), "0.1418".into());
    configs[9].options.insert("fractions".into(), "0.5:0.8:4".into());
    let mut bad = Vec::new();
    for c in &configs {
        let first = run(c).unwrap().archive;
        first.write(&c.out).unwrap();
        let manifest = ResultArchive::read(&c.out).unwrap().manifest.config;
        let bodies = |a: &ResultArchive| a.tables.iter().map(|t| t.to_csv().unwrap()).collect::<Vec<_>>();
        for threads in [4, 8] {
            let mut again = manifest.clone();
            again.threads = threads;
            if bodies(&run(&again).unwrap().archive) != bodies(&first) {
                bad.push(format!("{} at {threads} threads", c.command));
            }
        }
    }
    std::fs::remove_dir_all(&root).ok();
    verdict(bad.is_empty(), format!("{} subcommands at 1, 4, 8 threads; differing {bad:?}", configs.len()))
}

type Criterion = (u32, &'static str, Option<Duration>, fn(&mut Shared) -> Verdict);

fn main() {
    let mins = |m: u64| Some(Duration::from_secs(60 * m));
    let criteria: Vec<Criterion> = vec![
        (1, "exact oracle on the 4x4 box", mins(2), c1_exact_oracle),
        (2, "closed forms on the line", mins(1), c2_line),
        (3, "convention pins", None, c3_conventions),
        (4, "walk combinatorics", Some(Duration::from_secs(10)), c4_walks),
        (5, "Fourier and integral cross-checks", mins(3), c5_fourier),
        (6, "inequality suite", mins(60), c6_inequalities),
        (7, "expansion residual decay", mins(30), c7_oze),
        (8, "infrared bound and bootstrap scan", mins(60), c8_infrared),
        (9, "critical point against the series", mins(45), c9_series),
        (10, "susceptibility exponent", mins(45), c10_gamma),
        (11, "determinism across threads", None, c11_determinism),
    ];
    let only: Option<Vec<u32>> =
        std::env::var("LACELAB_CRITERIA").ok().map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let mut shared = Shared::default();
    let mut failed = Vec::new();
    for (n, name, budget, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(|| f(&mut shared)));
        let took = start.elapsed();
        let (mut pass, detail) = match out {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("panicked: {:?}", e.downcast_ref::<String>().map(String::as_str).or(e.downcast_ref::<&str>().copied()))),
        };
        // time spent filling the shared cache is charged to whichever criterion asked first
        let over = budget.is_some_and(|b| took > b);
        pass &= !over;
        println!(
            "criterion {n:>2} {}: {name} ({:.1}s{}) {detail}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            if over { ", over budget" } else { "" }
        );
        if !pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
