//! One function per subcommand; each returns report tables plus flags.

use std::f64::consts::PI;
use std::time::Instant;

use super::{fmt_coords, fmt_f, ExperimentConfig, ReportTable, ResultArchive};
use crate::bootstrap::{check_infrared, forbidden_region_scan};
use crate::diagrams::{displacement_report, h_candidates, replicate_eval, triangle_family};
use crate::error::{invalid, LabError, Result};
use crate::expansion::{
    auto_layout, bounds_suite, check_subcritical, diff_inequality_check, estimate_expansion, gamma_fit, oze_improvement,
    oze_residual, pc_expansion_reference, pc_scan, PcEstimate, PcMethod,
};
use crate::field::{Field, Layout};
use crate::fourier::{rw_integral, GreenParams, Momentum};
use crate::lattice::{Boundary, BoxSpec};
use crate::percolation::enumerate::ExactTables;
use crate::percolation::estimators::estimate_two_point_on;
use crate::percolation::SiteTable;
use crate::rng::RngStream;
use crate::stats::Estimate;

/// Finished run: the archive and whether anything was flagged.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub archive: ResultArchive,
    pub flagged: bool,
    /// a scan found nothing to report; callers should exit nonzero
    pub inconclusive: bool,
}

struct Output {
    tables: Vec<ReportTable>,
    flags: Vec<String>,
}

/// Run a subcommand (anything but `merge`) on its own worker pool.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| LabError::InvalidArgument(format!("threads: {e}")))?;
    let start = Instant::now();
    let out = pool.install(|| dispatch(config))?;
    let flagged = !out.flags.is_empty();
    let inconclusive = out.flags.iter().any(|f| f.starts_with("inconclusive"));
    let archive = ResultArchive::new(config.clone(), out.tables, out.flags, start.elapsed().as_secs_f64());
    Ok(RunOutcome { archive, flagged, inconclusive })
}

fn dispatch(c: &ExperimentConfig) -> Result<Output> {
    match c.command.as_str() {
        "two-point" => two_point(c),
        "diagrams" => diagrams(c),
        "rw-integrals" => rw_integrals(c),
        "pi-coefficients" => pi_coefficients(c),
        "oze-check" => oze_check(c),
        "bounds-check" => bounds_check(c),
        "bootstrap-scan" => bootstrap_scan(c),
        "ir-bound" => ir_bound(c),
        "pc-scan" => pc_scan_cmd(c),
        "gamma-fit" => gamma_fit_cmd(c),
        "oracle-enum" => oracle_enum(c),
        "merge" => invalid("merge works on archives, not on a config"),
        other => invalid(format!("unknown subcommand '{other}'")),
    }
}

fn rng(c: &ExperimentConfig) -> RngStream {
    RngStream::new(c.seed, c.stream)
}

/// Symmetry-reduced torus for odd sides in d >= 5, dense box otherwise.
pub fn config_layout(c: &ExperimentConfig) -> Result<Layout> {
    match c.boundary {
        Boundary::Torus => auto_layout(c.dim, c.side),
        Boundary::Free => Ok(Layout::dense(&BoxSpec::free(c.dim, c.side)?)),
    }
}

fn k_indices(c: &ExperimentConfig, layout: &Layout) -> Vec<Vec<i64>> {
    c.k_grid.indices(layout, &rng(c))
}

fn momenta(c: &ExperimentConfig, layout: &Layout) -> Vec<Momentum> {
    k_indices(c, layout).iter().map(|m| Momentum::on_grid(m, layout.side())).collect()
}

/// Momentum along axis 0 given by the `k` option (default 2 pi / L).
fn axis_momentum(c: &ExperimentConfig) -> Result<Momentum> {
    let k: f64 = c.option("k", 2.0 * PI / c.side as f64)?;
    Ok(Momentum::axis(c.dim, 0, k))
}

fn pc_option(c: &ExperimentConfig) -> Result<Option<PcEstimate>> {
    Ok(c.options.get("pc").map(|_| c.option("pc", 0.0)).transpose()?.map(|v: f64| PcEstimate {
        value: v,
        ci_low: v,
        ci_high: v,
        method: "given".into(),
    }))
}

fn guard(c: &ExperimentConfig, p: f64, flags: &mut Vec<String>) -> Result<()> {
    if check_subcritical(p, pc_option(c)?.as_ref())? {
        flags.push(format!("p = {p} lies within 10% of the critical estimate"));
    }
    Ok(())
}

fn push_site_table(t: &mut ReportTable, p: f64, table: &SiteTable) {
    let mean = table.mean();
    let se = table.stderr();
    let n = table.n_samples();
    for cell in 0..mean.values.len() {
        let x = table.layout.representative(cell);
        t.push(vec![fmt_f(p), fmt_coords(&x)], Estimate::new(mean.values[cell], se.values[cell], n));
    }
}

fn push_exact_field(t: &mut ReportTable, p: f64, f: &Field) {
    for cell in 0..f.values.len() {
        t.push(vec![fmt_f(p), fmt_coords(&f.layout.representative(cell))], Estimate::exact(f.values[cell]));
    }
}

fn two_point(c: &ExperimentConfig) -> Result<Output> {
    let layout = config_layout(c)?;
    let mut tau = ReportTable::new("tau", &["p", "x"]);
    let mut summary = ReportTable::new("summary", &["p", "quantity"]);
    for &p in &c.p_grid {
        let t = estimate_two_point_on(&layout, p, c.n_samples, &rng(c))?;
        push_site_table(&mut tau, p, &t.tau);
        summary.push(vec![fmt_f(p), "chi".into()], t.susceptibility());
        summary.push(vec![fmt_f(p), "mean_cluster_size".into()], t.mean_cluster_size());
    }
    Ok(Output { tables: vec![tau, summary], flags: vec![] })
}

fn parse_pairs(s: &str) -> Result<Vec<(usize, usize)>> {
    if s.trim().is_empty() {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|pair| {
            let (a, b) = pair.split_once(':').ok_or_else(|| LabError::InvalidArgument(format!("bad pair '{pair}'")))?;
            let parse = |v: &str| v.trim().parse().map_err(|_| LabError::InvalidArgument(format!("bad pair '{pair}'")));
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

fn diagrams(c: &ExperimentConfig) -> Result<Output> {
    let layout = config_layout(c)?;
    let k = axis_momentum(c)?;
    let ladder: Vec<(usize, usize)> = parse_pairs(&c.option("ladder", "1:1,0:2".to_string())?)?;
    let with_h: bool = c.option("with-h", false)?;
    let mut t = ReportTable::new("diagrams", &["p", "quantity", "at"]);
    for &p in &c.p_grid {
        let table = estimate_two_point_on(&layout, p, c.n_samples, &rng(c))?;
        let r = triangle_family(&table)?;
        let row = |t: &mut ReportTable, name: &str, at: &[i64], e: Estimate| {
            t.push(vec![fmt_f(p), name.into(), fmt_coords(at)], e)
        };
        row(&mut t, "triangle", &r.triangle.at, r.triangle.estimate);
        row(&mut t, "triangle_circ", &r.circ.at, r.circ.estimate);
        row(&mut t, "triangle_bullet", &r.bullet.at, r.bullet.estimate);
        row(&mut t, "triangle_bullet_origin", &[], r.bullet_origin);
        row(&mut t, "triangle_bullet_circ", &r.bullet_circ.at, r.bullet_circ.estimate);
        row(&mut t, "triangle_bullet_bullet_circ", &r.bullet_bullet_circ.at, r.bullet_bullet_circ.estimate);
        row(&mut t, "t_p", &[], r.t_p);
        let cands = with_h.then(|| h_candidates(c.dim, 8, &rng(c)));
        let d = displacement_report(&table, &k, cands.as_deref(), &ladder)?;
        row(&mut t, "w", &d.w.at, d.w.estimate);
        if let Some((h, b1, b2)) = &d.h {
            row(&mut t, "h", &[b1.clone(), b2.clone()].concat(), *h);
        }
        for l in &d.ladder {
            let tag = format!("{}_{}", l.m, l.n);
            row(&mut t, &format!("v_{tag}"), &[], l.v);
            row(&mut t, &format!("w_{tag}"), &[], l.w);
            row(&mut t, &format!("w_tilde_{tag}"), &[], l.w_tilde);
        }
    }
    Ok(Output { tables: vec![t], flags: vec![] })
}

fn rw_integrals(c: &ExperimentConfig) -> Result<Output> {
    let lambda: f64 = c.option("lambda", 1.0)?;
    let m_max: u32 = c.option("m-max", 2)?;
    let ns: Vec<f64> = c
        .option("n-values", "0,1".to_string())?
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| LabError::InvalidArgument(format!("n-values: bad '{v}'"))))
        .collect::<Result<_>>()?;
    let g = GreenParams::new(lambda)?;
    let mut t = ReportTable::new("rw_integrals", &["dim", "m", "n", "lambda"]);
    let mut flags = vec![];
    for m in 0..=m_max {
        for &n in &ns {
            if (c.dim as f64) <= 2.0 * n {
                flags.push(format!("skipped m = {m}, n = {n}: needs d > 2n"));
                continue;
            }
            let r = rw_integral(m, n, g, c.dim, c.n_samples, &rng(c))?;
            if r.variance_suspect() {
                flags.push(format!("m = {m}, n = {n}: one sample carries {:.3} of the weight", r.max_share));
            }
            t.push(vec![c.dim.to_string(), m.to_string(), fmt_f(n), fmt_f(lambda)], r.estimate);
        }
    }
    Ok(Output { tables: vec![t], flags })
}

/// Per-cell jackknife of a field built from replicate snapshots.
fn push_field_jackknife(t: &mut ReportTable, p: f64, full: &Field, reps: &[Field], n: u64) {
    for cell in 0..full.values.len() {
        let r: Vec<f64> = reps.iter().map(|f| f.values[cell]).collect();
        let x = full.layout.representative(cell);
        t.push(vec![fmt_f(p), fmt_coords(&x)], Estimate::jackknife(full.values[cell], &r, n));
    }
}

fn pi_coefficients(c: &ExperimentConfig) -> Result<Output> {
    let layout = config_layout(c)?;
    let mut flags = vec![];
    let mut pi0 = ReportTable::new("pi0", &["p", "x"]);
    let mut pi1 = ReportTable::new("pi1", &["p", "x"]);
    let mut r0 = ReportTable::new("r0_image", &["p", "x"]);
    let mut partial = ReportTable::new("pi_partial_1", &["p", "x"]);
    for &p in &c.p_grid {
        guard(c, p, &mut flags)?;
        let est = estimate_expansion(&layout, p, c.n_samples, &rng(c))?;
        push_site_table(&mut pi0, p, &est.pi0);
        push_site_table(&mut pi1, p, &est.pi1);
        push_site_table(&mut r0, p, &est.r0);
        let (full, reps) = replicate_eval(est.replicates(), |b| est.snapshot(b).partial_sum(1))?;
        push_field_jackknife(&mut partial, p, &full, &reps, est.n_samples());
    }
    Ok(Output { tables: vec![pi0, pi1, r0, partial], flags })
}

fn oze_check(c: &ExperimentConfig) -> Result<Output> {
    let layout = config_layout(c)?;
    let ks = momenta(c, &layout);
    let mut flags = vec![];
    let mut sums = ReportTable::new("oze_sums", &["p", "n", "quantity"]);
    let mut fourier = ReportTable::new("oze_fourier", &["p", "n", "k"]);
    for &p in &c.p_grid {
        guard(c, p, &mut flags)?;
        let est = estimate_expansion(&layout, p, c.n_samples, &rng(c))?;
        for n in 0..2 {
            let r = oze_residual(&est, n, &ks)?;
            let key = |q: &str| vec![fmt_f(p), n.to_string(), q.to_string()];
            sums.push(key("abs_sum"), r.abs_sum);
            sums.push(key("signed_sum"), r.signed_sum);
            sums.push(key("image_gap"), r.image_gap);
            sums.push(key("remainder_bound"), r.remainder_bound);
            if let Some(m) = &r.bound_margin {
                sums.push(key("bound_margin"), m.margin);
            }
            if !r.image_consistent(4.0) {
                flags.push(format!("p = {p}, n = {n}: residual and sampled remainder differ beyond 4 stderr"));
            }
            for (k, e) in r.momenta.iter().zip(&r.fourier_residual) {
                let label = k.grid_index(layout.side()).map(|m| fmt_coords(&m)).unwrap_or_else(|| k.to_string());
                fourier.push(vec![fmt_f(p), n.to_string(), label], *e);
            }
        }
        sums.push(vec![fmt_f(p), "0-1".into(), "abs_sum_drop".into()], oze_improvement(&est)?);
    }
    Ok(Output { tables: vec![sums, fourier], flags })
}

fn bounds_check(c: &ExperimentConfig) -> Result<Output> {
    let layout = config_layout(c)?;
    let ks = momenta(c, &layout);
    let k_disp = Momentum::axis(c.dim, 0, c.option("k-disp", PI / 4.0)?);
    let mut flags = vec![];
    let mut t = ReportTable::new("bounds", &["p", "check", "part"]);
    for &p in &c.p_grid {
        guard(c, p, &mut flags)?;
        let est = estimate_expansion(&layout, p, c.n_samples, &rng(c))?;
        let mut margins = bounds_suite(&est, &ks, &k_disp)?;
        let h: f64 = c.option("h", (0.1 * p).max(1e-3))?;
        if p + h <= 1.0 {
            let diff = diff_inequality_check(&layout, p, h, c.n_samples, &rng(c))?;
            margins.push(crate::expansion::NamedMargin::new("diff-tau-hat", diff.tau_hat));
            margins.push(crate::expansion::NamedMargin::new("diff-chi", diff.chi));
        }
        for m in &margins {
            let key = |part: &str| vec![fmt_f(p), m.name.clone(), part.to_string()];
            t.push(key("lhs"), Estimate::new(m.margin.lhs, 0.0, m.margin.margin.n));
            t.push(key("rhs"), Estimate::new(m.margin.rhs, 0.0, m.margin.margin.n));
            t.push(key("margin"), m.margin.margin);
            if !m.holds() {
                flags.push(format!("p = {p}: {} violated beyond 4 stderr ({:?})", m.name, m.margin.margin));
            }
        }
    }
    Ok(Output { tables: vec![t], flags })
}

fn bootstrap_scan(c: &ExperimentConfig) -> Result<Output> {
    let layout = config_layout(c)?;
    let ks = k_indices(c, &layout);
    let ls = match c.options.get("l-grid") {
        Some(g) => g.parse::<crate::fourier::MomentumGrid>()?.indices(&layout, &rng(c)),
        None => ks.clone(),
    };
    let scan = forbidden_region_scan(&layout, &c.p_grid, c.n_samples, &rng(c), &ks, &ls)?;
    let mut t = ReportTable::new("bootstrap", &["p", "quantity"]);
    for r in &scan.rows {
        let key = |q: &str| vec![fmt_f(r.p), q.to_string()];
        t.push(key("f1"), Estimate::exact(r.f1));
        t.push(key("f2"), r.f2.estimate);
        t.push(key("f3"), r.f3.estimate);
        t.push(key("f"), r.f);
        t.push(key("chi"), r.chi);
        t.push(key("lambda"), r.lambda);
        t.push(key("f2_origin"), r.f2_origin);
        t.push(key("f2_refined"), Estimate::new(r.f2_refined, 0.0, r.f.n));
    }
    let mut checks = ReportTable::new("scan_checks", &["check"]);
    let flag = |b: bool| Estimate::exact(if b { 1.0 } else { 0.0 });
    checks.push(vec!["starts_small".into()], flag(scan.starts_small));
    checks.push(vec!["continuous".into()], flag(scan.continuous));
    checks.push(vec!["bounded_by_3".into()], flag(scan.bounded));
    Ok(Output { tables: vec![t, checks], flags: scan.flags })
}

fn ir_bound(c: &ExperimentConfig) -> Result<Output> {
    let layout = config_layout(c)?;
    let ks = k_indices(c, &layout);
    let reference: Option<f64> = c.options.get("c-ref").map(|_| c.option("c-ref", 0.0)).transpose()?;
    let mut flags = vec![];
    let mut fit = ReportTable::new("ir_fit", &["p", "quantity"]);
    let mut margins = ReportTable::new("ir_margins", &["p", "k"]);
    for &p in &c.p_grid {
        guard(c, p, &mut flags)?;
        let table = estimate_two_point_on(&layout, p, c.n_samples, &rng(c))?;
        let r = check_infrared(&table, &ks, reference)?;
        fit.push(vec![fmt_f(p), "c_fit".into()], r.c_fit);
        fit.push(vec![fmt_f(p), "c_reference".into()], Estimate::exact(r.c_reference));
        fit.push(vec![fmt_f(p), "min_margin".into()], Estimate::new(r.min_margin, 0.0, r.c_fit.n));
        for (m, v) in &r.margins {
            margins.push(vec![fmt_f(p), fmt_coords(m)], Estimate::new(*v, 0.0, r.c_fit.n));
        }
        if r.min_margin < 0.0 {
            flags.push(format!("p = {p}: infrared bound fails at the reference constant"));
        }
    }
    Ok(Output { tables: vec![fit, margins], flags })
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| LabError::InvalidArgument(format!("{what}: bad entry '{v}'"))))
        .collect()
}

fn pc_method(c: &ExperimentConfig) -> Result<PcMethod> {
    let default = PcMethod::default_for(c.dim);
    let kind = c.option("method", match default {
        PcMethod::Wrapping { .. } => "wrapping".to_string(),
        PcMethod::Growth { .. } => "growth".to_string(),
    })?;
    let sizes = c.options.get("sizes");
    match (kind.as_str(), sizes) {
        ("wrapping", Some(s)) => Ok(PcMethod::Wrapping { sides: parse_list(s, "sizes")? }),
        ("growth", Some(s)) => Ok(PcMethod::Growth { distances: parse_list(s, "sizes")? }),
        ("wrapping", None) => Ok(match default {
            m @ PcMethod::Wrapping { .. } => m,
            _ => PcMethod::Wrapping { sides: vec![6, 8, 12] },
        }),
        ("growth", None) => Ok(match default {
            m @ PcMethod::Growth { .. } => m,
            _ => PcMethod::Growth { distances: vec![8, 16, 32, 64] },
        }),
        (other, _) => invalid(format!("method: unknown '{other}' (wrapping|growth)")),
    }
}

fn pc_range(c: &ExperimentConfig) -> Result<Option<(f64, f64)>> {
    match c.options.get("range") {
        None => Ok(None),
        Some(r) => {
            let v: Vec<f64> = parse_list(&r.replace(':', ","), "range")?;
            if v.len() != 2 {
                return invalid("range: expected a:b");
            }
            Ok(Some((v[0], v[1])))
        }
    }
}

/// Run the configured critical-point scan.
pub fn scan_pc(c: &ExperimentConfig) -> Result<crate::expansion::PcScanReport> {
    let points: usize = c.option("points", 9)?;
    pc_scan(c.dim, &pc_method(c)?, pc_range(c)?, points, c.n_samples, &rng(c))
}

fn pc_scan_cmd(c: &ExperimentConfig) -> Result<Output> {
    let mut est = ReportTable::new("pc_estimate", &["dim", "quantity"]);
    let mut reference = ReportTable::new("pc_reference", &["dim", "order"]);
    for order in 1..=6 {
        reference.push(vec![c.dim.to_string(), order.to_string()], Estimate::exact(pc_expansion_reference(c.dim, order)?));
    }
    let r = match scan_pc(c) {
        Ok(r) => r,
        Err(LabError::Inconclusive(msg)) => {
            return Ok(Output { tables: vec![est, reference], flags: vec![format!("inconclusive: {msg}")] })
        }
        Err(e) => return Err(e),
    };
    let mut curves = ReportTable::new("pc_curves", &["size", "p"]);
    for cv in &r.curves {
        for (p, e) in &cv.points {
            curves.push(vec![cv.size.to_string(), fmt_f(*p)], *e);
        }
    }
    let mut crossings = ReportTable::new("pc_crossings", &["size_a", "size_b"]);
    for (a, b, e) in &r.crossings {
        crossings.push(vec![a.to_string(), b.to_string()], *e);
    }
    let key = |q: &str| vec![c.dim.to_string(), q.to_string()];
    let n = c.n_samples;
    est.push(key("pc"), Estimate::new(r.estimate.value, (r.estimate.ci_high - r.estimate.value) / 2.0, n));
    est.push(key("ci_low"), Estimate::new(r.estimate.ci_low, 0.0, n));
    est.push(key("ci_high"), Estimate::new(r.estimate.ci_high, 0.0, n));
    est.push(key("two_d_pc"), Estimate::new(2.0 * c.dim as f64 * r.estimate.value, 0.0, n));
    Ok(Output { tables: vec![est, reference, curves, crossings], flags: vec![] })
}

fn gamma_fit_cmd(c: &ExperimentConfig) -> Result<Output> {
    let layout = config_layout(c)?;
    let mut flags = vec![];
    let pc = match pc_option(c)? {
        Some(pc) => pc.value,
        None => match scan_pc(c) {
            Ok(r) => r.estimate.value,
            Err(LabError::Inconclusive(msg)) => {
                return Ok(Output { tables: vec![], flags: vec![format!("inconclusive: {msg}")] })
            }
            Err(e) => return Err(e),
        },
    };
    // without an explicit grid, use fractions of p_c
    let ps: Vec<f64> = if c.options.contains_key("fractions") {
        let f = super::parse_p_grid(&c.option("fractions", String::new())?)?;
        f.iter().map(|x| x * pc).collect()
    } else {
        c.p_grid.clone()
    };
    let mut chi_t = ReportTable::new("chi", &["p"]);
    let mut chis = Vec::new();
    for &p in &ps {
        if p >= pc {
            flags.push(format!("p = {p} is not below the critical estimate {pc}"));
            continue;
        }
        let t = estimate_two_point_on(&layout, p, c.n_samples, &rng(c))?;
        let chi = t.susceptibility();
        chi_t.push(vec![fmt_f(p)], chi);
        chis.push((p, chi.value));
    }
    let (p_used, chi_used): (Vec<f64>, Vec<f64>) = chis.into_iter().unzip();
    let fit = gamma_fit(&p_used, &chi_used, pc)?;
    let mut fit_t = ReportTable::new("gamma_fit", &["quantity"]);
    let n = c.n_samples;
    fit_t.push(vec!["pc".into()], Estimate::exact(pc));
    fit_t.push(vec!["slope".into()], Estimate::new(fit.slope, fit.slope_stderr, n));
    fit_t.push(vec!["gamma".into()], Estimate::new(fit.gamma, fit.slope_stderr, n));
    fit_t.push(vec!["residual_rms".into()], Estimate::new(fit.residual_rms, 0.0, n));
    Ok(Output { tables: vec![chi_t, fit_t], flags })
}

fn oracle_enum(c: &ExperimentConfig) -> Result<Output> {
    let spec = BoxSpec::new(c.dim, c.side, c.boundary)?;
    let exact = ExactTables::enumerate(&spec)?;
    let mut tau = ReportTable::new("tau", &["p", "x"]);
    let mut doubly = ReportTable::new("doubly", &["p", "x"]);
    let mut pi0 = ReportTable::new("pi0", &["p", "x"]);
    let mut summary = ReportTable::new("summary", &["p", "quantity"]);
    for &p in &c.p_grid {
        push_exact_field(&mut tau, p, &exact.tau(p));
        push_exact_field(&mut doubly, p, &exact.doubly(p));
        push_exact_field(&mut pi0, p, &exact.pi0(p));
        summary.push(vec![fmt_f(p), "mean_cluster_size".into()], Estimate::exact(exact.mean_cluster_size(p)));
    }
    Ok(Output { tables: vec![tau, doubly, pi0, summary], flags: vec![] })
}
