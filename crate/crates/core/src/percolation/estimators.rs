//! Monte Carlo estimators built on one pass over sampled configurations.
//!
//! Every sample draws the origin's configuration from slot 0; nested
//! estimators draw their second configuration from slot 1 of the same
//! sample. Per-sample counts are binned into symmetry cells and folded into
//! integer batch sums, so tables are reproducible bit for bit.

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use super::config::{LazyConfig, Occupancy};
use super::events::{closure_of, modified_cluster_sites, search, Dominators, SiteSet};
use crate::error::{invalid, Result};
use crate::field::{Field, Layout};
use crate::lattice::BoxSpec;
use crate::rng::RngStream;
use crate::stats::{batch_count, batch_range, BatchedCells, CellSums, Estimate, ScalarSums};

/// Displacement-indexed Monte Carlo table.
#[derive(Clone, Debug)]
pub struct SiteTable {
    pub layout: Layout,
    pub counts: BatchedCells,
    /// multiplies every per-sample count (e.g. p for the one-step coefficient)
    pub scale: f64,
}

impl SiteTable {
    pub fn n_samples(&self) -> u64 {
        self.counts.n()
    }

    fn field_from(&self, sums: &CellSums) -> Field {
        let sizes = self.layout.cell_sizes();
        let n = sums.n.max(1) as f64;
        let values = sums.sum.iter().zip(&sizes).map(|(&s, &size)| self.scale * s as f64 / (n * size)).collect();
        Field { layout: self.layout.clone(), values }
    }

    pub fn mean(&self) -> Field {
        self.field_from(&self.counts.total())
    }

    /// Standard error of each per-site mean (from per-sample cell totals).
    pub fn stderr(&self) -> Field {
        let t = self.counts.total();
        let sizes = self.layout.cell_sizes();
        let values = (0..sizes.len())
            .map(|c| {
                let (_, se) = crate::stats::mean_stderr(t.n, t.sum[c] as f64, t.sumsq[c] as f64);
                self.scale * se / sizes[c]
            })
            .collect();
        Field { layout: self.layout.clone(), values }
    }

    /// Leave-one-batch-out mean fields.
    pub fn replicates(&self) -> Vec<Field> {
        if self.counts.batches.len() < 2 {
            return vec![];
        }
        (0..self.counts.batches.len()).map(|b| self.field_from(&self.counts.without(b))).collect()
    }

    pub fn at(&self, coords: &[i64]) -> Estimate {
        let n = self.n_samples();
        match self.layout.cell_of(coords) {
            None => Estimate::new(0.0, 0.0, n),
            Some(c) => {
                let t = self.counts.total();
                let size = self.layout.cell_size(c);
                let (m, se) = crate::stats::mean_stderr(t.n, t.sum[c] as f64, t.sumsq[c] as f64);
                Estimate::new(self.scale * m / size, self.scale * se / size, n)
            }
        }
    }

    /// Pool two tables built on the same layout from disjoint samples.
    pub fn merged(&self, other: &SiteTable) -> Result<SiteTable> {
        if self.layout != other.layout || self.scale != other.scale {
            return invalid("tables differ in layout or scale");
        }
        let mut batches = self.counts.batches.clone();
        batches.extend(other.counts.batches.iter().cloned());
        Ok(SiteTable { layout: self.layout.clone(), counts: BatchedCells { batches }, scale: self.scale })
    }
}

/// Batched scalar observable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchedScalar {
    pub batches: Vec<ScalarSums>,
}

impl BatchedScalar {
    pub fn total(&self) -> ScalarSums {
        let mut t = ScalarSums::default();
        for b in &self.batches {
            t.merge(b);
        }
        t
    }

    pub fn estimate(&self) -> Estimate {
        self.total().estimate()
    }

    pub fn replicates(&self) -> Vec<f64> {
        (0..self.batches.len())
            .map(|skip| {
                let mut t = ScalarSums::default();
                for (i, b) in self.batches.iter().enumerate() {
                    if i != skip {
                        t.merge(b);
                    }
                }
                t.estimate().value
            })
            .collect()
    }
}

/// Two-point function tau_p with its companion observables.
#[derive(Clone, Debug)]
pub struct TwoPointTable {
    pub p: f64,
    pub tau: SiteTable,
    /// |C(0)| per sample
    pub cluster_size: BatchedScalar,
    /// number of sites connected to the origin per sample (= sum_x of the indicator)
    pub connected_count: BatchedScalar,
}

impl TwoPointTable {
    pub fn layout(&self) -> &Layout {
        &self.tau.layout
    }

    pub fn n_samples(&self) -> u64 {
        self.tau.n_samples()
    }

    pub fn mean(&self) -> Field {
        self.tau.mean()
    }

    pub fn stderr(&self) -> Field {
        self.tau.stderr()
    }

    pub fn at(&self, coords: &[i64]) -> Estimate {
        self.tau.at(coords)
    }

    /// delta + tau
    pub fn circ(&self) -> Field {
        circ(&self.mean())
    }

    /// delta + p tau
    pub fn bullet(&self) -> Field {
        bullet(&self.mean(), self.p)
    }

    /// tau - J
    pub fn gamma(&self) -> Field {
        let t = self.mean();
        t.sub(&Field::adjacency(&t.layout)).expect("same layout")
    }

    /// [1 - cos(k.x)] tau(x)
    pub fn displaced(&self, k: &[f64]) -> Result<Field> {
        self.mean().displaced(k)
    }

    /// chi = 1 + p sum_x tau(x), error from the per-sample connected counts.
    pub fn susceptibility(&self) -> Estimate {
        let e = self.connected_count.estimate();
        Estimate::new(1.0 + self.p * e.value, self.p * e.stderr, e.n)
    }

    /// Direct estimate of E|C(0)|.
    pub fn mean_cluster_size(&self) -> Estimate {
        self.cluster_size.estimate()
    }
}

pub fn circ(tau: &Field) -> Field {
    tau.add(&Field::delta(&tau.layout)).expect("same layout")
}

pub fn bullet(tau: &Field, p: f64) -> Field {
    tau.scale(p).add(&Field::delta(&tau.layout)).expect("same layout")
}

/// Which observables a sampling pass collects.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Observables {
    /// P(0 <=> x) beyond neighbours, i.e. the zeroth coefficient
    pub doubly: bool,
    /// the one-step coefficient and the zeroth remainder image (needs a
    /// second configuration per sample)
    pub nested: bool,
}

#[derive(Clone, Debug)]
pub struct SamplingPlan {
    pub layout: Layout,
    pub p: f64,
    pub n_samples: u64,
    pub rng: RngStream,
    pub observables: Observables,
}

#[derive(Clone, Debug)]
pub struct PassResult {
    pub two_point: TwoPointTable,
    /// P(0 <=> x) - J(x)
    pub pi0: Option<SiteTable>,
    /// one-step coefficient, scale p
    pub pi1: Option<SiteTable>,
    /// Monte Carlo image of the zeroth remainder, scale -p
    pub r0: Option<SiteTable>,
}

#[derive(Default)]
struct SampleBins {
    tau: FxHashMap<usize, u64>,
    pi0: FxHashMap<usize, u64>,
    pi1: FxHashMap<usize, u64>,
    r0: FxHashMap<usize, u64>,
}

impl SampleBins {
    fn clear(&mut self) {
        self.tau.clear();
        self.pi0.clear();
        self.pi1.clear();
        self.r0.clear();
    }
}

struct BatchOut {
    tau: CellSums,
    pi0: CellSums,
    pi1: CellSums,
    r0: CellSums,
    cluster: ScalarSums,
    connected: ScalarSums,
}

struct CellMap {
    layout: Layout,
    spec: BoxSpec,
    coords: Vec<i64>,
}

impl CellMap {
    fn new(layout: &Layout) -> Self {
        let spec = layout.spec();
        CellMap { layout: layout.clone(), coords: vec![0; spec.dim], spec }
    }

    #[inline]
    fn cell(&mut self, site: u64) -> usize {
        match &self.layout {
            Layout::Dense(_) => site as usize,
            Layout::Orbit(o) => {
                self.spec.coords_into(site, &mut self.coords);
                o.cell_of(&self.coords)
            }
        }
    }
}

fn bump(map: &mut FxHashMap<usize, u64>, cell: usize) {
    *map.entry(cell).or_insert(0) += 1;
}

/// Run one pass of samples and collect the requested tables.
pub fn run_pass(plan: &SamplingPlan) -> Result<PassResult> {
    if !(0.0..=1.0).contains(&plan.p) {
        return invalid(format!("probability {} outside [0,1]", plan.p));
    }
    if plan.n_samples == 0 {
        return invalid("need at least one sample");
    }
    let nb = batch_count(plan.n_samples);
    let outs: Vec<Result<BatchOut>> =
        (0..nb).into_par_iter().map(|b| run_batch(plan, batch_range(plan.n_samples, nb, b))).collect();
    let outs: Vec<BatchOut> = outs.into_iter().collect::<Result<_>>()?;
    let table = |pick: fn(&BatchOut) -> &CellSums, scale: f64| SiteTable {
        layout: plan.layout.clone(),
        counts: BatchedCells { batches: outs.iter().map(|o| pick(o).clone()).collect() },
        scale,
    };
    let two_point = TwoPointTable {
        p: plan.p,
        tau: table(|o| &o.tau, 1.0),
        cluster_size: BatchedScalar { batches: outs.iter().map(|o| o.cluster.clone()).collect() },
        connected_count: BatchedScalar { batches: outs.iter().map(|o| o.connected.clone()).collect() },
    };
    let obs = plan.observables;
    Ok(PassResult {
        two_point,
        pi0: (obs.doubly || obs.nested).then(|| table(|o| &o.pi0, 1.0)),
        pi1: obs.nested.then(|| table(|o| &o.pi1, plan.p)),
        r0: obs.nested.then(|| table(|o| &o.r0, -plan.p)),
    })
}

fn run_batch(plan: &SamplingPlan, range: std::ops::Range<u64>) -> Result<BatchOut> {
    let cells = plan.layout.n_cells();
    let spec = plan.layout.spec();
    let origin = spec.origin_index();
    let mut out = BatchOut {
        tau: CellSums::new(cells),
        pi0: CellSums::new(cells),
        pi1: CellSums::new(cells),
        r0: CellSums::new(cells),
        cluster: ScalarSums::default(),
        connected: ScalarSums::default(),
    };
    let mut map = CellMap::new(&plan.layout);
    let mut bins = SampleBins::default();
    let obs = plan.observables;
    let neighbours: FxHashSet<u64> = spec.neighbors(origin).collect();
    for sample in range {
        bins.clear();
        let w0 = LazyConfig::new(&spec, plan.p, &plan.rng, sample, 0)?;
        if !obs.doubly && !obs.nested {
            let cluster = search(&w0, origin, None, |s| w0.is_occupied(s)).1;
            let reach = closure_of(&cluster, &spec);
            for &x in &reach {
                if x != origin {
                    let c = map.cell(x);
                    bump(&mut bins.tau, c);
                }
            }
            out.cluster.push(cluster.len() as u64);
            out.connected.push(reach.len() as u64 - 1);
        } else {
            let dom = Dominators::new(&w0, origin);
            let mut connected = 0u64;
            let mut doubly: Vec<u64> = Vec::new();
            for id in 1..dom.cluster_len() as u32 {
                let x = dom.sites[id as usize];
                connected += 1;
                let c = map.cell(x);
                bump(&mut bins.tau, c);
                if dom.deepest_pivot_of_id(id).is_none() {
                    doubly.push(x);
                    if !neighbours.contains(&x) {
                        bump(&mut bins.pi0, c);
                    }
                }
            }
            for (x, top) in dom.boundary_entries() {
                if x == origin {
                    continue;
                }
                connected += 1;
                let c = map.cell(x);
                bump(&mut bins.tau, c);
                if top == 0 {
                    doubly.push(x);
                    if !neighbours.contains(&x) {
                        bump(&mut bins.pi0, c);
                    }
                }
            }
            out.cluster.push(dom.cluster_len() as u64);
            out.connected.push(connected);
            if obs.nested {
                let w1 = LazyConfig::new(&spec, plan.p, &plan.rng, sample, 1)?;
                doubly.sort_unstable();
                let full_cluster = &dom.sites;
                for &u0 in &doubly {
                    nested_terms(&w0, &w1, origin, u0, full_cluster, &mut map, &mut bins);
                }
            }
        }
        out.tau.push_sample(&bins.tau);
        out.pi0.push_sample(&bins.pi0);
        out.pi1.push_sample(&bins.pi1);
        out.r0.push_sample(&bins.r0);
    }
    Ok(out)
}

/// For one doubly-connected u0, count the targets x with E'(u0, x; C0) and
/// with u0 -> x through C0 in the second configuration, where C0 is the
/// origin's cluster in the first configuration with u0 deleted.
fn nested_terms<O: Occupancy>(
    w0: &O,
    w1: &O,
    origin: u64,
    u0: u64,
    full_cluster: &[u64],
    map: &mut CellMap,
    bins: &mut SampleBins,
) {
    let spec = w0.spec();
    // deleting a vacant u0 leaves the cluster as it is
    let c0: Vec<u64> = if w0.is_occupied(u0) {
        modified_cluster_sites(w0, origin, u0)
    } else {
        full_cluster.to_vec()
    };
    let closed: SiteSet = closure_of(&c0, spec);
    let dom = Dominators::new(w1, u0);
    // targets reachable from u0 with every inner vertex outside <C0>
    let (_, off_inner) = search(w1, u0, None, |s| !closed.contains(&s) && w1.is_occupied(s));
    let off_reach: SiteSet = closure_of(&off_inner, spec);
    let through = |x: u64| closed.contains(&x) || !off_reach.contains(&x);
    let n = dom.cluster_len();
    // bad[v]: some inclusive dominator of v (other than u0) is through-connected
    let mut bad = vec![false; n];
    for v in 1..n {
        let site = dom.sites[v];
        bad[v] = through(site) || bad[dom.idom(v as u32) as usize];
    }
    for v in 1..n {
        let x = dom.sites[v];
        if through(x) {
            let c = map.cell(x);
            bump(&mut bins.r0, c);
            if !bad[dom.idom(v as u32) as usize] {
                bump(&mut bins.pi1, c);
            }
        }
    }
    for (x, top) in dom.boundary_entries() {
        if x == u0 || !through(x) {
            continue;
        }
        let c = map.cell(x);
        bump(&mut bins.r0, c);
        if !bad[top as usize] {
            bump(&mut bins.pi1, c);
        }
    }
}

/// Per-site counts of the one-step coefficient and the zeroth remainder
/// image for a single pair of configurations (origin's configuration first).
pub fn pair_counts<O: Occupancy>(w0: &O, w1: &O) -> (FxHashMap<usize, u64>, FxHashMap<usize, u64>) {
    let spec = w0.spec().clone();
    let origin = spec.origin_index();
    let dom = Dominators::new(w0, origin);
    let mut map = CellMap::new(&Layout::Dense(spec.clone()));
    let mut bins = SampleBins::default();
    let mut doubly: Vec<u64> = (1..dom.cluster_len())
        .filter(|&v| dom.deepest_pivot_of_id(v as u32).is_none())
        .map(|v| dom.sites[v])
        .chain(dom.boundary_entries().filter(|&(x, top)| top == 0 && x != origin).map(|(x, _)| x))
        .collect();
    doubly.sort_unstable();
    for &u0 in &doubly {
        nested_terms(w0, w1, origin, u0, &dom.sites, &mut map, &mut bins);
    }
    (bins.pi1, bins.r0)
}

/// tau_p over a box, one breadth-first sweep per sample.
pub fn estimate_two_point(spec: &BoxSpec, p: f64, n_samples: u64, rng: &RngStream) -> Result<TwoPointTable> {
    estimate_two_point_on(&Layout::dense(spec), p, n_samples, rng)
}

pub fn estimate_two_point_on(layout: &Layout, p: f64, n_samples: u64, rng: &RngStream) -> Result<TwoPointTable> {
    let plan = SamplingPlan { layout: layout.clone(), p, n_samples, rng: *rng, observables: Observables::default() };
    Ok(run_pass(&plan)?.two_point)
}

/// chi(p) = 1 + p sum_x tau(x).
pub fn susceptibility(table: &TwoPointTable) -> Estimate {
    table.susceptibility()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_two_point_function() {
        let spec = BoxSpec::free(1, 41).unwrap();
        let t = estimate_two_point(&spec, 0.5, 20_000, &RngStream::new(7, 0)).unwrap();
        assert_eq!(t.at(&[0]).value, 0.0);
        assert_eq!(t.at(&[1]).value, 1.0);
        assert_eq!(t.at(&[1]).stderr, 0.0);
        let e = t.at(&[3]);
        assert!((e.value - 0.25).abs() < 4.0 * e.stderr, "{e:?}");
        let chi = t.susceptibility();
        assert!((chi.value - 3.0).abs() < 4.0 * chi.stderr, "{chi:?}");
    }

    #[test]
    fn zero_density() {
        let spec = BoxSpec::torus(3, 5).unwrap();
        let plan = SamplingPlan {
            layout: Layout::dense(&spec),
            p: 0.0,
            n_samples: 50,
            rng: RngStream::new(1, 0),
            observables: Observables { doubly: true, nested: true },
        };
        let r = run_pass(&plan).unwrap();
        let tau = r.two_point.mean();
        let j = Field::adjacency(&tau.layout);
        assert_eq!(tau.values, j.values);
        assert!(r.pi0.unwrap().mean().values.iter().all(|&v| v == 0.0));
        assert!(r.pi1.unwrap().mean().values.iter().all(|&v| v == 0.0));
        assert_eq!(r.two_point.susceptibility().value, 1.0);
    }

    #[test]
    fn nested_counts_match_definitions() {
        use crate::percolation::config::SiteConfig;
        use crate::percolation::events::{
            doubly_connected_sites, modified_cluster_sites, pivotal_sites, through_connected_sites,
        };
        let rng = RngStream::new(21, 0);
        for (spec, p) in [
            (BoxSpec::torus(2, 5).unwrap(), 0.55),
            (BoxSpec::free(2, 5).unwrap(), 0.6),
            (BoxSpec::torus(3, 3).unwrap(), 0.35),
            (BoxSpec::free(1, 9).unwrap(), 0.7),
        ] {
            for sample in 0..40 {
                let w0 = SiteConfig::sample_slot(&spec, p, &rng, sample, 0).unwrap();
                let w1 = SiteConfig::sample_slot(&spec, p, &rng, sample, 1).unwrap();
                let (pi1, r0) = pair_counts(&w0, &w1);
                let origin = spec.origin_index();
                let mut want_pi1: FxHashMap<usize, u64> = FxHashMap::default();
                let mut want_r0: FxHashMap<usize, u64> = FxHashMap::default();
                for u0 in 0..spec.n_sites() {
                    if !doubly_connected_sites(&w0, origin, u0) {
                        continue;
                    }
                    let a: SiteSet = modified_cluster_sites(&w0, origin, u0).into_iter().collect();
                    for x in 0..spec.n_sites() {
                        if !through_connected_sites(&w1, u0, x, &a) {
                            continue;
                        }
                        *want_r0.entry(x as usize).or_insert(0) += 1;
                        let blocked = pivotal_sites(&w1, u0, x)
                            .into_iter()
                            .any(|v| through_connected_sites(&w1, u0, v, &a));
                        if !blocked {
                            *want_pi1.entry(x as usize).or_insert(0) += 1;
                        }
                    }
                }
                assert_eq!(pi1, want_pi1, "{spec:?} sample {sample}");
                assert_eq!(r0, want_r0, "{spec:?} sample {sample}");
            }
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let spec = BoxSpec::torus(2, 9).unwrap();
        let plan = SamplingPlan {
            layout: Layout::dense(&spec),
            p: 0.45,
            n_samples: 400,
            rng: RngStream::new(3, 1),
            observables: Observables { doubly: true, nested: true },
        };
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_pass(&plan).unwrap());
        let b = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_pass(&plan).unwrap());
        assert_eq!(a.two_point.tau.counts, b.two_point.tau.counts);
        assert_eq!(a.pi1.unwrap().counts, b.pi1.unwrap().counts);
    }
}
