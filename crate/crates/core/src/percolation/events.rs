//! Connection events of a single configuration.
//!
//! Convention throughout: x and y are connected when x != y and some
//! nearest-neighbour path between them has all *inner* vertices occupied.
//! Endpoints never need to be occupied, neighbours are always connected and
//! a site is never connected to itself.

use rustc_hash::{FxHashMap, FxHashSet};

use super::config::Occupancy;
use crate::error::{invalid, Result};
use crate::lattice::{BoxSpec, LatticePoint};

pub type SiteSet = FxHashSet<u64>;

/// Resolve a point to a site index: tori fold, free boxes must contain it.
pub fn site_of(spec: &BoxSpec, x: &LatticePoint) -> Result<u64> {
    if x.dim() != spec.dim {
        return Err(crate::error::LabError::DimensionMismatch { expected: spec.dim, got: x.dim() });
    }
    if !spec.is_torus() && !spec.contains(x.coords()) {
        return invalid(format!("point {x} outside the box"));
    }
    spec.index(x)
}

/// Breadth-first search from `from`, traversing only sites for which
/// `inner` holds. Returns whether `target` was reached and the set of
/// traversed sites (always including `from`).
pub(crate) fn search<O, F>(cfg: &O, from: u64, target: Option<u64>, inner: F) -> (bool, Vec<u64>)
where
    O: Occupancy + ?Sized,
    F: Fn(u64) -> bool,
{
    let spec = cfg.spec();
    let mut seen: SiteSet = FxHashSet::default();
    seen.insert(from);
    let mut order = vec![from];
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for w in spec.neighbors(v) {
            if Some(w) == target && w != from {
                return (true, order);
            }
            if !seen.contains(&w) && inner(w) {
                seen.insert(w);
                order.push(w);
            }
        }
    }
    (false, order)
}

pub fn connected_sites<O: Occupancy + ?Sized>(cfg: &O, x: u64, y: u64) -> bool {
    if x == y {
        return false;
    }
    search(cfg, x, Some(y), |w| cfg.is_occupied(w)).0
}

pub fn connected<O: Occupancy + ?Sized>(cfg: &O, x: &LatticePoint, y: &LatticePoint) -> Result<bool> {
    let spec = cfg.spec();
    Ok(connected_sites(cfg, site_of(spec, x)?, site_of(spec, y)?))
}

/// C(x) = {x} together with every occupied site connected to x.
pub fn cluster_sites<O: Occupancy + ?Sized>(cfg: &O, x: u64) -> Vec<u64> {
    search(cfg, x, None, |w| cfg.is_occupied(w)).1
}

pub fn cluster_of<O: Occupancy + ?Sized>(cfg: &O, x: &LatticePoint) -> Result<SiteSet> {
    let s = site_of(cfg.spec(), x)?;
    Ok(cluster_sites(cfg, s).into_iter().collect())
}

/// <A>: the set together with its outer vertex boundary.
pub fn boundary_closure(a: &SiteSet, spec: &BoxSpec) -> SiteSet {
    let mut out = a.clone();
    for &v in a {
        out.extend(spec.neighbors(v));
    }
    out
}

/// Same as [`boundary_closure`] for a slice of sites.
pub fn closure_of(sites: &[u64], spec: &BoxSpec) -> SiteSet {
    let mut out: SiteSet = sites.iter().copied().collect();
    for &v in sites {
        out.extend(spec.neighbors(v));
    }
    out
}

/// The cluster of x when u is deleted from the lattice.
pub fn modified_cluster_sites<O: Occupancy + ?Sized>(cfg: &O, x: u64, u: u64) -> Vec<u64> {
    if x == u {
        return vec![x];
    }
    search(cfg, x, None, |w| w != u && cfg.is_occupied(w)).1
}

pub fn modified_cluster<O: Occupancy + ?Sized>(cfg: &O, x: &LatticePoint, u: &LatticePoint) -> Result<SiteSet> {
    let spec = cfg.spec();
    let (xs, us) = (site_of(spec, x)?, site_of(spec, u)?);
    Ok(modified_cluster_sites(cfg, xs, us).into_iter().collect())
}

/// Connection whose inner vertices all avoid `a`. The caller passes the
/// closure <A> when that is what the event needs.
pub fn off_connected_sites<O: Occupancy + ?Sized>(cfg: &O, u: u64, x: u64, a: &SiteSet) -> bool {
    if u == x {
        return false;
    }
    search(cfg, u, Some(x), |w| !a.contains(&w) && cfg.is_occupied(w)).0
}

pub fn off_a_connected<O: Occupancy + ?Sized>(
    cfg: &O,
    u: &LatticePoint,
    x: &LatticePoint,
    a: &SiteSet,
) -> Result<bool> {
    let spec = cfg.spec();
    Ok(off_connected_sites(cfg, site_of(spec, u)?, site_of(spec, x)?, a))
}

/// u is connected to x, and either every connecting path has an inner
/// vertex in <A> or x itself lies in <A>.
pub fn through_connected_sites<O: Occupancy + ?Sized>(cfg: &O, u: u64, x: u64, a: &SiteSet) -> bool {
    if !connected_sites(cfg, u, x) {
        return false;
    }
    let closed = boundary_closure(a, cfg.spec());
    closed.contains(&x) || !off_connected_sites(cfg, u, x, &closed)
}

pub fn through_connected<O: Occupancy + ?Sized>(
    cfg: &O,
    u: &LatticePoint,
    x: &LatticePoint,
    a: &SiteSet,
) -> Result<bool> {
    let spec = cfg.spec();
    Ok(through_connected_sites(cfg, site_of(spec, u)?, site_of(spec, x)?, a))
}

/// Two connections between u and x with disjoint sets of inner vertices.
///
/// Computed as a unit vertex-capacity max-flow on the occupied sites
/// reachable from u: by Menger the pair is doubly connected exactly when two
/// augmenting paths exist.
pub fn doubly_connected_sites<O: Occupancy + ?Sized>(cfg: &O, u: u64, x: u64) -> bool {
    if u == x {
        return false;
    }
    let spec = cfg.spec();
    if spec.neighbors(u).any(|w| w == x) {
        return true;
    }
    // occupied inner candidates reachable from u without passing through x
    let (_, reach) = search(cfg, u, None, |w| w != x && cfg.is_occupied(w));
    let mut local: FxHashMap<u64, usize> = FxHashMap::default();
    for (i, &s) in reach.iter().enumerate() {
        local.insert(s, i);
    }
    if !reach.iter().any(|&v| spec.neighbors(v).any(|w| w == x)) {
        return false;
    }
    // node i has in = 2i, out = 2i+1; u is node 0 (uncapacitated), sink is x
    let n = reach.len();
    let sink = 2 * n;
    let mut graph = FlowGraph::new(2 * n + 1);
    for i in 0..n {
        graph.add_edge(2 * i, 2 * i + 1, if i == 0 { 2 } else { 1 });
    }
    for (i, &v) in reach.iter().enumerate() {
        for w in spec.neighbors(v) {
            if w == x {
                graph.add_edge(2 * i + 1, sink, 1);
            } else if let Some(&j) = local.get(&w) {
                if j != 0 {
                    graph.add_edge(2 * i + 1, 2 * j, 1);
                }
            }
        }
    }
    graph.max_flow(1, sink, 2) >= 2
}

pub fn doubly_connected<O: Occupancy + ?Sized>(cfg: &O, u: &LatticePoint, x: &LatticePoint) -> Result<bool> {
    let spec = cfg.spec();
    Ok(doubly_connected_sites(cfg, site_of(spec, u)?, site_of(spec, x)?))
}

struct FlowGraph {
    head: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<i32>,
    next: Vec<usize>,
}

impl FlowGraph {
    const NIL: usize = usize::MAX;

    fn new(n: usize) -> Self {
        FlowGraph { head: vec![Self::NIL; n], to: vec![], cap: vec![], next: vec![] }
    }

    fn add_edge(&mut self, a: usize, b: usize, c: i32) {
        for (from, dest, cap) in [(a, b, c), (b, a, 0)] {
            self.to.push(dest);
            self.cap.push(cap);
            self.next.push(self.head[from]);
            self.head[from] = self.to.len() - 1;
        }
    }

    /// Augment along shortest paths until `limit` units flow or none remain.
    fn max_flow(&mut self, s: usize, t: usize, limit: i32) -> i32 {
        let mut flow = 0;
        while flow < limit {
            let mut via = vec![Self::NIL; self.head.len()];
            let mut queue = std::collections::VecDeque::from([s]);
            let mut found = false;
            'bfs: while let Some(v) = queue.pop_front() {
                let mut e = self.head[v];
                while e != Self::NIL {
                    let w = self.to[e];
                    if self.cap[e] > 0 && w != s && via[w] == Self::NIL {
                        via[w] = e;
                        if w == t {
                            found = true;
                            break 'bfs;
                        }
                        queue.push_back(w);
                    }
                    e = self.next[e];
                }
            }
            if !found {
                break;
            }
            let mut w = t;
            while w != s {
                let e = via[w];
                self.cap[e] -= 1;
                self.cap[e ^ 1] += 1;
                w = self.to[e ^ 1];
            }
            flow += 1;
        }
        flow
    }
}

/// Pivotal sites for {u <-> x}: v such that the connection holds with v
/// forced occupied and fails with v forced vacant. Endpoints never qualify.
///
/// For a connected pair the candidates are the inner vertices of one
/// connecting path, each tested by deletion. For a pair that is not
/// connected the pivotal sites are the vacant sites touching both the
/// u-side and the x-side reach sets.
pub fn pivotal_sites<O: Occupancy + ?Sized>(cfg: &O, u: u64, x: u64) -> Vec<u64> {
    if u == x {
        return vec![];
    }
    let spec = cfg.spec();
    let open = |w: u64| cfg.is_occupied(w);
    if connected_sites(cfg, u, x) {
        let path = find_path(cfg, u, x);
        let mut out: Vec<u64> = path[1..path.len() - 1]
            .iter()
            .copied()
            .filter(|&v| !search(cfg, u, Some(x), |w| w != v && open(w)).0)
            .collect();
        out.sort_unstable();
        out
    } else {
        let (_, from_u) = search(cfg, u, None, open);
        let (_, from_x) = search(cfg, x, None, open);
        let near_x = closure_of(&from_x, spec);
        let mut out: Vec<u64> = closure_of(&from_u, spec)
            .into_iter()
            .filter(|v| *v != u && *v != x && !open(*v) && near_x.contains(v))
            .collect();
        out.sort_unstable();
        out
    }
}

pub fn pivotal_points<O: Occupancy + ?Sized>(cfg: &O, u: &LatticePoint, x: &LatticePoint) -> Result<SiteSet> {
    let spec = cfg.spec();
    Ok(pivotal_sites(cfg, site_of(spec, u)?, site_of(spec, x)?).into_iter().collect())
}

/// Some shortest u-x path with occupied inner vertices, endpoints included.
/// Assumes the pair is connected.
fn find_path<O: Occupancy + ?Sized>(cfg: &O, u: u64, x: u64) -> Vec<u64> {
    let spec = cfg.spec();
    let mut parent: FxHashMap<u64, u64> = FxHashMap::default();
    parent.insert(u, u);
    let mut queue = std::collections::VecDeque::from([u]);
    while let Some(v) = queue.pop_front() {
        for w in spec.neighbors(v) {
            if parent.contains_key(&w) {
                continue;
            }
            if w == x {
                let mut path = vec![x, v];
                let mut c = v;
                while c != u {
                    c = parent[&c];
                    path.push(c);
                }
                path.reverse();
                return path;
            }
            if cfg.is_occupied(w) {
                parent.insert(w, v);
                queue.push_back(w);
            }
        }
    }
    vec![u, x]
}

/// Dominator structure of the connections out of one source site.
///
/// The reachable graph is the source plus its occupied cluster; vacant sites
/// touching it are reachable as endpoints only. A site's pivotal points are
/// exactly its strict dominators other than the source. Because the graph is
/// undirected the dominator tree comes from one depth-first search: a vertex
/// is dominated by the entry vertex of the biconnected block it hangs in.
pub struct Dominators {
    pub sites: Vec<u64>,
    ids: FxHashMap<u64, u32>,
    idom: Vec<u32>,
    depth: Vec<u32>,
    /// vacant boundary site -> lowest common inclusive dominator of its
    /// cluster neighbours
    boundary: FxHashMap<u64, u32>,
}

impl Dominators {
    pub fn new<O: Occupancy + ?Sized>(cfg: &O, source: u64) -> Self {
        let spec = cfg.spec();
        let degree = 2 * spec.dim;
        let mut ids: FxHashMap<u64, u32> = FxHashMap::default();
        let mut sites = vec![source];
        let mut parent = vec![0u32];
        let mut low = vec![0u32];
        ids.insert(source, 0);
        let mut touches: Vec<(u64, u32)> = Vec::new();
        let mut stack: Vec<(u32, usize)> = vec![(0, 0)];
        while let Some(top) = stack.last_mut() {
            let (v, k) = (top.0, top.1);
            if k < degree {
                top.1 += 1;
                let Some(w) = spec.neighbor(sites[v as usize], k / 2, k % 2 == 0) else { continue };
                if let Some(&wid) = ids.get(&w) {
                    if wid < low[v as usize] {
                        low[v as usize] = wid;
                    }
                } else if cfg.is_occupied(w) {
                    let wid = sites.len() as u32;
                    ids.insert(w, wid);
                    sites.push(w);
                    parent.push(v);
                    low.push(wid);
                    stack.push((wid, 0));
                } else {
                    touches.push((w, v));
                }
            } else {
                stack.pop();
                if v != 0 {
                    let pv = parent[v as usize] as usize;
                    if low[v as usize] < low[pv] {
                        low[pv] = low[v as usize];
                    }
                }
            }
        }
        let n = sites.len();
        let mut idom = vec![0u32; n];
        let mut depth = vec![0u32; n];
        for v in 1..n {
            let pv = parent[v];
            idom[v] = if pv == 0 || low[v] >= pv { pv } else { idom[pv as usize] };
            depth[v] = depth[idom[v] as usize] + 1;
        }
        let mut dom = Dominators { sites, ids, idom, depth, boundary: FxHashMap::default() };
        let mut boundary: FxHashMap<u64, u32> = FxHashMap::default();
        for (w, v) in touches {
            let entry = boundary.entry(w).or_insert(v);
            *entry = dom.lca(*entry, v);
        }
        dom.boundary = boundary;
        dom
    }

    pub fn source(&self) -> u64 {
        self.sites[0]
    }

    fn lca(&self, mut a: u32, mut b: u32) -> u32 {
        while a != b {
            if self.depth[a as usize] < self.depth[b as usize] {
                std::mem::swap(&mut a, &mut b);
            }
            a = self.idom[a as usize];
        }
        a
    }

    /// Local id of a cluster site (source is 0).
    pub fn id(&self, site: u64) -> Option<u32> {
        self.ids.get(&site).copied()
    }

    pub fn cluster_len(&self) -> usize {
        self.sites.len()
    }

    pub fn idom(&self, id: u32) -> u32 {
        self.idom[id as usize]
    }

    /// Vacant sites connected to the source only as endpoints.
    pub fn boundary_sites(&self) -> impl Iterator<Item = u64> + '_ {
        self.boundary.keys().copied()
    }

    pub fn is_connected(&self, x: u64) -> bool {
        x != self.sites[0] && (self.ids.contains_key(&x) || self.boundary.contains_key(&x))
    }

    /// Deepest pivotal point of a connected target (local id), `None` when
    /// there is no pivotal point or the target is not connected.
    pub fn deepest_pivot(&self, x: u64) -> Option<u32> {
        let top = if let Some(&id) = self.ids.get(&x) {
            if id == 0 {
                return None;
            }
            self.idom[id as usize]
        } else {
            *self.boundary.get(&x)?
        };
        (top != 0).then_some(top)
    }

    /// Deepest pivot for a target already known by local id.
    pub fn deepest_pivot_of_id(&self, id: u32) -> Option<u32> {
        let top = self.idom[id as usize];
        (id != 0 && top != 0).then_some(top)
    }

    /// Deepest pivot for a vacant boundary site.
    pub fn deepest_pivot_of_boundary(&self, x: u64) -> Option<u32> {
        let top = *self.boundary.get(&x)?;
        (top != 0).then_some(top)
    }

    pub fn boundary_entries(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        self.boundary.iter().map(|(&s, &l)| (s, l))
    }

    pub fn pivots(&self, x: u64) -> Vec<u64> {
        let mut out = vec![];
        let mut cur = self.deepest_pivot(x);
        while let Some(c) = cur {
            out.push(self.sites[c as usize]);
            let up = self.idom[c as usize];
            cur = (up != 0).then_some(up);
        }
        out.sort_unstable();
        out
    }

    pub fn doubly_connected(&self, x: u64) -> bool {
        self.is_connected(x) && self.deepest_pivot(x).is_none()
    }
}
