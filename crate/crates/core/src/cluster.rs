//! Open clusters, the chemical distance, chemical balls, block regularity
//! events and empirical tails of the chemical distance.

use std::fmt;

use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, Configuration, Mode, Site};
use crate::stats;
use crate::union_find::UnionFind;

const UNLABELED: u32 = u32::MAX;
const UNREACHED: u32 = u32::MAX;

/// Graph distance inside open clusters; `Infinite` across clusters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Finite(u32),
    Infinite,
}

impl Distance {
    pub fn finite(self) -> Option<u32> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Distance::Finite(_))
    }

    fn from_raw(d: u32) -> Self {
        if d == UNREACHED {
            Distance::Infinite
        } else {
            Distance::Finite(d)
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{d}"),
            Distance::Infinite => f.write_str("inf"),
        }
    }
}

/// Partition of the cluster sites of a configuration into open clusters.
///
/// A site belongs to a cluster if it is open (site mode) or has at least one
/// open incident bond (bond mode). Labels are numbered in order of each
/// cluster's smallest site index.
#[derive(Clone, Debug)]
pub struct ClusterLabeling {
    labels: Vec<u32>,
    sizes: Vec<usize>,
    spanning: Vec<bool>,
    giant: Option<u32>,
}

/// Exact union-find labeling of the open clusters.
pub fn label_clusters(config: &Configuration) -> ClusterLabeling {
    let spec = *config.spec();
    let n = spec.num_sites();
    let mut uf = UnionFind::new(n);
    let mut active = vec![false; n];
    for u in 0..n {
        if spec.mode() == Mode::Site && config.site_open(u) {
            active[u] = true;
        }
        for axis in 0..spec.dim() {
            if let Some(v) = spec.step(u, axis, true) {
                if config.edge_open(u, axis, true) {
                    active[u] = true;
                    active[v] = true;
                    uf.union(u, v);
                }
            }
        }
    }
    let mut root_label = vec![UNLABELED; n];
    let mut labels = vec![UNLABELED; n];
    let mut sizes = Vec::new();
    for u in 0..n {
        if !active[u] {
            continue;
        }
        let r = uf.find(u);
        if root_label[r] == UNLABELED {
            root_label[r] = sizes.len() as u32;
            sizes.push(0);
        }
        let l = root_label[r];
        labels[u] = l;
        sizes[l as usize] += 1;
    }
    // spanning: the projection onto some axis covers every coordinate value
    let k = sizes.len();
    let side = spec.side();
    let mut covered = vec![vec![false; side * k]; spec.dim()];
    for u in 0..n {
        let l = labels[u];
        if l != UNLABELED {
            for (axis, cov) in covered.iter_mut().enumerate() {
                cov[l as usize * side + spec.coord(u, axis)] = true;
            }
        }
    }
    let spanning = (0..k)
        .map(|l| {
            covered
                .iter()
                .any(|cov| cov[l * side..(l + 1) * side].iter().all(|&c| c))
        })
        .collect();
    let giant = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(l, _)| l as u32);
    ClusterLabeling {
        labels,
        sizes,
        spanning,
        giant,
    }
}

impl ClusterLabeling {
    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    #[inline]
    pub fn label(&self, site: usize) -> Option<u32> {
        match self.labels[site] {
            UNLABELED => None,
            l => Some(l),
        }
    }

    /// Label of the largest cluster (ties to the smallest label).
    pub fn giant(&self) -> Option<u32> {
        self.giant
    }

    pub fn giant_size(&self) -> usize {
        self.giant.map_or(0, |g| self.sizes[g as usize])
    }

    /// Fraction of all box sites in the giant cluster.
    pub fn giant_density(&self) -> f64 {
        self.giant_size() as f64 / self.labels.len() as f64
    }

    pub fn spans(&self, label: u32) -> bool {
        self.spanning[label as usize]
    }

    pub fn giant_spans(&self) -> bool {
        self.giant.is_some_and(|g| self.spanning[g as usize])
    }

    #[inline]
    pub fn on_giant(&self, site: usize) -> bool {
        self.giant.is_some() && self.labels[site] == self.giant.unwrap()
    }

    #[inline]
    pub fn same_cluster(&self, a: usize, b: usize) -> bool {
        self.labels[a] != UNLABELED && self.labels[a] == self.labels[b]
    }

    /// Sites of a cluster in increasing index order.
    pub fn members(&self, label: u32) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&s| self.labels[s] == label)
            .collect()
    }

    pub fn num_sites(&self) -> usize {
        self.labels.len()
    }
}

fn is_cluster_site(config: &Configuration, site: usize) -> bool {
    let spec = config.spec();
    match spec.mode() {
        Mode::Site => config.site_open(site),
        Mode::Bond => (0..spec.dim()).any(|a| {
            config.edge_open(site, a, true) || config.edge_open(site, a, false)
        }),
    }
}

/// Breadth-first distances from `source` over open bonds, optionally stopping
/// after distance `limit`. Unreached sites hold `u32::MAX`.
pub fn bfs_distances(config: &Configuration, source: usize, limit: Option<u32>) -> Vec<u32> {
    let n = config.spec().num_sites();
    let mut dist = vec![UNREACHED; n];
    if !is_cluster_site(config, source) {
        return dist;
    }
    dist[source] = 0;
    let mut queue = Vec::with_capacity(1024);
    queue.push(source);
    let mut head = 0;
    let limit = limit.unwrap_or(u32::MAX - 1);
    while head < queue.len() {
        let x = queue[head];
        head += 1;
        let dx = dist[x];
        if dx >= limit {
            continue;
        }
        config.for_each_open_neighbor(x, |y| {
            if dist[y] == UNREACHED {
                dist[y] = dx + 1;
                queue.push(y);
            }
        });
    }
    dist
}

/// Chemical distances from one source to every site of the box.
#[derive(Clone, Debug)]
pub struct ChemicalMetric {
    pub source: Site,
    source_index: usize,
    distances: Vec<u32>,
}

impl ChemicalMetric {
    pub fn new(config: &Configuration, source: &Site) -> Result<Self> {
        let i = config.spec().index_of(source)?;
        Ok(ChemicalMetric {
            source: source.clone(),
            source_index: i,
            distances: bfs_distances(config, i, None),
        })
    }

    pub fn source_index(&self) -> usize {
        self.source_index
    }

    pub fn distance(&self, site: usize) -> Distance {
        Distance::from_raw(self.distances[site])
    }

    pub fn raw(&self) -> &[u32] {
        &self.distances
    }
}

/// Shortest open-path length between `x` and `y`, `Infinite` if they are not
/// in a common open cluster.
pub fn chemical_distance(config: &Configuration, x: &Site, y: &Site) -> Result<Distance> {
    let spec = config.spec();
    let (xi, yi) = (spec.index_of(x)?, spec.index_of(y)?);
    Ok(chemical_distance_index(config, xi, yi))
}

pub fn chemical_distance_index(config: &Configuration, x: usize, y: usize) -> Distance {
    if !is_cluster_site(config, x) || !is_cluster_site(config, y) {
        return Distance::Infinite;
    }
    if x == y {
        return Distance::Finite(0);
    }
    let n = config.spec().num_sites();
    let mut dist = vec![UNREACHED; n];
    dist[x] = 0;
    let mut queue = vec![x];
    let mut head = 0;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        let du = dist[u];
        let mut found = false;
        config.for_each_open_neighbor(u, |v| {
            if dist[v] == UNREACHED {
                dist[v] = du + 1;
                if v == y {
                    found = true;
                }
                queue.push(v);
            }
        });
        if found {
            return Distance::Finite(du + 1);
        }
    }
    Distance::Infinite
}

/// The chemical ball `{x on the giant cluster : D(source, x) <= t}` as sorted
/// site indices.
pub fn chemical_ball(
    config: &Configuration,
    labeling: &ClusterLabeling,
    source: usize,
    t: f64,
) -> Result<Vec<usize>> {
    if !labeling.on_giant(source) {
        return Err(Error::precondition(
            "chemical ball source must lie on the giant cluster",
        ));
    }
    if !(t >= 0.0) {
        return Err(Error::domain(format!("radius must be nonnegative, got {t}")));
    }
    let limit = t.floor().min((u32::MAX - 1) as f64) as u32;
    let dist = bfs_distances(config, source, Some(limit));
    Ok((0..dist.len()).filter(|&s| dist[s] <= limit).collect())
}

/// Geometry of the blocks `B_i(N)` and enlarged blocks `B'_i(N)`.
///
/// Block centers are `a + (2N+1) i` with the anchor `a = (floor(L/2), ..)`;
/// the enlarged block has radius `floor(5N/4)`.
#[derive(Clone, Copy, Debug)]
pub struct BlockGeometry {
    pub n: usize,
    pub radius: usize,
}

impl BlockGeometry {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("block scale N must be >= 1"));
        }
        Ok(BlockGeometry {
            n,
            radius: 5 * n / 4,
        })
    }

    /// Diameter threshold `floor(N/10)`.
    pub fn threshold(&self) -> usize {
        self.n / 10
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }
}

/// Indicator of the block regularity event for the enlarged block around
/// block `i` at scale `n`:
///
/// 1. exactly one open cluster of the enlarged block crosses it (touches both
///    faces orthogonal to the first axis),
/// 2. that cluster meets every sub-box whose L∞-diameter exceeds `N/10`,
/// 3. every open cluster of the enlarged block with L∞-diameter above `N/10`
///    is that crossing cluster.
///
/// Clusters are computed using only bonds inside the enlarged block.
pub fn check_regularity_event(config: &Configuration, i: &Site, n: usize) -> Result<bool> {
    let spec = *config.spec();
    let d = spec.dim();
    if i.dim() != d {
        return Err(Error::domain(format!("block index {i} has wrong dimension")));
    }
    let geo = BlockGeometry::new(n)?;
    let r = geo.radius as i64;
    let s = geo.side();
    let l = spec.side() as i64;
    let anchor = l / 2;
    let mut lower = Vec::with_capacity(d);
    for &ic in i.coords() {
        let c = ic
            .checked_mul(2 * n as i64 + 1)
            .and_then(|v| v.checked_add(anchor))
            .ok_or_else(|| Error::domain("block center overflows"))?;
        lower.push(c - r);
    }
    if spec.is_wrapped() {
        if s as i64 > l {
            return Err(Error::domain(format!(
                "enlarged block of side {s} does not fit in a torus of side {l}"
            )));
        }
    } else if lower.iter().any(|&lo| lo < 0 || lo + s as i64 > l) {
        return Err(Error::domain(format!(
            "enlarged block around {i} at scale {n} leaves the box"
        )));
    }
    // local site index -> global site index
    let local_count = s.pow(d as u32);
    let local_stride = |axis: usize| s.pow(axis as u32);
    let global_of = |local: usize| -> usize {
        let mut g = Site::zero(d);
        for axis in 0..d {
            g.0[axis] = lower[axis] + ((local / local_stride(axis)) % s) as i64;
        }
        spec.wrapped_index(&g)
    };
    let globals: Vec<usize> = (0..local_count).map(global_of).collect();
    let mut uf = UnionFind::new(local_count);
    let mut active = vec![false; local_count];
    for u in 0..local_count {
        if spec.mode() == Mode::Site && config.site_open(globals[u]) {
            active[u] = true;
        }
        for axis in 0..d {
            let c = (u / local_stride(axis)) % s;
            if c + 1 < s && config.edge_open(globals[u], axis, true) {
                let v = u + local_stride(axis);
                active[u] = true;
                active[v] = true;
                uf.union(u, v);
            }
        }
    }
    // per-root bounding boxes and face contacts
    let mut lo = vec![usize::MAX; local_count * d];
    let mut hi = vec![0usize; local_count * d];
    for u in (0..local_count).filter(|&u| active[u]) {
        let root = uf.find(u);
        for axis in 0..d {
            let c = (u / local_stride(axis)) % s;
            lo[root * d + axis] = lo[root * d + axis].min(c);
            hi[root * d + axis] = hi[root * d + axis].max(c);
        }
    }
    let roots: Vec<usize> = (0..local_count)
        .filter(|&u| active[u] && uf.find(u) == u)
        .collect();
    let crossing: Vec<usize> = roots
        .iter()
        .copied()
        .filter(|&root| lo[root * d] == 0 && hi[root * d] == s - 1)
        .collect();
    if crossing.len() != 1 {
        return Ok(false);
    }
    let cross = crossing[0];
    let m = geo.threshold();
    let diameter = |root: usize| (0..d).map(|a| hi[root * d + a] - lo[root * d + a]).max().unwrap();
    if roots.iter().any(|&root| root != cross && diameter(root) > m) {
        return Ok(false);
    }
    // every sub-box of side m + 2 (diameter m + 1) meets the crossing cluster
    let indicator: Vec<u32> = (0..local_count)
        .map(|u| (active[u] && uf.find(u) == cross) as u32)
        .collect();
    let w = m + 2;
    Ok(all_windows_nonempty(&indicator, s, d, w))
}

/// Whether every axis-aligned window of side `w` of a `side^dim` grid
/// contains a nonzero entry, via a summed-area table.
fn all_windows_nonempty(grid: &[u32], side: usize, dim: usize, w: usize) -> bool {
    if w > side {
        return true;
    }
    let ps = side + 1;
    let total = ps.pow(dim as u32);
    let pstride = |axis: usize| ps.pow(axis as u32);
    let mut sat = vec![0u64; total];
    for p in 0..total {
        let coords: Vec<usize> = (0..dim).map(|a| (p / pstride(a)) % ps).collect();
        if coords.iter().any(|&c| c == 0) {
            continue;
        }
        let g: usize = coords
            .iter()
            .enumerate()
            .map(|(a, &c)| (c - 1) * side.pow(a as u32))
            .sum();
        sat[p] = grid[g] as u64;
    }
    for axis in 0..dim {
        for p in 0..total {
            if (p / pstride(axis)) % ps > 0 {
                sat[p] += sat[p - pstride(axis)];
            }
        }
    }
    let starts = side - w + 1;
    let count = starts.pow(dim as u32);
    for k in 0..count {
        let base: Vec<usize> = (0..dim).map(|a| (k / starts.pow(a as u32)) % starts).collect();
        let mut sum: i128 = 0;
        for corner in 0..(1usize << dim) {
            let mut p = 0;
            let mut sign = 1i128;
            for (a, &b) in base.iter().enumerate() {
                if corner >> a & 1 == 1 {
                    p += (b + w) * pstride(a);
                } else {
                    p += b * pstride(a);
                    sign = -sign;
                }
            }
            sum += sign * sat[p] as i128;
        }
        if sum == 0 {
            return false;
        }
    }
    true
}

/// Sites at L1 distance exactly `r` along the axes: `±r e_a`.
fn axis_targets(spec: &BoxSpec, origin: usize, r: usize) -> Vec<usize> {
    let o = spec.site(origin);
    let mut out = Vec::with_capacity(2 * spec.dim());
    for axis in 0..spec.dim() {
        for sign in [1i64, -1] {
            let mut t = o.clone();
            t.0[axis] += sign * r as i64;
            out.push(spec.wrapped_index(&t));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailRow {
    pub r: usize,
    pub count: usize,
    pub total: usize,
    pub freq: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Empirical frequency of `{0 <-> x, D(0,x) >= c1 |x|_1}` per radius.
#[derive(Clone, Debug)]
pub struct TailCurve {
    pub c1: f64,
    pub rows: Vec<TailRow>,
    /// Least-squares `(c2, c3)` of `freq ~ exp(-c2 (log r)^(1+c3))`, when at
    /// least two radii have frequencies strictly between 0 and 1.
    pub fit: Option<(f64, f64)>,
}

impl TailCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,count,total,freq,ci_lo,ci_hi\n");
        for row in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.r, row.count, row.total, row.freq, row.ci_lo, row.ci_hi
            ));
        }
        s
    }
}

/// Tail of the chemical distance at the origin (site 0) of each
/// configuration, probing the `2d` axis points at each radius.
pub fn empirical_tail(configs: &[&Configuration], c1: f64, radii: &[usize]) -> Result<TailCurve> {
    if configs.is_empty() {
        return Err(Error::domain("empirical tail needs a nonempty ensemble"));
    }
    let mut counts = vec![0usize; radii.len()];
    let mut totals = vec![0usize; radii.len()];
    for config in configs {
        let spec = config.spec();
        let dist = bfs_distances(config, 0, None);
        for (k, &r) in radii.iter().enumerate() {
            for t in axis_targets(spec, 0, r) {
                totals[k] += 1;
                if dist[t] != UNREACHED && dist[t] as f64 >= c1 * r as f64 {
                    counts[k] += 1;
                }
            }
        }
    }
    let rows: Vec<TailRow> = radii
        .iter()
        .zip(counts.iter().zip(&totals))
        .map(|(&r, (&count, &total))| {
            let (ci_lo, ci_hi) = stats::wilson_interval(count, total, stats::Z95);
            TailRow {
                r,
                count,
                total,
                freq: count as f64 / total as f64,
                ci_lo,
                ci_hi,
            }
        })
        .collect();
    let fit = fit_stretched_log(&rows);
    Ok(TailCurve { c1, rows, fit })
}

/// Regression of `log(-log f)` on `log(log r)`: slope `1 + c3`, intercept
/// `log c2`.
fn fit_stretched_log(rows: &[TailRow]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|row| row.freq > 0.0 && row.freq < 1.0 && row.r >= 2)
        .map(|row| ((row.r as f64).ln().ln(), (-row.freq.ln()).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (slope, intercept) = stats::linear_fit(&pts)?;
    Some((intercept.exp(), slope - 1.0))
}

/// Fraction of pairs `(0, y)` with `|y|_1 <= r` that are connected with
/// `D(0, y) > (3r)^d`.
pub fn long_detour_frequency(configs: &[&Configuration], r: usize) -> Result<(usize, usize)> {
    if configs.is_empty() {
        return Err(Error::domain("needs a nonempty ensemble"));
    }
    let mut hits = 0;
    let mut total = 0;
    for config in configs {
        let spec = config.spec();
        let bound = (3.0 * r as f64).powi(spec.dim() as i32);
        let dist = bfs_distances(config, 0, None);
        for s in 0..spec.num_sites() {
            let disp = spec.displacement(0, s);
            if disp.is_zero() || disp.l1() as usize > r {
                continue;
            }
            total += 1;
            if dist[s] != UNREACHED && dist[s] as f64 > bound {
                hits += 1;
            }
        }
    }
    Ok((hits, total))
}
