//! Limit shapes of the chemical distance and Hausdorff distances to the
//! rescaled chemical balls.
//!
//! The limit shape built from directional estimates `μ̂(x_i)` is the convex
//! hull of the points `x_i / μ̂(x_i)`, i.e. the unit ball of the largest
//! convex positively homogeneous function not exceeding the estimates. It is
//! stored by vertices and by facets `ℓ · y <= 1`; `max_f ℓ_f · y` is its gauge.
//!
//! All distances are Euclidean.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::bfs_distances;
use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::exponents::MuEstimate;
use crate::lattice::Site;
use crate::scalar::{format_number, Scalar};
use crate::stats::{mean_ci, spearman};

/// Convex polytope containing the origin in its interior.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Polytope<F> {
    dim: usize,
    vertices: Vec<Vec<F>>,
    /// Normals `ℓ` of the facets `ℓ · y = 1`.
    facets: Vec<Vec<F>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShapeSet<F> {
    /// Lattice sites scaled by `1 / t`, each inflated to the cell
    /// `(x + [-1/2, 1/2]^d) / t`.
    Empirical { sites: Vec<Site>, t: F },
    /// A plain finite point set.
    Points { points: Vec<Vec<F>> },
    Limit(Polytope<F>),
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sub<F: Scalar>(a: &[F], b: &[F]) -> Vec<F> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

fn norm<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Solves `m z = rhs` by Gaussian elimination with partial pivoting; `None`
/// if the matrix is singular to working precision.
fn solve<F: Scalar>(mut m: Vec<Vec<F>>, mut rhs: Vec<F>) -> Option<Vec<F>> {
    let n = rhs.len();
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(F::zero(), |a, &b| a.max(b.abs()));
    let tiny = scale * F::epsilon() * F::of(64.0);
    for k in 0..n {
        let p = (k..n).max_by(|&a, &b| m[a][k].abs().partial_cmp(&m[b][k].abs()).unwrap())?;
        if m[p][k].abs() <= tiny {
            return None;
        }
        m.swap(k, p);
        rhs.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                let v = m[k][j];
                m[i][j] = m[i][j] - f * v;
            }
            let v = rhs[k];
            rhs[i] = rhs[i] - f * v;
        }
    }
    let mut z = vec![F::zero(); n];
    for k in (0..n).rev() {
        let mut acc = rhs[k];
        for j in k + 1..n {
            acc = acc - m[k][j] * z[j];
        }
        z[k] = acc / m[k][k];
    }
    Some(z)
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

impl<F: Scalar> Polytope<F> {
    /// Convex hull of `points`, which must contain the origin in its
    /// interior.
    ///
    /// Facets come from all `d`-subsets whose affine hull misses the origin
    /// and leaves every point on the origin's side; vertices are the points
    /// lying on facets whose normals span `R^d`.
    pub fn hull(points: &[Vec<F>]) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).ok_or_else(|| Error::domain("empty point set"))?;
        if points.iter().any(|p| p.len() != dim || p.iter().any(|c| !c.is_finite())) {
            return Err(Error::domain("points must be finite and of equal dimension"));
        }
        let tol = F::epsilon().sqrt();
        let mut facets: Vec<Vec<F>> = Vec::new();
        combinations(points.len(), dim, |idx| {
            let m: Vec<Vec<F>> = idx.iter().map(|&i| points[i].clone()).collect();
            let Some(l) = solve(m, vec![F::one(); dim]) else { return };
            if points.iter().all(|p| dot(&l, p) <= F::one() + tol)
                && !facets.iter().any(|f| norm(&sub(f, &l)) <= tol * (F::one() + norm(&l)))
            {
                facets.push(l);
            }
        });
        if facets.is_empty() {
            return Err(Error::domain("points do not surround the origin"));
        }
        let mut vertices: Vec<Vec<F>> = Vec::new();
        for p in points {
            let on: Vec<Vec<F>> = facets
                .iter()
                .filter(|f| (dot(f, p) - F::one()).abs() <= tol)
                .cloned()
                .collect();
            if rank(&on) == dim && !vertices.iter().any(|v| norm(&sub(v, p)) <= tol) {
                vertices.push(p.clone());
            }
        }
        // bounded and origin interior: the facet normals positively span R^d
        let poly = Polytope { dim, vertices, facets };
        for axis in 0..dim {
            for s in [F::one(), -F::one()] {
                let mut e = vec![F::zero(); dim];
                e[axis] = s;
                if poly.gauge(&e) <= F::zero() {
                    return Err(Error::domain("points do not surround the origin"));
                }
            }
        }
        Ok(poly)
    }

    /// `{y : |y|_1 <= r}`.
    pub fn cross_polytope(dim: usize, r: F) -> Self {
        let mut pts = Vec::new();
        for a in 0..dim {
            for s in [r, -r] {
                let mut v = vec![F::zero(); dim];
                v[a] = s;
                pts.push(v);
            }
        }
        Polytope::hull(&pts).expect("cross-polytope")
    }

    /// `{y : |y|_∞ <= r}`.
    pub fn cube(dim: usize, r: F) -> Self {
        let pts: Vec<Vec<F>> = (0..1usize << dim)
            .map(|m| (0..dim).map(|a| if m >> a & 1 == 1 { r } else { -r }).collect())
            .collect();
        Polytope::hull(&pts).expect("cube")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<F>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Vec<F>] {
        &self.facets
    }

    /// `max_f ℓ_f · y`, the gauge (the extended `μ̂` for a limit shape).
    pub fn gauge(&self, y: &[F]) -> F {
        self.facets.iter().map(|f| dot(f, y)).fold(F::neg_infinity(), F::max)
    }

    pub fn contains(&self, y: &[F]) -> bool {
        self.gauge(y) <= F::one() + F::epsilon() * F::of(64.0)
    }

    pub fn scaled(&self, s: F) -> Self {
        Polytope {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| v.iter().map(|&c| c * s).collect()).collect(),
            facets: self.facets.iter().map(|f| f.iter().map(|&c| c / s).collect()).collect(),
        }
    }

    /// Euclidean projection of `q` onto the polytope.
    pub fn project(&self, q: &[F]) -> Vec<F> {
        if self.contains(q) {
            return q.to_vec();
        }
        let shifted: Vec<Vec<F>> = self.vertices.iter().map(|v| sub(v, q)).collect();
        let x = min_norm_point(&shifted);
        x.iter().zip(q).map(|(&a, &b)| a + b).collect()
    }

    pub fn distance(&self, q: &[F]) -> F {
        if self.contains(q) {
            return F::zero();
        }
        let shifted: Vec<Vec<F>> = self.vertices.iter().map(|v| sub(v, q)).collect();
        norm(&min_norm_point(&shifted))
    }

    /// Vertices in counterclockwise order (planar polytopes only).
    pub fn polygon(&self) -> Option<Vec<Vec<F>>> {
        if self.dim != 2 {
            return None;
        }
        let mut v = self.vertices.clone();
        v.sort_by(|a, b| a[1].atan2(a[0]).partial_cmp(&b[1].atan2(b[0])).unwrap());
        Some(v)
    }
}

fn rank<F: Scalar>(rows: &[Vec<F>]) -> usize {
    let mut m: Vec<Vec<F>> = rows.to_vec();
    let cols = m.first().map_or(0, |r| r.len());
    let tol = F::epsilon().sqrt();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..m.len()).max_by(|&a, &b| m[a][c].abs().partial_cmp(&m[b][c].abs()).unwrap()) else {
            break;
        };
        if m[p][c].abs() <= tol {
            continue;
        }
        m.swap(r, p);
        for i in 0..m.len() {
            if i != r {
                let f = m[i][c] / m[r][c];
                for j in c..cols {
                    let v = m[r][j];
                    m[i][j] = m[i][j] - f * v;
                }
            }
        }
        r += 1;
    }
    r
}

/// Wolfe's algorithm for the point of smallest norm in the convex hull of
/// `points`.
fn min_norm_point<F: Scalar>(points: &[Vec<F>]) -> Vec<F> {
    let scale = points.iter().map(|p| dot(p, p)).fold(F::zero(), F::max);
    let eps = F::of(1e-12);
    let start = (0..points.len())
        .min_by(|&a, &b| dot(&points[a], &points[a]).partial_cmp(&dot(&points[b], &points[b])).unwrap())
        .expect("nonempty");
    let mut set = vec![start];
    let mut weights = vec![F::one()];
    let mut x = points[start].clone();
    for _ in 0..1000 {
        let (j, xp) = (0..points.len())
            .map(|j| (j, dot(&x, &points[j])))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if dot(&x, &x) - xp <= eps * scale || set.contains(&j) {
            break;
        }
        set.push(j);
        weights.push(F::zero());
        loop {
            let k = set.len();
            // minimize |Σ a_i p_i| subject to Σ a_i = 1
            let mut m = vec![vec![F::zero(); k + 1]; k + 1];
            for a in 0..k {
                for b in 0..k {
                    m[a][b] = dot(&points[set[a]], &points[set[b]]);
                }
                m[a][k] = F::one();
                m[k][a] = F::one();
            }
            let mut rhs = vec![F::zero(); k + 1];
            rhs[k] = F::one();
            let alpha = match solve(m, rhs) {
                Some(z) => z[..k].to_vec(),
                None => {
                    // affinely dependent: drop the newest point
                    set.pop();
                    weights.pop();
                    break;
                }
            };
            if alpha.iter().all(|&a| a > eps) {
                weights = alpha;
                break;
            }
            let theta = (0..k)
                .filter(|&i| alpha[i] <= eps)
                .map(|i| weights[i] / (weights[i] - alpha[i]))
                .fold(F::one(), F::min);
            for i in 0..k {
                weights[i] = theta * alpha[i] + (F::one() - theta) * weights[i];
            }
            let keep: Vec<usize> = (0..k).filter(|&i| weights[i] > eps).collect();
            set = keep.iter().map(|&i| set[i]).collect();
            weights = keep.iter().map(|&i| weights[i]).collect();
            if set.len() == 1 {
                weights = vec![F::one()];
                break;
            }
        }
        x = vec![F::zero(); points[0].len()];
        for (&i, &w) in set.iter().zip(&weights) {
            for (c, &p) in x.iter_mut().zip(&points[i]) {
                *c = *c + w * p;
            }
        }
    }
    x
}

/// Limit shape `{y : μ̂_hull(y) <= 1}` from directional estimates.
///
/// Every `± e_a` must be among the directions.
pub fn build_limit_shape<F: Scalar>(mus: &[MuEstimate<F>]) -> Result<ShapeSet<F>> {
    let values: Vec<(Site, F)> = mus.iter().map(|m| (m.direction.clone(), m.estimate)).collect();
    build_limit_shape_from(&values)
}

pub fn build_limit_shape_from<F: Scalar>(values: &[(Site, F)]) -> Result<ShapeSet<F>> {
    let dim = values.first().map(|v| v.0.dim()).ok_or_else(|| Error::domain("no directions"))?;
    for a in 0..dim {
        for s in [1, -1] {
            let e = Site::unit(dim, a).scale(s);
            if !values.iter().any(|(x, _)| *x == e) {
                return Err(Error::domain(format!("axis direction {e} is missing")));
            }
        }
    }
    let mut points = Vec::with_capacity(values.len());
    for (x, mu) in values {
        if x.dim() != dim || x.is_zero() || !(*mu > F::zero()) || !mu.is_finite() {
            return Err(Error::domain(format!("bad direction or value at {x}: {mu}")));
        }
        points.push(x.coords().iter().map(|&c| F::of(c as f64) / *mu).collect());
    }
    Polytope::hull(&points).map(ShapeSet::Limit)
}

/// Nonzero `x` with `|x|_∞ <= r`.
pub fn default_directions(dim: usize, r: i64) -> Vec<Site> {
    let side = (2 * r + 1) as usize;
    (0..side.pow(dim as u32))
        .map(|mut k| {
            Site::new(
                (0..dim)
                    .map(|_| {
                        let c = (k % side) as i64 - r;
                        k /= side;
                        c
                    })
                    .collect::<Vec<_>>(),
            )
        })
        .filter(|x| !x.is_zero())
        .collect()
}

impl<F: Scalar> ShapeSet<F> {
    /// Rescaled chemical ball `B_t / t` from site displacements.
    pub fn empirical(sites: Vec<Site>, t: F) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::domain("empty site set"));
        }
        if !(t > F::zero()) {
            return Err(Error::domain("scale must be positive"));
        }
        Ok(ShapeSet::Empirical { sites, t })
    }

    pub fn dim(&self) -> usize {
        match self {
            ShapeSet::Empirical { sites, .. } => sites[0].dim(),
            ShapeSet::Points { points } => points.first().map_or(0, |p| p.len()),
            ShapeSet::Limit(p) => p.dim(),
        }
    }

    pub fn as_polytope(&self) -> Option<&Polytope<F>> {
        match self {
            ShapeSet::Limit(p) => Some(p),
            _ => None,
        }
    }
}

/// Hausdorff distance for the supported pairings: point set / point set
/// (exact), polytope / polytope (exact, attained at vertices) and empirical
/// set / polytope.
///
/// For the last pairing the direction cells -> polytope is exact (maximized
/// at cell corners); the direction polytope -> cells is evaluated on a probe
/// set (vertices, interior grid of spacing `1/(2t)`, and projections of
/// nearby outside grid points), which under-estimates by at most
/// `√d / (4t)`.
pub fn hausdorff_distance<F: Scalar>(a: &ShapeSet<F>, b: &ShapeSet<F>) -> Result<F> {
    if a.dim() != b.dim() {
        return Err(Error::domain("shapes of different dimension"));
    }
    match (a, b) {
        (ShapeSet::Points { points: p }, ShapeSet::Points { points: q }) => {
            if p.is_empty() || q.is_empty() {
                return Err(Error::domain("empty point set"));
            }
            Ok(directed_points(p, q).max(directed_points(q, p)))
        }
        (ShapeSet::Limit(p), ShapeSet::Limit(q)) => {
            let pq = p.vertices().iter().map(|v| q.distance(v)).fold(F::zero(), F::max);
            let qp = q.vertices().iter().map(|v| p.distance(v)).fold(F::zero(), F::max);
            Ok(pq.max(qp))
        }
        (ShapeSet::Empirical { sites, t }, ShapeSet::Limit(p)) | (ShapeSet::Limit(p), ShapeSet::Empirical { sites, t }) => {
            Ok(cells_to_polytope(sites, *t, p).max(polytope_to_cells(p, sites, *t)))
        }
        _ => Err(Error::Unsupported("Hausdorff distance for this pair of shape kinds".into())),
    }
}

fn directed_points<F: Scalar>(from: &[Vec<F>], to: &[Vec<F>]) -> F {
    from.par_iter()
        .map(|p| to.iter().map(|q| norm(&sub(p, q))).fold(F::infinity(), F::min))
        .reduce(|| F::zero(), F::max)
}

fn cells_to_polytope<F: Scalar>(sites: &[Site], t: F, p: &Polytope<F>) -> F {
    let d = p.dim();
    let half = F::of(0.5);
    sites
        .iter()
        .map(|s| {
            let mut worst = F::zero();
            for corner in 0..1usize << d {
                let y: Vec<F> = (0..d)
                    .map(|a| {
                        let off = if corner >> a & 1 == 1 { half } else { -half };
                        (F::of(s.coords()[a] as f64) + off) / t
                    })
                    .collect();
                worst = worst.max(p.distance(&y));
            }
            worst
        })
        .fold(F::zero(), F::max)
}

struct CellIndex<F> {
    cells: HashMap<Vec<i64>, ()>,
    t: F,
    dim: usize,
}

impl<F: Scalar> CellIndex<F> {
    fn new(sites: &[Site], t: F) -> Self {
        CellIndex {
            cells: sites.iter().map(|s| (s.0.clone(), ())).collect(),
            t,
            dim: sites[0].dim(),
        }
    }

    /// Distance from `y` to the cell of `site`, in scaled units.
    fn cell_distance(&self, y: &[F], site: &[i64]) -> F {
        let half = F::of(0.5);
        let mut acc = F::zero();
        for a in 0..self.dim {
            let u = y[a] * self.t - F::of(site[a] as f64);
            let g = (u.abs() - half).max(F::zero());
            acc = acc + g * g;
        }
        acc.sqrt() / self.t
    }

    /// Distance from `y` to the union of cells, by rings of growing `L∞`
    /// radius around the nearest site.
    fn distance(&self, y: &[F]) -> F {
        let center: Vec<i64> = y.iter().map(|&c| (c * self.t).round().to_i64().unwrap_or(0)).collect();
        if self.cells.contains_key(&center) {
            return F::zero();
        }
        let mut best = F::infinity();
        for r in 1i64.. {
            // any cell at ring r is at least (r - 1) lattice units away
            if F::of((r - 1) as f64) / self.t >= best {
                break;
            }
            if r > 1 << 20 {
                break;
            }
            let side = (2 * r + 1) as usize;
            for k in 0..side.pow(self.dim as u32) {
                let mut kk = k;
                let off: Vec<i64> = (0..self.dim)
                    .map(|_| {
                        let c = (kk % side) as i64 - r;
                        kk /= side;
                        c
                    })
                    .collect();
                if off.iter().map(|c| c.abs()).max() != Some(r) {
                    continue;
                }
                let s: Vec<i64> = center.iter().zip(&off).map(|(a, b)| a + b).collect();
                if self.cells.contains_key(&s) {
                    best = best.min(self.cell_distance(y, &s));
                }
            }
        }
        best
    }
}

fn polytope_to_cells<F: Scalar>(p: &Polytope<F>, sites: &[Site], t: F) -> F {
    let index = CellIndex::new(sites, t);
    let d = p.dim();
    let h = F::one() / (F::of(2.0) * t);
    let mut lo = vec![F::infinity(); d];
    let mut hi = vec![F::neg_infinity(); d];
    for v in p.vertices() {
        for a in 0..d {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    let steps: Vec<i64> = (0..d)
        .map(|a| ((hi[a] - lo[a]) / h).ceil().to_i64().unwrap_or(0) + 2)
        .collect();
    let total: usize = steps.iter().map(|&s| (s + 1) as usize).product();
    let near = h * F::of(d as f64).sqrt();
    let from_vertices = p.vertices().iter().map(|v| index.distance(v)).fold(F::zero(), F::max);
    let from_grid = (0..total)
        .into_par_iter()
        .map(|mut k| {
            let g: Vec<F> = (0..d)
                .map(|a| {
                    let n = (steps[a] + 1) as usize;
                    let i = (k % n) as i64 - 1;
                    k /= n;
                    lo[a] + h * F::of(i as f64)
                })
                .collect();
            if p.contains(&g) {
                index.distance(&g)
            } else if p.distance(&g) <= near {
                index.distance(&p.project(&g))
            } else {
                F::zero()
            }
        })
        .reduce(|| F::zero(), F::max);
    from_vertices.max(from_grid)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HausdorffReport<F> {
    pub t_grid: Vec<F>,
    /// Ensemble mean of the distance at each `t`.
    pub distances: Vec<F>,
    pub ci: Vec<F>,
    /// Spearman correlation between `t` and the mean distance.
    pub trend: f64,
    pub strictly_decreasing: bool,
    pub replicas: usize,
}

impl<F: Scalar> HausdorffReport<F> {
    pub const CSV_HEADER: &'static str = "t,distance,ci,replicas";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for i in 0..self.t_grid.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                format_number(self.t_grid[i].as_f64()),
                format_number(self.distances[i].as_f64()),
                format_number(self.ci[i].as_f64()),
                self.replicas
            );
        }
        out
    }
}

/// `B_t / t` for one member: the chemical ball of radius `t` about the
/// origin, as displacements from the origin.
pub fn empirical_ball<F: Scalar>(ensemble: &Ensemble, member: usize, t: usize) -> Result<ShapeSet<F>> {
    let m = &ensemble.members[member];
    let balls = chemical_balls(&m.config, &m.labeling, &[t])?;
    ShapeSet::empirical(balls.into_iter().next().expect("one radius"), F::of_usize(t))
}

fn chemical_balls(
    config: &crate::lattice::Configuration,
    labeling: &crate::cluster::ClusterLabeling,
    radii: &[usize],
) -> Result<Vec<Vec<Site>>> {
    if !labeling.on_giant(0) {
        return Err(Error::precondition("the origin is not on the giant cluster"));
    }
    let spec = config.spec();
    let t_max = radii.iter().copied().max().unwrap_or(0);
    let dist = bfs_distances(config, 0, Some(t_max as u32));
    let reach = (spec.side() as i64 - 1) / 2;
    let mut balls = vec![Vec::new(); radii.len()];
    for (s, &d) in dist.iter().enumerate() {
        if d == u32::MAX {
            continue;
        }
        let x = if spec.is_wrapped() { spec.displacement(0, s) } else { spec.site(s) };
        if spec.is_wrapped() && x.linf() >= reach {
            return Err(Error::domain(format!("chemical ball of radius {t_max} reaches the box boundary")));
        }
        for (b, &t) in balls.iter_mut().zip(radii) {
            if d as usize <= t {
                b.push(x.clone());
            }
        }
    }
    Ok(balls)
}

/// Mean Hausdorff distance between `B_t / t` and `shape` over the ensemble,
/// for each `t`.
pub fn shape_convergence_scan<F: Scalar>(
    ensemble: &Ensemble,
    shape: &ShapeSet<F>,
    t_grid: &[usize],
) -> Result<HausdorffReport<F>> {
    if t_grid.is_empty() || t_grid.contains(&0) {
        return Err(Error::domain("t-grid must be nonempty and positive"));
    }
    if ensemble.is_empty() {
        return Err(Error::domain("empty ensemble"));
    }
    let per_replica: Vec<Vec<F>> = ensemble
        .members
        .par_iter()
        .map(|m| {
            let balls = chemical_balls(&m.config, &m.labeling, t_grid)?;
            balls
                .into_iter()
                .zip(t_grid)
                .map(|(b, &t)| hausdorff_distance(&ShapeSet::empirical(b, F::of_usize(t))?, shape))
                .collect::<Result<Vec<F>>>()
        })
        .collect::<Result<_>>()?;
    let mut distances = Vec::new();
    let mut ci = Vec::new();
    for j in 0..t_grid.len() {
        let col: Vec<f64> = per_replica.iter().map(|r| r[j].as_f64()).collect();
        let c = mean_ci(&col);
        distances.push(F::of(c.mean));
        ci.push(F::of(c.half_width));
    }
    let ts: Vec<f64> = t_grid.iter().map(|&t| t as f64).collect();
    let ds: Vec<f64> = distances.iter().map(|d| d.as_f64()).collect();
    Ok(HausdorffReport {
        t_grid: t_grid.iter().map(|&t| F::of_usize(t)).collect(),
        strictly_decreasing: ds.windows(2).all(|w| w[1] < w[0]),
        trend: if ds.len() >= 2 { spearman(&ts, &ds) } else { 0.0 },
        distances,
        ci,
        replicas: ensemble.len(),
    })
}

/// SVG of a planar limit shape with optional rescaled balls drawn as cells.
pub fn svg_overlay<F: Scalar>(shape: &ShapeSet<F>, snapshots: &[&ShapeSet<F>]) -> Result<String> {
    let poly = shape
        .as_polytope()
        .and_then(|p| p.polygon())
        .ok_or_else(|| Error::Unsupported("SVG output needs a planar limit shape".into()))?;
    let extent = poly
        .iter()
        .flat_map(|v| v.iter().map(|c| c.as_f64().abs()))
        .fold(1.0f64, f64::max)
        * 1.15;
    let size = 480.0;
    let k = size / (2.0 * extent);
    let px = |x: f64| (x + extent) * k;
    let py = |y: f64| (extent - y) * k;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let colors = ["#4c78a8", "#f58518", "#54a24b", "#b279a2", "#e45756", "#72b7b2"];
    for (i, snap) in snapshots.iter().enumerate() {
        let ShapeSet::Empirical { sites, t } = snap else {
            return Err(Error::Unsupported("snapshots must be empirical shapes".into()));
        };
        let t = t.as_f64();
        let w = k / t;
        let _ = writeln!(out, r#"<g fill="{}" fill-opacity="0.35" stroke="none">"#, colors[i % colors.len()]);
        for s in sites {
            let (x, y) = (s.coords()[0] as f64, s.coords()[1] as f64);
            let _ = writeln!(
                out,
                r#"<rect x="{:.3}" y="{:.3}" width="{w:.3}" height="{w:.3}"/>"#,
                px((x - 0.5) / t),
                py((y + 0.5) / t)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let pts: Vec<String> = poly
        .iter()
        .map(|v| format!("{:.3},{:.3}", px(v[0].as_f64()), py(v[1].as_f64())))
        .collect();
    let _ = writeln!(
        out,
        r##"<polygon points="{}" fill="none" stroke="#000000" stroke-width="1.5"/>"##,
        pts.join(" ")
    );
    out.push_str("</svg>\n");
    Ok(out)
}
