//! Laplace transform of hitting times, `a_λ(x, y) = -log E^x[exp(-λ H_y)]`
//! with `H_y = inf{n >= 0 : X_n = y}`.
//!
//! `u(v) = E^v[exp(-λ H_y)]` solves `u(y) = 1` and
//! `u(v) = e^{-λ} Σ_w P(v, w) u(w)` for the other cluster sites. Two solvers
//! are provided and checked against each other:
//!
//! * banded elimination in a breadth-first order from `y`, carried out on the
//!   row excesses instead of the diagonal so that every operation adds
//!   nonnegative numbers (no cancellation, relative accuracy even where
//!   `u` is astronomically small);
//! * Gauss-Seidel from `u = 0`, whose iterates increase to `u` and after `k`
//!   sweeps are within `e^{-λ(k+1)}` of it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DirectionSampler, WalkKernel, NONE};
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::rng::{self, tag};
use crate::scalar::{format_number, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplaceMethod {
    Exact,
    MonteCarlo,
}

impl LaplaceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            LaplaceMethod::Exact => "exact",
            LaplaceMethod::MonteCarlo => "monte-carlo",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceEstimate<F> {
    pub x: Site,
    pub y: Site,
    pub lambda: F,
    /// `a_λ(x, y)`, possibly `+∞`.
    pub value: F,
    pub method: LaplaceMethod,
    /// Standard error of `value` (delta method); zero for exact values.
    pub stderr: F,
    /// Upper bound on the mass of `E[exp(-λ H_y)]` lost to truncation.
    pub bias_bound: F,
    /// Max-norm residual of the linear system; zero for Monte Carlo.
    pub residual: F,
    /// `E[exp(-λ H_y)]` itself.
    pub mean: F,
    pub flag: Option<String>,
}

impl<F: Scalar> LaplaceEstimate<F> {
    fn exact(x: Site, y: Site, lambda: F, mean: F, residual: F) -> Self {
        LaplaceEstimate {
            x,
            y,
            lambda,
            value: F::zero() - mean.ln(),
            method: LaplaceMethod::Exact,
            stderr: F::zero(),
            bias_bound: F::zero(),
            residual,
            mean,
            flag: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    /// Bound on how far truncation can push `value` above the untruncated
    /// estimate: `log(1 + bias_bound / mean)`.
    pub fn value_bias_bound(&self) -> F {
        (F::one() + self.bias_bound / self.mean).ln()
    }

    pub const CSV_HEADER: &'static str = "d,L,p,q,lambda,x,y,method,value,stderr,bias_bound,seed";

    pub fn csv_row(&self, dim: usize, side: usize, p: f64, q: f64, seed: u64) -> String {
        format!(
            "{dim},{side},{},{},{},{},{},{},{},{},{},{seed}",
            format_number(p),
            format_number(q),
            format_number(self.lambda.as_f64()),
            self.x.csv_token(),
            self.y.csv_token(),
            self.method.as_str(),
            format_number(self.value.as_f64()),
            format_number(self.stderr.as_f64()),
            format_number(self.bias_bound.as_f64()),
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    /// Banded elimination when its cost is within `direct_budget`, else
    /// Gauss-Seidel.
    #[default]
    Auto,
    Direct,
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Relative accuracy required at the watched sources.
    pub tolerance: f64,
    /// Largest cluster accepted at all.
    pub max_sites: usize,
    /// Largest `sites * bandwidth^2 / 2` for which `Auto` eliminates.
    pub direct_budget: f64,
    /// Largest band storage, in entries, for the direct route.
    pub max_band_entries: usize,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolverMethod::Auto,
            tolerance: 1e-10,
            max_sites: 1 << 22,
            direct_budget: 3e7,
            max_band_entries: 1 << 25,
            max_sweeps: 1_000_000,
        }
    }
}

/// `u(v) = E^v[exp(-λ H_y)]` for every site of the kernel's cluster.
#[derive(Clone, Debug)]
pub struct HittingField<F> {
    pub target: Site,
    pub lambda: F,
    /// Indexed like `WalkKernel::sites`.
    pub values: Vec<F>,
    pub residual: F,
    pub method: SolverMethod,
}

/// Solves for `E^v[exp(-λ H_y)]` at all cluster sites `v`.
///
/// `watch` lists sources whose values must be accurate to `tolerance`
/// relative error when the iterative route is used; the direct route is
/// accurate everywhere. `y` off the kernel's cluster gives the zero field.
pub fn hitting_field<F: Scalar>(
    kernel: &WalkKernel<'_>,
    y: &Site,
    lambda: F,
    watch: &[Site],
    opts: &SolverOptions,
) -> Result<HittingField<F>> {
    if !(lambda >= F::zero()) {
        return Err(Error::domain(format!("λ must be nonnegative, got {lambda}")));
    }
    let spec = kernel.config().spec();
    let y_index = spec.index_of(y)?;
    let mut watch_local = Vec::with_capacity(watch.len());
    for w in watch {
        let s = spec.index_of(w)?;
        if let Some(l) = kernel.local_index(s) {
            watch_local.push(l);
        }
    }
    let m = kernel.len();
    let Some(target) = kernel.local_index(y_index) else {
        return Ok(HittingField {
            target: y.clone(),
            lambda,
            values: vec![F::zero(); m],
            residual: F::zero(),
            method: opts.method,
        });
    };
    if m > opts.max_sites {
        return Err(Error::Resource(format!(
            "cluster of {m} sites exceeds the exact solver limit of {}; use the Monte Carlo estimator",
            opts.max_sites
        )));
    }
    if lambda == F::zero() {
        return Ok(HittingField {
            target: y.clone(),
            lambda,
            values: vec![F::one(); m],
            residual: F::zero(),
            method: opts.method,
        });
    }
    let order = bfs_order(kernel, target);
    let mut pos = vec![u32::MAX; m];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i as u32;
    }
    let bw = bandwidth(kernel, &order, &pos);
    let n = order.len();
    let direct_cost = n as f64 * (bw * bw) as f64 / 2.0;
    let band_entries = n.saturating_mul(bw + 1);
    let method = match opts.method {
        SolverMethod::Auto if direct_cost <= opts.direct_budget && band_entries <= opts.max_band_entries => {
            SolverMethod::Direct
        }
        SolverMethod::Auto => SolverMethod::Iterative,
        SolverMethod::Direct if band_entries > opts.max_band_entries => {
            return Err(Error::Resource(format!(
                "band storage of {band_entries} entries exceeds {}; use the iterative route",
                opts.max_band_entries
            )));
        }
        other => other,
    };
    let values = match method {
        SolverMethod::Direct => solve_banded(kernel, target, lambda, &order, &pos, bw),
        _ => solve_gauss_seidel(kernel, target, lambda, &order, &watch_local, opts)?,
    };
    let residual = residual(kernel, target, lambda, &values);
    Ok(HittingField {
        target: y.clone(),
        lambda,
        values,
        residual,
        method,
    })
}

impl<F: Scalar> HittingField<F> {
    /// `a_λ(x, target)` for a box site `x` of the kernel's cluster.
    pub fn exponent(&self, kernel: &WalkKernel<'_>, x: usize) -> Option<F> {
        kernel.local_index(x).map(|l| F::zero() - self.values[l].ln())
    }
}

/// `a_λ(x, y)` by solving the absorbing system.
///
/// `x` must lie on the kernel's cluster; `y` off it gives `+∞`. Fails with a
/// resource error when the cluster exceeds the solver limits, and when the
/// answer underflows the scalar type.
pub fn hitting_laplace_exact<F: Scalar>(
    kernel: &WalkKernel<'_>,
    x: &Site,
    y: &Site,
    lambda: F,
    opts: &SolverOptions,
) -> Result<LaplaceEstimate<F>> {
    let xi = kernel.require(x)?;
    if x == y {
        return Ok(LaplaceEstimate::exact(x.clone(), y.clone(), lambda, F::one(), F::zero()));
    }
    let field = hitting_field(kernel, y, lambda, std::slice::from_ref(x), opts)?;
    let mean = field.values[xi];
    let on_cluster = kernel.contains(kernel.config().spec().index_of(y)?);
    if on_cluster && mean == F::zero() {
        return Err(Error::Resource(format!(
            "E[exp(-λH)] underflows at λ = {lambda} between {x} and {y}"
        )));
    }
    let mut est = LaplaceEstimate::exact(x.clone(), y.clone(), lambda, mean, field.residual);
    if !on_cluster {
        est.flag = Some("disconnected".to_string());
    }
    Ok(est)
}

fn bfs_order(kernel: &WalkKernel<'_>, target: usize) -> Vec<usize> {
    let m = kernel.len();
    let mut seen = vec![false; m];
    seen[target] = true;
    let mut queue = std::collections::VecDeque::from([target]);
    let mut order = Vec::with_capacity(m.saturating_sub(1));
    while let Some(v) = queue.pop_front() {
        for &t in kernel.targets(v) {
            if t != NONE && !seen[t as usize] {
                seen[t as usize] = true;
                order.push(t as usize);
                queue.push_back(t as usize);
            }
        }
    }
    order
}

fn bandwidth(kernel: &WalkKernel<'_>, order: &[usize], pos: &[u32]) -> usize {
    let mut bw = 0;
    for (i, &v) in order.iter().enumerate() {
        for &t in kernel.targets(v) {
            if t != NONE && pos[t as usize] != u32::MAX {
                bw = bw.max((pos[t as usize] as usize).abs_diff(i));
            }
        }
    }
    bw
}

/// Elimination on `A = I - e^{-λ} P` restricted to the non-target sites.
///
/// `A` is symmetric (so is `P`), so only the upper band is stored; row `k`
/// keeps columns `k+1 ..= k+bw` at offsets `1..=bw`. Instead of the diagonal
/// each row carries its excess `s_k = Σ_j A_kj > 0`; the diagonal is
/// recovered as `s_k + Σ_{j>k} |A_kj|`. Eliminating pivot `k` maps
/// `s_i -> s_i + |f| s_k` and `A_ij -> A_ij - |f| |A_kj|`, sums of terms of one
/// sign.
fn solve_banded<F: Scalar>(
    kernel: &WalkKernel<'_>,
    target: usize,
    lambda: F,
    order: &[usize],
    pos: &[u32],
    bw: usize,
) -> Vec<F> {
    let n = order.len();
    let w = bw + 1;
    let decay = (-lambda).exp();
    let unit = decay / F::of_usize(kernel.degree());
    let mut band = vec![F::zero(); n * w];
    let mut excess = vec![F::zero(); n];
    let mut rhs = vec![F::zero(); n];
    for (i, &v) in order.iter().enumerate() {
        // s_i = 1 - e^{-λ} (1 - P(v, y)) = (1 - e^{-λ}) + e^{-λ} P(v, y)
        let mut to_target = F::zero();
        for &t in kernel.targets(v) {
            if t == NONE {
                continue;
            }
            if t as usize == target {
                to_target = to_target + unit;
            } else {
                let j = pos[t as usize] as usize;
                if j > i {
                    band[i * w + (j - i)] = band[i * w + (j - i)] - unit;
                }
            }
        }
        excess[i] = -(-lambda).exp_m1() + to_target;
        rhs[i] = to_target;
    }
    let mut diag = vec![F::zero(); n];
    for k in 0..n {
        let row = k * w;
        let off: F = band[row + 1..row + w].iter().map(|a| -*a).sum();
        let d = excess[k] + off;
        diag[k] = d;
        let reach = bw.min(n - 1 - k);
        for di in 1..=reach {
            let a_ik = band[row + di];
            if a_ik == F::zero() {
                continue;
            }
            let g = -a_ik / d; // |f|
            let i = k + di;
            excess[i] = excess[i] + g * excess[k];
            rhs[i] = rhs[i] + g * rhs[k];
            let irow = i * w;
            for dj in di + 1..=reach {
                let a_kj = band[row + dj];
                if a_kj != F::zero() {
                    let slot = irow + (dj - di);
                    band[slot] = band[slot] + g * a_kj;
                }
            }
        }
    }
    let mut sol = vec![F::zero(); n];
    for k in (0..n).rev() {
        let row = k * w;
        let reach = bw.min(n - 1 - k);
        let mut acc = rhs[k];
        for dj in 1..=reach {
            acc = acc - band[row + dj] * sol[k + dj];
        }
        sol[k] = acc / diag[k];
    }
    let mut values = vec![F::zero(); kernel.len()];
    values[target] = F::one();
    for (i, &v) in order.iter().enumerate() {
        values[v] = sol[i];
    }
    values
}

/// Gauss-Seidel sweeps in breadth-first order from the target.
///
/// Stops once the a priori bound `e^{-λ(k+1)}` or the contraction bound
/// `ρ/(1-ρ) |u_k - u_{k-1}|_∞`, `ρ = e^{-λ}`, is below `tolerance` times the
/// smallest watched value (all reached sites when nothing is watched).
fn solve_gauss_seidel<F: Scalar>(
    kernel: &WalkKernel<'_>,
    target: usize,
    lambda: F,
    order: &[usize],
    watch: &[usize],
    opts: &SolverOptions,
) -> Result<Vec<F>> {
    let decay = (-lambda).exp();
    let deg = F::of_usize(kernel.degree());
    let unit = decay / deg;
    let tol = F::of(opts.tolerance);
    let contraction = decay / (-(-lambda).exp_m1());
    let mut u = vec![F::zero(); kernel.len()];
    u[target] = F::one();
    let scale: Vec<F> = order
        .iter()
        .map(|&v| F::one() / (F::one() - decay * F::of_usize(kernel.stay_count(v)) / deg))
        .collect();
    for sweep in 1..=opts.max_sweeps {
        let mut change = F::zero();
        for (i, &v) in order.iter().enumerate() {
            let mut acc = F::zero();
            for &t in kernel.targets(v) {
                if t != NONE {
                    acc = acc + u[t as usize];
                }
            }
            let new = unit * acc * scale[i];
            change = change.max(new - u[v]);
            u[v] = new;
        }
        let a_priori = (-lambda * F::of_usize(sweep + 1)).exp();
        let bound = a_priori.min(contraction * change);
        let floor = if watch.is_empty() {
            order.iter().map(|&v| u[v]).fold(F::infinity(), F::min)
        } else {
            watch.iter().map(|&v| u[v]).fold(F::infinity(), F::min)
        };
        if bound <= tol * floor {
            return Ok(u);
        }
    }
    Err(Error::Resource(format!(
        "Gauss-Seidel did not reach relative accuracy {} in {} sweeps",
        opts.tolerance, opts.max_sweeps
    )))
}

fn residual<F: Scalar>(kernel: &WalkKernel<'_>, target: usize, lambda: F, u: &[F]) -> F {
    let decay = (-lambda).exp();
    let unit = decay / F::of_usize(kernel.degree());
    let mut worst = F::zero();
    for v in 0..kernel.len() {
        if v == target {
            continue;
        }
        let mut acc = F::zero();
        for &t in kernel.targets(v) {
            acc = acc + if t == NONE { u[v] } else { u[t as usize] };
        }
        worst = worst.max((u[v] - unit * acc).abs());
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McOptions {
    pub walks: usize,
    pub horizon: usize,
    pub seed: u64,
    pub replica: u64,
    /// Walks stop once `exp(-λ t)` drops below this; it only shortens the
    /// effective horizon and is accounted for in the bias bound.
    pub weight_floor: f64,
}

impl McOptions {
    pub fn new(walks: usize, horizon: usize, seed: u64) -> Self {
        McOptions {
            walks,
            horizon,
            seed,
            replica: 0,
            weight_floor: 1e-20,
        }
    }

    pub fn with_replica(mut self, replica: u64) -> Self {
        self.replica = replica;
        self
    }
}

const MC_BATCH: usize = 4096;

/// Monte Carlo estimate of `a_λ(x, y)` from `walks` independent walks, each
/// stopped at the effective horizon `h`; hits after `h` count as zero, so
/// the mean of `exp(-λ H)` is low by at most `e^{-λ(h+1)}` (`bias_bound`).
///
/// `λ = 0` is answered analytically (0 on a connected pair). A zero mean
/// gives `+∞` and a flag.
pub fn hitting_laplace_mc<F: Scalar>(
    kernel: &WalkKernel<'_>,
    x: &Site,
    y: &Site,
    lambda: F,
    opts: &McOptions,
) -> Result<LaplaceEstimate<F>> {
    if !(lambda >= F::zero()) {
        return Err(Error::domain(format!("λ must be nonnegative, got {lambda}")));
    }
    if opts.walks == 0 {
        return Err(Error::domain("at least one walk is required"));
    }
    let start = kernel.require(x)?;
    let spec = kernel.config().spec();
    let target = kernel.local_index(spec.index_of(y)?);
    let lam = lambda.as_f64();
    let base = LaplaceEstimate {
        x: x.clone(),
        y: y.clone(),
        lambda,
        value: F::zero(),
        method: LaplaceMethod::MonteCarlo,
        stderr: F::zero(),
        bias_bound: F::zero(),
        residual: F::zero(),
        mean: F::one(),
        flag: None,
    };
    let Some(target) = target else {
        return Ok(LaplaceEstimate {
            value: F::infinity(),
            mean: F::zero(),
            flag: Some("insufficient horizon or disconnected".to_string()),
            ..base
        });
    };
    if start == target || lam == 0.0 {
        return Ok(base);
    }
    let cutoff = (-opts.weight_floor.ln() / lam).ceil();
    let horizon = if cutoff < opts.horizon as f64 { cutoff as usize } else { opts.horizon };
    let weights: Vec<f64> = (0..=horizon).map(|t| (-lam * t as f64).exp()).collect();
    let batches = opts.walks.div_ceil(MC_BATCH);
    let sums: Vec<(f64, f64)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(opts.seed, opts.replica, tag::LAPLACE_MC);
            rng.set_stream(b as u64);
            let mut dirs = DirectionSampler::new(kernel.degree());
            let count = MC_BATCH.min(opts.walks - b * MC_BATCH);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let mut at = start;
                for &w in &weights[1..] {
                    let t = kernel.targets(at)[dirs.next(&mut rng)];
                    if t != NONE {
                        at = t as usize;
                    }
                    if at == target {
                        s += w;
                        s2 += w * w;
                        break;
                    }
                }
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = opts.walks as f64;
    let mean = s / n;
    let var = if opts.walks > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    let se_mean = (var / n).sqrt();
    let bias = (-lam * (horizon as f64 + 1.0)).exp();
    if mean == 0.0 {
        return Ok(LaplaceEstimate {
            value: F::infinity(),
            mean: F::zero(),
            stderr: F::infinity(),
            bias_bound: F::of(bias),
            flag: Some("insufficient horizon or disconnected".to_string()),
            ..base
        });
    }
    Ok(LaplaceEstimate {
        value: F::of(-mean.ln()),
        stderr: F::of(se_mean / mean),
        bias_bound: F::of(bias),
        mean: F::of(mean),
        ..base
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{chemical_distance, label_clusters, Distance};
    use crate::lattice::{Boundary, BoxSpec, Configuration, Mode};
    use crate::samplers::sample_bernoulli;

    /// Box with a single open bond between 0 and e1.
    fn two_sites() -> Configuration {
        let b = BoxSpec::new(2, 4, Mode::Bond, Boundary::Free).unwrap();
        let mut c = Configuration::closed(b);
        c.set_state(b.bond_index(0, 0).unwrap(), true);
        c
    }

    fn both<F: Scalar>(k: &WalkKernel<'_>, x: &Site, y: &Site, lambda: F) -> (F, F) {
        let d = SolverOptions { method: SolverMethod::Direct, ..Default::default() };
        let i = SolverOptions { method: SolverMethod::Iterative, ..Default::default() };
        (
            hitting_laplace_exact(k, x, y, lambda, &d).unwrap().value,
            hitting_laplace_exact(k, x, y, lambda, &i).unwrap().value,
        )
    }

    #[test]
    fn two_site_closed_form() {
        // E[e^{-λH}] = (e^{-λ}/4) / (1 - 3e^{-λ}/4) = 1/5 at λ = log 2
        let c = two_sites();
        let lab = label_clusters(&c);
        let k = WalkKernel::on_giant(&c, &lab).unwrap();
        let (x, y) = (Site::new([0, 0]), Site::new([1, 0]));
        let (direct, iter) = both(&k, &x, &y, 2f64.ln());
        assert!((direct - 5f64.ln()).abs() < 1e-13);
        assert!((iter - 5f64.ln()).abs() < 1e-10);
        let f: f32 = hitting_laplace_exact(&k, &x, &y, 2f32.ln(), &SolverOptions::default()).unwrap().value;
        assert!((f - 5f32.ln()).abs() < 1e-5);
    }

    #[test]
    fn zero_lambda_same_site_and_disconnected() {
        let c = two_sites();
        let lab = label_clusters(&c);
        let k = WalkKernel::on_giant(&c, &lab).unwrap();
        let (x, y) = (Site::new([0, 0]), Site::new([1, 0]));
        let o = SolverOptions::default();
        assert_eq!(hitting_laplace_exact(&k, &x, &y, 0.0, &o).unwrap().value, 0.0);
        assert_eq!(hitting_laplace_exact(&k, &x, &x, 3.0, &o).unwrap().value, 0.0);
        let far = hitting_laplace_exact(&k, &x, &Site::new([3, 3]), 1.0, &o).unwrap();
        assert_eq!(far.value, f64::INFINITY);
        assert!(hitting_laplace_exact(&k, &Site::new([3, 3]), &x, 1.0, &o).is_err());
        assert!(hitting_laplace_exact(&k, &x, &y, -1.0, &o).is_err());
    }

    #[test]
    fn path_graph_against_transfer_recursion() {
        // on a segment 0..n of a free box the walk from i to n has
        // E[s^{H}] = φ_i with φ_n = 1 and the three-term recursion below;
        // solve it by shooting from the reflecting end
        let n = 12usize;
        let b = BoxSpec::new(2, n + 1, Mode::Site, Boundary::Free).unwrap();
        let mut c = Configuration::closed(b);
        for i in 0..=n {
            c.set_state(i, true);
        }
        let lab = label_clusters(&c);
        let k = WalkKernel::on_giant(&c, &lab).unwrap();
        let lambda = 0.3f64;
        let s = (-lambda).exp();
        // g_0 = 1, g_1 = g_0 (1 - 3s/4) / (s/4), g_{i+1} = (g_i (1 - s/2) - g_{i-1} s/4) / (s/4)
        let mut g = vec![1.0f64, (1.0 - 0.75 * s) / (0.25 * s)];
        for i in 1..n {
            g.push((g[i] * (1.0 - 0.5 * s) - g[i - 1] * 0.25 * s) / (0.25 * s));
        }
        let y = Site::new([n as i64, 0]);
        for i in 0..n {
            let expect = (g[n] / g[i]).ln();
            let (d, it) = both(&k, &Site::new([i as i64, 0]), &y, lambda);
            assert!((d - expect).abs() < 1e-12 * expect.max(1.0), "{i}: {d} vs {expect}");
            assert!((it - expect).abs() < 1e-9 * expect.max(1.0));
        }
    }

    #[test]
    fn routes_agree_and_bounds_hold_on_random_clusters() {
        for seed in 0..6 {
            let b = BoxSpec::torus(2, 14).unwrap();
            let c = sample_bernoulli(&b, 0.65, seed, 0);
            let lab = label_clusters(&c);
            let k = WalkKernel::on_giant(&c, &lab).unwrap();
            let sites = k.sites();
            let x = b.site(sites[0]);
            let y = b.site(sites[sites.len() / 2]);
            let dist = match chemical_distance(&c, &x, &y).unwrap() {
                Distance::Finite(v) => v as f64,
                Distance::Infinite => unreachable!(),
            };
            let l1 = b.displacement(sites[0], sites[sites.len() / 2]).l1() as f64;
            for lambda in [0.05f64, 0.5, 2.0, 6.0] {
                let (d, it) = both(&k, &x, &y, lambda);
                assert!((d - it).abs() <= 1e-9 * d, "seed {seed} λ {lambda}: {d} vs {it}");
                assert!(d >= lambda * l1 - 1e-12);
                assert!(d <= (lambda + 4f64.ln()) * dist + 1e-12);
                let est = hitting_laplace_exact(&k, &x, &y, lambda, &SolverOptions::default()).unwrap();
                assert!(est.residual <= 1e-10);
            }
        }
    }

    #[test]
    fn field_matches_pointwise_solves() {
        let b = BoxSpec::torus(2, 10).unwrap();
        let c = sample_bernoulli(&b, 0.7, 3, 0);
        let lab = label_clusters(&c);
        let k = WalkKernel::on_giant(&c, &lab).unwrap();
        let y = b.site(k.sites()[5]);
        let f: HittingField<f64> = hitting_field(&k, &y, 1.0, &[], &SolverOptions::default()).unwrap();
        for &s in k.sites().iter().step_by(7) {
            let a = hitting_laplace_exact(&k, &b.site(s), &y, 1.0, &SolverOptions::default()).unwrap();
            assert!((f.exponent(&k, s).unwrap() - a.value).abs() < 1e-12 * a.value.max(1.0));
        }
    }

    #[test]
    fn tiny_values_keep_relative_accuracy() {
        // 60-site segment at λ = 8: u ~ e^{-600}, far below f64 epsilon
        let n = 60usize;
        let b = BoxSpec::new(2, n + 1, Mode::Site, Boundary::Free).unwrap();
        let mut c = Configuration::closed(b);
        for i in 0..=n {
            c.set_state(i, true);
        }
        let lab = label_clusters(&c);
        let k = WalkKernel::on_giant(&c, &lab).unwrap();
        let (x, y) = (Site::new([0, 0]), Site::new([n as i64, 0]));
        let (d, it) = both(&k, &x, &y, 8.0f64);
        assert!(d > 480.0 && d.is_finite());
        assert!((d - it).abs() < 1e-9 * d);
    }

    #[test]
    fn direct_route_respects_band_limit() {
        let b = BoxSpec::torus(2, 8).unwrap();
        let c = Configuration::open(b);
        let lab = label_clusters(&c);
        let k = WalkKernel::on_giant(&c, &lab).unwrap();
        let o = SolverOptions { method: SolverMethod::Direct, max_band_entries: 10, ..Default::default() };
        let r = hitting_laplace_exact(&k, &Site::zero(2), &Site::new([3, 3]), 1.0f64, &o);
        assert!(matches!(r, Err(Error::Resource(_))));
        let o = SolverOptions { max_sites: 10, ..Default::default() };
        let r = hitting_laplace_exact(&k, &Site::zero(2), &Site::new([3, 3]), 1.0f64, &o);
        assert!(matches!(r, Err(Error::Resource(_))));
    }

    #[test]
    fn mc_two_site_and_edge_cases() {
        let c = two_sites();
        let lab = label_clusters(&c);
        let k = WalkKernel::on_giant(&c, &lab).unwrap();
        let (x, y) = (Site::new([0, 0]), Site::new([1, 0]));
        let o = McOptions::new(200_000, 1000, 11);
        let est: LaplaceEstimate<f64> = hitting_laplace_mc(&k, &x, &y, 2f64.ln(), &o).unwrap();
        assert!((est.value - 5f64.ln()).abs() < 3.0 * est.stderr + est.value_bias_bound());
        assert_eq!(hitting_laplace_mc::<f64>(&k, &x, &x, 1.0, &o).unwrap().value, 0.0);
        assert_eq!(hitting_laplace_mc::<f64>(&k, &x, &y, 0.0, &o).unwrap().value, 0.0);
        let short = McOptions::new(100, 0, 1);
        let e: LaplaceEstimate<f64> = hitting_laplace_mc(&k, &x, &y, 1.0, &short).unwrap();
        assert_eq!(e.value, f64::INFINITY);
        assert!(e.flag.is_some());
        let again: LaplaceEstimate<f64> = hitting_laplace_mc(&k, &x, &y, 2f64.ln(), &o).unwrap();
        assert_eq!(again, est);
    }

    #[test]
    fn csv_row_layout() {
        let c = two_sites();
        let lab = label_clusters(&c);
        let k = WalkKernel::on_giant(&c, &lab).unwrap();
        let e = hitting_laplace_exact(&k, &Site::new([0, 0]), &Site::new([3, 3]), 1.0f64, &SolverOptions::default())
            .unwrap();
        assert_eq!(e.csv_row(2, 4, 0.5, 1.0, 9), "2,4,0.5,1,1,0;0,3;3,exact,inf,0,0,9");
        assert_eq!(LaplaceEstimate::<f64>::CSV_HEADER.split(',').count(), 12);
    }
}
