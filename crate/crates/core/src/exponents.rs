//! Estimators for the Lyapunov exponents `α_λ(x)`, the directional constants
//! `μ(x)`, the rate function `I(x) = sup_λ (α_λ(x) - λ)` and the triple
//! density `b_{z1,z2}`, plus the property checks they should satisfy.
//!
//! Both `α̂_λ(x)` and `μ̂(x)` are ensemble means of per-replica ratios
//! `a_λ(0, T^(n) x) / T^(n)` and `D(0, T^(n) x) / T^(n)` along the
//! regeneration sequence of `x`, with Student-t intervals over replicas.

use rayon::prelude::*;
use serde::Serialize;

use crate::cluster::ChemicalMetric;
use crate::ensemble::{Ensemble, Member};
use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::scalar::{format_number, Scalar};
use crate::stats::{mean_ci, MeanCi};
use crate::walk::{
    hitting_field, hitting_laplace_mc, regeneration_sequence, McOptions, SolverOptions, WalkKernel,
};

/// Safety factor applied to the empirical constant bounding `E[D(0, T_x x)] / |x|_1`.
pub const C3_SAFETY: f64 = 1.2;

/// Slope of `λ -> α̂_λ(x)` above which the last grid segment counts as still
/// increasing `α̂_λ(x) - λ`.
pub const DIVERGENCE_SLACK: f64 = 0.05;

/// `{0} ∪ {0.05 · 2^k : k = 0..8}`.
pub fn default_lambda_grid<F: Scalar>() -> Vec<F> {
    std::iter::once(F::zero())
        .chain((0..=8).map(|k| F::of(0.05 * f64::from(1u32 << k))))
        .collect()
}

/// `1, 2, 4, .., n` followed by `n` itself if it is not a power of two.
pub fn default_trace(n: usize) -> Vec<usize> {
    let mut t: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2))
        .take_while(|&k| k <= n)
        .collect();
    if t.last() != Some(&n) {
        t.push(n);
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TracePoint<F> {
    pub n: usize,
    /// Mean of the per-replica ratio over `T^(n)`.
    pub ratio: F,
    pub ratio_ci: F,
    /// `ℙ̂(Ω₀)` times the mean of the value over `n`.
    pub scaled_mean: F,
    pub scaled_mean_ci: F,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleMeta {
    pub dim: usize,
    pub side: usize,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    pub replicas: usize,
    pub attempts: u64,
    pub omega0: f64,
}

impl EnsembleMeta {
    pub fn of(e: &Ensemble) -> Self {
        EnsembleMeta {
            dim: e.spec_box.dim(),
            side: e.spec_box.side(),
            p: e.sampler.p,
            q: e.sampler.q,
            seed: e.sampler.seed,
            replicas: e.len(),
            attempts: e.attempts(),
            omega0: e.omega0_probability(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaCurve<F> {
    pub direction: Site,
    pub lambdas: Vec<F>,
    /// `α̂_λ(x)` at the deepest regeneration, per λ.
    pub estimates: Vec<F>,
    pub ci: Vec<F>,
    pub traces: Vec<Vec<TracePoint<F>>>,
    /// Per-replica ratios at the deepest regeneration, per λ.
    #[serde(skip)]
    pub samples: Vec<Vec<F>>,
    pub n: usize,
    /// Solves answered by the Monte Carlo fallback.
    pub fallbacks: usize,
    pub meta: EnsembleMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MuEstimate<F> {
    pub direction: Site,
    pub estimate: F,
    pub ci: F,
    pub trace: Vec<TracePoint<F>>,
    #[serde(skip)]
    pub samples: Vec<F>,
    /// Mean of `D(0, T_x x) / |x|_1`.
    pub first_distance: F,
    pub n: usize,
    pub meta: EnsembleMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFunction<F> {
    pub direction: Site,
    /// The rate function is evaluated at `scale · direction`.
    pub scale: F,
    pub value: F,
    pub lambda_star: F,
    pub diverges: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TripleDensity<F> {
    pub z1: Site,
    pub z2: Site,
    /// `(n, Cesàro mean up to n, CI half-width)`.
    pub trace: Vec<(usize, F, F)>,
    pub estimate: F,
    pub ci: F,
    pub meta: EnsembleMeta,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaOptions {
    pub solver: SolverOptions,
    /// Used when the exact solver reports a resource error.
    pub fallback: Option<McOptions>,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        AlphaOptions {
            solver: SolverOptions::default(),
            fallback: None,
        }
    }
}

fn check_direction(e: &Ensemble, x: &Site, n: usize) -> Result<()> {
    if x.dim() != e.spec_box.dim() || x.is_zero() {
        return Err(Error::domain(format!("direction {x} must be nonzero of dimension {}", e.spec_box.dim())));
    }
    if n == 0 {
        return Err(Error::domain("regeneration depth must be at least 1"));
    }
    if e.is_empty() {
        return Err(Error::domain("empty ensemble"));
    }
    Ok(())
}

fn ci_of<F: Scalar>(values: &[F]) -> (F, F) {
    let v: Vec<f64> = values.iter().map(|x| x.as_f64()).collect();
    let MeanCi { mean, half_width, .. } = mean_ci(&v);
    (F::of(mean), F::of(half_width))
}

fn trace_points<F: Scalar>(trace: &[usize], ratios: &[Vec<F>], per_n: &[Vec<F>], omega0: f64) -> Vec<TracePoint<F>> {
    trace
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let r: Vec<F> = ratios.iter().map(|v| v[j]).collect();
            let s: Vec<F> = per_n.iter().map(|v| v[j] * F::of(omega0)).collect();
            let (ratio, ratio_ci) = ci_of(&r);
            let (scaled_mean, scaled_mean_ci) = ci_of(&s);
            TracePoint {
                n,
                ratio,
                ratio_ci,
                scaled_mean,
                scaled_mean_ci,
            }
        })
        .collect()
}

/// `a_λ(0, T^(k) x)` for every λ and every `k` in `trace`, one replica.
fn replica_alpha<F: Scalar>(
    m: &Member,
    x: &Site,
    lambdas: &[F],
    trace: &[usize],
    opts: &AlphaOptions,
) -> Result<(Vec<Vec<F>>, Vec<usize>, usize)> {
    let n = *trace.iter().max().expect("nonempty trace");
    let reg = regeneration_sequence(&m.config, &m.labeling, x, n)?;
    let kernel = WalkKernel::on_giant(&m.config, &m.labeling)?;
    let spec = m.config.spec();
    let origin = Site::zero(spec.dim());
    let times: Vec<usize> = trace.iter().map(|&k| reg.time(k)).collect();
    let mut fallbacks = 0;
    let mut values = vec![vec![F::zero(); trace.len()]; lambdas.len()];
    for (j, &k) in trace.iter().enumerate() {
        let target = spec.site(reg.sites[k - 1]);
        for (i, &lambda) in lambdas.iter().enumerate() {
            values[i][j] = match hitting_field(&kernel, &target, lambda, std::slice::from_ref(&origin), &opts.solver) {
                Ok(field) => field.exponent(&kernel, 0).expect("origin on the giant"),
                Err(Error::Resource(msg)) => {
                    let mc = opts.fallback.ok_or(Error::Resource(msg))?;
                    fallbacks += 1;
                    let mc = mc.with_replica(m.replica);
                    hitting_laplace_mc(&kernel, &origin, &target, lambda, &mc)?.value
                }
                Err(e) => return Err(e),
            };
        }
    }
    Ok((values, times, fallbacks))
}

/// `α̂_λ(x)` on a λ-grid from an ensemble conditioned on the origin being on
/// the giant cluster, with traces over `trace` regeneration depths (the
/// deepest is the reported estimate).
pub fn estimate_alpha<F: Scalar>(
    ensemble: &Ensemble,
    x: &Site,
    lambdas: &[F],
    trace: &[usize],
    opts: &AlphaOptions,
) -> Result<AlphaCurve<F>> {
    let n = trace.iter().copied().max().unwrap_or(0);
    check_direction(ensemble, x, n)?;
    if trace.contains(&0) {
        return Err(Error::domain("trace depths must be at least 1"));
    }
    if lambdas.iter().any(|l| !(*l >= F::zero())) {
        return Err(Error::domain("λ-grid must be nonnegative"));
    }
    let per_replica: Vec<(Vec<Vec<F>>, Vec<usize>, usize)> = ensemble
        .members
        .par_iter()
        .map(|m| replica_alpha(m, x, lambdas, trace, opts))
        .collect::<Result<_>>()?;
    let omega0 = ensemble.omega0_probability();
    let last = trace.iter().position(|&k| k == n).expect("max in trace");
    let mut estimates = Vec::new();
    let mut ci = Vec::new();
    let mut traces = Vec::new();
    let mut samples = Vec::new();
    for i in 0..lambdas.len() {
        let ratios: Vec<Vec<F>> = per_replica
            .iter()
            .map(|(v, t, _)| v[i].iter().zip(t).map(|(&a, &tk)| a / F::of_usize(tk)).collect())
            .collect();
        let per_n: Vec<Vec<F>> = per_replica
            .iter()
            .map(|(v, _, _)| v[i].iter().zip(trace).map(|(&a, &k)| a / F::of_usize(k)).collect())
            .collect();
        let tp = trace_points(trace, &ratios, &per_n, omega0);
        estimates.push(tp[last].ratio);
        ci.push(tp[last].ratio_ci);
        samples.push(ratios.iter().map(|r| r[last]).collect());
        traces.push(tp);
    }
    Ok(AlphaCurve {
        direction: x.clone(),
        lambdas: lambdas.to_vec(),
        estimates,
        ci,
        traces,
        samples,
        n,
        fallbacks: per_replica.iter().map(|r| r.2).sum(),
        meta: EnsembleMeta::of(ensemble),
    })
}

/// `μ̂(x)` from chemical distances along the regeneration sequence.
pub fn estimate_mu<F: Scalar>(ensemble: &Ensemble, x: &Site, trace: &[usize]) -> Result<MuEstimate<F>> {
    let n = trace.iter().copied().max().unwrap_or(0);
    check_direction(ensemble, x, n)?;
    if trace.contains(&0) {
        return Err(Error::domain("trace depths must be at least 1"));
    }
    let per_replica: Vec<(Vec<F>, Vec<F>, F)> = ensemble
        .members
        .par_iter()
        .map(|m| {
            let reg = regeneration_sequence(&m.config, &m.labeling, x, n)?;
            let metric = ChemicalMetric::new(&m.config, &Site::zero(x.dim()))?;
            let dist = |k: usize| -> Result<F> {
                metric
                    .distance(reg.sites[k - 1])
                    .finite()
                    .map(|d| F::of(f64::from(d)))
                    .ok_or_else(|| Error::precondition("regeneration point off the origin's cluster"))
            };
            let mut ratios = Vec::with_capacity(trace.len());
            let mut per_n = Vec::with_capacity(trace.len());
            for &k in trace {
                let d = dist(k)?;
                ratios.push(d / F::of_usize(reg.time(k)));
                per_n.push(d / F::of_usize(k));
            }
            Ok((ratios, per_n, dist(1)? / F::of(x.l1() as f64)))
        })
        .collect::<Result<_>>()?;
    let omega0 = ensemble.omega0_probability();
    let ratios: Vec<Vec<F>> = per_replica.iter().map(|r| r.0.clone()).collect();
    let per_n: Vec<Vec<F>> = per_replica.iter().map(|r| r.1.clone()).collect();
    let tp = trace_points(trace, &ratios, &per_n, omega0);
    let last = trace.iter().position(|&k| k == n).expect("max in trace");
    let first: Vec<F> = per_replica.iter().map(|r| r.2).collect();
    Ok(MuEstimate {
        direction: x.clone(),
        estimate: tp[last].ratio,
        ci: tp[last].ratio_ci,
        samples: ratios.iter().map(|r| r[last]).collect(),
        trace: tp,
        first_distance: ci_of(&first).0,
        n,
        meta: EnsembleMeta::of(ensemble),
    })
}

/// `Ĉ₃ = 1.2 · max_x E[D(0, T_x x)] / |x|_1` over the given directions.
pub fn c3_estimate<F: Scalar>(mus: &[MuEstimate<F>]) -> F {
    mus.iter().map(|m| m.first_distance).fold(F::zero(), F::max) * F::of(C3_SAFETY)
}

/// Discrete Legendre transform `sup_λ (α̂_λ(x) - λ)` over the curve's grid.
pub fn rate_function<F: Scalar>(curve: &AlphaCurve<F>) -> RateFunction<F> {
    rate_function_scaled(curve, F::one())
}

/// Rate function at `scale · x`, using `α_λ(s x) = s α_λ(x)`.
///
/// When the last grid segment still has slope above `1 + DIVERGENCE_SLACK`
/// the supremum is reported as `+∞` with the divergence flag set.
pub fn rate_function_scaled<F: Scalar>(curve: &AlphaCurve<F>, scale: F) -> RateFunction<F> {
    let (lambdas, alpha) = (&curve.lambdas, &curve.estimates);
    let mut best = F::neg_infinity();
    let mut arg = F::zero();
    for (&l, &a) in lambdas.iter().zip(alpha) {
        let v = scale * a - l;
        if v > best {
            best = v;
            arg = l;
        }
    }
    let k = lambdas.len();
    let diverges = k >= 2 && {
        let slope = scale * (alpha[k - 1] - alpha[k - 2]) / (lambdas[k - 1] - lambdas[k - 2]);
        slope > F::one() + F::of(DIVERGENCE_SLACK)
    };
    RateFunction {
        direction: curve.direction.clone(),
        scale,
        value: if diverges { F::infinity() } else { best },
        lambda_star: if diverges { lambdas[k - 1] } else { arg },
        diverges,
    }
}

/// Cesàro means `(1/n) Σ_{i<=n} ℙ̂(0, i z1, i z2 on a spanning giant)`,
/// each probability averaged over all torus translates.
pub fn estimate_triple_density<F: Scalar>(
    ensemble: &Ensemble,
    z1: &Site,
    z2: &Site,
    n: usize,
) -> Result<TripleDensity<F>> {
    let spec = ensemble.spec_box;
    if !spec.is_wrapped() {
        return Err(Error::Unsupported("triple density needs a wrapped box".into()));
    }
    if n == 0 || z1.dim() != spec.dim() || z2.dim() != spec.dim() {
        return Err(Error::domain("need n >= 1 and shifts of the box dimension"));
    }
    if ensemble.is_empty() {
        return Err(Error::domain("empty ensemble"));
    }
    let reach = z1.linf().max(z2.linf()) as usize;
    let fits = if reach == 0 { n } else { ((spec.side() - 1) / 2 / reach).min(n) };
    if fits < n {
        return Err(Error::Partial {
            found: fits,
            requested: n,
            reason: "multiples of the shifts reach half the box side".into(),
        });
    }
    let sites = spec.num_sites();
    let per_replica: Vec<Vec<F>> = ensemble
        .members
        .par_iter()
        .map(|m| {
            let on: Vec<bool> = if m.labeling.giant_spans() {
                (0..sites).map(|s| m.labeling.on_giant(s)).collect()
            } else {
                vec![false; sites]
            };
            let mut sum = 0.0;
            (1..=n)
                .map(|i| {
                    let (a, b) = (z1.scale(i as i64), z2.scale(i as i64));
                    let hits = (0..sites)
                        .filter(|&v| {
                            on[v] && {
                                let x = spec.site(v);
                                on[spec.wrapped_index(&x.add(&a))] && on[spec.wrapped_index(&x.add(&b))]
                            }
                        })
                        .count();
                    sum += hits as f64 / sites as f64;
                    F::of(sum / i as f64)
                })
                .collect()
        })
        .collect();
    let trace: Vec<(usize, F, F)> = (0..n)
        .map(|j| {
            let col: Vec<F> = per_replica.iter().map(|r| r[j]).collect();
            let (m, c) = ci_of(&col);
            (j + 1, m, c)
        })
        .collect();
    let (_, estimate, ci) = trace[n - 1];
    Ok(TripleDensity {
        z1: z1.clone(),
        z2: z2.clone(),
        trace,
        estimate,
        ci,
        meta: EnsembleMeta::of(ensemble),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    /// Distance to failure; negative when the check fails.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
    pub incomplete: bool,
    pub missing: Vec<String>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&PropertyCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Constants for the bound sandwich.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundConstants {
    pub c3: f64,
    pub omega0: f64,
}

struct Series<'a> {
    label: String,
    lambda: Option<f64>,
    points: Vec<(&'a Site, f64, f64)>,
}

impl Series<'_> {
    fn find(&self, x: &Site) -> Option<(f64, f64)> {
        self.points.iter().find(|p| p.0 == x).map(|p| (p.1, p.2))
    }
}

fn push(checks: &mut Vec<PropertyCheck>, name: String, margin: f64) {
    checks.push(PropertyCheck {
        name,
        passed: margin >= 0.0,
        margin,
    });
}

/// Subadditivity `f(x+y) <= f(x) + f(y)`, homogeneity `f(qx) = q f(x)` for
/// `q ∈ {2, 3}` and, with `bounds`, the sandwich inequalities, for every λ
/// shared by the curves and for `μ̂`. Slack is the sum of the CI half-widths
/// involved.
pub fn property_report<F: Scalar>(
    alphas: &[AlphaCurve<F>],
    mus: &[MuEstimate<F>],
    bounds: Option<BoundConstants>,
) -> PropertyReport {
    let mut series = Vec::new();
    if let Some(first) = alphas.first() {
        for &l in &first.lambdas {
            let points = alphas
                .iter()
                .filter_map(|c| {
                    c.lambdas
                        .iter()
                        .position(|&m| m == l)
                        .map(|j| (&c.direction, c.estimates[j].as_f64(), c.ci[j].as_f64()))
                })
                .collect();
            series.push(Series {
                label: format!("alpha[λ={}]", format_number(l.as_f64())),
                lambda: Some(l.as_f64()),
                points,
            });
        }
    }
    if !mus.is_empty() {
        series.push(Series {
            label: "mu".to_string(),
            lambda: None,
            points: mus.iter().map(|m| (&m.direction, m.estimate.as_f64(), m.ci.as_f64())).collect(),
        });
    }
    let mut checks = Vec::new();
    let mut missing = Vec::new();
    for s in &series {
        let mut sub = 0;
        let mut hom = 0;
        for (i, &(x, fx, cx)) in s.points.iter().enumerate() {
            for &(y, fy, cy) in &s.points[i..] {
                if x == y {
                    continue;
                }
                if let Some((fs, cs)) = s.find(&x.add(y)) {
                    sub += 1;
                    push(&mut checks, format!("{} subadditive {x}+{y}", s.label), fx + fy + cx + cy + cs - fs);
                }
            }
            for q in [2i64, 3] {
                if let Some((fq, cq)) = s.find(&x.scale(q)) {
                    hom += 1;
                    let slack = cq + q as f64 * cx;
                    push(&mut checks, format!("{} homogeneous {q}{x}", s.label), slack - (fq - q as f64 * fx).abs());
                }
            }
            if let Some(b) = bounds {
                let l1 = x.l1() as f64;
                let d = x.dim() as f64;
                let (lo, hi) = match s.lambda {
                    Some(l) => (l * l1, (l + (2.0 * d).ln()) * b.c3 * b.omega0 * l1),
                    None => (l1, b.c3 * l1),
                };
                push(&mut checks, format!("{} lower bound {x}", s.label), fx + cx - lo);
                push(&mut checks, format!("{} upper bound {x}", s.label), hi + cx - fx);
            }
        }
        if sub == 0 {
            missing.push(format!("{}: no direction triple x, y, x+y", s.label));
        }
        if hom == 0 {
            missing.push(format!("{}: no direction pair x, qx", s.label));
        }
    }
    PropertyReport {
        checks,
        incomplete: !missing.is_empty(),
        missing,
    }
}

/// Checks that `λ -> α̂_λ(x)` is nondecreasing and concave on the grid up to
/// the CI half-widths.
pub fn grid_shape_check<F: Scalar>(curve: &AlphaCurve<F>) -> (bool, bool) {
    let l: Vec<f64> = curve.lambdas.iter().map(|v| v.as_f64()).collect();
    let a: Vec<f64> = curve.estimates.iter().map(|v| v.as_f64()).collect();
    let c: Vec<f64> = curve.ci.iter().map(|v| v.as_f64()).collect();
    let monotone = (1..a.len()).all(|i| a[i] + c[i] + c[i - 1] >= a[i - 1]);
    let concave = (2..a.len()).all(|i| {
        // chord from i-2 to i lies below the middle point
        let w = (l[i - 1] - l[i - 2]) / (l[i] - l[i - 2]);
        let chord = a[i - 2] + w * (a[i] - a[i - 2]);
        a[i - 1] + c[i - 2] + c[i - 1] + c[i] >= chord
    });
    (monotone, concave)
}

impl<F: Scalar> AlphaCurve<F> {
    pub const CSV_HEADER: &'static str = "lambda,x,n,estimate,ci,replicas";

    /// One row per λ and trace depth.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (i, l) in self.lambdas.iter().enumerate() {
            for tp in &self.traces[i] {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    format_number(l.as_f64()),
                    self.direction.csv_token(),
                    tp.n,
                    format_number(tp.ratio.as_f64()),
                    format_number(tp.ratio_ci.as_f64()),
                    self.meta.replicas
                ));
            }
        }
        out
    }
}

impl<F: Scalar> MuEstimate<F> {
    pub const CSV_HEADER: &'static str = "x,n,estimate,ci,replicas";

    pub fn csv_rows(&self) -> String {
        self.trace
            .iter()
            .map(|tp| {
                format!(
                    "{},{},{},{},{}\n",
                    self.direction.csv_token(),
                    tp.n,
                    format_number(tp.ratio.as_f64()),
                    format_number(tp.ratio_ci.as_f64()),
                    self.meta.replicas
                )
            })
            .collect()
    }
}

impl<F: Scalar> RateFunction<F> {
    pub const CSV_HEADER: &'static str = "x,scale,value,lambda_star,diverges";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}\n",
            self.direction.csv_token(),
            format_number(self.scale.as_f64()),
            format_number(self.value.as_f64()),
            format_number(self.lambda_star.as_f64()),
            self.diverges
        )
    }
}

impl<F: Scalar> TripleDensity<F> {
    pub const CSV_HEADER: &'static str = "z1,z2,n,estimate,ci,replicas";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for &(n, m, c) in &self.trace {
            out.push_str(&format!(
                "{},{},{n},{},{},{}\n",
                self.z1.csv_token(),
                self.z2.csv_token(),
                format_number(m.as_f64()),
                format_number(c.as_f64()),
                self.meta.replicas
            ));
        }
        out
    }
}
