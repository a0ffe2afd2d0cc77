//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::collections::{BTreeMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_rational::Ratio;
use perclab::cluster::{bfs_distances, check_regularity_event, label_clusters};
use perclab::ensemble::Conditioning;
use perclab::experiment::{compute, emit_outputs, BoxConfig, ExperimentSpec, Task};
use perclab::exponents::{
    c3_estimate, default_lambda_grid, estimate_alpha, estimate_mu, estimate_triple_density, rate_function_scaled,
    AlphaCurve, AlphaOptions, MuEstimate, TripleDensity,
};
use perclab::samplers::{random_cluster_weight, sample, sample_bernoulli, BoundaryCondition, Dynamics, RandomClusterChain};
use perclab::shapes::{build_limit_shape, default_directions, hausdorff_distance, shape_convergence_scan, Polytope, ShapeSet};
use perclab::stats::{ks_two_sample, mean_ci};
use perclab::walk::{hitting_field, hitting_laplace_exact, hitting_laplace_mc, regeneration_sequence, McOptions, SolverOptions};
use perclab::{Boundary, BoxSpec, Configuration, Ensemble, Mode, SamplerSpec, Site, WalkKernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("kernel exactness", kernel_exactness),
        ("laplace oracle equivalence", laplace_oracles),
        ("inequality suite", inequality_suite),
        ("kac density", kac_density),
        ("lyapunov convergence", lyapunov_convergence),
        ("rate function", rate_function_sanity),
        ("mu and shape", mu_and_shape),
        ("random-cluster validation", random_cluster_validation),
        ("regularity events", regularity_events),
        ("triple density", triple_density),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} {name}: PASS ({secs:.1}s) {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({secs:.1}s) {d}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Cluster of `s` by breadth-first search over open edges.
fn oracle_cluster(config: &Configuration, s: usize) -> Vec<bool> {
    let spec = config.spec();
    let mut seen = vec![false; spec.num_sites()];
    seen[s] = true;
    let mut q = VecDeque::from([s]);
    while let Some(x) = q.pop_front() {
        for axis in 0..spec.dim() {
            for fwd in [true, false] {
                let Some(y) = spec.step(x, axis, fwd) else { continue };
                let open = match spec.mode() {
                    Mode::Bond => config.edge_open(x, axis, fwd),
                    Mode::Site => config.site_open(x) && config.site_open(y),
                };
                if open && !seen[y] {
                    seen[y] = true;
                    q.push_back(y);
                }
            }
        }
    }
    seen
}

fn kernel_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rows = 0;
    for f in 0..1000u64 {
        let dim = 2 + (f % 2) as usize;
        let mode = if rng.random::<bool>() { Mode::Bond } else { Mode::Site };
        let boundary = if rng.random::<bool>() { Boundary::Wrapped } else { Boundary::Free };
        let spec = BoxSpec::new(dim, 8, mode, boundary).unwrap();
        let p = rng.random_range(0.2..1.0);
        let config = sample_bernoulli(&spec, p, f, 0);
        let lab = label_clusters(&config);
        let Ok(kernel) = WalkKernel::on_giant(&config, &lab) else { continue };
        let member = oracle_cluster(&config, kernel.sites()[0]);
        let unit = Ratio::new(1i64, 2 * dim as i64);
        for _ in 0..8 {
            let s = kernel.sites()[rng.random_range(0..kernel.len())];
            let t = kernel.transition_distribution::<Ratio<i64>>(&spec.site(s)).unwrap();
            if t.total() != Ratio::from_integer(1) {
                return Err(format!("fixture {f}: row sums to {}", t.total()));
            }
            let mut expect: BTreeMap<usize, Ratio<i64>> = BTreeMap::new();
            let mut stay = Ratio::from_integer(0);
            for axis in 0..dim {
                for fwd in [true, false] {
                    match spec.step(s, axis, fwd) {
                        Some(y) if member[y] => *expect.entry(y).or_insert(Ratio::from_integer(0)) += unit,
                        _ => stay += unit,
                    }
                }
            }
            let got: BTreeMap<usize, Ratio<i64>> =
                t.moves.iter().map(|(y, pr)| (spec.index_of(y).unwrap(), *pr)).collect();
            if got != expect || t.stay != stay {
                return Err(format!("fixture {f}, site {}: kernel differs from the formulas", spec.site(s)));
            }
            rows += 1;
        }
    }
    Ok(format!("{rows} rows exact"))
}

fn laplace_oracles() -> Outcome {
    // one open bond between 0 and e1: E[e^{-λH}] = 1/5 at λ = log 2
    let spec = BoxSpec::new(2, 4, Mode::Bond, Boundary::Free).unwrap();
    let mut c = Configuration::closed(spec);
    c.set_state(spec.bond_index(0, 0).unwrap(), true);
    let lab = label_clusters(&c);
    let k = WalkKernel::on_giant(&c, &lab).unwrap();
    let (o, e1) = (Site::zero(2), Site::unit(2, 0));
    let exact = hitting_laplace_exact(&k, &o, &e1, 2f64.ln(), &SolverOptions::default()).unwrap();
    let closed_err = (exact.value - 5f64.ln()).abs();
    if closed_err > 1e-10 {
        return Err(format!("two-site case off by {closed_err:e}"));
    }

    let spec = BoxSpec::torus(2, 16).unwrap();
    let lambda = 1.0f64;
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut replica = 0;
    while done < 50 {
        replica += 1;
        let config = sample_bernoulli(&spec, 0.7, 77, replica);
        let lab = label_clusters(&config);
        let kernel = WalkKernel::on_giant(&config, &lab).unwrap();
        let x = kernel.sites()[rng.random_range(0..kernel.len())];
        let dist = bfs_distances(&config, x, None);
        let near: Vec<usize> = kernel.sites().iter().copied().filter(|&y| (1..=4).contains(&dist[y])).collect();
        if near.is_empty() {
            continue;
        }
        let y = near[rng.random_range(0..near.len())];
        let (xs, ys) = (spec.site(x), spec.site(y));
        let ex = hitting_laplace_exact(&kernel, &xs, &ys, lambda, &SolverOptions::default()).unwrap();
        let mc = hitting_laplace_mc(&kernel, &xs, &ys, lambda, &McOptions::new(1_000_000, 1000, replica)).unwrap();
        let allowed = 3.0 * mc.stderr + mc.value_bias_bound();
        let dev = (mc.value - ex.value).abs();
        if dev > allowed {
            return Err(format!("cluster {done}: |mc - exact| = {dev:.3e} > {allowed:.3e}"));
        }
        worst = worst.max(dev / allowed);
        done += 1;
    }
    Ok(format!("log 5 to {closed_err:.1e}; 50 clusters, worst deviation {worst:.2} of allowance"))
}

fn inequality_suite() -> Outcome {
    let spec = BoxSpec::torus(2, 32).unwrap();
    let lambdas = [0.0, 0.25, 1.0, 4.0];
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checks = 0u64;
    let mut violations = Vec::new();
    for r in 0..100 {
        let config = sample_bernoulli(&spec, 0.7, 3, r);
        let lab = label_clusters(&config);
        let kernel = WalkKernel::on_giant(&config, &lab).unwrap();
        let all: Vec<Site> = kernel.sites().iter().map(|&s| spec.site(s)).collect();
        for _ in 0..3 {
            let y = kernel.sites()[rng.random_range(0..kernel.len())];
            let z = kernel.sites()[rng.random_range(0..kernel.len())];
            let dy = bfs_distances(&config, y, None);
            for &l in &lambdas {
                let fy = hitting_field(&kernel, &spec.site(y), l, &all, &opts).unwrap();
                let fz = hitting_field(&kernel, &spec.site(z), l, &all, &opts).unwrap();
                let a_yz = fz.exponent(&kernel, y).unwrap();
                for &x in kernel.sites() {
                    let a_xy = fy.exponent(&kernel, x).unwrap();
                    let a_xz = fz.exponent(&kernel, x).unwrap();
                    let d = dy[x] as f64;
                    let l1 = spec.displacement(x, y).l1() as f64;
                    if a_xz > a_xy + a_yz + 1e-8 {
                        violations.push(format!("subadditivity r={r} λ={l}"));
                    }
                    if a_xy > (l + 4f64.ln()) * d + 1e-8 {
                        violations.push(format!("upper bound r={r} λ={l}"));
                    }
                    if a_xy < l * l1 - 1e-8 {
                        violations.push(format!("lower bound r={r} λ={l}"));
                    }
                    checks += 3;
                }
            }
        }
    }
    check(
        violations.is_empty(),
        format!("{checks} inequalities, {} violations {:?}", violations.len(), violations.iter().take(3).collect::<Vec<_>>()),
    )
}

fn kac_density() -> Outcome {
    let b = BoxSpec::torus(2, 256).unwrap();
    let e = Ensemble::sample(&b, &SamplerSpec::bernoulli_bond(0.7, 4), 100, Conditioning::OriginOnGiant).unwrap();
    let gaps: Vec<f64> = e
        .members
        .iter()
        .map(|m| regeneration_sequence(&m.config, &m.labeling, &Site::unit(2, 0), 1).unwrap().gaps[0] as f64)
        .collect();
    let gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let prod = e.omega0_probability() * gap;
    check(
        (0.95..=1.05).contains(&prod),
        format!(
            "P(Ω0) = {:.4} (acceptance {:.4}), mean gap {gap:.4}, product {prod:.4}",
            e.omega0_probability(),
            e.acceptance_fraction()
        ),
    )
}

fn lyapunov_convergence() -> Outcome {
    let b = BoxSpec::torus(2, 256).unwrap();
    let e = Ensemble::sample(&b, &SamplerSpec::bernoulli_bond(0.7, 5), 200, Conditioning::OriginOnGiant).unwrap();
    let lambdas = [0.25, 1.0];
    let trace = [4, 8, 16];
    let (e1, e2) = (Site::unit(2, 0), Site::unit(2, 1));
    let dirs = [e1.clone(), e2.clone(), e1.add(&e2), e1.scale(2)];
    let curves: Vec<AlphaCurve<f64>> = dirs
        .iter()
        .map(|x| estimate_alpha(&e, x, &lambdas, &trace, &AlphaOptions::default()).unwrap())
        .collect();
    let mus: Vec<MuEstimate<f64>> = dirs.iter().map(|x| estimate_mu(&e, x, &trace).unwrap()).collect();
    let c3 = c3_estimate(&mus);
    let omega = e.omega0_probability();
    let mut notes = Vec::new();
    let mut ok = true;
    for (i, &l) in lambdas.iter().enumerate() {
        let t = &curves[0].traces[i];
        let (d1, d2) = ((t[1].ratio - t[0].ratio).abs(), (t[2].ratio - t[1].ratio).abs());
        let slack = t[1].ratio_ci + t[2].ratio_ci;
        let shrinks = d2 <= d1 + slack;
        let a = curves[0].estimates[i];
        let upper = (l + 4f64.ln()) * c3 * omega;
        let sandwich = l <= a && a <= upper;
        // homogeneity at matched lattice scale: depth n for 2e1 against 2n for e1
        let (a2, a2_ci) = (curves[3].traces[i][1].ratio, curves[3].traces[i][1].ratio_ci);
        let (a1, a1_ci) = (t[2].ratio, t[2].ratio_ci);
        let homog = (a2 - 2.0 * a1).abs() <= a2_ci + 2.0 * a1_ci;
        let eq_depth = curves[3].estimates[i] - 2.0 * a;
        let eq_slack = curves[3].ci[i] + 2.0 * curves[0].ci[i];
        let sub_slack = curves[2].ci[i] + curves[0].ci[i] + curves[1].ci[i];
        let sub = curves[2].estimates[i] <= curves[0].estimates[i] + curves[1].estimates[i] + sub_slack;
        ok &= shrinks && sandwich && homog && sub;
        notes.push(format!(
            "λ={l}: trace {:.4}/{:.4}/{:.4} shrink={shrinks} sandwich {l} <= {a:.4} <= {upper:.4} {sandwich} \
             homog(2e1@8 vs 2·e1@16) {a2:.4} vs {:.4} {homog} [equal-depth diff {eq_depth:+.4}, slack {eq_slack:.4}] \
             subadd {sub}",
            t[0].ratio,
            t[1].ratio,
            t[2].ratio,
            2.0 * a1
        ));
    }
    check(ok, format!("C3={c3:.3} P(Ω0)={omega:.4}; {}", notes.join("; ")))
}

fn rate_function_sanity() -> Outcome {
    let b = BoxSpec::torus(2, 64).unwrap();
    let e = Ensemble::sample(&b, &SamplerSpec::bernoulli_bond(1.0, 6), 2, Conditioning::OriginOnGiant).unwrap();
    let e1 = Site::unit(2, 0);
    let grid: Vec<f64> = default_lambda_grid();
    let curve: AlphaCurve<f64> = estimate_alpha(&e, &e1, &grid, &[16], &AlphaOptions::default()).unwrap();
    let i0 = rate_function_scaled(&curve, 0.0);
    let far = rate_function_scaled(&curve, 1.25);
    let m = &e.members[0];
    let kernel = WalkKernel::on_giant(&m.config, &m.labeling).unwrap();
    let n = 60;
    let law = kernel.distribution::<f64>(&Site::zero(2), n, usize::MAX).unwrap();
    let mut notes = vec![format!("I(0)={} diverges(1.25e1)={}", i0.value, far.diverges)];
    let mut ok = i0.value == 0.0 && far.diverges && far.value == f64::INFINITY;
    for s in [0.2, 0.4] {
        let target = b.index_of(&e1.scale((s * n as f64).round() as i64)).unwrap();
        let prob = law[kernel.local_index(target).unwrap()];
        let emp = -prob.ln() / n as f64;
        let i = rate_function_scaled(&curve, s).value;
        ok &= (emp - i).abs() <= 0.1;
        notes.push(format!("x={s}e1: grid-Legendre {i:.4}, exact-law {emp:.4}"));
    }
    check(ok, notes.join("; "))
}

fn mu_and_shape() -> Outcome {
    let dirs = default_directions(2, 2);
    if dirs.len() != 24 {
        return Err(format!("{} directions", dirs.len()));
    }
    let full = Ensemble::sample(&BoxSpec::torus(2, 64).unwrap(), &SamplerSpec::bernoulli_bond(1.0, 7), 2, Conditioning::OriginOnGiant)
        .unwrap();
    let mus: Vec<MuEstimate<f64>> = dirs.iter().map(|x| estimate_mu(&full, x, &[8]).unwrap()).collect();
    let exact = mus.iter().all(|m| m.estimate == m.direction.l1() as f64 && m.ci == 0.0);
    let shape = build_limit_shape(&mus).unwrap();
    let cross = ShapeSet::Limit(Polytope::cross_polytope(2, 1.0));
    let dh = hausdorff_distance(&shape, &cross).unwrap();
    let mut notes = vec![format!("p=1: mu=|x|_1 {exact}, d_H(B, cross-polytope)={dh:.1e}")];
    let mut ok = exact && dh < 1e-12;

    let e = Ensemble::sample(&BoxSpec::torus(2, 512).unwrap(), &SamplerSpec::bernoulli_bond(0.7, 7), 100, Conditioning::OriginOnGiant)
        .unwrap();
    let trace = [8, 16, 32];
    let mus: Vec<MuEstimate<f64>> = dirs.iter().map(|x| estimate_mu(&e, x, &trace).unwrap()).collect();
    let c3 = c3_estimate(&mus);
    let bounded = mus
        .iter()
        .filter(|m| {
            let l1 = m.direction.l1() as f64;
            l1 <= m.estimate && m.estimate <= c3 * l1
        })
        .count();
    let shape = build_limit_shape(&mus).unwrap();
    let report = shape_convergence_scan(&e, &shape, &[16, 32, 64, 128]).unwrap();
    ok &= bounded == 24 && report.strictly_decreasing;
    notes.push(format!(
        "p=0.7: {bounded}/24 directions in [|x|_1, C3|x|_1] (C3={c3:.3}, mu(e1)={:.4}); d_H means {:?} strictly decreasing {}",
        mus.iter().find(|m| m.direction == Site::unit(2, 0)).unwrap().estimate,
        report.distances.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>(),
        report.strictly_decreasing
    ));
    check(ok, notes.join("; "))
}

/// Total variation between the empirical law of the 4-bond state on a free
/// 2x2 box along the chain and the exact random-cluster law.
fn two_by_two_tv(dynamics: Dynamics, p: f64, q: f64, steps: usize) -> f64 {
    let spec = BoxSpec::new(2, 2, Mode::Bond, Boundary::Free).unwrap();
    let bonds = spec.num_bonds();
    let mut s = SamplerSpec::random_cluster(p, q, BoundaryCondition::Free, 1, 8);
    s.dynamics = dynamics;
    let mut chain = RandomClusterChain::new(spec, &s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut counts = vec![0u64; 1 << bonds];
    for _ in 0..steps {
        match dynamics {
            Dynamics::HeatBath => chain.heat_bath_update(rng.random_range(0..bonds)),
            _ => chain.swendsen_wang_step(),
        }
        let code = (0..bonds).fold(0, |acc, b| acc | (usize::from(chain.config().state(b)) << b));
        counts[code] += 1;
    }
    let weights: Vec<f64> = (0..1usize << bonds)
        .map(|code| {
            let states: Vec<bool> = (0..bonds).map(|b| code >> b & 1 == 1).collect();
            random_cluster_weight(&Configuration::from_states(spec, &states).unwrap(), p, q)
        })
        .collect();
    let z: f64 = weights.iter().sum();
    0.5 * weights
        .iter()
        .zip(&counts)
        .map(|(w, &c)| (w / z - c as f64 / steps as f64).abs())
        .sum::<f64>()
}

/// Potts heat-bath oracle: `q`-state spins on a free box with every boundary
/// spin fixed to colour 0; returns `p` times the fraction of agreeing edges,
/// averaged over `measure` sweeps after `burn` sweeps.
fn potts_edge_density(side: usize, p: f64, q: usize, burn: usize, measure: usize, seed: u64) -> f64 {
    let n = side * side;
    let idx = |x: usize, y: usize| x + side * y;
    let boundary = |x: usize, y: usize| x == 0 || y == 0 || x + 1 == side || y + 1 == side;
    let mut spin = vec![0usize; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boost = 1.0 / (1.0 - p);
    let mut edges = Vec::new();
    for y in 0..side {
        for x in 0..side {
            if x + 1 < side {
                edges.push((idx(x, y), idx(x + 1, y)));
            }
            if y + 1 < side {
                edges.push((idx(x, y), idx(x, y + 1)));
            }
        }
    }
    let mut total = 0.0;
    for sweep in 0..burn + measure {
        for y in 1..side - 1 {
            for x in 1..side - 1 {
                let nb = [idx(x - 1, y), idx(x + 1, y), idx(x, y - 1), idx(x, y + 1)];
                let w: Vec<f64> = (0..q).map(|c| boost.powi(nb.iter().filter(|&&v| spin[v] == c).count() as i32)).collect();
                let mut u = rng.random::<f64>() * w.iter().sum::<f64>();
                let mut c = 0;
                while u >= w[c] && c + 1 < q {
                    u -= w[c];
                    c += 1;
                }
                spin[idx(x, y)] = c;
            }
        }
        debug_assert!((0..n).all(|s| !boundary(s % side, s / side) || spin[s] == 0));
        if sweep >= burn {
            total += p * edges.iter().filter(|&&(a, b)| spin[a] == spin[b]).count() as f64 / edges.len() as f64;
        }
    }
    total / measure as f64
}

fn random_cluster_validation() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (dyn_, q, steps) in [(Dynamics::HeatBath, 1.5, 1_000_000), (Dynamics::HeatBath, 2.0, 1_000_000), (Dynamics::SwendsenWang, 2.0, 1_000_000)] {
        let tv = two_by_two_tv(dyn_, 0.6, q, steps);
        ok &= tv <= 0.01;
        notes.push(format!("2x2 {dyn_:?} q={q}: TV {tv:.4}"));
    }

    // q = 1 against independent bonds
    let b = BoxSpec::torus(2, 8).unwrap();
    let reps = 10_000u64;
    let fk = SamplerSpec::random_cluster(0.6, 1.0, BoundaryCondition::Free, 1, 9);
    let (mut a, mut c) = (Vec::new(), Vec::new());
    for r in 0..reps {
        a.push(sample(&b, &fk.with_replica(r)).unwrap().count_open() as f64);
        c.push(sample_bernoulli(&b, 0.6, 10, r).count_open() as f64);
    }
    let (ma, mc) = (mean_ci(&a), mean_ci(&c));
    let z = (ma.mean - mc.mean).abs() / (ma.stderr.powi(2) + mc.stderr.powi(2)).sqrt();
    let (_, pval) = ks_two_sample(&a, &c);
    ok &= z <= 3.0 && pval > 0.01;
    notes.push(format!("q=1 vs Bernoulli: z={z:.2}, KS p={pval:.3}"));

    // q = 2 wired against the Potts oracle
    let side = 16;
    let b = BoxSpec::new(2, side, Mode::Bond, Boundary::Free).unwrap();
    let spec = SamplerSpec::random_cluster(0.7, 2.0, BoundaryCondition::Wired, 0, 11);
    let runs = 100u64;
    let (burn, measure) = (10 * side, 200);
    let fk: Vec<f64> = (0..runs)
        .map(|r| {
            let mut chain = RandomClusterChain::new(b, &spec.with_replica(r)).unwrap();
            for _ in 0..burn {
                chain.sweep();
            }
            (0..measure)
                .map(|_| {
                    chain.sweep();
                    chain.config().count_open() as f64 / b.num_bonds() as f64
                })
                .sum::<f64>()
                / measure as f64
        })
        .collect();
    let potts: Vec<f64> = (0..runs).map(|r| potts_edge_density(side, 0.7, 2, 400, measure, 1000 + r)).collect();
    let (mf, mp) = (mean_ci(&fk), mean_ci(&potts));
    let z = (mf.mean - mp.mean).abs() / (mf.stderr.powi(2) + mp.stderr.powi(2)).sqrt();
    ok &= z <= 3.0;
    notes.push(format!("q=2 wired edge density {:.5} vs Potts {:.5}, z={z:.2}", mf.mean, mp.mean));
    check(ok, notes.join("; "))
}

fn regularity_events() -> Outcome {
    let freq = |p: f64, reps: usize, n: usize| {
        let b = BoxSpec::torus(2, 64).unwrap();
        let e = Ensemble::sample(&b, &SamplerSpec::bernoulli_bond(p, 12), reps, Conditioning::None).unwrap();
        e.members
            .iter()
            .filter(|m| check_regularity_event(&m.config, &Site::zero(2), n).unwrap())
            .count() as f64
            / reps as f64
    };
    let (one, zero) = (freq(1.0, 5, 10), freq(0.0, 5, 10));
    let f: Vec<f64> = [5, 10, 20].iter().map(|&n| freq(0.85, 200, n)).collect();
    let increasing = f[0] <= f[1] && f[1] <= f[2] && f[0] < f[2];
    check(
        one == 1.0 && zero == 0.0 && increasing,
        format!("p=1: {one}, p=0: {zero}, p=0.85 N=5/10/20: {:?}", f),
    )
}

fn triple_density() -> Outcome {
    let b = BoxSpec::torus(2, 128).unwrap();
    let e = Ensemble::sample(&b, &SamplerSpec::bernoulli_bond(0.7, 13), 50, Conditioning::None).unwrap();
    let t: TripleDensity<f64> = estimate_triple_density(&e, &Site::unit(2, 0), &Site::unit(2, 1), 32).unwrap();
    let half = t.trace[15].1;
    let stable = (t.estimate - half).abs() <= t.ci;
    let positive = t.estimate - t.ci > 0.0;
    check(
        stable && positive,
        format!("Cesàro mean at 16: {half:.5}, at 32: {:.5} ± {:.5}", t.estimate, t.ci),
    )
}

fn reproducibility() -> Outcome {
    let mut spec = ExperimentSpec::new(
        BoxConfig {
            dim: 2,
            side: 256,
            boundary: Boundary::Wrapped,
        },
        SamplerSpec::bernoulli_bond(0.7, 14),
        100,
        vec![Task::Tail, Task::Mu, Task::Triple, Task::REvent],
    );
    spec.directions = vec![Site::unit(2, 0)];
    spec.n = 1;
    spec.triple.n = Some(4);
    let mut bodies = Vec::new();
    for workers in [1, 4] {
        let dir = tempfile::tempdir().unwrap();
        spec.workers = workers;
        spec.output_dir = Some(dir.path().to_path_buf());
        let record = compute(&spec).unwrap();
        emit_outputs(&record).unwrap();
        let files: Vec<(String, Vec<u8>)> = record
            .artifacts
            .iter()
            .map(|a| (a.name.clone(), std::fs::read(dir.path().join(&a.name)).unwrap()))
            .collect();
        bodies.push(files);
    }
    let identical = bodies[0] == bodies[1] && !bodies[0].is_empty();
    check(identical, format!("{} CSV files byte-identical for 1 and 4 workers: {identical}", bodies[0].len()))
}
