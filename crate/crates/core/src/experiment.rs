//! Declarative experiments.
//!
//! An [`ExperimentSpec`] (TOML, unknown keys rejected) names a box, a sampler
//! and a set of tasks. [`run_experiment`] samples the ensembles, runs every
//! task and writes one CSV per task plus `summary.json`. A task that fails is
//! recorded as failed; the others still run.
//!
//! Every emitted number is a function of the spec alone. The worker count
//! only changes wall-clock time, and CSV bodies are byte-identical across
//! reruns.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cluster::{check_regularity_event, empirical_tail};
use crate::ensemble::{Conditioning, Ensemble};
use crate::error::{Error, Result};
use crate::exponents::{
    c3_estimate, default_lambda_grid, default_trace, estimate_alpha, estimate_mu, estimate_triple_density,
    grid_shape_check, property_report, rate_function_scaled, AlphaCurve, AlphaOptions, BoundConstants, MuEstimate,
    RateFunction, TripleDensity,
};
use crate::lattice::{Boundary, BoxSpec, Site};
use crate::samplers::{BoundaryCondition, Model, SamplerSpec};
use crate::scalar::format_number;
use crate::shapes::{build_limit_shape, default_directions, empirical_ball, shape_convergence_scan, svg_overlay, HausdorffReport};
use crate::stats::{wilson_interval, Z95};

/// Version of the `summary.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

/// JSON schema of `summary.json`.
pub const SUMMARY_SCHEMA: &str = include_str!("../schema/summary.schema.json");

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Tail,
    Alpha,
    Mu,
    Rate,
    Shape,
    Triple,
    REvent,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Tail,
        Task::Alpha,
        Task::Mu,
        Task::Rate,
        Task::Shape,
        Task::Triple,
        Task::REvent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Tail => "tail",
            Task::Alpha => "alpha",
            Task::Mu => "mu",
            Task::Rate => "rate",
            Task::Shape => "shape",
            Task::Triple => "triple",
            Task::REvent => "r-event",
        }
    }

    pub fn csv_file(self) -> String {
        format!("{}.csv", self.name().replace('-', "_"))
    }

    /// Tasks that run on the ensemble conditioned on the origin being on a
    /// spanning giant cluster.
    pub fn conditioned(self) -> bool {
        matches!(self, Task::Alpha | Task::Mu | Task::Rate | Task::Shape)
    }

    fn needs_wrapped(self) -> bool {
        matches!(self, Task::Alpha | Task::Mu | Task::Rate | Task::Shape | Task::Triple)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub dim: usize,
    pub side: usize,
    #[serde(default = "wrapped")]
    pub boundary: Boundary,
}

fn wrapped() -> Boundary {
    Boundary::Wrapped
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_radii")]
    pub radii: Vec<usize>,
}

fn default_c1() -> f64 {
    2.0
}

fn default_radii() -> Vec<usize> {
    vec![2, 4, 8, 16]
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig {
            c1: default_c1(),
            radii: default_radii(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    /// The rate function is evaluated at `scale · x` for every alpha
    /// direction `x`.
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
}

fn default_scales() -> Vec<f64> {
    vec![0.0, 0.2, 0.4]
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            scales: default_scales(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    /// Directions are the primitive vectors of L∞-norm at most `radius`.
    #[serde(default = "default_shape_radius")]
    pub radius: i64,
    #[serde(default = "yes")]
    pub svg: bool,
}

fn default_shape_radius() -> i64 {
    2
}

fn yes() -> bool {
    true
}

impl Default for ShapeConfig {
    fn default() -> Self {
        ShapeConfig {
            radius: default_shape_radius(),
            svg: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleConfig {
    /// Defaults to `e_1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z1: Option<Site>,
    /// Defaults to `e_2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z2: Option<Site>,
    /// Cesàro depth; defaults to the top-level `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct REventConfig {
    /// Block scales `N`; the block is the one at the box center.
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
}

fn default_sizes() -> Vec<usize> {
    vec![5, 10, 20]
}

impl Default for REventConfig {
    fn default() -> Self {
        REventConfig { sizes: default_sizes() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: String,
    pub replicas: usize,
    pub tasks: Vec<Task>,
    /// Directions for the alpha, mu and rate tasks; empty selects the axes,
    /// `2 e_1` and `e_1 + e_2`.
    #[serde(default)]
    pub directions: Vec<Site>,
    /// Empty selects the default grid.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    /// Regeneration depth.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[serde(default)]
    pub workers: usize,
    #[serde(rename = "box")]
    pub lattice: BoxConfig,
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub tail: TailConfig,
    #[serde(default)]
    pub rate: RateConfig,
    #[serde(default)]
    pub shape: ShapeConfig,
    #[serde(default)]
    pub triple: TripleConfig,
    #[serde(default)]
    pub r_event: REventConfig,
}

fn default_n() -> usize {
    8
}

fn default_t_grid() -> Vec<usize> {
    vec![8, 16, 32]
}

impl ExperimentSpec {
    /// A spec with the given box, sampler and tasks and every other field at
    /// its default.
    pub fn new(lattice: BoxConfig, sampler: SamplerSpec, replicas: usize, tasks: Vec<Task>) -> Self {
        ExperimentSpec {
            name: String::new(),
            replicas,
            tasks,
            directions: Vec::new(),
            lambdas: Vec::new(),
            n: default_n(),
            t_grid: default_t_grid(),
            output_dir: None,
            workers: 0,
            lattice,
            sampler,
            tail: TailConfig::default(),
            rate: RateConfig::default(),
            shape: ShapeConfig::default(),
            triple: TripleConfig::default(),
            r_event: REventConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(vec![e.message().trim().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("specs serialize")
    }

    pub fn box_spec(&self) -> Result<BoxSpec> {
        BoxSpec::new(self.lattice.dim, self.lattice.side, self.sampler.mode(), self.lattice.boundary)
    }

    pub fn has(&self, task: Task) -> bool {
        self.tasks.contains(&task)
    }

    pub fn effective_directions(&self) -> Vec<Site> {
        if !self.directions.is_empty() {
            return self.directions.clone();
        }
        let d = self.lattice.dim;
        let mut v: Vec<Site> = (0..d).map(|a| Site::unit(d, a)).collect();
        if d >= 1 {
            v.push(Site::unit(d, 0).scale(2));
        }
        if d >= 2 {
            v.push(Site::unit(d, 0).add(&Site::unit(d, 1)));
        }
        v
    }

    pub fn effective_lambdas(&self) -> Vec<f64> {
        if self.lambdas.is_empty() {
            default_lambda_grid::<f64>()
        } else {
            self.lambdas.clone()
        }
    }

    fn triple_vectors(&self) -> (Site, Site, usize) {
        let d = self.lattice.dim;
        let z1 = self.triple.z1.clone().unwrap_or_else(|| Site::unit(d, 0));
        let z2 = self.triple.z2.clone().unwrap_or_else(|| Site::unit(d, 1.min(d.saturating_sub(1))));
        (z1, z2, self.triple.n.unwrap_or(self.n))
    }

    /// Every violated constraint, as one validation error.
    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let d = self.lattice.dim;
        if self.replicas == 0 {
            v.push("replicas must be >= 1".to_string());
        }
        if self.tasks.is_empty() {
            v.push("tasks must name at least one task".to_string());
        }
        if let Err(e) = self.box_spec() {
            v.push(format!("box: {e}"));
        }
        v.extend(self.sampler.violations());
        if self.sampler.model == Model::RandomCluster
            && self.sampler.boundary_condition == BoundaryCondition::Wired
            && self.lattice.boundary == Boundary::Wrapped
        {
            v.push("sampler.boundary_condition = wired needs box.boundary = free".to_string());
        }
        for t in &self.tasks {
            if t.needs_wrapped() && self.lattice.boundary != Boundary::Wrapped {
                v.push(format!("task {} needs box.boundary = wrapped", t.name()));
            }
        }
        let uses_directions = self.has(Task::Alpha) || self.has(Task::Mu) || self.has(Task::Rate);
        if uses_directions {
            for x in &self.directions {
                if x.dim() != d || x.is_zero() {
                    v.push(format!("directions: {x} must be a nonzero vector of dimension {d}"));
                }
            }
            if self.n == 0 {
                v.push("n must be >= 1".to_string());
            }
        }
        if self.has(Task::Alpha) || self.has(Task::Rate) {
            let l = &self.lambdas;
            if l.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                v.push("lambdas must be finite and >= 0".to_string());
            }
            if l.windows(2).any(|w| w[1] <= w[0]) {
                v.push("lambdas must be strictly increasing".to_string());
            }
        }
        if self.has(Task::Rate) && self.rate.scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            v.push("rate.scales must be finite and >= 0".to_string());
        }
        if self.has(Task::Shape) {
            if self.t_grid.is_empty() || self.t_grid.contains(&0) {
                v.push("t_grid must be nonempty with every entry >= 1".to_string());
            }
            if self.shape.radius < 1 {
                v.push("shape.radius must be >= 1".to_string());
            }
        }
        if self.has(Task::Tail) {
            if !(self.tail.c1.is_finite() && self.tail.c1 > 0.0) {
                v.push("tail.c1 must be finite and > 0".to_string());
            }
            if self.tail.radii.is_empty() || self.tail.radii.contains(&0) {
                v.push("tail.radii must be nonempty with every entry >= 1".to_string());
            }
        }
        if self.has(Task::Triple) {
            if d < 2 && self.triple.z2.is_none() {
                v.push("triple.z2 must be given when box.dim < 2".to_string());
            }
            let (z1, z2, n) = self.triple_vectors();
            for (name, z) in [("z1", &z1), ("z2", &z2)] {
                if z.dim() != d {
                    v.push(format!("triple.{name}: {z} must have dimension {d}"));
                }
            }
            if n == 0 {
                v.push("triple.n must be >= 1".to_string());
            }
        }
        if self.has(Task::REvent) && (self.r_event.sizes.is_empty() || self.r_event.sizes.contains(&0)) {
            v.push("r_event.sizes must be nonempty with every entry >= 1".to_string());
        }
        v
    }

    /// SHA-256 of the spec with the output directory and worker count
    /// cleared, neither of which affects any emitted number.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        canonical.workers = 0;
        let bytes = serde_json::to_vec(&canonical).expect("specs serialize");
        Sha256::digest(&bytes).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn effective_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("perclab-results").join(&self.hash()[..12]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskRecord {
    pub task: Task,
    pub status: TaskStatus,
    /// Files written for the task, relative to the output directory.
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub summary: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub conditioning: Conditioning,
    pub replicas: usize,
    pub attempts: u64,
    pub acceptance_fraction: f64,
    /// Estimate of the probability of the conditioning event.
    pub omega0: f64,
}

impl EnsembleSummary {
    fn of(e: &Ensemble) -> Self {
        EnsembleSummary {
            conditioning: e.conditioning,
            replicas: e.len(),
            attempts: e.attempts(),
            acceptance_fraction: e.acceptance_fraction(),
            omega0: e.omega0_probability(),
        }
    }
}

/// A file produced by a run, held in memory until emitted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub name: String,
    pub spec_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub wall_clock_secs: f64,
    pub output_dir: PathBuf,
    pub ensembles: Vec<EnsembleSummary>,
    pub tasks: Vec<TaskRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub properties: Option<Value>,
    #[serde(skip)]
    pub artifacts: Vec<Artifact>,
}

impl ResultRecord {
    pub fn failed_tasks(&self) -> Vec<Task> {
        self.tasks
            .iter()
            .filter(|t| t.status == TaskStatus::Failed)
            .map(|t| t.task)
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.failed_tasks().is_empty()
    }

    pub fn task(&self, task: Task) -> Option<&TaskRecord> {
        self.tasks.iter().find(|t| t.task == task)
    }

    pub fn artifact(&self, name: &str) -> Option<&str> {
        self.artifacts.iter().find(|a| a.name == name).map(|a| a.contents.as_str())
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("records serialize");
        s.push('\n');
        s
    }
}

type TaskOutput = (Vec<Artifact>, Value);

/// Validates `spec`, runs every task on a pool of `spec.workers` threads and
/// writes the outputs.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultRecord> {
    let record = compute(spec)?;
    emit_outputs(&record)?;
    Ok(record)
}

/// Everything [`run_experiment`] does except writing files.
pub fn compute(spec: &ExperimentSpec) -> Result<ResultRecord> {
    spec.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Resource(format!("worker pool: {e}")))?;
    let mut record = pool.install(|| compute_in_pool(spec))?;
    record.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(record)
}

fn compute_in_pool(spec: &ExperimentSpec) -> Result<ResultRecord> {
    let spec_box = spec.box_spec()?;
    let mut tasks: Vec<Task> = spec.tasks.clone();
    tasks.sort();
    tasks.dedup();

    let mut ensembles = Vec::new();
    let sample = |c: Conditioning| Ensemble::sample(&spec_box, &spec.sampler, spec.replicas, c);
    let conditioned = tasks.iter().any(|t| t.conditioned()).then(|| sample(Conditioning::OriginOnGiant));
    let plain = tasks.iter().any(|t| !t.conditioned()).then(|| sample(Conditioning::None));
    for e in [&plain, &conditioned].into_iter().flatten().flatten() {
        ensembles.push(EnsembleSummary::of(e));
    }

    let directions = spec.effective_directions();
    let lambdas = spec.effective_lambdas();
    let trace = default_trace(spec.n);
    let need_alpha = spec.has(Task::Alpha) || spec.has(Task::Rate);
    let alphas: Option<Result<Vec<AlphaCurve<f64>>>> = need_alpha.then(|| {
        let e = ensemble(&conditioned)?;
        directions
            .iter()
            .map(|x| estimate_alpha(e, x, &lambdas, &trace, &AlphaOptions::default()))
            .collect()
    });
    let mus: Option<Result<Vec<MuEstimate<f64>>>> = spec.has(Task::Mu).then(|| {
        let e = ensemble(&conditioned)?;
        directions.iter().map(|x| estimate_mu(e, x, &trace)).collect()
    });

    let mut records = Vec::new();
    let mut artifacts = Vec::new();
    for &task in &tasks {
        let out = match task {
            Task::Tail => task_tail(spec, ensemble(&plain)),
            Task::Alpha => task_alpha(shared(&alphas)),
            Task::Mu => task_mu(shared(&mus)),
            Task::Rate => task_rate(spec, shared(&alphas)),
            Task::Shape => task_shape(spec, ensemble(&conditioned)),
            Task::Triple => task_triple(spec, ensemble(&plain)),
            Task::REvent => task_r_event(spec, ensemble(&plain)),
        };
        records.push(match out {
            Ok((files, summary)) => {
                let names = files.iter().map(|a| a.name.clone()).collect();
                artifacts.extend(files);
                TaskRecord {
                    task,
                    status: TaskStatus::Ok,
                    files: names,
                    error: None,
                    summary,
                }
            }
            Err(e) => TaskRecord {
                task,
                status: TaskStatus::Failed,
                files: Vec::new(),
                error: Some(e.to_string()),
                summary: Value::Null,
            },
        });
    }

    let properties = properties_summary(&alphas, &mus, &conditioned);
    let mut versions = BTreeMap::new();
    versions.insert("perclab".to_string(), env!("CARGO_PKG_VERSION").to_string());
    Ok(ResultRecord {
        schema_version: SCHEMA_VERSION,
        name: spec.name.clone(),
        spec_hash: spec.hash(),
        seed: spec.sampler.seed,
        versions,
        wall_clock_secs: 0.0,
        output_dir: spec.effective_output_dir(),
        ensembles,
        tasks: records,
        properties,
        artifacts,
    })
}

fn ensemble(e: &Option<Result<Ensemble>>) -> Result<&Ensemble> {
    match e {
        Some(Ok(e)) => Ok(e),
        Some(Err(err)) => Err(Error::Precondition(format!("ensemble unavailable: {err}"))),
        None => Err(Error::Precondition("ensemble not sampled".into())),
    }
}

fn shared<T>(r: &Option<Result<T>>) -> Result<&T> {
    match r {
        Some(Ok(v)) => Ok(v),
        Some(Err(err)) => Err(Error::Precondition(format!("{err}"))),
        None => Err(Error::Precondition("not computed".into())),
    }
}

/// JSON number, or `null` for non-finite values.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn task_tail(spec: &ExperimentSpec, e: Result<&Ensemble>) -> Result<TaskOutput> {
    let curve = empirical_tail(&e?.configs(), spec.tail.c1, &spec.tail.radii)?;
    let rows: Vec<Value> = curve
        .rows
        .iter()
        .map(|r| json!({"r": r.r, "count": r.count, "total": r.total, "freq": num(r.freq)}))
        .collect();
    let fit = curve.fit.map(|(c2, c3)| json!({"c2": num(c2), "c3": num(c3)}));
    Ok((
        vec![Artifact {
            name: Task::Tail.csv_file(),
            contents: curve.to_csv(),
        }],
        json!({"c1": curve.c1, "rows": rows, "fit": fit}),
    ))
}

fn task_alpha(curves: Result<&Vec<AlphaCurve<f64>>>) -> Result<TaskOutput> {
    let curves = curves?;
    let mut csv = String::from(AlphaCurve::<f64>::CSV_HEADER);
    csv.push('\n');
    let mut summary = Vec::new();
    for c in curves {
        csv.push_str(c.to_csv().split_once('\n').map_or("", |(_, body)| body));
        let (monotone, concave) = grid_shape_check(c);
        summary.push(json!({
            "direction": c.direction,
            "lambdas": c.lambdas.iter().map(|&x| num(x)).collect::<Vec<_>>(),
            "estimates": c.estimates.iter().map(|&x| num(x)).collect::<Vec<_>>(),
            "ci": c.ci.iter().map(|&x| num(x)).collect::<Vec<_>>(),
            "n": c.n,
            "fallbacks": c.fallbacks,
            "monotone": monotone,
            "concave": concave,
        }));
    }
    Ok((
        vec![Artifact {
            name: Task::Alpha.csv_file(),
            contents: csv,
        }],
        json!({ "curves": summary }),
    ))
}

fn task_mu(mus: Result<&Vec<MuEstimate<f64>>>) -> Result<TaskOutput> {
    let mus = mus?;
    let mut csv = String::from(MuEstimate::<f64>::CSV_HEADER);
    csv.push('\n');
    for m in mus {
        csv.push_str(&m.csv_rows());
    }
    let estimates: Vec<Value> = mus
        .iter()
        .map(|m| {
            json!({
                "direction": m.direction,
                "estimate": num(m.estimate),
                "ci": num(m.ci),
                "first_distance": num(m.first_distance),
            })
        })
        .collect();
    Ok((
        vec![Artifact {
            name: Task::Mu.csv_file(),
            contents: csv,
        }],
        json!({"estimates": estimates, "c3": num(c3_estimate(mus))}),
    ))
}

fn task_rate(spec: &ExperimentSpec, curves: Result<&Vec<AlphaCurve<f64>>>) -> Result<TaskOutput> {
    let curves = curves?;
    let mut csv = String::from(RateFunction::<f64>::CSV_HEADER);
    csv.push('\n');
    let mut rows = Vec::new();
    for c in curves {
        for &s in &spec.rate.scales {
            let r = rate_function_scaled(c, s);
            csv.push_str(&r.csv_row());
            rows.push(json!({
                "direction": r.direction,
                "scale": num(r.scale),
                "value": num(r.value),
                "lambda_star": num(r.lambda_star),
                "diverges": r.diverges,
            }));
        }
    }
    Ok((
        vec![Artifact {
            name: Task::Rate.csv_file(),
            contents: csv,
        }],
        json!({ "rows": rows }),
    ))
}

fn task_shape(spec: &ExperimentSpec, e: Result<&Ensemble>) -> Result<TaskOutput> {
    let e = e?;
    let trace = default_trace(spec.n);
    let mus: Vec<MuEstimate<f64>> = default_directions(spec.lattice.dim, spec.shape.radius)
        .iter()
        .map(|x| estimate_mu(e, x, &trace))
        .collect::<Result<_>>()?;
    let shape = build_limit_shape(&mus)?;
    let report: HausdorffReport<f64> = shape_convergence_scan(e, &shape, &spec.t_grid)?;
    let mut files = vec![Artifact {
        name: Task::Shape.csv_file(),
        contents: report.to_csv(),
    }];
    if spec.lattice.dim == 2 && spec.shape.svg {
        let balls = spec
            .t_grid
            .iter()
            .map(|&t| empirical_ball(e, 0, t))
            .collect::<Result<Vec<_>>>()?;
        for (ball, t) in balls.iter().zip(&spec.t_grid) {
            files.push(Artifact {
                name: format!("shape_t{t}.svg"),
                contents: svg_overlay(&shape, &[ball])?,
            });
        }
        files.push(Artifact {
            name: "shape_overlay.svg".to_string(),
            contents: svg_overlay(&shape, &balls.iter().collect::<Vec<_>>())?,
        });
    }
    let vertices = shape.as_polytope().map_or(0, |p| p.vertices().len());
    Ok((
        files,
        json!({
            "vertices": vertices,
            "t_grid": spec.t_grid,
            "distances": report.distances.iter().map(|&x| num(x)).collect::<Vec<_>>(),
            "ci": report.ci.iter().map(|&x| num(x)).collect::<Vec<_>>(),
            "trend": num(report.trend),
            "strictly_decreasing": report.strictly_decreasing,
        }),
    ))
}

fn task_triple(spec: &ExperimentSpec, e: Result<&Ensemble>) -> Result<TaskOutput> {
    let (z1, z2, n) = spec.triple_vectors();
    let t: TripleDensity<f64> = estimate_triple_density(e?, &z1, &z2, n)?;
    Ok((
        vec![Artifact {
            name: Task::Triple.csv_file(),
            contents: t.to_csv(),
        }],
        json!({"z1": t.z1, "z2": t.z2, "n": n, "estimate": num(t.estimate), "ci": num(t.ci)}),
    ))
}

pub const R_EVENT_CSV_HEADER: &str = "N,count,total,freq,ci_lo,ci_hi";

fn task_r_event(spec: &ExperimentSpec, e: Result<&Ensemble>) -> Result<TaskOutput> {
    let e = e?;
    let origin = Site::zero(spec.lattice.dim);
    let mut csv = String::from(R_EVENT_CSV_HEADER);
    csv.push('\n');
    let mut rows = Vec::new();
    for &n in &spec.r_event.sizes {
        let mut count = 0;
        for m in &e.members {
            if check_regularity_event(&m.config, &origin, n)? {
                count += 1;
            }
        }
        let total = e.len();
        let freq = count as f64 / total as f64;
        let (lo, hi) = wilson_interval(count, total, Z95);
        let _ = writeln!(
            csv,
            "{n},{count},{total},{},{},{}",
            format_number(freq),
            format_number(lo),
            format_number(hi)
        );
        rows.push(json!({"N": n, "count": count, "total": total, "freq": num(freq)}));
    }
    Ok((
        vec![Artifact {
            name: Task::REvent.csv_file(),
            contents: csv,
        }],
        json!({ "rows": rows }),
    ))
}

fn properties_summary(
    alphas: &Option<Result<Vec<AlphaCurve<f64>>>>,
    mus: &Option<Result<Vec<MuEstimate<f64>>>>,
    conditioned: &Option<Result<Ensemble>>,
) -> Option<Value> {
    let a: &[AlphaCurve<f64>] = match alphas {
        Some(Ok(a)) => a,
        _ => &[],
    };
    let m: &[MuEstimate<f64>] = match mus {
        Some(Ok(m)) => m,
        _ => &[],
    };
    if a.is_empty() && m.is_empty() {
        return None;
    }
    let bounds = match (m.is_empty(), conditioned) {
        (false, Some(Ok(e))) => Some(BoundConstants {
            c3: c3_estimate(m),
            omega0: e.omega0_probability(),
        }),
        _ => None,
    };
    let report = property_report(a, m, bounds);
    let checks: Vec<Value> = report
        .checks
        .iter()
        .map(|c| json!({"name": c.name, "passed": c.passed, "margin": num(c.margin)}))
        .collect();
    Some(json!({
        "all_passed": report.all_passed(),
        "incomplete": report.incomplete,
        "missing": report.missing,
        "checks": checks,
    }))
}

/// Writes every artifact of `record` and then `summary.json` into
/// `record.output_dir`. Each file is written to a temporary name and renamed
/// into place.
pub fn emit_outputs(record: &ResultRecord) -> Result<Vec<PathBuf>> {
    let dir = &record.output_dir;
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for a in &record.artifacts {
        written.push(write_atomic(dir, &a.name, a.contents.as_bytes())?);
    }
    written.push(write_atomic(dir, SUMMARY_FILE, record.summary_json().as_bytes())?);
    Ok(written)
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// A ready-made spec for a model believed to be supercritical.
pub struct Preset {
    pub name: &'static str,
    /// Where the supercriticality claim comes from.
    pub note: &'static str,
    pub spec: ExperimentSpec,
}

fn torus(dim: usize, side: usize) -> BoxConfig {
    BoxConfig {
        dim,
        side,
        boundary: Boundary::Wrapped,
    }
}

/// Supercritical presets. Critical values quoted in the notes are external
/// results, not computed here.
pub fn presets() -> Vec<Preset> {
    let all = vec![Task::Tail, Task::Alpha, Task::Mu, Task::Rate, Task::Shape, Task::Triple, Task::REvent];
    let named = |name: &str, mut s: ExperimentSpec| {
        s.name = name.to_string();
        if s.lattice.side >= 128 {
            s.n = 16;
            s.t_grid = vec![16, 32, 64];
        }
        s
    };
    vec![
        Preset {
            name: "bond-2d",
            note: "Bernoulli bond percolation on Z^2 at p = 0.7; p_c = 1/2 exactly (Kesten 1980)",
            spec: named(
                "bond-2d",
                ExperimentSpec::new(torus(2, 256), SamplerSpec::bernoulli_bond(0.7, 1), 100, all.clone()),
            ),
        },
        Preset {
            name: "site-2d",
            note: "Bernoulli site percolation on Z^2 at p = 0.75; p_c ≈ 0.592746 (numerical, Newman-Ziff 2000)",
            spec: named(
                "site-2d",
                ExperimentSpec::new(torus(2, 256), SamplerSpec::bernoulli_site(0.75, 1), 100, all.clone()),
            ),
        },
        Preset {
            name: "bond-3d",
            note: "Bernoulli bond percolation on Z^3 at p = 0.4; p_c ≈ 0.248812 (numerical, Lorenz-Ziff 1998)",
            spec: named(
                "bond-3d",
                ExperimentSpec::new(
                    torus(3, 48),
                    SamplerSpec::bernoulli_bond(0.4, 1),
                    50,
                    vec![Task::Tail, Task::Alpha, Task::Mu, Task::Rate, Task::Triple],
                ),
            ),
        },
        Preset {
            name: "regularity-2d",
            note: "Bernoulli bond percolation on Z^2 at p = 0.85, deep in the supercritical phase",
            spec: named(
                "regularity-2d",
                ExperimentSpec::new(torus(2, 64), SamplerSpec::bernoulli_bond(0.85, 1), 200, vec![Task::REvent]),
            ),
        },
        Preset {
            name: "fk-ising-2d",
            note: "random-cluster q = 2 on Z^2 at p = 0.75; p_c(q) = sqrt(q)/(1+sqrt(q)) ≈ 0.5858 \
                   (Beffara-Duminil-Copin 2012), and slab and bulk thresholds agree in d = 2 \
                   (supercriticality is a user assertion)",
            spec: named(
                "fk-ising-2d",
                ExperimentSpec::new(
                    torus(2, 64),
                    SamplerSpec::random_cluster(0.75, 2.0, BoundaryCondition::Free, 0, 1),
                    50,
                    vec![Task::Tail, Task::Alpha, Task::Mu, Task::Triple],
                ),
            ),
        },
        Preset {
            name: "fk-q1.5-2d",
            note: "random-cluster q = 1.5 on Z^2 at p = 0.7 with heat-bath dynamics; \
                   p_c(q) = sqrt(q)/(1+sqrt(q)) ≈ 0.5505 (Beffara-Duminil-Copin 2012)",
            spec: named(
                "fk-q1.5-2d",
                ExperimentSpec::new(
                    torus(2, 32),
                    SamplerSpec::random_cluster(0.7, 1.5, BoundaryCondition::Free, 0, 1),
                    20,
                    vec![Task::Tail, Task::Mu],
                ),
            ),
        },
    ]
}

pub fn preset(name: &str) -> Option<ExperimentSpec> {
    presets().into_iter().find(|p| p.name == name).map(|p| p.spec)
}
