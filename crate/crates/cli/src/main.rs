//! `perclab` command-line interface.
//!
//! Exit codes: 0 success, 2 invalid spec, 3 some task failed, 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use perclab::experiment::{self, ExperimentSpec, ResultRecord};
use perclab::samplers::{Model, RandomClusterChain};
use perclab::stats::integrated_autocorrelation;
use perclab::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_PARTIAL: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "perclab", version, about = "Random walks on supercritical percolation clusters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of an experiment spec and write its outputs.
    Run {
        spec: PathBuf,
        /// Overrides the spec's output directory.
        #[arg(long, env = "PERCLAB_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Overrides the spec's worker count (0 = one per core).
        #[arg(long, env = "PERCLAB_WORKERS")]
        workers: Option<usize>,
    },
    /// Check a spec and list every violation.
    Validate { spec: PathBuf },
    /// Print the built-in supercritical presets.
    Presets {
        /// Print the full TOML spec of one preset.
        #[arg(long)]
        show: Option<String>,
    },
    /// Integrated autocorrelation time of the open-edge fraction along the
    /// random-cluster chain of a spec, to choose the number of sweeps.
    Autocorr {
        spec: PathBuf,
        /// Sweeps to record.
        #[arg(long, default_value_t = 2000)]
        sweeps: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { spec, output_dir, workers } => run(&spec, output_dir, workers),
        Command::Validate { spec } => validate(&spec),
        Command::Presets { show } => presets(show.as_deref()),
        Command::Autocorr { spec, sweeps } => autocorr(&spec, sweeps),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Validation(v) => {
            for m in v {
                eprintln!("  - {m}");
            }
            ExitCode::from(EXIT_VALIDATION)
        }
        Error::Io(_) => ExitCode::from(EXIT_IO),
        _ => ExitCode::from(EXIT_PARTIAL),
    }
}

fn load(path: &Path) -> Result<ExperimentSpec, Error> {
    ExperimentSpec::load(path).and_then(|s| s.validate().map(|_| s))
}

fn run(path: &Path, output_dir: Option<PathBuf>, workers: Option<usize>) -> ExitCode {
    let mut spec = match load(path) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    if output_dir.is_some() {
        spec.output_dir = output_dir;
    }
    if let Some(w) = workers {
        spec.workers = w;
    }
    let record = match experiment::compute(&spec) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if let Err(e) = experiment::emit_outputs(&record) {
        return fail(&e);
    }
    report(&record)
}

fn report(record: &ResultRecord) -> ExitCode {
    println!("spec {}  seed {}  {:.2}s", &record.spec_hash[..12], record.seed, record.wall_clock_secs);
    for e in &record.ensembles {
        println!(
            "ensemble {:?}: {} replicas, {} attempts, omega0 {:.4}",
            e.conditioning, e.replicas, e.attempts, e.omega0
        );
    }
    for t in &record.tasks {
        match &t.error {
            None => println!("{:<8} ok      {}", t.task.name(), t.files.join(" ")),
            Some(err) => println!("{:<8} FAILED  {err}", t.task.name()),
        }
    }
    println!("outputs in {}", record.output_dir.display());
    if record.is_complete() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PARTIAL)
    }
}

fn validate(path: &Path) -> ExitCode {
    match load(path) {
        Ok(s) => {
            println!("ok: {} task(s), spec {}", s.tasks.len(), &s.hash()[..12]);
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn presets(show: Option<&str>) -> ExitCode {
    let all = experiment::presets();
    match show {
        Some(name) => match all.iter().find(|p| p.name == name) {
            Some(p) => {
                println!("# {}", p.note);
                print!("{}", p.spec.to_toml());
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("error: no preset named {name:?}");
                ExitCode::from(EXIT_VALIDATION)
            }
        },
        None => {
            for p in &all {
                println!("{:<14} {}", p.name, p.note);
            }
            ExitCode::SUCCESS
        }
    }
}

fn autocorr(path: &Path, sweeps: usize) -> ExitCode {
    let spec = match load(path) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    if spec.sampler.model != Model::RandomCluster {
        println!("bernoulli samples are exact; autocorrelation time 1");
        return ExitCode::SUCCESS;
    }
    let chain = spec.box_spec().and_then(|b| RandomClusterChain::new(b, &spec.sampler));
    let mut chain = match chain {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let total = chain.config().num_states() as f64;
    let series: Vec<f64> = (0..sweeps)
        .map(|_| {
            chain.sweep();
            chain.config().count_open() as f64 / total
        })
        .collect();
    let tail = &series[sweeps / 2..];
    let tau = integrated_autocorrelation(tail);
    println!("dynamics {:?}", chain.dynamics());
    println!("open fraction (second half) {:.5}", tail.iter().sum::<f64>() / tail.len() as f64);
    println!("integrated autocorrelation time {tau:.2} sweeps");
    println!("configured burn-in {} sweeps", spec.sampler.effective_sweeps(spec.lattice.side));
    ExitCode::SUCCESS
}
