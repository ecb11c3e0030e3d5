use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use bubblelab::interaction::family_report;
use bubblelab::projection::{project, stationarity, BubbleTerm, ProjectionOptions, ProjectionTarget};
use bubblelab::reduction::snapshot::parse_snapshot;
use bubblelab::{Bubble, BubbleFamily, ProblemParams};
use bubblelab_bench::appendix_a::run_appendix_a;
use bubblelab_bench::appendix_b::run_appendix_b;
use bubblelab_bench::config::{ConfigError, RunConfig, SuiteManifest};
use bubblelab_bench::record::{write_csv, ExperimentRecord, Summary};
use bubblelab_bench::suite::SuiteContext;
use bubblelab_bench::sweeps::{run_projection, run_reduction, run_sharp};
use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "bubblelab", version, about = "Numerical checks of the bubble interaction estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Restrict the selected suites to one dimension.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Check manifest (TOML); defaults to the built-in one.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "bubblelab-out")]
    out: PathBuf,
    /// Seed of every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of points of every sweep.
    #[arg(long, global = true)]
    points: Option<usize>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Reduced sweeps for continuous integration.
    #[arg(long, global = true)]
    quick: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Interaction report of the `[family]` section of the configuration.
    Interactions,
    /// Bubble interaction integrals, kernel Gram matrix, p-inequality, bubble identities.
    AppendixA,
    /// Weighted integrals of the norm estimates, in four geometries.
    AppendixB,
    /// Reduction solve for the correction and its gradient scaling.
    Reduction,
    /// Two-bubble example that saturates the stability exponent.
    SharpExample,
    /// Recovery, stationarity and equivariance of the bubble projection.
    Projection,
    /// Projects the field of the `[project]` section onto bubble sums.
    Project,
    /// Every suite.
    All,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Checks(Summary),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None if cli.quick => RunConfig::quick(),
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = cli.tol {
        cfg.quadrature.rel_tol = tol;
    }
    if let Some(k) = cli.points {
        for s in [
            &mut cfg.appendix_a.separations,
            &mut cfg.appendix_a.scale_ratios,
            &mut cfg.appendix_b.radii,
            &mut cfg.reduction.radii,
            &mut cfg.reduction.norm_radii,
            &mut cfg.sharp.radii,
        ] {
            s.points = k;
        }
    }
    if let Some(d) = cli.dim {
        let all = cli.command == Command::All;
        let c = cli.command;
        if all || c == Command::AppendixA {
            cfg.appendix_a.dims = vec![d];
        }
        if all || c == Command::AppendixB {
            cfg.appendix_b.dims = vec![d];
        }
        if all || c == Command::Reduction {
            cfg.reduction.dims = vec![d];
        }
        if all || c == Command::SharpExample {
            cfg.sharp.dims = vec![d];
        }
        if all || c == Command::Projection {
            cfg.projection.dims = vec![d];
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_manifest(cli: &Cli, cfg: &RunConfig) -> Result<SuiteManifest, Failure> {
    let m = match &cli.manifest {
        Some(p) => SuiteManifest::from_path(p)?,
        None => SuiteManifest::builtin(),
    };
    Ok(m.with_overrides(&cfg.tolerances)?)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn run_suites(cli: &Cli, cfg: &RunConfig) -> Result<(), Failure> {
    let manifest = load_manifest(cli, cfg)?;
    let ctx = SuiteContext::new(cfg, &manifest);
    type Runner = fn(&SuiteContext<'_>) -> Vec<ExperimentRecord>;
    let suites: Vec<(&str, Runner)> = match cli.command {
        Command::AppendixA => vec![("appendix-a", run_appendix_a)],
        Command::AppendixB => vec![("appendix-b", run_appendix_b)],
        Command::Reduction => vec![("reduction", run_reduction)],
        Command::SharpExample => vec![("sharp", run_sharp)],
        Command::Projection => vec![("projection", run_projection)],
        _ => vec![
            ("appendix-a", run_appendix_a),
            ("appendix-b", run_appendix_b),
            ("reduction", run_reduction),
            ("sharp", run_sharp),
            ("projection", run_projection),
        ],
    };
    fs::create_dir_all(&cli.out).map_err(|e| usage(format!("cannot create {}: {e}", cli.out.display())))?;
    let started = unix_now();
    let t0 = Instant::now();
    let mut all = Vec::new();
    let mut timings = Vec::new();
    for (name, run) in suites {
        let ts = Instant::now();
        let records = run(&ctx);
        let path = cli.out.join(format!("{name}.csv"));
        let file = fs::File::create(&path).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
        write_csv(std::io::BufWriter::new(file), &records).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
        timings.push(json!({
            "suite": name,
            "csv": path.file_name().map(|f| f.to_string_lossy().into_owned()),
            "runtime_s": ts.elapsed().as_secs_f64(),
            "records": records.iter().map(|r| json!({
                "check": r.check,
                "n": r.n,
                "geometry": r.geometry,
                "runtime_s": r.runtime_s,
            })).collect::<Vec<_>>(),
        }));
        all.extend(records);
    }
    let summary = Summary::of(&all);
    let mut text = String::new();
    for r in &all {
        text.push_str(&format!(
            "{} {} {} n={} {} observed={} tolerance={}\n",
            if r.pass { "PASS" } else { "FAIL" },
            r.suite,
            r.check,
            r.n,
            r.geometry,
            bubblelab_bench::record::fmt_num(r.observed),
            bubblelab_bench::record::fmt_num(r.tolerance),
        ));
    }
    text.push_str(&format!(
        "total {} passed {} failed {}\n",
        summary.total, summary.passed, summary.failed
    ));
    write_file(&cli.out.join("summary.txt"), &text)?;
    print!("{text}");
    let meta = json!({
        "tool": "bubblelab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": format!("{:?}", cli.command),
        "started_unix": started,
        "total_runtime_s": t0.elapsed().as_secs_f64(),
        "threads": available_threads(),
        "config": cfg.to_toml_string(),
        "summary": summary,
        "suites": timings,
    });
    write_file(
        &cli.out.join("metadata.json"),
        &serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )?;
    if summary.all_pass() {
        Ok(())
    } else {
        Err(Failure::Checks(summary))
    }
}

fn available_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run_interactions(cli: &Cli, cfg: &RunConfig) -> Result<(), Failure> {
    let fc = cfg
        .family
        .as_ref()
        .ok_or_else(|| usage("the configuration has no [family] section"))?;
    let pp = ProblemParams::new(fc.n).map_err(usage)?;
    let bubbles = fc
        .bubbles
        .iter()
        .map(|b| Bubble::new(b.center.clone(), b.scale))
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;
    let fam = BubbleFamily::new(pp, bubbles).map_err(usage)?;
    let report = family_report(&fam, fc.delta);
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::create_dir_all(&cli.out).map_err(|e| usage(format!("cannot create {}: {e}", cli.out.display())))?;
    write_file(&cli.out.join("interactions.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn run_project(cli: &Cli, cfg: &RunConfig) -> Result<(), Failure> {
    let pc = cfg
        .project
        .as_ref()
        .ok_or_else(|| usage("the configuration has no [project] section"))?;
    let pp = ProblemParams::new(pc.n).map_err(usage)?;
    let field = match &pc.snapshot {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let f = parse_snapshot(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            if f.grid().dim() != pc.n {
                return Err(usage(format!(
                    "{}: snapshot is for n = {}, configuration has n = {}",
                    path.display(),
                    f.grid().dim(),
                    pc.n
                )));
            }
            Some(f)
        }
        None => None,
    };
    let terms = pc
        .terms
        .iter()
        .map(|b| {
            Ok(BubbleTerm {
                coeff: b.coeff,
                bubble: Bubble::on_axis(pc.n, b.t, b.scale)?,
            })
        })
        .collect::<bubblelab::Result<Vec<_>>>()
        .map_err(usage)?;
    let target = ProjectionTarget::new(pp, terms, field).map_err(usage)?;
    let spec: Vec<(f64, f64)> = pc.initial.iter().map(|b| (b.t, b.scale)).collect();
    let initial = BubbleFamily::on_axis(pp, &spec).map_err(usage)?;
    let opts = ProjectionOptions {
        tol: pc.tol,
        max_iter: pc.max_iter,
        quad_rel: cfg.quadrature.rel_tol,
    };
    let t0 = Instant::now();
    let res = project(&target, &initial, &opts).map_err(usage)?;
    let grad = stationarity(&target, &res.params, &opts).map_err(usage)?;
    let out = json!({
        "n": pc.n,
        "bubbles": res.params.bubbles().iter().map(|b| json!({"t": b.axial(), "scale": b.scale()})).collect::<Vec<_>>(),
        "delta": res.delta_u,
        "initial_delta": res.initial_delta,
        "stationarity_defect": res.stationarity_defect,
        "stationarity": grad,
        "iterations": res.iterations,
        "converged": res.converged,
    });
    fs::create_dir_all(&cli.out).map_err(|e| usage(format!("cannot create {}: {e}", cli.out.display())))?;
    let text = serde_json::to_string_pretty(&out).expect("result serializes");
    write_file(&cli.out.join("project.json"), &text)?;
    write_file(
        &cli.out.join("metadata.json"),
        &serde_json::to_string_pretty(&json!({
            "tool": "bubblelab",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "Project",
            "started_unix": unix_now(),
            "total_runtime_s": t0.elapsed().as_secs_f64(),
            "config": cfg.to_toml_string(),
        }))
        .expect("metadata serializes"),
    )?;
    println!("{text}");
    if res.converged {
        Ok(())
    } else {
        Err(Failure::Checks(Summary {
            total: 1,
            passed: 0,
            failed: 1,
        }))
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Interactions => run_interactions(cli, &cfg),
        Command::Project => run_project(cli, &cfg),
        _ => run_suites(cli, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(s)) => {
            eprintln!("{} of {} checks failed", s.failed, s.total);
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
