//! Command execution. Inputs are loaded and every solve finishes before the
//! output directory is touched, so a failed run leaves no artifacts behind.

use std::fmt::Write as _;
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use fastsvt_core::dense::derive_seed;
use fastsvt_core::io::{self, GrayImage};
use fastsvt_core::monitor::{has_interior_minimum, holdout_mae, OverfitDetector};
use fastsvt_core::par;
use fastsvt_core::svt::{self, default_config, Backend, IterationRecord, StopRule, SvtConfig, SvtOutcome};
use fastsvt_core::synth::smooth_low_rank_image;
use fastsvt_core::{LowRankFactors, SampledMatrix};

use crate::args::SolverArgs;
use crate::error::CliError;
use crate::manifest::{Job, ResolvedRun, RunManifest, SyntheticImage, MANIFEST_SCHEMA_VERSION};

/// Default stop rules per command.
pub const IMAGE_STOP_MAE: f64 = 1.0;
pub const RATINGS_STOP_MAE: f64 = 0.1;
pub const COMPLETE_STOP_MAE: f64 = 0.1;
pub const BENCH_MAXIT: usize = 20;
/// Patience of the overfitting report when no early stop was requested.
pub const REPORT_PATIENCE: usize = 5;

const SAMPLE_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const SYNTH_STREAM: u64 = 3;

/// A fully specified invocation, from flags or from a manifest.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub job: Job,
    pub solver: SolverArgs,
    pub out_dir: PathBuf,
    pub trace_out: Option<PathBuf>,
    /// Configurations recorded by a previous run; a re-run must resolve to
    /// exactly these.
    pub expect: Option<Vec<ResolvedRun>>,
}

impl Invocation {
    pub fn from_manifest(m: RunManifest, out_dir: Option<PathBuf>) -> Self {
        let trace_out = match (&out_dir, m.trace_out) {
            (Some(_), Some(t)) => Some(PathBuf::from(t.file_name().unwrap_or("trace.csv".as_ref()))),
            (_, t) => t,
        };
        Invocation {
            job: m.job,
            solver: m.solver,
            out_dir: out_dir.unwrap_or(m.out_dir),
            trace_out,
            expect: Some(m.runs),
        }
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub converged: bool,
    pub out_dir: PathBuf,
    pub summary: Value,
}

enum Artifact {
    Text(String),
    Bytes(Vec<u8>),
    Factors(LowRankFactors),
    Trace(Vec<IterationRecord>),
    Image(GrayImage),
}

/// `U.mtx`, `sigma.mtx` and `V.mtx` inside `dir`.
fn factor_paths(dir: &Path) -> [PathBuf; 3] {
    ["U.mtx", "sigma.mtx", "V.mtx"].map(|f| dir.join(f))
}

struct Staged {
    files: Vec<(PathBuf, Artifact)>,
}

impl Staged {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, path: PathBuf, a: Artifact) {
        self.files.push((path, a));
    }

    /// Writes everything, returning the paths in write order.
    fn commit(self, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(out_dir).map_err(|e| CliError::Output {
            path: out_dir.display().to_string(),
            source: e.into(),
        })?;
        let mut written = Vec::new();
        for (path, artifact) in self.files {
            let out = |source: fastsvt_core::Error| CliError::Output {
                path: path.display().to_string(),
                source,
            };
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| out(e.into()))?;
            }
            match artifact {
                Artifact::Text(s) => fs::write(&path, s).map_err(|e| out(e.into()))?,
                Artifact::Bytes(b) => fs::write(&path, b).map_err(|e| out(e.into()))?,
                Artifact::Factors(f) => {
                    let paths = factor_paths(&path);
                    io::write_dense_array(f.u().matrix(), &paths[0]).map_err(out)?;
                    io::write_vector_array(f.sigma(), &paths[1]).map_err(out)?;
                    io::write_dense_array(f.v().matrix(), &paths[2]).map_err(out)?;
                    written.extend(paths);
                    continue;
                }
                Artifact::Trace(t) => {
                    io::write_trace_csv(&t, &path).map_err(out)?;
                    let json = path.with_extension("json");
                    io::write_trace_json(&t, &json).map_err(out)?;
                    written.push(path);
                    written.push(json);
                    continue;
                }
                Artifact::Image(img) => io::write_pgm(&img, &path).map_err(out)?,
            }
            written.push(path);
        }
        Ok(written)
    }
}

/// Applies flag overrides on top of the input-derived defaults.
pub fn resolve_config(solver: &SolverArgs, a: &SampledMatrix, maxit_default: Option<usize>) -> SvtConfig {
    let mut cfg = default_config(a);
    if let Some(m) = maxit_default {
        cfg.maxit = m;
    }
    let SolverArgs {
        tau,
        delta,
        t0,
        dt,
        np,
        beta,
        eps_threshold0,
        maxit,
        seed,
        ..
    } = solver.clone();
    cfg.tau = tau.unwrap_or(cfg.tau);
    cfg.delta = delta.unwrap_or(cfg.delta);
    cfg.t0 = t0.unwrap_or(cfg.t0);
    cfg.dt = dt.unwrap_or(cfg.dt);
    cfg.np = np.unwrap_or(cfg.np);
    cfg.beta = beta.unwrap_or(cfg.beta);
    cfg.eps_threshold0 = eps_threshold0.unwrap_or(cfg.eps_threshold0);
    cfg.maxit = maxit.unwrap_or(cfg.maxit);
    cfg.seed = seed;
    cfg
}

fn stop_rule(solver: &SolverArgs, default: StopRule) -> StopRule {
    match (solver.stop_mae, solver.stop_residual) {
        (Some(v), _) => StopRule::TrainMae(v),
        (None, Some(v)) => StopRule::Residual(v),
        (None, None) => default,
    }
}

fn validate(cfg: &SvtConfig, stop: StopRule) -> Result<(), CliError> {
    cfg.validate()?;
    let bound = match stop {
        StopRule::TrainMae(v) | StopRule::Residual(v) => v,
    };
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(CliError::Input(format!(
            "stop threshold must be finite and non-negative, got {bound}"
        )));
    }
    Ok(())
}

fn check_expected(inv: &Invocation, runs: &[ResolvedRun]) -> Result<(), CliError> {
    match &inv.expect {
        Some(expected) if expected.as_slice() != runs => Err(CliError::Input(
            "inputs resolve to a different configuration than the manifest records; \
             the input files have changed"
                .into(),
        )),
        _ => Ok(()),
    }
}

fn input_err<'a>(what: &'a str, path: &'a Path) -> impl FnOnce(fastsvt_core::Error) -> CliError + 'a {
    let what = what.to_string();
    move |e| CliError::Input(format!("cannot read {what} {}: {e}", path.display()))
}

fn trace_path(inv: &Invocation) -> PathBuf {
    match &inv.trace_out {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => inv.out_dir.join(p),
        None => inv.out_dir.join("trace.csv"),
    }
}

fn outcome_summary(out: &SvtOutcome) -> Value {
    let last = out.trace.last();
    json!({
        "iterations": out.trace.len(),
        "stop_reason": out.stop_reason,
        "converged": out.converged(),
        "rank": out.factors.rank(),
        "sketch_rank": last.map(|r| r.sketch_rank),
        "residual": last.map(|r| r.residual),
        "train_mae": last.map(|r| r.train_mae),
        "svd_ms": out.trace.iter().map(|r| r.sketch_ms).sum::<f64>(),
        "total_ms": last.map(|r| r.total_ms),
    })
}

/// Executes an invocation and writes its artifacts.
pub fn execute(inv: &Invocation) -> Result<RunReport, CliError> {
    if let Some(n) = inv.solver.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        if !par::init_threads(n) && par::num_threads() != n {
            log::warn!("thread pool already initialised with {} threads", par::num_threads());
        }
    }
    let backend = inv.solver.backend();
    match &inv.job {
        Job::Complete { matrix } => run_complete(inv, matrix, backend),
        Job::Image {
            image,
            synthetic,
            fraction,
        } => run_image(inv, image.as_deref(), synthetic.as_ref(), *fraction, backend),
        Job::Ratings {
            ratings,
            separator,
            train_fraction,
            early_stop_patience,
        } => run_ratings(inv, ratings, separator, *train_fraction, *early_stop_patience, backend),
        Job::Bench {
            sizes,
            backends,
            rank,
            fraction,
        } => run_bench(inv, sizes, backends, *rank, *fraction),
    }
}

fn finish(
    inv: &Invocation,
    mut staged: Staged,
    seeds: Vec<(String, u64)>,
    runs: Vec<ResolvedRun>,
    summary: Value,
    converged: bool,
) -> Result<RunReport, CliError> {
    let manifest_path = inv.out_dir.join("manifest.json");
    let summary_path = inv.out_dir.join("summary.json");
    staged.add(
        summary_path.clone(),
        Artifact::Text(serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n"),
    );
    let mut outputs: Vec<PathBuf> = staged
        .files
        .iter()
        .flat_map(|(p, a)| match a {
            Artifact::Factors(_) => factor_paths(p).to_vec(),
            Artifact::Trace(_) => vec![p.clone(), p.with_extension("json")],
            _ => vec![p.clone()],
        })
        .collect();
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        job: inv.job.clone(),
        solver: inv.solver.clone(),
        threads: par::num_threads(),
        out_dir: inv.out_dir.clone(),
        trace_out: inv.trace_out.clone(),
        seeds,
        runs,
        outputs: outputs.iter().map(|p| relative_to(p, &inv.out_dir)).collect(),
    };
    staged.add(
        manifest_path,
        Artifact::Text(serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n"),
    );
    staged.commit(&inv.out_dir)?;
    Ok(RunReport {
        converged,
        out_dir: inv.out_dir.clone(),
        summary,
    })
}

fn relative_to(p: &Path, base: &Path) -> PathBuf {
    p.strip_prefix(base)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| p.to_path_buf())
}

fn run_complete(inv: &Invocation, matrix: &Path, backend: Backend) -> Result<RunReport, CliError> {
    let a = io::read_matrix_market(matrix).map_err(input_err("matrix", matrix))?;
    let cfg = resolve_config(&inv.solver, &a, None);
    let stop = stop_rule(&inv.solver, StopRule::TrainMae(COMPLETE_STOP_MAE));
    validate(&cfg, stop)?;
    let runs = vec![ResolvedRun {
        label: "complete".into(),
        backend,
        stop,
        config: cfg.clone(),
    }];
    check_expected(inv, &runs)?;

    let out = svt::solve(&a, &cfg, stop, backend, None)?;
    let mut summary = outcome_summary(&out);
    summary["command"] = json!("complete");
    summary["shape"] = json!([a.nrows(), a.ncols(), a.nnz()]);

    let mut staged = Staged::new();
    staged.add(inv.out_dir.clone(), Artifact::Factors(out.factors.clone()));
    staged.add(trace_path(inv), Artifact::Trace(out.trace.clone()));
    let converged = out.converged();
    finish(inv, staged, Vec::new(), runs, summary, converged)
}

fn run_image(
    inv: &Invocation,
    image: Option<&Path>,
    synthetic: Option<&SyntheticImage>,
    fraction: f64,
    backend: Backend,
) -> Result<RunReport, CliError> {
    let seed = inv.solver.seed;
    let sample_seed = derive_seed(seed, SAMPLE_STREAM);
    let mut seeds = vec![("sample".to_string(), sample_seed)];
    let img = match (image, synthetic) {
        (Some(path), _) => io::read_pgm(path).map_err(input_err("image", path))?,
        (None, Some(s)) => {
            let synth_seed = derive_seed(seed, SYNTH_STREAM);
            seeds.push(("synthetic".into(), synth_seed));
            smooth_low_rank_image(s.size, s.size, s.rank, synth_seed)?
        }
        (None, None) => return Err(CliError::Input("an image file or --synthetic is required".into())),
    };
    let a = io::sample_image(&img, fraction, sample_seed)?;
    let cfg = resolve_config(&inv.solver, &a, None);
    let stop = stop_rule(&inv.solver, StopRule::TrainMae(IMAGE_STOP_MAE));
    validate(&cfg, stop)?;
    let runs = vec![ResolvedRun {
        label: "image".into(),
        backend,
        stop,
        config: cfg.clone(),
    }];
    check_expected(inv, &runs)?;

    let out = svt::solve(&a, &cfg, stop, backend, None)?;
    let recovered = out.factors.to_dense();
    let full_mae = img.mae_against(&recovered)?;
    let mut summary = outcome_summary(&out);
    summary["command"] = json!("image");
    summary["shape"] = json!([img.height(), img.width(), a.nnz()]);
    summary["full_image_mae"] = json!(full_mae);

    let mut staged = Staged::new();
    staged.add(inv.out_dir.clone(), Artifact::Factors(out.factors.clone()));
    staged.add(trace_path(inv), Artifact::Trace(out.trace.clone()));
    staged.add(
        inv.out_dir.join("recovered.pgm"),
        Artifact::Image(GrayImage::from_matrix(&recovered)?),
    );
    if synthetic.is_some() {
        staged.add(inv.out_dir.join("original.pgm"), Artifact::Image(img));
    }
    let converged = out.converged();
    finish(inv, staged, seeds, runs, summary, converged)
}

fn run_ratings(
    inv: &Invocation,
    path: &Path,
    separator: &str,
    train_fraction: f64,
    patience: Option<usize>,
    backend: Backend,
) -> Result<RunReport, CliError> {
    let ds = io::read_ratings(path, separator).map_err(input_err("ratings", path))?;
    let split_seed = derive_seed(inv.solver.seed, SPLIT_STREAM);
    let (train, test) = io::split_ratings(&ds, train_fraction, split_seed)?;
    let cfg = resolve_config(&inv.solver, &train, None);
    let stop = stop_rule(&inv.solver, StopRule::TrainMae(RATINGS_STOP_MAE));
    validate(&cfg, stop)?;
    if patience == Some(0) {
        return Err(CliError::Input("--early-stop-patience must be at least 1".into()));
    }
    let runs = vec![ResolvedRun {
        label: "ratings".into(),
        backend,
        stop,
        config: cfg.clone(),
    }];
    check_expected(inv, &runs)?;

    let mut detector = OverfitDetector::new(patience.unwrap_or(REPORT_PATIENCE));
    let mut fired_at = None;
    let mut holdout_failure = None;
    let mut observer = |rec: &mut IterationRecord, x: &LowRankFactors| match holdout_mae(&test, x) {
        Ok(mae) => {
            rec.test_mae = Some(mae);
            if detector.observe(rec.iter, mae) && fired_at.is_none() {
                fired_at = Some(rec.iter);
            }
            if patience.is_some() && fired_at.is_some() {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        }
        Err(e) => {
            holdout_failure = Some(e);
            ControlFlow::Break(())
        }
    };
    let out = svt::solve(&train, &cfg, stop, backend, Some(&mut observer))?;
    if let Some(e) = holdout_failure {
        return Err(CliError::Solver(e));
    }

    let curve: Vec<f64> = out.trace.iter().filter_map(|r| r.test_mae).collect();
    let (lo, hi) = ds.rating_range();
    let mut summary = outcome_summary(&out);
    summary["command"] = json!("ratings");
    summary["shape"] = json!([ds.nusers(), ds.nitems(), ds.len()]);
    summary["train_size"] = json!(train.nnz());
    summary["test_size"] = json!(test.nnz());
    summary["rating_range"] = json!([lo, hi]);
    summary["provenance"] = json!(ds.provenance());
    summary["test_mae"] = json!(curve.last());
    summary["best_test"] = json!(detector.best().map(|(i, e)| json!({"iter": i, "mae": e})));
    summary["overfitting_detected_at"] = json!(fired_at);
    summary["test_curve_interior_minimum"] = json!(has_interior_minimum(&curve).map(|k| out
        .trace
        .iter()
        .filter(|r| r.test_mae.is_some())
        .nth(k)
        .map(|r| r.iter)));

    let mut staged = Staged::new();
    staged.add(inv.out_dir.clone(), Artifact::Factors(out.factors.clone()));
    staged.add(trace_path(inv), Artifact::Trace(out.trace.clone()));
    let (users, items) = (inv.out_dir.join("users.csv"), inv.out_dir.join("items.csv"));
    let mut buf = (String::new(), String::new());
    for (ids, text) in [(ds.user_ids(), &mut buf.0), (ds.item_ids(), &mut buf.1)] {
        text.push_str("index,original_id\n");
        for (k, id) in ids.iter().enumerate() {
            let _ = writeln!(text, "{k},{id}");
        }
    }
    staged.add(users, Artifact::Text(buf.0));
    staged.add(items, Artifact::Text(buf.1));
    let converged = out.converged() || fired_at.is_some() && patience.is_some();
    finish(
        inv,
        staged,
        vec![("split".into(), split_seed)],
        runs,
        summary,
        converged,
    )
}

fn run_bench(
    inv: &Invocation,
    sizes: &[usize],
    backends: &[String],
    rank: usize,
    fraction: f64,
) -> Result<RunReport, CliError> {
    if sizes.is_empty() || backends.is_empty() {
        return Err(CliError::Input("bench needs at least one size and one backend".into()));
    }
    let seed = inv.solver.seed;
    let sample_seed = derive_seed(seed, SAMPLE_STREAM);
    let synth_seed = derive_seed(seed, SYNTH_STREAM);
    let stop = stop_rule(&inv.solver, StopRule::Residual(0.0));

    let mut instances = Vec::new();
    let mut runs = Vec::new();
    for &size in sizes {
        let img = smooth_low_rank_image(size, size, rank, derive_seed(synth_seed, size as u64))?;
        let a = io::sample_image(&img, fraction, sample_seed)?;
        let cfg = resolve_config(&inv.solver, &a, Some(BENCH_MAXIT));
        validate(&cfg, stop)?;
        for name in backends {
            let solver = SolverArgs {
                backend: name.clone(),
                ..inv.solver.clone()
            };
            runs.push(ResolvedRun {
                label: format!("bench-{size}-{name}"),
                backend: solver.backend(),
                stop,
                config: cfg.clone(),
            });
        }
        instances.push((size, a));
    }
    check_expected(inv, &runs)?;

    let mut csv = String::from("size,iter,backend,svd_ms,rank,sketch_rank\n");
    let mut per_run = Vec::new();
    let mut run_iter = runs.iter();
    for (size, a) in &instances {
        for _ in backends {
            let run = run_iter.next().expect("one resolved run per size and backend");
            let out = svt::solve(a, &run.config, run.stop, run.backend, None)?;
            for r in &out.trace {
                let _ = writeln!(
                    csv,
                    "{size},{},{},{:?},{},{}",
                    r.iter,
                    run.backend.name(),
                    r.sketch_ms,
                    r.rank,
                    r.sketch_rank
                );
            }
            let total: f64 = out.trace.iter().map(|r| r.sketch_ms).sum();
            per_run.push(json!({
                "size": size,
                "backend": run.backend.name(),
                "iterations": out.trace.len(),
                "mean_svd_ms": total / out.trace.len().max(1) as f64,
                "total_svd_ms": total,
                "final_rank": out.factors.rank(),
            }));
        }
    }
    let summary = json!({ "command": "bench", "runs": per_run });
    let mut staged = Staged::new();
    staged.add(inv.out_dir.join("bench.csv"), Artifact::Bytes(csv.into_bytes()));
    let seeds = vec![("sample".into(), sample_seed), ("synthetic".into(), synth_seed)];
    finish(inv, staged, seeds, runs, summary, true)
}
