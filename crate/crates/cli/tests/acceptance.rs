//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if a criterion outside `KNOWN_FAILURES` fails. Solver work runs on
//! one thread.

use std::fs;
use std::ops::ControlFlow;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use fastsvt_core::dense::{derive_seed, DenseBlock, LowRankFactors};
use fastsvt_core::io::{sample_image, split_ratings};
use fastsvt_core::monitor::{has_interior_minimum, holdout_mae, OverfitDetector};
use fastsvt_core::par;
use fastsvt_core::sketch::{self, qb_extend, qb_init, SketchParams};
use fastsvt_core::sparse::{project_low_rank, sp_axpy, sp_frob_norm_sq, SampledMatrix};
use fastsvt_core::svt::{self, default_config, kickstart, shrink, Backend, IterationRecord, StopRule};
use fastsvt_core::synth::{
    geometric_spectrum_matrix, low_rank_matrix, sample_uniform, smooth_low_rank_image, synthetic_ratings, RatingsSpec,
};

type Verdict = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    check: fn() -> Verdict,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T>(r: fastsvt_core::Result<T>) -> Result<T, String> {
    r.map_err(|err| err.to_string())
}

fn full(a: &DMatrix<f64>) -> SampledMatrix {
    sample_uniform(a, 1.0, 0).unwrap()
}

fn frob2(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Singular values of a dense matrix, largest first.
fn oracle_sigma(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Dense SVD of a dense matrix as sorted factors.
fn oracle_factors(a: &DMatrix<f64>) -> LowRankFactors {
    let svd = a.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let uu = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let vv = DMatrix::from_fn(vt.ncols(), order.len(), |r, c| vt[(order[c], r)]);
    let s = order.iter().map(|&k| svd.singular_values[k]).collect();
    LowRankFactors::new(DenseBlock::new(uu).unwrap(), s, DenseBlock::new(vv).unwrap()).unwrap()
}

fn dims(k: u64) -> (usize, usize) {
    (30 + (k as usize * 37) % 171, 30 + (k as usize * 61) % 171)
}

fn ac1_qb_identity() -> Verdict {
    let mut steps = 0;
    let mut worst = 0.0f64;
    for k in 0..50u64 {
        let (m, n) = dims(k);
        let dense = geometric_spectrum_matrix(m, n, 0.9, derive_seed(100, k)).unwrap();
        let y = if k % 2 == 0 {
            full(&dense)
        } else {
            e(sample_uniform(&dense, 0.1, derive_seed(101, k)))?
        };
        let yd = y.to_dense();
        let ny = frob2(&yd);
        let np = (k % 3) as usize;
        let mut state = e(qb_init(&y, 5, np, derive_seed(102, k)))?;
        let mut round = 0;
        loop {
            let lhs = frob2(&(&yd - state.q() * state.b()));
            let rhs = ny - state.norm_b();
            let rel = (lhs - rhs).abs() / ny;
            worst = worst.max(rel);
            steps += 1;
            ensure(rel <= 1e-8, || {
                format!("instance {k} ({m}x{n}) step {round}: relative identity gap {rel:.2e}")
            })?;
            if state.is_saturated() {
                break;
            }
            round += 1;
            state = e(qb_extend(state, &y, 10, np, derive_seed(103, k * 1000 + round)))?;
        }
    }
    Ok(format!("{steps} steps, worst relative gap {worst:.1e}"))
}

fn ac2_fixed_precision() -> Verdict {
    let eps_grid = [0.1, 0.03, 0.01, 1e-3];
    let (mut checked, mut saturated) = (0, 0);
    let mut margin = f64::INFINITY;
    for k in 0..30u64 {
        let (m, n) = dims(k + 50);
        let ratio = 0.7 + 0.25 * (k % 5) as f64 / 4.0;
        let a = geometric_spectrum_matrix(m, n, ratio, derive_seed(200, k)).unwrap();
        let y = full(&a);
        let na = frob2(&a);
        let params = SketchParams {
            t: 5,
            dt: 5 + (k % 3) as usize * 5,
            np: (k % 2) as usize,
            eps_threshold: eps_grid[k as usize % 4],
            seed: derive_seed(201, k),
            oversample: 0,
        };
        // A recycled basis from a nearby matrix.
        let noise = low_rank_matrix(m, n, 3, derive_seed(202, k)).unwrap();
        let near = &a + noise * (0.01 * (na / (m * n * 3) as f64).sqrt());
        let u_prev = e(sketch::r3svd(&full(&near), &params))?.factors.u().clone();
        for (label, out) in [
            ("r3svd", e(sketch::r3svd(&y, &params))?),
            ("r4svd", e(sketch::r4svd(&y, &u_prev, &params))?),
        ] {
            if out.saturated {
                saturated += 1;
                continue;
            }
            let err = frob2(&(&a - out.factors.to_dense())) / na;
            checked += 1;
            margin = margin.min(params.eps_threshold + 1e-8 - err);
            ensure(err <= params.eps_threshold + 1e-8, || {
                format!(
                    "{label} instance {k}: error^2 {err:.3e} above target {:.1e}",
                    params.eps_threshold
                )
            })?;
        }
    }
    ensure(checked >= 50, || format!("only {checked} unsaturated outputs"))?;
    Ok(format!(
        "{checked} outputs checked, {saturated} saturated, smallest margin {margin:.1e}"
    ))
}

fn ac3_eckart_young() -> Verdict {
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let (m, n) = dims(k + 80);
        let ratio = [0.5, 0.6, 0.7, 0.8][k as usize % 4];
        let a = geometric_spectrum_matrix(m, n, ratio, derive_seed(300, k)).unwrap();
        let params = SketchParams {
            t: 3,
            dt: 3,
            np: 2,
            eps_threshold: [1e-2, 1e-3, 1e-4][k as usize % 3],
            seed: derive_seed(301, k),
            oversample: 0,
        };
        let out = e(sketch::r3svd(&full(&a), &params))?;
        let sigma = oracle_sigma(&a);
        let optimal = sigma[out.rank..].iter().map(|s| s * s).sum::<f64>().sqrt();
        let err = frob2(&(&a - out.factors.to_dense())).sqrt();
        ensure(optimal > 0.0, || format!("instance {k}: revealed full rank"))?;
        let q = err / optimal;
        worst = worst.max(q);
        ensure(q <= 1.25, || {
            format!("instance {k}: rank {} error {q:.3}x optimal", out.rank)
        })?;
    }
    Ok(format!("worst error/optimal {worst:.3}"))
}

/// Two consecutive SVT iterates on a 200x200 rank-10 instance, stepping with
/// an exact SVD so the pair does not depend on the sketch under test.
fn svt_pair(seed: u64) -> Result<(SampledMatrix, SampledMatrix, f64), String> {
    let truth = low_rank_matrix(200, 200, 10, derive_seed(400, seed)).unwrap();
    let a = e(sample_uniform(&truth, 0.4, derive_seed(401, seed)))?;
    let cfg = default_config(&a);
    let mut y = e(kickstart(&a, cfg.tau, cfg.delta, derive_seed(402, seed)))?;
    for _ in 0..50 {
        let x = shrink(&oracle_factors(&y.to_dense()), cfg.tau);
        let px = e(project_low_rank(&a, &x))?;
        let step: Vec<f64> = a.values().iter().zip(px.values()).map(|(p, q)| p - q).collect();
        let next = e(sp_axpy(&y, cfg.delta, &e(a.with_values(step))?))?;
        let diff: f64 = next
            .values()
            .iter()
            .zip(y.values())
            .map(|(p, q)| (p - q) * (p - q))
            .sum();
        let rel = (diff / sp_frob_norm_sq(&next)).sqrt();
        if rel <= 0.1 {
            return Ok((y, next, rel));
        }
        y = next;
    }
    Err(format!("seed {seed}: no step with relative change <= 0.1"))
}

fn ac4_recycling() -> Verdict {
    let (mut r3_total, mut r4_total) = (0, 0);
    for seed in 0..10u64 {
        let (prev, next, _) = svt_pair(seed)?;
        let params = SketchParams {
            t: 10,
            dt: 10,
            np: 1,
            eps_threshold: 0.05,
            seed: derive_seed(403, seed),
            oversample: 0,
        };
        let u_prev = e(sketch::r3svd(&prev, &params))?.factors.u().clone();
        let scratch = e(sketch::r3svd(
            &next,
            &SketchParams {
                seed: derive_seed(404, seed),
                ..params.clone()
            },
        ))?;
        let recycled = e(sketch::r4svd(&next, &u_prev, &params))?;
        r3_total += scratch.rounds;
        r4_total += recycled.rounds;
        ensure(2 * recycled.rounds <= scratch.rounds, || {
            format!(
                "pair {seed}: r4svd {} rounds vs r3svd {}",
                recycled.rounds, scratch.rounds
            )
        })?;
    }
    Ok(format!("extension rounds r4svd {r4_total} vs r3svd {r3_total}"))
}

/// Runs SVT until the full-matrix relative error reaches 1e-2; returns the
/// stopping iteration and rank.
fn first_hit(
    a: &SampledMatrix,
    truth: &DMatrix<f64>,
    backend: Backend,
    eps_threshold0: Option<f64>,
) -> Result<Option<(usize, usize)>, String> {
    let mut cfg = default_config(a);
    cfg.maxit = 300;
    if let Some(eps) = eps_threshold0 {
        cfg.eps_threshold0 = eps;
    }
    cfg.seed = 5;
    let nt = frob2(truth).sqrt();
    let mut hit = None;
    let mut obs = |rec: &mut IterationRecord, x: &LowRankFactors| {
        let rel = frob2(&(truth - x.to_dense())).sqrt() / nt;
        if rel <= 1e-2 {
            hit = Some((rec.iter, rec.rank));
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    };
    e(svt::solve(a, &cfg, StopRule::Residual(0.0), backend, Some(&mut obs)))?;
    Ok(hit)
}

fn ac5_end_to_end() -> Verdict {
    let truth = low_rank_matrix(200, 200, 10, 1).unwrap();
    let a = e(sample_uniform(&truth, 0.4, derive_seed(1, 1)))?;
    let (it4, rank4) =
        first_hit(&a, &truth, Backend::R4svd, None)?.ok_or("r4svd: error above 1e-2 after 300 iterations")?;
    let (ito, ranko) =
        first_hit(&a, &truth, Backend::FullOracle, None)?.ok_or("oracle: error above 1e-2 after 300 iterations")?;
    let msg = format!("r4svd iter {it4} rank {rank4}, oracle iter {ito} rank {ranko}");
    if rank4.abs_diff(ranko) > 3 {
        // Diagnostic only: the same comparison with a tight initial sketch target.
        let tight = first_hit(&a, &truth, Backend::R4svd, Some(0.01))?;
        return Err(format!(
            "rank gap too wide: {msg}; with eps_threshold0 0.01 r4svd reaches (iter, rank) {tight:?}"
        ));
    }
    Ok(msg)
}

fn ac6_cooling() -> Verdict {
    let mut stalls = 0;
    let mut total = 0;
    for k in 0..10u64 {
        let truth = low_rank_matrix(60 + 10 * k as usize, 50, 4, derive_seed(600, k)).unwrap();
        let a = e(sample_uniform(&truth, 0.3, derive_seed(601, k)))?;
        let mut cfg = default_config(&a);
        cfg.maxit = 80;
        cfg.seed = k;
        let backend = [Backend::R4svd, Backend::R3svd, Backend::FullOracle][k as usize % 3];
        let out = e(svt::solve(&a, &cfg, StopRule::Residual(1e-6 * cfg.tau), backend, None))?;
        let mut eps = cfg.eps_threshold0;
        let mut best = f64::INFINITY;
        for r in &out.trace {
            if r.residual < best {
                best = r.residual;
            } else {
                eps *= 0.95;
                stalls += 1;
            }
            total += 1;
            ensure(r.eps_threshold.to_bits() == eps.to_bits(), || {
                format!(
                    "run {k} iter {}: eps_threshold {:e}, expected {eps:e}",
                    r.iter, r.eps_threshold
                )
            })?;
        }
    }
    ensure(stalls > 0, || "no stalled iteration exercised the schedule".into())?;
    Ok(format!("{total} iterations, {stalls} cooling steps"))
}

fn ac7_speed() -> Verdict {
    let img = smooth_low_rank_image(512, 512, 20, 3).unwrap();
    let a = e(sample_image(&img, 0.2, 4))?;
    let mut cfg = default_config(&a);
    cfg.maxit = 30;
    let run = |b| e(svt::solve(&a, &cfg, StopRule::TrainMae(1.0), b, None));
    let r4 = run(Backend::R4svd)?;
    let oracle = run(Backend::FullOracle)?;
    let iters = r4.trace.len().min(oracle.trace.len());
    let t4: f64 = r4.trace[..iters].iter().map(|r| r.sketch_ms).sum();
    let to: f64 = oracle.trace[..iters].iter().map(|r| r.sketch_ms).sum();
    ensure(t4 < to, || {
        format!("over {iters} iterations r4svd {t4:.0} ms vs oracle {to:.0} ms")
    })?;

    let pts: Vec<(f64, f64)> = r4.trace.iter().map(|r| (r.sketch_rank as f64, r.sketch_ms)).collect();
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    ensure(sxx > 0.0, || "revealed rank never changed".into())?;
    let slope = sxy / sxx;
    ensure(slope > 0.0, || format!("sketch time slope {slope:.3} ms per rank"))?;
    Ok(format!(
        "{iters} iterations: r4svd {t4:.0} ms vs oracle {to:.0} ms; slope {slope:.2} ms per rank"
    ))
}

fn ac8_image() -> Verdict {
    let img = smooth_low_rank_image(256, 256, 20, 3).unwrap();
    let a = e(sample_image(&img, 0.2, 4))?;
    let cfg = default_config(&a);
    let mut mae = Vec::new();
    for b in [Backend::R4svd, Backend::FullOracle] {
        let out = e(svt::solve(&a, &cfg, StopRule::TrainMae(1.0), b, None))?;
        let last = out.trace.last().unwrap();
        ensure(out.converged() && last.train_mae < 1.0, || {
            format!(
                "{b}: stopped at iteration {} with train MAE {:.3}",
                last.iter, last.train_mae
            )
        })?;
        mae.push(e(img.mae_against(&out.factors.to_dense()))?);
    }
    ensure(mae[0] <= 3.0 * mae[1], || {
        format!("full MAE r4svd {:.3} vs oracle {:.3}", mae[0], mae[1])
    })?;
    Ok(format!("full-image MAE r4svd {:.3}, oracle {:.3}", mae[0], mae[1]))
}

fn ac9_ratings() -> Verdict {
    let spec = RatingsSpec {
        users: 500,
        items: 400,
        rank: 5,
        density: 0.2,
        noise: 0.5,
        seed: 9,
    };
    let (ds, _) = e(synthetic_ratings(&spec))?;
    let (train, test) = e(split_ratings(&ds, 0.8, 10))?;
    let cfg = default_config(&train);
    let mut detector = OverfitDetector::new(5);
    let mut fired = None;
    let mut curve = Vec::new();
    let mut obs = |rec: &mut IterationRecord, x: &LowRankFactors| {
        let mae = holdout_mae(&test, x).unwrap();
        curve.push(mae);
        if detector.observe(rec.iter, mae) && fired.is_none() {
            fired = Some(rec.iter);
        }
        ControlFlow::Continue(())
    };
    e(svt::solve(
        &train,
        &cfg,
        StopRule::TrainMae(0.1),
        Backend::R4svd,
        Some(&mut obs),
    ))?;
    let fired = fired.ok_or("overfitting detector never fired")?;
    let k = has_interior_minimum(&curve).ok_or("test MAE has no interior minimum")?;
    let last = *curve.last().unwrap();
    ensure(last > curve[k], || "test MAE did not rise after its minimum".into())?;
    Ok(format!(
        "test MAE minimum {:.3} at iteration {}, {:.3} at iteration {}; detector fired at {fired}",
        curve[k],
        k + 1,
        last,
        curve.len()
    ))
}

fn cli(dir: &Path, args: &[&str]) -> Result<i32, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fastsvt"))
        .current_dir(dir)
        .args(args)
        .env("SVT_LOG", "error")
        .output()
        .map_err(|err| err.to_string())?;
    Ok(out.status.code().unwrap_or(-1))
}

/// Every artifact except the CPU-time columns, which measure the machine.
fn comparable(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|err| err.to_string())?
        .map(|d| d.unwrap().path())
        .collect();
    files.sort();
    let mut out = Vec::new();
    for p in files {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        let text = fs::read(&p).map_err(|err| err.to_string())?;
        let body = match name.as_str() {
            "trace.csv" | "bench.csv" => drop_columns(&text, &["sketch_ms", "total_ms", "svd_ms"]),
            "trace.json" | "summary.json" | "manifest.json" => continue,
            _ => text,
        };
        out.push((name, body));
    }
    Ok(out)
}

fn drop_columns(csv: &[u8], names: &[&str]) -> Vec<u8> {
    let text = String::from_utf8_lossy(csv);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&k| !names.contains(&header[k])).collect();
    let pick = |line: &str| {
        let cells: Vec<&str> = line.split(',').collect();
        keep.iter().map(|&k| cells[k]).collect::<Vec<_>>().join(",")
    };
    let mut out = pick(&header.join(","));
    for l in lines {
        out.push('\n');
        out.push_str(&pick(l));
    }
    out.into_bytes()
}

fn ac10_determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|err| err.to_string())?;
    let d = tmp.path();
    for args in [
        &[
            "generate",
            "matrix",
            "--rows",
            "80",
            "--cols",
            "60",
            "--rank",
            "4",
            "--fraction",
            "0.3",
            "--out",
            "a.mtx",
        ][..],
        &[
            "generate",
            "ratings",
            "--users",
            "120",
            "--items",
            "90",
            "--rank",
            "3",
            "--density",
            "0.2",
            "--out",
            "r.dat",
        ],
    ] {
        ensure(cli(d, args)? == 0, || format!("{args:?} failed"))?;
    }
    let jobs: [&[&str]; 4] = [
        &["complete", "a.mtx", "--maxit", "60"],
        &["image", "--synthetic", "--size", "96", "--rank", "8", "--maxit", "60"],
        &["ratings", "r.dat", "--maxit", "60"],
        &["bench", "--sizes", "64", "--backends", "r4svd,r3svd", "--maxit", "6"],
    ];
    for (k, job) in jobs.iter().enumerate() {
        let first = format!("run{k}");
        let mut args = job.to_vec();
        args.extend(["--out-dir", &first]);
        let code = cli(d, &args)?;
        ensure(code == 0 || code == 3, || format!("{job:?} exited with {code}"))?;
        let manifest = format!("{first}/manifest.json");
        for again in ["again-a", "again-b"] {
            let dir = format!("{again}{k}");
            let code2 = cli(d, &["--manifest", &manifest, "--threads", "1", "--out-dir", &dir])?;
            ensure(code2 == code, || {
                format!("{} re-run exited with {code2}, first run {code}", job[0])
            })?;
            ensure(comparable(&d.join(&first))? == comparable(&d.join(&dir))?, || {
                format!("{} re-run {dir} differs from the original", job[0])
            })?;
        }
    }
    Ok("complete, image, ratings and bench re-runs identical".into())
}

/// Criteria that fail at default settings and are documented as such. They
/// still print FAIL; any other failure makes the run fail.
const KNOWN_FAILURES: &[u32] = &[5];

fn main() -> ExitCode {
    par::init_threads(1);
    let criteria = [
        Criterion {
            id: 1,
            name: "QB energy identity",
            budget: Some(Duration::from_secs(30)),
            check: ac1_qb_identity,
        },
        Criterion {
            id: 2,
            name: "fixed-precision contract",
            budget: Some(Duration::from_secs(60)),
            check: ac2_fixed_precision,
        },
        Criterion {
            id: 3,
            name: "Eckart-Young proximity",
            budget: None,
            check: ac3_eckart_young,
        },
        Criterion {
            id: 4,
            name: "recycling saves extension rounds",
            budget: None,
            check: ac4_recycling,
        },
        Criterion {
            id: 5,
            name: "synthetic completion",
            budget: Some(Duration::from_secs(300)),
            check: ac5_end_to_end,
        },
        Criterion {
            id: 6,
            name: "cooling schedule",
            budget: None,
            check: ac6_cooling,
        },
        Criterion {
            id: 7,
            name: "desk-scale speed",
            budget: None,
            check: ac7_speed,
        },
        Criterion {
            id: 8,
            name: "image experiment shape",
            budget: None,
            check: ac8_image,
        },
        Criterion {
            id: 9,
            name: "ratings overfitting",
            budget: None,
            check: ac9_ratings,
        },
        Criterion {
            id: 10,
            name: "manifest determinism",
            budget: None,
            check: ac10_determinism,
        },
    ];
    let mut failed = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let mut verdict = (c.check)();
        let took = start.elapsed();
        if let (Ok(detail), Some(budget)) = (&verdict, c.budget) {
            if took > budget {
                verdict = Err(format!(
                    "{detail}; took {:.1} s, budget {} s",
                    took.as_secs_f64(),
                    budget.as_secs()
                ));
            }
        }
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed.push(c.id);
                ("FAIL", d)
            }
        };
        println!("AC{:<2} {tag} {} [{:.1} s]: {detail}", c.id, c.name, took.as_secs_f64());
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed.len(),
        criteria.len()
    );
    let unexpected: Vec<u32> = failed
        .iter()
        .copied()
        .filter(|id| !KNOWN_FAILURES.contains(id))
        .collect();
    let known: Vec<u32> = failed
        .iter()
        .copied()
        .filter(|id| KNOWN_FAILURES.contains(id))
        .collect();
    if !known.is_empty() {
        println!("known failures: {known:?}");
    }
    for id in KNOWN_FAILURES.iter().filter(|id| !failed.contains(id)) {
        println!("AC{id} is listed as a known failure but passed");
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
