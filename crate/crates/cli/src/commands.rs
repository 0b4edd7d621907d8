use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use ronmf::datagen::{contaminate as contaminate_matrix, generate_synthetic, normalize_column, stream_order, SynthSpec};
use ronmf::io::{append_result, load_matrix, save_matrix, write_results, write_trace, CsvTraceWriter, ResultRow};
use ronmf::metrics::{format_psnr, psnr_batch, reconstruct as reconstruct_matrix, residual_outliers};
use ronmf::{badmm, bpgd, Dictionary, HyperParams, OnlineConfig, OnlineState, Solver, TraceSink};
use serde_json::json;

use crate::config::Overrides;
use crate::{BatchSolver, OnlineSolver, RunArgs};

const RUN_CONFIG: &str = "run_config.json";
const TRACE: &str = "trace.csv";
const DICTIONARY: &str = "dictionary.mat";
const COEFFICIENTS: &str = "coefficients.mat";
const OUTLIERS: &str = "outliers.mat";
const RESULTS: &str = "results.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load(path: &Path) -> Result<Array2<f64>> {
    Ok(load_matrix(path)
        .with_context(|| format!("reading {}", path.display()))?
        .matrix)
}

fn save(path: &Path, m: &Array2<f64>, seed: u64) -> Result<()> {
    save_matrix(path, m, seed).with_context(|| format!("writing {}", path.display()))
}

pub fn generate(spec: &SynthSpec, out: &Path) -> Result<()> {
    let data = generate_synthetic(spec)?;
    ensure_dir(out)?;
    save(&out.join("data.mat"), &data.v, spec.seed)?;
    save(&out.join("clean.mat"), &data.v_clean, spec.seed)?;
    save(&out.join("outliers_true.mat"), &data.r_true, spec.seed)?;
    write_json(&out.join(RUN_CONFIG), &json!({ "command": "generate", "spec": spec }))
}

pub fn contaminate(input: &Path, nu: f64, nu_tilde: f64, m: f64, seed: u64, out: &Path) -> Result<()> {
    let clean = load(input)?;
    if clean.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        bail!("{}: clean data must lie in [0, 1]", input.display());
    }
    let (v, r) = contaminate_matrix(clean.view(), nu, nu_tilde, m, seed)?;
    ensure_dir(out)?;
    save(&out.join("data.mat"), &v, seed)?;
    save(&out.join("outliers_true.mat"), &r, seed)?;
    write_json(
        &out.join(RUN_CONFIG),
        &json!({
            "command": "contaminate",
            "input": input,
            "nu": nu,
            "nu_tilde": nu_tilde,
            "m": m,
            "seed": seed,
        }),
    )
}

/// Data, optional clean data, and the fully resolved settings of one run.
struct Prepared {
    v: Array2<f64>,
    clean: Option<Array2<f64>>,
    overrides: Overrides,
    params: HyperParams,
}

fn prepare(run: &RunArgs) -> Result<Prepared> {
    let overrides = Overrides::resolve_sources(run.config.as_deref(), &run.overrides)?;
    let v = load(&run.data)?;
    let clean = match &run.clean {
        Some(p) => {
            let c = load(p)?;
            if c.dim() != v.dim() {
                bail!(
                    "clean data is {:?} but data is {:?}; they must have the same shape",
                    c.dim(),
                    v.dim()
                );
            }
            Some(c)
        }
        None => None,
    };
    let params = overrides.hyper_params(v.nrows())?;
    ensure_dir(&run.out)?;
    Ok(Prepared {
        v,
        clean,
        overrides,
        params,
    })
}

fn echo_config(run: &RunArgs, command: &str, solvers: &[&str], prep: &Prepared) -> Result<()> {
    let o = &prep.overrides;
    let batch = o.batch_config(!run.no_timing)?;
    write_json(
        &run.out.join(RUN_CONFIG),
        &json!({
            "command": command,
            "solvers": solvers,
            "data": run.data,
            "clean": run.clean,
            "f": prep.v.nrows(),
            "n": prep.v.ncols(),
            "params": prep.params,
            "h_init": o.h_init.unwrap_or(crate::config::InitKind::Zeros),
            "replicate": o.replicate()?,
            "shuffle": o.shuffle.unwrap_or(false),
            "normalize": o.normalize.unwrap_or(false),
            "max_outer": batch.max_outer,
            "tol": batch.tol,
            "record_wall_clock": !run.no_timing,
            "threads": rayon::current_num_threads(),
        }),
    )
}

/// What one solver run leaves behind.
pub struct Outcome {
    pub dictionary: Dictionary,
    /// One coefficient column per data column.
    pub coefficients: Array2<f64>,
    pub psnr_db: Option<f64>,
    pub runtime_s: f64,
}

fn online_solver(s: OnlineSolver) -> Solver {
    match s {
        OnlineSolver::Opgd => Solver::Pgd,
        OnlineSolver::Oadmm => Solver::Admm,
    }
}

fn run_online(solver: OnlineSolver, prep: &Prepared, record_wall_clock: bool, trace: &Path) -> Result<Outcome> {
    let o = &prep.overrides;
    let p = &prep.params;
    let (f, n) = prep.v.dim();
    let order = stream_order(n, o.replicate()?, o.shuffle.unwrap_or(false), p.seed);
    let normalize = o.normalize.unwrap_or(false);

    let cfg = OnlineConfig {
        h_init: o.h_init(),
        retain_history: true,
        record_wall_clock,
        ..OnlineConfig::new(online_solver(solver))
    };
    let mut state = OnlineState::init(f, p)?;
    let mut sink = CsvTraceWriter::create(trace).with_context(|| format!("writing {}", trace.display()))?;
    let started = Instant::now();
    // clean columns in stream order, scaled like their noisy counterparts
    let mut clean_stream = prep.clean.as_ref().map(|_| Array2::<f64>::zeros((f, order.len())));
    for (chunk_idx, chunk) in order.chunks(p.tau).enumerate() {
        let mut batch: Vec<Array1<f64>> = Vec::with_capacity(chunk.len());
        let mut clean_batch: Vec<Array1<f64>> = Vec::new();
        for &j in chunk {
            let mut col = prep.v.column(j).to_owned();
            let scale = if normalize { normalize_column(&mut col) } else { 1.0 };
            batch.push(col);
            if let Some(c) = &prep.clean {
                clean_batch.push(c.column(j).mapv(|x| x * scale));
            }
        }
        let views: Vec<ArrayView1<f64>> = batch.iter().map(|c| c.view()).collect();
        let rec = match &mut clean_stream {
            Some(cs) => {
                let base = chunk_idx * p.tau;
                for (i, c) in clean_batch.iter().enumerate() {
                    cs.column_mut(base + i).assign(c);
                }
                let clean_views: Vec<ArrayView1<f64>> = clean_batch.iter().map(|c| c.view()).collect();
                state.step_with_clean(&views, &clean_views, &cfg)?
            }
            None => state.step(&views, &cfg)?,
        };
        sink.record(&rec)?;
    }
    sink.finish()?;
    let runtime_s = if record_wall_clock {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    };

    let history = state.history().expect("history retained").coefficients();
    let psnr_db = match &clean_stream {
        Some(cs) => Some(psnr_batch(cs.view(), state.dict.view(), history.view())?),
        None => None,
    };
    // the last code of each data column
    let mut coefficients = Array2::<f64>::zeros((p.k, n));
    for (pos, &j) in order.iter().enumerate() {
        coefficients.column_mut(j).assign(&history.column(pos));
    }
    Ok(Outcome {
        dictionary: state.dict,
        coefficients,
        psnr_db,
        runtime_s,
    })
}

pub fn train(solver: OnlineSolver, save_coefficients: bool, run: &RunArgs) -> Result<Outcome> {
    let prep = prepare(run)?;
    echo_config(run, "train", &[solver_name_online(solver)], &prep)?;
    let out = run_online(solver, &prep, !run.no_timing, &run.out.join(TRACE))?;
    save(&run.out.join(DICTIONARY), out.dictionary.matrix(), prep.params.seed)?;
    if save_coefficients {
        save(&run.out.join(COEFFICIENTS), &out.coefficients, prep.params.seed)?;
    }
    report(solver_name_online(solver), &out);
    Ok(out)
}

fn normalized_batch(prep: &Prepared) -> (Array2<f64>, Option<Array2<f64>>) {
    let mut v = prep.v.clone();
    let mut clean = prep.clean.clone();
    if prep.overrides.normalize.unwrap_or(false) {
        for (j, mut col) in v.axis_iter_mut(Axis(1)).enumerate() {
            let mut owned = col.to_owned();
            let s = normalize_column(&mut owned);
            col.assign(&owned);
            if let Some(c) = clean.as_mut() {
                c.column_mut(j).mapv_inplace(|x| x * s);
            }
        }
    }
    (v, clean)
}

fn run_batch(solver: BatchSolver, prep: &Prepared, record_wall_clock: bool, trace: &Path) -> Result<(Outcome, Array2<f64>)> {
    let cfg = prep.overrides.batch_config(record_wall_clock)?;
    let (v, clean) = normalized_batch(prep);
    let started = Instant::now();
    let res = match solver {
        BatchSolver::Bpgd => bpgd(v.view(), &prep.params, &cfg)?,
        BatchSolver::Badmm => badmm(v.view(), &prep.params, &cfg)?,
    };
    let runtime_s = if record_wall_clock {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    };
    write_trace(trace, &res.trace).with_context(|| format!("writing {}", trace.display()))?;
    let psnr_db = match &clean {
        Some(c) => Some(psnr_batch(c.view(), res.w.view(), res.h.view())?),
        None => None,
    };
    Ok((
        Outcome {
            dictionary: res.w,
            coefficients: res.h,
            psnr_db,
            runtime_s,
        },
        res.r,
    ))
}

pub fn train_batch(solver: BatchSolver, run: &RunArgs) -> Result<Outcome> {
    let prep = prepare(run)?;
    echo_config(run, "train-batch", &[solver_name_batch(solver)], &prep)?;
    let (out, r) = run_batch(solver, &prep, !run.no_timing, &run.out.join(TRACE))?;
    let seed = prep.params.seed;
    save(&run.out.join(DICTIONARY), out.dictionary.matrix(), seed)?;
    save(&run.out.join(COEFFICIENTS), &out.coefficients, seed)?;
    save(&run.out.join(OUTLIERS), &r, seed)?;
    report(solver_name_batch(solver), &out);
    Ok(out)
}

fn report(name: &str, out: &Outcome) {
    match out.psnr_db {
        Some(p) => println!("{name}: runtime {:.3}s, PSNR {} dB", out.runtime_s, format_psnr(p)),
        None => println!("{name}: runtime {:.3}s", out.runtime_s),
    }
}

fn solver_name_online(s: OnlineSolver) -> &'static str {
    match s {
        OnlineSolver::Opgd => "opgd",
        OnlineSolver::Oadmm => "oadmm",
    }
}

fn solver_name_batch(s: BatchSolver) -> &'static str {
    match s {
        BatchSolver::Bpgd => "bpgd",
        BatchSolver::Badmm => "badmm",
    }
}

pub fn reconstruct(dictionary: &Path, coefficients: &Path, data: Option<&Path>, out: &Path) -> Result<()> {
    let w = load_matrix(dictionary).with_context(|| format!("reading {}", dictionary.display()))?;
    let h = load(coefficients)?;
    let wh = reconstruct_matrix(w.matrix.view(), h.view())?;
    ensure_dir(out)?;
    save(&out.join("reconstruction.mat"), &wh, w.seed)?;
    if let Some(d) = data {
        let v = load(d)?;
        let resid = residual_outliers(v.view(), w.matrix.view(), h.view())?;
        save(&out.join("residual.mat"), &resid, w.seed)?;
    }
    Ok(())
}

pub fn eval_psnr(
    clean: &Path,
    dictionary: &Path,
    coefficients: &Path,
    results: Option<&Path>,
    algorithm: &str,
    setting: &str,
    runtime: f64,
) -> Result<()> {
    let c = load(clean)?;
    let w = load_matrix(dictionary).with_context(|| format!("reading {}", dictionary.display()))?;
    let h = load(coefficients)?;
    let psnr = psnr_batch(c.view(), w.matrix.view(), h.view())?;
    println!("{}", format_psnr(psnr));
    if let Some(path) = results {
        append_result(
            path,
            &ResultRow {
                algorithm: algorithm.to_string(),
                setting: setting.to_string(),
                psnr_db: Some(psnr),
                runtime_s: runtime,
                seed: w.seed,
            },
        )
        .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

enum AnySolver {
    Online(OnlineSolver),
    Batch(BatchSolver),
}

fn parse_solver(name: &str) -> Result<AnySolver> {
    Ok(match name.trim() {
        "opgd" => AnySolver::Online(OnlineSolver::Opgd),
        "oadmm" => AnySolver::Online(OnlineSolver::Oadmm),
        "bpgd" => AnySolver::Batch(BatchSolver::Bpgd),
        "badmm" => AnySolver::Batch(BatchSolver::Badmm),
        other => bail!("invalid solver `{other}`; expected one of opgd, oadmm, bpgd, badmm"),
    })
}

pub fn compare(solvers: &[String], setting: &str, run: &RunArgs) -> Result<()> {
    let parsed = solvers.iter().map(|s| parse_solver(s)).collect::<Result<Vec<_>>>()?;
    if parsed.is_empty() {
        bail!("no solvers given");
    }
    let prep = prepare(run)?;
    let names: Vec<&str> = solvers.iter().map(|s| s.trim()).collect();
    echo_config(run, "compare", &names, &prep)?;
    let record = !run.no_timing;
    let seed = prep.params.seed;
    let mut rows = Vec::new();
    for (name, solver) in names.iter().zip(&parsed) {
        let trace = run.out.join(format!("trace_{name}.csv"));
        let out = match solver {
            AnySolver::Online(s) => run_online(*s, &prep, record, &trace)?,
            AnySolver::Batch(s) => run_batch(*s, &prep, record, &trace)?.0,
        };
        save(&run.out.join(format!("dictionary_{name}.mat")), out.dictionary.matrix(), seed)?;
        report(name, &out);
        rows.push(ResultRow {
            algorithm: name.to_string(),
            setting: setting.to_string(),
            psnr_db: out.psnr_db,
            runtime_s: out.runtime_s,
            seed,
        });
    }
    write_results(&run.out.join(RESULTS), &rows).context("writing results")
}
