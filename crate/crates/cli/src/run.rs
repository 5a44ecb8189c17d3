//! Command implementations. Each assembles exactly one JSON document.

use std::path::Path;
use std::time::Instant;

use residual_sketch::bilinear::{batch_estimate, BilinearSketchState};
use residual_sketch::linalg::DenseMatrix;
use residual_sketch::testkit::{
    exact_matrix_residual, exact_vector_residual, gen_gap_vector, gen_hard_pair, gen_zipf_stream,
    HardInstanceSpec, HardKind, ZipfStreamSpec,
};
use residual_sketch::transforms::SketchFamily;
use residual_sketch::vector::{bucket_count_with, row_count_with, ResidualPipeline};
use residual_sketch::{derive_seed, Error, ExactLpBackend, Result};

use crate::io::{self, SparseMatrix, VectorStream};
use crate::report::{eps_rel, mean, ExperimentReport, Params, Timings, TrialReport};
use crate::{
    BenchArgs, Cli, Cmd, DataArgs, ExactArgs, FamilyArg, Format, GenCmd, GenGapArgs, GenHardArgs,
    GenZipfArgs, LowrankArgs, VariantArg, VectorArgs,
};

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Lowrank(args) => cmd_lowrank(args),
        Cmd::Vector(args) => cmd_vector(args, false),
        Cmd::Recover(args) => cmd_vector(args, true),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Gen(GenCmd::Hard(args)) => gen_hard(args),
        Cmd::Gen(GenCmd::Zipf(args)) => gen_zipf(args),
        Cmd::Gen(GenCmd::Gap(args)) => gen_gap(args),
        Cmd::Exact(args) => cmd_exact(args),
    }
}

fn command_echo() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn emit(json_out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    println!("{text}");
    if let Some(path) = json_out {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn load_matrix(args: &DataArgs) -> Result<SparseMatrix> {
    match args.format {
        Format::Mm => io::load_matrixmarket(&args.dataset),
        Format::Bow => io::load_uci_bow(&args.dataset),
        Format::Stream => Err(Error::InvalidInput(
            "stream datasets hold vector updates; use a matrix format (mm, bow)".into(),
        )),
    }
}

fn load_stream(args: &DataArgs) -> Result<VectorStream> {
    match args.format {
        Format::Stream => io::load_vector_stream(&args.dataset),
        _ => Err(Error::InvalidInput(
            "matrix datasets cannot feed the vector pipeline; use the stream format".into(),
        )),
    }
}

fn dense_of(m: &SparseMatrix) -> DenseMatrix {
    let mut a = DenseMatrix::zeros(m.rows, m.cols);
    for &(i, j, v) in &m.triplets {
        a.add_at(i, j, v);
    }
    a
}

/// Estimates are norms or p-power masses, so a negative or NaN value
/// means the numerics went wrong rather than the input being odd.
fn check_estimate(estimate: f64) -> Result<()> {
    if !(estimate >= 0.0) {
        return Err(Error::Numerical(format!(
            "estimate {estimate} is negative or NaN"
        )));
    }
    Ok(())
}

/// Trials are independent across seeds: spread them over the available
/// cores, then reassemble in seed order after the join.
fn run_trials<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if count == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(count);
    if workers <= 1 {
        return (0..count).map(f).collect();
    }
    let chunk = count.div_ceil(workers);
    let mut slots: Vec<Option<Result<T>>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (w, span) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (off, slot) in span.iter_mut().enumerate() {
                    *slot = Some(f(w * chunk + off));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.expect("every trial slot filled"))
        .collect()
}

fn assemble(
    dataset: String,
    params: Params,
    ingest_ms: f64,
    exact: Option<f64>,
    trials: Vec<TrialReport>,
    recovered: Option<Vec<(usize, f64)>>,
) -> ExperimentReport {
    let eps_values: Vec<f64> = trials.iter().filter_map(|t| t.eps_rel).collect();
    ExperimentReport {
        command: command_echo(),
        dataset,
        params,
        estimate: Some(mean(trials.iter().map(|t| t.estimate))),
        exact,
        exact_is_zero: exact == Some(0.0),
        eps_rel: if eps_values.is_empty() {
            None
        } else {
            Some(mean(eps_values.into_iter()))
        },
        timings_ms: Timings {
            ingest_ms,
            sketch_ms: mean(trials.iter().map(|t| t.sketch_ms)),
            finalize_ms: mean(trials.iter().map(|t| t.finalize_ms)),
        },
        trial_count: trials.len(),
        trials,
        recovered,
    }
}

fn plain_family(arg: FamilyArg, s: usize) -> Option<SketchFamily> {
    match arg {
        FamilyArg::Countsketch => Some(SketchFamily::CountSketch),
        FamilyArg::Jl => Some(SketchFamily::DenseJL),
        FamilyArg::Osnap => Some(SketchFamily::Osnap(s)),
        FamilyArg::Gaussian => Some(SketchFamily::Gaussian),
        FamilyArg::Composed => None,
    }
}

fn family_token(arg: FamilyArg) -> &'static str {
    match arg {
        FamilyArg::Countsketch => "countsketch",
        FamilyArg::Jl => "jl",
        FamilyArg::Osnap => "osnap",
        FamilyArg::Gaussian => "gaussian",
        FamilyArg::Composed => "composed",
    }
}

fn cmd_lowrank(args: LowrankArgs) -> Result<()> {
    let t0 = Instant::now();
    let matrix = load_matrix(&args.data)?;
    let ingest_ms = ms(t0);

    let exact = if args.with_exact {
        Some(exact_matrix_residual(&dense_of(&matrix), args.k)?)
    } else {
        None
    };

    let family = plain_family(args.family, args.s);
    let trials = run_trials(args.trials, |t| {
        let seed = derive_seed(args.seed, t as u64);
        let mut st = match family {
            Some(f) => {
                BilinearSketchState::plain(f, matrix.rows, matrix.cols, args.m, seed)?
            }
            None => BilinearSketchState::composed(matrix.rows, matrix.cols, args.m, seed)?,
        };
        let t1 = Instant::now();
        for &(i, j, v) in &matrix.triplets {
            st.update(i, j, v)?;
        }
        let sketch_ms = ms(t1);
        let t2 = Instant::now();
        let estimate = st.estimate_residual(args.k)?;
        check_estimate(estimate)?;
        Ok(TrialReport {
            seed,
            estimate,
            eps_rel: eps_rel(estimate, exact),
            sketch_ms,
            finalize_ms: ms(t2),
        })
    })?;

    let report = assemble(
        args.data.dataset.display().to_string(),
        Params {
            rows: Some(matrix.rows),
            cols: Some(matrix.cols),
            k: args.k,
            m: Some(args.m),
            family: Some(family_token(args.family).into()),
            s: matches!(args.family, FamilyArg::Osnap).then_some(args.s),
            seed: args.seed,
            trials: args.trials,
            ..Params::default()
        },
        ingest_ms,
        exact,
        trials,
        None,
    );
    emit(
        args.data.json_out.as_deref(),
        &serde_json::to_value(&report).expect("report serializes"),
    )
}

fn cmd_vector(args: VectorArgs, recover: bool) -> Result<()> {
    let t0 = Instant::now();
    let stream = load_stream(&args.data)?;
    let ingest_ms = ms(t0);

    let exact = if args.with_exact {
        Some(exact_vector_residual(&stream.replay(), args.k, args.p))
    } else {
        None
    };

    let b = bucket_count_with(stream.n, args.k.max(1), args.p, args.eps, args.cb)?;
    let l = row_count_with(stream.n, args.cl);
    let results = run_trials(args.trials, |t| {
        let seed = derive_seed(args.seed, t as u64);
        let mut pipe = ResidualPipeline::with_dimensions(
            stream.n,
            args.k,
            args.p,
            args.eps,
            l,
            b,
            seed,
            ExactLpBackend::new(stream.n),
        )?;
        let t1 = Instant::now();
        for &(i, v) in &stream.updates {
            pipe.update(i, v)?;
        }
        let sketch_ms = ms(t1);
        let t2 = Instant::now();
        let estimate = pipe.residual_estimate()?;
        check_estimate(estimate)?;
        let trial = TrialReport {
            seed,
            estimate,
            eps_rel: eps_rel(estimate, exact),
            sketch_ms,
            finalize_ms: ms(t2),
        };
        let support = (recover && t == 0).then(|| pipe.sparse_recover());
        Ok((trial, support))
    })?;

    let (trials, supports): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let recovered = supports.into_iter().flatten().next().map(|cands| {
        cands
            .entries()
            .iter()
            .map(|&(i, v)| (i + 1, v))
            .collect::<Vec<_>>()
    });

    let report = assemble(
        args.data.dataset.display().to_string(),
        Params {
            n: Some(stream.n),
            k: args.k,
            b: Some(b),
            l: Some(l),
            p: Some(args.p),
            eps: Some(args.eps),
            seed: args.seed,
            trials: args.trials,
            ..Params::default()
        },
        ingest_ms,
        exact,
        trials,
        recovered,
    );
    emit(
        args.data.json_out.as_deref(),
        &serde_json::to_value(&report).expect("report serializes"),
    )
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let t0 = Instant::now();
    let matrix = load_matrix(&args.data)?;
    let ingest_ms = ms(t0);
    let dataset = args.data.dataset.display().to_string();

    let exact = if args.with_exact {
        Some(exact_matrix_residual(&dense_of(&matrix), args.k)?)
    } else {
        None
    };

    let mut pair = Vec::new();
    for (label, family) in [
        ("osnap", SketchFamily::Osnap(args.s)),
        ("gaussian", SketchFamily::Gaussian),
    ] {
        let trials = run_trials(args.trials, |t| {
            // Matched seed sequence across the two families.
            let seed = derive_seed(args.seed, t as u64);
            let st =
                BilinearSketchState::plain(family, matrix.rows, matrix.cols, args.m, seed)?;
            let out = batch_estimate(
                matrix.triplets.iter().copied(),
                args.k,
                st.left().clone(),
                st.right().clone(),
            )?;
            check_estimate(out.estimate)?;
            Ok(TrialReport {
                seed,
                estimate: out.estimate,
                eps_rel: eps_rel(out.estimate, exact),
                sketch_ms: out.sketch_time.as_secs_f64() * 1e3,
                finalize_ms: out.finalize_time.as_secs_f64() * 1e3,
            })
        })?;
        pair.push(assemble(
            dataset.clone(),
            Params {
                rows: Some(matrix.rows),
                cols: Some(matrix.cols),
                k: args.k,
                m: Some(args.m),
                family: Some(label.into()),
                s: (label == "osnap").then_some(args.s),
                seed: args.seed,
                trials: args.trials,
                ..Params::default()
            },
            ingest_ms,
            exact,
            trials,
            None,
        ));
    }

    emit(
        args.data.json_out.as_deref(),
        &serde_json::json!({
            "command": command_echo(),
            "dataset": dataset,
            "pair": pair,
        }),
    )
}

fn cmd_exact(args: ExactArgs) -> Result<()> {
    let t0 = Instant::now();
    let (dataset, params, ingest_ms, exact, finalize_ms) = match args.data.format {
        Format::Stream => {
            let p = args
                .p
                .ok_or_else(|| Error::InvalidInput("--p is required for stream datasets".into()))?;
            if !p.is_finite() || p < 1.0 {
                return Err(Error::InvalidInput(format!("p must be finite and >= 1, got {p}")));
            }
            let stream = load_stream(&args.data)?;
            let ingest_ms = ms(t0);
            let t1 = Instant::now();
            let exact = exact_vector_residual(&stream.replay(), args.k, p);
            (
                args.data.dataset.display().to_string(),
                Params {
                    n: Some(stream.n),
                    k: args.k,
                    p: Some(p),
                    seed: 0,
                    trials: 0,
                    ..Params::default()
                },
                ingest_ms,
                exact,
                ms(t1),
            )
        }
        _ => {
            let matrix = load_matrix(&args.data)?;
            let ingest_ms = ms(t0);
            let t1 = Instant::now();
            let exact = exact_matrix_residual(&dense_of(&matrix), args.k)?;
            (
                args.data.dataset.display().to_string(),
                Params {
                    rows: Some(matrix.rows),
                    cols: Some(matrix.cols),
                    k: args.k,
                    seed: 0,
                    trials: 0,
                    ..Params::default()
                },
                ingest_ms,
                exact,
                ms(t1),
            )
        }
    };

    let report = ExperimentReport {
        command: command_echo(),
        dataset,
        params,
        estimate: None,
        exact: Some(exact),
        exact_is_zero: exact == 0.0,
        eps_rel: None,
        timings_ms: Timings {
            ingest_ms,
            sketch_ms: 0.0,
            finalize_ms,
        },
        trial_count: 0,
        trials: Vec::new(),
        recovered: None,
    };
    emit(
        args.data.json_out.as_deref(),
        &serde_json::to_value(&report).expect("report serializes"),
    )
}

fn gen_hard(args: GenHardArgs) -> Result<()> {
    let which = match args.variant {
        VariantArg::D1 => HardKind::D1,
        VariantArg::D2 => HardKind::D2,
    };
    let inst = gen_hard_pair(&HardInstanceSpec::new(args.k, args.eps, args.seed, which))?;
    let (rows, cols) = (inst.matrix.rows(), inst.matrix.cols());
    let triplets: Vec<(usize, usize, f64)> = inst.matrix.iter_nonzero().collect();
    io::write_matrixmarket(
        &args.out,
        &SparseMatrix {
            rows,
            cols,
            triplets,
        },
    )?;
    emit(
        args.json_out.as_deref(),
        &serde_json::json!({
            "command": command_echo(),
            "dataset": args.out.display().to_string(),
            "kind": "hard",
            "variant": match which { HardKind::D1 => "d1", HardKind::D2 => "d2" },
            "rows": rows,
            "cols": cols,
            "k": args.k,
            "eps": args.eps,
            "seed": args.seed,
            "alpha": inst.alpha,
            "sigma_max_g": inst.sigma_max_g,
        }),
    )
}

fn gen_zipf(args: GenZipfArgs) -> Result<()> {
    if args.n == 0 {
        return Err(Error::InvalidInput("universe size must be positive".into()));
    }
    let spec = ZipfStreamSpec {
        n: args.n,
        exponent: args.exponent,
        scale: args.scale.unwrap_or(args.n as f64),
        update_count: args.updates.unwrap_or(2 * args.n),
        turnstile_fraction: args.churn,
        seed: args.seed,
    };
    let (updates, x) = gen_zipf_stream(&spec);
    let written = updates.len();
    io::write_vector_stream(
        &args.out,
        &VectorStream {
            n: args.n,
            updates,
        },
    )?;
    emit(
        args.json_out.as_deref(),
        &serde_json::json!({
            "command": command_echo(),
            "dataset": args.out.display().to_string(),
            "kind": "zipf",
            "n": args.n,
            "exponent": args.exponent,
            "scale": spec.scale,
            "churn": args.churn,
            "seed": args.seed,
            "updates_written": written,
            "nonzero_count": x.iter().filter(|&&v| v != 0.0).count(),
        }),
    )
}

fn gen_gap(args: GenGapArgs) -> Result<()> {
    if args.k == 0 || args.block == 0 {
        return Err(Error::InvalidInput(
            "k and block must both be positive".into(),
        ));
    }
    let gap = gen_gap_vector(args.k, args.block, args.spike, args.seed);
    let n = args.k * args.block;
    let updates: Vec<(usize, f64)> = gap
        .x
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i, v))
        .collect();
    let written = updates.len();
    io::write_vector_stream(&args.out, &VectorStream { n, updates })?;
    emit(
        args.json_out.as_deref(),
        &serde_json::json!({
            "command": command_echo(),
            "dataset": args.out.display().to_string(),
            "kind": "gap",
            "n": n,
            "k": args.k,
            "block": args.block,
            "spike": args.spike,
            "seed": args.seed,
            "planted": gap.planted.iter().map(|&i| i + 1).collect::<Vec<_>>(),
            "updates_written": written,
        }),
    )
}
