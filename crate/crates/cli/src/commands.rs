use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use matrank::linalg::io::{read_csv, write_csv};
use matrank::linalg::{mean, Matrix};
use matrank::penalty::PenaltySpec;
use matrank::rank::{estimate_rank, test_rank_at, Method, MethodKind, PenaltyChoice, RankOptions};
use matrank::sim::{run_monte_carlo, Cell, SimModel};
use matrank::sparse_svd::{sparse_svd, tune_lambda, SparseSvdOptions, TuneGrid};
use matrank::video::{
    evaluate, load_frames, load_samples, read_labels, scan, subtract_background, write_labels,
    write_metrics, write_pgm, write_rank_trace, Background, FixtureConfig, ScanConfig, WindowPlan,
};
use matrank::Error;

use crate::{
    Cli, Command, FixtureArgs, PenaltyArgs, RankScanArgs, SimulateArgs, SparseSvdArgs, TestArgs,
};

/// Every window of a scan failed on a degenerate variance estimate.
#[derive(Debug)]
struct AllWindowsDegenerate;

impl std::fmt::Display for AllWindowsDegenerate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("numerical degeneracy in every window")
    }
}

impl std::error::Error for AllWindowsDegenerate {}

/// 2 for unreadable or malformed input, 3 when every window degenerated,
/// 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<AllWindowsDegenerate>() {
            return 3;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            let root = err.root();
            if root.is_input_error() || matches!(root, Error::InvalidParameter(_)) {
                return 2;
            }
        }
    }
    1
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed, out),
        Command::Test(a) => test(a, out),
        Command::RankScan(a) => rank_scan(a, out),
        Command::SparseSvd(a) => sparse(a, out),
        Command::Fixture(a) => fixture(a, cli.seed, out),
    }
}

/// Buffered writer on `--out`, or stdout.
fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn output_dir(out: Option<&Path>) -> Result<PathBuf> {
    let dir = out.ok_or_else(|| anyhow!("--out DIR is required for this command"))?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

fn rank_options(p: &PenaltyArgs, sigma0_sq: Option<f64>) -> Result<RankOptions<f64>> {
    let penalties = match (p.lambda_u, p.lambda_v) {
        (Some(lu), Some(lv)) => PenaltyChoice::Fixed {
            penalty_u: PenaltySpec::with_default(p.penalty, lu)?,
            penalty_v: PenaltySpec::with_default(p.penalty, lv)?,
        },
        _ => PenaltyChoice::Tuned {
            grid: TuneGrid {
                family: p.penalty,
                ..TuneGrid::default()
            },
            per_k: p.tune_per_k,
        },
    };
    Ok(RankOptions {
        penalties,
        max_iters: p.max_iters,
        tol: p.tol,
        sigma0_sq,
    })
}

/// Methods usable without knowing the true mean.
fn data_method(kind: MethodKind) -> Result<Method<f64>> {
    Ok(match kind {
        MethodKind::PluginGn => Method::PluginGn,
        MethodKind::MdChi2 => Method::MdChi2,
        MethodKind::MdNormalized => Method::MdNormalized,
        MethodKind::OracleGn => {
            return Err(Error::InvalidParameter(
                "oracle-gn needs the true mean and is only available in simulate".into(),
            )
            .into())
        }
    })
}

fn simulate(a: &SimulateArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let mut cells = Vec::new();
    for &c in &a.c {
        let mut model = SimModel::build(a.model, a.n, a.q, a.p, c)?;
        if let Some(noise) = a.noise {
            model.error_dist = noise;
        }
        for &method in &a.method {
            cells.push(Cell {
                model: model.clone(),
                method,
                k: a.k,
            });
        }
    }
    let opts = rank_options(&a.penalty, None)?;
    let report = run_monte_carlo(&cells, a.reps, a.alpha, seed, &opts)?;
    let mut w = output(out)?;
    report.write_csv(&mut w, a.timings)?;
    w.flush()?;
    Ok(())
}

fn test(a: &TestArgs, out: Option<&Path>) -> Result<()> {
    let samples = load_samples(&a.samples)
        .with_context(|| format!("loading samples from {}", a.samples.display()))?;
    let method = data_method(a.method)?;
    let opts = rank_options(&a.penalty, a.sigma0_sq)?;
    let mut w = output(out)?;
    match a.k {
        Some(k) => {
            let t = test_rank_at(&samples, k, a.alpha, &method, &opts)?;
            writeln!(w, "method,k,statistic,reference,p_value,reject")?;
            writeln!(
                w,
                "{},{},{:?},{},{:?},{}",
                a.method, k, t.statistic, t.reference, t.p_value, t.reject
            )?;
        }
        None => {
            let rec = estimate_rank(&samples, a.alpha, a.k_max, &method, &opts)?;
            writeln!(w, "method,k,p_value,reject")?;
            for &(k, pv) in &rec.pvalues {
                writeln!(w, "{},{k},{pv:?},{}", a.method, pv < a.alpha)?;
            }
            eprintln!(
                "estimated_rank={} truncated={}",
                rec.estimated_rank, rec.truncated
            );
        }
    }
    w.flush()?;
    Ok(())
}

fn rank_scan(a: &RankScanArgs, out: Option<&Path>) -> Result<()> {
    let frames = load_frames(&a.frames, a.format)
        .with_context(|| format!("loading frames from {}", a.frames.display()))?;
    let reference = match &a.background {
        Some(path) => Background::Supplied(
            read_csv(path).with_context(|| format!("reading {}", path.display()))?,
        ),
        None => Background::FirstKMedian(a.background_median),
    };
    let residual = subtract_background(&frames, &reference)?;
    let config = ScanConfig {
        plan: WindowPlan::new(a.window, a.stride)?,
        alpha: a.alpha,
        k_max: a.k_max,
        method: data_method(a.method)?,
        options: rank_options(&a.penalty, None)?,
    };
    let records = scan(&residual, &config)?;

    let mut w = output(out)?;
    write_rank_trace(&mut w, &records, a.k_max)?;
    w.flush()?;
    drop(w);

    if let Some(path) = &a.plot {
        let mut p = BufWriter::new(File::create(path)?);
        writeln!(p, "# start_frame estimated_rank")?;
        for r in &records {
            match r.rank() {
                Some(rank) => writeln!(p, "{} {rank}", r.start_frame)?,
                None => writeln!(p, "{} NaN", r.start_frame)?,
            }
        }
        p.flush()?;
    }

    if let Some(path) = &a.labels {
        let labels = File::open(path)
            .map_err(Error::from)
            .and_then(read_labels)
            .with_context(|| format!("reading labels from {}", path.display()))?;
        let ranks: Vec<Option<usize>> = records.iter().map(|r| r.rank()).collect();
        let m = evaluate(&ranks, &labels)?;
        eprintln!(
            "fp_rate={:.4} fn_rate={:.4} failed_windows={}",
            m.false_positive_rate, m.false_negative_rate, m.skipped
        );
        if let Some(mp) = &a.metrics {
            let mut mw = BufWriter::new(File::create(mp)?);
            write_metrics(&mut mw, &m)?;
            mw.flush()?;
        }
    }

    if records.iter().all(|r| r.degenerate) {
        bail!(AllWindowsDegenerate);
    }
    Ok(())
}

fn sparse(a: &SparseSvdArgs, out: Option<&Path>) -> Result<()> {
    let dir = output_dir(out)?;
    let p = &a.penalty;
    let (xbar, penalties) = match (&a.mean, &a.samples) {
        (Some(path), _) => {
            let xbar = read_csv(path).with_context(|| format!("reading {}", path.display()))?;
            let lu = p.lambda_u.unwrap_or(0.0);
            let lv = p.lambda_v.unwrap_or(0.0);
            let pen = (
                PenaltySpec::with_default(p.penalty, lu)?,
                PenaltySpec::with_default(p.penalty, lv)?,
            );
            (xbar, pen)
        }
        (None, Some(path)) => {
            let samples = load_samples(path)
                .with_context(|| format!("loading samples from {}", path.display()))?;
            let pen = match (p.lambda_u, p.lambda_v) {
                (Some(lu), Some(lv)) => (
                    PenaltySpec::with_default(p.penalty, lu)?,
                    PenaltySpec::with_default(p.penalty, lv)?,
                ),
                _ => {
                    let grid = TuneGrid {
                        family: p.penalty,
                        ..TuneGrid::default()
                    };
                    tune_lambda(&samples, a.k, &grid, p.max_iters, p.tol)?
                }
            };
            (mean(&samples)?, pen)
        }
        (None, None) => bail!("one of --mean or --samples is required"),
    };
    let opts = SparseSvdOptions {
        max_iters: p.max_iters,
        tol: p.tol,
        penalty_u: penalties.0,
        penalty_v: penalties.1,
    };
    let fit = sparse_svd(&xbar, a.k, &opts)?;
    let t = &fit.triplet;
    write_csv(&t.u, dir.join("U.csv"))?;
    write_csv(&Matrix::from_vec(t.sigma.len(), 1, t.sigma.clone()), dir.join("sigma.csv"))?;
    write_csv(&t.v, dir.join("V.csv"))?;
    println!(
        "support rows={}/{} cols={}/{} lambda_u={:?} lambda_v={:?} iterations={} converged={}",
        fit.support_rows.len(),
        xbar.rows(),
        fit.support_cols.len(),
        xbar.cols(),
        opts.penalty_u.lambda(),
        opts.penalty_v.lambda(),
        fit.iterations,
        fit.converged
    );
    Ok(())
}

fn fixture(a: &FixtureArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let dir = output_dir(out)?;
    let config = FixtureConfig {
        frames: a.frames,
        ..FixtureConfig::default()
    };
    let fx = config.generate(seed)?;
    let digits = a.frames.saturating_sub(1).to_string().len().max(4);
    for (t, frame) in fx.frames.frames().iter().enumerate() {
        write_pgm(dir.join(format!("frame_{t:0digits$}.pgm")), frame, !a.ascii)?;
    }
    write_csv(&fx.background, dir.join("background.csv"))?;
    let labels = config.window_labels(WindowPlan::new(a.window, a.stride)?)?;
    let mut lw = BufWriter::new(File::create(dir.join("labels.csv"))?);
    write_labels(&mut lw, &labels)?;
    lw.flush()?;
    Ok(())
}
