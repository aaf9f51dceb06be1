use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use mcur::io::{self, FrameFormat};
use mcur::metrics::{evaluate, time_block, EvalOptions, DEFAULT_TAU};
use mcur::separation::{separate, synth_video, Motion, SeparationConfig};
use mcur::{
    build_transform, mcur_decompose, qdeim_select, verify_exactness, Family, IndexSet, Regime,
    Scalar, Tensor3, Transform, TransformMatrix, TransformSpec,
};

/// Tensor CUR decompositions under *_M-products and video background separation.
#[derive(Parser)]
#[command(name = "mcur", version, arg_required_else_help = true)]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct TransformArgs {
    /// Transform family: dct, dst, dft, identity or u3.
    #[arg(long, default_value = "dct")]
    transform: Family,
    /// inv, surj or inj.
    #[arg(long, default_value = "inv")]
    regime: Regime,
    /// Rows of M; required for surj and inj.
    #[arg(long)]
    q: Option<usize>,
    /// Seed for every randomized step.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TransformArgs {
    fn spec(&self, p: usize) -> anyhow::Result<TransformSpec> {
        let q = match (self.regime, self.q) {
            (Regime::Invertible, q) => q.unwrap_or(p),
            (_, Some(q)) => q,
            (regime, None) => Cli::command()
                .error(
                    clap::error::ErrorKind::MissingRequiredArgument,
                    format!("--q is required for the {regime} regime"),
                )
                .exit(),
        };
        Ok(TransformSpec::new(self.transform, self.regime, p, q, self.seed)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpFormat {
    Pgm,
    #[cfg(feature = "png")]
    Png,
}

impl From<DumpFormat> for FrameFormat {
    fn from(f: DumpFormat) -> Self {
        match f {
            DumpFormat::Pgm => FrameFormat::Pgm,
            #[cfg(feature = "png")]
            DumpFormat::Png => FrameFormat::Png,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MotionArg {
    Static,
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// Q-DEIM index selection and tensor CUR factors of an MCT1 tensor.
    Decompose {
        /// MCT1 tensor.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        transform: TransformArgs,
        /// Target multirank r: number of selected rows and columns.
        #[arg(long)]
        rank: usize,
        /// Extra rows and columns selected beyond the rank.
        #[arg(long, default_value_t = 0)]
        oversample: usize,
        /// JSON file for the selected row and column indices.
        #[arg(long)]
        indices_out: Option<PathBuf>,
        /// Directory for C.mct, U.mct, R.mct and manifest.json.
        #[arg(long)]
        factors_out: Option<PathBuf>,
    },
    /// Low-rank plus sparse separation of a video.
    Separate {
        /// Frame directory or MCT1 file.
        #[arg(long)]
        input: PathBuf,
        /// Target multirank of the background.
        #[arg(long)]
        rank: usize,
        #[command(flatten)]
        transform: TransformArgs,
        /// Initial threshold; defaults to the largest deviation from the temporal median.
        #[arg(long)]
        zeta0: Option<f64>,
        #[arg(long, default_value_t = 0.7)]
        gamma: f64,
        #[arg(long, default_value_t = 50)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Reselect indices every iteration.
        #[arg(long)]
        resample: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write L and |S| as image sequences.
        #[arg(long, value_enum)]
        frames: Option<DumpFormat>,
    },
    /// AGE, pEPs and PSNR of an estimated background.
    Eval {
        /// MCT1 file, frame directory, or a `separate` output directory.
        #[arg(long)]
        est: PathBuf,
        /// Image, frame directory or MCT1 file.
        #[arg(long)]
        gt: PathBuf,
        /// Gray-level error above which a pixel counts as wrong.
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        /// Inputs are already on the 0-255 scale.
        #[arg(long)]
        scale255: bool,
        /// Write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Builds a transform and reports its shape and accuracy.
    TransformInfo {
        #[command(flatten)]
        transform: TransformArgs,
        /// Tube length; taken from --input when omitted.
        #[arg(long)]
        p: Option<usize>,
        /// Data tensor (needed for u3).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Write M as a q x p x 1 MCT1 tensor.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Writes a seeded synthetic video with known background and mask.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        rows: usize,
        #[arg(long, default_value_t = 64)]
        cols: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 8)]
        square: usize,
        #[arg(long, value_enum, default_value = "linear")]
        motion: MotionArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads().and_then(|()| run(&cli)) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("MCUR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("MCUR_THREADS={raw:?} is not a thread count"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Decompose {
            input,
            transform,
            rank,
            oversample,
            indices_out,
            factors_out,
        } => decompose(
            cli.json,
            input,
            transform,
            *rank + *oversample,
            indices_out.as_deref(),
            factors_out.as_deref(),
        ),
        Command::Separate {
            input,
            rank,
            transform,
            zeta0,
            gamma,
            max_iters,
            tol,
            resample,
            out,
            frames,
        } => {
            let x = io::load_sequence(input)?;
            let mut cfg = SeparationConfig::new(*rank, transform.spec(x.dims().2)?);
            cfg.zeta0 = *zeta0;
            cfg.gamma = *gamma;
            cfg.max_iters = *max_iters;
            cfg.tol = *tol;
            cfg.resample_indices = *resample;
            separate_cmd(cli.json, &x, &cfg, out, *frames)
        }
        Command::Eval {
            est,
            gt,
            tau,
            scale255,
            report,
        } => eval_cmd(cli.json, est, gt, *tau, *scale255, report.as_deref()),
        Command::TransformInfo {
            transform,
            p,
            input,
            matrix_out,
        } => transform_info(cli.json, transform, *p, input.as_deref(), matrix_out.as_deref()),
        Command::Synth {
            out,
            seed,
            rows,
            cols,
            frames,
            square,
            motion,
        } => {
            let motion = match motion {
                MotionArg::Static => Motion::Static,
                MotionArg::Linear => Motion::Linear,
            };
            synth_cmd(cli.json, out, *seed, (*rows, *cols, *frames), *square, motion)
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// 1-based rendering of an index set for human-readable output.
fn one_based(set: &IndexSet) -> String {
    let items: Vec<String> = set.as_slice().iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", items.join(", "))
}

fn decompose(
    json_out: bool,
    input: &Path,
    args: &TransformArgs,
    count: usize,
    indices_out: Option<&Path>,
    factors_out: Option<&Path>,
) -> anyhow::Result<()> {
    let tensor = io::read_mct(input)?;
    let spec = args.spec(tensor.dims().2)?;
    let (m, n, _) = tensor.dims();
    let count = count.min(m.min(n));
    let manifest = match tensor {
        io::AnyTensor::Real(a) => match build_transform(&spec, Some(&a))? {
            Transform::Real(tm) => decompose_with(&a, &tm, count, factors_out)?,
            Transform::Complex(tm) => decompose_with(&a.to_complex(), &tm, count, factors_out)?,
        },
        io::AnyTensor::Complex(a) => {
            if spec.family == Family::U3 {
                bail!("the u3 transform is only defined for real tensors");
            }
            let tm = build_transform(&spec, None)?.to_complex();
            decompose_with(&a, &tm, count, factors_out)?
        }
    };
    if let Some(path) = indices_out {
        write_json(path, &json!({ "I": manifest.rows, "J": manifest.cols }))?;
    }
    if let Some(dir) = factors_out {
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    if json_out {
        print_json(&manifest)?;
    } else {
        println!("transform     {} {} ({} x {})", spec.family, spec.regime, spec.q, spec.p);
        println!("rows I        {}", one_based(&manifest.rows));
        println!("cols J        {}", one_based(&manifest.cols));
        println!("multirank A   {:?}", manifest.multiranks.a.0);
        println!("multirank U   {:?}", manifest.multiranks.u.0);
        println!("rank cond.    {}", manifest.rank_condition_met);
        println!("rel. error    {:.3e}", manifest.error);
    }
    Ok(())
}

#[derive(Serialize)]
struct Multiranks {
    a: mcur::Multirank,
    u: mcur::Multirank,
}

#[derive(Serialize)]
struct Manifest {
    #[serde(rename = "I")]
    rows: IndexSet,
    #[serde(rename = "J")]
    cols: IndexSet,
    spec: TransformSpec,
    multiranks: Multiranks,
    error: f64,
    rank_condition_met: bool,
}

fn decompose_with<T: Scalar>(
    a: &Tensor3<T>,
    tm: &TransformMatrix<T>,
    count: usize,
    factors_out: Option<&Path>,
) -> anyhow::Result<Manifest> {
    let (rows, cols) = qdeim_select(a, tm, count)?;
    let factors = mcur_decompose(a, tm, &rows, &cols)?;
    let report = verify_exactness(a, &factors, tm)?;
    if let Some(dir) = factors_out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        io::write_mct(dir.join("C.mct"), &factors.c)?;
        io::write_mct(dir.join("U.mct"), &factors.u_pinv)?;
        io::write_mct(dir.join("R.mct"), &factors.r)?;
    }
    Ok(Manifest {
        rows,
        cols,
        spec: *tm.spec(),
        multiranks: Multiranks {
            a: report.multirank_a,
            u: report.multirank_u,
        },
        error: report.relative_error,
        rank_condition_met: report.rank_condition_met,
    })
}

fn separate_cmd(
    json_out: bool,
    x: &Tensor3<f64>,
    cfg: &SeparationConfig,
    out: &Path,
    frames: Option<DumpFormat>,
) -> anyhow::Result<()> {
    let (result, seconds) = time_block(|| separate(x, cfg));
    let result = result?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    io::write_mct(out.join("L.mct"), &result.low_rank)?;
    io::write_mct(out.join("S.mct"), &result.sparse)?;

    let mut trace = csv::Writer::from_path(out.join("trace.csv"))?;
    for rec in &result.trace {
        trace.serialize(rec)?;
    }
    trace.flush()?;

    let mut clamped = 0;
    if let Some(format) = frames {
        clamped += io::save_frames(&result.low_rank, out.join("L"), format.into())?;
        clamped += io::save_frames(&result.sparse.map(f64::abs), out.join("S"), format.into())?;
    }
    let last = result.trace.last().expect("separation records every iteration");
    let summary = json!({
        "dims": x.dims(),
        "rank": cfg.rank,
        "spec": cfg.transform,
        "zeta0": result.zeta0,
        "gamma": cfg.gamma,
        "tol": cfg.tol,
        "resample_indices": cfg.resample_indices,
        "I": result.rows,
        "J": result.cols,
        "iterations": result.iterations(),
        "converged": result.converged,
        "final_residual": last.residual,
        "clamped_values": clamped,
        "runtime_seconds": seconds,
    });
    write_json(&out.join("summary.json"), &summary)?;
    if json_out {
        print_json(&summary)?;
    } else {
        println!(
            "{} iterations ({}), residual {:.3e}, {:.2} s",
            result.iterations(),
            if result.converged { "converged" } else { "not converged" },
            last.residual,
            seconds
        );
        println!("rows I {}  cols J {}", one_based(&result.rows), one_based(&result.cols));
        if clamped > 0 {
            println!("{clamped} values clamped to [0, 1] in frame dumps");
        }
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn eval_cmd(
    json_out: bool,
    est: &Path,
    gt: &Path,
    tau: f64,
    scale255: bool,
    report_path: Option<&Path>,
) -> anyhow::Result<()> {
    let mut runtime = 0.0;
    let estimate = if est.join("L.mct").is_file() {
        if let Ok(text) = fs::read_to_string(est.join("summary.json")) {
            let summary: serde_json::Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", est.join("summary.json").display()))?;
            runtime = summary["runtime_seconds"].as_f64().unwrap_or(0.0);
        }
        io::read_mct(est.join("L.mct"))?.into_real()?
    } else {
        io::load_sequence(est)?
    };
    let truth = io::load_sequence(gt)?;
    let mut report = evaluate(&estimate, &truth, EvalOptions { tau, scale255 })?;
    report.runtime_seconds = runtime;
    if let Some(path) = report_path {
        write_json(path, &report)?;
    }
    if json_out {
        print_json(&report)?;
    } else {
        let psnr = |v: f64| if v.is_finite() { format!("{v:.4} dB") } else { "inf".into() };
        println!("frames        {}", report.per_frame.len());
        println!("AGE           {:.4}", report.averages.age);
        println!("pEPs          {:.6} (tau = {tau})", report.averages.peps);
        println!(
            "PSNR          {} ({} perfect frames excluded)",
            psnr(report.averages.psnr),
            report.infinite_psnr_frames
        );
        if runtime > 0.0 {
            println!("runtime       {runtime:.3} s");
        }
    }
    Ok(())
}

fn transform_info(
    json_out: bool,
    args: &TransformArgs,
    p: Option<usize>,
    input: Option<&Path>,
    matrix_out: Option<&Path>,
) -> anyhow::Result<()> {
    let data = input.map(io::load_sequence).transpose()?;
    let p = match (p, &data) {
        (Some(p), _) => p,
        (None, Some(d)) => d.dims().2,
        (None, None) => bail!("give --p or --input"),
    };
    let spec = args.spec(p)?;
    let transform = build_transform(&spec, data.as_ref())?;
    if let Some(path) = matrix_out {
        match &transform {
            Transform::Real(tm) => io::write_mct(path, &Tensor3::broadcast(tm.matrix(), 1))?,
            Transform::Complex(tm) => io::write_mct(path, &Tensor3::broadcast(tm.matrix(), 1))?,
        }
    }
    let info = json!({
        "spec": spec,
        "shape": [spec.q, spec.p],
        "complex": spec.family.is_complex(),
        "rank": transform.rank(),
        "pinv_identity_error": transform.pinv_identity_error(),
        "orthonormality_error": transform.orthonormality_error(),
    });
    if json_out {
        print_json(&info)?;
    } else {
        println!("transform     {} {}", spec.family, spec.regime);
        println!("shape         {} x {}", spec.q, spec.p);
        println!("rank          {}", info["rank"]);
        println!("pinv error    {:.3e}", transform.pinv_identity_error());
        println!("orthonormal   {:.3e}", transform.orthonormality_error());
    }
    Ok(())
}

fn synth_cmd(
    json_out: bool,
    out: &Path,
    seed: u64,
    (m, n, p): (usize, usize, usize),
    square: usize,
    motion: Motion,
) -> anyhow::Result<()> {
    let sv = synth_video(m, n, p, square, motion, seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    io::write_mct(out.join("video.mct"), &sv.video)?;
    io::write_mct(out.join("background.mct"), &Tensor3::broadcast(&sv.background, p))?;
    io::write_mct(out.join("mask.mct"), &sv.mask.to_tensor())?;
    let (bg, _) = io::encode_pgm(&sv.background);
    fs::write(out.join("background.pgm"), bg)?;
    io::save_frames(&sv.video, out.join("frames"), FrameFormat::Pgm)?;
    let summary = json!({
        "dims": [m, n, p],
        "square": square,
        "motion": match motion { Motion::Static => "static", Motion::Linear => "linear" },
        "seed": seed,
        "foreground_pixels": sv.mask.count(),
    });
    write_json(&out.join("synth.json"), &summary)?;
    if json_out {
        print_json(&summary)?;
    } else {
        println!("wrote {m}x{n}x{p} video with a {square}px square to {}", out.display());
    }
    Ok(())
}
