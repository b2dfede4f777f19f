//! Command-line harness for generative-prior inverse problem experiments.
//!
//! Exit codes: 0 on success, 1 when any experiment cell failed, 2 when the
//! spec or arguments are invalid.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use genprior::error::Error;
use genprior::harness::{
    run_metrics, run_misalignment, run_probe, run_single_solve, run_sweep, run_train,
    write_pair_metrics_csv, ExperimentSpec, SolveArgs, SolveOperator,
};
use genprior::solvers::Method;
use genprior::{CgConfig, SolveConfig};

#[derive(Parser)]
#[command(name = "genprior", version, about = "Inverse problems with a generative prior")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SpecArgs {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Override the spec's global seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl SpecArgs {
    fn load(&self) -> Result<ExperimentSpec, Error> {
        let mut spec = ExperimentSpec::load(&self.spec)?;
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the generator prior described by the spec's `glo` section.
    Train(SpecArgs),
    /// Run the spec's full (ratio x image) reconstruction sweep.
    Sweep(SpecArgs),
    /// Sweep over vertically misaligned images (super-resolution only).
    Misalign {
        #[command(flatten)]
        spec: SpecArgs,
        /// Override the spec's misalignment_shift (pixels).
        #[arg(long)]
        shift: Option<i64>,
    },
    /// Per-image representation errors and row/null error decompositions.
    Probe(SpecArgs),
    /// Reconstruct a single PGM image under one operator.
    Solve(SolveCli),
    /// MSE / aggregate PSNR between two images or directories of images.
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        /// Write the per-pair CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolveCli {
    /// Directory holding a trained generator (manifest + weights).
    #[arg(long)]
    generator: PathBuf,
    /// Ground-truth image (PGM); the observation is synthesized from it.
    #[arg(long)]
    image: PathBuf,
    /// Operator family: gaussian | fourier | sr | blur | inpaint.
    #[arg(long)]
    op: String,
    /// Compression ratio in (0,1] (gaussian).
    #[arg(long)]
    m_over_n: Option<f64>,
    /// Mask PGM: frequency mask (fourier) or pixel mask (inpaint).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Downscale factor (sr).
    #[arg(long)]
    scale: Option<usize>,
    /// Kernel size (blur).
    #[arg(long)]
    kernel: Option<usize>,
    /// Observation noise standard deviation on the [0,1] pixel scale.
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    /// Comma-separated subset of csgm,csgm_bp,iagan,iagan_bp.
    #[arg(long, default_value = "csgm,csgm_bp,iagan,iagan_bp")]
    methods: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for reconstructions, traces, and report.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 800)]
    csgm_iterations: usize,
    #[arg(long, default_value_t = 400)]
    iagan_iterations: usize,
}

fn parse_methods(raw: &str) -> Result<Vec<Method>, Error> {
    let mut methods = Vec::new();
    for part in raw.split(',').filter(|p| !p.is_empty()) {
        let m: Method = part.trim().parse()?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(Error::InvalidSpec("no methods requested".into()));
    }
    Ok(methods)
}

fn solve_operator(args: &SolveCli) -> Result<SolveOperator, Error> {
    let need = |opt: Option<&PathBuf>, what: &str| {
        opt.cloned()
            .ok_or_else(|| Error::InvalidSpec(format!("--op {} needs --{what}", args.op)))
    };
    match args.op.as_str() {
        "gaussian" => Ok(SolveOperator::Gaussian {
            m_over_n: args
                .m_over_n
                .ok_or_else(|| Error::InvalidSpec("--op gaussian needs --m-over-n".into()))?,
        }),
        "fourier" => Ok(SolveOperator::Fourier {
            mask: need(args.mask.as_ref(), "mask")?,
        }),
        "sr" => Ok(SolveOperator::SuperResolution {
            scale: args
                .scale
                .ok_or_else(|| Error::InvalidSpec("--op sr needs --scale".into()))?,
        }),
        "blur" => Ok(SolveOperator::Blur {
            kernel: args
                .kernel
                .ok_or_else(|| Error::InvalidSpec("--op blur needs --kernel".into()))?,
        }),
        "inpaint" => Ok(SolveOperator::Inpaint {
            mask: need(args.mask.as_ref(), "mask")?,
        }),
        other => Err(Error::InvalidSpec(format!(
            "unknown operator family {other:?} (expected gaussian|fourier|sr|blur|inpaint)"
        ))),
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Train(args) => {
            let spec = args.load()?;
            let outcome = run_train(&spec)?;
            println!(
                "trained generator -> {} (final loss {}, {} epochs); loss trace -> {}",
                outcome.generator_dir.display(),
                outcome.final_loss,
                outcome.epochs_run,
                outcome.loss_csv.display()
            );
            Ok(0)
        }
        Command::Sweep(args) => {
            let spec = args.load()?;
            let outcome = run_sweep(&spec)?;
            report_sweep(&outcome)
        }
        Command::Misalign { spec, shift } => {
            let mut spec = spec.load()?;
            if let Some(shift) = shift {
                spec.misalignment_shift = shift;
            }
            let outcome = run_misalignment(&spec)?;
            report_sweep(&outcome)
        }
        Command::Probe(args) => {
            let spec = args.load()?;
            let outcome = run_probe(&spec)?;
            println!(
                "probe rows: {} -> {}",
                outcome.rows.len(),
                outcome.csv.display()
            );
            if outcome.failures.is_empty() {
                Ok(0)
            } else {
                for f in &outcome.failures {
                    eprintln!("probe failure: image {}: {}", f.image_id, f.message);
                }
                Ok(1)
            }
        }
        Command::Solve(args) => {
            let methods = parse_methods(&args.methods)?;
            let operator = solve_operator(&args)?;
            let solve_args = SolveArgs {
                generator: args.generator.clone(),
                image: args.image.clone(),
                operator,
                noise_std: args.noise_std,
                methods,
                seed: args.seed,
                output_dir: args.out.clone(),
                csgm: SolveConfig {
                    iterations: args.csgm_iterations,
                    ..SolveConfig::default()
                },
                iagan: SolveConfig {
                    iterations: args.iagan_iterations,
                    ..SolveConfig::iagan_default()
                },
                cg: CgConfig::default(),
            };
            let outcome = run_single_solve(&solve_args)?;
            println!("report -> {}", outcome.report_json.display());
            Ok(0)
        }
        Command::Metrics {
            truth,
            estimate,
            out,
        } => {
            let (rows, psnr) = run_metrics(&truth, &estimate)?;
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    write_pair_metrics_csv(&mut buf, &rows, psnr)?;
                    std::fs::write(&path, buf)?;
                    println!("metrics -> {}", path.display());
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    write_pair_metrics_csv(&mut stdout, &rows, psnr)?;
                }
            }
            Ok(0)
        }
    }
}

fn report_sweep(outcome: &genprior::harness::SweepOutcome) -> Result<u8, Error> {
    println!(
        "{} metric rows -> {}; summary -> {}",
        outcome.rows.len(),
        outcome.metrics_csv.display(),
        outcome.summary_csv.display()
    );
    if outcome.failures.is_empty() {
        Ok(0)
    } else {
        for f in &outcome.failures {
            eprintln!(
                "cell failure: image {} at m/n {}: {}",
                f.image_id, f.m_over_n, f.message
            );
        }
        Ok(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e @ (Error::InvalidSpec(_) | Error::Parse(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
