use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use meshtrack::pipeline::{
    evaluate, export_cloud, track, write_metrics, CanonicalSource, CorrespondenceSource,
    Intrinsics, PipelineError, RunConfig,
};
use meshtrack::solver::{SolverConfig, SolverError};
use meshtrack::synth::{generate_sequence, write_sequence, NoiseModel, Scenario, SynthConfig};

#[derive(Parser)]
#[command(name = "meshtrack", about = "Non-rigid surface tracking from RGBD sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic RGBD sequence with ground truth
    Synth(SynthArgs),
    /// Track a sequence and write estimated meshes + energy trace
    Track(TrackArgs),
    /// Compare estimated meshes against ground truth
    Eval(EvalArgs),
    /// Convert an estimated mesh to a metric point cloud via pinhole intrinsics
    ExportCloud(ExportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// One of: translate, slant, bend, rotate, fold, textureless-rotate
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    spacing: Option<f64>,
    /// Planted features per 100x100 px (0 = textureless)
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    seq: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional key=value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    z_near: Option<f64>,
    #[arg(long)]
    z_far: Option<f64>,
    /// Correspondence source: detector | csv | none
    #[arg(long)]
    corr: Option<String>,
    /// Canonical mesh OBJ (default: built from frame 0)
    #[arg(long)]
    canonical: Option<PathBuf>,
    #[arg(long)]
    lambda_c: Option<f64>,
    #[arg(long)]
    lambda_d: Option<f64>,
    #[arg(long)]
    lambda_b: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    occlusion_threshold: Option<f64>,
    #[arg(long)]
    match_gate: Option<f64>,
    /// Equivalent to --lambda-d 0
    #[arg(long)]
    disable_depth: bool,
    /// Equivalent to --lambda-b 0
    #[arg(long)]
    disable_boundary: bool,
    /// Print the effective configuration and exit
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "metrics.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 525.0)]
    fx: f64,
    #[arg(long, default_value_t = 525.0)]
    fy: f64,
    #[arg(long, default_value_t = 319.5)]
    cx: f64,
    #[arg(long, default_value_t = 239.5)]
    cy: f64,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_IO: u8 = 4;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Track(args) => cmd_track(args),
        Command::Eval(args) => cmd_eval(args),
        Command::ExportCloud(args) => cmd_export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

type CmdResult = Result<(), (u8, String)>;

fn cmd_synth(args: SynthArgs) -> CmdResult {
    let scenario: Scenario =
        args.scenario.parse().map_err(|e| (EXIT_CONFIG, format!("{e}")))?;
    let mut config = SynthConfig::preset(scenario, args.seed);
    if let Some(v) = args.frames {
        config.frames = v;
    }
    if let Some(v) = args.width {
        config.width = v;
    }
    if let Some(v) = args.height {
        config.height = v;
    }
    if let Some(v) = args.spacing {
        config.spacing = v;
    }
    if let Some(v) = args.density {
        config.density = v;
    }
    let mut noise = NoiseModel::default();
    if let Some(v) = args.noise_sigma {
        noise.sigma = v;
    }
    if let Some(v) = args.dropout {
        noise.dropout = v;
    }
    config.noise = noise;
    let seq = generate_sequence(&config).map_err(|e| (EXIT_IO, format!("{e}")))?;
    write_sequence(&seq, &args.out).map_err(|e| (EXIT_IO, format!("{e}")))?;
    println!(
        "wrote {} frames ({} vertices) to {}",
        config.frames,
        seq.mesh.n(),
        args.out.display()
    );
    Ok(())
}

/// Key=value config file values, applied below defaults but beneath flags.
fn apply_config_file(path: &PathBuf, run: &mut RunConfig) -> Result<(), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut z_near = None;
    let mut z_far = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("bad config line: {line}"));
        };
        let v = v.trim();
        let parse_f = || v.parse::<f64>().map_err(|_| format!("bad number for {k}: {v}"));
        match k.trim() {
            "spacing" => run.spacing = parse_f()?,
            "z_near" => z_near = Some(parse_f()?),
            "z_far" => z_far = Some(parse_f()?),
            "lambda_c" => run.solver.params.lambda_c = parse_f()?,
            "lambda_d" => run.solver.params.lambda_d = parse_f()?,
            "lambda_b" => run.solver.params.lambda_b = parse_f()?,
            "alpha" => run.solver.params.alpha = parse_f()?,
            "occlusion_threshold" => run.solver.params.occlusion_threshold = parse_f()?,
            "max_iterations" => {
                run.solver.max_iterations =
                    v.parse().map_err(|_| format!("bad number for {k}: {v}"))?
            }
            "convergence_tol" => run.solver.convergence_tol = parse_f()?,
            "refresh_data_terms_every" => {
                run.solver.refresh_data_terms_every =
                    v.parse().map_err(|_| format!("bad number for {k}: {v}"))?
            }
            "match_gate" => run.match_gate = Some(parse_f()?),
            "corr" => {
                run.correspondence_source = parse_corr_source(v)?;
            }
            "canonical" => run.canonical_source = CanonicalSource::FromObj(PathBuf::from(v)),
            other => return Err(format!("unknown config key: {other}")),
        }
    }
    if let (Some(zn), Some(zf)) = (z_near, z_far) {
        run.z_band = Some((zn, zf));
    }
    Ok(())
}

fn parse_corr_source(s: &str) -> Result<CorrespondenceSource, String> {
    match s {
        "detector" => Ok(CorrespondenceSource::Detector),
        "csv" => Ok(CorrespondenceSource::Csv),
        "none" => Ok(CorrespondenceSource::None),
        _ => Err(format!("correspondence source must be detector|csv|none, got {s}")),
    }
}

fn dump_config(run: &RunConfig) {
    let p = &run.solver.params;
    println!("spacing={}", run.spacing);
    match run.z_band {
        Some((zn, zf)) => println!("z_near={zn}\nz_far={zf}"),
        None => println!("# z_near/z_far taken from the sequence manifest"),
    }
    println!("lambda_c={}", p.lambda_c);
    println!("lambda_d={}", p.lambda_d);
    println!("lambda_b={}", p.lambda_b);
    println!("alpha={}", p.alpha);
    println!("occlusion_threshold={}", p.occlusion_threshold);
    println!("max_iterations={}", run.solver.max_iterations);
    println!("convergence_tol={}", run.solver.convergence_tol);
    println!("refresh_data_terms_every={}", run.solver.refresh_data_terms_every);
    println!(
        "corr={}",
        match run.correspondence_source {
            CorrespondenceSource::Detector => "detector",
            CorrespondenceSource::Csv => "csv",
            CorrespondenceSource::None => "none",
        }
    );
    match &run.canonical_source {
        CanonicalSource::FromFrame => println!("# canonical mesh built from frame 0"),
        CanonicalSource::FromObj(p) => println!("canonical={}", p.display()),
    }
    match run.match_gate {
        Some(g) => println!("match_gate={g}"),
        None => println!("# match_gate defaults to 3 x spacing"),
    }
}

fn cmd_track(args: TrackArgs) -> CmdResult {
    let mut run = RunConfig::new(args.seq, args.out);
    run.solver = SolverConfig::default();
    if let Some(path) = &args.config {
        apply_config_file(path, &mut run).map_err(|e| (EXIT_CONFIG, e))?;
    }
    if let Some(v) = args.spacing {
        run.spacing = v;
    }
    match (args.z_near, args.z_far) {
        (Some(zn), Some(zf)) => run.z_band = Some((zn, zf)),
        (None, None) => {}
        _ => return Err((EXIT_CONFIG, "--z-near and --z-far must be given together".into())),
    }
    if let Some(s) = &args.corr {
        run.correspondence_source = parse_corr_source(s).map_err(|e| (EXIT_CONFIG, e))?;
    }
    if let Some(p) = args.canonical {
        run.canonical_source = CanonicalSource::FromObj(p);
    }
    if let Some(v) = args.lambda_c {
        run.solver.params.lambda_c = v;
    }
    if let Some(v) = args.lambda_d {
        run.solver.params.lambda_d = v;
    }
    if let Some(v) = args.lambda_b {
        run.solver.params.lambda_b = v;
    }
    if let Some(v) = args.alpha {
        run.solver.params.alpha = v;
    }
    if let Some(v) = args.max_iters {
        run.solver.max_iterations = v;
    }
    if let Some(v) = args.tol {
        run.solver.convergence_tol = v;
    }
    if let Some(v) = args.occlusion_threshold {
        run.solver.params.occlusion_threshold = v;
    }
    if let Some(v) = args.match_gate {
        run.match_gate = Some(v);
    }
    if args.disable_depth {
        run.solver.params.lambda_d = 0.0;
    }
    if args.disable_boundary {
        run.solver.params.lambda_b = 0.0;
    }
    if args.dump_config {
        dump_config(&run);
        return Ok(());
    }
    match track(&run) {
        Ok(report) => {
            println!(
                "tracked {} frames, {} vertices, {} correspondences dropped",
                report.frames, report.vertex_count, report.dropped_correspondences
            );
            Ok(())
        }
        Err(PipelineError::Solver(SolverError::Diverged(it))) => {
            Err((EXIT_DIVERGED, format!("diverged at iteration {it}")))
        }
        Err(PipelineError::Config(msg)) => Err((EXIT_CONFIG, msg)),
        Err(e) => Err((EXIT_IO, format!("{e}"))),
    }
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let report = evaluate(&args.est, &args.truth).map_err(|e| (EXIT_IO, format!("{e}")))?;
    write_metrics(&report, &args.out).map_err(|e| (EXIT_IO, format!("{e}")))?;
    println!("mean rmse {:.4}, mean max error {:.4}", report.mean_rmse, report.mean_max);
    Ok(())
}

fn cmd_export(args: ExportArgs) -> CmdResult {
    let intr = Intrinsics { fx: args.fx, fy: args.fy, cx: args.cx, cy: args.cy };
    export_cloud(&args.mesh, &args.out, &intr).map_err(|e| (EXIT_IO, format!("{e}")))?;
    Ok(())
}
