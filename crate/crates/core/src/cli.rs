//! Command-line front end: `synth`, `run`, `eval` and `ablate`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::RunConfig;
use crate::engine::{Engine, RunOutput, StopReason};
use crate::error::{Error, Result};
use crate::grid::{LabelMap, ProbMap, VideoSequence};
use crate::io;
use crate::metrics::{evaluate, Evaluation};
use crate::synth::{self, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(name = "vosreid", version, about = "Video object segmentation with re-identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene with ground-truth masks and flow.
    Synth(SynthArgs),
    /// Segment a sequence from its first-frame masks.
    Run(RunArgs),
    /// Score predicted masks against ground truth.
    Eval(EvalArgs),
    /// Compare runs with and without re-identification.
    Ablate(AblateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Occlusion,
    Unoccluded,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene description (JSON); overrides --preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "occlusion")]
    pub preset: Preset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    /// Directory of numbered frame PNGs.
    #[arg(long)]
    pub frames: PathBuf,
    /// Label PNG for the first frame; each nonzero label is one object.
    #[arg(long)]
    pub first_mask: PathBuf,
    /// Key-value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the re-identification loop.
    #[arg(long)]
    pub no_reid: bool,
    /// Also write per-instance probability maps.
    #[arg(long)]
    pub dump_probs: bool,
    /// Also write frames blended with the predicted labels.
    #[arg(long)]
    pub overlays: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Boundary tolerance in pixels; defaults to 0.8% of the image diagonal.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Where to write eval.txt and eval.json; defaults to --pred.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Ground-truth masks; defaults to the oracle scene of the config.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Honours `VOSREID_THREADS` for the worker pool size.
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("VOSREID_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("VOSREID_THREADS must be a number, got `{value}`")))?;
    // A second call in the same process (tests) finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
    }
}

fn synth_cmd(a: &SynthArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<SyntheticSpec>(&text)?
        }
        None => match a.preset {
            Preset::Occlusion => synth::occlusion_scene(),
            Preset::Unoccluded => synth::unoccluded_scene(),
        },
    };
    let scene = synth::generate(&spec, a.seed)?;
    io::save_sequence(&a.out.join("frames"), scene.sequence.frames())?;
    io::save_masks(&a.out.join("gt"), &scene.ground_truth)?;
    let flow_dir = a.out.join("flow");
    io::ensure_dir(&flow_dir)?;
    for (t, f) in scene.flows.iter().enumerate() {
        io::save_flow(&flow_dir.join(format!("{:05}.vsfl", t + 1)), f)?;
    }
    io::write_atomic(&a.out.join("spec.json"), serde_json::to_string_pretty(&spec)?.as_bytes())?;
    println!(
        "wrote {} frames with {} objects to {}",
        spec.frames,
        spec.objects.len(),
        a.out.display()
    );
    Ok(())
}

struct Prepared {
    cfg: RunConfig,
    seq: VideoSequence,
    first: Vec<ProbMap>,
    scene: Option<std::sync::Arc<synth::SyntheticScene>>,
}

fn prepare(a: &EngineArgs) -> Result<Prepared> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(n) = a.max_iterations {
        cfg.engine.max_iterations = Some(n);
        cfg.validate()?;
    }
    let seq = io::load_sequence(&a.frames)?;
    let labels = io::load_mask(&a.first_mask)?;
    if labels.dims() != seq.dims() {
        return Err(Error::InvalidInput(format!(
            "{} is {:?} but the frames are {:?}",
            a.first_mask.display(),
            labels.dims(),
            seq.dims()
        )));
    }
    let k = labels.max_label();
    if k == 0 {
        return Err(Error::InvalidInput(format!(
            "{} has no labelled object",
            a.first_mask.display()
        )));
    }
    let first = (1..=k).map(|l| ProbMap::from_label(&labels, l)).collect();
    let scene = if cfg.uses_oracle() || cfg.oracle_spec.is_some() {
        cfg.oracle_scene()?
    } else {
        None
    };
    Ok(Prepared { cfg, seq, first, scene })
}

fn run_engine(p: &Prepared, reid: bool) -> Result<RunOutput> {
    let backends = p.cfg.backends(p.scene.clone())?;
    let mut engine_cfg = p.cfg.engine;
    engine_cfg.reid_enabled = engine_cfg.reid_enabled && reid;
    Engine::new(&p.seq, &backends, engine_cfg)?.run(&p.first)
}

fn stop_label(stop: StopReason) -> &'static str {
    match stop {
        StopReason::NoRetrieval => "no_retrieval",
        StopReason::IterationCap => "iteration_cap",
        StopReason::ReidDisabled => "reid_disabled",
    }
}

/// Text log of a run: one line per retrieval, then the stop reason.
pub fn iteration_log(out: &RunOutput) -> String {
    let mut log = String::new();
    for rec in &out.iterations {
        let _ = writeln!(log, "{rec}");
    }
    let _ = writeln!(log, "stop={} iterations={}", stop_label(out.stop), out.iterations.len());
    log
}

fn run_cmd(a: &RunArgs) -> Result<()> {
    let p = prepare(&a.engine)?;
    let out = run_engine(&p, !a.no_reid)?;
    io::save_masks(&a.out.join("masks"), &out.labels)?;
    if a.dump_probs {
        let dir = a.out.join("probs");
        io::ensure_dir(&dir)?;
        for (t, row) in out.probs.iter().enumerate() {
            for (k, prob) in row.iter().enumerate() {
                io::save_prob(&dir.join(format!("{t:05}_{}.vspm", k + 1)), prob)?;
            }
        }
    }
    if a.overlays {
        io::save_overlays(&a.out.join("overlays"), p.seq.frames(), &out.labels)?;
    }
    io::write_atomic(&a.out.join("iterations.log"), iteration_log(&out).as_bytes())?;
    if out.truncated() {
        eprintln!("warning: stopped at the iteration cap; the result may be incomplete");
    }
    println!(
        "segmented {} frames, {} objects, {} retrievals ({})",
        p.seq.len(),
        p.first.len(),
        out.iterations.len(),
        stop_label(out.stop)
    );
    Ok(())
}

fn write_eval(dir: &Path, eval: &Evaluation) -> Result<()> {
    io::ensure_dir(dir)?;
    io::write_atomic(&dir.join("eval.txt"), eval.table().as_bytes())?;
    io::write_atomic(&dir.join("eval.json"), serde_json::to_string_pretty(eval)?.as_bytes())
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let pred = io::load_masks(&a.pred)?;
    let gt = io::load_masks(&a.gt)?;
    let eval = evaluate(&pred, &gt, a.tolerance)?;
    print!("{}", eval.table());
    write_eval(a.out.as_deref().unwrap_or(&a.pred), &eval)
}

fn ablate_cmd(a: &AblateArgs) -> Result<()> {
    let p = prepare(&a.engine)?;
    let gt: Vec<LabelMap> = match (&a.gt, &p.scene) {
        (Some(dir), _) => io::load_masks(dir)?,
        (None, Some(scene)) => scene.ground_truth.clone(),
        (None, None) => {
            return Err(Error::InvalidInput(
                "ablate needs --gt or a config with `oracle_spec`".into(),
            ))
        }
    };
    let without = evaluate(&run_engine(&p, false)?.labels, &gt, a.tolerance)?;
    let with = evaluate(&run_engine(&p, true)?.labels, &gt, a.tolerance)?;
    let delta = with.global_mean - without.global_mean;
    println!("without reid  {:.4}", without.global_mean);
    println!("with reid     {:.4}", with.global_mean);
    println!("delta         {delta:+.4}");
    if let Some(path) = &a.json {
        let doc = json!({
            "without_reid": without,
            "with_reid": with,
            "delta": delta,
        });
        io::write_atomic(path, serde_json::to_string_pretty(&doc)?.as_bytes())?;
    }
    Ok(())
}
