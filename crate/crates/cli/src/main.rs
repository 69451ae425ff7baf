//! `sliderkit`: train, compose, apply, and evaluate text-embedding sliders.
//!
//! Subcommands:
//!
//! * `train` — fit a slider from a prompt spec and write a `.tsl` artifact
//! * `apply` — encode a prompt with sliders active and export conditioning
//! * `compose` — merge several sliders (each at a strength) into one artifact
//! * `sweep` — measure projection/alignment/drift over a strength grid (CSV)
//! * `gradcheck` — finite-difference audit of the training gradients
//! * `inspect` — print any artifact's header as JSON
//!
//! Every command is deterministic: randomness flows from `--seed` (default 0,
//! never OS entropy), so rerunning a command with the same inputs reproduces
//! its outputs byte for byte. Commands that write files also record a
//! `<out>.manifest.json` with the resolved configuration.
//!
//! Exit codes: 0 success, 1 check failure (gradcheck over tolerance),
//! 2 configuration error, 3 numerical abort (non-finite loss).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use sliderkit_core::artifact::{
    load_encoder, save_conditioning, save_encoder, ConditioningMeta, SliderArtifact, SliderMeta,
    SliderRef, FORMAT_VERSION,
};
use sliderkit_core::container::read_container;
use sliderkit_core::encoder::{Encoder, EncoderConfig};
use sliderkit_core::error::Error;
use sliderkit_core::eval;
use sliderkit_core::gradcheck::{self, GradcheckOptions};
use sliderkit_core::lora::{compose, AdapterSet};
use sliderkit_core::runtime::{condition, ConditioningRequest, RequestedSlider, DEFAULT_T_GATE};
use sliderkit_core::tokenizer::Vocab;
use sliderkit_core::trainer::{train_slider, PromptSpec, QMode, TrainConfig};
use sliderkit_core::{Result, Tensor};

#[derive(Parser)]
#[command(name = "sliderkit", version, about = "Text-embedding slider toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a slider from a prompt spec
    Train(TrainArgs),
    /// Encode a prompt with sliders applied and export the embeddings
    Apply(ApplyArgs),
    /// Merge sliders, each at a fixed strength, into one artifact
    Compose(ComposeArgs),
    /// Sweep a slider over strengths and write the evaluation CSV
    Sweep(SweepArgs),
    /// Compare analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Print an artifact's header as JSON
    Inspect(InspectArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Prompt spec JSON (target/positive/negative/preserved)
    #[arg(long)]
    spec: PathBuf,
    /// Vocabulary file, one token per line
    #[arg(long)]
    vocab: PathBuf,
    /// Encoder weights file, or "init:<config.json>" to initialize weights
    /// from a config; repeat the flag for dual-encoder training
    #[arg(long = "encoder", required = true)]
    encoders: Vec<String>,
    /// Output slider artifact; the loss CSV lands at <out>.loss.csv
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f32>,
    /// Adapter rank
    #[arg(long)]
    rank: Option<usize>,
    /// How preserved concepts enter the target: "sum" or "mean"
    /// (overrides the spec file's q_mode)
    #[arg(long)]
    q_mode: Option<QMode>,
    /// Seed for adapter initialization (encoder weights seed via "init:")
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Save the (possibly freshly initialized) encoder weights here;
    /// single-encoder runs only
    #[arg(long)]
    save_encoder: Option<PathBuf>,
    /// Manifest path (default <out>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    prompt: String,
    #[arg(long)]
    vocab: PathBuf,
    /// Encoder weights file or "init:<config.json>"; repeatable
    #[arg(long = "encoder", required = true)]
    encoders: Vec<String>,
    /// Slider with strength as "path:alpha" (e.g. age.tsl:0.4); repeatable
    #[arg(long = "slider")]
    sliders: Vec<String>,
    /// Denoising timestep (0..=1000); when absent, sliders apply ungated
    #[arg(long)]
    timestep: Option<u32>,
    /// Gate threshold: sliders stay off while timestep > gate
    #[arg(long, default_value_t = DEFAULT_T_GATE)]
    gate: u32,
    /// Output conditioning file
    #[arg(long)]
    out: PathBuf,
    /// Manifest path (default <out>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ComposeArgs {
    /// Slider with strength as "path:alpha"; repeat for each source
    #[arg(long = "slider", required = true)]
    sliders: Vec<String>,
    /// Output slider artifact holding the merged update
    #[arg(long)]
    out: PathBuf,
    /// Manifest path (default <out>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Slider artifact to evaluate
    #[arg(long)]
    slider: PathBuf,
    /// Prompt spec JSON naming the target/positive/negative/preserved prompts
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Encoder weights file or "init:<config.json>"; repeatable
    #[arg(long = "encoder", required = true)]
    encoders: Vec<String>,
    /// Strength grid, comma-separated and ascending
    #[arg(long, value_delimiter = ',', default_values_t = eval::DEFAULT_ALPHAS)]
    alphas: Vec<f32>,
    /// Output CSV
    #[arg(long)]
    out: PathBuf,
    /// Manifest path (default <out>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Encoder config JSON for the fixture (small shapes keep it fast)
    #[arg(long)]
    config: PathBuf,
    /// Seeds the encoder weights and adapter content
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Negative control: corrupt one analytic gradient; the check must fail
    #[arg(long, hide = true)]
    corrupt_grad: bool,
    /// Write a manifest here (none by default; this command writes no files)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Any TSLW0001 artifact (slider, encoder, or conditioning)
    file: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Numerical(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Apply(args) => cmd_apply(args),
        Command::Compose(args) => cmd_compose(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

/// Print a line to stdout, treating a closed pipe (`sliderkit inspect | head`)
/// as success instead of a panic.
fn emit(text: impl AsRef<str>) -> Result<()> {
    use std::io::Write;
    let mut stdout = std::io::stdout();
    let write = stdout
        .write_all(text.as_ref().as_bytes())
        .and_then(|()| stdout.write_all(b"\n"))
        .and_then(|()| stdout.flush());
    match write {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

// ─── Shared plumbing ─────────────────────────────────────────────────────────

/// Load an encoder from a weights file, or initialize one from a config via
/// the "init:<config.json>" form. Initialization is seeded by the config, so
/// the same spec string always yields the same weights.
fn load_encoders(specs: &[String]) -> Result<Vec<Encoder>> {
    specs
        .iter()
        .map(|spec| match spec.strip_prefix("init:") {
            Some(config_path) => {
                let text = fs::read_to_string(config_path)?;
                let config: EncoderConfig = serde_json::from_str(&text)?;
                Encoder::init(config)
            }
            None => load_encoder(Path::new(spec)),
        })
        .collect()
}

/// Parse "path:alpha" (the strength rides after the last colon).
fn parse_slider_ref(arg: &str) -> Result<(PathBuf, f32)> {
    let parsed = arg
        .rsplit_once(':')
        .and_then(|(path, alpha)| alpha.parse::<f32>().ok().map(|a| (path, a)));
    match parsed {
        Some((path, alpha)) if !path.is_empty() && alpha.is_finite() => {
            Ok((PathBuf::from(path), alpha))
        }
        _ => Err(Error::config(format!(
            "slider argument {arg:?} must be \"path:alpha\", e.g. age.tsl:0.4"
        ))),
    }
}

/// Record of one finished command: enough to rerun it and reproduce the
/// outputs byte for byte.
struct ManifestBuilder {
    command: &'static str,
    config: Value,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: u64,
    started: Instant,
}

impl ManifestBuilder {
    fn new(command: &'static str, config: Value, seed: u64) -> Self {
        ManifestBuilder {
            command,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            started: Instant::now(),
        }
    }

    fn input(&mut self, path: impl AsRef<Path>) -> &mut Self {
        self.inputs.push(path.as_ref().display().to_string());
        self
    }

    fn output(&mut self, path: impl AsRef<Path>) -> &mut Self {
        self.outputs.push(path.as_ref().display().to_string());
        self
    }

    fn write(&self, path: &Path) -> Result<()> {
        let manifest = json!({
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seed": self.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "duration_secs": self.started.elapsed().as_secs_f64(),
        });
        fs::write(path, format!("{}\n", serde_json::to_string_pretty(&manifest)?))?;
        Ok(())
    }
}

/// Default manifest location: appended to the output name so `age.tsl` and
/// `age.csv` never collide.
fn manifest_path(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| PathBuf::from(format!("{}.manifest.json", out.display())))
}

// ─── Commands ────────────────────────────────────────────────────────────────

fn cmd_train(args: TrainArgs) -> Result<ExitCode> {
    let spec = PromptSpec::from_json_file(&args.spec)?;
    let vocab = Vocab::from_file(&args.vocab)?;
    let encoders = load_encoders(&args.encoders)?;

    let defaults = TrainConfig::default();
    let config = TrainConfig {
        epochs: args.epochs.unwrap_or(defaults.epochs),
        learning_rate: args.lr.unwrap_or(defaults.learning_rate),
        rank: args.rank.unwrap_or(defaults.rank),
        // Flag beats spec file beats the built-in default.
        q_mode: args.q_mode.or(spec.q_mode).unwrap_or(defaults.q_mode),
        seed: args.seed,
        ..defaults
    };
    let mut manifest = ManifestBuilder::new(
        "train",
        serde_json::to_value(&config)?,
        args.seed,
    );
    manifest.input(&args.spec).input(&args.vocab);
    for enc in &args.encoders {
        manifest.input(enc);
    }

    if let Some(path) = &args.save_encoder {
        if encoders.len() != 1 {
            return Err(Error::config(
                "--save-encoder supports single-encoder runs only".to_string(),
            ));
        }
        save_encoder(&encoders[0], path)?;
        manifest.output(path);
    }

    let (artifact, history) = train_slider(&encoders, &vocab, &spec, &config)?;
    artifact.save(&args.out)?;
    manifest.output(&args.out);

    let loss_path = PathBuf::from(format!("{}.loss.csv", args.out.display()));
    let mut csv = String::from("epoch,loss\n");
    for (i, loss) in history.iter().enumerate() {
        csv.push_str(&format!("{},{loss:.8e}\n", i + 1));
    }
    fs::write(&loss_path, csv)?;
    manifest.output(&loss_path);

    let manifest_out = manifest_path(&args.manifest, &args.out);
    manifest.write(&manifest_out)?;
    emit(format!(
        "trained {} in {} epochs (final loss {:.6e})",
        args.out.display(),
        config.epochs,
        history.last().copied().unwrap_or(f32::NAN)
    ))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_apply(args: ApplyArgs) -> Result<ExitCode> {
    let vocab = Vocab::from_file(&args.vocab)?;
    let encoders = load_encoders(&args.encoders)?;
    let refs = args.sliders.iter().map(|s| parse_slider_ref(s)).collect::<Result<Vec<_>>>()?;
    let artifacts =
        refs.iter().map(|(path, _)| SliderArtifact::load(path)).collect::<Result<Vec<_>>>()?;

    let sliders: Vec<RequestedSlider> = refs
        .iter()
        .zip(&artifacts)
        .map(|((path, alpha), artifact)| RequestedSlider {
            name: path.display().to_string(),
            artifact,
            alpha: *alpha,
        })
        .collect();
    let slider_refs: Vec<SliderRef> = sliders
        .iter()
        .map(|s| SliderRef { path: s.name.clone(), alpha: s.alpha })
        .collect();

    let request =
        ConditioningRequest { prompt: &args.prompt, sliders, timestep: args.timestep };
    let outputs = condition(&request, &encoders, &vocab, args.gate)?;

    let meta = ConditioningMeta {
        format_version: FORMAT_VERSION,
        kind: "conditioning".to_string(),
        prompt: args.prompt.clone(),
        sliders: slider_refs.clone(),
        timestep: args.timestep,
        t_gate: args.gate,
        encoder_fingerprints: encoders.iter().map(|e| e.fingerprint().to_string()).collect(),
    };
    save_conditioning(&args.out, &meta, &outputs)?;

    let mut manifest = ManifestBuilder::new(
        "apply",
        json!({
            "prompt": args.prompt,
            "sliders": slider_refs,
            "timestep": args.timestep,
            "t_gate": args.gate,
        }),
        0,
    );
    manifest.input(&args.vocab);
    for enc in &args.encoders {
        manifest.input(enc);
    }
    for (path, _) in &refs {
        manifest.input(path);
    }
    manifest.output(&args.out);
    manifest.write(&manifest_path(&args.manifest, &args.out))?;
    emit(format!("wrote {}", args.out.display()))?;
    Ok(ExitCode::SUCCESS)
}

/// Rewrite a composed adapter set so that saving it loses nothing: the save
/// format keeps only the raw A/B factors, so the set multiplier and
/// per-adapter strengths are folded into B beforehand.
fn bake_strengths(set: &AdapterSet) -> Result<AdapterSet> {
    let adapters = set
        .adapters()
        .iter()
        .map(|ad| {
            let effective = set.multiplier() * ad.alpha;
            let mut ad = ad.clone();
            if effective != 1.0 {
                let data: Vec<f32> = ad.b.data().iter().map(|v| v * effective).collect();
                ad.b = Tensor::param(ad.b.shape().to_vec(), data)?;
                ad.alpha = 1.0;
            }
            Ok(ad)
        })
        .collect::<Result<Vec<_>>>()?;
    AdapterSet::from_adapters(adapters, 1.0)
}

fn cmd_compose(args: ComposeArgs) -> Result<ExitCode> {
    let refs = args.sliders.iter().map(|s| parse_slider_ref(s)).collect::<Result<Vec<_>>>()?;
    let artifacts =
        refs.iter().map(|(path, _)| SliderArtifact::load(path)).collect::<Result<Vec<_>>>()?;
    let alphas: Vec<f32> = refs.iter().map(|(_, alpha)| *alpha).collect();

    let first = &artifacts[0];
    for ((path, _), artifact) in refs.iter().zip(&artifacts).skip(1) {
        if artifact.meta.encoder_fingerprints != first.meta.encoder_fingerprints {
            return Err(Error::config(format!(
                "slider {} targets different encoders than {}",
                path.display(),
                refs[0].0.display()
            )));
        }
    }

    let n_encoders = first.meta.encoder_fingerprints.len();
    let sets = (0..n_encoders)
        .map(|e| {
            let per_encoder: Vec<&AdapterSet> = artifacts.iter().map(|a| &a.sets[e]).collect();
            bake_strengths(&compose(&per_encoder, &alphas)?)
        })
        .collect::<Result<Vec<_>>>()?;

    // Provenance header: prompts echoed from every source; rank and epochs
    // describe the merged artifact itself (dense merges carry full-rank
    // factors, and no training produced them).
    let join = |field: fn(&PromptSpec) -> &str| -> String {
        artifacts.iter().map(|a| field(&a.meta.prompt)).collect::<Vec<_>>().join(" | ")
    };
    let meta = SliderMeta {
        format_version: FORMAT_VERSION,
        kind: "slider".to_string(),
        encoder_fingerprints: first.meta.encoder_fingerprints.clone(),
        rank: sets
            .iter()
            .flat_map(|s| s.adapters().iter().map(|ad| ad.rank()))
            .max()
            .unwrap_or(0),
        target_layers: first.meta.target_layers.clone(),
        prompt: PromptSpec {
            target: join(|p| &p.target),
            positive: join(|p| &p.positive),
            negative: join(|p| &p.negative),
            preserved: artifacts.iter().flat_map(|a| a.meta.prompt.preserved.clone()).collect(),
            q_mode: None,
        },
        epochs: 0,
        learning_rate: 0.0,
    };
    let composed = SliderArtifact { meta, sets };
    composed.save(&args.out)?;

    let slider_refs: Vec<SliderRef> = refs
        .iter()
        .map(|(path, alpha)| SliderRef { path: path.display().to_string(), alpha: *alpha })
        .collect();
    let mut manifest = ManifestBuilder::new("compose", json!({ "sliders": slider_refs }), 0);
    for (path, _) in &refs {
        manifest.input(path);
    }
    manifest.output(&args.out);
    manifest.write(&manifest_path(&args.manifest, &args.out))?;
    emit(format!("wrote {}", args.out.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let spec = PromptSpec::from_json_file(&args.spec)?;
    let vocab = Vocab::from_file(&args.vocab)?;
    let encoders = load_encoders(&args.encoders)?;
    let artifact = SliderArtifact::load(&args.slider)?;
    artifact.validate_against(&encoders, &args.slider.display().to_string())?;

    let report = eval::sweep(&artifact, &encoders, &vocab, &spec, &args.alphas)?;
    fs::write(&args.out, report.to_csv())?;

    let mut manifest =
        ManifestBuilder::new("sweep", json!({ "alphas": args.alphas }), 0);
    manifest.input(&args.slider).input(&args.spec).input(&args.vocab);
    for enc in &args.encoders {
        manifest.input(enc);
    }
    manifest.output(&args.out);
    manifest.write(&manifest_path(&args.manifest, &args.out))?;
    emit(format!("wrote {}", args.out.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.config)?;
    let config: EncoderConfig = serde_json::from_str(&text)?;
    let options = GradcheckOptions { seed: args.seed, corrupt_grad: args.corrupt_grad };
    let report = gradcheck::run(&config, &options)?;

    emit(format!(
        "gradcheck: max relative error {:.3e} over {} parameters (worst: {})",
        report.max_rel_error, report.params_checked, report.worst_param
    ))?;
    if let Some(path) = &args.manifest {
        let mut manifest = ManifestBuilder::new(
            "gradcheck",
            json!({ "seed": args.seed, "corrupt_grad": args.corrupt_grad }),
            args.seed,
        );
        manifest.input(&args.config);
        manifest.write(path)?;
    }
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "gradcheck FAILED: parameter {} off by relative error {:.3e} (tolerance {:.0e})",
            report.worst_param,
            report.max_rel_error,
            gradcheck::TOLERANCE
        );
        Ok(ExitCode::from(1))
    }
}

fn cmd_inspect(args: InspectArgs) -> Result<ExitCode> {
    let (meta, tensors) = read_container(&args.file)?;
    let index: Value = tensors
        .iter()
        .map(|(name, t)| (name.clone(), json!({ "dtype": "f32", "shape": t.shape() })))
        .collect::<serde_json::Map<String, Value>>()
        .into();
    let header = json!({ "meta": meta, "tensors": index });
    emit(serde_json::to_string_pretty(&header)?)?;
    Ok(ExitCode::SUCCESS)
}
