//! The `smallclip` command line.
//!
//! Every subcommand writes its outputs atomically and drops a
//! `<output>.run.json` manifest beside each one. Exit status is 0 on
//! success, 1 on a runtime error and 2 on a usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::audio::{train_audio_model, AudioModel, FOREST_CHECKPOINT_KIND, MLP_CHECKPOINT_KIND};
use crate::config::{AudioConfig, AudioKind, HeadKind, KeyValues, TrainConfig};
use crate::data::{
    generate_synthetic, load_dataset, manifest_bytes, validate_dataset, ClassDistribution, Clip, Dataset, Split,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, evaluate, repeated_runs, split_labels, EvalReport};
use crate::fusion::{
    default_grid_step, ensemble_table, fuse_tables, learn_fusion_weights, run_recipe, train_audio_ensemble,
    train_video_ensemble, FusionWeights, Recipe,
};
use crate::io::{write_atomic, RunManifest};
use crate::nn::Checkpoint;
use crate::scores::{ScoreTable, ScoreVector};
use crate::video::{train_video_model, VideoModel, VIDEO_CHECKPOINT_KIND};

/// Environment variable selecting the log level (`error`, `info`, `debug`).
pub const LOG_ENV: &str = "SMALLCLIP_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "smallclip",
    version,
    about = "Temporal pooling, audio heads, late fusion and model selection over precomputed clip features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic clip manifest.
    Synth(SynthArgs),
    /// Load a manifest and summarize it.
    Validate(ValidateArgs),
    /// Train a video head and save its checkpoint.
    TrainVideo(TrainVideoArgs),
    /// Train an audio model and save its checkpoint.
    TrainAudio(TrainAudioArgs),
    /// Score clips with a saved checkpoint.
    Predict(PredictArgs),
    /// Fuse score files with fixed weights (mean by default).
    Fuse(FuseArgs),
    /// Grid-search fusion weights on the labeled val clips.
    LearnFusion(LearnFusionArgs),
    /// Train a seed ensemble and write its averaged scores.
    Ensemble(EnsembleArgs),
    /// Evaluate a score file against manifest labels.
    Evaluate(EvaluateArgs),
    /// Stratified k-fold cross-validation over merged train and val clips.
    CrossValidate(CrossValidateArgs),
    /// Train one configuration under several seeds; report mean and std.
    Repeat(RepeatArgs),
    /// Run a submission recipe end to end.
    Recipe(RecipeArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    classes: usize,
    /// Train clips per class.
    #[arg(long, default_value_t = 20)]
    clips_per_class: usize,
    #[arg(long, default_value_t = 10)]
    val_per_class: usize,
    #[arg(long, default_value_t = 0)]
    test_per_class: usize,
    #[arg(long, default_value_t = 32)]
    feature_dim: usize,
    /// 0 generates clips without audio.
    #[arg(long, default_value_t = 48)]
    audio_dim: usize,
    #[arg(long, default_value_t = 16)]
    min_len: usize,
    #[arg(long, default_value_t = 48)]
    max_len: usize,
    /// Distance between class centroids.
    #[arg(long, default_value_t = 10.0)]
    margin: f64,
    /// Per-frame feature noise.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Per-clip feature offset noise.
    #[arg(long, default_value_t = 0.0)]
    clip_noise: f64,
    #[arg(long, default_value_t = 10.0)]
    audio_margin: f64,
    #[arg(long, default_value_t = 0.1)]
    audio_noise: f64,
    /// Probability that a clip has no audio.
    #[arg(long, default_value_t = 0.0)]
    missing_audio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Also write the summary as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainVideoArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Training config (key=value).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Head: score-mean, avg-pool, weighted-avg-pool or lstm; overrides the config.
    #[arg(long)]
    pooling: Option<HeadKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainAudioArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Audio model: mlp or forest; overrides the config.
    #[arg(long)]
    model: Option<AudioKind>,
    /// Auxiliary manifest to pretrain the MLP on.
    #[arg(long)]
    pretrain: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Checkpoint written by train-video or train-audio.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Splits to score, comma-separated (train, val, test or all).
    #[arg(long, default_value = "all")]
    split: String,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FuseArgs {
    /// Score CSV; repeat for each source.
    #[arg(long = "scores", required = true)]
    scores: Vec<PathBuf>,
    /// Comma-separated weights, one per source; mean when omitted.
    #[arg(long)]
    weights: Option<FusionWeights>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LearnFusionArgs {
    #[arg(long = "scores", required = true)]
    scores: Vec<PathBuf>,
    /// Supplies the val labels.
    #[arg(long)]
    manifest: PathBuf,
    /// Grid resolution; 0.05 for two sources and 0.1 for more by default.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Weights file (`weights=...`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ModelChoice {
    /// Training config (key=value); `head=` selects video, `kind=` audio.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Video head; selects the video branch.
    #[arg(long, conflicts_with = "model")]
    pooling: Option<HeadKind>,
    /// Audio model (mlp or forest); selects the audio branch.
    #[arg(long)]
    model: Option<AudioKind>,
    /// Auxiliary manifest to pretrain audio MLPs on.
    #[arg(long)]
    pretrain: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    choice: ModelChoice,
    #[arg(long, default_value_t = 4)]
    members: usize,
    #[arg(long, default_value = "all")]
    split: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Target class distribution CSV for the weighted accuracy.
    #[arg(long)]
    dist: Option<PathBuf>,
    #[arg(long, default_value = "val")]
    split: String,
    /// Report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CrossValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    choice: ModelChoice,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RepeatArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    choice: ModelChoice,
    /// Number of seeds: `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Ensemble size per run.
    #[arg(long, default_value_t = 1)]
    members: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RecipeArgs {
    /// Shipped recipe, submission1 to submission7.
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    preset: Option<String>,
    /// Recipe file (key=value).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    pretrain: Option<PathBuf>,
    #[arg(long)]
    dist: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Fused score CSV; the val report goes to `<out>.report.csv`.
    #[arg(long)]
    out: PathBuf,
}

/// Provenance collected while a command runs.
struct Run {
    command: &'static str,
    argv: Vec<String>,
    started: Instant,
    config: BTreeMap<String, String>,
    seeds: Vec<u64>,
    inputs: Vec<String>,
    members: Vec<String>,
}

impl Run {
    fn new(command: &'static str, argv: &[String]) -> Self {
        Run {
            command,
            argv: argv.to_vec(),
            started: Instant::now(),
            config: BTreeMap::new(),
            seeds: Vec::new(),
            inputs: Vec::new(),
            members: Vec::new(),
        }
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    fn config(&mut self, kv: &KeyValues) {
        self.config
            .extend(kv.entries().iter().map(|(k, v)| (k.clone(), v.clone())));
    }

    /// Writes each output and its manifest.
    fn finish(self, outputs: &[(&Path, Vec<u8>)]) -> Result<()> {
        for (path, bytes) in outputs {
            write_atomic(path, bytes)?;
        }
        let manifest = RunManifest {
            command: self.command.into(),
            argv: self.argv,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: outputs.iter().map(|(p, _)| p.display().to_string()).collect(),
            members: self.members,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        for (path, _) in outputs {
            manifest.write_beside(path)?;
        }
        Ok(())
    }
}

fn parse_splits(s: &str) -> Result<Vec<Split>> {
    if s == "all" {
        return Ok(Split::ALL.to_vec());
    }
    s.split(',')
        .map(|p| Split::parse(p.trim()).ok_or_else(|| Error::config(format!("unknown split `{p}`"))))
        .collect()
}

fn clips_in<'a>(ds: &'a Dataset, splits: &[Split]) -> impl Iterator<Item = &'a Clip> {
    let splits = splits.to_vec();
    ds.clips().iter().filter(move |c| splits.contains(&c.split))
}

fn load_kv(path: Option<&Path>, run: &mut Run) -> Result<KeyValues> {
    match path {
        Some(p) => {
            run.input(p);
            KeyValues::load(p)
        }
        None => Ok(KeyValues::default()),
    }
}

fn load_manifest(path: &Path, run: &mut Run) -> Result<Dataset> {
    run.input(path);
    load_dataset(path)
}

/// `--seed` wins over the config's `seed`, which wins over 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> u64 {
    flag.or(config).unwrap_or(0)
}

enum Branch {
    Video(TrainConfig),
    Audio(AudioConfig),
}

impl Branch {
    fn resolve(choice: &ModelChoice, run: &mut Run) -> Result<Self> {
        let mut kv = load_kv(choice.config.as_deref(), run)?;
        let audio = choice.model.is_some() || (choice.pooling.is_none() && kv.raw("kind").is_some());
        let branch = if audio {
            if let Some(kind) = choice.model {
                kv.set("kind", kind);
            }
            Branch::Audio(AudioConfig::from_key_values(&kv)?)
        } else {
            if let Some(head) = choice.pooling {
                kv.set("head", head);
            }
            Branch::Video(TrainConfig::from_key_values(&kv)?)
        };
        run.config(&match &branch {
            Branch::Video(c) => c.to_key_values(),
            Branch::Audio(c) => c.to_key_values(),
        });
        Ok(branch)
    }

    fn config_seed(&self) -> Option<u64> {
        match self {
            Branch::Video(c) => c.seed,
            Branch::Audio(c) => c.seed,
        }
    }

    /// Trains `members` seed-consecutive models on `ds` and scores `clips`.
    /// Clips an audio model cannot score get uniform scores.
    fn ensemble_scores(
        &self,
        ds: &Dataset,
        clips: &[&Clip],
        seed: u64,
        members: usize,
        jobs: usize,
        pretrain: Option<&Dataset>,
    ) -> Result<ScoreTable> {
        match self {
            Branch::Video(cfg) => {
                let models = train_video_ensemble(ds, cfg, seed, members, jobs)?;
                ensemble_table(&models, clips.iter().copied(), jobs)
            }
            Branch::Audio(cfg) => {
                let models = train_audio_ensemble(ds, cfg, seed, members, jobs, pretrain)?;
                let scored = ensemble_table(&models, clips.iter().copied(), jobs)?;
                let mut table = ScoreTable::new(ds.classes());
                for clip in clips {
                    let s = scored
                        .get(&clip.id)
                        .cloned()
                        .unwrap_or_else(|| ScoreVector::uniform(ds.classes()));
                    table.insert(clip.id.clone(), s)?;
                }
                Ok(table)
            }
        }
    }
}

fn optional_dataset(path: Option<&Path>, run: &mut Run) -> Result<Option<Dataset>> {
    path.map(|p| load_manifest(p, run)).transpose()
}

fn cmd_synth(a: &SynthArgs, mut run: Run) -> Result<()> {
    let mut cfg = SynthConfig::uniform(a.classes, a.clips_per_class, a.val_per_class, a.test_per_class);
    cfg.feature_dim = a.feature_dim;
    cfg.audio_dim = (a.audio_dim > 0).then_some(a.audio_dim);
    cfg.min_len = a.min_len;
    cfg.max_len = a.max_len;
    cfg.margin = a.margin;
    cfg.noise = a.noise;
    cfg.clip_noise = a.clip_noise;
    cfg.audio_margin = a.audio_margin;
    cfg.audio_noise = a.audio_noise;
    cfg.missing_audio = a.missing_audio;
    let synth = generate_synthetic(&cfg, a.seed)?;
    let value = serde_json::to_value(&cfg)?;
    if let serde_json::Value::Object(map) = value {
        run.config.extend(map.into_iter().map(|(k, v)| (k, v.to_string())));
    }
    run.seeds.push(a.seed);
    println!("{} clips written to {}", synth.dataset.len(), a.out.display());
    run.finish(&[(&a.out, manifest_bytes(&synth.dataset))])
}

fn cmd_validate(a: &ValidateArgs, mut run: Run) -> Result<()> {
    let ds = load_manifest(&a.manifest, &mut run)?;
    let report = validate_dataset(&ds);
    print!("{report}");
    match &a.out {
        Some(out) => {
            let mut bytes = serde_json::to_vec_pretty(&report)?;
            bytes.push(b'\n');
            run.finish(&[(out, bytes)])
        }
        None => Ok(()),
    }
}

fn report_accuracy(label: &str, acc: Option<f64>) {
    match acc {
        Some(a) => println!("{label} val accuracy: {a:.4}"),
        None => println!("{label}: no labeled val clips"),
    }
}

fn cmd_train_video(a: &TrainVideoArgs, mut run: Run) -> Result<()> {
    let ds = load_manifest(&a.manifest, &mut run)?;
    let mut kv = load_kv(a.config.as_deref(), &mut run)?;
    if let Some(head) = a.pooling {
        kv.set("head", head);
    }
    let cfg = TrainConfig::from_key_values(&kv)?;
    let seed = resolve_seed(a.seed, cfg.seed);
    run.config(&cfg.to_key_values());
    run.seeds.push(seed);
    let (model, log) = train_video_model(&ds, &cfg, seed)?;
    report_accuracy(cfg.head.as_str(), log.final_val_accuracy());
    run.finish(&[(&a.out, model.to_checkpoint().to_bytes())])
}

fn cmd_train_audio(a: &TrainAudioArgs, mut run: Run) -> Result<()> {
    let ds = load_manifest(&a.manifest, &mut run)?;
    let mut kv = load_kv(a.config.as_deref(), &mut run)?;
    if let Some(kind) = a.model {
        kv.set("kind", kind);
    }
    let cfg = AudioConfig::from_key_values(&kv)?;
    let seed = resolve_seed(a.seed, cfg.seed);
    let pretrain = optional_dataset(a.pretrain.as_deref(), &mut run)?;
    run.config(&cfg.to_key_values());
    run.seeds.push(seed);
    let (model, log) = train_audio_model(&ds, &cfg, seed, pretrain.as_ref())?;
    report_accuracy(cfg.kind.as_str(), log.final_val_accuracy());
    run.finish(&[(&a.out, model.to_checkpoint()?.to_bytes())])
}

fn cmd_predict(a: &PredictArgs, mut run: Run) -> Result<()> {
    run.input(&a.model);
    let ck = Checkpoint::load(&a.model)?;
    let ds = load_manifest(&a.manifest, &mut run)?;
    let clips: Vec<&Clip> = clips_in(&ds, &parse_splits(&a.split)?).collect();
    let table = match ck.kind.as_str() {
        VIDEO_CHECKPOINT_KIND => {
            let m = VideoModel::from_checkpoint(&ck)?;
            run.seeds.push(m.seed);
            ensemble_table(std::slice::from_ref(&m), clips, a.jobs)?
        }
        MLP_CHECKPOINT_KIND | FOREST_CHECKPOINT_KIND => {
            let m = AudioModel::from_checkpoint(&ck)?;
            run.seeds.push(m.seed);
            ensemble_table(std::slice::from_ref(&m), clips, a.jobs)?
        }
        other => return Err(Error::config(format!("unknown checkpoint kind `{other}`"))),
    };
    run.config.extend(ck.meta.clone());
    println!("{} clips scored", table.len());
    run.finish(&[(&a.out, table.to_csv_bytes())])
}

fn load_tables(paths: &[PathBuf], run: &mut Run) -> Result<Vec<ScoreTable>> {
    paths
        .iter()
        .map(|p| {
            run.input(p);
            ScoreTable::load(p)
        })
        .collect()
}

fn cmd_fuse(a: &FuseArgs, mut run: Run) -> Result<()> {
    let tables = load_tables(&a.scores, &mut run)?;
    let weights = match &a.weights {
        Some(w) => w.clone(),
        None => FusionWeights::uniform(tables.len()),
    };
    run.config.insert("weights".into(), weights.to_string());
    let fused = fuse_tables(&tables.iter().collect::<Vec<_>>(), &weights)?;
    run.finish(&[(&a.out, fused.to_csv_bytes())])
}

fn cmd_learn_fusion(a: &LearnFusionArgs, mut run: Run) -> Result<()> {
    let tables = load_tables(&a.scores, &mut run)?;
    let ds = load_manifest(&a.manifest, &mut run)?;
    let labels = split_labels(&ds, Split::Val);
    if labels.is_empty() {
        return Err(Error::config("the manifest has no labeled val clips"));
    }
    let val: Vec<ScoreTable> = tables
        .iter()
        .map(|t| {
            let mut v = ScoreTable::new(t.classes());
            for (id, _) in &labels {
                let s = t
                    .get(id)
                    .ok_or_else(|| Error::contract(format!("no scores for val clip `{id}`")))?;
                v.insert(id.clone(), s.clone())?;
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let step = a.grid_step.unwrap_or(default_grid_step(tables.len()));
    run.config.insert("grid_step".into(), step.to_string());
    let w = learn_fusion_weights(&val.iter().collect::<Vec<_>>(), &labels, step)?;
    println!("weights={w}");
    run.finish(&[(&a.out, format!("weights={w}\n").into_bytes())])
}

fn cmd_ensemble(a: &EnsembleArgs, mut run: Run) -> Result<()> {
    let ds = load_manifest(&a.manifest, &mut run)?;
    let branch = Branch::resolve(&a.choice, &mut run)?;
    let pretrain = optional_dataset(a.choice.pretrain.as_deref(), &mut run)?;
    let clips: Vec<&Clip> = clips_in(&ds, &parse_splits(&a.split)?).collect();
    run.seeds = (0..a.members).map(|i| crate::fusion::member_seed(a.seed, i)).collect();
    let table = branch.ensemble_scores(&ds, &clips, a.seed, a.members, a.jobs, pretrain.as_ref())?;
    run.members = run.seeds.iter().map(|s| format!("seed={s}")).collect();
    println!("{} members, {} clips scored", a.members, table.len());
    run.finish(&[(&a.out, table.to_csv_bytes())])
}

fn eval_report(
    scores: &ScoreTable,
    ds: &Dataset,
    split: Split,
    dist: Option<&ClassDistribution>,
) -> Result<EvalReport> {
    let labels = split_labels(ds, split);
    if labels.is_empty() {
        return Err(Error::config(format!(
            "no labeled {} clips to evaluate",
            split.as_str()
        )));
    }
    evaluate(scores, &labels, dist)
}

fn cmd_evaluate(a: &EvaluateArgs, mut run: Run) -> Result<()> {
    run.input(&a.scores);
    let scores = ScoreTable::load(&a.scores)?;
    let ds = load_manifest(&a.manifest, &mut run)?;
    let dist = match &a.dist {
        Some(p) => {
            run.input(p);
            Some(ClassDistribution::load(p)?)
        }
        None => None,
    };
    let split = Split::parse(&a.split).ok_or_else(|| Error::config(format!("unknown split `{}`", a.split)))?;
    let report = eval_report(&scores, &ds, split, dist.as_ref())?;
    print!("{report}");
    match &a.out {
        Some(out) => run.finish(&[(out, report.to_csv_bytes())]),
        None => Ok(()),
    }
}

fn cmd_cross_validate(a: &CrossValidateArgs, mut run: Run) -> Result<()> {
    let ds = load_manifest(&a.manifest, &mut run)?;
    let branch = Branch::resolve(&a.choice, &mut run)?;
    let pretrain = optional_dataset(a.choice.pretrain.as_deref(), &mut run)?;
    let seed = a.seed;
    // Folds already run in parallel; members inside a fold train inline.
    let cv = cross_validate(&ds, a.folds, seed, a.jobs, |fold, s| {
        let held: Vec<&Clip> = fold.split(Split::Val).collect();
        branch.ensemble_scores(fold, &held, s, 1, 1, pretrain.as_ref())
    })?;
    run.seeds = cv.per_fold.seeds.clone();
    run.config.insert("folds".into(), a.folds.to_string());
    print!("{}", cv.per_fold);
    println!("pooled accuracy: {:.4}", cv.pooled.accuracy);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["fold", "seed", "accuracy"])?;
    for (k, (s, acc)) in cv.per_fold.seeds.iter().zip(&cv.per_fold.accuracies).enumerate() {
        w.write_record([k.to_string(), s.to_string(), acc.to_string()])?;
    }
    w.write_record(["mean".into(), String::new(), cv.per_fold.mean.to_string()])?;
    w.write_record(["std".into(), String::new(), cv.per_fold.std.to_string()])?;
    w.write_record(["pooled".into(), String::new(), cv.pooled.accuracy.to_string()])?;
    let bytes = w.into_inner().map_err(|e| Error::io(&a.out, e.into_error()))?;
    run.finish(&[(&a.out, bytes)])
}

fn cmd_repeat(a: &RepeatArgs, mut run: Run) -> Result<()> {
    let ds = load_manifest(&a.manifest, &mut run)?;
    let branch = Branch::resolve(&a.choice, &mut run)?;
    let pretrain = optional_dataset(a.choice.pretrain.as_deref(), &mut run)?;
    let base = resolve_seed(Some(a.seed), branch.config_seed());
    let seeds: Vec<u64> = (0..a.runs as u64).map(|i| base.wrapping_add(i)).collect();
    let labels = split_labels(&ds, Split::Val);
    if labels.is_empty() {
        return Err(Error::config("the manifest has no labeled val clips"));
    }
    let val: Vec<&Clip> = ds.split(Split::Val).filter(|c| c.label.is_some()).collect();
    let stats = repeated_runs(&seeds, a.jobs, |s| {
        let table = branch.ensemble_scores(&ds, &val, s, a.members, 1, pretrain.as_ref())?;
        Ok(evaluate(&table, &labels, None)?.accuracy)
    })?;
    run.seeds = seeds;
    run.config.insert("members".into(), a.members.to_string());
    print!("{stats}");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "accuracy"])?;
    for (s, acc) in stats.seeds.iter().zip(&stats.accuracies) {
        w.write_record([s.to_string(), acc.to_string()])?;
    }
    w.write_record(["mean".into(), stats.mean.to_string()])?;
    w.write_record(["std".into(), stats.std.to_string()])?;
    let bytes = w.into_inner().map_err(|e| Error::io(&a.out, e.into_error()))?;
    run.finish(&[(&a.out, bytes)])
}

fn cmd_recipe(a: &RecipeArgs, mut run: Run) -> Result<()> {
    let recipe = match (&a.preset, &a.config) {
        (Some(name), _) => Recipe::preset(name)?,
        (None, Some(path)) => {
            run.input(path);
            Recipe::load(path)?
        }
        (None, None) => return Err(Error::config("give --preset or --config")),
    };
    let ds = load_manifest(&a.manifest, &mut run)?;
    let pretrain = optional_dataset(a.pretrain.as_deref(), &mut run)?;
    let dist = match &a.dist {
        Some(p) => {
            run.input(p);
            Some(ClassDistribution::load(p)?)
        }
        None => None,
    };
    run.config(&recipe.to_key_values());
    run.seeds.push(a.seed);
    let out = run_recipe(&recipe, &ds, a.seed, a.jobs, pretrain.as_ref())?;
    run.members = out.members.iter().map(|(spec, _)| spec.to_string()).collect();
    run.config.insert("fusion_weights".into(), out.weights.to_string());
    println!(
        "recipe {}: {} members, fusion weights {}",
        recipe.name,
        out.members.len(),
        out.weights
    );
    let mut outputs: Vec<(&Path, Vec<u8>)> = vec![(&a.out, out.scores.to_csv_bytes())];
    let report_path = {
        let mut name = a.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".report.csv");
        a.out.with_file_name(name)
    };
    if out.report.is_some() {
        let report = eval_report(&out.scores, &ds, Split::Val, dist.as_ref())?;
        print!("{report}");
        outputs.push((&report_path, report.to_csv_bytes()));
    }
    info!("recipe {} done", recipe.name);
    run.finish(&outputs)
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Runs the CLI on `argv` (program name first) and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, Run::new("synth", &args)),
        Command::Validate(a) => cmd_validate(a, Run::new("validate", &args)),
        Command::TrainVideo(a) => cmd_train_video(a, Run::new("train-video", &args)),
        Command::TrainAudio(a) => cmd_train_audio(a, Run::new("train-audio", &args)),
        Command::Predict(a) => cmd_predict(a, Run::new("predict", &args)),
        Command::Fuse(a) => cmd_fuse(a, Run::new("fuse", &args)),
        Command::LearnFusion(a) => cmd_learn_fusion(a, Run::new("learn-fusion", &args)),
        Command::Ensemble(a) => cmd_ensemble(a, Run::new("ensemble", &args)),
        Command::Evaluate(a) => cmd_evaluate(a, Run::new("evaluate", &args)),
        Command::CrossValidate(a) => cmd_cross_validate(a, Run::new("cross-validate", &args)),
        Command::Repeat(a) => cmd_repeat(a, Run::new("repeat", &args)),
        Command::Recipe(a) => cmd_recipe(a, Run::new("recipe", &args)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
