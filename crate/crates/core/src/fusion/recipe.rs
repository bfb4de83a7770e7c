use std::fmt;
use std::path::Path;

use log::info;
use serde::Serialize;

use super::ensemble::{ensemble_table, member_seed};
use super::fuse::{default_grid_step, fuse_weighted, learn_fusion_weights, FusionWeights};
use crate::audio::{train_audio_model, AudioModel};
use crate::config::{AudioConfig, AudioKind, HeadKind, KeyValues, TrainConfig};
use crate::data::{Clip, Dataset, EmotionClass, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate, split_labels, EvalReport};
use crate::rng::par_map;
use crate::scores::{ScoreTable, ScoreVector};
use crate::video::{train_video_model, VideoModel};

const PRESETS: [(&str, &str); 7] = [
    ("submission1", include_str!("../../recipes/submission1.recipe")),
    ("submission2", include_str!("../../recipes/submission2.recipe")),
    ("submission3", include_str!("../../recipes/submission3.recipe")),
    ("submission4", include_str!("../../recipes/submission4.recipe")),
    ("submission5", include_str!("../../recipes/submission5.recipe")),
    ("submission6", include_str!("../../recipes/submission6.recipe")),
    ("submission7", include_str!("../../recipes/submission7.recipe")),
];

const RECIPE_KEYS: &[&str] = &["name", "visual", "audio", "fusion", "weights", "grid_step", "train_on"];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    Mean,
    /// Fixed weights, visual first.
    Weighted(FusionWeights),
    /// Grid-searched on the labeled validation clips that have audio.
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainOn {
    Train,
    TrainVal,
}

/// A set of visual and audio ensembles and the rule fusing them.
#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub name: String,
    pub visual: Vec<(HeadKind, usize)>,
    pub audio: Vec<(AudioKind, usize)>,
    pub fusion: FusionMode,
    pub grid_step: Option<f64>,
    pub train_on: TrainOn,
    /// Overrides applied to every video member, from `video.<key>` lines.
    pub video_overrides: KeyValues,
    /// Overrides applied to every audio member, from `audio.<key>` lines.
    pub audio_overrides: KeyValues,
}

fn parse_sources<T: std::str::FromStr<Err = Error>>(spec: &str) -> Result<Vec<(T, usize)>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (kind, count) = item.split_once(':').unwrap_or((item, "1"));
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad multiplicity in `{item}`")))?;
            if count == 0 {
                return Err(Error::config(format!("multiplicity of `{item}` must be positive")));
            }
            Ok((kind.trim().parse()?, count))
        })
        .collect()
}

impl Recipe {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(&KeyValues::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }

    /// One of the shipped presets, `submission1` to `submission7`.
    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            Error::config(format!(
                "unknown preset `{name}` (expected one of {})",
                Self::preset_names().join(", ")
            ))
        })?;
        Self::parse(text)
    }

    pub fn preset_names() -> Vec<&'static str> {
        PRESETS.iter().map(|(n, _)| *n).collect()
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut video_overrides = KeyValues::default();
        let mut audio_overrides = KeyValues::default();
        for (k, v) in kv.entries() {
            if let Some(key) = k.strip_prefix("video.") {
                video_overrides.set(key, v);
            } else if let Some(key) = k.strip_prefix("audio.") {
                audio_overrides.set(key, v);
            } else if !RECIPE_KEYS.contains(&k.as_str()) {
                return Err(Error::config(format!("unknown recipe key `{k}`")));
            }
        }
        video_overrides.reject_unknown(TrainConfig::KEYS)?;
        audio_overrides.reject_unknown(AudioConfig::KEYS)?;
        if video_overrides.raw("head").is_some() || audio_overrides.raw("kind").is_some() {
            return Err(Error::config(
                "member kinds come from `visual` and `audio`, not overrides",
            ));
        }
        let visual = parse_sources(kv.raw("visual").unwrap_or(""))?;
        let audio = parse_sources(kv.raw("audio").unwrap_or(""))?;
        if visual.is_empty() && audio.is_empty() {
            return Err(Error::config("a recipe needs at least one score source"));
        }
        let modalities = usize::from(!visual.is_empty()) + usize::from(!audio.is_empty());
        let fusion = match kv.raw("fusion").unwrap_or("mean") {
            "mean" => FusionMode::Mean,
            "learned" => FusionMode::Learned,
            "weighted" => {
                let w: FusionWeights = kv
                    .raw("weights")
                    .ok_or_else(|| Error::config("weighted fusion needs `weights`"))?
                    .parse()?;
                if w.len() != modalities {
                    return Err(Error::config(format!(
                        "{} fusion weights for {modalities} modalities",
                        w.len()
                    )));
                }
                FusionMode::Weighted(w)
            }
            other => {
                return Err(Error::config(format!(
                    "unknown fusion `{other}` (expected mean, weighted or learned)"
                )))
            }
        };
        if kv.raw("weights").is_some() && !matches!(fusion, FusionMode::Weighted(_)) {
            return Err(Error::config("`weights` only applies to weighted fusion"));
        }
        let grid_step: Option<f64> = kv.get("grid_step")?;
        if let Some(step) = grid_step {
            if !(step > 0.0 && step <= 0.5) {
                return Err(Error::config(format!("grid_step {step} outside (0, 0.5]")));
            }
        }
        let train_on = match kv.raw("train_on").unwrap_or("train") {
            "train" => TrainOn::Train,
            "train+val" => TrainOn::TrainVal,
            other => {
                return Err(Error::config(format!(
                    "unknown train_on `{other}` (expected train or train+val)"
                )))
            }
        };
        let recipe = Recipe {
            name: kv.raw("name").unwrap_or("custom").to_string(),
            visual,
            audio,
            fusion,
            grid_step,
            train_on,
            video_overrides,
            audio_overrides,
        };
        recipe.video_config(HeadKind::AvgPool)?;
        recipe.audio_config(AudioKind::Mlp)?;
        Ok(recipe)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let join = |items: Vec<String>| items.join(",");
        let mut kv = KeyValues::default();
        kv.set("name", &self.name);
        if !self.visual.is_empty() {
            kv.set(
                "visual",
                join(self.visual.iter().map(|(k, n)| format!("{k}:{n}")).collect()),
            );
        }
        if !self.audio.is_empty() {
            kv.set(
                "audio",
                join(self.audio.iter().map(|(k, n)| format!("{k}:{n}")).collect()),
            );
        }
        match &self.fusion {
            FusionMode::Mean => kv.set("fusion", "mean"),
            FusionMode::Learned => kv.set("fusion", "learned"),
            FusionMode::Weighted(w) => {
                kv.set("fusion", "weighted");
                kv.set("weights", w);
            }
        }
        if let Some(step) = self.grid_step {
            kv.set("grid_step", step);
        }
        if self.train_on == TrainOn::TrainVal {
            kv.set("train_on", "train+val");
        }
        for (k, v) in self.video_overrides.entries() {
            kv.set(&format!("video.{k}"), v);
        }
        for (k, v) in self.audio_overrides.entries() {
            kv.set(&format!("audio.{k}"), v);
        }
        kv
    }

    pub fn video_config(&self, head: HeadKind) -> Result<TrainConfig> {
        let mut kv = TrainConfig::with_head(head).to_key_values();
        for (k, v) in self.video_overrides.entries() {
            kv.set(k, v);
        }
        TrainConfig::from_key_values(&kv)
    }

    pub fn audio_config(&self, kind: AudioKind) -> Result<AudioConfig> {
        let base = AudioConfig {
            kind,
            ..AudioConfig::default()
        };
        let mut kv = base.to_key_values();
        for (k, v) in self.audio_overrides.entries() {
            kv.set(k, v);
        }
        AudioConfig::from_key_values(&kv)
    }

    /// Every member in training order (visual first), with its seed.
    pub fn member_specs(&self, seed: u64) -> Vec<MemberSpec> {
        let kinds = self
            .visual
            .iter()
            .flat_map(|&(h, n)| std::iter::repeat_n(MemberKind::Video(h), n))
            .chain(
                self.audio
                    .iter()
                    .flat_map(|&(a, n)| std::iter::repeat_n(MemberKind::Audio(a), n)),
            );
        kinds
            .enumerate()
            .map(|(i, kind)| MemberSpec {
                kind,
                seed: member_seed(seed, i),
            })
            .collect()
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_key_values().to_text())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemberKind {
    Video(HeadKind),
    Audio(AudioKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemberSpec {
    pub kind: MemberKind,
    pub seed: u64,
}

impl fmt::Display for MemberSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            MemberKind::Video(h) => write!(f, "video {h} seed={}", self.seed),
            MemberKind::Audio(a) => write!(f, "audio {a} seed={}", self.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Member {
    Video(VideoModel),
    Audio(AudioModel),
}

/// Everything a recipe run produces.
#[derive(Debug, Clone)]
pub struct RecipeOutcome {
    pub members: Vec<(MemberSpec, Member)>,
    /// Visual ensemble scores over the val and test clips.
    pub visual: Option<ScoreTable>,
    /// Audio ensemble scores over the val and test clips that have audio.
    pub audio: Option<ScoreTable>,
    /// Weights over the modalities present, visual first.
    pub weights: FusionWeights,
    /// Fused scores over the val and test clips.
    pub scores: ScoreTable,
    /// Fused scores evaluated on the labeled val clips, if there are any.
    pub report: Option<EvalReport>,
}

fn restrict(table: &ScoreTable, ids: &[(String, EmotionClass)]) -> Result<ScoreTable> {
    let mut out = ScoreTable::new(table.classes());
    for (id, _) in ids {
        let s = table
            .get(id)
            .ok_or_else(|| Error::contract(format!("no scores for clip `{id}`")))?;
        out.insert(id.clone(), s.clone())?;
    }
    Ok(out)
}

/// Trains every member of `recipe` on `ds`, averages each modality's
/// members, fuses the modalities and scores the val and test clips.
///
/// Member `i` (counting visual members first) uses seed `seed + i`. Up to
/// `jobs` members train at once and clips are scored on up to `jobs`
/// threads; the result does not depend on `jobs`. A clip without audio
/// takes the visual scores unchanged. `pretrain` feeds the audio MLPs.
pub fn run_recipe(
    recipe: &Recipe,
    ds: &Dataset,
    seed: u64,
    jobs: usize,
    pretrain: Option<&Dataset>,
) -> Result<RecipeOutcome> {
    let train_ds = match recipe.train_on {
        TrainOn::Train => ds.clone(),
        TrainOn::TrainVal => ds.derive(
            ds.clips()
                .iter()
                .map(|c| Clip {
                    split: if c.split == Split::Val { Split::Train } else { c.split },
                    ..c.clone()
                })
                .collect(),
        )?,
    };
    let specs = recipe.member_specs(seed);
    info!("recipe {}: training {} members", recipe.name, specs.len());
    let trained = par_map(jobs, specs.clone(), |spec| {
        let member = match spec.kind {
            MemberKind::Video(h) => Member::Video(train_video_model(&train_ds, &recipe.video_config(h)?, spec.seed)?.0),
            MemberKind::Audio(a) => {
                Member::Audio(train_audio_model(&train_ds, &recipe.audio_config(a)?, spec.seed, pretrain)?.0)
            }
        };
        Ok(member)
    })
    .map_err(|e| Error::training(format!("recipe {}: {e}", recipe.name)))?;

    let video_models: Vec<VideoModel> = trained
        .iter()
        .filter_map(|m| match m {
            Member::Video(v) => Some(v.clone()),
            Member::Audio(_) => None,
        })
        .collect();
    let audio_models: Vec<AudioModel> = trained
        .iter()
        .filter_map(|m| match m {
            Member::Audio(a) => Some(a.clone()),
            Member::Video(_) => None,
        })
        .collect();

    let targets: Vec<&Clip> = ds.clips().iter().filter(|c| c.split != Split::Train).collect();
    let visual = if video_models.is_empty() {
        None
    } else {
        Some(ensemble_table(&video_models, targets.iter().copied(), jobs)?)
    };
    let audio = if audio_models.is_empty() {
        None
    } else {
        Some(ensemble_table(&audio_models, targets.iter().copied(), jobs)?)
    };

    let modalities = usize::from(visual.is_some()) + usize::from(audio.is_some());
    let weights = match &recipe.fusion {
        FusionMode::Mean => FusionWeights::uniform(modalities),
        FusionMode::Weighted(w) => w.clone(),
        FusionMode::Learned if modalities == 1 => FusionWeights::uniform(1),
        FusionMode::Learned => {
            let (v, a) = (
                visual.as_ref().expect("two modalities"),
                audio.as_ref().expect("two modalities"),
            );
            let labels: Vec<(String, EmotionClass)> = split_labels(ds, Split::Val)
                .into_iter()
                .filter(|(id, _)| a.get(id).is_some())
                .collect();
            if labels.is_empty() {
                return Err(Error::config("learned fusion needs labeled val clips with audio"));
            }
            let step = recipe.grid_step.unwrap_or(default_grid_step(2));
            let w = learn_fusion_weights(&[&restrict(v, &labels)?, &restrict(a, &labels)?], &labels, step)?;
            info!("recipe {}: learned fusion weights {w}", recipe.name);
            w
        }
    };

    let classes = ds.classes();
    let mut scores = ScoreTable::new(classes);
    for clip in &targets {
        let v = visual.as_ref().and_then(|t| t.get(&clip.id));
        let a = audio.as_ref().and_then(|t| t.get(&clip.id));
        let fused = match (v, a) {
            (Some(v), Some(a)) => fuse_weighted(&[v, a], &weights)?,
            (Some(v), None) => v.clone(),
            (None, Some(a)) => a.clone(),
            (None, None) => ScoreVector::uniform(classes),
        };
        scores.insert(clip.id.clone(), fused)?;
    }
    let val_labels = split_labels(ds, Split::Val);
    let report = if val_labels.is_empty() {
        None
    } else {
        Some(evaluate(&scores, &val_labels, None)?)
    };
    Ok(RecipeOutcome {
        members: specs.into_iter().zip(trained).collect(),
        visual,
        audio,
        weights,
        scores,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};

    fn small() -> Dataset {
        let mut cfg = SynthConfig::uniform(3, 6, 3, 2);
        cfg.feature_dim = 5;
        cfg.audio_dim = Some(4);
        cfg.min_len = 2;
        cfg.max_len = 6;
        generate_synthetic(&cfg, 5).unwrap().dataset
    }

    fn quick(mut r: Recipe) -> Recipe {
        r.video_overrides.set("epochs", 3);
        r.video_overrides.set("n", 4);
        r.audio_overrides.set("epochs", 3);
        r.audio_overrides.set("trees", 5);
        r
    }

    #[test]
    fn all_presets_parse_and_round_trip() {
        for name in Recipe::preset_names() {
            let r = Recipe::preset(name).unwrap();
            assert_eq!(r.name, name);
            assert_eq!(Recipe::from_key_values(&r.to_key_values()).unwrap(), r);
        }
        assert!(Recipe::preset("submission8").is_err());
    }

    #[test]
    fn preset_compositions() {
        let count = |r: &Recipe| {
            let specs = r.member_specs(0);
            let v = specs.iter().filter(|s| matches!(s.kind, MemberKind::Video(_))).count();
            (v, specs.len() - v)
        };
        let expect = [(1, 1), (1, 2), (4, 2), (2, 2), (4, 2), (50, 2), (4, 1)];
        for (name, e) in Recipe::preset_names().into_iter().zip(expect) {
            assert_eq!(count(&Recipe::preset(name).unwrap()), e, "{name}");
        }
        let one = Recipe::preset("submission1").unwrap();
        assert_eq!(
            one.fusion,
            FusionMode::Weighted(FusionWeights::new(vec![0.65, 0.35]).unwrap())
        );
        assert_eq!(Recipe::preset("submission7").unwrap().train_on, TrainOn::TrainVal);
    }

    #[test]
    fn parse_errors() {
        assert!(Recipe::parse("visual=avg-pool:0").is_err());
        assert!(Recipe::parse("name=x").is_err());
        assert!(Recipe::parse("visual=pool").is_err());
        assert!(Recipe::parse("visual=avg-pool\nfusion=weighted\nweights=0.5,0.5").is_err());
        assert!(Recipe::parse("visual=avg-pool\nvideo.epochs=x").is_err());
        assert!(Recipe::parse("visual=avg-pool\ncolour=red").is_err());
        let r = Recipe::parse("visual=lstm:2\naudio=rf\nvideo.lstm_hidden=8").unwrap();
        assert_eq!(r.video_config(HeadKind::Lstm).unwrap().lstm_hidden, 8);
        assert_eq!(r.fusion, FusionMode::Mean);
    }

    #[test]
    fn preset_one_emits_valid_scores() {
        let ds = small();
        let out = run_recipe(&quick(Recipe::preset("submission1").unwrap()), &ds, 1, 2, None).unwrap();
        let expected = ds.clips().iter().filter(|c| c.split != Split::Train).count();
        assert_eq!(out.scores.len(), expected);
        for (_, s) in out.scores.iter() {
            assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(out.report.is_some());
    }

    #[test]
    fn preset_three_fuses_four_video_and_two_audio_members() {
        let ds = small();
        let out = run_recipe(&quick(Recipe::preset("submission3").unwrap()), &ds, 7, 3, None).unwrap();
        let video = out
            .members
            .iter()
            .filter(|(_, m)| matches!(m, Member::Video(_)))
            .count();
        assert_eq!((video, out.members.len() - video), (4, 2));
        assert_eq!(
            out.members.iter().map(|(s, _)| s.seed).collect::<Vec<_>>(),
            (7..13).collect::<Vec<_>>()
        );
        assert_eq!(out.weights.len(), 2);
        let (Member::Video(a), Member::Video(b)) = (&out.members[0].1, &out.members[1].1) else {
            panic!("visual members first")
        };
        assert_ne!(a.head, b.head);
    }

    #[test]
    fn results_do_not_depend_on_jobs() {
        let ds = small();
        let r = quick(Recipe::preset("submission2").unwrap());
        let a = run_recipe(&r, &ds, 3, 1, None).unwrap();
        let b = run_recipe(&r, &ds, 3, 4, None).unwrap();
        assert_eq!(a.scores.to_csv_bytes(), b.scores.to_csv_bytes());
    }

    #[test]
    fn clip_without_audio_keeps_visual_scores() {
        let ds = small();
        let mut clips = ds.clone().into_clips();
        let idx = clips.iter().position(|c| c.split == Split::Test).unwrap();
        clips[idx].audio = None;
        let ds = ds.derive(clips).unwrap();
        let out = run_recipe(&quick(Recipe::preset("submission1").unwrap()), &ds, 2, 1, None).unwrap();
        let id = &ds.clips()[idx].id;
        assert_eq!(out.scores.get(id), out.visual.as_ref().unwrap().get(id));
    }
}
