use smallclip::config::{HeadKind, TrainConfig};
use smallclip::data::{generate_synthetic, Dataset, Split, SynthConfig};
use smallclip::eval::{cross_validate, evaluate, repeated_runs, split_labels};
use smallclip::fusion::{ensemble_table, run_recipe, train_video_ensemble, Member, MemberKind, Recipe};
use smallclip::video::train_video_model;

fn mid_noise(seed: u64) -> Dataset {
    let mut cfg = SynthConfig::uniform(7, 20, 10, 0).with_centroid_seed(100);
    cfg.clip_noise = 1.0;
    cfg.noise = 0.5;
    cfg.audio_noise = 3.0;
    generate_synthetic(&cfg, seed).unwrap().dataset
}

fn val_accuracy(ds: &Dataset, models: &[smallclip::video::VideoModel]) -> f64 {
    let table = ensemble_table(models, ds.split(Split::Val), 1).unwrap();
    evaluate(&table, &split_labels(ds, Split::Val), None).unwrap().accuracy
}

#[test]
fn ensemble_is_not_worse_than_its_first_member() {
    let cfg = TrainConfig::with_head(HeadKind::AvgPool);
    for trial in 0..5 {
        let ds = mid_noise(trial + 1);
        let members = train_video_ensemble(&ds, &cfg, 100 * trial, 4, 4).unwrap();
        let single = val_accuracy(&ds, &members[..1]);
        let ensemble = val_accuracy(&ds, &members);
        assert!(
            ensemble >= single - 0.02,
            "trial {trial}: ensemble {ensemble} vs single {single}"
        );
    }
}

#[test]
fn cross_validation_separates_easy_data() {
    let ds = generate_synthetic(&SynthConfig::default(), 9).unwrap().dataset;
    let cfg = TrainConfig::with_head(HeadKind::AvgPool);
    let cv = cross_validate(&ds, 5, 3, 4, |fold, seed| {
        let (m, _) = train_video_model(fold, &cfg, seed)?;
        ensemble_table(&[m], fold.split(Split::Val), 1)
    })
    .unwrap();
    assert_eq!(cv.assignment.len(), 210);
    assert_eq!(cv.per_fold.accuracies.len(), 5);
    assert!(cv.pooled.accuracy >= 0.9, "pooled {}", cv.pooled.accuracy);
}

#[test]
fn single_model_spread_is_small_but_nonzero() {
    let ds = mid_noise(1);
    let cfg = TrainConfig::with_head(HeadKind::AvgPool);
    let seeds: Vec<u64> = (0..10).map(|j| 1000 + 10 * j).collect();
    let stats = repeated_runs(&seeds, 4, |seed| {
        let (m, _) = train_video_model(&ds, &cfg, seed)?;
        Ok(val_accuracy(&ds, &[m]))
    })
    .unwrap();
    assert!(stats.std > 0.0 && stats.std < 0.05, "std {}", stats.std);
    assert!(stats.mean > 0.8, "mean {}", stats.mean);
}

#[test]
fn recipe_members_of_one_kind_differ() {
    let mut synth = SynthConfig::uniform(3, 6, 3, 2);
    synth.feature_dim = 6;
    synth.min_len = 2;
    synth.max_len = 12;
    let ds = generate_synthetic(&synth, 4).unwrap().dataset;
    let mut recipe = Recipe::preset("submission4").unwrap();
    recipe.video_overrides.set("epochs", 3);
    recipe.audio_overrides.set("epochs", 3);
    let out = run_recipe(&recipe, &ds, 20, 2, None).unwrap();
    assert_eq!(out.members.len(), 4);
    for pair in out.members.windows(2) {
        let ((a, ma), (b, mb)) = (&pair[0], &pair[1]);
        assert_eq!(b.seed, a.seed + 1);
        if a.kind == b.kind {
            assert_ne!(ma, mb, "{a} and {b} trained identically");
        }
    }
    assert!(matches!(
        out.members[0].0.kind,
        MemberKind::Video(HeadKind::WeightedAvgPool)
    ));
    assert!(matches!(out.members[3].1, Member::Audio(_)));
    let test_ids = ds.split(Split::Test).count() + ds.split(Split::Val).count();
    assert_eq!(out.scores.len(), test_ids);
}
