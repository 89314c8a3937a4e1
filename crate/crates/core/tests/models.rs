use coevo_core::eval::{evaluate_classifier, evaluate_detector, EvalSettings};
use coevo_core::models::{checkpoint, Arch, InitConfig, ModelHandle, ReportArch, VisionArch};
use coevo_core::pipeline::{train_initial_teachers, PipelineConfig};
use coevo_core::synthdata::{generate, DatasetConfig, PairedSample, Split};
use coevo_core::Error;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn vision_arch() -> Arch {
    Arch::Vision(VisionArch {
        height: 16,
        width: 16,
        channels: 4,
        num_classes: 8,
        anchor_size: 4.0,
        reach: 5,
        run_threshold: 0.5,
    })
}

#[test]
fn reinit_draws_unrelated_weights() {
    let init = InitConfig::default();
    let a = ModelHandle::init(vision_arch(), 1, &init);
    let b = a.reinit(2, &init);
    let weights = |m: &ModelHandle| -> Vec<f64> {
        m.params()
            .iter()
            .enumerate()
            .filter(|(i, _)| !m.arch.is_bias(*i))
            .map(|(_, &p)| p)
            .collect()
    };
    assert!(cosine(&weights(&a), &weights(&b)).abs() < 0.1);
    assert!(b.velocity().iter().all(|&v| v == 0.0));
    assert_eq!(a.reinit(1, &init).params(), a.params());
}

#[test]
fn frozen_models_reject_updates() {
    let m = ModelHandle::init(vision_arch(), 1, &InitConfig::default()).freeze();
    let before = m.param_hash();
    let mut m2 = m.clone();
    let grad = vec![1.0; m2.params().len()];
    assert!(matches!(m2.train_step(&grad, 0.1, 0.9), Err(Error::Frozen)));
    assert_eq!(m2.param_hash(), before);
}

fn easy_data() -> coevo_core::synthdata::Dataset {
    let cfg = DatasetConfig {
        num_samples: 300,
        holdout_samples: 100,
        labeled_fraction: 1.0,
        noise_sigma: 0.2,
        keyword_dropout: 0.0,
        distractor_rate: 0.0,
        ..DatasetConfig::default()
    };
    generate(&cfg, 5).unwrap()
}

#[test]
fn supervised_training_learns_planted_signal() {
    let data = easy_data();
    let cfg = PipelineConfig {
        teacher_iters: 600,
        ..PipelineConfig::default()
    };
    let (vision, report, _) = train_initial_teachers(&data, &cfg, 3).unwrap();
    let holdout: Vec<&PairedSample> = data.split(Split::Holdout).collect();
    let k = data.num_classes();
    let det = evaluate_detector(&vision, &holdout, k, &EvalSettings::default()).unwrap();
    let map50 = det.iter().find(|t| t.threshold == 0.5).unwrap().map;
    assert!(map50 > 0.8, "mAP@0.5 {map50}");
    let train: Vec<&PairedSample> = data.split(Split::Train).collect();
    let (auc, _) = evaluate_classifier(&report, &train, k).unwrap();
    assert!(auc.unwrap() >= 0.95, "train AUC {auc:?}");
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let data = easy_data();
    let cfg = PipelineConfig {
        teacher_iters: 30,
        ..PipelineConfig::default()
    };
    let (vision, report, _) = train_initial_teachers(&data, &cfg, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for m in [&vision, &report] {
        let p = dir.path().join(format!("{}.ckpt", m.role().name()));
        checkpoint::save(m, &p).unwrap();
        let back = checkpoint::load(&p).unwrap();
        assert_eq!(back.param_hash(), m.param_hash());
        assert_eq!(back.arch, m.arch);
        assert!(back.is_frozen());
    }
    let s = &data.samples[0];
    let p = dir.path().join("vision.ckpt");
    let back = checkpoint::load(&p).unwrap();
    let a = coevo_core::models::vision_predict(&vision, &s.image, 0.05, Some(0.5)).unwrap();
    let b = coevo_core::models::vision_predict(&back, &s.image, 0.05, Some(0.5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn wrong_role_and_shape_are_errors() {
    let report = ModelHandle::init(
        Arch::Report(ReportArch {
            vocab_size: 10,
            num_classes: 8,
        }),
        1,
        &InitConfig::default(),
    );
    let data = easy_data();
    let s = &data.samples[0];
    assert!(matches!(
        coevo_core::models::vision_predict(&report, &s.image, 0.5, None),
        Err(Error::RoleMismatch { .. })
    ));
    assert!(coevo_core::models::report_predict(&report, &s.report).is_err());
}
