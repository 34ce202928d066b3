use hashkit::data::generate_blobs;
use hashkit::pipeline::{train, train_hash, train_triplet, EvalSettings};
use hashkit::{BlobSpec, Dataset, Error, TrainConfig, TrainMode};

fn data() -> Dataset {
    generate_blobs(&BlobSpec {
        classes: 4,
        dim: 12,
        samples_per_class: 40,
        center_scale: 1.5,
        noise_sigma: 1.0,
        seed: 8,
    })
    .unwrap()
}

fn config(mode: TrainMode) -> TrainConfig {
    let mut cfg = TrainConfig::new(mode);
    cfg.epochs = 6;
    cfg.classes_per_batch = 4;
    cfg.samples_per_class = 6;
    cfg.layer_dims = Some(vec![12, 24, 8]);
    cfg.schedule.lambda.activate_epoch = 3;
    cfg
}

#[test]
fn hash_runs_are_reproducible() {
    let ds = data();
    let cfg = config(TrainMode::Hash);
    let (a, ha) = train_hash(&cfg, &ds).unwrap();
    let (b, hb) = train_hash(&cfg, &ds).unwrap();
    assert_eq!(ha, hb);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(ha.epochs.len(), 6);
    assert!(!a.normalize);
}

#[test]
fn different_mining_seed_changes_the_run() {
    let ds = data();
    let cfg = config(TrainMode::Triplet);
    let mut other = cfg.clone();
    other.seeds.mining += 1;
    let (_, a) = train_triplet(&cfg, &ds).unwrap();
    let (_, b) = train_triplet(&other, &ds).unwrap();
    assert_ne!(a, b);
}

#[test]
fn periodic_evaluation_fills_snapshots() {
    let ds = data();
    let mut cfg = config(TrainMode::Hash);
    cfg.eval = EvalSettings {
        holdout_fraction: 0.25,
        every_epochs: Some(2),
        k: 3,
    };
    let mut seen = Vec::new();
    let (_, hist) = train(&cfg, &ds, &mut |r| seen.push(r.epoch)).unwrap();
    assert_eq!(seen, (0..6).collect::<Vec<_>>());
    for r in &hist.epochs {
        let due = (r.epoch + 1) % 2 == 0;
        assert_eq!(r.metrics.is_some(), due, "epoch {}", r.epoch);
        if let Some(m) = &r.metrics {
            for v in [Some(m.knn_accuracy), Some(m.map), m.hamming_knn_accuracy, m.hamming_map] {
                let v = v.expect("hash runs score both spaces");
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}

#[test]
fn exploding_updates_are_reported_with_position() {
    let ds = data();
    let mut cfg = config(TrainMode::Hash);
    cfg.optimizer.lr = 1e200;
    cfg.schedule.lambda.activate_epoch = 0;
    match train(&cfg, &ds, &mut |_| {}) {
        Err(Error::Divergence { epoch, batch, detail }) => {
            assert_eq!(epoch, 0);
            assert!(batch < 100);
            assert!(!detail.is_empty());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn config_json_round_trips() {
    let cfg = config(TrainMode::Hash);
    let back = TrainConfig::from_json(&cfg.to_json().unwrap()).unwrap();
    assert_eq!(back, cfg);
    let err = TrainConfig::from_json(r#"{"selector": "hardest"}"#).unwrap_err();
    assert!(err.to_string().contains("mode"), "{err}");
}
