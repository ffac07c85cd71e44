use skelmap::nn::{read_checkpoint, write_checkpoint};
use skelmap::toy::{generate_toy, LabeledSequence, ToyConfig};
use skelmap::train::{evaluate, metrics_csv, train, Classifier, TrainConfig};

fn toy_data() -> Vec<LabeledSequence> {
    generate_toy(&ToyConfig::with_seed(3))
}

fn short_config() -> TrainConfig {
    TrainConfig { seed: 3, epochs: 10, early_stop_patience: 100, record_wall_clock: false, ..TrainConfig::toy() }
}

#[test]
fn loss_falls_and_reports_agree_with_evaluation() {
    let data = toy_data();
    let outcome = train(&data, &short_config()).unwrap();
    assert_eq!(outcome.reports.len(), 10);
    let (first, last) = (&outcome.reports[0], &outcome.reports[9]);
    assert!(last.train_loss < first.train_loss, "loss {} -> {}", first.train_loss, last.train_loss);

    let pick = |idx: &[usize]| -> Vec<LabeledSequence> { idx.iter().map(|&i| data[i].clone()).collect() };
    let mut model = outcome.model;
    let train_eval = evaluate(&mut model, &pick(&outcome.train_indices)).unwrap();
    assert!((train_eval.accuracy - last.train_acc).abs() < 1e-9);
    let val_eval = evaluate(&mut model, &pick(&outcome.val_indices)).unwrap();
    assert!((val_eval.accuracy - last.val_acc).abs() < 1e-9);
    assert!(outcome.reports.iter().all(|r| r.seconds == 0.0));
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let data = toy_data();
    let cfg = TrainConfig { epochs: 2, ..short_config() };
    let outcome = train(&data, &cfg).unwrap();
    let mut model = outcome.best_model().unwrap();
    let mut bytes = Vec::new();
    model.save(&mut bytes).unwrap();
    let mut loaded = Classifier::load(bytes.as_slice()).unwrap();
    let a = evaluate(&mut model, &data).unwrap();
    let b = evaluate(&mut loaded, &data).unwrap();
    assert_eq!(a, b);

    let ck = read_checkpoint(bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    let tensors: Vec<(&str, &_)> = ck.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
    write_checkpoint(&mut again, &ck.config, &tensors).unwrap();
    assert_eq!(bytes, again);
}

#[test]
fn seed_changes_the_run() {
    let data = toy_data();
    let cfg = TrainConfig { epochs: 1, ..short_config() };
    let a = metrics_csv(&train(&data, &cfg).unwrap().reports);
    let b = metrics_csv(&train(&data, &TrainConfig { seed: 4, ..cfg.clone() }).unwrap().reports);
    assert_ne!(a, b);
}
