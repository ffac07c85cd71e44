//! Trains the toy preset on the synthetic dataset under the cross-view
//! protocol and reports held-out accuracy.
//!
//! `cargo run --release -p skelmap --example toy_benchmark -- [seed] [key=value ...]`

use std::time::Instant;

use skelmap::skeleton::{split_dataset, Protocol, SplitConfig};
use skelmap::toy::{generate_toy, LabeledSequence, ToyConfig};
use skelmap::train::{evaluate, train_with, TrainConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = TrainConfig { seed, ..TrainConfig::toy() };
    for kv in args {
        let (k, v) = kv.split_once('=').expect("key=value");
        cfg.set(k, v).expect("valid setting");
    }
    let data = generate_toy(&ToyConfig::with_seed(seed));
    let metas: Vec<_> = data.iter().map(|s| s.sequence.meta.expect("toy meta")).collect();
    let (train_idx, test_idx) = split_dataset(&metas, Protocol::CrossView, &SplitConfig::default()).expect("split");
    let pick = |idx: &[usize]| -> Vec<LabeledSequence> { idx.iter().map(|&i| data[i].clone()).collect() };
    let (train_set, test_set) = (pick(&train_idx), pick(&test_idx));
    let start = Instant::now();
    let outcome = train_with(&train_set, &cfg, |r| {
        println!("epoch {:>2} loss {:.4} train {:.3} val {:.3} lr {:.5} ({:.1}s)", r.epoch, r.train_loss, r.train_acc, r.val_acc, r.lr, r.seconds)
    })
    .expect("training");
    let mut best = outcome.best_model().expect("best model");
    let test = evaluate(&mut best, &test_set).expect("evaluate");
    println!("best epoch {} held-out {:.3} total {:.1}s", outcome.best_epoch, test.accuracy, start.elapsed().as_secs_f64());
}
