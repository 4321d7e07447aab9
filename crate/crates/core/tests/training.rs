//! End-to-end training on a synthetic corpus of bar images.

use evstdp::data::{sample_image_patches, GrayImage, ImageStore};
use evstdp::harness::runner::{train, ExperimentData};
use evstdp::harness::ExperimentConfig;
use evstdp::plasticity::objective_value;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIDE: usize = 12;

/// Black images with one bright horizontal or vertical bar each.
fn bars(count: usize, seed: u64) -> ImageStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..count)
        .map(|_| {
            let mut px = vec![0.0; SIDE * SIDE];
            let at = rng.gen_range(0..SIDE);
            let horizontal = rng.gen_bool(0.5);
            for k in 0..SIDE {
                let (r, c) = if horizontal { (at, k) } else { (k, at) };
                px[r * SIDE + c] = 1.0;
            }
            GrayImage::new(SIDE, SIDE, px).unwrap()
        })
        .collect();
    ImageStore::new(images)
}

fn config(iters: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.neurons = 8;
    cfg.patch = Some(4);
    cfg.iters = iters;
    cfg.eval_every = 100;
    cfg.per_image_patches = 10;
    cfg.seed = 11;
    cfg
}

fn data() -> ExperimentData {
    ExperimentData {
        train: bars(400, 1),
        test: bars(20, 2),
    }
}

#[test]
fn same_seed_same_run() {
    let data = data();
    let a = train(&config(150), &data, |_| {}).unwrap();
    let b = train(&config(150), &data, |_| {}).unwrap();
    assert_eq!(a.net.to_snapshot_string(), b.net.to_snapshot_string());
    assert_eq!(a.record.to_csv(), b.record.to_csv());
    let mut other = config(150);
    other.seed = 12;
    let c = train(&other, &data, |_| {}).unwrap();
    assert_ne!(a.net.weights(), c.net.weights());
}

#[test]
fn record_has_one_row_per_evaluation() {
    let mut rows = Vec::new();
    let out = train(&config(250), &data(), |r| rows.push(r.iteration)).unwrap();
    assert_eq!(rows, vec![0, 100, 200, 250]);
    assert_eq!(out.record.rows.len(), 4);
    assert!(out.presentations > 0);
    assert!(out.recent_active.len() <= 1000);
}

#[test]
fn learning_lowers_reconstruction_loss() {
    let out = train(&config(400), &data(), |_| {}).unwrap();
    let first = out.record.rows.first().unwrap();
    let last = out.record.last().unwrap();
    assert!(
        last.corr_loss < first.corr_loss,
        "corr loss {} -> {}",
        first.corr_loss,
        last.corr_loss
    );
    assert!(last.w_min >= 0.0 && last.w_max <= 1.0);
}

#[test]
fn objective_trends_down_with_zero_lambda() {
    let data = data();
    let held_out: Vec<_> = data
        .test
        .iter()
        .flat_map(|(id, img)| {
            sample_image_patches(img, id, 4, 10, 0.5, &mut ChaCha8Rng::seed_from_u64(5))
        })
        .collect();
    // Training is a pure function of (config, data), so shorter runs are
    // exact prefixes of longer ones.
    let values: Vec<f64> = [0, 50, 100, 200, 400]
        .iter()
        .map(|&iters| {
            let out = train(&config(iters), &data, |_| {}).unwrap();
            objective_value(&held_out, &out.net, 0.0).unwrap()
        })
        .collect();
    assert!(values.last() < values.first(), "{values:?}");
    let rises = values.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 1, "{values:?}");
}
