//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Needs MNIST IDX files under `<data>/mnist` and natural PGM images under
//! `<data>/natural`, where `<data>` is `$EVSTDP_DATA_DIR` or the workspace
//! `data/` directory (see `scripts/`).

use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use evstdp::data::{encode_idx_images, parse_idx_images, GrayImage};
use evstdp::encoding::rate_code;
use evstdp::harness::runner::{
    kmeans_baseline, run_d_sweep, run_lambda_sweep, run_training, train, ExperimentData, SizeRow,
    TrainingOutcome,
};
use evstdp::harness::{Dataset, ExperimentConfig};
use evstdp::metrics::{breadth_tuning_of_counts, corr_recon_loss, rms_recon_loss};
use evstdp::network::softmax_in_place;
use evstdp::plasticity::{expected_update, stdp_update};
use evstdp::LearningParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

fn data_root() -> PathBuf {
    std::env::var_os("EVSTDP_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// Training runs shared by several criteria, computed on first use.
struct Runs {
    scratch: PathBuf,
    mnist: Option<ExperimentData>,
    headline: Option<TrainingOutcome>,
    sizes: Option<Vec<SizeRow>>,
}

impl Runs {
    fn mnist_config(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.data_dir = data_root().join("mnist");
        cfg.out_dir = self.scratch.join("headline");
        cfg
    }

    fn mnist(&mut self) -> &ExperimentData {
        if self.mnist.is_none() {
            let cfg = self.mnist_config();
            let data = ExperimentData::load(&cfg).unwrap_or_else(|e| {
                panic!("cannot load MNIST from {}: {e}", cfg.data_dir.display())
            });
            self.mnist = Some(data);
        }
        self.mnist.as_ref().unwrap()
    }

    /// D = 32, lambda = 0, 15,000 iterations.
    fn headline(&mut self) -> &TrainingOutcome {
        if self.headline.is_none() {
            let cfg = self.mnist_config();
            let out = train(&cfg, self.mnist(), |_| {}).expect("headline run");
            self.headline = Some(out);
        }
        self.headline.as_ref().unwrap()
    }

    fn sizes(&mut self) -> &[SizeRow] {
        if self.sizes.is_none() {
            let mut cfg = self.mnist_config();
            cfg.out_dir = self.scratch.join("d-sweep");
            let rows = run_d_sweep(&cfg, self.mnist(), &[8, 16, 32, 128]).expect("D sweep");
            self.sizes = Some(rows);
        }
        self.sizes.as_deref().unwrap()
    }
}

fn c1_headline(runs: &mut Runs) -> Outcome {
    let r = runs.headline().final_eval.report;
    let corr_ok = within(r.corr_loss, 0.15, 0.27);
    let rms_ok = within(r.rms_loss, 0.12, 0.22);
    outcome(
        corr_ok && rms_ok,
        format!(
            "corr loss {:.4} (want [0.15, 0.27]), RMS loss {:.4} (want [0.12, 0.22])",
            r.corr_loss, r.rms_loss
        ),
    )
}

fn c2_size_ordering(runs: &mut Runs) -> Outcome {
    let rows = runs.sizes();
    let corr = |d: usize| rows.iter().find(|r| r.neurons == d).unwrap().corr_loss;
    let (c8, c16, c32, c128) = (corr(8), corr(16), corr(32), corr(128));
    let pass = [c16, c32].iter().all(|&c| c <= c8 && c <= c128);
    outcome(
        pass,
        format!("corr loss D=8 {c8:.4}, D=16 {c16:.4}, D=32 {c32:.4}, D=128 {c128:.4}"),
    )
}

fn c3_sparsity(runs: &mut Runs) -> Outcome {
    let r = runs.headline().final_eval.report;
    let sparse_ok = within(r.sparsity, 0.04, 0.15);
    let bt_ok = r.breadth_tuning < 0.5 && (r.breadth_tuning - 0.23).abs() <= 0.1;
    outcome(
        sparse_ok && bt_ok,
        format!(
            "sparsity {:.4} (want [0.04, 0.15]), breadth tuning {:.4} (want < 0.5 and 0.23 +/- 0.1)",
            r.sparsity, r.breadth_tuning
        ),
    )
}

fn c4_equilibrium_bounds(runs: &mut Runs) -> Outcome {
    let mut cfg = runs.mnist_config();
    cfg.out_dir = runs.scratch.join("lambda-sweep");
    let rows = run_lambda_sweep(&cfg, runs.mnist(), &[0.0, 1.0, 10.0, 1e4]).expect("lambda sweep");
    let mut pass = true;
    let mut detail = String::new();
    for r in &rows {
        let ok = if r.lambda < 1e3 {
            (r.w_max - 1.0 / (1.0 + r.lambda)).abs() <= 0.1 && r.w_min < 0.02
        } else {
            r.w_max < 0.01
        };
        pass &= ok;
        let _ = write!(
            detail,
            "lambda={}: w_max {:.4} w_min {:.4}{}; ",
            r.lambda,
            r.w_max,
            r.w_min,
            if ok { "" } else { " (out of bounds)" }
        );
    }
    outcome(pass, detail.trim_end_matches("; ").to_string())
}

fn c5_unbiased_update() -> Outcome {
    let params = LearningParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 1_000_000u32;
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..100 {
        let x: f64 = rng.gen();
        let w: f64 = rng.gen();
        let lambda: f64 = rng.gen_range(0.0..2.0);
        let p = LearningParams { lambda, ..params };
        let mut sum = 0.0;
        for _ in 0..draws {
            let s = rng.gen_bool(x);
            sum += stdp_update(w, s, &p) - w;
        }
        let mean = sum / draws as f64;
        // Each draw is a * (s - w (1 + lambda)) with s ~ Bernoulli(x).
        let se = p.a * (x * (1.0 - x)).sqrt() / (draws as f64).sqrt();
        let z = (mean - expected_update(x, w, &p)).abs() / se.max(f64::MIN_POSITIVE);
        worst = worst.max(z);
        if z > 3.0 {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("100 triples x 1e6 draws: {failures} beyond 3 SE, worst {worst:.2} SE"),
    )
}

fn c6_single_synapse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut pass = true;
    let mut detail = String::new();
    for lambda in [0.0, 1.0] {
        for x in [0.1, 0.5, 0.9] {
            let p = LearningParams {
                lambda,
                ..LearningParams::default()
            };
            let mut w: f64 = rng.gen();
            for _ in 0..100_000 {
                w = stdp_update(w, rng.gen_bool(x), &p);
            }
            let target = x / (1.0 + lambda);
            let ok = (w - target).abs() <= 0.02;
            pass &= ok;
            let _ = write!(detail, "x={x} lambda={lambda}: {w:.4} vs {target:.4}; ");
        }
    }
    outcome(pass, detail.trim_end_matches("; ").to_string())
}

fn c7_threshold_regulation(runs: &mut Runs) -> Outcome {
    let h = runs.headline();
    let m = h.recent_active_mean();
    outcome(
        within(m, 0.8, 1.5) && h.recent_active.len() == 1000,
        format!(
            "mean m_z over the last {} presentations {m:.4} (want [0.8, 1.5])",
            h.recent_active.len()
        ),
    )
}

fn c8_kmeans(runs: &mut Runs) -> Outcome {
    let cfg = runs.mnist_config();
    let km = |runs: &mut Runs, d: usize| {
        let mut c = cfg.clone();
        c.neurons = d;
        kmeans_baseline(&c, runs.mnist())
            .expect("k-means")
            .1
            .corr_loss
    };
    let (k16, k32, k64) = (km(runs, 16), km(runs, 32), km(runs, 64));
    let s16 = runs
        .sizes()
        .iter()
        .find(|r| r.neurons == 16)
        .unwrap()
        .corr_loss;
    let s32 = runs.headline().final_eval.report.corr_loss;
    let band16 = (k16 - 0.22).abs() <= 0.05;
    let band64 = (k64 - 0.26).abs() <= 0.05;
    let beat16 = s16 <= k16 + 0.02;
    let beat32 = s32 <= k32 + 0.02;
    outcome(
        band16 && band64 && beat16 && beat32,
        format!(
            "k-means corr D=16 {k16:.4} (want 0.22 +/- 0.05), D=64 {k64:.4} (want 0.26 +/- 0.05); \
             STDP vs k-means + 0.02: D=16 {s16:.4} vs {:.4}, D=32 {s32:.4} vs {:.4}",
            k16 + 0.02,
            k32 + 0.02
        ),
    )
}

fn c9_unit_suites() -> Outcome {
    let mut failed = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let u: Vec<f64> = (0..32).map(|_| rng.gen_range(-20.0..20.0)).collect();
    let mut s = u.clone();
    softmax_in_place(&mut s);
    let mut shifted: Vec<f64> = u.iter().map(|v| v + 7.5).collect();
    softmax_in_place(&mut shifted);
    if (s.iter().sum::<f64>() - 1.0).abs() > 1e-12
        || s.iter().zip(&shifted).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        failed.push("softmax");
    }

    let counts_ok = (0..1000).all(|_| {
        let x: f64 = rng.gen();
        let phase: f64 = rng.gen();
        let n = rate_code(x, phase, 40).len() as f64;
        n == (x * 40.0).floor() || n == (x * 40.0).ceil()
    });
    if !counts_ok {
        failed.push("encoder count");
    }

    let y: Vec<f64> = (0..25).map(|_| rng.gen()).collect();
    let z: Vec<f64> = (0..25).map(|_| rng.gen()).collect();
    let affine: Vec<f64> = z.iter().map(|v| 0.5 * v + 0.1).collect();
    let a = corr_recon_loss(std::slice::from_ref(&y), &[z])
        .unwrap()
        .value;
    let b = corr_recon_loss(std::slice::from_ref(&y), &[affine])
        .unwrap()
        .value;
    let same = corr_recon_loss(
        std::slice::from_ref(&y),
        &[y.iter().map(|v| 0.5 * v + 0.1).collect::<Vec<_>>()],
    )
    .unwrap()
    .value;
    if (a - b).abs() > 1e-12 || same.abs() > 1e-12 {
        failed.push("pearson affine invariance");
    }

    if breadth_tuning_of_counts(&[4, 0, 0, 0]).is_none_or(|bt| (bt - 0.25).abs() > 1e-12) {
        failed.push("breadth tuning example");
    }
    if (rms_recon_loss(&[vec![1.0, 0.0]], &[vec![0.5, 0.5]]).unwrap() - 0.5).abs() > 1e-12 {
        failed.push("RMS example");
    }

    let images: Vec<Vec<u8>> = (0..3)
        .map(|_| (0..784).map(|_| rng.gen()).collect())
        .collect();
    let bytes = encode_idx_images(28, 28, &images).unwrap();
    let store = parse_idx_images(&bytes, None, Path::new("<memory>")).unwrap();
    let back: Vec<Vec<u8>> = store.images.iter().map(GrayImage::to_bytes).collect();
    if encode_idx_images(28, 28, &back).unwrap() != bytes {
        failed.push("IDX round trip");
    }

    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            "softmax, encoder counts, Pearson invariance, breadth tuning, RMS, IDX round trip"
                .into()
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

fn c10_natural(runs: &mut Runs) -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = Dataset::Natural;
    cfg.data_dir = data_root().join("natural");
    cfg.iters = 3000;
    cfg.eval_every = 300;
    cfg.out_dir = runs.scratch.join("natural");
    let data = ExperimentData::load(&cfg).unwrap_or_else(|e| {
        panic!(
            "cannot load natural images from {}: {e}",
            cfg.data_dir.display()
        )
    });
    let out = train(&cfg, &data, |_| {}).expect("natural run");
    let rows = &out.record.rows;
    let finite = rows.iter().all(|r| {
        [r.corr_loss, r.rms_loss, r.theta, r.w_max, r.w_min]
            .iter()
            .all(|v| v.is_finite())
            && r.w_min >= 0.0
            && r.w_max <= 1.0
    });
    let corr: Vec<f64> = rows.iter().map(|r| r.corr_loss).collect();
    let last = *corr.last().unwrap();
    let slope = trend_slope(&corr);
    let pass = finite && last < 0.6 && slope < 0.0 && last < corr[0];
    outcome(
        pass,
        format!(
            "finite {finite}; corr loss {:.4} -> {last:.4} (want < 0.6), trend slope {slope:.2e} per evaluation",
            corr[0]
        ),
    )
}

/// Least-squares slope of `v` against its index.
fn trend_slope(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = v.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in v.iter().enumerate() {
        sxy += (i as f64 - mx) * (y - my);
        sxx += (i as f64 - mx).powi(2);
    }
    sxy / sxx
}

fn c11_determinism(runs: &mut Runs) -> Outcome {
    let mut cfg = runs.mnist_config();
    cfg.iters = 1500;
    cfg.eval_every = 500;
    cfg.eval_images = 200;
    let mut read = |dir: &str| {
        cfg.out_dir = runs.scratch.join(dir);
        run_training(&cfg, |_| {}).expect("determinism run");
        (
            fs::read(cfg.out_dir.join("weights.txt")).unwrap(),
            fs::read(cfg.out_dir.join("record.csv")).unwrap(),
        )
    };
    let a = read("det-a");
    let b = read("det-b");
    outcome(
        a == b,
        format!(
            "weights.txt {} and record.csv {}",
            if a.0 == b.0 { "identical" } else { "differ" },
            if a.1 == b.1 { "identical" } else { "differ" }
        ),
    )
}

fn main() {
    let scratch = std::env::temp_dir().join(format!("evstdp-acceptance-{}", std::process::id()));
    let mut runs = Runs {
        scratch: scratch.clone(),
        mnist: None,
        headline: None,
        sizes: None,
    };
    type Check = fn(&mut Runs) -> Outcome;
    let criteria: [(&str, Check); 11] = [
        ("MNIST headline reconstruction", c1_headline),
        ("D-sweep ordering", c2_size_ordering),
        ("sparsity", c3_sparsity),
        ("equilibrium weight bounds", c4_equilibrium_bounds),
        ("unbiased weight update", |_| c5_unbiased_update()),
        ("single-synapse equilibrium", |_| c6_single_synapse()),
        ("threshold regulation", c7_threshold_regulation),
        ("k-means baseline", c8_kmeans),
        ("metric and encoder units", |_| c9_unit_suites()),
        ("natural-image run", c10_natural),
        ("determinism", c11_determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("EVSTDP_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|n| n.trim().parse().ok()).collect());

    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let n = k + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&mut runs))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("error: {msg}"))
        });
        println!(
            "criterion {n:>2} {name}: {} - {} [{:.0?}]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed()
        );
        if !result.pass {
            failed.push(n);
        }
    }
    let _ = fs::remove_dir_all(&scratch);
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
