use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::config::{Dataset, ExperimentConfig};
use super::export::export_filters;
use super::record::{RecordRow, RunRecord};
use super::seeds;
use crate::baseline::{kmeans_reconstruct, kmeans_train, Codebook};
use crate::data::{idx_header, load_pgm, parse_idx_images_at, sample_image_patches, ImageStore};
use crate::encoding::{encode_patch, StimulusPatch};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::network::RepresentationNetwork;
use crate::plasticity::threshold_update;
use crate::reconstruction::{reconstruct_patch, window_origins, ReconstructedPatch, TileResult};

pub const MNIST_TRAIN_FILE: &str = "train-images-idx3-ubyte";
pub const MNIST_TEST_FILE: &str = "t10k-images-idx3-ubyte";

/// How many trailing training presentations keep their `m_z`.
pub const ACTIVITY_WINDOW: usize = 1000;

/// Train and test images of one experiment, disjoint by image id.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub train: ImageStore,
    pub test: ImageStore,
}

impl ExperimentData {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        match cfg.dataset {
            Dataset::Mnist => load_mnist(cfg),
            Dataset::Natural => load_natural(cfg),
        }
    }

    /// Training image used by 1-based iteration `it`.
    pub fn train_image(&self, it: usize) -> (usize, &crate::data::GrayImage) {
        let k = (it - 1) % self.train.len();
        (self.train.ids[k], &self.train.images[k])
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn load_mnist(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    let mut rng = seeds::substream(cfg.split_seed(), seeds::SPLIT);
    let pick = |path: &Path, n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Result<ImageStore> {
        let bytes = read(path)?;
        let (count, _, _) = idx_header(&bytes, path)?;
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(rng);
        order.truncate(n.min(count));
        parse_idx_images_at(&bytes, &order, path)
    };
    let train = pick(&cfg.data_dir.join(MNIST_TRAIN_FILE), cfg.iters, &mut rng)?;
    let test = pick(
        &cfg.data_dir.join(MNIST_TEST_FILE),
        cfg.eval_images,
        &mut rng,
    )?;
    Ok(ExperimentData { train, test })
}

fn load_natural(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    let dir = &cfg.data_dir;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    if paths.len() <= cfg.natural_test_images {
        return Err(Error::input(format!(
            "{} holds {} PGM images; need more than {} to hold out for testing",
            dir.display(),
            paths.len(),
            cfg.natural_test_images
        )));
    }
    let store = ImageStore::new(paths.iter().map(|p| load_pgm(p)).collect::<Result<_>>()?);
    let mut order: Vec<usize> = (0..store.len()).collect();
    order.shuffle(&mut seeds::substream(cfg.split_seed(), seeds::SPLIT));
    let (train, test) = order.split_at(order.len() - cfg.natural_test_images);
    let test = &test[..test.len().min(cfg.eval_images)];
    Ok(ExperimentData {
        train: store.select(train),
        test: store.select(test),
    })
}

/// Metrics of a frozen snapshot on the test tiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub m_z_mean: f64,
}

/// The `p x p` tiles of the test images at `stride` whose intensity sum is at
/// least `min_mass`, image by image.
pub fn test_tiles(
    test: &ImageStore,
    side: usize,
    stride: usize,
    min_mass: f64,
) -> Vec<Vec<StimulusPatch>> {
    test.iter()
        .map(|(id, img)| {
            window_origins(img.width(), img.height(), side, stride)
                .into_iter()
                .map(|(r, c)| img.patch(id, r, c, side))
                .filter(|p| p.mass() >= min_mass)
                .collect()
        })
        .collect()
}

fn config_tiles(cfg: &ExperimentConfig, test: &ImageStore) -> Vec<Vec<StimulusPatch>> {
    test_tiles(test, cfg.patch_side(), cfg.stride(), cfg.eval_min_mass)
}

/// Encodes, presents and decodes every test tile. Each tile draws its
/// encoding phases from its own substream, so the result does not depend on
/// scheduling.
pub fn run_tiles(
    net: &RepresentationNetwork,
    tiles: &[Vec<StimulusPatch>],
    seed: u64,
) -> Result<Vec<TileResult>> {
    let per_image: Vec<Result<Vec<TileResult>>> = tiles
        .par_iter()
        .enumerate()
        .map(|(k, patches)| {
            patches
                .iter()
                .enumerate()
                .map(|(t, patch)| {
                    let mut rng = seeds::indexed_substream(
                        seed,
                        seeds::EVAL_ENCODING,
                        ((k as u64) << 32) | t as u64,
                    );
                    reconstruct_patch(net, patch, &mut rng)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per_image {
        out.extend(r?);
    }
    Ok(out)
}

pub fn summarize(net: &RepresentationNetwork, results: &[TileResult]) -> Result<Evaluation> {
    let originals: Vec<&StimulusPatch> = results.iter().map(|r| &r.original).collect();
    let recons: Vec<&ReconstructedPatch> = results.iter().map(|r| &r.reconstruction).collect();
    let responses: Vec<_> = results.iter().map(|r| r.response.clone()).collect();
    let report = metrics::evaluate(
        &originals,
        &recons,
        &responses,
        net.neurons(),
        net.encoder().duration,
    )?;
    let driven: Vec<usize> = results
        .iter()
        .filter(|r| r.original.mass() > 0.0)
        .map(|r| r.response.active)
        .collect();
    let m_z_mean = if driven.is_empty() {
        0.0
    } else {
        driven.iter().sum::<usize>() as f64 / driven.len() as f64
    };
    Ok(Evaluation { report, m_z_mean })
}

pub fn evaluate(
    net: &RepresentationNetwork,
    tiles: &[Vec<StimulusPatch>],
    seed: u64,
) -> Result<Evaluation> {
    summarize(net, &run_tiles(net, tiles, seed)?)
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub net: RepresentationNetwork,
    pub record: RunRecord,
    /// `m_z` of the last (up to) `ACTIVITY_WINDOW` training presentations.
    pub recent_active: Vec<usize>,
    pub presentations: usize,
    pub final_eval: Evaluation,
}

impl TrainingOutcome {
    pub fn recent_active_mean(&self) -> f64 {
        if self.recent_active.is_empty() {
            return 0.0;
        }
        self.recent_active.iter().sum::<usize>() as f64 / self.recent_active.len() as f64
    }
}

fn record_row(iteration: usize, net: &RepresentationNetwork, ev: &Evaluation) -> RecordRow {
    let w = net.weight_stats();
    RecordRow {
        iteration,
        corr_loss: ev.report.corr_loss,
        rms_loss: ev.report.rms_loss,
        sparsity: ev.report.sparsity,
        breadth_tuning: ev.report.breadth_tuning,
        theta: net.theta(),
        w_max: w.max,
        w_min: w.min,
        w_mean: w.mean,
        m_z_mean: ev.m_z_mean,
    }
}

/// Training patches in presentation order, exactly as training draws them.
pub fn training_patches(cfg: &ExperimentConfig, data: &ExperimentData) -> Vec<StimulusPatch> {
    let mut rng = seeds::substream(cfg.seed, seeds::SAMPLING);
    let side = cfg.patch_side();
    let mut out = Vec::new();
    if data.train.is_empty() {
        return out;
    }
    for it in 1..=cfg.iters {
        let (id, img) = data.train_image(it);
        out.extend(sample_image_patches(
            img,
            id,
            side,
            cfg.per_image_patches,
            cfg.min_mass,
            &mut rng,
        ));
    }
    out
}

/// Trains a fresh network. `on_eval` sees every record row as it is produced.
pub fn train(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    mut on_eval: impl FnMut(&RecordRow),
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let side = cfg.patch_side();
    if cfg.iters > 0 && data.train.is_empty() {
        return Err(Error::input("no training images"));
    }
    let mut net = RepresentationNetwork::new(
        cfg.neurons,
        side * side,
        cfg.theta_init,
        cfg.encoder,
        &mut seeds::substream(cfg.seed, seeds::INIT),
    )?;
    net.set_lambda(cfg.learning.lambda);
    let tiles = config_tiles(cfg, &data.test);
    let mut sample_rng = seeds::substream(cfg.seed, seeds::SAMPLING);
    let mut encode_rng = seeds::substream(cfg.seed, seeds::ENCODING);
    let params = cfg.learning;

    let mut record = RunRecord::default();
    let mut eval = evaluate(&net, &tiles, cfg.seed)?;
    let row = record_row(0, &net, &eval);
    on_eval(&row);
    record.push(row);

    let mut recent = VecDeque::with_capacity(ACTIVITY_WINDOW);
    let mut presentations = 0;
    for it in 1..=cfg.iters {
        let (id, img) = data.train_image(it);
        let patches = sample_image_patches(
            img,
            id,
            side,
            cfg.per_image_patches,
            cfg.min_mass,
            &mut sample_rng,
        );
        for patch in &patches {
            let trains = encode_patch(patch, &cfg.encoder, &mut encode_rng);
            let resp = net.present(&trains, Some(&params))?;
            net.set_theta(threshold_update(net.theta(), resp.active, &params));
            if recent.len() == ACTIVITY_WINDOW {
                recent.pop_front();
            }
            recent.push_back(resp.active);
            presentations += 1;
        }
        if it % cfg.eval_every == 0 || it == cfg.iters {
            eval = evaluate(&net, &tiles, cfg.seed)?;
            let row = record_row(it, &net, &eval);
            on_eval(&row);
            record.push(row);
        }
    }

    Ok(TrainingOutcome {
        net,
        record,
        recent_active: recent.into(),
        presentations,
        final_eval: eval,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `weights.txt`, `record.csv` and `config.txt` into `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, outcome: &TrainingOutcome, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    outcome.net.save(&dir.join("weights.txt"))?;
    outcome.record.save(&dir.join("record.csv"))?;
    let cfg_path = dir.join("config.txt");
    fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))
}

/// Loads data, trains, and writes all outputs (including filter images) to
/// `cfg.out_dir`.
pub fn run_training(
    cfg: &ExperimentConfig,
    on_eval: impl FnMut(&RecordRow),
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let data = ExperimentData::load(cfg)?;
    let outcome = train(cfg, &data, on_eval)?;
    write_outputs(cfg, &outcome, &cfg.out_dir)?;
    export_filters(&outcome.net, &cfg.out_dir.join("filters"))?;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRow {
    pub lambda: f64,
    pub corr_loss: f64,
    pub rms_loss: f64,
    pub w_max: f64,
    pub w_min: f64,
    pub w_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeRow {
    pub neurons: usize,
    pub corr_loss: f64,
    pub rms_loss: f64,
    pub sparsity: f64,
    pub breadth_tuning: f64,
    pub theta: f64,
}

pub fn lambda_table(rows: &[LambdaRow]) -> String {
    let mut out = String::from("lambda,corr_loss,rms_loss,w_max,w_min,w_mean\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.lambda, r.corr_loss, r.rms_loss, r.w_max, r.w_min, r.w_mean
        );
    }
    out
}

pub fn size_table(rows: &[SizeRow]) -> String {
    let mut out = String::from("D,corr_loss,rms_loss,sparsity,breadth_tuning,theta\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.neurons, r.corr_loss, r.rms_loss, r.sparsity, r.breadth_tuning, r.theta
        );
    }
    out
}

/// Runs members in parallel, writes the table of finished members, and
/// reports the first failure after saving.
fn sweep<V, R>(
    values: &[V],
    member: impl Fn(&V) -> Result<R> + Sync,
    table: impl Fn(&[R]) -> String,
    path: &Path,
) -> Result<Vec<R>>
where
    V: Sync,
    R: Send,
{
    if values.is_empty() {
        return Err(Error::param("sweep needs at least one value"));
    }
    let results: Vec<Result<R>> = values.par_iter().map(&member).collect();
    let mut rows = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    fs::write(path, table(&rows)).map_err(|e| Error::io(path, e))?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(rows),
    }
}

fn member_config(cfg: &ExperimentConfig, index: usize) -> ExperimentConfig {
    let mut member = cfg.clone();
    member.seed = seeds::member_seed(cfg.seed, index as u64);
    member.split_seed = Some(cfg.split_seed());
    member
}

/// One full training per regularizer value, each from its own derived seed.
/// Members write to `out_dir/lambda_<value>/`; the table goes to
/// `out_dir/lambda_sweep.csv`.
pub fn run_lambda_sweep(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    lambdas: &[f64],
) -> Result<Vec<LambdaRow>> {
    create_dir(&cfg.out_dir)?;
    sweep(
        &lambdas.iter().copied().enumerate().collect::<Vec<_>>(),
        |&(k, lambda)| {
            let mut member = member_config(cfg, k);
            member.learning.lambda = lambda;
            member.out_dir = cfg.out_dir.join(format!("lambda_{lambda}"));
            let outcome = train(&member, data, |_| {})?;
            write_outputs(&member, &outcome, &member.out_dir)?;
            let w = outcome.net.weight_stats();
            Ok(LambdaRow {
                lambda,
                corr_loss: outcome.final_eval.report.corr_loss,
                rms_loss: outcome.final_eval.report.rms_loss,
                w_max: w.max,
                w_min: w.min,
                w_mean: w.mean,
            })
        },
        lambda_table,
        &cfg.out_dir.join("lambda_sweep.csv"),
    )
}

/// One full training per layer size. Members write to `out_dir/D_<value>/`;
/// the table goes to `out_dir/d_sweep.csv`.
pub fn run_d_sweep(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    sizes: &[usize],
) -> Result<Vec<SizeRow>> {
    create_dir(&cfg.out_dir)?;
    sweep(
        &sizes.iter().copied().enumerate().collect::<Vec<_>>(),
        |&(k, d)| {
            let mut member = member_config(cfg, k);
            member.neurons = d;
            member.out_dir = cfg.out_dir.join(format!("D_{d}"));
            let outcome = train(&member, data, |_| {})?;
            write_outputs(&member, &outcome, &member.out_dir)?;
            let r = outcome.final_eval.report;
            Ok(SizeRow {
                neurons: d,
                corr_loss: r.corr_loss,
                rms_loss: r.rms_loss,
                sparsity: r.sparsity,
                breadth_tuning: r.breadth_tuning,
                theta: outcome.net.theta(),
            })
        },
        size_table,
        &cfg.out_dir.join("d_sweep.csv"),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub method: String,
    pub neurons: usize,
    pub corr_loss: f64,
    pub rms_loss: f64,
}

pub fn baseline_table(rows: &[BaselineRow]) -> String {
    let mut out = String::from("method,D,corr_loss,rms_loss\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.method, r.neurons, r.corr_loss, r.rms_loss
        );
    }
    out
}

/// K-means on the training patches the spiking run would see, scored on the
/// same test tiles.
pub fn kmeans_baseline(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
) -> Result<(Codebook, BaselineRow)> {
    cfg.validate()?;
    let patches = training_patches(cfg, data);
    let codebook = kmeans_train(
        &patches,
        cfg.neurons,
        cfg.kmeans_max_iters,
        &mut seeds::substream(cfg.seed, seeds::KMEANS),
    )?;
    let tiles: Vec<StimulusPatch> = config_tiles(cfg, &data.test)
        .into_iter()
        .flatten()
        .collect();
    let recons: Vec<ReconstructedPatch> = tiles
        .par_iter()
        .map(|p| kmeans_reconstruct(&codebook, p))
        .collect();
    let row = BaselineRow {
        method: "kmeans".into(),
        neurons: cfg.neurons,
        corr_loss: metrics::corr_recon_loss(&tiles, &recons)?.value,
        rms_loss: metrics::rms_recon_loss(&tiles, &recons)?,
    };
    Ok((codebook, row))
}

/// Runs the K-means comparison for each codebook size, optionally alongside
/// a trained snapshot, writing `codebook_D<k>.txt` per size and `kmeans.csv`
/// into `cfg.out_dir`.
pub fn run_kmeans_baseline(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    sizes: &[usize],
    stdp: Option<&RepresentationNetwork>,
) -> Result<Vec<BaselineRow>> {
    create_dir(&cfg.out_dir)?;
    let mut rows = Vec::new();
    for &k in sizes {
        let mut member = cfg.clone();
        member.neurons = k;
        let (codebook, row) = kmeans_baseline(&member, data)?;
        codebook.save(&cfg.out_dir.join(format!("codebook_D{k}.txt")))?;
        rows.push(row);
    }
    if let Some(net) = stdp {
        let ev = evaluate_snapshot(cfg, data, net)?;
        rows.push(BaselineRow {
            method: "stdp".into(),
            neurons: net.neurons(),
            corr_loss: ev.report.corr_loss,
            rms_loss: ev.report.rms_loss,
        });
    }
    let path = cfg.out_dir.join("kmeans.csv");
    fs::write(&path, baseline_table(&rows)).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// Scores a saved snapshot on the configured test tiles.
pub fn evaluate_snapshot(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    net: &RepresentationNetwork,
) -> Result<Evaluation> {
    if net.inputs() != cfg.inputs() {
        return Err(Error::input(format!(
            "snapshot has {} inputs but the configured patch is {}x{}",
            net.inputs(),
            cfg.patch_side(),
            cfg.patch_side()
        )));
    }
    evaluate(net, &config_tiles(cfg, &data.test), cfg.seed)
}
