//! Experiment configuration: flat `key=value` text, one entry per line,
//! `#` starts a comment.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::encoding::EncoderConfig;
use crate::error::{Error, Result};
use crate::plasticity::LearningParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Mnist,
    Natural,
}

impl Dataset {
    pub fn default_patch(self) -> usize {
        match self {
            Dataset::Mnist => 5,
            Dataset::Natural => 16,
        }
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(Dataset::Mnist),
            "natural" => Ok(Dataset::Natural),
            other => Err(Error::param(format!("unknown dataset `{other}`"))),
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataset::Mnist => "mnist",
            Dataset::Natural => "natural",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Dataset,
    /// MNIST: directory holding `train-images-idx3-ubyte` and
    /// `t10k-images-idx3-ubyte`. Natural: directory of `.pgm` files.
    pub data_dir: PathBuf,
    /// Patch side; `None` picks the dataset default (5 or 16).
    pub patch: Option<usize>,
    pub neurons: usize,
    pub learning: LearningParams,
    pub theta_init: f64,
    pub encoder: EncoderConfig,
    /// Training iterations; one iteration is one training image.
    pub iters: usize,
    pub per_image_patches: usize,
    /// Sampled patches with a smaller intensity sum are rejected.
    pub min_mass: f64,
    pub eval_every: usize,
    pub eval_images: usize,
    /// Stride of evaluation tiles; `None` means disjoint tiles (stride = p).
    pub eval_stride: Option<usize>,
    /// Evaluation tiles with a smaller intensity sum are left out of the
    /// scores, mirroring the blank rule used for training patches.
    pub eval_min_mass: f64,
    /// Natural images held out for testing.
    pub natural_test_images: usize,
    pub kmeans_max_iters: usize,
    pub seed: u64,
    /// Seed of the train/test split; `None` uses `seed`. Sweep members
    /// keep the base seed here so they share one split.
    pub split_seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: Dataset::Mnist,
            data_dir: PathBuf::from("data/mnist"),
            patch: None,
            neurons: 32,
            learning: LearningParams::default(),
            theta_init: 0.15,
            encoder: EncoderConfig::default(),
            iters: 15_000,
            per_image_patches: 25,
            min_mass: 0.5,
            eval_every: 1000,
            eval_images: 1000,
            eval_stride: None,
            eval_min_mass: 0.0,
            natural_test_images: 2,
            kmeans_max_iters: 100,
            seed: 1,
            split_seed: None,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::param(format!("`{key}={value}`: {e}")))
}

impl ExperimentConfig {
    pub fn patch_side(&self) -> usize {
        self.patch.unwrap_or(self.dataset.default_patch())
    }

    pub fn inputs(&self) -> usize {
        self.patch_side() * self.patch_side()
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.seed)
    }

    pub fn stride(&self) -> usize {
        self.eval_stride.unwrap_or(self.patch_side())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "dataset" => self.dataset = parse(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "p" | "patch" => self.patch = Some(parse(key, value)?),
            "D" | "neurons" => self.neurons = parse(key, value)?,
            "lambda" => self.learning.lambda = parse(key, value)?,
            "a" => self.learning.a = parse(key, value)?,
            "b" => self.learning.b = parse(key, value)?,
            "q" => self.learning.q = parse(key, value)?,
            "theta_init" => self.theta_init = parse(key, value)?,
            "T" => self.encoder.duration = parse(key, value)?,
            "tau" => self.encoder.tau = parse(key, value)?,
            "nu" => self.encoder.window = parse(key, value)?,
            "iters" => self.iters = parse(key, value)?,
            "per_image_patches" => self.per_image_patches = parse(key, value)?,
            "min_mass" => self.min_mass = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "eval_images" => self.eval_images = parse(key, value)?,
            "eval_stride" => self.eval_stride = Some(parse(key, value)?),
            "eval_min_mass" => self.eval_min_mass = parse(key, value)?,
            "natural_test_images" => self.natural_test_images = parse(key, value)?,
            "kmeans_max_iters" => self.kmeans_max_iters = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "split_seed" => self.split_seed = Some(parse(key, value)?),
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::param(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every setting in a config text, in order.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::param(format!("config line {}: expected key=value", lineno + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.patch_side();
        if p == 0 {
            return Err(Error::param("patch side must be positive"));
        }
        if self.neurons < 2 {
            return Err(Error::param("D must be at least 2"));
        }
        let floor = 1.0 / self.neurons as f64;
        if !(self.theta_init > floor && self.theta_init < 0.5) {
            return Err(Error::param(format!(
                "theta_init {} outside (1/D, 0.5) = ({floor}, 0.5)",
                self.theta_init
            )));
        }
        self.learning.validate()?;
        self.encoder.validate()?;
        if self.per_image_patches == 0 || self.eval_every == 0 || self.eval_images == 0 {
            return Err(Error::param(
                "per_image_patches, eval_every and eval_images must be positive",
            ));
        }
        if !(self.min_mass >= 0.0 && self.eval_min_mass >= 0.0) {
            return Err(Error::param("min_mass and eval_min_mass must be >= 0"));
        }
        if self.eval_stride == Some(0) {
            return Err(Error::param("eval_stride must be positive"));
        }
        if self.dataset == Dataset::Natural && self.natural_test_images == 0 {
            return Err(Error::param("natural_test_images must be positive"));
        }
        Ok(())
    }

    /// The config as `key=value` text that `apply_text` reads back.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("dataset={}", self.dataset),
            format!("data_dir={}", self.data_dir.display()),
            format!("p={}", self.patch_side()),
            format!("D={}", self.neurons),
            format!("lambda={}", self.learning.lambda),
            format!("a={}", self.learning.a),
            format!("b={}", self.learning.b),
            format!("q={}", self.learning.q),
            format!("theta_init={}", self.theta_init),
            format!("T={}", self.encoder.duration),
            format!("tau={}", self.encoder.tau),
            format!("nu={}", self.encoder.window),
            format!("iters={}", self.iters),
            format!("per_image_patches={}", self.per_image_patches),
            format!("min_mass={}", self.min_mass),
            format!("eval_every={}", self.eval_every),
            format!("eval_images={}", self.eval_images),
        ];
        if let Some(s) = self.eval_stride {
            lines.push(format!("eval_stride={s}"));
        }
        lines.extend([
            format!("eval_min_mass={}", self.eval_min_mass),
            format!("natural_test_images={}", self.natural_test_images),
            format!("kmeans_max_iters={}", self.kmeans_max_iters),
            format!("seed={}", self.seed),
        ]);
        if let Some(s) = self.split_seed {
            lines.push(format!("split_seed={s}"));
        }
        lines.push(format!("out_dir={}", self.out_dir.display()));
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }
}
