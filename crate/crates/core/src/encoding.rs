//! Input layer: pixel intensities to spike trains, and the EPSP trace those
//! trains present to the representation layer.
//!
//! Time runs in whole 1 ms steps `1..=T`. An intensity `x` in `[0, 1]` is
//! rate coded with exactly `x` spikes per step on average: the train spikes
//! at step `t` whenever `floor(x*t + phase)` increments, so spikes are evenly
//! spaced and a fully white pixel fires on every step. The phase is drawn
//! uniformly in `[0, 1)` for every train on every presentation.

use rand::Rng;

use crate::error::{Error, Result};

/// Timing constants shared by the input encoder and the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    /// Presentation duration `T` in steps (ms).
    pub duration: u32,
    /// EPSP decay constant in ms.
    pub tau: f64,
    /// EPSP recency window in steps; older spikes contribute nothing.
    pub window: u32,
    /// Presynaptic coincidence window for STDP, in steps. Only 1 is supported.
    pub coincidence: u32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            duration: 40,
            tau: 0.5,
            window: 4,
            coincidence: 1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.duration < 1 {
            return Err(Error::param(
                "presentation duration T must be at least 1 ms",
            ));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::param(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.window == 0 || self.window > self.duration {
            return Err(Error::param(format!(
                "EPSP window must satisfy 0 < window <= T, got window={} T={}",
                self.window, self.duration
            )));
        }
        if self.coincidence != 1 {
            return Err(Error::param(format!(
                "coincidence window must be one step, got {}",
                self.coincidence
            )));
        }
        Ok(())
    }

    /// `exp(-k / tau)` for `k = 0..window`, the weight of a spike `k` steps old.
    pub fn decay_table(&self) -> Vec<f64> {
        (0..self.window)
            .map(|k| (-(k as f64) / self.tau).exp())
            .collect()
    }
}

/// Strictly increasing spike times in `[1, T]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpikeTrain {
    times: Vec<u32>,
}

impl SpikeTrain {
    pub fn new(times: Vec<u32>, duration: u32) -> Result<Self> {
        if let Some(&t) = times.iter().find(|&&t| t < 1 || t > duration) {
            return Err(Error::input(format!(
                "spike time {t} outside presentation window [1, {duration}]"
            )));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("spike times must be strictly increasing"));
        }
        Ok(Self { times })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Caller guarantees ordering and range.
    pub(crate) fn from_sorted(times: Vec<u32>) -> Self {
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        Self { times }
    }

    pub fn times(&self) -> &[u32] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn contains(&self, t: u32) -> bool {
        self.times.binary_search(&t).is_ok()
    }
}

/// Where a patch was cut from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub image_id: usize,
    pub row: usize,
    pub col: usize,
}

/// A square `p x p` patch of normalized intensities, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusPatch {
    intensities: Vec<f64>,
    side: usize,
    provenance: Provenance,
}

impl StimulusPatch {
    pub fn new(intensities: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let n = intensities.len();
        let side = (n as f64).sqrt().round() as usize;
        if n == 0 || side * side != n {
            return Err(Error::input(format!(
                "patch length {n} is not a nonzero perfect square"
            )));
        }
        if let Some(x) = intensities.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::input(format!("intensity {x} outside [0, 1]")));
        }
        Ok(Self {
            intensities,
            side,
            provenance,
        })
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn mass(&self) -> f64 {
        self.intensities.iter().sum()
    }
}

impl AsRef<[f64]> for StimulusPatch {
    fn as_ref(&self) -> &[f64] {
        &self.intensities
    }
}

/// Deterministic rate code for one intensity at a fixed phase.
pub fn rate_code(intensity: f64, phase: f64, duration: u32) -> SpikeTrain {
    let mut times = Vec::with_capacity((intensity * duration as f64).ceil() as usize);
    let mut prev = phase.floor();
    for t in 1..=duration {
        let cur = (intensity * t as f64 + phase).floor();
        if cur > prev {
            times.push(t);
        }
        prev = cur;
    }
    SpikeTrain::from_sorted(times)
}

/// Encodes every pixel of `patch` with a fresh random phase.
pub fn encode_patch<R: Rng + ?Sized>(
    patch: &StimulusPatch,
    cfg: &EncoderConfig,
    rng: &mut R,
) -> Vec<SpikeTrain> {
    patch
        .intensities()
        .iter()
        .map(|&x| {
            let phase: f64 = rng.gen();
            rate_code(x, phase, cfg.duration)
        })
        .collect()
}

/// EPSP trace `sum exp(-(t - t_f) / tau)` over spikes in `(t - window, t]`.
pub fn epsp_trace(train: &SpikeTrain, t: u32, cfg: &EncoderConfig) -> f64 {
    let lo = t.saturating_sub(cfg.window);
    let times = train.times();
    let start = times.partition_point(|&s| s <= lo);
    times[start..]
        .iter()
        .take_while(|&&s| s <= t)
        .map(|&s| (-((t - s) as f64) / cfg.tau).exp())
        .sum()
}

/// Whether the train spiked within the coincidence window ending at `t`.
pub fn presyn_flag(train: &SpikeTrain, t: u32) -> bool {
    train.contains(t)
}
