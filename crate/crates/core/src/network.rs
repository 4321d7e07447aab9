//! The representation layer and the per-presentation simulator.
//!
//! Each step the layer scores every neuron with a softmax over its summed
//! EPSP drive `u_j = sum_i w_ji * zeta_i(t)`. Every neuron whose score
//! exceeds the shared threshold emits a spike on that step. The softmax is
//! the only inhibition in the layer.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::encoding::{EncoderConfig, SpikeTrain};
use crate::error::{Error, Result};

pub const THETA_MIN: f64 = 0.01;
pub const THETA_MAX: f64 = 0.99;

const SNAPSHOT_HEADER: &str = "STDP-REPR v1";

/// A weight update applied to one neuron's incoming row when it spikes.
///
/// `presyn[i]` is true when input `i` spiked within the coincidence window
/// ending at the current step.
pub trait WeightRule {
    fn update_row(&self, row: &mut [f64], presyn: &[bool]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightStats {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
}

impl WeightStats {
    pub fn of(values: &[f64]) -> Self {
        let (mut max, mut min, mut sum) = (f64::NEG_INFINITY, f64::INFINITY, 0.0);
        for &v in values {
            max = max.max(v);
            min = min.min(v);
            sum += v;
        }
        Self {
            max,
            min,
            mean: sum / values.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationNetwork {
    /// Row-major `D x N`; row `j` holds the incoming weights of neuron `j`.
    weights: Vec<f64>,
    neurons: usize,
    inputs: usize,
    theta: f64,
    /// Regularizer the weights were trained under. Recorded in snapshots.
    lambda: f64,
    encoder: EncoderConfig,
}

/// Everything the layer emitted during one presentation.
#[derive(Debug, Clone, PartialEq)]
pub struct PresentationResponse {
    pub output_trains: Vec<SpikeTrain>,
    pub counts: Vec<u32>,
    pub fired: Vec<bool>,
    /// Number of neurons that fired at least once (`m_z`).
    pub active: usize,
    pub duration: u32,
}

impl PresentationResponse {
    pub fn total_spikes(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn neurons(&self) -> usize {
        self.counts.len()
    }

    /// Indicator `r_j(t)`.
    pub fn fired_at(&self, neuron: usize, t: u32) -> bool {
        self.output_trains[neuron].contains(t)
    }
}

enum Weights<'a> {
    Frozen(&'a [f64]),
    Plastic(&'a mut [f64], &'a dyn WeightRule),
}

impl RepresentationNetwork {
    /// Builds a layer with i.i.d. `Uniform[0, 1)` weights.
    ///
    /// `theta_init` must lie strictly between `1/D` and `0.5`: below `1/D`
    /// every neuron can fire on a flat score, at or above `0.5` only a single
    /// neuron ever can.
    pub fn new<R: Rng + ?Sized>(
        neurons: usize,
        inputs: usize,
        theta_init: f64,
        encoder: EncoderConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if neurons < 2 {
            return Err(Error::param(format!(
                "need at least 2 neurons, got {neurons}"
            )));
        }
        if inputs < 1 {
            return Err(Error::param("need at least 1 input"));
        }
        let floor = 1.0 / neurons as f64;
        if !(theta_init > floor && theta_init < 0.5) {
            return Err(Error::param(format!(
                "initial threshold {theta_init} outside (1/D, 0.5) = ({floor}, 0.5)"
            )));
        }
        encoder.validate()?;
        let weights = (0..neurons * inputs).map(|_| rng.gen::<f64>()).collect();
        Ok(Self {
            weights,
            neurons,
            inputs,
            theta: theta_init,
            lambda: 0.0,
            encoder,
        })
    }

    /// Builds a layer from explicit weights (row-major `D x N`).
    pub fn from_weights(
        weights: Vec<f64>,
        neurons: usize,
        inputs: usize,
        theta: f64,
        encoder: EncoderConfig,
    ) -> Result<Self> {
        if neurons < 2 || inputs < 1 {
            return Err(Error::param(format!(
                "invalid layer shape D={neurons} N={inputs}"
            )));
        }
        if weights.len() != neurons * inputs {
            return Err(Error::input(format!(
                "expected {} weights, got {}",
                neurons * inputs,
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::input(format!("weight {w} outside [0, 1]")));
        }
        if !(THETA_MIN..=THETA_MAX).contains(&theta) {
            return Err(Error::input(format!(
                "threshold {theta} outside [{THETA_MIN}, {THETA_MAX}]"
            )));
        }
        encoder.validate()?;
        Ok(Self {
            weights,
            neurons,
            inputs,
            theta,
            lambda: 0.0,
            encoder,
        })
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn set_theta(&mut self, theta: f64) {
        self.theta = theta.clamp(THETA_MIN, THETA_MAX);
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        self.lambda = lambda;
    }

    pub fn encoder(&self) -> &EncoderConfig {
        &self.encoder
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, neuron: usize) -> &[f64] {
        &self.weights[neuron * self.inputs..(neuron + 1) * self.inputs]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.inputs)
    }

    pub fn weight_stats(&self) -> WeightStats {
        WeightStats::of(&self.weights)
    }

    /// Softmax WTA score of every neuron for the given input traces.
    pub fn wta_scores(&self, traces: &[f64]) -> Vec<f64> {
        let mut scores = vec![0.0; self.neurons];
        drive(&self.weights, self.inputs, traces, &mut scores);
        softmax_in_place(&mut scores);
        scores
    }

    /// Runs one presentation and applies `rule` to the row of every neuron
    /// that spikes, at the step it spikes. With `rule = None` the weights are
    /// left untouched.
    pub fn present(
        &mut self,
        inputs: &[SpikeTrain],
        rule: Option<&dyn WeightRule>,
    ) -> Result<PresentationResponse> {
        let (n, d, theta, enc) = (self.inputs, self.neurons, self.theta, self.encoder);
        let weights = match rule {
            Some(rule) => Weights::Plastic(&mut self.weights, rule),
            None => Weights::Frozen(&self.weights),
        };
        simulate(weights, n, d, theta, &enc, inputs)
    }

    /// Runs one presentation with learning disabled.
    pub fn respond(&self, inputs: &[SpikeTrain]) -> Result<PresentationResponse> {
        simulate(
            Weights::Frozen(&self.weights),
            self.inputs,
            self.neurons,
            self.theta,
            &self.encoder,
            inputs,
        )
    }

    pub fn to_snapshot_string(&self) -> String {
        let mut out = String::with_capacity(self.weights.len() * 20 + 64);
        out.push_str(SNAPSHOT_HEADER);
        out.push('\n');
        let _ = writeln!(
            out,
            "D={} N={} lambda={} theta={}",
            self.neurons, self.inputs, self.lambda, self.theta
        );
        write_rows(&mut out, self.rows());
        out
    }

    pub fn from_snapshot_str(text: &str, encoder: EncoderConfig) -> Result<Self> {
        let parsed = parse_matrix_text(text, SNAPSHOT_HEADER, Path::new("<snapshot>"))?;
        let get = |k: &str| {
            parsed
                .fields
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::input(format!("snapshot header missing `{k}`")))
        };
        let neurons: usize = parse_field(get("D")?, "D")?;
        let inputs: usize = parse_field(get("N")?, "N")?;
        let lambda: f64 = parse_field(get("lambda")?, "lambda")?;
        let theta: f64 = parse_field(get("theta")?, "theta")?;
        if parsed.rows.len() != neurons || parsed.rows.iter().any(|r| r.len() != inputs) {
            return Err(Error::input(format!(
                "snapshot body is not a {neurons} x {inputs} matrix"
            )));
        }
        let mut net = Self::from_weights(
            parsed.rows.into_iter().flatten().collect(),
            neurons,
            inputs,
            theta,
            encoder,
        )?;
        net.lambda = lambda;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_snapshot_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, encoder: EncoderConfig) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot_str(&text, encoder).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::format(path, msg),
            other => other,
        })
    }
}

fn drive(weights: &[f64], inputs: usize, traces: &[f64], out: &mut [f64]) {
    for (u, row) in out.iter_mut().zip(weights.chunks_exact(inputs)) {
        *u = row.iter().zip(traces).map(|(w, z)| w * z).sum();
    }
}

/// Max-shifted softmax; identical to the plain form up to rounding.
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
}

fn simulate(
    mut weights: Weights<'_>,
    n: usize,
    d: usize,
    theta: f64,
    enc: &EncoderConfig,
    inputs: &[SpikeTrain],
) -> Result<PresentationResponse> {
    if inputs.len() != n {
        return Err(Error::input(format!(
            "expected {n} input trains, got {}",
            inputs.len()
        )));
    }
    let duration = enc.duration as usize;
    // raster[(t - 1) * n + i]: input i spiked at step t
    let mut raster = vec![false; duration * n];
    for (i, train) in inputs.iter().enumerate() {
        for &t in train.times() {
            if t as usize > duration {
                return Err(Error::input(format!(
                    "input spike at {t} beyond T = {duration}"
                )));
            }
            raster[(t as usize - 1) * n + i] = true;
        }
    }
    let decay = enc.decay_table();
    let mut traces = vec![0.0; n];
    let mut scores = vec![0.0; d];
    let mut winners = Vec::with_capacity(d);
    let mut out_times: Vec<Vec<u32>> = vec![Vec::new(); d];

    for step in 0..duration {
        traces.iter_mut().for_each(|z| *z = 0.0);
        for (age, &k) in decay.iter().enumerate().take(step + 1) {
            let spikes = &raster[(step - age) * n..(step - age + 1) * n];
            for (z, &s) in traces.iter_mut().zip(spikes) {
                if s {
                    *z += k;
                }
            }
        }
        if traces.iter().all(|&z| z == 0.0) {
            continue;
        }
        let current: &[f64] = match &weights {
            Weights::Frozen(w) => w,
            Weights::Plastic(w, _) => w,
        };
        drive(current, n, &traces, &mut scores);
        softmax_in_place(&mut scores);
        winners.clear();
        winners.extend((0..d).filter(|&j| scores[j] > theta));
        let t = step as u32 + 1;
        for &j in &winners {
            out_times[j].push(t);
        }
        if let Weights::Plastic(w, rule) = &mut weights {
            let presyn = &raster[step * n..(step + 1) * n];
            for &j in &winners {
                rule.update_row(&mut w[j * n..(j + 1) * n], presyn);
            }
        }
    }

    let counts: Vec<u32> = out_times.iter().map(|v| v.len() as u32).collect();
    let fired: Vec<bool> = counts.iter().map(|&c| c > 0).collect();
    let active = fired.iter().filter(|&&f| f).count();
    Ok(PresentationResponse {
        output_trains: out_times.into_iter().map(SpikeTrain::from_sorted).collect(),
        counts,
        fired,
        active,
        duration: enc.duration,
    })
}

pub(crate) struct MatrixText {
    pub fields: Vec<(String, String)>,
    pub rows: Vec<Vec<f64>>,
}

/// Shared grammar of the snapshot and codebook files: a header tag line, a
/// line of `key=value` fields, then one whitespace-separated row per line.
pub(crate) fn parse_matrix_text(text: &str, header: &str, origin: &Path) -> Result<MatrixText> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim_end() == header => {}
        other => {
            return Err(Error::format(
                origin,
                format!(
                    "expected header `{header}`, found {:?}",
                    other.unwrap_or("")
                ),
            ))
        }
    }
    let meta = lines
        .next()
        .ok_or_else(|| Error::format(origin, "missing metadata line"))?;
    let mut fields = Vec::new();
    for tok in meta.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::format(origin, format!("malformed field `{tok}`")))?;
        fields.push((k.to_string(), v.to_string()));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(origin, format!("row {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    Ok(MatrixText { fields, rows })
}

pub(crate) fn write_rows<'a>(out: &mut String, rows: impl Iterator<Item = &'a [f64]>) {
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(value: &str, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::input(format!("field `{name}`: {e}")))
}
