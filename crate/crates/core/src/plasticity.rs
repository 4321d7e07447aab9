//! Learning rules and learning diagnostics.
//!
//! Upon a postsynaptic spike of neuron `j`, every incoming weight moves by
//!
//! ```text
//! dw = a * (1 - w (1 + lambda))   if input i spiked this step
//! dw = a * (  - w (1 + lambda))   otherwise
//! ```
//!
//! After each presentation the shared threshold moves by `b * (m_z - q)`,
//! where `m_z` counts the neurons that fired at least once and `q = 1`
//! targets a single active neuron per stimulus.
//!
//! With input `i` spiking with probability `x` at the postsynaptic spike, the
//! expected update is `a * (x - w - lambda w)` and the weight settles at
//! `x / (1 + lambda)`.

use crate::encoding::StimulusPatch;
use crate::error::{Error, Result};
use crate::network::{RepresentationNetwork, WeightRule, WeightStats, THETA_MAX, THETA_MIN};

/// Upper bound (exclusive) on both learning rates: one over the largest
/// number of updates a single image can trigger (25 patches x 40 spikes).
pub const LEARNING_RATE_BOUND: f64 = 1.0 / (25.0 * 40.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningParams {
    /// STDP learning rate.
    pub a: f64,
    /// Threshold learning rate.
    pub b: f64,
    /// Weight regularizer; the weight equilibrium scales by `1 / (1 + lambda)`.
    pub lambda: f64,
    /// Target number of active neurons per presentation.
    pub q: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            a: 0.0005,
            b: 0.0001,
            lambda: 0.0,
            q: 1.0,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b)] {
            if !(v > 0.0 && v < LEARNING_RATE_BOUND) {
                return Err(Error::param(format!(
                    "learning rate {name} = {v} outside (0, {LEARNING_RATE_BOUND})"
                )));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::param(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.q >= 0.0) || !self.q.is_finite() {
            return Err(Error::param(format!("q must be >= 0, got {}", self.q)));
        }
        Ok(())
    }
}

/// One STDP event for a single synapse, clamped to `[0, 1]`.
pub fn stdp_update(w: f64, presyn: bool, params: &LearningParams) -> f64 {
    let decay = w * (1.0 + params.lambda);
    let dw = if presyn {
        params.a * (1.0 - decay)
    } else {
        -params.a * decay
    };
    (w + dw).clamp(0.0, 1.0)
}

/// Per-presentation threshold update, clamped to the legal threshold range.
pub fn threshold_update(theta: f64, active: usize, params: &LearningParams) -> f64 {
    (theta + params.b * (active as f64 - params.q)).clamp(THETA_MIN, THETA_MAX)
}

/// Expected STDP increment when the presynaptic spike probability is `x`.
pub fn expected_update(x: f64, w: f64, params: &LearningParams) -> f64 {
    params.a * (x - w - params.lambda * w)
}

impl WeightRule for LearningParams {
    fn update_row(&self, row: &mut [f64], presyn: &[bool]) {
        for (w, &s) in row.iter_mut().zip(presyn) {
            *w = stdp_update(*w, s, self);
        }
    }
}

/// Objective `sum_j sum_i y_j (x_i - w_ji)^2 + y_j lambda w_ji^2` with the
/// linear activation `y_j = sum_i x_i w_ji`, summed over `patches`.
pub fn objective_value(
    patches: &[StimulusPatch],
    net: &RepresentationNetwork,
    lambda: f64,
) -> Result<f64> {
    if patches.is_empty() {
        return Err(Error::input("objective needs at least one patch"));
    }
    let mut total = 0.0;
    for patch in patches {
        let x = patch.intensities();
        if x.len() != net.inputs() {
            return Err(Error::input(format!(
                "patch has {} pixels, network expects {}",
                x.len(),
                net.inputs()
            )));
        }
        for row in net.rows() {
            let y: f64 = x.iter().zip(row).map(|(xi, w)| xi * w).sum();
            let fit: f64 = x
                .iter()
                .zip(row)
                .map(|(xi, w)| (xi - w).powi(2) + lambda * w * w)
                .sum();
            total += y * fit;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticReport {
    pub objective_value: f64,
    /// Per-synapse `mean(x_i) / (1 + lambda)` over the sample.
    pub predicted_equilibrium: Vec<f64>,
    pub weights: WeightStats,
}

pub fn diagnose(
    patches: &[StimulusPatch],
    net: &RepresentationNetwork,
    lambda: f64,
) -> Result<DiagnosticReport> {
    let objective_value = objective_value(patches, net, lambda)?;
    let mut mean = vec![0.0; net.inputs()];
    for p in patches {
        for (m, x) in mean.iter_mut().zip(p.intensities()) {
            *m += x;
        }
    }
    let scale = 1.0 / (patches.len() as f64 * (1.0 + lambda));
    mean.iter_mut().for_each(|m| *m *= scale);
    Ok(DiagnosticReport {
        objective_value,
        predicted_equilibrium: mean,
        weights: net.weight_stats(),
    })
}
