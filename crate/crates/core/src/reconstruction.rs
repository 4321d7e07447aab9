//! Decoding responses back to pixels through the transposed weights.
//!
//! A response is decoded in the rate domain: each neuron contributes its
//! weight row in proportion to its spike count, and the result is normalized
//! by the total count so it stays on the `[0, 1]` intensity scale.

use rand::Rng;

use crate::data::GrayImage;
use crate::encoding::{encode_patch, Provenance, StimulusPatch};
use crate::error::{Error, Result};
use crate::network::{PresentationResponse, RepresentationNetwork};

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedPatch {
    pub intensities: Vec<f64>,
    pub source: Option<Provenance>,
}

impl AsRef<[f64]> for ReconstructedPatch {
    fn as_ref(&self) -> &[f64] {
        &self.intensities
    }
}

pub fn decode_response(
    net: &RepresentationNetwork,
    resp: &PresentationResponse,
) -> ReconstructedPatch {
    let mut out = vec![0.0; net.inputs()];
    let total = resp.total_spikes();
    if total > 0 {
        for (row, &c) in net.rows().zip(&resp.counts) {
            if c == 0 {
                continue;
            }
            let share = c as f64 / total as f64;
            for (o, w) in out.iter_mut().zip(row) {
                *o += share * w;
            }
        }
    }
    ReconstructedPatch {
        intensities: out,
        source: None,
    }
}

/// Top-left corners of every `side x side` window at `stride`.
pub fn window_origins(
    width: usize,
    height: usize,
    side: usize,
    stride: usize,
) -> Vec<(usize, usize)> {
    if side == 0 || stride == 0 || side > width || side > height {
        return Vec::new();
    }
    let rows = (0..=height - side).step_by(stride);
    rows.flat_map(|r| (0..=width - side).step_by(stride).map(move |c| (r, c)))
        .collect()
}

/// One tile of a reconstructed image.
#[derive(Debug, Clone)]
pub struct TileResult {
    pub original: StimulusPatch,
    pub response: PresentationResponse,
    pub reconstruction: ReconstructedPatch,
}

/// Encodes, presents (learning off) and decodes one patch.
pub fn reconstruct_patch<R: Rng + ?Sized>(
    net: &RepresentationNetwork,
    patch: &StimulusPatch,
    rng: &mut R,
) -> Result<TileResult> {
    let trains = encode_patch(patch, net.encoder(), rng);
    let response = net.respond(&trains)?;
    let mut reconstruction = decode_response(net, &response);
    reconstruction.source = Some(patch.provenance());
    Ok(TileResult {
        original: patch.clone(),
        response,
        reconstruction,
    })
}

#[derive(Debug, Clone)]
pub struct ImageReconstruction {
    pub image: GrayImage,
    /// Pixels covered by at least one window. Uncovered pixels are 0 in
    /// `image` and are excluded from losses.
    pub covered: Vec<bool>,
    pub tiles: Vec<TileResult>,
}

/// Reconstructs a whole image from `p x p` windows at `stride`, averaging
/// overlapping estimates. `image_id` is recorded in tile provenance.
pub fn reconstruct_image<R: Rng + ?Sized>(
    image: &GrayImage,
    image_id: usize,
    net: &RepresentationNetwork,
    stride: usize,
    rng: &mut R,
) -> Result<ImageReconstruction> {
    let side = (net.inputs() as f64).sqrt().round() as usize;
    if side * side != net.inputs() {
        return Err(Error::input(format!(
            "network input size {} is not a square patch",
            net.inputs()
        )));
    }
    if image.width() < side || image.height() < side {
        return Err(Error::input(format!(
            "{}x{} image is smaller than the {side}x{side} patch",
            image.width(),
            image.height()
        )));
    }
    if stride == 0 {
        return Err(Error::param("stride must be at least 1"));
    }
    let (w, h) = (image.width(), image.height());
    let mut sum = vec![0.0; w * h];
    let mut hits = vec![0u32; w * h];
    let mut tiles = Vec::new();
    for (row, col) in window_origins(w, h, side, stride) {
        let tile = reconstruct_patch(net, &image.patch(image_id, row, col, side), rng)?;
        for dr in 0..side {
            for dc in 0..side {
                let k = (row + dr) * w + col + dc;
                sum[k] += tile.reconstruction.intensities[dr * side + dc];
                hits[k] += 1;
            }
        }
        tiles.push(tile);
    }
    let mut out = GrayImage::zeros(w, h);
    for ((o, s), &n) in out.pixels_mut().iter_mut().zip(&sum).zip(&hits) {
        if n > 0 {
            *o = (s / n as f64).clamp(0.0, 1.0);
        }
    }
    Ok(ImageReconstruction {
        image: out,
        covered: hits.iter().map(|&n| n > 0).collect(),
        tiles,
    })
}
