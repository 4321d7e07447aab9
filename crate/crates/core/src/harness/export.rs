//! PGM exports of learned filters and reconstructed images.

use std::fs;
use std::path::{Path, PathBuf};

use super::seeds;
use crate::data::{write_pgm, ImageStore};
use crate::error::{Error, Result};
use crate::network::RepresentationNetwork;
use crate::reconstruction::{reconstruct_image, ImageReconstruction};

/// Maps every weight to a byte using the global min and max of the matrix,
/// so filters stay comparable. A constant matrix maps to mid-gray.
pub fn filter_bytes(net: &RepresentationNetwork) -> Vec<Vec<u8>> {
    let stats = net.weight_stats();
    let span = stats.max - stats.min;
    net.rows()
        .map(|row| {
            row.iter()
                .map(|&w| {
                    if span > 0.0 {
                        (255.0 * (w - stats.min) / span).round() as u8
                    } else {
                        128
                    }
                })
                .collect()
        })
        .collect()
}

fn square_side(net: &RepresentationNetwork) -> Result<usize> {
    let side = (net.inputs() as f64).sqrt().round() as usize;
    if side * side != net.inputs() {
        return Err(Error::input(format!(
            "network input size {} is not a square patch",
            net.inputs()
        )));
    }
    Ok(side)
}

/// Writes `filter_<j>.pgm` per neuron and a `sheet.pgm` grid of all filters
/// separated by one-pixel black gutters. Returns the written paths.
pub fn export_filters(net: &RepresentationNetwork, dir: &Path) -> Result<Vec<PathBuf>> {
    let side = square_side(net)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let filters = filter_bytes(net);
    let mut written = Vec::with_capacity(filters.len() + 1);
    for (j, f) in filters.iter().enumerate() {
        let path = dir.join(format!("filter_{j:03}.pgm"));
        write_pgm(&path, side, side, f)?;
        written.push(path);
    }

    let cols = (filters.len() as f64).sqrt().ceil() as usize;
    let rows = filters.len().div_ceil(cols);
    let cell = side + 1;
    let (w, h) = (cols * cell + 1, rows * cell + 1);
    let mut sheet = vec![0u8; w * h];
    for (j, f) in filters.iter().enumerate() {
        let (r0, c0) = ((j / cols) * cell + 1, (j % cols) * cell + 1);
        for r in 0..side {
            let at = (r0 + r) * w + c0;
            sheet[at..at + side].copy_from_slice(&f[r * side..(r + 1) * side]);
        }
    }
    let path = dir.join("sheet.pgm");
    write_pgm(&path, w, h, &sheet)?;
    written.push(path);
    Ok(written)
}

/// Reconstructs each image in `store` and writes `<id>_original.pgm` and
/// `<id>_recon.pgm` into `dir`.
pub fn export_reconstructions(
    net: &RepresentationNetwork,
    store: &ImageStore,
    stride: usize,
    seed: u64,
    dir: &Path,
) -> Result<Vec<ImageReconstruction>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::with_capacity(store.len());
    for (k, (id, img)) in store.iter().enumerate() {
        let mut rng = seeds::indexed_substream(seed, seeds::EVAL_ENCODING, k as u64);
        let recon = reconstruct_image(img, id, net, stride, &mut rng)?;
        write_pgm(
            &dir.join(format!("{id}_original.pgm")),
            img.width(),
            img.height(),
            &img.to_bytes(),
        )?;
        write_pgm(
            &dir.join(format!("{id}_recon.pgm")),
            img.width(),
            img.height(),
            &recon.image.to_bytes(),
        )?;
        out.push(recon);
    }
    Ok(out)
}
