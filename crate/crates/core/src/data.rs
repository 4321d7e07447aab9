//! Image ingestion and patch sampling.
//!
//! MNIST arrives as big-endian IDX image files (magic `0x00000803`) and
//! natural images as binary PGM (`P5`). Everything is normalized to `[0, 1]`
//! on load.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::encoding::{Provenance, StimulusPatch};
use crate::error::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::input(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::input(format!("pixel {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    /// Copies the `side x side` window whose top-left corner is `(row, col)`.
    pub fn window(&self, row: usize, col: usize, side: usize) -> Vec<f64> {
        debug_assert!(row + side <= self.height && col + side <= self.width);
        let mut out = Vec::with_capacity(side * side);
        for r in row..row + side {
            let start = r * self.width + col;
            out.extend_from_slice(&self.pixels[start..start + side]);
        }
        out
    }

    pub fn patch(&self, image_id: usize, row: usize, col: usize, side: usize) -> StimulusPatch {
        StimulusPatch::new(
            self.window(row, col, side),
            Provenance { image_id, row, col },
        )
        .expect("window of a valid image is a valid patch")
    }

    /// Quantizes to bytes by `round(255 * v)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageStore {
    pub images: Vec<GrayImage>,
    pub ids: Vec<usize>,
}

impl ImageStore {
    pub fn new(images: Vec<GrayImage>) -> Self {
        let ids = (0..images.len()).collect();
        Self { images, ids }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &GrayImage)> {
        self.ids.iter().copied().zip(&self.images)
    }

    /// Keeps the entries at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        }
    }
}

/// Image count and shape from an IDX image header.
pub fn idx_header(bytes: &[u8], origin: &Path) -> Result<(usize, usize, usize)> {
    if bytes.len() < 16 {
        return Err(Error::Truncated {
            path: origin.into(),
            expected: 16,
            found: bytes.len(),
        });
    }
    let word = |k: usize| u32::from_be_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    let magic = word(0);
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::format(
            origin,
            format!("bad IDX magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"),
        ));
    }
    let (count, rows, cols) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let payload = bytes.len() - 16;
    if payload < count * rows * cols {
        return Err(Error::Truncated {
            path: origin.into(),
            expected: count * rows * cols,
            found: payload,
        });
    }
    Ok((count, rows, cols))
}

/// Parses the IDX images at `indices`; their ids are the file indices.
pub fn parse_idx_images_at(bytes: &[u8], indices: &[usize], origin: &Path) -> Result<ImageStore> {
    let (count, rows, cols) = idx_header(bytes, origin)?;
    let size = rows * cols;
    let mut images = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= count {
            return Err(Error::input(format!(
                "image index {i} beyond {count} images"
            )));
        }
        let raw = &bytes[16 + i * size..16 + (i + 1) * size];
        images.push(GrayImage {
            width: cols,
            height: rows,
            pixels: raw.iter().map(|&b| b as f64 / 255.0).collect(),
        });
    }
    Ok(ImageStore {
        images,
        ids: indices.to_vec(),
    })
}

/// Parses an IDX image file, keeping at most `limit` images.
pub fn parse_idx_images(bytes: &[u8], limit: Option<usize>, origin: &Path) -> Result<ImageStore> {
    let (count, _, _) = idx_header(bytes, origin)?;
    let keep = limit.map_or(count, |l| l.min(count));
    parse_idx_images_at(bytes, &(0..keep).collect::<Vec<_>>(), origin)
}

pub fn load_mnist_idx(path: &Path, limit: Option<usize>) -> Result<ImageStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_images(&bytes, limit, path)
}

/// Serializes byte images of equal shape as an IDX image file.
pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Result<Vec<u8>> {
    if let Some(img) = images.iter().find(|img| img.len() != rows * cols) {
        return Err(Error::input(format!(
            "image of {} bytes in a {rows}x{cols} IDX file",
            img.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for word in [
        IDX_IMAGE_MAGIC,
        images.len() as u32,
        rows as u32,
        cols as u32,
    ] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    Ok(out)
}

/// Parses a binary PGM, dividing by maxval and then min-max rescaling the
/// image to span `[0, 1]`. Constant images map to 0.5 everywhere.
pub fn parse_pgm(bytes: &[u8], origin: &Path) -> Result<GrayImage> {
    let (width, height, maxval, raster) = parse_pgm_raw(bytes, origin)?;
    let mut pixels: Vec<f64> = raster.iter().map(|&b| b as f64 / maxval as f64).collect();
    let (lo, hi) = pixels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi > lo {
        let span = hi - lo;
        pixels.iter_mut().for_each(|v| *v = (*v - lo) / span);
    } else {
        pixels.iter_mut().for_each(|v| *v = 0.5);
    }
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path)
}

/// Header fields and raster bytes of a `P5` file with `maxval <= 255`.
pub fn parse_pgm_raw<'a>(bytes: &'a [u8], origin: &Path) -> Result<(usize, usize, u32, &'a [u8])> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(origin, "not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(origin, "malformed PGM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::format(origin, "PGM header value out of range"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(origin, "malformed PGM header"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(
            origin,
            format!("maxval {maxval} unsupported (must be 1..=255)"),
        ));
    }
    let (width, height) = (width as usize, height as usize);
    let raster = &bytes[pos..];
    if raster.len() < width * height {
        return Err(Error::Truncated {
            path: origin.into(),
            expected: width * height,
            found: raster.len(),
        });
    }
    Ok((width, height, maxval, &raster[..width * height]))
}

pub fn encode_pgm(width: usize, height: usize, raster: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(raster);
    out
}

pub fn write_pgm(path: &Path, width: usize, height: usize, raster: &[u8]) -> Result<()> {
    fs::write(path, encode_pgm(width, height, raster)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Mnist,
    Natural,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    pub patches: Vec<StimulusPatch>,
    pub side: usize,
    pub split: Split,
    pub source: Source,
}

impl PatchDataset {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Draws up to `per_image` patches from one image at uniform-random offsets,
/// rejecting patches whose summed intensity is below `min_mass`. Gives up
/// after `10 * per_image` draws.
pub fn sample_image_patches<R: Rng + ?Sized>(
    image: &GrayImage,
    image_id: usize,
    side: usize,
    per_image: usize,
    min_mass: f64,
    rng: &mut R,
) -> Vec<StimulusPatch> {
    let mut out = Vec::with_capacity(per_image);
    if side == 0 || side > image.width() || side > image.height() {
        return out;
    }
    for _ in 0..10 * per_image {
        if out.len() == per_image {
            break;
        }
        let row = rng.gen_range(0..=image.height() - side);
        let col = rng.gen_range(0..=image.width() - side);
        let patch = image.patch(image_id, row, col, side);
        if patch.mass() >= min_mass {
            out.push(patch);
        }
    }
    out
}

pub fn sample_patches<R: Rng + ?Sized>(
    store: &ImageStore,
    side: usize,
    per_image: usize,
    min_mass: f64,
    split: Split,
    source: Source,
    rng: &mut R,
) -> Result<PatchDataset> {
    if per_image == 0 {
        return Err(Error::param("per_image must be at least 1"));
    }
    if let Some(img) = store
        .images
        .iter()
        .find(|img| side == 0 || side > img.width().min(img.height()))
    {
        return Err(Error::param(format!(
            "patch side {side} does not fit a {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let patches = store
        .iter()
        .flat_map(|(id, img)| sample_image_patches(img, id, side, per_image, min_mass, rng))
        .collect();
    Ok(PatchDataset {
        patches,
        side,
        split,
        source,
    })
}
