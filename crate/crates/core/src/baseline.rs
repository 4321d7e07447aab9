//! K-means vector quantization over raw patch intensities.
//!
//! Lloyd's algorithm, initialized from `D` distinct random patches. A
//! cluster that empties out is reseeded with the point lying farthest from
//! its own centroid. Each patch reconstructs as its nearest centroid.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{parse_field, parse_matrix_text, write_rows};
use crate::reconstruction::ReconstructedPatch;
use crate::StimulusPatch;

const CODEBOOK_HEADER: &str = "KMEANS v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centroids: Vec<Vec<f64>>,
    pub iterations_run: usize,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_in(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        // strict: ties keep the lower index
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Within-cluster sum of squares of `points` under `assign`.
pub fn wcss<P: AsRef<[f64]>>(points: &[P], centroids: &[Vec<f64>], assign: &[usize]) -> f64 {
    points
        .iter()
        .zip(assign)
        .map(|(p, &k)| sq_dist(p.as_ref(), &centroids[k]))
        .sum()
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        nearest_in(&self.centroids, x).0
    }

    pub fn assign<P: AsRef<[f64]> + Sync>(&self, points: &[P]) -> Vec<usize> {
        points
            .par_iter()
            .map(|p| self.nearest(p.as_ref()))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let dim = self.centroids.first().map_or(0, Vec::len);
        let mut out = String::new();
        out.push_str(CODEBOOK_HEADER);
        out.push('\n');
        let _ = writeln!(
            out,
            "D={} N={} iterations={} converged={}",
            self.centroids.len(),
            dim,
            self.iterations_run,
            self.converged
        );
        write_rows(&mut out, self.centroids.iter().map(Vec::as_slice));
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let parsed = parse_matrix_text(text, CODEBOOK_HEADER, origin)?;
        let field = |k: &str| {
            parsed
                .fields
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::format(origin, format!("codebook header missing `{k}`")))
        };
        let d: usize = parse_field(field("D")?, "D")?;
        let n: usize = parse_field(field("N")?, "N")?;
        let iterations_run: usize = parse_field(field("iterations")?, "iterations")?;
        let converged: bool = parse_field(field("converged")?, "converged")?;
        if parsed.rows.len() != d || parsed.rows.iter().any(|r| r.len() != n) {
            return Err(Error::format(
                origin,
                format!("body is not a {d} x {n} matrix"),
            ));
        }
        Ok(Self {
            centroids: parsed.rows,
            iterations_run,
            converged,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

/// Per-iteration trace of a Lloyd run, for convergence checks.
#[derive(Debug, Clone, Default)]
pub struct LloydTrace {
    /// WCSS after each assignment step.
    pub wcss: Vec<f64>,
}

pub fn kmeans_train<P, R>(points: &[P], k: usize, max_iters: usize, rng: &mut R) -> Result<Codebook>
where
    P: AsRef<[f64]> + Sync,
    R: Rng + ?Sized,
{
    kmeans_train_traced(points, k, max_iters, rng).map(|(c, _)| c)
}

pub fn kmeans_train_traced<P, R>(
    points: &[P],
    k: usize,
    max_iters: usize,
    rng: &mut R,
) -> Result<(Codebook, LloydTrace)>
where
    P: AsRef<[f64]> + Sync,
    R: Rng + ?Sized,
{
    if k == 0 {
        return Err(Error::param("need at least one centroid"));
    }
    if points.len() < k {
        return Err(Error::input(format!(
            "k-means with {k} centroids needs at least {k} points, got {}",
            points.len()
        )));
    }
    let dim = points[0].as_ref().len();
    if points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::input("points have differing dimensions"));
    }

    let mut centroids: Vec<Vec<f64>> = sample(rng, points.len(), k)
        .into_iter()
        .map(|i| points[i].as_ref().to_vec())
        .collect();
    let mut assign: Vec<usize> = vec![usize::MAX; points.len()];
    let mut trace = LloydTrace::default();
    let mut converged = false;
    let mut iterations_run = 0;

    while iterations_run < max_iters {
        iterations_run += 1;
        let next: Vec<(usize, f64)> = points
            .par_iter()
            .map(|p| nearest_in(&centroids, p.as_ref()))
            .collect();
        let changed = next.iter().zip(&assign).any(|(n, &a)| n.0 != a);
        for (a, n) in assign.iter_mut().zip(&next) {
            *a = n.0;
        }
        trace.wcss.push(next.iter().map(|n| n.1).sum());
        if !changed {
            converged = true;
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            sizes[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.as_ref()) {
                *s += x;
            }
        }
        let mut taken = vec![false; points.len()];
        for c in 0..k {
            if sizes[c] > 0 {
                let inv = 1.0 / sizes[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s * inv).collect();
            }
        }
        for c in (0..k).filter(|&c| sizes[c] == 0) {
            let far = (0..points.len())
                .filter(|&i| !taken[i])
                .max_by(|&i, &j| {
                    let di = sq_dist(points[i].as_ref(), &centroids[assign[i]]);
                    let dj = sq_dist(points[j].as_ref(), &centroids[assign[j]]);
                    di.total_cmp(&dj).then(j.cmp(&i))
                })
                .expect("at least k points");
            taken[far] = true;
            centroids[c] = points[far].as_ref().to_vec();
        }
    }

    Ok((
        Codebook {
            centroids,
            iterations_run,
            converged,
        },
        trace,
    ))
}

pub fn kmeans_reconstruct(codebook: &Codebook, patch: &StimulusPatch) -> ReconstructedPatch {
    ReconstructedPatch {
        intensities: codebook.centroids[codebook.nearest(patch.intensities())].clone(),
        source: Some(patch.provenance()),
    }
}
