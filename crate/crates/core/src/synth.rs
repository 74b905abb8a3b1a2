//! Seeded generator of planted multi-scale structure on a lattice, and a
//! stratified train/test split.
//!
//! Every graph is an `H x W` 4-neighbour lattice with self-loops. Each node
//! carries one of two blob types, encoded one-hot plus Gaussian noise. A class
//! is a periodic two-type pattern at one cell size: class `c` uses
//! `blob_scales[c % len]` and pattern family `c / len` (checkerboard, then
//! stripes, then diagonal bands). All families on a period dividing the grid
//! hold both types in equal numbers, so classes differ only in arrangement.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledGraph;
use crate::error::{Error, Result};
use crate::graph::grid_graph;
use crate::rng::SeedTree;

/// Number of blob types (embedding width).
pub const BLOB_TYPES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub blob_scales: Vec<usize>,
    pub noise_sigma: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            height: 8,
            width: 8,
            classes: 4,
            blob_scales: vec![1, 4],
            noise_sigma: 0.1,
            samples_per_class: 40,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternFamily {
    Checkerboard,
    Stripes,
    Diagonal,
}

impl PatternFamily {
    const ALL: [PatternFamily; 3] = [Self::Checkerboard, Self::Stripes, Self::Diagonal];
}

/// Pattern family and cell size of class `class`.
pub fn class_pattern(spec: &SynthSpec, class: usize) -> Result<(PatternFamily, usize)> {
    let len = spec.blob_scales.len();
    let family = PatternFamily::ALL
        .get(class / len)
        .copied()
        .ok_or_else(|| {
            Error::InvalidSpec(format!(
                "{} classes need more than {} pattern families over {len} scales",
                spec.classes,
                PatternFamily::ALL.len()
            ))
        })?;
    Ok((family, spec.blob_scales[class % len]))
}

impl SynthSpec {
    pub fn nodes(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidSpec("grid dimensions must be positive".into()));
        }
        if self.classes == 0 {
            return Err(Error::InvalidSpec("classes must be at least 1".into()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidSpec("samples_per_class must be at least 1".into()));
        }
        if self.blob_scales.is_empty() {
            return Err(Error::InvalidSpec("blob_scales must not be empty".into()));
        }
        for &b in &self.blob_scales {
            if b == 0 || !self.height.is_multiple_of(b) || !self.width.is_multiple_of(b) {
                return Err(Error::InvalidSpec(format!(
                    "blob size {b} does not divide the {}x{} grid",
                    self.height, self.width
                )));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidSpec(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        class_pattern(self, self.classes - 1)?;
        Ok(())
    }
}

/// Blob type (0 or 1) of every node, row-major, for one random phase and
/// orientation of the pattern. Coordinates wrap around the grid.
pub fn plant(
    family: PatternFamily,
    cell: usize,
    height: usize,
    width: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let dr = rng.random_range(0..2 * cell);
    let dc = rng.random_range(0..2 * cell);
    let flip = rng.random_bool(0.5);
    let invert = rng.random_bool(0.5) as usize;
    let mut types = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let (a, b) = if flip { (c, r) } else { (r, c) };
            let (a, b) = (a + dr, b + dc);
            let t = match family {
                PatternFamily::Checkerboard => (a / cell + b / cell) % 2,
                PatternFamily::Stripes => (a / cell) % 2,
                PatternFamily::Diagonal => ((a + b) / cell) % 2,
            };
            types.push(t ^ invert);
        }
    }
    types
}

/// Generates `classes * samples_per_class` graphs, grouped by class.
pub fn generate(spec: &SynthSpec) -> Result<Vec<LabeledGraph>> {
    spec.validate()?;
    let root = SeedTree::new(spec.seed).child("synth");
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let n = spec.nodes();
    let mut out = Vec::with_capacity(spec.classes * spec.samples_per_class);
    for class in 0..spec.classes {
        let (family, cell) = class_pattern(spec, class)?;
        for i in 0..spec.samples_per_class {
            let mut rng = root.index(class as u64).index(i as u64).rng();
            let types = plant(family, cell, spec.height, spec.width, &mut rng);
            let emb = DMatrix::from_fn(n, BLOB_TYPES, |node, t| {
                let hot = if types[node] == t { 1.0 } else { 0.0 };
                if spec.noise_sigma > 0.0 {
                    hot + noise.sample(&mut rng)
                } else {
                    hot
                }
            });
            let g = grid_graph(spec.height, spec.width, true, emb)?;
            out.push(LabeledGraph::new(g, vec![class; n], class)?);
        }
    }
    Ok(out)
}

/// Stratified split: each class contributes `round(fraction * count)` items
/// (at least one to each side) to the training set.
pub fn split(
    data: &[LabeledGraph],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledGraph>, Vec<LabeledGraph>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let classes = data.iter().map(|d| d.graph_label + 1).max().unwrap_or(0);
    let root = SeedTree::new(seed).child("split");
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..classes {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].graph_label == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(Error::ClassTooSmall { class, count: idx.len() });
        }
        idx.shuffle(&mut root.index(class as u64).rng());
        let k = ((train_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        idx[..k].sort_unstable();
        idx[k..].sort_unstable();
        train.extend(idx[..k].iter().map(|&i| data[i].clone()));
        test.extend(idx[k..].iter().map(|&i| data[i].clone()));
    }
    Ok((train, test))
}
