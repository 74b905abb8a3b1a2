//! Graph construction from images: patch embedding, dot-product similarity
//! between projected node embeddings, and the percentile edge rule.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::DimensionMismatch {
                context: "rgb buffer length",
                expected: height * width * 3,
                found: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for r in 0..height {
            for c in 0..width {
                data.extend_from_slice(&f(r, c));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Patch features on an `height x width` grid; node id is `row * width + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    values: DMatrix<f64>,
}

impl FeatureGrid {
    pub fn new(height: usize, width: usize, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != height * width {
            return Err(Error::DimensionMismatch {
                context: "feature grid rows",
                expected: height * width,
                found: values.nrows(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("feature grid contains non-finite values".into()));
        }
        Ok(Self { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n(&self) -> usize {
        self.height * self.width
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// Maps an image to a feature grid with one node per `patch x patch` block.
pub trait PatchEmbedder {
    fn channels(&self) -> usize;
    fn embed(&self, image: &RgbImage, patch: usize) -> Result<FeatureGrid>;
}

/// Statistics-based stand-in for a convolutional backbone: per-patch channel
/// means, channel standard deviations and a 2x2 average-pooled luminance
/// block, all on the `[0, 1]` intensity scale (10 channels).
#[derive(Debug, Clone, Copy, Default)]
pub struct StatsEmbedder;

impl StatsEmbedder {
    pub const CHANNELS: usize = 10;
}

fn halves(start: usize, len: usize) -> [std::ops::Range<usize>; 2] {
    let mid = start + len / 2;
    if mid == start {
        // a one-pixel side cannot be split; both halves see the whole side
        [start..start + len, start..start + len]
    } else {
        [start..mid, mid..start + len]
    }
}

impl PatchEmbedder for StatsEmbedder {
    fn channels(&self) -> usize {
        Self::CHANNELS
    }

    fn embed(&self, image: &RgbImage, patch: usize) -> Result<FeatureGrid> {
        let (h, w) = (image.height(), image.width());
        if patch == 0 || h == 0 || w == 0 || h % patch != 0 || w % patch != 0 {
            return Err(Error::NotDivisible {
                height: h,
                width: w,
                patch,
            });
        }
        let (gh, gw) = (h / patch, w / patch);
        let mut values = DMatrix::zeros(gh * gw, Self::CHANNELS);
        let count = (patch * patch) as f64;
        for gr in 0..gh {
            for gc in 0..gw {
                let node = gr * gw + gc;
                let (r0, c0) = (gr * patch, gc * patch);
                let mut sum = [0.0f64; 3];
                let mut sum_sq = [0.0f64; 3];
                for r in r0..r0 + patch {
                    for c in c0..c0 + patch {
                        let px = image.pixel(r, c);
                        for ch in 0..3 {
                            let v = px[ch] as f64 / 255.0;
                            sum[ch] += v;
                            sum_sq[ch] += v * v;
                        }
                    }
                }
                for ch in 0..3 {
                    let mean = sum[ch] / count;
                    values[(node, ch)] = mean;
                    values[(node, 3 + ch)] = (sum_sq[ch] / count - mean * mean).max(0.0).sqrt();
                }
                let rows = halves(r0, patch);
                let cols = halves(c0, patch);
                for (qi, rr) in rows.iter().enumerate() {
                    for (qj, cr) in cols.iter().enumerate() {
                        let mut lum = 0.0;
                        let mut k = 0usize;
                        for r in rr.clone() {
                            for c in cr.clone() {
                                let [red, green, blue] = image.pixel(r, c);
                                lum += (0.299 * red as f64 + 0.587 * green as f64 + 0.114 * blue as f64) / 255.0;
                                k += 1;
                            }
                        }
                        values[(node, 6 + 2 * qi + qj)] = lum / k as f64;
                    }
                }
            }
        }
        FeatureGrid::new(gh, gw, values)
    }
}

/// `patch_embed` with the default statistics embedder.
pub fn patch_embed(image: &RgbImage, patch: usize) -> Result<FeatureGrid> {
    StatsEmbedder.embed(image, patch)
}

/// Linear projections `theta(x) = theta_weight^T x` and `phi(x) = phi_weight^T x`
/// (1x1 convolutions on the feature grid).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityParams {
    pub theta_weight: DMatrix<f64>,
    pub phi_weight: DMatrix<f64>,
}

impl SimilarityParams {
    pub fn identity(channels: usize) -> Self {
        Self {
            theta_weight: DMatrix::identity(channels, channels),
            phi_weight: DMatrix::identity(channels, channels),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.theta_weight.nrows()
    }

    fn validate(&self) -> Result<()> {
        if self.theta_weight.shape() != self.phi_weight.shape() {
            return Err(Error::ShapeMismatch(format!(
                "theta projection is {:?} but phi projection is {:?}",
                self.theta_weight.shape(),
                self.phi_weight.shape()
            )));
        }
        if self
            .theta_weight
            .iter()
            .chain(self.phi_weight.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter("similarity weights must be finite".into()));
        }
        Ok(())
    }
}

/// Percentile edge rule; `alpha` in `(0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRule {
    alpha: f64,
}

impl EdgeRule {
    pub const DEFAULT_ALPHA: f64 = 99.0;

    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 100.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 100], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// 1-based nearest rank `ceil(alpha / 100 * count)`, at least 1.
    pub fn nearest_rank(&self, count: usize) -> usize {
        let x = self.alpha * count as f64 / 100.0;
        let rounded = x.round();
        let rank = if (x - rounded).abs() <= 1e-9 * x.max(1.0) {
            rounded
        } else {
            x.ceil()
        };
        (rank as usize).clamp(1, count.max(1))
    }
}

impl Default for EdgeRule {
    fn default() -> Self {
        Self {
            alpha: Self::DEFAULT_ALPHA,
        }
    }
}

/// `out[i][j] = theta(x_i) . phi(x_j)`; not symmetric in general.
pub fn similarity_matrix(grid: &FeatureGrid, params: &SimilarityParams) -> Result<DMatrix<f64>> {
    similarity_of(grid.values(), params)
}

pub(crate) fn similarity_of(x: &DMatrix<f64>, params: &SimilarityParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    if params.input_dim() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "similarity projection input",
            expected: params.input_dim(),
            found: x.ncols(),
        });
    }
    let theta = x * &params.theta_weight;
    let phi = x * &params.phi_weight;
    Ok(theta * phi.transpose())
}

/// `Q_alpha` over all `N^2` entries (diagonal included), nearest rank.
pub fn percentile_threshold(sim: &DMatrix<f64>, rule: EdgeRule) -> f64 {
    let mut values: Vec<f64> = sim.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values[rule.nearest_rank(values.len()) - 1]
}

/// Binary symmetric adjacency: `e_ij = 1` iff `i == j` or `sim[i][j] >= Q_alpha`,
/// OR-symmetrized.
pub fn threshold_edges(sim: &DMatrix<f64>, rule: EdgeRule) -> Result<DMatrix<f64>> {
    let n = sim.nrows();
    if sim.ncols() != n || n == 0 {
        return Err(Error::ShapeMismatch(format!(
            "similarity must be square and non-empty, got {:?}",
            sim.shape()
        )));
    }
    if sim.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("similarity matrix contains non-finite values".into()));
    }
    let q = percentile_threshold(sim, rule);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j || sim[(i, j)] >= q || sim[(j, i)] >= q {
            1.0
        } else {
            0.0
        }
    }))
}

/// Graph whose topology comes from the edge rule and whose embeddings are the
/// node features themselves.
pub fn graph_from_features(features: &DMatrix<f64>, params: &SimilarityParams, rule: EdgeRule) -> Result<Graph> {
    let sim = similarity_of(features, params)?;
    Graph::new(threshold_edges(&sim, rule)?, features.clone())
}

pub fn build_graph(grid: &FeatureGrid, params: &SimilarityParams, rule: EdgeRule) -> Result<Graph> {
    graph_from_features(grid.values(), params, rule)
}

pub fn build_graph_from_image(
    image: &RgbImage,
    patch: usize,
    embedder: &dyn PatchEmbedder,
    params: &SimilarityParams,
    rule: EdgeRule,
) -> Result<Graph> {
    build_graph(&embedder.embed(image, patch)?, params, rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_of(rows: &[&[f64]]) -> FeatureGrid {
        let c = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        FeatureGrid::new(rows.len(), 1, DMatrix::from_row_slice(rows.len(), c, &flat)).unwrap()
    }

    #[test]
    fn uniform_gray_gives_identical_embeddings() {
        let img = RgbImage::from_fn(32, 48, |_, _| [128, 128, 128]);
        let grid = patch_embed(&img, 16).unwrap();
        assert_eq!((grid.height(), grid.width(), grid.channels()), (2, 3, 10));
        let first = grid.values().row(0).into_owned();
        for r in grid.values().row_iter() {
            assert_eq!(r.into_owned(), first);
        }
        assert!((first[0] - 128.0 / 255.0).abs() < 1e-12);
        assert!(first[3].abs() < 1e-7);
    }

    #[test]
    fn patch_covering_whole_image_is_single_node() {
        let img = RgbImage::from_fn(16, 16, |r, c| [(r * 16) as u8, (c * 16) as u8, 7]);
        assert_eq!(patch_embed(&img, 16).unwrap().n(), 1);
        let img = RgbImage::from_fn(32, 32, |_, _| [0, 0, 0]);
        let g = patch_embed(&img, 16).unwrap();
        assert_eq!((g.height(), g.width(), g.n()), (2, 2, 4));
    }

    #[test]
    fn pooled_luminance_quadrants() {
        // top half white, bottom half black
        let img = RgbImage::from_fn(4, 4, |r, _| if r < 2 { [255, 255, 255] } else { [0, 0, 0] });
        let g = patch_embed(&img, 4).unwrap();
        let v = g.values().row(0);
        assert!((v[6] - 1.0).abs() < 1e-12 && (v[7] - 1.0).abs() < 1e-12);
        assert!(v[8].abs() < 1e-12 && v[9].abs() < 1e-12);
        assert!((v[3] - 0.5).abs() < 1e-12);
        // single-pixel patches fall back to the pixel itself
        let g1 = patch_embed(&img, 1).unwrap();
        assert_eq!(g1.n(), 16);
        assert!((g1.values()[(0, 9)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn not_divisible_is_rejected() {
        let img = RgbImage::from_fn(30, 32, |_, _| [0, 0, 0]);
        assert!(matches!(patch_embed(&img, 16), Err(Error::NotDivisible { .. })));
        assert!(patch_embed(&img, 0).is_err());
    }

    #[test]
    fn similarity_examples() {
        let grid = grid_of(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let sim = similarity_matrix(&grid, &SimilarityParams::identity(2)).unwrap();
        assert_eq!(sim, DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0]));

        let ortho = grid_of(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let sim = similarity_matrix(&ortho, &SimilarityParams::identity(2)).unwrap();
        assert_eq!(sim, DMatrix::identity(2, 2));

        let zero = SimilarityParams {
            theta_weight: DMatrix::zeros(2, 2),
            phi_weight: DMatrix::identity(2, 2),
        };
        assert_eq!(similarity_matrix(&grid, &zero).unwrap(), DMatrix::zeros(3, 3));

        let wrong = SimilarityParams::identity(3);
        assert!(matches!(
            similarity_matrix(&grid, &wrong),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn asymmetric_projections_give_asymmetric_similarity() {
        let grid = grid_of(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let params = SimilarityParams {
            theta_weight: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            phi_weight: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
        };
        let sim = similarity_matrix(&grid, &params).unwrap();
        assert_eq!(sim[(0, 1)], 1.0);
        assert_eq!(sim[(1, 0)], 0.0);
    }

    #[test]
    fn threshold_examples() {
        let sim = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0]);
        let a99 = threshold_edges(&sim, EdgeRule::new(99.0).unwrap()).unwrap();
        assert_eq!(a99, DMatrix::identity(3, 3));
        let a70 = threshold_edges(&sim, EdgeRule::new(70.0).unwrap()).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(a70, expected);

        let constant = DMatrix::from_element(4, 4, 0.3);
        for alpha in [1.0, 50.0, 100.0] {
            let a = threshold_edges(&constant, EdgeRule::new(alpha).unwrap()).unwrap();
            assert_eq!(a, DMatrix::from_element(4, 4, 1.0));
        }
    }

    #[test]
    fn alpha_100_keeps_only_maximum_pairs() {
        let sim = DMatrix::from_row_slice(3, 3, &[0.0, 0.2, 0.9, 0.1, 0.0, 0.3, 0.4, 0.5, 0.0]);
        let a = threshold_edges(&sim, EdgeRule::new(100.0).unwrap()).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(a, expected);
    }

    #[test]
    fn nearest_rank_is_exact_on_integer_products() {
        assert_eq!(EdgeRule::new(99.0).unwrap().nearest_rank(100), 99);
        assert_eq!(EdgeRule::new(70.0).unwrap().nearest_rank(9), 7);
        assert_eq!(EdgeRule::new(99.0).unwrap().nearest_rank(9), 9);
        assert_eq!(EdgeRule::new(0.001).unwrap().nearest_rank(9), 1);
        assert_eq!(EdgeRule::new(100.0).unwrap().nearest_rank(4096), 4096);
    }

    #[test]
    fn edge_rule_bounds() {
        assert!(EdgeRule::new(0.0).is_err());
        assert!(EdgeRule::new(100.5).is_err());
        assert!(EdgeRule::new(f64::NAN).is_err());
        assert_eq!(EdgeRule::default().alpha(), 99.0);
    }

    #[test]
    fn constant_image_builds_complete_graph() {
        let img = RgbImage::from_fn(48, 48, |_, _| [90, 30, 200]);
        let g = build_graph_from_image(
            &img,
            16,
            &StatsEmbedder,
            &SimilarityParams::identity(10),
            EdgeRule::default(),
        )
        .unwrap();
        assert_eq!(g.adjacency(), &DMatrix::from_element(9, 9, 1.0));
        assert_eq!(g.embedding_dim(), 10);
    }
}
