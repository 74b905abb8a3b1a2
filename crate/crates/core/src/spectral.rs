//! Spectral machinery on the normalized Laplacian: eigendecomposition, graph
//! Fourier convolution, heat-kernel wavelet bases (exact and Chebyshev), and
//! scale diagnostics.
//!
//! The wavelet basis at scale `s` is `Psi_s = U diag(exp(-s * lambda)) U^T`,
//! with inverse `U diag(exp(s * lambda)) U^T`. Both are symmetric, which the
//! layer backward passes rely on.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, LaplacianKind, LaplacianMatrix, SparseMatrix};

const EIGEN_MAX_ITER: usize = 10_000;
const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Eigenpairs of a symmetric matrix, eigenvalues ascending; column `i` of
/// `eigenvectors` pairs with `eigenvalues[i]`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.n() - 1]
    }

    /// `U diag(g(lambda)) U^T`.
    pub fn spectral_matrix(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= g(self.eigenvalues[j]);
        }
        &scaled * u.transpose()
    }
}

pub fn eigendecompose(l: &LaplacianMatrix) -> Result<SpectralDecomposition> {
    let m = l.matrix();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITER).ok_or_else(|| {
        Error::ConvergenceFailure {
            iterations: EIGEN_MAX_ITER,
            residual: off_diagonal_norm(m),
        }
    })?;

    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // sign convention: first non-negligible component positive
        if let Some(&lead) = col.iter().find(|v| v.abs() > 1e-12) {
            if lead < 0.0 {
                col.neg_mut();
            }
        }
        eigenvectors.set_column(dst, &col);
    }

    let sd = SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    };
    let residual = (sd.spectral_matrix(|x| x) - m).amax();
    if residual > RECONSTRUCTION_TOL * m.amax().max(1.0) {
        return Err(Error::ConvergenceFailure {
            iterations: EIGEN_MAX_ITER,
            residual,
        });
    }
    Ok(sd)
}

fn off_diagonal_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                acc += m[(i, j)] * m[(i, j)];
            }
        }
    }
    acc.sqrt()
}

/// Fourier-domain convolution `U diag(theta) U^T x`.
pub fn fourier_conv(sd: &SpectralDecomposition, theta: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let n = sd.n();
    check_len("fourier_conv theta", n, theta.len())?;
    check_len("fourier_conv signal", n, x.len())?;
    let u = sd.eigenvectors();
    let mut coeffs = u.tr_mul(x);
    coeffs.component_mul_assign(theta);
    Ok(u * coeffs)
}

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterSign {
    /// `exp(-s * lambda)`, the wavelet basis itself.
    Forward,
    /// `exp(+s * lambda)`, its inverse.
    Inverse,
}

impl FilterSign {
    fn exponent(self, s: f64) -> f64 {
        match self {
            FilterSign::Forward => -s,
            FilterSign::Inverse => s,
        }
    }
}

/// How wavelet operators are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OperatorMode {
    Exact,
    Chebyshev { k: usize },
}

impl Default for OperatorMode {
    fn default() -> Self {
        OperatorMode::Chebyshev { k: 2 }
    }
}

impl std::fmt::Display for OperatorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatorMode::Exact => write!(f, "exact"),
            OperatorMode::Chebyshev { k } => write!(f, "chebyshev({k})"),
        }
    }
}

/// Truncated Chebyshev expansion of `exp(-+s * lambda)` on `[0, spectrum_bound]`,
/// stored in the `c0/2 + sum_j c_j T_j` convention.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevFilter {
    scale: f64,
    sign: FilterSign,
    coefficients: Vec<f64>,
    spectrum_bound: f64,
}

impl ChebyshevFilter {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn spectrum_bound(&self) -> f64 {
        self.spectrum_bound
    }

    pub fn sign(&self) -> FilterSign {
        self.sign
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Evaluates the truncated series at a scalar `lambda`.
    pub fn evaluate(&self, lambda: f64) -> f64 {
        let x = 2.0 * lambda / self.spectrum_bound - 1.0;
        let c = &self.coefficients;
        let mut acc = 0.5 * c[0];
        let (mut t_prev, mut t_cur) = (1.0, x);
        for (j, cj) in c.iter().enumerate().skip(1) {
            if j > 1 {
                let t_next = 2.0 * x * t_cur - t_prev;
                t_prev = t_cur;
                t_cur = t_next;
            }
            acc += cj * t_cur;
        }
        acc
    }
}

/// Quadrature points used for a degree-`k` fit.
pub fn chebyshev_quadrature_points(k: usize) -> usize {
    (4 * (k + 1)).max(64)
}

pub fn chebyshev_fit(s: f64, sign: FilterSign, k: usize, lambda_max: f64) -> Result<ChebyshevFilter> {
    if k < 1 {
        return Err(Error::InvalidParameter("Chebyshev order must be at least 1".into()));
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "spectrum bound must be positive and finite, got {lambda_max}"
        )));
    }
    check_scale(s)?;
    let m = chebyshev_quadrature_points(k);
    let half = lambda_max / 2.0;
    let exponent = sign.exponent(s);
    let samples: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let theta = std::f64::consts::PI * (i as f64 + 0.5) / m as f64;
            let lambda = half * (theta.cos() + 1.0);
            (theta, (exponent * lambda).exp())
        })
        .collect();
    let coefficients: Vec<f64> = (0..=k)
        .map(|j| {
            2.0 / m as f64
                * samples
                    .iter()
                    .map(|&(theta, g)| g * (j as f64 * theta).cos())
                    .sum::<f64>()
        })
        .collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::ScaleOverflow { scale: s });
    }
    Ok(ChebyshevFilter {
        scale: s,
        sign,
        coefficients,
        spectrum_bound: lambda_max,
    })
}

fn check_scale(s: f64) -> Result<()> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale must be finite and >= 0, got {s}")));
    }
    Ok(())
}

/// Applies the filter through the three-term recurrence on the rescaled
/// operator `(2 / bound) L - I`. Exactly `k` sparse products per column.
pub(crate) fn chebyshev_apply_sparse(
    filter: &ChebyshevFilter,
    l: &SparseMatrix,
    x: &DMatrix<f64>,
    matvecs: &mut usize,
) -> DMatrix<f64> {
    let n = l.nrows();
    let c = &filter.coefficients;
    let alpha = 2.0 / filter.spectrum_bound;
    let mut out = DMatrix::zeros(n, x.ncols());
    let mut t_prev = vec![0.0; n];
    let mut t_cur = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    for (col_in, mut col_out) in x.column_iter().zip(out.column_iter_mut()) {
        t_prev.copy_from_slice(col_in.as_slice());
        for (o, &v) in col_out.iter_mut().zip(&t_prev) {
            *o = 0.5 * c[0] * v;
        }
        // T1 = L~ x
        l.mul_vec(&t_prev, &mut scratch);
        *matvecs += 1;
        for i in 0..n {
            t_cur[i] = alpha * scratch[i] - t_prev[i];
            col_out[i] += c[1] * t_cur[i];
        }
        for &cj in &c[2..] {
            l.mul_vec(&t_cur, &mut scratch);
            *matvecs += 1;
            for i in 0..n {
                let next = 2.0 * (alpha * scratch[i] - t_cur[i]) - t_prev[i];
                t_prev[i] = t_cur[i];
                t_cur[i] = next;
                col_out[i] += cj * next;
            }
        }
    }
    out
}

/// Checks that `bound` dominates the spectrum of `l`: free for normalized
/// Laplacians with `bound >= 2` or a Gershgorin bound, otherwise a short
/// power iteration whose Rayleigh quotient is a certified lower bound.
pub fn check_spectrum_bound(l: &LaplacianMatrix, bound: f64) -> Result<()> {
    if l.kind() == LaplacianKind::Normalized && bound >= 2.0 {
        return Ok(());
    }
    let sparse = l.sparse();
    if sparse.gershgorin_bound() <= bound {
        return Ok(());
    }
    let n = l.n();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let mut w = vec![0.0; n];
    let mut estimate = 0.0;
    for _ in 0..50 {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        sparse.mul_vec(&v, &mut w);
        estimate = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        std::mem::swap(&mut v, &mut w);
    }
    if estimate > bound * (1.0 + 1e-9) {
        return Err(Error::SpectrumBoundViolation { bound, estimate });
    }
    Ok(())
}

pub fn chebyshev_apply(filter: &ChebyshevFilter, l: &LaplacianMatrix, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut count = 0;
    chebyshev_apply_counted(filter, l, x, &mut count)
}

/// As [`chebyshev_apply`], adding the number of sparse matrix-vector products
/// performed to `matvecs`.
pub fn chebyshev_apply_counted(
    filter: &ChebyshevFilter,
    l: &LaplacianMatrix,
    x: &DMatrix<f64>,
    matvecs: &mut usize,
) -> Result<DMatrix<f64>> {
    check_len("chebyshev_apply rows", l.n(), x.nrows())?;
    check_spectrum_bound(l, filter.spectrum_bound)?;
    Ok(chebyshev_apply_sparse(filter, l.sparse(), x, matvecs))
}

#[derive(Debug, Clone)]
enum WaveletRepr {
    Exact {
        forward: DMatrix<f64>,
        inverse: DMatrix<f64>,
    },
    Chebyshev {
        forward: ChebyshevFilter,
        inverse: ChebyshevFilter,
        laplacian: Arc<SparseMatrix>,
    },
}

/// `(Psi_s, Psi_s^{-1})` at one scale, either materialized or applied through
/// independent Chebyshev expansions of the two kernels.
#[derive(Debug, Clone)]
pub struct WaveletOperatorPair {
    scale: f64,
    n: usize,
    repr: WaveletRepr,
}

pub fn wavelet_basis_exact(sd: &SpectralDecomposition, s: f64) -> Result<WaveletOperatorPair> {
    check_scale(s)?;
    if !(s * sd.lambda_max()).exp().is_finite() {
        return Err(Error::ScaleOverflow { scale: s });
    }
    let (forward, inverse) = if s == 0.0 {
        // U U^T is the identity up to rounding; use it exactly
        let eye = DMatrix::identity(sd.n(), sd.n());
        (eye.clone(), eye)
    } else {
        (
            sd.spectral_matrix(|l| (-s * l).exp()),
            sd.spectral_matrix(|l| (s * l).exp()),
        )
    };
    Ok(WaveletOperatorPair {
        scale: s,
        n: sd.n(),
        repr: WaveletRepr::Exact { forward, inverse },
    })
}

/// Chebyshev-approximated pair of order `k` with spectrum bound `lambda_max`.
pub fn wavelet_basis_chebyshev(
    l: &LaplacianMatrix,
    s: f64,
    k: usize,
    lambda_max: f64,
) -> Result<WaveletOperatorPair> {
    check_spectrum_bound(l, lambda_max)?;
    let forward = chebyshev_fit(s, FilterSign::Forward, k, lambda_max)?;
    let inverse = chebyshev_fit(s, FilterSign::Inverse, k, lambda_max)?;
    Ok(WaveletOperatorPair {
        scale: s,
        n: l.n(),
        repr: WaveletRepr::Chebyshev {
            forward,
            inverse,
            laplacian: Arc::new(l.sparse().clone()),
        },
    })
}

/// Bound used to rescale normalized Laplacians for the Chebyshev path.
pub const NORMALIZED_SPECTRUM_BOUND: f64 = 2.0;

/// Builds the operator pair for `mode`, eigendecomposing only in exact mode.
pub fn wavelet_pair(l: &LaplacianMatrix, s: f64, mode: OperatorMode) -> Result<WaveletOperatorPair> {
    match mode {
        OperatorMode::Exact => wavelet_basis_exact(&eigendecompose(l)?, s),
        OperatorMode::Chebyshev { k } => wavelet_basis_chebyshev(l, s, k, NORMALIZED_SPECTRUM_BOUND),
    }
}

impl WaveletOperatorPair {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> OperatorMode {
        match &self.repr {
            WaveletRepr::Exact { .. } => OperatorMode::Exact,
            WaveletRepr::Chebyshev { forward, .. } => OperatorMode::Chebyshev { k: forward.order() },
        }
    }

    /// `Psi_s x` (inverse wavelet transform).
    pub fn apply_forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len("wavelet operator rows", self.n, x.nrows())?;
        Ok(match &self.repr {
            WaveletRepr::Exact { forward, .. } => forward * x,
            WaveletRepr::Chebyshev {
                forward, laplacian, ..
            } => chebyshev_apply_sparse(forward, laplacian, x, &mut 0),
        })
    }

    /// `Psi_s^{-1} x` (wavelet transform).
    pub fn apply_inverse(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len("wavelet operator rows", self.n, x.nrows())?;
        Ok(match &self.repr {
            WaveletRepr::Exact { inverse, .. } => inverse * x,
            WaveletRepr::Chebyshev {
                inverse, laplacian, ..
            } => chebyshev_apply_sparse(inverse, laplacian, x, &mut 0),
        })
    }

    /// Materialized `Psi_s`.
    pub fn forward_matrix(&self) -> DMatrix<f64> {
        match &self.repr {
            WaveletRepr::Exact { forward, .. } => forward.clone(),
            WaveletRepr::Chebyshev { .. } => self
                .apply_forward(&DMatrix::identity(self.n, self.n))
                .expect("identity has matching rows"),
        }
    }

    /// Materialized `Psi_s^{-1}`.
    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        match &self.repr {
            WaveletRepr::Exact { inverse, .. } => inverse.clone(),
            WaveletRepr::Chebyshev { .. } => self
                .apply_inverse(&DMatrix::identity(self.n, self.n))
                .expect("identity has matching rows"),
        }
    }

    /// Wavelet `psi_{s,center}`, i.e. column `center` of `Psi_s`.
    pub fn wavelet(&self, center: usize) -> Result<DVector<f64>> {
        if center >= self.n {
            return Err(Error::InvalidParameter(format!(
                "center {center} out of range for {} nodes",
                self.n
            )));
        }
        Ok(match &self.repr {
            WaveletRepr::Exact { forward, .. } => forward.column(center).into_owned(),
            WaveletRepr::Chebyshev { .. } => {
                let mut e = DMatrix::zeros(self.n, 1);
                e[(center, 0)] = 1.0;
                self.apply_forward(&e)?.column(0).into_owned()
            }
        })
    }
}

/// Wavelet transform `x^ = Psi_s^{-1} x`.
pub fn wavelet_transform(pair: &WaveletOperatorPair, x: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(pair.apply_inverse(&DMatrix::from_column_slice(x.len(), 1, x.as_slice()))?.column(0).into_owned())
}

/// Inverse wavelet transform `x = Psi_s x^`.
pub fn inverse_wavelet_transform(pair: &WaveletOperatorPair, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(pair
        .apply_forward(&DMatrix::from_column_slice(coeffs.len(), 1, coeffs.as_slice()))?
        .column(0)
        .into_owned())
}

/// Column-wise `Psi_s diag(f) Psi_s^{-1} x`.
pub fn wavelet_conv(pair: &WaveletOperatorPair, f_diag: &DVector<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_len("wavelet_conv kernel", pair.n(), f_diag.len())?;
    let mut mid = pair.apply_inverse(x)?;
    scale_rows(&mut mid, f_diag);
    pair.apply_forward(&mid)
}

pub(crate) fn scale_rows(m: &mut DMatrix<f64>, d: &DVector<f64>) {
    for mut col in m.column_iter_mut() {
        col.component_mul_assign(d);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRange {
    pub s_min: f64,
    pub s_max: f64,
}

/// Smallest eigenvalue treated as nonzero.
pub const NONZERO_EIGENVALUE_TOL: f64 = 1e-9;

/// `s_max = -ln(eta) / sqrt(l2 * lN)` and `s_min = -ln(gamma) / sqrt(l2 * lN)`,
/// with `l2` the smallest nonzero eigenvalue.
pub fn scale_range_heuristic(sd: &SpectralDecomposition, eta: f64, gamma: f64) -> Result<ScaleRange> {
    for (name, v) in [("eta", eta), ("gamma", gamma)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    let lambda_2 = sd
        .eigenvalues()
        .iter()
        .copied()
        .find(|&l| l > NONZERO_EIGENVALUE_TOL)
        .ok_or(Error::DegenerateSpectrum {
            tolerance: NONZERO_EIGENVALUE_TOL,
        })?;
    let denom = (lambda_2 * sd.lambda_max()).sqrt();
    Ok(ScaleRange {
        s_min: -gamma.ln() / denom,
        s_max: -eta.ln() / denom,
    })
}

/// Nodes `j` with `|Psi_s[j][center]| > threshold`, ascending.
pub fn receptive_field(pair: &WaveletOperatorPair, center: usize, threshold: f64) -> Result<Vec<usize>> {
    let psi = pair.wavelet(center)?;
    Ok(psi
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > threshold)
        .map(|(j, _)| j)
        .collect())
}

/// Threshold at which wavelet support sizes are reported.
pub const SUPPORT_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletSummary {
    pub scale: f64,
    pub center: usize,
    #[serde(rename = "support_size_at_1e-3")]
    pub support_size: usize,
    /// Fraction of `sum_j |psi(j)|` on nodes within one hop of the center.
    pub mass_within_1hop: f64,
    pub mass_within_2hop: f64,
}

/// Fraction of absolute wavelet mass within `radius` hops of `center`.
pub fn mass_within_hops(g: &Graph, psi: &DVector<f64>, center: usize, radius: usize) -> f64 {
    let dist = g.hop_distances(center);
    let total: f64 = psi.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let inside: f64 = psi
        .iter()
        .zip(&dist)
        .filter(|(_, d)| matches!(d, Some(d) if *d <= radius))
        .map(|(v, _)| v.abs())
        .sum();
    inside / total
}

pub fn wavelet_summary(g: &Graph, pair: &WaveletOperatorPair, center: usize) -> Result<WaveletSummary> {
    let psi = pair.wavelet(center)?;
    Ok(WaveletSummary {
        scale: pair.scale(),
        center,
        support_size: psi.iter().filter(|v| v.abs() > SUPPORT_THRESHOLD).count(),
        mass_within_1hop: mass_within_hops(g, &psi, center, 1),
        mass_within_2hop: mass_within_hops(g, &psi, center, 2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{grid_graph, normalized_laplacian, path_graph};
    use approx::assert_abs_diff_eq;

    fn k2() -> Graph {
        Graph::from_edges(2, &[(0, 1, 1.0)], DMatrix::zeros(2, 1)).unwrap()
    }

    fn decompose(g: &Graph) -> SpectralDecomposition {
        eigendecompose(&normalized_laplacian(g).unwrap()).unwrap()
    }

    #[test]
    fn k2_eigenpairs() {
        let sd = decompose(&k2());
        assert_abs_diff_eq!(sd.eigenvalues()[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sd.eigenvalues()[1], 2.0, epsilon = 1e-12);
        let r = 1.0 / 2f64.sqrt();
        let u = sd.eigenvectors();
        assert_abs_diff_eq!(u[(0, 0)], r, epsilon = 1e-12);
        assert_abs_diff_eq!(u[(1, 0)], r, epsilon = 1e-12);
        assert_abs_diff_eq!(u[(0, 1)], r, epsilon = 1e-12);
        assert_abs_diff_eq!(u[(1, 1)], -r, epsilon = 1e-12);
    }

    #[test]
    fn one_by_one() {
        let l = LaplacianMatrix::from_symmetric(DMatrix::zeros(1, 1)).unwrap();
        let sd = eigendecompose(&l).unwrap();
        assert_eq!(sd.eigenvalues()[0], 0.0);
        assert_eq!(sd.eigenvectors()[(0, 0)], 1.0);
    }

    #[test]
    fn fourier_conv_examples() {
        let g = grid_graph(3, 3, false, DMatrix::zeros(9, 1)).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let sd = eigendecompose(&l).unwrap();
        let x = DVector::from_fn(9, |i, _| (i as f64).cos());
        let same = fourier_conv(&sd, &DVector::from_element(9, 1.0), &x).unwrap();
        assert!((same - &x).amax() < 1e-10);
        let lx = fourier_conv(&sd, sd.eigenvalues(), &x).unwrap();
        assert!((lx - l.matrix() * &x).amax() < 1e-8);

        let sd2 = decompose(&k2());
        let out = fourier_conv(&sd2, &DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![1.0, 0.0]))
            .unwrap();
        assert_abs_diff_eq!(out[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 0.5, epsilon = 1e-12);

        assert!(matches!(
            fourier_conv(&sd2, &DVector::zeros(3), &DVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn k2_wavelet_closed_form() {
        let pair = wavelet_basis_exact(&decompose(&k2()), 1.0).unwrap();
        let e = (-2f64).exp();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0 + e, 1.0 - e, 1.0 - e, 1.0 + e]) * 0.5;
        assert!((pair.forward_matrix() - expected).amax() < 1e-12);

        // x^ = Psi^{-1} [1, 0] = first column of 1/2 [[1+e2, 1-e2], ...]
        let e2 = 2f64.exp();
        let xhat = wavelet_transform(&pair, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(xhat[0], 0.5 * (1.0 + e2), epsilon = 1e-12);
        assert_abs_diff_eq!(xhat[1], 0.5 * (1.0 - e2), epsilon = 1e-12);
    }

    #[test]
    fn zero_scale_is_identity() {
        let g = grid_graph(3, 3, true, DMatrix::zeros(9, 1)).unwrap();
        let pair = wavelet_basis_exact(&decompose(&g), 0.0).unwrap();
        let eye = DMatrix::<f64>::identity(9, 9);
        assert!((pair.forward_matrix() - &eye).amax() < 1e-10);
        assert!((pair.inverse_matrix() - &eye).amax() < 1e-10);

        let x = DVector::from_fn(9, |i, _| i as f64);
        assert!((wavelet_transform(&pair, &x).unwrap() - &x).amax() < 1e-10);
    }

    #[test]
    fn wavelet_conv_examples() {
        let g = grid_graph(3, 4, true, DMatrix::zeros(12, 1)).unwrap();
        let sd = decompose(&g);
        let x = DMatrix::from_fn(12, 3, |i, j| ((i * 3 + j) as f64).sin());
        let pair = wavelet_basis_exact(&sd, 1.5).unwrap();
        let ones = DVector::from_element(12, 1.0);
        assert!((wavelet_conv(&pair, &ones, &x).unwrap() - &x).amax() < 1e-6);
        assert!(wavelet_conv(&pair, &DVector::zeros(12), &x).unwrap().amax() < 1e-15);

        let f = DVector::from_fn(12, |i, _| 0.5 + i as f64);
        let zero = wavelet_basis_exact(&sd, 0.0).unwrap();
        let direct = DMatrix::from_diagonal(&f) * &x;
        assert_eq!(wavelet_conv(&zero, &f, &x).unwrap(), direct);

        assert!(wavelet_conv(&pair, &DVector::zeros(5), &x).is_err());
    }

    #[test]
    fn scale_overflow_and_negative_scale() {
        let sd = decompose(&k2());
        assert!(matches!(wavelet_basis_exact(&sd, 400.0), Err(Error::ScaleOverflow { .. })));
        assert!(wavelet_basis_exact(&sd, -1.0).is_err());
    }

    #[test]
    fn chebyshev_constant_filter() {
        let f = chebyshev_fit(0.0, FilterSign::Forward, 5, 2.0).unwrap();
        assert_abs_diff_eq!(f.coefficients()[0], 2.0, epsilon = 1e-12);
        for c in &f.coefficients()[1..] {
            assert_abs_diff_eq!(*c, 0.0, epsilon = 1e-12);
        }
        assert!(chebyshev_fit(1.0, FilterSign::Forward, 0, 2.0).is_err());
        assert!(chebyshev_fit(1.0, FilterSign::Forward, 2, 0.0).is_err());
    }

    #[test]
    fn chebyshev_zero_scale_apply_is_identity() {
        let g = grid_graph(3, 3, true, DMatrix::zeros(9, 1)).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let f = chebyshev_fit(0.0, FilterSign::Forward, 4, 2.0).unwrap();
        let x = DMatrix::from_fn(9, 2, |i, j| (i + 2 * j) as f64);
        assert!((chebyshev_apply(&f, &l, &x).unwrap() - &x).amax() < 1e-10);
    }

    #[test]
    fn chebyshev_counts_k_products_per_column() {
        let g = grid_graph(4, 4, true, DMatrix::zeros(16, 1)).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        for k in [1, 2, 5, 16] {
            let f = chebyshev_fit(1.0, FilterSign::Forward, k, 2.0).unwrap();
            let x = DMatrix::from_element(16, 3, 1.0);
            let mut count = 0;
            chebyshev_apply_counted(&f, &l, &x, &mut count).unwrap();
            assert_eq!(count, 3 * k);
        }
    }

    #[test]
    fn spectrum_bound_violation_detected() {
        let g = grid_graph(4, 4, false, DMatrix::zeros(16, 1)).unwrap();
        let l = normalized_laplacian(&g).unwrap();
        let f = chebyshev_fit(1.0, FilterSign::Forward, 3, 0.5).unwrap();
        let x = DMatrix::from_element(16, 1, 1.0);
        assert!(matches!(
            chebyshev_apply(&f, &l, &x),
            Err(Error::SpectrumBoundViolation { .. })
        ));
    }

    #[test]
    fn scale_heuristic_k2() {
        let r = scale_range_heuristic(&decompose(&k2()), 0.85, 0.95).unwrap();
        assert_abs_diff_eq!(r.s_min, -(0.95f64.ln()) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.s_max, -(0.85f64.ln()) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.s_min, 0.02565, epsilon = 1e-5);
        assert_abs_diff_eq!(r.s_max, 0.08126, epsilon = 1e-5);

        let same = scale_range_heuristic(&decompose(&k2()), 0.9, 0.9).unwrap();
        assert_eq!(same.s_min, same.s_max);
    }

    #[test]
    fn scale_heuristic_degenerate() {
        // self-loops only: disconnected and L = 0
        let g = Graph::from_edges(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)], DMatrix::zeros(3, 1)).unwrap();
        assert!(matches!(
            scale_range_heuristic(&decompose(&g), 0.85, 0.95),
            Err(Error::DegenerateSpectrum { .. })
        ));
    }

    #[test]
    fn receptive_field_examples() {
        let g = path_graph(9, DMatrix::zeros(9, 1)).unwrap();
        let sd = decompose(&g);
        let zero = wavelet_basis_exact(&sd, 0.0).unwrap();
        assert_eq!(receptive_field(&zero, 4, 0.5).unwrap(), vec![4]);

        let sizes: Vec<usize> = [1.0, 3.0, 5.0]
            .iter()
            .map(|&s| receptive_field(&wavelet_basis_exact(&sd, s).unwrap(), 4, 1e-3).unwrap().len())
            .collect();
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]), "{sizes:?}");

        let pair = wavelet_basis_exact(&sd, 1.0).unwrap();
        let peak = pair.wavelet(4).unwrap().amax();
        assert!(receptive_field(&pair, 4, peak + 1e-9).unwrap().is_empty());
        for s in [0.5, 1.0, 2.0, 5.0] {
            let p = wavelet_basis_exact(&sd, s).unwrap();
            assert!(receptive_field(&p, 4, 1e-6).unwrap().contains(&4));
        }
    }

    #[test]
    fn summary_of_zero_scale() {
        let g = path_graph(9, DMatrix::zeros(9, 1)).unwrap();
        let pair = wavelet_basis_exact(&decompose(&g), 0.0).unwrap();
        let s = wavelet_summary(&g, &pair, 4).unwrap();
        assert_eq!(s.support_size, 1);
        assert_abs_diff_eq!(s.mass_within_1hop, 1.0, epsilon = 1e-12);
    }
}
