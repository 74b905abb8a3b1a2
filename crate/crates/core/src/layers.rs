//! GWNN and GCN layers with hand-written backward passes.
//!
//! A GWNN layer computes `sigma(Psi_s diag(f) Psi_s^{-1} X W)`: a feature
//! transformation followed by a wavelet-domain convolution whose diagonal
//! kernel `f` is shared by every output channel.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{degree_matrix, normalized_laplacian, Graph};
use crate::spectral::{scale_rows, wavelet_pair, OperatorMode, WaveletOperatorPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    None,
}

impl Activation {
    pub fn apply(self, mut z: DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Relu => {
                z.apply(|v| *v = v.max(0.0));
                z
            }
            Activation::Softmax => softmax_rows(z),
            Activation::None => z,
        }
    }

    /// Gradient w.r.t. the pre-activation given the activation output `y`.
    pub fn backward(self, y: &DMatrix<f64>, grad: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Relu => grad.zip_map(y, |g, v| if v > 0.0 { g } else { 0.0 }),
            Activation::Softmax => {
                let mut out = grad.component_mul(y);
                for i in 0..y.nrows() {
                    let dot: f64 = out.row(i).sum();
                    for c in 0..y.ncols() {
                        out[(i, c)] -= y[(i, c)] * dot;
                    }
                }
                out
            }
            Activation::None => grad.clone(),
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(mut z: DMatrix<f64>) -> DMatrix<f64> {
    for i in 0..z.nrows() {
        let max = z.row(i).max();
        let mut sum = 0.0;
        for c in 0..z.ncols() {
            let e = (z[(i, c)] - max).exp();
            z[(i, c)] = e;
            sum += e;
        }
        for c in 0..z.ncols() {
            z[(i, c)] /= sum;
        }
    }
    z
}

pub fn softmax(v: &DVector<f64>) -> DVector<f64> {
    let max = v.max();
    let e = v.map(|x| (x - max).exp());
    let sum = e.sum();
    e / sum
}

/// Uniform fan-in initialization `U(-sqrt(6 / p), sqrt(6 / p))` for a `p x q` weight.
pub fn init_weight<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let bound = (6.0 / rows as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwnnLayerParams {
    /// `p x q` feature transformation.
    pub weight: DMatrix<f64>,
    /// Diagonal of the wavelet-domain kernel, one entry per node.
    pub kernel: DVector<f64>,
    pub activation: Activation,
}

impl GwnnLayerParams {
    pub fn new<R: Rng>(input: usize, output: usize, nodes: usize, activation: Activation, rng: &mut R) -> Self {
        Self {
            weight: init_weight(input, output, rng),
            kernel: DVector::from_element(nodes, 1.0),
            activation,
        }
    }

    fn check(&self, pair: &WaveletOperatorPair, x: &DMatrix<f64>) -> Result<()> {
        if self.kernel.len() != pair.n() {
            return Err(Error::DimensionMismatch {
                context: "kernel length vs node count",
                expected: pair.n(),
                found: self.kernel.len(),
            });
        }
        if x.nrows() != pair.n() {
            return Err(Error::DimensionMismatch {
                context: "layer input rows",
                expected: pair.n(),
                found: x.nrows(),
            });
        }
        if x.ncols() != self.weight.nrows() {
            return Err(Error::DimensionMismatch {
                context: "layer input width",
                expected: self.weight.nrows(),
                found: x.ncols(),
            });
        }
        Ok(())
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    input: DMatrix<f64>,
    /// `Psi_s^{-1} X W` (GWNN only).
    wavelet_coeffs: Option<DMatrix<f64>>,
    output: DMatrix<f64>,
}

impl LayerTrace {
    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }
}

pub fn gwnn_layer_forward(
    pair: &WaveletOperatorPair,
    params: &GwnnLayerParams,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    Ok(gwnn_layer_forward_traced(pair, params, x)?.output)
}

pub fn gwnn_layer_forward_traced(
    pair: &WaveletOperatorPair,
    params: &GwnnLayerParams,
    x: &DMatrix<f64>,
) -> Result<LayerTrace> {
    params.check(pair, x)?;
    let transformed = x * &params.weight;
    let coeffs = pair.apply_inverse(&transformed)?;
    let mut filtered = coeffs.clone();
    scale_rows(&mut filtered, &params.kernel);
    let output = params.activation.apply(pair.apply_forward(&filtered)?);
    Ok(LayerTrace {
        input: x.clone(),
        wavelet_coeffs: Some(coeffs),
        output,
    })
}

pub struct GwnnLayerGrads {
    pub input: DMatrix<f64>,
    pub weight: DMatrix<f64>,
    pub kernel: DVector<f64>,
}

/// Both wavelet operators are symmetric, so their adjoints are themselves.
pub fn gwnn_layer_backward(
    pair: &WaveletOperatorPair,
    params: &GwnnLayerParams,
    trace: &LayerTrace,
    grad_output: &DMatrix<f64>,
) -> Result<GwnnLayerGrads> {
    let coeffs = trace
        .wavelet_coeffs
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("trace was not produced by a GWNN layer".into()))?;
    let grad_pre = params.activation.backward(&trace.output, grad_output);
    let grad_filtered = pair.apply_forward(&grad_pre)?;
    let kernel = DVector::from_fn(params.kernel.len(), |i, _| {
        grad_filtered.row(i).dot(&coeffs.row(i))
    });
    let mut grad_coeffs = grad_filtered;
    scale_rows(&mut grad_coeffs, &params.kernel);
    let grad_transformed = pair.apply_inverse(&grad_coeffs)?;
    Ok(GwnnLayerGrads {
        input: &grad_transformed * params.weight.transpose(),
        weight: trace.input.transpose() * &grad_transformed,
        kernel,
    })
}

/// Three-layer GWNN at one scale: relu, relu, softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct GwnnNetwork {
    pub layers: Vec<GwnnLayerParams>,
    pub scale: f64,
    pub mode: OperatorMode,
}

/// Activation schedule: relu on every layer but the last, softmax on the last.
fn activation_for(layer: usize, count: usize) -> Activation {
    if layer + 1 == count {
        Activation::Softmax
    } else {
        Activation::Relu
    }
}

impl GwnnNetwork {
    /// `dims = [C1, hidden..., C2]`.
    pub fn new<R: Rng>(dims: &[usize], nodes: usize, scale: f64, mode: OperatorMode, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidParameter("network needs at least input and output dims".into()));
        }
        let count = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| GwnnLayerParams::new(w[0], w[1], nodes, activation_for(i, count), rng))
            .collect();
        Ok(Self { layers, scale, mode })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].weight.nrows()];
        d.extend(self.layers.iter().map(|l| l.weight.ncols()));
        d
    }

    pub fn nodes(&self) -> usize {
        self.layers[0].kernel.len()
    }

    /// Wavelet operators for this network's scale and mode on `g`.
    pub fn operators(&self, g: &Graph) -> Result<WaveletOperatorPair> {
        wavelet_pair(&normalized_laplacian(g)?, self.scale, self.mode)
    }

    pub fn forward_traced(&self, pair: &WaveletOperatorPair, x: &DMatrix<f64>) -> Result<Vec<LayerTrace>> {
        let mut traces: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = traces.last().map_or(x, |t| &t.output);
            let trace = gwnn_layer_forward_traced(pair, layer, input)?;
            traces.push(trace);
        }
        Ok(traces)
    }

    pub fn forward_with(&self, pair: &WaveletOperatorPair, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut traces = self.forward_traced(pair, x)?;
        Ok(traces.pop().expect("at least one layer").output)
    }

    /// Returns `(weight grads, kernel grads)` per layer, given the gradient
    /// w.r.t. the final layer output.
    pub fn backward(
        &self,
        pair: &WaveletOperatorPair,
        traces: &[LayerTrace],
        grad_output: DMatrix<f64>,
    ) -> Result<Vec<(DMatrix<f64>, DVector<f64>)>> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut grad = grad_output;
        for (layer, trace) in self.layers.iter().zip(traces).rev() {
            let g = gwnn_layer_backward(pair, layer, trace, &grad)?;
            grads.push((g.weight, g.kernel));
            grad = g.input;
        }
        grads.reverse();
        Ok(grads)
    }
}

/// Node class probabilities (`N x C2`, row-stochastic) of a GWNN on `g`.
pub fn gwnn_forward(net: &GwnnNetwork, g: &Graph) -> Result<DMatrix<f64>> {
    if g.embedding_dim() != net.layers[0].weight.nrows() {
        return Err(Error::DimensionMismatch {
            context: "graph embedding width vs first layer",
            expected: net.layers[0].weight.nrows(),
            found: g.embedding_dim(),
        });
    }
    net.forward_with(&net.operators(g)?, g.embeddings())
}

/// Renormalized propagation `D~^{-1/2} (A + I) D~^{-1/2}`.
pub fn gcn_propagation(g: &Graph) -> DMatrix<f64> {
    let n = g.n();
    let a_tilde = g.adjacency() + DMatrix::<f64>::identity(n, n);
    let deg = degree_matrix(g).add_scalar(1.0);
    DMatrix::from_fn(n, n, |i, j| a_tilde[(i, j)] / (deg[i] * deg[j]).sqrt())
}

pub fn gcn_layer_forward(
    propagation: &DMatrix<f64>,
    weight: &DMatrix<f64>,
    activation: Activation,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    Ok(gcn_layer_forward_traced(propagation, weight, activation, x)?.output)
}

fn gcn_layer_forward_traced(
    propagation: &DMatrix<f64>,
    weight: &DMatrix<f64>,
    activation: Activation,
    x: &DMatrix<f64>,
) -> Result<LayerTrace> {
    if x.nrows() != propagation.nrows() {
        return Err(Error::DimensionMismatch {
            context: "layer input rows",
            expected: propagation.nrows(),
            found: x.nrows(),
        });
    }
    if x.ncols() != weight.nrows() {
        return Err(Error::DimensionMismatch {
            context: "layer input width",
            expected: weight.nrows(),
            found: x.ncols(),
        });
    }
    let output = activation.apply(propagation * (x * weight));
    Ok(LayerTrace {
        input: x.clone(),
        wavelet_coeffs: None,
        output,
    })
}

/// GCN baseline with the same relu/relu/softmax schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnNetwork {
    pub weights: Vec<DMatrix<f64>>,
}

impl GcnNetwork {
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidParameter("network needs at least input and output dims".into()));
        }
        Ok(Self {
            weights: dims.windows(2).map(|w| init_weight(w[0], w[1], rng)).collect(),
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.weights[0].nrows()];
        d.extend(self.weights.iter().map(|w| w.ncols()));
        d
    }

    pub fn forward_traced(&self, propagation: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<Vec<LayerTrace>> {
        let count = self.weights.len();
        let mut traces: Vec<LayerTrace> = Vec::with_capacity(count);
        for (i, w) in self.weights.iter().enumerate() {
            let input = traces.last().map_or(x, |t| &t.output);
            let trace = gcn_layer_forward_traced(propagation, w, activation_for(i, count), input)?;
            traces.push(trace);
        }
        Ok(traces)
    }

    pub fn forward_with(&self, propagation: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut traces = self.forward_traced(propagation, x)?;
        Ok(traces.pop().expect("at least one layer").output)
    }

    pub fn backward(
        &self,
        propagation: &DMatrix<f64>,
        traces: &[LayerTrace],
        grad_output: DMatrix<f64>,
    ) -> Vec<DMatrix<f64>> {
        let count = self.weights.len();
        let mut grads = Vec::with_capacity(count);
        let mut grad = grad_output;
        for (i, (w, trace)) in self.weights.iter().zip(traces).enumerate().rev() {
            let pre = activation_for(i, count).backward(&trace.output, &grad);
            let grad_transformed = propagation.transpose() * pre;
            grads.push(trace.input.transpose() * &grad_transformed);
            grad = grad_transformed * w.transpose();
        }
        grads.reverse();
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{grid_graph, path_graph};
    use crate::spectral::{eigendecompose, wavelet_basis_exact};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn exact_pair(g: &Graph, s: f64) -> WaveletOperatorPair {
        wavelet_basis_exact(&eigendecompose(&normalized_laplacian(g).unwrap()).unwrap(), s).unwrap()
    }

    fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn unit_kernel_reduces_to_feature_transform() {
        let mut rng = rng();
        let g = grid_graph(3, 3, true, DMatrix::zeros(9, 1)).unwrap();
        let x = random_matrix(9, 4, &mut rng);
        let mut params = GwnnLayerParams::new(4, 3, 9, Activation::None, &mut rng);
        let expected = &x * &params.weight;

        let zero = exact_pair(&g, 0.0);
        assert_eq!(gwnn_layer_forward(&zero, &params, &x).unwrap(), expected);
        for s in [0.5, 1.0, 2.0] {
            let out = gwnn_layer_forward(&exact_pair(&g, s), &params, &x).unwrap();
            assert!((out - &expected).amax() < 1e-6);
        }

        params.weight.fill(0.0);
        params.activation = Activation::Relu;
        let pair = exact_pair(&g, 1.0);
        assert!(gwnn_layer_forward(&pair, &params, &x).unwrap().amax() < 1e-12);
        params.activation = Activation::Softmax;
        let out = gwnn_layer_forward(&pair, &params, &x).unwrap();
        assert!(out.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn kernel_is_shared_across_channels() {
        let mut rng = rng();
        let g = grid_graph(2, 3, true, DMatrix::zeros(6, 1)).unwrap();
        let pair = exact_pair(&g, 1.0);
        let mut params = GwnnLayerParams::new(3, 4, 6, Activation::None, &mut rng);
        params.kernel = DVector::from_fn(6, |i, _| 0.3 + i as f64);
        let x = random_matrix(6, 3, &mut rng);
        let full = gwnn_layer_forward(&pair, &params, &x).unwrap();
        for c in 0..4 {
            let mut single = params.clone();
            single.weight = params.weight.columns(c, 1).into_owned();
            let col = gwnn_layer_forward(&pair, &single, &x).unwrap();
            assert!((col.column(0) - full.column(c)).amax() < 1e-12);
        }
    }

    #[test]
    fn layer_dimension_errors() {
        let mut rng = rng();
        let g = path_graph(4, DMatrix::zeros(4, 1)).unwrap();
        let pair = exact_pair(&g, 1.0);
        let params = GwnnLayerParams::new(3, 2, 5, Activation::Relu, &mut rng);
        assert!(gwnn_layer_forward(&pair, &params, &DMatrix::zeros(4, 3)).is_err());
        let params = GwnnLayerParams::new(3, 2, 4, Activation::Relu, &mut rng);
        assert!(gwnn_layer_forward(&pair, &params, &DMatrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn gwnn_forward_rows_are_distributions() {
        let mut rng = rng();
        let emb = random_matrix(9, 5, &mut rng);
        let g = grid_graph(3, 3, true, emb).unwrap();
        let net = GwnnNetwork::new(&[5, 8, 6, 3], 9, 1.0, OperatorMode::Chebyshev { k: 2 }, &mut rng).unwrap();
        let p = gwnn_forward(&net, &g).unwrap();
        for row in p.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn single_node_gwnn_is_an_mlp() {
        let mut rng = rng();
        let emb = random_matrix(1, 4, &mut rng);
        let g = Graph::from_edges(1, &[(0, 0, 1.0)], emb.clone()).unwrap();
        let mut net = GwnnNetwork::new(&[4, 5, 3, 2], 1, 1.3, OperatorMode::Exact, &mut rng).unwrap();
        for l in &mut net.layers {
            l.kernel[0] = 0.7;
        }
        let p = gwnn_forward(&net, &g).unwrap();
        let mut h = emb;
        for l in &net.layers {
            h = l.activation.apply(&h * &l.weight * 0.7);
        }
        assert!((p - h).amax() < 1e-12);
    }

    #[test]
    fn gcn_propagation_examples() {
        let single = Graph::from_edges(1, &[(0, 0, 1.0)], DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(gcn_propagation(&single), DMatrix::from_element(1, 1, 1.0));
        let k2 = Graph::from_edges(2, &[(0, 1, 1.0)], DMatrix::zeros(2, 1)).unwrap();
        assert!((gcn_propagation(&k2) - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-15);
        let loops = Graph::new(DMatrix::identity(3, 3), DMatrix::zeros(3, 1)).unwrap();
        let p = gcn_propagation(&loops);
        assert!((&p - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);

        let mut rng = rng();
        let x = random_matrix(3, 2, &mut rng);
        let w = init_weight(2, 4, &mut rng);
        let out = gcn_layer_forward(&p, &w, Activation::Relu, &x).unwrap();
        assert!((out - Activation::Relu.apply(&x * &w)).amax() < 1e-12);
    }

    /// Central finite differences of `sum(output * probe)` against the
    /// analytic layer gradients.
    #[test]
    fn layer_gradients_match_finite_differences() {
        let mut rng = rng();
        let g = grid_graph(3, 4, true, DMatrix::zeros(12, 1)).unwrap();
        for (mode, act) in [
            (OperatorMode::Exact, Activation::Relu),
            (OperatorMode::Chebyshev { k: 3 }, Activation::Softmax),
            (OperatorMode::Exact, Activation::None),
        ] {
            let pair = wavelet_pair(&normalized_laplacian(&g).unwrap(), 0.8, mode).unwrap();
            let mut params = GwnnLayerParams::new(4, 3, 12, act, &mut rng);
            params.kernel = DVector::from_fn(12, |_, _| rng.random_range(0.5..1.5));
            let x = random_matrix(12, 4, &mut rng);
            let probe = random_matrix(12, 3, &mut rng);
            let objective = |p: &GwnnLayerParams, x: &DMatrix<f64>| {
                gwnn_layer_forward(&pair, p, x).unwrap().component_mul(&probe).sum()
            };
            let trace = gwnn_layer_forward_traced(&pair, &params, &x).unwrap();
            let grads = gwnn_layer_backward(&pair, &params, &trace, &probe).unwrap();
            let h = 1e-5;
            for idx in 0..params.weight.len() {
                let mut plus = params.clone();
                plus.weight[idx] += h;
                let mut minus = params.clone();
                minus.weight[idx] -= h;
                let fd = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                assert!((fd - grads.weight[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "weight {idx}");
            }
            for idx in 0..12 {
                let mut plus = params.clone();
                plus.kernel[idx] += h;
                let mut minus = params.clone();
                minus.kernel[idx] -= h;
                let fd = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                assert!((fd - grads.kernel[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "kernel {idx}");
            }
            for idx in 0..x.len() {
                let mut xp = x.clone();
                xp[idx] += h;
                let mut xm = x.clone();
                xm[idx] -= h;
                let fd = (objective(&params, &xp) - objective(&params, &xm)) / (2.0 * h);
                assert!((fd - grads.input[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "input {idx}");
            }
        }
    }
}
