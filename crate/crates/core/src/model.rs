//! Multi-branch assembly: parallel networks at different wavelet scales,
//! probability-map aggregation, graph readout and the combined loss
//! `lambda * L_node + L_graph`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::build::{graph_from_features, EdgeRule, SimilarityParams};
use crate::dataset::LabeledGraph;
use crate::error::{Error, Result};
use crate::graph::{normalized_laplacian, Graph};
use crate::layers::{gcn_propagation, softmax, GcnNetwork, GwnnNetwork, LayerTrace};
use crate::rng::SeedTree;
use crate::spectral::{
    eigendecompose, wavelet_basis_chebyshev, wavelet_basis_exact, OperatorMode, WaveletOperatorPair,
    NORMALIZED_SPECTRUM_BOUND,
};

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Gwnn,
    /// Single GCN branch replacing the wavelet branches.
    Gcn,
}

/// Where a model takes graph topology from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologySource {
    /// Use the adjacency stored with each input graph.
    Graph,
    /// Rebuild topology from embeddings with the model's similarity
    /// projections and percentile edge rule on every forward pass.
    Similarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub nodes: usize,
    pub scales: Vec<f64>,
    pub mode: OperatorMode,
    pub branch: BranchKind,
    pub readout_affine: bool,
    pub alpha: f64,
    pub topology: TopologySource,
}

impl ModelConfig {
    pub const DEFAULT_HIDDEN: [usize; 2] = [256, 128];
    pub const DEFAULT_SCALES: [f64; 3] = [0.5, 1.0, 1.5];

    pub fn new(input_dim: usize, classes: usize, nodes: usize) -> Self {
        Self {
            input_dim,
            hidden: Self::DEFAULT_HIDDEN.to_vec(),
            classes,
            nodes,
            scales: Self::DEFAULT_SCALES.to_vec(),
            mode: OperatorMode::default(),
            branch: BranchKind::Gwnn,
            readout_affine: false,
            alpha: EdgeRule::DEFAULT_ALPHA,
            topology: TopologySource::Graph,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(&self.hidden);
        d.push(self.classes);
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.classes == 0 || self.nodes == 0 {
            return Err(Error::InvalidParameter(
                "input_dim, classes and nodes must be positive".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden widths must be positive".into()));
        }
        if self.branch == BranchKind::Gwnn {
            if self.scales.is_empty() {
                return Err(Error::InvalidParameter("a model needs at least one branch scale".into()));
            }
            if self.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "scales must be positive and finite: {:?}",
                    self.scales
                )));
            }
            if self.scales.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "scales must be strictly increasing: {:?}",
                    self.scales
                )));
            }
        }
        if let OperatorMode::Chebyshev { k } = self.mode {
            if k == 0 {
                return Err(Error::InvalidParameter("Chebyshev order must be at least 1".into()));
            }
        }
        EdgeRule::new(self.alpha)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Branch {
    Gwnn(GwnnNetwork),
    Gcn(GcnNetwork),
}

/// Learned `C2 x C2` affine map applied to readout logits before the softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutAffine {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl ReadoutAffine {
    pub fn identity(classes: usize) -> Self {
        Self {
            weight: DMatrix::identity(classes, classes),
            bias: DVector::zeros(classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsGwnnModel {
    config: ModelConfig,
    pub branches: Vec<Branch>,
    pub sim_params: SimilarityParams,
    pub edge_rule: EdgeRule,
    pub readout: Option<ReadoutAffine>,
}

#[derive(Debug, Clone)]
enum BranchOperator {
    Wavelet(WaveletOperatorPair),
    Propagation(DMatrix<f64>),
}

/// Per-graph operators for every branch, built from the graph's topology.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    operators: Vec<BranchOperator>,
}

#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// Node class probabilities per branch, `N x C2` each.
    pub branch_probs: Vec<DMatrix<f64>>,
    pub aggregated: DMatrix<f64>,
    /// Column sums of `aggregated`.
    pub pooled: DVector<f64>,
    /// Readout logits after the optional affine map.
    pub logits: DVector<f64>,
    pub graph_probs: DVector<f64>,
}

impl ModelOutput {
    pub fn predicted_class(&self) -> usize {
        argmax(&self.graph_probs)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub node: f64,
    pub graph: f64,
}

/// Elementwise sum of the branch probability maps.
pub fn aggregate_branches(branch_probs: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = branch_probs
        .first()
        .ok_or_else(|| Error::ShapeMismatch("no branch outputs to aggregate".into()))?;
    let mut acc = first.clone();
    for p in &branch_probs[1..] {
        if p.shape() != first.shape() {
            return Err(Error::ShapeMismatch(format!(
                "branch output {:?} differs from {:?}",
                p.shape(),
                first.shape()
            )));
        }
        acc += p;
    }
    Ok(acc)
}

/// Column sums of the aggregated map, optionally affine-transformed, through a softmax.
pub fn graph_readout(aggregated: &DMatrix<f64>, affine: Option<&ReadoutAffine>) -> DVector<f64> {
    let pooled = column_sums(aggregated);
    softmax(&apply_affine(&pooled, affine))
}

fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

fn apply_affine(pooled: &DVector<f64>, affine: Option<&ReadoutAffine>) -> DVector<f64> {
    match affine {
        Some(a) => &a.weight * pooled + &a.bias,
        None => pooled.clone(),
    }
}

/// Cross-entropy of one branch's node predictions, averaged over nodes.
fn node_cross_entropy(probs: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let n = probs.nrows() as f64;
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[(i, y)].max(PROB_FLOOR).ln())
        .sum::<f64>()
        / n
}

/// `lambda * L_node + L_graph`, where `L_node` sums the per-branch mean node
/// cross-entropies.
pub fn loss(output: &ModelOutput, labeled: &LabeledGraph, lambda: f64) -> LossBreakdown {
    let node: f64 = output
        .branch_probs
        .iter()
        .map(|p| node_cross_entropy(p, &labeled.node_labels))
        .sum();
    let graph = -output.graph_probs[labeled.graph_label].max(PROB_FLOOR).ln();
    LossBreakdown {
        total: lambda * node + graph,
        node,
        graph,
    }
}

enum BranchTraces {
    Gwnn(Vec<LayerTrace>),
    Gcn(Vec<LayerTrace>),
}

impl MsGwnnModel {
    pub fn new(config: ModelConfig, seeds: SeedTree) -> Result<Self> {
        config.validate()?;
        let dims = config.dims();
        let branches = match config.branch {
            BranchKind::Gwnn => config
                .scales
                .iter()
                .enumerate()
                .map(|(b, &s)| {
                    let mut rng = seeds.child("branch").index(b as u64).rng();
                    GwnnNetwork::new(&dims, config.nodes, s, config.mode, &mut rng).map(Branch::Gwnn)
                })
                .collect::<Result<Vec<_>>>()?,
            BranchKind::Gcn => {
                let mut rng = seeds.child("branch").index(0).rng();
                vec![Branch::Gcn(GcnNetwork::new(&dims, &mut rng)?)]
            }
        };
        let readout = config.readout_affine.then(|| ReadoutAffine::identity(config.classes));
        Ok(Self {
            sim_params: SimilarityParams::identity(config.input_dim),
            edge_rule: EdgeRule::new(config.alpha)?,
            readout,
            branches,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    /// Topology the branches run on for input graph `g`.
    pub fn topology(&self, g: &Graph) -> Result<Graph> {
        match self.config.topology {
            TopologySource::Graph => Ok(g.clone()),
            TopologySource::Similarity => graph_from_features(g.embeddings(), &self.sim_params, self.edge_rule),
        }
    }

    pub fn prepare(&self, g: &Graph) -> Result<PreparedGraph> {
        if g.n() != self.config.nodes {
            return Err(Error::DimensionMismatch {
                context: "graph node count vs model",
                expected: self.config.nodes,
                found: g.n(),
            });
        }
        if g.embedding_dim() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                context: "embedding width vs model input",
                expected: self.config.input_dim,
                found: g.embedding_dim(),
            });
        }
        let topo = self.topology(g)?;
        let operators = match self.config.branch {
            BranchKind::Gcn => vec![BranchOperator::Propagation(gcn_propagation(&topo))],
            BranchKind::Gwnn => {
                let lap = normalized_laplacian(&topo)?;
                match self.config.mode {
                    OperatorMode::Exact => {
                        let sd = eigendecompose(&lap)?;
                        self.config
                            .scales
                            .iter()
                            .map(|&s| wavelet_basis_exact(&sd, s).map(BranchOperator::Wavelet))
                            .collect::<Result<Vec<_>>>()?
                    }
                    OperatorMode::Chebyshev { k } => self
                        .config
                        .scales
                        .iter()
                        .map(|&s| {
                            wavelet_basis_chebyshev(&lap, s, k, NORMALIZED_SPECTRUM_BOUND)
                                .map(BranchOperator::Wavelet)
                        })
                        .collect::<Result<Vec<_>>>()?,
                }
            }
        };
        Ok(PreparedGraph { operators })
    }

    fn forward_traced(&self, prepared: &PreparedGraph, x: &DMatrix<f64>) -> Result<(ModelOutput, Vec<BranchTraces>)> {
        let mut traces = Vec::with_capacity(self.branches.len());
        let mut branch_probs = Vec::with_capacity(self.branches.len());
        for (branch, op) in self.branches.iter().zip(&prepared.operators) {
            let t = match (branch, op) {
                (Branch::Gwnn(net), BranchOperator::Wavelet(pair)) => BranchTraces::Gwnn(net.forward_traced(pair, x)?),
                (Branch::Gcn(net), BranchOperator::Propagation(p)) => BranchTraces::Gcn(net.forward_traced(p, x)?),
                _ => {
                    return Err(Error::ShapeMismatch(
                        "prepared graph does not match the model's branch kinds".into(),
                    ))
                }
            };
            let last = match &t {
                BranchTraces::Gwnn(v) | BranchTraces::Gcn(v) => v.last().expect("non-empty network"),
            };
            branch_probs.push(last.output().clone());
            traces.push(t);
        }
        let aggregated = aggregate_branches(&branch_probs)?;
        let pooled = column_sums(&aggregated);
        let logits = apply_affine(&pooled, self.readout.as_ref());
        let graph_probs = softmax(&logits);
        Ok((
            ModelOutput {
                branch_probs,
                aggregated,
                pooled,
                logits,
                graph_probs,
            },
            traces,
        ))
    }

    pub fn forward(&self, prepared: &PreparedGraph, x: &DMatrix<f64>) -> Result<ModelOutput> {
        Ok(self.forward_traced(prepared, x)?.0)
    }

    pub fn predict(&self, g: &Graph) -> Result<ModelOutput> {
        self.forward(&self.prepare(g)?, g.embeddings())
    }

    /// Loss and gradients w.r.t. every parameter, flattened in
    /// [`MsGwnnModel::params`] order.
    pub fn loss_and_gradients(
        &self,
        prepared: &PreparedGraph,
        labeled: &LabeledGraph,
        lambda: f64,
    ) -> Result<(LossBreakdown, ModelOutput, Vec<Vec<f64>>)> {
        let (out, traces) = self.forward_traced(prepared, labeled.graph.embeddings())?;
        let breakdown = loss(&out, labeled, lambda);
        let c2 = self.config.classes;
        let y = labeled.graph_label;

        // d L_graph / d logits = q - e_y (zero when the clamp is active)
        let mut grad_logits = DVector::zeros(c2);
        if out.graph_probs[y] > PROB_FLOOR {
            grad_logits.copy_from(&out.graph_probs);
            grad_logits[y] -= 1.0;
        }
        let (grad_pooled, readout_grads) = match &self.readout {
            Some(a) => {
                let gw = &grad_logits * out.pooled.transpose();
                (a.weight.tr_mul(&grad_logits), Some((gw, grad_logits.clone())))
            }
            None => (grad_logits, None),
        };

        let n = labeled.graph.n();
        let mut grads: Vec<Vec<f64>> = Vec::new();
        for ((branch, op), (t, probs)) in self
            .branches
            .iter()
            .zip(&prepared.operators)
            .zip(traces.iter().zip(&out.branch_probs))
        {
            let mut grad_probs = DMatrix::from_fn(n, c2, |_, c| grad_pooled[c]);
            for (i, &label) in labeled.node_labels.iter().enumerate() {
                let p = probs[(i, label)];
                if p > PROB_FLOOR {
                    grad_probs[(i, label)] -= lambda / (n as f64 * p);
                }
            }
            match (branch, op, t) {
                (Branch::Gwnn(net), BranchOperator::Wavelet(pair), BranchTraces::Gwnn(tr)) => {
                    for (w, f) in net.backward(pair, tr, grad_probs)? {
                        grads.push(w.as_slice().to_vec());
                        grads.push(f.as_slice().to_vec());
                    }
                }
                (Branch::Gcn(net), BranchOperator::Propagation(p), BranchTraces::Gcn(tr)) => {
                    for w in net.backward(p, tr, grad_probs) {
                        grads.push(w.as_slice().to_vec());
                    }
                }
                _ => unreachable!("checked in forward_traced"),
            }
        }
        // topology is piecewise constant in the similarity projections and
        // embeddings bypass them, so their gradient is identically zero
        grads.push(vec![0.0; self.sim_params.theta_weight.len()]);
        grads.push(vec![0.0; self.sim_params.phi_weight.len()]);
        if let Some((gw, gb)) = readout_grads {
            grads.push(gw.as_slice().to_vec());
            grads.push(gb.as_slice().to_vec());
        }
        Ok((breakdown, out, grads))
    }

    /// Named parameter tensors in checkpoint order: per branch `W1, F1, W2,
    /// F2, W3, F3` (GCN: `W1, W2, W3`), then similarity `theta`, `phi`, then
    /// the readout affine when present. Values are column-major.
    pub fn params(&self) -> Vec<(String, (usize, usize), &[f64])> {
        let mut out = Vec::new();
        for (b, branch) in self.branches.iter().enumerate() {
            match branch {
                Branch::Gwnn(net) => {
                    for (l, layer) in net.layers.iter().enumerate() {
                        out.push((format!("branch{b}.W{}", l + 1), layer.weight.shape(), layer.weight.as_slice()));
                        out.push((format!("branch{b}.F{}", l + 1), layer.kernel.shape(), layer.kernel.as_slice()));
                    }
                }
                Branch::Gcn(net) => {
                    for (l, w) in net.weights.iter().enumerate() {
                        out.push((format!("branch{b}.W{}", l + 1), w.shape(), w.as_slice()));
                    }
                }
            }
        }
        let sim = &self.sim_params;
        out.push(("similarity.theta".into(), sim.theta_weight.shape(), sim.theta_weight.as_slice()));
        out.push(("similarity.phi".into(), sim.phi_weight.shape(), sim.phi_weight.as_slice()));
        if let Some(a) = &self.readout {
            out.push(("readout.weight".into(), a.weight.shape(), a.weight.as_slice()));
            out.push(("readout.bias".into(), a.bias.shape(), a.bias.as_slice()));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for branch in &mut self.branches {
            match branch {
                Branch::Gwnn(net) => {
                    for layer in &mut net.layers {
                        out.push(layer.weight.as_mut_slice());
                        out.push(layer.kernel.as_mut_slice());
                    }
                }
                Branch::Gcn(net) => {
                    for w in &mut net.weights {
                        out.push(w.as_mut_slice());
                    }
                }
            }
        }
        out.push(self.sim_params.theta_weight.as_mut_slice());
        out.push(self.sim_params.phi_weight.as_mut_slice());
        if let Some(a) = &mut self.readout {
            out.push(a.weight.as_mut_slice());
            out.push(a.bias.as_mut_slice());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, _, v)| v.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::grid_graph;
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        let mut c = ModelConfig::new(3, 2, 6);
        c.hidden = vec![5, 4];
        c.scales = vec![0.5, 1.0];
        c.mode = OperatorMode::Exact;
        c
    }

    fn labeled(seed: u64) -> LabeledGraph {
        let mut rng = SeedTree::new(seed).rng();
        let emb = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let g = grid_graph(2, 3, true, emb).unwrap();
        let labels = (0..6).map(|i| i % 2).collect();
        LabeledGraph::new(g, labels, 1).unwrap()
    }

    #[test]
    fn aggregate_examples() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let b = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert_eq!(aggregate_branches(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(
            aggregate_branches(&[a.clone(), b]).unwrap(),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0])
        );
        assert_eq!(aggregate_branches(&[a.clone(), a.clone(), a.clone()]).unwrap(), &a * 3.0);
        assert!(aggregate_branches(&[]).is_err());
        assert!(aggregate_branches(&[a, DMatrix::zeros(2, 2)]).is_err());
    }

    #[test]
    fn readout_examples() {
        let agg = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.8, 0.2]);
        let q = graph_readout(&agg, None);
        assert!((q[0] - 0.802_183_888_558_581_6).abs() < 1e-12);
        assert!((q[1] - 0.197_816_111_441_418_4).abs() < 1e-12);

        let uniform = DMatrix::from_element(5, 4, 0.25);
        let q = graph_readout(&uniform, None);
        assert!(q.iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let certain = DMatrix::from_fn(4, 3, |_, c| if c == 0 { 1.0 } else { 0.0 });
        assert_eq!(argmax(&graph_readout(&certain, None)), 0);
        assert_eq!(argmax(&DVector::from_vec(vec![0.2, 0.4, 0.4])), 1);
    }

    fn uniform_output(n: usize, classes: usize, branches: usize) -> ModelOutput {
        let p = DMatrix::from_element(n, classes, 1.0 / classes as f64);
        let branch_probs = vec![p; branches];
        let aggregated = aggregate_branches(&branch_probs).unwrap();
        let pooled = column_sums(&aggregated);
        ModelOutput {
            graph_probs: softmax(&pooled),
            logits: pooled.clone(),
            pooled,
            aggregated,
            branch_probs,
        }
    }

    #[test]
    fn loss_of_uniform_predictions() {
        let out = uniform_output(5, 4, 3);
        let g = grid_graph(1, 5, true, DMatrix::zeros(5, 1)).unwrap();
        let item = LabeledGraph::new(g, vec![0, 1, 2, 3, 0], 2).unwrap();
        let l = loss(&out, &item, 1.0);
        let ln4 = 4f64.ln();
        assert!((l.node - 3.0 * ln4).abs() < 1e-12);
        assert!((l.graph - ln4).abs() < 1e-12);
        assert!((l.total - 5.545_177_444_479_562).abs() < 1e-9);
        let l0 = loss(&out, &item, 0.0);
        assert_eq!(l0.total, l0.graph);
    }

    #[test]
    fn loss_of_perfect_predictions() {
        let p = DMatrix::from_fn(3, 2, |_, c| if c == 1 { 1.0 } else { 0.0 });
        let branch_probs = vec![p.clone(), p];
        let aggregated = aggregate_branches(&branch_probs).unwrap();
        let logits = DVector::from_vec(vec![-1e3, 1e3]);
        let out = ModelOutput {
            graph_probs: softmax(&logits),
            pooled: column_sums(&aggregated),
            logits,
            aggregated,
            branch_probs,
        };
        let g = grid_graph(1, 3, true, DMatrix::zeros(3, 1)).unwrap();
        let item = LabeledGraph::new(g, vec![1, 1, 1], 1).unwrap();
        assert!(loss(&out, &item, 1.0).total <= 1e-6);
    }

    #[test]
    fn loss_decomposition() {
        let model = MsGwnnModel::new(tiny_config(), SeedTree::new(3)).unwrap();
        let item = labeled(5);
        let out = model.predict(&item.graph).unwrap();
        let with = loss(&out, &item, 1.0);
        let without = loss(&out, &item, 0.0);
        let node: f64 = out
            .branch_probs
            .iter()
            .map(|p| {
                (0..6).map(|i| -p[(i, item.node_labels[i])].ln()).sum::<f64>() / 6.0
            })
            .sum();
        assert!((with.total - without.total - node).abs() < 1e-10);
    }

    #[test]
    fn single_branch_equals_network_plus_readout() {
        let mut cfg = tiny_config();
        cfg.scales = vec![1.0];
        let model = MsGwnnModel::new(cfg, SeedTree::new(9)).unwrap();
        let item = labeled(2);
        let out = model.predict(&item.graph).unwrap();
        let Branch::Gwnn(net) = &model.branches[0] else { panic!() };
        let direct = crate::layers::gwnn_forward(net, &item.graph).unwrap();
        assert!((&out.aggregated - &direct).amax() < 1e-12);
        assert!((out.graph_probs - graph_readout(&direct, None)).amax() < 1e-12);
    }

    #[test]
    fn readout_argmax_invariant_to_positive_scaling() {
        let agg = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.1, 0.6, 0.3, 0.7, 0.2, 0.1]);
        let base = argmax(&graph_readout(&agg, None));
        for c in [0.01, 0.5, 3.0, 100.0] {
            assert_eq!(argmax(&graph_readout(&(&agg * c), None)), base);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config();
        c.scales = vec![];
        assert!(MsGwnnModel::new(c.clone(), SeedTree::new(0)).is_err());
        c.scales = vec![1.0, 0.5];
        assert!(c.validate().is_err());
        c.scales = vec![0.0, 0.5];
        assert!(c.validate().is_err());
        c.scales = vec![0.5];
        c.alpha = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn prepare_rejects_wrong_sizes() {
        let model = MsGwnnModel::new(tiny_config(), SeedTree::new(1)).unwrap();
        let g = grid_graph(2, 2, true, DMatrix::zeros(4, 3)).unwrap();
        assert!(matches!(model.prepare(&g), Err(Error::DimensionMismatch { .. })));
        let g = grid_graph(2, 3, true, DMatrix::zeros(6, 2)).unwrap();
        assert!(matches!(model.prepare(&g), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn similarity_topology_rebuilds_edges() {
        let mut cfg = tiny_config();
        cfg.topology = TopologySource::Similarity;
        cfg.alpha = 90.0;
        let model = MsGwnnModel::new(cfg, SeedTree::new(1)).unwrap();
        let item = labeled(4);
        let topo = model.topology(&item.graph).unwrap();
        let expected = graph_from_features(item.graph.embeddings(), &SimilarityParams::identity(3), EdgeRule::new(90.0).unwrap()).unwrap();
        assert_eq!(topo.adjacency(), expected.adjacency());
        let out = model.predict(&item.graph).unwrap();
        assert!((out.graph_probs.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn param_layout_matches_gradients() {
        let mut cfg = tiny_config();
        cfg.readout_affine = true;
        let model = MsGwnnModel::new(cfg, SeedTree::new(1)).unwrap();
        let prepared = model.prepare(&labeled(1).graph).unwrap();
        let (_, _, grads) = model.loss_and_gradients(&prepared, &labeled(1), 1.0).unwrap();
        let params = model.params();
        assert_eq!(params.len(), grads.len());
        for ((name, shape, p), g) in params.iter().zip(&grads) {
            assert_eq!(p.len(), g.len(), "{name}");
            assert_eq!(shape.0 * shape.1, p.len());
        }
        // 2 branches x 3 layers x (W, F) + theta, phi + readout W, b
        assert_eq!(params.len(), 16);
    }
}
