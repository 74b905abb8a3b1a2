//! Training loop, evaluation and the scale / lambda ablations.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{check_dataset, LabeledGraph};
use crate::error::{Error, Result};
use crate::model::{argmax, LossBreakdown, ModelConfig, MsGwnnModel, PreparedGraph};
use crate::optim::Adam;
use crate::rng::SeedTree;
use crate::spectral::OperatorMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Polynomial order used when a run builds Chebyshev-mode models.
    pub chebyshev_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            epochs: 30,
            batch_size: 16,
            chebyshev_k: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        // lr = 0 is allowed: it freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be positive".into()));
        }
        if self.chebyshev_k == 0 {
            return Err(Error::InvalidParameter("chebyshev_k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_node: f64,
    pub loss_graph: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `None` for classes absent from the evaluated set.
    pub per_class: Vec<Option<f64>>,
    /// Row-normalized: `confusion[true][predicted]`.
    pub confusion: Vec<Vec<f64>>,
}

fn check_model_data(model: &MsGwnnModel, data: &[LabeledGraph]) -> Result<()> {
    let c = model.config();
    check_dataset(data, c.nodes, c.input_dim, c.classes)
}

/// Builds the per-graph operators for every item, in order.
pub fn prepare_all(model: &MsGwnnModel, data: &[LabeledGraph]) -> Result<Vec<PreparedGraph>> {
    data.par_iter().map(|item| model.prepare(&item.graph)).collect()
}

/// Trains `model` in place with Adam on mini-batches of a seeded shuffle.
/// `on_epoch` sees each epoch's metrics as they are produced.
///
/// Losses and accuracy are those of the forward passes that produced each
/// step's gradients. Per-graph gradients are computed in parallel and summed
/// in dataset order, so results do not depend on the thread count.
pub fn train_with(
    model: &mut MsGwnnModel,
    data: &[LabeledGraph],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    check_model_data(model, data)?;
    // Topology is fixed during training: the similarity projections receive
    // no gradient, so operators are built once.
    let prepared = prepare_all(model, data)?;
    let shapes: Vec<usize> = model.params().iter().map(|(_, _, v)| v.len()).collect();
    let mut adam = Adam::new(config.learning_rate, config.beta1, config.beta2, &shapes);
    let shuffle = SeedTree::new(config.seed).child("shuffle");
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut shuffle.index(epoch as u64).rng());
        let mut sum = LossBreakdown {
            total: 0.0,
            node: 0.0,
            graph: 0.0,
        };
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| model.loss_and_gradients(&prepared[i], &data[i], config.lambda))
                .collect::<Result<Vec<_>>>()?;
            let mut grads: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
            for (&i, (l, out, g)) in batch.iter().zip(&results) {
                sum.total += l.total;
                sum.node += l.node;
                sum.graph += l.graph;
                if out.predicted_class() == data[i].graph_label {
                    correct += 1;
                }
                for (acc, gi) in grads.iter_mut().zip(g) {
                    for (a, v) in acc.iter_mut().zip(gi) {
                        *a += v;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for acc in &mut grads {
                acc.iter_mut().for_each(|a| *a *= scale);
            }
            adam.step(&mut model.params_mut(), &grads)?;
        }
        let n = data.len() as f64;
        let m = EpochMetrics {
            epoch,
            loss_total: sum.total / n,
            loss_node: sum.node / n,
            loss_graph: sum.graph / n,
            train_acc: correct as f64 / n,
        };
        on_epoch(&m);
        history.push(m);
    }
    Ok(history)
}

pub fn train(model: &mut MsGwnnModel, data: &[LabeledGraph], config: &TrainConfig) -> Result<Vec<EpochMetrics>> {
    train_with(model, data, config, |_| {})
}

/// Initializes a model from `model_config` under `config.seed` and trains it.
pub fn fit(
    model_config: &ModelConfig,
    data: &[LabeledGraph],
    config: &TrainConfig,
) -> Result<(MsGwnnModel, Vec<EpochMetrics>)> {
    let mut model = MsGwnnModel::new(model_config.clone(), SeedTree::new(config.seed).child("model"))?;
    let history = train(&mut model, data, config)?;
    Ok((model, history))
}

pub fn predictions(model: &MsGwnnModel, data: &[LabeledGraph]) -> Result<Vec<usize>> {
    data.par_iter()
        .map(|item| model.predict(&item.graph).map(|o| argmax(&o.graph_probs)))
        .collect()
}

/// Accuracy, per-class accuracy and row-normalized confusion matrix from
/// `(true, predicted)` pairs.
pub fn summarize(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Evaluation {
    let mut counts = DMatrix::<usize>::zeros(classes, classes);
    let mut total = 0usize;
    let mut correct = 0usize;
    for (t, p) in pairs {
        counts[(t, p)] += 1;
        total += 1;
        correct += usize::from(t == p);
    }
    let row_totals: Vec<usize> = (0..classes).map(|r| counts.row(r).sum()).collect();
    let confusion = (0..classes)
        .map(|r| {
            (0..classes)
                .map(|c| {
                    if row_totals[r] == 0 {
                        0.0
                    } else {
                        counts[(r, c)] as f64 / row_totals[r] as f64
                    }
                })
                .collect()
        })
        .collect();
    let per_class = (0..classes)
        .map(|r| (row_totals[r] > 0).then(|| counts[(r, r)] as f64 / row_totals[r] as f64))
        .collect();
    Evaluation {
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        per_class,
        confusion,
    }
}

pub fn evaluate(model: &MsGwnnModel, data: &[LabeledGraph]) -> Result<Evaluation> {
    check_model_data(model, data)?;
    let preds = predictions(model, data)?;
    Ok(summarize(
        model.classes(),
        data.iter().map(|d| d.graph_label).zip(preds),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub scales: Vec<f64>,
    pub lambda: f64,
    pub accuracy: f64,
}

/// Trains one model per scale set with identical seeds and settings and
/// reports test accuracy for each.
pub fn ablate_scales(
    scale_sets: &[Vec<f64>],
    base: &ModelConfig,
    train_set: &[LabeledGraph],
    test_set: &[LabeledGraph],
    config: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    scale_sets
        .iter()
        .map(|scales| {
            let mut mc = base.clone();
            mc.scales = scales.clone();
            let (model, _) = fit(&mc, train_set, config)?;
            Ok(AblationRow {
                label: format!("MS-GWNN-{}", scales.len()),
                scales: scales.clone(),
                lambda: config.lambda,
                accuracy: evaluate(&model, test_set)?.accuracy,
            })
        })
        .collect()
}

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Trains one model per node-loss weight and reports test accuracy for each.
pub fn ablate_lambda(
    lambdas: &[f64],
    base: &ModelConfig,
    train_set: &[LabeledGraph],
    test_set: &[LabeledGraph],
    config: &TrainConfig,
) -> Result<Vec<AblationRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let tc = TrainConfig { lambda, ..config.clone() };
            let (model, _) = fit(base, train_set, &tc)?;
            Ok(AblationRow {
                label: format!("lambda={lambda}"),
                scales: base.scales.clone(),
                lambda,
                accuracy: evaluate(&model, test_set)?.accuracy,
            })
        })
        .collect()
}

/// Operator mode for a run: exact, or Chebyshev at the run's order.
pub fn operator_mode(exact: bool, config: &TrainConfig) -> OperatorMode {
    if exact {
        OperatorMode::Exact
    } else {
        OperatorMode::Chebyshev { k: config.chebyshev_k }
    }
}
