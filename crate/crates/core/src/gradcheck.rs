//! Central finite-difference check of [`MsGwnnModel::loss_and_gradients`].

use crate::dataset::LabeledGraph;
use crate::error::Result;
use crate::model::{loss, MsGwnnModel};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradientSample {
    /// `|a - n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(floor);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Compares every analytic gradient entry with `(L(p + h) - L(p - h)) / 2h`.
pub fn finite_difference_check(
    model: &MsGwnnModel,
    item: &LabeledGraph,
    lambda: f64,
    step: f64,
) -> Result<Vec<GradientSample>> {
    let prepared = model.prepare(&item.graph)?;
    let (_, _, grads) = model.loss_and_gradients(&prepared, item, lambda)?;
    let names: Vec<String> = model.params().into_iter().map(|(name, _, _)| name).collect();
    let mut probe = model.clone();
    let eval = |m: &MsGwnnModel| -> Result<f64> {
        let prepared = m.prepare(&item.graph)?;
        Ok(loss(&m.forward(&prepared, item.graph.embeddings())?, item, lambda).total)
    };
    let mut out = Vec::new();
    for (t, name) in names.iter().enumerate() {
        for i in 0..grads[t].len() {
            let orig = probe.params_mut()[t][i];
            probe.params_mut()[t][i] = orig + step;
            let up = eval(&probe)?;
            probe.params_mut()[t][i] = orig - step;
            let down = eval(&probe)?;
            probe.params_mut()[t][i] = orig;
            out.push(GradientSample {
                tensor: name.clone(),
                index: i,
                analytic: grads[t][i],
                numeric: (up - down) / (2.0 * step),
            });
        }
    }
    Ok(out)
}
