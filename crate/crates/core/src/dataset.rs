//! Labeled graphs and the on-disk dataset layout: a `manifest.json` listing
//! graph documents and their label sidecars.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{load_graph, save_graph, Graph};

/// A graph with node-level and graph-level supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    pub graph: Graph,
    pub node_labels: Vec<usize>,
    pub graph_label: usize,
}

impl LabeledGraph {
    pub fn new(graph: Graph, node_labels: Vec<usize>, graph_label: usize) -> Result<Self> {
        if node_labels.len() != graph.n() {
            return Err(Error::DimensionMismatch {
                context: "node label count",
                expected: graph.n(),
                found: node_labels.len(),
            });
        }
        Ok(Self {
            graph,
            node_labels,
            graph_label,
        })
    }

    /// Node labels copied from the graph label, for data annotated only at
    /// the image level.
    pub fn broadcast(graph: Graph, graph_label: usize) -> Self {
        let node_labels = vec![graph_label; graph.n()];
        Self {
            graph,
            node_labels,
            graph_label,
        }
    }

    pub fn check_classes(&self, classes: usize) -> Result<()> {
        if self.graph_label >= classes {
            return Err(Error::InconsistentDataset(format!(
                "graph label {} outside 0..{classes}",
                self.graph_label
            )));
        }
        if let Some(bad) = self.node_labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InconsistentDataset(format!("node label {bad} outside 0..{classes}")));
        }
        Ok(())
    }
}

/// Checks that every graph has `nodes` nodes, `input_dim` embedding columns
/// and labels below `classes`.
pub fn check_dataset(data: &[LabeledGraph], nodes: usize, input_dim: usize, classes: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InconsistentDataset("dataset is empty".into()));
    }
    for (i, item) in data.iter().enumerate() {
        if item.graph.n() != nodes {
            return Err(Error::InconsistentDataset(format!(
                "graph {i} has {} nodes, expected {nodes}",
                item.graph.n()
            )));
        }
        if item.graph.embedding_dim() != input_dim {
            return Err(Error::InconsistentDataset(format!(
                "graph {i} has embedding width {}, expected {input_dim}",
                item.graph.embedding_dim()
            )));
        }
        item.check_classes(classes)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelsJson {
    pub format: u32,
    pub graph_label: usize,
    pub node_labels: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub graph: String,
    pub labels: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub classes: usize,
    pub graphs: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn save_dataset(dir: &Path, data: &[LabeledGraph], classes: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(data.len());
    for (i, item) in data.iter().enumerate() {
        let graph = format!("graph_{i:05}.json");
        let labels = format!("graph_{i:05}.labels.json");
        save_graph(&item.graph, &dir.join(&graph))?;
        let sidecar = LabelsJson {
            format: 1,
            graph_label: item.graph_label,
            node_labels: item.node_labels.clone(),
        };
        std::fs::write(dir.join(&labels), serde_json::to_string(&sidecar)?)?;
        entries.push(ManifestEntry { graph, labels });
    }
    let manifest = Manifest {
        format: 1,
        classes,
        graphs: entries,
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Loads `dir/manifest.json` (or a manifest path directly); returns the
/// graphs and the class count.
pub fn load_dataset(path: &Path) -> Result<(Vec<LabeledGraph>, usize)> {
    let manifest_path: PathBuf = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)?;
    if manifest.format != 1 {
        return Err(Error::InconsistentDataset(format!(
            "unsupported manifest format {}",
            manifest.format
        )));
    }
    let data = manifest
        .graphs
        .iter()
        .map(|e| {
            let graph = load_graph(&base.join(&e.graph))?;
            let labels: LabelsJson = serde_json::from_str(&std::fs::read_to_string(base.join(&e.labels))?)?;
            let item = LabeledGraph::new(graph, labels.node_labels, labels.graph_label)?;
            item.check_classes(manifest.classes)?;
            Ok(item)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((data, manifest.classes))
}
