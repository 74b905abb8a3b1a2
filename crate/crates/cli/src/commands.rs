use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use msgwnn::build::{build_graph_from_image, EdgeRule, RgbImage, SimilarityParams, StatsEmbedder};
use msgwnn::checkpoint::{load_checkpoint, save_checkpoint};
use msgwnn::dataset::{load_dataset, save_dataset, LabeledGraph};
use msgwnn::graph::{load_graph, save_graph};
use msgwnn::model::{BranchKind, ModelConfig, TopologySource};
use msgwnn::rng::SeedTree;
use msgwnn::spectral::{
    eigendecompose, receptive_field, wavelet_basis_exact, wavelet_summary, OperatorMode, SUPPORT_THRESHOLD,
};
use msgwnn::synth::{generate, split, SynthSpec};
use msgwnn::train::{ablate_lambda, ablate_scales, evaluate, train_with, TrainConfig, DEFAULT_LAMBDA_GRID};
use msgwnn::model::MsGwnnModel;
use serde::Serialize;
use serde_json::json;

use crate::config::{
    ensure_dir, ensure_parent, parse_f64_list, parse_scale_sets, pick, require, require_file, FileConfig,
};
use crate::error::{CliError, CliResult};
use crate::{AblateArgs, BuildGraphArgs, EvalArgs, ModelArgs, SynthArgs, TrainArgs, WaveletArgs};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.jsonl";

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io_at(path, e))
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn edge_rule(alpha: f64) -> CliResult<EdgeRule> {
    EdgeRule::new(alpha).map_err(|e| CliError::usage(e.to_string()))
}

pub fn build_graph(args: BuildGraphArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let image_path = require(args.image, file.image, "image")?;
    let out = require(args.out, file.out, "out")?;
    let patch = pick(args.patch, file.patch, 16);
    let rule = edge_rule(pick(args.alpha, file.alpha, EdgeRule::DEFAULT_ALPHA))?;
    if patch == 0 {
        return Err(CliError::usage("patch must be positive"));
    }
    require_file(&image_path)?;
    ensure_parent(&out)?;

    let decoded = image::open(&image_path).map_err(|e| match e {
        image::ImageError::IoError(io) => CliError::io_at(&image_path, io),
        other => CliError::validation(format!("{}: {other}", image_path.display())),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    let img = RgbImage::new(h as usize, w as usize, rgb.into_raw())?;
    let params = SimilarityParams::identity(StatsEmbedder::CHANNELS);
    let g = build_graph_from_image(&img, patch, &StatsEmbedder, &params, rule)
        .map_err(|e| CliError::at(&image_path, e))?;
    save_graph(&g, &out).map_err(|e| CliError::at(&out, e))?;
    print_json(&json!({
        "format": 1,
        "graph": out,
        "nodes": g.n(),
        "edges": g.edge_count(),
        "embedding_dim": g.embedding_dim(),
    }));
    Ok(())
}

fn scale_file_name(scale: f64) -> String {
    format!("wavelet_s{scale}.csv")
}

pub fn wavelet(args: WaveletArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let graph_path = require(args.graph, file.graph, "graph")?;
    let out_dir = require(args.out_dir, file.out_dir, "out_dir")?;
    let scales = match args.scales {
        Some(s) => parse_f64_list(&s)?,
        None => require(None, file.scales, "scales")?,
    };
    let center = require(args.center, file.center, "center")?;
    let threshold = pick(args.threshold, file.threshold, SUPPORT_THRESHOLD);
    if scales.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(CliError::usage(format!("scales must be finite and >= 0: {scales:?}")));
    }
    if !(threshold >= 0.0) {
        return Err(CliError::usage("threshold must be >= 0"));
    }
    require_file(&graph_path)?;
    ensure_dir(&out_dir)?;

    let g = load_graph(&graph_path).map_err(|e| CliError::at(&graph_path, e))?;
    if center >= g.n() {
        return Err(CliError::validation(format!(
            "center {center} out of range for a graph with {} nodes",
            g.n()
        )));
    }
    let lap = msgwnn::graph::normalized_laplacian(&g)?;
    let sd = eigendecompose(&lap)?;
    let mut summaries = Vec::with_capacity(scales.len());
    for &s in &scales {
        let pair = wavelet_basis_exact(&sd, s)?;
        let psi = pair.wavelet(center)?;
        let path = out_dir.join(scale_file_name(s));
        let mut w = BufWriter::new(File::create(&path).map_err(|e| CliError::io_at(&path, e))?);
        let mut body = String::from("node_index,wavelet_value\n");
        for j in receptive_field(&pair, center, threshold)? {
            body.push_str(&format!("{j},{}\n", psi[j]));
        }
        w.write_all(body.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io_at(&path, e))?;
        let mut summary = serde_json::to_value(wavelet_summary(&g, &pair, center)?).expect("serializable");
        summary["csv"] = json!(scale_file_name(s));
        summary["support_size_at_threshold"] = json!(receptive_field(&pair, center, threshold)?.len());
        summaries.push(summary);
    }
    let report = json!({
        "format": 1,
        "graph": graph_path,
        "center": center,
        "threshold": threshold,
        "summaries": summaries,
    });
    write_json(&out_dir.join("wavelet_summary.json"), &report)?;
    print_json(&report);
    Ok(())
}

pub fn synth(args: SynthArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let out_dir = require(args.out_dir, file.out_dir, "out_dir")?;
    let d = SynthSpec::default();
    let blob_scales = match args.blob_scales {
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| CliError::usage(format!("not a size: `{t}`"))))
            .collect::<CliResult<Vec<_>>>()?,
        None => file.blob_scales.unwrap_or(d.blob_scales),
    };
    let spec = SynthSpec {
        height: pick(args.height, file.height, d.height),
        width: pick(args.width, file.width, d.width),
        classes: pick(args.classes, file.classes, d.classes),
        blob_scales,
        noise_sigma: pick(args.noise_sigma, file.noise_sigma, d.noise_sigma),
        samples_per_class: pick(args.samples_per_class, file.samples_per_class, d.samples_per_class),
        seed: pick(args.seed, file.seed, d.seed),
    };
    let fraction = pick(args.train_fraction, file.train_fraction, 0.7);
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::usage(format!("train_fraction must lie in (0, 1), got {fraction}")));
    }
    spec.validate().map_err(|e| CliError::usage(e.to_string()))?;
    ensure_dir(&out_dir)?;

    let data = generate(&spec)?;
    let (train, test) = split(&data, fraction, spec.seed)?;
    save_dataset(&out_dir.join("train"), &train, spec.classes).map_err(|e| CliError::at(&out_dir, e))?;
    save_dataset(&out_dir.join("test"), &test, spec.classes).map_err(|e| CliError::at(&out_dir, e))?;
    let report = json!({
        "format": 1,
        "spec": spec,
        "train_fraction": fraction,
        "train": train.len(),
        "test": test.len(),
    });
    write_json(&out_dir.join("synth.json"), &report)?;
    print_json(&report);
    Ok(())
}

/// Model and training settings resolved from flags, config file and defaults.
struct RunSettings {
    model: ModelConfig,
    train: TrainConfig,
}

fn parse_mode(text: &str, k: usize) -> CliResult<OperatorMode> {
    match text {
        "exact" => Ok(OperatorMode::Exact),
        "chebyshev" => Ok(OperatorMode::Chebyshev { k }),
        other => Err(CliError::usage(format!("unknown mode `{other}` (exact | chebyshev)"))),
    }
}

fn resolve(args: &ModelArgs, file: &FileConfig, data: &[LabeledGraph], classes: usize) -> CliResult<RunSettings> {
    let d = TrainConfig::default();
    let train = TrainConfig {
        lambda: pick(args.lambda, file.lambda, d.lambda),
        learning_rate: pick(args.learning_rate, file.learning_rate, d.learning_rate),
        beta1: pick(args.beta1, file.beta1, d.beta1),
        beta2: pick(args.beta2, file.beta2, d.beta2),
        epochs: pick(args.epochs, file.epochs, d.epochs),
        batch_size: pick(args.batch_size, file.batch_size, d.batch_size),
        chebyshev_k: pick(args.k, file.k, d.chebyshev_k),
        seed: pick(args.seed, file.seed, d.seed),
    };
    train.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let first = &data[0].graph;
    let mut model = ModelConfig::new(first.embedding_dim(), classes, first.n());
    if let Some(s) = args.scales.as_deref() {
        model.scales = parse_f64_list(s)?;
    } else if let Some(s) = &file.scales {
        model.scales = s.clone();
    }
    if let Some(h) = args.hidden.as_deref() {
        model.hidden = h
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| CliError::usage(format!("not a width: `{t}`"))))
            .collect::<CliResult<_>>()?;
    } else if let Some(h) = &file.hidden {
        model.hidden = h.clone();
    }
    model.mode = parse_mode(&pick(args.mode.clone(), file.mode.clone(), "chebyshev".into()), train.chebyshev_k)?;
    model.branch = match pick(args.branch.clone(), file.branch.clone(), "gwnn".into()).as_str() {
        "gwnn" => BranchKind::Gwnn,
        "gcn" => BranchKind::Gcn,
        other => return Err(CliError::usage(format!("unknown branch `{other}` (gwnn | gcn)"))),
    };
    model.topology = match pick(args.topology.clone(), file.topology.clone(), "graph".into()).as_str() {
        "graph" => TopologySource::Graph,
        "similarity" => TopologySource::Similarity,
        other => return Err(CliError::usage(format!("unknown topology `{other}` (graph | similarity)"))),
    };
    model.readout_affine = pick(args.readout_affine, file.readout_affine, false);
    model.alpha = pick(args.alpha, file.alpha, EdgeRule::DEFAULT_ALPHA);
    model.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(RunSettings { model, train })
}

fn load_data(path: &Path) -> CliResult<(Vec<LabeledGraph>, usize)> {
    require_file(path)?;
    let (data, classes) = load_dataset(path).map_err(|e| CliError::at(path, e))?;
    if data.is_empty() {
        return Err(CliError::validation(format!("{}: dataset is empty", path.display())));
    }
    Ok((data, classes))
}

pub fn train(args: TrainArgs) -> CliResult<()> {
    let file = FileConfig::load(args.model.config.as_deref())?;
    let data_path = require(args.data, file.data.clone(), "data")?;
    let out_dir = require(args.out_dir, file.out_dir.clone(), "out_dir")?;
    require_file(&data_path)?;
    ensure_dir(&out_dir)?;

    let (data, classes) = load_data(&data_path)?;
    let settings = resolve(&args.model, &file, &data, classes)?;
    let mut model = MsGwnnModel::new(settings.model.clone(), SeedTree::new(settings.train.seed).child("model"))?;

    let metrics_path = out_dir.join(METRICS_FILE);
    let mut metrics = BufWriter::new(File::create(&metrics_path).map_err(|e| CliError::io_at(&metrics_path, e))?);
    let mut write_err = None;
    let history = train_with(&mut model, &data, &settings.train, |m| {
        let mut line = serde_json::to_value(m).expect("serializable");
        line["format"] = json!(1);
        if let Err(e) = writeln!(metrics, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(CliError::io_at(&metrics_path, e));
    }
    metrics.flush().map_err(|e| CliError::io_at(&metrics_path, e))?;

    let ckpt = out_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&model, &ckpt).map_err(|e| CliError::at(&ckpt, e))?;
    let last = history.last();
    print_json(&json!({
        "format": 1,
        "checkpoint": ckpt,
        "metrics": metrics_path,
        "epochs": history.len(),
        "final": last,
        "model": settings.model,
        "train": settings.train,
    }));
    Ok(())
}

pub fn eval(args: EvalArgs) -> CliResult<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let ckpt = require(args.checkpoint, file.checkpoint, "checkpoint")?;
    let data_path = require(args.data, file.data, "data")?;
    let out: Option<PathBuf> = args.out.or(file.out);
    require_file(&ckpt)?;
    require_file(&data_path)?;
    if let Some(o) = &out {
        ensure_parent(o)?;
    }

    let model = load_checkpoint(&ckpt).map_err(|e| CliError::at(&ckpt, e))?;
    let (data, classes) = load_data(&data_path)?;
    if classes != model.classes() {
        return Err(CliError::validation(format!(
            "dimension mismatch: checkpoint has {} classes, dataset has {classes}",
            model.classes()
        )));
    }
    let ev = evaluate(&model, &data).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("dimension mismatch between checkpoint and dataset: {}", err.message);
        err
    })?;
    let mut report = serde_json::to_value(&ev).expect("serializable");
    report["format"] = json!(1);
    report["samples"] = json!(data.len());
    if let Some(o) = &out {
        write_json(o, &report)?;
    }
    print_json(&report);
    Ok(())
}

pub fn ablate(args: AblateArgs) -> CliResult<()> {
    let file = FileConfig::load(args.model.config.as_deref())?;
    let train_path = require(args.data, file.data.clone(), "data")?;
    let test_path = require(args.test_data, file.test_data.clone(), "test_data")?;
    let out: Option<PathBuf> = args.out.or(file.out.clone());
    let param = args.param.as_str();
    if param != "scales" && param != "lambda" {
        return Err(CliError::usage(format!("unknown ablation `{param}` (scales | lambda)")));
    }
    require_file(&train_path)?;
    require_file(&test_path)?;
    if let Some(o) = &out {
        ensure_parent(o)?;
    }

    let (train_set, classes) = load_data(&train_path)?;
    let (test_set, test_classes) = load_data(&test_path)?;
    if classes != test_classes {
        return Err(CliError::validation(format!(
            "train set has {classes} classes, test set has {test_classes}"
        )));
    }
    let settings = resolve(&args.model, &file, &train_set, classes)?;
    let rows = if param == "scales" {
        let sets = match args.scale_sets.as_deref() {
            Some(s) => parse_scale_sets(s)?,
            None => vec![vec![0.5], vec![0.5, 1.0], vec![0.5, 1.0, 1.5]],
        };
        for set in &sets {
            let mut probe = settings.model.clone();
            probe.scales = set.clone();
            probe.validate().map_err(|e| CliError::usage(e.to_string()))?;
        }
        ablate_scales(&sets, &settings.model, &train_set, &test_set, &settings.train)?
    } else {
        let lambdas = match args.lambdas.as_deref() {
            Some(s) => parse_f64_list(s)?,
            None => DEFAULT_LAMBDA_GRID.to_vec(),
        };
        if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(CliError::usage(format!("lambdas must be finite and >= 0: {lambdas:?}")));
        }
        ablate_lambda(&lambdas, &settings.model, &train_set, &test_set, &settings.train)?
    };
    let report = json!({
        "format": 1,
        "param": param,
        "rows": rows,
        "model": settings.model,
        "train": settings.train,
    });
    if let Some(o) = &out {
        write_json(o, &report)?;
    }
    print_json(&report);
    Ok(())
}
