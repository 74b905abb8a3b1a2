//! Model checkpoints: one line of JSON header, a newline, then every
//! parameter as a little-endian `f64`, tensors in header order, each
//! column-major.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, MsGwnnModel};
use crate::rng::SeedTree;
use crate::spectral::OperatorMode;

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: u32,
    pub dims: Vec<usize>,
    pub scales: Vec<f64>,
    pub mode: String,
    pub k: Option<usize>,
    pub layout: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorInfo>,
}

impl CheckpointHeader {
    pub fn of(model: &MsGwnnModel) -> Self {
        let config = model.config().clone();
        let (mode, k) = match config.mode {
            OperatorMode::Exact => ("exact".to_string(), None),
            OperatorMode::Chebyshev { k } => ("chebyshev".to_string(), Some(k)),
        };
        Self {
            format: CHECKPOINT_FORMAT,
            dims: config.dims(),
            scales: config.scales.clone(),
            mode,
            k,
            layout: "column-major".into(),
            tensors: model
                .params()
                .into_iter()
                .map(|(name, shape, _)| TensorInfo { name, shape })
                .collect(),
            config,
        }
    }
}

pub fn write_checkpoint(model: &MsGwnnModel, mut out: impl Write) -> Result<()> {
    let header = CheckpointHeader::of(model);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for (_, _, values) in model.params() {
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(input: impl Read) -> Result<MsGwnnModel> {
    let mut reader = BufReader::new(input);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Checkpoint("missing header line".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&line)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unsupported checkpoint format {}", header.format)));
    }
    if header.layout != "column-major" {
        return Err(Error::Checkpoint(format!("unsupported layout {}", header.layout)));
    }
    if header.dims != header.config.dims() {
        return Err(Error::Checkpoint("header dims disagree with the stored config".into()));
    }
    let mut model = MsGwnnModel::new(header.config.clone(), SeedTree::new(0))?;
    let expected = CheckpointHeader::of(&model).tensors;
    if expected != header.tensors {
        return Err(Error::Checkpoint("tensor list does not match the model config".into()));
    }
    let mut buf = [0u8; 8];
    for tensor in model.params_mut() {
        for v in tensor.iter_mut() {
            reader
                .read_exact(&mut buf)
                .map_err(|_| Error::Checkpoint("parameter blob is truncated".into()))?;
            *v = f64::from_le_bytes(buf);
        }
    }
    if reader.read(&mut buf)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameter blob".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &MsGwnnModel, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(model, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MsGwnnModel> {
    read_checkpoint(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BranchKind;

    fn model(branch: BranchKind, affine: bool) -> MsGwnnModel {
        let mut c = ModelConfig::new(3, 2, 4);
        c.hidden = vec![4, 3];
        c.branch = branch;
        c.readout_affine = affine;
        MsGwnnModel::new(c, SeedTree::new(11)).unwrap()
    }

    #[test]
    fn round_trip() {
        for (kind, affine) in [(BranchKind::Gwnn, false), (BranchKind::Gwnn, true), (BranchKind::Gcn, false)] {
            let m = model(kind, affine);
            let mut bytes = Vec::new();
            write_checkpoint(&m, &mut bytes).unwrap();
            let back = read_checkpoint(bytes.as_slice()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn header_and_blob_layout() {
        let m = model(BranchKind::Gwnn, false);
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(header["format"], 1);
        assert_eq!(header["dims"], serde_json::json!([3, 4, 3, 2]));
        assert_eq!(header["mode"], "chebyshev");
        assert_eq!(header["k"], 2);
        assert_eq!(bytes.len() - nl - 1, 8 * m.param_count());
        let first = f64::from_le_bytes(bytes[nl + 1..nl + 9].try_into().unwrap());
        assert_eq!(first, m.params()[0].2[0]);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let m = model(BranchKind::Gwnn, false);
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(read_checkpoint(truncated), Err(Error::Checkpoint(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(read_checkpoint(extra.as_slice()), Err(Error::Checkpoint(_))));
        assert!(read_checkpoint(&b"{}"[..]).is_err());
    }
}
