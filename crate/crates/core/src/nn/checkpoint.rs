//! JSON model checkpoints. Tensor payloads are base64 little-endian `f64`
//! so a reload reproduces every bit.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::model::{ListwiseHyper, ListwiseNet, PairwiseHyper, PairwiseNet, RankerModel};
use super::optim::Parameterized;
use crate::catalog::write_atomic;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "pxtrank-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: RankerModel,
    pub training: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
enum HyperRecord {
    Listwise { hyper: ListwiseHyper },
    Pairwise { hyper: PairwiseHyper },
}

#[derive(Serialize, Deserialize)]
struct CheckpointRecord {
    format: String,
    version: u32,
    #[serde(flatten)]
    hyper: HyperRecord,
    tensors: Vec<TensorRecord>,
    training: TrainingMeta,
}

fn encode_f64(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_f64(name: &str, text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Checkpoint(format!("tensor `{name}`: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!(
            "tensor `{name}`: payload of {} bytes is not a whole number of f64",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn tensor_records<P: Parameterized>(model: &P) -> Vec<TensorRecord> {
    model
        .tensors()
        .into_iter()
        .map(|(name, t)| TensorRecord {
            name: name.to_string(),
            rows: t.rows(),
            cols: t.cols(),
            data: encode_f64(t.data()),
        })
        .collect()
}

fn fill<P: Parameterized>(model: &mut P, records: &[TensorRecord]) -> Result<()> {
    let mut slots = model.tensors_mut();
    if slots.len() != records.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            slots.len(),
            records.len()
        )));
    }
    for (name, slot) in slots.iter_mut() {
        let rec = records
            .iter()
            .find(|r| r.name == *name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        if (rec.rows, rec.cols) != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` is {}x{}, model needs {:?}",
                rec.rows,
                rec.cols,
                slot.shape()
            )));
        }
        let data = decode_f64(name, &rec.data)?;
        if data.len() != rec.rows * rec.cols {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` holds {} values for shape {}x{}",
                data.len(),
                rec.rows,
                rec.cols
            )));
        }
        slot.data_mut().copy_from_slice(&data);
    }
    Ok(())
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        if !self.training.final_loss.is_finite() {
            return Err(Error::Checkpoint("final loss is not finite".into()));
        }
        let (hyper, tensors) = match &self.model {
            RankerModel::Listwise(m) => (HyperRecord::Listwise { hyper: m.hyper }, tensor_records(m)),
            RankerModel::Pairwise(m) => (HyperRecord::Pairwise { hyper: m.hyper }, tensor_records(m)),
        };
        let record = CheckpointRecord {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            hyper,
            tensors,
            training: self.training.clone(),
        };
        let mut out = serde_json::to_vec_pretty(&record)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let record: CheckpointRecord =
            serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if record.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", record.format)));
        }
        if record.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                record.version
            )));
        }
        let model = match record.hyper {
            HyperRecord::Listwise { hyper } => {
                let mut m = ListwiseNet::init(hyper, 0);
                fill(&mut m, &record.tensors)?;
                RankerModel::Listwise(m)
            }
            HyperRecord::Pairwise { hyper } => {
                let mut m = PairwiseNet::init(hyper, 0);
                fill(&mut m, &record.tensors)?;
                RankerModel::Pairwise(m)
            }
        };
        Ok(Checkpoint {
            model,
            training: record.training,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }
}
