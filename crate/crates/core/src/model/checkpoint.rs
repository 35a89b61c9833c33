//! Binary checkpoint container.
//!
//! ```text
//! "GLAMCKPT"  u32 version  u32 header_len  header (JSON)
//! u32 tensor_count  { u32 name_len  name  u32 rows  u32 cols  f32[rows*cols] }*
//! ```
//!
//! All integers and floats are little-endian. Tensors appear in parameter
//! order, followed by the batch-norm running statistics when the header's
//! `running_stats` flag is set.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc_model::ClassSchema;
use crate::error::{GlamError, Result};
use crate::featurize::FeatureSchema;
use crate::tensor::{ParamStore, Tensor};

use super::{Glam, ModelConfig, RunningStats};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GLAMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const RUNNING: [&str; 4] = ["input_bn.running_mean", "input_bn.running_var", "edge_bn.running_mean", "edge_bn.running_var"];

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    feature_schema_version: u32,
    class_names: Vec<String>,
    running_stats: bool,
}

/// A trained model with the schemas it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Glam<f32>,
    pub feature_schema_version: u32,
    pub class_names: Vec<String>,
}

impl Checkpoint {
    pub fn new(model: Glam<f32>, features: &FeatureSchema, classes: &ClassSchema) -> Self {
        Checkpoint { model, feature_schema_version: features.version, class_names: classes.names().to_vec() }
    }

    pub fn class_schema(&self) -> Result<ClassSchema> {
        ClassSchema::new(self.class_names.clone())
    }

    pub fn feature_schema(&self) -> Result<FeatureSchema> {
        FeatureSchema::by_version(self.feature_schema_version)
    }

    /// Fails with a version error unless inputs built with `features` and
    /// labeled with `classes` fit this model.
    pub fn check_compatible(&self, features: &FeatureSchema, classes: &ClassSchema) -> Result<()> {
        if features.version != self.feature_schema_version || features.dim() != self.model.config.node_features {
            return Err(GlamError::Version(format!(
                "checkpoint expects feature schema v{} ({} features), got v{} ({})",
                self.feature_schema_version,
                self.model.config.node_features,
                features.version,
                features.dim()
            )));
        }
        if classes.names() != self.class_names.as_slice() {
            return Err(GlamError::Version("checkpoint class schema differs".into()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.model.config.clone(),
            feature_schema_version: self.feature_schema_version,
            class_names: self.class_names.clone(),
            running_stats: true,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let m = &self.model;
        let stats = [&m.input_norm.mean, &m.input_norm.var, &m.edge_norm.mean, &m.edge_norm.var];
        out.extend_from_slice(&((m.params.len() + stats.len()) as u32).to_le_bytes());
        let mut put = |name: &str, rows: usize, cols: usize, data: &[f32]| {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(rows as u32).to_le_bytes());
            out.extend_from_slice(&(cols as u32).to_le_bytes());
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for p in m.params.iter() {
            put(&p.name, p.value.rows(), p.value.cols(), p.value.data());
        }
        for (name, s) in RUNNING.iter().zip(stats) {
            put(name, 1, s.len(), s);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(GlamError::Format("not a GLAM checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(GlamError::Version(format!("checkpoint version {version}")));
        }
        let len = r.u32()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(len)?).map_err(|e| GlamError::Format(format!("checkpoint header: {e}")))?;
        header.config.validate()?;
        let layout = header.config.layout();
        let expected = layout.len() + if header.running_stats { RUNNING.len() } else { 0 };
        let count = r.u32()? as usize;
        if count != expected {
            return Err(GlamError::Format(format!("{count} tensors, configuration implies {expected}")));
        }
        let mut store = ParamStore::new();
        for (name, rows, cols) in &layout {
            let t = r.tensor(name, *rows, *cols)?;
            store.insert(name.clone(), t)?;
        }
        let norms = if header.running_stats {
            let f = header.config.node_features;
            let e = header.config.edge_input();
            let mut v = Vec::new();
            for (name, dim) in RUNNING.iter().zip([f, f, e, e]) {
                v.push(r.tensor(name, 1, dim)?.into_data());
            }
            let mut it = v.into_iter();
            let mut next = || it.next().expect("four running tensors");
            Some((RunningStats { mean: next(), var: next() }, RunningStats { mean: next(), var: next() }))
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(GlamError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let model = Glam::from_parts(header.config, store, norms)?;
        Ok(Checkpoint { model, feature_schema_version: header.feature_schema_version, class_names: header.class_names })
    }
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(GlamError::Format(format!("checkpoint truncated at byte {}", self.bytes.len())));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn tensor(&mut self, name: &str, rows: usize, cols: usize) -> Result<Tensor<f32>> {
        let len = self.u32()? as usize;
        let got = self.take(len)?;
        if got != name.as_bytes() {
            return Err(GlamError::Format(format!("expected tensor {name}, found {}", String::from_utf8_lossy(got))));
        }
        let (r, c) = (self.u32()? as usize, self.u32()? as usize);
        if (r, c) != (rows, cols) {
            return Err(GlamError::Format(format!("tensor {name} has shape {r}x{c}, expected {rows}x{cols}")));
        }
        let raw = self.take(r * c * 4)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        Tensor::new(r, c, data)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
