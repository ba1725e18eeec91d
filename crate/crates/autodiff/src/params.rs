//! Named parameter storage and the on-disk checkpoint format.
//!
//! A checkpoint is a pair of files sharing a stem: `<stem>.bin` holds every
//! tensor as consecutive little-endian `f32` values, and `<stem>.json` is an
//! index array of `{name, shape, offset}` entries (offset in bytes).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AutodiffError, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

fn stem_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let mut bin = stem.as_os_str().to_owned();
    bin.push(".bin");
    let mut json = stem.as_os_str().to_owned();
    json.push(".json");
    (PathBuf::from(bin), PathBuf::from(json))
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Registers every tensor on `tape` as a gradient-receiving leaf.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.param(v.clone())))
                .collect(),
        }
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        let (bin_path, json_path) = stem_paths(stem);
        if let Some(dir) = bin_path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut bytes = Vec::with_capacity(self.numel() * 4);
        let mut index = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            index.push(IndexEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset: bytes.len() as u64,
            });
            for &v in t.data() {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        fs::write(&bin_path, bytes)?;
        fs::write(&json_path, serde_json::to_vec_pretty(&index)?)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (bin_path, json_path) = stem_paths(stem);
        let bytes = fs::read(&bin_path)?;
        let index: Vec<IndexEntry> = serde_json::from_slice(&fs::read(&json_path)?)?;
        let mut store = Self::new();
        for e in index {
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start + 4 * n;
            if end > bytes.len() {
                return Err(AutodiffError::Checkpoint(format!(
                    "tensor {} extends past end of {}",
                    e.name,
                    bin_path.display()
                )));
            }
            let data = bytes[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            store.insert(e.name, Tensor::new(&e.shape, data)?);
        }
        Ok(store)
    }
}

/// Parameters registered on one tape.
#[derive(Debug)]
pub struct BoundParams<'t> {
    vars: BTreeMap<String, Var<'t>>,
}

impl<'t> BoundParams<'t> {
    /// Binds arbitrary tape variables under parameter names, e.g. to check
    /// gradients with respect to parameters.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var<'t>)>) -> Self {
        Self {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| AutodiffError::InvalidArgument(format!("unknown parameter {name}")))
    }

    /// Gradients keyed by parameter name; parameters that did not influence
    /// the output get zeros.
    pub fn gradients(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| (k.clone(), grads.get_or_zeros(*v)))
            .collect()
    }
}
