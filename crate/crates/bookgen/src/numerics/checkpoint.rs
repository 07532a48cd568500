//! Named parameter tensors and the versioned checkpoint file.
//!
//! A checkpoint is a single JSON document: format version, an arbitrary
//! serializable config, and the parameter map (name -> shape + data).
//! Loading validates the version and that each tensor's data length
//! matches its shape; name/shape agreement with a concrete model is
//! checked by the model loader, which knows the expected set.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::rc::Rc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Shape, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Ordered map of named parameter tensors. Values are reference-counted
/// so binding them into a graph is free; updates go through
/// [`ParamStore::get_mut`] which copies only when a graph still holds
/// the value.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: BTreeMap<String, (Shape, Rc<Vec<f64>>)>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, shape: Shape, data: Vec<f64>) {
        assert_eq!(data.len(), shape.0 * shape.1, "param {name} data length");
        self.params.insert(name.to_string(), (shape, Rc::new(data)));
    }

    pub fn shape(&self, name: &str) -> Option<Shape> {
        self.params.get(name).map(|(s, _)| *s)
    }

    pub fn data(&self, name: &str) -> Option<Rc<Vec<f64>>> {
        self.params.get(name).map(|(_, d)| d.clone())
    }

    pub fn values(&self, name: &str) -> &[f64] {
        &self.params[name].1
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.params.get_mut(name).map(|(_, d)| Rc::make_mut(d))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.params.values().map(|(s, _)| s.0 * s.1).sum()
    }

    /// Bind a parameter into `graph` as a trainable leaf.
    pub fn bind<'g>(&self, graph: &'g Graph, name: &str) -> Tensor<'g> {
        let (shape, data) = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        graph.param(*shape, data.clone())
    }
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    shape: (usize, usize),
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile<C> {
    version: u32,
    config: C,
    params: BTreeMap<String, ParamRecord>,
}

pub fn save_checkpoint<C: Serialize>(
    store: &ParamStore,
    config: &C,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let params = store
        .params
        .iter()
        .map(|(name, (shape, data))| {
            (
                name.clone(),
                ParamRecord {
                    shape: *shape,
                    data: data.as_ref().clone(),
                },
            )
        })
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        config,
        params,
    };
    let out = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer(BufWriter::new(out), &file)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(())
}

pub fn load_checkpoint<C: DeserializeOwned>(path: impl AsRef<Path>) -> Result<(ParamStore, C)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let input = File::open(path).map_err(|e| Error::io(path, e))?;
    let file: CheckpointFile<C> = serde_json::from_reader(BufReader::new(input))
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            file.version
        )));
    }
    let mut store = ParamStore::new();
    for (name, record) in file.params {
        if record.data.len() != record.shape.0 * record.shape.1 {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: {} values do not fill shape {:?}",
                record.data.len(),
                record.shape
            )));
        }
        store.insert(&name, record.shape, record.data);
    }
    Ok((store, file.config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct ToyConfig {
        dim: usize,
    }

    #[test]
    fn checkpoint_round_trips_values_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut store = ParamStore::new();
        store.insert("a.w", (2, 3), vec![0.1, -0.2, 0.3, 1.5e-7, 4.0, -5.25]);
        store.insert("b.alpha", (1, 1), vec![-4.0]);
        save_checkpoint(&store, &ToyConfig { dim: 7 }, &path).unwrap();
        let (loaded, config): (ParamStore, ToyConfig) = load_checkpoint(&path).unwrap();
        assert_eq!(config, ToyConfig { dim: 7 });
        assert_eq!(loaded.shape("a.w"), Some((2, 3)));
        assert_eq!(loaded.values("a.w"), store.values("a.w"));
        assert_eq!(loaded.values("b.alpha"), &[-4.0]);
    }

    #[test]
    fn corrupt_shape_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        std::fs::write(
            &path,
            r#"{"version":1,"config":{"dim":1},"params":{"w":{"shape":[2,2],"data":[1.0]}}}"#,
        )
        .unwrap();
        let err = load_checkpoint::<ToyConfig>(&path).unwrap_err();
        assert!(err.to_string().contains("do not fill shape"), "{err}");
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        std::fs::write(&path, r#"{"version":99,"config":{"dim":1},"params":{}}"#).unwrap();
        let err = load_checkpoint::<ToyConfig>(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn missing_file_is_a_missing_artifact() {
        let err = load_checkpoint::<ToyConfig>("/nonexistent/model.ckpt").unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }
}
