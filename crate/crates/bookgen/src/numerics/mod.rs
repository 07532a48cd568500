//! Minimal tensor library: reverse-mode autodiff, Adam, checkpoints.

mod adam;
mod checkpoint;
mod graph;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, ParamStore, CHECKPOINT_VERSION};
pub use graph::{concat_cols, concat_rows, Graph, Shape, Tensor};
