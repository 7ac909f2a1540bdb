//! Small reverse-mode autodiff for vector-valued MLP computations.

mod adam;
mod checkpoint;
mod mlp;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamShapeError, AdamState};
pub use checkpoint::{
    read_checkpoint, write_checkpoint, ArrayEntry, CheckpointError, Manifest, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use mlp::Mlp;
pub use params::{ParamArray, ParamId, ParamSet};
pub use tape::{Gradients, Tape, TapeError, Tensor};

#[cfg(test)]
mod tests;
