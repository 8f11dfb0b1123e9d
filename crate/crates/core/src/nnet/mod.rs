//! Small residual CNN on a flat `f64` parameter vector.

pub mod checkpoint;
pub mod conv;
pub mod loss;
pub mod network;
pub mod optim;
pub mod state;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use loss::{bce_loss, sigmoid};
pub use network::{DropoutMasks, ForwardTrace, Mode, NetConfig, Network, ParamKind, ParamTensor, SampleTrace};
pub use optim::{apply_head_max_norm, apply_max_norm, AdamParams, OptimizerKind, OptimizerState};
pub use state::NetState;
pub use tensor::Tensor;
