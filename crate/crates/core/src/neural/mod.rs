//! Toy encoder-decoder with role-specific span selectors, trained with
//! hand-written reverse-mode gradients.

pub mod checkpoint;
pub mod model;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use model::{
    forward, forward_graph, make_selector, slot_feature, span_logits, DecoderAttention,
    ForwardGraph, ForwardOutputs, ModelConfig, ModelParams,
};
pub use optim::{clip_grad_norm, AdamW, LinearSchedule};
pub use tensor::{Mat, Scalar};
