//! Dense numeric core: tensors, a reverse-mode tape, network layers, the
//! parameter store, Adam, seeded Gaussian streams and gradient checking.

mod adam;
pub mod gradcheck;
mod graph;
pub mod layers;
mod params;
mod rng;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Conv2dShape, Graph, Var};
pub use layers::{
    conv_net, graph_conv, linear, lstm_cell, ConvNetWeights, LstmState, LstmWeights,
};
pub use params::{Gradients, ParamId, ParamStore, Precision};
pub use rng::{gaussian_sample, stream_rng, SampleRng};
pub use tensor::Tensor;
