//! Neural network building blocks with reverse-mode differentiation.

pub mod flow;
pub mod model;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use flow::{Flow, FlowLayer, Predictive};
pub use model::{conv_param_count, BlockParams, FilmParams, HeadKind, ModelConfig, ParamStore, SpecLossMode};
pub use optim::Adam;
pub use tape::{Gradients, Tape, Unary, Var};
pub use tensor::{Kernel, Tensor};
