//! Reverse-mode differentiation over dense matrices, the layer types the
//! networks are built from, and the RMSProp optimizer.

mod graph;
mod layers;
mod optim;
mod params;

pub use graph::{Gradients, Graph, Matrix, NodeId};
pub use layers::{dense_forward, gru_step, Dense, GruParams};
pub use optim::RmsProp;
pub use params::{ParamId, Parameter, ParameterStore};
