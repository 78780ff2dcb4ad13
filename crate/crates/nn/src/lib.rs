//! Minimal dense autodiff for sequence models.
//!
//! A [`Graph`] records operations on `f64` matrices and replays them in
//! reverse to produce [`Gradients`] for the [`ParamSet`] it borrows. The op
//! set is what an LSTM tagger, an attention Seq2Seq model and a Transformer
//! need, with a fused attention kernel and a fused LSTM cell.

mod graph;
pub mod layers;
mod params;
mod tensor;

pub use graph::{row_distribution, AttentionSpec, Graph, Var};
pub use params::{Gradients, ParamId, ParamSet};
pub use tensor::{argmax, softmax_in_place, Tensor};
