//! Small reverse-mode differentiation toolkit shared by the generative
//! architecture model and the surrogate: a tape over dense `f64` matrices,
//! dense and gated-recurrent layers, an Adam optimizer over named
//! parameters, and a plain-text checkpoint format.
//!
//! Everything is column-vector oriented. There is no broadcasting beyond
//! matrix products and same-shape elementwise ops.

mod checkpoint;
pub mod gradcheck;
mod layers;
mod store;
mod tape;

pub use checkpoint::Checkpoint;
pub use layers::{Activation, Dense, GatedSum, Gru};
pub use store::{AdamConfig, ParamId, ParamStore};
pub use tape::{CustomOp, Grads, Tape, Var};
pub(crate) use tape::sigmoid;

pub type Matrix = nalgebra::DMatrix<f64>;

/// Column vector helper.
pub fn column(values: &[f64]) -> Matrix {
    Matrix::from_column_slice(values.len(), 1, values)
}

pub fn one_hot(index: usize, len: usize) -> Matrix {
    let mut m = Matrix::zeros(len, 1);
    m[(index, 0)] = 1.0;
    m
}
