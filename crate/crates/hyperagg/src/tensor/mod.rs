//! Dense matrices with reverse-mode autodiff on a recorded tape, plus the
//! optimizer. Everything is 64-bit floats.

mod adam;
mod matrix;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use matrix::Matrix;
pub use params::ParamSet;
pub use tape::{SparseMat, Tape, Var, LAYER_NORM_EPS};
