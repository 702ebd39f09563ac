pub mod copula;
pub mod data;
pub mod diagnose;
pub mod error;
pub mod estimate;
pub mod likelihood;
mod par;
pub mod quadrature;
pub mod select;
pub mod simulate;
pub mod special;
pub mod tree;

pub use copula::{Copula, CopulaFamily};
pub use data::{CutpointSet, ResponseMatrix};
pub use error::{Error, Result};
pub use likelihood::{ModelSpec, ParamVector, Slot, Structure};
pub use quadrature::QuadratureRule;
pub use tree::EdgeSet;
