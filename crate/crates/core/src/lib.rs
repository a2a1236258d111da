pub mod bol;
pub mod cli;
pub mod config;
pub mod continuation;
pub mod error;
pub mod fem;
pub mod kelvin;
pub mod levelset;
pub mod mesh;
pub mod model;
pub mod quadrature;
pub mod rearrange;
pub mod region;
pub mod solver;
pub mod spectrum;
pub mod table;
pub mod weights;

pub use error::{Error, Result};
