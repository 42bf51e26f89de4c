//! Link-level simulation and analysis of precoded OTFS.

pub mod analysis;
pub mod channel;
pub mod cli;
pub mod detector;
pub mod error;
pub mod linalg;
pub mod modem;
pub mod montecarlo;
pub mod precoder;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use modem::{Alphabet, OtfsDims};
