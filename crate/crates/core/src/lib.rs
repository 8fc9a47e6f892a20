pub mod alteration;
pub mod center;
pub mod error;
pub mod facility;
pub mod harness;
pub mod kps;
pub mod linsolve;
pub mod median_bipoint;
pub mod median_pairs;
pub mod rounding;
pub mod tails;

pub use error::{Error, Result};
