pub mod acceptance;
pub mod bowen;
pub mod catalog;
pub mod error;
pub mod horseshoe;
pub mod interval;
pub mod product;
pub mod shift;

pub use error::{Error, Result};
