#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod anatomy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod image;
pub mod memory;
pub mod raster;
pub mod registration;
pub mod segmentation;

pub use anatomy::{AnatomicalRegion, RegionHistogram};
pub use error::{Error, Result};
