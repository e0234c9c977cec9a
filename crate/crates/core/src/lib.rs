pub mod assignment;
pub mod augment;
pub mod baseline;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod synthdata;
pub mod tape;
pub mod tracker;
pub mod trainloss;
pub mod video;

pub use error::{Error, Result};
pub use geometry::BBox;
