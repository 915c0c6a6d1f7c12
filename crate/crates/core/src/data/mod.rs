//! Dataset readers, pretraining sources and the model file format.

pub mod cmapss;
pub mod model_file;
pub mod ncmapss;
pub mod pretrain;
pub mod series;

pub use series::{Segment, SegmentedSeries};
