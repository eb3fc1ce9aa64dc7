//! Flame stability classification for flame-spray-pyrolysis video.
//!
//! Two classifiers share one frame model:
//!
//! * [`flsc`] thresholds per-frame anchor-region luminance deviations against
//!   the clip mean and needs the whole clip up front.
//! * [`pipeline`] projects one-second feature windows onto two principal
//!   components and labels them by their nearest k-means centroid, so it can
//!   run online over a live stream.
//!
//! Both are reachable by name through [`classifier::ClassifierRegistry`].
//! [`evaluation`] scores predictions against expert ratings and [`synthgen`]
//! produces seeded test footage.

mod binio;
pub mod classifier;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod flsc;
pub mod imaging;
pub mod kmeans;
pub mod label;
pub mod pca;
pub mod pipeline;
pub mod stats;
pub mod stream;
pub mod synthgen;

pub use error::{Error, Result};
pub use imaging::{BoundingBox, Clip, Frame};
pub use label::{Binary, StabilityLabel};
