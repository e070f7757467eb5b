//! Weighted-luminance preprocessing for aerial RGB imagery.
//!
//! RGB rasters are reduced to one channel with per-channel weights chosen
//! from the sun elevation at acquisition: a red-boosting rule under a high
//! sun, a blue rule near sunrise and sunset, and fixed default coefficients
//! at night. Around that sit the pieces needed to feed a single-channel
//! YOLO-style detector: histogram tables and statistics, dataset conversion
//! with annotation pass-through, seeded train/test splits, and a
//! line-preserving darknet `.cfg` editor.
//!
//! The statistics and weight math are generic over [`num::Scalar`]
//! (`f32`/`f64`); the aliases below fix `f64`, which is what the pixel
//! pipeline accumulates in.

pub mod cfg;
pub mod convert;
pub mod dataset;
pub mod histogram;
pub mod num;
pub mod raster;
pub mod rng;
pub mod select;
pub mod solar;
pub mod synth;
pub mod weights;

pub use convert::{convert, convert_reference, ConversionMode, ConversionSpec, OutputFormat};
pub use histogram::{pooled_histogram, stats_of, tabulate, Histogram, HistogramTable};
pub use raster::{load_gray, load_rgb, save_gray, save_rgb, GrayImage, Rgb, RgbImage};
pub use select::{select_mode, weights_for, AcquisitionMeta, FilterMode, Selection};

pub type ChannelStats = histogram::ChannelStats<f64>;
pub type ChannelStatsF32 = histogram::ChannelStats<f32>;
pub type WeightTriple = weights::WeightTriple<f64>;
pub type WeightTripleF32 = weights::WeightTriple<f32>;
pub type RawWeightTriple = weights::RawWeightTriple<f64>;
pub type RawWeightTripleF32 = weights::RawWeightTriple<f32>;

/// Any error produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Raster(#[from] raster::RasterError),
    #[error(transparent)]
    Stats(#[from] histogram::StatsError),
    #[error(transparent)]
    Weights(#[from] weights::WeightError),
    #[error(transparent)]
    Select(#[from] select::SelectError),
    #[error(transparent)]
    Solar(#[from] solar::SolarError),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Cfg(#[from] cfg::CfgError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}
