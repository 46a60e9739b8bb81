//! Histogram structures: top-k augmented 1D histograms over join keys, 2D
//! key-by-column grids and exact frequency tables for categorical columns.

pub mod binning;
pub mod freq;
pub mod tkhist1d;
pub mod tkhist2d;
pub mod topk;

pub use binning::{AttrBinning, AttrValue, EquiWidthBins, Interval};
pub use freq::{attribute_binning, build_frequency_hist, AttrHist, FrequencyHist};
pub use tkhist1d::{build_tkhist1d, Bin1D, BinStats, TkHist1D};
pub use tkhist2d::{build_tkhist2d, build_tkhist2d_split, Grid, TkHist2D};
pub use topk::TopKContainer;
