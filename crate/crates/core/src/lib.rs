//! Superpixel segmentation and classification of endoscopy frames.
//!
//! Frames are partitioned into superpixels (SLIC or quick shift), each
//! superpixel is described by 35 texture and color statistics, features are
//! ranked by Laplacian score, and an SMO-trained SVM labels superpixels as
//! normal or abnormal. Pixel-level confusion counts score the result
//! against hand-drawn masks.

pub mod bench;
pub mod channels;
pub mod classify;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod frame;
pub mod io_util;
pub mod pipeline;
pub mod selection;
pub mod superpixel;
pub mod synth;

pub use channels::{derive_channels, ChannelStack};
pub use dataset::{split_by_patient, DatasetManifest, Disease, Record, SplitPlan};
pub use features::{
    extract_features, label_superpixels, lbp_map, uniform_lbp_map, FeatureMatrix, LbpParams,
    SuperpixelLabels,
};
pub use frame::{load_frame, load_mask, Frame, FrameError, Mask, Plane};
pub use superpixel::{
    enforce_connectivity, quickshift_segment, slic_segment, QsParams, SlicParams, SuperpixelMap,
};
pub use selection::{laplacian_scores, select_features, FeatureRanking, HeatT, ScorerParams};
pub use classify::{load_model, save_model, svm_predict, svm_train, Gamma, KernelKind, SvmModel, SvmParams};
pub use eval::{aggregate, measures, pixel_confusion, Measures, PixelConfusion, Report, Scope};
