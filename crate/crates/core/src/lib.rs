//! Memory-efficient image-based localization against a compressed
//! structure-from-motion model.
//!
//! The map stores one short binary signature per (3D point, visual word)
//! pair instead of full descriptors. A query is localized by a cascade of
//! filters over candidate 2D-3D matches:
//!
//! 1. feature-wise: coarse Hamming search, a bilateral ratio test and a
//!    Gaussian distance weighting produce a scored match pool plus a subset
//!    of high-confidence matches,
//! 2. visibility-wise: high-confidence matches vote for database images
//!    through the point-image visibility graph; matches seen in top-ranked
//!    images are retained, and co-visibility promotes borderline ones,
//! 3. geometry-wise: a spatially reconfigured subset feeds a RANSAC stage
//!    that estimates an auxiliary pose and focal length, which filters the
//!    relaxed pool by reprojection before the final pose is solved.
//!
//! The crate also ships a synthetic-scene harness (`synth`, `pipeline`,
//! `eval`), a binary model container (`container`) and text file formats
//! (`io`) used by the CLI.

pub mod container;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod feature_filter;
pub mod geometry;
pub mod io;
pub mod model;
pub mod params;
pub mod pipeline;
pub mod report;
mod rng;
pub mod scene;
pub mod synth;
pub mod visibility;

pub use embedding::{
    encode_query, hamming_distance, train_embedding, train_vocabulary, DescriptorSet,
    EmbeddingParams, Signature, Vocabulary,
};
pub use error::{Error, Result};
pub use eval::{evaluate, EvaluationReport, GroundTruthPose};
pub use feature_filter::{
    bilateral_ratio_test, find_candidates, gaussian_weight, gaussian_weight_zero_excluded,
    score_and_partition, BilateralScores, Candidate, CandidateSet, Match, MatchFlags, MatchPool,
    QueryFeature, QueryImage,
};
pub use geometry::{
    estimate_auxiliary_pose, estimate_final_pose, geometry_filter, p3p_solve, p4p_solve,
    reprojection_error, spatial_reconfigure, AuxiliaryEstimate, BinGrid, CameraPose,
    Correspondence, PoseHypothesis,
};
pub use model::{compress_model, integer_mean, CompressedModel, ModelEntry, PointObservations};
pub use params::{PipelineParams, RunOptions};
pub use pipeline::{
    encode_query_image, localize, localize_all, LocalizationResult, Stage, StageCounts,
    StageTimings, Status,
};
pub use report::MemoryReport;
pub use scene::{build_visibility_graph, DatabaseImage, Point3D, VisibilityGraph};
pub use synth::{
    build_model, generate_scene, GroundTruthQuery, ModelBuildOptions, SyntheticScene,
    SyntheticSceneConfig,
};
pub use visibility::{run_visibility_filter, vote_images, ImageVote, VisibilityOutcome};
