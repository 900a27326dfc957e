//! Pipeline tunables and run-mode switches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every tunable of the localization pipeline. Defaults match the shipped
/// medium-scale configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineParams {
    /// Signature length in bits.
    pub signature_bits: usize,
    /// Coarse Hamming threshold for candidate generation (inclusive).
    pub hamming_threshold: u32,
    /// Image-side ratio test floor; candidates below it are rejected.
    pub ratio_test_floor: f64,
    /// Width of the Gaussian distance weighting. When absent in a params
    /// file it defaults to a quarter of `signature_bits`.
    pub gaussian_sigma: f64,
    /// Match score at or above which a match counts as high-confidence.
    pub confidence_threshold: f64,
    /// Number of top-voted images whose matches are selected for the
    /// auxiliary pose.
    pub vote_top_k: usize,
    /// Larger image count defining the relaxed visibility match pool.
    pub pool_top_k: usize,
    /// Maximum number of matches selected by spatial reconfiguration.
    pub selection_budget: usize,
    /// Promoted matches may be at most this fraction of the selected
    /// high-confidence matches.
    pub promoted_cap_ratio: f64,
    /// Reprojection threshold (pixels) for recovering pool matches with the
    /// auxiliary pose.
    pub filter_threshold_px: f64,
    /// Inlier threshold (pixels) for both RANSAC stages.
    pub final_threshold_px: f64,
    pub aux_iterations: u32,
    pub final_iterations: u32,
    /// Minimum final inlier count for a query to count as localized.
    pub min_inliers: usize,
    /// Query focal length, when known; enables the 3-point solver in the
    /// auxiliary stage.
    pub known_focal: Option<f64>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            signature_bits: 64,
            hamming_threshold: 19,
            ratio_test_floor: 0.3,
            gaussian_sigma: 16.0,
            confidence_threshold: 0.8,
            vote_top_k: 20,
            pool_top_k: 100,
            selection_budget: 100,
            promoted_cap_ratio: 0.33,
            filter_threshold_px: 10.0,
            final_threshold_px: 4.0,
            aux_iterations: 1000,
            final_iterations: 1000,
            min_inliers: 12,
            known_focal: None,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.signature_bits == 0 {
            return bad("signature_bits must be positive".into());
        }
        if self.hamming_threshold as usize > self.signature_bits {
            return bad(format!(
                "hamming_threshold {} exceeds signature_bits {}",
                self.hamming_threshold, self.signature_bits
            ));
        }
        if !(self.ratio_test_floor > 0.0 && self.ratio_test_floor < 1.0) {
            return bad(format!("ratio_test_floor {} must be in (0, 1)", self.ratio_test_floor));
        }
        if !(self.gaussian_sigma > 0.0) {
            return bad(format!("gaussian_sigma {} must be positive", self.gaussian_sigma));
        }
        if !(self.confidence_threshold > 0.0) {
            return bad(format!(
                "confidence_threshold {} must be positive",
                self.confidence_threshold
            ));
        }
        if self.vote_top_k == 0 || self.vote_top_k > self.pool_top_k {
            return bad(format!(
                "vote_top_k {} must be in [1, pool_top_k = {}]",
                self.vote_top_k, self.pool_top_k
            ));
        }
        if self.selection_budget < 4 {
            return bad(format!("selection_budget {} must be at least 4", self.selection_budget));
        }
        if !(self.promoted_cap_ratio > 0.0 && self.promoted_cap_ratio <= 1.0) {
            return bad(format!(
                "promoted_cap_ratio {} must be in (0, 1]",
                self.promoted_cap_ratio
            ));
        }
        if !(self.filter_threshold_px > 0.0) {
            return bad(format!(
                "filter_threshold_px {} must be positive",
                self.filter_threshold_px
            ));
        }
        if !(self.final_threshold_px > 0.0) {
            return bad(format!("final_threshold_px {} must be positive", self.final_threshold_px));
        }
        if self.aux_iterations == 0 || self.final_iterations == 0 {
            return bad("iteration counts must be positive".into());
        }
        if self.min_inliers < 3 {
            return bad(format!("min_inliers {} must be at least 3", self.min_inliers));
        }
        if let Some(f) = self.known_focal {
            if !(f > 0.0) {
                return bad(format!("known_focal {f} must be positive"));
            }
        }
        Ok(())
    }

    /// Parses a TOML params file. Missing keys take their defaults;
    /// `gaussian_sigma` defaults to `signature_bits / 4`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct File {
            signature_bits: Option<usize>,
            hamming_threshold: Option<u32>,
            ratio_test_floor: Option<f64>,
            gaussian_sigma: Option<f64>,
            confidence_threshold: Option<f64>,
            vote_top_k: Option<usize>,
            pool_top_k: Option<usize>,
            selection_budget: Option<usize>,
            promoted_cap_ratio: Option<f64>,
            filter_threshold_px: Option<f64>,
            final_threshold_px: Option<f64>,
            aux_iterations: Option<u32>,
            final_iterations: Option<u32>,
            min_inliers: Option<usize>,
            known_focal: Option<f64>,
        }
        let file: File =
            toml::from_str(text).map_err(|e| Error::FileFormat(format!("params: {e}")))?;
        let d = Self::default();
        let signature_bits = file.signature_bits.unwrap_or(d.signature_bits);
        let params = Self {
            signature_bits,
            hamming_threshold: file.hamming_threshold.unwrap_or(d.hamming_threshold),
            ratio_test_floor: file.ratio_test_floor.unwrap_or(d.ratio_test_floor),
            gaussian_sigma: file.gaussian_sigma.unwrap_or(signature_bits as f64 / 4.0),
            confidence_threshold: file.confidence_threshold.unwrap_or(d.confidence_threshold),
            vote_top_k: file.vote_top_k.unwrap_or(d.vote_top_k),
            pool_top_k: file.pool_top_k.unwrap_or(d.pool_top_k),
            selection_budget: file.selection_budget.unwrap_or(d.selection_budget),
            promoted_cap_ratio: file.promoted_cap_ratio.unwrap_or(d.promoted_cap_ratio),
            filter_threshold_px: file.filter_threshold_px.unwrap_or(d.filter_threshold_px),
            final_threshold_px: file.final_threshold_px.unwrap_or(d.final_threshold_px),
            aux_iterations: file.aux_iterations.unwrap_or(d.aux_iterations),
            final_iterations: file.final_iterations.unwrap_or(d.final_iterations),
            min_inliers: file.min_inliers.unwrap_or(d.min_inliers),
            known_focal: file.known_focal.or(d.known_focal),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("params serialize")
    }
}

/// Default Hamming cutoff for the plain-voting mode; the score function
/// needs a tighter threshold when no ratio test backs it up.
pub const BASELINE_VOTING_DEFAULT_THRESHOLD: u32 = 11;

/// Which variant of the pipeline to run. The default is the full method;
/// the switches disable individual stages for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Spatially reconfigure the selected matches before the auxiliary
    /// RANSAC (off: take the same number of matches by score alone).
    pub spatial_reconfiguration: bool,
    /// Pick the auxiliary hypothesis by median focal among the stored top
    /// hypotheses (off: plain max-inlier selection).
    pub median_focal_selection: bool,
    /// Score matches by the Gaussian weight alone (no ratio test) and
    /// select every match from the top-ranked images.
    pub baseline_voting: bool,
    /// Hamming cutoff used by the baseline scoring.
    pub baseline_threshold: u32,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            spatial_reconfiguration: true,
            median_focal_selection: true,
            baseline_voting: false,
            baseline_threshold: BASELINE_VOTING_DEFAULT_THRESHOLD,
        }
    }
}

impl RunOptions {
    pub fn without_spatial_reconfiguration() -> Self {
        Self { spatial_reconfiguration: false, ..Self::default() }
    }

    pub fn without_median_focal() -> Self {
        Self { median_focal_selection: false, ..Self::default() }
    }

    pub fn baseline_voting() -> Self {
        Self { baseline_voting: true, ..Self::default() }
    }
}
