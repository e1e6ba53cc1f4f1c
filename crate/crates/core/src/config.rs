//! Hyperparameters and protocol switches for one adaptation run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{AdcError, Result};
use crate::exec::ExecMode;

/// Which prediction labels the cache during the second (inference) pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pass2Label {
    /// Fused (cache-enhanced) prediction.
    #[default]
    Enhanced,
    /// Base model prediction, for ablation.
    Base,
}

/// How the inference pass snapshots the cache for retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    /// The snapshot is refreshed after every record.
    #[default]
    Streaming,
    /// One snapshot per `batch_size` records; retrieval inside a batch may run in parallel.
    Batched,
}

/// Source of the class frequency table driving capacity allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencySource {
    /// Count pseudo-labels as they are observed.
    #[default]
    Online,
    /// Fixed counts loaded from `freq_file`.
    Offline,
}

/// How the evaluation splits classes into rare and non-rare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RareRule {
    /// Classes with frequency below `rare_threshold`.
    Threshold,
    /// The least frequent quarter of the classes.
    BottomQuartile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcConfig {
    /// Diversity weight in the joint score.
    pub tau: f64,
    /// Locality bandwidth of the Gaussian term in the diversity score.
    pub bandwidth: f64,
    /// Allocation intensity exponent of the capacity scaling function.
    pub alpha_alloc: f64,
    /// Additive smoothing of the capacity scaling function.
    pub gamma_smooth: f64,
    /// Relative-frequency modulation of the capacity scaling function.
    pub lambda_mod: f64,
    pub k_base: usize,
    pub k_min: usize,
    pub k_max: usize,
    /// Cache logit scale at fusion.
    pub alpha_fuse: f64,
    /// Affinity sharpness of the exponential weighting.
    pub beta: f64,
    pub aug_count: usize,
    pub aug_keep_fraction: f64,
    pub severity: f64,
    pub rare_threshold: u64,
    pub seed: u64,

    pub use_diversity: bool,
    pub use_adaptive_capacity: bool,
    pub use_augmentation: bool,
    /// Divide the diversity sum by `|temp| - 1` instead of `|temp|`.
    pub diversity_exclusive_denominator: bool,
    /// Retrieve from every cached class when the predicted object has no entries.
    pub global_fallback: bool,
    pub pass2_label: Pass2Label,
    pub retrieval_mode: RetrievalMode,
    pub batch_size: usize,
    /// Updates between queue completions during the inference pass.
    pub completion_interval: usize,
    /// Updates between quality-trace samples.
    pub trace_interval: usize,
    pub freq_source: FrequencySource,
    pub freq_file: Option<PathBuf>,
    /// `None` picks per input kind: bottom quartile for synthetic streams,
    /// threshold for replayed records.
    pub rare_rule: Option<RareRule>,
    pub exec: ExecMode,
}

impl Default for AdcConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            bandwidth: 1.0,
            alpha_alloc: 0.5,
            gamma_smooth: 1.0,
            lambda_mod: 1.0,
            k_base: 6,
            k_min: 3,
            k_max: 12,
            alpha_fuse: 3.0,
            beta: 5.0,
            aug_count: 64,
            aug_keep_fraction: 0.1,
            severity: 1.0,
            rare_threshold: 10,
            seed: 0,
            use_diversity: true,
            use_adaptive_capacity: true,
            use_augmentation: true,
            diversity_exclusive_denominator: false,
            global_fallback: false,
            pass2_label: Pass2Label::Enhanced,
            retrieval_mode: RetrievalMode::Streaming,
            batch_size: 100,
            completion_interval: 1000,
            trace_interval: 100,
            freq_source: FrequencySource::Online,
            freq_file: None,
            rare_rule: None,
            exec: ExecMode::Parallel,
        }
    }
}

fn require(ok: bool, field: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(AdcError::config(field, message))
    }
}

impl AdcConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = |field: &str, v: f64| require(v.is_finite(), field, "must be finite");
        for (field, v) in [
            ("tau", self.tau),
            ("bandwidth", self.bandwidth),
            ("alpha_alloc", self.alpha_alloc),
            ("gamma_smooth", self.gamma_smooth),
            ("lambda_mod", self.lambda_mod),
            ("alpha_fuse", self.alpha_fuse),
            ("beta", self.beta),
            ("aug_keep_fraction", self.aug_keep_fraction),
            ("severity", self.severity),
        ] {
            finite(field, v)?;
        }
        require((0.0..=1.0).contains(&self.tau), "tau", "must lie in [0, 1]")?;
        require(self.bandwidth > 0.0, "bandwidth", "must be > 0")?;
        require(
            self.alpha_alloc > 0.0 && self.alpha_alloc <= 1.0,
            "alpha_alloc",
            "must lie in (0, 1]",
        )?;
        require(self.gamma_smooth > 0.0, "gamma_smooth", "must be > 0")?;
        require(self.lambda_mod >= 0.0, "lambda_mod", "must be >= 0")?;
        require(self.k_base > 0, "k_base", "must be a positive integer")?;
        require(self.k_min > 0, "k_min", "must be a positive integer")?;
        require(self.k_max > 0, "k_max", "must be a positive integer")?;
        require(self.k_min <= self.k_max, "k_min", "must not exceed k_max")?;
        require(self.alpha_fuse >= 0.0, "alpha_fuse", "must be >= 0")?;
        require(self.beta > 0.0, "beta", "must be > 0")?;
        require(
            self.aug_count > 0,
            "aug_count",
            "must be a positive integer",
        )?;
        require(
            self.aug_keep_fraction > 0.0 && self.aug_keep_fraction <= 1.0,
            "aug_keep_fraction",
            "must lie in (0, 1]",
        )?;
        require(self.severity >= 0.0, "severity", "must be >= 0")?;
        require(
            self.rare_threshold > 0,
            "rare_threshold",
            "must be a positive integer",
        )?;
        require(
            self.batch_size > 0,
            "batch_size",
            "must be a positive integer",
        )?;
        require(
            self.completion_interval > 0,
            "completion_interval",
            "must be a positive integer",
        )?;
        require(
            self.trace_interval > 0,
            "trace_interval",
            "must be a positive integer",
        )?;
        require(
            self.freq_source == FrequencySource::Online || self.freq_file.is_some(),
            "freq_file",
            "required when freq_source = \"offline\"",
        )?;
        Ok(())
    }

    /// Variants kept per source entry by the augmentation entropy filter.
    pub fn aug_keep_count(&self) -> usize {
        (self.aug_keep_fraction * self.aug_count as f64).floor() as usize
    }
}
