//! Trace preprocessing: send-pulse alignment, baselining, normalization,
//! smoothing, peak isolation and windowing.

mod align;
mod filter;
mod peaks;
mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Stage, SHIFTED_LEN};

pub use align::{align_and_trim, align_log, send_pulse_onset, ONSET_MAD_FACTOR, ONSET_MIN_MARGIN};
pub use filter::{
    baseline_rectify, baseline_rectify_normalize, ema_filter, lowpass_coefficient, normalize_by_max, process_batch, Ema,
};
pub use peaks::{find_peaks, Peak, PeakSet};
pub use window::{make_windows, SkipReason, Windowing};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("no sample exceeds the send-pulse onset threshold {threshold:.1}")]
    NoSendPulse { threshold: f64 },
    #[error("raw cycle has {found} samples, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("trace is at stage {found:?}, expected {expected:?}")]
    Stage { expected: Stage, found: Stage },
    #[error("trace maximum {0} leaves nothing to normalize by")]
    Degenerate(f64),
    #[error("empty batch")]
    EmptyBatch,
}

/// Peak isolation parameters, applied to max-normalized traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakParams {
    pub ema_alpha: f64,
    pub min_height: f64,
    /// Minimum index spacing between kept peaks.
    pub min_distance: usize,
    pub min_prominence: f64,
    pub min_threshold: f64,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self { ema_alpha: 0.75, min_height: 0.3, min_distance: 20, min_prominence: 0.6, min_threshold: 0.0001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub shifted_length: usize,
    pub baseline_cutoff_hz: f64,
    pub drop_prefix: usize,
    pub keep_length: usize,
    pub terrain_window: usize,
    pub obstacle_window: usize,
    /// Traces an obstacle window may include before the contact flag.
    pub pre_flag_traces: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            shifted_length: SHIFTED_LEN,
            baseline_cutoff_hz: 100.0,
            drop_prefix: 350,
            keep_length: 1750,
            terrain_window: 5,
            obstacle_window: 90,
            pre_flag_traces: 15,
        }
    }
}

impl PipelineConfig {
    /// Length the shifted trace is padded to before baselining.
    pub fn baselined_span(&self) -> usize {
        self.shifted_length.max(self.drop_prefix + self.keep_length)
    }
}
