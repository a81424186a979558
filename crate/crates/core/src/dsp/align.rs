use crate::model::{ExperimentLog, RangingCycle, Stage, Trace, RAW_CYCLE_LEN, SHIFTED_LEN};

use super::DspError;

/// Onset threshold in robust standard deviations above the median.
pub const ONSET_MAD_FACTOR: f64 = 6.0;
/// Floor on the onset margin so noise-free traces do not trigger on rounding.
pub const ONSET_MIN_MARGIN: f64 = 20.0;

fn median(values: &mut [f64]) -> f64 {
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Index of the first sample above `median + max(6·σ̂, ONSET_MIN_MARGIN)`,
/// with σ̂ the MAD-based deviation of the whole trace.
pub fn send_pulse_onset(samples: &[f64]) -> Result<usize, DspError> {
    if samples.is_empty() {
        return Err(DspError::NoSendPulse { threshold: f64::NAN });
    }
    let mut scratch = samples.to_vec();
    let med = median(&mut scratch);
    scratch.iter_mut().for_each(|v| *v = (*v - med).abs());
    let sigma = 1.4826 * median(&mut scratch);
    let threshold = med + (ONSET_MAD_FACTOR * sigma).max(ONSET_MIN_MARGIN);
    samples.iter().position(|&v| v > threshold).ok_or(DspError::NoSendPulse { threshold })
}

/// Shifts a raw cycle so its send pulse starts at index 0 and trims it to
/// 2000 samples, padding a short tail with `trial_mean`.
pub fn align_and_trim(raw: &RangingCycle, trial_mean: f64) -> Result<Trace, DspError> {
    if raw.samples.len() != RAW_CYCLE_LEN {
        return Err(DspError::Length { expected: RAW_CYCLE_LEN, found: raw.samples.len() });
    }
    let samples: Vec<f64> = raw.samples.iter().map(|&s| f64::from(s)).collect();
    let onset = send_pulse_onset(&samples)?;
    let mut out: Vec<f64> = samples[onset..].iter().copied().take(SHIFTED_LEN).collect();
    out.resize(SHIFTED_LEN, trial_mean);
    Ok(Trace { stage: Stage::Shifted2000, t_ex_ms: raw.t_ex_ms, samples: out })
}

/// Aligns every cycle of a log against the trial's mean amplitude.
pub fn align_log(log: &ExperimentLog) -> Vec<Result<Trace, DspError>> {
    let mean = log.mean_amplitude();
    log.cycles.iter().map(|c| align_and_trim(c, mean)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle_with_pulse_at(onset: usize) -> RangingCycle {
        let mut samples = vec![400u16; RAW_CYCLE_LEN];
        for (k, s) in samples.iter_mut().skip(onset).take(40).enumerate() {
            *s = 400 + (2000.0 * (std::f64::consts::PI * k as f64 / 40.0).sin()) as u16;
        }
        RangingCycle { t_ex_ms: 0.0, wheel_angle: 0.0, samples }
    }

    #[test]
    fn zero_delay_matches_raw_prefix() {
        let c = cycle_with_pulse_at(0);
        let t = align_and_trim(&c, 400.0).unwrap();
        assert_eq!(t.len(), SHIFTED_LEN);
        // Sample 0 of the pulse is at baseline; the first rising sample is 1.
        let raw: Vec<f64> = c.samples[1..=SHIFTED_LEN].iter().map(|&s| f64::from(s)).collect();
        assert_eq!(t.samples, raw);
    }

    #[test]
    fn late_pulse_is_padded_with_trial_mean() {
        let c = cycle_with_pulse_at(2299);
        let t = align_and_trim(&c, 123.5).unwrap();
        // onset 2300 leaves 1700 samples; 300 are padding
        assert!(t.samples[SHIFTED_LEN - 300..].iter().all(|&v| v == 123.5));
        assert_ne!(t.samples[SHIFTED_LEN - 301], 123.5);
    }

    #[test]
    fn flat_cycle_has_no_send_pulse() {
        let c = RangingCycle { t_ex_ms: 0.0, wheel_angle: 0.0, samples: vec![400; RAW_CYCLE_LEN] };
        assert!(matches!(align_and_trim(&c, 400.0), Err(DspError::NoSendPulse { .. })));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let c = RangingCycle { t_ex_ms: 0.0, wheel_angle: 0.0, samples: vec![400; 10] };
        assert!(matches!(align_and_trim(&c, 400.0), Err(DspError::Length { .. })));
    }
}
