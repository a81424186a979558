use std::f64::consts::PI;

use crate::model::{Stage, Trace, SAMPLE_RATE_HZ};

use super::{send_pulse_onset, DspError, PipelineConfig};

/// First-order recursive smoother seeded with its first input:
/// `y[0] = x[0]`, `y[i] = α·x[i] + (1 − α)·y[i−1]`.
#[derive(Debug, Clone, Copy)]
pub struct Ema {
    alpha: f64,
    value: Option<f64>,
}

impl Ema {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, value: None }
    }

    /// Low-pass with the given -3 dB cutoff at `sample_rate`.
    pub fn lowpass(cutoff_hz: f64, sample_rate: f64) -> Self {
        Self::new(lowpass_coefficient(cutoff_hz, sample_rate))
    }

    pub fn add_sample(&mut self, x: f64) -> f64 {
        let y = match self.value {
            None => x,
            Some(prev) => self.alpha * x + (1.0 - self.alpha) * prev,
        };
        self.value = Some(y);
        y
    }
}

pub fn lowpass_coefficient(cutoff_hz: f64, sample_rate: f64) -> f64 {
    1.0 - (-2.0 * PI * cutoff_hz / sample_rate).exp()
}

pub fn ema_filter(trace: &[f64], alpha: f64) -> Vec<f64> {
    let mut ema = Ema::new(alpha);
    trace.iter().map(|&x| ema.add_sample(x)).collect()
}

/// Pads a shifted trace with its own mean to the baselined span, subtracts
/// a forward low-pass copy and rectifies.
pub fn baseline_rectify(shifted: &Trace, cfg: &PipelineConfig) -> Result<Vec<f64>, DspError> {
    if shifted.stage != Stage::Shifted2000 {
        return Err(DspError::Stage { expected: Stage::Shifted2000, found: shifted.stage });
    }
    let mean = if shifted.is_empty() { 0.0 } else { shifted.samples.iter().sum::<f64>() / shifted.len() as f64 };
    let mut lp = Ema::lowpass(cfg.baseline_cutoff_hz, SAMPLE_RATE_HZ);
    let span = cfg.baselined_span().max(shifted.len());
    Ok(shifted
        .samples
        .iter()
        .copied()
        .chain(std::iter::repeat(mean))
        .take(span)
        .map(|x| (x - lp.add_sample(x)).abs())
        .collect())
}

/// Divides by the maximum; errors if the maximum is not positive.
pub fn normalize_by_max(values: &mut [f64]) -> Result<(), DspError> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return Err(DspError::Degenerate(max));
    }
    values.iter_mut().for_each(|v| *v /= max);
    Ok(())
}

fn retain(rectified: &[f64], shift: usize, cfg: &PipelineConfig) -> Result<Vec<f64>, DspError> {
    let fill = rectified.iter().sum::<f64>() / rectified.len().max(1) as f64;
    let mut kept: Vec<f64> = (cfg.drop_prefix..cfg.drop_prefix + cfg.keep_length)
        .map(|i| rectified.get(i + shift).copied().unwrap_or(fill))
        .collect();
    normalize_by_max(&mut kept)?;
    Ok(kept)
}

/// Baselines, rectifies, drops the send-pulse prefix and normalizes one
/// trace so its maximum is 1.
pub fn baseline_rectify_normalize(shifted: &Trace, cfg: &PipelineConfig) -> Result<Trace, DspError> {
    let rectified = baseline_rectify(shifted, cfg)?;
    Ok(Trace { stage: Stage::Baselined1750, t_ex_ms: shifted.t_ex_ms, samples: retain(&rectified, 0, cfg)? })
}

/// Batch version: after rectification each trace's send-pulse onset is
/// moved to the batch-minimum onset before truncation and normalization.
pub fn process_batch(shifted: &[Trace], cfg: &PipelineConfig) -> Result<Vec<Trace>, DspError> {
    if shifted.is_empty() {
        return Err(DspError::EmptyBatch);
    }
    let rectified = shifted.iter().map(|t| baseline_rectify(t, cfg)).collect::<Result<Vec<_>, _>>()?;
    let onsets = rectified.iter().map(|r| send_pulse_onset(r)).collect::<Result<Vec<_>, _>>()?;
    let first = onsets.iter().copied().min().unwrap_or(0);
    shifted
        .iter()
        .zip(&rectified)
        .zip(&onsets)
        .map(|((t, r), &onset)| {
            Ok(Trace { stage: Stage::Baselined1750, t_ex_ms: t.t_ex_ms, samples: retain(r, onset - first, cfg)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shifted(samples: Vec<f64>) -> Trace {
        Trace { stage: Stage::Shifted2000, t_ex_ms: 0.0, samples }
    }

    #[test]
    fn ema_examples() {
        assert_eq!(ema_filter(&[3.5; 6], 0.75), vec![3.5; 6]);
        let mut impulse = vec![0.0; 5];
        impulse[0] = 1.0;
        assert_eq!(ema_filter(&impulse, 0.75), vec![1.0, 0.25, 0.0625, 0.015625, 0.00390625]);
        let x = [0.1, 0.9, -2.0, 5.0];
        assert_eq!(ema_filter(&x, 1.0), x.to_vec());
        assert!(ema_filter(&[], 0.5).is_empty());
    }

    #[test]
    fn lowpass_coefficient_for_baseline_cutoff() {
        let a = lowpass_coefficient(100.0, 200_000.0);
        assert!((a - 0.003136663).abs() < 1e-9, "{a}");
    }

    #[test]
    fn constant_trace_is_degenerate() {
        let cfg = PipelineConfig::default();
        let r = baseline_rectify_normalize(&shifted(vec![512.0; 2000]), &cfg);
        assert!(matches!(r, Err(DspError::Degenerate(_))));
    }

    #[test]
    fn impulse_lands_after_prefix_drop() {
        let cfg = PipelineConfig::default();
        let mut x = vec![0.0; 2000];
        x[1000] = 50.0;
        let out = baseline_rectify_normalize(&shifted(x), &cfg).unwrap();
        assert_eq!(out.len(), 1750);
        assert_eq!(out.stage, Stage::Baselined1750);
        let argmax = out.samples.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 650);
        assert_eq!(out.samples[650], 1.0);
    }

    #[test]
    fn rejects_raw_stage() {
        let cfg = PipelineConfig::default();
        let t = Trace { stage: Stage::Raw, t_ex_ms: 0.0, samples: vec![0.0; 4000] };
        assert!(matches!(baseline_rectify_normalize(&t, &cfg), Err(DspError::Stage { .. })));
    }

    #[test]
    fn batch_aligns_to_earliest_onset() {
        let cfg = PipelineConfig::default();
        let make = |onset: usize| {
            let mut x = vec![400.0; 2000];
            for k in 0..30 {
                x[onset + k] += 2000.0;
            }
            x[onset + 900] += 300.0;
            shifted(x)
        };
        let out = process_batch(&[make(1), make(4)], &cfg).unwrap();
        let peak = |t: &Trace| t.samples.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(peak(&out[0]), peak(&out[1]));
        assert_eq!(peak(&out[0]), 901 - 350);
    }
}
