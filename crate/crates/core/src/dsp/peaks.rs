//! Peak isolation with prominence, distance and threshold filters.
//!
//! Candidates are strict local maxima; a flat-topped maximum is reported at
//! its plateau midpoint (rounded down), and samples at either end of the
//! trace are never peaks. Filters run in the order height, threshold,
//! distance, prominence.

use serde::{Deserialize, Serialize};

use crate::model::{ranging_time_of_sample, SAMPLE_RATE_HZ};

use super::PeakParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    pub height: f64,
    pub prominence: f64,
}

/// Return peaks of one cycle in ranging time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    /// `(t_r` in ms, normalized amplitude) with strictly increasing `t_r`.
    pub peaks: Vec<(f64, f64)>,
    pub source_cycle: usize,
}

impl PeakSet {
    pub fn from_peaks(peaks: &[Peak], source_cycle: usize) -> Self {
        Self {
            peaks: peaks.iter().map(|p| (ranging_time_of_sample(p.index, SAMPLE_RATE_HZ), p.height)).collect(),
            source_cycle,
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.peaks.iter().map(|&(t, _)| t)
    }
}

/// Local maxima as `(left edge, midpoint, right edge)` of each plateau.
fn local_maxima(x: &[f64]) -> Vec<(usize, usize, usize)> {
    let n = x.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let mut i = 1;
    while i < n - 1 {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                let right = ahead - 1;
                out.push((i, (i + right) / 2, right));
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    out
}

fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..=peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

pub fn find_peaks(x: &[f64], params: &PeakParams) -> Vec<Peak> {
    let candidates: Vec<(usize, usize, usize)> = local_maxima(x)
        .into_iter()
        .filter(|&(_, mid, _)| x[mid] >= params.min_height)
        .filter(|&(left, mid, right)| {
            let step = (x[mid] - x[left - 1]).min(x[mid] - x[right + 1]);
            step >= params.min_threshold
        })
        .collect();

    // Highest first; equal heights keep the earlier index first.
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| x[candidates[b].1].total_cmp(&x[candidates[a].1]).then(a.cmp(&b)));
    let mut keep = vec![true; candidates.len()];
    let distance = params.min_distance.max(1);
    for &j in &order {
        if !keep[j] {
            continue;
        }
        let pj = candidates[j].1;
        for k in (0..j).rev() {
            if pj - candidates[k].1 >= distance {
                break;
            }
            keep[k] = false;
        }
        for k in j + 1..candidates.len() {
            if candidates[k].1 - pj >= distance {
                break;
            }
            keep[k] = false;
        }
    }

    candidates
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(&(_, mid, _), _)| Peak { index: mid, height: x[mid], prominence: prominence(x, mid) })
        .filter(|p| p.prominence >= params.min_prominence)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loose() -> PeakParams {
        PeakParams { min_height: 0.0, min_distance: 1, min_prominence: 0.0, min_threshold: 0.0, ..PeakParams::default() }
    }

    #[test]
    fn triangular_bump() {
        let x: Vec<f64> = (0..21).map(|i| 1.0 - (i as f64 - 10.0).abs() / 10.0).collect();
        let p = find_peaks(&x, &PeakParams::default());
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].index, 10);
        assert_eq!(p[0].prominence, 1.0);
    }

    #[test]
    fn plateau_reports_midpoint() {
        let x = [0.0, 1.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(find_peaks(&x, &loose())[0].index, 2);
        let x = [0.0, 1.0, 1.0, 2.0, 0.0];
        assert_eq!(find_peaks(&x, &loose())[0].index, 3);
    }

    #[test]
    fn edges_are_not_peaks() {
        assert!(find_peaks(&[1.0, 0.0, 0.5], &loose()).is_empty());
        assert!(find_peaks(&[0.0, 1.0], &loose()).is_empty());
        assert!(find_peaks(&[], &loose()).is_empty());
    }

    #[test]
    fn nearby_lower_peak_is_removed() {
        let mut x = vec![0.0; 40];
        x[10] = 1.0;
        x[20] = 0.8;
        let p = find_peaks(&x, &PeakParams::default());
        assert_eq!(p.iter().map(|p| p.index).collect::<Vec<_>>(), vec![10]);
    }

    #[test]
    fn low_prominence_bump_is_dropped() {
        let mut x = vec![0.0; 30];
        x[14] = 0.25;
        x[15] = 0.5;
        x[16] = 0.25;
        let p = PeakParams { min_prominence: 0.6, ..PeakParams::default() };
        assert!(find_peaks(&x, &p).is_empty());
    }

    #[test]
    fn prominence_uses_higher_valley() {
        let x = [0.0, 3.0, 1.0, 2.0, 0.5, 4.0, 0.0];
        let p = find_peaks(&x, &loose());
        let at = |i| p.iter().find(|p| p.index == i).unwrap().prominence;
        assert_eq!(at(3), 1.0);
        assert_eq!(at(1), 2.5);
        assert_eq!(at(5), 4.0);
    }
}
