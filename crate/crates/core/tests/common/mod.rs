#![allow(dead_code)]

use acoustic_tire::acoustics::AcousticParams;
use acoustic_tire::dsp::{Peak, PeakParams};
use acoustic_tire::model::{ExperimentLog, Flag, FlagKind, RangingCycle, SensorGeometry};
use acoustic_tire::scene::{ObstacleKind, ObstacleSpec, ScenePlan, TerrainSpec};
use acoustic_tire::model::Terrain;
use rand::Rng;

/// Brute-force peak finder: every plateau is enumerated explicitly and each
/// filter is applied on its own pass over the survivors.
pub fn oracle_peaks(x: &[f64], p: &PeakParams) -> Vec<Peak> {
    let n = x.len();
    // (left, right) bounds of every strict plateau maximum.
    let mut plateaus = Vec::new();
    for left in 1..n.saturating_sub(1) {
        if x[left - 1] >= x[left] {
            continue;
        }
        let mut right = left;
        while right + 1 < n && x[right + 1] == x[left] {
            right += 1;
        }
        if right + 1 < n && x[right + 1] < x[left] {
            plateaus.push((left, right));
        }
    }

    let by_height: Vec<(usize, usize)> = plateaus.into_iter().filter(|&(l, r)| x[(l + r) / 2] >= p.min_height).collect();

    let by_threshold: Vec<(usize, usize)> = by_height
        .into_iter()
        .filter(|&(l, r)| {
            let h = x[l];
            h - x[l - 1] >= p.min_threshold && h - x[r + 1] >= p.min_threshold
        })
        .collect();

    let mids: Vec<usize> = by_threshold.iter().map(|&(l, r)| (l + r) / 2).collect();
    let distance = p.min_distance.max(1);
    let mut alive = vec![true; mids.len()];
    let mut kept = vec![false; mids.len()];
    loop {
        let best = (0..mids.len())
            .filter(|&i| alive[i])
            .max_by(|&a, &b| x[mids[a]].total_cmp(&x[mids[b]]).then(b.cmp(&a)));
        let Some(b) = best else { break };
        kept[b] = true;
        for i in 0..mids.len() {
            if mids[i].abs_diff(mids[b]) < distance {
                alive[i] = false;
            }
        }
    }

    mids.iter()
        .zip(kept)
        .filter(|(_, k)| *k)
        .map(|(&m, _)| {
            let h = x[m];
            let left_start = (0..m).rev().find(|&k| x[k] > h).map_or(0, |k| k + 1);
            let right_end = (m + 1..n).find(|&k| x[k] > h).map_or(n, |k| k);
            let left_min = x[left_start..=m].iter().copied().fold(f64::INFINITY, f64::min);
            let right_min = x[m..right_end].iter().copied().fold(f64::INFINITY, f64::min);
            Peak { index: m, height: h, prominence: h - left_min.max(right_min) }
        })
        .filter(|pk| pk.prominence >= p.min_prominence)
        .collect()
}

/// Random signal of length 3..=200; half of them are coarsely quantized so
/// that plateaus and ties are common.
pub fn random_signal<R: Rng>(rng: &mut R) -> Vec<f64> {
    let n = rng.random_range(3..=200);
    if rng.random_bool(0.5) {
        let levels = rng.random_range(2..8);
        (0..n).map(|_| f64::from(rng.random_range(0..levels)) / f64::from(levels - 1)).collect()
    } else {
        (0..n).map(|_| rng.random::<f64>()).collect()
    }
}

pub fn random_peak_params<R: Rng>(rng: &mut R) -> PeakParams {
    PeakParams {
        ema_alpha: 0.75,
        min_height: rng.random_range(0.0..0.8),
        min_distance: rng.random_range(1..30),
        min_prominence: rng.random_range(0.0..0.8),
        min_threshold: if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..0.3) },
    }
}

/// A log with arbitrary (not physical) content for transport tests.
pub fn random_log<R: Rng>(rng: &mut R) -> ExperimentLog {
    let mut scene = ScenePlan::flat(rng.random_range(0.5..3.0)).with_initial_angle(rng.random_range(0.0..6.28));
    if rng.random_bool(0.5) {
        scene = scene.with_obstacle(ObstacleSpec::new(ObstacleKind::Triangle, rng.random_range(0.005..0.03), 0.3));
    }
    if rng.random_bool(0.3) {
        scene = scene.with_terrain(TerrainSpec::new(Terrain::Soft, 0.2));
    }
    let n_cycles = rng.random_range(0..6);
    let mut t = 0.0;
    let cycles = (0..n_cycles)
        .map(|_| {
            t += 50.0 + rng.random_range(-7.5..7.5);
            let len = if rng.random_bool(0.5) { 4000 } else { rng.random_range(0..64) };
            RangingCycle {
                t_ex_ms: t,
                wheel_angle: rng.random_range(0.0..6.28),
                samples: (0..len).map(|_| rng.random_range(0..=4096)).collect(),
            }
        })
        .collect();
    let flags = (0..rng.random_range(0..3))
        .map(|i| Flag {
            t_ex_ms: rng.random_range(0.0..400.0),
            kind: if i == 0 { FlagKind::ContactStart } else { FlagKind::ContactEnd },
        })
        .collect::<Vec<_>>();
    let mut flags = flags;
    flags.sort_by(|a, b| a.t_ex_ms.total_cmp(&b.t_ex_ms));
    ExperimentLog {
        geometry: SensorGeometry::prototype().with_angular_speed(rng.random_range(0.1..2.0)),
        scene,
        seed: rng.random(),
        acoustics: if rng.random_bool(0.5) { Some(AcousticParams::default().with_seed(rng.random())) } else { None },
        cycles,
        flags,
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
