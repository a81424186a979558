mod common;

use acoustic_tire::dsp::{find_peaks, PeakParams};
use common::oracle_peaks;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = PeakParams> {
    (0.0..0.8f64, 1usize..30, 0.0..0.8f64, prop_oneof![Just(0.0), 0.0..0.3f64]).prop_map(
        |(min_height, min_distance, min_prominence, min_threshold)| PeakParams {
            min_height,
            min_distance,
            min_prominence,
            min_threshold,
            ..PeakParams::default()
        },
    )
}

fn signal() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        prop::collection::vec(0u8..5, 3..200).prop_map(|v| v.into_iter().map(|q| f64::from(q) / 4.0).collect()),
        prop::collection::vec(0.0..1.0f64, 3..200),
    ]
}

proptest! {
    #[test]
    fn matches_oracle(x in signal(), p in params()) {
        prop_assert_eq!(find_peaks(&x, &p), oracle_peaks(&x, &p));
    }

    #[test]
    fn kept_peaks_respect_every_filter(x in signal(), p in params()) {
        let peaks = find_peaks(&x, &p);
        for w in peaks.windows(2) {
            prop_assert!(w[1].index - w[0].index >= p.min_distance);
        }
        for pk in &peaks {
            prop_assert!(pk.height >= p.min_height);
            prop_assert!(pk.prominence >= p.min_prominence);
            prop_assert!(pk.index > 0 && pk.index < x.len() - 1);
        }
    }
}

#[test]
fn two_bumps_closer_than_distance_keep_the_higher() {
    let mut x = vec![0.0; 60];
    for i in 0..5 {
        x[20 - i] = 1.0 - 0.2 * i as f64;
        x[20 + i] = 1.0 - 0.2 * i as f64;
        x[30 - i] = 0.8 - 0.16 * i as f64;
        x[30 + i] = 0.8 - 0.16 * i as f64;
    }
    let p = PeakParams { min_distance: 20, min_prominence: 0.0, ..PeakParams::default() };
    let peaks = find_peaks(&x, &p);
    assert_eq!(peaks.len(), 1);
    assert_eq!(peaks[0].index, 20);
    assert_eq!(peaks, oracle_peaks(&x, &p));
}

#[test]
fn low_bump_fails_prominence() {
    let x: Vec<f64> = (0..21).map(|i| 0.5 - 0.05 * (i as f64 - 10.0).abs()).collect();
    let p = PeakParams::default();
    assert!(find_peaks(&x, &p).is_empty());
    assert!(oracle_peaks(&x, &p).is_empty());
}

#[test]
fn plateau_at_the_end_is_not_a_peak() {
    let x = [0.0, 0.5, 1.0, 1.0, 1.0];
    let p = PeakParams { min_height: 0.0, min_prominence: 0.0, min_distance: 1, min_threshold: 0.0, ..PeakParams::default() };
    assert!(find_peaks(&x, &p).is_empty());
    assert!(oracle_peaks(&x, &p).is_empty());
}
