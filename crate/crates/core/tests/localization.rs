use acoustic_tire::acoustics::{simulate_trial, AcousticParams};
use acoustic_tire::dsp::PeakParams;
use acoustic_tire::localize::{
    analyze_collision, delta_theta_from_delta_t, estimate_from_peak_times, height_from_delta_theta, percentile,
    peak_time_to_theta, LocalizeError,
};
use acoustic_tire::model::{FlagKind, SensorGeometry};
use acoustic_tire::scene::{ObstacleSpec, ScenePlan};
use proptest::prelude::*;

fn height_of(dt: f64, g: &SensorGeometry) -> f64 {
    height_from_delta_theta(delta_theta_from_delta_t(dt, g).unwrap(), g).unwrap()
}

#[test]
fn dead_zone_edge_is_angle_zero() {
    let g = SensorGeometry::prototype();
    assert_eq!(peak_time_to_theta(g.dead_zone_ms(), &g).unwrap(), 0.0);
    assert!(matches!(peak_time_to_theta(g.dead_zone_ms() * 0.9, &g), Err(LocalizeError::DeadZone { .. })));
    assert!((peak_time_to_theta(3.348, &g).unwrap() - std::f64::consts::PI).abs() < 1e-3);
}

#[test]
fn clutter_outliers_are_reported() {
    let g = SensorGeometry::prototype();
    let scene = ScenePlan::flat(1.0).with_obstacle(ObstacleSpec::block(0.025, 0.5, &g));
    let params = AcousticParams { clutter_rate: 2.0, ..AcousticParams::default() }.with_seed(12);
    let sim = simulate_trial(&scene, &g, &params, 18_000.0).unwrap();
    let flag = sim.log.first_flag(FlagKind::ContactStart).unwrap().t_ex_ms;
    let a = analyze_collision(&sim.log, flag, &PeakParams::default(), &g);
    let est = a.estimate.unwrap();
    assert_eq!(est.pooled_peaks, a.cycle_peaks.iter().map(|p| p.peaks.len()).sum::<usize>());
    let in_window = sim.log.cycles.iter().filter(|c| (c.t_ex_ms - flag).abs() <= 500.0).count();
    assert_eq!(a.cycle_peaks.len() + a.skipped_cycles.len(), in_window);
    assert!(est.height_m > 0.0 && est.height_m <= g.wheel_diameter);
}

proptest! {
    #[test]
    fn height_grows_with_delta_t(a in 1e-4..1.0f64, b in 1e-4..1.0f64) {
        let g = SensorGeometry::prototype();
        let limit = std::f64::consts::PI * g.wheel_diameter / g.speed_of_sound * 1000.0;
        let (lo, hi) = (a.min(b) * limit, a.max(b) * limit);
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(height_of(lo, &g) < height_of(hi, &g));
    }

    #[test]
    fn percentile_is_bounded_and_monotone(v in prop::collection::vec(-5.0..5.0f64, 1..50), p in 0.0..100.0f64, q in 0.0..100.0f64) {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (pp, pq) = (percentile(&v, p).unwrap(), percentile(&v, q).unwrap());
        prop_assert!(pp >= lo && pp <= hi);
        prop_assert!(percentile(&v, 0.0) == Some(lo) && percentile(&v, 100.0) == Some(hi));
        if p <= q {
            prop_assert!(pp <= pq);
        }
    }

    /// With two peak populations, the 80-20 spread is their separation as
    /// long as each population covers the order statistics the two
    /// percentiles interpolate between.
    #[test]
    fn two_populations_reduce_to_max_minus_min(
        a in 1.7..2.5f64,
        gap in 0.05..1.0f64,
        n_low in 1usize..60,
        n_high in 1usize..60,
        shuffle in any::<u64>(),
    ) {
        let n = n_low + n_high;
        let lower_top = (0.2 * (n - 1) as f64).ceil() as usize;
        let upper_bottom = (0.8 * (n - 1) as f64).floor() as usize;
        prop_assume!(n_low > lower_top && n_low <= upper_bottom);
        let mut times: Vec<f64> = std::iter::repeat_n(a, n_low).chain(std::iter::repeat_n(a + gap, n_high)).collect();
        times.rotate_left((shuffle % n as u64) as usize);
        let g = SensorGeometry::prototype();
        let (dt, _, _) = estimate_from_peak_times(&times, &g).unwrap();
        prop_assert!((dt - gap).abs() < 1e-12);
    }
}
