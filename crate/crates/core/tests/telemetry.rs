mod common;

use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Instant;

use acoustic_tire::model::{Flag, FlagKind, RangingCycle};
use acoustic_tire::telemetry::{
    decode_frame, encode_frame, read_binary, read_jsonl, receive_tcp, receive_trial, serve_tcp, serve_trial,
    write_binary, write_jsonl, Message, Pace, TelemetryError,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn golden() -> Vec<(&'static str, Message)> {
    vec![
        ("hello_empty.bin", Message::Hello(None)),
        (
            "cycle_small.bin",
            Message::Cycle(RangingCycle { t_ex_ms: 10_050.0, wheel_angle: 1.25, samples: vec![0, 1, 4096, 513] }),
        ),
        ("flag_start.bin", Message::Flag(Flag { t_ex_ms: 15_895.5, kind: FlagKind::ContactStart })),
        ("flag_end.bin", Message::Flag(Flag { t_ex_ms: 17_000.25, kind: FlagKind::ContactEnd })),
        ("end_of_trial.bin", Message::EndOfTrial { cycles: 3 }),
    ]
}

#[test]
fn golden_frames_are_byte_exact() {
    for (name, msg) in golden() {
        let bytes = fixture(name);
        assert_eq!(encode_frame(&msg.to_frame()), bytes, "{name}");
        let (frame, used) = decode_frame(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(Message::from_frame(&frame).unwrap(), msg);
    }
}

#[test]
fn corrupted_frames_fail_crc_every_time() {
    for (name, _) in golden() {
        let bytes = fixture(name);
        // Header bytes past the checked fields, the payload and the CRC.
        for i in 11..bytes.len() {
            for bit in [0x01u8, 0x80] {
                let mut bad = bytes.clone();
                bad[i] ^= bit;
                let first = decode_frame(&bad).unwrap_err();
                assert!(matches!(first, TelemetryError::CrcMismatch { .. }), "{name}[{i}]: {first:?}");
                assert_eq!(decode_frame(&bad).unwrap_err(), first);
            }
        }
        let mut bad_type = bytes.clone();
        bad_type[6] = 9;
        assert!(matches!(decode_frame(&bad_type), Err(TelemetryError::CrcMismatch { .. })));
    }
}

#[test]
fn random_logs_round_trip_over_tcp() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let log = common::random_log(&mut rng);
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let sent = log.clone();
        let server = std::thread::spawn(move || serve_tcp(&listener, &sent, Pace::Unpaced).unwrap());
        let got = receive_tcp(addr).unwrap();
        let summary = server.join().unwrap();
        assert!(summary.completed);
        assert_eq!(summary.cycles_sent, log.cycles.len());
        assert_eq!(got, log);
    }
}

#[test]
fn realtime_serving_keeps_the_trigger_period() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut log = common::random_log(&mut rng);
    log.cycles = (0..6)
        .map(|k| RangingCycle { t_ex_ms: 50.0 * k as f64, wheel_angle: 0.0, samples: vec![400; 4000] })
        .collect();
    log.flags.clear();
    let mut wire = Vec::new();
    let start = Instant::now();
    serve_trial(&log, Pace::Realtime, &mut wire).unwrap();
    let elapsed = start.elapsed().as_secs_f64() * 1000.0;
    let min = 50.0 * (log.cycles.len() - 1) as f64;
    assert!(elapsed >= min - 5.0, "{elapsed} ms for {} cycles", log.cycles.len());
    assert_eq!(receive_trial(wire.as_slice()).unwrap(), log);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trial_files_convert_losslessly(seed in any::<u64>()) {
        let log = common::random_log(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut bin = Vec::new();
        write_binary(&log, &mut bin).unwrap();
        let from_bin = read_binary(bin.as_slice()).unwrap();
        prop_assert_eq!(&from_bin, &log);

        let mut json = Vec::new();
        write_jsonl(&from_bin, &mut json).unwrap();
        let from_json = read_jsonl(json.as_slice()).unwrap();
        prop_assert_eq!(&from_json, &log);

        let mut again = Vec::new();
        write_binary(&from_json, &mut again).unwrap();
        prop_assert_eq!(again, bin);
    }
}
