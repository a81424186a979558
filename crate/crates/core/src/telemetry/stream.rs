//! One trial per connection: Hello, cycles with flags interleaved in
//! experiment time, then EndOfTrial.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::frame::{read_frame, write_frame, Message, TrialHeader};
use super::TelemetryError;
use crate::model::{ExperimentLog, TRIGGER_PERIOD_MS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pace {
    /// One cycle per trigger period of wall time.
    Realtime,
    #[default]
    Unpaced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServeSummary {
    pub frames_sent: usize,
    pub cycles_sent: usize,
    /// False when the client went away before EndOfTrial.
    pub completed: bool,
}

/// Messages of a trial in stream order. A flag goes out before the first
/// cycle that is later than it.
pub fn trial_messages(log: &ExperimentLog) -> Vec<Message> {
    let mut out = Vec::with_capacity(log.cycles.len() + log.flags.len() + 2);
    out.push(Message::Hello(Some(Box::new(TrialHeader::of(log)))));
    let mut flags = log.flags.iter().peekable();
    for c in &log.cycles {
        while let Some(f) = flags.next_if(|f| f.t_ex_ms < c.t_ex_ms) {
            out.push(Message::Flag(*f));
        }
        out.push(Message::Cycle(c.clone()));
    }
    out.extend(flags.map(|f| Message::Flag(*f)));
    out.push(Message::EndOfTrial { cycles: log.cycles.len() as u32 });
    out
}

fn is_disconnect(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::BrokenPipe
            | io::ErrorKind::ConnectionReset
            | io::ErrorKind::ConnectionAborted
            | io::ErrorKind::NotConnected
            | io::ErrorKind::WriteZero
            | io::ErrorKind::UnexpectedEof
    )
}

/// Streams `log` to `w`. A vanished client ends the trial early without
/// an error.
pub fn serve_trial<W: Write>(log: &ExperimentLog, pace: Pace, w: W) -> Result<ServeSummary, TelemetryError> {
    let mut w = BufWriter::new(w);
    let mut summary = ServeSummary { frames_sent: 0, cycles_sent: 0, completed: false };
    let start = Instant::now();
    let period = Duration::from_secs_f64(TRIGGER_PERIOD_MS / 1000.0);
    for msg in trial_messages(log) {
        let is_cycle = matches!(msg, Message::Cycle(_));
        if is_cycle && pace == Pace::Realtime {
            let due = start + period * summary.cycles_sent as u32;
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        let sent = write_frame(&mut w, &msg.to_frame()).and_then(|_| if pace == Pace::Realtime { w.flush() } else { Ok(()) });
        match sent {
            Ok(()) => {}
            Err(e) if is_disconnect(&e) => {
                log::warn!("client disconnected after {} frames: {e}", summary.frames_sent);
                return Ok(summary);
            }
            Err(e) => return Err(e.into()),
        }
        summary.frames_sent += 1;
        summary.cycles_sent += usize::from(is_cycle);
    }
    match w.flush() {
        Ok(()) => summary.completed = true,
        Err(e) if is_disconnect(&e) => log::warn!("client disconnected before the end of the trial: {e}"),
        Err(e) => return Err(e.into()),
    }
    Ok(summary)
}

/// Reassembles a trial from a frame stream that starts with a Hello
/// carrying the trial header.
pub fn receive_trial<R: Read>(r: R) -> Result<ExperimentLog, TelemetryError> {
    let mut r = BufReader::new(r);
    let header = match read_frame(&mut r)? {
        Some(f) => match Message::from_frame(&f)? {
            Message::Hello(Some(h)) => *h,
            Message::Hello(None) => return Err(TelemetryError::Malformed("hello without trial header".into())),
            other => return Err(TelemetryError::Malformed(format!("stream starts with {other:?}"))),
        },
        None => return Err(TelemetryError::Malformed("empty stream".into())),
    };
    let mut log = header.into_log();
    loop {
        let Some(frame) = read_frame(&mut r)? else {
            return Err(TelemetryError::Malformed("stream ended before end of trial".into()));
        };
        match Message::from_frame(&frame)? {
            Message::Cycle(c) => log.cycles.push(c),
            Message::Flag(f) => log.flags.push(f),
            Message::EndOfTrial { cycles } => {
                if cycles as usize != log.cycles.len() {
                    return Err(TelemetryError::Malformed(format!(
                        "end of trial announces {cycles} cycles, received {}",
                        log.cycles.len()
                    )));
                }
                return Ok(log);
            }
            Message::Hello(_) => return Err(TelemetryError::Malformed("second hello in one trial".into())),
        }
    }
}

/// Accepts one client on `listener` and streams the trial to it.
pub fn serve_tcp(listener: &TcpListener, log: &ExperimentLog, pace: Pace) -> Result<ServeSummary, TelemetryError> {
    let (stream, peer) = listener.accept()?;
    log::info!("serving trial to {peer}");
    stream.set_nodelay(true)?;
    serve_trial(log, pace, stream)
}

pub fn receive_tcp<A: ToSocketAddrs>(addr: A) -> Result<ExperimentLog, TelemetryError> {
    receive_trial(TcpStream::connect(addr)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Flag, FlagKind, RangingCycle, SensorGeometry};
    use crate::scene::ScenePlan;

    fn small_log() -> ExperimentLog {
        let cycles = (0..3)
            .map(|i| RangingCycle { t_ex_ms: 50.0 * f64::from(i), wheel_angle: 0.1 * f64::from(i), samples: vec![i as u16; 4] })
            .collect();
        ExperimentLog {
            geometry: SensorGeometry::prototype(),
            scene: ScenePlan::flat(1.0),
            seed: 4,
            acoustics: None,
            cycles,
            flags: vec![Flag { t_ex_ms: 60.0, kind: FlagKind::ContactStart }, Flag { t_ex_ms: 500.0, kind: FlagKind::ContactEnd }],
        }
    }

    #[test]
    fn three_cycles_give_five_plus_flags() {
        let msgs = trial_messages(&small_log());
        assert_eq!(msgs.len(), 7);
        assert!(matches!(msgs[0], Message::Hello(Some(_))));
        assert!(matches!(msgs[3], Message::Flag(Flag { kind: FlagKind::ContactStart, .. })));
        assert!(matches!(msgs[4], Message::Cycle(RangingCycle { t_ex_ms: 100.0, .. })));
        assert!(matches!(msgs[5], Message::Flag(Flag { kind: FlagKind::ContactEnd, .. })));
        assert_eq!(msgs[6], Message::EndOfTrial { cycles: 3 });
    }

    #[test]
    fn in_memory_round_trip() {
        let log = small_log();
        let mut buf = Vec::new();
        let s = serve_trial(&log, Pace::Unpaced, &mut buf).unwrap();
        assert_eq!(s, ServeSummary { frames_sent: 7, cycles_sent: 3, completed: true });
        assert_eq!(receive_trial(buf.as_slice()).unwrap(), log);
    }

    #[test]
    fn cut_stream_is_an_error() {
        let mut buf = Vec::new();
        serve_trial(&small_log(), Pace::Unpaced, &mut buf).unwrap();
        buf.truncate(buf.len() - 19);
        assert!(matches!(receive_trial(buf.as_slice()), Err(TelemetryError::Malformed(_))));
    }

    struct Gone(usize);

    impl Write for Gone {
        fn write(&mut self, b: &[u8]) -> io::Result<usize> {
            if self.0 == 0 {
                return Err(io::ErrorKind::BrokenPipe.into());
            }
            self.0 -= 1;
            Ok(b.len())
        }
        fn flush(&mut self) -> io::Result<()> {
            self.write(&[]).map(|_| ())
        }
    }

    #[test]
    fn disconnect_stops_cleanly() {
        let s = serve_trial(&small_log(), Pace::Realtime, Gone(2)).unwrap();
        assert!(!s.completed);
        assert!(s.frames_sent < 7);
    }
}
