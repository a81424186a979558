//! Frame layout (all integers little-endian):
//!
//! ```text
//! "AWTS" | version u16 | type u8 | payload_len u32 | payload | crc32 u32
//! ```
//!
//! The CRC (IEEE) covers the 11 header bytes and the payload.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::TelemetryError;
use crate::acoustics::AcousticParams;
use crate::model::{ExperimentLog, Flag, FlagKind, RangingCycle, SensorGeometry};
use crate::scene::ScenePlan;

pub const MAGIC: [u8; 4] = *b"AWTS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 11;
pub const CRC_LEN: usize = 4;
/// Largest payload a decoder accepts; a full cycle is about 8 kB.
pub const MAX_PAYLOAD: u32 = 16 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0,
    RangingCycle = 1,
    Flag = 2,
    EndOfTrial = 3,
}

impl FrameType {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Hello),
            1 => Some(Self::RangingCycle),
            2 => Some(Self::Flag),
            3 => Some(Self::EndOfTrial),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub frame_type: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(frame_type: FrameType, payload: Vec<u8>) -> Self {
        Self { frame_type, payload }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + CRC_LEN
    }
}

fn header_bytes(frame_type: u8, payload_len: u32) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(&MAGIC);
    h[4..6].copy_from_slice(&VERSION.to_le_bytes());
    h[6] = frame_type;
    h[7..11].copy_from_slice(&payload_len.to_le_bytes());
    h
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    let len = u32::try_from(frame.payload.len()).expect("payload fits in u32");
    let header = header_bytes(frame.frame_type as u8, len);
    let mut crc = crc32fast::Hasher::new();
    crc.update(&header);
    crc.update(&frame.payload);
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.extend_from_slice(&header);
    out.extend_from_slice(&frame.payload);
    out.extend_from_slice(&crc.finalize().to_le_bytes());
    out
}

/// Checks magic and version and returns `(type code, payload_len)`.
fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(u8, u32), TelemetryError> {
    if h[..4] != MAGIC {
        return Err(TelemetryError::BadMagic([h[0], h[1], h[2], h[3]]));
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != VERSION {
        return Err(TelemetryError::VersionMismatch { found: version, expected: VERSION });
    }
    let len = u32::from_le_bytes([h[7], h[8], h[9], h[10]]);
    if len > MAX_PAYLOAD {
        return Err(TelemetryError::Malformed(format!("payload length {len} exceeds {MAX_PAYLOAD}")));
    }
    Ok((h[6], len))
}

fn finish(header: &[u8; HEADER_LEN], code: u8, payload: Vec<u8>, stored: u32) -> Result<Frame, TelemetryError> {
    let mut crc = crc32fast::Hasher::new();
    crc.update(header);
    crc.update(&payload);
    let computed = crc.finalize();
    if computed != stored {
        return Err(TelemetryError::CrcMismatch { stored, computed });
    }
    let frame_type = FrameType::from_code(code).ok_or(TelemetryError::UnknownFrameType(code))?;
    Ok(Frame { frame_type, payload })
}

/// Decodes one frame from the front of `bytes`, returning it with the
/// number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(Frame, usize), TelemetryError> {
    let header: [u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or(TelemetryError::Truncated { needed: HEADER_LEN, available: bytes.len() })?;
    let (code, len) = parse_header(&header)?;
    let total = HEADER_LEN + len as usize + CRC_LEN;
    if bytes.len() < total {
        return Err(TelemetryError::Truncated { needed: total, available: bytes.len() });
    }
    let payload = bytes[HEADER_LEN..HEADER_LEN + len as usize].to_vec();
    let c = &bytes[total - CRC_LEN..total];
    let stored = u32::from_le_bytes([c[0], c[1], c[2], c[3]]);
    Ok((finish(&header, code, payload, stored)?, total))
}

/// Fills `buf`, returning how many bytes were read before end of stream.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// Reads the next frame; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, TelemetryError> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_full(r, &mut header)?;
    if got == 0 {
        return Ok(None);
    }
    if got < HEADER_LEN {
        return Err(TelemetryError::Truncated { needed: HEADER_LEN, available: got });
    }
    let (code, len) = parse_header(&header)?;
    let mut rest = vec![0u8; len as usize + CRC_LEN];
    let got = read_full(r, &mut rest)?;
    if got < rest.len() {
        return Err(TelemetryError::Truncated { needed: HEADER_LEN + rest.len(), available: HEADER_LEN + got });
    }
    let c = rest.split_off(len as usize);
    let stored = u32::from_le_bytes([c[0], c[1], c[2], c[3]]);
    finish(&header, code, rest, stored).map(Some)
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    w.write_all(&encode_frame(frame))
}

/// Trial metadata carried by the Hello frame as UTF-8 JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialHeader {
    pub geometry: SensorGeometry,
    pub scene: ScenePlan,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acoustics: Option<AcousticParams>,
}

impl TrialHeader {
    pub fn of(log: &ExperimentLog) -> Self {
        Self { geometry: log.geometry, scene: log.scene.clone(), seed: log.seed, acoustics: log.acoustics.clone() }
    }

    pub fn into_log(self) -> ExperimentLog {
        ExperimentLog {
            geometry: self.geometry,
            scene: self.scene,
            seed: self.seed,
            acoustics: self.acoustics,
            cycles: Vec::new(),
            flags: Vec::new(),
        }
    }
}

/// Typed view of a frame's payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// An empty Hello carries no header.
    Hello(Option<Box<TrialHeader>>),
    Cycle(RangingCycle),
    Flag(Flag),
    /// Number of cycle frames sent before it.
    EndOfTrial { cycles: u32 },
}

fn flag_code(kind: FlagKind) -> u8 {
    match kind {
        FlagKind::ContactStart => 0,
        FlagKind::ContactEnd => 1,
    }
}

fn take<const N: usize>(p: &[u8], at: usize, what: &str) -> Result<[u8; N], TelemetryError> {
    p.get(at..at + N)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| TelemetryError::Malformed(format!("{what}: payload too short ({} bytes)", p.len())))
}

fn expect_len(p: &[u8], len: usize, what: &str) -> Result<(), TelemetryError> {
    if p.len() == len {
        Ok(())
    } else {
        Err(TelemetryError::Malformed(format!("{what}: expected {len} payload bytes, got {}", p.len())))
    }
}

pub fn cycle_payload(c: &RangingCycle) -> Vec<u8> {
    let mut p = Vec::with_capacity(20 + 2 * c.samples.len());
    p.extend_from_slice(&c.t_ex_ms.to_le_bytes());
    p.extend_from_slice(&c.wheel_angle.to_le_bytes());
    p.extend_from_slice(&(c.samples.len() as u32).to_le_bytes());
    for s in &c.samples {
        p.extend_from_slice(&s.to_le_bytes());
    }
    p
}

impl Message {
    pub fn to_frame(&self) -> Frame {
        match self {
            Message::Hello(None) => Frame::new(FrameType::Hello, Vec::new()),
            Message::Hello(Some(h)) => {
                Frame::new(FrameType::Hello, serde_json::to_vec(h).expect("header serializes"))
            }
            Message::Cycle(c) => Frame::new(FrameType::RangingCycle, cycle_payload(c)),
            Message::Flag(f) => {
                let mut p = f.t_ex_ms.to_le_bytes().to_vec();
                p.push(flag_code(f.kind));
                Frame::new(FrameType::Flag, p)
            }
            Message::EndOfTrial { cycles } => Frame::new(FrameType::EndOfTrial, cycles.to_le_bytes().to_vec()),
        }
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, TelemetryError> {
        let p = frame.payload.as_slice();
        match frame.frame_type {
            FrameType::Hello if p.is_empty() => Ok(Message::Hello(None)),
            FrameType::Hello => serde_json::from_slice(p)
                .map(|h| Message::Hello(Some(Box::new(h))))
                .map_err(|e| TelemetryError::Malformed(format!("hello header: {e}"))),
            FrameType::RangingCycle => {
                let t_ex_ms = f64::from_le_bytes(take(p, 0, "cycle")?);
                let wheel_angle = f64::from_le_bytes(take(p, 8, "cycle")?);
                let count = u32::from_le_bytes(take(p, 16, "cycle")?) as usize;
                expect_len(p, 20 + 2 * count, "cycle")?;
                let samples = p[20..].chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
                Ok(Message::Cycle(RangingCycle { t_ex_ms, wheel_angle, samples }))
            }
            FrameType::Flag => {
                expect_len(p, 9, "flag")?;
                let t_ex_ms = f64::from_le_bytes(take(p, 0, "flag")?);
                let kind = match p[8] {
                    0 => FlagKind::ContactStart,
                    1 => FlagKind::ContactEnd,
                    k => return Err(TelemetryError::Malformed(format!("unknown flag kind {k}"))),
                };
                Ok(Message::Flag(Flag { t_ex_ms, kind }))
            }
            FrameType::EndOfTrial => {
                expect_len(p, 4, "end of trial")?;
                Ok(Message::EndOfTrial { cycles: u32::from_le_bytes(take(p, 0, "end of trial")?) })
            }
        }
    }
}
