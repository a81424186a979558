//! Framed streaming of trials between a sensor node (server) and a host
//! (client), and the on-disk trial formats built on the same frames.

use std::io;

use thiserror::Error;

pub mod frame;
pub mod stream;
pub mod trialfile;

pub use frame::{decode_frame, encode_frame, read_frame, write_frame, Frame, FrameType, Message, TrialHeader};
pub use stream::{receive_tcp, receive_trial, serve_tcp, serve_trial, trial_messages, Pace, ServeSummary};
pub use trialfile::{load_log, read_binary, read_jsonl, save_log, write_binary, write_jsonl, TrialFormat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TelemetryError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("protocol version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("crc mismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown frame type {0}")]
    UnknownFrameType(u8),
    #[error("malformed: {0}")]
    Malformed(String),
    #[error("i/o ({kind:?}): {message}")]
    Io { kind: io::ErrorKind, message: String },
}

impl From<io::Error> for TelemetryError {
    fn from(e: io::Error) -> Self {
        TelemetryError::Io { kind: e.kind(), message: e.to_string() }
    }
}
