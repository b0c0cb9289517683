use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};

use super::{Frame, MsgType, ProtocolError, Transport, PROTOCOL_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Role {
    Garbler = 1,
    Evaluator = 2,
}

impl Role {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Role::Garbler),
            2 => Some(Role::Evaluator),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Idle,
    HelloSent,
    HelloReceived,
    Handshaken,
    OfflineSent,
    OfflineReceived,
    OtPending,
    InputsExchanged,
    Evaluated,
    Decoded,
    Done,
    Failed,
}

impl Phase {
    pub const ALL: [Phase; 12] = [
        Phase::Idle,
        Phase::HelloSent,
        Phase::HelloReceived,
        Phase::Handshaken,
        Phase::OfflineSent,
        Phase::OfflineReceived,
        Phase::OtPending,
        Phase::InputsExchanged,
        Phase::Evaluated,
        Phase::Decoded,
        Phase::Done,
        Phase::Failed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Decoded | Phase::Done | Phase::Failed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Send,
    Recv,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Send => "send",
            Direction::Recv => "receive",
        })
    }
}

/// The phase after `role` moves `msg` in direction `dir`, or `None` if the
/// message is not allowed in `phase`.
pub fn transition(role: Role, phase: Phase, dir: Direction, msg: MsgType) -> Option<Phase> {
    use Direction::*;
    use MsgType::*;
    use Phase::*;
    if msg == Error {
        return (!phase.is_terminal()).then_some(Failed);
    }
    let next = match (role, phase, dir, msg) {
        (Role::Garbler, Idle, Send, Hello) => HelloSent,
        (Role::Garbler, HelloSent, Recv, Hello) => Handshaken,
        (Role::Garbler, Handshaken, Send, GarbledModel) => OfflineSent,
        (Role::Garbler, OfflineSent, Send, InputLabels) => InputsExchanged,
        (Role::Garbler, OfflineSent, Recv, OtRequest) => OtPending,
        (Role::Garbler, OtPending, Send, OtResponse) => InputsExchanged,
        (Role::Garbler, InputsExchanged, Recv, OutputLabels) => Evaluated,
        (Role::Evaluator, Idle, Recv, Hello) => HelloReceived,
        (Role::Evaluator, HelloReceived, Send, Hello) => Handshaken,
        (Role::Evaluator, Handshaken, Recv, GarbledModel) => OfflineReceived,
        (Role::Evaluator, OfflineReceived, Recv, InputLabels) => InputsExchanged,
        (Role::Evaluator, OfflineReceived, Send, OtRequest) => OtPending,
        (Role::Evaluator, OtPending, Recv, OtResponse) => InputsExchanged,
        (Role::Evaluator, Evaluated, Send, OutputLabels) => Done,
        _ => return None,
    };
    Some(next)
}

/// Per-role protocol state plus a running hash of every frame moved.
#[derive(Clone)]
pub struct Session {
    role: Role,
    phase: Phase,
    transcript: Sha256,
    bytes: BTreeMap<u8, u64>,
}

impl Session {
    pub fn new(role: Role) -> Self {
        Session {
            role,
            phase: Phase::Idle,
            transcript: Sha256::new(),
            bytes: BTreeMap::new(),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Applies a transition, rejecting messages that are out of phase.
    pub fn advance(&mut self, dir: Direction, msg: MsgType) -> Result<(), ProtocolError> {
        match transition(self.role, self.phase, dir, msg) {
            Some(next) => {
                self.phase = next;
                Ok(())
            }
            None => Err(ProtocolError::PhaseViolation {
                role: self.role,
                phase: self.phase,
                dir,
                msg,
            }),
        }
    }

    /// Local step after evaluation or decoding.
    pub fn complete_local(&mut self) -> Result<(), ProtocolError> {
        let next = match (self.role, self.phase) {
            (Role::Evaluator, Phase::InputsExchanged) => Phase::Evaluated,
            (Role::Garbler, Phase::Evaluated) => Phase::Decoded,
            _ => {
                return Err(ProtocolError::Malformed(format!(
                    "no local step from {:?} as {:?}",
                    self.phase, self.role
                )))
            }
        };
        self.phase = next;
        Ok(())
    }

    fn record(&mut self, frame: &Frame) {
        let bytes = frame.to_bytes();
        self.transcript.update(&bytes);
        *self.bytes.entry(frame.msg as u8).or_default() += bytes.len() as u64;
    }

    pub fn transcript(&self) -> [u8; 32] {
        self.transcript.clone().finalize().into()
    }

    /// Bytes moved per message type, both directions.
    pub fn traffic(&self, msg: MsgType) -> u64 {
        self.bytes.get(&(msg as u8)).copied().unwrap_or(0)
    }

    pub fn send(&mut self, t: &mut dyn Transport, msg: MsgType, payload: Vec<u8>) -> Result<(), ProtocolError> {
        self.advance(Direction::Send, msg)?;
        let frame = Frame::new(msg, payload);
        self.record(&frame);
        t.send(&frame)
    }

    /// Receives the next frame, checking version and phase.
    pub fn recv(&mut self, t: &mut dyn Transport) -> Result<Frame, ProtocolError> {
        let frame = t.recv()?;
        if frame.version != PROTOCOL_VERSION {
            return Err(ProtocolError::VersionMismatch {
                expected: PROTOCOL_VERSION,
                got: frame.version,
            });
        }
        self.advance(Direction::Recv, frame.msg)?;
        self.record(&frame);
        if frame.msg == MsgType::Error {
            return Err(super::decode_error(&frame.payload));
        }
        Ok(frame)
    }

    /// Receives a frame that must be `msg`.
    pub fn expect(&mut self, t: &mut dyn Transport, msg: MsgType) -> Result<Vec<u8>, ProtocolError> {
        let frame = self.recv(t)?;
        if frame.msg != msg {
            // `recv` already validated the phase, so this only guards against
            // a second message type being valid in the same phase
            return Err(ProtocolError::PhaseViolation {
                role: self.role,
                phase: self.phase,
                dir: Direction::Recv,
                msg: frame.msg,
            });
        }
        Ok(frame.payload)
    }
}
