//! Two-party session: the garbler sends the garbled model offline, input
//! labels move online (directly or by oblivious transfer), the evaluator
//! returns output labels and the garbler decodes them.
//!
//! Every message is a frame: a 4-byte little-endian length of what follows,
//! a 1-byte message type, a 2-byte version and the payload.

mod ot;
mod session;
mod transport;

pub use ot::{ot_transfer, OtReceiver, OtSender, PlaintextOt};
pub use session::{transition, Direction, Phase, Role, Session};
pub use transport::{loopback_pair, read_frame, PipeEnd, StreamTransport, TcpTransport, Transport};

use thiserror::Error;

use crate::garble::{GarbleError, GarblingContext, Label};
use crate::nn::{
    decode_output, encode_input, eval_model, garble_model, input_candidates, input_choices, read_labels,
    tensors_from_labels, write_labels, GarbledModel, ModelSecrets, Network, NnError,
};
use crate::rns::RnsBase;

pub const PROTOCOL_VERSION: u16 = 1;
/// Type byte plus version.
pub const HEADER_LEN: usize = 3;
pub const MAX_FRAME_LEN: usize = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    Hello = 1,
    GarbledModel = 2,
    OtRequest = 3,
    OtResponse = 4,
    InputLabels = 5,
    OutputLabels = 6,
    Error = 7,
}

impl MsgType {
    pub const ALL: [MsgType; 7] = [
        MsgType::Hello,
        MsgType::GarbledModel,
        MsgType::OtRequest,
        MsgType::OtResponse,
        MsgType::InputLabels,
        MsgType::OutputLabels,
        MsgType::Error,
    ];

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| *m as u8 == id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg: MsgType,
    pub version: u16,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg: MsgType, payload: Vec<u8>) -> Self {
        Frame {
            msg,
            version: PROTOCOL_VERSION,
            payload,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + HEADER_LEN + self.payload.len());
        out.extend_from_slice(&((HEADER_LEN + self.payload.len()) as u32).to_le_bytes());
        out.push(self.msg as u8);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses exactly one frame occupying all of `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = bytes;
        let f = read_frame(&mut r).map_err(|e| match e {
            ProtocolError::Transport(_) => ProtocolError::MalformedFrame("truncated frame".into()),
            e => e,
        })?;
        if !r.is_empty() {
            return Err(ProtocolError::MalformedFrame("trailing bytes".into()));
        }
        Ok(f)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("{role:?} cannot {dir} {msg:?} in phase {phase:?}")]
    PhaseViolation {
        role: Role,
        phase: Phase,
        dir: Direction,
        msg: MsgType,
    },
    #[error("protocol version {got}, expected {expected}")]
    VersionMismatch { expected: u16, got: u16 },
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("choice {choice} out of range for wire {wire} with modulus {modulus}")]
    ChoiceOutOfRange { wire: usize, choice: u32, modulus: u32 },
    #[error("transport: {0}")]
    Transport(String),
    #[error("peer reported error {code}: {message}")]
    Remote { code: u8, message: String },
    #[error(transparent)]
    Garble(GarbleError),
    #[error(transparent)]
    Nn(NnError),
}

impl From<std::io::Error> for ProtocolError {
    fn from(e: std::io::Error) -> Self {
        ProtocolError::Transport(e.to_string())
    }
}

impl From<GarbleError> for ProtocolError {
    fn from(e: GarbleError) -> Self {
        ProtocolError::Garble(e)
    }
}

impl From<NnError> for ProtocolError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Garble(g) => ProtocolError::Garble(g),
            NnError::VersionMismatch { expected, got } => ProtocolError::VersionMismatch { expected, got },
            NnError::Malformed(m) => ProtocolError::Malformed(m),
            e => ProtocolError::Nn(e),
        }
    }
}

const ERR_AUTH: u8 = 1;
const ERR_VERSION: u8 = 2;
const ERR_MALFORMED: u8 = 3;
const ERR_PHASE: u8 = 4;
const ERR_CHOICE: u8 = 5;
const ERR_OTHER: u8 = 6;

/// Error payload: `code:u8 detail:u64 message`, where `detail` is the gate id
/// of an authentication failure or the offending version.
fn encode_error(e: &ProtocolError) -> Vec<u8> {
    let (code, detail) = match e {
        ProtocolError::Garble(GarbleError::AuthFailure { gate_id }) => (ERR_AUTH, *gate_id),
        ProtocolError::VersionMismatch { got, .. } => (ERR_VERSION, *got as u64),
        ProtocolError::MalformedFrame(_) | ProtocolError::Malformed(_) => (ERR_MALFORMED, 0),
        ProtocolError::PhaseViolation { .. } => (ERR_PHASE, 0),
        ProtocolError::ChoiceOutOfRange { .. } => (ERR_CHOICE, 0),
        _ => (ERR_OTHER, 0),
    };
    let mut out = vec![code];
    out.extend_from_slice(&detail.to_le_bytes());
    out.extend_from_slice(e.to_string().as_bytes());
    out
}

pub(crate) fn decode_error(payload: &[u8]) -> ProtocolError {
    if payload.len() < 9 {
        return ProtocolError::Malformed("error payload".into());
    }
    let detail = u64::from_le_bytes(payload[1..9].try_into().unwrap());
    let message = String::from_utf8_lossy(&payload[9..]).into_owned();
    match payload[0] {
        ERR_AUTH => ProtocolError::Garble(GarbleError::AuthFailure { gate_id: detail }),
        ERR_VERSION => ProtocolError::VersionMismatch {
            expected: PROTOCOL_VERSION,
            got: detail as u16,
        },
        code => ProtocolError::Remote { code, message },
    }
}

/// Labels with their moduli: `count:u32 (modulus:u32 n:u16 bytes)*`.
pub fn write_label_list(labels: &[Label]) -> Vec<u8> {
    let mut out = (labels.len() as u32).to_le_bytes().to_vec();
    for l in labels {
        out.extend_from_slice(&l.modulus().to_le_bytes());
        out.extend_from_slice(&(l.len() as u16).to_le_bytes());
        l.write_bytes(&mut out);
    }
    out
}

pub fn read_label_list(payload: &[u8]) -> Result<Vec<Label>, ProtocolError> {
    let bad = || ProtocolError::Malformed("label list".into());
    let mut r = payload;
    let mut take = |n: usize| -> Result<&[u8], ProtocolError> {
        if r.len() < n {
            return Err(bad());
        }
        let (h, t) = r.split_at(n);
        r = t;
        Ok(h)
    };
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(count.min(payload.len()));
    for _ in 0..count {
        let m = u32::from_le_bytes(take(4)?.try_into().unwrap());
        let n = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        if m < 2 {
            return Err(bad());
        }
        let bytes = take(n * crate::garble::component_width(m))?;
        out.push(Label::from_bytes(m, n, bytes).map_err(|_| bad())?);
    }
    if !r.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Who supplies the model input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InputOwner {
    /// The garbler encodes its own input and sends the labels directly.
    Garbler(Vec<i64>),
    /// The evaluator obtains labels for its input by oblivious transfer.
    Evaluator,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Hello {
    role: Role,
    evaluator_input: bool,
    lambda: u16,
    moduli: Vec<u32>,
}

impl Hello {
    fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.role as u8, self.evaluator_input as u8];
        out.extend_from_slice(&self.lambda.to_le_bytes());
        out.extend_from_slice(&(self.moduli.len() as u16).to_le_bytes());
        for m in &self.moduli {
            out.extend_from_slice(&m.to_le_bytes());
        }
        out
    }

    fn decode(p: &[u8]) -> Result<Self, ProtocolError> {
        let bad = || ProtocolError::Malformed("hello".into());
        if p.len() < 6 {
            return Err(bad());
        }
        let role = Role::from_id(p[0]).ok_or_else(bad)?;
        let evaluator_input = match p[1] {
            0 => false,
            1 => true,
            _ => return Err(bad()),
        };
        let lambda = u16::from_le_bytes([p[2], p[3]]);
        let k = u16::from_le_bytes([p[4], p[5]]) as usize;
        let body = &p[6..];
        if body.len() != 4 * k {
            return Err(bad());
        }
        let moduli = body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Hello {
            role,
            evaluator_input,
            lambda,
            moduli,
        })
    }
}

#[derive(Clone, Debug)]
pub struct GarblerConfig {
    pub seed: Vec<u8>,
    pub lambda: u16,
    pub row_reduction: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionOutcome {
    /// Decoded outputs (garbler only).
    pub output: Option<Vec<i64>>,
    pub transcript: [u8; 32],
    /// Bytes of handshake and garbled model frames.
    pub offline_bytes: u64,
    /// Bytes of all other frames.
    pub online_bytes: u64,
}

fn outcome(session: &Session, output: Option<Vec<i64>>) -> SessionOutcome {
    let offline = session.traffic(MsgType::Hello) + session.traffic(MsgType::GarbledModel);
    let online = MsgType::ALL
        .iter()
        .filter(|m| !matches!(m, MsgType::Hello | MsgType::GarbledModel))
        .map(|&m| session.traffic(m))
        .sum();
    SessionOutcome {
        output,
        transcript: session.transcript(),
        offline_bytes: offline,
        online_bytes: online,
    }
}

/// Reports `err` to the peer when the session is still open, then returns it.
///
/// A broken connection usually means the peer gave up first; its error
/// frame, if one arrived, explains the failure better.
fn fail<T>(session: &mut Session, t: &mut dyn Transport, err: ProtocolError) -> Result<T, ProtocolError> {
    if session.phase().is_terminal() {
        return Err(err);
    }
    if let ProtocolError::Transport(_) = err {
        return match session.recv(t) {
            Err(remote) if !matches!(remote, ProtocolError::Transport(_) | ProtocolError::MalformedFrame(_)) => {
                Err(remote)
            }
            _ => Err(err),
        };
    }
    let _ = session.send(t, MsgType::Error, encode_error(&err));
    Err(err)
}

/// Garbles `net` and runs the garbler side of one session.
pub fn run_garbler(
    net: &Network,
    base: &RnsBase,
    cfg: &GarblerConfig,
    input: &InputOwner,
    transport: &mut dyn Transport,
    ot: &mut dyn OtSender,
) -> Result<SessionOutcome, ProtocolError> {
    let mut ctx = GarblingContext::with_options(&cfg.seed, cfg.lambda, base, cfg.row_reduction)?;
    let (gm, secrets) = garble_model(net, base, &mut ctx)?;
    run_garbler_with(&ctx, &gm, &secrets, input, transport, ot)
}

/// Garbler side for an already garbled model.
pub fn run_garbler_with(
    ctx: &GarblingContext,
    gm: &GarbledModel,
    secrets: &ModelSecrets,
    input: &InputOwner,
    transport: &mut dyn Transport,
    ot: &mut dyn OtSender,
) -> Result<SessionOutcome, ProtocolError> {
    let mut s = Session::new(Role::Garbler);
    let r = garbler_steps(&mut s, ctx, gm, secrets, input, transport, ot);
    match r {
        Ok(out) => Ok(outcome(&s, Some(out))),
        Err(e) => fail(&mut s, transport, e),
    }
}

fn garbler_steps(
    s: &mut Session,
    ctx: &GarblingContext,
    gm: &GarbledModel,
    secrets: &ModelSecrets,
    input: &InputOwner,
    t: &mut dyn Transport,
    ot: &mut dyn OtSender,
) -> Result<Vec<i64>, ProtocolError> {
    let hello = Hello {
        role: Role::Garbler,
        evaluator_input: matches!(input, InputOwner::Evaluator),
        lambda: gm.params.lambda,
        moduli: gm.base.moduli().to_vec(),
    };
    s.send(t, MsgType::Hello, hello.encode())?;
    let reply = Hello::decode(&s.expect(t, MsgType::Hello)?)?;
    if reply
        != (Hello {
            role: Role::Evaluator,
            ..hello.clone()
        })
    {
        return Err(ProtocolError::Malformed("evaluator hello does not match".into()));
    }
    s.send(t, MsgType::GarbledModel, gm.to_bytes())?;
    match input {
        InputOwner::Garbler(values) => {
            let labels = encode_input(ctx, &gm.base, secrets, values)?;
            s.send(t, MsgType::InputLabels, write_labels(&labels))?;
        }
        InputOwner::Evaluator => {
            let candidates = input_candidates(ctx, secrets)?;
            ot.send(s, t, &candidates)?;
        }
    }
    let out = read_labels(&s.expect(t, MsgType::OutputLabels)?)?;
    let values = decode_output(ctx, &gm.base, secrets, &out)?;
    s.complete_local()?;
    Ok(values)
}

/// Evaluator side of one session. `input` must be given exactly when the
/// garbler announces that the evaluator owns the input.
pub fn run_evaluator(
    transport: &mut dyn Transport,
    input: Option<&[i64]>,
    ot: &mut dyn OtReceiver,
) -> Result<SessionOutcome, ProtocolError> {
    let mut s = Session::new(Role::Evaluator);
    match evaluator_steps(&mut s, transport, input, ot) {
        Ok(()) => Ok(outcome(&s, None)),
        Err(e) => fail(&mut s, transport, e),
    }
}

fn evaluator_steps(
    s: &mut Session,
    t: &mut dyn Transport,
    input: Option<&[i64]>,
    ot: &mut dyn OtReceiver,
) -> Result<(), ProtocolError> {
    let hello = Hello::decode(&s.expect(t, MsgType::Hello)?)?;
    if hello.role != Role::Garbler {
        return Err(ProtocolError::Malformed("peer is not a garbler".into()));
    }
    if hello.evaluator_input != input.is_some() {
        return Err(ProtocolError::Malformed("input ownership disagrees with the garbler".into()));
    }
    s.send(
        t,
        MsgType::Hello,
        Hello {
            role: Role::Evaluator,
            ..hello.clone()
        }
        .encode(),
    )?;
    let gm = GarbledModel::from_bytes(&s.expect(t, MsgType::GarbledModel)?)?;
    if gm.base.moduli() != hello.moduli.as_slice() || gm.params.lambda != hello.lambda {
        return Err(ProtocolError::Malformed("garbled model does not match hello".into()));
    }
    let inputs = match input {
        Some(values) => {
            let choices = input_choices(&gm.base, values)?;
            let labels = ot.receive(s, t, &choices)?;
            tensors_from_labels(&gm.base, &gm.params, &labels)?
        }
        None => read_labels(&s.expect(t, MsgType::InputLabels)?)?,
    };
    let out = eval_model(&gm, &inputs)?;
    s.complete_local()?;
    s.send(t, MsgType::OutputLabels, write_labels(&out))
}
