//! Oblivious transfer interface and an insecure stand-in.

use super::{read_label_list, write_label_list, MsgType, ProtocolError, Session, Transport};
use crate::garble::Label;

/// Garbler side: offers, for every wire, the labels of all its values.
pub trait OtSender {
    fn send(
        &mut self,
        session: &mut Session,
        transport: &mut dyn Transport,
        candidates: &[Vec<Label>],
    ) -> Result<(), ProtocolError>;
}

/// Evaluator side: obtains the label of one chosen value per wire.
pub trait OtReceiver {
    fn receive(
        &mut self,
        session: &mut Session,
        transport: &mut dyn Transport,
        choices: &[u32],
    ) -> Result<Vec<Label>, ProtocolError>;
}

/// Picks `candidates[i][choices[i]]` for every wire.
pub fn ot_transfer(choices: &[u32], candidates: &[Vec<Label>]) -> Result<Vec<Label>, ProtocolError> {
    if choices.len() != candidates.len() {
        return Err(ProtocolError::Malformed(format!(
            "{} choices for {} wires",
            choices.len(),
            candidates.len()
        )));
    }
    choices
        .iter()
        .zip(candidates)
        .enumerate()
        .map(|(wire, (&c, set))| {
            set.get(c as usize).cloned().ok_or(ProtocolError::ChoiceOutOfRange {
                wire,
                choice: c,
                modulus: set.len() as u32,
            })
        })
        .collect()
}

/// INSECURE: the receiver sends its choices in the clear. Functional
/// stand-in for tests and local runs; it gives the garbler the evaluator's
/// input.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlaintextOt;

impl OtSender for PlaintextOt {
    fn send(
        &mut self,
        session: &mut Session,
        transport: &mut dyn Transport,
        candidates: &[Vec<Label>],
    ) -> Result<(), ProtocolError> {
        let req = session.expect(transport, MsgType::OtRequest)?;
        let choices = decode_choices(&req)?;
        let chosen = ot_transfer(&choices, candidates)?;
        session.send(transport, MsgType::OtResponse, write_label_list(&chosen))
    }
}

impl OtReceiver for PlaintextOt {
    fn receive(
        &mut self,
        session: &mut Session,
        transport: &mut dyn Transport,
        choices: &[u32],
    ) -> Result<Vec<Label>, ProtocolError> {
        let mut req = Vec::with_capacity(4 + 4 * choices.len());
        req.extend_from_slice(&(choices.len() as u32).to_le_bytes());
        for c in choices {
            req.extend_from_slice(&c.to_le_bytes());
        }
        session.send(transport, MsgType::OtRequest, req)?;
        let resp = session.expect(transport, MsgType::OtResponse)?;
        let labels = read_label_list(&resp)?;
        if labels.len() != choices.len() {
            return Err(ProtocolError::Malformed("OT response length".into()));
        }
        Ok(labels)
    }
}

fn decode_choices(payload: &[u8]) -> Result<Vec<u32>, ProtocolError> {
    let bad = || ProtocolError::Malformed("OT request".into());
    let n = u32::from_le_bytes(payload.get(..4).ok_or_else(bad)?.try_into().unwrap()) as usize;
    let body = &payload[4..];
    if body.len() != n.checked_mul(4).ok_or_else(bad)? {
        return Err(bad());
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
