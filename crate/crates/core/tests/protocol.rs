mod common;

use std::collections::{HashSet, VecDeque};
use std::net::TcpListener;

use rnsgc::garble::{GarbleError, Label};
use rnsgc::nn::{plaintext_infer, Layer, LayerKind, Network, Shape, CONTAINER_CHECK};
use rnsgc::protocol::{
    loopback_pair, run_evaluator, transition, Direction, Frame, MsgType, OtReceiver, Phase, PlaintextOt,
    ProtocolError, Role, Session, TcpTransport, Transport, PROTOCOL_VERSION,
};
use rnsgc::rns::RnsBase;

use common::{config, expected_transition as expected, run_loopback, run_pair};

const DIRS: [Direction; 2] = [Direction::Send, Direction::Recv];

#[test]
fn transition_table_matches_full_matrix() {
    let mut checked = 0;
    for role in [Role::Garbler, Role::Evaluator] {
        for phase in Phase::ALL {
            for dir in DIRS {
                for msg in MsgType::ALL {
                    assert_eq!(
                        transition(role, phase, dir, msg),
                        expected(role, phase, dir, msg),
                        "{role:?} {phase:?} {dir:?} {msg:?}"
                    );
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 2 * 12 * 2 * 7);
}

#[test]
fn sessions_reject_every_out_of_phase_message() {
    for role in [Role::Garbler, Role::Evaluator] {
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([Session::new(role)]);
        while let Some(s) = queue.pop_front() {
            if !seen.insert(s.phase()) {
                continue;
            }
            for dir in DIRS {
                for msg in MsgType::ALL {
                    let mut t = s.clone();
                    match (t.advance(dir, msg), expected(role, s.phase(), dir, msg)) {
                        (Ok(()), Some(next)) => {
                            assert_eq!(t.phase(), next);
                            queue.push_back(t);
                        }
                        (Err(ProtocolError::PhaseViolation { phase, .. }), None) => {
                            assert_eq!(phase, s.phase());
                            assert_eq!(t.phase(), s.phase());
                        }
                        (got, want) => panic!("{role:?} {:?} {dir:?} {msg:?}: {got:?} vs {want:?}", s.phase()),
                    }
                }
            }
            let mut t = s.clone();
            if t.complete_local().is_ok() {
                queue.push_back(t);
            }
        }
        let terminal = match role {
            Role::Garbler => Phase::Decoded,
            Role::Evaluator => Phase::Done,
        };
        assert!(seen.contains(&terminal) && seen.contains(&Phase::Failed), "{role:?}: {seen:?}");
    }
}

fn tiny_net() -> (Network, RnsBase, Vec<i64>) {
    let base = RnsBase::new(&[2, 3, 5, 7, 11]).unwrap();
    let net = Network {
        input: Shape::new(1, 1, 3),
        layers: vec![
            Layer::linear(LayerKind::Dense { outputs: 2 }, vec![1, -2, 3, 0, 1, -1], vec![4, -5]),
            Layer::new(LayerKind::Relu),
            Layer::new(LayerKind::Scale { factor: 2, steps: 1 }),
        ],
    };
    (net, base, vec![3, -1, 7])
}

#[test]
fn loopback_and_tcp_produce_identical_transcripts() {
    let (net, base, x) = tiny_net();
    let want = plaintext_infer(&net, &base, &x).unwrap();
    let cfg = config("transcripts", 16);
    for evaluator_owns in [false, true] {
        let (g, e) = run_loopback(&net, &base, &cfg, &x, evaluator_owns);
        let (g, e) = (g.unwrap(), e.unwrap());
        assert_eq!(g.output.as_deref(), Some(want.as_slice()));
        assert_eq!(g.transcript, e.transcript);

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let (tg, te) = std::thread::scope(|s| {
            let acc = s.spawn(|| TcpTransport::accept(&listener).unwrap());
            let te = TcpTransport::connect(&addr).unwrap();
            (acc.join().unwrap(), te)
        });
        let (g2, e2) = run_pair(&net, &base, &cfg, &x, evaluator_owns, tg, te);
        let (g2, e2) = (g2.unwrap(), e2.unwrap());
        assert_eq!(g2, g);
        assert_eq!(e2.transcript, g.transcript);
        assert!(g.offline_bytes > 0 && g.online_bytes > 0);
    }
}

#[test]
fn different_seeds_change_the_transcript_not_the_result() {
    let (net, base, x) = tiny_net();
    let (a, _) = run_loopback(&net, &base, &config("a", 16), &x, false);
    let (b, _) = run_loopback(&net, &base, &config("b", 16), &x, false);
    let (a, b) = (a.unwrap(), b.unwrap());
    assert_eq!(a.output, b.output);
    assert_ne!(a.transcript, b.transcript);
}

/// Flips one payload byte of every frame of type `msg` it sends.
struct Tamper<T> {
    inner: T,
    msg: MsgType,
}

impl<T: Transport> Transport for Tamper<T> {
    fn send(&mut self, frame: &Frame) -> Result<(), ProtocolError> {
        if frame.msg == self.msg && !frame.payload.is_empty() {
            let mut f = frame.clone();
            let i = f.payload.len() / 2;
            f.payload[i] ^= 0x10;
            return self.inner.send(&f);
        }
        self.inner.send(frame)
    }

    fn recv(&mut self) -> Result<Frame, ProtocolError> {
        self.inner.recv()
    }
}

#[test]
fn tampered_model_fails_authentication_on_both_sides() {
    let (net, base, x) = tiny_net();
    let (gt, et) = loopback_pair();
    let gt = Tamper {
        inner: gt,
        msg: MsgType::GarbledModel,
    };
    let (g, e) = run_pair(&net, &base, &config("tamper", 16), &x, false, gt, et);
    let auth = ProtocolError::Garble(GarbleError::AuthFailure {
        gate_id: CONTAINER_CHECK,
    });
    assert_eq!(e.unwrap_err(), auth);
    assert_eq!(g.unwrap_err(), auth);
}

#[test]
fn tampered_input_labels_are_rejected() {
    let (net, base, x) = tiny_net();
    let (gt, et) = loopback_pair();
    let gt = Tamper {
        inner: gt,
        msg: MsgType::InputLabels,
    };
    let (g, e) = run_pair(&net, &base, &config("labels", 16), &x, false, gt, et);
    let e = e.unwrap_err();
    assert!(
        matches!(e, ProtocolError::Garble(_) | ProtocolError::Malformed(_)),
        "{e:?}"
    );
    assert!(g.is_err());
}

fn raw_frame(msg: MsgType, version: u16, payload: Vec<u8>) -> Frame {
    Frame {
        msg,
        version,
        payload,
    }
}

#[test]
fn evaluator_rejects_wrong_version_and_reports_it() {
    let (mut g, mut e) = loopback_pair();
    g.send(&raw_frame(MsgType::Hello, PROTOCOL_VERSION + 1, vec![1, 0, 16, 0, 1, 0, 5, 0, 0, 0]))
        .unwrap();
    let err = run_evaluator(&mut e, None, &mut PlaintextOt).unwrap_err();
    assert_eq!(
        err,
        ProtocolError::VersionMismatch {
            expected: PROTOCOL_VERSION,
            got: PROTOCOL_VERSION + 1
        }
    );
    let reply = g.recv().unwrap();
    assert_eq!(reply.msg, MsgType::Error);
    let mut peer = Session::new(Role::Garbler);
    peer.advance(Direction::Send, MsgType::Hello).unwrap();
    let mut replay = loopback_pair();
    replay.0.send(&reply).unwrap();
    assert_eq!(
        peer.recv(&mut replay.1).unwrap_err(),
        ProtocolError::VersionMismatch {
            expected: PROTOCOL_VERSION,
            got: PROTOCOL_VERSION + 1
        }
    );
}

#[test]
fn evaluator_rejects_out_of_phase_first_message() {
    let (mut g, mut e) = loopback_pair();
    g.send(&Frame::new(MsgType::GarbledModel, vec![0; 8])).unwrap();
    let err = run_evaluator(&mut e, None, &mut PlaintextOt).unwrap_err();
    assert_eq!(
        err,
        ProtocolError::PhaseViolation {
            role: Role::Evaluator,
            phase: Phase::Idle,
            dir: Direction::Recv,
            msg: MsgType::GarbledModel
        }
    );
    assert_eq!(g.recv().unwrap().msg, MsgType::Error);
}

#[test]
fn truncated_frames_are_malformed() {
    let (g, mut e) = loopback_pair();
    let bytes = Frame::new(MsgType::Hello, vec![1, 2, 3, 4]).to_bytes();
    let mut pipe = g.into_inner();
    std::io::Write::write_all(&mut pipe, &bytes[..bytes.len() - 2]).unwrap();
    drop(pipe);
    assert!(matches!(e.recv(), Err(ProtocolError::MalformedFrame(_))));

    let (g, mut e) = loopback_pair();
    drop(g);
    assert!(matches!(e.recv(), Err(ProtocolError::Transport(_))));
}

#[test]
fn oversized_and_unknown_frames_are_malformed() {
    let mut huge = &[0xff, 0xff, 0xff, 0xff, 1, 1, 0][..];
    assert!(matches!(rnsgc::protocol::read_frame(&mut huge), Err(ProtocolError::MalformedFrame(_))));
    let mut unknown = &[3, 0, 0, 0, 99, 1, 0][..];
    assert!(matches!(rnsgc::protocol::read_frame(&mut unknown), Err(ProtocolError::MalformedFrame(_))));
}

/// Asks for a label one past the end of the first wire.
struct GreedyOt;

impl OtReceiver for GreedyOt {
    fn receive(&mut self, s: &mut Session, t: &mut dyn Transport, choices: &[u32]) -> Result<Vec<Label>, ProtocolError> {
        let mut req = (choices.len() as u32).to_le_bytes().to_vec();
        for (i, c) in choices.iter().enumerate() {
            let c = if i == 0 { 2 } else { *c };
            req.extend_from_slice(&c.to_le_bytes());
        }
        s.send(t, MsgType::OtRequest, req)?;
        s.expect(t, MsgType::OtResponse)?;
        unreachable!("garbler answers with an error")
    }
}

#[test]
fn out_of_range_ot_choice_aborts_the_session() {
    let (net, base, x) = tiny_net();
    let (mut gt, mut et) = loopback_pair();
    let cfg = config("ot", 16);
    let (g, e) = std::thread::scope(|s| {
        let ev = s.spawn(move || run_evaluator(&mut et, Some(&x), &mut GreedyOt));
        let g = rnsgc::protocol::run_garbler(
            &net,
            &base,
            &cfg,
            &rnsgc::protocol::InputOwner::Evaluator,
            &mut gt,
            &mut PlaintextOt,
        );
        (g, ev.join().unwrap())
    });
    assert_eq!(
        g.unwrap_err(),
        ProtocolError::ChoiceOutOfRange {
            wire: 0,
            choice: 2,
            modulus: 2
        }
    );
    assert!(matches!(e.unwrap_err(), ProtocolError::Remote { .. }));
}

#[test]
fn input_ownership_must_agree() {
    let (net, base, x) = tiny_net();
    let (mut gt, mut et) = loopback_pair();
    let cfg = config("owner", 16);
    let (g, e) = std::thread::scope(|s| {
        let ev = s.spawn(move || run_evaluator(&mut et, Some(&x), &mut PlaintextOt));
        let g = rnsgc::protocol::run_garbler(
            &net,
            &base,
            &cfg,
            &rnsgc::protocol::InputOwner::Garbler(vec![1, 2, 3]),
            &mut gt,
            &mut PlaintextOt,
        );
        (g, ev.join().unwrap())
    });
    assert!(matches!(e.unwrap_err(), ProtocolError::Malformed(_)));
    assert!(matches!(g.unwrap_err(), ProtocolError::Remote { .. }));
}
