#![allow(dead_code)]

use rand::Rng;
use rnsgc::nn::{conv_output_dim, plaintext_infer, Layer, LayerKind, Network, Shape};
use rnsgc::protocol::{
    loopback_pair, Direction, MsgType, Phase, Role, run_evaluator, run_garbler, GarblerConfig, InputOwner, PlaintextOt, ProtocolError, SessionOutcome, Transport,
};
use rnsgc::rns::RnsBase;

/// Chinese remaindering by search: the unique `x < prod(moduli)` with the given residues.
pub fn crt_brute(moduli: &[u32], residues: &[u32]) -> u128 {
    let p: u128 = moduli.iter().map(|&m| m as u128).product();
    (0..p)
        .find(|&x| moduli.iter().zip(residues).all(|(&m, &r)| x % m as u128 == r as u128))
        .expect("moduli are coprime")
}

/// Textbook convolution over a CHW input with OIHW weights and zero padding.
pub fn naive_conv(
    input: Shape,
    out_channels: usize,
    filter: usize,
    stride: usize,
    padding: usize,
    weights: &[i64],
    x: &[i64],
) -> Vec<i128> {
    let oh = conv_output_dim(input.height, filter, stride, padding).unwrap();
    let ow = conv_output_dim(input.width, filter, stride, padding).unwrap();
    let mut out = vec![0i128; out_channels * oh * ow];
    for o in 0..out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0i128;
                for c in 0..input.channels {
                    for fy in 0..filter {
                        for fx in 0..filter {
                            let iy = (oy * stride + fy) as isize - padding as isize;
                            let ix = (ox * stride + fx) as isize - padding as isize;
                            if iy < 0 || ix < 0 || iy >= input.height as isize || ix >= input.width as isize {
                                continue;
                            }
                            let w = weights[((o * input.channels + c) * filter + fy) * filter + fx];
                            let v = x[(c * input.height + iy as usize) * input.width + ix as usize];
                            acc += w as i128 * v as i128;
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

/// Random linear layer parameters for `kind` on `shape`.
pub fn random_linear(kind: LayerKind, shape: Shape, amp: i64, rng: &mut impl Rng) -> Layer {
    let w = (0..kind.weight_count(shape)).map(|_| rng.gen_range(-amp..=amp)).collect();
    let b = (0..kind.out_channels()).map(|_| rng.gen_range(-amp * 4..=amp * 4)).collect();
    Layer::linear(kind, w, b)
}

/// A random network of `2..=4` Conv2d/Dense/ReLU layers on `input`, with a
/// `Scale { factor: s }` after every linear layer. The last layer is Dense.
pub fn random_toy_cnn(input: Shape, s: u64, rng: &mut impl Rng) -> Network {
    let n = rng.gen_range(2..=4);
    let mut layers = Vec::new();
    let mut shape = input;
    let mut last_relu = true;
    for i in 0..n {
        let kind = if i == n - 1 {
            LayerKind::Dense {
                outputs: rng.gen_range(1..=6),
            }
        } else if !last_relu && rng.gen_bool(0.5) {
            LayerKind::Relu
        } else if shape.height > 1 && rng.gen_bool(0.7) {
            let filter = rng.gen_range(1..=3.min(shape.height));
            let padding = rng.gen_range(0..=1);
            let stride = rng.gen_range(1..=2);
            LayerKind::conv(shape.channels, rng.gen_range(1..=4), filter, stride, padding)
        } else {
            LayerKind::Dense {
                outputs: rng.gen_range(2..=16),
            }
        };
        last_relu = kind == LayerKind::Relu;
        if kind.is_linear() {
            let amp = rng.gen_range(1..=4);
            layers.push(random_linear(kind.clone(), shape, amp, rng));
            shape = kind.output_shape(shape).unwrap();
            layers.push(Layer::new(LayerKind::Scale { factor: s, steps: 1 }));
        } else {
            layers.push(Layer::new(kind));
        }
    }
    Network { input, layers }
}

pub fn random_input(len: usize, bound: i64, rng: &mut impl Rng) -> Vec<i64> {
    (0..len).map(|_| rng.gen_range(-bound..=bound)).collect()
}

/// Draws toy networks until one evaluates in range on a random input.
pub fn toy_case(base: &RnsBase, input: Shape, s: u64, rng: &mut impl Rng) -> (Network, Vec<i64>, Vec<i64>) {
    loop {
        let net = random_toy_cnn(input, s, rng);
        let x = random_input(input.len(), 16, rng);
        if let Ok(y) = plaintext_infer(&net, base, &x) {
            return (net, x, y);
        }
    }
}

pub type Outcomes = (Result<SessionOutcome, ProtocolError>, Result<SessionOutcome, ProtocolError>);

/// Runs garbler and evaluator on the given transports in two threads.
pub fn run_pair<A, B>(
    net: &Network,
    base: &RnsBase,
    cfg: &GarblerConfig,
    input: &[i64],
    evaluator_owns_input: bool,
    mut gt: A,
    mut et: B,
) -> Outcomes
where
    A: Transport + Send,
    B: Transport + Send,
{
    let (owner, eval_input) = if evaluator_owns_input {
        (InputOwner::Evaluator, Some(input.to_vec()))
    } else {
        (InputOwner::Garbler(input.to_vec()), None)
    };
    std::thread::scope(|s| {
        let ev = s.spawn(move || run_evaluator(&mut et, eval_input.as_deref(), &mut PlaintextOt));
        let g = run_garbler(net, base, cfg, &owner, &mut gt, &mut PlaintextOt);
        drop(gt);
        (g, ev.join().unwrap())
    })
}

pub fn run_loopback(net: &Network, base: &RnsBase, cfg: &GarblerConfig, input: &[i64], evaluator_owns_input: bool) -> Outcomes {
    let (gt, et) = loopback_pair();
    run_pair(net, base, cfg, input, evaluator_owns_input, gt, et)
}

pub fn config(seed: &str, lambda: u16) -> GarblerConfig {
    GarblerConfig {
        seed: seed.as_bytes().to_vec(),
        lambda,
        row_reduction: true,
    }
}

/// Allowed moves, written out independently of the implementation.
pub const ALLOWED: &[(Role, Phase, Direction, MsgType, Phase)] = {
    use Direction::*;
    use MsgType::*;
    use Phase::*;
    use Role::*;
    &[
        (Garbler, Idle, Send, Hello, HelloSent),
        (Garbler, HelloSent, Recv, Hello, Handshaken),
        (Garbler, Handshaken, Send, GarbledModel, OfflineSent),
        (Garbler, OfflineSent, Send, InputLabels, InputsExchanged),
        (Garbler, OfflineSent, Recv, OtRequest, OtPending),
        (Garbler, OtPending, Send, OtResponse, InputsExchanged),
        (Garbler, InputsExchanged, Recv, OutputLabels, Evaluated),
        (Evaluator, Idle, Recv, Hello, HelloReceived),
        (Evaluator, HelloReceived, Send, Hello, Handshaken),
        (Evaluator, Handshaken, Recv, GarbledModel, OfflineReceived),
        (Evaluator, OfflineReceived, Recv, InputLabels, InputsExchanged),
        (Evaluator, OfflineReceived, Send, OtRequest, OtPending),
        (Evaluator, OtPending, Recv, OtResponse, InputsExchanged),
        (Evaluator, Evaluated, Send, OutputLabels, Done),
    ]
};

pub fn expected_transition(role: Role, phase: Phase, dir: Direction, msg: MsgType) -> Option<Phase> {
    if msg == MsgType::Error {
        return (!matches!(phase, Phase::Decoded | Phase::Done | Phase::Failed)).then_some(Phase::Failed);
    }
    ALLOWED
        .iter()
        .find(|&&(r, p, d, m, _)| (r, p, d, m) == (role, phase, dir, msg))
        .map(|t| t.4)
}
