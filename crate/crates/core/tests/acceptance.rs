//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rnsgc::bench::{run_scaling_bench, BenchConfig};
use rnsgc::costing::{compare, formula_be_cost, power_of_two_cpm, source_keyed_be_cost};
use rnsgc::gadgets::{scaling_trace, GadgetSpec, ScalingSpec};
use rnsgc::garble::{Evaluator, Garbler, GarblingContext, Label, WireSecrets};
use rnsgc::nn::{
    conv_as_matmul, direct_conv, garble_model, model_f, plaintext_infer, with_scaling, GarbledModel, Layer,
    LayerKind, Network, Shape,
};
use rnsgc::protocol::{transition, Direction, MsgType, Phase, Role};
use rnsgc::rns::{scale_signed_plain, RnsBase};

use common::{config, crt_brute, expected_transition, naive_conv, random_linear, run_loopback, toy_case};

/// Minimum chained/fused evaluation time ratio.
const MIN_SPEEDUP: f64 = 2.0;
/// Fused scaling must cost less than this many single halving steps.
const MAX_FUSED_STEPS: u64 = 5;
const BENCH_INPUTS: usize = 1 << 14;
const BENCH_LAMBDA: u16 = 128;
const E2E_LAMBDA: u16 = 16;
const TOY_NETWORKS: usize = 100;
const CONV_LAYERS: usize = 1000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ctx_for(seed: &str, base: &RnsBase) -> GarblingContext {
    GarblingContext::new(seed.as_bytes(), 16, base).unwrap()
}

fn input_wires(ctx: &GarblingContext, moduli: &[u32]) -> Vec<WireSecrets> {
    moduli
        .iter()
        .enumerate()
        .map(|(i, &m)| WireSecrets {
            zero: ctx.input_zero_label(i as u64, m),
        })
        .collect()
}

fn encode_all(ctx: &GarblingContext, wires: &[WireSecrets], values: &[u32]) -> Vec<Label> {
    wires.iter().zip(values).map(|(w, &v)| ctx.encode(w, v).unwrap()).collect()
}

fn decode_all(ctx: &GarblingContext, wires: &[WireSecrets], labels: &[Label]) -> Vec<u32> {
    wires.iter().zip(labels).map(|(w, l)| ctx.decode(w, l).unwrap()).collect()
}

/// Step-by-step scaling of every `x` in Z_6 by 3 over (2, 3): x, signed x,
/// residues of x, shifted value, signed, residues, y' = [b, 0], its value,
/// signed, extended value y, residues of y, residues after the downshift,
/// output value, signed output.
#[derive(Debug, PartialEq)]
struct TraceRow {
    x: u32,
    x_signed: i32,
    phi_x: [u32; 2],
    up: u32,
    up_signed: i32,
    phi_up: [u32; 2],
    y_prime: [u32; 2],
    y_prime_value: u32,
    y_prime_signed: i32,
    y: u32,
    phi_y: [u32; 2],
    phi_down: [u32; 2],
    down: u32,
    down_signed: i32,
}

#[allow(clippy::too_many_arguments)]
const fn row(
    x: u32,
    x_signed: i32,
    phi_x: [u32; 2],
    up: u32,
    up_signed: i32,
    phi_up: [u32; 2],
    y_prime: [u32; 2],
    y_prime_value: u32,
    y_prime_signed: i32,
    y: u32,
    phi_y: [u32; 2],
    phi_down: [u32; 2],
    down: u32,
    down_signed: i32,
) -> TraceRow {
    TraceRow {
        x,
        x_signed,
        phi_x,
        up,
        up_signed,
        phi_up,
        y_prime,
        y_prime_value,
        y_prime_signed,
        y,
        phi_y,
        phi_down,
        down,
        down_signed,
    }
}

const SCALE_BY_3_OVER_Z6: [TraceRow; 6] = [
    row(0, 0, [0, 0], 3, -3, [1, 0], [1, 0], 3, -3, 1, [1, 1], [0, 0], 0, 0),
    row(1, 1, [1, 1], 4, -2, [0, 1], [1, 0], 3, -3, 1, [1, 1], [0, 0], 0, 0),
    row(2, 2, [0, 2], 5, -1, [1, 2], [1, 0], 3, -3, 1, [1, 1], [0, 0], 0, 0),
    row(3, -3, [1, 0], 0, 0, [0, 0], [0, 0], 0, 0, 0, [0, 0], [1, 2], 5, -1),
    row(4, -2, [0, 1], 1, 1, [1, 1], [0, 0], 0, 0, 0, [0, 0], [1, 2], 5, -1),
    row(5, -1, [1, 2], 2, 2, [0, 2], [0, 0], 0, 0, 0, [0, 0], [1, 2], 5, -1),
];

fn criterion_1() -> Outcome {
    let base = RnsBase::new(&[2, 3]).unwrap();
    let spec = ScalingSpec::new(&base, 3).unwrap();
    let ctx = ctx_for("table-1", &base);
    let wires = input_wires(&ctx, base.moduli());
    let mut gb = Garbler::new(&ctx, 1);
    let secret = scaling_trace(&mut gb, &spec, &wires).map_err(|e| e.to_string())?;
    let tables = gb.finish();
    let crt = |r: &[u32]| crt_brute(base.moduli(), r) as u32;
    let signed = |v: u32| base.decode_signed(v as u128) as i32;
    let pair = |r: &[u32]| [r[0], r[1]];
    for want in SCALE_BY_3_OVER_Z6 {
        let x = want.x;
        let labels = encode_all(&ctx, &wires, base.to_residues(x as u128).unwrap().as_slice());
        let mut ev = Evaluator::new(ctx.public(), 1, &tables);
        let got = scaling_trace(&mut ev, &spec, &labels).map_err(|e| e.to_string())?;
        let shifted = decode_all(&ctx, &secret.shifted, &got.shifted);
        let y_prime: Vec<u32> = secret
            .scaled
            .iter()
            .zip(&got.scaled)
            .map(|(w, l)| match (w, l) {
                (Some(w), Some(l)) => ctx.decode(w, l).unwrap(),
                _ => 0,
            })
            .collect();
        let extended = decode_all(&ctx, &secret.extended, &got.extended);
        let output = decode_all(&ctx, &secret.output, &got.output);
        let phi_x = decode_all(&ctx, &wires, &labels);
        let got_row = row(
            crt(&phi_x),
            signed(crt(&phi_x)),
            pair(&phi_x),
            crt(&shifted),
            signed(crt(&shifted)),
            pair(&shifted),
            pair(&y_prime),
            crt(&y_prime),
            signed(crt(&y_prime)),
            crt(&extended),
            pair(&extended),
            pair(&output),
            crt(&output),
            signed(crt(&output)),
        );
        ensure(got_row == want, || format!("x={x}: got {got_row:?}, want {want:?}"))?;
    }
    Ok("6 rows x 14 columns exact".into())
}

/// Nonempty subsets of `{2, 3, 5, 7, 11}` with at least `min` elements, plus composite bases.
fn small_bases(min: usize) -> Vec<RnsBase> {
    let primes = [2u32, 3, 5, 7, 11];
    let mut out: Vec<RnsBase> = (1u32..32)
        .map(|mask| {
            primes
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &p)| p)
                .collect::<Vec<_>>()
        })
        .filter(|m| m.len() >= min)
        .map(|m| RnsBase::new(&m).unwrap())
        .collect();
    for m in [&[4u32, 9, 5][..], &[9, 4, 5, 7], &[8, 3, 5, 7], &[16, 9, 5]] {
        out.push(RnsBase::new(m).unwrap());
    }
    assert!(out.iter().all(|b| b.product() <= 2310));
    out
}

fn criterion_2() -> Outcome {
    let mut cases = 0u64;
    let mut gadgets = 0;
    for base in small_bases(2) {
        let ctx = ctx_for("be", &base);
        for target in 0..base.len() {
            let spec = GadgetSpec::base_extension(&base, target);
            let moduli = spec.input_moduli();
            let wires = input_wires(&ctx, &moduli);
            let (g, out) = spec.garble(&ctx, gadgets, &wires).map_err(|e| e.to_string())?;
            let pt = base.modulus(target);
            // oracle base with the target moved to the end
            let mut reordered = moduli.clone();
            reordered.push(pt);
            let oracle = RnsBase::new(&reordered).unwrap();
            let bound: u128 = moduli.iter().map(|&m| m as u128).product();
            for y in 0..bound {
                let r: Vec<u32> = moduli.iter().map(|&m| (y % m as u128) as u32).collect();
                let labels = encode_all(&ctx, &wires, &r);
                let got = spec.evaluate(ctx.public(), gadgets, &g, &labels).map_err(|e| e.to_string())?;
                let got = ctx.decode(&out[0], &got[0]).map_err(|e| e.to_string())?;
                let via_rns = oracle.base_extend(&r).unwrap();
                let via_crt = (crt_brute(&moduli, &r) % pt as u128) as u32;
                ensure(got == via_rns && got == via_crt, || {
                    format!("{base} target {pt} y={y}: garbled {got}, rns {via_rns}, crt {via_crt}")
                })?;
                cases += 1;
            }
            gadgets += 1;
        }
    }
    Ok(format!("{gadgets} gadgets, {cases} inputs exact"))
}

/// Products of nonempty proper subsets of the moduli.
fn scale_factors(base: &RnsBase) -> Vec<u64> {
    let k = base.len();
    (1u32..(1 << k) - 1)
        .map(|mask| {
            (0..k)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| base.modulus(i) as u64)
                .product()
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let mut cases = 0u64;
    let mut gadgets = 0u64;
    for base in small_bases(2) {
        let ctx = ctx_for("scaling", &base);
        let p = base.product();
        let half = (p / 2) as i128;
        let wires = input_wires(&ctx, base.moduli());
        for s in scale_factors(&base) {
            let spec = GadgetSpec::scaling(&base, s).map_err(|e| e.to_string())?;
            let (g, out) = spec.garble(&ctx, gadgets, &wires).map_err(|e| e.to_string())?;
            let down = (p / (2 * s as u128)) as i128;
            for x in 0..p {
                let labels = encode_all(&ctx, &wires, base.to_residues(x).unwrap().as_slice());
                let got = spec.evaluate(ctx.public(), gadgets, &g, &labels).map_err(|e| e.to_string())?;
                let got = decode_all(&ctx, &out, &got);
                let got = base.decode_signed(crt_brute(base.moduli(), &got));
                let xs = base.decode_signed(x);
                let plain = scale_signed_plain(xs, s, &base).map_err(|e| e.to_string())?;
                let shifted = (xs + half).div_euclid(s as i128) - down;
                ensure(got == plain && got == shifted, || {
                    format!("{base} s={s} x={xs}: garbled {got}, plain {plain}, shift formula {shifted}")
                })?;
                cases += 1;
            }
            gadgets += 1;
        }
    }
    Ok(format!("{gadgets} (base, s) pairs, {cases} inputs exact"))
}

/// Weight amplitude keeping activations roughly level through a layer with
/// the given fan-in followed by a division by 32.
fn level_amplitude(fan_in: usize) -> i64 {
    ((55.0 / (fan_in as f64).sqrt()).round() as i64).max(1)
}

fn model_f_case(base: &RnsBase, rng: &mut ChaCha8Rng) -> (Network, Vec<i64>, Vec<i64>) {
    let input = Shape::new(3, 8, 8);
    for _ in 0..50 {
        let mut layers = Vec::new();
        let mut shape = input;
        for kind in with_scaling(&model_f(), 32, 1) {
            if kind.is_linear() {
                let fan_in = kind.weight_count(shape) / kind.out_channels();
                layers.push(random_linear(kind.clone(), shape, level_amplitude(fan_in), rng));
            } else {
                layers.push(Layer::new(kind.clone()));
            }
            shape = kind.output_shape(shape).unwrap();
        }
        let net = Network { input, layers };
        let x: Vec<i64> = (0..input.len()).map(|_| rng.gen_range(-32..=32)).collect();
        if let Ok(y) = plaintext_infer(&net, base, &x) {
            if y.iter().any(|&v| v != y[0]) {
                return (net, x, y);
            }
        }
    }
    panic!("no in-range model f instance found");
}

fn criterion_4() -> Outcome {
    let bases: [(&[u32], u64); 4] = [
        (&[32, 167, 173], 32),
        (&[2, 3, 5, 7, 11, 13, 17], 2),
        (&[4, 9, 5, 7, 11, 13], 36),
        (&[3, 5, 7, 11, 13, 16], 15),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let input = Shape::new(3, 8, 8);
    for i in 0..TOY_NETWORKS {
        let (moduli, s) = bases[i % bases.len()];
        let base = RnsBase::new(moduli).unwrap();
        let (net, x, want) = toy_case(&base, input, s, &mut rng);
        let cfg = config(&format!("toy-{i}"), E2E_LAMBDA);
        let (g, e) = run_loopback(&net, &base, &cfg, &x, i % 2 == 1);
        let g = g.map_err(|err| format!("toy {i} garbler: {err}"))?;
        e.map_err(|err| format!("toy {i} evaluator: {err}"))?;
        ensure(g.output.as_deref() == Some(want.as_slice()), || {
            format!("toy {i} on {base}: {:?} vs plaintext {want:?}", g.output)
        })?;
    }
    let base = RnsBase::new(&[32, 167, 173]).unwrap();
    let (net, x, want) = model_f_case(&base, &mut rng);
    let (g, e) = run_loopback(&net, &base, &config("model-f", E2E_LAMBDA), &x, true);
    let g = g.map_err(|err| format!("model f garbler: {err}"))?;
    e.map_err(|err| format!("model f evaluator: {err}"))?;
    ensure(g.output.as_deref() == Some(want.as_slice()), || {
        format!("model f: {:?} vs plaintext {want:?}", g.output)
    })?;
    Ok(format!(
        "{TOY_NETWORKS} toy CNNs + model f (8x8, s=32 on 32,167,173) exact; model f traffic {} B offline, {} B online",
        g.offline_bytes, g.online_bytes
    ))
}

fn criterion_5() -> Outcome {
    let b235 = RnsBase::new(&[2, 3, 5]).unwrap();
    let formula = formula_be_cost(&b235);
    let measured = GadgetSpec::base_extension(&b235, 2).cost(false);
    ensure(formula == 8, || format!("formula gives {formula}, expected 8"))?;
    let bench_base = power_of_two_cpm(8, 5).map_err(|e| e.to_string())?;
    let r = compare(&bench_base, 32).map_err(|e| e.to_string())?;
    let single = r.single_step.ok_or("no single-step column")?;
    ensure(r.measured < MAX_FUSED_STEPS * single, || {
        format!("fused {} >= {MAX_FUSED_STEPS} x single step {single}", r.measured)
    })?;
    Ok(format!(
        "BE (2,3,5): formula {formula}, source-keyed {}, measured {measured}; fused s=32 {} rows vs single s=2 step {single} ({:.2}x)",
        source_keyed_be_cost(&b235),
        r.measured,
        r.measured as f64 / single as f64
    ))
}

fn criterion_6() -> Outcome {
    let cfg = BenchConfig {
        k: 8,
        ell: 5,
        lambda: BENCH_LAMBDA,
        threads: 1,
        inputs: BENCH_INPUTS,
        ..BenchConfig::default()
    };
    let row = run_scaling_bench(&cfg).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} inputs, lambda {}: fused {:.0} ms, chained {:.0} ms, ratio {:.2}",
        row.inputs, cfg.lambda, row.fused_ms, row.chained_ms, row.ratio
    );
    ensure(row.ratio >= MIN_SPEEDUP, || format!("{detail} < {MIN_SPEEDUP}"))?;
    Ok(detail)
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = RnsBase::new(&[32, 167, 173]).unwrap();
    let (net, _, _) = toy_case(&base, Shape::new(3, 8, 8), 32, &mut rng);
    let garble = |seed: &[u8]| {
        let mut ctx = GarblingContext::new(seed, 32, &base).unwrap();
        garble_model(&net, &base, &mut ctx).unwrap().0
    };
    let (a, b, c) = (garble(b"same"), garble(b"same"), garble(b"other"));
    let bytes = a.to_bytes();
    ensure(bytes == b.to_bytes(), || "same seed gave different containers".into())?;
    ensure(bytes != c.to_bytes(), || "different seeds gave the same container".into())?;
    let back = GarbledModel::from_bytes(&bytes).map_err(|e| e.to_string())?;
    ensure(back == a && back.to_bytes() == bytes, || "container round trip changed the model".into())?;

    let mut rejected = 0;
    let mut total = 0;
    for role in [Role::Garbler, Role::Evaluator] {
        for phase in Phase::ALL {
            for dir in [Direction::Send, Direction::Recv] {
                for msg in MsgType::ALL {
                    let got = transition(role, phase, dir, msg);
                    ensure(got == expected_transition(role, phase, dir, msg), || {
                        format!("{role:?} {phase:?} {dir:?} {msg:?} -> {got:?}")
                    })?;
                    total += 1;
                    rejected += got.is_none() as usize;
                }
            }
        }
    }
    Ok(format!(
        "container {} B deterministic and round-trips; {rejected}/{total} phase/message pairs rejected as specified",
        bytes.len()
    ))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = 65521u32;
    let mut done = 0;
    while done < CONV_LAYERS {
        let input = Shape::new(rng.gen_range(1..=4), rng.gen_range(1..=9), rng.gen_range(1..=9));
        let filter = rng.gen_range(1..=4);
        let stride = rng.gen_range(1..=3);
        let padding = rng.gen_range(0..=2);
        let out_channels = rng.gen_range(1..=4);
        let kind = LayerKind::conv(input.channels, out_channels, filter, stride, padding);
        if kind.output_shape(input).is_err() {
            continue;
        }
        let w: Vec<i64> = (0..kind.weight_count(input)).map(|_| rng.gen_range(-100..=100)).collect();
        let x: Vec<i64> = (0..input.len()).map(|_| rng.gen_range(-1000..=1000)).collect();
        let want = naive_conv(input, out_channels, filter, stride, padding, &w, &x);
        let direct = direct_conv(&kind, input, &w, &x).map_err(|e| e.to_string())?;
        let map = conv_as_matmul(&kind, input).map_err(|e| e.to_string())?;
        let matmul = map.apply_i128(&w, &x);
        let red = |v: i64| v.rem_euclid(p as i64) as u32;
        let wm: Vec<u32> = w.iter().map(|&v| red(v)).collect();
        let xm: Vec<u32> = x.iter().map(|&v| red(v)).collect();
        let mut modular = vec![0u32; map.output_len()];
        map.apply_mod(&wm, &xm, p, &mut modular);
        let want_mod: Vec<u32> = want.iter().map(|&v| v.rem_euclid(p as i128) as u32).collect();
        ensure(direct == want && matmul == want && modular == want_mod, || {
            format!("{kind:?} on {input:?} disagrees")
        })?;
        done += 1;
    }
    Ok(format!("{CONV_LAYERS} random layers: direct, im2col and modular im2col agree"))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("scaling trace over (2,3), s=3", criterion_1),
        ("base extension exhaustive", criterion_2),
        ("scaling exhaustive", criterion_3),
        ("end-to-end inference", criterion_4),
        ("cost model", criterion_5),
        ("fused vs chained speedup", criterion_6),
        ("determinism and serialization", criterion_7),
        ("convolution dual path", criterion_8),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let line = match &result {
            Ok(d) => format!("criterion {}: PASS {name} ({secs:.1}s): {d}", i + 1),
            Err(d) => format!("criterion {}: FAIL {name} ({secs:.1}s): {d}", i + 1),
        };
        // written to the raw handle so the summary shows without --nocapture
        writeln!(out, "{line}").unwrap();
        if result.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
