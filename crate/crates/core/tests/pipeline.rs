mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rnsgc::garble::{GarbleError, GarblingContext};
use rnsgc::nn::{
    decode_output, encode_input, eval_model, garble_model, plaintext_infer, GarbledLayer, GarbledModel, LayerKind,
    NnError, Shape,
};
use rnsgc::quantizer::{check_range, quantize, QuantParams, RealModel, Scheme};
use rnsgc::rns::RnsBase;

fn small_real_model(rng: &mut ChaCha8Rng) -> RealModel {
    let kinds = [
        LayerKind::conv(2, 3, 3, 1, 1),
        LayerKind::Relu,
        LayerKind::conv(3, 3, 2, 2, 0),
        LayerKind::Relu,
        LayerKind::Dense { outputs: 4 },
    ];
    RealModel::random(Shape::new(2, 4, 4), &kinds, 0.6, rng).unwrap()
}

fn garbled_matches_plaintext(params: QuantParams, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = small_real_model(&mut rng);
    let q = quantize(&model, &params).unwrap();
    let report = check_range(&q, q.params.value_factor().ceil() as u128).unwrap();
    assert!(report.pass, "{report:?}");

    let floats: Vec<f32> = (0..model.input.len()).map(|i| ((i * 37 % 19) as f32 / 9.5) - 1.0).collect();
    let x = q.quantize_input(&floats).unwrap();
    let want = plaintext_infer(&q.network, q.base(), &x).unwrap();

    let mut ctx = GarblingContext::new(b"pipeline", 16, q.base()).unwrap();
    let (gm, secrets) = garble_model(&q.network, q.base(), &mut ctx).unwrap();
    let inputs = encode_input(&ctx, q.base(), &secrets, &x).unwrap();
    let out = eval_model(&gm, &inputs).unwrap();
    assert_eq!(decode_output(&ctx, q.base(), &secrets, &out).unwrap(), want);
}

#[test]
fn simple_quant_pipeline() {
    let base = RnsBase::new(&[7, 11, 13, 17, 19, 23]).unwrap();
    garbled_matches_plaintext(QuantParams::new(Scheme::SimpleQuant { alpha: 4.0 }, base).unwrap(), 1);
}

#[test]
fn scale_quant_pipeline_chains_halvings() {
    let base = RnsBase::cpm(7).unwrap();
    garbled_matches_plaintext(QuantParams::new(Scheme::ScaleQuant { ell: 3 }, base).unwrap(), 2);
}

#[test]
fn scale_quant_plus_pipeline() {
    let base = RnsBase::new(&[32, 167, 173]).unwrap();
    garbled_matches_plaintext(QuantParams::new(Scheme::ScaleQuantPlus { s: 32 }, base).unwrap(), 3);
}

fn relu_fixture() -> (RnsBase, rnsgc::nn::Network, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base = RnsBase::new(&[3, 5, 7, 11]).unwrap();
    let net = rnsgc::nn::Network {
        input: Shape::new(1, 2, 2),
        layers: vec![
            common::random_linear(LayerKind::Dense { outputs: 3 }, Shape::new(1, 2, 2), 3, &mut rng),
            rnsgc::nn::Layer::new(LayerKind::Relu),
        ],
    };
    (base, net, vec![2, -3, 4, 1])
}

#[test]
fn corrupted_table_row_reports_its_gate() {
    let (base, net, x) = relu_fixture();
    let mut ctx = GarblingContext::new(b"rows", 16, &base).unwrap();
    let (mut gm, secrets) = garble_model(&net, &base, &mut ctx).unwrap();
    let inputs = encode_input(&ctx, &base, &secrets, &x).unwrap();
    let GarbledLayer::Gadgets { gadgets, .. } = &mut gm.layers[1] else {
        panic!("relu layer is garbled");
    };
    // every row of the first table, so the evaluator's row is hit whatever its color
    let table = &mut gadgets[0].tables[0];
    let gate = table.gate_id;
    for b in table.rows.iter_mut() {
        *b ^= 0x5a;
    }
    assert_eq!(
        eval_model(&gm, &inputs).unwrap_err(),
        NnError::Garble(GarbleError::AuthFailure { gate_id: gate })
    );
    // the container stays well formed, only evaluation fails
    let again = GarbledModel::from_bytes(&gm.to_bytes()).unwrap();
    assert_eq!(again, gm);
}

#[test]
fn labels_off_the_line_do_not_decode() {
    let (base, net, x) = relu_fixture();
    let mut ctx = GarblingContext::new(b"offline", 16, &base).unwrap();
    let (gm, secrets) = garble_model(&net, &base, &mut ctx).unwrap();
    let mut inputs = encode_input(&ctx, &base, &secrets, &x).unwrap();
    // shift one component of one input label without leaving Z_p
    let p = inputs[3].modulus();
    let plane = inputs[3].plane_mut(1);
    plane[0] = (plane[0] + 1) % p;
    let err = match eval_model(&gm, &inputs) {
        Err(e) => e,
        Ok(out) => decode_output(&ctx, &base, &secrets, &out).unwrap_err(),
    };
    assert!(
        matches!(err, NnError::Garble(GarbleError::AuthFailure { .. } | GarbleError::DecodeFailure)),
        "{err:?}"
    );
}
