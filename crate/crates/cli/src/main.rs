mod config;
mod error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rnsgc::bench::{self, BenchConfig};
use rnsgc::costing;
use rnsgc::garble::GarblingContext;
use rnsgc::nn::{
    decode_output, encode_input, eval_model, garble_model, model_big_f, model_f, plaintext_infer, read_labels,
    write_labels, GarbledModel, LayerKind, ModelSecrets, Shape,
};
use rnsgc::protocol::{
    loopback_pair, run_evaluator, run_garbler, GarblerConfig, InputOwner, PlaintextOt, SessionOutcome, TcpTransport,
};
use rnsgc::quantizer::{check_range, quantize, QuantParams, QuantizedModel, RealModel, Scheme};
use rnsgc::rns::RnsBase;

use config::{require, RunConfig, SchemeName};
use error::CliError;

#[derive(Parser)]
#[command(name = "rnsgc", version, about = "Garbled neural network inference over residue number systems")]
struct Cli {
    /// JSON file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a model manifest and weight blob with random weights.
    RandomModel(RandomModelArgs),
    /// Quantize a floating-point model and check its range on the base.
    Quantize(QuantizeArgs),
    /// Garble a quantized model into a container plus a secrets file.
    Garble(GarbleArgs),
    /// Encode cleartext inputs to labels with the garbler's secrets.
    Encode(EncodeArgs),
    /// Evaluate a garbled container on input labels.
    Evaluate(EvaluateArgs),
    /// Decode output labels with the garbler's secrets.
    Decode(DecodeArgs),
    /// Run garbler and evaluator in one process and compare with plaintext inference.
    InferLocal(InferLocalArgs),
    /// Run one side of a two-party session over TCP.
    Session(SessionArgs),
    /// Time fused against chained scaling gadgets.
    BenchScaling(BenchArgs),
    /// Ciphertext counts of base extension and scaling on CPM bases.
    Cost(CostArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Arch {
    /// conv(3->4, 3x3) + ReLU + dense(10)
    Toy,
    F,
    BigF,
}

#[derive(Args)]
struct RandomModelArgs {
    #[arg(long, value_enum, default_value = "toy")]
    arch: Arch,
    /// Height and width of the input image.
    #[arg(long, default_value_t = 32)]
    image: usize,
    /// Weights are drawn uniformly from (-amplitude, amplitude).
    #[arg(long, default_value_t = 0.5)]
    amplitude: f32,
    #[arg(long)]
    seed: Option<String>,
    /// Manifest path; the blob is written next to it with extension `.bin`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SchemeArgs {
    /// Comma-separated moduli, e.g. "32,167,173".
    #[arg(long)]
    base: Option<String>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeName>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    ell: Option<u32>,
    /// Scale factor for scale-plus.
    #[arg(long)]
    scale: Option<u64>,
}

#[derive(Args)]
struct QuantizeArgs {
    /// Model manifest (JSON).
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Largest magnitude of a quantized input value.
    #[arg(long)]
    input_bound: Option<u128>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GarbleParams {
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    lambda: Option<u16>,
    /// Store full projection tables instead of dropping the first row.
    #[arg(long)]
    no_row_reduction: bool,
}

#[derive(Args)]
struct GarbleArgs {
    /// Quantized model (JSON).
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    params: GarbleParams,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the garbler's secrets.
    #[arg(long)]
    secrets: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    secrets: PathBuf,
    /// JSON array of quantized input integers.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    garbled: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    secrets: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Owner {
    Garbler,
    Evaluator,
}

#[derive(Args)]
struct InferLocalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Party holding the input; evaluator input goes through oblivious transfer.
    #[arg(long, value_enum, default_value = "garbler")]
    owner: Owner,
    #[command(flatten)]
    params: GarbleParams,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RoleArg {
    Garbler,
    Evaluator,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(value_enum)]
    role: RoleArg,
    #[arg(long, conflicts_with = "connect")]
    listen: Option<String>,
    #[arg(long)]
    connect: Option<String>,
    /// Quantized model; garbler only.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Input integers held by this party. Exactly one party supplies input.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    params: GarbleParams,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Sweep {
    Threads,
    Inputs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "inputs")]
    sweep: Sweep,
    /// Number of CPM moduli.
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long)]
    ell: Option<u32>,
    #[arg(long)]
    lambda: Option<u16>,
    /// Thread counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    threads: Option<Vec<usize>>,
    /// Input counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    input_size: Option<Vec<usize>>,
    /// Integer seed.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long, default_value_t = 8)]
    k_max: usize,
    #[arg(long)]
    ell: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Everything the garbler keeps after garbling.
#[derive(Serialize, Deserialize)]
struct SecretsFile {
    seed: String,
    lambda: u16,
    row_reduction: bool,
    base: RnsBase,
    /// Hex of the serialized zero-label tensors.
    input: String,
    output: String,
}

impl SecretsFile {
    fn context(&self) -> Result<GarblingContext, CliError> {
        Ok(GarblingContext::with_options(
            self.seed.as_bytes(),
            self.lambda,
            &self.base,
            self.row_reduction,
        )?)
    }

    fn secrets(&self) -> Result<ModelSecrets, CliError> {
        let tensors = |h: &str| -> Result<_, CliError> {
            let bytes = hex::decode(h).map_err(|e| CliError::invalid(format!("secrets file: {e}")))?;
            Ok(read_labels(&bytes)?)
        };
        Ok(ModelSecrets {
            input: tensors(&self.input)?,
            output: tensors(&self.output)?,
        })
    }
}

#[derive(Serialize)]
struct InferReport {
    output: Vec<i64>,
    plaintext: Vec<i64>,
    matches: bool,
    offline_bytes: u64,
    online_bytes: u64,
    transcript: String,
}

const DEFAULT_LAMBDA: u16 = 128;
const DEFAULT_ELL: u32 = 5;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rnsgc: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::RandomModel(a) => random_model(a, &cfg),
        Cmd::Quantize(a) => cmd_quantize(a, &cfg),
        Cmd::Garble(a) => cmd_garble(a, &cfg),
        Cmd::Encode(a) => cmd_encode(a, &cfg),
        Cmd::Evaluate(a) => cmd_evaluate(a, &cfg),
        Cmd::Decode(a) => cmd_decode(a, &cfg),
        Cmd::InferLocal(a) => cmd_infer_local(a, &cfg),
        Cmd::Session(a) => cmd_session(a, &cfg),
        Cmd::BenchScaling(a) => cmd_bench(a, &cfg),
        Cmd::Cost(a) => cmd_cost(a, &cfg),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    emit(out, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn output_path(flag: Option<PathBuf>, cfg: &RunConfig) -> Option<PathBuf> {
    flag.or_else(|| cfg.out.clone())
}

fn random_model(a: RandomModelArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let seed = require(a.seed.or_else(|| cfg.seed.clone()), "seed")?;
    let out = require(output_path(a.out, cfg), "out")?;
    let kinds = match a.arch {
        Arch::Toy => vec![LayerKind::conv(3, 4, 3, 1, 1), LayerKind::Relu, LayerKind::Dense { outputs: 10 }],
        Arch::F => model_f(),
        Arch::BigF => model_big_f(),
    };
    let mut rng = ChaCha20Rng::from_seed(seed_bytes(&seed));
    let model = RealModel::random(Shape::new(3, a.image, a.image), &kinds, a.amplitude, &mut rng)?;
    let blob = out.with_extension("bin");
    let name = blob
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| CliError::invalid("--out needs a file name"))?;
    fs::write(&blob, model.blob())?;
    emit_json(Some(&out), &model.manifest(Some(name)))
}

fn seed_bytes(seed: &str) -> [u8; 32] {
    Sha256::digest(seed.as_bytes()).into()
}

fn scheme_params(a: &SchemeArgs, cfg: &RunConfig) -> Result<QuantParams, CliError> {
    let base: RnsBase = require(a.base.clone().or_else(|| cfg.base.clone()), "base")?.parse()?;
    let scheme = match require(a.scheme.or(cfg.scheme), "scheme")? {
        SchemeName::Simple => Scheme::SimpleQuant {
            alpha: require(a.alpha.or(cfg.alpha), "alpha")?,
        },
        SchemeName::Scale => Scheme::ScaleQuant {
            ell: require(a.ell.or(cfg.ell), "ell")?,
        },
        SchemeName::ScalePlus => Scheme::ScaleQuantPlus {
            s: require(a.scale.or(cfg.scale), "scale")?,
        },
    };
    Ok(QuantParams::new(scheme, base)?)
}

fn cmd_quantize(a: QuantizeArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let params = scheme_params(&a.scheme, cfg)?;
    let model = RealModel::load(&a.model)?;
    let q = quantize(&model, &params)?;
    let bound = match a.input_bound.or(cfg.input_bound) {
        Some(b) => b,
        None => params.value_factor().round() as u128,
    };
    let report = check_range(&q, bound)?;
    eprintln!("{}", serde_json::to_string_pretty(&report)?);
    if !report.pass {
        return Err(CliError::invalid(format!(
            "worst-case magnitude {} exceeds the base limit {}",
            report.peak, report.limit
        )));
    }
    emit_json(output_path(a.out, cfg).as_deref(), &q)
}

fn garbler_config(p: &GarbleParams, cfg: &RunConfig) -> Result<GarblerConfig, CliError> {
    Ok(GarblerConfig {
        seed: require(p.seed.clone().or_else(|| cfg.seed.clone()), "seed")?.into_bytes(),
        lambda: p.lambda.or(cfg.lambda).unwrap_or(DEFAULT_LAMBDA),
        row_reduction: !p.no_row_reduction,
    })
}

fn cmd_garble(a: GarbleArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let q: QuantizedModel = read_json(&a.model)?;
    let gc = garbler_config(&a.params, cfg)?;
    let base = q.base();
    let mut ctx = GarblingContext::with_options(&gc.seed, gc.lambda, base, gc.row_reduction)?;
    let (gm, secrets) = garble_model(&q.network, base, &mut ctx)?;
    let file = SecretsFile {
        seed: String::from_utf8(gc.seed).expect("seed came from a string"),
        lambda: gc.lambda,
        row_reduction: gc.row_reduction,
        base: base.clone(),
        input: hex::encode(write_labels(&secrets.input)),
        output: hex::encode(write_labels(&secrets.output)),
    };
    emit_json(Some(&a.secrets), &file)?;
    emit(output_path(a.out, cfg).as_deref(), &gm.to_bytes())
}

fn cmd_encode(a: EncodeArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let file: SecretsFile = read_json(&a.secrets)?;
    let values: Vec<i64> = read_json(&a.input)?;
    let labels = encode_input(&file.context()?, &file.base, &file.secrets()?, &values)?;
    emit(output_path(a.out, cfg).as_deref(), &write_labels(&labels))
}

fn cmd_evaluate(a: EvaluateArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let gm = GarbledModel::from_bytes(&fs::read(&a.garbled)?)?;
    let inputs = read_labels(&fs::read(&a.labels)?)?;
    let out = eval_model(&gm, &inputs)?;
    emit(output_path(a.out, cfg).as_deref(), &write_labels(&out))
}

fn cmd_decode(a: DecodeArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let file: SecretsFile = read_json(&a.secrets)?;
    let labels = read_labels(&fs::read(&a.labels)?)?;
    let values = decode_output(&file.context()?, &file.base, &file.secrets()?, &labels)?;
    emit_json(output_path(a.out, cfg).as_deref(), &values)
}

fn cmd_infer_local(a: InferLocalArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let q: QuantizedModel = read_json(&a.model)?;
    let values: Vec<i64> = read_json(&a.input)?;
    let gc = garbler_config(&a.params, cfg)?;
    let plaintext = plaintext_infer(&q.network, q.base(), &values)?;
    let (mut gt, mut et) = loopback_pair();
    let (owner, eval_input) = match a.owner {
        Owner::Garbler => (InputOwner::Garbler(values), None),
        Owner::Evaluator => (InputOwner::Evaluator, Some(values)),
    };
    let (garbler, evaluator) = std::thread::scope(|s| {
        let ev = s.spawn(move || run_evaluator(&mut et, eval_input.as_deref(), &mut PlaintextOt));
        let g = run_garbler(&q.network, q.base(), &gc, &owner, &mut gt, &mut PlaintextOt);
        // dropping the garbler's end unblocks an evaluator still waiting on it
        drop(gt);
        (g, ev.join().expect("evaluator thread panicked"))
    });
    let outcome: SessionOutcome = garbler?;
    evaluator?;
    let output = outcome.output.unwrap_or_default();
    let matches = output == plaintext;
    emit_json(
        output_path(a.out, cfg).as_deref(),
        &InferReport {
            matches,
            output,
            plaintext,
            offline_bytes: outcome.offline_bytes,
            online_bytes: outcome.online_bytes,
            transcript: hex::encode(outcome.transcript),
        },
    )?;
    if !matches {
        return Err(CliError::Protocol("garbled output differs from plaintext inference".into()));
    }
    Ok(())
}

fn cmd_session(a: SessionArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let listen = a.listen.or_else(|| cfg.listen.clone());
    let connect = a.connect.or_else(|| cfg.connect.clone());
    let mut t = match (listen, connect) {
        (Some(addr), None) => TcpTransport::listen(&addr)?,
        (None, Some(addr)) => connect_with_retry(&addr)?,
        _ => return Err(CliError::invalid("give exactly one of --listen and --connect")),
    };
    let input: Option<Vec<i64>> = a.input.as_deref().map(read_json).transpose()?;
    let out = output_path(a.out, cfg);
    match a.role {
        RoleArg::Garbler => {
            let q: QuantizedModel = read_json(&require(a.model, "model")?)?;
            let gc = garbler_config(&a.params, cfg)?;
            let owner = match input {
                Some(v) => InputOwner::Garbler(v),
                None => InputOwner::Evaluator,
            };
            let outcome = run_garbler(&q.network, q.base(), &gc, &owner, &mut t, &mut PlaintextOt)?;
            emit_json(out.as_deref(), &outcome.output)
        }
        RoleArg::Evaluator => {
            let outcome = run_evaluator(&mut t, input.as_deref(), &mut PlaintextOt)?;
            eprintln!(
                "session complete: {} offline bytes, {} online bytes",
                outcome.offline_bytes, outcome.online_bytes
            );
            Ok(())
        }
    }
}

/// The peer may still be starting up; retry for about five seconds.
fn connect_with_retry(addr: &str) -> Result<TcpTransport, CliError> {
    let mut last = None;
    for _ in 0..50 {
        match TcpTransport::connect(addr) {
            Ok(t) => return Ok(t),
            Err(e) => last = Some(e),
        }
        std::thread::sleep(std::time::Duration::from_millis(100));
    }
    Err(last.expect("at least one attempt").into())
}

fn cmd_bench(a: BenchArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let seed = match a.seed.or_else(|| cfg.seed.clone()) {
        Some(s) => s
            .parse::<u64>()
            .map_err(|_| CliError::invalid("bench seed must be an unsigned integer"))?,
        None => 1,
    };
    let threads = a.threads.or_else(|| cfg.threads.clone());
    let sizes = a.input_size.or_else(|| cfg.input_size.clone());
    let (threads, sizes) = match a.sweep {
        Sweep::Threads => (threads.unwrap_or(vec![1, 2, 4, 8, 16]), sizes.unwrap_or(vec![128])),
        Sweep::Inputs => (threads.unwrap_or(vec![1]), sizes.unwrap_or((7..=14).map(|e| 1 << e).collect())),
    };
    let base_cfg = BenchConfig {
        k: a.k,
        ell: a.ell.or(cfg.ell).unwrap_or(DEFAULT_ELL),
        lambda: a.lambda.or(cfg.lambda).unwrap_or(DEFAULT_LAMBDA),
        seed,
        ..BenchConfig::default()
    };
    let mut rows = Vec::new();
    for &t in &threads {
        for &n in &sizes {
            let row = bench::run_scaling_bench(&BenchConfig {
                threads: t,
                inputs: n,
                ..base_cfg.clone()
            })?;
            eprintln!(
                "threads={t} inputs={n} fused={:.1}ms chained={:.1}ms ratio={:.2}",
                row.fused_ms, row.chained_ms, row.ratio
            );
            rows.push(row);
        }
    }
    let mut buf = Vec::new();
    bench::write_csv(&mut buf, &rows).map_err(|e| CliError::Io(e.to_string()))?;
    emit(output_path(a.out, cfg).as_deref(), &buf)
}

fn cmd_cost(a: CostArgs, cfg: &RunConfig) -> Result<(), CliError> {
    if a.k_min < 2 || a.k_min > a.k_max {
        return Err(CliError::invalid("need 2 <= k-min <= k-max"));
    }
    let reports = costing::cpm_sweep(a.k_min..=a.k_max, a.ell.or(cfg.ell).unwrap_or(DEFAULT_ELL))?;
    let mut buf = Vec::new();
    costing::write_csv(&mut buf, &reports).map_err(|e| CliError::Io(e.to_string()))?;
    emit(output_path(a.out, cfg).as_deref(), &buf)
}
