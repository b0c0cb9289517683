//! Timing of fused versus chained scaling.
//!
//! The fused gadget divides by `2^l` once on the CPM base whose 2 is replaced
//! by `2^l`; the chained variant halves `l` times on the plain CPM base.
//! Garbling happens chunk by chunk outside the timed region; only
//! evaluation is timed.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::costing::power_of_two_cpm;
use crate::gadgets::{GadgetSpec, GarbledGadget};
use crate::garble::{GarbleError, GarblingContext, Label, WireSecrets};
use crate::rns::RnsBase;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub k: usize,
    pub ell: u32,
    pub lambda: u16,
    pub threads: usize,
    pub inputs: usize,
    /// Gadgets garbled and held in memory at a time.
    pub chunk: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            k: 8,
            ell: 5,
            lambda: 128,
            threads: 1,
            inputs: 128,
            chunk: 1024,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub threads: usize,
    pub inputs: usize,
    pub fused_ms: f64,
    pub chained_ms: f64,
    pub ratio: f64,
}

struct Prepared {
    gadgets: Vec<GarbledGadget>,
    labels: Vec<Vec<Label>>,
    first: u64,
}

fn prepare(
    ctx: &mut GarblingContext,
    spec: &GadgetSpec,
    base: &RnsBase,
    count: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Prepared, GarbleError> {
    let first = ctx.alloc_instances(count as u64);
    let values: Vec<u128> = (0..count).map(|_| rng.gen_range(0..base.product())).collect();
    let ctx: &GarblingContext = ctx;
    let pairs: Vec<(GarbledGadget, Vec<Label>)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let id = first + i as u64;
            let wires: Vec<WireSecrets> = base
                .moduli()
                .iter()
                .enumerate()
                .map(|(j, &p)| WireSecrets {
                    zero: ctx.input_zero_label(id << 8 | j as u64, p),
                })
                .collect();
            let labels = wires
                .iter()
                .map(|w| ctx.encode(w, (values[i] % w.zero.modulus() as u128) as u32))
                .collect::<Result<Vec<_>, _>>()?;
            let (g, _) = spec.garble(ctx, id, &wires)?;
            Ok((g, labels))
        })
        .collect::<Result<_, GarbleError>>()?;
    let (gadgets, labels) = pairs.into_iter().unzip();
    Ok(Prepared { gadgets, labels, first })
}

fn time_eval(spec: &GadgetSpec, ctx: &GarblingContext, p: &Prepared) -> Result<Duration, GarbleError> {
    let start = Instant::now();
    p.gadgets
        .par_iter()
        .zip(&p.labels)
        .enumerate()
        .try_for_each(|(i, (g, l))| spec.evaluate(ctx.public(), p.first + i as u64, g, l).map(drop))?;
    Ok(start.elapsed())
}

fn run_variant(cfg: &BenchConfig, base: &RnsBase, spec: &GadgetSpec, tag: u8) -> Result<Duration, GarbleError> {
    let mut ctx = GarblingContext::new(&[b"bench".as_slice(), &cfg.seed.to_le_bytes(), &[tag]].concat(), cfg.lambda, base)?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ tag as u64);
    let mut total = Duration::ZERO;
    let mut left = cfg.inputs;
    while left > 0 {
        let n = left.min(cfg.chunk.max(1));
        let prepared = prepare(&mut ctx, spec, base, n, &mut rng)?;
        total += time_eval(spec, &ctx, &prepared)?;
        left -= n;
    }
    Ok(total)
}

/// Times evaluation of `cfg.inputs` fused and chained scaling gadgets.
pub fn run_scaling_bench(cfg: &BenchConfig) -> Result<BenchRow, GarbleError> {
    let invalid = |e: crate::rns::RnsError| GarbleError::InvalidParameter(e.to_string());
    let fused_base = power_of_two_cpm(cfg.k, cfg.ell).map_err(invalid)?;
    let chained_base = RnsBase::cpm(cfg.k).map_err(invalid)?;
    let fused = GadgetSpec::scaling(&fused_base, 1 << cfg.ell).map_err(invalid)?;
    let chained = GadgetSpec::chained_scaling(&chained_base, 2, cfg.ell).map_err(invalid)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build()
        .map_err(|e| GarbleError::InvalidParameter(e.to_string()))?;
    pool.install(|| {
        let f = run_variant(cfg, &fused_base, &fused, 1)?;
        let c = run_variant(cfg, &chained_base, &chained, 2)?;
        let (fused_ms, chained_ms) = (f.as_secs_f64() * 1e3, c.as_secs_f64() * 1e3);
        Ok(BenchRow {
            threads: cfg.threads,
            inputs: cfg.inputs,
            fused_ms,
            chained_ms,
            ratio: if fused_ms > 0.0 { chained_ms / fused_ms } else { f64::INFINITY },
        })
    })
}

pub fn write_csv<W: std::io::Write>(out: W, rows: &[BenchRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
