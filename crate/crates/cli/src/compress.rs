use std::path::PathBuf;

use anyhow::{bail, Context};
use ssvq_core::clustering::KMeansConfig;
use ssvq_core::ssvq::{ssvq_decode, ssvq_encode_with};
use ssvq_core::storage::{self, Container, LayerKind, QuantizedLayer};
use ssvq_core::vq::{vq_decode, vq_encode_with};
use ssvq_core::{Matrix, RngSeed};

use crate::{write_output, MethodArg};

#[derive(clap::Args)]
pub struct Args {
    /// Weights file ("SSVW" header, per-matrix dims, f32 payload).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Also store one byte per index for the hardware decode path.
    #[arg(long)]
    aligned: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
pub struct SynthArgs {
    /// Comma-separated ROWSxCOLS list, e.g. 256x256,64x128.
    #[arg(long, value_delimiter = ',', required = true)]
    shapes: Vec<String>,
    #[arg(long, default_value_t = 0.02)]
    std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_shape(s: &str) -> anyhow::Result<(usize, usize)> {
    let (r, c) = s
        .split_once('x')
        .with_context(|| format!("shape {s:?} is not ROWSxCOLS"))?;
    Ok((r.trim().parse()?, c.trim().parse()?))
}

pub fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut rng = RngSeed(a.seed).derive("weights").rng();
    let mut mats = Vec::new();
    for s in &a.shapes {
        let (r, c) = parse_shape(s)?;
        if r == 0 || c == 0 {
            bail!("shape {s:?} has a zero dimension");
        }
        mats.push(Matrix::random_normal(r, c, a.std, &mut rng));
    }
    write_output(&a.out, &storage::write_weights(&mats))
}

pub fn run(a: Args) -> anyhow::Result<()> {
    let bytes = std::fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mats = storage::read_weights(&bytes).with_context(|| format!("parsing {}", a.input.display()))?;
    if mats.is_empty() {
        bail!("{} holds no matrices", a.input.display());
    }
    let cfg = KMeansConfig {
        max_iters: a.max_iters,
        ..KMeansConfig::new(a.k)
    };
    let root = RngSeed(a.seed).derive("clustering");
    let mut layers = Vec::new();
    let mut shapes = Vec::new();
    println!("layer,rows,cols,method,k,d,cr,mse");
    for (i, w) in mats.iter().enumerate() {
        let seed = root.derive(&format!("layer{i}"));
        let (layer, decoded) = match a.method {
            MethodArg::Vq => {
                let m = vq_encode_with(w, &cfg, a.d, seed)?;
                (QuantizedLayer::from_vq(&m, a.aligned)?, vq_decode(&m)?)
            }
            MethodArg::Ssvq => {
                let m = ssvq_encode_with(w, &cfg, a.d, a.alpha, seed)?;
                (QuantizedLayer::from_ssvq(&m, a.aligned)?, ssvq_decode(&m)?)
            }
        };
        let (r, c) = w.shape();
        let cr = match a.method {
            MethodArg::Vq => storage::cr_vq(r, c, a.d, a.k, 32.0, 8.0)?,
            MethodArg::Ssvq => storage::cr_ssvq(r, c, a.d, a.k, 32.0, 8.0)?,
        };
        let mse = w.mse(&decoded)?;
        println!("{i},{r},{c},{},{},{},{cr},{mse}", method_name(a.method), a.k, a.d);
        shapes.push((r, c));
        layers.push(layer);
    }
    let kind = match a.method {
        MethodArg::Vq => LayerKind::Vq,
        MethodArg::Ssvq => LayerKind::Ssvq,
    };
    let total = storage::aggregate_cr(&shapes, kind, a.d, a.k, 32, 8)?;
    println!("total,,,{},{},{},{total},", method_name(a.method), a.k, a.d);
    let (bytes, stats) = storage::serialize(&Container { layers })?;
    log::info!(
        "payload {} bits, headers {} bits, padding {} bits",
        stats.payload_bits,
        stats.header_bits,
        stats.padding_bits
    );
    write_output(&a.out, &bytes)
}

pub fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Vq => "vq",
        MethodArg::Ssvq => "ssvq",
    }
}
