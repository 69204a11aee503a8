use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::Serialize;
use ssvq_core::hwsim::{
    simulate_layer, speedup_report, CycleStats, LayerSpec, Preset, SimConfig, SpeedupRow, WeightFormat,
};
use ssvq_core::storage::{self, LayerKind};

use crate::write_output;

#[derive(clap::Args)]
pub struct Args {
    /// Accelerator parameters as TOML; defaults apply to missing keys.
    #[arg(long)]
    sim_config: Option<PathBuf>,
    /// Layer list as TOML. Without this or --model the DeiT-tiny preset is used.
    #[arg(long, conflicts_with = "model")]
    layers: Option<PathBuf>,
    /// Simulate the SSVQ layers of a .ssvq container instead of a preset.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Rows of activations fed to each container layer.
    #[arg(long, default_value_t = 197)]
    tokens: u64,
    /// Write per-layer records as JSON lines.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record<'a> {
    Layer { format: &'a str, stats: &'a CycleStats },
    Speedup(&'a SpeedupRow),
}

pub fn run(a: Args) -> anyhow::Result<()> {
    let cfg = match &a.sim_config {
        Some(p) => {
            SimConfig::from_toml(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
        }
        None => SimConfig::default(),
    };

    let (baseline, ssvq) = if let Some(path) = &a.model {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let container = storage::deserialize(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        let mut b = Vec::new();
        let mut s = Vec::new();
        for (i, layer) in container.layers.iter().enumerate() {
            if layer.kind != LayerKind::Ssvq {
                log::warn!("layer {i} is not SSVQ; skipped");
                continue;
            }
            let (spec, fmt) = LayerSpec::from_quantized(&format!("layer{i}"), layer, a.tokens);
            b.push(simulate_layer(&spec, WeightFormat::Int8, &cfg)?);
            s.push(simulate_layer(&spec, fmt, &cfg)?);
        }
        if b.is_empty() {
            bail!("{} has no SSVQ layers", path.display());
        }
        (b, s)
    } else {
        let preset = match &a.layers {
            Some(p) => {
                Preset::from_toml(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
            }
            None => Preset::deit_tiny(),
        };
        (
            preset.simulate(WeightFormat::Int8, &cfg)?,
            preset.simulate(cfg.ssvq_format(), &cfg)?,
        )
    };

    let report = speedup_report(&baseline, &ssvq, &cfg)?;
    println!("layer,int8_cycles,ssvq_cycles,speedup,int8_weight_bits,ssvq_weight_bits,traffic_ratio");
    for r in report.rows.iter().chain(std::iter::once(&report.total)) {
        println!(
            "{},{},{},{:.4},{},{},{:.4}",
            r.name,
            r.baseline_cycles,
            r.ssvq_cycles,
            r.speedup,
            r.baseline_weight_bits,
            r.ssvq_weight_bits,
            r.traffic_ratio
        );
    }

    if let Some(out) = &a.out {
        let mut buf = Vec::new();
        for (b, s) in baseline.iter().zip(&ssvq) {
            for rec in [
                Record::Layer {
                    format: "int8",
                    stats: b,
                },
                Record::Layer {
                    format: "ssvq",
                    stats: s,
                },
            ] {
                serde_json::to_writer(&mut buf, &rec)?;
                buf.write_all(b"\n")?;
            }
        }
        for r in report.rows.iter().chain(std::iter::once(&report.total)) {
            serde_json::to_writer(&mut buf, &Record::Speedup(r))?;
            buf.write_all(b"\n")?;
        }
        write_output(out, &buf)?;
    }
    Ok(())
}
