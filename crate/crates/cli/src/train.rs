use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use ssvq_core::freeze::{FreezeCriterion, TieRule};
use ssvq_core::storage::{aggregate_cr, LayerKind};
use ssvq_core::train::compare::{finetune_config, pretrain, ExperimentConfig};
use ssvq_core::train::{qat_train_ssvq, qat_train_vq, Checkpoint, QuantSpec, SyntheticTask, TaskData, TrainRun};

use crate::compress::method_name;
use crate::MethodArg;

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum CriterionArg {
    MajorityVote,
    SignEma,
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Codebook size; defaults to 64 for vq and 16 for ssvq.
    #[arg(long)]
    k: Option<usize>,
    /// Subvector length; defaults to 4 for vq and 8 for ssvq.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seeds; runs execute in parallel.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Fine-tuning steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    pretrain_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_signs: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    freeze_interval: Option<usize>,
    #[arg(long)]
    freeze_momentum: Option<f64>,
    #[arg(long)]
    threshold_start: Option<f64>,
    #[arg(long)]
    threshold_end: Option<f64>,
    #[arg(long)]
    no_freeze: bool,
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    /// Break vote ties toward the negative sign instead of keeping the current one.
    #[arg(long)]
    strict_paper_freeze: bool,
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Per-run summary, read back by `ssvq report`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub seed: u64,
    pub k: usize,
    pub d: usize,
    pub alpha: f64,
    pub cr: f64,
    pub steps: usize,
    pub dense_val_acc: f64,
    pub initial_val_acc: f64,
    pub final_val_acc: f64,
    pub frozen_count: usize,
}

/// Final model state plus the task it was trained on.
#[derive(Serialize, Deserialize)]
pub struct SavedRun {
    pub task: SyntheticTask,
    pub hidden: Vec<usize>,
    pub checkpoint: Checkpoint,
}

fn build_config(a: &Args) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    let quant = match a.method {
        MethodArg::Vq => &mut cfg.vq,
        MethodArg::Ssvq => &mut cfg.ssvq,
    };
    if let Some(k) = a.k {
        quant.k = k;
    }
    if let Some(d) = a.d {
        quant.d = d;
    }
    if let Some(alpha) = a.alpha {
        quant.alpha = alpha;
    }
    let ft = &mut cfg.finetune;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(ft.steps, a.steps);
    set!(ft.batch_size, a.batch_size);
    set!(ft.lr, a.lr);
    set!(ft.lr_signs, a.lr_signs);
    set!(ft.weight_decay, a.weight_decay);
    set!(cfg.pretrain.steps, a.pretrain_steps);
    let fz = &mut cfg.freeze;
    set!(fz.interval, a.freeze_interval);
    set!(fz.momentum, a.freeze_momentum);
    set!(fz.threshold_start, a.threshold_start);
    set!(fz.threshold_end, a.threshold_end);
    if a.no_freeze {
        fz.enabled = false;
    }
    if let Some(c) = a.criterion {
        fz.criterion = match c {
            CriterionArg::MajorityVote => FreezeCriterion::MajorityVote,
            CriterionArg::SignEma => FreezeCriterion::SignEma,
        };
    }
    if a.strict_paper_freeze {
        fz.tie_rule = TieRule::Negative;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn run_one(cfg: &ExperimentConfig, data: &TaskData, method: MethodArg, seed: u64) -> anyhow::Result<(TrainRun, f64)> {
    let dense = pretrain(cfg, data, seed)?;
    log::info!("seed {seed}: dense accuracy {:.4}", dense.final_val_acc);
    let ft = finetune_config(cfg, seed);
    let run = match method {
        MethodArg::Vq => qat_train_vq(&dense.net, data, &cfg.vq, &ft)?,
        MethodArg::Ssvq => qat_train_ssvq(&dense.net, data, &cfg.ssvq, &ft, &cfg.freeze)?,
    };
    Ok((run, dense.final_val_acc))
}

pub fn run(a: Args) -> anyhow::Result<()> {
    let cfg = build_config(&a)?;
    let seeds = if !a.seeds.is_empty() {
        a.seeds.clone()
    } else {
        vec![a.seed.unwrap_or(0)]
    };
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() {
        bail!("duplicate seeds in {seeds:?}");
    }
    let (quant, kind): (QuantSpec, LayerKind) = match a.method {
        MethodArg::Vq => (cfg.vq, LayerKind::Vq),
        MethodArg::Ssvq => (cfg.ssvq, LayerKind::Ssvq),
    };
    let dims = cfg.dims();
    let shapes: Vec<(usize, usize)> = dims.windows(2).take(dims.len() - 2).map(|w| (w[1], w[0])).collect();
    let cr = aggregate_cr(&shapes, kind, quant.d, quant.k, 32, 8)?;
    let data = cfg.task.generate()?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let results: Vec<anyhow::Result<Summary>> = seeds
        .par_iter()
        .map(|&seed| {
            let (run, dense_acc) = run_one(&cfg, &data, a.method, seed)?;
            let dir = a.out.join(format!("seed-{seed}"));
            std::fs::create_dir_all(&dir)?;
            write_jsonl(&dir.join("trace.jsonl"), &run.trace)?;
            write_jsonl(&dir.join("freeze.jsonl"), &run.freeze_log)?;
            let summary = Summary {
                method: method_name(a.method).to_string(),
                seed,
                k: quant.k,
                d: quant.d,
                alpha: quant.alpha,
                cr,
                steps: cfg.finetune.steps,
                dense_val_acc: dense_acc,
                initial_val_acc: run.initial_val_acc,
                final_val_acc: run.final_val_acc,
                frozen_count: run.trace.last().map_or(0, |r| r.frozen_count),
            };
            std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
            let saved = SavedRun {
                task: cfg.task.clone(),
                hidden: cfg.hidden.clone(),
                checkpoint: run.checkpoint,
            };
            std::fs::write(dir.join("checkpoint.json"), serde_json::to_string(&saved)?)?;
            Ok(summary)
        })
        .collect();

    println!("seed,method,k,d,cr,dense_acc,final_acc,frozen");
    for r in results {
        let s = r?;
        println!(
            "{},{},{},{},{:.4},{:.4},{:.4},{}",
            s.seed, s.method, s.k, s.d, s.cr, s.dense_val_acc, s.final_val_acc, s.frozen_count
        );
    }
    Ok(())
}
