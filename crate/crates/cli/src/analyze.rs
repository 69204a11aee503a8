use std::path::PathBuf;

use anyhow::{bail, Context};
use rand::seq::index::sample;
use ssvq_core::ssvq::sign;
use ssvq_core::train::{forward_backward, Method};
use ssvq_core::vq::{gradient_dominance_report, Subset};
use ssvq_core::{Matrix, RngSeed};

use crate::train::SavedRun;

#[derive(clap::Args)]
pub struct Args {
    /// checkpoint.json written by `ssvq train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1])]
    top: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5])]
    bottom: Vec<f64>,
    /// Training samples used for the gradient.
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run(a: Args) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let saved: SavedRun = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.checkpoint.display()))?;
    let data = saved.task.generate()?;
    let n = a.batch_size.min(data.train.len());
    if n == 0 {
        bail!("batch size must be positive");
    }
    let mut rng = RngSeed(a.seed).derive("analyze").rng();
    let idx = sample(&mut rng, data.train.len(), n).into_vec();
    let batch = data.train.gather(&idx);
    let ck = &saved.checkpoint;
    let (_, grads) = forward_backward(&ck.net, batch.batch())?;

    let reports = match ck.method {
        Method::Dense => bail!("checkpoint holds a dense model; nothing to analyze"),
        Method::Vq => ck
            .vq_models
            .iter()
            .enumerate()
            .map(|(i, m)| gradient_dominance_report(&grads.weights[i], m, &a.top, &a.bottom))
            .collect::<Result<Vec<_>, _>>()?,
        // Member contributions to a magnitude codeword carry the sign factor.
        Method::Ssvq => ck
            .ssvq_models
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let g = &grads.weights[i];
                let signed: Vec<f64> = g.as_slice().iter().zip(&m.latent).map(|(g, l)| g * sign(*l)).collect();
                let g = Matrix::new(g.rows(), g.cols(), signed)?;
                gradient_dominance_report(&g, &m.magnitude_model(), &a.top, &a.bottom)
            })
            .collect::<Result<Vec<_>, _>>()?,
    };

    println!("layer,subset,fraction,mean_cosine,codewords");
    for (i, r) in reports.iter().enumerate() {
        for row in &r.rows {
            let subset = match row.subset {
                Subset::Top => "top",
                Subset::Bottom => "bottom",
            };
            let mean = row.mean.map_or_else(String::new, |m| format!("{m:.4}"));
            println!("{i},{subset},{},{mean},{}", row.fraction, row.counted);
        }
    }
    Ok(())
}
