use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use crate::train::Summary;
use crate::write_output;

#[derive(clap::Args)]
pub struct Args {
    /// Directories searched recursively for summary.json files.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Also write the table to this CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn collect(dir: &Path, found: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    for e in entries {
        let path = e?.path();
        if path.is_dir() {
            collect(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == "summary.json") {
            found.push(path);
        }
    }
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row per (method, k, d). `delta` is the mean accuracy minus that of
/// the first VQ row (or the first row when there is no VQ run).
pub fn table(summaries: &[Summary]) -> String {
    let mut groups: BTreeMap<(String, usize, usize), Vec<&Summary>> = BTreeMap::new();
    for s in summaries {
        groups.entry((s.method.clone(), s.k, s.d)).or_default().push(s);
    }
    let rows: Vec<_> = groups
        .iter()
        .map(|((method, k, d), runs)| {
            let accs: Vec<f64> = runs.iter().map(|r| r.final_val_acc).collect();
            let (mean, std) = mean_std(&accs);
            (method.as_str(), *k, *d, runs[0].cr, runs.len(), mean, std)
        })
        .collect();
    let base = rows.iter().find(|r| r.0 == "vq").unwrap_or(&rows[0]).5;
    let mut out = String::from("method,k,d,cr,runs,mean_acc,std_acc,delta\n");
    for (method, k, d, cr, n, mean, std) in &rows {
        writeln!(
            out,
            "{method},{k},{d},{cr:.4},{n},{mean:.6},{std:.6},{:.6}",
            mean - base
        )
        .unwrap();
    }
    out
}

pub fn run(a: Args) -> anyhow::Result<()> {
    let mut files = Vec::new();
    for d in &a.dirs {
        collect(d, &mut files)?;
    }
    files.sort();
    if files.is_empty() {
        bail!("no summary.json found under {:?}", a.dirs);
    }
    let mut summaries = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f)?;
        summaries.push(serde_json::from_str::<Summary>(&text).with_context(|| format!("parsing {}", f.display()))?);
    }
    let t = table(&summaries);
    print!("{t}");
    if let Some(out) = &a.out {
        write_output(out, t.as_bytes())?;
    }
    Ok(())
}
