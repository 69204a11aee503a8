//! Tile-level timing model of a weight-streaming accelerator with an SSVQ
//! decode stage between DRAM and the weight buffer.
//!
//! Each GEMM `out[m x n] = in[m x k] * W[k x n]` is split along `n` into tiles
//! of at most `tile_weight_bytes` decoded int8 weights, never more than half
//! the weight buffer. Loads of tile
//! `i + 1` overlap compute of tile `i`, so
//! `total = prologue + load_0 + sum_i max(load_{i+1}, compute_i)`.
//! DRAM is a constant-bandwidth stream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::storage::{LayerKind as StoredKind, QuantizedLayer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dram_bits_per_cycle: u64,
    pub act_buffer_bytes: u64,
    pub weight_buffer_bytes: u64,
    pub pes: u64,
    pub lanes_per_pe: u64,
    pub multipliers_per_lane: u64,
    /// Decoded weights produced per cycle by the decode stage.
    pub decode_words_per_cycle: u64,
    /// Fixed pipeline latency of the decode stage, paid once per tile.
    pub decode_latency: u64,
    /// Decoded weight bytes per streamed tile, capped at half the weight buffer.
    pub tile_weight_bytes: u64,
    pub codebook_k: usize,
    pub codebook_d: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dram_bits_per_cycle: 128,
            act_buffer_bytes: 512 * 1024,
            weight_buffer_bytes: 512 * 1024,
            pes: 64,
            lanes_per_pe: 16,
            multipliers_per_lane: 16,
            decode_words_per_cycle: 128,
            decode_latency: 4,
            tile_weight_bytes: 8 * 1024,
            codebook_k: 256,
            codebook_d: 8,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("dram_bits_per_cycle", self.dram_bits_per_cycle),
            ("act_buffer_bytes", self.act_buffer_bytes),
            ("weight_buffer_bytes", self.weight_buffer_bytes),
            ("pes", self.pes),
            ("lanes_per_pe", self.lanes_per_pe),
            ("multipliers_per_lane", self.multipliers_per_lane),
            ("decode_words_per_cycle", self.decode_words_per_cycle),
            ("tile_weight_bytes", self.tile_weight_bytes),
            ("codebook_k", self.codebook_k as u64),
            ("codebook_d", self.codebook_d as u64),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        Ok(())
    }

    pub fn macs_per_cycle(&self) -> u64 {
        self.pes * self.lanes_per_pe * self.multipliers_per_lane
    }

    /// Format the decode path is built for.
    pub fn ssvq_format(&self) -> WeightFormat {
        WeightFormat::Ssvq {
            k: self.codebook_k,
            d: self.codebook_d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    Matmul,
    AttentionProj,
    Ffn,
    /// Activation-by-activation product; both operands already on chip.
    Attention,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum WeightFormat {
    Int8,
    /// Byte-aligned indices, 1-bit sign mask, 8-bit magnitude codebook.
    Ssvq {
        k: usize,
        d: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    pub kind: OpKind,
    pub m: u64,
    pub k: u64,
    pub n: u64,
    /// Independent copies of the op (e.g. attention heads).
    #[serde(default = "one")]
    pub count: u64,
    /// Whether the `k x n` operand streams from DRAM.
    #[serde(default = "yes")]
    pub weights_in_dram: bool,
    /// Whether the `m x k` input must first be fetched from DRAM.
    #[serde(default)]
    pub input_in_dram: bool,
}

fn one() -> u64 {
    1
}

fn yes() -> bool {
    true
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.n == 0 || self.count == 0 {
            return Err(Error::InvalidShape(format!(
                "layer {}: dims must be positive",
                self.name
            )));
        }
        Ok(())
    }

    pub fn weights(&self) -> u64 {
        self.k * self.n
    }

    pub fn macs(&self) -> u64 {
        self.m * self.k * self.n * self.count
    }

    /// Layer that applies a stored matrix (`rows` outputs, `cols` inputs) to `m` tokens.
    pub fn from_quantized(name: &str, layer: &QuantizedLayer, m: u64) -> (Self, WeightFormat) {
        let spec = LayerSpec {
            name: name.to_string(),
            kind: OpKind::Matmul,
            m,
            k: layer.cols as u64,
            n: layer.rows as u64,
            count: 1,
            weights_in_dram: true,
            input_in_dram: false,
        };
        let fmt = match layer.kind {
            StoredKind::Ssvq => WeightFormat::Ssvq {
                k: layer.k,
                d: layer.dim,
            },
            StoredKind::Vq => WeightFormat::Int8,
        };
        (spec, fmt)
    }
}

/// Bits streamed from DRAM for the first `w` weights of a layer (row-major
/// over output channels), codebook excluded.
fn streamed_bits(fmt: WeightFormat, w: u64) -> u64 {
    match fmt {
        WeightFormat::Int8 => 8 * w,
        WeightFormat::Ssvq { d, .. } => 8 * w.div_ceil(d as u64) + 8 * w.div_ceil(8),
    }
}

fn codebook_bits(fmt: WeightFormat) -> u64 {
    match fmt {
        WeightFormat::Int8 => 0,
        WeightFormat::Ssvq { k, d } => 8 * (k * d) as u64,
    }
}

/// DRAM bits for all weights of one `rows x cols` matrix in `fmt`, matching
/// the byte-aligned container sections (codebook, index bytes, sign mask).
pub fn weight_traffic_bits(fmt: WeightFormat, weights: u64) -> u64 {
    codebook_bits(fmt) + streamed_bits(fmt, weights)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub name: String,
    pub total_cycles: u64,
    pub weight_load_cycles: u64,
    pub act_load_cycles: u64,
    pub compute_cycles: u64,
    pub decode_cycles: u64,
    pub dram_bits: u64,
    pub weight_dram_bits: u64,
    pub macs: u64,
    pub tiles: u64,
    pub mac_utilization: f64,
}

impl CycleStats {
    fn finish(mut self, cfg: &SimConfig) -> Self {
        self.mac_utilization = if self.total_cycles == 0 {
            0.0
        } else {
            self.macs as f64 / (self.total_cycles as f64 * cfg.macs_per_cycle() as f64)
        };
        self
    }

    /// Sums per-layer stats into one record.
    pub fn sum(name: &str, parts: &[CycleStats], cfg: &SimConfig) -> CycleStats {
        let mut s = CycleStats {
            name: name.to_string(),
            ..CycleStats::default()
        };
        for p in parts {
            s.total_cycles += p.total_cycles;
            s.weight_load_cycles += p.weight_load_cycles;
            s.act_load_cycles += p.act_load_cycles;
            s.compute_cycles += p.compute_cycles;
            s.decode_cycles += p.decode_cycles;
            s.dram_bits += p.dram_bits;
            s.weight_dram_bits += p.weight_dram_bits;
            s.macs += p.macs;
            s.tiles += p.tiles;
        }
        s.finish(cfg)
    }
}

/// Simulates one layer (all `count` copies run back to back).
pub fn simulate_layer(layer: &LayerSpec, fmt: WeightFormat, cfg: &SimConfig) -> Result<CycleStats> {
    layer.validate()?;
    cfg.validate()?;
    let act_bytes = layer.m * layer.k + layer.m * layer.n;
    if act_bytes > cfg.act_buffer_bytes {
        return Err(Error::BufferOverflow {
            bytes: act_bytes,
            capacity: cfg.act_buffer_bytes,
        });
    }
    // Decoded weights are int8 in the buffer; half is reserved for the next tile.
    let half = cfg.weight_buffer_bytes / 2;
    if layer.k > half {
        return Err(Error::BufferOverflow {
            bytes: layer.k,
            capacity: half,
        });
    }
    let bw = cfg.dram_bits_per_cycle;
    let mpc = cfg.macs_per_cycle();
    let mut stats = CycleStats {
        name: layer.name.clone(),
        macs: layer.macs(),
        ..CycleStats::default()
    };

    let mut prologue = 0;
    if layer.input_in_dram {
        stats.act_load_cycles = (layer.m * layer.k * 8).div_ceil(bw);
        stats.dram_bits += layer.m * layer.k * 8;
        prologue += stats.act_load_cycles;
    }

    for _ in 0..layer.count {
        if !layer.weights_in_dram {
            let c = layer.macs().div_ceil(layer.count).div_ceil(mpc);
            stats.compute_cycles += c;
            stats.total_cycles += c;
            stats.tiles += 1;
            continue;
        }
        let cb = codebook_bits(fmt);
        let cb_cycles = cb.div_ceil(bw);
        prologue += cb_cycles;
        stats.weight_load_cycles += cb_cycles;
        stats.weight_dram_bits += cb;

        let cols_per_tile = (half.min(cfg.tile_weight_bytes) / layer.k).clamp(1, layer.n);
        let mut loads = Vec::new();
        let mut computes = Vec::new();
        let mut done = 0;
        while done < layer.n {
            let cols = cols_per_tile.min(layer.n - done);
            let (w0, w1) = (done * layer.k, (done + cols) * layer.k);
            let bits = streamed_bits(fmt, w1) - streamed_bits(fmt, w0);
            let dram = bits.div_ceil(bw);
            let load = match fmt {
                WeightFormat::Int8 => dram,
                WeightFormat::Ssvq { .. } => {
                    let dec = (w1 - w0).div_ceil(cfg.decode_words_per_cycle);
                    stats.decode_cycles += dec;
                    dram.max(dec) + cfg.decode_latency
                }
            };
            stats.weight_load_cycles += dram;
            stats.weight_dram_bits += bits;
            loads.push(load);
            computes.push((layer.m * layer.k * cols).div_ceil(mpc));
            done += cols;
        }
        stats.tiles += loads.len() as u64;
        stats.compute_cycles += computes.iter().sum::<u64>();
        let mut t = loads[0];
        for i in 0..computes.len() {
            let next = loads.get(i + 1).copied().unwrap_or(0);
            t += next.max(computes[i]);
        }
        stats.total_cycles += t;
    }
    stats.total_cycles += prologue;
    stats.dram_bits += stats.weight_dram_bits;
    Ok(stats.finish(cfg))
}

/// Layer list loadable from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl Preset {
    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if p.layers.is_empty() {
            return Err(Error::EmptyModel);
        }
        for l in &p.layers {
            l.validate()?;
        }
        Ok(p)
    }

    /// First two DeiT-tiny encoder layers, the first including the patch embedding.
    pub fn deit_tiny() -> Self {
        Self::from_toml(DEIT_TINY_TOML).expect("bundled preset parses")
    }

    pub fn simulate(&self, fmt: WeightFormat, cfg: &SimConfig) -> Result<Vec<CycleStats>> {
        self.layers.iter().map(|l| simulate_layer(l, fmt, cfg)).collect()
    }
}

pub const DEIT_TINY_TOML: &str = include_str!("../presets/deit_tiny.toml");

/// Int8 vs SSVQ comparison for one layer or a total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub name: String,
    pub baseline_cycles: u64,
    pub ssvq_cycles: u64,
    pub speedup: f64,
    pub baseline_weight_bits: u64,
    pub ssvq_weight_bits: u64,
    /// Baseline over SSVQ weight traffic; 1 when neither moves weights.
    pub traffic_ratio: f64,
    pub utilization_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub rows: Vec<SpeedupRow>,
    pub total: SpeedupRow,
}

fn ratio(a: u64, b: u64) -> f64 {
    if a == b {
        1.0
    } else {
        a as f64 / b as f64
    }
}

fn row(b: &CycleStats, s: &CycleStats) -> SpeedupRow {
    SpeedupRow {
        name: b.name.clone(),
        baseline_cycles: b.total_cycles,
        ssvq_cycles: s.total_cycles,
        speedup: ratio(b.total_cycles, s.total_cycles),
        baseline_weight_bits: b.weight_dram_bits,
        ssvq_weight_bits: s.weight_dram_bits,
        traffic_ratio: ratio(b.weight_dram_bits, s.weight_dram_bits),
        utilization_delta: s.mac_utilization - b.mac_utilization,
    }
}

pub fn speedup_report(baseline: &[CycleStats], ssvq: &[CycleStats], cfg: &SimConfig) -> Result<SpeedupReport> {
    if baseline.len() != ssvq.len() || baseline.is_empty() {
        return Err(Error::MismatchedSpecs(format!(
            "{} baseline layers vs {} ssvq layers",
            baseline.len(),
            ssvq.len()
        )));
    }
    for (b, s) in baseline.iter().zip(ssvq) {
        if b.name != s.name || b.macs != s.macs {
            return Err(Error::MismatchedSpecs(format!("layer {} vs {}", b.name, s.name)));
        }
    }
    let rows = baseline.iter().zip(ssvq).map(|(b, s)| row(b, s)).collect();
    let total = row(
        &CycleStats::sum("total", baseline, cfg),
        &CycleStats::sum("total", ssvq, cfg),
    );
    Ok(SpeedupReport { rows, total })
}

/// Rebuilds int8 weight words from byte-aligned SSVQ sections: the codeword
/// byte where the mask bit is 1, its two's-complement negation where it is 0.
/// `mask` is packed MSB first.
pub fn decode_weight_stream(codebook: &[u8], d: usize, assignments: &[u8], mask: &[u8]) -> Result<Vec<u8>> {
    if d == 0 || codebook.len() % d != 0 {
        return Err(Error::InvalidShape(format!(
            "codebook of {} bytes with d={d}",
            codebook.len()
        )));
    }
    if let Some(&b) = codebook.iter().find(|b| **b > 127) {
        return Err(Error::OutOfRange {
            value: f64::from(b),
            lo: 0.0,
            hi: 127.0,
        });
    }
    let k = codebook.len() / d;
    let len = assignments.len() * d;
    if mask.len() * 8 < len {
        return Err(Error::TruncatedStream {
            needed: len.div_ceil(8) - mask.len(),
        });
    }
    let mut out = Vec::with_capacity(len);
    for (n, &a) in assignments.iter().enumerate() {
        let a = a as usize;
        if a >= k {
            return Err(Error::IndexOutOfRange { index: a, bound: k });
        }
        for j in 0..d {
            let pos = n * d + j;
            let byte = codebook[a * d + j];
            let positive = (mask[pos / 8] >> (7 - pos % 8)) & 1 == 1;
            out.push(if positive { byte } else { byte.wrapping_neg() });
        }
    }
    Ok(out)
}

/// Byte-aligned sections of a stored SSVQ layer, as the decode stage reads them.
pub fn aligned_sections(layer: &QuantizedLayer) -> Result<(Vec<u8>, Vec<u8>)> {
    if layer.kind != StoredKind::Ssvq {
        return Err(Error::MismatchedSpecs("decode path reads SSVQ layers only".into()));
    }
    let idx = layer
        .assignments
        .iter()
        .map(|&a| u8::try_from(a).map_err(|_| Error::UnsupportedK(layer.k)))
        .collect::<Result<Vec<u8>>>()?;
    let mut mask = vec![0u8; layer.signs.len().div_ceil(8)];
    for (i, &s) in layer.signs.iter().enumerate() {
        if s {
            mask[i / 8] |= 0x80 >> (i % 8);
        }
    }
    Ok((idx, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ffn(m: u64) -> LayerSpec {
        LayerSpec {
            name: "fc".into(),
            kind: OpKind::Ffn,
            m,
            k: 192,
            n: 768,
            count: 1,
            weights_in_dram: true,
            input_in_dram: false,
        }
    }

    #[test]
    fn decode_negates_with_zero_mask() {
        assert_eq!(decode_weight_stream(&[0x05], 1, &[0], &[0x00]).unwrap(), vec![0xFB]);
        assert_eq!(decode_weight_stream(&[0x05], 1, &[0], &[0x80]).unwrap(), vec![0x05]);
        assert_eq!(decode_weight_stream(&[0x00], 1, &[0], &[0x00]).unwrap(), vec![0x00]);
    }

    #[test]
    fn all_positive_mask_is_gather() {
        let cb = [1, 2, 3, 4, 5, 6];
        let out = decode_weight_stream(&cb, 2, &[2, 0, 1], &[0xFF]).unwrap();
        assert_eq!(out, vec![5, 6, 1, 2, 3, 4]);
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(
            decode_weight_stream(&[1, 2], 1, &[2], &[0xFF]),
            Err(Error::IndexOutOfRange { index: 2, bound: 2 })
        ));
        assert!(decode_weight_stream(&[200], 1, &[0], &[0xFF]).is_err());
        assert!(matches!(
            decode_weight_stream(&[1], 1, &[0; 9], &[0xFF]),
            Err(Error::TruncatedStream { needed: 1 })
        ));
    }

    #[test]
    fn memory_bound_traffic_ratio() {
        let cfg = SimConfig::default();
        let b = simulate_layer(&ffn(1), WeightFormat::Int8, &cfg).unwrap();
        let s = simulate_layer(&ffn(1), cfg.ssvq_format(), &cfg).unwrap();
        let w = 192 * 768;
        assert_eq!(b.weight_dram_bits, 8 * w);
        assert_eq!(s.weight_dram_bits, 256 * 8 * 8 + 2 * w);
        // Without the codebook the ratio is exactly 8 / 2.
        assert_eq!(
            streamed_bits(WeightFormat::Int8, w) / streamed_bits(cfg.ssvq_format(), w),
            4
        );
        let speedup = b.total_cycles as f64 / s.total_cycles as f64;
        assert!(speedup > 3.0 && speedup <= 4.0, "{speedup}");
    }

    #[test]
    fn compute_bound_has_no_speedup() {
        let cfg = SimConfig {
            pes: 1,
            lanes_per_pe: 1,
            multipliers_per_lane: 1,
            ..SimConfig::default()
        };
        let l = LayerSpec {
            m: 20_000,
            k: 8,
            n: 8,
            ..ffn(1)
        };
        let b = simulate_layer(&l, WeightFormat::Int8, &cfg).unwrap();
        let s = simulate_layer(&l, cfg.ssvq_format(), &cfg).unwrap();
        let mac_limit = l.macs().div_ceil(cfg.macs_per_cycle());
        assert!((b.total_cycles as f64 / mac_limit as f64 - 1.0) < 1e-3);
        // The codebook alone is 16 kbit; it shows up as a short prologue.
        assert!((s.total_cycles as f64 / b.total_cycles as f64 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn monotone_in_bandwidth_and_pes() {
        let l = ffn(197);
        let mut prev = u64::MAX;
        for bw in [32, 64, 128, 256, 512] {
            let cfg = SimConfig {
                dram_bits_per_cycle: bw,
                ..SimConfig::default()
            };
            let s = simulate_layer(&l, cfg.ssvq_format(), &cfg).unwrap();
            assert!(s.total_cycles <= prev);
            prev = s.total_cycles;
        }
        let mut prev = u64::MAX;
        for pes in [8, 16, 64, 128] {
            let cfg = SimConfig {
                pes,
                ..SimConfig::default()
            };
            let s = simulate_layer(&l, WeightFormat::Int8, &cfg).unwrap();
            assert!(s.compute_cycles <= prev);
            assert!(s.mac_utilization > 0.0 && s.mac_utilization <= 1.0);
            prev = s.compute_cycles;
        }
    }

    #[test]
    fn overlap_bounds() {
        let cfg = SimConfig::default();
        for m in [1, 50, 197, 400] {
            let s = simulate_layer(&ffn(m), WeightFormat::Int8, &cfg).unwrap();
            assert!(s.tiles > 1);
            assert!(s.total_cycles >= s.compute_cycles.max(s.weight_load_cycles));
            assert!(s.total_cycles <= s.compute_cycles + s.weight_load_cycles);
        }
    }

    #[test]
    fn buffer_overflow() {
        let cfg = SimConfig {
            weight_buffer_bytes: 256,
            ..SimConfig::default()
        };
        assert!(matches!(
            simulate_layer(&ffn(1), WeightFormat::Int8, &cfg),
            Err(Error::BufferOverflow { .. })
        ));
        let cfg = SimConfig {
            act_buffer_bytes: 1000,
            ..SimConfig::default()
        };
        assert!(matches!(
            simulate_layer(&ffn(197), WeightFormat::Int8, &cfg),
            Err(Error::BufferOverflow { .. })
        ));
    }

    #[test]
    fn report_ratios() {
        let cfg = SimConfig::default();
        let a = simulate_layer(&ffn(4), WeightFormat::Int8, &cfg).unwrap();
        let r = speedup_report(&[a.clone()], &[a.clone()], &cfg).unwrap();
        assert_eq!(
            (r.total.speedup, r.total.traffic_ratio, r.total.utilization_delta),
            (1.0, 1.0, 0.0)
        );
        let mut b = a.clone();
        let mut s = a.clone();
        b.total_cycles = 4000;
        s.total_cycles = 1000;
        assert_eq!(speedup_report(&[b], &[s], &cfg).unwrap().rows[0].speedup, 4.0);
        let mut other = a.clone();
        other.name = "x".into();
        assert!(matches!(
            speedup_report(&[a], &[other], &cfg),
            Err(Error::MismatchedSpecs(_))
        ));
    }

    #[test]
    fn config_from_toml() {
        let cfg = SimConfig::from_toml("pes = 32\ndram_bits_per_cycle = 64\n").unwrap();
        assert_eq!((cfg.pes, cfg.dram_bits_per_cycle, cfg.lanes_per_pe), (32, 64, 16));
        assert!(SimConfig::from_toml("pes = 0").is_err());
        assert!(SimConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn deit_preset_speedup() {
        let cfg = SimConfig::default();
        let p = Preset::deit_tiny();
        let b = p.simulate(WeightFormat::Int8, &cfg).unwrap();
        let s = p.simulate(cfg.ssvq_format(), &cfg).unwrap();
        let r = speedup_report(&b, &s, &cfg).unwrap();
        assert!((2.5..=4.0).contains(&r.total.speedup), "{}", r.total.speedup);
    }
}
