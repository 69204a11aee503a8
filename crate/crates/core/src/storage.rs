//! Compression-ratio accounting and the `.ssvq` container.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! file    := "SSVQ" version:u16 layer_count:u32 layer*
//! layer   := kind:u8 flags:u8 rows:u32 cols:u32 d:u32 k:u16 scale:f64
//!            codebook[k*d bytes]
//!            assignments[N * ceil(log2 k) bits, MSB first, zero-padded to a byte]
//!            signs[rows*cols bits, MSB first, 1 = positive, zero-padded]   (SSVQ only)
//!            aligned_assignments[N bytes]                                (flags bit 0)
//! ```
//!
//! SSVQ codebook bytes are magnitudes in `0..=127`. VQ codebooks hold signed
//! values, stored as two's-complement `i8` in `-127..=127` with the same
//! max-abs scale rule.

use serde::{Deserialize, Serialize};

use crate::clustering::{Assignments, Codebook};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ssvq::SSVQModel;
use crate::vq::VQModel;

pub const MAGIC: &[u8; 4] = b"SSVQ";
pub const VERSION: u16 = 1;
/// Bytes before the first layer record.
pub const FILE_HEADER_BYTES: usize = 10;
/// Fixed bytes at the start of every layer record.
pub const LAYER_HEADER_BYTES: usize = 24;
/// Largest codebook representable in the byte-aligned index format.
pub const MAX_K: usize = 256;

const FLAG_ALIGNED: u8 = 0b1;

/// Bits needed to address `k` codewords; zero for a single codeword.
pub fn index_bits(k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        usize::BITS - (k - 1).leading_zeros()
    }
}

/// Per-layer storage cost in bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitBudget {
    /// Bits per full-precision weight.
    pub b_f: u64,
    /// Bits per codebook element.
    pub q_c: u64,
    /// Assignment bits.
    pub b_a: u64,
    /// Codebook bits.
    pub b_c: u64,
    /// Sign-mask bits (zero for VQ).
    pub b_s: u64,
}

fn check_shape(rows: usize, cols: usize, d: usize, k: usize) -> Result<usize> {
    if rows == 0 || cols == 0 || d == 0 || k == 0 {
        return Err(Error::InvalidShape(format!(
            "rows={rows} cols={cols} d={d} k={k} must all be positive"
        )));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::InvalidShape(format!("{rows}x{cols} overflows")))?;
    if len % d != 0 {
        return Err(Error::InvalidShape(format!("d={d} does not divide {rows}x{cols}")));
    }
    Ok(len / d)
}

impl BitBudget {
    pub fn vq(rows: usize, cols: usize, d: usize, k: usize, b_f: u64, q_c: u64) -> Result<Self> {
        let n = check_shape(rows, cols, d, k)? as u64;
        Ok(Self {
            b_f,
            q_c,
            b_a: n * u64::from(index_bits(k)),
            b_c: (k * d) as u64 * q_c,
            b_s: 0,
        })
    }

    pub fn ssvq(rows: usize, cols: usize, d: usize, k: usize, b_f: u64, q_c: u64) -> Result<Self> {
        let mut b = Self::vq(rows, cols, d, k, b_f, q_c)?;
        b.b_s = (rows * cols) as u64;
        Ok(b)
    }

    pub fn total(&self) -> u64 {
        self.b_a + self.b_c + self.b_s
    }
}

fn cr_denominator(rows: usize, cols: usize, d: usize, k: usize, q_c: f64, signs: bool) -> Result<f64> {
    check_shape(rows, cols, d, k)?;
    let df = d as f64;
    let sign_term = if signs { df } else { 0.0 };
    let den = sign_term + f64::from(index_bits(k)) + k as f64 * df * df * q_c / (rows as f64 * cols as f64);
    if den <= 0.0 {
        return Err(Error::InvalidShape("zero storage cost; ratio undefined".into()));
    }
    Ok(den)
}

/// `d * b_f / (ceil(log2 K) + K d^2 q_c / (O I))`.
pub fn cr_vq(rows: usize, cols: usize, d: usize, k: usize, b_f: f64, q_c: f64) -> Result<f64> {
    Ok(d as f64 * b_f / cr_denominator(rows, cols, d, k, q_c, false)?)
}

/// `d * b_f / (d + ceil(log2 K) + K d^2 q_c / (O I))`.
pub fn cr_ssvq(rows: usize, cols: usize, d: usize, k: usize, b_f: f64, q_c: f64) -> Result<f64> {
    Ok(d as f64 * b_f / cr_denominator(rows, cols, d, k, q_c, true)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Vq = 0,
    Ssvq = 1,
}

/// Whole-model ratio: total dense bits over total compressed bits, with a
/// separate codebook per layer.
pub fn aggregate_cr(shapes: &[(usize, usize)], kind: LayerKind, d: usize, k: usize, b_f: u64, q_c: u64) -> Result<f64> {
    if shapes.is_empty() {
        return Err(Error::EmptyModel);
    }
    let (mut dense, mut packed) = (0u64, 0u64);
    for &(o, i) in shapes {
        let b = match kind {
            LayerKind::Vq => BitBudget::vq(o, i, d, k, b_f, q_c)?,
            LayerKind::Ssvq => BitBudget::ssvq(o, i, d, k, b_f, q_c)?,
        };
        dense += (o * i) as u64 * b_f;
        packed += b.total();
    }
    Ok(dense as f64 / packed as f64)
}

/// 8-bit magnitudes: `scale = max / 127`, `byte = round(entry / scale)`.
/// An all-zero codebook gets `scale = 1`.
pub fn quantize_codebook(cb: &Codebook) -> Result<(Vec<u8>, f64)> {
    if let Some((i, &v)) = cb.entries().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeEntry { index: i, value: v });
    }
    let max = cb.entries().iter().fold(0.0f64, |a, &b| a.max(b));
    let scale = if max > 0.0 { max / 127.0 } else { 1.0 };
    let bytes = cb
        .entries()
        .iter()
        .map(|&e| (e / scale).round().min(127.0) as u8)
        .collect();
    Ok((bytes, scale))
}

/// Signed counterpart of [`quantize_codebook`] for VQ codebooks:
/// `scale = max|entry| / 127`, codes in `-127..=127`.
pub fn quantize_codebook_signed(cb: &Codebook) -> (Vec<i8>, f64) {
    let max = cb.entries().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let scale = if max > 0.0 { max / 127.0 } else { 1.0 };
    let codes = cb
        .entries()
        .iter()
        .map(|&e| (e / scale).round().clamp(-127.0, 127.0) as i8)
        .collect();
    (codes, scale)
}

/// A layer in its stored, quantized form.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLayer {
    pub kind: LayerKind,
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub k: usize,
    pub scale: f64,
    /// `k * dim` raw codebook bytes (two's complement for VQ).
    pub codebook: Vec<u8>,
    pub assignments: Vec<u32>,
    /// Row-major, `true` = positive. Empty for VQ.
    pub signs: Vec<bool>,
    /// Also store one byte per assignment for hardware that cannot read
    /// packed indices.
    pub aligned: bool,
}

impl QuantizedLayer {
    pub fn from_vq(m: &VQModel, aligned: bool) -> Result<Self> {
        m.validate()?;
        check_k(m.k())?;
        let (codes, scale) = quantize_codebook_signed(&m.codebook);
        Ok(Self {
            kind: LayerKind::Vq,
            rows: m.rows,
            cols: m.cols,
            dim: m.dim(),
            k: m.k(),
            scale,
            codebook: codes.into_iter().map(|c| c as u8).collect(),
            assignments: m.assignments.as_slice().to_vec(),
            signs: Vec::new(),
            aligned,
        })
    }

    pub fn from_ssvq(m: &SSVQModel, aligned: bool) -> Result<Self> {
        m.validate()?;
        check_k(m.k())?;
        let (bytes, scale) = quantize_codebook(&m.codebook)?;
        Ok(Self {
            kind: LayerKind::Ssvq,
            rows: m.rows,
            cols: m.cols,
            dim: m.dim(),
            k: m.k(),
            scale,
            codebook: bytes,
            assignments: m.assignments.as_slice().to_vec(),
            signs: m.sign_mask().as_slice().iter().map(|&s| s > 0).collect(),
            aligned,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subvectors(&self) -> usize {
        self.len() / self.dim
    }

    /// Integer codebook entry, signed for VQ, magnitude for SSVQ.
    pub fn code(&self, i: usize) -> i32 {
        match self.kind {
            LayerKind::Vq => i32::from(self.codebook[i] as i8),
            LayerKind::Ssvq => i32::from(self.codebook[i]),
        }
    }

    /// Row-major signed 8-bit weight codes; multiply by `scale` for values.
    pub fn signed_codes(&self) -> Vec<i8> {
        let mut out = Vec::with_capacity(self.len());
        for (n, &a) in self.assignments.iter().enumerate() {
            for j in 0..self.dim {
                let c = self.code(a as usize * self.dim + j);
                let pos = n * self.dim + j;
                let v = if self.kind == LayerKind::Ssvq && !self.signs[pos] {
                    -c
                } else {
                    c
                };
                out.push(v as i8);
            }
        }
        out
    }

    pub fn dequantize(&self) -> Result<Matrix> {
        let data = self
            .signed_codes()
            .into_iter()
            .map(|c| f64::from(c) * self.scale)
            .collect();
        Matrix::new(self.rows, self.cols, data)
    }

    fn dequantized_codebook(&self) -> Result<Codebook> {
        let entries = (0..self.codebook.len())
            .map(|i| f64::from(self.code(i)) * self.scale)
            .collect();
        Codebook::new(self.dim, entries)
    }

    pub fn to_vq_model(&self) -> Result<VQModel> {
        if self.kind != LayerKind::Vq {
            return Err(Error::MismatchedSpecs("layer is not VQ".into()));
        }
        VQModel::new(
            self.dequantized_codebook()?,
            Assignments(self.assignments.clone()),
            self.rows,
            self.cols,
        )
    }

    /// Latent signs come back as unit magnitudes `±1`, none frozen.
    pub fn to_ssvq_model(&self) -> Result<SSVQModel> {
        if self.kind != LayerKind::Ssvq {
            return Err(Error::MismatchedSpecs("layer is not SSVQ".into()));
        }
        let m = SSVQModel {
            codebook: self.dequantized_codebook()?,
            assignments: Assignments(self.assignments.clone()),
            latent: self.signs.iter().map(|&s| if s { 1.0 } else { -1.0 }).collect(),
            frozen: vec![false; self.len()],
            alpha: 1.0,
            rows: self.rows,
            cols: self.cols,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn budget(&self) -> Result<BitBudget> {
        match self.kind {
            LayerKind::Vq => BitBudget::vq(self.rows, self.cols, self.dim, self.k, 32, 8),
            LayerKind::Ssvq => BitBudget::ssvq(self.rows, self.cols, self.dim, self.k, 32, 8),
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if k > MAX_K {
        Err(Error::UnsupportedK(k))
    } else {
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub layers: Vec<QuantizedLayer>,
}

/// Bit accounting of one serialized container.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteStats {
    /// File and layer headers.
    pub header_bits: u64,
    /// Codebooks, packed assignments and sign masks.
    pub payload_bits: u64,
    /// Zero bits that round packed sections up to whole bytes.
    pub padding_bits: u64,
    /// Optional byte-aligned assignment copies.
    pub aligned_bits: u64,
}

impl WriteStats {
    pub fn total_bits(&self) -> u64 {
        self.header_bits + self.payload_bits + self.padding_bits + self.aligned_bits
    }
}

struct BitWriter<'a> {
    out: &'a mut Vec<u8>,
    acc: u8,
    used: u32,
    bits: u64,
}

impl<'a> BitWriter<'a> {
    fn new(out: &'a mut Vec<u8>) -> Self {
        Self {
            out,
            acc: 0,
            used: 0,
            bits: 0,
        }
    }

    fn push(&mut self, value: u32, width: u32) {
        for b in (0..width).rev() {
            self.acc = (self.acc << 1) | ((value >> b) & 1) as u8;
            self.used += 1;
            self.bits += 1;
            if self.used == 8 {
                self.out.push(self.acc);
                self.acc = 0;
                self.used = 0;
            }
        }
    }

    /// Flushes, returning (payload bits, padding bits).
    fn finish(self) -> (u64, u64) {
        let pad = if self.used == 0 { 0 } else { 8 - self.used };
        if self.used > 0 {
            self.out.push(self.acc << pad);
        }
        (self.bits, u64::from(pad))
    }
}

fn packed_bytes(count: usize, width: u32) -> usize {
    (count * width as usize).div_ceil(8)
}

fn unpack(bytes: &[u8], count: usize, width: u32) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(count);
    let mut bit = 0usize;
    for _ in 0..count {
        let mut v = 0u32;
        for _ in 0..width {
            v = (v << 1) | u32::from((bytes[bit / 8] >> (7 - bit % 8)) & 1);
            bit += 1;
        }
        out.push(v);
    }
    if bit % 8 != 0 && bytes[bit / 8] & (0xFF >> (bit % 8)) != 0 {
        return Err(Error::CorruptHeader("nonzero padding bits".into()));
    }
    Ok(out)
}

/// Serializes every layer; the stats split header, payload and padding bits.
pub fn serialize(c: &Container) -> Result<(Vec<u8>, WriteStats)> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(c.layers.len() as u32).to_le_bytes());
    let mut stats = WriteStats {
        header_bits: FILE_HEADER_BYTES as u64 * 8,
        ..WriteStats::default()
    };
    for l in &c.layers {
        write_layer(l, &mut out, &mut stats)?;
    }
    debug_assert_eq!(stats.total_bits(), out.len() as u64 * 8);
    Ok((out, stats))
}

fn write_layer(l: &QuantizedLayer, out: &mut Vec<u8>, stats: &mut WriteStats) -> Result<()> {
    let n = check_shape(l.rows, l.cols, l.dim, l.k)?;
    check_k(l.k)?;
    if l.codebook.len() != l.k * l.dim || l.assignments.len() != n {
        return Err(Error::ShapeMismatch("codebook or assignment length".into()));
    }
    let signs_expected = if l.kind == LayerKind::Ssvq { l.len() } else { 0 };
    if l.signs.len() != signs_expected {
        return Err(Error::ShapeMismatch(format!(
            "{} signs, expected {signs_expected}",
            l.signs.len()
        )));
    }
    if l.kind == LayerKind::Ssvq {
        if let Some(i) = l.codebook.iter().position(|&b| b > 127) {
            return Err(Error::OutOfRange {
                value: f64::from(l.codebook[i]),
                lo: 0.0,
                hi: 127.0,
            });
        }
    }
    if let Some(&a) = l.assignments.iter().find(|&&a| a as usize >= l.k) {
        return Err(Error::IndexOutOfRange {
            index: a as usize,
            bound: l.k,
        });
    }
    if !(l.scale.is_finite() && l.scale > 0.0) {
        return Err(Error::NonFinite(0));
    }
    if l.rows > u32::MAX as usize || l.cols > u32::MAX as usize || l.dim > u32::MAX as usize {
        return Err(Error::InvalidShape("dimension exceeds u32".into()));
    }

    out.push(l.kind as u8);
    out.push(if l.aligned { FLAG_ALIGNED } else { 0 });
    out.extend_from_slice(&(l.rows as u32).to_le_bytes());
    out.extend_from_slice(&(l.cols as u32).to_le_bytes());
    out.extend_from_slice(&(l.dim as u32).to_le_bytes());
    out.extend_from_slice(&(l.k as u16).to_le_bytes());
    out.extend_from_slice(&l.scale.to_le_bytes());
    stats.header_bits += LAYER_HEADER_BYTES as u64 * 8;

    out.extend_from_slice(&l.codebook);
    stats.payload_bits += l.codebook.len() as u64 * 8;

    let width = index_bits(l.k);
    let mut w = BitWriter::new(out);
    for &a in &l.assignments {
        w.push(a, width);
    }
    let (bits, pad) = w.finish();
    stats.payload_bits += bits;
    stats.padding_bits += pad;

    if l.kind == LayerKind::Ssvq {
        let mut w = BitWriter::new(out);
        for &s in &l.signs {
            w.push(u32::from(s), 1);
        }
        let (bits, pad) = w.finish();
        stats.payload_bits += bits;
        stats.padding_bits += pad;
    }

    if l.aligned {
        out.extend(l.assignments.iter().map(|&a| a as u8));
        stats.aligned_bits += n as u64 * 8;
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::TruncatedStream {
                needed: n - (self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<Container> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::CorruptHeader("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::CorruptHeader(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        layers.push(read_layer(&mut r)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptHeader(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Container { layers })
}

fn read_layer(r: &mut Reader<'_>) -> Result<QuantizedLayer> {
    let kind = match r.u8()? {
        0 => LayerKind::Vq,
        1 => LayerKind::Ssvq,
        other => return Err(Error::CorruptHeader(format!("unknown layer kind {other}"))),
    };
    let flags = r.u8()?;
    if flags & !FLAG_ALIGNED != 0 {
        return Err(Error::CorruptHeader(format!("unknown flags {flags:#04x}")));
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let k = r.u16()? as usize;
    let scale = r.f64()?;
    check_k(k)?;
    let n = check_shape(rows, cols, dim, k).map_err(|e| Error::CorruptHeader(e.to_string()))?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::CorruptHeader(format!("invalid codebook scale {scale}")));
    }

    let codebook = r.take(k * dim)?.to_vec();
    if kind == LayerKind::Ssvq && codebook.iter().any(|&b| b > 127) {
        return Err(Error::CorruptHeader("magnitude byte above 127".into()));
    }
    let width = index_bits(k);
    let assignments = unpack(r.take(packed_bytes(n, width))?, n, width)?;
    if assignments.iter().any(|&a| a as usize >= k) {
        return Err(Error::CorruptHeader("assignment out of range".into()));
    }
    let signs = if kind == LayerKind::Ssvq {
        let len = rows * cols;
        unpack(r.take(packed_bytes(len, 1))?, len, 1)?
            .into_iter()
            .map(|b| b == 1)
            .collect()
    } else {
        Vec::new()
    };
    let aligned = flags & FLAG_ALIGNED != 0;
    if aligned {
        let copy = r.take(n)?;
        if copy.iter().zip(&assignments).any(|(&b, &a)| u32::from(b) != a) {
            return Err(Error::CorruptHeader("aligned indices disagree with packed".into()));
        }
    }
    Ok(QuantizedLayer {
        kind,
        rows,
        cols,
        dim,
        k,
        scale,
        codebook,
        assignments,
        signs,
        aligned,
    })
}

pub fn serialize_vq(m: &VQModel, aligned: bool) -> Result<(Vec<u8>, WriteStats)> {
    serialize(&Container {
        layers: vec![QuantizedLayer::from_vq(m, aligned)?],
    })
}

pub fn serialize_ssvq(m: &SSVQModel, aligned: bool) -> Result<(Vec<u8>, WriteStats)> {
    serialize(&Container {
        layers: vec![QuantizedLayer::from_ssvq(m, aligned)?],
    })
}

pub const WEIGHTS_MAGIC: &[u8; 4] = b"SSVW";

/// Writes dense matrices as `"SSVW" count:u32 (rows:u32 cols:u32 f32*)*`.
pub fn write_weights(mats: &[Matrix]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&(mats.len() as u32).to_le_bytes());
    for m in mats {
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for &v in m.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_weights(bytes: &[u8]) -> Result<Vec<Matrix>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::CorruptHeader("bad weights magic".into()));
    }
    let count = r.u32()? as usize;
    let mut mats = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let len = rows
            .checked_mul(cols)
            .filter(|l| l.checked_mul(4).is_some())
            .ok_or_else(|| Error::CorruptHeader(format!("{rows}x{cols} overflows")))?;
        let raw = r.take(len * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        mats.push(Matrix::new(rows, cols, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptHeader("trailing bytes after weights".into()));
    }
    Ok(mats)
}
