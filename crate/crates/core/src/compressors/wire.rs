//! Little-endian uplink wire format.
//!
//! Header (16 bytes): magic `CMP1`, payload tag (u8), discriminant (u8: bits
//! for quantized payloads, rank for low-rank, saturating at 255), two reserved
//! zero bytes, `dim` (u32), `count` (u32). `count` is the number of dense
//! values, retained indices, quantization codes, or the rank, by payload.
//!
//! Bodies:
//! - dense: `count` f32
//! - sparse: `count` u32 indices, then `count` f32 values
//! - quantized: `lo` f32, `hi` f32, `⌈count·bits/8⌉` bytes of LSB-first packed codes
//! - low-rank: `count` singular values, `count·rows` left entries, `count·cols` right entries (f32)
//! - sparse-quantized: `count` u32 indices, `lo`, `hi`, packed codes for `count` values
//! - low-rank-quantized: `count` singular values (f32), `lo`, `hi`, packed
//!   codes for `count·(rows + cols)` factor entries
//!
//! Low-rank shapes are not transmitted; both sides derive them from the spec.

use super::{CompressError, CompressorSpec, EncodedMessage, LowRankFactors, Payload, QuantGrid};

pub const MAGIC: [u8; 4] = *b"CMP1";
pub const HEADER_BYTES: usize = 16;

const TAG_DENSE: u8 = 1;
const TAG_SPARSE: u8 = 2;
const TAG_QUANTIZED: u8 = 3;
const TAG_LOW_RANK: u8 = 4;
const TAG_SPARSE_QUANTIZED: u8 = 5;
const TAG_LOW_RANK_QUANTIZED: u8 = 6;

fn packed_len(count: usize, bits: u8) -> usize {
    (count * usize::from(bits)).div_ceil(8)
}

/// Body length in bytes (header excluded).
pub(super) fn payload_len<V>(payload: &Payload<V>) -> usize {
    match payload {
        Payload::Dense { values } => 4 * values.len(),
        Payload::Sparse { indices, .. } => 8 * indices.len(),
        Payload::Quantized(g) => 8 + packed_len(g.codes.len(), g.bits),
        Payload::LowRank(lr) => 4 * lr.singular.len() * (lr.rows + lr.cols + 1),
        Payload::SparseQuantized { indices, grid } => 4 * indices.len() + 8 + packed_len(grid.codes.len(), grid.bits),
        Payload::LowRankQuantized { singular, grid, .. } => {
            4 * singular.len() + 8 + packed_len(grid.codes.len(), grid.bits)
        }
    }
}

fn pack_codes(out: &mut Vec<u8>, codes: &[u16], bits: u8) {
    let start = out.len();
    out.resize(start + packed_len(codes.len(), bits), 0);
    let buf = &mut out[start..];
    let mut bit = 0usize;
    for &c in codes {
        for b in 0..usize::from(bits) {
            if (c >> b) & 1 == 1 {
                buf[bit / 8] |= 1 << (bit % 8);
            }
            bit += 1;
        }
    }
}

fn unpack_codes(buf: &[u8], bits: u8, count: usize) -> Vec<u16> {
    let mut codes = Vec::with_capacity(count);
    let mut bit = 0usize;
    for _ in 0..count {
        let mut c = 0u16;
        for b in 0..usize::from(bits) {
            if (buf[bit / 8] >> (bit % 8)) & 1 == 1 {
                c |= 1 << b;
            }
            bit += 1;
        }
        codes.push(c);
    }
    codes
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_u32s(out: &mut Vec<u8>, values: &[u32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn saturate(n: usize) -> u8 {
    u8::try_from(n).unwrap_or(u8::MAX)
}

pub(super) fn write(msg: &EncodedMessage) -> Vec<u8> {
    let (tag, disc, count) = match &msg.payload {
        Payload::Dense { values } => (TAG_DENSE, 0, values.len()),
        Payload::Sparse { indices, .. } => (TAG_SPARSE, 0, indices.len()),
        Payload::Quantized(g) => (TAG_QUANTIZED, g.bits, g.codes.len()),
        Payload::LowRank(lr) => (TAG_LOW_RANK, saturate(lr.singular.len()), lr.singular.len()),
        Payload::SparseQuantized { indices, grid } => (TAG_SPARSE_QUANTIZED, grid.bits, indices.len()),
        Payload::LowRankQuantized { singular, grid, .. } => (TAG_LOW_RANK_QUANTIZED, grid.bits, singular.len()),
    };
    let mut out = Vec::with_capacity(msg.byte_size());
    out.extend_from_slice(&MAGIC);
    out.push(tag);
    out.push(disc);
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(msg.dim as u32).to_le_bytes());
    out.extend_from_slice(&(count as u32).to_le_bytes());
    match &msg.payload {
        Payload::Dense { values } => put_f32s(&mut out, values),
        Payload::Sparse { indices, values } => {
            put_u32s(&mut out, indices);
            put_f32s(&mut out, values);
        }
        Payload::Quantized(g) => {
            put_f32s(&mut out, &[g.lo, g.hi]);
            pack_codes(&mut out, &g.codes, g.bits);
        }
        Payload::LowRank(lr) => {
            put_f32s(&mut out, &lr.singular);
            put_f32s(&mut out, &lr.left);
            put_f32s(&mut out, &lr.right);
        }
        Payload::SparseQuantized { indices, grid } => {
            put_u32s(&mut out, indices);
            put_f32s(&mut out, &[grid.lo, grid.hi]);
            pack_codes(&mut out, &grid.codes, grid.bits);
        }
        Payload::LowRankQuantized { singular, grid, .. } => {
            put_f32s(&mut out, singular);
            put_f32s(&mut out, &[grid.lo, grid.hi]);
            pack_codes(&mut out, &grid.codes, grid.bits);
        }
    }
    debug_assert_eq!(out.len(), msg.byte_size());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CompressError> {
        if self.buf.len() - self.pos < n {
            return Err(CompressError::MalformedMessage("message truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CompressError> {
        let b = self.take(n.checked_mul(4).ok_or_else(too_large)?)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>, CompressError> {
        let b = self.take(n.checked_mul(4).ok_or_else(too_large)?)?;
        Ok(b.chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn grid(&mut self, bits: u8, count: usize) -> Result<QuantGrid<f32>, CompressError> {
        if !(1..=16).contains(&bits) {
            return Err(CompressError::MalformedMessage(format!("invalid bit width {bits}")));
        }
        let lohi = self.f32s(2)?;
        let packed = self.take(packed_len(count, bits))?;
        Ok(QuantGrid {
            lo: lohi[0],
            hi: lohi[1],
            bits,
            codes: unpack_codes(packed, bits, count),
        })
    }
}

fn too_large() -> CompressError {
    CompressError::MalformedMessage("count overflows".into())
}

pub(super) fn read(spec: &CompressorSpec, bytes: &[u8]) -> Result<EncodedMessage, CompressError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let head = cur.take(HEADER_BYTES)?;
    if head[..4] != MAGIC {
        return Err(CompressError::MalformedMessage("bad magic".into()));
    }
    let tag = head[4];
    let disc = head[5];
    if head[6] != 0 || head[7] != 0 {
        return Err(CompressError::MalformedMessage("reserved bytes are not zero".into()));
    }
    let dim = u32::from_le_bytes([head[8], head[9], head[10], head[11]]) as usize;
    let count = u32::from_le_bytes([head[12], head[13], head[14], head[15]]) as usize;
    spec.validate(dim)?;
    let shape = || {
        spec.reshape_for(dim)
            .ok_or_else(|| CompressError::MalformedMessage("low-rank payload for a spec without a reshape".into()))
    };
    let payload = match tag {
        TAG_DENSE => Payload::Dense {
            values: cur.f32s(count)?,
        },
        TAG_SPARSE => {
            let indices = cur.u32s(count)?;
            let values = cur.f32s(count)?;
            Payload::Sparse { indices, values }
        }
        TAG_QUANTIZED => Payload::Quantized(cur.grid(disc, count)?),
        TAG_LOW_RANK => {
            let s = shape()?;
            let singular = cur.f32s(count)?;
            let left = cur.f32s(count * s.rows)?;
            let right = cur.f32s(count * s.cols)?;
            Payload::LowRank(LowRankFactors {
                rows: s.rows,
                cols: s.cols,
                singular,
                left,
                right,
            })
        }
        TAG_SPARSE_QUANTIZED => {
            let indices = cur.u32s(count)?;
            let grid = cur.grid(disc, count)?;
            Payload::SparseQuantized { indices, grid }
        }
        TAG_LOW_RANK_QUANTIZED => {
            let s = shape()?;
            let singular = cur.f32s(count)?;
            let grid = cur.grid(disc, count * (s.rows + s.cols))?;
            Payload::LowRankQuantized {
                rows: s.rows,
                cols: s.cols,
                singular,
                grid,
            }
        }
        other => return Err(CompressError::MalformedMessage(format!("unknown payload tag {other}"))),
    };
    if cur.pos != bytes.len() {
        return Err(CompressError::MalformedMessage(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    Ok(EncodedMessage { dim, payload })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressors::encode;

    #[test]
    fn header_layout_is_pinned() {
        let msg = encode(&CompressorSpec::top_k(1), &[3.0f64, -1.0, 2.0]).unwrap();
        let bytes = msg.to_bytes();
        assert_eq!(
            bytes,
            vec![
                b'C', b'M', b'P', b'1', TAG_SPARSE, 0, 0, 0, // magic, tag, disc, reserved
                3, 0, 0, 0, // dim
                1, 0, 0, 0, // count
                0, 0, 0, 0, // index 0
                0, 0, 0x40, 0x40, // 3.0f32
            ]
        );
    }

    #[test]
    fn code_packing_is_lsb_first() {
        let mut out = Vec::new();
        pack_codes(&mut out, &[1, 0, 1, 1, 0, 0, 0, 1, 1], 1);
        assert_eq!(out, vec![0b1000_1101, 0b0000_0001]);
        assert_eq!(unpack_codes(&out, 1, 9), vec![1, 0, 1, 1, 0, 0, 0, 1, 1]);

        let mut out = Vec::new();
        pack_codes(&mut out, &[5, 2, 7], 3);
        assert_eq!(out, vec![0b1101_0101, 0b0000_0001]);
        assert_eq!(unpack_codes(&out, 3, 3), vec![5, 2, 7]);
    }

    #[test]
    fn round_trip_every_payload_kind() {
        let x: Vec<f64> = (0..23).map(|i| ((i * 13) % 17) as f64 - 8.25).collect();
        for spec in [
            CompressorSpec::Identity,
            CompressorSpec::top_k(4),
            CompressorSpec::quant(3),
            CompressorSpec::quant(16),
            CompressorSpec::svd(2),
            CompressorSpec::quantized(CompressorSpec::top_k(4), 5),
            CompressorSpec::quantized(CompressorSpec::svd(1), 2),
        ] {
            let msg = encode(&spec, &x).unwrap();
            let bytes = msg.to_bytes();
            assert_eq!(bytes.len(), msg.byte_size(), "{}", spec.label());
            let back = EncodedMessage::from_bytes(&spec, &bytes).unwrap();
            assert_eq!(back, msg, "{}", spec.label());
        }
    }

    #[test]
    fn rejects_corruption() {
        let spec = CompressorSpec::top_k(2);
        let msg = encode(&spec, &[1.0f64, 5.0, 2.0]).unwrap();
        let good = msg.to_bytes();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(EncodedMessage::from_bytes(&spec, &bad).is_err());

        let mut bad = good.clone();
        bad.push(0);
        assert!(EncodedMessage::from_bytes(&spec, &bad).is_err());

        let bad = &good[..good.len() - 1];
        assert!(EncodedMessage::from_bytes(&spec, bad).is_err());

        // index out of range
        let mut bad = good.clone();
        bad[16..20].copy_from_slice(&9u32.to_le_bytes());
        assert!(EncodedMessage::from_bytes(&spec, &bad).is_err());
    }
}
