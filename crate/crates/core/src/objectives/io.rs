//! Binary suite files.
//!
//! 16-byte header: magic `"CSU1"`, kind byte (1 quadratic, 2 logistic),
//! scalar width in bytes (4 or 8), two zero bytes, client count `u32`,
//! dimension `u32`, all little-endian. Quadratic body: `x*` then each `H_n`
//! row-major. Logistic body: `λ`, then per client a `u32` sample count,
//! the feature rows and the labels.

use super::{LogisticClient, LogisticSuite, ObjectiveError, QuadraticSuite, SuiteKind};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const SUITE_MAGIC: [u8; 4] = *b"CSU1";
pub const SUITE_HEADER_BYTES: usize = 16;

const KIND_QUADRATIC: u8 = 1;
const KIND_LOGISTIC: u8 = 2;

struct Writer {
    buf: Vec<u8>,
    width: usize,
}

impl Writer {
    fn values<T: Scalar>(&mut self, vs: &[T]) {
        for &v in vs {
            if self.width == 4 {
                self.buf.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
            } else {
                self.buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
            }
        }
    }
}

/// Serializes a suite at the scalar width of `T`.
pub fn write_suite<T: Scalar>(suite: &SuiteKind<T>) -> Vec<u8> {
    let width = std::mem::size_of::<T>();
    let (kind, n, d) = match suite {
        SuiteKind::Quadratic(q) => (KIND_QUADRATIC, q.hessians.len(), q.minimizer.len()),
        SuiteKind::Logistic(s) => (KIND_LOGISTIC, s.clients.len(), s.clients[0].features.cols()),
    };
    let mut w = Writer { buf: Vec::new(), width };
    w.buf.extend_from_slice(&SUITE_MAGIC);
    w.buf.extend_from_slice(&[kind, width as u8, 0, 0]);
    w.buf.extend_from_slice(&(n as u32).to_le_bytes());
    w.buf.extend_from_slice(&(d as u32).to_le_bytes());
    match suite {
        SuiteKind::Quadratic(q) => {
            w.values(&q.minimizer);
            for h in &q.hessians {
                w.values(h.as_slice());
            }
        }
        SuiteKind::Logistic(s) => {
            w.values(&[s.lambda]);
            for c in &s.clients {
                w.buf.extend_from_slice(&(c.labels.len() as u32).to_le_bytes());
                w.values(c.features.as_slice());
                w.values(&c.labels);
            }
        }
    }
    w.buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    width: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ObjectiveError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ObjectiveError::MalformedFile(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, ObjectiveError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn values<T: Scalar>(&mut self, count: usize) -> Result<Vec<T>, ObjectiveError> {
        let bytes = self.take(
            count
                .checked_mul(self.width)
                .ok_or_else(|| ObjectiveError::MalformedFile("length overflow".into()))?,
        )?;
        let out: Vec<T> = if self.width == 4 {
            bytes
                .chunks_exact(4)
                .map(|c| T::lit(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))))
                .collect()
        } else {
            bytes
                .chunks_exact(8)
                .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("chunk of 8"))))
                .collect()
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ObjectiveError::MalformedFile("non-finite value".into()));
        }
        Ok(out)
    }
}

/// Parses a suite file written at either scalar width, converting to `T`,
/// and re-validates the suite invariants.
pub fn read_suite<T: Scalar>(bytes: &[u8]) -> Result<SuiteKind<T>, ObjectiveError> {
    if bytes.len() < SUITE_HEADER_BYTES {
        return Err(ObjectiveError::MalformedFile("shorter than the header".into()));
    }
    if bytes[..4] != SUITE_MAGIC {
        return Err(ObjectiveError::MalformedFile("bad magic".into()));
    }
    let (kind, width) = (bytes[4], bytes[5] as usize);
    if width != 4 && width != 8 {
        return Err(ObjectiveError::MalformedFile(format!("scalar width {width}")));
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(ObjectiveError::MalformedFile("reserved bytes are not zero".into()));
    }
    let mut r = Reader { bytes, pos: 8, width };
    let n = r.u32()?;
    let d = r.u32()?;
    if n == 0 || d == 0 {
        return Err(ObjectiveError::MalformedFile("empty suite".into()));
    }
    let suite = match kind {
        KIND_QUADRATIC => {
            let minimizer = r.values(d)?;
            let hessians = (0..n)
                .map(|_| Ok(Matrix::from_row_major(d, d, r.values(d * d)?)))
                .collect::<Result<Vec<_>, ObjectiveError>>()?;
            SuiteKind::Quadratic(QuadraticSuite::new(hessians, minimizer)?)
        }
        KIND_LOGISTIC => {
            let lambda = r.values::<T>(1)?[0];
            let clients = (0..n)
                .map(|_| {
                    let m = r.u32()?;
                    let features = Matrix::from_row_major(m, d, r.values(m * d)?);
                    let labels = r.values(m)?;
                    Ok(LogisticClient { features, labels })
                })
                .collect::<Result<Vec<_>, ObjectiveError>>()?;
            SuiteKind::Logistic(LogisticSuite::new(clients, lambda)?)
        }
        other => return Err(ObjectiveError::MalformedFile(format!("unknown suite kind {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(ObjectiveError::MalformedFile(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(suite)
}
