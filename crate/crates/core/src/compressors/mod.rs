//! Encoder/decoder pairs and the compression operators they induce.
//!
//! A [`CompressorSpec`] describes an operator declaratively. From it we derive
//! the encoder ([`encode`]), the decoder ([`decode`]), the operator itself
//! ([`compress`], evaluated in the working precision), and its contraction
//! factor ω, either analytically ([`omega_analytic`]) or by sampling
//! ([`omega_estimate`]).
//!
//! Uplink payloads carry 32-bit floats. [`compress`] builds exactly the same
//! payload structure (same support, same codes, same factors) but keeps the
//! values in the working precision, so `decode(encode(x))` and `compress(x)`
//! differ only by the rounding of transmitted floats to `f32`.

mod lowrank;
mod quant;
mod topk;
mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::scalar::Scalar;

pub use lowrank::LowRankFactors;
pub use quant::QuantGrid;
pub use wire::{HEADER_BYTES, MAGIC};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompressError {
    #[error("invalid compressor spec: {0}")]
    InvalidSpec(String),
    #[error("input contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Zero-padded reshape of a length-`d` vector into a `rows × cols` matrix
/// (row-major fill).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReshapeRule {
    pub rows: usize,
    pub cols: usize,
}

impl ReshapeRule {
    /// Near-square default: `rows = ⌈√d⌉`, `cols = ⌈d / rows⌉`.
    pub fn near_square(d: usize) -> Self {
        let d = d.max(1);
        let mut rows = (d as f64).sqrt().ceil() as usize;
        // Guard against floating sqrt landing one too high or low.
        while rows > 1 && (rows - 1) * (rows - 1) >= d {
            rows -= 1;
        }
        while rows * rows < d {
            rows += 1;
        }
        let cols = d.div_ceil(rows);
        Self { rows, cols }
    }

    pub fn min_side(&self) -> usize {
        self.rows.min(self.cols)
    }

    pub fn capacity(&self) -> usize {
        self.rows * self.cols
    }
}

/// Declarative description of a compression operator.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressorSpec {
    #[default]
    Identity,
    TopK {
        k: usize,
    },
    UniformQuant {
        bits: u8,
    },
    SvdLowRank {
        rank: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reshape: Option<ReshapeRule>,
    },
    /// `outer ∘ inner`, where `outer` quantizes the values the inner operator
    /// retains (top-k values, or low-rank factor entries).
    Compose {
        inner: Box<CompressorSpec>,
        outer: Box<CompressorSpec>,
    },
}

impl CompressorSpec {
    pub fn top_k(k: usize) -> Self {
        Self::TopK { k }
    }

    pub fn quant(bits: u8) -> Self {
        Self::UniformQuant { bits }
    }

    pub fn svd(rank: usize) -> Self {
        Self::SvdLowRank { rank, reshape: None }
    }

    pub fn quantized(inner: CompressorSpec, bits: u8) -> Self {
        Self::Compose {
            inner: Box::new(inner),
            outer: Box::new(Self::UniformQuant { bits }),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Self::Identity)
    }

    /// Short human-readable label, e.g. `topk(k=4)` or `svd(r=1)+q(3)`.
    pub fn label(&self) -> String {
        match self {
            Self::Identity => "identity".to_string(),
            Self::TopK { k } => format!("topk(k={k})"),
            Self::UniformQuant { bits } => format!("q({bits})"),
            Self::SvdLowRank { rank, .. } => format!("svd(r={rank})"),
            Self::Compose { inner, outer } => format!("{}+{}", inner.label(), outer.label()),
        }
    }

    /// Reshape used by a low-rank spec at dimension `d`.
    pub fn reshape_for(&self, d: usize) -> Option<ReshapeRule> {
        match self {
            Self::SvdLowRank { reshape, .. } => Some(reshape.unwrap_or_else(|| ReshapeRule::near_square(d))),
            Self::Compose { inner, .. } => inner.reshape_for(d),
            _ => None,
        }
    }

    /// Checks the spec against a vector length.
    pub fn validate(&self, d: usize) -> Result<(), CompressError> {
        if d == 0 {
            return Err(CompressError::InvalidSpec("dimension must be at least 1".into()));
        }
        if d > u32::MAX as usize {
            return Err(CompressError::InvalidSpec(
                "dimension exceeds the 32-bit wire limit".into(),
            ));
        }
        match self {
            Self::Identity => Ok(()),
            Self::TopK { k } => {
                if *k == 0 || *k > d {
                    Err(CompressError::InvalidSpec(format!(
                        "top-k needs 1 <= k <= d, got k={k}, d={d}"
                    )))
                } else {
                    Ok(())
                }
            }
            Self::UniformQuant { bits } => {
                if (1..=16).contains(bits) {
                    Ok(())
                } else {
                    Err(CompressError::InvalidSpec(format!(
                        "quantizer bits must be in [1, 16], got {bits}"
                    )))
                }
            }
            Self::SvdLowRank { rank, .. } => {
                let shape = self.reshape_for(d).expect("low-rank spec has a reshape");
                if shape.rows == 0 || shape.cols == 0 || shape.capacity() < d {
                    return Err(CompressError::InvalidSpec(format!(
                        "reshape {}x{} cannot hold {d} coordinates",
                        shape.rows, shape.cols
                    )));
                }
                if *rank == 0 || *rank > shape.min_side() {
                    return Err(CompressError::InvalidSpec(format!(
                        "svd rank must be in [1, {}], got {rank}",
                        shape.min_side()
                    )));
                }
                Ok(())
            }
            Self::Compose { inner, outer } => {
                if !matches!(**outer, Self::UniformQuant { .. }) {
                    return Err(CompressError::InvalidSpec(
                        "composition outer operator must be a quantizer".into(),
                    ));
                }
                if !matches!(**inner, Self::TopK { .. } | Self::SvdLowRank { .. }) {
                    return Err(CompressError::InvalidSpec(
                        "composition inner operator must be top-k or svd".into(),
                    ));
                }
                inner.validate(d)?;
                outer.validate(d)
            }
        }
    }

    fn outer_bits(&self) -> Option<u8> {
        match self {
            Self::Compose { outer, .. } => match **outer {
                Self::UniformQuant { bits } => Some(bits),
                _ => None,
            },
            _ => None,
        }
    }
}

/// Payload body. `V` is the value type: `f32` on the wire, the working scalar
/// inside [`compress`].
#[derive(Debug, Clone, PartialEq)]
pub enum Payload<V> {
    /// Lossless dense vector.
    Dense {
        values: Vec<V>,
    },
    /// Strictly increasing coordinate indices with their values.
    Sparse {
        indices: Vec<u32>,
        values: Vec<V>,
    },
    Quantized(QuantGrid<V>),
    LowRank(LowRankFactors<V>),
    /// Top-k support with quantized values.
    SparseQuantized {
        indices: Vec<u32>,
        grid: QuantGrid<V>,
    },
    /// Low-rank factors with singular values kept as floats and the left and
    /// right factor entries quantized on one shared grid.
    LowRankQuantized {
        rows: usize,
        cols: usize,
        singular: Vec<V>,
        grid: QuantGrid<V>,
    },
}

/// An encoded vector: original length plus payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded<V> {
    pub dim: usize,
    pub payload: Payload<V>,
}

/// The uplink message a client produces.
pub type EncodedMessage = Encoded<f32>;

impl<V: Copy> Encoded<V> {
    /// Exact serialized size in bytes.
    pub fn byte_size(&self) -> usize {
        wire::payload_len(&self.payload) + HEADER_BYTES
    }

    pub fn map_values<W>(&self, f: impl Fn(V) -> W + Copy) -> Encoded<W> {
        let payload = match &self.payload {
            Payload::Dense { values } => Payload::Dense {
                values: values.iter().map(|&v| f(v)).collect(),
            },
            Payload::Sparse { indices, values } => Payload::Sparse {
                indices: indices.clone(),
                values: values.iter().map(|&v| f(v)).collect(),
            },
            Payload::Quantized(g) => Payload::Quantized(g.map(f)),
            Payload::LowRank(lr) => Payload::LowRank(lr.map(f)),
            Payload::SparseQuantized { indices, grid } => Payload::SparseQuantized {
                indices: indices.clone(),
                grid: grid.map(f),
            },
            Payload::LowRankQuantized {
                rows,
                cols,
                singular,
                grid,
            } => Payload::LowRankQuantized {
                rows: *rows,
                cols: *cols,
                singular: singular.iter().map(|&v| f(v)).collect(),
                grid: grid.map(f),
            },
        };
        Encoded { dim: self.dim, payload }
    }
}

impl EncodedMessage {
    /// Little-endian wire bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        wire::write(self)
    }

    /// Parses wire bytes produced under `spec`.
    pub fn from_bytes(spec: &CompressorSpec, bytes: &[u8]) -> Result<Self, CompressError> {
        let msg = wire::read(spec, bytes)?;
        check_message(spec, &msg)?;
        Ok(msg)
    }
}

fn check_finite<T: Scalar>(x: &[T]) -> Result<(), CompressError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(CompressError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Builds the payload in the working precision.
pub fn encode_exact<T: Scalar>(spec: &CompressorSpec, x: &[T]) -> Result<Encoded<T>, CompressError> {
    let d = x.len();
    spec.validate(d)?;
    check_finite(x)?;
    let payload = match spec {
        CompressorSpec::Identity => Payload::Dense { values: x.to_vec() },
        CompressorSpec::TopK { k } => {
            let (indices, values) = topk::select(x, *k);
            Payload::Sparse { indices, values }
        }
        CompressorSpec::UniformQuant { bits } => Payload::Quantized(QuantGrid::encode(x, *bits)),
        CompressorSpec::SvdLowRank { rank, .. } => {
            let shape = spec.reshape_for(d).expect("validated");
            Payload::LowRank(LowRankFactors::encode(x, shape, *rank)?)
        }
        CompressorSpec::Compose { inner, .. } => {
            let bits = spec.outer_bits().expect("validated");
            match inner.as_ref() {
                CompressorSpec::TopK { k } => {
                    let (indices, values) = topk::select(x, *k);
                    Payload::SparseQuantized {
                        indices,
                        grid: QuantGrid::encode(&values, bits),
                    }
                }
                CompressorSpec::SvdLowRank { rank, .. } => {
                    let shape = inner.reshape_for(d).expect("validated");
                    let lr = LowRankFactors::encode(x, shape, *rank)?;
                    let mut entries = lr.left.clone();
                    entries.extend_from_slice(&lr.right);
                    Payload::LowRankQuantized {
                        rows: lr.rows,
                        cols: lr.cols,
                        singular: lr.singular,
                        grid: QuantGrid::encode(&entries, bits),
                    }
                }
                _ => unreachable!("validated"),
            }
        }
    };
    Ok(Encoded { dim: d, payload })
}

/// Rebuilds the dense vector a payload describes.
pub fn reconstruct<T: Scalar>(msg: &Encoded<T>) -> Vec<T> {
    let d = msg.dim;
    match &msg.payload {
        Payload::Dense { values } => values.clone(),
        Payload::Sparse { indices, values } => topk::scatter(d, indices, values),
        Payload::Quantized(grid) => grid.decode(),
        Payload::LowRank(lr) => lr.reconstruct(d),
        Payload::SparseQuantized { indices, grid } => topk::scatter(d, indices, &grid.decode()),
        Payload::LowRankQuantized {
            rows,
            cols,
            singular,
            grid,
        } => {
            let mut entries = grid.decode();
            let right = entries.split_off(singular.len() * rows);
            LowRankFactors {
                rows: *rows,
                cols: *cols,
                singular: singular.clone(),
                left: entries,
                right,
            }
            .reconstruct(d)
        }
    }
}

/// Encoder: the uplink message for `x`.
pub fn encode<T: Scalar>(spec: &CompressorSpec, x: &[T]) -> Result<EncodedMessage, CompressError> {
    Ok(encode_exact(spec, x)?.map_values(T::to_f32_lossy))
}

/// Decoder.
pub fn decode<T: Scalar>(spec: &CompressorSpec, msg: &EncodedMessage) -> Result<Vec<T>, CompressError> {
    spec.validate(msg.dim)?;
    check_message(spec, msg)?;
    Ok(reconstruct(&msg.map_values(T::from_wire)))
}

/// The operator `C = D ∘ E` in the working precision.
pub fn compress<T: Scalar>(spec: &CompressorSpec, x: &[T]) -> Result<Vec<T>, CompressError> {
    if spec.is_identity() {
        spec.validate(x.len())?;
        check_finite(x)?;
        return Ok(x.to_vec());
    }
    Ok(reconstruct(&encode_exact(spec, x)?))
}

/// Exact wire size of a message.
pub fn payload_bytes<V: Copy>(msg: &Encoded<V>) -> usize {
    msg.byte_size()
}

/// Analytic contraction factor, when one is known.
///
/// Top-k: `1 − k/d`. Low-rank: `1 − rank/min(rows, cols)` (each discarded
/// singular value is at most the average). Identity: 0. Quantizers and
/// compositions have none.
pub fn omega_analytic<T: Scalar>(spec: &CompressorSpec, d: usize) -> Option<T> {
    if spec.validate(d).is_err() {
        return None;
    }
    match spec {
        CompressorSpec::Identity => Some(T::zero()),
        CompressorSpec::TopK { k } => Some(T::one() - T::from_usize_lossy(*k) / T::from_usize_lossy(d)),
        CompressorSpec::SvdLowRank { rank, .. } => {
            let shape = spec.reshape_for(d)?;
            Some(T::one() - T::from_usize_lossy(*rank) / T::from_usize_lossy(shape.min_side()))
        }
        CompressorSpec::UniformQuant { .. } | CompressorSpec::Compose { .. } => None,
    }
}

/// Empirical contraction factor: the worst `‖C(x) − x‖² / ‖x‖²` over
/// `n_samples` seeded standard-normal vectors.
pub fn omega_estimate<T: Scalar>(
    spec: &CompressorSpec,
    d: usize,
    n_samples: usize,
    seed: u64,
) -> Result<T, CompressError> {
    spec.validate(d)?;
    if n_samples == 0 {
        return Err(CompressError::InvalidSpec(
            "omega_estimate needs at least one sample".into(),
        ));
    }
    let mut rng = rng::stream(seed, "compressors/omega-estimate");
    let mut worst = T::zero();
    for _ in 0..n_samples {
        let x: Vec<T> = rng::normal_vector(&mut rng, d);
        let nx = crate::linalg::norm_sq(&x);
        if nx == T::zero() {
            continue;
        }
        let cx = compress(spec, &x)?;
        let err = crate::linalg::norm_sq(&crate::linalg::sub(&cx, &x));
        worst = worst.max(err / nx);
    }
    Ok(worst)
}

/// Structural validation of a message against the spec that should have
/// produced it.
fn check_message<V: Copy + PartialOrd>(spec: &CompressorSpec, msg: &Encoded<V>) -> Result<(), CompressError> {
    let d = msg.dim;
    let bad = |m: String| Err(CompressError::MalformedMessage(m));
    match (spec, &msg.payload) {
        (CompressorSpec::Identity, Payload::Dense { values }) => {
            if values.len() != d {
                return bad(format!("dense payload has {} values for dim {d}", values.len()));
            }
        }
        (CompressorSpec::TopK { k }, Payload::Sparse { indices, values }) => {
            if values.len() != indices.len() {
                return bad("index and value counts differ".into());
            }
            if indices.len() > *k {
                return bad(format!("{} indices exceed k={k}", indices.len()));
            }
            topk::check_indices(indices, d)?;
        }
        (CompressorSpec::UniformQuant { bits }, Payload::Quantized(grid)) => {
            grid.check(*bits, d)?;
        }
        (CompressorSpec::SvdLowRank { rank, .. }, Payload::LowRank(lr)) => {
            let shape = spec.reshape_for(d).expect("validated");
            lr.check(shape, *rank)?;
        }
        (CompressorSpec::Compose { inner, .. }, Payload::SparseQuantized { indices, grid }) => {
            let CompressorSpec::TopK { k } = inner.as_ref() else {
                return bad("sparse-quantized payload for a non top-k composition".into());
            };
            if indices.len() > *k {
                return bad(format!("{} indices exceed k={k}", indices.len()));
            }
            topk::check_indices(indices, d)?;
            grid.check(spec.outer_bits().expect("validated"), indices.len())?;
        }
        (
            CompressorSpec::Compose { inner, .. },
            Payload::LowRankQuantized {
                rows,
                cols,
                singular,
                grid,
            },
        ) => {
            let CompressorSpec::SvdLowRank { rank, .. } = inner.as_ref() else {
                return bad("low-rank-quantized payload for a non svd composition".into());
            };
            let shape = inner.reshape_for(d).expect("validated");
            if (*rows, *cols) != (shape.rows, shape.cols) {
                return bad("low-rank shape does not match the spec".into());
            }
            if singular.len() != *rank {
                return bad(format!("expected {rank} singular values, got {}", singular.len()));
            }
            grid.check(spec.outer_bits().expect("validated"), rank * (rows + cols))?;
        }
        _ => return bad(format!("payload kind does not match spec {}", spec.label())),
    }
    Ok(())
}
