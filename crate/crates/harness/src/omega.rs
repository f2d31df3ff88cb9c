//! Compressor shorthand for the command line and contraction-factor reports.

use cafe_core::{omega_analytic, omega_estimate, CompressorSpec};
use serde::Serialize;

use crate::error::HarnessError;

fn bad(text: &str, why: &str) -> HarnessError {
    HarnessError::Config {
        field: "compressor".into(),
        message: format!("`{text}`: {why}; expected identity, topk:K, svd:R, quant:B or topk:K+quant:B"),
    }
}

fn parse_atom(text: &str) -> Result<CompressorSpec, HarnessError> {
    if text == "identity" {
        return Ok(CompressorSpec::Identity);
    }
    let (kind, arg) = text.split_once(':').ok_or_else(|| bad(text, "missing parameter"))?;
    match kind {
        "topk" => arg
            .parse()
            .map(CompressorSpec::top_k)
            .map_err(|_| bad(text, "k is not an integer")),
        "svd" => arg
            .parse()
            .map(CompressorSpec::svd)
            .map_err(|_| bad(text, "rank is not an integer")),
        "quant" => arg
            .parse()
            .map(CompressorSpec::quant)
            .map_err(|_| bad(text, "bits is not an integer")),
        _ => Err(bad(text, "unknown compressor")),
    }
}

/// Parses `identity`, `topk:K`, `svd:R`, `quant:B`, or an inner compressor
/// followed by `+quant:B`.
pub fn parse_compressor(text: &str) -> Result<CompressorSpec, HarnessError> {
    let text = text.trim();
    match text.split_once('+') {
        None => parse_atom(text),
        Some((inner, outer)) => match parse_atom(outer)? {
            CompressorSpec::UniformQuant { bits } => Ok(CompressorSpec::quantized(parse_atom(inner)?, bits)),
            _ => Err(bad(text, "only quant:B may follow `+`")),
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OmegaReport {
    pub compressor: String,
    pub dim: usize,
    pub analytic: Option<f64>,
    pub estimate: f64,
    pub samples: usize,
    pub seed: u64,
}

pub fn estimate(spec: &CompressorSpec, dim: usize, samples: usize, seed: u64) -> Result<OmegaReport, HarnessError> {
    spec.validate(dim)?;
    Ok(OmegaReport {
        compressor: spec.label(),
        dim,
        analytic: omega_analytic::<f64>(spec, dim),
        estimate: omega_estimate::<f64>(spec, dim, samples, seed)?,
        samples,
        seed,
    })
}
