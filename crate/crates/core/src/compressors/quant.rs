use super::CompressError;
use crate::scalar::Scalar;

/// Per-message min-max uniform grid with `2^bits` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantGrid<V> {
    pub lo: V,
    pub hi: V,
    pub bits: u8,
    pub codes: Vec<u16>,
}

#[inline]
fn max_code(bits: u8) -> u32 {
    (1u32 << bits) - 1
}

impl<T: Scalar> QuantGrid<T> {
    /// Codes are `round((v − lo) / step)`, rounding half away from zero, with
    /// `step = (hi − lo) / (2^bits − 1)`. An empty or constant input gives a
    /// zero-width grid.
    pub fn encode(values: &[T], bits: u8) -> Self {
        if values.is_empty() {
            return Self {
                lo: T::zero(),
                hi: T::zero(),
                bits,
                codes: Vec::new(),
            };
        }
        let lo = values.iter().copied().fold(T::infinity(), T::min);
        let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
        let top = max_code(bits);
        let codes = if hi == lo {
            vec![0; values.len()]
        } else {
            let step = (hi - lo) / T::lit(f64::from(top));
            values
                .iter()
                .map(|&v| {
                    let c = ((v - lo) / step).round().to_f64_lossy();
                    c.clamp(0.0, f64::from(top)) as u16
                })
                .collect()
        };
        Self { lo, hi, bits, codes }
    }

    pub fn decode(&self) -> Vec<T> {
        let top = max_code(self.bits);
        if self.hi == self.lo {
            return vec![self.lo; self.codes.len()];
        }
        let step = (self.hi - self.lo) / T::lit(f64::from(top));
        self.codes
            .iter()
            .map(|&c| {
                if u32::from(c) >= top {
                    self.hi
                } else {
                    (self.lo + T::lit(f64::from(c)) * step).min(self.hi).max(self.lo)
                }
            })
            .collect()
    }
}

impl<V: Copy> QuantGrid<V> {
    pub fn map<W>(&self, f: impl Fn(V) -> W) -> QuantGrid<W> {
        QuantGrid {
            lo: f(self.lo),
            hi: f(self.hi),
            bits: self.bits,
            codes: self.codes.clone(),
        }
    }

    pub(super) fn check(&self, bits: u8, count: usize) -> Result<(), CompressError>
    where
        V: PartialOrd,
    {
        if self.bits != bits {
            return Err(CompressError::MalformedMessage(format!(
                "grid has {} bits, spec says {bits}",
                self.bits
            )));
        }
        if self.codes.len() != count {
            return Err(CompressError::MalformedMessage(format!(
                "expected {count} codes, got {}",
                self.codes.len()
            )));
        }
        if !(self.lo <= self.hi) {
            return Err(CompressError::MalformedMessage("grid has lo > hi".into()));
        }
        let top = max_code(bits);
        if let Some(&c) = self.codes.iter().find(|&&c| u32::from(c) > top) {
            return Err(CompressError::MalformedMessage(format!(
                "code {c} overflows a {bits}-bit grid"
            )));
        }
        Ok(())
    }
}
