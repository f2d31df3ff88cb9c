use std::cmp::Ordering;

use super::CompressError;
use crate::scalar::Scalar;

/// The `k` largest-magnitude coordinates, ties going to the lower index.
///
/// Returned indices are strictly increasing. Retained coordinates that are
/// exactly zero are dropped, so the zero vector yields an empty support.
pub(super) fn select<T: Scalar>(x: &[T], k: usize) -> (Vec<u32>, Vec<T>) {
    let k = k.min(x.len());
    let mut order: Vec<usize> = (0..x.len()).collect();
    let by_magnitude = |&i: &usize, &j: &usize| {
        x[j].abs()
            .partial_cmp(&x[i].abs())
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    };
    if k < x.len() && k > 0 {
        order.select_nth_unstable_by(k - 1, by_magnitude);
    }
    let mut kept: Vec<usize> = order.into_iter().take(k).filter(|&i| x[i] != T::zero()).collect();
    kept.sort_unstable();
    let values = kept.iter().map(|&i| x[i]).collect();
    (kept.into_iter().map(|i| i as u32).collect(), values)
}

pub(super) fn scatter<T: Scalar>(d: usize, indices: &[u32], values: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); d];
    for (&i, &v) in indices.iter().zip(values) {
        out[i as usize] = v;
    }
    out
}

pub(super) fn check_indices(indices: &[u32], d: usize) -> Result<(), CompressError> {
    for w in indices.windows(2) {
        if w[0] >= w[1] {
            return Err(CompressError::MalformedMessage(
                "sparse indices are not strictly increasing".into(),
            ));
        }
    }
    if let Some(&last) = indices.last() {
        if last as usize >= d {
            return Err(CompressError::MalformedMessage(format!(
                "sparse index {last} out of range for dim {d}"
            )));
        }
    }
    Ok(())
}
