use super::{CompressError, ReshapeRule};
use crate::linalg::{Matrix, Svd};
use crate::scalar::Scalar;

/// Truncated SVD of the reshaped vector. Factor `j` occupies
/// `left[j*rows..(j+1)*rows]` and `right[j*cols..(j+1)*cols]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors<V> {
    pub rows: usize,
    pub cols: usize,
    pub singular: Vec<V>,
    pub left: Vec<V>,
    pub right: Vec<V>,
}

impl<T: Scalar> LowRankFactors<T> {
    pub fn encode(x: &[T], shape: ReshapeRule, rank: usize) -> Result<Self, CompressError> {
        let mut data = vec![T::zero(); shape.capacity()];
        data[..x.len()].copy_from_slice(x);
        let m = Matrix::from_row_major(shape.rows, shape.cols, data);
        let svd = Svd::new(&m).map_err(|e| CompressError::Numerical(e.to_string()))?;
        let mut left = Vec::with_capacity(rank * shape.rows);
        let mut right = Vec::with_capacity(rank * shape.cols);
        for j in 0..rank {
            left.extend((0..shape.rows).map(|i| svd.u[(i, j)]));
            right.extend((0..shape.cols).map(|i| svd.v[(i, j)]));
        }
        Ok(Self {
            rows: shape.rows,
            cols: shape.cols,
            singular: svd.singular_values[..rank].to_vec(),
            left,
            right,
        })
    }

    /// Rank-r matrix flattened row-major, padding stripped.
    pub fn reconstruct(&self, d: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows * self.cols];
        for (j, &s) in self.singular.iter().enumerate() {
            let u = &self.left[j * self.rows..(j + 1) * self.rows];
            let v = &self.right[j * self.cols..(j + 1) * self.cols];
            for (i, &ui) in u.iter().enumerate() {
                let a = s * ui;
                let row = &mut out[i * self.cols..(i + 1) * self.cols];
                for (o, &vj) in row.iter_mut().zip(v) {
                    *o = *o + a * vj;
                }
            }
        }
        out.truncate(d);
        out
    }
}

impl<V: Copy> LowRankFactors<V> {
    pub fn map<W>(&self, f: impl Fn(V) -> W + Copy) -> LowRankFactors<W> {
        LowRankFactors {
            rows: self.rows,
            cols: self.cols,
            singular: self.singular.iter().map(|&v| f(v)).collect(),
            left: self.left.iter().map(|&v| f(v)).collect(),
            right: self.right.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(super) fn check(&self, shape: ReshapeRule, rank: usize) -> Result<(), CompressError> {
        if (self.rows, self.cols) != (shape.rows, shape.cols) {
            return Err(CompressError::MalformedMessage(
                "low-rank shape does not match the spec".into(),
            ));
        }
        if self.singular.len() != rank || self.left.len() != rank * self.rows || self.right.len() != rank * self.cols {
            return Err(CompressError::MalformedMessage(format!(
                "low-rank factor lengths inconsistent with rank {rank}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rank_reconstructs_exactly() {
        let x = [1.0f64, 2.0, 3.0, 4.0, 5.0];
        let shape = ReshapeRule::near_square(5);
        let lr = LowRankFactors::encode(&x, shape, shape.min_side()).unwrap();
        for (a, b) in lr.reconstruct(5).iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_matrix_is_kept_exactly_at_rank_one() {
        // outer product [1,2] x [3,4,5]
        let x = [3.0f64, 4.0, 5.0, 6.0, 8.0, 10.0];
        let lr = LowRankFactors::encode(&x, ReshapeRule { rows: 2, cols: 3 }, 1).unwrap();
        for (a, b) in lr.reconstruct(6).iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
