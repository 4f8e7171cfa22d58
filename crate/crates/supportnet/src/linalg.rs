use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// CSR matrix for the large, mostly-selector layers produced by the grid
/// interpolant builders (a dense arrangement layer for a 2-D grid with N=92
/// would be tens of millions of zeros).
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Triplets may arrive in any order; duplicates are rejected rather than
    /// summed so a builder bug cannot silently change a weight.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut prev: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            if r >= nrows || c >= ncols {
                return Err(Error::invalid(format!(
                    "sparse entry ({r},{c}) outside {nrows}x{ncols}"
                )));
            }
            if prev == Some((r, c)) {
                return Err(Error::invalid(format!("duplicate sparse entry ({r},{c})")));
            }
            prev = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// out = A x + b, accumulating each row left to right in column order,
    /// exactly like the dense path.
    pub fn mul_vec_into(&self, x: &DVector<f64>, b: &DVector<f64>, out: &mut DVector<f64>) {
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            out[r] = acc + b[r];
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Layer weights, dense or CSR. A sparse layer with k nonzeros skips the
/// zero products entirely; because every dropped term is an exact floating
/// point zero times a finite value, the accumulated row sums are equal in
/// value to the dense ones (only the sign of a zero can differ).
#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    Dense(DMatrix<f64>),
    Sparse(SparseMatrix),
}

impl Weights {
    pub fn nrows(&self) -> usize {
        match self {
            Weights::Dense(m) => m.nrows(),
            Weights::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Weights::Dense(m) => m.ncols(),
            Weights::Sparse(m) => m.ncols(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Weights::Dense(m) => m.len(),
            Weights::Sparse(m) => m.nnz(),
        }
    }

    pub fn apply_into(&self, x: &DVector<f64>, b: &DVector<f64>, out: &mut DVector<f64>) {
        match self {
            Weights::Dense(m) => {
                for r in 0..m.nrows() {
                    let mut acc = 0.0;
                    for c in 0..m.ncols() {
                        acc += m[(r, c)] * x[c];
                    }
                    out[r] = acc + b[r];
                }
            }
            Weights::Sparse(m) => m.mul_vec_into(x, b, out),
        }
    }

    pub fn iter_values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            Weights::Dense(m) => Box::new(m.iter().copied()),
            Weights::Sparse(m) => Box::new(m.values().iter().copied()),
        }
    }
}

/// Pairwise (cascade) summation: deterministic, order-stable, and with error
/// growing like log(n) rather than n.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Streaming pairwise accumulator (binary counter of partial sums) so tensor
/// grids never need all values in memory at once. Matches pairwise_sum
/// exactly when the count is a power of two and uses the same cascade
/// structure otherwise.
#[derive(Default)]
pub struct PairwiseAccumulator {
    levels: Vec<Option<f64>>,
    count: u64,
}

impl PairwiseAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, v: f64) {
        let mut carry = v;
        for level in self.levels.iter_mut() {
            match level.take() {
                None => {
                    *level = Some(carry);
                    self.count += 1;
                    return;
                }
                Some(prev) => carry = prev + carry,
            }
        }
        self.levels.push(Some(carry));
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> f64 {
        let mut acc = 0.0;
        for v in self.levels.iter().flatten() {
            acc += v;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_matches_dense_product() {
        let trips = vec![(0, 1, 2.0), (2, 0, -1.0), (2, 3, 4.0)];
        let s = SparseMatrix::from_triplets(3, 4, &trips).unwrap();
        let d = s.to_dense();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let b = DVector::from_vec(vec![0.5, 0.0, -0.5]);
        let mut out_s = DVector::zeros(3);
        let mut out_d = DVector::zeros(3);
        s.mul_vec_into(&x, &b, &mut out_s);
        Weights::Dense(d).apply_into(&x, &b, &mut out_d);
        assert_eq!(out_s, out_d);
    }

    #[test]
    fn csr_rejects_duplicates_and_out_of_range() {
        assert!(SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn pairwise_sum_handles_sizes() {
        for n in [0usize, 1, 7, 8, 9, 100, 1024] {
            let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let expect = (n * n.saturating_sub(1) / 2) as f64;
            assert_eq!(pairwise_sum(&xs), expect);
        }
    }

    #[test]
    fn streaming_accumulator_agrees() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 101) as f64 * 0.125).collect();
        let mut acc = PairwiseAccumulator::new();
        for &x in &xs {
            acc.push(x);
        }
        // both are exact here: sums of small multiples of 1/8 fit in f64
        assert_eq!(acc.sum(), xs.iter().sum::<f64>());
        assert_eq!(acc.count(), 1000);
    }
}
