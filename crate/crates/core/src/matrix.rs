//! Dense row-major matrices over a prime field.
//!
//! Vectors are `n x 1` matrices. Everything here is exact; pivots are the
//! first nonzero entry in a column, since magnitude means nothing in GF(q).

use std::fmt;

use rand::Rng;

use crate::error::{AceError, Result};
use crate::gf::{Field, FieldElement};

/// Rejection attempts before [`Matrix::sample_full_rank`] gives up.
pub const REJECTION_CAP: usize = 256;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<u32>,
    field: Field,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix<{}x{} over {}>", self.rows, self.cols, self.field)?;
        let rows: Vec<&[u32]> = self.data.chunks(self.cols.max(1)).collect();
        write!(f, "{rows:?}")
    }
}

impl Matrix {
    pub fn zeros(field: Field, rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0; rows * cols],
            field,
        }
    }

    pub fn identity(field: Field, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from row-major residues, rejecting out-of-range values.
    pub fn from_vec(field: Field, rows: usize, cols: usize, data: Vec<u32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(AceError::DimensionError(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(AceError::DimensionError(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| v >= field.modulus()) {
            return Err(AceError::InvalidArgument(format!(
                "entry {bad} is not reduced modulo {}",
                field.modulus()
            )));
        }
        Ok(Matrix {
            rows,
            cols,
            data,
            field,
        })
    }

    /// Convenience constructor; entries are reduced modulo q.
    pub fn from_rows(field: Field, rows: &[&[u64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AceError::DimensionError("ragged rows".into()));
        }
        let q = field.modulus() as u64;
        let data = rows
            .iter()
            .flat_map(|r| r.iter().map(move |&v| (v % q) as u32))
            .collect();
        Self::from_vec(field, rows.len(), cols, data)
    }

    /// Column vector from residues (reduced modulo q).
    pub fn column(field: Field, entries: &[u64]) -> Result<Self> {
        let q = field.modulus() as u64;
        Self::from_vec(
            field,
            entries.len(),
            1,
            entries.iter().map(|&v| (v % q) as u32).collect(),
        )
    }

    /// The `i`-th standard basis column of length `n`.
    pub fn basis_vector(field: Field, n: usize, i: usize) -> Self {
        let mut v = Self::zeros(field, n, 1);
        v.data[i] = 1;
        v
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn field(&self) -> Field {
        self.field
    }

    /// Row-major residues.
    #[inline]
    pub fn data(&self) -> &[u32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }

    pub fn element(&self, r: usize, c: usize) -> FieldElement {
        self.field.element(self.get(r, c) as u64)
    }

    pub fn set(&mut self, r: usize, c: usize, value: u32) {
        assert!(value < self.field.modulus());
        self.data[r * self.cols + c] = value;
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn is_identity(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|r| (0..self.cols).all(|c| self.get(r, c) == u32::from(r == c)))
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.field, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    fn check_field(&self, other: &Matrix) -> Result<()> {
        if self.field != other.field {
            return Err(AceError::ParamsMismatch {
                left: self.field.modulus(),
                right: other.field.modulus(),
            });
        }
        Ok(())
    }

    pub fn mul(&self, rhs: &Matrix) -> Result<Matrix> {
        self.check_field(rhs)?;
        if self.cols != rhs.rows {
            return Err(AceError::DimensionError(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(self.mul_unchecked(rhs))
    }

    /// Product without shape checks; accumulates in u64 and reduces lazily.
    pub(crate) fn mul_unchecked(&self, rhs: &Matrix) -> Matrix {
        let q = self.field.modulus() as u64;
        // Each term is < 2^62, so at most 3 terms fit below 2^64 before a reduction.
        let fold = if q < (1 << 16) { usize::MAX } else { 3 };
        let mut out = Matrix::zeros(self.field, self.rows, rhs.cols);
        let mut acc = vec![0u64; rhs.cols];
        for r in 0..self.rows {
            acc.iter_mut().for_each(|a| *a = 0);
            let lhs_row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == 0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (slot, &b) in acc.iter_mut().zip(rhs_row) {
                    *slot += a as u64 * b as u64;
                }
                if (k + 1) % fold == 0 {
                    acc.iter_mut().for_each(|a| *a %= q);
                }
            }
            for (dst, a) in out.data[r * rhs.cols..(r + 1) * rhs.cols]
                .iter_mut()
                .zip(&acc)
            {
                *dst = (a % q) as u32;
            }
        }
        out
    }

    /// Rank by Gaussian elimination.
    pub fn rank(&self) -> usize {
        let mut work = self.data.clone();
        row_reduce(self.field, &mut work, self.rows, self.cols, self.cols)
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.rows.min(self.cols)
    }

    /// Inverse by Gauss-Jordan elimination on `[A | I]`.
    pub fn inverse(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(AceError::DimensionError(format!(
                "cannot invert a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let width = 2 * n;
        let mut work = vec![0u32; n * width];
        for r in 0..n {
            work[r * width..r * width + n].copy_from_slice(&self.data[r * n..(r + 1) * n]);
            work[r * width + n + r] = 1;
        }
        if row_reduce(self.field, &mut work, n, width, n) < n {
            return Err(AceError::Singular);
        }
        let mut inv = Matrix::zeros(self.field, n, n);
        for r in 0..n {
            inv.data[r * n..(r + 1) * n].copy_from_slice(&work[r * width + n..(r + 1) * width]);
        }
        Ok(inv)
    }

    /// Sub-block `rows x cols` starting at `(r0, c0)`.
    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Result<Matrix> {
        if r0 + rows > self.rows || c0 + cols > self.cols || rows == 0 || cols == 0 {
            return Err(AceError::DimensionError(format!(
                "block {rows}x{cols} at ({r0},{c0}) outside {}x{}",
                self.rows, self.cols
            )));
        }
        let mut out = Matrix::zeros(self.field, rows, cols);
        for r in 0..rows {
            let src = (r0 + r) * self.cols + c0;
            out.data[r * cols..(r + 1) * cols].copy_from_slice(&self.data[src..src + cols]);
        }
        Ok(out)
    }

    /// Block composition of a grid of matrices.
    pub fn block(grid: &[&[&Matrix]]) -> Result<Matrix> {
        let first = grid
            .first()
            .and_then(|row| row.first())
            .ok_or_else(|| AceError::DimensionError("empty block grid".into()))?;
        let field = first.field;
        let ncols = grid[0].len();
        let widths: Vec<usize> = grid[0].iter().map(|m| m.cols).collect();
        let mut heights = Vec::with_capacity(grid.len());
        for (i, row) in grid.iter().enumerate() {
            if row.len() != ncols {
                return Err(AceError::DimensionError(format!(
                    "block row {i} has {} blocks, expected {ncols}",
                    row.len()
                )));
            }
            let h = row[0].rows;
            for (j, m) in row.iter().enumerate() {
                first.check_field(m)?;
                if m.rows != h || m.cols != widths[j] {
                    return Err(AceError::DimensionError(format!(
                        "block ({i},{j}) is {}x{}, expected {h}x{}",
                        m.rows, m.cols, widths[j]
                    )));
                }
            }
            heights.push(h);
        }
        let total_rows: usize = heights.iter().sum();
        let total_cols: usize = widths.iter().sum();
        let mut out = Matrix::zeros(field, total_rows, total_cols);
        let mut r0 = 0;
        for (row, &h) in grid.iter().zip(&heights) {
            let mut c0 = 0;
            for m in row.iter() {
                for r in 0..h {
                    let dst = (r0 + r) * total_cols + c0;
                    out.data[dst..dst + m.cols]
                        .copy_from_slice(&m.data[r * m.cols..(r + 1) * m.cols]);
                }
                c0 += m.cols;
            }
            r0 += h;
        }
        Ok(out)
    }

    pub fn hstack(left: &Matrix, right: &Matrix) -> Result<Matrix> {
        Self::block(&[&[left, right]])
    }

    pub fn vstack(top: &Matrix, bottom: &Matrix) -> Result<Matrix> {
        Self::block(&[&[top], &[bottom]])
    }

    /// Matrix with i.i.d. uniform entries.
    pub fn sample_uniform<R: Rng + ?Sized>(
        rng: &mut R,
        rows: usize,
        cols: usize,
        field: Field,
    ) -> Matrix {
        let data = (0..rows * cols).map(|_| field.sample_raw(rng)).collect();
        Matrix {
            rows,
            cols,
            data,
            field,
        }
    }

    /// Uniform full-rank matrix by rejection.
    pub fn sample_full_rank<R: Rng + ?Sized>(
        rng: &mut R,
        rows: usize,
        cols: usize,
        field: Field,
    ) -> Result<Matrix> {
        for _ in 0..REJECTION_CAP {
            let m = Self::sample_uniform(rng, rows, cols, field);
            if m.is_full_rank() {
                return Ok(m);
            }
        }
        Err(AceError::SamplingFailure(REJECTION_CAP))
    }

    /// Uniform nonzero column vector of length `n`.
    pub fn sample_nonzero_vector<R: Rng + ?Sized>(rng: &mut R, n: usize, field: Field) -> Matrix {
        assert!(n >= 1, "vector length must be positive");
        loop {
            let v = Self::sample_uniform(rng, n, 1, field);
            if !v.is_zero() {
                return v;
            }
        }
    }

    /// Invertible `n x n` matrix whose first `L` columns are `self` (`n x L`,
    /// full column rank), completed with the earliest standard basis columns
    /// that keep the rank growing.
    pub fn complete_columns(&self) -> Result<Matrix> {
        let (n, l) = (self.rows, self.cols);
        if l > n || self.rank() != l {
            return Err(AceError::InvalidArgument(
                "columns to complete must be linearly independent".into(),
            ));
        }
        let mut cols: Vec<Matrix> = (0..l)
            .map(|c| self.submatrix(0, c, n, 1).expect("in range"))
            .collect();
        for i in 0..n {
            if cols.len() == n {
                break;
            }
            let mut trial = cols.clone();
            trial.push(Matrix::basis_vector(self.field, n, i));
            let refs: Vec<&Matrix> = trial.iter().collect();
            if Matrix::block(&[&refs])?.rank() == trial.len() {
                cols = trial;
            }
        }
        let refs: Vec<&Matrix> = cols.iter().collect();
        Matrix::block(&[&refs])
    }

    /// Row analogue of [`Matrix::complete_columns`].
    pub fn complete_rows(&self) -> Result<Matrix> {
        Ok(self.transpose().complete_columns()?.transpose())
    }
}

/// Reduces the first `pivot_cols` columns of a row-major `rows x width`
/// buffer to reduced row echelon form, applying the same operations to the
/// remaining columns. Returns the number of pivots found.
fn row_reduce(field: Field, m: &mut [u32], rows: usize, width: usize, pivot_cols: usize) -> usize {
    let mut rank = 0;
    for col in 0..pivot_cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&r| m[r * width + col] != 0) else {
            continue;
        };
        if p != rank {
            for c in 0..width {
                m.swap(p * width + c, rank * width + c);
            }
        }
        let inv = field.inv(m[rank * width + col]).expect("pivot is nonzero");
        for c in col..width {
            m[rank * width + c] = field.mul(m[rank * width + c], inv);
        }
        for r in 0..rows {
            if r == rank {
                continue;
            }
            let factor = m[r * width + col];
            if factor == 0 {
                continue;
            }
            for c in col..width {
                let sub = field.mul(factor, m[rank * width + c]);
                m[r * width + c] = field.sub(m[r * width + c], sub);
            }
        }
        rank += 1;
    }
    rank
}

/// Every `rows x cols` matrix over `field`, in base-q odometer order
/// (last entry varies fastest).
pub fn all_matrices(field: Field, rows: usize, cols: usize) -> impl Iterator<Item = Matrix> {
    let len = rows * cols;
    let q = field.modulus();
    let total = (q as u128)
        .checked_pow(len as u32)
        .expect("enumeration size overflows");
    let mut digits = vec![0u32; len];
    (0..total).map(move |i| {
        if i > 0 {
            for d in digits.iter_mut().rev() {
                *d += 1;
                if *d < q {
                    break;
                }
                *d = 0;
            }
        }
        Matrix {
            rows,
            cols,
            data: digits.clone(),
            field,
        }
    })
}

/// All full-rank `rows x cols` matrices, in [`all_matrices`] order.
pub fn full_rank_matrices(field: Field, rows: usize, cols: usize) -> Vec<Matrix> {
    all_matrices(field, rows, cols)
        .filter(Matrix::is_full_rank)
        .collect()
}

/// `|FR(F^{rows x cols})| = prod_{i=0}^{k-1} (q^m - q^i)` with `k = min`, `m = max`.
pub fn count_full_rank(q: u64, rows: usize, cols: usize) -> u128 {
    let (k, m) = (rows.min(cols) as u32, rows.max(cols) as u32);
    let q = q as u128;
    (0..k).fold(1u128, |acc, i| {
        acc.saturating_mul(q.saturating_pow(m) - q.pow(i))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::seeded_rng;

    fn f(q: u64) -> Field {
        Field::new(q).unwrap()
    }

    #[test]
    fn identity_product() {
        let field = f(7);
        let mut rng = seeded_rng(3);
        let a = Matrix::sample_uniform(&mut rng, 3, 4, field);
        assert_eq!(Matrix::identity(field, 3).mul(&a).unwrap(), a);
    }

    #[test]
    fn binary_involution() {
        let field = f(2);
        let a = Matrix::from_rows(field, &[&[1, 1], &[0, 1]]).unwrap();
        assert!(a.mul(&a).unwrap().is_identity());
        assert_eq!(a.inverse().unwrap(), a);
    }

    #[test]
    fn associativity_q7() {
        let field = f(7);
        let mut rng = seeded_rng(5);
        for _ in 0..50 {
            let a = Matrix::sample_uniform(&mut rng, 4, 4, field);
            let b = Matrix::sample_uniform(&mut rng, 4, 4, field);
            let c = Matrix::sample_uniform(&mut rng, 4, 4, field);
            let lhs = a.mul(&b).unwrap().mul(&c).unwrap();
            let rhs = a.mul(&b.mul(&c).unwrap()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn large_modulus_products_reduce_correctly() {
        let field = f(2_147_483_647);
        let mut rng = seeded_rng(6);
        let a = Matrix::sample_uniform(&mut rng, 5, 7, field);
        let b = Matrix::sample_uniform(&mut rng, 7, 2, field);
        let p = a.mul(&b).unwrap();
        for r in 0..5 {
            for c in 0..2 {
                let mut acc = 0u128;
                for k in 0..7 {
                    acc += a.get(r, k) as u128 * b.get(k, c) as u128;
                }
                assert_eq!(p.get(r, c) as u128, acc % 2_147_483_647);
            }
        }
    }

    #[test]
    fn shape_and_field_errors() {
        let a = Matrix::zeros(f(7), 2, 3);
        let b = Matrix::zeros(f(7), 2, 3);
        assert!(matches!(a.mul(&b), Err(AceError::DimensionError(_))));
        let c = Matrix::zeros(f(5), 3, 3);
        assert!(matches!(a.mul(&c), Err(AceError::ParamsMismatch { .. })));
        assert!(matches!(a.inverse(), Err(AceError::DimensionError(_))));
    }

    #[test]
    fn inverse_of_identity_and_random() {
        let field = f(257);
        assert!(Matrix::identity(field, 4).inverse().unwrap().is_identity());
        let mut rng = seeded_rng(7);
        for _ in 0..20 {
            let a = Matrix::sample_full_rank(&mut rng, 5, 5, field).unwrap();
            let inv = a.inverse().unwrap();
            assert!(a.mul(&inv).unwrap().is_identity());
            assert!(inv.mul(&a).unwrap().is_identity());
        }
    }

    #[test]
    fn singular_detection() {
        let field = f(3);
        let a = Matrix::from_rows(field, &[&[1, 2], &[2, 1]]).unwrap();
        // det = 1 - 4 = -3 = 0 mod 3
        assert_eq!(a.rank(), 1);
        assert_eq!(a.inverse(), Err(AceError::Singular));
    }

    #[test]
    fn rank_examples() {
        let field = f(5);
        assert_eq!(
            Matrix::from_rows(field, &[&[1, 0], &[0, 0]])
                .unwrap()
                .rank(),
            1
        );
        assert_eq!(Matrix::zeros(field, 3, 4).rank(), 0);
    }

    #[test]
    fn gl3_over_gf2_has_168_elements() {
        let field = f(2);
        let total = all_matrices(field, 3, 3).count();
        let invertible = all_matrices(field, 3, 3).filter(|m| m.rank() == 3).count();
        assert_eq!(total, 512);
        assert_eq!(invertible, (8 - 1) * (8 - 2) * (8 - 4));
        assert_eq!(count_full_rank(2, 3, 3), 168);
    }

    #[test]
    fn full_rank_counts_match_formula() {
        for (q, r, c) in [
            (2, 2, 2),
            (3, 2, 2),
            (2, 3, 1),
            (3, 1, 3),
            (2, 2, 3),
            (3, 3, 2),
        ] {
            let field = f(q);
            assert_eq!(
                full_rank_matrices(field, r, c).len() as u128,
                count_full_rank(q, r, c),
                "q={q} {r}x{c}"
            );
        }
    }

    #[test]
    fn block_composition() {
        let field = f(7);
        let one = Matrix::identity(field, 1);
        let t = Matrix::from_rows(field, &[&[3, 4]]).unwrap();
        assert_eq!(
            Matrix::hstack(&one, &t).unwrap(),
            Matrix::from_rows(field, &[&[1, 3, 4]]).unwrap()
        );
        let stacked =
            Matrix::vstack(&Matrix::identity(field, 2), &Matrix::zeros(field, 1, 2)).unwrap();
        assert_eq!(
            stacked,
            Matrix::from_rows(field, &[&[1, 0], &[0, 1], &[0, 0]]).unwrap()
        );
        let bad = Matrix::hstack(&one, &Matrix::zeros(field, 2, 1));
        assert!(matches!(bad, Err(AceError::DimensionError(_))));
    }

    #[test]
    fn block_triangular_invertibility() {
        let field = f(3);
        let mut rng = seeded_rng(8);
        let id = Matrix::identity(field, 1);
        let zero = Matrix::zeros(field, 2, 1);
        for _ in 0..200 {
            let t = Matrix::sample_uniform(&mut rng, 1, 2, field);
            let z = Matrix::sample_uniform(&mut rng, 2, 2, field);
            let b = Matrix::block(&[&[&id, &t], &[&zero, &z]]).unwrap();
            assert_eq!(b.inverse().is_ok(), z.rank() == 2);
        }
    }

    #[test]
    fn full_rank_sampler_output() {
        let field = f(2);
        let mut rng = seeded_rng(9);
        for (r, c) in [(3, 3), (1, 3), (3, 1), (2, 5)] {
            for _ in 0..50 {
                let m = Matrix::sample_full_rank(&mut rng, r, c, field).unwrap();
                assert_eq!(m.rank(), r.min(c));
            }
        }
    }

    #[test]
    fn full_rank_acceptance_rate_gf2() {
        // prod_{i=1}^{3} (1 - 2^-i) = 21/64
        let field = f(2);
        let mut rng = seeded_rng(10);
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| Matrix::sample_uniform(&mut rng, 3, 3, field).is_full_rank())
            .count();
        let rate = hits as f64 / trials as f64;
        assert!((rate - 21.0 / 64.0).abs() <= 0.005, "rate {rate}");
    }

    #[test]
    fn nonzero_vectors() {
        let field = f(2);
        let mut rng = seeded_rng(11);
        for _ in 0..100 {
            let v = Matrix::sample_nonzero_vector(&mut rng, 1, field);
            assert_eq!(v.data(), &[1]);
        }
        let mut counts = [0i64; 8];
        for _ in 0..70_000 {
            let v = Matrix::sample_nonzero_vector(&mut rng, 3, field);
            assert!(!v.is_zero());
            let idx = v.data().iter().fold(0usize, |acc, &b| acc * 2 + b as usize);
            counts[idx] += 1;
        }
        assert_eq!(counts[0], 0);
        for c in &counts[1..] {
            assert!((c - 10_000).abs() <= 400, "counts {counts:?}");
        }
    }

    #[test]
    fn completion_is_invertible_and_extends() {
        let field = f(3);
        let mut rng = seeded_rng(12);
        for _ in 0..50 {
            let v = Matrix::sample_full_rank(&mut rng, 4, 2, field).unwrap();
            let s = v.complete_columns().unwrap();
            assert_eq!(s.rank(), 4);
            assert_eq!(s.submatrix(0, 0, 4, 2).unwrap(), v);
            let w = v.transpose();
            let sr = w.complete_rows().unwrap();
            assert_eq!(sr.submatrix(0, 0, 2, 4).unwrap(), w);
        }
    }
}
