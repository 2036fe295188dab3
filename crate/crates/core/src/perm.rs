//! Index bookkeeping for vectorized matrices: the perfect shuffle, the skew
//! basis and the block-vectorization map for `A = [[Omega, -K^T], [K, 0]]`.
//!
//! `vec` stacks columns, so entry `(i, j)` of an `r x c` matrix sits at
//! index `i + j r`.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::linalg::{Mat, Vector};

/// A permutation acting on vectors by `out[i] = in[src[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    src: Vec<usize>,
}

impl Permutation {
    pub fn from_sources(src: Vec<usize>) -> Result<Self> {
        let mut seen = alloc::vec![false; src.len()];
        for &s in &src {
            if s >= src.len() || seen[s] {
                return Err(invalid("not a permutation"));
            }
            seen[s] = true;
        }
        Ok(Self { src })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn sources(&self) -> &[usize] {
        &self.src
    }

    pub fn inverse(&self) -> Self {
        let mut inv = alloc::vec![0; self.src.len()];
        for (i, &s) in self.src.iter().enumerate() {
            inv[s] = i;
        }
        Self { src: inv }
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        assert_eq!(v.len(), self.len());
        Vector::from_fn(self.len(), |i, _| v[self.src[i]])
    }

    /// `P M`.
    pub fn apply_rows(&self, m: &Mat) -> Mat {
        assert_eq!(m.nrows(), self.len());
        Mat::from_fn(self.len(), m.ncols(), |i, j| m[(self.src[i], j)])
    }

    /// `M P`.
    pub fn apply_cols(&self, m: &Mat) -> Mat {
        assert_eq!(m.ncols(), self.len());
        let mut out = Mat::zeros(m.nrows(), self.len());
        for (i, &s) in self.src.iter().enumerate() {
            out.column_mut(s).copy_from(&m.column(i));
        }
        out
    }

    pub fn to_dense(&self) -> Mat {
        let mut out = Mat::zeros(self.len(), self.len());
        for (i, &s) in self.src.iter().enumerate() {
            out[(i, s)] = 1.0;
        }
        out
    }
}

/// Perfect shuffle `Pi_{r,c}` with `vec(X^T) = Pi vec(X)` for `X` of size `r x c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShuffleMap {
    rows: usize,
    cols: usize,
    perm: Permutation,
}

impl ShuffleMap {
    pub fn new(rows: usize, cols: usize) -> Self {
        // vec(X^T)[j + i c] = X[i, j] = vec(X)[i + j r]
        let mut src = alloc::vec![0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                src[j + i * cols] = i + j * rows;
            }
        }
        Self {
            rows,
            cols,
            perm: Permutation { src },
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn permutation(&self) -> &Permutation {
        &self.perm
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        self.perm.apply(v)
    }

    pub fn apply_rows(&self, m: &Mat) -> Mat {
        self.perm.apply_rows(m)
    }

    pub fn to_dense(&self) -> Mat {
        self.perm.to_dense()
    }
}

pub fn perfect_shuffle(rows: usize, cols: usize) -> ShuffleMap {
    ShuffleMap::new(rows, cols)
}

/// The unnormalized basis `E_ij - E_ji` (`i < j`) of `p x p` skew matrices,
/// ordered column by column; `vec(Omega) = B s` and `B^T B = 2 I`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewBasis {
    p: usize,
    matrix: Mat,
}

impl SkewBasis {
    pub fn new(p: usize) -> Self {
        let m = p * p.saturating_sub(1) / 2;
        let mut b = Mat::zeros(p * p, m);
        let mut c = 0;
        for j in 0..p {
            for i in 0..j {
                b[(i + j * p, c)] = 1.0;
                b[(j + i * p, c)] = -1.0;
                c += 1;
            }
        }
        Self { p, matrix: b }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }
}

/// Permutation `T` with `vec(A) = T blkvec(A)`, where
/// `blkvec(A) = [vec(Omega); vec(K); vec(-K^T); vec(0)]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockVecMap {
    n: usize,
    p: usize,
    perm: Permutation,
}

impl BlockVecMap {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if p > n {
            return Err(invalid("block vectorization needs p <= n"));
        }
        let q = n - p;
        // position in blkvec of each entry (row, col) of A
        let blk_index = |row: usize, col: usize| -> usize {
            match (row < p, col < p) {
                (true, true) => row + col * p,
                (false, true) => p * p + (row - p) + col * q,
                (true, false) => p * p + q * p + row + (col - p) * p,
                (false, false) => p * p + 2 * q * p + (row - p) + (col - p) * q,
            }
        };
        let mut src = alloc::vec![0; n * n];
        for col in 0..n {
            for row in 0..n {
                src[row + col * n] = blk_index(row, col);
            }
        }
        Ok(Self {
            n,
            p,
            perm: Permutation { src },
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.p)
    }

    pub fn permutation(&self) -> &Permutation {
        &self.perm
    }

    /// `vec(A)` from `blkvec(A)`.
    pub fn apply(&self, v: &Vector) -> Vector {
        self.perm.apply(v)
    }

    pub fn apply_rows(&self, m: &Mat) -> Mat {
        self.perm.apply_rows(m)
    }

    pub fn to_dense(&self) -> Mat {
        self.perm.to_dense()
    }
}

pub fn block_vec_map(n: usize, p: usize) -> Result<BlockVecMap> {
    BlockVecMap::new(n, p)
}

/// `[vec(A11); vec(A21); vec(A12); vec(A22)]` for the `p`-split of `A`.
pub fn blkvec(a: &Mat, p: usize) -> Vector {
    let n = a.nrows();
    let q = n - p;
    let mut out = Vector::zeros(n * n);
    let mut off = 0;
    for (r0, c0, r, c) in [(0, 0, p, p), (p, 0, q, p), (0, p, p, q), (p, p, q, q)] {
        let blk = a.view((r0, c0), (r, c)).into_owned();
        out.rows_mut(off, r * c).copy_from_slice(blk.as_slice());
        off += r * c;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, vec_of};

    fn seq(r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |i, j| (1 + i + 10 * j) as f64)
    }

    #[test]
    fn shuffle_transposes() {
        for (r, c) in [(3, 4), (1, 5), (4, 1), (2, 2)] {
            let x = seq(r, c);
            let pi = perfect_shuffle(r, c);
            assert_eq!(pi.apply(&vec_of(&x)), vec_of(&x.transpose()));
        }
    }

    #[test]
    fn shuffle_inverse_is_reverse_shuffle() {
        let a = perfect_shuffle(3, 5).to_dense();
        let b = perfect_shuffle(5, 3).to_dense();
        assert_eq!(b * a, Mat::identity(15, 15));
    }

    #[test]
    fn shuffle_commutes_kronecker_factors() {
        // Pi_{p,m} (A kron B) Pi_{n,q} = B kron A for A (m x n), B (p x q)
        let a = seq(2, 3);
        let b = Mat::from_fn(4, 2, |i, j| (i as f64) - 2.0 * (j as f64) + 0.5);
        let lhs = perfect_shuffle(4, 2).to_dense() * kron(&a, &b) * perfect_shuffle(3, 2).to_dense();
        assert_eq!(lhs, kron(&b, &a));
    }

    #[test]
    fn skew_basis_reproduces_vec_omega() {
        let p = 4;
        let b = SkewBasis::new(p);
        assert_eq!(b.dim(), 6);
        assert_eq!(b.matrix().transpose() * b.matrix(), Mat::identity(6, 6) * 2.0);
        let s = Vector::from_fn(6, |i, _| (i + 1) as f64);
        let (omega, _) = crate::manifold::unpack(
            &s,
            p,
            p,
        );
        assert_eq!(b.matrix() * &s, vec_of(&omega));
        assert_eq!(SkewBasis::new(1).dim(), 0);
    }

    #[test]
    fn block_vec_map_restores_vec() {
        for (n, p) in [(5, 2), (4, 4), (3, 1), (6, 3)] {
            let a = seq(n, n);
            let t = block_vec_map(n, p).unwrap();
            assert_eq!(t.apply(&blkvec(&a, p)), vec_of(&a));
            let inv = t.permutation().inverse();
            assert_eq!(inv.apply(&vec_of(&a)), blkvec(&a, p));
        }
    }

    #[test]
    fn permutation_actions_agree_with_dense() {
        let t = block_vec_map(4, 1).unwrap();
        let m = seq(16, 3);
        assert_eq!(t.apply_rows(&m), t.to_dense() * &m);
        let m = seq(3, 16);
        assert_eq!(t.permutation().apply_cols(&m), &m * t.to_dense());
        assert!(Permutation::from_sources(alloc::vec![0, 0]).is_err());
    }
}
