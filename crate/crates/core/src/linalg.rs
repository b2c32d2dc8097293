//! Banded Cholesky for the sparse symmetric positive-definite systems that
//! arise from lattice Laplacians with a row-major vertex ordering.

use crate::error::{Error, Result};

/// Symmetric band matrix, lower triangle stored row by row.
#[derive(Clone, Debug)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` at (i, j); the mirrored entry is implied.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        assert!(i - j <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)];
                if a == 0.0 {
                    continue;
                }
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }
}

/// Lower factor L with A = L Lᵀ, same band layout as the input.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    l: SymBand,
}

impl BandCholesky {
    pub fn factor(mut a: SymBand) -> Result<Self> {
        let n = a.n;
        let bw = a.bw;
        let w = bw + 1;
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut s = a.data[i * w + (j + bw - i)];
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                for k in lo..j {
                    s -= a.data[ri + k] * a.data[rj + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Numerical(format!(
                            "non-positive pivot {s:e} at row {i}"
                        )));
                    }
                    a.data[ri + i] = s.sqrt();
                } else {
                    a.data[ri + j] = s / a.data[rj + j];
                }
            }
        }
        Ok(Self { l: a })
    }

    pub fn dim(&self) -> usize {
        self.l.n
    }

    /// Solves L y = b in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.l.n, self.l.bw, self.l.bw + 1);
        for i in 0..n {
            let ri = i * w + bw - i;
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l.data[ri + k] * b[k];
            }
            b[i] = s / self.l.data[ri + i];
        }
    }

    /// Solves Lᵀ x = y in place.
    pub fn solve_upper(&self, y: &mut [f64]) {
        let (n, bw, w) = (self.l.n, self.l.bw, self.l.bw + 1);
        for i in (0..n).rev() {
            let ri = i * w + bw - i;
            let xi = y[i] / self.l.data[ri + i];
            y[i] = xi;
            for k in i.saturating_sub(bw)..i {
                y[k] -= self.l.data[ri + k] * xi;
            }
        }
    }

    /// Solves A x = b in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.solve_lower(b);
        self.solve_upper(b);
    }

    /// Column `j` of A⁻¹.
    pub fn inverse_column(&self, j: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.l.n];
        e[j] = 1.0;
        self.solve(&mut e);
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn tridiag(n: usize) -> SymBand {
        let mut a = SymBand::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.5);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn solve_matches_dense() {
        let n = 9;
        let a = tridiag(n);
        let dense = DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        BandCholesky::factor(a).unwrap().solve(&mut x);
        let expect = dense.lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert!((x[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = SymBand::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(1, 0, 2.0);
        assert!(matches!(BandCholesky::factor(a), Err(Error::Numerical(_))));
    }

    #[test]
    fn mul_vec_is_symmetric_product() {
        let a = tridiag(4);
        let y = a.mul_vec(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(y, vec![2.5, -1.0, 0.0, 0.0]);
    }
}
