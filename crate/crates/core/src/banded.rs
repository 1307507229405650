//! Banded LU factorization with partial pivoting (the LAPACK `gbtrf` /
//! `gbtrs` storage scheme, unblocked).

use crate::error::{Error, Result};

/// Square band matrix stored column-major with `kl` extra superdiagonals of
/// room for pivoting fill-in: entry `(i, j)` lives at
/// `ab[j * ldab + kl + ku + i - j]`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` to entry `(i, j)`. Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for (i, yi) in y.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *yi += self.ab[self.idx(i, j)] * x[j];
            }
        }
        y
    }

    /// Factors in place and returns the factorization.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0; n];
        let scale = self.ab.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = self.ab[self.idx(j, j)].abs();
            for r in 1..=km {
                let v = self.ab[self.idx(j + r, j)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= f64::EPSILON * scale * 1e-3 || best == 0.0 {
                return Err(Error::SingularMatrix(j));
            }
            piv[j] = j + p;
            let last = (j + kl + ku).min(n - 1);
            if p != 0 {
                for c in j..=last {
                    let a = self.idx(j, c);
                    let b = self.idx(j + p, c);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.idx(j, j)];
            for r in 1..=km {
                let ir = self.idx(j + r, j);
                let l = self.ab[ir] / pivot;
                self.ab[ir] = l;
                if l != 0.0 {
                    for c in j + 1..=last {
                        let src = self.ab[self.idx(j, c)];
                        let dst = self.idx(j + r, c);
                        self.ab[dst] -= l * src;
                    }
                }
            }
        }
        Ok(BandLu { a: self, piv })
    }
}

/// LU factors of a [`BandMatrix`].
#[derive(Clone, Debug)]
pub struct BandLu {
    a: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let a = &self.a;
        let n = a.n;
        let mut x = rhs.to_vec();
        for j in 0..n {
            x.swap(j, self.piv[j]);
            let km = a.kl.min(n - 1 - j);
            let xj = x[j];
            if xj != 0.0 {
                for r in 1..=km {
                    x[j + r] -= a.ab[a.idx(j + r, j)] * xj;
                }
            }
        }
        for j in (0..n).rev() {
            x[j] /= a.ab[a.idx(j, j)];
            let xj = x[j];
            let lo = j.saturating_sub(a.kl + a.ku);
            for (i, xi) in x.iter_mut().enumerate().take(j).skip(lo) {
                *xi -= a.ab[a.idx(i, j)] * xj;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> (BandMatrix, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if band.in_band(i, j) {
                    // small diagonal forces pivoting
                    let v = if i == j { 0.01 * rng.gen::<f64>() } else { rng.gen::<f64>() - 0.5 };
                    band.add(i, j, v);
                    dense[(i, j)] = v;
                }
            }
        }
        (band, dense)
    }

    #[test]
    fn matches_dense_solve_with_pivoting() {
        for (n, kl, ku, seed) in [(1, 0, 0, 1), (7, 2, 1, 2), (40, 5, 5, 3), (33, 1, 4, 4)] {
            let (band, dense) = random_band(n, kl, ku, seed);
            let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let y = band.matvec(&rhs);
            let y_dense = &dense * DVector::from_column_slice(&rhs);
            for i in 0..n {
                assert!((y[i] - y_dense[i]).abs() < 1e-14);
            }
            let x = band.factor().unwrap().solve(&rhs);
            let expected = dense.lu().solve(&DVector::from_column_slice(&rhs)).unwrap();
            for i in 0..n {
                assert!((x[i] - expected[i]).abs() < 1e-9 * (1.0 + expected[i].abs()));
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let mut band = BandMatrix::zeros(3, 1, 1);
        band.add(0, 0, 1.0);
        band.add(1, 1, 1.0);
        assert!(matches!(band.factor(), Err(Error::SingularMatrix(2))));
    }

    #[test]
    #[should_panic]
    fn writing_outside_band_panics() {
        let mut band = BandMatrix::zeros(5, 1, 1);
        band.add(0, 3, 1.0);
    }
}
