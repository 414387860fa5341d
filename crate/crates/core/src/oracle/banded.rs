use crate::error::{Error, Result};

/// Cholesky factor of a symmetric positive definite band matrix, stored by rows
/// of the lower band.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factor the matrix whose lower band is given by `entry(i, j)` for
    /// `i - bw <= j <= i`.
    pub fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let i0 = i.saturating_sub(bw);
            for j in i0..=i {
                let j0 = j.saturating_sub(bw).max(i0);
                let mut s = entry(i, j);
                for k in j0..j {
                    s -= l[i * w + k + bw - i] * l[j * w + k + bw - j];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::SolverBreakdown(format!("non-positive pivot {s:.3e} at row {i}")));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + j + bw - i] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + j + self.bw - i]
    }

    /// Solve `L L^T x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        let bw = self.bw;
        for i in 0..self.n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.at(i, k) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + bw + 1).min(self.n) {
                s -= self.at(k, i) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
    }
}
