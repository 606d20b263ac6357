//! Direct solvers: a general banded LU with partial pivoting for the
//! (tridiagonal, possibly non-symmetric) macro and single-scale systems, and a
//! dense pivoted LU for the bordered RVE saddle-point systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Fe2Error, Result};
use crate::fe::MatrixSink;

/// Pivots smaller than this fraction of the largest pivot flag a singular matrix.
const PIVOT_RATIO: f64 = 1e-14;

/// Square band matrix with `kl` sub- and `ku` super-diagonals.
///
/// Storage keeps `kl` extra super-diagonals for the fill-in produced by row
/// interchanges.
#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Prescribes `x[i] = value` in `self · x = rhs`: the column is moved to
    /// the right-hand side, row and column `i` become the identity.
    pub fn apply_dirichlet(&mut self, i: usize, value: f64, rhs: &mut [f64]) {
        let lo = i.saturating_sub(self.ku);
        let hi = (i + self.kl).min(self.n - 1);
        for r in lo..=hi {
            let k = self.idx(r, i);
            if r != i {
                rhs[r] -= self.data[k] * value;
            }
            self.data[k] = 0.0;
        }
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            let k = self.idx(i, j);
            self.data[k] = 0.0;
        }
        let k = self.idx(i, i);
        self.data[k] = 1.0;
        rhs[i] = value;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// In-place LU factorization with partial pivoting.
    pub fn factorize(mut self) -> Result<BandedLu> {
        let n = self.n;
        let reach = self.ku + self.kl;
        let mut pivots = vec![0usize; n];
        let mut max_pivot = 0.0f64;
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Fe2Error::SingularSystem(format!("zero pivot in column {k}")));
            }
            max_pivot = max_pivot.max(best);
            pivots[k] = p;
            let right = (k + reach).min(n - 1);
            if p != k {
                for j in k..=right {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let diag = self.data[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let m = self.data[ik] / diag;
                self.data[ik] = m;
                if m != 0.0 {
                    for j in k + 1..=right {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= m * kj;
                    }
                }
            }
        }
        let min_pivot = (0..n)
            .map(|i| self.data[self.idx(i, i)].abs())
            .fold(f64::INFINITY, f64::min);
        if min_pivot < PIVOT_RATIO * max_pivot {
            return Err(Fe2Error::SingularSystem(format!(
                "pivot ratio {:e} below threshold",
                min_pivot / max_pivot
            )));
        }
        Ok(BandedLu {
            lu: self,
            pivots,
        })
    }
}

impl MatrixSink for BandedMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn add(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            self.in_band(row, col),
            "entry ({row}, {col}) outside the band"
        );
        let k = self.idx(row, col);
        self.data[k] += value;
    }
}

#[derive(Clone, Debug)]
pub struct BandedLu {
    lu: BandedMatrix,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let a = &self.lu;
        let n = a.n;
        let mut b = rhs.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let last = (k + a.kl).min(n - 1);
            for i in k + 1..=last {
                b[i] -= a.data[a.idx(i, k)] * b[k];
            }
        }
        let reach = a.ku + a.kl;
        for i in (0..n).rev() {
            let right = (i + reach).min(n - 1);
            let mut s = b[i];
            for j in i + 1..=right {
                s -= a.data[a.idx(i, j)] * b[j];
            }
            b[i] = s / a.data[a.idx(i, i)];
        }
        b
    }
}

/// Pivoted LU of a bordered saddle-point matrix `[K, G; Gᵀ, 0]`.
///
/// The multiplier rows and columns are scaled so that the border entries are
/// of the same magnitude as the stiffness diagonal before factorization; the
/// scaling is undone in [`BorderedFactor::solve`].
#[derive(Clone, Debug)]
pub struct BorderedFactor {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    scale: DVector<f64>,
}

impl BorderedFactor {
    /// `n_primal` leading unknowns are displacement-like, the rest are
    /// multipliers.
    pub fn new(mut matrix: DMatrix<f64>, n_primal: usize) -> Result<Self> {
        let n = matrix.nrows();
        let mut scale = DVector::from_element(n, 1.0);
        if n > n_primal && n_primal > 0 {
            let kdiag = (0..n_primal)
                .map(|i| matrix[(i, i)].abs())
                .fold(0.0, f64::max);
            for c in n_primal..n {
                let gmax = (0..n_primal)
                    .map(|i| matrix[(i, c)].abs())
                    .fold(0.0, f64::max);
                if gmax > 0.0 && kdiag > 0.0 {
                    scale[c] = kdiag / gmax;
                }
            }
            for j in 0..n {
                for i in 0..n {
                    let s = scale[i] * scale[j];
                    if s != 1.0 {
                        matrix[(i, j)] *= s;
                    }
                }
            }
        }
        let lu = matrix.lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].abs()).collect();
        let max = diag.iter().copied().fold(0.0, f64::max);
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        if n > 0 && (!(min > PIVOT_RATIO * max) || !max.is_finite()) {
            return Err(Fe2Error::SingularSystem(format!(
                "bordered system of size {n} is singular (pivot ratio {:e})",
                min / max
            )));
        }
        Ok(BorderedFactor { lu, scale })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b = DVector::from_iterator(
            rhs.len(),
            rhs.iter().zip(self.scale.iter()).map(|(r, s)| r * s),
        );
        let y = self
            .lu
            .solve(&b)
            .ok_or_else(|| Fe2Error::SingularSystem("bordered solve failed".into()))?;
        Ok(y.iter().zip(self.scale.iter()).map(|(v, s)| v * s).collect())
    }
}
