//! Linear solvers for the first-passage systems of the embedded walk.

/// Square matrix with `a[i][j] = 0` whenever `|i - j| > b`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    b: usize,
    data: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
#[error("matrix is singular: zero pivot in row {row}")]
pub struct Singular {
    pub row: usize,
}

impl BandMatrix {
    pub fn zeros(n: usize, b: usize) -> Self {
        Self {
            n,
            b,
            data: vec![0.0; n * (2 * b + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.b);
        i * (2 * self.b + 1) + j + self.b - i
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Gaussian elimination without pivoting, `O(n b^2)`.
    ///
    /// Only meant for diagonally dominant systems, where skipping pivoting is
    /// stable.
    pub fn solve(mut self, mut rhs: Vec<f64>) -> Result<Vec<f64>, Singular> {
        let (n, b) = (self.n, self.b);
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Singular { row: k });
            }
            let last = (k + b).min(n - 1);
            for i in k + 1..=last {
                let f = self.data[self.idx(i, k)] / pivot;
                if f == 0.0 {
                    continue;
                }
                for j in k..=last {
                    let v = self.data[self.idx(k, j)];
                    if v != 0.0 {
                        let t = self.idx(i, j);
                        self.data[t] -= f * v;
                    }
                }
                rhs[i] -= f * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let last = (k + b).min(n - 1);
            let mut s = rhs[k];
            for j in k + 1..=last {
                s -= self.data[self.idx(k, j)] * rhs[j];
            }
            rhs[k] = s / self.data[self.idx(k, k)];
        }
        Ok(rhs)
    }
}

/// Solves `-lower[i] x[i-1] + diag[i] x[i] - upper[i] x[i+1] = rhs[i]`.
pub fn tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>, Singular> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let denom = diag[i] - if i > 0 { lower[i] * c[i - 1] } else { 0.0 };
        if denom == 0.0 || !denom.is_finite() {
            return Err(Singular { row: i });
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] + if i > 0 { lower[i] * d[i - 1] } else { 0.0 }) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] += c[i] * d[i + 1];
    }
    Ok(d)
}
