//! Envelope (profile) Cholesky factorization for symmetric positive definite
//! systems whose nonzeros cluster near the diagonal.
//!
//! Spline normal equations are banded: every residual touches a handful of
//! consecutive control points. After landmark elimination the band widens to
//! the longest track, but stays far narrower than the full matrix as long as
//! parameters are ordered by time. The factorization only works inside the
//! per-row envelope, so cost is O(n b²) instead of O(n³).

/// Symmetric matrix in skyline storage: row `i` holds the lower-triangle
/// columns `first[i]..=i`. Entries left of the profile are structural zeros
/// and stay zero through the factorization.
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    /// Full lower triangle.
    pub fn zeros(n: usize) -> Self {
        Self::with_profile(vec![0; n])
    }

    /// Panics if `first[i] > i`.
    pub fn with_profile(first: Vec<usize>) -> Self {
        let mut offset = Vec::with_capacity(first.len() + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "profile start {f} right of the diagonal in row {i}");
            offset.push(total);
            total += i - f + 1;
        }
        offset.push(total);
        SymmetricMatrix {
            first,
            offset,
            data: vec![0.0; total],
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Stored entries.
    pub fn stored(&self) -> usize {
        self.data.len()
    }

    pub fn profile(&self) -> &[usize] {
        &self.first
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(c >= self.first[r], "entry ({r}, {c}) outside the profile");
        self.offset[r] + c - self.first[r]
    }

    /// Adds `v` to entry (i, j); panics outside the profile.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c < self.first[r] {
            0.0
        } else {
            self.data[self.offset[r] + c - self.first[r]]
        }
    }

    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        self.data[self.offset[i + 1] - 1]
    }

    pub fn add_diag(&mut self, i: usize, v: f64) {
        self.data[self.offset[i + 1] - 1] += v;
    }

    /// Stored part of row `i`, columns `first[i]..=i`.
    fn row(&self, i: usize) -> &[f64] {
        &self.data[self.offset[i]..self.offset[i + 1]]
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let f = self.first[i];
            for (k, &a) in self.row(i).iter().enumerate() {
                let j = f + k;
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Factorizes in place. Returns `None` when the matrix is not positive definite.
    pub fn cholesky(mut self) -> Option<EnvelopeCholesky> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            let (head, tail) = self.data.split_at_mut(oi);
            let row_i = &mut tail[..i - fi + 1];
            for j in fi..=i {
                let k0 = fi.max(self.first[j]);
                let dot: f64 = if j == i {
                    row_i[k0 - fi..j - fi].iter().map(|v| v * v).sum()
                } else {
                    let fj = self.first[j];
                    let row_j = &head[self.offset[j]..self.offset[j + 1]];
                    row_i[k0 - fi..j - fi]
                        .iter()
                        .zip(&row_j[k0 - fj..j - fj])
                        .map(|(a, b)| a * b)
                        .sum()
                };
                let s = row_i[j - fi] - dot;
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    row_i[j - fi] = s.sqrt();
                } else {
                    row_i[j - fi] = s / head[self.offset[j + 1] - 1];
                }
            }
        }
        Some(EnvelopeCholesky { factor: self })
    }
}

/// Lower-triangular factor L with A = L Lᵀ, in the profile of A.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    factor: SymmetricMatrix,
}

impl EnvelopeCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let n = l.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let row = l.row(i);
            let f = l.first[i];
            let s: f64 = row[..i - f].iter().zip(&y[f..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i - f];
        }
        for i in (0..n).rev() {
            let row = l.row(i);
            let f = l.first[i];
            y[i] /= row[i - f];
            let yi = y[i];
            for (a, yk) in row[..i - f].iter().zip(&mut y[f..i]) {
                *yk -= a * yi;
            }
        }
        y
    }
}
