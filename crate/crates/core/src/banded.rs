//! Square banded matrices and an unpivoted banded LU solver.
//!
//! Only what the implicit half of the IMEX scheme needs: products, the
//! shifted operator `I + c·A`, and repeated solves against one factorisation.

#[derive(Clone, Debug, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    // row-major, `lower + upper + 1` entries per row; entry (i, j) lives at
    // column `j + lower - i`.
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), 0, 0);
        m.data.copy_from_slice(diag);
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }

    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.lower >= i && j <= i + self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= self.n || j >= self.n || !self.in_band(i, j) {
            return 0.0;
        }
        self.data[i * self.width() + j + self.lower - i]
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(i < self.n && j < self.n && self.in_band(i, j), "({i}, {j}) outside band");
        let w = self.width();
        self.data[i * w + j + self.lower - i] = value;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `out = self · x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let w = self.width();
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.lower);
            let j1 = (i + self.upper).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = 0.0;
            for j in j0..=j1 {
                acc += row[j + self.lower - i] * x[j];
            }
            out[i] = acc;
        }
    }

    /// Returns `I + scale·self`.
    pub fn shifted_identity(&self, scale: f64) -> Self {
        let mut m = self.clone();
        for v in &mut m.data {
            *v *= scale;
        }
        let w = self.width();
        for i in 0..self.n {
            m.data[i * w + self.lower] += 1.0;
        }
        m
    }
}

/// LU factors stored in band form. No pivoting: intended for diagonally
/// dominant or symmetric positive definite operators.
#[derive(Clone, Debug)]
pub struct BandedLu {
    lu: BandedMatrix,
}

impl BandedLu {
    /// Returns `None` when a zero (or non-finite) pivot is met.
    pub fn factor(a: &BandedMatrix) -> Option<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let (kl, ku) = (lu.lower, lu.upper);
        let w = lu.width();
        for k in 0..n {
            let pivot = lu.data[k * w + kl];
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            let i_end = (k + kl).min(n - 1);
            let j_end = (k + ku).min(n - 1);
            for i in k + 1..=i_end {
                let l_idx = i * w + k + kl - i;
                let factor = lu.data[l_idx] / pivot;
                lu.data[l_idx] = factor;
                for j in k + 1..=j_end {
                    let upper = lu.data[k * w + j + kl - k];
                    lu.data[i * w + j + kl - i] -= factor * upper;
                }
            }
        }
        Some(Self { lu })
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let lu = &self.lu;
        let n = lu.n;
        let (kl, ku) = (lu.lower, lu.upper);
        let w = lu.width();
        for i in 0..n {
            let j0 = i.saturating_sub(kl);
            let mut acc = b[i];
            for j in j0..i {
                acc -= lu.data[i * w + j + kl - i] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let j1 = (i + ku).min(n - 1);
            let mut acc = b[i];
            for j in i + 1..=j1 {
                acc -= lu.data[i * w + j + kl - i] * b[j];
            }
            b[i] = acc / lu.data[i * w + kl];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pentadiagonal(n: usize) -> BandedMatrix {
        let mut a = BandedMatrix::zeros(n, 2, 2);
        for i in 0..n {
            a.set(i, i, 7.0 + i as f64 * 0.1);
            if i + 1 < n {
                a.set(i, i + 1, -2.0);
                a.set(i + 1, i, -1.5);
            }
            if i + 2 < n {
                a.set(i, i + 2, 0.5);
                a.set(i + 2, i, 0.25);
            }
        }
        a
    }

    #[test]
    fn solve_inverts_product() {
        let a = pentadiagonal(9);
        let x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut b = vec![0.0; 9];
        a.mul_vec(&x, &mut b);
        let lu = BandedLu::factor(&a).unwrap();
        lu.solve(&mut b);
        for (got, want) in b.iter().zip(&x) {
            assert!((got - want).abs() < 1e-13);
        }
    }

    #[test]
    fn out_of_band_reads_zero() {
        let a = pentadiagonal(6);
        assert_eq!(a.get(0, 3), 0.0);
        assert_eq!(a.get(5, 2), 0.0);
        assert_eq!(a.get(2, 0), 0.25);
    }

    #[test]
    fn shifted_identity_adds_to_diagonal() {
        let a = BandedMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let s = a.shifted_identity(-0.5);
        assert_eq!(s.diagonal(), vec![0.5, 0.0, -0.5]);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = BandedMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(BandedLu::factor(&a).is_none());
    }
}
