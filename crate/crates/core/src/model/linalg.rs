//! Minimal dense f64 kernels for the model's forward and backward passes.
//!
//! Everything is row-major `Vec<f64>`; dimensions are small (at most a few
//! dozen), so simple loops are the fastest portable option here.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// out = A·x
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            out[r] = dot(self.row(r), x);
        }
    }

    /// out += A·x
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            out[r] += dot(self.row(r), x);
        }
    }

    /// out += Aᵀ·y
    pub fn matvec_t_add(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for r in 0..self.rows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            let row = self.row(r);
            for c in 0..self.cols {
                out[c] += row[c] * yr;
            }
        }
    }

    /// A += y·xᵀ
    pub fn outer_add(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for r in 0..self.rows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            let row = self.row_mut(r);
            for (out, &xc) in row.iter_mut().zip(x) {
                *out += yr * xc;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// y += a·x
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn add_assign(x: &[f64], y: &mut [f64]) {
    axpy(1.0, x, y);
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// In-place softmax with the usual max-shift for stability.
pub fn softmax_inplace(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_against_hand_computation() {
        let a = Mat { rows: 2, cols: 3, data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0] };
        let mut out = vec![0.0; 2];
        a.matvec(&[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, vec![-2.0, -2.0]);
    }

    #[test]
    fn transpose_matvec_and_outer_are_adjoint() {
        let a = Mat::from_fn(3, 4, |r, c| (r * 4 + c) as f64 * 0.1);
        let x = [1.0, -2.0, 0.5, 3.0];
        let y = [0.2, -0.7, 1.1];
        // <A x, y> == <x, Aᵀ y>
        let mut ax = vec![0.0; 3];
        a.matvec(&x, &mut ax);
        let mut aty = vec![0.0; 4];
        a.matvec_t_add(&y, &mut aty);
        assert!((dot(&ax, &y) - dot(&x, &aty)).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut s = vec![2.0_f64.ln(), 0.0];
        softmax_inplace(&mut s);
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
