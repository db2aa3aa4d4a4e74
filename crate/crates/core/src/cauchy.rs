//! Boundary values of the Cauchy transform on the unit circle.
//!
//! Nodal data on the uniform grid is expanded in discrete Fourier modes
//! `f(theta) = sum_k F_k lambda^k`. The circle is oriented clockwise, so its left
//! (`+`) side is the exterior and its right (`-`) side the interior, and the
//! boundary values of `C f(lambda) = (1 / 2 pi i) oint f(s) / (s - lambda) ds` are
//!
//! ```text
//! C_+ f =  sum_{k < 0}  F_k lambda^k     (decays at infinity)
//! C_- f = -sum_{k >= 0} F_k lambda^k     (analytic inside)
//! ```
//!
//! so that `C_+ - C_- = I`. The Nyquist mode is assigned to `k < 0`. On a constant
//! `C_-` returns its negative and `C_+` returns zero.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::linalg::Mat2;
use crate::scattering::check_grid_size;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// FFT plans for one grid size, reusable across threads.
#[derive(Clone)]
pub struct CauchyProjector {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CauchyProjector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CauchyProjector").field("n", &self.n).finish()
    }
}

impl CauchyProjector {
    pub fn new(n: usize) -> Result<Self> {
        check_grid_size(n)?;
        let mut planner = FftPlanner::new();
        Ok(CauchyProjector { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Overwrite `data` with its projection. Panics if `data.len()` differs from the grid.
    pub fn apply_in_place(&self, side: Side, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n, "data length does not match the projector grid");
        self.forward.process(data);
        let half = self.n / 2;
        let scale = 1.0 / self.n as f64;
        for (k, v) in data.iter_mut().enumerate() {
            let negative = k >= half;
            *v = match (side, negative) {
                (Side::Plus, true) => *v * scale,
                (Side::Minus, false) => *v * -scale,
                _ => Complex64::new(0.0, 0.0),
            };
        }
        self.inverse.process(data);
    }

    pub fn apply(&self, side: Side, data: &[Complex64]) -> Vec<Complex64> {
        let mut out = data.to_vec();
        self.apply_in_place(side, &mut out);
        out
    }

    pub fn plus(&self, data: &[Complex64]) -> Vec<Complex64> {
        self.apply(Side::Plus, data)
    }

    pub fn minus(&self, data: &[Complex64]) -> Vec<Complex64> {
        self.apply(Side::Minus, data)
    }

    /// Entrywise projection of matrix-valued nodal data.
    pub fn apply_mat(&self, side: Side, values: &[Mat2]) -> Vec<Mat2> {
        assert_eq!(values.len(), self.n, "data length does not match the projector grid");
        let mut out = vec![Mat2::ZERO; self.n];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for i in 0..2 {
            for j in 0..2 {
                for (b, v) in buf.iter_mut().zip(values) {
                    *b = v.0[i][j];
                }
                self.apply_in_place(side, &mut buf);
                for (o, b) in out.iter_mut().zip(&buf) {
                    o.0[i][j] = *b;
                }
            }
        }
        out
    }
}

/// One-shot projection of scalar nodal data; plan once with [`CauchyProjector`] in loops.
pub fn cauchy_project(values: &[Complex64], side: Side) -> Result<Vec<Complex64>> {
    Ok(CauchyProjector::new(values.len())?.apply(side, values))
}

/// One-shot projection of matrix-valued nodal data.
pub fn cauchy_project_mat(values: &[Mat2], side: Side) -> Result<Vec<Mat2>> {
    Ok(CauchyProjector::new(values.len())?.apply_mat(side, values))
}
