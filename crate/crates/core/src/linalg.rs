//! Small fixed-size complex matrices.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A 2×2 complex matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[ZERO, ZERO], [ZERO, ZERO]]);
    pub const IDENTITY: Mat2 = Mat2([[ONE, ZERO], [ZERO, ONE]]);

    pub fn new(a11: Complex64, a12: Complex64, a21: Complex64, a22: Complex64) -> Self {
        Mat2([[a11, a12], [a21, a22]])
    }

    pub fn diag(d1: Complex64, d2: Complex64) -> Self {
        Mat2([[d1, ZERO], [ZERO, d2]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[i][j]
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == ZERO || !d.is_finite() {
            return None;
        }
        let m = &self.0;
        Some(Mat2([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]))
    }

    pub fn scale(&self, s: Complex64) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|row| row.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flat_map(|row| row.iter()).all(|z| z.is_finite())
    }
}

impl Default for Mat2 {
    fn default() -> Self {
        Mat2::ZERO
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    #[inline]
    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &rhs.0);
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &rhs.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;

    fn sub(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &rhs.0);
        Mat2([
            [a[0][0] - b[0][0], a[0][1] - b[0][1]],
            [a[1][0] - b[1][0], a[1][1] - b[1][1]],
        ])
    }
}

/// `e^{iψ}`, computed from the angle directly rather than by repeated products.
#[inline]
pub fn cis(psi: f64) -> Complex64 {
    let (s, c) = psi.sin_cos();
    Complex64::new(c, s)
}

/// Complex numbers as `[re, im]` pairs, the on-disk form used by every JSON schema here.
pub(crate) mod pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        let p: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        p.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let p: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(p.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn inverse_round_trips() {
        let m = Mat2::new(c(1.0, 2.0), c(0.5, -1.0), c(-0.3, 0.1), c(2.0, 0.0));
        let p = m * m.inverse().unwrap();
        assert!((p - Mat2::IDENTITY).max_abs() < 1e-15);
    }

    #[test]
    fn singular_has_no_inverse() {
        let m = Mat2::new(c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0));
        assert!(m.inverse().is_none());
    }

    #[test]
    fn det_is_multiplicative() {
        let a = Mat2::new(c(1.0, 2.0), c(0.5, -1.0), c(-0.3, 0.1), c(2.0, 0.0));
        let b = Mat2::new(c(0.2, 0.0), c(0.0, 1.0), c(1.0, 1.0), c(-1.0, 0.5));
        assert!(((a * b).det() - a.det() * b.det()).norm() < 1e-14);
    }
}
