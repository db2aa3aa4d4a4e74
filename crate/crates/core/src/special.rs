//! Complex log-Gamma.

use num_complex::Complex64;

use crate::{Error, Result};

/// `B_{2k} / (2k (2k - 1))` for `k = 1..=10`.
const STIRLING: [f64; 10] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
    43867.0 / 244188.0,
    -174611.0 / 125400.0,
];

/// Below this real part the argument is shifted upward before the Stirling series.
const SHIFT_TO: f64 = 15.0;

/// Principal branch of `ln Gamma(z)`: the analytic continuation from the positive
/// real axis into the plane cut along `(-inf, 0]`.
///
/// Evaluated by the Stirling series at `z + K` with `Re(z + K) >= 15`, followed by
/// `ln Gamma(z) = ln Gamma(z + K) - sum_{k<K} ln(z + k)`.
pub fn log_gamma(z: Complex64) -> Result<Complex64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain(format!("log_gamma of non-finite argument {z}")));
    }
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        return Err(Error::Domain(format!("Gamma has a pole at {}", z.re)));
    }

    let mut w = z;
    let mut correction = Complex64::new(0.0, 0.0);
    while w.re < SHIFT_TO {
        correction += w.ln();
        w += 1.0;
    }

    let inv = w.inv();
    let inv2 = inv * inv;
    let mut series = Complex64::new(0.0, 0.0);
    let mut power = inv;
    for c in STIRLING {
        series += power * c;
        power *= inv2;
    }
    let half_ln_two_pi = 0.5 * std::f64::consts::TAU.ln();
    Ok((w - 0.5) * w.ln() - w + half_ln_two_pi + series - correction)
}
