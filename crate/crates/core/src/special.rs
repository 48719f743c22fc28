//! Special functions.

use crate::error::{invalid, Result};
use crate::real::Real;

// B_2, B_4, ..., B_16
const BERNOULLI_EVEN: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Riemann zeta function for real `x > 1`: direct partial sum up to `K - 1`
/// followed by the Euler–Maclaurin tail.
pub fn zeta<T: Real>(x: T) -> Result<T> {
    if !(x > T::one()) {
        return Err(invalid("zeta argument", format!("{x} must exceed 1 (pole at 1)")));
    }
    let xf = x.to_f64_lossy();
    const K: usize = 32;
    let kf = K as f64;
    let mut head = 0.0;
    for k in (1..K).rev() {
        head += (k as f64).powf(-xf);
    }
    let mut tail = kf.powf(1.0 - xf) / (xf - 1.0) + 0.5 * kf.powf(-xf);
    // rising factorial x (x+1) ... (x + 2i - 2) / (2i)!
    let mut rising = xf;
    let mut fact = 2.0;
    let mut power = kf.powf(-xf - 1.0);
    for (i, b) in BERNOULLI_EVEN.iter().enumerate() {
        let term = b / fact * rising * power;
        tail += term;
        if term.abs() < 1e-18 * (head + tail) {
            break;
        }
        let two_i = 2.0 * (i as f64 + 1.0);
        rising *= (xf + two_i - 1.0) * (xf + two_i);
        fact *= (two_i + 1.0) * (two_i + 2.0);
        power /= kf * kf;
    }
    Ok(T::lit(head + tail))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_known_values() {
        let pi = std::f64::consts::PI;
        assert!((zeta(2.0_f64).unwrap() - pi * pi / 6.0).abs() < 1e-15);
        assert!((zeta(4.0_f64).unwrap() - pi.powi(4) / 90.0).abs() < 1e-15);
        // zeta(3/2)
        assert!((zeta(1.5_f64).unwrap() - 2.612_375_348_685_488).abs() < 1e-13);
        // zeta(1.01) ~ 100.5779
        let z = zeta(1.01_f64).unwrap();
        assert!((z - 100.577_943_338_496_78).abs() < 1e-9, "{z}");
    }

    #[test]
    fn zeta_rejects_pole() {
        assert!(zeta(1.0_f64).is_err());
        assert!(zeta(0.5_f64).is_err());
    }
}
