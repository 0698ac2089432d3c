//! Special functions for tail sums: trigamma and the sine-integral complement.

use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

/// `psi_1(x) = sum_{j>=0} 1/(x+j)^2` for `x > 0`.
pub fn trigamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 16.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let t = 1.0 / x;
    let t2 = t * t;
    acc + t + 0.5 * t2 + t * t2 * (1.0 / 6.0 - t2 * (1.0 / 30.0 - t2 * (1.0 / 42.0 - t2 / 30.0)))
}

/// `pi/2 - Si(x)` for `x >= 0`, given `cos x` and `sin x` separately so the
/// caller can supply an exactly reduced phase.
pub fn si_complement(x: f64, cos_x: f64, sin_x: f64) -> f64 {
    if x < 4.0 {
        return FRAC_PI_2 - si_series(x);
    }
    si_complement_cf(x, cos_x, sin_x)
}

// pi/2 - Si = f cos x + g sin x with g + i f = e^{z} E1(z) at z = -ix.
fn si_complement_cf(x: f64, cos_x: f64, sin_x: f64) -> f64 {
    let aux = exp_e1(Complex64::new(0.0, -x));
    aux.im * cos_x + aux.re * sin_x
}

/// `Si(x)` by its power series; accurate for moderate `x`.
pub fn si_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0u32;
    loop {
        k += 1;
        let n = (2 * k) as f64;
        term *= -x2 / (n * (n + 1.0));
        let add = term / (n + 1.0);
        sum += add;
        if add.abs() < 1e-18 * sum.abs().max(1e-300) {
            return sum;
        }
    }
}

/// `e^z E1(z)` by modified Lentz on
/// `1/(z + 1 - 1/(z + 3 - 4/(z + 5 - ...)))`; needs `|z|` away from zero.
fn exp_e1(z: Complex64) -> Complex64 {
    let mut b = z + 1.0;
    let mut c = b;
    let mut d = Complex64::new(1.0, 0.0) / b;
    let mut h = d;
    for i in 1..10_000u32 {
        let an = -((i as f64) * (i as f64));
        b += 2.0;
        d = Complex64::new(1.0, 0.0) / (d * an + b);
        // The first step has c = b + an / infinity.
        c = if i == 1 { b } else { b + an / c };
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigamma_values() {
        // psi_1(1) = pi^2 / 6, psi_1(1/2) = pi^2 / 2.
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0) - pi2 / 6.0).abs() < 1e-14);
        assert!((trigamma(0.5) - pi2 / 2.0).abs() < 1e-13);
        let direct: f64 = (0..2_000_000).map(|j| 1.0 / (40.5 + j as f64).powi(2)).sum::<f64>() + 1.0 / (2_000_040.5);
        assert!((trigamma(40.5) - direct).abs() < 1e-12);
    }

    #[test]
    fn sine_integral_values() {
        let s = |x: f64| std::f64::consts::FRAC_PI_2 - si_complement(x, x.cos(), x.sin());
        assert!((s(1.0) - 0.946_083_070_367_183).abs() < 1e-14);
        assert!((s(10.0) - 1.658_347_594_218_874).abs() < 1e-13);
        assert!((s(100.0) - 1.562_225_466_889_056).abs() < 1e-13);
        // Both branches agree near the switch.
        for x in [3.0, 3.9, 4.0, 4.1, 6.0] {
            let cf = si_complement_cf(x, x.cos(), x.sin());
            assert!((FRAC_PI_2 - si_series(x) - cf).abs() < 1e-13, "x={x}");
        }
    }
}
