//! Special functions: the Faddeeva function on the upper half plane, generalized Laguerre
//! polynomials, and log-factorials.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::Complex;

const WEIDEMAN_N: usize = 32;

struct Weideman {
    l: f64,
    // Coefficients of the polynomial in Z, highest degree first.
    coeffs: [f64; WEIDEMAN_N],
}

fn weideman() -> &'static Weideman {
    static TABLE: OnceLock<Weideman> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = WEIDEMAN_N;
        let m = 2 * n;
        let m2 = 2 * m;
        let l = (n as f64 / std::f64::consts::SQRT_2).sqrt();
        // f sampled on k = -M+1..M-1 with a leading zero, then fftshifted.
        let mut f = vec![0.0; m2];
        for (j, k) in (-(m as i64) + 1..m as i64).enumerate() {
            let theta = k as f64 * PI / m as f64;
            let t = l * (theta / 2.0).tan();
            f[j + 1] = (-t * t).exp() * (l * l + t * t);
        }
        let shifted: Vec<f64> = (0..m2).map(|j| f[(j + m) % m2]).collect();
        let mut coeffs = [0.0; WEIDEMAN_N];
        for (idx, c) in coeffs.iter_mut().enumerate() {
            // a_k for k = N - idx, i.e. highest power first
            let k = (n - idx) as f64;
            let re: f64 = shifted
                .iter()
                .enumerate()
                .map(|(j, v)| v * (2.0 * PI * j as f64 * k / m2 as f64).cos())
                .sum();
            *c = re / m2 as f64;
        }
        Weideman { l, coeffs }
    })
}

/// Faddeeva function w(z) = exp(-z²) erfc(-iz) for Im z ≥ 0.
///
/// Weideman's rational expansion with 32 terms; relative accuracy is near 1e-13 on the
/// upper half plane, which is far below anything the fits can resolve.
pub fn faddeeva(z: Complex<f64>) -> Complex<f64> {
    debug_assert!(z.im >= 0.0);
    let w = weideman();
    let i = Complex::new(0.0, 1.0);
    let denom = Complex::new(w.l, 0.0) - i * z;
    let zz = (Complex::new(w.l, 0.0) + i * z) / denom;
    let mut p = Complex::new(0.0, 0.0);
    for &c in &w.coeffs {
        p = p * zz + c;
    }
    p * 2.0 / (denom * denom) + Complex::new(1.0 / PI.sqrt(), 0.0) / denom
}

/// Real part of the Faddeeva function for real `x` and `y ≥ 0`.
#[inline]
pub fn faddeeva_re(x: f64, y: f64) -> f64 {
    faddeeva(Complex::new(x, y)).re
}

/// Generalized Laguerre polynomials L_k^(a)(x) for k = 0..=n_max by upward recurrence.
pub fn laguerre_table(n_max: usize, a: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    if n_max == 0 {
        return out;
    }
    out.push(1.0 + a - x);
    for k in 2..=n_max {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0 + a - x) * out[k - 1] - (kf - 1.0 + a) * out[k - 2]) / kf;
        out.push(next);
    }
    out
}

/// L_n^(a)(x).
pub fn laguerre(n: usize, a: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0 + a - x) * cur - (kf - 1.0 + a) * prev) / kf;
        prev = cur;
        cur = next;
    }
    cur
}

/// ln(n!) for integer n.
#[inline]
pub fn ln_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n)
}
