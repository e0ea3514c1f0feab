//! Independent reference implementations shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::Complex;

/// Secular frequencies (rad/s) written out directly from the radial and axial expressions,
/// with x taking (1 + ε) and y taking (1 − ε).
pub fn secular_oracle(gamma_rf: f64, gamma_dc: f64, omega_rf: f64, eps: f64, m: f64, e: f64, pol: f64) -> [f64; 3] {
    let radial = |pm: f64| {
        (2.0 * e * e * gamma_rf * gamma_rf / (m * m * omega_rf * omega_rf)
            - 2.0 * e * gamma_dc * (1.0 + pm * eps) / m
            - 2.0 * pol * (gamma_rf * gamma_rf + gamma_dc * gamma_dc * (1.0 + pm * eps).powi(2)) / m)
            .sqrt()
    };
    let axial = (4.0 * e * gamma_dc / m - 16.0 * pol * gamma_dc * gamma_dc / m).sqrt();
    [radial(1.0), radial(-1.0), axial]
}

/// Column `n` of exp(iη(a + a†)) in a Fock basis truncated at `dim`, by 64 Taylor substeps.
pub fn displacement_column(n: usize, eta: f64, dim: usize) -> Vec<Complex<f64>> {
    const STEPS: usize = 64;
    let h = eta / STEPS as f64;
    let sq: Vec<f64> = (0..=dim).map(|k| (k as f64).sqrt()).collect();
    let apply_x = |v: &[Complex<f64>]| -> Vec<Complex<f64>> {
        (0..dim)
            .map(|m| {
                let mut s = Complex::new(0.0, 0.0);
                if m > 0 {
                    s += v[m - 1] * sq[m];
                }
                if m + 1 < dim {
                    s += v[m + 1] * sq[m + 1];
                }
                s
            })
            .collect()
    };
    let mut v = vec![Complex::new(0.0, 0.0); dim];
    v[n] = Complex::new(1.0, 0.0);
    let ih = Complex::new(0.0, h);
    for _ in 0..STEPS {
        let mut term = v.clone();
        let mut acc = v.clone();
        for k in 1..=40 {
            let xt = apply_x(&term);
            let f = ih / k as f64;
            term = xt.into_iter().map(|t| t * f).collect();
            let mut small = true;
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += *t;
                if t.norm() > 1e-300 {
                    small = false;
                }
            }
            if small {
                break;
            }
        }
        v = acc;
    }
    v
}

/// Weighted centroid by brute-force enumeration of joint Fock states.
pub fn brute_centroid(center: f64, modes: &[(f64, Vec<f64>)]) -> f64 {
    fn rec(modes: &[(f64, Vec<f64>)], w: f64, s: f64, acc: &mut (f64, f64)) {
        match modes.split_first() {
            None => {
                acc.0 += w;
                acc.1 += w * s;
            }
            Some(((d, probs), rest)) => {
                for (n, &p) in probs.iter().enumerate() {
                    if p > 0.0 {
                        rec(rest, w * p, s + n as f64 * d, acc);
                    }
                }
            }
        }
    }
    let mut acc = (0.0, 0.0);
    rec(modes, 1.0, 0.0, &mut acc);
    center + acc.1 / acc.0
}

/// Thermal pmf p_0..=p_nmax by direct evaluation.
pub fn thermal_probs(nbar: f64, nmax: usize) -> Vec<f64> {
    (0..=nmax).map(|n| (nbar / (nbar + 1.0)).powi(n as i32) / (nbar + 1.0)).collect()
}

/// Poisson pmf of mean |α|² by recurrence.
pub fn coherent_probs(alpha: f64, nmax: usize) -> Vec<f64> {
    let m = alpha * alpha;
    let mut p = vec![(-m).exp()];
    for n in 1..=nmax {
        let prev = p[n - 1];
        p.push(prev * m / n as f64);
    }
    p
}
