//! Inverse-variance weighted mean of independent estimates, and power-law scaling fits.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Returns `(Σ xᵢ/σᵢ², 1/√Σ σᵢ⁻²)` normalized, i.e. the weighted mean and its standard error.
pub fn weighted_average(estimates: &[(f64, f64)]) -> Result<(f64, f64)> {
    if estimates.is_empty() {
        return invalid("no estimates to average");
    }
    let mut sw = 0.0;
    let mut swx = 0.0;
    for &(x, s) in estimates {
        if !(s > 0.0) || !s.is_finite() || !x.is_finite() {
            return invalid(format!("estimate ({x}, {s}) needs a finite value and positive sigma"));
        }
        let w = 1.0 / (s * s);
        sw += w;
        swx += w * x;
    }
    Ok((swx / sw, 1.0 / sw.sqrt()))
}

/// `y = prefactor · x^exponent`, with the 1σ error of the exponent propagated from the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub exponent: f64,
    pub exponent_err: f64,
    pub prefactor: f64,
}

impl PowerLaw {
    pub fn eval(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent)
    }
}

/// Weighted straight-line fit of ln y against ln x over `(x, y, σ_y)` points.
///
/// In log space each point carries σ_y / y, so the weights are (y/σ_y)².
pub fn power_law_fit(points: &[(f64, f64, f64)]) -> Result<PowerLaw> {
    if points.len() < 2 {
        return invalid("a power-law fit needs at least two points");
    }
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for &(x, y, s) in points {
        if !(x > 0.0 && y > 0.0 && s > 0.0) || !(x.is_finite() && y.is_finite() && s.is_finite()) {
            return invalid(format!("point ({x}, {y}, {s}) needs positive finite values"));
        }
        let w = (y / s).powi(2);
        sw += w;
        sx += w * x.ln();
        sy += w * y.ln();
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y, s) in points {
        let w = (y / s).powi(2);
        let dx = x.ln() - mx;
        sxx += w * dx * dx;
        sxy += w * dx * (y.ln() - my);
    }
    if !(sxx > 0.0) {
        return invalid("a power-law fit needs at least two distinct x values");
    }
    let exponent = sxy / sxx;
    Ok(PowerLaw {
        exponent,
        exponent_err: 1.0 / sxx.sqrt(),
        prefactor: (my - exponent * mx).exp(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_equal_weights() {
        let (m, s) = weighted_average(&[(1.0, 1.0), (3.0, 1.0)]).unwrap();
        assert!((m - 2.0).abs() < 1e-15);
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(weighted_average(&[(1.0, 0.0)]).is_err());
        assert!(weighted_average(&[]).is_err());
    }

    #[test]
    fn power_law_needs_spread() {
        assert!(power_law_fit(&[(2.0, 1.0, 0.1)]).is_err());
        assert!(power_law_fit(&[(2.0, 1.0, 0.1), (2.0, 3.0, 0.1)]).is_err());
        assert!(power_law_fit(&[(2.0, -1.0, 0.1), (3.0, 3.0, 0.1)]).is_err());
    }

    proptest! {
        #[test]
        fn identical_inputs(x in -10.0f64..10.0, s in 0.01f64..5.0, k in 1usize..20) {
            let (m, e) = weighted_average(&vec![(x, s); k]).unwrap();
            prop_assert!((m - x).abs() <= 1e-12 * x.abs().max(1.0));
            prop_assert!((e - s / (k as f64).sqrt()).abs() <= 1e-12 * s);
        }

        #[test]
        fn exact_power_law_is_recovered(
            k in -9.0f64..9.0,
            a in 0.01f64..100.0,
            xs in proptest::collection::btree_set(1u32..200, 2..8),
        ) {
            let pts: Vec<_> = xs.iter().map(|&x| {
                let y = a * (x as f64).powf(k);
                (x as f64, y, 0.05 * y)
            }).collect();
            let fit = power_law_fit(&pts).unwrap();
            prop_assert!((fit.exponent - k).abs() <= 1e-8 * k.abs().max(1.0));
            prop_assert!((fit.prefactor / a - 1.0).abs() <= 1e-6);
        }
    }
}
