//! Weighted least-squares polynomial fits in the radius and log-log
//! regression for power laws.

use nalgebra::{DMatrix, DVector};

/// Weighted polynomial fit `v ≈ Σ_j c_j r^j`, `j ≤ degree`.
#[derive(Debug, Clone)]
pub struct PolyFit {
    /// Coefficients in powers of `r` (not rescaled).
    pub coeffs: Vec<f64>,
    /// Sensitivity of the intercept to each datum: `c_0 = Σ_k g_k v_k`.
    pub intercept_gain: Vec<f64>,
    /// `max_k |v_k − fit(r_k)|`.
    pub max_residual: f64,
    /// `max_k |v_k − fit(r_k)| / σ_k`.
    pub max_scaled_residual: f64,
}

impl PolyFit {
    pub fn eval(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c)
    }
}

/// Fits with weights `1/σ_k`. Returns `None` when the system is rank
/// deficient (fewer distinct radii than coefficients).
pub fn weighted_poly_fit(r: &[f64], v: &[f64], sigma: &[f64], degree: usize) -> Option<PolyFit> {
    let n = r.len();
    let m = degree + 1;
    if n < m {
        return None;
    }
    let scale = r.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if scale == 0.0 {
        return None;
    }
    let smin = sigma.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = sigma.iter().map(|s| smin / s).collect();
    let a = DMatrix::from_fn(n, m, |i, j| w[i] * (r[i] / scale).powi(j as i32));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= smax * 1e-13 {
        return None;
    }
    let pinv = svd.pseudo_inverse(0.0).ok()?;
    let b = DVector::from_iterator(n, v.iter().zip(&w).map(|(v, w)| v * w));
    let c = &pinv * b;
    let coeffs: Vec<f64> = (0..m).map(|j| c[j] / scale.powi(j as i32)).collect();
    let intercept_gain: Vec<f64> = (0..n).map(|k| pinv[(0, k)] * w[k]).collect();
    let mut fit = PolyFit { coeffs, intercept_gain, max_residual: 0.0, max_scaled_residual: 0.0 };
    for k in 0..n {
        let res = (v[k] - fit.eval(r[k])).abs();
        fit.max_residual = fit.max_residual.max(res);
        fit.max_scaled_residual = fit.max_scaled_residual.max(res / sigma[k]);
    }
    Some(fit)
}

/// Ordinary least squares `y = a + b x` with the coefficient of determination.
pub fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (intercept, slope, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic_recovered() {
        let r: Vec<f64> = (0..8).map(|k| 0.5 * 0.7f64.powi(k)).collect();
        let v: Vec<f64> = r.iter().map(|r| 1.5 - 2.0 * r + 0.25 * r * r).collect();
        let s = vec![1e-15; 8];
        let f = weighted_poly_fit(&r, &v, &s, 2).unwrap();
        assert!((f.coeffs[0] - 1.5).abs() < 1e-13);
        assert!((f.coeffs[1] + 2.0).abs() < 1e-12);
        let g: f64 = f.intercept_gain.iter().sum();
        // Constants pass through the intercept unchanged.
        assert!((g - 1.0).abs() < 1e-10);
        assert!(f.max_residual < 1e-14);
    }

    #[test]
    fn rank_deficient_is_none() {
        assert!(weighted_poly_fit(&[0.1, 0.1, 0.1], &[1.0, 1.0, 1.0], &[1.0; 3], 1).is_none());
        assert!(weighted_poly_fit(&[0.1], &[1.0], &[1.0], 1).is_none());
    }

    #[test]
    fn regression_of_power_law() {
        let x: Vec<f64> = (0..6).map(|k| (0.1 * 0.5f64.powi(k)).ln()).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.0 - x).collect();
        let (a, b, r2) = linear_regression(&x, &y);
        assert!((a - 2.0).abs() < 1e-12 && (b + 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
