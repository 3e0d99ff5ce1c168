//! Exponential-decay fitting `value ≈ A · χ^K`.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMethod {
    /// Weighted linear regression of `ln|value|` against `K`.
    LogLinear,
    /// Golden-section search over `χ ∈ (0, 1]` with the optimal `A` for each `χ`.
    GoldenSection,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult {
    pub amplitude: f64,
    pub chi: f64,
    /// Root-mean-square residual in value space.
    pub rms: f64,
    /// Standard error of `χ` from the regression residuals, when available.
    pub chi_stderr: Option<f64>,
    pub method: FitMethod,
}

const GOLDEN_TOL: f64 = 1e-13;

/// Fits `values[i] ≈ A · χ^{ks[i]}` with optional non-negative weights.
pub fn fit_decay(ks: &[f64], values: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    if ks.len() != values.len() || weights.is_some_and(|w| w.len() != ks.len()) {
        return Err(Error::Validation(
            "fit columns have different lengths".into(),
        ));
    }
    if ks.len() < 2 {
        return Err(Error::Validation(
            "at least two points are needed for a fit".into(),
        ));
    }
    if values.iter().chain(ks).any(|v| !v.is_finite()) {
        return Err(Error::Validation("fit data must be finite".into()));
    }
    let ones = vec![1.0; ks.len()];
    let w = weights.unwrap_or(&ones);
    if w.iter().any(|&x| x.is_nan() || x < 0.0) || w.iter().all(|&x| x == 0.0) {
        return Err(Error::Validation(
            "weights must be non-negative and not all zero".into(),
        ));
    }
    let positive = values.iter().all(|&v| v > 0.0);
    let negative = values.iter().all(|&v| v < 0.0);
    if positive || negative {
        if let Some(fit) = log_linear(ks, values, w, if positive { 1.0 } else { -1.0 }) {
            return Ok(fit);
        }
    }
    Ok(golden_section(ks, values, w))
}

fn rms(ks: &[f64], values: &[f64], a: f64, chi: f64) -> f64 {
    let ss: f64 = ks
        .iter()
        .zip(values)
        .map(|(k, v)| (v - a * chi.powf(*k)).powi(2))
        .sum();
    (ss / ks.len() as f64).sqrt()
}

fn log_linear(ks: &[f64], values: &[f64], w: &[f64], sign: f64) -> Option<FitResult> {
    let ys: Vec<f64> = values.iter().map(|v| v.abs().ln()).collect();
    let sw: f64 = w.iter().sum();
    let mk = ks.iter().zip(w).map(|(k, w)| k * w).sum::<f64>() / sw;
    let my = ys.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = ks.iter().zip(w).map(|(k, w)| w * (k - mk).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = ks
        .iter()
        .zip(&ys)
        .zip(w)
        .map(|((k, y), w)| w * (k - mk) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mk;
    let (chi, a) = (slope.exp(), sign * intercept.exp());
    let n = ks.len();
    let chi_stderr = (n > 2).then(|| {
        let rss: f64 = ks
            .iter()
            .zip(&ys)
            .zip(w)
            .map(|((k, y), w)| w * (y - intercept - slope * k).powi(2))
            .sum();
        let var = rss / (n - 2) as f64 * n as f64 / sw;
        chi * (var / sxx).sqrt()
    });
    Some(FitResult {
        amplitude: a,
        chi,
        rms: rms(ks, values, a, chi),
        chi_stderr,
        method: FitMethod::LogLinear,
    })
}

fn best_amplitude(ks: &[f64], values: &[f64], w: &[f64], chi: f64) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for ((k, v), w) in ks.iter().zip(values).zip(w) {
        let b = chi.powf(*k);
        num += w * v * b;
        den += w * b * b;
    }
    let a = if den > 0.0 { num / den } else { 0.0 };
    let ss = ks
        .iter()
        .zip(values)
        .zip(w)
        .map(|((k, v), w)| w * (v - a * chi.powf(*k)).powi(2))
        .sum();
    (a, ss)
}

fn golden_section(ks: &[f64], values: &[f64], w: &[f64]) -> FitResult {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (1e-12, 1.0);
    let cost = |chi: f64| best_amplitude(ks, values, w, chi).1;
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while hi - lo > GOLDEN_TOL {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = cost(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = cost(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    let chi = [mid, 1.0]
        .into_iter()
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .unwrap_or(mid);
    let a = best_amplitude(ks, values, w, chi).0;
    FitResult {
        amplitude: a,
        chi,
        rms: rms(ks, values, a, chi),
        chi_stderr: None,
        method: FitMethod::GoldenSection,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_geometric_series() {
        let ks: Vec<f64> = (1..=20).map(f64::from).collect();
        let vs: Vec<f64> = ks.iter().map(|k| 0.9f64.powf(*k)).collect();
        let fit = fit_decay(&ks, &vs, None).unwrap();
        assert_eq!(fit.method, FitMethod::LogLinear);
        assert!((fit.chi - 0.9).abs() < 1e-6);
        assert!((fit.amplitude - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_series() {
        let ks = [1.0, 2.0, 3.0, 4.0, 5.0];
        let fit = fit_decay(&ks, &[0.7; 5], None).unwrap();
        assert!((fit.chi - 1.0).abs() < 1e-12);
        assert!((fit.amplitude - 0.7).abs() < 1e-12);
    }

    #[test]
    fn sign_changes_use_golden_section() {
        let ks: Vec<f64> = (0..12).map(f64::from).collect();
        let mut vs: Vec<f64> = ks.iter().map(|k| 0.5 * 0.8f64.powf(*k)).collect();
        vs[11] = -1e-4;
        let fit = fit_decay(&ks, &vs, None).unwrap();
        assert_eq!(fit.method, FitMethod::GoldenSection);
        assert!((fit.chi - 0.8).abs() < 1e-2);
        assert!((fit.amplitude - 0.5).abs() < 1e-2);
    }

    #[test]
    fn rejects_short_or_mismatched_input() {
        assert!(fit_decay(&[1.0], &[0.5], None).is_err());
        assert!(fit_decay(&[1.0, 2.0], &[0.5], None).is_err());
    }
}
