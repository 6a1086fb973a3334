//! Small statistics toolbox for Monte Carlo estimates (always in `f64`).

use serde::{Deserialize, Serialize};
use libm::erfc;

/// Wilson score interval for `k` successes in `n` trials at normal
/// quantile `z`.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let den = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / den;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / den;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Unbiased sample variance and the standard error of that estimate
/// (from the fourth central moment).
pub fn variance_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - (n - 3.0) / (n - 1.0) * m2 * m2) / n).max(0.0).sqrt();
    (var, se)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `P(Z ≥ z)` for a standard normal `Z`.
pub fn normal_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Ordinary least squares fit `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
    pub slope_se: f64,
}

/// Weighted least squares with weights `w_i = 1/σ_i²`; the standard errors
/// are the propagated `σ_i`. With exactly two points the line interpolates.
pub fn weighted_line(x: &[f64], y: &[f64], sigma: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n || sigma.len() != n {
        return None;
    }
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    Some(LineFit {
        intercept: (sxx * sy - sx * sxy) / det,
        slope: (sw * sxy - sx * sy) / det,
        intercept_se: (sxx / det).sqrt(),
        slope_se: (sw / det).sqrt(),
    })
}

/// Unweighted least squares with standard errors from the residuals.
pub fn ols_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_se, intercept_se) = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let s2 = rss / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Some(LineFit { intercept, slope, intercept_se, slope_se })
}

/// `log(mean(exp(a_i)))` computed stably.
pub fn log_mean_exp(a: &[f64]) -> f64 {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    (a.iter().map(|x| (x - m).exp()).sum::<f64>() / a.len() as f64).ln() + m
}

/// Jackknife estimate and standard error of `stat` over leave-one-out
/// subsamples, evaluated on `groups` contiguous blocks.
pub fn jackknife(xs: &[f64], groups: usize, stat: impl Fn(&[f64]) -> f64) -> (f64, f64) {
    let n = xs.len();
    let g = groups.clamp(2, n.max(2));
    let full = stat(xs);
    let bounds: Vec<usize> = (0..=g).map(|i| i * n / g).collect();
    let leave: Vec<f64> = (0..g)
        .map(|i| {
            let mut sub = Vec::with_capacity(n);
            sub.extend_from_slice(&xs[..bounds[i]]);
            sub.extend_from_slice(&xs[bounds[i + 1]..]);
            stat(&sub)
        })
        .collect();
    let gm = leave.iter().sum::<f64>() / g as f64;
    let var = (g as f64 - 1.0) / g as f64 * leave.iter().map(|v| (v - gm).powi(2)).sum::<f64>();
    (g as f64 * full - (g as f64 - 1.0) * gm, var.sqrt())
}

/// Kish effective sample size of weights `exp(a_i)`.
pub fn effective_sample_size(a: &[f64]) -> f64 {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = a.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    s * s / s2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_estimate() {
        let (lo, hi) = wilson(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson(0, 1000, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
    }

    #[test]
    fn fits() {
        let x = [1.0, 2.0, 3.0];
        let y = [3.0, 5.0, 7.0];
        let f = ols_line(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        let w = weighted_line(&x[..2], &y[..2], &[0.1, 0.2]).unwrap();
        assert!((w.slope - 2.0).abs() < 1e-12 && (w.intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tails_and_means() {
        assert!((normal_tail(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_tail(1.959963984540054) - 0.025).abs() < 1e-12, "{}", normal_tail(1.959963984540054) - 0.025);
        assert!((log_mean_exp(&[0.0, 0.0]) - 0.0).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        let (m, _) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
    }
}
