//! Sample statistics used by the ensemble engine and the acceptance checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Large-sample standard error of the sample variance, assuming the kurtosis
/// measured from the data.
pub fn variance_stderr(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if n < 4.0 {
        return f64::INFINITY;
    }
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
}

/// Two-sided χ² confidence interval for a Gaussian variance.
pub fn variance_interval(sample_var: f64, n: usize, confidence: f64) -> (f64, f64) {
    let dof = (n - 1) as f64;
    let chi = ChiSquared::new(dof).expect("dof > 0");
    let alpha = 1.0 - confidence;
    let lo = dof * sample_var / chi.inverse_cdf(1.0 - alpha / 2.0);
    let hi = dof * sample_var / chi.inverse_cdf(alpha / 2.0);
    (lo, hi)
}

/// Linear interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Histogram with `bins` bins, or Freedman–Diaconis width when `None`.
pub fn histogram(xs: &[f64], bins: Option<usize>) -> Histogram {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let span = hi - lo;
    let count = match bins {
        Some(b) => b.max(1),
        None => {
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
            if width > 0.0 && span > 0.0 {
                ((span / width).ceil() as usize).clamp(1, 1000)
            } else {
                1
            }
        }
    };
    let width = if span > 0.0 { span / count as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=count).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; count];
    for &x in xs {
        let k = (((x - lo) / width) as usize).min(count - 1);
        counts[k] += 1;
    }
    Histogram { edges, counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

/// Weighted least squares y = a + b x with weights 1/σ². Pass σ = 1 for an
/// unweighted fit; the slope error then comes from the residuals.
pub fn linear_fit(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> LinearFit {
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; x.len()],
    };
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;

    let ybar = mean(y);
    let ss_res: f64 = x.iter().zip(y).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|y| (y - ybar).powi(2)).sum();
    let slope_stderr = match sigma {
        Some(_) => (sw / det).sqrt(),
        None if x.len() > 2 => (ss_res / (x.len() - 2) as f64 * sw / det).sqrt(),
        None => 0.0,
    };
    LinearFit {
        slope,
        intercept,
        slope_stderr,
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert_relative_eq!(variance(&xs), 5.0 / 3.0);
        assert_eq!(variance(&[3.0]), 0.0);
    }

    #[test]
    fn chi_square_interval_brackets_estimate() {
        let (lo, hi) = variance_interval(2.0, 87, 0.95);
        assert!(lo < 2.0 && hi > 2.0);
        // 86 dof: χ²₀.₉₇₅ ≈ 113.5, χ²₀.₀₂₅ ≈ 62.2
        assert_relative_eq!(lo, 86.0 * 2.0 / 113.5, max_relative = 0.01);
        assert_relative_eq!(hi, 86.0 * 2.0 / 62.24, max_relative = 0.01);
    }

    #[test]
    fn histogram_counts_everything() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 10.0).collect();
        let h = histogram(&xs, Some(20));
        assert_eq!(h.counts.len(), 20);
        assert_eq!(h.edges.len(), 21);
        assert_eq!(h.counts.iter().sum::<u64>(), 1000);
        let fd = histogram(&xs, None);
        assert_eq!(fd.counts.iter().sum::<u64>(), 1000);
        assert!(fd.counts.len() > 1);
        let flat = histogram(&[1.0, 1.0, 1.0], None);
        assert_eq!(flat.counts, vec![3]);
    }

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|x| 0.5 + 2.0 * x).collect();
        let f = linear_fit(&x, &y, None);
        assert_relative_eq!(f.slope, 2.0, max_relative = 1e-12);
        assert_relative_eq!(f.intercept, 0.5, max_relative = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0);
        let w = linear_fit(&x, &y, Some(&[0.1, 0.2, 0.3, 0.4]));
        assert_relative_eq!(w.slope, 2.0, max_relative = 1e-12);
        assert!(w.slope_stderr > 0.0);
    }
}
