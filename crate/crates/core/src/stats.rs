//! Small descriptive-statistics helpers shared by the estimators.

/// z-quantile used for the two-sided 95% normal-approximation intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Linear-interpolation quantile (R type 7) of an unsorted sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Least-squares slope of `y` against `x`. `None` with fewer than two
/// points or a degenerate abscissa.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for i in 0..n {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx).powi(2);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Start index of the trailing window holding `fraction` of `len` points
/// (at least one point).
pub fn tail_start(len: usize, fraction: f64) -> usize {
    let take = ((len as f64) * fraction.clamp(0.0, 1.0)).ceil() as usize;
    len - take.clamp(1, len.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn slope_of_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 0.9 * v + 2.0).collect();
        assert!((ls_slope(&x, &y).unwrap() - 0.9).abs() < 1e-14);
        assert!(ls_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn tail_window() {
        assert_eq!(tail_start(120, 0.25), 90);
        assert_eq!(tail_start(3, 0.25), 2);
        assert_eq!(tail_start(10, 1.0), 0);
    }
}
