//! Least-squares rate fits on log₂ scales.

/// Slope of the least-squares line through `(x_i, y_i)`; `None` with fewer
/// than two points or no spread in `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let m = x.len();
    if m < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / m as f64;
    let my = y.iter().sum::<f64>() / m as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

fn usable(points: impl Iterator<Item = (f64, f64)>) -> (Vec<f64>, Vec<f64>) {
    points
        .filter(|&(x, y)| x.is_finite() && y.is_finite() && y > 0.0)
        .unzip()
}

/// Slope of `log₂ E` against `n`. Nonpositive or non-finite values are skipped.
pub fn n_slope(ns: &[f64], values: &[f64]) -> Option<f64> {
    let (x, y) = usable(ns.iter().cloned().zip(values.iter().cloned()));
    least_squares_slope(&x, &y.iter().map(|v| v.log2()).collect::<Vec<_>>())
}

/// Exponent `a` in `E ≈ C·t^a`, fitted on `(log₂ t, log₂ E)`. Points with
/// `t <= 0` are skipped.
pub fn power_exponent(ts: &[f64], values: &[f64]) -> Option<f64> {
    let (x, y) = usable(
        ts.iter()
            .cloned()
            .zip(values.iter().cloned())
            .filter(|&(t, _)| t > 0.0),
    );
    least_squares_slope(
        &x.iter().map(|t| t.log2()).collect::<Vec<_>>(),
        &y.iter().map(|v| v.log2()).collect::<Vec<_>>(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_lines() {
        assert_relative_eq!(least_squares_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap(), 2.0);
        assert_eq!(least_squares_slope(&[1.0], &[2.0]), None);
        assert_eq!(least_squares_slope(&[1.0, 1.0], &[2.0, 3.0]), None);
    }

    #[test]
    fn geometric_decay() {
        let ns = [4.0, 5.0, 6.0, 7.0];
        let e: Vec<f64> = ns.iter().map(|n| 3.0 * 2f64.powf(-0.75 * n)).collect();
        assert_relative_eq!(n_slope(&ns, &e).unwrap(), -0.75, epsilon = 1e-12);
    }

    #[test]
    fn power_law() {
        let ts = [0.0, 0.05, 0.1, 0.2, 0.4];
        let e: Vec<f64> = ts.iter().map(|t| 0.7 * t * t).collect();
        assert_relative_eq!(power_exponent(&ts, &e).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn bad_points_are_skipped() {
        let ns = [4.0, 5.0, 6.0];
        assert_relative_eq!(n_slope(&ns, &[1.0, f64::NAN, 0.25]).unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(n_slope(&ns, &[1.0, 0.0, -1.0]), None);
    }
}
