//! Central finite differences, used as the independent oracle for every
//! hand-written reverse pass.

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest coordinate-wise relative error `|a-b| / max(|a|, |b|, floor)`.
///
/// The floor keeps coordinates whose true gradient is (numerically) zero from
/// dominating through cancellation noise.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differentiates_a_polynomial() {
        let g = central_difference(&[1.0, -2.0], 1e-4, |x| x[0] * x[0] * x[1] + 3.0 * x[1]);
        assert!((g[0] - (-4.0)).abs() < 1e-7);
        assert!((g[1] - 4.0).abs() < 1e-7);
    }
}
