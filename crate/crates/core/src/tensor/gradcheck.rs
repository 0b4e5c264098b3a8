//! Central-difference gradient verification in `f64`.

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Clone, Debug)]
pub struct GradReport {
    pub max_rel_err: f64,
    /// Index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Default step for central differences in 64-bit mode. Extrapolation
/// cancels the O(h²) truncation term, so the step can stay large enough
/// that roundoff in `f` is negligible.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Relative error with a unit-scale floor on the denominator, so coordinates
/// whose true gradient is ~0 are judged by absolute error instead.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` with the central-difference gradient of `f` at `x`.
///
/// `f` maps the full coordinate vector to a scalar loss. Every coordinate is
/// perturbed by `±h` and `±h/2`; Richardson extrapolation of the two central
/// differences leaves an O(h⁴) error.
pub fn grad_check(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    tolerance: f64,
    floor: f64,
) -> GradReport {
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let mut probe = x.to_vec();
    let mut report = GradReport {
        max_rel_err: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        tolerance,
        passed: true,
    };
    for i in 0..x.len() {
        let orig = probe[i];
        let mut central = |step: f64| {
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        };
        let coarse = central(h);
        let fine = central(h / 2.0);
        let numeric = (4.0 * fine - coarse) / 3.0;
        let err = rel_err(analytic[i], numeric, floor);
        if err > report.max_rel_err || !err.is_finite() {
            report.max_rel_err = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    report.passed = report.max_rel_err.is_finite() && report.max_rel_err <= tolerance;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes() {
        let x = [1.0, -2.0, 3.0];
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r = grad_check(|v| v.iter().map(|a| a * a).sum(), &x, &g, DEFAULT_STEP, 1e-8, 1e-6);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn extrapolation_removes_cubic_truncation() {
        // Plain central differences of x³ are off by h², far above 1e-12 at h = 1e-2.
        let r = grad_check(|v| v[0].powi(3), &[1.5], &[6.75], 1e-2, 1e-12, 1e-6);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn wrong_gradient_fails() {
        let x = [1.0, 2.0];
        let r = grad_check(|v| v[0] * v[1], &x, &[2.0, 2.0], DEFAULT_STEP, 1e-4, 1e-6);
        assert!(!r.passed);
        assert_eq!(r.worst_index, 1);
    }
}
