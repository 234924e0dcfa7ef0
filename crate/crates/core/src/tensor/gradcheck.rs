//! Central finite-difference gradient checking.

/// Step used by the checks throughout the crate.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Absolute disagreement below which a central difference at `DEFAULT_EPS`
/// cannot tell two derivatives apart: an O(1) objective carries ~1e-16
/// rounding per evaluation, amplified by `1/(2·eps)`.
pub const FD_RESOLUTION: f64 = 1e-10;

/// `|a - n| / (max(|a|, |n|) + 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs().max(numeric.abs()) + 1e-12)
}

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheck {
    /// Worst relative error over every entry.
    pub max_relative: f64,
    /// Worst relative error over entries whose absolute disagreement exceeds
    /// [`FD_RESOLUTION`].
    pub max_relative_resolved: f64,
    /// Entries with relative error above 1e-4 that agree to within `FD_RESOLUTION`.
    pub below_resolution: usize,
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_resolved < tolerance
    }

    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            max_relative: self.max_relative.max(other.max_relative),
            max_relative_resolved: self.max_relative_resolved.max(other.max_relative_resolved),
            below_resolution: self.below_resolution + other.below_resolution,
            checked: self.checked + other.checked,
        }
    }
}

/// Compares `analytic[i]` against `(f(i, +eps) - f(i, -eps)) / 2eps` for every
/// index, where `f(i, d)` evaluates the objective with parameter `i` shifted by `d`.
pub fn check_gradient<F>(analytic: &[f64], eps: f64, mut f: F) -> GradCheck
where
    F: FnMut(usize, f64) -> f64,
{
    let mut out = GradCheck::default();
    for (i, &a) in analytic.iter().enumerate() {
        let numeric = (f(i, eps) - f(i, -eps)) / (2.0 * eps);
        let rel = relative_error(a, numeric);
        out.checked += 1;
        out.max_relative = out.max_relative.max(rel);
        if (a - numeric).abs() > FD_RESOLUTION {
            out.max_relative_resolved = out.max_relative_resolved.max(rel);
        } else if rel > 1e-4 {
            out.below_resolution += 1;
        }
    }
    out
}

/// Worst relative error of `analytic` against central differences.
pub fn max_relative_error<F>(analytic: &[f64], eps: f64, f: F) -> f64
where
    F: FnMut(usize, f64) -> f64,
{
    check_gradient(analytic, eps, f).max_relative
}

/// Checks `analytic` as the gradient of `f` at `params`; returns the worst relative error.
pub fn grad_check<F>(f: F, params: &[f64], analytic: &[f64], eps: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    grad_check_report(f, params, analytic, eps).max_relative
}

pub fn grad_check_report<F>(f: F, params: &[f64], analytic: &[f64], eps: f64) -> GradCheck
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length must match parameters");
    let mut probe = params.to_vec();
    check_gradient(analytic, eps, |i, d| {
        probe[i] = params[i] + d;
        let v = f(&probe);
        probe[i] = params[i];
        v
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_map_is_exact() {
        let coeffs = [0.5, -2.0, 3.25, 1e-3];
        let f = |p: &[f64]| p.iter().zip(&coeffs).map(|(a, b)| a * b).sum::<f64>();
        let err = grad_check(f, &[0.0; 4], &coeffs, DEFAULT_EPS);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn planted_fault_is_detected() {
        // f = Σ p², true gradient 2p; report 4p instead.
        let params = [0.3, -0.7, 1.1];
        let wrong: Vec<f64> = params.iter().map(|p| 4.0 * p).collect();
        let report = grad_check_report(|p| p.iter().map(|v| v * v).sum(), &params, &wrong, DEFAULT_EPS);
        assert!((report.max_relative - 0.5).abs() < 1e-6, "{report:?}");
        assert!(!report.passes(1e-4));
    }

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tiny_disagreements_are_below_resolution() {
        let r = check_gradient(&[3.0e-10, 1.0], 1e-5, |i, d| if i == 0 { 3.2e-10 * d } else { d });
        assert!(r.max_relative > 1e-4);
        assert_eq!(r.below_resolution, 1);
        assert!(r.passes(1e-4));
    }
}
