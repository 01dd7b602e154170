//! Central finite-difference verification of analytic gradients.

/// Step used for the central differences.
pub const FD_EPS: f64 = 1e-5;

/// Below this magnitude both gradients count as zero and only an absolute
/// tolerance applies.
const TINY: f64 = 1e-7;
const TINY_ABS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|)`; near-zero pairs are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let scale = analytic.abs().max(numeric.abs());
    if scale < TINY {
        if diff < TINY_ABS_TOL {
            0.0
        } else {
            diff / TINY
        }
    } else {
        diff / scale
    }
}

/// `|a - n| / max(|a|, |n|, floor)`. A floor matched to the precision of
/// the analytic pass keeps rounding noise on vanishing gradients from
/// counting as error.
pub fn relative_error_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Floor for comparing f32 analytic gradients against f64 differences.
pub const F32_FLOOR: f64 = 1e-4;

/// Compares the gradient returned by `f` at `theta` with central differences
/// of its loss, for every coordinate.
pub fn check_gradient<F>(theta: &[f64], f: F) -> GradCheck
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let all: Vec<usize> = (0..theta.len()).collect();
    check_gradient_at(theta, f, &all)
}

/// As [`check_gradient`], restricted to `indices`.
pub fn check_gradient_at<F>(theta: &[f64], mut f: F, indices: &[usize]) -> GradCheck
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(theta);
    assert_eq!(analytic.len(), theta.len(), "gradient length");
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: indices.len(),
    };
    let mut probe = theta.to_vec();
    for &i in indices {
        probe[i] = theta[i] + FD_EPS;
        let (plus, _) = f(&probe);
        probe[i] = theta[i] - FD_EPS;
        let (minus, _) = f(&probe);
        probe[i] = theta[i];
        let numeric = (plus - minus) / (2.0 * FD_EPS);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || err.is_nan() {
            report = GradCheck {
                max_rel_error: err,
                worst_index: i,
                analytic: analytic[i],
                numeric,
                checked: indices.len(),
            };
        }
    }
    report
}
