//! Central finite differences, used as the oracle for hand-written backward passes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Central-difference gradient of a scalar function at `x`.
pub fn finite_diff_gradient<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> f64,
{
    if h <= 0.0 {
        return Err(Error::InvalidArgument("step h must be positive".into()));
    }
    let mut probe = x.clone();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("finite difference evaluation"));
        }
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Relative error used by the gradient checks. The floor keeps entries whose
/// true gradient is essentially zero from dominating.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_sum_of_squares() {
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let g = finite_diff_gradient(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-5).unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-6);
        assert!((g.data()[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::from_vec(vec![0.5, -3.0, 9.0]);
        let g = finite_diff_gradient(|_| 4.2, &x, 1e-5).unwrap();
        assert!(g.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn non_finite_evaluation_is_an_error() {
        let x = Tensor::from_vec(vec![1.0]);
        assert!(finite_diff_gradient(|_| f64::NAN, &x, 1e-5).is_err());
        assert!(finite_diff_gradient(|_| 1.0, &x, 0.0).is_err());
    }
}
