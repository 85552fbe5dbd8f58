use thiserror::Error;

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error("non-finite value during gradient check: {0}")]
    NonFinite(String),
    #[error("gradient check target must be scalar, got {0}x{1}")]
    NonScalarTarget(usize, usize),
}

/// Compare reverse-mode gradients of a scalar computation against central
/// finite differences, component by component, and return the largest
/// relative error.
///
/// `build` must construct the same computation every call; `points` are the
/// differentiated inputs. Each component is perturbed by
/// `h = step * (1 + |x|)` and the relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn gradient_check<F>(build: F, points: &[Tensor], step: f64) -> Result<f64, GradCheckError>
where
    F: Fn(&Tape, &[Var]) -> Var,
{
    assert!(step > 0.0, "gradient_check: step must be positive");

    let eval = |inputs: &[Tensor]| -> Result<f64, GradCheckError> {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = build(&tape, &vars);
        if out.rows() != 1 || out.cols() != 1 {
            return Err(GradCheckError::NonScalarTarget(out.rows(), out.cols()));
        }
        if let Some(p) = tape.poisoned() {
            return Err(GradCheckError::NonFinite(p));
        }
        Ok(tape.scalar_value(out))
    };

    // Analytic pass.
    let tape = Tape::new();
    let vars: Vec<Var> = points.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&tape, &vars);
    if out.rows() != 1 || out.cols() != 1 {
        return Err(GradCheckError::NonScalarTarget(out.rows(), out.cols()));
    }
    if let Some(p) = tape.poisoned() {
        return Err(GradCheckError::NonFinite(p));
    }
    let grads = tape.backward(out);
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let mut max_rel = 0.0f64;
    let mut work: Vec<Tensor> = points.to_vec();
    for (pi, point) in points.iter().enumerate() {
        for i in 0..point.len() {
            let x = point.data()[i];
            let h = step * (1.0 + x.abs());
            work[pi].data_mut()[i] = x + h;
            let f_plus = eval(&work)?;
            work[pi].data_mut()[i] = x - h;
            let f_minus = eval(&work)?;
            work[pi].data_mut()[i] = x;

            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic[pi].data()[i];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(GradCheckError::NonFinite(format!(
                    "gradient component ({pi},{i})"
                )));
            }
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((a - numeric).abs() / denom);
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        // f(x) = x^2; analytic 6 at x = 3, quadratic so differences are exact.
        let err = gradient_check(
            |t, v| t.mul(v[0], v[0]),
            &[Tensor::scalar(3.0)],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn constant_has_zero_gradient() {
        let err = gradient_check(
            |t, v| {
                let c = t.leaf(Tensor::scalar(7.0));
                // v[0] participates only through a zero multiplier.
                let zero = t.sum(t.affine(v[0], 0.0, 0.0));
                t.add(c, zero)
            },
            &[Tensor::row(vec![1.0, -2.0])],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-10);
    }

    #[test]
    fn matmul_matches_finite_differences() {
        let a = Tensor::new(3, 4, (0..12).map(|i| (i as f64) * 0.3 - 1.5).collect());
        let b = Tensor::new(4, 2, (0..8).map(|i| (i as f64) * 0.25 - 0.9).collect());
        let err = gradient_check(
            |t, v| {
                let prod = t.matmul(v[0], v[1]);
                let sq = t.mul(prod, prod);
                t.mean(sq)
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }
}
