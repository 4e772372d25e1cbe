use crate::error::{Error, Result};

/// Central-difference Hessian-vector product
/// `(∇L(θ + εv) - ∇L(θ - εv)) / 2ε` for any gradient oracle.
pub fn hvp_fd<F>(theta: &[f64], mut grad: F, v: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("hvp step must be positive, got {eps}")));
    }
    if v.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("hvp direction"));
    }
    let shifted = |sign: f64| -> Vec<f64> {
        theta.iter().zip(v).map(|(t, d)| t + sign * eps * d).collect()
    };
    let plus = grad(&shifted(1.0))?;
    let minus = grad(&shifted(-1.0))?;
    let out: Vec<f64> = plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) / (2.0 * eps))
        .collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("hessian-vector product"));
    }
    Ok(out)
}
