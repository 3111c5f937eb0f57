//! Finite-difference gradient checking with a fourth-order central stencil.
//!
//! The network contains max operations and cosines of short vectors, so the
//! loss can bend sharply within 1e-4 of a test point. The two-point
//! difference then carries truncation error well above 1e-4; the five-point
//! stencil keeps it below roundoff at the same step.

use super::{Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

/// Denominator floor for relative error, so coordinates whose true gradient is
/// zero are judged on absolute error instead.
pub const REL_ERROR_FLOOR: Real = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vec<Real>,
    pub numeric: Vec<Real>,
    /// Relative error per coordinate.
    pub errors: Vec<Real>,
    pub max_rel_error: Real,
    pub worst_index: usize,
    pub tolerance: Real,
    pub passed: bool,
}

pub fn relative_error(a: Real, n: Real) -> Real {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` against `(8(f(x+h) − f(x−h)) − (f(x+2h) − f(x−2h))) / 12h`.
pub fn check_gradient(
    value: impl Fn(&[Real]) -> Result<Real>,
    analytic: &[Real],
    point: &[Real],
    step: Real,
    tol: Real,
) -> Result<GradCheckReport> {
    if analytic.len() != point.len() {
        return Err(Error::Dimension {
            op: "check_gradient",
            lhs: vec![analytic.len()],
            rhs: vec![point.len()],
        });
    }
    if let Some(i) = analytic.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!("analytic gradient coordinate {i}")));
    }
    let mut x = point.to_vec();
    let mut numeric = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = x[i];
        let mut at = |offset: Real| -> Result<Real> {
            x[i] = orig + offset;
            let v = value(&x)?;
            if !v.is_finite() {
                return Err(Error::numeric(format!(
                    "function value near coordinate {i}"
                )));
            }
            Ok(v)
        };
        let (up, down) = (at(step)?, at(-step)?);
        let (up2, down2) = (at(2.0 * step)?, at(-2.0 * step)?);
        x[i] = orig;
        numeric.push((8.0 * (up - down) - (up2 - down2)) / (12.0 * step));
    }
    let errors: Vec<Real> = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .collect();
    let (worst_index, max_rel_error) = errors.iter().copied().enumerate().fold(
        (0, 0.0),
        |best, (i, e)| if e > best.1 { (i, e) } else { best },
    );
    Ok(GradCheckReport {
        analytic: analytic.to_vec(),
        numeric,
        errors,
        max_rel_error,
        worst_index,
        tolerance: tol,
        passed: max_rel_error < tol,
    })
}

/// Gradient check of a scalar function built on a fresh tape from `point`.
pub fn grad_check<F>(f: F, point: &Tensor, step: Real, tol: Real) -> Result<GradCheckReport>
where
    F: for<'g> Fn(&mut Graph<'g>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.input(point.clone(), true);
    let y = f(&mut g, x)?;
    let mut grads = g.backward(y)?;
    let analytic = grads.take_or_zero(x).into_data();
    let shape = point.shape().to_vec();
    let value = |xs: &[Real]| -> Result<Real> {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(shape.clone(), xs.to_vec())?, false);
        let y = f(&mut g, x)?;
        Ok(g.value(y).item())
    };
    check_gradient(value, &analytic, point.data(), step, tol)
}
