//! Exact minimizers for gap traces: normal equations for ridge, damped
//! Newton for the classification losses.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::objective::{FiniteSum, LossKind, ObjectiveSpec};
use crate::vecops::norm;

#[derive(Debug, Clone)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
}

fn newton_direction(hess: Vec<f64>, grad: &[f64]) -> Result<Vec<f64>> {
    let d = grad.len();
    let chol = DMatrix::from_row_slice(d, d, &hess)
        .cholesky()
        .ok_or(Error::StrongConvexityUnavailable)?;
    let step = chol.solve(&DVector::from_column_slice(grad));
    Ok(step.iter().map(|v| -v).collect())
}

/// `((2/N)AᵀA + λI)x = (2/N)Aᵀb`, refined by one residual correction.
pub fn ridge_closed_form(spec: &ObjectiveSpec) -> Result<Vec<f64>> {
    if spec.loss() != LossKind::Square {
        return Err(Error::param("loss", "closed form needs the square loss"));
    }
    let d = spec.data().dim();
    let mut x = vec![0.0; d];
    for _ in 0..2 {
        let g = spec.full_gradient(&x)?;
        let dir = newton_direction(spec.mean_hessian(&x), &g)?;
        x.iter_mut().zip(&dir).for_each(|(a, b)| *a += b);
    }
    Ok(x)
}

/// Damped Newton with Armijo backtracking from `x0`.
pub fn newton(spec: &ObjectiveSpec, x0: &[f64], tol: f64, max_iter: usize) -> Result<Optimum> {
    let mut x = x0.to_vec();
    let mut value = spec.full_value(&x)?;
    let mut g = spec.full_gradient(&x)?;
    for _ in 0..max_iter {
        if norm(&g) <= tol {
            break;
        }
        let dir = newton_direction(spec.mean_hessian(&x), &g)?;
        let slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let v = spec.mean_value(&trial);
            if v <= value + 1e-4 * t * slope {
                x = trial;
                value = v;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        g = spec.full_gradient(&x)?;
        if !accepted {
            // no further decrease representable in floating point
            break;
        }
    }
    Ok(Optimum {
        grad_norm: norm(&g),
        value,
        x,
    })
}

/// Minimizer of `spec`, to roughly machine precision in the gradient.
pub fn solve_exact(spec: &ObjectiveSpec) -> Result<Optimum> {
    if !(spec.lambda() > 0.0) {
        return Err(Error::StrongConvexityUnavailable);
    }
    let d = spec.data().dim();
    let x0 = match spec.loss() {
        LossKind::Square => ridge_closed_form(spec)?,
        _ => vec![0.0; d],
    };
    newton(spec, &x0, 1e-14, 100)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::Dataset;
    use crate::rng::{stream, StreamRole};
    use rand::Rng;

    fn data(n: usize, d: usize, classify: bool, seed: u64) -> Dataset {
        let mut rng = stream(seed, StreamRole::Data);
        let feats: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<f64> = (0..n)
            .map(|_| {
                if classify {
                    if rng.random_bool(0.5) { 1.0 } else { -1.0 }
                } else {
                    rng.random_range(-1.0..1.0)
                }
            })
            .collect();
        Dataset::new(d, feats, labels).unwrap()
    }

    #[test]
    fn ridge_solution_is_stationary() {
        let spec = ObjectiveSpec::new(LossKind::Square, data(200, 6, false, 1), 0.01).unwrap();
        let opt = solve_exact(&spec).unwrap();
        assert!(opt.grad_norm < 1e-10);
    }

    #[test]
    fn classification_solutions_are_stationary() {
        for loss in [LossKind::Logistic, LossKind::SmoothHinge] {
            let spec = ObjectiveSpec::new(loss, data(300, 5, true, 2), 0.001).unwrap();
            let opt = solve_exact(&spec).unwrap();
            assert!(opt.grad_norm < 1e-10, "{loss:?} {}", opt.grad_norm);
        }
    }

    #[test]
    fn heavy_regularization_pushes_to_origin() {
        let spec = ObjectiveSpec::new(LossKind::Square, data(50, 3, false, 3), 1e8).unwrap();
        let x = ridge_closed_form(&spec).unwrap();
        assert!(norm(&x) < 1e-7);
    }

    #[test]
    fn zero_lambda_is_rejected() {
        let spec = ObjectiveSpec::new(LossKind::Logistic, data(20, 2, true, 4), 0.0).unwrap();
        assert!(matches!(solve_exact(&spec), Err(Error::StrongConvexityUnavailable)));
    }
}
