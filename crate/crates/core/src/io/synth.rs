//! Synthetic regression and classification instances.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::objective::{Dataset, LossKind, ObjectiveSpec};
use crate::optimum::ridge_closed_form;

fn unit_rows<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<f64> {
    let mut feats = Vec::with_capacity(n * d);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        feats.extend(row.iter().map(|v| v / norm));
    }
    feats
}

/// `λ` giving `κ = (2 + λ)/λ` for unit-norm rows under the square loss.
pub fn ridge_lambda_for_kappa(kappa: f64) -> Result<f64> {
    if !(kappa > 1.0 && kappa.is_finite()) {
        return Err(Error::param("kappa", format!("target must exceed 1, got {kappa}")));
    }
    Ok(2.0 / (kappa - 1.0))
}

/// Ridge instance with unit-norm Gaussian rows, noisy linear targets and
/// `λ` set so that the estimated condition number equals `kappa`.
/// Returns the objective and its minimizer.
pub fn synth_ridge<R: Rng + ?Sized>(n: usize, d: usize, kappa: f64, rng: &mut R) -> Result<(ObjectiveSpec, Vec<f64>)> {
    synth_ridge_with_lambda(n, d, ridge_lambda_for_kappa(kappa)?, rng)
}

pub fn synth_ridge_with_lambda<R: Rng + ?Sized>(n: usize, d: usize, lambda: f64, rng: &mut R) -> Result<(ObjectiveSpec, Vec<f64>)> {
    if n == 0 || d == 0 {
        return Err(Error::EmptyDataset);
    }
    let feats = unit_rows(n, d, rng);
    let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let labels: Vec<f64> = feats
        .chunks(d)
        .map(|a| {
            let noise: f64 = StandardNormal.sample(rng);
            a.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>() + 0.1 * noise
        })
        .collect();
    let spec = ObjectiveSpec::new(LossKind::Square, Dataset::new(d, feats, labels)?, lambda)?;
    let x_star = ridge_closed_form(&spec)?;
    Ok((spec, x_star))
}

/// Unit-norm Gaussian rows with labels `sign(aᵀw)`, 5% flipped.
pub fn synth_classification<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::EmptyDataset);
    }
    let feats = unit_rows(n, d, rng);
    let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let labels: Vec<f64> = feats
        .chunks(d)
        .map(|a| {
            let z: f64 = a.iter().zip(&w).map(|(x, y)| x * y).sum();
            let y = if z >= 0.0 { 1.0 } else { -1.0 };
            if rng.random_bool(0.05) { -y } else { y }
        })
        .collect();
    Dataset::new(d, feats, labels)
}

pub fn synth_logistic<R: Rng + ?Sized>(n: usize, d: usize, lambda: f64, rng: &mut R) -> Result<ObjectiveSpec> {
    ObjectiveSpec::new(LossKind::Logistic, synth_classification(n, d, rng)?, lambda)
}
