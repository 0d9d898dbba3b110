//! Random Fourier features for the Gaussian kernel.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::objective::Dataset;

/// Maps each row `a` to `√(2/D)·(cos ωᵢᵀa, sin ωᵢᵀa)_{i ≤ D/2}` with
/// `ωᵢ ~ N(0, I/bw²)`, so that `z(a)ᵀz(a′) ≈ exp(−‖a−a′‖²/(2·bw²))`.
pub fn rff_transform<R: Rng + ?Sized>(data: &Dataset, target_dim: usize, bandwidth: f64, rng: &mut R) -> Result<Dataset> {
    if target_dim == 0 || !target_dim.is_multiple_of(2) {
        return Err(Error::param("rff_dim", format!("must be positive and even, got {target_dim}")));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::param("rff_bandwidth", format!("must be positive, got {bandwidth}")));
    }
    let d = data.dim();
    let half = target_dim / 2;
    let normal = Normal::new(0.0, 1.0 / bandwidth).expect("positive scale");
    let omegas: Vec<f64> = (0..half * d).map(|_| normal.sample(rng)).collect();
    let scale = (2.0 / target_dim as f64).sqrt();
    let mut features = Vec::with_capacity(data.len() * target_dim);
    for i in 0..data.len() {
        let a = data.row(i);
        for w in omegas.chunks(d) {
            let z: f64 = w.iter().zip(a).map(|(x, y)| x * y).sum();
            features.push(scale * z.cos());
            features.push(scale * z.sin());
        }
    }
    Dataset::new(target_dim, features, data.labels().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamRole};

    #[test]
    fn identical_points_map_identically() {
        let data = Dataset::new(2, vec![0.3, -0.1, 0.3, -0.1], vec![1.0, 1.0]).unwrap();
        let z = rff_transform(&data, 10, 1.0, &mut stream(1, StreamRole::Features)).unwrap();
        assert_eq!(z.row(0), z.row(1));
        let self_dot: f64 = z.row(0).iter().map(|v| v * v).sum();
        assert!((self_dot - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        let data = Dataset::new(1, vec![1.0], vec![1.0]).unwrap();
        let mut rng = stream(0, StreamRole::Features);
        assert!(rff_transform(&data, 3, 1.0, &mut rng).is_err());
        assert!(rff_transform(&data, 4, 0.0, &mut rng).is_err());
    }
}
