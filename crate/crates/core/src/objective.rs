//! Finite-sum objectives `f(x) = (1/N) Σ f_i(x)`.
//!
//! The solvers only see the [`FiniteSum`] trait. Regularized empirical risk
//! ([`ObjectiveSpec`]) and the chain-function hard instances of
//! [`crate::lowerbound`] both implement it, and [`Proximal`] wraps any
//! implementation with the term `(σ/2)‖x − y‖²`.

use crate::error::{Error, Result};
use crate::vecops::{dot, norm_sq};

/// A family of `N` smooth component functions on `R^d`.
///
/// The unchecked methods assume `i < num_components()` and
/// `x.len() == dim()`; callers validate at the boundary.
pub trait FiniteSum: Sync {
    fn num_components(&self) -> usize;

    fn dim(&self) -> usize;

    fn value_at(&self, i: usize, x: &[f64]) -> f64;

    /// Adds `scale * ∇f_i(x)` to `out`.
    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]);

    fn mean_value(&self, x: &[f64]) -> f64 {
        let n = self.num_components();
        (0..n).map(|i| self.value_at(i, x)).sum::<f64>() / n as f64
    }

    fn mean_grad(&self, x: &[f64]) -> Vec<f64> {
        let n = self.num_components();
        let mut g = vec![0.0; self.dim()];
        for i in 0..n {
            self.add_grad(i, x, 1.0, &mut g);
        }
        let inv = 1.0 / n as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }
}

impl<F: FiniteSum + ?Sized> FiniteSum for &F {
    fn num_components(&self) -> usize {
        (**self).num_components()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value_at(&self, i: usize, x: &[f64]) -> f64 {
        (**self).value_at(i, x)
    }
    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        (**self).add_grad(i, x, scale, out)
    }
}

/// Scalar loss applied to the margin `aᵀx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `(aᵀx − b)²`
    Square,
    /// `log(1 + exp(−b aᵀx))`
    Logistic,
    /// Quadratically smoothed hinge on `z = b aᵀx`.
    SmoothHinge,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Square => "square",
            LossKind::Logistic => "logistic",
            LossKind::SmoothHinge => "smooth-hinge",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "square" => Some(LossKind::Square),
            "logistic" => Some(LossKind::Logistic),
            "smooth-hinge" | "smooth_hinge" => Some(LossKind::SmoothHinge),
            _ => None,
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, LossKind::Square)
    }

    /// Loss value at margin `z = aᵀx` with label `b`.
    #[inline]
    pub fn value(self, z: f64, b: f64) -> f64 {
        match self {
            LossKind::Square => (z - b) * (z - b),
            LossKind::Logistic => softplus(-b * z),
            LossKind::SmoothHinge => {
                let t = b * z;
                if t >= 1.0 {
                    0.0
                } else if t <= 0.0 {
                    0.5 - t
                } else {
                    0.5 * (1.0 - t) * (1.0 - t)
                }
            }
        }
    }

    /// Derivative of [`LossKind::value`] with respect to `z`.
    #[inline]
    pub fn derivative(self, z: f64, b: f64) -> f64 {
        match self {
            LossKind::Square => 2.0 * (z - b),
            LossKind::Logistic => -b * sigmoid(-b * z),
            LossKind::SmoothHinge => {
                let t = b * z;
                if t >= 1.0 {
                    0.0
                } else if t <= 0.0 {
                    -b
                } else {
                    -b * (1.0 - t)
                }
            }
        }
    }

    /// Second derivative with respect to `z` (the generalized one at the
    /// smooth-hinge breakpoints).
    #[inline]
    pub fn curvature(self, z: f64, b: f64) -> f64 {
        match self {
            LossKind::Square => 2.0,
            LossKind::Logistic => {
                let s = sigmoid(-b * z);
                s * (1.0 - s)
            }
            LossKind::SmoothHinge => {
                let t = b * z;
                if t > 0.0 && t < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `γ` such that the loss derivative is `1/γ`-Lipschitz in `z`.
    pub fn gamma(self, preset: CurvaturePreset) -> f64 {
        match (self, preset) {
            (LossKind::Square, CurvaturePreset::Tight) => 0.5,
            (LossKind::Square, CurvaturePreset::Unit) => 1.0,
            (LossKind::Logistic, _) => 4.0,
            (LossKind::SmoothHinge, _) => 1.0,
        }
    }
}

/// Convention for the square loss curvature bound. Logistic and smooth hinge
/// are identical under both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurvaturePreset {
    /// Exact bound: square loss has second derivative 2, so `γ = 1/2`.
    #[default]
    Tight,
    /// `γ = 1` for the square loss.
    Unit,
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// One labelled example.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub features: Vec<f64>,
    pub label: f64,
}

/// Dense row-major feature matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * labels.len(),
                got: features.len(),
            });
        }
        Ok(Dataset {
            dim,
            features,
            labels,
        })
    }

    pub fn from_points(dim: usize, points: &[DataPoint]) -> Result<Self> {
        let mut features = Vec::with_capacity(dim * points.len());
        let mut labels = Vec::with_capacity(points.len());
        for p in points {
            if p.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.features.len(),
                });
            }
            features.extend_from_slice(&p.features);
            labels.push(p.label);
        }
        Ok(Dataset {
            dim,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [f64] {
        &mut self.labels
    }

    pub fn point(&self, i: usize) -> DataPoint {
        DataPoint {
            features: self.row(i).to_vec(),
            label: self.label(i),
        }
    }

    pub fn max_row_norm_sq(&self) -> f64 {
        (0..self.len())
            .map(|i| norm_sq(self.row(i)))
            .fold(0.0, f64::max)
    }
}

/// Regularized empirical risk with `f_i(x) = φ(aᵢᵀx, bᵢ) + (λ/2)‖x‖²`.
#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    loss: LossKind,
    data: Dataset,
    lambda: f64,
}

/// Smoothness and strong-convexity constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessInfo {
    /// Smoothness of every component function.
    pub l: f64,
    /// Strong convexity of the average.
    pub mu: f64,
    pub kappa: f64,
}

impl SmoothnessInfo {
    pub fn new(l: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !(l >= mu) {
            return Err(Error::param("smoothness", format!("need L >= mu > 0, got L={l}, mu={mu}")));
        }
        Ok(SmoothnessInfo { l, mu, kappa: l / mu })
    }
}

impl ObjectiveSpec {
    pub fn new(loss: LossKind, data: Dataset, lambda: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::param("lambda", format!("must be finite and >= 0, got {lambda}")));
        }
        if loss.is_classification() {
            if let Some(&label) = data.labels().iter().find(|&&b| b != 1.0 && b != -1.0) {
                return Err(Error::InvalidLabel {
                    label,
                    loss: loss.name(),
                });
            }
        }
        Ok(ObjectiveSpec { loss, data, lambda })
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn check(&self, i: usize, x: &[f64]) -> Result<()> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        self.check_dim(x)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.data.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn component_value(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check(i, x)?;
        Ok(self.value_at(i, x))
    }

    pub fn component_grad(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check(i, x)?;
        let mut g = vec![0.0; x.len()];
        self.add_grad(i, x, 1.0, &mut g);
        Ok(g)
    }

    pub fn full_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.mean_value(x))
    }

    pub fn full_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.mean_grad(x))
    }

    /// Gradient of `f_i(x) + (σ/2)‖x − y‖²`.
    pub fn prox_component_grad(&self, i: usize, x: &[f64], y: &[f64], sigma: f64) -> Result<Vec<f64>> {
        self.check(i, x)?;
        self.check_dim(y)?;
        if !(sigma >= 0.0) {
            return Err(Error::param("sigma", format!("must be >= 0, got {sigma}")));
        }
        let prox = Proximal::new(self, y, sigma);
        let mut g = vec![0.0; x.len()];
        prox.add_grad(i, x, 1.0, &mut g);
        Ok(g)
    }

    /// `L = max‖aᵢ‖²/γ + λ`, `μ = λ`.
    pub fn estimate_constants(&self, gamma: f64) -> Result<SmoothnessInfo> {
        if !(self.lambda > 0.0) {
            return Err(Error::StrongConvexityUnavailable);
        }
        if !(gamma > 0.0) {
            return Err(Error::param("gamma", format!("must be > 0, got {gamma}")));
        }
        let l = self.data.max_row_norm_sq() / gamma + self.lambda;
        SmoothnessInfo::new(l, self.lambda)
    }

    /// [`ObjectiveSpec::estimate_constants`] with the loss's own `γ`.
    pub fn constants(&self, preset: CurvaturePreset) -> Result<SmoothnessInfo> {
        self.estimate_constants(self.loss.gamma(preset))
    }

    /// Generalized Hessian of the average, dense `d × d` row-major.
    pub fn mean_hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = self.data.dim();
        let n = self.len();
        let mut hess = vec![0.0; d * d];
        for i in 0..n {
            let a = self.data.row(i);
            let c = self.loss.curvature(dot(a, x), self.data.label(i)) / n as f64;
            if c == 0.0 {
                continue;
            }
            for r in 0..d {
                let car = c * a[r];
                if car == 0.0 {
                    continue;
                }
                let row = &mut hess[r * d..(r + 1) * d];
                for (h, ac) in row.iter_mut().zip(a) {
                    *h += car * ac;
                }
            }
        }
        for r in 0..d {
            hess[r * d + r] += self.lambda;
        }
        hess
    }
}

impl FiniteSum for ObjectiveSpec {
    fn num_components(&self) -> usize {
        self.len()
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    #[inline]
    fn value_at(&self, i: usize, x: &[f64]) -> f64 {
        let a = self.data.row(i);
        self.loss.value(dot(a, x), self.data.label(i)) + 0.5 * self.lambda * norm_sq(x)
    }

    #[inline]
    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let a = self.data.row(i);
        let g = scale * self.loss.derivative(dot(a, x), self.data.label(i));
        let r = scale * self.lambda;
        for ((o, ai), xi) in out.iter_mut().zip(a).zip(x) {
            *o += g * ai + r * xi;
        }
    }
}

/// `f̃_i(x; y) = f_i(x) + (σ/2)‖x − y‖²` over any finite sum.
#[derive(Debug, Clone, Copy)]
pub struct Proximal<'a, F: ?Sized> {
    inner: &'a F,
    center: &'a [f64],
    sigma: f64,
}

impl<'a, F: FiniteSum + ?Sized> Proximal<'a, F> {
    pub fn new(inner: &'a F, center: &'a [f64], sigma: f64) -> Self {
        debug_assert_eq!(center.len(), inner.dim());
        Proximal {
            inner,
            center,
            sigma,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl<F: FiniteSum + ?Sized> FiniteSum for Proximal<'_, F> {
    fn num_components(&self) -> usize {
        self.inner.num_components()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value_at(&self, i: usize, x: &[f64]) -> f64 {
        self.inner.value_at(i, x) + 0.5 * self.sigma * crate::vecops::dist_sq(x, self.center)
    }

    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        self.inner.add_grad(i, x, scale, out);
        if self.sigma != 0.0 {
            let s = scale * self.sigma;
            for ((o, xi), yi) in out.iter_mut().zip(x).zip(self.center) {
                *o += s * (xi - yi);
            }
        }
    }
}
