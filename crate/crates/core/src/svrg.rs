//! Variance-reduced gradient steps, the single-stage routine that drains the
//! machines' multi-sets in round-robin order, a single-machine SVRG
//! reference, and the per-stage contraction bound.

use rand::Rng;

use crate::alloc::MultiSets;
use crate::error::{Error, Result};
use crate::objective::{FiniteSum, SmoothnessInfo};

/// Source of component indices for the iterative updates.
pub trait IndexSource {
    fn next_index(&mut self) -> Option<usize>;
}

/// Independent uniform draws from `[N]`.
pub struct UniformSource<R> {
    n: usize,
    rng: R,
}

impl<R: Rng> UniformSource<R> {
    pub fn new(n: usize, rng: R) -> Self {
        UniformSource { n, rng }
    }
}

impl<R: Rng> IndexSource for UniformSource<R> {
    fn next_index(&mut self) -> Option<usize> {
        Some(self.rng.random_range(0..self.n))
    }
}

/// Replays a fixed index sequence.
pub struct SequenceSource<'a> {
    seq: &'a [usize],
    pos: usize,
}

impl<'a> SequenceSource<'a> {
    pub fn new(seq: &'a [usize]) -> Self {
        SequenceSource { seq, pos: 0 }
    }
}

impl IndexSource for SequenceSource<'_> {
    fn next_index(&mut self) -> Option<usize> {
        let i = self.seq.get(self.pos).copied();
        self.pos += 1;
        i
    }
}

/// Which point a stage returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StageOutputKind {
    /// Running average `x̄_T`.
    #[default]
    Average,
    /// Last iterate `x_T`.
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrgConfig {
    pub eta: f64,
    /// Iterative updates per stage, `T`.
    pub inner_steps: usize,
    /// Number of stages, `K`.
    pub stages: usize,
    pub output: StageOutputKind,
}

impl SvrgConfig {
    /// Validated configuration: `0 < η < 1/(4L)`.
    pub fn new(eta: f64, inner_steps: usize, stages: usize, info: &SmoothnessInfo) -> Result<Self> {
        check_step(eta, info.l)?;
        Ok(Self::unchecked(eta, inner_steps, stages))
    }

    /// No step-size check. Used for the practical presets whose step exceeds
    /// the range covered by the convergence bound.
    pub fn unchecked(eta: f64, inner_steps: usize, stages: usize) -> Self {
        SvrgConfig {
            eta,
            inner_steps,
            stages,
            output: StageOutputKind::Average,
        }
    }

    /// `η = 1/(16L)`, `T = ⌈96κ⌉`.
    pub fn theory(info: &SmoothnessInfo, stages: usize) -> Self {
        Self::unchecked(1.0 / (16.0 * info.l), ceil_count(96.0 * info.kappa), stages)
    }

    pub fn samples(&self) -> usize {
        self.inner_steps * self.stages
    }
}

fn check_step(eta: f64, l: f64) -> Result<()> {
    let limit = 1.0 / (4.0 * l);
    if !(eta > 0.0 && eta < limit) {
        return Err(Error::InvalidStep { eta, limit });
    }
    Ok(())
}

/// Rounds a real-valued iteration count up, tolerating float noise just
/// above an integer.
pub fn ceil_count(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Writes `∇f_i(x) − ∇f_i(x_ref) + h` into `out`.
#[inline]
pub fn vr_grad_into<F: FiniteSum + ?Sized>(f: &F, i: usize, x: &[f64], x_ref: &[f64], h: &[f64], out: &mut [f64]) {
    out.copy_from_slice(h);
    f.add_grad(i, x, 1.0, out);
    f.add_grad(i, x_ref, -1.0, out);
}

pub fn vr_grad<F: FiniteSum + ?Sized>(f: &F, i: usize, x: &[f64], x_ref: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if i >= f.num_components() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: f.num_components(),
        });
    }
    for v in [x, x_ref, h] {
        if v.len() != f.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.dim(),
                got: v.len(),
            });
        }
    }
    let mut out = vec![0.0; f.dim()];
    vr_grad_into(f, i, x, x_ref, h, &mut out);
    Ok(out)
}

/// Mutable state of one stage.
#[derive(Debug, Clone)]
pub struct StageState {
    pub x: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub t: usize,
    scratch: Vec<f64>,
}

impl StageState {
    pub fn start(x_ref: &[f64]) -> Self {
        StageState {
            x: x_ref.to_vec(),
            x_bar: vec![0.0; x_ref.len()],
            t: 0,
            scratch: vec![0.0; x_ref.len()],
        }
    }

    /// One update with component `i`, then `x̄_{t+1} = (x_{t+1} + t·x̄_t)/(t+1)`.
    #[inline]
    pub fn step<F: FiniteSum + ?Sized>(&mut self, f: &F, i: usize, x_ref: &[f64], h: &[f64], eta: f64) {
        vr_grad_into(f, i, &self.x, x_ref, h, &mut self.scratch);
        let t = self.t as f64;
        let inv = 1.0 / (t + 1.0);
        for ((xi, vi), bi) in self.x.iter_mut().zip(&self.scratch).zip(self.x_bar.iter_mut()) {
            *xi -= eta * vi;
            *bi = (*xi + t * *bi) * inv;
        }
        self.t += 1;
    }

    fn finish(self, x_ref: &[f64], kind: StageOutputKind) -> (Vec<f64>, Vec<f64>) {
        if self.t == 0 {
            return (x_ref.to_vec(), x_ref.to_vec());
        }
        match kind {
            StageOutputKind::Average => (self.x_bar, self.x),
            StageOutputKind::Last => (self.x.clone(), self.x),
        }
    }
}

/// Observer for the machine-level events of a stage.
pub trait StageHooks {
    /// Machine `machine` is about to use component `index`.
    fn on_step(&mut self, _machine: usize, _index: usize) -> Result<()> {
        Ok(())
    }

    /// `x_{t+1}` and `x̄_{t+1}` move from `from` to `to`.
    fn on_handoff(&mut self, _from: usize, _to: usize, _x: &[f64], _x_bar: &[f64]) {}
}

pub struct NoHooks;

impl StageHooks for NoHooks {}

#[derive(Debug, Clone)]
pub struct StageOutput {
    /// Stage result (the average unless configured otherwise).
    pub point: Vec<f64>,
    pub last: Vec<f64>,
    pub active: usize,
    pub handoffs: usize,
}

/// One stage of `steps` updates drawn from the multi-sets, starting at
/// machine `active`.
///
/// When the active machine's multi-set runs dry the iterate and running
/// average move to the next machine that still holds samples; if none is
/// left the stage fails with [`Error::SampleBudgetExhausted`].
#[allow(clippy::too_many_arguments)]
pub fn ss_svrg<F: FiniteSum + ?Sized, H: StageHooks + ?Sized>(
    f: &F,
    x_ref: &[f64],
    h: &[f64],
    sets: &mut MultiSets,
    mut active: usize,
    eta: f64,
    steps: usize,
    output: StageOutputKind,
    hooks: &mut H,
) -> Result<StageOutput> {
    let mut state = StageState::start(x_ref);
    let mut handoffs = 0;
    for taken in 0..steps {
        let i = match sets.take(active) {
            Some(i) => i,
            None => {
                return Err(Error::SampleBudgetExhausted {
                    taken,
                    requested: steps,
                })
            }
        };
        hooks.on_step(active, i)?;
        state.step(f, i, x_ref, h, eta);
        if sets.remaining(active) == 0 {
            if let Some(next) = sets.next_nonempty(active + 1) {
                hooks.on_handoff(active, next, &state.x, &state.x_bar);
                active = next;
                handoffs += 1;
            }
        }
    }
    let (point, last) = state.finish(x_ref, output);
    Ok(StageOutput {
        point,
        last,
        active,
        handoffs,
    })
}

/// Single-machine SVRG. Returns the reference points `x̃⁰..x̃ᴷ`.
pub fn svrg_single_machine<F: FiniteSum + ?Sized, S: IndexSource + ?Sized>(
    f: &F,
    x0: &[f64],
    config: &SvrgConfig,
    source: &mut S,
) -> Result<Vec<Vec<f64>>> {
    if x0.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x0.len(),
        });
    }
    let mut trace = Vec::with_capacity(config.stages + 1);
    trace.push(x0.to_vec());
    for _ in 0..config.stages {
        let x_ref = trace.last().expect("trace starts non-empty").clone();
        let h = f.mean_grad(&x_ref);
        let mut state = StageState::start(&x_ref);
        for taken in 0..config.inner_steps {
            let i = source.next_index().ok_or(Error::SampleBudgetExhausted {
                taken,
                requested: config.inner_steps,
            })?;
            state.step(f, i, &x_ref, &h, config.eta);
        }
        trace.push(state.finish(&x_ref, config.output).0);
    }
    Ok(trace)
}

/// Per-stage base of the expected-gap bound,
/// `1/(μη(1−4Lη)T) + 4Lη(T+1)/((1−4Lη)T)`.
pub fn contraction_bound(eta: f64, steps: usize, l: f64, mu: f64) -> Result<f64> {
    check_step(eta, l)?;
    if steps == 0 {
        return Err(Error::param("steps", "T must be at least 1"));
    }
    let t = steps as f64;
    let shrink = 1.0 - 4.0 * l * eta;
    Ok(1.0 / (mu * eta * shrink * t) + 4.0 * l * eta * (t + 1.0) / (shrink * t))
}

/// Smallest `K` with `rateᴷ · gap0 ≤ ε`.
pub fn stages_needed(rate: f64, gap0: f64, epsilon: f64) -> Result<usize> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::NoConvergence { rate });
    }
    if !(gap0 > 0.0 && epsilon > 0.0) {
        return Err(Error::param("gap", "gap0 and epsilon must be positive"));
    }
    if gap0 <= epsilon {
        return Ok(0);
    }
    Ok(ceil_count((gap0 / epsilon).ln() / (1.0 / rate).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{DataPoint, Dataset, LossKind, ObjectiveSpec};

    fn small_ridge() -> ObjectiveSpec {
        let pts = vec![
            DataPoint { features: vec![1.0, 0.5], label: 0.3 },
            DataPoint { features: vec![-0.2, 1.0], label: -0.7 },
            DataPoint { features: vec![0.4, -0.9], label: 0.1 },
        ];
        ObjectiveSpec::new(LossKind::Square, Dataset::from_points(2, &pts).unwrap(), 0.1).unwrap()
    }

    #[test]
    fn vr_grad_at_reference_returns_h() {
        let f = small_ridge();
        let x = [0.3, -0.2];
        let h = [0.7, 1.1];
        assert_eq!(vr_grad(&f, 1, &x, &x, &h).unwrap(), h.to_vec());
    }

    #[test]
    fn vr_grad_with_zero_h_is_difference() {
        let f = small_ridge();
        let x = [0.3, -0.2];
        let r = [1.0, 2.0];
        let v = vr_grad(&f, 2, &x, &r, &[0.0, 0.0]).unwrap();
        let a = f.component_grad(2, &x).unwrap();
        let b = f.component_grad(2, &r).unwrap();
        assert_eq!(v, vec![a[0] - b[0], a[1] - b[1]]);
    }

    #[test]
    fn zero_steps_returns_reference() {
        let f = small_ridge();
        let mut sets = MultiSets::new(vec![vec![0, 1]]);
        let out = ss_svrg(&f, &[0.5, 0.5], &[0.0, 0.0], &mut sets, 0, 0.1, 0, StageOutputKind::Average, &mut NoHooks).unwrap();
        assert_eq!(out.point, vec![0.5, 0.5]);
        assert_eq!(out.handoffs, 0);
    }

    #[test]
    fn no_handoff_while_machine_has_samples() {
        let f = small_ridge();
        let mut sets = MultiSets::new(vec![vec![0, 1, 2, 0], vec![1]]);
        let out = ss_svrg(&f, &[0.0, 0.0], &[0.1, 0.1], &mut sets, 0, 0.1, 3, StageOutputKind::Average, &mut NoHooks).unwrap();
        assert_eq!((out.active, out.handoffs), (0, 0));
    }

    #[test]
    fn depletion_schedule_two_then_three() {
        let f = small_ridge();
        let mut sets = MultiSets::new(vec![vec![], vec![0, 1], vec![2, 2, 1]]);
        let out = ss_svrg(&f, &[0.0, 0.0], &[0.1, 0.1], &mut sets, 1, 0.1, 5, StageOutputKind::Average, &mut NoHooks).unwrap();
        assert_eq!((out.active, out.handoffs), (2, 1));
        assert_eq!(sets.total_remaining(), 0);
    }

    #[test]
    fn exhausted_budget_is_an_error() {
        let f = small_ridge();
        let mut sets = MultiSets::new(vec![vec![0], vec![1]]);
        let err = ss_svrg(&f, &[0.0, 0.0], &[0.0, 0.0], &mut sets, 0, 0.1, 3, StageOutputKind::Average, &mut NoHooks);
        assert!(matches!(err, Err(Error::SampleBudgetExhausted { taken: 2, requested: 3 })));
    }

    #[test]
    fn running_average_matches_direct_mean() {
        let f = small_ridge();
        let x_ref = [0.4, -0.1];
        let h = f.mean_grad(&x_ref);
        let mut state = StageState::start(&x_ref);
        let mut iterates = Vec::new();
        for t in 0..50 {
            state.step(&f, t % 3, &x_ref, &h, 0.05);
            iterates.push(state.x.clone());
        }
        for c in 0..2 {
            let mean = iterates.iter().map(|x| x[c]).sum::<f64>() / 50.0;
            assert!((mean - state.x_bar[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn contraction_bound_examples() {
        let v = contraction_bound(1.0 / 16.0, 9600, 1.0, 0.01).unwrap();
        let expected = 2.0 / 9.0 + 0.25 * 9601.0 / 7200.0;
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.5556).abs() < 1e-4);
        assert!(matches!(contraction_bound(0.25, 10, 1.0, 0.1), Err(Error::InvalidStep { .. })));
    }

    #[test]
    fn theory_preset_bound_is_eight_ninths() {
        for &(l, mu) in &[(1.0, 0.01), (3.0, 0.3), (10.0, 0.001)] {
            let kappa: f64 = l / mu;
            let t = ceil_count(96.0 * kappa);
            let v = contraction_bound(1.0 / (16.0 * l), t, l, mu).unwrap();
            assert!(v <= 8.0 / 9.0 + 1e-12, "{v}");
        }
    }

    #[test]
    fn constant_rounds_bound() {
        // eta = 1/(16 n^δ L), T = n, κ ≤ n^{1−2δ}/32
        for &(n, delta) in &[(4096usize, 0.25), (10000, 0.25), (65536, 0.3)] {
            let nf = n as f64;
            let kappa = nf.powf(1.0 - 2.0 * delta) / 32.0;
            let (l, mu) = (1.0, 1.0 / kappa);
            let eta = 1.0 / (16.0 * nf.powf(delta) * l);
            let v = contraction_bound(eta, n, l, mu).unwrap();
            assert!(v <= 2.0 / nf.powf(delta) + 1e-12);
        }
    }

    #[test]
    fn stages_needed_examples() {
        assert_eq!(stages_needed(0.5, 1.0, 1.0).unwrap(), 0);
        assert_eq!(stages_needed(8.0 / 9.0, (9.0f64 / 8.0).powi(5), 1.0).unwrap(), 5);
        assert_eq!(stages_needed(0.5, 8.0, 1.0).unwrap(), 3);
        assert!(matches!(stages_needed(1.0, 2.0, 1.0), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn config_rejects_large_step() {
        let info = SmoothnessInfo::new(2.0, 0.1).unwrap();
        assert!(SvrgConfig::new(0.125, 10, 1, &info).is_err());
        assert!(SvrgConfig::new(0.1, 10, 1, &info).is_ok());
        let th = SvrgConfig::theory(&info, 3);
        assert_eq!(th.inner_steps, 1920);
        assert_eq!(th.eta, 1.0 / 32.0);
    }
}
