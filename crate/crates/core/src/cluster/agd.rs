use super::{Cluster, RunOptions, RunResult};
use crate::error::{Error, Result};
use crate::objective::FiniteSum;

/// Constant-momentum accelerated gradient with step `1/L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgdConfig {
    pub l: f64,
    pub mu: f64,
    pub iterations: usize,
}

impl AgdConfig {
    pub fn momentum(&self) -> f64 {
        let s = (self.l / self.mu).sqrt();
        (s - 1.0) / (s + 1.0)
    }
}

/// Each iteration is one batch-gradient round at the extrapolated point;
/// a checkpoint follows every iteration.
pub fn accel_grad_run<F: FiniteSum + ?Sized>(
    f: &F,
    cluster: &mut Cluster,
    x0: &[f64],
    config: &AgdConfig,
    mut opts: RunOptions<'_>,
) -> Result<RunResult> {
    cluster.check_objective(f, x0)?;
    if !(config.l >= config.mu && config.mu > 0.0) {
        return Err(Error::StrongConvexityUnavailable);
    }
    let beta = config.momentum();
    let step = 1.0 / config.l;
    let mut x = x0.to_vec();
    let mut y = x0.to_vec();
    let start = f.mean_value(&x);
    cluster.ledger.checkpoint(0, start);
    let mut reached = opts.reached(start);
    for it in 1..=config.iterations {
        if reached {
            break;
        }
        let g = cluster.batch_gradient_round(f, &y, false, &mut opts);
        let x_next: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
        for ((yi, xn), xo) in y.iter_mut().zip(&x_next).zip(&x) {
            *yi = xn + beta * (xn - xo);
        }
        x = x_next;
        let value = f.mean_value(&x);
        cluster.ledger.checkpoint(it, value);
        reached = opts.reached(value);
    }
    cluster.ledger.barrier();
    Ok(RunResult {
        x,
        ledger: cluster.ledger.clone(),
        reached,
    })
}
