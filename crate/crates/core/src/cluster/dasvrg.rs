use super::{Cluster, ClusterHooks, RunOptions, RunResult};
use crate::error::{Error, Result};
use crate::objective::{FiniteSum, Proximal};
use crate::svrg::{ceil_count, ss_svrg, StageOutputKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DasvrgConfig {
    pub eta: f64,
    /// Updates per inner stage, `T`.
    pub inner_steps: usize,
    /// Inner stages per outer iteration, `K`.
    pub stages: usize,
    /// Outer iterations, `P`.
    pub outer: usize,
    pub sigma: f64,
    /// Strong convexity of `f`, used for `q = μ/(μ+σ)`.
    pub mu: f64,
    pub output: StageOutputKind,
}

impl DasvrgConfig {
    pub fn q(&self) -> f64 {
        self.mu / (self.mu + self.sigma)
    }

    pub fn samples(&self) -> usize {
        self.inner_steps * self.stages * self.outer
    }
}

/// Positive root of `α² + (α_prev² − q)α − α_prev² = 0`.
pub fn alpha_update(alpha_prev: f64, q: f64) -> f64 {
    let a2 = alpha_prev * alpha_prev;
    let c = a2 - q;
    let disc = (c * c + 4.0 * a2).sqrt();
    if c > 0.0 {
        2.0 * a2 / (c + disc)
    } else {
        (disc - c) / 2.0
    }
}

pub fn beta_from_alphas(alpha_prev: f64, alpha: f64) -> f64 {
    alpha_prev * (1.0 - alpha_prev) / (alpha_prev * alpha_prev + alpha)
}

/// `σ = L/n`, `η = 1/(16L)`, `T = ⌈96κ(f_σ)⌉`, and `K`, `P` from the
/// accelerated convergence bound.
pub fn default_dasvrg_schedule(l: f64, mu: f64, n: usize, gap0: f64, epsilon: f64) -> Result<DasvrgConfig> {
    if !(l > 0.0 && mu > 0.0 && n > 0 && gap0 > 0.0 && epsilon > 0.0) {
        return Err(Error::param("schedule", "L, mu, n, gap0 and epsilon must be positive"));
    }
    let sigma = l / n as f64;
    Ok(schedule_with_sigma(l, mu, sigma, gap0, epsilon))
}

pub(crate) fn schedule_with_sigma(l: f64, mu: f64, sigma: f64, gap0: f64, epsilon: f64) -> DasvrgConfig {
    let q = mu / (mu + sigma);
    let sq = q.sqrt();
    let kappa_sigma = (l + sigma) / (mu + sigma);
    let k_arg = 4.0 / (2.0 - sq) + 10368.0 * sigma / (mu * q * (1.0 - sq / 2.0).powi(2));
    let stages = ceil_count(k_arg.ln() / (9.0f64 / 8.0).ln());
    let p_real = (2.0 / sq) * (32.0 * gap0 / (q * epsilon)).ln();
    DasvrgConfig {
        eta: 1.0 / (16.0 * l),
        inner_steps: ceil_count(96.0 * kappa_sigma),
        stages,
        outer: if p_real > 0.0 { ceil_count(p_real) } else { 0 },
        sigma,
        mu,
        output: StageOutputKind::Average,
    }
}

/// Accelerated outer loop around round-robin SVRG on the proximal
/// functions `f_i + (σ/2)‖· − y‖²`.
///
/// Each outer iteration broadcasts `y_{p−1}` with its first batch round,
/// runs `K` warm-started stages and uploads `x̂_p` to the center (one round).
/// A checkpoint is taken at the start and after every outer iteration.
pub fn dasvrg_run<F: FiniteSum + ?Sized>(
    f: &F,
    cluster: &mut Cluster,
    x0: &[f64],
    config: &DasvrgConfig,
    mut opts: RunOptions<'_>,
) -> Result<RunResult> {
    cluster.check_objective(f, x0)?;
    if !(config.sigma >= 0.0 && config.mu > 0.0) {
        return Err(Error::param("sigma", "need sigma >= 0 and mu > 0"));
    }
    let m = cluster.machines();
    let q = config.q();
    let mut alpha = q.sqrt();
    let mut x_hat_prev = x0.to_vec();
    let mut y = x0.to_vec();
    let start = f.mean_value(x0);
    cluster.ledger.checkpoint(0, start);
    let mut reached = opts.reached(start);
    for p in 1..=config.outer {
        if reached {
            break;
        }
        let prox = Proximal::new(f, &y, config.sigma);
        let mut x_ref = x_hat_prev.clone();
        for stage in 0..config.stages {
            let h = cluster.batch_gradient_round(&prox, &x_ref, true, &mut opts);
            if stage == 0 {
                cluster.ledger.send(cluster.cost.vectors(m));
                let round = cluster.ledger.rounds;
                opts.transmit(round, &y);
            }
            let out = {
                let mut hooks = ClusterHooks {
                    resident: &cluster.resident,
                    ledger: &mut cluster.ledger,
                    opts: &mut opts,
                };
                ss_svrg(
                    &prox,
                    &x_ref,
                    &h,
                    &mut cluster.sets,
                    cluster.active,
                    config.eta,
                    config.inner_steps,
                    config.output,
                    &mut hooks,
                )?
            };
            cluster.active = out.active;
            x_ref = out.point;
        }
        let x_hat = x_ref;
        cluster.ledger.round(1);
        let round = cluster.ledger.rounds;
        opts.transmit(round, &x_hat);
        let alpha_next = alpha_update(alpha, q);
        let beta = beta_from_alphas(alpha, alpha_next);
        y = x_hat.iter().zip(&x_hat_prev).map(|(a, b)| a + beta * (a - b)).collect();
        alpha = alpha_next;
        let value = f.mean_value(&x_hat);
        cluster.ledger.checkpoint(p, value);
        reached = opts.reached(value);
        x_hat_prev = x_hat;
    }
    cluster.ledger.barrier();
    Ok(RunResult {
        x: x_hat_prev,
        ledger: cluster.ledger.clone(),
        reached,
    })
}
