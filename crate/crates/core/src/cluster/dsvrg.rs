use super::{Cluster, ClusterHooks, RunOptions, RunResult};
use crate::error::Result;
use crate::objective::FiniteSum;
use crate::svrg::{ss_svrg, SvrgConfig};

/// Runs `K` stages of batch gradient plus round-robin SVRG from `x0`.
///
/// Samples are consumed from the cluster's multi-sets in stored order, so no
/// random source is needed here. A checkpoint is taken at the start and after
/// every stage.
pub fn dsvrg_run<F: FiniteSum + ?Sized>(
    f: &F,
    cluster: &mut Cluster,
    x0: &[f64],
    config: &SvrgConfig,
    mut opts: RunOptions<'_>,
) -> Result<RunResult> {
    cluster.check_objective(f, x0)?;
    let mut x_ref = x0.to_vec();
    let start = f.mean_value(&x_ref);
    cluster.ledger.checkpoint(0, start);
    let mut reached = opts.reached(start);
    for stage in 1..=config.stages {
        if reached {
            break;
        }
        let h = cluster.batch_gradient_round(f, &x_ref, true, &mut opts);
        let out = {
            let mut hooks = ClusterHooks {
                resident: &cluster.resident,
                ledger: &mut cluster.ledger,
                opts: &mut opts,
            };
            ss_svrg(
                f,
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
        let value = f.mean_value(&x_ref);
        cluster.ledger.checkpoint(stage, value);
        reached = opts.reached(value);
    }
    cluster.ledger.barrier();
    Ok(RunResult {
        x: x_ref,
        ledger: cluster.ledger.clone(),
        reached,
    })
}
