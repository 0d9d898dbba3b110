//! Simulated machines and center with round and vector accounting.
//!
//! Machines only touch the function indices resident on them; every sampled
//! index is checked against that set. Rounds are counted at batch-gradient
//! synchronizations, at round-robin handoffs, and (for the accelerated
//! driver) at the upload of each outer solution.

mod agd;
mod dasvrg;
mod dsvrg;
mod ledger;

pub use agd::{accel_grad_run, AgdConfig};
pub use dasvrg::{alpha_update, beta_from_alphas, dasvrg_run, default_dasvrg_schedule, DasvrgConfig};
pub use dsvrg::dsvrg_run;
pub use ledger::{BroadcastCost, Checkpoint, MetricsLedger};

use rayon::prelude::*;

use crate::alloc::{AllocationPlan, MultiSets};
use crate::error::{Error, Result};
use crate::objective::FiniteSum;
use crate::svrg::StageHooks;

/// Sees every d-vector put on the wire, tagged with the round it belongs to.
pub trait TransmitObserver {
    fn on_transmit(&mut self, round: u64, vector: &[f64]);
}

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Optimal value; enables early stopping.
    pub f_star: Option<f64>,
    /// Stop at the first checkpoint with gap at or below this.
    pub target_gap: Option<f64>,
    pub observer: Option<&'a mut dyn TransmitObserver>,
}

impl<'a> RunOptions<'a> {
    pub fn until(f_star: f64, target_gap: f64) -> Self {
        RunOptions {
            f_star: Some(f_star),
            target_gap: Some(target_gap),
            observer: None,
        }
    }

    pub fn with_observer(mut self, observer: &'a mut dyn TransmitObserver) -> Self {
        self.observer = Some(observer);
        self
    }

    fn reached(&self, value: f64) -> bool {
        match (self.f_star, self.target_gap) {
            (Some(fs), Some(eps)) => value - fs <= eps,
            _ => false,
        }
    }

    fn transmit(&mut self, round: u64, v: &[f64]) {
        if let Some(obs) = self.observer.as_deref_mut() {
            obs.on_transmit(round, v);
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub x: Vec<f64>,
    pub ledger: MetricsLedger,
    /// Whether the target gap was reached before the schedule ended.
    pub reached: bool,
}

/// Machines, their resident data and remaining samples.
#[derive(Debug, Clone)]
pub struct Cluster {
    partition: Vec<Vec<usize>>,
    /// Sorted resident indices per machine.
    resident: Vec<Vec<usize>>,
    resident_sizes: Vec<usize>,
    n_total: usize,
    sets: MultiSets,
    active: usize,
    cost: BroadcastCost,
    pub ledger: MetricsLedger,
}

impl Cluster {
    pub fn new(plan: &AllocationPlan) -> Self {
        let m = plan.machines();
        let resident: Vec<Vec<usize>> = (0..m).map(|j| plan.resident(j)).collect();
        let resident_sizes = resident.iter().map(Vec::len).collect();
        Cluster {
            partition: plan.partition.clone(),
            resident,
            resident_sizes,
            n_total: plan.num_functions(),
            sets: MultiSets::new(plan.multisets.clone()),
            active: 0,
            cost: BroadcastCost::default(),
            ledger: MetricsLedger::new(m),
        }
    }

    /// Like [`Cluster::new`], rejecting plans that overflow `capacity`.
    pub fn with_capacity(plan: &AllocationPlan, capacity: usize) -> Result<Self> {
        let cluster = Self::new(plan);
        if let Some((j, &size)) = cluster.resident_sizes.iter().enumerate().find(|(_, &s)| s > capacity) {
            return Err(Error::CapacityExceeded {
                reason: format!("machine {j} holds {size} functions, capacity {capacity}"),
            });
        }
        Ok(cluster)
    }

    pub fn with_broadcast_cost(mut self, cost: BroadcastCost) -> Self {
        self.cost = cost;
        self
    }

    pub fn machines(&self) -> usize {
        self.partition.len()
    }

    pub fn num_functions(&self) -> usize {
        self.n_total
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn remaining_samples(&self) -> usize {
        self.sets.total_remaining()
    }

    pub fn resident_sizes(&self) -> &[usize] {
        &self.resident_sizes
    }

    pub fn broadcast_cost(&self) -> BroadcastCost {
        self.cost
    }

    fn check_objective<F: FiniteSum + ?Sized>(&self, f: &F, x: &[f64]) -> Result<()> {
        if f.num_components() != self.num_functions() {
            return Err(Error::param(
                "cluster",
                format!("plan covers {} functions, objective has {}", self.num_functions(), f.num_components()),
            ));
        }
        if x.len() != f.dim() {
            return Err(Error::DimensionMismatch {
                expected: f.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Map-reduce of `∇f` at `x_ref` over the partition shards.
    ///
    /// One round: broadcast of `x_ref`, one upload per machine and, when
    /// `send_to_active`, the result sent on to the active machine.
    pub fn batch_gradient_round<F: FiniteSum + ?Sized>(
        &mut self,
        f: &F,
        x_ref: &[f64],
        send_to_active: bool,
        opts: &mut RunOptions<'_>,
    ) -> Vec<f64> {
        let m = self.machines();
        let d = x_ref.len();
        self.ledger.barrier();
        let partials: Vec<Vec<f64>> = self
            .partition
            .par_iter()
            .map(|shard| {
                let mut h = vec![0.0; d];
                for &i in shard {
                    f.add_grad(i, x_ref, 1.0, &mut h);
                }
                h
            })
            .collect();
        for (j, shard) in self.partition.iter().enumerate() {
            self.ledger.compute(j, shard.len() as u64);
        }
        let mut vectors = self.cost.vectors(m) + m as u64;
        if send_to_active {
            vectors += 1;
        }
        self.ledger.round(vectors);
        let round = self.ledger.rounds;
        opts.transmit(round, x_ref);
        let mut h = vec![0.0; d];
        for p in &partials {
            opts.transmit(round, p);
            for (a, b) in h.iter_mut().zip(p) {
                *a += b;
            }
        }
        let inv = 1.0 / f.num_components() as f64;
        h.iter_mut().for_each(|v| *v *= inv);
        if send_to_active {
            opts.transmit(round, &h);
        }
        h
    }
}

/// Charges steps and handoffs of a stage to the cluster.
struct ClusterHooks<'c, 'o> {
    resident: &'c [Vec<usize>],
    ledger: &'c mut MetricsLedger,
    opts: &'c mut RunOptions<'o>,
}

impl StageHooks for ClusterHooks<'_, '_> {
    fn on_step(&mut self, machine: usize, index: usize) -> Result<()> {
        if self.resident[machine].binary_search(&index).is_err() {
            return Err(Error::AccessViolation { machine, index });
        }
        self.ledger.compute(machine, 2);
        Ok(())
    }

    fn on_handoff(&mut self, _from: usize, _to: usize, x: &[f64], x_bar: &[f64]) {
        self.ledger.round(2);
        let round = self.ledger.rounds;
        self.opts.transmit(round, x);
        self.opts.transmit(round, x_bar);
    }
}
