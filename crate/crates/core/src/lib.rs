//! Distributed variance-reduced optimization of regularized finite sums on a
//! simulated cluster of machines with bounded memory.
//!
//! * [`alloc`] splits the functions across machines and draws the i.i.d.
//!   sample multi-sets that fit into the spare capacity.
//! * [`svrg`] holds the variance-reduced step and the round-robin stage.
//! * [`cluster`] runs DSVRG, its accelerated variant and accelerated
//!   gradient descent while counting rounds, vectors and parallel runtime.
//! * [`lowerbound`] builds the chain instances that force many rounds.
//! * [`io`] reads data, generates instances and writes experiment output.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod cluster;
pub mod error;
pub mod io;
pub mod lowerbound;
pub mod objective;
pub mod optimum;
pub mod rng;
pub mod svrg;
pub mod vecops;

pub use alloc::{allocate, AllocationPlan, CapacityConfig, MultiSets};
pub use cluster::{
    accel_grad_run, dasvrg_run, dsvrg_run, AgdConfig, BroadcastCost, Cluster, DasvrgConfig, MetricsLedger, RunOptions,
    RunResult,
};
pub use error::{Error, Result};
pub use objective::{CurvaturePreset, Dataset, FiniteSum, LossKind, ObjectiveSpec, SmoothnessInfo};
pub use svrg::{ss_svrg, svrg_single_machine, SvrgConfig};
