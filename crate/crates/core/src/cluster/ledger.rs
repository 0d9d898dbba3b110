//! Communication and computation counters of a simulated run.

/// How a one-to-all broadcast is charged in `vectors_sent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BroadcastCost {
    /// One vector per receiving machine.
    #[default]
    PerReceiver,
    /// One vector per broadcast.
    Single,
}

impl BroadcastCost {
    pub fn vectors(self, machines: usize) -> u64 {
        match self {
            BroadcastCost::PerReceiver => machines as u64,
            BroadcastCost::Single => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BroadcastCost::PerReceiver => "per-receiver",
            BroadcastCost::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per-receiver" => Some(BroadcastCost::PerReceiver),
            "single" => Some(BroadcastCost::Single),
            _ => None,
        }
    }
}

/// Counters at one point of a run, with the objective value there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub stage: usize,
    pub rounds: u64,
    pub vectors: u64,
    pub runtime: u64,
    pub value: f64,
}

impl Checkpoint {
    /// `f(x) − f*`, floored at the smallest positive normal float.
    pub fn gap(&self, f_star: f64) -> f64 {
        (self.value - f_star).max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLedger {
    pub rounds: u64,
    pub vectors_sent: u64,
    pub grad_evals: Vec<u64>,
    pub parallel_runtime: u64,
    phase: Vec<u64>,
    /// Machines with work in the open phase.
    busy: Vec<usize>,
    pub checkpoints: Vec<Checkpoint>,
}

impl MetricsLedger {
    pub fn new(machines: usize) -> Self {
        MetricsLedger {
            rounds: 0,
            vectors_sent: 0,
            grad_evals: vec![0; machines],
            parallel_runtime: 0,
            phase: vec![0; machines],
            busy: Vec::new(),
            checkpoints: Vec::new(),
        }
    }

    /// Charges `count` gradient evaluations to machine `j` in the current phase.
    pub fn compute(&mut self, j: usize, count: u64) {
        if count == 0 {
            return;
        }
        if self.phase[j] == 0 {
            self.busy.push(j);
        }
        self.grad_evals[j] += count;
        self.phase[j] += count;
    }

    /// Closes the current phase: runtime grows by its slowest machine.
    pub fn barrier(&mut self) {
        self.parallel_runtime += self.pending_runtime();
        for j in self.busy.drain(..) {
            self.phase[j] = 0;
        }
    }

    /// A synchronization carrying `vectors` d-vectors.
    pub fn round(&mut self, vectors: u64) {
        self.barrier();
        self.rounds += 1;
        self.vectors_sent += vectors;
    }

    /// Vectors sent inside an already counted round.
    pub fn send(&mut self, vectors: u64) {
        self.vectors_sent += vectors;
    }

    /// Gradient evaluations in the open phase, maximized over machines.
    pub fn pending_runtime(&self) -> u64 {
        self.busy.iter().map(|&j| self.phase[j]).max().unwrap_or(0)
    }

    pub fn checkpoint(&mut self, stage: usize, value: f64) {
        self.checkpoints.push(Checkpoint {
            stage,
            rounds: self.rounds,
            vectors: self.vectors_sent,
            runtime: self.parallel_runtime + self.pending_runtime(),
            value,
        });
    }

    /// `(rounds, vectors, runtime, gap)` for each checkpoint.
    pub fn gap_trace(&self, f_star: f64) -> Vec<(u64, u64, u64, f64)> {
        self.checkpoints
            .iter()
            .map(|c| (c.rounds, c.vectors, c.runtime, c.gap(f_star)))
            .collect()
    }

    /// Gap of the last checkpoint taken at or before `rounds`.
    pub fn gap_at_rounds(&self, rounds: u64, f_star: f64) -> Option<f64> {
        self.checkpoints
            .iter()
            .take_while(|c| c.rounds <= rounds)
            .last()
            .map(|c| c.gap(f_star))
    }

    /// Rounds of the first checkpoint with gap at most `eps`.
    pub fn rounds_to_gap(&self, eps: f64, f_star: f64) -> Option<u64> {
        self.checkpoints.iter().find(|c| c.gap(f_star) <= eps).map(|c| c.rounds)
    }
}
