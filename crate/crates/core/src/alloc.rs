//! Data allocation: a random even partition `S_1..S_m` of the `N` functions
//! plus a sequence `r_1..r_Q` of i.i.d. uniform indices built by reusing the
//! partition's randomness, chunked into the multi-sets `R_1..R_m` that the
//! machines consume during the iterative updates.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRole};

/// Per-machine capacity `C`, shard size `n` and spare room `ñ = C − n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityConfig {
    pub capacity: usize,
    pub shard: usize,
    pub spare: usize,
}

impl CapacityConfig {
    /// Checks `n < C < N` for the largest shard `n = ⌈N/m⌉`.
    pub fn new(capacity: usize, n_total: usize, machines: usize) -> Result<Self> {
        if machines == 0 || machines > n_total {
            return Err(Error::TooManyMachines { n: n_total, m: machines });
        }
        let shard = n_total.div_ceil(machines);
        if capacity <= shard || capacity >= n_total {
            return Err(Error::CapacityExceeded {
                reason: format!("need n < C < N, got n={shard}, C={capacity}, N={n_total}"),
            });
        }
        Ok(CapacityConfig {
            capacity,
            shard,
            spare: capacity - shard,
        })
    }

    /// Capacity leaving exactly `spare` free slots on the largest shard.
    pub fn with_spare(spare: usize, n_total: usize, machines: usize) -> Result<Self> {
        if machines == 0 || machines > n_total {
            return Err(Error::TooManyMachines { n: n_total, m: machines });
        }
        Self::new(n_total.div_ceil(machines) + spare, n_total, machines)
    }
}

/// Sizes of a near-even split, larger sets first.
pub fn shard_sizes(n_total: usize, machines: usize) -> Vec<usize> {
    let base = n_total / machines;
    let rem = n_total % machines;
    (0..machines).map(|j| base + usize::from(j < rem)).collect()
}

/// Uniform random permutation `i_1..i_N` and its split into `S_1..S_m`.
pub fn random_partition<R: Rng + ?Sized>(
    n_total: usize,
    machines: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    if machines == 0 || machines > n_total {
        return Err(Error::TooManyMachines { n: n_total, m: machines });
    }
    let mut perm: Vec<usize> = (0..n_total).collect();
    perm.shuffle(rng);
    let mut parts = Vec::with_capacity(machines);
    let mut start = 0;
    for size in shard_sizes(n_total, machines) {
        parts.push(perm[start..start + size].to_vec());
        start += size;
    }
    Ok((parts, perm))
}

/// Decision for position `ell` (1-based) given a uniform draw `u ∈ [0,1)`:
/// `Some(p)` reuses the earlier permutation entry at 0-based position `p`,
/// `None` keeps `i_ell`.
///
/// Branches with probability `(ell−1)/N`, each earlier position equally
/// likely with probability `1/N`.
#[inline]
pub fn branch_choice(ell: usize, n_total: usize, u: f64) -> Option<usize> {
    let scaled = u * n_total as f64;
    if scaled < (ell - 1) as f64 {
        Some((scaled as usize).min(n_total - 1))
    } else {
        None
    }
}

/// Builds `r_1..r_Q` from the permutation. Positions past `N` always branch,
/// which keeps every `r_ℓ` uniform on `[N]`.
pub fn derive_sequence<R: Rng + ?Sized>(permutation: &[usize], q: usize, rng: &mut R) -> Vec<usize> {
    let n_total = permutation.len();
    (1..=q)
        .map(|ell| {
            let u: f64 = rng.random();
            match branch_choice(ell, n_total, u) {
                Some(p) => permutation[p],
                None => permutation[ell - 1],
            }
        })
        .collect()
}

/// Contiguous chunks of `ñ` samples: the first `⌈Q/ñ⌉ − 1` machines get `ñ`,
/// the next one the remainder, the rest nothing.
pub fn build_multisets(sequence: &[usize], spare: usize, machines: usize) -> Result<Vec<Vec<usize>>> {
    if spare == 0 && !sequence.is_empty() {
        return Err(Error::CapacityExceeded {
            reason: "no spare capacity for sampled functions".into(),
        });
    }
    if sequence.len() > spare * machines {
        return Err(Error::CapacityExceeded {
            reason: format!("Q={} exceeds ñ·m={}", sequence.len(), spare * machines),
        });
    }
    let mut sets: Vec<Vec<usize>> = if spare == 0 {
        Vec::new()
    } else {
        sequence.chunks(spare).map(<[usize]>::to_vec).collect()
    };
    sets.resize(machines, Vec::new());
    Ok(sets)
}

/// `Q²/N`, the bound on expected extra shipments.
pub fn expected_extra_comm_bound(q: usize, n_total: usize) -> f64 {
    (q as f64) * (q as f64) / n_total as f64
}

/// Result of data allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub partition: Vec<Vec<usize>>,
    pub permutation: Vec<usize>,
    pub sequence: Vec<usize>,
    pub multisets: Vec<Vec<usize>>,
    /// Positions with `r_ℓ ≠ i_ℓ` and `r_ℓ ∉ S_owner(ℓ)`.
    pub extra_transfers: usize,
    /// Positions with `r_ℓ ≠ i_ℓ`.
    pub mismatched: usize,
    /// Distinct functions in `R_j \ S_j`, summed over machines: what has to
    /// be shipped besides the partition.
    pub shipped: usize,
}

impl AllocationPlan {
    pub fn machines(&self) -> usize {
        self.partition.len()
    }

    pub fn num_functions(&self) -> usize {
        self.permutation.len()
    }

    /// Distinct functions stored on machine `j`, sorted.
    pub fn resident(&self, j: usize) -> Vec<usize> {
        let mut r: Vec<usize> = self.partition[j].iter().chain(&self.multisets[j]).copied().collect();
        r.sort_unstable();
        r.dedup();
        r
    }

    /// Plan whose multi-sets are the shards themselves (`R_j = S_j`), each
    /// consumed in shard order. Samples are then neither independent nor
    /// uniform over `[N]`, so the variance-reduced gradient is biased; use for
    /// the practical preset only.
    pub fn shard_reuse(partition: Vec<Vec<usize>>) -> Result<Self> {
        let multisets = partition.clone();
        Self::from_parts(partition, multisets)
    }

    /// Plan from explicit shards and multi-sets, e.g. an adversarial split.
    /// The permutation is the concatenation of the shards.
    pub fn from_parts(partition: Vec<Vec<usize>>, multisets: Vec<Vec<usize>>) -> Result<Self> {
        if partition.len() != multisets.len() {
            return Err(Error::param("multisets", "one multi-set per machine required"));
        }
        let permutation: Vec<usize> = partition.iter().flatten().copied().collect();
        let n_total = permutation.len();
        let mut seen = vec![false; n_total];
        for &i in &permutation {
            if i >= n_total || std::mem::replace(&mut seen[i], true) {
                return Err(Error::param("partition", "shards must partition 0..N"));
            }
        }
        if let Some(&bad) = multisets.iter().flatten().find(|&&i| i >= n_total) {
            return Err(Error::IndexOutOfRange { index: bad, len: n_total });
        }
        let sequence: Vec<usize> = multisets.iter().flatten().copied().collect();
        let mut plan = AllocationPlan {
            partition,
            permutation,
            sequence,
            multisets,
            extra_transfers: 0,
            mismatched: 0,
            shipped: 0,
        };
        plan.count_transfers();
        Ok(plan)
    }

    fn count_transfers(&mut self) {
        let n_total = self.permutation.len();
        let mut owner_of = vec![0usize; n_total];
        for (j, part) in self.partition.iter().enumerate() {
            for &i in part {
                owner_of[i] = j;
            }
        }
        let mut mismatched = 0;
        let mut extra = 0;
        let mut ell = 0;
        for (j, set) in self.multisets.iter().enumerate() {
            for &r in set {
                let differs = self.permutation.get(ell).is_none_or(|&i| i != r);
                if differs {
                    mismatched += 1;
                    if owner_of[r] != j {
                        extra += 1;
                    }
                }
                ell += 1;
            }
        }
        let mut shipped = 0;
        for (j, set) in self.multisets.iter().enumerate() {
            let mut foreign: Vec<usize> = set.iter().copied().filter(|&r| owner_of[r] != j).collect();
            foreign.sort_unstable();
            foreign.dedup();
            shipped += foreign.len();
        }
        self.mismatched = mismatched;
        self.extra_transfers = extra;
        self.shipped = shipped;
    }

    /// One line per machine: sorted shard, ` | `, multi-set in consumption
    /// order. Indices are 0-based.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# machines={} functions={} samples={}", self.machines(), self.num_functions(), self.sequence.len());
        let _ = writeln!(
            out,
            "# extra_transfers={} mismatched={} shipped={}",
            self.extra_transfers, self.mismatched, self.shipped
        );
        for (part, set) in self.partition.iter().zip(&self.multisets) {
            let mut sorted = part.clone();
            sorted.sort_unstable();
            let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
            let _ = writeln!(out, "{} | {}", join(&sorted), join(set));
        }
        out
    }

    /// Inverse of [`AllocationPlan::to_text`]. The permutation becomes the
    /// concatenation of sorted shards, so `mismatched` is recomputed against it.
    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut partition = Vec::new();
        let mut multisets = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_string(),
                line: lineno + 1,
                message,
            };
            let (s, r) = line
                .split_once('|')
                .ok_or_else(|| parse_err("missing `|` separator".into()))?;
            let parse_list = |part: &str| -> Result<Vec<usize>> {
                part.split_whitespace()
                    .map(|tok| tok.parse::<usize>().map_err(|e| parse_err(format!("bad index `{tok}`: {e}"))))
                    .collect()
            };
            partition.push(parse_list(s)?);
            multisets.push(parse_list(r)?);
        }
        Self::from_parts(partition, multisets)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// Runs the full allocation with explicit partition and sequence streams.
pub fn allocate_with<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    n_total: usize,
    machines: usize,
    q: usize,
    capacity: &CapacityConfig,
    partition_rng: &mut R1,
    sequence_rng: &mut R2,
) -> Result<AllocationPlan> {
    let (partition, permutation) = random_partition(n_total, machines, partition_rng)?;
    let sequence = derive_sequence(&permutation, q, sequence_rng);
    let multisets = build_multisets(&sequence, capacity.spare, machines)?;
    let mut plan = AllocationPlan {
        partition,
        permutation,
        sequence,
        multisets,
        extra_transfers: 0,
        mismatched: 0,
        shipped: 0,
    };
    plan.count_transfers();
    for j in 0..machines {
        let resident = plan.resident(j).len();
        if resident > capacity.capacity {
            return Err(Error::CapacityExceeded {
                reason: format!("machine {j} holds {resident} > C={} functions", capacity.capacity),
            });
        }
    }
    Ok(plan)
}

/// [`allocate_with`] on the partition and sequence streams of `seed`.
pub fn allocate(n_total: usize, machines: usize, q: usize, capacity: &CapacityConfig, seed: u64) -> Result<AllocationPlan> {
    allocate_with(
        n_total,
        machines,
        q,
        capacity,
        &mut stream(seed, StreamRole::Partition),
        &mut stream(seed, StreamRole::Sequence),
    )
}

/// Consumable view of `R_1..R_m`. Each multi-set is drained front to back
/// and an index is never handed out twice.
#[derive(Debug, Clone)]
pub struct MultiSets {
    sets: Vec<Vec<usize>>,
    taken: Vec<usize>,
}

impl MultiSets {
    pub fn new(sets: Vec<Vec<usize>>) -> Self {
        let taken = vec![0; sets.len()];
        MultiSets { sets, taken }
    }

    pub fn machines(&self) -> usize {
        self.sets.len()
    }

    pub fn remaining(&self, j: usize) -> usize {
        self.sets[j].len() - self.taken[j]
    }

    pub fn total_remaining(&self) -> usize {
        (0..self.machines()).map(|j| self.remaining(j)).sum()
    }

    /// First machine at or after `from` that still has samples.
    pub fn next_nonempty(&self, from: usize) -> Option<usize> {
        (from..self.machines()).find(|&j| self.remaining(j) > 0)
    }

    pub fn take(&mut self, j: usize) -> Option<usize> {
        let pos = self.taken[j];
        let i = *self.sets[j].get(pos)?;
        self.taken[j] += 1;
        Some(i)
    }

    pub fn consumed(&self) -> usize {
        self.taken.iter().sum()
    }
}
