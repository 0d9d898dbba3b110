//! Chain-structured quadratics whose minimizer spreads along a path of
//! coordinates, and the decomposable hard instance built from them.
//!
//! `p_s(w) = a·[½wᵀΣ_s w − [s=1]·w_1] + (μ′/2)‖w‖²` with `a = (L − μ′)/4`.
//! Each `Σ_s` holds every k-th link of the chain, so a machine missing one
//! of the `p_s` can move its iterate's support forward by at most k
//! coordinates between communications.

use std::collections::BTreeMap;

use rand::Rng;

use crate::alloc::AllocationPlan;
use crate::cluster::{accel_grad_run, dsvrg_run, AgdConfig, Cluster, RunOptions, TransmitObserver};
use crate::error::{Error, Result};
use crate::objective::FiniteSum;
use crate::rng::{stream, StreamRole};
use crate::svrg::SvrgConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardParams {
    /// Number of distinct chain functions.
    pub k: usize,
    /// Repetitions; the chain length is `b = u·k`.
    pub u: usize,
    /// `κ′ = L/μ′`.
    pub kappa_prime: f64,
    pub l: f64,
    /// Number of coordinate blocks `n`.
    pub blocks: usize,
    /// Copies `v` of each (block, s) function.
    pub copies: usize,
}

impl HardParams {
    pub fn new(k: usize, u: usize, kappa_prime: f64, l: f64, blocks: usize, copies: usize) -> Result<Self> {
        if k == 0 || u == 0 || blocks == 0 || copies == 0 {
            return Err(Error::param("hard", "k, u, blocks and copies must be positive"));
        }
        if k * u < 2 {
            return Err(Error::param("hard", "chain length b = u·k must be at least 2"));
        }
        if !(kappa_prime >= 1.0 && kappa_prime.is_finite()) {
            return Err(Error::param("kappa_prime", "need κ′ ≥ 1"));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::param("l", "need L > 0"));
        }
        Ok(HardParams {
            k,
            u,
            kappa_prime,
            l,
            blocks,
            copies,
        })
    }

    /// Picks the smallest `u` with `h^{2b} ≤ 1e−16`.
    pub fn with_default_u(k: usize, kappa_prime: f64, l: f64, blocks: usize, copies: usize) -> Result<Self> {
        let probe = Self::new(k, 2usize.div_ceil(k), kappa_prime, l, blocks, copies)?;
        let h = probe.h();
        let b_min = if h > 0.0 {
            ((1e-16f64).ln() / (2.0 * h.ln())).ceil().max(2.0) as usize
        } else {
            2
        };
        Self::new(k, b_min.div_ceil(k), kappa_prime, l, blocks, copies)
    }

    /// `k = ⌈(e + max(1, α))·ln m⌉`, at least 1.
    pub fn default_k(alpha: f64, machines: usize) -> usize {
        let k = (std::f64::consts::E + alpha.max(1.0)) * (machines as f64).ln();
        (k.ceil() as usize).max(1)
    }

    pub fn b(&self) -> usize {
        self.u * self.k
    }

    pub fn dim(&self) -> usize {
        self.blocks * self.b()
    }

    pub fn num_functions(&self) -> usize {
        self.copies * self.k * self.blocks
    }

    pub fn mu_prime(&self) -> f64 {
        self.l / self.kappa_prime
    }

    /// Strong convexity of the assembled objective, `μ′/n`.
    pub fn mu(&self) -> f64 {
        self.mu_prime() / self.blocks as f64
    }

    /// Weight `a = (L − μ′)/4` of the chain term.
    pub fn chain_weight(&self) -> f64 {
        (self.l - self.mu_prime()) / 4.0
    }

    fn root_terms(&self) -> (f64, f64) {
        ((self.kappa_prime + self.k as f64 - 1.0).sqrt(), (self.k as f64).sqrt())
    }

    /// `(√(κ′+k−1) + 3√k)/(√(κ′+k−1) + √k)`.
    pub fn corner(&self) -> f64 {
        let (s, r) = self.root_terms();
        (s + 3.0 * r) / (s + r)
    }

    /// `(√(κ′+k−1) − √k)/(√(κ′+k−1) + √k)`.
    pub fn h(&self) -> f64 {
        let (s, r) = self.root_terms();
        (s - r) / (s + r)
    }

    /// Function `i` ↦ `(copy, block, s)` with `s` 1-based.
    pub fn component(&self, i: usize) -> (usize, usize, usize) {
        let per_copy = self.blocks * self.k;
        (i / per_copy, (i % per_copy) / self.k, i % self.k + 1)
    }

    pub fn to_text(&self) -> String {
        format!(
            "kind=hard\nk={}\nu={}\nkappa_prime={}\nl={}\nblocks={}\ncopies={}\n",
            self.k, self.u, self.kappa_prime, self.l, self.blocks, self.copies
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config("hard", format!("expected key=value, got `{line}`")))?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        if map.get("kind").map(String::as_str) != Some("hard") {
            return Err(Error::config("kind", "expected kind=hard"));
        }
        fn field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &'static str) -> Result<T> {
            map.get(key)
                .ok_or_else(|| Error::config(key, "missing"))?
                .parse()
                .map_err(|_| Error::config(key, "not a number"))
        }
        Self::new(
            field(&map, "k")?,
            field(&map, "u")?,
            field(&map, "kappa_prime")?,
            field(&map, "l")?,
            field(&map, "blocks")?,
            field(&map, "copies")?,
        )
    }
}

/// Symmetric tridiagonal matrix; `off[i]` couples rows `i` and `i+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Tridiagonal {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `out += scale · self · w`.
    pub fn mul_add(&self, w: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut v = self.diag[i] * w[i];
            if i > 0 {
                v += self.off[i - 1] * w[i - 1];
            }
            if i + 1 < n {
                v += self.off[i] * w[i + 1];
            }
            out[i] += scale * v;
        }
    }

    pub fn quad_form(&self, w: &[f64]) -> f64 {
        let diag: f64 = self.diag.iter().zip(w).map(|(d, x)| d * x * x).sum();
        let off: f64 = self.off.iter().zip(w.windows(2)).map(|(o, p)| 2.0 * o * p[0] * p[1]).sum();
        diag + off
    }

    pub fn scaled(&self, a: f64, shift: f64) -> Self {
        Tridiagonal {
            diag: self.diag.iter().map(|d| a * d + shift).collect(),
            off: self.off.iter().map(|o| a * o).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tridiagonal, coeff: f64) {
        for (a, b) in self.diag.iter_mut().zip(&other.diag) {
            *a += coeff * b;
        }
        for (a, b) in self.off.iter_mut().zip(&other.off) {
            *a += coeff * b;
        }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = self.diag[i];
        }
        for (i, &o) in self.off.iter().enumerate() {
            m[i * n + i + 1] = o;
            m[(i + 1) * n + i] = o;
        }
        m
    }

    /// Largest eigenvalue of a positive semidefinite matrix by power iteration.
    pub fn lambda_max(&self, tol: f64) -> f64 {
        let n = self.dim();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * (i % 7) as f64).collect();
        let mut lambda = 0.0;
        for _ in 0..100_000 {
            let mut w = vec![0.0; n];
            self.mul_add(&v, 1.0, &mut w);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = self.quad_form(&v) / v.iter().map(|x| x * x).sum::<f64>();
            w.iter_mut().for_each(|x| *x /= norm);
            v = w;
            if (next - lambda).abs() <= tol * next.abs().max(1.0) {
                return next;
            }
            lambda = next;
        }
        lambda
    }

    /// Largest connected block of the off-diagonal sparsity pattern.
    pub fn max_block(&self) -> usize {
        let mut best = usize::from(self.dim() > 0);
        let mut run = 1;
        for &o in &self.off {
            if o != 0.0 {
                run += 1;
                best = best.max(run);
            } else {
                run = 1;
            }
        }
        best
    }
}

/// Adds the link matrix `M_i` (0-based `i`) of a chain of length `b`.
fn add_link(t: &mut Tridiagonal, i: usize, corner: f64) {
    let b = t.dim();
    if i == 0 {
        t.diag[0] += 1.0;
        return;
    }
    // rows i and i+1 in 1-based numbering
    let (r0, r1) = (i - 1, i);
    t.diag[r0] += 1.0;
    t.diag[r1] += if i == b - 1 { corner } else { 1.0 };
    t.off[r0] -= 1.0;
}

/// `Σ_s = Σ_{i<u} M_{ik+s−1}` for `1 ≤ s ≤ k`.
pub fn build_sigma(s: usize, params: &HardParams) -> Result<Tridiagonal> {
    if s == 0 || s > params.k {
        return Err(Error::IndexOutOfRange {
            index: s,
            len: params.k,
        });
    }
    let b = params.b();
    let corner = params.corner();
    let mut t = Tridiagonal::zeros(b);
    for rep in 0..params.u {
        add_link(&mut t, rep * params.k + s - 1, corner);
    }
    Ok(t)
}

/// Closed form of `Σ_1 + … + Σ_k`: diagonal 2 with the corner in the last
/// entry, off-diagonal −1.
pub fn chain_sum_matrix(params: &HardParams) -> Tridiagonal {
    let b = params.b();
    let mut diag = vec![2.0; b];
    diag[b - 1] = params.corner();
    Tridiagonal {
        diag,
        off: vec![-1.0; b - 1],
    }
}

/// The `k` chain functions on `R^b`.
#[derive(Debug, Clone)]
pub struct ChainFamily {
    params: HardParams,
    sigmas: Vec<Tridiagonal>,
}

impl ChainFamily {
    pub fn new(params: HardParams) -> Self {
        let sigmas = (1..=params.k)
            .map(|s| build_sigma(s, &params).expect("s in range"))
            .collect();
        ChainFamily { params, sigmas }
    }

    pub fn params(&self) -> &HardParams {
        &self.params
    }

    pub fn sigma(&self, s: usize) -> &Tridiagonal {
        &self.sigmas[s - 1]
    }

    fn check(&self, s: usize, w: &[f64]) -> Result<()> {
        if s == 0 || s > self.params.k {
            return Err(Error::IndexOutOfRange {
                index: s,
                len: self.params.k,
            });
        }
        if w.len() != self.params.b() {
            return Err(Error::DimensionMismatch {
                expected: self.params.b(),
                got: w.len(),
            });
        }
        Ok(())
    }

    fn value_unchecked(&self, s: usize, w: &[f64]) -> f64 {
        let a = self.params.chain_weight();
        let mut chain = 0.5 * self.sigmas[s - 1].quad_form(w);
        if s == 1 {
            chain -= w[0];
        }
        a * chain + 0.5 * self.params.mu_prime() * w.iter().map(|x| x * x).sum::<f64>()
    }

    fn add_grad_unchecked(&self, s: usize, w: &[f64], scale: f64, out: &mut [f64]) {
        let a = self.params.chain_weight();
        self.sigmas[s - 1].mul_add(w, scale * a, out);
        if s == 1 {
            out[0] -= scale * a;
        }
        let mu = self.params.mu_prime();
        for (o, x) in out.iter_mut().zip(w) {
            *o += scale * mu * x;
        }
    }

    pub fn p_value(&self, s: usize, w: &[f64]) -> Result<f64> {
        self.check(s, w)?;
        Ok(self.value_unchecked(s, w))
    }

    pub fn p_grad(&self, s: usize, w: &[f64]) -> Result<Vec<f64>> {
        self.check(s, w)?;
        let mut g = vec![0.0; w.len()];
        self.add_grad_unchecked(s, w, 1.0, &mut g);
        Ok(g)
    }

    /// `aΣ_s + μ′I`.
    pub fn p_hessian(&self, s: usize) -> Result<Tridiagonal> {
        self.check(s, &vec![0.0; self.params.b()])?;
        Ok(self.sigmas[s - 1].scaled(self.params.chain_weight(), self.params.mu_prime()))
    }

    /// `p̄ = (1/k)Σ_s p_s`.
    pub fn pbar_value(&self, w: &[f64]) -> f64 {
        (1..=self.params.k).map(|s| self.value_unchecked(s, w)).sum::<f64>() / self.params.k as f64
    }

    pub fn pbar_grad(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        let inv = 1.0 / self.params.k as f64;
        for s in 1..=self.params.k {
            self.add_grad_unchecked(s, w, inv, &mut g);
        }
        g
    }

    pub fn pbar_hessian(&self) -> Tridiagonal {
        let k = self.params.k as f64;
        chain_sum_matrix(&self.params).scaled(self.params.chain_weight() / k, self.params.mu_prime())
    }

    /// `p̄(w*) = −(a/2k)·h`.
    pub fn pbar_min_value(&self) -> f64 {
        -self.params.chain_weight() / (2.0 * self.params.k as f64) * self.params.h()
    }
}

/// `h` and `w*_j = h^j`, `j = 1..b`.
pub fn pbar_minimizer(params: &HardParams) -> (f64, Vec<f64>) {
    let h = params.h();
    let mut w = Vec::with_capacity(params.b());
    let mut p = 1.0;
    for _ in 0..params.b() {
        p *= h;
        w.push(p);
    }
    (h, w)
}

/// `N = v·k·n` functions on `R^{n·b}`, each a chain function on one block.
#[derive(Debug, Clone)]
pub struct HardInstance {
    family: ChainFamily,
    w_star: Vec<f64>,
}

impl HardInstance {
    pub fn new(params: HardParams) -> Self {
        let (_, w_star) = pbar_minimizer(&params);
        HardInstance {
            family: ChainFamily::new(params),
            w_star,
        }
    }

    pub fn params(&self) -> &HardParams {
        &self.family.params
    }

    pub fn family(&self) -> &ChainFamily {
        &self.family
    }

    /// `(w*, …, w*)`.
    pub fn minimizer(&self) -> Vec<f64> {
        self.w_star.repeat(self.params().blocks)
    }

    pub fn optimal_value(&self) -> f64 {
        self.family.pbar_min_value()
    }

    /// `f(x) − f*` from the exact quadratic form around the minimizer.
    pub fn gap(&self, x: &[f64]) -> f64 {
        let b = self.params().b();
        let hess = self.family.pbar_hessian();
        let mut total = 0.0;
        for block in x.chunks(b) {
            let e: Vec<f64> = block.iter().zip(&self.w_star).map(|(a, w)| a - w).collect();
            total += 0.5 * hess.quad_form(&e);
        }
        total / self.params().blocks as f64
    }

    /// Functions with chain index `s` (1-based).
    pub fn functions_with_s(&self, s: usize) -> Vec<usize> {
        (0..self.params().num_functions())
            .filter(|&i| self.params().component(i).2 == s)
            .collect()
    }

    /// `(μ′‖w*‖²/4)·h^{2t}`.
    pub fn gap_lower_bound(&self, t: usize) -> f64 {
        let p = self.params();
        let norm_sq: f64 = self.w_star.iter().map(|x| x * x).sum();
        p.mu_prime() * norm_sq * p.h().powi(2 * t as i32) / 4.0
    }
}

impl FiniteSum for HardInstance {
    fn num_components(&self) -> usize {
        self.params().num_functions()
    }

    fn dim(&self) -> usize {
        self.params().dim()
    }

    fn value_at(&self, i: usize, x: &[f64]) -> f64 {
        let (_, j, s) = self.params().component(i);
        let b = self.params().b();
        self.family.value_unchecked(s, &x[j * b..(j + 1) * b])
    }

    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let (_, j, s) = self.params().component(i);
        let b = self.params().b();
        let r = j * b..(j + 1) * b;
        self.family.add_grad_unchecked(s, &x[r.clone()], scale, &mut out[r]);
    }
}

/// Restriction of the hard instance to one coordinate block: the same `N`
/// functions, zero unless they act on that block.
#[derive(Debug, Clone)]
pub struct BlockInstance {
    family: ChainFamily,
    block: usize,
}

impl BlockInstance {
    pub fn new(params: HardParams, block: usize) -> Result<Self> {
        if block >= params.blocks {
            return Err(Error::IndexOutOfRange {
                index: block,
                len: params.blocks,
            });
        }
        Ok(BlockInstance {
            family: ChainFamily::new(params),
            block,
        })
    }

    /// Minimum of `ḡ = p̄/n`.
    pub fn optimal_value(&self) -> f64 {
        self.family.pbar_min_value() / self.family.params.blocks as f64
    }
}

impl FiniteSum for BlockInstance {
    fn num_components(&self) -> usize {
        self.family.params.num_functions()
    }

    fn dim(&self) -> usize {
        self.family.params.b()
    }

    fn value_at(&self, i: usize, x: &[f64]) -> f64 {
        let (_, j, s) = self.family.params.component(i);
        if j == self.block {
            self.family.value_unchecked(s, x)
        } else {
            0.0
        }
    }

    fn add_grad(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let (_, j, s) = self.family.params.component(i);
        if j == self.block {
            self.family.add_grad_unchecked(s, x, scale, out);
        }
    }
}

/// Largest Hessian block of `Σ_{s∈subset} c_s·p_s` (`s` 1-based).
pub fn block_structure(subset: &[usize], coeffs: &[f64], params: &HardParams) -> Result<usize> {
    if subset.len() != coeffs.len() {
        return Err(Error::DimensionMismatch {
            expected: subset.len(),
            got: coeffs.len(),
        });
    }
    let mut present = vec![false; params.k];
    for &s in subset {
        if s == 0 || s > params.k {
            return Err(Error::IndexOutOfRange { index: s, len: params.k });
        }
        present[s - 1] = true;
    }
    if present.iter().all(|&p| p) {
        return Err(Error::NotStrictSubset);
    }
    let family = ChainFamily::new(*params);
    let mut hess = Tridiagonal::zeros(params.b());
    for (&s, &c) in subset.iter().zip(coeffs) {
        hess.add_assign(&family.p_hessian(s)?, c);
    }
    Ok(hess.max_block())
}

/// Coordinates reachable after `rounds` rounds: `rounds·k`.
pub fn reachable_dim(rounds: usize, k: usize) -> usize {
    rounds * k
}

/// Largest 1-based index of a nonzero entry within any block of `v`.
pub fn support_index(v: &[f64], b: usize) -> usize {
    v.chunks(b)
        .map(|blk| blk.iter().rposition(|&x| x != 0.0).map_or(0, |p| p + 1))
        .max()
        .unwrap_or(0)
}

/// Records, per round, the deepest chain coordinate any transmitted vector
/// has reached.
#[derive(Debug, Clone)]
pub struct SupportProbe {
    b: usize,
    by_round: BTreeMap<u64, usize>,
}

impl SupportProbe {
    pub fn new(b: usize) -> Self {
        SupportProbe {
            b,
            by_round: BTreeMap::new(),
        }
    }

    pub fn by_round(&self) -> &BTreeMap<u64, usize> {
        &self.by_round
    }

    /// Rounds whose vectors reach beyond `round·k`.
    pub fn violations(&self, k: usize) -> Vec<(u64, usize)> {
        self.by_round
            .iter()
            .filter(|(&r, &idx)| idx > reachable_dim(r as usize, k))
            .map(|(&r, &idx)| (r, idx))
            .collect()
    }

    /// Largest growth of the support between consecutive rounds.
    pub fn max_growth(&self) -> usize {
        let mut prev = 0;
        let mut last_round = 0;
        let mut worst = 0;
        for (&r, &idx) in &self.by_round {
            let running = prev.max(idx);
            let steps = (r - last_round).max(1) as usize;
            worst = worst.max((running - prev).div_ceil(steps));
            prev = running;
            last_round = r;
        }
        worst
    }
}

impl TransmitObserver for SupportProbe {
    fn on_transmit(&mut self, round: u64, vector: &[f64]) {
        let idx = support_index(vector, self.b);
        let e = self.by_round.entry(round).or_insert(0);
        *e = (*e).max(idx);
    }
}

/// Machine `j` holds exactly the functions with chain index `j+1`, so no
/// machine has all of them; its multi-set is drawn uniformly from its own
/// shard. Requires `m = k ≥ 2`.
pub fn adversarial_plan<R: Rng + ?Sized>(inst: &HardInstance, samples_per_machine: usize, rng: &mut R) -> Result<AllocationPlan> {
    let k = inst.params().k;
    if k < 2 {
        return Err(Error::param("k", "an adversarial split needs k ≥ 2"));
    }
    let partition: Vec<Vec<usize>> = (1..=k).map(|s| inst.functions_with_s(s)).collect();
    let multisets = partition
        .iter()
        .map(|shard| (0..samples_per_machine).map(|_| shard[rng.random_range(0..shard.len())]).collect())
        .collect();
    AllocationPlan::from_parts(partition, multisets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeAlgorithm {
    AccelGrad,
    Dsvrg,
}

impl ProbeAlgorithm {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "accel_grad" | "agd" => Some(ProbeAlgorithm::AccelGrad),
            "dsvrg" => Some(ProbeAlgorithm::Dsvrg),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub probe: SupportProbe,
    /// `(rounds, gap, lower bound)` per checkpoint.
    pub checkpoints: Vec<(u64, f64, f64)>,
    pub violations: Vec<(u64, usize)>,
    pub max_growth: usize,
}

impl ProbeReport {
    pub fn bound_holds(&self) -> bool {
        self.checkpoints.iter().all(|&(_, gap, bound)| gap >= bound)
    }
}

/// Runs `algo` from the origin on an adversarially split hard instance for
/// at least `rounds` rounds and records support growth and gaps.
///
/// A checkpoint taken after `R` completed rounds may already hold the work
/// of round `R+1`, so its gap is compared with the bound for `(R+1)·k`
/// reachable coordinates.
pub fn run_probe(inst: &HardInstance, algo: ProbeAlgorithm, rounds: usize, seed: u64) -> Result<ProbeReport> {
    let p = *inst.params();
    let mut rng = stream(seed, StreamRole::Sampling);
    let x0 = vec![0.0; p.dim()];
    let mut probe = SupportProbe::new(p.b());
    let ledger = match algo {
        ProbeAlgorithm::AccelGrad => {
            let plan = adversarial_plan(inst, 0, &mut rng)?;
            let mut cluster = Cluster::new(&plan);
            let cfg = AgdConfig {
                l: p.l,
                mu: p.mu(),
                iterations: rounds,
            };
            accel_grad_run(inst, &mut cluster, &x0, &cfg, RunOptions::default().with_observer(&mut probe))?.ledger
        }
        ProbeAlgorithm::Dsvrg => {
            let steps = 2 * p.num_functions();
            let plan = adversarial_plan(inst, rounds * steps, &mut rng)?;
            let mut cluster = Cluster::new(&plan);
            let cfg = SvrgConfig::unchecked(1.0 / (16.0 * p.l), steps, rounds);
            dsvrg_run(inst, &mut cluster, &x0, &cfg, RunOptions::default().with_observer(&mut probe))?.ledger
        }
    };
    let checkpoints = ledger
        .checkpoints
        .iter()
        .map(|c| {
            let t = reachable_dim(c.rounds as usize + 1, p.k);
            (c.rounds, c.value - inst.optimal_value(), inst.gap_lower_bound(t))
        })
        .collect();
    Ok(ProbeReport {
        violations: probe.violations(p.k),
        max_growth: probe.max_growth(),
        probe,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: usize, u: usize, kp: f64) -> HardParams {
        HardParams::new(k, u, kp, 1.0, 2, 1).unwrap()
    }

    #[test]
    fn sigma_matches_displayed_example() {
        let p = params(3, 2, 10.0);
        let c = p.corner();
        let s1 = build_sigma(1, &p).unwrap();
        assert_eq!(s1.diag, vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(s1.off, vec![0.0, 0.0, -1.0, 0.0, 0.0]);
        let s2 = build_sigma(2, &p).unwrap();
        assert_eq!(s2.diag, vec![1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(s2.off, vec![-1.0, 0.0, 0.0, -1.0, 0.0]);
        let s3 = build_sigma(3, &p).unwrap();
        assert_eq!(s3.diag, vec![0.0, 1.0, 1.0, 0.0, 1.0, c]);
        assert_eq!(s3.off, vec![0.0, -1.0, 0.0, 0.0, -1.0]);
        assert!(build_sigma(4, &p).is_err());
    }

    #[test]
    fn sigma_sum_identity() {
        for (k, u) in [(1, 5), (2, 3), (3, 4), (5, 2)] {
            let p = params(k, u, 7.0);
            let mut sum = Tridiagonal::zeros(p.b());
            for s in 1..=k {
                sum.add_assign(&build_sigma(s, &p).unwrap(), 1.0);
            }
            assert_eq!(sum, chain_sum_matrix(&p));
        }
    }

    #[test]
    fn corner_is_two_minus_h() {
        for kp in [1.5, 10.0, 1000.0] {
            for k in [1, 2, 5] {
                let p = params(k, 2, kp);
                assert!((p.corner() - (2.0 - p.h())).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn h_examples() {
        let p = params(1, 3, 4.0);
        assert!((p.h() - 1.0 / 3.0).abs() < 1e-15);
        let (_, w) = pbar_minimizer(&p);
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 9.0).abs() < 1e-15);
        for (k, kp) in [(1, 4.0), (2, 50.0), (3, 1e4)] {
            let p = params(k, 2, kp);
            let h = p.h();
            let coef = (kp - 1.0 + 2.0 * k as f64) / (kp - 1.0);
            assert!((h * h - 2.0 * coef * h + 1.0).abs() < 1e-12);
            assert!(h > 0.0 && h < 1.0);
        }
    }

    #[test]
    fn gradient_at_origin() {
        let p = params(2, 3, 5.0);
        let fam = ChainFamily::new(p);
        let z = vec![0.0; p.b()];
        assert_eq!(fam.p_value(2, &z).unwrap(), 0.0);
        assert!(fam.p_grad(2, &z).unwrap().iter().all(|&g| g == 0.0));
        let g1 = fam.p_grad(1, &z).unwrap();
        assert!((g1[0] + 0.25 * (1.0 - 0.2)).abs() < 1e-15);
        assert!(g1[1..].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn minimizer_is_stationary() {
        let p = params(2, 50, 100.0);
        let fam = ChainFamily::new(p);
        let (_, w) = pbar_minimizer(&p);
        let g = fam.pbar_grad(&w);
        let g0 = fam.pbar_grad(&vec![0.0; p.b()]);
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(n(&g) <= 1e-8 * n(&g0));
        assert!((fam.pbar_value(&w) - fam.pbar_min_value()).abs() < 1e-14);
    }

    #[test]
    fn block_structure_examples() {
        let p = params(3, 2, 10.0);
        assert_eq!(block_structure(&[], &[], &p).unwrap(), 1);
        assert!(block_structure(&[1, 2], &[1.0, 0.5], &p).unwrap() <= 3);
        assert!(matches!(block_structure(&[1, 2, 3], &[1.0; 3], &p), Err(Error::NotStrictSubset)));
        assert_eq!(chain_sum_matrix(&p).max_block(), 6);
    }

    #[test]
    fn hard_instance_minimum() {
        let p = HardParams::new(2, 20, 30.0, 2.0, 3, 2).unwrap();
        let inst = HardInstance::new(p);
        let x = inst.minimizer();
        let g = inst.mean_grad(&x);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
        assert!((inst.mean_value(&x) - inst.optimal_value()).abs() < 1e-13);
        assert_eq!(inst.gap(&x), 0.0);
        let y: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
        assert!((inst.gap(&y) - (inst.mean_value(&y) - inst.optimal_value())).abs() < 1e-12);
    }

    #[test]
    fn default_u_truncates_below_precision() {
        let p = HardParams::with_default_u(2, 1000.0, 1.0, 1, 1).unwrap();
        assert!(p.h().powi(2 * p.b() as i32) <= 1e-16);
        assert!(p.h().powi(2 * (p.b() - p.k) as i32) > 1e-16);
    }

    #[test]
    fn params_text_round_trip() {
        let p = HardParams::new(3, 7, 123.5, 2.0, 4, 2).unwrap();
        assert_eq!(HardParams::from_text(&p.to_text()).unwrap(), p);
        assert!(HardParams::from_text("kind=ridge").is_err());
    }

    #[test]
    fn adversarial_plan_splits_by_chain_index() {
        let inst = HardInstance::new(HardParams::new(2, 4, 10.0, 1.0, 2, 3).unwrap());
        let plan = adversarial_plan(&inst, 5, &mut stream(0, StreamRole::Sampling)).unwrap();
        for (j, shard) in plan.partition.iter().enumerate() {
            assert!(shard.iter().all(|&i| inst.params().component(i).2 == j + 1));
            assert_eq!(plan.resident(j).len(), shard.len());
        }
    }

    #[test]
    fn probes_stay_confined() {
        let inst = HardInstance::new(HardParams::new(2, 30, 100.0, 1.0, 2, 2).unwrap());
        for algo in [ProbeAlgorithm::AccelGrad, ProbeAlgorithm::Dsvrg] {
            let rep = run_probe(&inst, algo, 12, 1).unwrap();
            assert!(rep.violations.is_empty(), "{algo:?} {:?}", rep.violations);
            assert!(rep.max_growth <= 2);
            assert!(rep.bound_holds());
        }
    }

    #[test]
    fn support_probe_tracks_rounds() {
        let mut probe = SupportProbe::new(4);
        probe.on_transmit(1, &[1.0, 0.0, 0.0, 0.0, 0.5, 0.2, 0.0, 0.0]);
        probe.on_transmit(2, &[1.0, 1.0, 1.0, 0.0]);
        assert_eq!(probe.by_round()[&1], 2);
        assert_eq!(probe.max_growth(), 2);
        assert!(probe.violations(2).is_empty());
        assert_eq!(probe.violations(1), vec![(1, 2), (2, 3)]);
    }
}
