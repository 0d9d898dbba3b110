//! Builds the problem described by a config, runs every (algorithm, seed)
//! pair and writes one CSV of checkpoints per run plus a gnuplot script.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use super::config::{Algorithm, ExperimentConfig, LambdaRule, SourceKind};
use super::libsvm::parse_libsvm;
use super::rff::rff_transform;
use super::synth::{ridge_lambda_for_kappa, synth_classification, synth_ridge_with_lambda};
use crate::alloc::{allocate, random_partition, AllocationPlan, CapacityConfig};
use crate::cluster::{
    accel_grad_run, dasvrg_run, default_dasvrg_schedule, dsvrg_run, AgdConfig, Cluster, DasvrgConfig, RunOptions,
};
use crate::error::{Error, Result};
use crate::lowerbound::HardInstance;
use crate::objective::{CurvaturePreset, FiniteSum, LossKind, ObjectiveSpec};
use crate::optimum::solve_exact;
use crate::rng::{stream, StreamRole};
use crate::svrg::{ceil_count, stages_needed, svrg_single_machine, StageOutputKind, SvrgConfig, UniformSource};

/// Objective with the constants and optimum needed to run and score it.
pub struct Problem {
    pub f: Box<dyn FiniteSum>,
    pub f_star: f64,
    pub l: f64,
    pub mu: f64,
    pub lambda: Option<f64>,
}

impl Problem {
    pub fn n_total(&self) -> usize {
        self.f.num_components()
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn from_spec(spec: ObjectiveSpec) -> Result<Self> {
        let info = spec.constants(CurvaturePreset::Tight)?;
        let f_star = solve_exact(&spec)?.value;
        Ok(Problem {
            f_star,
            l: info.l,
            mu: info.mu,
            lambda: Some(spec.lambda()),
            f: Box::new(spec),
        })
    }

    pub fn gap0(&self) -> f64 {
        (self.f.mean_value(&vec![0.0; self.dim()]) - self.f_star).max(f64::MIN_POSITIVE)
    }
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    cfg.validate()?;
    let mut data_rng = stream(cfg.data_seed, StreamRole::Data);
    let (data, default_loss) = match cfg.source {
        SourceKind::Hard => {
            let inst = HardInstance::new(cfg.hard_params()?);
            let p = *inst.params();
            return Ok(Problem {
                f_star: inst.optimal_value(),
                l: p.l,
                mu: p.mu(),
                lambda: None,
                f: Box::new(inst),
            });
        }
        SourceKind::Ridge => {
            let lambda = match cfg.lambda {
                Some(rule) => rule.value(cfg.n_points),
                None => ridge_lambda_for_kappa(cfg.kappa)?,
            };
            let (spec, _) = synth_ridge_with_lambda(cfg.n_points, cfg.dim, lambda, &mut data_rng)?;
            (spec.data().clone(), LossKind::Square)
        }
        SourceKind::Logistic => (synth_classification(cfg.n_points, cfg.dim, &mut data_rng)?, LossKind::Logistic),
        SourceKind::Libsvm => {
            let path = cfg.data_path.as_ref().expect("validated");
            (parse_libsvm(path)?, LossKind::Square)
        }
    };
    let data = match (cfg.rff_dim, cfg.rff_bandwidth) {
        (Some(dim), Some(bw)) => rff_transform(&data, dim, bw, &mut stream(cfg.data_seed, StreamRole::Features))?,
        _ => data,
    };
    let loss = cfg.loss.unwrap_or(default_loss);
    let lambda = match (cfg.source, cfg.lambda) {
        (_, Some(rule)) => rule.value(data.len()),
        (SourceKind::Ridge, None) => ridge_lambda_for_kappa(cfg.kappa)?,
        (_, None) => LambdaRule::InvThreeQuarter.value(data.len()),
    };
    Problem::from_spec(ObjectiveSpec::new(loss, data, lambda)?)
}

/// Step size and iteration counts of one algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub eta: f64,
    pub inner_steps: usize,
    pub stages: usize,
    pub outer: usize,
    pub sigma: f64,
    pub agd_iterations: usize,
}

impl Schedule {
    pub fn samples(&self, algo: Algorithm) -> usize {
        match algo {
            Algorithm::Dsvrg | Algorithm::SvrgOracle => self.inner_steps * self.stages,
            Algorithm::Dasvrg => self.inner_steps * self.stages * self.outer,
            Algorithm::AccelGrad => 0,
        }
    }
}

const PRACTICAL_STEPS: usize = 10_000;

/// Defaults: theory mode uses the convergence-guarantee presets, practical
/// mode uses `η = 1/L`, `T = 10⁴` (at most `N`) with `K = N/T` for DSVRG and
/// `K = 1`, `P = N/T` for DASVRG. Explicit config values override both.
pub fn resolve_schedule(cfg: &ExperimentConfig, algo: Algorithm, problem: &Problem) -> Result<Schedule> {
    let (l, mu) = (problem.l, problem.mu);
    let n_total = problem.n_total();
    let shard = n_total.div_ceil(cfg.machines);
    let gap0 = problem.gap0();
    let kappa = l / mu;
    let practical_t = cfg.inner_steps.unwrap_or(PRACTICAL_STEPS.min(n_total));
    let passes = (n_total / practical_t.max(1)).max(1);
    let mut s = Schedule {
        eta: 1.0 / (16.0 * l),
        inner_steps: 0,
        stages: 0,
        outer: 0,
        sigma: 0.0,
        agd_iterations: 0,
    };
    match algo {
        Algorithm::Dsvrg | Algorithm::SvrgOracle => {
            if cfg.practical {
                s.eta = 1.0 / l;
                s.inner_steps = practical_t;
                s.stages = cfg.stages.unwrap_or(passes);
            } else {
                s.inner_steps = cfg.inner_steps.unwrap_or(ceil_count(96.0 * kappa));
                s.stages = match cfg.stages {
                    Some(k) => k,
                    None => stages_needed(8.0 / 9.0, gap0, cfg.epsilon)?,
                };
            }
        }
        Algorithm::Dasvrg => {
            let base = default_dasvrg_schedule(l, mu, shard, gap0, cfg.epsilon)?;
            s.sigma = base.sigma;
            if cfg.practical {
                s.eta = 1.0 / l;
                s.inner_steps = practical_t;
                s.stages = cfg.stages.unwrap_or(1);
                s.outer = cfg.outer.unwrap_or(passes);
            } else {
                s.eta = base.eta;
                s.inner_steps = cfg.inner_steps.unwrap_or(base.inner_steps);
                s.stages = cfg.stages.unwrap_or(base.stages);
                s.outer = cfg.outer.unwrap_or(base.outer);
            }
            s.sigma = cfg.sigma.unwrap_or(s.sigma);
        }
        Algorithm::AccelGrad => {
            s.agd_iterations = cfg
                .agd_iterations
                .unwrap_or_else(|| ceil_count(kappa.sqrt() * (gap0 / cfg.epsilon).ln().max(1.0)));
        }
    }
    if let Some(eta) = cfg.eta {
        s.eta = eta;
    }
    if algo != Algorithm::AccelGrad && s.eta >= 1.0 / (4.0 * l) {
        if cfg.practical {
            warn!(
                "{}: step {} is outside the guaranteed range (< {}); practical mode",
                algo.name(),
                s.eta,
                1.0 / (4.0 * l)
            );
        } else {
            return Err(Error::InvalidStep {
                eta: s.eta,
                limit: 1.0 / (4.0 * l),
            });
        }
    }
    Ok(s)
}

/// Partition plus multi-sets for `q` samples, or `R_j = S_j` in shard-reuse
/// mode. Shard reuse drops the independence of the samples from the
/// partition, so the unbiasedness guarantee no longer holds.
pub fn plan_allocation(cfg: &ExperimentConfig, n_total: usize, q: usize, seed: u64) -> Result<AllocationPlan> {
    if cfg.shard_reuse {
        let (partition, _) = random_partition(n_total, cfg.machines, &mut stream(seed, StreamRole::Partition))?;
        return AllocationPlan::shard_reuse(partition);
    }
    let cap = match cfg.capacity {
        Some(c) => CapacityConfig::new(c, n_total, cfg.machines)?,
        None => CapacityConfig::with_spare(q.div_ceil(cfg.machines).max(1), n_total, cfg.machines)?,
    };
    allocate(n_total, cfg.machines, q, &cap, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub stage: usize,
    pub rounds: u64,
    pub vectors: u64,
    pub runtime: u64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub algo: Algorithm,
    pub seed: u64,
    pub rows: Vec<CsvRow>,
}

fn thin(rows: Vec<CsvRow>, every: usize) -> Vec<CsvRow> {
    let last = rows.len().saturating_sub(1);
    rows.into_iter()
        .enumerate()
        .filter(|(i, _)| i % every == 0 || *i == last)
        .map(|(_, r)| r)
        .collect()
}

/// One run of `algo` with rng seed `seed`.
pub fn run_single(cfg: &ExperimentConfig, problem: &Problem, algo: Algorithm, seed: u64) -> Result<RunRecord> {
    let sched = resolve_schedule(cfg, algo, problem)?;
    let f = &*problem.f;
    let x0 = vec![0.0; problem.dim()];
    let opts = || RunOptions {
        f_star: Some(problem.f_star),
        target_gap: cfg.target_gap,
        observer: None,
    };
    let rows = if algo == Algorithm::SvrgOracle {
        let svrg = SvrgConfig::unchecked(sched.eta, sched.inner_steps, sched.stages);
        let mut source = UniformSource::new(problem.n_total(), stream(seed, StreamRole::Sampling));
        let trace = svrg_single_machine(f, &x0, &svrg, &mut source)?;
        let per_stage = (problem.n_total() + 2 * sched.inner_steps) as u64;
        trace
            .iter()
            .enumerate()
            .map(|(stage, x)| CsvRow {
                stage,
                rounds: stage as u64,
                vectors: 0,
                runtime: stage as u64 * per_stage,
                gap: (f.mean_value(x) - problem.f_star).max(f64::MIN_POSITIVE),
            })
            .collect()
    } else {
        let plan = plan_allocation(cfg, problem.n_total(), sched.samples(algo), seed)?;
        let mut cluster = match cfg.capacity {
            Some(c) if !cfg.shard_reuse => Cluster::with_capacity(&plan, c)?,
            _ => Cluster::new(&plan),
        }
        .with_broadcast_cost(cfg.broadcast);
        let result = match algo {
            Algorithm::Dsvrg => {
                let svrg = SvrgConfig::unchecked(sched.eta, sched.inner_steps, sched.stages);
                dsvrg_run(f, &mut cluster, &x0, &svrg, opts())?
            }
            Algorithm::Dasvrg => {
                let dcfg = DasvrgConfig {
                    eta: sched.eta,
                    inner_steps: sched.inner_steps,
                    stages: sched.stages,
                    outer: sched.outer,
                    sigma: sched.sigma,
                    mu: problem.mu,
                    output: StageOutputKind::Average,
                };
                dasvrg_run(f, &mut cluster, &x0, &dcfg, opts())?
            }
            Algorithm::AccelGrad => {
                let acfg = AgdConfig {
                    l: problem.l,
                    mu: problem.mu,
                    iterations: sched.agd_iterations,
                };
                accel_grad_run(f, &mut cluster, &x0, &acfg, opts())?
            }
            Algorithm::SvrgOracle => unreachable!(),
        };
        result
            .ledger
            .checkpoints
            .iter()
            .map(|c| CsvRow {
                stage: c.stage,
                rounds: c.rounds,
                vectors: c.vectors,
                runtime: c.runtime,
                gap: c.gap(problem.f_star),
            })
            .collect()
    };
    Ok(RunRecord {
        algo,
        seed,
        rows: thin(rows, cfg.checkpoint_every),
    })
}

pub const CSV_HEADER: &str = "algo,seed,stage,rounds,vectors,runtime,gap";

/// Metadata comment line, header, then one row per checkpoint.
pub fn csv_text(cfg: &ExperimentConfig, problem: &Problem, record: &RunRecord) -> String {
    let mut out = String::new();
    let lambda = problem.lambda.map_or("none".to_string(), |l| format!("{l}"));
    writeln!(
        out,
        "# lambda={lambda},L={},mu={},N={},d={},m={},broadcast={}",
        problem.l,
        problem.mu,
        problem.n_total(),
        problem.dim(),
        cfg.machines,
        cfg.broadcast.name()
    )
    .unwrap();
    writeln!(out, "{CSV_HEADER}").unwrap();
    for r in &record.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:e}",
            record.algo.name(),
            record.seed,
            r.stage,
            r.rounds,
            r.vectors,
            r.runtime,
            r.gap
        )
        .unwrap();
    }
    out
}

pub fn csv_name(algo: Algorithm, seed: u64) -> String {
    format!("{}_seed{}.csv", algo.name(), seed)
}

/// Gnuplot script drawing `log10(gap)` against rounds and parallel runtime.
pub fn plot_script(files: &[(String, String)]) -> String {
    let mut out = String::new();
    out.push_str("set datafile separator \",\"\nset terminal pngcairo size 1200,480\nset output \"gap.png\"\n");
    out.push_str("set multiplot layout 1,2\nset ylabel \"log10(gap)\"\nset key top right\n");
    for (col, label) in [(4, "rounds of communication"), (6, "parallel runtime (gradient evaluations)")] {
        writeln!(out, "set xlabel \"{label}\"").unwrap();
        let curves: Vec<String> = files
            .iter()
            .map(|(file, title)| format!("\"{file}\" every ::1 using {col}:(log10($7)) with linespoints title \"{title}\""))
            .collect();
        writeln!(out, "plot {}", curves.join(", \\\n     ")).unwrap();
    }
    out.push_str("unset multiplot\n");
    out
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub csv_files: Vec<PathBuf>,
    pub plot: PathBuf,
    pub records: Vec<RunRecord>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let problem = build_problem(cfg)?;
    info!(
        "problem: N={} d={} L={} mu={} f*={}",
        problem.n_total(),
        problem.dim(),
        problem.l,
        problem.mu,
        problem.f_star
    );
    let jobs: Vec<(Algorithm, u64)> = cfg
        .algorithms
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(a, s)| run_single(cfg, &problem, a, s))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let mut csv_files = Vec::new();
    let mut plot_entries = Vec::new();
    for rec in &records {
        let name = csv_name(rec.algo, rec.seed);
        let path = cfg.output.join(&name);
        write(&path, &csv_text(cfg, &problem, rec))?;
        csv_files.push(path);
        plot_entries.push((name, format!("{} seed {}", rec.algo.name(), rec.seed)));
    }
    let plot = cfg.output.join("plot.gp");
    write(&plot, &plot_script(&plot_entries))?;
    Ok(ExperimentReport {
        csv_files,
        plot,
        records,
    })
}
