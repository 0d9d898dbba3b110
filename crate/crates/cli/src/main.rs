use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use distsvrg::alloc::{allocate, expected_extra_comm_bound, CapacityConfig};
use distsvrg::error::{Error, Result};
use distsvrg::io::{run_experiment, synth_logistic, synth_ridge, write_libsvm, ExperimentConfig};
use distsvrg::lowerbound::{run_probe, HardInstance, HardParams, ProbeAlgorithm};
use distsvrg::rng::{stream, StreamRole};

#[derive(Parser)]
#[command(name = "distsvrg", version, about = "Distributed SVRG simulator with communication accounting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition functions and draw the sample multi-sets.
    Allocate(AllocateArgs),
    /// Run an experiment and write CSV checkpoints and a plot script.
    Run(Box<RunArgs>),
    /// Track coordinate support of runs on an adversarially split hard instance.
    LowerboundProbe(ProbeArgs),
    /// Generate a synthetic dataset in LIBSVM format.
    Synth(SynthArgs),
}

#[derive(Args)]
struct AllocateArgs {
    /// Number of functions N.
    #[arg(long)]
    functions: usize,
    #[arg(long)]
    machines: usize,
    /// Number of i.i.d. samples Q.
    #[arg(long)]
    samples: usize,
    /// Per-machine capacity C; defaults to the shard size plus ⌈Q/m⌉.
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the plan here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` assignments applied after the file and flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the resolved config and exit.
    #[arg(long)]
    dump_config: bool,
    /// Allow step sizes beyond the convergence guarantee and use the practical presets.
    #[arg(long)]
    practical: bool,
    /// Use each machine's shard as its sample set (breaks unbiasedness).
    #[arg(long)]
    shard_reuse: bool,
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    n_points: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    data_path: Option<String>,
    #[arg(long)]
    hard_k: Option<String>,
    #[arg(long)]
    hard_u: Option<String>,
    #[arg(long)]
    hard_kappa_prime: Option<String>,
    #[arg(long)]
    hard_l: Option<String>,
    #[arg(long)]
    hard_blocks: Option<String>,
    #[arg(long)]
    hard_copies: Option<String>,
    #[arg(long)]
    loss: Option<String>,
    /// `n^-0.5`, `n^-0.75`, `n^-1` or a number.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    rff_dim: Option<String>,
    #[arg(long)]
    rff_bandwidth: Option<String>,
    #[arg(long)]
    machines: Option<String>,
    #[arg(long)]
    capacity: Option<String>,
    /// Comma-separated: dsvrg, dasvrg, accel_grad, svrg_oracle.
    #[arg(long)]
    algorithms: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    inner_steps: Option<String>,
    #[arg(long)]
    stages: Option<String>,
    #[arg(long)]
    outer: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    agd_iterations: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    target_gap: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    data_seed: Option<String>,
    #[arg(long)]
    checkpoint_every: Option<String>,
    #[arg(long)]
    output: Option<String>,
    /// `per-receiver` or `single`.
    #[arg(long)]
    broadcast: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let fields: [(&'static str, &Option<String>); 31] = [
            ("source", &self.source),
            ("n_points", &self.n_points),
            ("dim", &self.dim),
            ("kappa", &self.kappa),
            ("data_path", &self.data_path),
            ("hard_k", &self.hard_k),
            ("hard_u", &self.hard_u),
            ("hard_kappa_prime", &self.hard_kappa_prime),
            ("hard_l", &self.hard_l),
            ("hard_blocks", &self.hard_blocks),
            ("hard_copies", &self.hard_copies),
            ("loss", &self.loss),
            ("lambda", &self.lambda),
            ("rff_dim", &self.rff_dim),
            ("rff_bandwidth", &self.rff_bandwidth),
            ("machines", &self.machines),
            ("capacity", &self.capacity),
            ("algorithms", &self.algorithms),
            ("eta", &self.eta),
            ("inner_steps", &self.inner_steps),
            ("stages", &self.stages),
            ("outer", &self.outer),
            ("sigma", &self.sigma),
            ("agd_iterations", &self.agd_iterations),
            ("epsilon", &self.epsilon),
            ("target_gap", &self.target_gap),
            ("seeds", &self.seeds),
            ("data_seed", &self.data_seed),
            ("checkpoint_every", &self.checkpoint_every),
            ("output", &self.output),
            ("broadcast", &self.broadcast),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Chain repetitions; by default the smallest with h^(2b) ≤ 1e-16.
    #[arg(long)]
    u: Option<usize>,
    #[arg(long, default_value_t = 100.0)]
    kappa_prime: f64,
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    #[arg(long, default_value_t = 2)]
    copies: usize,
    #[arg(long, default_value_t = 50)]
    rounds: usize,
    /// `accel_grad` or `dsvrg`.
    #[arg(long, default_value = "accel_grad")]
    algo: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the instance parameters to this file.
    #[arg(long)]
    export: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// `ridge` or `logistic`.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n_points: usize,
    #[arg(long)]
    dim: usize,
    /// Target condition number (ridge).
    #[arg(long, default_value_t = 100.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn write_out(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        }),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
    }
}

fn cmd_allocate(a: &AllocateArgs) -> Result<()> {
    let cap = match a.capacity {
        Some(c) => CapacityConfig::new(c, a.functions, a.machines)?,
        None => CapacityConfig::with_spare(a.samples.div_ceil(a.machines.max(1)).max(1), a.functions, a.machines)?,
    };
    let plan = allocate(a.functions, a.machines, a.samples, &cap, a.seed)?;
    eprintln!(
        "capacity={} mismatched={} extra_transfers={} shipped={} bound_q2_over_n={}",
        cap.capacity,
        plan.mismatched,
        plan.extra_transfers,
        plan.shipped,
        expected_extra_comm_bound(a.samples, a.functions)
    );
    write_out(a.out.as_ref(), &plan.to_text())
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::read(p)?,
        None => ExperimentConfig::default(),
    };
    for (k, v) in a.overrides() {
        cfg.set(k, v)?;
    }
    if a.practical {
        cfg.practical = true;
    }
    if a.shard_reuse {
        cfg.shard_reuse = true;
    }
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config {
                field: "set".into(),
                message: format!("expected KEY=VALUE, got `{kv}`"),
            })?;
        cfg.set(k.trim(), v)?;
    }
    if a.dump_config {
        return write_out(None, &cfg.to_text());
    }
    cfg.validate()?;
    if cfg.practical {
        warn!("practical mode: step sizes may exceed the range covered by the convergence guarantee");
    }
    if cfg.shard_reuse {
        warn!("shard reuse: samples are not independent of the partition; estimates are biased");
    }
    let report = run_experiment(&cfg)?;
    for f in &report.csv_files {
        println!("{}", f.display());
    }
    println!("{}", report.plot.display());
    Ok(())
}

fn cmd_probe(a: &ProbeArgs) -> Result<()> {
    let params = match a.u {
        Some(u) => HardParams::new(a.k, u, a.kappa_prime, a.l, a.blocks, a.copies)?,
        None => HardParams::with_default_u(a.k, a.kappa_prime, a.l, a.blocks, a.copies)?,
    };
    if let Some(path) = &a.export {
        write_out(Some(path), &params.to_text())?;
    }
    let algo = ProbeAlgorithm::parse(&a.algo).ok_or_else(|| Error::Config {
        field: "algo".into(),
        message: format!("unknown probe algorithm `{}`", a.algo),
    })?;
    let inst = HardInstance::new(params);
    let rep = run_probe(&inst, algo, a.rounds, a.seed)?;
    let mut out = String::from("round,support,limit\n");
    for (&r, &idx) in rep.probe.by_round() {
        out.push_str(&format!("{r},{idx},{}\n", r as usize * params.k));
    }
    out.push_str("rounds,gap,bound\n");
    for (r, gap, bound) in &rep.checkpoints {
        out.push_str(&format!("{r},{gap:e},{bound:e}\n"));
    }
    out.push_str(&format!(
        "# b={} h={} max_growth={} violations={} bound_holds={}\n",
        params.b(),
        params.h(),
        rep.max_growth,
        rep.violations.len(),
        rep.bound_holds()
    ));
    write_out(None, &out)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut rng = stream(a.seed, StreamRole::Data);
    let data = match a.kind.as_str() {
        "ridge" => synth_ridge(a.n_points, a.dim, a.kappa, &mut rng)?.0.data().clone(),
        "logistic" => synth_logistic(a.n_points, a.dim, 0.0, &mut rng)?.data().clone(),
        other => {
            return Err(Error::Config {
                field: "kind".into(),
                message: format!("unknown kind `{other}`"),
            })
        }
    };
    write_libsvm(&data, &a.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Allocate(a) => cmd_allocate(a),
        Command::Run(a) => cmd_run(a),
        Command::LowerboundProbe(a) => cmd_probe(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
