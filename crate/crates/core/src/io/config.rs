//! Flat `key = value` experiment descriptions with `#` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cluster::BroadcastCost;
use crate::error::{Error, Result};
use crate::lowerbound::HardParams;
use crate::objective::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Ridge,
    Logistic,
    Libsvm,
    Hard,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::Ridge => "ridge",
            SourceKind::Logistic => "logistic",
            SourceKind::Libsvm => "libsvm",
            SourceKind::Hard => "hard",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [SourceKind::Ridge, SourceKind::Logistic, SourceKind::Libsvm, SourceKind::Hard]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// Regularization: `N^{−1/2}`, `N^{−3/4}`, `N^{−1}` or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    InvSqrt,
    InvThreeQuarter,
    Inv,
    Explicit(f64),
}

impl LambdaRule {
    pub fn value(self, n_total: usize) -> f64 {
        let n = n_total as f64;
        match self {
            LambdaRule::InvSqrt => 1.0 / n.sqrt(),
            LambdaRule::InvThreeQuarter => n.powf(-0.75),
            LambdaRule::Inv => 1.0 / n,
            LambdaRule::Explicit(v) => v,
        }
    }

    pub fn name(self) -> String {
        match self {
            LambdaRule::InvSqrt => "n^-0.5".into(),
            LambdaRule::InvThreeQuarter => "n^-0.75".into(),
            LambdaRule::Inv => "n^-1".into(),
            LambdaRule::Explicit(v) => format!("{v}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "n^-0.5" => Some(LambdaRule::InvSqrt),
            "n^-0.75" => Some(LambdaRule::InvThreeQuarter),
            "n^-1" => Some(LambdaRule::Inv),
            _ => s.parse().ok().filter(|v: &f64| *v >= 0.0).map(LambdaRule::Explicit),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Algorithm {
    Dsvrg,
    Dasvrg,
    AccelGrad,
    SvrgOracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dsvrg => "dsvrg",
            Algorithm::Dasvrg => "dasvrg",
            Algorithm::AccelGrad => "accel_grad",
            Algorithm::SvrgOracle => "svrg_oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Algorithm::Dsvrg, Algorithm::Dasvrg, Algorithm::AccelGrad, Algorithm::SvrgOracle]
            .into_iter()
            .find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: SourceKind,
    pub n_points: usize,
    pub dim: usize,
    /// Target condition number of a synthetic ridge instance.
    pub kappa: f64,
    pub data_path: Option<PathBuf>,
    pub hard_k: usize,
    pub hard_u: usize,
    pub hard_kappa_prime: f64,
    pub hard_l: f64,
    pub hard_blocks: usize,
    pub hard_copies: usize,
    pub loss: Option<LossKind>,
    pub lambda: Option<LambdaRule>,
    pub rff_dim: Option<usize>,
    pub rff_bandwidth: Option<f64>,
    pub machines: usize,
    pub capacity: Option<usize>,
    pub algorithms: Vec<Algorithm>,
    pub eta: Option<f64>,
    pub inner_steps: Option<usize>,
    pub stages: Option<usize>,
    pub outer: Option<usize>,
    pub sigma: Option<f64>,
    pub agd_iterations: Option<usize>,
    pub epsilon: f64,
    pub target_gap: Option<f64>,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub checkpoint_every: usize,
    pub output: PathBuf,
    pub practical: bool,
    pub shard_reuse: bool,
    pub broadcast: BroadcastCost,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: SourceKind::Ridge,
            n_points: 2000,
            dim: 20,
            kappa: 100.0,
            data_path: None,
            hard_k: 2,
            hard_u: 50,
            hard_kappa_prime: 100.0,
            hard_l: 1.0,
            hard_blocks: 2,
            hard_copies: 2,
            loss: None,
            lambda: None,
            rff_dim: None,
            rff_bandwidth: None,
            machines: 4,
            capacity: None,
            algorithms: vec![Algorithm::Dsvrg],
            eta: None,
            inner_steps: None,
            stages: None,
            outer: None,
            sigma: None,
            agd_iterations: None,
            epsilon: 1e-6,
            target_gap: None,
            seeds: vec![1],
            data_seed: 0,
            checkpoint_every: 1,
            output: PathBuf::from("out"),
            practical: false,
            shard_reuse: false,
            broadcast: BroadcastCost::PerReceiver,
        }
    }
}

/// Every recognized key, in serialization order.
pub const CONFIG_KEYS: &[&str] = &[
    "source",
    "n_points",
    "dim",
    "kappa",
    "data_path",
    "hard_k",
    "hard_u",
    "hard_kappa_prime",
    "hard_l",
    "hard_blocks",
    "hard_copies",
    "loss",
    "lambda",
    "rff_dim",
    "rff_bandwidth",
    "machines",
    "capacity",
    "algorithms",
    "eta",
    "inner_steps",
    "stages",
    "outer",
    "sigma",
    "agd_iterations",
    "epsilon",
    "target_gap",
    "seeds",
    "data_seed",
    "checkpoint_every",
    "output",
    "practical",
    "shard_reuse",
    "broadcast",
];

fn num<T: FromStr>(key: &'static str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn positive(key: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::config(key, format!("must be positive, got {value}")))
    }
}

fn boolean(key: &'static str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{value}`"))),
    }
}

fn list<T>(key: &'static str, value: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).ok_or_else(|| Error::config(key, format!("unknown entry `{s}`"))))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(key, "list is empty"));
    }
    Ok(items)
}

fn opt_f64(v: Option<f64>) -> Option<String> {
    v.map(|x| format!("{x}"))
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "source" => {
                self.source = SourceKind::parse(value).ok_or_else(|| Error::config("source", format!("unknown source `{value}`")))?
            }
            "n_points" => self.n_points = num("n_points", value)?,
            "dim" => self.dim = num("dim", value)?,
            "kappa" => self.kappa = positive("kappa", num("kappa", value)?)?,
            "data_path" => self.data_path = Some(PathBuf::from(value)),
            "hard_k" => self.hard_k = num("hard_k", value)?,
            "hard_u" => self.hard_u = num("hard_u", value)?,
            "hard_kappa_prime" => self.hard_kappa_prime = num("hard_kappa_prime", value)?,
            "hard_l" => self.hard_l = positive("hard_l", num("hard_l", value)?)?,
            "hard_blocks" => self.hard_blocks = num("hard_blocks", value)?,
            "hard_copies" => self.hard_copies = num("hard_copies", value)?,
            "loss" => {
                self.loss = Some(LossKind::parse(value).ok_or_else(|| Error::config("loss", format!("unknown loss `{value}`")))?)
            }
            "lambda" => {
                self.lambda = Some(LambdaRule::parse(value).ok_or_else(|| Error::config("lambda", format!("unknown rule `{value}`")))?)
            }
            "rff_dim" => self.rff_dim = Some(num("rff_dim", value)?),
            "rff_bandwidth" => self.rff_bandwidth = Some(positive("rff_bandwidth", num("rff_bandwidth", value)?)?),
            "machines" => self.machines = num("machines", value)?,
            "capacity" => self.capacity = Some(num("capacity", value)?),
            "algorithms" => self.algorithms = list("algorithms", value, Algorithm::parse)?,
            "eta" => self.eta = Some(positive("eta", num("eta", value)?)?),
            "inner_steps" => self.inner_steps = Some(num("inner_steps", value)?),
            "stages" => self.stages = Some(num("stages", value)?),
            "outer" => self.outer = Some(num("outer", value)?),
            "sigma" => {
                let s: f64 = num("sigma", value)?;
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(Error::config("sigma", format!("must be non-negative, got {s}")));
                }
                self.sigma = Some(s)
            }
            "agd_iterations" => self.agd_iterations = Some(num("agd_iterations", value)?),
            "epsilon" => self.epsilon = positive("epsilon", num("epsilon", value)?)?,
            "target_gap" => self.target_gap = Some(positive("target_gap", num("target_gap", value)?)?),
            "seeds" => self.seeds = list("seeds", value, |s| s.parse().ok())?,
            "data_seed" => self.data_seed = num("data_seed", value)?,
            "checkpoint_every" => {
                self.checkpoint_every = num("checkpoint_every", value)?;
                if self.checkpoint_every == 0 {
                    return Err(Error::config("checkpoint_every", "must be at least 1"));
                }
            }
            "output" => self.output = PathBuf::from(value),
            "practical" => self.practical = boolean("practical", value)?,
            "shard_reuse" => self.shard_reuse = boolean("shard_reuse", value)?,
            "broadcast" => {
                self.broadcast =
                    BroadcastCost::parse(value).ok_or_else(|| Error::config("broadcast", format!("unknown convention `{value}`")))?
            }
            _ => return Err(Error::config("key", format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<String> {
        match key {
            "source" => Some(self.source.name().into()),
            "n_points" => Some(self.n_points.to_string()),
            "dim" => Some(self.dim.to_string()),
            "kappa" => Some(format!("{}", self.kappa)),
            "data_path" => self.data_path.as_ref().map(|p| p.display().to_string()),
            "hard_k" => Some(self.hard_k.to_string()),
            "hard_u" => Some(self.hard_u.to_string()),
            "hard_kappa_prime" => Some(format!("{}", self.hard_kappa_prime)),
            "hard_l" => Some(format!("{}", self.hard_l)),
            "hard_blocks" => Some(self.hard_blocks.to_string()),
            "hard_copies" => Some(self.hard_copies.to_string()),
            "loss" => self.loss.map(|l| l.name().into()),
            "lambda" => self.lambda.map(LambdaRule::name),
            "rff_dim" => self.rff_dim.map(|v| v.to_string()),
            "rff_bandwidth" => opt_f64(self.rff_bandwidth),
            "machines" => Some(self.machines.to_string()),
            "capacity" => self.capacity.map(|v| v.to_string()),
            "algorithms" => Some(self.algorithms.iter().map(|a| a.name()).collect::<Vec<_>>().join(",")),
            "eta" => opt_f64(self.eta),
            "inner_steps" => self.inner_steps.map(|v| v.to_string()),
            "stages" => self.stages.map(|v| v.to_string()),
            "outer" => self.outer.map(|v| v.to_string()),
            "sigma" => opt_f64(self.sigma),
            "agd_iterations" => self.agd_iterations.map(|v| v.to_string()),
            "epsilon" => Some(format!("{}", self.epsilon)),
            "target_gap" => opt_f64(self.target_gap),
            "seeds" => Some(self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")),
            "data_seed" => Some(self.data_seed.to_string()),
            "checkpoint_every" => Some(self.checkpoint_every.to_string()),
            "output" => Some(self.output.display().to_string()),
            "practical" => Some(self.practical.to_string()),
            "shard_reuse" => Some(self.shard_reuse.to_string()),
            "broadcast" => Some(self.broadcast.name().into()),
            _ => None,
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: ln + 1,
                message: format!("expected key = value, got `{line}`"),
            })?;
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Canonical text form; unset optional fields are omitted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            if let Some(v) = self.get(key) {
                writeln!(out, "{key} = {v}").unwrap();
            }
        }
        out
    }

    pub fn hard_params(&self) -> Result<HardParams> {
        HardParams::new(
            self.hard_k,
            self.hard_u,
            self.hard_kappa_prime,
            self.hard_l,
            self.hard_blocks,
            self.hard_copies,
        )
    }

    /// Field checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.machines == 0 {
            return Err(Error::config("machines", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "list is empty"));
        }
        match self.source {
            SourceKind::Libsvm if self.data_path.is_none() => {
                return Err(Error::config("data_path", "required for source = libsvm"))
            }
            SourceKind::Ridge | SourceKind::Logistic if self.n_points == 0 || self.dim == 0 => {
                return Err(Error::config("n_points", "synthetic sources need n_points and dim"))
            }
            SourceKind::Hard => {
                self.hard_params().map_err(|e| Error::config("hard_k", e.to_string()))?;
            }
            _ => {}
        }
        if self.source == SourceKind::Ridge && self.lambda.is_none() && self.kappa <= 1.0 {
            return Err(Error::config("kappa", "must exceed 1"));
        }
        if self.rff_dim.is_some() && self.rff_bandwidth.is_none() {
            return Err(Error::config("rff_bandwidth", "required when rff_dim is set"));
        }
        if self.rff_dim.is_some() && self.source == SourceKind::Hard {
            return Err(Error::config("rff_dim", "not applicable to hard instances"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_presets() {
        assert!((LambdaRule::InvSqrt.value(10_000) - 0.01).abs() < 1e-15);
        assert!((LambdaRule::Inv.value(1000) - 1e-3).abs() < 1e-18);
        assert_eq!(LambdaRule::parse("n^-0.75"), Some(LambdaRule::InvThreeQuarter));
        assert_eq!(LambdaRule::parse("0.5"), Some(LambdaRule::Explicit(0.5)));
        assert_eq!(LambdaRule::parse("-1"), None);
    }

    #[test]
    fn parse_with_comments() {
        let cfg = ExperimentConfig::parse("# header\nmachines = 8  # m\nalgorithms = dsvrg, dasvrg\n\nseeds=1,2,3\n", "mem").unwrap();
        assert_eq!(cfg.machines, 8);
        assert_eq!(cfg.algorithms, vec![Algorithm::Dsvrg, Algorithm::Dasvrg]);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
    }

    #[test]
    fn errors_name_the_field() {
        for (text, field) in [("machines = x", "machines"), ("algorithms = sgd", "algorithms"), ("bogus = 1", "key"), ("eta = -1", "eta")] {
            match ExperimentConfig::parse(text, "mem") {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(ExperimentConfig::parse("no equals sign", "mem"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn round_trip_is_fixed_point() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("lambda", "n^-0.75").unwrap();
        cfg.set("eta", "0.125").unwrap();
        cfg.set("rff_dim", "100").unwrap();
        cfg.set("rff_bandwidth", "1.5").unwrap();
        let text = cfg.to_text();
        let back = ExperimentConfig::parse(&text, "mem").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.rff_dim = Some(10);
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "rff_bandwidth"));
        let mut cfg = ExperimentConfig::default();
        cfg.source = SourceKind::Libsvm;
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "data_path"));
    }
}
