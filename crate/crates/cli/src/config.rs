//! Flat `key = value` run configuration.
//!
//! Values resolve in three layers: the defaults of the run preset, then the
//! file, then command-line overrides. Unknown keys are rejected and every
//! field is validated before any compute. The canonical rendering lists
//! every resolved value that can change a result; its SHA-256 is the config
//! hash embedded in all artifacts.

use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use fbsde_core::evaluation::VerifyConfig;
use fbsde_core::networks::{Activation, MlpConfig, NetPreset, NetworkConfig, MscaleConfig};
use fbsde_core::problems::{Bsb, BsbParams, OscBsb, OscBsbParams, Problem, ProblemPreset};
use fbsde_core::schemes::{DeepBsdeConfig, ModelConfig, Scheme3Sigma, SchemeConfig, SchemeKind};
use fbsde_core::simulate::TimeGrid;
use fbsde_core::training::{Stage, TrainConfig, TrainSchedule};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` is set twice")]
    Duplicate(String),
    #[error("`{key}`: {message}")]
    Field { key: &'static str, message: String },
}

fn field(key: &'static str, message: impl Display) -> ConfigError {
    ConfigError::Field {
        key,
        message: message.to_string(),
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: [(&str, &str); 32] = [
    ("preset", "run preset: desk-bsb | desk-osc | paper-bsb | paper-osc"),
    ("problem", "bsb | bsb-osc"),
    ("problem.dim", "spatial dimension d"),
    ("problem.r", "interest rate r"),
    ("problem.sigma", "volatility"),
    ("problem.horizon", "terminal time T"),
    ("problem.alpha", "oscillation amplitude (bsb-osc only)"),
    ("problem.beta", "oscillation wavenumber in x (bsb-osc only)"),
    ("problem.gamma", "oscillation frequency in t (bsb-osc only)"),
    ("scheme", "deep-bsde | s1 | s2 | s3"),
    ("scheme3.sigma", "diffusion for the second Scheme 3 branch: as-printed | own-branch"),
    ("net", "paper-fc | paper-ms4 | desk-fc | desk-ms4"),
    ("net.layers", "hidden layers, overriding the net preset"),
    ("net.width", "hidden width, overriding the net preset"),
    ("net.activation", "sine | tanh, overriding the net preset"),
    ("steps", "time steps N"),
    ("schedule", "paper | desk | lr:steps,lr:steps,..."),
    ("batch", "paths per training step M"),
    ("beta1", "terminal value penalty weight"),
    ("beta2", "terminal gradient penalty weight"),
    ("seed", "master seed"),
    ("chunk_paths", "paths per parallel job, 0 for whole batches"),
    ("threads", "worker threads, 0 for all cores"),
    ("verify.paths", "verification paths"),
    ("verify.fine_steps", "verification grid steps"),
    ("radius", "relative half-width of perturbed starts, 0 for the anchor"),
    ("n_list", "ascending step counts for convergence"),
    ("extrapolate", "true | false: add Richardson columns to convergence"),
    ("dump.paths", "trajectories written by paths-dump"),
    ("compare.plain", "plain net preset for mscale-compare"),
    ("compare.mscale", "multiscale net preset for mscale-compare"),
    ("out_dir", "output directory"),
];

/// Keys that never change a numeric result and stay out of the hash.
const UNHASHED: [&str; 2] = ["threads", "out_dir"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunPreset {
    DeskBsb,
    DeskOsc,
    PaperBsb,
    PaperOsc,
}

impl RunPreset {
    pub const ALL: [RunPreset; 4] = [
        RunPreset::DeskBsb,
        RunPreset::DeskOsc,
        RunPreset::PaperBsb,
        RunPreset::PaperOsc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunPreset::DeskBsb => "desk-bsb",
            RunPreset::DeskOsc => "desk-osc",
            RunPreset::PaperBsb => "paper-bsb",
            RunPreset::PaperOsc => "paper-osc",
        }
    }

    fn defaults(self) -> Vec<(&'static str, &'static str)> {
        let desk = matches!(self, RunPreset::DeskBsb | RunPreset::DeskOsc);
        let osc = matches!(self, RunPreset::DeskOsc | RunPreset::PaperOsc);
        let mut v = vec![
            ("problem", if osc { "bsb-osc" } else { "bsb" }),
            ("problem.dim", if desk { "10" } else { "100" }),
            ("scheme", "s2"),
            ("scheme3.sigma", "as-printed"),
            ("net", if desk { "desk-fc" } else { "paper-fc" }),
            ("steps", if desk { "12" } else { "48" }),
            ("schedule", if desk { "desk" } else { "paper" }),
            ("batch", "100"),
            ("beta1", "0.02"),
            ("beta2", "0.02"),
            ("seed", "0"),
            ("chunk_paths", "0"),
            ("threads", "0"),
            ("verify.paths", "1000"),
            ("verify.fine_steps", "1000"),
            ("radius", "0"),
            ("n_list", if desk { "12,48" } else { "12,48,192" }),
            ("extrapolate", "true"),
            ("dump.paths", "8"),
            ("compare.plain", if desk { "desk-fc" } else { "paper-fc" }),
            ("compare.mscale", if desk { "desk-ms4" } else { "paper-ms4" }),
            ("out_dir", self.out_dir()),
        ];
        if self == RunPreset::DeskOsc {
            v.push(("problem.gamma", "8"));
        }
        v
    }

    fn out_dir(self) -> &'static str {
        match self {
            RunPreset::DeskBsb => "runs/desk-bsb",
            RunPreset::DeskOsc => "runs/desk-osc",
            RunPreset::PaperBsb => "runs/paper-bsb",
            RunPreset::PaperOsc => "runs/paper-osc",
        }
    }
}

impl FromStr for RunPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RunPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown run preset `{s}`"))
    }
}

/// A fully resolved and validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: RunPreset,
    pub problem: ProblemPreset,
    pub dim: usize,
    pub r: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub scheme: SchemeKind,
    pub scheme3_sigma: Scheme3Sigma,
    pub net: NetPreset,
    pub layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub steps: usize,
    pub schedule: Vec<Stage>,
    pub batch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub chunk_paths: usize,
    pub threads: usize,
    pub verify_paths: usize,
    pub verify_fine_steps: usize,
    pub radius: f64,
    pub n_list: Vec<usize>,
    pub extrapolate: bool,
    pub dump_paths: usize,
    pub compare_plain: NetPreset,
    pub compare_mscale: NetPreset,
    pub out_dir: PathBuf,
}

/// `key = value` pairs of a config text. `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(split_pair(line).ok_or(ConfigError::Syntax { line: i + 1 })?);
    }
    Ok(out)
}

/// `key=value` from the command line.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    split_pair(s).ok_or(ConfigError::Syntax { line: 0 })
}

fn split_pair(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    (!k.is_empty() && !v.is_empty()).then(|| (k.to_string(), v.to_string()))
}

fn known(key: &str) -> Result<(), ConfigError> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(ConfigError::UnknownKey(key.to_string()))
    }
}

struct Raw(BTreeMap<String, String>);

impl Raw {
    fn opt<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: Display,
    {
        self.0
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| field(key, e)))
            .transpose()
    }

    fn req<T: FromStr>(&self, key: &'static str) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        self.opt(key)?.ok_or_else(|| field(key, "missing"))
    }

    fn list<T: FromStr>(&self, key: &'static str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: Display,
    {
        let raw: String = self.req(key)?;
        raw.split(',')
            .map(|s| s.trim().parse::<T>().map_err(|e| field(key, e)))
            .collect()
    }
}

fn parse_schedule(s: &str) -> Result<Vec<Stage>, String> {
    match s {
        "paper" => Ok(TrainSchedule::full_scale().stages),
        "desk" => Ok(TrainSchedule::desk().stages),
        _ => s
            .split(',')
            .map(|part| {
                let (lr, steps) = part
                    .split_once(':')
                    .ok_or_else(|| format!("stage `{part}` is not lr:steps"))?;
                Ok(Stage {
                    lr: lr.trim().parse().map_err(|e| format!("{e}"))?,
                    steps: steps.trim().parse().map_err(|e| format!("{e}"))?,
                })
            })
            .collect(),
    }
}

impl RunConfig {
    /// Resolves a config text plus overrides.
    pub fn resolve(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut raw = BTreeMap::new();
        for (k, v) in parse_pairs(text)? {
            known(&k)?;
            if raw.insert(k.clone(), v).is_some() {
                return Err(ConfigError::Duplicate(k));
            }
        }
        for (k, v) in overrides {
            known(k)?;
            raw.insert(k.clone(), v.clone());
        }
        let preset: RunPreset = Raw(raw.clone()).opt("preset")?.unwrap_or(RunPreset::DeskBsb);
        raw.insert("preset".into(), preset.name().into());
        for (k, v) in preset.defaults() {
            raw.entry(k.into()).or_insert_with(|| v.into());
        }
        Self::from_raw(&Raw(raw))
    }

    fn from_raw(raw: &Raw) -> Result<Self, ConfigError> {
        let problem: ProblemPreset = raw.req("problem")?;
        let dim: usize = raw.req("problem.dim")?;
        let bsb = BsbParams::with_dim(dim);
        let osc = OscBsbParams::with_dim(dim);
        if problem == ProblemPreset::Bsb {
            for key in ["problem.alpha", "problem.beta", "problem.gamma"] {
                if raw.0.contains_key(key) {
                    return Err(field(key, "only applies to bsb-osc"));
                }
            }
        }
        let net: NetPreset = raw.req("net")?;
        let (default_layers, default_width, default_act) = preset_shape(net);
        let schedule_text: String = raw.req("schedule")?;
        let c = Self {
            preset: raw.req("preset")?,
            problem,
            dim,
            r: raw.opt("problem.r")?.unwrap_or(bsb.r),
            sigma: raw.opt("problem.sigma")?.unwrap_or(bsb.sigma),
            horizon: raw.opt("problem.horizon")?.unwrap_or(bsb.horizon),
            alpha: raw.opt("problem.alpha")?.unwrap_or(osc.alpha),
            beta: raw.opt("problem.beta")?.unwrap_or(osc.beta),
            gamma: raw.opt("problem.gamma")?.unwrap_or(osc.gamma),
            scheme: raw.req("scheme")?,
            scheme3_sigma: raw.req("scheme3.sigma")?,
            net,
            layers: raw.opt("net.layers")?.unwrap_or(default_layers),
            width: raw.opt("net.width")?.unwrap_or(default_width),
            activation: raw.opt("net.activation")?.unwrap_or(default_act),
            steps: raw.req("steps")?,
            schedule: parse_schedule(&schedule_text).map_err(|e| field("schedule", e))?,
            batch: raw.req("batch")?,
            beta1: raw.req("beta1")?,
            beta2: raw.req("beta2")?,
            seed: raw.req("seed")?,
            chunk_paths: raw.req("chunk_paths")?,
            threads: raw.req("threads")?,
            verify_paths: raw.req("verify.paths")?,
            verify_fine_steps: raw.req("verify.fine_steps")?,
            radius: raw.req("radius")?,
            n_list: raw.list("n_list")?,
            extrapolate: raw.req("extrapolate")?,
            dump_paths: raw.req("dump.paths")?,
            compare_plain: raw.req("compare.plain")?,
            compare_mscale: raw.req("compare.mscale")?,
            out_dir: raw.req::<String>("out_dir")?.into(),
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(field(key, "must be finite and >= 0"));
            }
        }
        self.build_problem()?;
        self.model_config()?;
        self.train_config()?;
        if self.batch == 0 {
            return Err(field("batch", "must be positive"));
        }
        if self.verify_paths == 0 {
            return Err(field("verify.paths", "must be positive"));
        }
        TimeGrid::new(self.verify_fine_steps, self.horizon).map_err(|e| field("verify.fine_steps", e))?;
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(field("radius", "must be finite and >= 0"));
        }
        self.check_n_list()?;
        for (key, p, multiscale) in [
            ("compare.plain", self.compare_plain, false),
            ("compare.mscale", self.compare_mscale, true),
        ] {
            if matches!(p.config(1), NetworkConfig::Mscale(_)) != multiscale {
                let want = if multiscale { "a multiscale" } else { "a plain" };
                return Err(field(key, format!("must name {want} net preset")));
            }
        }
        Ok(())
    }

    fn check_n_list(&self) -> Result<(), ConfigError> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(field("n_list", "needs positive step counts"));
        }
        for w in self.n_list.windows(2) {
            if w[1] <= w[0] {
                return Err(field("n_list", "must be strictly ascending"));
            }
            if self.extrapolate && w[1] != 4 * w[0] {
                return Err(field(
                    "n_list",
                    format!("extrapolation needs each entry 4x the previous, got {} after {}", w[1], w[0]),
                ));
            }
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<Problem, ConfigError> {
        let base = BsbParams {
            r: self.r,
            sigma: self.sigma,
            dim: self.dim,
            horizon: self.horizon,
            x0: fbsde_core::problems::alternating_x0(self.dim),
        };
        let p = match self.problem {
            ProblemPreset::Bsb => Bsb::new(base).map(Problem::Bsb),
            ProblemPreset::BsbOsc => OscBsb::new(OscBsbParams {
                base,
                alpha: self.alpha,
                beta: self.beta,
                gamma: self.gamma,
            })
            .map(Problem::OscBsb),
        };
        p.map_err(|e| field("problem", e))
    }

    /// Network of preset `net` with this run's shape overrides.
    pub fn network_config(&self) -> NetworkConfig {
        self.shaped(self.net, self.layers, self.width, self.activation)
    }

    /// Network of preset `p` as the preset defines it.
    pub fn preset_network(&self, p: NetPreset) -> NetworkConfig {
        let (layers, width, act) = preset_shape(p);
        self.shaped(p, layers, width, act)
    }

    fn shaped(&self, p: NetPreset, layers: usize, width: usize, act: Activation) -> NetworkConfig {
        let sub = MlpConfig {
            hidden_layers: layers,
            hidden_width: width,
            activation: act,
            ..MlpConfig::scalar_field(self.dim, layers, width)
        };
        match p.config(self.dim) {
            NetworkConfig::Mlp(_) => NetworkConfig::Mlp(sub),
            NetworkConfig::Mscale(m) => NetworkConfig::Mscale(MscaleConfig { subnet: sub, ..m }),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig, ConfigError> {
        let net = self.network_config();
        net.validate().map_err(|e| field("net", e))?;
        if self.scheme != SchemeKind::DeepBsde {
            return Ok(ModelConfig::Field(net));
        }
        if matches!(net, NetworkConfig::Mscale(_)) {
            return Err(field("net", "deep-bsde needs a plain net preset"));
        }
        let c = DeepBsdeConfig {
            dim: self.dim,
            n_steps: self.steps,
            hidden_layers: self.layers,
            hidden_width: self.width,
            activation: self.activation,
        };
        c.validate().map_err(|e| field("net", e))?;
        Ok(ModelConfig::DeepBsde(c))
    }

    /// Training setup at `steps` time steps.
    pub fn train_config_at(&self, steps: usize) -> Result<TrainConfig, ConfigError> {
        let grid = TimeGrid::new(steps, self.horizon).map_err(|e| field("steps", e))?;
        let scheme = SchemeConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            scheme3_sigma: self.scheme3_sigma,
            ..SchemeConfig::new(self.scheme, grid, self.batch)
        };
        scheme.validate().map_err(|e| field("scheme", e))?;
        let schedule = TrainSchedule::new(self.schedule.clone()).map_err(|e| field("schedule", e))?;
        Ok(TrainConfig {
            chunk_paths: self.chunk_paths,
            ..TrainConfig::new(scheme, schedule, self.seed)
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        self.train_config_at(self.steps)
    }

    /// Same run at another step count, for convergence studies.
    pub fn with_steps(&self, steps: usize) -> Self {
        let mut c = self.clone();
        c.steps = steps;
        c
    }

    pub fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            n_paths: self.verify_paths,
            fine_steps: self.verify_fine_steps,
            seed: self.seed,
            chunk_paths: self.chunk_paths,
        }
    }

    /// Resolved values in key order; unhashed keys only when `all`.
    fn render(&self, all: bool) -> String {
        let list = |v: &[usize]| v.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",");
        let stages = self
            .schedule
            .iter()
            .map(|s| format!("{:e}:{}", s.lr, s.steps))
            .collect::<Vec<_>>()
            .join(",");
        let osc = self.problem == ProblemPreset::BsbOsc;
        let mut entries: Vec<(&str, String)> = vec![
            ("preset", self.preset.name().into()),
            ("problem", self.problem.name().into()),
            ("problem.dim", self.dim.to_string()),
            ("problem.r", format!("{:e}", self.r)),
            ("problem.sigma", format!("{:e}", self.sigma)),
            ("problem.horizon", format!("{:e}", self.horizon)),
        ];
        if osc {
            entries.push(("problem.alpha", format!("{:e}", self.alpha)));
            entries.push(("problem.beta", format!("{:e}", self.beta)));
            entries.push(("problem.gamma", format!("{:e}", self.gamma)));
        }
        entries.extend([
            ("scheme", self.scheme.name().into()),
            ("scheme3.sigma", self.scheme3_sigma.name().into()),
            ("net", self.net.name().into()),
            ("net.layers", self.layers.to_string()),
            ("net.width", self.width.to_string()),
            ("net.activation", self.activation.name().into()),
            ("steps", self.steps.to_string()),
            ("schedule", stages),
            ("batch", self.batch.to_string()),
            ("beta1", format!("{:e}", self.beta1)),
            ("beta2", format!("{:e}", self.beta2)),
            ("seed", self.seed.to_string()),
            ("chunk_paths", self.chunk_paths.to_string()),
            ("threads", self.threads.to_string()),
            ("verify.paths", self.verify_paths.to_string()),
            ("verify.fine_steps", self.verify_fine_steps.to_string()),
            ("radius", format!("{:e}", self.radius)),
            ("n_list", list(&self.n_list)),
            ("extrapolate", self.extrapolate.to_string()),
            ("dump.paths", self.dump_paths.to_string()),
            ("compare.plain", self.compare_plain.name().into()),
            ("compare.mscale", self.compare_mscale.name().into()),
            ("out_dir", self.out_dir.display().to_string()),
        ]);
        let mut s = String::new();
        for (k, v) in entries {
            if all || !UNHASHED.contains(&k) {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    /// Every resolved value, re-readable by [`RunConfig::resolve`].
    pub fn to_text(&self) -> String {
        self.render(true)
    }

    /// Result-relevant values only.
    pub fn canonical(&self) -> String {
        self.render(false)
    }

    /// Hex SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

fn preset_shape(p: NetPreset) -> (usize, usize, Activation) {
    let c = match p.config(1) {
        NetworkConfig::Mlp(c) => c,
        NetworkConfig::Mscale(m) => m.subnet,
    };
    (c.hidden_layers, c.hidden_width, c.activation)
}
