//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//! `FBSDECKP`, `u32` version, `u32` header length, UTF-8 header of
//! `key = value` lines, `u32` tensor count, per tensor `u64` rows, `u64`
//! cols and row-major `f64` data, then a `u8` Adam flag followed, when set,
//! by `β₁, β₂, ε` as `f64`, the `u64` step and the first and second moments
//! in tensor order. The header carries the architecture hash that loading
//! checks against the expected model.

use std::io::{self, Read, Write};

use fbsde_core::networks::NetworkConfig;
use fbsde_core::schemes::{Model, ModelConfig};
use fbsde_core::training::{AdamConfig, AdamState};
use fbsde_core::Matrix;
use sha2::{Digest, Sha256};

const MAGIC: &[u8; 8] = b"FBSDECKP";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a checkpoint: {0}")]
    Format(String),
    #[error("architecture mismatch: checkpoint has `{found}`, config expects `{expected}`")]
    Architecture { expected: String, found: String },
}

/// One-line description of a model architecture.
pub fn architecture(config: &ModelConfig) -> String {
    let mlp = |c: &fbsde_core::networks::MlpConfig| {
        format!(
            "in={} out={} layers={} width={} act={}",
            c.input_dim,
            c.output_dim,
            c.hidden_layers,
            c.hidden_width,
            c.activation.name()
        )
    };
    match config {
        ModelConfig::Field(NetworkConfig::Mlp(c)) => format!("mlp {}", mlp(c)),
        ModelConfig::Field(NetworkConfig::Mscale(c)) => {
            let scales: Vec<String> = c
                .scales
                .iter()
                .map(|s| s.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(","))
                .collect();
            format!("mscale {} scales={}", mlp(&c.subnet), scales.join(";"))
        }
        ModelConfig::DeepBsde(c) => format!(
            "deep-bsde dim={} steps={} layers={} width={} act={}",
            c.dim,
            c.n_steps,
            c.hidden_layers,
            c.hidden_width,
            c.activation.name()
        ),
    }
}

pub fn architecture_hash(config: &ModelConfig) -> String {
    hex::encode(Sha256::digest(architecture(config).as_bytes()))
}

/// Model, optimizer state and provenance of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: Option<AdamState>,
    pub config_hash: String,
    pub seed: u64,
    /// Completed training steps.
    pub step: usize,
}

fn put_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_tensor(w: &mut impl Write, m: &Matrix) -> io::Result<()> {
    put_u64(w, m.rows() as u64)?;
    put_u64(w, m.cols() as u64)?;
    m.data().iter().try_for_each(|&v| put_f64(w, v))
}

fn get<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> io::Result<u32> {
    get::<4>(r).map(u32::from_le_bytes)
}

fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    get::<8>(r).map(u64::from_le_bytes)
}

fn get_f64(r: &mut impl Read) -> io::Result<f64> {
    get::<8>(r).map(f64::from_le_bytes)
}

/// Upper bound on any stored length, against corrupt headers.
const MAX_LEN: u64 = 1 << 32;

fn get_len(r: &mut impl Read) -> Result<usize, CheckpointError> {
    let n = get_u64(r)?;
    if n > MAX_LEN {
        return Err(CheckpointError::Format(format!("implausible length {n}")));
    }
    Ok(n as usize)
}

fn get_tensor(r: &mut impl Read) -> Result<Matrix, CheckpointError> {
    let (rows, cols) = (get_len(r)?, get_len(r)?);
    let n = rows
        .checked_mul(cols)
        .filter(|&n| n as u64 <= MAX_LEN)
        .ok_or_else(|| CheckpointError::Format("tensor too large".into()))?;
    let data = (0..n).map(|_| get_f64(r)).collect::<io::Result<Vec<_>>>()?;
    Matrix::new(rows, cols, data).map_err(|e| CheckpointError::Format(e.to_string()))
}

impl Checkpoint {
    pub fn write(&self, w: &mut impl Write) -> Result<(), CheckpointError> {
        let config = self.model.config();
        let header = format!(
            "architecture = {}\narchitecture_hash = {}\nconfig_hash = {}\nseed = {}\nstep = {}\n",
            architecture(&config),
            architecture_hash(&config),
            self.config_hash,
            self.seed,
            self.step
        );
        w.write_all(MAGIC)?;
        put_u32(w, VERSION)?;
        put_u32(w, header.len() as u32)?;
        w.write_all(header.as_bytes())?;
        let tensors = self.model.tensors();
        put_u32(w, tensors.len() as u32)?;
        tensors.iter().try_for_each(|m| put_tensor(w, m))?;
        match &self.adam {
            None => w.write_all(&[0])?,
            Some(a) => {
                w.write_all(&[1])?;
                put_f64(w, a.config.beta1)?;
                put_f64(w, a.config.beta2)?;
                put_f64(w, a.config.eps)?;
                put_u64(w, a.step)?;
                a.first.iter().chain(&a.second).try_for_each(|m| put_tensor(w, m))?;
            }
        }
        Ok(())
    }

    /// Reads a checkpoint of architecture `expected`.
    pub fn read(r: &mut impl Read, expected: &ModelConfig) -> Result<Self, CheckpointError> {
        if &get::<8>(r)? != MAGIC {
            return Err(CheckpointError::Format("bad magic".into()));
        }
        let version = get_u32(r)?;
        if version != VERSION {
            return Err(CheckpointError::Format(format!("unsupported version {version}")));
        }
        let len = get_u32(r)? as usize;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let header = String::from_utf8(header).map_err(|_| CheckpointError::Format("header is not UTF-8".into()))?;
        let value = |key: &str| {
            header
                .lines()
                .find_map(|l| l.strip_prefix(key).and_then(|rest| rest.strip_prefix(" = ")))
                .map(str::to_string)
                .ok_or_else(|| CheckpointError::Format(format!("header lacks `{key}`")))
        };
        if value("architecture_hash")? != architecture_hash(expected) {
            return Err(CheckpointError::Architecture {
                expected: architecture(expected),
                found: value("architecture")?,
            });
        }
        let parse_err = |k: &str| CheckpointError::Format(format!("bad `{k}`"));
        let seed = value("seed")?.parse().map_err(|_| parse_err("seed"))?;
        let step = value("step")?.parse().map_err(|_| parse_err("step"))?;
        let config_hash = value("config_hash")?;
        let count = get_u32(r)? as usize;
        let tensors = (0..count).map(|_| get_tensor(r)).collect::<Result<Vec<_>, _>>()?;
        let model = Model::from_tensors(expected.clone(), tensors)
            .map_err(|e| CheckpointError::Format(e.to_string()))?;
        let adam = match get::<1>(r)?[0] {
            0 => None,
            1 => {
                let config = AdamConfig {
                    beta1: get_f64(r)?,
                    beta2: get_f64(r)?,
                    eps: get_f64(r)?,
                };
                let step = get_u64(r)?;
                let mut state = AdamState::new(config, &model.tensors());
                for m in state.first.iter_mut().chain(state.second.iter_mut()) {
                    let t = get_tensor(r)?;
                    if t.shape() != m.shape() {
                        return Err(CheckpointError::Format("optimizer moment shape".into()));
                    }
                    *m = t;
                }
                state.step = step;
                Some(state)
            }
            f => return Err(CheckpointError::Format(format!("bad optimizer flag {f}"))),
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(CheckpointError::Format("trailing bytes".into()));
        }
        Ok(Self {
            model,
            adam,
            config_hash,
            seed,
            step,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), CheckpointError> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path, expected: &ModelConfig) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path)?;
        Self::read(&mut bytes.as_slice(), expected)
    }
}
