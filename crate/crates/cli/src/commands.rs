//! Subcommand implementations. Each writes its artifacts under the run's
//! output directory and returns the computed results.

use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use fbsde_core::evaluation::{convergence_table, neighborhood_study, ConvergenceRow, ErrorReport, EvalError};
use fbsde_core::networks::{ValueModel, MSCALE_TIME_SCALES};
use fbsde_core::problems::{Exact, Fbsde, Problem, ProblemPreset};
use fbsde_core::schemes::{ModelConfig, SchemeError, SchemeKind};
use fbsde_core::simulate::{anchored_x0, sample_increments, trajectories, Domain, NoiseKey, PathBatch, SimError, TimeGrid};
use fbsde_core::training::{init_model, train, AdamConfig, TrainError, TrainState};
use fbsde_core::{Eager, Matrix};

use crate::artifacts::{self, Stamp};
use crate::checkpoint::{architecture, Checkpoint, CheckpointError};
use crate::config::{ConfigError, RunConfig};
use crate::exec::Parallel;
use crate::plot::{log_plot, Series};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric abort: {0}")]
    Numeric(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Architecture { .. } => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Scheme {
                source: SchemeError::NonFinite { .. },
                ..
            } => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Sim(SimError::NonFinite { .. }) => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn sim_error(e: SimError) -> CliError {
    CliError::from(EvalError::Sim(e))
}

/// Where a value model comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Checkpoint(PathBuf),
    /// The closed-form solution of the problem.
    Exact,
}

impl ModelSource {
    /// The given checkpoint, or `checkpoint.bin` in the output directory.
    pub fn checkpoint_or_default(path: Option<PathBuf>, cfg: &RunConfig) -> Self {
        ModelSource::Checkpoint(path.unwrap_or_else(|| cfg.out_dir.join("checkpoint.bin")))
    }
}

pub fn stamp(cfg: &RunConfig) -> Stamp {
    Stamp {
        config_hash: cfg.hash(),
        seed: cfg.seed,
    }
}

fn executor(cfg: &RunConfig) -> Result<Parallel, CliError> {
    Parallel::new(cfg.threads).map_err(|e| CliError::Config(format!("`threads`: {e}")))
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), content)?;
    Ok(())
}

fn model_entries(config: &ModelConfig) -> Vec<(&'static str, String)> {
    let mut e = vec![
        ("architecture", architecture(config)),
        ("parameters", config.parameter_count().to_string()),
    ];
    if let ModelConfig::Field(fbsde_core::networks::NetworkConfig::Mscale(m)) = config {
        let scales: Vec<String> = m.scales.iter().map(|s| format!("{}", s[0])).collect();
        e.push(("time_scales", scales.join(",")));
    }
    e
}

fn version_entry() -> (&'static str, String) {
    ("fbsde_version", env!("CARGO_PKG_VERSION").to_string())
}

/// Closed-form `u(0, x₀)`.
fn exact_y0(problem: &Problem) -> Result<f64, CliError> {
    if !problem.has_exact() {
        return Err(CliError::Config(format!("problem `{}` has no closed form", problem.name())));
    }
    Ok(Exact(problem).value(&Eager, 0.0, &anchored_x0(problem, 1)).data()[0])
}

/// Trains `model_cfg` under `cfg`, writing checkpoint, loss table, loss
/// plot and metadata into `dir`. A numeric abort still writes the last
/// good state before returning the error.
pub fn train_into(
    cfg: &RunConfig,
    model_cfg: &ModelConfig,
    dir: &Path,
    resume: Option<Checkpoint>,
    progress: &mut dyn Write,
) -> Result<TrainState, CliError> {
    let problem = cfg.build_problem()?;
    let tc = cfg.train_config()?;
    let exec = executor(cfg)?;
    let mut state = match resume {
        Some(ck) => {
            if ck.config_hash != cfg.hash() {
                return Err(CliError::Config("checkpoint was trained under a different config".into()));
            }
            let adam = ck
                .adam
                .ok_or_else(|| CliError::Config("checkpoint has no optimizer state to resume".into()))?;
            TrainState {
                model: ck.model,
                adam,
                step: ck.step,
                history: Vec::new(),
            }
        }
        None => {
            let model = init_model(&problem, model_cfg, cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;
            TrainState::new(model, AdamConfig::default())
        }
    };
    let total = tc.schedule.total_steps();
    let result = train(&problem, &tc, &mut state, &exec, &mut |s, r| {
        if s.step % 100 == 0 || s.step == total {
            let _ = writeln!(progress, "step {}/{} lr {:e} loss {:e}", s.step, total, r.lr, r.loss.total);
        }
        ControlFlow::Continue(())
    });
    let st = stamp(cfg);
    let ck = Checkpoint {
        model: state.model.clone(),
        adam: Some(state.adam.clone()),
        config_hash: st.config_hash.clone(),
        seed: cfg.seed,
        step: state.step,
    };
    std::fs::create_dir_all(dir)?;
    ck.save(&dir.join("checkpoint.bin"))?;
    write_file(dir, "loss.csv", &artifacts::loss_csv(&st, &state.history))?;
    let curve = |f: fn(&fbsde_core::training::LossRecord) -> f64| {
        state.history.iter().map(|r| (r.step as f64, f(r))).collect()
    };
    let svg = log_plot(
        &st,
        "training loss",
        "step",
        "loss",
        &[
            Series {
                name: "total",
                points: curve(|r| r.loss.total),
            },
            Series {
                name: "pathwise",
                points: curve(|r| r.loss.pathwise),
            },
        ],
    );
    write_file(dir, "loss.svg", &svg)?;
    let y0 = state.model.y0(problem.x0()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut entries = vec![("command", "train".to_string()), version_entry()];
    entries.extend(model_entries(model_cfg));
    entries.push(("steps_completed", state.step.to_string()));
    entries.push(("y0", format!("{y0:e}")));
    if let Ok(exact) = exact_y0(&problem) {
        entries.push(("y0_exact", format!("{exact:e}")));
        entries.push(("y0_rel_error", format!("{:e}", (y0 - exact).abs() / exact.abs())));
    }
    if let Some(last) = state.history.last() {
        entries.push(("final_loss", format!("{:e}", last.loss.total)));
    }
    write_file(dir, "metadata.txt", &artifacts::metadata(&st, &entries, &cfg.canonical()))?;
    result?;
    Ok(state)
}

/// `train`: fresh or resumed training into the output directory.
pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>, progress: &mut dyn Write) -> Result<TrainState, CliError> {
    let model_cfg = cfg.model_config()?;
    let resume = resume.map(|p| Checkpoint::load(p, &model_cfg)).transpose()?;
    train_into(cfg, &model_cfg, &cfg.out_dir, resume, progress)
}

fn load_field(cfg: &RunConfig, path: &Path, model_cfg: &ModelConfig) -> Result<fbsde_core::networks::EagerNet, CliError> {
    let ck = Checkpoint::load(path, model_cfg)?;
    match ck.model.field() {
        Some(net) => Ok(net.eager()),
        None => Err(CliError::Config(format!(
            "scheme `{}` checkpoints hold no value network; use convergence for Y0",
            cfg.scheme
        ))),
    }
}

fn report_for<V: ValueModel<Eager> + Sync>(model: &V, problem: &Problem, cfg: &RunConfig) -> Result<ErrorReport, CliError> {
    let exec = executor(cfg)?;
    Ok(neighborhood_study(model, problem, cfg.radius, &cfg.verify_config(), &exec)?)
}

fn report_plot(st: &Stamp, title: &str, reports: &[(&str, &ErrorReport)]) -> String {
    let mut series = Vec::new();
    let names: Vec<(String, String)> = reports
        .iter()
        .map(|(n, _)| (format!("{n} mean"), format!("{n} mean+2SD")))
        .collect();
    for ((_, r), (mean, upper)) in reports.iter().zip(&names) {
        let pts = |v: Vec<f64>| r.stations.iter().copied().zip(v).collect::<Vec<_>>();
        series.push(Series {
            name: mean,
            points: pts(r.mean.clone()),
        });
        series.push(Series {
            name: upper,
            points: pts(r.mean_plus_2sd()),
        });
    }
    log_plot(st, title, "t", "relative error", &series)
}

fn report_name(radius: f64) -> String {
    if radius == 0.0 {
        "report".into()
    } else {
        format!("report_r{radius}")
    }
}

/// `evaluate`: relative error curves of a checkpoint or the exact solution,
/// from the anchor or from perturbed starts when `radius > 0`.
pub fn cmd_evaluate(cfg: &RunConfig, source: &ModelSource, progress: &mut dyn Write) -> Result<ErrorReport, CliError> {
    let problem = cfg.build_problem()?;
    let model_cfg = cfg.model_config()?;
    let report = match source {
        ModelSource::Exact => report_for(&Exact(&problem), &problem, cfg)?,
        ModelSource::Checkpoint(p) => report_for(&load_field(cfg, p, &model_cfg)?, &problem, cfg)?,
    };
    let st = stamp(cfg);
    let name = report_name(cfg.radius);
    write_file(&cfg.out_dir, &format!("{name}.csv"), &artifacts::report_csv(&st, &report))?;
    write_file(&cfg.out_dir, &format!("{name}.svg"), &report_plot(&st, "relative error", &[("model", &report)]))?;
    let model = match source {
        ModelSource::Exact => "exact".to_string(),
        ModelSource::Checkpoint(_) => architecture(&model_cfg),
    };
    let entries = vec![
        ("command", "evaluate".to_string()),
        version_entry(),
        ("model", model),
        ("radius", format!("{:e}", cfg.radius)),
        ("y0_rel_error", format!("{:e}", report.y0_rel_error)),
        ("overall_max_mean", format!("{:e}", report.overall_max_mean())),
    ];
    write_file(&cfg.out_dir, &format!("{name}_metadata.txt"), &artifacts::metadata(&st, &entries, &cfg.canonical()))?;
    let _ = writeln!(
        progress,
        "y0 relative error {:e}, overall max mean error {:e}",
        report.y0_rel_error,
        report.overall_max_mean()
    );
    Ok(report)
}

/// `convergence`: per-N training (or loading of a matching checkpoint) and
/// the `Y₀` error table with Richardson extrapolates.
pub fn cmd_convergence(cfg: &RunConfig, progress: &mut dyn Write) -> Result<Vec<ConvergenceRow>, CliError> {
    let problem = cfg.build_problem()?;
    let exact = exact_y0(&problem)?;
    let mut estimates = Vec::new();
    for &n in &cfg.n_list {
        let run = cfg.with_steps(n);
        let model_cfg = run.model_config()?;
        let dir = cfg.out_dir.join(format!("n{n}"));
        let path = dir.join("checkpoint.bin");
        let reuse = Checkpoint::load(&path, &model_cfg)
            .ok()
            .filter(|ck| ck.config_hash == run.hash() && ck.step == run.train_config().map_or(0, |t| t.schedule.total_steps()));
        let model = match reuse {
            Some(ck) => {
                let _ = writeln!(progress, "N = {n}: reusing {}", path.display());
                ck.model
            }
            None => {
                let _ = writeln!(progress, "N = {n}: training");
                train_into(&run, &model_cfg, &dir, None, progress)?.model
            }
        };
        let y0 = model.y0(problem.x0()).map_err(|e| CliError::Config(e.to_string()))?;
        estimates.push((n, y0));
    }
    let rows = convergence_table(&estimates, exact);
    let rows: Vec<ConvergenceRow> = if cfg.extrapolate {
        rows
    } else {
        rows.into_iter()
            .map(|r| ConvergenceRow {
                extrapolated_error: None,
                ..r
            })
            .collect()
    };
    let st = stamp(cfg);
    write_file(&cfg.out_dir, "convergence.csv", &artifacts::convergence_csv(&st, &rows))?;
    let entries = vec![
        ("command", "convergence".to_string()),
        version_entry(),
        ("y0_exact", format!("{exact:e}")),
    ];
    write_file(&cfg.out_dir, "convergence_metadata.txt", &artifacts::metadata(&st, &entries, &cfg.canonical()))?;
    for r in &rows {
        let ex = r.extrapolated_error.map(|e| format!("{e:e}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(progress, "N = {:>5}  raw {:e}  extrapolated {ex}", r.n_steps, r.raw_error);
    }
    Ok(rows)
}

/// `convergence --reference`: an externally supplied error table rewritten
/// in the layout of `convergence.csv`.
pub fn cmd_reference_table(cfg: &RunConfig, reference: &Path) -> Result<String, CliError> {
    let text = std::fs::read_to_string(reference)?;
    let rows = artifacts::read_reference(&text).map_err(CliError::Config)?;
    let out = artifacts::reference_csv(&stamp(cfg), &rows);
    write_file(&cfg.out_dir, "reference.csv", &out)?;
    Ok(out)
}

/// `mscale-compare`: plain and multiscale nets trained with the same seed
/// and noise on the oscillatory problem, then verified on the same paths.
pub fn cmd_mscale_compare(cfg: &RunConfig, progress: &mut dyn Write) -> Result<(ErrorReport, ErrorReport), CliError> {
    if cfg.problem != ProblemPreset::BsbOsc {
        return Err(CliError::Config("`problem`: mscale-compare needs bsb-osc".into()));
    }
    if cfg.scheme == SchemeKind::DeepBsde {
        return Err(CliError::Config("`scheme`: mscale-compare needs a value-network scheme".into()));
    }
    let problem = cfg.build_problem()?;
    let mut reports = Vec::new();
    let mut entries = vec![("command", "mscale-compare".to_string()), version_entry()];
    for (label, preset) in [("plain", cfg.compare_plain), ("mscale", cfg.compare_mscale)] {
        let model_cfg = ModelConfig::Field(cfg.preset_network(preset));
        let _ = writeln!(progress, "{label}: {}", architecture(&model_cfg));
        let dir = cfg.out_dir.join(label);
        let state = train_into(cfg, &model_cfg, &dir, None, progress)?;
        let net = state.model.field().expect("value-network scheme").eager();
        let report = report_for(&net, &problem, cfg)?;
        write_file(&dir, "report.csv", &artifacts::report_csv(&stamp(cfg), &report))?;
        entries.push((if label == "plain" { "plain_parameters" } else { "mscale_parameters" }, model_cfg.parameter_count().to_string()));
        entries.push((
            if label == "plain" { "plain_overall_max_mean" } else { "mscale_overall_max_mean" },
            format!("{:e}", report.overall_max_mean()),
        ));
        reports.push(report);
    }
    let mscale = reports.pop().expect("two reports");
    let plain = reports.pop().expect("two reports");
    let st = stamp(cfg);
    let scales: Vec<String> = MSCALE_TIME_SCALES.iter().map(|s| s.to_string()).collect();
    entries.push(("time_scales", scales.join(",")));
    write_file(&cfg.out_dir, "compare.csv", &artifacts::compare_csv(&st, &plain, &mscale))?;
    write_file(
        &cfg.out_dir,
        "compare.svg",
        &report_plot(&st, "plain vs multiscale", &[("plain", &plain), ("mscale", &mscale)]),
    )?;
    write_file(&cfg.out_dir, "compare_metadata.txt", &artifacts::metadata(&st, &entries, &cfg.canonical()))?;
    let _ = writeln!(
        progress,
        "overall max mean error: plain {:e}, mscale {:e}",
        plain.overall_max_mean(),
        mscale.overall_max_mean()
    );
    Ok((plain, mscale))
}

/// `paths-dump`: Euler trajectories on the training grid with the model's
/// values and gradients along them.
pub fn cmd_paths_dump(cfg: &RunConfig, source: &ModelSource) -> Result<PathBatch, CliError> {
    let problem = cfg.build_problem()?;
    if !problem.is_decoupled() {
        return Err(CliError::Config("paths-dump needs a decoupled problem".into()));
    }
    if cfg.dump_paths == 0 {
        return Err(CliError::Config("`dump.paths`: must be positive".into()));
    }
    let grid = TimeGrid::new(cfg.steps, cfg.horizon).map_err(|e| CliError::Config(format!("`steps`: {e}")))?;
    let dw = sample_increments(NoiseKey::new(cfg.seed, Domain::Dump, 0), cfg.dump_paths, &grid, cfg.dim);
    let x0: Matrix = anchored_x0(&problem, cfg.dump_paths);
    let batch = match source {
        ModelSource::Exact => trajectories(&problem, &Exact(&problem), &x0, &grid, dw),
        ModelSource::Checkpoint(p) => {
            let net = load_field(cfg, p, &cfg.model_config()?)?;
            trajectories(&problem, &net, &x0, &grid, dw)
        }
    }
    .map_err(sim_error)?;
    write_file(&cfg.out_dir, "trajectories.csv", &artifacts::trajectory_csv(&stamp(cfg), &batch))?;
    Ok(batch)
}
