//! Command-line front end: `extract`, `train`, `convergence`, `eval` and
//! `inspect`, all driven by one TOML run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::digest::{sha256_file, sha256_hex};
use crate::error::{Error, Result};
use crate::exec::{with_jobs, Parallelism};
use crate::nn::checkpoint::Checkpoint;
use crate::plant::{builtin_model, load_model, model_to_toml, moment_arms, Model};
use crate::policy::{ActorKind, ClipSchedule, GroupIndexMap};
use crate::sac::{self, evaluate, mean_std, read_curve, write_curve, Agent, CurveRow, SacConfig, TrainSetup};
use crate::synergy::io::{
    grouping_hash, read_grouping, write_grouping, write_json, write_matrix_csv, write_trajectory, GroupingFile,
};
use crate::synergy::{convergence_study, extract, GroupingSettings, PerturbationConfig};
use crate::tasks::{make_env, TaskConfig};

pub const OUT_ENV: &str = "DYNSYN_OUT";
pub const DEFAULT_ROOT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "dynsyn", version, about = "Dynamical synergy extraction and grouped-action SAC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate perturbation trajectories and group the muscles.
    Extract(CommonArgs),
    /// Train a policy per seed.
    Train(CommonArgs),
    /// Grouping distance against sample size.
    Convergence(CommonArgs),
    /// Evaluate a trained policy.
    Eval(EvalArgs),
    /// Print a model summary and write it out as TOML.
    Inspect(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Replaces the seed list with a single seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub actor: Option<ActorKind>,
    /// Worker threads for per-seed work.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSettings {
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    /// Group count; chosen on the largest sample size when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_groups: Option<usize>,
}

fn default_sample_sizes() -> Vec<usize> {
    vec![500, 1_000, 2_000, 5_000, 10_000, 20_000, 50_000]
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        ConvergenceSettings {
            sample_sizes: default_sample_sizes(),
            n_groups: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_actor")]
    pub actor: ActorKind,
    /// Grouping document from `extract`; required for the grouped actor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouping: Option<PathBuf>,
    /// Continue from `policy.ckpt` in each seed directory when present.
    #[serde(default)]
    pub resume: bool,
}

fn default_actor() -> ActorKind {
    ActorKind::DynSyn
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            actor: default_actor(),
            grouping: None,
            resume: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Episodes whose traces are written.
    #[serde(default = "default_traces")]
    pub traces: usize,
}

fn default_episodes() -> usize {
    20
}

fn default_traces() -> usize {
    1
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            checkpoint: None,
            episodes: default_episodes(),
            traces: default_traces(),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Every knob of a run. Relative paths are resolved against the directory of
/// the configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    pub model: ModelSource,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub grouping: GroupingSettings,
    #[serde(default)]
    pub convergence: ConvergenceSettings,
    #[serde(default)]
    pub sac: SacConfig,
    #[serde(default)]
    pub clip: ClipSchedule,
    #[serde(default)]
    pub task: TaskConfig,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub eval: EvalSettings,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::format("run config", e))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut cfg.model.path);
        fix(&mut cfg.train.grouping);
        fix(&mut cfg.eval.checkpoint);
        fix(&mut cfg.out);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::param("seeds must not be empty"));
        }
        match (&self.model.builtin, &self.model.path) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(Error::param("model needs exactly one of `builtin` or `path`")),
        }
        self.perturbation.validate()?;
        self.sac.validate()?;
        self.clip.validate()?;
        self.task.validate()
    }

    pub fn load_model(&self) -> Result<Model> {
        match (&self.model.builtin, &self.model.path) {
            (Some(name), None) => builtin_model(name),
            (None, Some(path)) => load_model(path),
            _ => Err(Error::param("model needs exactly one of `builtin` or `path`")),
        }
    }

    /// Files this run reads, for the provenance record.
    fn inputs(&self) -> Vec<PathBuf> {
        [&self.model.path, &self.train.grouping, &self.eval.checkpoint]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    }
}

/// Applies command-line overrides on top of the file.
fn resolve(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    if let Some(a) = args.actor {
        cfg.train.actor = a;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = Some(j);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `--out`, then the config, then `$DYNSYN_OUT/<command>`, then `runs/<command>`.
pub fn output_dir(cfg: &RunConfig, command: &str) -> PathBuf {
    if let Some(o) = &cfg.out {
        return o.clone();
    }
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_ROOT), PathBuf::from);
    root.join(command)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub model: String,
    /// SHA-256 of the model in its TOML form, so built-in models are covered too.
    pub model_sha256: String,
    /// SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
}

pub const CONFIG_FILE: &str = "config.toml";
pub const PROVENANCE_FILE: &str = "provenance.json";

/// Creates `dir` and records the resolved config, version, seeds and input
/// checksums in it.
fn prepare_dir(dir: &Path, cfg: &RunConfig, model: &Model, command: &str, seeds: &[u64]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    let mut inputs = BTreeMap::new();
    for p in cfg.inputs() {
        if p.exists() {
            inputs.insert(p.display().to_string(), sha256_file(&p)?);
        }
    }
    let prov = Provenance {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: seeds.to_vec(),
        model: model.name.clone(),
        model_sha256: sha256_hex(model_to_toml(model).as_bytes()),
        inputs,
    };
    write_json(&dir.join(PROVENANCE_FILE), &prov)
}

fn muscle_names(model: &Model) -> Vec<String> {
    model.muscles.iter().map(|m| m.name.clone()).collect()
}

pub fn cmd_extract(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.load_model()?;
    prepare_dir(out, cfg, &model, "extract", &cfg.seeds)?;
    let ex = extract(&model, &cfg.perturbation, &cfg.seeds, &cfg.grouping, Parallelism::Parallel)?;
    let names = muscle_names(&model);
    let table = ex.selection.as_ref().map(|s| s.table.clone()).unwrap_or_default();
    for (k, &seed) in cfg.seeds.iter().enumerate() {
        write_trajectory(&out.join(format!("trajectory_seed{seed}.bin")), &ex.buffers[k], seed)?;
        write_matrix_csv(&out.join(format!("correlation_seed{seed}.csv")), &names, &ex.correlations[k].r)?;
        let file = GroupingFile::new(&model.name, &ex.groupings[k], &table);
        write_grouping(&out.join(format!("grouping_seed{seed}.json")), &file)?;
    }
    write_grouping(&out.join("grouping.json"), &GroupingFile::new(&model.name, &ex.groupings[0], &table))?;
    write_matrix_csv(&out.join("correlation_mean.csv"), &names, &ex.mean_r)?;
    write_matrix_csv(&out.join("probability.csv"), &names, &ex.probability.p)?;
    if let Some(sel) = &ex.selection {
        write_json(&out.join("selection.json"), sel)?;
    }
    println!("{}: {} groups", model.name, ex.n_groups);
    for g in &ex.groupings[0].groups {
        let members: Vec<&str> = g.iter().map(|&i| names[i].as_str()).collect();
        println!("  {}", members.join(" "));
    }
    Ok(())
}

pub fn cmd_convergence(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.load_model()?;
    prepare_dir(out, cfg, &model, "convergence", &cfg.seeds)?;
    let sizes = &cfg.convergence.sample_sizes;
    let n_groups = match cfg.convergence.n_groups.or(cfg.grouping.n_groups) {
        Some(k) => k,
        None => {
            let reference = PerturbationConfig {
                total_steps: *sizes.last().ok_or_else(|| Error::param("no sample sizes given"))?,
                ..cfg.perturbation.clone()
            };
            extract(&model, &reference, &cfg.seeds[..1], &cfg.grouping, Parallelism::Parallel)?.n_groups
        }
    };
    let rows = convergence_study(&model, &cfg.perturbation, sizes, &cfg.seeds, &cfg.grouping, n_groups, Parallelism::Parallel)?;
    let path = out.join("convergence.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::format("convergence csv", e))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Error::format("convergence csv", e))?;
        println!("{:>8} {:.4}", r.samples, r.distance);
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Index map and grouping hash for the configured actor.
fn action_map(cfg: &RunConfig, model: &Model) -> Result<(GroupIndexMap, Option<String>)> {
    match cfg.train.actor {
        ActorKind::Flat => Ok((GroupIndexMap::identity(model.n_muscles()), None)),
        ActorKind::DynSyn => {
            let path = cfg
                .train
                .grouping
                .as_ref()
                .ok_or_else(|| Error::param("the dynsyn actor needs `train.grouping`"))?;
            let (_, g) = read_grouping(path)?;
            if g.n_items() != model.n_muscles() {
                return Err(Error::param(format!(
                    "grouping covers {} muscles, model `{}` has {}",
                    g.n_items(),
                    model.name,
                    model.n_muscles()
                )));
            }
            Ok((GroupIndexMap::new(&g), Some(grouping_hash(&g))))
        }
    }
}

fn checkpoint_hash(c: &Checkpoint) -> Option<String> {
    c.meta["extra"]["grouping_hash"].as_str().map(str::to_string)
}

/// Mean and spread across seeds of curves logged at the same steps.
pub fn aggregate_curves(curves: &[Vec<CurveRow>]) -> Result<Vec<CurveRow>> {
    let Some(first) = curves.first() else {
        return Ok(Vec::new());
    };
    if curves.iter().any(|c| c.len() != first.len()) {
        return Err(Error::domain("seed curves have different lengths"));
    }
    let mut out = Vec::with_capacity(first.len());
    for (i, row) in first.iter().enumerate() {
        if curves.iter().any(|c| c[i].step != row.step) {
            return Err(Error::domain("seed curves log different steps"));
        }
        let col = |f: fn(&CurveRow) -> f64| curves.iter().map(|c| f(&c[i])).collect::<Vec<_>>();
        let (mean_return, std_return) = mean_std(&col(|r| r.mean_return));
        out.push(CurveRow {
            step: row.step,
            mean_return,
            std_return,
            alpha: mean_std(&col(|r| r.alpha)).0,
            c: mean_std(&col(|r| r.c)).0,
        });
    }
    Ok(out)
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

fn train_seed(cfg: &RunConfig, model: &Arc<Model>, map: &GroupIndexMap, hash: &Option<String>, dir: &Path, seed: u64) -> Result<Vec<CurveRow>> {
    prepare_dir(dir, cfg, model, "train", &[seed])?;
    let ckpt = dir.join(sac::CHECKPOINT_FILE);
    let curve_path = dir.join("curve.csv");
    let mut curve = Vec::new();
    let resume = if cfg.train.resume && ckpt.exists() {
        let c = Checkpoint::load(&ckpt)?;
        if checkpoint_hash(&c) != *hash {
            return Err(Error::param(format!("{} was trained with another grouping", ckpt.display())));
        }
        if curve_path.exists() {
            curve = read_curve(&curve_path)?;
        }
        Some(Agent::from_checkpoint(&c)?)
    } else {
        None
    };
    let setup = TrainSetup {
        kind: cfg.train.actor,
        map: map.clone(),
        sched: cfg.clip,
        config: cfg.sac.clone(),
        seed,
        grouping_hash: hash.clone(),
        checkpoint_dir: Some(dir.to_path_buf()),
        stop_at_return: None,
    };
    let task = cfg.task.clone();
    let m = model.clone();
    let outcome = sac::train(move || make_env(m.clone(), &task), &setup, resume)?;
    curve.extend(outcome.curve);
    write_curve(&curve_path, &curve)?;
    Ok(curve)
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = Arc::new(cfg.load_model()?);
    let (map, hash) = action_map(cfg, &model)?;
    prepare_dir(out, cfg, &model, "train", &cfg.seeds)?;
    let curves: Vec<Result<Vec<CurveRow>>> = Parallelism::Parallel.map(cfg.seeds.len(), |k| {
        let seed = cfg.seeds[k];
        train_seed(cfg, &model, &map, &hash, &seed_dir(out, seed), seed)
    });
    let curves: Vec<Vec<CurveRow>> = curves.into_iter().collect::<Result<_>>()?;
    let agg = aggregate_curves(&curves)?;
    write_curve(&out.join("curve.csv"), &agg)?;
    if let Some(last) = agg.last() {
        println!(
            "step {}: return {:.3} ± {:.3} over {} seeds",
            last.step,
            last.mean_return,
            last.std_return,
            curves.len()
        );
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub checkpoint: String,
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
}

pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<EvalSummary> {
    let model = Arc::new(cfg.load_model()?);
    let path = cfg
        .eval
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::param("eval needs `eval.checkpoint` or --checkpoint"))?;
    if cfg.eval.episodes == 0 {
        return Err(Error::param("eval.episodes must be >= 1"));
    }
    prepare_dir(out, cfg, &model, "eval", &cfg.seeds)?;
    let agent = Agent::from_checkpoint(&Checkpoint::load(path)?)?;
    let mut env = make_env(model, &cfg.task)?;
    let ev = evaluate(&agent, &mut env, cfg.eval.episodes, cfg.seeds[0], cfg.eval.traces > 0)?;
    let returns_path = out.join("returns.csv");
    let mut w = csv::Writer::from_path(&returns_path).map_err(|e| Error::format("returns csv", e))?;
    w.write_record(["episode", "return"]).map_err(|e| Error::format("returns csv", e))?;
    for (k, r) in ev.returns.iter().enumerate() {
        w.write_record([k.to_string(), r.to_string()]).map_err(|e| Error::format("returns csv", e))?;
    }
    w.flush().map_err(|e| Error::io(&returns_path, e))?;
    for (k, t) in ev.traces.iter().take(cfg.eval.traces).enumerate() {
        t.write_csv(&out.join(format!("trace_{k}.csv")))?;
    }
    let (mean_return, std_return) = mean_std(&ev.returns);
    let summary = EvalSummary {
        checkpoint: path.display().to_string(),
        episodes: ev.returns.len(),
        mean_return,
        std_return,
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!("{} episodes: return {:.3} ± {:.3}", summary.episodes, mean_return, std_return);
    Ok(summary)
}

pub fn cmd_inspect(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.load_model()?;
    prepare_dir(out, cfg, &model, "inspect", &cfg.seeds)?;
    fs::write(out.join("model.toml"), model_to_toml(&model)).map_err(|e| Error::io(out, e))?;
    println!("{}: {} joints, {} muscles", model.name, model.n_joints(), model.n_muscles());
    let arms = moment_arms(&model, &model.home);
    write_matrix_csv(
        &out.join("moment_arms_home.csv"),
        &model.links.iter().map(|l| l.name.clone()).collect::<Vec<_>>(),
        &arms,
    )?;
    for (i, m) in model.muscles.iter().enumerate() {
        let row: Vec<String> = (0..arms.cols()).map(|j| format!("{:+.4}", arms[(i, j)])).collect();
        println!("  {:<24} f_max {:>7.1}  r(home) {}", m.name, m.params.f_max, row.join(" "));
    }
    Ok(())
}

/// Exit status for an error: 2 for bad input, 3 for failures while running.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        2
    } else {
        3
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let (args, command) = match &cli.command {
        Command::Extract(a) => (a, "extract"),
        Command::Train(a) => (a, "train"),
        Command::Convergence(a) => (a, "convergence"),
        Command::Eval(a) => (&a.common, "eval"),
        Command::Inspect(a) => (a, "inspect"),
    };
    let mut cfg = resolve(args)?;
    if let Command::Eval(e) = &cli.command {
        if let Some(c) = &e.checkpoint {
            cfg.eval.checkpoint = Some(c.clone());
        }
        if let Some(n) = e.episodes {
            cfg.eval.episodes = n;
        }
    }
    let out = output_dir(&cfg, command);
    let jobs = cfg.jobs;
    with_jobs(jobs, || match cli.command {
        Command::Extract(_) => cmd_extract(&cfg, &out),
        Command::Train(_) => cmd_train(&cfg, &out),
        Command::Convergence(_) => cmd_convergence(&cfg, &out),
        Command::Eval(_) => cmd_eval(&cfg, &out).map(|_| ()),
        Command::Inspect(_) => cmd_inspect(&cfg, &out),
    })
}
