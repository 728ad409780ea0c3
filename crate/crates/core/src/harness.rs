//! Experiment grids over the orchard environment: seeding, trial execution,
//! aggregation and persistence, plus merging of metric files into a
//! normative-vs-baseline comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{BackgroundRole, NormativeParams, NormativeState, OracleAgent, Role};
use crate::env::{
    alignment_metric, group_welfare, render_transcript, run_episode, steps_to_convergence, Agent, AlignmentReference,
    BackgroundMode, EnvConfig, EnvError, Environment, InstitutionConfig, WorldState,
};
use crate::exec::Execution;
use crate::institution::{Crop, CROP_NAMES};
use crate::oracle::{Oracle, OracleConfig, OracleError};

pub const CSV_HEADER: &str = "experiment,focal_kind,num_crops,num_background,num_institutions,trial_count,alignment_inst_mean,alignment_inst_std,alignment_comm_mean,alignment_comm_std,steps_to_convergence_mean,group_welfare_mean,status";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("metrics files disagree on schema: {0}")]
    MixedSchema(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// One non-authoritative institution; the community defies it.
    SingleNonauthoritative,
    /// Several institutions; the community follows exactly one.
    MultiInstitution,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::SingleNonauthoritative => "single_nonauthoritative",
            ExperimentKind::MultiInstitution => "multi_institution",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalKind {
    Normative,
    Baseline,
}

impl FocalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FocalKind::Normative => "normative",
            FocalKind::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FocalChoice {
    Normative,
    Baseline,
    #[default]
    Both,
}

impl FocalChoice {
    pub fn kinds(self) -> Vec<FocalKind> {
        match self {
            FocalChoice::Normative => vec![FocalKind::Normative],
            FocalChoice::Baseline => vec![FocalKind::Baseline],
            FocalChoice::Both => vec![FocalKind::Normative, FocalKind::Baseline],
        }
    }
}

/// Environment settings an experiment may override for every cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvOverrides {
    pub discussion_turns: Option<usize>,
    pub max_timesteps: Option<usize>,
    pub eval_window: Option<usize>,
    pub sanction_cost_received: Option<f64>,
    pub sanction_cost_sent: Option<f64>,
    pub harvest_reward: Option<f64>,
    pub monoculture_bonus: Option<f64>,
}

impl EnvOverrides {
    fn apply(&self, cfg: &mut EnvConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { cfg.$f = v; } )*};
        }
        set!(
            discussion_turns,
            max_timesteps,
            eval_window,
            sanction_cost_received,
            sanction_cost_sent,
            harvest_reward,
            monoculture_bonus
        );
    }
}

fn d_crops() -> Vec<usize> {
    vec![2, 3, 4, 5]
}
fn d_one_to_five() -> Vec<usize> {
    vec![1, 2, 3, 4, 5]
}
fn d_insts() -> Vec<usize> {
    vec![2, 3, 4, 5]
}
fn d_trials() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Crop counts swept in the single-institution experiment.
    #[serde(default = "d_crops")]
    pub num_crops: Vec<usize>,
    /// Community sizes swept in the single-institution experiment.
    #[serde(default = "d_one_to_five")]
    pub num_background: Vec<usize>,
    #[serde(default = "d_insts")]
    pub num_institutions: Vec<usize>,
    #[serde(default = "d_one_to_five")]
    pub num_background_followers: Vec<usize>,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default)]
    pub focal: FocalChoice,
    /// Authoritative institution in the multi-institution experiment;
    /// drawn from each trial's seed when absent.
    #[serde(default)]
    pub authoritative_index: Option<usize>,
    #[serde(default)]
    pub env: EnvOverrides,
    #[serde(default)]
    pub normative: NormativeParams,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub seed_base: u64,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            num_crops: d_crops(),
            num_background: d_one_to_five(),
            num_institutions: d_insts(),
            num_background_followers: d_one_to_five(),
            trials: d_trials(),
            focal: FocalChoice::Both,
            authoritative_index: None,
            env: EnvOverrides::default(),
            normative: NormativeParams::default(),
            oracle: OracleConfig::default(),
            seed_base: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let grids: [(&str, &Vec<usize>); 2] = match self.experiment {
            ExperimentKind::SingleNonauthoritative => {
                [("num_crops", &self.num_crops), ("num_background", &self.num_background)]
            }
            ExperimentKind::MultiInstitution => [
                ("num_institutions", &self.num_institutions),
                ("num_background_followers", &self.num_background_followers),
            ],
        };
        for (name, grid) in grids {
            if grid.is_empty() {
                errs.push(format!("{name}: grid must not be empty"));
            }
        }
        if self.trials == 0 {
            errs.push("trials: must be at least 1".into());
        }
        errs.extend(self.normative.validate());
        errs.extend(self.oracle.validate());
        errs
    }

    /// Every grid cell, in row order.
    pub fn cells(&self) -> Vec<Cell> {
        let exp = self.experiment;
        match exp {
            ExperimentKind::SingleNonauthoritative => self
                .num_crops
                .iter()
                .flat_map(|&c| {
                    self.num_background.iter().map(move |&b| Cell {
                        experiment: exp,
                        num_crops: c,
                        num_background: b,
                        num_institutions: 1,
                    })
                })
                .collect(),
            ExperimentKind::MultiInstitution => self
                .num_institutions
                .iter()
                .flat_map(|&k| {
                    self.num_background_followers.iter().map(move |&b| Cell {
                        experiment: exp,
                        num_crops: CROP_NAMES.len(),
                        num_background: b,
                        num_institutions: k,
                    })
                })
                .collect(),
        }
    }
}

/// One point on the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub experiment: ExperimentKind,
    pub num_crops: usize,
    pub num_background: usize,
    pub num_institutions: usize,
}

impl Cell {
    pub fn label(&self, focal: FocalKind) -> String {
        let short = match self.experiment {
            ExperimentKind::SingleNonauthoritative => "exp1",
            ExperimentKind::MultiInstitution => "exp2",
        };
        format!(
            "{short}_{}_c{}_b{}_i{}",
            focal.as_str(),
            self.num_crops,
            self.num_background,
            self.num_institutions
        )
    }

    /// Why this cell cannot run, if it cannot.
    pub fn infeasible(&self) -> Option<String> {
        if !(2..=CROP_NAMES.len()).contains(&self.num_crops) {
            return Some(format!(
                "num_crops {} outside [2, {}]",
                self.num_crops,
                CROP_NAMES.len()
            ));
        }
        if self.num_institutions > self.num_crops {
            return Some(format!(
                "{} institutions cannot declare distinct crops among {}",
                self.num_institutions, self.num_crops
            ));
        }
        if self.num_institutions == 0 {
            return Some("no institutions".into());
        }
        None
    }
}

/// Trial seed: the first 8 bytes of SHA-256 over the base seed, the cell and
/// the trial index. The focal kind is deliberately left out so that
/// normative and baseline runs of a cell face identical worlds.
pub fn trial_seed(seed_base: u64, cell: &Cell, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed_base.to_le_bytes());
    h.update(cell.experiment.as_str().as_bytes());
    for v in [cell.num_crops, cell.num_background, cell.num_institutions, trial] {
        h.update((v as u64).to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Environment for one trial plus the institution whose declarations count
/// as "institutional" alignment.
pub fn cell_env(cfg: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<(EnvConfig, usize), String> {
    if let Some(reason) = cell.infeasible() {
        return Err(reason);
    }
    let inst = |id: usize, authoritative: bool| InstitutionConfig {
        name: None,
        crop: CROP_NAMES[id].to_string(),
        rotation: None,
        authoritative,
    };
    let mut env = EnvConfig {
        num_crops: cell.num_crops,
        num_background: cell.num_background,
        seed,
        ..EnvConfig::default()
    };
    let reference = match cell.experiment {
        ExperimentKind::SingleNonauthoritative => {
            env.institutions = vec![inst(0, false)];
            env.background_mode = BackgroundMode::DefyInstitution;
            env.defy_crop = Some(CROP_NAMES[1].to_string());
            0
        }
        ExperimentKind::MultiInstitution => {
            let k = cell.num_institutions;
            let auth = match cfg.authoritative_index {
                Some(a) if a < k => a,
                Some(a) => return Err(format!("authoritative_index {a} >= {k} institutions")),
                None => (seed % k as u64) as usize,
            };
            env.institutions = (0..k).map(|i| inst(i, i == auth)).collect();
            env.background_mode = BackgroundMode::FollowAuthoritative;
            auth
        }
    };
    cfg.env.apply(&mut env);
    Ok((env, reference))
}

/// Focal agent 0 plus `num_background` scripted community members.
pub fn build_agents(
    env: &Environment,
    focal: FocalKind,
    params: NormativeParams,
    oracle: Arc<dyn Oracle>,
) -> Result<Vec<Box<dyn Agent>>, String> {
    let seed = env.cfg.seed;
    let focal_role = match focal {
        FocalKind::Baseline => Role::Baseline,
        FocalKind::Normative => {
            let ids: Vec<usize> = env.institutions.iter().map(|i| i.id).collect();
            Role::Normative(NormativeState::new(&ids, params))
        }
    };
    let background = match env.cfg.background_mode {
        BackgroundMode::FollowAuthoritative => env
            .authoritative()
            .map(|institution| BackgroundRole::Follow { institution }),
        BackgroundMode::DefyInstitution => env.defy_crop.map(|defy_crop| BackgroundRole::Defy {
            institution: 0,
            defy_crop,
        }),
    };
    let mut agents: Vec<Box<dyn Agent>> = vec![Box::new(OracleAgent::new(0, focal_role, oracle.clone(), seed))];
    for id in 1..env.num_agents() {
        let role = background.ok_or("background agents need an institution to follow or defy")?;
        agents.push(Box::new(OracleAgent::new(
            id,
            Role::Background(role),
            oracle.clone(),
            seed,
        )));
    }
    Ok(agents)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub alignment_inst: f64,
    pub alignment_comm: f64,
    pub steps_to_convergence: usize,
    pub group_welfare: f64,
}

pub fn episode_metrics(history: &[WorldState], env: &Environment, reference: usize) -> Result<TrialMetrics, EnvError> {
    Ok(TrialMetrics {
        alignment_inst: alignment_metric(history, env, AlignmentReference::Institution(reference))?,
        alignment_comm: alignment_metric(history, env, AlignmentReference::CommunityModal)?,
        steps_to_convergence: steps_to_convergence(history, env.cfg.max_timesteps),
        group_welfare: group_welfare(history, env)?,
    })
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub seed: u64,
    pub env: Environment,
    pub history: Vec<WorldState>,
    pub metrics: TrialMetrics,
    pub transcript: String,
}

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("skipped: {0}")]
    Skipped(String),
    #[error("failed: {0}")]
    Failed(String),
}

/// Runs one episode of `cell` with the given focal agent.
pub fn run_cell(
    cfg: &ExperimentConfig,
    cell: &Cell,
    focal: FocalKind,
    trial: usize,
    oracle: Arc<dyn Oracle>,
) -> Result<TrialResult, TrialError> {
    let seed = trial_seed(cfg.seed_base, cell, trial);
    let (env_cfg, reference) = cell_env(cfg, cell, seed).map_err(TrialError::Skipped)?;
    let env = env_cfg.build().map_err(|e| TrialError::Failed(e.to_string()))?;
    let mut agents = build_agents(&env, focal, cfg.normative, oracle).map_err(TrialError::Failed)?;
    let history = run_episode(&env, &mut agents).map_err(|e| TrialError::Failed(e.to_string()))?;
    let metrics = episode_metrics(&history, &env, reference).map_err(|e| TrialError::Failed(e.to_string()))?;
    let transcript = render_transcript(&history, &env);
    Ok(TrialResult {
        seed,
        env,
        history,
        metrics,
        transcript,
    })
}

/// Aggregated results for one (cell, focal kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: ExperimentKind,
    pub focal_kind: FocalKind,
    pub num_crops: usize,
    pub num_background: usize,
    pub num_institutions: usize,
    pub trial_count: usize,
    pub alignment_inst_mean: Option<f64>,
    pub alignment_inst_std: Option<f64>,
    pub alignment_comm_mean: Option<f64>,
    pub alignment_comm_std: Option<f64>,
    pub steps_to_convergence_mean: Option<f64>,
    pub group_welfare_mean: Option<f64>,
    pub status: String,
}

impl MetricsRow {
    pub fn cell(&self) -> Cell {
        Cell {
            experiment: self.experiment,
            num_crops: self.num_crops,
            num_background: self.num_background,
            num_institutions: self.num_institutions,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn sort_key(&self) -> (ExperimentKind, FocalKind, usize, usize, usize) {
        (
            self.experiment,
            self.focal_kind,
            self.num_crops,
            self.num_background,
            self.num_institutions,
        )
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for a single value.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn aggregate(cell: &Cell, focal: FocalKind, trials: &[Result<TrialResult, TrialError>]) -> MetricsRow {
    let mut row = MetricsRow {
        experiment: cell.experiment,
        focal_kind: focal,
        num_crops: cell.num_crops,
        num_background: cell.num_background,
        num_institutions: cell.num_institutions,
        trial_count: trials.len(),
        alignment_inst_mean: None,
        alignment_inst_std: None,
        alignment_comm_mean: None,
        alignment_comm_std: None,
        steps_to_convergence_mean: None,
        group_welfare_mean: None,
        status: "ok".into(),
    };
    if let Some(Err(e)) = trials.iter().find(|t| t.is_err()) {
        row.status = e.to_string();
        return row;
    }
    let ms: Vec<TrialMetrics> = trials.iter().flatten().map(|t| t.metrics).collect();
    let col = |f: fn(&TrialMetrics) -> f64| ms.iter().map(f).collect::<Vec<f64>>();
    let inst = col(|m| m.alignment_inst);
    let comm = col(|m| m.alignment_comm);
    row.alignment_inst_mean = Some(mean(&inst));
    row.alignment_inst_std = Some(sample_std(&inst));
    row.alignment_comm_mean = Some(mean(&comm));
    row.alignment_comm_std = Some(sample_std(&comm));
    row.steps_to_convergence_mean = Some(mean(&col(|m| m.steps_to_convergence as f64)));
    row.group_welfare_mean = Some(mean(&col(|m| m.group_welfare)));
    row
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricsRow>,
    /// (file name, transcript) for every episode that ran.
    pub transcripts: Vec<(String, String)>,
}

impl ExperimentOutput {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status.starts_with("failed")).count()
    }
}

/// Runs every (cell, focal kind, trial) and aggregates. Results do not
/// depend on `exec`.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentOutput, HarnessError> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(HarnessError::Config(errs));
    }
    let oracle = cfg.oracle.build()?;
    let jobs: Vec<(Cell, FocalKind, usize)> = cfg
        .cells()
        .into_iter()
        .flat_map(|cell| {
            cfg.focal
                .kinds()
                .into_iter()
                .flat_map(move |f| (0..cfg.trials).map(move |t| (cell, f, t)))
        })
        .collect();
    let results = exec.map(jobs.clone(), |(cell, focal, trial)| {
        run_cell(cfg, &cell, focal, trial, oracle.clone())
    });

    let mut grouped: BTreeMap<(Cell, FocalKind), Vec<Result<TrialResult, TrialError>>> = BTreeMap::new();
    let mut transcripts = Vec::new();
    for ((cell, focal, trial), result) in jobs.into_iter().zip(results) {
        match &result {
            Ok(r) => transcripts.push((format!("ep_{}_{trial}.txt", cell.label(focal)), r.transcript.clone())),
            Err(e @ TrialError::Failed(_)) => log::error!("{} trial {trial}: {e}", cell.label(focal)),
            Err(_) => {}
        }
        grouped.entry((cell, focal)).or_default().push(result);
    }
    let mut rows: Vec<MetricsRow> = grouped
        .iter()
        .map(|((cell, focal), trials)| aggregate(cell, *focal, trials))
        .collect();
    rows.sort_by_key(MetricsRow::sort_key);
    transcripts.sort();
    Ok(ExperimentOutput { rows, transcripts })
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize to CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("CSV is UTF-8")
}

/// Writes `metrics.csv`, `metrics.json` and the episode transcripts.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io_err(&p))
    };
    write("metrics.csv", &rows_to_csv(&out.rows))?;
    write(
        "metrics.json",
        &serde_json::to_string_pretty(&MetricsFile { rows: out.rows.clone() }).expect("rows serialize"),
    )?;
    for (name, text) in &out.transcripts {
        write(name, text)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsFile {
    pub rows: Vec<MetricsRow>,
}

/// Reads a `metrics.csv` or `metrics.json`; anything with a different
/// schema is rejected.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let fmt_err = |msg: String| HarnessError::Format {
        path: path.to_path_buf(),
        msg,
    };
    if path.extension().is_some_and(|e| e == "json") {
        let f: MetricsFile =
            serde_json::from_str(&text).map_err(|e| HarnessError::MixedSchema(format!("{}: {e}", path.display())))?;
        return Ok(f.rows);
    }
    let header = text.lines().next().unwrap_or_default().trim_end_matches('\r');
    if header != CSV_HEADER {
        return Err(HarnessError::MixedSchema(format!(
            "{} has header '{header}', expected '{CSV_HEADER}'",
            path.display()
        )));
    }
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<MetricsRow>, _>>()
        .map_err(|e| fmt_err(e.to_string()))
}

/// Normative and baseline results side by side for one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub experiment: ExperimentKind,
    pub num_crops: usize,
    pub num_background: usize,
    pub num_institutions: usize,
    pub normative_inst: Option<f64>,
    pub baseline_inst: Option<f64>,
    pub normative_comm: Option<f64>,
    pub baseline_comm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub rows: Vec<MetricsRow>,
    pub comparison: Vec<ComparisonRow>,
}

pub fn build_report(files: &[PathBuf]) -> Result<Report, HarnessError> {
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_metrics(f)?);
    }
    rows.sort_by_key(MetricsRow::sort_key);
    rows.dedup();
    let mut by_cell: BTreeMap<Cell, ComparisonRow> = BTreeMap::new();
    for r in &rows {
        let c = r.cell();
        let entry = by_cell.entry(c).or_insert(ComparisonRow {
            experiment: c.experiment,
            num_crops: c.num_crops,
            num_background: c.num_background,
            num_institutions: c.num_institutions,
            normative_inst: None,
            baseline_inst: None,
            normative_comm: None,
            baseline_comm: None,
        });
        match r.focal_kind {
            FocalKind::Normative => {
                entry.normative_inst = r.alignment_inst_mean;
                entry.normative_comm = r.alignment_comm_mean;
            }
            FocalKind::Baseline => {
                entry.baseline_inst = r.alignment_inst_mean;
                entry.baseline_comm = r.alignment_comm_mean;
            }
        }
    }
    Ok(Report {
        rows,
        comparison: by_cell.into_values().collect(),
    })
}

fn cell_text(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

impl Report {
    pub fn table(&self) -> String {
        let header = [
            "experiment",
            "crops",
            "background",
            "institutions",
            "norm_inst",
            "base_inst",
            "norm_comm",
            "base_comm",
        ];
        let body: Vec<[String; 8]> = self
            .comparison
            .iter()
            .map(|c| {
                [
                    c.experiment.as_str().to_string(),
                    c.num_crops.to_string(),
                    c.num_background.to_string(),
                    c.num_institutions.to_string(),
                    cell_text(c.normative_inst),
                    cell_text(c.baseline_inst),
                    cell_text(c.normative_comm),
                    cell_text(c.baseline_comm),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..8)
            .map(|i| {
                body.iter()
                    .map(|r| r[i].len())
                    .chain([header[i].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut s = String::new();
        let line = |s: &mut String, cells: &[&str]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(s, "{}", parts.join("  ").trim_end());
        };
        line(&mut s, &header);
        for r in &body {
            line(&mut s, &r.iter().map(String::as_str).collect::<Vec<_>>());
        }
        s
    }

    pub fn comparison_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.comparison {
            w.serialize(c).expect("comparison rows serialize");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("CSV is UTF-8")
    }
}

/// Which institution the focal agent's actions are checked against: the
/// defied institution in the single-institution setup, the authoritative
/// one otherwise.
pub fn reference_institution(env: &Environment) -> usize {
    env.authoritative().unwrap_or(0)
}

/// Crop the focal agent harvested at every step.
pub fn focal_actions(history: &[WorldState]) -> Vec<Crop> {
    history.iter().map(|s| s.actions[0]).collect()
}
