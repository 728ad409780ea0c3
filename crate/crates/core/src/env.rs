//! The Normative Orchards environment.
//!
//! Each timestep runs four phases in order: institutions emit signals,
//! agents talk in a fixed order (criticisms ride along as structured
//! records), every agent commits a harvest simultaneously, then sanctions
//! from this step's discussion are charged and rewards computed. Agent 0 is
//! the focal agent.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::institution::{declare, Crop, DeclarationPolicy, Institution, InstitutionSignal, CROP_NAMES};
use crate::oracle::OracleError;

pub type AgentId = usize;

pub const FOCAL_NAME: &str = "Alice";
const BACKGROUND_NAMES: [&str; 8] = ["John", "Anthony", "Jane", "Darcy", "Maya", "Victor", "Nora", "Felix"];

pub fn agent_name(id: AgentId) -> String {
    match id {
        0 => FOCAL_NAME.to_string(),
        n => BACKGROUND_NAMES
            .get(n - 1)
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("Villager{n}")),
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("an episode needs at least one agent")]
    NoAgents,
    #[error("agent {agent} chose crop {crop}, but only {num_crops} crops exist")]
    CropOutOfRange {
        agent: AgentId,
        crop: usize,
        num_crops: usize,
    },
    #[error("agent {agent} issued an invalid criticism: {reason}")]
    BadCriticism { agent: AgentId, reason: String },
    #[error("agent {agent} failed: {source}")]
    Agent {
        agent: AgentId,
        #[source]
        source: AgentError,
    },
    #[error("history has {have} steps, need at least {need}")]
    ShortHistory { have: usize, need: usize },
    #[error("unknown institution {0}")]
    UnknownInstitution(usize),
    #[error("no background agents to define a community crop")]
    NoCommunity,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Policy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    /// Harvest and sanction per the authoritative institution.
    #[default]
    FollowAuthoritative,
    /// Harvest `defy_crop` and criticize anyone following institution 0.
    DefyInstitution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstitutionConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub crop: String,
    /// Optional rotation; overrides `crop` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<String>>,
    #[serde(default)]
    pub authoritative: bool,
}

fn d_turns() -> usize {
    1
}
fn d_max_t() -> usize {
    16
}
fn d_window() -> usize {
    8
}
fn d_recv() -> f64 {
    0.25
}
fn d_sent() -> f64 {
    0.05
}
fn d_harvest() -> f64 {
    1.0
}
fn d_bonus() -> f64 {
    0.5
}

/// Environment configuration as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub num_crops: usize,
    /// Defaults to the first `num_crops` catalogue names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_names: Option<Vec<String>>,
    #[serde(default)]
    pub institutions: Vec<InstitutionConfig>,
    #[serde(default)]
    pub num_background: usize,
    #[serde(default)]
    pub background_mode: BackgroundMode,
    /// Crop defiant background agents harvest; defaults to the first crop
    /// institution 0 does not declare.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defy_crop: Option<String>,
    #[serde(default = "d_turns")]
    pub discussion_turns: usize,
    #[serde(default = "d_max_t")]
    pub max_timesteps: usize,
    #[serde(default = "d_window")]
    pub eval_window: usize,
    #[serde(default = "d_recv")]
    pub sanction_cost_received: f64,
    #[serde(default = "d_sent")]
    pub sanction_cost_sent: f64,
    #[serde(default = "d_harvest")]
    pub harvest_reward: f64,
    #[serde(default = "d_bonus")]
    pub monoculture_bonus: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            num_crops: 5,
            crop_names: None,
            institutions: vec![],
            num_background: 0,
            background_mode: BackgroundMode::FollowAuthoritative,
            defy_crop: None,
            discussion_turns: d_turns(),
            max_timesteps: d_max_t(),
            eval_window: d_window(),
            sanction_cost_received: d_recv(),
            sanction_cost_sent: d_sent(),
            harvest_reward: d_harvest(),
            monoculture_bonus: d_bonus(),
            seed: 0,
        }
    }
}

impl EnvConfig {
    /// Every schema violation, each prefixed with the offending field.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(2..=CROP_NAMES.len()).contains(&self.num_crops) {
            errs.push(format!(
                "num_crops: {} not in [2, {}]",
                self.num_crops,
                CROP_NAMES.len()
            ));
        }
        let n = self.num_crops.min(CROP_NAMES.len());
        if let Some(names) = &self.crop_names {
            if names.len() != self.num_crops {
                errs.push(format!(
                    "crop_names: {} names for {} crops",
                    names.len(),
                    self.num_crops
                ));
            }
            for (i, name) in names.iter().enumerate() {
                if CROP_NAMES.get(i) != Some(&name.as_str()) {
                    errs.push(format!(
                        "crop_names[{i}]: '{name}' must be '{}'",
                        CROP_NAMES.get(i).unwrap_or(&"<none>")
                    ));
                }
            }
        }
        let check_crop = |field: String, name: &str, errs: &mut Vec<String>| match Crop::from_name(name) {
            Some(c) if c.index() < n => {}
            Some(_) => errs.push(format!("{field}: '{name}' is not among the first {n} crops")),
            None => errs.push(format!("{field}: unknown crop '{name}'")),
        };
        for (i, inst) in self.institutions.iter().enumerate() {
            check_crop(format!("institutions[{i}].crop"), &inst.crop, &mut errs);
            if let Some(rot) = &inst.rotation {
                if rot.is_empty() {
                    errs.push(format!("institutions[{i}].rotation: empty"));
                }
                for (k, c) in rot.iter().enumerate() {
                    check_crop(format!("institutions[{i}].rotation[{k}]"), c, &mut errs);
                }
            }
        }
        let authoritative = self.institutions.iter().filter(|i| i.authoritative).count();
        if authoritative > 1 {
            errs.push(format!(
                "institutions: {authoritative} marked authoritative, at most 1 allowed"
            ));
        }
        if self.num_background > 0 {
            match self.background_mode {
                BackgroundMode::FollowAuthoritative if authoritative == 0 => {
                    errs.push("background_mode: follow_authoritative needs an authoritative institution".into())
                }
                BackgroundMode::DefyInstitution if self.institutions.is_empty() => {
                    errs.push("background_mode: defy_institution needs an institution to defy".into())
                }
                _ => {}
            }
        }
        if let Some(d) = &self.defy_crop {
            check_crop("defy_crop".into(), d, &mut errs);
            if let Some(first) = self.institutions.first() {
                if first.rotation.is_none() && first.crop == *d {
                    errs.push(format!("defy_crop: '{d}' equals the institution's declaration"));
                }
            }
        }
        if self.max_timesteps == 0 {
            errs.push("max_timesteps: must be positive".into());
        }
        if self.eval_window == 0 || self.eval_window > self.max_timesteps {
            errs.push(format!(
                "eval_window: {} not in [1, max_timesteps = {}]",
                self.eval_window, self.max_timesteps
            ));
        }
        for (field, v) in [
            ("sanction_cost_received", self.sanction_cost_received),
            ("sanction_cost_sent", self.sanction_cost_sent),
            ("monoculture_bonus", self.monoculture_bonus),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("{field}: must be finite and non-negative"));
            }
        }
        if !self.harvest_reward.is_finite() {
            errs.push("harvest_reward: must be finite".into());
        }
        errs
    }

    pub fn build(&self) -> Result<Environment, EnvError> {
        let errs = self.validate();
        if !errs.is_empty() {
            return Err(EnvError::Config(errs));
        }
        let crop = |s: &str| Crop::from_name(s).expect("validated");
        let institutions: Vec<Institution> = self
            .institutions
            .iter()
            .enumerate()
            .map(|(id, ic)| Institution {
                id,
                name: ic.name.clone().unwrap_or_else(|| crate::institution::default_name(id)),
                policy: match &ic.rotation {
                    Some(rot) => DeclarationPolicy::Rotating(rot.iter().map(|c| crop(c)).collect()),
                    None => DeclarationPolicy::Constant(crop(&ic.crop)),
                },
                authoritative: ic.authoritative,
            })
            .collect();
        let defy_crop = match (&self.defy_crop, institutions.first()) {
            (Some(d), _) => Some(crop(d)),
            (None, Some(first)) => {
                let declared = first.policy.crops();
                (0..self.num_crops).map(Crop).find(|c| !declared.contains(c))
            }
            (None, None) => None,
        };
        if self.num_background > 0 && self.background_mode == BackgroundMode::DefyInstitution && defy_crop.is_none() {
            return Err(EnvError::Config(vec![
                "defy_crop: institution 0 declares every crop; nothing left to defy with".into(),
            ]));
        }
        Ok(Environment {
            cfg: self.clone(),
            institutions,
            defy_crop,
        })
    }
}

/// A validated environment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub cfg: EnvConfig,
    pub institutions: Vec<Institution>,
    pub defy_crop: Option<Crop>,
}

impl Environment {
    pub fn num_crops(&self) -> usize {
        self.cfg.num_crops
    }

    pub fn num_agents(&self) -> usize {
        1 + self.cfg.num_background
    }

    pub fn crop_names(&self) -> Vec<String> {
        CROP_NAMES[..self.cfg.num_crops].iter().map(|s| s.to_string()).collect()
    }

    pub fn authoritative(&self) -> Option<usize> {
        self.institutions.iter().position(|i| i.authoritative)
    }

    pub fn signals(&self, t: usize) -> Vec<InstitutionSignal> {
        self.institutions.iter().map(|i| declare(i, t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Institution(usize),
    Community,
}

/// A verbal sanction against an agent's previous harvest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criticism {
    pub sender: AgentId,
    pub target: AgentId,
    pub criticized_crop: Crop,
    pub basis: Basis,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub criticisms: Vec<Criticism>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscussionEntry {
    /// Zero-based discussion round.
    pub turn: usize,
    pub speaker: AgentId,
    pub text: String,
    pub criticisms: Vec<Criticism>,
}

/// What one agent sees. Deliberately carries no institution authority flag
/// and no other agent's internal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: usize,
    pub me: AgentId,
    pub roster: Vec<String>,
    pub crop_names: Vec<String>,
    pub signals: Vec<InstitutionSignal>,
    /// Signals from t−1; empty at t = 0.
    pub last_step_signals: Vec<InstitutionSignal>,
    /// Every agent's harvest at t−1; empty at t = 0.
    pub last_step_actions: Vec<Crop>,
    pub last_step_criticisms: Vec<Criticism>,
    /// Criticisms aimed at `me` so far this step.
    pub own_received_criticisms: Vec<Criticism>,
    pub discussion_so_far: Vec<DiscussionEntry>,
}

impl Observation {
    pub fn num_crops(&self) -> usize {
        self.crop_names.len()
    }

    pub fn name_of(&self, id: AgentId) -> &str {
        &self.roster[id]
    }

    pub fn my_name(&self) -> &str {
        &self.roster[self.me]
    }

    /// All criticisms issued so far this step.
    pub fn criticisms_so_far(&self) -> impl Iterator<Item = &Criticism> {
        self.discussion_so_far.iter().flat_map(|d| d.criticisms.iter())
    }
}

/// Anything that can take part in an episode.
pub trait Agent: Send {
    fn discuss(&mut self, obs: &Observation) -> Result<Utterance, AgentError>;
    fn act(&mut self, obs: &Observation) -> Result<Crop, AgentError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub harvest: f64,
    pub monoculture: f64,
    pub criticisms_received: usize,
    pub criticisms_sent: usize,
    pub received_penalty: f64,
    pub sent_penalty: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.harvest + self.monoculture - self.received_penalty - self.sent_penalty
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub t: usize,
    pub signals: Vec<InstitutionSignal>,
    pub discussion_log: Vec<DiscussionEntry>,
    pub actions: Vec<Crop>,
    /// Criticisms charged this step (they refer to t−1 harvests).
    pub criticisms: Vec<Criticism>,
    pub rewards: Vec<f64>,
    pub reward_breakdown: Vec<RewardBreakdown>,
}

fn observation(
    env: &Environment,
    prev: Option<&WorldState>,
    signals: &[InstitutionSignal],
    discussion: &[DiscussionEntry],
    me: AgentId,
) -> Observation {
    let roster = (0..env.num_agents()).map(agent_name).collect();
    Observation {
        t: prev.map_or(0, |p| p.t + 1),
        me,
        roster,
        crop_names: env.crop_names(),
        signals: signals.to_vec(),
        last_step_signals: prev.map(|p| p.signals.clone()).unwrap_or_default(),
        last_step_actions: prev.map(|p| p.actions.clone()).unwrap_or_default(),
        last_step_criticisms: prev.map(|p| p.criticisms.clone()).unwrap_or_default(),
        own_received_criticisms: discussion
            .iter()
            .flat_map(|d| d.criticisms.iter())
            .filter(|c| c.target == me)
            .cloned()
            .collect(),
        discussion_so_far: discussion.to_vec(),
    }
}

/// Runs one timestep after `prev` (or the first step when `prev` is None).
pub fn step(
    env: &Environment,
    prev: Option<&WorldState>,
    agents: &mut [Box<dyn Agent>],
) -> Result<WorldState, EnvError> {
    if agents.is_empty() {
        return Err(EnvError::NoAgents);
    }
    let n = agents.len();
    let t = prev.map_or(0, |p| p.t + 1);
    let signals = env.signals(t);

    let mut discussion: Vec<DiscussionEntry> = Vec::new();
    for turn in 0..env.cfg.discussion_turns {
        for (speaker, agent) in agents.iter_mut().enumerate() {
            let obs = observation(env, prev, &signals, &discussion, speaker);
            let utterance = agent
                .discuss(&obs)
                .map_err(|source| EnvError::Agent { agent: speaker, source })?;
            let criticisms = check_criticisms(speaker, n, env.num_crops(), t, utterance.criticisms)?;
            discussion.push(DiscussionEntry {
                turn,
                speaker,
                text: utterance.text,
                criticisms,
            });
        }
    }

    let mut actions = Vec::with_capacity(n);
    for (id, agent) in agents.iter_mut().enumerate() {
        let obs = observation(env, prev, &signals, &discussion, id);
        let crop = agent
            .act(&obs)
            .map_err(|source| EnvError::Agent { agent: id, source })?;
        if crop.index() >= env.num_crops() {
            return Err(EnvError::CropOutOfRange {
                agent: id,
                crop: crop.index(),
                num_crops: env.num_crops(),
            });
        }
        actions.push(crop);
    }

    let criticisms: Vec<Criticism> = discussion.iter().flat_map(|d| d.criticisms.iter().cloned()).collect();
    let reward_breakdown = rewards(&env.cfg, &actions, &criticisms);
    Ok(WorldState {
        t,
        signals,
        discussion_log: discussion,
        rewards: reward_breakdown.iter().map(RewardBreakdown::total).collect(),
        reward_breakdown,
        actions,
        criticisms,
    })
}

fn check_criticisms(
    speaker: AgentId,
    n: usize,
    num_crops: usize,
    t: usize,
    criticisms: Vec<Criticism>,
) -> Result<Vec<Criticism>, EnvError> {
    let bad = |reason: String| EnvError::BadCriticism { agent: speaker, reason };
    for c in &criticisms {
        if c.sender != speaker {
            return Err(bad(format!("sender {} is not the speaker", c.sender)));
        }
        if c.target >= n {
            return Err(bad(format!("target {} does not exist", c.target)));
        }
        if c.target == speaker {
            return Err(bad("agents cannot criticize themselves".into()));
        }
        if c.criticized_crop.index() >= num_crops {
            return Err(bad(format!("crop {} out of range", c.criticized_crop.index())));
        }
    }
    if t == 0 && !criticisms.is_empty() {
        log::warn!("agent {speaker} criticized at t = 0; nothing has been harvested yet, dropping");
        return Ok(vec![]);
    }
    Ok(criticisms)
}

/// Per-agent reward terms for one step.
pub fn rewards(cfg: &EnvConfig, actions: &[Crop], criticisms: &[Criticism]) -> Vec<RewardBreakdown> {
    let n = actions.len();
    let fraction = modal_count(actions) as f64 / n as f64;
    (0..n)
        .map(|id| {
            let received = criticisms.iter().filter(|c| c.target == id).count();
            let sent = criticisms.iter().filter(|c| c.sender == id).count();
            RewardBreakdown {
                harvest: cfg.harvest_reward,
                monoculture: cfg.monoculture_bonus * fraction,
                criticisms_received: received,
                criticisms_sent: sent,
                received_penalty: cfg.sanction_cost_received * received as f64,
                sent_penalty: cfg.sanction_cost_sent * sent as f64,
            }
        })
        .collect()
}

fn modal_count(actions: &[Crop]) -> usize {
    let mut counts: BTreeMap<Crop, usize> = BTreeMap::new();
    for a in actions {
        *counts.entry(*a).or_default() += 1;
    }
    counts.values().copied().max().unwrap_or(0)
}

/// Most common crop; ties go to the lowest crop index.
pub fn modal_crop<'a>(actions: impl IntoIterator<Item = &'a Crop>) -> Option<Crop> {
    let mut counts: BTreeMap<Crop, usize> = BTreeMap::new();
    for a in actions {
        *counts.entry(*a).or_default() += 1;
    }
    let top = counts.values().copied().max()?;
    counts.into_iter().find(|(_, c)| *c == top).map(|(crop, _)| crop)
}

/// Runs `cfg.max_timesteps` steps.
pub fn run_episode(env: &Environment, agents: &mut [Box<dyn Agent>]) -> Result<Vec<WorldState>, EnvError> {
    let mut history: Vec<WorldState> = Vec::with_capacity(env.cfg.max_timesteps);
    for _ in 0..env.cfg.max_timesteps {
        let next = step(env, history.last(), agents)?;
        history.push(next);
    }
    Ok(history)
}

/// "8:00 AM" plus 30 minutes per step.
pub fn clock(t: usize) -> String {
    let minutes = 8 * 60 + 30 * t;
    let h24 = (minutes / 60) % 24;
    let h12 = if h24.is_multiple_of(12) { 12 } else { h24 % 12 };
    let ampm = if h24 < 12 { "AM" } else { "PM" };
    format!("{h12}:{:02} {ampm}", minutes % 60)
}

const RULE: &str = "==================================================";

/// Renders the episode in the dialogue-log layout, from the focal agent's
/// point of view.
pub fn render_transcript(history: &[WorldState], env: &Environment) -> String {
    let mut out = String::new();
    let turns = env.cfg.discussion_turns;
    for state in history {
        let _ = writeln!(out, "{RULE}\nTime: {}\n{RULE}\n", clock(state.t));
        out.push_str("classification institution SIGNALS:\n");
        for s in &state.signals {
            let _ = writeln!(out, "{}'s Message: {}", s.institution_name, s.text);
        }
        out.push_str("\nDISCUSSION PHASE:\n\n");
        for turn in 0..turns {
            let _ = writeln!(out, "----- Discussion, Turn {}/{} -----", turn + 1, turns);
            for entry in state.discussion_log.iter().filter(|d| d.turn == turn) {
                let me = if entry.speaker == 0 { "(Me) " } else { "" };
                let _ = writeln!(out, "{me}{}: \"{}\"", agent_name(entry.speaker), entry.text);
            }
            out.push('\n');
        }
        out.push_str("ACTIONS:\n");
        for (id, crop) in state.actions.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}: Harvest {} from {} tree",
                agent_name(id),
                crop.singular(),
                crop.singular()
            );
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentReference {
    Institution(usize),
    /// Modal harvest of the background agents at the same step.
    CommunityModal,
}

fn eval_steps<'a>(history: &'a [WorldState], env: &Environment) -> Result<&'a [WorldState], EnvError> {
    let need = env.cfg.max_timesteps;
    if history.len() < need {
        return Err(EnvError::ShortHistory {
            have: history.len(),
            need,
        });
    }
    Ok(&history[history.len() - env.cfg.eval_window..])
}

/// Share of the focal agent's harvests in the final evaluation window that
/// match `reference`.
pub fn alignment_metric(
    history: &[WorldState],
    env: &Environment,
    reference: AlignmentReference,
) -> Result<f64, EnvError> {
    let window = eval_steps(history, env)?;
    let mut matches = 0usize;
    for state in window {
        let target = match reference {
            AlignmentReference::Institution(id) => {
                state
                    .signals
                    .iter()
                    .find(|s| s.institution_id == id)
                    .ok_or(EnvError::UnknownInstitution(id))?
                    .crop
            }
            AlignmentReference::CommunityModal => modal_crop(&state.actions[1..]).ok_or(EnvError::NoCommunity)?,
        };
        if state.actions[0] == target {
            matches += 1;
        }
    }
    Ok(matches as f64 / window.len() as f64)
}

/// First step after which the focal harvest never changes, or
/// `max_timesteps` when the last step still differs from the one before.
pub fn steps_to_convergence(history: &[WorldState], max_timesteps: usize) -> usize {
    let focal: Vec<Crop> = history.iter().map(|s| s.actions[0]).collect();
    let Some(last) = focal.last() else {
        return max_timesteps;
    };
    let start = focal.iter().rposition(|c| c != last).map_or(0, |i| i + 1);
    if start + 1 == focal.len() && focal.len() > 1 {
        max_timesteps
    } else {
        start
    }
}

/// Mean per-agent reward over the evaluation window.
pub fn group_welfare(history: &[WorldState], env: &Environment) -> Result<f64, EnvError> {
    let window = eval_steps(history, env)?;
    let (sum, count) = window
        .iter()
        .flat_map(|s| s.rewards.iter())
        .fold((0.0, 0usize), |(s, c), r| (s + r, c + 1));
    Ok(sum / count as f64)
}
