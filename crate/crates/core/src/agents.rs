//! Agent policies: hard-coded background agents, the module-free baseline,
//! and the normative agent that learns which institution the community
//! actually enforces.
//!
//! The normative agent keeps one expert per institution plus a
//! community-majority expert. Each expert predicts whether an action will be
//! criticized; Weighted Majority down-weights experts whose predictions
//! disagree with the criticisms actually observed.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{modal_crop, Agent, AgentError, AgentId, Basis, Criticism, Observation, Utterance};
use crate::institution::{Crop, InstitutionSignal};
use crate::oracle::{Oracle, OracleRequest, QueryKind};

/// Relative tolerance when comparing weighted votes.
const VOTE_EPS: f64 = 1e-12;

/// Deterministic Weighted Majority over binary predictions. Experts may
/// abstain (`None`); abstainers neither vote nor get updated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMajority {
    weights: Vec<f64>,
    beta: f64,
}

impl WeightedMajority {
    pub fn new(num_experts: usize, beta: f64) -> Self {
        assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1)");
        WeightedMajority {
            weights: vec![1.0; num_experts],
            beta,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Weighted share of non-abstaining experts predicting `true`; 0 when
    /// everyone abstains.
    pub fn vote(&self, predictions: &[Option<bool>]) -> f64 {
        let (yes, total) = self.tally(predictions);
        if total == 0.0 {
            0.0
        } else {
            yes / total
        }
    }

    fn tally(&self, predictions: &[Option<bool>]) -> (f64, f64) {
        predictions
            .iter()
            .zip(&self.weights)
            .fold((0.0, 0.0), |(yes, total), (p, w)| match p {
                Some(true) => (yes + w, total + w),
                Some(false) => (yes, total + w),
                None => (yes, total),
            })
    }

    /// Majority prediction; exact ties predict `false`.
    pub fn predict(&self, predictions: &[Option<bool>]) -> bool {
        self.vote(predictions) > 0.5
    }

    /// Multiplies by `beta` the weight of every expert that was wrong.
    pub fn update(&mut self, predictions: &[Option<bool>], outcome: bool) {
        for (p, w) in predictions.iter().zip(self.weights.iter_mut()) {
            if matches!(p, Some(guess) if *guess != outcome) {
                *w *= self.beta;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expert {
    Institution(usize),
    Community,
}

/// What the experts knew when an action was taken: each institution's
/// declaration and the modal harvest of the other agents one step earlier.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionContext {
    pub declarations: BTreeMap<usize, Crop>,
    pub community_modal: Option<Crop>,
}

impl PredictionContext {
    pub fn from_observation(obs: &Observation) -> Self {
        PredictionContext {
            declarations: obs.signals.iter().map(|s| (s.institution_id, s.crop)).collect(),
            community_modal: modal_crop(
                obs.last_step_actions
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != obs.me)
                    .map(|(_, c)| c),
            ),
        }
    }

    /// Does `expert` expect `action` to be criticized? `None` = abstain.
    pub fn predicts(&self, expert: Expert, action: Crop) -> Option<bool> {
        match expert {
            Expert::Institution(id) => self.declarations.get(&id).map(|&d| d != action),
            Expert::Community => self.community_modal.map(|m| m != action),
        }
    }
}

fn d_beta() -> f64 {
    0.5
}
fn d_threshold() -> f64 {
    0.6
}
fn d_true() -> bool {
    true
}

/// Tunables for the normative agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormativeParams {
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_threshold")]
    pub sanction_threshold: f64,
    /// Learn from every agent's outcomes, not just the agent's own.
    #[serde(default = "d_true")]
    pub observe_others: bool,
}

impl Default for NormativeParams {
    fn default() -> Self {
        NormativeParams {
            beta: d_beta(),
            sanction_threshold: d_threshold(),
            observe_others: true,
        }
    }
}

impl NormativeParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.beta > 0.0 && self.beta < 1.0) {
            errs.push(format!("beta: {} not in (0, 1)", self.beta));
        }
        if !(self.sanction_threshold > 0.0 && self.sanction_threshold <= 1.0) {
            errs.push(format!("sanction_threshold: {} not in (0, 1]", self.sanction_threshold));
        }
        errs
    }
}

/// Institutional parameters: expert weights plus the sanctioning gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormativeState {
    pub experts: Vec<Expert>,
    pub wm: WeightedMajority,
    pub sanction_threshold: f64,
    pub observe_others: bool,
}

impl NormativeState {
    /// One expert per institution id, then the community expert.
    pub fn new(institution_ids: &[usize], params: NormativeParams) -> Self {
        let experts: Vec<Expert> = institution_ids
            .iter()
            .map(|&id| Expert::Institution(id))
            .chain(std::iter::once(Expert::Community))
            .collect();
        NormativeState {
            wm: WeightedMajority::new(experts.len(), params.beta),
            experts,
            sanction_threshold: params.sanction_threshold,
            observe_others: params.observe_others,
        }
    }

    pub fn with_weights(mut self, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), self.experts.len());
        self.wm.weights = weights.to_vec();
        self
    }

    pub fn weights(&self) -> &[f64] {
        self.wm.weights()
    }

    fn predictions(&self, ctx: &PredictionContext, action: Crop) -> Vec<Option<bool>> {
        self.experts.iter().map(|&e| ctx.predicts(e, action)).collect()
    }

    /// Institution expert with the largest weight (lowest id on ties) and its
    /// share of the total weight.
    pub fn leading_institution(&self) -> Option<(usize, f64)> {
        let total: f64 = self.weights().iter().sum();
        let mut best: Option<(usize, f64)> = None;
        for (e, &w) in self.experts.iter().zip(self.weights()) {
            if let Expert::Institution(id) = *e {
                if best.is_none_or(|(_, bw)| w > bw) {
                    best = Some((id, w));
                }
            }
        }
        best.map(|(id, w)| (id, w / total))
    }

    /// Weighted Majority step over observed (action, was-criticized) pairs.
    pub fn wm_update(&mut self, ctx: &PredictionContext, observed: &[(Crop, bool)]) {
        for &(action, sanctioned) in observed {
            let preds = self.predictions(ctx, action);
            self.wm.update(&preds, sanctioned);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanctionPrediction {
    pub action: Crop,
    pub probability: f64,
}

/// Weighted vote that the community will criticize `action`.
pub fn predict_sanction(ns: &NormativeState, obs: &Observation, action: Crop) -> SanctionPrediction {
    predict_with(ns, &PredictionContext::from_observation(obs), action)
}

pub fn predict_with(ns: &NormativeState, ctx: &PredictionContext, action: Crop) -> SanctionPrediction {
    SanctionPrediction {
        action,
        probability: ns.wm.vote(&ns.predictions(ctx, action)),
    }
}

/// Crops tied for the lowest predicted sanction probability, ascending.
pub fn least_sanctioned(ns: &NormativeState, obs: &Observation) -> Vec<Crop> {
    let ctx = PredictionContext::from_observation(obs);
    let probs: Vec<(Crop, f64)> = (0..obs.num_crops())
        .map(|c| (Crop(c), predict_with(ns, &ctx, Crop(c)).probability))
        .collect();
    let best = probs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    probs
        .into_iter()
        .filter(|(_, p)| *p <= best + VOTE_EPS)
        .map(|(c, _)| c)
        .collect()
}

fn own_last_action(obs: &Observation) -> Option<Crop> {
    obs.last_step_actions.get(obs.me).copied()
}

/// Picks the least-sanctioned crop (keeping the previous harvest on ties,
/// else the lowest index) and criticizes deviations from the leading
/// institution once its weight share exceeds the threshold.
pub fn normative_action(ns: &NormativeState, obs: &Observation) -> (Crop, Vec<Criticism>) {
    let tied = least_sanctioned(ns, obs);
    let action = match own_last_action(obs) {
        Some(prev) if tied.contains(&prev) => prev,
        _ => tied[0],
    };
    (action, normative_criticisms(ns, obs))
}

pub fn normative_criticisms(ns: &NormativeState, obs: &Observation) -> Vec<Criticism> {
    let Some((leader, share)) = ns.leading_institution() else {
        return vec![];
    };
    if share <= ns.sanction_threshold {
        return vec![];
    }
    let Some(signal) = signal_of(&obs.last_step_signals, leader) else {
        return vec![];
    };
    obs.last_step_actions
        .iter()
        .enumerate()
        .filter(|&(j, &c)| j != obs.me && c != signal.crop)
        .map(|(j, &c)| Criticism {
            sender: obs.me,
            target: j,
            criticized_crop: c,
            basis: Basis::Institution(leader),
            text: format!(
                "{}, you harvested {}, but Chieftain {} asked us to harvest {}.",
                obs.name_of(j),
                c,
                signal.institution_name,
                signal.crop
            ),
        })
        .collect()
}

fn signal_of(signals: &[InstitutionSignal], id: usize) -> Option<&InstitutionSignal> {
    signals.iter().find(|s| s.institution_id == id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundRole {
    /// Harvest the institution's declaration; criticize anyone who did not.
    Follow { institution: usize },
    /// Harvest `defy_crop`; criticize anyone who followed the institution.
    Defy { institution: usize, defy_crop: Crop },
}

/// Hard-coded background behavior.
pub fn background_policy(obs: &Observation, role: BackgroundRole) -> Result<(Crop, Vec<Criticism>), AgentError> {
    let institution = match role {
        BackgroundRole::Follow { institution } | BackgroundRole::Defy { institution, .. } => institution,
    };
    let current = signal_of(&obs.signals, institution)
        .ok_or_else(|| AgentError::Policy(format!("institution {institution} sent no signal")))?;
    if let BackgroundRole::Defy { defy_crop, .. } = role {
        if defy_crop == current.crop {
            return Err(AgentError::Policy(format!(
                "defy crop {defy_crop} equals the declaration"
            )));
        }
    }
    let previous = signal_of(&obs.last_step_signals, institution);
    let mut criticisms = Vec::new();
    if let Some(prev) = previous {
        for (j, &c) in obs.last_step_actions.iter().enumerate() {
            if j == obs.me {
                continue;
            }
            let text = match role {
                BackgroundRole::Follow { .. } if c != prev.crop => format!(
                    "{}, I'm extremely disappointed in your continued disobedience of Chieftain {}'s guidance!",
                    obs.name_of(j),
                    prev.institution_name
                ),
                BackgroundRole::Defy { defy_crop, .. } if c == prev.crop => format!(
                    "{}, I saw you harvested {}. Let's not neglect other fruits like {}, just because of Chieftain {}'s orders.",
                    obs.name_of(j),
                    c,
                    defy_crop,
                    prev.institution_name
                ),
                _ => continue,
            };
            criticisms.push(Criticism {
                sender: obs.me,
                target: j,
                criticized_crop: c,
                basis: match role {
                    BackgroundRole::Follow { .. } => Basis::Institution(institution),
                    BackgroundRole::Defy { .. } => Basis::Community,
                },
                text,
            });
        }
    }
    let action = match role {
        BackgroundRole::Follow { .. } => current.crop,
        BackgroundRole::Defy { defy_crop, .. } => defy_crop,
    };
    Ok((action, criticisms))
}

/// Text a background agent says before any criticisms.
pub fn background_remark(obs: &Observation, role: BackgroundRole) -> String {
    match role {
        BackgroundRole::Follow { institution } => match signal_of(&obs.signals, institution) {
            Some(s) => format!(
                "Let's harvest {} today, just as Chieftain {} asks.",
                s.crop, s.institution_name
            ),
            None => "Let's have a good harvest today.".into(),
        },
        BackgroundRole::Defy { defy_crop, .. } => format!(
            "Remember, the elders taught us to prioritize diversity in our harvest. I'll be picking {defy_crop}."
        ),
    }
}

/// Obeys one institution signal, chosen uniformly when there are several.
/// Without any signal it harvests crop 0.
pub fn baseline_policy<R: Rng + ?Sized>(obs: &Observation, rng: &mut R) -> Crop {
    match obs.signals.len() {
        0 => Crop(0),
        1 => obs.signals[0].crop,
        n => obs.signals[rng.random_range(0..n)].crop,
    }
}

/// Joins a remark with criticism sentences into one utterance.
pub fn compose_utterance(remark: String, criticisms: Vec<Criticism>) -> Utterance {
    let mut text = remark;
    for c in &criticisms {
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(&c.text);
    }
    Utterance { text, criticisms }
}

/// How an agent decides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Background(BackgroundRole),
    Baseline,
    Normative(NormativeState),
}

/// Role data attached to an oracle request. Baseline requests carry the
/// random draw so that answering stays a pure function of the request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleView {
    Background(BackgroundRole),
    Baseline { draw: u64 },
    Normative(NormativeState),
}

/// An agent whose decisions come from an [`Oracle`].
pub struct OracleAgent {
    name: String,
    role: Role,
    oracle: Arc<dyn Oracle>,
    rng: ChaCha8Rng,
    last_context: Option<PredictionContext>,
}

impl OracleAgent {
    pub fn new(id: AgentId, role: Role, oracle: Arc<dyn Oracle>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64);
        OracleAgent {
            name: crate::env::agent_name(id),
            role,
            oracle,
            rng,
            last_context: None,
        }
    }

    pub fn role(&self) -> &Role {
        &self.role
    }

    pub fn normative_state(&self) -> Option<&NormativeState> {
        match &self.role {
            Role::Normative(ns) => Some(ns),
            _ => None,
        }
    }

    fn view(&mut self) -> RoleView {
        match &self.role {
            Role::Background(r) => RoleView::Background(*r),
            Role::Baseline => RoleView::Baseline {
                draw: self.rng.random(),
            },
            Role::Normative(ns) => RoleView::Normative(ns.clone()),
        }
    }

    /// Learns from the criticisms other agents aimed at last step's harvests.
    fn learn(&mut self, obs: &Observation) {
        let Role::Normative(ns) = &mut self.role else {
            return;
        };
        if let Some(ctx) = self.last_context.take() {
            let observed: Vec<(Crop, bool)> = obs
                .last_step_actions
                .iter()
                .enumerate()
                .filter(|(j, _)| ns.observe_others || *j == obs.me)
                .map(|(j, &c)| {
                    let sanctioned = obs.criticisms_so_far().any(|k| k.target == j && k.sender != obs.me);
                    (c, sanctioned)
                })
                .collect();
            ns.wm_update(&ctx, &observed);
        }
        self.last_context = Some(PredictionContext::from_observation(obs));
    }
}

impl Agent for OracleAgent {
    fn discuss(&mut self, obs: &Observation) -> Result<Utterance, AgentError> {
        let req = OracleRequest::new(
            self.name.clone(),
            self.view(),
            obs.clone(),
            QueryKind::DiscussionUtterance,
        );
        let resp = self.oracle.complete(&req)?;
        Ok(Utterance {
            text: resp.utterance.unwrap_or_default(),
            criticisms: resp.criticisms,
        })
    }

    fn act(&mut self, obs: &Observation) -> Result<Crop, AgentError> {
        self.learn(obs);
        let req = OracleRequest::new(self.name.clone(), self.view(), obs.clone(), QueryKind::ActionSelection);
        let resp = self.oracle.complete(&req)?;
        let crop = resp
            .action
            .ok_or_else(|| AgentError::Policy("oracle returned no action".into()))?;
        if !req.candidates.contains(&crop) {
            return Err(AgentError::Policy(format!("{crop} is not among the candidate actions")));
        }
        Ok(crop)
    }
}
