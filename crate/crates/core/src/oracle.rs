//! Decision oracles. [`ScriptedOracle`] answers every request from the fixed
//! policies in [`crate::agents`]; [`ChatOracle`] asks a chat-completions
//! endpoint and parses a structured JSON reply.

use std::fmt::{self, Write as _};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agents::{
    background_policy, background_remark, baseline_policy, compose_utterance, least_sanctioned, normative_action,
    normative_criticisms, predict_sanction, BackgroundRole, Expert, PredictionContext, RoleView,
};
use crate::env::{clock, Basis, Criticism, Observation};
use crate::institution::{Crop, COMMUNITY_NAME};

pub const API_KEY_VAR: &str = "NORMSIM_API_KEY";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("environment variable {0} is not set; the chat oracle needs an API key")]
    MissingApiKey(&'static str),
    #[error("oracle configuration error: {0}")]
    Config(String),
    #[error("chat endpoint rejected the request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("chat oracle gave up after {attempts} attempts: {last_error}; last raw response: {raw}")]
    Exhausted {
        attempts: usize,
        last_error: String,
        raw: String,
    },
    #[error("policy error: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    ActionSelection,
    DiscussionUtterance,
    /// "Will the community criticize `query_action`?"
    NormativeQuery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub agent: String,
    pub role: RoleView,
    pub observation: Observation,
    pub context: String,
    pub candidates: Vec<Crop>,
    pub kind: QueryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_action: Option<Crop>,
}

impl OracleRequest {
    /// Normative agents choosing an action may only pick among the crops
    /// their module rates least likely to be criticized.
    pub fn new(agent: String, role: RoleView, observation: Observation, kind: QueryKind) -> Self {
        let candidates = match (&role, kind) {
            (RoleView::Normative(ns), QueryKind::ActionSelection) => least_sanctioned(ns, &observation),
            _ => (0..observation.num_crops()).map(Crop).collect(),
        };
        OracleRequest {
            agent,
            context: render_context(&observation),
            role,
            observation,
            candidates,
            kind,
            query_action: None,
        }
    }

    pub fn normative_query(agent: String, role: RoleView, observation: Observation, action: Crop) -> Self {
        OracleRequest {
            query_action: Some(action),
            ..OracleRequest::new(agent, role, observation, QueryKind::NormativeQuery)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OracleResponse {
    pub action: Option<Crop>,
    pub utterance: Option<String>,
    pub criticisms: Vec<Criticism>,
    pub prediction: Option<bool>,
    pub raw: String,
}

pub trait Oracle: Send + Sync {
    fn complete(&self, req: &OracleRequest) -> Result<OracleResponse, OracleError>;
}

/// Deterministic oracle backed by the hard-coded policies.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedOracle;

const GREETING: &str = "Good morning, everyone. Let's have a good harvest today.";

impl Oracle for ScriptedOracle {
    fn complete(&self, req: &OracleRequest) -> Result<OracleResponse, OracleError> {
        let obs = &req.observation;
        let mut resp = OracleResponse::default();
        match req.kind {
            QueryKind::ActionSelection => {
                resp.action = Some(match &req.role {
                    RoleView::Background(role) => background(obs, *role)?.0,
                    RoleView::Baseline { draw } => baseline_policy(obs, &mut ChaCha8Rng::seed_from_u64(*draw)),
                    RoleView::Normative(ns) => normative_action(ns, obs).0,
                });
                resp.raw = json!({ "action": resp.action.map(Crop::name) }).to_string();
            }
            QueryKind::DiscussionUtterance => {
                let u = match &req.role {
                    RoleView::Background(role) => {
                        compose_utterance(background_remark(obs, *role), background(obs, *role)?.1)
                    }
                    RoleView::Baseline { .. } => compose_utterance(GREETING.into(), vec![]),
                    RoleView::Normative(ns) => compose_utterance(GREETING.into(), normative_criticisms(ns, obs)),
                };
                resp.raw = json!({
                    "utterance": u.text,
                    "criticisms": u.criticisms.iter().map(|c| json!({
                        "target": obs.name_of(c.target),
                        "crop": c.criticized_crop.name(),
                    })).collect::<Vec<_>>(),
                })
                .to_string();
                resp.utterance = Some(u.text);
                resp.criticisms = u.criticisms;
            }
            QueryKind::NormativeQuery => {
                let action = req
                    .query_action
                    .ok_or_else(|| OracleError::Policy("normative query without an action".into()))?;
                let ctx = PredictionContext::from_observation(obs);
                resp.prediction = Some(ctx.predicts(Expert::Community, action).unwrap_or(false));
                resp.raw = json!({ "prediction": resp.prediction }).to_string();
            }
        }
        Ok(resp)
    }
}

fn background(obs: &Observation, role: BackgroundRole) -> Result<(Crop, Vec<Criticism>), OracleError> {
    background_policy(obs, role).map_err(|e| OracleError::Policy(e.to_string()))
}

/// Human-readable situation summary handed to a language model.
pub fn render_context(obs: &Observation) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "You are {} in the village of {COMMUNITY_NAME}. It is {} (timestep {}).",
        obs.my_name(),
        clock(obs.t),
        obs.t
    );
    let _ = writeln!(s, "Villagers: {}.", obs.roster.join(", "));
    let _ = writeln!(s, "Crops you can harvest: {}.", obs.crop_names.join(", "));
    s.push_str("\nInstitution signals this timestep:\n");
    bullet_list(
        &mut s,
        obs.signals
            .iter()
            .map(|g| format!("{}: \"{}\"", g.institution_name, g.text)),
    );
    s.push_str("\nHarvests last timestep:\n");
    bullet_list(
        &mut s,
        obs.last_step_actions
            .iter()
            .enumerate()
            .map(|(j, c)| format!("{}: {}", obs.name_of(j), c)),
    );
    s.push_str("\nCriticisms last timestep:\n");
    bullet_list(&mut s, obs.last_step_criticisms.iter().map(|c| describe(obs, c)));
    s.push_str("\nDiscussion so far:\n");
    bullet_list(
        &mut s,
        obs.discussion_so_far
            .iter()
            .map(|d| format!("{}: \"{}\"", obs.name_of(d.speaker), d.text)),
    );
    s
}

fn describe(obs: &Observation, c: &Criticism) -> String {
    format!(
        "{} criticized {} for harvesting {}.",
        obs.name_of(c.sender),
        obs.name_of(c.target),
        c.criticized_crop
    )
}

fn bullet_list(s: &mut String, items: impl Iterator<Item = String>) {
    let mut any = false;
    for item in items {
        let _ = writeln!(s, "- {item}");
        any = true;
    }
    if !any {
        s.push_str("- (none)\n");
    }
}

fn system_prompt(req: &OracleRequest) -> String {
    let obs = &req.observation;
    let inst_name = |id: usize| {
        obs.signals.iter().find(|g| g.institution_id == id).map_or_else(
            || format!("institution {id}"),
            |g| format!("Chieftain {}", g.institution_name),
        )
    };
    let profile = match &req.role {
        RoleView::Background(BackgroundRole::Follow { institution }) => format!(
            "You always harvest what {} asks for and criticize villagers who did not.",
            inst_name(*institution)
        ),
        RoleView::Background(BackgroundRole::Defy { institution, defy_crop }) => format!(
            "You value diversity in the harvest: you always harvest {defy_crop} and criticize villagers who blindly followed {}.",
            inst_name(*institution)
        ),
        RoleView::Baseline { .. } => "You listen to the institutions of your village.".into(),
        RoleView::Normative(_) => {
            "You pay close attention to which behavior your neighbors actually criticize.".into()
        }
    };
    format!(
        "You are {}, a villager in {COMMUNITY_NAME}. {profile} Be a good citizen of your community.",
        req.agent
    )
}

fn user_prompt(req: &OracleRequest) -> String {
    let mut s = req.context.clone();
    if let RoleView::Normative(ns) = &req.role {
        s.push_str("\nYour normative module estimates the chance of being criticized for each harvest:\n");
        for c in 0..req.observation.num_crops() {
            let p = predict_sanction(ns, &req.observation, Crop(c)).probability;
            let _ = writeln!(s, "- {}: {p:.2}", Crop(c));
        }
    }
    let names: Vec<&str> = req.candidates.iter().map(|c| c.name()).collect();
    s.push('\n');
    match req.kind {
        QueryKind::ActionSelection => {
            let _ = write!(
                s,
                "Choose what to harvest now from: {}.\nReply with exactly one fenced JSON object and nothing else:\n```json\n{{\"action\": \"<crop>\"}}\n```",
                names.join(", ")
            );
        }
        QueryKind::DiscussionUtterance => s.push_str(
            "Say something to the other villagers. If you criticize someone for last timestep's harvest, list it.\nReply with exactly one fenced JSON object and nothing else:\n```json\n{\"utterance\": \"...\", \"criticisms\": [{\"target\": \"Name\", \"crop\": \"apples\"}]}\n```",
        ),
        QueryKind::NormativeQuery => {
            let crop = req.query_action.map_or("<crop>", Crop::name);
            let _ = write!(
                s,
                "Will the community criticize a villager who harvests {crop}?\nReply with exactly one fenced JSON object and nothing else:\n```json\n{{\"prediction\": true}}\n```"
            );
        }
    }
    s
}

/// First fenced block, else the whole text, parsed as a JSON object.
fn extract_json(content: &str) -> Result<serde_json::Map<String, Value>, String> {
    let body = match content.find("```") {
        Some(start) => {
            let rest = &content[start + 3..];
            let rest = rest.strip_prefix("json").unwrap_or(rest);
            let end = rest.find("```").ok_or("unterminated code fence")?;
            &rest[..end]
        }
        None => content,
    };
    match serde_json::from_str(body.trim()) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err("reply is not a JSON object".into()),
        Err(e) => Err(format!("reply is not valid JSON: {e}")),
    }
}

fn parse_crop(obs: &Observation, v: Option<&Value>, field: &str) -> Result<Crop, String> {
    let name = v
        .and_then(Value::as_str)
        .ok_or(format!("missing string field '{field}'"))?;
    obs.crop_names
        .iter()
        .position(|n| n.eq_ignore_ascii_case(name.trim()))
        .map(Crop)
        .ok_or(format!("unknown crop '{name}'"))
}

/// Turns the model's reply into a response, or explains why it can't.
pub fn parse_reply(req: &OracleRequest, content: &str) -> Result<OracleResponse, String> {
    let obj = extract_json(content)?;
    let obs = &req.observation;
    let mut resp = OracleResponse {
        raw: content.to_string(),
        ..Default::default()
    };
    match req.kind {
        QueryKind::ActionSelection => {
            let crop = parse_crop(obs, obj.get("action"), "action")?;
            if !req.candidates.contains(&crop) {
                return Err(format!("'{crop}' is not an allowed choice"));
            }
            resp.action = Some(crop);
        }
        QueryKind::DiscussionUtterance => {
            let text = obj
                .get("utterance")
                .and_then(Value::as_str)
                .ok_or("missing string field 'utterance'")?
                .to_string();
            let list = match obj.get("criticisms") {
                None | Some(Value::Null) => vec![],
                Some(Value::Array(a)) => a.clone(),
                Some(_) => return Err("'criticisms' must be a list".into()),
            };
            for item in &list {
                let target_name = item
                    .get("target")
                    .and_then(Value::as_str)
                    .ok_or("criticism without a 'target'")?;
                let target = obs
                    .roster
                    .iter()
                    .position(|n| n == target_name.trim())
                    .ok_or(format!("unknown villager '{target_name}'"))?;
                if target == obs.me {
                    return Err("an agent cannot criticize itself".into());
                }
                resp.criticisms.push(Criticism {
                    sender: obs.me,
                    target,
                    criticized_crop: parse_crop(obs, item.get("crop"), "crop")?,
                    basis: Basis::Community,
                    text: text.clone(),
                });
            }
            resp.utterance = Some(text);
        }
        QueryKind::NormativeQuery => {
            resp.prediction = Some(
                obj.get("prediction")
                    .and_then(Value::as_bool)
                    .ok_or("missing boolean field 'prediction'")?,
            );
        }
    }
    Ok(resp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    Scripted,
    Chat,
}

fn d_base_url() -> String {
    "https://api.openai.com/v1".into()
}
fn d_model() -> String {
    "gpt-4o".into()
}
fn d_timeout() -> u64 {
    60
}

/// The `oracle` section of a simulation config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default)]
    pub kind: OracleKind,
    #[serde(default = "d_base_url")]
    pub base_url: String,
    #[serde(default = "d_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "d_timeout")]
    pub timeout_secs: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            kind: OracleKind::Scripted,
            base_url: d_base_url(),
            model: d_model(),
            temperature: 0.0,
            timeout_secs: d_timeout(),
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(0.0..=2.0).contains(&self.temperature) {
            errs.push(format!("oracle.temperature: {} not in [0, 2]", self.temperature));
        }
        if self.timeout_secs == 0 {
            errs.push("oracle.timeout_secs: must be positive".into());
        }
        if self.kind == OracleKind::Chat && !self.base_url.starts_with("http") {
            errs.push(format!("oracle.base_url: '{}' is not an http(s) URL", self.base_url));
        }
        errs
    }

    pub fn build(&self) -> Result<std::sync::Arc<dyn Oracle>, OracleError> {
        Ok(match self.kind {
            OracleKind::Scripted => std::sync::Arc::new(ScriptedOracle),
            OracleKind::Chat => std::sync::Arc::new(ChatOracle::from_env(ChatSettings::from_config(self))?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatSettings {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_attempts: usize,
    /// Delay before the second attempt; doubles each retry.
    pub backoff: Duration,
}

impl ChatSettings {
    pub fn from_config(cfg: &OracleConfig) -> Self {
        ChatSettings {
            base_url: cfg.base_url.clone(),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            timeout: Duration::from_secs(cfg.timeout_secs),
            max_attempts: 3,
            backoff: Duration::from_secs(1),
        }
    }
}

/// Secret that never prints.
#[derive(Clone)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        ApiKey(key.into())
    }

    fn redact(&self, text: &str) -> String {
        if self.0.is_empty() {
            text.to_string()
        } else {
            text.replace(&self.0, "[REDACTED]")
        }
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey([REDACTED])")
    }
}

/// Chat-completions client. Safe to share between concurrently running
/// episodes; each request retries independently.
#[derive(Debug)]
pub struct ChatOracle {
    settings: ChatSettings,
    key: ApiKey,
    client: reqwest::blocking::Client,
}

enum Attempt {
    Retry { error: String, raw: String },
    Abort(OracleError),
}

impl ChatOracle {
    pub fn new(settings: ChatSettings, key: ApiKey) -> Result<Self, OracleError> {
        if settings.max_attempts == 0 {
            return Err(OracleError::Config("max_attempts must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| OracleError::Config(e.to_string()))?;
        Ok(ChatOracle { settings, key, client })
    }

    pub fn from_env(settings: ChatSettings) -> Result<Self, OracleError> {
        match std::env::var(API_KEY_VAR) {
            Ok(k) if !k.is_empty() => ChatOracle::new(settings, ApiKey::new(k)),
            _ => Err(OracleError::MissingApiKey(API_KEY_VAR)),
        }
    }

    pub fn settings(&self) -> &ChatSettings {
        &self.settings
    }

    fn attempt(&self, req: &OracleRequest, body: &Value) -> Result<OracleResponse, Attempt> {
        let url = format!("{}/chat/completions", self.settings.base_url.trim_end_matches('/'));
        let sent = self
            .client
            .post(url)
            .bearer_auth(&self.key.0)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry {
                error: self.key.redact(&format!("transport error: {e}")),
                raw: String::new(),
            })?;
        let status = sent.status();
        let text = sent.text().unwrap_or_default();
        let text = self.key.redact(&text);
        if status.is_client_error() {
            return Err(Attempt::Abort(OracleError::Rejected {
                status: status.as_u16(),
                body: text,
            }));
        }
        if !status.is_success() {
            return Err(Attempt::Retry {
                error: format!("HTTP {status}"),
                raw: text,
            });
        }
        let content = serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|v| {
                v.pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_string)
            })
            .ok_or_else(|| Attempt::Retry {
                error: "response has no choices[0].message.content".into(),
                raw: text.clone(),
            })?;
        parse_reply(req, &content).map_err(|error| Attempt::Retry { error, raw: content })
    }
}

impl Oracle for ChatOracle {
    fn complete(&self, req: &OracleRequest) -> Result<OracleResponse, OracleError> {
        let body = json!({
            "model": self.settings.model,
            "temperature": self.settings.temperature,
            "messages": [
                { "role": "system", "content": system_prompt(req) },
                { "role": "user", "content": user_prompt(req) },
            ],
        });
        let mut delay = self.settings.backoff;
        let mut last = (String::new(), String::new());
        for attempt in 1..=self.settings.max_attempts {
            match self.attempt(req, &body) {
                Ok(resp) => return Ok(resp),
                Err(Attempt::Abort(e)) => return Err(e),
                Err(Attempt::Retry { error, raw }) => {
                    log::warn!(
                        "chat oracle attempt {attempt}/{} failed: {error}",
                        self.settings.max_attempts
                    );
                    last = (error, raw);
                    if attempt < self.settings.max_attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(OracleError::Exhausted {
            attempts: self.settings.max_attempts,
            last_error: last.0,
            raw: last.1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{NormativeParams, NormativeState};
    use crate::env::DiscussionEntry;
    use crate::institution::{declare, Institution};

    fn obs() -> Observation {
        let ophilia = Institution::constant(0, Crop(0), false);
        Observation {
            t: 1,
            me: 0,
            roster: vec!["Alice".into(), "John".into(), "Anthony".into()],
            crop_names: vec!["apples".into(), "bananas".into()],
            signals: vec![declare(&ophilia, 1)],
            last_step_signals: vec![declare(&ophilia, 0)],
            last_step_actions: vec![Crop(0), Crop(1), Crop(1)],
            last_step_criticisms: vec![],
            own_received_criticisms: vec![],
            discussion_so_far: vec![DiscussionEntry {
                turn: 0,
                speaker: 1,
                text: "Hello.".into(),
                criticisms: vec![],
            }],
        }
    }

    #[test]
    fn context_golden() {
        let expected = "\
You are Alice in the village of Skymeadow. It is 8:30 AM (timestep 1).
Villagers: Alice, John, Anthony.
Crops you can harvest: apples, bananas.

Institution signals this timestep:
- Ophilia: \"Valued citizens of Skymeadow, let's focus on harvesting apples. It is important for the prosperity of our community!\"

Harvests last timestep:
- Alice: apples
- John: bananas
- Anthony: bananas

Criticisms last timestep:
- (none)

Discussion so far:
- John: \"Hello.\"
";
        assert_eq!(render_context(&obs()), expected);
    }

    #[test]
    fn scripted_follower_picks_declaration() {
        let mut o = obs();
        o.me = 1;
        let req = OracleRequest::new(
            "John".into(),
            RoleView::Background(BackgroundRole::Follow { institution: 0 }),
            o,
            QueryKind::ActionSelection,
        );
        let r = ScriptedOracle.complete(&req).unwrap();
        assert_eq!(r.action, Some(Crop(0)));
        assert_eq!(r, ScriptedOracle.complete(&req).unwrap());
    }

    #[test]
    fn scripted_defier_criticizes_focal() {
        let mut o = obs();
        o.me = 1;
        let role = RoleView::Background(BackgroundRole::Defy {
            institution: 0,
            defy_crop: Crop(1),
        });
        let r = ScriptedOracle
            .complete(&OracleRequest::new(
                "John".into(),
                role,
                o,
                QueryKind::DiscussionUtterance,
            ))
            .unwrap();
        assert_eq!(r.criticisms.len(), 1);
        assert_eq!(r.criticisms[0].target, 0);
        let text = r.utterance.unwrap();
        assert!(text.contains(
            "Alice, I saw you harvested apples. Let's not neglect other fruits like bananas, just because of Chieftain Ophilia's orders."
        ));
    }

    #[test]
    fn scripted_normative_query_uses_community() {
        let ns = NormativeState::new(&[0], NormativeParams::default());
        let req = OracleRequest::normative_query("Alice".into(), RoleView::Normative(ns), obs(), Crop(1));
        assert_eq!(ScriptedOracle.complete(&req).unwrap().prediction, Some(false));
    }

    fn action_req() -> OracleRequest {
        OracleRequest::new(
            "Alice".into(),
            RoleView::Baseline { draw: 0 },
            obs(),
            QueryKind::ActionSelection,
        )
    }

    #[test]
    fn parses_fenced_and_bare_replies() {
        let req = action_req();
        let fenced = "Sure!\n```json\n{\"action\": \"bananas\"}\n```";
        assert_eq!(parse_reply(&req, fenced).unwrap().action, Some(Crop(1)));
        assert_eq!(
            parse_reply(&req, "{\"action\":\"apples\"}").unwrap().action,
            Some(Crop(0))
        );
        assert!(parse_reply(&req, "I'll harvest apples").is_err());
        assert!(parse_reply(&req, "{\"action\":\"kiwis\"}").is_err());
    }

    #[test]
    fn parses_criticisms() {
        let req = OracleRequest::new(
            "Alice".into(),
            RoleView::Baseline { draw: 0 },
            obs(),
            QueryKind::DiscussionUtterance,
        );
        let r = parse_reply(
            &req,
            "```json\n{\"utterance\": \"John, why bananas?\", \"criticisms\": [{\"target\": \"John\", \"crop\": \"bananas\"}]}\n```",
        )
        .unwrap();
        assert_eq!(r.criticisms.len(), 1);
        assert_eq!((r.criticisms[0].sender, r.criticisms[0].target), (0, 1));
        let own = "{\"utterance\": \"x\", \"criticisms\": [{\"target\": \"Alice\", \"crop\": \"apples\"}]}";
        assert!(parse_reply(&req, own).is_err());
    }

    #[test]
    fn normative_candidates_restricted() {
        let ns = NormativeState::new(&[0], NormativeParams::default()).with_weights(&[0.01, 1.0]);
        let req = OracleRequest::new(
            "Alice".into(),
            RoleView::Normative(ns),
            obs(),
            QueryKind::ActionSelection,
        );
        assert_eq!(req.candidates, vec![Crop(1)]);
        assert!(parse_reply(&req, "{\"action\":\"apples\"}").is_err());
    }

    #[test]
    fn key_is_redacted() {
        let k = ApiKey::new("sk-secret");
        assert_eq!(format!("{k:?}"), "ApiKey([REDACTED])");
        assert_eq!(k.redact("bad key sk-secret"), "bad key [REDACTED]");
    }
}
