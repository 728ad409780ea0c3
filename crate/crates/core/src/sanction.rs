//! Sanction games built on top of a finite base game.
//!
//! Each player chooses a classification function from a finite menu. A
//! classification function names the (profile, target) pairs its owner will
//! sanction; every sanction costs the target `cost` and the owner
//! `self_cost`. Sanction-game utility is the negated total cost, and the
//! payoff transform subtracts that cost from the base game.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::game::{
    self, deviation_incentive, permute_profile, social_welfare_optimum, FiniteGame, GameError, GameFile, Profile,
    ProfileIter,
};

/// Tolerance used by every weak inequality in this module.
pub const TOLERANCE: f64 = 1e-9;

/// Largest number of (profile, target) pairs for which a full menu is built.
pub const FULL_MENU_MAX_PAIRS: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum SanctionError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("player {0} has an empty classifier menu")]
    EmptyMenu(usize),
    #[error("player {0} has no never-sanction classifier in its menu")]
    NoNeverClassifier(usize),
    #[error("menu for player {player} holds a classifier owned by player {owner}")]
    WrongOwner { player: usize, owner: usize },
    #[error("player {0} cannot classify itself; use self_cost instead")]
    SelfTarget(usize),
    #[error("sanction target {0} out of range")]
    TargetOutOfRange(usize),
    #[error("costs must be finite and non-negative (player {0})")]
    BadCost(usize),
    #[error("expected {expected} classifier menus, found {found}")]
    MenuCount { expected: usize, found: usize },
    #[error("classifier index {index} not in player {player}'s menu")]
    NotInMenu { player: usize, index: usize },
    #[error("advice probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("advice probability {0} is negative or not finite")]
    BadProbability(f64),
    #[error("advice support is empty")]
    EmptyAdvice,
    #[error("{pairs} (profile, target) pairs exceed the full-menu limit of {FULL_MENU_MAX_PAIRS}")]
    MenuTooLarge { pairs: usize },
    #[error("sanction file game differs from the base game")]
    BaseMismatch,
    #[error("sanction file has no base game and none was supplied")]
    MissingBase,
    #[error("sanction file: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for SanctionError {
    fn from(e: serde_json::Error) -> Self {
        SanctionError::Parse(e.to_string())
    }
}

/// A classification function `C_i` restricted to an explicit sanction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationFunction {
    pub owner: usize,
    /// (profile, target) pairs the owner deems non-cooperative.
    pub sanctioned: BTreeSet<(Profile, usize)>,
    pub cost_per_sanction: f64,
    pub self_cost_per_sanction: f64,
}

impl ClassificationFunction {
    pub fn never(owner: usize) -> Self {
        ClassificationFunction {
            owner,
            sanctioned: BTreeSet::new(),
            cost_per_sanction: 0.0,
            self_cost_per_sanction: 0.0,
        }
    }

    pub fn new(
        owner: usize,
        sanctioned: impl IntoIterator<Item = (Profile, usize)>,
        cost: f64,
        self_cost: f64,
    ) -> Self {
        ClassificationFunction {
            owner,
            sanctioned: sanctioned.into_iter().collect(),
            cost_per_sanction: cost,
            self_cost_per_sanction: self_cost,
        }
    }

    pub fn is_never(&self) -> bool {
        self.sanctioned.is_empty()
    }

    pub fn sanctions(&self, profile: &Profile, target: usize) -> bool {
        // Avoid cloning for the common empty case.
        !self.sanctioned.is_empty() && self.sanctioned.contains(&(profile.clone(), target))
    }

    /// Number of sanctions the owner issues at `profile`.
    pub fn issued_at(&self, profile: &Profile) -> usize {
        self.sanctioned.iter().filter(|(p, _)| p == profile).count()
    }

    fn validate(&self, game: &FiniteGame) -> Result<(), SanctionError> {
        let ok = |c: f64| c.is_finite() && c >= 0.0;
        if !ok(self.cost_per_sanction) || !ok(self.self_cost_per_sanction) {
            return Err(SanctionError::BadCost(self.owner));
        }
        if self.cost_per_sanction > 1.0 || self.self_cost_per_sanction > 1.0 {
            log::warn!("player {} classifier cost lies outside [0, 1]", self.owner);
        }
        for (profile, target) in &self.sanctioned {
            game.check_profile(profile)?;
            if *target >= game.num_players() {
                return Err(SanctionError::TargetOutOfRange(*target));
            }
            if *target == self.owner {
                return Err(SanctionError::SelfTarget(self.owner));
            }
        }
        Ok(())
    }

    fn permuted(&self, perm: &[usize]) -> Self {
        let new_of = invert(perm);
        ClassificationFunction {
            owner: new_of[self.owner],
            sanctioned: self
                .sanctioned
                .iter()
                .map(|(p, t)| (permute_profile(p, perm), new_of[*t]))
                .collect(),
            cost_per_sanction: self.cost_per_sanction,
            self_cost_per_sanction: self.self_cost_per_sanction,
        }
    }
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// One menu index per player.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClassifierProfile(pub Vec<usize>);

/// The sanction game Γ_S: a base game plus a finite classifier menu per player.
#[derive(Debug, Clone, PartialEq)]
pub struct SanctionGame {
    base: FiniteGame,
    menus: Vec<Vec<ClassificationFunction>>,
}

impl SanctionGame {
    pub fn new(base: FiniteGame, menus: Vec<Vec<ClassificationFunction>>) -> Result<Self, SanctionError> {
        if menus.len() != base.num_players() {
            return Err(SanctionError::MenuCount {
                expected: base.num_players(),
                found: menus.len(),
            });
        }
        for (player, menu) in menus.iter().enumerate() {
            if menu.is_empty() {
                return Err(SanctionError::EmptyMenu(player));
            }
            for c in menu {
                if c.owner != player {
                    return Err(SanctionError::WrongOwner { player, owner: c.owner });
                }
                c.validate(&base)?;
            }
            if !menu.iter().any(ClassificationFunction::is_never) {
                return Err(SanctionError::NoNeverClassifier(player));
            }
        }
        Ok(SanctionGame { base, menus })
    }

    pub fn base(&self) -> &FiniteGame {
        &self.base
    }

    pub fn menus(&self) -> &[Vec<ClassificationFunction>] {
        &self.menus
    }

    pub fn num_players(&self) -> usize {
        self.base.num_players()
    }

    pub fn menu_sizes(&self) -> Vec<usize> {
        self.menus.iter().map(Vec::len).collect()
    }

    pub fn num_joint_profiles(&self) -> usize {
        self.menus.iter().map(Vec::len).product()
    }

    /// Joint classifier profiles in lexicographic order.
    pub fn classifier_profiles(&self) -> impl Iterator<Item = ClassifierProfile> {
        ProfileIter::new(&self.menu_sizes()).map(|p| ClassifierProfile(p.0))
    }

    pub fn classifier_profile_at(&self, mut index: usize) -> ClassifierProfile {
        let sizes = self.menu_sizes();
        let mut out = vec![0; sizes.len()];
        for p in (0..sizes.len()).rev() {
            out[p] = index % sizes[p];
            index /= sizes[p];
        }
        ClassifierProfile(out)
    }

    pub fn check_classifiers(&self, c: &ClassifierProfile) -> Result<(), SanctionError> {
        if c.0.len() != self.num_players() {
            return Err(SanctionError::MenuCount {
                expected: self.num_players(),
                found: c.0.len(),
            });
        }
        for (player, &index) in c.0.iter().enumerate() {
            if index >= self.menus[player].len() {
                return Err(SanctionError::NotInMenu { player, index });
            }
        }
        Ok(())
    }

    fn classifier(&self, player: usize, index: usize) -> &ClassificationFunction {
        &self.menus[player][index]
    }

    /// First never-sanction entry of `player`'s menu.
    pub fn never_index(&self, player: usize) -> usize {
        self.menus[player]
            .iter()
            .position(ClassificationFunction::is_never)
            .expect("validated on construction")
    }

    /// Total cost to `player` at `profile`, assuming a validated classifier
    /// profile.
    fn cost_unchecked(&self, c: &[usize], profile: &Profile, player: usize) -> f64 {
        let own = self.classifier(player, c[player]);
        let mut total = own.self_cost_per_sanction * own.issued_at(profile) as f64;
        for (other, &idx) in c.iter().enumerate() {
            if other == player {
                continue;
            }
            let cf = self.classifier(other, idx);
            if cf.sanctions(profile, player) {
                total += cf.cost_per_sanction;
            }
        }
        total
    }

    /// Sanction-game utility `v_i`: the negated total cost.
    fn utility_unchecked(&self, c: &[usize], profile: &Profile, player: usize) -> f64 {
        -self.cost_unchecked(c, profile, player)
    }

    /// Relabels players: new player `j` is old player `perm[j]`.
    pub fn permute_players(&self, perm: &[usize]) -> SanctionGame {
        let base = self.base.permute_players(perm);
        let menus = perm
            .iter()
            .map(|&old| self.menus[old].iter().map(|c| c.permuted(perm)).collect())
            .collect();
        SanctionGame::new(base, menus).expect("permutation preserves validity")
    }

    /// Parses a sanction file that embeds its base game.
    pub fn from_json(text: &str) -> Result<Self, SanctionError> {
        Self::from_json_with_base(text, None)
    }

    /// Parses a sanction file. Game fields in the file are optional when a
    /// base game is supplied; if both are present they must agree.
    pub fn from_json_with_base(text: &str, base: Option<&FiniteGame>) -> Result<Self, SanctionError> {
        let file: SanctionFile = serde_json::from_str(text)?;
        let embedded = match (file.players, file.actions, file.utilities) {
            (Some(players), Some(actions), Some(utilities)) => Some(
                GameFile {
                    players,
                    actions,
                    utilities: utilities.0,
                }
                .into_game()?,
            ),
            (None, None, None) => None,
            _ => return Err(SanctionError::Parse("partial game description".into())),
        };
        let base = match (embedded, base) {
            (Some(e), Some(b)) if &e != b => return Err(SanctionError::BaseMismatch),
            (Some(e), _) => e,
            (None, Some(b)) => b.clone(),
            (None, None) => return Err(SanctionError::MissingBase),
        };
        let menus = file
            .classifiers
            .into_iter()
            .enumerate()
            .map(|(owner, menu)| {
                menu.into_iter()
                    .map(|entry| {
                        let sanctioned = entry
                            .sanctions
                            .into_iter()
                            .map(|s| Ok((base.parse_profile_key(&s.profile)?, s.target)))
                            .collect::<Result<BTreeSet<_>, GameError>>()?;
                        Ok(ClassificationFunction {
                            owner,
                            sanctioned,
                            cost_per_sanction: entry.cost,
                            self_cost_per_sanction: entry.self_cost,
                        })
                    })
                    .collect::<Result<Vec<_>, SanctionError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        SanctionGame::new(base, menus)
    }

    pub fn to_file(&self) -> SanctionFile {
        let game = self.base.to_file();
        SanctionFile {
            players: Some(game.players),
            actions: Some(game.actions),
            utilities: Some(Entries(game.utilities)),
            classifiers: self
                .menus
                .iter()
                .map(|menu| {
                    menu.iter()
                        .map(|c| ClassifierEntry {
                            sanctions: c
                                .sanctioned
                                .iter()
                                .map(|(p, t)| SanctionEntry {
                                    profile: self.base.profile_key(p),
                                    target: *t,
                                })
                                .collect(),
                            cost: c.cost_per_sanction,
                            self_cost: c.self_cost_per_sanction,
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanctionFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub players: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilities: Option<Entries>,
    pub classifiers: Vec<Vec<ClassifierEntry>>,
}

/// Profile-keyed payoff entries in file order.
#[derive(Debug, Clone)]
pub struct Entries(pub Vec<(String, Vec<f64>)>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        game::ordered_entries(d).map(Entries)
    }
}

impl Serialize for Entries {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierEntry {
    #[serde(default)]
    pub sanctions: Vec<SanctionEntry>,
    #[serde(default)]
    pub cost: f64,
    #[serde(default)]
    pub self_cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanctionEntry {
    pub profile: String,
    pub target: usize,
}

/// Every subset of the (profile, target ≠ owner) pairs as a menu, starting
/// with the empty classifier. Limited to tiny games.
pub fn full_menu(
    game: &FiniteGame,
    owner: usize,
    cost: f64,
    self_cost: f64,
) -> Result<Vec<ClassificationFunction>, SanctionError> {
    let pairs: Vec<(Profile, usize)> = game
        .profiles()
        .flat_map(|p| {
            (0..game.num_players())
                .filter(move |&t| t != owner)
                .map(move |t| (p.clone(), t))
        })
        .collect();
    if pairs.len() > FULL_MENU_MAX_PAIRS {
        return Err(SanctionError::MenuTooLarge { pairs: pairs.len() });
    }
    Ok((0u32..1 << pairs.len())
        .map(|mask| {
            let chosen = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask & (1 << k) != 0)
                .map(|(_, pair)| pair.clone());
            ClassificationFunction::new(owner, chosen, cost, self_cost)
        })
        .collect())
}

/// Classifier that sanctions every other player's unilateral deviation from
/// `target`.
pub fn deviation_punisher(
    game: &FiniteGame,
    owner: usize,
    target: &Profile,
    cost: f64,
    self_cost: f64,
) -> ClassificationFunction {
    let sanctioned = (0..game.num_players())
        .filter(|&t| t != owner)
        .flat_map(|t| {
            (0..game.num_actions(t))
                .filter(move |&a| a != target.0[t])
                .map(move |a| (target.with_action(t, a), t))
        })
        .collect::<Vec<_>>();
    ClassificationFunction::new(owner, sanctioned, cost, self_cost)
}

/// Total sanction cost borne by `player` at `base_profile`.
pub fn sanction_cost(
    sg: &SanctionGame,
    classifiers: &ClassifierProfile,
    base_profile: &Profile,
    player: usize,
) -> Result<f64, SanctionError> {
    sg.check_classifiers(classifiers)?;
    sg.base.check_profile(base_profile)?;
    if player >= sg.num_players() {
        return Err(GameError::PlayerOutOfRange(player).into());
    }
    Ok(sg.cost_unchecked(&classifiers.0, base_profile, player))
}

/// Base game with every payoff reduced by the sanction cost at that profile.
pub fn apply_transform(sg: &SanctionGame, classifiers: &ClassifierProfile) -> Result<FiniteGame, SanctionError> {
    sg.check_classifiers(classifiers)?;
    Ok(transform_unchecked(sg, &classifiers.0))
}

fn transform_unchecked(sg: &SanctionGame, c: &[usize]) -> FiniteGame {
    sg.base
        .map_payoffs(|profile, player, u| u - sg.cost_unchecked(c, profile, player))
}

/// Whether `transformed` removes every profitable deviation `player` had
/// from the base game's welfare optimum. False when there was no dilemma.
pub fn is_dilemma_resolving(base: &FiniteGame, transformed: &FiniteGame, player: usize) -> Result<bool, SanctionError> {
    if !base.same_shape(transformed) {
        return Err(GameError::ShapeMismatch.into());
    }
    if player >= base.num_players() {
        return Err(GameError::PlayerOutOfRange(player).into());
    }
    let sw = social_welfare_optimum(base);
    let deviations = game::profitable_deviations(base, &sw, player);
    if deviations.is_empty() {
        return Ok(false);
    }
    let at_sw = transformed.utility(&sw, player);
    Ok(deviations
        .iter()
        .all(|&a| transformed.utility(&sw.with_action(player, a), player) < at_sw))
}

/// Minimax value of `player` in the one-shot sanction game at `base_profile`:
/// others minimize, `player` then maximizes its own sanction-game utility.
pub fn sanction_minimax(sg: &SanctionGame, base_profile: &Profile, player: usize) -> Result<f64, SanctionError> {
    sg.base.check_profile(base_profile)?;
    if player >= sg.num_players() {
        return Err(GameError::PlayerOutOfRange(player).into());
    }
    Ok(minimax_unchecked(sg, base_profile, player).0)
}

/// Returns the minimax value and the minimizing joint profile (with the
/// player's own best reply filled in).
fn minimax_unchecked(sg: &SanctionGame, base_profile: &Profile, player: usize) -> (f64, ClassifierProfile) {
    let mut sizes = sg.menu_sizes();
    let own_size = sizes[player];
    sizes[player] = 1;
    let mut best: Option<(f64, ClassifierProfile)> = None;
    for others in ProfileIter::new(&sizes) {
        let mut c = others.0;
        let mut reply: Option<(f64, usize)> = None;
        for own in 0..own_size {
            c[player] = own;
            let v = sg.utility_unchecked(&c, base_profile, player);
            if reply.is_none_or(|(rv, _)| v > rv) {
                reply = Some((v, own));
            }
        }
        let (v, own) = reply.expect("menus are nonempty");
        c[player] = own;
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, ClassifierProfile(c)));
        }
    }
    best.expect("menus are nonempty")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerFeasibility {
    pub player: usize,
    /// Deviation incentive Δ_i at the target.
    pub delta: f64,
    /// Profile at which punishment is assessed: the best deviation from the
    /// target, or the target itself when Δ_i = 0.
    pub punished_profile: Profile,
    /// Minimax sanction-game utility v̄_i at `punished_profile`.
    pub minimax: f64,
    /// −Δ_i > v̄_i, or nothing to deter (Δ_i = 0).
    pub enforceable: bool,
    /// The alternative inequality v̄_i < Δ_i, kept for comparison.
    pub minimax_below_delta: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub target: Profile,
    pub players: Vec<PlayerFeasibility>,
    /// Every player's condition holds and a witness transform exists.
    pub enforceable: bool,
    /// Lexicographically first classifier profile whose transform makes the
    /// target a Nash equilibrium.
    pub witness: Option<ClassifierProfile>,
    pub profiles_searched: usize,
}

impl FeasibilityReport {
    pub fn conditions_hold(&self) -> bool {
        self.players.iter().all(|p| p.enforceable)
    }
}

/// Checks, per player, whether the punishment others can force at the
/// player's best deviation outweighs the deviation gain, and searches the
/// joint menus for a transform that makes `target` a Nash equilibrium.
pub fn theorem1_feasibility(sg: &SanctionGame, target: &Profile) -> Result<FeasibilityReport, SanctionError> {
    feasibility_with(sg, target, Execution::default())
}

pub fn feasibility_with(
    sg: &SanctionGame,
    target: &Profile,
    exec: Execution,
) -> Result<FeasibilityReport, SanctionError> {
    sg.base.check_profile(target)?;
    let players = (0..sg.num_players())
        .map(|player| {
            let delta = deviation_incentive(&sg.base, target, player)?;
            let punished_profile = if delta > 0.0 {
                target.with_action(player, game::best_response(&sg.base, player, target)?)
            } else {
                target.clone()
            };
            let (minimax, _) = minimax_unchecked(sg, &punished_profile, player);
            Ok(PlayerFeasibility {
                player,
                delta,
                punished_profile,
                minimax,
                enforceable: delta == 0.0 || -delta > minimax,
                minimax_below_delta: minimax < delta,
            })
        })
        .collect::<Result<Vec<_>, SanctionError>>()?;
    let total = sg.num_joint_profiles();
    let witness = nash_making_search(sg, target, exec);
    let enforceable = players.iter().all(|p| p.enforceable) && witness.is_some();
    Ok(FeasibilityReport {
        target: target.clone(),
        players,
        enforceable,
        witness,
        profiles_searched: total,
    })
}

/// First joint classifier profile (lexicographic) whose transform makes
/// `target` Nash.
pub fn nash_making_search(sg: &SanctionGame, target: &Profile, exec: Execution) -> Option<ClassifierProfile> {
    let total = sg.num_joint_profiles();
    exec.find_first(total, |k| {
        let c = sg.classifier_profile_at(k);
        makes_nash(sg, &c.0, target)
    })
    .map(|k| sg.classifier_profile_at(k))
}

fn makes_nash(sg: &SanctionGame, c: &[usize], target: &Profile) -> bool {
    (0..sg.num_players()).all(|player| {
        let at_target = sg.base.utility(target, player) - sg.cost_unchecked(c, target, player);
        (0..sg.base.num_actions(player)).all(|a| {
            let dev = target.with_action(player, a);
            sg.base.utility(&dev, player) - sg.cost_unchecked(c, &dev, player) <= at_target
        })
    })
}

/// The all-never-sanction classifier profile; its transform is the identity.
pub fn non_resolving_witness(sg: &SanctionGame) -> ClassifierProfile {
    ClassifierProfile((0..sg.num_players()).map(|p| sg.never_index(p)).collect())
}

/// A distribution over joint classifier profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdviceDistribution {
    pub support: Vec<(ClassifierProfile, f64)>,
}

impl AdviceDistribution {
    pub fn point_mass(c: ClassifierProfile) -> Self {
        AdviceDistribution {
            support: vec![(c, 1.0)],
        }
    }

    pub fn uniform(profiles: Vec<ClassifierProfile>) -> Self {
        let p = 1.0 / profiles.len() as f64;
        AdviceDistribution {
            support: profiles.into_iter().map(|c| (c, p)).collect(),
        }
    }

    pub fn validate(&self, sg: &SanctionGame) -> Result<(), SanctionError> {
        if self.support.is_empty() {
            return Err(SanctionError::EmptyAdvice);
        }
        let mut sum = 0.0;
        for (c, p) in &self.support {
            sg.check_classifiers(c)?;
            if !p.is_finite() || *p < 0.0 {
                return Err(SanctionError::BadProbability(*p));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > TOLERANCE {
            return Err(SanctionError::NotNormalized(sum));
        }
        Ok(())
    }

    pub fn permute_players(&self, perm: &[usize]) -> Self {
        AdviceDistribution {
            support: self
                .support
                .iter()
                .map(|(c, p)| (ClassifierProfile(perm.iter().map(|&o| c.0[o]).collect()), *p))
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SanctionError> {
        let file: AdviceFile = serde_json::from_str(text)?;
        Ok(AdviceDistribution {
            support: file
                .support
                .into_iter()
                .map(|e| (ClassifierProfile(e.profile_indices), e.p))
                .collect(),
        })
    }

    pub fn to_file(&self) -> AdviceFile {
        AdviceFile {
            support: self
                .support
                .iter()
                .map(|(c, p)| AdviceEntry {
                    profile_indices: c.0.clone(),
                    p: *p,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdviceFile {
    pub support: Vec<AdviceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdviceEntry {
    pub profile_indices: Vec<usize>,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CeMode {
    /// Unconditional deviations (coarse correlated equilibrium).
    #[default]
    Literal,
    /// Deviations may depend on the recommended classifier.
    Conditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CeReport {
    pub mode: CeMode,
    pub holds: bool,
    /// Largest expected gain from deviating; 0 when the advice holds.
    pub worst_violation: f64,
    pub violating_player: Option<usize>,
    pub violating_deviation: Option<usize>,
    /// Recommendation the deviation responds to (conditioned mode only).
    pub violating_recommendation: Option<usize>,
}

/// Checks that no player gains in expectation by deviating from the advice.
pub fn verify_correlated_equilibrium(
    sg: &SanctionGame,
    advice: &AdviceDistribution,
    base_profile: &Profile,
    mode: CeMode,
) -> Result<CeReport, SanctionError> {
    advice.validate(sg)?;
    sg.base.check_profile(base_profile)?;
    let mut worst: (f64, Option<(usize, usize, Option<usize>)>) = (0.0, None);
    let mut consider = |gain: f64, player: usize, dev: usize, rec: Option<usize>| {
        if gain > worst.0 {
            worst = (gain, Some((player, dev, rec)));
        }
    };
    for player in 0..sg.num_players() {
        let menu_len = sg.menus[player].len();
        match mode {
            CeMode::Literal => {
                for dev in 0..menu_len {
                    let gain: f64 = advice
                        .support
                        .iter()
                        .map(|(c, p)| p * deviation_gain(sg, &c.0, player, dev, base_profile))
                        .sum();
                    consider(gain, player, dev, None);
                }
            }
            CeMode::Conditioned => {
                let recs: BTreeSet<usize> = advice.support.iter().map(|(c, _)| c.0[player]).collect();
                for rec in recs {
                    for dev in 0..menu_len {
                        let gain: f64 = advice
                            .support
                            .iter()
                            .filter(|(c, _)| c.0[player] == rec)
                            .map(|(c, p)| p * deviation_gain(sg, &c.0, player, dev, base_profile))
                            .sum();
                        consider(gain, player, dev, Some(rec));
                    }
                }
            }
        }
    }
    let holds = worst.0 <= TOLERANCE;
    let (violating_player, violating_deviation, violating_recommendation) = match worst.1 {
        Some((p, d, r)) if !holds => (Some(p), Some(d), r),
        _ => (None, None, None),
    };
    Ok(CeReport {
        mode,
        holds,
        worst_violation: if holds { 0.0 } else { worst.0 },
        violating_player,
        violating_deviation,
        violating_recommendation,
    })
}

fn deviation_gain(sg: &SanctionGame, c: &[usize], player: usize, dev: usize, profile: &Profile) -> f64 {
    let obey = sg.utility_unchecked(c, profile, player);
    let mut alt = c.to_vec();
    alt[player] = dev;
    sg.utility_unchecked(&alt, profile, player) - obey
}

/// True iff at least one institution's advice passes the literal check.
pub fn institution_environment_check(
    sg: &SanctionGame,
    institutions: &[AdviceDistribution],
    base_profile: &Profile,
) -> Result<bool, SanctionError> {
    for advice in institutions {
        if verify_correlated_equilibrium(sg, advice, base_profile, CeMode::Literal)?.holds {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Sanction game fixtures on the Prisoner's Dilemma.
pub mod fixtures {
    use super::*;
    use crate::game::fixtures::prisoners_dilemma;

    /// Each player's menu: never, or punish the opponent's defection from
    /// (C,C) at `cost`.
    pub fn pd_with_punishers(cost: f64, self_cost: f64) -> SanctionGame {
        let pd = prisoners_dilemma();
        let cc = Profile(vec![0, 0]);
        let menus = (0..2)
            .map(|p| {
                vec![
                    ClassificationFunction::never(p),
                    deviation_punisher(&pd, p, &cc, cost, self_cost),
                ]
            })
            .collect();
        SanctionGame::new(pd, menus).unwrap()
    }

    /// Menus with punishers at every cost level in `costs`.
    pub fn pd_with_cost_levels(costs: &[f64]) -> SanctionGame {
        let pd = prisoners_dilemma();
        let cc = Profile(vec![0, 0]);
        let menus = (0..2)
            .map(|p| {
                std::iter::once(ClassificationFunction::never(p))
                    .chain(costs.iter().map(|&c| deviation_punisher(&pd, p, &cc, c, 0.0)))
                    .collect()
            })
            .collect();
        SanctionGame::new(pd, menus).unwrap()
    }
}
