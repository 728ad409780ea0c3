//! Finite normal-form games and brute-force analysis over pure profiles.
//!
//! Profiles are enumerated in lexicographic order with player 0 as the most
//! significant digit, so every argmax below breaks ties toward the
//! lexicographically smallest profile.

use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("a game needs at least one player")]
    NoPlayers,
    #[error("player {0} has no actions")]
    NoActions(usize),
    #[error("expected {expected} utility entries, found {found}")]
    WrongUtilityCount { expected: usize, found: usize },
    #[error("profile {profile} has {found} payoffs, expected {expected}")]
    WrongPayoffLength {
        profile: String,
        expected: usize,
        found: usize,
    },
    #[error("payoff for profile {0} is not finite")]
    NonFinitePayoff(String),
    #[error("player index {0} out of range")]
    PlayerOutOfRange(usize),
    #[error("profile has {found} actions, game has {expected} players")]
    ProfileLength { expected: usize, found: usize },
    #[error("action {action} out of range for player {player}")]
    ActionOutOfRange { player: usize, action: usize },
    #[error("unknown action '{name}' for player {player} in profile key '{key}'")]
    UnknownAction { key: String, player: usize, name: String },
    #[error("profile key '{0}' listed more than once")]
    DuplicateProfile(String),
    #[error("profile {0} missing from utilities")]
    MissingProfile(String),
    #[error("games have different shapes")]
    ShapeMismatch,
    #[error("game file: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for GameError {
    fn from(e: serde_json::Error) -> Self {
        GameError::Parse(e.to_string())
    }
}

/// One action index per player.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Profile(pub Vec<usize>);

impl Profile {
    pub fn new(actions: Vec<usize>) -> Self {
        Profile(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    /// The same profile with `player`'s action replaced.
    pub fn with_action(&self, player: usize, action: usize) -> Profile {
        let mut actions = self.0.clone();
        actions[player] = action;
        Profile(actions)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// An n-player game with finite action sets and a dense utility tensor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteGame {
    action_names: Vec<Vec<String>>,
    /// Row-major: entry `k * n + i` is player i's payoff at profile index k.
    utilities: Vec<f64>,
}

impl FiniteGame {
    /// Builds a game from per-player action labels and one payoff vector per
    /// profile, listed in lexicographic profile order.
    pub fn new(action_names: Vec<Vec<String>>, payoffs: Vec<Vec<f64>>) -> Result<Self, GameError> {
        if action_names.is_empty() {
            return Err(GameError::NoPlayers);
        }
        if let Some(p) = action_names.iter().position(|a| a.is_empty()) {
            return Err(GameError::NoActions(p));
        }
        let n = action_names.len();
        let expected: usize = action_names.iter().map(Vec::len).product();
        if payoffs.len() != expected {
            return Err(GameError::WrongUtilityCount {
                expected,
                found: payoffs.len(),
            });
        }
        let mut utilities = Vec::with_capacity(expected * n);
        let mut out_of_range = false;
        for (k, row) in payoffs.into_iter().enumerate() {
            if row.len() != n {
                return Err(GameError::WrongPayoffLength {
                    profile: k.to_string(),
                    expected: n,
                    found: row.len(),
                });
            }
            if row.iter().any(|u| !u.is_finite()) {
                return Err(GameError::NonFinitePayoff(k.to_string()));
            }
            out_of_range |= row.iter().any(|u| !(0.0..=1.0).contains(u));
            utilities.extend(row);
        }
        if out_of_range {
            log::warn!("game payoffs fall outside [0, 1]");
        }
        Ok(FiniteGame {
            action_names,
            utilities,
        })
    }

    /// Builds a game with actions labelled `0..k` for each player.
    pub fn from_counts(action_counts: &[usize], payoffs: Vec<Vec<f64>>) -> Result<Self, GameError> {
        let names = action_counts
            .iter()
            .map(|&k| (0..k).map(|a| a.to_string()).collect())
            .collect();
        Self::new(names, payoffs)
    }

    /// Builds a game by evaluating `payoff` at every profile.
    pub fn from_fn(
        action_names: Vec<Vec<String>>,
        mut payoff: impl FnMut(&Profile) -> Vec<f64>,
    ) -> Result<Self, GameError> {
        let counts: Vec<usize> = action_names.iter().map(Vec::len).collect();
        if counts.is_empty() {
            return Err(GameError::NoPlayers);
        }
        let payoffs = ProfileIter::new(&counts).map(|p| payoff(&p)).collect();
        Self::new(action_names, payoffs)
    }

    pub fn num_players(&self) -> usize {
        self.action_names.len()
    }

    pub fn num_actions(&self, player: usize) -> usize {
        self.action_names[player].len()
    }

    pub fn action_counts(&self) -> Vec<usize> {
        self.action_names.iter().map(Vec::len).collect()
    }

    pub fn action_names(&self) -> &[Vec<String>] {
        &self.action_names
    }

    pub fn num_profiles(&self) -> usize {
        self.utilities.len() / self.num_players()
    }

    pub fn profiles(&self) -> ProfileIter {
        ProfileIter::new(&self.action_counts())
    }

    pub fn check_profile(&self, profile: &Profile) -> Result<(), GameError> {
        if profile.0.len() != self.num_players() {
            return Err(GameError::ProfileLength {
                expected: self.num_players(),
                found: profile.0.len(),
            });
        }
        for (player, &action) in profile.0.iter().enumerate() {
            if action >= self.num_actions(player) {
                return Err(GameError::ActionOutOfRange { player, action });
            }
        }
        Ok(())
    }

    pub fn profile_index(&self, profile: &Profile) -> usize {
        profile
            .0
            .iter()
            .zip(&self.action_names)
            .fold(0, |acc, (&a, names)| acc * names.len() + a)
    }

    pub fn profile_at(&self, mut index: usize) -> Profile {
        let mut actions = vec![0; self.num_players()];
        for p in (0..self.num_players()).rev() {
            let k = self.num_actions(p);
            actions[p] = index % k;
            index /= k;
        }
        Profile(actions)
    }

    pub fn payoffs(&self, profile: &Profile) -> &[f64] {
        let n = self.num_players();
        let k = self.profile_index(profile);
        &self.utilities[k * n..(k + 1) * n]
    }

    pub fn utility(&self, profile: &Profile, player: usize) -> f64 {
        self.payoffs(profile)[player]
    }

    pub fn welfare(&self, profile: &Profile) -> f64 {
        self.payoffs(profile).iter().sum()
    }

    /// Comma-joined action names, the key format used by game files.
    pub fn profile_key(&self, profile: &Profile) -> String {
        profile
            .0
            .iter()
            .enumerate()
            .map(|(p, &a)| self.action_names[p][a].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_profile_key(&self, key: &str) -> Result<Profile, GameError> {
        let parts: Vec<&str> = key.split(',').map(str::trim).collect();
        if parts.len() != self.num_players() {
            return Err(GameError::ProfileLength {
                expected: self.num_players(),
                found: parts.len(),
            });
        }
        let actions = parts
            .iter()
            .enumerate()
            .map(|(player, name)| {
                self.action_names[player]
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| GameError::UnknownAction {
                        key: key.to_string(),
                        player,
                        name: name.to_string(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Profile(actions))
    }

    pub fn same_shape(&self, other: &FiniteGame) -> bool {
        self.action_counts() == other.action_counts()
    }

    /// A copy of this game with payoffs replaced profile-by-profile.
    pub fn map_payoffs(&self, mut f: impl FnMut(&Profile, usize, f64) -> f64) -> FiniteGame {
        let n = self.num_players();
        let mut utilities = self.utilities.clone();
        for (k, chunk) in utilities.chunks_mut(n).enumerate() {
            let profile = self.profile_at(k);
            for (i, u) in chunk.iter_mut().enumerate() {
                *u = f(&profile, i, *u);
            }
        }
        FiniteGame {
            action_names: self.action_names.clone(),
            utilities,
        }
    }

    /// Relabels players: new player `j` is old player `perm[j]`.
    pub fn permute_players(&self, perm: &[usize]) -> FiniteGame {
        let names: Vec<Vec<String>> = perm.iter().map(|&old| self.action_names[old].clone()).collect();
        let counts: Vec<usize> = names.iter().map(Vec::len).collect();
        let payoffs = ProfileIter::new(&counts)
            .map(|new_profile| {
                let old = permute_profile_inverse(&new_profile, perm);
                let payoffs = self.payoffs(&old);
                perm.iter().map(|&o| payoffs[o]).collect()
            })
            .collect();
        FiniteGame::new(names, payoffs).expect("permutation preserves validity")
    }

    pub fn raw_utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn from_json(text: &str) -> Result<Self, GameError> {
        let file: GameFile = serde_json::from_str(text)?;
        file.into_game()
    }

    pub fn to_file(&self) -> GameFile {
        GameFile {
            players: self.num_players(),
            actions: self.action_names.clone(),
            utilities: self
                .profiles()
                .map(|p| (self.profile_key(&p), self.payoffs(&p).to_vec()))
                .collect(),
        }
    }
}

/// Maps a profile of the relabelled game back to the original labels.
pub fn permute_profile_inverse(new_profile: &Profile, perm: &[usize]) -> Profile {
    let mut old = vec![0; perm.len()];
    for (new, &o) in perm.iter().enumerate() {
        old[o] = new_profile.0[new];
    }
    Profile(old)
}

/// Maps an original-label profile into the relabelled game.
pub fn permute_profile(old_profile: &Profile, perm: &[usize]) -> Profile {
    Profile(perm.iter().map(|&o| old_profile.0[o]).collect())
}

/// Lexicographic enumeration of joint profiles.
#[derive(Debug, Clone)]
pub struct ProfileIter {
    counts: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl ProfileIter {
    pub fn new(counts: &[usize]) -> Self {
        let next = if counts.iter().all(|&c| c > 0) {
            Some(vec![0; counts.len()])
        } else {
            None
        };
        ProfileIter {
            counts: counts.to_vec(),
            next,
        }
    }
}

impl Iterator for ProfileIter {
    type Item = Profile;

    fn next(&mut self) -> Option<Profile> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for p in (0..succ.len()).rev() {
            succ[p] += 1;
            if succ[p] < self.counts[p] {
                self.next = Some(succ);
                break;
            }
            succ[p] = 0;
        }
        Some(Profile(current))
    }
}

/// On-disk game description. `utilities` keys are comma-joined action names.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub players: usize,
    pub actions: Vec<Vec<String>>,
    #[serde(deserialize_with = "ordered_entries", serialize_with = "entries_as_map")]
    pub utilities: Vec<(String, Vec<f64>)>,
}

impl GameFile {
    pub fn into_game(self) -> Result<FiniteGame, GameError> {
        if self.players == 0 {
            return Err(GameError::NoPlayers);
        }
        if self.actions.len() != self.players {
            return Err(GameError::ProfileLength {
                expected: self.players,
                found: self.actions.len(),
            });
        }
        // Shell game used only for key parsing.
        let counts: Vec<usize> = self.actions.iter().map(Vec::len).collect();
        if let Some(p) = counts.iter().position(|&c| c == 0) {
            return Err(GameError::NoActions(p));
        }
        let total: usize = counts.iter().product();
        let shell = FiniteGame {
            action_names: self.actions.clone(),
            utilities: vec![0.0; total * self.players],
        };
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; total];
        for (key, payoff) in self.utilities {
            let profile = shell.parse_profile_key(&key)?;
            let idx = shell.profile_index(&profile);
            if rows[idx].is_some() {
                return Err(GameError::DuplicateProfile(key));
            }
            if payoff.len() != self.players {
                return Err(GameError::WrongPayoffLength {
                    profile: key,
                    expected: self.players,
                    found: payoff.len(),
                });
            }
            rows[idx] = Some(payoff);
        }
        let payoffs = rows
            .into_iter()
            .enumerate()
            .map(|(k, row)| row.ok_or_else(|| GameError::MissingProfile(shell.profile_key(&shell.profile_at(k)))))
            .collect::<Result<Vec<_>, _>>()?;
        FiniteGame::new(self.actions, payoffs)
    }
}

// serde_json collapses duplicate keys when decoding into a map, so the
// utilities object is read as an ordered list of entries instead.
pub(crate) fn ordered_entries<'de, D>(d: D) -> Result<Vec<(String, Vec<f64>)>, D::Error>
where
    D: Deserializer<'de>,
{
    struct EntriesVisitor;

    impl<'de> Visitor<'de> for EntriesVisitor {
        type Value = Vec<(String, Vec<f64>)>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an object mapping profile keys to payoff arrays")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut out = Vec::new();
            while let Some((k, v)) = map.next_entry::<String, Vec<f64>>()? {
                out.push((k, v));
            }
            Ok(out)
        }
    }

    d.deserialize_map(EntriesVisitor)
}

fn entries_as_map<S>(entries: &[(String, Vec<f64>)], s: S) -> Result<S::Ok, S::Error>
where
    S: serde::Serializer,
{
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(entries.len()))?;
    for (k, v) in entries {
        map.serialize_entry(k, v)?;
    }
    map.end()
}

/// Profile maximizing the payoff sum; ties go to the lexicographically
/// smallest profile.
pub fn social_welfare_optimum(game: &FiniteGame) -> Profile {
    let mut best: Option<(Profile, f64)> = None;
    for profile in game.profiles() {
        let w = game.welfare(&profile);
        match &best {
            Some((_, bw)) if w <= *bw => {}
            _ => best = Some((profile, w)),
        }
    }
    best.expect("games have at least one profile").0
}

/// Actions of `player` maximizing its payoff against the rest of `profile`.
/// `profile[player]` is ignored.
pub fn best_response_set(game: &FiniteGame, player: usize, profile: &Profile) -> Result<Vec<usize>, GameError> {
    if player >= game.num_players() {
        return Err(GameError::PlayerOutOfRange(player));
    }
    let mut probe = profile.clone();
    probe.0[player] = 0;
    game.check_profile(&probe)?;
    let values: Vec<f64> = (0..game.num_actions(player))
        .map(|a| game.utility(&profile.with_action(player, a), player))
        .collect();
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == top)
        .map(|(a, _)| a)
        .collect())
}

/// Lowest-indexed best response.
pub fn best_response(game: &FiniteGame, player: usize, profile: &Profile) -> Result<usize, GameError> {
    Ok(best_response_set(game, player, profile)?[0])
}

/// Gain from the best unilateral deviation: `u(BR, rest) - u(profile)`.
pub fn deviation_incentive(game: &FiniteGame, profile: &Profile, player: usize) -> Result<f64, GameError> {
    game.check_profile(profile)?;
    let br = best_response(game, player, profile)?;
    let gain = game.utility(&profile.with_action(player, br), player) - game.utility(profile, player);
    Ok(gain.max(0.0))
}

pub fn is_nash(game: &FiniteGame, profile: &Profile) -> Result<bool, GameError> {
    for player in 0..game.num_players() {
        if deviation_incentive(game, profile, player)? > 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Every pure Nash equilibrium, in lexicographic order.
pub fn pure_nash_equilibria(game: &FiniteGame) -> Vec<Profile> {
    game.profiles().filter(|p| is_nash(game, p).unwrap_or(false)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerDilemma {
    pub player: usize,
    pub dilemma: bool,
    /// Best profitable deviation from the welfare optimum, if any.
    pub witness: Option<usize>,
    pub incentive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DilemmaReport {
    pub welfare_optimum: Profile,
    pub players: Vec<PlayerDilemma>,
}

impl DilemmaReport {
    pub fn dilemma_players(&self) -> Vec<usize> {
        self.players.iter().filter(|p| p.dilemma).map(|p| p.player).collect()
    }

    pub fn any(&self) -> bool {
        self.players.iter().any(|p| p.dilemma)
    }
}

/// Flags each player who strictly gains by deviating from the welfare optimum.
pub fn detect_cooperation_dilemma(game: &FiniteGame) -> DilemmaReport {
    let sw = social_welfare_optimum(game);
    let players = (0..game.num_players())
        .map(|player| {
            let incentive = deviation_incentive(game, &sw, player).expect("optimum is a valid profile");
            let witness = if incentive > 0.0 {
                best_response(game, player, &sw).ok()
            } else {
                None
            };
            PlayerDilemma {
                player,
                dilemma: incentive > 0.0,
                witness,
                incentive,
            }
        })
        .collect();
    DilemmaReport {
        welfare_optimum: sw,
        players,
    }
}

/// Deviations of `player` from `profile` that strictly raise its payoff.
pub fn profitable_deviations(game: &FiniteGame, profile: &Profile, player: usize) -> Vec<usize> {
    let base = game.utility(profile, player);
    (0..game.num_actions(player))
        .filter(|&a| game.utility(&profile.with_action(player, a), player) > base)
        .collect()
}

/// Standard fixtures used throughout the tests and documentation.
pub mod fixtures {
    use super::FiniteGame;

    fn labels(players: usize, names: &[&str]) -> Vec<Vec<String>> {
        vec![names.iter().map(|s| s.to_string()).collect(); players]
    }

    /// Prisoner's Dilemma: (C,C)=(3,3) (C,D)=(0,5) (D,C)=(5,0) (D,D)=(1,1).
    pub fn prisoners_dilemma() -> FiniteGame {
        FiniteGame::new(
            labels(2, &["C", "D"]),
            vec![vec![3.0, 3.0], vec![0.0, 5.0], vec![5.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap()
    }

    pub fn coordination() -> FiniteGame {
        FiniteGame::new(
            labels(2, &["A", "B"]),
            vec![vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap()
    }

    pub fn single_player() -> FiniteGame {
        FiniteGame::from_counts(&[2], vec![vec![0.2], vec![0.9]]).unwrap()
    }

    /// Stag hunt: no dilemma at the welfare optimum but two pure equilibria.
    pub fn stag_hunt() -> FiniteGame {
        FiniteGame::new(
            labels(2, &["Stag", "Hare"]),
            vec![vec![4.0, 4.0], vec![0.0, 3.0], vec![3.0, 0.0], vec![3.0, 3.0]],
        )
        .unwrap()
    }

    /// Three-player public goods game: contributing costs 1, each
    /// contribution adds 0.8 to every player's payoff.
    pub fn public_goods_3() -> FiniteGame {
        FiniteGame::from_fn(labels(3, &["Give", "Keep"]), |p| {
            let givers = p.0.iter().filter(|&&a| a == 0).count() as f64;
            p.0.iter()
                .map(|&a| 0.8 * givers + if a == 0 { 0.0 } else { 1.0 })
                .collect()
        })
        .unwrap()
    }
}

/// Helper for tests and callers that name actions by label.
pub fn profile_from_names(game: &FiniteGame, names: &[&str]) -> Result<Profile, GameError> {
    game.parse_profile_key(&names.join(","))
}
