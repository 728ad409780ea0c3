//! Classification institutions ("Chieftains"): per-timestep crop
//! declarations and their bridge into the sanction game.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{FiniteGame, GameError, Profile};
use crate::sanction::{AdviceDistribution, ClassificationFunction, ClassifierProfile, SanctionError, SanctionGame};

/// Crop names in catalogue order; configs use a prefix of this list.
pub const CROP_NAMES: [&str; 5] = ["apples", "bananas", "peaches", "oranges", "plums"];
const CROP_SINGULAR: [&str; 5] = ["apple", "banana", "peach", "orange", "plum"];

/// Institution names by id.
pub const INSTITUTION_NAMES: [&str; 5] = ["Ophilia", "Bram", "Cyra", "Dorn", "Elia"];

pub const COMMUNITY_NAME: &str = "Skymeadow";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Crop(pub usize);

impl Crop {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn name(self) -> &'static str {
        CROP_NAMES[self.0]
    }

    /// "banana" for bananas, as used in harvest lines.
    pub fn singular(self) -> &'static str {
        CROP_SINGULAR[self.0]
    }

    pub fn from_name(name: &str) -> Option<Crop> {
        CROP_NAMES.iter().position(|&n| n == name).map(Crop)
    }
}

impl fmt::Display for Crop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum InstitutionError {
    #[error("player {player} has no classifier sanctioning deviations from {crop}")]
    MissingClassifier { player: usize, crop: Crop },
    #[error("rotation must list at least one crop")]
    EmptyRotation,
    #[error(transparent)]
    Sanction(#[from] SanctionError),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeclarationPolicy {
    Constant(Crop),
    /// Declares `crops[t % crops.len()]`.
    Rotating(Vec<Crop>),
}

impl DeclarationPolicy {
    pub fn crop_at(&self, t: usize) -> Crop {
        match self {
            DeclarationPolicy::Constant(c) => *c,
            DeclarationPolicy::Rotating(crops) => crops[t % crops.len()],
        }
    }

    pub fn crops(&self) -> Vec<Crop> {
        match self {
            DeclarationPolicy::Constant(c) => vec![*c],
            DeclarationPolicy::Rotating(crops) => crops.clone(),
        }
    }
}

/// An institution as the environment sees it. `authoritative` never leaves
/// the environment: signals and observations carry no such field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Institution {
    pub id: usize,
    pub name: String,
    pub policy: DeclarationPolicy,
    pub authoritative: bool,
}

impl Institution {
    pub fn constant(id: usize, crop: Crop, authoritative: bool) -> Self {
        Institution {
            id,
            name: default_name(id),
            policy: DeclarationPolicy::Constant(crop),
            authoritative,
        }
    }

    pub fn rotating(id: usize, crops: Vec<Crop>, authoritative: bool) -> Result<Self, InstitutionError> {
        if crops.is_empty() {
            return Err(InstitutionError::EmptyRotation);
        }
        Ok(Institution {
            id,
            name: default_name(id),
            policy: DeclarationPolicy::Rotating(crops),
            authoritative,
        })
    }
}

pub fn default_name(id: usize) -> String {
    INSTITUTION_NAMES
        .get(id)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("Chieftain{id}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstitutionSignal {
    pub institution_id: usize,
    pub institution_name: String,
    pub timestep: usize,
    pub crop: Crop,
    pub text: String,
}

pub fn signal_text(crop: Crop) -> String {
    format!(
        "Valued citizens of {COMMUNITY_NAME}, let's focus on harvesting {}. It is important for the prosperity of our community!",
        crop.name()
    )
}

/// The institution's declaration for timestep `t`.
pub fn declare(inst: &Institution, t: usize) -> InstitutionSignal {
    let crop = inst.policy.crop_at(t);
    InstitutionSignal {
        institution_id: inst.id,
        institution_name: inst.name.clone(),
        timestep: t,
        crop,
        text: signal_text(crop),
    }
}

/// One-shot harvest game: every player picks a crop and earns
/// `harvest_reward + monoculture_bonus * (modal count / players)`.
pub fn crop_game(
    num_players: usize,
    num_crops: usize,
    harvest_reward: f64,
    monoculture_bonus: f64,
) -> Result<FiniteGame, GameError> {
    let names: Vec<String> = CROP_NAMES[..num_crops].iter().map(|s| s.to_string()).collect();
    FiniteGame::from_fn(vec![names; num_players], |p| {
        let mut counts = vec![0usize; num_crops];
        for &a in p.actions() {
            counts[a] += 1;
        }
        let modal = *counts.iter().max().unwrap_or(&0) as f64;
        vec![harvest_reward + monoculture_bonus * modal / num_players as f64; num_players]
    })
}

/// Classifier for `owner` that sanctions every other player whose harvest
/// differs from `crop`.
pub fn declared_crop_classifier(
    game: &FiniteGame,
    owner: usize,
    crop: Crop,
    cost: f64,
    self_cost: f64,
) -> ClassificationFunction {
    ClassificationFunction::new(owner, declared_crop_set(game, owner, crop), cost, self_cost)
}

fn declared_crop_set(game: &FiniteGame, owner: usize, crop: Crop) -> BTreeSet<(Profile, usize)> {
    game.profiles()
        .flat_map(|p| {
            (0..game.num_players())
                .filter(|&t| t != owner && p.actions()[t] != crop.index())
                .map(|t| (p.clone(), t))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Crop game with menus {never} ∪ {declared-crop classifier for each crop}.
pub fn crop_sanction_game(game: FiniteGame, cost: f64, self_cost: f64) -> Result<SanctionGame, SanctionError> {
    let num_crops = game.num_actions(0);
    let menus = (0..game.num_players())
        .map(|owner| {
            std::iter::once(ClassificationFunction::never(owner))
                .chain((0..num_crops).map(|c| declared_crop_classifier(&game, owner, Crop(c), cost, self_cost)))
                .collect()
        })
        .collect();
    SanctionGame::new(game, menus)
}

/// Point-mass advice on the joint profile in which every player uses the
/// classifier matching the institution's declaration at `t`.
pub fn advice_profile(inst: &Institution, sg: &SanctionGame, t: usize) -> Result<AdviceDistribution, InstitutionError> {
    let crop = inst.policy.crop_at(t);
    let picks = (0..sg.num_players())
        .map(|player| {
            let wanted = declared_crop_set(sg.base(), player, crop);
            sg.menus()[player]
                .iter()
                .position(|c| c.sanctioned == wanted)
                .ok_or(InstitutionError::MissingClassifier { player, crop })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AdviceDistribution::point_mass(ClassifierProfile(picks)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const APPLES: Crop = Crop(0);
    const BANANAS: Crop = Crop(1);

    #[test]
    fn ophilia_declares_apples() {
        let ophilia = Institution::constant(0, APPLES, true);
        let s = declare(&ophilia, 0);
        assert_eq!(s.crop, APPLES);
        assert_eq!(s.institution_name, "Ophilia");
        assert_eq!(
            s.text,
            "Valued citizens of Skymeadow, let's focus on harvesting apples. It is important for the prosperity of our community!"
        );
        assert_eq!(declare(&ophilia, 0), declare(&ophilia, 0));
    }

    #[test]
    fn policies() {
        let bram = Institution::constant(1, BANANAS, false);
        assert!((0..20).all(|t| declare(&bram, t).crop == BANANAS));
        let rot = Institution::rotating(2, vec![APPLES, BANANAS], false).unwrap();
        assert_eq!(declare(&rot, 3).crop, BANANAS);
        assert_eq!(declare(&rot, 4).crop, APPLES);
        assert_eq!(
            Institution::rotating(2, vec![], false),
            Err(InstitutionError::EmptyRotation)
        );
    }

    #[test]
    fn crop_names() {
        assert_eq!(Crop(1).singular(), "banana");
        assert_eq!(Crop(2).singular(), "peach");
        assert_eq!(Crop::from_name("plums"), Some(Crop(4)));
        assert_eq!(Crop::from_name("kiwis"), None);
    }

    #[test]
    fn advice_for_toy_crop_game() {
        let game = crop_game(2, 2, 1.0, 0.5).unwrap();
        let sg = crop_sanction_game(game, 0.25, 0.05).unwrap();
        let apples = Institution::constant(0, APPLES, true);
        let bananas = Institution::constant(1, BANANAS, false);
        let a = advice_profile(&apples, &sg, 0).unwrap();
        assert_eq!(a, AdviceDistribution::point_mass(ClassifierProfile(vec![1, 1])));
        // Menu entry 1 sanctions exactly the crop-1 harvests of the other player.
        let c = &sg.menus()[0][1];
        assert!(c.sanctioned.iter().all(|(p, t)| *t == 1 && p.actions()[1] == 1));
        assert_eq!(c.sanctioned.len(), 2);
        let b = advice_profile(&bananas, &sg, 0).unwrap();
        assert_ne!(a, b);
        assert!((0..10).all(|t| advice_profile(&apples, &sg, t).unwrap() == a));
    }

    #[test]
    fn advice_requires_classifier() {
        let game = crop_game(2, 2, 1.0, 0.5).unwrap();
        let sg = SanctionGame::new(
            game,
            vec![
                vec![ClassificationFunction::never(0)],
                vec![ClassificationFunction::never(1)],
            ],
        )
        .unwrap();
        let apples = Institution::constant(0, APPLES, true);
        assert_eq!(
            advice_profile(&apples, &sg, 0),
            Err(InstitutionError::MissingClassifier {
                player: 0,
                crop: APPLES
            })
        );
    }

    #[test]
    fn crop_game_rewards_monoculture() {
        let g = crop_game(3, 2, 1.0, 0.5).unwrap();
        assert_eq!(g.payoffs(&Profile(vec![0, 0, 0])), &[1.5, 1.5, 1.5]);
        let mixed = g.payoffs(&Profile(vec![0, 1, 0]))[0];
        assert!((mixed - (1.0 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }
}
