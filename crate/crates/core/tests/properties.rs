use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;

use normsim_core::agents::{normative_action, NormativeParams, NormativeState, WeightedMajority};
use normsim_core::env::Observation;
use normsim_core::exec::Execution;
use normsim_core::game::{deviation_incentive, is_nash, permute_profile, social_welfare_optimum, FiniteGame, Profile};
use normsim_core::harness::{run_cell, Cell, ExperimentConfig, ExperimentKind, FocalKind};
use normsim_core::institution::{declare, Crop, Institution};
use normsim_core::oracle::ScriptedOracle;
use normsim_core::sanction::{
    apply_transform, deviation_punisher, feasibility_with, non_resolving_witness, verify_correlated_equilibrium,
    AdviceDistribution, CeMode, ClassificationFunction, ClassifierProfile, SanctionGame,
};

/// Games with 1-3 players, 1-3 actions each and small integer payoffs, so
/// comparisons are exact.
fn game() -> impl Strategy<Value = FiniteGame> {
    prop::collection::vec(1usize..=3, 1..=3).prop_flat_map(|counts| {
        let n = counts.len();
        let total: usize = counts.iter().product();
        prop::collection::vec(prop::collection::vec(-5i32..=5, n), total).prop_map(move |rows| {
            let payoffs = rows
                .into_iter()
                .map(|r| r.into_iter().map(f64::from).collect())
                .collect();
            FiniteGame::from_counts(&counts, payoffs).unwrap()
        })
    })
}

fn game_and_profile() -> impl Strategy<Value = (FiniteGame, Profile)> {
    game().prop_flat_map(|g| {
        let n = g.num_profiles();
        (Just(g), 0..n).prop_map(|(g, k)| {
            let p = g.profile_at(k);
            (g, p)
        })
    })
}

/// Sanction games with at least two players: each menu holds the never
/// classifier plus up to two random classifiers.
fn sanction_game() -> impl Strategy<Value = SanctionGame> {
    game()
        .prop_filter("needs two players", |g| g.num_players() >= 2 && g.num_profiles() <= 12)
        .prop_flat_map(|g| {
            let n = g.num_players();
            let pairs = g.num_profiles() * (n - 1);
            let classifier = (prop::collection::vec(any::<bool>(), pairs), 0u8..=4, 0u8..=2);
            let menu = prop::collection::vec(classifier, 0..=2);
            (Just(g), prop::collection::vec(menu, n))
        })
        .prop_map(|(g, raw)| {
            let n = g.num_players();
            let menus = raw
                .into_iter()
                .enumerate()
                .map(|(owner, extra)| {
                    let mut menu = vec![ClassificationFunction::never(owner)];
                    for (mask, cost, self_cost) in extra {
                        let slots: Vec<(Profile, usize)> = g
                            .profiles()
                            .flat_map(|p| (0..n).filter(|&t| t != owner).map(move |t| (p.clone(), t)))
                            .collect();
                        let chosen = slots.into_iter().zip(mask).filter(|(_, m)| *m).map(|(s, _)| s);
                        menu.push(ClassificationFunction::new(
                            owner,
                            chosen,
                            f64::from(cost) * 0.75,
                            f64::from(self_cost) * 0.25,
                        ));
                    }
                    menu
                })
                .collect();
            SanctionGame::new(g, menus).unwrap()
        })
}

fn with_classifiers() -> impl Strategy<Value = (SanctionGame, ClassifierProfile, Profile)> {
    sanction_game().prop_flat_map(|sg| {
        let (jp, bp) = (sg.num_joint_profiles(), sg.base().num_profiles());
        (Just(sg), 0..jp, 0..bp).prop_map(|(sg, c, p)| {
            let c = sg.classifier_profile_at(c);
            let p = sg.base().profile_at(p);
            (sg, c, p)
        })
    })
}

fn with_advice() -> impl Strategy<Value = (SanctionGame, AdviceDistribution, Profile)> {
    sanction_game().prop_flat_map(|sg| {
        let (jp, bp) = (sg.num_joint_profiles(), sg.base().num_profiles());
        let support = prop::collection::vec((0..jp, 1u32..=4), 1..=3);
        (Just(sg), support, 0..bp).prop_map(|(sg, support, p)| {
            let total: u32 = support.iter().map(|s| s.1).sum();
            let advice = AdviceDistribution {
                support: support
                    .into_iter()
                    .map(|(k, w)| (sg.classifier_profile_at(k), f64::from(w) / f64::from(total)))
                    .collect(),
            };
            let p = sg.base().profile_at(p);
            (sg, advice, p)
        })
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn nash_iff_no_deviation_incentive((g, p) in game_and_profile()) {
        let all_zero = (0..g.num_players()).all(|i| deviation_incentive(&g, &p, i).unwrap() == 0.0);
        prop_assert_eq!(is_nash(&g, &p).unwrap(), all_zero);
    }

    #[test]
    fn incentives_are_nonnegative((g, p) in game_and_profile()) {
        for i in 0..g.num_players() {
            prop_assert!(deviation_incentive(&g, &p, i).unwrap() >= 0.0);
        }
    }

    #[test]
    fn incentives_ignore_player_constants((g, p) in game_and_profile(), shift in -3i32..=3) {
        let shifted = g.map_payoffs(|_, player, u| u + f64::from(shift) * (player as f64 + 1.0));
        for i in 0..g.num_players() {
            prop_assert_eq!(deviation_incentive(&g, &p, i).unwrap(), deviation_incentive(&shifted, &p, i).unwrap());
        }
    }

    #[test]
    fn welfare_optimum_dominates(g in game()) {
        let best = g.welfare(&social_welfare_optimum(&g));
        for p in g.profiles() {
            prop_assert!(g.welfare(&p) <= best);
        }
    }

    #[test]
    fn sanctions_never_raise_payoffs((sg, c, _) in with_classifiers()) {
        let t = apply_transform(&sg, &c).unwrap();
        for (after, before) in t.raw_utilities().iter().zip(sg.base().raw_utilities()) {
            prop_assert!(after <= before);
        }
    }

    #[test]
    fn null_transform_keeps_nash_verdicts(sg in sanction_game()) {
        let t = apply_transform(&sg, &non_resolving_witness(&sg)).unwrap();
        for p in sg.base().profiles() {
            prop_assert_eq!(is_nash(&t, &p).unwrap(), is_nash(sg.base(), &p).unwrap());
        }
    }

    #[test]
    fn conditioned_implies_literal((sg, advice, p) in with_advice()) {
        let cond = verify_correlated_equilibrium(&sg, &advice, &p, CeMode::Conditioned).unwrap();
        let lit = verify_correlated_equilibrium(&sg, &advice, &p, CeMode::Literal).unwrap();
        if cond.holds {
            prop_assert!(lit.holds);
        }
    }

    #[test]
    fn enforceable_witness_is_nash((sg, _, target) in with_classifiers()) {
        let r = feasibility_with(&sg, &target, Execution::Sequential).unwrap();
        if r.enforceable {
            let t = apply_transform(&sg, r.witness.as_ref().unwrap()).unwrap();
            prop_assert!(is_nash(&t, &target).unwrap());
        }
        if let Some(w) = &r.witness {
            let t = apply_transform(&sg, w).unwrap();
            prop_assert!(is_nash(&t, &target).unwrap());
        }
    }

    #[test]
    fn witness_search_is_parallel_invariant((sg, _, target) in with_classifiers()) {
        let seq = feasibility_with(&sg, &target, Execution::Sequential).unwrap();
        let par = feasibility_with(&sg, &target, Execution::Parallel { jobs: Some(4) }).unwrap();
        prop_assert_eq!(seq, par);
    }

    #[test]
    fn relabeling_players_is_equivariant(
        ((sg, c, p), perm) in with_classifiers().prop_flat_map(|x| {
            let n = x.0.num_players();
            (Just(x), permutation(n))
        })
    ) {
        let g = sg.base();
        let pg = g.permute_players(&perm);
        let pp = permute_profile(&p, &perm);
        prop_assert_eq!(is_nash(g, &p).unwrap(), is_nash(&pg, &pp).unwrap());
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(deviation_incentive(g, &p, old).unwrap(), deviation_incentive(&pg, &pp, new).unwrap());
        }

        let psg = sg.permute_players(&perm);
        let pc = ClassifierProfile(perm.iter().map(|&o| c.0[o]).collect());
        let t = apply_transform(&sg, &c).unwrap();
        let pt = apply_transform(&psg, &pc).unwrap();
        for q in g.profiles() {
            let pq = permute_profile(&q, &perm);
            for (new, &old) in perm.iter().enumerate() {
                assert_relative_eq!(t.utility(&q, old), pt.utility(&pq, new), epsilon = 1e-12);
            }
        }

        let a = feasibility_with(&sg, &p, Execution::Sequential).unwrap();
        let b = feasibility_with(&psg, &pp, Execution::Sequential).unwrap();
        prop_assert_eq!(a.enforceable, b.enforceable);
        for (new, &old) in perm.iter().enumerate() {
            let (x, y) = (&a.players[old], &b.players[new]);
            prop_assert_eq!(x.delta, y.delta);
            prop_assert_eq!(x.enforceable, y.enforceable);
            assert_relative_eq!(x.minimax, y.minimax, epsilon = 1e-12);
        }

        let advice = AdviceDistribution::point_mass(c.clone());
        let r1 = verify_correlated_equilibrium(&sg, &advice, &p, CeMode::Literal).unwrap();
        let r2 = verify_correlated_equilibrium(&psg, &advice.permute_players(&perm), &pp, CeMode::Literal).unwrap();
        prop_assert_eq!(r1.holds, r2.holds);
        assert_relative_eq!(r1.worst_violation, r2.worst_violation, epsilon = 1e-12);
    }

    /// Within the 2x2 family of deviation punishers without self costs, a
    /// failed per-player condition rules out any Nash-making transform.
    #[test]
    fn punisher_family_failure_means_no_witness(
        g in game().prop_filter("2x2", |g| g.action_counts() == vec![2, 2]),
        target in 0usize..4,
        cost in 0.0f64..4.0,
    ) {
        let target = g.profile_at(target);
        let menus = (0..2)
            .map(|p| vec![ClassificationFunction::never(p), deviation_punisher(&g, p, &target, cost, 0.0)])
            .collect();
        let sg = SanctionGame::new(g, menus).unwrap();
        let r = feasibility_with(&sg, &target, Execution::Sequential).unwrap();
        if !r.conditions_hold() {
            prop_assert!(r.witness.is_none());
        }
    }

    #[test]
    fn weighted_majority_mistake_bound(
        n in 1usize..=8,
        beta in prop::sample::select(vec![0.3, 0.5, 0.7]),
        rounds in prop::collection::vec((any::<bool>(), prop::collection::vec(any::<bool>(), 8)), 1..200),
    ) {
        let mut wm = WeightedMajority::new(n, beta);
        let mut mistakes = 0usize;
        let mut expert = vec![0usize; n];
        for (outcome, guesses) in &rounds {
            let preds: Vec<Option<bool>> = guesses[..n].iter().map(|&g| Some(g)).collect();
            if wm.predict(&preds) != *outcome {
                mistakes += 1;
            }
            for (m, g) in expert.iter_mut().zip(&guesses[..n]) {
                if g != outcome {
                    *m += 1;
                }
            }
            wm.update(&preds, *outcome);
        }
        let best = *expert.iter().min().unwrap() as f64;
        let bound = ((n as f64).ln() + best * (1.0 / beta).ln()) / (2.0 / (1.0 + beta)).ln();
        prop_assert!(mistakes as f64 <= bound, "{} > {}", mistakes, bound);
    }

    #[test]
    fn normative_choice_ignores_weight_scale(
        weights in prop::collection::vec(0.001f64..1.0, 4),
        scale in prop::sample::select(vec![0.5, 2.0, 8.0, 1024.0]),
        last in prop::collection::vec(0usize..4, 3),
    ) {
        let ids = [0, 1, 2];
        let ns = NormativeState::new(&ids, NormativeParams::default()).with_weights(&weights);
        let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let ns2 = NormativeState::new(&ids, NormativeParams::default()).with_weights(&scaled);
        let insts: Vec<Institution> = ids.iter().map(|&i| Institution::constant(i, Crop(i), false)).collect();
        let obs = Observation {
            t: 1,
            me: 0,
            roster: vec!["Alice".into(), "John".into(), "Anthony".into()],
            crop_names: vec!["apples".into(), "bananas".into(), "peaches".into(), "oranges".into()],
            signals: insts.iter().map(|i| declare(i, 1)).collect(),
            last_step_signals: insts.iter().map(|i| declare(i, 0)).collect(),
            last_step_actions: last.into_iter().map(Crop).collect(),
            last_step_criticisms: vec![],
            own_received_criticisms: vec![],
            discussion_so_far: vec![],
        };
        prop_assert_eq!(normative_action(&ns, &obs), normative_action(&ns2, &obs));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn episode_metrics_in_range(
        exp in prop::sample::select(vec![ExperimentKind::SingleNonauthoritative, ExperimentKind::MultiInstitution]),
        crops in 2usize..=5,
        background in 1usize..=5,
        institutions in 2usize..=5,
        seed_base in any::<u64>(),
        normative in any::<bool>(),
    ) {
        let mut cfg = ExperimentConfig::new(exp);
        cfg.seed_base = seed_base;
        let cell = match exp {
            ExperimentKind::SingleNonauthoritative => Cell { experiment: exp, num_crops: crops, num_background: background, num_institutions: 1 },
            ExperimentKind::MultiInstitution => Cell { experiment: exp, num_crops: 5, num_background: background, num_institutions: institutions },
        };
        let focal = if normative { FocalKind::Normative } else { FocalKind::Baseline };
        let a = run_cell(&cfg, &cell, focal, 0, Arc::new(ScriptedOracle)).unwrap();
        let b = run_cell(&cfg, &cell, focal, 0, Arc::new(ScriptedOracle)).unwrap();
        prop_assert_eq!(&a.history, &b.history);
        let m = a.metrics;
        prop_assert!((0.0..=1.0).contains(&m.alignment_inst));
        prop_assert!((0.0..=1.0).contains(&m.alignment_comm));
        prop_assert!(m.steps_to_convergence <= a.env.cfg.max_timesteps);
    }
}
