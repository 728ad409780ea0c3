use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use normsim_core::agents::NormativeParams;
use normsim_core::env::{
    alignment_metric, group_welfare, render_transcript, run_episode, steps_to_convergence, AlignmentReference,
    EnvConfig,
};
use normsim_core::exec::Execution;
use normsim_core::game::{detect_cooperation_dilemma, deviation_incentive, pure_nash_equilibria, FiniteGame, Profile};
use normsim_core::harness::{self, build_agents, reference_institution, rows_to_csv, ExperimentConfig, FocalKind};
use normsim_core::oracle::{OracleConfig, OracleKind};
use normsim_core::sanction::{
    feasibility_with, verify_correlated_equilibrium, AdviceDistribution, CeMode, SanctionGame,
};

#[derive(Parser)]
#[command(
    name = "normsim",
    version,
    about = "Sanction-game analysis and Normative Orchards simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a game: dilemmas, deviation incentives, enforceability, advice checks.
    Analyze(AnalyzeArgs),
    /// Run one episode and write its transcript and dump.
    Simulate(SimulateArgs),
    /// Run an experiment grid.
    Experiment(ExperimentArgs),
    /// Merge metrics files into a normative-vs-baseline comparison.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Literal,
    Conditioned,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Scripted,
    Chat,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    /// Game file (JSON).
    game: PathBuf,
    /// Sanction file with classifier menus; its game fields may be omitted.
    #[arg(long)]
    sanctions: Option<PathBuf>,
    /// Advice distribution over joint classifier profiles (requires --sanctions).
    #[arg(long)]
    advice: Option<PathBuf>,
    /// Target profile as comma-separated action names; defaults to the welfare optimum.
    #[arg(long)]
    target: Option<String>,
    /// Deviation model for the advice check.
    #[arg(long, value_enum, default_value = "literal")]
    mode: ModeArg,
    /// Worker threads for the witness search (default: all logical CPUs).
    #[arg(long)]
    jobs: Option<usize>,
    /// Print machine-readable JSON.
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Simulation config (JSON).
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's oracle kind.
    #[arg(long, value_enum)]
    oracle: Option<OracleArg>,
    /// Print machine-readable JSON.
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all logical CPUs).
    #[arg(long)]
    jobs: Option<usize>,
    /// Print machine-readable JSON.
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// metrics.csv or metrics.json files.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Also write comparison.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print machine-readable JSON.
    #[arg(long)]
    json: bool,
}

fn execution(jobs: Option<usize>) -> Execution {
    jobs.map_or_else(Execution::default, Execution::with_jobs)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, body).with_context(|| format!("cannot write {}", p.display()))
}

fn key(game: &FiniteGame, p: &Profile) -> String {
    format!("({})", game.profile_key(p))
}

/// Prints -0 as 0.
fn num(x: f64) -> f64 {
    x + 0.0
}

fn fmt_list<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Returns whether every requested verification passed.
fn analyze(args: AnalyzeArgs) -> Result<bool> {
    let game = FiniteGame::from_json(&read(&args.game)?).with_context(|| format!("in {}", args.game.display()))?;
    let dilemma = detect_cooperation_dilemma(&game);
    let target = match &args.target {
        Some(t) => game.parse_profile_key(t).with_context(|| format!("--target '{t}'"))?,
        None => dilemma.welfare_optimum.clone(),
    };
    let deltas: Vec<f64> = (0..game.num_players())
        .map(|i| deviation_incentive(&game, &target, i))
        .collect::<Result<_, _>>()?;
    let nash = pure_nash_equilibria(&game);

    let sg = match &args.sanctions {
        Some(p) => Some(
            SanctionGame::from_json_with_base(&read(p)?, Some(&game)).with_context(|| format!("in {}", p.display()))?,
        ),
        None => None,
    };
    let feasibility = match &sg {
        Some(sg) => Some(feasibility_with(sg, &target, execution(args.jobs))?),
        None => None,
    };
    let mode = match args.mode {
        ModeArg::Literal => CeMode::Literal,
        ModeArg::Conditioned => CeMode::Conditioned,
    };
    let ce = match (&args.advice, &sg) {
        (Some(p), Some(sg)) => {
            let advice = AdviceDistribution::from_json(&read(p)?).with_context(|| format!("in {}", p.display()))?;
            Some(verify_correlated_equilibrium(sg, &advice, &target, mode)?)
        }
        (Some(_), None) => bail!("--advice needs --sanctions"),
        _ => None,
    };
    let passed = ce.as_ref().is_none_or(|c| c.holds);

    if args.json {
        let out = json!({
            "welfare_optimum": game.profile_key(&dilemma.welfare_optimum),
            "dilemma": dilemma,
            "target": game.profile_key(&target),
            "deviation_incentives": deltas,
            "pure_nash": nash.iter().map(|p| game.profile_key(p)).collect::<Vec<_>>(),
            "feasibility": feasibility,
            "correlated_equilibrium": ce,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(passed);
    }

    println!(
        "social-welfare optimum: {} (welfare {})",
        key(&game, &dilemma.welfare_optimum),
        game.welfare(&dilemma.welfare_optimum)
    );
    if dilemma.any() {
        let players = dilemma.dilemma_players();
        let incentives = players.iter().map(|&i| dilemma.players[i].incentive);
        println!(
            "cooperation dilemma: players {{{}}}, Δ = ({})",
            fmt_list(&players),
            fmt_list(incentives.map(num))
        );
    } else {
        println!("cooperation dilemma: none");
    }
    println!("target: {}", key(&game, &target));
    println!(
        "deviation incentives at target: Δ = ({})",
        fmt_list(deltas.iter().map(|&d| num(d)))
    );
    if nash.is_empty() {
        println!("pure Nash equilibria: none");
    } else {
        println!(
            "pure Nash equilibria: {}",
            nash.iter().map(|p| key(&game, p)).collect::<Vec<_>>().join(" ")
        );
    }
    if let Some(f) = &feasibility {
        for p in &f.players {
            println!(
                "player {}: Δ = {}, minimax sanction utility {} at {}, {}",
                p.player,
                num(p.delta),
                num(p.minimax),
                key(&game, &p.punished_profile),
                if p.enforceable {
                    "enforceable"
                } else {
                    "not enforceable"
                }
            );
        }
        let failing: Vec<usize> = f.players.iter().filter(|p| !p.enforceable).map(|p| p.player).collect();
        if f.enforceable {
            let who = if game.num_players() == 2 {
                "both players"
            } else {
                "all players"
            };
            println!("enforceable: yes ({who})");
        } else if !failing.is_empty() {
            println!("enforceable: no (players {{{}}} fail)", fmt_list(&failing));
        } else {
            println!(
                "enforceable: no (no transform among {} classifier profiles)",
                f.profiles_searched
            );
        }
        match &f.witness {
            Some(w) => println!("witness classifiers: [{}]", fmt_list(&w.0)),
            None => println!("witness classifiers: none ({} profiles searched)", f.profiles_searched),
        }
    }
    if let Some(c) = &ce {
        let mode = match c.mode {
            CeMode::Literal => "literal",
            CeMode::Conditioned => "conditioned",
        };
        if c.holds {
            println!("advice ({mode}): holds");
        } else {
            println!(
                "advice ({mode}): violated, worst_violation = {} (player {}, deviation {})",
                c.worst_violation,
                c.violating_player.map_or("-".into(), |p| p.to_string()),
                c.violating_deviation.map_or("-".into(), |d| d.to_string())
            );
        }
    }
    Ok(passed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
enum FocalArg {
    #[default]
    Normative,
    Baseline,
}

/// Simulation config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimConfig {
    env: EnvConfig,
    #[serde(default)]
    focal: FocalArg,
    #[serde(default)]
    normative: NormativeParams,
    #[serde(default)]
    oracle: OracleConfig,
}

fn simulate(args: SimulateArgs) -> Result<bool> {
    let text = read(&args.config)?;
    let mut cfg: SimConfig =
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.env.seed = seed;
    }
    if let Some(o) = args.oracle {
        cfg.oracle.kind = match o {
            OracleArg::Scripted => OracleKind::Scripted,
            OracleArg::Chat => OracleKind::Chat,
        };
    }
    let mut errs = cfg.env.validate();
    errs.extend(cfg.normative.validate());
    errs.extend(cfg.oracle.validate());
    if !errs.is_empty() {
        bail!("invalid configuration:\n  {}", errs.join("\n  "));
    }
    let env = cfg.env.build()?;
    let oracle = cfg.oracle.build()?;
    let focal = match cfg.focal {
        FocalArg::Normative => FocalKind::Normative,
        FocalArg::Baseline => FocalKind::Baseline,
    };
    let mut agents = build_agents(&env, focal, cfg.normative, oracle).map_err(anyhow::Error::msg)?;
    let history = run_episode(&env, &mut agents)?;

    let reference = reference_institution(&env);
    let inst = if env.institutions.is_empty() {
        None
    } else {
        Some(alignment_metric(
            &history,
            &env,
            AlignmentReference::Institution(reference),
        )?)
    };
    let comm = if env.cfg.num_background > 0 {
        Some(alignment_metric(&history, &env, AlignmentReference::CommunityModal)?)
    } else {
        None
    };
    let metrics = json!({
        "reference_institution": env.institutions.get(reference).map(|i| i.name.clone()),
        "alignment_inst": inst,
        "alignment_comm": comm,
        "steps_to_convergence": steps_to_convergence(&history, env.cfg.max_timesteps),
        "group_welfare": group_welfare(&history, &env)?,
    });

    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write(&args.out, "transcript.txt", &render_transcript(&history, &env))?;
    let dump = json!({ "config": cfg, "history": history, "metrics": metrics });
    write(&args.out, "episode.json", &serde_json::to_string_pretty(&dump)?)?;

    if args.json {
        println!("{}", serde_json::to_string_pretty(&metrics)?);
    } else {
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "alignment with {}: {}",
            env.institutions
                .get(reference)
                .map_or("institution", |i| i.name.as_str()),
            show(inst)
        );
        println!("alignment with community: {}", show(comm));
        println!("steps to convergence: {}", metrics["steps_to_convergence"]);
        println!(
            "group welfare: {:.3}",
            metrics["group_welfare"].as_f64().unwrap_or(f64::NAN)
        );
        println!("wrote {}", args.out.display());
    }
    Ok(true)
}

fn experiment(args: ExperimentArgs) -> Result<bool> {
    let cfg = ExperimentConfig::from_json(&read(&args.config)?)
        .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", args.config.display()))?;
    let out = harness::run_experiment(&cfg, execution(args.jobs))?;
    harness::write_outputs(&out, &args.out)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&json!({ "rows": out.rows }))?);
    } else {
        print!("{}", rows_to_csv(&out.rows));
        println!("wrote {}", args.out.display());
    }
    let failures = out.failures();
    if failures > 0 {
        eprintln!("{failures} rows failed");
    }
    Ok(failures == 0)
}

fn report(args: ReportArgs) -> Result<bool> {
    let r = harness::build_report(&args.files)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write(dir, "comparison.csv", &r.comparison_csv())?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        print!("{}", r.table());
    }
    Ok(r.rows.iter().all(|row| !row.status.starts_with("failed")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
