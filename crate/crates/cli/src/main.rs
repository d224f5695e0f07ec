//! `offrl`: generate instances, sample datasets, run the plug-in estimator
//! and planner, check the inequality diagnostics, and drive Monte Carlo
//! sweeps from config files.
//!
//! Exit codes: 0 on success, 2 when any invariant check fails (so `verify`
//! and `diagnose` gate CI), 1 on usage or IO errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use offrl_core::data::{
    count_statistics, count_transition_set, empirical_min_visit, read_dataset, sample_dataset,
    write_counts_csv, write_dataset,
};
use offrl_core::diagnostics::{
    check_mis_variance_bound, check_recursion_evaluation, check_recursion_optimization,
    solve_recursion_numeric, value_difference_decomposition, CheckReport, OptimizationMode,
};
use offrl_core::estimator::{
    build_empirical_mdp, empirical_from_truth, ope_plugin, opo_plan, suboptimality_gap,
    EmpiricalMDP,
};
use offrl_core::experiments::{
    lower_bound_experiment, run_sweep, write_rows_csv, write_summary_json, SweepConfig, SweepMode,
};
use offrl_core::instances::{
    analytic_chain_value, bounded_reward_random_instance, kl_bernoulli, kl_bernoulli_upper,
    le_cam_error_floor, lower_bound_chain_params, ope_hard_instance, opo_hard_instance,
    random_instance, RandomStyle, OPO_CHAIN_ACTION, OPO_START_STATE,
};
use offrl_core::linear::{generate_linear_instance, sample_anchor_dataset, LinearAnchorMDP, LinearStyle};
use offrl_core::oracle::{enumerate_policy_value, verify_bounded_total_reward};
use offrl_core::solve::{dual_policy_value, evaluate_policy, occupancy_measures, optimal_policy};
use offrl_core::{Policy, TabularMDP};

#[derive(Parser)]
#[command(name = "offrl", version, about = "Offline RL on tabular and anchor-linear MDPs")]
struct Cli {
    /// Worker threads for sweeps (output is identical for any value).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InstanceKindArg {
    /// Random instance with rewards bounded by 1/H.
    Uniform,
    /// Random instance with a single absorbing reward state.
    Terminal,
    /// Unnormalized random instance with Bernoulli rewards.
    Random,
    /// Anchor-point linear instance (bounded rewards).
    Linear,
    /// Two-state survival chain.
    OpeHard,
    /// Four-state planning instance with a pinned alternative branch.
    OpoHard,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance file (tabular or linear JSON schema).
    Generate {
        #[arg(long, value_enum)]
        kind: InstanceKindArg,
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
        #[arg(long, default_value_t = 4)]
        feature_dim: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Survival probability for the chain instances.
        #[arg(long, default_value_t = 0.9)]
        chain_p: f64,
        #[arg(long, default_value_t = 0.05)]
        c0: f64,
        #[arg(long, default_value_t = 128.0)]
        n_dm: f64,
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a dataset under a behavior policy (JSONL).
    Sample {
        #[arg(long)]
        mdp: PathBuf,
        /// uniform | optimal | random:<seed> | path to a policy JSON.
        #[arg(long, default_value = "uniform")]
        policy: String,
        #[arg(long)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write transition counts next to the dataset.
        #[arg(long)]
        counts_csv: Option<PathBuf>,
    },
    /// Plug-in policy evaluation from a dataset.
    Ope {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "uniform")]
        policy: String,
    },
    /// Model-based planning from a dataset, with the realized gap.
    Opo {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Write the planned policy JSON here.
        #[arg(long)]
        out_policy: Option<PathBuf>,
    },
    /// Run every inequality checker; exit 2 if any fails.
    Diagnose {
        #[arg(long)]
        mdp: PathBuf,
        /// Dataset used to build the empirical model (unless --emp).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "uniform")]
        policy: String,
        /// Use this model file as the empirical model instead of counts.
        #[arg(long)]
        emp: Option<PathBuf>,
    },
    /// Run a config-driven sweep, writing rows and a summary.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
    },
    /// Two-point chain experiment: plug-in error and testing floor.
    LowerBound {
        #[arg(long, default_value_t = 16)]
        horizon: usize,
        /// Comma-separated chain sample counts.
        #[arg(long, default_value = "64,256,1024,4096")]
        n_grid: String,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the built-in invariant suite (plus golden fixtures if present).
    Verify {
        /// Directory with golden instance files.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore the error if a pool already exists; determinism does not
        // depend on the thread count.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Generate {
            kind,
            states,
            actions,
            horizon,
            feature_dim,
            seed,
            chain_p,
            c0,
            n_dm,
            c1,
            out,
        } => {
            let text = match kind {
                InstanceKindArg::Uniform => {
                    bounded_reward_random_instance(states, actions, horizon, seed, RandomStyle::Uniform)?
                        .to_json()
                }
                InstanceKindArg::Terminal => {
                    bounded_reward_random_instance(states, actions, horizon, seed, RandomStyle::Terminal)?
                        .to_json()
                }
                InstanceKindArg::Random => random_instance(states, actions, horizon, seed)?.to_json(),
                InstanceKindArg::Linear => generate_linear_instance(
                    states,
                    actions,
                    horizon,
                    feature_dim,
                    seed,
                    LinearStyle::UniformReward,
                )?
                .to_json(),
                InstanceKindArg::OpeHard => ope_hard_instance(horizon, chain_p)?.to_json(),
                InstanceKindArg::OpoHard => {
                    opo_hard_instance(horizon, chain_p, c0, n_dm, c1)?.to_json()
                }
            };
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
            Ok(true)
        }

        Command::Sample {
            mdp,
            policy,
            episodes,
            seed,
            out,
            counts_csv,
        } => {
            let mdp = load_mdp(&mdp)?;
            let behavior = load_policy(&policy, &mdp)?;
            let dataset = sample_dataset(&mdp, &behavior, episodes, seed)?;
            write_dataset(&dataset, &out)?;
            if let Some(path) = counts_csv {
                let counts = count_statistics(&dataset, mdp.num_states(), mdp.num_actions())?;
                write_counts_csv(&counts, &path)?;
            }
            println!("wrote {} ({} episodes)", out.display(), episodes);
            Ok(true)
        }

        Command::Ope {
            mdp,
            dataset,
            policy,
        } => {
            let truth = load_mdp(&mdp)?;
            let data = read_dataset(&dataset)?;
            let counts = count_statistics(&data, truth.num_states(), truth.num_actions())?;
            let target = load_policy(&policy, &truth)?;
            let emp = build_empirical_mdp(&counts, truth.initial_dist(), truth.horizon())?;
            let est = ope_plugin(&emp, &target)?;
            let truth_value = evaluate_policy(&truth, &target)?.value;
            let (min_visits, min_pair) = empirical_min_visit(&counts, None);
            let report = serde_json::json!({
                "v_hat": est.value,
                "v_hat_dual": est.dual_value,
                "v_true": truth_value,
                "abs_error": (est.value - truth_value).abs(),
                "min_visits": min_visits,
                "min_visit_pair": [min_pair.0, min_pair.1],
                "fallback_reachable": est.fallback_reachable,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }

        Command::Opo {
            mdp,
            dataset,
            out_policy,
        } => {
            let truth = load_mdp(&mdp)?;
            let data = read_dataset(&dataset)?;
            let counts = count_statistics(&data, truth.num_states(), truth.num_actions())?;
            let emp = build_empirical_mdp(&counts, truth.initial_dist(), truth.horizon())?;
            let (planned, v_hat) = opo_plan(&emp)?;
            let gap = suboptimality_gap(&truth, &planned)?;
            if let Some(path) = out_policy {
                std::fs::write(&path, planned.to_json())?;
            }
            let report = serde_json::json!({
                "v_hat_planned": v_hat,
                "gap_on_truth": gap,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }

        Command::Diagnose {
            mdp,
            dataset,
            policy,
            emp,
        } => diagnose(&mdp, dataset.as_deref(), &policy, emp.as_deref()),

        Command::Sweep {
            config,
            out_dir,
            format,
        } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let config = SweepConfig::parse(&text)?;
            std::fs::create_dir_all(&out_dir)?;
            if config.mode == SweepMode::LowerBound {
                let n_grid: Vec<u64> = config.n_grid.iter().map(|&n| n as u64).collect();
                let report = lower_bound_experiment(
                    config.horizon,
                    &n_grid,
                    config.replications,
                    config.c1,
                    config.base_seed,
                )?;
                write_lower_bound_outputs(&report, &out_dir)?;
                println!("{}", serde_json::to_string_pretty(&report)?);
                return Ok(true);
            }
            let result = run_sweep(&config)?;
            match format {
                OutputFormat::Csv => write_rows_csv(&result.rows, &out_dir.join("rows.csv"))?,
                OutputFormat::Json => std::fs::write(
                    out_dir.join("rows.json"),
                    serde_json::to_string_pretty(&result.rows)?,
                )?,
            }
            write_summary_json(&config, &result, &out_dir.join("summary.json"))?;
            let summary = serde_json::json!({
                "cells": result.summaries.len(),
                "rows": result.rows.len(),
                "slope": result.slope,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(true)
        }

        Command::LowerBound {
            horizon,
            n_grid,
            reps,
            c1,
            seed,
            out_dir,
        } => {
            let n_grid: Vec<u64> = n_grid
                .split(',')
                .map(|p| p.trim().parse::<u64>().map_err(|_| anyhow!("bad n_grid entry {p:?}")))
                .collect::<Result<_>>()?;
            let report = lower_bound_experiment(horizon, &n_grid, reps, c1, seed)?;
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir)?;
                write_lower_bound_outputs(&report, &dir)?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }

        Command::Verify { fixtures } => verify(fixtures.as_deref()),
    }
}

fn load_mdp(path: &Path) -> Result<TabularMDP> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    // Accept a linear instance file anywhere a tabular model is expected.
    if text.contains("linear-anchor-mdp/1") {
        return Ok(LinearAnchorMDP::from_json(&text)?.mdp);
    }
    Ok(TabularMDP::from_json(&text)?)
}

fn load_policy(spec: &str, mdp: &TabularMDP) -> Result<Policy> {
    let (h, s, a) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    match spec {
        "uniform" => Ok(Policy::uniform(h, s, a)),
        "optimal" => Ok(optimal_policy(mdp)?.0),
        other => {
            if let Some(seed) = other.strip_prefix("random:") {
                let seed: u64 = seed.parse().with_context(|| format!("bad policy seed {other:?}"))?;
                return Ok(Policy::random(h, s, a, seed));
            }
            let text = std::fs::read_to_string(other)
                .with_context(|| format!("policy {spec:?} is not a known form or readable file"))?;
            Ok(Policy::from_json(&text)?)
        }
    }
}

fn print_report(report: &CheckReport) {
    println!("{}", serde_json::to_string(report).expect("report serializes"));
}

fn diagnose(
    mdp_path: &Path,
    dataset: Option<&Path>,
    policy: &str,
    emp_path: Option<&Path>,
) -> Result<bool> {
    let truth = load_mdp(mdp_path)?;
    let target = load_policy(policy, &truth)?;

    let emp: EmpiricalMDP = match (emp_path, dataset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            match TabularMDP::from_json(&text) {
                Ok(model) => empirical_from_truth(&model),
                Err(err) => {
                    // A model that fails validation is itself a failed check,
                    // not a usage error: report and gate.
                    let report = CheckReport {
                        name: "empirical-model-validation".into(),
                        lhs: 1.0,
                        rhs: 0.0,
                        holds: false,
                        params: Default::default(),
                    };
                    print_report(&report);
                    eprintln!("empirical model rejected: {err}");
                    return Ok(false);
                }
            }
        }
        (None, Some(data_path)) => {
            let data = read_dataset(data_path)?;
            let counts = count_statistics(&data, truth.num_states(), truth.num_actions())?;
            build_empirical_mdp(&counts, truth.initial_dist(), truth.horizon())?
        }
        (None, None) => return Err(anyhow!("diagnose needs --dataset or --emp")),
    };

    let mut all_hold = true;
    let mut run = |report: CheckReport| {
        all_hold &= report.holds;
        print_report(&report);
    };

    run(value_difference_decomposition(&truth, &emp, &target)?.check_report());
    for i in 0..3 {
        run(check_recursion_evaluation(&truth, &emp, &target, i)?);
    }
    for mode in [OptimizationMode::OptimalValue, OptimizationMode::ValueDifference] {
        for i in 0..2 {
            run(check_recursion_optimization(&truth, &emp, i, mode)?);
        }
    }
    run(check_mis_variance_bound(&truth, &target)?);

    if all_hold {
        println!("all checks passed");
    } else {
        println!("CHECKS FAILED");
    }
    Ok(all_hold)
}

fn write_lower_bound_outputs(
    report: &offrl_core::experiments::LowerBoundReport,
    dir: &Path,
) -> Result<()> {
    let mut csv = String::from(
        "n,p1,p2,median_error_p1,median_error_p2,identification_failure_sum,le_cam_floor\n",
    );
    for c in &report.cells {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.n,
            c.p1,
            c.p2,
            c.median_error_p1,
            c.median_error_p2,
            c.identification_failure_sum,
            c.le_cam_floor
        ));
    }
    std::fs::write(dir.join("lower_bound.csv"), csv)?;
    std::fs::write(
        dir.join("lower_bound.json"),
        serde_json::to_string_pretty(report)?,
    )?;
    Ok(())
}

/// The built-in invariant battery. Prints one line per check.
fn verify(fixtures: Option<&Path>) -> Result<bool> {
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        all_ok &= ok;
        if ok {
            println!("ok   {name}");
        } else {
            println!("FAIL {name}: {detail}");
        }
    };

    // Golden fixtures, when shipped next to the binary's crate.
    let fixtures_dir = fixtures
        .map(Path::to_path_buf)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    if fixtures_dir.is_dir() {
        for entry in ["golden_uniform_mdp.json", "golden_linear_mdp.json"] {
            let path = fixtures_dir.join(entry);
            if !path.exists() {
                continue;
            }
            let outcome = load_mdp(&path).and_then(|m| Ok(m.validate()?));
            check(
                &format!("fixture-parses:{entry}"),
                outcome.is_ok(),
                format!("{outcome:?}"),
            );
        }
        let data_path = fixtures_dir.join("golden_dataset.jsonl");
        if data_path.exists() {
            let outcome = read_dataset(&data_path);
            check(
                "fixture-parses:golden_dataset.jsonl",
                outcome.is_ok(),
                format!("{:?}", outcome.err()),
            );
        }
    }

    // Dynamic programming against the trajectory-enumeration oracle.
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        for style in [RandomStyle::Uniform, RandomStyle::Terminal] {
            let mdp = bounded_reward_random_instance(3, 2, 4, seed, style)?;
            let pi = Policy::random(4, 3, 2, seed ^ 0x5a5a);
            let dp = evaluate_policy(&mdp, &pi)?.value;
            let oracle = enumerate_policy_value(&mdp, &pi, None)?;
            worst = worst.max((dp - oracle).abs());
        }
    }
    check("dp-matches-enumeration", worst <= 1e-12, format!("worst |Δ| = {worst:.3e}"));

    // Primal-dual agreement and occupancy normalization.
    let mut worst_dual = 0.0f64;
    let mut worst_norm = 0.0f64;
    for seed in 0..20u64 {
        let mdp = bounded_reward_random_instance(4, 3, 6, seed, RandomStyle::Uniform)?;
        let pi = Policy::random(6, 4, 3, seed);
        let occ = occupancy_measures(&mdp, &pi)?;
        let primal = evaluate_policy(&mdp, &pi)?.value;
        let dual = dual_policy_value(&mdp, &occ)?;
        worst_dual = worst_dual.max((primal - dual).abs());
        for h in 0..6 {
            let sum: f64 = (0..4).map(|s| occ.state[[h, s]]).sum();
            worst_norm = worst_norm.max((sum - 1.0).abs());
        }
    }
    check("primal-dual-value", worst_dual <= 1e-10, format!("worst |Δ| = {worst_dual:.3e}"));
    check("occupancy-normalization", worst_norm <= 1e-10, format!("worst |Δ| = {worst_norm:.3e}"));

    // Bounded-reward certificates agree with the honest check.
    let mut cert_ok = true;
    for seed in 0..10u64 {
        for style in [RandomStyle::Uniform, RandomStyle::Terminal] {
            let mdp = bounded_reward_random_instance(3, 2, 6, seed, style)?;
            cert_ok &= verify_bounded_total_reward(&mdp).is_bounded();
        }
    }
    check("bounded-reward-certificates", cert_ok, String::new());

    // Decomposition identity and the deterministic inequalities on sampled
    // empirical models.
    let mut residual_worst = 0.0f64;
    let mut ineq_ok = true;
    for seed in 0..5u64 {
        let mdp = bounded_reward_random_instance(3, 2, 4, seed, RandomStyle::Uniform)?;
        let pi = Policy::uniform(4, 3, 2);
        for rep in 0..4u64 {
            let data = sample_dataset(&mdp, &pi, 150, seed * 100 + rep)?;
            let counts = count_statistics(&data, 3, 2)?;
            let emp = build_empirical_mdp(&counts, mdp.initial_dist(), 4)?;
            residual_worst =
                residual_worst.max(value_difference_decomposition(&mdp, &emp, &pi)?.residual);
            for i in 0..3 {
                ineq_ok &= check_recursion_evaluation(&mdp, &emp, &pi, i)?.holds;
            }
            for mode in [OptimizationMode::OptimalValue, OptimizationMode::ValueDifference] {
                for i in 0..2 {
                    ineq_ok &= check_recursion_optimization(&mdp, &emp, i, mode)?.holds;
                }
            }
            ineq_ok &= check_mis_variance_bound(&mdp, &pi)?.holds;
        }
    }
    check(
        "value-difference-residual",
        residual_worst <= 1e-9,
        format!("worst residual = {residual_worst:.3e}"),
    );
    check("variance-recursions-hold", ineq_ok, String::new());

    // Recursion solver budget on a small grid.
    let mut solver_ok = true;
    for (l1, l2, h) in [(1.0, 1.0, 64.0), (0.25, 4.0, 1024.0), (4.0, 0.001, 4096.0)] {
        let report = solve_recursion_numeric(l1, l2, h)?;
        solver_ok &= report.holds;
    }
    check("recursion-solver-budget", solver_ok, String::new());

    // Bernoulli KL bound and chain closed forms.
    let mut kl_ok = true;
    for i in 1..20 {
        for j in 1..20 {
            let (p, q) = (i as f64 * 0.05, j as f64 * 0.05);
            kl_ok &= kl_bernoulli(p, q) <= kl_bernoulli_upper(p, q) + 1e-12;
        }
    }
    check("bernoulli-kl-bound", kl_ok, String::new());

    let mut chain_ok = true;
    for h in [2usize, 8, 64] {
        for p in [0.1, 0.5, 0.97] {
            let geometric = analytic_chain_value(p, h);
            let ratio = (p - p.powi(h as i32 + 1)) / (1.0 - p) / h as f64;
            chain_ok &= (geometric - ratio).abs() <= 1e-12;
        }
    }
    check("chain-value-forms-agree", chain_ok, String::new());

    let (p1, p2, _) = lower_bound_chain_params(16, 128.0, 1.0)?;
    let floor = le_cam_error_floor(128, p1, p2);
    check(
        "testing-floor-at-half",
        (floor - 0.5).abs() <= 1e-12,
        format!("floor = {floor}"),
    );

    let m1 = opo_hard_instance(16, p1, 0.05, 128.0, 1.0)?;
    let m2 = opo_hard_instance(16, p2, 0.05, 128.0, 1.0)?;
    let flip_ok = optimal_policy(&m1)?.0.prob(0, OPO_START_STATE, OPO_CHAIN_ACTION) == 0.0
        && optimal_policy(&m2)?.0.prob(0, OPO_START_STATE, OPO_CHAIN_ACTION) == 1.0;
    check("planning-arm-flip", flip_ok, String::new());

    // Anchor pipeline: representation invariants and the full-dimension
    // reduction agreeing with the tabular build on a shared dataset.
    let linear = generate_linear_instance(4, 2, 5, 8, 11, LinearStyle::UniformReward)?;
    check("linear-invariants", linear.validate().is_ok(), String::new());
    let set = sample_anchor_dataset(&linear, 4000, 13)?;
    let counts = count_transition_set(&set, 4, 2)?;
    let anchor_emp = offrl_core::linear::build_anchor_empirical_mdp(
        &counts,
        &linear.anchors,
        &linear.weights,
        linear.mdp.initial_dist(),
        5,
    )?;
    let tabular_emp = build_empirical_mdp(&counts, linear.mdp.initial_dist(), 5)?;
    let pi = Policy::uniform(5, 4, 2);
    let via_anchor = ope_plugin(&anchor_emp, &pi)?.value;
    let via_tabular = ope_plugin(&tabular_emp, &pi)?.value;
    check(
        "one-hot-reduction-bitwise",
        via_anchor.to_bits() == via_tabular.to_bits(),
        format!("{via_anchor} vs {via_tabular}"),
    );

    // Plug-in fixed point: exact model inputs reproduce the truth.
    let mdp = bounded_reward_random_instance(3, 2, 4, 7, RandomStyle::Uniform)?;
    let emp = empirical_from_truth(&mdp);
    let pi = Policy::uniform(4, 3, 2);
    let fixed = (ope_plugin(&emp, &pi)?.value - evaluate_policy(&mdp, &pi)?.value).abs();
    check("exact-input-fixed-point", fixed <= 1e-12, format!("|Δ| = {fixed:.3e}"));

    if all_ok {
        println!("verify: all checks passed");
    } else {
        println!("verify: FAILURES PRESENT");
    }
    Ok(all_ok)
}
