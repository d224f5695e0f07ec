//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured quantity and its threshold.
//!
//! Everything is seeded, so a pass here is reproducible bit for bit.

use std::time::Instant;

use offrl_core::data::{count_statistics, count_transition_set, empirical_min_visit, sample_dataset};
use offrl_core::diagnostics::{
    bernstein_bound, check_mis_variance_bound, check_recursion_evaluation,
    check_recursion_optimization, s_factor_deviation_bound, solve_recursion_numeric,
    value_difference_decomposition, OptimizationMode,
};
use offrl_core::estimator::{build_empirical_mdp, ope_plugin, opo_plan};
use offrl_core::experiments::{horizon_sweep, run_sweep, InstanceKind, SweepConfig, SweepMode};
use offrl_core::instances::{
    analytic_chain_value, bounded_reward_random_instance, kl_bernoulli, kl_bernoulli_upper,
    le_cam_error_floor, lower_bound_chain_params, opo_hard_instance, RandomStyle,
    OPO_CHAIN_ACTION, OPO_START_STATE,
};
use offrl_core::linear::{
    build_anchor_empirical_mdp, generate_linear_instance, sample_anchor_dataset, LinearStyle,
};
use offrl_core::oracle::{all_deterministic_policies, enumerate_policy_value};
use offrl_core::rng::{mix_seed, stream_rng};
use offrl_core::solve::{evaluate_policy, occupancy_measures, optimal_policy};
use offrl_core::{Policy, TabularMDP};

use rand::Rng;

fn report(criterion: &str, pass: bool, detail: &str, started: Instant) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!(
        "{status} {criterion}: {detail} [{:.2?}]",
        started.elapsed()
    );
    assert!(pass, "{criterion}: {detail}");
}

/// Deterministic battery of bounded random instances with varied shapes.
fn instance_battery(count: usize, max_s: usize, max_a: usize, max_h: usize) -> Vec<TabularMDP> {
    let mut rng = stream_rng(0xacce97, 0);
    (0..count)
        .map(|i| {
            let s = 2 + (rng.gen::<u64>() as usize) % (max_s - 1);
            let a = 1 + (rng.gen::<u64>() as usize) % max_a;
            let h = 2 + (rng.gen::<u64>() as usize) % (max_h - 1);
            let style = if i % 2 == 0 {
                RandomStyle::Uniform
            } else {
                RandomStyle::Terminal
            };
            bounded_reward_random_instance(s, a, h, 1000 + i as u64, style).unwrap()
        })
        .collect()
}

#[test]
fn criterion_01_exact_identities() {
    let started = Instant::now();
    let mut worst_residual = 0.0f64;
    let mut worst_dual = 0.0f64;
    let mut worst_norm = 0.0f64;

    for (i, mdp) in instance_battery(100, 6, 4, 16).iter().enumerate() {
        let (s, a, h) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
        let policy = Policy::random(h, s, a, 5000 + i as u64);
        let data = sample_dataset(mdp, &Policy::uniform(h, s, a), 60, 7000 + i as u64).unwrap();
        let counts = count_statistics(&data, s, a).unwrap();
        let emp = build_empirical_mdp(&counts, mdp.initial_dist(), h).unwrap();

        let decomposition = value_difference_decomposition(mdp, &emp, &policy).unwrap();
        worst_residual = worst_residual.max(decomposition.residual);

        let est = ope_plugin(&emp, &policy).unwrap();
        worst_dual = worst_dual.max((est.value - est.dual_value).abs());

        let occ = occupancy_measures(&emp.mdp, &policy).unwrap();
        for hh in 0..h {
            let state_sum: f64 = (0..s).map(|ss| occ.state[[hh, ss]]).sum();
            let pair_sum: f64 = occ.state_action.slice(ndarray_s3(hh)).iter().sum();
            worst_norm = worst_norm.max((state_sum - 1.0).abs());
            worst_norm = worst_norm.max((pair_sum - 1.0).abs());
        }
    }
    report(
        "criterion 1 (exact identities)",
        worst_residual <= 1e-9 && worst_dual <= 1e-10 && worst_norm <= 1e-10,
        &format!(
            "residual {worst_residual:.2e} ≤ 1e-9, primal-dual {worst_dual:.2e} ≤ 1e-10, \
             occupancy normalization {worst_norm:.2e} ≤ 1e-10 over 100 instances"
        ),
        started,
    );
}

// Helper: slice occupancy at one step (keeps the test free of direct ndarray
// macro imports).
fn ndarray_s3(h: usize) -> ndarray::SliceInfo<[ndarray::SliceInfoElem; 3], ndarray::Ix3, ndarray::Ix2> {
    ndarray::s![h, .., ..]
}

#[test]
fn criterion_02_oracle_equivalence() {
    let started = Instant::now();
    let mut worst_eval = 0.0f64;
    for seed in 0..50u64 {
        let s = 2 + (seed as usize) % 2;
        let h = 2 + (seed as usize) % 3;
        let style = if seed % 2 == 0 {
            RandomStyle::Uniform
        } else {
            RandomStyle::Terminal
        };
        let mdp = bounded_reward_random_instance(s, 2, h, 100 + seed, style).unwrap();
        let policy = Policy::random(h, s, 2, 300 + seed);
        let dp = evaluate_policy(&mdp, &policy).unwrap().value;
        let oracle = enumerate_policy_value(&mdp, &policy, None).unwrap();
        worst_eval = worst_eval.max((dp - oracle).abs());
    }

    let mut worst_plan = 0.0f64;
    let policies = all_deterministic_policies(2, 2, 2, None).unwrap();
    for seed in 0..50u64 {
        let style = if seed % 2 == 0 {
            RandomStyle::Uniform
        } else {
            RandomStyle::Terminal
        };
        let mdp = bounded_reward_random_instance(2, 2, 2, 200 + seed, style).unwrap();
        let (_, sol) = optimal_policy(&mdp).unwrap();
        let best = policies
            .iter()
            .map(|p| evaluate_policy(&mdp, p).unwrap().value)
            .fold(f64::NEG_INFINITY, f64::max);
        worst_plan = worst_plan.max((sol.value - best).abs());
    }
    report(
        "criterion 2 (oracle equivalence)",
        worst_eval <= 1e-12 && worst_plan <= 1e-12,
        &format!(
            "DP vs enumeration {worst_eval:.2e} ≤ 1e-12 (50 seeds), \
             planning vs exhaustive {worst_plan:.2e} ≤ 1e-12 (50 seeds)"
        ),
        started,
    );
}

#[test]
fn criterion_03_evaluation_error_scaling() {
    let started = Instant::now();
    let config = SweepConfig {
        mode: SweepMode::Ope,
        instance_kind: InstanceKind::Uniform,
        num_states: 3,
        num_actions: 2,
        horizon: 4,
        instance_seed: 7,
        k_grid: vec![250, 1000, 4000, 16000],
        replications: 200,
        base_seed: 20260809,
        ..SweepConfig::default()
    };
    let result = run_sweep(&config).unwrap();
    let slope = result.slope.expect("slope must fit");
    let coverage = result.summaries.iter().all(|c| c.coverage_ok);
    report(
        "criterion 3 (evaluation error scaling)",
        (-0.6..=-0.4).contains(&slope.slope) && coverage,
        &format!(
            "fitted slope {:.4} ± {:.4} in [-0.6, -0.4], K in {{250,...,16000}}, R = 200",
            slope.slope, slope.stderr
        ),
        started,
    );
}

#[test]
fn criterion_04_horizon_flatness() {
    let started = Instant::now();
    let config = SweepConfig {
        mode: SweepMode::Ope,
        instance_kind: InstanceKind::ChainFamily,
        c1: 1.0,
        h_grid: vec![4, 16, 64],
        fixed_kdm: Some(60.0),
        replications: 200,
        base_seed: 42,
        ..SweepConfig::default()
    };
    let (result, ratio) = horizon_sweep(&config).unwrap();
    let medians: Vec<f64> = result.summaries.iter().map(|c| c.median).collect();
    report(
        "criterion 4 (horizon flatness)",
        ratio <= 3.0,
        &format!("max/min median ratio {ratio:.3} ≤ 3 at fixed K·d_m = 60, medians {medians:?}"),
        started,
    );
}

#[test]
fn criterion_05_planning_gap() {
    let started = Instant::now();
    let config = SweepConfig {
        mode: SweepMode::Opo,
        instance_kind: InstanceKind::Uniform,
        num_states: 5,
        num_actions: 3,
        horizon: 4,
        instance_seed: 7,
        k_grid: vec![1000, 16000],
        replications: 200,
        base_seed: 19,
        ..SweepConfig::default()
    };
    let result = run_sweep(&config).unwrap();
    let negatives = result.rows.iter().filter(|r| r.value < -1e-10).count();
    let m_small = result.summaries[0].median;
    let m_large = result.summaries[1].median;
    report(
        "criterion 5 (planning gap)",
        negatives == 0 && m_large <= 0.5 * m_small,
        &format!(
            "no negative gaps in 400 runs; median gap {m_large:.3e} at K=16000 ≤ half of \
             {m_small:.3e} at K=1000"
        ),
        started,
    );
}

#[test]
fn criterion_06_inequality_checkers() {
    let started = Instant::now();
    let instances = instance_battery(50, 5, 3, 6);
    let mut checks = 0usize;
    let mut failures = 0usize;
    for (i, mdp) in instances.iter().enumerate() {
        let (s, a, h) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
        let target = Policy::uniform(h, s, a);
        for dataset_id in 0..20u64 {
            let seed = mix_seed(&[0xc6, i as u64, dataset_id]);
            let data = sample_dataset(mdp, &target, 150, seed).unwrap();
            let counts = count_statistics(&data, s, a).unwrap();
            let emp = build_empirical_mdp(&counts, mdp.initial_dist(), h).unwrap();
            for power in 0..3 {
                checks += 1;
                if !check_recursion_evaluation(mdp, &emp, &target, power)
                    .unwrap()
                    .holds
                {
                    failures += 1;
                }
            }
            for mode in [
                OptimizationMode::OptimalValue,
                OptimizationMode::ValueDifference,
            ] {
                for power in 0..2 {
                    checks += 1;
                    if !check_recursion_optimization(mdp, &emp, power, mode)
                        .unwrap()
                        .holds
                    {
                        failures += 1;
                    }
                }
            }
            checks += 1;
            if !check_mis_variance_bound(mdp, &target).unwrap().holds {
                failures += 1;
            }
        }
    }
    report(
        "criterion 6 (inequality checkers)",
        failures == 0,
        &format!("{checks} checks on 50 instances × 20 datasets, {failures} failures"),
        started,
    );
}

#[test]
fn criterion_07_recursion_solver_grid() {
    let started = Instant::now();
    let lambda_grid: Vec<f64> = (-10..=2).map(|e| 2f64.powi(e)).collect();
    let h_grid = [4.0, 16.0, 64.0, 256.0, 1024.0, 4096.0];
    let mut worst_excess = f64::NEG_INFINITY;
    let mut depth_ok = true;
    for &l1 in &lambda_grid {
        for &l2 in &lambda_grid {
            let mut prev_iters = 0usize;
            for &h in &h_grid {
                let r = solve_recursion_numeric(l1, l2, h).unwrap();
                worst_excess = worst_excess.max(r.v0 - r.bound);
                // Depth is bounded by the informative-level inequality
                // 4^i λ2² ≤ λ1 H, so it grows at most logarithmically in H.
                let cap = ((h * l1 / (l2 * l2)).max(1.0).log2() / 2.0).floor() + 1.0;
                depth_ok &= r.iterations as f64 <= cap;
                depth_ok &= r.iterations >= prev_iters;
                prev_iters = r.iterations;
            }
        }
    }
    report(
        "criterion 7 (recursion solver)",
        worst_excess <= 1e-12 && depth_ok,
        &format!(
            "V(0) - 6(λ1+λ2) ≤ {worst_excess:.2e} over 13×13 λ grid × H up to 4096; \
             depth within the logarithmic cap and monotone in H"
        ),
        started,
    );
}

#[test]
fn criterion_08_two_point_artifacts() {
    let started = Instant::now();

    let mut kl_ok = true;
    for i in 1..20 {
        for j in 1..20 {
            let (p, q) = (i as f64 * 0.05, j as f64 * 0.05);
            kl_ok &= kl_bernoulli(p, q) <= kl_bernoulli_upper(p, q) + 1e-12;
        }
    }

    let mut forms_ok = true;
    for h in [1usize, 2, 4, 16, 64, 256] {
        for &p in &[0.001f64, 0.1, 0.5, 0.9, 0.999, 0.999999, 1.0] {
            // Independent route: term-by-term powers.
            let direct: f64 = (1..=h).map(|j| p.powi(j as i32) / h as f64).sum();
            forms_ok &= (analytic_chain_value(p, h) - direct).abs() <= 1e-12;
        }
        // The closed ratio form agrees wherever it is well-conditioned; near
        // p = 1 it cancels catastrophically, which is the reason the
        // geometric sum is the implementation.
        for &p in &[0.001f64, 0.1, 0.5, 0.9, 0.99] {
            let ratio = (p - p.powi(h as i32 + 1)) / (1.0 - p) / h as f64;
            forms_ok &= (analytic_chain_value(p, h) - ratio).abs() <= 1e-12;
        }
    }

    let (h, n_dm, c0, c1) = (16usize, 128.0, 0.05, 1.0);
    let (p1, p2, _) = lower_bound_chain_params(h, n_dm, c1).unwrap();
    let floor = le_cam_error_floor(n_dm as u64, p1, p2);
    let floor_ok = floor >= 0.5 - 1e-12;

    let m1 = opo_hard_instance(h, p1, c0, n_dm, c1).unwrap();
    let m2 = opo_hard_instance(h, p2, c0, n_dm, c1).unwrap();
    let flip_ok = optimal_policy(&m1)
        .unwrap()
        .0
        .prob(0, OPO_START_STATE, OPO_CHAIN_ACTION)
        == 0.0
        && optimal_policy(&m2)
            .unwrap()
            .0
            .prob(0, OPO_START_STATE, OPO_CHAIN_ACTION)
            == 1.0;

    report(
        "criterion 8 (two-point artifacts)",
        kl_ok && forms_ok && floor_ok && flip_ok,
        &format!(
            "KL bound on 19×19 grid: {kl_ok}; chain value forms to 1e-12: {forms_ok}; \
             testing floor {floor:.3} ≥ 0.5; planning arm flips: {flip_ok}"
        ),
        started,
    );
}

#[test]
fn criterion_09_anchor_scaling_and_reduction() {
    let started = Instant::now();

    // Scaling on the d=4, S=8, A=2 instance.
    let config = SweepConfig {
        mode: SweepMode::LinearOpe,
        instance_kind: InstanceKind::Linear,
        num_states: 8,
        num_actions: 2,
        horizon: 6,
        feature_dim: 4,
        instance_seed: 11,
        n_grid: vec![1000, 4000, 16000, 64000],
        replications: 100,
        base_seed: 5,
        ..SweepConfig::default()
    };
    let result = run_sweep(&config).unwrap();
    let slope = result.slope.expect("slope must fit");

    // Full-dimension reduction: identical bits to the tabular pipeline on a
    // shared dataset.
    let linear = generate_linear_instance(4, 2, 5, 8, 11, LinearStyle::UniformReward).unwrap();
    let mut bits_ok = true;
    for (n, seed) in [(800usize, 21u64), (5000, 22)] {
        let set = sample_anchor_dataset(&linear, n, seed).unwrap();
        let counts = count_transition_set(&set, 4, 2).unwrap();
        let anchor_emp = build_anchor_empirical_mdp(
            &counts,
            &linear.anchors,
            &linear.weights,
            linear.mdp.initial_dist(),
            5,
        )
        .unwrap();
        let tabular_emp = build_empirical_mdp(&counts, linear.mdp.initial_dist(), 5).unwrap();
        for policy_seed in [1u64, 2, 3] {
            let pi = Policy::random(5, 4, 2, policy_seed);
            let via_anchor = ope_plugin(&anchor_emp, &pi).unwrap().value;
            let via_tabular = ope_plugin(&tabular_emp, &pi).unwrap().value;
            bits_ok &= via_anchor.to_bits() == via_tabular.to_bits();
        }
        let plan_anchor = opo_plan(&anchor_emp).unwrap();
        let plan_tabular = opo_plan(&tabular_emp).unwrap();
        bits_ok &= plan_anchor.1.to_bits() == plan_tabular.1.to_bits();
        bits_ok &= plan_anchor.0 == plan_tabular.0;
    }
    report(
        "criterion 9 (anchor scaling and reduction)",
        (-0.6..=-0.4).contains(&slope.slope) && bits_ok,
        &format!(
            "anchor-data error slope {:.4} ± {:.4} in [-0.6, -0.4]; one-hot reduction \
             bit-identical: {bits_ok}",
            slope.slope, slope.stderr
        ),
        started,
    );
}

#[test]
fn criterion_10_bound_coverage() {
    let started = Instant::now();
    let delta = 0.05f64;

    // Plain Bernstein on Bernoulli(0.3) means, true variance plugged in.
    let (n, reps) = (500usize, 2000usize);
    let p = 0.3f64;
    let width = bernstein_bound(n as u64, p * (1.0 - p), 1.0, delta).unwrap();
    let mut violations = 0usize;
    for rep in 0..reps {
        let mut rng = stream_rng(0xbe57, rep as u64);
        let mut sum = 0.0;
        for _ in 0..n {
            if rng.gen::<f64>() < p {
                sum += 1.0;
            }
        }
        if (sum / n as f64 - p).abs() > width {
            violations += 1;
        }
    }
    let bernstein_rate = violations as f64 / reps as f64;
    let sigma = (delta * (1.0 - delta) / reps as f64).sqrt();
    let bernstein_ok = bernstein_rate <= delta + 3.0 * sigma;

    // Union-over-states width against data-dependent values: deviations of
    // the planned policy's value table under the estimated kernel.
    let mdp = bounded_reward_random_instance(3, 2, 4, 7, RandomStyle::Uniform).unwrap();
    let behavior = Policy::uniform(4, 3, 2);
    let mut trials = 0usize;
    let mut s_violations = 0usize;
    for rep in 0..500u64 {
        let data = sample_dataset(&mdp, &behavior, 250, mix_seed(&[0x5f, rep])).unwrap();
        let counts = count_statistics(&data, 3, 2).unwrap();
        if empirical_min_visit(&counts, None).0 == 0 {
            continue;
        }
        let emp = build_empirical_mdp(&counts, mdp.initial_dist(), 4).unwrap();
        let (planned, _) = opo_plan(&emp).unwrap();
        let planned_values = evaluate_policy(&mdp, &planned).unwrap().v_values;
        for s in 0..3 {
            for a in 0..2 {
                let n_sa = counts.n_sa[[s, a]];
                for h in 1..=4usize {
                    let mut gap = 0.0;
                    let mut mean = 0.0;
                    let mut second = 0.0;
                    for s2 in 0..3 {
                        let v = planned_values[[h, s2]];
                        gap += (mdp.transition_prob(s, a, s2)
                            - emp.mdp.transition_prob(s, a, s2))
                            * v;
                        mean += mdp.transition_prob(s, a, s2) * v;
                        second += mdp.transition_prob(s, a, s2) * v * v;
                    }
                    let variance = (second - mean * mean).max(0.0);
                    let width = s_factor_deviation_bound(n_sa, variance, 3, delta).unwrap();
                    trials += 1;
                    if gap.abs() > width {
                        s_violations += 1;
                    }
                }
            }
        }
    }
    let s_rate = s_violations as f64 / trials as f64;
    let s_sigma = (delta * (1.0 - delta) / trials as f64).sqrt();
    let s_ok = s_rate <= delta + 3.0 * s_sigma;

    report(
        "criterion 10 (bound coverage)",
        bernstein_ok && s_ok,
        &format!(
            "Bernstein violation rate {bernstein_rate:.4} ≤ {:.4} over {reps} runs; \
             S-factor violation rate {s_rate:.5} ≤ {:.4} over {trials} deviations",
            delta + 3.0 * sigma,
            delta + 3.0 * s_sigma
        ),
        started,
    );
}
