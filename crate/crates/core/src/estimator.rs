//! Plug-in estimation on the empirical MDP: maximum-likelihood model
//! building, policy evaluation on the built model, model-based planning, and
//! the realized sub-optimality of a planned policy on the true model.

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::data::DatasetCounts;
use crate::error::Result;
use crate::mdp::{Policy, RewardModel, TabularMDP, STRUCT_TOL};
use crate::solve::{evaluate_policy, occupancy_measures, optimal_policy};

/// Handling of state-action pairs with no visits. Theory assumes full
/// coverage; outside it the estimator must still be deterministic, and both
/// fallbacks keep every value in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnvisitedFallback {
    /// Pretend the pair loops onto its own state with zero reward.
    #[default]
    SelfLoopZeroReward,
    /// Pretend the pair transitions uniformly with zero reward.
    UniformZeroReward,
}

/// Count-based empirical model plus provenance of how it was built.
#[derive(Debug, Clone)]
pub struct EmpiricalMDP {
    pub mdp: TabularMDP,
    pub visit_counts: Array2<u64>,
    pub unvisited: Vec<(usize, usize)>,
    pub fallback: UnvisitedFallback,
}

/// Builds the empirical MDP from counts: visited pairs get frequency
/// transition rows and mean observed rewards; unvisited pairs get the
/// fallback row and are reported in `unvisited`.
pub fn build_empirical_mdp(
    counts: &DatasetCounts,
    initial_dist: &Array1<f64>,
    horizon: usize,
) -> Result<EmpiricalMDP> {
    build_empirical_mdp_with(counts, initial_dist, horizon, UnvisitedFallback::default())
}

pub fn build_empirical_mdp_with(
    counts: &DatasetCounts,
    initial_dist: &Array1<f64>,
    horizon: usize,
    fallback: UnvisitedFallback,
) -> Result<EmpiricalMDP> {
    let (s_n, a_n) = counts.n_sa.dim();
    let mut transition = Array3::zeros((s_n, a_n, s_n));
    let mut reward = Array2::zeros((s_n, a_n));
    let mut unvisited = Vec::new();
    for s in 0..s_n {
        for a in 0..a_n {
            match counts.row_estimate(s, a) {
                Some((row, r)) => {
                    for (s2, &p) in row.iter().enumerate() {
                        transition[[s, a, s2]] = p;
                    }
                    reward[[s, a]] = r;
                }
                None => {
                    unvisited.push((s, a));
                    match fallback {
                        UnvisitedFallback::SelfLoopZeroReward => transition[[s, a, s]] = 1.0,
                        UnvisitedFallback::UniformZeroReward => {
                            let p = 1.0 / s_n as f64;
                            for s2 in 0..s_n {
                                transition[[s, a, s2]] = p;
                            }
                        }
                    }
                }
            }
        }
    }
    let mdp = TabularMDP::new(
        horizon,
        transition,
        reward,
        initial_dist.clone(),
        RewardModel::Deterministic,
    )?;
    Ok(EmpiricalMDP {
        mdp,
        visit_counts: counts.n_sa.clone(),
        unvisited,
        fallback,
    })
}

/// Plug-in policy value on the empirical model.
#[derive(Debug, Clone)]
pub struct OpeEstimate {
    /// Primal estimate: exact DP value on the empirical model.
    pub value: f64,
    /// Dual estimate `Σ_{s,a} (Σ_h ξ̂_h(s,a)) r̂(s,a)`; agrees with `value`
    /// to within `STRUCT_TOL`.
    pub dual_value: f64,
    /// Unvisited pairs carrying positive occupancy under the target policy,
    /// with their accumulated occupancy mass. Non-empty means the estimate
    /// leans on fallback rows.
    pub fallback_reachable: Vec<((usize, usize), f64)>,
}

/// Evaluates `policy` on the empirical model, reporting both the primal DP
/// value and the occupancy-weighted dual form, plus a coverage warning.
pub fn ope_plugin(emp: &EmpiricalMDP, policy: &Policy) -> Result<OpeEstimate> {
    let sol = evaluate_policy(&emp.mdp, policy)?;
    let occ = occupancy_measures(&emp.mdp, policy)?;

    let mut dual_value = 0.0;
    for s in 0..emp.mdp.num_states() {
        for a in 0..emp.mdp.num_actions() {
            let mut visits = 0.0;
            for h in 0..emp.mdp.horizon() {
                visits += occ.state_action[[h, s, a]];
            }
            dual_value += visits * emp.mdp.reward(s, a);
        }
    }
    debug_assert!(
        (sol.value - dual_value).abs() <= STRUCT_TOL,
        "primal/dual disagreement: {} vs {}",
        sol.value,
        dual_value
    );

    let mut fallback_reachable = Vec::new();
    for &(s, a) in &emp.unvisited {
        let mass: f64 = (0..emp.mdp.horizon())
            .map(|h| occ.state_action[[h, s, a]])
            .sum();
        if mass > 0.0 {
            fallback_reachable.push(((s, a), mass));
        }
    }
    Ok(OpeEstimate {
        value: sol.value,
        dual_value,
        fallback_reachable,
    })
}

/// Model-based planning: the optimal deterministic policy of the empirical
/// model and its empirical value.
pub fn opo_plan(emp: &EmpiricalMDP) -> Result<(Policy, f64)> {
    let (policy, sol) = optimal_policy(&emp.mdp)?;
    Ok((policy, sol.value))
}

/// Value lost by running `planned` instead of the optimal policy, measured
/// on the true model: `v*(truth) - v^planned(truth)`. Never below `-1e-10`.
pub fn suboptimality_gap(truth: &TabularMDP, planned: &Policy) -> Result<f64> {
    let (_, best) = optimal_policy(truth)?;
    let achieved = evaluate_policy(truth, planned)?;
    Ok(best.value - achieved.value)
}

/// Plug-in model whose rows equal the true model exactly (reward and
/// transition taken verbatim), bypassing integer counts. Fixed-point checks
/// use this to confirm the estimators reproduce truth on exact inputs.
pub fn empirical_from_truth(mdp: &TabularMDP) -> EmpiricalMDP {
    EmpiricalMDP {
        mdp: TabularMDP::new(
            mdp.horizon(),
            mdp.transition().clone(),
            mdp.mean_reward().clone(),
            mdp.initial_dist().clone(),
            RewardModel::Deterministic,
        )
        .expect("true model is valid"),
        visit_counts: Array2::from_elem((mdp.num_states(), mdp.num_actions()), 1),
        unvisited: Vec::new(),
        fallback: UnvisitedFallback::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{count_statistics, sample_dataset, DatasetCounts};
    use crate::instances::{bounded_reward_random_instance, RandomStyle};
    use crate::oracle::all_deterministic_policies;
    use ndarray::arr1;

    fn seed7() -> TabularMDP {
        bounded_reward_random_instance(3, 2, 4, 7, RandomStyle::Uniform).unwrap()
    }

    #[test]
    fn empirical_rows_are_count_frequencies() {
        // n(s,a) = 4 with transitions {s1, s1, s2, s1}.
        let mut counts = DatasetCounts {
            n_sa: Array2::zeros((3, 1)),
            n_sas: Array3::zeros((3, 1, 3)),
            reward_sum: Array2::zeros((3, 1)),
            n: 4,
        };
        counts.n_sa[[0, 0]] = 4;
        counts.n_sas[[0, 0, 1]] = 3;
        counts.n_sas[[0, 0, 2]] = 1;
        let emp = build_empirical_mdp(&counts, &arr1(&[1.0, 0.0, 0.0]), 2).unwrap();
        assert_eq!(emp.mdp.transition_prob(0, 0, 1), 0.75);
        assert_eq!(emp.mdp.transition_prob(0, 0, 2), 0.25);
        // Unvisited pairs fall back to self-loops and are flagged.
        assert_eq!(emp.unvisited, vec![(1, 0), (2, 0)]);
        assert_eq!(emp.mdp.transition_prob(1, 0, 1), 1.0);
        assert_eq!(emp.mdp.reward(1, 0), 0.0);
    }

    #[test]
    fn deterministic_truth_recovers_exactly() {
        let mut transition = Array3::zeros((2, 1, 2));
        transition[[0, 0, 1]] = 1.0;
        transition[[1, 0, 0]] = 1.0;
        let mdp = TabularMDP::new(
            4,
            transition,
            Array2::from_elem((2, 1), 0.1),
            arr1(&[1.0, 0.0]),
            RewardModel::Deterministic,
        )
        .unwrap();
        let data = sample_dataset(&mdp, &Policy::uniform(4, 2, 1), 50, 2).unwrap();
        let counts = count_statistics(&data, 2, 1).unwrap();
        let emp = build_empirical_mdp(&counts, mdp.initial_dist(), 4).unwrap();
        assert_eq!(emp.mdp.transition_prob(0, 0, 1), 1.0);
        assert_eq!(emp.mdp.transition_prob(1, 0, 0), 1.0);
        assert!(emp.unvisited.is_empty());
    }

    #[test]
    fn empirical_rows_approach_truth_with_data() {
        let mdp = seed7();
        let data = sample_dataset(&mdp, &Policy::uniform(4, 3, 2), 100_000, 7).unwrap();
        let counts = count_statistics(&data, 3, 2).unwrap();
        let emp = build_empirical_mdp(&counts, mdp.initial_dist(), 4).unwrap();
        let mut worst = 0.0_f64;
        for s in 0..3 {
            for a in 0..2 {
                let l1: f64 = (0..3)
                    .map(|s2| {
                        (emp.mdp.transition_prob(s, a, s2) - mdp.transition_prob(s, a, s2)).abs()
                    })
                    .sum();
                worst = worst.max(l1);
            }
        }
        assert!(worst < 0.05, "worst row L1 distance {worst}");
    }

    #[test]
    fn plugin_of_exact_model_reproduces_truth() {
        let mdp = seed7();
        let emp = empirical_from_truth(&mdp);
        let pi = Policy::random(4, 3, 2, 40);
        let truth_v = evaluate_policy(&mdp, &pi).unwrap().value;
        let est = ope_plugin(&emp, &pi).unwrap();
        assert!((est.value - truth_v).abs() < 1e-14);
        assert!((est.value - est.dual_value).abs() <= STRUCT_TOL);
        assert!(est.fallback_reachable.is_empty());
    }

    #[test]
    fn one_step_bandit_observed_rewards() {
        // Observed rewards {0, 1, 1, 0} at the single pair: estimate 0.5.
        let counts = DatasetCounts {
            n_sa: Array2::from_elem((1, 1), 4),
            n_sas: Array3::from_elem((1, 1, 1), 4),
            reward_sum: Array2::from_elem((1, 1), 2.0),
            n: 4,
        };
        let emp = build_empirical_mdp(&counts, &arr1(&[1.0]), 1).unwrap();
        let est = ope_plugin(&emp, &Policy::uniform(1, 1, 1)).unwrap();
        assert_eq!(est.value, 0.5);
    }

    #[test]
    fn primal_dual_agreement_on_sampled_models() {
        let mdp = seed7();
        for k in [20usize, 200, 2000] {
            let data = sample_dataset(&mdp, &Policy::uniform(4, 3, 2), k, 11).unwrap();
            let counts = count_statistics(&data, 3, 2).unwrap();
            let emp = build_empirical_mdp(&counts, mdp.initial_dist(), 4).unwrap();
            let est = ope_plugin(&emp, &Policy::random(4, 3, 2, 1)).unwrap();
            assert!(
                (est.value - est.dual_value).abs() <= STRUCT_TOL,
                "K={k}: {} vs {}",
                est.value,
                est.dual_value
            );
        }
    }

    #[test]
    fn fallback_warning_fires_when_reachable() {
        // One pair never visited but reachable under the target policy.
        let counts = DatasetCounts {
            n_sa: Array2::from_shape_vec((1, 2), vec![5, 0]).unwrap(),
            n_sas: Array3::from_shape_vec((1, 2, 1), vec![5, 0]).unwrap(),
            reward_sum: Array2::zeros((1, 2)),
            n: 5,
        };
        let emp = build_empirical_mdp(&counts, &arr1(&[1.0]), 2).unwrap();
        let est = ope_plugin(&emp, &Policy::uniform(2, 1, 2)).unwrap();
        assert_eq!(est.fallback_reachable.len(), 1);
        assert_eq!(est.fallback_reachable[0].0, (0, 1));
        assert!(est.fallback_reachable[0].1 > 0.0);
    }

    #[test]
    fn planning_on_exact_model_attains_optimum() {
        let mdp = seed7();
        let emp = empirical_from_truth(&mdp);
        let (pi_hat, v_hat) = opo_plan(&emp).unwrap();
        let (_, best) = optimal_policy(&mdp).unwrap();
        assert!((v_hat - best.value).abs() < 1e-14);
        assert!(suboptimality_gap(&mdp, &pi_hat).unwrap().abs() < 1e-14);
    }

    #[test]
    fn planned_value_is_exhaustive_max_on_tiny_instance() {
        let mdp = bounded_reward_random_instance(2, 2, 2, 13, RandomStyle::Terminal).unwrap();
        let data = sample_dataset(&mdp, &Policy::uniform(2, 2, 2), 300, 8).unwrap();
        let counts = count_statistics(&data, 2, 2).unwrap();
        let emp = build_empirical_mdp(&counts, mdp.initial_dist(), 2).unwrap();
        let (_, v_hat) = opo_plan(&emp).unwrap();
        let mut best = f64::NEG_INFINITY;
        for pi in all_deterministic_policies(2, 2, 2, None).unwrap() {
            best = best.max(evaluate_policy(&emp.mdp, &pi).unwrap().value);
        }
        assert!((v_hat - best).abs() <= 1e-12);
    }

    #[test]
    fn gap_is_nonnegative_and_bounded_for_random_policies() {
        let mdp = seed7();
        for seed in 0..50u64 {
            let pi = Policy::random(4, 3, 2, seed);
            let gap = suboptimality_gap(&mdp, &pi).unwrap();
            assert!(gap >= -1e-10);
            assert!(gap <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn uniform_fallback_also_normalizes() {
        let counts = DatasetCounts {
            n_sa: Array2::zeros((3, 1)),
            n_sas: Array3::zeros((3, 1, 3)),
            reward_sum: Array2::zeros((3, 1)),
            n: 0,
        };
        let emp = build_empirical_mdp_with(
            &counts,
            &arr1(&[1.0, 0.0, 0.0]),
            2,
            UnvisitedFallback::UniformZeroReward,
        )
        .unwrap();
        assert_eq!(emp.unvisited.len(), 3);
        emp.mdp.validate().unwrap();
    }
}
