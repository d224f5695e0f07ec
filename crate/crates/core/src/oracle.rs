//! Brute-force oracles: exact trajectory enumeration and exhaustive policy
//! enumeration. These deliberately avoid the dynamic-programming code paths in
//! [`crate::solve`] so the two routes can check each other.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMDP};

/// Default cap on `(S·A)^H`, the trajectory count of the enumeration oracle.
pub const DEFAULT_ORACLE_CAP: f64 = 1e7;

/// Exact expected cumulative reward of `policy`, by summing
/// probability-weighted mean-reward totals over every trajectory.
///
/// Errors with `InstanceTooLarge` when `(S·A)^H` exceeds `cap`
/// (default [`DEFAULT_ORACLE_CAP`]).
pub fn enumerate_policy_value(
    mdp: &TabularMDP,
    policy: &Policy,
    cap: Option<f64>,
) -> Result<f64> {
    check_shapes(mdp, policy)?;
    let cap = cap.unwrap_or(DEFAULT_ORACLE_CAP);
    let size = ((mdp.num_states() * mdp.num_actions()) as f64).powi(mdp.horizon() as i32);
    if size > cap {
        return Err(Error::InstanceTooLarge { size, cap });
    }

    let mut total = 0.0;
    for s0 in 0..mdp.num_states() {
        let p0 = mdp.initial_dist()[s0];
        if p0 > 0.0 {
            total += walk(mdp, policy, 0, s0, p0, 0.0);
        }
    }
    Ok(total)
}

fn walk(mdp: &TabularMDP, policy: &Policy, h: usize, s: usize, prob: f64, reward: f64) -> f64 {
    if h == mdp.horizon() {
        return prob * reward;
    }
    let mut acc = 0.0;
    for a in 0..mdp.num_actions() {
        let pa = policy.prob(h, s, a);
        if pa == 0.0 {
            continue;
        }
        let r = mdp.reward(s, a);
        for s2 in 0..mdp.num_states() {
            let pt = mdp.transition_prob(s, a, s2);
            if pt > 0.0 {
                acc += walk(mdp, policy, h + 1, s2, prob * pa * pt, reward + r);
            }
        }
    }
    acc
}

/// Outcome of the bounded-total-reward check.
#[derive(Debug, Clone)]
pub enum BoundedRewardCheck {
    /// Every positive-probability trajectory has maximum possible reward ≤ 1.
    Bounded { max_total: f64 },
    /// A witness trajectory whose reward upper bound exceeds 1.
    Violated {
        max_total: f64,
        witness: Vec<(usize, usize)>,
    },
}

impl BoundedRewardCheck {
    pub fn is_bounded(&self) -> bool {
        matches!(self, BoundedRewardCheck::Bounded { .. })
    }
}

/// Checks that no realizable trajectory can accumulate reward above one,
/// using the reward model's per-step upper bounds (so a Bernoulli pair with
/// positive mean counts as a full unit).
///
/// The maximum over trajectories of an additive per-step bound is computed
/// exactly by a max-over-support recursion, so no enumeration cap applies;
/// small-instance tests cross-check it against literal trajectory walks.
pub fn verify_bounded_total_reward(mdp: &TabularMDP) -> BoundedRewardCheck {
    let s_n = mdp.num_states();
    let a_n = mdp.num_actions();
    let h_n = mdp.horizon();
    let model = mdp.reward_model();

    // upper[h][s]: largest achievable reward-bound sum from (h, s) onward.
    let mut upper = Array2::<f64>::zeros((h_n + 1, s_n));
    let mut best_action = Array2::<usize>::zeros((h_n, s_n));
    let mut best_next = Array2::<usize>::zeros((h_n, s_n));
    for h in (0..h_n).rev() {
        for s in 0..s_n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..a_n {
                let step = model.max_support(mdp.reward(s, a));
                let mut reach_best = f64::NEG_INFINITY;
                let mut reach_arg = 0;
                for s2 in 0..s_n {
                    if mdp.transition_prob(s, a, s2) > 0.0 && upper[[h + 1, s2]] > reach_best {
                        reach_best = upper[[h + 1, s2]];
                        reach_arg = s2;
                    }
                }
                let total = step + reach_best;
                if total > best {
                    best = total;
                    best_action[[h, s]] = a;
                    best_next[[h, s]] = reach_arg;
                }
            }
            upper[[h, s]] = best;
        }
    }

    let mut max_total = f64::NEG_INFINITY;
    let mut start = 0;
    for s in 0..s_n {
        if mdp.initial_dist()[s] > 0.0 && upper[[0, s]] > max_total {
            max_total = upper[[0, s]];
            start = s;
        }
    }

    if max_total <= 1.0 + DIST_SLACK {
        BoundedRewardCheck::Bounded { max_total }
    } else {
        let mut witness = Vec::with_capacity(h_n);
        let mut s = start;
        for h in 0..h_n {
            let a = best_action[[h, s]];
            witness.push((s, a));
            s = best_next[[h, s]];
        }
        BoundedRewardCheck::Violated { max_total, witness }
    }
}

const DIST_SLACK: f64 = 1e-12;

/// All `A^(S·H)` deterministic non-stationary policies, for exhaustive
/// planning checks on tiny instances.
pub fn all_deterministic_policies(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    cap: Option<f64>,
) -> Result<Vec<Policy>> {
    let cap = cap.unwrap_or(DEFAULT_ORACLE_CAP);
    let cells = horizon * num_states;
    let count = (num_actions as f64).powi(cells as i32);
    if count > cap {
        return Err(Error::InstanceTooLarge { size: count, cap });
    }
    let count = count as usize;
    let mut policies = Vec::with_capacity(count);
    for mut code in 0..count {
        let mut actions = Array2::<usize>::zeros((horizon, num_states));
        for h in 0..horizon {
            for s in 0..num_states {
                actions[[h, s]] = code % num_actions;
                code /= num_actions;
            }
        }
        policies.push(Policy::from_actions(&actions, num_actions)?);
    }
    Ok(policies)
}

fn check_shapes(mdp: &TabularMDP, policy: &Policy) -> Result<()> {
    if policy.horizon() != mdp.horizon() {
        return Err(Error::DimensionMismatch {
            context: "policy horizon".into(),
            expected: mdp.horizon(),
            got: policy.horizon(),
        });
    }
    if policy.num_states() != mdp.num_states() {
        return Err(Error::DimensionMismatch {
            context: "policy states".into(),
            expected: mdp.num_states(),
            got: policy.num_states(),
        });
    }
    if policy.num_actions() != mdp.num_actions() {
        return Err(Error::DimensionMismatch {
            context: "policy actions".into(),
            expected: mdp.num_actions(),
            got: policy.num_actions(),
        });
    }
    Ok(())
}
