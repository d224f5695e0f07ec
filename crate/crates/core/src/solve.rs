//! Exact dynamic-programming solvers: policy evaluation (backward recursion),
//! occupancy measures (forward recursion), the dual value identity and
//! optimal planning by backward induction.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::mdp::{OccupancyMeasures, Policy, TabularMDP, ValueSolution};

/// Evaluates `policy` exactly: `Q_h = r + P V_{h+1}` with `V_{H+1} ≡ 0`,
/// `V_h(s) = Σ_a π_h(a|s) Q_h(s, a)` and `v = Σ_s μ(s) V_1(s)`.
pub fn evaluate_policy(mdp: &TabularMDP, policy: &Policy) -> Result<ValueSolution> {
    check_shapes(mdp, policy)?;
    let (s_n, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());

    let mut v = Array2::<f64>::zeros((h_n + 1, s_n));
    let mut q = Array3::<f64>::zeros((h_n, s_n, a_n));
    for h in (0..h_n).rev() {
        for s in 0..s_n {
            let mut vs = 0.0;
            for a in 0..a_n {
                let mut future = 0.0;
                for s2 in 0..s_n {
                    future += mdp.transition_prob(s, a, s2) * v[[h + 1, s2]];
                }
                let qa = mdp.reward(s, a) + future;
                q[[h, s, a]] = qa;
                vs += policy.prob(h, s, a) * qa;
            }
            v[[h, s]] = vs;
        }
    }

    let mut value = 0.0;
    for s in 0..s_n {
        value += mdp.initial_dist()[s] * v[[0, s]];
    }
    Ok(ValueSolution {
        v_values: v,
        q_values: q,
        value,
    })
}

/// Reaching probabilities under `policy`: `ξ_1(s) = μ(s)`,
/// `ξ_h(s, a) = ξ_h(s) π_h(a|s)` and `ξ_{h+1}(s') = Σ_{s,a} ξ_h(s, a) P(s'|s, a)`.
pub fn occupancy_measures(mdp: &TabularMDP, policy: &Policy) -> Result<OccupancyMeasures> {
    check_shapes(mdp, policy)?;
    let (s_n, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());

    let mut state = Array2::<f64>::zeros((h_n, s_n));
    let mut state_action = Array3::<f64>::zeros((h_n, s_n, a_n));
    for s in 0..s_n {
        state[[0, s]] = mdp.initial_dist()[s];
    }
    for h in 0..h_n {
        for s in 0..s_n {
            let xs = state[[h, s]];
            if xs == 0.0 {
                continue;
            }
            for a in 0..a_n {
                state_action[[h, s, a]] = xs * policy.prob(h, s, a);
            }
        }
        if h + 1 < h_n {
            for s in 0..s_n {
                for a in 0..a_n {
                    let xsa = state_action[[h, s, a]];
                    if xsa == 0.0 {
                        continue;
                    }
                    for s2 in 0..s_n {
                        state[[h + 1, s2]] += xsa * mdp.transition_prob(s, a, s2);
                    }
                }
            }
        }
    }
    Ok(OccupancyMeasures {
        state,
        state_action,
    })
}

/// Dual form of the policy value: `Σ_{s,a} (Σ_h ξ_h(s, a)) r(s, a)`.
///
/// Agrees with [`evaluate_policy`] to `STRUCT_TOL` when `occ` was computed on
/// the same model and policy.
pub fn dual_policy_value(mdp: &TabularMDP, occ: &OccupancyMeasures) -> Result<f64> {
    let (h_n, s_n, a_n) = occ.state_action.dim();
    if s_n != mdp.num_states() || a_n != mdp.num_actions() || h_n != mdp.horizon() {
        return Err(Error::DimensionMismatch {
            context: "occupancy shape".into(),
            expected: mdp.horizon() * mdp.num_states() * mdp.num_actions(),
            got: h_n * s_n * a_n,
        });
    }
    let mut value = 0.0;
    for s in 0..s_n {
        for a in 0..a_n {
            let mut visits = 0.0;
            for h in 0..h_n {
                visits += occ.state_action[[h, s, a]];
            }
            value += visits * mdp.reward(s, a);
        }
    }
    Ok(value)
}

/// Optimal non-stationary deterministic policy by backward induction.
///
/// Ties break toward the lowest action index. The returned solution is the
/// optimal value function, so it dominates every policy at every `(h, s)`.
pub fn optimal_policy(mdp: &TabularMDP) -> Result<(Policy, ValueSolution)> {
    let (s_n, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());

    let mut v = Array2::<f64>::zeros((h_n + 1, s_n));
    let mut q = Array3::<f64>::zeros((h_n, s_n, a_n));
    let mut actions = Array2::<usize>::zeros((h_n, s_n));
    for h in (0..h_n).rev() {
        for s in 0..s_n {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..a_n {
                let mut future = 0.0;
                for s2 in 0..s_n {
                    future += mdp.transition_prob(s, a, s2) * v[[h + 1, s2]];
                }
                let qa = mdp.reward(s, a) + future;
                q[[h, s, a]] = qa;
                if qa > best {
                    best = qa;
                    best_a = a;
                }
            }
            v[[h, s]] = best;
            actions[[h, s]] = best_a;
        }
    }

    let mut value = 0.0;
    for s in 0..s_n {
        value += mdp.initial_dist()[s] * v[[0, s]];
    }
    let policy = Policy::from_actions(&actions, a_n)?;
    Ok((
        policy,
        ValueSolution {
            v_values: v,
            q_values: q,
            value,
        },
    ))
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
