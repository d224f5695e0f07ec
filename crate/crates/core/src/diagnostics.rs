//! Checkable numerical statements about empirical models.
//!
//! Everything here evaluates both sides of an identity or inequality on
//! concrete `(true model, empirical model, policy)` triples and reports the
//! numbers. Three kinds of facts are covered:
//!
//! - an exact decomposition of the evaluation error `v - v̂` into reward and
//!   per-step transition terms (an algebraic identity, residual ≤ 1e-9);
//! - deterministic inequalities that hold on every bounded-total-reward
//!   instance: the variance recursions for evaluation and for planning, and
//!   the `3v` bound on the occupancy-weighted variance of one-step returns;
//! - probabilistic half-widths (Bernstein, and its union-over-states
//!   variant) whose empirical coverage experiments audit separately.
//!
//! The inequality checkers deliberately recompute everything from scratch —
//! occupancies, value powers, variances — so they stay independent of any
//! shortcut the estimator might take.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{opo_plan, EmpiricalMDP};
use crate::mdp::{OccupancyMeasures, Policy, TabularMDP};
use crate::solve::{evaluate_policy, occupancy_measures, optimal_policy};

/// Tolerance on the exact decomposition identity.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Slack added to the right-hand side of deterministic inequalities.
pub const INEQ_TOL: f64 = 1e-9;

/// Structured outcome of one checker, serializable for report files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub params: BTreeMap<String, f64>,
}

impl CheckReport {
    fn new(name: &str, lhs: f64, rhs: f64, params: BTreeMap<String, f64>) -> Self {
        CheckReport {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs <= rhs + INEQ_TOL,
            params,
        }
    }
}

/// Exact split of `v^π - v̂^π` into a reward term and per-step transition
/// terms, all weighted by the empirical occupancy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// `Σ_h Σ_{s,a} ξ̂_h(s,a) (r - r̂)(s,a)`.
    pub reward_term: f64,
    /// Per step `h`: `Σ_{s,a} ξ̂_h(s,a) Σ_{s'} (P - P̂)(s'|s,a) V_{h+1}(s')`,
    /// with `V` the true value function of the evaluated policy.
    pub transition_terms: Vec<f64>,
    /// Sum of all terms.
    pub total: f64,
    /// `|total - (v - v̂)|`; at most [`RESIDUAL_TOL`] (the split is an
    /// algebraic identity, so only rounding contributes).
    pub residual: f64,
}

impl DecompositionReport {
    pub fn holds(&self) -> bool {
        self.residual <= RESIDUAL_TOL
    }

    pub fn check_report(&self) -> CheckReport {
        CheckReport {
            name: "value-difference-residual".into(),
            lhs: self.residual,
            rhs: RESIDUAL_TOL,
            holds: self.holds(),
            params: BTreeMap::new(),
        }
    }
}

/// Computes the exact error decomposition for `policy` between `truth` and
/// the empirical model.
pub fn value_difference_decomposition(
    truth: &TabularMDP,
    emp: &EmpiricalMDP,
    policy: &Policy,
) -> Result<DecompositionReport> {
    check_same_shape(truth, emp)?;
    let true_sol = evaluate_policy(truth, policy)?;
    let emp_sol = evaluate_policy(&emp.mdp, policy)?;
    let occ = occupancy_measures(&emp.mdp, policy)?;

    let (s_n, a_n, h_n) = (truth.num_states(), truth.num_actions(), truth.horizon());
    let mut reward_term = 0.0;
    let mut transition_terms = vec![0.0; h_n];
    for h in 0..h_n {
        let mut step = 0.0;
        for s in 0..s_n {
            for a in 0..a_n {
                let xi = occ.state_action[[h, s, a]];
                if xi == 0.0 {
                    continue;
                }
                reward_term += xi * (truth.reward(s, a) - emp.mdp.reward(s, a));
                let mut inner = 0.0;
                for s2 in 0..s_n {
                    inner += (truth.transition_prob(s, a, s2)
                        - emp.mdp.transition_prob(s, a, s2))
                        * true_sol.v_values[[h + 1, s2]];
                }
                step += xi * inner;
            }
        }
        transition_terms[h] = step;
    }
    let total = reward_term + transition_terms.iter().sum::<f64>();
    let residual = (total - (true_sol.value - emp_sol.value)).abs();
    Ok(DecompositionReport {
        reward_term,
        transition_terms,
        total,
        residual,
    })
}

/// Occupancy-weighted total variance of the `2^i`-th power of a value table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceProfile {
    pub power_index: u32,
    /// `Σ_h Σ_{s,a} ξ_h(s,a) Var_{P(s,a)}(V_{h+1}(s')^{2^i})`.
    pub total: f64,
    pub per_step: Vec<f64>,
}

/// Computes the total variance functional with the **true** transition kernel
/// and a caller-chosen occupancy (exact or empirical).
///
/// `values` must be an `[H + 1, S]` table in `[0, 1]`; powers are taken by
/// repeated squaring with clamping.
pub fn total_variance(
    truth: &TabularMDP,
    occ: &OccupancyMeasures,
    values: &Array2<f64>,
    power_index: u32,
) -> Result<VarianceProfile> {
    let (s_n, a_n, h_n) = (truth.num_states(), truth.num_actions(), truth.horizon());
    if values.dim() != (h_n + 1, s_n) {
        return Err(Error::DimensionMismatch {
            context: "value table".into(),
            expected: (h_n + 1) * s_n,
            got: values.len(),
        });
    }
    if occ.state_action.dim() != (h_n, s_n, a_n) {
        return Err(Error::DimensionMismatch {
            context: "occupancy".into(),
            expected: h_n * s_n * a_n,
            got: occ.state_action.len(),
        });
    }
    check_unit_interval(values)?;
    let powered = power_table(values, power_index);

    let mut per_step = vec![0.0; h_n];
    for h in 0..h_n {
        let mut acc = 0.0;
        for s in 0..s_n {
            for a in 0..a_n {
                let xi = occ.state_action[[h, s, a]];
                if xi == 0.0 {
                    continue;
                }
                acc += xi * next_state_variance(truth, s, a, &powered, h + 1);
            }
        }
        per_step[h] = acc;
    }
    Ok(VarianceProfile {
        power_index,
        total: per_step.iter().sum(),
        per_step,
    })
}

/// Variance recursion for evaluation: with `V` the true value function of
/// `policy` and `ξ̂` the empirical occupancy,
///
/// `Σ ξ̂ Var_P(V_{h+1}^{2^i})  ≤  Σ ξ̂ (P - P̂) V_{h+1}^{2^{i+1}} + 2^{i+1}`.
///
/// This is deterministic on bounded-total-reward instances — no sampling
/// luck involved — so `holds` must come back true on every valid input.
pub fn check_recursion_evaluation(
    truth: &TabularMDP,
    emp: &EmpiricalMDP,
    policy: &Policy,
    power_index: u32,
) -> Result<CheckReport> {
    check_same_shape(truth, emp)?;
    require_bounded(truth)?;
    let values = evaluate_policy(truth, policy)?.v_values;
    let occ = occupancy_measures(&emp.mdp, policy)?;

    let lhs = total_variance(truth, &occ, &values, power_index)?.total;
    let next_power = power_table(&values, power_index + 1);
    let cross = occupancy_weighted_gap(truth, emp, &occ, &next_power);
    let constant = 2f64.powi(power_index as i32 + 1);
    let rhs = cross + constant;

    let mut params = BTreeMap::new();
    params.insert("i".into(), power_index as f64);
    params.insert("horizon".into(), truth.horizon() as f64);
    Ok(CheckReport::new(
        "variance-recursion-evaluation",
        lhs,
        rhs,
        params,
    ))
}

/// Which value table the planning-side recursion is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizationMode {
    /// The optimal value function itself.
    OptimalValue,
    /// The gap `V^* - V^{planned}`, both measured on the true model.
    ValueDifference,
}

/// Variance recursion for planning: with `π̂` planned on the empirical model,
/// `ξ̂` its empirical occupancy and `V` per [`OptimizationMode`],
///
/// `Σ ξ̂ Var_P(V_{h+1}^{2^i}) ≤ Σ ξ̂ (P - P̂) V_{h+1}^{2^{i+1}}
///    + 2^{i+1} [ Σ_s μ(s) V_1(s) + Σ ξ̂ (P̂ - P) V_{h+1} ]`.
///
/// The cross term enters with `P̂ - P`: the `μ·V_1` telescoping that produces
/// it flips the difference's sign relative to the leading term.
pub fn check_recursion_optimization(
    truth: &TabularMDP,
    emp: &EmpiricalMDP,
    power_index: u32,
    mode: OptimizationMode,
) -> Result<CheckReport> {
    check_same_shape(truth, emp)?;
    require_bounded(truth)?;
    let (planned, _) = opo_plan(emp)?;
    let (_, best) = optimal_policy(truth)?;
    let values = match mode {
        OptimizationMode::OptimalValue => best.v_values,
        OptimizationMode::ValueDifference => {
            let achieved = evaluate_policy(truth, &planned)?.v_values;
            let mut diff = best.v_values;
            // The optimal value dominates pointwise; clamp rounding dust so
            // powers stay in [0, 1].
            diff.zip_mut_with(&achieved, |b, &a| *b = (*b - a).clamp(0.0, 1.0));
            diff
        }
    };
    let occ = occupancy_measures(&emp.mdp, &planned)?;

    let lhs = total_variance(truth, &occ, &values, power_index)?.total;
    let next_power = power_table(&values, power_index + 1);
    let leading = occupancy_weighted_gap(truth, emp, &occ, &next_power);
    let cross = -occupancy_weighted_gap(truth, emp, &occ, &values);
    let mut initial = 0.0;
    for s in 0..truth.num_states() {
        initial += truth.initial_dist()[s] * values[[0, s]];
    }
    let constant = 2f64.powi(power_index as i32 + 1);
    let rhs = leading + constant * (initial + cross);

    let mut params = BTreeMap::new();
    params.insert("i".into(), power_index as f64);
    params.insert(
        "mode".into(),
        match mode {
            OptimizationMode::OptimalValue => 0.0,
            OptimizationMode::ValueDifference => 1.0,
        },
    );
    Ok(CheckReport::new(
        "variance-recursion-optimization",
        lhs,
        rhs,
        params,
    ))
}

/// One-step-return variance bound: with the **exact** occupancy of `policy`,
///
/// `Σ_h Σ_{s,a} ξ_h(s,a) Var(r(s,a) + V_{h+1}(s'))  ≤  3 v^π`,
///
/// where the reward contributes its model variance (zero for deterministic
/// rewards). Deterministic on bounded-total-reward instances.
pub fn check_mis_variance_bound(truth: &TabularMDP, policy: &Policy) -> Result<CheckReport> {
    require_bounded(truth)?;
    let sol = evaluate_policy(truth, policy)?;
    let occ = occupancy_measures(truth, policy)?;

    let (s_n, a_n, h_n) = (truth.num_states(), truth.num_actions(), truth.horizon());
    let mut total_var = 0.0;
    for h in 0..h_n {
        for s in 0..s_n {
            for a in 0..a_n {
                let xi = occ.state_action[[h, s, a]];
                if xi == 0.0 {
                    continue;
                }
                let var_next = next_state_variance(truth, s, a, &sol.v_values, h + 1);
                total_var += xi * (truth.reward_variance(s, a) + var_next);
            }
        }
    }
    let mut params = BTreeMap::new();
    params.insert("value".into(), sol.value);
    Ok(CheckReport::new(
        "mis-variance-bound",
        total_var,
        3.0 * sol.value,
        params,
    ))
}

/// Two-sided Bernstein half-width for the mean of `n` i.i.d. draws bounded in
/// `[0, range]`: `sqrt(2 Var log(2/δ) / n) + range · log(2/δ) / (3n)`.
pub fn bernstein_bound(n: u64, variance: f64, range: f64, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n".into(),
            value: 0.0,
            requirement: "need at least one sample".into(),
        });
    }
    if !(variance >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "variance".into(),
            value: variance,
            requirement: "must be nonnegative".into(),
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "delta".into(),
            value: delta,
            requirement: "must lie in (0, 1)".into(),
        });
    }
    let log_term = (2.0 / delta).ln();
    let n = n as f64;
    Ok((2.0 * variance * log_term / n).sqrt() + range * log_term / (3.0 * n))
}

/// Union-over-states deviation half-width for data-dependent value tables:
/// `sqrt(S · Var · ι / n) + S · ι / n` with `ι = log(2/δ)`. Wider than the
/// plain Bernstein width by the `S` factor, which is the price of covering
/// values that depend on the estimated kernel.
pub fn s_factor_deviation_bound(
    n: u64,
    variance: f64,
    num_states: usize,
    delta: f64,
) -> Result<f64> {
    if n == 0 || num_states == 0 {
        return Err(Error::InvalidParameter {
            name: "n / num_states".into(),
            value: 0.0,
            requirement: "must be positive".into(),
        });
    }
    if !(variance >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "variance".into(),
            value: variance,
            requirement: "must be nonnegative".into(),
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "delta".into(),
            value: delta,
            requirement: "must lie in (0, 1)".into(),
        });
    }
    let iota = (2.0 / delta).ln();
    let n = n as f64;
    let s = num_states as f64;
    Ok((s * variance * iota / n).sqrt() + s * iota / n)
}

/// Numeric witness of the worst-case recursion
/// `V(i) = sqrt(λ1 V(i+1)) + λ1 + 2^{i+1} λ2`, iterated downward from the
/// trivial cap `V(i) ≤ H`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecursionSolveReport {
    /// Maximal consistent `V(0)`.
    pub v0: f64,
    /// The closed-form budget `6 (λ1 + λ2)` it must stay under.
    pub bound: f64,
    /// Number of levels where the recursion carries information, i.e. where
    /// `2^{2i} λ2² ≤ λ1 V(i)`. At most `log2(H λ1 / λ2²) / 2 + 1`, so the
    /// depth grows logarithmically with `H λ1 / λ2²`.
    pub iterations: usize,
    pub holds: bool,
}

/// Iterates the recursion down from the cap and confirms the budget.
pub fn solve_recursion_numeric(
    lambda1: f64,
    lambda2: f64,
    horizon_cap: f64,
) -> Result<RecursionSolveReport> {
    for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(v > 0.0) {
            return Err(Error::InvalidParameter {
                name: name.into(),
                value: v,
                requirement: "must be positive".into(),
            });
        }
    }
    if !(horizon_cap >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "horizon_cap".into(),
            value: horizon_cap,
            requirement: "must be at least one".into(),
        });
    }

    // Above this level the `2^{i+1} λ2` term alone exceeds the cap, so the
    // sequence is pinned at `H` there and the downward pass loses nothing.
    let top = ((horizon_cap / lambda2).log2().ceil().max(0.0) as usize) + 2;
    let mut values = vec![horizon_cap; top + 1];
    for i in (0..top).rev() {
        let raw = (lambda1 * values[i + 1]).sqrt()
            + lambda1
            + 2f64.powi(i as i32 + 1) * lambda2;
        values[i] = raw.min(horizon_cap);
    }
    let iterations = (0..top)
        .filter(|&i| 4f64.powi(i as i32) * lambda2 * lambda2 <= lambda1 * values[i])
        .count();
    let bound = 6.0 * (lambda1 + lambda2);
    Ok(RecursionSolveReport {
        v0: values[0],
        bound,
        iterations,
        holds: values[0] <= bound + 1e-12,
    })
}

fn require_bounded(truth: &TabularMDP) -> Result<()> {
    if truth.is_certified_bounded() {
        Ok(())
    } else {
        Err(Error::UnboundedRewardInstance)
    }
}

fn check_same_shape(truth: &TabularMDP, emp: &EmpiricalMDP) -> Result<()> {
    if truth.num_states() != emp.mdp.num_states()
        || truth.num_actions() != emp.mdp.num_actions()
        || truth.horizon() != emp.mdp.horizon()
    {
        return Err(Error::DimensionMismatch {
            context: "true vs empirical model shape".into(),
            expected: truth.num_states() * truth.num_actions() * truth.horizon(),
            got: emp.mdp.num_states() * emp.mdp.num_actions() * emp.mdp.horizon(),
        });
    }
    Ok(())
}

fn check_unit_interval(values: &Array2<f64>) -> Result<()> {
    for ((h, s), &x) in values.indexed_iter() {
        if !(-1e-12..=1.0 + 1e-12).contains(&x) {
            return Err(Error::ValueOutOfRange {
                value: x,
                location: format!("(h={h}, s={s})"),
            });
        }
    }
    Ok(())
}

/// Elementwise `x^(2^i)` by repeated squaring, clamped to [0, 1] each square
/// to suppress floating drift.
fn power_table(values: &Array2<f64>, power_index: u32) -> Array2<f64> {
    let mut out = values.mapv(|x| x.clamp(0.0, 1.0));
    for _ in 0..power_index {
        out.mapv_inplace(|x| (x * x).clamp(0.0, 1.0));
    }
    out
}

/// `Var_{P(s,a)}` of a value table row under the true kernel.
fn next_state_variance(
    truth: &TabularMDP,
    s: usize,
    a: usize,
    table: &Array2<f64>,
    row: usize,
) -> f64 {
    let mut mean = 0.0;
    let mut second = 0.0;
    for s2 in 0..truth.num_states() {
        let p = truth.transition_prob(s, a, s2);
        if p > 0.0 {
            let x = table[[row, s2]];
            mean += p * x;
            second += p * x * x;
        }
    }
    (second - mean * mean).max(0.0)
}

/// `Σ_h Σ_{s,a} ξ_h(s,a) Σ_{s'} (P - P̂)(s'|s,a) · table_{h+1}(s')`.
fn occupancy_weighted_gap(
    truth: &TabularMDP,
    emp: &EmpiricalMDP,
    occ: &OccupancyMeasures,
    table: &Array2<f64>,
) -> f64 {
    let (s_n, a_n, h_n) = (truth.num_states(), truth.num_actions(), truth.horizon());
    let mut acc = 0.0;
    for h in 0..h_n {
        for s in 0..s_n {
            for a in 0..a_n {
                let xi = occ.state_action[[h, s, a]];
                if xi == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for s2 in 0..s_n {
                    inner += (truth.transition_prob(s, a, s2)
                        - emp.mdp.transition_prob(s, a, s2))
                        * table[[h + 1, s2]];
                }
                acc += xi * inner;
            }
        }
    }
    acc
}
