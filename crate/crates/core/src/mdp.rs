//! Episodic time-homogeneous tabular MDPs and non-stationary policies.
//!
//! An instance holds a transition kernel `P(s'|s, a)`, mean rewards
//! `r(s, a) ∈ [0, 1]`, an initial state distribution and a horizon `H`.
//! `P` and `r` do not depend on the step index; value functions still do.
//! Policies are stored per step as `π_h(a|s)` even when stationary.

use ndarray::{Array1, Array2, Array3, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_categorical, stable_hash_hex, stream_rng};

/// Tolerance for distribution normalization checks at construction.
pub const DIST_TOL: f64 = 1e-12;

/// Tolerance for structural identities (normalization of computed
/// occupancies, primal-dual agreement).
pub const STRUCT_TOL: f64 = 1e-10;

/// How observed rewards are drawn around the mean reward `r(s, a)`.
///
/// `Bernoulli` draws from {0, 1} with mean `r(s, a)` (the maximal-variance
/// distribution supported on [0, 1] with that mean); `Deterministic` always
/// emits `r(s, a)`. Bounded-total-reward families use deterministic rewards,
/// since a unit-support draw at a reward-bearing pair visited twice would
/// already break the trajectory-sum bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardModel {
    Bernoulli,
    Deterministic,
}

impl RewardModel {
    /// Variance of the observed reward at mean `r`.
    pub fn variance(self, r: f64) -> f64 {
        match self {
            RewardModel::Bernoulli => r * (1.0 - r),
            RewardModel::Deterministic => 0.0,
        }
    }

    /// Largest value the observed reward can take at mean `r`.
    pub fn max_support(self, r: f64) -> f64 {
        match self {
            RewardModel::Bernoulli => {
                if r > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            RewardModel::Deterministic => r,
        }
    }
}

/// Full model of an episodic time-homogeneous tabular MDP.
#[derive(Debug, Clone)]
pub struct TabularMDP {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    transition: Array3<f64>,  // [S, A, S']
    mean_reward: Array2<f64>, // [S, A]
    initial_dist: Array1<f64>,
    reward_model: RewardModel,
    bounded_total_reward: bool,
}

impl TabularMDP {
    /// Validates shapes, row normalization and reward range.
    pub fn new(
        horizon: usize,
        transition: Array3<f64>,
        mean_reward: Array2<f64>,
        initial_dist: Array1<f64>,
        reward_model: RewardModel,
    ) -> Result<Self> {
        let (s, a, s2) = transition.dim();
        if s2 != s {
            return Err(Error::DimensionMismatch {
                context: "transition next-state axis".into(),
                expected: s,
                got: s2,
            });
        }
        if horizon == 0 || s == 0 || a == 0 {
            return Err(Error::InvalidParameter {
                name: "shape (S, A, H)".into(),
                value: (s.min(a).min(horizon)) as f64,
                requirement: "all of S, A, H must be positive".into(),
            });
        }
        if mean_reward.dim() != (s, a) {
            return Err(Error::DimensionMismatch {
                context: "mean_reward rows".into(),
                expected: s * a,
                got: mean_reward.len(),
            });
        }
        if initial_dist.len() != s {
            return Err(Error::DimensionMismatch {
                context: "initial_dist".into(),
                expected: s,
                got: initial_dist.len(),
            });
        }
        let mdp = Self {
            num_states: s,
            num_actions: a,
            horizon,
            transition,
            mean_reward,
            initial_dist,
            reward_model,
            bounded_total_reward: false,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Re-checks the probability and reward invariants.
    pub fn validate(&self) -> Result<()> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let mut sum = 0.0;
                for s2 in 0..self.num_states {
                    let p = self.transition[[s, a, s2]];
                    if p < 0.0 {
                        return Err(Error::NegativeEntry {
                            what: "transition row".into(),
                            index: format!("(s={s}, a={a}, s'={s2})"),
                            value: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > DIST_TOL {
                    return Err(Error::InvalidDistribution {
                        what: "transition row".into(),
                        index: format!("(s={s}, a={a})"),
                        sum,
                    });
                }
                let r = self.mean_reward[[s, a]];
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::RewardOutOfRange {
                        state: s,
                        action: a,
                        value: r,
                    });
                }
            }
        }
        let mut mu_sum = 0.0;
        for s in 0..self.num_states {
            let m = self.initial_dist[s];
            if m < 0.0 {
                return Err(Error::NegativeEntry {
                    what: "initial_dist".into(),
                    index: format!("(s={s})"),
                    value: m,
                });
            }
            mu_sum += m;
        }
        if (mu_sum - 1.0).abs() > DIST_TOL {
            return Err(Error::InvalidDistribution {
                what: "initial_dist".into(),
                index: "(all states)".into(),
                sum: mu_sum,
            });
        }
        Ok(())
    }

    /// Attaches the generator certificate that every realizable trajectory's
    /// reward sum is at most one. `verify_bounded_total_reward` re-checks it.
    pub fn with_bounded_total_reward_certificate(mut self) -> Self {
        self.bounded_total_reward = true;
        self
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn transition(&self) -> &Array3<f64> {
        &self.transition
    }

    pub fn transition_prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[[s, a, s2]]
    }

    pub fn mean_reward(&self) -> &Array2<f64> {
        &self.mean_reward
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.mean_reward[[s, a]]
    }

    pub fn initial_dist(&self) -> &Array1<f64> {
        &self.initial_dist
    }

    pub fn reward_model(&self) -> RewardModel {
        self.reward_model
    }

    pub fn is_certified_bounded(&self) -> bool {
        self.bounded_total_reward
    }

    /// Variance of the observed reward at `(s, a)` under the reward model.
    pub fn reward_variance(&self, s: usize, a: usize) -> f64 {
        self.reward_model.variance(self.mean_reward[[s, a]])
    }

    pub fn sample_initial_state<R: Rng>(&self, rng: &mut R) -> usize {
        sample_categorical(rng, self.initial_dist.as_slice().unwrap())
    }

    pub fn sample_next_state<R: Rng>(&self, rng: &mut R, s: usize, a: usize) -> usize {
        let row = self.transition.slice(ndarray::s![s, a, ..]);
        sample_categorical(rng, row.as_slice().unwrap())
    }

    pub fn sample_reward<R: Rng>(&self, rng: &mut R, s: usize, a: usize) -> f64 {
        let r = self.mean_reward[[s, a]];
        match self.reward_model {
            RewardModel::Deterministic => r,
            RewardModel::Bernoulli => {
                if rng.gen::<f64>() < r {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn to_json(&self) -> String {
        let wire = TabularMdpWire {
            schema: TABULAR_MDP_SCHEMA.into(),
            num_states: self.num_states,
            num_actions: self.num_actions,
            horizon: self.horizon,
            transition: self.transition.iter().copied().collect(),
            mean_reward: self.mean_reward.iter().copied().collect(),
            initial_dist: self.initial_dist.to_vec(),
            reward_model: self.reward_model,
            bounded_total_reward: self.bounded_total_reward,
        };
        serde_json::to_string_pretty(&wire).expect("MDP serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: TabularMdpWire = serde_json::from_str(text)?;
        if wire.schema != TABULAR_MDP_SCHEMA {
            return Err(Error::Config {
                field: "schema".into(),
                message: format!("expected {TABULAR_MDP_SCHEMA:?}, got {:?}", wire.schema),
            });
        }
        let s = wire.num_states;
        let a = wire.num_actions;
        let transition = Array3::from_shape_vec((s, a, s), wire.transition).map_err(|_| {
            Error::DimensionMismatch {
                context: "transition array".into(),
                expected: s * a * s,
                got: 0,
            }
        })?;
        let mean_reward =
            Array2::from_shape_vec((s, a), wire.mean_reward).map_err(|_| Error::DimensionMismatch {
                context: "mean_reward array".into(),
                expected: s * a,
                got: 0,
            })?;
        let mdp = Self::new(
            wire.horizon,
            transition,
            mean_reward,
            Array1::from_vec(wire.initial_dist),
            wire.reward_model,
        )?;
        Ok(if wire.bounded_total_reward {
            mdp.with_bounded_total_reward_certificate()
        } else {
            mdp
        })
    }

    /// Stable provenance hash of the full model.
    pub fn stable_hash(&self) -> String {
        stable_hash_hex(self.to_json().as_bytes())
    }
}

const TABULAR_MDP_SCHEMA: &str = "tabular-mdp/1";
const POLICY_SCHEMA: &str = "policy/1";

#[derive(Serialize, Deserialize)]
struct TabularMdpWire {
    schema: String,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    transition: Vec<f64>,
    mean_reward: Vec<f64>,
    initial_dist: Vec<f64>,
    reward_model: RewardModel,
    bounded_total_reward: bool,
}

/// A (potentially non-stationary) policy: one `π_h(a|s)` row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    per_step: Array3<f64>, // [H, S, A]
}

impl Policy {
    pub fn new(per_step: Array3<f64>) -> Result<Self> {
        let (h, s, a) = per_step.dim();
        if h == 0 || s == 0 || a == 0 {
            return Err(Error::InvalidParameter {
                name: "policy shape".into(),
                value: 0.0,
                requirement: "all of H, S, A must be positive".into(),
            });
        }
        for hh in 0..h {
            for ss in 0..s {
                let mut sum = 0.0;
                for aa in 0..a {
                    let p = per_step[[hh, ss, aa]];
                    if p < 0.0 {
                        return Err(Error::NegativeEntry {
                            what: "policy row".into(),
                            index: format!("(h={hh}, s={ss}, a={aa})"),
                            value: p,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > DIST_TOL {
                    return Err(Error::InvalidDistribution {
                        what: "policy row".into(),
                        index: format!("(h={hh}, s={ss})"),
                        sum,
                    });
                }
            }
        }
        Ok(Self { per_step })
    }

    /// The uniformly random stationary policy, stored per step.
    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self {
            per_step: Array3::from_elem((horizon, num_states, num_actions), p),
        }
    }

    /// Deterministic policy from an action table indexed `[H, S]`.
    pub fn from_actions(actions: &Array2<usize>, num_actions: usize) -> Result<Self> {
        let (h, s) = actions.dim();
        let mut per_step = Array3::zeros((h, s, num_actions));
        for hh in 0..h {
            for ss in 0..s {
                let a = actions[[hh, ss]];
                if a >= num_actions {
                    return Err(Error::IndexOutOfRange {
                        what: "action".into(),
                        value: a,
                        max: num_actions - 1,
                        location: format!("(h={hh}, s={ss})"),
                    });
                }
                per_step[[hh, ss, a]] = 1.0;
            }
        }
        Ok(Self { per_step })
    }

    /// Seeded random stochastic policy (independent simplex draw per row).
    pub fn random(horizon: usize, num_states: usize, num_actions: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let mut per_step = Array3::zeros((horizon, num_states, num_actions));
        for hh in 0..horizon {
            for ss in 0..num_states {
                let mut total = 0.0;
                let mut raw = vec![0.0; num_actions];
                for item in raw.iter_mut() {
                    // Exp(1) draws normalize to a uniform simplex point.
                    let u: f64 = rng.gen::<f64>();
                    *item = -(1.0 - u).ln();
                    total += *item;
                }
                for (aa, item) in raw.iter().enumerate() {
                    per_step[[hh, ss, aa]] = item / total;
                }
            }
        }
        Self { per_step }
    }

    pub fn horizon(&self) -> usize {
        self.per_step.dim().0
    }

    pub fn num_states(&self) -> usize {
        self.per_step.dim().1
    }

    pub fn num_actions(&self) -> usize {
        self.per_step.dim().2
    }

    pub fn per_step(&self) -> &Array3<f64> {
        &self.per_step
    }

    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        self.per_step[[h, s, a]]
    }

    pub fn action_row(&self, h: usize, s: usize) -> ArrayView1<'_, f64> {
        self.per_step.slice(ndarray::s![h, s, ..])
    }

    pub fn sample_action<R: Rng>(&self, rng: &mut R, h: usize, s: usize) -> usize {
        let row = self.per_step.slice(ndarray::s![h, s, ..]);
        sample_categorical(rng, row.as_slice().unwrap())
    }

    pub fn to_json(&self) -> String {
        let (h, s, a) = self.per_step.dim();
        let wire = PolicyWire {
            schema: POLICY_SCHEMA.into(),
            horizon: h,
            num_states: s,
            num_actions: a,
            per_step: self.per_step.iter().copied().collect(),
        };
        serde_json::to_string_pretty(&wire).expect("policy serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: PolicyWire = serde_json::from_str(text)?;
        if wire.schema != POLICY_SCHEMA {
            return Err(Error::Config {
                field: "schema".into(),
                message: format!("expected {POLICY_SCHEMA:?}, got {:?}", wire.schema),
            });
        }
        let per_step =
            Array3::from_shape_vec((wire.horizon, wire.num_states, wire.num_actions), wire.per_step)
                .map_err(|_| Error::DimensionMismatch {
                    context: "policy array".into(),
                    expected: wire.horizon * wire.num_states * wire.num_actions,
                    got: 0,
                })?;
        Self::new(per_step)
    }

    pub fn stable_hash(&self) -> String {
        stable_hash_hex(self.to_json().as_bytes())
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyWire {
    schema: String,
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    per_step: Vec<f64>,
}

/// Exact dynamic-programming solution for one policy (or the optimal one).
///
/// `v_values` has `H + 1` rows; the last row is the zero boundary `V_{H+1}`.
#[derive(Debug, Clone)]
pub struct ValueSolution {
    pub v_values: Array2<f64>, // [H + 1, S]
    pub q_values: Array3<f64>, // [H, S, A]
    pub value: f64,
}

/// Reaching probabilities `ξ_h(s)` and `ξ_h(s, a)` under one policy.
#[derive(Debug, Clone)]
pub struct OccupancyMeasures {
    pub state: Array2<f64>,        // [H, S]
    pub state_action: Array3<f64>, // [H, S, A]
}
