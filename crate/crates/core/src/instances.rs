//! Instance constructors: the two-state evaluation chain and four-state
//! planning instance used for minimax floors, Bernoulli KL utilities, and
//! seeded random families whose trajectories certifiably never accumulate
//! more than one unit of reward.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Policy, RewardModel, TabularMDP};
use crate::rng::stream_rng;
use crate::solve::evaluate_policy;

/// Absorbing zero-reward state of [`ope_hard_instance`].
pub const CHAIN_EXIT_STATE: usize = 0;
/// The surviving chain state of [`ope_hard_instance`].
pub const CHAIN_STATE: usize = 1;

/// Start state of [`opo_hard_instance`].
pub const OPO_START_STATE: usize = 0;
/// Action at the start state that enters the chain branch.
pub const OPO_CHAIN_ACTION: usize = 0;
/// Action at the start state that enters the fixed-value absorbing branch.
pub const OPO_ALT_ACTION: usize = 1;

/// Two-state single-action chain: the chain state pays `1/H` per step and
/// survives with probability `p`, the exit state is absorbing with zero
/// reward. Episodes start at the chain state; rewards are deterministic.
pub fn ope_hard_instance(horizon: usize, p: f64) -> Result<TabularMDP> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter {
            name: "p".into(),
            value: p,
            requirement: "survival probability must lie in [0, 1]".into(),
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter {
            name: "horizon".into(),
            value: 0.0,
            requirement: "horizon must be positive".into(),
        });
    }
    let mut transition = Array3::zeros((2, 1, 2));
    transition[[CHAIN_EXIT_STATE, 0, CHAIN_EXIT_STATE]] = 1.0;
    transition[[CHAIN_STATE, 0, CHAIN_STATE]] = p;
    transition[[CHAIN_STATE, 0, CHAIN_EXIT_STATE]] = 1.0 - p;
    let mut reward = Array2::zeros((2, 1));
    reward[[CHAIN_STATE, 0]] = 1.0 / horizon as f64;
    let mut mu = Array1::zeros(2);
    mu[CHAIN_STATE] = 1.0;
    Ok(
        TabularMDP::new(horizon, transition, reward, mu, RewardModel::Deterministic)?
            .with_bounded_total_reward_certificate(),
    )
}

/// Closed form `(p + p² + … + p^H) / H` for the chain state's value, which
/// counts a reward only after each survived transition. The geometric-sum
/// form is stable through `p = 1`, where the value is exactly one.
///
/// Dynamic programming on [`ope_hard_instance`] counts the reward of the
/// step being taken instead, giving `(1 + p + … + p^{H-1}) / H`; the two
/// conventions differ by exactly one factor of `p`.
pub fn analytic_chain_value(p: f64, horizon: usize) -> f64 {
    let mut sum = 0.0;
    let mut power = 1.0;
    for _ in 0..horizon {
        power *= p;
        sum += power;
    }
    sum / horizon as f64
}

/// Parameters `(p1, p2, c2)` of the near-indistinguishable chain pair: with
/// `n` samples of the chain transition, `c2 = c1 - sqrt(c1 (H - c1) / (2n))`
/// makes the pair separated by exactly the amount that keeps the two-point
/// testing floor at one half.
pub fn lower_bound_chain_params(horizon: usize, n: f64, c1: f64) -> Result<(f64, f64, f64)> {
    let h = horizon as f64;
    if !(c1 > 0.0 && c1 < h) {
        return Err(Error::InvalidParameter {
            name: "c1".into(),
            value: c1,
            requirement: format!("must lie in (0, H) = (0, {h})"),
        });
    }
    if n < 1.0 {
        return Err(Error::InvalidParameter {
            name: "n".into(),
            value: n,
            requirement: "need at least one sample".into(),
        });
    }
    let c2 = c1 - (c1 * (h - c1) / (2.0 * n)).sqrt();
    if c2 <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "n".into(),
            value: n,
            requirement: format!(
                "too few samples: c2 = {c2} must stay positive (need n > (H - c1) / (2 c1))"
            ),
        });
    }
    Ok((1.0 - c1 / h, 1.0 - c2 / h, c2))
}

/// Four-state planning instance: from the start state one action enters the
/// survival chain with parameter `p`, every other action enters an absorbing
/// branch whose value is pinned at the `p1`-chain value plus
/// `c0 * sqrt(H / n_dm)`. Planning with `p = p2` must pick the chain, and
/// with `p = p1` must avoid it, each by at least that margin.
///
/// The absorbing branch is anchored to the dynamic-programming value of the
/// chain branch (both measured from the start state), so the advertised flip
/// holds exactly under this crate's reward-timing convention.
pub fn opo_hard_instance(
    horizon: usize,
    p: f64,
    c0: f64,
    n_dm: f64,
    c1: f64,
) -> Result<TabularMDP> {
    if horizon < 2 {
        return Err(Error::InvalidParameter {
            name: "horizon".into(),
            value: horizon as f64,
            requirement: "needs at least two steps (one to leave the start state)".into(),
        });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter {
            name: "p".into(),
            value: p,
            requirement: "survival probability must lie in [0, 1]".into(),
        });
    }
    if n_dm <= 0.0 || c0 <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "c0 / n_dm".into(),
            value: c0.min(n_dm),
            requirement: "must be positive".into(),
        });
    }
    let h = horizon as f64;
    let p1 = 1.0 - c1 / h;
    if !(0.0..1.0).contains(&p1) {
        return Err(Error::InvalidParameter {
            name: "c1".into(),
            value: c1,
            requirement: format!("must lie in (0, H] = (0, {h}]"),
        });
    }

    // Value from the start state of committing to the chain branch under p1:
    // one reward-free step to enter, then (1 + p1 + … + p1^{H-2}) / H.
    let mut chain_branch_p1 = 0.0;
    let mut power = 1.0;
    for _ in 0..horizon - 1 {
        chain_branch_p1 += power;
        power *= p1;
    }
    let chain_branch_p1 = chain_branch_p1 / h;

    let margin = c0 * (h / n_dm).sqrt();
    let alt_branch = chain_branch_p1 + margin;
    if alt_branch > 1.0 {
        return Err(Error::InvalidParameter {
            name: "alt branch value".into(),
            value: alt_branch,
            requirement: "chain value plus margin must stay at most 1".into(),
        });
    }
    let alt_reward = alt_branch / (h - 1.0);

    // States: 0 start, 1 chain, 2 chain exit (absorbing), 3 alt (absorbing).
    let (start, chain, exit, alt) = (OPO_START_STATE, 1usize, 2usize, 3usize);
    let mut transition = Array3::zeros((4, 2, 4));
    transition[[start, OPO_CHAIN_ACTION, chain]] = 1.0;
    transition[[start, OPO_ALT_ACTION, alt]] = 1.0;
    for a in 0..2 {
        transition[[chain, a, chain]] = p;
        transition[[chain, a, exit]] = 1.0 - p;
        transition[[exit, a, exit]] = 1.0;
        transition[[alt, a, alt]] = 1.0;
    }
    let mut reward = Array2::zeros((4, 2));
    for a in 0..2 {
        reward[[chain, a]] = 1.0 / h;
        reward[[alt, a]] = alt_reward;
    }
    let mut mu = Array1::zeros(4);
    mu[start] = 1.0;
    Ok(
        TabularMDP::new(horizon, transition, reward, mu, RewardModel::Deterministic)?
            .with_bounded_total_reward_certificate(),
    )
}

/// Exact `KL(Bern(p) ‖ Bern(q))` with the `0·log 0 = 0` convention; infinite
/// when `q` sits on the boundary with `p ≠ q`.
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
    if p == q {
        return 0.0;
    }
    if q <= 0.0 || q >= 1.0 {
        return f64::INFINITY;
    }
    let mut kl = 0.0;
    if p > 0.0 {
        kl += p * (p / q).ln();
    }
    if p < 1.0 {
        kl += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    kl
}

/// Quadratic upper bound `(p - q)² / (q (1 - q))` on `KL(Bern(p) ‖ Bern(q))`.
pub fn kl_bernoulli_upper(p: f64, q: f64) -> f64 {
    if p == q {
        return 0.0;
    }
    if q <= 0.0 || q >= 1.0 {
        return f64::INFINITY;
    }
    (p - q) * (p - q) / (q * (1.0 - q))
}

/// Two-point testing floor: a lower bound on the sum of the two error
/// probabilities of any test distinguishing `Bern(p1)` from `Bern(p2)` with
/// `n` samples, clamped to [0, 1].
///
/// Uses `1 - sqrt(n · KL / 2)` with the quadratic KL bound in its tighter
/// direction (total variation is symmetric, so either direction is valid).
pub fn le_cam_error_floor(n: u64, p1: f64, p2: f64) -> f64 {
    let kl = kl_bernoulli_upper(p1, p2).min(kl_bernoulli_upper(p2, p1));
    let floor = 1.0 - (n as f64 * kl / 2.0).sqrt();
    floor.clamp(0.0, 1.0)
}

/// Style of random bounded-total-reward instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomStyle {
    /// Every mean reward lies in `[0, 1/H]` with the maximum attained.
    Uniform,
    /// A single absorbing state pays `c/H` per step (`c ≤ 1`); all other
    /// rewards are zero, so every trajectory collects at most `c`.
    Terminal,
}

/// Seeded random episodic instance with Dirichlet(1) transition rows whose
/// reward structure certifies a unit bound on every trajectory's total.
/// Rewards are deterministic; the transition kernel and initial distribution
/// depend only on `(S, A, seed)`, so instances with different horizons form
/// a comparable family.
pub fn bounded_reward_random_instance(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    seed: u64,
    style: RandomStyle,
) -> Result<TabularMDP> {
    let mut rng = stream_rng(seed, 0);
    let mut transition = Array3::zeros((num_states, num_actions, num_states));
    for s in 0..num_states {
        for a in 0..num_actions {
            let row = simplex_draw(&mut rng, num_states);
            for (s2, &x) in row.iter().enumerate() {
                transition[[s, a, s2]] = x;
            }
        }
    }
    let mu = Array1::from_vec(simplex_draw(&mut rng, num_states));

    let h = horizon as f64;
    let mut reward = Array2::zeros((num_states, num_actions));
    match style {
        RandomStyle::Uniform => {
            let mut raw = Array2::zeros((num_states, num_actions));
            let mut max = 0.0_f64;
            for s in 0..num_states {
                for a in 0..num_actions {
                    let u: f64 = rng.gen();
                    raw[[s, a]] = u;
                    max = max.max(u);
                }
            }
            for s in 0..num_states {
                for a in 0..num_actions {
                    reward[[s, a]] = raw[[s, a]] / max / h;
                }
            }
        }
        RandomStyle::Terminal => {
            let g = num_states - 1;
            let c: f64 = 0.5 + 0.5 * rng.gen::<f64>();
            for a in 0..num_actions {
                for s2 in 0..num_states {
                    transition[[g, a, s2]] = 0.0;
                }
                transition[[g, a, g]] = 1.0;
                reward[[g, a]] = c / h;
            }
        }
    }

    Ok(
        TabularMDP::new(horizon, transition, reward, mu, RewardModel::Deterministic)?
            .with_bounded_total_reward_certificate(),
    )
}

/// Seeded random instance with no reward normalization: mean rewards are
/// uniform on [0, 1] and observed rewards are Bernoulli draws.
pub fn random_instance(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    seed: u64,
) -> Result<TabularMDP> {
    let mut rng = stream_rng(seed, 0);
    let mut transition = Array3::zeros((num_states, num_actions, num_states));
    for s in 0..num_states {
        for a in 0..num_actions {
            let row = simplex_draw(&mut rng, num_states);
            for (s2, &x) in row.iter().enumerate() {
                transition[[s, a, s2]] = x;
            }
        }
    }
    let mu = Array1::from_vec(simplex_draw(&mut rng, num_states));
    let mut reward = Array2::zeros((num_states, num_actions));
    for s in 0..num_states {
        for a in 0..num_actions {
            reward[[s, a]] = rng.gen::<f64>();
        }
    }
    TabularMDP::new(horizon, transition, reward, mu, RewardModel::Bernoulli)
}

/// Uniform simplex point via normalized Exp(1) draws.
pub(crate) fn simplex_draw<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut raw = vec![0.0; len];
    let mut total = 0.0;
    for item in raw.iter_mut() {
        let u: f64 = rng.gen();
        *item = -(1.0 - u).ln();
        total += *item;
    }
    if total <= 0.0 {
        return vec![1.0 / len as f64; len];
    }
    for item in raw.iter_mut() {
        *item /= total;
    }
    raw
}

/// Declarative description of a constructed instance, for config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HardInstanceSpec {
    OpeTwoState {
        horizon: usize,
        p: f64,
    },
    OpoFourState {
        horizon: usize,
        p: f64,
        c0: f64,
        n_dm: f64,
        c1: f64,
    },
    RandomUniformReward {
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        seed: u64,
    },
    RandomTerminalReward {
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        seed: u64,
    },
}

impl HardInstanceSpec {
    pub fn build(&self) -> Result<TabularMDP> {
        match *self {
            HardInstanceSpec::OpeTwoState { horizon, p } => ope_hard_instance(horizon, p),
            HardInstanceSpec::OpoFourState {
                horizon,
                p,
                c0,
                n_dm,
                c1,
            } => opo_hard_instance(horizon, p, c0, n_dm, c1),
            HardInstanceSpec::RandomUniformReward {
                num_states,
                num_actions,
                horizon,
                seed,
            } => bounded_reward_random_instance(
                num_states,
                num_actions,
                horizon,
                seed,
                RandomStyle::Uniform,
            ),
            HardInstanceSpec::RandomTerminalReward {
                num_states,
                num_actions,
                horizon,
                seed,
            } => bounded_reward_random_instance(
                num_states,
                num_actions,
                horizon,
                seed,
                RandomStyle::Terminal,
            ),
        }
    }
}

/// Helper for the chain value under this crate's reward timing, via DP.
pub fn chain_dp_value(p: f64, horizon: usize) -> Result<f64> {
    let mdp = ope_hard_instance(horizon, p)?;
    let policy = Policy::uniform(horizon, 2, 1);
    Ok(evaluate_policy(&mdp, &policy)?.value)
}
