//! Anchor-point linear MDPs.
//!
//! A feature map `φ : S×A -> R^d` together with `d` anchor pairs whose
//! features convexly span every `φ(s, a)` lets the whole model be rebuilt
//! from statistics at the anchors alone: with weights `λ^{s,a}` on the
//! simplex,
//!
//! `φ(s,a) = Σ_k λ_k^{s,a} φ(s_k,a_k)` implies
//! `P(·|s,a) = Σ_k λ_k^{s,a} P(·|s_k,a_k)` and
//! `r(s,a)  = Σ_k λ_k^{s,a} r(s_k,a_k)`.
//!
//! Instances here are generated weights-first: the simplex weights are drawn
//! and the model defined by the combination identities, so the anchor
//! property holds by construction instead of hoping random features admit
//! convex decompositions. A solver for externally supplied features is
//! provided ([`recover_anchor_weights`]) but is not on the estimation path.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2};
use rand::Rng;

use crate::data::{DatasetCounts, Transition, TransitionSet};
use crate::error::{Error, Result};
use crate::estimator::{EmpiricalMDP, UnvisitedFallback};
use crate::instances::simplex_draw;
use crate::mdp::{RewardModel, TabularMDP};
use crate::rng::stream_rng;

/// Simplex constraint tolerance on stored weights.
pub const SIMPLEX_TOL: f64 = 1e-10;
/// Per-coordinate tolerance on feature reconstruction.
pub const FEATURE_TOL: f64 = 1e-8;
/// Tolerance on the model consistency identities.
pub const CONSISTENCY_TOL: f64 = 1e-8;
/// Residual above which a target is declared outside the convex hull.
pub const RECOVERY_TOL: f64 = 1e-6;

/// A tabular MDP carrying a linear-anchor representation of itself.
#[derive(Debug, Clone)]
pub struct LinearAnchorMDP {
    pub feature_dim: usize,
    pub features: Array3<f64>, // [S, A, d]
    pub anchors: Vec<(usize, usize)>,
    pub weights: Array3<f64>, // [S, A, d], each row on the simplex
    pub reward_param: Array1<f64>,
    pub mdp: TabularMDP,
}

/// Reward structure of generated linear instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearStyle {
    /// Anchor rewards in `[0, 1/H]`, deterministic draws; the instance
    /// certifies a bounded total reward.
    UniformReward,
    /// Anchor rewards in `[0, 1]` with Bernoulli draws, no certificate.
    Generic,
}

/// Generates a seeded instance: anchor transition rows and rewards are drawn
/// freely, every other pair draws simplex weights over the anchors, and the
/// model is defined by the convex-combination identities.
///
/// Anchor features are the standard basis, so `φ(s, a)` equals the weight
/// vector itself and with `d = S·A` every pair is its own anchor.
pub fn generate_linear_instance(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    feature_dim: usize,
    seed: u64,
    style: LinearStyle,
) -> Result<LinearAnchorMDP> {
    let pairs = num_states * num_actions;
    if feature_dim == 0 || feature_dim > pairs {
        return Err(Error::InvalidParameter {
            name: "feature_dim".into(),
            value: feature_dim as f64,
            requirement: format!("must lie in [1, S·A] = [1, {pairs}]"),
        });
    }
    let mut rng = stream_rng(seed, 0);

    // Anchor pairs: seeded partial shuffle of all pair indices.
    let mut pair_ids: Vec<usize> = (0..pairs).collect();
    for i in 0..feature_dim {
        let j = i + (rng.gen::<u64>() as usize) % (pairs - i);
        pair_ids.swap(i, j);
    }
    let mut anchors: Vec<(usize, usize)> = pair_ids[..feature_dim]
        .iter()
        .map(|&id| (id / num_actions, id % num_actions))
        .collect();
    anchors.sort_unstable();

    let mut anchor_rows = Array2::<f64>::zeros((feature_dim, num_states));
    for k in 0..feature_dim {
        let row = simplex_draw(&mut rng, num_states);
        for (s2, &x) in row.iter().enumerate() {
            anchor_rows[[k, s2]] = x;
        }
    }
    let mu = Array1::from_vec(simplex_draw(&mut rng, num_states));

    let mut weights = Array3::<f64>::zeros((num_states, num_actions, feature_dim));
    for s in 0..num_states {
        for a in 0..num_actions {
            if let Some(k) = anchors.iter().position(|&p| p == (s, a)) {
                weights[[s, a, k]] = 1.0;
            } else {
                let lam = simplex_draw(&mut rng, feature_dim);
                for (k, &w) in lam.iter().enumerate() {
                    weights[[s, a, k]] = w;
                }
            }
        }
    }

    let h = horizon as f64;
    let mut reward_param = Array1::<f64>::zeros(feature_dim);
    for k in 0..feature_dim {
        let u: f64 = rng.gen();
        reward_param[k] = match style {
            LinearStyle::UniformReward => u / h,
            LinearStyle::Generic => u,
        };
    }

    let mut transition = Array3::<f64>::zeros((num_states, num_actions, num_states));
    let mut mean_reward = Array2::<f64>::zeros((num_states, num_actions));
    for s in 0..num_states {
        for a in 0..num_actions {
            for s2 in 0..num_states {
                let mut p = 0.0;
                for k in 0..feature_dim {
                    p += weights[[s, a, k]] * anchor_rows[[k, s2]];
                }
                transition[[s, a, s2]] = p;
            }
            let mut r = 0.0;
            for k in 0..feature_dim {
                r += weights[[s, a, k]] * reward_param[k];
            }
            mean_reward[[s, a]] = r;
        }
    }

    let reward_model = match style {
        LinearStyle::UniformReward => RewardModel::Deterministic,
        LinearStyle::Generic => RewardModel::Bernoulli,
    };
    let mdp = TabularMDP::new(horizon, transition, mean_reward, mu, reward_model)?;
    let mdp = match style {
        LinearStyle::UniformReward => mdp.with_bounded_total_reward_certificate(),
        LinearStyle::Generic => mdp,
    };

    let linear = LinearAnchorMDP {
        feature_dim,
        features: weights.clone(),
        anchors,
        weights,
        reward_param,
        mdp,
    };
    linear.validate()?;
    Ok(linear)
}

const LINEAR_SCHEMA: &str = "linear-anchor-mdp/1";

#[derive(serde::Serialize, serde::Deserialize)]
struct LinearWire {
    schema: String,
    feature_dim: usize,
    num_states: usize,
    num_actions: usize,
    features: Vec<f64>,
    anchors: Vec<(usize, usize)>,
    weights: Vec<f64>,
    reward_param: Vec<f64>,
    mdp: serde_json::Value,
}

impl LinearAnchorMDP {
    pub fn to_json(&self) -> String {
        let (s, a, _) = self.features.dim();
        let wire = LinearWire {
            schema: LINEAR_SCHEMA.into(),
            feature_dim: self.feature_dim,
            num_states: s,
            num_actions: a,
            features: self.features.iter().copied().collect(),
            anchors: self.anchors.clone(),
            weights: self.weights.iter().copied().collect(),
            reward_param: self.reward_param.to_vec(),
            mdp: serde_json::from_str(&self.mdp.to_json()).expect("valid model JSON"),
        };
        serde_json::to_string_pretty(&wire).expect("linear serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: LinearWire = serde_json::from_str(text)?;
        if wire.schema != LINEAR_SCHEMA {
            return Err(Error::Config {
                field: "schema".into(),
                message: format!("expected {LINEAR_SCHEMA:?}, got {:?}", wire.schema),
            });
        }
        let (s, a, d) = (wire.num_states, wire.num_actions, wire.feature_dim);
        let features = Array3::from_shape_vec((s, a, d), wire.features).map_err(|_| {
            Error::DimensionMismatch {
                context: "linear features".into(),
                expected: s * a * d,
                got: 0,
            }
        })?;
        let weights = Array3::from_shape_vec((s, a, d), wire.weights).map_err(|_| {
            Error::DimensionMismatch {
                context: "linear weights".into(),
                expected: s * a * d,
                got: 0,
            }
        })?;
        let mdp = TabularMDP::from_json(&serde_json::to_string(&wire.mdp)?)?;
        let linear = LinearAnchorMDP {
            feature_dim: d,
            features,
            anchors: wire.anchors,
            weights,
            reward_param: Array1::from_vec(wire.reward_param),
            mdp,
        };
        linear.validate()?;
        Ok(linear)
    }

    /// Checks every representation invariant: anchor count and distinctness,
    /// simplex weights, feature reconstruction, and the consistency of the
    /// tabular model with its anchor combination.
    pub fn validate(&self) -> Result<()> {
        let (s_n, a_n) = (self.mdp.num_states(), self.mdp.num_actions());
        let d = self.feature_dim;
        if self.anchors.len() != d {
            return Err(Error::DimensionMismatch {
                context: "anchor set size".into(),
                expected: d,
                got: self.anchors.len(),
            });
        }
        for (i, &(s, a)) in self.anchors.iter().enumerate() {
            if s >= s_n || a >= a_n {
                return Err(Error::IndexOutOfRange {
                    what: "anchor pair".into(),
                    value: s.max(a),
                    max: s_n.max(a_n) - 1,
                    location: format!("anchor {i}"),
                });
            }
            if self.anchors[i + 1..].contains(&(s, a)) {
                return Err(Error::InvalidParameter {
                    name: "anchors".into(),
                    value: i as f64,
                    requirement: format!("anchor (s={s}, a={a}) appears twice"),
                });
            }
        }
        if self.features.dim() != (s_n, a_n, d) || self.weights.dim() != (s_n, a_n, d) {
            return Err(Error::DimensionMismatch {
                context: "feature/weight arrays".into(),
                expected: s_n * a_n * d,
                got: self.features.len(),
            });
        }

        for s in 0..s_n {
            for a in 0..a_n {
                let mut sum = 0.0;
                for k in 0..d {
                    let w = self.weights[[s, a, k]];
                    if w < -SIMPLEX_TOL {
                        return Err(Error::NegativeEntry {
                            what: "anchor weight".into(),
                            index: format!("(s={s}, a={a}, k={k})"),
                            value: w,
                        });
                    }
                    sum += w;
                }
                if (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidDistribution {
                        what: "anchor weights".into(),
                        index: format!("(s={s}, a={a})"),
                        sum,
                    });
                }

                // Feature reconstruction and the two model identities.
                for j in 0..d {
                    let mut recon = 0.0;
                    for (k, &(sk, ak)) in self.anchors.iter().enumerate() {
                        recon += self.weights[[s, a, k]] * self.features[[sk, ak, j]];
                    }
                    if (recon - self.features[[s, a, j]]).abs() > FEATURE_TOL {
                        return Err(Error::InvalidParameter {
                            name: "feature reconstruction".into(),
                            value: (recon - self.features[[s, a, j]]).abs(),
                            requirement: format!(
                                "|Σ λ φ_anchor - φ| ≤ {FEATURE_TOL} at (s={s}, a={a}, coord {j})"
                            ),
                        });
                    }
                }
                let mut r_mix = 0.0;
                for (k, &(sk, ak)) in self.anchors.iter().enumerate() {
                    r_mix += self.weights[[s, a, k]] * self.mdp.reward(sk, ak);
                }
                if (r_mix - self.mdp.reward(s, a)).abs() > CONSISTENCY_TOL {
                    return Err(Error::InvalidParameter {
                        name: "reward consistency".into(),
                        value: (r_mix - self.mdp.reward(s, a)).abs(),
                        requirement: format!("anchor mix must reproduce r at (s={s}, a={a})"),
                    });
                }
                for s2 in 0..s_n {
                    let mut p_mix = 0.0;
                    for (k, &(sk, ak)) in self.anchors.iter().enumerate() {
                        p_mix += self.weights[[s, a, k]] * self.mdp.transition_prob(sk, ak, s2);
                    }
                    if (p_mix - self.mdp.transition_prob(s, a, s2)).abs() > CONSISTENCY_TOL {
                        return Err(Error::InvalidParameter {
                            name: "transition consistency".into(),
                            value: (p_mix - self.mdp.transition_prob(s, a, s2)).abs(),
                            requirement: format!(
                                "anchor mix must reproduce P at (s={s}, a={a}, s'={s2})"
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: ArrayView1<f64>) -> Array1<f64> {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.mapv(|x| (x - tau).max(0.0))
}

/// Finds simplex weights reproducing `phi_target` as a convex combination of
/// the rows of `anchor_features`, by projected gradient descent on the
/// squared reconstruction error.
///
/// Deterministic given its inputs. Fails with `NotInConvexHull` when the
/// best residual stays above [`RECOVERY_TOL`]. When several weight vectors
/// reproduce the target (degenerate anchors), the solver's output is simply
/// what the fixed iteration converges to, not a canonical choice.
pub fn recover_anchor_weights(
    phi_target: ArrayView1<f64>,
    anchor_features: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    let (k_n, dim) = anchor_features.dim();
    if phi_target.len() != dim {
        return Err(Error::DimensionMismatch {
            context: "target feature length".into(),
            expected: dim,
            got: phi_target.len(),
        });
    }
    if k_n == 0 {
        return Err(Error::InvalidParameter {
            name: "anchor count".into(),
            value: 0.0,
            requirement: "need at least one anchor".into(),
        });
    }

    // Lipschitz constant of the gradient, bounded by the squared Frobenius
    // norm of the anchor matrix.
    let lips: f64 = anchor_features.iter().map(|x| x * x).sum::<f64>().max(1e-12);
    let step = 1.0 / lips;

    let mut lam = Array1::from_elem(k_n, 1.0 / k_n as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..50_000 {
        // recon = Σ_k λ_k A[k, :]
        let mut recon = Array1::<f64>::zeros(dim);
        for k in 0..k_n {
            let w = lam[k];
            if w != 0.0 {
                for j in 0..dim {
                    recon[j] += w * anchor_features[[k, j]];
                }
            }
        }
        let mut err = recon;
        for j in 0..dim {
            err[j] -= phi_target[j];
        }
        let new_residual = err.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (residual - new_residual).abs() < 1e-15 && new_residual <= RECOVERY_TOL {
            break;
        }
        residual = new_residual;

        let mut grad = Array1::<f64>::zeros(k_n);
        for k in 0..k_n {
            let mut g = 0.0;
            for j in 0..dim {
                g += anchor_features[[k, j]] * err[j];
            }
            grad[k] = g;
        }
        let candidate = &lam - &(grad * step);
        lam = project_to_simplex(candidate.view());
    }

    if residual > RECOVERY_TOL {
        return Err(Error::NotInConvexHull {
            residual,
            tolerance: RECOVERY_TOL,
        });
    }
    Ok(lam)
}

/// Rebuilds the full empirical model from anchor statistics: every pair's
/// transition row and reward is its weight-mixture of the anchors' empirical
/// rows. Rows sum to one automatically, and tabular planning runs unchanged
/// on the result.
///
/// Errors with `UnvisitedAnchor` when any anchor has no visits: there is no
/// fallback on the anchor path, coverage of the anchor set is a hard
/// requirement.
pub fn build_anchor_empirical_mdp(
    anchor_counts: &DatasetCounts,
    anchors: &[(usize, usize)],
    weights: &Array3<f64>,
    initial_dist: &Array1<f64>,
    horizon: usize,
) -> Result<EmpiricalMDP> {
    let (s_n, a_n, d) = weights.dim();
    if anchors.len() != d {
        return Err(Error::DimensionMismatch {
            context: "anchors vs weight columns".into(),
            expected: d,
            got: anchors.len(),
        });
    }
    let mut anchor_rows = Array2::<f64>::zeros((d, s_n));
    let mut anchor_rewards = Array1::<f64>::zeros(d);
    for (k, &(s, a)) in anchors.iter().enumerate() {
        match anchor_counts.row_estimate(s, a) {
            Some((row, r)) => {
                for (s2, &p) in row.iter().enumerate() {
                    anchor_rows[[k, s2]] = p;
                }
                anchor_rewards[k] = r;
            }
            None => return Err(Error::UnvisitedAnchor { state: s, action: a }),
        }
    }

    let mut transition = Array3::<f64>::zeros((s_n, a_n, s_n));
    let mut mean_reward = Array2::<f64>::zeros((s_n, a_n));
    for s in 0..s_n {
        for a in 0..a_n {
            for s2 in 0..s_n {
                let mut p = 0.0;
                for k in 0..d {
                    p += weights[[s, a, k]] * anchor_rows[[k, s2]];
                }
                transition[[s, a, s2]] = p;
            }
            let mut r = 0.0;
            for k in 0..d {
                r += weights[[s, a, k]] * anchor_rewards[k];
            }
            mean_reward[[s, a]] = r;
        }
    }
    let mdp = TabularMDP::new(
        horizon,
        transition,
        mean_reward,
        initial_dist.clone(),
        RewardModel::Deterministic,
    )?;
    Ok(EmpiricalMDP {
        mdp,
        visit_counts: anchor_counts.n_sa.clone(),
        unvisited: Vec::new(),
        fallback: UnvisitedFallback::SelfLoopZeroReward,
    })
}

/// Draws `n` transitions at the anchor pairs only, spread as evenly as the
/// remainder allows (generative-model style), each next state and reward
/// from the true model. Anchor `k` uses stream `k`, so the output is
/// independent of evaluation order.
pub fn sample_anchor_dataset(
    linear: &LinearAnchorMDP,
    n: usize,
    seed: u64,
) -> Result<TransitionSet> {
    let d = linear.feature_dim;
    if n < d {
        return Err(Error::InvalidParameter {
            name: "n".into(),
            value: n as f64,
            requirement: format!("need at least one draw per anchor (d = {d})"),
        });
    }
    let base = n / d;
    let remainder = n % d;
    let mut transitions = Vec::with_capacity(n);
    for (k, &(s, a)) in linear.anchors.iter().enumerate() {
        let quota = base + usize::from(k < remainder);
        let mut rng = stream_rng(seed, k as u64);
        for _ in 0..quota {
            let reward = linear.mdp.sample_reward(&mut rng, s, a);
            let next_state = linear.mdp.sample_next_state(&mut rng, s, a);
            transitions.push(Transition {
                state: s,
                action: a,
                reward,
                next_state,
            });
        }
    }
    Ok(TransitionSet {
        transitions,
        seed,
        mdp_hash: linear.mdp.stable_hash(),
    })
}
