//! Logged-episode datasets: seeded sampling under a behavior policy, JSONL
//! persistence, and the count statistics `n(s, a)`, `n(s, a, s')` consumed by
//! every estimator.
//!
//! Sampling is reproducible by construction: episode `i` draws from stream
//! `i` of a counter-based generator keyed by the dataset seed, so the same
//! `(model, policy, K, seed)` always produces byte-identical files and the
//! work can be split across threads without changing output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMDP};
use crate::rng::stream_rng;

/// One logged transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// One episode of exactly `H` chained transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub steps: Vec<Transition>,
}

/// Provenance carried in the dataset header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema: String,
    pub seed: u64,
    pub num_episodes: usize,
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub behavior_policy_hash: String,
    pub mdp_hash: String,
}

/// A collection of `K` logged episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub episodes: Vec<Episode>,
    pub meta: DatasetMeta,
}

/// A bag of unchained transitions (generative-model style logging, e.g.
/// anchor-pair sampling).
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSet {
    pub transitions: Vec<Transition>,
    pub seed: u64,
    pub mdp_hash: String,
}

/// Sufficient statistics of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetCounts {
    pub n_sa: Array2<u64>,       // [S, A]
    pub n_sas: Array3<u64>,      // [S, A, S']
    pub reward_sum: Array2<f64>, // [S, A]
    pub n: u64,
}

pub const DATASET_SCHEMA: &str = "dataset-jsonl/1";

/// Samples `num_episodes` i.i.d. episodes under `behavior`.
///
/// Per-step draw order is fixed (action, reward, next state), so outputs are
/// reproducible bit for bit.
pub fn sample_dataset(
    mdp: &TabularMDP,
    behavior: &Policy,
    num_episodes: usize,
    seed: u64,
) -> Result<Dataset> {
    if num_episodes == 0 {
        return Err(Error::EmptyDataset);
    }
    if behavior.horizon() != mdp.horizon()
        || behavior.num_states() != mdp.num_states()
        || behavior.num_actions() != mdp.num_actions()
    {
        return Err(Error::DimensionMismatch {
            context: "behavior policy shape".into(),
            expected: mdp.horizon() * mdp.num_states() * mdp.num_actions(),
            got: behavior.horizon() * behavior.num_states() * behavior.num_actions(),
        });
    }
    let episodes = (0..num_episodes)
        .map(|ep| sample_episode(mdp, behavior, seed, ep as u64))
        .collect();
    Ok(Dataset {
        episodes,
        meta: DatasetMeta {
            schema: DATASET_SCHEMA.into(),
            seed,
            num_episodes,
            horizon: mdp.horizon(),
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            behavior_policy_hash: behavior.stable_hash(),
            mdp_hash: mdp.stable_hash(),
        },
    })
}

fn sample_episode(mdp: &TabularMDP, behavior: &Policy, seed: u64, index: u64) -> Episode {
    let mut rng = stream_rng(seed, index);
    let mut steps = Vec::with_capacity(mdp.horizon());
    let mut state = mdp.sample_initial_state(&mut rng);
    for h in 0..mdp.horizon() {
        let action = behavior.sample_action(&mut rng, h, state);
        let reward = mdp.sample_reward(&mut rng, state, action);
        let next_state = mdp.sample_next_state(&mut rng, state, action);
        steps.push(Transition {
            state,
            action,
            reward,
            next_state,
        });
        state = next_state;
    }
    Episode { steps }
}

/// Extracts visit counts, transition counts and reward sums.
/// Independent of episode order.
pub fn count_statistics(
    dataset: &Dataset,
    num_states: usize,
    num_actions: usize,
) -> Result<DatasetCounts> {
    let all = dataset.episodes.iter().flat_map(|e| e.steps.iter().copied());
    counts_from_transitions(all, num_states, num_actions)
}

/// Count statistics of a transition bag.
pub fn count_transition_set(
    set: &TransitionSet,
    num_states: usize,
    num_actions: usize,
) -> Result<DatasetCounts> {
    counts_from_transitions(set.transitions.iter().copied(), num_states, num_actions)
}

fn counts_from_transitions(
    transitions: impl Iterator<Item = Transition>,
    num_states: usize,
    num_actions: usize,
) -> Result<DatasetCounts> {
    let mut counts = DatasetCounts {
        n_sa: Array2::zeros((num_states, num_actions)),
        n_sas: Array3::zeros((num_states, num_actions, num_states)),
        reward_sum: Array2::zeros((num_states, num_actions)),
        n: 0,
    };
    for (i, t) in transitions.enumerate() {
        for (what, value, max) in [
            ("state", t.state, num_states),
            ("action", t.action, num_actions),
            ("next_state", t.next_state, num_states),
        ] {
            if value >= max {
                return Err(Error::IndexOutOfRange {
                    what: what.into(),
                    value,
                    max: max - 1,
                    location: format!("transition {i}"),
                });
            }
        }
        counts.n_sa[[t.state, t.action]] += 1;
        counts.n_sas[[t.state, t.action, t.next_state]] += 1;
        counts.reward_sum[[t.state, t.action]] += t.reward;
        counts.n += 1;
    }
    Ok(counts)
}

impl DatasetCounts {
    /// Empirical transition row and mean reward at a visited pair.
    /// Returns `None` when the pair has no visits.
    pub fn row_estimate(&self, s: usize, a: usize) -> Option<(Vec<f64>, f64)> {
        let n = self.n_sa[[s, a]];
        if n == 0 {
            return None;
        }
        let denom = n as f64;
        let row = (0..self.n_sas.dim().2)
            .map(|s2| self.n_sas[[s, a, s2]] as f64 / denom)
            .collect();
        let reward = self.reward_sum[[s, a]] / denom;
        Some((row, reward))
    }
}

/// Minimum visit count over `support` (all pairs when `None`), with a pair
/// attaining it. Used to audit the data-coverage precondition.
pub fn empirical_min_visit(
    counts: &DatasetCounts,
    support: Option<&[(usize, usize)]>,
) -> (u64, (usize, usize)) {
    let (s_n, a_n) = counts.n_sa.dim();
    let mut best = u64::MAX;
    let mut arg = (0, 0);
    let mut consider = |s: usize, a: usize| {
        let c = counts.n_sa[[s, a]];
        if c < best {
            best = c;
            arg = (s, a);
        }
    };
    match support {
        Some(pairs) => {
            for &(s, a) in pairs {
                consider(s, a);
            }
        }
        None => {
            for s in 0..s_n {
                for a in 0..a_n {
                    consider(s, a);
                }
            }
        }
    }
    (best, arg)
}

#[derive(Serialize, Deserialize)]
struct RecordWire {
    ep: usize,
    h: usize,
    s: usize,
    a: usize,
    r: f64,
    sp: usize,
}

/// Writes the dataset as JSONL: a header line with the metadata, then one
/// record per transition with fields `{ep, h, s, a, r, sp}`.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &dataset.meta)?;
    w.write_all(b"\n")?;
    for (ep, episode) in dataset.episodes.iter().enumerate() {
        for (h, t) in episode.steps.iter().enumerate() {
            let record = RecordWire {
                ep,
                h,
                s: t.state,
                a: t.action,
                r: t.reward,
                sp: t.next_state,
            };
            serde_json::to_writer(&mut w, &record)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSONL dataset, validating the chain structure: `H` steps per
/// episode, and each step's next state equal to the following step's state.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header line".into(),
    })??;
    let meta: DatasetMeta = serde_json::from_str(&header).map_err(|e| Error::Parse {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if meta.schema != DATASET_SCHEMA {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected schema {DATASET_SCHEMA:?}, got {:?}", meta.schema),
        });
    }

    let mut episodes: Vec<Episode> = (0..meta.num_episodes)
        .map(|_| Episode { steps: Vec::new() })
        .collect();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordWire = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad record: {e}"),
        })?;
        if rec.ep >= meta.num_episodes {
            return Err(Error::Parse {
                line: line_no,
                message: format!("episode id {} out of range", rec.ep),
            });
        }
        let episode = &mut episodes[rec.ep];
        if rec.h != episode.steps.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "episode {} expected step {}, got {}",
                    rec.ep,
                    episode.steps.len(),
                    rec.h
                ),
            });
        }
        if let Some(last) = episode.steps.last() {
            if last.next_state != rec.s {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "episode {} broken chain: step {} starts at {} but previous ended at {}",
                        rec.ep, rec.h, rec.s, last.next_state
                    ),
                });
            }
        }
        if rec.s >= meta.num_states || rec.sp >= meta.num_states || rec.a >= meta.num_actions {
            return Err(Error::Parse {
                line: line_no,
                message: "state or action id out of range".into(),
            });
        }
        episode.steps.push(Transition {
            state: rec.s,
            action: rec.a,
            reward: rec.r,
            next_state: rec.sp,
        });
    }
    for (ep, episode) in episodes.iter().enumerate() {
        if episode.steps.len() != meta.horizon {
            return Err(Error::Parse {
                line: 0,
                message: format!(
                    "episode {ep} has {} steps, expected horizon {}",
                    episode.steps.len(),
                    meta.horizon
                ),
            });
        }
    }
    Ok(Dataset { episodes, meta })
}

/// CSV export of transition counts (columns `s,a,sp,count`) for inspection.
pub fn write_counts_csv(counts: &DatasetCounts, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "s,a,sp,count")?;
    let (s_n, a_n, _) = counts.n_sas.dim();
    for s in 0..s_n {
        for a in 0..a_n {
            for s2 in 0..s_n {
                writeln!(w, "{s},{a},{s2},{}", counts.n_sas[[s, a, s2]])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
