//! Replay storage with hindsight goal relabeling applied when an episode is
//! stored: every step is kept with its original goal, and extra copies are
//! written with the goal replaced by one the agent actually achieved.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// One stored experience tuple `(s‖g, a, r, s′‖g)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state_goal: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state_goal: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub next_achieved_goal: Vec<f64>,
}

impl Transition {
    fn split(&self) -> usize {
        self.state_goal.len() - self.achieved_goal.len()
    }

    pub fn state(&self) -> &[f64] {
        &self.state_goal[..self.split()]
    }

    pub fn next_state(&self) -> &[f64] {
        &self.next_state_goal[..self.split()]
    }

    /// Goal slice (the trailing `achieved_goal.len()` entries of `state_goal`).
    pub fn goal(&self) -> &[f64] {
        &self.state_goal[self.split()..]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStep {
    pub observation: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub action: Vec<f64>,
    pub next_observation: Vec<f64>,
    pub next_achieved_goal: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Episode {
    pub steps: Vec<EpisodeStep>,
    pub desired_goal: Vec<f64>,
}

impl Episode {
    pub fn new(desired_goal: Vec<f64>) -> Self {
        Episode { steps: Vec::new(), desired_goal }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Checks goal widths and that consecutive steps chain.
    pub fn validate(&self) -> Result<()> {
        let goal_dim = self.desired_goal.len();
        for (t, step) in self.steps.iter().enumerate() {
            check_len("achieved goal", goal_dim, step.achieved_goal.len())?;
            check_len("next achieved goal", goal_dim, step.next_achieved_goal.len())?;
            check_len("next observation", step.observation.len(), step.next_observation.len())?;
            if let Some(next) = self.steps.get(t + 1) {
                if next.observation != step.next_observation || next.achieved_goal != step.next_achieved_goal {
                    return Err(Error::contract(format!("episode does not chain at step {t}")));
                }
            }
        }
        Ok(())
    }

    /// Achieved goals `g_0 … g_T`, where `g_{t+1}` is the outcome of step `t`.
    fn achieved_sequence(&self) -> Vec<&[f64]> {
        let mut seq = Vec::with_capacity(self.steps.len() + 1);
        if let Some(first) = self.steps.first() {
            seq.push(first.achieved_goal.as_slice());
        }
        seq.extend(self.steps.iter().map(|s| s.next_achieved_goal.as_slice()));
        seq
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelabelStrategy {
    /// One extra copy per step, relabeled with the episode's last achieved goal.
    Final,
    /// Up to `k` extra copies per step, relabeled with distinct achieved goals
    /// drawn uniformly from later in the episode.
    Future,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HerConfig {
    /// Relabels per step for `future`; `final` stores one whenever `k ≥ 1`.
    /// `0` disables relabeling.
    pub k: usize,
    pub strategy: RelabelStrategy,
}

impl Default for HerConfig {
    fn default() -> Self {
        HerConfig { k: 4, strategy: RelabelStrategy::Future }
    }
}

impl HerConfig {
    pub fn disabled() -> Self {
        HerConfig { k: 0, strategy: RelabelStrategy::Future }
    }
}

/// Fixed-capacity ring of transitions; once full, the oldest entry is overwritten.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer { capacity, storage: Vec::new(), cursor: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Stored transitions in slot order (not insertion order once wrapped).
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    pub fn push(&mut self, transition: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.cursor] = transition;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stores every step with the episode's goal plus hindsight relabels.
    /// `reward_fn(achieved, goal)` must be the environment's reward.
    /// Returns the number of transitions written.
    pub fn store_episode<F, R>(
        &mut self,
        episode: &Episode,
        her: &HerConfig,
        reward_fn: F,
        rng: &mut R,
    ) -> Result<usize>
    where
        F: Fn(&[f64], &[f64]) -> Result<f64>,
        R: Rng + ?Sized,
    {
        episode.validate()?;
        let achieved = episode.achieved_sequence();
        let horizon = episode.len();
        let mut stored = 0;
        for (t, step) in episode.steps.iter().enumerate() {
            self.push(make_transition(step, &episode.desired_goal, &reward_fn)?);
            stored += 1;
            if her.k == 0 {
                continue;
            }
            match her.strategy {
                RelabelStrategy::Final => {
                    self.push(make_transition(step, achieved[horizon], &reward_fn)?);
                    stored += 1;
                }
                RelabelStrategy::Future => {
                    let remaining = horizon - t;
                    let picks = her.k.min(remaining);
                    for offset in index::sample(rng, remaining, picks) {
                        let goal = achieved[t + 1 + offset];
                        self.push(make_transition(step, goal, &reward_fn)?);
                        stored += 1;
                    }
                }
            }
        }
        Ok(stored)
    }

    /// Uniform sampling with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.storage.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let n = self.storage.len();
        Ok((0..batch_size).map(|_| &self.storage[rng.random_range(0..n)]).collect())
    }

    pub fn sample_seeded(&self, batch_size: usize, seed: u64) -> Result<Vec<&Transition>> {
        self.sample(batch_size, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

fn make_transition<F>(step: &EpisodeStep, goal: &[f64], reward_fn: &F) -> Result<Transition>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let with_goal = |obs: &[f64]| -> Vec<f64> { obs.iter().chain(goal).copied().collect() };
    Ok(Transition {
        state_goal: with_goal(&step.observation),
        action: step.action.clone(),
        reward: reward_fn(&step.next_achieved_goal, goal)?,
        next_state_goal: with_goal(&step.next_observation),
        achieved_goal: step.achieved_goal.clone(),
        next_achieved_goal: step.next_achieved_goal.clone(),
    })
}
