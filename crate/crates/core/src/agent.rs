//! DDPG learner: deterministic actor, Q critic, their polyak-averaged target
//! copies, an ε-random / Gaussian-noise behavioral policy, and the
//! collect → store (with relabeling) → optimize → evaluate epoch loop.

use ndarray::{concatenate, s, Array2, Axis};
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::envs::{is_success, make_env, EnvConfig, EnvSpec, GoalEnv};
use crate::error::{check_len, Error, Result};
use crate::nn::{Activation, MlpNetwork};
use crate::replay::{Episode, EpisodeStep, HerConfig, ReplayBuffer, Transition};
use crate::seeding;

/// The six tuned learning parameters, all in [0, 1]. Serialized under the
/// reference implementation's key names; omitted keys take the original values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    /// Discount factor.
    pub gamma: f64,
    /// Polyak coefficient for the target networks.
    #[serde(rename = "polyak")]
    pub tau: f64,
    #[serde(rename = "lr_critic")]
    pub alpha_critic: f64,
    #[serde(rename = "lr_actor")]
    pub alpha_actor: f64,
    /// Probability of taking a uniformly random action while exploring.
    #[serde(rename = "random_eps")]
    pub epsilon: f64,
    /// Exploration noise std as a fraction of the action bound.
    #[serde(rename = "noise_eps")]
    pub eta: f64,
}

impl HyperParams {
    /// Untuned defaults of the reference DDPG + HER implementation.
    pub const ORIGINAL: HyperParams =
        HyperParams { gamma: 0.98, tau: 0.95, alpha_critic: 0.001, alpha_actor: 0.001, epsilon: 0.3, eta: 0.2 };

    /// Values reported as GA-optimal for the manipulation tasks.
    pub const REPORTED_OPTIMAL: HyperParams =
        HyperParams { gamma: 0.88, tau: 0.184, alpha_critic: 0.001, alpha_actor: 0.001, epsilon: 0.055, eta: 0.774 };

    pub const FIELD_NAMES: [&'static str; 6] = ["polyak", "gamma", "lr_critic", "lr_actor", "random_eps", "noise_eps"];

    /// Values in chromosome gene order: τ, γ, α_critic, α_actor, ε, η.
    pub fn to_genes(&self) -> [f64; 6] {
        [self.tau, self.gamma, self.alpha_critic, self.alpha_actor, self.epsilon, self.eta]
    }

    pub fn from_genes(g: [f64; 6]) -> Self {
        HyperParams { tau: g[0], gamma: g[1], alpha_critic: g[2], alpha_actor: g[3], epsilon: g[4], eta: g[5] }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in Self::FIELD_NAMES.iter().zip(self.to_genes()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::contract(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams::ORIGINAL
    }
}

/// How the polyak coefficient enters the target update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolyakConvention {
    /// `θ′ ← τ·θ + (1 − τ)·θ′`: τ is the weight of the main network.
    #[default]
    MainWeight,
    /// `θ′ ← τ·θ′ + (1 − τ)·θ`: τ is the retained fraction of the target.
    TargetWeight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub cycles_per_epoch: usize,
    pub episodes_per_cycle: usize,
    /// May be zero, which disables learning.
    pub optimize_steps_per_cycle: usize,
    pub batch_size: usize,
    pub eval_episodes: usize,
    pub max_epochs: usize,
    pub success_threshold: f64,
    /// Clip critic targets to the attainable return range `[−1/(1−γ), 0]`.
    pub target_clip: bool,
    /// Stop a run at the first epoch whose evaluation reaches the threshold.
    pub early_stop: bool,
    pub hidden_sizes: Vec<usize>,
    pub buffer_capacity: usize,
    pub her: HerConfig,
    pub polyak_convention: PolyakConvention,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            cycles_per_epoch: 10,
            episodes_per_cycle: 2,
            optimize_steps_per_cycle: 40,
            batch_size: 128,
            eval_episodes: 20,
            max_epochs: 50,
            success_threshold: 0.85,
            target_clip: true,
            early_stop: false,
            hidden_sizes: vec![64, 64],
            buffer_capacity: 100_000,
            her: HerConfig::default(),
            polyak_convention: PolyakConvention::MainWeight,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("cycles_per_epoch", self.cycles_per_epoch),
            ("episodes_per_cycle", self.episodes_per_cycle),
            ("batch_size", self.batch_size),
            ("eval_episodes", self.eval_episodes),
            ("buffer_capacity", self.buffer_capacity),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.success_threshold > 0.0 && self.success_threshold <= 1.0) {
            return Err(Error::Config("success_threshold must lie in (0, 1]".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Which branch of the behavioral policy produced an action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionSource {
    Policy,
    NoisyPolicy,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdpgAgent {
    pub actor: MlpNetwork,
    pub critic: MlpNetwork,
    pub target_actor: MlpNetwork,
    pub target_critic: MlpNetwork,
    pub params: HyperParams,
    pub env_spec: EnvSpec,
    pub target_clip: bool,
    pub polyak_convention: PolyakConvention,
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(
        env_spec: EnvSpec,
        params: HyperParams,
        hidden_sizes: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let state_dim = env_spec.observation_dim + env_spec.goal_dim;
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend_from_slice(hidden_sizes);
        actor_sizes.push(env_spec.action_dim);
        let mut critic_sizes = vec![state_dim + env_spec.action_dim];
        critic_sizes.extend_from_slice(hidden_sizes);
        critic_sizes.push(1);
        let actor = MlpNetwork::new(&actor_sizes, Activation::Relu, Activation::Tanh, rng)?;
        let critic = MlpNetwork::new(&critic_sizes, Activation::Relu, Activation::Identity, rng)?;
        Self::from_networks(env_spec, params, actor, critic)
    }

    /// Wraps existing main networks; targets start as exact copies.
    pub fn from_networks(
        env_spec: EnvSpec,
        params: HyperParams,
        actor: MlpNetwork,
        critic: MlpNetwork,
    ) -> Result<Self> {
        params.validate()?;
        let state_dim = env_spec.observation_dim + env_spec.goal_dim;
        check_len("actor input", state_dim, actor.input_dim())?;
        check_len("actor output", env_spec.action_dim, actor.output_dim())?;
        check_len("critic input", state_dim + env_spec.action_dim, critic.input_dim())?;
        check_len("critic output", 1, critic.output_dim())?;
        Ok(DdpgAgent {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            params,
            env_spec,
            target_clip: true,
            polyak_convention: PolyakConvention::MainWeight,
        })
    }

    fn state_dim(&self) -> usize {
        self.env_spec.observation_dim + self.env_spec.goal_dim
    }

    /// Scales a raw `observation ‖ goal` vector to network units.
    pub fn normalize_state_goal(&self, state_goal: &[f64], out: &mut Vec<f64>) {
        let (obs, goal) = state_goal.split_at(self.env_spec.observation_dim);
        self.env_spec.normalize_observation(obs, out);
        self.env_spec.normalize_goal(goal, out);
    }

    fn state_matrix<'a, I>(&self, rows: I, n: usize) -> Array2<f64>
    where
        I: Iterator<Item = &'a [f64]>,
    {
        let mut flat = Vec::with_capacity(n * self.state_dim());
        for row in rows {
            self.normalize_state_goal(row, &mut flat);
        }
        Array2::from_shape_vec((n, self.state_dim()), flat).expect("rows have state width")
    }

    /// Actor output scaled to `[−action_bound, action_bound]`.
    pub fn deterministic_action(&self, state_goal: &[f64]) -> Result<Vec<f64>> {
        check_len("agent input", self.state_dim(), state_goal.len())?;
        let mut x = Vec::with_capacity(self.state_dim());
        self.normalize_state_goal(state_goal, &mut x);
        let bound = self.env_spec.action_bound;
        Ok(self.actor.forward(&x)?.into_iter().map(|u| u * bound).collect())
    }

    pub fn act<R: Rng + ?Sized>(&self, state_goal: &[f64], explore: bool, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.act_with_source(state_goal, explore, rng)?.0)
    }

    /// Behavioral policy. Without exploration this is the deterministic actor.
    /// With exploration: probability ε of a uniform random action, otherwise
    /// the actor output plus `N(0, (η·bound)²)` noise, clipped to bounds.
    pub fn act_with_source<R: Rng + ?Sized>(
        &self,
        state_goal: &[f64],
        explore: bool,
        rng: &mut R,
    ) -> Result<(Vec<f64>, ActionSource)> {
        let mut action = self.deterministic_action(state_goal)?;
        if !explore {
            return Ok((action, ActionSource::Policy));
        }
        let bound = self.env_spec.action_bound;
        if rng.random::<f64>() < self.params.epsilon {
            for a in action.iter_mut() {
                *a = rng.random_range(-bound..=bound);
            }
            return Ok((action, ActionSource::Random));
        }
        let std = self.params.eta * bound;
        if std > 0.0 {
            let noise = Normal::new(0.0, std).expect("finite positive std");
            for a in action.iter_mut() {
                *a = (*a + noise.sample(rng)).clamp(-bound, bound);
            }
        }
        Ok((action, ActionSource::NoisyPolicy))
    }

    /// Range critic targets are clipped to, if clipping is on.
    pub fn target_clip_range(&self) -> Option<(f64, f64)> {
        if !self.target_clip {
            return None;
        }
        let gamma = self.params.gamma;
        let lower = if gamma < 1.0 { -1.0 / (1.0 - gamma) } else { -(self.env_spec.horizon as f64) };
        Some((lower, 0.0))
    }

    /// Bootstrapped critic targets `y = r + γ·Q′(s′, μ′(s′))` from the target networks.
    pub fn critic_target(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::contract("critic target needs a non-empty batch"));
        }
        let next = self.state_matrix(batch.iter().map(|t| t.next_state_goal.as_slice()), batch.len());
        self.targets_for(&next, batch)
    }

    fn targets_for(&self, next_states: &Array2<f64>, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next_actions = self.target_actor.forward_batch(next_states)?;
        let q_next = self.target_critic.forward_batch(&concatenate![Axis(1), *next_states, next_actions])?;
        let gamma = self.params.gamma;
        let clip = self.target_clip_range();
        Ok(batch
            .iter()
            .zip(q_next.column(0))
            .map(|(t, &q)| {
                let y = t.reward + gamma * q;
                match clip {
                    Some((lo, hi)) => y.clamp(lo, hi),
                    None => y,
                }
            })
            .collect())
    }

    /// Main-critic values `Q(s, a)` for a batch.
    pub fn q_values(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let states = self.state_matrix(batch.iter().map(|t| t.state_goal.as_slice()), batch.len());
        let actions = self.action_matrix(batch)?;
        Ok(self.critic.forward_batch(&concatenate![Axis(1), states, actions])?.column(0).to_vec())
    }

    fn action_matrix(&self, batch: &[&Transition]) -> Result<Array2<f64>> {
        let dim = self.env_spec.action_dim;
        let bound = self.env_spec.action_bound;
        let mut flat = Vec::with_capacity(batch.len() * dim);
        for t in batch {
            check_len("transition action", dim, t.action.len())?;
            flat.extend(t.action.iter().map(|a| a / bound));
        }
        Ok(Array2::from_shape_vec((batch.len(), dim), flat).expect("rows have action width"))
    }

    /// One critic step on the mean squared Bellman error and one actor step on
    /// `−mean Q(s, μ(s))`. Both gradients are taken before either network
    /// moves, and the actor loss does not update the critic. Returns the
    /// pre-update `(critic_loss, actor_loss)`.
    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<(f64, f64)> {
        if batch.is_empty() {
            return Err(Error::contract("train step needs a non-empty batch"));
        }
        let n = batch.len();
        let scale = 1.0 / n as f64;
        let state_dim = self.state_dim();
        for t in batch {
            check_len("transition state", state_dim, t.state_goal.len())?;
            check_len("transition next state", state_dim, t.next_state_goal.len())?;
        }
        let states = self.state_matrix(batch.iter().map(|t| t.state_goal.as_slice()), n);
        let next_states = self.state_matrix(batch.iter().map(|t| t.next_state_goal.as_slice()), n);
        let targets = self.targets_for(&next_states, batch)?;

        let actions = self.action_matrix(batch)?;
        let critic_trace = self.critic.forward_trace(concatenate![Axis(1), states, actions])?;
        let mut residual = critic_trace.output().clone();
        for (r, y) in residual.column_mut(0).iter_mut().zip(&targets) {
            *r -= y;
        }
        let critic_loss = residual.iter().map(|r| r * r).sum::<f64>() * scale;
        let (critic_grads, _) = self.critic.backward_batch(&critic_trace, &(residual * (2.0 * scale)))?;

        let actor_trace = self.actor.forward_trace(states.clone())?;
        let policy_trace = self.critic.forward_trace(concatenate![Axis(1), states, *actor_trace.output()])?;
        let actor_loss = -policy_trace.output().sum() * scale;
        let dq = Array2::from_elem((n, 1), -scale);
        let (_, input_grad) = self.critic.backward_batch(&policy_trace, &dq)?;
        let action_grad = input_grad.slice(s![.., state_dim..]).to_owned();
        let (actor_grads, _) = self.actor.backward_batch(&actor_trace, &action_grad)?;

        if !critic_loss.is_finite() {
            return Err(Error::NonFiniteLoss { which: "critic" });
        }
        if !actor_loss.is_finite() {
            return Err(Error::NonFiniteLoss { which: "actor" });
        }
        self.critic.adam_step(&critic_grads, self.params.alpha_critic)?;
        self.actor.adam_step(&actor_grads, self.params.alpha_actor)?;
        Ok((critic_loss, actor_loss))
    }

    /// Polyak-averages the main networks into the targets.
    pub fn update_targets(&mut self) {
        let weight = match self.polyak_convention {
            PolyakConvention::MainWeight => self.params.tau,
            PolyakConvention::TargetWeight => 1.0 - self.params.tau,
        };
        self.target_actor.blend_from(&self.actor, weight).expect("targets mirror mains");
        self.target_critic.blend_from(&self.critic, weight).expect("targets mirror mains");
    }
}

/// Runs one full episode from `reset(seed)`.
pub fn rollout<R: Rng + ?Sized>(
    agent: &DdpgAgent,
    env: &mut dyn GoalEnv,
    seed: u64,
    explore: bool,
    rng: &mut R,
) -> Result<Episode> {
    let mut obs = env.reset(seed);
    let mut episode = Episode::new(obs.desired_goal.clone());
    let mut input = Vec::new();
    loop {
        input.clear();
        input.extend_from_slice(&obs.observation);
        input.extend_from_slice(&obs.desired_goal);
        let action = agent.act(&input, explore, rng)?;
        let out = env.step(&action)?;
        let next = out.observation;
        episode.steps.push(EpisodeStep {
            observation: std::mem::take(&mut obs.observation),
            achieved_goal: std::mem::take(&mut obs.achieved_goal),
            action,
            next_observation: next.observation.clone(),
            next_achieved_goal: next.achieved_goal.clone(),
        });
        obs = next;
        if out.done {
            return Ok(episode);
        }
    }
}

/// Fraction of `n_episodes` deterministic episodes whose final state is a
/// success. Episode `i` starts from `reset(derive(seed, "episode", i))`.
pub fn evaluate(agent: &DdpgAgent, env: &mut dyn GoalEnv, n_episodes: usize, seed: u64) -> Result<f64> {
    if n_episodes == 0 {
        return Err(Error::contract("evaluation needs at least one episode"));
    }
    let mut unused = NoRng;
    let mut successes = 0usize;
    for i in 0..n_episodes {
        let ep = rollout(agent, env, seeding::derive(seed, "episode", i as u64), false, &mut unused)?;
        let last = ep.steps.last().expect("horizon is at least one step");
        if is_success(&last.next_achieved_goal, &ep.desired_goal, env.spec())? {
            successes += 1;
        }
    }
    Ok(successes as f64 / n_episodes as f64)
}

/// Deterministic rollouts draw no randomness.
struct NoRng;

impl RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("deterministic policy drew a random number")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("deterministic policy drew a random number")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("deterministic policy drew a random number")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch index.
    pub epoch: usize,
    pub success_rate: f64,
    pub mean_critic_loss: f64,
    pub mean_actor_loss: f64,
    pub buffer_len: usize,
}

/// Independent random streams of one training run, all derived from its seed.
#[derive(Clone, Debug)]
struct Streams {
    env: ChaCha8Rng,
    explore: ChaCha8Rng,
    her: ChaCha8Rng,
    sample: ChaCha8Rng,
}

/// Owns everything one training run mutates.
pub struct Trainer {
    pub agent: DdpgAgent,
    env: Box<dyn GoalEnv>,
    buffer: ReplayBuffer,
    config: TrainConfig,
    streams: Streams,
    seed: u64,
    epoch: usize,
}

impl Trainer {
    pub fn new(env_config: &EnvConfig, params: HyperParams, config: &TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        let env = make_env(env_config)?;
        let mut init = seeding::stream(seed, "init", 0);
        let mut agent = DdpgAgent::new(env.spec().clone(), params, &config.hidden_sizes, &mut init)?;
        agent.target_clip = config.target_clip;
        agent.polyak_convention = config.polyak_convention;
        Ok(Trainer {
            agent,
            env,
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            config: config.clone(),
            streams: Streams {
                env: seeding::stream(seed, "env", 0),
                explore: seeding::stream(seed, "explore", 0),
                her: seeding::stream(seed, "her", 0),
                sample: seeding::stream(seed, "sample", 0),
            },
            seed,
            epoch: 0,
        })
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn epochs_completed(&self) -> usize {
        self.epoch
    }

    /// Seed used for the evaluation that closes epoch `epoch` (1-based).
    pub fn eval_seed(&self, epoch: usize) -> u64 {
        seeding::derive(self.seed, "eval", epoch as u64)
    }

    /// Collects, stores and learns for one epoch, then evaluates.
    pub fn train_epoch(&mut self) -> Result<EpochStats> {
        let mut critic_sum = 0.0;
        let mut actor_sum = 0.0;
        let mut steps = 0usize;
        for _ in 0..self.config.cycles_per_epoch {
            for _ in 0..self.config.episodes_per_cycle {
                let reset_seed = self.streams.env.next_u64();
                let episode = rollout(&self.agent, self.env.as_mut(), reset_seed, true, &mut self.streams.explore)?;
                let spec = self.env.spec();
                self.buffer.store_episode(
                    &episode,
                    &self.config.her,
                    |a, g| crate::envs::compute_reward(a, g, spec),
                    &mut self.streams.her,
                )?;
            }
            for _ in 0..self.config.optimize_steps_per_cycle {
                let batch = self.buffer.sample(self.config.batch_size, &mut self.streams.sample)?;
                let (c, a) = self.agent.train_step(&batch)?;
                critic_sum += c;
                actor_sum += a;
                steps += 1;
                self.agent.update_targets();
            }
        }
        self.epoch += 1;
        let eval_seed = self.eval_seed(self.epoch);
        let success_rate = evaluate(&self.agent, self.env.as_mut(), self.config.eval_episodes, eval_seed)?;
        let denom = steps.max(1) as f64;
        Ok(EpochStats {
            epoch: self.epoch,
            success_rate,
            mean_critic_loss: critic_sum / denom,
            mean_actor_loss: actor_sum / denom,
            buffer_len: self.buffer.len(),
        })
    }

    /// Evaluates the current agent on this run's environment.
    pub fn evaluate(&mut self, n_episodes: usize, seed: u64) -> Result<f64> {
        evaluate(&self.agent, self.env.as_mut(), n_episodes, seed)
    }
}
