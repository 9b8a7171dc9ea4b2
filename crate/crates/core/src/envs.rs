//! Sparse-reward goal environments on the unit square.
//!
//! Three tasks, in increasing difficulty:
//! - `reach`: move a point agent onto a goal point.
//! - `push`: push a square object onto a goal by walking into it.
//! - `slide`: the agent is confined to a left-hand strip and must strike the
//!   object so that friction brings it to rest on a goal outside the strip.
//!
//! Actions are 2-D velocity commands in `[−action_bound, action_bound]²`,
//! scaled so a full-magnitude command moves `max_step` world units per step.
//! Rewards are `0` when the achieved goal is strictly within
//! `success_distance` of the desired goal and `−1` otherwise.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Default half edge length of the push/slide object.
pub const OBJECT_HALF_SIZE: f64 = 0.05;
/// Per-step velocity retention of a sliding object.
pub const SLIDE_FRICTION: f64 = 0.95;
/// Object-minus-agent offsets are scaled from `±RELATIVE_RANGE` and saturate
/// beyond it, which keeps contact-scale offsets visible to the networks.
pub const RELATIVE_RANGE: f64 = 0.25;
/// Largest x coordinate the slide agent can reach.
pub const SLIDE_STRIP_MAX_X: f64 = 0.4;

#[derive(Clone, Debug, PartialEq)]
pub struct GoalObservation {
    pub observation: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub goal_dim: usize,
    pub action_dim: usize,
    pub action_bound: f64,
    pub success_distance: f64,
    pub horizon: usize,
    /// World-unit bounds of each observation component; used to scale
    /// network inputs to [−1, 1]. Goals always live on the unit square.
    pub observation_low: Vec<f64>,
    pub observation_high: Vec<f64>,
}

impl EnvSpec {
    pub fn normalize_observation(&self, obs: &[f64], out: &mut Vec<f64>) {
        out.extend(
            obs.iter()
                .zip(self.observation_low.iter().zip(&self.observation_high))
                .map(|(&x, (&lo, &hi))| (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)),
        );
    }

    pub fn normalize_goal(&self, goal: &[f64], out: &mut Vec<f64>) {
        out.extend(goal.iter().map(|&g| 2.0 * g - 1.0));
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Sparse reward: `0` if `‖achieved − desired‖ < success_distance`, else `−1`.
pub fn compute_reward(achieved: &[f64], desired: &[f64], spec: &EnvSpec) -> Result<f64> {
    check_len("desired goal", achieved.len(), desired.len())?;
    if distance(achieved, desired) < spec.success_distance {
        Ok(0.0)
    } else {
        Ok(-1.0)
    }
}

pub fn is_success(achieved: &[f64], desired: &[f64], spec: &EnvSpec) -> Result<bool> {
    Ok(compute_reward(achieved, desired, spec)? == 0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: GoalObservation,
    pub reward: f64,
    pub done: bool,
}

pub trait GoalEnv: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode; identical seeds give identical episodes.
    fn reset(&mut self, seed: u64) -> GoalObservation;

    /// Applies one (clipped) action. Fails once the horizon has been reached.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;

    fn compute_reward(&self, achieved: &[f64], desired: &[f64]) -> Result<f64> {
        compute_reward(achieved, desired, self.spec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Reach,
    Push,
    Slide,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Reach, EnvKind::Push, EnvKind::Slide];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Reach => "reach",
            EnvKind::Push => "push",
            EnvKind::Slide => "slide",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::UnknownEnv(s.to_string()))
    }
}

/// Environment selection plus overridable constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub name: EnvKind,
    pub success_distance: f64,
    pub horizon: usize,
    pub action_bound: f64,
    /// World-unit displacement of a full-magnitude action.
    pub max_step: f64,
    /// Half edge length of the push/slide object.
    pub object_half_size: f64,
    /// Push agents spawn within this Chebyshev distance of the object.
    pub push_spawn_radius: f64,
    /// Push goals lie within this per-axis offset of the object's start.
    pub push_goal_radius: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::new(EnvKind::Reach)
    }
}

impl EnvConfig {
    pub fn new(name: EnvKind) -> Self {
        EnvConfig {
            name,
            success_distance: 0.05,
            horizon: 50,
            action_bound: 1.0,
            max_step: 0.05,
            object_half_size: OBJECT_HALF_SIZE,
            push_spawn_radius: 0.3,
            push_goal_radius: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.success_distance) || !positive(self.action_bound) || !positive(self.max_step) {
            return Err(Error::Config("success_distance, action_bound and max_step must be positive".into()));
        }
        if !(self.object_half_size > 0.0 && self.object_half_size < 0.25) {
            return Err(Error::Config("object_half_size must lie in (0, 0.25)".into()));
        }
        if !positive(self.push_spawn_radius) || !positive(self.push_goal_radius) {
            return Err(Error::Config("push_spawn_radius and push_goal_radius must be positive".into()));
        }
        if self.push_spawn_radius <= self.object_half_size {
            return Err(Error::Config("push_spawn_radius must exceed object_half_size".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> EnvSpec {
        let (obs_low, obs_high): (Vec<f64>, Vec<f64>) = match self.name {
            // agent xy
            EnvKind::Reach => (vec![0.0; 2], vec![1.0; 2]),
            // agent xy, object xy, object − agent
            EnvKind::Push => (
                vec![0.0, 0.0, 0.0, 0.0, -RELATIVE_RANGE, -RELATIVE_RANGE],
                vec![1.0, 1.0, 1.0, 1.0, RELATIVE_RANGE, RELATIVE_RANGE],
            ),
            // agent xy, object xy, object − agent, object velocity
            EnvKind::Slide => {
                let v = self.max_step;
                (
                    vec![0.0, 0.0, 0.0, 0.0, -RELATIVE_RANGE, -RELATIVE_RANGE, -v, -v],
                    vec![SLIDE_STRIP_MAX_X, 1.0, 1.0, 1.0, RELATIVE_RANGE, RELATIVE_RANGE, v, v],
                )
            }
        };
        EnvSpec {
            observation_dim: obs_low.len(),
            goal_dim: 2,
            action_dim: 2,
            action_bound: self.action_bound,
            success_distance: self.success_distance,
            horizon: self.horizon,
            observation_low: obs_low,
            observation_high: obs_high,
        }
    }
}

pub fn make_env(config: &EnvConfig) -> Result<Box<dyn GoalEnv>> {
    config.validate()?;
    Ok(match config.name {
        EnvKind::Reach => Box::new(PointReach::new(config)),
        EnvKind::Push => Box::new(PlanarPush::new(config)),
        EnvKind::Slide => Box::new(PlanarSlide::new(config)),
    })
}

/// Step bookkeeping shared by all tasks.
#[derive(Clone, Debug)]
struct Clock {
    t: usize,
    horizon: usize,
    started: bool,
}

impl Clock {
    fn new(horizon: usize) -> Self {
        Clock { t: 0, horizon, started: false }
    }

    fn restart(&mut self) {
        self.t = 0;
        self.started = true;
    }

    fn tick(&mut self) -> Result<bool> {
        if !self.started {
            return Err(Error::contract("step called before reset"));
        }
        if self.t >= self.horizon {
            return Err(Error::contract("episode already finished; call reset"));
        }
        self.t += 1;
        Ok(self.t == self.horizon)
    }
}

/// Clips an action to bounds and converts it into a world displacement.
fn displacement(action: &[f64], config: &EnvConfig) -> Result<[f64; 2]> {
    check_len("action", 2, action.len())?;
    let scale = config.max_step / config.action_bound;
    let mut d = [0.0; 2];
    for (di, &a) in d.iter_mut().zip(action) {
        // NaN commands are treated as zero
        let a = if a.is_nan() { 0.0 } else { a.clamp(-config.action_bound, config.action_bound) };
        *di = a * scale;
    }
    Ok(d)
}

fn uniform_point(rng: &mut ChaCha8Rng, lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])]
}

/// Penetration depth below which the agent counts as touching, not inside;
/// absorbs round-off after a push leaves the agent on the object's face.
const CONTACT_TOLERANCE: f64 = 1e-9;

fn inside_object(point: [f64; 2], object: [f64; 2], half: f64) -> bool {
    let reach = half - CONTACT_TOLERANCE;
    (point[0] - object[0]).abs() < reach && (point[1] - object[1]).abs() < reach
}

/// Smallest advance along unit direction `dir` that moves an object centred
/// at `object` clear of `point` (which lies strictly inside it).
fn clearing_distance(point: [f64; 2], object: [f64; 2], half: f64, dir: [f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..2 {
        let r = point[i] - object[i];
        if dir[i] > 0.0 {
            best = best.min((r + half) / dir[i]);
        } else if dir[i] < 0.0 {
            best = best.min((r - half) / dir[i]);
        }
    }
    best
}

/// Samples a goal in `[lo, hi]²` that is not already satisfied by `achieved`.
fn sample_goal(rng: &mut ChaCha8Rng, achieved: [f64; 2], lo: [f64; 2], hi: [f64; 2], spec: &EnvSpec) -> [f64; 2] {
    let mut g = uniform_point(rng, lo, hi);
    // bounded so an oversized success radius cannot hang reset
    for _ in 0..GOAL_RESAMPLE_LIMIT {
        if distance(&g, &achieved) >= spec.success_distance {
            break;
        }
        g = uniform_point(rng, lo, hi);
    }
    g
}

const GOAL_RESAMPLE_LIMIT: usize = 1000;

/// 2-D point agent that must stand on the goal.
#[derive(Clone, Debug)]
pub struct PointReach {
    config: EnvConfig,
    spec: EnvSpec,
    clock: Clock,
    agent: [f64; 2],
    goal: [f64; 2],
}

impl PointReach {
    pub fn new(config: &EnvConfig) -> Self {
        PointReach {
            config: config.clone(),
            spec: config.spec(),
            clock: Clock::new(config.horizon),
            agent: [0.5, 0.5],
            goal: [0.5, 0.5],
        }
    }

    /// Places the agent and goal directly, starting a fresh episode.
    pub fn set_state(&mut self, agent: [f64; 2], goal: [f64; 2]) {
        self.agent = agent;
        self.goal = goal;
        self.clock.restart();
    }

    fn observe(&self) -> GoalObservation {
        GoalObservation {
            observation: self.agent.to_vec(),
            achieved_goal: self.agent.to_vec(),
            desired_goal: self.goal.to_vec(),
        }
    }
}

impl GoalEnv for PointReach {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> GoalObservation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.agent = uniform_point(&mut rng, [0.0; 2], [1.0; 2]);
        self.goal = sample_goal(&mut rng, self.agent, [0.0; 2], [1.0; 2], &self.spec);
        self.clock.restart();
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let d = displacement(action, &self.config)?;
        let done = self.clock.tick()?;
        for (a, di) in self.agent.iter_mut().zip(d) {
            *a = (*a + di).clamp(0.0, 1.0);
        }
        let observation = self.observe();
        let reward = compute_reward(&observation.achieved_goal, &observation.desired_goal, &self.spec)?;
        Ok(StepOutcome { observation, reward, done })
    }
}

/// Point agent that pushes a square object; the object is the achieved goal.
#[derive(Clone, Debug)]
pub struct PlanarPush {
    config: EnvConfig,
    spec: EnvSpec,
    clock: Clock,
    agent: [f64; 2],
    object: [f64; 2],
    goal: [f64; 2],
}

impl PlanarPush {
    pub fn new(config: &EnvConfig) -> Self {
        PlanarPush {
            config: config.clone(),
            spec: config.spec(),
            clock: Clock::new(config.horizon),
            agent: [0.2, 0.5],
            object: [0.5, 0.5],
            goal: [0.8, 0.5],
        }
    }

    pub fn set_state(&mut self, agent: [f64; 2], object: [f64; 2], goal: [f64; 2]) {
        self.agent = agent;
        self.object = object;
        self.goal = goal;
        self.clock.restart();
    }

    pub fn object(&self) -> [f64; 2] {
        self.object
    }

    pub fn agent(&self) -> [f64; 2] {
        self.agent
    }

    fn observe(&self) -> GoalObservation {
        let [ax, ay] = self.agent;
        let [ox, oy] = self.object;
        GoalObservation {
            observation: vec![ax, ay, ox, oy, ox - ax, oy - ay],
            achieved_goal: self.object.to_vec(),
            desired_goal: self.goal.to_vec(),
        }
    }
}

impl GoalEnv for PlanarPush {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> GoalObservation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.object = uniform_point(&mut rng, [0.3; 2], [0.7; 2]);
        self.agent = loop {
            let a = uniform_point(&mut rng, [0.0; 2], [1.0; 2]);
            let near = (a[0] - self.object[0]).abs().max((a[1] - self.object[1]).abs()) < self.config.push_spawn_radius;
            if near && !inside_object(a, self.object, self.config.object_half_size) {
                break a;
            }
        };
        let r = self.config.push_goal_radius;
        let lo = [self.object[0] - r, self.object[1] - r].map(|v| v.max(0.1));
        let hi = [self.object[0] + r, self.object[1] + r].map(|v| v.min(0.9));
        self.goal = sample_goal(&mut rng, self.object, lo, hi, &self.spec);
        self.clock.restart();
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let d = displacement(action, &self.config)?;
        let done = self.clock.tick()?;
        let prev = self.agent;
        let next = [(prev[0] + d[0]).clamp(0.0, 1.0), (prev[1] + d[1]).clamp(0.0, 1.0)];
        let moved = [next[0] - prev[0], next[1] - prev[1]];
        let len = moved[0].hypot(moved[1]);
        self.agent = next;
        if len > 0.0 && inside_object(next, self.object, self.config.object_half_size) {
            let dir = [moved[0] / len, moved[1] / len];
            let t = clearing_distance(next, self.object, self.config.object_half_size, dir);
            let pushed = [self.object[0] + t * dir[0], self.object[1] + t * dir[1]];
            let half = self.config.object_half_size;
            let lim = (half, 1.0 - half);
            if pushed.iter().all(|&p| p >= lim.0 && p <= lim.1) {
                self.object = pushed;
            } else {
                // pinned against a wall: neither body moves
                self.agent = prev;
            }
        }
        let observation = self.observe();
        let reward = compute_reward(&observation.achieved_goal, &observation.desired_goal, &self.spec)?;
        Ok(StepOutcome { observation, reward, done })
    }
}

/// Agent confined to `x ≤ SLIDE_STRIP_MAX_X` strikes an object, which then
/// slides with velocity decaying by [`SLIDE_FRICTION`] per step.
#[derive(Clone, Debug)]
pub struct PlanarSlide {
    config: EnvConfig,
    spec: EnvSpec,
    clock: Clock,
    agent: [f64; 2],
    object: [f64; 2],
    velocity: [f64; 2],
    goal: [f64; 2],
}

impl PlanarSlide {
    pub fn new(config: &EnvConfig) -> Self {
        PlanarSlide {
            config: config.clone(),
            spec: config.spec(),
            clock: Clock::new(config.horizon),
            agent: [0.1, 0.5],
            object: [0.25, 0.5],
            velocity: [0.0; 2],
            goal: [0.8, 0.5],
        }
    }

    pub fn set_state(&mut self, agent: [f64; 2], object: [f64; 2], goal: [f64; 2]) {
        self.agent = agent;
        self.object = object;
        self.velocity = [0.0; 2];
        self.goal = goal;
        self.clock.restart();
    }

    pub fn object(&self) -> [f64; 2] {
        self.object
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.velocity
    }

    fn observe(&self) -> GoalObservation {
        let [ax, ay] = self.agent;
        let [ox, oy] = self.object;
        let [vx, vy] = self.velocity;
        GoalObservation {
            observation: vec![ax, ay, ox, oy, ox - ax, oy - ay, vx, vy],
            achieved_goal: self.object.to_vec(),
            desired_goal: self.goal.to_vec(),
        }
    }
}

impl GoalEnv for PlanarSlide {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> GoalObservation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.object = uniform_point(&mut rng, [0.2, 0.3], [0.3, 0.7]);
        self.agent = loop {
            let a = uniform_point(&mut rng, [0.0, 0.2], [SLIDE_STRIP_MAX_X, 0.8]);
            if !inside_object(a, self.object, self.config.object_half_size) {
                break a;
            }
        };
        self.velocity = [0.0; 2];
        self.goal = sample_goal(&mut rng, self.object, [0.55, 0.2], [0.9, 0.8], &self.spec);
        self.clock.restart();
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let d = displacement(action, &self.config)?;
        let done = self.clock.tick()?;
        let prev = self.agent;
        self.agent = [(prev[0] + d[0]).clamp(0.0, SLIDE_STRIP_MAX_X), (prev[1] + d[1]).clamp(0.0, 1.0)];
        let moved = [self.agent[0] - prev[0], self.agent[1] - prev[1]];
        if (moved[0] != 0.0 || moved[1] != 0.0) && inside_object(self.agent, self.object, self.config.object_half_size)
        {
            self.velocity = moved;
        }
        for i in 0..2 {
            let p = self.object[i] + self.velocity[i];
            let clamped = p.clamp(self.config.object_half_size, 1.0 - self.config.object_half_size);
            if clamped != p {
                self.velocity[i] = 0.0;
            }
            self.object[i] = clamped;
            self.velocity[i] *= SLIDE_FRICTION;
        }
        let observation = self.observe();
        let reward = compute_reward(&observation.achieved_goal, &observation.desired_goal, &self.spec)?;
        Ok(StepOutcome { observation, reward, done })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(kind: EnvKind) -> Box<dyn GoalEnv> {
        make_env(&EnvConfig::new(kind)).unwrap()
    }

    #[test]
    fn env_names_parse() {
        assert_eq!("push".parse::<EnvKind>().unwrap(), EnvKind::Push);
        assert!(matches!("door".parse::<EnvKind>(), Err(Error::UnknownEnv(_))));
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        for kind in EnvKind::ALL {
            let mut e = env(kind);
            let a = e.reset(42);
            let b = e.reset(42);
            assert_eq!(a, b);
            assert_ne!(a, e.reset(43));
        }
    }

    #[test]
    fn reach_goals_stay_in_workspace_and_start_unsolved() {
        let mut e = env(EnvKind::Reach);
        let mut unsolved = 0;
        for seed in 0..1000 {
            let o = e.reset(seed);
            assert!(o.desired_goal.iter().all(|&g| (0.0..=1.0).contains(&g)));
            if o.achieved_goal != o.desired_goal {
                unsolved += 1;
            }
            assert!(!is_success(&o.achieved_goal, &o.desired_goal, e.spec()).unwrap());
        }
        assert!(unsolved >= 990);
    }

    #[test]
    fn reward_rule() {
        let spec = EnvConfig::new(EnvKind::Reach).spec();
        assert_eq!(compute_reward(&[0.3, 0.3], &[0.3, 0.3], &spec).unwrap(), 0.0);
        // 3-4-5 triangle: distance exactly 0.05 is not a success
        assert_eq!(compute_reward(&[0.0, 0.0], &[0.03, 0.04], &spec).unwrap(), -1.0);
        assert_eq!(compute_reward(&[0.0, 0.0], &[0.03, 0.039], &spec).unwrap(), 0.0);
        assert!(!is_success(&[0.0, 0.0], &[1.0, 1.0], &spec).unwrap());
        assert!(matches!(compute_reward(&[0.0], &[0.0, 1.0], &spec), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_action_leaves_reach_agent_in_place() {
        let mut e = PointReach::new(&EnvConfig::new(EnvKind::Reach));
        e.set_state([0.2, 0.7], [0.8, 0.1]);
        let out = e.step(&[0.0, 0.0]).unwrap();
        assert_eq!(out.observation.achieved_goal, vec![0.2, 0.7]);
        assert_eq!(out.reward, -1.0);
        assert!(!out.done);
    }

    #[test]
    fn reach_within_threshold_is_rewarded() {
        let mut e = PointReach::new(&EnvConfig::new(EnvKind::Reach));
        e.set_state([0.5, 0.5], [0.52, 0.5]);
        for a in [[0.0, 0.0], [0.4, 0.0], [0.2, 0.3]] {
            let out = e.step(&a).unwrap();
            assert_eq!(out.reward, 0.0, "{a:?}");
        }
    }

    #[test]
    fn done_at_horizon_then_contract_error() {
        let mut e = env(EnvKind::Reach);
        e.reset(1);
        for t in 1..=50 {
            assert_eq!(e.step(&[0.1, 0.1]).unwrap().done, t == 50);
        }
        assert!(matches!(e.step(&[0.0, 0.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn actions_are_clipped() {
        let mut e = PointReach::new(&EnvConfig::new(EnvKind::Reach));
        e.set_state([0.5, 0.5], [0.9, 0.9]);
        let out = e.step(&[100.0, -100.0]).unwrap();
        assert!((out.observation.achieved_goal[0] - 0.55).abs() < 1e-12);
        assert!((out.observation.achieved_goal[1] - 0.45).abs() < 1e-12);
    }

    #[test]
    fn push_follows_hand_stepped_contact_rule() {
        let mut e = PlanarPush::new(&EnvConfig::new(EnvKind::Push));
        e.set_state([0.32, 0.5], [0.4, 0.5], [0.9, 0.9]);
        // step 1: agent 0.37 enters the object (left face at 0.35) by 0.02 -> object 0.42
        // step 2: agent 0.42 at object centre -> object advances a half width to 0.47
        // step 3: agent 0.47 -> object 0.52
        let expected = [(0.37, 0.42), (0.42, 0.47), (0.47, 0.52)];
        for (agent_x, object_x) in expected {
            e.step(&[1.0, 0.0]).unwrap();
            assert!((e.agent()[0] - agent_x).abs() < 1e-12);
            assert!((e.object()[0] - object_x).abs() < 1e-12, "{:?}", e.object());
            assert_eq!(e.object()[1], 0.5);
        }
        // sliding along the face it just pushed must not drag the object
        e.step(&[0.0, 1.0]).unwrap();
        assert!((e.object()[0] - 0.52).abs() < 1e-12);
        assert_eq!(e.object()[1], 0.5);
    }

    #[test]
    fn push_diagonal_contact_exits_nearest_face() {
        let mut e = PlanarPush::new(&EnvConfig::new(EnvKind::Push));
        // agent lands at (0.4, 0.44) moving along (1,1)/√2, inside the object at
        // (0.43, 0.47); r = (−0.03, −0.03) so both faces clear after 0.02 per axis
        e.set_state([0.35, 0.39], [0.43, 0.47], [0.9, 0.9]);
        e.step(&[1.0, 1.0]).unwrap();
        assert!((e.object()[0] - 0.45).abs() < 1e-12, "{:?}", e.object());
        assert!((e.object()[1] - 0.49).abs() < 1e-12);
        assert!(!inside_object(e.agent(), e.object(), OBJECT_HALF_SIZE));
    }

    #[test]
    fn push_against_wall_blocks() {
        let mut e = PlanarPush::new(&EnvConfig::new(EnvKind::Push));
        e.set_state([0.88, 0.5], [0.95, 0.5], [0.5, 0.5]);
        e.step(&[1.0, 0.0]).unwrap();
        assert_eq!(e.object(), [0.95, 0.5]);
        assert_eq!(e.agent(), [0.88, 0.5]);
    }

    #[test]
    fn slide_object_coasts_with_friction() {
        let mut e = PlanarSlide::new(&EnvConfig::new(EnvKind::Slide));
        e.set_state([0.17, 0.5], [0.25, 0.5], [0.8, 0.5]);
        // no contact yet: agent to 0.22, object front at 0.20 -> inside
        e.step(&[1.0, 0.0]).unwrap();
        let mut x = 0.25 + 0.05;
        let mut v = 0.05 * SLIDE_FRICTION;
        assert!((e.object()[0] - x).abs() < 1e-12);
        assert!((e.velocity()[0] - v).abs() < 1e-12);
        for _ in 0..5 {
            e.step(&[0.0, 0.0]).unwrap();
            x += v;
            v *= SLIDE_FRICTION;
            assert!((e.object()[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn slide_agent_confined_to_strip() {
        let mut e = PlanarSlide::new(&EnvConfig::new(EnvKind::Slide));
        e.set_state([0.38, 0.1], [0.25, 0.8], [0.8, 0.5]);
        let out = e.step(&[1.0, 0.0]).unwrap();
        assert_eq!(out.observation.observation[0], SLIDE_STRIP_MAX_X);
    }

    #[test]
    fn untouched_objects_never_move() {
        for kind in [EnvKind::Push, EnvKind::Slide] {
            let mut e = env(kind);
            let o = e.reset(5);
            // move directly away from the object
            let away = [o.observation[0] - o.observation[2], o.observation[1] - o.observation[3]];
            for _ in 0..50 {
                let out = e.step(&[away[0].signum(), away[1].signum()]).unwrap();
                assert_eq!(out.observation.achieved_goal, o.achieved_goal);
            }
        }
    }
}
