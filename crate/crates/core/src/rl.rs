//! Q-learning of the MPC parameters from environment transitions.

use crate::envs::Environment;
use crate::{Agent, Error, Result};
use nalgebra::DVector;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: DVector<f64>,
    pub a: DVector<f64>,
    pub s_next: DVector<f64>,
    pub cost: f64,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.cost.is_finite()
            && self
                .s
                .iter()
                .chain(self.a.iter())
                .chain(self.s_next.iter())
                .all(|v| v.is_finite())
    }
}

/// Bounded FIFO of transitions with its own sampling generator.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay buffer capacity must be positive".into()));
        }
        Ok(Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends `tr`, evicting the oldest entry when full.
    pub fn push(&mut self, tr: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(tr);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn latest(&self) -> Option<&Transition> {
        self.items.back()
    }

    /// Up to `n` distinct entries drawn uniformly.
    pub fn sample(&mut self, n: usize) -> Vec<Transition> {
        let n = n.min(self.items.len());
        index::sample(&mut self.rng, self.items.len(), n)
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect()
    }

    /// The newest entry plus `n - 1` others drawn uniformly from the rest.
    pub fn sample_with_latest(&mut self, n: usize) -> Vec<Transition> {
        let len = self.items.len();
        if n == 0 || len == 0 {
            return Vec::new();
        }
        let mut out = vec![self.items[len - 1].clone()];
        let extra = (n - 1).min(len - 1);
        out.extend(
            index::sample(&mut self.rng, len - 1, extra)
                .into_iter()
                .map(|i| self.items[i].clone()),
        );
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// One update after every transition, on the newest transition plus
    /// `batch_size - 1` replayed ones.
    PerStep,
    /// One update per episode, averaged over that episode's transitions.
    EpisodeBatch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub update_mode: UpdateMode,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub seed: u64,
    pub initial_state: Vec<f64>,
    /// Half-width of uniform noise added to the policy action. Noisy actions
    /// outside the input constraints make their transitions unusable.
    pub exploration: f64,
    /// Largest entry of a single parameter update; larger updates are
    /// scaled down along their direction. `inf` disables the bound.
    pub max_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 30,
            steps_per_episode: 100,
            learning_rate: 1e-4,
            gamma: 0.9,
            update_mode: UpdateMode::PerStep,
            batch_size: 1,
            buffer_capacity: 10_000,
            seed: 0,
            initial_state: vec![0.5, 0.5],
            exploration: 0.0,
            max_step: 1e-2,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch size and buffer capacity must be positive");
        }
        if !(self.max_step > 0.0) {
            return bad("max_step must be positive");
        }
        if self.exploration < 0.0 {
            return bad("exploration must be non-negative");
        }
        Ok(())
    }
}

/// One row of an episode trajectory: state before the step, applied action
/// and incurred cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Parameters at the end of the episode.
    pub theta: Vec<f64>,
    pub cost: f64,
    pub violations: usize,
    pub mean_abs_td: f64,
    /// Failed solves and dropped samples.
    pub failures: usize,
    pub aborted: bool,
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub episodes: Vec<EpisodeRecord>,
}

/// `cost + gamma V(s_next) - Q(s, a)` and the Q-solution it used.
fn td_with_solution(agent: &mut Agent, tr: &Transition, gamma: f64) -> Result<(f64, crate::Solution<f64>)> {
    // Q first: right after acting, the cached value solution at `s` is the
    // best starting point.
    let (q, sol) = agent.action_value(&tr.s, &tr.a)?;
    let (v_next, _) = agent.value(&tr.s_next)?;
    Ok((tr.cost + gamma * v_next - q, sol))
}

pub fn td_error(agent: &mut Agent, tr: &Transition, gamma: f64) -> Result<f64> {
    td_with_solution(agent, tr, gamma).map(|(d, _)| d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub mean_abs_td: f64,
    pub used: usize,
    pub dropped: usize,
}

/// `theta += alpha * mean(delta * grad Q)` over the samples that could be
/// evaluated. Leaves `theta` untouched if none could.
pub fn q_update(agent: &mut Agent, batch: &[Transition], alpha: f64, gamma: f64) -> Result<UpdateOutcome> {
    q_update_bounded(agent, batch, alpha, gamma, f64::INFINITY)
}

/// [`q_update`] with the update scaled so that no entry exceeds `max_step`.
pub fn q_update_bounded(
    agent: &mut Agent,
    batch: &[Transition],
    alpha: f64,
    gamma: f64,
    max_step: f64,
) -> Result<UpdateOutcome> {
    let mut step = DVector::zeros(agent.theta().len());
    let mut abs_td = 0.0;
    let mut used = 0;
    for tr in batch {
        let sample = td_with_solution(agent, tr, gamma).and_then(|(d, sol)| Ok((d, agent.grad_q(&sol)?)));
        match sample {
            Ok((d, g)) if d.is_finite() && g.iter().all(|v| v.is_finite()) => {
                step.axpy(d, &g, 1.0);
                abs_td += d.abs();
                used += 1;
            }
            Ok(_) => log::warn!("non-finite TD sample dropped"),
            Err(e) => log::warn!("TD sample dropped: {e}"),
        }
    }
    let dropped = batch.len() - used;
    if used == 0 {
        return Ok(UpdateOutcome {
            mean_abs_td: f64::NAN,
            used,
            dropped,
        });
    }
    let n = used as f64;
    if alpha != 0.0 {
        let mut step = step * (alpha / n);
        let largest = step.amax();
        if largest > max_step {
            log::debug!("update of size {largest:.3e} scaled to {max_step:.1e}");
            step *= max_step / largest;
        }
        let theta = agent.theta() + step;
        agent.set_theta(&theta)?;
    }
    Ok(UpdateOutcome {
        mean_abs_td: abs_td / n,
        used,
        dropped,
    })
}

/// Consecutive failures after which an episode is abandoned.
const MAX_CONSECUTIVE_FAILURES: usize = 5;

/// Disturbance seed of each episode; index 0 is reserved for a rollout
/// before training.
pub fn episode_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..=episodes).map(|_| rng.random()).collect()
}

struct Runner<'a, E: Environment> {
    env: &'a mut E,
    agent: &'a mut Agent,
    cfg: &'a TrainConfig,
    noise: ChaCha8Rng,
}

impl<E: Environment> Runner<'_, E> {
    fn episode(&mut self, env_seed: u64, mut learn: Option<&mut ReplayBuffer>) -> Result<EpisodeRecord> {
        let s0 = DVector::from_column_slice(&self.cfg.initial_state);
        let mut s = self.env.reset(&s0, Some(env_seed));
        let mut rec = EpisodeRecord {
            theta: Vec::new(),
            cost: 0.0,
            violations: 0,
            mean_abs_td: f64::NAN,
            failures: 0,
            aborted: false,
            steps: Vec::with_capacity(self.cfg.steps_per_episode),
        };
        let mut episode: Vec<Transition> = Vec::new();
        let (mut td_sum, mut td_n) = (0.0, 0usize);
        let mut consecutive = 0;
        for k in 0..self.cfg.steps_per_episode {
            let a = match self.agent.act(&s) {
                Ok((a, _)) => {
                    consecutive = 0;
                    a
                }
                Err(e) => {
                    log::warn!("policy evaluation failed at step {k}: {e}");
                    rec.failures += 1;
                    consecutive += 1;
                    if consecutive > MAX_CONSECUTIVE_FAILURES {
                        rec.aborted = true;
                        break;
                    }
                    DVector::zeros(self.env.action_dim())
                }
            };
            let a = if self.cfg.exploration > 0.0 {
                a.map(|v| v + self.noise.random_range(-self.cfg.exploration..=self.cfg.exploration))
            } else {
                a
            };
            let step = self.env.step(&a);
            rec.steps.push(StepRecord {
                state: s.as_slice().to_vec(),
                action: a.as_slice().to_vec(),
                cost: step.cost,
            });
            rec.cost += step.cost;
            rec.violations += step.violations;
            let tr = Transition {
                s: s.clone(),
                a,
                s_next: step.state.clone(),
                cost: step.cost,
            };
            s = step.state;
            if !tr.is_finite() {
                log::warn!("non-finite transition at step {k}; episode abandoned");
                rec.aborted = true;
                break;
            }
            if let Some(buffer) = learn.as_deref_mut() {
                buffer.push(tr.clone());
                if self.cfg.update_mode == UpdateMode::PerStep {
                    let batch = buffer.sample_with_latest(self.cfg.batch_size);
                    let out = q_update_bounded(
                        self.agent,
                        &batch,
                        self.cfg.learning_rate,
                        self.cfg.gamma,
                        self.cfg.max_step,
                    )?;
                    rec.failures += out.dropped;
                    if out.used > 0 {
                        td_sum += out.mean_abs_td;
                        td_n += 1;
                    }
                } else {
                    episode.push(tr);
                }
            }
        }
        if learn.is_some() && !episode.is_empty() {
            let out = q_update_bounded(
                self.agent,
                &episode,
                self.cfg.learning_rate,
                self.cfg.gamma,
                self.cfg.max_step,
            )?;
            rec.failures += out.dropped;
            if out.used > 0 {
                td_sum += out.mean_abs_td;
                td_n += 1;
            }
        }
        if td_n > 0 {
            rec.mean_abs_td = td_sum / td_n as f64;
        }
        rec.theta = self.agent.theta().as_slice().to_vec();
        Ok(rec)
    }
}

fn check_dims<E: Environment>(env: &E, agent: &Agent, cfg: &TrainConfig) -> Result<()> {
    cfg.check()?;
    let d = agent.ocp().dims();
    for (what, expected, got) in [
        ("environment state", d.nx, env.state_dim()),
        ("environment action", d.nu, env.action_dim()),
        ("initial state", d.nx, cfg.initial_state.len()),
    ] {
        if expected != got {
            return Err(Error::Dimension {
                what: what.into(),
                expected,
                got,
            });
        }
    }
    Ok(())
}

/// Runs one episode with the current parameters and no learning, using the
/// disturbance seed reserved for index 0 of [`episode_seeds`].
pub fn rollout<E: Environment>(env: &mut E, agent: &mut Agent, cfg: &TrainConfig) -> Result<EpisodeRecord> {
    check_dims(env, agent, cfg)?;
    let seed = episode_seeds(cfg.seed, 0)[0];
    Runner {
        env,
        agent,
        cfg,
        noise: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
    }
    .episode(seed, None)
}

/// Q-learning over `cfg.episodes` episodes, each started from
/// `cfg.initial_state` with its own disturbance seed.
pub fn train<E: Environment>(env: &mut E, agent: &mut Agent, cfg: &TrainConfig) -> Result<TrainHistory> {
    check_dims(env, agent, cfg)?;
    let seeds = episode_seeds(cfg.seed, cfg.episodes);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, cfg.seed.wrapping_add(1))?;
    let mut runner = Runner {
        env,
        agent,
        cfg,
        noise: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
    };
    let mut history = TrainHistory::default();
    for (i, &seed) in seeds.iter().enumerate().skip(1) {
        let rec = runner.episode(seed, Some(&mut buffer))?;
        log::info!(
            "episode {i}: cost {:.4}, violations {}, mean |td| {:.3e}",
            rec.cost,
            rec.violations,
            rec.mean_abs_td
        );
        history.episodes.push(rec);
    }
    Ok(history)
}
