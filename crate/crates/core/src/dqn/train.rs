use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use web_time::Instant;

use super::agent::Agent;
use super::model::TrainedModel;
use super::solve::{solve_with_network, SolveConfig};
use super::{split_seed, DqnError};
use crate::actions::{ActionMode, ActionOutcome, ActionType};
use crate::env::Environment;
use crate::features::feature_len;
use crate::instance::{generate_with_rng, GeneratorParams, ProblemInstance, Profile};
use crate::reward::PenaltyConfig;
use crate::rules::RuleConfig;

/// Everything that shapes a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_requests: usize,
    pub n_crowdsourcees: usize,
    pub generator: GeneratorParams,
    /// I: maximum number of episodes.
    pub episodes: usize,
    /// T: steps per episode.
    pub steps_per_episode: usize,
    /// Hard cap on environment steps across all episodes.
    pub max_steps: usize,
    /// |M|.
    pub replay_capacity: usize,
    /// |M_sub|.
    pub minibatch: usize,
    /// δ: target network sync period, in steps.
    pub target_update: usize,
    /// γ.
    pub gamma: f64,
    /// α.
    pub learning_rate: f64,
    /// ξ.
    pub epsilon_decay: f64,
    /// Restart ε at 1 at every episode instead of once per run.
    #[serde(default)]
    pub epsilon_reset_per_episode: bool,
    /// 𝒦: an episode ends once its summed negative reward reaches this value.
    pub termination_threshold: f64,
    pub hidden: Vec<usize>,
    pub penalty: PenaltyConfig,
    pub rules: RuleConfig,
    /// Heuristics-guided concrete actions; `false` picks them at random.
    pub guided: bool,
    /// Multiplier applied to rewards before they enter the replay memory.
    pub reward_scale: f64,
    /// Steps over which the relative change of cumulative penalty is measured.
    pub convergence_window: usize,
    /// Training stops once that relative change falls below this value.
    pub convergence_tolerance: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// 50 requests, 22 crowdsourcees.
    pub fn medium() -> Self {
        Self {
            n_requests: 50,
            n_crowdsourcees: 22,
            generator: Profile::Medium.params(),
            episodes: 600,
            steps_per_episode: 85,
            max_steps: 50_000,
            replay_capacity: 10_000,
            minibatch: 100,
            target_update: 400,
            gamma: 0.96,
            learning_rate: 0.001,
            epsilon_decay: 0.001,
            epsilon_reset_per_episode: false,
            termination_threshold: -25.0,
            hidden: vec![128, 128, 128],
            penalty: PenaltyConfig::medium(),
            rules: RuleConfig::medium(),
            guided: true,
            reward_scale: 1.0,
            convergence_window: 3000,
            convergence_tolerance: 0.05,
            seed: 0,
        }
    }

    /// 200 requests, 70 crowdsourcees.
    pub fn large() -> Self {
        Self {
            n_requests: 200,
            n_crowdsourcees: 70,
            generator: Profile::Large.params(),
            episodes: 200,
            steps_per_episode: 300,
            max_steps: 60_000,
            epsilon_decay: 0.002,
            termination_threshold: -175.0,
            penalty: PenaltyConfig::large(),
            rules: RuleConfig::large(),
            ..Self::medium()
        }
    }

    /// A laptop-sized variant of the medium profile: 25 requests,
    /// 11 crowdsourcees, at most 15,000 steps.
    pub fn desk() -> Self {
        Self {
            n_requests: 25,
            n_crowdsourcees: 11,
            episodes: 400,
            steps_per_episode: 45,
            max_steps: 15_000,
            ..Self::medium()
        }
    }

    pub fn validate(&self) -> Result<(), DqnError> {
        let bad = |m: &str| Err(DqnError::Config(m.to_string()));
        if self.n_requests == 0 || self.n_crowdsourcees == 0 {
            return bad("request and crowdsourcee counts must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.epsilon_decay) {
            return bad("epsilon decay must lie in [0, 1)");
        }
        if self.termination_threshold >= 0.0 {
            return bad("termination threshold must be negative");
        }
        if self.minibatch == 0 || self.replay_capacity < self.minibatch {
            return bad("replay capacity must hold at least one minibatch");
        }
        if !(self.learning_rate > 0.0) || !(self.reward_scale > 0.0) {
            return bad("learning rate and reward scale must be positive");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layers must be non-empty");
        }
        self.penalty.validate().map_err(DqnError::Config)
    }

    pub fn feature_len(&self) -> usize {
        feature_len(self.n_requests, self.n_crowdsourcees)
    }

    pub fn mode(&self) -> ActionMode {
        if self.guided {
            ActionMode::Guided
        } else {
            ActionMode::Random
        }
    }
}

/// Extra work done alongside training.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Instances solved greedily at every checkpoint.
    pub eval_instances: Vec<ProblemInstance>,
    /// Checkpoint period in steps; 0 disables checkpoints.
    pub checkpoint_every: usize,
    pub eval: SolveConfig,
    /// Keep the outcome of every step in the report.
    pub trace: bool,
}

/// One traced training step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub step: usize,
    pub episode: usize,
    pub epsilon: f64,
    pub outcome: ActionOutcome,
}

/// One row of the training log, written at the end of every episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub episode: usize,
    /// Mean minibatch loss over the episode's updates (NaN without updates).
    pub avg_loss: f64,
    /// Mean predicted Q(s, a) over the episode's minibatches.
    pub avg_q: f64,
    /// Reward summed over the episode.
    pub accum_reward: f64,
    /// Penalty accumulated since the start of training.
    pub cum_penalty: f64,
}

pub const LOG_HEADER: &str = "step,episode,avg_loss,avg_q,accum_reward,cum_penalty";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub tsc: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Budget,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: TrainedModel,
    pub log: Vec<LogRow>,
    pub checkpoints: Vec<Checkpoint>,
    /// Cumulative penalty after every step.
    pub penalty_curve: Vec<f64>,
    pub stop: StopReason,
    pub steps: usize,
    pub episodes: usize,
    pub seconds: f64,
    pub action_counts: [usize; ActionType::COUNT],
    pub trace: Vec<StepTrace>,
}

impl TrainReport {
    /// Relative growth of cumulative penalty over the last `window` steps.
    pub fn penalty_relative_change(&self, window: usize) -> Option<f64> {
        relative_change(&self.penalty_curve, window)
    }
}

fn relative_change(curve: &[f64], window: usize) -> Option<f64> {
    if curve.len() <= window {
        return None;
    }
    let now = *curve.last()?;
    let then = curve[curve.len() - 1 - window];
    (then > 0.0).then(|| (now - then) / then)
}

/// Runs deep Q-learning on freshly generated instances until the cumulative
/// penalty stabilizes or the episode/step budget runs out.
pub fn train(
    cfg: &TrainConfig,
    opts: &TrainOptions,
    mut on_episode: impl FnMut(&LogRow),
) -> Result<TrainReport, DqnError> {
    cfg.validate()?;
    for inst in &opts.eval_instances {
        check_size(cfg, inst)?;
    }
    let started = Instant::now();
    let mut agent = Agent::new(cfg.feature_len(), cfg, split_seed(cfg.seed, 1));
    let mut instance_rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, 2));
    let mut action_rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, 3));
    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    let mut penalty_curve = Vec::new();
    let mut cum_penalty = 0.0;
    let mut counts = [0usize; ActionType::COUNT];
    let mut stop = StopReason::Budget;
    let mut episodes = 0;
    let mut trace = Vec::new();

    'episodes: for episode in 0..cfg.episodes {
        if agent.steps() >= cfg.max_steps {
            break;
        }
        episodes += 1;
        if cfg.epsilon_reset_per_episode {
            agent.epsilon = 1.0;
        }
        let instance = generate_with_rng(cfg.n_requests, cfg.n_crowdsourcees, &cfg.generator, &mut instance_rng)
            .map_err(|e| DqnError::Config(e.to_string()))?;
        let mut env = Environment::new(&instance, cfg.rules, cfg.penalty, cfg.mode());
        let mut state: Arc<[f64]> = env.state().into();
        let mut negative = 0.0;
        let mut ep_reward = 0.0;
        let (mut loss_sum, mut q_sum, mut updates) = (0.0, 0.0, 0usize);
        let mut converged = false;
        for _ in 0..cfg.steps_per_episode {
            if agent.steps() >= cfg.max_steps {
                break;
            }
            let action = agent.act(&state);
            counts[action.index()] += 1;
            let out = env.step(action, &mut action_rng);
            if opts.trace {
                trace.push(StepTrace { step: agent.steps() + 1, episode, epsilon: agent.epsilon, outcome: out.clone() });
            }
            let next: Arc<[f64]> = env.state().into();
            agent.remember(state, action, out.reward * cfg.reward_scale, next.clone());
            state = next;
            if out.reward < 0.0 {
                negative += out.reward;
            }
            ep_reward += out.reward;
            if out.applied && action != ActionType::Insertion {
                cum_penalty += out.penalty_after;
            }
            penalty_curve.push(cum_penalty);
            let mut terminate = false;
            if agent.ready() {
                if negative > cfg.termination_threshold {
                    let stats = agent.learn();
                    if !stats.loss.is_finite() || !agent.online.is_finite() {
                        return Err(DqnError::Divergence {
                            step: agent.steps(),
                            episode,
                            detail: format!(
                                "loss {} mean Q {} epsilon {:.6} replay {} instance seed stream {}",
                                stats.loss,
                                stats.mean_q,
                                agent.epsilon,
                                agent.replay.len(),
                                episode
                            ),
                        });
                    }
                    loss_sum += stats.loss;
                    q_sum += stats.mean_q;
                    updates += 1;
                } else {
                    terminate = true;
                }
            }
            agent.end_step();
            let step = agent.steps();
            if opts.checkpoint_every > 0 && step % opts.checkpoint_every == 0 && !opts.eval_instances.is_empty() {
                checkpoints.push(Checkpoint { step, tsc: evaluate(&agent, opts)? });
            }
            if step >= cfg.convergence_window
                && relative_change(&penalty_curve, cfg.convergence_window)
                    .is_some_and(|c| c < cfg.convergence_tolerance)
            {
                converged = true;
                break;
            }
            if terminate {
                break;
            }
        }
        let row = LogRow {
            step: agent.steps(),
            episode,
            avg_loss: if updates > 0 { loss_sum / updates as f64 } else { f64::NAN },
            avg_q: if updates > 0 { q_sum / updates as f64 } else { f64::NAN },
            accum_reward: ep_reward,
            cum_penalty,
        };
        on_episode(&row);
        log.push(row);
        if converged {
            stop = StopReason::Converged;
            break 'episodes;
        }
    }

    let steps = agent.steps();
    let model = TrainedModel {
        net: agent.online,
        adam: Some(agent.adam),
        n_requests: cfg.n_requests,
        n_crowdsourcees: cfg.n_crowdsourcees,
        config: cfg.clone(),
    };
    Ok(TrainReport {
        model,
        log,
        checkpoints,
        penalty_curve,
        stop,
        steps,
        episodes,
        seconds: started.elapsed().as_secs_f64(),
        action_counts: counts,
        trace,
    })
}

fn evaluate(agent: &Agent, opts: &TrainOptions) -> Result<Vec<f64>, DqnError> {
    opts.eval_instances
        .iter()
        .map(|inst| solve_with_network(inst, &agent.online, &opts.eval).map(|(_, r)| r.tsc))
        .collect()
}

fn check_size(cfg: &TrainConfig, inst: &ProblemInstance) -> Result<(), DqnError> {
    if inst.n_requests() != cfg.n_requests || inst.n_crowdsourcees() != cfg.n_crowdsourcees {
        return Err(DqnError::Profile(format!(
            "evaluation instance has {}/{} requests/crowdsourcees, training uses {}/{}",
            inst.n_requests(),
            inst.n_crowdsourcees(),
            cfg.n_requests,
            cfg.n_crowdsourcees
        )));
    }
    Ok(())
}
