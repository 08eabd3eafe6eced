use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use web_time::Instant;

use super::agent::Agent;
use super::model::TrainedModel;
use super::network::{IncrementalForward, QNetwork};
use super::train::TrainConfig;
use super::DqnError;
use crate::actions::{ActionMode, ActionOutcome, ActionType};
use crate::env::Environment;
use crate::features::feature_len;
use crate::instance::ProblemInstance;
use crate::plan::PlanState;
use crate::reward::PenaltyConfig;
use crate::rules::RuleConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    /// Maximum number of actions.
    pub budget: usize,
    pub rules: RuleConfig,
    pub penalty: PenaltyConfig,
    /// Guided or random concrete actions.
    pub mode: ActionMode,
    /// Seeds the random concrete actions.
    pub seed: u64,
    /// Skip an action type that just failed to change the plan until the plan
    /// changes again. Neighborhood moves under priority lists get one retry
    /// per active route, since each retry looks at a different route.
    pub mask_unapplied: bool,
    /// Keep every outcome in the report.
    pub trace: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            budget: 170,
            rules: RuleConfig::medium(),
            penalty: PenaltyConfig::medium(),
            mode: ActionMode::Guided,
            seed: 0,
            mask_unapplied: true,
            trace: false,
        }
    }
}

impl SolveConfig {
    /// Budget, rules, penalties and action mode matching a training configuration.
    pub fn for_config(cfg: &TrainConfig) -> Self {
        Self {
            budget: 2 * cfg.steps_per_episode,
            rules: cfg.rules,
            penalty: cfg.penalty,
            mode: cfg.mode(),
            ..Self::default()
        }
    }

    pub fn for_model(model: &TrainedModel) -> Self {
        Self::for_config(&model.config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Cost of the returned (best feasible) plan.
    pub tsc: f64,
    /// Cost of the all-backup starting plan.
    pub initial_tsc: f64,
    pub seconds: f64,
    pub steps: usize,
    pub chosen: [usize; ActionType::COUNT],
    pub applied: [usize; ActionType::COUNT],
    pub feasible: bool,
    pub trace: Vec<ActionOutcome>,
}

/// Greedy rollout of a trained model; returns the best feasible plan reached.
pub fn solve(instance: &ProblemInstance, model: &TrainedModel, cfg: &SolveConfig) -> Result<(PlanState, SolveReport), DqnError> {
    model.check_profile(instance)?;
    solve_with_network(instance, &model.net, cfg)
}

pub(crate) fn solve_with_network(
    instance: &ProblemInstance,
    net: &QNetwork,
    cfg: &SolveConfig,
) -> Result<(PlanState, SolveReport), DqnError> {
    let want = feature_len(instance.n_requests(), instance.n_crowdsourcees());
    if net.input_len() != want {
        return Err(DqnError::Profile(format!(
            "instance encodes to {want} features, network expects {}",
            net.input_len()
        )));
    }
    let started = Instant::now();
    let mut env = Environment::new(instance, cfg.rules, cfg.penalty, cfg.mode);
    let initial_tsc = env.tsc();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut failures = [0usize; ActionType::COUNT];
    let mut trace = Vec::new();
    let mut forward = IncrementalForward::new(net);
    for _ in 0..cfg.budget {
        let mut q = forward.forward(&env.state())?;
        if cfg.mask_unapplied {
            for a in ActionType::ALL {
                if failures[a.index()] >= retry_limit(a, &env, cfg) {
                    q[a.index()] = f64::NEG_INFINITY;
                }
            }
        }
        let action = ActionType::from_index(Agent::argmax(&q)).unwrap();
        let out = env.step(action, &mut rng);
        let changed = out.applied && !out.mutated_routes.is_empty();
        if cfg.trace {
            trace.push(out);
        }
        if action == ActionType::DoNothing {
            // the state is unchanged, so every later step would repeat this choice
            break;
        }
        if changed {
            failures = [0; ActionType::COUNT];
        } else {
            failures[action.index()] += 1;
        }
    }
    let steps = env.steps();
    let chosen = env.chosen_counts();
    let applied = env.applied_counts();
    let (plan, tsc) = env.into_best();
    let report = SolveReport {
        tsc,
        initial_tsc,
        seconds: started.elapsed().as_secs_f64(),
        steps,
        chosen,
        applied,
        feasible: plan.is_feasible(),
        trace,
    };
    Ok((plan, report))
}

fn retry_limit(action: ActionType, env: &Environment<'_>, cfg: &SolveConfig) -> usize {
    match action {
        ActionType::DoNothing => usize::MAX,
        ActionType::Insertion => 1,
        _ if cfg.rules.enabled => env.plan().active_routes().count().max(1),
        _ => 1,
    }
}
