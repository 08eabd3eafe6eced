//! One problem instance being worked on step by step, with the best feasible
//! plan seen so far.

use rand::Rng;

use crate::actions::{apply_action, ActionContext, ActionMode, ActionOutcome, ActionType};
use crate::features::encode_state;
use crate::instance::ProblemInstance;
use crate::plan::{total_shipping_cost, PlanState};
use crate::reward::PenaltyConfig;
use crate::rules::RuleConfig;

#[derive(Debug, Clone)]
pub struct Environment<'a> {
    instance: &'a ProblemInstance,
    plan: PlanState,
    ctx: ActionContext,
    mode: ActionMode,
    best_plan: PlanState,
    best_tsc: f64,
    chosen: [usize; ActionType::COUNT],
    applied: [usize; ActionType::COUNT],
    steps: usize,
}

impl<'a> Environment<'a> {
    /// Starts from the all-backup plan.
    pub fn new(instance: &'a ProblemInstance, rules: RuleConfig, penalty: PenaltyConfig, mode: ActionMode) -> Self {
        let plan = PlanState::initial(instance);
        Self::with_plan(instance, plan, rules, penalty, mode)
    }

    pub fn with_plan(
        instance: &'a ProblemInstance,
        plan: PlanState,
        rules: RuleConfig,
        penalty: PenaltyConfig,
        mode: ActionMode,
    ) -> Self {
        let ctx = ActionContext::new(instance, &plan, rules, penalty);
        let best_tsc = if plan.is_feasible() { total_shipping_cost(instance, &plan) } else { f64::INFINITY };
        Self {
            instance,
            best_plan: plan.clone(),
            plan,
            ctx,
            mode,
            best_tsc,
            chosen: [0; ActionType::COUNT],
            applied: [0; ActionType::COUNT],
            steps: 0,
        }
    }

    pub fn instance(&self) -> &'a ProblemInstance {
        self.instance
    }

    pub fn plan(&self) -> &PlanState {
        &self.plan
    }

    pub fn context(&self) -> &ActionContext {
        &self.ctx
    }

    pub fn state(&self) -> Vec<f64> {
        encode_state(self.instance, &self.plan)
    }

    pub fn tsc(&self) -> f64 {
        total_shipping_cost(self.instance, &self.plan)
    }

    /// Best feasible plan reached so far and its cost.
    pub fn best(&self) -> (&PlanState, f64) {
        (&self.best_plan, self.best_tsc)
    }

    pub fn into_best(self) -> (PlanState, f64) {
        (self.best_plan, self.best_tsc)
    }

    /// How often each action type was chosen.
    pub fn chosen_counts(&self) -> [usize; ActionType::COUNT] {
        self.chosen
    }

    /// How often each action type changed the plan (do-nothing always counts).
    pub fn applied_counts(&self) -> [usize; ActionType::COUNT] {
        self.applied
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: ActionType, rng: &mut R) -> ActionOutcome {
        let out = apply_action(action, self.mode, self.instance, &mut self.plan, &mut self.ctx, rng);
        self.steps += 1;
        self.chosen[action.index()] += 1;
        if out.applied {
            self.applied[action.index()] += 1;
            if !out.mutated_routes.is_empty() && self.plan.is_feasible() {
                let tsc = total_shipping_cost(self.instance, &self.plan);
                if tsc < self.best_tsc {
                    self.best_tsc = tsc;
                    self.best_plan = self.plan.clone();
                }
            }
        }
        out
    }
}
