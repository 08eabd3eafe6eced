//! WebAssembly bindings for the browser playground: generate an instance,
//! apply actions one at a time, and run a baseline on the same instance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use crowdroute::actions::{ActionMode, ActionOutcome, ActionType};
use crowdroute::baselines::{reactive_tabu_search, simple_heuristic, simulated_annealing, RtsParams, SaParams};
use crowdroute::env::Environment;
use crowdroute::instance::{generate_instance, instance_from_json, instance_to_json, ProblemInstance, Profile};
use crowdroute::plan::{total_shipping_cost, PlanState};
use crowdroute::reward::PenaltyConfig;
use crowdroute::rules::RuleConfig;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// A random instance as JSON.
#[wasm_bindgen]
pub fn generate(requests: usize, crowdsourcees: usize, seed: u64) -> Result<String, JsError> {
    let inst = generate_instance(requests, crowdsourcees, seed, &Profile::Medium).map_err(js_err)?;
    Ok(instance_to_json(&inst))
}

/// Solves `instance_json` with `method` (`simple`, `rts` or `sa`) and
/// returns the plan and its cost as JSON.
#[wasm_bindgen]
pub fn run_baseline(instance_json: &str, method: &str, seed: u64) -> Result<String, JsError> {
    let inst = instance_from_json(instance_json).map_err(js_err)?;
    let (plan, report) = match method {
        "simple" => simple_heuristic(&inst),
        "rts" => reactive_tabu_search(&inst, &RtsParams::default()),
        "sa" => simulated_annealing(&inst, &SaParams { seed, ..SaParams::default() }),
        other => return Err(JsError::new(&format!("unknown method {other}"))),
    };
    let mut out = plan_json(&inst, &plan);
    out["method"] = json!(report.method);
    out["seconds"] = json!(report.seconds);
    out["iterations"] = json!(report.iterations);
    Ok(out.to_string())
}

fn plan_json(inst: &ProblemInstance, plan: &PlanState) -> Value {
    let routes: Vec<Value> = plan
        .routes()
        .iter()
        .map(|r| {
            r.iter()
                .map(|&n| {
                    let p = n.location(inst);
                    json!({ "node": n.to_string(), "x": p.x, "y": p.y })
                })
                .collect()
        })
        .collect();
    json!({
        "routes": routes,
        "backup": plan.backup().iter().collect::<Vec<_>>(),
        "tsc": total_shipping_cost(inst, plan),
        "feasible": plan.is_feasible(),
    })
}

fn parse_action(name: &str) -> Result<ActionType, JsError> {
    ActionType::ALL
        .into_iter()
        .find(|a| a.name() == name)
        .ok_or_else(|| JsError::new(&format!("unknown action {name}")))
}

/// An instance plus a plan that actions are applied to step by step.
#[wasm_bindgen]
pub struct Playground {
    instance: &'static ProblemInstance,
    env: Environment<'static>,
    rng: ChaCha8Rng,
    last: Option<ActionOutcome>,
}

#[wasm_bindgen]
impl Playground {
    /// Starts from the all-backup plan of `instance_json`.
    #[wasm_bindgen(constructor)]
    pub fn new(instance_json: &str, rules: bool, guided: bool, seed: u64) -> Result<Playground, JsError> {
        let inst = instance_from_json(instance_json).map_err(js_err)?;
        // the environment borrows the instance for the playground's whole life
        let instance: &'static ProblemInstance = Box::leak(Box::new(inst));
        let rules = if rules { RuleConfig::medium() } else { RuleConfig::disabled() };
        let mode = if guided { ActionMode::Guided } else { ActionMode::Random };
        Ok(Self {
            instance,
            env: Environment::new(instance, rules, PenaltyConfig::medium(), mode),
            rng: ChaCha8Rng::seed_from_u64(seed),
            last: None,
        })
    }

    /// Applies one action (`insertion`, `intra_route`, `inter_route`,
    /// `one_exchange`, `do_nothing`) and returns the new state.
    pub fn apply(&mut self, action: &str) -> Result<String, JsError> {
        let action = parse_action(action)?;
        self.last = Some(self.env.step(action, &mut self.rng));
        Ok(self.state())
    }

    /// Current plan, best cost so far, and the last outcome as JSON.
    pub fn state(&self) -> String {
        let mut out = plan_json(self.instance, self.env.plan());
        out["best_tsc"] = json!(self.env.best().1);
        out["steps"] = json!(self.env.steps());
        out["last"] = json!(self.last.as_ref().map(|o| json!({
            "action": o.action.name(),
            "applied": o.applied,
            "reward": o.reward,
            "text": o.to_string(),
        })));
        out.to_string()
    }

    pub fn instance(&self) -> String {
        instance_to_json(self.instance)
    }
}
