//! Comparison heuristics: greedy insertion, reactive Tabu search, and
//! simulated annealing over the same route moves the agent uses.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use web_time::Instant;

use crate::actions::{attach, detach, nearest_couriers, requests_by_slack, with_appended};
use crate::instance::ProblemInstance;
use crate::plan::{summarize_route, total_shipping_cost, NodeRef, PlanState, RouteSummary};
use crate::reward::{penalized_route_cost, PenaltyConfig};

/// Result of one baseline run.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReport {
    pub method: String,
    /// TSC of the returned plan, dollars.
    pub tsc: f64,
    pub seconds: f64,
    pub iterations: usize,
    /// Best feasible TSC after every iteration (one move for RTS, a
    /// temperature level for SA).
    pub trajectory: Vec<f64>,
}

/// Inserts requests by ascending slack at the end of the nearest courier
/// route that stays feasible, until no such insertion remains.
pub fn simple_heuristic(instance: &ProblemInstance) -> (PlanState, BaselineReport) {
    let started = Instant::now();
    let mut plan = PlanState::initial(instance);
    let mut iterations = 0;
    let mut trajectory = vec![total_shipping_cost(instance, &plan)];
    'outer: loop {
        for j in requests_by_slack(instance, &plan) {
            for k in nearest_couriers(instance, &plan, j, None) {
                let route = with_appended(plan.route(k), j);
                if summarize_route(instance, &route).is_feasible() {
                    plan.set_route(instance, k, route).expect("append keeps route well formed");
                    iterations += 1;
                    trajectory.push(total_shipping_cost(instance, &plan));
                    continue 'outer;
                }
            }
        }
        break;
    }
    let report = BaselineReport {
        method: "simple".into(),
        tsc: total_shipping_cost(instance, &plan),
        seconds: started.elapsed().as_secs_f64(),
        iterations,
        trajectory,
    };
    (plan, report)
}

/// Every placement `(sp, sd)` of a request into a base route of `len` nodes.
fn placements(len: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..=len).flat_map(move |sp| (sp..=len).map(move |sd| (sp, sd)))
}

fn cost(instance: &ProblemInstance, s: &RouteSummary, cfg: &PenaltyConfig) -> f64 {
    penalized_route_cost(instance, s, cfg)
}

/// Penalized TSC: route costs with penalties plus backup round trips.
pub fn penalized_tsc(instance: &ProblemInstance, plan: &PlanState, cfg: &PenaltyConfig) -> f64 {
    plan.summaries().iter().map(|s| cost(instance, s, cfg)).sum::<f64>()
        + plan.backup().iter().map(|&j| instance.backup_cost(j)).sum::<f64>()
}

/// A candidate replacement of one or two routes.
#[derive(Debug, Clone)]
struct Move {
    updates: Vec<(usize, Vec<NodeRef>)>,
    summaries: Vec<RouteSummary>,
    requests: Vec<usize>,
    delta: f64,
}

impl Move {
    fn new(
        instance: &ProblemInstance,
        plan: &PlanState,
        cfg: &PenaltyConfig,
        updates: Vec<(usize, Vec<NodeRef>)>,
        requests: Vec<usize>,
    ) -> Self {
        let summaries: Vec<RouteSummary> = updates.iter().map(|(_, r)| summarize_route(instance, r)).collect();
        let delta = updates
            .iter()
            .zip(&summaries)
            .map(|((k, _), s)| cost(instance, s, cfg) - cost(instance, plan.summary(*k), cfg))
            .sum();
        Self { updates, summaries, requests, delta }
    }

    /// Whether the plan would be feasible after this move.
    fn keeps_feasible(&self, plan: &PlanState) -> bool {
        self.summaries.iter().all(RouteSummary::is_feasible)
            && (0..plan.routes().len())
                .filter(|k| !self.updates.iter().any(|u| u.0 == *k))
                .all(|k| plan.summary(k).is_feasible())
    }

    fn apply(self, instance: &ProblemInstance, plan: &mut PlanState) {
        plan.set_routes(instance, self.updates).expect("moves keep routes well formed");
    }
}

/// Cheapest penalized placement of `j` into `base`, optionally among feasible ones only.
fn best_placement(
    instance: &ProblemInstance,
    base: &[NodeRef],
    j: usize,
    cfg: &PenaltyConfig,
    feasible_only: bool,
) -> Option<Vec<NodeRef>> {
    let mut best: Option<(f64, Vec<NodeRef>)> = None;
    for (sp, sd) in placements(base.len()) {
        let cand = attach(base, j, sp, sd);
        let s = summarize_route(instance, &cand);
        if feasible_only && !s.is_feasible() {
            continue;
        }
        let c = cost(instance, &s, cfg);
        if best.as_ref().map_or(true, |b| c < b.0) {
            best = Some((c, cand));
        }
    }
    best.map(|b| b.1)
}

/// Feasible placements of `j` into `base`, skipping `skip`.
fn feasible_placements(
    instance: &ProblemInstance,
    base: &[NodeRef],
    j: usize,
    skip: Option<(usize, usize)>,
) -> Vec<Vec<NodeRef>> {
    placements(base.len())
        .filter(|&s| Some(s) != skip)
        .map(|(sp, sd)| attach(base, j, sp, sd))
        .filter(|r| summarize_route(instance, r).is_feasible())
        .collect()
}

fn assigned(plan: &PlanState, n: usize) -> Vec<(usize, usize)> {
    (0..n).filter_map(|j| plan.route_of(j).map(|k| (j, k))).collect()
}

/// Every intra-route, inter-route, and 1-exchange move from `plan` that
/// leaves the touched routes feasible.
fn neighborhood(instance: &ProblemInstance, plan: &PlanState, cfg: &PenaltyConfig) -> Vec<Move> {
    let placed = assigned(plan, instance.n_requests());
    let mut moves = Vec::new();
    for &(j, k) in &placed {
        let (base, sp0, sd0) = detach(plan.route(k), j);
        for route in feasible_placements(instance, &base, j, Some((sp0, sd0))) {
            moves.push(Move::new(instance, plan, cfg, vec![(k, route)], vec![j]));
        }
        for k2 in (0..instance.n_crowdsourcees()).filter(|&k2| k2 != k) {
            for route in feasible_placements(instance, plan.route(k2), j, None) {
                moves.push(Move::new(instance, plan, cfg, vec![(k, base.clone()), (k2, route)], vec![j]));
            }
        }
    }
    for (a, &(j1, k1)) in placed.iter().enumerate() {
        for &(j2, k2) in &placed[a + 1..] {
            if k1 != k2 {
                moves.extend(exchange(instance, plan, cfg, (j1, k1), (j2, k2), true));
            }
        }
    }
    moves
}

/// Swaps request `j1` on route `k1` with `j2` on route `k2`, each at its
/// cheapest placement in the other route.
fn exchange(
    instance: &ProblemInstance,
    plan: &PlanState,
    cfg: &PenaltyConfig,
    (j1, k1): (usize, usize),
    (j2, k2): (usize, usize),
    feasible_only: bool,
) -> Option<Move> {
    let (base1, _, _) = detach(plan.route(k1), j1);
    let (base2, _, _) = detach(plan.route(k2), j2);
    let r1 = best_placement(instance, &base1, j2, cfg, feasible_only)?;
    let r2 = best_placement(instance, &base2, j1, cfg, feasible_only)?;
    Some(Move::new(instance, plan, cfg, vec![(k1, r1), (k2, r2)], vec![j1, j2]))
}

/// Moves backup requests onto routes where a feasible placement lowers TSC,
/// smallest slack first. Returns the number of insertions.
fn repair(instance: &ProblemInstance, plan: &mut PlanState) -> usize {
    let mut inserted = 0;
    for j in requests_by_slack(instance, plan) {
        let mut best: Option<(f64, usize, Vec<NodeRef>)> = None;
        for k in 0..instance.n_crowdsourcees() {
            let route = plan.route(k);
            let d0 = plan.summary(k).duration;
            for (sp, sd) in placements(route.len()) {
                let cand = attach(route, j, sp, sd);
                let s = summarize_route(instance, &cand);
                if !s.is_feasible() {
                    continue;
                }
                let delta = instance.beta_c * (s.duration - d0) - instance.backup_cost(j);
                if delta < 0.0 && best.as_ref().map_or(true, |b| delta < b.0) {
                    best = Some((delta, k, cand));
                }
            }
        }
        if let Some((_, k, route)) = best {
            plan.set_route(instance, k, route).expect("insertion keeps route well formed");
            inserted += 1;
        }
    }
    inserted
}

/// True once the last `window` entries of `curve` moved by less than
/// `tolerance` relative to the smallest of them.
fn flat(curve: &[f64], window: usize, tolerance: f64) -> bool {
    if window == 0 || curve.len() <= window {
        return false;
    }
    let tail = &curve[curve.len() - 1 - window..];
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lo.is_finite() && hi.is_finite() && lo > 0.0 && (hi - lo) / lo < tolerance
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtsParams {
    pub penalty: PenaltyConfig,
    pub initial_tenure: f64,
    /// Tenure multiplier when a solution repeats.
    pub increase: f64,
    /// Tenure divisor after `relax_after` moves without repetition.
    pub decrease: f64,
    pub relax_after: usize,
    /// Moves per iteration of the stopping rule.
    pub moves_per_iteration: usize,
    /// Stop once the best TSC changed by less than `tolerance` over `window` iterations.
    pub window: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for RtsParams {
    fn default() -> Self {
        Self {
            penalty: PenaltyConfig::medium(),
            initial_tenure: 3.0,
            increase: 1.2,
            decrease: 1.1,
            relax_after: 10,
            moves_per_iteration: 1,
            window: 10,
            tolerance: 0.02,
            max_iterations: 1000,
        }
    }
}

/// Best-admissible-move Tabu search from the simple heuristic's plan, with
/// request-level tenure that grows on repeated solutions.
pub fn reactive_tabu_search(instance: &ProblemInstance, params: &RtsParams) -> (PlanState, BaselineReport) {
    let started = Instant::now();
    let (mut plan, _) = simple_heuristic(instance);
    let cfg = &params.penalty;
    let mut best = plan.clone();
    let mut best_tsc = total_shipping_cost(instance, &plan);
    let mut trajectory = vec![best_tsc];
    let max_tenure = instance.n_requests().max(1) as f64;
    let mut tenure = params.initial_tenure.clamp(1.0, max_tenure);
    let per_iteration = params.moves_per_iteration.max(1);
    let mut tabu_until = vec![0usize; instance.n_requests()];
    let mut seen = HashSet::from([plan.fingerprint()]);
    let mut since_repeat = 0;
    let mut moves = 0;
    let mut iterations = 0;
    'search: while iterations < params.max_iterations {
        iterations += 1;
        for _ in 0..per_iteration {
            moves += 1;
            let current = penalized_tsc(instance, &plan, cfg);
            let mut chosen: Option<Move> = None;
            // when every move is tabu, the one whose tenure ends first
            let mut oldest: Option<(usize, Move)> = None;
            for m in neighborhood(instance, &plan, cfg) {
                let expiry = m.requests.iter().map(|&j| tabu_until[j]).max().unwrap_or(0);
                if oldest.as_ref().map_or(true, |o| (expiry, m.delta) < (o.0, o.1.delta)) {
                    oldest = Some((expiry, m.clone()));
                }
                if chosen.as_ref().is_some_and(|c| m.delta >= c.delta) {
                    continue;
                }
                let aspires = current + m.delta < best_tsc - 1e-9 && m.keeps_feasible(&plan);
                if expiry < moves || aspires {
                    chosen = Some(m);
                }
            }
            let Some(m) = chosen.or(oldest.map(|o| o.1)) else {
                trajectory.push(best_tsc);
                break 'search;
            };
            for &j in &m.requests {
                tabu_until[j] = moves + tenure.round() as usize;
            }
            m.apply(instance, &mut plan);
            repair(instance, &mut plan);
            if !seen.insert(plan.fingerprint()) {
                tenure = (tenure * params.increase).min(max_tenure);
                since_repeat = 0;
            } else {
                since_repeat += 1;
                if since_repeat >= params.relax_after {
                    tenure = (tenure / params.decrease).max(1.0);
                    since_repeat = 0;
                }
            }
            if plan.is_feasible() {
                let tsc = total_shipping_cost(instance, &plan);
                if tsc < best_tsc {
                    best_tsc = tsc;
                    best = plan.clone();
                }
            }
        }
        trajectory.push(best_tsc);
        if flat(&trajectory, params.window, params.tolerance) {
            break;
        }
    }
    let report = BaselineReport {
        method: "rts".into(),
        tsc: best_tsc,
        seconds: started.elapsed().as_secs_f64(),
        iterations,
        trajectory,
    };
    (best, report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaParams {
    pub penalty: PenaltyConfig,
    /// Starting temperature; `None` calibrates it from sampled moves.
    pub initial_temperature: Option<f64>,
    /// Uphill acceptance probability the calibration aims for.
    pub target_acceptance: f64,
    pub calibration_samples: usize,
    /// Geometric cooling ratio c.
    pub cooling: f64,
    /// Final temperature as a fraction of the initial one.
    pub floor_ratio: f64,
    /// Move triples per temperature; `None` means one per request.
    pub inner_loop: Option<usize>,
    /// Stop once the current TSC stayed within `tolerance` over `window` temperatures.
    pub window: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SaParams {
    fn default() -> Self {
        Self {
            penalty: PenaltyConfig::medium(),
            initial_temperature: None,
            target_acceptance: 0.5,
            calibration_samples: 100,
            cooling: 0.95,
            floor_ratio: 1e-3,
            inner_loop: None,
            window: 10,
            tolerance: 0.02,
            seed: 0,
        }
    }
}

/// Metropolis rule for a cost change `delta` at temperature `t`, given a
/// uniform draw `u` in [0, 1).
pub fn metropolis_accepts(delta: f64, t: f64, u: f64) -> bool {
    delta <= 0.0 || (t > 0.0 && u < (-delta / t).exp())
}

#[derive(Debug, Clone, Copy)]
enum SaMove {
    Intra,
    Inter,
    Exchange,
}

/// A random neighbor of `plan` that keeps every touched route feasible; the
/// exchange takes the cheapest feasible placements of the swapped pair.
fn random_move<R: Rng + ?Sized>(
    kind: SaMove,
    instance: &ProblemInstance,
    plan: &PlanState,
    cfg: &PenaltyConfig,
    rng: &mut R,
) -> Option<Move> {
    let placed = assigned(plan, instance.n_requests());
    let &(j, k) = placed.choose(rng)?;
    match kind {
        SaMove::Intra => {
            let (base, sp0, sd0) = detach(plan.route(k), j);
            let route = feasible_placements(instance, &base, j, Some((sp0, sd0))).choose(rng)?.clone();
            Some(Move::new(instance, plan, cfg, vec![(k, route)], vec![j]))
        }
        SaMove::Inter => {
            if instance.n_crowdsourcees() < 2 {
                return None;
            }
            let mut k2 = rng.gen_range(0..instance.n_crowdsourcees() - 1);
            if k2 >= k {
                k2 += 1;
            }
            let (base, _, _) = detach(plan.route(k), j);
            let route = feasible_placements(instance, plan.route(k2), j, None).choose(rng)?.clone();
            Some(Move::new(instance, plan, cfg, vec![(k, base), (k2, route)], vec![j]))
        }
        SaMove::Exchange => {
            let others: Vec<&(usize, usize)> = placed.iter().filter(|e| e.1 != k).collect();
            let &&(j2, k2) = others.choose(rng)?;
            exchange(instance, plan, cfg, (j, k), (j2, k2), true)
        }
    }
}

fn calibrate<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    plan: &PlanState,
    params: &SaParams,
    rng: &mut R,
) -> f64 {
    let kinds = [SaMove::Intra, SaMove::Inter, SaMove::Exchange];
    let uphill: Vec<f64> = (0..params.calibration_samples)
        .filter_map(|i| random_move(kinds[i % 3], instance, plan, &params.penalty, rng))
        .map(|m| m.delta)
        .filter(|&d| d > 0.0)
        .collect();
    if uphill.is_empty() {
        return 1.0;
    }
    let mean = uphill.iter().sum::<f64>() / uphill.len() as f64;
    -mean / params.target_acceptance.ln()
}

/// Annealing from the simple heuristic's plan; at every temperature the
/// intra-route, inter-route, and 1-exchange moves are tried in that order.
pub fn simulated_annealing(instance: &ProblemInstance, params: &SaParams) -> (PlanState, BaselineReport) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (mut plan, _) = simple_heuristic(instance);
    let cfg = &params.penalty;
    let mut best = plan.clone();
    let mut best_tsc = total_shipping_cost(instance, &plan);
    let mut trajectory = vec![best_tsc];
    let t0 = params.initial_temperature.unwrap_or_else(|| calibrate(instance, &plan, params, &mut rng));
    let floor = t0 * params.floor_ratio;
    let inner = params.inner_loop.unwrap_or(instance.n_requests()).max(1);
    let mut current_curve = vec![penalized_tsc(instance, &plan, cfg)];
    let mut t = t0;
    let mut iterations = 0;
    while t > floor {
        iterations += 1;
        for _ in 0..inner {
            for kind in [SaMove::Intra, SaMove::Inter, SaMove::Exchange] {
                let Some(m) = random_move(kind, instance, &plan, cfg, &mut rng) else { continue };
                if metropolis_accepts(m.delta, t, rng.gen()) {
                    m.apply(instance, &mut plan);
                    if plan.is_feasible() {
                        let tsc = total_shipping_cost(instance, &plan);
                        if tsc < best_tsc {
                            best_tsc = tsc;
                            best = plan.clone();
                        }
                    }
                }
            }
        }
        if repair(instance, &mut plan) > 0 && plan.is_feasible() {
            let tsc = total_shipping_cost(instance, &plan);
            if tsc < best_tsc {
                best_tsc = tsc;
                best = plan.clone();
            }
        }
        trajectory.push(best_tsc);
        current_curve.push(penalized_tsc(instance, &plan, cfg));
        if flat(&current_curve, params.window, params.tolerance) {
            break;
        }
        t *= params.cooling;
    }
    let report = BaselineReport {
        method: "sa".into(),
        tsc: best_tsc,
        seconds: started.elapsed().as_secs_f64(),
        iterations,
        trajectory,
    };
    (best, report)
}
