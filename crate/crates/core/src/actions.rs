//! The five action types and the heuristics that pick a concrete move for
//! each, plus unguided random counterparts used for ablation.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::instance::ProblemInstance;
use crate::plan::{request_metrics, summarize_route, total_shipping_cost, NodeRef, PlanState, RouteSummary};
use crate::reward::{insertion_reward, move_reward, penalized_route_cost, route_penalty, PenaltyConfig};
use crate::rules::{route_key, MoveKind, RuleConfig, Rules};

/// Strict-improvement margin for intra-route acceptance, minutes.
const IMPROVEMENT_EPS: f64 = 1e-9;

/// Action types in network output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionType {
    Insertion = 0,
    IntraRoute = 1,
    InterRoute = 2,
    OneExchange = 3,
    DoNothing = 4,
}

impl ActionType {
    pub const ALL: [ActionType; 5] = [
        ActionType::Insertion,
        ActionType::IntraRoute,
        ActionType::InterRoute,
        ActionType::OneExchange,
        ActionType::DoNothing,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionType::Insertion => "insertion",
            ActionType::IntraRoute => "intra_route",
            ActionType::InterRoute => "inter_route",
            ActionType::OneExchange => "one_exchange",
            ActionType::DoNothing => "do_nothing",
        }
    }
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a concrete move is picked once the action type is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActionMode {
    #[default]
    Guided,
    Random,
}

/// What one action did to the plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    pub action: ActionType,
    pub applied: bool,
    /// Ψ_t: routes whose sequence changed.
    pub mutated_routes: Vec<usize>,
    /// Requests whose nodes moved.
    pub requests: Vec<usize>,
    /// Penalized routing cost of Ψ_t before the action.
    pub cost_before: f64,
    /// Penalized routing cost of Ψ_t after the action.
    pub cost_after: f64,
    /// Penalty part of `cost_after`.
    pub penalty_after: f64,
    pub reward: f64,
}

impl ActionOutcome {
    pub fn unapplied(action: ActionType) -> Self {
        Self {
            action,
            applied: false,
            mutated_routes: Vec::new(),
            requests: Vec::new(),
            cost_before: 0.0,
            cost_after: 0.0,
            penalty_after: 0.0,
            reward: 0.0,
        }
    }
}

impl fmt::Display for ActionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.action)?;
        if !self.applied {
            return write!(f, " skipped");
        }
        let reqs: Vec<String> = self.requests.iter().map(|j| format!("r{j}")).collect();
        let routes: Vec<String> = self.mutated_routes.iter().map(|k| format!("u{k}")).collect();
        write!(
            f,
            " [{}] on [{}] cost {:.4} -> {:.4} reward {:.4}",
            reqs.join(" "),
            routes.join(" "),
            self.cost_before,
            self.cost_after,
            self.reward
        )
    }
}

/// Mutable search state that actions consult besides the plan itself.
#[derive(Debug, Clone)]
pub struct ActionContext {
    pub rules: Rules,
    pub penalty: PenaltyConfig,
}

impl ActionContext {
    /// Fresh context for `plan`; its cost seeds the aspiration level when feasible.
    pub fn new(instance: &ProblemInstance, plan: &PlanState, rules: RuleConfig, penalty: PenaltyConfig) -> Self {
        let mut rules = Rules::new(rules, instance);
        if plan.is_feasible() {
            rules.observe_feasible_tsc(total_shipping_cost(instance, plan));
        }
        Self { rules, penalty }
    }
}

/// Executes one action of type `action` and updates the aspiration level.
pub fn apply_action<R: Rng + ?Sized>(
    action: ActionType,
    mode: ActionMode,
    instance: &ProblemInstance,
    plan: &mut PlanState,
    ctx: &mut ActionContext,
    rng: &mut R,
) -> ActionOutcome {
    let outcome = match (mode, action) {
        (_, ActionType::DoNothing) => apply_do_nothing(plan),
        (ActionMode::Guided, ActionType::Insertion) => apply_insertion(instance, plan, ctx),
        (ActionMode::Guided, ActionType::IntraRoute) => apply_intra_route(instance, plan, ctx),
        (ActionMode::Guided, ActionType::InterRoute) => apply_inter_route(instance, plan, ctx),
        (ActionMode::Guided, ActionType::OneExchange) => apply_one_exchange(instance, plan, ctx),
        (ActionMode::Random, a) => apply_random_variant(a, instance, plan, ctx, rng),
    };
    if outcome.applied && plan.is_feasible() {
        ctx.rules.observe_feasible_tsc(total_shipping_cost(instance, plan));
    }
    outcome
}

pub fn apply_do_nothing(_plan: &PlanState) -> ActionOutcome {
    ActionOutcome { applied: true, ..ActionOutcome::unapplied(ActionType::DoNothing) }
}

/// `route` without the two nodes of request `j`, plus the slots they held.
///
/// Slot `s` of a base route means "insert before `base[s]`" (or at the end
/// when `s == base.len()`).
pub fn detach(route: &[NodeRef], j: usize) -> (Vec<NodeRef>, usize, usize) {
    let pos_p = route.iter().position(|&n| n == NodeRef::Pickup(j)).expect("pickup on route");
    let pos_d = route.iter().position(|&n| n == NodeRef::Delivery(j)).expect("delivery on route");
    let base = route.iter().copied().filter(|n| n.request() != Some(j)).collect();
    (base, pos_p, pos_d - 1)
}

/// Places request `j` into `base` with pickup at slot `sp` and delivery at slot `sd >= sp`.
pub fn attach(base: &[NodeRef], j: usize, sp: usize, sd: usize) -> Vec<NodeRef> {
    debug_assert!(1 <= sp && sp <= sd && sd <= base.len());
    let mut out = Vec::with_capacity(base.len() + 2);
    out.extend_from_slice(&base[..sp]);
    out.push(NodeRef::Pickup(j));
    out.extend_from_slice(&base[sp..sd]);
    out.push(NodeRef::Delivery(j));
    out.extend_from_slice(&base[sd..]);
    out
}

/// Placements that move the pickup and/or delivery of a request to earlier
/// slots: pickup one place earlier at a time, and for each pickup slot the
/// delivery from its initial slot down to right after the pickup. The
/// original placement itself is excluded.
pub fn earlier_slots(sp0: usize, sd0: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..=sp0)
        .rev()
        .flat_map(move |sp| (sp..=sd0).rev().map(move |sd| (sp, sd)))
        .filter(move |&s| s != (sp0, sd0))
}

pub(crate) fn nearest_couriers(instance: &ProblemInstance, plan: &PlanState, j: usize, exclude: Option<usize>) -> Vec<usize> {
    let pickup = instance.requests[j].pickup;
    let mut ks: Vec<(f64, usize)> = (0..instance.n_crowdsourcees())
        .filter(|&k| Some(k) != exclude)
        .map(|k| {
            let end = plan.route(k).last().expect("origin").location(instance);
            (pickup.distance(&end), k)
        })
        .collect();
    ks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ks.into_iter().map(|e| e.1).collect()
}

pub(crate) fn with_appended(route: &[NodeRef], j: usize) -> Vec<NodeRef> {
    let mut r = route.to_vec();
    r.push(NodeRef::Pickup(j));
    r.push(NodeRef::Delivery(j));
    r
}

/// Min-duration feasible placement of `j` among the appended placement and
/// every earlier one; `admissible` filters candidates (Tabu).
fn reposition_feasible(
    instance: &ProblemInstance,
    base: &[NodeRef],
    j: usize,
    admissible: impl Fn(&[NodeRef], &RouteSummary) -> bool,
) -> Option<(Vec<NodeRef>, RouteSummary)> {
    let end = base.len();
    let mut best: Option<(Vec<NodeRef>, RouteSummary)> = None;
    for (sp, sd) in std::iter::once((end, end)).chain(earlier_slots(end, end)) {
        let cand = attach(base, j, sp, sd);
        let s = summarize_route(instance, &cand);
        if !s.is_feasible() || best.as_ref().is_some_and(|b| s.duration >= b.1.duration) {
            continue;
        }
        if admissible(&cand, &s) {
            best = Some((cand, s));
        }
    }
    best
}

/// Min penalized-cost placement of `j` over all placements, feasibility not required.
fn reposition_penalized(
    instance: &ProblemInstance,
    base: &[NodeRef],
    j: usize,
    cfg: &PenaltyConfig,
    admissible: impl Fn(&[NodeRef]) -> bool,
) -> Option<(Vec<NodeRef>, RouteSummary)> {
    let end = base.len();
    let mut best: Option<(Vec<NodeRef>, f64, RouteSummary)> = None;
    for (sp, sd) in std::iter::once((end, end)).chain(earlier_slots(end, end)) {
        let cand = attach(base, j, sp, sd);
        let s = summarize_route(instance, &cand);
        let c = penalized_route_cost(instance, &s, cfg);
        if best.as_ref().is_some_and(|b| c >= b.1) {
            continue;
        }
        if admissible(&cand) {
            best = Some((cand, c, s));
        }
    }
    best.map(|(r, _, s)| (r, s))
}

fn sum_cost(instance: &ProblemInstance, xs: &[RouteSummary], cfg: &PenaltyConfig) -> (f64, f64) {
    let cost = xs.iter().map(|s| penalized_route_cost(instance, s, cfg)).sum();
    let pen = xs.iter().map(|s| route_penalty(instance, s, cfg)).sum();
    (cost, pen)
}

/// Replaces the given routes and reports the change as a neighborhood move.
fn commit_move(
    action: ActionType,
    instance: &ProblemInstance,
    plan: &mut PlanState,
    cfg: &PenaltyConfig,
    updates: Vec<(usize, Vec<NodeRef>)>,
    requests: Vec<usize>,
) -> ActionOutcome {
    let routes: Vec<usize> = updates.iter().map(|u| u.0).collect();
    let before: Vec<RouteSummary> = routes.iter().map(|&k| *plan.summary(k)).collect();
    plan.set_routes(instance, updates).expect("moves keep routes well formed");
    let after: Vec<RouteSummary> = routes.iter().map(|&k| *plan.summary(k)).collect();
    let (cost_before, _) = sum_cost(instance, &before, cfg);
    let (cost_after, penalty_after) = sum_cost(instance, &after, cfg);
    ActionOutcome {
        action,
        applied: true,
        mutated_routes: routes,
        requests,
        cost_before,
        cost_after,
        penalty_after,
        reward: move_reward(instance, &before, &after, cfg),
    }
}

fn commit_insertion(
    instance: &ProblemInstance,
    plan: &mut PlanState,
    cfg: &PenaltyConfig,
    k: usize,
    j: usize,
    route: Vec<NodeRef>,
) -> ActionOutcome {
    let d_before = plan.summary(k).duration;
    let (cost_before, _) = sum_cost(instance, &[*plan.summary(k)], cfg);
    plan.set_route(instance, k, route).expect("insertion keeps routes well formed");
    let s = *plan.summary(k);
    let (cost_after, penalty_after) = sum_cost(instance, &[s], cfg);
    ActionOutcome {
        action: ActionType::Insertion,
        applied: true,
        mutated_routes: vec![k],
        requests: vec![j],
        cost_before,
        cost_after,
        penalty_after,
        reward: insertion_reward(instance, d_before, s.duration, j),
    }
}

/// Unassigned requests by ascending slack, ties to the lower id.
pub(crate) fn requests_by_slack(instance: &ProblemInstance, plan: &PlanState) -> Vec<usize> {
    let mut reqs: Vec<(f64, usize)> = plan
        .backup()
        .iter()
        .map(|&j| (request_metrics(instance, plan, j).slack, j))
        .collect();
    reqs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    reqs.into_iter().map(|e| e.1).collect()
}

/// Smallest-slack request to the nearest courier that can take it feasibly,
/// then the best earlier placement on that route.
pub fn apply_insertion(instance: &ProblemInstance, plan: &mut PlanState, ctx: &mut ActionContext) -> ActionOutcome {
    for j in requests_by_slack(instance, plan) {
        for k in nearest_couriers(instance, plan, j, None) {
            let appended = with_appended(plan.route(k), j);
            if !summarize_route(instance, &appended).is_feasible() {
                continue;
            }
            let route = if plan.is_active(k) {
                reposition_feasible(instance, plan.route(k), j, |_, _| true)
                    .expect("appended placement is feasible")
                    .0
            } else {
                appended
            };
            return commit_insertion(instance, plan, &ctx.penalty, k, j, route);
        }
    }
    ActionOutcome::unapplied(ActionType::Insertion)
}

/// Route for a neighborhood move: head of the priority list (consumed) with
/// rules on, otherwise the route with the largest key.
fn select_route(kind: MoveKind, instance: &ProblemInstance, plan: &PlanState, rules: &mut Rules) -> Option<usize> {
    if rules.enabled() {
        let list = rules.list_mut(kind, instance, plan);
        let k = list.next_route(instance, plan)?;
        list.remove(k);
        Some(k)
    } else {
        plan.active_routes()
            .map(|k| (route_key(kind, instance, plan, k), k))
            .min_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)))
            .map(|e| e.1)
    }
}

/// Candidate maximizing `metric`, ties to the lower id.
fn argmax_request(candidates: impl Iterator<Item = usize>, metric: impl Fn(usize) -> f64) -> Option<usize> {
    candidates
        .map(|j| (metric(j), j))
        .min_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)))
        .map(|e| e.1)
}

fn assigned_requests(instance: &ProblemInstance, plan: &PlanState) -> Vec<usize> {
    (0..instance.n_requests()).filter(|&j| plan.is_assigned(j)).collect()
}

/// Cost of the plan if route `k` had duration `d_new` instead of its current one.
fn tsc_with(instance: &ProblemInstance, tsc: f64, changes: &[(f64, f64)]) -> f64 {
    tsc + instance.beta_c * changes.iter().map(|(old, new)| new - old).sum::<f64>()
}

/// Best earlier relocation of one request on the selected route; applied only
/// if it strictly shortens the route.
pub fn apply_intra_route(instance: &ProblemInstance, plan: &mut PlanState, ctx: &mut ActionContext) -> ActionOutcome {
    let kind = MoveKind::IntraRoute;
    let Some(k) = select_route(kind, instance, plan, &mut ctx.rules) else {
        return ActionOutcome::unapplied(ActionType::IntraRoute);
    };
    let route = plan.route(k).to_vec();
    let original = plan.summary(k).duration;
    let tsc = total_shipping_cost(instance, plan);
    let mut best: Option<(Vec<NodeRef>, f64, usize)> = None;
    for j in plan.requests_on(k) {
        let (base, sp0, sd0) = detach(&route, j);
        for (sp, sd) in earlier_slots(sp0, sd0) {
            let cand = attach(&base, j, sp, sd);
            let s = summarize_route(instance, &cand);
            if !s.is_feasible() || best.as_ref().is_some_and(|b| s.duration >= b.1) {
                continue;
            }
            let aspired = tsc_with(instance, tsc, &[(original, s.duration)]);
            if ctx.rules.admissible(kind, &cand, &[j], Some(aspired)) {
                best = Some((cand, s.duration, j));
            }
        }
    }
    match best {
        Some((cand, d, j)) if d < original - IMPROVEMENT_EPS => {
            ctx.rules.commit_move(kind, &[&route], &[&cand], &[j]);
            commit_move(ActionType::IntraRoute, instance, plan, &ctx.penalty, vec![(k, cand)], vec![j])
        }
        _ => ActionOutcome::unapplied(ActionType::IntraRoute),
    }
}

/// Source route and request for an inter-route move.
fn inter_source(instance: &ProblemInstance, plan: &PlanState, rules: &mut Rules) -> Option<(usize, usize)> {
    let occupation = |j| request_metrics(instance, plan, j).occupation;
    if rules.enabled() {
        let k = select_route(MoveKind::InterRoute, instance, plan, rules)?;
        argmax_request(plan.requests_on(k).into_iter(), occupation).map(|j| (k, j))
    } else {
        let j = argmax_request(assigned_requests(instance, plan).into_iter(), occupation)?;
        Some((plan.route_of(j).unwrap(), j))
    }
}

/// Moves the largest-occupation request to the nearest other courier that
/// can take it feasibly, then to its best earlier placement there.
pub fn apply_inter_route(instance: &ProblemInstance, plan: &mut PlanState, ctx: &mut ActionContext) -> ActionOutcome {
    let kind = MoveKind::InterRoute;
    let Some((src, j)) = inter_source(instance, plan, &mut ctx.rules) else {
        return ActionOutcome::unapplied(ActionType::InterRoute);
    };
    let src_route = plan.route(src).to_vec();
    let (src_after, _, _) = detach(&src_route, j);
    let src_change = (plan.summary(src).duration, summarize_route(instance, &src_after).duration);
    let tsc = total_shipping_cost(instance, plan);
    for k in nearest_couriers(instance, plan, j, Some(src)) {
        let dest = plan.route(k).to_vec();
        if !summarize_route(instance, &with_appended(&dest, j)).is_feasible() {
            continue;
        }
        let d_old = plan.summary(k).duration;
        let rules = &ctx.rules;
        let admissible = |cand: &[NodeRef], s: &RouteSummary| {
            let aspired = tsc_with(instance, tsc, &[src_change, (d_old, s.duration)]);
            rules.admissible(kind, cand, &[j], Some(aspired))
        };
        let chosen = if plan.is_active(k) {
            reposition_feasible(instance, &dest, j, admissible)
        } else {
            let cand = with_appended(&dest, j);
            let s = summarize_route(instance, &cand);
            admissible(&cand, &s).then_some((cand, s))
        };
        let Some((cand, _)) = chosen else { continue };
        ctx.rules.commit_move(kind, &[&src_route, &dest], &[&src_after, &cand], &[j]);
        let outcome = commit_move(
            ActionType::InterRoute,
            instance,
            plan,
            &ctx.penalty,
            vec![(src, src_after), (k, cand)],
            vec![j],
        );
        if ctx.rules.enabled() {
            let key = route_key(kind, instance, plan, k);
            ctx.rules.list_mut(kind, instance, plan).update_key(k, key);
        }
        return outcome;
    }
    ActionOutcome::unapplied(ActionType::InterRoute)
}

/// The two (route, request) pairs swapped by a 1-exchange.
fn exchange_pairs(instance: &ProblemInstance, plan: &PlanState, rules: &mut Rules) -> Option<[(usize, usize); 2]> {
    let unused = |j| request_metrics(instance, plan, j).unused_service;
    if rules.enabled() {
        let list = rules.list_mut(MoveKind::OneExchange, instance, plan);
        let (a, b) = list.next_two(instance, plan)?;
        list.remove(a);
        list.remove(b);
        let ja = argmax_request(plan.requests_on(a).into_iter(), unused)?;
        let jb = argmax_request(plan.requests_on(b).into_iter(), unused)?;
        Some([(a, ja), (b, jb)])
    } else {
        let assigned = assigned_requests(instance, plan);
        let ja = argmax_request(assigned.iter().copied(), unused)?;
        let a = plan.route_of(ja).unwrap();
        let jb = argmax_request(assigned.iter().copied().filter(|&j| plan.route_of(j) != Some(a)), unused)?;
        Some([(a, ja), (plan.route_of(jb).unwrap(), jb)])
    }
}

/// Swaps the largest-unused-service requests of two routes, each appended to
/// the other route and then placed at its cheapest penalized position.
pub fn apply_one_exchange(instance: &ProblemInstance, plan: &mut PlanState, ctx: &mut ActionContext) -> ActionOutcome {
    let kind = MoveKind::OneExchange;
    let Some([(a, ja), (b, jb)]) = exchange_pairs(instance, plan, &mut ctx.rules) else {
        return ActionOutcome::unapplied(ActionType::OneExchange);
    };
    let old_a = plan.route(a).to_vec();
    let old_b = plan.route(b).to_vec();
    let base_a = detach(&old_a, ja).0;
    let base_b = detach(&old_b, jb).0;
    let cfg = ctx.penalty;
    let rules = &ctx.rules;
    let pick = |base: &[NodeRef], j: usize, filtered: bool| {
        reposition_penalized(instance, base, j, &cfg, |cand| !filtered || rules.admissible(kind, cand, &[j], None))
    };
    let free = pick(&base_a, jb, false).zip(pick(&base_b, ja, false));
    let tabu_free = pick(&base_a, jb, true).zip(pick(&base_b, ja, true));
    let aspiration = free.as_ref().filter(|((_, sa), (_, sb))| {
        sa.is_feasible() && sb.is_feasible() && plan.summaries().iter().enumerate().all(|(k, s)| k == a || k == b || s.is_feasible()) && {
            let tsc = total_shipping_cost(instance, plan);
            let new = tsc_with(
                instance,
                tsc,
                &[(plan.summary(a).duration, sa.duration), (plan.summary(b).duration, sb.duration)],
            );
            new < rules.best_tsc() - IMPROVEMENT_EPS
        }
    });
    let chosen = if aspiration.is_some() { free } else { tabu_free };
    let Some(((new_a, _), (new_b, _))) = chosen else {
        return ActionOutcome::unapplied(ActionType::OneExchange);
    };
    ctx.rules.commit_move(kind, &[&old_a, &old_b], &[&new_a, &new_b], &[ja, jb]);
    commit_move(ActionType::OneExchange, instance, plan, &cfg, vec![(a, new_a), (b, new_b)], vec![ja, jb])
}

/// Unguided counterpart of an action type: random requests and routes where
/// the guided version uses heuristics, no Tabu tenure.
pub fn apply_random_variant<R: Rng + ?Sized>(
    action: ActionType,
    instance: &ProblemInstance,
    plan: &mut PlanState,
    ctx: &mut ActionContext,
    rng: &mut R,
) -> ActionOutcome {
    match action {
        ActionType::Insertion => random_insertion(instance, plan, ctx, rng),
        ActionType::IntraRoute => random_intra(instance, plan, ctx, rng),
        ActionType::InterRoute => random_inter(instance, plan, ctx, rng),
        ActionType::OneExchange => random_exchange(instance, plan, ctx, rng),
        ActionType::DoNothing => apply_do_nothing(plan),
    }
}

fn shuffled<R: Rng + ?Sized>(mut xs: Vec<usize>, rng: &mut R) -> Vec<usize> {
    xs.shuffle(rng);
    xs
}

fn random_insertion<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    plan: &mut PlanState,
    ctx: &mut ActionContext,
    rng: &mut R,
) -> ActionOutcome {
    let unassigned: Vec<usize> = plan.backup().iter().copied().collect();
    let Some(&j) = unassigned.choose(rng) else {
        return ActionOutcome::unapplied(ActionType::Insertion);
    };
    for k in shuffled((0..instance.n_crowdsourcees()).collect(), rng) {
        let cand = with_appended(plan.route(k), j);
        if summarize_route(instance, &cand).is_feasible() {
            return commit_insertion(instance, plan, &ctx.penalty, k, j, cand);
        }
    }
    ActionOutcome::unapplied(ActionType::Insertion)
}

fn random_intra<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    plan: &mut PlanState,
    ctx: &mut ActionContext,
    rng: &mut R,
) -> ActionOutcome {
    let Some(k) = select_route(MoveKind::IntraRoute, instance, plan, &mut ctx.rules) else {
        return ActionOutcome::unapplied(ActionType::IntraRoute);
    };
    let route = plan.route(k).to_vec();
    let original = plan.summary(k).duration;
    for j in shuffled(plan.requests_on(k), rng) {
        let (base, sp0, sd0) = detach(&route, j);
        let mut best: Option<(Vec<NodeRef>, f64)> = None;
        for sp in 1..=base.len() {
            for sd in sp..=base.len() {
                if (sp, sd) == (sp0, sd0) {
                    continue;
                }
                let cand = attach(&base, j, sp, sd);
                let s = summarize_route(instance, &cand);
                if s.is_feasible() && s.duration < original - IMPROVEMENT_EPS && best.as_ref().is_none_or(|b| s.duration < b.1) {
                    best = Some((cand, s.duration));
                }
            }
        }
        if let Some((cand, _)) = best {
            return commit_move(ActionType::IntraRoute, instance, plan, &ctx.penalty, vec![(k, cand)], vec![j]);
        }
    }
    ActionOutcome::unapplied(ActionType::IntraRoute)
}

fn random_inter<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    plan: &mut PlanState,
    ctx: &mut ActionContext,
    rng: &mut R,
) -> ActionOutcome {
    let Some(src) = select_route(MoveKind::InterRoute, instance, plan, &mut ctx.rules) else {
        return ActionOutcome::unapplied(ActionType::InterRoute);
    };
    let Some(&j) = plan.requests_on(src).choose(rng) else {
        return ActionOutcome::unapplied(ActionType::InterRoute);
    };
    let src_after = detach(plan.route(src), j).0;
    let others = (0..instance.n_crowdsourcees()).filter(|&k| k != src).collect();
    for k in shuffled(others, rng) {
        let cand = with_appended(plan.route(k), j);
        if summarize_route(instance, &cand).is_feasible() {
            return commit_move(
                ActionType::InterRoute,
                instance,
                plan,
                &ctx.penalty,
                vec![(src, src_after), (k, cand)],
                vec![j],
            );
        }
    }
    ActionOutcome::unapplied(ActionType::InterRoute)
}

fn random_exchange<R: Rng + ?Sized>(
    instance: &ProblemInstance,
    plan: &mut PlanState,
    ctx: &mut ActionContext,
    rng: &mut R,
) -> ActionOutcome {
    let kind = MoveKind::OneExchange;
    let pair = if ctx.rules.enabled() {
        let list = ctx.rules.list_mut(kind, instance, plan);
        let pair = list.next_two(instance, plan);
        if let Some((a, b)) = pair {
            list.remove(a);
            list.remove(b);
        }
        pair
    } else {
        let mut ranked: Vec<(f64, usize)> =
            plan.active_routes().map(|k| (route_key(kind, instance, plan, k), k)).collect();
        ranked.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        match ranked[..] {
            [x, y, ..] => Some((x.1, y.1)),
            _ => None,
        }
    };
    let Some((a, b)) = pair else {
        return ActionOutcome::unapplied(ActionType::OneExchange);
    };
    let ja = *plan.requests_on(a).choose(rng).expect("active route");
    let jb = *plan.requests_on(b).choose(rng).expect("active route");
    let swap = |route: &[NodeRef], from: usize, to: usize| -> Vec<NodeRef> {
        route
            .iter()
            .map(|&n| match n {
                NodeRef::Pickup(j) if j == from => NodeRef::Pickup(to),
                NodeRef::Delivery(j) if j == from => NodeRef::Delivery(to),
                other => other,
            })
            .collect()
    };
    let new_a = swap(plan.route(a), ja, jb);
    let new_b = swap(plan.route(b), jb, ja);
    commit_move(ActionType::OneExchange, instance, plan, &ctx.penalty, vec![(a, new_a), (b, new_b)], vec![ja, jb])
}
