//! Rule-interposing for neighborhood moves.
//!
//! Two mechanisms keep the search from revisiting the same routes and node
//! sequences:
//!
//! * a priority list of routes per move kind; each route is picked at most
//!   once per list life cycle, and the list is rebuilt over all current
//!   routes once it runs dry;
//! * Tabu tenure over node adjacencies: after a node is moved away from a
//!   neighbor it may not be placed back next to that neighbor, on the same
//!   side, for `tenure` subsequent neighborhood moves, unless doing so beats
//!   the best solution found so far (aspiration).

use serde::{Deserialize, Serialize};

use crate::instance::ProblemInstance;
use crate::plan::{request_metrics, NodeRef, PlanState};

/// The three neighborhood move kinds that rules apply to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    IntraRoute,
    InterRoute,
    OneExchange,
}

impl MoveKind {
    pub const ALL: [MoveKind; 3] = [MoveKind::IntraRoute, MoveKind::InterRoute, MoveKind::OneExchange];

    fn slot(self) -> usize {
        match self {
            MoveKind::IntraRoute => 0,
            MoveKind::InterRoute => 1,
            MoveKind::OneExchange => 2,
        }
    }
}

/// Sort key of route `k` for the given move kind.
///
/// * intra-route: remaining available time τ_k
/// * inter-route: occupation time, last delivery minus first pickup
/// * 1-exchange: largest unused service time b_j among the route's requests
pub fn route_key(kind: MoveKind, instance: &ProblemInstance, plan: &PlanState, k: usize) -> f64 {
    let s = plan.summary(k);
    match kind {
        MoveKind::IntraRoute => s.remaining_time,
        MoveKind::InterRoute => s.occupation,
        MoveKind::OneExchange => plan
            .requests_on(k)
            .into_iter()
            .map(|j| request_metrics(instance, plan, j).unused_service)
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Routes sorted by descending key; ties go to the lower route id.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityList {
    kind: MoveKind,
    entries: Vec<(f64, usize)>,
}

impl PriorityList {
    /// Builds the list over every non-idle route.
    pub fn build(kind: MoveKind, instance: &ProblemInstance, plan: &PlanState) -> Self {
        let mut entries: Vec<(f64, usize)> = plan
            .active_routes()
            .map(|k| (route_key(kind, instance, plan, k), k))
            .collect();
        entries.sort_by(|a, b| order(a, b));
        Self { kind, entries }
    }

    pub fn kind(&self) -> MoveKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn routes(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.1)
    }

    pub fn contains(&self, k: usize) -> bool {
        self.entries.iter().any(|e| e.1 == k)
    }

    pub fn remove(&mut self, k: usize) {
        self.entries.retain(|e| e.1 != k);
    }

    /// Re-keys route `k` if it is still listed, re-inserting it by binary search.
    pub fn update_key(&mut self, k: usize, key: f64) {
        if let Some(i) = self.entries.iter().position(|e| e.1 == k) {
            self.entries.remove(i);
            let entry = (key, k);
            let at = self.entries.partition_point(|e| order(e, &entry).is_lt());
            self.entries.insert(at, entry);
        }
    }

    fn drop_idle(&mut self, plan: &PlanState) {
        self.entries.retain(|e| plan.is_active(e.1));
    }

    /// Head of the list, rebuilding it first if no listed route is still in use.
    /// `None` means there is no non-idle route at all.
    pub fn next_route(&mut self, instance: &ProblemInstance, plan: &PlanState) -> Option<usize> {
        self.drop_idle(plan);
        if self.entries.is_empty() {
            *self = Self::build(self.kind, instance, plan);
        }
        self.entries.first().map(|e| e.1)
    }

    /// The two highest-priority routes, rebuilding when fewer than two remain.
    pub fn next_two(&mut self, instance: &ProblemInstance, plan: &PlanState) -> Option<(usize, usize)> {
        self.drop_idle(plan);
        if self.entries.len() < 2 {
            *self = Self::build(self.kind, instance, plan);
        }
        match self.entries[..] {
            [a, b, ..] => Some((a.1, b.1)),
            _ => None,
        }
    }
}

fn order(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Which side of the neighbor the moved node sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// The moved node sits right before the neighbor.
    Precedes,
    /// The moved node sits right after the neighbor.
    Follows,
}

/// Remaining Tabu tenure per ordered node pair.
///
/// `precede` is 2|J| × 2|J| (row: neighbor, column: moved node); `follow` is
/// (|K| + 2|J|) × 2|J|, its last |K| rows standing for courier origins.
#[derive(Debug, Clone, PartialEq)]
pub struct TabuLedger {
    n_requests: usize,
    n_couriers: usize,
    tenure: u32,
    precede: Vec<u32>,
    follow: Vec<u32>,
}

impl TabuLedger {
    pub fn new(n_requests: usize, n_couriers: usize, tenure: u32) -> Self {
        let cols = 2 * n_requests;
        Self {
            n_requests,
            n_couriers,
            tenure,
            precede: vec![0; cols * cols],
            follow: vec![0; (n_couriers + cols) * cols],
        }
    }

    pub fn tenure(&self) -> u32 {
        self.tenure
    }

    /// (rows, cols) of the precede matrix.
    pub fn precede_shape(&self) -> (usize, usize) {
        (2 * self.n_requests, 2 * self.n_requests)
    }

    /// (rows, cols) of the follow matrix.
    pub fn follow_shape(&self) -> (usize, usize) {
        (self.n_couriers + 2 * self.n_requests, 2 * self.n_requests)
    }

    fn col(node: NodeRef) -> usize {
        match node {
            NodeRef::Pickup(j) => 2 * j,
            NodeRef::Delivery(j) => 2 * j + 1,
            NodeRef::Origin(_) => panic!("origins never move"),
        }
    }

    fn row(&self, node: NodeRef) -> usize {
        match node {
            NodeRef::Origin(k) => 2 * self.n_requests + k,
            other => Self::col(other),
        }
    }

    fn cell(&self, moved: NodeRef, neighbor: NodeRef, relation: Relation) -> Option<usize> {
        let cols = 2 * self.n_requests;
        match relation {
            Relation::Precedes if matches!(neighbor, NodeRef::Origin(_)) => None,
            Relation::Precedes => Some(self.row(neighbor) * cols + Self::col(moved)),
            Relation::Follows => Some(self.row(neighbor) * cols + Self::col(moved)),
        }
    }

    fn matrix(&self, relation: Relation) -> &[u32] {
        match relation {
            Relation::Precedes => &self.precede,
            Relation::Follows => &self.follow,
        }
    }

    /// Remaining tenure forbidding `moved` to sit on `relation` side of `neighbor`.
    pub fn remaining(&self, moved: NodeRef, neighbor: NodeRef, relation: Relation) -> u32 {
        self.cell(moved, neighbor, relation)
            .map_or(0, |i| self.matrix(relation)[i])
    }

    pub fn is_tabu(&self, moved: NodeRef, neighbor: NodeRef, relation: Relation) -> bool {
        self.remaining(moved, neighbor, relation) > 0
    }

    pub fn record_separation(&mut self, moved: NodeRef, former_neighbor: NodeRef, relation: Relation) {
        if let Some(i) = self.cell(moved, former_neighbor, relation) {
            let tenure = self.tenure;
            match relation {
                Relation::Precedes => self.precede[i] = tenure,
                Relation::Follows => self.follow[i] = tenure,
            }
        }
    }

    /// One applied neighborhood move has elapsed.
    pub fn tick(&mut self) {
        for v in self.precede.iter_mut().chain(self.follow.iter_mut()) {
            *v = v.saturating_sub(1);
        }
    }

    pub fn max_entry(&self) -> u32 {
        self.precede.iter().chain(&self.follow).copied().max().unwrap_or(0)
    }

    /// True if any node of `requests` sits in a forbidden spot on `route`.
    pub fn placement_is_tabu(&self, route: &[NodeRef], requests: &[usize]) -> bool {
        route.iter().enumerate().skip(1).any(|(i, &node)| {
            let Some(j) = node.request() else { return false };
            if !requests.contains(&j) {
                return false;
            }
            if self.is_tabu(node, route[i - 1], Relation::Follows) {
                return true;
            }
            route.get(i + 1).is_some_and(|&next| self.is_tabu(node, next, Relation::Precedes))
        })
    }

    /// Records every adjacency the nodes of `requests` lost between `old`
    /// and `new` placements. Routes may differ (inter-route moves).
    pub fn record_move(&mut self, old: &[&[NodeRef]], new: &[&[NodeRef]], requests: &[usize]) {
        for &j in requests {
            for node in [NodeRef::Pickup(j), NodeRef::Delivery(j)] {
                let Some((before, after)) = neighbors(old, node) else { continue };
                let (new_before, new_after) = neighbors(new, node).unwrap_or((None, None));
                if let Some(b) = before {
                    if new_before != Some(b) {
                        self.record_separation(node, b, Relation::Follows);
                    }
                }
                if let Some(a) = after {
                    if new_after != Some(a) {
                        self.record_separation(node, a, Relation::Precedes);
                    }
                }
            }
        }
    }
}

fn neighbors(routes: &[&[NodeRef]], node: NodeRef) -> Option<(Option<NodeRef>, Option<NodeRef>)> {
    routes.iter().find_map(|r| {
        r.iter().position(|&n| n == node).map(|i| {
            let before = i.checked_sub(1).map(|p| r[p]);
            (before, r.get(i + 1).copied())
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleConfig {
    /// Master switch for both priority lists and Tabu tenure.
    pub enabled: bool,
    pub tabu_tenure: u32,
    /// One ledger per move kind instead of one shared ledger.
    #[serde(default)]
    pub per_move_kind: bool,
}

impl RuleConfig {
    pub const fn medium() -> Self {
        Self { enabled: true, tabu_tenure: 3, per_move_kind: false }
    }

    pub const fn large() -> Self {
        Self { enabled: true, tabu_tenure: 12, per_move_kind: false }
    }

    pub const fn disabled() -> Self {
        Self { enabled: false, tabu_tenure: 3, per_move_kind: false }
    }
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self::medium()
    }
}

/// Rule-interposing state carried through one episode or one solve.
#[derive(Debug, Clone)]
pub struct Rules {
    cfg: RuleConfig,
    lists: [Option<PriorityList>; 3],
    ledgers: Vec<TabuLedger>,
    best_tsc: f64,
}

impl Rules {
    pub fn new(cfg: RuleConfig, instance: &ProblemInstance) -> Self {
        let n = if cfg.per_move_kind { 3 } else { 1 };
        let ledger = TabuLedger::new(instance.n_requests(), instance.n_crowdsourcees(), cfg.tabu_tenure);
        Self {
            cfg,
            lists: [None, None, None],
            ledgers: vec![ledger; n],
            best_tsc: f64::INFINITY,
        }
    }

    pub fn config(&self) -> RuleConfig {
        self.cfg
    }

    pub fn enabled(&self) -> bool {
        self.cfg.enabled
    }

    /// The priority list for `kind`, built on first use.
    pub fn list_mut(&mut self, kind: MoveKind, instance: &ProblemInstance, plan: &PlanState) -> &mut PriorityList {
        self.lists[kind.slot()].get_or_insert_with(|| PriorityList::build(kind, instance, plan))
    }

    pub fn list(&self, kind: MoveKind) -> Option<&PriorityList> {
        self.lists[kind.slot()].as_ref()
    }

    pub fn ledger(&self, kind: MoveKind) -> &TabuLedger {
        if self.ledgers.len() == 1 {
            &self.ledgers[0]
        } else {
            &self.ledgers[kind.slot()]
        }
    }

    pub fn ledgers(&self) -> &[TabuLedger] {
        &self.ledgers
    }

    /// Best feasible total shipping cost seen so far (aspiration level).
    pub fn best_tsc(&self) -> f64 {
        self.best_tsc
    }

    pub fn observe_feasible_tsc(&mut self, tsc: f64) {
        self.best_tsc = self.best_tsc.min(tsc);
    }

    /// True if the placement may be used: rules off, no Tabu-ed adjacency, or
    /// aspiration (`candidate_tsc` beats the best feasible solution).
    pub fn admissible(&self, kind: MoveKind, route: &[NodeRef], requests: &[usize], candidate_tsc: Option<f64>) -> bool {
        if !self.cfg.enabled || !self.ledger(kind).placement_is_tabu(route, requests) {
            return true;
        }
        candidate_tsc.is_some_and(|t| t < self.best_tsc - 1e-9)
    }

    /// Advances tenure by one applied move, then records the separations it caused.
    pub fn commit_move(&mut self, kind: MoveKind, old: &[&[NodeRef]], new: &[&[NodeRef]], requests: &[usize]) {
        if !self.cfg.enabled {
            return;
        }
        for l in &mut self.ledgers {
            l.tick();
        }
        let idx = if self.ledgers.len() == 1 { 0 } else { kind.slot() };
        self.ledgers[idx].record_move(old, new, requests);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, Profile};
    use NodeRef::*;

    fn plan_with_three_routes() -> (ProblemInstance, PlanState) {
        let inst = generate_instance(3, 3, 5, &Profile::Medium).unwrap();
        let mut plan = PlanState::initial(&inst);
        for k in 0..3 {
            plan.set_route(&inst, k, vec![Origin(k), Pickup(k), Delivery(k)]).unwrap();
        }
        (inst, plan)
    }

    #[test]
    fn descending_sort_with_id_ties() {
        let mut list = PriorityList { kind: MoveKind::IntraRoute, entries: vec![] };
        for (key, k) in [(10.0, 0), (50.0, 1), (20.0, 2)] {
            list.entries.push((key, k));
        }
        list.entries.sort_by(order);
        assert_eq!(list.routes().collect::<Vec<_>>(), vec![1, 2, 0]);
        list.entries.push((20.0, 5));
        list.entries.push((20.0, 3));
        list.entries.sort_by(order);
        assert_eq!(list.routes().collect::<Vec<_>>(), vec![1, 2, 3, 5, 0]);
    }

    #[test]
    fn intra_list_orders_by_remaining_time() {
        let (inst, plan) = plan_with_three_routes();
        let list = PriorityList::build(MoveKind::IntraRoute, &inst, &plan);
        let keys: Vec<f64> = list.routes().map(|k| plan.summary(k).remaining_time).collect();
        assert!(keys.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(list.len(), 3);
    }

    #[test]
    fn list_life_cycle_rebuilds_when_consumed() {
        let (inst, plan) = plan_with_three_routes();
        let mut list = PriorityList::build(MoveKind::InterRoute, &inst, &plan);
        let order: Vec<usize> = list.routes().collect();
        let mut seen = vec![];
        for _ in 0..3 {
            let k = list.next_route(&inst, &plan).unwrap();
            seen.push(k);
            list.remove(k);
        }
        assert_eq!(seen, order);
        assert!(list.is_empty());
        assert_eq!(list.next_route(&inst, &plan), Some(order[0]));
        assert_eq!(list.len(), 3);
    }

    #[test]
    fn update_key_repositions() {
        let mut list = PriorityList {
            kind: MoveKind::InterRoute,
            entries: vec![(30.0, 0), (20.0, 1), (10.0, 2)],
        };
        list.update_key(2, 25.0);
        assert_eq!(list.routes().collect::<Vec<_>>(), vec![0, 2, 1]);
        list.update_key(0, 1.0);
        assert_eq!(list.routes().collect::<Vec<_>>(), vec![2, 1, 0]);
        list.update_key(7, 100.0);
        assert_eq!(list.len(), 3);
    }

    #[test]
    fn idle_routes_are_skipped() {
        let (inst, mut plan) = plan_with_three_routes();
        let mut list = PriorityList::build(MoveKind::IntraRoute, &inst, &plan);
        let head = list.next_route(&inst, &plan).unwrap();
        plan.set_route(&inst, head, vec![Origin(head)]).unwrap();
        let next = list.next_route(&inst, &plan).unwrap();
        assert_ne!(next, head);
        assert_eq!(list.len(), 2);
    }

    #[test]
    fn fresh_ledger_has_no_tabu_and_exact_shapes() {
        let l = TabuLedger::new(4, 3, 3);
        assert_eq!(l.precede_shape(), (8, 8));
        assert_eq!(l.follow_shape(), (11, 8));
        assert_eq!(l.precede.len(), 64);
        assert_eq!(l.follow.len(), 88);
        assert!(!l.is_tabu(Pickup(0), Delivery(0), Relation::Precedes));
        assert!(!l.is_tabu(Pickup(0), Origin(2), Relation::Follows));
    }

    #[test]
    fn tenure_counts_down() {
        let mut l = TabuLedger::new(2, 1, 3);
        l.record_separation(Pickup(1), Delivery(1), Relation::Precedes);
        assert_eq!(l.remaining(Pickup(1), Delivery(1), Relation::Precedes), 3);
        l.tick();
        assert_eq!(l.remaining(Pickup(1), Delivery(1), Relation::Precedes), 2);
        l.tick();
        l.tick();
        assert_eq!(l.remaining(Pickup(1), Delivery(1), Relation::Precedes), 0);
        assert!(!l.is_tabu(Pickup(1), Delivery(1), Relation::Precedes));
        // relation is directional
        l.record_separation(Pickup(1), Origin(0), Relation::Follows);
        assert!(l.is_tabu(Pickup(1), Origin(0), Relation::Follows));
        assert!(!l.is_tabu(Pickup(1), Pickup(0), Relation::Follows));
    }

    #[test]
    fn separation_is_tabu_for_three_applied_moves() {
        let inst = generate_instance(2, 1, 5, &Profile::Medium).unwrap();
        let mut rules = Rules::new(RuleConfig::medium(), &inst);
        let old = vec![Origin(0), Pickup(0), Delivery(0), Pickup(1), Delivery(1)];
        let new = vec![Origin(0), Pickup(0), Pickup(1), Delivery(0), Delivery(1)];
        rules.commit_move(MoveKind::IntraRoute, &[&old], &[&new], &[1]);
        let ledger = rules.ledger(MoveKind::IntraRoute);
        assert!(ledger.is_tabu(Pickup(1), Delivery(0), Relation::Follows));
        assert!(ledger.is_tabu(Delivery(1), Pickup(1), Relation::Follows));
        assert!(ledger.is_tabu(Pickup(1), Delivery(1), Relation::Precedes));
        assert!(!ledger.is_tabu(Pickup(1), Delivery(0), Relation::Precedes));
        assert!(!rules.admissible(MoveKind::IntraRoute, &old, &[1], None));
        for step in 0..3 {
            assert!(!rules.admissible(MoveKind::IntraRoute, &old, &[1], None), "step {step}");
            let other = [Origin(0)];
            rules.commit_move(MoveKind::InterRoute, &[&other], &[&other], &[]);
        }
        assert!(rules.admissible(MoveKind::IntraRoute, &old, &[1], None));
    }

    #[test]
    fn aspiration_overrides_tabu() {
        let inst = generate_instance(2, 1, 5, &Profile::Medium).unwrap();
        let mut rules = Rules::new(RuleConfig::medium(), &inst);
        rules.observe_feasible_tsc(100.0);
        let old = vec![Origin(0), Pickup(0), Delivery(0), Pickup(1), Delivery(1)];
        let new = vec![Origin(0), Pickup(1), Delivery(1), Pickup(0), Delivery(0)];
        rules.commit_move(MoveKind::IntraRoute, &[&old], &[&new], &[1]);
        assert!(!rules.admissible(MoveKind::IntraRoute, &old, &[1], Some(100.0)));
        assert!(rules.admissible(MoveKind::IntraRoute, &old, &[1], Some(99.0)));
    }

    #[test]
    fn disabled_rules_never_block() {
        let inst = generate_instance(2, 1, 5, &Profile::Medium).unwrap();
        let mut rules = Rules::new(RuleConfig::disabled(), &inst);
        let old = vec![Origin(0), Pickup(0), Delivery(0), Pickup(1), Delivery(1)];
        let new = vec![Origin(0), Pickup(1), Delivery(1), Pickup(0), Delivery(0)];
        rules.commit_move(MoveKind::IntraRoute, &[&old], &[&new], &[1]);
        assert_eq!(rules.ledger(MoveKind::IntraRoute).max_entry(), 0);
        assert!(rules.admissible(MoveKind::IntraRoute, &old, &[1], None));
    }

    #[test]
    fn per_kind_ledgers_share_the_clock() {
        let inst = generate_instance(2, 1, 5, &Profile::Medium).unwrap();
        let cfg = RuleConfig { per_move_kind: true, ..RuleConfig::medium() };
        let mut rules = Rules::new(cfg, &inst);
        assert_eq!(rules.ledgers().len(), 3);
        let old = vec![Origin(0), Pickup(0), Delivery(0), Pickup(1), Delivery(1)];
        let new = vec![Origin(0), Pickup(1), Delivery(1), Pickup(0), Delivery(0)];
        rules.commit_move(MoveKind::IntraRoute, &[&old], &[&new], &[1]);
        assert!(!rules.admissible(MoveKind::IntraRoute, &old, &[1], None));
        assert!(rules.admissible(MoveKind::OneExchange, &old, &[1], None));
        rules.commit_move(MoveKind::OneExchange, &[&new], &[&new], &[]);
        assert_eq!(rules.ledger(MoveKind::IntraRoute).max_entry(), 2);
    }
}
