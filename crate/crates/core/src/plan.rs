//! The evolving solution: one node sequence per crowdsourcee plus the set of
//! requests left to backup vehicles.
//!
//! Row `k` of the information array always starts with `Origin(k)`; a row
//! holding only the origin is an idle crowdsourcee. Schedules are simulated
//! forward from `t_start` with waiting allowed at pickups and zero service
//! time at every node.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::instance::{minutes, Point, ProblemInstance};

/// Slack assigned to requests that already sit on a route.
pub const ASSIGNED_SLACK: f64 = 1.0e6;

/// Tolerance for time comparisons in feasibility checks (minutes).
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("failed to parse plan dump: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRef {
    Origin(usize),
    Pickup(usize),
    Delivery(usize),
}

impl NodeRef {
    pub fn location(self, instance: &ProblemInstance) -> Point {
        match self {
            NodeRef::Origin(k) => instance.crowdsourcees[k].origin,
            NodeRef::Pickup(j) => instance.requests[j].pickup,
            NodeRef::Delivery(j) => instance.requests[j].delivery,
        }
    }

    pub fn request(self) -> Option<usize> {
        match self {
            NodeRef::Origin(_) => None,
            NodeRef::Pickup(j) | NodeRef::Delivery(j) => Some(j),
        }
    }

    pub fn is_pickup(self) -> bool {
        matches!(self, NodeRef::Pickup(_))
    }

    fn parse(token: &str) -> Option<NodeRef> {
        let (head, tail) = token.split_at(token.char_indices().nth(1)?.0);
        let idx: usize = tail.parse().ok()?;
        match head {
            "u" => Some(NodeRef::Origin(idx)),
            "p" => Some(NodeRef::Pickup(idx)),
            "d" => Some(NodeRef::Delivery(idx)),
            _ => None,
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Origin(k) => write!(f, "u{k}"),
            NodeRef::Pickup(j) => write!(f, "p{j}"),
            NodeRef::Delivery(j) => write!(f, "d{j}"),
        }
    }
}

/// Route-level metrics without the per-node detail of [`RouteSchedule`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteSummary {
    /// d_k: last service start minus t_start.
    pub duration: f64,
    /// v_k: summed lateness over deliveries.
    pub delivery_violation: f64,
    /// τ_k: availability minus duration; negative means overtime.
    pub remaining_time: f64,
    /// η_k: pickups after which the load exceeds capacity.
    pub capacity_violations: u32,
    /// χ_k = max(-τ_k, 0).
    pub overtime: f64,
    /// Minutes spent with at least one request on board.
    pub carrying_time: f64,
    /// Last delivery start minus first pickup start (0 for idle routes).
    pub occupation: f64,
}

impl RouteSummary {
    pub fn is_feasible(&self) -> bool {
        self.delivery_violation <= TIME_EPS
            && self.remaining_time >= -TIME_EPS
            && self.capacity_violations == 0
    }
}

/// Full forward simulation of one route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteSchedule {
    pub arrival: Vec<f64>,
    pub service_start: Vec<f64>,
    /// Load on board after serving each node, lbs.
    pub load_after: Vec<f64>,
    pub summary: RouteSummary,
}

/// Simulates `route` (which must start with the courier's origin) and returns
/// only the aggregate metrics. No structural validation; see [`schedule_route`].
pub fn summarize_route(instance: &ProblemInstance, route: &[NodeRef]) -> RouteSummary {
    let k = match route.first() {
        Some(NodeRef::Origin(k)) => *k,
        _ => panic!("route must start with an origin node"),
    };
    let courier = &instance.crowdsourcees[k];
    let mut time = courier.t_start;
    let mut load = 0.0;
    let mut prev = courier.origin;
    let mut violation = 0.0;
    let mut cap_viol = 0u32;
    let mut carrying = 0.0;
    let mut first_pickup: Option<f64> = None;
    let mut last_delivery = courier.t_start;
    for &node in &route[1..] {
        let here = node.location(instance);
        let arrival = time + minutes(prev.distance(&here), courier.speed);
        let start = match node {
            NodeRef::Pickup(j) => {
                let r = &instance.requests[j];
                let start = arrival.max(r.earliest_pickup);
                if load > 0.0 {
                    carrying += start - time;
                }
                load += r.weight;
                if load > courier.capacity + 1e-12 {
                    cap_viol += 1;
                }
                first_pickup.get_or_insert(start);
                start
            }
            NodeRef::Delivery(j) => {
                let r = &instance.requests[j];
                if load > 0.0 {
                    carrying += arrival - time;
                }
                load -= r.weight;
                violation += (arrival - r.latest_delivery).max(0.0);
                last_delivery = arrival;
                arrival
            }
            NodeRef::Origin(_) => panic!("origin node inside a route"),
        };
        time = start;
        prev = here;
    }
    let duration = time - courier.t_start;
    let remaining = courier.available_time() - duration;
    RouteSummary {
        duration,
        delivery_violation: violation,
        remaining_time: remaining,
        capacity_violations: cap_viol,
        overtime: (-remaining).max(0.0),
        carrying_time: carrying,
        occupation: first_pickup.map_or(0.0, |fp| last_delivery - fp),
    }
}

/// Checks the structural shape of a route for courier `k`.
pub fn validate_route(instance: &ProblemInstance, k: usize, route: &[NodeRef]) -> Result<(), PlanError> {
    let bad = |m: String| Err(PlanError::InvalidPlan(m));
    if k >= instance.n_crowdsourcees() {
        return bad(format!("courier {k} out of range"));
    }
    if route.first() != Some(&NodeRef::Origin(k)) {
        return bad(format!("route {k} must begin with u{k}"));
    }
    let n = instance.n_requests();
    if route.len() > 2 * n + 1 {
        return bad(format!("route {k} exceeds the information array width"));
    }
    let mut picked = vec![false; n];
    let mut dropped = vec![false; n];
    for &node in &route[1..] {
        match node {
            NodeRef::Origin(_) => return bad(format!("route {k} contains an origin after position 0")),
            NodeRef::Pickup(j) | NodeRef::Delivery(j) if j >= n => {
                return bad(format!("request {j} out of range"))
            }
            NodeRef::Pickup(j) => {
                if picked[j] {
                    return bad(format!("p{j} appears twice on route {k}"));
                }
                picked[j] = true;
            }
            NodeRef::Delivery(j) => {
                if !picked[j] {
                    return bad(format!("d{j} precedes p{j} on route {k}"));
                }
                if dropped[j] {
                    return bad(format!("d{j} appears twice on route {k}"));
                }
                dropped[j] = true;
            }
        }
    }
    if let Some(j) = (0..n).find(|&j| picked[j] != dropped[j]) {
        return bad(format!("request {j} is picked up but never delivered on route {k}"));
    }
    Ok(())
}

/// Forward simulation with per-node times and loads.
pub fn schedule_route(instance: &ProblemInstance, route: &[NodeRef]) -> Result<RouteSchedule, PlanError> {
    let k = match route.first() {
        Some(NodeRef::Origin(k)) => *k,
        _ => return Err(PlanError::InvalidPlan("route must begin with an origin".into())),
    };
    validate_route(instance, k, route)?;
    let courier = &instance.crowdsourcees[k];
    let mut arrival = vec![courier.t_start];
    let mut service_start = vec![courier.t_start];
    let mut load_after = vec![0.0];
    let mut load = 0.0;
    for w in route.windows(2) {
        let prev_start = *service_start.last().unwrap();
        let arr = prev_start + minutes(w[0].location(instance).distance(&w[1].location(instance)), courier.speed);
        let start = match w[1] {
            NodeRef::Pickup(j) => {
                load += instance.requests[j].weight;
                arr.max(instance.requests[j].earliest_pickup)
            }
            NodeRef::Delivery(j) => {
                load -= instance.requests[j].weight;
                arr
            }
            NodeRef::Origin(_) => unreachable!(),
        };
        arrival.push(arr);
        service_start.push(start);
        load_after.push(load);
    }
    Ok(RouteSchedule {
        arrival,
        service_start,
        load_after,
        summary: summarize_route(instance, route),
    })
}

/// One violated condition of route feasibility.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Condition (1): pickup before the earliest pickup time.
    EarlyPickup { request: usize },
    /// Condition (2): delivery after the latest delivery time.
    LateDelivery { request: usize, minutes: f64 },
    /// Condition (3): route outlasts the courier's availability.
    Overtime { minutes: f64 },
    /// Condition (4): load exceeds capacity right after this pickup.
    Capacity { request: usize },
}

impl Violation {
    /// Which of the four feasibility conditions is violated.
    pub fn condition(&self) -> u8 {
        match self {
            Violation::EarlyPickup { .. } => 1,
            Violation::LateDelivery { .. } => 2,
            Violation::Overtime { .. } => 3,
            Violation::Capacity { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates the four feasibility conditions on a well-formed route.
pub fn is_feasible(instance: &ProblemInstance, route: &[NodeRef]) -> Result<FeasibilityReport, PlanError> {
    let sched = schedule_route(instance, route)?;
    let k = match route[0] {
        NodeRef::Origin(k) => k,
        _ => unreachable!(),
    };
    let courier = &instance.crowdsourcees[k];
    let mut report = FeasibilityReport::default();
    for (i, &node) in route.iter().enumerate().skip(1) {
        match node {
            NodeRef::Pickup(j) => {
                let r = &instance.requests[j];
                if sched.service_start[i] < r.earliest_pickup - TIME_EPS {
                    report.violations.push(Violation::EarlyPickup { request: j });
                }
                if sched.load_after[i] > courier.capacity + 1e-12 {
                    report.violations.push(Violation::Capacity { request: j });
                }
            }
            NodeRef::Delivery(j) => {
                let late = sched.service_start[i] - instance.requests[j].latest_delivery;
                if late > TIME_EPS {
                    report.violations.push(Violation::LateDelivery { request: j, minutes: late });
                }
            }
            NodeRef::Origin(_) => {}
        }
    }
    if sched.summary.remaining_time < -TIME_EPS {
        report.violations.push(Violation::Overtime { minutes: -sched.summary.remaining_time });
    }
    Ok(report)
}

/// Per-request time metrics: slack, unused service time, occupation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestMetrics {
    /// s_j.
    pub slack: f64,
    /// b_j.
    pub unused_service: f64,
    /// o_j.
    pub occupation: f64,
    /// t_{p_j}.
    pub pickup_time: f64,
    /// t_{d_j}.
    pub delivery_time: f64,
}

/// How crowdsourcee pay accrues in the total shipping cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PayBasis {
    /// β^c times the full route duration d_k.
    #[default]
    Duration,
    /// β^c times the minutes spent carrying at least one request.
    Carrying,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    routes: Vec<Vec<NodeRef>>,
    summaries: Vec<RouteSummary>,
    backup: BTreeSet<usize>,
    route_of: Vec<Option<usize>>,
    /// (pickup time, delivery time) of assigned requests.
    times: Vec<(f64, f64)>,
}

impl PlanState {
    /// Every request on backup, every crowdsourcee idle.
    pub fn initial(instance: &ProblemInstance) -> Self {
        let routes: Vec<Vec<NodeRef>> = (0..instance.n_crowdsourcees()).map(|k| vec![NodeRef::Origin(k)]).collect();
        let summaries = routes.iter().map(|r| summarize_route(instance, r)).collect();
        Self {
            routes,
            summaries,
            backup: (0..instance.n_requests()).collect(),
            route_of: vec![None; instance.n_requests()],
            times: vec![(0.0, 0.0); instance.n_requests()],
        }
    }

    pub fn routes(&self) -> &[Vec<NodeRef>] {
        &self.routes
    }

    pub fn route(&self, k: usize) -> &[NodeRef] {
        &self.routes[k]
    }

    pub fn summary(&self, k: usize) -> &RouteSummary {
        &self.summaries[k]
    }

    pub fn summaries(&self) -> &[RouteSummary] {
        &self.summaries
    }

    pub fn backup(&self) -> &BTreeSet<usize> {
        &self.backup
    }

    pub fn route_of(&self, j: usize) -> Option<usize> {
        self.route_of[j]
    }

    pub fn is_assigned(&self, j: usize) -> bool {
        self.route_of[j].is_some()
    }

    /// A route with at least one request on it.
    pub fn is_active(&self, k: usize) -> bool {
        self.routes[k].len() > 1
    }

    pub fn active_routes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.routes.len()).filter(move |&k| self.is_active(k))
    }

    /// Requests on route `k`, ordered by pickup position.
    pub fn requests_on(&self, k: usize) -> Vec<usize> {
        self.routes[k]
            .iter()
            .filter_map(|n| match n {
                NodeRef::Pickup(j) => Some(*j),
                _ => None,
            })
            .collect()
    }

    /// Scheduled (pickup, delivery) times of an assigned request.
    pub fn service_times(&self, j: usize) -> Option<(f64, f64)> {
        self.route_of[j].map(|_| self.times[j])
    }

    pub fn is_feasible(&self) -> bool {
        self.summaries.iter().all(RouteSummary::is_feasible)
    }

    /// Replaces several routes at once. Requests dropped from the updated
    /// routes go back to backup; requests added must not sit on any route
    /// that is not being replaced.
    pub fn set_routes(&mut self, instance: &ProblemInstance, updates: Vec<(usize, Vec<NodeRef>)>) -> Result<(), PlanError> {
        let mut touched = BTreeSet::new();
        for (k, route) in &updates {
            if !touched.insert(*k) {
                return Err(PlanError::InvalidPlan(format!("route {k} updated twice")));
            }
            validate_route(instance, *k, route)?;
        }
        let mut incoming = BTreeSet::new();
        for (_, route) in &updates {
            for node in route.iter().filter(|n| n.is_pickup()) {
                let j = node.request().unwrap();
                if !incoming.insert(j) {
                    return Err(PlanError::InvalidPlan(format!("request {j} placed on two routes")));
                }
                if let Some(owner) = self.route_of[j] {
                    if !touched.contains(&owner) {
                        return Err(PlanError::InvalidPlan(format!(
                            "request {j} already on route {owner}"
                        )));
                    }
                }
            }
        }
        for &k in &touched {
            for j in self.requests_on(k) {
                self.route_of[j] = None;
                self.times[j] = (0.0, 0.0);
                self.backup.insert(j);
            }
        }
        for (k, route) in updates {
            self.routes[k] = route;
            self.refresh(instance, k);
        }
        #[cfg(debug_assertions)]
        self.assert_consistent(instance);
        Ok(())
    }

    /// Convenience wrapper for a single route.
    pub fn set_route(&mut self, instance: &ProblemInstance, k: usize, route: Vec<NodeRef>) -> Result<(), PlanError> {
        self.set_routes(instance, vec![(k, route)])
    }

    fn refresh(&mut self, instance: &ProblemInstance, k: usize) {
        let route = &self.routes[k];
        self.summaries[k] = summarize_route(instance, route);
        if route.len() > 1 {
            let sched = schedule_route(instance, route).expect("validated route");
            for (i, node) in route.iter().enumerate() {
                match *node {
                    NodeRef::Pickup(j) => {
                        self.route_of[j] = Some(k);
                        self.backup.remove(&j);
                        self.times[j].0 = sched.service_start[i];
                    }
                    NodeRef::Delivery(j) => self.times[j].1 = sched.service_start[i],
                    NodeRef::Origin(_) => {}
                }
            }
        }
    }

    /// Shadow recomputation of every cache from scratch.
    pub fn assert_consistent(&self, instance: &ProblemInstance) {
        let mut seen = vec![0u8; instance.n_requests()];
        for (k, route) in self.routes.iter().enumerate() {
            validate_route(instance, k, route).expect("route shape");
            assert_eq!(self.summaries[k], summarize_route(instance, route), "stale summary on route {k}");
            let sched = schedule_route(instance, route).unwrap();
            for (i, node) in route.iter().enumerate() {
                match *node {
                    NodeRef::Pickup(j) => {
                        seen[j] += 1;
                        assert_eq!(self.route_of[j], Some(k));
                        assert_eq!(self.times[j].0, sched.service_start[i]);
                    }
                    NodeRef::Delivery(j) => assert_eq!(self.times[j].1, sched.service_start[i]),
                    NodeRef::Origin(_) => {}
                }
            }
        }
        for j in 0..instance.n_requests() {
            let on_backup = self.backup.contains(&j);
            assert!(
                (seen[j] == 1) ^ on_backup,
                "request {j} must be on exactly one route or on backup"
            );
            assert_eq!(self.route_of[j].is_none(), on_backup);
        }
    }

    /// Hash of the routing structure, for repetition detection.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.routes.hash(&mut h);
        self.backup.hash(&mut h);
        h.finish()
    }

    /// One line per route of node tokens, then a `backup:` line of request ids.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        for route in &self.routes {
            let tokens: Vec<String> = route.iter().map(ToString::to_string).collect();
            out.push_str(&tokens.join(" "));
            out.push('\n');
        }
        let ids: Vec<String> = self.backup.iter().map(ToString::to_string).collect();
        out.push_str("backup:");
        for id in ids {
            out.push(' ');
            out.push_str(&id);
        }
        out.push('\n');
        out
    }

    /// Parses the format written by [`PlanState::to_dump`].
    pub fn from_dump(instance: &ProblemInstance, text: &str) -> Result<Self, PlanError> {
        let mut plan = PlanState::initial(instance);
        let mut updates = Vec::new();
        let mut backup_line = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix("backup:") {
                backup_line = Some(rest.trim().to_string());
                continue;
            }
            let nodes = line
                .split_whitespace()
                .map(|t| NodeRef::parse(t).ok_or_else(|| PlanError::Parse(format!("bad token {t:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let k = match nodes.first() {
                Some(NodeRef::Origin(k)) => *k,
                _ => return Err(PlanError::Parse(format!("route line must start with u<k>: {line:?}"))),
            };
            if k >= instance.n_crowdsourcees() {
                return Err(PlanError::Parse(format!("courier {k} out of range")));
            }
            updates.push((k, nodes));
        }
        let backup_line = backup_line.ok_or_else(|| PlanError::Parse("missing backup: line".into()))?;
        plan.set_routes(instance, updates)?;
        let listed: BTreeSet<usize> = backup_line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| PlanError::Parse(format!("bad backup id {t:?}"))))
            .collect::<Result<_, _>>()?;
        if listed != plan.backup {
            return Err(PlanError::Parse("backup line disagrees with the routes".into()));
        }
        Ok(plan)
    }
}

/// s_j, b_j, o_j, t_{p_j}, t_{d_j} for request `j`.
pub fn request_metrics(instance: &ProblemInstance, plan: &PlanState, j: usize) -> RequestMetrics {
    let r = &instance.requests[j];
    match plan.service_times(j) {
        Some((tp, td)) => RequestMetrics {
            slack: ASSIGNED_SLACK,
            unused_service: r.latest_delivery - td,
            occupation: td - tp,
            pickup_time: tp,
            delivery_time: td,
        },
        None => {
            let tp = r.earliest_pickup + instance.backup_to_pickup(j);
            let td = tp + instance.backup_direct(j);
            RequestMetrics {
                slack: (r.latest_delivery - r.earliest_pickup) - instance.crowd_direct(j),
                unused_service: r.latest_delivery - td,
                occupation: instance.backup_direct(j),
                pickup_time: tp,
                delivery_time: td,
            }
        }
    }
}

/// Crowdsourcee pay over all routes plus one depot round trip per backup request.
pub fn total_shipping_cost(instance: &ProblemInstance, plan: &PlanState) -> f64 {
    total_shipping_cost_with(instance, plan, PayBasis::Duration)
}

pub fn total_shipping_cost_with(instance: &ProblemInstance, plan: &PlanState, pay: PayBasis) -> f64 {
    let crowd: f64 = plan
        .summaries
        .iter()
        .map(|s| match pay {
            PayBasis::Duration => s.duration,
            PayBasis::Carrying => s.carrying_time,
        })
        .sum();
    let backup: f64 = plan.backup.iter().map(|&j| instance.backup_round_trip(j)).sum();
    instance.beta_c * crowd + instance.beta_b * backup
}
