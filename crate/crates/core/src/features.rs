//! Fixed-length numeric encoding of a plan for the Q-network.
//!
//! Per request (11 values): pickup x/y, delivery x/y, node after the pickup
//! x/y, node before the delivery x/y, slack, unused service time, occupation
//! time. Per crowdsourcee (8 values): origin x/y, first visited node x/y,
//! duration, lateness, remaining time, capacity violations.

use crate::instance::{Point, ProblemInstance};
use crate::plan::{request_metrics, NodeRef, PlanState};

/// Time normalization constant, minutes.
pub const HORIZON: f64 = 240.0;
/// Normalized times are clipped to `[-TIME_CLIP, TIME_CLIP]`.
pub const TIME_CLIP: f64 = 2.0;

pub const PER_REQUEST: usize = 11;
pub const PER_CROWDSOURCEE: usize = 8;

pub fn feature_len(n_requests: usize, n_crowdsourcees: usize) -> usize {
    PER_REQUEST * n_requests + PER_CROWDSOURCEE * n_crowdsourcees
}

fn time(t: f64) -> f64 {
    (t / HORIZON).clamp(-TIME_CLIP, TIME_CLIP)
}

/// Encodes `plan` into a fresh vector of length [`feature_len`].
pub fn encode_state(instance: &ProblemInstance, plan: &PlanState) -> Vec<f64> {
    let mut out = Vec::with_capacity(feature_len(instance.n_requests(), instance.n_crowdsourcees()));
    let side = instance.area_side;
    let push_point = |out: &mut Vec<f64>, p: Point| {
        out.push(p.x / side);
        out.push(p.y / side);
    };
    for (j, r) in instance.requests.iter().enumerate() {
        push_point(&mut out, r.pickup);
        push_point(&mut out, r.delivery);
        let (after_p, before_d) = match plan.route_of(j) {
            Some(k) => {
                let route = plan.route(k);
                let ip = route.iter().position(|&n| n == NodeRef::Pickup(j)).unwrap();
                let id = route.iter().position(|&n| n == NodeRef::Delivery(j)).unwrap();
                (route[ip + 1].location(instance), route[id - 1].location(instance))
            }
            None => (r.pickup, r.delivery),
        };
        push_point(&mut out, after_p);
        push_point(&mut out, before_d);
        let m = request_metrics(instance, plan, j);
        out.push(time(m.slack));
        out.push(time(m.unused_service));
        out.push(time(m.occupation));
    }
    let n_requests = instance.n_requests().max(1) as f64;
    for (k, c) in instance.crowdsourcees.iter().enumerate() {
        push_point(&mut out, c.origin);
        let first = plan.route(k).get(1).map_or(c.origin, |n| n.location(instance));
        push_point(&mut out, first);
        let s = plan.summary(k);
        out.push(time(s.duration));
        out.push(time(s.delivery_violation));
        out.push(time(s.remaining_time));
        out.push(s.capacity_violations as f64 / n_requests);
    }
    out
}
