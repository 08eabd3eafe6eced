//! Problem data: requests, crowdsourcees, the backup depot, and travel times.
//!
//! A [`ProblemInstance`] is immutable once built. Instances are either
//! generated from a seeded RNG with [`generate_instance`] or loaded from the
//! JSON instance file format with [`load_instance`].

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building, validating, or reading an instance.
#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid instance: {0}")]
    Validation(String),
    #[error("failed to parse instance file: {0}")]
    Parse(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A location in the square service area, in miles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// A shipping request with a pickup window start and a delivery deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: usize,
    pub pickup: Point,
    pub delivery: Point,
    /// Minutes from the global origin.
    pub earliest_pickup: f64,
    /// Minutes from the global origin.
    pub latest_delivery: f64,
    /// Pounds.
    pub weight: f64,
}

/// An ad hoc courier with limited availability and carrying capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crowdsourcee {
    pub id: usize,
    pub origin: Point,
    pub t_start: f64,
    pub t_end: f64,
    /// Pounds.
    pub capacity: f64,
    /// Miles per hour.
    pub speed: f64,
}

impl Crowdsourcee {
    /// Length of the availability window in minutes.
    pub fn available_time(&self) -> f64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    /// Side of the square service area, miles.
    pub area_side: f64,
    pub depot: Point,
    /// Backup vehicle speed, mph.
    pub backup_speed: f64,
    /// Crowdsourcee pay rate, $/minute.
    pub beta_c: f64,
    /// Backup vehicle operating cost, $/minute.
    pub beta_b: f64,
    pub requests: Vec<Request>,
    pub crowdsourcees: Vec<Crowdsourcee>,
}

/// Travel time in minutes between two points at `speed` mph (euclidean metric).
pub fn travel_time(a: Point, b: Point, speed: f64) -> Result<f64, InstanceError> {
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(InstanceError::InvalidArgument(format!(
            "speed must be positive, got {speed}"
        )));
    }
    Ok(minutes(a.distance(&b), speed))
}

#[inline]
pub(crate) fn minutes(miles: f64, speed: f64) -> f64 {
    miles / speed * 60.0
}

impl ProblemInstance {
    pub fn n_requests(&self) -> usize {
        self.requests.len()
    }

    pub fn n_crowdsourcees(&self) -> usize {
        self.crowdsourcees.len()
    }

    /// Backup vehicle time from the depot to the pickup of request `j`.
    pub fn backup_to_pickup(&self, j: usize) -> f64 {
        minutes(self.depot.distance(&self.requests[j].pickup), self.backup_speed)
    }

    /// Backup vehicle time from pickup to delivery of request `j`.
    pub fn backup_direct(&self, j: usize) -> f64 {
        let r = &self.requests[j];
        minutes(r.pickup.distance(&r.delivery), self.backup_speed)
    }

    /// Backup vehicle time from the delivery of request `j` back to the depot.
    pub fn backup_to_depot(&self, j: usize) -> f64 {
        minutes(self.requests[j].delivery.distance(&self.depot), self.backup_speed)
    }

    /// Full depot round trip serving request `j` alone, in minutes.
    pub fn backup_round_trip(&self, j: usize) -> f64 {
        self.backup_to_pickup(j) + self.backup_direct(j) + self.backup_to_depot(j)
    }

    /// Dollar cost of serving request `j` with a backup vehicle.
    pub fn backup_cost(&self, j: usize) -> f64 {
        self.beta_b * self.backup_round_trip(j)
    }

    /// Speed used for the direct crowdsourcee pickup-to-delivery time in the
    /// slack metric. Couriers are homogeneous in generated instances; for
    /// heterogeneous files the fastest courier is used.
    pub fn crowd_speed(&self) -> f64 {
        self.crowdsourcees
            .iter()
            .map(|c| c.speed)
            .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
            .unwrap_or(self.backup_speed)
    }

    /// Direct crowdsourcee travel time from pickup to delivery of request `j`.
    pub fn crowd_direct(&self, j: usize) -> f64 {
        let r = &self.requests[j];
        minutes(r.pickup.distance(&r.delivery), self.crowd_speed())
    }

    /// Checks every structural invariant of the instance.
    pub fn validate(&self) -> Result<(), InstanceError> {
        let bad = |msg: String| Err(InstanceError::Validation(msg));
        if !(self.area_side > 0.0) {
            return bad(format!("area_side must be positive, got {}", self.area_side));
        }
        let inside = |p: &Point| {
            p.x.is_finite()
                && p.y.is_finite()
                && (0.0..=self.area_side).contains(&p.x)
                && (0.0..=self.area_side).contains(&p.y)
        };
        if !inside(&self.depot) {
            return bad("depot lies outside the service area".into());
        }
        if !(self.backup_speed > 0.0) {
            return bad(format!("backup_speed must be positive, got {}", self.backup_speed));
        }
        if !(self.beta_c > 0.0) {
            return bad(format!("beta_c must be positive, got {}", self.beta_c));
        }
        if !(self.beta_b > self.beta_c) {
            return bad(format!(
                "beta_b ({}) must exceed beta_c ({})",
                self.beta_b, self.beta_c
            ));
        }
        for (i, r) in self.requests.iter().enumerate() {
            if r.id != i {
                return bad(format!("request at index {i} has id {}", r.id));
            }
            if !inside(&r.pickup) || !inside(&r.delivery) {
                return bad(format!("request {i} lies outside the service area"));
            }
            if !(r.earliest_pickup < r.latest_delivery) {
                return bad(format!("request {i}: earliest_pickup must precede latest_delivery"));
            }
            if !(r.weight > 0.0) {
                return bad(format!("request {i}: weight must be positive"));
            }
        }
        for (i, c) in self.crowdsourcees.iter().enumerate() {
            if c.id != i {
                return bad(format!("crowdsourcee at index {i} has id {}", c.id));
            }
            if !inside(&c.origin) {
                return bad(format!("crowdsourcee {i} lies outside the service area"));
            }
            if !(c.t_start < c.t_end) {
                return bad(format!("crowdsourcee {i}: t_start must precede t_end"));
            }
            if !(c.capacity > 0.0) {
                return bad(format!("crowdsourcee {i}: capacity must be positive"));
            }
            if !(c.speed > 0.0) {
                return bad(format!("crowdsourcee {i}: speed must be positive"));
            }
        }
        Ok(())
    }
}

/// Parameters of the random instance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub area_side: f64,
    pub courier_speed: f64,
    pub courier_capacity: f64,
    /// Availability duration range, minutes.
    pub availability: (f64, f64),
    /// Request weight range, lbs.
    pub weight: (f64, f64),
    /// Latest delivery range, minutes.
    pub latest_delivery: (f64, f64),
    pub backup_speed: f64,
    pub beta_b: f64,
    pub beta_c: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            area_side: 6.0,
            courier_speed: 10.0,
            courier_capacity: 10.0,
            availability: (60.0, 120.0),
            weight: (2.0, 7.0),
            latest_delivery: (100.0, 120.0),
            backup_speed: 20.0,
            beta_b: 1.13,
            beta_c: 10.0 / 60.0,
        }
    }
}

impl GeneratorParams {
    /// Uses the rounded $0.17/minute crowdsourcee rate instead of $10/hour.
    pub fn with_rounded_pay(mut self) -> Self {
        self.beta_c = 0.17;
        self
    }
}

/// Named instance size classes.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// 50 requests, 22 crowdsourcees.
    Medium,
    /// 200 requests, 70 crowdsourcees.
    Large,
    Custom(GeneratorParams),
}

impl Profile {
    /// Generator parameters; the two published sizes share one setup.
    pub fn params(&self) -> GeneratorParams {
        match self {
            Profile::Medium | Profile::Large => GeneratorParams::default(),
            Profile::Custom(p) => p.clone(),
        }
    }

    /// Default (requests, crowdsourcees) of the size class.
    pub fn default_size(&self) -> Option<(usize, usize)> {
        match self {
            Profile::Medium => Some((50, 22)),
            Profile::Large => Some((200, 70)),
            Profile::Custom(_) => None,
        }
    }
}

/// Draws a random instance. Deterministic in `seed`.
pub fn generate_instance(
    n_requests: usize,
    n_crowdsourcees: usize,
    seed: u64,
    profile: &Profile,
) -> Result<ProblemInstance, InstanceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_with_rng(n_requests, n_crowdsourcees, &profile.params(), &mut rng)
}

/// Draws a random instance from a caller-supplied RNG.
pub fn generate_with_rng<R: Rng + ?Sized>(
    n_requests: usize,
    n_crowdsourcees: usize,
    params: &GeneratorParams,
    rng: &mut R,
) -> Result<ProblemInstance, InstanceError> {
    if n_requests == 0 || n_crowdsourcees == 0 {
        return Err(InstanceError::InvalidArgument(
            "request and crowdsourcee counts must be positive".into(),
        ));
    }
    let side = params.area_side;
    let point = |rng: &mut R| Point::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side));
    let uniform = |rng: &mut R, (lo, hi): (f64, f64)| {
        if hi > lo {
            rng.gen_range(lo..hi)
        } else {
            lo
        }
    };

    let mut requests = Vec::with_capacity(n_requests);
    for id in 0..n_requests {
        let pickup = point(rng);
        let delivery = point(rng);
        let weight = uniform(rng, params.weight);
        let latest_delivery = uniform(rng, params.latest_delivery);
        requests.push(Request {
            id,
            pickup,
            delivery,
            earliest_pickup: 0.0,
            latest_delivery,
            weight,
        });
    }
    let mut crowdsourcees = Vec::with_capacity(n_crowdsourcees);
    for id in 0..n_crowdsourcees {
        let origin = point(rng);
        let duration = uniform(rng, params.availability);
        crowdsourcees.push(Crowdsourcee {
            id,
            origin,
            t_start: 0.0,
            t_end: duration,
            capacity: params.courier_capacity,
            speed: params.courier_speed,
        });
    }
    let instance = ProblemInstance {
        area_side: side,
        depot: Point::new(side / 2.0, side / 2.0),
        backup_speed: params.backup_speed,
        beta_c: params.beta_c,
        beta_b: params.beta_b,
        requests,
        crowdsourcees,
    };
    instance.validate()?;
    Ok(instance)
}

/// Serializes an instance to the JSON instance file format.
pub fn instance_to_json(instance: &ProblemInstance) -> String {
    serde_json::to_string_pretty(instance).expect("instance serialization is infallible")
}

/// Parses and validates an instance document.
pub fn instance_from_json(text: &str) -> Result<ProblemInstance, InstanceError> {
    let instance: ProblemInstance =
        serde_json::from_str(text).map_err(|e| InstanceError::Parse(e.to_string()))?;
    instance.validate()?;
    Ok(instance)
}

pub fn save_instance(instance: &ProblemInstance, path: impl AsRef<Path>) -> Result<(), InstanceError> {
    let path = path.as_ref();
    fs::write(path, instance_to_json(instance)).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<ProblemInstance, InstanceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    instance_from_json(&text)
}
