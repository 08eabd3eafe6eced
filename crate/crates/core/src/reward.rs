//! Step rewards: change in total shipping cost for insertions, change in
//! penalized routing cost over the touched routes for neighborhood moves.

use serde::{Deserialize, Serialize};

use crate::instance::ProblemInstance;
use crate::plan::RouteSummary;

/// Penalty weights on delivery lateness, overtime, and capacity violations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// ϑ, per minute of late delivery.
    pub vartheta: f64,
    /// τ, per minute of overtime.
    pub tau: f64,
    /// ρϕ, per capacity violation occurrence.
    pub rho_phi: f64,
    /// Reproduce the printed χ = min(η, 0), which never penalizes overtime.
    #[serde(default)]
    pub literal_chi: bool,
}

impl PenaltyConfig {
    pub const fn medium() -> Self {
        Self { vartheta: 0.1, tau: 0.2, rho_phi: 0.15, literal_chi: false }
    }

    pub const fn large() -> Self {
        Self { vartheta: 0.25, tau: 0.15, rho_phi: 0.2, literal_chi: false }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.vartheta < 0.0 || self.tau < 0.0 || self.rho_phi < 0.0 {
            return Err("penalty coefficients must be non-negative".into());
        }
        Ok(())
    }

    /// χ_k as used in the routing cost.
    pub fn overtime_term(&self, s: &RouteSummary) -> f64 {
        if self.literal_chi {
            (s.capacity_violations as f64).min(0.0)
        } else {
            s.overtime
        }
    }
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self::medium()
    }
}

/// β^c (d_k + ϑ v_k + τ χ_k + ρϕ η_k).
pub fn penalized_route_cost(instance: &ProblemInstance, s: &RouteSummary, cfg: &PenaltyConfig) -> f64 {
    instance.beta_c * s.duration + route_penalty(instance, s, cfg)
}

/// The penalty part alone: β^c (ϑ v_k + τ χ_k + ρϕ η_k).
pub fn route_penalty(instance: &ProblemInstance, s: &RouteSummary, cfg: &PenaltyConfig) -> f64 {
    instance.beta_c
        * (cfg.vartheta * s.delivery_violation
            + cfg.tau * cfg.overtime_term(s)
            + cfg.rho_phi * s.capacity_violations as f64)
}

/// Reward for moving request `j` from backup onto a route whose duration
/// goes from `duration_before` (0 for a new route) to `duration_after`.
pub fn insertion_reward(instance: &ProblemInstance, duration_before: f64, duration_after: f64, j: usize) -> f64 {
    instance.beta_c * duration_before + instance.backup_cost(j) - instance.beta_c * duration_after
}

/// c¹ − c² summed over the routes touched by a move.
pub fn move_reward(instance: &ProblemInstance, before: &[RouteSummary], after: &[RouteSummary], cfg: &PenaltyConfig) -> f64 {
    let cost = |xs: &[RouteSummary]| xs.iter().map(|s| penalized_route_cost(instance, s, cfg)).sum::<f64>();
    cost(before) - cost(after)
}
