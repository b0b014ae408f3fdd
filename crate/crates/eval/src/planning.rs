//! DER sizing: how much distributed backup power lifts a system to a target.
//!
//! The model is deliberately coarse. A fleet of `np` poles each hosting `pu`
//! watts of DER adds `P / (pu * np)` to every event score, where `P` is the
//! total installed watts. Analytic mode inverts that directly; capped mode
//! refuses to push any single event past a perfect score and solves for the
//! total numerically.

use gridres_core::{bisect, VulnerabilityProfile, WeightScheme};
use serde::{Deserialize, Serialize};

use crate::EvalError;

/// How the per-event score improvement is modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    /// Uncapped linear lift; closed form, may nominally push events past 1.
    Analytic,
    /// Per-event scores saturate at 1; solved by bisection.
    Capped,
}

/// Inputs shared by both planning modes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningInput {
    /// Historical or simulated per-event resilience scores, each in [0, 1].
    pub scores: Vec<f64>,
    /// Watts of DER one pole can host.
    pub pu: f64,
    /// Number of poles available for DER siting.
    pub np: u64,
    /// Desired mean resilience after the investment, in (0, 1].
    pub target: f64,
}

impl PlanningInput {
    pub const DEFAULT_PU: f64 = 600.0;

    pub fn new(scores: Vec<f64>, pu: f64, np: u64, target: f64) -> Result<Self, EvalError> {
        let input = Self { scores, pu, np, target };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::BadPlanningInput(m));
        if self.scores.is_empty() {
            return bad("no event scores".into());
        }
        for (i, &s) in self.scores.iter().enumerate() {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("score[{i}] = {s} outside [0, 1]"));
            }
        }
        if !(self.pu > 0.0 && self.pu.is_finite()) {
            return bad(format!("pu = {} must be positive and finite", self.pu));
        }
        if self.np == 0 {
            return bad("np must be at least 1".into());
        }
        if !(self.target > 0.0 && self.target <= 1.0) {
            return bad(format!("target = {} outside (0, 1]", self.target));
        }
        Ok(())
    }

    fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }

    /// Total watts that correspond to a per-event score boost of `x`.
    fn watts_for_boost(&self, x: f64) -> f64 {
        x * self.pu * self.np as f64
    }
}

/// Outcome of a sizing run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    /// Total DER watts to install. Zero when the target is already met.
    pub watts: f64,
    /// Per-event score lift `watts / (pu * np)`.
    pub boost: f64,
    /// Mean improved score under the chosen mode's model.
    pub achieved_mean: f64,
    /// Events whose lifted score exceeds 1 before capping. Nonzero in
    /// analytic mode means the closed form over-promises; rerun capped.
    pub saturated_events: usize,
    pub mode: PlanMode,
}

fn capped_mean(scores: &[f64], x: f64) -> f64 {
    scores.iter().map(|s| (s + x).min(1.0)).sum::<f64>() / scores.len() as f64
}

/// Size DER against the plain mean of the event scores.
pub fn plan_der_unweighted(input: &PlanningInput, mode: PlanMode) -> Result<PlanResult, EvalError> {
    input.validate()?;
    let mean = input.mean();
    let x = match mode {
        PlanMode::Analytic => (input.target - mean).max(0.0),
        PlanMode::Capped => {
            if capped_mean(&input.scores, 0.0) >= input.target {
                0.0
            } else {
                let g = |x: f64| capped_mean(&input.scores, x) - input.target;
                if g(1.0) < 0.0 {
                    // Unreachable for target <= 1; kept so a bad target is a
                    // diagnosis, not a bisection panic.
                    return Err(EvalError::InfeasibleTarget {
                        target: input.target,
                        achievable: capped_mean(&input.scores, 1.0),
                    });
                }
                bisect(g, 0.0, 1.0, 1e-12)?
            }
        }
    };
    let achieved_mean = match mode {
        PlanMode::Analytic => mean + x,
        PlanMode::Capped => capped_mean(&input.scores, x),
    };
    let saturated_events = input.scores.iter().filter(|&&s| s + x > 1.0).count();
    Ok(PlanResult {
        watts: input.watts_for_boost(x),
        boost: x,
        achieved_mean,
        saturated_events,
        mode,
    })
}

/// A weighted plan is an unweighted plan against a stiffer inner target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPlan {
    /// Weighting exponent `1 + lambda * S`.
    pub exponent: f64,
    /// Unweighted score that makes the weighted score hit the target.
    pub inner_target: f64,
    pub result: PlanResult,
}

/// Size DER so the vulnerability-weighted score reaches the target.
///
/// With `rw = ru^e`, hitting `rw = target` means driving the plain mean to
/// `target^(1/e)`; the rest is the unweighted machinery. The target must sit
/// strictly inside (0, 1): at exactly 1 the weighting is a no-op and the
/// caller should say what it means by using the unweighted planner.
pub fn plan_der_weighted(
    input: &PlanningInput,
    profile: &VulnerabilityProfile,
    scheme: &WeightScheme,
    mode: PlanMode,
) -> Result<WeightedPlan, EvalError> {
    input.validate()?;
    scheme.validate()?;
    if !(input.target > 0.0 && input.target < 1.0) {
        return Err(EvalError::BadPlanningInput(format!(
            "weighted target = {} outside (0, 1)",
            input.target
        )));
    }
    let exponent = 1.0 + profile.lambda * scheme.weight_sum(&profile.factors);
    let inner_target = input.target.powf(1.0 / exponent);
    let inner = PlanningInput {
        scores: input.scores.clone(),
        pu: input.pu,
        np: input.np,
        target: inner_target,
    };
    let result = plan_der_unweighted(&inner, mode)?;
    Ok(WeightedPlan {
        exponent,
        inner_target,
        result,
    })
}
