//! Parameters and reports for the finite-horizon checks of the map and hole
//! regularity conditions.

use serde::Serialize;

use crate::error::{Error, Result};

/// Rates and radii entering the Collet–Eckmann, slow-recurrence and hole
/// placement checks.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ConditionParams {
    /// Expansion rate outside the critical neighbourhood.
    pub gamma: f64,
    pub kappa: f64,
    /// Collet–Eckmann rate along critical orbits.
    pub big_lambda: f64,
    /// Slow-recurrence rate. `None` means `big_lambda / (10 * order)` per critical point.
    pub theta: Option<f64>,
    /// Critical neighbourhood radius.
    pub delta0: f64,
    pub horizon: usize,
}

impl Default for ConditionParams {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            kappa: 1.0,
            big_lambda: 0.5,
            theta: None,
            delta0: 0.1,
            horizon: 50,
        }
    }
}

impl ConditionParams {
    pub fn validate(&self, max_order: f64) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("kappa", self.kappa),
            ("big_lambda", self.big_lambda),
            ("delta0", self.delta0),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Precondition(format!("{name} must be positive, got {v}")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::Precondition("horizon must be at least 1".into()));
        }
        if let Some(theta) = self.theta {
            if !(theta > 0.0) || theta >= self.big_lambda / (5.0 * max_order) {
                return Err(Error::Precondition(format!(
                    "theta = {theta} must lie in (0, big_lambda / (5 * order)) = (0, {})",
                    self.big_lambda / (5.0 * max_order)
                )));
            }
        }
        Ok(())
    }

    /// Slow-recurrence rate for a critical point of the given order.
    pub fn theta_for(&self, order: f64) -> f64 {
        self.theta.unwrap_or(self.big_lambda / (10.0 * order))
    }

    pub fn theta_is_default(&self) -> bool {
        self.theta.is_none()
    }
}

/// Per-point outcome of a condition check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionEntry {
    pub point: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_growth_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_clearance_ratio: Option<f64>,
    /// Step at which the worst value (or the failure) occurred.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_derivative: Option<f64>,
}

impl ConditionEntry {
    pub(crate) fn new(point: f64) -> Self {
        Self {
            point,
            pass: true,
            min_growth_rate: None,
            min_clearance_ratio: None,
            witness_step: None,
            return_step: None,
            return_derivative: None,
        }
    }
}

/// Result of a finite-horizon check. A pass is evidence up to `horizon`, not a proof.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub horizon: usize,
    pub pass: bool,
    pub entries: Vec<ConditionEntry>,
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub(crate) fn new(condition: &str, horizon: usize) -> Self {
        Self {
            condition: condition.to_string(),
            horizon,
            pass: true,
            entries: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, entry: ConditionEntry) {
        self.pass &= entry.pass;
        self.entries.push(entry);
    }
}
