//! Detection-efficiency budget: product of independent loss channels and its
//! comparison with the efficiency inferred from squeezing measurements.

use serde::{Deserialize, Serialize};

use crate::error::{EnmoError, Result};

/// One loss channel. Serialized as `{"name": ..., "eta": ..., "sigma": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub eta: f64,
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EfficiencyBudget {
    pub channels: Vec<Channel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub uncertainty: f64,
}

impl EfficiencyBudget {
    pub fn new(channels: Vec<Channel>) -> Result<Self> {
        let b = Self { channels };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.channels {
            if !(0.0..=1.0).contains(&c.eta) {
                return Err(EnmoError::InvalidParameter {
                    name: "eta",
                    reason: format!("channel '{}' efficiency {} outside [0, 1]", c.name, c.eta),
                });
            }
            if !(c.sigma >= 0.0) || !c.sigma.is_finite() {
                return Err(EnmoError::InvalidParameter {
                    name: "sigma",
                    reason: format!("channel '{}' uncertainty {} must be finite and >= 0", c.name, c.sigma),
                });
            }
        }
        Ok(())
    }

    /// Concatenation of two budgets.
    pub fn concat(&self, other: &EfficiencyBudget) -> EfficiencyBudget {
        let mut channels = self.channels.clone();
        channels.extend(other.channels.iter().cloned());
        EfficiencyBudget { channels }
    }

    pub fn reference() -> Self {
        let ch = |name: &str, eta, sigma| Channel {
            name: name.to_string(),
            eta,
            sigma,
        };
        Self {
            channels: vec![
                ch("propagation", 0.91, 0.04),
                ch("homodyne balancing", 0.999, 0.001),
                // fringe visibility enters linearly, not squared
                ch("homodyne contrast", 0.90, 0.04),
                ch("quantum efficiency", 0.97, 0.02),
                ch("escape efficiency", 0.684, 0.005),
            ],
        }
    }
}

/// Product of the channel efficiencies with first-order uncertainty:
/// relative uncertainties of independent channels add in quadrature.
pub fn total_efficiency(budget: &EfficiencyBudget) -> Estimate {
    let value: f64 = budget.channels.iter().map(|c| c.eta).product();
    let uncertainty = if value == 0.0 {
        // d(product)/d(eta_k) for the zero channels only
        let zeros: Vec<&Channel> = budget.channels.iter().filter(|c| c.eta == 0.0).collect();
        if zeros.len() == 1 {
            let rest: f64 = budget.channels.iter().filter(|c| c.eta != 0.0).map(|c| c.eta).product();
            rest * zeros[0].sigma
        } else {
            0.0
        }
    } else {
        let rel_sq: f64 = budget.channels.iter().map(|c| (c.sigma / c.eta).powi(2)).sum();
        value * rel_sq.sqrt()
    };
    Estimate { value, uncertainty }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub budget: Estimate,
    pub measured: Estimate,
    pub discrepancy: f64,
    /// Combined 1σ, `sqrt(σ_budget² + σ_measured²)`.
    pub combined_sigma: f64,
    pub k: f64,
    pub consistent: bool,
}

/// Budget product against a measured efficiency, consistent within `k` combined σ.
pub fn budget_consistency(budget: &EfficiencyBudget, measured: Estimate, k: f64) -> ConsistencyReport {
    compare(total_efficiency(budget), measured, k)
}

pub fn compare(budget: Estimate, measured: Estimate, k: f64) -> ConsistencyReport {
    let discrepancy = (budget.value - measured.value).abs();
    let combined_sigma = budget.uncertainty.hypot(measured.uncertainty);
    ConsistencyReport {
        budget,
        measured,
        discrepancy,
        combined_sigma,
        k,
        consistent: discrepancy <= k * combined_sigma,
    }
}
