use serde::Serialize;

use super::fit::{linear_stats, param_space, Problem, ResidualSpace};
use super::lm;
use super::model::{model_variance, FitParams, ParamKind};
use super::synth::SynthDesign;
use crate::error::Result;
use crate::units::hz_to_rad;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullDirection {
    pub singular_value: f64,
    /// `(parameter, coefficient)` in relative-change coordinates.
    pub components: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityReport {
    pub parameters: Vec<String>,
    /// Singular values of the Jacobian with columns scaled to relative changes.
    pub singular_values: Vec<f64>,
    /// `σ_max / σ_min`; infinite when a direction is exactly unresolved.
    pub condition_number: f64,
    pub null_directions: Vec<NullDirection>,
    /// Correlation matrix of the linearized estimates.
    pub correlations: Vec<Vec<f64>>,
    pub flagged: Vec<String>,
}

impl IdentifiabilityReport {
    pub fn correlation(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.parameters.iter().position(|p| p == a)?;
        let j = self.parameters.iter().position(|p| p == b)?;
        Some(self.correlations[i][j])
    }
}

/// Local identifiability of `kinds` for the measurement `design`, evaluated
/// at the noise-free truth `params` (detunings and angles from the design).
pub fn identifiability_report(
    params: &FitParams,
    design: &SynthDesign,
    kinds: &[ParamKind],
) -> Result<IdentifiabilityReport> {
    design.validate()?;
    let p = design.layout(params);
    p.validate(design.groups.len(), design.n_traces())?;
    let freqs = design.band.frequencies_hz();
    let omegas: Vec<f64> = freqs.iter().map(|&f| hz_to_rad(f)).collect();
    let mut group_of = Vec::new();
    for (g, group) in design.groups.iter().enumerate() {
        group_of.extend(std::iter::repeat_n(g, group.angles_rad.len()));
    }
    let data: Vec<Vec<f64>> = (0..design.n_traces())
        .map(|t| omegas.iter().map(|&w| model_variance(&p, group_of[t], t, w)).collect())
        .collect();
    let problem = Problem {
        base: p.clone(),
        kinds: kinds.to_vec(),
        omegas: vec![omegas; design.n_traces()],
        data,
        group_of,
        space: ResidualSpace::Relative,
        weight: 1.0,
    };
    let space = param_space(kinds, &p);
    let x = problem.x0();
    let jac = lm::jacobian(&problem, &x, &space);
    let stats = linear_stats(&jac, &x, &space.typical, 1.0);

    let names: Vec<String> = kinds.iter().map(ParamKind::name).collect();
    let n = kinds.len();
    let smax = stats.singular_values.first().copied().unwrap_or(0.0);
    let smin = stats.singular_values.last().copied().unwrap_or(0.0);
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    // correlations from the pseudo-inverse; unresolved directions are excluded
    let correlations = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = (stats.covariance[(i, i)] * stats.covariance[(j, j)]).sqrt();
                    if d > 0.0 {
                        stats.covariance[(i, j)] / d
                    } else if i == j {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let null_directions = stats
        .null_vectors
        .iter()
        .map(|(s, v)| {
            // fix the sign so the largest component is positive
            let k = (0..n).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
            let sign = if v[k] < 0.0 { -1.0 } else { 1.0 };
            NullDirection {
                singular_value: *s,
                components: names.iter().cloned().zip(v.iter().map(|c| sign * c)).collect(),
            }
        })
        .collect();

    Ok(IdentifiabilityReport {
        flagged: stats.weak.iter().map(|&i| names[i].clone()).collect(),
        parameters: names,
        singular_values: stats.singular_values,
        condition_number,
        null_directions,
        correlations,
    })
}
