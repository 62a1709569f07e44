//! Bounded Levenberg–Marquardt with central-difference Jacobians.
//!
//! Damping uses Marquardt's `diag(JᵀJ)` scaling, so the iteration is
//! invariant to per-parameter units (rad/s next to radians next to a
//! dimensionless efficiency). Bounds are enforced by projecting each trial
//! point onto the box.

use nalgebra::{DMatrix, DVector};

/// Least-squares problem over a flat parameter vector.
pub trait Residuals {
    fn residuals(&self, x: &[f64]) -> Vec<f64>;
}

impl<F: Fn(&[f64]) -> Vec<f64>> Residuals for F {
    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Relative step tolerance.
    pub xtol: f64,
    /// Relative cost-reduction tolerance.
    pub ftol: f64,
    /// Scaled-gradient tolerance.
    pub gtol: f64,
    pub initial_lambda: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            xtol: 1e-13,
            ftol: 1e-16,
            gtol: 1e-14,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    StepTolerance,
    CostTolerance,
    GradientTolerance,
    ZeroResidual,
    /// Damping grew without finding a lower cost.
    Stalled,
    MaxIterations,
}

impl Termination {
    pub fn converged(&self) -> bool {
        !matches!(self, Termination::MaxIterations)
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    /// `½ Σ r²` at `x`.
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

/// Box constraints and finite-difference scales for each parameter.
#[derive(Debug, Clone)]
pub struct ParamSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Typical magnitude; sets the difference step when the value is near zero.
    pub typical: Vec<f64>,
}

impl ParamSpace {
    pub fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    fn step(&self, x: f64, i: usize) -> f64 {
        1e-6 * x.abs().max(self.typical[i])
    }
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Central-difference Jacobian. Steps are shrunk to one side near a bound.
pub fn jacobian<R: Residuals + ?Sized>(problem: &R, x: &[f64], space: &ParamSpace) -> DMatrix<f64> {
    let r0 = problem.residuals(x);
    let m = r0.len();
    let n = x.len();
    let mut j = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for i in 0..n {
        let h = space.step(x[i], i);
        let up = (x[i] + h).min(space.upper[i]);
        let down = (x[i] - h).max(space.lower[i]);
        xp[i] = up;
        let rp = problem.residuals(&xp);
        xp[i] = down;
        let rm = problem.residuals(&xp);
        xp[i] = x[i];
        let width = up - down;
        if width > 0.0 {
            for k in 0..m {
                j[(k, i)] = (rp[k] - rm[k]) / width;
            }
        }
    }
    j
}

pub fn minimize<R: Residuals + ?Sized>(problem: &R, x0: &[f64], space: &ParamSpace, cfg: &LmConfig) -> LmOutcome {
    let n = x0.len();
    let mut x = x0.to_vec();
    space.project(&mut x);
    let mut r = problem.residuals(&x);
    let mut c = cost(&r);
    let initial_cost = c;
    let mut evaluations = 1;
    let mut lambda = cfg.initial_lambda;

    if n == 0 {
        return LmOutcome {
            x,
            cost: c,
            initial_cost,
            iterations: 0,
            evaluations,
            termination: Termination::GradientTolerance,
        };
    }

    let mut iterations = 0;
    let termination = loop {
        if c == 0.0 {
            break Termination::ZeroResidual;
        }
        if iterations >= cfg.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let jac = jacobian(problem, &x, space);
        evaluations += 2 * n;
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &rv;
        let diag: Vec<f64> = (0..n).map(|i| jtj[(i, i)].max(f64::MIN_POSITIVE)).collect();

        // scaled gradient: |g_i| / sqrt(D_ii) against the residual norm
        let rnorm = (2.0 * c).sqrt();
        let gmax = (0..n).map(|i| grad[i].abs() / diag[i].sqrt()).fold(0.0, f64::max);
        if gmax <= cfg.gtol * rnorm {
            break Termination::GradientTolerance;
        }

        let mut accepted = None;
        while lambda < 1e20 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * diag[i];
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&grad));
            let mut trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            space.project(&mut trial);
            let rt = problem.residuals(&trial);
            evaluations += 1;
            let ct = cost(&rt);
            if ct.is_finite() && ct < c {
                accepted = Some((trial, rt, ct));
                lambda = (lambda / 5.0).max(1e-15);
                break;
            }
            lambda *= 4.0;
        }

        let Some((trial, rt, ct)) = accepted else {
            break Termination::Stalled;
        };
        let step_small = trial
            .iter()
            .zip(&x)
            .enumerate()
            .all(|(i, (a, b))| (a - b).abs() <= cfg.xtol * (b.abs().max(space.typical[i])));
        let cost_small = (c - ct) <= cfg.ftol * c;
        x = trial;
        r = rt;
        c = ct;
        if step_small {
            break Termination::StepTolerance;
        }
        if cost_small {
            break Termination::CostTolerance;
        }
    };

    LmOutcome {
        x,
        cost: c,
        initial_cost,
        iterations,
        evaluations,
        termination,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unbounded(n: usize) -> ParamSpace {
        ParamSpace {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            typical: vec![1.0; n],
        }
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]];
        let out = minimize(&f, &[-1.2, 1.0], &unbounded(2), &LmConfig::default());
        assert!(out.termination.converged(), "{:?}", out.termination);
        assert!((out.x[0] - 1.0).abs() < 1e-10 && (out.x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exponential_fit_with_mixed_scales() {
        // y = a exp(-t / tau), a ~ 1e7, tau ~ 1e-6
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 1e-7).collect();
        let truth = [3.2e7, 1.7e-6];
        let y: Vec<f64> = t.iter().map(|&t| truth[0] * (-t / truth[1]).exp()).collect();
        let f =
            move |x: &[f64]| -> Vec<f64> { t.iter().zip(&y).map(|(&t, &y)| x[0] * (-t / x[1]).exp() - y).collect() };
        let space = ParamSpace {
            lower: vec![0.0, 1e-9],
            upper: vec![f64::INFINITY, 1.0],
            typical: vec![1e7, 1e-6],
        };
        let out = minimize(&f, &[2.0e7, 1.0e-6], &space, &LmConfig::default());
        assert!((out.x[0] / truth[0] - 1.0).abs() < 1e-9);
        assert!((out.x[1] / truth[1] - 1.0).abs() < 1e-9);
        assert!(out.cost <= out.initial_cost);
    }

    #[test]
    fn respects_bounds() {
        // minimum at x = -1 but the box stops at 0
        let f = |x: &[f64]| vec![x[0] + 1.0];
        let space = ParamSpace {
            lower: vec![0.0],
            upper: vec![10.0],
            typical: vec![1.0],
        };
        let out = minimize(&f, &[5.0], &space, &LmConfig::default());
        assert_eq!(out.x[0], 0.0);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let f = |x: &[f64]| vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]];
        let cfg = LmConfig {
            max_iterations: 2,
            ..LmConfig::default()
        };
        let out = minimize(&f, &[-1.2, 1.0], &unbounded(2), &cfg);
        assert_eq!(out.termination, Termination::MaxIterations);
        assert!(!out.termination.converged());
        assert!(out.cost <= out.initial_cost);
    }

    #[test]
    fn jacobian_matches_analytic() {
        let f = |x: &[f64]| vec![x[0].sin() * x[1], x[1] * x[1]];
        let j = jacobian(&f, &[0.3, 2.0], &unbounded(2));
        assert!((j[(0, 0)] - 0.3f64.cos() * 2.0).abs() < 1e-8);
        assert!((j[(0, 1)] - 0.3f64.sin()).abs() < 1e-8);
        assert!((j[(1, 1)] - 4.0).abs() < 1e-8);
        assert!(j[(1, 0)].abs() < 1e-12);
    }
}
