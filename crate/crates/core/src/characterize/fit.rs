use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{self, LmConfig, ParamSpace, Residuals};
use super::model::{model_variance, FitParams, ParamKind};
use super::trace::TraceSet;
use crate::covariance::canonical_angle;
use crate::error::{EnmoError, Result};
use crate::spectra::enmo_covariance_unchecked;
use crate::units::{hz_to_rad, variance_to_db, VACUUM};

/// Space in which model and data are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSpace {
    /// `(model - data) / data`.
    Relative,
    /// `model - data` in vacuum = ½ units.
    Linear,
    /// Difference of the dB values relative to shot noise. Symmetric under
    /// over- and undershoot, which keeps the fit out of the false minima that
    /// a relative residual (bounded below by -1) creates.
    #[default]
    Db,
}

impl std::str::FromStr for ResidualSpace {
    type Err = EnmoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relative" => Ok(Self::Relative),
            "linear" => Ok(Self::Linear),
            "db" => Ok(Self::Db),
            other => Err(EnmoError::InvalidParameter {
                name: "residual_space",
                reason: format!("expected relative, linear or db, got '{other}'"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fit the detection efficiency. Off by default: `eta` and `g_a` trade
    /// off against each other along most of the band.
    pub free_eta: bool,
    /// Fit the meter cavity (`kappa_c`, `delta_c`). Parameters that do not
    /// change the model are frozen regardless.
    pub fit_meter: bool,
    /// Replace the starting angles by the per-trace least-squares optimum
    /// (used only when it lowers the starting cost).
    pub init_angles: bool,
    /// Also try a start with each ancilla detuning placed at the highest
    /// point of its traces (the ancilla resonance sits at `omega = -delta_a`).
    pub locate_peaks: bool,
    pub residual_space: ResidualSpace,
    /// Expected residual standard deviation; scales the reported χ².
    pub noise_sigma: Option<f64>,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            free_eta: false,
            fit_meter: true,
            init_angles: true,
            locate_peaks: true,
            residual_space: ResidualSpace::Db,
            noise_sigma: None,
            max_iterations: 300,
        }
    }
}

/// Data, layout and parameter mapping of one least-squares problem.
pub(crate) struct Problem {
    pub base: FitParams,
    pub kinds: Vec<ParamKind>,
    pub omegas: Vec<Vec<f64>>,
    pub data: Vec<Vec<f64>>,
    pub group_of: Vec<usize>,
    pub space: ResidualSpace,
    pub weight: f64,
}

impl Problem {
    pub fn params_at(&self, x: &[f64]) -> FitParams {
        let mut p = self.base.clone();
        for (k, &v) in self.kinds.iter().zip(x) {
            p.set(*k, v);
        }
        p
    }

    pub fn x0(&self) -> Vec<f64> {
        self.kinds.iter().map(|&k| self.base.get(k)).collect()
    }

    fn residual(&self, m: f64, y: f64) -> f64 {
        let r = match self.space {
            ResidualSpace::Relative => (m - y) / y,
            ResidualSpace::Linear => m - y,
            ResidualSpace::Db => variance_to_db(m.max(1e-300)) - variance_to_db(y),
        };
        r / self.weight
    }

    /// `d residual / d model`.
    fn residual_slope(&self, m: f64, y: f64) -> f64 {
        let d = match self.space {
            ResidualSpace::Relative => 1.0 / y,
            ResidualSpace::Linear => 1.0,
            ResidualSpace::Db => 10.0 / (std::f64::consts::LN_10 * m.max(1e-300)),
        };
        d / self.weight
    }

    fn trace_residuals(&self, p: &FitParams, t: usize, out: &mut Vec<f64>) {
        let g = self.group_of[t];
        for (&w, &y) in self.omegas[t].iter().zip(&self.data[t]) {
            out.push(self.residual(model_variance(p, g, t, w), y));
        }
    }

    pub fn cost_at(&self, p: &FitParams) -> f64 {
        let mut r = Vec::new();
        for t in 0..self.data.len() {
            self.trace_residuals(p, t, &mut r);
        }
        half_sum_sq(&r)
    }

    pub fn per_trace(&self, p: &FitParams) -> Vec<Vec<f64>> {
        (0..self.data.len())
            .map(|t| {
                let mut v = Vec::new();
                self.trace_residuals(p, t, &mut v);
                v
            })
            .collect()
    }

    pub fn space(&self) -> ParamSpace {
        param_space(&self.kinds, &self.base)
    }
}

impl Residuals for Problem {
    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let p = self.params_at(x);
        let mut out = Vec::new();
        for t in 0..self.data.len() {
            self.trace_residuals(&p, t, &mut out);
        }
        out
    }
}

pub(crate) fn param_space(kinds: &[ParamKind], p: &FitParams) -> ParamSpace {
    let hz = hz_to_rad(1.0);
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut typical = Vec::new();
    for &k in kinds {
        let (lo, hi, typ) = match k {
            ParamKind::GA | ParamKind::GBs | ParamKind::GDc => (0.0, f64::INFINITY, 1e3 * hz),
            ParamKind::KappaA | ParamKind::KappaC => (hz, f64::INFINITY, 1e3 * hz),
            ParamKind::DeltaC => (f64::NEG_INFINITY, f64::INFINITY, 1e4 * hz),
            ParamKind::DeltaA(g) => {
                if p.delta_a[g] < 0.0 {
                    (f64::NEG_INFINITY, -hz, 1e3 * hz)
                } else {
                    (hz, f64::INFINITY, 1e3 * hz)
                }
            }
            ParamKind::Eta => (0.0, 1.0, 0.1),
            ParamKind::Psi(_) => (f64::NEG_INFINITY, f64::INFINITY, 1e-2),
        };
        lower.push(lo);
        upper.push(hi);
        typical.push(typ);
    }
    ParamSpace { lower, upper, typical }
}

/// Least-squares detection angle for one trace with everything else fixed.
///
/// The detected variance is linear in `(cos 2ψ, sin 2ψ)`:
/// `V = η (m + h cos 2ψ - vxp sin 2ψ) + (1 - η) ½` with `m`, `h` the mean
/// and half-difference of the diagonal.
pub fn initial_angle(params: &FitParams, group: usize, omegas: &[f64], variance: &[f64]) -> f64 {
    let enmo = params.enmo(group);
    let eta = params.eta;
    let (mut saa, mut sab, mut sbb, mut sya, mut syb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&w, &y) in omegas.iter().zip(variance) {
        let s = enmo_covariance_unchecked(&enmo, w);
        let m = 0.5 * (s.vxx + s.vpp);
        let h = 0.5 * (s.vpp - s.vxx);
        // relative weighting, as in the default residual
        let wt = 1.0 / (y * y);
        let a = eta * h;
        let b = -eta * s.vxp;
        let z = y - eta * m - (1.0 - eta) * VACUUM;
        saa += wt * a * a;
        sab += wt * a * b;
        sbb += wt * b * b;
        sya += wt * z * a;
        syb += wt * z * b;
    }
    let det = saa * sbb - sab * sab;
    if !(det.abs() > 0.0) || !det.is_finite() {
        return 0.0;
    }
    let c = (sya * sbb - syb * sab) / det;
    let s = (syb * saa - sya * sab) / det;
    0.5 * s.atan2(c)
}

/// Per-point coefficients of `V(ψ) = a + b cos 2ψ + c sin 2ψ` for trace `t`.
fn angle_coeffs(problem: &Problem, params: &FitParams, t: usize) -> Vec<[f64; 3]> {
    let enmo = params.enmo(problem.group_of[t]);
    let eta = params.eta;
    problem.omegas[t]
        .iter()
        .map(|&w| {
            let s = enmo_covariance_unchecked(&enmo, w);
            [
                eta * 0.5 * (s.vxx + s.vpp) + (1.0 - eta) * VACUUM,
                eta * 0.5 * (s.vpp - s.vxx),
                -eta * s.vxp,
            ]
        })
        .collect()
}

fn angle_cost(problem: &Problem, coeffs: &[[f64; 3]], data: &[f64], psi: f64) -> f64 {
    let (s, c) = (2.0 * psi).sin_cos();
    let sum: f64 = coeffs
        .iter()
        .zip(data)
        .map(|(k, &y)| {
            let r = problem.residual(k[0] + k[1] * c + k[2] * s, y);
            r * r
        })
        .sum();
    0.5 * sum
}

/// One-dimensional damped Gauss-Newton on the angle of a single trace.
fn refine_angle(problem: &Problem, coeffs: &[[f64; 3]], data: &[f64], psi0: f64) -> (f64, f64) {
    let mut psi = psi0;
    let mut cost = angle_cost(problem, coeffs, data, psi);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let (s, c) = (2.0 * psi).sin_cos();
        let (mut g, mut h) = (0.0, 0.0);
        for (k, &y) in coeffs.iter().zip(data) {
            let v = k[0] + k[1] * c + k[2] * s;
            let r = problem.residual(v, y);
            let j = problem.residual_slope(v, y) * (2.0 * k[2] * c - 2.0 * k[1] * s);
            g += j * r;
            h += j * j;
        }
        if !(h > 0.0) || !g.is_finite() {
            break;
        }
        let mut moved = false;
        while lambda < 1e20 {
            let step = -g / (h * (1.0 + lambda));
            let trial = psi + step;
            let ct = angle_cost(problem, coeffs, data, trial);
            if ct < cost {
                psi = trial;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-12);
                moved = step.abs() > 1e-15 * psi.abs().max(1.0);
                break;
            }
            lambda *= 10.0;
        }
        if !moved {
            break;
        }
    }
    (psi, cost)
}

/// Best angle of trace `t` with all other parameters held: the closed-form
/// estimate, its orthogonal partner, the current value and a coarse grid
/// are ranked by cost and the three best are refined.
fn profile_angle(problem: &Problem, params: &FitParams, t: usize) -> f64 {
    let coeffs = angle_coeffs(problem, params, t);
    let data = &problem.data[t];
    let closed = initial_angle(params, problem.group_of[t], &problem.omegas[t], data);
    let mut candidates = vec![params.psi[t], closed, closed + FRAC_PI_2, 0.0, FRAC_PI_2];
    candidates.extend((1..12).map(|k| k as f64 * PI / 12.0));
    let mut ranked: Vec<(f64, f64)> = candidates
        .into_iter()
        .map(|p| (angle_cost(problem, &coeffs, data, p), p))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    ranked
        .iter()
        .take(3)
        .map(|&(_, p)| refine_angle(problem, &coeffs, data, p))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(params.psi[t], |(p, _)| p)
}

fn with_profiled_angles(problem: &Problem, mut params: FitParams) -> FitParams {
    for t in 0..problem.data.len() {
        params.psi[t] = profile_angle(problem, &params, t);
    }
    params
}

/// Detuning of each group from the frequency of its largest variance,
/// keeping the sign of `current`.
fn peak_detunings(data: &TraceSet, current: &[f64]) -> Vec<f64> {
    data.groups()
        .iter()
        .zip(current)
        .map(|(g, &d)| {
            let peak = g
                .traces
                .iter()
                .flat_map(|&t| {
                    let tr = &data.traces[t];
                    tr.frequencies_hz.iter().copied().zip(tr.linear())
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(f, _)| f);
            match peak {
                Some(f) => d.signum() * hz_to_rad(f),
                None => d,
            }
        })
        .collect()
}

/// The fit over shared parameters with every angle profiled out.
struct Profiled(Problem);

impl Residuals for Profiled {
    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let p = with_profiled_angles(&self.0, self.0.params_at(x));
        let mut out = Vec::new();
        for t in 0..self.0.data.len() {
            self.0.trace_residuals(&p, t, &mut out);
        }
        out
    }
}

/// One reported parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamEstimate {
    pub name: String,
    /// Native units: rad/s for rates, radians for angles.
    pub value: f64,
    /// 1σ from the linearized covariance; `None` for fixed parameters.
    pub sigma: Option<f64>,
    pub free: bool,
    pub identifiable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrozenParam {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: FitParams,
    pub estimates: Vec<ParamEstimate>,
    /// Names of the free parameters, ordering the covariance matrix.
    pub free: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub frozen: Vec<FrozenParam>,
    /// Free parameters the data cannot separate.
    pub non_identifiable: Vec<String>,
    /// Per-trace residuals in the chosen residual space.
    pub residuals: Vec<Vec<f64>>,
    pub residual_space: ResidualSpace,
    pub initial_cost: f64,
    pub cost: f64,
    pub dof: usize,
    pub reduced_chi_square: f64,
    pub iterations: usize,
    pub termination: String,
    pub converged: bool,
}

impl FitResult {
    pub fn estimate(&self, name: &str) -> Option<&ParamEstimate> {
        self.estimates.iter().find(|e| e.name == name)
    }
}

/// Fits `init` to `data`.
///
/// `init.delta_a` is used when it has one entry per detuning group, otherwise
/// the trace labels supply the detunings; `init.psi` likewise per trace
/// (zero otherwise). The final cost never exceeds the cost at `init`.
pub fn fit_dataset(data: &TraceSet, init: &FitParams, options: &FitOptions) -> Result<FitResult> {
    let groups = data.groups();
    let group_of = data.group_of();
    let n_traces = data.traces.len();

    let mut base = init.clone();
    if base.delta_a.len() != groups.len() {
        base.delta_a = groups.iter().map(|g| hz_to_rad(g.detuning_hz)).collect();
    }
    let user_angles = base.psi.len() == n_traces;
    if !user_angles {
        base.psi = vec![0.0; n_traces];
    }
    base.validate(groups.len(), n_traces)?;
    if let Some(s) = options.noise_sigma {
        if !(s > 0.0) || !s.is_finite() {
            return Err(EnmoError::InvalidParameter {
                name: "noise_sigma",
                reason: format!("must be positive, got {s}"),
            });
        }
    }

    let omegas: Vec<Vec<f64>> = data
        .traces
        .iter()
        .map(|t| t.frequencies_hz.iter().map(|&f| hz_to_rad(f)).collect())
        .collect();
    let variances: Vec<Vec<f64>> = data.traces.iter().map(|t| t.variance()).collect();

    let mut kinds = vec![
        if base.split_known {
            ParamKind::GDc
        } else {
            ParamKind::GA
        },
        ParamKind::KappaA,
    ];
    kinds.extend((0..groups.len()).map(ParamKind::DeltaA));
    if options.fit_meter {
        kinds.extend([ParamKind::KappaC, ParamKind::DeltaC]);
    }
    if options.free_eta {
        kinds.push(ParamKind::Eta);
    }
    kinds.extend((0..n_traces).map(ParamKind::Psi));

    let mut problem = Problem {
        base: base.clone(),
        kinds,
        omegas,
        data: variances,
        group_of: group_of.clone(),
        space: options.residual_space,
        weight: options.noise_sigma.unwrap_or(1.0),
    };
    let start_cost = half_sum_sq(&problem.residuals(&problem.x0()));

    if options.init_angles {
        let mut starts = vec![base.clone()];
        if options.locate_peaks {
            let mut located = base.clone();
            located.delta_a = peak_detunings(data, &base.delta_a);
            starts.push(located);
        }
        let best = starts
            .into_iter()
            .map(|p| with_profiled_angles(&problem, p))
            .map(|p| (problem.cost_at(&p), p))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("at least one start");
        if best.0 < start_cost || !user_angles {
            problem.base = best.1;
        }
    }

    // freeze parameters the model does not depend on at the start point
    let mut frozen = Vec::new();
    let space = problem.space();
    let j0 = lm::jacobian(&problem, &problem.x0(), &space);
    let scaled: Vec<f64> = (0..problem.kinds.len())
        .map(|i| j0.column(i).norm() * problem.base.get(problem.kinds[i]).abs().max(space.typical[i]))
        .collect();
    let max_norm = scaled.iter().copied().fold(0.0, f64::max);
    let mut keep = Vec::new();
    for (i, &k) in problem.kinds.iter().enumerate() {
        if scaled[i] <= 1e-9 * max_norm {
            frozen.push(FrozenParam {
                name: k.name(),
                reason: "does not affect the model at the starting point".into(),
            });
        } else {
            keep.push(k);
        }
    }
    problem.kinds = keep;

    let cfg = LmConfig {
        max_iterations: options.max_iterations,
        ..LmConfig::default()
    };
    let mut iterations = 0;

    // shared parameters first, angles profiled; then everything jointly
    if options.init_angles {
        let shared: Vec<ParamKind> = problem
            .kinds
            .iter()
            .copied()
            .filter(|k| !matches!(k, ParamKind::Psi(_)))
            .collect();
        let profiled = Profiled(Problem {
            base: problem.base.clone(),
            kinds: shared,
            omegas: problem.omegas.clone(),
            data: problem.data.clone(),
            group_of: problem.group_of.clone(),
            space: problem.space,
            weight: problem.weight,
        });
        let pspace = profiled.0.space();
        let stage = lm::minimize(&profiled, &profiled.0.x0(), &pspace, &cfg);
        iterations += stage.iterations;
        let candidate = with_profiled_angles(&profiled.0, profiled.0.params_at(&stage.x));
        if problem.cost_at(&candidate) < problem.cost_at(&problem.base) {
            problem.base = candidate;
        }
    }

    let space = problem.space();
    let outcome = lm::minimize(&problem, &problem.x0(), &space, &cfg);
    iterations += outcome.iterations;
    let mut params = problem.params_at(&outcome.x);

    let m: usize = problem.data.iter().map(Vec::len).sum();
    let n = problem.kinds.len();
    let dof = m.saturating_sub(n);
    let s2 = if dof > 0 {
        2.0 * outcome.cost / dof as f64
    } else {
        f64::NAN
    };

    let jac = lm::jacobian(&problem, &outcome.x, &space);
    let stats = linear_stats(&jac, &outcome.x, &space.typical, s2);
    let free_names: Vec<String> = problem.kinds.iter().map(ParamKind::name).collect();
    let non_identifiable: Vec<String> = stats.weak.iter().map(|&i| free_names[i].clone()).collect();

    let residuals = problem.per_trace(&params);
    for p in params.psi.iter_mut() {
        *p = canonical_angle(*p);
    }

    let mut estimates = Vec::new();
    let mut all = vec![ParamKind::GA, ParamKind::GBs, ParamKind::GDc, ParamKind::KappaA];
    all.extend((0..groups.len()).map(ParamKind::DeltaA));
    all.extend([ParamKind::KappaC, ParamKind::DeltaC, ParamKind::Eta]);
    all.extend((0..n_traces).map(ParamKind::Psi));
    for k in all {
        let idx = problem.kinds.iter().position(|&q| q == k);
        let mut sigma = idx.map(|i| stats.covariance[(i, i)].sqrt());
        // g_a is carried by g_dc when the split is known, and vice versa
        if base.split_known && matches!(k, ParamKind::GA) {
            sigma = problem
                .kinds
                .iter()
                .position(|&q| q == ParamKind::GDc)
                .map(|i| stats.covariance[(i, i)].sqrt());
        }
        if !base.split_known && matches!(k, ParamKind::GBs | ParamKind::GDc) {
            continue;
        }
        estimates.push(ParamEstimate {
            name: k.name(),
            value: params.get(k),
            free: idx.is_some() || (base.split_known && k == ParamKind::GA),
            identifiable: !non_identifiable.contains(&k.name()) && !frozen.iter().any(|f| f.name == k.name()),
            sigma,
        });
    }

    let reduced_chi_square = s2;
    Ok(FitResult {
        params,
        estimates,
        free: free_names,
        covariance: (0..n)
            .map(|i| (0..n).map(|j| stats.covariance[(i, j)]).collect())
            .collect(),
        singular_values: stats.singular_values,
        frozen,
        non_identifiable,
        residuals,
        residual_space: options.residual_space,
        initial_cost: start_cost,
        cost: outcome.cost,
        dof,
        reduced_chi_square,
        iterations,
        termination: format!("{:?}", outcome.termination),
        converged: outcome.termination.converged(),
    })
}

fn half_sum_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

pub(crate) struct LinearStats {
    pub covariance: DMatrix<f64>,
    /// Singular values of the column-scaled Jacobian, descending.
    pub singular_values: Vec<f64>,
    /// Right singular vectors (scaled coordinates) of the near-null space.
    pub null_vectors: Vec<(f64, DVector<f64>)>,
    /// Parameters with a large component in the near-null space.
    pub weak: Vec<usize>,
}

/// Relative singular-value threshold below which a direction counts as unresolved.
pub(crate) const NULL_TOL: f64 = 1e-8;

/// Covariance `s² (JᵀJ)⁺` and the near-null space of `J`. Columns are scaled
/// to relative changes so singular values compare across units.
pub(crate) fn linear_stats(jac: &DMatrix<f64>, x: &[f64], typical: &[f64], s2: f64) -> LinearStats {
    let n = jac.ncols();
    if n == 0 {
        return LinearStats {
            covariance: DMatrix::zeros(0, 0),
            singular_values: Vec::new(),
            null_vectors: Vec::new(),
            weak: Vec::new(),
        };
    }
    let scale: Vec<f64> = (0..n).map(|i| x[i].abs().max(typical[i])).collect();
    let mut js = jac.clone();
    for (i, &s) in scale.iter().enumerate() {
        js.column_mut(i).scale_mut(s);
    }
    let svd = js.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);

    let mut cov_s = DMatrix::zeros(n, n);
    let mut null_vectors = Vec::new();
    let mut weak = Vec::new();
    for &k in &order {
        let s = svd.singular_values[k];
        let v = v_t.row(k).transpose();
        if s > NULL_TOL * smax {
            cov_s += (&v * v.transpose()) / (s * s);
        } else {
            for i in 0..n {
                if v[i].abs() > 0.1 && !weak.contains(&i) {
                    weak.push(i);
                }
            }
            null_vectors.push((s, v));
        }
    }
    // rank-deficient columns of a tall J also show up when m < n
    let covariance = DMatrix::from_fn(n, n, |i, j| s2 * cov_s[(i, j)] * scale[i] * scale[j]);
    weak.sort_unstable();
    LinearStats {
        covariance,
        singular_values: order.iter().map(|&k| svd.singular_values[k]).collect(),
        null_vectors,
        weak,
    }
}
