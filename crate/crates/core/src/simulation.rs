//! Fixed-step integration of the single-integrator dynamics and the
//! diagnostics built on trajectories: energy decay statistics, manifold
//! residuals, finite-difference Hessian spectra, and the perturbation
//! sweep comparing controllers over distorted references.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::baselines::{
    bearing_control, bearing_potential, derive_constraints, distance_control,
    distance_potential, rod_control, rod_potential, EdgeConstraintSet,
};
use crate::controller::{
    local_frame_control, total_control, total_control_mixed, total_energy_mixed, ForceField,
    LocalFrames,
};
use crate::deformation::{rotation_fit, EnergyMode};
use crate::error::{Error, Result};
use crate::geometry::{build_complex, Configuration, SimplicialComplex};
use crate::scenario::{randomized_initial, IntegrationMethod, Scenario};

/// A velocity-command law bound to a formation's structural data.
pub trait Controller {
    fn label(&self) -> String;
    fn control(&self, config: &Configuration) -> Result<ForceField>;
    /// The potential whose negative gradient [`Controller::control`]
    /// returns; recorded as `V(p(t))` along trajectories.
    fn potential(&self, config: &Configuration) -> Result<f64>;
}

/// Element-based controller with one energy mode per element.
#[derive(Debug, Clone)]
pub struct ElementController {
    pub complex: SimplicialComplex,
    pub modes: Vec<EnergyMode>,
    label: String,
}

impl ElementController {
    pub fn new(complex: SimplicialComplex, mode: EnergyMode) -> Self {
        let modes = vec![mode.clone(); complex.elements.len()];
        let label = format!("element:{}", mode.tag());
        Self {
            complex,
            modes,
            label,
        }
    }

    /// Takes the mode and per-element external overrides from a scenario.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let mut controller = Self::new(scenario.complex.clone(), scenario.mode.clone());
        if !scenario.external_elements.is_empty() {
            controller.modes = scenario.element_modes();
        }
        controller
    }
}

impl Controller for ElementController {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn control(&self, config: &Configuration) -> Result<ForceField> {
        total_control_mixed(config, &self.complex, &self.modes)
    }

    fn potential(&self, config: &Configuration) -> Result<f64> {
        total_energy_mixed(config, &self.complex, &self.modes)
    }
}

/// Element controller evaluated through per-agent body frames; must
/// reproduce the global-frame trajectories for the isotropic modes.
#[derive(Debug, Clone)]
pub struct LocalFrameController {
    pub complex: SimplicialComplex,
    pub mode: EnergyMode,
    pub frames: LocalFrames,
}

impl Controller for LocalFrameController {
    fn label(&self) -> String {
        format!("element-local:{}", self.mode.tag())
    }

    fn control(&self, config: &Configuration) -> Result<ForceField> {
        local_frame_control(config, &self.complex, &self.mode, &self.frames)
    }

    fn potential(&self, config: &Configuration) -> Result<f64> {
        crate::controller::total_energy(config, &self.complex, &self.mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Distance,
    Bearing,
    Rod,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Distance => "distance",
            BaselineKind::Bearing => "bearing",
            BaselineKind::Rod => "rod",
        }
    }
}

/// Rigidity-based baseline controller under a shared gain.
#[derive(Debug, Clone)]
pub struct BaselineController {
    pub kind: BaselineKind,
    pub constraints: EdgeConstraintSet,
    pub gain: f64,
}

impl BaselineController {
    pub fn new(kind: BaselineKind, constraints: EdgeConstraintSet) -> Self {
        Self {
            kind,
            constraints,
            gain: 1.0,
        }
    }
}

impl Controller for BaselineController {
    fn label(&self) -> String {
        self.kind.name().to_string()
    }

    fn control(&self, config: &Configuration) -> Result<ForceField> {
        let mut field = match self.kind {
            BaselineKind::Distance => distance_control(config, &self.constraints)?,
            BaselineKind::Bearing => bearing_control(config, &self.constraints)?,
            BaselineKind::Rod => rod_control(config, &self.constraints)?,
        };
        field.scale(self.gain);
        Ok(field)
    }

    fn potential(&self, config: &Configuration) -> Result<f64> {
        let v = match self.kind {
            BaselineKind::Distance => distance_potential(config, &self.constraints),
            BaselineKind::Bearing => bearing_potential(config, &self.constraints),
            BaselineKind::Rod => rod_potential(config, &self.constraints)?,
        };
        Ok(self.gain * v)
    }
}

/// Controller selection for CLI flags and sweeps.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    Element(EnergyMode),
    Distance,
    Bearing,
    Rod,
}

impl ControllerSpec {
    pub fn label(&self) -> String {
        match self {
            ControllerSpec::Element(mode) => format!("element:{}", mode.tag()),
            ControllerSpec::Distance => "distance".into(),
            ControllerSpec::Bearing => "bearing".into(),
            ControllerSpec::Rod => "rod".into(),
        }
    }

    /// Binds the spec to a concrete mesh, deriving baseline constraints
    /// from the reference when needed.
    pub fn bind(
        &self,
        reference: &Configuration,
        complex: &SimplicialComplex,
        gain: f64,
    ) -> Result<Box<dyn Controller>> {
        Ok(match self {
            ControllerSpec::Element(mode) => {
                Box::new(ElementController::new(complex.clone(), mode.clone()))
            }
            ControllerSpec::Distance => Box::new(BaselineController {
                kind: BaselineKind::Distance,
                constraints: derive_constraints(reference, complex)?,
                gain,
            }),
            ControllerSpec::Bearing => Box::new(BaselineController {
                kind: BaselineKind::Bearing,
                constraints: derive_constraints(reference, complex)?,
                gain,
            }),
            ControllerSpec::Rod => Box::new(BaselineController {
                kind: BaselineKind::Rod,
                constraints: derive_constraints(reference, complex)?,
                gain,
            }),
        })
    }
}

/// Time-indexed states with the recorded potential.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Configuration>,
    pub energies: Vec<f64>,
    pub controller: String,
}

impl Trajectory {
    pub fn final_state(&self) -> &Configuration {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

/// Stability-based default step: `0.5 / (2 Σ_e w_e ||S_ref⁻¹||²_F)`, an
/// estimate of half the inverse spectral bound of the assembled stiffness.
pub fn default_dt(complex: &SimplicialComplex) -> f64 {
    let stiffness_bound: f64 = complex
        .elements
        .iter()
        .map(|e| e.weight * e.ref_shape_inv.norm_squared())
        .sum::<f64>()
        * 2.0;
    0.5 / stiffness_bound.max(1e-12)
}

/// Fixed-step integration of `ṗ = u(p)` from the scenario's initial state.
/// Clamped leaders (when the scenario asks for them) have their velocity
/// zeroed. Deterministic given the scenario seed.
pub fn integrate(
    scenario: &Scenario,
    controller: &dyn Controller,
    dt: f64,
    t_end: f64,
    method: IntegrationMethod,
) -> Result<Trajectory> {
    assert!(dt > 0.0 && t_end >= dt, "dt > 0 and t_end >= dt required");
    let clamped: Option<&BTreeSet<usize>> = if scenario.clamp_leaders {
        scenario.leaders.as_ref()
    } else {
        None
    };
    let dim = scenario.initial.dim();

    let velocity = |config: &Configuration| -> Result<DVector<f64>> {
        let mut field = controller.control(config)?;
        if let Some(ids) = clamped {
            for &i in ids {
                field.add_to(i, &(-field.force(i).clone()));
            }
        }
        Ok(field.to_flat())
    };

    let steps = (t_end / dt).ceil() as usize;
    let mut state = scenario.initial.to_flat();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut energies = Vec::with_capacity(steps + 1);

    let record = |t: f64,
                  flat: &DVector<f64>,
                  times: &mut Vec<f64>,
                  states: &mut Vec<Configuration>,
                  energies: &mut Vec<f64>|
     -> Result<()> {
        if !flat.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteState { t });
        }
        let config = Configuration::from_flat(dim, flat)?;
        energies.push(controller.potential(&config)?);
        states.push(config);
        times.push(t);
        Ok(())
    };

    record(0.0, &state, &mut times, &mut states, &mut energies)?;
    for step in 0..steps {
        let t = step as f64 * dt;
        match method {
            IntegrationMethod::Euler => {
                let k1 = velocity(&Configuration::from_flat(dim, &state)?)?;
                state += k1 * dt;
            }
            IntegrationMethod::Rk4 => {
                let k1 = velocity(&Configuration::from_flat(dim, &state)?)?;
                let k2 = velocity(&Configuration::from_flat(dim, &(&state + &k1 * (dt / 2.0)))?)?;
                let k3 = velocity(&Configuration::from_flat(dim, &(&state + &k2 * (dt / 2.0)))?)?;
                let k4 = velocity(&Configuration::from_flat(dim, &(&state + &k3 * dt))?)?;
                state += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            }
        }
        record(t + dt, &state, &mut times, &mut states, &mut energies)?;
    }

    Ok(Trajectory {
        times,
        states,
        energies,
        controller: controller.label(),
    })
}

/// Least-squares residual (mean squared per agent) between `p` and the
/// orbit of `q` under the mode's transformation group.
///
/// The Dirichlet and external modes fit a full affine map, matching the
/// harmonic/affine equilibria they converge to.
pub fn manifold_residual(
    p: &Configuration,
    q: &Configuration,
    mode: &EnergyMode,
) -> Result<f64> {
    Ok(manifold_fit(p, q, mode)?.residual)
}

/// Detailed manifold fit, including the similarity-scale clamp flag.
#[derive(Debug, Clone, Copy)]
pub struct ManifoldFit {
    pub residual: f64,
    /// Set when the similarity fit produced a non-positive scale and the
    /// residual was evaluated at the `s → 0⁺` boundary.
    pub scale_clamped: bool,
}

pub fn manifold_fit(p: &Configuration, q: &Configuration, mode: &EnergyMode) -> Result<ManifoldFit> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), got: p.dim() });
    }
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: q.len(), got: p.len() });
    }
    let n = p.len();
    let d = p.dim();
    let pc = p.centroid();
    let qc = q.centroid();
    let p_tilde: Vec<DVector<f64>> = p.positions().iter().map(|x| x - &pc).collect();
    let q_tilde: Vec<DVector<f64>> = q.positions().iter().map(|x| x - &qc).collect();
    let q_var: f64 = q_tilde.iter().map(|x| x.norm_squared()).sum();
    if q_var < 1e-30 {
        return Err(Error::DegenerateFit);
    }

    let mean_sq = |pairs: &dyn Fn(usize) -> DVector<f64>| -> f64 {
        (0..n).map(|i| pairs(i).norm_squared()).sum::<f64>() / n as f64
    };

    let mut scale_clamped = false;
    let residual = match mode {
        EnergyMode::Translation => mean_sq(&|i| &p_tilde[i] - &q_tilde[i]),
        EnergyMode::Rotation => {
            let mut h = DMatrix::zeros(d, d);
            for i in 0..n {
                h += &p_tilde[i] * q_tilde[i].transpose();
            }
            let r = rotation_fit(&h).rotation;
            mean_sq(&|i| &p_tilde[i] - &r * &q_tilde[i])
        }
        EnergyMode::Scaling => {
            let s: f64 =
                (0..n).map(|i| p_tilde[i].dot(&q_tilde[i])).sum::<f64>() / q_var;
            mean_sq(&|i| &p_tilde[i] - &q_tilde[i] * s)
        }
        EnergyMode::Similarity => {
            let mut h = DMatrix::zeros(d, d);
            for i in 0..n {
                h += &p_tilde[i] * q_tilde[i].transpose();
            }
            let r = rotation_fit(&h).rotation;
            let s = (r.transpose() * &h).trace() / q_var;
            if s <= 0.0 {
                scale_clamped = true;
                mean_sq(&|i| p_tilde[i].clone())
            } else {
                mean_sq(&|i| &p_tilde[i] - &r * &q_tilde[i] * s)
            }
        }
        EnergyMode::Dirichlet | EnergyMode::External(_) => {
            // Full affine fit: A = (Σ p̃ q̃ᵀ)(Σ q̃ q̃ᵀ)⁻¹.
            let mut h = DMatrix::zeros(d, d);
            let mut g = DMatrix::zeros(d, d);
            for i in 0..n {
                h += &p_tilde[i] * q_tilde[i].transpose();
                g += &q_tilde[i] * q_tilde[i].transpose();
            }
            let g_inv = g.try_inverse().ok_or(Error::DegenerateFit)?;
            let a = h * g_inv;
            mean_sq(&|i| &p_tilde[i] - &a * &q_tilde[i])
        }
    };
    Ok(ManifoldFit {
        residual,
        scale_clamped,
    })
}

/// Statistics of the log-energy decay slope over the active phase.
#[derive(Debug, Clone, Copy)]
pub struct CovReport {
    pub mean_slope: f64,
    pub std_slope: f64,
    pub cov: f64,
    /// Inclusive index range of the active phase.
    pub active_range: (usize, usize),
}

/// Coefficient of variation of `∇_t log V` over the active phase: the
/// steps from the start until `V` first drops below `floor_ratio · V(0)`
/// (the whole trajectory if it never does). Slopes are central differences
/// on the uniform time grid.
pub fn cov_metric(trajectory: &Trajectory, floor_ratio: f64) -> Result<CovReport> {
    let v = &trajectory.energies;
    let t = &trajectory.times;
    if v.is_empty() {
        return Err(Error::UndefinedCov("empty trajectory".into()));
    }
    let floor = floor_ratio * v[0];
    let mut end = v.len() - 1;
    for (k, &value) in v.iter().enumerate() {
        if value < floor {
            end = k;
            break;
        }
    }
    if end + 1 < 3 {
        return Err(Error::UndefinedCov(format!(
            "active phase has {} samples, need at least 3",
            end + 1
        )));
    }
    if v[..=end].iter().any(|&x| x <= 0.0) {
        return Err(Error::UndefinedCov(
            "energy is non-positive inside the active phase".into(),
        ));
    }

    let slopes: Vec<f64> = (1..end)
        .map(|k| (v[k + 1].ln() - v[k - 1].ln()) / (t[k + 1] - t[k - 1]))
        .collect();
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    if mean == 0.0 {
        return Err(Error::UndefinedCov("mean slope is zero".into()));
    }
    let var = slopes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / slopes.len() as f64;
    let std = var.sqrt();
    Ok(CovReport {
        mean_slope: mean,
        std_slope: std,
        cov: std / mean.abs(),
        active_range: (0, end),
    })
}

/// Coefficient of determination of the least-squares line through
/// `(t, log V)` over the active phase; near 1 for exponential decay.
pub fn log_energy_fit_r2(trajectory: &Trajectory, floor_ratio: f64) -> Result<f64> {
    let report = cov_metric(trajectory, floor_ratio)?;
    let end = report.active_range.1;
    let xs = &trajectory.times[..=end];
    let ys: Vec<f64> = trajectory.energies[..=end].iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    let syy: f64 = ys.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCov("degenerate fit data".into()));
    }
    Ok((sxy * sxy) / (sxx * syy))
}

/// Eigenvalues and null-space dimension of the finite-difference Hessian
/// of `V` at the reference equilibrium.
#[derive(Debug, Clone)]
pub struct HessianReport {
    pub eigenvalues: Vec<f64>,
    pub null_dim: usize,
}

/// Central-difference Hessian of the element energy at the scenario's
/// reference (step `1e-5 ×` mesh scale), counting `|λ| < tol_ratio · max|λ|`
/// as null directions.
pub fn hessian_null_dim(
    scenario: &Scenario,
    mode: &EnergyMode,
    tol_ratio: f64,
) -> Result<HessianReport> {
    let q = &scenario.reference;
    let complex = &scenario.complex;
    let gradient = |config: &Configuration| -> Result<DVector<f64>> {
        Ok(-total_control(config, complex, mode)?.to_flat())
    };
    let g0 = gradient(q)?;
    if g0.norm() > 1e-8 {
        return Err(Error::NotEquilibrium { gradient_norm: g0.norm() });
    }

    let dim = q.dim();
    let n = q.len() * dim;
    let h = 1e-5 * q.mesh_scale(complex);
    let flat = q.to_flat();
    let mut hessian = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[k] += h;
        minus[k] -= h;
        let gp = gradient(&Configuration::from_flat(dim, &plus)?)?;
        let gm = gradient(&Configuration::from_flat(dim, &minus)?)?;
        hessian.column_mut(k).copy_from(&((gp - gm) / (2.0 * h)));
    }
    let symmetric = (&hessian + hessian.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = symmetric.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let max_abs = eigenvalues.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let null_dim = eigenvalues
        .iter()
        .filter(|&&x| x.abs() < tol_ratio * max_abs)
        .count();
    Ok(HessianReport {
        eigenvalues,
        null_dim,
    })
}

/// Grid over which the designated node's reference position is moved.
#[derive(Debug, Clone, Copy)]
pub struct SweepGrid {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl SweepGrid {
    pub fn points(&self) -> Vec<(f64, f64)> {
        let lin = |range: (f64, f64), n: usize, k: usize| {
            if n == 1 {
                0.5 * (range.0 + range.1)
            } else {
                range.0 + (range.1 - range.0) * k as f64 / (n - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                out.push((lin(self.x_range, self.nx, ix), lin(self.y_range, self.ny, iy)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepStatus {
    Ok,
    DegenerateReference,
    Diverged,
    UndefinedCov,
}

impl SweepStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SweepStatus::Ok => "ok",
            SweepStatus::DegenerateReference => "degenerate",
            SweepStatus::Diverged => "diverged",
            SweepStatus::UndefinedCov => "undefined",
        }
    }
}

/// One (grid point, controller) outcome.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub grid_x: f64,
    pub grid_y: f64,
    pub controller: String,
    pub cov: Option<f64>,
    pub status: SweepStatus,
}

/// Moves `node`'s reference position across the grid; for each cell,
/// rebuilds the complex and constraints, draws the common initial state
/// from the scenario seed, and records each controller's CoV. Per-cell
/// failures are recorded, not raised. Cells run in parallel and results
/// are keyed by grid order.
pub fn perturbation_sweep(
    base: &Scenario,
    node: usize,
    grid: &SweepGrid,
    controllers: &[ControllerSpec],
    floor_ratio: f64,
    gain: f64,
) -> Vec<SweepCell> {
    assert_eq!(base.reference.dim(), 2, "perturbation sweep is 2D");
    assert!(node < base.reference.len(), "node index in range");
    let element_lists: Vec<Vec<usize>> = base
        .complex
        .elements
        .iter()
        .map(|e| e.vertices.clone())
        .collect();

    let cells: Vec<Vec<SweepCell>> = grid
        .points()
        .par_iter()
        .map(|&(x, y)| {
            let mut rows: Vec<Vec<f64>> = base
                .reference
                .positions()
                .iter()
                .map(|p| p.iter().copied().collect())
                .collect();
            rows[node] = vec![x, y];
            let made = Configuration::from_rows(2, &rows).and_then(|reference| {
                build_complex(2, reference.len(), &element_lists, &reference)
                    .map(|complex| (reference, complex))
            });
            let (reference, complex) = match made {
                Ok(pair) => pair,
                Err(_) => {
                    return controllers
                        .iter()
                        .map(|spec| SweepCell {
                            grid_x: x,
                            grid_y: y,
                            controller: spec.label(),
                            cov: None,
                            status: SweepStatus::DegenerateReference,
                        })
                        .collect();
                }
            };
            let initial = randomized_initial(&reference, &complex, base.seed);
            let dt = base.integrator.dt.unwrap_or_else(|| default_dt(&complex));
            let scenario = Scenario {
                name: format!("sweep@({x:.3},{y:.3})"),
                reference: reference.clone(),
                complex: complex.clone(),
                initial,
                mode: base.mode.clone(),
                external_elements: Vec::new(),
                leaders: None,
                clamp_leaders: false,
                integrator: base.integrator,
                seed: base.seed,
            };

            controllers
                .iter()
                .map(|spec| {
                    let outcome = spec
                        .bind(&reference, &complex, gain)
                        .and_then(|controller| {
                            integrate(
                                &scenario,
                                controller.as_ref(),
                                dt,
                                base.integrator.t_end,
                                base.integrator.method,
                            )
                        });
                    let (cov, status) = match outcome {
                        Err(_) => (None, SweepStatus::Diverged),
                        Ok(trajectory) => match cov_metric(&trajectory, floor_ratio) {
                            Ok(report) => (Some(report.cov), SweepStatus::Ok),
                            Err(_) => (None, SweepStatus::UndefinedCov),
                        },
                    };
                    SweepCell {
                        grid_x: x,
                        grid_y: y,
                        controller: spec.label(),
                        cov,
                        status,
                    }
                })
                .collect()
        })
        .collect();

    cells.into_iter().flatten().collect()
}

/// Median of the defined values; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 0 {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    })
}
