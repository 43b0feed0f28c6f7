//! Distributed controllers assembled from per-element stresses.
//!
//! For an element with stress `P = ∂Ψ/∂F` the chain rule through
//! `F = S · S_ref⁻¹` gives per-vertex gradients as columns of
//! `M = w_e · P · S_ref⁻ᵀ`: vertex `e_j` (j ≥ 1) receives force `-M[:,j]`
//! and the root `e_0` receives `+Σ_j M[:,j]`. Every controller here is the
//! exact negative gradient of its potential, so per-element forces sum to
//! zero and the formation centroid is stationary.

use nalgebra::{DMatrix, DVector};

use crate::deformation::{deformation_gradient, stress, EnergyMode};
use crate::error::{Error, Result};
use crate::geometry::{shape_matrix, Configuration, Element, SimplicialComplex};

/// Per-agent velocity commands for single-integrator dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceField {
    dim: usize,
    forces: Vec<DVector<f64>>,
}

impl ForceField {
    pub fn zeros(dim: usize, num_agents: usize) -> Self {
        Self {
            dim,
            forces: vec![DVector::zeros(dim); num_agents],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.forces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forces.is_empty()
    }

    pub fn force(&self, agent: usize) -> &DVector<f64> {
        &self.forces[agent]
    }

    pub fn add_to(&mut self, agent: usize, contribution: &DVector<f64>) {
        self.forces[agent] += contribution;
    }

    /// Net force over all agents; zero for every gradient controller whose
    /// potential depends only on relative positions.
    pub fn sum(&self) -> DVector<f64> {
        let mut total = DVector::zeros(self.dim);
        for f in &self.forces {
            total += f;
        }
        total
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim * self.forces.len());
        for (i, f) in self.forces.iter().enumerate() {
            out.rows_mut(i * self.dim, self.dim).copy_from(f);
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for f in &mut self.forces {
            *f *= factor;
        }
    }

    pub fn norm(&self) -> f64 {
        self.forces.iter().map(|f| f.norm_squared()).sum::<f64>().sqrt()
    }
}

/// Per-agent rotations from the global frame into each agent's body frame.
#[derive(Debug, Clone)]
pub struct LocalFrames {
    frames: Vec<DMatrix<f64>>,
}

impl LocalFrames {
    /// Validates every frame against SO(d) within 1e-10.
    pub fn new(frames: Vec<DMatrix<f64>>) -> Result<Self> {
        for (agent, q) in frames.iter().enumerate() {
            let d = q.nrows();
            let ortho = (q.transpose() * q - DMatrix::identity(d, d)).norm();
            let det = (q.determinant() - 1.0).abs();
            let residual = ortho.max(det);
            if residual > 1e-10 {
                return Err(Error::NonRotationFrame { agent, residual });
            }
        }
        Ok(Self { frames })
    }

    pub fn identity(dim: usize, num_agents: usize) -> Self {
        Self {
            frames: vec![DMatrix::identity(dim, dim); num_agents],
        }
    }

    pub fn frame(&self, agent: usize) -> &DMatrix<f64> {
        &self.frames[agent]
    }
}

/// Forces the element exerts on its own vertices, in vertex-list order.
pub fn element_forces(
    config: &Configuration,
    element: &Element,
    mode: &EnergyMode,
) -> Result<Vec<(usize, DVector<f64>)>> {
    let s = shape_matrix(config, element);
    let f = deformation_gradient(&s, &element.ref_shape_inv);
    let p = stress(&f.matrix, mode)?;
    element_forces_from_stress(element, &(p * element.weight))
}

/// Distributes a (pre-weighted) stress to vertex forces through
/// `M = P_w · S_ref⁻ᵀ`.
fn element_forces_from_stress(
    element: &Element,
    weighted_stress: &DMatrix<f64>,
) -> Result<Vec<(usize, DVector<f64>)>> {
    let d = element.dim();
    let m = weighted_stress * element.ref_shape_inv.transpose();
    let mut out = Vec::with_capacity(d + 1);
    let mut root = DVector::zeros(d);
    out.push((element.vertices[0], DVector::zeros(d)));
    for j in 1..=d {
        let col = m.column(j - 1).clone_owned();
        root += &col;
        out.push((element.vertices[j], -col));
    }
    out[0].1 = root;
    Ok(out)
}

/// Total distortion energy `V(p) = Σ_e w_e Ψ(F_e)`.
pub fn total_energy(
    config: &Configuration,
    complex: &SimplicialComplex,
    mode: &EnergyMode,
) -> Result<f64> {
    let modes = vec![mode.clone(); complex.elements.len()];
    total_energy_mixed(config, complex, &modes)
}

/// Total energy with one mode per element (external-target overrides).
pub fn total_energy_mixed(
    config: &Configuration,
    complex: &SimplicialComplex,
    modes: &[EnergyMode],
) -> Result<f64> {
    let mut v = 0.0;
    for (element, mode) in complex.elements.iter().zip(modes) {
        let s = shape_matrix(config, element);
        let f = deformation_gradient(&s, &element.ref_shape_inv);
        v += element.weight * f.energy_density(mode)?;
    }
    Ok(v)
}

/// Negative gradient of the total energy, summed over elements in fixed
/// order.
pub fn total_control(
    config: &Configuration,
    complex: &SimplicialComplex,
    mode: &EnergyMode,
) -> Result<ForceField> {
    let modes = vec![mode.clone(); complex.elements.len()];
    total_control_mixed(config, complex, &modes)
}

/// Control field with one mode per element.
pub fn total_control_mixed(
    config: &Configuration,
    complex: &SimplicialComplex,
    modes: &[EnergyMode],
) -> Result<ForceField> {
    let mut field = ForceField::zeros(config.dim(), config.len());
    for (element, mode) in complex.elements.iter().zip(modes) {
        for (agent, force) in element_forces(config, element, mode)? {
            field.add_to(agent, &force);
        }
    }
    Ok(field)
}

/// Evaluates the control law through each agent's own body frame and maps
/// the result back to the global frame.
///
/// For the isotropic energies the stress transforms covariantly
/// (`P(Q F) = Q P(F)`), so this must match [`total_control`] to 1e-10; it
/// exists to exercise that covariance chain. Restricted to the rotation and
/// similarity modes.
pub fn local_frame_control(
    config: &Configuration,
    complex: &SimplicialComplex,
    mode: &EnergyMode,
    frames: &LocalFrames,
) -> Result<ForceField> {
    if !matches!(mode, EnergyMode::Rotation | EnergyMode::Similarity) {
        return Err(Error::ProjectionUndefined(format!(
            "local-frame evaluation requires an isotropic rotation/similarity mode, got {}",
            mode.tag()
        )));
    }
    local_frame_control_unchecked(config, complex, mode, frames)
}

/// Same evaluation without the isotropy guard; used to demonstrate that the
/// translation mode is *not* frame-independent.
pub fn local_frame_control_unchecked(
    config: &Configuration,
    complex: &SimplicialComplex,
    mode: &EnergyMode,
    frames: &LocalFrames,
) -> Result<ForceField> {
    let mut field = ForceField::zeros(config.dim(), config.len());
    let d = config.dim();
    for element in &complex.elements {
        let s = shape_matrix(config, element);
        for (v, &agent) in element.vertices.iter().enumerate() {
            let q = frames.frame(agent);
            // Shape matrix as measured in this agent's body frame.
            let s_local = q * &s;
            let f_local = deformation_gradient(&s_local, &element.ref_shape_inv);
            let p = stress(&f_local.matrix, mode)?;
            let m = p * element.weight * element.ref_shape_inv.transpose();
            let local_force = if v == 0 {
                let mut root = DVector::zeros(d);
                for j in 0..d {
                    root += m.column(j);
                }
                root
            } else {
                -m.column(v - 1).clone_owned()
            };
            field.add_to(agent, &(q.transpose() * local_force));
        }
    }
    Ok(field)
}

/// Energy coupling neighboring elements through their deformation
/// gradients: `κ Σ_{(a,b) ∈ dual edges} ||F_a - F_b||²_F`.
pub fn strain_coupling_energy(
    config: &Configuration,
    complex: &SimplicialComplex,
    kappa: f64,
) -> f64 {
    let gradients: Vec<DMatrix<f64>> = complex
        .elements
        .iter()
        .map(|e| deformation_gradient(&shape_matrix(config, e), &e.ref_shape_inv).matrix)
        .collect();
    complex
        .dual_edges
        .iter()
        .map(|&(a, b)| kappa * (&gradients[a] - &gradients[b]).norm_squared())
        .sum()
}

/// Negative gradient of [`strain_coupling_energy`], assembled per dual
/// edge through the same shape-matrix chain rule.
pub fn strain_coupling_force(
    config: &Configuration,
    complex: &SimplicialComplex,
    kappa: f64,
) -> Result<ForceField> {
    let mut field = ForceField::zeros(config.dim(), config.len());
    if kappa == 0.0 {
        return Ok(field);
    }
    let gradients: Vec<DMatrix<f64>> = complex
        .elements
        .iter()
        .map(|e| deformation_gradient(&shape_matrix(config, e), &e.ref_shape_inv).matrix)
        .collect();
    for &(a, b) in &complex.dual_edges {
        let diff = (&gradients[a] - &gradients[b]) * (2.0 * kappa);
        for (agent, force) in element_forces_from_stress(&complex.elements[a], &diff)? {
            field.add_to(agent, &force);
        }
        for (agent, force) in element_forces_from_stress(&complex.elements[b], &(-&diff))? {
            field.add_to(agent, &force);
        }
    }
    Ok(field)
}
