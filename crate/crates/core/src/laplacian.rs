//! Element stiffness matrices, the global Laplacian, leader-follower
//! harmonic solves, and stabilizing weight design.
//!
//! The Dirichlet energy of a weighted complex is a quadratic form: with
//! `K_e = w_e (S_refᵀ S_ref)⁻¹` and `B = [-1_d | I_d]`, each element
//! contributes the local stiffness `L_e = Bᵀ K_e B`, and the assembled
//! `N×N` matrix `L` satisfies `Σ_e w_e ||F_e||²_F = Σ_axes p_axisᵀ L p_axis`.
//! Row sums of every `L_e` vanish, so `L·1 = 0` for any weights.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{Configuration, Element, SimplicialComplex};

/// Condition-number bound above which the follower block is treated as
/// singular.
const MAX_CONDITION: f64 = 1e12;

/// Relative eigenvalue threshold for the equilibrium null space.
const NULLSPACE_REL_TOL: f64 = 1e-10;

/// Iteration cap for the projected subgradient ascent.
const MAX_ASCENT_ITERS: usize = 5000;

/// Number of random restarts for the ascent.
const RESTARTS: usize = 10;

/// Local stiffness `L_e = Bᵀ K_e B` at the element's own weight.
pub fn local_stiffness(element: &Element) -> DMatrix<f64> {
    local_stiffness_with_weight(element, element.weight)
}

/// Local stiffness with an explicit weight (unit weight gives the basis
/// matrix used by weight design).
pub fn local_stiffness_with_weight(element: &Element, weight: f64) -> DMatrix<f64> {
    let d = element.dim();
    let k = (element.ref_shape.transpose() * &element.ref_shape)
        .try_inverse()
        .expect("reference shape is non-degenerate")
        * weight;
    let mut b = DMatrix::zeros(d, d + 1);
    for row in 0..d {
        b[(row, 0)] = -1.0;
        b[(row, row + 1)] = 1.0;
    }
    b.transpose() * k * b
}

/// Per-element unit-weight stiffness matrices with their global index maps.
#[derive(Debug, Clone)]
pub struct StiffnessBasis {
    pub num_agents: usize,
    /// `(d+1)×(d+1)` matrices at unit weight, one per element.
    pub local: Vec<DMatrix<f64>>,
    /// Element-local to global agent indices.
    pub index_maps: Vec<Vec<usize>>,
}

impl StiffnessBasis {
    pub fn new(complex: &SimplicialComplex) -> Self {
        Self {
            num_agents: complex.num_agents,
            local: complex
                .elements
                .iter()
                .map(|e| local_stiffness_with_weight(e, 1.0))
                .collect(),
            index_maps: complex.elements.iter().map(|e| e.vertices.clone()).collect(),
        }
    }

    /// Embeds one element's unit-weight stiffness into the `N×N` frame.
    pub fn embedded(&self, element: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.num_agents, self.num_agents);
        let map = &self.index_maps[element];
        let local = &self.local[element];
        for (a, &ga) in map.iter().enumerate() {
            for (b, &gb) in map.iter().enumerate() {
                out[(ga, gb)] += local[(a, b)];
            }
        }
        out
    }
}

/// Assembled `N×N` Laplacian for a weight vector.
#[derive(Debug, Clone)]
pub struct GlobalStiffness {
    pub matrix: DMatrix<f64>,
    pub weights: Vec<f64>,
}

/// `L_uv = Σ_{e: u,v ∈ e} w_e (L̂_e)_uv`; negative weights are allowed
/// (expansive elements).
pub fn assemble_global(complex: &SimplicialComplex, weights: &[f64]) -> GlobalStiffness {
    assert_eq!(weights.len(), complex.elements.len(), "one weight per element");
    let n = complex.num_agents;
    let mut matrix = DMatrix::zeros(n, n);
    for (element, &w) in complex.elements.iter().zip(weights) {
        let local = local_stiffness_with_weight(element, w);
        for (a, &ga) in element.vertices.iter().enumerate() {
            for (b, &gb) in element.vertices.iter().enumerate() {
                matrix[(ga, gb)] += local[(a, b)];
            }
        }
    }
    GlobalStiffness {
        matrix,
        weights: weights.to_vec(),
    }
}

/// Both sides of the Dirichlet identity.
#[derive(Debug, Clone, Copy)]
pub struct DirichletCheck {
    pub energy_sum: f64,
    pub quadratic_form: f64,
    pub abs_err: f64,
}

/// Compares `Σ_e w_e ||F_e||²_F` against `Σ_axes p_axisᵀ L(w) p_axis`.
pub fn dirichlet_equivalence(
    config: &Configuration,
    complex: &SimplicialComplex,
    weights: &[f64],
) -> DirichletCheck {
    use crate::deformation::deformation_gradient;
    use crate::geometry::shape_matrix;

    let mut energy_sum = 0.0;
    for (element, &w) in complex.elements.iter().zip(weights) {
        let f = deformation_gradient(&shape_matrix(config, element), &element.ref_shape_inv);
        energy_sum += w * f.matrix.norm_squared();
    }

    let stiffness = assemble_global(complex, weights);
    let mut quadratic_form = 0.0;
    for axis in 0..config.dim() {
        let coords = DVector::from_fn(config.len(), |i, _| config.position(i)[axis]);
        quadratic_form += coords.dot(&(&stiffness.matrix * &coords));
    }

    DirichletCheck {
        energy_sum,
        quadratic_form,
        abs_err: (energy_sum - quadratic_form).abs(),
    }
}

fn follower_indices(num_agents: usize, leaders: &BTreeSet<usize>) -> Vec<usize> {
    (0..num_agents).filter(|i| !leaders.contains(i)).collect()
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Smallest eigenvalue of the follower block `L_FF`; `+∞` when every agent
/// is a leader.
pub fn margin(stiffness: &GlobalStiffness, leaders: &BTreeSet<usize>) -> f64 {
    let followers = follower_indices(stiffness.matrix.nrows(), leaders);
    if followers.is_empty() {
        return f64::INFINITY;
    }
    let ff = submatrix(&stiffness.matrix, &followers, &followers);
    let sym = (&ff + ff.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Solves the follower equilibrium `L_FF p_F = -L_FL p_L` per coordinate
/// axis. Returns follower positions in ascending agent order.
pub fn harmonic_solve(
    stiffness: &GlobalStiffness,
    leaders: &BTreeSet<usize>,
    leader_positions: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let n = stiffness.matrix.nrows();
    let leader_list: Vec<usize> = leaders.iter().copied().collect();
    assert_eq!(
        leader_list.len(),
        leader_positions.len(),
        "one position per leader"
    );
    let followers = follower_indices(n, leaders);
    if followers.is_empty() {
        return Ok(Vec::new());
    }
    let dim = leader_positions[0].len();

    let ff = submatrix(&stiffness.matrix, &followers, &followers);
    let fl = submatrix(&stiffness.matrix, &followers, &leader_list);

    let svd = ff.clone().svd(false, false);
    let sv = &svd.singular_values;
    let (max_sv, min_sv) = (sv.max(), sv.min());
    let cond = if min_sv > 0.0 { max_sv / min_sv } else { f64::INFINITY };
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::SingularInterior { cond });
    }

    let lu = ff.lu();
    let mut out = vec![DVector::zeros(dim); followers.len()];
    for axis in 0..dim {
        let leader_axis = DVector::from_fn(leader_list.len(), |i, _| leader_positions[i][axis]);
        let rhs = -(&fl * leader_axis);
        let solution = lu.solve(&rhs).ok_or(Error::SingularInterior { cond })?;
        for (i, value) in solution.iter().enumerate() {
            out[i][axis] = *value;
        }
    }
    Ok(out)
}

/// Output of the stabilizing weight search.
#[derive(Debug, Clone)]
pub struct WeightDesign {
    pub weights: Vec<f64>,
    /// Smallest eigenvalue of `L_FF` at the returned weights.
    pub margin: f64,
    /// `||(L(w) Q)_F||_F` over follower rows; zero up to roundoff by
    /// construction.
    pub equilibrium_residual: f64,
    /// Accepted objective values of the best restart, non-decreasing.
    pub objective_history: Vec<f64>,
}

/// Finds element weights maximizing `λ_min(L_FF(w)) - γ||w||` subject to
/// the follower equilibrium `Σ_j L_ij(w) q_j = 0`.
///
/// The equilibrium constraint is linear in `w`, so the search runs inside
/// an orthonormal basis of its null space; within that subspace
/// `λ_min(L_FF)` is concave and a projected subgradient ascent with
/// backtracking converges to the global optimum. The objective is
/// homogeneous of degree one, so iterates are confined to a weight ball of
/// radius `√M` to keep the maximum attained.
pub fn weight_design(
    complex: &SimplicialComplex,
    reference: &Configuration,
    leaders: &BTreeSet<usize>,
    gamma: f64,
    lambda_min: f64,
) -> Result<WeightDesign> {
    let n = complex.num_agents;
    let m = complex.elements.len();
    let dim = complex.dim;
    let followers = follower_indices(n, leaders);

    if followers.is_empty() {
        // No constraints at all; every positive vector works.
        return Ok(WeightDesign {
            weights: vec![1.0; m],
            margin: f64::INFINITY,
            equilibrium_residual: 0.0,
            objective_history: Vec::new(),
        });
    }
    if leaders.len() < dim + 1 {
        return Err(Error::Infeasible(format!(
            "need at least d+1 = {} leaders, got {}",
            dim + 1,
            leaders.len()
        )));
    }

    let basis = StiffnessBasis::new(complex);
    let embedded: Vec<DMatrix<f64>> = (0..m).map(|e| basis.embedded(e)).collect();

    // Constraint matrix: rows indexed by (follower, axis), columns by
    // element weight.
    let mut constraint = DMatrix::zeros(followers.len() * dim, m);
    for (e, lhat) in embedded.iter().enumerate() {
        for (fi, &agent) in followers.iter().enumerate() {
            let mut row_times_q = DVector::zeros(dim);
            for j in 0..n {
                row_times_q += reference.position(j) * lhat[(agent, j)];
            }
            for axis in 0..dim {
                constraint[(fi * dim + axis, e)] = row_times_q[axis];
            }
        }
    }

    // Null space of the constraint via the spectrum of AᵀA.
    let gram = constraint.transpose() * &constraint;
    let eigen = gram.symmetric_eigen();
    let max_eig = eigen.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let tol = NULLSPACE_REL_TOL * max_eig.max(1.0);
    let null_cols: Vec<usize> = (0..m).filter(|&i| eigen.eigenvalues[i] <= tol).collect();
    if null_cols.is_empty() {
        return Err(Error::Infeasible(
            "follower equilibrium constraints leave no weight freedom".into(),
        ));
    }
    let null_basis = DMatrix::from_fn(m, null_cols.len(), |i, j| {
        eigen.eigenvectors[(i, null_cols[j])]
    });

    let followers_ff: Vec<DMatrix<f64>> = embedded
        .iter()
        .map(|lhat| submatrix(lhat, &followers, &followers))
        .collect();

    let radius = (m as f64).sqrt();
    let k = null_cols.len();

    let min_eig_pair = |w: &DVector<f64>| -> (f64, DVector<f64>) {
        let mut ff = DMatrix::zeros(followers.len(), followers.len());
        for (e, block) in followers_ff.iter().enumerate() {
            ff += block * w[e];
        }
        let eig = ((&ff + ff.transpose()) * 0.5).symmetric_eigen();
        let mut idx = 0;
        for i in 1..eig.eigenvalues.len() {
            if eig.eigenvalues[i] < eig.eigenvalues[idx] {
                idx = i;
            }
        }
        (eig.eigenvalues[idx], eig.eigenvectors.column(idx).clone_owned())
    };

    let objective = |z: &DVector<f64>| -> f64 {
        let w = &null_basis * z;
        min_eig_pair(&w).0 - gamma * z.norm()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0e14);
    let mut best: Option<(f64, DVector<f64>, Vec<f64>)> = None;

    for _restart in 0..RESTARTS {
        let mut z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = z.norm();
        if norm > 0.0 {
            z *= 0.5 * radius / norm;
        }
        let mut obj = objective(&z);
        let mut history = vec![obj];
        let mut step = 1.0f64;

        for _iter in 0..MAX_ASCENT_ITERS {
            let w = &null_basis * &z;
            let (_, eigvec) = min_eig_pair(&w);
            // Subgradient of λ_min is the eigenvector outer-product pairing
            // with each basis matrix, pulled back into z-space.
            let mut grad_w = DVector::zeros(m);
            for (e, block) in followers_ff.iter().enumerate() {
                grad_w[e] = eigvec.dot(&(block * &eigvec));
            }
            let mut grad = null_basis.transpose() * grad_w;
            let zn = z.norm();
            if zn > 0.0 {
                grad -= &z * (gamma / zn);
            }
            if grad.norm() < 1e-14 {
                break;
            }

            let mut alpha = step;
            let mut accepted = false;
            while alpha > 1e-13 {
                let mut candidate = &z + &grad * alpha;
                let cn = candidate.norm();
                if cn > radius {
                    candidate *= radius / cn;
                }
                let cand_obj = objective(&candidate);
                if cand_obj > obj + 1e-15 {
                    z = candidate;
                    obj = cand_obj;
                    history.push(obj);
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
            step = (alpha * 2.0).min(1.0);
        }

        let better = match &best {
            None => true,
            Some((best_obj, _, _)) => obj > *best_obj,
        };
        if better {
            best = Some((obj, z, history));
        }
    }

    let (_, z, objective_history) = best.expect("at least one restart ran");
    let weights_vec = &null_basis * &z;
    let weights: Vec<f64> = weights_vec.iter().copied().collect();

    let stiffness = assemble_global(complex, &weights);
    let achieved = margin(&stiffness, leaders);

    let mut residual_sq = 0.0;
    for &agent in &followers {
        let mut row_times_q = DVector::zeros(dim);
        for j in 0..n {
            row_times_q += reference.position(j) * stiffness.matrix[(agent, j)];
        }
        residual_sq += row_times_q.norm_squared();
    }
    let equilibrium_residual = residual_sq.sqrt();

    if achieved < lambda_min {
        return Err(Error::Infeasible(format!(
            "best margin {achieved:.3e} is below lambda_min {lambda_min:.3e}"
        )));
    }

    Ok(WeightDesign {
        weights,
        margin: achieved,
        equilibrium_residual,
        objective_history,
    })
}
