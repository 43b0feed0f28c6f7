//! Rigidity-based comparison controllers and the identities linking their
//! edge errors to deformation tensors.
//!
//! The distance, bearing, and ratio-of-distance controllers are the
//! standard squared-error gradient flows over the constraint sets induced
//! by the mesh: every intra-element edge carries a distance and a bearing
//! target, and each element contributes one ratio-of-distance triplet per
//! unordered non-root vertex pair with the element root as apex. Reusing
//! the element edges keeps the comparison about the energy, not the
//! topology.

use nalgebra::{DMatrix, DVector};

use crate::controller::ForceField;
use crate::deformation::{deviatoric, green_lagrange};
use crate::error::{Error, Result};
use crate::geometry::{Configuration, SimplicialComplex};

const MIN_EDGE_LENGTH: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DistanceEdge {
    pub i: usize,
    pub j: usize,
    /// Reference length `d*_{ij}`.
    pub target: f64,
}

#[derive(Debug, Clone)]
pub struct BearingEdge {
    pub i: usize,
    pub j: usize,
    /// Unit vector along the reference edge, from `i` to `j`.
    pub target: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct RodTriplet {
    pub apex: usize,
    pub j: usize,
    pub k: usize,
    /// `r* = d*_{apex,j} / d*_{apex,k}`.
    pub target: f64,
}

/// Constraint targets derived from a reference configuration and mesh.
#[derive(Debug, Clone)]
pub struct EdgeConstraintSet {
    pub dim: usize,
    pub num_agents: usize,
    pub distance_edges: Vec<DistanceEdge>,
    pub bearing_edges: Vec<BearingEdge>,
    pub rod_triplets: Vec<RodTriplet>,
}

/// Extracts distance/bearing targets for every intra-element edge and one
/// ratio-of-distance triplet per unordered non-root vertex pair per
/// element (deduplicated across elements).
pub fn derive_constraints(
    reference: &Configuration,
    complex: &SimplicialComplex,
) -> Result<EdgeConstraintSet> {
    let mut edge_keys: Vec<(usize, usize)> = Vec::new();
    for element in &complex.elements {
        for (a, b) in element.edge_pairs() {
            let key = (a.min(b), a.max(b));
            if !edge_keys.contains(&key) {
                edge_keys.push(key);
            }
        }
    }
    let mut distance_edges = Vec::with_capacity(edge_keys.len());
    let mut bearing_edges = Vec::with_capacity(edge_keys.len());
    for &(i, j) in &edge_keys {
        let diff = reference.position(j) - reference.position(i);
        let len = diff.norm();
        if len < MIN_EDGE_LENGTH {
            return Err(Error::ZeroLengthEdge { i, j });
        }
        distance_edges.push(DistanceEdge { i, j, target: len });
        bearing_edges.push(BearingEdge {
            i,
            j,
            target: diff / len,
        });
    }

    let mut rod_triplets: Vec<RodTriplet> = Vec::new();
    for element in &complex.elements {
        let apex = element.root();
        let tail = &element.vertices[1..];
        for a in 0..tail.len() {
            for b in a + 1..tail.len() {
                let (j, k) = (tail[a].min(tail[b]), tail[a].max(tail[b]));
                if rod_triplets
                    .iter()
                    .any(|t| t.apex == apex && t.j == j && t.k == k)
                {
                    continue;
                }
                let dj = (reference.position(j) - reference.position(apex)).norm();
                let dk = (reference.position(k) - reference.position(apex)).norm();
                if dj < MIN_EDGE_LENGTH || dk < MIN_EDGE_LENGTH {
                    return Err(Error::ZeroLengthEdge { i: apex, j });
                }
                rod_triplets.push(RodTriplet {
                    apex,
                    j,
                    k,
                    target: dj / dk,
                });
            }
        }
    }

    Ok(EdgeConstraintSet {
        dim: reference.dim(),
        num_agents: reference.len(),
        distance_edges,
        bearing_edges,
        rod_triplets,
    })
}

/// `(1/4) Σ_edges (||p_ij||² - d*²)²`.
pub fn distance_potential(config: &Configuration, constraints: &EdgeConstraintSet) -> f64 {
    constraints
        .distance_edges
        .iter()
        .map(|e| {
            let err = (config.position(e.j) - config.position(e.i)).norm_squared()
                - e.target * e.target;
            0.25 * err * err
        })
        .sum()
}

/// Negative gradient of [`distance_potential`].
pub fn distance_control(
    config: &Configuration,
    constraints: &EdgeConstraintSet,
) -> Result<ForceField> {
    let mut field = ForceField::zeros(constraints.dim, constraints.num_agents);
    for e in &constraints.distance_edges {
        let rel = config.position(e.j) - config.position(e.i);
        let err = rel.norm_squared() - e.target * e.target;
        // d/dp_j (1/4) err² = err · rel ; force is the negative.
        field.add_to(e.j, &(-&rel * err));
        field.add_to(e.i, &(&rel * err));
    }
    Ok(field)
}

/// `(1/2) Σ_edges ||P⊥_{g*}(p_j - p_i)||²` with the projector built from
/// the reference bearing, so scalings and translations of the reference
/// are zero-energy.
pub fn bearing_potential(config: &Configuration, constraints: &EdgeConstraintSet) -> f64 {
    constraints
        .bearing_edges
        .iter()
        .map(|e| {
            let rel = config.position(e.j) - config.position(e.i);
            let along = e.target.dot(&rel);
            0.5 * (rel.norm_squared() - along * along)
        })
        .sum()
}

/// Negative gradient of [`bearing_potential`].
pub fn bearing_control(
    config: &Configuration,
    constraints: &EdgeConstraintSet,
) -> Result<ForceField> {
    let mut field = ForceField::zeros(constraints.dim, constraints.num_agents);
    for e in &constraints.bearing_edges {
        let rel = config.position(e.j) - config.position(e.i);
        // P⊥ rel, with P⊥ = I - g* g*ᵀ idempotent and symmetric.
        let residual = &rel - &e.target * e.target.dot(&rel);
        field.add_to(e.j, &(-&residual));
        field.add_to(e.i, &residual);
    }
    Ok(field)
}

/// `(1/4) Σ_triplets (d_ij²/d_ik² - r*²)²`.
pub fn rod_potential(config: &Configuration, constraints: &EdgeConstraintSet) -> Result<f64> {
    let mut v = 0.0;
    for t in &constraints.rod_triplets {
        let a = (config.position(t.j) - config.position(t.apex)).norm_squared();
        let b = (config.position(t.k) - config.position(t.apex)).norm_squared();
        if b.sqrt() < MIN_EDGE_LENGTH {
            return Err(Error::DegenerateTriplet {
                i: t.apex,
                j: t.j,
                k: t.k,
            });
        }
        let err = a / b - t.target * t.target;
        v += 0.25 * err * err;
    }
    Ok(v)
}

/// Negative gradient of [`rod_potential`].
pub fn rod_control(config: &Configuration, constraints: &EdgeConstraintSet) -> Result<ForceField> {
    let mut field = ForceField::zeros(constraints.dim, constraints.num_agents);
    for t in &constraints.rod_triplets {
        let rel_j = config.position(t.j) - config.position(t.apex);
        let rel_k = config.position(t.k) - config.position(t.apex);
        let a = rel_j.norm_squared();
        let b = rel_k.norm_squared();
        if b.sqrt() < MIN_EDGE_LENGTH {
            return Err(Error::DegenerateTriplet {
                i: t.apex,
                j: t.j,
                k: t.k,
            });
        }
        let err = a / b - t.target * t.target;
        // ∇(a/b) through both edge vectors.
        let coeff = 0.5 * err;
        let grad_j = &rel_j * (2.0 * coeff / b);
        let grad_k = &rel_k * (-2.0 * coeff * a / (b * b));
        field.add_to(t.j, &(-&grad_j));
        field.add_to(t.k, &(-&grad_k));
        field.add_to(t.apex, &(grad_j + grad_k));
    }
    Ok(field)
}

/// Outcome of one algebraic identity check.
#[derive(Debug, Clone, Copy)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
}

fn identity(lhs: f64, rhs: f64) -> IdentityCheck {
    IdentityCheck {
        lhs,
        rhs,
        abs_err: (lhs - rhs).abs(),
    }
}

/// Translation energy as a displacement quadratic form:
/// `Ψ_T(F) = Σ_{jk} (Γ)_{jk} δ_jᵀ δ_k` with `Γ = (S_refᵀ S_ref)⁻¹` and
/// `δ_k` the root-relative displacement errors.
pub fn check_prop1(
    config: &Configuration,
    reference: &Configuration,
    element: &crate::geometry::Element,
) -> IdentityCheck {
    use crate::deformation::{deformation_gradient, energy_density, EnergyMode};
    use crate::geometry::shape_matrix;

    let s = shape_matrix(config, element);
    let f = deformation_gradient(&s, &element.ref_shape_inv);
    let lhs = energy_density(&f.matrix, &EnergyMode::Translation).unwrap();

    let d = element.dim();
    let gamma = (element.ref_shape.transpose() * &element.ref_shape)
        .try_inverse()
        .expect("reference shape is non-degenerate");
    let root = element.vertices[0];
    let deltas: Vec<DVector<f64>> = (1..=d)
        .map(|j| {
            let v = element.vertices[j];
            (config.position(v) - config.position(root))
                - (reference.position(v) - reference.position(root))
        })
        .collect();
    let mut rhs = 0.0;
    for j in 0..d {
        for k in 0..d {
            rhs += gamma[(j, k)] * deltas[j].dot(&deltas[k]);
        }
    }
    identity(lhs, rhs)
}

/// Squared distance error of an edge as a projection of the Green-Lagrange
/// strain: `||F q||² - ||q||² = 2 qᵀ G q`.
pub fn check_prop2(f: &DMatrix<f64>, q_ij: &DVector<f64>) -> IdentityCheck {
    let lhs = (f * q_ij).norm_squared() - q_ij.norm_squared();
    let g = green_lagrange(f);
    let rhs = 2.0 * q_ij.dot(&(&g * q_ij));
    identity(lhs, rhs)
}

/// Bearing error of an edge as a projection of the deviatoric gradient:
/// `||P⊥ F q||² = ||P⊥ dev(F) q||²` with `P⊥ = I - q qᵀ / ||q||²`.
pub fn check_prop3(f: &DMatrix<f64>, q_ij: &DVector<f64>) -> IdentityCheck {
    let perp = |v: &DVector<f64>| v - q_ij * (q_ij.dot(v) / q_ij.norm_squared());
    let lhs = perp(&(f * q_ij)).norm_squared();
    let rhs = perp(&(deviatoric(f) * q_ij)).norm_squared();
    identity(lhs, rhs)
}

/// Residuals of the first-order angle and ratio-of-distance predictions at
/// perturbation size `h`.
#[derive(Debug, Clone, Copy)]
pub struct Prop4Residuals {
    pub angle_residual: f64,
    pub rod_residual: f64,
    pub angle_prediction: f64,
    pub rod_prediction: f64,
}

/// Builds the perturbed Cauchy-Green tensor `C = s²I + h D₀` and compares
/// the exact angle/ratio-of-distance errors computed from `C` against their
/// complete first-order expansions in the deviatoric tensor. Both residuals
/// vanish at second order, so halving `h` quarters them.
///
/// The angle expansion carries, besides the off-diagonal projection
/// `uᵀ(hD₀)v / (s²|u||v|)`, the variation of the two normalizers:
/// `-cosθ* · (uᵀ(hD₀)u/|u|² + vᵀ(hD₀)v/|v|²) / (2s²)`. Dropping it leaves a
/// first-order remainder except when the edges are orthogonal or `D₀` has
/// no diagonal component along them.
pub fn check_prop4_order(
    u: &DVector<f64>,
    v: &DVector<f64>,
    scale: f64,
    direction: &DMatrix<f64>,
    h: f64,
) -> Prop4Residuals {
    debug_assert!(direction.trace().abs() < 1e-9, "direction must be traceless");
    debug_assert!(
        (direction - direction.transpose()).norm() < 1e-9,
        "direction must be symmetric"
    );
    let d = u.len();
    let c = DMatrix::identity(d, d) * (scale * scale) + direction * h;
    let quad = |x: &DVector<f64>, y: &DVector<f64>| x.dot(&(&c * y));

    // Angle: cos(θ') from C versus the reference cosine.
    let exact_angle = quad(u, v) / (quad(u, u).sqrt() * quad(v, v).sqrt())
        - u.dot(v) / (u.norm() * v.norm());
    let cos_ref = u.dot(v) / (u.norm() * v.norm());
    let s2 = scale * scale;
    let angle_prediction = h * u.dot(&(direction * v)) / (s2 * u.norm() * v.norm())
        - cos_ref * h / (2.0 * s2)
            * (u.dot(&(direction * u)) / u.norm_squared()
                + v.dot(&(direction * v)) / v.norm_squared());

    // Ratio of distances: d²_u / d²_v from C versus the reference ratio.
    let exact_rod = quad(u, u) / quad(v, v) - u.norm_squared() / v.norm_squared();
    let rod_prediction = u.norm_squared() / (scale * scale * v.norm_squared())
        * (h * u.dot(&(direction * u)) / u.norm_squared()
            - h * v.dot(&(direction * v)) / v.norm_squared());

    Prop4Residuals {
        angle_residual: (exact_angle - angle_prediction).abs(),
        rod_residual: (exact_rod - rod_prediction).abs(),
        angle_prediction,
        rod_prediction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_complex;
    use crate::scenario::random_rotation;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn config2(rows: &[[f64; 2]]) -> Configuration {
        Configuration::from_rows(2, &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn unit_triangle() -> (Configuration, SimplicialComplex) {
        let q = config2(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let complex = build_complex(2, 3, &[vec![0, 1, 2]], &q).unwrap();
        (q, complex)
    }

    fn fd_gradient(
        config: &Configuration,
        h: f64,
        mut v: impl FnMut(&Configuration) -> f64,
    ) -> DVector<f64> {
        let flat = config.to_flat();
        let dim = config.dim();
        let mut grad = DVector::zeros(flat.len());
        for k in 0..flat.len() {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[k] += h;
            minus[k] -= h;
            grad[k] = (v(&Configuration::from_flat(dim, &plus).unwrap())
                - v(&Configuration::from_flat(dim, &minus).unwrap()))
                / (2.0 * h);
        }
        grad
    }

    fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn unit_triangle_constraints() {
        let (q, complex) = unit_triangle();
        let c = derive_constraints(&q, &complex).unwrap();
        let mut targets: Vec<f64> = c.distance_edges.iter().map(|e| e.target).collect();
        targets.sort_by(f64::total_cmp);
        assert_relative_eq!(targets[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(targets[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(targets[2], 2.0f64.sqrt(), epsilon = 1e-12);
        for e in &c.bearing_edges {
            assert_relative_eq!(e.target.norm(), 1.0, epsilon = 1e-12);
            let rel = q.position(e.j) - q.position(e.i);
            assert!((&rel / rel.norm() - &e.target).norm() < 1e-12);
        }
        assert_eq!(c.rod_triplets.len(), 1);
        let t = &c.rod_triplets[0];
        assert_eq!((t.apex, t.j, t.k), (0, 1, 2));
        assert_relative_eq!(t.target, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_length_reference_edge_is_rejected() {
        let q = config2(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0 + 1e-13]]);
        // Second element contains the (2,3) edge of length ~1e-13.
        let complex = build_complex(2, 4, &[vec![0, 1, 2], vec![1, 3, 2]], &q);
        // The build itself may reject it as degenerate; if it builds,
        // constraint derivation must reject the short edge.
        if let Ok(complex) = complex {
            assert!(matches!(
                derive_constraints(&q, &complex),
                Err(Error::ZeroLengthEdge { .. })
            ));
        }
    }

    #[test]
    fn distance_control_examples() {
        let (q, complex) = unit_triangle();
        let c = derive_constraints(&q, &complex).unwrap();
        assert!(distance_control(&q, &c).unwrap().norm() < 1e-14);

        // Equilateral triangle scaled by 2: every force points back toward
        // the centroid.
        let eq = config2(&[[0.0, 0.0], [1.0, 0.0], [0.5, 3.0f64.sqrt() / 2.0]]);
        let complex_eq = build_complex(2, 3, &[vec![0, 1, 2]], &eq).unwrap();
        let c_eq = derive_constraints(&eq, &complex_eq).unwrap();
        let scaled =
            Configuration::new(2, eq.positions().iter().map(|p| p * 2.0).collect()).unwrap();
        let field = distance_control(&scaled, &c_eq).unwrap();
        let centroid = scaled.centroid();
        for i in 0..3 {
            let toward = &centroid - scaled.position(i);
            assert!(field.force(i).dot(&toward) > 0.0);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let p = Configuration::new(
                2,
                q.positions()
                    .iter()
                    .map(|x| x + DVector::from_fn(2, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal)))
                    .collect(),
            )
            .unwrap();
            let field = distance_control(&p, &c).unwrap();
            let fd = fd_gradient(&p, 1e-6, |cfg| distance_potential(cfg, &c));
            let err = (field.to_flat() + &fd).norm() / fd.norm().max(1e-9);
            assert!(err < 1e-6, "rel err {err}");
            assert!(field.sum().norm() < 1e-12);
        }
    }

    #[test]
    fn bearing_control_examples() {
        let (q, complex) = unit_triangle();
        let c = derive_constraints(&q, &complex).unwrap();
        // Scaled and translated reference keeps all bearings.
        let t = DVector::from_vec(vec![0.4, -0.2]);
        let scaled = Configuration::new(
            2,
            q.positions().iter().map(|p| p * 1.8 + &t).collect(),
        )
        .unwrap();
        assert!(bearing_control(&scaled, &c).unwrap().norm() < 1e-12);

        // Rotating the reference breaks bearings.
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let rot = random_rotation(&mut rng, 2);
        let rotated =
            Configuration::new(2, q.positions().iter().map(|p| &rot * p).collect()).unwrap();
        assert!(bearing_control(&rotated, &c).unwrap().norm() > 1e-3);

        for _ in 0..20 {
            let p = Configuration::new(
                2,
                q.positions()
                    .iter()
                    .map(|x| x + DVector::from_fn(2, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal)))
                    .collect(),
            )
            .unwrap();
            let field = bearing_control(&p, &c).unwrap();
            let fd = fd_gradient(&p, 1e-6, |cfg| bearing_potential(cfg, &c));
            let err = (field.to_flat() + &fd).norm() / fd.norm().max(1e-9);
            assert!(err < 1e-6, "rel err {err}");
            assert!(field.sum().norm() < 1e-12);
        }
    }

    #[test]
    fn rod_control_examples() {
        let (q, complex) = unit_triangle();
        let c = derive_constraints(&q, &complex).unwrap();
        // Any similarity transform of the reference is an equilibrium.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let rot = random_rotation(&mut rng, 2);
        let t = DVector::from_vec(vec![-0.3, 0.9]);
        let similar = Configuration::new(
            2,
            q.positions().iter().map(|p| &rot * p * 1.4 + &t).collect(),
        )
        .unwrap();
        assert!(rod_control(&similar, &c).unwrap().norm() < 1e-12);

        // Anisotropic stretch changes the ratio.
        let stretched = Configuration::new(
            2,
            q.positions()
                .iter()
                .map(|p| DVector::from_vec(vec![2.0 * p[0], p[1]]))
                .collect(),
        )
        .unwrap();
        assert!(rod_control(&stretched, &c).unwrap().norm() > 1e-3);

        for _ in 0..20 {
            let p = Configuration::new(
                2,
                q.positions()
                    .iter()
                    .map(|x| x + DVector::from_fn(2, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal)))
                    .collect(),
            )
            .unwrap();
            let field = rod_control(&p, &c).unwrap();
            let fd = fd_gradient(&p, 1e-6, |cfg| rod_potential(cfg, &c).unwrap());
            let err = (field.to_flat() + &fd).norm() / fd.norm().max(1e-9);
            assert!(err < 1e-6, "rel err {err}");
            assert!(field.sum().norm() < 1e-12);
        }
    }

    #[test]
    fn prop1_examples_and_sweep() {
        let (q, complex) = unit_triangle();
        let check = check_prop1(&q, &q, &complex.elements[0]);
        assert!(check.lhs.abs() < 1e-14 && check.rhs.abs() < 1e-14);

        // S_ref = I, F = diag(2,1): both sides equal 1.
        let p = config2(&[[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]]);
        let check = check_prop1(&p, &q, &complex.elements[0]);
        assert_relative_eq!(check.lhs, 1.0, epsilon = 1e-12);
        assert_relative_eq!(check.rhs, 1.0, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..500 {
            let p = Configuration::new(
                2,
                q.positions()
                    .iter()
                    .map(|x| x + DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal)))
                    .collect(),
            )
            .unwrap();
            let check = check_prop1(&p, &q, &complex.elements[0]);
            assert!(check.abs_err < 1e-10, "err {}", check.abs_err);
        }
    }

    #[test]
    fn prop2_examples_and_sweep() {
        let f = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let q_ij = DVector::from_vec(vec![1.0, 0.0]);
        let check = check_prop2(&f, &q_ij);
        assert_relative_eq!(check.lhs, 3.0, epsilon = 1e-12);
        assert_relative_eq!(check.rhs, 3.0, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let rot = random_rotation(&mut rng, 2);
        assert!(check_prop2(&rot, &q_ij).lhs.abs() < 1e-12);

        for d in [2usize, 3] {
            for _ in 0..500 {
                let f = random_matrix(&mut rng, d);
                let q = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                assert!(check_prop2(&f, &q).abs_err < 1e-10);
            }
        }
    }

    #[test]
    fn prop3_examples_and_sweep() {
        let q_ij = DVector::from_vec(vec![1.0, 0.0]);
        let scaled = DMatrix::identity(2, 2) * 2.3;
        let check = check_prop3(&scaled, &q_ij);
        assert!(check.lhs.abs() < 1e-12 && check.rhs.abs() < 1e-12);

        // Shear along the edge direction leaves its bearing unchanged.
        let shear = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let check = check_prop3(&shear, &q_ij);
        assert!(check.lhs.abs() < 1e-12 && check.rhs.abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for d in [2usize, 3] {
            for _ in 0..500 {
                let f = random_matrix(&mut rng, d);
                let mut q = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                while q.norm() < 0.1 {
                    q = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                }
                assert!(check_prop3(&f, &q).abs_err < 1e-10);
            }
        }
    }

    #[test]
    fn prop4_residual_order() {
        let u = DVector::from_vec(vec![1.0, 0.3]);
        let v = DVector::from_vec(vec![-0.2, 1.1]);
        let s = 1.2;
        let d0 = {
            let raw = DMatrix::from_row_slice(2, 2, &[0.7, 0.4, 0.4, -0.7]);
            &raw / raw.norm()
        };
        // h = 0: both residuals vanish.
        let at_zero = check_prop4_order(&u, &v, s, &d0, 0.0);
        assert!(at_zero.angle_residual < 1e-15 && at_zero.rod_residual < 1e-15);

        // Halving h quarters the residuals (second-order remainder).
        let h = 1e-3 * s * s;
        let full = check_prop4_order(&u, &v, s, &d0, h);
        let half = check_prop4_order(&u, &v, s, &d0, h / 2.0);
        let angle_ratio = full.angle_residual / half.angle_residual;
        let rod_ratio = full.rod_residual / half.rod_residual;
        assert!((angle_ratio - 4.0).abs() < 0.4, "angle ratio {angle_ratio}");
        assert!((rod_ratio - 4.0).abs() < 0.4, "rod ratio {rod_ratio}");
    }

    #[test]
    fn prop4_orthogonal_edges_diagonal_direction() {
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 1.0]);
        let d0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]) / 2.0f64.sqrt();
        let h = 1e-4;
        let res = check_prop4_order(&u, &v, 1.0, &d0, h);
        assert!(res.angle_prediction.abs() < 1e-15);
        assert!(res.angle_residual < 10.0 * h * h);
    }
}
