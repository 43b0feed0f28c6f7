//! Deformation gradients, manifold projections, energy densities, and
//! stress tensors.
//!
//! Every energy here has the form `Ψ(F) = ||F - Proj(F)||²_F` where
//! `Proj(F)` is the closest point on a transformation manifold (identity,
//! rotations, uniform scalings, similarities, a prescribed target, or — for
//! the Dirichlet energy — the zero matrix). The gradient of `Ψ` w.r.t. `F`
//! collapses to `2 (F - Proj(F))` because the projection residual is
//! orthogonal to the manifold's tangent space at the optimum.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance for detecting a non-unique rotation fit (tied smallest
/// singular values with a negative-determinant correction).
const DEGENERATE_SV_TOL: f64 = 1e-12;

/// Selects the distortion energy evaluated on a deformation gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyMode {
    /// Penalizes any deviation from the identity map (pure translation).
    Translation,
    /// Penalizes deviation from the nearest rotation in SO(d).
    Rotation,
    /// Penalizes deviation from the nearest uniform scaling `s·I`.
    Scaling,
    /// Penalizes deviation from the nearest positive similarity `s·R`.
    Similarity,
    /// Dirichlet energy `||F||²_F`; its projection is the zero matrix.
    Dirichlet,
    /// Penalizes deviation from a prescribed target gradient.
    External(DMatrix<f64>),
}

impl EnergyMode {
    /// Short tag used in CLI flags, CSV columns, and reports.
    pub fn tag(&self) -> &'static str {
        match self {
            EnergyMode::Translation => "T",
            EnergyMode::Rotation => "TR",
            EnergyMode::Scaling => "TS",
            EnergyMode::Similarity => "TRS",
            EnergyMode::Dirichlet => "DE",
            EnergyMode::External(_) => "external",
        }
    }

    /// Parses the CLI tag. `External` has no tag form; targets come from
    /// scenario files.
    pub fn from_tag(tag: &str) -> Option<EnergyMode> {
        match tag {
            "T" => Some(EnergyMode::Translation),
            "TR" => Some(EnergyMode::Rotation),
            "TS" => Some(EnergyMode::Scaling),
            "TRS" => Some(EnergyMode::Similarity),
            "DE" => Some(EnergyMode::Dirichlet),
            _ => None,
        }
    }

    /// True for the modes whose stress transforms covariantly under
    /// left-multiplication by a rotation (`P(QF) = Q P(F)`).
    pub fn is_isotropic(&self) -> bool {
        matches!(
            self,
            EnergyMode::Rotation | EnergyMode::Similarity | EnergyMode::Dirichlet
        )
    }
}

/// Per-element deformation gradient `F = S · S_ref⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationGradient {
    pub matrix: DMatrix<f64>,
}

impl DeformationGradient {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn project(&self, mode: &EnergyMode) -> Result<DMatrix<f64>> {
        project(&self.matrix, mode)
    }

    pub fn energy_density(&self, mode: &EnergyMode) -> Result<f64> {
        energy_density(&self.matrix, mode)
    }

    pub fn stress(&self, mode: &EnergyMode) -> Result<DMatrix<f64>> {
        stress(&self.matrix, mode)
    }
}

/// `F = S · S_ref⁻¹`, mapping reference edge vectors to current ones.
pub fn deformation_gradient(
    shape: &DMatrix<f64>,
    ref_shape_inv: &DMatrix<f64>,
) -> DeformationGradient {
    DeformationGradient::new(shape * ref_shape_inv)
}

/// Result of projecting onto SO(d), with a flag for the non-unique case.
#[derive(Debug, Clone)]
pub struct RotationFit {
    pub rotation: DMatrix<f64>,
    /// Set when `det(UVᵀ) < 0` and the two smallest singular values tie;
    /// the minimizer is then non-unique and the last-column flip is a
    /// deterministic choice among the optima.
    pub degenerate: bool,
}

/// Closest rotation to `F` in Frobenius norm: `R = U C Vᵀ` from the SVD
/// `F = U Σ Vᵀ`, with `C = diag(1, …, 1, det(UVᵀ))` restoring `det R = +1`.
pub fn rotation_fit(f: &DMatrix<f64>) -> RotationFit {
    let d = f.nrows();
    let svd = f.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let direct = &u * &v_t;
    if direct.determinant() >= 0.0 {
        return RotationFit {
            rotation: direct,
            degenerate: false,
        };
    }
    // Singular values are sorted descending, so the last column pairs with
    // the smallest one.
    let mut u_fixed = u;
    u_fixed.column_mut(d - 1).neg_mut();
    let sv = &svd.singular_values;
    let scale = sv[0].max(1.0);
    let degenerate = d >= 2 && (sv[d - 2] - sv[d - 1]).abs() <= DEGENERATE_SV_TOL * scale;
    RotationFit {
        rotation: u_fixed * v_t,
        degenerate,
    }
}

/// Closest point to `F` on the manifold selected by `mode`.
///
/// The Dirichlet mode projects to the zero matrix by convention so that the
/// unified stress formula `P = 2 (F - Proj(F))` yields `2F`.
pub fn project(f: &DMatrix<f64>, mode: &EnergyMode) -> Result<DMatrix<f64>> {
    let d = f.nrows();
    match mode {
        EnergyMode::Translation => Ok(DMatrix::identity(d, d)),
        EnergyMode::Rotation => Ok(rotation_fit(f).rotation),
        EnergyMode::Scaling => {
            let s = f.trace() / d as f64;
            Ok(DMatrix::identity(d, d) * s)
        }
        EnergyMode::Similarity => {
            let r = rotation_fit(f).rotation;
            let s = (r.transpose() * f).trace() / d as f64;
            if s <= 0.0 {
                return Err(Error::ProjectionUndefined(format!(
                    "similarity fit requires a positive scale, got s = {s:.3e}"
                )));
            }
            Ok(r * s)
        }
        EnergyMode::Dirichlet => Ok(DMatrix::zeros(d, d)),
        EnergyMode::External(target) => {
            if target.nrows() != d || target.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: target.nrows(),
                });
            }
            Ok(target.clone())
        }
    }
}

/// `Ψ(F) = ||F - Proj(F)||²_F` (for Dirichlet this is `||F||²_F`).
pub fn energy_density(f: &DMatrix<f64>, mode: &EnergyMode) -> Result<f64> {
    let proj = project(f, mode)?;
    Ok((f - proj).norm_squared())
}

/// First Piola-Kirchhoff stress `P = ∂Ψ/∂F = 2 (F - Proj(F))`.
pub fn stress(f: &DMatrix<f64>, mode: &EnergyMode) -> Result<DMatrix<f64>> {
    let proj = project(f, mode)?;
    Ok((f - proj) * 2.0)
}

/// Green-Lagrange strain `G = (FᵀF - I) / 2`; zero exactly when `F` is a
/// rotation.
pub fn green_lagrange(f: &DMatrix<f64>) -> DMatrix<f64> {
    let d = f.nrows();
    (f.transpose() * f - DMatrix::identity(d, d)) * 0.5
}

/// Deviatoric part `A - (tr A / d) I`; removes the isotropic component.
pub fn deviatoric(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    a - DMatrix::identity(d, d) * (a.trace() / d as f64)
}

/// Symmetric part `(A + Aᵀ) / 2`.
pub fn symmetric_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}
