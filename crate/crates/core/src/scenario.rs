//! Scenario bundles and their JSON file format.
//!
//! A scenario fixes everything a run needs: reference and initial
//! configurations, the element lists, the energy mode (with optional
//! per-element external targets), leaders, integrator settings, and the
//! seed. When a file omits `initial`, the loader synthesizes one
//! deterministically from the seed: a random similarity transform of the
//! reference (rotation, scale in [0.5, 1.5], translation in [-1, 1]^d)
//! plus Gaussian noise with σ = 0.1 × mesh scale.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::deformation::EnergyMode;
use crate::error::{Error, Result};
use crate::geometry::{build_complex, Configuration, SimplicialComplex};

/// Only schema version currently understood.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegrationMethod {
    Euler,
    Rk4,
}

impl IntegrationMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euler" => Some(Self::Euler),
            "rk4" => Some(Self::Rk4),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Euler => "euler",
            Self::Rk4 => "rk4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    /// Step size; `None` selects a stability-based default from the mesh.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub method: IntegrationMethod,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: 40.0,
            method: IntegrationMethod::Rk4,
        }
    }
}

/// A fully materialized experiment description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub reference: Configuration,
    pub complex: SimplicialComplex,
    pub initial: Configuration,
    pub mode: EnergyMode,
    /// Per-element energy overrides for leading elements driven by an
    /// external target gradient.
    pub external_elements: Vec<(usize, DMatrix<f64>)>,
    pub leaders: Option<BTreeSet<usize>>,
    /// When set, leader agents ignore control inputs (pinned boundary).
    pub clamp_leaders: bool,
    pub integrator: IntegratorSettings,
    pub seed: u64,
}

impl Scenario {
    /// Energy mode per element, after applying external overrides.
    pub fn element_modes(&self) -> Vec<EnergyMode> {
        let mut modes = vec![self.mode.clone(); self.complex.elements.len()];
        for (idx, target) in &self.external_elements {
            modes[*idx] = EnergyMode::External(target.clone());
        }
        modes
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Scenario {
            field: "path".into(),
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Scenario {
            field: "json".into(),
            reason: e.to_string(),
        })?;
        file.materialize()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from_scenario(self))
            .expect("scenario serialization cannot fail")
    }
}

/// Similarity transform of the reference plus Gaussian noise, seeded.
pub fn randomized_initial(
    reference: &Configuration,
    complex: &SimplicialComplex,
    seed: u64,
) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = reference.dim();
    let rot = random_rotation(&mut rng, d);
    let scale: f64 = rng.random_range(0.5..1.5);
    let shift = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let sigma = 0.1 * reference.mesh_scale(complex);
    let positions = reference
        .positions()
        .iter()
        .map(|q| {
            let noise = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal) * sigma);
            &rot * q * scale + &shift + noise
        })
        .collect();
    Configuration::new(d, positions).expect("transformed reference stays valid")
}

/// Uniformly random rotation in SO(d), d in {2, 3}.
pub fn random_rotation(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    match dim {
        2 => {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            DMatrix::from_row_slice(
                2,
                2,
                &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
            )
        }
        3 => {
            // Uniform quaternion.
            let q: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let n = (q.iter().map(|x| x * x).sum::<f64>()).sqrt();
            let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            )
        }
        _ => panic!("dimension must be 2 or 3"),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    dim: usize,
    reference: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial: Option<Vec<Vec<f64>>>,
    elements: Vec<Vec<usize>>,
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    external_target: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    external_elements: Vec<ExternalOverrideFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaders: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    clamp_leaders: bool,
    integrator: IntegratorSettings,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExternalOverrideFile {
    element: usize,
    target: Vec<Vec<f64>>,
}

fn parse_matrix(field: &str, dim: usize, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Scenario {
            field: field.into(),
            reason: format!("expected a {dim}x{dim} matrix"),
        });
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(Error::Scenario {
            field: field.into(),
            reason: "non-finite entry".into(),
        });
    }
    Ok(DMatrix::from_row_slice(dim, dim, &flat))
}

impl ScenarioFile {
    fn materialize(self) -> Result<Scenario> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Scenario {
                field: "version".into(),
                reason: format!("unsupported version {}, expected {SCHEMA_VERSION}", self.version),
            });
        }
        let reference = Configuration::from_rows(self.dim, &self.reference)?;
        let complex = build_complex(self.dim, reference.len(), &self.elements, &reference)?;

        let mode = if self.mode == "external" {
            let rows = self.external_target.as_ref().ok_or_else(|| Error::Scenario {
                field: "external_target".into(),
                reason: "mode \"external\" requires external_target".into(),
            })?;
            EnergyMode::External(parse_matrix("external_target", self.dim, rows)?)
        } else {
            EnergyMode::from_tag(&self.mode).ok_or_else(|| Error::Scenario {
                field: "mode".into(),
                reason: format!(
                    "unknown mode {:?}; expected T, TR, TS, TRS, DE, or external",
                    self.mode
                ),
            })?
        };

        let mut external_elements = Vec::new();
        for over in &self.external_elements {
            if over.element >= complex.elements.len() {
                return Err(Error::Scenario {
                    field: "external_elements".into(),
                    reason: format!("element index {} out of range", over.element),
                });
            }
            external_elements.push((
                over.element,
                parse_matrix("external_elements.target", self.dim, &over.target)?,
            ));
        }

        let leaders = match &self.leaders {
            None => None,
            Some(ids) => {
                let set: BTreeSet<usize> = ids.iter().copied().collect();
                if let Some(&bad) = set.iter().find(|&&i| i >= reference.len()) {
                    return Err(Error::Scenario {
                        field: "leaders".into(),
                        reason: format!("agent index {bad} out of range"),
                    });
                }
                Some(set)
            }
        };

        let initial = match &self.initial {
            Some(rows) => {
                let init = Configuration::from_rows(self.dim, rows)?;
                if init.len() != reference.len() {
                    return Err(Error::Scenario {
                        field: "initial".into(),
                        reason: format!(
                            "expected {} agents, got {}",
                            reference.len(),
                            init.len()
                        ),
                    });
                }
                init
            }
            None => randomized_initial(&reference, &complex, self.seed),
        };

        if self.integrator.t_end <= 0.0 {
            return Err(Error::Scenario {
                field: "integrator.t_end".into(),
                reason: "must be positive".into(),
            });
        }
        if let Some(dt) = self.integrator.dt {
            if dt <= 0.0 {
                return Err(Error::Scenario {
                    field: "integrator.dt".into(),
                    reason: "must be positive".into(),
                });
            }
        }

        Ok(Scenario {
            name: self.name.unwrap_or_else(|| "scenario".into()),
            reference,
            complex,
            initial,
            mode,
            external_elements,
            leaders,
            clamp_leaders: self.clamp_leaders,
            integrator: self.integrator,
            seed: self.seed,
        })
    }

    fn from_scenario(s: &Scenario) -> ScenarioFile {
        let rows = |c: &Configuration| {
            c.positions()
                .iter()
                .map(|p| p.iter().copied().collect())
                .collect()
        };
        let matrix_rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        };
        let (mode, external_target) = match &s.mode {
            EnergyMode::External(target) => ("external".to_string(), Some(matrix_rows(target))),
            other => (other.tag().to_string(), None),
        };
        ScenarioFile {
            version: SCHEMA_VERSION,
            name: Some(s.name.clone()),
            dim: s.reference.dim(),
            reference: rows(&s.reference),
            initial: Some(rows(&s.initial)),
            elements: s
                .complex
                .elements
                .iter()
                .map(|e| e.vertices.clone())
                .collect(),
            mode,
            external_target,
            external_elements: s
                .external_elements
                .iter()
                .map(|(idx, target)| ExternalOverrideFile {
                    element: *idx,
                    target: matrix_rows(target),
                })
                .collect(),
            leaders: s.leaders.as_ref().map(|set| set.iter().copied().collect()),
            clamp_leaders: s.clamp_leaders,
            integrator: s.integrator,
            seed: s.seed,
        }
    }
}
