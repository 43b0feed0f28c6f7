//! Canonical test formations.
//!
//! The heart fixtures are the repository's reference scenarios: a 2D
//! heart-shaped outline of five boundary agents around one central agent,
//! fanned into five triangles, and its 3D extension with one apex agent
//! turning each triangle into a tetrahedron. The coordinates below are the
//! canonical values; the JSON files under `scenarios/` mirror them.

use std::collections::BTreeSet;

use crate::deformation::EnergyMode;
use crate::error::Result;
use crate::geometry::{build_complex, Configuration};
use crate::scenario::{randomized_initial, IntegratorSettings, Scenario};

/// Seed used when a fixture is requested without one.
pub const DEFAULT_SEED: u64 = 7;

/// 2D heart outline: agents 0-4 on the boundary (bottom tip, right outer,
/// top-right lobe, top-left lobe, left outer) and agent 5 in the center.
pub const HEART2D_COORDS: [[f64; 2]; 6] = [
    [0.0, -1.0],
    [0.95, 0.25],
    [0.55, 1.05],
    [-0.55, 1.05],
    [-0.95, 0.25],
    [0.0, 0.2],
];

/// Fan triangulation rooted at the central agent.
pub const HEART2D_ELEMENTS: [[usize; 3]; 5] = [
    [5, 0, 1],
    [5, 1, 2],
    [5, 2, 3],
    [5, 3, 4],
    [5, 4, 0],
];

/// Agent whose reference position is perturbed in the robustness sweep.
pub const HEART2D_TOP_RIGHT: usize = 2;

/// Apex added above the center for the 3D heart.
pub const HEART3D_APEX: [f64; 3] = [0.0, 0.2, 0.9];

/// 2D (N=6, five triangles) or 3D (N=7, five tetrahedra) heart scenario
/// with the default seed.
pub fn heart_fixture(dim: usize) -> Scenario {
    heart_fixture_seeded(dim, DEFAULT_SEED)
}

/// Heart scenario with an explicit seed for the randomized initial state.
pub fn heart_fixture_seeded(dim: usize, seed: u64) -> Scenario {
    assert!(dim == 2 || dim == 3, "heart fixture exists for d = 2, 3");
    let (reference, elements, name) = if dim == 2 {
        let rows: Vec<Vec<f64>> = HEART2D_COORDS.iter().map(|r| r.to_vec()).collect();
        let elements: Vec<Vec<usize>> = HEART2D_ELEMENTS.iter().map(|e| e.to_vec()).collect();
        (
            Configuration::from_rows(2, &rows).unwrap(),
            elements,
            "heart2d",
        )
    } else {
        let mut rows: Vec<Vec<f64>> = HEART2D_COORDS
            .iter()
            .map(|r| vec![r[0], r[1], 0.0])
            .collect();
        rows.push(HEART3D_APEX.to_vec());
        let elements: Vec<Vec<usize>> = HEART2D_ELEMENTS
            .iter()
            .map(|e| vec![e[0], e[1], e[2], 6])
            .collect();
        (
            Configuration::from_rows(3, &rows).unwrap(),
            elements,
            "heart3d",
        )
    };
    let complex = build_complex(dim, reference.len(), &elements, &reference)
        .expect("heart fixture is non-degenerate");
    let initial = randomized_initial(&reference, &complex, seed);
    let leaders: BTreeSet<usize> = (0..5).collect();
    Scenario {
        name: name.into(),
        reference,
        complex,
        initial,
        mode: EnergyMode::Rotation,
        external_elements: Vec::new(),
        leaders: Some(leaders),
        clamp_leaders: false,
        integrator: IntegratorSettings::default(),
        seed,
    }
}

/// Heart scenario with the top-right agent's reference moved to `(x, y)`.
/// Used by the perturbation sweep; fails if the move degenerates an element.
pub fn heart2d_with_top_right(x: f64, y: f64, seed: u64) -> Result<Scenario> {
    let mut rows: Vec<Vec<f64>> = HEART2D_COORDS.iter().map(|r| r.to_vec()).collect();
    rows[HEART2D_TOP_RIGHT] = vec![x, y];
    let reference = Configuration::from_rows(2, &rows)?;
    let elements: Vec<Vec<usize>> = HEART2D_ELEMENTS.iter().map(|e| e.to_vec()).collect();
    let complex = build_complex(2, reference.len(), &elements, &reference)?;
    let initial = randomized_initial(&reference, &complex, seed);
    Ok(Scenario {
        name: format!("heart2d@({x:.3},{y:.3})"),
        reference,
        complex,
        initial,
        mode: EnergyMode::Rotation,
        external_elements: Vec::new(),
        leaders: None,
        clamp_leaders: false,
        integrator: IntegratorSettings::default(),
        seed,
    })
}

/// Smallest fixture on which stabilizing weight design is feasible: three
/// leaders at the corners of a triangle, one interior follower, and the
/// three-triangle fan around it. The fan closes around the follower, so a
/// sign-mixed weight vector satisfying the follower equilibrium exists.
pub fn leader_fan_fixture() -> Scenario {
    let rows = vec![
        vec![0.0, 0.0],
        vec![2.0, 0.0],
        vec![1.0, 1.8],
        vec![1.0, 0.7],
    ];
    let reference = Configuration::from_rows(2, &rows).unwrap();
    let elements = vec![vec![0, 1, 3], vec![1, 2, 3], vec![2, 0, 3]];
    let complex = build_complex(2, 4, &elements, &reference).unwrap();
    let initial = randomized_initial(&reference, &complex, DEFAULT_SEED);
    Scenario {
        name: "fan2d".into(),
        reference,
        complex,
        initial,
        mode: EnergyMode::Dirichlet,
        external_elements: Vec::new(),
        leaders: Some([0, 1, 2].into_iter().collect()),
        clamp_leaders: false,
        integrator: IntegratorSettings::default(),
        seed: DEFAULT_SEED,
    }
}

/// Two triangles over four agents with three leaders; its follower
/// equilibrium map has a trivial null space, so weight design must report
/// infeasibility. Kept as the canonical infeasible example.
pub fn infeasible_two_triangle_fixture() -> Scenario {
    let rows = vec![
        vec![0.0, 0.0],
        vec![2.0, 0.1],
        vec![1.1, 1.9],
        vec![0.9, 0.8],
    ];
    let reference = Configuration::from_rows(2, &rows).unwrap();
    let elements = vec![vec![0, 1, 3], vec![1, 2, 3]];
    let complex = build_complex(2, 4, &elements, &reference).unwrap();
    let initial = randomized_initial(&reference, &complex, DEFAULT_SEED);
    Scenario {
        name: "two-triangle".into(),
        reference,
        complex,
        initial,
        mode: EnergyMode::Dirichlet,
        external_elements: Vec::new(),
        leaders: Some([0, 1, 2].into_iter().collect()),
        clamp_leaders: false,
        integrator: IntegratorSettings::default(),
        seed: DEFAULT_SEED,
    }
}
