//! Randomized verification suites for the algebraic identities and
//! asymptotic expansions the controllers rely on.
//!
//! Each check is an independent oracle: identities are evaluated from
//! their definitions (never through the code paths they certify), the
//! envelope check differentiates the energy numerically, and the
//! second-variation checks measure decay orders by step halving.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines::{check_prop1, check_prop2, check_prop3, check_prop4_order};
use crate::deformation::{
    deviatoric, energy_density, project, stress, symmetric_part, EnergyMode,
};
use crate::error::Result;
use crate::fixtures::heart_fixture;
use crate::geometry::{build_complex, Configuration};
use crate::laplacian::dirichlet_equivalence;

/// One row of the verification report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckOutcome {
    pub key: String,
    /// Measured quantity: a max error for identities, a decay order for
    /// the asymptotic checks.
    pub value: f64,
    /// Tolerance (identities) or allowed deviation from the expected
    /// order.
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random gradient bounded away from the projection branch cuts
/// (non-positive determinants and singular-value ties).
fn random_safe_gradient(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    loop {
        let f = DMatrix::identity(d, d) + random_matrix(rng, d) * 0.3;
        if f.determinant() > 0.05 {
            return f;
        }
    }
}

/// Max relative error between a stress implementation and the central
/// finite difference of the energy density, over random gradients for
/// every mode. Generic over the stress function so a deliberately broken
/// implementation can demonstrate that the check fails.
pub fn envelope_max_rel_err<S>(stress_fn: S, cases_per_mode: usize, seed: u64) -> Result<f64>
where
    S: Fn(&DMatrix<f64>, &EnergyMode) -> Result<DMatrix<f64>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for d in [2usize, 3] {
        let modes = [
            EnergyMode::Translation,
            EnergyMode::Rotation,
            EnergyMode::Scaling,
            EnergyMode::Similarity,
            EnergyMode::Dirichlet,
            EnergyMode::External(random_matrix(&mut rng, d)),
        ];
        for mode in &modes {
            for _ in 0..cases_per_mode {
                let f = random_safe_gradient(&mut rng, d);
                let p = stress_fn(&f, mode)?;
                let mut fd = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        let mut plus = f.clone();
                        let mut minus = f.clone();
                        plus[(i, j)] += h;
                        minus[(i, j)] -= h;
                        fd[(i, j)] = (energy_density(&plus, mode)?
                            - energy_density(&minus, mode)?)
                            / (2.0 * h);
                    }
                }
                let rel = (&fd - &p).norm() / p.norm().max(1e-9);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}

/// Worst optimality violation of the closed-form projection against random
/// samples from the mode's manifold: positive when some sample beats the
/// projection by more than slack.
pub fn projection_optimality_violation(
    mode: &EnergyMode,
    num_gradients: usize,
    samples_per_gradient: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = f64::NEG_INFINITY;
    for d in [2usize, 3] {
        for _ in 0..num_gradients / 2 {
            let f = random_matrix(&mut rng, d);
            let projected = match project(&f, mode) {
                Ok(p) => p,
                // Landing on a branch cut (e.g. zero similarity scale) is
                // legal for random gradients; skip those draws.
                Err(_) => continue,
            };
            let best = (&f - &projected).norm_squared();
            for _ in 0..samples_per_gradient {
                let candidate = random_manifold_sample(&mut rng, d, mode);
                let cost = (&f - candidate).norm_squared();
                worst = worst.max(best - cost);
            }
        }
    }
    Ok(worst)
}

fn random_manifold_sample(rng: &mut ChaCha8Rng, d: usize, mode: &EnergyMode) -> DMatrix<f64> {
    use crate::scenario::random_rotation;
    match mode {
        EnergyMode::Translation => DMatrix::identity(d, d),
        EnergyMode::Rotation => random_rotation(rng, d),
        EnergyMode::Scaling => {
            let s: f64 = rng.sample::<f64, _>(StandardNormal) * 2.0;
            DMatrix::identity(d, d) * s
        }
        EnergyMode::Similarity => {
            let s: f64 = rng.random_range(1e-3..4.0);
            random_rotation(rng, d) * s
        }
        EnergyMode::Dirichlet => DMatrix::zeros(d, d),
        EnergyMode::External(target) => target.clone(),
    }
}

/// Measured decay order of `|Ψ(I + hD) - quadratic(hD)|` under halving,
/// fitted by least squares over `halvings + 1` step sizes.
fn decay_order(mut error_at: impl FnMut(f64) -> f64, h0: f64, halvings: usize) -> f64 {
    let mut log_h = Vec::new();
    let mut log_e = Vec::new();
    let mut h = h0;
    for _ in 0..=halvings {
        let e = error_at(h);
        if e > 1e-300 {
            log_h.push(h.ln());
            log_e.push(e.ln());
        }
        h *= 0.5;
    }
    let n = log_h.len() as f64;
    let mean_x = log_h.iter().sum::<f64>() / n;
    let mean_y = log_e.iter().sum::<f64>() / n;
    let sxy: f64 = log_h
        .iter()
        .zip(&log_e)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let sxx: f64 = log_h.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    sxy / sxx
}

fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

/// Median measured order of the rotation-mode second variation
/// `|Ψ_TR(I + hD) - ||sym(hD)||²|`, which decays cubically. Measured in 3D
/// where the cubic coefficient is generic.
pub fn rotation_second_variation_order(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders: Vec<f64> = (0..trials)
        .map(|_| {
            let raw = random_matrix(&mut rng, 3);
            let direction = &raw / raw.norm();
            decay_order(
                |h| {
                    let f = DMatrix::identity(3, 3) + &direction * h;
                    let quad = symmetric_part(&(&direction * h)).norm_squared();
                    (energy_density(&f, &EnergyMode::Rotation).unwrap() - quad).abs()
                },
                1e-2,
                4,
            )
        })
        .collect();
    median_of(orders)
}

/// Median measured order of the similarity-mode second variation
/// `|Ψ_TRS(I + hD) - ||dev(sym(hD))||²|`; cubic in 3D.
pub fn similarity_second_variation_order(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orders: Vec<f64> = (0..trials)
        .map(|_| {
            let raw = random_matrix(&mut rng, 3);
            let direction = &raw / raw.norm();
            decay_order(
                |h| {
                    let f = DMatrix::identity(3, 3) + &direction * h;
                    let quad = deviatoric(&symmetric_part(&(&direction * h))).norm_squared();
                    (energy_density(&f, &EnergyMode::Similarity).unwrap() - quad).abs()
                },
                1e-2,
                4,
            )
        })
        .collect();
    median_of(orders)
}

/// Median measured order of the first-order angle/ratio-of-distance
/// residuals; quadratic.
pub fn prop4_residual_order(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orders = Vec::new();
    for _ in 0..trials {
        let d = if rng.random::<bool>() { 2 } else { 3 };
        let u = random_vector(&mut rng, d);
        let mut v = random_vector(&mut rng, d);
        // Keep the pair well conditioned.
        while u.norm() < 0.3 || v.norm() < 0.3 || u.dot(&v).abs() / (u.norm() * v.norm()) > 0.95 {
            v = random_vector(&mut rng, d);
        }
        let scale = rng.random_range(0.6..1.6);
        let raw = random_matrix(&mut rng, d);
        let sym = symmetric_part(&raw);
        let traceless = deviatoric(&sym);
        let direction = &traceless / traceless.norm();
        let h0 = 1e-3 * scale * scale;
        orders.push(decay_order(
            |h| {
                let res = check_prop4_order(&u, &v, scale, &direction, h);
                res.angle_residual + res.rod_residual
            },
            h0,
            4,
        ));
    }
    median_of(orders)
}

/// Max error of the displacement quadratic-form identity over random
/// well-conditioned simplices.
pub fn prop1_max_err(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let dim = if rng.random::<bool>() { 2 } else { 3 };
        // Reject thin simplices: the identity is exact, but an absolute
        // 1e-10 tolerance needs bounded shape-stiffness conditioning.
        let (reference, complex) = loop {
            let rows: Vec<Vec<f64>> = (0..dim + 1)
                .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
                .collect();
            if let Ok(reference) = Configuration::from_rows(dim, &rows) {
                let lists = vec![(0..=dim).collect::<Vec<usize>>()];
                if let Ok(complex) = build_complex(dim, dim + 1, &lists, &reference) {
                    if complex.elements[0].ref_shape.determinant().abs() > 0.5 {
                        break (reference, complex);
                    }
                }
            }
        };
        let moved = Configuration::new(
            dim,
            reference
                .positions()
                .iter()
                .map(|x| x + random_vector(&mut rng, dim) * 0.5)
                .collect(),
        )
        .unwrap();
        let check = check_prop1(&moved, &reference, &complex.elements[0]);
        worst = worst.max(check.abs_err);
    }
    worst
}

/// Max error of the distance/strain projection identity.
pub fn prop2_max_err(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d = if rng.random::<bool>() { 2 } else { 3 };
        let f = random_matrix(&mut rng, d);
        let q = nonzero_vector(&mut rng, d);
        worst = worst.max(check_prop2(&f, &q).abs_err);
    }
    worst
}

/// Max error of the bearing/deviatoric projection identity.
pub fn prop3_max_err(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d = if rng.random::<bool>() { 2 } else { 3 };
        let f = random_matrix(&mut rng, d);
        let q = nonzero_vector(&mut rng, d);
        worst = worst.max(check_prop3(&f, &q).abs_err);
    }
    worst
}

fn nonzero_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    loop {
        let q = random_vector(rng, d);
        if q.norm() > 0.1 {
            return q;
        }
    }
}

/// Max error of the Dirichlet equivalence on the heart fixtures.
pub fn dirichlet_max_err(cases_per_fixture: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for dim in [2usize, 3] {
        let scenario = heart_fixture(dim);
        let weights: Vec<f64> = scenario.complex.elements.iter().map(|e| e.weight).collect();
        for _ in 0..cases_per_fixture {
            let p = Configuration::new(
                dim,
                scenario
                    .reference
                    .positions()
                    .iter()
                    .map(|x| x + random_vector(&mut rng, dim))
                    .collect(),
            )
            .unwrap();
            let check = dirichlet_equivalence(&p, &scenario.complex, &weights);
            worst = worst.max(check.abs_err);
        }
    }
    worst
}

/// Runs every identity and expansion check at the given seed.
pub fn run_identity_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut outcomes = Vec::new();

    let worst1 = prop1_max_err(500, seed);
    outcomes.push(CheckOutcome {
        key: "prop1_displacement_quadratic_form".into(),
        value: worst1,
        threshold: 1e-10,
        passed: worst1 < 1e-10,
        detail: "translation energy vs shape-stiffness quadratic form, 500 random cases".into(),
    });

    let worst2 = prop2_max_err(500, seed ^ 0x2222);
    outcomes.push(CheckOutcome {
        key: "prop2_distance_strain_projection".into(),
        value: worst2,
        threshold: 1e-10,
        passed: worst2 < 1e-10,
        detail: "squared distance error vs Green-Lagrange projection, 500 random cases".into(),
    });

    let worst3 = prop3_max_err(500, seed ^ 0x3333);
    outcomes.push(CheckOutcome {
        key: "prop3_bearing_deviatoric_projection".into(),
        value: worst3,
        threshold: 1e-10,
        passed: worst3 < 1e-10,
        detail: "bearing error vs deviatoric projection, 500 random cases".into(),
    });

    let order4 = prop4_residual_order(11, seed ^ 0x9e37);
    outcomes.push(CheckOutcome {
        key: "prop4_first_order_residuals".into(),
        value: order4,
        threshold: 0.2,
        passed: (order4 - 2.0).abs() <= 0.2,
        detail: "decay order of angle/ratio residuals under step halving (expect 2)".into(),
    });

    let worst5 = dirichlet_max_err(100, seed ^ 0x5555);
    outcomes.push(CheckOutcome {
        key: "prop5_dirichlet_equivalence".into(),
        value: worst5,
        threshold: 1e-10,
        passed: worst5 < 1e-10,
        detail: "element energy sum vs Laplacian quadratic form on heart fixtures".into(),
    });

    let envelope = envelope_max_rel_err(|f, mode| stress(f, mode), 200, seed ^ 0x517c)?;
    outcomes.push(CheckOutcome {
        key: "appendix_b_envelope_gradient".into(),
        value: envelope,
        threshold: 1e-6,
        passed: envelope < 1e-6,
        detail: "stress vs finite difference of the energy density".into(),
    });

    let order_tr = rotation_second_variation_order(11, seed ^ 0xd00d);
    outcomes.push(CheckOutcome {
        key: "appendix_d_rotation_second_variation".into(),
        value: order_tr,
        threshold: 0.3,
        passed: (order_tr - 3.0).abs() <= 0.3,
        detail: "cubic remainder of the linearized-strain expansion (expect 3)".into(),
    });

    let order_trs = similarity_second_variation_order(11, seed ^ 0xbeef);
    outcomes.push(CheckOutcome {
        key: "appendix_e_similarity_second_variation".into(),
        value: order_trs,
        threshold: 0.3,
        passed: (order_trs - 3.0).abs() <= 0.3,
        detail: "cubic remainder of the deviatoric-strain expansion (expect 3)".into(),
    });

    Ok(outcomes)
}
