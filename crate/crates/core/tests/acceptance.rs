//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line (run with `--nocapture` to see them). Tolerances are pinned here.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use formctl_core::controller::{total_control, total_energy, LocalFrames};
use formctl_core::deformation::{stress, EnergyMode};
use formctl_core::fixtures::{heart_fixture, leader_fan_fixture, HEART2D_TOP_RIGHT};
use formctl_core::geometry::Configuration;
use formctl_core::laplacian::{assemble_global, harmonic_solve, weight_design};
use formctl_core::scenario::{random_rotation, IntegrationMethod, Scenario};
use formctl_core::simulation::{
    cov_metric, default_dt, hessian_null_dim, integrate, log_energy_fit_r2, manifold_residual,
    median, perturbation_sweep, BaselineKind, Controller, ControllerSpec,
    ElementController, LocalFrameController, SweepGrid, SweepStatus,
};
use formctl_core::verify;

fn criterion(number: usize, name: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("[acceptance] criterion {number:2} ({name}): PASS"),
        Err(message) => {
            println!("[acceptance] criterion {number:2} ({name}): FAIL - {message}");
            panic!("criterion {number} ({name}) failed: {message}");
        }
    }
}

fn all_modes(dim: usize, rng: &mut ChaCha8Rng) -> Vec<EnergyMode> {
    vec![
        EnergyMode::Translation,
        EnergyMode::Rotation,
        EnergyMode::Scaling,
        EnergyMode::Similarity,
        EnergyMode::Dirichlet,
        EnergyMode::External(DMatrix::from_fn(dim, dim, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * 0.5
        })),
    ]
}

fn perturbed(config: &Configuration, rng: &mut ChaCha8Rng, sigma: f64) -> Configuration {
    let d = config.dim();
    Configuration::new(
        d,
        config
            .positions()
            .iter()
            .map(|p| p + DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal) * sigma))
            .collect(),
    )
    .unwrap()
}

#[test]
fn criterion_01_gradient_fidelity() {
    criterion(1, "gradient fidelity", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for dim in [2usize, 3] {
            let scenario = heart_fixture(dim);
            let complex = &scenario.complex;
            let h = 1e-6;
            for mode in all_modes(dim, &mut rng) {
                for _ in 0..100 {
                    let p = perturbed(&scenario.reference, &mut rng, 0.25);
                    let field = total_control(&p, complex, &mode)
                        .map_err(|e| format!("control failed: {e}"))?;
                    let flat = p.to_flat();
                    let mut fd = DVector::zeros(flat.len());
                    for k in 0..flat.len() {
                        let mut plus = flat.clone();
                        let mut minus = flat.clone();
                        plus[k] += h;
                        minus[k] -= h;
                        let vp = total_energy(
                            &Configuration::from_flat(dim, &plus).unwrap(),
                            complex,
                            &mode,
                        )
                        .map_err(|e| e.to_string())?;
                        let vm = total_energy(
                            &Configuration::from_flat(dim, &minus).unwrap(),
                            complex,
                            &mode,
                        )
                        .map_err(|e| e.to_string())?;
                        fd[k] = (vp - vm) / (2.0 * h);
                    }
                    let rel = (field.to_flat() + &fd).norm() / fd.norm().max(1e-12);
                    if rel >= 1e-6 {
                        return Err(format!(
                            "mode {} dim {dim}: rel error {rel:.3e}",
                            mode.tag()
                        ));
                    }
                }
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= 10.0 {
            return Err(format!("runtime {elapsed:.1}s exceeds 10s"));
        }
        Ok(())
    });
}

#[test]
fn criterion_02_envelope_theorem() {
    criterion(2, "envelope theorem", || {
        // 500 cases per mode in each dimension = 1000 per mode.
        let worst = verify::envelope_max_rel_err(|f, mode| stress(f, mode), 500, 202)
            .map_err(|e| e.to_string())?;
        if worst < 1e-6 {
            Ok(())
        } else {
            Err(format!("max rel error {worst:.3e}"))
        }
    });
}

#[test]
fn criterion_03_projection_optimality() {
    criterion(3, "projection optimality", || {
        for mode in [
            EnergyMode::Translation,
            EnergyMode::Rotation,
            EnergyMode::Scaling,
            EnergyMode::Similarity,
        ] {
            let violation =
                verify::projection_optimality_violation(&mode, 1000, 1000, 303)
                    .map_err(|e| e.to_string())?;
            if violation > 1e-12 {
                return Err(format!(
                    "mode {}: sample beats projection by {violation:.3e}",
                    mode.tag()
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_04_bridge_identities() {
    criterion(4, "bridge identities", || {
        let p1 = verify::prop1_max_err(500, 404);
        if p1 >= 1e-10 {
            return Err(format!("displacement identity max err {p1:.3e}"));
        }
        let p2 = verify::prop2_max_err(500, 405);
        if p2 >= 1e-10 {
            return Err(format!("strain identity max err {p2:.3e}"));
        }
        let p3 = verify::prop3_max_err(500, 406);
        if p3 >= 1e-10 {
            return Err(format!("deviatoric identity max err {p3:.3e}"));
        }
        let order = verify::prop4_residual_order(11, 407);
        if (order - 2.0).abs() > 0.2 {
            return Err(format!("first-order residual decay order {order:.3}"));
        }
        let p5 = verify::dirichlet_max_err(250, 408);
        if p5 >= 1e-10 {
            return Err(format!("Dirichlet equivalence max err {p5:.3e}"));
        }
        Ok(())
    });
}

#[test]
fn criterion_05_convergence_on_heart_fixtures() {
    criterion(5, "convergence and log-linear decay", || {
        let start = Instant::now();
        for dim in [2usize, 3] {
            let scenario = heart_fixture(dim);
            let dt = default_dt(&scenario.complex);
            for mode in [
                EnergyMode::Translation,
                EnergyMode::Rotation,
                EnergyMode::Scaling,
                EnergyMode::Similarity,
            ] {
                let controller = ElementController::new(scenario.complex.clone(), mode.clone());
                let trajectory = integrate(
                    &scenario,
                    &controller,
                    dt,
                    scenario.integrator.t_end,
                    IntegrationMethod::Rk4,
                )
                .map_err(|e| format!("mode {} dim {dim}: {e}", mode.tag()))?;
                let residual =
                    manifold_residual(trajectory.final_state(), &scenario.reference, &mode)
                        .map_err(|e| e.to_string())?;
                if residual >= 1e-6 {
                    return Err(format!(
                        "mode {} dim {dim}: manifold residual {residual:.3e}",
                        mode.tag()
                    ));
                }
                let r2 = log_energy_fit_r2(&trajectory, 1e-8).map_err(|e| e.to_string())?;
                if r2 <= 0.99 {
                    return Err(format!("mode {} dim {dim}: R² = {r2:.5}", mode.tag()));
                }
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= 30.0 {
            return Err(format!("runtime {elapsed:.1}s exceeds 30s"));
        }
        Ok(())
    });
}

#[test]
fn criterion_06_hessian_null_dimensions() {
    criterion(6, "Hessian null dimensions", || {
        let expectations = [
            (2usize, EnergyMode::Translation, 2usize),
            (2, EnergyMode::Rotation, 3),
            (2, EnergyMode::Scaling, 3),
            (2, EnergyMode::Similarity, 4),
            (3, EnergyMode::Translation, 3),
            (3, EnergyMode::Rotation, 6),
            (3, EnergyMode::Scaling, 4),
            (3, EnergyMode::Similarity, 7),
        ];
        for (dim, mode, expected) in expectations {
            let scenario = heart_fixture(dim);
            let report =
                hessian_null_dim(&scenario, &mode, 1e-6).map_err(|e| e.to_string())?;
            if report.null_dim != expected {
                return Err(format!(
                    "dim {dim} mode {}: null dim {} != {expected} (eigenvalues {:?})",
                    mode.tag(),
                    report.null_dim,
                    report.eigenvalues
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_07_centroid_invariance() {
    criterion(7, "centroid invariance", || {
        let t_end = 5.0;
        for dim in [2usize, 3] {
            let scenario = heart_fixture(dim);
            let dt = default_dt(&scenario.complex);
            let mut controllers: Vec<Box<dyn Controller>> = vec![
                Box::new(ElementController::new(
                    scenario.complex.clone(),
                    EnergyMode::Translation,
                )),
                Box::new(ElementController::new(
                    scenario.complex.clone(),
                    EnergyMode::Rotation,
                )),
                Box::new(ElementController::new(
                    scenario.complex.clone(),
                    EnergyMode::Scaling,
                )),
                Box::new(ElementController::new(
                    scenario.complex.clone(),
                    EnergyMode::Similarity,
                )),
            ];
            for spec in [
                ControllerSpec::Distance,
                ControllerSpec::Bearing,
                ControllerSpec::Rod,
            ] {
                controllers.push(
                    spec.bind(&scenario.reference, &scenario.complex, 1.0)
                        .map_err(|e| e.to_string())?,
                );
            }
            for controller in &controllers {
                let trajectory = integrate(
                    &scenario,
                    controller.as_ref(),
                    dt,
                    t_end,
                    IntegrationMethod::Rk4,
                )
                .map_err(|e| format!("{}: {e}", controller.label()))?;
                let c0 = trajectory.states[0].centroid();
                for state in &trajectory.states {
                    let drift = (state.centroid() - &c0).norm();
                    if drift >= 1e-8 * t_end {
                        return Err(format!(
                            "{} dim {dim}: centroid drift {drift:.3e}",
                            controller.label()
                        ));
                    }
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_08_coordinate_free_equivalence() {
    criterion(8, "coordinate-free equivalence", || {
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        for dim in [2usize, 3] {
            let scenario = heart_fixture(dim);
            let dt = default_dt(&scenario.complex);
            let frames = LocalFrames::new(
                (0..scenario.reference.len())
                    .map(|_| random_rotation(&mut rng, dim))
                    .collect(),
            )
            .map_err(|e| e.to_string())?;
            for mode in [EnergyMode::Rotation, EnergyMode::Similarity] {
                let global = ElementController::new(scenario.complex.clone(), mode.clone());
                let local = LocalFrameController {
                    complex: scenario.complex.clone(),
                    mode: mode.clone(),
                    frames: frames.clone(),
                };
                let t_end = 10.0;
                let a = integrate(&scenario, &global, dt, t_end, IntegrationMethod::Rk4)
                    .map_err(|e| e.to_string())?;
                let b = integrate(&scenario, &local, dt, t_end, IntegrationMethod::Rk4)
                    .map_err(|e| e.to_string())?;
                let gap = (a.final_state().to_flat() - b.final_state().to_flat()).norm();
                if gap >= 1e-8 {
                    return Err(format!(
                        "mode {} dim {dim}: terminal gap {gap:.3e}",
                        mode.tag()
                    ));
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_09_second_variations() {
    criterion(9, "second variations", || {
        let tr = verify::rotation_second_variation_order(11, 909);
        if (tr - 3.0).abs() > 0.3 {
            return Err(format!("rotation-mode remainder order {tr:.3}"));
        }
        let trs = verify::similarity_second_variation_order(11, 910);
        if (trs - 3.0).abs() > 0.3 {
            return Err(format!("similarity-mode remainder order {trs:.3}"));
        }
        Ok(())
    });
}

#[test]
fn criterion_10_harmonic_affine_property() {
    criterion(10, "harmonic affine property", || {
        let mut rng = ChaCha8Rng::seed_from_u64(1010);
        for scenario in [leader_fan_fixture(), heart_fixture(2)] {
            let leaders: BTreeSet<usize> = scenario.leaders.clone().unwrap();
            let design = weight_design(
                &scenario.complex,
                &scenario.reference,
                &leaders,
                1e-3,
                1e-6,
            )
            .map_err(|e| format!("{}: {e}", scenario.name))?;
            let stiffness = assemble_global(&scenario.complex, &design.weights);
            let a = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mapped: Vec<DVector<f64>> = leaders
                .iter()
                .map(|&i| &a * scenario.reference.position(i) + &b)
                .collect();
            let followers = harmonic_solve(&stiffness, &leaders, &mapped)
                .map_err(|e| e.to_string())?;
            let follower_ids: Vec<usize> = (0..scenario.reference.len())
                .filter(|i| !leaders.contains(i))
                .collect();
            for (slot, &agent) in follower_ids.iter().enumerate() {
                let expected = &a * scenario.reference.position(agent) + &b;
                let err = (&followers[slot] - expected).norm();
                if err >= 1e-8 {
                    return Err(format!(
                        "{} agent {agent}: affine reproduction error {err:.3e}",
                        scenario.name
                    ));
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_11_weight_design() {
    criterion(11, "weight design", || {
        let scenario = leader_fan_fixture();
        let leaders: BTreeSet<usize> = scenario.leaders.clone().unwrap();
        let lambda_min = 1e-6;
        let design = weight_design(
            &scenario.complex,
            &scenario.reference,
            &leaders,
            1e-3,
            lambda_min,
        )
        .map_err(|e| e.to_string())?;
        if design.equilibrium_residual >= 1e-8 {
            return Err(format!(
                "equilibrium residual {:.3e}",
                design.equilibrium_residual
            ));
        }
        if design.margin <= lambda_min {
            return Err(format!("margin {:.3e} not above lambda_min", design.margin));
        }
        for pair in design.objective_history.windows(2) {
            if pair[1] < pair[0] - 1e-12 {
                return Err(format!(
                    "objective decreased: {:.6e} -> {:.6e}",
                    pair[0], pair[1]
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_12_cov_trend_on_perturbation_grid() {
    criterion(12, "CoV trend on perturbation grid", || {
        let start = Instant::now();
        let base = heart_fixture(2);
        let grid = SweepGrid {
            x_range: (0.0, 1.2),
            y_range: (-0.4, 1.5),
            nx: 5,
            ny: 5,
        };
        let specs = vec![
            ControllerSpec::Element(EnergyMode::Rotation),
            ControllerSpec::Element(EnergyMode::Scaling),
            ControllerSpec::Element(EnergyMode::Similarity),
            ControllerSpec::Distance,
            ControllerSpec::Bearing,
            ControllerSpec::Rod,
        ];
        let cells = perturbation_sweep(&base, HEART2D_TOP_RIGHT, &grid, &specs, 1e-8, 1.0);

        let median_for = |label: &str| -> Result<f64, String> {
            let values: Vec<f64> = cells
                .iter()
                .filter(|c| c.controller == label && c.status == SweepStatus::Ok)
                .filter_map(|c| c.cov)
                .collect();
            median(&values).ok_or_else(|| format!("no defined CoV for {label}"))
        };

        let pairs = [
            ("element:TR", BaselineKind::Distance.name()),
            ("element:TS", BaselineKind::Bearing.name()),
            ("element:TRS", BaselineKind::Rod.name()),
        ];
        for (element_label, baseline_label) in pairs {
            let element_median = median_for(element_label)?;
            let baseline_median = median_for(baseline_label)?;
            println!(
                "[acceptance]   median CoV {element_label} = {element_median:.4} vs {baseline_label} = {baseline_median:.4}"
            );
            if element_median >= baseline_median {
                return Err(format!(
                    "median CoV {element_label} = {element_median:.4} not below {baseline_label} = {baseline_median:.4}"
                ));
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        if elapsed >= 300.0 {
            return Err(format!("runtime {elapsed:.1}s exceeds 5min"));
        }
        Ok(())
    });
}
