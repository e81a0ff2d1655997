mod common;

use std::f64::consts::PI;

use common::*;
use neumann_curvature::bubbles::{bubble_field, snap_center, BubbleSpec, Placement};
use neumann_curvature::fem::ScalarField;
use neumann_curvature::geometry::{generate_mesh, DomainSpec};
use neumann_curvature::solvers::*;
use neumann_curvature::variational::{energy_gradient, energy_value, geometric_residual, Discretization};
use neumann_curvature::Error;

fn sup(u: &ScalarField) -> f64 {
    u.values().iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn newton_tol(tol: f64) -> NewtonConfig {
    NewtonConfig { tol, ..Default::default() }
}

#[test]
fn newton_recovers_the_round_metric() {
    let mesh = cap(2.0 * PI / 3.0, 0.05);
    let area = mesh.area();
    let spec = problem(mesh, |_| 1.0, 2.0 * area);
    let u0 = ScalarField::from_fn(spec.mesh(), |x| 0.1 * x[2]);
    let r = newton_solve(&u0, &spec, &newton_tol(1e-13)).unwrap();
    assert!(r.converged());
    assert!(r.residual < 1e-12, "{}", r.residual);
    assert!(sup(&r.u) < 1e-10);
    assert!(r.iterations <= 5, "{}", r.iterations);
    assert!(spec.mass().mean(r.u.values()).abs() < 1e-12);
}

#[test]
fn newton_rejects_inadmissible_start() {
    let spec = problem(band(0.1), |x| x[2], 17.0);
    let u0 = ScalarField::from_fn(spec.mesh(), |x| -5.0 * x[2]);
    assert!(spec.curvature_mass(&u0).value < 0.0);
    assert!(matches!(newton_solve(&u0, &spec, &NewtonConfig::default()), Err(Error::NotInAdmissibleSet { .. })));
    assert!(matches!(minimize(&u0, &spec, &MinimizeConfig::default()), Err(Error::NotInAdmissibleSet { .. })));
}

#[test]
fn minimize_in_the_coercive_range() {
    let mesh = cap(PI / 3.0, 0.05);
    let area = mesh.area();
    assert!(2.0 * area < 4.0 * PI);
    let spec = problem(mesh, |_| 1.0, 2.0 * area);
    let u0 = noise(spec.mesh(), &mut rng(7), 0.1);
    let r = minimize(&u0, &spec, &MinimizeConfig::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    assert!(sup(&r.u) <= 1e-6, "{}", sup(&r.u));

    let spec = problem(cap(PI / 3.0, 0.05), |x| 1.0 + 0.5 * x[2], 2.0 * area);
    let r = minimize(&u0, &spec, &MinimizeConfig::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    assert!(r.residual <= 1e-8);
    let g = energy_gradient(&r.u, &spec).unwrap();
    assert!(g.values().iter().sum::<f64>().abs() < 1e-10);
}

#[test]
fn minimize_follows_a_boundary_bubble() {
    let p = top_point();
    let mesh = refined_band(0.05, &[p], 32.0);
    let v = snap_center(&mesh, p, Placement::Boundary).unwrap();
    let u0 = bubble_field(&BubbleSpec::new(mesh.vertices()[v], 32.0).unwrap(), &mesh).unwrap();
    let spec = problem(mesh, |_| 1.0, 4.0 * PI * 2f64.sqrt());
    let r = minimize(&u0, &spec, &MinimizeConfig::default()).unwrap();
    assert_eq!(r.status, SolveStatus::BlowUpDetected);
    let c = r.concentration.unwrap();
    assert!(c.max_minus_mean > 25.0);
    assert!(c.distance_to_omega_plus.unwrap() <= 0.15);
    assert!(energy_value(&r.u, &spec).unwrap().unwrap() < energy_value(&u0, &spec).unwrap().unwrap());
}

#[test]
fn mountain_pass_regime_guards() {
    let spec = problem(band(0.1), |_| 1.0, 2.0 * PI);
    assert!(matches!(mountain_pass(&spec, &SolverConfig::default()), Err(Error::WrongRegime(_))));
    let spec = problem(cap(2.0 * PI / 3.0, 0.1), |x| x[2], 6.0 * PI);
    assert!(matches!(mountain_pass(&spec, &SolverConfig::default()), Err(Error::WrongRegime(_))));
}

fn quick_path(samples: usize) -> SolverConfig {
    let mut c = SolverConfig::default();
    c.path.samples_per_loop = samples;
    c
}

#[test]
fn mountain_pass_on_the_round_band() {
    let spec = problem(band(0.1), |_| 1.0, 4.0 * PI * 2f64.sqrt());
    let mp = mountain_pass(&spec, &quick_path(2)).unwrap();
    let n = mp.path.energies.len();
    let ends = [mp.path.energies[0], mp.path.energies[n - 1]];
    assert!(mp.alpha.is_finite());
    assert!(mp.alpha >= ends[0].max(ends[1]));
    assert!(mp.alpha_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(mp.result.converged());
    assert!(mp.result.residual <= 1e-8);
    let d = negative_direction(&mp.result.u, &spec, Some(&mp.tangent()), 20).unwrap();
    assert!(d.negative, "{}", d.rayleigh_quotient);
}

#[test]
fn mountain_pass_with_sign_changing_curvature() {
    let spec = problem(band(0.1), |x| x[2], 4.0 * PI * 2f64.sqrt());
    let mp = mountain_pass(&spec, &quick_path(2)).unwrap();
    assert!(mp.result.converged());
    assert!(mp.result.residual <= 1e-8, "{}", mp.result.residual);
    for c in &mp.candidates {
        assert!(c.alpha >= c.endpoint_energies.iter().copied().fold(f64::INFINITY, f64::min));
    }
    let d = negative_direction(&mp.result.u, &spec, Some(&mp.tangent()), 20).unwrap();
    assert!(d.negative);
}

#[test]
fn newton_from_a_mountain_pass_start() {
    let mesh = cap(2.0 * PI / 3.0, 0.1);
    let spec = problem(mesh, |x| 1.0 + 0.1 * x[2], 6.0 * PI);
    let mp = mountain_pass(&spec, &quick_path(2)).unwrap();
    let r = newton_solve(&mp.result.u, &spec, &NewtonConfig::default()).unwrap();
    assert!(r.converged());
    assert!(r.residual <= 1e-10);
}

#[test]
fn continuation_across_four_pi() {
    let mesh = band(0.1);
    let disc = Discretization::new(mesh).unwrap();
    let spec = problem_on(&disc, |_| 1.0, 17.0);
    let base = 4.0 * PI * 2f64.sqrt();
    let grid: Vec<f64> = [0.70, 0.71, 0.72, 0.73, 0.74].iter().map(|f| f * base).collect();
    let sweep = rho_continuation(&spec, &grid, &quick_path(2)).unwrap();
    assert!(sweep.all_converged());
    assert!(sweep.monotone, "{:?}", sweep.violations);
    assert!(sweep.rows.iter().skip(1).all(|r| r.iterations <= 8));

    let mut rev = grid.clone();
    rev.reverse();
    assert!(matches!(rho_continuation(&spec, &rev, &quick_path(2)), Err(Error::InvalidArgument(_))));
    assert!(matches!(rho_continuation(&spec, &[], &quick_path(2)), Err(Error::InvalidArgument(_))));
}

#[test]
fn continuation_through_the_geometric_value() {
    let disc = Discretization::new(band(0.1)).unwrap();
    let geo = 2.0 * disc.area();
    let spec = problem_on(&disc, |_| 1.0, geo);
    let grid: Vec<f64> = [0.99, 1.0, 1.01].iter().map(|f| f * geo).collect();
    let sweep = rho_continuation(&spec, &grid, &quick_path(2)).unwrap();
    assert!(sweep.all_converged());
    let g = sweep.rows[1].geometric_residual.unwrap();
    assert!(g <= 1e-8, "{g}");
    let direct = geometric_residual(&sweep.solutions[1], &spec).unwrap();
    assert_eq!(g, direct);
    assert!(sweep.rows[0].geometric_residual.is_none());
}

#[test]
fn warm_started_newton_on_a_fine_step() {
    let disc = Discretization::new(band(0.1)).unwrap();
    let base = problem_on(&disc, |x| 1.0 + 0.3 * x[0], 17.0);
    let mp = mountain_pass(&base, &quick_path(2)).unwrap();
    assert!(mp.result.converged());
    let next = base.with_rho(17.0 + 0.02 * 4.0 * PI).unwrap();
    let r = newton_solve(&mp.result.u, &next, &NewtonConfig::default()).unwrap();
    assert!(r.converged());
    assert!(r.iterations <= 8, "{}", r.iterations);
}

#[test]
fn coercive_minimum_has_no_negative_direction() {
    let mesh = generate_mesh(&DomainSpec::cap(PI / 3.0, 0.1)).unwrap();
    let area = mesh.area();
    let spec = problem(mesh, |_| 1.0, 2.0 * area);
    let d = negative_direction(&ScalarField::zeros(spec.mesh()), &spec, None, 20).unwrap();
    assert!(!d.negative);
    assert!(d.rayleigh_quotient > 0.0);
}
