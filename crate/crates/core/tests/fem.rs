mod common;

use std::f64::consts::PI;

use common::*;
use neumann_curvature::bubbles::{bubble_field, BubbleSpec};
use neumann_curvature::fem::*;
use neumann_curvature::geometry::{dot, sub, SurfaceMesh};
use neumann_curvature::Error;
use proptest::prelude::*;

/// `Σ_T |T| |∇u|²` with the gradient from the Gram matrix of each flat triangle.
fn brute_force_dirichlet(mesh: &SurfaceMesh, u: &[f64]) -> f64 {
    let v = mesh.vertices();
    mesh.triangles()
        .iter()
        .map(|t| {
            let e1 = sub(v[t[1]], v[t[0]]);
            let e2 = sub(v[t[2]], v[t[0]]);
            let (g11, g12, g22) = (dot(e1, e1), dot(e1, e2), dot(e2, e2));
            let det = g11 * g22 - g12 * g12;
            let (d1, d2) = (u[t[1]] - u[t[0]], u[t[2]] - u[t[0]]);
            let grad2 = (g22 * d1 * d1 - 2.0 * g12 * d1 * d2 + g11 * d2 * d2) / det;
            0.5 * det.sqrt() * grad2
        })
        .sum()
}

/// Two-pass shifted sum with Neumaier compensation.
fn careful_log_sum(m: &[f64], u: &[f64]) -> (f64, f64) {
    let umax = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (mi, ui) in m.iter().zip(u) {
        let x = mi * (ui - umax).exp();
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    let s = s + c;
    (s * umax.exp(), umax + s.ln())
}

#[test]
fn stiffness_kernel_and_symmetry() {
    for mesh in [cap(2.0 * PI / 3.0, 0.08), band(0.08), refined_band(0.1, &[top_point()], 16.0)] {
        let s = assemble_stiffness(&mesh).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        assert!(s.apply(&ones).iter().all(|v| v.abs() <= 1e-10));
        assert!(s.matrix().asymmetry() <= 1e-12);
    }
}

#[test]
fn dirichlet_energy_of_z_on_cap() {
    let mesh = cap(2.0 * PI / 3.0, 0.05);
    let s = assemble_stiffness(&mesh).unwrap();
    let z: Vec<f64> = mesh.vertices().iter().map(|x| x[2]).collect();
    let exact = 2.0 * PI * 9.0 / 8.0;
    assert!(rel_err(dirichlet_energy(&z, &s), exact) < 0.02);
}

#[test]
fn quadratic_form_matches_per_triangle_gradients() {
    let mesh = band(0.1);
    let s = assemble_stiffness(&mesh).unwrap();
    let mut r = rng(3);
    for _ in 0..5 {
        let u = noise(&mesh, &mut r, 1.0);
        let a = dirichlet_energy(u.values(), &s);
        let b = brute_force_dirichlet(&mesh, u.values());
        assert!(rel_err(a, b) <= 1e-12, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stiffness_is_positive_on_mean_zero_fields(seed in 0u64..10_000) {
        let mesh = cap(1.0, 0.15);
        let s = assemble_stiffness(&mesh).unwrap();
        let m = assemble_lumped_mass(&mesh);
        let mut u = noise(&mesh, &mut rng(seed), 1.0).into_values();
        let mean = m.mean(&u);
        u.iter_mut().for_each(|v| *v -= mean);
        prop_assert!(dirichlet_energy(&u, &s) > 0.0);
    }

    #[test]
    fn stabilized_integral_matches_naive(seed in 0u64..10_000, scale in 0.1..20.0f64) {
        let mesh = cap(1.0, 0.15);
        let m = assemble_lumped_mass(&mesh);
        let u = noise(&mesh, &mut rng(seed), scale);
        let naive: f64 = m.weights().iter().zip(u.values()).map(|(mi, ui)| mi * ui.exp()).sum();
        let stable = integrate_weighted_exp(&m, u.values(), None);
        prop_assert!(rel_err(stable.value, naive) <= 1e-13);
    }
}

#[test]
fn lumped_mass_properties() {
    let coarse = cap(2.0 * PI / 3.0, 0.1);
    let fine = cap(2.0 * PI / 3.0, 0.05);
    for mesh in [&coarse, &fine] {
        let m = assemble_lumped_mass(mesh);
        assert_eq!(m.total(), mesh.area());
        assert!(m.weights().iter().all(|&w| w > 0.0));
    }
    let mean = |mesh: &SurfaceMesh| mesh.area() / mesh.num_vertices() as f64;
    let ratio = mean(&fine) / mean(&coarse);
    assert!((0.2..0.3).contains(&ratio), "{ratio}");
}

#[test]
fn exponential_integrals() {
    let mesh = cap(2.0 * PI / 3.0, 0.05);
    let m = assemble_lumped_mass(&mesh);
    let zero = vec![0.0; mesh.num_vertices()];
    assert!(rel_err(integrate_weighted_exp(&m, &zero, None).value, 3.0 * PI) < 0.01);

    let b = band(0.05);
    let mb = assemble_lumped_mass(&b);
    let z: Vec<f64> = b.vertices().iter().map(|x| x[2]).collect();
    let zb = vec![0.0; b.num_vertices()];
    assert!(integrate_weighted_exp(&mb, &zb, Some(&z)).value.abs() <= 1e-10 * b.area());
}

#[test]
fn bubble_exponential_matches_careful_sum() {
    let mesh = cap(2.0 * PI / 3.0, 0.05);
    let m = assemble_lumped_mass(&mesh);
    let psi = bubble_field(&BubbleSpec::new([0.0, 0.0, 1.0], 1000.0).unwrap(), &mesh).unwrap();
    assert!(psi.max() > 27.0);
    let got = integrate_weighted_exp(&m, psi.values(), None);
    let (value, log) = careful_log_sum(m.weights(), psi.values());
    assert!(rel_err(got.value, value) <= 1e-12);
    assert!(rel_err(got.log_abs, log) <= 1e-12);
}

#[test]
fn poisson_examples() {
    let mesh = cap(2.0 * PI / 3.0, 0.05);
    let s = assemble_stiffness(&mesh).unwrap();
    let m = assemble_lumped_mass(&mesh);
    let zero = ScalarField::zeros(&mesh);
    let u = solve_poisson_neumann(&s, &m, &zero, PoissonOptions::default()).unwrap();
    assert!(u.values().iter().all(|&v| v == 0.0));

    let one = ScalarField::constant(&mesh, 1.0);
    assert!(matches!(solve_poisson_neumann(&s, &m, &one, PoissonOptions::default()), Err(Error::Compatibility { .. })));

    let zbar = m.mean(&mesh.vertices().iter().map(|x| x[2]).collect::<Vec<_>>());
    let f = ScalarField::from_fn(&mesh, |x| x[2] - zbar);
    let u = solve_poisson_neumann(&s, &m, &f, PoissonOptions::default()).unwrap();
    let mf: Vec<f64> = f.values().iter().zip(m.weights()).map(|(v, w)| v * w).collect();
    let su = s.apply(u.values());
    let res: f64 = su.iter().zip(&mf).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let rhs: f64 = mf.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(res <= 1e-10 * rhs, "{res:e} vs {rhs:e}");
    assert!(m.mean(u.values()).abs() <= 1e-12);
}

#[test]
fn manufactured_poisson_solution() {
    let mesh = band(0.08);
    let s = assemble_stiffness(&mesh).unwrap();
    let m = assemble_lumped_mass(&mesh);
    let mut r = rng(11);
    let exact = smooth_random(&mesh, &mut r, 1.0);
    let su = s.apply(exact.values());
    let f = exact.with_values(su.iter().zip(m.weights()).map(|(v, w)| v / w).collect());
    let u = solve_poisson_neumann(&s, &m, &f, PoissonOptions::default()).unwrap();
    let shift = m.mean(exact.values());
    let err = u.values().iter().zip(exact.values()).map(|(a, b)| (a - (b - shift)).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-7, "{err:e}");
}

#[test]
fn dirichlet_energy_ignores_constants() {
    let mesh = band(0.1);
    let s = assemble_stiffness(&mesh).unwrap();
    let c = vec![3.7; mesh.num_vertices()];
    assert!(dirichlet_energy(&c, &s).abs() <= 1e-10 * 3.7 * 3.7);
    let u = smooth_random(&mesh, &mut rng(5), 1.0);
    let a = dirichlet_energy(u.values(), &s);
    let b = dirichlet_energy(u.shifted(5.0).values(), &s);
    assert!(rel_err(b, a) <= 1e-10);
}

#[test]
fn field_csv_round_trip_is_exact() {
    let mesh = band(0.15);
    let u = noise(&mesh, &mut rng(9), 3.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    u.write_csv(&mesh, &path).unwrap();
    let back = ScalarField::read_csv(&mesh, &path).unwrap();
    assert_eq!(back.values(), u.values());
}
