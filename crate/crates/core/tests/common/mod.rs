#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use neumann_curvature::fem::ScalarField;
use neumann_curvature::geometry::{generate_mesh, spherical, DomainSpec, Refinement, SurfaceMesh, Vec3};
use neumann_curvature::variational::{Discretization, ProblemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BAND: (f64, f64) = (PI / 4.0, 3.0 * PI / 4.0);

pub fn cap(theta: f64, h: f64) -> SurfaceMesh {
    generate_mesh(&DomainSpec::cap(theta, h)).unwrap()
}

pub fn band(h: f64) -> SurfaceMesh {
    generate_mesh(&DomainSpec::band(BAND.0, BAND.1, h)).unwrap()
}

/// Band refined for bubbles of scale `lambda` at every point in `centers`.
pub fn refined_band(h: f64, centers: &[Vec3], lambda: f64) -> SurfaceMesh {
    let spec = centers
        .iter()
        .fold(DomainSpec::band(BAND.0, BAND.1, h), |s, &c| s.with_refinement(Refinement::for_bubble(c, lambda)));
    generate_mesh(&spec).unwrap()
}

pub fn top_point() -> Vec3 {
    spherical(BAND.0, 0.0)
}

pub fn bottom_point() -> Vec3 {
    spherical(BAND.1, 0.0)
}

pub fn problem(mesh: SurfaceMesh, k: impl Fn(Vec3) -> f64, rho: f64) -> ProblemSpec {
    let kf = ScalarField::from_fn(&mesh, k);
    ProblemSpec::new(Discretization::new(mesh).unwrap(), kf, rho).unwrap()
}

pub fn problem_on(disc: &Arc<Discretization>, k: impl Fn(Vec3) -> f64, rho: f64) -> ProblemSpec {
    ProblemSpec::new(disc.clone(), ScalarField::from_fn(&disc.mesh, k), rho).unwrap()
}

/// Smooth random field: a few random low-degree terms in the coordinates.
pub fn smooth_random(mesh: &SurfaceMesh, rng: &mut ChaCha8Rng, scale: f64) -> ScalarField {
    let c: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
    ScalarField::from_fn(mesh, |x| {
        c[0] + c[1] * x[0]
            + c[2] * x[1]
            + c[3] * x[2]
            + c[4] * x[0] * x[1]
            + c[5] * x[2] * x[2]
            + c[6] * (3.0 * x[0]).sin()
    })
}

pub fn noise(mesh: &SurfaceMesh, rng: &mut ChaCha8Rng, scale: f64) -> ScalarField {
    let v = (0..mesh.num_vertices()).map(|_| rng.gen_range(-scale..scale)).collect();
    ScalarField::new(mesh, v).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
