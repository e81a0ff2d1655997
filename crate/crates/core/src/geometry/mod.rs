//! Triangulated subdomains of the unit sphere.

mod domain;
mod mesh;
mod refine;

pub use domain::{generate_band_mesh, generate_cap_mesh, generate_mesh, DomainKind, DomainSpec, Refinement};
pub use mesh::{boundary_components, extract_boundary_loops, MeshId, SurfaceMesh};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub const NORTH_POLE: Vec3 = [0.0, 0.0, 1.0];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// Point on the unit sphere at colatitude `theta` and azimuth `phi`.
pub fn spherical(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Colatitude of a unit vector, in `[0, pi]`.
pub fn colatitude(x: Vec3) -> f64 {
    x[2].clamp(-1.0, 1.0).acos()
}

/// Great-circle distance without input validation.
///
/// Uses `2 atan2(|x - y|, |x + y|)`, which equals the clamped arccos of the
/// inner product but stays accurate for nearly coincident or antipodal points.
#[inline]
pub fn sphere_distance(x: Vec3, y: Vec3) -> f64 {
    2.0 * norm(sub(x, y)).atan2(norm(add(x, y)))
}

/// Great-circle distance between two unit vectors.
pub fn geodesic_distance(x: Vec3, y: Vec3) -> Result<f64> {
    for p in [x, y] {
        let n = norm(p);
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPoint { norm: n });
        }
    }
    Ok(sphere_distance(x, y))
}

/// Euclidean distance in R^3.
#[inline]
pub fn euclidean_distance(x: Vec3, y: Vec3) -> f64 {
    norm(sub(x, y))
}

/// Exterior parallel set: vertices at geodesic distance `< delta` from the seed set.
///
/// Returned as a sorted list of vertex indices. Distances are exact sphere
/// distances to every seed vertex, not graph distances.
pub fn parallel_set(mesh: &SurfaceMesh, seeds: &[usize], delta: f64) -> Result<Vec<usize>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("parallel set of an empty vertex set".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("parallel set radius must be positive, got {delta}")));
    }
    let n = mesh.num_vertices();
    if let Some(&bad) = seeds.iter().find(|&&s| s >= n) {
        return Err(Error::InvalidArgument(format!("seed vertex {bad} out of range")));
    }
    let verts = mesh.vertices();
    let seed_points: Vec<Vec3> = seeds.iter().map(|&s| verts[s]).collect();
    let inside = crate::parallel::map_range(n, |i| seed_points.iter().any(|&p| sphere_distance(verts[i], p) < delta));
    let mut out: Vec<usize> = inside.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect();
    // Seeds are at distance zero from themselves; keep them even if delta underflows.
    for &s in seeds {
        if let Err(pos) = out.binary_search(&s) {
            out.insert(pos, s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn distance_examples() {
        let d = geodesic_distance([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]).unwrap();
        assert!((d - PI / 2.0).abs() < 1e-15);
        let x = normalize([0.3, -0.2, 0.9]);
        assert_eq!(geodesic_distance(x, x).unwrap(), 0.0);
        let d = geodesic_distance([0.0, 0.0, 1.0], [0.0, 0.0, -1.0]).unwrap();
        assert_eq!(d, PI);
    }

    #[test]
    fn non_unit_input_rejected() {
        assert!(matches!(geodesic_distance([0.0, 0.0, 1.1], [1.0, 0.0, 0.0]), Err(Error::InvalidPoint { .. })));
    }

    #[test]
    fn spherical_round_trip() {
        let p = spherical(0.7, 2.1);
        assert!((norm(p) - 1.0).abs() < 1e-15);
        assert!((colatitude(p) - 0.7).abs() < 1e-14);
    }
}
