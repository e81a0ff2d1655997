use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::refine::refine_to_sizing;
use super::{cross, dot, sphere_distance, spherical, sub, SurfaceMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    /// Geodesic cap `{x : colatitude(x) <= theta}` around the north pole.
    Cap { theta: f64 },
    /// Zone `{x : theta1 <= colatitude(x) <= theta2}`.
    Band { theta1: f64, theta2: f64 },
}

/// Local refinement around a point.
///
/// Inside `radius` the target edge length is `h`; beyond it the target grows
/// linearly with slope `grading` until it reaches the global edge length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub center: Vec3,
    pub radius: f64,
    pub h: f64,
    #[serde(default = "default_grading")]
    pub grading: f64,
}

fn default_grading() -> f64 {
    0.3
}

impl Refinement {
    /// Refinement that resolves a bubble of scale `lambda` at `center`.
    pub fn for_bubble(center: Vec3, lambda: f64) -> Self {
        Self { center, radius: 1.0 / lambda, h: 0.3 / lambda, grading: default_grading() }
    }

    fn target(&self, x: Vec3, h_global: f64) -> f64 {
        let d = sphere_distance(x, self.center);
        (self.h + self.grading * (d - self.radius).max(0.0)).min(h_global)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(flatten)]
    pub kind: DomainKind,
    /// Target edge length in radians.
    pub h: f64,
    #[serde(default)]
    pub refinements: Vec<Refinement>,
}

impl DomainSpec {
    pub fn cap(theta: f64, h: f64) -> Self {
        Self { kind: DomainKind::Cap { theta }, h, refinements: Vec::new() }
    }

    pub fn band(theta1: f64, theta2: f64, h: f64) -> Self {
        Self { kind: DomainKind::Band { theta1, theta2 }, h, refinements: Vec::new() }
    }

    pub fn with_refinement(mut self, r: Refinement) -> Self {
        self.refinements.push(r);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        match self.kind {
            DomainKind::Cap { theta } => {
                if !(theta > 0.0 && theta < PI) {
                    return bad(format!("cap colatitude {theta} outside (0, pi)"));
                }
            }
            DomainKind::Band { theta1, theta2 } => {
                if !(theta1 > 0.0 && theta1 < theta2 && theta2 < PI) {
                    return bad(format!("band colatitudes ({theta1}, {theta2}) need 0 < t1 < t2 < pi"));
                }
            }
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("edge length h = {} must be positive", self.h));
        }
        for r in &self.refinements {
            if !(r.h > 0.0 && r.h <= self.h) {
                return bad(format!("refined h = {} must lie in (0, {}]", r.h, self.h));
            }
            if !(r.radius >= 0.0 && r.grading > 0.0) {
                return bad("refinement radius must be >= 0 and grading > 0".into());
            }
            if (super::norm(r.center) - 1.0).abs() > 1e-9 {
                return bad("refinement center must be a unit vector".into());
            }
        }
        Ok(())
    }

    /// Exact area of the smooth domain.
    pub fn exact_area(&self) -> f64 {
        match self.kind {
            DomainKind::Cap { theta } => 2.0 * PI * (1.0 - theta.cos()),
            DomainKind::Band { theta1, theta2 } => 2.0 * PI * (theta1.cos() - theta2.cos()),
        }
    }

    /// Target edge length at `x` after local refinement.
    pub fn sizing(&self, x: Vec3) -> f64 {
        self.refinements.iter().map(|r| r.target(x, self.h)).fold(self.h, f64::min)
    }
}

pub fn generate_mesh(spec: &DomainSpec) -> Result<SurfaceMesh> {
    spec.validate()?;
    let (theta_start, theta_end, with_pole) = match spec.kind {
        DomainKind::Cap { theta } => (0.0, theta, true),
        DomainKind::Band { theta1, theta2 } => (theta1, theta2, false),
    };
    let symmetric = !with_pole && (theta_start + theta_end - PI).abs() < 1e-12;
    let (vertices, triangles) = if symmetric {
        mirrored_band(theta_start, spec.h)
    } else {
        ring_mesh(theta_start, theta_end, with_pole, spec.h)
    };
    let markers = vec![false; vertices.len()];
    let (vertices, triangles, markers) = if spec.refinements.is_empty() {
        (vertices, triangles, markers)
    } else {
        refine_to_sizing(vertices, triangles, markers, spec.h, |x| spec.sizing(x))?
    };
    let any_refined = markers.iter().any(|&m| m);
    SurfaceMesh::new(vertices, triangles, any_refined.then_some(markers))
}

pub fn generate_cap_mesh(spec: &DomainSpec) -> Result<SurfaceMesh> {
    match spec.kind {
        DomainKind::Cap { .. } => generate_mesh(spec),
        DomainKind::Band { .. } => Err(Error::InvalidSpec("expected a cap spec".into())),
    }
}

pub fn generate_band_mesh(spec: &DomainSpec) -> Result<SurfaceMesh> {
    match spec.kind {
        DomainKind::Band { .. } => generate_mesh(spec),
        DomainKind::Cap { .. } => Err(Error::InvalidSpec("expected a band spec".into())),
    }
}

/// Structured latitude-ring triangulation between two colatitudes.
fn ring_mesh(theta_start: f64, theta_end: f64, with_pole: bool, h: f64) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let n_gaps = ((theta_end - theta_start) / h).ceil().max(1.0) as usize;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut rings: Vec<Vec<(usize, f64)>> = Vec::new();

    let first_ring = if with_pole {
        vertices.push([0.0, 0.0, 1.0]);
        1
    } else {
        0
    };
    for k in first_ring..=n_gaps {
        let theta =
            if k == n_gaps { theta_end } else { theta_start + (theta_end - theta_start) * k as f64 / n_gaps as f64 };
        let count = ((2.0 * PI * theta.sin() / h).round() as usize).max(3);
        let step = 2.0 * PI / count as f64;
        let offset = if k % 2 == 1 { 0.5 * step } else { 0.0 };
        let ring = (0..count)
            .map(|i| {
                let phi = offset + step * i as f64;
                vertices.push(spherical(theta, phi));
                (vertices.len() - 1, phi)
            })
            .collect();
        rings.push(ring);
    }

    let mut triangles = Vec::new();
    if with_pole {
        let r = &rings[0];
        for i in 0..r.len() {
            triangles.push([0, r[i].0, r[(i + 1) % r.len()].0]);
        }
    }
    for pair in rings.windows(2) {
        stitch_rings(&pair[0], &pair[1], &mut triangles);
    }
    for t in &mut triangles {
        orient_outward(&vertices, t);
    }
    (vertices, triangles)
}

/// Band symmetric about the equator: the northern half reflected through
/// `z = 0`, so that odd functions of `z` integrate to zero.
fn mirrored_band(theta1: f64, h: f64) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let (mut vertices, top) = ring_mesh(theta1, PI / 2.0, false, h);
    let n = vertices.len();
    let mut image = vec![0; n];
    for i in 0..n {
        if vertices[i][2].abs() < 1e-12 {
            vertices[i][2] = 0.0;
            image[i] = i;
        } else {
            let [x, y, z] = vertices[i];
            vertices.push([x, y, -z]);
            image[i] = vertices.len() - 1;
        }
    }
    let mut triangles = top.clone();
    for t in &top {
        let mut m = [image[t[0]], image[t[2]], image[t[1]]];
        orient_outward(&vertices, &mut m);
        triangles.push(m);
    }
    (vertices, triangles)
}

/// Greedy merge of two closed rings sorted by azimuth.
fn stitch_rings(a: &[(usize, f64)], b: &[(usize, f64)], out: &mut Vec<[usize; 3]>) {
    let (na, nb) = (a.len(), b.len());
    let angle = |r: &[(usize, f64)], i: usize| {
        let n = r.len();
        r[i % n].1 + if i >= n { 2.0 * PI } else { 0.0 }
    };
    let (mut i, mut j) = (0, 0);
    while i < na || j < nb {
        let advance_a = j == nb || (i < na && angle(a, i + 1) <= angle(b, j + 1));
        if advance_a {
            out.push([a[i % na].0, a[(i + 1) % na].0, b[j % nb].0]);
            i += 1;
        } else {
            out.push([a[i % na].0, b[j % nb].0, b[(j + 1) % nb].0]);
            j += 1;
        }
    }
}

pub(super) fn orient_outward(vertices: &[Vec3], t: &mut [usize; 3]) {
    let (pa, pb, pc) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    let n = cross(sub(pb, pa), sub(pc, pa));
    let c = [pa[0] + pb[0] + pc[0], pa[1] + pb[1] + pc[1], pa[2] + pb[2] + pc[2]];
    if dot(n, c) < 0.0 {
        t.swap(1, 2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::boundary_components;

    #[test]
    fn hemisphere_area() {
        let m = generate_mesh(&DomainSpec::cap(PI / 2.0, 0.05)).unwrap();
        assert!((m.area() / (2.0 * PI) - 1.0).abs() < 0.01);
        assert!((m.rho_geometric() / (4.0 * PI) - 1.0).abs() < 0.01);
    }

    #[test]
    fn large_cap_area_and_topology() {
        let spec = DomainSpec::cap(2.0 * PI / 3.0, 0.05);
        let m = generate_cap_mesh(&spec).unwrap();
        let exact = 2.0 * PI * (1.0 - (2.0 * PI / 3.0).cos());
        assert!((exact - 3.0 * PI).abs() < 1e-12);
        assert!((m.area() / exact - 1.0).abs() < 0.01);
        assert!((m.rho_geometric() / (6.0 * PI) - 1.0).abs() < 0.01);
        assert_eq!(m.euler_characteristic(), 1);
        assert_eq!(boundary_components(&m).unwrap().len(), 1);
    }

    #[test]
    fn band_area_and_loops() {
        let m = generate_band_mesh(&DomainSpec::band(PI / 4.0, 3.0 * PI / 4.0, 0.05)).unwrap();
        let exact = 2.0 * PI * 2f64.sqrt();
        assert!((m.area() / exact - 1.0).abs() < 0.01);
        assert!((m.rho_geometric() / (4.0 * PI * 2f64.sqrt()) - 1.0).abs() < 0.01);
        assert_eq!(m.boundary_loops().len(), 2);
        assert_eq!(m.euler_characteristic(), 0);
        // Loop 0 is the upper circle.
        let top = &m.boundary_loops()[0];
        assert!(top.iter().all(|&v| (m.vertices()[v][2] - (PI / 4.0).cos()).abs() < 1e-12));
    }

    #[test]
    fn critical_band() {
        let m = generate_mesh(&DomainSpec::band(PI / 3.0, 2.0 * PI / 3.0, 0.05)).unwrap();
        assert!((m.area() / (2.0 * PI) - 1.0).abs() < 0.01);
        assert!((m.rho_geometric() / (4.0 * PI) - 1.0).abs() < 0.01);
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(generate_mesh(&DomainSpec::cap(0.0, 0.05)), Err(Error::InvalidSpec(_))));
        assert!(matches!(generate_mesh(&DomainSpec::band(0.5, 0.5, 0.05)), Err(Error::InvalidSpec(_))));
        assert!(matches!(generate_mesh(&DomainSpec::cap(1.0, -0.1)), Err(Error::InvalidSpec(_))));
        assert!(generate_band_mesh(&DomainSpec::cap(1.0, 0.1)).is_err());
        let coarse_refine = DomainSpec::cap(1.0, 0.1).with_refinement(Refinement {
            center: [0.0, 0.0, 1.0],
            radius: 0.1,
            h: 0.2,
            grading: 0.3,
        });
        assert!(matches!(generate_mesh(&coarse_refine), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn deterministic() {
        let spec = DomainSpec::band(0.7, 2.0, 0.08).with_refinement(Refinement::for_bubble(spherical(0.7, 0.0), 16.0));
        let a = generate_mesh(&spec).unwrap();
        let b = generate_mesh(&spec).unwrap();
        assert_eq!(a.id(), b.id());
    }

    #[test]
    fn refinement_resolves_bubble_scale() {
        let p = spherical(PI / 4.0, 0.0);
        let spec = DomainSpec::band(PI / 4.0, 3.0 * PI / 4.0, 0.05).with_refinement(Refinement::for_bubble(p, 32.0));
        let m = generate_mesh(&spec).unwrap();
        let v = m.nearest_boundary_vertex(p).unwrap();
        assert!(sphere_distance(m.vertices()[v], p) < 1e-12);
        assert!(m.local_edge_length(p, 1.0 / 32.0) <= 0.3 / 32.0 + 1e-12);
        assert!(m.refinement_markers().is_some());
        let exact = spec.exact_area();
        assert!((m.area() / exact - 1.0).abs() < 0.01);
        assert_eq!(m.boundary_loops().len(), 2);
    }
}
