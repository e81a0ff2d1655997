//! P1 finite elements on flat-triangle approximations of spherical domains.
//!
//! Integrals use the lumped (vertex) quadrature throughout, so the discrete
//! energy and its gradient are exactly consistent with each other.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{cross, dot, norm, sub, MeshId, SurfaceMesh, Vec3};
use crate::linalg::{conjugate_gradient, CsrMatrix, KrylovOptions};
use crate::parallel;

/// One real value per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    mesh_id: MeshId,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: &SurfaceMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::MeshMismatch { expected: mesh.num_vertices(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("field value at vertex {i} is not finite")));
        }
        Ok(Self { mesh_id: mesh.id(), values })
    }

    pub fn constant(mesh: &SurfaceMesh, c: f64) -> Self {
        Self { mesh_id: mesh.id(), values: vec![c; mesh.num_vertices()] }
    }

    pub fn zeros(mesh: &SurfaceMesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    /// Evaluates `f` at every vertex position.
    pub fn from_fn(mesh: &SurfaceMesh, f: impl Fn(Vec3) -> f64) -> Self {
        Self { mesh_id: mesh.id(), values: mesh.vertices().iter().map(|&x| f(x)).collect() }
    }

    /// Field on the same mesh with different values. Lengths must agree.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len(), "field length mismatch");
        Self { mesh_id: self.mesh_id, values }
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `self + c`.
    pub fn shifted(&self, c: f64) -> Self {
        self.with_values(self.values.iter().map(|v| v + c).collect())
    }

    /// `self + t * dir`.
    pub fn add_scaled(&self, t: f64, dir: &[f64]) -> Self {
        self.with_values(self.values.iter().zip(dir).map(|(u, d)| u + t * d).collect())
    }

    pub fn check_mesh(&self, mesh: &SurfaceMesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.values.len() != mesh.num_vertices() {
            return Err(Error::MeshMismatch { expected: mesh.num_vertices(), got: self.values.len() });
        }
        Ok(())
    }

    /// CSV with columns `vertex,x,y,z,value`.
    pub fn write_csv(&self, mesh: &SurfaceMesh, path: &Path) -> Result<()> {
        self.check_mesh(mesh)?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["vertex", "x", "y", "z", "value"])?;
        for (i, (x, v)) in mesh.vertices().iter().zip(&self.values).enumerate() {
            w.write_record([
                i.to_string(),
                crate::output::fmt17(x[0]),
                crate::output::fmt17(x[1]),
                crate::output::fmt17(x[2]),
                crate::output::fmt17(*v),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `value` column of a CSV written by [`ScalarField::write_csv`].
    pub fn read_csv(mesh: &SurfaceMesh, path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = headers
            .iter()
            .position(|h| h == "value")
            .ok_or_else(|| Error::Parse { path: path.to_path_buf(), message: "missing `value` column".into() })?;
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let v = rec.get(col).and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                message: format!("record {}: bad value", line + 1),
            })?;
            values.push(v);
        }
        Self::new(mesh, values)
    }
}

/// Cotangent-weight P1 stiffness matrix, `uᵀ S u = ∫ |∇u|²`.
#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    mesh_id: MeshId,
    matrix: CsrMatrix,
}

impl StiffnessMatrix {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul(x)
    }
}

/// Lumped mass: one third of the incident triangle areas per vertex.
#[derive(Debug, Clone)]
pub struct LumpedMass {
    mesh_id: MeshId,
    weights: Vec<f64>,
    total: f64,
}

impl LumpedMass {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    /// Lumped integral `Σ m_i f_i`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(m, v)| m * v).sum()
    }

    /// Lumped average.
    pub fn mean(&self, f: &[f64]) -> f64 {
        self.integrate(f) / self.total
    }

    /// `sqrt(gᵀ M⁻¹ g)`, the dual norm of a load vector.
    pub fn dual_norm(&self, g: &[f64]) -> f64 {
        self.weights.iter().zip(g).map(|(m, v)| v * v / m).sum::<f64>().sqrt()
    }

    /// `sqrt(Σ m_i f_i²)`.
    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(m, v)| m * v * v).sum::<f64>().sqrt()
    }
}

/// Element stiffness entries `(e_i · e_j) / (4A)` for the three vertex pairs
/// (0,1), (1,2), (2,0), where `e_k` is the edge opposite vertex `k`.
fn element_offdiagonal(p: [Vec3; 3]) -> ([f64; 3], f64) {
    let e = [sub(p[2], p[1]), sub(p[0], p[2]), sub(p[1], p[0])];
    let area = 0.5 * norm(cross(e[0], e[1]));
    let inv = 1.0 / (4.0 * area);
    ([dot(e[0], e[1]) * inv, dot(e[1], e[2]) * inv, dot(e[2], e[0]) * inv], area)
}

pub fn assemble_stiffness(mesh: &SurfaceMesh) -> Result<StiffnessMatrix> {
    let n = mesh.num_vertices();
    let verts = mesh.vertices();
    let tris = mesh.triangles();

    let local = parallel::map(tris, |t| element_offdiagonal([verts[t[0]], verts[t[1]], verts[t[2]]]));
    if let Some((index, (_, area))) = local.iter().enumerate().find(|(_, (_, a))| !(*a >= 1e-14)) {
        return Err(Error::DegenerateTriangle { index, area: *area });
    }

    let mut pattern: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for t in tris {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            pattern[a].push(b);
            pattern[b].push(a);
        }
    }
    let mut matrix = CsrMatrix::from_pattern(pattern);
    // Sequential accumulation keeps the floating-point sum order fixed.
    for (t, (off, _)) in tris.iter().zip(&local) {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            matrix.add(a, b, off[k]);
            matrix.add(b, a, off[k]);
        }
    }
    for i in 0..n {
        let s: f64 = matrix.row(i).filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
        matrix.set(i, i, -s);
    }
    Ok(StiffnessMatrix { mesh_id: mesh.id(), matrix })
}

/// `∫|∇u|²` restricted to the triangles selected by `keep`.
pub fn dirichlet_energy_on(mesh: &SurfaceMesh, u: &[f64], keep: impl Fn(usize) -> bool) -> f64 {
    let verts = mesh.vertices();
    let mut total = 0.0;
    for (index, t) in mesh.triangles().iter().enumerate() {
        if !keep(index) {
            continue;
        }
        let (off, _) = element_offdiagonal([verts[t[0]], verts[t[1]], verts[t[2]]]);
        for k in 0..3 {
            let d = u[t[k]] - u[t[(k + 1) % 3]];
            total -= off[k] * d * d;
        }
    }
    total
}

pub fn assemble_lumped_mass(mesh: &SurfaceMesh) -> LumpedMass {
    let mut weights = vec![0.0; mesh.num_vertices()];
    for (t, &a) in mesh.triangles().iter().zip(mesh.triangle_areas()) {
        for &v in t {
            weights[v] += a / 3.0;
        }
    }
    // Same summation as `SurfaceMesh::area` so that the two agree.
    let total = mesh.area();
    LumpedMass { mesh_id: mesh.id(), weights, total }
}

/// Signed lumped integral of `w e^u` with its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpIntegral {
    /// `Σ m_i w_i e^{u_i}`; may overflow to infinity for very large `u`.
    pub value: f64,
    /// `log |value|`, finite whenever the sum is nonzero.
    pub log_abs: f64,
    /// Sign of the sum: -1, 0 or 1.
    pub sign: f64,
}

/// Above this maximum the sum is computed with a max shift; below it the
/// plain sum is exact and used directly.
pub const EXP_SHIFT_THRESHOLD: f64 = 30.0;

pub fn integrate_weighted_exp(mass: &LumpedMass, u: &[f64], w: Option<&[f64]>) -> ExpIntegral {
    let umax = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weight = |i: usize| w.map_or(1.0, |w| w[i]);
    let m = mass.weights();
    if umax <= EXP_SHIFT_THRESHOLD {
        let s: f64 = (0..u.len()).map(|i| m[i] * weight(i) * u[i].exp()).sum();
        return ExpIntegral { value: s, log_abs: s.abs().ln(), sign: sign(s) };
    }
    let s: f64 = (0..u.len()).map(|i| m[i] * weight(i) * (u[i] - umax).exp()).sum();
    ExpIntegral { value: s * umax.exp(), log_abs: umax + s.abs().ln(), sign: sign(s) }
}

fn sign(s: f64) -> f64 {
    if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `uᵀ S u = ∫ |∇u|²`.
pub fn dirichlet_energy(u: &[f64], s: &StiffnessMatrix) -> f64 {
    s.matrix.quadratic_form(u)
}

#[derive(Debug, Clone, Copy)]
pub struct PoissonOptions {
    pub rtol: f64,
    pub max_iter: usize,
    pub precondition: bool,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, max_iter: 20_000, precondition: true }
    }
}

/// Solves `S u = M f` for mean-zero `u`. Requires `Σ m_i f_i ≈ 0`.
pub fn solve_poisson_neumann(
    s: &StiffnessMatrix,
    mass: &LumpedMass,
    f: &ScalarField,
    opts: PoissonOptions,
) -> Result<ScalarField> {
    if f.mesh_id() != s.mesh_id || f.mesh_id() != mass.mesh_id {
        return Err(Error::MeshMismatch { expected: mass.weights.len(), got: f.len() });
    }
    let fnorm = f.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let sum = mass.integrate(f.values());
    let tol = 1e-8 * fnorm * mass.total;
    if sum.abs() > tol {
        return Err(Error::Compatibility { sum, tol });
    }
    let b: Vec<f64> = mass.weights.iter().zip(f.values()).map(|(m, v)| m * v).collect();
    let u = solve_neumann_load(s, mass, &b, opts)?;
    Ok(f.with_values(u))
}

/// Solves `S u = b` for a load vector `b` with `Σ b_i ≈ 0`; returns the
/// lumped-mean-zero solution.
pub fn solve_neumann_load(s: &StiffnessMatrix, mass: &LumpedMass, b: &[f64], opts: PoissonOptions) -> Result<Vec<f64>> {
    let mut b = b.to_vec();
    // Remove the (tolerated) incompatible part along the constant null space.
    let shift = b.iter().sum::<f64>() / mass.total;
    b.iter_mut().zip(&mass.weights).for_each(|(bi, m)| *bi -= shift * m);
    let diag = s.matrix.diagonal();
    let out = conjugate_gradient(
        |x, y| s.matrix.mul_into(x, y),
        Some(&diag),
        &b,
        true,
        KrylovOptions { rtol: opts.rtol, max_iter: opts.max_iter, precondition: opts.precondition },
    );
    if !out.converged {
        return Err(Error::NoConvergence {
            solver: "conjugate gradients",
            iterations: out.iterations,
            residual: out.relative_residual,
        });
    }
    let mut u = out.x;
    let mean = mass.mean(&u);
    u.iter_mut().for_each(|v| *v -= mean);
    Ok(u)
}
