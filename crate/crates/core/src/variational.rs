//! Discrete energy functional, its derivatives, gauge fixing and the center
//! of mass map.
//!
//! With lumped quadrature the energy is
//! `I(u) = ½ uᵀSu + c Σ mᵢuᵢ − ρ log Σ mᵢKᵢe^{uᵢ}` with `c = ρ/|Σ|`, which
//! equals the geometric coefficient 2 at `ρ = 2|Σ|` and makes `I` invariant
//! under `u ↦ u + const` for every `ρ`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_lumped_mass, assemble_stiffness, integrate_weighted_exp, LumpedMass, ScalarField, StiffnessMatrix,
};
use crate::geometry::{SurfaceMesh, Vec3};
use crate::output::sig17;

/// Mesh with its assembled operators.
#[derive(Debug)]
pub struct Discretization {
    pub mesh: SurfaceMesh,
    pub stiffness: StiffnessMatrix,
    pub mass: LumpedMass,
}

impl Discretization {
    pub fn new(mesh: SurfaceMesh) -> Result<Arc<Self>> {
        let stiffness = assemble_stiffness(&mesh)?;
        let mass = assemble_lumped_mass(&mesh);
        Ok(Arc::new(Self { mesh, stiffness, mass }))
    }

    pub fn area(&self) -> f64 {
        self.mass.total()
    }
}

/// A full instance of the mean-field problem on one mesh.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    disc: Arc<Discretization>,
    curvature: ScalarField,
    rho: f64,
    c_lin: f64,
}

impl ProblemSpec {
    pub fn new(disc: Arc<Discretization>, curvature: ScalarField, rho: f64) -> Result<Self> {
        curvature.check_mesh(&disc.mesh)?;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
        }
        let c_lin = rho / disc.area();
        Ok(Self { disc, curvature, rho, c_lin })
    }

    /// Same mesh and curvature at a different `ρ`.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.disc.clone(), self.curvature.clone(), rho)
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.disc.mesh
    }

    pub fn mass(&self) -> &LumpedMass {
        &self.disc.mass
    }

    pub fn stiffness(&self) -> &StiffnessMatrix {
        &self.disc.stiffness
    }

    pub fn curvature(&self) -> &ScalarField {
        &self.curvature
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn c_lin(&self) -> f64 {
        self.c_lin
    }

    fn check(&self, u: &ScalarField) -> Result<()> {
        u.check_mesh(&self.disc.mesh)
    }

    /// `Σ mᵢKᵢe^{uᵢ}` in stabilized form.
    pub fn curvature_mass(&self, u: &ScalarField) -> crate::fem::ExpIntegral {
        integrate_weighted_exp(&self.disc.mass, u.values(), Some(self.curvature.values()))
    }

    pub fn in_admissible_set(&self, u: &ScalarField) -> bool {
        self.curvature_mass(u).sign > 0.0
    }

    /// `qᵢ = ρ mᵢKᵢe^{uᵢ} / Σ mKe^u`, or an error outside the admissible set.
    pub fn normalized_density(&self, u: &ScalarField) -> Result<Vec<f64>> {
        let m = self.disc.mass.weights();
        let k = self.curvature.values();
        let umax = u.max();
        let w: Vec<f64> = (0..u.len()).map(|i| m[i] * k[i] * (u.values()[i] - umax).exp()).collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NotInAdmissibleSet { integral: total });
        }
        Ok(w.into_iter().map(|wi| self.rho * wi / total).collect())
    }
}

/// Terms of the discrete energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// `½ uᵀSu`.
    #[serde(serialize_with = "sig17")]
    pub dirichlet: f64,
    /// `c Σ mᵢuᵢ`.
    #[serde(serialize_with = "sig17")]
    pub linear: f64,
    /// `ρ log Σ mKe^u`; NaN outside the admissible set.
    #[serde(rename = "log", serialize_with = "sig17")]
    pub log_term: f64,
    /// `dirichlet + linear − log`; NaN outside the admissible set.
    #[serde(serialize_with = "sig17")]
    pub total: f64,
    pub in_admissible_set: bool,
}

impl EnergyBreakdown {
    pub fn total(&self) -> Option<f64> {
        self.in_admissible_set.then_some(self.total)
    }
}

pub fn energy(u: &ScalarField, spec: &ProblemSpec) -> Result<EnergyBreakdown> {
    spec.check(u)?;
    let dirichlet = 0.5 * crate::fem::dirichlet_energy(u.values(), spec.stiffness());
    let linear = spec.c_lin * spec.mass().integrate(u.values());
    let integral = spec.curvature_mass(u);
    let in_x = integral.sign > 0.0;
    let (log_term, total) = if in_x {
        let l = spec.rho * integral.log_abs;
        (l, dirichlet + linear - l)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(EnergyBreakdown { dirichlet, linear, log_term, total, in_admissible_set: in_x })
}

/// Total energy, or `None` outside the admissible set.
pub fn energy_value(u: &ScalarField, spec: &ProblemSpec) -> Result<Option<f64>> {
    Ok(energy(u, spec)?.total())
}

/// Gradient `S u + c m − ρ m⊙Ke^u / Σ mKe^u` in vertex coordinates.
pub fn energy_gradient(u: &ScalarField, spec: &ProblemSpec) -> Result<ScalarField> {
    spec.check(u)?;
    let q = spec.normalized_density(u)?;
    let mut g = spec.stiffness().apply(u.values());
    let m = spec.mass().weights();
    for i in 0..g.len() {
        g[i] += spec.c_lin * m[i] - q[i];
    }
    Ok(u.with_values(g))
}

/// Dual norm `sqrt(gᵀM⁻¹g)` of the gradient.
pub fn residual_norm(u: &ScalarField, spec: &ProblemSpec) -> Result<f64> {
    let g = energy_gradient(u, spec)?;
    Ok(spec.mass().dual_norm(g.values()))
}

/// Hessian of the energy at a fixed `u`, ready for repeated application.
#[derive(Debug, Clone)]
pub struct Hessian<'a> {
    spec: &'a ProblemSpec,
    q: Vec<f64>,
}

impl<'a> Hessian<'a> {
    pub fn at(u: &ScalarField, spec: &'a ProblemSpec) -> Result<Self> {
        spec.check(u)?;
        Ok(Self { spec, q: spec.normalized_density(u)? })
    }

    /// `H v = S v − q⊙v + q (q·v)/ρ`.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        self.spec.stiffness().matrix().mul_into(v, out);
        let qv: f64 = self.q.iter().zip(v).map(|(a, b)| a * b).sum();
        let c = qv / self.spec.rho;
        for i in 0..out.len() {
            out[i] += -self.q[i] * v[i] + self.q[i] * c;
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        out
    }

    /// Normalized density `q` used by the Hessian.
    pub fn density(&self) -> &[f64] {
        &self.q
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let d = self.spec.stiffness().matrix().diagonal();
        d.iter().zip(&self.q).map(|(s, q)| s - q + q * q / self.spec.rho).collect()
    }
}

pub fn hessian_apply(u: &ScalarField, v: &ScalarField, spec: &ProblemSpec) -> Result<ScalarField> {
    spec.check(v)?;
    let h = Hessian::at(u, spec)?;
    Ok(v.with_values(h.apply(v.values())))
}

/// Barycenter in R³ of the density `e^u` under lumped quadrature.
pub fn center_of_mass_with(mass: &LumpedMass, mesh: &SurfaceMesh, u: &ScalarField) -> Vec3 {
    let umax = u.max();
    let mut num = [0.0; 3];
    let mut den = 0.0;
    for ((x, &m), &ui) in mesh.vertices().iter().zip(mass.weights()).zip(u.values()) {
        let w = m * (ui - umax).exp();
        den += w;
        for k in 0..3 {
            num[k] += w * x[k];
        }
    }
    [num[0] / den, num[1] / den, num[2] / den]
}

pub fn center_of_mass(u: &ScalarField, mesh: &SurfaceMesh) -> Result<Vec3> {
    u.check_mesh(mesh)?;
    let mass = assemble_lumped_mass(mesh);
    Ok(center_of_mass_with(&mass, mesh, u))
}

pub fn gauge_fix_with(mass: &LumpedMass, u: &ScalarField) -> ScalarField {
    let mean = mass.mean(u.values());
    u.shifted(-mean)
}

/// `u − ū` with the lumped mean.
pub fn gauge_fix(u: &ScalarField, mesh: &SurfaceMesh) -> Result<ScalarField> {
    u.check_mesh(mesh)?;
    Ok(gauge_fix_with(&assemble_lumped_mass(mesh), u))
}

/// Both sides of `I_ρ(u)/ρ − I_ρ'(u)/ρ' = ½(1/ρ − 1/ρ') ∫|∇u|²`.
pub fn scaled_energy_identity(u: &ScalarField, rho: f64, rho_prime: f64, base: &ProblemSpec) -> Result<(f64, f64)> {
    if !(rho > 0.0 && rho < rho_prime) {
        return Err(Error::InvalidArgument(format!("need 0 < rho < rho', got ({rho}, {rho_prime})")));
    }
    let a = base.with_rho(rho)?;
    let b = base.with_rho(rho_prime)?;
    let ea = energy(u, &a)?;
    let eb = energy(u, &b)?;
    let (ia, ib) = match (ea.total(), eb.total()) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::NotInAdmissibleSet { integral: base.curvature_mass(u).value }),
    };
    let grad2 = 2.0 * ea.dirichlet;
    Ok((ia / rho - ib / rho_prime, 0.5 * (1.0 / rho - 1.0 / rho_prime) * grad2))
}

/// Residual of `−Δu′ + 2 = 2Ke^{u′}` after the shift `u′ = u + log(ρ / (2 Σ mKe^u))`,
/// measured in the dual norm.
pub fn geometric_residual(u: &ScalarField, spec: &ProblemSpec) -> Result<f64> {
    spec.check(u)?;
    let integral = spec.curvature_mass(u);
    if integral.sign <= 0.0 {
        return Err(Error::NotInAdmissibleSet { integral: integral.value });
    }
    let shift = (spec.rho / 2.0).ln() - integral.log_abs;
    let mut r = spec.stiffness().apply(u.values());
    let m = spec.mass().weights();
    let k = spec.curvature.values();
    for i in 0..r.len() {
        r[i] += 2.0 * m[i] - 2.0 * m[i] * k[i] * (u.values()[i] + shift).exp();
    }
    Ok(spec.mass().dual_norm(&r))
}

/// `(∫|∇u|², ‖u − ū‖_{L²})`, the two parts of the H¹ size reported in diagnostics.
pub fn h1_parts(u: &ScalarField, disc: &Discretization) -> (f64, f64) {
    let grad2 = crate::fem::dirichlet_energy(u.values(), &disc.stiffness);
    let fixed = gauge_fix_with(&disc.mass, u);
    (grad2, disc.mass.l2_norm(fixed.values()))
}
