//! The bubble family `ψ_λ(p)(x) = 2 log(λ² / (1 + λ² d(x, p)²))`, log-convex
//! combinations of fields, and scans of the bubble energy asymptotics.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{dirichlet_energy, integrate_weighted_exp, ScalarField};
use crate::geometry::{norm, sphere_distance, SurfaceMesh, Vec3};
use crate::output::{fmt17, sig17, sig17_vec, to_json};
use crate::parallel;
use crate::variational::{energy, ProblemSpec};

/// Required local edge length is `RESOLUTION / λ`.
pub const RESOLUTION: f64 = 0.3;

/// Minimum distance from the boundary for interior placement.
pub const INTERIOR_CLEARANCE: f64 = 0.3;

/// Default scale grid.
pub const DEFAULT_GRID: [f64; 4] = [4.0, 8.0, 16.0, 32.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleSpec {
    pub center: Vec3,
    pub lambda: f64,
}

impl BubbleSpec {
    pub fn new(center: Vec3, lambda: f64) -> Result<Self> {
        let spec = Self { center, lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidSpec(format!("bubble scale must be positive, got {}", self.lambda)));
        }
        let r = norm(self.center);
        if !r.is_finite() || (r - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!("bubble center has norm {r}, expected 1")));
        }
        Ok(())
    }

    /// Largest edge length allowed near the center.
    pub fn required_h(&self) -> f64 {
        RESOLUTION / self.lambda
    }

    /// Errors unless every triangle meeting the ball `B(p, 1/λ)` has edges of
    /// length at most `0.3/λ`.
    pub fn check_resolution(&self, mesh: &SurfaceMesh) -> Result<()> {
        let required_h = self.required_h();
        let local_h = mesh.local_edge_length(self.center, 1.0 / self.lambda);
        if local_h > required_h * (1.0 + 1e-6) {
            return Err(Error::Resolution { lambda: self.lambda, local_h, required_h });
        }
        Ok(())
    }

    pub fn value_at(&self, x: Vec3) -> f64 {
        let l2 = self.lambda * self.lambda;
        let d = sphere_distance(x, self.center);
        2.0 * (l2 / (1.0 + l2 * d * d)).ln()
    }
}

/// Vertexwise evaluation of the bubble; logs a warning if the mesh does not resolve it.
pub fn bubble_field(spec: &BubbleSpec, mesh: &SurfaceMesh) -> Result<ScalarField> {
    spec.validate()?;
    let near = mesh.vertices()[mesh.nearest_vertex(spec.center)];
    if sphere_distance(near, spec.center) > mesh.max_edge_length() {
        return Err(Error::InvalidSpec("bubble center is not on the meshed surface".into()));
    }
    if let Err(e) = spec.check_resolution(mesh) {
        log::warn!("{e}");
    }
    let values = parallel::map(mesh.vertices(), |&x| spec.value_at(x));
    ScalarField::new(mesh, values)
}

/// `log(t e^a + (1 − t) e^b)` pointwise, for `t ∈ [0, 1]`.
pub fn log_convex_pair(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    if t >= 1.0 {
        return a.to_vec();
    }
    if t <= 0.0 {
        return b.to_vec();
    }
    let (lt, ls) = (t.ln(), (1.0 - t).ln());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (p, q) = (x + lt, y + ls);
            let m = p.max(q);
            m + ((p - m).exp() + (q - m).exp()).ln()
        })
        .collect()
}

/// `log Σ w_k e^{f_k}` pointwise, max-shift stabilized.
pub fn log_convex_combine(fields: &[&ScalarField], weights: &[f64]) -> Result<ScalarField> {
    if fields.is_empty() {
        return Err(Error::InvalidArgument("no fields to combine".into()));
    }
    if fields.len() != weights.len() {
        return Err(Error::InvalidArgument(format!("{} fields but {} weights", fields.len(), weights.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument("weights must be nonnegative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("weights sum to {sum}, expected 1")));
    }
    let id = fields[0].mesh_id();
    if fields.iter().any(|f| f.mesh_id() != id || f.len() != fields[0].len()) {
        return Err(Error::InvalidArgument("fields live on different meshes".into()));
    }
    let active: Vec<(usize, f64)> =
        weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(k, w)| (k, w.ln())).collect();
    let n = fields[0].len();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let m = active.iter().map(|&(k, lw)| fields[k].values()[i] + lw).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = active.iter().map(|&(k, lw)| (fields[k].values()[i] + lw - m).exp()).sum();
        *o = m + s.ln();
    }
    Ok(fields[0].with_values(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Boundary,
    Interior,
}

/// Snaps `p` to the nearest boundary vertex, or to the nearest interior vertex
/// at distance at least 0.3 from the boundary.
pub fn snap_center(mesh: &SurfaceMesh, p: Vec3, placement: Placement) -> Result<usize> {
    let found = match placement {
        Placement::Boundary => mesh.nearest_boundary_vertex(p),
        Placement::Interior => mesh.nearest_matching(p, |v| {
            !mesh.is_boundary_vertex(v) && mesh.distance_to_boundary(mesh.vertices()[v]) >= INTERIOR_CLEARANCE
        }),
    };
    found.ok_or_else(|| Error::InvalidArgument(format!("no {placement:?} vertex available for bubble placement")))
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Slope of `y` against `log λ` over the three largest scales.
pub fn top_three_slope(lambdas: &[f64], y: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..lambdas.len()).collect();
    idx.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]));
    let top = &idx[idx.len().saturating_sub(3)..];
    let x: Vec<f64> = top.iter().map(|&i| lambdas[i].ln()).collect();
    let yy: Vec<f64> = top.iter().map(|&i| y[i]).collect();
    fit_slope(&x, &yy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    #[serde(serialize_with = "sig17")]
    pub lambda: f64,
    /// `∫ e^ψ`.
    #[serde(serialize_with = "sig17")]
    pub mass: f64,
    /// `∫ K e^ψ`.
    #[serde(serialize_with = "sig17")]
    pub k_mass: f64,
    /// `∫ |∇ψ|²`.
    #[serde(serialize_with = "sig17")]
    pub dirichlet: f64,
    /// `c ∫ ψ`.
    #[serde(serialize_with = "sig17")]
    pub linear: f64,
    #[serde(serialize_with = "sig17")]
    pub energy: f64,
}

/// Evaluates the energy terms of `family(λ)` for every scale, in grid order.
pub fn scan_family<F>(spec: &ProblemSpec, lambdas: &[f64], family: F) -> Result<Vec<ScanRow>>
where
    F: Fn(f64) -> Result<ScalarField> + Sync + Send,
{
    let rows = parallel::map(lambdas, |&lambda| -> Result<ScanRow> {
        let u = family(lambda)?;
        let e = energy(&u, spec)?;
        Ok(ScanRow {
            lambda,
            mass: integrate_weighted_exp(spec.mass(), u.values(), None).value,
            k_mass: spec.curvature_mass(&u).value,
            dirichlet: dirichlet_energy(u.values(), spec.stiffness()),
            linear: e.linear,
            energy: e.total,
        })
    });
    rows.into_iter().collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsTable {
    pub center: Vec3,
    pub center_vertex: usize,
    pub placement: Placement,
    #[serde(serialize_with = "sig17")]
    pub rho: f64,
    pub rows: Vec<ScanRow>,
    /// Fitted slope of the energy against `log λ`, top three scales.
    #[serde(serialize_with = "sig17")]
    pub energy_slope: f64,
    #[serde(serialize_with = "sig17")]
    pub dirichlet_slope: f64,
    /// `8π − 2ρ` for boundary centers, `16π − 2ρ` for interior ones.
    #[serde(serialize_with = "sig17")]
    pub expected_energy_slope: f64,
    /// `∫e^ψ / (πλ²)` per row.
    #[serde(serialize_with = "sig17_vec")]
    pub mass_ratios: Vec<f64>,
    pub slope_within_tolerance: bool,
    pub mass_ratio_within_tolerance: bool,
}

/// Relative tolerance used for the pass/fail flags of a scan.
pub const SCAN_TOLERANCE: f64 = 0.15;

/// Evaluates the bubble family at the snapped center for each scale in the grid.
pub fn asymptotics_scan(
    p: Vec3,
    placement: Placement,
    lambdas: &[f64],
    spec: &ProblemSpec,
) -> Result<AsymptoticsTable> {
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidSpec("scale grid must be nonempty and positive".into()));
    }
    let mesh = spec.mesh();
    let vertex = snap_center(mesh, p, placement)?;
    let center = mesh.vertices()[vertex];
    for &lambda in lambdas {
        BubbleSpec::new(center, lambda)?.check_resolution(mesh)?;
    }
    let rows = scan_family(spec, lambdas, |lambda| bubble_field(&BubbleSpec { center, lambda }, mesh))?;
    let ls: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    let energies: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let dir: Vec<f64> = rows.iter().map(|r| r.dirichlet).collect();
    let pi = std::f64::consts::PI;
    let (expected_energy_slope, expected_ratio) = match placement {
        Placement::Boundary => (8.0 * pi - 2.0 * spec.rho(), 0.5),
        Placement::Interior => (16.0 * pi - 2.0 * spec.rho(), 1.0),
    };
    let mass_ratios: Vec<f64> = rows.iter().map(|r| r.mass / (pi * r.lambda * r.lambda)).collect();
    let (energy_slope, dirichlet_slope) = if rows.len() >= 2 {
        (top_three_slope(&ls, &energies), top_three_slope(&ls, &dir))
    } else {
        (f64::NAN, f64::NAN)
    };
    let largest = ls.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    Ok(AsymptoticsTable {
        center,
        center_vertex: vertex,
        placement,
        rho: spec.rho(),
        slope_within_tolerance: (energy_slope - expected_energy_slope).abs()
            <= SCAN_TOLERANCE * expected_energy_slope.abs(),
        mass_ratio_within_tolerance: (mass_ratios[largest] - expected_ratio).abs() <= 0.1 * expected_ratio,
        rows,
        energy_slope,
        dirichlet_slope,
        expected_energy_slope,
        mass_ratios,
    })
}

/// Equal-weight combination `log(½e^{ψ_λ(p₁)} + ½e^{ψ_λ(p₂)})` for each scale.
pub fn two_bubble_scan(p1: Vec3, p2: Vec3, lambdas: &[f64], spec: &ProblemSpec) -> Result<Vec<ScanRow>> {
    let mesh = spec.mesh();
    scan_family(spec, lambdas, |lambda| {
        let a = bubble_field(&BubbleSpec::new(p1, lambda)?, mesh)?;
        let b = bubble_field(&BubbleSpec::new(p2, lambda)?, mesh)?;
        log_convex_combine(&[&a, &b], &[0.5, 0.5])
    })
}

/// Writes rows as CSV with columns `lambda,mass,k_mass,dirichlet,linear,energy`.
pub fn write_scan_csv(rows: &[ScanRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lambda", "mass", "k_mass", "dirichlet", "linear", "energy"])?;
    for r in rows {
        w.write_record([r.lambda, r.mass, r.k_mass, r.dirichlet, r.linear, r.energy].map(fmt17))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(to_json(value)?.as_bytes())?;
    Ok(())
}
