//! Boundary sign classification, concentration reports, Moser–Trudinger
//! gap scans and quantization monitoring.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{dirichlet_energy, dirichlet_energy_on, ScalarField};
use crate::geometry::{add, dot, euclidean_distance, parallel_set, scale, sphere_distance, sub, SurfaceMesh, Vec3};
use crate::output::{sig17, sig17_opt, sig17_vec};
use crate::parallel;
use crate::variational::{center_of_mass_with, gauge_fix_with, Discretization};

pub const DEFAULT_KAPPA_MIN: f64 = 1e-3;
pub const BALL_RADII: [f64; 4] = [0.1, 0.2, 0.3, 0.5];
pub const BLOW_UP_THRESHOLD: f64 = 25.0;
pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopSign {
    Positive,
    Negative,
    Mixed,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryClassification {
    pub loop_signs: Vec<LoopSign>,
    /// Indices of the loops on which `K ≥ κ_min`.
    pub omega_plus: Vec<usize>,
    #[serde(serialize_with = "sig17")]
    pub min_abs_boundary_k: f64,
    #[serde(serialize_with = "sig17")]
    pub kappa_min: f64,
    /// Some vertex has `K > 0`.
    pub h1: bool,
    /// Every boundary vertex has `|K| ≥ κ_min` and every loop has one sign.
    pub h2: bool,
    /// Boundary vertices that break (H2).
    pub offending_vertices: Vec<usize>,
    #[serde(skip)]
    loops: Vec<Vec<usize>>,
    #[serde(skip)]
    boundary_k: Vec<Vec<f64>>,
}

impl BoundaryClassification {
    /// Vertices of the positive loops, loop by loop.
    pub fn omega_plus_vertices(&self) -> Vec<usize> {
        self.omega_plus.iter().flat_map(|&l| self.loops[l].iter().copied()).collect()
    }

    pub fn omega_plus_is_empty(&self) -> bool {
        self.omega_plus.is_empty()
    }

    /// Converts a failed (H2) check into an error.
    pub fn require_h2(&self) -> Result<()> {
        if self.h2 {
            Ok(())
        } else {
            Err(Error::H2Violation { kappa_min: self.kappa_min, vertices: self.offending_vertices.clone() })
        }
    }

    pub fn require_h1(&self) -> Result<()> {
        if self.h1 {
            Ok(())
        } else {
            Err(Error::H1Violation)
        }
    }

    /// Nearest point on the closed boundary polylines to `x`, as
    /// `(loop, point, K interpolated there, nearest vertex)`.
    pub fn nearest_boundary_point(&self, mesh: &SurfaceMesh, x: Vec3) -> Option<BoundaryPoint> {
        self.nearest_on(mesh, x, 0..self.loops.len())
    }

    /// Euclidean distance from `x` to the Ω⁺ polylines, `None` if Ω⁺ is empty.
    pub fn distance_to_omega_plus(&self, mesh: &SurfaceMesh, x: Vec3) -> Option<f64> {
        self.nearest_on(mesh, x, self.omega_plus.iter().copied()).map(|b| b.distance)
    }

    /// Nearest point of Ω⁺ to `x`, the retraction onto the positive boundary.
    pub fn project_to_omega_plus(&self, mesh: &SurfaceMesh, x: Vec3) -> Option<BoundaryPoint> {
        self.nearest_on(mesh, x, self.omega_plus.iter().copied())
    }

    fn nearest_on(&self, mesh: &SurfaceMesh, x: Vec3, loops: impl Iterator<Item = usize>) -> Option<BoundaryPoint> {
        let verts = mesh.vertices();
        let mut best: Option<BoundaryPoint> = None;
        for l in loops {
            let lp = &self.loops[l];
            let k = &self.boundary_k[l];
            for i in 0..lp.len() {
                let j = (i + 1) % lp.len();
                let (a, b) = (verts[lp[i]], verts[lp[j]]);
                let ab = sub(b, a);
                let len2 = dot(ab, ab);
                let t = if len2 > 0.0 { (dot(sub(x, a), ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let point = add(a, scale(ab, t));
                let distance = euclidean_distance(x, point);
                if best.as_ref().is_none_or(|bp| distance < bp.distance) {
                    best = Some(BoundaryPoint {
                        loop_index: l,
                        point,
                        distance,
                        curvature: (1.0 - t) * k[i] + t * k[j],
                        vertex: if t <= 0.5 { lp[i] } else { lp[j] },
                        on_omega_plus: self.omega_plus.contains(&l),
                    });
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryPoint {
    pub loop_index: usize,
    pub point: Vec3,
    #[serde(serialize_with = "sig17")]
    pub distance: f64,
    /// `K` interpolated linearly along the boundary edge.
    #[serde(serialize_with = "sig17")]
    pub curvature: f64,
    pub vertex: usize,
    pub on_omega_plus: bool,
}

/// Classifies every boundary loop by the sign of `K`, recording (H1) and (H2)
/// as flags instead of failing.
pub fn classify(mesh: &SurfaceMesh, k: &ScalarField, kappa_min: f64) -> Result<BoundaryClassification> {
    k.check_mesh(mesh)?;
    if !(kappa_min >= 0.0) {
        return Err(Error::InvalidArgument(format!("kappa_min must be nonnegative, got {kappa_min}")));
    }
    let kv = k.values();
    let loops = mesh.boundary_loops().to_vec();
    let mut loop_signs = Vec::with_capacity(loops.len());
    let mut omega_plus = Vec::new();
    let mut offending = Vec::new();
    let mut min_abs = f64::INFINITY;
    for (l, lp) in loops.iter().enumerate() {
        let pos = lp.iter().all(|&v| kv[v] >= kappa_min);
        let neg = lp.iter().all(|&v| kv[v] <= -kappa_min);
        min_abs = lp.iter().map(|&v| kv[v].abs()).fold(min_abs, f64::min);
        let sign = if pos {
            omega_plus.push(l);
            LoopSign::Positive
        } else if neg {
            LoopSign::Negative
        } else {
            let small: Vec<usize> = lp.iter().copied().filter(|&v| kv[v].abs() < kappa_min).collect();
            if small.is_empty() {
                // Mixed signs with no small values: report the minority sign.
                let npos = lp.iter().filter(|&&v| kv[v] > 0.0).count();
                let minority_positive = 2 * npos <= lp.len();
                offending.extend(lp.iter().copied().filter(|&v| (kv[v] > 0.0) == minority_positive));
            } else {
                offending.extend(small);
            }
            LoopSign::Mixed
        };
        loop_signs.push(sign);
    }
    offending.sort_unstable();
    let boundary_k = loops.iter().map(|lp| lp.iter().map(|&v| kv[v]).collect()).collect();
    Ok(BoundaryClassification {
        h1: kv.iter().any(|&x| x > 0.0),
        h2: offending.is_empty(),
        loop_signs,
        omega_plus,
        min_abs_boundary_k: min_abs,
        kappa_min,
        offending_vertices: offending,
        loops,
        boundary_k,
    })
}

/// Like [`classify`], but a loop with mixed sign or with `|K| < κ_min` is an error.
pub fn classify_boundary(mesh: &SurfaceMesh, k: &ScalarField, kappa_min: f64) -> Result<BoundaryClassification> {
    let c = classify(mesh, k, kappa_min)?;
    c.require_h2()?;
    Ok(c)
}

/// Vertex maximizing `mᵢe^{uᵢ}`, lowest index on ties.
pub fn mode_vertex(disc: &Discretization, u: &ScalarField) -> usize {
    let m = disc.mass.weights();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, (&mi, &ui)) in m.iter().zip(u.values()).enumerate() {
        let v = mi.ln() + ui;
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// Fraction of `Σ mᵢwᵢe^{uᵢ}` carried by vertices within sphere distance `r` of `p`.
fn ball_fraction(disc: &Discretization, u: &ScalarField, w: Option<&[f64]>, p: Vec3, r: f64) -> f64 {
    let m = disc.mass.weights();
    let umax = u.max();
    let verts = disc.mesh.vertices();
    let mut inside = 0.0;
    let mut total = 0.0;
    for i in 0..m.len() {
        let x = m[i] * w.map_or(1.0, |w| w[i]) * (u.values()[i] - umax).exp();
        total += x;
        if sphere_distance(verts[i], p) <= r {
            inside += x;
        }
    }
    inside / total
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub center_of_mass: Vec3,
    /// Euclidean distance from the center of mass to Ω⁺; `None` if Ω⁺ is empty.
    #[serde(serialize_with = "sig17_opt")]
    pub distance_to_omega_plus: Option<f64>,
    /// Boundary point nearest to the center of mass.
    pub nearest_boundary: Option<BoundaryPoint>,
    pub mode_vertex: usize,
    pub mode_point: Vec3,
    #[serde(serialize_with = "sig17_vec")]
    pub ball_radii: Vec<f64>,
    #[serde(serialize_with = "sig17_vec")]
    pub mass_fractions: Vec<f64>,
    #[serde(serialize_with = "sig17")]
    pub max_minus_mean: f64,
    /// `∫|∇u|²`.
    #[serde(serialize_with = "sig17")]
    pub dirichlet: f64,
    /// `‖u − ū‖_{L²}`.
    #[serde(serialize_with = "sig17")]
    pub mean_free_l2: f64,
}

impl ConcentrationReport {
    pub fn mass_fraction(&self, radius: f64) -> Option<f64> {
        self.ball_radii.iter().position(|r| *r == radius).map(|i| self.mass_fractions[i])
    }

    pub fn blown_up(&self) -> bool {
        self.max_minus_mean > BLOW_UP_THRESHOLD
    }
}

pub fn concentration_report(
    u: &ScalarField,
    disc: &Discretization,
    classification: &BoundaryClassification,
) -> Result<ConcentrationReport> {
    u.check_mesh(&disc.mesh)?;
    let mesh = &disc.mesh;
    let com = center_of_mass_with(&disc.mass, mesh, u);
    let mode = mode_vertex(disc, u);
    let mode_point = mesh.vertices()[mode];
    let mut mass_fractions: Vec<f64> =
        BALL_RADII.iter().map(|&r| ball_fraction(disc, u, None, mode_point, r)).collect();
    for i in 1..mass_fractions.len() {
        mass_fractions[i] = mass_fractions[i].max(mass_fractions[i - 1]);
    }
    let mean = disc.mass.mean(u.values());
    let fixed = gauge_fix_with(&disc.mass, u);
    Ok(ConcentrationReport {
        center_of_mass: com,
        distance_to_omega_plus: classification.distance_to_omega_plus(mesh, com),
        nearest_boundary: classification.nearest_boundary_point(mesh, com),
        mode_vertex: mode,
        mode_point,
        ball_radii: BALL_RADII.to_vec(),
        mass_fractions,
        max_minus_mean: u.max() - mean,
        dirichlet: dirichlet_energy(u.values(), &disc.stiffness),
        mean_free_l2: disc.mass.l2_norm(fixed.values()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRow {
    /// Family parameter, typically the bubble scale.
    #[serde(serialize_with = "sig17")]
    pub parameter: f64,
    /// `log ∫ e^u` (or the localized analogue times its coefficient).
    #[serde(serialize_with = "sig17")]
    pub log_term: f64,
    #[serde(serialize_with = "sig17")]
    pub dirichlet: f64,
    #[serde(serialize_with = "sig17")]
    pub gap: f64,
    #[serde(serialize_with = "sig17")]
    pub running_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapScan {
    #[serde(serialize_with = "sig17")]
    pub coefficient: f64,
    pub rows: Vec<GapRow>,
    /// Largest gap over the family, the empirical constant.
    #[serde(serialize_with = "sig17")]
    pub constant: f64,
    /// `gap[n−1] − gap[n−2]`.
    #[serde(serialize_with = "sig17")]
    pub last_increment: f64,
}

fn finish_scan(coefficient: f64, mut rows: Vec<GapRow>) -> GapScan {
    let mut running = f64::NEG_INFINITY;
    for r in &mut rows {
        running = running.max(r.gap);
        r.running_max = running;
    }
    let n = rows.len();
    let last_increment = if n >= 2 { rows[n - 1].gap - rows[n - 2].gap } else { 0.0 };
    GapScan { coefficient, constant: running, last_increment, rows }
}

/// `gap(u) = log ∫e^u − α ∫|∇u|²` for each gauge-fixed family member.
pub fn mt_gap_scan(disc: &Discretization, family: &[(f64, ScalarField)], alpha: f64) -> Result<GapScan> {
    for (_, u) in family {
        u.check_mesh(&disc.mesh)?;
    }
    let rows = parallel::map(family, |(parameter, u)| {
        let u = gauge_fix_with(&disc.mass, u);
        let log_term = crate::fem::integrate_weighted_exp(&disc.mass, u.values(), None).log_abs;
        let dirichlet = dirichlet_energy(u.values(), &disc.stiffness);
        GapRow { parameter: *parameter, log_term, dirichlet, gap: log_term - alpha * dirichlet, running_max: 0.0 }
    });
    Ok(finish_scan(alpha, rows))
}

/// Above this coefficient the subdomain must stay away from the boundary.
pub const INTERIOR_COEFFICIENT_THRESHOLD: f64 = 8.0 * std::f64::consts::PI;

/// `coeff·log ∫_{Σ₁} e^u − [∫_{Σ₁^δ} |∇u|² + ε ∫_Σ |∇u|²]` for each family member.
///
/// Coefficients above 8π require the δ-neighborhood of `sigma1` to avoid the
/// boundary.
pub fn localized_mt_scan(
    disc: &Discretization,
    sigma1: &[usize],
    delta: f64,
    family: &[(f64, ScalarField)],
    coefficient: f64,
    epsilon: f64,
) -> Result<GapScan> {
    let mesh = &disc.mesh;
    let neighborhood = parallel_set(mesh, sigma1, delta)?;
    if coefficient > INTERIOR_COEFFICIENT_THRESHOLD * (1.0 + 1e-12) {
        if let Some(&b) = neighborhood.iter().find(|&&v| mesh.is_boundary_vertex(v)) {
            return Err(Error::Precondition(format!(
                "the {delta}-neighborhood of the subdomain reaches boundary vertex {b}"
            )));
        }
    }
    for (_, u) in family {
        u.check_mesh(mesh)?;
    }
    let mut in_sigma1 = vec![false; mesh.num_vertices()];
    for &v in sigma1 {
        in_sigma1[v] = true;
    }
    let mut in_nbhd = vec![false; mesh.num_vertices()];
    for &v in &neighborhood {
        in_nbhd[v] = true;
    }
    let tris = mesh.triangles();
    let m = disc.mass.weights();
    let rows = parallel::map(family, |(parameter, u)| {
        let u = gauge_fix_with(&disc.mass, u);
        let uv = u.values();
        let umax = sigma1.iter().map(|&v| uv[v]).fold(f64::NEG_INFINITY, f64::max);
        let local: f64 = sigma1.iter().map(|&v| m[v] * (uv[v] - umax).exp()).sum();
        let log_term = coefficient * (umax + local.ln());
        let local_dir = dirichlet_energy_on(mesh, uv, |t| tris[t].iter().all(|&v| in_nbhd[v]));
        let dirichlet = local_dir + epsilon * dirichlet_energy(uv, &disc.stiffness);
        GapRow { parameter: *parameter, log_term, dirichlet, gap: log_term - dirichlet, running_max: 0.0 }
    });
    Ok(finish_scan(coefficient, rows))
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantizationEntry {
    #[serde(serialize_with = "sig17")]
    pub rho: f64,
    pub mode_vertex: usize,
    pub mode_point: Vec3,
    #[serde(serialize_with = "sig17")]
    pub curvature_at_mode: f64,
    /// `∫_{B(p,τ)} Ke^u / ∫_Σ Ke^u`.
    #[serde(serialize_with = "sig17")]
    pub local_fraction: f64,
    /// `ρ` times the local fraction.
    #[serde(serialize_with = "sig17")]
    pub local_mass: f64,
    /// `|local_mass − 4kπ|` for `k = 1, 2, 3`.
    #[serde(serialize_with = "sig17_vec")]
    pub distances_to_4k_pi: Vec<f64>,
    pub nearest_k: usize,
    #[serde(serialize_with = "sig17")]
    pub max_minus_mean: f64,
    pub quantization_consistent_blow_up: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantizationReport {
    #[serde(serialize_with = "sig17")]
    pub tau: f64,
    pub entries: Vec<QuantizationEntry>,
}

/// Local curvature mass around the mode of each field, compared with the grid `4kπ`.
pub fn quantization_monitor(
    disc: &Discretization,
    k: &ScalarField,
    sequence: &[(f64, ScalarField)],
    tau: f64,
) -> Result<QuantizationReport> {
    if sequence.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {tau}")));
    }
    k.check_mesh(&disc.mesh)?;
    for (_, u) in sequence {
        u.check_mesh(&disc.mesh)?;
    }
    let four_pi = 4.0 * std::f64::consts::PI;
    let entries = parallel::map(sequence, |(rho, u)| {
        let mode = mode_vertex(disc, u);
        let p = disc.mesh.vertices()[mode];
        let kp = k.values()[mode];
        let f = ball_fraction(disc, u, Some(k.values()), p, tau);
        let mass = rho * f;
        let distances: Vec<f64> = (1..=3).map(|j| (mass - four_pi * j as f64).abs()).collect();
        let nearest_k = 1 + (0..3).min_by(|&a, &b| distances[a].total_cmp(&distances[b])).unwrap_or(0);
        let max_minus_mean = u.max() - disc.mass.mean(u.values());
        let note = (kp <= 0.0)
            .then(|| format!("inadmissible concentration: K = {kp} at the mode, blow-up points must lie where K > 0"));
        QuantizationEntry {
            rho: *rho,
            mode_vertex: mode,
            mode_point: p,
            curvature_at_mode: kp,
            local_fraction: f,
            local_mass: mass,
            distances_to_4k_pi: distances,
            nearest_k,
            max_minus_mean,
            quantization_consistent_blow_up: max_minus_mean > BLOW_UP_THRESHOLD && f >= 0.95,
            note,
        }
    });
    Ok(QuantizationReport { tau, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_mesh, DomainSpec};
    use std::f64::consts::PI;

    #[test]
    fn band_with_z() {
        let mesh = generate_mesh(&DomainSpec::band(PI / 4.0, 3.0 * PI / 4.0, 0.1)).unwrap();
        let k = ScalarField::from_fn(&mesh, |x| x[2]);
        let c = classify_boundary(&mesh, &k, DEFAULT_KAPPA_MIN).unwrap();
        assert_eq!(c.loop_signs, vec![LoopSign::Positive, LoopSign::Negative]);
        assert_eq!(c.omega_plus, vec![0]);
        assert!((c.min_abs_boundary_k - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(c.h1 && c.h2);
        let scaled = k.with_values(k.values().iter().map(|v| 7.0 * v).collect());
        assert_eq!(classify_boundary(&mesh, &scaled, DEFAULT_KAPPA_MIN).unwrap().omega_plus, vec![0]);
    }

    #[test]
    fn zero_on_boundary_is_rejected() {
        let mesh = generate_mesh(&DomainSpec::band(PI / 3.0, 2.0 * PI / 3.0, 0.1)).unwrap();
        let k = ScalarField::from_fn(&mesh, |x| x[2] - 0.5);
        match classify_boundary(&mesh, &k, DEFAULT_KAPPA_MIN) {
            Err(Error::H2Violation { vertices, .. }) => {
                let mut expected = mesh.boundary_loops()[0].clone();
                expected.sort_unstable();
                assert_eq!(vertices, expected);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_cap_boundary() {
        let mesh = generate_mesh(&DomainSpec::cap(2.0 * PI / 3.0, 0.1)).unwrap();
        let k = ScalarField::from_fn(&mesh, |x| x[2]);
        let c = classify_boundary(&mesh, &k, DEFAULT_KAPPA_MIN).unwrap();
        assert!(c.omega_plus.is_empty() && c.h1);
        assert!(c.distance_to_omega_plus(&mesh, [0.0, 0.0, 1.0]).is_none());
        let neg = ScalarField::constant(&mesh, -1.0);
        assert!(!classify_boundary(&mesh, &neg, DEFAULT_KAPPA_MIN).unwrap().h1);
    }

    #[test]
    fn constant_field_gap_is_log_area() {
        let mesh = generate_mesh(&DomainSpec::cap(2.0, 0.15)).unwrap();
        let disc = Discretization::new(mesh).unwrap();
        let u = ScalarField::constant(&disc.mesh, 3.0);
        let scan = mt_gap_scan(&disc, &[(1.0, u)], 1.0 / (8.0 * PI)).unwrap();
        assert!((scan.rows[0].gap - disc.area().ln()).abs() < 1e-14);
    }
}
