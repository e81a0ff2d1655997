use std::f64::consts::PI;

use serde::Serialize;

use super::{newton_solve, NewtonConfig, PathConfig, Sobolev, SolveResult, SolverConfig};
use crate::bubbles::{bubble_field, log_convex_pair, BubbleSpec};
use crate::diagnostics::{classify_boundary, BoundaryClassification};
use crate::error::{Error, Result};
use crate::fem::ScalarField;
use crate::geometry::{SurfaceMesh, Vec3};
use crate::linalg::dot;
use crate::output::{sig17, sig17_vec};
use crate::parallel;
use crate::variational::{energy_gradient, energy_value, Hessian, ProblemSpec};

/// A discrete path in the admissible set with fixed endpoints.
#[derive(Debug, Clone, Serialize)]
pub struct PathState {
    #[serde(skip)]
    pub nodes: Vec<ScalarField>,
    #[serde(serialize_with = "sig17_vec")]
    pub energies: Vec<f64>,
    pub max_index: usize,
}

impl PathState {
    fn new(nodes: Vec<ScalarField>, spec: &ProblemSpec) -> Result<Self> {
        let energies = node_energies(&nodes, spec)?;
        let max_index = argmax(&energies);
        Ok(Self { nodes, energies, max_index })
    }

    pub fn max_energy(&self) -> f64 {
        self.energies[self.max_index]
    }
}

/// Candidate summary, final path, α history and polished solution.
type CandidateRun = (Candidate, PathState, Vec<f64>, SolveResult);

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn node_energies(nodes: &[ScalarField], spec: &ProblemSpec) -> Result<Vec<f64>> {
    parallel::map(nodes, |u| {
        energy_value(u, spec)?.ok_or_else(|| Error::NotInAdmissibleSet { integral: spec.curvature_mass(u).value })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub center_vertex: usize,
    pub center: Vec3,
    /// Running minimum of the largest node energy.
    #[serde(serialize_with = "sig17")]
    pub alpha: f64,
    #[serde(serialize_with = "sig17_vec")]
    pub endpoint_energies: Vec<f64>,
    pub sweeps: usize,
    /// Path node the polished solution started from.
    pub polished_from: usize,
    #[serde(serialize_with = "sig17")]
    pub residual: f64,
    #[serde(serialize_with = "sig17")]
    pub energy: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MountainPassResult {
    /// Min-max estimate of the winning candidate.
    #[serde(serialize_with = "sig17")]
    pub alpha: f64,
    pub result: SolveResult,
    pub path: PathState,
    #[serde(serialize_with = "sig17_vec")]
    pub alpha_history: Vec<f64>,
    pub winner: usize,
    pub candidates: Vec<Candidate>,
}

impl MountainPassResult {
    /// Path direction `u_{k+1} − u_{k−1}` at the polished node, one-sided at
    /// the endpoints.
    pub fn tangent(&self) -> Vec<f64> {
        let k = self.candidates[self.winner].polished_from;
        let n = self.path.nodes.len();
        let a = self.path.nodes[(k + 1).min(n - 1)].values();
        let b = self.path.nodes[k.saturating_sub(1)].values();
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }
}

/// Up to `per_loop` boundary vertices on each loop of Ω⁺, the ones whose
/// azimuth is closest to `2πj/per_loop`.
pub fn loop_samples(mesh: &SurfaceMesh, classification: &BoundaryClassification, per_loop: usize) -> Vec<usize> {
    let verts = mesh.vertices();
    let mut out = Vec::new();
    for &l in &classification.omega_plus {
        let lp = &mesh.boundary_loops()[l];
        let mut picked: Vec<usize> = Vec::new();
        for j in 0..per_loop {
            let target = 2.0 * PI * j as f64 / per_loop as f64;
            let best = lp
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    let da = azimuth_gap(verts[a], target);
                    let db = azimuth_gap(verts[b], target);
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("loops are nonempty");
            if !picked.contains(&best) {
                picked.push(best);
            }
        }
        out.extend(picked);
    }
    out
}

fn azimuth_gap(x: Vec3, target: f64) -> f64 {
    let phi = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
    let d = (phi - target).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Default cone vertex: the zero field if admissible, otherwise `τK` for the
/// smallest admissible `τ ∈ {½, 1, 2, …}`.
pub fn default_vertex(spec: &ProblemSpec) -> Result<ScalarField> {
    let zero = ScalarField::zeros(spec.mesh());
    if spec.in_admissible_set(&zero) {
        return Ok(zero);
    }
    let k = spec.curvature();
    let mut tau = 0.5;
    while tau <= 1024.0 {
        let v = k.with_values(k.values().iter().map(|x| tau * x).collect());
        if spec.in_admissible_set(&v) {
            return Ok(v);
        }
        tau *= 2.0;
    }
    Err(Error::H1Violation)
}

/// Mountain pass from the default cone vertex.
pub fn mountain_pass(spec: &ProblemSpec, config: &SolverConfig) -> Result<MountainPassResult> {
    mountain_pass_from(spec, config, &default_vertex(spec)?)
}

/// Mountain pass over paths from `v` to bubbles centered on Ω⁺.
pub fn mountain_pass_from(spec: &ProblemSpec, config: &SolverConfig, v: &ScalarField) -> Result<MountainPassResult> {
    let rho = spec.rho();
    if !(rho > 4.0 * PI && rho < 8.0 * PI) {
        return Err(Error::WrongRegime(format!("mountain pass needs 4π < ρ < 8π, got ρ = {rho}; use minimize")));
    }
    let pc = &config.path;
    if pc.nodes < 3 {
        return Err(Error::InvalidArgument(format!("a path needs at least 3 nodes, got {}", pc.nodes)));
    }
    v.check_mesh(spec.mesh())?;
    if !spec.in_admissible_set(v) {
        return Err(Error::NotInAdmissibleSet { integral: spec.curvature_mass(v).value });
    }
    let classification = classify_boundary(spec.mesh(), spec.curvature(), pc.kappa_min)?;
    classification.require_h1()?;
    if classification.omega_plus_is_empty() {
        return Err(Error::WrongRegime("no boundary loop with K > 0; use minimize".into()));
    }
    let samples = loop_samples(spec.mesh(), &classification, pc.samples_per_loop.max(1));
    let sobolev = Sobolev::new(spec);
    let runs: Vec<Result<CandidateRun>> =
        parallel::map(&samples, |&p| run_candidate(spec, pc, &config.newton, &sobolev, v, p));
    let mut runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
    let winner = (0..runs.len())
        .min_by(|&a, &b| {
            let (ca, cb) = (&runs[a].0, &runs[b].0);
            ca.residual.total_cmp(&cb.residual).then(ca.energy.total_cmp(&cb.energy)).then(a.cmp(&b))
        })
        .expect("at least one sample");
    let candidates: Vec<Candidate> = runs.iter().map(|r| r.0.clone()).collect();
    let (cand, path, alpha_history, result) = runs.swap_remove(winner);
    Ok(MountainPassResult { alpha: cand.alpha, result, path, alpha_history, winner, candidates })
}

fn run_candidate(
    spec: &ProblemSpec,
    pc: &PathConfig,
    newton: &NewtonConfig,
    sobolev: &Sobolev,
    v: &ScalarField,
    center_vertex: usize,
) -> Result<CandidateRun> {
    let mesh = spec.mesh();
    let center = mesh.vertices()[center_vertex];
    let psi = bubble_field(&BubbleSpec::new(center, pc.lambda)?, mesh)?;
    if !spec.in_admissible_set(&psi) {
        return Err(Error::WrongRegime(format!("bubble at vertex {center_vertex} is not admissible")));
    }
    let n = pc.nodes;
    let nodes: Vec<ScalarField> = (0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64;
            psi.with_values(log_convex_pair(psi.values(), v.values(), t))
        })
        .collect();
    let mut path = PathState::new(nodes, spec)?;
    let mut steps = vec![1.0; n];
    let mut alpha = path.max_energy();
    let mut history = vec![alpha];
    let mut stall = 0;
    let mut sweeps = 0;
    while sweeps < pc.max_sweeps && stall < pc.patience {
        sweeps += 1;
        let relaxed = parallel::map_range(n - 2, |j| {
            let k = j + 1;
            relax_node(spec, pc, sobolev, &path.nodes[k], path.energies[k], steps[k])
        });
        for (j, r) in relaxed.into_iter().enumerate() {
            let (u, e, s) = r?;
            path.nodes[j + 1] = u;
            path.energies[j + 1] = e;
            steps[j + 1] = s;
        }
        let nodes = reparametrize(&path, sobolev);
        path = PathState::new(nodes, spec)?;
        let top = path.max_energy();
        if top < alpha - pc.stall_tol * (1.0 + alpha.abs()) {
            stall = 0;
        } else {
            stall += 1;
        }
        alpha = alpha.min(top);
        history.push(alpha);
    }
    log::debug!("vertex {center_vertex}: {sweeps} sweeps, alpha = {alpha}");

    // The highest node may be the cone vertex itself when the vertex already
    // sits on the min-max level.
    let k0 = path.max_index;
    let mut order = vec![k0];
    if k0 > 0 {
        order.push(k0 - 1);
    }
    if k0 + 1 < n {
        order.push(k0 + 1);
    }
    let mut best: Option<(usize, SolveResult)> = None;
    for k in order {
        let r = newton_solve(&path.nodes[k], spec, newton)?;
        let done = r.converged();
        if best.as_ref().is_none_or(|(_, b)| r.residual < b.residual) {
            best = Some((k, r));
        }
        if done {
            break;
        }
    }
    let (polished_from, result) = best.expect("at least one polish attempt");
    let candidate = Candidate {
        center_vertex,
        center,
        alpha,
        endpoint_energies: vec![path.energies[0], path.energies[n - 1]],
        sweeps,
        polished_from,
        residual: result.residual,
        energy: result.energy.total,
        converged: result.converged(),
    };
    Ok((candidate, path, history, result))
}

/// One damped Armijo step along the Sobolev gradient; keeps the node when no
/// step is accepted.
fn relax_node(
    spec: &ProblemSpec,
    pc: &PathConfig,
    sobolev: &Sobolev,
    u: &ScalarField,
    value: f64,
    last_step: f64,
) -> Result<(ScalarField, f64, f64)> {
    let g = energy_gradient(u, spec)?;
    let d = sobolev.direction_with(g.values(), 1e-4);
    let slope = dot(g.values(), &d);
    if !(slope < 0.0) {
        return Ok((u.clone(), value, last_step));
    }
    let curvature = dot(&d, &Hessian::at(u, spec)?.apply(&d));
    let mut step = if curvature > 0.0 { -slope / curvature } else { 2.0 * last_step }.min(1e3);
    while step > 1e-14 {
        let trial = u.add_scaled(step, &d);
        if let Some(e) = energy_value(&trial, spec)? {
            if e <= value + pc.armijo * step * slope {
                let moved = u.add_scaled(pc.step_fraction * step, &d);
                if let Some(em) = energy_value(&moved, spec)? {
                    return Ok((moved, em, step));
                }
            }
        }
        step *= 0.5;
    }
    Ok((u.clone(), value, last_step))
}

/// Redistributes interior nodes uniformly in the arclength of the metric
/// `‖Δu‖²_{H¹} + ΔI²`, interpolating log-convexly between neighbors.
fn reparametrize(path: &PathState, sobolev: &Sobolev) -> Vec<ScalarField> {
    let n = path.nodes.len();
    let lengths: Vec<f64> = parallel::map_range(n - 1, |k| {
        let a = path.nodes[k].values();
        let b = path.nodes[k + 1].values();
        let diff: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let de = path.energies[k + 1] - path.energies[k];
        (sobolev.norm2(&diff) + de * de).sqrt()
    });
    let mut cum = vec![0.0; n];
    for k in 0..n - 1 {
        cum[k + 1] = cum[k] + lengths[k];
    }
    let total = cum[n - 1];
    let mut out = Vec::with_capacity(n);
    out.push(path.nodes[0].clone());
    let mut seg = 0;
    for j in 1..n - 1 {
        let target = total * j as f64 / (n - 1) as f64;
        while seg < n - 2 && cum[seg + 1] < target {
            seg += 1;
        }
        let tau = if lengths[seg] > 0.0 { ((target - cum[seg]) / lengths[seg]).clamp(0.0, 1.0) } else { 0.0 };
        let a = &path.nodes[seg];
        let b = &path.nodes[seg + 1];
        out.push(a.with_values(log_convex_pair(b.values(), a.values(), tau)));
    }
    out.push(path.nodes[n - 1].clone());
    out
}
