use std::path::Path;

use serde::Serialize;

use super::{minimize, mountain_pass, newton_solve, SolveResult, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::fem::ScalarField;
use crate::output::{fmt17, sig17, sig17_opt, to_json};
use crate::variational::{geometric_residual, ProblemSpec};

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    #[serde(serialize_with = "sig17")]
    pub rho: f64,
    /// Energy `I_ρ(u_ρ)` of the critical point found at this `ρ`.
    #[serde(serialize_with = "sig17")]
    pub alpha: f64,
    #[serde(serialize_with = "sig17")]
    pub alpha_over_rho: f64,
    #[serde(serialize_with = "sig17")]
    pub residual: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Residual of the geometric equation after normalization, at `ρ = 2|Σ|` only.
    #[serde(serialize_with = "sig17_opt")]
    pub geometric_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCurve {
    pub rows: Vec<SweepRow>,
    /// Min-max estimate of the path at the first grid point, or the minimum
    /// energy when that point lies in the coercive range.
    #[serde(serialize_with = "sig17")]
    pub path_alpha: f64,
    /// `α/ρ` is non-increasing within `1e−6·(1 + |α|)` across converged neighbors.
    pub monotone: bool,
    /// Pairs `(i, i+1)` that break monotonicity.
    pub violations: Vec<(usize, usize)>,
    /// Grid values where Newton failed; candidates for concentration.
    #[serde(serialize_with = "crate::output::sig17_vec")]
    pub quantization_suspects: Vec<f64>,
    #[serde(skip)]
    pub solutions: Vec<ScalarField>,
}

impl SweepCurve {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.status == SolveStatus::Converged)
    }

    /// CSV with columns `rho,alpha,alpha_over_rho,residual,status`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["rho", "alpha", "alpha_over_rho", "residual", "status"])?;
        for r in &self.rows {
            w.write_record([
                fmt17(r.rho),
                fmt17(r.alpha),
                fmt17(r.alpha_over_rho),
                fmt17(r.residual),
                r.status.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, to_json(self)?)?;
        Ok(())
    }
}

/// Checks that `α/ρ` does not increase between consecutive converged rows.
pub fn monotonicity_violations(rows: &[SweepRow]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..rows.len().saturating_sub(1) {
        let (a, b) = (&rows[i], &rows[i + 1]);
        if a.status != SolveStatus::Converged || b.status != SolveStatus::Converged {
            continue;
        }
        if b.alpha_over_rho > a.alpha_over_rho + 1e-6 * (1.0 + a.alpha.abs()) {
            out.push((i, i + 1));
        }
    }
    out
}

/// Solution at the first grid value: minimization polished by Newton in the
/// coercive range `ρ ≤ 4π`, the mountain pass above it.
fn first_solution(spec: &ProblemSpec, config: &SolverConfig) -> Result<(SolveResult, f64)> {
    if spec.rho() > 4.0 * std::f64::consts::PI {
        let mp = mountain_pass(spec, config)?;
        return Ok((mp.result, mp.alpha));
    }
    let u0 = super::default_vertex(spec)?;
    let descent = minimize(&u0, spec, &config.minimize)?;
    let polished = newton_solve(&descent.u, spec, &config.newton)?;
    let alpha = polished.energy.total;
    Ok((polished, alpha))
}

/// Mountain pass (or minimization below 4π) at the first grid value, then
/// warm-started Newton along the grid.
pub fn rho_continuation(template: &ProblemSpec, grid: &[f64], config: &SolverConfig) -> Result<SweepCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty ρ grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("ρ grid must be strictly increasing".into()));
    }
    let first = template.with_rho(grid[0])?;
    let (start, path_alpha) = first_solution(&first, config)?;
    if !start.converged() {
        return Err(Error::NoConvergence {
            solver: start.solver,
            iterations: start.iterations,
            residual: start.residual,
        });
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut solutions = Vec::with_capacity(grid.len());
    let mut suspects = Vec::new();
    let mut warm = start.u.clone();
    for (i, &rho) in grid.iter().enumerate() {
        let spec = template.with_rho(rho)?;
        let result = if i == 0 { start.clone() } else { newton_solve(&warm, &spec, &config.newton)? };
        let alpha = result.energy.total;
        let geometric = if (rho - 2.0 * spec.disc().area()).abs() <= 1e-9 * rho {
            Some(geometric_residual(&result.u, &spec)?)
        } else {
            None
        };
        if result.converged() {
            warm = result.u.clone();
        } else {
            suspects.push(rho);
        }
        rows.push(SweepRow {
            rho,
            alpha,
            alpha_over_rho: alpha / rho,
            residual: result.residual,
            status: result.status,
            iterations: result.iterations,
            geometric_residual: geometric,
        });
        solutions.push(result.u);
    }
    let violations = monotonicity_violations(&rows);
    Ok(SweepCurve {
        monotone: violations.is_empty(),
        violations,
        path_alpha,
        quantization_suspects: suspects,
        rows,
        solutions,
    })
}
