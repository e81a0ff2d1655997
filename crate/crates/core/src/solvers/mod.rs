//! Nonlinear solvers: energy descent, Newton's method on the Euler–Lagrange
//! equation, a string-method mountain pass over the bubble cone, and
//! continuation in `ρ`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{classify, concentration_report, ConcentrationReport, BLOW_UP_THRESHOLD, DEFAULT_KAPPA_MIN};
use crate::error::Result;
use crate::fem::ScalarField;
use crate::linalg::{conjugate_gradient, CsrMatrix, KrylovOptions};
use crate::output::{sig17, to_json};
use crate::variational::{energy, EnergyBreakdown, ProblemSpec};

mod continuation;
mod minimize;
mod mountain_pass;
mod newton;
mod spectrum;

pub use continuation::{rho_continuation, SweepCurve, SweepRow};
pub use minimize::minimize;
pub use mountain_pass::{
    default_vertex, loop_samples, mountain_pass, mountain_pass_from, Candidate, MountainPassResult, PathState,
};
pub use newton::newton_solve;
pub use spectrum::{negative_direction, NegativeDirection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    BlowUpDetected,
    NotInX,
    MaxIters,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::BlowUpDetected => "blow-up-detected",
            SolveStatus::NotInX => "not-in-X",
            SolveStatus::MaxIters => "max-iters",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub solver: &'static str,
    /// Gauge-fixed field.
    #[serde(skip)]
    pub u: ScalarField,
    /// `sqrt(gᵀM⁻¹g)`.
    #[serde(serialize_with = "sig17")]
    pub residual: f64,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Newton steps that fell back to steepest descent on the residual.
    pub fallback_steps: usize,
    pub concentration: Option<ConcentrationReport>,
    /// Seconds; left out of serialized artifacts so reruns compare equal.
    #[serde(skip)]
    pub wall_time: f64,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Writes `result.json` and `field.csv` into `dir`.
    pub fn write(&self, spec: &ProblemSpec, dir: &Path, stem: &str) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.json")), to_json(self)?)?;
        self.u.write_csv(spec.mesh(), &dir.join(format!("{stem}_field.csv")))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        solver: &'static str,
        spec: &ProblemSpec,
        u: ScalarField,
        residual: f64,
        iterations: usize,
        status: SolveStatus,
        fallback_steps: usize,
        started: std::time::Instant,
        kappa_min: f64,
    ) -> Result<Self> {
        let energy = energy(&u, spec)?;
        let concentration = classify(spec.mesh(), spec.curvature(), kappa_min)
            .ok()
            .and_then(|c| concentration_report(&u, spec.disc(), &c).ok());
        Ok(Self {
            solver,
            u,
            residual,
            energy,
            iterations,
            status,
            fallback_steps,
            concentration,
            wall_time: started.elapsed().as_secs_f64(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizeConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub blow_up_threshold: f64,
    /// Sufficient-decrease constant of the Armijo rule.
    pub armijo: f64,
    /// Largest trial step along the Sobolev gradient.
    pub max_step: f64,
    /// Largest sup-norm change of `u` in one iteration.
    pub max_change: f64,
    pub kappa_min: f64,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 20_000,
            blow_up_threshold: BLOW_UP_THRESHOLD,
            armijo: 1e-4,
            max_step: 1e3,
            max_change: 1.0,
            kappa_min: DEFAULT_KAPPA_MIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub linear_rtol: f64,
    pub linear_max_iters: usize,
    pub armijo: f64,
    pub kappa_min: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 50,
            linear_rtol: 1e-12,
            linear_max_iters: 20_000,
            armijo: 1e-4,
            kappa_min: DEFAULT_KAPPA_MIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    /// Nodes including both endpoints.
    pub nodes: usize,
    pub max_sweeps: usize,
    /// Fraction of the Armijo step actually taken by each node.
    pub step_fraction: f64,
    /// Bubble scale of the far endpoint.
    pub lambda: f64,
    pub samples_per_loop: usize,
    /// Sweeps stop once the estimate has decreased by less than
    /// `stall_tol·(1 + |α|)` over `patience` consecutive sweeps.
    pub stall_tol: f64,
    pub patience: usize,
    pub armijo: f64,
    pub kappa_min: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            nodes: 16,
            max_sweeps: 200,
            step_fraction: 0.2,
            lambda: 16.0,
            samples_per_loop: 8,
            stall_tol: 1e-9,
            patience: 10,
            armijo: 1e-4,
            kappa_min: DEFAULT_KAPPA_MIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub minimize: MinimizeConfig,
    pub newton: NewtonConfig,
    pub path: PathConfig,
}

/// `(S + M)⁻¹`, the Riesz map of the H¹ inner product.
pub(crate) struct Sobolev {
    a: CsrMatrix,
    diag: Vec<f64>,
}

impl Sobolev {
    pub(crate) fn new(spec: &ProblemSpec) -> Self {
        let mut a = spec.stiffness().matrix().clone();
        for (i, m) in spec.mass().weights().iter().enumerate() {
            a.add(i, i, *m);
        }
        let diag = a.diagonal();
        Self { a, diag }
    }

    /// Descent direction `−(S + M)⁻¹ g`.
    pub(crate) fn direction(&self, g: &[f64]) -> Vec<f64> {
        self.direction_with(g, 1e-10)
    }

    pub(crate) fn direction_with(&self, g: &[f64], rtol: f64) -> Vec<f64> {
        let out = conjugate_gradient(
            |x, y| self.a.mul_into(x, y),
            Some(&self.diag),
            g,
            false,
            KrylovOptions { rtol, max_iter: 10_000, precondition: true },
        );
        out.x.into_iter().map(|v| -v).collect()
    }

    pub(crate) fn norm2(&self, v: &[f64]) -> f64 {
        self.a.quadratic_form(v)
    }
}
