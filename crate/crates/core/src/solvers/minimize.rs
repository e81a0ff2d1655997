use std::time::Instant;

use super::{MinimizeConfig, Sobolev, SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::fem::ScalarField;
use crate::linalg::dot;
use crate::variational::{energy_gradient, energy_value, gauge_fix_with, Hessian, ProblemSpec};

/// Steepest descent in the H¹ metric with Armijo backtracking, stopped by the
/// residual tolerance, the blow-up detector or the iteration budget.
pub fn minimize(u0: &ScalarField, spec: &ProblemSpec, config: &MinimizeConfig) -> Result<SolveResult> {
    let started = Instant::now();
    u0.check_mesh(spec.mesh())?;
    if !spec.in_admissible_set(u0) {
        return Err(Error::NotInAdmissibleSet { integral: spec.curvature_mass(u0).value });
    }
    let sobolev = Sobolev::new(spec);
    let mass = spec.mass();
    let mut u = gauge_fix_with(mass, u0);
    let mut value = energy_value(&u, spec)?.expect("admissible");
    let mut step = 1.0f64.min(config.max_step);
    let mut residual = f64::NAN;
    let finish = |u: ScalarField, residual, it, status| {
        SolveResult::build("minimize", spec, u, residual, it, status, 0, started, config.kappa_min)
    };
    for it in 0..config.max_iters {
        let g = energy_gradient(&u, spec)?;
        residual = mass.dual_norm(g.values());
        if residual <= config.tol {
            return finish(u, residual, it, SolveStatus::Converged);
        }
        if u.max() - mass.mean(u.values()) > config.blow_up_threshold {
            return finish(u, residual, it, SolveStatus::BlowUpDetected);
        }
        let d = sobolev.direction(g.values());
        let slope = dot(g.values(), &d);
        if it % 500 == 0 {
            log::debug!("minimize {it}: energy {value} residual {residual:e} step {step:e}");
        }
        if !(slope < 0.0) {
            return Err(Error::Stagnation { iteration: it, energy: value, residual });
        }
        // Start from the minimizer of the local quadratic model when it is convex.
        let curvature = dot(&d, &Hessian::at(&u, spec)?.apply(&d));
        let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        step = if curvature > 0.0 { -slope / curvature } else { 2.0 * step }
            .min(config.max_step)
            .min(config.max_change / dmax);
        let accepted = loop {
            let trial = gauge_fix_with(mass, &u.add_scaled(step, &d));
            if let Some(v) = energy_value(&trial, spec)? {
                if v <= value + config.armijo * step * slope {
                    break Some((trial, v));
                }
                // Decreases below rounding: accept if the residual still drops.
                if (v - value).abs() <= 1e-13 * (1.0 + value.abs()) {
                    let r = mass.dual_norm(energy_gradient(&trial, spec)?.values());
                    if r < residual {
                        break Some((trial, v));
                    }
                }
            }
            step *= 0.5;
            if step < 1e-14 {
                break None;
            }
        };
        match accepted {
            Some((trial, v)) => {
                u = trial;
                value = v;
            }
            None => return Err(Error::Stagnation { iteration: it, energy: value, residual }),
        }
    }
    finish(u, residual, config.max_iters, SolveStatus::MaxIters)
}
