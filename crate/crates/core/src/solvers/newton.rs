use std::time::Instant;

use super::{NewtonConfig, SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::fem::ScalarField;
use crate::linalg::{dot, minres, KrylovOptions};
use crate::variational::{energy_gradient, gauge_fix_with, Hessian, ProblemSpec};

/// Residual merit `gᵀM⁻¹g`, or `None` outside the admissible set.
fn merit(u: &ScalarField, spec: &ProblemSpec) -> Result<Option<(f64, Vec<f64>)>> {
    match energy_gradient(u, spec) {
        Ok(g) => {
            let r = spec.mass().dual_norm(g.values());
            Ok(Some((r * r, g.into_values())))
        }
        Err(Error::NotInAdmissibleSet { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Damped Newton iteration on `∇I = 0` with MINRES inner solves and a
/// backtracking line search on the residual.
pub fn newton_solve(u0: &ScalarField, spec: &ProblemSpec, config: &NewtonConfig) -> Result<SolveResult> {
    let started = Instant::now();
    u0.check_mesh(spec.mesh())?;
    if !spec.in_admissible_set(u0) {
        return Err(Error::NotInAdmissibleSet { integral: spec.curvature_mass(u0).value });
    }
    let mass = spec.mass();
    let m = mass.weights();
    let mut u = gauge_fix_with(mass, u0);
    let (mut phi, mut g) = merit(&u, spec)?.expect("admissible");
    let mut fallbacks = 0;
    for it in 0..config.max_iters {
        let residual = phi.sqrt();
        if residual <= config.tol {
            return SolveResult::build(
                "newton",
                spec,
                u,
                residual,
                it,
                SolveStatus::Converged,
                fallbacks,
                started,
                config.kappa_min,
            );
        }
        let h = Hessian::at(&u, spec)?;
        // `H + c m mᵀ` is nonsingular and, since Σg = 0, its solution is the
        // Newton step with `mᵀδ = 0`.
        let c = m.len() as f64 / (mass.total() * mass.total());
        let diag: Vec<f64> = h.diagonal().iter().zip(m).map(|(d, mi)| (d + c * mi * mi).abs().max(1e-300)).collect();
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let out = minres(
            |x, y| {
                h.apply_into(x, y);
                let mx = c * dot(m, x);
                y.iter_mut().zip(m).for_each(|(yi, mi)| *yi += mx * mi);
            },
            Some(&diag),
            &rhs,
            KrylovOptions {
                rtol: residual.min(1e-2).max(config.linear_rtol),
                max_iter: config.linear_max_iters,
                precondition: true,
            },
        );
        // Directional derivative of the merit along δ is 2 gᵀM⁻¹Hδ.
        let minv_g: Vec<f64> = g.iter().zip(m).map(|(gi, mi)| gi / mi).collect();
        let hminv_g = h.apply(&minv_g);
        log::debug!("minres: its {} rel {:e} conv {}", out.iterations, out.relative_residual, out.converged);
        let newton_ok = out.x.iter().all(|v| v.is_finite()) && out.relative_residual < 0.5;
        let mut delta = out.x;
        let mut dphi = 2.0 * dot(&hminv_g, &delta);
        if !newton_ok || !(dphi < 0.0) {
            fallbacks += 1;
            log::debug!("newton iteration {it}: falling back to steepest descent on the residual");
            delta = hminv_g.iter().map(|v| -v).collect();
            dphi = -2.0 * dot(&hminv_g, &hminv_g);
            // Scale the first trial step to the Gauss-Newton length.
            let hd = h.apply(&delta);
            let curv: f64 = hd.iter().zip(m).map(|(v, mi)| v * v / mi).sum();
            if curv > 0.0 {
                let s = -0.5 * dphi / curv;
                delta.iter_mut().for_each(|v| *v *= s);
                dphi *= s;
            }
        }
        let mut t = 1.0;
        let accepted = loop {
            let trial = gauge_fix_with(mass, &u.add_scaled(t, &delta));
            if let Some((p, gt)) = merit(&trial, spec)? {
                if p <= phi + config.armijo * t * dphi {
                    break Some((trial, p, gt));
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                break None;
            }
        };
        match accepted {
            Some((trial, p, gt)) => {
                u = trial;
                phi = p;
                g = gt;
            }
            None => {
                let residual = phi.sqrt();
                log::warn!("newton line search failed at iteration {it} with residual {residual:e}");
                return SolveResult::build(
                    "newton",
                    spec,
                    u,
                    residual,
                    it,
                    SolveStatus::MaxIters,
                    fallbacks,
                    started,
                    config.kappa_min,
                );
            }
        }
    }
    SolveResult::build(
        "newton",
        spec,
        u,
        phi.sqrt(),
        config.max_iters,
        SolveStatus::MaxIters,
        fallbacks,
        started,
        config.kappa_min,
    )
}
