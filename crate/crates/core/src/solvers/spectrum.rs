use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::ScalarField;
use crate::linalg::{conjugate_gradient, dot, KrylovOptions};
use crate::output::sig17;
use crate::variational::{Hessian, ProblemSpec};

#[derive(Debug, Clone, Serialize)]
pub struct NegativeDirection {
    /// `vᵀHv / vᵀMv` for the final iterate.
    #[serde(serialize_with = "sig17")]
    pub rayleigh_quotient: f64,
    #[serde(serialize_with = "sig17")]
    pub shift: f64,
    pub steps: usize,
    pub negative: bool,
    #[serde(skip)]
    pub direction: Vec<f64>,
}

/// Shifted inverse iteration for the lowest eigenvalue of `H v = μ M v` on the
/// mean-zero subspace.
///
/// The shift `s = 1.1 max(ρKe^u/T) + 1` makes `H + sM` positive definite, so
/// each step is a conjugate-gradient solve.
pub fn negative_direction(
    u: &ScalarField,
    spec: &ProblemSpec,
    start: Option<&[f64]>,
    steps: usize,
) -> Result<NegativeDirection> {
    let h = Hessian::at(u, spec)?;
    let m = spec.mass().weights();
    let n = m.len();
    let ratio = h.density().iter().zip(m).map(|(q, mi)| q / mi).fold(0.0f64, f64::max);
    let shift = 1.1 * ratio + 1.0;
    let mut v: Vec<f64> = match start {
        Some(s) if s.len() == n => s.to_vec(),
        Some(s) => return Err(Error::MeshMismatch { expected: n, got: s.len() }),
        None => spec.mesh().vertices().iter().map(|x| x[0] + 0.5 * x[1] + 0.25 * x[2]).collect(),
    };
    let project = |v: &mut Vec<f64>| {
        let mean = spec.mass().mean(v);
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = spec.mass().l2_norm(v);
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
    };
    project(&mut v);
    if spec.mass().l2_norm(&v) == 0.0 {
        return Err(Error::InvalidArgument("start vector is constant".into()));
    }
    let diag: Vec<f64> = h.diagonal().iter().zip(m).map(|(d, mi)| d + shift * mi).collect();
    let apply = |x: &[f64], y: &mut [f64]| {
        h.apply_into(x, y);
        for i in 0..n {
            y[i] += shift * m[i] * x[i];
        }
    };
    for _ in 0..steps {
        let b: Vec<f64> = v.iter().zip(m).map(|(x, mi)| x * mi).collect();
        let out =
            conjugate_gradient(apply, Some(&diag), &b, false, KrylovOptions { rtol: 1e-10, ..Default::default() });
        v = out.x;
        project(&mut v);
    }
    let hv = h.apply(&v);
    let rayleigh_quotient = dot(&v, &hv) / dot(&v, &v.iter().zip(m).map(|(x, mi)| x * mi).collect::<Vec<_>>());
    Ok(NegativeDirection { rayleigh_quotient, shift, steps, negative: rayleigh_quotient < 0.0, direction: v })
}
