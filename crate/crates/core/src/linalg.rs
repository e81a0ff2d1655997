//! Sparse matrices and Krylov solvers for the symmetric systems that arise
//! from the P1 discretization: CG for semidefinite Neumann operators and
//! MINRES for indefinite Hessians.

use std::fmt::Write as _;

use crate::parallel;

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a zero matrix with the given symmetric sparsity pattern.
    /// `pattern[i]` lists the columns of row `i`, diagonal included.
    pub fn from_pattern(pattern: Vec<Vec<usize>>) -> Self {
        let n = pattern.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut row in pattern {
            row.sort_unstable();
            row.dedup();
            col_idx.extend(row);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        Self { n, row_ptr, col_idx, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to entry `(i, j)`; panics if the entry is outside the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.position(i, j).expect("entry outside sparsity pattern");
        self.values[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.position(i, j).expect("entry outside sparsity pattern");
        self.values[k] = v;
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        parallel::fill(y, |i| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            s
        });
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    /// `xᵀ A x`, summed in row order.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let ax = self.mul(x);
        dot(x, &ax)
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Coordinate-format dump, one `row col value` triple per line.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(s, "{i} {j} {v:.17e}").unwrap();
            }
        }
        s
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Removes the Euclidean mean, i.e. projects onto the complement of constants.
pub fn remove_mean(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= mean);
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    pub rtol: f64,
    pub max_iter: usize,
    /// Use a diagonal (Jacobi) preconditioner.
    pub precondition: bool,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, max_iter: 20_000, precondition: true }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `|b - A x| / |b|` measured at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for symmetric positive (semi)definite
/// operators. With `kernel_constants` the residual is kept orthogonal to the
/// constant vector, which is the null space of Neumann operators.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: Option<&[f64]>,
    b: &[f64],
    kernel_constants: bool,
    opts: KrylovOptions,
) -> KrylovOutcome {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return KrylovOutcome { x, iterations: 0, relative_residual: 0.0, converged: true };
    }
    let precond = |r: &[f64], z: &mut [f64]| match (diag, opts.precondition) {
        (Some(d), true) => {
            z.iter_mut().zip(r).zip(d).for_each(|((zi, ri), di)| *zi = if *di > 0.0 { ri / di } else { *ri })
        }
        _ => z.copy_from_slice(r),
    };
    let mut r = b.to_vec();
    if kernel_constants {
        remove_mean(&mut r);
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let target = opts.rtol * bnorm;
    let mut iterations = 0;
    let mut restarts = 0;
    loop {
        while iterations < opts.max_iter && norm2(&r) > target {
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            if kernel_constants {
                remove_mean(&mut r);
            }
            precond(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
            iterations += 1;
        }
        // The recursive residual drifts; confirm against the true one and restart once if needed.
        apply(&x, &mut ap);
        r.iter_mut().zip(b).zip(&ap).for_each(|((ri, bi), ai)| *ri = bi - ai);
        if kernel_constants {
            remove_mean(&mut r);
        }
        let rel = norm2(&r) / bnorm;
        if rel <= opts.rtol || iterations >= opts.max_iter || restarts >= 2 {
            return KrylovOutcome { x, iterations, relative_residual: rel, converged: rel <= opts.rtol };
        }
        restarts += 1;
        precond(&r, &mut z);
        p.copy_from_slice(&z);
        rz = dot(&r, &z);
    }
}

/// Preconditioned MINRES for symmetric, possibly indefinite and singular but
/// consistent systems. The diagonal preconditioner must be positive.
pub fn minres(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: Option<&[f64]>,
    b: &[f64],
    opts: KrylovOptions,
) -> KrylovOutcome {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return KrylovOutcome { x, iterations: 0, relative_residual: 0.0, converged: true };
    }
    let precond = |r: &[f64], z: &mut [f64]| match (diag, opts.precondition) {
        (Some(d), true) => z.iter_mut().zip(r).zip(d).for_each(|((zi, ri), di)| *zi = ri / di),
        _ => z.copy_from_slice(r),
    };

    let mut r1 = b.to_vec();
    let mut y = vec![0.0; n];
    precond(&r1, &mut y);
    let beta1 = dot(&r1, &y).sqrt();
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut iterations = 0;

    let check_every = 25;
    let mut ax = vec![0.0; n];
    let true_rel = |x: &[f64], ax: &mut [f64]| {
        apply(x, ax);
        let r: f64 = b.iter().zip(ax.iter()).map(|(bi, ai)| (bi - ai) * (bi - ai)).sum();
        r.sqrt() / bnorm
    };

    while iterations < opts.max_iter {
        iterations += 1;
        let s = 1.0 / beta;
        v.iter_mut().zip(&y).for_each(|(vi, yi)| *vi = s * yi);
        apply(&v, &mut y);
        if iterations >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        precond(&r2, &mut y);
        oldb = beta;
        let bb = dot(&r2, &y);
        if bb < 0.0 {
            break;
        }
        beta = bb.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for k in 0..n {
            w[k] = (v[k] - oldeps * w1[k] - delta * w2[k]) * denom;
        }
        axpy(phi, &w, &mut x);

        // phibar estimates the preconditioned residual norm.
        if phibar <= 0.1 * opts.rtol * beta1 || beta == 0.0 || iterations % check_every == 0 {
            let rel = true_rel(&x, &mut ax);
            if rel <= opts.rtol {
                return KrylovOutcome { x, iterations, relative_residual: rel, converged: true };
            }
            if beta == 0.0 {
                break;
            }
        }
    }
    let rel = true_rel(&x, &mut ax);
    KrylovOutcome { x, iterations, relative_residual: rel, converged: rel <= opts.rtol }
}
