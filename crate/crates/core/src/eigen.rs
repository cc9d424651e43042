//! Shift-invert thick-restart Lanczos for the largest eigenvalues of a sparse
//! symmetric matrix that lie below a shift.
//!
//! With `σ` above the wanted part of the spectrum, `σI − A` is positive
//! definite and is factored once by sparse Cholesky. Lanczos runs on
//! `(σI − A)⁻¹`, whose dominant eigenvalues `θ = 1/(σ − λ)` correspond to the
//! eigenvalues `λ` of `A` closest to `σ`.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::sparse::{to_faer, CsrMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Number of eigenpairs wanted.
    pub nev: usize,
    /// Krylov basis size; raised to at least `2·nev + 8`.
    pub basis_size: usize,
    pub max_restarts: usize,
    /// Relative Ritz residual on the inverted operator.
    pub tolerance: f64,
    /// Optional starting vector (e.g. a mode from a nearby solve).
    pub initial_guess: Option<Vec<f64>>,
    /// Eigenvalues provably below this bound need not converge and are
    /// dropped from the result.
    pub floor: Option<f64>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { nev: 4, basis_size: 24, max_restarts: 200, tolerance: 1e-12, initial_guess: None, floor: None }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Unit 2-norm.
    pub vector: Vec<f64>,
    /// `‖A·x − λ·x‖ / |λ|`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// Sorted by descending eigenvalue.
    pub pairs: Vec<EigenPair>,
    pub restarts: usize,
    pub operator_applications: usize,
}

/// Finds the `nev` eigenvalues of the symmetric matrix `a` nearest below
/// `shift`. Fails with [`Error::LinearAlgebra`] if `shift·I − a` is not
/// positive definite.
///
/// A single-vector Krylov space sees only one direction of an exactly
/// degenerate eigenspace, so after the main run a second run from a fresh
/// start, deflated against the converged vectors, checks for missed
/// eigenvalues.
pub fn eigs_below_shift(a: &CsrMatrix<f64>, shift: f64, opts: &EigenOptions) -> Result<EigenSolution> {
    let n = a.dim();
    let nev = opts.nev.min(n);
    if nev == 0 {
        return Ok(EigenSolution { pairs: Vec::new(), restarts: 0, operator_applications: 0 });
    }
    let m = opts.basis_size.max(2 * nev + 8).min(n);

    let shifted = to_faer(&a.shifted(shift, -1.0))?;
    let llt = shifted
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("shifted operator is not positive definite: {e:?}")))?;
    let mut applications = 0usize;
    let mut rhs = Mat::<f64>::zeros(n, 1);
    let mut op = |x: &[f64]| -> Vec<f64> {
        applications += 1;
        for (i, &v) in x.iter().enumerate() {
            rhs[(i, 0)] = v;
        }
        llt.solve_in_place(rhs.as_mut());
        (0..n).map(|i| rhs[(i, 0)]).collect()
    };

    let mut start = deterministic_vector(n, 0);
    if let Some(g) = &opts.initial_guess {
        if g.len() == n && norm(g) > 0.0 {
            // Keep a little of the generic start so other symmetry classes stay reachable.
            let gn = norm(g);
            let sn = norm(&start);
            for (s, &gi) in start.iter_mut().zip(g) {
                *s = gi / gn + 1e-3 * *s / sn;
            }
        }
    }
    let theta_floor = match opts.floor {
        Some(f) if f < shift => 1.0 / (shift - f),
        _ => 0.0,
    };
    let run = KrylovSchur { n, nev, m, tolerance: opts.tolerance, max_restarts: opts.max_restarts, theta_floor };
    let (mut found, mut restarts) = run.solve(&mut op, &[], start)?;

    for pass in 1..=3u64 {
        let locked: Vec<Vec<f64>> = found.iter().map(|(_, v)| v.clone()).collect();
        let (extra, r) = run.solve(&mut op, &locked, deterministic_vector(n, 1000 + pass))?;
        restarts += r;
        let weakest = if found.len() < nev { 0.0 } else { found.last().map_or(0.0, |(t, _)| *t) };
        if extra.first().map_or(true, |(t, _)| *t <= weakest * (1.0 + 1e-10)) {
            break;
        }
        found.extend(extra);
        found.sort_by(|p, q| q.0.total_cmp(&p.0));
        found.truncate(nev);
    }

    let ritz = found.into_iter().map(|(_, v)| v).collect();
    let pairs = finish(a, ritz, &mut op)?;
    Ok(EigenSolution { pairs, restarts, operator_applications: applications })
}

struct KrylovSchur {
    n: usize,
    nev: usize,
    m: usize,
    tolerance: f64,
    max_restarts: usize,
    /// Ritz values `θ` that stay below this even after adding their residual
    /// bound are settled without converging.
    theta_floor: f64,
}

impl KrylovSchur {
    /// Dominant `nev` eigenpairs `(θ, x)` of `op` restricted to the
    /// complement of `locked`, sorted by descending `θ`.
    #[allow(clippy::type_complexity)]
    fn solve(
        &self,
        op: &mut impl FnMut(&[f64]) -> Vec<f64>,
        locked: &[Vec<f64>],
        mut start: Vec<f64>,
    ) -> Result<(Vec<(f64, Vec<f64>)>, usize)> {
        let (n, nev) = (self.n, self.nev);
        let m = self.m.min(n.saturating_sub(locked.len())).max(1);
        let nev = nev.min(m);
        let mut apply = |x: &[f64]| {
            let mut w = op(x);
            orthogonalize(&mut w, locked);
            w
        };
        orthogonalize(&mut start, locked);
        normalize(&mut start);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(start);

        let mut h = DMatrix::<f64>::zeros(m, m);
        let mut kept = 0usize;
        let mut restarts = 0usize;
        let mut seed = 1u64;

        loop {
            let mut residual_vec = Vec::new();
            let mut residual_norm = 0.0;
            for j in kept..m {
                let mut w = apply(&basis[j]);
                let coeffs = orthogonalize(&mut w, &basis[..=j]);
                for (i, c) in coeffs.iter().enumerate() {
                    h[(i, j)] = *c;
                    h[(j, i)] = *c;
                }
                let beta = norm(&w);
                if j + 1 == m {
                    residual_vec = w;
                    residual_norm = beta;
                    break;
                }
                // Tiny β means an invariant subspace; continue from a fresh direction.
                let scale = coeffs.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
                if beta <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
                    let mut fresh = deterministic_vector(n, seed);
                    seed += 1;
                    orthogonalize(&mut fresh, locked);
                    orthogonalize(&mut fresh, &basis[..=j]);
                    normalize(&mut fresh);
                    basis.push(fresh);
                } else {
                    basis.push(w.iter().map(|v| v / beta).collect());
                }
            }

            let eig = SymmetricEigen::new(h.clone());
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
            let estimate = |i: usize| residual_norm * eig.eigenvectors[(m - 1, i)].abs();
            let accurate = |i: usize| estimate(i) <= self.tolerance * eig.eigenvalues[i].abs();
            let converged = order
                .iter()
                .take(nev)
                .all(|&i| accurate(i) || eig.eigenvalues[i] + estimate(i) < self.theta_floor);

            let keep = if converged { nev } else { (nev + (m - nev) / 2).clamp(1, m.saturating_sub(1).max(1)) };
            let ritz: Vec<Vec<f64>> = order[..keep]
                .iter()
                .map(|&c| {
                    let mut y = vec![0.0; n];
                    for (r, v) in basis.iter().enumerate().take(m) {
                        let s = eig.eigenvectors[(r, c)];
                        for (yi, vi) in y.iter_mut().zip(v) {
                            *yi += s * vi;
                        }
                    }
                    y
                })
                .collect();

            if converged || m == n.saturating_sub(locked.len()) {
                let out = order[..nev]
                    .iter()
                    .zip(ritz)
                    .filter(|(&c, _)| eig.eigenvalues[c] >= self.theta_floor && accurate(c))
                    .map(|(&c, v)| (eig.eigenvalues[c], v))
                    .collect();
                return Ok((out, restarts));
            }
            restarts += 1;
            if restarts > self.max_restarts {
                let worst = order
                    .iter()
                    .take(nev)
                    .map(|&i| estimate(i) / eig.eigenvalues[i].abs())
                    .fold(0.0, f64::max);
                return Err(Error::NoConvergence { iterations: restarts, residual: worst });
            }

            h.fill(0.0);
            for (k, &c) in order[..keep].iter().enumerate() {
                h[(k, k)] = eig.eigenvalues[c];
            }
            basis = ritz;
            if residual_norm > 0.0 {
                basis.push(residual_vec.iter().map(|v| v / residual_norm).collect());
            } else {
                let mut fresh = deterministic_vector(n, seed);
                seed += 1;
                orthogonalize(&mut fresh, locked);
                orthogonalize(&mut fresh, &basis);
                normalize(&mut fresh);
                basis.push(fresh);
            }
            kept = keep;
        }
    }
}

/// Shift-invert subspace iteration with Rayleigh-Ritz on `a` for a general
/// (non-symmetric) sparse matrix whose wanted eigenvalues are real. Returns
/// the `nev` largest Ritz pairs of the converged subspace; `start` supplies
/// the initial block (at least `nev` vectors, ideally a few more).
pub fn eigs_nonsymmetric_near(
    a: &CsrMatrix<f64>,
    shift: f64,
    start: Vec<Vec<f64>>,
    nev: usize,
    tolerance: f64,
    max_iterations: usize,
) -> Result<EigenSolution> {
    let n = a.dim();
    let nev = nev.min(start.len());
    if nev == 0 {
        return Ok(EigenSolution { pairs: Vec::new(), restarts: 0, operator_applications: 0 });
    }
    let factor = |sigma: f64| {
        to_faer(&a.shifted(sigma, -1.0))?
            .sp_lu()
            .map_err(|e| Error::LinearAlgebra(format!("shifted operator is singular: {e:?}")))
    };
    let mut lu = factor(shift)?;
    let mut reshifted = false;
    let k = start.len();
    let mut block = Mat::<f64>::from_fn(n, k, |i, c| start[c][i]);
    let mut q = orthonormal_columns(&block);
    let mut applications = 0usize;
    let mut worst = f64::INFINITY;

    for iteration in 0..max_iterations {
        for c in 0..k {
            for i in 0..n {
                block[(i, c)] = q[c][i];
            }
        }
        lu.solve_in_place(block.as_mut());
        applications += k;
        q = orthonormal_columns(&block);

        let aq: Vec<Vec<f64>> = q.iter().map(|v| a.apply(v)).collect();
        let g = DMatrix::from_fn(k, k, |i, j| dot(&q[i], &aq[j]));
        let values = nalgebra::Schur::new(g.clone()).complex_eigenvalues();
        let mut lambdas: Vec<f64> = values.iter().map(|z| z.re).collect();
        lambdas.sort_by(|p, q| q.total_cmp(p));

        let mut pairs = Vec::with_capacity(nev);
        for &lambda in lambdas.iter().take(nev) {
            let shifted = &g - DMatrix::<f64>::identity(k, k) * lambda;
            let svd = shifted.svd(false, true);
            let v_t = svd.v_t.ok_or_else(|| Error::LinearAlgebra("SVD failed in Ritz extraction".into()))?;
            let (idx, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
            let mut x = vec![0.0; n];
            let mut ax = vec![0.0; n];
            for r in 0..k {
                let y = v_t[(idx, r)];
                for i in 0..n {
                    x[i] += y * q[r][i];
                    ax[i] += y * aq[r][i];
                }
            }
            let xn = norm(&x);
            let res = ax.iter().zip(&x).map(|(p, q)| (p - lambda * q).powi(2)).sum::<f64>().sqrt()
                / (lambda.abs() * xn).max(f64::MIN_POSITIVE);
            x.iter_mut().for_each(|e| *e /= xn);
            pairs.push(EigenPair { value: lambda, vector: x, residual: res });
        }
        worst = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
        if worst <= tolerance {
            return Ok(EigenSolution { pairs, restarts: iteration + 1, operator_applications: applications });
        }
        // Once the leading Ritz value is roughly located, move the shift just
        // above it; convergence then goes as (σ − λ_i)/(σ − λ_{k+1}).
        if !reshifted && iteration == 3 {
            let top = pairs[0].value;
            if top < shift {
                lu = factor(top + 1e-3 * (shift - top))?;
            }
            reshifted = true;
        }
    }
    Err(Error::NoConvergence { iterations: max_iterations, residual: worst })
}

fn orthonormal_columns(m: &Mat<f64>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(m.ncols());
    for c in 0..m.ncols() {
        let mut v: Vec<f64> = (0..m.nrows()).map(|i| m[(i, c)]).collect();
        orthogonalize(&mut v, &out);
        normalize(&mut v);
        out.push(v);
    }
    out
}

/// One extra inverse-iteration sweep, then Rayleigh-Ritz on `A` in the
/// purified subspace. This strips the high-frequency error that the inverted
/// operator hides but `A` amplifies.
fn finish(
    a: &CsrMatrix<f64>,
    ritz: Vec<Vec<f64>>,
    op: &mut impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<Vec<EigenPair>> {
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(ritz.len());
    for y in &ritz {
        let mut v = op(y);
        orthogonalize(&mut v, &x);
        normalize(&mut v);
        x.push(v);
    }
    let k = x.len();
    let ax: Vec<Vec<f64>> = x.iter().map(|v| a.apply(v)).collect();
    let g = DMatrix::from_fn(k, k, |i, j| 0.5 * (dot(&x[i], &ax[j]) + dot(&x[j], &ax[i])));
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
    let n = a.dim();
    let pairs = order
        .into_iter()
        .map(|c| {
            let mut v = vec![0.0; n];
            let mut av = vec![0.0; n];
            for r in 0..k {
                let s = eig.eigenvectors[(r, c)];
                for i in 0..n {
                    v[i] += s * x[r][i];
                    av[i] += s * ax[r][i];
                }
            }
            let vn = norm(&v);
            let lambda = eig.eigenvalues[c];
            let res = av.iter().zip(&v).map(|(p, q)| (p - lambda * q).powi(2)).sum::<f64>().sqrt()
                / (lambda.abs() * vn).max(f64::MIN_POSITIVE);
            v.iter_mut().for_each(|e| *e /= vn);
            EigenPair { value: lambda, vector: v, residual: res }
        })
        .collect();
    Ok(pairs)
}

/// Classical Gram-Schmidt applied twice; returns the accumulated projections.
fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, v) in coeffs.iter_mut().zip(basis) {
            let p = dot(v, w);
            *c += p;
            for (wi, vi) in w.iter_mut().zip(v) {
                *wi -= p * vi;
            }
        }
    }
    coeffs
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|v| *v /= n);
    }
}

/// Reproducible pseudo-random vector in `[-1, 1)` (splitmix64 stream).
fn deterministic_vector(n: usize, stream: u64) -> Vec<f64> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream + 1);
    (0..n)
        .map(|_| {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^= z >> 31;
            (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}
