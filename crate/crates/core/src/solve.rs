//! Jacobi-preconditioned conjugate gradients and eigenvalue iterations.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::symmetric_eigen;
use crate::sparse::{dot, norm2, CsrMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64, history: Vec<f64> },
    #[error("matrix is not positive definite: curvature {curvature:e} at iteration {iteration}")]
    Indefinite { iteration: usize, curvature: f64 },
    #[error("invalid solver input: {0}")]
    Input(&'static str),
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual `‖b - Ax‖ / ‖b‖` on return.
    pub final_residual: f64,
    pub residual_history: Vec<f64>,
    /// Seconds; the core crate has no clock, so callers fill this in.
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PcgOptions {
    fn default() -> Self {
        PcgOptions { tol: 1e-10, max_iter: 20_000 }
    }
}

/// Solves `A x = b` with conjugate gradients preconditioned by `diag(A)`.
/// Stops when `‖b - Ax‖₂ ≤ tol ‖b‖₂`.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &PcgOptions,
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    pcg_observed(a, b, x0, opts, |_, _| {})
}

/// [`pcg`] calling `observe(iteration, x)` after every update of the iterate.
pub fn pcg_observed(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &PcgOptions,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, SolveReport), SolveError> {
    let n = a.dim();
    if b.len() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(SolveError::Input("dimension mismatch"));
    }
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(SolveError::Input("tolerance must lie in (0, 1)"));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { f64::NAN })
        .collect();
    if let Some(i) = inv_diag.iter().position(|d| d.is_nan()) {
        return Err(SolveError::Indefinite { iteration: 0, curvature: a.get(i, i) });
    }
    let bnorm = norm2(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveReport::default()));
    }
    let mut r = a.mul_vec(&x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut history = vec![norm2(&r) / bnorm];
    if history[0] <= opts.tol {
        let final_residual = history[0];
        return Ok((x, SolveReport { iterations: 0, final_residual, residual_history: history, wall_time: None }));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        a.matvec(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(SolveError::Indefinite { iteration: it, curvature });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        observe(it, &x);
        let rel = norm2(&r) / bnorm;
        history.push(rel);
        if rel <= opts.tol {
            // Guard against drift of the recursive residual.
            let mut true_r = a.mul_vec(&x);
            for (ri, bi) in true_r.iter_mut().zip(b) {
                *ri = bi - *ri;
            }
            let true_rel = norm2(&true_r) / bnorm;
            if true_rel <= opts.tol {
                return Ok((
                    x,
                    SolveReport { iterations: it, final_residual: true_rel, residual_history: history, wall_time: None },
                ));
            }
            r = true_r;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = *history.last().unwrap_or(&f64::NAN);
    Err(SolveError::NonConvergence { iterations: opts.max_iter, residual, history })
}

/// Result of an eigenvalue iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Normalized so that `vᵀ M v = 1`.
    pub vector: Vec<f64>,
    /// Outer iterations.
    pub iterations: usize,
    /// `‖K v - λ M v‖ / ‖K v‖`.
    pub residual: f64,
    /// Total inner PCG iterations.
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    /// Stop once the Rayleigh quotient changes by at most `tol` (relative).
    pub tol: f64,
    pub max_iter: usize,
    /// Tolerance of the inner solves.
    pub inner: PcgOptions,
    /// Vectors to keep `M`-orthogonal to (e.g. constants).
    pub deflate: Vec<Vec<f64>>,
    /// Extra iterations allowed to push the eigen-residual below `10 tol`.
    pub polish_iter: usize,
    /// Number of vectors iterated together. Above 1, a Rayleigh-Ritz step
    /// on the block separates clustered or repeated eigenvalues, which
    /// stall single-vector iteration.
    pub block: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-10,
            max_iter: 500,
            inner: PcgOptions { tol: 1e-12, max_iter: 20_000 },
            deflate: Vec::new(),
            polish_iter: 50,
            block: 1,
        }
    }
}

/// Removes the `M`-projections onto `(v, M v, vᵀ M v)` triples.
fn m_orthogonalize(x: &mut [f64], basis: &[(Vec<f64>, Vec<f64>, f64)]) {
    for (v, mv, vmv) in basis {
        let c = dot(x, mv) / vmv;
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= c * vi;
        }
    }
}

/// Smallest eigenpair of `K u = λ M u` (restricted to the `M`-orthogonal
/// complement of `opts.deflate`) by shift-inverted power iteration with
/// `K + shift M`.
pub fn smallest_eigenpair(
    k: &CsrMatrix,
    m: &CsrMatrix,
    shift: f64,
    opts: &EigenOptions,
) -> Result<EigenPair, SolveError> {
    let n = k.dim();
    if m.dim() != n {
        return Err(SolveError::Input("dimension mismatch"));
    }
    if opts.block > 1 {
        return block_smallest_eigenpair(k, m, shift, opts);
    }
    let shifted = k.add_scaled(shift, m).map_err(|_| SolveError::Input("dimension mismatch"))?;
    let basis: Vec<(Vec<f64>, Vec<f64>, f64)> = opts
        .deflate
        .iter()
        .map(|v| {
            let mv = m.mul_vec(v);
            let vmv = dot(v, &mv);
            (v.clone(), mv, vmv)
        })
        .collect();
    // Deterministic start with components in every direction.
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * libm::sin(1.0 + i as f64 * 0.7548776662)).collect();
    m_orthogonalize(&mut x, &basis);
    let mut mx = m.mul_vec(&x);
    let scale = 1.0 / libm::sqrt(dot(&x, &mx));
    x.iter_mut().for_each(|v| *v *= scale);
    mx.iter_mut().for_each(|v| *v *= scale);
    let mut lambda = k.bilinear(&x, &x);
    let mut inner_iterations = 0;
    let mut converged_at = None;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter + opts.polish_iter {
        // (K + σM)⁻¹ M x ≈ x / (λ + σ) near convergence.
        let guess: Vec<f64> = x.iter().map(|v| v / (lambda + shift)).collect();
        let (mut next, report) = pcg(&shifted, &mx, Some(&guess), &opts.inner)?;
        inner_iterations += report.iterations;
        m_orthogonalize(&mut next, &basis);
        let mn = m.mul_vec(&next);
        let s = 1.0 / libm::sqrt(dot(&next, &mn));
        next.iter_mut().for_each(|v| *v *= s);
        x = next;
        mx = mn.into_iter().map(|v| v * s).collect();
        let kx = k.mul_vec(&x);
        let new_lambda = dot(&x, &kx);
        let knorm = norm2(&kx);
        let res: f64 = kx.iter().zip(&mx).map(|(a, b)| (a - new_lambda * b) * (a - new_lambda * b)).sum::<f64>();
        residual = if knorm > 0.0 { libm::sqrt(res) / knorm } else { libm::sqrt(res) };
        let change = (new_lambda - lambda).abs() / new_lambda.abs().max(1.0);
        lambda = new_lambda;
        if converged_at.is_none() && change <= opts.tol {
            converged_at = Some(it);
        }
        if let Some(c) = converged_at {
            if residual <= 10.0 * opts.tol || it >= c + opts.polish_iter {
                return Ok(EigenPair { value: lambda, vector: x, iterations: it, residual, inner_iterations });
            }
        } else if it >= opts.max_iter {
            break;
        }
    }
    Err(SolveError::NonConvergence { iterations: opts.max_iter, residual, history: Vec::new() })
}

/// `M`-orthonormalizes the columns of `x` in place (modified Gram-Schmidt,
/// twice for stability) and returns their `M`-images.
fn m_orthonormalize(x: &mut [Vec<f64>], m: &CsrMatrix) -> Result<Vec<Vec<f64>>, SolveError> {
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(x.len());
    for c in 0..x.len() {
        let (done, rest) = x.split_at_mut(c);
        let col = &mut rest[0];
        for _ in 0..2 {
            for (prev, mprev) in done.iter().zip(&images) {
                let coef = dot(col, mprev);
                col.iter_mut().zip(prev).for_each(|(v, p)| *v -= coef * p);
            }
        }
        let mx = m.mul_vec(&x[c]);
        let norm = libm::sqrt(dot(&x[c], &mx));
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(SolveError::Input("eigen block lost rank"));
        }
        x[c].iter_mut().for_each(|v| *v /= norm);
        images.push(mx.into_iter().map(|v| v / norm).collect());
    }
    Ok(images)
}

/// Block shift-inverted subspace iteration with Rayleigh-Ritz; reports the
/// lowest Ritz pair.
fn block_smallest_eigenpair(
    k: &CsrMatrix,
    m: &CsrMatrix,
    shift: f64,
    opts: &EigenOptions,
) -> Result<EigenPair, SolveError> {
    let n = k.dim();
    let b = opts.block.min(n);
    let shifted = k.add_scaled(shift, m).map_err(|_| SolveError::Input("dimension mismatch"))?;
    let basis: Vec<(Vec<f64>, Vec<f64>, f64)> = opts
        .deflate
        .iter()
        .map(|v| {
            let mv = m.mul_vec(v);
            let vmv = dot(v, &mv);
            (v.clone(), mv, vmv)
        })
        .collect();
    let mut x: Vec<Vec<f64>> = (0..b)
        .map(|c| {
            let f = 0.754_877_666_2 * (c + 1) as f64;
            (0..n).map(|i| 1.0 + 0.5 * libm::sin(1.0 + c as f64 + i as f64 * f)).collect()
        })
        .collect();
    for col in x.iter_mut() {
        m_orthogonalize(col, &basis);
    }
    let mut mx = m_orthonormalize(&mut x, m)?;
    let mut theta: Vec<f64> = x.iter().map(|c| k.bilinear(c, c)).collect();
    let mut lambda = f64::INFINITY;
    let mut inner_iterations = 0;
    let mut converged_at = None;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter + opts.polish_iter {
        let mut y = Vec::with_capacity(b);
        for c in 0..b {
            let guess: Vec<f64> = x[c].iter().map(|v| v / (theta[c] + shift)).collect();
            let (mut next, report) = pcg(&shifted, &mx[c], Some(&guess), &opts.inner)?;
            inner_iterations += report.iterations;
            m_orthogonalize(&mut next, &basis);
            y.push(next);
        }
        m_orthonormalize(&mut y, m)?;
        let ky: Vec<Vec<f64>> = y.iter().map(|c| k.mul_vec(c)).collect();
        let mut proj = vec![0.0; b * b];
        for i in 0..b {
            for j in 0..b {
                proj[i * b + j] = 0.5 * (dot(&y[i], &ky[j]) + dot(&y[j], &ky[i]));
            }
        }
        let (values, vectors) = symmetric_eigen(&proj, b);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let combine = |cols: &[Vec<f64>], q: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (r, col) in cols.iter().enumerate() {
                let w = vectors[r * b + q];
                out.iter_mut().zip(col).for_each(|(o, v)| *o += w * v);
            }
            out
        };
        x = order.iter().map(|&q| combine(&y, q)).collect();
        mx = x.iter().map(|c| m.mul_vec(c)).collect();
        theta = order.iter().map(|&q| values[q]).collect();
        let kx = order.first().map(|&q| combine(&ky, q)).unwrap_or_default();
        let new_lambda = theta[0];
        let knorm = norm2(&kx);
        let res: f64 = kx.iter().zip(&mx[0]).map(|(a, b)| (a - new_lambda * b) * (a - new_lambda * b)).sum::<f64>();
        residual = if knorm > 0.0 { libm::sqrt(res) / knorm } else { libm::sqrt(res) };
        let change = (new_lambda - lambda).abs() / new_lambda.abs().max(1.0);
        lambda = new_lambda;
        if converged_at.is_none() && change <= opts.tol {
            converged_at = Some(it);
        }
        if let Some(c) = converged_at {
            if residual <= 10.0 * opts.tol || it >= c + opts.polish_iter {
                let vector = x.swap_remove(0);
                return Ok(EigenPair { value: lambda, vector, iterations: it, residual, inner_iterations });
            }
        } else if it >= opts.max_iter {
            break;
        }
    }
    Err(SolveError::NonConvergence { iterations: opts.max_iter, residual, history: Vec::new() })
}

/// Extreme eigenvalue estimates of a symmetric positive definite matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremeEigs {
    pub min: f64,
    pub max: f64,
    pub max_iterations: usize,
    pub min_iterations: usize,
}

impl ExtremeEigs {
    pub fn condition_number(&self) -> f64 {
        self.max / self.min
    }
}

/// `λ_max` by power iteration and `λ_min` by inverse iteration with PCG inner
/// solves, both to relative Rayleigh-quotient change `tol`.
pub fn extreme_eigs(a: &CsrMatrix, tol: f64, max_iter: usize) -> Result<ExtremeEigs, SolveError> {
    let n = a.dim();
    if n == 0 {
        return Err(SolveError::Input("empty matrix"));
    }
    let start = |i: usize| 1.0 + 0.5 * libm::sin(1.0 + i as f64 * 0.7548776662);
    let mut x: Vec<f64> = (0..n).map(start).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut y = vec![0.0; n];
    let mut max = 0.0;
    let mut max_iterations = 0;
    for it in 1..=max_iter {
        a.matvec(&x, &mut y);
        let rq = dot(&x, &y);
        let ny = norm2(&y);
        if ny == 0.0 {
            break;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
        max_iterations = it;
        let done = it > 1 && (rq - max).abs() <= tol * rq.abs();
        max = rq;
        if done {
            break;
        }
    }
    let inner = PcgOptions { tol: 1e-10, max_iter: 50_000 };
    let mut x: Vec<f64> = (0..n).map(start).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut min = f64::INFINITY;
    let mut min_iterations = 0;
    let mut converged = false;
    for it in 1..=max_iter {
        let (z, _) = pcg(a, &x, None, &inner)?;
        // x = A z after normalization, so the Rayleigh quotient of z is xᵀz / zᵀz.
        let zz = dot(&z, &z);
        let rq = dot(&x, &z) / zz;
        let nz = libm::sqrt(zz);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi = zi / nz;
        }
        min_iterations = it;
        let done = it > 1 && (rq - min).abs() <= tol * rq.abs();
        min = rq;
        if done {
            converged = true;
            break;
        }
    }
    if !converged && n > 1 {
        return Err(SolveError::NonConvergence { iterations: min_iterations, residual: min, history: Vec::new() });
    }
    Ok(ExtremeEigs { min, max, max_iterations, min_iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 2.0;
            if i + 1 < n {
                d[i * n + i + 1] = -1.0;
                d[(i + 1) * n + i] = -1.0;
            }
        }
        CsrMatrix::from_dense(n, &d)
    }

    #[test]
    fn diagonal_system_in_one_step() {
        let a = CsrMatrix::diagonal_matrix(&[1.0, 2.0, 5.0]);
        let (x, r) = pcg(&a, &[1.0, 1.0, 1.0], None, &PcgOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((x[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn tridiagonal_solve() {
        let a = laplace_1d(50);
        let b = vec![1.0; 50];
        let (x, r) = pcg(&a, &b, None, &PcgOptions::default()).unwrap();
        assert!(r.final_residual <= 1e-10);
        // Exact solution x_i = (i+1)(n-i)/2.
        for (i, xi) in x.iter().enumerate() {
            let e = ((i + 1) * (50 - i)) as f64 / 2.0;
            assert!((xi - e).abs() < 1e-6 * e);
        }
    }

    #[test]
    fn indefinite_is_reported() {
        let a = CsrMatrix::from_dense(2, &[1.0, 2.0, 2.0, 1.0]);
        let err = pcg(&a, &[1.0, -1.0], None, &PcgOptions::default()).unwrap_err();
        assert!(matches!(err, SolveError::Indefinite { .. }));
    }

    #[test]
    fn iteration_cap_reports_history() {
        let a = laplace_1d(100);
        let opts = PcgOptions { tol: 1e-12, max_iter: 3 };
        match pcg(&a, &vec![1.0; 100], None, &opts).unwrap_err() {
            SolveError::NonConvergence { iterations, history, .. } => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 4);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn extreme_eigs_of_diagonal() {
        let d: Vec<f64> = (1..=20).map(f64::from).collect();
        let e = extreme_eigs(&CsrMatrix::diagonal_matrix(&d), 1e-10, 5000).unwrap();
        assert!((e.min - 1.0).abs() < 1e-6);
        assert!((e.max - 20.0).abs() < 1e-3);
    }

    #[test]
    fn generalized_smallest_pair() {
        let n = 40;
        let k = laplace_1d(n);
        let m = CsrMatrix::diagonal_matrix(&vec![2.0; n]);
        let pair = smallest_eigenpair(&k, &m, 0.0, &EigenOptions::default()).unwrap();
        let h = core::f64::consts::PI / (n + 1) as f64;
        let exact = (2.0 - 2.0 * libm::cos(h)) / 2.0;
        assert!((pair.value - exact).abs() < 1e-10 * exact.max(1.0));
        assert!(pair.residual <= 1e-9);
    }

    #[test]
    fn block_iteration_resolves_a_double_eigenvalue() {
        // Periodic 1D Laplacian: with constants removed, the lowest
        // eigenvalue 2 - 2cos(2π/n) is double.
        let n = 64;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 2.0;
            d[i * n + (i + 1) % n] -= 1.0;
            d[((i + 1) % n) * n + i] -= 1.0;
        }
        let k = CsrMatrix::from_dense(n, &d);
        let m = CsrMatrix::diagonal_matrix(&vec![1.0; n]);
        let opts = EigenOptions { block: 4, deflate: vec![vec![1.0; n]], ..Default::default() };
        let pair = smallest_eigenpair(&k, &m, 1e-3, &opts).unwrap();
        let exact = 2.0 - 2.0 * libm::cos(2.0 * core::f64::consts::PI / n as f64);
        assert!((pair.value - exact).abs() < 1e-10, "{}", pair.value);
        assert!(pair.residual <= 1e-9);
        assert!(pair.vector.iter().sum::<f64>().abs() < 1e-8);
    }
}
