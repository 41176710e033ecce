//! Small dense and structured symmetric eigen-solvers.
//!
//! * cyclic Jacobi for the dense Hessians (n ≤ 64), falling back to
//!   `nalgebra`'s tridiagonalization + implicit QL above that;
//! * Sturm-sequence bisection for symmetric tridiagonal matrices (the radial
//!   and one-dimensional operators);
//! * banded Cholesky + shift-invert Lanczos for the two-dimensional grid
//!   operator, with deflation of known null vectors.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest dimension handled by the Jacobi sweep.
pub const JACOBI_MAX_DIM: usize = 64;

/// Eigenvalues (ascending) of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Eigenvalues (ascending) of a symmetric matrix.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() <= JACOBI_MAX_DIM {
        jacobi_eigenvalues(a)
    } else {
        let mut eig: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        eig
    }
}

/// Relative asymmetry `max|a_ij − a_ji| / max(‖A‖_max, tiny)`.
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Symmetric tridiagonal matrix: `diag[i]` and `off[i] = T[i, i+1]`.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        debug_assert_eq!(off.len() + 1, diag.len().max(1));
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly less than `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            let denom = if q.abs() < tiny { tiny.copysign(q) } else { q };
            let denom = if denom == 0.0 { tiny } else { denom };
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.len(), "eigenvalue index out of range");
        let (mut lo, mut hi) = self.gershgorin();
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        lo -= 1e-12 * span;
        hi += 1e-12 * span;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * (lo.abs().max(hi.abs())) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.off[i];
                m[(i + 1, i)] = self.off[i];
            }
        }
        m
    }
}

/// Symmetric sparse matrix stored as a band (lower part), row-major.
/// `band[i * (bw + 1) + d]` holds `A[i, i − d]`.
#[derive(Debug, Clone)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, band: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `v` to `A[i, j]` (and implicitly `A[j, i]`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        assert!(d <= self.bw, "entry outside band");
        self.band[i * (self.bw + 1) + d] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        if d > self.bw {
            0.0
        } else {
            self.band[i * (self.bw + 1) + d]
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let w = self.bw + 1;
        for i in 0..self.n {
            let row = &self.band[i * w..(i + 1) * w];
            y[i] += row[0] * x[i];
            for d in 1..=self.bw.min(i) {
                let a = row[d];
                if a != 0.0 {
                    y[i] += a * x[i - d];
                    y[i - d] += a * x[i];
                }
            }
        }
    }

    /// `A + s·diag(m)`.
    pub fn shifted(&self, s: f64, m: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            out.band[i * (self.bw + 1)] += s * m[i];
        }
        out
    }

    /// In-place banded Cholesky factorization `A = L Lᵀ`.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let w = self.bw + 1;
        let bw = self.bw;
        for i in 0..self.n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = self.band[i * w + (i - j)];
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= self.band[i * w + (i - k)] * self.band[j * w + (j - k)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::InvalidInput(format!(
                            "matrix is not positive definite (pivot {s:.3e} at row {i})"
                        )));
                    }
                    self.band[i * w] = s.sqrt();
                } else {
                    self.band[i * w + (i - j)] = s / self.band[j * w];
                }
            }
        }
        Ok(BandedCholesky { n: self.n, bw, band: self.band })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let mut s = x[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.band[i * w + (i - k)] * x[k];
            }
            x[i] = s / self.band[i * w];
        }
        for i in (0..self.n).rev() {
            let xi = x[i] / self.band[i * w];
            x[i] = xi;
            for k in i.saturating_sub(self.bw)..i {
                x[k] -= self.band[i * w + (i - k)] * xi;
            }
        }
    }
}

/// Outcome of [`smallest_generalized_eigenvalue`].
#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub eigenvalue: f64,
    pub eigenvector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn m_dot(m: &[f64], x: &[f64], y: &[f64]) -> f64 {
    m.iter().zip(x).zip(y).map(|((m, x), y)| m * x * y).sum()
}

/// Smallest eigenvalue of the pencil `K u = λ M u` (`K` symmetric positive
/// semidefinite banded, `M` positive diagonal) on the M-orthogonal complement
/// of `deflate`, by shift-invert Lanczos with full reorthogonalization.
///
/// `shift > 0` must make `K + shift·M` positive definite. The start vector
/// comes from a fixed seed, so results are reproducible.
pub fn smallest_generalized_eigenvalue(
    k: &BandedSym,
    m: &[f64],
    deflate: &[Vec<f64>],
    shift: f64,
    tol: f64,
) -> Result<LanczosResult> {
    let n = k.dim();
    let factor = k.shifted(shift, m).cholesky()?;
    // M-orthonormalize the deflation space.
    let mut basis_def: Vec<Vec<f64>> = Vec::new();
    for v in deflate {
        let mut v = v.clone();
        for b in &basis_def {
            let c = m_dot(m, &v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let nrm = m_dot(m, &v, &v).sqrt();
        if nrm > 0.0 {
            v.iter_mut().for_each(|x| *x /= nrm);
            basis_def.push(v);
        }
    }
    let project = |v: &mut Vec<f64>, basis: &[Vec<f64>]| {
        for b in basis {
            let c = m_dot(m, v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    project(&mut q, &basis_def);
    project(&mut q, &basis_def);
    let nrm = m_dot(m, &q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= nrm);

    let max_steps = (n - basis_def.len()).min(400);
    let mut qs: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last = (f64::NAN, f64::INFINITY);
    for step in 0..max_steps {
        let qj = &qs[step];
        let mut w: Vec<f64> = qj.iter().zip(m).map(|(x, m)| x * m).collect();
        factor.solve_in_place(&mut w);
        let alpha = m_dot(m, &w, qj);
        alphas.push(alpha);
        // Full reorthogonalization, twice.
        for _ in 0..2 {
            project(&mut w, &basis_def);
            project(&mut w, &qs);
        }
        let beta = m_dot(m, &w, &w).sqrt();

        // Ritz value (largest θ) and residual estimate every few steps.
        if step >= 4 && (step % 4 == 0 || beta < 1e-14) {
            let t = SymTridiagonal::new(alphas.clone(), betas.clone());
            let theta = t.eigenvalue(t.len() - 1);
            let y_last = last_component(&t, theta);
            let res = beta * y_last.abs();
            last = (theta, res);
            if res <= tol * theta.abs() || beta < 1e-14 {
                let vec = ritz_vector(&t, theta, &qs);
                return Ok(LanczosResult {
                    eigenvalue: 1.0 / theta - shift,
                    eigenvector: vec,
                    residual: res / (theta * theta),
                    iterations: step + 1,
                });
            }
        }
        if beta < 1e-300 {
            break;
        }
        betas.push(beta);
        w.iter_mut().for_each(|x| *x /= beta);
        qs.push(w);
    }
    if alphas.len() == n - basis_def.len() && !alphas.is_empty() {
        // Krylov space exhausted the whole complement: the Ritz value is exact.
        let t = SymTridiagonal::new(alphas.clone(), betas[..alphas.len() - 1].to_vec());
        let theta = t.eigenvalue(t.len() - 1);
        let vec = ritz_vector(&t, theta, &qs);
        return Ok(LanczosResult { eigenvalue: 1.0 / theta - shift, eigenvector: vec, residual: 0.0, iterations: alphas.len() });
    }
    Err(Error::MeshNotConverged(format!(
        "Lanczos did not converge in {max_steps} steps (θ = {:.6e}, residual {:.3e})",
        last.0, last.1
    )))
}

/// Eigenvector of a small tridiagonal matrix for eigenvalue `lambda` by
/// inverse iteration.
fn tridiagonal_eigenvector(t: &SymTridiagonal, lambda: f64) -> Vec<f64> {
    let n = t.len();
    if n == 1 {
        return vec![1.0];
    }
    let shift = lambda + 1e-10 * lambda.abs().max(1e-300);
    let mut v = vec![1.0; n];
    for _ in 0..3 {
        // Solve (T − shift) x = v with partial-pivot-free Thomas algorithm on a
        // slightly perturbed shift; adequate for well separated extreme eigenvalues.
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = t.diag[0] - shift;
        if denom == 0.0 {
            denom = 1e-300;
        }
        c[0] = t.off[0] / denom;
        d[0] = v[0] / denom;
        for i in 1..n {
            let mut den = t.diag[i] - shift - t.off[i - 1] * c[i - 1];
            if den == 0.0 {
                den = 1e-300;
            }
            if i + 1 < n {
                c[i] = t.off[i] / den;
            }
            d[i] = (v[i] - t.off[i - 1] * d[i - 1]) / den;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        v = x.iter().map(|x| x / nrm).collect();
    }
    v
}

fn last_component(t: &SymTridiagonal, theta: f64) -> f64 {
    let v = tridiagonal_eigenvector(t, theta);
    *v.last().expect("non-empty")
}

fn ritz_vector(t: &SymTridiagonal, theta: f64, qs: &[Vec<f64>]) -> Vec<f64> {
    let y = tridiagonal_eigenvector(t, theta);
    let n = qs[0].len();
    let mut out = vec![0.0; n];
    for (coef, q) in y.iter().zip(qs) {
        out.iter_mut().zip(q).for_each(|(o, q)| *o += coef * q);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 5, 12] {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
            let s = &a + a.transpose();
            let ours = jacobi_eigenvalues(&s);
            let mut theirs: Vec<f64> = s.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            theirs.sort_by(f64::total_cmp);
            for (x, y) in ours.iter().zip(&theirs) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn tridiagonal_bisection_matches_dense() {
        // Discrete Dirichlet Laplacian: eigenvalues 2 − 2cos(kπ/(n+1)).
        let n = 50;
        let t = SymTridiagonal::new(vec![2.0; n], vec![-1.0; n - 1]);
        for k in [0, 1, 10, 49] {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((t.eigenvalue(k) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn banded_cholesky_solves() {
        let n = 30;
        let mut a = BandedSym::zeros(n, 3);
        for i in 0..n {
            a.add(i, i, 10.0);
            if i >= 3 {
                a.add(i, i - 3, -1.0);
            }
            if i >= 1 {
                a.add(i, i - 1, 0.5);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let chol = a.clone().cholesky().unwrap();
        chol.solve_in_place(&mut b);
        for (x, y) in b.iter().zip(&x_true) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lanczos_path_graph_fiedler_value() {
        // Neumann path-graph Laplacian: eigenvalues 2 − 2cos(kπ/n).
        let n = 200;
        let mut k = BandedSym::zeros(n, 1);
        for i in 0..n - 1 {
            k.add(i, i, 1.0);
            k.add(i + 1, i + 1, 1.0);
            k.add(i + 1, i, -1.0);
        }
        let m = vec![1.0; n];
        let res = smallest_generalized_eigenvalue(&k, &m, &[vec![1.0; n]], 1e-3, 1e-12).unwrap();
        let exact = 2.0 - 2.0 * (std::f64::consts::PI / n as f64).cos();
        assert!((res.eigenvalue - exact).abs() < 1e-10 * exact.max(1.0), "{} vs {}", res.eigenvalue, exact);
    }
}
