//! Dense and banded linear algebra kernels shared by the solvers.
//!
//! Factorizations are delegated to LAPACK through `ndarray-linalg`; the
//! banded storage, banded Cholesky, GMRES, PCG and maxvol routines are
//! implemented here.

use ndarray::prelude::*;
use ndarray_linalg::{FactorizeC, FactorizeInto, JobSvd, SolveC, QRInto, SVDDCInto, UPLO};

use crate::error::{Error, Result};

/// Thin SVD, `a = u * diag(s) * vt` with `u: (m, k)`, `vt: (k, n)`, `k = min(m, n)`.
pub fn svd_thin(a: Array2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let (u, s, vt) = a
        .svddc_into(JobSvd::Some)
        .map_err(|e| Error::Linalg(format!("svd: {e}")))?;
    Ok((u.expect("left vectors requested"), s, vt.expect("right vectors requested")))
}

/// Thin QR, `a = q * r` with `q: (m, k)` orthonormal columns, `k = min(m, n)`.
pub fn qr_thin(a: Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    a.qr_into().map_err(|e| Error::Linalg(format!("qr: {e}")))
}

/// Smallest kept rank so the discarded singular-value tail satisfies
/// `sqrt(sum_{i>=r} s_i^2) <= abs_budget`. Always keeps at least one.
pub fn truncation_rank(s: &Array1<f64>, abs_budget: f64) -> usize {
    let k = s.len();
    if k == 0 {
        return 1;
    }
    let mut tail = 0.0;
    let budget2 = abs_budget * abs_budget;
    // walk from the smallest singular value
    let mut r = k;
    while r > 1 {
        let add = s[r - 1] * s[r - 1];
        if tail + add > budget2 {
            break;
        }
        tail += add;
        r -= 1;
    }
    r
}

/// Solve a symmetric positive definite dense system for one or more
/// right-hand sides. Falls back to LU when Cholesky breaks down.
pub fn solve_spd_multi(a: &Array2<f64>, rhs: &Array2<f64>) -> Result<Array2<f64>> {
    match a.factorizec(UPLO::Lower) {
        Ok(chol) => {
            let mut out = Array2::zeros(rhs.raw_dim());
            for (j, col) in rhs.columns().into_iter().enumerate() {
                let x = chol
                    .solvec(&col.to_owned())
                    .map_err(|e| Error::LocalSolve(format!("cholesky solve: {e}")))?;
                out.column_mut(j).assign(&x);
            }
            Ok(out)
        }
        Err(_) => {
            use ndarray_linalg::Solve;
            let lu = a
                .clone()
                .factorize_into()
                .map_err(|e| Error::LocalSolve(format!("lu: {e}")))?;
            let mut out = Array2::zeros(rhs.raw_dim());
            for (j, col) in rhs.columns().into_iter().enumerate() {
                let x = lu
                    .solve(&col.to_owned())
                    .map_err(|e| Error::LocalSolve(format!("lu solve: {e}")))?;
                out.column_mut(j).assign(&x);
            }
            Ok(out)
        }
    }
}

/// Solve `a x = b` for a single dense right-hand side, SPD path with LU fallback.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let rhs = b.view().insert_axis(Axis(1)).to_owned();
    let x = solve_spd_multi(a, &rhs)?;
    Ok(x.index_axis(Axis(1), 0).to_owned())
}

/// Solve `a x = b` by LU with partial pivoting (general square system).
pub fn solve_lu(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    use ndarray_linalg::Solve;
    let lu = a
        .clone()
        .factorize_into()
        .map_err(|e| Error::Linalg(format!("lu: {e}")))?;
    lu.solve(b).map_err(|e| Error::Linalg(format!("lu solve: {e}")))
}

/// Solve `a X = B` by LU for a matrix of right-hand sides.
pub fn solve_lu_multi(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    use ndarray_linalg::Solve;
    let lu = a
        .clone()
        .factorize_into()
        .map_err(|e| Error::Linalg(format!("lu: {e}")))?;
    let mut out = Array2::zeros(b.raw_dim());
    for (j, col) in b.columns().into_iter().enumerate() {
        let x = lu
            .solve(&col.to_owned())
            .map_err(|e| Error::Linalg(format!("lu solve: {e}")))?;
        out.column_mut(j).assign(&x);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Banded matrices
// ---------------------------------------------------------------------------

/// Square banded matrix of order `n` with scalar bandwidth `bw`
/// (entries with `|i - j| > bw` are zero). Row-major band storage:
/// `data[(i, bw + j - i)]` holds entry `(i, j)`.
#[derive(Debug, Clone)]
pub struct Banded {
    pub n: usize,
    pub bw: usize,
    pub data: Array2<f64>,
}

impl Banded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Banded { n, bw, data: Array2::zeros((n, 2 * bw + 1)) }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let off = j as isize - i as isize;
        if off.unsigned_abs() > self.bw {
            0.0
        } else {
            self.data[(i, (self.bw as isize + off) as usize)]
        }
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        let off = j as isize - i as isize;
        debug_assert!(off.unsigned_abs() <= self.bw, "entry outside band");
        self.data[(i, (self.bw as isize + off) as usize)] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let off = j as isize - i as isize;
        debug_assert!(off.unsigned_abs() <= self.bw);
        self.data[(i, (self.bw as isize + off) as usize)] = v;
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw + 1).min(self.n);
            for j in lo..hi {
                a[(i, j)] = self.get(i, j);
            }
        }
        a
    }

    pub fn from_dense(a: &Array2<f64>, bw: usize) -> Self {
        let n = a.nrows();
        let mut b = Banded::zeros(n, bw);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let hi = (i + bw + 1).min(n);
            for j in lo..hi {
                b.set(i, j, a[(i, j)]);
            }
        }
        b
    }

    pub fn transpose(&self) -> Self {
        let mut t = Banded::zeros(self.n, self.bw);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw + 1).min(self.n);
            for j in lo..hi {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `y += self * x` where `x`, `y` are `(n, c)` blocks of row vectors.
    pub fn apply_into(&self, x: ArrayView2<f64>, mut y: ArrayViewMut2<f64>) {
        debug_assert_eq!(x.nrows(), self.n);
        debug_assert_eq!(y.nrows(), self.n);
        let bw = self.bw as isize;
        for off in -bw..=bw {
            let col = (bw + off) as usize;
            let (i0, i1) = if off >= 0 {
                (0usize, self.n - off as usize)
            } else {
                ((-off) as usize, self.n)
            };
            for i in i0..i1 {
                let a = self.data[(i, col)];
                if a != 0.0 {
                    let j = (i as isize + off) as usize;
                    y.row_mut(i).scaled_add(a, &x.row(j));
                }
            }
        }
    }

    /// `y += self^T * x` on `(n, c)` blocks.
    pub fn apply_t_into(&self, x: ArrayView2<f64>, mut y: ArrayViewMut2<f64>) {
        let bw = self.bw as isize;
        for off in -bw..=bw {
            let col = (bw + off) as usize;
            let (i0, i1) = if off >= 0 {
                (0usize, self.n - off as usize)
            } else {
                ((-off) as usize, self.n)
            };
            for i in i0..i1 {
                let a = self.data[(i, col)];
                if a != 0.0 {
                    let j = (i as isize + off) as usize;
                    y.row_mut(j).scaled_add(a, &x.row(i));
                }
            }
        }
    }
}

/// Cholesky factor of an SPD banded matrix, kept in band storage.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// lower factor, `l[(i, bw + j - i)]` for `j in [i-bw, i]`
    l: Array2<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &Banded) -> Result<Self> {
        let n = a.n;
        let bw = a.bw;
        let mut l = Array2::zeros((n, bw + 1)); // l[(i, k)] = L(i, i - bw + k), diag at k = bw
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = a.get(j, j);
            let mut s = 0.0;
            for k in lo..j {
                let ljk = l[(j, bw - (j - k))];
                s += ljk * ljk;
            }
            d -= s;
            if d <= 0.0 {
                return Err(Error::Linalg(format!(
                    "banded cholesky breakdown at row {j}: pivot {d:.3e}"
                )));
            }
            let djj = d.sqrt();
            l[(j, bw)] = djj;
            let hi = (j + bw + 1).min(n);
            for i in j + 1..hi {
                let mut s = a.get(i, j);
                let lo2 = i.saturating_sub(bw).max(lo);
                for k in lo2..j {
                    s -= l[(i, bw - (i - k))] * l[(j, bw - (j - k))];
                }
                l[(i, bw - (i - j))] = s / djj;
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        // forward: L y = b
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = b[i];
            for k in lo..i {
                s -= self.l[(i, bw - (i - k))] * b[k];
            }
            b[i] = s / self.l[(i, bw)];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut s = b[i];
            for k in i + 1..hi {
                s -= self.l[(k, bw - (k - i))] * b[k];
            }
            b[i] = s / self.l[(i, bw)];
        }
    }
}

// ---------------------------------------------------------------------------
// Iterative solvers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { restart: 50, max_iter: 500, rel_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IterOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
    pub converged: bool,
    pub stagnated: bool,
}

/// Left-preconditioned restarted GMRES. `apply` computes `y = A x`,
/// `precond` applies `M^{-1}` in place. A restart cycle that fails to reduce
/// the preconditioned residual by a factor of ten marks the solve stagnated
/// and the current iterate is returned.
pub fn gmres(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    precond: &dyn Fn(&mut [f64]),
    b: &[f64],
    x0: &[f64],
    opts: &GmresOptions,
) -> (Vec<f64>, IterOutcome) {
    let n = b.len();
    let mut x = x0.to_vec();
    let mut out = IterOutcome::default();

    let mut mb = b.to_vec();
    precond(&mut mb);
    let b_norm = norm2(&mb);
    if b_norm == 0.0 {
        out.converged = true;
        return (vec![0.0; n], out);
    }

    let m = opts.restart.max(1).min(n);
    let mut work = vec![0.0; n];
    loop {
        // preconditioned residual
        apply(&x, &mut work);
        let mut r: Vec<f64> = b.iter().zip(&work).map(|(bi, wi)| bi - wi).collect();
        precond(&mut r);
        let r_norm = norm2(&r);
        let cycle_start = r_norm / b_norm;
        out.rel_residual = cycle_start;
        if cycle_start <= opts.rel_tol {
            out.converged = true;
            return (x, out);
        }
        if out.iterations >= opts.max_iter {
            return (x, out);
        }

        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        for ri in r.iter_mut() {
            *ri /= r_norm;
        }
        v.push(r);
        let mut h = vec![vec![0.0; m]; m + 1]; // h[i][j]
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = r_norm;

        let mut k_used = 0;
        for k in 0..m {
            if out.iterations >= opts.max_iter {
                break;
            }
            out.iterations += 1;
            apply(&v[k], &mut work);
            let mut w = work.clone();
            precond(&mut w);
            // modified Gram-Schmidt
            for j in 0..=k {
                let hjk = dot(&v[j], &w);
                h[j][k] = hjk;
                for (wi, vj) in w.iter_mut().zip(&v[j]) {
                    *wi -= hjk * vj;
                }
            }
            let wn = norm2(&w);
            h[k + 1][k] = wn;
            // apply accumulated Givens rotations
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let (c, s) = givens(h[k][k], h[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            h[k][k] = c * h[k][k] + s * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            k_used = k + 1;

            let rel = g[k + 1].abs() / b_norm;
            out.rel_residual = rel;
            if rel <= opts.rel_tol || wn < 1e-300 {
                break;
            }
            for wi in w.iter_mut() {
                *wi /= wn;
            }
            v.push(w);
        }

        // back-substitute the small triangular system
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vj) in x.iter_mut().zip(&v[j]) {
                *xi += yj * vj;
            }
        }

        if out.rel_residual <= opts.rel_tol {
            out.converged = true;
            return (x, out);
        }
        if out.iterations >= opts.max_iter {
            return (x, out);
        }
        // a restart cycle without a tenfold residual reduction is flagged,
        // but the iteration keeps going: slow progress still accumulates
        if k_used == m && out.rel_residual > 0.1 * cycle_start {
            out.stagnated = true;
            if out.rel_residual > 0.99 * cycle_start {
                // genuinely stuck
                return (x, out);
            }
        }
    }
}

/// Preconditioned conjugate gradients for SPD systems.
pub fn pcg(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    precond: &dyn Fn(&mut [f64]),
    b: &[f64],
    x0: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<f64>, IterOutcome) {
    let n = b.len();
    let mut x = x0.to_vec();
    let mut out = IterOutcome::default();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        out.converged = true;
        return (vec![0.0; n], out);
    }
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z = r.clone();
    precond(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        let rn = norm2(&r) / b_norm;
        out.rel_residual = rn;
        if rn <= rel_tol {
            out.converged = true;
            return (x, out);
        }
        out.iterations += 1;
        apply(&p, &mut ax);
        let pap = dot(&p, &ax);
        if pap <= 0.0 {
            // loss of positive definiteness in finite precision
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        z.copy_from_slice(&r);
        precond(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    out.rel_residual = norm2(&r) / b_norm;
    out.converged = out.rel_residual <= rel_tol;
    (x, out)
}

#[inline]
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else if a.abs() > b.abs() {
        let t = b / a;
        let c = 1.0 / (1.0 + t * t).sqrt();
        (c, t * c)
    } else {
        let t = a / b;
        let s = 1.0 / (1.0 + t * t).sqrt();
        (t * s, s)
    }
}

// ---------------------------------------------------------------------------
// maxvol
// ---------------------------------------------------------------------------

/// Quasi-maximum-volume row selection of a tall full-column-rank matrix.
/// Returns `r = ncols` row indices. Starts from LU partial pivoting and
/// iterates row swaps until no entry of `A inv(A[rows])` exceeds `1 + tol`.
pub fn maxvol(a: &Array2<f64>, tol: f64, max_iters: usize) -> Result<Vec<usize>> {
    let (m, r) = a.dim();
    if m < r {
        return Err(Error::InvalidArg(format!("maxvol: {m} rows < {r} cols")));
    }
    if m == r {
        return Ok((0..r).collect());
    }

    // initial rows from Gaussian elimination with partial pivoting
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..m).collect();
    for k in 0..r {
        let mut piv = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..m {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if piv != k {
            for j in 0..r {
                lu.swap((k, j), (piv, j));
            }
            perm.swap(k, piv);
        }
        let d = lu[(k, k)];
        if d.abs() < 1e-300 {
            continue;
        }
        for i in k + 1..m {
            let f = lu[(i, k)] / d;
            lu[(i, k)] = f;
            for j in k + 1..r {
                let s = lu[(k, j)];
                lu[(i, j)] -= f * s;
            }
        }
    }
    let mut rows: Vec<usize> = perm[..r].to_vec();

    // b = a * inv(a[rows]) via LU solve on the transposed system
    let sub = select_rows(a, &rows);
    use ndarray_linalg::Solve;
    let subt = sub.t().to_owned();
    let fact = subt
        .factorize_into()
        .map_err(|e| Error::Linalg(format!("maxvol lu: {e}")))?;
    let mut b = Array2::zeros((m, r));
    for i in 0..m {
        let rhs = a.row(i).to_owned();
        let sol = fact
            .solve(&rhs)
            .map_err(|e| Error::Linalg(format!("maxvol solve: {e}")))?;
        b.row_mut(i).assign(&sol);
    }

    for _ in 0..max_iters {
        let mut bi = 0;
        let mut bj = 0;
        let mut bv = 0.0;
        for i in 0..m {
            for j in 0..r {
                let v = b[(i, j)].abs();
                if v > bv {
                    bv = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        if bv <= 1.0 + tol {
            break;
        }
        // swap row bi into pivot slot bj, rank-1 update of b
        let piv = b[(bi, bj)];
        let old = rows[bj];
        rows[bj] = bi;
        let bcol: Vec<f64> = (0..m).map(|i| b[(i, bj)]).collect();
        let brow: Vec<f64> = (0..r).map(|j| b[(bi, j)]).collect();
        for i in 0..m {
            let ci = bcol[i] / piv;
            for j in 0..r {
                let mut upd = brow[j];
                if j == bj {
                    upd -= 1.0;
                }
                b[(i, j)] -= ci * upd;
            }
        }
        let _ = old;
    }
    Ok(rows)
}

pub fn select_rows(a: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let r = rows.len();
    let n = a.ncols();
    let mut out = Array2::zeros((r, n));
    for (k, &i) in rows.iter().enumerate() {
        out.row_mut(k).assign(&a.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn banded_cholesky_matches_dense_solve() {
        let n = 12;
        let bw = 2;
        let mut a = Banded::zeros(n, bw);
        for i in 0..n {
            a.set(i, i, 4.0 + i as f64 * 0.1);
            if i + 1 < n {
                a.set(i, i + 1, -1.0);
                a.set(i + 1, i, -1.0);
            }
            if i + 2 < n {
                a.set(i, i + 2, 0.3);
                a.set(i + 2, i, 0.3);
            }
        }
        let chol = BandedCholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut x = b.clone();
        chol.solve_in_place(&mut x);
        let xd = solve_spd(&a.to_dense(), &Array1::from_vec(b.clone())).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-12, "row {i}: {} vs {}", x[i], xd[i]);
        }
    }

    #[test]
    fn gmres_solves_small_system() {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut a = Array2::<f64>::eye(n) * 3.0;
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] += 0.3 * (rng.random::<f64>() - 0.5);
            }
        }
        let xstar: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let b = a.dot(&Array1::from_vec(xstar.clone()));
        let mut apply = |x: &[f64], y: &mut [f64]| {
            let xv = ArrayView1::from(x);
            let r = a.dot(&xv);
            y.copy_from_slice(r.as_slice().unwrap());
        };
        let ident = |_: &mut [f64]| {};
        let opts = GmresOptions { restart: 20, max_iter: 200, rel_tol: 1e-12 };
        let (x, out) = gmres(&mut apply, &ident, b.as_slice().unwrap(), &vec![0.0; n], &opts);
        assert!(out.converged, "gmres outcome: {out:?}");
        for i in 0..n {
            assert!((x[i] - xstar[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn pcg_solves_spd_system() {
        let n = 25;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = rng.random::<f64>() - 0.5;
            }
        }
        let a = m.t().dot(&m) + Array2::<f64>::eye(n) * (n as f64);
        let xstar: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let b = a.dot(&Array1::from_vec(xstar.clone()));
        let mut apply = |x: &[f64], y: &mut [f64]| {
            let r = a.dot(&ArrayView1::from(x));
            y.copy_from_slice(r.as_slice().unwrap());
        };
        let ident = |_: &mut [f64]| {};
        let (x, out) = pcg(&mut apply, &ident, b.as_slice().unwrap(), &vec![0.0; n], 1e-12, 500);
        assert!(out.converged);
        for i in 0..n {
            assert!((x[i] - xstar[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn maxvol_selects_dominant_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut a = Array2::<f64>::zeros((40, 5));
        for i in 0..40 {
            for j in 0..5 {
                a[(i, j)] = rng.random::<f64>() - 0.5;
            }
        }
        let rows = maxvol(&a, 0.01, 200).unwrap();
        assert_eq!(rows.len(), 5);
        // all entries of a * inv(a[rows]) bounded by 1 + tol
        let sub = select_rows(&a, &rows);
        let subt = sub.t().to_owned();
        use ndarray_linalg::Solve;
        let f = subt.factorize_into().unwrap();
        for i in 0..40 {
            let sol = f.solve(&a.row(i).to_owned()).unwrap();
            for v in sol.iter() {
                assert!(v.abs() <= 1.02, "coefficient {v}");
            }
        }
    }

    #[test]
    fn truncation_rank_keeps_tail_within_budget() {
        let s = Array1::from_vec(vec![10.0, 1.0, 0.1, 0.01]);
        assert_eq!(truncation_rank(&s, 0.0), 4);
        assert_eq!(truncation_rank(&s, 0.011), 3);
        assert_eq!(truncation_rank(&s, 0.2), 2);
        assert_eq!(truncation_rank(&s, 100.0), 1);
    }
}
