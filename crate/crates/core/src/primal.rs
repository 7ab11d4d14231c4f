//! Primal problem: TT assembly of the reaction-diffusion operator and
//! right-hand side, and the alternating linear scheme that solves it.

use ndarray::prelude::*;
use ndarray_linalg::{FactorizeC, SolveC, UPLO};
use rand::Rng;

use crate::als_util::{grow_vec_interface_left, grow_vec_interface_right};
use crate::cross::CollocatedField;
use crate::error::{Error, Result};
use crate::fem::{assemble_1d_pair, BasisKind, BasisTable1D, CartesianGrid, QuadratureGrid};
use crate::linalg::{pcg, solve_spd, svd_thin};
use crate::tt::vector::Orthogonality;
use crate::tt::{diff_norm, TtMatrix, TtVector};

/// Assembled primal system `A u = b`.
#[derive(Debug, Clone)]
pub struct PrimalSystem {
    pub a: TtMatrix,
    pub b: TtVector,
    /// When set, mode boundary slices (first/last index per direction) are
    /// kept exactly zero through the sweep, matching the homogeneous
    /// Dirichlet convention of the assembly.
    pub dirichlet_boundary: bool,
}

impl PrimalSystem {
    pub fn new(a: TtMatrix, b: TtVector) -> Self {
        PrimalSystem { a, b, dirichlet_boundary: false }
    }

    pub fn with_dirichlet_boundary(a: TtMatrix, b: TtVector) -> Self {
        PrimalSystem { a, b, dirichlet_boundary: true }
    }
}

/// Laplace operator in TT matrix form with ranks (1, 2, ..., 2, 1):
/// first core [L, M], middle cores [[M, 0], [L, M]], last core [M; L].
pub fn assemble_laplace_tt(grid: &CartesianGrid) -> TtMatrix {
    let d = grid.dim();
    let pairs: Vec<(Array2<f64>, Array2<f64>)> =
        grid.axes().iter().map(assemble_1d_pair).collect();
    if d == 1 {
        let (l, _) = &pairs[0];
        let n = l.nrows();
        let core = l
            .clone()
            .into_shape_with_order((1, n, n, 1))
            .expect("reshape");
        return TtMatrix::new(vec![core]).expect("valid core");
    }
    let mut cores = Vec::with_capacity(d);
    for (k, (l, m)) in pairs.iter().enumerate() {
        let n = l.nrows();
        let core = if k == 0 {
            let mut c = Array4::zeros((1, n, n, 2));
            c.slice_mut(s![0, .., .., 0]).assign(l);
            c.slice_mut(s![0, .., .., 1]).assign(m);
            c
        } else if k == d - 1 {
            let mut c = Array4::zeros((2, n, n, 1));
            c.slice_mut(s![0, .., .., 0]).assign(m);
            c.slice_mut(s![1, .., .., 0]).assign(l);
            c
        } else {
            let mut c = Array4::zeros((2, n, n, 2));
            c.slice_mut(s![0, .., .., 0]).assign(m);
            c.slice_mut(s![1, .., .., 0]).assign(l);
            c.slice_mut(s![1, .., .., 1]).assign(m);
            c
        };
        cores.push(core);
    }
    TtMatrix::new(cores).expect("valid chain")
}

/// Variable-reaction part: the kappa^2-weighted mass matrix in TT matrix
/// form, one weighted 1D matrix per TT rank pair of the collocated field.
/// Rows and columns at mode boundaries are zero (the Laplace part carries
/// the Dirichlet completion).
pub fn assemble_reaction_tt(
    sigma: &CollocatedField,
    grid: &CartesianGrid,
    quad: &QuadratureGrid,
) -> Result<TtMatrix> {
    if sigma.values.dims() != quad.dims() {
        return Err(Error::GridMismatch("reaction field not on this quadrature grid".into()));
    }
    let d = grid.dim();
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let table = BasisTable1D::build(grid.axis(k), quad.axis(k), BasisKind::HatP1);
        let sc = sigma.values.core(k);
        let (r0, _, r1) = sc.dim();
        let np = grid.axis(k).n_points();
        let mut core = Array4::zeros((r0, np, np, r1));
        for a in 0..r0 {
            for b in 0..r1 {
                let coeff: Vec<f64> = sc.slice(s![a, .., b]).to_vec();
                let w = crate::fem::weighted_1d_banded(
                    &coeff,
                    &table,
                    &table,
                    quad.axis(k),
                    false,
                    false,
                )?;
                let mut dense = w.to_dense();
                for j in 0..np {
                    dense[(0, j)] = 0.0;
                    dense[(j, 0)] = 0.0;
                    dense[(np - 1, j)] = 0.0;
                    dense[(j, np - 1)] = 0.0;
                }
                core.slice_mut(s![a, .., .., b]).assign(&dense);
            }
        }
        cores.push(core);
    }
    TtMatrix::new(cores)
}

/// Load vector `(f, phi_i)` built core-by-core from the collocated f and
/// the quadrature weights; boundary entries are zero.
pub fn assemble_rhs_tt(
    f: &CollocatedField,
    grid: &CartesianGrid,
    quad: &QuadratureGrid,
) -> Result<TtVector> {
    if f.values.dims() != quad.dims() {
        return Err(Error::GridMismatch("load field not on this quadrature grid".into()));
    }
    let d = grid.dim();
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let table = BasisTable1D::build(grid.axis(k), quad.axis(k), BasisKind::HatP1);
        let fc = f.values.core(k);
        let (r0, mn, r1) = fc.dim();
        let np = grid.axis(k).n_points();
        let w = &quad.axis(k).weights;
        // scaled = diag(w) * f-core unfolded as (mn, r0*r1)
        let fp = fc.view().permuted_axes([1, 0, 2]);
        let mut scaled = fp.as_standard_layout().to_owned();
        {
            let mut sm = scaled.view_mut().into_shape_with_order((mn, r0 * r1)).expect("reshape");
            for (l, mut row) in sm.rows_mut().into_iter().enumerate() {
                row.mapv_inplace(|v| v * w[l]);
            }
        }
        let sm = scaled.into_shape_with_order((mn, r0 * r1)).expect("reshape");
        let vals = table.values.dot(&sm); // (np, r0*r1)
        let vals = vals.into_shape_with_order((np, r0, r1)).expect("reshape");
        let mut core = vals.permuted_axes([1, 0, 2]).as_standard_layout().to_owned();
        core.slice_mut(s![.., 0, ..]).fill(0.0);
        core.slice_mut(s![.., np - 1, ..]).fill(0.0);
        cores.push(core);
    }
    TtVector::new(cores)
}

/// Zero the first/last mode slice of every core, so every entry with a
/// boundary index vanishes.
pub fn zero_boundary_modes(x: &mut TtVector) {
    for core in x.cores.iter_mut() {
        let n = core.dim().1;
        core.slice_mut(s![.., 0, ..]).fill(0.0);
        core.slice_mut(s![.., n - 1, ..]).fill(0.0);
    }
    x.orth = Orthogonality::None;
}

/// Deterministic random initial guess for the primal solve.
pub fn initial_guess<R: Rng>(dims: &[usize], rank: usize, dirichlet: bool, rng: &mut R) -> Result<TtVector> {
    let mut x = TtVector::random_rank(dims, rank, rng)?;
    if dirichlet {
        zero_boundary_modes(&mut x);
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct AlsOptions {
    pub max_sweeps: usize,
    pub kickrank: usize,
    pub max_rank: usize,
    /// Rounding applied to the iterate after each sweep; `None` keeps the
    /// ranks produced by the sweep.
    pub round_tol: Option<f64>,
    /// Relative tolerance of the inner CG solver as a fraction of delta_p.
    pub inner_tol_factor: f64,
    /// Local systems up to this size are solved by dense Cholesky.
    pub dense_threshold: usize,
    pub cg_max_iter: usize,
    /// Record the quadratic energy functional after every local solve.
    pub track_energy: bool,
}

impl Default for AlsOptions {
    fn default() -> Self {
        AlsOptions {
            max_sweeps: 50,
            kickrank: 3,
            max_rank: 60,
            round_tol: None,
            inner_tol_factor: 0.1,
            dense_threshold: 2000,
            cg_max_iter: 600,
            track_energy: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LocalSolveStats {
    pub dense_solves: usize,
    pub iterative_solves: usize,
    pub iterative_iterations: usize,
    pub iterative_failures: usize,
}

#[derive(Debug, Clone, Default)]
pub struct AlsReport {
    pub sweeps: usize,
    pub solution_change: Vec<f64>,
    pub final_max_rank: usize,
    pub converged: bool,
    pub local_stats: LocalSolveStats,
    pub wall_time: f64,
    pub energy_trace: Vec<f64>,
}

/// Quadratic energy functional `1/2 x^T A x - b^T x`, evaluated exactly in TT.
pub fn energy_value(system: &PrimalSystem, x: &TtVector) -> Result<f64> {
    let ax = system.a.matvec(x)?;
    Ok(0.5 * x.dot(&ax)? - system.b.dot(x)?)
}

/// Alternating linear scheme for `A u = b` (Galerkin projection on the TT
/// frame, one core at a time), with optional residual-projection rank
/// enrichment. Sweeps run k = 1..d..1 and stop when the relative change
/// of the iterate drops below `delta_p`.
pub fn als_solve(
    system: &PrimalSystem,
    x0: &TtVector,
    delta_p: f64,
    opts: &AlsOptions,
) -> Result<(TtVector, AlsReport)> {
    if !(delta_p > 0.0) {
        return Err(Error::InvalidArg("delta_p must be positive".into()));
    }
    let start = std::time::Instant::now();
    let a = &system.a;
    let b = &system.b;
    let dims = b.dims();
    if a.col_dims() != dims || a.row_dims() != dims {
        return Err(Error::ModeMismatch("system operator/rhs mode sizes differ".into()));
    }
    if x0.dims() != dims {
        return Err(Error::ModeMismatch("initial guess mode sizes differ".into()));
    }
    let d = dims.len();
    let mut report = AlsReport::default();

    let mut x = x0.clone();
    x.right_orthogonalize()?;
    if system.dirichlet_boundary {
        // re-impose exact zeros (orthogonalization keeps them only up to
        // rank deficiency of the factors)
        for k in 0..d {
            let n = x.cores[k].dim().1;
            x.cores[k].slice_mut(s![.., 0, ..]).fill(0.0);
            x.cores[k].slice_mut(s![.., n - 1, ..]).fill(0.0);
        }
    }

    // interface stacks
    let mut left: Vec<Array3<f64>> = vec![Array3::ones((1, 1, 1)); d + 1];
    let mut right: Vec<Array3<f64>> = vec![Array3::ones((1, 1, 1)); d + 1];
    let mut bleft: Vec<Array2<f64>> = vec![Array2::ones((1, 1)); d + 1];
    let mut bright: Vec<Array2<f64>> = vec![Array2::ones((1, 1)); d + 1];
    for k in (1..d).rev() {
        right[k] = grow_interface_right(&right[k + 1], &x.cores[k], a.core(k), &x.cores[k]);
        bright[k] = grow_vec_interface_right(&bright[k + 1], &x.cores[k], b.core(k));
    }

    let mut prev: Option<TtVector> = None;
    for sweep in 0..opts.max_sweeps {
        // forward half sweep with enrichment
        for k in 0..d {
            solve_local(system, &mut x, k, &left, &right, &bleft, &bright, delta_p, opts, &mut report)?;
            if opts.track_energy {
                report.energy_trace.push(energy_value(system, &x)?);
            }
            if k + 1 < d {
                if opts.kickrank > 0 {
                    enrich_core(&mut x, k, a, b, &left[k], &bleft[k], opts, system.dirichlet_boundary)?;
                }
                orthogonalize_step_left(&mut x, k)?;
                if system.dirichlet_boundary {
                    zero_core_boundary(&mut x, k);
                    zero_core_boundary(&mut x, k + 1);
                }
                left[k + 1] = grow_interface_left(&left[k], &x.cores[k], a.core(k), &x.cores[k]);
                bleft[k + 1] = grow_vec_interface_left(&bleft[k], &x.cores[k], b.core(k));
            }
        }
        // backward half sweep
        for k in (0..d).rev() {
            solve_local(system, &mut x, k, &left, &right, &bleft, &bright, delta_p, opts, &mut report)?;
            if opts.track_energy {
                report.energy_trace.push(energy_value(system, &x)?);
            }
            if k > 0 {
                orthogonalize_step_right(&mut x, k)?;
                if system.dirichlet_boundary {
                    zero_core_boundary(&mut x, k);
                    zero_core_boundary(&mut x, k - 1);
                }
                right[k] = grow_interface_right(&right[k + 1], &x.cores[k], a.core(k), &x.cores[k]);
                bright[k] = grow_vec_interface_right(&bright[k + 1], &x.cores[k], b.core(k));
            }
        }
        report.sweeps = sweep + 1;

        // optional rounding of the iterate
        if let Some(rt) = opts.round_tol {
            x = x.round(rt)?;
            x.right_orthogonalize()?;
            if system.dirichlet_boundary {
                for k in 0..d {
                    let n = x.cores[k].dim().1;
                    x.cores[k].slice_mut(s![.., 0, ..]).fill(0.0);
                    x.cores[k].slice_mut(s![.., n - 1, ..]).fill(0.0);
                }
            }
            for k in (1..d).rev() {
                right[k] = grow_interface_right(&right[k + 1], &x.cores[k], a.core(k), &x.cores[k]);
                bright[k] = grow_vec_interface_right(&bright[k + 1], &x.cores[k], b.core(k));
            }
        }

        let xn = x.norm();
        let change = match &prev {
            Some(p) => {
                if xn > 0.0 {
                    diff_norm(&x, p)? / xn
                } else {
                    0.0
                }
            }
            None => f64::INFINITY,
        };
        report.solution_change.push(change);
        prev = Some(x.clone());
        if change <= delta_p {
            report.converged = true;
            break;
        }
    }

    report.final_max_rank = x.max_rank();
    report.wall_time = start.elapsed().as_secs_f64();
    x.orth = Orthogonality::None;
    Ok((x, report))
}

fn zero_core_boundary(x: &mut TtVector, k: usize) {
    let n = x.cores[k].dim().1;
    x.cores[k].slice_mut(s![.., 0, ..]).fill(0.0);
    x.cores[k].slice_mut(s![.., n - 1, ..]).fill(0.0);
}

fn orthogonalize_step_left(x: &mut TtVector, k: usize) -> Result<()> {
    crate::tt::block::left_step(&mut x.cores, k)
}

fn orthogonalize_step_right(x: &mut TtVector, k: usize) -> Result<()> {
    crate::tt::block::right_step(&mut x.cores, k)
}

/// left'(a1r, b1, a1c) from left(a0r, b0, a0c) and the new cores.
fn grow_interface_left(
    left: &Array3<f64>,
    xr: &Array3<f64>,
    ac: &Array4<f64>,
    xc: &Array3<f64>,
) -> Array3<f64> {
    let (a0r, b0, a0c) = left.dim();
    let (_, n, a1r) = xr.dim();
    let (_, _, nj, b1) = ac.dim();
    let (_, _, a1c) = xc.dim();
    // t1(i, a1r, b0, a0c) = sum_{a0r} xr(a0r, i, a1r) left(a0r, b0, a0c)
    let xm = xr.view().into_shape_with_order((a0r, n * a1r)).expect("reshape");
    let lm = left.view().into_shape_with_order((a0r, b0 * a0c)).expect("reshape");
    let t1 = xm.t().dot(&lm); // (n*a1r, b0*a0c)
    // t2(j, b1, a1r, a0c) = sum_{b0, i} ac(b0, i, j, b1) t1(i, a1r, b0, a0c)
    let t1 = t1.into_shape_with_order((n, a1r, b0, a0c)).expect("reshape");
    let t1 = t1.permuted_axes([2, 0, 1, 3]); // (b0, i, a1r, a0c)
    let t1 = t1.as_standard_layout().to_owned();
    let t1m = t1.into_shape_with_order((b0 * n, a1r * a0c)).expect("reshape");
    let ap = ac.view().permuted_axes([2, 3, 0, 1]); // (j, b1, b0, i)
    let ap = ap.as_standard_layout().to_owned();
    let am = ap.into_shape_with_order((nj * b1, b0 * n)).expect("reshape");
    let t2 = am.dot(&t1m); // (j*b1, a1r*a0c)
    // out(a1r, b1, a1c) = sum_{a0c, j} xc(a0c, j, a1c) t2(j, b1, a1r, a0c)
    let t2 = t2.into_shape_with_order((nj, b1, a1r, a0c)).expect("reshape");
    let t2 = t2.permuted_axes([3, 0, 1, 2]); // (a0c, j, b1, a1r)
    let t2 = t2.as_standard_layout().to_owned();
    let t2m = t2.into_shape_with_order((a0c * nj, b1 * a1r)).expect("reshape");
    let xcm = xc.view().into_shape_with_order((a0c * nj, a1c)).expect("reshape");
    let out = xcm.t().dot(&t2m); // (a1c, b1*a1r)
    let out = out.into_shape_with_order((a1c, b1, a1r)).expect("reshape");
    out.permuted_axes([2, 1, 0]).as_standard_layout().to_owned()
}

/// right'(a0r, b0, a0c) from right(a1r, b1, a1c) and the cores at k.
fn grow_interface_right(
    right: &Array3<f64>,
    xr: &Array3<f64>,
    ac: &Array4<f64>,
    xc: &Array3<f64>,
) -> Array3<f64> {
    let (a1r, b1, a1c) = right.dim();
    let (a0r, n, _) = xr.dim();
    let (b0, _, nj, _) = ac.dim();
    let (a0c, _, _) = xc.dim();
    // t1(a0r, i, b1, a1c) = sum_{a1r} xr(a0r, i, a1r) right(a1r, b1, a1c)
    let xm = xr.view().into_shape_with_order((a0r * n, a1r)).expect("reshape");
    let rm = right.view().into_shape_with_order((a1r, b1 * a1c)).expect("reshape");
    let t1 = xm.dot(&rm); // (a0r*n, b1*a1c)
    // t2(b0, j, a0r, a1c) = sum_{i, b1} ac(b0, i, j, b1) t1(a0r, i, b1, a1c)
    let t1 = t1.into_shape_with_order((a0r, n, b1, a1c)).expect("reshape");
    let t1 = t1.permuted_axes([1, 2, 0, 3]); // (i, b1, a0r, a1c)
    let t1 = t1.as_standard_layout().to_owned();
    let t1m = t1.into_shape_with_order((n * b1, a0r * a1c)).expect("reshape");
    let ap = ac.view().permuted_axes([0, 2, 1, 3]); // (b0, j, i, b1)
    let ap = ap.as_standard_layout().to_owned();
    let am = ap.into_shape_with_order((b0 * nj, n * b1)).expect("reshape");
    let t2 = am.dot(&t1m); // (b0*j, a0r*a1c)
    // out(a0r, b0, a0c) = sum_{j, a1c} xc(a0c, j, a1c) t2(b0, j, a0r, a1c)
    let t2 = t2.into_shape_with_order((b0, nj, a0r, a1c)).expect("reshape");
    let t2 = t2.permuted_axes([2, 0, 1, 3]); // (a0r, b0, j, a1c)
    let t2 = t2.as_standard_layout().to_owned();
    let t2m = t2.into_shape_with_order((a0r * b0, nj * a1c)).expect("reshape");
    let xp = xc.view().permuted_axes([1, 2, 0]); // (j, a1c, a0c)
    let xp = xp.as_standard_layout().to_owned();
    let xm2 = xp.into_shape_with_order((nj * a1c, a0c)).expect("reshape");
    let out = t2m.dot(&xm2); // (a0r*b0, a0c)
    out.into_shape_with_order((a0r, b0, a0c)).expect("reshape")
}

/// Assemble and solve the reduced system at core `k`, writing the solution
/// into the core.
#[allow(clippy::too_many_arguments)]
fn solve_local(
    system: &PrimalSystem,
    x: &mut TtVector,
    k: usize,
    left: &[Array3<f64>],
    right: &[Array3<f64>],
    bleft: &[Array2<f64>],
    bright: &[Array2<f64>],
    delta_p: f64,
    opts: &AlsOptions,
    report: &mut AlsReport,
) -> Result<()> {
    let a = &system.a;
    let lk = &left[k];
    let rk = &right[k + 1];
    let ac = a.core(k);
    let (r0, _, _) = lk.dim();
    let (r1, _, _) = rk.dim();
    let n = ac.dim().1;
    let size = r0 * n * r1;

    // reduced right-hand side
    let rhs = local_rhs(&bleft[k], system.b.core(k), &bright[k + 1]);

    let sol = if size <= opts.dense_threshold {
        report.local_stats.dense_solves += 1;
        let h = dense_local_matrix(lk, ac, rk);
        let rhs1 = rhs.view().into_shape_with_order(size).expect("reshape").to_owned();
        solve_spd(&h, &rhs1)?
    } else {
        report.local_stats.iterative_solves += 1;
        let pre = RankBlockPrecond::build(lk, ac, rk)?;
        let apply_ctx = LocalApply::new(lk, ac, rk);
        let mut apply = |v: &[f64], out: &mut [f64]| apply_ctx.apply(v, out);
        let precond = |v: &mut [f64]| pre.apply(v);
        let rhs1 = rhs.view().into_shape_with_order(size).expect("reshape");
        let x0 = x.cores[k]
            .view()
            .into_shape_with_order(size)
            .expect("reshape")
            .to_vec();
        let (sol, out) = pcg(
            &mut apply,
            &precond,
            rhs1.as_slice().expect("contiguous"),
            &x0,
            opts.inner_tol_factor * delta_p,
            opts.cg_max_iter,
        );
        report.local_stats.iterative_iterations += out.iterations;
        if !out.converged {
            report.local_stats.iterative_failures += 1;
        }
        Array1::from_vec(sol)
    };
    x.cores[k] = sol.into_shape_with_order((r0, n, r1)).expect("reshape");
    if system.dirichlet_boundary {
        zero_core_boundary(x, k);
    }
    Ok(())
}

fn local_rhs(bl: &Array2<f64>, bc: &Array3<f64>, br: &Array2<f64>) -> Array3<f64> {
    let (a0, g0) = bl.dim();
    let (_, n, g1) = bc.dim();
    let (a1, _) = br.dim();
    let bm = bc.view().into_shape_with_order((g0, n * g1)).expect("reshape");
    let t = bl.dot(&bm); // (a0, n*g1)
    let t = t.into_shape_with_order((a0 * n, g1)).expect("reshape");
    let out = t.dot(&br.t()); // (a0*n, a1)
    out.into_shape_with_order((a0, n, a1)).expect("reshape")
}

/// Dense reduced matrix `H[(a0 i a1), (c0 j c1)]`.
fn dense_local_matrix(lk: &Array3<f64>, ac: &Array4<f64>, rk: &Array3<f64>) -> Array2<f64> {
    let (r0, bb0, c0) = lk.dim();
    let (_, n, nj, bb1) = ac.dim();
    let (r1, _, c1) = rk.dim();
    let size_r = r0 * n * r1;
    let size_c = c0 * nj * c1;
    let mut h = Array2::zeros((size_r, size_c));
    for b0 in 0..bb0 {
        for b1 in 0..bb1 {
            let asl = ac.slice(s![b0, .., .., b1]);
            for a0 in 0..r0 {
                for cc0 in 0..c0 {
                    let lw = lk[(a0, b0, cc0)];
                    if lw == 0.0 {
                        continue;
                    }
                    for a1 in 0..r1 {
                        for cc1 in 0..c1 {
                            let w = lw * rk[(a1, b1, cc1)];
                            if w == 0.0 {
                                continue;
                            }
                            for i in 0..n {
                                let ri = (a0 * n + i) * r1 + a1;
                                for j in 0..nj {
                                    let v = asl[(i, j)];
                                    if v != 0.0 {
                                        h[(ri, (cc0 * nj + j) * c1 + cc1)] += w * v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    h
}

/// Matrix-free application of the reduced operator.
struct LocalApply {
    lp: Array2<f64>,     // (a0, b0*c0)
    rp: Array2<f64>,     // (c1, b1*a1)
    am: Array2<f64>,     // (b0*i, j*b1)
    dims: (usize, usize, usize, usize, usize, usize, usize),
}

impl LocalApply {
    fn new(lk: &Array3<f64>, ac: &Array4<f64>, rk: &Array3<f64>) -> Self {
        let (r0, b0, c0) = lk.dim();
        let (_, n, nj, b1) = ac.dim();
        let (r1, _, c1) = rk.dim();
        let lp = lk
            .view()
            .into_shape_with_order((r0, b0 * c0))
            .expect("reshape")
            .to_owned();
        let rp = rk
            .view()
            .permuted_axes([2, 1, 0]) // (c1, b1, a1)
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((c1, b1 * r1))
            .expect("reshape");
        let am = ac
            .view()
            .permuted_axes([0, 1, 2, 3])
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((b0 * n, nj * b1))
            .expect("reshape");
        LocalApply { lp, rp, am, dims: (r0, n, r1, b0, b1, c0.min(r0), c1.min(r1)) }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let (r0, n, r1, b0, b1, c0, c1) = self.dims;
        let nj = n;
        let x = ArrayView2::from_shape((c0 * nj, c1), v).expect("shape");
        // t1(c0*j, b1*a1)
        let t1 = x.dot(&self.rp);
        // rearrange to (j*b1, c0*a1)
        let t1 = t1.into_shape_with_order((c0, nj, b1, r1)).expect("reshape");
        let t1 = t1.permuted_axes([1, 2, 0, 3]).as_standard_layout().to_owned();
        let t1m = t1.into_shape_with_order((nj * b1, c0 * r1)).expect("reshape");
        // t2(b0*i, c0*a1)
        let t2 = self.am.dot(&t1m);
        // rearrange to (b0*c0, i*a1)
        let t2 = t2.into_shape_with_order((b0, n, c0, r1)).expect("reshape");
        let t2 = t2.permuted_axes([0, 2, 1, 3]).as_standard_layout().to_owned();
        let t2m = t2.into_shape_with_order((b0 * c0, n * r1)).expect("reshape");
        let y = self.lp.dot(&t2m); // (a0, i*a1)
        out.copy_from_slice(y.as_slice().expect("contiguous"));
        let _ = r0;
    }
}

/// Block-Jacobi preconditioner over the rank-index pairs: one dense
/// Cholesky factor of the (i, j) slice per (a0, a1).
struct RankBlockPrecond {
    factors: Vec<ndarray_linalg::CholeskyFactorized<ndarray::OwnedRepr<f64>>>,
    r0: usize,
    n: usize,
    r1: usize,
}

impl RankBlockPrecond {
    fn build(lk: &Array3<f64>, ac: &Array4<f64>, rk: &Array3<f64>) -> Result<Self> {
        let (r0, b0, _) = lk.dim();
        let (_, n, nj, b1) = ac.dim();
        let (r1, _, _) = rk.dim();
        let mut factors = Vec::with_capacity(r0 * r1);
        for a0 in 0..r0 {
            for a1 in 0..r1 {
                let mut p = Array2::zeros((n, nj));
                for bb0 in 0..b0 {
                    let lw = lk[(a0, bb0, a0)];
                    if lw == 0.0 {
                        continue;
                    }
                    for bb1 in 0..b1 {
                        let w = lw * rk[(a1, bb1, a1)];
                        if w == 0.0 {
                            continue;
                        }
                        p.scaled_add(w, &ac.slice(s![bb0, .., .., bb1]));
                    }
                }
                let f = p
                    .factorizec(UPLO::Lower)
                    .map_err(|e| Error::LocalSolve(format!("preconditioner block ({a0},{a1}): {e}")))?;
                factors.push(f);
            }
        }
        Ok(RankBlockPrecond { factors, r0, n, r1 })
    }

    fn apply(&self, v: &mut [f64]) {
        let (r0, n, r1) = (self.r0, self.n, self.r1);
        let mut slice = Array1::zeros(n);
        for a0 in 0..r0 {
            for a1 in 0..r1 {
                for i in 0..n {
                    slice[i] = v[(a0 * n + i) * r1 + a1];
                }
                let sol = self.factors[a0 * r1 + a1].solvec(&slice).expect("precond solve");
                for i in 0..n {
                    v[(a0 * n + i) * r1 + a1] = sol[i];
                }
            }
        }
    }
}

/// Residual-projection enrichment: append up to `kickrank` directions of
/// the half-projected residual to core `k` and pad the next core.
#[allow(clippy::too_many_arguments)]
fn enrich_core(
    x: &mut TtVector,
    k: usize,
    a: &TtMatrix,
    b: &TtVector,
    lk: &Array3<f64>,
    blk: &Array2<f64>,
    opts: &AlsOptions,
    dirichlet: bool,
) -> Result<()> {
    let (r0, n, r1) = x.cores[k].dim();
    // with Dirichlet zeros the reshaped core has 2*r0 zero rows, so its
    // column rank cannot exceed r0*(n-2)
    let feasible = if dirichlet { r0 * n.saturating_sub(2) } else { r0 * n };
    let kick = opts
        .kickrank
        .min(opts.max_rank.saturating_sub(r1))
        .min(feasible.saturating_sub(r1));
    if kick == 0 {
        return Ok(());
    }
    let ac = a.core(k);
    let bc = b.core(k);
    let (_, _, nj, b1) = ac.dim();
    let (_, _, g1) = bc.dim();
    let (_, bb0, c0) = lk.dim();

    // zb(a0, i, g1) = sum_{g0} blk(a0, g0) bc(g0, i, g1)
    let bm = bc.view().into_shape_with_order((bc.dim().0, n * g1)).expect("reshape");
    let zb = blk.dot(&bm); // (a0=r0, n*g1)

    // za(a0, i, b1*c1) = sum_{b0, c0, j} lk(a0, b0, c0) ac(b0, i, j, b1) xc(c0, j, c1)
    let xc = &x.cores[k];
    let c1 = xc.dim().2;
    let xp = xc.view().permuted_axes([1, 0, 2]).as_standard_layout().to_owned(); // (j, c0, c1)
    let xm = xp.into_shape_with_order((nj, c0 * c1)).expect("reshape");
    let ap = ac.view().permuted_axes([0, 1, 3, 2]).as_standard_layout().to_owned(); // (b0, i, b1, j)
    let am = ap.into_shape_with_order((bb0 * n * b1, nj)).expect("reshape");
    let t = am.dot(&xm); // (b0*i*b1, c0*c1)
    let t = t.into_shape_with_order((bb0, n, b1, c0, c1)).expect("reshape");
    let t = t.permuted_axes([0, 3, 1, 2, 4]).as_standard_layout().to_owned(); // (b0, c0, i, b1, c1)
    let tm = t.into_shape_with_order((bb0 * c0, n * b1 * c1)).expect("reshape");
    let lm = lk.view().into_shape_with_order((r0, bb0 * c0)).expect("reshape");
    let za = lm.dot(&tm); // (r0, i*b1*c1)

    // stack [zb | -za] over the trailing index and keep the leading
    // singular directions
    let cols = g1 + b1 * c1;
    let mut z = Array2::zeros((r0 * n, cols));
    {
        let zb3 = zb.into_shape_with_order((r0, n, g1)).expect("reshape");
        let za3 = za.into_shape_with_order((r0, n, b1 * c1)).expect("reshape");
        for a0 in 0..r0 {
            for i in 0..n {
                for g in 0..g1 {
                    z[(a0 * n + i, g)] = zb3[(a0, i, g)];
                }
                for c in 0..b1 * c1 {
                    z[(a0 * n + i, g1 + c)] = -za3[(a0, i, c)];
                }
            }
        }
    }
    let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if znorm == 0.0 {
        return Ok(());
    }
    let (u, sv, _) = svd_thin(z)?;
    // keep only numerically significant directions so exact structural
    // zeros (boundary rows) survive in the singular vectors
    let numerical_rank = sv.iter().take_while(|&&s| s > 1e-14 * sv[0]).count();
    let kick = kick.min(numerical_rank);
    if kick == 0 {
        return Ok(());
    }
    let zk = u.slice(s![.., ..kick]);

    // enlarge the core and pad the next one with zero rows
    let mut core = Array3::zeros((r0, n, r1 + kick));
    core.slice_mut(s![.., .., ..r1]).assign(&x.cores[k]);
    for a0 in 0..r0 {
        for i in 0..n {
            for c in 0..kick {
                core[(a0, i, r1 + c)] = zk[(a0 * n + i, c)];
            }
        }
    }
    x.cores[k] = core;
    let (_, n1, r2) = x.cores[k + 1].dim();
    let mut next = Array3::zeros((r1 + kick, n1, r2));
    next.slice_mut(s![..r1, .., ..]).assign(&x.cores[k + 1]);
    x.cores[k + 1] = next;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cross::CollocatedField;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_grid(d: usize, n: usize) -> (CartesianGrid, QuadratureGrid) {
        let grid = CartesianGrid::uniform(&vec![(0.0, 1.0); d], n).unwrap();
        let quad = QuadratureGrid::new(&grid, 4).unwrap();
        (grid, quad)
    }

    #[test]
    fn laplace_matches_kronecker_sum_at_d2() {
        let (grid, _) = unit_grid(2, 4);
        let a = assemble_laplace_tt(&grid);
        let full = a.full().unwrap();
        let (l, m) = assemble_1d_pair(grid.axis(0));
        let kron = |x: &Array2<f64>, y: &Array2<f64>| {
            let (xm, xn) = x.dim();
            let (ym, yn) = y.dim();
            let mut out = Array2::zeros((xm * ym, xn * yn));
            for i in 0..xm {
                for j in 0..xn {
                    for p in 0..ym {
                        for q in 0..yn {
                            out[(i * ym + p, j * yn + q)] = x[(i, j)] * y[(p, q)];
                        }
                    }
                }
            }
            out
        };
        let expect = &kron(&l, &m) + &kron(&m, &l);
        for i in 0..full.nrows() {
            for j in 0..full.ncols() {
                assert!(
                    (full[(i, j)] - expect[(i, j)]).abs() < 1e-13,
                    "({i},{j}): {} vs {}",
                    full[(i, j)],
                    expect[(i, j)]
                );
            }
        }
        // symmetry
        for i in 0..full.nrows() {
            for j in 0..full.ncols() {
                assert!((full[(i, j)] - full[(j, i)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn laplace_ranks_are_two_inside() {
        let (grid, _) = unit_grid(3, 4);
        let a = assemble_laplace_tt(&grid);
        assert_eq!(a.ranks(), vec![1, 2, 2, 1]);
    }

    #[test]
    fn reaction_constant_coefficient_is_weighted_mass() {
        let (grid, quad) = unit_grid(2, 4);
        let c = 2.75;
        let field = CollocatedField::new(
            TtVector::constant(&quad.dims(), c).unwrap(),
            &quad,
            1e-12,
            "kappa2",
        )
        .unwrap();
        let r = assemble_reaction_tt(&field, &grid, &quad).unwrap();
        assert_eq!(r.max_rank(), 1);
        let full = r.full().unwrap();
        // dense oracle: difference of the two dense primal matrices
        let og = ttrd_oracle::OGrid::uniform(&[(0.0, 1.0); 2], 4, 4);
        let with = ttrd_oracle::primal_matrix(&og, &|_| c);
        let without = ttrd_oracle::primal_matrix(&og, &|_| 0.0);
        let expect = &with - &without;
        for i in 0..full.nrows() {
            for j in 0..full.ncols() {
                assert!(
                    (full[(i, j)] - expect[(i, j)]).abs() < 1e-12,
                    "({i},{j}): {} vs {}",
                    full[(i, j)],
                    expect[(i, j)]
                );
            }
        }
    }

    #[test]
    fn reaction_zero_field_is_zero_matrix() {
        let (grid, quad) = unit_grid(2, 3);
        let field = CollocatedField::new(
            TtVector::zeros(&quad.dims()).unwrap(),
            &quad,
            1e-12,
            "kappa2",
        )
        .unwrap();
        let r = assemble_reaction_tt(&field, &grid, &quad).unwrap();
        let full = r.full().unwrap();
        assert!(full.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reaction_linear_coefficient_matches_dense_assembly() {
        let (grid, quad) = unit_grid(2, 4);
        // kappa^2(x) = x_1, exact rank-1 collocation
        let factors = vec![quad.axis(0).nodes.clone(), vec![1.0; quad.axis(1).len()]];
        let field = CollocatedField::new(
            TtVector::from_rank1(&factors).unwrap(),
            &quad,
            1e-12,
            "kappa2",
        )
        .unwrap();
        let r = assemble_reaction_tt(&field, &grid, &quad).unwrap();
        let full = r.full().unwrap();
        let og = ttrd_oracle::OGrid::uniform(&[(0.0, 1.0); 2], 4, 4);
        let with = ttrd_oracle::primal_matrix(&og, &|x| x[0]);
        let without = ttrd_oracle::primal_matrix(&og, &|_| 0.0);
        let expect = &with - &without;
        for i in 0..full.nrows() {
            for j in 0..full.ncols() {
                assert!((full[(i, j)] - expect[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rhs_constant_load_gives_h_per_direction() {
        let (grid, quad) = unit_grid(2, 4);
        let field = CollocatedField::new(
            TtVector::constant(&quad.dims(), 1.0).unwrap(),
            &quad,
            1e-12,
            "f",
        )
        .unwrap();
        let b = assemble_rhs_tt(&field, &grid, &quad).unwrap();
        assert_eq!(b.max_rank(), 1);
        let h = 0.25;
        let c0 = b.core(0);
        for i in 1..4 {
            assert!((c0[(0, i, 0)].abs() - h).abs() < 1e-14);
        }
        assert_eq!(c0[(0, 0, 0)], 0.0);
        assert_eq!(c0[(0, 4, 0)], 0.0);
    }

    #[test]
    fn rhs_matches_dense_assembly() {
        // the d=2 polynomial load with kappa = 0
        let (grid, quad) = unit_grid(2, 8);
        let g = |t: f64| 1.0 - 4.0 * (t - 0.5) * (t - 0.5);
        let n0: Vec<f64> = quad.axis(0).nodes.iter().map(|&x| g(x)).collect();
        let n1: Vec<f64> = quad.axis(1).nodes.iter().map(|&x| g(x)).collect();
        let ones0 = vec![1.0; n0.len()];
        let ones1 = vec![1.0; n1.len()];
        let t1 = TtVector::from_rank1(&[ones0, n1.clone()]).unwrap();
        let t2 = TtVector::from_rank1(&[n0.clone(), ones1]).unwrap();
        let f_tt = t1.add(&t2).unwrap().scale(8.0);
        let field = CollocatedField::new(f_tt, &quad, 1e-12, "f").unwrap();
        let b = assemble_rhs_tt(&field, &grid, &quad).unwrap();
        let full = b.full().unwrap();
        let og = ttrd_oracle::OGrid::uniform(&[(0.0, 1.0); 2], 8, 4);
        let expect = ttrd_oracle::rhs_vector(&og, &|x| 8.0 * (g(x[0]) + g(x[1])));
        for i in 0..full.len() {
            assert!(
                (full[i] - expect[i]).abs() < 1e-12,
                "{i}: {} vs {}",
                full[i],
                expect[i]
            );
        }
    }

    #[test]
    fn als_on_identity_system_returns_rhs() {
        let dims = vec![4, 5, 3];
        let a = TtMatrix::identity(&dims).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let b = TtVector::random_rank(&dims, 2, &mut rng).unwrap();
        let system = PrimalSystem::new(a, b.clone());
        let x0 = TtVector::random_rank(&dims, 2, &mut rng).unwrap();
        let opts = AlsOptions { kickrank: 0, ..AlsOptions::default() };
        let (x, report) = als_solve(&system, &x0, 1e-10, &opts).unwrap();
        assert!(report.sweeps <= 3, "sweeps {}", report.sweeps);
        assert!(diff_norm(&x, &b).unwrap() <= 1e-10 * b.norm());
    }

    #[test]
    fn als_matches_dense_solve_on_laplace() {
        let (grid, quad) = unit_grid(2, 8);
        let a = assemble_laplace_tt(&grid);
        let g = |t: f64| 1.0 - 4.0 * (t - 0.5) * (t - 0.5);
        let n0: Vec<f64> = quad.axis(0).nodes.iter().map(|&x| g(x)).collect();
        let ones = vec![1.0; n0.len()];
        let f_tt = TtVector::from_rank1(&[ones.clone(), n0.clone()])
            .unwrap()
            .add(&TtVector::from_rank1(&[n0, ones]).unwrap())
            .unwrap()
            .scale(8.0);
        let field = CollocatedField::new(f_tt, &quad, 1e-12, "f").unwrap();
        let b = assemble_rhs_tt(&field, &grid, &quad).unwrap();
        let system = PrimalSystem::with_dirichlet_boundary(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let x0 = initial_guess(&grid.dims_nodal(), 2, true, &mut rng).unwrap();
        let (x, report) = als_solve(&system, &x0, 1e-8, &AlsOptions::default()).unwrap();
        assert!(report.converged);
        let full = x.full().unwrap();
        let og = ttrd_oracle::OGrid::uniform(&[(0.0, 1.0); 2], 8, 4);
        let ad = ttrd_oracle::primal_matrix(&og, &|_| 0.0);
        let bd = ttrd_oracle::rhs_vector(&og, &|x| 8.0 * (g(x[0]) + g(x[1])));
        let xd = ttrd_oracle::solve_dense(&ad, &bd);
        let scale = xd.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut err = 0.0;
        for i in 0..full.len() {
            err += (full[i] - xd[i]) * (full[i] - xd[i]);
        }
        assert!(err.sqrt() <= 1e-6 * scale, "err {} scale {}", err.sqrt(), scale);
    }

    #[test]
    fn plain_als_is_energy_monotone() {
        let (grid, quad) = unit_grid(2, 6);
        let a = assemble_laplace_tt(&grid);
        let cst = CollocatedField::new(
            TtVector::constant(&quad.dims(), 1.0).unwrap(),
            &quad,
            1e-12,
            "f",
        )
        .unwrap();
        let b = assemble_rhs_tt(&cst, &grid, &quad).unwrap();
        let system = PrimalSystem::with_dirichlet_boundary(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let x0 = initial_guess(&grid.dims_nodal(), 3, true, &mut rng).unwrap();
        let opts = AlsOptions {
            kickrank: 0,
            round_tol: None,
            track_energy: true,
            max_sweeps: 4,
            ..AlsOptions::default()
        };
        let (_, report) = als_solve(&system, &x0, 1e-14, &opts).unwrap();
        let tr = &report.energy_trace;
        assert!(tr.len() >= 4);
        for w in tr.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0),
                "energy increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn solution_boundary_entries_are_exactly_zero() {
        let (grid, quad) = unit_grid(2, 5);
        let a = assemble_laplace_tt(&grid);
        let cst = CollocatedField::new(
            TtVector::constant(&quad.dims(), 1.0).unwrap(),
            &quad,
            1e-12,
            "f",
        )
        .unwrap();
        let b = assemble_rhs_tt(&cst, &grid, &quad).unwrap();
        let system = PrimalSystem::with_dirichlet_boundary(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let x0 = initial_guess(&grid.dims_nodal(), 2, true, &mut rng).unwrap();
        let (x, _) = als_solve(&system, &x0, 1e-8, &AlsOptions::default()).unwrap();
        let dims = grid.dims_nodal();
        let full = x.full().unwrap();
        for (lin, v) in full.iter().enumerate() {
            let mut rem = lin;
            let mut boundary = false;
            for k in (0..dims.len()).rev() {
                let i = rem % dims[k];
                rem /= dims[k];
                if i == 0 || i == dims[k] - 1 {
                    boundary = true;
                }
            }
            if boundary {
                assert_eq!(*v, 0.0, "boundary entry {lin} = {v}");
            }
        }
    }
}
