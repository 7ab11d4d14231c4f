//! Dense reference implementations used as test oracles.
//!
//! Everything here works on full tensors with explicit loops over global
//! indices and quadrature points. It deliberately shares no code with the
//! TT solver path: grids, bases, quadrature and assembly are re-derived
//! from scratch so the two routes are independent checks of each other.
//! Sizes are expected to be tiny (d <= 3, a handful of elements).

use ndarray::prelude::*;
use ndarray_linalg::Solve;

// ---------------------------------------------------------------------------
// quadrature
// ---------------------------------------------------------------------------

/// Gauss-Legendre rule on [-1, 1] via Newton iteration.
pub fn gauss_ref(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(m, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| nodes[a].partial_cmp(&nodes[b]).unwrap());
    (
        idx.iter().map(|&i| nodes[i]).collect(),
        idx.iter().map(|&i| weights[i]).collect(),
    )
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, m as f64 * (x * p1 - p0) / (x * x - 1.0))
}

// ---------------------------------------------------------------------------
// grid and indexing
// ---------------------------------------------------------------------------

/// Dense-side description of the Cartesian grid plus its tensorized
/// quadrature.
pub struct OGrid {
    /// node coordinates per axis
    pub axes: Vec<Vec<f64>>,
    pub m: usize,
    /// quadrature nodes per axis (m per element)
    pub qnodes: Vec<Vec<f64>>,
    pub qweights: Vec<Vec<f64>>,
}

impl OGrid {
    pub fn new(axes: Vec<Vec<f64>>, m: usize) -> Self {
        let (xr, wr) = gauss_ref(m);
        let mut qnodes = Vec::new();
        let mut qweights = Vec::new();
        for ax in &axes {
            let mut qn = Vec::new();
            let mut qw = Vec::new();
            for e in 0..ax.len() - 1 {
                let c = 0.5 * (ax[e] + ax[e + 1]);
                let h = 0.5 * (ax[e + 1] - ax[e]);
                for q in 0..m {
                    qn.push(c + h * xr[q]);
                    qw.push(h * wr[q]);
                }
            }
            qnodes.push(qn);
            qweights.push(qw);
        }
        OGrid { axes, m, qnodes, qweights }
    }

    pub fn uniform(bounds: &[(f64, f64)], n: usize, m: usize) -> Self {
        let axes = bounds
            .iter()
            .map(|&(a, b)| (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect())
            .collect();
        OGrid::new(axes, m)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn n_elems(&self, k: usize) -> usize {
        self.axes[k].len() - 1
    }

    pub fn dims_nodal(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len()).collect()
    }

    pub fn dims_flux(&self) -> Vec<usize> {
        self.axes.iter().map(|a| 2 * (a.len() - 1) + 1).collect()
    }

    pub fn dims_quad(&self) -> Vec<usize> {
        self.qnodes.iter().map(|q| q.len()).collect()
    }
}

/// Decompose a linear index (first mode slowest) into a multi-index.
pub fn multi_index(mut i: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = i % dims[k];
        i /= dims[k];
    }
    out
}

pub fn linear_index(idx: &[usize], dims: &[usize]) -> usize {
    let mut i = 0;
    for k in 0..dims.len() {
        i = i * dims[k] + idx[k];
    }
    i
}

// ---------------------------------------------------------------------------
// 1D bases at quadrature nodes
// ---------------------------------------------------------------------------

/// Tabulated values/derivatives of a 1D basis at the quadrature nodes of
/// one axis. Indexing conventions match the solver: hats 0..n; broken
/// linears with a dummy index 0, then (falling, rising) = (2e+1, 2e+2) on
/// element e; quadratics (2e, 2e+1, 2e+2) = (left, mid, right) on element e.
pub struct OBasis {
    pub dim: usize,
    pub val: Array2<f64>,
    pub der: Array2<f64>,
}

pub fn basis_hat(grid: &OGrid, k: usize) -> OBasis {
    let nodes = &grid.axes[k];
    let n = nodes.len() - 1;
    let mn = grid.qnodes[k].len();
    let mut val = Array2::zeros((n + 1, mn));
    let mut der = Array2::zeros((n + 1, mn));
    for e in 0..n {
        let (z0, z1) = (nodes[e], nodes[e + 1]);
        let h = z1 - z0;
        for q in 0..grid.m {
            let l = e * grid.m + q;
            let x = grid.qnodes[k][l];
            val[(e, l)] = (z1 - x) / h;
            der[(e, l)] = -1.0 / h;
            val[(e + 1, l)] = (x - z0) / h;
            der[(e + 1, l)] = 1.0 / h;
        }
    }
    OBasis { dim: n + 1, val, der }
}

pub fn basis_broken(grid: &OGrid, k: usize) -> OBasis {
    let nodes = &grid.axes[k];
    let n = nodes.len() - 1;
    let mn = grid.qnodes[k].len();
    let mut val = Array2::zeros((2 * n + 1, mn));
    let mut der = Array2::zeros((2 * n + 1, mn));
    for e in 0..n {
        let (z0, z1) = (nodes[e], nodes[e + 1]);
        let h = z1 - z0;
        for q in 0..grid.m {
            let l = e * grid.m + q;
            let x = grid.qnodes[k][l];
            val[(2 * e + 1, l)] = (z1 - x) / h;
            der[(2 * e + 1, l)] = -1.0 / h;
            val[(2 * e + 2, l)] = (x - z0) / h;
            der[(2 * e + 2, l)] = 1.0 / h;
        }
    }
    OBasis { dim: 2 * n + 1, val, der }
}

pub fn basis_p2(grid: &OGrid, k: usize) -> OBasis {
    let nodes = &grid.axes[k];
    let n = nodes.len() - 1;
    let mn = grid.qnodes[k].len();
    let mut val = Array2::zeros((2 * n + 1, mn));
    let mut der = Array2::zeros((2 * n + 1, mn));
    for e in 0..n {
        let (z0, z1) = (nodes[e], nodes[e + 1]);
        let zm = 0.5 * (z0 + z1);
        let d0 = (z0 - zm) * (z0 - z1);
        let dm = (zm - z0) * (zm - z1);
        let d1 = (z1 - z0) * (z1 - zm);
        for q in 0..grid.m {
            let l = e * grid.m + q;
            let x = grid.qnodes[k][l];
            val[(2 * e, l)] = (x - zm) * (x - z1) / d0;
            der[(2 * e, l)] = (2.0 * x - zm - z1) / d0;
            val[(2 * e + 1, l)] = (x - z0) * (x - z1) / dm;
            der[(2 * e + 1, l)] = (2.0 * x - z0 - z1) / dm;
            val[(2 * e + 2, l)] = (x - z0) * (x - zm) / d1;
            der[(2 * e + 2, l)] = (2.0 * x - z0 - zm) / d1;
        }
    }
    OBasis { dim: 2 * n + 1, val, der }
}

// ---------------------------------------------------------------------------
// dense assembly
// ---------------------------------------------------------------------------

pub fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (am, an) = a.dim();
    let (bm, bn) = b.dim();
    let mut out = Array2::zeros((am * bm, an * bn));
    for i in 0..am {
        for j in 0..an {
            let v = a[(i, j)];
            if v == 0.0 {
                continue;
            }
            for p in 0..bm {
                for q in 0..bn {
                    out[(i * bm + p, j * bn + q)] = v * b[(p, q)];
                }
            }
        }
    }
    out
}

pub fn kron_list(mats: &[Array2<f64>]) -> Array2<f64> {
    let mut out = Array2::ones((1, 1));
    for m in mats {
        out = kron(&out, m);
    }
    out
}

/// Analytic 1D stiffness/mass pair of the hat basis with the Dirichlet
/// convention (unit diagonal, zero off-diagonal on boundary rows/columns).
pub fn one_d_pair(nodes: &[f64]) -> (Array2<f64>, Array2<f64>) {
    let n = nodes.len() - 1;
    let mut l = Array2::zeros((n + 1, n + 1));
    let mut m = Array2::zeros((n + 1, n + 1));
    for e in 0..n {
        let h = nodes[e + 1] - nodes[e];
        l[(e, e)] += 1.0 / h;
        l[(e + 1, e + 1)] += 1.0 / h;
        l[(e, e + 1)] -= 1.0 / h;
        l[(e + 1, e)] -= 1.0 / h;
        m[(e, e)] += h / 3.0;
        m[(e + 1, e + 1)] += h / 3.0;
        m[(e, e + 1)] += h / 6.0;
        m[(e + 1, e)] += h / 6.0;
    }
    for &b in &[0, n] {
        for j in 0..=n {
            l[(b, j)] = 0.0;
            l[(j, b)] = 0.0;
            m[(b, j)] = 0.0;
            m[(j, b)] = 0.0;
        }
        l[(b, b)] = 1.0;
        m[(b, b)] = 1.0;
    }
    (l, m)
}

/// Iterate over all global quadrature points, calling
/// `f(weight, coords, quad_multi_index)`.
pub fn for_each_quad_point<F: FnMut(f64, &[f64], &[usize])>(grid: &OGrid, mut f: F) {
    let dims = grid.dims_quad();
    let total: usize = dims.iter().product();
    let d = grid.dim();
    let mut coords = vec![0.0; d];
    for l in 0..total {
        let idx = multi_index(l, &dims);
        let mut w = 1.0;
        for k in 0..d {
            coords[k] = grid.qnodes[k][idx[k]];
            w *= grid.qweights[k][idx[k]];
        }
        f(w, &coords, &idx);
    }
}

/// Dense primal system matrix: interior entries assembled by global
/// quadrature of `grad phi_i . grad phi_j + kappa2 phi_i phi_j`; rows and
/// columns holding any boundary index get a unit diagonal.
pub fn primal_matrix(grid: &OGrid, kappa2: &dyn Fn(&[f64]) -> f64) -> Array2<f64> {
    let d = grid.dim();
    let dims = grid.dims_nodal();
    let total: usize = dims.iter().product();
    let bases: Vec<OBasis> = (0..d).map(|k| basis_hat(grid, k)).collect();
    let mut a = Array2::zeros((total, total));
    let is_interior =
        |idx: &[usize]| idx.iter().enumerate().all(|(k, &i)| i > 0 && i < dims[k] - 1);
    for_each_quad_point(grid, |w, coords, ql| {
        let k2 = kappa2(coords);
        let pairs: usize = 1 << d;
        for bi in 0..pairs {
            let i_idx: Vec<usize> = (0..d)
                .map(|k| ql[k] / grid.m + ((bi >> k) & 1))
                .collect();
            if !is_interior(&i_idx) {
                continue;
            }
            for bj in 0..pairs {
                let j_idx: Vec<usize> = (0..d)
                    .map(|k| ql[k] / grid.m + ((bj >> k) & 1))
                    .collect();
                if !is_interior(&j_idx) {
                    continue;
                }
                let mut grad = 0.0;
                for s in 0..d {
                    let mut term = 1.0;
                    for k in 0..d {
                        let (bi_t, bj_t) = if k == s {
                            (bases[k].der[(i_idx[k], ql[k])], bases[k].der[(j_idx[k], ql[k])])
                        } else {
                            (bases[k].val[(i_idx[k], ql[k])], bases[k].val[(j_idx[k], ql[k])])
                        };
                        term *= bi_t * bj_t;
                    }
                    grad += term;
                }
                let mut mass = 1.0;
                for k in 0..d {
                    mass *= bases[k].val[(i_idx[k], ql[k])] * bases[k].val[(j_idx[k], ql[k])];
                }
                let gi = linear_index(&i_idx, &dims);
                let gj = linear_index(&j_idx, &dims);
                a[(gi, gj)] += w * (grad + k2 * mass);
            }
        }
    });
    for g in 0..total {
        let idx = multi_index(g, &dims);
        if !is_interior(&idx) {
            a[(g, g)] = 1.0;
        }
    }
    a
}

/// Dense load vector `(f, phi_i)` with boundary entries zero.
pub fn rhs_vector(grid: &OGrid, f: &dyn Fn(&[f64]) -> f64) -> Array1<f64> {
    let d = grid.dim();
    let dims = grid.dims_nodal();
    let total: usize = dims.iter().product();
    let bases: Vec<OBasis> = (0..d).map(|k| basis_hat(grid, k)).collect();
    let mut b = Array1::zeros(total);
    let is_interior =
        |idx: &[usize]| idx.iter().enumerate().all(|(k, &i)| i > 0 && i < dims[k] - 1);
    for_each_quad_point(grid, |w, coords, ql| {
        let fv = f(coords);
        if fv == 0.0 {
            return;
        }
        let pairs: usize = 1 << d;
        for bi in 0..pairs {
            let i_idx: Vec<usize> = (0..d)
                .map(|k| ql[k] / grid.m + ((bi >> k) & 1))
                .collect();
            if !is_interior(&i_idx) {
                continue;
            }
            let mut phi = 1.0;
            for k in 0..d {
                phi *= bases[k].val[(i_idx[k], ql[k])];
            }
            b[linear_index(&i_idx, &dims)] += w * fv * phi;
        }
    });
    b
}

pub fn solve_dense(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    a.solve(b).expect("dense solve")
}

/// Per-direction elementwise L2 projector onto broken linears acting on
/// quadrature values.
pub fn projector_1d(grid: &OGrid, k: usize) -> Array2<f64> {
    let nodes = &grid.axes[k];
    let n = nodes.len() - 1;
    let m = grid.m;
    let mn = grid.qnodes[k].len();
    let mut p = Array2::zeros((mn, mn));
    for e in 0..n {
        let c = 0.5 * (nodes[e] + nodes[e + 1]);
        let h = nodes[e + 1] - nodes[e];
        let mut v = Array2::zeros((m, 2));
        let mut w = vec![0.0; m];
        for q in 0..m {
            let l = e * m + q;
            v[(q, 0)] = 1.0;
            v[(q, 1)] = (grid.qnodes[k][l] - c) / h;
            w[q] = grid.qweights[k][l];
        }
        let mut g = [[0.0f64; 2]; 2];
        for q in 0..m {
            for a in 0..2 {
                for b in 0..2 {
                    g[a][b] += w[q] * v[(q, a)] * v[(q, b)];
                }
            }
        }
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let gi = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
        for qi in 0..m {
            for qj in 0..m {
                let mut s = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        s += v[(qi, a)] * gi[a][b] * v[(qj, b)];
                    }
                }
                p[(e * m + qi, e * m + qj)] = s * w[qj];
            }
        }
    }
    p
}

/// Global elementwise multilinear projector on quadrature values.
pub fn projector_full(grid: &OGrid) -> Array2<f64> {
    let mats: Vec<Array2<f64>> = (0..grid.dim()).map(|k| projector_1d(grid, k)).collect();
    kron_list(&mats)
}

/// Values of the Q1 interpolant of nodal coefficients at every global
/// quadrature point (or its `deriv_dir` partial derivative).
pub fn q1_values_on_quad(grid: &OGrid, u: &Array1<f64>, deriv_dir: Option<usize>) -> Array1<f64> {
    let d = grid.dim();
    let dims = grid.dims_nodal();
    let qdims = grid.dims_quad();
    let total: usize = qdims.iter().product();
    let bases: Vec<OBasis> = (0..d).map(|k| basis_hat(grid, k)).collect();
    let mut out = Array1::zeros(total);
    for l in 0..total {
        let ql = multi_index(l, &qdims);
        let mut val = 0.0;
        let pairs: usize = 1 << d;
        for bi in 0..pairs {
            let i_idx: Vec<usize> = (0..d)
                .map(|k| ql[k] / grid.m + ((bi >> k) & 1))
                .collect();
            let mut phi = 1.0;
            for k in 0..d {
                let t = match deriv_dir {
                    Some(s) if s == k => bases[k].der[(i_idx[k], ql[k])],
                    _ => bases[k].val[(i_idx[k], ql[k])],
                };
                phi *= t;
            }
            val += u[linear_index(&i_idx, &dims)] * phi;
        }
        out[l] = val;
    }
    out
}

/// Values (or the `deriv_dir` partial derivative) of RT1 component `s`
/// with coefficients `tau_s` at every global quadrature point.
pub fn rt1_values_on_quad(
    grid: &OGrid,
    s: usize,
    tau_s: &Array1<f64>,
    deriv_dir: Option<usize>,
) -> Array1<f64> {
    let d = grid.dim();
    let dims = grid.dims_flux();
    let qdims = grid.dims_quad();
    let total: usize = qdims.iter().product();
    let bases: Vec<OBasis> = (0..d)
        .map(|k| if k == s { basis_p2(grid, k) } else { basis_broken(grid, k) })
        .collect();
    let mut out = Array1::zeros(total);
    for l in 0..total {
        let ql = multi_index(l, &qdims);
        let mut val = 0.0;
        for i_idx in local_flux_indices(grid, s, &ql) {
            let mut phi = 1.0;
            for k in 0..d {
                let t = match deriv_dir {
                    Some(dd) if dd == k => bases[k].der[(i_idx[k], ql[k])],
                    _ => bases[k].val[(i_idx[k], ql[k])],
                };
                phi *= t;
            }
            val += tau_s[linear_index(&i_idx, &dims)] * phi;
        }
        out[l] = val;
    }
    out
}

/// All flux basis multi-indices supported on the element of a quadrature
/// point, for component `s`.
fn local_flux_indices(grid: &OGrid, s: usize, ql: &[usize]) -> Vec<Vec<usize>> {
    let d = grid.dim();
    let mut locals: Vec<Vec<usize>> = Vec::with_capacity(d);
    for k in 0..d {
        let e = ql[k] / grid.m;
        if k == s {
            locals.push(vec![2 * e, 2 * e + 1, 2 * e + 2]);
        } else {
            locals.push(vec![2 * e + 1, 2 * e + 2]);
        }
    }
    let mut out = Vec::new();
    let mut stack = vec![0usize; d];
    'outer: loop {
        out.push((0..d).map(|k| locals[k][stack[k]]).collect());
        let mut k = 0;
        loop {
            stack[k] += 1;
            if stack[k] < locals[k].len() {
                break;
            }
            stack[k] = 0;
            k += 1;
            if k == d {
                break 'outer;
            }
        }
    }
    out
}

/// Dense complementary (flux reconstruction) system: the `d x d` block
/// matrix of Euler-Lagrange equations over RT1 with the dummy-padded
/// broken basis, plus the block right-hand side.
pub struct DenseComplementary {
    pub b: Array2<f64>,
    pub g: Array1<f64>,
    /// per-component size
    pub comp_size: usize,
}

pub fn complementary_system(
    grid: &OGrid,
    sigma: &dyn Fn(&[f64]) -> f64,        // tilde kappa^{-2}
    kappa2: &dyn Fn(&[f64]) -> f64,       // kappa^2
    kappa_tilde2: &dyn Fn(&[f64]) -> f64, // tilde kappa^2
    f: &dyn Fn(&[f64]) -> f64,
    u_h: &Array1<f64>,
) -> DenseComplementary {
    let d = grid.dim();
    let dims = grid.dims_flux();
    let comp: usize = dims.iter().product();
    let total = d * comp;
    let mut b = Array2::zeros((total, total));
    let qdims = grid.dims_quad();
    let nq: usize = qdims.iter().product();

    let broken: Vec<OBasis> = (0..d).map(|k| basis_broken(grid, k)).collect();
    let p2: Vec<OBasis> = (0..d).map(|k| basis_p2(grid, k)).collect();

    // quadrature-value arrays of the coefficient fields
    let mut sig = Array1::zeros(nq);
    let mut kap2 = Array1::zeros(nq);
    let mut ktil2 = Array1::zeros(nq);
    let mut fv = Array1::zeros(nq);
    let mut wq = Array1::zeros(nq);
    for_each_quad_point(grid, |w, coords, ql| {
        let l = linear_index(ql, &qdims);
        sig[l] = sigma(coords);
        kap2[l] = kappa2(coords);
        ktil2[l] = kappa_tilde2(coords);
        fv[l] = f(coords);
        wq[l] = w;
    });

    let psi_value = |s: usize, j_idx: &[usize], ql: &[usize], deriv: Option<usize>| -> f64 {
        let mut phi = 1.0;
        for k in 0..d {
            let table = if k == s { &p2[k] } else { &broken[k] };
            let t = match deriv {
                Some(dd) if dd == k => table.der[(j_idx[k], ql[k])],
                _ => table.val[(j_idx[k], ql[k])],
            };
            phi *= t;
            if phi == 0.0 {
                return 0.0;
            }
        }
        phi
    };

    // sigma-weighted divergence coupling: (sigma d_s psi^s_j, d_t psi^t_j')
    for l in 0..nq {
        let ql = multi_index(l, &qdims);
        let w = wq[l] * sig[l];
        if w == 0.0 {
            continue;
        }
        for s in 0..d {
            let js = local_flux_indices(grid, s, &ql);
            for t in 0..d {
                let jt = local_flux_indices(grid, t, &ql);
                for j_idx in &js {
                    let pj = psi_value(s, j_idx, &ql, Some(s));
                    if pj == 0.0 {
                        continue;
                    }
                    let gj = s * comp + linear_index(j_idx, &dims);
                    for j2_idx in &jt {
                        let pj2 = psi_value(t, j2_idx, &ql, Some(t));
                        if pj2 == 0.0 {
                            continue;
                        }
                        let gj2 = t * comp + linear_index(j2_idx, &dims);
                        b[(gj, gj2)] += w * pj * pj2;
                    }
                }
            }
        }
    }

    // mass term per component: kron of P2 mass in direction s and the
    // dummy-completed broken mass elsewhere
    for s in 0..d {
        let mut mats: Vec<Array2<f64>> = Vec::with_capacity(d);
        for k in 0..d {
            let table = if k == s { &p2[k] } else { &broken[k] };
            let dimk = table.dim;
            let mut mk = Array2::zeros((dimk, dimk));
            for l in 0..grid.qnodes[k].len() {
                let w = grid.qweights[k][l];
                for i in 0..dimk {
                    let a = table.val[(i, l)];
                    if a == 0.0 {
                        continue;
                    }
                    for j in 0..dimk {
                        let c = table.val[(j, l)];
                        if c != 0.0 {
                            mk[(i, j)] += w * a * c;
                        }
                    }
                }
            }
            if k != s {
                mk[(0, 0)] = 1.0; // dummy completion
            }
            mats.push(mk);
        }
        let mass = kron_list(&mats);
        for i in 0..comp {
            for j in 0..comp {
                if mass[(i, j)] != 0.0 {
                    b[(s * comp + i, s * comp + j)] += mass[(i, j)];
                }
            }
        }
    }

    // right-hand side: (sigma [Pi(kappa2 u_h) - ktilde2 u_h - Pi f], d_s psi_j)
    let proj = projector_full(grid);
    let uq = q1_values_on_quad(grid, u_h, None);
    let k2u = &kap2 * &uq;
    let pk2u = proj.dot(&k2u);
    let pf = proj.dot(&fv);
    let field: Array1<f64> = (0..nq)
        .map(|l| sig[l] * (pk2u[l] - ktil2[l] * uq[l] - pf[l]))
        .collect();
    let mut g = Array1::zeros(total);
    for l in 0..nq {
        let ql = multi_index(l, &qdims);
        let w = wq[l] * field[l];
        if w == 0.0 {
            continue;
        }
        for s in 0..d {
            for j_idx in &local_flux_indices(grid, s, &ql) {
                let pj = psi_value(s, j_idx, &ql, Some(s));
                if pj != 0.0 {
                    g[s * comp + linear_index(j_idx, &dims)] += w * pj;
                }
            }
        }
    }

    DenseComplementary { b, g, comp_size: comp }
}

/// Dense evaluation of the split estimator pieces for given `u_h` and flux
/// coefficients: returns `(|eta1|, |eta2|, |r - Pi r|_w)`.
pub fn eta_dense(
    grid: &OGrid,
    u_h: &Array1<f64>,
    tau: &[Array1<f64>],
    kappa2: &dyn Fn(&[f64]) -> f64,
    kappa_tilde_inv: &dyn Fn(&[f64]) -> f64,
    f: &dyn Fn(&[f64]) -> f64,
) -> (f64, f64, f64) {
    let d = grid.dim();
    let qdims = grid.dims_quad();
    let nq: usize = qdims.iter().product();
    let mut wq = Array1::zeros(nq);
    let mut kap2 = Array1::zeros(nq);
    let mut ktinv = Array1::zeros(nq);
    let mut fv = Array1::zeros(nq);
    for_each_quad_point(grid, |w, coords, ql| {
        let l = linear_index(ql, &qdims);
        wq[l] = w;
        kap2[l] = kappa2(coords);
        ktinv[l] = kappa_tilde_inv(coords);
        fv[l] = f(coords);
    });
    let uq = q1_values_on_quad(grid, u_h, None);
    let proj = projector_full(grid);
    let r: Array1<f64> = &fv - &(&kap2 * &uq);
    let pr = proj.dot(&r);

    let mut div_tau = Array1::<f64>::zeros(nq);
    let mut eta1_sq = 0.0f64;
    for s in 0..d {
        let tau_s = rt1_values_on_quad(grid, s, &tau[s], None);
        let du_s = q1_values_on_quad(grid, u_h, Some(s));
        for l in 0..nq {
            let diff = tau_s[l] - du_s[l];
            eta1_sq += wq[l] * diff * diff;
        }
        let dts = rt1_values_on_quad(grid, s, &tau[s], Some(s));
        div_tau = div_tau + dts;
    }
    let mut eta2_sq = 0.0f64;
    let mut osc_sq = 0.0f64;
    for l in 0..nq {
        let e2 = ktinv[l] * (pr[l] + div_tau[l]);
        eta2_sq += wq[l] * e2 * e2;
        let dv = r[l] - pr[l];
        osc_sq += wq[l] * dv * dv;
    }
    (eta1_sq.sqrt(), eta2_sq.sqrt(), osc_sq.sqrt())
}

/// Dense energy error `|||u - u_h|||` by quadrature.
pub fn energy_error_dense(
    grid: &OGrid,
    u: &dyn Fn(&[f64]) -> f64,
    grad_u: &dyn Fn(&[f64], usize) -> f64,
    kappa2: &dyn Fn(&[f64]) -> f64,
    u_h: &Array1<f64>,
) -> f64 {
    let d = grid.dim();
    let qdims = grid.dims_quad();
    let uq = q1_values_on_quad(grid, u_h, None);
    let mut grads: Vec<Array1<f64>> = Vec::with_capacity(d);
    for s in 0..d {
        grads.push(q1_values_on_quad(grid, u_h, Some(s)));
    }
    let mut total = 0.0;
    for_each_quad_point(grid, |w, coords, ql| {
        let l = linear_index(ql, &qdims);
        let mut g2 = 0.0;
        for s in 0..d {
            let diff = grad_u(coords, s) - grads[s][l];
            g2 += diff * diff;
        }
        let dv = u(coords) - uq[l];
        total += w * (g2 + kappa2(coords) * dv * dv);
    });
    total.sqrt()
}
