//! One-dimensional finite element ingredients: grids, Gauss-Legendre
//! quadrature, basis tables and weighted 1D matrices. Every d-dimensional
//! operator is built Kronecker-wise from these.

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Banded;

/// Nodes of one grid direction, `z(0) < ... < z(n)`, giving `n` elements.
#[derive(Debug, Clone)]
pub struct Grid1D {
    nodes: Vec<f64>,
}

impl Grid1D {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArg("grid needs at least two nodes".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidArg("grid nodes must be strictly increasing".into()));
            }
        }
        Ok(Grid1D { nodes })
    }

    pub fn uniform(a: f64, b: f64, n_elems: usize) -> Result<Self> {
        if !(b > a) || n_elems == 0 {
            return Err(Error::InvalidArg("empty interval or zero elements".into()));
        }
        let h = (b - a) / n_elems as f64;
        let mut nodes: Vec<f64> = (0..=n_elems).map(|i| a + i as f64 * h).collect();
        nodes[n_elems] = b;
        Grid1D::from_nodes(nodes)
    }

    pub fn a(&self) -> f64 {
        self.nodes[0]
    }

    pub fn b(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn n_elems(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_points(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Width of element `e` (0-based).
    pub fn h(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    pub fn max_h(&self) -> f64 {
        (0..self.n_elems()).map(|e| self.h(e)).fold(0.0, f64::max)
    }
}

/// Cartesian product grid over a d-dimensional box.
#[derive(Debug, Clone)]
pub struct CartesianGrid {
    axes: Vec<Grid1D>,
}

impl CartesianGrid {
    pub fn new(axes: Vec<Grid1D>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArg("grid needs at least one axis".into()));
        }
        Ok(CartesianGrid { axes })
    }

    /// Uniform grid with `n` elements per direction on the given box.
    pub fn uniform(bounds: &[(f64, f64)], n: usize) -> Result<Self> {
        let axes = bounds
            .iter()
            .map(|&(a, b)| Grid1D::uniform(a, b, n))
            .collect::<Result<Vec<_>>>()?;
        CartesianGrid::new(axes)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> &Grid1D {
        &self.axes[k]
    }

    pub fn axes(&self) -> &[Grid1D] {
        &self.axes
    }

    /// Primal mode sizes `n_k + 1` (nodal Q1 coefficients).
    pub fn dims_nodal(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n_points()).collect()
    }

    /// Flux mode sizes `2 n_k + 1`.
    pub fn dims_flux(&self) -> Vec<usize> {
        self.axes.iter().map(|a| 2 * a.n_elems() + 1).collect()
    }

    pub fn side_lengths(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.b() - a.a()).collect()
    }

    /// Largest element extent over the product mesh: the longest element
    /// side. For a box this is the sharp constant in the zero-mean Poincare
    /// inequality (first Neumann eigenvalue of the element), so it is the
    /// right `h_K` for the oscillation bound.
    pub fn max_element_extent(&self) -> f64 {
        self.axes.iter().map(|a| a.max_h()).fold(0.0, f64::max)
    }
}

/// Gauss-Legendre rule with `m` points on `[alpha, beta]`, exact for
/// polynomials of degree `2m - 1`.
pub fn gauss_legendre(m: usize, alpha: f64, beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=10).contains(&m) {
        return Err(Error::InvalidArg(format!("unsupported quadrature order m = {m}")));
    }
    if !(beta > alpha) {
        return Err(Error::InvalidArg("empty quadrature interval".into()));
    }
    let (xr, wr) = gauss_legendre_reference(m);
    let c = 0.5 * (alpha + beta);
    let half = 0.5 * (beta - alpha);
    let nodes = xr.iter().map(|x| c + half * x).collect();
    let weights = wr.iter().map(|w| half * w).collect();
    Ok((nodes, weights))
}

/// Reference rule on [-1, 1] via Newton iteration on the Legendre polynomial.
fn gauss_legendre_reference(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        // Chebyshev initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(m, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(m, x);
        nodes[m - 1 - i] = x;
        weights[m - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// One direction of the tensorized quadrature grid: `m` Gauss-Legendre
/// points per element, `m * n` nodes total.
#[derive(Debug, Clone)]
pub struct QuadAxis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub m: usize,
}

impl QuadAxis {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Element containing quadrature node `l`.
    pub fn elem_of(&self, l: usize) -> usize {
        l / self.m
    }
}

/// Tensorized Gauss-Legendre quadrature over a Cartesian grid.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    axes: Vec<QuadAxis>,
    m: usize,
}

impl QuadratureGrid {
    pub fn new(grid: &CartesianGrid, m: usize) -> Result<Self> {
        let mut axes = Vec::with_capacity(grid.dim());
        for ax in grid.axes() {
            let mut nodes = Vec::with_capacity(m * ax.n_elems());
            let mut weights = Vec::with_capacity(m * ax.n_elems());
            for e in 0..ax.n_elems() {
                let (xs, ws) = gauss_legendre(m, ax.node(e), ax.node(e + 1))?;
                nodes.extend(xs);
                weights.extend(ws);
            }
            axes.push(QuadAxis { nodes, weights, m });
        }
        Ok(QuadratureGrid { axes, m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, k: usize) -> &QuadAxis {
        &self.axes[k]
    }

    /// Mode sizes of collocated fields: `m * n_k` per direction.
    pub fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len()).collect()
    }

    /// Per-direction square roots of the quadrature weights.
    pub fn sqrt_weight_factors(&self) -> Vec<Vec<f64>> {
        self.axes
            .iter()
            .map(|a| a.weights.iter().map(|w| w.sqrt()).collect())
            .collect()
    }

    /// Per-direction quadrature weights.
    pub fn weight_factors(&self) -> Vec<Vec<f64>> {
        self.axes.iter().map(|a| a.weights.clone()).collect()
    }
}

/// Which 1D basis a table holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Continuous piecewise linear hats, `n + 1` functions.
    HatP1,
    /// Discontinuous broken linears, `2n` functions padded with one dummy
    /// (index 0, identically zero) to `2n + 1`.
    BrokenP1,
    /// Continuous piecewise quadratics, `2n + 1` functions; even indices
    /// sit on grid nodes, odd indices on element midpoints.
    P2,
}

/// Values and first derivatives of a 1D basis at all quadrature nodes of
/// one direction.
#[derive(Debug, Clone)]
pub struct BasisTable1D {
    pub kind: BasisKind,
    pub dim: usize,
    /// (dim, m*n) function values
    pub values: Array2<f64>,
    /// (dim, m*n) first derivatives
    pub derivs: Array2<f64>,
    n_elems: usize,
    m: usize,
}

impl BasisTable1D {
    pub fn build(grid: &Grid1D, quad: &QuadAxis, kind: BasisKind) -> Self {
        let n = grid.n_elems();
        let m = quad.m;
        let mn = quad.len();
        let dim = match kind {
            BasisKind::HatP1 => n + 1,
            BasisKind::BrokenP1 | BasisKind::P2 => 2 * n + 1,
        };
        let mut values = Array2::zeros((dim, mn));
        let mut derivs = Array2::zeros((dim, mn));
        for e in 0..n {
            let z0 = grid.node(e);
            let z1 = grid.node(e + 1);
            let h = z1 - z0;
            for q in 0..m {
                let l = e * m + q;
                let x = quad.nodes[l];
                match kind {
                    BasisKind::HatP1 => {
                        values[(e, l)] = (z1 - x) / h;
                        derivs[(e, l)] = -1.0 / h;
                        values[(e + 1, l)] = (x - z0) / h;
                        derivs[(e + 1, l)] = 1.0 / h;
                    }
                    BasisKind::BrokenP1 => {
                        values[(2 * e + 1, l)] = (z1 - x) / h;
                        derivs[(2 * e + 1, l)] = -1.0 / h;
                        values[(2 * e + 2, l)] = (x - z0) / h;
                        derivs[(2 * e + 2, l)] = 1.0 / h;
                    }
                    BasisKind::P2 => {
                        let zm = 0.5 * (z0 + z1);
                        // Lagrange quadratics on {z0, zm, z1}
                        let d0 = (z0 - zm) * (z0 - z1);
                        let dm = (zm - z0) * (zm - z1);
                        let d1 = (z1 - z0) * (z1 - zm);
                        values[(2 * e, l)] = (x - zm) * (x - z1) / d0;
                        derivs[(2 * e, l)] = (2.0 * x - zm - z1) / d0;
                        values[(2 * e + 1, l)] = (x - z0) * (x - z1) / dm;
                        derivs[(2 * e + 1, l)] = (2.0 * x - z0 - z1) / dm;
                        values[(2 * e + 2, l)] = (x - z0) * (x - zm) / d1;
                        derivs[(2 * e + 2, l)] = (2.0 * x - z0 - zm) / d1;
                    }
                }
            }
        }
        BasisTable1D { kind, dim, values, derivs, n_elems: n, m }
    }

    /// Basis functions supported on element `e`, as global indices.
    pub fn local_indices(&self, e: usize) -> Vec<usize> {
        match self.kind {
            BasisKind::HatP1 => vec![e, e + 1],
            BasisKind::BrokenP1 => vec![2 * e + 1, 2 * e + 2],
            BasisKind::P2 => vec![2 * e, 2 * e + 1, 2 * e + 2],
        }
    }

    pub fn n_elems(&self) -> usize {
        self.n_elems
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn table(&self, derivative: bool) -> &Array2<f64> {
        if derivative {
            &self.derivs
        } else {
            &self.values
        }
    }
}

/// Band width of a product of two basis families (support overlap).
pub fn pair_bandwidth(row: BasisKind, col: BasisKind) -> usize {
    match (row, col) {
        (BasisKind::HatP1, BasisKind::HatP1) => 1,
        _ => 2,
    }
}

/// Weighted 1D matrix in banded form:
/// `entry(i, j) = sum_l w(l) coeff(l) B_row(i, l) B_col(j, l)`.
pub fn weighted_1d_banded(
    coeff: &[f64],
    row: &BasisTable1D,
    col: &BasisTable1D,
    quad: &QuadAxis,
    row_deriv: bool,
    col_deriv: bool,
) -> Result<Banded> {
    if coeff.len() != quad.len() {
        return Err(Error::InvalidArg(format!(
            "coefficient slice length {} != quadrature size {}",
            coeff.len(),
            quad.len()
        )));
    }
    if row.n_elems() != col.n_elems() || row.n_elems() != quad.len() / quad.m {
        return Err(Error::GridMismatch("bases must share the grid".into()));
    }
    let bw = pair_bandwidth(row.kind, col.kind);
    let n = row.dim.max(col.dim);
    if row.dim != col.dim {
        return Err(Error::InvalidArg("row/column basis dimensions differ".into()));
    }
    let mut out = Banded::zeros(n, bw);
    let rt = row.table(row_deriv);
    let ct = col.table(col_deriv);
    let m = quad.m;
    for e in 0..row.n_elems() {
        let ri = row.local_indices(e);
        let ci = col.local_indices(e);
        for q in 0..m {
            let l = e * m + q;
            let wc = quad.weights[l] * coeff[l];
            if wc == 0.0 {
                continue;
            }
            for &i in &ri {
                let bi = rt[(i, l)];
                if bi == 0.0 {
                    continue;
                }
                for &j in &ci {
                    let bj = ct[(j, l)];
                    if bj != 0.0 {
                        out.add_at(i, j, wc * bi * bj);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Dense variant of [`weighted_1d_banded`].
pub fn weighted_1d_matrix(
    coeff: &[f64],
    row: &BasisTable1D,
    col: &BasisTable1D,
    quad: &QuadAxis,
    row_deriv: bool,
    col_deriv: bool,
) -> Result<Array2<f64>> {
    Ok(weighted_1d_banded(coeff, row, col, quad, row_deriv, col_deriv)?.to_dense())
}

/// One-dimensional stiffness and mass matrices of the hat basis with the
/// homogeneous Dirichlet convention: rows/columns 0 and n have zero
/// off-diagonal entries and a unit diagonal.
pub fn assemble_1d_pair(grid: &Grid1D) -> (Array2<f64>, Array2<f64>) {
    let n = grid.n_elems();
    let np = n + 1;
    let mut l = Array2::zeros((np, np));
    let mut m = Array2::zeros((np, np));
    for e in 0..n {
        let h = grid.h(e);
        // element contributions for hats e, e+1
        l[(e, e)] += 1.0 / h;
        l[(e + 1, e + 1)] += 1.0 / h;
        l[(e, e + 1)] -= 1.0 / h;
        l[(e + 1, e)] -= 1.0 / h;
        m[(e, e)] += h / 3.0;
        m[(e + 1, e + 1)] += h / 3.0;
        m[(e, e + 1)] += h / 6.0;
        m[(e + 1, e)] += h / 6.0;
    }
    for &b in &[0usize, n] {
        for j in 0..np {
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

/// Collocation matrix `(m*n, dim)` mapping basis coefficients to values
/// (or first derivatives) at the quadrature nodes.
pub fn interpolation_matrix(basis: &BasisTable1D, derivative: bool) -> Array2<f64> {
    basis.table(derivative).t().as_standard_layout().to_owned()
}

/// Elementwise L2-orthogonal projection onto broken linears in one
/// direction, acting on quadrature values: `(m*n, m*n)`, block diagonal
/// per element, idempotent and self-adjoint in the `diag(w)` inner product.
pub fn q1_projection_matrix(grid: &Grid1D, quad: &QuadAxis) -> Array2<f64> {
    let n = grid.n_elems();
    let m = quad.m;
    let mn = quad.len();
    let mut p = Array2::zeros((mn, mn));
    for e in 0..n {
        let z0 = grid.node(e);
        let z1 = grid.node(e + 1);
        let c = 0.5 * (z0 + z1);
        let h = z1 - z0;
        // local Vandermonde in {1, (x - c)/h}
        let mut v = Array2::zeros((m, 2));
        let mut w = vec![0.0; m];
        for q in 0..m {
            let l = e * m + q;
            v[(q, 0)] = 1.0;
            v[(q, 1)] = (quad.nodes[l] - c) / h;
            w[q] = quad.weights[l];
        }
        // g = v^T diag(w) v (2x2)
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
        // p_e = v gi v^T diag(w)
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_two_points() {
        let (x, w) = gauss_legendre(2, -1.0, 1.0).unwrap();
        let r = 1.0 / 3.0f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_midpoint() {
        let (x, w) = gauss_legendre(1, 0.0, 2.0).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15);
        assert!((w[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_degree_seven_exact() {
        // m = 4 integrates x^7 over [0, 1] exactly
        let (x, w) = gauss_legendre(4, 0.0, 1.0).unwrap();
        let integral: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(7)).sum();
        assert!((integral - 0.125).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_rejects_unsupported_order() {
        assert!(gauss_legendre(0, 0.0, 1.0).is_err());
        assert!(gauss_legendre(11, 0.0, 1.0).is_err());
        assert!(gauss_legendre(4, 1.0, 1.0).is_err());
    }

    #[test]
    fn gauss_legendre_weights_sum_to_length() {
        for m in 1..=10 {
            let (_, w) = gauss_legendre(m, -0.7, 2.3).unwrap();
            let s: f64 = w.iter().sum();
            assert!((s - 3.0).abs() < 1e-13, "m={m}: {s}");
            assert!(w.iter().all(|&wi| wi > 0.0));
        }
    }

    #[test]
    fn one_dim_pair_uniform_entries() {
        let g = Grid1D::uniform(0.0, 1.0, 8).unwrap();
        let h = 1.0 / 8.0;
        let (l, m) = assemble_1d_pair(&g);
        for i in 1..8 {
            assert!((l[(i, i)] - 2.0 / h).abs() < 1e-13);
            assert!((m[(i, i)] - 2.0 * h / 3.0).abs() < 1e-15);
            if i + 1 < 8 {
                assert!((l[(i, i + 1)] + 1.0 / h).abs() < 1e-13);
                assert!((m[(i, i + 1)] - h / 6.0).abs() < 1e-15);
            }
        }
        // boundary convention
        assert_eq!(l[(0, 0)], 1.0);
        assert_eq!(m[(8, 8)], 1.0);
        assert_eq!(l[(0, 1)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
    }

    #[test]
    fn one_dim_pair_matches_quadrature_on_nonuniform_grid() {
        let g = Grid1D::from_nodes(vec![0.0, 0.3, 0.45, 1.0]).unwrap();
        let quad = QuadratureGrid::new(&CartesianGrid::new(vec![g.clone()]).unwrap(), 4).unwrap();
        let table = BasisTable1D::build(&g, quad.axis(0), BasisKind::HatP1);
        let ones = vec![1.0; quad.axis(0).len()];
        let lq = weighted_1d_matrix(&ones, &table, &table, quad.axis(0), true, true).unwrap();
        let mq = weighted_1d_matrix(&ones, &table, &table, quad.axis(0), false, false).unwrap();
        let (l, m) = assemble_1d_pair(&g);
        let n = g.n_elems();
        for i in 1..n {
            for j in 1..n {
                assert!((l[(i, j)] - lq[(i, j)]).abs() < 1e-14 * (1.0 + l[(i, j)].abs()));
                assert!((m[(i, j)] - mq[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn weighted_matrix_with_linear_coefficient() {
        // coeff = x on [0,1]: interior off-diagonal of the weighted mass
        // matrix is the analytic integral of x * phi_i * phi_{i+1}
        let n = 5;
        let g = Grid1D::uniform(0.0, 1.0, n).unwrap();
        let cart = CartesianGrid::new(vec![g.clone()]).unwrap();
        let quad = QuadratureGrid::new(&cart, 4).unwrap();
        let table = BasisTable1D::build(&g, quad.axis(0), BasisKind::HatP1);
        let coeff: Vec<f64> = quad.axis(0).nodes.clone();
        let w = weighted_1d_matrix(&coeff, &table, &table, quad.axis(0), false, false).unwrap();
        let h = 1.0 / n as f64;
        for i in 1..n - 1 {
            // int over [z_i, z_{i+1}] of x * (z1 - x)/h * (x - z0)/h dx
            let z0 = i as f64 * h;
            let analytic = analytic_x_cross(z0, z0 + h);
            assert!(
                (w[(i, i + 1)] - analytic).abs() < 1e-14,
                "{} vs {analytic}",
                w[(i, i + 1)]
            );
        }
    }

    fn analytic_x_cross(z0: f64, z1: f64) -> f64 {
        // int_z0^z1 x (z1 - x)(x - z0) dx / h^2
        let h = z1 - z0;
        // expand: x (z1 - x)(x - z0) = x ((z1 + z0) x - x^2 - z0 z1)
        let a = z1 + z0;
        let b = z0 * z1;
        let i4 = (z1.powi(4) - z0.powi(4)) / 4.0;
        let i3 = (z1.powi(3) - z0.powi(3)) / 3.0;
        let i2 = (z1.powi(2) - z0.powi(2)) / 2.0;
        (a * i3 - i4 - b * i2) / (h * h)
    }

    #[test]
    fn interpolation_reproduces_basis_span() {
        let n = 4;
        let g = Grid1D::uniform(0.0, 1.0, n).unwrap();
        let cart = CartesianGrid::new(vec![g.clone()]).unwrap();
        let quad = QuadratureGrid::new(&cart, 4).unwrap();
        let hat = BasisTable1D::build(&g, quad.axis(0), BasisKind::HatP1);
        // coefficients of the linear x in the hat basis are the node values
        let coeffs: Vec<f64> = g.nodes().to_vec();
        let v = interpolation_matrix(&hat, false);
        let vals = v.dot(&ndarray::Array1::from_vec(coeffs.clone()));
        for (l, &x) in quad.axis(0).nodes.iter().enumerate() {
            assert!((vals[l] - x).abs() < 1e-14);
        }
        let dv = interpolation_matrix(&hat, true);
        let der = dv.dot(&ndarray::Array1::from_vec(coeffs));
        for l in 0..quad.axis(0).len() {
            assert!((der[l] - 1.0).abs() < 1e-13);
        }
        // P2 reproduces x^2 exactly
        let p2 = BasisTable1D::build(&g, quad.axis(0), BasisKind::P2);
        let mut c2 = vec![0.0; 2 * n + 1];
        for e in 0..n {
            let z0 = g.node(e);
            let z1 = g.node(e + 1);
            c2[2 * e] = z0 * z0;
            c2[2 * e + 1] = (0.5 * (z0 + z1)).powi(2);
            c2[2 * e + 2] = z1 * z1;
        }
        let v2 = interpolation_matrix(&p2, false);
        let vals2 = v2.dot(&ndarray::Array1::from_vec(c2));
        for (l, &x) in quad.axis(0).nodes.iter().enumerate() {
            assert!((vals2[l] - x * x).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_fixes_broken_linears_and_constants() {
        let n = 3;
        let g = Grid1D::from_nodes(vec![0.0, 0.4, 0.7, 1.0]).unwrap();
        let cart = CartesianGrid::new(vec![g.clone()]).unwrap();
        let quad = QuadratureGrid::new(&cart, 4).unwrap();
        let p = q1_projection_matrix(&g, quad.axis(0));
        let mn = quad.axis(0).len();
        // piecewise linear values (different slope per element) are fixed
        let mut f = vec![0.0; mn];
        for l in 0..mn {
            let e = quad.axis(0).elem_of(l);
            let x = quad.axis(0).nodes[l];
            f[l] = (e as f64 + 1.0) * x - 0.3 * e as f64;
        }
        let pf = p.dot(&ndarray::Array1::from_vec(f.clone()));
        for l in 0..mn {
            assert!((pf[l] - f[l]).abs() < 1e-13);
        }
        let ones = vec![1.0; mn];
        let pones = p.dot(&ndarray::Array1::from_vec(ones));
        for l in 0..mn {
            assert!((pones[l] - 1.0).abs() < 1e-13);
        }
        let _ = n;
    }

    #[test]
    fn projection_of_quadratic_on_unit_element() {
        let g = Grid1D::uniform(0.0, 1.0, 1).unwrap();
        let cart = CartesianGrid::new(vec![g.clone()]).unwrap();
        let quad = QuadratureGrid::new(&cart, 4).unwrap();
        let p = q1_projection_matrix(&g, quad.axis(0));
        let f: Vec<f64> = quad.axis(0).nodes.iter().map(|&x| x * x).collect();
        let pf = p.dot(&ndarray::Array1::from_vec(f));
        // L2 best linear fit of x^2 on [0, 1] is x - 1/6
        for (l, &x) in quad.axis(0).nodes.iter().enumerate() {
            assert!((pf[l] - (x - 1.0 / 6.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_is_idempotent_and_w_self_adjoint() {
        let g = Grid1D::from_nodes(vec![-1.0, -0.2, 0.5, 2.0]).unwrap();
        let cart = CartesianGrid::new(vec![g.clone()]).unwrap();
        let quad = QuadratureGrid::new(&cart, 4).unwrap();
        let p = q1_projection_matrix(&g, quad.axis(0));
        let pp = p.dot(&p);
        let mn = quad.axis(0).len();
        for i in 0..mn {
            for j in 0..mn {
                assert!((pp[(i, j)] - p[(i, j)]).abs() < 1e-13);
            }
        }
        // W P symmetric
        let w = &quad.axis(0).weights;
        for i in 0..mn {
            for j in 0..mn {
                let a = w[i] * p[(i, j)];
                let b = w[j] * p[(j, i)];
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn partition_of_unity_of_basis_tables() {
        let g = Grid1D::from_nodes(vec![0.0, 0.25, 0.6, 1.0]).unwrap();
        let cart = CartesianGrid::new(vec![g.clone()]).unwrap();
        let quad = QuadratureGrid::new(&cart, 4).unwrap();
        for kind in [BasisKind::HatP1, BasisKind::P2, BasisKind::BrokenP1] {
            let t = BasisTable1D::build(&g, quad.axis(0), kind);
            for l in 0..quad.axis(0).len() {
                let s: f64 = (0..t.dim).map(|i| t.values[(i, l)]).sum();
                assert!((s - 1.0).abs() < 1e-13, "{kind:?} at node {l}: {s}");
            }
        }
        // dummy function of the broken basis is identically zero
        let b = BasisTable1D::build(&g, quad.axis(0), BasisKind::BrokenP1);
        for l in 0..quad.axis(0).len() {
            assert_eq!(b.values[(0, l)], 0.0);
            assert_eq!(b.derivs[(0, l)], 0.0);
        }
    }

    #[test]
    fn quadrature_nodes_lie_inside_their_elements() {
        let g = Grid1D::from_nodes(vec![0.0, 0.3, 1.2]).unwrap();
        let cart = CartesianGrid::new(vec![g.clone()]).unwrap();
        let quad = QuadratureGrid::new(&cart, 3).unwrap();
        for (l, &x) in quad.axis(0).nodes.iter().enumerate() {
            let e = quad.axis(0).elem_of(l);
            assert!(x > g.node(e) && x < g.node(e + 1));
        }
    }
}
