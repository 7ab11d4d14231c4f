//! Tensor Train vectors: chains of order-3 cores with exact multilinear
//! algebra and SVD-based rounding.

use ndarray::prelude::*;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{qr_thin, svd_thin, truncation_rank};

/// Default cap on densification size (number of entries).
pub const DENSE_CAP: usize = 1_000_000;

/// Orthogonality state attached to a [`TtVector`].
///
/// `LeftUpTo(k)` means cores `0..k` are left-orthogonal; `RightFrom(k)`
/// means cores `k..d` are right-orthogonal. Operations that modify cores
/// reset the tag to `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orthogonality {
    None,
    LeftUpTo(usize),
    RightFrom(usize),
}

/// A tensor in Tensor Train format: `d` cores of shape `(r_{k-1}, n_k, r_k)`
/// with boundary ranks `r_0 = r_d = 1`.
#[derive(Debug, Clone)]
pub struct TtVector {
    pub(crate) cores: Vec<Array3<f64>>,
    pub(crate) orth: Orthogonality,
}

impl TtVector {
    pub fn new(cores: Vec<Array3<f64>>) -> Result<Self> {
        validate_chain(&cores)?;
        Ok(TtVector { cores, orth: Orthogonality::None })
    }

    /// Number of cores (tensor order).
    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dim().1).collect()
    }

    /// Ranks `r_0..r_d` (length `d + 1`).
    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.dim().0).collect();
        r.push(self.cores.last().map(|c| c.dim().2).unwrap_or(1));
        r
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    pub fn core(&self, k: usize) -> &Array3<f64> {
        &self.cores[k]
    }

    pub fn cores(&self) -> &[Array3<f64>] {
        &self.cores
    }

    pub fn orthogonality(&self) -> Orthogonality {
        self.orth
    }

    /// Rank-1 TT whose full tensor is the outer product of the factors.
    pub fn from_rank1(factors: &[Vec<f64>]) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArg("rank-1 construction needs at least one factor".into()));
        }
        let mut cores = Vec::with_capacity(factors.len());
        for f in factors {
            if f.is_empty() {
                return Err(Error::InvalidArg("empty factor in rank-1 construction".into()));
            }
            cores.push(Array3::from_shape_vec((1, f.len(), 1), f.clone()).expect("shape"));
        }
        TtVector::new(cores)
    }

    /// All-zero tensor as a rank-1 TT.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        TtVector::from_rank1(&dims.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>())
    }

    /// Constant tensor as a rank-1 TT.
    pub fn constant(dims: &[usize], c: f64) -> Result<Self> {
        let mut factors: Vec<Vec<f64>> = dims.iter().map(|&n| vec![1.0; n]).collect();
        for v in factors[0].iter_mut() {
            *v = c;
        }
        TtVector::from_rank1(&factors)
    }

    /// Seeded random TT with all internal ranks equal to `rank`,
    /// entries uniform in [-1, 1).
    pub fn random_rank<R: Rng>(dims: &[usize], rank: usize, rng: &mut R) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArg("empty dimension list".into()));
        }
        let d = dims.len();
        let mut cores = Vec::with_capacity(d);
        for (k, &n) in dims.iter().enumerate() {
            let r0 = if k == 0 { 1 } else { rank };
            let r1 = if k == d - 1 { 1 } else { rank };
            let core = Array3::from_shape_fn((r0, n, r1), |_| rng.random_range(-1.0..1.0));
            cores.push(core);
        }
        TtVector::new(cores)
    }

    /// Multiply by a scalar (absorbed into the first core).
    pub fn scale(mut self, c: f64) -> Self {
        self.cores[0].mapv_inplace(|v| v * c);
        self.orth = Orthogonality::None;
        self
    }

    /// Exact elementwise sum; ranks add.
    pub fn add(&self, other: &TtVector) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::ModeMismatch(format!(
                "add: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let d = self.len();
        if d == 1 {
            let c = &self.cores[0] + &other.cores[0];
            return TtVector::new(vec![c]);
        }
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let x = &self.cores[k];
            let y = &other.cores[k];
            let (xr0, n, xr1) = x.dim();
            let (yr0, _, yr1) = y.dim();
            let core = if k == 0 {
                let mut c = Array3::zeros((1, n, xr1 + yr1));
                c.slice_mut(s![.., .., ..xr1]).assign(x);
                c.slice_mut(s![.., .., xr1..]).assign(y);
                c
            } else if k == d - 1 {
                let mut c = Array3::zeros((xr0 + yr0, n, 1));
                c.slice_mut(s![..xr0, .., ..]).assign(x);
                c.slice_mut(s![xr0.., .., ..]).assign(y);
                c
            } else {
                let mut c = Array3::zeros((xr0 + yr0, n, xr1 + yr1));
                c.slice_mut(s![..xr0, .., ..xr1]).assign(x);
                c.slice_mut(s![xr0.., .., xr1..]).assign(y);
                c
            };
            cores.push(core);
        }
        TtVector::new(cores)
    }

    /// Exact elementwise (Hadamard) product; ranks multiply.
    pub fn hadamard(&self, other: &TtVector) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::ModeMismatch(format!(
                "hadamard: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let d = self.len();
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let x = &self.cores[k];
            let y = &other.cores[k];
            let (xr0, n, xr1) = x.dim();
            let (yr0, _, yr1) = y.dim();
            let mut c = Array3::zeros((xr0 * yr0, n, xr1 * yr1));
            for i in 0..n {
                for ax in 0..xr0 {
                    for bx in 0..xr1 {
                        let xv = x[(ax, i, bx)];
                        if xv == 0.0 {
                            continue;
                        }
                        for ay in 0..yr0 {
                            for by in 0..yr1 {
                                c[(ax * yr0 + ay, i, bx * yr1 + by)] = xv * y[(ay, i, by)];
                            }
                        }
                    }
                }
            }
            cores.push(c);
        }
        TtVector::new(cores)
    }

    /// Exact inner product with the full tensors, never densifies.
    pub fn dot(&self, other: &TtVector) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::ModeMismatch(format!(
                "dot: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        // v(rx, ry) carries the partial contraction
        let mut v = Array2::<f64>::ones((1, 1));
        for (x, y) in self.cores.iter().zip(&other.cores) {
            let (xr0, n, xr1) = x.dim();
            let (yr0, _, yr1) = y.dim();
            // t(ry0, n*xr1) = v^T * x
            let xm = x.view().into_shape_with_order((xr0, n * xr1)).expect("reshape");
            let t = v.t().dot(&xm); // (yr0, n*xr1)
            // rearrange to (xr1, yr0*n) and contract with y (yr0*n, yr1)
            let t3 = t.into_shape_with_order((yr0, n, xr1)).expect("reshape");
            let t3 = t3.permuted_axes([2, 0, 1]); // (xr1, yr0, n)
            let t3 = t3.as_standard_layout().to_owned();
            let tm = t3.into_shape_with_order((xr1, yr0 * n)).expect("reshape");
            let ym = y.view().into_shape_with_order((yr0 * n, yr1)).expect("reshape");
            v = tm.dot(&ym); // (xr1, yr1)
        }
        Ok(v[(0, 0)])
    }

    /// Euclidean norm of the full tensor, computed via orthogonalization.
    pub fn norm(&self) -> f64 {
        match self.orth {
            Orthogonality::RightFrom(1) => frob(&self.cores[0]),
            Orthogonality::LeftUpTo(k) if k + 1 == self.len() => {
                frob(&self.cores[self.len() - 1])
            }
            _ => {
                let mut x = self.clone();
                if x.right_orthogonalize().is_err() {
                    // fall back to the dot product route
                    return self.dot(self).map(|v| v.max(0.0).sqrt()).unwrap_or(f64::NAN);
                }
                frob(&x.cores[0])
            }
        }
    }

    /// QR sweep making cores `0..d-1` left-orthogonal; the last core
    /// absorbs the remaining factor. Ranks can only shrink.
    pub fn left_orthogonalize(&mut self) -> Result<()> {
        let d = self.len();
        for k in 0..d.saturating_sub(1) {
            let (r0, n, r1) = self.cores[k].dim();
            let m = self.cores[k]
                .view()
                .into_shape_with_order((r0 * n, r1))
                .expect("reshape")
                .to_owned();
            let (q, r) = qr_thin(m)?;
            let rk = q.ncols();
            self.cores[k] = q.into_shape_with_order((r0, n, rk)).expect("reshape");
            let (s0, sn, s1) = self.cores[k + 1].dim();
            let next = self.cores[k + 1]
                .view()
                .into_shape_with_order((s0, sn * s1))
                .expect("reshape")
                .to_owned();
            self.cores[k + 1] =
                r.dot(&next).into_shape_with_order((rk, sn, s1)).expect("reshape");
        }
        self.orth = Orthogonality::LeftUpTo(d.saturating_sub(1));
        Ok(())
    }

    /// LQ sweep making cores `1..d` right-orthogonal; the first core
    /// absorbs the remaining factor.
    pub fn right_orthogonalize(&mut self) -> Result<()> {
        let d = self.len();
        for k in (1..d).rev() {
            let (r0, n, r1) = self.cores[k].dim();
            let m = self.cores[k]
                .view()
                .into_shape_with_order((r0, n * r1))
                .expect("reshape")
                .t()
                .to_owned();
            let (q, r) = qr_thin(m)?; // m^T = q r, so m = r^T q^T
            let rk = q.ncols();
            self.cores[k] = q
                .t()
                .as_standard_layout()
                .to_owned()
                .into_shape_with_order((rk, n, r1))
                .expect("reshape");
            let (s0, sn, s1) = self.cores[k - 1].dim();
            debug_assert_eq!(s1, r0);
            let prev = self.cores[k - 1]
                .view()
                .into_shape_with_order((s0 * sn, s1))
                .expect("reshape")
                .to_owned();
            self.cores[k - 1] = prev
                .dot(&r.t())
                .into_shape_with_order((s0, sn, rk))
                .expect("reshape");
        }
        self.orth = Orthogonality::RightFrom(1.min(d));
        Ok(())
    }

    /// SVD rounding: `|full(x) - full(round(x, tol))| <= tol * |full(x)|`.
    ///
    /// The truncation budget is split equally over the `d - 1` internal
    /// bonds (`tol / sqrt(d-1)` per core) so the global bound holds.
    /// `tol = 0` returns an orthogonalized copy, trimming only exact zero
    /// singular values. Ranks never increase.
    pub fn round(&self, rel_tol: f64) -> Result<Self> {
        let d = self.len();
        let mut x = self.clone();
        x.right_orthogonalize()?;
        let nrm = frob(&x.cores[0]);
        if nrm == 0.0 {
            return TtVector::zeros(&self.dims());
        }
        if d == 1 {
            return Ok(x);
        }
        let budget = rel_tol * nrm / ((d - 1) as f64).sqrt();
        for k in 0..d - 1 {
            let (r0, n, r1) = x.cores[k].dim();
            let m = x.cores[k]
                .view()
                .into_shape_with_order((r0 * n, r1))
                .expect("reshape")
                .to_owned();
            let (u, s, vt) = svd_thin(m)?;
            let rk = truncation_rank(&s, budget).min(s.len());
            let u = u.slice(s![.., ..rk]).to_owned();
            x.cores[k] = u.into_shape_with_order((r0, n, rk)).expect("reshape");
            let mut carry = vt.slice(s![..rk, ..]).to_owned();
            for (i, mut row) in carry.rows_mut().into_iter().enumerate() {
                row.mapv_inplace(|v| v * s[i]);
            }
            let (s0, sn, s1) = x.cores[k + 1].dim();
            let next = x.cores[k + 1]
                .view()
                .into_shape_with_order((s0, sn * s1))
                .expect("reshape")
                .to_owned();
            x.cores[k + 1] =
                carry.dot(&next).into_shape_with_order((rk, sn, s1)).expect("reshape");
        }
        x.orth = Orthogonality::LeftUpTo(d - 1);
        Ok(x)
    }

    /// Densify in the global-index order (first mode slowest).
    pub fn full(&self) -> Result<Array1<f64>> {
        self.full_with_cap(DENSE_CAP)
    }

    pub fn full_with_cap(&self, cap: usize) -> Result<Array1<f64>> {
        let size: usize = self.dims().iter().product();
        if size > cap {
            return Err(Error::SizeCapExceeded { size, cap });
        }
        let mut acc = Array2::<f64>::ones((1, 1));
        for c in &self.cores {
            let (r0, n, r1) = c.dim();
            let cm = c.view().into_shape_with_order((r0, n * r1)).expect("reshape");
            let t = acc.dot(&cm); // (prod, n*r1)
            let rows = t.nrows() * n;
            acc = t.into_shape_with_order((rows, r1)).expect("reshape");
        }
        Ok(acc.index_axis(Axis(1), 0).to_owned())
    }

    /// Evaluate a single entry.
    pub fn eval(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.len());
        let mut v: Array1<f64> = Array1::ones(1);
        for (c, &i) in self.cores.iter().zip(idx) {
            let slice = c.index_axis(Axis(1), i); // (r0, r1)
            v = slice.t().dot(&v);
        }
        v[0]
    }
}

pub(crate) fn frob(a: &Array3<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn validate_chain(cores: &[Array3<f64>]) -> Result<()> {
    if cores.is_empty() {
        return Err(Error::InvalidShape("tensor train needs at least one core".into()));
    }
    if cores[0].dim().0 != 1 {
        return Err(Error::InvalidShape(format!("leading rank {} != 1", cores[0].dim().0)));
    }
    if cores[cores.len() - 1].dim().2 != 1 {
        return Err(Error::InvalidShape(format!(
            "trailing rank {} != 1",
            cores[cores.len() - 1].dim().2
        )));
    }
    for (k, c) in cores.iter().enumerate() {
        let (r0, n, r1) = c.dim();
        if n == 0 || r0 == 0 || r1 == 0 {
            return Err(Error::InvalidShape(format!(
                "core {k} has a zero dimension: ({r0}, {n}, {r1})"
            )));
        }
        if k + 1 < cores.len() && r1 != cores[k + 1].dim().0 {
            return Err(Error::InvalidShape(format!(
                "rank chain broken between cores {k} and {}: {} vs {}",
                k + 1,
                r1,
                cores[k + 1].dim().0
            )));
        }
    }
    Ok(())
}

/// Norm of the elementwise difference `|x - y|` without densifying.
pub fn diff_norm(x: &TtVector, y: &TtVector) -> Result<f64> {
    Ok(x.add(&y.clone().scale(-1.0))?.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_of(factors: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![1.0];
        for f in factors {
            let mut next = Vec::with_capacity(out.len() * f.len());
            for o in &out {
                for v in f {
                    next.push(o * v);
                }
            }
            out = next;
        }
        out
    }

    #[test]
    fn rank1_outer_product() {
        let x = TtVector::from_rank1(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let full = x.full().unwrap();
        assert_eq!(full.to_vec(), vec![3.0, 4.0, 6.0, 8.0]);
        assert!(x.ranks().iter().all(|&r| r == 1));
    }

    #[test]
    fn rank1_single_mode_scalar() {
        let x = TtVector::from_rank1(&[vec![5.0]]).unwrap();
        assert_eq!(x.full().unwrap().to_vec(), vec![5.0]);
    }

    #[test]
    fn rank1_sin_grid() {
        let n = 8usize;
        let f: Vec<f64> = (0..=n).map(|i| (std::f64::consts::PI * i as f64 / n as f64).sin()).collect();
        let factors = vec![f.clone(), f.clone(), f.clone()];
        let x = TtVector::from_rank1(&factors).unwrap();
        let full = x.full().unwrap();
        let dense = dense_of(&factors);
        for (a, b) in full.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-14);
        }
        // entry access agrees
        assert!((x.eval(&[1, 2, 3]) - f[1] * f[2] * f[3]).abs() < 1e-14);
    }

    #[test]
    fn rank1_rejects_empty() {
        assert!(TtVector::from_rank1(&[]).is_err());
        assert!(TtVector::from_rank1(&[vec![1.0], vec![]]).is_err());
    }

    #[test]
    fn add_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = TtVector::random_rank(&[3, 4, 5], 3, &mut rng).unwrap();
        let z = TtVector::zeros(&[3, 4, 5]).unwrap();
        let y = x.add(&z).unwrap();
        let fx = x.full().unwrap();
        let fy = y.full().unwrap();
        for (a, b) in fx.iter().zip(fy.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn add_matches_dense_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = TtVector::random_rank(&[4, 4, 4], 1, &mut rng).unwrap();
        let y = TtVector::random_rank(&[4, 4, 4], 1, &mut rng).unwrap();
        let z = x.add(&y).unwrap();
        assert!(z.max_rank() <= 2);
        let fz = z.full().unwrap();
        let fx = x.full().unwrap();
        let fy = y.full().unwrap();
        for i in 0..fz.len() {
            assert!((fz[i] - fx[i] - fy[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn add_cancellation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = TtVector::random_rank(&[3, 5, 4], 3, &mut rng).unwrap();
        let z = x.add(&x.clone().scale(-1.0)).unwrap();
        assert!(z.norm() <= 1e-13 * x.norm());
    }

    #[test]
    fn add_rejects_mode_mismatch() {
        let x = TtVector::zeros(&[2, 3]).unwrap();
        let y = TtVector::zeros(&[2, 4]).unwrap();
        assert!(matches!(x.add(&y), Err(crate::error::Error::ModeMismatch(_))));
    }

    #[test]
    fn hadamard_with_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = TtVector::random_rank(&[3, 4], 2, &mut rng).unwrap();
        let ones = TtVector::constant(&[3, 4], 1.0).unwrap();
        let y = x.hadamard(&ones).unwrap();
        let fx = x.full().unwrap();
        let fy = y.full().unwrap();
        for (a, b) in fx.iter().zip(fy.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn hadamard_rank1_times_rank1() {
        let a = vec![1.0, 2.0, -1.0];
        let b = vec![0.5, 3.0, 2.0];
        let x = TtVector::from_rank1(&[a.clone(), b.clone()]).unwrap();
        let c = vec![2.0, -1.0, 4.0];
        let d = vec![1.0, 1.5, -2.0];
        let y = TtVector::from_rank1(&[c.clone(), d.clone()]).unwrap();
        let z = x.hadamard(&y).unwrap();
        assert!(z.ranks().iter().all(|&r| r == 1));
        let ab: Vec<f64> = a.iter().zip(&c).map(|(u, v)| u * v).collect();
        let cd: Vec<f64> = b.iter().zip(&d).map(|(u, v)| u * v).collect();
        let expect = TtVector::from_rank1(&[ab, cd]).unwrap().full().unwrap();
        let got = z.full().unwrap();
        for (a, b) in got.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn hadamard_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = TtVector::random_rank(&[4, 4, 4], 2, &mut rng).unwrap();
        let y = TtVector::random_rank(&[4, 4, 4], 3, &mut rng).unwrap();
        let z = x.hadamard(&y).unwrap();
        let fx = x.full().unwrap();
        let fy = y.full().unwrap();
        let fz = z.full().unwrap();
        for i in 0..fz.len() {
            assert!((fz[i] - fx[i] * fy[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dot_separates_over_factors() {
        let a = vec![1.0, 2.0];
        let b = vec![3.0, -1.0, 0.5];
        let c = vec![-2.0, 1.0];
        let d = vec![1.0, 4.0, 2.0];
        let x = TtVector::from_rank1(&[a.clone(), b.clone()]).unwrap();
        let y = TtVector::from_rank1(&[c.clone(), d.clone()]).unwrap();
        let ac: f64 = a.iter().zip(&c).map(|(u, v)| u * v).sum();
        let bd: f64 = b.iter().zip(&d).map(|(u, v)| u * v).sum();
        assert!((x.dot(&y).unwrap() - ac * bd).abs() < 1e-14);
    }

    #[test]
    fn dot_is_norm_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = TtVector::random_rank(&[5, 3, 4], 3, &mut rng).unwrap();
        let d = x.dot(&x).unwrap();
        assert!(d >= 0.0);
        let n = x.norm();
        assert!((d - n * n).abs() <= 1e-12 * d.max(1e-300));
    }

    #[test]
    fn dot_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = TtVector::random_rank(&[5, 5, 5, 5], 3, &mut rng).unwrap();
        let y = TtVector::random_rank(&[5, 5, 5, 5], 3, &mut rng).unwrap();
        let fx = x.full().unwrap();
        let fy = y.full().unwrap();
        let dense: f64 = fx.iter().zip(fy.iter()).map(|(a, b)| a * b).sum();
        let tt = x.dot(&y).unwrap();
        assert!((tt - dense).abs() <= 1e-12 * dense.abs().max(1.0));
    }

    #[test]
    fn norm_of_zero_and_unit() {
        assert_eq!(TtVector::zeros(&[3, 4]).unwrap().norm(), 0.0);
        let e = TtVector::from_rank1(&[vec![1.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn norm_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = TtVector::random_rank(&[6, 6, 6], 4, &mut rng).unwrap();
        let dense = x.full().unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((x.norm() - dense).abs() <= 1e-12 * dense);
    }

    #[test]
    fn round_zero_tolerance_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = TtVector::random_rank(&[4, 5, 6], 4, &mut rng).unwrap();
        let y = x.round(0.0).unwrap();
        let fx = x.full().unwrap();
        let fy = y.full().unwrap();
        let nx = x.norm();
        for i in 0..fx.len() {
            assert!((fx[i] - fy[i]).abs() <= 1e-13 * nx);
        }
        assert!(y.ranks().iter().zip(x.ranks()).all(|(a, b)| *a <= b));
    }

    #[test]
    fn round_drops_dominated_term() {
        let a = TtVector::from_rank1(&[vec![1.0, 0.5, 0.25], vec![1.0, -1.0]]).unwrap();
        let b = TtVector::from_rank1(&[vec![0.3, 0.1, -0.2], vec![0.7, 0.4]]).unwrap();
        let x = a.add(&b.scale(1e-12)).unwrap();
        let y = x.round(1e-6).unwrap();
        assert_eq!(y.max_rank(), 1);
    }

    #[test]
    fn round_respects_relative_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = TtVector::random_rank(&[8, 8, 8], 8, &mut rng).unwrap();
        let tol = 1e-3;
        let y = x.round(tol).unwrap();
        let fx = x.full().unwrap();
        let fy = y.full().unwrap();
        let err = fx
            .iter()
            .zip(fy.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err <= tol * x.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn full_honours_size_cap() {
        let x = TtVector::zeros(&[101, 101, 101]).unwrap();
        match x.full_with_cap(1_000_000) {
            Err(crate::error::Error::SizeCapExceeded { .. }) => {}
            other => panic!("expected size cap error, got {other:?}"),
        }
    }

    #[test]
    fn orthogonality_tags_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = TtVector::random_rank(&[4, 5, 4, 3], 3, &mut rng).unwrap();
        x.left_orthogonalize().unwrap();
        assert_eq!(x.orthogonality(), Orthogonality::LeftUpTo(3));
        for k in 0..3 {
            let (r0, n, r1) = x.core(k).dim();
            let m = x.core(k).view().into_shape_with_order((r0 * n, r1)).unwrap().to_owned();
            let g = m.t().dot(&m);
            for i in 0..r1 {
                for j in 0..r1 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g[(i, j)] - want).abs() < 1e-12);
                }
            }
        }
        x.right_orthogonalize().unwrap();
        assert_eq!(x.orthogonality(), Orthogonality::RightFrom(1));
        for k in 1..4 {
            let (r0, n, r1) = x.core(k).dim();
            let m = x.core(k).view().into_shape_with_order((r0, n * r1)).unwrap().to_owned();
            let g = m.dot(&m.t());
            for i in 0..r0 {
                for j in 0..r0 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g[(i, j)] - want).abs() < 1e-12);
                }
            }
        }
    }
}
