//! Linear operators in TT format: chains of order-4 cores.

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::tt::vector::{TtVector, DENSE_CAP};

/// A matrix in TT format: `d` cores of shape `(R_{k-1}, m_k, n_k, R_k)`
/// with `R_0 = R_d = 1`. Row modes `m_k`, column modes `n_k`.
#[derive(Debug, Clone)]
pub struct TtMatrix {
    pub(crate) cores: Vec<Array4<f64>>,
}

impl TtMatrix {
    pub fn new(cores: Vec<Array4<f64>>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::InvalidShape("tt matrix needs at least one core".into()));
        }
        if cores[0].dim().0 != 1 || cores[cores.len() - 1].dim().3 != 1 {
            return Err(Error::InvalidShape("boundary ranks must be 1".into()));
        }
        for (k, c) in cores.iter().enumerate() {
            let (r0, m, n, r1) = c.dim();
            if r0 == 0 || m == 0 || n == 0 || r1 == 0 {
                return Err(Error::InvalidShape(format!("core {k} has a zero dimension")));
            }
            if k + 1 < cores.len() && r1 != cores[k + 1].dim().0 {
                return Err(Error::InvalidShape(format!(
                    "rank chain broken between matrix cores {k} and {}",
                    k + 1
                )));
            }
        }
        Ok(TtMatrix { cores })
    }

    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn core(&self, k: usize) -> &Array4<f64> {
        &self.cores[k]
    }

    pub fn cores(&self) -> &[Array4<f64>] {
        &self.cores
    }

    pub fn row_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dim().1).collect()
    }

    pub fn col_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dim().2).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.dim().0).collect();
        r.push(1);
        r
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    /// Identity operator on the given mode sizes.
    pub fn identity(dims: &[usize]) -> Result<Self> {
        let factors = dims.iter().map(|&n| Array2::eye(n)).collect();
        TtMatrix::from_kron(factors)
    }

    /// Rank-1 TT matrix: the Kronecker product of per-direction factors.
    pub fn from_kron(factors: Vec<Array2<f64>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArg("kron construction needs at least one factor".into()));
        }
        let cores = factors
            .into_iter()
            .map(|f| {
                let (m, n) = f.dim();
                f.into_shape_with_order((1, m, n, 1)).expect("reshape")
            })
            .collect();
        TtMatrix::new(cores)
    }

    /// Exact sum of two TT matrices; ranks add.
    pub fn add(&self, other: &TtMatrix) -> Result<Self> {
        if self.row_dims() != other.row_dims() || self.col_dims() != other.col_dims() {
            return Err(Error::ModeMismatch("tt matrix add: mode sizes differ".into()));
        }
        let d = self.len();
        if d == 1 {
            let c = &self.cores[0] + &other.cores[0];
            return TtMatrix::new(vec![c]);
        }
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let x = &self.cores[k];
            let y = &other.cores[k];
            let (xr0, m, n, xr1) = x.dim();
            let (yr0, _, _, yr1) = y.dim();
            let core = if k == 0 {
                let mut c = Array4::zeros((1, m, n, xr1 + yr1));
                c.slice_mut(s![.., .., .., ..xr1]).assign(x);
                c.slice_mut(s![.., .., .., xr1..]).assign(y);
                c
            } else if k == d - 1 {
                let mut c = Array4::zeros((xr0 + yr0, m, n, 1));
                c.slice_mut(s![..xr0, .., .., ..]).assign(x);
                c.slice_mut(s![xr0.., .., .., ..]).assign(y);
                c
            } else {
                let mut c = Array4::zeros((xr0 + yr0, m, n, xr1 + yr1));
                c.slice_mut(s![..xr0, .., .., ..xr1]).assign(x);
                c.slice_mut(s![xr0.., .., .., xr1..]).assign(y);
                c
            };
            cores.push(core);
        }
        TtMatrix::new(cores)
    }

    /// Exact matrix-vector product; result ranks are products `R_k * r_k`.
    /// Combined rank index order: matrix rank slower, vector rank faster.
    pub fn matvec(&self, x: &TtVector) -> Result<TtVector> {
        if self.col_dims() != x.dims() {
            return Err(Error::ModeMismatch(format!(
                "matvec: operator columns {:?} vs vector modes {:?}",
                self.col_dims(),
                x.dims()
            )));
        }
        let d = self.len();
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let a = &self.cores[k];
            let xc = x.core(k);
            let (ar0, m, n, ar1) = a.dim();
            let (xr0, _, xr1) = xc.dim();
            // (R0*m*R1, n) x (n, r0*r1)
            let ap = a.view().permuted_axes([0, 1, 3, 2]); // (R0, m, R1, n)
            let ap = ap.as_standard_layout().to_owned();
            let am = ap.into_shape_with_order((ar0 * m * ar1, n)).expect("reshape");
            let xp = xc.view().permuted_axes([1, 0, 2]); // (n, r0, r1)
            let xp = xp.as_standard_layout().to_owned();
            let xm = xp.into_shape_with_order((n, xr0 * xr1)).expect("reshape");
            let t = am.dot(&xm); // (R0*m*R1, r0*r1)
            let t = t.into_shape_with_order((ar0, m, ar1, xr0, xr1)).expect("reshape");
            let t = t.permuted_axes([0, 3, 1, 2, 4]); // (R0, r0, m, R1, r1)
            let t = t.as_standard_layout().to_owned();
            let core = t
                .into_shape_with_order((ar0 * xr0, m, ar1 * xr1))
                .expect("reshape");
            cores.push(core);
        }
        TtVector::new(cores)
    }

    /// Densify to a `(prod(m), prod(n))` matrix in global-index order.
    pub fn full(&self) -> Result<Array2<f64>> {
        self.full_with_cap(DENSE_CAP)
    }

    pub fn full_with_cap(&self, cap: usize) -> Result<Array2<f64>> {
        let mm: usize = self.row_dims().iter().product();
        let nn: usize = self.col_dims().iter().product();
        if mm.saturating_mul(nn) > cap {
            return Err(Error::SizeCapExceeded { size: mm * nn, cap });
        }
        // acc(M, N, R) accumulated over processed cores
        let mut acc = Array3::<f64>::ones((1, 1, 1));
        for c in &self.cores {
            let (r0, m, n, r1) = c.dim();
            let (am, an, ar) = acc.dim();
            debug_assert_eq!(ar, r0);
            let mut next = Array3::<f64>::zeros((am * m, an * n, r1));
            for i in 0..am {
                for j in 0..an {
                    for b in 0..r0 {
                        let w = acc[(i, j, b)];
                        if w == 0.0 {
                            continue;
                        }
                        for p in 0..m {
                            for q in 0..n {
                                for b1 in 0..r1 {
                                    next[(i * m + p, j * n + q, b1)] += w * c[(b, p, q, b1)];
                                }
                            }
                        }
                    }
                }
            }
            acc = next;
        }
        Ok(acc.index_axis(Axis(2), 0).to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tt::vector::TtVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kron2(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let (am, an) = a.dim();
        let (bm, bn) = b.dim();
        let mut out = Array2::zeros((am * bm, an * bn));
        for i in 0..am {
            for j in 0..an {
                for p in 0..bm {
                    for q in 0..bn {
                        out[(i * bm + p, j * bn + q)] = a[(i, j)] * b[(p, q)];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn kron_full_matches_dense_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = Array2::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0f64));
        let b = Array2::from_shape_fn((2, 5), |_| rng.random_range(-1.0..1.0f64));
        let m = TtMatrix::from_kron(vec![a.clone(), b.clone()]).unwrap();
        let full = m.full().unwrap();
        let expect = kron2(&a, &b);
        for i in 0..full.nrows() {
            for j in 0..full.ncols() {
                assert!((full[(i, j)] - expect[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_matvec_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = TtVector::random_rank(&[3, 4, 5], 3, &mut rng).unwrap();
        let id = TtMatrix::identity(&[3, 4, 5]).unwrap();
        let y = id.matvec(&x).unwrap();
        let fx = x.full().unwrap();
        let fy = y.full().unwrap();
        for (a, b) in fx.iter().zip(fy.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn matvec_on_zero_vector_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a0 = Array2::from_shape_fn((4, 4), |_| rng.random_range(-1.0..1.0f64));
        let a1 = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0f64));
        let a = TtMatrix::from_kron(vec![a0, a1]).unwrap();
        let z = TtVector::zeros(&[4, 3]).unwrap();
        let y = a.matvec(&z).unwrap();
        assert!(y.norm() == 0.0);
    }

    #[test]
    fn matvec_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        // random rank-2 TT matrix at d=3
        let c0 = Array4::from_shape_fn((1, 3, 3, 2), |_| rng.random_range(-1.0..1.0f64));
        let c1 = Array4::from_shape_fn((2, 4, 4, 2), |_| rng.random_range(-1.0..1.0f64));
        let c2 = Array4::from_shape_fn((2, 2, 2, 1), |_| rng.random_range(-1.0..1.0f64));
        let a = TtMatrix::new(vec![c0, c1, c2]).unwrap();
        let x = TtVector::random_rank(&[3, 4, 2], 2, &mut rng).unwrap();
        let y = a.matvec(&x).unwrap();
        // ranks multiply
        assert_eq!(y.ranks(), vec![1, 4, 4, 1]);
        let dense_a = a.full().unwrap();
        let dense_x = x.full().unwrap();
        let expect = dense_a.dot(&dense_x);
        let got = y.full().unwrap();
        let scale = expect.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
        for i in 0..expect.len() {
            assert!((got[i] - expect[i]).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn add_matches_dense_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let a0 = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0f64));
        let a1 = Array2::from_shape_fn((4, 4), |_| rng.random_range(-1.0..1.0f64));
        let b0 = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0f64));
        let b1 = Array2::from_shape_fn((4, 4), |_| rng.random_range(-1.0..1.0f64));
        let a = TtMatrix::from_kron(vec![a0.clone(), a1.clone()]).unwrap();
        let b = TtMatrix::from_kron(vec![b0.clone(), b1.clone()]).unwrap();
        let c = a.add(&b).unwrap();
        let full = c.full().unwrap();
        let expect = &kron2(&a0, &a1) + &kron2(&b0, &b1);
        for i in 0..full.nrows() {
            for j in 0..full.ncols() {
                assert!((full[(i, j)] - expect[(i, j)]).abs() < 1e-13);
            }
        }
    }
}
