//! Block TT vectors: a TT chain where one designated core carries an extra
//! component index, used to represent vector fields such as the flux.

use ndarray::prelude::*;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{svd_thin, truncation_rank};
use crate::tt::vector::{validate_chain, TtVector};

/// TT vector over modes `dims` with one block core carrying a component
/// index `s in 0..ncomp`. The block core at `block_pos` is stored with its
/// middle axis fused as `(i, s)`, `s` fastest.
#[derive(Debug, Clone)]
pub struct BlockTtVector {
    cores: Vec<Array3<f64>>,
    dims: Vec<usize>,
    block_pos: usize,
    ncomp: usize,
}

/// Outcome of one block-index relocation.
#[derive(Debug, Clone, Copy)]
pub struct MoveReport {
    pub new_rank: usize,
    pub discarded_fraction: f64,
}

impl BlockTtVector {
    pub fn new(cores: Vec<Array3<f64>>, dims: Vec<usize>, block_pos: usize, ncomp: usize) -> Result<Self> {
        if block_pos >= dims.len() {
            return Err(Error::InvalidArg("block position out of range".into()));
        }
        if ncomp == 0 {
            return Err(Error::InvalidArg("component count must be positive".into()));
        }
        validate_chain(&cores)?;
        for (k, c) in cores.iter().enumerate() {
            let want = if k == block_pos { dims[k] * ncomp } else { dims[k] };
            if c.dim().1 != want {
                return Err(Error::InvalidShape(format!(
                    "block tt core {k}: middle dim {} != {want}",
                    c.dim().1
                )));
            }
        }
        Ok(BlockTtVector { cores, dims, block_pos, ncomp })
    }

    /// Seeded random block TT with the component index in core 0.
    pub fn random_rank<R: Rng>(
        dims: &[usize],
        ncomp: usize,
        rank: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = dims.len();
        let mut cores = Vec::with_capacity(d);
        for (k, &n) in dims.iter().enumerate() {
            let mode = if k == 0 { n * ncomp } else { n };
            let r0 = if k == 0 { 1 } else { rank };
            let r1 = if k == d - 1 { 1 } else { rank };
            cores.push(Array3::from_shape_fn((r0, mode, r1), |_| rng.random_range(-1.0..1.0)));
        }
        BlockTtVector::new(cores, dims.to_vec(), 0, ncomp)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn block_pos(&self) -> usize {
        self.block_pos
    }

    pub fn cores(&self) -> &[Array3<f64>] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &Array3<f64> {
        &self.cores[k]
    }

    pub(crate) fn core_mut(&mut self, k: usize) -> &mut Array3<f64> {
        &mut self.cores[k]
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.dim().0).collect();
        r.push(1);
        r
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    /// Extract component `s` as a plain TT vector.
    pub fn component(&self, s: usize) -> Result<TtVector> {
        if s >= self.ncomp {
            return Err(Error::InvalidArg(format!("component {s} >= {}", self.ncomp)));
        }
        let mut cores = self.cores.clone();
        let bc = &self.cores[self.block_pos];
        let (r0, _, r1) = bc.dim();
        let n = self.dims[self.block_pos];
        let mut plain = Array3::zeros((r0, n, r1));
        for a in 0..r0 {
            for i in 0..n {
                for b in 0..r1 {
                    plain[(a, i, b)] = bc[(a, i * self.ncomp + s, b)];
                }
            }
        }
        cores[self.block_pos] = plain;
        TtVector::new(cores)
    }

    /// View the block TT as a plain TT over fused modes: the block core's
    /// mode becomes `n_k * ncomp`. Entrywise norms and differences of block
    /// TTs with the block at the same position agree with this view.
    pub fn fused(&self) -> TtVector {
        TtVector { cores: self.cores.clone(), orth: crate::tt::vector::Orthogonality::None }
    }

    pub fn norm(&self) -> f64 {
        self.fused().norm()
    }

    /// Make cores after `block_pos` right-orthogonal and cores before it
    /// left-orthogonal (the solver frame convention).
    pub fn orthogonalize_around_block(&mut self) -> Result<()> {
        let mut fused = self.fused();
        // right-orthogonalize down to the block core
        let d = self.len();
        for k in ((self.block_pos + 1)..d).rev() {
            right_step(&mut fused.cores, k)?;
        }
        for k in 0..self.block_pos {
            left_step(&mut fused.cores, k)?;
        }
        self.cores = fused.cores;
        Ok(())
    }

    /// Relocate the component index one core to the right via the SVD split.
    /// `rel_tol` is the Frobenius truncation threshold relative to the
    /// stacked matrix.
    pub fn move_block_right(&mut self, rel_tol: f64) -> Result<MoveReport> {
        let p = self.block_pos;
        if p + 1 >= self.len() {
            return Err(Error::InvalidArg("cannot move block index past the last core".into()));
        }
        let nc = self.ncomp;
        let n = self.dims[p];
        let (r0, _, r1) = self.cores[p].dim();
        // stacked matrix T[(a0, i), (s, a1)]: this is exactly the fused layout
        let t = self.cores[p]
            .view()
            .into_shape_with_order((r0 * n, nc * r1))
            .expect("reshape")
            .to_owned();
        let tnorm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (u, sv, vt) = svd_thin(t)?;
        let rk = truncation_rank(&sv, rel_tol * tnorm).min(sv.len());
        let kept: f64 = sv.iter().take(rk).map(|v| v * v).sum();
        let discarded = (tnorm * tnorm - kept).max(0.0).sqrt();
        let u = u.slice(s![.., ..rk]).to_owned();
        self.cores[p] = u.into_shape_with_order((r0, n, rk)).expect("reshape");
        // carry = diag(s) vt, shape (rk, nc, r1)
        let mut carry = vt.slice(s![..rk, ..]).to_owned();
        for (i, mut row) in carry.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|v| v * sv[i]);
        }
        let carry = carry.into_shape_with_order((rk, nc, r1)).expect("reshape");
        // absorb into the next core: t_next(rk, i1, s, r2)
        let next = &self.cores[p + 1];
        let (s0, n1, s1) = next.dim();
        debug_assert_eq!(s0, r1);
        let cm = carry
            .into_shape_with_order((rk * nc, r1))
            .expect("reshape");
        let nm = next.view().into_shape_with_order((r1, n1 * s1)).expect("reshape");
        let t = cm.dot(&nm); // (rk*nc, n1*s1)
        let t = t.into_shape_with_order((rk, nc, n1, s1)).expect("reshape");
        let t = t.permuted_axes([0, 2, 1, 3]); // (rk, n1, nc, s1)
        let t = t.as_standard_layout().to_owned();
        self.cores[p + 1] = t.into_shape_with_order((rk, n1 * nc, s1)).expect("reshape");
        self.block_pos = p + 1;
        Ok(MoveReport { new_rank: rk, discarded_fraction: if tnorm > 0.0 { discarded / tnorm } else { 0.0 } })
    }

    /// Relocate the component index one core to the left.
    pub fn move_block_left(&mut self, rel_tol: f64) -> Result<MoveReport> {
        let p = self.block_pos;
        if p == 0 {
            return Err(Error::InvalidArg("cannot move block index before the first core".into()));
        }
        let nc = self.ncomp;
        let n = self.dims[p];
        let (r0, _, r1) = self.cores[p].dim();
        // T[(a0, s), (i, a1)] requires a permutation copy
        let bc = &self.cores[p];
        let mut t = Array2::zeros((r0 * nc, n * r1));
        for a in 0..r0 {
            for i in 0..n {
                for s_ in 0..nc {
                    for b in 0..r1 {
                        t[(a * nc + s_, i * r1 + b)] = bc[(a, i * nc + s_, b)];
                    }
                }
            }
        }
        let tnorm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (u, sv, vt) = svd_thin(t)?;
        let rk = truncation_rank(&sv, rel_tol * tnorm).min(sv.len());
        let kept: f64 = sv.iter().take(rk).map(|v| v * v).sum();
        let discarded = (tnorm * tnorm - kept).max(0.0).sqrt();
        let vt = vt.slice(s![..rk, ..]).to_owned();
        self.cores[p] = vt.into_shape_with_order((rk, n, r1)).expect("reshape");
        // carry = u diag(s), shape (r0, nc, rk)
        let mut carry = u.slice(s![.., ..rk]).to_owned();
        for (j, mut col) in carry.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| v * sv[j]);
        }
        let carry = carry.into_shape_with_order((r0, nc, rk)).expect("reshape");
        let prev = &self.cores[p - 1];
        let (q0, m0, q1) = prev.dim();
        debug_assert_eq!(q1, r0);
        let pm = prev.view().into_shape_with_order((q0 * m0, q1)).expect("reshape");
        let cm = carry.into_shape_with_order((r0, nc * rk)).expect("reshape");
        let t = pm.dot(&cm); // (q0*m0, nc*rk)
        let t = t.into_shape_with_order((q0, m0, nc, rk)).expect("reshape");
        let t = t.as_standard_layout().to_owned();
        self.cores[p - 1] = t.into_shape_with_order((q0, m0 * nc, rk)).expect("reshape");
        self.block_pos = p - 1;
        Ok(MoveReport { new_rank: rk, discarded_fraction: if tnorm > 0.0 { discarded / tnorm } else { 0.0 } })
    }

    /// Move the component index to an arbitrary core.
    pub fn move_block_to(&mut self, pos: usize, rel_tol: f64) -> Result<()> {
        if pos >= self.len() {
            return Err(Error::InvalidArg("target core out of range".into()));
        }
        while self.block_pos < pos {
            self.move_block_right(rel_tol)?;
        }
        while self.block_pos > pos {
            self.move_block_left(rel_tol)?;
        }
        Ok(())
    }
}

/// One left-orthogonalization step on raw cores (QR of core `k`, absorb into `k+1`).
pub(crate) fn left_step(cores: &mut [Array3<f64>], k: usize) -> Result<()> {
    let (r0, n, r1) = cores[k].dim();
    let m = cores[k]
        .view()
        .into_shape_with_order((r0 * n, r1))
        .expect("reshape")
        .to_owned();
    let (q, r) = crate::linalg::qr_thin(m)?;
    let rk = q.ncols();
    cores[k] = q.into_shape_with_order((r0, n, rk)).expect("reshape");
    let (s0, sn, s1) = cores[k + 1].dim();
    let next = cores[k + 1]
        .view()
        .into_shape_with_order((s0, sn * s1))
        .expect("reshape")
        .to_owned();
    cores[k + 1] = r.dot(&next).into_shape_with_order((rk, sn, s1)).expect("reshape");
    Ok(())
}

/// One right-orthogonalization step on raw cores (LQ of core `k`, absorb into `k-1`).
pub(crate) fn right_step(cores: &mut [Array3<f64>], k: usize) -> Result<()> {
    let (r0, n, r1) = cores[k].dim();
    let m = cores[k]
        .view()
        .into_shape_with_order((r0, n * r1))
        .expect("reshape")
        .t()
        .to_owned();
    let (q, r) = crate::linalg::qr_thin(m)?;
    let rk = q.ncols();
    cores[k] = q
        .t()
        .as_standard_layout()
        .to_owned()
        .into_shape_with_order((rk, n, r1))
        .expect("reshape");
    let (s0, sn, s1) = cores[k - 1].dim();
    debug_assert_eq!(s1, r0);
    let prev = cores[k - 1]
        .view()
        .into_shape_with_order((s0 * sn, s1))
        .expect("reshape")
        .to_owned();
    cores[k - 1] = prev.dot(&r.t()).into_shape_with_order((s0, sn, rk)).expect("reshape");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn slice_fulls(x: &BlockTtVector) -> Vec<Vec<f64>> {
        (0..x.ncomp())
            .map(|s| x.component(s).unwrap().full().unwrap().to_vec())
            .collect()
    }

    #[test]
    fn move_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut x = BlockTtVector::random_rank(&[3, 4, 3], 3, 2, &mut rng).unwrap();
        let before = slice_fulls(&x);
        let scale: f64 = before
            .iter()
            .flat_map(|v| v.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        x.move_block_right(0.0).unwrap();
        assert_eq!(x.block_pos(), 1);
        x.move_block_left(0.0).unwrap();
        assert_eq!(x.block_pos(), 0);
        let after = slice_fulls(&x);
        for (a, b) in before.iter().zip(&after) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-13 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn identical_components_collapse_to_rank_one() {
        // block core whose slices are identical for every component
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let base = crate::tt::TtVector::random_rank(&[4, 3], 1, &mut rng).unwrap();
        let ncomp = 3;
        let (r0, n, r1) = base.core(0).dim();
        let mut blk = ndarray::Array3::zeros((r0, n * ncomp, r1));
        for i in 0..n {
            for s_ in 0..ncomp {
                for b in 0..r1 {
                    blk[(0, i * ncomp + s_, b)] = base.core(0)[(0, i, b)];
                }
            }
        }
        let cores = vec![blk, base.core(1).clone()];
        let mut x = BlockTtVector::new(cores, vec![4, 3], 0, ncomp).unwrap();
        // the component independence factors out up to round-off
        let rep = x.move_block_right(1e-14).unwrap();
        assert_eq!(rep.new_rank, 1);
    }

    #[test]
    fn truncated_move_respects_frobenius_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut x = BlockTtVector::random_rank(&[4, 4, 4], 3, 5, &mut rng).unwrap();
        let before = slice_fulls(&x);
        let tol = 1e-3;
        let rep = x.move_block_right(tol).unwrap();
        let after = slice_fulls(&x);
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for (a, b) in before.iter().zip(&after) {
            for (u, v) in a.iter().zip(b) {
                err2 += (u - v) * (u - v);
                norm2 += u * u;
            }
        }
        assert!(err2.sqrt() <= tol * norm2.sqrt() * (1.0 + 1e-10));
        assert!(rep.discarded_fraction <= tol * (1.0 + 1e-10));
    }

    #[test]
    fn move_past_ends_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let mut x = BlockTtVector::random_rank(&[3, 3], 2, 2, &mut rng).unwrap();
        assert!(x.move_block_left(0.0).is_err());
        x.move_block_right(0.0).unwrap();
        assert!(x.move_block_right(0.0).is_err());
    }
}
