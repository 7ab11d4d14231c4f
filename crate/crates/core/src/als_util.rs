//! Interface contractions shared by the alternating solvers.

use ndarray::prelude::*;

use crate::linalg::Banded;

/// Extend a frame-vs-TT interface one core to the right:
/// `out(a1, g1) = sum_{a0, i, g0} frame(a0, i, a1) prev(a0, g0) core(g0, i, g1)`.
pub(crate) fn grow_vec_interface_left(
    prev: &Array2<f64>,
    frame: &Array3<f64>,
    core: &Array3<f64>,
) -> Array2<f64> {
    let (a0, g0) = prev.dim();
    let (_, n, a1) = frame.dim();
    let (_, _, g1) = core.dim();
    let xm = frame.view().into_shape_with_order((a0, n * a1)).expect("reshape");
    let t = prev.t().dot(&xm); // (g0, n*a1)
    let t = t.into_shape_with_order((g0, n, a1)).expect("reshape");
    let t = t.permuted_axes([2, 0, 1]).as_standard_layout().to_owned(); // (a1, g0, n)
    let tm = t.into_shape_with_order((a1, g0 * n)).expect("reshape");
    let cm = core.view().into_shape_with_order((g0 * n, g1)).expect("reshape");
    tm.dot(&cm)
}

/// Mirror of [`grow_vec_interface_left`]:
/// `out(a0, g0) = sum_{a1, i, g1} frame(a0, i, a1) prev(a1, g1) core(g0, i, g1)`.
pub(crate) fn grow_vec_interface_right(
    prev: &Array2<f64>,
    frame: &Array3<f64>,
    core: &Array3<f64>,
) -> Array2<f64> {
    let (a1, g1) = prev.dim();
    let (a0, n, _) = frame.dim();
    let (g0, _, _) = core.dim();
    let cm = core.view().into_shape_with_order((g0 * n, g1)).expect("reshape");
    let t = cm.dot(&prev.t()); // (g0*n, a1)
    let t = t.into_shape_with_order((g0, n * a1)).expect("reshape");
    let xp = frame.view().permuted_axes([1, 2, 0]).as_standard_layout().to_owned(); // (n, a1, a0)
    let xm = xp.into_shape_with_order((n * a1, a0)).expect("reshape");
    t.dot(&xm).t().as_standard_layout().to_owned() // (a0, g0)
}

/// Extend a banded-operator chain interface to the right:
/// `out(xr', b1, xc') = sum prev(xr, b0, xc) row(xr, i, xr') W[b0*B1+b1](i, j) col(xc, j, xc')`.
pub(crate) fn grow_banded_interface_left(
    prev: &Array3<f64>,
    row: &Array3<f64>,
    w: &[Banded],
    wr0: usize,
    wr1: usize,
    col: &Array3<f64>,
) -> Array3<f64> {
    let (xr, b0, xc) = prev.dim();
    debug_assert_eq!(b0, wr0);
    let (_, n, xr1) = row.dim();
    let (_, nj, xc1) = col.dim();
    // t1(i, xr1, b0, xc) = sum_xr row(xr, i, xr1) prev(xr, b0, xc)
    let rm = row.view().into_shape_with_order((xr, n * xr1)).expect("reshape");
    let pm = prev.view().into_shape_with_order((xr, b0 * xc)).expect("reshape");
    let t1 = rm.t().dot(&pm); // (n*xr1, b0*xc)
    let t1 = t1.into_shape_with_order((n, xr1, b0, xc)).expect("reshape");
    let t1 = t1.permuted_axes([2, 0, 1, 3]).as_standard_layout().to_owned(); // (b0, i, xr1, xc)
    // t2(b1, j, xr1, xc) via banded transpose-apply per channel pair
    let mut t2 = Array4::<f64>::zeros((wr1, nj, xr1, xc));
    for c0 in 0..wr0 {
        let x2 = t1
            .slice(s![c0, .., .., ..])
            .into_shape_with_order((n, xr1 * xc))
            .expect("reshape");
        for c1 in 0..wr1 {
            let wb = &w[c0 * wr1 + c1];
            let mut y2 = t2
                .slice_mut(s![c1, .., .., ..])
                .into_shape_with_order((nj, xr1 * xc))
                .expect("reshape");
            wb.apply_t_into(x2.view(), y2.view_mut());
        }
    }
    // out(xr1, b1, xc1) = sum_{xc, j} t2(b1, j, xr1, xc) col(xc, j, xc1)
    let t2 = t2.permuted_axes([3, 1, 0, 2]).as_standard_layout().to_owned(); // (xc, j, b1, xr1)
    let t2m = t2.into_shape_with_order((xc * nj, wr1 * xr1)).expect("reshape");
    let cm = col.view().into_shape_with_order((xc * nj, xc1)).expect("reshape");
    let out = cm.t().dot(&t2m); // (xc1, b1*xr1)
    let out = out.into_shape_with_order((xc1, wr1, xr1)).expect("reshape");
    out.permuted_axes([2, 1, 0]).as_standard_layout().to_owned()
}

/// Mirror extension from the right:
/// `out(xr, b0, xc) = sum prev(xr1, b1, xc1) row(xr, i, xr1) W[b0*B1+b1](i, j) col(xc, j, xc1)`.
pub(crate) fn grow_banded_interface_right(
    prev: &Array3<f64>,
    row: &Array3<f64>,
    w: &[Banded],
    wr0: usize,
    wr1: usize,
    col: &Array3<f64>,
) -> Array3<f64> {
    let (xr1, b1, xc1) = prev.dim();
    debug_assert_eq!(b1, wr1);
    let (xr, n, _) = row.dim();
    let (xc, nj, _) = col.dim();
    // t1(xr, i, b1, xc1) = sum_{xr1} row(xr, i, xr1) prev(xr1, b1, xc1)
    let rm = row.view().into_shape_with_order((xr * n, xr1)).expect("reshape");
    let pm = prev.view().into_shape_with_order((xr1, b1 * xc1)).expect("reshape");
    let t1 = rm.dot(&pm); // (xr*n, b1*xc1)
    let t1 = t1.into_shape_with_order((xr, n, b1, xc1)).expect("reshape");
    let t1 = t1.permuted_axes([2, 1, 0, 3]).as_standard_layout().to_owned(); // (b1, i, xr, xc1)
    // t2(b0, j, xr, xc1) = sum_{b1, i} W[b0*B1+b1](i, j) t1(b1, i, xr, xc1)
    let mut t2 = Array4::<f64>::zeros((wr0, nj, xr, xc1));
    for c0 in 0..wr0 {
        let mut y2 = t2
            .slice_mut(s![c0, .., .., ..])
            .into_shape_with_order((nj, xr * xc1))
            .expect("reshape");
        for c1 in 0..wr1 {
            let wb = &w[c0 * wr1 + c1];
            let x2 = t1
                .slice(s![c1, .., .., ..])
                .into_shape_with_order((n, xr * xc1))
                .expect("reshape");
            wb.apply_t_into(x2.view(), y2.view_mut());
        }
    }
    // out(xr, b0, xc) = sum_{j, xc1} t2(b0, j, xr, xc1) col(xc, j, xc1)
    let t2 = t2.permuted_axes([2, 0, 1, 3]).as_standard_layout().to_owned(); // (xr, b0, j, xc1)
    let t2m = t2.into_shape_with_order((xr * wr0, nj * xc1)).expect("reshape");
    let cp = col.view().permuted_axes([1, 2, 0]).as_standard_layout().to_owned(); // (j, xc1, xc)
    let cm = cp.into_shape_with_order((nj * xc1, xc)).expect("reshape");
    let out = t2m.dot(&cm); // (xr*b0, xc)
    out.into_shape_with_order((xr, wr0, xc)).expect("reshape")
}
