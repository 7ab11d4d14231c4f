//! Exact-in-TT evaluation of the guaranteed error bound in its separable
//! form, plus the energy-error reference used for effectivity reporting.
//!
//! The bound decomposes as `sqrt(|eta1|^2 + |eta2|^2) + osc + kappa0 C_P |eta2|`
//! where `eta1 = sqrt(w) (tau - grad u_h)` and
//! `eta2 = sqrt(w) ktilde^{-1} (Pi r + div tau)` on the quadrature grid.
//! All terms are assembled with exact TT arithmetic; norms are taken after
//! orthogonalization so the large cancellations inside `Pi r + div tau`
//! happen vectorially instead of in squared form.

use ndarray::prelude::*;

use crate::cross::{cross_interpolate, CollocatedField, CrossOptions};
use crate::error::{Error, Result};
use crate::fem::{interpolation_matrix, q1_projection_matrix, BasisKind, BasisTable1D, CartesianGrid, QuadratureGrid};
use crate::tt::{BlockTtVector, TtMatrix, TtVector};

/// The decomposed guaranteed bound.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ErrorCertificate {
    pub eta1_norm: f64,
    pub eta2_norm: f64,
    pub osc_bound: f64,
    pub shift_term: f64,
    pub total_bound: f64,
    pub poincare_c_p: f64,
    pub kappa0: f64,
    pub tol_primal: f64,
    pub tol_complementary: f64,
    pub max_intermediate_rank: usize,
    /// "exact" or "compressed-roundoff": how the divergence sum was built.
    pub assembly: String,
}

/// Sharp Poincare constant of the box with homogeneous Dirichlet data:
/// `C_P = pi^{-1} (sum L_i^{-2})^{-1/2}`.
pub fn poincare_constant(side_lengths: &[f64]) -> Result<f64> {
    if side_lengths.is_empty() {
        return Err(Error::InvalidArg("empty side length list".into()));
    }
    let mut s = 0.0;
    for &l in side_lengths {
        if !(l > 0.0) {
            return Err(Error::InvalidArg(format!("nonpositive side length {l}")));
        }
        s += 1.0 / (l * l);
    }
    Ok(1.0 / (std::f64::consts::PI * s.sqrt()))
}

/// Quadrature-grid values of the finite element fields: exact TT images of
/// the coefficient tensors under the collocation maps (no truncation).
pub struct CollocatedSolution {
    pub u_vals: TtVector,
    pub grad_u: Vec<TtVector>,
    pub tau_vals: Vec<TtVector>,
    /// unsummed divergence contributions `d_s tau_s`
    pub div_tau_terms: Vec<TtVector>,
}

pub fn collocate_fem_fields(
    u_h: &TtVector,
    tau: &BlockTtVector,
    grid: &CartesianGrid,
    quad: &QuadratureGrid,
) -> Result<CollocatedSolution> {
    let d = grid.dim();
    if u_h.dims() != grid.dims_nodal() {
        return Err(Error::GridMismatch("primal coefficients do not match the grid".into()));
    }
    if tau.dims() != grid.dims_flux().as_slice() || tau.ncomp() != d {
        return Err(Error::GridMismatch("flux coefficients do not match the grid".into()));
    }
    let hats: Vec<BasisTable1D> = (0..d)
        .map(|q| BasisTable1D::build(grid.axis(q), quad.axis(q), BasisKind::HatP1))
        .collect();
    let brokens: Vec<BasisTable1D> = (0..d)
        .map(|q| BasisTable1D::build(grid.axis(q), quad.axis(q), BasisKind::BrokenP1))
        .collect();
    let p2s: Vec<BasisTable1D> = (0..d)
        .map(|q| BasisTable1D::build(grid.axis(q), quad.axis(q), BasisKind::P2))
        .collect();

    let hat_vals: Vec<Array2<f64>> = hats.iter().map(|t| interpolation_matrix(t, false)).collect();
    let hat_ders: Vec<Array2<f64>> = hats.iter().map(|t| interpolation_matrix(t, true)).collect();

    let u_vals = TtMatrix::from_kron(hat_vals.clone())?.matvec(u_h)?;
    let mut grad_u = Vec::with_capacity(d);
    for s in 0..d {
        let factors: Vec<Array2<f64>> = (0..d)
            .map(|q| if q == s { hat_ders[q].clone() } else { hat_vals[q].clone() })
            .collect();
        grad_u.push(TtMatrix::from_kron(factors)?.matvec(u_h)?);
    }

    let mut tau_vals = Vec::with_capacity(d);
    let mut div_tau_terms = Vec::with_capacity(d);
    for s in 0..d {
        let tau_s = tau.component(s)?;
        let val_factors: Vec<Array2<f64>> = (0..d)
            .map(|q| {
                if q == s {
                    interpolation_matrix(&p2s[q], false)
                } else {
                    interpolation_matrix(&brokens[q], false)
                }
            })
            .collect();
        tau_vals.push(TtMatrix::from_kron(val_factors)?.matvec(&tau_s)?);
        let der_factors: Vec<Array2<f64>> = (0..d)
            .map(|q| {
                if q == s {
                    interpolation_matrix(&p2s[q], true)
                } else {
                    interpolation_matrix(&brokens[q], false)
                }
            })
            .collect();
        div_tau_terms.push(TtMatrix::from_kron(der_factors)?.matvec(&tau_s)?);
    }
    Ok(CollocatedSolution { u_vals, grad_u, tau_vals, div_tau_terms })
}

/// How the high-rank sums inside the estimator are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaAssembly {
    /// Plain concatenation; rank growth is paid in full.
    Exact,
    /// Pairwise sums compressed at machine precision (5e-16 relative),
    /// used when the exact concatenation would not fit in memory.
    CompressedRoundoff,
    /// Choose automatically from the estimated memory footprint.
    Auto,
}

const ROUNDOFF_TOL: f64 = 5e-16;
const EXACT_BYTES_CAP: usize = 300 * 1024 * 1024;

/// The split estimator pieces.
#[derive(Debug, Clone)]
pub struct EtaTerms {
    pub eta1_norm: f64,
    pub eta2_norm: f64,
    /// weighted norm of `r - Pi r` entering the oscillation bound
    pub r_minus_pr_norm: f64,
    pub max_rank: usize,
    pub assembly: &'static str,
}

/// Sum a list of TT terms, either exactly or with round-off-level
/// compression after each pairwise addition.
fn sum_terms(terms: &[TtVector], exact: bool) -> Result<TtVector> {
    let mut acc: Option<TtVector> = None;
    for t in terms {
        acc = Some(match acc {
            None => t.clone(),
            Some(a) => {
                let s = a.add(t)?;
                if exact {
                    s
                } else {
                    s.round(ROUNDOFF_TOL)?
                }
            }
        });
    }
    acc.ok_or_else(|| Error::InvalidArg("empty term list".into()))
}

fn sum_bytes_estimate(terms: &[TtVector]) -> usize {
    if terms.is_empty() {
        return 0;
    }
    let d = terms[0].len();
    let mut total = 0usize;
    for k in 0..d {
        let n = terms[0].dims()[k];
        let r0: usize = terms.iter().map(|t| t.ranks()[k]).sum();
        let r1: usize = terms.iter().map(|t| t.ranks()[k + 1]).sum();
        total += r0 * n * r1 * 8;
    }
    total
}

/// Triple chain contraction `sum_i a(i) m(i) b(i)` over matching modes.
pub fn tt_dot3(a: &TtVector, m: &TtVector, b: &TtVector) -> Result<f64> {
    if a.dims() != m.dims() || a.dims() != b.dims() {
        return Err(Error::ModeMismatch("tt_dot3: mode sizes differ".into()));
    }
    let d = a.len();
    // w(ra, rm, rb)
    let mut w = Array3::<f64>::ones((1, 1, 1));
    for k in 0..d {
        let ac = a.core(k);
        let mc = m.core(k);
        let bc = b.core(k);
        let (a0, n, a1) = ac.dim();
        let (m0, _, m1) = mc.dim();
        let (b0, _, b1) = bc.dim();
        // t1(i, a1, m0, b0) = sum_a0 ac(a0, i, a1) w(a0, m0, b0)
        let am = ac.view().into_shape_with_order((a0, n * a1)).expect("reshape");
        let wm = w.view().into_shape_with_order((a0, m0 * b0)).expect("reshape");
        let t1 = am.t().dot(&wm); // (n*a1, m0*b0)
        // t2(i, a1, m1, b0) = sum_m0 mc(m0, i, m1) t1(i, a1, m0, b0)
        let t1 = t1.into_shape_with_order((n, a1, m0, b0)).expect("reshape");
        let mut t2 = Array4::<f64>::zeros((n, a1, m1, b0));
        for i in 0..n {
            // (a1*b0, m0) x (m0, m1)
            let t1i = t1.slice(s![i, .., .., ..]); // (a1, m0, b0)
            let t1i = t1i.permuted_axes([0, 2, 1]).as_standard_layout().to_owned(); // (a1, b0, m0)
            let t1im = t1i.into_shape_with_order((a1 * b0, m0)).expect("reshape");
            let mi = mc.slice(s![.., i, ..]); // (m0, m1)
            let prod = t1im.dot(&mi); // (a1*b0, m1)
            let prod = prod.into_shape_with_order((a1, b0, m1)).expect("reshape");
            t2.slice_mut(s![i, .., .., ..])
                .assign(&prod.permuted_axes([0, 2, 1]));
        }
        // w'(a1, m1, b1) = sum_{b0, i} bc(b0, i, b1) t2(i, a1, m1, b0)
        let t2 = t2.permuted_axes([3, 0, 1, 2]).as_standard_layout().to_owned(); // (b0, i, a1, m1)
        let t2m = t2.into_shape_with_order((b0 * n, a1 * m1)).expect("reshape");
        let bm = bc.view().into_shape_with_order((b0 * n, b1)).expect("reshape");
        let wn = bm.t().dot(&t2m); // (b1, a1*m1)
        let wn = wn.into_shape_with_order((b1, a1, m1)).expect("reshape");
        w = wn.permuted_axes([1, 2, 0]).as_standard_layout().to_owned();
    }
    Ok(w[(0, 0, 0)])
}

/// Assemble the split estimator terms from the collocated fields. All TT
/// operations are exact apart from the optional round-off-level compression
/// of the long divergence sum.
pub fn eta_terms(
    coll: &CollocatedSolution,
    kappa_tilde_inv: &CollocatedField,
    kappa2: &CollocatedField,
    f: &CollocatedField,
    grid: &CartesianGrid,
    quad: &QuadratureGrid,
    mode: EtaAssembly,
) -> Result<EtaTerms> {
    let d = grid.dim();
    let sqrt_w = TtVector::from_rank1(&quad.sqrt_weight_factors())?;
    let w_tt = TtVector::from_rank1(&quad.weight_factors())?;
    let mut max_rank = 0usize;

    // eta1: per-component weighted misfit tau_s - d_s u_h
    let mut eta1_sq = 0.0;
    for s in 0..d {
        let diff = coll.tau_vals[s].add(&coll.grad_u[s].clone().scale(-1.0))?;
        let e = sqrt_w.hadamard(&diff)?;
        max_rank = max_rank.max(e.max_rank());
        let nrm = e.norm();
        eta1_sq += nrm * nrm;
    }

    // q = Pi f - Pi(kappa2 u) + sum_s d_s tau_s
    let proj_factors: Vec<Array2<f64>> = (0..d)
        .map(|q| q1_projection_matrix(grid.axis(q), quad.axis(q)))
        .collect();
    let proj = TtMatrix::from_kron(proj_factors)?;
    let pf = proj.matvec(&f.values)?;
    let k2u = kappa2.values.hadamard(&coll.u_vals)?;
    let pk2u = proj.matvec(&k2u)?;
    let mut q_terms = vec![pf.clone(), pk2u.clone().scale(-1.0)];
    for t in &coll.div_tau_terms {
        q_terms.push(t.clone());
    }
    let exact = match mode {
        EtaAssembly::Exact => true,
        EtaAssembly::CompressedRoundoff => false,
        EtaAssembly::Auto => sum_bytes_estimate(&q_terms) <= EXACT_BYTES_CAP,
    };
    let q = sum_terms(&q_terms, exact)?;
    max_rank = max_rank.max(q.max_rank());
    // orthogonalize so the cancellation inside the sum is resolved before
    // anything is squared
    let q = q.round(0.0)?;

    // eta2^2 = sum_l w(l) ktinv(l)^2 q(l)^2
    let kt2 = kappa_tilde_inv.values.hadamard(&kappa_tilde_inv.values)?;
    let weight = kt2.hadamard(&w_tt)?;
    max_rank = max_rank.max(weight.max_rank());
    let eta2_sq = tt_dot3(&q, &weight, &q)?.max(0.0);

    // oscillation core: |r - Pi r|_w with r = f - kappa2 u
    let rp_terms = vec![
        f.values.clone(),
        k2u.clone().scale(-1.0),
        pf.scale(-1.0),
        pk2u,
    ];
    let z = sum_terms(&rp_terms, exact)?.round(0.0)?;
    max_rank = max_rank.max(z.max_rank());
    let zn = sqrt_w.hadamard(&z)?.norm();

    Ok(EtaTerms {
        eta1_norm: eta1_sq.sqrt(),
        eta2_norm: eta2_sq.sqrt(),
        r_minus_pr_norm: zn,
        max_rank,
        assembly: if exact { "exact" } else { "compressed-roundoff" },
    })
}

/// Data oscillation bound `min(max_K h_K / pi, sup kappa^{-1}) |r - Pi r|`.
/// `kappa_inv_sup` is the certified bound on `kappa^{-1}` over the box, or
/// `None` when kappa may vanish (the h/pi branch is then used).
pub fn oscillation_bound(
    r_minus_pr_norm: f64,
    grid: &CartesianGrid,
    kappa_inv_sup: Option<f64>,
) -> f64 {
    let h_branch = grid.max_element_extent() / std::f64::consts::PI;
    let c = match kappa_inv_sup {
        Some(k) if k.is_finite() => h_branch.min(k),
        _ => h_branch,
    };
    c * r_minus_pr_norm
}

/// Assemble the guaranteed certificate from the estimator pieces.
pub fn certify(
    terms: &EtaTerms,
    osc: f64,
    kappa0: f64,
    kappa_strictly_positive: bool,
    grid: &CartesianGrid,
    tol_primal: f64,
    tol_complementary: f64,
) -> Result<ErrorCertificate> {
    if kappa0 < 0.0 {
        return Err(Error::InvalidArg("kappa0 must be nonnegative".into()));
    }
    if kappa0 == 0.0 && !kappa_strictly_positive {
        return Err(Error::InvalidArg(
            "kappa0 = 0 requires a reaction coefficient certified strictly positive".into(),
        ));
    }
    let c_p = poincare_constant(&grid.side_lengths())?;
    let eta = (terms.eta1_norm * terms.eta1_norm + terms.eta2_norm * terms.eta2_norm).sqrt();
    let shift = kappa0 * c_p * terms.eta2_norm;
    let total = eta + osc + shift;
    Ok(ErrorCertificate {
        eta1_norm: terms.eta1_norm,
        eta2_norm: terms.eta2_norm,
        osc_bound: osc,
        shift_term: shift,
        total_bound: total,
        poincare_c_p: c_p,
        kappa0,
        tol_primal,
        tol_complementary,
        max_intermediate_rank: terms.max_rank,
        assembly: terms.assembly.to_string(),
    })
}

/// Energy norm `|||u - u_h|||` of the difference to an exact solution
/// supplied as collocated values, evaluated by quadrature on the grid.
/// Used only for effectivity reporting, never inside the bound.
pub fn energy_error(
    u_exact_vals: &TtVector,
    grad_exact_vals: &[TtVector],
    kappa2: &CollocatedField,
    coll: &CollocatedSolution,
    quad: &QuadratureGrid,
) -> Result<f64> {
    let d = quad.dim();
    if grad_exact_vals.len() != d {
        return Err(Error::InvalidArg("need one gradient component per direction".into()));
    }
    let sqrt_w = TtVector::from_rank1(&quad.sqrt_weight_factors())?;
    let w_tt = TtVector::from_rank1(&quad.weight_factors())?;
    let mut total = 0.0;
    for s in 0..d {
        let gdiff = grad_exact_vals[s].add(&coll.grad_u[s].clone().scale(-1.0))?;
        let gn = sqrt_w.hadamard(&gdiff)?.norm();
        total += gn * gn;
    }
    let v = u_exact_vals.add(&coll.u_vals.clone().scale(-1.0))?.round(0.0)?;
    let weight = kappa2.values.hadamard(&w_tt)?;
    total += tt_dot3(&v, &weight, &v)?.max(0.0);
    Ok(total.sqrt())
}

/// Per-element error indicators `eta_K + osc_K` as a TT tensor over the
/// element grid. The pointwise square roots are cross-approximated, so the
/// result is NOT guaranteed; it is meant for adaptivity diagnostics only.
pub struct ElementIndicators {
    pub values: TtVector,
    /// always false: the cross-approximated square root voids the guarantee
    pub guaranteed: bool,
    pub cross_converged: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn elementwise_indicators(
    coll: &CollocatedSolution,
    kappa_tilde_inv: &CollocatedField,
    kappa2: &CollocatedField,
    f: &CollocatedField,
    grid: &CartesianGrid,
    quad: &QuadratureGrid,
    kappa_inv_sup: Option<f64>,
    delta_ind: f64,
) -> Result<ElementIndicators> {
    let d = grid.dim();
    let m = quad.m();
    // element aggregation matrices (n, m*n)
    let agg: Vec<Array2<f64>> = (0..d)
        .map(|q| {
            let n = grid.axis(q).n_elems();
            let mut e = Array2::zeros((n, m * n));
            for el in 0..n {
                for j in 0..m {
                    e[(el, el * m + j)] = 1.0;
                }
            }
            e
        })
        .collect();
    let agg_tt = TtMatrix::from_kron(agg)?;
    let sqrt_w = TtVector::from_rank1(&quad.sqrt_weight_factors())?;

    // per-element squared eta
    let mut eta_sq_el: Option<TtVector> = None;
    for s in 0..d {
        let diff = coll.tau_vals[s].add(&coll.grad_u[s].clone().scale(-1.0))?;
        let e = sqrt_w.hadamard(&diff)?.round(ROUNDOFF_TOL)?;
        let sq = agg_tt.matvec(&e.hadamard(&e)?)?;
        eta_sq_el = Some(match eta_sq_el {
            None => sq,
            Some(a) => a.add(&sq)?.round(ROUNDOFF_TOL)?,
        });
    }
    // eta2 contribution
    let proj_factors: Vec<Array2<f64>> = (0..d)
        .map(|q| q1_projection_matrix(grid.axis(q), quad.axis(q)))
        .collect();
    let proj = TtMatrix::from_kron(proj_factors)?;
    let pf = proj.matvec(&f.values)?;
    let k2u = kappa2.values.hadamard(&coll.u_vals)?;
    let pk2u = proj.matvec(&k2u)?;
    let mut q_terms = vec![pf.clone(), pk2u.clone().scale(-1.0)];
    for t in &coll.div_tau_terms {
        q_terms.push(t.clone());
    }
    let q = sum_terms(&q_terms, false)?.round(0.0)?;
    let e2 = sqrt_w
        .hadamard(&kappa_tilde_inv.values.hadamard(&q)?)?
        .round(ROUNDOFF_TOL)?;
    let e2sq = agg_tt.matvec(&e2.hadamard(&e2)?)?;
    let eta_sq_el = eta_sq_el
        .map(|a| a.add(&e2sq))
        .transpose()?
        .unwrap_or(e2sq)
        .round(ROUNDOFF_TOL)?;

    // oscillation per element
    let rp_terms = vec![f.values.clone(), k2u.scale(-1.0), pf.scale(-1.0), pk2u];
    let z = sum_terms(&rp_terms, false)?.round(0.0)?;
    let zw = sqrt_w.hadamard(&z)?.round(ROUNDOFF_TOL)?;
    let osc_sq_el = agg_tt.matvec(&zw.hadamard(&zw)?)?.round(ROUNDOFF_TOL)?;
    let h_branch = grid.max_element_extent() / std::f64::consts::PI;
    let c_osc = match kappa_inv_sup {
        Some(k) if k.is_finite() => h_branch.min(k),
        _ => h_branch,
    };

    // cross-approximate the pointwise square roots
    let dims: Vec<usize> = (0..d).map(|q| grid.axis(q).n_elems()).collect();
    let eval = |idx: &[usize]| -> f64 {
        eta_sq_el.eval(idx).max(0.0).sqrt() + c_osc * osc_sq_el.eval(idx).max(0.0).sqrt()
    };
    let opts = CrossOptions { seed: 17, ..CrossOptions::with_tol(delta_ind) };
    let res = cross_interpolate(&eval, &dims, &opts)?;
    Ok(ElementIndicators {
        values: res.tt,
        guaranteed: false,
        cross_converged: res.converged,
    })
}
