//! Built-in benchmark problems: pointwise coefficient evaluators, exact
//! solutions where available, and exact TT collocations for data with
//! known low-rank structure (so polynomial data is quadrature-exact and
//! free of cross-interpolation error).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::QuadratureGrid;
use crate::tt::TtVector;

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>;
pub type TtBuilder = Arc<dyn Fn(&QuadratureGrid) -> Result<TtVector> + Send + Sync>;
pub type GradTtBuilder = Arc<dyn Fn(&QuadratureGrid, usize) -> Result<TtVector> + Send + Sync>;

/// A reaction-diffusion benchmark problem on a box.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub d: usize,
    pub bounds: Vec<(f64, f64)>,
    pub kappa2_fn: PointFn,
    pub f_fn: PointFn,
    pub exact_u: Option<PointFn>,
    pub exact_grad: Option<GradFn>,
    /// Set when kappa^2 is a constant; all derived fields are then exact.
    pub kappa2_const: Option<f64>,
    pub kappa_strictly_positive: bool,
    /// Declared lower bound of kappa^2 over the box (valid when strictly positive).
    pub kappa2_floor: f64,
    pub default_kappa0: f64,
    pub exact_f_tt: Option<TtBuilder>,
    pub exact_kappa2_tt: Option<TtBuilder>,
    pub exact_u_tt: Option<TtBuilder>,
    pub exact_grad_tt: Option<GradTtBuilder>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("bounds", &self.bounds)
            .field("kappa2_const", &self.kappa2_const)
            .field("kappa_strictly_positive", &self.kappa_strictly_positive)
            .finish()
    }
}

impl ProblemSpec {
    /// Spot-check the declared positivity floor at random points.
    pub fn check_floor(&self, n_points: usize, seed: u64) -> Result<()> {
        if !self.kappa_strictly_positive {
            return Ok(());
        }
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; self.d];
        for _ in 0..n_points {
            for (k, &(a, b)) in self.bounds.iter().enumerate() {
                x[k] = rng.random_range(a..b);
            }
            let v = (self.kappa2_fn)(&x);
            if v < self.kappa2_floor * (1.0 - 1e-12) {
                return Err(Error::InvalidArg(format!(
                    "kappa^2 = {v} below the declared floor {} at {:?}",
                    self.kappa2_floor, x
                )));
            }
        }
        Ok(())
    }
}

/// Look up a built-in problem by name.
pub fn by_name(
    name: &str,
    d: usize,
    kappa2: Option<f64>,
    alpha: Option<f64>,
) -> Result<ProblemSpec> {
    match name {
        "const-kappa" => Ok(const_kappa(d, kappa2.unwrap_or(0.0))),
        "rotated-gaussian" => {
            if d != 3 {
                return Err(Error::InvalidArg(
                    "rotated-gaussian is a three-dimensional problem".into(),
                ));
            }
            let a = alpha.unwrap_or(std::f64::consts::PI / 6.0);
            if !(0.0..=std::f64::consts::PI / 4.0).contains(&a) {
                return Err(Error::InvalidArg("alpha must lie in [0, pi/4]".into()));
            }
            Ok(rotated_gaussian(a))
        }
        "henon-heiles" => Ok(henon_heiles(d)),
        other => Err(Error::InvalidArg(format!("unknown problem '{other}'"))),
    }
}

fn bump(t: f64) -> f64 {
    1.0 - 4.0 * (t - 0.5) * (t - 0.5)
}

fn bump_prime(t: f64) -> f64 {
    -8.0 * (t - 0.5)
}

/// Unit-cube reaction-diffusion problem with constant kappa^2 and the
/// product-of-parabolas exact solution.
pub fn const_kappa(d: usize, kappa2: f64) -> ProblemSpec {
    let k2 = kappa2;
    let kappa2_fn: PointFn = Arc::new(move |_| k2);
    let f_fn: PointFn = Arc::new(move |x: &[f64]| {
        let mut sum = 0.0;
        for k in 0..x.len() {
            let mut p = 1.0;
            for (i, &xi) in x.iter().enumerate() {
                if i != k {
                    p *= bump(xi);
                }
            }
            sum += p;
        }
        let prod: f64 = x.iter().map(|&t| bump(t)).product();
        8.0 * sum + k2 * prod
    });
    let exact_u: PointFn = Arc::new(|x: &[f64]| x.iter().map(|&t| bump(t)).product());
    let exact_grad: GradFn = Arc::new(|x: &[f64], s: usize| {
        let mut p = bump_prime(x[s]);
        for (i, &xi) in x.iter().enumerate() {
            if i != s {
                p *= bump(xi);
            }
        }
        p
    });

    let exact_f_tt: TtBuilder = Arc::new(move |quad: &QuadratureGrid| {
        let g: Vec<Vec<f64>> = (0..quad.dim())
            .map(|q| quad.axis(q).nodes.iter().map(|&t| bump(t)).collect())
            .collect();
        let s = skip_one_product_tt(&g)?;
        let p = TtVector::from_rank1(&g)?;
        s.scale(8.0).add(&p.scale(k2))
    });
    let exact_u_tt: TtBuilder = Arc::new(move |quad: &QuadratureGrid| {
        let g: Vec<Vec<f64>> = (0..quad.dim())
            .map(|q| quad.axis(q).nodes.iter().map(|&t| bump(t)).collect())
            .collect();
        TtVector::from_rank1(&g)
    });
    let exact_grad_tt: GradTtBuilder = Arc::new(move |quad: &QuadratureGrid, s: usize| {
        let g: Vec<Vec<f64>> = (0..quad.dim())
            .map(|q| {
                quad.axis(q)
                    .nodes
                    .iter()
                    .map(|&t| if q == s { bump_prime(t) } else { bump(t) })
                    .collect()
            })
            .collect();
        TtVector::from_rank1(&g)
    });

    ProblemSpec {
        name: "const-kappa",
        d,
        bounds: vec![(0.0, 1.0); d],
        kappa2_fn,
        f_fn,
        exact_u: Some(exact_u),
        exact_grad: Some(exact_grad),
        kappa2_const: Some(k2),
        kappa_strictly_positive: k2 > 0.0,
        kappa2_floor: k2.max(0.0),
        default_kappa0: if k2 > 0.0 { 0.0 } else { 0.1 },
        exact_f_tt: Some(exact_f_tt),
        exact_kappa2_tt: None,
        exact_u_tt: Some(exact_u_tt),
        exact_grad_tt: Some(exact_grad_tt),
    }
}

/// TT of `sum_k prod_{i != k} g_i` with ranks (1, 2, ..., 2, 1).
fn skip_one_product_tt(g: &[Vec<f64>]) -> Result<TtVector> {
    use ndarray::Array3;
    let d = g.len();
    if d == 1 {
        return TtVector::from_rank1(&[vec![1.0; g[0].len()]]);
    }
    let mut cores = Vec::with_capacity(d);
    for (k, gk) in g.iter().enumerate() {
        let n = gk.len();
        let core = if k == 0 {
            let mut c = Array3::zeros((1, n, 2));
            for i in 0..n {
                c[(0, i, 0)] = gk[i]; // skip still ahead
                c[(0, i, 1)] = 1.0; // skip placed here
            }
            c
        } else if k == d - 1 {
            let mut c = Array3::zeros((2, n, 1));
            for i in 0..n {
                c[(0, i, 0)] = 1.0;
                c[(1, i, 0)] = gk[i];
            }
            c
        } else {
            let mut c = Array3::zeros((2, n, 2));
            for i in 0..n {
                c[(0, i, 0)] = gk[i];
                c[(0, i, 1)] = 1.0;
                c[(1, i, 1)] = gk[i];
            }
            c
        };
        cores.push(core);
    }
    TtVector::new(cores)
}

/// Three-dimensional Poisson problem whose exact solution is an anisotropic
/// Gaussian rotated by `alpha` in the (x1,x2) and (x1,x3) planes, damped to
/// zero on the boundary of the unit cube.
pub fn rotated_gaussian(alpha: f64) -> ProblemSpec {
    let (ca, sa) = (alpha.cos(), alpha.sin());
    let t_of = move |x: &[f64]| 10.0 * (x[0] * ca * ca + x[1] * ca * sa + x[2] * sa) - 5.0;
    let t_coef = move |i: usize| match i {
        0 => 10.0 * ca * ca,
        1 => 10.0 * ca * sa,
        _ => 10.0 * sa,
    };
    let exact_u: PointFn = Arc::new(move |x: &[f64]| {
        let t = t_of(x);
        let b: f64 = x.iter().map(|&v| v * (1.0 - v)).product();
        (-t * t).exp() * b
    });
    let exact_grad: GradFn = Arc::new(move |x: &[f64], s: usize| {
        let t = t_of(x);
        let g = (-t * t).exp();
        let gp = -2.0 * t * g;
        let b: f64 = x.iter().map(|&v| v * (1.0 - v)).product();
        let mut b_rest = 1.0;
        for (j, &v) in x.iter().enumerate() {
            if j != s {
                b_rest *= v * (1.0 - v);
            }
        }
        let bs = (1.0 - 2.0 * x[s]) * b_rest;
        gp * t_coef(s) * b + g * bs
    });
    let f_fn: PointFn = Arc::new(move |x: &[f64]| {
        let t = t_of(x);
        let g = (-t * t).exp();
        let gp = -2.0 * t * g;
        let gpp = (4.0 * t * t - 2.0) * g;
        let b: f64 = x.iter().map(|&v| v * (1.0 - v)).product();
        let mut tot = 0.0;
        for i in 0..3 {
            let mut b_rest = 1.0;
            for (j, &v) in x.iter().enumerate() {
                if j != i {
                    b_rest *= v * (1.0 - v);
                }
            }
            let bi = (1.0 - 2.0 * x[i]) * b_rest;
            let bii = -2.0 * b_rest;
            let ti = t_coef(i);
            tot += gpp * ti * ti * b + 2.0 * gp * ti * bi + g * bii;
        }
        -tot
    });
    ProblemSpec {
        name: "rotated-gaussian",
        d: 3,
        bounds: vec![(0.0, 1.0); 3],
        kappa2_fn: Arc::new(|_| 0.0),
        f_fn,
        exact_u: Some(exact_u),
        exact_grad: Some(exact_grad),
        kappa2_const: Some(0.0),
        kappa_strictly_positive: false,
        kappa2_floor: 0.0,
        default_kappa0: 1.0,
        exact_f_tt: None,
        exact_kappa2_tt: None,
        exact_u_tt: None,
        exact_grad_tt: None,
    }
}

const HH_COUPLING: f64 = 0.223606;

/// Shift-and-invert step for the Schroedinger operator with the model
/// Henon-Heiles potential on (-5,5)^d; the exact solution is the product
/// Gaussian and the reaction coefficient the cubic potential plus one.
pub fn henon_heiles(d: usize) -> ProblemSpec {
    let c = HH_COUPLING;
    let vu = move |x: &[f64]| -> f64 {
        (0..x.len().saturating_sub(1))
            .map(|k| x[k] * x[k] * x[k + 1] - x[k + 1].powi(3) / 3.0)
            .sum()
    };
    let kappa2_fn: PointFn = Arc::new(move |x: &[f64]| {
        let vh: f64 = x.iter().map(|&v| v * v).sum();
        1.0 + vh + c * vu(x)
    });
    let exact_u: PointFn = Arc::new(|x: &[f64]| x.iter().map(|&v| (-0.5 * v * v).exp()).product());
    let exact_grad: GradFn = Arc::new(|x: &[f64], s: usize| {
        let u: f64 = x.iter().map(|&v| (-0.5 * v * v).exp()).product();
        -x[s] * u
    });
    let dd = d;
    let f_fn: PointFn = Arc::new(move |x: &[f64]| {
        let u: f64 = x.iter().map(|&v| (-0.5 * v * v).exp()).product();
        (dd as f64 + 1.0 + c * vu(x)) * u
    });

    let exact_kappa2_tt: TtBuilder = Arc::new(move |quad: &QuadratureGrid| {
        hh_chain_tt(quad, 1.0, 1.0, false)
    });
    let exact_f_tt: TtBuilder = Arc::new(move |quad: &QuadratureGrid| {
        // (d+1 + c V_u) collocated, then multiplied by the Gaussian factors
        let w = hh_chain_tt(quad, dd as f64 + 1.0, 0.0, true)?;
        let gauss: Vec<Vec<f64>> = (0..quad.dim())
            .map(|q| quad.axis(q).nodes.iter().map(|&v| (-0.5 * v * v).exp()).collect())
            .collect();
        w.hadamard(&TtVector::from_rank1(&gauss)?)
    });
    let exact_u_tt: TtBuilder = Arc::new(|quad: &QuadratureGrid| {
        let gauss: Vec<Vec<f64>> = (0..quad.dim())
            .map(|q| quad.axis(q).nodes.iter().map(|&v| (-0.5 * v * v).exp()).collect())
            .collect();
        TtVector::from_rank1(&gauss)
    });
    let exact_grad_tt: GradTtBuilder = Arc::new(|quad: &QuadratureGrid, s: usize| {
        let factors: Vec<Vec<f64>> = (0..quad.dim())
            .map(|q| {
                quad.axis(q)
                    .nodes
                    .iter()
                    .map(|&v| {
                        let e = (-0.5 * v * v).exp();
                        if q == s {
                            -v * e
                        } else {
                            e
                        }
                    })
                    .collect()
            })
            .collect();
        TtVector::from_rank1(&factors)
    });

    ProblemSpec {
        name: "henon-heiles",
        d,
        bounds: vec![(-5.0, 5.0); d],
        kappa2_fn,
        f_fn,
        exact_u: Some(exact_u),
        exact_grad: Some(exact_grad),
        kappa2_const: None,
        kappa_strictly_positive: true,
        kappa2_floor: 1.0,
        default_kappa0: 0.0,
        exact_f_tt: Some(exact_f_tt),
        exact_kappa2_tt: Some(exact_kappa2_tt),
        exact_u_tt: Some(exact_u_tt),
        exact_grad_tt: Some(exact_grad_tt),
    }
}

/// Exact TT of `constant + harmonic * sum x_k^2 + c sum (x_k^2 x_{k+1} - x_{k+1}^3/3)`
/// on the quadrature grid. `skip_harmonic` drops the `sum x_k^2` part.
fn hh_chain_tt(
    quad: &QuadratureGrid,
    constant: f64,
    harmonic: f64,
    skip_harmonic: bool,
) -> Result<TtVector> {
    use ndarray::Array3;
    let c = HH_COUPLING;
    let d = quad.dim();
    let harm = if skip_harmonic { 0.0 } else { harmonic };
    if d == 1 {
        let vals: Vec<f64> = quad
            .axis(0)
            .nodes
            .iter()
            .map(|&x| constant + harm * x * x)
            .collect();
        return TtVector::from_rank1(&[vals]);
    }
    let mut cores = Vec::with_capacity(d);
    for q in 0..d {
        let nodes = &quad.axis(q).nodes;
        let n = nodes.len();
        // accumulated term entering at position q (cubic part exists for q >= 1)
        let acc = |x: f64, has_cubic: bool, with_const: bool| -> f64 {
            let mut v = harm * x * x;
            if has_cubic {
                v -= c / 3.0 * x * x * x;
            }
            if with_const {
                v += constant;
            }
            v
        };
        let core = if q == 0 {
            let mut m = Array3::zeros((1, n, 3));
            for (i, &x) in nodes.iter().enumerate() {
                m[(0, i, 0)] = 1.0;
                m[(0, i, 1)] = c * x * x;
                m[(0, i, 2)] = acc(x, false, false);
            }
            m
        } else if q == d - 1 {
            let mut m = Array3::zeros((3, n, 1));
            for (i, &x) in nodes.iter().enumerate() {
                m[(0, i, 0)] = acc(x, true, true);
                m[(1, i, 0)] = x;
                m[(2, i, 0)] = 1.0;
            }
            m
        } else {
            let mut m = Array3::zeros((3, n, 3));
            for (i, &x) in nodes.iter().enumerate() {
                m[(0, i, 0)] = 1.0;
                m[(0, i, 1)] = c * x * x;
                m[(0, i, 2)] = acc(x, true, false);
                m[(1, i, 2)] = x;
                m[(2, i, 2)] = 1.0;
            }
            m
        };
        cores.push(core);
    }
    TtVector::new(cores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::CartesianGrid;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_laplacian(f: &PointFn, x: &[f64], h: f64) -> f64 {
        let mut lap = 0.0;
        let fx = f(x);
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            lap += (f(&xp) - 2.0 * fx + f(&xm)) / (h * h);
        }
        lap
    }

    #[test]
    fn const_kappa_data_is_consistent() {
        let p = const_kappa(3, 7.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..0.95)).collect();
            let lap = fd_laplacian(&(p.exact_u.clone().unwrap()), &x, 2e-4);
            let f = (p.f_fn)(&x);
            let u = p.exact_u.as_ref().unwrap()(&x);
            let resid = -lap + 7.5 * u - f;
            assert!(resid.abs() < 1e-5 * f.abs().max(1.0), "residual {resid}");
            // gradient matches finite differences
            for s in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[s] += 1e-6;
                xm[s] -= 1e-6;
                let g_fd =
                    (p.exact_u.as_ref().unwrap()(&xp) - p.exact_u.as_ref().unwrap()(&xm)) / 2e-6;
                let g = p.exact_grad.as_ref().unwrap()(&x, s);
                assert!((g - g_fd).abs() < 1e-7 * g.abs().max(1.0));
            }
        }
    }

    #[test]
    fn const_kappa_exact_tt_fields_match_pointwise() {
        let p = const_kappa(3, 2.0);
        let grid = CartesianGrid::uniform(&p.bounds, 5).unwrap();
        let quad = QuadratureGrid::new(&grid, 4).unwrap();
        let f_tt = (p.exact_f_tt.as_ref().unwrap())(&quad).unwrap();
        assert!(f_tt.max_rank() <= 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = quad.dims();
        for _ in 0..300 {
            let ix: Vec<usize> = dims.iter().map(|&n| rng.random_range(0..n)).collect();
            let x: Vec<f64> = ix.iter().enumerate().map(|(k, &i)| quad.axis(k).nodes[i]).collect();
            let want = (p.f_fn)(&x);
            let got = f_tt.eval(&ix);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn henon_heiles_chain_matches_pointwise_values() {
        let p = henon_heiles(5);
        let grid = CartesianGrid::uniform(&p.bounds, 4).unwrap();
        let quad = QuadratureGrid::new(&grid, 4).unwrap();
        let k2 = (p.exact_kappa2_tt.as_ref().unwrap())(&quad).unwrap();
        assert!(k2.max_rank() <= 3);
        let f_tt = (p.exact_f_tt.as_ref().unwrap())(&quad).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = quad.dims();
        for _ in 0..300 {
            let ix: Vec<usize> = dims.iter().map(|&n| rng.random_range(0..n)).collect();
            let x: Vec<f64> = ix.iter().enumerate().map(|(k, &i)| quad.axis(k).nodes[i]).collect();
            let want_k2 = (p.kappa2_fn)(&x);
            let got_k2 = k2.eval(&ix);
            assert!(
                (got_k2 - want_k2).abs() <= 1e-12 * want_k2.abs().max(1.0),
                "{got_k2} vs {want_k2}"
            );
            let want_f = (p.f_fn)(&x);
            let got_f = f_tt.eval(&ix);
            assert!(
                (got_f - want_f).abs() <= 1e-12 * want_f.abs().max(1e-6),
                "{got_f} vs {want_f}"
            );
        }
    }

    #[test]
    fn henon_heiles_floor_holds_on_samples() {
        let p = henon_heiles(4);
        p.check_floor(10_000, 9).unwrap();
    }

    #[test]
    fn rotated_gaussian_load_matches_finite_differences() {
        let p = rotated_gaussian(0.37);
        let u = p.exact_u.clone().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.02..0.98)).collect();
            let lap = fd_laplacian(&u, &x, 3e-4);
            let want = -lap;
            let got = (p.f_fn)(&x);
            let rel = (got - want).abs() / (want.abs() + 1.0);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-5, "worst relative mismatch {worst}");
        // gradient evaluator against finite differences
        for _ in 0..2000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.02..0.98)).collect();
            for s in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[s] += 1e-6;
                xm[s] -= 1e-6;
                let fd = (u(&xp) - u(&xm)) / 2e-6;
                let got = p.exact_grad.as_ref().unwrap()(&x, s);
                assert!((got - fd).abs() <= 1e-5 * (fd.abs() + 1e-3), "{got} vs {fd}");
            }
        }
    }

    #[test]
    fn problem_registry_rejects_bad_requests() {
        assert!(by_name("does-not-exist", 3, None, None).is_err());
        assert!(by_name("rotated-gaussian", 4, None, Some(0.2)).is_err());
        assert!(by_name("rotated-gaussian", 3, None, Some(3.0)).is_err());
        assert!(by_name("const-kappa", 5, Some(1.0), None).is_ok());
        assert!(by_name("henon-heiles", 10, None, None).is_ok());
    }
}
