//! End-to-end driver: collocation, primal solve, flux reconstruction,
//! certification and result emission.

use serde::Serialize;

use crate::complementary::{assemble_complementary, block_als_solve, BlockAlsOptions, ProblemFields};
use crate::cross::{collocate, CollocatedField, CrossOptions};
use crate::error::{Error, Result};
use crate::estimator::{
    certify, collocate_fem_fields, energy_error, eta_terms, oscillation_bound, EtaAssembly,
};
use crate::fem::{CartesianGrid, QuadratureGrid};
use crate::primal::{als_solve, assemble_laplace_tt, assemble_reaction_tt, assemble_rhs_tt, initial_guess, AlsOptions, PrimalSystem};
use crate::problems::{by_name, ProblemSpec};
use crate::tt::{BlockTtVector, TtVector};

/// Parameters of one benchmark run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub problem: String,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub kappa2: Option<f64>,
    pub alpha: Option<f64>,
    pub delta_p: f64,
    pub delta_c: f64,
    /// `None` picks the problem default.
    pub kappa0: Option<f64>,
    pub seed: u64,
    pub max_rank_u: usize,
    pub max_rank_tau: usize,
    /// Evaluate the reference energy error when an exact solution exists.
    pub compute_energy_error: bool,
}

impl RunConfig {
    pub fn new(problem: &str, d: usize, n: usize) -> Self {
        RunConfig {
            problem: problem.to_string(),
            d,
            n,
            m: 4,
            kappa2: None,
            alpha: None,
            delta_p: 1e-3,
            delta_c: 1e-7,
            kappa0: None,
            seed: 0,
            max_rank_u: 60,
            max_rank_tau: 150,
            compute_energy_error: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArg("n must be at least 2".into()));
        }
        if !(1..=10).contains(&self.m) {
            return Err(Error::InvalidArg("m must lie in 1..=10".into()));
        }
        if !(self.delta_p > 0.0) || !(self.delta_c > 0.0) {
            return Err(Error::InvalidArg("tolerances must be positive".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidArg("dimension must be positive".into()));
        }
        if let Some(k0) = self.kappa0 {
            if k0 < 0.0 {
                return Err(Error::InvalidArg("kappa0 must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Everything one run produces. Timing fields are wall-clock seconds and
/// are excluded from bitwise reproducibility.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub problem: String,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub kappa2_param: Option<f64>,
    pub alpha: Option<f64>,
    pub delta_p: f64,
    pub delta_c: f64,
    pub kappa0: f64,
    pub seed: u64,
    pub eta1_norm: f64,
    pub eta2_norm: f64,
    pub osc_bound: f64,
    pub shift_term: f64,
    pub total_bound: f64,
    pub poincare_c_p: f64,
    pub energy_error: Option<f64>,
    pub i_eff: Option<f64>,
    pub t_collocate: f64,
    pub t_primal: f64,
    pub t_compl: f64,
    pub t_estimate: f64,
    pub t_energy: f64,
    pub max_rank_u: usize,
    pub max_rank_tau: usize,
    pub max_rank_estimator: usize,
    pub sweeps_primal: usize,
    pub sweeps_compl: usize,
    pub primal_converged: bool,
    pub compl_converged: bool,
    pub cross_converged: bool,
    pub gmres_iterations: usize,
    pub eta_assembly: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

impl RunRecord {
    fn empty(cfg: &RunConfig, kappa0: f64) -> Self {
        RunRecord {
            problem: cfg.problem.clone(),
            d: cfg.d,
            n: cfg.n,
            m: cfg.m,
            kappa2_param: cfg.kappa2,
            alpha: cfg.alpha,
            delta_p: cfg.delta_p,
            delta_c: cfg.delta_c,
            kappa0,
            seed: cfg.seed,
            eta1_norm: f64::NAN,
            eta2_norm: f64::NAN,
            osc_bound: f64::NAN,
            shift_term: f64::NAN,
            total_bound: f64::NAN,
            poincare_c_p: f64::NAN,
            energy_error: None,
            i_eff: None,
            t_collocate: 0.0,
            t_primal: 0.0,
            t_compl: 0.0,
            t_estimate: 0.0,
            t_energy: 0.0,
            max_rank_u: 0,
            max_rank_tau: 0,
            max_rank_estimator: 0,
            sweeps_primal: 0,
            sweeps_compl: 0,
            primal_converged: false,
            compl_converged: false,
            cross_converged: true,
            gmres_iterations: 0,
            eta_assembly: String::new(),
            failed_stage: None,
            error: None,
        }
    }
}

/// Intermediate artifacts of a run, returned for inspection and
/// serialization of the TT factors.
pub struct RunArtifacts {
    pub u_h: Option<TtVector>,
    pub tau: Option<BlockTtVector>,
}

/// Preloaded solutions (skip the corresponding solver stages).
#[derive(Default)]
pub struct Warmstart {
    pub u_h: Option<TtVector>,
    pub tau: Option<BlockTtVector>,
}

pub fn run(cfg: &RunConfig) -> RunRecord {
    let (rec, _) = run_with_artifacts(cfg, Warmstart::default());
    rec
}

/// Full pipeline; stage failures are recorded in the result instead of
/// propagating, so a sweep keeps going.
pub fn run_with_artifacts(cfg: &RunConfig, warm: Warmstart) -> (RunRecord, RunArtifacts) {
    let mut artifacts = RunArtifacts { u_h: None, tau: None };
    let mut rec = RunRecord::empty(cfg, cfg.kappa0.unwrap_or(f64::NAN));
    macro_rules! fail {
        ($stage:expr, $err:expr) => {{
            rec.failed_stage = Some($stage.to_string());
            rec.error = Some($err.to_string());
            return (rec, artifacts);
        }};
    }

    if let Err(e) = cfg.validate() {
        fail!("config", e);
    }
    let problem = match by_name(&cfg.problem, cfg.d, cfg.kappa2, cfg.alpha) {
        Ok(p) => p,
        Err(e) => fail!("config", e),
    };
    let kappa0 = cfg.kappa0.unwrap_or(problem.default_kappa0);
    rec.kappa0 = kappa0;
    if kappa0 == 0.0 && !problem.kappa_strictly_positive {
        fail!("config", "kappa0 = 0 requires a strictly positive reaction coefficient");
    }
    if let Err(e) = problem.check_floor(10_000, cfg.seed ^ 0x5eed) {
        fail!("config", e);
    }

    let grid = match CartesianGrid::uniform(&problem.bounds, cfg.n) {
        Ok(g) => g,
        Err(e) => fail!("grid", e),
    };
    let quad = match QuadratureGrid::new(&grid, cfg.m) {
        Ok(q) => q,
        Err(e) => fail!("grid", e),
    };

    // ---- collocation ------------------------------------------------
    let t0 = std::time::Instant::now();
    let fields = match collocate_problem_fields(&problem, &quad, kappa0, cfg) {
        Ok(f) => f,
        Err(e) => fail!("collocate", e),
    };
    rec.cross_converged = fields.cross_converged;
    rec.t_collocate = t0.elapsed().as_secs_f64();

    // ---- primal solve -----------------------------------------------
    let t0 = std::time::Instant::now();
    let u_h = if let Some(u) = warm.u_h {
        rec.primal_converged = true;
        u
    } else {
        match solve_primal(&problem, &fields, &grid, &quad, cfg, &mut rec) {
            Ok(u) => u,
            Err(e) => fail!("primal", e),
        }
    };
    rec.t_primal = t0.elapsed().as_secs_f64();
    rec.max_rank_u = u_h.max_rank();
    artifacts.u_h = Some(u_h.clone());

    // ---- complementary solve ----------------------------------------
    let t0 = std::time::Instant::now();
    let tau = if let Some(t) = warm.tau {
        rec.compl_converged = true;
        t
    } else {
        match solve_complementary(&fields, &u_h, &grid, &quad, cfg, &mut rec) {
            Ok(t) => t,
            Err(e) => fail!("complementary", e),
        }
    };
    rec.t_compl = t0.elapsed().as_secs_f64();
    rec.max_rank_tau = tau.max_rank();
    artifacts.tau = Some(tau.clone());

    // ---- certification ----------------------------------------------
    let t0 = std::time::Instant::now();
    let coll = match collocate_fem_fields(&u_h, &tau, &grid, &quad) {
        Ok(c) => c,
        Err(e) => fail!("estimate", e),
    };
    let terms = match eta_terms(
        &coll,
        &fields.kappa_tilde_inv,
        &fields.kappa2,
        &fields.f,
        &grid,
        &quad,
        EtaAssembly::Auto,
    ) {
        Ok(t) => t,
        Err(e) => fail!("estimate", e),
    };
    let kappa_inv_sup = if problem.kappa_strictly_positive && problem.kappa2_floor > 0.0 {
        Some(1.0 / problem.kappa2_floor.sqrt())
    } else {
        None
    };
    let osc = oscillation_bound(terms.r_minus_pr_norm, &grid, kappa_inv_sup);
    let cert = match certify(
        &terms,
        osc,
        kappa0,
        problem.kappa_strictly_positive,
        &grid,
        cfg.delta_p,
        cfg.delta_c,
    ) {
        Ok(c) => c,
        Err(e) => fail!("estimate", e),
    };
    rec.eta1_norm = cert.eta1_norm;
    rec.eta2_norm = cert.eta2_norm;
    rec.osc_bound = cert.osc_bound;
    rec.shift_term = cert.shift_term;
    rec.total_bound = cert.total_bound;
    rec.poincare_c_p = cert.poincare_c_p;
    rec.max_rank_estimator = cert.max_intermediate_rank;
    rec.eta_assembly = cert.assembly.clone();
    rec.t_estimate = t0.elapsed().as_secs_f64();

    // ---- reference energy error --------------------------------------
    if cfg.compute_energy_error && problem.exact_u.is_some() {
        let t0 = std::time::Instant::now();
        match reference_energy_error(&problem, &fields, &coll, &quad, cfg) {
            Ok(err) => {
                rec.energy_error = Some(err);
                if err > 0.0 {
                    rec.i_eff = Some(cert.total_bound / err);
                }
            }
            Err(e) => fail!("energy", e),
        }
        rec.t_energy = t0.elapsed().as_secs_f64();
    }

    (rec, artifacts)
}

/// Collocated problem fields plus the derived shifted-coefficient fields.
pub struct PipelineFields {
    pub f: CollocatedField,
    pub kappa2: CollocatedField,
    pub fields: ProblemFields,
    pub kappa_tilde_inv: CollocatedField,
    pub cross_converged: bool,
}

impl std::ops::Deref for PipelineFields {
    type Target = ProblemFields;
    fn deref(&self) -> &ProblemFields {
        &self.fields
    }
}

fn collocate_problem_fields(
    problem: &ProblemSpec,
    quad: &QuadratureGrid,
    kappa0: f64,
    cfg: &RunConfig,
) -> Result<PipelineFields> {
    let mut converged = true;
    let mut cross_opts = CrossOptions::with_tol(cfg.delta_c);
    cross_opts.max_rank = 80;

    // f
    let f_field = if let Some(b) = &problem.exact_f_tt {
        CollocatedField::new(b(quad)?, quad, cfg.delta_c, "f")?
    } else {
        cross_opts.seed = cfg.seed.wrapping_add(101);
        let (fld, res) = collocate(problem.f_fn.as_ref(), quad, &cross_opts, "f")?;
        converged &= res.converged;
        fld
    };

    // kappa^2
    let kappa2_field = if let Some(c) = problem.kappa2_const {
        CollocatedField::new(TtVector::constant(&quad.dims(), c)?, quad, cfg.delta_c, "kappa2")?
    } else if let Some(b) = &problem.exact_kappa2_tt {
        CollocatedField::new(b(quad)?, quad, cfg.delta_c, "kappa2")?
    } else {
        cross_opts.seed = cfg.seed.wrapping_add(102);
        let (fld, res) = collocate(problem.kappa2_fn.as_ref(), quad, &cross_opts, "kappa2")?;
        converged &= res.converged;
        fld
    };

    // shifted coefficient fields
    let (sigma_inv2, kappa_tilde_inv, kappa_tilde2) = if let Some(c) = problem.kappa2_const {
        let kt = c.max(0.0).sqrt() + kappa0;
        if kt <= 0.0 {
            return Err(Error::InvalidArg(
                "kappa + kappa0 vanishes; choose a positive shift".into(),
            ));
        }
        (
            CollocatedField::new(
                TtVector::constant(&quad.dims(), 1.0 / (kt * kt))?,
                quad,
                cfg.delta_c,
                "sigma_inv2",
            )?,
            CollocatedField::new(
                TtVector::constant(&quad.dims(), 1.0 / kt)?,
                quad,
                cfg.delta_c,
                "kappa_tilde_inv",
            )?,
            CollocatedField::new(
                TtVector::constant(&quad.dims(), kt * kt)?,
                quad,
                cfg.delta_c,
                "kappa_tilde2",
            )?,
        )
    } else {
        let k2 = problem.kappa2_fn.clone();
        let tilde_inv2 = move |x: &[f64]| {
            let kt = k2(x).max(0.0).sqrt() + kappa0;
            1.0 / (kt * kt)
        };
        let k2b = problem.kappa2_fn.clone();
        let tilde_inv1 = move |x: &[f64]| {
            let kt = k2b(x).max(0.0).sqrt() + kappa0;
            1.0 / kt
        };
        cross_opts.seed = cfg.seed.wrapping_add(103);
        let (si2, r1) = collocate(&tilde_inv2, quad, &cross_opts, "sigma_inv2")?;
        cross_opts.seed = cfg.seed.wrapping_add(104);
        let (si1, r2) = collocate(&tilde_inv1, quad, &cross_opts, "kappa_tilde_inv")?;
        converged &= r1.converged && r2.converged;
        if r1.min_sample_value <= 0.0 {
            return Err(Error::InvalidArg(
                "collocated tilde kappa^{-2} attains nonpositive values".into(),
            ));
        }
        let kt2 = if kappa0 == 0.0 {
            CollocatedField::new(kappa2_field.values.clone(), quad, cfg.delta_c, "kappa_tilde2")?
        } else {
            let k2c = problem.kappa2_fn.clone();
            let tilde2 = move |x: &[f64]| {
                let kt = k2c(x).max(0.0).sqrt() + kappa0;
                kt * kt
            };
            cross_opts.seed = cfg.seed.wrapping_add(105);
            let (f, r) = collocate(&tilde2, quad, &cross_opts, "kappa_tilde2")?;
            converged &= r.converged;
            f
        };
        (si2, si1, kt2)
    };

    Ok(PipelineFields {
        f: f_field.clone(),
        kappa2: kappa2_field.clone(),
        fields: ProblemFields {
            sigma_inv2,
            kappa2: kappa2_field,
            kappa_tilde2,
            f: f_field,
        },
        kappa_tilde_inv,
    cross_converged: converged,
    })
}

fn solve_primal(
    problem: &ProblemSpec,
    fields: &PipelineFields,
    grid: &CartesianGrid,
    quad: &QuadratureGrid,
    cfg: &RunConfig,
    rec: &mut RunRecord,
) -> Result<TtVector> {
    let mut a = assemble_laplace_tt(grid);
    let reaction_is_zero = problem.kappa2_const == Some(0.0);
    if !reaction_is_zero {
        let r = assemble_reaction_tt(&fields.kappa2, grid, quad)?;
        a = a.add(&r)?;
    }
    let b = assemble_rhs_tt(&fields.f, grid, quad)?;
    let system = PrimalSystem::with_dirichlet_boundary(a, b);
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let x0 = initial_guess(&grid.dims_nodal(), 2, true, &mut rng)?;
    let opts = AlsOptions {
        max_rank: cfg.max_rank_u,
        round_tol: Some(0.1 * cfg.delta_p),
        ..AlsOptions::default()
    };
    let (u, report) = als_solve(&system, &x0, cfg.delta_p, &opts)?;
    rec.sweeps_primal = report.sweeps;
    rec.primal_converged = report.converged;
    Ok(u)
}

fn solve_complementary(
    fields: &PipelineFields,
    u_h: &TtVector,
    grid: &CartesianGrid,
    quad: &QuadratureGrid,
    cfg: &RunConfig,
    rec: &mut RunRecord,
) -> Result<BlockTtVector> {
    let system = assemble_complementary(&fields.fields, u_h, grid, quad, 0.1 * cfg.delta_c)?;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let tau0 = BlockTtVector::random_rank(&system.dims, system.ncomp, 2, &mut rng)?;
    let opts = BlockAlsOptions { max_rank: cfg.max_rank_tau, ..BlockAlsOptions::default() };
    let (tau, report) = block_als_solve(&system, &tau0, cfg.delta_c, &opts)?;
    rec.sweeps_compl = report.sweeps;
    rec.compl_converged = report.converged;
    rec.gmres_iterations = report.local_stats.iterative_iterations;
    Ok(tau)
}

fn reference_energy_error(
    problem: &ProblemSpec,
    fields: &PipelineFields,
    coll: &crate::estimator::CollocatedSolution,
    quad: &QuadratureGrid,
    cfg: &RunConfig,
) -> Result<f64> {
    let d = quad.dim();
    let tol = (cfg.delta_c * 1e-3).max(1e-12).min(1e-10);
    let u_vals = if let Some(b) = &problem.exact_u_tt {
        b(quad)?
    } else {
        let mut opts = CrossOptions::with_tol(tol);
        opts.seed = cfg.seed.wrapping_add(201);
        opts.max_rank = 80;
        let (fld, _) = collocate(
            problem
                .exact_u
                .as_ref()
                .ok_or_else(|| Error::InvalidArg("missing exact solution".into()))?
                .as_ref(),
            quad,
            &opts,
            "u_exact",
        )?;
        fld.values
    };
    let mut grads = Vec::with_capacity(d);
    for s in 0..d {
        let g = if let Some(b) = &problem.exact_grad_tt {
            b(quad, s)?
        } else {
            let gfn = problem
                .exact_grad
                .as_ref()
                .ok_or_else(|| Error::InvalidArg("missing exact gradient".into()))?
                .clone();
            let gs = move |x: &[f64]| gfn(x, s);
            let mut opts = CrossOptions::with_tol(tol);
            opts.seed = cfg.seed.wrapping_add(202 + s as u64);
            opts.max_rank = 80;
            let (fld, _) = collocate(&gs, quad, &opts, "grad_u_exact")?;
            fld.values
        };
        grads.push(g);
    }
    energy_error(&u_vals, &grads, &fields.kappa2, coll, quad)
}

// ---------------------------------------------------------------------------
// sweeps and result emission
// ---------------------------------------------------------------------------

/// Sweepable configuration axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    N,
    D,
    Kappa2,
    Alpha,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepAxis::N),
            "d" | "dim" => Ok(SweepAxis::D),
            "kappa2" => Ok(SweepAxis::Kappa2),
            "alpha" => Ok(SweepAxis::Alpha),
            other => Err(Error::InvalidArg(format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// Run the pipeline for every value of the axis; failures are carried in
/// the individual records.
pub fn sweep(template: &RunConfig, axis: SweepAxis, values: &[f64]) -> Vec<RunRecord> {
    values
        .iter()
        .map(|&v| {
            let mut cfg = template.clone();
            match axis {
                SweepAxis::N => cfg.n = v as usize,
                SweepAxis::D => cfg.d = v as usize,
                SweepAxis::Kappa2 => cfg.kappa2 = Some(v),
                SweepAxis::Alpha => cfg.alpha = Some(v),
            }
            run(&cfg)
        })
        .collect()
}

/// Least-squares slope of log(y) against log(x).
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..xs.len() {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    num / den
}

/// Fixed CSV column set, one row per run; field names match [`RunRecord`].
pub const CSV_COLUMNS: &[&str] = &[
    "problem",
    "d",
    "n",
    "m",
    "kappa2_param",
    "alpha",
    "delta_p",
    "delta_c",
    "kappa0",
    "seed",
    "eta1_norm",
    "eta2_norm",
    "osc_bound",
    "shift_term",
    "total_bound",
    "poincare_c_p",
    "energy_error",
    "i_eff",
    "t_collocate",
    "t_primal",
    "t_compl",
    "t_estimate",
    "t_energy",
    "max_rank_u",
    "max_rank_tau",
    "max_rank_estimator",
    "sweeps_primal",
    "sweeps_compl",
    "primal_converged",
    "compl_converged",
    "cross_converged",
    "gmres_iterations",
    "eta_assembly",
    "failed_stage",
    "error",
];

pub fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

fn csv_opt(v: &Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

fn csv_opt_str(v: &Option<String>) -> String {
    v.as_deref().map(csv_escape).unwrap_or_default()
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv_row(r: &RunRecord) -> String {
    [
        csv_escape(&r.problem),
        r.d.to_string(),
        r.n.to_string(),
        r.m.to_string(),
        csv_opt(&r.kappa2_param),
        csv_opt(&r.alpha),
        format!("{:.17e}", r.delta_p),
        format!("{:.17e}", r.delta_c),
        format!("{:.17e}", r.kappa0),
        r.seed.to_string(),
        format!("{:.17e}", r.eta1_norm),
        format!("{:.17e}", r.eta2_norm),
        format!("{:.17e}", r.osc_bound),
        format!("{:.17e}", r.shift_term),
        format!("{:.17e}", r.total_bound),
        format!("{:.17e}", r.poincare_c_p),
        csv_opt(&r.energy_error),
        csv_opt(&r.i_eff),
        format!("{:.6e}", r.t_collocate),
        format!("{:.6e}", r.t_primal),
        format!("{:.6e}", r.t_compl),
        format!("{:.6e}", r.t_estimate),
        format!("{:.6e}", r.t_energy),
        r.max_rank_u.to_string(),
        r.max_rank_tau.to_string(),
        r.max_rank_estimator.to_string(),
        r.sweeps_primal.to_string(),
        r.sweeps_compl.to_string(),
        r.primal_converged.to_string(),
        r.compl_converged.to_string(),
        r.cross_converged.to_string(),
        r.gmres_iterations.to_string(),
        csv_escape(&r.eta_assembly),
        csv_opt_str(&r.failed_stage),
        csv_opt_str(&r.error),
    ]
    .join(",")
}

pub fn json_line(r: &RunRecord) -> String {
    serde_json::to_string(r).expect("record serialization")
}
