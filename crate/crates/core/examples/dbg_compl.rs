use rand::SeedableRng;
use ttrd_core::complementary::{assemble_complementary, block_als_solve, BlockAlsOptions, ProblemFields};
use ttrd_core::cross::CollocatedField;
use ttrd_core::fem::{CartesianGrid, QuadratureGrid};
use ttrd_core::pipeline::RunConfig;
use ttrd_core::primal::{als_solve, assemble_laplace_tt, assemble_rhs_tt, initial_guess, AlsOptions, PrimalSystem};
use ttrd_core::problems::by_name;
use ttrd_core::tt::{BlockTtVector, TtVector};

fn main() {
    let cfg = RunConfig::new("const-kappa", 3, 16);
    let problem = by_name("const-kappa", 3, Some(0.0), None).unwrap();
    let grid = CartesianGrid::uniform(&problem.bounds, cfg.n).unwrap();
    let quad = QuadratureGrid::new(&grid, 4).unwrap();
    let kappa0 = 0.1;
    let kt = kappa0;
    let dims_q = quad.dims();
    let cst = |c: f64, l: &str| CollocatedField::new(TtVector::constant(&dims_q, c).unwrap(), &quad, 1e-7, l).unwrap();
    let f_tt = (problem.exact_f_tt.as_ref().unwrap())(&quad).unwrap();
    let fields = ProblemFields {
        sigma_inv2: cst(1.0 / (kt * kt), "sigma_inv2"),
        kappa2: cst(0.0, "kappa2"),
        kappa_tilde2: cst(kt * kt, "kappa_tilde2"),
        f: CollocatedField::new(f_tt, &quad, 1e-7, "f").unwrap(),
    };
    // primal
    let a = assemble_laplace_tt(&grid);
    let b = assemble_rhs_tt(&fields.f, &grid, &quad).unwrap();
    let system = PrimalSystem::with_dirichlet_boundary(a, b);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let x0 = initial_guess(&grid.dims_nodal(), 2, true, &mut rng).unwrap();
    let opts = AlsOptions { round_tol: Some(1e-4), ..AlsOptions::default() };
    let (u_h, rep) = als_solve(&system, &x0, 1e-3, &opts).unwrap();
    println!("primal: sweeps={} rank={} changes={:?}", rep.sweeps, u_h.max_rank(), rep.solution_change);

    let sys = assemble_complementary(&fields, &u_h, &grid, &quad, 1e-8).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let tau0 = BlockTtVector::random_rank(&sys.dims, sys.ncomp, 2, &mut rng).unwrap();
    let bopts = BlockAlsOptions { max_sweeps: 12, ..BlockAlsOptions::default() };
    let (tau, brep) = block_als_solve(&sys, &tau0, 1e-7, &bopts).unwrap();
    println!("compl: sweeps={} conv={} rank={} iters={} fails={}",
        brep.sweeps, brep.converged, tau.max_rank(),
        brep.local_stats.iterative_iterations, brep.local_stats.iterative_failures);
    println!("changes={:?}", brep.solution_change);
    println!("tau ranks={:?}", tau.ranks());
}
