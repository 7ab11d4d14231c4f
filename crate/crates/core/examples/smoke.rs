use ttrd_core::pipeline::{run, RunConfig};

fn main() {
    // small Poisson case with the shift
    let mut cfg = RunConfig::new("const-kappa", 2, 8);
    cfg.kappa2 = Some(0.0);
    cfg.delta_p = 1e-6;
    cfg.delta_c = 1e-8;
    let rec = run(&cfg);
    println!("{}", ttrd_core::pipeline::json_line(&rec));

    // d=3 n=16, the Figure-1 style configuration
    let mut cfg = RunConfig::new("const-kappa", 3, 16);
    cfg.kappa2 = Some(0.0);
    cfg.kappa0 = Some(0.1);
    cfg.delta_p = 1e-3;
    cfg.delta_c = 1e-7;
    let rec = run(&cfg);
    println!("i_eff-1 = {:?}  (paper: 2.7345e-03)", rec.i_eff.map(|v| v - 1.0));
    println!("energy err rel = {:?} (expect ~0.0625/2.1333=0.0293 abs; rel-of-norm...)", rec.energy_error);
    println!("{}", ttrd_core::pipeline::json_line(&rec));
}
