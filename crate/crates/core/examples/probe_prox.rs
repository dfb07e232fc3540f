use bergman_core::oracle::*;
use bergman_core::RadialProfile;
use std::time::Instant;

fn main() {
    let q = RadialProfile::exp_beta(1.0).unwrap();
    let t = (-2.5f64).exp() * (1.0 + 9e-4);
    let t0 = Instant::now();
    let prox = OracleOpts::with_tol(1e-4);
    let k = kernel_diag(&q, 0.4, t, &prox);
    match k {
        Ok(v) => println!(
            "kernel ln={:.5} rel={:.2e} n_max={} nodes={} flags={:?} in {:?}",
            v.value_log, v.rel_err, v.n_max_used, v.tau_nodes_used, v.flags, t0.elapsed()
        ),
        Err(e) => println!("ERR {e} in {:?}", t0.elapsed()),
    }
}
