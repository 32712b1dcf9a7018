//! Hadamard refocusing on five spins, keeping only the 1-3 coupling.

use spinbench::compile::{hadamard_scheme, verify_scheme};
use spinbench::spinsys::{CouplingModel, SpinSystem};

fn main() -> spinbench::Result<()> {
    let n = 5;
    let j: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| if a == b { 0.0 } else { 10.0 * (a + b + 1) as f64 }).collect()).collect();
    let sys = SpinSystem::new(vec![0.0; n], j, CouplingModel::WeakZz)?;
    let scheme = hadamard_scheme(n, Some((0, 2)))?.with_total_duration(0.01);
    print!("{}", scheme.to_csv());
    let r = verify_scheme(&scheme, &sys)?;
    for (a, row) in r.effective_j_hz.iter().enumerate() {
        for (b, jeff) in row.iter().enumerate().skip(a + 1) {
            println!("J{}{}: {:8.4} -> {:+.2e} Hz", a + 1, b + 1, sys.coupling(a, b), jeff);
        }
    }
    println!("propagator deviation {:.2e}", r.unitary_deviation);
    Ok(())
}
