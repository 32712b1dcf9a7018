//! Rabi nutation of one on-resonance spin driven at 250 Hz.

use spinbench::experiments::{run_experiment, ExperimentKind, ExperimentParams};
use spinbench::spinsys::SpinSystem;

fn main() -> spinbench::Result<()> {
    let sys = SpinSystem::uncoupled(vec![0.0])?;
    let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 2e-4).collect();
    let r = run_experiment(&sys, ExperimentKind::Rabi, &ExperimentParams::new(grid).with_amplitude(250.0), None)?;
    println!("{:>8}  {:>8}", "t (ms)", "p1");
    for (t, p) in r.abscissa_s.iter().zip(r.series("p1").unwrap()) {
        let bar = "#".repeat((p * 40.0).round() as usize);
        println!("{:8.2}  {:8.5}  {bar}", t * 1e3, p);
    }
    Ok(())
}
