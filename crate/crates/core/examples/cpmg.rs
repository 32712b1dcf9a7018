//! CPMG decay under Ornstein-Uhlenbeck frequency noise for growing pulse counts.

use spinbench::experiments::{describe_fit, run_experiment, ExperimentKind, ExperimentParams, NoiseSpec};
use spinbench::spinsys::SpinSystem;

fn main() -> spinbench::Result<()> {
    let sys = SpinSystem::uncoupled(vec![0.0])?;
    let noise = NoiseSpec::ou(50.0, 0.02, 200, 21);
    let grid: Vec<f64> = (1..=8).map(|k| k as f64 * 0.003).collect();
    for n in [1, 2, 4, 8] {
        let r = run_experiment(&sys, ExperimentKind::Cpmg, &ExperimentParams::new(grid.clone()).with_pulse_count(n), Some(&noise))?;
        let fit = r.fits.get("transverse").map(|f| describe_fit("transverse", f)).unwrap_or_else(|| "no fit".into());
        println!("n = {n}: {fit}");
    }
    Ok(())
}
