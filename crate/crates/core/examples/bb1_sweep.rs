//! Average gate fidelity of a BB1 90° against a plain 90° under amplitude error.

use std::f64::consts::PI;

use spinbench::composite::{composite_library, fidelity_sweep, CompositeName, ErrorKind, RotationSpec};

fn main() -> spinbench::Result<()> {
    let target = RotationSpec::x(PI / 2.0).ideal();
    let eps: Vec<f64> = (0..=12).map(|k| -0.3 + 0.05 * k as f64).collect();
    let bb1 = fidelity_sweep(&composite_library(CompositeName::Bb1, PI / 2.0)?, &target, ErrorKind::AmplitudeLinear, &eps)?;
    let plain = fidelity_sweep(&[RotationSpec::x(PI / 2.0)], &target, ErrorKind::AmplitudeLinear, &eps)?;
    println!("{:>6}  {:>12}  {:>12}", "eps", "plain", "bb1");
    for (p, b) in plain.iter().zip(&bb1) {
        println!("{:6.2}  {:12.9}  {:12.9}", p.epsilon, p.avg_gate_fidelity, b.avg_gate_fidelity);
    }
    Ok(())
}
