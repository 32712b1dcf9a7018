//! Searches for a pulse that rotates spin 1 by 90° about x while leaving
//! spin 2, 600 Hz away, untouched.

use std::f64::consts::PI;
use std::time::Instant;

use spinbench::linalg::rotation_2x2;
use spinbench::optimize::{find_pulse, PulseSearchSpec};
use spinbench::spinsys::{CouplingModel, SpinSystem};
use spinbench::Operator;

fn main() -> spinbench::Result<()> {
    let sys = SpinSystem::pair(0.0, 600.0, 50.0, CouplingModel::WeakZz)?;
    let target = rotation_2x2([1.0, 0.0, 0.0], PI / 2.0).kron(&Operator::identity(2));
    let spec = PulseSearchSpec::new(&sys, target);
    let start = Instant::now();
    let found = find_pulse(&sys, &spec, 7)?;
    println!("fidelity {:.6} with {} segments ({} evaluations, {:.1?})", found.fidelity, found.segments.len(), found.evaluations, start.elapsed());
    for (k, s) in found.segments.iter().enumerate() {
        println!(
            "  {k}: {:8.1} us  {:8.1} Hz  phase {:+.3}  tx {:+8.1} Hz",
            s.duration_s * 1e6,
            s.amplitude_hz,
            s.phase_rad,
            s.transmitter_offset_hz
        );
    }
    Ok(())
}
