//! Compiles a CNOT for a weakly coupled pair and checks it against the ideal gate.

use spinbench::compile::{canonical_cnot, two_qubit_gate, GateKind};
use spinbench::evolve::{sequence_unitary, Frame};
use spinbench::spinsys::{CouplingModel, SpinSystem};

fn main() -> spinbench::Result<()> {
    let sys = SpinSystem::pair(300.0, -800.0, 215.0, CouplingModel::WeakZz)?;
    let seq = two_qubit_gate(&sys, GateKind::Cnot, 0, 1)?;
    println!("{}", seq.to_json()?);
    let u = sequence_unitary(&sys, &seq, Frame::MultiplyRotating, None)?;
    println!("duration {:.3} ms, distance to CNOT {:.2e}", seq.duration() * 1e3, u.phase_aligned_distance(&canonical_cnot()));
    Ok(())
}
