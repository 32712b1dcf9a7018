//! Spectrum of an AX spin pair after a hard 90 on both spins.

use std::f64::consts::PI;

use spinbench::compile::{Axis, SeqItem};
use spinbench::evolve::DensityMatrix;
use spinbench::experiments::{spectrum, Acquisition};
use spinbench::spinsys::{CouplingModel, SpinSystem};
use spinbench::Operator;

fn main() -> spinbench::Result<()> {
    let sys = SpinSystem::pair(600.0, 0.0, 50.0, CouplingModel::WeakZz)?;
    let tip = (0..2).fold(Operator::identity(4), |u, k| &SeqItem::rotation(k, Axis::X, PI / 2.0).ideal_unitary(2).expect("hard pulse") * &u);
    let acq = Acquisition { dwell_s: 5e-4, points: 1024, line_broadening_hz: 2.0 };
    let s = spectrum(&sys, &DensityMatrix::ground(2).evolve_unitary(&tip), &acq)?;
    println!("resolution {:.3} Hz", s.bin_hz());
    for f in s.peaks(0.1) {
        println!("line at {f:8.2} Hz");
    }
    Ok(())
}
