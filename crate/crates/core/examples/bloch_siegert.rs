//! Two simultaneous Hermite 180s 3273 Hz apart, with and without tracking
//! the Bloch-Siegert phase shift each one imposes on the other.

use std::f64::consts::PI;

use spinbench::shapes::{compose_simultaneous, segments_response, ShapeFamily, ShapeSpec, SimultaneousPulse};

fn main() -> spinbench::Result<()> {
    let shape = ShapeSpec::new(ShapeFamily::hermite_180(), 256);
    let pulse = |carrier_hz| SimultaneousPulse { shape: shape.clone(), t_pw_s: 2650e-6, angle_rad: PI, carrier_hz, phase_rad: PI };
    let offsets = [0.0, 3273.0];
    for track in [false, true] {
        let segs = compose_simultaneous(&[pulse(0.0), pulse(3273.0)], track)?;
        let resp = segments_response(&segs, &offsets, [0.0, 0.0, 1.0])?;
        let label = if track { "tracked" } else { "plain" };
        for r in resp {
            println!("{label:>8} {:6.0} Hz: Mz {:+.4}, |Mxy| {:.4}", r.detuning_hz, r.mz(), r.mxy());
        }
    }
    Ok(())
}
