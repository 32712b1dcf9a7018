//! Offset response of rectangular, Gaussian and Hermite 90° pulses.

use std::f64::consts::PI;

use spinbench::shapes::{frequency_response, ShapeFamily, ShapeSpec};

fn main() -> spinbench::Result<()> {
    let grid: Vec<f64> = (0..=16).map(|k| -4000.0 + 500.0 * k as f64).collect();
    let shapes = [
        ("rect", ShapeSpec::rectangular()),
        ("gaussian", ShapeSpec::new(ShapeFamily::gaussian(), 128)),
        ("hermite", ShapeSpec::new(ShapeFamily::hermite_90(), 128)),
    ];
    print!("{:>8}", "Hz");
    for (name, _) in &shapes {
        print!("  {name:>9}");
    }
    println!("   (|Mxy| after a 1 ms 90)");
    let resp: Vec<_> = shapes.iter().map(|(_, s)| frequency_response(s, 1e-3, PI / 2.0, &grid, [0.0, 0.0, 1.0])).collect::<Result<_, _>>()?;
    for (i, d) in grid.iter().enumerate() {
        print!("{d:8.0}");
        for r in &resp {
            print!("  {:9.4}", r[i].mxy());
        }
        println!();
    }
    Ok(())
}
