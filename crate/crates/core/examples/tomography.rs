//! State tomography of a Bell pair from noisy readouts, then process
//! tomography of a CNOT.

use std::f64::consts::PI;

use spinbench::compile::{canonical_cnot, Axis, SeqItem};
use spinbench::evolve::DensityMatrix;
use spinbench::metrics::Channel;
use spinbench::spinsys::all_labels;
use spinbench::tomo::{
    chi_of_unitary, default_settings, process_tomography, simulate_process, simulate_readouts, standard_input_basis,
    state_tomography, ReadoutNoise, StateTomographyOptions,
};

fn main() -> spinbench::Result<()> {
    let u = canonical_cnot();
    let h = SeqItem::rotation(0, Axis::Y, PI / 2.0).ideal_unitary(2).expect("hard pulse");
    let bell = DensityMatrix::ground(2).evolve_unitary(&(&u * &h));
    let settings = default_settings(2);
    for sigma in [0.0, 0.01, 0.05] {
        let noise = (sigma > 0.0).then_some(ReadoutNoise { sigma, seed: 3 });
        let vals = simulate_readouts(&bell, &settings, noise)?;
        let raw = state_tomography(2, &settings, &vals, StateTomographyOptions { project_psd: false })?;
        let fixed = state_tomography(2, &settings, &vals, StateTomographyOptions { project_psd: true })?;
        println!(
            "sigma {sigma:.2}: error {:.2e}, min eigenvalue {:+.3e} raw / {:+.3e} projected",
            raw.max_abs_diff(bell.operator()),
            raw.hermitian_eigen().0[0],
            fixed.hermitian_eigen().0[0]
        );
    }
    let inputs = standard_input_basis(2);
    let chi = process_tomography(&inputs, &simulate_process(&Channel::Unitary(u.clone()), &inputs), Default::default())?;
    println!("CNOT chi error {:.2e}, trace-preservation residual {:.2e}", chi.max_abs_diff(&chi_of_unitary(&u)?), chi.tp_residual());
    let names: Vec<String> = all_labels(2).iter().map(|l| l.iter().map(|p| format!("{p:?}")).collect()).collect();
    for (p, lp) in names.iter().enumerate() {
        for (q, lq) in names.iter().enumerate() {
            let z = chi.chi[(p, q)];
            if z.norm() > 1e-9 {
                println!("  chi[{lp},{lq}] = {:+.3}{:+.3}i", z.re, z.im);
            }
        }
    }
    Ok(())
}
