//! Average Hamiltonian of a dipolar pair under the four-pulse WAHUHA cycle.

use spinbench::avgham::{decoupling_report, CycleName};
use spinbench::spinsys::{CouplingModel, DipolarGeometry, SpinSystem};

fn main() -> spinbench::Result<()> {
    let sys = SpinSystem::pair(400.0, 250.0, 0.0, CouplingModel::DipolarSecular)?;
    for tau in [1e-6, 5e-6, 2e-5] {
        let d = decoupling_report(&sys, Some(&DipolarGeometry::pair(1500.0)), CycleName::Wahuha4, tau)?;
        let r = &d.report;
        println!("tau {:5.1} us  cycle {:6.1} us  |H1| {:.3e}", tau * 1e6, r.cycle_time_s * 1e6, r.h1_norm);
        for (term, v) in &r.residuals {
            println!("  {term:<14} {v:.3e}");
        }
        println!("  zeeman scaling {:?}", r.zeeman_scaling);
    }
    Ok(())
}
