// Kernel values, moments and the bandwidth-scaled form.

use sfsir::kernels::{KernelFamily, KernelSpec};
use sfsir::quadrature::simpson;

fn run_example() -> sfsir::Result<()> {
    for family in [KernelFamily::Epanechnikov, KernelFamily::Quartic, KernelFamily::Uniform] {
        let k = KernelSpec::new(family);
        println!(
            "{family:?}: K(0)={:.4} mass={:.6} first={:.1e} second={:.6}",
            k.eval(0.0),
            k.moment(0),
            k.moment(1),
            k.moment(2)
        );
    }

    let k = KernelSpec::EPANECHNIKOV;
    let h = 0.1;
    let mass = simpson(|u| k.scaled(u, h).unwrap_or(0.0), -h, h, 2000);
    println!("K_h integrates to {mass:.10} for h = {h}");
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
