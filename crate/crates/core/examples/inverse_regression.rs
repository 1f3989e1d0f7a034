// The inverse regression surface `m̂(t, y)` and its covariance `R̂_e`
// over subjects whose response falls inside the trimming interval.

use sfsir::covariance::WeightScheme;
use sfsir::data::{trim_interval, TimeGrid, TrimSpec};
use sfsir::edr::eigendecompose_surface;
use sfsir::inverse_regression::{estimate_m, estimate_re, kept_columns};
use sfsir::kernels::KernelSpec;
use sfsir::simulate::{Density, SimulationConfig, Simulator};

fn run_example() -> sfsir::Result<()> {
    let (data, _) = Simulator::new(SimulationConfig::scenario(80, Density::Dense, false, 2))?.replication(0)?;
    let grid = TimeGrid::uniform(51)?;
    let y = data.responses();
    let trim = TrimSpec::new(0.05)?;
    let interval = trim_interval(&y, trim)?;
    println!(
        "trimming interval [{:.3}, {:.3}] keeps {} of {} subjects",
        interval.lo,
        interval.hi,
        kept_columns(&y, interval).len(),
        y.len()
    );

    let m = estimate_m(&data, WeightScheme::Obs, 0.1, 0.3, &grid, &y, KernelSpec::EPANECHNIKOV)?;
    let re = estimate_re(&m, &y, trim)?;
    let eig = eigendecompose_surface(&re)?;
    println!("leading eigenvalues of R_e: {:.4?}", &eig.eigenvalues[..4]);
    println!("m(t, y) at t = 0.5 for the first five subjects: {:.3?}", &m.values.row(25).iter().take(5).collect::<Vec<_>>());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
