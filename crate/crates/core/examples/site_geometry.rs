// Spacing diagnostics for a site configuration and the default spatial
// bandwidth that follows from it.

use sfsir::data::SiteGeometry;
use sfsir::pipeline::spatial_bandwidth_rule;

fn run_example() -> sfsir::Result<()> {
    let sites: Vec<[f64; 2]> = (0..25).map(|i| [(i % 5) as f64 * 0.25, (i / 5) as f64 * 0.25]).collect();
    let g = SiteGeometry::from_sites(&sites)?;
    println!("5x5 lattice: delta_n = {:.3}, Delta_n = {:.3}, diameter = {:.3}", g.delta_n, g.big_delta_n, g.diameter);
    println!("nearest neighbours of the centre site: {:?}", g.nearest(12, 4));
    println!("default b = {:.4}", spatial_bandwidth_rule(sites.len(), g.diameter, 1.0));
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
