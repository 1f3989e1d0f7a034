// End-to-end fit: bandwidths by cross-validation, both whitening choices,
// the link function along the leading direction, and the CSV outputs.

use sfsir::covariance::WeightScheme;
use sfsir::edr::{angle_degrees, estimate_link};
use sfsir::pipeline::{fit, FitConfig, Method};
use sfsir::simulate::{Density, SimulationConfig, Simulator};

fn run_example() -> sfsir::Result<()> {
    let (data, truth) = Simulator::new(SimulationConfig::scenario(50, Density::Dense, true, 4))?.replication(0)?;
    let config = FitConfig {
        scheme: WeightScheme::Subj,
        ..FitConfig::default()
    };
    let out = fit(&data, &config)?;
    println!("{:?}", out.bandwidths);

    for method in Method::ALL {
        let Some(r) = out.directions_for(method) else { continue };
        println!(
            "{method}: L = {}, eigenvalue {:.4}, angle to beta {:.1} degrees",
            r.truncation_l,
            r.eigenvalues[0],
            angle_degrees(&out.grid, &r.directions[0], &truth.beta)
        );
    }

    let r = out.directions_for(Method::Sfsir).expect("requested by default");
    let points: Vec<f64> = (0..5).map(|i| -1.0 + 0.5 * i as f64).collect();
    let link = estimate_link(&data, &out.mean, &r.directions[0], &out.grid, 0.5, &points, config.kernel)?;
    println!("link at {:?}: {:.3?}", link.points, link.values);

    let dir = std::env::temp_dir().join(format!("sfsir-fit-{}", std::process::id()));
    let written = out.write(&dir)?;
    println!("wrote {} files", written.len());
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
