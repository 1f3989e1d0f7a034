// Draws a synthetic dataset, writes it as CSV and reads it back.

use sfsir::data::load_dataset;
use sfsir::simulate::{Density, SimulationConfig, Simulator};

fn run_example() -> sfsir::Result<()> {
    let config = SimulationConfig::scenario(40, Density::Sparse, true, 11);
    let sim = Simulator::new(config)?;
    let (data, truth) = sim.replication(0)?;
    let counts = data.counts();
    println!(
        "{} sites, {} observations, counts between {} and {}",
        data.n(),
        data.total_observations(),
        counts.iter().min().unwrap_or(&0),
        counts.iter().max().unwrap_or(&0)
    );
    println!("score variances {:?}", truth.score_variances);

    let dir = std::env::temp_dir().join(format!("sfsir-simulate-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| sfsir::Error::Validation(e.to_string()))?;
    let (obs, resp) = (dir.join("observations.csv"), dir.join("responses.csv"));
    data.save(&obs, &resp)?;
    let back = load_dataset(&obs, &resp)?;
    println!("round trip identical: {}", back == data);
    let _ = std::fs::remove_dir_all(&dir);

    // a second replication reuses nothing but the seed
    let (other, _) = sim.replication(1)?;
    println!("replication 1 has {} observations", other.total_observations());
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
