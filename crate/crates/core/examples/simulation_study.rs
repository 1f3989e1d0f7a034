// A small Monte Carlo comparison of the two whitening choices.

use sfsir::covariance::WeightScheme;
use sfsir::evaluate::{run_study, Scenario, StudyConfig};
use sfsir::simulate::Density;

fn run_example() -> sfsir::Result<()> {
    let config = StudyConfig {
        n: 30,
        reps: 3,
        seed: 1,
        scenarios: vec![Scenario { density: Density::Sparse, nugget: true }],
        schemes: vec![WeightScheme::Subj],
        ..StudyConfig::default()
    };
    let report = run_study(&config)?;
    let mut table = Vec::new();
    report.write_table(&mut table).expect("writing to memory");
    print!("{}", String::from_utf8_lossy(&table));
    for r in report.records.iter().take(4) {
        println!("rep {} {}: ISE {:.3}, angle {:.1}", r.replication, r.method, r.ise, r.angle_degrees);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
