// Subject-level K-fold cross-validation for the three bandwidth targets.

use sfsir::covariance::WeightScheme;
use sfsir::evaluate::{cross_validate, default_candidates, CvPlan, CvTarget};
use sfsir::kernels::KernelSpec;
use sfsir::simulate::{Density, SimulationConfig, Simulator};

fn run_example() -> sfsir::Result<()> {
    let (data, _) = Simulator::new(SimulationConfig::scenario(40, Density::Sparse, true, 9))?.replication(0)?;
    let k = KernelSpec::EPANECHNIKOV;
    let scheme = WeightScheme::Subj;

    let plan = CvPlan::new(3, 0, default_candidates(&data, CvTarget::Mean))?;
    let mean = cross_validate(&data, &plan, CvTarget::Mean, scheme, k)?;
    for (c, s) in mean.candidates.iter().zip(&mean.scores) {
        println!("h_mu = {:.4}: held-out SSE {}", c[0], s.map_or("n/a".into(), |v| format!("{v:.4}")));
    }
    let h_mu = mean.selected[0];
    println!("selected h_mu = {h_mu:.4}");

    for target in [CvTarget::Gamma { h_mu }, CvTarget::M] {
        let plan = CvPlan::new(3, 0, default_candidates(&data, target))?;
        let out = cross_validate(&data, &plan, target, scheme, k)?;
        println!("{}: {} candidates, selected {:.4?}", target.name(), out.candidates.len(), out.selected);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
