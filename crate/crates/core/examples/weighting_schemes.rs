// OBS, SUBJ and mixed weights for unequal observation counts.

use sfsir::covariance::{cross_pair_weights, mean_weights, within_pair_weights, WeightScheme};

fn run_example() -> sfsir::Result<()> {
    let counts = [2usize, 3, 10, 4];
    for scheme in [WeightScheme::Obs, WeightScheme::Subj, WeightScheme::Mixed { theta: 0.5 }] {
        let w = mean_weights(scheme, &counts)?;
        let v = within_pair_weights(scheme, &counts)?;
        let cross = cross_pair_weights(scheme, &counts)?;
        let mass: f64 = w.iter().zip(&counts).map(|(w, &n)| w * n as f64).sum();
        let pair_mass: f64 = v.iter().zip(&counts).map(|(v, &n)| v * (n * (n - 1)) as f64).sum();
        println!("{scheme}: mean weights {w:.4?}");
        println!("    sum w_i N_i = {mass:.12}, sum v_i N_i(N_i - 1) = {pair_mass:.12}, v(0,2) = {:.5}", cross.get(0, 2));
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
