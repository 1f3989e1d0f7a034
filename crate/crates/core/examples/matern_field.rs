// Matérn covariances and Gaussian random field draws at scattered sites.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sfsir::simulate::matern::{matern_cov, GrfSampler, MaternParams};

fn run_example() -> sfsir::Result<()> {
    let exponential = MaternParams::new(1.0, 0.5, 0.3)?;
    let rough = MaternParams::new(1.0, 0.1, 0.5)?;
    for u in [0.0, 0.05, 0.2, 0.5, 1.0] {
        println!(
            "u = {u:.2}: nu=1/2 {:.4} (exp {:.4}), nu=0.1 {:.4}",
            matern_cov(u, &exponential),
            (-u / 0.3f64).exp(),
            matern_cov(u, &rough)
        );
    }

    // empirical covariance of a pair of sites 0.2 apart
    let sites = [[0.0, 0.0], [0.2, 0.0]];
    let sampler = GrfSampler::new(&sites, &exponential)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let reps = 20_000;
    let cov = (0..reps)
        .map(|_| {
            let a = sampler.sample(&mut rng);
            a[0] * a[1]
        })
        .sum::<f64>()
        / reps as f64;
    println!("empirical C(0.2) = {cov:.3}, model {:.3}", matern_cov(0.2, &exponential));
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
