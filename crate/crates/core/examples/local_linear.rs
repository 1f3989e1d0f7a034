// One- and two-dimensional local linear smoothing, including the fallbacks
// used when a window holds too few points.

use sfsir::kernels::KernelSpec;
use sfsir::smoothing::{local_linear_fit, LocalLinearSmoother};

fn run_example() -> sfsir::Result<()> {
    let k = KernelSpec::EPANECHNIKOV;

    // noise-free sine on 200 points
    let x: Vec<[f64; 1]> = (0..200).map(|i| [i as f64 / 199.0]).collect();
    let y: Vec<f64> = x.iter().map(|p| (2.0 * std::f64::consts::PI * p[0]).sin()).collect();
    let smoother = LocalLinearSmoother::with_kernel(x, y, vec![1.0; 200], k, [0.08])?;
    for t in [0.0, 0.25, 0.5, 0.9] {
        let fit = smoother.fit([t]);
        println!("sin fit at {t:.2}: {:+.4} (slope {:+.3})", fit.intercept, fit.slopes[0]);
    }

    // affine surfaces are reproduced exactly
    let pts: Vec<[f64; 2]> = (0..100).map(|i| [(i % 10) as f64 / 9.0, (i / 10) as f64 / 9.0]).collect();
    let z: Vec<f64> = pts.iter().map(|p| 1.0 + 2.0 * p[0] - 3.0 * p[1]).collect();
    let fit = local_linear_fit(&pts, &z, &vec![1.0; 100], [k, k], [0.3, 0.3], [0.4, 0.7])?;
    println!("affine surface at (0.4, 0.7): {:.12} (exact {:.12})", fit.intercept, 1.0 + 0.8 - 2.1);

    // a window with a single point falls back to a local constant
    let fit = local_linear_fit(&[[0.0], [0.5]], &[1.0, 3.0], &[1.0, 1.0], [k], [0.2], [0.45])?;
    println!("sparse window: {:?} -> {}", fit.status, fit.intercept);
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
