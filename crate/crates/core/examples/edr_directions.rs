// Recovering a known index function from analytic covariance surfaces.
//
// With `R = Σ λ_j φ_j ⊗ φ_j` and `R_e = Rβ ⊗ Rβ`, the leading e.d.r.
// direction is `β` itself whenever `β` lies in the span of the `φ_j`.

use std::f64::consts::PI;

use sfsir::covariance::{CovarianceKind, CovarianceSurface};
use sfsir::data::TimeGrid;
use sfsir::edr::{angle_degrees, edr_directions, TruncationRule};

fn phi(j: usize, t: f64) -> f64 {
    match j {
        0 => 1.0,
        1 => 2f64.sqrt() * (2.0 * PI * t).cos(),
        _ => 2f64.sqrt() * (2.0 * PI * t).sin(),
    }
}

fn run_example() -> sfsir::Result<()> {
    let grid = TimeGrid::uniform(101)?;
    let lambda = [3.0, 1.5, 0.5];
    let coef = [0.2, -0.6, 0.8];
    let beta = |t: f64| (0..3).map(|j| coef[j] * phi(j, t)).sum::<f64>();
    let r_beta = |t: f64| (0..3).map(|j| lambda[j] * coef[j] * phi(j, t)).sum::<f64>();

    let r0 = CovarianceSurface::from_fn(&grid, CovarianceKind::RSpatial, |s, t| {
        (0..3).map(|j| lambda[j] * phi(j, s) * phi(j, t)).sum()
    });
    let re = CovarianceSurface::from_fn(&grid, CovarianceKind::ConditionalRe, |s, t| r_beta(s) * r_beta(t));

    for rule in [TruncationRule::Fixed(2), TruncationRule::Fixed(3), TruncationRule::FractionOfVariance(0.99)] {
        let out = edr_directions(&r0, &re, 1, rule)?;
        let truth: Vec<f64> = grid.points().iter().map(|&t| beta(t)).collect();
        println!(
            "{rule:?}: L = {}, eigenvalue {:.4}, angle to beta {:.3} degrees",
            out.truncation_l,
            out.eigenvalues[0],
            angle_degrees(&grid, &out.directions[0], &truth)
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
