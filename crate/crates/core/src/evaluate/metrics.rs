//! Integrated squared bias, integrated variance and MISE across replications.

use serde::Serialize;

use crate::data::TimeGrid;
use crate::edr::align_sign;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyMetrics {
    pub isb: f64,
    pub ivar: f64,
    pub mise: f64,
    pub replications: usize,
}

/// Pointwise mean and standard deviation of sign-aligned estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Band {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

fn aligned(grid: &TimeGrid, estimates: &[Vec<f64>], truth: &[f64]) -> Result<Vec<Vec<f64>>> {
    if estimates.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "integrated variance needs at least 2 replications, got {}",
            estimates.len()
        )));
    }
    if truth.len() != grid.len() || estimates.iter().any(|e| e.len() != grid.len()) {
        return Err(Error::InvalidArgument(format!(
            "estimates and truth must all have {} grid values",
            grid.len()
        )));
    }
    Ok(estimates.iter().map(|e| align_sign(grid, e, truth)).collect())
}

/// Pointwise band after sign alignment; the SD uses divisor `R`.
pub fn band(grid: &TimeGrid, estimates: &[Vec<f64>], truth: &[f64]) -> Result<Band> {
    let (bias, sd) = deviations(grid, estimates, truth)?;
    Ok(Band {
        mean: truth.iter().zip(&bias).map(|(t, b)| t + b).collect(),
        sd,
    })
}

/// Pointwise mean error and SD, computed on `β̂_r − β` so that exact
/// estimates give exact zeros.
fn deviations(grid: &TimeGrid, estimates: &[Vec<f64>], truth: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let est = aligned(grid, estimates, truth)?;
    let r = est.len() as f64;
    let dev: Vec<Vec<f64>> = est.iter().map(|e| e.iter().zip(truth).map(|(a, b)| a - b).collect()).collect();
    let p = grid.len();
    let bias: Vec<f64> = (0..p).map(|k| dev.iter().map(|d| d[k]).sum::<f64>() / r).collect();
    let sd = (0..p)
        .map(|k| (dev.iter().map(|d| (d[k] - bias[k]).powi(2)).sum::<f64>() / r).sqrt())
        .collect();
    Ok((bias, sd))
}

/// `ISB = ∫(β̄ − β)²`, `IVAR = ∫ R⁻¹ Σ_r (β̂_r − β̄)²`, `MISE = ISB + IVAR`,
/// by the grid trapezoid rule after aligning each estimate's sign to `truth`.
pub fn compute_metrics(grid: &TimeGrid, estimates: &[Vec<f64>], truth: &[f64]) -> Result<StudyMetrics> {
    let (bias, sd) = deviations(grid, estimates, truth)?;
    let w = grid.quadrature_weights();
    let isb: f64 = (0..grid.len()).map(|k| w[k] * bias[k] * bias[k]).sum();
    let ivar: f64 = (0..grid.len()).map(|k| w[k] * sd[k] * sd[k]).sum();
    Ok(StudyMetrics {
        isb,
        ivar,
        mise: isb + ivar,
        replications: estimates.len(),
    })
}
