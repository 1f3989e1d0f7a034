//! Weighted local linear regression with product kernels in one to three
//! covariate dimensions.
//!
//! Every estimator in the crate reduces to [`LocalLinearSmoother::fit`]:
//! at an evaluation point `x₀` the smoother minimizes
//!
//! ```text
//! Σ_m  w_m ∏_d K_{h_d}(x_{m,d} − x₀_d) · (y_m − a₀ − Σ_d a_d (x_{m,d} − x₀_d))²
//! ```
//!
//! and reports `a₀` as the estimate. Covariates are centered at `x₀` and
//! scaled by their bandwidths before the normal equations are solved.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::kernels::KernelSpec;
use crate::{Error, Result};

/// Singular values of the normal matrix below this fraction of the largest
/// are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Bandwidth multiplier applied when a window is empty.
pub const WIDEN_FACTOR: f64 = 1.5;
/// Number of widening attempts before a point is reported missing.
pub const MAX_WIDENINGS: u32 = 3;

/// How a fit was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    /// Local linear fit with the requested bandwidths.
    Regular,
    /// Fewer than `d + 1` points in the window: weighted mean instead.
    LocalConstant,
    /// The window was empty; bandwidths were multiplied by `1.5^times`.
    Widened { times: u32, local_constant: bool },
    /// Still empty after the last widening.
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalLinearFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub effective_points: usize,
    pub status: FitStatus,
}

impl LocalLinearFit {
    pub fn degenerate(&self) -> bool {
        self.status != FitStatus::Regular
    }

    pub fn is_missing(&self) -> bool {
        self.status == FitStatus::Missing
    }
}

/// Shared data for repeated local linear fits: covariates, targets,
/// observation weights, and one `(kernel, bandwidth)` pair per dimension.
#[derive(Debug, Clone)]
pub struct LocalLinearSmoother<const D: usize> {
    // sorted by the first covariate so that windows are contiguous
    covariates: Vec<[f64; D]>,
    targets: Vec<f64>,
    weights: Vec<f64>,
    kernels: [KernelSpec; D],
    bandwidths: [f64; D],
}

impl<const D: usize> LocalLinearSmoother<D> {
    pub fn new(
        covariates: Vec<[f64; D]>,
        targets: Vec<f64>,
        weights: Vec<f64>,
        kernels: [KernelSpec; D],
        bandwidths: [f64; D],
    ) -> Result<Self> {
        if covariates.len() != targets.len() || covariates.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "smoother inputs disagree in length: {} covariates, {} targets, {} weights",
                covariates.len(),
                targets.len(),
                weights.len()
            )));
        }
        if let Some(h) = bandwidths.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}")));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "observation weights must be nonnegative, got {w}"
            )));
        }
        let mut rows: Vec<([f64; D], f64, f64)> = covariates
            .into_iter()
            .zip(targets)
            .zip(weights)
            .filter(|(_, w)| *w > 0.0)
            .map(|((x, y), w)| (x, y, w))
            .collect();
        rows.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
        let mut covariates = Vec::with_capacity(rows.len());
        let mut targets = Vec::with_capacity(rows.len());
        let mut weights = Vec::with_capacity(rows.len());
        for (x, y, w) in rows {
            covariates.push(x);
            targets.push(y);
            weights.push(w);
        }
        Ok(LocalLinearSmoother {
            covariates,
            targets,
            weights,
            kernels,
            bandwidths,
        })
    }

    /// Same kernel in every dimension.
    pub fn with_kernel(
        covariates: Vec<[f64; D]>,
        targets: Vec<f64>,
        weights: Vec<f64>,
        kernel: KernelSpec,
        bandwidths: [f64; D],
    ) -> Result<Self> {
        Self::new(covariates, targets, weights, [kernel; D], bandwidths)
    }

    /// Number of observations with positive weight.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn bandwidths(&self) -> [f64; D] {
        self.bandwidths
    }

    pub fn fit(&self, point: [f64; D]) -> LocalLinearFit {
        let mut scale = 1.0;
        for times in 0..=MAX_WIDENINGS {
            let h: [f64; D] = std::array::from_fn(|d| self.bandwidths[d] * scale);
            if let Some((mut fit, local_constant)) = self.fit_window(point, &h) {
                if times > 0 {
                    fit.status = FitStatus::Widened { times, local_constant };
                }
                return fit;
            }
            scale *= WIDEN_FACTOR;
        }
        LocalLinearFit {
            intercept: f64::NAN,
            slopes: vec![f64::NAN; D],
            effective_points: 0,
            status: FitStatus::Missing,
        }
    }

    /// `None` when no observation has positive kernel weight.
    fn fit_window(&self, point: [f64; D], h: &[f64; D]) -> Option<(LocalLinearFit, bool)> {
        let lo = point[0] - h[0];
        let hi = point[0] + h[0];
        let start = self.covariates.partition_point(|x| x[0] < lo);
        let end = self.covariates.partition_point(|x| x[0] <= hi);

        let dim = D + 1;
        let mut gram = vec![0.0; dim * dim];
        let mut rhs = vec![0.0; dim];
        let mut z = vec![0.0; dim];
        z[0] = 1.0;
        let mut count = 0usize;
        let mut sum_w = 0.0;
        let mut sum_wy = 0.0;

        for m in start..end {
            let x = &self.covariates[m];
            let mut kw = 1.0;
            for d in 0..D {
                let u = (x[d] - point[d]) / h[d];
                let k = self.kernels[d].eval(u);
                if k == 0.0 {
                    kw = 0.0;
                    break;
                }
                kw *= k / h[d];
                z[d + 1] = u;
            }
            if kw == 0.0 {
                continue;
            }
            let w = self.weights[m] * kw;
            let y = self.targets[m];
            count += 1;
            sum_w += w;
            sum_wy += w * y;
            for r in 0..dim {
                let wz = w * z[r];
                rhs[r] += wz * y;
                for c in r..dim {
                    gram[r * dim + c] += wz * z[c];
                }
            }
        }

        if count == 0 {
            return None;
        }
        if count < dim {
            let fit = LocalLinearFit {
                intercept: sum_wy / sum_w,
                slopes: vec![0.0; D],
                effective_points: count,
                status: FitStatus::LocalConstant,
            };
            return Some((fit, true));
        }

        for r in 0..dim {
            for c in 0..r {
                gram[r * dim + c] = gram[c * dim + r];
            }
        }
        let coef = min_norm_solve(DMatrix::from_row_slice(dim, dim, &gram), DVector::from_vec(rhs));
        let fit = LocalLinearFit {
            intercept: coef[0],
            slopes: (0..D).map(|d| coef[d + 1] / h[d]).collect(),
            effective_points: count,
            status: FitStatus::Regular,
        };
        Some((fit, false))
    }

    /// Independent fits at every point; output order follows `points`.
    pub fn smooth_on_grid(&self, points: &[[f64; D]]) -> GridSmooth {
        GridSmooth {
            fits: points.par_iter().map(|&p| self.fit(p)).collect(),
        }
    }
}

fn min_norm_solve(gram: DMatrix<f64>, rhs: DVector<f64>) -> DVector<f64> {
    let svd = gram.svd(true, true);
    let largest = svd.singular_values.max();
    let eps = (RANK_TOLERANCE * largest).max(f64::MIN_POSITIVE);
    svd.solve(&rhs, eps)
        .expect("SVD was computed with both singular vector sets")
}

/// Fits on a list of evaluation points.
#[derive(Debug, Clone)]
pub struct GridSmooth {
    pub fits: Vec<LocalLinearFit>,
}

impl GridSmooth {
    pub fn values(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.intercept).collect()
    }

    pub fn degenerate_count(&self) -> usize {
        self.fits.iter().filter(|f| f.degenerate()).count()
    }

    pub fn missing_count(&self) -> usize {
        self.fits.iter().filter(|f| f.is_missing()).count()
    }
}

/// One-off fit of a fully specified problem.
pub fn local_linear_fit<const D: usize>(
    covariates: &[[f64; D]],
    targets: &[f64],
    obs_weights: &[f64],
    kernels: [KernelSpec; D],
    bandwidths: [f64; D],
    eval_point: [f64; D],
) -> Result<LocalLinearFit> {
    let smoother = LocalLinearSmoother::new(
        covariates.to_vec(),
        targets.to_vec(),
        obs_weights.to_vec(),
        kernels,
        bandwidths,
    )?;
    Ok(smoother.fit(eval_point))
}
