//! Effective dimension reduction directions.
//!
//! Surfaces on a grid with trapezoid weights `w_k` are treated as integral
//! operators `(Af)(t) = ∫ A(t, s) f(s) ds ≈ Σ_k A(t, t_k) w_k f(t_k)`.
//! Conjugating by `W^{1/2}` turns every operator into a symmetric matrix,
//! so spectral calculus happens on `Ã = W^{1/2} A W^{1/2}` and functions
//! are mapped back with `W^{-1/2}`.
//!
//! The directions solve the generalized eigenproblem `R_e β = λ R β`
//! through `R_L^{-1/2} R_e R_L^{-1/2}`, where `R_L^{-1/2}` keeps the top `L`
//! eigencomponents of `R(0)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::covariance::{centered_observations, CovarianceKind, CovarianceSurface, MeanCurve};
use crate::data::{fmt_f64, SpatialFunctionalDataset, TimeGrid};
use crate::kernels::KernelSpec;
use crate::smoothing::{FitStatus, LocalLinearSmoother};
use crate::{Error, Result};

/// Eigenvalues at or below this fraction of the largest are not inverted.
pub const POSITIVE_EIGENVALUE_TOLERANCE: f64 = 1e-10;
/// Leading generalized eigenvalue below which `R̂_e` is treated as zero.
pub const ZERO_RE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub grid: TimeGrid,
    /// Descending operator eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenfunctions on the grid, orthonormal in `L²[0, 1]`.
    pub eigenvectors: DMatrix<f64>,
    pub source: CovarianceKind,
    // eigenvectors of the symmetrized matrix W^{1/2} A W^{1/2}
    whitened: DMatrix<f64>,
    sqrt_weights: Vec<f64>,
}

impl EigenDecomposition {
    /// `Σ_{i<L} ξ_i π_i(s) π_i(t)` on the grid.
    pub fn reconstruction(&self, order: usize) -> DMatrix<f64> {
        let p = self.grid.len();
        let mut out = DMatrix::zeros(p, p);
        for i in 0..order.min(p) {
            let v = self.eigenvectors.column(i);
            out += self.eigenvalues[i] * v * v.transpose();
        }
        out
    }
}

fn sqrt_weights(grid: &TimeGrid) -> Vec<f64> {
    grid.quadrature_weights().iter().map(|w| w.sqrt()).collect()
}

fn conjugate(a: &DMatrix<f64>, sw: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |j, k| sw[j] * a[(j, k)] * sw[k])
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

pub fn eigendecompose_surface(surface: &CovarianceSurface) -> Result<EigenDecomposition> {
    if !surface.is_finite() {
        return Err(Error::computation(
            "edr",
            format!("{} surface has non-finite entries", surface.kind),
        ));
    }
    let sw = sqrt_weights(&surface.grid);
    let mut tilde = conjugate(&surface.values, &sw);
    tilde = 0.5 * (&tilde + tilde.transpose());
    let (eigenvalues, whitened) = sorted_eigen(tilde);
    let eigenvectors = DMatrix::from_fn(whitened.nrows(), whitened.ncols(), |r, c| whitened[(r, c)] / sw[r]);
    Ok(EigenDecomposition {
        grid: surface.grid.clone(),
        eigenvalues,
        eigenvectors,
        source: surface.kind,
        whitened,
        sqrt_weights: sw,
    })
}

/// How many eigencomponents of `R̂(0)` enter the inverse square root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationRule {
    Fixed(usize),
    /// Smallest `L` whose leading eigenvalues explain this fraction of the
    /// positive spectrum.
    FractionOfVariance(f64),
}

impl Default for TruncationRule {
    fn default() -> Self {
        TruncationRule::FractionOfVariance(0.95)
    }
}

impl TruncationRule {
    /// `L` for a descending spectrum. Non-positive eigenvalues never count.
    pub fn select(&self, eigenvalues: &[f64]) -> Result<usize> {
        let top = eigenvalues.first().copied().unwrap_or(0.0);
        let positive = if top > 0.0 {
            eigenvalues
                .iter()
                .take_while(|&&v| v > POSITIVE_EIGENVALUE_TOLERANCE * top)
                .count()
        } else {
            0
        };
        let order = match *self {
            TruncationRule::Fixed(l) => l.min(positive),
            TruncationRule::FractionOfVariance(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "variance fraction must lie in (0, 1], got {f}"
                    )));
                }
                let total: f64 = eigenvalues[..positive].iter().sum();
                let mut cum = 0.0;
                let mut l = positive;
                for (i, v) in eigenvalues[..positive].iter().enumerate() {
                    cum += v;
                    if cum >= f * total * (1.0 - 1e-12) {
                        l = i + 1;
                        break;
                    }
                }
                l
            }
        };
        if order == 0 {
            return Err(Error::computation(
                "edr",
                "truncation keeps no eigencomponents (no positive eigenvalue of R̂(0))",
            ));
        }
        Ok(order)
    }
}

/// `R_L^{-1/2}` as a kernel on the grid.
#[derive(Debug, Clone)]
pub struct TruncatedInverseSqrt {
    pub order: usize,
    pub kernel: DMatrix<f64>,
}

pub fn truncated_inv_sqrt(decomp: &EigenDecomposition, rule: TruncationRule) -> Result<TruncatedInverseSqrt> {
    let order = rule.select(&decomp.eigenvalues)?;
    let p = decomp.grid.len();
    let mut kernel = DMatrix::zeros(p, p);
    for i in 0..order {
        let v = decomp.eigenvectors.column(i);
        kernel += decomp.eigenvalues[i].powf(-0.5) * v * v.transpose();
    }
    Ok(TruncatedInverseSqrt { order, kernel })
}

/// Kernel of the operator composition `A ∘ B` on the grid.
pub fn compose(grid: &TimeGrid, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let w = DVector::from_vec(grid.quadrature_weights());
    a * DMatrix::from_diagonal(&w) * b
}

#[derive(Debug, Clone, Serialize)]
pub struct EdrResult {
    #[serde(skip)]
    pub grid: TimeGrid,
    /// `β̂_j` on the grid, one vector per direction.
    pub directions: Vec<Vec<f64>>,
    /// `η̂_j = R̂_L^{1/2} β̂_j`.
    pub standardized_directions: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub truncation_l: usize,
    pub k: usize,
    pub warnings: Vec<String>,
}

impl EdrResult {
    /// `t,beta_1,...,beta_K`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.k).map(|j| format!("beta_{j}")).collect();
        writeln!(out, "t,{}", header.join(","))?;
        for (r, t) in self.grid.points().iter().enumerate() {
            let row: Vec<String> = self.directions.iter().map(|d| fmt_f64(d[r])).collect();
            writeln!(out, "{},{}", fmt_f64(*t), row.join(","))?;
        }
        Ok(())
    }
}

/// Top-`k` e.d.r. directions from `R̂(0)` (or any covariance used for
/// whitening) and `R̂_e`.
pub fn edr_directions(
    r0: &CovarianceSurface,
    re: &CovarianceSurface,
    k: usize,
    rule: TruncationRule,
) -> Result<EdrResult> {
    if r0.grid != re.grid {
        return Err(Error::computation("edr", "R̂ and R̂_e live on different grids"));
    }
    if !re.is_finite() {
        return Err(Error::computation("edr", "R̂_e has non-finite entries"));
    }
    let decomp = eigendecompose_surface(r0)?;
    let order = rule.select(&decomp.eigenvalues)?;
    if k == 0 || k > order {
        return Err(Error::computation(
            "edr",
            format!("need 1 <= K <= L, got K = {k} with L = {order}"),
        ));
    }
    let sw = &decomp.sqrt_weights;

    // W^{1/2} R_e W^{1/2} with negative eigenvalues clipped
    let re_tilde = {
        let t = conjugate(&re.values, sw);
        let eig = SymmetricEigen::new(0.5 * (&t + t.transpose()));
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
    };

    // restricted to span of the top-L components: D^{-1/2} U_Lᵀ R̃_e U_L D^{-1/2}
    let u = decomp.whitened.columns(0, order).into_owned();
    let inv_sqrt = DVector::from_iterator(order, decomp.eigenvalues[..order].iter().map(|v| v.powf(-0.5)));
    let scaled_u = &u * DMatrix::from_diagonal(&inv_sqrt);
    let m = scaled_u.transpose() * &re_tilde * &scaled_u;
    let m = 0.5 * (&m + m.transpose());
    let (lambdas, z) = sorted_eigen(m);

    let mut directions = Vec::with_capacity(k);
    let mut standardized = Vec::with_capacity(k);
    for j in 0..k {
        let zj = z.column(j);
        let beta_tilde = &scaled_u * zj;
        let eta_tilde = &u * zj;
        let mut beta: Vec<f64> = beta_tilde.iter().zip(sw).map(|(v, s)| v / s).collect();
        let mut eta: Vec<f64> = eta_tilde.iter().zip(sw).map(|(v, s)| v / s).collect();
        if beta.iter().sum::<f64>() < 0.0 {
            beta.iter_mut().for_each(|v| *v = -*v);
            eta.iter_mut().for_each(|v| *v = -*v);
        }
        directions.push(beta);
        standardized.push(eta);
    }

    let eigenvalues: Vec<f64> = lambdas[..k].to_vec();
    let mut warnings = Vec::new();
    if eigenvalues[0] < ZERO_RE_THRESHOLD {
        warnings.push(format!(
            "leading eigenvalue {:.3e} is below {ZERO_RE_THRESHOLD:e}: R̂_e carries no signal",
            eigenvalues[0]
        ));
    }
    Ok(EdrResult {
        grid: r0.grid.clone(),
        directions,
        standardized_directions: standardized,
        eigenvalues,
        truncation_l: order,
        k,
        warnings,
    })
}

/// `estimate` or `−estimate`, whichever has a nonnegative inner product with
/// `reference`. Numerically orthogonal pairs keep the estimate.
pub fn align_sign(grid: &TimeGrid, estimate: &[f64], reference: &[f64]) -> Vec<f64> {
    let ip = grid.inner(estimate, reference);
    let scale = (grid.inner(estimate, estimate) * grid.inner(reference, reference)).sqrt();
    if ip < -1e-12 * scale {
        estimate.iter().map(|v| -v).collect()
    } else {
        estimate.to_vec()
    }
}

/// Angle in degrees between two curves, ignoring sign.
pub fn angle_degrees(grid: &TimeGrid, a: &[f64], b: &[f64]) -> f64 {
    // chord length is accurate for small angles where acos is not
    let na = normalize(grid, a);
    let nb = normalize(grid, &align_sign(grid, b, a));
    let diff: Vec<f64> = na.iter().zip(&nb).map(|(x, y)| x - y).collect();
    let chord = grid.inner(&diff, &diff).max(0.0).sqrt();
    (2.0 * (0.5 * chord).min(1.0).asin()).to_degrees()
}

/// `f / ‖f‖_{L²}`.
pub fn normalize(grid: &TimeGrid, f: &[f64]) -> Vec<f64> {
    let norm = grid.inner(f, f).sqrt();
    f.iter().map(|v| v / norm).collect()
}

/// Centered trajectory of one subject interpolated onto the grid:
/// piecewise linear between observations, constant beyond the first and last.
pub fn interpolate_subject(grid: &TimeGrid, times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut pts: Vec<(f64, f64)> = times.iter().copied().zip(values.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    grid.points()
        .iter()
        .map(|&t| {
            let idx = pts.partition_point(|p| p.0 <= t);
            if idx == 0 {
                pts[0].1
            } else if idx == pts.len() {
                pts[pts.len() - 1].1
            } else {
                let (t0, v0) = pts[idx - 1];
                let (t1, v1) = pts[idx];
                if t1 > t0 {
                    v0 + (t - t0) / (t1 - t0) * (v1 - v0)
                } else {
                    v1
                }
            }
        })
        .collect()
}

/// Single-index values `⟨β̂, Z̃_i⟩` of every subject.
pub fn subject_indices(
    dataset: &SpatialFunctionalDataset,
    mean: &MeanCurve,
    direction: &[f64],
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    if direction.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "direction has {} values for a {}-point grid",
            direction.len(),
            grid.len()
        )));
    }
    let centered = centered_observations(dataset, mean)?;
    Ok(dataset
        .subjects()
        .iter()
        .zip(&centered)
        .map(|(s, c)| grid.inner(direction, &interpolate_subject(grid, &s.times, c)))
        .collect())
}

#[derive(Debug, Clone)]
pub struct LinkEstimate {
    pub indices: Vec<f64>,
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    pub statuses: Vec<FitStatus>,
}

/// Local linear smooth of `Y_i` on the single index `⟨β̂, Z̃_i⟩`.
pub fn estimate_link(
    dataset: &SpatialFunctionalDataset,
    mean: &MeanCurve,
    direction: &[f64],
    grid: &TimeGrid,
    bandwidth: f64,
    points: &[f64],
    kernel: KernelSpec,
) -> Result<LinkEstimate> {
    let indices = subject_indices(dataset, mean, direction, grid)?;
    let (lo, hi) = indices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &u| (lo.min(u), hi.max(u)));
    if hi - lo < 1e-12 {
        return Err(Error::computation(
            "link",
            format!("index spread {} is degenerate", hi - lo),
        ));
    }
    let x: Vec<[f64; 1]> = indices.iter().map(|&u| [u]).collect();
    let smoother = LocalLinearSmoother::with_kernel(x, dataset.responses(), vec![1.0; indices.len()], kernel, [bandwidth])?;
    let eval: Vec<[f64; 1]> = points.iter().map(|&u| [u]).collect();
    let out = smoother.smooth_on_grid(&eval);
    Ok(LinkEstimate {
        indices,
        points: points.to_vec(),
        values: out.values(),
        statuses: out.fits.iter().map(|f| f.status).collect(),
    })
}
