//! Mean and covariance estimation for spatially indexed functional data.
//!
//! * `μ̂` pools all observations in a 1-D local linear smoother.
//! * `Γ̂(t₁, t₂)` smooths within-subject cross-products `C_ijk`, `j ≠ k`.
//! * `R̂(‖s₀‖; t₁, t₂)` smooths cross-subject products `C_ij,i'j'` in
//!   `(T_ij, T_i'j', ‖s_i − s_i'‖)` and reads the fit at lag `‖s₀‖`.
//! * `Λ̂ = Γ̂ − R̂(0)` is the functional nugget.
//!
//! Observation weights follow the OBS, SUBJ or mixed schemes.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, SiteGeometry, SpatialFunctionalDataset, TimeGrid};
use crate::kernels::KernelSpec;
use crate::smoothing::{FitStatus, LocalLinearSmoother};
use crate::{Error, Result};

/// Default fraction of nearest sites paired with each site in `R̂`.
pub const DEFAULT_NEIGHBOR_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// Equal weight per observation.
    Obs,
    /// Equal weight per subject.
    Subj,
    /// `θ·OBS + (1 − θ)·SUBJ`.
    Mixed { theta: f64 },
}

impl WeightScheme {
    fn theta(&self) -> Result<f64> {
        match *self {
            WeightScheme::Obs => Ok(1.0),
            WeightScheme::Subj => Ok(0.0),
            WeightScheme::Mixed { theta } if (0.0..=1.0).contains(&theta) => Ok(theta),
            WeightScheme::Mixed { theta } => Err(Error::InvalidArgument(format!(
                "mixing parameter must lie in [0, 1], got {theta}"
            ))),
        }
    }

    fn mix(&self, obs: f64, subj: f64) -> Result<f64> {
        Ok(match *self {
            WeightScheme::Obs => obs,
            WeightScheme::Subj => subj,
            WeightScheme::Mixed { .. } => {
                let theta = self.theta()?;
                theta * obs + (1.0 - theta) * subj
            }
        })
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightScheme::Obs => write!(f, "OBS"),
            WeightScheme::Subj => write!(f, "SUBJ"),
            WeightScheme::Mixed { theta } => write!(f, "MIXED({theta})"),
        }
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "obs" => Ok(WeightScheme::Obs),
            "subj" => Ok(WeightScheme::Subj),
            _ => {
                let theta = lower
                    .strip_prefix("mixed:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "unknown weight scheme `{s}` (expected obs, subj or mixed:<theta>)"
                        ))
                    })?;
                let scheme = WeightScheme::Mixed { theta };
                scheme.theta()?;
                Ok(scheme)
            }
        }
    }
}

/// Mixing parameter minimizing the rate bound `θ² d₁ + (1 − θ)² d₂`.
pub fn optimal_theta(d_n1: f64, d_n2: f64) -> f64 {
    d_n2 / (d_n1 + d_n2)
}

/// Per-observation weights `w_i` with `Σ w_i N_i = 1`.
pub fn mean_weights(scheme: WeightScheme, counts: &[usize]) -> Result<Vec<f64>> {
    check_counts(counts, 1)?;
    let n = counts.len() as f64;
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&c| scheme.mix(1.0 / total as f64, 1.0 / (n * c as f64)))
        .collect()
}

/// Within-subject pair weights `v_i` with `Σ v_i N_i (N_i − 1) = 1`.
pub fn within_pair_weights(scheme: WeightScheme, counts: &[usize]) -> Result<Vec<f64>> {
    check_counts(counts, 2)?;
    let n = counts.len() as f64;
    let total: usize = counts.iter().map(|&c| c * (c - 1)).sum();
    counts
        .iter()
        .map(|&c| scheme.mix(1.0 / total as f64, 1.0 / (n * (c * (c - 1)) as f64)))
        .collect()
}

/// Cross-subject pair weights `v_{i,i'}` with `Σ_i Σ_{i'≠i} v_{i,i'} N_i N_{i'} = 1`.
#[derive(Debug, Clone)]
pub struct CrossPairWeights {
    scheme: WeightScheme,
    obs_weight: f64,
    counts: Vec<usize>,
}

impl CrossPairWeights {
    pub fn get(&self, i: usize, k: usize) -> f64 {
        let n = self.counts.len() as f64;
        let subj = 1.0 / (n * (n - 1.0) * (self.counts[i] * self.counts[k]) as f64);
        self.scheme
            .mix(self.obs_weight, subj)
            .expect("scheme validated at construction")
    }
}

pub fn cross_pair_weights(scheme: WeightScheme, counts: &[usize]) -> Result<CrossPairWeights> {
    check_counts(counts, 1)?;
    if counts.len() < 2 {
        return Err(Error::InvalidArgument("cross-subject weights need n >= 2".into()));
    }
    scheme.theta()?;
    let total: usize = counts.iter().sum();
    let squares: usize = counts.iter().map(|c| c * c).sum();
    Ok(CrossPairWeights {
        scheme,
        obs_weight: 1.0 / (total * total - squares) as f64,
        counts: counts.to_vec(),
    })
}

#[derive(Debug, Clone)]
pub struct Weights {
    pub mean: Vec<f64>,
    pub within: Vec<f64>,
    pub cross: CrossPairWeights,
}

/// All three weight families for a count profile; requires `N_i ≥ 2`.
pub fn weights_for(scheme: WeightScheme, counts: &[usize]) -> Result<Weights> {
    Ok(Weights {
        mean: mean_weights(scheme, counts)?,
        within: within_pair_weights(scheme, counts)?,
        cross: cross_pair_weights(scheme, counts)?,
    })
}

fn check_counts(counts: &[usize], min: usize) -> Result<()> {
    if counts.is_empty() {
        return Err(Error::InvalidArgument("no subjects".into()));
    }
    if let Some(i) = counts.iter().position(|&c| c < min) {
        return Err(Error::InvalidArgument(format!(
            "subject {i} has {} observations; at least {min} required",
            counts[i]
        )));
    }
    Ok(())
}

/// Bandwidths of every smoother in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSet {
    pub h_mu: f64,
    pub h_c: f64,
    pub b: f64,
    pub h_t: f64,
    pub h_y: f64,
}

impl BandwidthSet {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("h_mu", self.h_mu),
            ("h_c", self.h_c),
            ("b", self.b),
            ("h_t", self.h_t),
            ("h_y", self.h_y),
        ];
        let bad: Vec<String> = named
            .iter()
            .filter(|(_, v)| !(*v > 0.0 && v.is_finite()))
            .map(|(k, v)| format!("bandwidth {k} must be positive, got {v}"))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeanCurve {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub statuses: Vec<FitStatus>,
}

impl MeanCurve {
    /// Linear interpolation between grid values.
    pub fn at(&self, t: f64) -> f64 {
        self.grid.interpolate(&self.values, t)
    }

    pub fn degenerate_points(&self) -> usize {
        self.statuses.iter().filter(|s| **s != FitStatus::Regular).count()
    }

    fn ensure_complete(&self) -> Result<()> {
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::computation(
                "mean",
                format!(
                    "mean curve is missing at t = {} (h_mu = {} too small)",
                    self.grid.points()[k],
                    self.bandwidth
                ),
            ));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,value")?;
        for (t, v) in self.grid.points().iter().zip(&self.values) {
            writeln!(out, "{},{}", fmt_f64(*t), fmt_f64(*v))?;
        }
        Ok(())
    }
}

pub fn estimate_mean(
    dataset: &SpatialFunctionalDataset,
    scheme: WeightScheme,
    h_mu: f64,
    grid: &TimeGrid,
    kernel: KernelSpec,
) -> Result<MeanCurve> {
    let smoother = mean_smoother(dataset, scheme, h_mu, kernel)?;
    let points: Vec<[f64; 1]> = grid.points().iter().map(|&t| [t]).collect();
    let out = smoother.smooth_on_grid(&points);
    Ok(MeanCurve {
        grid: grid.clone(),
        values: out.values(),
        bandwidth: h_mu,
        statuses: out.fits.iter().map(|f| f.status).collect(),
    })
}

pub(crate) fn mean_smoother(
    dataset: &SpatialFunctionalDataset,
    scheme: WeightScheme,
    h_mu: f64,
    kernel: KernelSpec,
) -> Result<LocalLinearSmoother<1>> {
    let w = mean_weights(scheme, &dataset.counts())?;
    let mut x = Vec::with_capacity(dataset.total_observations());
    let mut y = Vec::with_capacity(x.capacity());
    let mut weights = Vec::with_capacity(x.capacity());
    for (s, wi) in dataset.subjects().iter().zip(&w) {
        for (&t, &z) in s.times.iter().zip(&s.values) {
            x.push([t]);
            y.push(z);
            weights.push(*wi);
        }
    }
    LocalLinearSmoother::with_kernel(x, y, weights, kernel, [h_mu])
}

/// Residuals `Z_ij − μ̂(T_ij)` per subject.
pub fn centered_observations(dataset: &SpatialFunctionalDataset, mean: &MeanCurve) -> Result<Vec<Vec<f64>>> {
    mean.ensure_complete()?;
    Ok(dataset
        .subjects()
        .iter()
        .map(|s| s.times.iter().zip(&s.values).map(|(&t, &z)| z - mean.at(t)).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovarianceKind {
    Gamma,
    RSpatial,
    Nugget,
    ConditionalRe,
}

impl fmt::Display for CovarianceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            CovarianceKind::Gamma => "gamma",
            CovarianceKind::RSpatial => "r_spatial",
            CovarianceKind::Nugget => "nugget",
            CovarianceKind::ConditionalRe => "conditional_re",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceBandwidths {
    Temporal { h_c: f64 },
    SpatioTemporal { h_c: f64, b: f64 },
    InverseRegression { h_t: f64, h_y: f64 },
    Derived,
}

/// Symmetric surface on a time grid.
#[derive(Debug, Clone)]
pub struct CovarianceSurface {
    pub grid: TimeGrid,
    pub values: DMatrix<f64>,
    pub spatial_lag: f64,
    pub kind: CovarianceKind,
    pub bandwidths: SurfaceBandwidths,
    /// Grid cells whose smoother fit used a fallback.
    pub degenerate_points: usize,
}

impl CovarianceSurface {
    pub fn from_fn(
        grid: &TimeGrid,
        kind: CovarianceKind,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let t = grid.points();
        let values = DMatrix::from_fn(t.len(), t.len(), |j, k| f(t[j], t[k]));
        let mut s = CovarianceSurface {
            grid: grid.clone(),
            values,
            spatial_lag: 0.0,
            kind,
            bandwidths: SurfaceBandwidths::Derived,
            degenerate_points: 0,
        };
        s.symmetrize();
        s
    }

    pub fn symmetrize(&mut self) {
        let p = self.values.nrows();
        for j in 0..p {
            for k in j + 1..p {
                let avg = 0.5 * (self.values[(j, k)] + self.values[(k, j)]);
                self.values[(j, k)] = avg;
                self.values[(k, j)] = avg;
            }
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.values - self.values.transpose()).amax()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.values.diagonal().iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `t1,t2,value`, row-major over the grid.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t1,t2,value")?;
        let t = self.grid.points();
        for j in 0..t.len() {
            for k in 0..t.len() {
                writeln!(out, "{},{},{}", fmt_f64(t[j]), fmt_f64(t[k]), fmt_f64(self.values[(j, k)]))?;
            }
        }
        Ok(())
    }
}

/// Evaluates a bivariate smoother on the upper triangle of the grid and
/// mirrors it; the cross-product data are symmetric under swapping the two
/// time coordinates, so the fit is too.
fn smooth_symmetric<const D: usize>(
    smoother: &LocalLinearSmoother<D>,
    grid: &TimeGrid,
    point: impl Fn(f64, f64) -> [f64; D],
) -> (DMatrix<f64>, usize) {
    let t = grid.points();
    let p = t.len();
    let cells: Vec<(usize, usize)> = (0..p).flat_map(|j| (j..p).map(move |k| (j, k))).collect();
    let points: Vec<[f64; D]> = cells.iter().map(|&(j, k)| point(t[j], t[k])).collect();
    let out = smoother.smooth_on_grid(&points);
    let mut values = DMatrix::zeros(p, p);
    let mut degenerate = 0;
    for (&(j, k), fit) in cells.iter().zip(&out.fits) {
        values[(j, k)] = fit.intercept;
        values[(k, j)] = fit.intercept;
        if fit.degenerate() {
            degenerate += if j == k { 1 } else { 2 };
        }
    }
    (values, degenerate)
}

pub(crate) fn gamma_smoother(
    dataset: &SpatialFunctionalDataset,
    centered: &[Vec<f64>],
    scheme: WeightScheme,
    h_c: f64,
    kernel: KernelSpec,
) -> Result<LocalLinearSmoother<2>> {
    let used: Vec<usize> = (0..dataset.n()).filter(|&i| dataset.subjects()[i].count() >= 2).collect();
    if used.is_empty() {
        return Err(Error::computation(
            "gamma",
            "no subject has at least two observations",
        ));
    }
    let counts: Vec<usize> = used.iter().map(|&i| dataset.subjects()[i].count()).collect();
    let v = within_pair_weights(scheme, &counts)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for (&i, vi) in used.iter().zip(&v) {
        let times = &dataset.subjects()[i].times;
        let c = &centered[i];
        for j in 0..times.len() {
            for k in 0..times.len() {
                if j != k {
                    x.push([times[j], times[k]]);
                    y.push(c[j] * c[k]);
                    w.push(*vi);
                }
            }
        }
    }
    LocalLinearSmoother::with_kernel(x, y, w, kernel, [h_c, h_c])
}

pub fn estimate_gamma(
    dataset: &SpatialFunctionalDataset,
    mean: &MeanCurve,
    scheme: WeightScheme,
    h_c: f64,
    grid: &TimeGrid,
    kernel: KernelSpec,
) -> Result<CovarianceSurface> {
    let centered = centered_observations(dataset, mean)?;
    let smoother = gamma_smoother(dataset, &centered, scheme, h_c, kernel)?;
    let (values, degenerate_points) = smooth_symmetric(&smoother, grid, |a, b| [a, b]);
    Ok(CovarianceSurface {
        grid: grid.clone(),
        values,
        spatial_lag: 0.0,
        kind: CovarianceKind::Gamma,
        bandwidths: SurfaceBandwidths::Temporal { h_c },
        degenerate_points,
    })
}

/// Options for the cross-subject estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialOptions {
    /// Pair each site only with this fraction of its nearest sites.
    pub neighbor_fraction: f64,
    /// Equal-width time bins per subject applied to the centered data.
    pub bins: Option<usize>,
}

impl Default for SpatialOptions {
    fn default() -> Self {
        SpatialOptions {
            neighbor_fraction: DEFAULT_NEIGHBOR_FRACTION,
            bins: None,
        }
    }
}

/// Ordered subject pairs `(i, i', ‖s_i − s_i'‖)` whose spatial kernel weight
/// at `lag` is positive. With `neighbor_fraction < 1` a pair is kept when
/// either site is among the other's `⌈fraction·(n − 1)⌉` nearest sites.
pub fn spatial_pairs(
    geometry: &SiteGeometry,
    neighbor_fraction: f64,
    lag: f64,
    b: f64,
) -> Result<Vec<(usize, usize, f64)>> {
    if !(neighbor_fraction > 0.0 && neighbor_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "neighbor fraction must lie in (0, 1], got {neighbor_fraction}"
        )));
    }
    if !(lag >= 0.0 && lag.is_finite()) {
        return Err(Error::InvalidArgument(format!("spatial lag must be >= 0, got {lag}")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("spatial bandwidth must be positive, got {b}")));
    }
    let n = geometry.n();
    let mut keep = vec![neighbor_fraction >= 1.0; n * n];
    if neighbor_fraction < 1.0 {
        let k = ((neighbor_fraction * (n - 1) as f64).ceil() as usize).clamp(1, n - 1);
        for i in 0..n {
            for j in geometry.nearest(i, k) {
                keep[i * n + j] = true;
                keep[j * n + i] = true;
            }
        }
    }
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || !keep[i * n + j] {
                continue;
            }
            let d = geometry.distance(i, j);
            if (d - lag).abs() < b {
                pairs.push((i, j, d));
            }
        }
    }
    Ok(pairs)
}

/// `(time, centered value, multiplicity)` per subject, optionally binned.
fn subject_points(times: &[f64], centered: &[f64], bins: Option<usize>) -> Vec<(f64, f64, f64)> {
    match bins {
        None => times.iter().zip(centered).map(|(&t, &c)| (t, c, 1.0)).collect(),
        Some(nb) => {
            let nb = nb.max(1);
            let mut acc = vec![(0.0, 0.0, 0.0); nb];
            for (&t, &c) in times.iter().zip(centered) {
                let k = ((t * nb as f64) as usize).min(nb - 1);
                acc[k].0 += t;
                acc[k].1 += c;
                acc[k].2 += 1.0;
            }
            acc.into_iter()
                .filter(|a| a.2 > 0.0)
                .map(|(t, c, m)| (t / m, c / m, m))
                .collect()
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_r_spatial(
    dataset: &SpatialFunctionalDataset,
    mean: &MeanCurve,
    scheme: WeightScheme,
    h_c: f64,
    b: f64,
    spatial_lag: f64,
    grid: &TimeGrid,
    options: SpatialOptions,
    kernel: KernelSpec,
) -> Result<CovarianceSurface> {
    let centered = centered_observations(dataset, mean)?;
    let geometry = SiteGeometry::from_sites(&dataset.sites())?;
    let pairs = spatial_pairs(&geometry, options.neighbor_fraction, spatial_lag, b)?;
    if pairs.is_empty() {
        return Err(Error::computation(
            "r_spatial",
            format!("no site pairs within spatial bandwidth b = {b} of lag {spatial_lag}"),
        ));
    }
    let weights = cross_pair_weights(scheme, &dataset.counts())?;
    let points: Vec<Vec<(f64, f64, f64)>> = dataset
        .subjects()
        .iter()
        .zip(&centered)
        .map(|(s, c)| subject_points(&s.times, c, options.bins))
        .collect();

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for &(i, k, d) in &pairs {
        let v = weights.get(i, k);
        for &(t1, c1, m1) in &points[i] {
            for &(t2, c2, m2) in &points[k] {
                x.push([t1, t2, d]);
                y.push(c1 * c2);
                w.push(v * m1 * m2);
            }
        }
    }
    let smoother = LocalLinearSmoother::with_kernel(x, y, w, kernel, [h_c, h_c, b])?;
    let (values, degenerate_points) = smooth_symmetric(&smoother, grid, |a, c| [a, c, spatial_lag]);
    Ok(CovarianceSurface {
        grid: grid.clone(),
        values,
        spatial_lag,
        kind: CovarianceKind::RSpatial,
        bandwidths: SurfaceBandwidths::SpatioTemporal { h_c, b },
        degenerate_points,
    })
}

/// `Λ̂ = Γ̂ − R̂(0)`, entrywise. Negative diagonal values are kept.
pub fn estimate_nugget(gamma: &CovarianceSurface, r0: &CovarianceSurface) -> Result<CovarianceSurface> {
    if gamma.grid != r0.grid {
        return Err(Error::computation("nugget", "Γ̂ and R̂(0) live on different grids"));
    }
    if r0.spatial_lag != 0.0 {
        return Err(Error::computation(
            "nugget",
            format!("R̂ must be evaluated at lag 0, got {}", r0.spatial_lag),
        ));
    }
    Ok(CovarianceSurface {
        grid: gamma.grid.clone(),
        values: &gamma.values - &r0.values,
        spatial_lag: 0.0,
        kind: CovarianceKind::Nugget,
        bandwidths: SurfaceBandwidths::Derived,
        degenerate_points: gamma.degenerate_points.max(r0.degenerate_points),
    })
}
