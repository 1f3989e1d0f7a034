//! Synthetic spatially correlated functional data.
//!
//! ```text
//! X(s; t) = μ(t) + Σ_j A_j(s) π_j(t)          A_j Gaussian fields with Matérn covariance
//! Z_ij    = X(s_i; T_ij) + U_i(T_ij) + e_ij     U_i a functional nugget, e_ij ~ N(0, σ²)
//! Y_i     = 3 + f(⟨β, X(s_i; ·)⟩) + ε_i        f(x) = x / (1 + eˣ)
//! ```
//!
//! Sites are uniform on the unit square with a rectangular hole.

pub mod bessel;
pub mod matern;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

pub use bessel::{bessel_k, bessel_k_scaled};
pub use matern::{matern_cov, matern_matrix, sample_grf_scores, GrfSampler, MaternParams};

use crate::covariance::{CovarianceKind, CovarianceSurface};
use crate::data::{SpatialFunctionalDataset, Subject, TimeGrid};
use crate::quadrature::simpson;
use crate::{Error, Result};

/// Panels for the reference inner products.
const QUADRATURE_PANELS: usize = 20_000;
/// Stream reserved for the shared site draw under `fixed_sites`.
const FIXED_SITES_STREAM: u64 = u64::MAX;

pub fn mean_function(t: f64) -> f64 {
    2.0 * t * (2.0 * PI * t).sin()
}

pub fn beta_function(t: f64) -> f64 {
    2f64.sqrt() * (1.5 * PI * t).sin()
}

/// `π₁, π₂, π₃`; not normalized, `‖π_j‖² = 1/2`.
pub fn basis_function(j: usize, t: f64) -> f64 {
    match j {
        0 => (2.0 * PI * t).cos(),
        1 => (2.0 * PI * t).sin(),
        2 => (4.0 * PI * t).cos(),
        _ => panic!("basis index {j} out of range"),
    }
}

/// Orthonormal nugget basis.
pub fn nugget_basis_function(j: usize, t: f64) -> f64 {
    let c = (15.0f64 / 7.0).sqrt();
    match j {
        0 => 3f64.sqrt() * t,
        1 => -2.0 * c * t * t + c,
        _ => panic!("nugget basis index {j} out of range"),
    }
}

pub fn link_function(x: f64) -> f64 {
    x / (1.0 + x.exp())
}

/// `∫₀¹ f g` by composite Simpson.
pub fn l2_inner(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
    simpson(|t| f(t) * g(t), 0.0, 1.0, QUADRATURE_PANELS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Density {
    /// `N_i ~ U{3, …, 7}`.
    #[default]
    Sparse,
    /// `N_i ~ U{10, …, 15 + ⌊n/10⌋}`.
    Dense,
}

impl Density {
    pub fn count_range(&self, n: usize) -> (usize, usize) {
        match self {
            Density::Sparse => (3, 7),
            Density::Dense => (10, 15 + n / 10),
        }
    }
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Density::Sparse => "sparse",
            Density::Dense => "dense",
        })
    }
}

impl FromStr for Density {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Density::Sparse),
            "dense" => Ok(Density::Dense),
            _ => Err(Error::InvalidArgument(format!("unknown density {s:?}, expected sparse or dense"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuggetParams {
    /// Variances of the i.i.d. scores on the two nugget basis functions.
    pub variances: [f64; 2],
}

impl Default for NuggetParams {
    fn default() -> Self {
        NuggetParams { variances: [0.5, 1.0] }
    }
}

/// Uniform sampling on `[0, 1]²` minus an optional axis-aligned hole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSampler {
    /// `[x_lo, x_hi, y_lo, y_hi]`.
    pub hole: Option<[f64; 4]>,
}

impl Default for SiteSampler {
    fn default() -> Self {
        SiteSampler { hole: Some([0.4, 0.6, 0.2, 0.8]) }
    }
}

impl SiteSampler {
    pub fn in_hole(&self, p: [f64; 2]) -> bool {
        self.hole
            .is_some_and(|[x0, x1, y0, y1]| p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1)
    }

    /// Area left for sampling.
    pub fn area(&self) -> f64 {
        1.0 - self.hole.map_or(0.0, |[x0, x1, y0, y1]| (x1 - x0) * (y1 - y0))
    }
}

/// `n` distinct sites by rejection sampling.
pub fn sample_sites<R: Rng + ?Sized>(n: usize, sampler: &SiteSampler, rng: &mut R) -> Result<Vec<[f64; 2]>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 sites, got {n}")));
    }
    if sampler.area() <= 0.0 {
        return Err(Error::InvalidArgument("site sampler hole covers the whole square".into()));
    }
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(n);
    while out.len() < n {
        let p = [rng.random::<f64>(), rng.random::<f64>()];
        if !sampler.in_hole(p) && !out.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n: usize,
    pub density: Density,
    /// Fields for the three score processes.
    pub matern: [MaternParams; 3],
    pub nugget: Option<NuggetParams>,
    pub noise_sd: f64,
    pub response_noise_sd: f64,
    pub seed: u64,
    pub sites: SiteSampler,
    /// Draw sites once and reuse them in every replication.
    pub fixed_sites: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n: 50,
            density: Density::Sparse,
            matern: [
                MaternParams { variance: 1.0, shape: 0.2, range: 1.0 },
                MaternParams { variance: 1.5, shape: 0.1, range: 0.5 },
                MaternParams { variance: 1.0, shape: 0.05, range: 1.0 },
            ],
            nugget: None,
            noise_sd: 0.1,
            response_noise_sd: 0.1,
            seed: 0,
            sites: SiteSampler::default(),
            fixed_sites: false,
        }
    }
}

impl SimulationConfig {
    pub fn scenario(n: usize, density: Density, nugget: bool, seed: u64) -> Self {
        SimulationConfig {
            n,
            density,
            nugget: nugget.then(NuggetParams::default),
            seed,
            ..Default::default()
        }
    }

    /// Every problem with the configuration, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n < 2 {
            problems.push(format!("n must be at least 2, got {}", self.n));
        }
        for (j, m) in self.matern.iter().enumerate() {
            problems.extend(m.problems(&format!("matern[{j}]")));
        }
        if let Some(nug) = &self.nugget {
            for (j, v) in nug.variances.iter().enumerate() {
                if !(*v >= 0.0 && v.is_finite()) {
                    problems.push(format!("nugget.variances[{j}] must be nonnegative, got {v}"));
                }
            }
        }
        for (name, v) in [("noise_sd", self.noise_sd), ("response_noise_sd", self.response_noise_sd)] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if let Some([x0, x1, y0, y1]) = self.sites.hole {
            if !(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0) {
                problems.push(format!("sites.hole must satisfy 0 <= x_lo < x_hi <= 1 and 0 <= y_lo < y_hi <= 1, got {:?}", [x0, x1, y0, y1]));
            } else if self.sites.area() <= 0.0 {
                problems.push("sites.hole covers the whole unit square".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Parses JSON and validates. Syntax errors carry the byte offset.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimulationConfig = serde_json::from_str(text).map_err(|e| {
            let offset = byte_offset(text, e.line(), e.column());
            Error::Config(vec![format!("invalid JSON at byte offset {offset} (line {}, column {}): {e}", e.line(), e.column())])
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Byte offset of a 1-based line and column as reported by serde_json.
pub fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// Population quantities the estimators target.
#[derive(Debug, Clone, Serialize)]
pub struct GroundTruth {
    pub grid: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    /// `V_{A,j}` as configured.
    pub score_variances: Vec<f64>,
    /// `V_{A,j} ‖π_j‖²`, the operator eigenvalues of `R(0)`.
    pub effective_variances: Vec<f64>,
    pub nugget_variances: Vec<f64>,
    /// `⟨β, π_j⟩`.
    pub beta_loadings: Vec<f64>,
    pub beta_mean_inner: f64,
    pub sites: Vec<[f64; 2]>,
    /// Score draws `A_j(s_i)`, one vector per component.
    pub scores: Vec<Vec<f64>>,
    /// Index values `⟨β, X_i⟩`.
    pub indices: Vec<f64>,
    pub config: SimulationConfig,
}

impl GroundTruth {
    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::uniform(self.grid.len()).expect("ground-truth grid has at least two points")
    }

    /// `R(0; t₁, t₂) = Σ_j V_{A,j} π_j(t₁) π_j(t₂)`.
    pub fn r0_surface(&self) -> CovarianceSurface {
        let v = self.score_variances.clone();
        CovarianceSurface::from_fn(&self.time_grid(), CovarianceKind::RSpatial, move |a, b| {
            (0..3).map(|j| v[j] * basis_function(j, a) * basis_function(j, b)).sum()
        })
    }

    /// `Λ(t₁, t₂)`, zero without a nugget.
    pub fn nugget_surface(&self) -> CovarianceSurface {
        let v = self.nugget_variances.clone();
        CovarianceSurface::from_fn(&self.time_grid(), CovarianceKind::Nugget, move |a, b| {
            v.iter()
                .enumerate()
                .map(|(j, vj)| vj * nugget_basis_function(j, a) * nugget_basis_function(j, b))
                .sum()
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }
}

/// Generator for one configuration; replications differ only in RNG stream.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimulationConfig,
    beta_mean_inner: f64,
    beta_loadings: [f64; 3],
    fixed_sites: Option<Vec<[f64; 2]>>,
}

impl Simulator {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.validate()?;
        let beta_mean_inner = l2_inner(beta_function, mean_function);
        let beta_loadings = [0, 1, 2].map(|j| l2_inner(beta_function, |t| basis_function(j, t)));
        let fixed_sites = if config.fixed_sites {
            let mut rng = stream_rng(config.seed, FIXED_SITES_STREAM);
            Some(sample_sites(config.n, &config.sites, &mut rng)?)
        } else {
            None
        };
        Ok(Simulator {
            config,
            beta_mean_inner,
            beta_loadings,
            fixed_sites,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    /// Replication `k`, reproducible on its own.
    pub fn replication(&self, k: u64) -> Result<(SpatialFunctionalDataset, GroundTruth)> {
        let cfg = &self.config;
        let n = cfg.n;
        let mut rng = stream_rng(cfg.seed, k);
        let sites = match &self.fixed_sites {
            Some(s) => s.clone(),
            None => sample_sites(n, &cfg.sites, &mut rng)?,
        };
        let mut scores = Vec::with_capacity(3);
        for params in &cfg.matern {
            scores.push(GrfSampler::new(&sites, params)?.sample(&mut rng));
        }
        let nugget_sd: Vec<f64> = cfg.nugget.map_or(Vec::new(), |p| p.variances.iter().map(|v| v.sqrt()).collect());
        let nugget_scores: Vec<Vec<f64>> = (0..n)
            .map(|_| nugget_sd.iter().map(|sd| sd * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let (lo, hi) = cfg.density.count_range(n);
        let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let response_noise = Normal::new(0.0, cfg.response_noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let width = n.to_string().len();

        let mut subjects = Vec::with_capacity(n);
        let mut indices = Vec::with_capacity(n);
        for i in 0..n {
            let count = rng.random_range(lo..=hi);
            let mut times: Vec<f64> = (0..count).map(|_| rng.random::<f64>()).collect();
            times.sort_by(f64::total_cmp);
            let values = times
                .iter()
                .map(|&t| {
                    let x = mean_function(t) + (0..3).map(|j| scores[j][i] * basis_function(j, t)).sum::<f64>();
                    let u: f64 = nugget_scores[i]
                        .iter()
                        .enumerate()
                        .map(|(j, a)| a * nugget_basis_function(j, t))
                        .sum();
                    x + u + noise.sample(&mut rng)
                })
                .collect();
            let index = self.beta_mean_inner + (0..3).map(|j| scores[j][i] * self.beta_loadings[j]).sum::<f64>();
            let response = 3.0 + link_function(index) + response_noise.sample(&mut rng);
            indices.push(index);
            subjects.push(Subject {
                id: format!("s{:0width$}", i + 1),
                site: sites[i],
                times,
                values,
                response,
            });
        }
        let dataset = SpatialFunctionalDataset::new(subjects)?;

        let grid = TimeGrid::uniform(101)?;
        let truth = GroundTruth {
            beta: grid.points().iter().map(|&t| beta_function(t)).collect(),
            mean: grid.points().iter().map(|&t| mean_function(t)).collect(),
            grid: grid.points().to_vec(),
            score_variances: cfg.matern.iter().map(|m| m.variance).collect(),
            effective_variances: cfg
                .matern
                .iter()
                .enumerate()
                .map(|(j, m)| m.variance * l2_inner(|t| basis_function(j, t), |t| basis_function(j, t)))
                .collect(),
            nugget_variances: cfg.nugget.map_or(Vec::new(), |p| p.variances.to_vec()),
            beta_loadings: self.beta_loadings.to_vec(),
            beta_mean_inner: self.beta_mean_inner,
            sites,
            scores,
            indices,
            config: cfg.clone(),
        };
        Ok((dataset, truth))
    }
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Replication 0 of `config`.
pub fn simulate_dataset(config: &SimulationConfig) -> Result<(SpatialFunctionalDataset, GroundTruth)> {
    Simulator::new(config.clone())?.replication(0)
}

/// Gram matrix of the nugget basis under high-resolution quadrature.
pub fn nugget_gram() -> DMatrix<f64> {
    DMatrix::from_fn(2, 2, |a, b| l2_inner(|t| nugget_basis_function(a, t), |t| nugget_basis_function(b, t)))
}
