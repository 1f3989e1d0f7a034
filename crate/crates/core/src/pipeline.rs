//! End-to-end estimation: bandwidths, `μ̂`, `Γ̂`, `R̂(0)`, `Λ̂`, `m̂`, `R̂_e`
//! and the e.d.r. directions.
//!
//! SFSIR whitens with `R̂(0)`; FSIR runs the identical pipeline with `Γ̂`
//! in its place.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covariance::{
    estimate_gamma, estimate_mean, estimate_nugget, estimate_r_spatial, BandwidthSet, CovarianceSurface, MeanCurve,
    SpatialOptions, WeightScheme,
};
use crate::data::{site_geometry, SpatialFunctionalDataset, TimeGrid, TrimSpec};
use crate::edr::{edr_directions, EdrResult, TruncationRule};
use crate::evaluate::cv::{cross_validate, default_candidates, CvOutcome, CvPlan, CvTarget};
use crate::inverse_regression::{estimate_m, estimate_re, InverseRegressionSurface};
use crate::kernels::KernelSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sfsir,
    Fsir,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Sfsir, Method::Fsir];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sfsir => "sfsir",
            Method::Fsir => "fsir",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sfsir" => Ok(Method::Sfsir),
            "fsir" => Ok(Method::Fsir),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}, expected sfsir or fsir"))),
        }
    }
}

/// Fixed bandwidths; anything left `None` is cross-validated, except `b`
/// which follows [`spatial_bandwidth_rule`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandwidthOverrides {
    pub h_mu: Option<f64>,
    pub h_c: Option<f64>,
    pub b: Option<f64>,
    pub h_t: Option<f64>,
    pub h_y: Option<f64>,
}

impl BandwidthOverrides {
    pub fn fixed(set: BandwidthSet) -> Self {
        BandwidthOverrides {
            h_mu: Some(set.h_mu),
            h_c: Some(set.h_c),
            b: Some(set.b),
            h_t: Some(set.h_t),
            h_y: Some(set.h_y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub scheme: WeightScheme,
    pub kernel: KernelSpec,
    pub grid_size: usize,
    /// Number of e.d.r. directions.
    pub k: usize,
    pub trim: TrimSpec,
    pub truncation: TruncationRule,
    pub spatial: SpatialOptions,
    /// Constant in the spatial bandwidth rule.
    pub c_b: f64,
    pub bandwidths: BandwidthOverrides,
    pub cv_folds: usize,
    pub cv_seed: u64,
    pub methods: Vec<Method>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            scheme: WeightScheme::Obs,
            kernel: KernelSpec::EPANECHNIKOV,
            grid_size: 101,
            k: 1,
            trim: TrimSpec::default(),
            truncation: TruncationRule::default(),
            spatial: SpatialOptions::default(),
            c_b: 1.0,
            bandwidths: BandwidthOverrides::default(),
            cv_folds: 3,
            cv_seed: 0,
            methods: vec![Method::Sfsir, Method::Fsir],
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.grid_size < 2 {
            problems.push(format!("grid_size must be at least 2, got {}", self.grid_size));
        }
        if self.k == 0 {
            problems.push("k must be at least 1".into());
        }
        if !(self.c_b > 0.0 && self.c_b.is_finite()) {
            problems.push(format!("c_b must be positive, got {}", self.c_b));
        }
        if self.cv_folds < 2 {
            problems.push(format!("cv_folds must be at least 2, got {}", self.cv_folds));
        }
        if self.methods.is_empty() {
            problems.push("at least one method is required".into());
        }
        if !(self.spatial.neighbor_fraction > 0.0 && self.spatial.neighbor_fraction <= 1.0) {
            problems.push(format!(
                "neighbor_fraction must lie in (0, 1], got {}",
                self.spatial.neighbor_fraction
            ));
        }
        let b = &self.bandwidths;
        for (name, v) in [("h_mu", b.h_mu), ("h_c", b.h_c), ("b", b.b), ("h_t", b.h_t), ("h_y", b.h_y)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    problems.push(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// `min(1, c_b) (n − 1)^{−1/2} · diameter`.
pub fn spatial_bandwidth_rule(n: usize, diameter: f64, c_b: f64) -> f64 {
    c_b.min(1.0) * ((n.max(2) - 1) as f64).powf(-0.5) * diameter
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub grid: TimeGrid,
    pub bandwidths: BandwidthSet,
    pub cv: Vec<CvOutcome>,
    pub mean: MeanCurve,
    pub gamma: CovarianceSurface,
    pub r0: Option<CovarianceSurface>,
    pub nugget: Option<CovarianceSurface>,
    pub m: InverseRegressionSurface,
    pub re: CovarianceSurface,
    pub directions: Vec<(Method, EdrResult)>,
}

impl FitOutput {
    pub fn directions_for(&self, method: Method) -> Option<&EdrResult> {
        self.directions.iter().find(|(m, _)| *m == method).map(|(_, r)| r)
    }

    /// Writes every surface and direction set into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut emit = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| -> Result<()> {
            let path = dir.join(name);
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut out = BufWriter::new(file);
            f(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        emit("mean.csv", &|w| self.mean.write_csv(w))?;
        emit("gamma.csv", &|w| self.gamma.write_csv(w))?;
        if let Some(r0) = &self.r0 {
            emit("r0.csv", &|w| r0.write_csv(w))?;
        }
        if let Some(nug) = &self.nugget {
            emit("nugget.csv", &|w| nug.write_csv(w))?;
        }
        emit("re.csv", &|w| self.re.write_csv(w))?;
        for (method, result) in &self.directions {
            emit(&format!("directions_{method}.csv"), &|w| result.write_csv(w))?;
        }
        let summary = serde_json::json!({
            "bandwidths": self.bandwidths,
            "methods": self.directions.iter().map(|(m, r)| (m.to_string(), r)).collect::<std::collections::BTreeMap<_, _>>(),
        });
        emit("eigenvalues.json", &|w| {
            serde_json::to_writer_pretty(&mut *w, &summary).map_err(std::io::Error::other)?;
            writeln!(w)
        })?;
        Ok(written)
    }
}

/// Resolves every bandwidth: overrides first, then cross-validation.
pub fn select_bandwidths(
    dataset: &SpatialFunctionalDataset,
    config: &FitConfig,
) -> Result<(BandwidthSet, Vec<CvOutcome>)> {
    let o = config.bandwidths;
    let mut cv = Vec::new();
    let mut run = |target: CvTarget| -> Result<Vec<f64>> {
        let plan = CvPlan::new(config.cv_folds, config.cv_seed, default_candidates(dataset, target))?;
        let out = cross_validate(dataset, &plan, target, config.scheme, config.kernel)?;
        let sel = out.selected.clone();
        cv.push(out);
        Ok(sel)
    };
    let h_mu = match o.h_mu {
        Some(h) => h,
        None => run(CvTarget::Mean)?[0],
    };
    let h_c = match o.h_c {
        Some(h) => h,
        None => run(CvTarget::Gamma { h_mu })?[0],
    };
    let (h_t, h_y) = match (o.h_t, o.h_y) {
        (Some(a), Some(b)) => (a, b),
        (a, b) => {
            let sel = run(CvTarget::M)?;
            (a.unwrap_or(sel[0]), b.unwrap_or(sel[1]))
        }
    };
    let b = match o.b {
        Some(b) => b,
        None => {
            let geometry = site_geometry(dataset)?;
            spatial_bandwidth_rule(dataset.n(), geometry.diameter, config.c_b)
        }
    };
    let set = BandwidthSet { h_mu, h_c, b, h_t, h_y };
    set.validate()?;
    Ok((set, cv))
}

/// e.d.r. directions from a whitening surface; the only stage where the
/// methods differ.
pub fn directions_from(
    whitening: &CovarianceSurface,
    re: &CovarianceSurface,
    config: &FitConfig,
) -> Result<EdrResult> {
    edr_directions(whitening, re, config.k, config.truncation)
}

pub fn fit(dataset: &SpatialFunctionalDataset, config: &FitConfig) -> Result<FitOutput> {
    config.validate()?;
    let grid = TimeGrid::uniform(config.grid_size)?;
    let (bw, cv) = select_bandwidths(dataset, config)?;
    let mean = estimate_mean(dataset, config.scheme, bw.h_mu, &grid, config.kernel)?;
    let gamma = estimate_gamma(dataset, &mean, config.scheme, bw.h_c, &grid, config.kernel)?;
    let (r0, nugget) = if config.methods.contains(&Method::Sfsir) {
        let r0 = estimate_r_spatial(
            dataset,
            &mean,
            config.scheme,
            bw.h_c,
            bw.b,
            0.0,
            &grid,
            config.spatial,
            config.kernel,
        )?;
        let nugget = estimate_nugget(&gamma, &r0)?;
        (Some(r0), Some(nugget))
    } else {
        (None, None)
    };
    let responses = dataset.responses();
    let m = estimate_m(dataset, config.scheme, bw.h_t, bw.h_y, &grid, &responses, config.kernel)?;
    let re = estimate_re(&m, &responses, config.trim)?;

    let mut directions = Vec::new();
    for &method in &config.methods {
        let whitening = match method {
            Method::Sfsir => r0.as_ref().expect("R̂(0) is estimated whenever SFSIR is requested"),
            Method::Fsir => &gamma,
        };
        let result = directions_from(whitening, &re, config).map_err(|e| match e {
            Error::Computation { stage, message } => {
                Error::computation(stage, format!("{method}: {message}"))
            }
            other => other,
        })?;
        directions.push((method, result));
    }
    Ok(FitOutput {
        grid,
        bandwidths: bw,
        cv,
        mean,
        gamma,
        r0,
        nugget,
        m,
        re,
        directions,
    })
}
