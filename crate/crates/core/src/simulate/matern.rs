//! Matérn covariance and Gaussian random field draws at fixed sites.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::bessel::bessel_k;
use crate::data::euclidean;
use crate::{Error, Result};

/// Jitter added to the diagonal, as multiples of the variance, when the
/// covariance matrix is numerically singular.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-10, 1e-9, 1e-8, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaternParams {
    pub variance: f64,
    pub shape: f64,
    pub range: f64,
}

impl MaternParams {
    pub fn new(variance: f64, shape: f64, range: f64) -> Result<Self> {
        let p = MaternParams { variance, shape, range };
        let problems = p.problems("matern");
        if problems.is_empty() {
            Ok(p)
        } else {
            Err(Error::Config(problems))
        }
    }

    pub(crate) fn problems(&self, label: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("variance", self.variance), ("shape", self.shape), ("range", self.range)] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{label}.{name} must be positive, got {v}"));
            }
        }
        out
    }
}

/// `V 2^{1−ν}/Γ(ν) (√(2ν) u/r)^ν K_ν(√(2ν) u/r)`, equal to `V` at `u = 0`.
pub fn matern_cov(u: f64, params: &MaternParams) -> f64 {
    let MaternParams { variance, shape, range } = *params;
    if u <= 0.0 {
        return variance;
    }
    let z = (2.0 * shape).sqrt() * u / range;
    let k = bessel_k(shape, z);
    if k == 0.0 {
        return 0.0;
    }
    let log_c = (1.0 - shape) * std::f64::consts::LN_2 - ln_gamma(shape) + shape * z.ln() + k.ln();
    (variance * log_c.exp()).min(variance)
}

pub fn matern_matrix(sites: &[[f64; 2]], params: &MaternParams) -> DMatrix<f64> {
    let n = sites.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = params.variance;
        for k in i + 1..n {
            let c = matern_cov(euclidean(sites[i], sites[k]), params);
            m[(i, k)] = c;
            m[(k, i)] = c;
        }
    }
    m
}

/// Cholesky factor of a Matérn covariance matrix, reusable across draws.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    factor: DMatrix<f64>,
    /// Diagonal jitter that made the factorization succeed.
    pub jitter: f64,
}

impl GrfSampler {
    pub fn new(sites: &[[f64; 2]], params: &MaternParams) -> Result<Self> {
        let cov = matern_matrix(sites, params);
        for rel in JITTER_LADDER {
            let jitter = rel * params.variance;
            let mut m = cov.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(m) {
                return Ok(GrfSampler { factor: chol.l(), jitter });
            }
        }
        Err(Error::computation(
            "simulate",
            format!(
                "Matérn covariance of {} sites is not positive definite even with jitter {:e}; sites may nearly coincide",
                sites.len(),
                JITTER_LADDER[JITTER_LADDER.len() - 1] * params.variance
            ),
        ))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_iterator(self.factor.nrows(), (0..self.factor.nrows()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (&self.factor * z).iter().copied().collect()
    }
}

/// One draw of the field at `sites`.
pub fn sample_grf_scores<R: Rng + ?Sized>(sites: &[[f64; 2]], params: &MaternParams, rng: &mut R) -> Result<Vec<f64>> {
    Ok(GrfSampler::new(sites, params)?.sample(rng))
}
