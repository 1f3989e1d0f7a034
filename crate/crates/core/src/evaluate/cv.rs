//! Subject-level K-fold cross-validation for smoother bandwidths.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{centered_observations, estimate_mean, gamma_smoother, mean_smoother, WeightScheme};
use crate::data::{SpatialFunctionalDataset, TimeGrid};
use crate::inverse_regression::m_smoother;
use crate::kernels::KernelSpec;
use crate::simulate::stream_rng;
use crate::{Error, Result};

/// Candidates per bandwidth in the default grids.
pub const GRID_STEPS: usize = 6;
/// Span of the default grids relative to the pilot bandwidth.
pub const GRID_SPAN: (f64, f64) = (0.5, 4.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvTarget {
    /// `h_mu`: held-out `Z_ij` against `μ̂(T_ij)`.
    Mean,
    /// `h_c`: held-out within-subject products against `Γ̂`, centered by a
    /// training mean with bandwidth `h_mu`.
    Gamma { h_mu: f64 },
    /// `(h_t, h_y)`: held-out `Z_ij` against `m̂(T_ij, Y_i)`.
    M,
}

impl CvTarget {
    pub fn arity(&self) -> usize {
        match self {
            CvTarget::M => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CvTarget::Mean => "mean",
            CvTarget::Gamma { .. } => "gamma",
            CvTarget::M => "m",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub seed: u64,
    /// Each candidate holds one bandwidth, or `(h_t, h_y)` for [`CvTarget::M`].
    pub candidates: Vec<Vec<f64>>,
}

impl CvPlan {
    pub fn new(folds: usize, seed: u64, candidates: Vec<Vec<f64>>) -> Result<Self> {
        if folds < 2 {
            return Err(Error::InvalidArgument(format!("cross-validation needs at least 2 folds, got {folds}")));
        }
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("cross-validation needs at least one candidate".into()));
        }
        if let Some(c) = candidates.iter().find(|c| c.iter().any(|h| !(*h > 0.0 && h.is_finite()))) {
            return Err(Error::InvalidArgument(format!("candidate bandwidths must be positive, got {c:?}")));
        }
        Ok(CvPlan { folds, seed, candidates })
    }
}

/// Fold of each subject: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 0));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

fn geometric(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|k| lo * (hi / lo).powf(k as f64 / (steps - 1) as f64))
        .collect()
}

/// Log-spaced grid over `GRID_SPAN` times a pilot of a quarter of the
/// covariate range scaled by `count^{-1/(4+d)}`.
pub fn default_candidates(dataset: &SpatialFunctionalDataset, target: CvTarget) -> Vec<Vec<f64>> {
    let total = dataset.total_observations() as f64;
    let (lo, hi) = GRID_SPAN;
    match target {
        CvTarget::Mean => {
            let pilot = 0.25 * total.powf(-0.2);
            geometric(lo * pilot, hi * pilot, GRID_STEPS).into_iter().map(|h| vec![h]).collect()
        }
        CvTarget::Gamma { .. } => {
            let pairs: f64 = dataset.counts().iter().map(|&c| (c * c.saturating_sub(1)) as f64).sum();
            let pilot = 0.25 * pairs.max(1.0).powf(-1.0 / 6.0);
            geometric(lo * pilot, hi * pilot, GRID_STEPS).into_iter().map(|h| vec![h]).collect()
        }
        CvTarget::M => {
            let y = dataset.responses();
            let (ymin, ymax) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let scale = total.powf(-1.0 / 6.0);
            let ht = geometric(lo * 0.25 * scale, hi * 0.25 * scale, GRID_STEPS);
            let hy = geometric(lo * 0.25 * (ymax - ymin).max(1e-8) * scale, hi * 0.25 * (ymax - ymin).max(1e-8) * scale, GRID_STEPS);
            ht.iter().flat_map(|&a| hy.iter().map(move |&b| vec![a, b])).collect()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvOutcome {
    pub target: CvTarget,
    pub selected: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
    /// Held-out SSE summed over folds; `None` when a fold had no prediction.
    pub scores: Vec<Option<f64>>,
}

struct Fold {
    train: SpatialFunctionalDataset,
    test: SpatialFunctionalDataset,
}

/// Runs the plan and returns the best candidate. Scores within a relative
/// `1e-9` of the best count as ties and go to the smallest bandwidth product.
pub fn cross_validate(
    dataset: &SpatialFunctionalDataset,
    plan: &CvPlan,
    target: CvTarget,
    scheme: WeightScheme,
    kernel: KernelSpec,
) -> Result<CvOutcome> {
    let n = dataset.n();
    if n < plan.folds {
        return Err(Error::InvalidArgument(format!(
            "cross-validation with {} folds needs at least that many subjects, got {n}",
            plan.folds
        )));
    }
    if let Some(c) = plan.candidates.iter().find(|c| c.len() != target.arity()) {
        return Err(Error::InvalidArgument(format!(
            "{} cross-validation expects {} bandwidth(s) per candidate, got {c:?}",
            target.name(),
            target.arity()
        )));
    }
    let assignment = fold_assignment(n, plan.folds, plan.seed);
    let mut folds = Vec::with_capacity(plan.folds);
    for f in 0..plan.folds {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
        folds.push(Fold {
            train: dataset.subset(&train)?,
            test: dataset.subset(&test)?,
        });
    }
    // Gamma needs a training mean per fold, shared by all candidates
    let fold_means = match target {
        CvTarget::Gamma { h_mu } => {
            let grid = TimeGrid::uniform(101)?;
            Some(
                folds
                    .iter()
                    .map(|f| estimate_mean(&f.train, scheme, h_mu, &grid, kernel))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        _ => None,
    };

    let jobs: Vec<(usize, usize)> = (0..plan.candidates.len())
        .flat_map(|c| (0..plan.folds).map(move |f| (c, f)))
        .collect();
    let results: Vec<Option<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let h = &plan.candidates[c];
            let fold = &folds[f];
            match target {
                CvTarget::Mean => score_mean(fold, h[0], scheme, kernel),
                CvTarget::Gamma { .. } => {
                    score_gamma(fold, &fold_means.as_ref().expect("fold means")[f], h[0], scheme, kernel)
                }
                CvTarget::M => score_m(fold, h[0], h[1], scheme, kernel),
            }
        })
        .collect();

    let mut scores = vec![Some(0.0); plan.candidates.len()];
    let mut scale = 0.0f64;
    for (&(c, _), r) in jobs.iter().zip(&results) {
        match (scores[c], r) {
            (Some(s), Some((sse, ss))) => {
                scores[c] = Some(s + sse);
                scale = scale.max(*ss);
            }
            _ => scores[c] = None,
        }
    }
    let best = scores.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        let list: Vec<String> = plan.candidates.iter().map(|c| format!("{c:?}")).collect();
        return Err(Error::computation(
            "cv",
            format!(
                "every {} candidate left some held-out point without an estimate: {}",
                target.name(),
                list.join(", ")
            ),
        ));
    }
    let tol = 1e-9 * best.abs() + 1e-12 * scale;
    let product = |c: &Vec<f64>| c.iter().product::<f64>();
    let chosen = (0..plan.candidates.len())
        .filter(|&c| scores[c].is_some_and(|s| s <= best + tol))
        .min_by(|&a, &b| product(&plan.candidates[a]).total_cmp(&product(&plan.candidates[b])).then(a.cmp(&b)))
        .expect("at least one finite score");
    Ok(CvOutcome {
        target,
        selected: plan.candidates[chosen].clone(),
        candidates: plan.candidates.clone(),
        scores,
    })
}

/// `(SSE, Σ target²)` or `None` if any held-out prediction is missing.
fn sse(pairs: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let mut err = 0.0;
    let mut ss = 0.0;
    for (pred, obs) in pairs {
        if !pred.is_finite() {
            return None;
        }
        err += (obs - pred).powi(2);
        ss += obs * obs;
    }
    Some((err, ss))
}

fn score_mean(fold: &Fold, h: f64, scheme: WeightScheme, kernel: KernelSpec) -> Option<(f64, f64)> {
    let smoother = mean_smoother(&fold.train, scheme, h, kernel).ok()?;
    sse(fold
        .test
        .subjects()
        .iter()
        .flat_map(|s| s.times.iter().zip(&s.values))
        .map(|(&t, &z)| (smoother.fit([t]).intercept, z)))
}

fn score_gamma(
    fold: &Fold,
    mean: &crate::covariance::MeanCurve,
    h: f64,
    scheme: WeightScheme,
    kernel: KernelSpec,
) -> Option<(f64, f64)> {
    let centered = centered_observations(&fold.train, mean).ok()?;
    let smoother = gamma_smoother(&fold.train, &centered, scheme, h, kernel).ok()?;
    let test_centered = centered_observations(&fold.test, mean).ok()?;
    let mut items = Vec::new();
    for (s, c) in fold.test.subjects().iter().zip(&test_centered) {
        for j in 0..s.times.len() {
            for k in 0..s.times.len() {
                if j != k {
                    items.push((s.times[j], s.times[k], c[j] * c[k]));
                }
            }
        }
    }
    sse(items.into_iter().map(|(a, b, v)| (smoother.fit([a, b]).intercept, v)))
}

fn score_m(fold: &Fold, h_t: f64, h_y: f64, scheme: WeightScheme, kernel: KernelSpec) -> Option<(f64, f64)> {
    let smoother = m_smoother(&fold.train, scheme, h_t, h_y, kernel).ok()?;
    sse(fold
        .test
        .subjects()
        .iter()
        .flat_map(|s| s.times.iter().zip(&s.values).map(move |(&t, &z)| (t, s.response, z)))
        .map(|(t, y, z)| (smoother.fit([t, y]).intercept, z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const K: KernelSpec = KernelSpec::EPANECHNIKOV;

    fn dataset(n: usize, seed: u64, f: impl Fn(f64) -> f64, noise: f64) -> SpatialFunctionalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subjects = (0..n)
            .map(|i| {
                let times: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
                let values = times.iter().map(|&t| f(t) + noise * (rng.random::<f64>() - 0.5)).collect();
                Subject {
                    id: format!("{i}"),
                    site: [rng.random(), rng.random()],
                    times,
                    values,
                    response: rng.random(),
                }
            })
            .collect();
        SpatialFunctionalDataset::new(subjects).unwrap()
    }

    #[test]
    fn folds_partition_subjects() {
        let a = fold_assignment(10, 3, 7);
        assert_eq!(a, fold_assignment(10, 3, 7));
        for f in 0..3 {
            let c = a.iter().filter(|&&x| x == f).count();
            assert!(c == 3 || c == 4);
        }
    }

    #[test]
    fn single_candidate_wins() {
        let ds = dataset(12, 1, |t| t, 0.1);
        let plan = CvPlan::new(3, 0, vec![vec![0.3]]).unwrap();
        let out = cross_validate(&ds, &plan, CvTarget::Mean, WeightScheme::Obs, K).unwrap();
        assert_eq!(out.selected, vec![0.3]);
    }

    #[test]
    fn noiseless_linear_ties_go_to_smallest() {
        let ds = dataset(30, 2, |t| 1.0 - 2.0 * t, 0.0);
        let plan = CvPlan::new(3, 0, vec![vec![0.8], vec![0.3], vec![0.5]]).unwrap();
        let out = cross_validate(&ds, &plan, CvTarget::Mean, WeightScheme::Subj, K).unwrap();
        assert!(out.scores.iter().all(|s| s.unwrap() < 1e-20));
        assert_eq!(out.selected, vec![0.3]);
    }

    #[test]
    fn matched_bandwidth_beats_oversmoothing() {
        let ds = dataset(40, 3, |t| (2.0 * std::f64::consts::PI * t).sin() * 2.0, 0.2);
        let plan = CvPlan::new(3, 11, vec![vec![0.1], vec![1.0]]).unwrap();
        let out = cross_validate(&ds, &plan, CvTarget::Mean, WeightScheme::Obs, K).unwrap();
        assert_eq!(out.selected, vec![0.1]);
        assert!(out.scores[0].unwrap() < out.scores[1].unwrap());
    }

    #[test]
    fn gamma_and_m_targets_run() {
        let ds = dataset(30, 4, |t| t * t, 0.3);
        let plan = CvPlan::new(3, 0, default_candidates(&ds, CvTarget::Gamma { h_mu: 0.2 })).unwrap();
        let g = cross_validate(&ds, &plan, CvTarget::Gamma { h_mu: 0.2 }, WeightScheme::Obs, K).unwrap();
        assert_eq!(g.selected.len(), 1);
        let plan = CvPlan::new(3, 0, default_candidates(&ds, CvTarget::M)).unwrap();
        assert_eq!(plan.candidates.len(), GRID_STEPS * GRID_STEPS);
        let m = cross_validate(&ds, &plan, CvTarget::M, WeightScheme::Obs, K).unwrap();
        assert_eq!(m.selected.len(), 2);
    }

    #[test]
    fn rejects_bad_plans() {
        let ds = dataset(4, 5, |t| t, 0.1);
        assert!(CvPlan::new(1, 0, vec![vec![0.2]]).is_err());
        let plan = CvPlan::new(5, 0, vec![vec![0.2]]).unwrap();
        assert!(cross_validate(&ds, &plan, CvTarget::Mean, WeightScheme::Obs, K).is_err());
        let plan = CvPlan::new(2, 0, vec![vec![0.2]]).unwrap();
        assert!(cross_validate(&ds, &plan, CvTarget::M, WeightScheme::Obs, K).is_err());
    }
}
