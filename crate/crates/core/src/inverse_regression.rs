//! Inverse regression surface `m(t, y) = E[X(t) | Y = y]` and the
//! covariance of its values across subjects, `R_e(0; t₁, t₂)`.

use std::io::Write;

use nalgebra::DMatrix;

use crate::covariance::{mean_weights, CovarianceKind, CovarianceSurface, SurfaceBandwidths, WeightScheme};
use crate::data::{fmt_f64, trim_interval, Interval, SpatialFunctionalDataset, TimeGrid, TrimSpec};
use crate::kernels::KernelSpec;
use crate::quadrature::CompensatedSum;
use crate::smoothing::LocalLinearSmoother;
use crate::{Error, Result};

/// `m̂(t_k, y_l)` on a time grid × a list of response values.
#[derive(Debug, Clone)]
pub struct InverseRegressionSurface {
    pub time_grid: TimeGrid,
    pub y_values: Vec<f64>,
    /// `p × len(y_values)`.
    pub values: DMatrix<f64>,
    pub h_t: f64,
    pub h_y: f64,
    pub degenerate_points: usize,
}

impl InverseRegressionSurface {
    pub fn column(&self, l: usize) -> Vec<f64> {
        self.values.column(l).iter().copied().collect()
    }

    /// `t,y,value` with time varying fastest within each response value.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,y,value")?;
        for (l, y) in self.y_values.iter().enumerate() {
            for (k, t) in self.time_grid.points().iter().enumerate() {
                writeln!(out, "{},{},{}", fmt_f64(*t), fmt_f64(*y), fmt_f64(self.values[(k, l)]))?;
            }
        }
        Ok(())
    }
}

pub(crate) fn m_smoother(
    dataset: &SpatialFunctionalDataset,
    scheme: WeightScheme,
    h_t: f64,
    h_y: f64,
    kernel: KernelSpec,
) -> Result<LocalLinearSmoother<2>> {
    let w = mean_weights(scheme, &dataset.counts())?;
    let mut x = Vec::with_capacity(dataset.total_observations());
    let mut y = Vec::with_capacity(x.capacity());
    let mut weights = Vec::with_capacity(x.capacity());
    for (s, wi) in dataset.subjects().iter().zip(&w) {
        for (&t, &z) in s.times.iter().zip(&s.values) {
            x.push([t, s.response]);
            y.push(z);
            weights.push(*wi);
        }
    }
    LocalLinearSmoother::with_kernel(x, y, weights, kernel, [h_t, h_y])
}

/// Pooled 2-D local linear smooth of `Z_ij` on `(T_ij, Y_i)`.
pub fn estimate_m(
    dataset: &SpatialFunctionalDataset,
    scheme: WeightScheme,
    h_t: f64,
    h_y: f64,
    time_grid: &TimeGrid,
    y_points: &[f64],
    kernel: KernelSpec,
) -> Result<InverseRegressionSurface> {
    let smoother = m_smoother(dataset, scheme, h_t, h_y, kernel)?;
    let t = time_grid.points();
    let p = t.len();
    let points: Vec<[f64; 2]> = y_points
        .iter()
        .flat_map(|&y| t.iter().map(move |&tk| [tk, y]))
        .collect();
    let out = smoother.smooth_on_grid(&points);
    let values = DMatrix::from_column_slice(p, y_points.len(), &out.values());
    for (l, y) in y_points.iter().enumerate() {
        if values.column(l).iter().all(|v| !v.is_finite()) {
            return Err(Error::computation(
                "inverse_regression",
                format!(
                    "m̂(·, {y}) is missing on the whole time grid; increase h_t = {h_t} or h_y = {h_y}"
                ),
            ));
        }
    }
    Ok(InverseRegressionSurface {
        time_grid: time_grid.clone(),
        y_values: y_points.to_vec(),
        values,
        h_t,
        h_y,
        degenerate_points: out.degenerate_count(),
    })
}

/// `R̂_e(t₁, t₂) = n⁻¹ Σ m̂ᵢ(t₁) m̂ᵢ(t₂) 𝟙ᵢ − [n⁻¹ Σ m̂ᵢ(t₁) 𝟙ᵢ][n⁻¹ Σ m̂ᵢ(t₂) 𝟙ᵢ]`
/// where `m̂ᵢ = m̂(·, Yᵢ)`, `𝟙ᵢ = 𝟙{Yᵢ ∈ [y_α, y_{1−α}]}` and `n` counts all
/// subjects, trimmed or not.
pub fn estimate_re(
    m_surface: &InverseRegressionSurface,
    responses: &[f64],
    trim: TrimSpec,
) -> Result<CovarianceSurface> {
    if responses.len() != m_surface.y_values.len() {
        return Err(Error::computation(
            "conditional_re",
            format!(
                "{} responses but m̂ has {} columns",
                responses.len(),
                m_surface.y_values.len()
            ),
        ));
    }
    let interval = trim_interval(responses, trim)?;
    let kept = kept_columns(responses, interval);
    if kept.len() < 2 {
        return Err(Error::computation(
            "conditional_re",
            format!(
                "only {} response(s) inside the trim interval [{}, {}]",
                kept.len(),
                interval.lo,
                interval.hi
            ),
        ));
    }
    for &l in &kept {
        if m_surface.values.column(l).iter().any(|v| !v.is_finite()) {
            return Err(Error::computation(
                "conditional_re",
                format!(
                    "m̂(·, {}) has missing grid values; increase h_t = {} or h_y = {}",
                    m_surface.y_values[l], m_surface.h_t, m_surface.h_y
                ),
            ));
        }
    }

    let n = responses.len() as f64;
    let p = m_surface.time_grid.len();
    let m = &m_surface.values;
    let first: Vec<f64> = (0..p)
        .map(|k| {
            let mut s = CompensatedSum::default();
            kept.iter().for_each(|&l| s.add(m[(k, l)]));
            s.value() / n
        })
        .collect();
    let mut values = DMatrix::zeros(p, p);
    for j in 0..p {
        for k in j..p {
            let mut s = CompensatedSum::default();
            kept.iter().for_each(|&l| s.add(m[(j, l)] * m[(k, l)]));
            let v = s.value() / n - first[j] * first[k];
            values[(j, k)] = v;
            values[(k, j)] = v;
        }
    }
    Ok(CovarianceSurface {
        grid: m_surface.time_grid.clone(),
        values,
        spatial_lag: 0.0,
        kind: CovarianceKind::ConditionalRe,
        bandwidths: SurfaceBandwidths::InverseRegression {
            h_t: m_surface.h_t,
            h_y: m_surface.h_y,
        },
        degenerate_points: m_surface.degenerate_points,
    })
}

/// Columns whose response lies inside the trim interval.
pub fn kept_columns(responses: &[f64], interval: Interval) -> Vec<usize> {
    (0..responses.len()).filter(|&l| interval.contains(responses[l])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;
    use nalgebra::SymmetricEigen;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const K: KernelSpec = KernelSpec::EPANECHNIKOV;

    fn dataset(n: usize, seed: u64, z: impl Fn(f64, f64, &mut ChaCha8Rng) -> f64) -> SpatialFunctionalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subjects = (0..n)
            .map(|i| {
                let y = rng.random_range(-1.0..1.0);
                let times: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
                let values = times.iter().map(|&t| z(t, y, &mut rng)).collect();
                Subject {
                    id: i.to_string(),
                    site: [rng.random(), rng.random()],
                    times,
                    values,
                    response: y,
                }
            })
            .collect::<Vec<_>>();
        SpatialFunctionalDataset::new(subjects).unwrap()
    }

    fn surface(grid: &TimeGrid, columns: &[Vec<f64>]) -> InverseRegressionSurface {
        let p = grid.len();
        InverseRegressionSurface {
            time_grid: grid.clone(),
            y_values: (0..columns.len()).map(|l| l as f64).collect(),
            values: DMatrix::from_fn(p, columns.len(), |k, l| columns[l][k]),
            h_t: 0.1,
            h_y: 0.1,
            degenerate_points: 0,
        }
    }

    #[test]
    fn m_reproduces_bilinear_targets() {
        let ds = dataset(60, 1, |t, y, _| 1.0 + 2.0 * t - 0.5 * y);
        let grid = TimeGrid::uniform(21).unwrap();
        let ys = ds.responses();
        let m = estimate_m(&ds, WeightScheme::Subj, 0.3, 0.4, &grid, &ys, K).unwrap();
        for (l, y) in ys.iter().enumerate() {
            for (k, t) in grid.points().iter().enumerate() {
                assert!((m.values[(k, l)] - (1.0 + 2.0 * t - 0.5 * y)).abs() < 1e-9);
            }
        }
        let c = dataset(30, 2, |_, _, _| 3.3);
        let m = estimate_m(&c, WeightScheme::Obs, 0.3, 0.4, &grid, &c.responses(), K).unwrap();
        assert!(m.values.iter().all(|v| (v - 3.3).abs() < 1e-12));
    }

    #[test]
    fn m_flat_in_y_when_response_is_noise() {
        // Z depends on t only; Y is pure noise
        let ds = dataset(200, 3, |t, _, rng| (2.0 * t).sin() + rng.random_range(-0.5..0.5));
        let grid = TimeGrid::uniform(11).unwrap();
        let variation = |d: &SpatialFunctionalDataset| {
            let m = estimate_m(d, WeightScheme::Subj, 0.2, 0.4, &grid, &d.responses(), K).unwrap();
            let p = grid.len();
            (0..p)
                .map(|k| {
                    let row: Vec<f64> = m.values.row(k).iter().copied().collect();
                    let mean = row.iter().sum::<f64>() / row.len() as f64;
                    row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64
                })
                .sum::<f64>()
                / p as f64
        };
        let observed = variation(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let null: Vec<f64> = (0..20)
            .map(|_| {
                let mut y = ds.responses();
                y.shuffle(&mut rng);
                variation(&ds.with_responses(&y).unwrap())
            })
            .collect();
        let mean = null.iter().sum::<f64>() / null.len() as f64;
        let sd = (null.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (null.len() - 1) as f64).sqrt();
        assert!(observed < mean + 3.0 * sd, "observed {observed}, null {mean} ± {sd}");
    }

    #[test]
    fn re_vanishes_for_identical_columns() {
        let grid = TimeGrid::uniform(7).unwrap();
        let g: Vec<f64> = grid.points().iter().map(|t| (3.0 * t).cos()).collect();
        let s = surface(&grid, &vec![g; 5]);
        let re = estimate_re(&s, &[1.0, 2.0, 3.0, 4.0, 5.0], TrimSpec::new(0.0).unwrap()).unwrap();
        assert!(re.values.amax() < 1e-15);
    }

    #[test]
    fn re_matches_closed_form_rank_one() {
        let grid = TimeGrid::uniform(9).unwrap();
        let g: Vec<f64> = grid.points().iter().map(|t| 1.0 + t * t).collect();
        let scores = [0.3, -1.2, 2.0, 0.7, -0.4];
        let cols: Vec<Vec<f64>> = scores.iter().map(|a| g.iter().map(|v| a * v).collect()).collect();
        let s = surface(&grid, &cols);
        let re = estimate_re(&s, &[1.0, 2.0, 3.0, 4.0, 5.0], TrimSpec::new(0.0).unwrap()).unwrap();
        let mean = scores.iter().sum::<f64>() / 5.0;
        let var = scores.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 5.0;
        for j in 0..9 {
            for k in 0..9 {
                assert!((re.values[(j, k)] - var * g[j] * g[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn two_point_covariance() {
        let grid = TimeGrid::uniform(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cols: Vec<Vec<f64>> = (0..6).map(|_| (0..9).map(|_| rng.random::<f64>()).collect()).collect();

        // all subjects kept, n = 2: rank one
        let pair = surface(&grid, &cols[..2]);
        let re = estimate_re(&pair, &[0.0, 1.0], TrimSpec::new(0.0).unwrap()).unwrap();
        let eig = SymmetricEigen::new(re.values.clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert!(ev[1] < 1e-12 * ev[0]);

        // y = 0..5 with α = 0.4 keeps y = 2, 3; divisor stays n = 6
        let s = surface(&grid, &cols);
        let re = estimate_re(&s, &s.y_values.clone(), TrimSpec::new(0.4).unwrap()).unwrap();
        let (a, b) = (&cols[2], &cols[3]);
        for j in 0..9 {
            for k in 0..9 {
                let want = (a[j] * a[k] + b[j] * b[k]) / 6.0 - (a[j] + b[j]) * (a[k] + b[k]) / 36.0;
                assert!((re.values[(j, k)] - want).abs() < 1e-14);
            }
        }
        assert!(estimate_re(&s, &[0.0, 0.0, 0.0, 0.0, 0.0, 9.0], TrimSpec::new(0.45).unwrap()).is_ok());
        assert!(estimate_re(&pair, &[0.0, 1.0], TrimSpec::new(0.49).unwrap()).is_err());
    }

    #[test]
    fn re_is_psd_and_shift_invariant_without_trimming() {
        let grid = TimeGrid::uniform(15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cols: Vec<Vec<f64>> = (0..25).map(|_| (0..15).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
        let s = surface(&grid, &cols);
        let re = estimate_re(&s, &ys, TrimSpec::new(0.0).unwrap()).unwrap();
        let eig = SymmetricEigen::new(re.values.clone());
        let max = eig.eigenvalues.max();
        assert!(eig.eigenvalues.min() >= -1e-10 * max);

        let shifted: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|v| v + 5.0).collect()).collect();
        let re2 = estimate_re(&surface(&grid, &shifted), &ys, TrimSpec::new(0.0).unwrap()).unwrap();
        assert!((&re.values - &re2.values).amax() < 1e-10);
    }

    #[test]
    fn shrinking_trim_never_adds_subjects() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ys: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let mut last = usize::MAX;
        for alpha in [0.0, 0.05, 0.1, 0.2, 0.3, 0.45] {
            let iv = trim_interval(&ys, TrimSpec::new(alpha).unwrap()).unwrap();
            let c = kept_columns(&ys, iv).len();
            assert!(c <= last);
            last = c;
        }
    }
}
