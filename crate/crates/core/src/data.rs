//! Datasets of functional observations at spatial sites, their CSV
//! representation, evaluation grids, and site-geometry diagnostics.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::quadrature::trapezoid_weights;
use crate::{Error, Result};

pub const OBSERVATIONS_HEADER: [&str; 5] = ["site_id", "sx", "sy", "t", "z"];
pub const RESPONSES_HEADER: [&str; 2] = ["site_id", "y"];

/// Formats a float with 17 significant digits so that parsing it back
/// yields the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One spatial unit: its location, its sparse trajectory and its response.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub site: [f64; 2],
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub response: f64,
}

impl Subject {
    pub fn count(&self) -> usize {
        self.times.len()
    }
}

/// Validated collection of subjects. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFunctionalDataset {
    subjects: Vec<Subject>,
}

impl SpatialFunctionalDataset {
    pub fn new(subjects: Vec<Subject>) -> Result<Self> {
        Self::validate(&subjects, true)?;
        Ok(SpatialFunctionalDataset { subjects })
    }

    fn validate(subjects: &[Subject], check_time_range: bool) -> Result<()> {
        if subjects.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 subjects, got {}",
                subjects.len()
            )));
        }
        let mut ids = HashMap::new();
        for (i, s) in subjects.iter().enumerate() {
            if let Some(prev) = ids.insert(s.id.as_str(), i) {
                return Err(Error::Validation(format!(
                    "subject id `{}` appears twice (positions {prev} and {i})",
                    s.id
                )));
            }
            if s.times.is_empty() {
                return Err(Error::Validation(format!("site {} has no observations", s.id)));
            }
            if s.times.len() != s.values.len() {
                return Err(Error::Validation(format!(
                    "site {}: {} times but {} measurements",
                    s.id,
                    s.times.len(),
                    s.values.len()
                )));
            }
            if !s.site.iter().all(|c| c.is_finite()) || !s.response.is_finite() {
                return Err(Error::Validation(format!(
                    "site {}: non-finite coordinate or response",
                    s.id
                )));
            }
            for (&t, &z) in s.times.iter().zip(&s.values) {
                if !t.is_finite() || !z.is_finite() {
                    return Err(Error::Validation(format!(
                        "site {}: non-finite time or measurement",
                        s.id
                    )));
                }
                if check_time_range && !(0.0..=1.0).contains(&t) {
                    return Err(Error::Validation(format!(
                        "site {}: time {t} outside [0, 1] (use time rescaling for raw times)",
                        s.id
                    )));
                }
            }
        }
        for i in 0..subjects.len() {
            for k in i + 1..subjects.len() {
                if subjects[i].site == subjects[k].site {
                    return Err(Error::Validation(format!(
                        "sites {} and {} share the location ({}, {})",
                        subjects[i].id, subjects[k].id, subjects[i].site[0], subjects[i].site[1]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.subjects.iter().map(Subject::count).collect()
    }

    pub fn total_observations(&self) -> usize {
        self.subjects.iter().map(Subject::count).sum()
    }

    pub fn sites(&self) -> Vec<[f64; 2]> {
        self.subjects.iter().map(|s| s.site).collect()
    }

    pub fn responses(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.response).collect()
    }

    /// Dataset restricted to the given subject positions, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.subjects[i].clone()).collect())
    }

    /// Same observations with replaced responses.
    pub fn with_responses(&self, responses: &[f64]) -> Result<Self> {
        if responses.len() != self.n() {
            return Err(Error::Validation(format!(
                "{} responses for {} subjects",
                responses.len(),
                self.n()
            )));
        }
        let mut subjects = self.subjects.clone();
        for (s, &y) in subjects.iter_mut().zip(responses) {
            s.response = y;
        }
        Self::new(subjects)
    }

    /// Maps the observed time range affinely onto `[0, 1]`.
    pub fn rescale_times(subjects: Vec<Subject>) -> Result<Self> {
        Self::validate(&subjects, false)?;
        let (lo, hi) = subjects
            .iter()
            .flat_map(|s| s.times.iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                (lo.min(t), hi.max(t))
            });
        if !(hi > lo) {
            return Err(Error::Validation(
                "cannot rescale times: all observation times are equal".into(),
            ));
        }
        let subjects = subjects
            .into_iter()
            .map(|mut s| {
                for t in &mut s.times {
                    *t = ((*t - lo) / (hi - lo)).clamp(0.0, 1.0);
                }
                s
            })
            .collect();
        Self::new(subjects)
    }

    pub fn save(&self, observations_path: &Path, responses_path: &Path) -> Result<()> {
        let mut obs = File::create(observations_path).map_err(|e| Error::io(observations_path, e))?;
        self.write_observations(&mut obs)
            .map_err(|e| Error::io(observations_path, e))?;
        let mut resp = File::create(responses_path).map_err(|e| Error::io(responses_path, e))?;
        self.write_responses(&mut resp)
            .map_err(|e| Error::io(responses_path, e))?;
        Ok(())
    }

    pub fn write_observations<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", OBSERVATIONS_HEADER.join(","))?;
        for s in &self.subjects {
            let (sx, sy) = (fmt_f64(s.site[0]), fmt_f64(s.site[1]));
            for (&t, &z) in s.times.iter().zip(&s.values) {
                writeln!(out, "{},{sx},{sy},{},{}", s.id, fmt_f64(t), fmt_f64(z))?;
            }
        }
        Ok(())
    }

    pub fn write_responses<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", RESPONSES_HEADER.join(","))?;
        for s in &self.subjects {
            writeln!(out, "{},{}", s.id, fmt_f64(s.response))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Map `[min t, max t]` onto `[0, 1]` instead of rejecting out-of-range times.
    pub rescale_time: bool,
}

pub fn load_dataset(observations_path: &Path, responses_path: &Path) -> Result<SpatialFunctionalDataset> {
    load_dataset_with(observations_path, responses_path, LoadOptions::default())
}

pub fn load_dataset_with(
    observations_path: &Path,
    responses_path: &Path,
    options: LoadOptions,
) -> Result<SpatialFunctionalDataset> {
    let obs = File::open(observations_path).map_err(|e| Error::io(observations_path, e))?;
    let resp = File::open(responses_path).map_err(|e| Error::io(responses_path, e))?;
    read_dataset(
        obs,
        &observations_path.display().to_string(),
        resp,
        &responses_path.display().to_string(),
        options,
    )
}

/// Parses the two-table CSV representation. Subjects keep the order in
/// which they first appear in the observations table.
pub fn read_dataset<R1: Read, R2: Read>(
    observations: R1,
    observations_name: &str,
    responses: R2,
    responses_name: &str,
    options: LoadOptions,
) -> Result<SpatialFunctionalDataset> {
    let mut subjects: Vec<Subject> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    let mut rdr = csv_reader(observations);
    check_header(&mut rdr, observations_name, &OBSERVATIONS_HEADER)?;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(observations_name, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| parse_field(&record, k, OBSERVATIONS_HEADER[k], observations_name, line);
        let id = record.get(0).unwrap_or_default().trim().to_string();
        if id.is_empty() {
            return Err(parse_error(observations_name, line, "empty site_id"));
        }
        let (sx, sy, t, z) = (field(1)?, field(2)?, field(3)?, field(4)?);
        match index.get(&id) {
            Some(&i) => {
                let s = &mut subjects[i];
                if s.site != [sx, sy] {
                    return Err(parse_error(
                        observations_name,
                        line,
                        &format!("site {id} changes coordinates"),
                    ));
                }
                s.times.push(t);
                s.values.push(z);
            }
            None => {
                index.insert(id.clone(), subjects.len());
                subjects.push(Subject {
                    id,
                    site: [sx, sy],
                    times: vec![t],
                    values: vec![z],
                    response: f64::NAN,
                });
            }
        }
    }

    let mut rdr = csv_reader(responses);
    check_header(&mut rdr, responses_name, &RESPONSES_HEADER)?;
    let mut seen = vec![false; subjects.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(responses_name, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record.get(0).unwrap_or_default().trim();
        let y = parse_field(&record, 1, "y", responses_name, line)?;
        let Some(&i) = index.get(id) else {
            return Err(Error::Validation(format!(
                "{responses_name}, line {line}: response for site {id} which has no observations"
            )));
        };
        if seen[i] {
            return Err(parse_error(responses_name, line, &format!("duplicate response for site {id}")));
        }
        seen[i] = true;
        subjects[i].response = y;
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Validation(format!(
            "site {} has observations but no response",
            subjects[i].id
        )));
    }

    if options.rescale_time {
        SpatialFunctionalDataset::rescale_times(subjects)
    } else {
        SpatialFunctionalDataset::new(subjects)
    }
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, file: &str, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| csv_error(file, e))?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(parse_error(
            file,
            1,
            &format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn parse_field(record: &csv::StringRecord, k: usize, name: &str, file: &str, line: u64) -> Result<f64> {
    let raw = record
        .get(k)
        .ok_or_else(|| parse_error(file, line, &format!("missing column `{name}`")))?;
    raw.parse::<f64>()
        .map_err(|_| parse_error(file, line, &format!("cannot parse `{raw}` as {name}")))
}

fn parse_error(file: &str, line: u64, message: &str) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        message: message.to_string(),
    }
}

fn csv_error(file: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(file, line, &e.to_string())
}

/// Equally spaced evaluation points on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(p: usize) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidArgument(format!("time grid needs p >= 2, got {p}")));
        }
        let step = 1.0 / (p - 1) as f64;
        let points = (0..p).map(|k| k as f64 * step).collect();
        Ok(TimeGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.points.len() - 1) as f64
    }

    /// Trapezoid quadrature weights; every integral over the grid uses these.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        trapezoid_weights(0.0, 1.0, self.points.len())
    }

    /// `∫ f g` on the grid.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        crate::quadrature::weighted_dot(&self.quadrature_weights(), f, g)
    }

    /// Piecewise-linear interpolation of grid values at `t`, constant outside `[0, 1]`.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let p = self.points.len();
        if t <= 0.0 {
            return values[0];
        }
        if t >= 1.0 {
            return values[p - 1];
        }
        let x = t * (p - 1) as f64;
        let k = (x.floor() as usize).min(p - 2);
        let frac = x - k as f64;
        values[k] + frac * (values[k + 1] - values[k])
    }
}

/// Spacing diagnostics of the site configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteGeometry {
    /// `max_j min_{i≠j} ‖s_i − s_j‖`
    pub delta_n: f64,
    /// `min_j max_{i≠j} ‖s_i − s_j‖`
    pub big_delta_n: f64,
    /// Largest pairwise distance.
    pub diameter: f64,
    n: usize,
    distances: Vec<f64>,
}

impl SiteGeometry {
    pub fn from_sites(sites: &[[f64; 2]]) -> Result<Self> {
        let n = sites.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "site geometry needs at least 2 sites, got {n}"
            )));
        }
        let mut distances = vec![0.0; n * n];
        for i in 0..n {
            for k in i + 1..n {
                let d = euclidean(sites[i], sites[k]);
                distances[i * n + k] = d;
                distances[k * n + i] = d;
            }
        }
        let mut delta_n = f64::NEG_INFINITY;
        let mut big_delta_n = f64::INFINITY;
        let mut diameter = 0.0f64;
        for j in 0..n {
            let row = (0..n).filter(|&i| i != j).map(|i| distances[j * n + i]);
            let (lo, hi) = row.fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
            delta_n = delta_n.max(lo);
            big_delta_n = big_delta_n.min(hi);
            diameter = diameter.max(hi);
        }
        Ok(SiteGeometry {
            delta_n,
            big_delta_n,
            diameter,
            n,
            distances,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn distance(&self, i: usize, k: usize) -> f64 {
        self.distances[i * self.n + k]
    }

    /// Row-major `n × n` distance matrix.
    pub fn pairwise_distances(&self) -> &[f64] {
        &self.distances
    }

    /// Indices of the `k` sites nearest to `i` (excluding `i`), nearest first.
    pub fn nearest(&self, i: usize, k: usize) -> Vec<usize> {
        let mut others: Vec<usize> = (0..self.n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| self.distance(i, a).total_cmp(&self.distance(i, b)).then(a.cmp(&b)));
        others.truncate(k);
        others
    }
}

pub fn site_geometry(dataset: &SpatialFunctionalDataset) -> Result<SiteGeometry> {
    SiteGeometry::from_sites(&dataset.sites())
}

pub(crate) fn euclidean(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Central response interval `[y_α, y_{1−α}]` restricting which subjects
/// enter the inverse-regression covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimSpec {
    alpha: f64,
}

impl TrimSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&alpha) {
            return Err(Error::InvalidArgument(format!(
                "trim fraction must lie in [0, 0.5), got {alpha}"
            )));
        }
        Ok(TrimSpec { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for TrimSpec {
    fn default() -> Self {
        TrimSpec { alpha: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let k = pos.floor() as usize;
    if k + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = pos - k as f64;
    sorted[k] + frac * (sorted[k + 1] - sorted[k])
}

pub fn trim_interval(responses: &[f64], trim: TrimSpec) -> Result<Interval> {
    if responses.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "trim interval needs at least 2 responses, got {}",
            responses.len()
        )));
    }
    let mut sorted = responses.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Interval {
        lo: quantile(&sorted, trim.alpha),
        hi: quantile(&sorted, 1.0 - trim.alpha),
    })
}
