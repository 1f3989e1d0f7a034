//! Monte Carlo comparison of SFSIR and FSIR on simulated data.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{band, compute_metrics, Band, StudyMetrics};
use crate::covariance::WeightScheme;
use crate::data::{fmt_f64, TimeGrid};
use crate::edr::{align_sign, angle_degrees, normalize};
use crate::pipeline::{fit, FitConfig, Method};
use crate::simulate::{beta_function, Density, SimulationConfig, Simulator};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub density: Density,
    pub nugget: bool,
}

impl Scenario {
    /// The four density × nugget combinations.
    pub fn all() -> Vec<Scenario> {
        [Density::Sparse, Density::Dense]
            .into_iter()
            .flat_map(|density| [true, false].map(|nugget| Scenario { density, nugget }))
            .collect()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.density, if self.nugget { "nugget" } else { "no-nugget" })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (d, n) = s
            .split_once('+')
            .ok_or_else(|| Error::InvalidArgument(format!("scenario {s:?} should look like sparse+nugget")))?;
        let nugget = match n {
            "nugget" => true,
            "no-nugget" | "none" => false,
            _ => return Err(Error::InvalidArgument(format!("unknown nugget setting {n:?} in scenario {s:?}"))),
        };
        Ok(Scenario { density: d.parse()?, nugget })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
    pub schemes: Vec<WeightScheme>,
    /// Template for every fit; its `scheme` is replaced per cell.
    pub fit: FitConfig,
    /// Template for the simulator; `n`, `density`, `nugget` and `seed` are
    /// replaced per scenario.
    pub simulation: SimulationConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n: 50,
            reps: 20,
            seed: 0,
            scenarios: Scenario::all(),
            schemes: vec![WeightScheme::Subj, WeightScheme::Obs],
            fit: FitConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.reps < 2 {
            problems.push(format!(
                "reps must be at least 2 (integrated variance needs two replications), got {}",
                self.reps
            ));
        }
        if self.n < 2 {
            problems.push(format!("n must be at least 2, got {}", self.n));
        }
        if self.scenarios.is_empty() {
            problems.push("at least one scenario is required".into());
        }
        if self.schemes.is_empty() {
            problems.push("at least one weighting scheme is required".into());
        }
        if let Err(Error::Config(p)) = self.fit.validate() {
            problems.extend(p.into_iter().map(|m| format!("fit.{m}")));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub scenario: Scenario,
    pub scheme: WeightScheme,
    pub method: Method,
    pub metrics: StudyMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRecord {
    pub scenario: Scenario,
    pub scheme: WeightScheme,
    pub method: Method,
    pub replication: u64,
    /// `∫(β̂ − β)²` after normalization and sign alignment.
    pub ise: f64,
    pub angle_degrees: f64,
    #[serde(skip)]
    pub estimate: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationFailure {
    pub scenario: Scenario,
    pub scheme: WeightScheme,
    pub replication: u64,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandRecord {
    pub scenario: Scenario,
    pub scheme: WeightScheme,
    pub method: Method,
    pub band: Band,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub rows: Vec<StudyRow>,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
    pub bands: Vec<BandRecord>,
    pub attempted: usize,
}

impl StudyReport {
    pub fn success_rate(&self) -> f64 {
        if self.attempted == 0 {
            return 0.0;
        }
        1.0 - self.failures.len() as f64 / self.attempted as f64
    }

    pub fn row(&self, scenario: Scenario, scheme: WeightScheme, method: Method) -> Option<&StudyMetrics> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.scheme == scheme && r.method == method)
            .map(|r| &r.metrics)
    }

    /// `scenario,scheme,method,isb,ivar,mise`.
    pub fn write_metrics_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "scenario,scheme,method,isb,ivar,mise")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.scenario,
                r.scheme,
                r.method,
                fmt_f64(r.metrics.isb),
                fmt_f64(r.metrics.ivar),
                fmt_f64(r.metrics.mise)
            )?;
        }
        Ok(())
    }

    /// One line per replication and method.
    pub fn write_replications_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "scenario,scheme,method,replication,ise,angle_degrees")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.scenario,
                r.scheme,
                r.method,
                r.replication,
                fmt_f64(r.ise),
                fmt_f64(r.angle_degrees)
            )?;
        }
        Ok(())
    }

    pub fn write_failures_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "scenario,scheme,replication,message")?;
        for f in &self.failures {
            let msg = f.message.replace('"', "'");
            writeln!(out, "{},{},{},\"{msg}\"", f.scenario, f.scheme, f.replication)?;
        }
        Ok(())
    }

    /// Mean curve with ±1 SD bands: `scenario,scheme,method,t,truth,mean,lower,upper`.
    pub fn write_plot_data<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "scenario,scheme,method,t,truth,mean,lower,upper")?;
        for b in &self.bands {
            for (k, t) in self.grid.iter().enumerate() {
                let (m, s) = (b.band.mean[k], b.band.sd[k]);
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    b.scenario,
                    b.scheme,
                    b.method,
                    fmt_f64(*t),
                    fmt_f64(self.truth[k]),
                    fmt_f64(m),
                    fmt_f64(m - s),
                    fmt_f64(m + s)
                )?;
            }
        }
        Ok(())
    }

    /// Table laid out like the published ones, FLM rows marked N/A.
    pub fn write_table<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let schemes: Vec<WeightScheme> = {
            let mut s: Vec<WeightScheme> = Vec::new();
            for r in &self.rows {
                if !s.contains(&r.scheme) {
                    s.push(r.scheme);
                }
            }
            s
        };
        let scenarios: Vec<Scenario> = {
            let mut s: Vec<Scenario> = Vec::new();
            for r in &self.rows {
                if !s.contains(&r.scenario) {
                    s.push(r.scenario);
                }
            }
            s
        };
        write!(out, "{:<20} {:<7}", "scenario", "method")?;
        for s in &schemes {
            write!(out, " | {:^26}", s.to_string().to_uppercase())?;
        }
        writeln!(out)?;
        write!(out, "{:<20} {:<7}", "", "")?;
        for _ in &schemes {
            write!(out, " | {:>8} {:>8} {:>8}", "ISB", "IVAR", "MISE")?;
        }
        writeln!(out)?;
        for sc in &scenarios {
            for (label, method) in [("FSIR", Some(Method::Fsir)), ("SFSIR", Some(Method::Sfsir)), ("FLM", None)] {
                write!(out, "{:<20} {:<7}", sc.to_string(), label)?;
                for s in &schemes {
                    match method.and_then(|m| self.row(*sc, *s, m)) {
                        Some(m) => write!(out, " | {:>8.3} {:>8.3} {:>8.3}", m.isb, m.ivar, m.mise)?,
                        None => write!(out, " | {:>8} {:>8} {:>8}", "N/A", "N/A", "N/A")?,
                    }
                }
                writeln!(out)?;
            }
        }
        writeln!(
            out,
            "replications attempted: {}, failed: {}",
            self.attempted,
            self.failures.len()
        )
    }
}

struct Job {
    scenario: Scenario,
    scheme: WeightScheme,
    replication: u64,
}

/// Runs every scenario × scheme cell for `reps` replications. A failed
/// replication is recorded and skipped for both methods.
pub fn run_study(config: &StudyConfig) -> Result<StudyReport> {
    config.validate()?;
    let grid = TimeGrid::uniform(config.fit.grid_size)?;
    let truth: Vec<f64> = grid.points().iter().map(|&t| beta_function(t)).collect();

    let simulators: Vec<Simulator> = config
        .scenarios
        .iter()
        .map(|sc| {
            Simulator::new(SimulationConfig {
                n: config.n,
                density: sc.density,
                nugget: if sc.nugget {
                    Some(config.simulation.nugget.unwrap_or_default())
                } else {
                    None
                },
                seed: config.seed,
                ..config.simulation.clone()
            })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<Job> = config
        .scenarios
        .iter()
        .flat_map(|&scenario| {
            config.schemes.iter().flat_map(move |&scheme| {
                (0..config.reps as u64).map(move |replication| Job { scenario, scheme, replication })
            })
        })
        .collect();

    let outcomes: Vec<std::result::Result<Vec<ReplicationRecord>, ReplicationFailure>> = jobs
        .par_iter()
        .map(|job| {
            let sim = &simulators[config.scenarios.iter().position(|s| *s == job.scenario).expect("known scenario")];
            run_replication(sim, job, config, &grid, &truth).map_err(|e| ReplicationFailure {
                scenario: job.scenario,
                scheme: job.scheme,
                replication: job.replication,
                message: e.to_string(),
            })
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.extend(r),
            Err(f) => failures.push(f),
        }
    }

    let mut rows = Vec::new();
    let mut bands = Vec::new();
    for &scenario in &config.scenarios {
        for &scheme in &config.schemes {
            for &method in &config.fit.methods {
                let est: Vec<Vec<f64>> = records
                    .iter()
                    .filter(|r| r.scenario == scenario && r.scheme == scheme && r.method == method)
                    .map(|r| r.estimate.clone())
                    .collect();
                if est.len() < 2 {
                    continue;
                }
                rows.push(StudyRow {
                    scenario,
                    scheme,
                    method,
                    metrics: compute_metrics(&grid, &est, &truth)?,
                });
                bands.push(BandRecord {
                    scenario,
                    scheme,
                    method,
                    band: band(&grid, &est, &truth)?,
                });
            }
        }
    }
    Ok(StudyReport {
        grid: grid.points().to_vec(),
        truth,
        rows,
        records,
        failures,
        bands,
        attempted: jobs.len(),
    })
}

fn run_replication(
    sim: &Simulator,
    job: &Job,
    config: &StudyConfig,
    grid: &TimeGrid,
    truth: &[f64],
) -> Result<Vec<ReplicationRecord>> {
    let (dataset, _) = sim.replication(job.replication)?;
    let fit_config = FitConfig {
        scheme: job.scheme,
        cv_seed: config.seed.wrapping_add(job.replication),
        ..config.fit.clone()
    };
    let out = fit(&dataset, &fit_config)?;
    Ok(out
        .directions
        .iter()
        .map(|(method, result)| {
            let estimate = align_sign(grid, &normalize(grid, &result.directions[0]), truth);
            let diff: Vec<f64> = estimate.iter().zip(truth).map(|(a, b)| a - b).collect();
            ReplicationRecord {
                scenario: job.scenario,
                scheme: job.scheme,
                method: *method,
                replication: job.replication,
                ise: grid.inner(&diff, &diff),
                angle_degrees: angle_degrees(grid, &estimate, truth),
                estimate,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::all() {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
        assert!("sparse".parse::<Scenario>().is_err());
    }

    #[test]
    fn one_replication_is_rejected() {
        let cfg = StudyConfig { reps: 1, ..Default::default() };
        let err = run_study(&cfg).unwrap_err().to_string();
        assert!(err.contains("reps must be at least 2"), "{err}");
    }
}
