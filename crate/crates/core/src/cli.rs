//! The `sfsir` command line: `simulate`, `fit`, `cv`, `study` and `geometry`.
//!
//! Every command writes its outputs plus a `manifest.json` into `--out`.
//! Exit codes: 0 success, 1 usage, 2 input error, 3 computation failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::covariance::WeightScheme;
use crate::data::{load_dataset_with, site_geometry, LoadOptions, SpatialFunctionalDataset, TrimSpec};
use crate::edr::TruncationRule;
use crate::evaluate::cv::{cross_validate, default_candidates, CvPlan, CvTarget};
use crate::evaluate::study::{run_study, Scenario, StudyConfig};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::pipeline::{fit, BandwidthOverrides, FitConfig, Method};
use crate::simulate::{byte_offset, Density, SimulationConfig, Simulator};
use crate::{Error, Result};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_COMPUTATION: i32 = 3;

/// Studies below this fraction of successful replications exit with code 3.
pub const MIN_SUCCESS_RATE: f64 = 0.8;

#[derive(Debug, Parser)]
#[command(name = "sfsir", version, about = "Sliced inverse regression for spatially correlated functional data")]
pub struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, env = "SFSIR_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one replication of the synthetic design.
    Simulate(SimulateArgs),
    /// Estimate covariance surfaces and e.d.r. directions.
    Fit(FitArgs),
    /// Cross-validate one bandwidth target.
    Cv(CvArgs),
    /// Monte Carlo comparison of SFSIR and FSIR.
    Study(StudyArgs),
    /// Site spacing diagnostics.
    Geometry(GeometryArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Observations CSV (`site_id,sx,sy,t,z`).
    #[arg(long)]
    pub observations: PathBuf,
    /// Responses CSV (`site_id,y`).
    #[arg(long)]
    pub responses: PathBuf,
    /// Map the observed time range onto [0, 1].
    #[arg(long)]
    pub rescale_time: bool,
}

impl DataArgs {
    fn load(&self) -> Result<SpatialFunctionalDataset> {
        load_dataset_with(
            &self.observations,
            &self.responses,
            LoadOptions {
                rescale_time: self.rescale_time,
            },
        )
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (JSON); defaults apply to omitted fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub density: Option<Density>,
    /// Replication index; each index has its own random stream.
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
    /// Keep the site configuration identical across replications.
    #[arg(long)]
    pub fixed_sites: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Fit config (JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// obs, subj or mixed:<theta>.
    #[arg(long)]
    pub scheme: Option<WeightScheme>,
    /// Whitening surface; repeat for both.
    #[arg(long = "method")]
    pub methods: Vec<Method>,
    /// Number of e.d.r. directions.
    #[arg(short = 'k', long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Response trimming fraction α.
    #[arg(long)]
    pub trim: Option<f64>,
    #[arg(long)]
    pub neighbor_fraction: Option<f64>,
    /// Constant in the spatial bandwidth rule.
    #[arg(long)]
    pub c_b: Option<f64>,
    /// Keep eigencomponents up to this fraction of variance.
    #[arg(long, conflicts_with = "truncation")]
    pub fve: Option<f64>,
    /// Keep exactly this many eigencomponents.
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub kernel: Option<KernelArg>,
    #[arg(long)]
    pub h_mu: Option<f64>,
    #[arg(long)]
    pub h_c: Option<f64>,
    /// Spatial bandwidth; defaults to the `c_b (n − 1)^{-1/2} · diameter` rule.
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub h_t: Option<f64>,
    #[arg(long)]
    pub h_y: Option<f64>,
    /// Cross-validate every smoothing bandwidth, ignoring fixed ones in the config.
    #[arg(long, conflicts_with_all = ["h_mu", "h_c", "h_t", "h_y"])]
    pub cv: bool,
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// Seed for the cross-validation folds.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum KernelArg {
    Epanechnikov,
    Quartic,
    Uniform,
}

impl From<KernelArg> for KernelSpec {
    fn from(k: KernelArg) -> Self {
        KernelSpec::new(match k {
            KernelArg::Epanechnikov => KernelFamily::Epanechnikov,
            KernelArg::Quartic => KernelFamily::Quartic,
            KernelArg::Uniform => KernelFamily::Uniform,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TargetArg {
    Mean,
    Gamma,
    M,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub target: TargetArg,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "obs")]
    pub scheme: WeightScheme,
    #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
    pub kernel: KernelArg,
    /// Mean bandwidth used to center the gamma target; cross-validated when absent.
    #[arg(long)]
    pub h_mu: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Study config (JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// For example `sparse+nugget`; repeat for several.
    #[arg(long = "scenario")]
    pub scenarios: Vec<Scenario>,
    /// obs, subj or mixed:<theta>; repeat for several.
    #[arg(long = "scheme")]
    pub schemes: Vec<WeightScheme>,
    /// Also write mean curves with ±1 SD bands.
    #[arg(long)]
    pub emit_plot_data: bool,
    #[arg(long)]
    pub fixed_sites: bool,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub versions: BTreeMap<String, String>,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_SUCCESS };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.threads);
            return EXIT_COMPUTATION;
        }
    };
    match pool.install(|| execute(&cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() || matches!(e, Error::InvalidArgument(_)) {
        EXIT_INPUT
    } else {
        EXIT_COMPUTATION
    }
}

fn execute(command: &Command) -> Result<i32> {
    let started = Instant::now();
    match command {
        Command::Simulate(a) => cmd_simulate(a, started),
        Command::Fit(a) => cmd_fit(a, started),
        Command::Cv(a) => cmd_cv(a, started),
        Command::Study(a) => cmd_study(a, started),
        Command::Geometry(a) => cmd_geometry(a, started),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        Error::Config(vec![format!(
            "{}: invalid JSON at byte offset {} (line {}, column {}): {e}",
            path.display(),
            byte_offset(text, e.line(), e.column()),
            e.line(),
            e.column()
        )])
    })
}

/// Creates `dir/name`, hands a buffered writer to `f`, and returns `name`.
fn write_output(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<String> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    f(&mut out).and_then(|_| out.flush()).map_err(|e| Error::io(&path, e))?;
    Ok(name.to_string())
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<String> {
    write_output(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    started: Instant,
    outputs: Vec<String>,
) -> Result<()> {
    let versions = BTreeMap::from([
        ("sfsir".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("threads".to_string(), rayon::current_num_threads().to_string()),
    ]);
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        seed,
        versions,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs,
    };
    write_json(dir, "manifest.json", &manifest).map(|_| ())
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn cmd_simulate(a: &SimulateArgs, started: Instant) -> Result<i32> {
    let mut config = match &a.config {
        Some(path) => {
            let text = read_text(path)?;
            SimulationConfig::from_json(&text).map_err(|e| match e {
                Error::Config(p) => Error::Config(p.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
                other => other,
            })?
        }
        None => SimulationConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(n) = a.n {
        config.n = n;
    }
    if let Some(d) = a.density {
        config.density = d;
    }
    config.fixed_sites |= a.fixed_sites;
    config.validate()?;

    let (dataset, truth) = Simulator::new(config.clone())?.replication(a.replication)?;
    create_dir(&a.out)?;
    let outputs = vec![
        write_output(&a.out, "observations.csv", |w| dataset.write_observations(w))?,
        write_output(&a.out, "responses.csv", |w| dataset.write_responses(w))?,
        write_output(&a.out, "truth.json", |w| writeln!(w, "{}", truth.to_json()))?,
    ];
    let echo = serde_json::json!({ "simulation": config, "replication": a.replication });
    write_manifest(&a.out, "simulate", echo, Some(config.seed), started, outputs)?;
    println!(
        "simulated {} sites, {} observations -> {}",
        dataset.n(),
        dataset.total_observations(),
        a.out.display()
    );
    Ok(EXIT_SUCCESS)
}

fn fit_config(a: &FitArgs) -> Result<FitConfig> {
    let mut c: FitConfig = match &a.config {
        Some(path) => parse_json(&read_text(path)?, path)?,
        None => FitConfig::default(),
    };
    if let Some(s) = a.scheme {
        c.scheme = s;
    }
    if !a.methods.is_empty() {
        c.methods = a.methods.clone();
    }
    if let Some(k) = a.k {
        c.k = k;
    }
    if let Some(p) = a.grid_size {
        c.grid_size = p;
    }
    if let Some(alpha) = a.trim {
        c.trim = TrimSpec::new(alpha)?;
    }
    if let Some(f) = a.neighbor_fraction {
        c.spatial.neighbor_fraction = f;
    }
    if let Some(cb) = a.c_b {
        c.c_b = cb;
    }
    if let Some(f) = a.fve {
        c.truncation = TruncationRule::FractionOfVariance(f);
    }
    if let Some(l) = a.truncation {
        c.truncation = TruncationRule::Fixed(l);
    }
    if let Some(k) = a.kernel {
        c.kernel = k.into();
    }
    if a.cv {
        c.bandwidths = BandwidthOverrides { b: c.bandwidths.b, ..Default::default() };
    }
    let o = &mut c.bandwidths;
    for (slot, v) in [(&mut o.h_mu, a.h_mu), (&mut o.h_c, a.h_c), (&mut o.b, a.b), (&mut o.h_t, a.h_t), (&mut o.h_y, a.h_y)] {
        if v.is_some() {
            *slot = v;
        }
    }
    if let Some(f) = a.cv_folds {
        c.cv_folds = f;
    }
    if let Some(s) = a.seed {
        c.cv_seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn cmd_fit(a: &FitArgs, started: Instant) -> Result<i32> {
    let config = fit_config(a)?;
    let dataset = a.data.load()?;
    let out = fit(&dataset, &config)?;

    let mut outputs: Vec<String> = out
        .write(&a.out)?
        .iter()
        .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
        .collect();
    if !out.cv.is_empty() {
        outputs.push(write_json(&a.out, "cv.json", &out.cv)?);
    }
    let echo = serde_json::json!({
        "observations": a.data.observations,
        "responses": a.data.responses,
        "rescale_time": a.data.rescale_time,
        "fit": config,
    });
    write_manifest(&a.out, "fit", echo, Some(config.cv_seed), started, outputs)?;

    let b = out.bandwidths;
    println!(
        "bandwidths: h_mu={:.4} h_c={:.4} b={:.4} h_t={:.4} h_y={:.4}",
        b.h_mu, b.h_c, b.b, b.h_t, b.h_y
    );
    for (method, r) in &out.directions {
        let shown: Vec<String> = r.eigenvalues.iter().take(3).map(|v| format!("{v:.4}")).collect();
        println!("{method}: L={} leading eigenvalues [{}]", r.truncation_l, shown.join(", "));
        for w in &r.warnings {
            eprintln!("warning: {method}: {w}");
        }
    }
    Ok(EXIT_SUCCESS)
}

fn cmd_cv(a: &CvArgs, started: Instant) -> Result<i32> {
    let dataset = a.data.load()?;
    let kernel: KernelSpec = a.kernel.into();
    let run = |target: CvTarget| {
        let plan = CvPlan::new(a.folds, a.seed, default_candidates(&dataset, target))?;
        cross_validate(&dataset, &plan, target, a.scheme, kernel)
    };
    let mut outcomes = Vec::new();
    let target = match a.target {
        TargetArg::Mean => CvTarget::Mean,
        TargetArg::M => CvTarget::M,
        TargetArg::Gamma => {
            let h_mu = match a.h_mu {
                Some(h) => h,
                None => {
                    let mean = run(CvTarget::Mean)?;
                    let h = mean.selected[0];
                    outcomes.push(mean);
                    h
                }
            };
            CvTarget::Gamma { h_mu }
        }
    };
    let outcome = run(target)?;
    let selected: Vec<String> = outcome.selected.iter().map(|h| format!("{h:.6}")).collect();
    println!("{}: selected [{}]", target.name(), selected.join(", "));
    outcomes.push(outcome);

    create_dir(&a.out)?;
    let outputs = vec![write_json(&a.out, "cv.json", &outcomes)?];
    let echo = serde_json::json!({
        "observations": a.data.observations,
        "responses": a.data.responses,
        "rescale_time": a.data.rescale_time,
        "target": to_value(&target),
        "folds": a.folds,
        "scheme": a.scheme,
        "kernel": KernelSpec::from(a.kernel),
    });
    write_manifest(&a.out, "cv", echo, Some(a.seed), started, outputs)?;
    Ok(EXIT_SUCCESS)
}

fn study_config(a: &StudyArgs) -> Result<StudyConfig> {
    let mut c: StudyConfig = match &a.config {
        Some(path) => parse_json(&read_text(path)?, path)?,
        None => StudyConfig::default(),
    };
    if let Some(n) = a.n {
        c.n = n;
    }
    if let Some(r) = a.reps {
        c.reps = r;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if !a.scenarios.is_empty() {
        c.scenarios = a.scenarios.clone();
    }
    if !a.schemes.is_empty() {
        c.schemes = a.schemes.clone();
    }
    c.simulation.fixed_sites |= a.fixed_sites;
    c.validate()?;
    Ok(c)
}

fn cmd_study(a: &StudyArgs, started: Instant) -> Result<i32> {
    let config = study_config(a)?;
    let report = run_study(&config)?;
    create_dir(&a.out)?;
    let mut outputs = vec![
        write_output(&a.out, "metrics.csv", |w| report.write_metrics_csv(w))?,
        write_output(&a.out, "table.txt", |w| report.write_table(w))?,
        write_output(&a.out, "replications.csv", |w| report.write_replications_csv(w))?,
        write_output(&a.out, "failures.csv", |w| report.write_failures_csv(w))?,
    ];
    if a.emit_plot_data {
        outputs.push(write_output(&a.out, "plot_data.csv", |w| report.write_plot_data(w))?);
    }
    write_manifest(&a.out, "study", to_value(&config), Some(config.seed), started, outputs)?;

    let mut table = Vec::new();
    report
        .write_table(&mut table)
        .map_err(|e| Error::io(&a.out, e))?;
    print!("{}", String::from_utf8_lossy(&table));
    for f in &report.failures {
        eprintln!("replication {} ({}, {}) failed: {}", f.replication, f.scenario, f.scheme, f.message);
    }
    let rate = report.success_rate();
    if rate < MIN_SUCCESS_RATE {
        eprintln!(
            "error: only {:.0}% of replications succeeded (need {:.0}%)",
            100.0 * rate,
            100.0 * MIN_SUCCESS_RATE
        );
        return Ok(EXIT_COMPUTATION);
    }
    Ok(EXIT_SUCCESS)
}

fn cmd_geometry(a: &GeometryArgs, started: Instant) -> Result<i32> {
    let dataset = a.data.load()?;
    let g = site_geometry(&dataset)?;
    let counts = dataset.counts();
    let summary = serde_json::json!({
        "n": dataset.n(),
        "total_observations": dataset.total_observations(),
        "min_count": counts.iter().min(),
        "max_count": counts.iter().max(),
        "delta_n": g.delta_n,
        "big_delta_n": g.big_delta_n,
        "diameter": g.diameter,
    });
    println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let outputs = vec![write_json(dir, "geometry.json", &summary)?];
        let echo = serde_json::json!({
            "observations": a.data.observations,
            "responses": a.data.responses,
            "rescale_time": a.data.rescale_time,
        });
        write_manifest(dir, "geometry", echo, None, started, outputs)?;
    }
    Ok(EXIT_SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_go_to_stderr() {
        for args in [&["sfsir", "no-such-command"][..], &["sfsir", "fit", "--out", "x"]] {
            assert!(Cli::try_parse_from(args).unwrap_err().use_stderr());
        }
        assert!(!Cli::try_parse_from(["sfsir", "--help"]).unwrap_err().use_stderr());
    }

    #[test]
    fn fit_flags_override_the_config() {
        let cli = Cli::try_parse_from([
            "sfsir", "fit", "--observations", "o.csv", "--responses", "r.csv", "--out", "o",
            "--scheme", "mixed:0.25", "--method", "fsir", "-k", "2", "--truncation", "4", "--h-c", "0.1",
            "--kernel", "quartic",
        ])
        .unwrap();
        let Command::Fit(a) = cli.command else { panic!("expected fit") };
        let c = fit_config(&a).unwrap();
        assert_eq!(c.scheme, WeightScheme::Mixed { theta: 0.25 });
        assert_eq!(c.methods, vec![Method::Fsir]);
        assert_eq!((c.k, c.truncation), (2, TruncationRule::Fixed(4)));
        assert_eq!(c.bandwidths.h_c, Some(0.1));
        assert_eq!(c.kernel.family, KernelFamily::Quartic);
    }

    #[test]
    fn cv_flag_conflicts_with_fixed_bandwidths() {
        let r = Cli::try_parse_from([
            "sfsir", "fit", "--observations", "o", "--responses", "r", "--out", "o", "--cv", "--h-mu", "0.1",
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn json_errors_carry_byte_offsets() {
        let err = parse_json::<FitConfig>("{\n  \"k\": ,\n}", Path::new("fit.json")).unwrap_err();
        assert!(err.to_string().contains("byte offset 9"), "{err}");
        assert!(err.is_input_error());
    }

    #[test]
    fn computation_errors_map_to_three() {
        assert_eq!(exit_code(&Error::computation("edr", "singular")), EXIT_COMPUTATION);
        assert_eq!(exit_code(&Error::Validation("bad".into())), EXIT_INPUT);
    }
}
