//! The `lil-lab` batch runner.
//!
//! Every scenario can be driven by flags, by a TOML experiment spec
//! (`--config`), or both; flags win. The fully resolved spec and the seed are
//! embedded in each `<kind>.json` artifact and written next to it as
//! `<kind>.spec.toml`, which re-runs to identical output:
//!
//! ```text
//! lil-lab --config lil-lab-out/constants.spec.toml constants
//! ```
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 invalid input (nothing
//! is written), 3 a verification scenario recorded a violation. Failures are
//! reported on stderr as `{"code", "message", "context"}`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::banach::{DistMoment, EmpiricalMoment, HModel, NormKind, SpaceSpec, TruncatedMoment};
use crate::constants::{
    beta0_estimate, lambda_compute, theorem3_bounds, ConstantsOptions, ConstantsReport, SeriesProbe,
};
use crate::error::{Error, Result};
use crate::fuknagaev::{
    default_t_grid, fn_constants, maximal_tail_bound, mc_verify, split_tail_bound, theorem4_bound,
    BoundParams, MomentData, VerifyConfig,
};
use crate::rng::aux_stream;
use crate::simulate::{
    expected_truncations, geometric_checkpoints, limsup_estimate, run_path, truncated_path, DistSpec,
    PathConfig, Sampler,
};
use crate::slowvary::{
    default_tau_grid, geometric_grid, hq_classify, smallest_member_q, Normalizer, SlowVaryFn, HQ_TOL,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

pub const DEFAULT_OUT: &str = "lil-lab-out";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Hclass,
    Constants,
    FnBound,
    FnVerify,
    LilSim,
    Report,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Hclass => "hclass",
            ScenarioKind::Constants => "constants",
            ScenarioKind::FnBound => "fn-bound",
            ScenarioKind::FnVerify => "fn-verify",
            ScenarioKind::LilSim => "lil-sim",
            ScenarioKind::Report => "report",
        }
    }

    const ARTIFACTS: [ScenarioKind; 5] = [
        ScenarioKind::Hclass,
        ScenarioKind::Constants,
        ScenarioKind::FnBound,
        ScenarioKind::FnVerify,
        ScenarioKind::LilSim,
    ];
}

#[derive(Debug, Parser)]
#[command(name = "lil-lab", version, about = "LIL constants, tail bounds and path simulations")]
pub struct Cli {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "LIL_LAB_WORKERS")]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// TOML experiment spec; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// H_q membership diagnostic for a slowly varying h.
    Hclass(HclassArgs),
    /// C₀, λ, α₀, σ², β₀ and the sandwich between C₀ and λ.
    Constants(ConstantsArgs),
    /// Evaluate the tail bounds for given moment data.
    FnBound(FnBoundArgs),
    /// Monte Carlo falsification of the tail bounds.
    FnVerify(FnVerifyArgs),
    /// Simulate normalized partial-sum paths.
    LilSim(LilSimArgs),
    /// Merge the artifacts of a run directory into summary.json and plot.gp.
    Report { run_dir: PathBuf },
}

/// `H` choice for the constants scenario: an idealized model or the
/// distribution's own truncated second moment.
#[derive(Debug, Clone, PartialEq)]
pub enum HChoice {
    Model(HModel),
    Dist,
}

impl FromStr for HChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "dist" {
            Ok(HChoice::Dist)
        } else {
            Ok(HChoice::Model(s.parse()?))
        }
    }
}

impl std::fmt::Display for HChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HChoice::Model(m) => write!(f, "{m}"),
            HChoice::Dist => f.write_str("dist"),
        }
    }
}

impl Serialize for HChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Accepts a distribution either in compact text form or as a table.
fn de_dist<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<DistSpec>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Compact(String),
        Full(DistSpec),
    }
    Ok(match Option::<Repr>::deserialize(d)? {
        None => None,
        Some(Repr::Compact(s)) => Some(s.parse().map_err(serde::de::Error::custom)?),
        Some(Repr::Full(spec)) => Some(spec),
    })
}

fn parse_dist(s: &str) -> Result<DistSpec> {
    s.parse()
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),+ $(,)?) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )+
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HclassArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<SlowVaryFn>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// τ grid (comma separated).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    /// Number of ln t grid points.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_points: Option<usize>,
    /// Largest ln t on the grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ln_t_max: Option<f64>,
}

impl HclassArgs {
    fn merge(&mut self, base: &HclassArgs) {
        merge_fields!(self, base; h, q, tol, tau, t_points, ln_t_max);
    }

    fn resolve(&mut self) -> Result<()> {
        if self.h.is_none() {
            return Err(Error::Config("hclass needs --h".into()));
        }
        self.q.get_or_insert(0.0);
        self.tol.get_or_insert(HQ_TOL);
        self.tau.get_or_insert_with(default_tau_grid);
        self.t_points.get_or_insert(120);
        self.ln_t_max.get_or_insert(1e30);
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<SlowVaryFn>,
    /// `zero`, `const:<c>`, `llpow:<e>` or `dist`.
    #[arg(long = "H")]
    #[serde(rename = "H", skip_serializing_if = "Option::is_none")]
    pub big_h: Option<HChoice>,
    /// Distribution for `--H dist` and β₀ (compact form).
    #[arg(long, value_parser = parse_dist)]
    #[serde(default, deserialize_with = "de_dist", skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// H_q index used in the sandwich (default: smallest member q on a 0.1 grid).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terms: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Normalizer for α₀ and β₀ (default `psi:<h>`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<Normalizer>,
    /// Samples for an empirical H when no closed form exists.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Path length for β₀ (0 skips it).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta0_n_max: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta0_trials: Option<usize>,
}

impl ConstantsArgs {
    fn merge(&mut self, base: &ConstantsArgs) {
        merge_fields!(self, base; h, big_h, dist, norm, tol, q, rho, terms, margin, normalizer,
            samples, beta0_n_max, beta0_trials);
    }

    fn resolve(&mut self) -> Result<()> {
        let Some(h) = self.h.clone() else {
            return Err(Error::Config("constants needs --h".into()));
        };
        if self.big_h.is_none() {
            return Err(Error::Config("constants needs --H".into()));
        }
        let needs_dist = self.big_h == Some(HChoice::Dist) || self.beta0_n_max.unwrap_or(0) > 0;
        if needs_dist && self.dist.is_none() {
            return Err(Error::Config("--H dist and β₀ need --dist".into()));
        }
        if self.dist.is_some() {
            self.norm.get_or_insert(NormKind::L2);
        }
        self.tol.get_or_insert(1e-3);
        let probe = SeriesProbe::default();
        self.rho.get_or_insert(probe.rho);
        self.terms.get_or_insert(probe.terms);
        self.margin.get_or_insert(probe.margin);
        self.normalizer.get_or_insert(Normalizer::psi(h.clone()));
        self.samples.get_or_insert(100_000);
        self.beta0_n_max.get_or_insert(0);
        self.beta0_trials.get_or_insert(100);
        if self.q.is_none() {
            let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
            self.q = Some(smallest_member_q(&h, &grid));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnBoundArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Explicit ε for the split bound.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_n: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_norm: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moment_s: Option<f64>,
    /// Almost-sure bound M on each summand; enables the bounded-summand bounds.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_bound: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
}

impl FnBoundArgs {
    fn merge(&mut self, base: &FnBoundArgs) {
        merge_fields!(self, base; delta, eta, s, epsilon, t, lambda_n, mean_norm, moment_s,
            max_bound, n);
    }

    fn resolve(&mut self) -> Result<()> {
        if self.t.is_none() || self.lambda_n.is_none() {
            return Err(Error::Config("fn-bound needs --t and --lambda-n".into()));
        }
        let d = BoundParams::default();
        self.delta.get_or_insert(d.delta);
        self.eta.get_or_insert(d.eta);
        self.s.get_or_insert(d.s);
        self.mean_norm.get_or_insert(0.0);
        self.moment_s.get_or_insert(0.0);
        self.n.get_or_insert(1);
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnVerifyArgs {
    #[arg(long, value_parser = parse_dist)]
    #[serde(default, deserialize_with = "de_dist", skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Explicit t grid (comma separated); default 20 points in [0.5√n, 5√n].
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_points: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_points: Option<usize>,
}

impl FnVerifyArgs {
    fn merge(&mut self, base: &FnVerifyArgs) {
        merge_fields!(self, base; dist, norm, n, trials, t_points, delta, eta, s, s_points);
    }

    fn resolve(&mut self) -> Result<()> {
        self.dist.get_or_insert_with(|| "rademacher:5".parse().unwrap());
        self.norm.get_or_insert(NormKind::LInf);
        let n = *self.n.get_or_insert(200);
        self.trials.get_or_insert(10_000);
        self.t_points.get_or_insert_with(|| default_t_grid(n));
        let d = BoundParams::default();
        self.delta.get_or_insert(d.delta);
        self.eta.get_or_insert(d.eta);
        self.s.get_or_insert(d.s);
        self.s_points.get_or_insert(10);
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LilSimArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<SlowVaryFn>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// Checkpoint ratio.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_fraction: Option<f64>,
    #[arg(long, value_parser = parse_dist)]
    #[serde(default, deserialize_with = "de_dist", skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormKind>,
    /// Normalizer (default `psi:<h>`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<Normalizer>,
    /// Also run coupled truncated paths.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncate: Option<bool>,
}

impl LilSimArgs {
    fn merge(&mut self, base: &LilSimArgs) {
        merge_fields!(self, base; h, n_max, trials, ratio, tail_fraction, dist, norm, normalizer,
            truncate);
    }

    fn resolve(&mut self) -> Result<()> {
        let h = self
            .h
            .get_or_insert_with(|| SlowVaryFn::scaled_loglog(2.0, 1.0).unwrap())
            .clone();
        self.n_max.get_or_insert(100_000);
        self.trials.get_or_insert(50);
        self.ratio.get_or_insert(crate::simulate::CHECKPOINT_RATIO);
        self.tail_fraction.get_or_insert(crate::simulate::DEFAULT_TAIL_FRACTION);
        self.dist.get_or_insert_with(|| "normal".parse().unwrap());
        self.norm.get_or_insert(NormKind::L2);
        self.normalizer.get_or_insert(Normalizer::psi(h));
        self.truncate.get_or_insert(false);
        if !(self.ratio.unwrap() > 1.0) {
            return Err(Error::Config("--ratio must be > 1".into()));
        }
        Ok(())
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hclass: Option<HclassArgs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsArgs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fn_bound: Option<FnBoundArgs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fn_verify: Option<FnVerifyArgs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lil_sim: Option<LilSimArgs>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn empty(kind: ScenarioKind) -> Self {
        ExperimentSpec {
            kind,
            seed: None,
            out: None,
            format: None,
            hclass: None,
            constants: None,
            fn_bound: None,
            fn_verify: None,
            lil_sim: None,
        }
    }
}

/// One scenario's output, before anything is written.
struct Outcome {
    result: Value,
    /// `(suffix, header, rows)`; suffix "" gives `<kind>.csv`.
    tables: Vec<(String, Vec<String>, Vec<Vec<String>>)>,
    stdout: Value,
    violation: bool,
}

fn error_code(e: &Error) -> (i32, &'static str) {
    match e {
        Error::Overflow { .. } | Error::BracketFailure(_) | Error::Io(_) | Error::Json(_) => {
            (EXIT_RUNTIME, "runtime")
        }
        _ => (EXIT_VALIDATION, "validation"),
    }
}

fn error_json(code: &str, message: &str, context: Value) -> String {
    json!({ "code": code, "message": message, "context": context }).to_string()
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprintln!(
                "{}",
                error_json("validation", e.to_string().trim(), json!({ "source": "arguments" }))
            );
            return EXIT_VALIDATION;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            let (code, label) = error_code(&e);
            let context = match &e {
                Error::MissingArtifacts { dir, missing } => {
                    json!({ "dir": dir, "missing": missing })
                }
                _ => json!({}),
            };
            eprintln!("{}", error_json(label, &e.to_string(), context));
            code
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    if let Command::Report { run_dir } = &cli.command {
        let summary = report(run_dir)?;
        println!("{}", json!({ "summary": run_dir.join("summary.json"), "artifacts": summary }));
        return Ok(EXIT_OK);
    }

    let kind = match &cli.command {
        Command::Hclass(_) => ScenarioKind::Hclass,
        Command::Constants(_) => ScenarioKind::Constants,
        Command::FnBound(_) => ScenarioKind::FnBound,
        Command::FnVerify(_) => ScenarioKind::FnVerify,
        Command::LilSim(_) => ScenarioKind::LilSim,
        Command::Report { .. } => unreachable!(),
    };
    let base = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let spec = ExperimentSpec::from_toml(&text)?;
            if spec.kind != kind {
                return Err(Error::Config(format!(
                    "config is for {}, not {}",
                    spec.kind.as_str(),
                    kind.as_str()
                )));
            }
            spec
        }
        None => ExperimentSpec::empty(kind),
    };

    let mut resolved = ExperimentSpec::empty(kind);
    resolved.seed = Some(cli.seed.or(base.seed).unwrap_or(DEFAULT_SEED));
    resolved.out = Some(cli.out.clone().or(base.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into()));
    resolved.format = Some(cli.format.or(base.format).unwrap_or(Format::Json));
    match cli.command {
        Command::Hclass(mut a) => {
            a.merge(&base.hclass.unwrap_or_default());
            a.resolve()?;
            resolved.hclass = Some(a);
        }
        Command::Constants(mut a) => {
            a.merge(&base.constants.unwrap_or_default());
            a.resolve()?;
            resolved.constants = Some(a);
        }
        Command::FnBound(mut a) => {
            a.merge(&base.fn_bound.unwrap_or_default());
            a.resolve()?;
            resolved.fn_bound = Some(a);
        }
        Command::FnVerify(mut a) => {
            a.merge(&base.fn_verify.unwrap_or_default());
            a.resolve()?;
            resolved.fn_verify = Some(a);
        }
        Command::LilSim(mut a) => {
            a.merge(&base.lil_sim.unwrap_or_default());
            a.resolve()?;
            resolved.lil_sim = Some(a);
        }
        Command::Report { .. } => unreachable!(),
    }

    let outcome = pool.install(|| run_scenario(&resolved))?;
    write_artifacts(&resolved, &outcome)?;
    println!("{}", outcome.stdout);
    if outcome.violation {
        eprintln!(
            "{}",
            error_json(
                "violation",
                "empirical tail frequency exceeded a bound",
                json!({ "artifact": resolved.out.as_ref().unwrap().join(format!("{}.json", kind.as_str())) })
            )
        );
        return Ok(EXIT_VIOLATION);
    }
    Ok(EXIT_OK)
}

fn run_scenario(spec: &ExperimentSpec) -> Result<Outcome> {
    let seed = spec.seed.unwrap();
    match spec.kind {
        ScenarioKind::Hclass => run_hclass(spec.hclass.as_ref().unwrap()),
        ScenarioKind::Constants => run_constants(spec.constants.as_ref().unwrap(), seed),
        ScenarioKind::FnBound => run_fn_bound(spec.fn_bound.as_ref().unwrap()),
        ScenarioKind::FnVerify => run_fn_verify(spec.fn_verify.as_ref().unwrap(), seed),
        ScenarioKind::LilSim => run_lil_sim(spec.lil_sim.as_ref().unwrap(), seed),
        ScenarioKind::Report => unreachable!(),
    }
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else {
        format!("{v}")
    }
}

fn run_hclass(a: &HclassArgs) -> Result<Outcome> {
    let h = a.h.as_ref().unwrap();
    let points = a.t_points.unwrap();
    if points < 4 {
        return Err(Error::invalid("--t-points must be at least 4"));
    }
    let grid = geometric_grid(10.0, a.ln_t_max.unwrap(), points);
    let rep = hq_classify(h, a.q.unwrap(), &grid, a.tau.as_ref().unwrap(), a.tol.unwrap())?;
    let sanity = h.slow_variation_check();
    let mut rows = Vec::new();
    for c in &rep.curves {
        for (u, r) in c.ln_t.iter().zip(&c.ratio) {
            rows.push(vec![num(c.tau), num(*u), num(*r), format!("{:?}", c.verdict)]);
        }
    }
    Ok(Outcome {
        stdout: json!({
            "kind": "hclass", "h": rep.h, "q": rep.q, "verdict": rep.verdict,
            "slow_variation_ok": sanity.within_tolerance,
        }),
        result: json!({ "membership": rep, "slow_variation": sanity }),
        tables: vec![(
            String::new(),
            ["tau", "ln_t", "ratio", "verdict"].map(String::from).to_vec(),
            rows,
        )],
        violation: false,
    })
}

/// `H` for a distribution: closed form when available, else empirical.
fn moment_for(
    dist: &DistSpec,
    space: SpaceSpec,
    samples: usize,
    seed: u64,
) -> Result<(Box<dyn TruncatedMoment>, String)> {
    match DistMoment::new(dist.clone(), space) {
        Ok(m) => Ok((Box::new(m), format!("dist:{}", dist.describe()))),
        Err(Error::NoClosedForm(_)) => {
            if samples == 0 {
                return Err(Error::invalid("--samples must be positive"));
            }
            let sampler = Sampler::new(dist, &space)?;
            let draws = sampler.sample_n(&mut aux_stream(seed, 1), samples);
            Ok((
                Box::new(EmpiricalMoment::new(draws, space)?),
                format!("empirical:{}:{samples}", dist.describe()),
            ))
        }
        Err(e) => Err(e),
    }
}

fn space_for(dist: &DistSpec, norm: NormKind) -> Result<SpaceSpec> {
    SpaceSpec::new(dist.dim(), norm)
}

fn run_constants(a: &ConstantsArgs, seed: u64) -> Result<Outcome> {
    let h = a.h.as_ref().unwrap();
    let (big_h, label): (Box<dyn TruncatedMoment>, String) = match a.big_h.as_ref().unwrap() {
        HChoice::Model(m) => (Box::new(*m), m.to_string()),
        HChoice::Dist => {
            let dist = a.dist.as_ref().unwrap();
            moment_for(dist, space_for(dist, a.norm.unwrap())?, a.samples.unwrap(), seed)?
        }
    };
    let opts = ConstantsOptions {
        tol: a.tol.unwrap(),
        q: a.q.unwrap(),
        probe: SeriesProbe {
            rho: a.rho.unwrap(),
            terms: a.terms.unwrap(),
            margin: a.margin.unwrap(),
            ..SeriesProbe::default()
        },
        normalizer: a.normalizer.clone(),
        ..ConstantsOptions::default()
    };
    let mut report = ConstantsReport::compute(h, big_h.as_ref(), &label, &opts)?;
    let n_max = a.beta0_n_max.unwrap();
    if n_max > 0 {
        let dist = a.dist.as_ref().unwrap();
        let space = space_for(dist, a.norm.unwrap())?;
        let cfg = PathConfig::new(n_max, a.beta0_trials.unwrap(), seed)?;
        let est = beta0_estimate(dist, &space, a.normalizer.as_ref().unwrap(), &cfg, 0.25)?;
        report = report.with_beta0(&est);
    }
    let result = serde_json::to_value(&report)?;
    let pick = |k: &str| result.get(k).cloned().unwrap_or(Value::Null);
    let cell = |k: &str| match result.get(k) {
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::String(s)) => s.clone(),
        _ => String::new(),
    };
    let rows = vec![
        vec!["c0".into(), cell("c0_lo"), cell("c0_hi")],
        vec!["lambda".into(), cell("lambda"), cell("lambda")],
        vec!["alpha0".into(), cell("alpha0_lo"), cell("alpha0_hi")],
        vec!["sigma2".into(), cell("sigma2"), cell("sigma2")],
        vec![
            "theorem3".into(),
            report.theorem3[0].to_string(),
            report.theorem3[1].to_string(),
        ],
    ];
    Ok(Outcome {
        stdout: json!({
            "kind": "constants",
            "c0": [pick("c0_lo"), pick("c0_hi")],
            "lambda": pick("lambda"),
            "alpha0": [pick("alpha0_lo"), pick("alpha0_hi")],
            "sigma2": pick("sigma2"),
            "q_used": report.q_used,
            "sandwich_ok": report.sandwich_ok,
        }),
        result,
        tables: vec![(String::new(), ["quantity", "lo", "hi"].map(String::from).to_vec(), rows)],
        violation: false,
    })
}

fn run_fn_bound(a: &FnBoundArgs) -> Result<Outcome> {
    let params = BoundParams {
        eta: a.eta.unwrap(),
        delta: a.delta.unwrap(),
        epsilon: a.epsilon,
        s: a.s.unwrap(),
    };
    params.validate()?;
    let data = MomentData::new(
        a.n.unwrap(),
        a.max_bound.unwrap_or(f64::INFINITY),
        a.lambda_n.unwrap(),
        a.mean_norm.unwrap(),
        a.moment_s.unwrap(),
    )?;
    let t = a.t.unwrap();
    let k = fn_constants(params.delta, params.eta, params.s)?;
    let bound = theorem4_bound(t, &params, &data)?;
    let gauss = if data.lambda_n == 0.0 {
        0.0
    } else {
        (-t * t / ((2.0 + params.delta) * data.lambda_n)).exp()
    };
    let poly = k.c * data.moment_s / t.powf(params.s);
    let (kr1, split) = if a.max_bound.is_some() {
        (
            Some(maximal_tail_bound(t, &data)?),
            Some(split_tail_bound(t, &params, &data)?),
        )
    } else {
        (None, None)
    };
    let result = json!({
        "t": t,
        "theorem4": bound,
        "gaussian_term": gauss,
        "polynomial_term": poly,
        "kr1": kr1,
        "split": split,
        "constants": k,
        "rho_formula": crate::fuknagaev::FnConstants::RHO_FORMULA,
        "data": data,
        "params": params,
    });
    let mut rows = vec![
        vec!["theorem4".to_string(), num(bound)],
        vec!["gaussian_term".into(), num(gauss)],
        vec!["polynomial_term".into(), num(poly)],
        vec!["epsilon".into(), num(k.epsilon)],
        vec!["C".into(), num(k.c)],
    ];
    if let (Some(a), Some(b)) = (kr1, split) {
        rows.push(vec!["kr1".into(), num(a)]);
        rows.push(vec!["split".into(), num(b)]);
    }
    Ok(Outcome {
        stdout: json!({ "kind": "fn-bound", "t": t, "theorem4": bound, "gaussian_term": gauss,
            "polynomial_term": poly, "C": k.c, "kr1": kr1, "split": split }),
        result,
        tables: vec![(String::new(), vec!["name".into(), "value".into()], rows)],
        violation: false,
    })
}

fn run_fn_verify(a: &FnVerifyArgs, seed: u64) -> Result<Outcome> {
    let dist = a.dist.as_ref().unwrap();
    let space = space_for(dist, a.norm.unwrap())?;
    let cfg = VerifyConfig {
        n: a.n.unwrap(),
        trials: a.trials.unwrap(),
        t_grid: a.t_points.clone().unwrap(),
        params: BoundParams {
            eta: a.eta.unwrap(),
            delta: a.delta.unwrap(),
            epsilon: None,
            s: a.s.unwrap(),
        },
        seed,
        s_points: a.s_points.unwrap(),
    };
    let rep = mc_verify(dist, &space, &cfg)?;
    let mut rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                r.kind.as_str().to_string(),
                num(r.t),
                num(r.p_hat),
                num(r.se),
                num(r.bound),
                r.violation.to_string(),
            ]
        })
        .collect();
    rows.extend(rep.mgf.iter().map(|r| {
        vec![
            "mgf".to_string(),
            num(r.s),
            num(r.empirical),
            num(r.se),
            num(r.bound),
            r.violation.to_string(),
        ]
    }));
    Ok(Outcome {
        stdout: json!({
            "kind": "fn-verify", "n": rep.n, "trials": rep.trials,
            "rows": rep.rows.len() + rep.mgf.len(), "violations": rep.violations,
        }),
        violation: rep.has_violation(),
        result: serde_json::to_value(&rep)?,
        tables: vec![(
            String::new(),
            ["kind", "t", "p_hat", "se", "bound", "violation"].map(String::from).to_vec(),
            rows,
        )],
    })
}

fn run_lil_sim(a: &LilSimArgs, seed: u64) -> Result<Outcome> {
    let dist = a.dist.as_ref().unwrap();
    let space = space_for(dist, a.norm.unwrap())?;
    let h = a.h.as_ref().unwrap();
    let normalizer = a.normalizer.as_ref().unwrap();
    let n_max = a.n_max.unwrap();
    let cfg = PathConfig {
        n_max,
        checkpoints: geometric_checkpoints(n_max, a.ratio.unwrap()),
        seed,
        trials: a.trials.unwrap(),
    };
    let paths = run_path(dist, &space, normalizer, &cfg)?;
    let est = limsup_estimate(&paths, a.tail_fraction.unwrap())?;
    let mean = paths.mean_curve();

    // analytic side, when H has a closed form
    let constants = match DistMoment::new(dist.clone(), space) {
        Ok(big_h) => {
            let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
            let q = smallest_member_q(h, &grid);
            let opts = ConstantsOptions {
                q,
                ..ConstantsOptions::default()
            };
            let c0 = crate::constants::c0_compute(h, &big_h, opts.tol, &opts.probe)?;
            let lambda = lambda_compute(h, &big_h, &opts.ln_x_grid)?;
            Some(json!({
                "c0": [c0.lo, c0.hi],
                "lambda": lambda.lambda,
                "q_used": q,
                "theorem3": theorem3_bounds(q, lambda.lambda.0)?,
            }))
        }
        Err(Error::NoClosedForm(_)) => None,
        Err(e) => return Err(e),
    };
    let truncation = if a.truncate.unwrap() {
        let t = truncated_path(dist, &space, normalizer, &cfg)?;
        let expected = expected_truncations(dist, &space, normalizer, n_max).ok();
        Some(json!({
            "mean_truncations": t.mean_truncations(),
            "expected_truncations": expected,
            "last_truncation": t.last_truncation,
            "gap_after_last": t.gap_after_last(),
        }))
    } else {
        None
    };

    let rows: Vec<Vec<String>> = paths
        .ratios
        .iter()
        .enumerate()
        .flat_map(|(trial, row)| {
            paths
                .checkpoints
                .iter()
                .zip(row)
                .map(move |(n, r)| vec![trial.to_string(), n.to_string(), num(*r)])
        })
        .collect();
    let mean_rows = mean
        .iter()
        .map(|m| vec![m.n.to_string(), num(m.mean), num(m.ci_lo), num(m.ci_hi)])
        .collect();
    let result = json!({
        "normalizer": normalizer.to_string(),
        "limsup": est,
        "mean_curve": mean,
        "constants": constants,
        "truncation": truncation,
    });
    Ok(Outcome {
        stdout: json!({
            "kind": "lil-sim",
            "median": est.median, "q10": est.q10, "q90": est.q90,
            "constants": constants,
        }),
        result,
        tables: vec![
            (String::new(), ["trial", "n", "ratio"].map(String::from).to_vec(), rows),
            (
                ".mean".into(),
                ["n", "mean", "ci_lo", "ci_hi"].map(String::from).to_vec(),
                mean_rows,
            ),
        ],
        violation: false,
    })
}

fn spec_json(spec: &ExperimentSpec) -> Result<Value> {
    Ok(serde_json::to_value(spec)?)
}

fn write_artifacts(spec: &ExperimentSpec, outcome: &Outcome) -> Result<()> {
    let dir = spec.out.as_ref().unwrap();
    let kind = spec.kind.as_str();
    let seed = spec.seed.unwrap();
    let spec_value = spec_json(spec)?;
    let toml_text = spec.to_toml()?;
    fs::create_dir_all(dir)?;
    let doc = json!({
        "kind": kind,
        "seed": seed,
        "spec": spec_value,
        "result": outcome.result,
    });
    fs::write(dir.join(format!("{kind}.json")), serde_json::to_string_pretty(&doc)?)?;
    fs::write(dir.join(format!("{kind}.spec.toml")), toml_text)?;
    if spec.format == Some(Format::Csv) {
        for (suffix, header, rows) in &outcome.tables {
            let mut buf = format!(
                "# lil-lab {kind} seed={seed}\n# spec={}\n",
                serde_json::to_string(&spec_value)?
            )
            .into_bytes();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(header).map_err(csv_err)?;
                for r in rows {
                    w.write_record(r).map_err(csv_err)?;
                }
                w.flush()?;
            }
            fs::write(dir.join(format!("{kind}{suffix}.csv")), buf)?;
        }
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Merges the `<kind>.json` artifacts of `dir` into `summary.json` and writes
/// a gnuplot script `plot.gp` for the CSV files present. Returns the names of
/// the merged artifacts.
pub fn report(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        return Err(Error::MissingArtifacts {
            dir: dir.to_path_buf(),
            missing: vec!["<run directory>".into()],
        });
    }
    let mut found = serde_json::Map::new();
    let mut missing = Vec::new();
    for kind in ScenarioKind::ARTIFACTS {
        let path = dir.join(format!("{}.json", kind.as_str()));
        if path.is_file() {
            let doc: Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
            found.insert(kind.as_str().to_string(), doc);
        } else {
            missing.push(format!("{}.json", kind.as_str()));
        }
    }
    if found.is_empty() {
        return Err(Error::MissingArtifacts {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    let names: Vec<String> = found.keys().cloned().collect();
    let summary = if found.len() == 1 {
        found.values().next().unwrap().clone()
    } else {
        let mut s = json!({ "artifacts": found, "missing": missing });
        if let Some(lil) = found.get("lil-sim") {
            let r = &lil["result"];
            let constants = found
                .get("constants")
                .map(|c| {
                    let c = &c["result"];
                    json!({ "c0": [c["c0_lo"], c["c0_hi"]], "lambda": c["lambda"],
                        "theorem3": c["theorem3"], "q_used": c["q_used"] })
                })
                .unwrap_or_else(|| r["constants"].clone());
            s["lil"] = json!({
                "constants": constants,
                "limsup": { "median": r["limsup"]["median"], "q10": r["limsup"]["q10"],
                    "q90": r["limsup"]["q90"] },
            });
        }
        s
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(dir.join("plot.gp"), plot_script(dir))?;
    Ok(names)
}

fn plot_script(dir: &Path) -> String {
    let mut s = String::from(
        "# gnuplot script generated by lil-lab report\nset datafile separator ','\nset key outside\n",
    );
    let has = |name: &str| dir.join(name).is_file();
    if has("lil-sim.csv") {
        s.push_str(
            "set terminal pngcairo size 900,600\nset output 'lil-sim.png'\nset logscale x\n\
             set xlabel 'n'\nset ylabel '|S_n| / c_n'\n\
             plot 'lil-sim.csv' every ::1 using 2:3 with dots title 'paths'\nunset logscale x\n",
        );
    }
    if has("lil-sim.mean.csv") {
        s.push_str(
            "set output 'lil-sim-mean.png'\nset logscale x\n\
             plot 'lil-sim.mean.csv' every ::1 using 1:2 with lines title 'mean', \
             '' every ::1 using 1:3 with lines dt 2 title 'ci_lo', \
             '' every ::1 using 1:4 with lines dt 2 title 'ci_hi'\nunset logscale x\n",
        );
    }
    if has("fn-verify.csv") {
        s.push_str(
            "set output 'fn-verify.png'\nset logscale y\nset xlabel 't'\n\
             plot 'fn-verify.csv' every ::1 using 2:3 with points title 'p_hat', \
             '' every ::1 using 2:5 with points title 'bound'\nunset logscale y\n",
        );
    }
    if has("hclass.csv") {
        s.push_str(
            "set output 'hclass.png'\nset xlabel 'ln t'\nset logscale x\n\
             plot 'hclass.csv' every ::1 using 2:3 with points title 'h(t f_tau(t))/h(t)'\n",
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_toml_round_trip() {
        let mut spec = ExperimentSpec::empty(ScenarioKind::FnVerify);
        spec.seed = Some(5);
        let mut a = FnVerifyArgs::default();
        a.resolve().unwrap();
        spec.fn_verify = Some(a);
        let text = spec.to_toml().unwrap();
        let back = ExperimentSpec::from_toml(&text).unwrap();
        assert_eq!(spec_json(&back).unwrap(), spec_json(&spec).unwrap());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentSpec::from_toml("kind = \"hclass\"\nbogus = 1\n").is_err());
        assert!(
            ExperimentSpec::from_toml("kind = \"hclass\"\n[hclass]\nh = \"LL\"\nqq = 1\n").is_err()
        );
    }

    #[test]
    fn dist_accepts_compact_and_table_forms() {
        let a = ExperimentSpec::from_toml("kind = \"fn-verify\"\n[fn_verify]\ndist = \"rademacher:2\"\n")
            .unwrap();
        let b = ExperimentSpec::from_toml(
            "kind = \"fn-verify\"\n[fn_verify.dist]\nfamily = \"rademacher_product\"\nscales = [1.0, 1.0]\n",
        )
        .unwrap();
        assert_eq!(a.fn_verify.unwrap().dist, b.fn_verify.unwrap().dist);
    }

    #[test]
    fn h_choice_forms() {
        assert_eq!("dist".parse::<HChoice>().unwrap(), HChoice::Dist);
        assert_eq!("const:1".parse::<HChoice>().unwrap(), HChoice::Model(HModel::Const(1.0)));
        assert!("nope".parse::<HChoice>().is_err());
    }
}
