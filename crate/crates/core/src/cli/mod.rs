//! The `cosify` experiment runner.
//!
//! Each subcommand resolves an [`ExperimentConfig`] (defaults, then the
//! optional `--config` TOML file, then flags), validates it, runs the
//! experiment and emits a [`RunReport`] as CSV or JSON, atomically when
//! written to a file.

pub mod config;
pub mod output;
pub mod verify;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::ca::exact_diagonal_law;
use crate::cftp::{check_subcritical, ergodicity_tv, sample_stationary, CftpOptions, InitialConfig};
use crate::cosiness::{collect_runs, run_extended_target, summarize, MeetingEstimate};
use crate::dyncosy::{density_trajectory, require_z2, ZPcaParams};
use crate::envelope::{question_density, simulate_envelope};
use crate::error::{usage, Error, Result};
use crate::group::GroupSpec;
use crate::noise::{child_seed, NoiseField};
use crate::pca::EpsilonParams;
use crate::percolation::{survival_estimate, Direction};

pub use config::{Experiment, ExperimentConfig, Format, Overrides, SiteList, Suite};
pub use output::{data_lines, write_atomic, Check, RunReport};
pub use verify::{run_suite, NoiseSource, Scale};

use crate::ca::Boundary;

#[derive(Debug, Parser)]
#[command(name = "cosify", version, about = "Couplings, envelopes and perfect sampling for noisy cellular automata")]
pub struct Cli {
    /// Master seed; replicas use seeds derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file (default: stdout). Written atomically.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// TOML file with default values; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Meeting probability of the real-time coupling.
    Cosy(CosyArgs),
    /// Survival of oriented site percolation from the origin.
    Perc(PercArgs),
    /// Density of `?` in the envelope started all-`?`.
    Envelope(EnvelopeArgs),
    /// Stationary values at given sites by coupling from the past.
    Cftp(CftpArgs),
    /// Density of ones in the Z/2 difference process.
    Dyncosy(DyncosyArgs),
    /// Exact joint law along a diagonal of the deterministic automaton.
    Diag(DiagArgs),
    /// Total-variation decay of window laws from adversarial starts.
    Ergo(ErgoArgs),
    /// Run a verification suite; exits nonzero on failure.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Group as cyclic factor orders, e.g. `2` or `2,2`.
    #[arg(long)]
    pub group: Option<GroupSpec>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CosyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub n0: Option<i64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    /// Couple the whole target `(X_n[-k, k] : -k <= n <= 0)`.
    #[arg(long)]
    pub extended_target: bool,
}

#[derive(Debug, Args)]
pub struct PercArgs {
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub depth: Option<u64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long, value_enum)]
    pub direction: Option<Direction>,
}

#[derive(Debug, Args)]
pub struct EnvelopeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub depth: Option<u64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, value_enum)]
    pub boundary: Option<Boundary>,
}

#[derive(Debug, Args)]
pub struct CftpArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Sites as `n:i,n:i,...`.
    #[arg(long, allow_hyphen_values = true)]
    pub sites: Option<SiteList>,
    #[arg(long)]
    pub depth_cap: Option<u64>,
    /// Permit `1 - epst >= 2/3`, where horizons are not guaranteed finite.
    #[arg(long)]
    pub allow_supercritical: bool,
}

#[derive(Debug, Args)]
pub struct DyncosyArgs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    #[arg(long)]
    pub group: Option<GroupSpec>,
    /// Window length `L` at time 0.
    #[arg(long)]
    pub len: Option<usize>,
    /// Path positions `i_0, i_{-1}, ...`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub positions: Option<Vec<i64>>,
}

#[derive(Debug, Args)]
pub struct ErgoArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    pub depths: Option<Vec<u64>>,
    /// Window size in cells.
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub replicas: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum, default_value = "all")]
    pub suite: Suite,
    /// Smaller samples; tolerances widen to four standard errors if needed.
    #[arg(long)]
    pub quick: bool,
    /// Replace the noise by a non-deterministic stub (fault injection).
    #[arg(long, hide = true)]
    pub corrupt_noise: bool,
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

impl Cli {
    pub fn experiment(&self) -> Experiment {
        match self.command {
            Command::Cosy(_) => Experiment::Cosy,
            Command::Perc(_) => Experiment::Perc,
            Command::Envelope(_) => Experiment::Envelope,
            Command::Cftp(_) => Experiment::Cftp,
            Command::Dyncosy(_) => Experiment::Dyncosy,
            Command::Diag(_) => Experiment::Diag,
            Command::Ergo(_) => Experiment::Ergo,
            Command::Verify(_) => Experiment::Verify,
        }
    }

    /// Values given on the command line.
    pub fn overrides(&self) -> Overrides {
        let mut o = Overrides {
            seed: self.seed,
            threads: self.threads,
            out: self.out.clone(),
            format: self.format,
            ..Overrides::default()
        };
        let model = |o: &mut Overrides, m: &ModelArgs| {
            o.group = m.group.clone();
            o.epsilon = m.epsilon;
        };
        match &self.command {
            Command::Cosy(a) => {
                model(&mut o, &a.model);
                o.k = a.k;
                o.n0 = a.n0;
                o.replicas = a.replicas;
                o.extended_target = flag(a.extended_target);
            }
            Command::Perc(a) => {
                o.p = a.p;
                o.depth = a.depth;
                o.width = a.width;
                o.replicas = a.replicas;
                o.direction = a.direction;
            }
            Command::Envelope(a) => {
                model(&mut o, &a.model);
                o.depth = a.depth;
                o.width = a.width;
                o.boundary = a.boundary;
            }
            Command::Cftp(a) => {
                model(&mut o, &a.model);
                o.sites = a.sites.clone();
                o.depth_cap = a.depth_cap;
                o.allow_supercritical = flag(a.allow_supercritical);
            }
            Command::Dyncosy(a) => {
                o.epsilon = a.epsilon;
                o.width = a.width;
                o.depth = a.depth;
            }
            Command::Diag(a) => {
                o.group = a.group.clone();
                o.len = a.len;
                o.positions = a.positions.clone();
            }
            Command::Ergo(a) => {
                model(&mut o, &a.model);
                o.depths = a.depths.clone();
                o.cells = a.cells;
                o.replicas = a.replicas;
            }
            Command::Verify(a) => {
                o.suite = Some(a.suite);
                o.quick = flag(a.quick);
                o.corrupt_noise = flag(a.corrupt_noise);
            }
        }
        o
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(path) => Overrides::from_file(path)?,
            None => Overrides::default(),
        };
        Ok(ExperimentConfig::resolve(self.experiment(), &file, &self.overrides()))
    }
}

fn model_params(c: &ExperimentConfig) -> Result<EpsilonParams> {
    EpsilonParams::new(c.group.clone(), c.epsilon)
}

fn need_replicas(c: &ExperimentConfig) -> Result<()> {
    if c.replicas == 0 {
        return Err(usage("replicas", "at least one replica is required"));
    }
    Ok(())
}

/// Checks a config against the preconditions of its experiment.
pub fn validate(c: &ExperimentConfig) -> Result<()> {
    if c.threads == Some(0) {
        return Err(usage("threads", "thread count must be positive"));
    }
    match c.experiment {
        Experiment::Cosy => {
            model_params(c)?;
            need_replicas(c)?;
            if c.k < 0 {
                return Err(usage("coupling-k", "k must be >= 0"));
            }
            if c.n0 > -1 {
                return Err(usage("coupling-n0", "n0 must be <= -1"));
            }
            if c.extended_target && c.n0 > -c.k - 1 {
                return Err(usage("coupling-n0", "the extended target needs n0 <= -k - 1"));
            }
        }
        Experiment::Perc => {
            need_replicas(c)?;
            if !(0.0..=1.0).contains(&c.p) {
                return Err(usage("percolation-p", format!("p must lie in [0, 1], got {}", c.p)));
            }
            if c.width < 2 {
                return Err(usage("torus-width", "width must be >= 2"));
            }
        }
        Experiment::Envelope => {
            model_params(c)?;
            if c.width == 0 {
                return Err(usage("window-width", "width must be positive"));
            }
            if c.boundary == Boundary::Cone && (c.width as u64) < c.depth + 1 {
                return Err(usage("cone-width", "cone mode needs width >= depth + 1"));
            }
        }
        Experiment::Cftp => {
            check_subcritical(&model_params(c)?, c.allow_supercritical)?;
        }
        Experiment::Dyncosy => {
            require_z2(&c.group)?;
            ZPcaParams::new(c.epsilon, c.width, c.depth)?;
        }
        Experiment::Diag => {
            if c.positions.is_empty() || c.len == 0 {
                return Err(usage("diagonal-positions", "need a window length and at least one position"));
            }
        }
        Experiment::Ergo => {
            model_params(c)?;
            need_replicas(c)?;
            if c.cells == 0 || c.cells > 16 {
                return Err(usage("window-cells", "cells must lie in 1..=16"));
            }
            if c.depths.is_empty() {
                return Err(usage("ergo-depths", "need at least one depth"));
            }
        }
        Experiment::Verify => {}
    }
    Ok(())
}

struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
    payload: Option<serde_json::Value>,
    truncations: u64,
    checks: Vec<Check>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            payload: None,
            truncations: 0,
            checks: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($x.to_string()),*] };
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn cosy(c: &ExperimentConfig) -> Result<Table> {
    let params = model_params(c)?;
    let est: MeetingEstimate = if c.extended_target {
        let root = NoiseField::new(c.seed);
        let runs = (0..c.replicas)
            .into_par_iter()
            .map(|r| run_extended_target(&params, c.k, c.n0, &root.child(r)))
            .collect::<Result<Vec<_>>>()?;
        MeetingEstimate {
            k: c.k,
            n0: c.n0,
            ..summarize(&params, 2 * c.k, c.n0 + c.k, &runs)
        }
    } else {
        let runs = collect_runs(&params, c.k, c.n0, c.replicas, c.seed)?;
        summarize(&params, c.k, c.n0, &runs)
    };
    let mut t = Table::new(&[
        "k",
        "n0",
        "estimate",
        "ci_lo",
        "ci_hi",
        "exact_lower_bound",
        "target_hit_frequency",
        "implication_violations",
        "replicas",
    ]);
    t.push(row![
        est.k,
        est.n0,
        est.estimate,
        est.ci_lo,
        est.ci_hi,
        est.exact_lower_bound,
        est.target_hit_frequency(),
        est.implication_violations,
        est.replicas
    ]);
    Ok(t)
}

fn perc(c: &ExperimentConfig) -> Result<Table> {
    let curve = survival_estimate(c.p, c.depth, c.width, c.replicas, c.seed, c.direction)?;
    let (lo, hi) = curve.interval();
    let mut t = Table::new(&["p", "depth", "survival", "ci_lo", "ci_hi", "width", "replicas"]);
    t.push(row![c.p, c.depth, curve.estimate(), lo, hi, c.width, c.replicas]);
    Ok(t)
}

fn envelope(c: &ExperimentConfig) -> Result<Table> {
    let params = model_params(c)?;
    let n0 = -(c.depth as i64);
    let traj = simulate_envelope(&params, n0, 0, 0, c.width, &NoiseField::new(c.seed), c.boundary)?;
    let mut t = Table::new(&["time", "question_density"]);
    for w in &traj {
        t.push(row![w.time, question_density(&params, w)]);
    }
    Ok(t)
}

fn cftp(c: &ExperimentConfig) -> Result<Table> {
    let params = model_params(c)?;
    let opts = CftpOptions {
        depth_cap: c.depth_cap,
        allow_supercritical: c.allow_supercritical,
        extra_depth: 0,
    };
    let res = sample_stationary(&params, &c.sites.0, &NoiseField::new(c.seed), opts)?;
    let mut t = Table::new(&["n", "i", "value", "horizon", "start_level"]);
    for s in &res.samples {
        let value = s.value.map_or("truncated".to_owned(), |v| {
            params.group.symbol_from_index(v).map_or(v.to_string(), |sym| {
                sym.residues().iter().map(u32::to_string).collect::<Vec<_>>().join(":")
            })
        });
        let horizon = s.horizon.level().map_or("truncated".to_owned(), |h| h.to_string());
        let start = s.start_level.map_or("none".to_owned(), |h| h.to_string());
        t.push(row![s.n, s.i, value, horizon, start]);
    }
    t.truncations = res.truncated_sites.len() as u64;
    t.payload = Some(serde_json::to_value(&res).expect("result serializes"));
    Ok(t)
}

fn dyncosy(c: &ExperimentConfig) -> Result<Table> {
    require_z2(&c.group)?;
    let curve = density_trajectory(&ZPcaParams::new(c.epsilon, c.width, c.depth)?, c.seed);
    let mut t = Table::new(&["step", "density"]);
    for s in 0..=c.depth as usize {
        t.push(row![s, curve.density(s)]);
    }
    Ok(t)
}

fn diag(c: &ExperimentConfig) -> Result<Table> {
    let law = exact_diagonal_law(&c.group, c.len, &c.positions)?;
    let text = law.to_csv();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let mut t = Table::new(&header);
    for line in lines {
        t.push(line.split(',').map(str::to_owned).collect());
    }
    Ok(t)
}

fn ergo(c: &ExperimentConfig) -> Result<Table> {
    let params = model_params(c)?;
    let mut t = Table::new(&["init", "depth", "replicas", "tv"]);
    for (k, init) in InitialConfig::adversarial(params.order()).iter().enumerate() {
        for &d in &c.depths {
            let pt = ergodicity_tv(&params, init, d, c.cells, c.replicas, child_seed(c.seed, k as u64))?;
            t.push(row![pt.init, pt.depth, pt.replicas, pt.tv]);
        }
    }
    Ok(t)
}

fn verify_table(c: &ExperimentConfig) -> Table {
    let scale = if c.quick { Scale::Quick } else { Scale::Full };
    let source = if c.corrupt_noise {
        NoiseSource::Corrupted
    } else {
        NoiseSource::Honest
    };
    let checks = run_suite(c.suite, scale, c.seed, source);
    let mut t = Table::new(&["criterion", "invariant", "passed", "detail"]);
    for ch in &checks {
        t.push(row![ch.criterion, ch.invariant, ch.passed, ch.detail]);
    }
    t.checks = checks;
    t
}

/// Validates and runs an experiment without writing anything.
pub fn execute(config: &ExperimentConfig) -> Result<RunReport> {
    validate(config)?;
    let start = Instant::now();
    let body = || -> Result<Table> {
        match config.experiment {
            Experiment::Cosy => cosy(config),
            Experiment::Perc => perc(config),
            Experiment::Envelope => envelope(config),
            Experiment::Cftp => cftp(config),
            Experiment::Dyncosy => dyncosy(config),
            Experiment::Diag => diag(config),
            Experiment::Ergo => ergo(config),
            Experiment::Verify => Ok(verify_table(config)),
        }
    };
    let table = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(body)?,
        None => body()?,
    };
    Ok(RunReport {
        config: config.clone(),
        columns: table.columns,
        rows: table
            .rows
            .into_iter()
            .map(|r| r.iter().map(|f| csv_field(f)).collect())
            .collect(),
        payload: table.payload,
        truncations: table.truncations,
        checks: table.checks,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs an experiment and writes its report to `config.out`, if set.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let report = execute(config)?;
    if let Some(path) = &config.out {
        write_atomic(path, &report.render())?;
    }
    Ok(report)
}

/// Entry point of the binary.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = cli.resolve().and_then(|c| run(&c));
    match outcome {
        Ok(report) => {
            if report.config.out.is_none() {
                print!("{}", report.render());
            }
            for ch in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("FAIL [{}] {}: {}", ch.criterion, ch.invariant, ch.detail);
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("cosify: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> ExperimentConfig {
        let mut v = vec!["cosify"];
        v.extend_from_slice(args);
        Cli::try_parse_from(v).unwrap().resolve().unwrap()
    }

    #[test]
    fn flags_reach_the_config() {
        let c = parse(&["cosy", "--group", "3", "--epsilon", "0.4", "--k", "2", "--n0", "-30", "--seed", "7"]);
        assert_eq!(c.experiment, Experiment::Cosy);
        assert_eq!(c.group.order(), 3);
        assert_eq!((c.k, c.n0, c.seed), (2, -30, 7));
        let c = parse(&["cftp", "--sites", "-1:2,3:-4", "--format", "csv"]);
        assert_eq!(c.sites.0, vec![(-1, 2), (3, -4)]);
        assert_eq!(c.format, Format::Csv);
        let c = parse(&["diag", "--positions", "0,-1,-1"]);
        assert_eq!(c.positions, vec![0, -1, -1]);
    }

    #[test]
    fn invalid_configs_name_the_constraint() {
        let mut c = ExperimentConfig::defaults(Experiment::Cosy);
        c.epsilon = 0.7;
        match execute(&c) {
            Err(Error::Usage { constraint, .. }) => assert_eq!(constraint, "epsilon-range"),
            other => panic!("{other:?}"),
        }
        let mut c = ExperimentConfig::defaults(Experiment::Cftp);
        c.epsilon = 0.1;
        assert!(matches!(execute(&c), Err(Error::Usage { constraint: "subcritical-epsilon", .. })));
        let mut c = ExperimentConfig::defaults(Experiment::Dyncosy);
        c.group = GroupSpec::cyclic(3).unwrap();
        assert!(matches!(execute(&c), Err(Error::Usage { constraint: "dyncosy-group", .. })));
    }

    #[test]
    fn cosy_row_carries_the_exact_bound() {
        let mut c = ExperimentConfig::defaults(Experiment::Cosy);
        c.k = 0;
        c.n0 = -10;
        c.replicas = 1000;
        let r = execute(&c).unwrap();
        let col = r.columns.iter().position(|h| h == "exact_lower_bound").unwrap();
        assert_eq!(r.rows[0][col], "0.9990234375");
    }

    #[test]
    fn perc_with_closed_sites_never_survives() {
        let mut c = ExperimentConfig::defaults(Experiment::Perc);
        c.p = 0.0;
        c.width = 64;
        c.depth = 10;
        c.replicas = 50;
        let r = execute(&c).unwrap();
        assert_eq!(r.rows[0][2], "0");
    }

    #[test]
    fn csv_has_config_comments_and_header() {
        let mut c = ExperimentConfig::defaults(Experiment::Dyncosy);
        c.width = 64;
        c.depth = 5;
        let text = execute(&c).unwrap().to_csv();
        assert!(text.contains("# seed=0\n"));
        assert!(text.contains("# experiment=dyncosy\n"));
        assert_eq!(data_lines(&text)[0], "step,density");
        assert_eq!(data_lines(&text).len(), 7);
    }

    #[test]
    fn csv_fields_are_quoted() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("x\"y"), "\"x\"\"y\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
