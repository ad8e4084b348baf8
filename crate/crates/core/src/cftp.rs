//! The stationary chain as a deterministic function of the noise field.
//!
//! For a site `(n, i)`, find the percolation horizon (the greatest level
//! below `n` from which nothing leads to `(n, i)`), start the envelope from
//! all-`?` one level below it, and read the cell: it is never `?`. The value
//! only reads noise at levels `<= n` and commutes with shifts of the field.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{tv_distance, DiscreteDistribution, FrequencyTable};
use crate::ca::Window;
use crate::error::{invariant, resource, usage, Result};
use crate::noise::{child_seed, mix64, Field, NoiseField};
use crate::pca::{DependencyCone, EpsilonParams};
use crate::percolation::{backward_cluster, Horizon, PercConfig};

pub const DEFAULT_DEPTH_CAP: u64 = 10_000;

/// Percolation parameters at or above this value are not known to be
/// subcritical.
pub const SUBCRITICAL_BOUND: f64 = 2.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CftpOptions {
    pub depth_cap: u64,
    /// Permit `p >= 2/3`; truncated sites are reported, never filled in.
    pub allow_supercritical: bool,
    /// Start the envelope this many levels further below the horizon.
    pub extra_depth: u64,
}

impl Default for CftpOptions {
    fn default() -> Self {
        CftpOptions {
            depth_cap: DEFAULT_DEPTH_CAP,
            allow_supercritical: false,
            extra_depth: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteSample {
    pub n: i64,
    pub i: i64,
    /// `None` when the horizon search was truncated.
    pub value: Option<u32>,
    pub horizon: Horizon,
    pub start_level: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CftpResult {
    pub samples: Vec<SiteSample>,
    pub truncated_sites: Vec<(i64, i64)>,
}

impl CftpResult {
    pub fn values(&self) -> Vec<Option<u32>> {
        self.samples.iter().map(|s| s.value).collect()
    }
}

pub fn check_subcritical(params: &EpsilonParams, allow_supercritical: bool) -> Result<()> {
    if params.p >= SUBCRITICAL_BOUND && !allow_supercritical {
        return Err(usage(
            "subcritical-epsilon",
            format!(
                "p = 1 - epst = {} is not below 2/3; need eps > (|A|-1)/(3|A|) or an explicit override",
                params.p
            ),
        ));
    }
    Ok(())
}

/// Value of the stationary chain at one site. Fails only if the field is not
/// a deterministic function of the site.
pub fn sample_site<F: Field>(params: &EpsilonParams, n: i64, i: i64, field: &F, opts: CftpOptions) -> Result<SiteSample> {
    let perc = PercConfig { p: params.p, field };
    let horizon = backward_cluster(&perc, n, i, opts.depth_cap).horizon();
    let Horizon::Found(h) = horizon else {
        return Ok(SiteSample {
            n,
            i,
            value: None,
            horizon,
            start_level: None,
        });
    };
    let start = h - 1 - opts.extra_depth as i64;
    let q = params.order();
    let cone = DependencyCone::build(params, field, n, &[i], start)?;
    let vals = cone.evaluate(params, Some(q), |_| q);
    let v = cone.read_targets(&vals, &[i])[0];
    if v == q {
        return Err(invariant(
            "envelope-determined-below-horizon",
            format!("envelope still undetermined at ({n},{i}) after starting below the empty level {h}"),
        ));
    }
    Ok(SiteSample {
        n,
        i,
        value: Some(v),
        horizon,
        start_level: Some(start),
    })
}

pub fn sample_stationary<F: Field>(
    params: &EpsilonParams,
    sites: &[(i64, i64)],
    field: &F,
    opts: CftpOptions,
) -> Result<CftpResult> {
    check_subcritical(params, opts.allow_supercritical)?;
    let samples: Vec<SiteSample> = sites
        .par_iter()
        .map(|&(n, i)| sample_site(params, n, i, field, opts))
        .collect::<Result<_>>()?;
    let truncated_sites = samples
        .iter()
        .filter(|s| s.value.is_none())
        .map(|s| (s.n, s.i))
        .collect();
    Ok(CftpResult {
        samples,
        truncated_sites,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EquivarianceReport {
    pub trials: u64,
    pub agreements: u64,
    pub truncations: u64,
    /// First disagreeing shift, if any.
    pub first_failure: Option<(i64, i64)>,
}

impl EquivarianceReport {
    pub fn passed(&self) -> bool {
        self.agreements + self.truncations == self.trials && self.first_failure.is_none()
    }
}

/// Shift `t` of an equivariance check: uniform on `[-radius, radius]^2`.
pub fn random_shift(seed: u64, t: u64, radius: i64) -> (i64, i64) {
    let h = mix64(child_seed(seed, t));
    let span = (2 * radius + 1) as u64;
    let n = (h % span) as i64 - radius;
    let i = ((h >> 32) % span) as i64 - radius;
    (n, i)
}

/// Compares the sample at `(n, i)` with the sample at `(0, 0)` on the field
/// shifted by `(n, i)`, for `trials` random shifts in `[-50, 50]^2`.
pub fn check_equivariance(
    params: &EpsilonParams,
    field: &NoiseField,
    trials: u64,
    seed: u64,
    opts: CftpOptions,
) -> Result<EquivarianceReport> {
    check_subcritical(params, opts.allow_supercritical)?;
    let outcomes: Vec<Option<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (n, i) = random_shift(seed, t, 50);
            let here = sample_site(params, n, i, field, opts)?.value;
            let there = sample_site(params, 0, 0, &field.shifted(n, i), opts)?.value;
            Ok(match (here, there) {
                (Some(a), Some(b)) => Some(a == b),
                (None, None) => None,
                _ => Some(false),
            })
        })
        .collect::<Result<_>>()?;
    let mut report = EquivarianceReport {
        trials,
        agreements: 0,
        truncations: 0,
        first_failure: None,
    };
    for (t, o) in outcomes.into_iter().enumerate() {
        match o {
            Some(true) => report.agreements += 1,
            None => report.truncations += 1,
            Some(false) => {
                report.first_failure.get_or_insert(random_shift(seed, t as u64, 50));
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AgreementReport {
    pub n0: i64,
    /// Both chains have the same value at `(0, 0)`.
    pub agree_at_origin: bool,
    /// First level `m >= n0` from which the two chains agree on every cell
    /// that `(0, 0)` still depends on.
    pub first_agreement: Option<i64>,
    /// The envelope started all-`?` at `n0` determines `(0, 0)`.
    pub envelope_determined: bool,
    /// First level from which the envelope is determined on every cell
    /// `(0, 0)` depends on.
    pub envelope_determined_at: Option<i64>,
}

/// Runs two `tau_eps` chains from `x1` and `x2` at time `n0` with shared
/// noise, on the cells `(0, 0)` depends on.
pub fn two_start_agreement<F: Field>(
    params: &EpsilonParams,
    n0: i64,
    x1: &Window,
    x2: &Window,
    field: &F,
) -> Result<AgreementReport> {
    if n0 > 0 {
        return Err(usage("agreement-n0", "n0 must be <= 0"));
    }
    if x1.time != n0 || x2.time != n0 {
        return Err(usage("agreement-times", "both windows must sit at time n0"));
    }
    let cone = DependencyCone::build(params, field, 0, &[0], n0)?;
    if let Some(j) = cone.positions(0).find(|&j| !x1.contains(j) || !x2.contains(j)) {
        return Err(resource(
            "cone-width",
            format!("start windows must cover site {j} at time {n0}"),
        ));
    }
    let q = params.order();
    let v1 = cone.evaluate(params, None, |j| x1.at(j));
    let v2 = cone.evaluate(params, None, |j| x2.at(j));
    let env = cone.evaluate(params, Some(q), |_| q);
    let top = v1.len() - 1;
    let first_agreement = (0..=top).find(|&k| v1[k] == v2[k]).map(|k| n0 + k as i64);
    let envelope_determined_at = (0..=top)
        .find(|&k| env[k].iter().all(|&c| c != q))
        .map(|k| n0 + k as i64);
    Ok(AgreementReport {
        n0,
        agree_at_origin: v1[top][0] == v2[top][0],
        first_agreement,
        envelope_determined: env[top][0] != q,
        envelope_determined_at,
    })
}

/// Initial configurations for the ergodicity experiment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialConfig {
    Constant(u32),
    /// `x(j) = pattern[j mod len]`.
    Periodic(Vec<u32>),
    /// I.i.d. uniform symbols keyed by a seed, the same for every replica.
    Frozen(u64),
}

impl InitialConfig {
    pub fn cell(&self, order: u32, j: i64) -> u32 {
        match self {
            InitialConfig::Constant(a) => a % order,
            InitialConfig::Periodic(p) => p[j.rem_euclid(p.len() as i64) as usize] % order,
            InitialConfig::Frozen(seed) => {
                ((NoiseField::new(*seed).u(0, j) * f64::from(order)) as u32).min(order - 1)
            }
        }
    }

    /// Five starts that stress different parts of the dynamics.
    pub fn adversarial(order: u32) -> Vec<InitialConfig> {
        vec![
            InitialConfig::Constant(0),
            InitialConfig::Constant(order - 1),
            InitialConfig::Periodic(vec![0, 1]),
            InitialConfig::Periodic(vec![0, 0, order - 1]),
            InitialConfig::Frozen(0x5eed),
        ]
    }

    pub fn label(&self) -> String {
        match self {
            InitialConfig::Constant(a) => format!("constant-{a}"),
            InitialConfig::Periodic(p) => {
                let s: Vec<String> = p.iter().map(u32::to_string).collect();
                format!("periodic-{}", s.join(""))
            }
            InitialConfig::Frozen(s) => format!("frozen-{s}"),
        }
    }
}

/// Law of `X_0[0, cells - 1]` for the chain started from `init` at time
/// `-depth`, over `replicas` fields `NoiseField::new(seed).child(r)`.
pub fn window_law(
    params: &EpsilonParams,
    init: &InitialConfig,
    depth: u64,
    cells: usize,
    replicas: u64,
    seed: u64,
) -> Result<FrequencyTable> {
    if cells == 0 || cells > 16 {
        return Err(usage("window-cells", "window law needs 1..=16 cells"));
    }
    let order = params.order();
    let bins = (order as usize)
        .checked_pow(cells as u32)
        .filter(|&b| b <= 1 << 20)
        .ok_or_else(|| usage("window-cells", "too many outcomes"))?;
    let sites: Vec<i64> = (0..cells as i64).collect();
    let root = NoiseField::new(seed);
    let samples: Vec<usize> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let field = root.child(r);
            let cone = DependencyCone::build(params, &field, 0, &sites, -(depth as i64)).expect("valid times");
            let vals = cone.evaluate(params, None, |j| init.cell(order, j));
            cone.read_targets(&vals, &sites)
                .iter()
                .fold(0usize, |acc, &v| acc * order as usize + v as usize)
        })
        .collect();
    Ok(FrequencyTable::from_samples(bins, samples))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicityPoint {
    pub init: String,
    pub depth: u64,
    pub replicas: u64,
    pub tv: f64,
}

/// TV distance between the window law from `init` at `depth` and uniform.
pub fn ergodicity_tv(
    params: &EpsilonParams,
    init: &InitialConfig,
    depth: u64,
    cells: usize,
    replicas: u64,
    seed: u64,
) -> Result<ErgodicityPoint> {
    let table = window_law(params, init, depth, cells, replicas, seed)?;
    let tv = tv_distance(&table, &DiscreteDistribution::uniform(table.counts().len()))?;
    Ok(ErgodicityPoint {
        init: init.label(),
        depth,
        replicas,
        tv,
    })
}
