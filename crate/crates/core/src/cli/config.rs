//! Experiment configuration: defaults, a TOML config file, and command-line
//! flags, merged in that order of increasing precedence.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ca::Boundary;
use crate::error::{Error, Result};
use crate::group::GroupSpec;
use crate::percolation::Direction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Cosy,
    Perc,
    Envelope,
    Cftp,
    Dyncosy,
    Diag,
    Ergo,
    Verify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Cosy => "cosy",
            Experiment::Perc => "perc",
            Experiment::Envelope => "envelope",
            Experiment::Cftp => "cftp",
            Experiment::Dyncosy => "dyncosy",
            Experiment::Diag => "diag",
            Experiment::Ergo => "ergo",
            Experiment::Verify => "verify",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Static,
    Cosy,
    Envelope,
    Cftp,
    Percolation,
    Dyncosy,
    All,
}

/// Sites `(n, i)` written as `"n:i,n:i,..."`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteList(pub Vec<(i64, i64)>);

impl FromStr for SiteList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse site list {s:?}; expected \"n:i,n:i,...\""));
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (n, i) = part.split_once(':').ok_or_else(bad)?;
            out.push((n.trim().parse().map_err(|_| bad())?, i.trim().parse().map_err(|_| bad())?));
        }
        if out.is_empty() {
            return Err(bad());
        }
        Ok(SiteList(out))
    }
}

impl fmt::Display for SiteList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(n, i)| format!("{n}:{i}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl Serialize for SiteList {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SiteList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub group: GroupSpec,
    pub epsilon: f64,
    pub k: i64,
    pub n0: i64,
    pub replicas: u64,
    pub seed: u64,
    pub width: usize,
    pub depth: u64,
    pub boundary: Boundary,
    pub p: f64,
    pub direction: Direction,
    pub sites: SiteList,
    pub depth_cap: u64,
    pub allow_supercritical: bool,
    pub extended_target: bool,
    pub len: usize,
    pub positions: Vec<i64>,
    pub depths: Vec<u64>,
    pub cells: usize,
    pub suite: Suite,
    pub quick: bool,
    pub corrupt_noise: bool,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            group: GroupSpec::z2(),
            epsilon: match experiment {
                Experiment::Cftp | Experiment::Ergo => 0.3,
                Experiment::Dyncosy => 0.02,
                _ => 0.25,
            },
            k: 1,
            n0: -10,
            replicas: match experiment {
                Experiment::Perc => 200,
                _ => 10_000,
            },
            seed: 0,
            width: 4096,
            depth: match experiment {
                Experiment::Dyncosy => 500,
                Experiment::Envelope => 64,
                _ => 200,
            },
            boundary: Boundary::Torus,
            p: 0.6,
            direction: Direction::Forward,
            sites: SiteList(vec![(0, 0)]),
            depth_cap: crate::cftp::DEFAULT_DEPTH_CAP,
            allow_supercritical: false,
            extended_target: false,
            len: 12,
            positions: vec![0, 0, -1, -1, -2, -2],
            depths: vec![1, 5, 10, 25, 50, 100, 200],
            cells: 3,
            suite: Suite::All,
            quick: false,
            corrupt_noise: false,
            threads: None,
            out: None,
            format: match experiment {
                Experiment::Cftp => Format::Json,
                _ => Format::Csv,
            },
        }
    }

    /// `defaults < file < flags`.
    pub fn resolve(experiment: Experiment, file: &Overrides, flags: &Overrides) -> Self {
        let mut c = Self::defaults(experiment);
        file.apply(&mut c);
        flags.apply(&mut c);
        c
    }
}

/// Optional values from a config file or from flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub group: Option<GroupSpec>,
    pub epsilon: Option<f64>,
    pub k: Option<i64>,
    pub n0: Option<i64>,
    pub replicas: Option<u64>,
    pub seed: Option<u64>,
    pub width: Option<usize>,
    pub depth: Option<u64>,
    pub boundary: Option<Boundary>,
    pub p: Option<f64>,
    pub direction: Option<Direction>,
    pub sites: Option<SiteList>,
    pub depth_cap: Option<u64>,
    pub allow_supercritical: Option<bool>,
    pub extended_target: Option<bool>,
    pub len: Option<usize>,
    pub positions: Option<Vec<i64>>,
    pub depths: Option<Vec<u64>>,
    pub cells: Option<usize>,
    pub suite: Option<Suite>,
    pub quick: Option<bool>,
    pub corrupt_noise: Option<bool>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

macro_rules! apply_fields {
    ($src:expr, $dst:expr; $($f:ident),*; $($o:ident),*) => {
        $( if let Some(v) = &$src.$f { $dst.$f = v.clone(); } )*
        $( if let Some(v) = &$src.$o { $dst.$o = Some(v.clone()); } )*
    };
}

impl Overrides {
    pub fn apply(&self, c: &mut ExperimentConfig) {
        apply_fields!(self, c;
            group, epsilon, k, n0, replicas, seed, width, depth, boundary, p, direction, sites,
            depth_cap, allow_supercritical, extended_target, len, positions, depths, cells, suite,
            quick, corrupt_noise, format;
            threads, out);
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let file = Overrides::from_toml("epsilon = 0.1\nk = 4\nseed = 9\n").unwrap();
        let flags = Overrides {
            k: Some(2),
            ..Overrides::default()
        };
        let c = ExperimentConfig::resolve(Experiment::Cosy, &file, &flags);
        assert_eq!(c.k, 2);
        assert_eq!(c.epsilon, 0.1);
        assert_eq!(c.seed, 9);
        assert_eq!(c.n0, -10);
    }

    #[test]
    fn file_rejects_unknown_keys() {
        assert!(Overrides::from_toml("epsilom = 0.1").is_err());
    }

    #[test]
    fn file_parses_structured_values() {
        let o = Overrides::from_toml("group = \"2,2\"\nsites = \"0:0, -3:4\"\nboundary = \"cone\"\n").unwrap();
        assert_eq!(o.group.unwrap().order(), 4);
        assert_eq!(o.sites.unwrap().0, vec![(0, 0), (-3, 4)]);
        assert_eq!(o.boundary, Some(Boundary::Cone));
    }

    #[test]
    fn site_list_roundtrip() {
        let s: SiteList = "1:2,-3:-4".parse().unwrap();
        assert_eq!(s.to_string(), "1:2,-3:-4");
        assert!("1-2".parse::<SiteList>().is_err());
        assert!("".parse::<SiteList>().is_err());
    }
}
