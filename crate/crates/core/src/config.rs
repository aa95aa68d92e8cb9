//! Analysis configuration files (TOML).
//!
//! ```toml
//! [data]
//! map = "map.tsv"
//! haplotypes = "haplotypes.tsv"
//! phenotypes = "phenotypes.tsv"
//!
//! [test]
//! instruments = [25, 50]
//! side = "genotype"
//! statistic = "clever_F"
//! beta0 = [0.0, 0.5]
//! draws = 1000
//! seed = 7
//!
//! [window]
//! kind = "loci"
//! radius = 1
//! ```
//!
//! Loci are numbered from 1 in the file. Data paths are relative to the
//! directory holding the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adjustment::{AdjustmentSpec, Side, VariantRoles, WindowRule};
use crate::error::{Error, Result};
use crate::randtest::Tail;
use crate::stats::StatisticKind;

pub const DEFAULT_DRAWS: usize = 1000;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub data: RawData,
    pub test: RawTest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<RawWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<RawRoles>,
}

impl RawConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawData {
    pub map: PathBuf,
    pub haplotypes: PathBuf,
    pub phenotypes: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTest {
    pub instruments: Vec<RawInstrument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic: Option<StatisticKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fisher: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<Tail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawInstrument {
    Locus(usize),
    Detailed {
        locus: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        side: Option<Side>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<RawWindow>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RawWindow {
    Loci {
        radius: usize,
    },
    Distance {
        radius_cm: f64,
    },
    HeterozygousFlanks {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_span: Option<usize>,
    },
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        left: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        right: Option<usize>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRoles {
    #[serde(default)]
    pub exposure_causal: Vec<usize>,
    #[serde(default)]
    pub pleiotropic: Vec<usize>,
    #[serde(default)]
    pub null: Vec<usize>,
}

fn locus(one_based: usize, what: &str) -> Result<usize> {
    one_based
        .checked_sub(1)
        .ok_or_else(|| Error::Config(format!("{what}: loci are numbered from 1")))
}

impl RawWindow {
    fn rule(&self) -> Result<WindowRule> {
        Ok(match *self {
            RawWindow::Loci { radius } => WindowRule::Loci { radius },
            RawWindow::Distance { radius_cm } => WindowRule::Distance { radius_cm },
            RawWindow::HeterozygousFlanks { max_span } => WindowRule::HeterozygousFlanks { max_span },
            RawWindow::Explicit { left, right } => WindowRule::Explicit {
                left: left.map(|l| locus(l, "window left flank")).transpose()?,
                right: right.map(|r| locus(r, "window right flank")).transpose()?,
            },
        })
    }
}

impl From<&VariantRoles> for RawRoles {
    fn from(roles: &VariantRoles) -> Self {
        let one_based = |s: &std::collections::BTreeSet<usize>| s.iter().map(|j| j + 1).collect();
        RawRoles {
            exposure_causal: one_based(&roles.exposure_causal),
            pleiotropic: one_based(&roles.pleiotropic),
            null: one_based(&roles.null),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub map: PathBuf,
    pub haplotypes: PathBuf,
    pub phenotypes: PathBuf,
}

/// Validated analysis settings; loci are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub data: DataPaths,
    pub specs: Vec<AdjustmentSpec>,
    pub statistic: StatisticKind,
    pub beta0: Vec<f64>,
    pub draws: usize,
    pub seed: u64,
    pub alpha: f64,
    pub epsilon: f64,
    pub joint: bool,
    pub fisher: bool,
    pub tail: Tail,
    pub roles: Option<VariantRoles>,
}

impl AnalysisConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_raw(raw, base)
    }

    pub fn from_raw(raw: RawConfig, base: &Path) -> Result<Self> {
        let test = raw.test;
        if test.instruments.is_empty() {
            return Err(Error::Config("no instruments listed".into()));
        }
        let side = test.side.unwrap_or(Side::Genotype);
        let default_rule = raw
            .window
            .as_ref()
            .map(RawWindow::rule)
            .transpose()?
            .unwrap_or(WindowRule::Loci { radius: 1 });
        let specs = test
            .instruments
            .iter()
            .map(|inst| {
                Ok(match inst {
                    RawInstrument::Locus(j) => AdjustmentSpec::new(locus(*j, "instrument")?, side, default_rule),
                    RawInstrument::Detailed { locus: j, side: s, window } => AdjustmentSpec::new(
                        locus(*j, "instrument")?,
                        s.unwrap_or(side),
                        window.as_ref().map(RawWindow::rule).transpose()?.unwrap_or(default_rule),
                    ),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let beta0 = test.beta0.map_or(vec![0.0], OneOrMany::into_vec);
        if beta0.is_empty() || beta0.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("beta0 must be a non-empty list of finite numbers".into()));
        }
        let draws = test.draws.unwrap_or(DEFAULT_DRAWS);
        if draws == 0 {
            return Err(Error::Config("draws must be at least 1".into()));
        }
        let alpha = test.alpha.unwrap_or(0.05);
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let epsilon = test.epsilon.unwrap_or(DEFAULT_EPSILON);
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [0, 0.5), got {epsilon}")));
        }
        let roles = raw
            .roles
            .map(|r| {
                let conv = |v: &[usize]| v.iter().map(|&j| locus(j, "roles")).collect::<Result<Vec<_>>>();
                VariantRoles::new(conv(&r.exposure_causal)?, conv(&r.pleiotropic)?, conv(&r.null)?)
            })
            .transpose()?;

        Ok(Self {
            data: DataPaths {
                map: base.join(raw.data.map),
                haplotypes: base.join(raw.data.haplotypes),
                phenotypes: base.join(raw.data.phenotypes),
            },
            specs,
            statistic: test.statistic.unwrap_or(StatisticKind::CleverF),
            beta0,
            draws,
            seed: test.seed.unwrap_or(1),
            alpha,
            epsilon,
            joint: test.joint.unwrap_or(false),
            fisher: test.fisher.unwrap_or(false),
            tail: test.tail.unwrap_or_default(),
            roles,
        })
    }
}
