//! Adjustment sets: which loci of the child's haplotype are conditioned on
//! when resampling an instrument, heterozygous flanks, partitions of the
//! chromosome and bookkeeping of declared variant roles.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{GeneticMap, HaplotypePair, Origin};
use crate::error::{Direction, Error, Result};
use crate::hmm::ConditioningWindow;

/// Which inherited quantity is the instrument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", try_from = "String")]
pub enum Side {
    Maternal,
    Paternal,
    /// Allele count `Z^m + Z^f`.
    Genotype,
}

impl Side {
    pub fn origins(self) -> &'static [Origin] {
        match self {
            Side::Maternal => &[Origin::Maternal],
            Side::Paternal => &[Origin::Paternal],
            Side::Genotype => &Origin::BOTH,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Maternal => "maternal",
            Side::Paternal => "paternal",
            Side::Genotype => "genotype",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maternal" | "m" => Ok(Side::Maternal),
            "paternal" | "f" => Ok(Side::Paternal),
            "genotype" | "g" => Ok(Side::Genotype),
            _ => Err(Error::Config(format!("unknown side {s:?}"))),
        }
    }
}

impl TryFrom<String> for Side {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// How the unobserved block around an instrument is chosen. Everything in
/// the chromosome outside the block is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowRule {
    /// Hide `j - radius ..= j + radius`.
    Loci { radius: usize },
    /// Hide every locus within `radius_cm` centimorgans of `j`.
    Distance { radius_cm: f64 },
    /// Hide everything strictly between the nearest heterozygous loci of the
    /// transmitting parent, searching at most `max_span` loci each way.
    HeterozygousFlanks { max_span: Option<usize> },
    /// Condition on `..=left` and `right..`; `None` means no flank.
    Explicit {
        left: Option<usize>,
        right: Option<usize>,
    },
}

impl WindowRule {
    /// Whether the hidden block depends on the parent's haplotypes.
    pub fn is_parent_specific(&self) -> bool {
        matches!(self, WindowRule::HeterozygousFlanks { .. })
    }
}

/// An instrument together with the rule selecting its adjustment set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustmentSpec {
    pub instrument: usize,
    pub side: Side,
    pub rule: WindowRule,
}

/// Window chosen for one parent, with the direction in which a
/// heterozygous flank was missing, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedWindow {
    pub window: ConditioningWindow,
    pub fallback: Option<Direction>,
}

impl AdjustmentSpec {
    pub fn new(instrument: usize, side: Side, rule: WindowRule) -> Self {
        Self {
            instrument,
            side,
            rule,
        }
    }

    pub fn validate(&self, map: &GeneticMap) -> Result<()> {
        let p = map.len();
        let j = self.instrument;
        if j >= p {
            return Err(Error::Config(format!(
                "instrument locus {} outside the map (1..{p})",
                j + 1
            )));
        }
        match self.rule {
            WindowRule::Distance { radius_cm } if !(radius_cm >= 0.0) => Err(Error::Config(
                format!("window radius must be non-negative, got {radius_cm}"),
            )),
            WindowRule::Explicit { left, right } => {
                let bad_left = left.is_some_and(|l| l >= j);
                let bad_right = right.is_some_and(|h| h <= j || h >= p);
                if bad_left || bad_right {
                    Err(Error::InvalidWindow(format!(
                        "flanks must satisfy left < {} < right <= {p}",
                        j + 1
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Hidden block for rules that do not depend on the parent.
    pub fn fixed_hidden(&self, map: &GeneticMap) -> Option<(usize, usize)> {
        let p = map.len();
        let j = self.instrument;
        match self.rule {
            WindowRule::Loci { radius } => Some((j.saturating_sub(radius), (j + radius).min(p - 1))),
            WindowRule::Distance { radius_cm } => {
                let lo = (0..=j)
                    .find(|&k| map.span_cm(k, j) <= radius_cm)
                    .unwrap_or(j);
                let hi = (j..p)
                    .rev()
                    .find(|&k| map.span_cm(j, k) <= radius_cm)
                    .unwrap_or(j);
                Some((lo, hi))
            }
            WindowRule::Explicit { left, right } => {
                Some((left.map_or(0, |l| l + 1), right.map_or(p - 1, |h| h - 1)))
            }
            WindowRule::HeterozygousFlanks { .. } => None,
        }
    }

    /// Conditioning window for the meiosis of `parent`.
    pub fn resolve(&self, map: &GeneticMap, parent: &HaplotypePair) -> ResolvedWindow {
        let p = map.len();
        if let Some((lo, hi)) = self.fixed_hidden(map) {
            return ResolvedWindow {
                window: ConditioningWindow::complement(p, lo, hi),
                fallback: None,
            };
        }
        let WindowRule::HeterozygousFlanks { max_span } = self.rule else {
            unreachable!()
        };
        let j = self.instrument;
        let left = nearest_heterozygous(parent, j, max_span, Direction::Left);
        let right = nearest_heterozygous(parent, j, max_span, Direction::Right);
        let fallback = match (left, right) {
            (None, _) => Some(Direction::Left),
            (_, None) => Some(Direction::Right),
            _ => None,
        };
        ResolvedWindow {
            window: ConditioningWindow::between(p, left, right),
            fallback,
        }
    }

    /// Hidden loci `A` over all relevant parents of a trio.
    pub fn hidden_set(&self, map: &GeneticMap, parents: &[&HaplotypePair]) -> BTreeSet<usize> {
        if let Some((lo, hi)) = self.fixed_hidden(map) {
            return (lo..=hi).collect();
        }
        let mut set = BTreeSet::new();
        for parent in parents {
            if let Some((lo, hi)) = self.resolve(map, parent).window.hidden {
                set.extend(lo..=hi);
            }
        }
        set
    }
}

fn nearest_heterozygous(
    parent: &HaplotypePair,
    j: usize,
    max_span: Option<usize>,
    direction: Direction,
) -> Option<usize> {
    let span = max_span.unwrap_or(usize::MAX);
    match direction {
        Direction::Left => (j.saturating_sub(span)..j)
            .rev()
            .find(|&k| parent.is_heterozygous(k)),
        Direction::Right => (j + 1..parent.len())
            .take(span)
            .find(|&k| parent.is_heterozygous(k)),
    }
}

/// Nearest loci `b1 < j < b2` at which `parent` is heterozygous, searching at
/// most `max_span` loci in each direction.
pub fn find_heterozygous_flanks(
    parent: &HaplotypePair,
    j: usize,
    max_span: Option<usize>,
    origin: Origin,
) -> Result<(usize, usize)> {
    let find = |direction| {
        nearest_heterozygous(parent, j, max_span, direction).ok_or(Error::NoHeterozygousFlank {
            locus: j + 1,
            direction,
            origin,
        })
    };
    Ok((find(Direction::Left)?, find(Direction::Right)?))
}

/// Declared roles of variants: exposure-causal `J_d`, pleiotropic `J_y` and
/// null `J_0`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantRoles {
    pub exposure_causal: BTreeSet<usize>,
    pub pleiotropic: BTreeSet<usize>,
    pub null: BTreeSet<usize>,
}

impl VariantRoles {
    pub fn new(
        exposure_causal: impl IntoIterator<Item = usize>,
        pleiotropic: impl IntoIterator<Item = usize>,
        null: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let roles = Self {
            exposure_causal: exposure_causal.into_iter().collect(),
            pleiotropic: pleiotropic.into_iter().collect(),
            null: null.into_iter().collect(),
        };
        roles.validate()?;
        Ok(roles)
    }

    pub fn validate(&self) -> Result<()> {
        let overlap = self
            .exposure_causal
            .intersection(&self.pleiotropic)
            .chain(self.exposure_causal.intersection(&self.null))
            .chain(self.pleiotropic.intersection(&self.null))
            .next();
        match overlap {
            Some(j) => Err(Error::Config(format!(
                "locus {} is declared with more than one role",
                j + 1
            ))),
            None => Ok(()),
        }
    }
}

/// Outcome of checking an adjustment set against declared roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ValidityReport {
    /// The hidden block contains an exposure-causal variant.
    pub relevance: bool,
    /// The hidden block contains no pleiotropic variant.
    pub exclusion: bool,
}

impl ValidityReport {
    pub fn passes(&self) -> bool {
        self.relevance && self.exclusion
    }
}

pub fn check_validity(hidden: &BTreeSet<usize>, roles: &VariantRoles) -> ValidityReport {
    ValidityReport {
        relevance: !hidden.is_disjoint(&roles.exposure_causal),
        exclusion: hidden.is_disjoint(&roles.pleiotropic),
    }
}

/// Chromosome cut at separator loci into regions `A_1, b_1, A_2, ..., A_{k+1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub regions: Vec<Range<usize>>,
    pub separators: Vec<usize>,
}

impl Partition {
    /// Index of the region containing `j`, `None` for a separator.
    pub fn region_of(&self, j: usize) -> Option<usize> {
        self.regions.iter().position(|r| r.contains(&j))
    }

    pub fn len(&self) -> usize {
        self.regions.last().map_or(0, |r| r.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn build_partition(separators: &[usize], p: usize) -> Result<Partition> {
    let separators: Vec<usize> = separators
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if let Some(&b) = separators.last() {
        if b >= p {
            return Err(Error::Config(format!("separator {} outside 1..{p}", b + 1)));
        }
    }
    let mut regions = Vec::with_capacity(separators.len() + 1);
    let mut start = 0;
    for &b in &separators {
        regions.push(start..b);
        start = b + 1;
    }
    regions.push(start..p);
    Ok(Partition {
        regions,
        separators,
    })
}

/// Whether instruments at `j1` and `j2` are independent given the separators
/// of `partition`: they must lie in distinct regions with a separator
/// between them at which `parent` is heterozygous.
pub fn instruments_independent(
    j1: usize,
    j2: usize,
    partition: &Partition,
    parent: &HaplotypePair,
) -> bool {
    let (a, b) = (j1.min(j2), j1.max(j2));
    match (partition.region_of(a), partition.region_of(b)) {
        (Some(ra), Some(rb)) if ra != rb => partition
            .separators
            .iter()
            .any(|&s| a < s && s < b && parent.is_heterozygous(s)),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn het_at(p: usize, loci: &[usize]) -> HaplotypePair {
        let m: Vec<u8> = vec![1; p];
        let f: Vec<u8> = (0..p).map(|k| u8::from(!loci.contains(&k))).collect();
        HaplotypePair::from_slices(&m, &f)
    }

    #[test]
    fn flanks_nearest() {
        let parent = het_at(10, &[1, 3, 5, 8]);
        assert_eq!(
            find_heterozygous_flanks(&parent, 4, None, Origin::Maternal).unwrap(),
            (3, 5)
        );
        assert_eq!(
            find_heterozygous_flanks(&parent, 6, None, Origin::Maternal).unwrap(),
            (5, 8)
        );
    }

    #[test]
    fn flank_missing_on_left() {
        let parent = het_at(10, &[7]);
        let err = find_heterozygous_flanks(&parent, 4, None, Origin::Paternal).unwrap_err();
        assert!(matches!(
            err,
            Error::NoHeterozygousFlank {
                direction: Direction::Left,
                origin: Origin::Paternal,
                ..
            }
        ));
    }

    #[test]
    fn flank_beyond_max_span() {
        let parent = het_at(10, &[0, 9]);
        assert!(find_heterozygous_flanks(&parent, 4, Some(3), Origin::Maternal).is_err());
        assert!(find_heterozygous_flanks(&parent, 4, Some(5), Origin::Maternal).is_ok());
    }

    #[test]
    fn flank_rule_falls_back_to_chromosome_end() {
        let map = GeneticMap::from_distances("1", &[0.0; 10]).unwrap();
        let spec = AdjustmentSpec::new(4, Side::Maternal, WindowRule::HeterozygousFlanks { max_span: None });
        let r = spec.resolve(&map, &het_at(10, &[6]));
        assert_eq!(r.window.hidden, Some((0, 5)));
        assert_eq!(r.fallback, Some(Direction::Left));
    }

    #[test]
    fn partition_examples() {
        let part = build_partition(&[4], 9).unwrap();
        assert_eq!(part.regions, vec![0..4, 5..9]);
        assert_eq!(build_partition(&[], 9).unwrap().regions, vec![0..9]);
        let part = build_partition(&[0, 8], 9).unwrap();
        assert_eq!(part.regions, vec![0..0, 1..8, 9..9]);
        assert_eq!(part.region_of(0), None);
        assert_eq!(part.region_of(5), Some(1));
    }

    #[test]
    fn independence_requires_heterozygous_separator() {
        let part = build_partition(&[36], 150).unwrap();
        assert!(instruments_independent(24, 49, &part, &het_at(150, &[36])));
        assert!(!instruments_independent(24, 49, &part, &het_at(150, &[])));
        assert!(!instruments_independent(10, 20, &part, &het_at(150, &[36])));
    }

    #[test]
    fn validity_by_intersection() {
        let roles = VariantRoles::new([23], [22, 26], []).unwrap();
        let good: BTreeSet<usize> = (23..=25).collect();
        assert!(check_validity(&good, &roles).passes());
        let wide: BTreeSet<usize> = (22..=26).collect();
        let r = check_validity(&wide, &roles);
        assert!(r.relevance && !r.exclusion);
        let empty: BTreeSet<usize> = (30..=32).collect();
        assert!(!check_validity(&empty, &roles).relevance);
    }

    #[test]
    fn overlapping_roles_rejected() {
        assert!(VariantRoles::new([1], [1], []).is_err());
    }

    #[test]
    fn distance_window() {
        let map = GeneticMap::from_distances("1", &[0.0, 1.0, 1.0, 1.0, 5.0]).unwrap();
        let spec = AdjustmentSpec::new(2, Side::Genotype, WindowRule::Distance { radius_cm: 1.5 });
        assert_eq!(spec.fixed_hidden(&map), Some((1, 3)));
    }

    #[test]
    fn explicit_window_validation() {
        let map = GeneticMap::from_distances("1", &[0.0; 6]).unwrap();
        let ok = AdjustmentSpec::new(2, Side::Maternal, WindowRule::Explicit { left: Some(0), right: Some(4) });
        assert!(ok.validate(&map).is_ok());
        assert_eq!(ok.fixed_hidden(&map), Some((1, 3)));
        let bad = AdjustmentSpec::new(2, Side::Maternal, WindowRule::Explicit { left: Some(2), right: None });
        assert!(bad.validate(&map).is_err());
    }
}
