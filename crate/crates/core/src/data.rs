//! Genetic maps, phased trio haplotypes and phenotypes.
//!
//! Three tab-separated files describe a cohort:
//!
//! * map: header `index	id	cM`, one row per locus in order, where `cM` is the
//!   distance from the previous locus in centimorgans (`inf` for unlinked
//!   blocks; the first row's distance is ignored and may be `-`);
//! * haplotypes: header `family	member	origin	alleles`, six rows per family
//!   (`member` in `M`/`F`/`O`, `origin` in `m`/`f`, `alleles` a string of
//!   `0`/`1` of the map's length);
//! * phenotypes: header `family	D	Y`.
//!
//! Loci are numbered from 1 in files and from 0 everywhere in the library.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAP_HEADER: &str = "index\tid\tcM";
pub const HAPLOTYPE_HEADER: &str = "family\tmember\torigin\talleles";
pub const PHENOTYPE_HEADER: &str = "family\tD\tY";

const CHROMOSOME_TAG: &str = "#chromosome=";

/// Which grandparental copy a haplotype (or an ancestry indicator) refers
/// to: `m` is the copy a person inherited from their mother, `f` the one
/// from their father.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Maternal,
    Paternal,
}

impl Origin {
    pub const BOTH: [Origin; 2] = [Origin::Maternal, Origin::Paternal];

    pub fn index(self) -> usize {
        match self {
            Origin::Maternal => 0,
            Origin::Paternal => 1,
        }
    }

    pub fn code(self) -> char {
        match self {
            Origin::Maternal => 'm',
            Origin::Paternal => 'f',
        }
    }

    fn from_code(c: &str) -> Option<Self> {
        match c {
            "m" => Some(Origin::Maternal),
            "f" => Some(Origin::Paternal),
            _ => None,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Maternal => f.write_str("maternal"),
            Origin::Paternal => f.write_str("paternal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Locus {
    pub id: String,
    /// Distance from the previous locus in centimorgans; may be infinite.
    pub dist_cm: f64,
}

/// Ordered loci of one chromosome with inter-locus genetic distances.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneticMap {
    chromosome: String,
    loci: Vec<Locus>,
}

impl GeneticMap {
    pub fn new(chromosome: impl Into<String>, mut loci: Vec<Locus>) -> Result<Self> {
        for (j, locus) in loci.iter().enumerate().skip(1) {
            if locus.dist_cm.is_nan() || locus.dist_cm < 0.0 {
                return Err(Error::NegativeDistance {
                    locus: j + 1,
                    distance: locus.dist_cm,
                });
            }
        }
        if let Some(first) = loci.first_mut() {
            if !first.dist_cm.is_finite() || first.dist_cm < 0.0 {
                first.dist_cm = 0.0;
            }
        }
        Ok(Self {
            chromosome: chromosome.into(),
            loci,
        })
    }

    /// Map with the given distances (centimorgans) and generated ids.
    pub fn from_distances(chromosome: impl Into<String>, dist_cm: &[f64]) -> Result<Self> {
        let loci = dist_cm
            .iter()
            .enumerate()
            .map(|(j, &d)| Locus {
                id: format!("snp{}", j + 1),
                dist_cm: d,
            })
            .collect();
        Self::new(chromosome, loci)
    }

    pub fn chromosome(&self) -> &str {
        &self.chromosome
    }

    pub fn len(&self) -> usize {
        self.loci.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loci.is_empty()
    }

    pub fn loci(&self) -> &[Locus] {
        &self.loci
    }

    /// Distance between loci `j - 1` and `j` in centimorgans (0 for `j = 0`).
    pub fn dist_cm(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.loci[j].dist_cm
        }
    }

    /// Distance between loci `j - 1` and `j` in Morgans.
    pub fn dist_morgans(&self, j: usize) -> f64 {
        self.dist_cm(j) / 100.0
    }

    /// Genetic distance in centimorgans between two loci (order-free).
    pub fn span_cm(&self, a: usize, b: usize) -> f64 {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        ((lo + 1)..=hi).map(|k| self.dist_cm(k)).sum()
    }
}

/// One haplotype: a 0/1 allele per locus.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Haplotype(Vec<u8>);

impl Haplotype {
    /// Panics if any allele is not 0 or 1.
    pub fn new(alleles: Vec<u8>) -> Self {
        assert!(alleles.iter().all(|&a| a <= 1), "alleles must be 0 or 1");
        Self(alleles)
    }

    pub fn alleles(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> u8 {
        self.0[j]
    }

    fn parse(s: &str) -> std::result::Result<Self, char> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(other),
            })
            .collect::<std::result::Result<Vec<u8>, char>>()
            .map(Haplotype)
    }

    fn encode(&self) -> String {
        self.0.iter().map(|&a| if a == 1 { '1' } else { '0' }).collect()
    }
}

impl From<&[u8]> for Haplotype {
    fn from(alleles: &[u8]) -> Self {
        Haplotype::new(alleles.to_vec())
    }
}

/// The two haplotypes of one person, labelled by the parent they came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaplotypePair {
    pub maternal: Haplotype,
    pub paternal: Haplotype,
}

impl HaplotypePair {
    pub fn new(maternal: Haplotype, paternal: Haplotype) -> Self {
        assert_eq!(maternal.len(), paternal.len(), "haplotype lengths differ");
        Self { maternal, paternal }
    }

    pub fn from_slices(maternal: &[u8], paternal: &[u8]) -> Self {
        Self::new(maternal.into(), paternal.into())
    }

    pub fn len(&self) -> usize {
        self.maternal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maternal.is_empty()
    }

    pub fn haplotype(&self, origin: Origin) -> &Haplotype {
        match origin {
            Origin::Maternal => &self.maternal,
            Origin::Paternal => &self.paternal,
        }
    }

    pub fn allele(&self, origin: Origin, j: usize) -> u8 {
        self.haplotype(origin).get(j)
    }

    /// Alleles at locus `j` indexed by ancestry state (`[m, f]`).
    pub fn alleles_at(&self, j: usize) -> [u8; 2] {
        [self.maternal.get(j), self.paternal.get(j)]
    }

    pub fn is_heterozygous(&self, j: usize) -> bool {
        self.maternal.get(j) != self.paternal.get(j)
    }

    pub fn genotype(&self, j: usize) -> u8 {
        self.maternal.get(j) + self.paternal.get(j)
    }
}

/// Mother, father and child with the child's exposure `D` and outcome `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trio {
    pub family_id: String,
    pub mother: HaplotypePair,
    pub father: HaplotypePair,
    pub offspring: HaplotypePair,
    pub exposure: f64,
    pub outcome: f64,
}

impl Trio {
    /// The parent whose meiosis produced the child's `origin` haplotype.
    pub fn parent(&self, origin: Origin) -> &HaplotypePair {
        match origin {
            Origin::Maternal => &self.mother,
            Origin::Paternal => &self.father,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub map: GeneticMap,
    pub trios: Vec<Trio>,
}

impl Cohort {
    pub fn new(map: GeneticMap, trios: Vec<Trio>) -> Result<Self> {
        let p = map.len();
        let mut seen = HashMap::with_capacity(trios.len());
        for trio in &trios {
            if seen.insert(trio.family_id.as_str(), ()).is_some() {
                return Err(Error::Duplicate {
                    family: trio.family_id.clone(),
                    what: "family".into(),
                });
            }
            for (name, pair) in [
                ("mother", &trio.mother),
                ("father", &trio.father),
                ("offspring", &trio.offspring),
            ] {
                if pair.len() != p {
                    return Err(Error::LengthMismatch {
                        family: trio.family_id.clone(),
                        what: name.into(),
                        expected: p,
                        found: pair.len(),
                    });
                }
            }
        }
        Ok(Self { map, trios })
    }

    pub fn len(&self) -> usize {
        self.trios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trios.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    /// Impossible inheritance under a model without mutation.
    Error,
    /// Explained only by a de novo mutation.
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MendelianViolation {
    pub locus: usize,
    /// Which of the child's haplotypes carries the unexplained allele.
    pub origin: Origin,
    pub severity: Severity,
}

/// Loci where a child allele matches neither haplotype of the parent it was
/// inherited from. With `epsilon > 0` these are putative de novo mutations
/// and reported as warnings.
pub fn validate_mendelian(trio: &Trio, epsilon: f64) -> Vec<MendelianViolation> {
    let severity = if epsilon > 0.0 {
        Severity::Warning
    } else {
        Severity::Error
    };
    let mut out = Vec::new();
    for j in 0..trio.offspring.len() {
        for origin in Origin::BOTH {
            let z = trio.offspring.allele(origin, j);
            let parent = trio.parent(origin);
            if z != parent.maternal.get(j) && z != parent.paternal.get(j) {
                out.push(MendelianViolation {
                    locus: j,
                    origin,
                    severity,
                });
            }
        }
    }
    out
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with 1-based line numbers; the first one
/// must equal `header`.
fn data_lines(
    path: &Path,
    header: &str,
    mut on_comment: impl FnMut(&str),
) -> Result<Vec<(usize, String)>> {
    let mut lines = Vec::new();
    let mut saw_header = false;
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            on_comment(trimmed);
            continue;
        }
        if !saw_header {
            if trimmed.trim() != header {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected header {header:?}, found {trimmed:?}"),
                ));
            }
            saw_header = true;
            continue;
        }
        lines.push((i + 1, trimmed.to_string()));
    }
    if !saw_header {
        return Err(Error::parse(path, 1, format!("missing header {header:?}")));
    }
    Ok(lines)
}

fn fields<'a>(path: &Path, line: usize, text: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = text.split('\t').map(str::trim).collect();
    if parts.len() != n {
        return Err(Error::parse(
            path,
            line,
            format!("expected {n} tab-separated fields, found {}", parts.len()),
        ));
    }
    Ok(parts)
}

fn parse_distance(token: &str) -> Option<f64> {
    match token.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        _ => token.parse::<f64>().ok().filter(|d| !d.is_nan()),
    }
}

pub fn load_genetic_map(path: impl AsRef<Path>) -> Result<GeneticMap> {
    let path = path.as_ref();
    let mut chromosome = None;
    let lines = data_lines(path, MAP_HEADER, |c| {
        if let Some(label) = c.strip_prefix(CHROMOSOME_TAG) {
            chromosome = Some(label.trim().to_string());
        }
    })?;
    let mut loci = Vec::with_capacity(lines.len());
    for (line, text) in &lines {
        let parts = fields(path, *line, text, 3)?;
        let index: usize = parts[0]
            .parse()
            .map_err(|_| Error::parse(path, *line, format!("bad locus index {:?}", parts[0])))?;
        let expected = loci.len() + 1;
        if index != expected {
            return Err(Error::NonMonotoneIndex {
                path: path.to_path_buf(),
                line: *line,
                expected,
                found: index,
            });
        }
        let dist_cm = if loci.is_empty() && matches!(parts[2], "-" | "" | "NA") {
            0.0
        } else {
            parse_distance(parts[2]).ok_or_else(|| {
                Error::parse(path, *line, format!("bad distance {:?}", parts[2]))
            })?
        };
        if dist_cm < 0.0 && !loci.is_empty() {
            return Err(Error::NegativeDistance {
                locus: index,
                distance: dist_cm,
            });
        }
        loci.push(Locus {
            id: parts[1].to_string(),
            dist_cm,
        });
    }
    let chromosome = chromosome.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    GeneticMap::new(chromosome, loci)
}

const MEMBERS: [char; 3] = ['M', 'F', 'O'];

fn slot(member: char, origin: Origin) -> usize {
    let m = MEMBERS.iter().position(|&c| c == member).unwrap();
    2 * m + origin.index()
}

/// Reads the haplotype file into per-family `(mother, father, offspring)`
/// triples, in order of first appearance.
pub fn load_haplotypes(
    map: &GeneticMap,
    path: impl AsRef<Path>,
) -> Result<Vec<(String, [HaplotypePair; 3])>> {
    let path = path.as_ref();
    let p = map.len();
    let lines = data_lines(path, HAPLOTYPE_HEADER, |_| {})?;
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, [Option<Haplotype>; 6]> = HashMap::new();
    for (line, text) in &lines {
        let parts = fields(path, *line, text, 4)?;
        let family = parts[0].to_string();
        let member = match parts[1] {
            "M" => 'M',
            "F" => 'F',
            "O" => 'O',
            other => {
                return Err(Error::parse(
                    path,
                    *line,
                    format!("member must be M, F or O, found {other:?}"),
                ))
            }
        };
        let origin = Origin::from_code(parts[2]).ok_or_else(|| {
            Error::parse(
                path,
                *line,
                format!("origin must be m or f, found {:?}", parts[2]),
            )
        })?;
        let what = format!("{member}/{}", origin.code());
        let hap = Haplotype::parse(parts[3]).map_err(|allele| Error::NonBinaryAllele {
            family: family.clone(),
            what: what.clone(),
            allele,
        })?;
        if hap.len() != p {
            return Err(Error::LengthMismatch {
                family,
                what,
                expected: p,
                found: hap.len(),
            });
        }
        let entry = rows.entry(family.clone()).or_insert_with(|| {
            order.push(family.clone());
            Default::default()
        });
        let s = slot(member, origin);
        if entry[s].is_some() {
            return Err(Error::Duplicate { family, what });
        }
        entry[s] = Some(hap);
    }

    let mut out = Vec::with_capacity(order.len());
    for family in order {
        let mut slots = rows.remove(&family).unwrap();
        let mut take = |member: char, origin: Origin| {
            slots[slot(member, origin)]
                .take()
                .ok_or_else(|| Error::MissingMember {
                    family: family.clone(),
                    member,
                    origin: origin.code(),
                })
        };
        let mut pair = |member| -> Result<HaplotypePair> {
            Ok(HaplotypePair::new(
                take(member, Origin::Maternal)?,
                take(member, Origin::Paternal)?,
            ))
        };
        let members = [pair('M')?, pair('F')?, pair('O')?];
        out.push((family, members));
    }
    Ok(out)
}

fn parse_phenotype(token: &str) -> Option<Option<f64>> {
    match token {
        "" | "NA" | "na" | "NaN" | "nan" | "." => Some(None),
        _ => token.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some),
    }
}

/// Joins haplotypes and phenotypes into a validated cohort. Families with a
/// missing phenotype value are dropped with a warning.
pub fn load_cohort(
    map: GeneticMap,
    haplotype_path: impl AsRef<Path>,
    phenotype_path: impl AsRef<Path>,
) -> Result<Cohort> {
    let haplotypes = load_haplotypes(&map, haplotype_path)?;
    let path = phenotype_path.as_ref();
    let lines = data_lines(path, PHENOTYPE_HEADER, |_| {})?;
    let mut phenotypes: HashMap<String, Option<(f64, f64)>> = HashMap::new();
    for (line, text) in &lines {
        let parts = fields(path, *line, text, 3)?;
        let value = |i: usize| {
            parse_phenotype(parts[i]).ok_or_else(|| {
                Error::parse(path, *line, format!("bad phenotype value {:?}", parts[i]))
            })
        };
        let (d, y) = (value(1)?, value(2)?);
        let entry = match (d, y) {
            (Some(d), Some(y)) => Some((d, y)),
            _ => None,
        };
        if phenotypes.insert(parts[0].to_string(), entry).is_some() {
            return Err(Error::Duplicate {
                family: parts[0].to_string(),
                what: "phenotype row".into(),
            });
        }
    }

    let mut trios = Vec::with_capacity(haplotypes.len());
    for (family, [mother, father, offspring]) in haplotypes {
        match phenotypes.remove(&family) {
            None => {
                return Err(Error::UnmatchedFamily {
                    family,
                    present_in: "haplotype",
                    missing_from: "phenotype",
                })
            }
            Some(None) => {
                warn!("family {family}: missing phenotype, excluded");
            }
            Some(Some((exposure, outcome))) => trios.push(Trio {
                family_id: family,
                mother,
                father,
                offspring,
                exposure,
                outcome,
            }),
        }
    }
    if let Some(family) = phenotypes.into_keys().min() {
        return Err(Error::UnmatchedFamily {
            family,
            present_in: "phenotype",
            missing_from: "haplotype",
        });
    }
    Cohort::new(map, trios)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn format_distance(d: f64) -> String {
    if d.is_infinite() {
        "inf".to_string()
    } else {
        format!("{d}")
    }
}

pub fn write_genetic_map(map: &GeneticMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut body = format!("{CHROMOSOME_TAG}{}\n{MAP_HEADER}\n", map.chromosome());
    for (j, locus) in map.loci().iter().enumerate() {
        body.push_str(&format!(
            "{}\t{}\t{}\n",
            j + 1,
            locus.id,
            format_distance(locus.dist_cm)
        ));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_haplotypes(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let result = (|| -> std::io::Result<()> {
        writeln!(w, "{HAPLOTYPE_HEADER}")?;
        for trio in &cohort.trios {
            for (member, pair) in [('M', &trio.mother), ('F', &trio.father), ('O', &trio.offspring)]
            {
                for origin in Origin::BOTH {
                    writeln!(
                        w,
                        "{}\t{member}\t{}\t{}",
                        trio.family_id,
                        origin.code(),
                        pair.haplotype(origin).encode()
                    )?;
                }
            }
        }
        w.flush()
    })();
    result.map_err(|e| Error::io(path, e))
}

pub fn write_phenotypes(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let result = (|| -> std::io::Result<()> {
        writeln!(w, "{PHENOTYPE_HEADER}")?;
        for trio in &cohort.trios {
            writeln!(w, "{}\t{}\t{}", trio.family_id, trio.exposure, trio.outcome)?;
        }
        w.flush()
    })();
    result.map_err(|e| Error::io(path, e))
}
