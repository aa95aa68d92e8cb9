//! Test statistics for the randomization test.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative size below which a pivot of the Gram matrix is treated as zero
/// and its column dropped.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub enum StatisticKind {
    /// F-statistic of the adjusted outcome on the instruments.
    #[serde(rename = "plain_F")]
    PlainF,
    /// F-statistic of the adjusted outcome on the instruments and their
    /// clever covariates.
    #[serde(rename = "clever_F")]
    CleverF,
    /// Norm of the clever-covariate weighted sums `sum_i Q_i X_i`.
    #[serde(rename = "weighted_diff")]
    WeightedDiff,
    /// F-statistic of the adjusted outcome on the instruments and their
    /// propensity means `E[Z | adjustment set]`, which stay fixed across
    /// draws.
    #[serde(rename = "propensity_F")]
    PropensityF,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 4] = [
        StatisticKind::PlainF,
        StatisticKind::CleverF,
        StatisticKind::WeightedDiff,
        StatisticKind::PropensityF,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::PlainF => "plain_F",
            StatisticKind::CleverF => "clever_F",
            StatisticKind::WeightedDiff => "weighted_diff",
            StatisticKind::PropensityF => "propensity_F",
        }
    }

    /// Number of regressors besides the intercept for `s` instruments.
    pub fn regressors(self, s: usize) -> usize {
        match self {
            StatisticKind::PlainF => s,
            StatisticKind::CleverF | StatisticKind::PropensityF => 2 * s,
            StatisticKind::WeightedDiff => 0,
        }
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StatisticKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown statistic {s:?}")))
    }
}

impl TryFrom<String> for StatisticKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// `Q_i(beta0) = Y_i - beta0 D_i`, the outcome with the hypothesised effect
/// removed.
#[inline]
pub fn adjusted_outcome(y: f64, d: f64, beta0: f64) -> f64 {
    y - beta0 * d
}

/// Clever covariate `z / pi - (1 - z) / (1 - pi)` of a haplotype allele.
/// Returns `None` when `pi` is 0 or 1: the allele never varies and the unit
/// carries no information (its covariate is taken as 0).
#[inline]
pub fn clever_covariate(z: u8, pi: f64) -> Option<f64> {
    if pi <= 0.0 || pi >= 1.0 {
        return None;
    }
    Some(if z == 1 { 1.0 / pi } else { -1.0 / (1.0 - pi) })
}

/// Covariate for a genotype `z = z^m + z^f`: the centred score
/// `(z - E z) / Var z` under independent parental meioses. Reduces to the
/// haplotype covariate when one parent's allele is fixed.
#[inline]
pub fn genotype_covariate(z: u8, pi_m: f64, pi_f: f64) -> Option<f64> {
    let var = pi_m * (1.0 - pi_m) + pi_f * (1.0 - pi_f);
    if var <= 0.0 {
        return None;
    }
    Some((f64::from(z) - pi_m - pi_f) / var)
}

/// A statistic value; `informative` is false when the design carries no
/// variation at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Statistic {
    pub value: f64,
    pub informative: bool,
}

/// Column-centred Gram matrix of a design with its Cholesky factor, columns
/// with a negligible pivot being dropped.
#[derive(Debug, Clone)]
pub struct CenteredDesign {
    n: usize,
    m: usize,
    means: Vec<f64>,
    /// Row-major lower-triangular factor.
    chol: Vec<f64>,
    kept: Vec<bool>,
}

impl CenteredDesign {
    pub fn new(columns: &[&[f64]]) -> Self {
        let m = columns.len();
        let n = columns.first().map_or(0, |c| c.len());
        let means: Vec<f64> = columns
            .iter()
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect();
        let mut gram = vec![0.0; m * m];
        let mut row = vec![0.0; m];
        for i in 0..n {
            for (r, (c, mean)) in row.iter_mut().zip(columns.iter().zip(&means)) {
                *r = c[i] - mean;
            }
            for a in 0..m {
                let ra = row[a];
                if ra == 0.0 {
                    continue;
                }
                for b in 0..=a {
                    gram[a * m + b] += ra * row[b];
                }
            }
        }

        let mut chol = vec![0.0; m * m];
        let mut kept = vec![false; m];
        for k in 0..m {
            for i in 0..k {
                if !kept[i] {
                    continue;
                }
                let mut s = gram[k * m + i];
                for l in 0..i {
                    s -= chol[k * m + l] * chol[i * m + l];
                }
                chol[k * m + i] = s / chol[i * m + i];
            }
            let diag = gram[k * m + k];
            let mut d = diag;
            for l in 0..k {
                d -= chol[k * m + l] * chol[k * m + l];
            }
            if diag > 0.0 && d > RANK_TOL * diag {
                chol[k * m + k] = d.sqrt();
                kept[k] = true;
            } else {
                for l in 0..k {
                    chol[k * m + l] = 0.0;
                }
            }
        }
        Self {
            n,
            m,
            means,
            chol,
            kept,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Rank of the leading `cols` columns.
    pub fn rank(&self, cols: usize) -> usize {
        self.kept[..cols].iter().filter(|&&k| k).count()
    }

    /// Centred total sum of squares of `y` and the regression sum of squares
    /// explained by each prefix of the columns (`ssr[k]` uses columns
    /// `0..=k`).
    pub fn fit(&self, columns: &[&[f64]], y: &[f64], ssr: &mut [f64]) -> f64 {
        let n = self.n;
        let m = self.m;
        let ybar = y.iter().sum::<f64>() / n as f64;
        let mut cross = vec![0.0; m];
        let mut tss = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            let dy = yi - ybar;
            tss += dy * dy;
            for (c, (col, mean)) in cross.iter_mut().zip(columns.iter().zip(&self.means)) {
                *c += (col[i] - mean) * dy;
            }
        }
        let mut w = vec![0.0; m];
        let mut acc = 0.0;
        for k in 0..m {
            if self.kept[k] {
                let mut s = cross[k];
                for l in 0..k {
                    s -= self.chol[k * m + l] * w[l];
                }
                w[k] = s / self.chol[k * m + k];
                acc += w[k] * w[k];
            }
            ssr[k] = acc;
        }
        tss
    }
}

/// F-statistic from the fit of the leading `cols` columns.
fn f_statistic(design: &CenteredDesign, cols: usize, tss: f64, ssr: &[f64]) -> Statistic {
    let q = design.rank(cols);
    if q == 0 {
        return Statistic {
            value: 0.0,
            informative: false,
        };
    }
    let explained = ssr[cols - 1].min(tss);
    let rss = tss - explained;
    let df = design.n() as f64 - 1.0 - q as f64;
    let value = if explained <= 0.0 {
        0.0
    } else if rss <= tss * 1e-14 {
        f64::INFINITY
    } else {
        (explained / q as f64) / (rss / df)
    };
    Statistic {
        value,
        informative: true,
    }
}

/// `sqrt(sum_s (sum_i Q_i X_is)^2)`; the absolute weighted difference for a
/// single instrument.
pub fn weighted_difference(q: &[f64], x: &[Vec<f64>]) -> Statistic {
    let mut informative = false;
    let mut sq = 0.0;
    for col in x {
        let mut s = 0.0;
        for (qi, xi) in q.iter().zip(col) {
            if *xi != 0.0 {
                informative = true;
                s += qi * xi;
            }
        }
        sq += s * s;
    }
    Statistic {
        value: sq.sqrt(),
        informative,
    }
}

/// Minimum sample size for a statistic with `s` instruments.
pub fn required_samples(kind: StatisticKind, s: usize) -> usize {
    match kind {
        StatisticKind::WeightedDiff => 1,
        _ => kind.regressors(s) + 2,
    }
}

/// Evaluates a statistic of the adjusted outcome `q` given instrument
/// columns `z` and one covariate column per instrument: the clever
/// covariates for `clever_F` and `weighted_diff`, the propensity means for
/// `propensity_F`. `plain_F` ignores `covariates`.
pub fn compute_statistic(
    kind: StatisticKind,
    q: &[f64],
    z: &[Vec<f64>],
    covariates: &[Vec<f64>],
) -> Result<Statistic> {
    let n = q.len();
    let uses_covariates = kind != StatisticKind::PlainF;
    if z.iter().any(|c| c.len() != n)
        || (uses_covariates && (covariates.len() != z.len() || covariates.iter().any(|c| c.len() != n)))
    {
        return Err(Error::Config("statistic inputs must have equal lengths".into()));
    }
    let needed = required_samples(kind, z.len());
    if n < needed {
        return Err(Error::InsufficientSamples { needed, found: n });
    }
    let empty = vec![Vec::new(); z.len()];
    let (x, e) = match kind {
        StatisticKind::PropensityF => (&empty[..], covariates),
        StatisticKind::PlainF => (&empty[..], &empty[..]),
        _ => (covariates, &empty[..]),
    };
    let mut evaluator = Evaluator::new(&[kind], z.len());
    let mut out = [0.0; 1];
    let mut flags = [false; 1];
    evaluator.evaluate(Columns { z, x, e }, &[q], &mut out, &mut flags);
    Ok(Statistic {
        value: out[0],
        informative: flags[0],
    })
}

/// Per-instrument columns of one (observed or counterfactual) cohort:
/// instruments `z`, clever covariates `x` and propensity means `e`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Columns<'a> {
    pub z: &'a [Vec<f64>],
    pub x: &'a [Vec<f64>],
    pub e: &'a [Vec<f64>],
}

/// Evaluates several statistic kinds on several adjusted outcomes for one
/// instrument configuration, sharing design factorizations. `plain_F` uses
/// the leading instrument block of whichever design is built.
#[derive(Debug, Clone)]
pub(crate) struct Evaluator {
    kinds: Vec<StatisticKind>,
    s: usize,
    with_x: bool,
    with_e: bool,
    ssr_x: Vec<f64>,
    ssr_e: Vec<f64>,
}

impl Evaluator {
    pub(crate) fn new(kinds: &[StatisticKind], s: usize) -> Self {
        let with_e = kinds.contains(&StatisticKind::PropensityF);
        let with_x = kinds.contains(&StatisticKind::CleverF)
            || (kinds.contains(&StatisticKind::PlainF) && !with_e);
        Self {
            kinds: kinds.to_vec(),
            s,
            with_x,
            with_e,
            ssr_x: vec![0.0; 2 * s],
            ssr_e: vec![0.0; 2 * s],
        }
    }

    /// Writes the statistic for outcome `o` and kind `k` at index
    /// `o * kinds + k`.
    pub(crate) fn evaluate(
        &mut self,
        cols: Columns<'_>,
        outcomes: &[&[f64]],
        out: &mut [f64],
        informative: &mut [bool],
    ) {
        let clever = self.kinds.contains(&StatisticKind::CleverF);
        fn block<'a>(z: &'a [Vec<f64>], extra: &'a [Vec<f64>], take: bool) -> Vec<&'a [f64]> {
            let extra = if take { extra } else { &[] };
            z.iter().chain(extra).map(|c| c.as_slice()).collect()
        }
        let x_cols = if self.with_x { block(cols.z, cols.x, clever) } else { Vec::new() };
        let e_cols = if self.with_e { block(cols.z, cols.e, true) } else { Vec::new() };
        let design_x = self.with_x.then(|| CenteredDesign::new(&x_cols));
        let design_e = self.with_e.then(|| CenteredDesign::new(&e_cols));
        let nk = self.kinds.len();
        for (o, q) in outcomes.iter().enumerate() {
            let tss_x = design_x.as_ref().map(|d| d.fit(&x_cols, q, &mut self.ssr_x));
            let tss_e = design_e.as_ref().map(|d| d.fit(&e_cols, q, &mut self.ssr_e));
            for (k, kind) in self.kinds.iter().enumerate() {
                let stat = match kind {
                    StatisticKind::WeightedDiff => weighted_difference(q, cols.x),
                    StatisticKind::CleverF => {
                        f_statistic(design_x.as_ref().unwrap(), 2 * self.s, tss_x.unwrap(), &self.ssr_x)
                    }
                    StatisticKind::PropensityF => {
                        f_statistic(design_e.as_ref().unwrap(), 2 * self.s, tss_e.unwrap(), &self.ssr_e)
                    }
                    StatisticKind::PlainF => match (&design_x, &design_e) {
                        (Some(d), _) => f_statistic(d, self.s, tss_x.unwrap(), &self.ssr_x),
                        (None, Some(d)) => f_statistic(d, self.s, tss_e.unwrap(), &self.ssr_e),
                        (None, None) => unreachable!(),
                    },
                };
                out[o * nk + k] = stat.value;
                informative[o * nk + k] = stat.informative;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjusted_outcome_examples() {
        assert!((adjusted_outcome(0.73, 1.11, -0.3) - 1.063).abs() < 1e-12);
        assert_eq!(adjusted_outcome(2.5, 7.0, 0.0), 2.5);
        assert!((adjusted_outcome(3.30, 1.43, -0.3) - 3.729).abs() < 1e-12);
    }

    #[test]
    fn clever_covariate_examples() {
        assert_eq!(clever_covariate(1, 0.5), Some(2.0));
        assert_eq!(clever_covariate(0, 0.5), Some(-2.0));
        assert!((clever_covariate(1, 0.9).unwrap() - 1.0 / 0.9).abs() < 1e-15);
        assert_eq!(clever_covariate(1, 1.0), None);
        assert_eq!(clever_covariate(0, 0.0), None);
    }

    #[test]
    fn genotype_covariate_reduces_to_haplotype() {
        for z in 0..2u8 {
            let g = genotype_covariate(z + 1, 0.3, 1.0).unwrap();
            let h = clever_covariate(z, 0.3).unwrap();
            assert!((g - h).abs() < 1e-12);
        }
        assert_eq!(genotype_covariate(2, 1.0, 1.0), None);
    }

    #[test]
    fn weighted_difference_two_terms() {
        let s = weighted_difference(&[1.0, -1.0], &[vec![2.0, -2.0]]);
        assert_eq!(s.value, 4.0);
        assert!(s.informative);
    }

    #[test]
    fn constant_instrument_gives_zero() {
        let q = [0.3, -1.2, 0.8, 2.0];
        let z = vec![vec![1.0; 4]];
        let x = vec![vec![0.0; 4]];
        let s = compute_statistic(StatisticKind::PlainF, &q, &z, &x).unwrap();
        assert_eq!(s, Statistic { value: 0.0, informative: false });
    }

    #[test]
    fn too_few_samples() {
        let z = vec![vec![0.0, 1.0]];
        let x = vec![vec![0.5, 1.0]];
        assert!(matches!(
            compute_statistic(StatisticKind::CleverF, &[1.0, 2.0], &z, &x),
            Err(Error::InsufficientSamples { needed: 4, found: 2 })
        ));
    }

    #[test]
    fn simple_regression_f() {
        // y = x + e with known residuals: F = (n - 2) R^2 / (1 - R^2).
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.1, 0.9, 2.2, 2.8, 4.1];
        let n = 5.0;
        let (mx, my) = (2.0, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
        let r2 = sxy * sxy / (sxx * syy);
        let expected = (n - 2.0) * r2 / (1.0 - r2);
        let s = compute_statistic(StatisticKind::PlainF, &y, &[x.to_vec()], &[vec![0.0; 5]]).unwrap();
        assert!((s.value - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn collinear_covariate_is_dropped() {
        let z = vec![0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let q = [0.2, 1.1, 0.7, -0.3, 1.4, 0.1];
        let plain = compute_statistic(StatisticKind::PlainF, &q, &[z.clone()], &[z.clone()]).unwrap();
        let clever = compute_statistic(StatisticKind::CleverF, &q, &[z.clone()], &[z]).unwrap();
        assert!((plain.value - clever.value).abs() < 1e-9 * plain.value);
    }

    #[test]
    fn perfect_fit_is_infinite() {
        let z = vec![0.0, 1.0, 0.0, 1.0];
        let q = [1.0, 3.0, 1.0, 3.0];
        let s = compute_statistic(StatisticKind::PlainF, &q, &[z.clone()], &[z]).unwrap();
        assert_eq!(s.value, f64::INFINITY);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in StatisticKind::ALL {
            assert_eq!(kind.name().parse::<StatisticKind>().unwrap(), kind);
        }
        assert!("F".parse::<StatisticKind>().is_err());
    }
}
