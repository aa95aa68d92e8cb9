//! The almost exact randomization test.
//!
//! A [`TestDesign`] holds everything that stays fixed across Monte Carlo
//! draws: the phenotypes, the observed instruments, each trio's propensity
//! scores and the samplers for counterfactual instruments. Running a design
//! draws `K` counterfactual cohorts and evaluates every requested
//! `(beta0, statistic)` pair on the same draws.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjustment::{AdjustmentSpec, Side};
use crate::data::{Cohort, Origin};
use crate::error::{Error, Result};
use crate::hmm::{joint_propensity, ConditionalSampler, ConditioningWindow, MeiosisModel};
use crate::rng::{purpose, stream};
use crate::stats::{
    adjusted_outcome, clever_covariate, genotype_covariate, required_samples, Columns, Evaluator,
    StatisticKind,
};

/// Which tail of the randomization distribution counts as extreme.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// Draws at least as large as the observed statistic.
    #[default]
    Upper,
    /// Draws at most as large as the observed statistic.
    Lower,
}

/// Relative difference below which a drawn statistic ties with the observed
/// one. Ties count as extreme; the tolerance keeps values that agree
/// mathematically from being split by rounding.
const TIE_TOL: f64 = 1e-10;

impl Tail {
    #[inline]
    fn extreme(self, observed: f64, drawn: f64) -> bool {
        let slack = TIE_TOL * observed.abs();
        match self {
            Tail::Upper => observed - slack <= drawn,
            Tail::Lower => drawn <= observed + slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomizationResult {
    pub statistic: StatisticKind,
    pub beta0: f64,
    pub observed_stat: f64,
    pub draws: usize,
    /// Number of draws at least as extreme as the observed statistic.
    pub num_geq: usize,
    pub p_value: f64,
    pub p_value_corrected: f64,
    pub seed: u64,
    pub informative: bool,
}

impl RandomizationResult {
    fn new(
        statistic: StatisticKind,
        beta0: f64,
        observed: (f64, bool),
        draws: usize,
        num_geq: usize,
        seed: u64,
    ) -> Self {
        Self {
            statistic,
            beta0,
            observed_stat: observed.0,
            draws,
            num_geq,
            p_value: num_geq as f64 / draws as f64,
            p_value_corrected: (num_geq as f64 + 1.0) / (draws as f64 + 1.0),
            seed,
            informative: observed.1,
        }
    }
}

/// Position of one haplotype allele inside a trio's sampler outputs.
#[derive(Debug, Clone, Copy)]
struct Slot {
    group: usize,
    target: usize,
}

#[derive(Debug, Clone)]
struct TrioSamplers {
    samplers: Vec<ConditionalSampler>,
    offsets: Vec<usize>,
    /// Per instrument, one slot per contributing parent.
    slots: Vec<Vec<Slot>>,
}

impl TrioSamplers {
    fn width(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0)
            + self.samplers.last().map_or(0, |s| s.targets().len())
    }
}

#[derive(Debug, Clone)]
pub struct TestDesign {
    specs: Vec<AdjustmentSpec>,
    prepared: PreparedTrios,
}

#[derive(Debug, Clone)]
struct PreparedTrios {
    exposure: Vec<f64>,
    outcome: Vec<f64>,
    trios: Vec<TrioSamplers>,
    /// `[instrument][trio]` propensities `[pi_m, pi_f]`; NaN for a parent
    /// that does not contribute.
    propensity: Vec<Vec<[f64; 2]>>,
    /// `[instrument][trio]` observed instrument value.
    observed: Vec<Vec<u8>>,
    fallbacks: usize,
}

fn window_key(w: &ConditioningWindow) -> (usize, usize, Option<(usize, usize)>) {
    (w.start, w.end, w.hidden)
}

impl TestDesign {
    /// Computes propensity scores and samplers for every trio. The
    /// instruments in `specs` are tested jointly.
    pub fn prepare(cohort: &Cohort, model: &MeiosisModel, specs: &[AdjustmentSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("at least one instrument is required".into()));
        }
        if model.len() != cohort.map.len() {
            return Err(Error::Config("model and cohort maps differ".into()));
        }
        for spec in specs {
            spec.validate(&cohort.map)?;
        }
        warn_dependent_instruments(cohort, specs);

        let origins: BTreeSet<Origin> = specs
            .iter()
            .flat_map(|s| s.side.origins().iter().copied())
            .collect();

        let per_trio: Vec<(TrioSamplers, Vec<[f64; 2]>, usize)> = cohort
            .trios
            .par_iter()
            .map(|trio| {
                let mut samplers = Vec::new();
                let mut slots = vec![Vec::new(); specs.len()];
                let mut pis = vec![[f64::NAN; 2]; specs.len()];
                let mut fallbacks = 0;
                for &origin in &origins {
                    let parent = trio.parent(origin);
                    let child = trio.offspring.haplotype(origin);
                    let mut groups: Vec<(ConditioningWindow, Vec<usize>)> = Vec::new();
                    let mut members = Vec::new();
                    for (s, spec) in specs.iter().enumerate() {
                        if !spec.side.origins().contains(&origin) {
                            continue;
                        }
                        let resolved = spec.resolve(&cohort.map, parent);
                        fallbacks += usize::from(resolved.fallback.is_some());
                        let key = window_key(&resolved.window);
                        let g = match groups.iter().position(|(w, _)| window_key(w) == key) {
                            Some(g) => g,
                            None => {
                                groups.push((resolved.window, Vec::new()));
                                groups.len() - 1
                            }
                        };
                        groups[g].1.push(spec.instrument);
                        members.push((s, g));
                    }
                    let base = samplers.len();
                    for (window, loci) in &mut groups {
                        loci.sort_unstable();
                        loci.dedup();
                        let joint = joint_propensity(model, parent, child, loci, window)
                            .inspect_err(|e| log::error!("family {}: {e}", trio.family_id))?;
                        samplers.push(ConditionalSampler::new(model, parent, joint));
                    }
                    for (s, g) in members {
                        let sampler = &samplers[base + g];
                        let target = sampler
                            .targets()
                            .binary_search(&specs[s].instrument)
                            .expect("instrument is a target of its group");
                        pis[s][origin.index()] = sampler.propensities()[target];
                        slots[s].push(Slot {
                            group: base + g,
                            target,
                        });
                    }
                }
                let mut offsets = Vec::with_capacity(samplers.len());
                let mut acc = 0;
                for s in &samplers {
                    offsets.push(acc);
                    acc += s.targets().len();
                }
                Ok((
                    TrioSamplers {
                        samplers,
                        offsets,
                        slots,
                    },
                    pis,
                    fallbacks,
                ))
            })
            .collect::<Result<_>>()?;

        let n = cohort.len();
        let mut propensity = vec![Vec::with_capacity(n); specs.len()];
        let mut trios = Vec::with_capacity(n);
        let mut fallbacks = 0;
        for (samplers, pis, fb) in per_trio {
            for (s, pi) in pis.into_iter().enumerate() {
                propensity[s].push(pi);
            }
            trios.push(samplers);
            fallbacks += fb;
        }
        if fallbacks > 0 {
            log::warn!(
                "{fallbacks} parental meioses have no heterozygous flank on one side; \
                 the chromosome end was used instead"
            );
        }
        let observed = specs
            .iter()
            .map(|spec| {
                cohort
                    .trios
                    .iter()
                    .map(|t| match spec.side {
                        Side::Genotype => t.offspring.genotype(spec.instrument),
                        Side::Maternal => t.offspring.allele(Origin::Maternal, spec.instrument),
                        Side::Paternal => t.offspring.allele(Origin::Paternal, spec.instrument),
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            specs: specs.to_vec(),
            prepared: PreparedTrios {
                exposure: cohort.trios.iter().map(|t| t.exposure).collect(),
                outcome: cohort.trios.iter().map(|t| t.outcome).collect(),
                trios,
                propensity,
                observed,
                fallbacks,
            },
        })
    }

    pub fn specs(&self) -> &[AdjustmentSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.prepared.exposure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-trio propensities `[pi_m, pi_f]` of instrument `s` (NaN for a
    /// parent not involved).
    pub fn propensities(&self, s: usize) -> &[[f64; 2]] {
        &self.prepared.propensity[s]
    }

    /// Observed values of instrument `s`.
    pub fn observed_instrument(&self, s: usize) -> &[u8] {
        &self.prepared.observed[s]
    }

    /// Number of parental meioses that fell back to a chromosome end.
    pub fn fallbacks(&self) -> usize {
        self.prepared.fallbacks
    }

    /// Clever covariate of instrument `s` for trio `i` at value `z`.
    #[inline]
    fn covariate(&self, s: usize, i: usize, z: u8) -> f64 {
        let pi = self.prepared.propensity[s][i];
        match self.specs[s].side {
            Side::Genotype => genotype_covariate(z, pi[0], pi[1]),
            Side::Maternal => clever_covariate(z, pi[0]),
            Side::Paternal => clever_covariate(z, pi[1]),
        }
        .unwrap_or(0.0)
    }

    /// Clever covariates of the observed instruments, `[instrument][trio]`.
    pub fn observed_covariates(&self) -> Vec<Vec<f64>> {
        (0..self.specs.len())
            .map(|s| {
                self.prepared.observed[s]
                    .iter()
                    .enumerate()
                    .map(|(i, &z)| self.covariate(s, i, z))
                    .collect()
            })
            .collect()
    }

    /// Expected instrument values `E[Z | adjustment set]`, `[instrument][trio]`.
    pub fn propensity_means(&self) -> Vec<Vec<f64>> {
        self.prepared
            .propensity
            .iter()
            .zip(&self.specs)
            .map(|(pis, spec)| {
                pis.iter()
                    .map(|pi| match spec.side {
                        Side::Genotype => pi[0] + pi[1],
                        Side::Maternal => pi[0],
                        Side::Paternal => pi[1],
                    })
                    .collect()
            })
            .collect()
    }

    /// Adjusted outcomes `Q(beta0)`.
    pub fn adjusted_outcomes(&self, beta0: f64) -> Vec<f64> {
        self.prepared
            .outcome
            .iter()
            .zip(&self.prepared.exposure)
            .map(|(&y, &d)| adjusted_outcome(y, d, beta0))
            .collect()
    }

    /// Counterfactual instruments of draw `k` into `z` (`[instrument][trio]`)
    /// and their covariates into `x`.
    fn draw(&self, seed: u64, k: usize, scratch: &mut Vec<u8>, z: &mut [Vec<f64>], x: &mut [Vec<f64>]) {
        for (i, trio) in self.prepared.trios.iter().enumerate() {
            let mut rng = stream(seed, &[purpose::DRAW, k as u64, i as u64]);
            scratch.clear();
            scratch.resize(trio.width(), 0);
            for (sampler, &off) in trio.samplers.iter().zip(&trio.offsets) {
                let len = sampler.targets().len();
                sampler.sample_into(&mut rng, &mut scratch[off..off + len]);
            }
            for (s, slots) in trio.slots.iter().enumerate() {
                let value: u8 = slots
                    .iter()
                    .map(|slot| scratch[trio.offsets[slot.group] + slot.target])
                    .sum();
                z[s][i] = f64::from(value);
                x[s][i] = self.covariate(s, i, value);
            }
        }
    }

    /// Runs the test for every `(beta0, kind)` pair on shared draws. Results
    /// are ordered by `beta0`, then by kind.
    pub fn run(
        &self,
        beta0s: &[f64],
        kinds: &[StatisticKind],
        draws: usize,
        seed: u64,
        tail: Tail,
    ) -> Result<Vec<RandomizationResult>> {
        if draws == 0 {
            return Err(Error::ZeroDraws);
        }
        if kinds.is_empty() || beta0s.is_empty() {
            return Err(Error::Config("no statistic or no null value requested".into()));
        }
        if let Some(b) = beta0s.iter().find(|b| !b.is_finite()) {
            return Err(Error::Config(format!("null value {b} is not finite")));
        }
        let n = self.len();
        let s = self.specs.len();
        let needed = kinds.iter().map(|&k| required_samples(k, s)).max().unwrap();
        if n < needed {
            return Err(Error::InsufficientSamples { needed, found: n });
        }

        let outcomes: Vec<Vec<f64>> = beta0s.iter().map(|&b| self.adjusted_outcomes(b)).collect();
        let outcome_refs: Vec<&[f64]> = outcomes.iter().map(|q| q.as_slice()).collect();
        let total = beta0s.len() * kinds.len();

        let z_obs: Vec<Vec<f64>> = self
            .prepared
            .observed
            .iter()
            .map(|col| col.iter().map(|&v| f64::from(v)).collect())
            .collect();
        let x_obs = self.observed_covariates();
        let e = self.propensity_means();
        let mut observed = vec![0.0; total];
        let mut informative = vec![false; total];
        Evaluator::new(kinds, s).evaluate(
            Columns {
                z: &z_obs,
                x: &x_obs,
                e: &e,
            },
            &outcome_refs,
            &mut observed,
            &mut informative,
        );

        let counts = (0..draws)
            .into_par_iter()
            .map_init(
                || {
                    (
                        Evaluator::new(kinds, s),
                        Vec::new(),
                        vec![vec![0.0; n]; s],
                        vec![vec![0.0; n]; s],
                        vec![0.0; total],
                        vec![false; total],
                    )
                },
                |(eval, scratch, z, x, stats, flags), k| {
                    self.draw(seed, k, scratch, z, x);
                    eval.evaluate(Columns { z, x, e: &e }, &outcome_refs, stats, flags);
                    stats
                        .iter()
                        .zip(&observed)
                        .map(|(&t, &obs)| u32::from(tail.extreme(obs, t)))
                        .collect::<Vec<u32>>()
                },
            )
            .reduce(
                || vec![0; total],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );

        let nk = kinds.len();
        Ok(beta0s
            .iter()
            .enumerate()
            .flat_map(|(o, &beta0)| {
                let (observed, informative, counts) = (&observed, &informative, &counts);
                kinds.iter().enumerate().map(move |(k, &kind)| {
                    let idx = o * nk + k;
                    RandomizationResult::new(
                        kind,
                        beta0,
                        (observed[idx], informative[idx]),
                        draws,
                        counts[idx] as usize,
                        seed,
                    )
                })
            })
            .collect())
    }
}

fn warn_dependent_instruments(cohort: &Cohort, specs: &[AdjustmentSpec]) {
    for (a, sa) in specs.iter().enumerate() {
        for sb in &specs[a + 1..] {
            let shares_parent = sa.side.origins().iter().any(|o| sb.side.origins().contains(o));
            if !shares_parent || sa.rule.is_parent_specific() {
                continue;
            }
            let same_window = sa.fixed_hidden(&cohort.map) == sb.fixed_hidden(&cohort.map);
            let (lo, hi) = (sa.instrument.min(sb.instrument), sa.instrument.max(sb.instrument));
            if !same_window && lo != hi && cohort.map.span_cm(lo, hi).is_finite() {
                log::warn!(
                    "instruments at loci {} and {} use different adjustment sets without an \
                     unlinked interval between them; their counterfactuals are drawn independently",
                    lo + 1,
                    hi + 1
                );
            }
        }
    }
}

/// Runs a single test.
pub fn almost_exact_test(
    cohort: &Cohort,
    model: &MeiosisModel,
    specs: &[AdjustmentSpec],
    beta0: f64,
    kind: StatisticKind,
    draws: usize,
    seed: u64,
) -> Result<RandomizationResult> {
    let design = TestDesign::prepare(cohort, model, specs)?;
    Ok(design
        .run(&[beta0], &[kind], draws, seed, Tail::Upper)?
        .remove(0))
}

/// Null values retained by the test at level `alpha`, using corrected
/// p-values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceSet {
    pub alpha: f64,
    pub retained: Vec<f64>,
    /// Maximal runs of consecutive retained grid points.
    pub intervals: Vec<(f64, f64)>,
    pub results: Vec<RandomizationResult>,
}

impl ConfidenceSet {
    pub fn contains(&self, beta0: f64) -> bool {
        self.retained.contains(&beta0)
    }
}

pub fn invert_test(
    design: &TestDesign,
    kind: StatisticKind,
    grid: &[f64],
    draws: usize,
    seed: u64,
    alpha: f64,
    tail: Tail,
) -> Result<ConfidenceSet> {
    if grid.is_empty() {
        return Err(Error::Config("empty null grid".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("null grid must be strictly increasing".into()));
    }
    let results = design.run(grid, &[kind], draws, seed, tail)?;
    let keep: Vec<bool> = results.iter().map(|r| r.p_value_corrected > alpha).collect();
    let retained = grid
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&b, _)| b)
        .collect();
    let mut intervals = Vec::new();
    let mut run: Option<(f64, f64)> = None;
    for (&b, &k) in grid.iter().zip(&keep) {
        run = match (run, k) {
            (None, true) => Some((b, b)),
            (Some((lo, _)), true) => Some((lo, b)),
            (Some(r), false) => {
                intervals.push(r);
                None
            }
            (None, false) => None,
        };
    }
    intervals.extend(run);
    Ok(ConfidenceSet {
        alpha,
        retained,
        intervals,
        results,
    })
}
