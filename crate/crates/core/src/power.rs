//! Rejection frequencies over replicated simulations.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::randtest::{RandomizationResult, Tail, TestDesign};
use crate::rng::{derive_seed, purpose};
use crate::simgen::{make_cohort, SimParams};
use crate::stats::StatisticKind;

#[derive(Debug, Clone)]
pub struct PowerSettings {
    pub params: SimParams,
    pub replicates: usize,
    pub beta0: Vec<f64>,
    pub statistics: Vec<StatisticKind>,
    pub draws: usize,
    pub alpha: f64,
    pub seed: u64,
    pub tail: Tail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRow {
    pub statistic: StatisticKind,
    pub beta0: f64,
    pub rejections: usize,
    pub replicates: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone)]
pub struct PowerRun {
    /// One row per `(beta0, statistic)`, `beta0` outermost.
    pub rows: Vec<PowerRow>,
    /// Test results of each replicate, in the order of `rows`.
    pub replicates: Vec<Vec<RandomizationResult>>,
}

/// Test outcome of one replicate: a fresh cohort and fresh draws, both
/// derived from the master seed and the replicate index.
pub fn run_replicate(settings: &PowerSettings, r: usize) -> Result<Vec<RandomizationResult>> {
    let seed = settings.seed;
    let sim = make_cohort(&settings.params, derive_seed(seed, &[purpose::REPLICATE, r as u64]))?;
    let design = TestDesign::prepare(&sim.cohort, &sim.model, &sim.specs)?;
    design.run(
        &settings.beta0,
        &settings.statistics,
        settings.draws,
        derive_seed(seed, &[purpose::REPLICATE_TEST, r as u64]),
        settings.tail,
    )
}

pub fn run_power(settings: &PowerSettings) -> Result<PowerRun> {
    if settings.replicates == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    if !(0.0..=1.0).contains(&settings.alpha) {
        return Err(Error::InvalidProbability(settings.alpha));
    }
    let replicates = (0..settings.replicates)
        .into_par_iter()
        .map(|r| run_replicate(settings, r))
        .collect::<Result<Vec<_>>>()?;
    let template = &replicates[0];
    let rows = template
        .iter()
        .enumerate()
        .map(|(idx, first)| {
            let rejections = replicates
                .iter()
                .filter(|rep| rep[idx].p_value_corrected <= settings.alpha)
                .count();
            PowerRow {
                statistic: first.statistic,
                beta0: first.beta0,
                rejections,
                replicates: settings.replicates,
                frequency: rejections as f64 / settings.replicates as f64,
            }
        })
        .collect();
    Ok(PowerRun { rows, replicates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::default_params;

    #[test]
    fn one_replicate_frequency_is_binary() {
        let settings = PowerSettings {
            params: SimParams {
                n: 60,
                ..default_params()
            },
            replicates: 1,
            beta0: vec![0.0],
            statistics: vec![StatisticKind::PlainF],
            draws: 20,
            alpha: 0.05,
            seed: 1,
            tail: Tail::Upper,
        };
        let run = run_power(&settings).unwrap();
        assert_eq!(run.rows.len(), 1);
        assert!(run.rows[0].frequency == 0.0 || run.rows[0].frequency == 1.0);
    }
}
