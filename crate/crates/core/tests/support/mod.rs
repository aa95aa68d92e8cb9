//! Small synthetic cohorts whose randomization distribution can be
//! enumerated exactly.
#![allow(dead_code)]

use aemr::adjustment::{AdjustmentSpec, Side, WindowRule};
use aemr::data::{Cohort, GeneticMap, HaplotypePair, Trio};
use aemr::hmm::MeiosisModel;
use aemr::stats::{clever_covariate, compute_statistic, StatisticKind};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::oracle::{exact_pvalue, haldane_stay, Meiosis};

pub const LOCI: usize = 5;
pub const INSTRUMENT: usize = 2;

pub struct ExactInstance {
    pub cohort: Cohort,
    pub model: MeiosisModel,
    pub spec: AdjustmentSpec,
    /// Reference propensities of the maternal instrument allele.
    pub pis: Vec<f64>,
}

fn transmit<R: Rng>(rng: &mut R, dist: &[f64], eps: f64, parent: &[Vec<u8>; 2]) -> Vec<u8> {
    let mut u = rng.random_range(0..2usize);
    (0..dist.len())
        .map(|j| {
            if j > 0 && rng.random::<f64>() >= haldane_stay(dist[j]) {
                u ^= 1;
            }
            let z = parent[u][j];
            if rng.random::<f64>() < eps {
                z ^ 1
            } else {
                z
            }
        })
        .collect()
}

/// `n` trios on five loci with a maternal haplotype instrument at the
/// middle locus, hidden together with its two neighbours.
pub fn exact_instance<R: Rng>(rng: &mut R, n: usize, eps: f64) -> ExactInstance {
    let dist: Vec<f64> = (0..LOCI)
        .map(|j| if j == 0 { 0.0 } else { rng.random_range(1.0..60.0) })
        .collect();
    let hap = |rng: &mut R| -> Vec<u8> { (0..LOCI).map(|_| rng.random_range(0..2u8)).collect() };
    let effect = rng.random_range(0.0..1.5);
    let mut trios = Vec::with_capacity(n);
    let mut pis = Vec::with_capacity(n);
    for i in 0..n {
        let mother = [hap(rng), hap(rng)];
        let father = [hap(rng), hap(rng)];
        let zm = transmit(rng, &dist, eps, &mother);
        let zf = transmit(rng, &dist, eps, &father);
        let meiosis = Meiosis {
            dist_cm: dist.clone(),
            eps,
            parent: mother.clone(),
            child: zm.clone(),
        };
        pis.push(meiosis.propensity(0, LOCI - 1, INSTRUMENT, &|k| {
            k + 1 < INSTRUMENT || k > INSTRUMENT + 1
        }));
        let d: f64 = rng.sample(StandardNormal);
        let y = effect * f64::from(zm[INSTRUMENT]) + rng.sample::<f64, _>(StandardNormal);
        trios.push(Trio {
            family_id: format!("t{i}"),
            mother: HaplotypePair::from_slices(&mother[0], &mother[1]),
            father: HaplotypePair::from_slices(&father[0], &father[1]),
            offspring: HaplotypePair::from_slices(&zm, &zf),
            exposure: d,
            outcome: y,
        });
    }
    let map = GeneticMap::from_distances("1", &dist).unwrap();
    ExactInstance {
        model: MeiosisModel::new(&map, eps).unwrap(),
        cohort: Cohort::new(map, trios).unwrap(),
        spec: AdjustmentSpec::new(INSTRUMENT, Side::Maternal, WindowRule::Loci { radius: 1 }),
        pis,
    }
}

/// Exact upper-tail p-value of `kind` at `beta0`, enumerating every
/// instrument assignment under the reference propensities.
pub fn exact_pvalue_of(inst: &ExactInstance, kind: StatisticKind, beta0: f64) -> f64 {
    let q: Vec<f64> = inst
        .cohort
        .trios
        .iter()
        .map(|t| t.outcome - beta0 * t.exposure)
        .collect();
    let stat = |z: &[u8]| {
        let zc = vec![z.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>()];
        let cov = match kind {
            StatisticKind::PropensityF => vec![inst.pis.clone()],
            _ => vec![z
                .iter()
                .zip(&inst.pis)
                .map(|(&v, &pi)| clever_covariate(v, pi).unwrap_or(0.0))
                .collect()],
        };
        compute_statistic(kind, &q, &zc, &cov).unwrap().value
    };
    let observed: Vec<u8> = inst
        .cohort
        .trios
        .iter()
        .map(|t| t.offspring.maternal.get(INSTRUMENT))
        .collect();
    exact_pvalue(&inst.pis, stat, stat(&observed))
}
