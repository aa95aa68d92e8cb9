//! Simulated trio cohorts with linked loci, confounding through parental
//! genomes, pleiotropic variants near the instruments and a linear
//! exposure/outcome model.
//!
//! Parental haplotypes threshold an AR(1) Gaussian process, offspring are
//! drawn from the meiosis model and the phenotypes follow linear structural
//! equations. The exposure and outcome are divided by the analytic standard
//! deviation of their structural part so that both have variance close to
//! one.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::adjustment::{AdjustmentSpec, Side, VariantRoles, WindowRule};
use crate::data::{Cohort, GeneticMap, Haplotype, HaplotypePair, Trio};
use crate::error::{Error, Result};
use crate::hmm::{sample_unconditional_haplotype, MeiosisModel};
use crate::quad::integrate;
use crate::rng::{purpose, stream, Stream};

/// Generator parameters. Loci are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n: usize,
    pub p: usize,
    /// Correlation of adjacent latent Gaussians.
    pub rho: f64,
    /// Bounds of the uniform allele thresholds on the latent scale.
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    /// Bounds of the uniform inter-locus distances, in Morgans (the unit of
    /// the Haldane exponent `exp(-2 r)`); maps store them in centimorgans.
    pub c: f64,
    pub d: f64,
    /// Loci preceded by an infinite distance.
    pub unlinked_at: Vec<usize>,
    pub instruments: Vec<usize>,
    /// Exposure-causal effects `(locus, gamma_j)`.
    pub gamma: Vec<(usize, f64)>,
    /// Pleiotropic effects `(locus, delta_j)`.
    pub delta: Vec<(usize, f64)>,
    pub theta_m: f64,
    pub theta_f: f64,
    pub theta_c: f64,
    pub phi_m: f64,
    pub phi_f: f64,
    pub phi_c: f64,
    pub beta: f64,
    pub exposure_noise_var: f64,
    pub outcome_noise_var: f64,
    /// Divide the structural parts of D and Y by their analytic standard
    /// deviation.
    pub standardize: bool,
    /// Radius in loci of the unobserved block around each instrument.
    pub hidden_radius: usize,
}

/// Converts 1-based locus numbers.
fn zero_based(loci: &[usize]) -> Vec<usize> {
    loci.iter().map(|j| j - 1).collect()
}

pub fn default_params() -> SimParams {
    let normal = Normal::standard();
    let gamma = 0.1f64.sqrt();
    let delta = 0.05f64.sqrt();
    let theta = 0.3f64.sqrt();
    let theta_c = 0.75f64.sqrt();
    SimParams {
        n: 15_000,
        p: 150,
        rho: 0.75,
        a: normal.inverse_cdf(0.6),
        b: normal.inverse_cdf(0.95),
        epsilon: 1e-8,
        c: 0.0,
        d: 0.75,
        unlinked_at: zero_based(&[37, 62, 86, 112]),
        instruments: zero_based(&[25, 50, 75, 100, 125]),
        gamma: zero_based(&[24, 49, 74, 99, 124])
            .into_iter()
            .map(|j| (j, gamma))
            .collect(),
        delta: zero_based(&[23, 27, 48, 52, 73, 77, 98, 102, 123, 127])
            .into_iter()
            .map(|j| (j, delta))
            .collect(),
        theta_m: theta,
        theta_f: theta,
        theta_c,
        phi_m: theta,
        phi_f: theta,
        phi_c: theta_c,
        beta: 0.0,
        exposure_noise_var: 0.7,
        outcome_noise_var: 0.7,
        standardize: true,
        hidden_radius: 1,
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.a < self.b) {
            return bad("threshold bounds need a < b");
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(Error::InvalidEpsilon(self.epsilon));
        }
        if !(self.c >= 0.0 && self.c <= self.d) {
            return bad("distance bounds need 0 <= c <= d");
        }
        if self.p == 0 {
            return bad("at least one locus is required");
        }
        let loci = self
            .unlinked_at
            .iter()
            .chain(&self.instruments)
            .chain(self.gamma.iter().map(|(j, _)| j))
            .chain(self.delta.iter().map(|(j, _)| j));
        if loci.clone().any(|&j| j >= self.p) {
            return bad("locus outside 1..p in simulation parameters");
        }
        if self.exposure_noise_var < 0.0 || self.outcome_noise_var < 0.0 {
            return bad("noise variances must be non-negative");
        }
        Ok(())
    }

    /// Probability that a parental allele is 1:
    /// `1 - (1/(b-a)) int_a^b Phi(x) dx`.
    pub fn allele_frequency(&self) -> f64 {
        let normal = Normal::standard();
        let integral = integrate(|x| normal.cdf(x), self.a, self.b, 1e-12);
        1.0 - integral / (self.b - self.a)
    }

    /// Expected mean parental allele count per locus, `mu = 2 f`.
    pub fn mu(&self) -> f64 {
        2.0 * self.allele_frequency()
    }

    /// Analytic standard deviations of the structural parts of D and Y,
    /// ignoring linkage between effect loci and the confounders.
    pub fn scales(&self) -> (f64, f64) {
        if !self.standardize {
            return (1.0, 1.0);
        }
        let f = self.allele_frequency();
        let g = 2.0 * f * (1.0 - f);
        let var_d = self.gamma.iter().map(|(_, c)| c * c * g).sum::<f64>()
            + self.theta_m.powi(2)
            + self.theta_f.powi(2)
            + self.theta_c.powi(2)
            + self.exposure_noise_var;
        let var_y = self.delta.iter().map(|(_, c)| c * c * g).sum::<f64>()
            + self.phi_m.powi(2)
            + self.phi_f.powi(2)
            + self.phi_c.powi(2)
            + self.outcome_noise_var;
        let sd = |v: f64| if v > 0.0 { v.sqrt() } else { 1.0 };
        (sd(var_d), sd(var_y))
    }

    pub fn roles(&self) -> VariantRoles {
        VariantRoles {
            exposure_causal: self.gamma.iter().map(|&(j, _)| j).collect(),
            pleiotropic: self.delta.iter().map(|&(j, _)| j).collect(),
            null: Default::default(),
        }
    }

    /// Genotype instruments, each hiding `hidden_radius` loci on either side
    /// and conditioning on the rest of the chromosome.
    pub fn adjustment_specs(&self) -> Vec<AdjustmentSpec> {
        self.instruments
            .iter()
            .map(|&j| {
                AdjustmentSpec::new(
                    j,
                    Side::Genotype,
                    WindowRule::Loci {
                        radius: self.hidden_radius,
                    },
                )
            })
            .collect()
    }
}

/// Genetic map with distances `U(c, d)` Morgans and infinite distances
/// before the unlinked loci.
pub fn gen_map<R: Rng + ?Sized>(params: &SimParams, rng: &mut R) -> Result<GeneticMap> {
    let dist: Vec<f64> = (0..params.p)
        .map(|j| {
            let r = if params.d > params.c {
                rng.random_range(params.c..params.d)
            } else {
                params.c
            };
            if j == 0 {
                0.0
            } else if params.unlinked_at.contains(&j) {
                f64::INFINITY
            } else {
                100.0 * r
            }
        })
        .collect();
    GeneticMap::from_distances("sim", &dist)
}

/// Stationary AR(1) Gaussian sequence with lag-one correlation `rho`.
pub fn gen_latent<R: Rng + ?Sized>(p: usize, rho: f64, rng: &mut R) -> Vec<f64> {
    let innovation = (1.0 - rho * rho).sqrt();
    let mut x: f64 = rng.sample(StandardNormal);
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        if j > 0 {
            let eta: f64 = rng.sample(StandardNormal);
            x = rho * x + innovation * eta;
        }
        out.push(x);
    }
    out
}

/// One thresholded AR(1) haplotype; thresholds are drawn per entry.
fn gen_haplotype<R: Rng + ?Sized>(params: &SimParams, rng: &mut R) -> Haplotype {
    let latent = gen_latent(params.p, params.rho, rng);
    let alleles = latent
        .into_iter()
        .map(|x| u8::from(x > rng.random_range(params.a..params.b)))
        .collect();
    Haplotype::new(alleles)
}

/// Mother and father haplotype pairs of one family.
pub fn gen_parental_haplotypes<R: Rng + ?Sized>(
    params: &SimParams,
    rng: &mut R,
) -> (HaplotypePair, HaplotypePair) {
    let mut pair = || {
        let m = gen_haplotype(params, rng);
        let f = gen_haplotype(params, rng);
        HaplotypePair::new(m, f)
    };
    let mother = pair();
    let father = pair();
    (mother, father)
}

/// Confounders `(C^m, C^f, C)`: each parental confounder is centred at the
/// parent's mean allele count minus its expectation `mu`.
pub fn gen_confounders<R: Rng + ?Sized>(
    mother: &HaplotypePair,
    father: &HaplotypePair,
    mu: f64,
    rng: &mut R,
) -> (f64, f64, f64) {
    let mean_count = |pair: &HaplotypePair| {
        let total: usize = (0..pair.len()).map(|j| pair.genotype(j) as usize).sum();
        total as f64 / pair.len() as f64
    };
    let cm = mean_count(mother) - mu + rng.sample::<f64, _>(StandardNormal);
    let cf = mean_count(father) - mu + rng.sample::<f64, _>(StandardNormal);
    let c = rng.sample(StandardNormal);
    (cm, cf, c)
}

/// Offspring haplotypes from two independent meioses.
pub fn gen_offspring<R: Rng + ?Sized>(
    model: &MeiosisModel,
    mother: &HaplotypePair,
    father: &HaplotypePair,
    rng: &mut R,
) -> HaplotypePair {
    let m = sample_unconditional_haplotype(model, mother, rng);
    let f = sample_unconditional_haplotype(model, father, rng);
    HaplotypePair::new(m, f)
}

/// Exposure and outcome of one offspring.
pub fn gen_phenotypes<R: Rng + ?Sized>(
    offspring: &HaplotypePair,
    confounders: (f64, f64, f64),
    params: &SimParams,
    scales: (f64, f64),
    rng: &mut R,
) -> (f64, f64) {
    let (cm, cf, c) = confounders;
    let effect = |coefs: &[(usize, f64)]| -> f64 {
        coefs
            .iter()
            .map(|&(j, w)| w * f64::from(offspring.genotype(j)))
            .sum()
    };
    let nu = params.exposure_noise_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let upsilon = params.outcome_noise_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let d = (effect(&params.gamma) + params.theta_m * cm + params.theta_f * cf + params.theta_c * c + nu)
        / scales.0;
    let y = params.beta * d
        + (effect(&params.delta) + params.phi_m * cm + params.phi_f * cf + params.phi_c * c + upsilon)
            / scales.1;
    (d, y)
}

fn gen_family(
    params: &SimParams,
    model: &MeiosisModel,
    mu: f64,
    scales: (f64, f64),
    rng: &mut Stream,
    index: usize,
) -> Trio {
    let (mother, father) = gen_parental_haplotypes(params, rng);
    let confounders = gen_confounders(&mother, &father, mu, rng);
    let offspring = gen_offspring(model, &mother, &father, rng);
    let (exposure, outcome) = gen_phenotypes(&offspring, confounders, params, scales, rng);
    Trio {
        family_id: format!("fam{}", index + 1),
        mother,
        father,
        offspring,
        exposure,
        outcome,
    }
}

/// A simulated cohort with its declared variant roles and the adjustment
/// specifications of its instruments.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub cohort: Cohort,
    pub roles: VariantRoles,
    pub specs: Vec<AdjustmentSpec>,
    pub model: MeiosisModel,
}

pub fn make_cohort(params: &SimParams, seed: u64) -> Result<Simulation> {
    params.validate()?;
    let map = gen_map(params, &mut stream(seed, &[purpose::MAP]))?;
    let model = MeiosisModel::new(&map, params.epsilon)?;
    let mu = params.mu();
    let scales = params.scales();
    let trios = (0..params.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[purpose::FAMILY, i as u64]);
            gen_family(params, &model, mu, scales, &mut rng, i)
        })
        .collect();
    Ok(Simulation {
        cohort: Cohort::new(map, trios)?,
        roles: params.roles(),
        specs: params.adjustment_specs(),
        model,
    })
}
