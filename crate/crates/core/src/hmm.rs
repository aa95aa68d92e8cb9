//! Haldane's hidden Markov model of meiosis.
//!
//! The hidden state at locus `j` is the ancestry indicator `U_j`: which of
//! the parent's two haplotypes (`m` = state 0, `f` = state 1) the
//! transmitted allele was copied from. Between consecutive loci the state
//! is kept with probability `(1 + exp(-2d)) / 2` for a distance of `d`
//! Morgans (crossovers form a Poisson process). The transmitted allele
//! equals the parental allele of the current state except for a de novo
//! mutation, which happens with probability `epsilon`.
//!
//! Conditioning sets are described by a [`ConditioningWindow`]: the chain
//! runs over `start..=end`, the child's alleles are observed everywhere in
//! that span except in one contiguous hidden block, and the instruments
//! live in the hidden block. Observed loci form two contiguous flanks, the
//! only shape of conditioning set supported here.

use rand::Rng;

use crate::data::{GeneticMap, Haplotype, HaplotypePair, Origin};
use crate::error::{Error, Result};

/// Probability that the ancestry indicator is unchanged across `dist`
/// Morgans.
pub fn transition_stay_prob(dist_morgans: f64) -> Result<f64> {
    if dist_morgans.is_nan() || dist_morgans < 0.0 {
        return Err(Error::NegativeDistance {
            locus: 0,
            distance: dist_morgans,
        });
    }
    Ok(stay_from_decay((-2.0 * dist_morgans).exp()))
}

#[inline]
fn stay_from_decay(decay: f64) -> f64 {
    0.5 * (1.0 + decay)
}

/// Probability of transmitting allele `z` when the copied parental allele
/// is `parent_allele`.
#[inline]
pub fn emission_prob(z: u8, parent_allele: u8, epsilon: f64) -> f64 {
    if z == parent_allele {
        1.0 - epsilon
    } else {
        epsilon
    }
}

/// Meiosis model for one chromosome: per-interval crossover decay factors
/// `exp(-2 d_j)` (distances converted from centimorgans) and the de novo
/// mutation rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MeiosisModel {
    decay: Vec<f64>,
    epsilon: f64,
}

impl MeiosisModel {
    pub fn new(map: &GeneticMap, epsilon: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&epsilon) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        let decay = (0..map.len())
            .map(|j| {
                if j == 0 {
                    1.0
                } else {
                    (-2.0 * map.dist_morgans(j)).exp()
                }
            })
            .collect();
        Ok(Self { decay, epsilon })
    }

    pub fn len(&self) -> usize {
        self.decay.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decay.is_empty()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Stay probability between loci `j - 1` and `j`.
    #[inline]
    pub fn stay(&self, j: usize) -> f64 {
        stay_from_decay(self.decay[j])
    }

    /// Stay probability between loci `a <= b`, i.e. the probability of an
    /// even number of crossovers in between.
    pub fn stay_between(&self, a: usize, b: usize) -> f64 {
        debug_assert!(a <= b);
        stay_from_decay(self.decay[a + 1..=b].iter().product())
    }

    #[inline]
    fn emission(&self, z: u8, parent_allele: u8) -> f64 {
        emission_prob(z, parent_allele, self.epsilon)
    }

    /// `P(Z_j = 1 | U_j = u)` for both states.
    #[inline]
    fn prob_allele_one(&self, alleles: [u8; 2]) -> [f64; 2] {
        alleles.map(|a| self.emission(1, a))
    }
}

/// Loci `start..=end` over which the chain runs, of which the block
/// `hidden.0..=hidden.1` is unobserved. Everything else in the span is the
/// conditioning set `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditioningWindow {
    pub start: usize,
    pub end: usize,
    pub hidden: Option<(usize, usize)>,
}

impl ConditioningWindow {
    /// Whole chromosome, conditioning on every locus outside `lo..=hi`.
    pub fn complement(p: usize, lo: usize, hi: usize) -> Self {
        Self {
            start: 0,
            end: p - 1,
            hidden: Some((lo, hi)),
        }
    }

    /// Whole chromosome with the conditioning set `{..=left} ∪ {right..}`;
    /// `None` drops that flank.
    pub fn between(p: usize, left: Option<usize>, right: Option<usize>) -> Self {
        let lo = left.map_or(0, |l| l + 1);
        let hi = right.map_or(p - 1, |h| h - 1);
        Self::complement(p, lo, hi)
    }

    /// Nothing observed.
    pub fn unconditioned(p: usize) -> Self {
        Self::complement(p, 0, p - 1)
    }

    /// Everything observed (plain forward-backward).
    pub fn fully_observed(p: usize) -> Self {
        Self {
            start: 0,
            end: p - 1,
            hidden: None,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let ok = self.start <= self.end
            && self.end < p
            && self
                .hidden
                .is_none_or(|(lo, hi)| self.start <= lo && lo <= hi && hi <= self.end);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidWindow(format!("{self:?} on {p} loci")))
        }
    }

    #[inline]
    pub fn is_observed(&self, k: usize) -> bool {
        match self.hidden {
            Some((lo, hi)) => k < lo || k > hi,
            None => true,
        }
    }

    pub fn is_hidden(&self, k: usize) -> bool {
        k >= self.start && k <= self.end && !self.is_observed(k)
    }

    /// Last observed locus left of the hidden block (`l`).
    pub fn left(&self) -> Option<usize> {
        match self.hidden {
            Some((lo, _)) if lo > self.start => Some(lo - 1),
            _ => None,
        }
    }

    /// First observed locus right of the hidden block (`h`).
    pub fn right(&self) -> Option<usize> {
        match self.hidden {
            Some((_, hi)) if hi < self.end => Some(hi + 1),
            _ => None,
        }
    }

    /// Observed loci (the conditioning set).
    pub fn conditioning(&self) -> impl Iterator<Item = usize> + '_ {
        (self.start..=self.end).filter(|&k| self.is_observed(k))
    }
}

/// Rescaled forward and backward weights over a window.
///
/// Column `i` refers to locus `start + i`. `alpha` columns sum to one and
/// `beta` columns have maximum one; the unnormalized weights are
/// `alpha[i] * exp(log_alpha[i])` and `beta[i] * exp(log_beta[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct FBWeights {
    pub start: usize,
    pub alpha: Vec<[f64; 2]>,
    pub beta: Vec<[f64; 2]>,
    pub log_alpha: Vec<f64>,
    pub log_beta: Vec<f64>,
}

impl FBWeights {
    pub fn end(&self) -> usize {
        self.start + self.alpha.len() - 1
    }

    /// `log P(Z_B)`, the log-likelihood of the observed alleles.
    pub fn log_likelihood(&self) -> f64 {
        *self.log_alpha.last().unwrap()
    }

    pub fn unscaled_alpha(&self, k: usize) -> [f64; 2] {
        let i = k - self.start;
        let s = self.log_alpha[i].exp();
        self.alpha[i].map(|a| a * s)
    }

    pub fn unscaled_beta(&self, k: usize) -> [f64; 2] {
        let i = k - self.start;
        let s = self.log_beta[i].exp();
        self.beta[i].map(|b| b * s)
    }

    /// `P(U_k = u | Z_B)`.
    pub fn posterior(&self, k: usize) -> [f64; 2] {
        let i = k - self.start;
        normalize([
            self.alpha[i][0] * self.beta[i][0],
            self.alpha[i][1] * self.beta[i][1],
        ])
    }

    fn scaled_beta(&self, k: usize) -> [f64; 2] {
        self.beta[k - self.start]
    }
}

#[inline]
fn normalize(v: [f64; 2]) -> [f64; 2] {
    let s = v[0] + v[1];
    [v[0] / s, v[1] / s]
}

/// Forward-backward over `start..=end` with an arbitrary emission term
/// `emission(k, u)`.
fn forward_backward_with(
    model: &MeiosisModel,
    start: usize,
    end: usize,
    emission: impl Fn(usize, usize) -> f64,
) -> Result<FBWeights> {
    let n = end - start + 1;
    let mut alpha = Vec::with_capacity(n);
    let mut log_alpha = Vec::with_capacity(n);
    let mut log_acc = 0.0;
    let mut prev = [0.5, 0.5];
    for k in start..=end {
        let mut col = [0.0; 2];
        for (u, c) in col.iter_mut().enumerate() {
            let mass = if k == start {
                prev[u]
            } else {
                let s = model.stay(k);
                s * prev[u] + (1.0 - s) * prev[1 - u]
            };
            *c = emission(k, u) * mass;
        }
        let sum = col[0] + col[1];
        if sum <= 0.0 || !sum.is_finite() {
            return Err(Error::ImpossibleHaplotype { locus: k + 1 });
        }
        log_acc += sum.ln();
        let col = [col[0] / sum, col[1] / sum];
        alpha.push(col);
        log_alpha.push(log_acc);
        prev = col;
    }

    let mut beta = vec![[1.0, 1.0]; n];
    let mut log_beta = vec![0.0; n];
    for k in (start..end).rev() {
        let i = k - start;
        let s = model.stay(k + 1);
        let next = beta[i + 1];
        let weighted = [emission(k + 1, 0) * next[0], emission(k + 1, 1) * next[1]];
        let col = [
            s * weighted[0] + (1.0 - s) * weighted[1],
            (1.0 - s) * weighted[0] + s * weighted[1],
        ];
        let max = col[0].max(col[1]);
        if max <= 0.0 || !max.is_finite() {
            return Err(Error::ImpossibleHaplotype { locus: k + 1 });
        }
        beta[i] = [col[0] / max, col[1] / max];
        log_beta[i] = log_beta[i + 1] + max.ln();
    }

    Ok(FBWeights {
        start,
        alpha,
        beta,
        log_alpha,
        log_beta,
    })
}

/// Forward and backward weights of the child haplotype `child` transmitted
/// by `parent`, observing only the window's conditioning loci.
pub fn forward_backward(
    model: &MeiosisModel,
    parent: &HaplotypePair,
    child: &Haplotype,
    window: &ConditioningWindow,
) -> Result<FBWeights> {
    window.validate(model.len())?;
    let m = parent.maternal.alleles();
    let f = parent.paternal.alleles();
    let z = child.alleles();
    forward_backward_with(model, window.start, window.end, |k, u| {
        if window.is_observed(k) {
            model.emission(z[k], if u == 0 { m[k] } else { f[k] })
        } else {
            1.0
        }
    })
}

fn check_target(window: &ConditioningWindow, j: usize) -> Result<()> {
    if window.is_hidden(j) {
        Ok(())
    } else {
        Err(Error::InvalidWindow(format!(
            "target locus {} is not in the unobserved block of {window:?}",
            j + 1
        )))
    }
}

/// `P(Z_j = 1 | Z_B)` for a target locus in the hidden block.
pub fn propensity_score(
    model: &MeiosisModel,
    parent: &HaplotypePair,
    child: &Haplotype,
    target: usize,
    window: &ConditioningWindow,
) -> Result<f64> {
    check_target(window, target)?;
    let fb = forward_backward(model, parent, child, window)?;
    Ok(allele_one_prob(
        fb.posterior(target),
        model.prob_allele_one(parent.alleles_at(target)),
    ))
}

/// Distance from 0 or 1 below which a propensity is taken to be exactly
/// degenerate; rounding in the recursions leaves pinned alleles at
/// `1 - 1e-16` rather than 1.
const DEGENERATE_TOL: f64 = 1e-12;

#[inline]
fn allele_one_prob(ancestry: [f64; 2], one: [f64; 2]) -> f64 {
    let pi = (ancestry[0] * one[0] + ancestry[1] * one[1]).clamp(0.0, 1.0);
    if pi < DEGENERATE_TOL {
        0.0
    } else if pi > 1.0 - DEGENERATE_TOL {
        1.0
    } else {
        pi
    }
}

/// Propensity score computed only from loci between two heterozygous
/// flanks `b1 < target < b2`, valid without mutation: the flanks pin the
/// ancestry state, so everything outside them is irrelevant. The window's
/// hidden block must lie strictly between the flanks and the flanks must
/// be observed.
pub fn propensity_score_flanked(
    model: &MeiosisModel,
    parent: &HaplotypePair,
    child: &Haplotype,
    target: usize,
    window: &ConditioningWindow,
    flanks: (usize, usize),
) -> Result<f64> {
    if model.epsilon() != 0.0 {
        return Err(Error::MutationRateNotZero(model.epsilon()));
    }
    window.validate(model.len())?;
    check_target(window, target)?;
    let (b1, b2) = flanks;
    if !(b1 < target && target < b2) || !window.is_observed(b1) || !window.is_observed(b2) {
        return Err(Error::InvalidWindow(format!(
            "flanks ({}, {}) must be observed and enclose locus {}",
            b1 + 1,
            b2 + 1,
            target + 1
        )));
    }
    if b1 < window.start || b2 > window.end {
        return Err(Error::InvalidWindow("flanks outside the window".into()));
    }
    for b in [b1, b2] {
        if !parent.is_heterozygous(b) {
            return Err(Error::FlankNotHeterozygous { locus: b + 1 });
        }
    }
    let z = child.alleles();
    let emit = |k: usize, u: usize| -> f64 {
        if window.is_observed(k) {
            model.emission(z[k], parent.alleles_at(k)[u])
        } else {
            1.0
        }
    };

    // Ancestry at b1 is fixed by the child's allele there.
    let pinned = if parent.alleles_at(b1)[0] == z[b1] { 0 } else { 1 };
    let mut left = [0.0; 2];
    left[pinned] = 1.0;
    for k in b1 + 1..=target {
        let s = model.stay(k);
        let col = [
            emit(k, 0) * (s * left[0] + (1.0 - s) * left[1]),
            emit(k, 1) * ((1.0 - s) * left[0] + s * left[1]),
        ];
        let sum = col[0] + col[1];
        if sum <= 0.0 {
            return Err(Error::ImpossibleHaplotype { locus: k + 1 });
        }
        left = [col[0] / sum, col[1] / sum];
    }

    // Truncated backward weights starting from b2.
    let mut right = [1.0, 1.0];
    for k in (target..b2).rev() {
        let s = model.stay(k + 1);
        let w = [emit(k + 1, 0) * right[0], emit(k + 1, 1) * right[1]];
        let col = [s * w[0] + (1.0 - s) * w[1], (1.0 - s) * w[0] + s * w[1]];
        let max = col[0].max(col[1]);
        if max <= 0.0 {
            return Err(Error::ImpossibleHaplotype { locus: k + 1 });
        }
        right = [col[0] / max, col[1] / max];
    }

    let joint = [left[0] * right[0], left[1] * right[1]];
    if joint[0] + joint[1] <= 0.0 {
        return Err(Error::ImpossibleHaplotype { locus: target + 1 });
    }
    Ok(allele_one_prob(
        normalize(joint),
        model.prob_allele_one(parent.alleles_at(target)),
    ))
}

/// Joint conditional law of the ancestry indicators at several targets in
/// one hidden block, as a Markov chain: `first[u] = P(U_{j1} = u | Z_B)` and
/// `steps[k][v][u] = P(U_{j(k+1)} = u | U_{jk} = v, Z_B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPropensity {
    pub targets: Vec<usize>,
    pub first: [f64; 2],
    pub steps: Vec<[[f64; 2]; 2]>,
}

impl JointPropensity {
    /// Probability of the ancestry assignment `states` (0 = m, 1 = f).
    pub fn mass(&self, states: &[usize]) -> f64 {
        assert_eq!(states.len(), self.targets.len());
        let mut p = self.first[states[0]];
        for (k, w) in states.windows(2).enumerate() {
            p *= self.steps[k][w[0]][w[1]];
        }
        p
    }

    /// Probability mass function over all `2^r` assignments; bit `k` of the
    /// index is the state of target `k`.
    pub fn pmf(&self) -> Vec<f64> {
        let r = self.targets.len();
        let mut states = vec![0usize; r];
        (0..1usize << r)
            .map(|idx| {
                for (k, s) in states.iter_mut().enumerate() {
                    *s = (idx >> k) & 1;
                }
                self.mass(&states)
            })
            .collect()
    }

    /// Marginal ancestry distribution of target `k`.
    pub fn marginal(&self, k: usize) -> [f64; 2] {
        let mut m = self.first;
        for step in &self.steps[..k] {
            m = [
                m[0] * step[0][0] + m[1] * step[1][0],
                m[0] * step[0][1] + m[1] * step[1][1],
            ];
        }
        m
    }
}

pub fn joint_propensity(
    model: &MeiosisModel,
    parent: &HaplotypePair,
    child: &Haplotype,
    targets: &[usize],
    window: &ConditioningWindow,
) -> Result<JointPropensity> {
    if targets.is_empty() || targets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidWindow(
            "targets must be non-empty and strictly increasing".into(),
        ));
    }
    for &j in targets {
        check_target(window, j)?;
    }
    let fb = forward_backward(model, parent, child, window)?;
    Ok(joint_from_weights(model, &fb, targets))
}

fn joint_from_weights(model: &MeiosisModel, fb: &FBWeights, targets: &[usize]) -> JointPropensity {
    let first = fb.posterior(targets[0]);
    let steps = targets
        .windows(2)
        .map(|w| {
            let s = model.stay_between(w[0], w[1]);
            let b = fb.scaled_beta(w[1]);
            let row = |v: usize| {
                let t = if v == 0 { [s, 1.0 - s] } else { [1.0 - s, s] };
                normalize([t[0] * b[0], t[1] * b[1]])
            };
            [row(0), row(1)]
        })
        .collect();
    JointPropensity {
        targets: targets.to_vec(),
        first,
        steps,
    }
}

/// Precomputed sampler for counterfactual alleles at a set of targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSampler {
    joint: JointPropensity,
    alleles: Vec<[u8; 2]>,
    epsilon: f64,
    /// `P(Z = 1)` per target.
    propensities: Vec<f64>,
}

impl ConditionalSampler {
    pub fn new(model: &MeiosisModel, parent: &HaplotypePair, joint: JointPropensity) -> Self {
        let alleles: Vec<[u8; 2]> = joint.targets.iter().map(|&j| parent.alleles_at(j)).collect();
        let propensities = alleles
            .iter()
            .enumerate()
            .map(|(k, &a)| allele_one_prob(joint.marginal(k), model.prob_allele_one(a)))
            .collect();
        Self {
            joint,
            alleles,
            epsilon: model.epsilon(),
            propensities,
        }
    }

    pub fn targets(&self) -> &[usize] {
        &self.joint.targets
    }

    pub fn propensities(&self) -> &[f64] {
        &self.propensities
    }

    pub fn joint(&self) -> &JointPropensity {
        &self.joint
    }

    /// Writes one draw of alleles (one per target) into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u8]) {
        if self.alleles.len() == 1 {
            let u: f64 = rng.random();
            out[0] = u8::from(u < self.propensities[0]);
            return;
        }
        let mut state = usize::from(rng.random::<f64>() >= self.joint.first[0]);
        for (k, slot) in out.iter_mut().enumerate() {
            if k > 0 {
                let p_m = self.joint.steps[k - 1][state][0];
                state = usize::from(rng.random::<f64>() >= p_m);
            }
            let mut allele = self.alleles[k][state];
            if self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
                allele ^= 1;
            }
            *slot = allele;
        }
    }
}

/// One counterfactual draw of the child's alleles at `targets` given the
/// conditioning loci of `window`.
pub fn sample_conditional_haplotype<R: Rng + ?Sized>(
    model: &MeiosisModel,
    parent: &HaplotypePair,
    child: &Haplotype,
    targets: &[usize],
    window: &ConditioningWindow,
    rng: &mut R,
) -> Result<Vec<u8>> {
    let joint = joint_propensity(model, parent, child, targets, window)?;
    let sampler = ConditionalSampler::new(model, parent, joint);
    let mut out = vec![0; targets.len()];
    sampler.sample_into(rng, &mut out);
    Ok(out)
}

/// Draws a full transmitted haplotype from the unconditional meiosis model.
pub fn sample_unconditional_haplotype<R: Rng + ?Sized>(
    model: &MeiosisModel,
    parent: &HaplotypePair,
    rng: &mut R,
) -> Haplotype {
    let p = model.len();
    let eps = model.epsilon();
    let mut state = usize::from(rng.random::<bool>());
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        if j > 0 && rng.random::<f64>() >= model.stay(j) {
            state ^= 1;
        }
        let mut allele = parent.alleles_at(j)[state];
        if eps > 0.0 && rng.random::<f64>() < eps {
            allele ^= 1;
        }
        out.push(allele);
    }
    Haplotype::new(out)
}

/// Propensity of one child haplotype at one locus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propensity {
    pub pi: f64,
    pub locus: usize,
    pub origin: Origin,
}

/// Law of the genotype `Z = Z^m + Z^f` from the two independent meioses;
/// returns `[P(0), P(1), P(2)]`.
pub fn genotype_propensity(maternal: Propensity, paternal: Propensity) -> [f64; 3] {
    debug_assert_eq!(maternal.locus, paternal.locus);
    let (m, f) = (maternal.pi, paternal.pi);
    let two = m * f;
    let zero = (1.0 - m) * (1.0 - f);
    [zero, 1.0 - two - zero, two]
}
