//! Reference computations used by the integration and acceptance tests.
//! Everything here works from first principles (path enumeration, dense
//! linear algebra, exhaustive randomization) and never calls the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Haldane probability of no ancestry switch over `d_cm` centimorgans.
pub fn haldane_stay(d_cm: f64) -> f64 {
    if d_cm.is_infinite() {
        0.5
    } else {
        0.5 * (1.0 + (-2.0 * d_cm / 100.0).exp())
    }
}

/// A single meiosis: parental haplotypes, transmitted haplotype and map.
#[derive(Debug, Clone)]
pub struct Meiosis {
    pub dist_cm: Vec<f64>,
    pub eps: f64,
    /// `parent[u][j]`, `u = 0` for the parent's maternal haplotype.
    pub parent: [Vec<u8>; 2],
    pub child: Vec<u8>,
}

impl Meiosis {
    pub fn p(&self) -> usize {
        self.child.len()
    }

    fn emit(&self, j: usize, u: usize, z: u8) -> f64 {
        if self.parent[u][j] == z {
            1.0 - self.eps
        } else {
            self.eps
        }
    }

    fn trans(&self, j: usize, from: usize, to: usize) -> f64 {
        let s = haldane_stay(self.dist_cm[j]);
        if from == to {
            s
        } else {
            1.0 - s
        }
    }

    /// Weight of the ancestry path `u` (bit `k` = state at locus
    /// `start + k`) times the emissions of the observed alleles, without the
    /// initial-state factor.
    fn chain_weight(
        &self,
        start: usize,
        end: usize,
        u: u64,
        observed: &dyn Fn(usize) -> bool,
        emit_first: bool,
    ) -> f64 {
        let state = |j: usize| ((u >> (j - start)) & 1) as usize;
        let mut w = 1.0;
        for j in start..=end {
            if j > start {
                w *= self.trans(j, state(j - 1), state(j));
            }
            if observed(j) && (j > start || emit_first) {
                w *= self.emit(j, state(j), self.child[j]);
            }
        }
        w
    }

    /// Joint probability of the ancestry path and the observed alleles in
    /// `start..=end`.
    fn path_weight(&self, start: usize, end: usize, u: u64, observed: &dyn Fn(usize) -> bool) -> f64 {
        0.5 * self.chain_weight(start, end, u, observed, true)
    }

    fn paths(&self, start: usize, end: usize) -> impl Iterator<Item = u64> {
        0..1u64 << (end - start + 1)
    }

    /// `P(Z_target = 1 | observed loci)`.
    pub fn propensity(
        &self,
        start: usize,
        end: usize,
        target: usize,
        observed: &dyn Fn(usize) -> bool,
    ) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for u in self.paths(start, end) {
            let w = self.path_weight(start, end, u, observed);
            let s = ((u >> (target - start)) & 1) as usize;
            num += w * self.emit(target, s, 1);
            den += w;
        }
        num / den
    }

    /// Conditional law of the ancestry states at `targets`; bit `k` of the
    /// index is the state at `targets[k]`.
    pub fn joint(
        &self,
        start: usize,
        end: usize,
        targets: &[usize],
        observed: &dyn Fn(usize) -> bool,
    ) -> Vec<f64> {
        let mut pmf = vec![0.0; 1 << targets.len()];
        let mut den = 0.0;
        for u in self.paths(start, end) {
            let w = self.path_weight(start, end, u, observed);
            let idx = targets
                .iter()
                .enumerate()
                .map(|(k, &t)| (((u >> (t - start)) & 1) as usize) << k)
                .sum::<usize>();
            pmf[idx] += w;
            den += w;
        }
        pmf.iter().map(|w| w / den).collect()
    }

    /// Unscaled forward weight `P(Z_obs[start..=k], U_k = u)`.
    pub fn alpha(&self, start: usize, k: usize, observed: &dyn Fn(usize) -> bool) -> [f64; 2] {
        let mut out = [0.0; 2];
        for u in self.paths(start, k) {
            out[((u >> (k - start)) & 1) as usize] += self.path_weight(start, k, u, observed);
        }
        out
    }

    /// Unscaled backward weight `P(Z_obs[k+1..=end] | U_k = u)`.
    pub fn beta(&self, k: usize, end: usize, observed: &dyn Fn(usize) -> bool) -> [f64; 2] {
        let mut out = [0.0; 2];
        for u in self.paths(k, end) {
            out[(u & 1) as usize] += self.chain_weight(k, end, u, observed, false);
        }
        out
    }
}

/// Random map distances in centimorgans with occasional unlinked intervals.
pub fn random_distances<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    (0..p)
        .map(|j| match (j, rng.random_range(0..10)) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            (_, 1) => 0.0,
            _ => rng.random_range(0.0..80.0),
        })
        .collect()
}

/// Random parent and a child haplotype drawn from the meiosis model.
pub fn random_meiosis<R: Rng>(rng: &mut R, p: usize, eps: f64) -> Meiosis {
    let dist_cm = random_distances(rng, p);
    let parent = [
        (0..p).map(|_| rng.random_range(0..2u8)).collect(),
        (0..p).map(|_| rng.random_range(0..2u8)).collect(),
    ];
    let mut m = Meiosis {
        dist_cm,
        eps,
        parent,
        child: vec![0; p],
    };
    let mut u = rng.random_range(0..2usize);
    for j in 0..p {
        if j > 0 && rng.random::<f64>() >= haldane_stay(m.dist_cm[j]) {
            u ^= 1;
        }
        let mut z = m.parent[u][j];
        if rng.random::<f64>() < eps {
            z ^= 1;
        }
        m.child[j] = z;
    }
    m
}

/// Ordinary least squares F-statistic for adding `columns` to an
/// intercept-only model, through the normal equations. Returns `None` when
/// the design is singular.
pub fn ols_f(y: &[f64], columns: &[Vec<f64>]) -> Option<f64> {
    let n = y.len();
    let q = columns.len();
    let x = DMatrix::from_fn(n, q + 1, |i, c| if c == 0 { 1.0 } else { columns[c - 1][i] });
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let coef = xtx.cholesky()?.solve(&(x.transpose() * &yv));
    let resid = &yv - &x * coef;
    let rss = resid.norm_squared();
    let mean = yv.mean();
    let tss = yv.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    Some(((tss - rss) / q as f64) / (rss / (n - 1 - q) as f64))
}

/// Randomization p-value `P(T(Z) >= t_obs)` over independent Bernoulli
/// instruments with success probabilities `pis`, by enumerating all `2^N`
/// assignments. Values within a relative `1e-9` of `t_obs` count as ties.
pub fn exact_pvalue(pis: &[f64], stat: impl Fn(&[u8]) -> f64, observed: f64) -> f64 {
    let n = pis.len();
    let mut z = vec![0u8; n];
    let mut p = 0.0;
    for idx in 0..1u64 << n {
        let mut w = 1.0;
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = ((idx >> i) & 1) as u8;
            w *= if *zi == 1 { pis[i] } else { 1.0 - pis[i] };
        }
        if w > 0.0 && stat(&z) >= observed - 1e-9 * observed.abs() {
            p += w;
        }
    }
    p
}

/// Kolmogorov-Smirnov distance between a sample and a continuous cdf.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at level 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Sample variance.
pub fn variance(a: &[f64]) -> f64 {
    let n = a.len() as f64;
    let m = a.iter().sum::<f64>() / n;
    a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}
