//! Poissonized Plancherel sampling through RSK, and the Monte Carlo estimator
//! Q_σ(L,s) = E Π_i (1 - σ(λ_i - i - s)).

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fredholm;
use crate::kernels::{HalfInt, SigmaProfile};
use crate::par::{self, Execution};

/// Largest L² accepted by the sampler.
pub const MAX_MEAN_SIZE: f64 = 400.0;

/// Samples per RNG stream. Fixed so results do not depend on the worker count.
const CHUNK: usize = 2048;

/// Suffix products below this are treated as exactly settled.
const TAIL_EPS: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize)]
pub struct Partition {
    parts: Vec<u32>,
}

impl Partition {
    pub fn new(parts: Vec<u32>) -> Result<Self> {
        if parts.contains(&0) || parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(format!("{parts:?} is not a partition")));
        }
        Ok(Partition { parts })
    }

    pub fn empty() -> Self {
        Partition::default()
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    pub fn weight(&self) -> u64 {
        self.parts.iter().map(|&p| p as u64).sum()
    }

    /// Number of non-zero parts.
    pub fn length(&self) -> usize {
        self.parts.len()
    }

    /// λ_1, or 0 for the empty partition.
    pub fn largest(&self) -> u32 {
        self.parts.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.parts.iter().map(u32::to_string).collect();
        write!(f, "({})", s.join(","))
    }
}

/// Shape of the RSK insertion tableau of a word.
pub fn rsk_shape(word: &[u32]) -> Partition {
    let mut rows: Vec<Vec<u32>> = Vec::new();
    for &x in word {
        let mut x = x;
        let mut placed = false;
        for row in rows.iter_mut() {
            let k = row.partition_point(|&y| y <= x);
            if k == row.len() {
                row.push(x);
                placed = true;
                break;
            }
            std::mem::swap(&mut row[k], &mut x);
        }
        if !placed {
            rows.push(vec![x]);
        }
    }
    Partition {
        parts: rows.iter().map(|r| r.len() as u32).collect(),
    }
}

/// Plancherel-distributed shape of size n: RSK of a uniform permutation.
pub fn sample_shape<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Partition {
    let mut perm: Vec<u32> = (0..n as u32).collect();
    perm.shuffle(rng);
    rsk_shape(&perm)
}

fn poisson_for(l: f64) -> Result<Option<Poisson<f64>>> {
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::ParameterOutOfRange(format!("L must be positive, got {l}")));
    }
    if l * l > MAX_MEAN_SIZE {
        return Err(Error::ResourceLimit(format!(
            "L² = {} exceeds the sampler cap {MAX_MEAN_SIZE}",
            l * l
        )));
    }
    // Poisson rejects means that underflow; such draws are always 0
    Ok(Poisson::new(l * l).ok())
}

fn draw<R: Rng + ?Sized>(poisson: &Option<Poisson<f64>>, rng: &mut R) -> Partition {
    let n = poisson.as_ref().map_or(0.0, |p| p.sample(rng)) as usize;
    sample_shape(n, rng)
}

/// One draw from the Poissonized Plancherel measure with parameter L.
pub fn sample_plancherel(l: f64, seed: u64) -> Result<Partition> {
    let poisson = poisson_for(l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(draw(&poisson, &mut rng))
}

/// Counter-based split of a master seed into independent ChaCha streams.
/// Each stream can be handed out once.
#[derive(Debug)]
pub struct RngStreams {
    seed: u64,
    claimed: HashSet<u64>,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams {
            seed,
            claimed: HashSet::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn claim(&mut self, stream: u64) -> Result<ChaCha8Rng> {
        if !self.claimed.insert(stream) {
            return Err(Error::SeedReuse(stream));
        }
        Ok(stream_rng(self.seed, stream))
    }

    /// Claims `n` consecutive streams starting at `first`.
    pub fn claim_range(&mut self, first: u64, n: u64) -> Result<Vec<ChaCha8Rng>> {
        (first..first + n).map(|k| self.claim(k)).collect()
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` Plancherel samples; chunk k uses stream k of `seed`.
pub fn sample_many(exec: Execution, l: f64, n: usize, seed: u64) -> Result<Vec<Partition>> {
    let poisson = poisson_for(l)?;
    let mut streams = RngStreams::new(seed);
    let rngs = streams.claim_range(0, n.div_ceil(CHUNK) as u64)?;
    let chunks = par::map_range(exec, rngs.len(), |k| {
        let mut rng = rngs[k].clone();
        let len = CHUNK.min(n - k * CHUNK);
        (0..len).map(|_| draw(&poisson, &mut rng)).collect::<Vec<_>>()
    });
    Ok(chunks.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl McEstimate {
    /// (estimate - target) / std_err, or 0 / ∞ when the sample has no spread.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.mean - target;
        if self.std_err > 0.0 {
            d / self.std_err
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY * d.signum()
        }
    }
}

/// Π_{i > k} (1 - σ(-i - s)) for every k, stored until the product is 1 to
/// within `TAIL_EPS`.
#[derive(Debug, Clone)]
struct TailProducts {
    s: HalfInt,
    suffix: Vec<f64>,
}

impl TailProducts {
    fn new(s: HalfInt, sigma: &SigmaProfile) -> Result<Self> {
        let mut factors = Vec::new();
        let mut x = (-s).pred();
        loop {
            // |log(1-σ)| <= 2σ once σ <= 1/2
            if sigma.eval(x) <= 0.5 && 2.0 * sigma.tail_bound(x) <= TAIL_EPS {
                break;
            }
            if factors.len() > 10_000_000 {
                return Err(Error::ResourceLimit(format!("tail product at s={s} did not settle")));
            }
            factors.push(sigma.complement(x));
            x = x.pred();
        }
        let mut suffix = vec![1.0; factors.len() + 1];
        for k in (0..factors.len()).rev() {
            suffix[k] = suffix[k + 1] * factors[k];
        }
        Ok(TailProducts { s, suffix })
    }

    fn after(&self, k: usize) -> f64 {
        self.suffix.get(k).copied().unwrap_or(1.0)
    }

    fn statistic(&self, lambda: &Partition, sigma: &SigmaProfile) -> f64 {
        let neg = -self.s;
        let mut prod = self.after(lambda.length());
        for (i, &p) in lambda.parts().iter().enumerate() {
            if prod == 0.0 {
                break;
            }
            prod *= sigma.complement(neg.shift(p as i64 - i as i64 - 1));
        }
        prod
    }
}

/// Π_i (1 - σ(λ_i - i - s)) for a single partition.
pub fn multiplicative_statistic(lambda: &Partition, sigma: &SigmaProfile, s: HalfInt) -> Result<f64> {
    Ok(TailProducts::new(s, sigma)?.statistic(lambda, sigma))
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn merge(self, o: Moments) -> Moments {
        Moments {
            n: self.n + o.n,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }

    fn estimate(&self, seed: u64) -> McEstimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        McEstimate {
            mean,
            std_err: (var / n).sqrt(),
            n_samples: self.n,
            seed,
        }
    }
}

/// Monte Carlo estimates of Q_σ(L,s) for several s from one partition stream,
/// so differences across s carry little noise.
pub fn multiplicative_statistic_mc_many(
    exec: Execution,
    sigma: &SigmaProfile,
    l: f64,
    ss: &[HalfInt],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    sigma.validate()?;
    let poisson = poisson_for(l)?;
    let tails: Vec<TailProducts> = ss.iter().map(|&s| TailProducts::new(s, sigma)).collect::<Result<_>>()?;
    let mut streams = RngStreams::new(seed);
    let rngs = streams.claim_range(0, n_samples.div_ceil(CHUNK) as u64)?;
    let per_chunk = par::map_range(exec, rngs.len(), |k| {
        let mut rng = rngs[k].clone();
        let mut m = vec![Moments::default(); tails.len()];
        for _ in 0..CHUNK.min(n_samples - k * CHUNK) {
            let lambda = draw(&poisson, &mut rng);
            for (acc, t) in m.iter_mut().zip(&tails) {
                acc.push(t.statistic(&lambda, sigma));
            }
        }
        m
    });
    let total = per_chunk
        .into_iter()
        .fold(vec![Moments::default(); tails.len()], |acc, m| {
            acc.into_iter().zip(m).map(|(a, b)| a.merge(b)).collect()
        });
    Ok(total.iter().map(|m| m.estimate(seed)).collect())
}

pub fn multiplicative_statistic_mc(
    sigma: &SigmaProfile,
    l: f64,
    s: HalfInt,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    Ok(multiplicative_statistic_mc_many(Execution::default(), sigma, l, &[s], n_samples, seed)?[0])
}

/// One (L, seed) job of an MC sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McJob {
    pub l: f64,
    pub seed: u64,
}

/// Several L values run side by side. Each needs its own seed: sharing one
/// would correlate the runs.
pub fn mc_sweep(
    exec: Execution,
    sigma: &SigmaProfile,
    jobs: &[McJob],
    ss: &[HalfInt],
    n_samples: usize,
) -> Result<Vec<Vec<McEstimate>>> {
    let mut seen = HashSet::new();
    for j in jobs {
        if !seen.insert(j.seed) {
            return Err(Error::SeedReuse(j.seed));
        }
    }
    jobs.iter()
        .map(|j| multiplicative_statistic_mc_many(exec, sigma, j.l, ss, n_samples, j.seed))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct McComparison {
    pub sigma_id: String,
    #[serde(rename = "L")]
    pub l: f64,
    pub s: HalfInt,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub fredholm_q: f64,
    pub z_score: f64,
}

/// MC estimates next to the Fredholm values.
pub fn compare_with_fredholm(
    sigma: &SigmaProfile,
    l: f64,
    ss: &[HalfInt],
    n_samples: usize,
    seed: u64,
    eps: f64,
) -> Result<Vec<McComparison>> {
    let mc = multiplicative_statistic_mc_many(Execution::default(), sigma, l, ss, n_samples, seed)?;
    let q = fredholm::gap_sweep(Execution::default(), &[l], ss, sigma, eps)?;
    Ok(ss
        .iter()
        .zip(mc)
        .zip(q)
        .map(|((&s, m), g)| McComparison {
            sigma_id: sigma.id(),
            l,
            s,
            mc_mean: m.mean,
            mc_stderr: m.std_err,
            fredholm_q: g.q,
            z_score: m.z_score(g.q),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(t: i64) -> HalfInt {
        HalfInt::from_twice(t).unwrap()
    }

    #[test]
    fn rsk_small_words() {
        assert_eq!(rsk_shape(&[]).parts(), &[] as &[u32]);
        assert_eq!(rsk_shape(&[0, 1, 2]).parts(), &[3]);
        assert_eq!(rsk_shape(&[2, 1, 0]).parts(), &[1, 1, 1]);
        assert_eq!(rsk_shape(&[1, 0, 2]).parts(), &[2, 1]);
        assert_eq!(rsk_shape(&[2, 0, 3, 1]).parts(), &[2, 2]);
    }

    fn lis(w: &[u32]) -> usize {
        let mut best = vec![1usize; w.len()];
        for i in 0..w.len() {
            for j in 0..i {
                if w[j] < w[i] {
                    best[i] = best[i].max(best[j] + 1);
                }
            }
        }
        best.into_iter().max().unwrap_or(0)
    }

    proptest! {
        #[test]
        fn first_row_is_longest_increasing(seed in any::<u64>(), n in 0usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w: Vec<u32> = (0..n as u32).collect();
            w.shuffle(&mut rng);
            let p = rsk_shape(&w);
            prop_assert_eq!(p.largest() as usize, lis(&w));
            prop_assert_eq!(p.weight() as usize, n);
            prop_assert!(Partition::new(p.parts().to_vec()).is_ok());
            let rev: Vec<u32> = w.iter().rev().copied().collect();
            prop_assert_eq!(rsk_shape(&rev).length(), p.largest() as usize);
        }

        #[test]
        fn indicator_statistic_is_monotone(seed in any::<u64>()) {
            let lambda = sample_plancherel(3.0, seed).unwrap();
            let mut prev = 0.0;
            for s2 in (-21..=21).step_by(2) {
                let v = multiplicative_statistic(&lambda, &SigmaProfile::Indicator, h(s2)).unwrap();
                prop_assert!(v == 0.0 || v == 1.0);
                prop_assert!(v >= prev);
                prop_assert_eq!(v == 1.0, lambda.largest() as i64 * 2 <= s2 + 1);
                prev = v;
            }
        }
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![3, 1, 1]).is_ok());
        assert!(Partition::new(vec![1, 2]).is_err());
        assert!(Partition::new(vec![2, 0]).is_err());
        assert_eq!(Partition::new(vec![3, 1]).unwrap().to_string(), "(3,1)");
    }

    #[test]
    fn empty_and_mean_size() {
        let n = 100_000;
        let samples = sample_many(Execution::default(), 1.0, n, 7).unwrap();
        let p0 = (-1.0f64).exp();
        let freq = samples.iter().filter(|p| p.is_empty()).count() as f64 / n as f64;
        assert!((freq - p0).abs() < 3.0 * (p0 * (1.0 - p0) / n as f64).sqrt(), "{freq}");

        let tiny = sample_many(Execution::default(), 0.01, n, 8).unwrap();
        let freq = tiny.iter().filter(|p| p.is_empty()).count() as f64 / n as f64;
        assert!(freq >= 0.9999 - 3.0 * (1e-4 / n as f64).sqrt());

        let big = sample_many(Execution::default(), 2.0, n, 9).unwrap();
        let mean = big.iter().map(|p| p.weight() as f64).sum::<f64>() / n as f64;
        assert!((mean - 4.0).abs() < 3.0 * (4.0 / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn deterministic_and_schedule_independent() {
        let a = sample_many(Execution::Sequential, 2.0, 5000, 3).unwrap();
        let b = sample_many(Execution::Parallel, 2.0, 5000, 3).unwrap();
        assert_eq!(a, b);
        let f = SigmaProfile::fermi(0.5).unwrap();
        let x = multiplicative_statistic_mc_many(Execution::Sequential, &f, 2.0, &[h(1)], 5000, 11).unwrap();
        let y = multiplicative_statistic_mc_many(Execution::Parallel, &f, 2.0, &[h(1)], 5000, 11).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn zero_profile_is_exact() {
        let e = multiplicative_statistic_mc(&SigmaProfile::zero(), 2.0, h(1), 1000, 1).unwrap();
        assert_eq!((e.mean, e.std_err, e.n_samples), (1.0, 0.0, 1000));
    }

    #[test]
    fn tail_matches_q_zero() {
        let f = SigmaProfile::fermi(0.5).unwrap();
        for s2 in [-5, 1, 3] {
            let t = multiplicative_statistic(&Partition::empty(), &f, h(s2)).unwrap();
            let q0 = fredholm::q_zero(h(s2), &f, 1e-15).unwrap().value;
            assert!((t - q0).abs() < 1e-14, "{t} vs {q0}");
        }
    }

    #[test]
    fn indicator_against_closed_form() {
        let e = multiplicative_statistic_mc(&SigmaProfile::Indicator, 1.0, h(-1), 100_000, 5).unwrap();
        assert!(e.z_score((-1.0f64).exp()).abs() < 3.0, "{e:?}");
    }

    #[test]
    fn stream_reuse_rejected() {
        let mut st = RngStreams::new(1);
        st.claim(0).unwrap();
        assert_eq!(st.claim(0).unwrap_err(), Error::SeedReuse(0));
        let jobs = [McJob { l: 1.0, seed: 4 }, McJob { l: 2.0, seed: 4 }];
        let r = mc_sweep(Execution::default(), &SigmaProfile::Indicator, &jobs, &[h(1)], 10);
        assert_eq!(r.unwrap_err(), Error::SeedReuse(4));
    }

    #[test]
    fn rejects_large_l() {
        assert!(matches!(sample_plancherel(21.0, 0), Err(Error::ResourceLimit(_))));
        assert!(matches!(sample_plancherel(0.0, 0), Err(Error::ParameterOutOfRange(_))));
    }
}
