//! Sources of randomness.
//!
//! Estimators never touch an RNG directly. They ask a [`Randomness`] for the
//! few kinds of draws they need, which lets the same estimator code run
//! either on a seeded stream ([`SeededRng`]) or under [`Explorer`], which
//! walks every outcome with its exact probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// The draws estimators are allowed to make.
pub trait Randomness {
    /// Uniform index in `0..n`.
    fn index(&mut self, n: usize) -> usize;
    /// Index drawn from a distribution given by its cumulative table.
    /// The last entry is the total mass, which need not be exactly one.
    fn weighted(&mut self, cumulative: &[f64]) -> usize;
    /// `true` with probability `p`. Degenerate `p` (0 or 1) consumes nothing.
    fn bernoulli(&mut self, p: f64) -> bool;
    /// Uniformly random `k`-subset of `0..n`, sorted ascending.
    fn subset(&mut self, n: usize, k: usize) -> Vec<usize>;
    /// Standard normal draw.
    fn normal(&mut self) -> f64;
}

/// Deterministic stream keyed by a `u64` seed.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream derived from this seed, used for per-worker or
    /// per-purpose splitting.
    pub fn derived(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn gaussian_vector(&mut self, d: usize, scale: f64) -> crate::Vector {
        crate::Vector::from_fn(d, |_, _| scale * self.normal())
    }
}

impl Randomness for SeededRng {
    fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() over an empty range");
        if n == 1 {
            return 0;
        }
        self.inner.gen_range(0..n)
    }

    fn weighted(&mut self, cumulative: &[f64]) -> usize {
        let n = cumulative.len();
        assert!(n > 0, "weighted() over an empty table");
        if n == 1 {
            return 0;
        }
        let u = self.inner.gen::<f64>() * cumulative[n - 1];
        cumulative.partition_point(|&c| c <= u).min(n - 1)
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            return true;
        }
        if p <= 0.0 {
            return false;
        }
        self.inner.gen::<f64>() < p
    }

    fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        if k == n {
            return (0..n).collect();
        }
        let mut v = rand::seq::index::sample(&mut self.inner, n, k).into_vec();
        v.sort_unstable();
        v
    }

    fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }
}

/// Exhaustive walker over the outcome tree of a randomized computation.
///
/// [`enumerate`] reruns the computation once per leaf. Each draw is a node
/// whose children are the possible outcomes, and the explorer keeps an
/// odometer of the choices made so far. The computation must be a pure
/// function of the draws it makes.
#[derive(Debug, Default)]
pub struct Explorer {
    choices: Vec<usize>,
    arities: Vec<usize>,
    depth: usize,
    prob: f64,
    continuous: bool,
    overflow: bool,
}

impl Explorer {
    fn choose(&mut self, arity: usize) -> usize {
        if self.depth == self.choices.len() {
            self.choices.push(0);
            self.arities.push(arity);
        }
        debug_assert_eq!(self.arities[self.depth], arity, "draw structure changed between replays");
        let c = self.choices[self.depth];
        self.depth += 1;
        c
    }

    fn advance(&mut self) -> bool {
        self.choices.truncate(self.depth);
        self.arities.truncate(self.depth);
        while let Some(c) = self.choices.pop() {
            let a = self.arities.pop().expect("paired stacks");
            if c + 1 < a {
                self.choices.push(c + 1);
                self.arities.push(a);
                return true;
            }
        }
        false
    }

    fn reset(&mut self) {
        self.depth = 0;
        self.prob = 1.0;
    }
}

impl Randomness for Explorer {
    fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        if n == 1 {
            return 0;
        }
        self.prob /= n as f64;
        self.choose(n)
    }

    fn weighted(&mut self, cumulative: &[f64]) -> usize {
        let n = cumulative.len();
        assert!(n > 0);
        if n == 1 {
            return 0;
        }
        let i = self.choose(n);
        let lo = if i == 0 { 0.0 } else { cumulative[i - 1] };
        self.prob *= (cumulative[i] - lo) / cumulative[n - 1];
        i
    }

    fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            return true;
        }
        if p <= 0.0 {
            return false;
        }
        // Choice 0 is the success branch.
        if self.choose(2) == 0 {
            self.prob *= p;
            true
        } else {
            self.prob *= 1.0 - p;
            false
        }
    }

    fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        if k == n {
            return (0..n).collect();
        }
        let total = match binomial(n, k) {
            Some(t) if t <= usize::MAX as u128 => t as usize,
            _ => {
                self.overflow = true;
                return (0..k).collect();
            }
        };
        let rank = self.choose(total);
        self.prob /= total as f64;
        unrank_combination(n, k, rank as u128)
    }

    fn normal(&mut self) -> f64 {
        self.continuous = true;
        0.0
    }
}

/// Runs `f` once per outcome and returns `(probability, value)` pairs.
///
/// Fails if `f` draws a normal variable or if the tree has more than
/// `limit` leaves.
pub fn enumerate<T>(limit: usize, mut f: impl FnMut(&mut Explorer) -> Result<T>) -> Result<Vec<(f64, T)>> {
    let mut ex = Explorer::default();
    let mut out = Vec::new();
    loop {
        ex.reset();
        let value = f(&mut ex)?;
        if ex.continuous {
            return Err(Error::ContinuousRandomness);
        }
        if ex.overflow {
            return Err(Error::EnumerationTooLarge { needed: usize::MAX, limit });
        }
        out.push((ex.prob, value));
        if out.len() > limit {
            return Err(Error::EnumerationTooLarge { needed: out.len(), limit });
        }
        if !ex.advance() {
            break;
        }
    }
    Ok(out)
}

pub(crate) fn binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Lexicographic unranking of `k`-subsets of `0..n`.
fn unrank_combination(n: usize, k: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        let remaining = k - slot - 1;
        loop {
            let count = binomial(n - next - 1, remaining).expect("fits, total already did");
            if rank < count {
                out.push(next);
                next += 1;
                break;
            }
            rank -= count;
            next += 1;
        }
    }
    out
}
