//! Birkhoff averages of the indicator of `R¹_p` with batch-means error bars.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conjugacy::{shadow_into, ShadowWorkspace, SHADOW_TOL};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::torus::{dist, TorusPoint};

pub const BATCHES: usize = 100;
pub const MIN_STEPS: u64 = 1000;
pub const INVERSE_CHECK_EVERY: u64 = 100_000;
/// Overlap on each side of a block shadowed by [`birkhoff_conjugate`].
pub const BLOCK_OVERLAP: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BirkhoffResult {
    pub average: f64,
    pub n: u64,
    /// `(n_i, partial average over the first n_i steps)`, ending at `(n, average)`.
    pub checkpoints: Vec<(u64, f64)>,
    pub std_error: f64,
    pub z: TorusPoint,
    pub p: f64,
    /// Worst `dist(f⁻¹(f(z_k)), z_k)` over the spot checks.
    pub inverse_check_max: f64,
}

/// Standard error of the overall mean from equal-weight batch means.
pub fn batch_means_std_error(means: &[f64]) -> f64 {
    let b = means.len();
    if b < 2 {
        return f64::NAN;
    }
    let mean = means.iter().sum::<f64>() / b as f64;
    let ss: f64 = means.iter().map(|m| (m - mean).powi(2)).sum();
    (ss / (b as f64 * (b as f64 - 1.0))).sqrt()
}

/// Running sums for a Birkhoff average: batches of `n / 100` steps, the last
/// batch absorbing the remainder.
struct Accumulator {
    n: u64,
    batch_len: u64,
    steps: u64,
    hits: u64,
    batch_hits: u64,
    batch_steps: u64,
    batch_means: Vec<f64>,
    checkpoints: Vec<u64>,
    next_checkpoint: usize,
    recorded: Vec<(u64, f64)>,
}

impl Accumulator {
    fn new(n: u64, checkpoints: &[u64]) -> Result<Self> {
        if n < MIN_STEPS {
            return Err(Error::InvalidArgument(format!("need at least {MIN_STEPS} steps, got {n}")));
        }
        let mut cps: Vec<u64> = checkpoints.iter().copied().filter(|&c| c > 0 && c < n).collect();
        cps.sort_unstable();
        cps.dedup();
        cps.push(n);
        Ok(Self {
            n,
            batch_len: n / BATCHES as u64,
            steps: 0,
            hits: 0,
            batch_hits: 0,
            batch_steps: 0,
            batch_means: Vec::with_capacity(BATCHES),
            checkpoints: cps,
            next_checkpoint: 0,
            recorded: Vec::new(),
        })
    }

    #[inline]
    fn push(&mut self, symbol: u8) {
        let s = symbol as u64;
        self.hits += s;
        self.batch_hits += s;
        self.steps += 1;
        self.batch_steps += 1;
        if self.batch_steps == self.batch_len && self.batch_means.len() < BATCHES - 1 {
            self.close_batch();
        }
        if self.steps == self.checkpoints[self.next_checkpoint] {
            self.recorded.push((self.steps, self.hits as f64 / self.steps as f64));
            self.next_checkpoint = (self.next_checkpoint + 1).min(self.checkpoints.len() - 1);
        }
    }

    fn close_batch(&mut self) {
        self.batch_means.push(self.batch_hits as f64 / self.batch_steps as f64);
        self.batch_hits = 0;
        self.batch_steps = 0;
    }

    fn finish(mut self, z: TorusPoint, p: f64, inverse_check_max: f64) -> BirkhoffResult {
        debug_assert_eq!(self.steps, self.n);
        self.close_batch();
        let average = self.hits as f64 / self.n as f64;
        if let Some(last) = self.recorded.last_mut() {
            last.1 = average;
        }
        BirkhoffResult {
            average,
            n: self.n,
            checkpoints: self.recorded,
            std_error: batch_means_std_error(&self.batch_means),
            z,
            p,
            inverse_check_max,
        }
    }
}

/// `(1/n) Σ_{k<n} locate(f_p^k(z))` along the plainly iterated orbit.
pub fn birkhoff(partition: &Partition, z: TorusPoint, n: u64, checkpoints: &[u64]) -> Result<BirkhoffResult> {
    let map = partition.map();
    let mut acc = Accumulator::new(n, checkpoints)?;
    let mut inverse_max: f64 = 0.0;
    let mut q = z;
    for k in 0..n {
        acc.push(partition.locate(q));
        let next = map.apply(q);
        if k % INVERSE_CHECK_EVERY == 0 {
            inverse_max = inverse_max.max(dist(map.apply_inverse(next), q));
        }
        q = next;
    }
    Ok(acc.finish(z, partition.p(), inverse_max))
}

/// A Birkhoff run along a shadowed orbit.
#[derive(Clone, Debug)]
pub struct ConjugateRun {
    pub result: BirkhoffResult,
    /// Steps whose symbol under the target partition differs from the base symbol.
    pub mismatches: u64,
    /// Largest Newton residual over all blocks.
    pub max_residual: f64,
}

/// Birkhoff average of `χ_{R¹_p}` along `h_p(f_0^k β)`, `0 ≤ k < n`.
///
/// The `f_0`-orbit of `β` is cut into blocks of `n / 100` steps, each padded
/// by [`BLOCK_OVERLAP`] points on both sides, and every padded block is
/// shadowed by a true `f_p`-orbit. The padding keeps the core of each block
/// within `λ^{-40}` of the exact conjugate orbit. At `p = 0` this is the
/// plain average at `β`.
pub fn birkhoff_conjugate(
    base: &Partition,
    target: &Partition,
    beta: TorusPoint,
    n: u64,
    checkpoints: &[u64],
) -> Result<ConjugateRun> {
    if target.p() == 0.0 {
        let result = birkhoff(base, beta, n, checkpoints)?;
        return Ok(ConjugateRun { result, mismatches: 0, max_residual: 0.0 });
    }
    let mut acc = Accumulator::new(n, checkpoints)?;
    let f0 = base.map();
    let fp = target.map();
    let o = BLOCK_OVERLAP;
    let block = (n / BATCHES as u64) as usize;

    let mut window: Vec<TorusPoint> = Vec::with_capacity(block + 2 * o + n as usize % BATCHES);
    let mut cur = beta;
    for _ in 0..o {
        cur = f0.apply_inverse(cur);
        window.push(cur);
    }
    window.reverse();
    window.push(beta);
    let mut head = beta;

    let mut ws = ShadowWorkspace::default();
    let mut shadow = Vec::new();
    let mut mismatches = 0;
    let mut max_residual: f64 = 0.0;
    let mut inverse_max: f64 = 0.0;
    let mut done: u64 = 0;
    let mut start = beta;
    for b in 0..BATCHES {
        let len = if b + 1 == BATCHES { (n - done) as usize } else { block };
        // window holds w_{done-o} ..= head, grow it to w_{done+len+o-1}
        while window.len() < len + 2 * o {
            head = f0.apply(head);
            window.push(head);
        }
        shadow.clear();
        shadow.extend_from_slice(&window);
        let s = shadow_into(fp, &mut shadow, SHADOW_TOL, &mut ws)?;
        max_residual = max_residual.max(s.residual);
        if b == 0 {
            start = shadow[o];
        }
        for k in 0..len {
            let z = shadow[o + k];
            let sym = target.locate(z);
            if sym != base.locate(window[o + k]) {
                mismatches += 1;
            }
            if (done + k as u64) % INVERSE_CHECK_EVERY == 0 {
                inverse_max = inverse_max.max(dist(fp.apply_inverse(fp.apply(z)), z));
            }
            acc.push(sym);
        }
        done += len as u64;
        window.drain(..len);
    }
    Ok(ConjugateRun { result: acc.finish(start, target.p(), inverse_max), mismatches, max_residual })
}

/// The initial points used by [`sweep_averages`].
pub fn sweep_starts(n_points: usize, seed: u64) -> Result<Vec<TorusPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_points).map(|_| TorusPoint::new(rng.gen(), rng.gen())).collect()
}

/// Averages for every partition over `n_points` shared random initial points.
pub fn sweep_averages(partitions: &[Partition], n: u64, n_points: usize, seed: u64) -> Result<Vec<Vec<BirkhoffResult>>> {
    let starts = sweep_starts(n_points, seed)?;
    partitions
        .par_iter()
        .map(|part| starts.par_iter().map(|&z| birkhoff(part, z, n, &[])).collect())
        .collect()
}
