//! Low-discrepancy sample points and sampled zero tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{Env, Expr, ExprError, Var};

/// Values with magnitude at or below this count as zero in [`is_zero`].
pub const ZERO_TOL: f64 = 1e-10;

const PRIMES: [u64; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

/// A box in variable space together with a point count and seed.
///
/// Points are a Halton sequence with a seeded Cranley-Patterson shift, so a
/// given `(box, count, seed)` always produces the same points.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBox {
    pub ranges: Vec<(Var, f64, f64)>,
    pub count: usize,
    pub seed: u64,
}

impl SampleBox {
    pub fn new(ranges: Vec<(Var, f64, f64)>, count: usize, seed: u64) -> Self {
        SampleBox { ranges, count, seed }
    }

    /// Every base and fibre coordinate ranging over `[lo, hi]`.
    pub fn chart(n: usize, k: usize, lo: f64, hi: f64, count: usize, seed: u64) -> Self {
        let ranges = (0..n).map(|i| (Var::X(i), lo, hi)).chain((0..k).map(|a| (Var::Y(a), lo, hi))).collect();
        SampleBox { ranges, count, seed }
    }

    /// Only the base coordinates.
    pub fn base(n: usize, lo: f64, hi: f64, count: usize, seed: u64) -> Self {
        SampleBox::chart(n, 0, lo, hi, count, seed)
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = count;
        self
    }

    /// The unit-cube points before scaling into the box.
    pub fn unit_points(&self) -> Vec<Vec<f64>> {
        let dim = self.ranges.len();
        assert!(dim <= PRIMES.len(), "sample box dimension {dim} exceeds the supported Halton bases");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        (1..=self.count as u64)
            .map(|i| {
                PRIMES[..dim]
                    .iter()
                    .zip(&shift)
                    .map(|(&p, s)| (radical_inverse(i, p) + s).fract())
                    .collect()
            })
            .collect()
    }

    /// Sample environments, each extending `base` with one box point.
    pub fn points(&self, base: &Env) -> Vec<Env> {
        self.unit_points()
            .into_iter()
            .map(|t| {
                let mut env = base.clone();
                for ((var, lo, hi), t) in self.ranges.iter().zip(t) {
                    env.set(var, lo + (hi - lo) * t);
                }
                env
            })
            .collect()
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// Error raised by a sampled evaluation, carrying the offending point.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{source} at {}", format_point(point))]
pub struct SampleError {
    pub source: ExprError,
    pub point: std::collections::BTreeMap<String, f64>,
}

pub(crate) fn format_point(point: &std::collections::BTreeMap<String, f64>) -> String {
    let parts: Vec<String> = point.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("({})", parts.join(", "))
}

/// Largest `|e|` over the points, with the index of the point attaining it.
pub fn max_abs(e: &Expr, points: &[Env]) -> Result<(f64, Option<usize>), SampleError> {
    let mut best = (0.0_f64, None);
    for (i, env) in points.iter().enumerate() {
        let v = e.eval(env).map_err(|source| SampleError { source, point: env.bindings() })?.abs();
        if best.1.is_none() || v > best.0 {
            best = (v, Some(i));
        }
    }
    Ok(best)
}

/// True iff `e` folds to the constant zero, or `|e| <= 1e-10` at every sample
/// point. Domain errors at a sample point are returned, not swallowed.
pub fn is_zero(e: &Expr, sampler: &SampleBox, base: &Env) -> Result<bool, SampleError> {
    let folded = e.fold();
    if folded.is_structural_zero() {
        return Ok(true);
    }
    for env in sampler.points(base) {
        let v = folded.eval(&env).map_err(|source| SampleError { source, point: env.bindings() })?;
        if v.abs() > ZERO_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}
