//! Plain fixed-point iteration and empirical contraction certificates,
//! shared by the kink and droplet maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A map `F` on a normed coefficient space.
pub trait FixedPointMap {
    type Point: Clone;

    /// The starting iterate (the origin of the coefficient space).
    fn origin(&self) -> Self::Point;

    fn apply(&self, x: &Self::Point) -> Self::Point;

    /// Unweighted norm of `a - b`.
    fn distance(&self, a: &Self::Point, b: &Self::Point) -> f64;

    /// A point drawn from the open ball of the given radius about the origin.
    fn sample_ball(&self, rng: &mut ChaCha8Rng, radius: f64) -> Self::Point;
}

#[derive(Clone, Debug)]
pub struct Iteration<P> {
    pub point: P,
    pub iterations: usize,
    pub residual: f64,
}

/// Iterates `x <- F(x)` from the origin until `||x_{t+1} - x_t|| < tol`.
///
/// `observe` sees every iterate after it is produced.
pub fn iterate<M: FixedPointMap>(
    map: &M,
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(usize, &M::Point),
) -> Result<Iteration<M::Point>> {
    let mut x = map.origin();
    let mut residual = f64::INFINITY;
    for t in 1..=max_iter {
        let next = map.apply(&x);
        residual = map.distance(&next, &x);
        observe(t, &next);
        x = next;
        if !residual.is_finite() {
            return Err(Error::NonConvergence { iterations: t, residual });
        }
        if residual < tol {
            return Ok(Iteration { point: x, iterations: t, residual });
        }
    }
    Err(Error::NonConvergence { iterations: max_iter, residual })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    /// Largest observed `||F(e) - F(e')|| / ||e - e'||`.
    pub max_ratio: f64,
    /// Pairs that entered the maximum.
    pub pairs: usize,
    /// Degenerate pairs (`e = e'`) that were skipped.
    pub skipped: usize,
}

pub fn lipschitz_ratio<M: FixedPointMap>(map: &M, a: &M::Point, b: &M::Point) -> Option<f64> {
    let d = map.distance(a, b);
    if d == 0.0 {
        return None;
    }
    Some(map.distance(&map.apply(a), &map.apply(b)) / d)
}

/// Samples `samples` seeded pairs in the `delta`-ball and records the worst
/// Lipschitz ratio.
pub fn certify_contraction<M: FixedPointMap>(map: &M, delta: f64, samples: usize, seed: u64) -> ContractionCertificate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cert = ContractionCertificate { max_ratio: 0.0, pairs: 0, skipped: 0 };
    for _ in 0..samples {
        let a = map.sample_ball(&mut rng, delta);
        let b = map.sample_ball(&mut rng, delta);
        match lipschitz_ratio(map, &a, &b) {
            Some(r) => {
                cert.max_ratio = cert.max_ratio.max(r);
                cert.pairs += 1;
            }
            None => cert.skipped += 1,
        }
    }
    cert
}

/// Uniform components in `[-1, 1]`.
pub(crate) fn random_direction(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.random_range(-1.0..=1.0);
    }
}

/// Uniform radius in `[0, radius)`.
pub(crate) fn random_radius(rng: &mut ChaCha8Rng, radius: f64) -> f64 {
    radius * rng.random_range(0.0..1.0)
}
