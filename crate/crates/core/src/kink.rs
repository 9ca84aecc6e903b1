//! Kink states on the open chain.
//!
//! Unknowns are the energy shift `E` (ground energy `2 + E`) and the
//! coefficients `e(X)` of `Ψ = Σ e(X) |X Δ M>` for non-empty `X`; the gauge
//! `e(∅) = 1` is structural and never stored.  The map iterated is
//!
//! ```text
//! E'    = 2ε e({m, m+1})
//! e'(X) = [ -2ε Σ_{j ∈ ∂(X Δ M)} e(X Δ {j, j+1}) + E e(X) ] / (λ(X) - 2)
//! ```
//!
//! with flip targets outside the truncated space treated as zero.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::{check_boundary_fields, ChainGeometry, ConfigSpace, Sector, SiteSet};
use crate::error::{invalid, Result};
use crate::fixed_point::{self, random_direction, random_radius, ContractionCertificate, FixedPointMap};
use crate::oracle::{open_hamiltonian, Complex64, SectorBasis};

pub const DEFAULT_TOL: f64 = 1e-13;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_WEIGHT_K: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinkParams {
    pub sites: usize,
    pub down: usize,
    pub epsilon: f64,
    pub field_a: f64,
    pub field_b: f64,
    pub w_max: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub weight_k: f64,
}

impl KinkParams {
    pub fn new(sites: usize, down: usize, epsilon: f64) -> Self {
        KinkParams {
            sites,
            down,
            epsilon,
            field_a: 1.0,
            field_b: 1.0,
            w_max: 8,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            weight_k: DEFAULT_WEIGHT_K,
        }
    }

    pub fn with_w_max(mut self, w_max: usize) -> Self {
        self.w_max = w_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_boundary_fields(self.field_a, self.field_b)?;
        validate_iteration(self.epsilon, self.tol, self.max_iter, self.weight_k)
    }
}

pub(crate) fn validate_iteration(epsilon: f64, tol: f64, max_iter: usize, weight_k: f64) -> Result<()> {
    if !epsilon.is_finite() {
        return invalid("epsilon must be finite");
    }
    if tol.is_nan() || tol <= 0.0 {
        return invalid(format!("tol must be positive, got {tol}"));
    }
    if max_iter == 0 {
        return invalid("max_iter must be at least 1");
    }
    if weight_k.is_nan() || weight_k <= 0.0 || weight_k * epsilon.abs() >= 1.0 {
        return invalid(format!("need K > 0 and K|ε| < 1, got K = {weight_k}, ε = {epsilon}"));
    }
    Ok(())
}

/// `(K|ε|)^{-w}`; requires `0 < K|ε| < 1`.
pub(crate) fn weight_factor(weight_k: f64, epsilon: f64) -> Result<f64> {
    let base = weight_k * epsilon.abs();
    if !(base > 0.0 && base < 1.0) {
        return invalid(format!("weighted norm needs 0 < K|ε| < 1, got K|ε| = {base}"));
    }
    Ok(base)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinkCoefficients {
    /// `E`; the ground energy is `2 + E`.
    pub shift: f64,
    /// `e(X)` for entries `1..` of the space (entry 0 is `∅`).
    values: Vec<f64>,
}

impl KinkCoefficients {
    pub fn zeros(len: usize) -> Self {
        KinkCoefficients { shift: 0.0, values: vec![0.0; len.saturating_sub(1)] }
    }

    /// Coefficient of space entry `i`; `e(∅) = 1`.
    pub fn value(&self, entry: usize) -> f64 {
        if entry == 0 {
            1.0
        } else {
            self.values[entry - 1]
        }
    }

    pub fn set(&mut self, entry: usize, v: f64) {
        assert!(entry > 0, "e(∅) is fixed to 1");
        self.values[entry - 1] = v;
    }

    pub fn stored(&self) -> &[f64] {
        &self.values
    }
}

/// The kink fixed-point map on a truncated configuration space.
#[derive(Clone, Debug)]
pub struct KinkSystem {
    params: KinkParams,
    space: ConfigSpace,
    /// `λ(X) - 2` per entry.
    gaps: Vec<f64>,
    seed: usize,
}

impl KinkSystem {
    pub fn new(params: KinkParams) -> Result<Self> {
        params.validate()?;
        let sector = Sector::new(ChainGeometry::open(params.sites)?, params.down)?;
        let space = ConfigSpace::enumerate(sector, params.w_max);
        let gaps = space.entries().iter().map(|e| sector.lambda_unchecked(e.sites, params.field_a, params.field_b) - 2.0).collect();
        let m = params.down;
        let seed = space.index_of(SiteSet::from_sites([m, m + 1])).unwrap_or(usize::MAX);
        Ok(KinkSystem { params, space, gaps, seed })
    }

    pub fn params(&self) -> &KinkParams {
        &self.params
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    /// `λ(X) - 2` of entry `i`.
    pub fn gap(&self, i: usize) -> f64 {
        self.gaps[i]
    }

    pub fn zeros(&self) -> KinkCoefficients {
        KinkCoefficients::zeros(self.space.len())
    }

    /// `F(e)`.
    pub fn apply(&self, e: &KinkCoefficients) -> KinkCoefficients {
        let eps = self.params.epsilon;
        let shift = if self.seed == usize::MAX { 0.0 } else { 2.0 * eps * e.value(self.seed) };
        let values = (1..self.space.len())
            .into_par_iter()
            .map(|i| {
                let flips: f64 = self.space.links(i).iter().filter_map(|l| l.target).map(|t| e.value(t)).sum();
                (-2.0 * eps * flips + e.shift * e.value(i)) / self.gaps[i]
            })
            .collect();
        KinkCoefficients { shift, values }
    }

    /// `|E| + Σ (λ(X) - 2)|e(X)|`, or with `weighted` the variant
    /// `|E|(K|ε|)^{-2} + Σ (λ(X) - 2)|e(X)|(K|ε|)^{-w(X)}`.
    pub fn norm(&self, e: &KinkCoefficients, weighted: bool) -> Result<f64> {
        if !weighted {
            return Ok(self.plain_norm(e.shift, e.values.iter().copied()));
        }
        let base = weight_factor(self.params.weight_k, self.params.epsilon)?;
        let mut total = e.shift.abs() * base.powi(-2);
        for (i, v) in e.values.iter().enumerate() {
            let entry = self.space.entry(i + 1);
            total += self.gaps[i + 1] * v.abs() * base.powi(-(entry.w as i32));
        }
        Ok(total)
    }

    fn plain_norm(&self, shift: f64, values: impl Iterator<Item = f64>) -> f64 {
        shift.abs() + values.enumerate().map(|(i, v)| self.gaps[i + 1] * v.abs()).sum::<f64>()
    }

    pub fn certify_contraction(&self, delta: f64, samples: usize, seed: u64) -> ContractionCertificate {
        fixed_point::certify_contraction(self, delta, samples, seed)
    }

    /// Analytic Lipschitz bound `3ε + δ/4` on the `δ`-ball.
    pub fn contraction_bound(&self, delta: f64) -> f64 {
        3.0 * self.params.epsilon.abs() + delta / 4.0
    }

    pub fn solve(self) -> Result<KinkSolution> {
        let run = fixed_point::iterate(&self, self.params.tol, self.params.max_iter, |_, _| {})?;
        Ok(KinkSolution { coefficients: run.point, iterations: run.iterations, residual: run.residual, system: self })
    }
}

impl FixedPointMap for KinkSystem {
    type Point = KinkCoefficients;

    fn origin(&self) -> KinkCoefficients {
        self.zeros()
    }

    fn apply(&self, x: &KinkCoefficients) -> KinkCoefficients {
        KinkSystem::apply(self, x)
    }

    fn distance(&self, a: &KinkCoefficients, b: &KinkCoefficients) -> f64 {
        self.plain_norm(a.shift - b.shift, a.values.iter().zip(&b.values).map(|(x, y)| x - y))
    }

    fn sample_ball(&self, rng: &mut ChaCha8Rng, radius: f64) -> KinkCoefficients {
        let mut raw = vec![0.0; self.space.len()];
        random_direction(rng, &mut raw);
        let norm = self.plain_norm(raw[0], raw[1..].iter().copied());
        let scale = if norm > 0.0 { random_radius(rng, radius) / norm } else { 0.0 };
        KinkCoefficients { shift: raw[0] * scale, values: raw[1..].iter().map(|v| v * scale).collect() }
    }
}

/// Runs the kink iteration from `e = 0`.
pub fn solve_kink(params: KinkParams) -> Result<KinkSolution> {
    KinkSystem::new(params)?.solve()
}

/// `F` applied once.
pub fn apply_f_kink(system: &KinkSystem, e: &KinkCoefficients) -> KinkCoefficients {
    system.apply(e)
}

pub fn certify_contraction_kink(params: KinkParams, delta: f64, samples: usize, seed: u64) -> Result<ContractionCertificate> {
    Ok(KinkSystem::new(params)?.certify_contraction(delta, samples, seed))
}

#[derive(Clone, Debug)]
pub struct KinkSolution {
    pub system: KinkSystem,
    pub coefficients: KinkCoefficients,
    pub iterations: usize,
    pub residual: f64,
}

impl KinkSolution {
    /// Ground energy `2 + E`.
    pub fn energy(&self) -> f64 {
        2.0 + self.coefficients.shift
    }

    pub fn coefficient(&self, x: SiteSet) -> Option<f64> {
        self.system.space.index_of(x).map(|i| self.coefficients.value(i))
    }

    /// Smallest `δ` with `|e(X)| <= δ (K|ε|)^{w(X)} / (λ(X) - 2)` for every
    /// stored `X`.
    pub fn decay_constant(&self) -> Result<f64> {
        let p = &self.system.params;
        let base = weight_factor(p.weight_k, p.epsilon)?;
        let space = &self.system.space;
        Ok((1..space.len())
            .map(|i| self.system.gaps[i] * self.coefficients.value(i).abs() * base.powi(-(space.entry(i).w as i32)))
            .fold(0.0, f64::max))
    }

    /// `Ψ = Σ e(X) |X Δ M>` in the oracle's sector basis.
    pub fn eigenvector(&self, basis: &SectorBasis) -> Vec<f64> {
        let sector = self.system.space.sector();
        let mut psi = vec![0.0; basis.len()];
        for (i, entry) in self.system.space.entries().iter().enumerate() {
            let config = sector.configuration(entry.sites).bits();
            psi[basis.index_of(config).expect("configuration in sector")] += self.coefficients.value(i);
        }
        psi
    }

    /// `||HΨ - (2 + E)Ψ|| / ||Ψ||` against the exact open-chain Hamiltonian.
    pub fn eigen_residual(&self, cap: usize) -> Result<f64> {
        let p = &self.system.params;
        let basis = SectorBasis::new(p.sites, p.down, cap)?;
        let h = open_hamiltonian(&basis, p.epsilon, p.field_a, p.field_b)?;
        let psi: Vec<Complex64> = self.eigenvector(&basis).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        let hpsi = h.apply(&psi);
        let e = self.energy();
        let num: f64 = hpsi.iter().zip(&psi).map(|(a, b)| (a - b * e).norm_sqr()).sum();
        let den: f64 = psi.iter().map(|v| v.norm_sqr()).sum();
        Ok((num / den).sqrt())
    }

    pub fn to_dump(&self) -> KinkDump {
        let space = &self.system.space;
        KinkDump {
            params: self.system.params.clone(),
            energy: self.energy(),
            shift: self.coefficients.shift,
            iterations: self.iterations,
            residual: self.residual,
            coefficients: (1..space.len())
                .map(|i| CoefficientDump { sites: space.entry(i).sites.to_vec(), w: space.entry(i).w, value: self.coefficients.value(i) })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDump {
    pub sites: Vec<usize>,
    pub w: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinkDump {
    pub params: KinkParams,
    pub energy: f64,
    #[serde(rename = "E")]
    pub shift: f64,
    pub iterations: usize,
    pub residual: f64,
    pub coefficients: Vec<CoefficientDump>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::lipschitz_ratio;
    use crate::oracle::{open_spectrum, DEFAULT_SECTOR_CAP};

    fn system(sites: usize, down: usize, eps: f64, w_max: usize) -> KinkSystem {
        KinkSystem::new(KinkParams::new(sites, down, eps).with_w_max(w_max)).unwrap()
    }

    #[test]
    fn first_sweep_is_the_first_order_term() {
        let eps = 0.05;
        let sys = system(12, 6, eps, 6);
        let f0 = sys.apply(&sys.zeros());
        assert_eq!(f0.shift, 0.0);
        let seed = sys.space().index_of(SiteSet::from_sites([6, 7])).unwrap();
        assert_eq!(f0.value(seed), -eps / 2.0);
        for i in 1..sys.space().len() {
            if i != seed {
                assert_eq!(f0.value(i), 0.0);
            }
        }
        assert_eq!(sys.norm(&f0, false).unwrap(), 2.0 * eps);
        // (λ - 2) |e| (Kε)^{-1} = 4 (ε/2) / (Kε) = 2/K
        let weighted = sys.norm(&f0, true).unwrap();
        assert!((weighted - 2.0 / DEFAULT_WEIGHT_K).abs() < 1e-15, "{weighted}");
    }

    #[test]
    fn zero_coupling() {
        let sys = system(8, 4, 0.0, 4);
        assert_eq!(sys.norm(&sys.zeros(), false).unwrap(), 0.0);
        let mut e = sys.zeros();
        e.shift = 0.3;
        e.set(3, 0.2);
        let f = sys.apply(&e);
        assert_eq!(f.shift, 0.0);
        assert!((f.value(3) - 0.3 * 0.2 / sys.gap(3)).abs() < 1e-16);
        assert!(sys.norm(&e, true).is_err());

        let sol = sys.solve().unwrap();
        assert_eq!(sol.energy(), 2.0);
        assert_eq!(sol.iterations, 1);
        assert!(sol.coefficients.stored().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_oracle_on_small_chain() {
        let sol = solve_kink(KinkParams::new(8, 4, 0.05).with_w_max(12)).unwrap();
        let exact = open_spectrum(8, 4, 0.05, 1.0, 1.0, DEFAULT_SECTOR_CAP).unwrap()[0];
        assert!((sol.energy() - exact).abs() < 1e-12, "{} vs {exact}", sol.energy());
        assert!(sol.residual < DEFAULT_TOL);
        // fixed-point property
        let again = sol.system.apply(&sol.coefficients);
        assert!(sol.system.distance(&again, &sol.coefficients) < DEFAULT_TOL);
    }

    #[test]
    fn unequal_boundary_fields_match_oracle() {
        let mut p = KinkParams::new(9, 3, 0.04).with_w_max(14);
        p.field_a = 1.7;
        p.field_b = 2.5;
        let sol = solve_kink(p).unwrap();
        let exact = open_spectrum(9, 3, 0.04, 1.7, 2.5, DEFAULT_SECTOR_CAP).unwrap()[0];
        assert!((sol.energy() - exact).abs() < 1e-12);
    }

    #[test]
    fn leading_sign_structure() {
        let sol = solve_kink(KinkParams::new(10, 5, 0.03).with_w_max(6)).unwrap();
        assert!(sol.coefficient(SiteSet::from_sites([5, 6])).unwrap() < 0.0);
        assert!(sol.coefficients.shift < 0.0);
    }

    #[test]
    fn eigenvector_residual_shrinks_with_truncation() {
        let r: Vec<f64> = [2, 4, 6]
            .iter()
            .map(|&w| solve_kink(KinkParams::new(8, 4, 0.05).with_w_max(w)).unwrap().eigen_residual(DEFAULT_SECTOR_CAP).unwrap())
            .collect();
        assert!(r[1] < r[0] * 0.05 && r[2] < r[1] * 0.05, "{r:?}");
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = KinkParams::new(8, 4, 0.05);
        p.field_a = 0.5;
        assert!(KinkSystem::new(p).is_err());
        assert!(KinkSystem::new(KinkParams::new(8, 4, 0.2)).is_err());
        assert!(KinkSystem::new(KinkParams::new(8, 0, 0.05)).is_err());
        let mut p = KinkParams::new(8, 4, 0.05);
        p.tol = 0.0;
        assert!(KinkSystem::new(p).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let mut p = KinkParams::new(8, 4, 0.05);
        p.max_iter = 2;
        let err = solve_kink(p).unwrap_err();
        assert!(matches!(err, crate::Error::NonConvergence { iterations: 2, .. }));
    }

    #[test]
    fn contraction_without_energy_components() {
        let sys = system(10, 5, 0.0, 5);
        let mut a = sys.zeros();
        let mut b = sys.zeros();
        a.set(1, 0.01);
        b.set(2, -0.02);
        let ratio = lipschitz_ratio(&sys, &a, &b).unwrap();
        assert!(ratio <= 0.1 / 4.0);
        assert!(lipschitz_ratio(&sys, &a, &a).is_none());
    }

    #[test]
    fn sampled_points_stay_in_ball() {
        let sys = system(10, 5, 0.05, 5);
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        for _ in 0..20 {
            let p = sys.sample_ball(&mut rng, 0.1);
            assert!(sys.norm(&p, false).unwrap() < 0.1);
        }
    }

    #[test]
    fn dump_lists_every_stored_coefficient() {
        let sol = solve_kink(KinkParams::new(8, 4, 0.05).with_w_max(3)).unwrap();
        let dump = sol.to_dump();
        assert_eq!(dump.coefficients.len(), sol.system.space().len() - 1);
        let v = serde_json::to_value(&dump).unwrap();
        assert!(v.get("E").is_some() && v.get("energy").is_some());
    }
}
