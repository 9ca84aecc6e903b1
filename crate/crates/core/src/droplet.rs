//! Droplet states on the periodic chain.
//!
//! A momentum eigenstate is written as
//!
//! ```text
//! Ψ_k = Σ_l e^{ikl} Σ_X e(X) |(X Δ M) + l>,     E(k) = 4 + Σ_{n=1}^{N} e_n e^{ikn}
//! ```
//!
//! The unknowns are the Fourier coefficients `e_n` and `e(X)` for every `X`
//! with more than two domain walls.  The remaining sets are fixed by the
//! gauge: `e(∅) = 1` and `e(M Δ (M + n)) = 0` for `n ≠ 0`.  The map is
//!
//! ```text
//! e_n'  = 2ε Σ_{j ∈ ∂(M - n)} e(M Δ (M - n) Δ {j, j+1})
//! e'(X) = -ε/(n(X) - 2) Σ_{j ∈ ∂(X Δ M)} e(X Δ {j, j+1})
//!         + 1/(2 (n(X) - 2)) Σ_s e_s e((X + s) Δ (M + s) Δ M)
//! ```
//!
//! The baseline 4 is the energy of a single block of down spins (two walls)
//! at `ε = 0`.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::{ChainGeometry, ConfigSpace, Sector, SiteSet};
use crate::error::{invalid, Error, Result};
use crate::fixed_point::{self, random_direction, random_radius, ContractionCertificate, FixedPointMap};
use crate::kink::{validate_iteration, weight_factor, CoefficientDump, DEFAULT_MAX_ITER, DEFAULT_TOL, DEFAULT_WEIGHT_K};
use crate::oracle::{build_periodic_blocks, periodic_hamiltonian, Complex64, SectorBasis};

/// Unperturbed droplet energy: two domain walls.
pub const BASELINE: f64 = 4.0;

/// Largest imaginary part tolerated in `E(k)`.
pub const IMAG_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropletParams {
    pub sites: usize,
    pub down: usize,
    pub epsilon: f64,
    pub w_max: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub weight_k: f64,
}

impl DropletParams {
    pub fn new(sites: usize, down: usize, epsilon: f64) -> Self {
        DropletParams { sites, down, epsilon, w_max: 7, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, weight_k: DEFAULT_WEIGHT_K }
    }

    pub fn with_w_max(mut self, w_max: usize) -> Self {
        self.w_max = w_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.down == 1 {
            return invalid("a single magnon has no expansion; use one_magnon_dispersion");
        }
        if self.down == 0 || self.down >= self.sites {
            return invalid(format!("need 0 < m < N, got m = {}, N = {}", self.down, self.sites));
        }
        validate_iteration(self.epsilon, self.tol, self.max_iter, self.weight_k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    /// `∅`, gauge value 1.
    Vacuum,
    /// `M Δ (M + n)`, gauge value 0.
    Translate,
    /// Stored unknown, index into the value vector.
    Free(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DropletCoefficients {
    /// `e_n` at index `n - 1`, `n = 1..=N`.
    pub fourier: Vec<f64>,
    /// Stored `e(X)` in the order of [`DropletSystem::free_entries`].
    values: Vec<f64>,
}

impl DropletCoefficients {
    pub fn stored(&self) -> &[f64] {
        &self.values
    }

    /// `e_n` for `n` taken mod `N`.
    pub fn e_n(&self, n: i64) -> f64 {
        let len = self.fourier.len() as i64;
        self.fourier[((n - 1).rem_euclid(len)) as usize]
    }
}

/// The droplet fixed-point map on a truncated configuration space.
#[derive(Clone, Debug)]
pub struct DropletSystem {
    params: DropletParams,
    space: ConfigSpace,
    roles: Vec<Role>,
    free: Vec<usize>,
    /// Entry of `M Δ (M - n)` at index `n - 1`, when it is in the space.
    fourier_source: Vec<Option<usize>>,
    /// `w_n = w(M Δ (M + n))`.
    fourier_weight: Vec<Option<usize>>,
    /// Per free slot: `(n - 1, entry of (X + n) Δ (M + n) Δ M)`.
    shifts: Vec<Vec<(usize, usize)>>,
}

impl DropletSystem {
    pub fn new(params: DropletParams) -> Result<Self> {
        params.validate()?;
        let geometry = ChainGeometry::periodic(params.sites)?;
        let sector = Sector::new(geometry, params.down)?;
        let space = ConfigSpace::enumerate(sector, params.w_max);
        let n_sites = params.sites as i64;

        let mut roles = Vec::with_capacity(space.len());
        let mut free = Vec::new();
        for (i, e) in space.entries().iter().enumerate() {
            roles.push(if e.sites.is_empty() {
                Role::Vacuum
            } else if e.walls == 2 {
                Role::Translate
            } else {
                free.push(i);
                Role::Free(free.len() - 1)
            });
        }

        let fourier_source: Vec<Option<usize>> = (1..=n_sites).map(|n| space.index_of(sector.translated_block(-n))).collect();
        let fourier_weight =
            (1..=n_sites).map(|n| space.w_of(sector.translated_block(n)).or_else(|| space.w_of(sector.translated_block(-n)))).collect();

        let reference = sector.reference();
        let shifts = free
            .iter()
            .map(|&i| {
                let x = space.entry(i).sites;
                (1..=n_sites)
                    .filter(|&s| fourier_source[(s - 1) as usize].is_some())
                    .filter_map(|s| {
                        let moved = geometry.rotate(x, s).sym_diff(geometry.rotate(reference, s)).sym_diff(reference);
                        let t = space.index_of(moved)?;
                        (roles[t] != Role::Translate).then_some(((s - 1) as usize, t))
                    })
                    .collect()
            })
            .collect();

        Ok(DropletSystem { params, space, roles, free, fourier_source, fourier_weight, shifts })
    }

    pub fn params(&self) -> &DropletParams {
        &self.params
    }

    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    /// Space indices of the stored unknowns `e(X)`.
    pub fn free_entries(&self) -> &[usize] {
        &self.free
    }

    /// Whether `e_n` is an unknown (its defining set lies in the space).
    pub fn fourier_active(&self, n: usize) -> bool {
        self.fourier_source[n - 1].is_some()
    }

    /// `w_n`, when `M Δ (M + n)` is in the space.
    pub fn fourier_weight(&self, n: usize) -> Option<usize> {
        self.fourier_weight[n - 1]
    }

    pub fn zeros(&self) -> DropletCoefficients {
        DropletCoefficients { fourier: vec![0.0; self.params.sites], values: vec![0.0; self.free.len()] }
    }

    /// Coefficient of space entry `i`, gauge entries included.
    pub fn value(&self, e: &DropletCoefficients, entry: usize) -> f64 {
        match self.roles[entry] {
            Role::Vacuum => 1.0,
            Role::Translate => 0.0,
            Role::Free(slot) => e.values[slot],
        }
    }

    /// `e(X)` for any set; zero outside the truncated space.
    pub fn coefficient(&self, e: &DropletCoefficients, x: SiteSet) -> f64 {
        self.space.index_of(x).map_or(0.0, |i| self.value(e, i))
    }

    pub fn set_free(&self, e: &mut DropletCoefficients, x: SiteSet, v: f64) -> Result<()> {
        match self.space.index_of(x).map(|i| self.roles[i]) {
            Some(Role::Free(slot)) => {
                e.values[slot] = v;
                Ok(())
            }
            _ => invalid(format!("{x} is not a stored unknown")),
        }
    }

    fn flip_sum(&self, e: &DropletCoefficients, entry: usize) -> f64 {
        self.space.links(entry).iter().filter_map(|l| l.target).map(|t| self.value(e, t)).sum()
    }

    /// `F(e)`.
    pub fn apply(&self, e: &DropletCoefficients) -> DropletCoefficients {
        let eps = self.params.epsilon;
        let fourier = self.fourier_source.iter().map(|src| src.map_or(0.0, |i| 2.0 * eps * self.flip_sum(e, i))).collect();
        let values = self
            .free
            .par_iter()
            .zip(&self.shifts)
            .map(|(&i, shifts)| {
                let excess = self.space.entry(i).walls as f64 - 2.0;
                let shifted: f64 = shifts.iter().filter(|(s, _)| e.fourier[*s] != 0.0).map(|&(s, t)| e.fourier[s] * self.value(e, t)).sum();
                (-eps * self.flip_sum(e, i) + 0.5 * shifted) / excess
            })
            .collect();
        DropletCoefficients { fourier, values }
    }

    fn plain_norm(&self, fourier: impl Iterator<Item = f64>, values: impl Iterator<Item = f64>) -> f64 {
        let head: f64 = fourier.map(f64::abs).sum();
        let tail: f64 = values.zip(&self.free).map(|(v, &i)| (self.space.entry(i).walls as f64 - 2.0) * v.abs()).sum();
        head + 2.0 * tail
    }

    /// `Σ |e_n| + 2 Σ (n(X) - 2)|e(X)|`, or with `weighted` the variant with
    /// factors `(K|ε|)^{-w_n}` and `(K|ε|)^{-w(X)}`.
    pub fn norm(&self, e: &DropletCoefficients, weighted: bool) -> Result<f64> {
        if !weighted {
            return Ok(self.plain_norm(e.fourier.iter().copied(), e.values.iter().copied()));
        }
        let base = weight_factor(self.params.weight_k, self.params.epsilon)?;
        let mut total = 0.0;
        for (n, v) in e.fourier.iter().enumerate() {
            if *v != 0.0 {
                let w = self.fourier_weight[n].ok_or_else(|| Error::InvalidParameter(format!("e_{} has no weight", n + 1)))?;
                total += v.abs() * base.powi(-(w as i32));
            }
        }
        for (v, &i) in e.values.iter().zip(&self.free) {
            let entry = self.space.entry(i);
            total += 2.0 * (entry.walls as f64 - 2.0) * v.abs() * base.powi(-(entry.w as i32));
        }
        Ok(total)
    }

    pub fn certify_contraction(&self, delta: f64, samples: usize, seed: u64) -> ContractionCertificate {
        fixed_point::certify_contraction(self, delta, samples, seed)
    }

    /// Analytic Lipschitz bound `4ε + δ` on the `δ`-ball.
    pub fn contraction_bound(&self, delta: f64) -> f64 {
        4.0 * self.params.epsilon.abs() + delta
    }

    pub fn solve(self) -> Result<DropletSolution> {
        self.solve_observed(|_, _| {})
    }

    /// As [`DropletSystem::solve`], handing every iterate to `observe`.
    pub fn solve_observed(self, observe: impl FnMut(usize, &DropletCoefficients)) -> Result<DropletSolution> {
        let run = fixed_point::iterate(&self, self.params.tol, self.params.max_iter, observe)?;
        Ok(DropletSolution { coefficients: run.point, iterations: run.iterations, residual: run.residual, system: self })
    }
}

impl FixedPointMap for DropletSystem {
    type Point = DropletCoefficients;

    fn origin(&self) -> DropletCoefficients {
        self.zeros()
    }

    fn apply(&self, x: &DropletCoefficients) -> DropletCoefficients {
        DropletSystem::apply(self, x)
    }

    fn distance(&self, a: &DropletCoefficients, b: &DropletCoefficients) -> f64 {
        self.plain_norm(a.fourier.iter().zip(&b.fourier).map(|(x, y)| x - y), a.values.iter().zip(&b.values).map(|(x, y)| x - y))
    }

    fn sample_ball(&self, rng: &mut ChaCha8Rng, radius: f64) -> DropletCoefficients {
        let mut fourier = vec![0.0; self.params.sites];
        let mut values = vec![0.0; self.free.len()];
        random_direction(rng, &mut fourier);
        random_direction(rng, &mut values);
        for (n, v) in fourier.iter_mut().enumerate() {
            if self.fourier_source[n].is_none() {
                *v = 0.0;
            }
        }
        let norm = self.plain_norm(fourier.iter().copied(), values.iter().copied());
        let scale = if norm > 0.0 { random_radius(rng, radius) / norm } else { 0.0 };
        fourier.iter_mut().chain(values.iter_mut()).for_each(|v| *v *= scale);
        DropletCoefficients { fourier, values }
    }
}

pub fn solve_droplet(params: DropletParams) -> Result<DropletSolution> {
    DropletSystem::new(params)?.solve()
}

pub fn apply_f_droplet(system: &DropletSystem, e: &DropletCoefficients) -> DropletCoefficients {
    system.apply(e)
}

#[derive(Clone, Debug)]
pub struct DropletSolution {
    pub system: DropletSystem,
    pub coefficients: DropletCoefficients,
    pub iterations: usize,
    pub residual: f64,
}

impl DropletSolution {
    pub fn dispersion(&self) -> Result<DispersionResult> {
        DispersionResult::from_fourier(self.coefficients.fourier.clone())
    }

    /// Smallest `δ` with `|e(X)| <= δ (K|ε|)^{w(X)} / (n(X) - 2)` and
    /// `|e_n| <= δ (K|ε|)^{w_n}` over everything stored.
    pub fn decay_constant(&self) -> Result<f64> {
        let sys = &self.system;
        let base = weight_factor(sys.params.weight_k, sys.params.epsilon)?;
        let mut worst: f64 = 0.0;
        for (n, v) in self.coefficients.fourier.iter().enumerate() {
            if let Some(w) = sys.fourier_weight[n] {
                worst = worst.max(v.abs() * base.powi(-(w as i32)));
            } else if *v != 0.0 {
                return invalid(format!("e_{} is nonzero but has no weight", n + 1));
            }
        }
        for (v, &i) in self.coefficients.values.iter().zip(&sys.free) {
            let entry = sys.space.entry(i);
            worst = worst.max((entry.walls as f64 - 2.0) * v.abs() * base.powi(-(entry.w as i32)));
        }
        Ok(worst)
    }

    /// `Ψ_k` for `k = 2π k_index / N` in the oracle's sector basis
    /// (unnormalized).
    pub fn eigenvector(&self, k_index: usize, cap: usize) -> Result<(SectorBasis, Vec<Complex64>)> {
        let sys = &self.system;
        let p = &sys.params;
        let basis = SectorBasis::new(p.sites, p.down, cap)?;
        let psi = assemble(sys, &self.coefficients, &basis, k_index);
        Ok((basis, psi))
    }

    /// `||HΨ_k - E(k)Ψ_k|| / ||Ψ_k||` against the exact ring Hamiltonian.
    pub fn eigen_residual(&self, k_index: usize, cap: usize) -> Result<f64> {
        let (basis, psi) = self.eigenvector(k_index, cap)?;
        let h = periodic_hamiltonian(&basis, self.system.params.epsilon);
        let energy = self.dispersion()?.samples[k_index % basis.sites()].energy;
        Ok(relative_residual(&h.apply(&psi), &psi, energy))
    }

    pub fn to_dump(&self) -> Result<DropletDump> {
        let sys = &self.system;
        Ok(DropletDump {
            params: sys.params.clone(),
            baseline: BASELINE,
            e_n: self.coefficients.fourier.clone(),
            coefficients: sys
                .free
                .iter()
                .zip(&self.coefficients.values)
                .map(|(&i, &value)| CoefficientDump { sites: sys.space.entry(i).sites.to_vec(), w: sys.space.entry(i).w, value })
                .collect(),
            iterations: self.iterations,
            residual: self.residual,
        })
    }
}

pub(crate) fn relative_residual(h_psi: &[Complex64], psi: &[Complex64], energy: f64) -> f64 {
    let num: f64 = h_psi.iter().zip(psi).map(|(a, b)| (a - b * energy).norm_sqr()).sum();
    let den: f64 = psi.iter().map(|v| v.norm_sqr()).sum();
    (num / den).sqrt()
}

fn assemble(sys: &DropletSystem, e: &DropletCoefficients, basis: &SectorBasis, k_index: usize) -> Vec<Complex64> {
    let n = sys.params.sites;
    let k = 2.0 * PI * k_index as f64 / n as f64;
    let sector = sys.space.sector();
    let geometry = sector.geometry();
    let mut psi = vec![Complex64::new(0.0, 0.0); basis.len()];
    for (i, entry) in sys.space.entries().iter().enumerate() {
        let amp = sys.value(e, i);
        if amp == 0.0 {
            continue;
        }
        let config = sector.configuration(entry.sites);
        for l in 1..=n as i64 {
            let state = geometry.rotate(config, l).bits();
            let idx = basis.index_of(state).expect("translated configuration in sector");
            psi[idx] += Complex64::from_polar(amp, k * l as f64);
        }
    }
    psi
}

/// `Ψ_k` assembled from the given coefficients.
pub fn assemble_eigenvector(system: &DropletSystem, e: &DropletCoefficients, k_index: usize, cap: usize) -> Result<Vec<Complex64>> {
    let p = &system.params;
    let basis = SectorBasis::new(p.sites, p.down, cap)?;
    Ok(assemble(system, e, &basis, k_index))
}

/// One-site translation to the right applied to a sector vector.
pub fn translate_vector(basis: &SectorBasis, psi: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
    for (i, &s) in basis.states().iter().enumerate() {
        out[basis.index_of(basis.shift(s, 1)).unwrap()] = psi[i];
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionSample {
    pub k_index: usize,
    pub k: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionResult {
    pub baseline: f64,
    /// `e_n` at index `n - 1`.
    pub fourier: Vec<f64>,
    pub samples: Vec<DispersionSample>,
    pub bandwidth: f64,
    /// Largest `|Im E(k)|` seen on the grid.
    pub max_imag: f64,
}

impl DispersionResult {
    /// Evaluates `E(k) = 4 + Σ e_n e^{ikn}` on the grid `k = 2πj/N`.
    pub fn from_fourier(fourier: Vec<f64>) -> Result<Self> {
        let n = fourier.len();
        let mut samples = Vec::with_capacity(n);
        let mut max_imag: f64 = 0.0;
        for j in 0..n {
            let k = 2.0 * PI * j as f64 / n as f64;
            let value = evaluate(&fourier, k);
            if value.im.abs() > IMAG_FLOOR {
                return Err(Error::ComplexLeak { k_index: j, imag: value.im });
            }
            max_imag = max_imag.max(value.im.abs());
            samples.push(DispersionSample { k_index: j, k, energy: value.re });
        }
        let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.energy), hi.max(s.energy)));
        Ok(DispersionResult { baseline: BASELINE, fourier, samples, bandwidth: hi - lo, max_imag })
    }

    /// `E(k)` at an arbitrary momentum.
    pub fn evaluate(&self, k: f64) -> Complex64 {
        evaluate(&self.fourier, k)
    }

    pub fn energies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.energy).collect()
    }
}

fn evaluate(fourier: &[f64], k: f64) -> Complex64 {
    let mut acc = Complex64::new(BASELINE, 0.0);
    for (i, &c) in fourier.iter().enumerate() {
        if c != 0.0 {
            acc += Complex64::from_polar(c, k * (i + 1) as f64);
        }
    }
    acc
}

/// Exact single-magnon band, read off the one-dimensional momentum blocks.
pub fn one_magnon_dispersion(sites: usize, epsilon: f64, cap: usize) -> Result<DispersionResult> {
    let blocks = build_periodic_blocks(sites, 1, epsilon, cap, false)?;
    let n = sites as f64;
    let fourier = (1..=sites)
        .map(|s| blocks.iter().map(|b| (b.eigenvalues[0] - BASELINE) * (-b.momentum(sites) * s as f64).cos()).sum::<f64>() / n)
        .collect();
    DispersionResult::from_fourier(fourier)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropletDump {
    pub params: DropletParams,
    pub baseline: f64,
    pub e_n: Vec<f64>,
    pub coefficients: Vec<CoefficientDump>,
    pub iterations: usize,
    pub residual: f64,
}
