//! Exact diagonalization in a fixed down-spin sector.
//!
//! Basis states are raw bit masks (bit `i - 1` set means site `i` is down);
//! this module deliberately does not go through the configuration algebra
//! used by the expansion solvers, so the two paths stay independent.
//!
//! Sign convention: the nearest-neighbour exchange connects two states that
//! differ by swapping an anti-parallel pair with matrix element `+2ε`.  This
//! is the convention of the coefficient equations the solvers iterate.  The
//! Pauli-matrix form `-ε(σˣσˣ + σʸσʸ)` gives `-2ε` instead; on the open
//! chain and on even rings the two are unitarily equivalent (a sublattice
//! spin rotation), which the tests check against an explicit Pauli build.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_space::check_boundary_fields;
use crate::error::{invalid, Error, Result};

pub type Complex64 = Complex<f64>;

pub const DEFAULT_SECTOR_CAP: usize = 200_000;

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// All configurations with `down` down spins on `sites` sites, in ascending
/// order of their bit masks.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    sites: usize,
    down: usize,
    states: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl SectorBasis {
    pub fn new(sites: usize, down: usize, cap: usize) -> Result<Self> {
        if !(2..=64).contains(&sites) || down == 0 || down >= sites {
            return invalid(format!("need 2 <= N <= 64 and 0 < m < N, got N = {sites}, m = {down}"));
        }
        let dim = binomial(sites, down);
        if dim > cap {
            return Err(Error::SectorTooLarge { dim, cap });
        }
        let mut states = Vec::with_capacity(dim);
        let limit = if sites == 64 { u64::MAX } else { (1u64 << sites) - 1 };
        // Gosper's hack: next larger integer with the same popcount.
        let mut s: u64 = (1u64 << down) - 1;
        loop {
            states.push(s);
            if states.len() == dim {
                break;
            }
            let c = s & s.wrapping_neg();
            let r = s + c;
            s = (((r ^ s) >> 2) / c) | r;
            debug_assert!(s <= limit);
        }
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(SectorBasis { sites, down, states, index })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn down(&self) -> usize {
        self.down
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn index_of(&self, state: u64) -> Option<usize> {
        self.index.get(&state).copied()
    }

    /// Cyclic shift of a state by `l` sites to the right.
    pub fn shift(&self, state: u64, l: i64) -> u64 {
        let n = self.sites as u32;
        let r = l.rem_euclid(n as i64) as u32;
        if r == 0 {
            return state;
        }
        let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        ((state << r) | (state >> (n - r))) & mask
    }
}

fn bond_pairs(sites: usize, periodic: bool) -> Vec<(u32, u32)> {
    let n = sites as u32;
    let mut pairs: Vec<(u32, u32)> = (0..n - 1).map(|j| (j, j + 1)).collect();
    if periodic {
        pairs.push((n - 1, 0));
    }
    pairs
}

/// Sector Hamiltonian in sparse row form.
#[derive(Clone, Debug)]
pub struct SparseHamiltonian {
    pub diagonal: Vec<f64>,
    /// For each basis index, the states reached by one exchange and the
    /// matrix element.
    pub hops: Vec<Vec<(usize, f64)>>,
}

impl SparseHamiltonian {
    fn build(basis: &SectorBasis, epsilon: f64, periodic: bool, boundary: impl Fn(u64) -> f64) -> Self {
        let pairs = bond_pairs(basis.sites, periodic);
        let mut diagonal = Vec::with_capacity(basis.len());
        let mut hops = Vec::with_capacity(basis.len());
        for &s in basis.states() {
            let mut walls = 0usize;
            let mut row = Vec::new();
            for &(a, b) in &pairs {
                if (s >> a & 1) != (s >> b & 1) {
                    walls += 1;
                    if epsilon != 0.0 {
                        let t = s ^ (1 << a) ^ (1 << b);
                        row.push((basis.index_of(t).expect("exchange stays in sector"), 2.0 * epsilon));
                    }
                }
            }
            diagonal.push(2.0 * walls as f64 + boundary(s));
            hops.push(row);
        }
        SparseHamiltonian { diagonal, hops }
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim());
        (0..self.dim())
            .map(|i| {
                let mut acc = v[i] * self.diagonal[i];
                for &(j, h) in &self.hops[i] {
                    acc += v[j] * h;
                }
                acc
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diagonal));
        for (i, row) in self.hops.iter().enumerate() {
            for &(j, v) in row {
                h[(i, j)] += v;
            }
        }
        h
    }
}

/// Open chain with boundary fields: `2A` when site 1 is up, `2B` when site
/// `N` is down.
pub fn open_hamiltonian(basis: &SectorBasis, epsilon: f64, a: f64, b: f64) -> Result<SparseHamiltonian> {
    check_boundary_fields(a, b)?;
    let last = basis.sites - 1;
    Ok(SparseHamiltonian::build(basis, epsilon, false, |s| {
        let mut e = 0.0;
        if s & 1 == 0 {
            e += 2.0 * a;
        }
        if s >> last & 1 == 1 {
            e += 2.0 * b;
        }
        e
    }))
}

pub fn periodic_hamiltonian(basis: &SectorBasis, epsilon: f64) -> SparseHamiltonian {
    SparseHamiltonian::build(basis, epsilon, true, |_| 0.0)
}

pub fn build_open_hamiltonian(sites: usize, down: usize, epsilon: f64, a: f64, b: f64, cap: usize) -> Result<DMatrix<f64>> {
    let basis = SectorBasis::new(sites, down, cap)?;
    Ok(open_hamiltonian(&basis, epsilon, a, b)?.to_dense())
}

pub fn symmetric_spectrum(h: DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Full open-chain spectrum of the sector, ascending.
pub fn open_spectrum(sites: usize, down: usize, epsilon: f64, a: f64, b: f64, cap: usize) -> Result<Vec<f64>> {
    Ok(symmetric_spectrum(build_open_hamiltonian(sites, down, epsilon, a, b, cap)?))
}

/// Periodic sector spectrum from one dense diagonalization, ignoring
/// translation symmetry.
pub fn periodic_sector_spectrum(sites: usize, down: usize, epsilon: f64, cap: usize) -> Result<Vec<f64>> {
    let basis = SectorBasis::new(sites, down, cap)?;
    Ok(symmetric_spectrum(periodic_hamiltonian(&basis, epsilon).to_dense()))
}

/// One momentum block `k = 2π j / N` of the periodic Hamiltonian.
///
/// The block basis is `|r, k> ∝ Σ_l e^{ikl} T^l |r>`, so `T` acts on it as
/// `e^{-ik}`.
#[derive(Clone, Debug)]
pub struct SpectrumBlock {
    pub k_index: usize,
    pub representatives: Vec<u64>,
    pub orbit_sizes: Vec<usize>,
    pub matrix: DMatrix<Complex64>,
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors in the block basis, ordered like `eigenvalues`.
    pub eigenvectors: Option<DMatrix<Complex64>>,
}

impl SpectrumBlock {
    pub fn dim(&self) -> usize {
        self.representatives.len()
    }

    pub fn momentum(&self, sites: usize) -> f64 {
        2.0 * PI * self.k_index as f64 / sites as f64
    }
}

struct Orbits {
    reps: Vec<u64>,
    periods: Vec<usize>,
    /// For each basis state: (orbit index, d) with `state = T^d rep`.
    member_of: Vec<(usize, i64)>,
}

fn orbits(basis: &SectorBasis) -> Orbits {
    let n = basis.sites;
    let mut rep_index: HashMap<u64, usize> = HashMap::new();
    let mut reps = Vec::new();
    let mut periods = Vec::new();
    let mut member_of = Vec::with_capacity(basis.len());
    for &s in basis.states() {
        // smallest translate T^{-d} s
        let (rep, back) = (0..n as i64).map(|d| (basis.shift(s, -d), d)).min().unwrap();
        let idx = *rep_index.entry(rep).or_insert_with(|| {
            let period = (1..=n).find(|&p| basis.shift(rep, p as i64) == rep).unwrap();
            reps.push(rep);
            periods.push(period);
            reps.len() - 1
        });
        member_of.push((idx, back));
    }
    Orbits { reps, periods, member_of }
}

/// Translation-symmetric block decomposition of the periodic sector
/// Hamiltonian; one block per `k_index` in `0..N`.
pub fn build_periodic_blocks(sites: usize, down: usize, epsilon: f64, cap: usize, with_vectors: bool) -> Result<Vec<SpectrumBlock>> {
    let basis = SectorBasis::new(sites, down, cap)?;
    let h = periodic_hamiltonian(&basis, epsilon);
    let orb = orbits(&basis);
    // orbit representatives appear in ascending order already because the
    // basis is ascending and each orbit is first met at its smallest member
    debug_assert!(orb.reps.windows(2).all(|w| w[0] < w[1]));

    let blocks = (0..sites)
        .into_par_iter()
        .map(|j| {
            let k = 2.0 * PI * j as f64 / sites as f64;
            let allowed: Vec<usize> = (0..orb.reps.len()).filter(|&r| (j * orb.periods[r]).is_multiple_of(sites)).collect();
            let mut position = vec![usize::MAX; orb.reps.len()];
            for (p, &r) in allowed.iter().enumerate() {
                position[r] = p;
            }
            let dim = allowed.len();
            let mut matrix = DMatrix::<Complex64>::zeros(dim, dim);
            for (col, &r) in allowed.iter().enumerate() {
                let i = basis.index_of(orb.reps[r]).unwrap();
                matrix[(col, col)] += Complex64::new(h.diagonal[i], 0.0);
                for &(t, amp) in &h.hops[i] {
                    let (r2, d) = orb.member_of[t];
                    let row = position[r2];
                    if row == usize::MAX {
                        continue;
                    }
                    let scale = (orb.periods[r] as f64 / orb.periods[r2] as f64).sqrt();
                    matrix[(row, col)] += Complex64::from_polar(amp * scale, -k * d as f64);
                }
            }
            let (eigenvalues, eigenvectors) = hermitian_eigen(matrix.clone(), with_vectors);
            SpectrumBlock {
                k_index: j,
                representatives: allowed.iter().map(|&r| orb.reps[r]).collect(),
                orbit_sizes: allowed.iter().map(|&r| orb.periods[r]).collect(),
                matrix,
                eigenvalues,
                eigenvectors,
            }
        })
        .collect();
    Ok(blocks)
}

fn hermitian_eigen(matrix: DMatrix<Complex64>, with_vectors: bool) -> (Vec<f64>, Option<DMatrix<Complex64>>) {
    let dim = matrix.nrows();
    if dim == 0 {
        return (Vec::new(), with_vectors.then(|| DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = with_vectors.then(|| DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]));
    (values, vectors)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub k_index: usize,
    pub k: f64,
    pub lowest: f64,
    pub second: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowestBand {
    pub rows: Vec<BandRow>,
    /// max - min of the per-k lowest eigenvalues.
    pub width: f64,
    /// Smallest gap between the lowest and second-lowest level over k.
    pub min_gap: Option<f64>,
}

pub fn lowest_band(blocks: &[SpectrumBlock]) -> LowestBand {
    let sites = blocks.len();
    let rows: Vec<BandRow> = blocks
        .iter()
        .filter(|b| !b.eigenvalues.is_empty())
        .map(|b| {
            let lowest = b.eigenvalues[0];
            let second = b.eigenvalues.get(1).copied();
            BandRow { k_index: b.k_index, k: b.momentum(sites), lowest, second, gap: second.map(|s| s - lowest) }
        })
        .collect();
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.lowest), hi.max(r.lowest)));
    let min_gap = rows.iter().filter_map(|r| r.gap).reduce(f64::min);
    LowestBand { rows, width: hi - lo, min_gap }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDump {
    pub k_index: usize,
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDump {
    #[serde(rename = "N")]
    pub sites: usize,
    pub m: usize,
    pub epsilon: f64,
    pub blocks: Vec<BlockDump>,
}

impl SpectrumDump {
    pub fn new(sites: usize, m: usize, epsilon: f64, blocks: &[SpectrumBlock]) -> Self {
        SpectrumDump {
            sites,
            m,
            epsilon,
            blocks: blocks.iter().map(|b| BlockDump { k_index: b.k_index, dim: b.dim(), eigenvalues: b.eigenvalues.clone() }).collect(),
        }
    }
}

/// Largest difference between the sorted sector spectra at `ε` and `-ε`.
pub fn sign_flip_defect(sites: usize, down: usize, epsilon: f64, cap: usize) -> Result<f64> {
    let plus = periodic_sector_spectrum(sites, down, epsilon, cap)?;
    let minus = periodic_sector_spectrum(sites, down, -epsilon, cap)?;
    Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_complete_and_sorted() {
        let basis = SectorBasis::new(8, 3, DEFAULT_SECTOR_CAP).unwrap();
        assert_eq!(basis.len(), 56);
        assert!(basis.states().windows(2).all(|w| w[0] < w[1]));
        assert!(basis.states().iter().all(|s| s.count_ones() == 3 && *s < 256));
        assert_eq!(binomial(20, 10), 184_756);
    }

    #[test]
    fn cap_is_enforced() {
        let err = SectorBasis::new(20, 10, 1000).unwrap_err();
        assert_eq!(err, Error::SectorTooLarge { dim: 184_756, cap: 1000 });
        assert!(build_periodic_blocks(20, 10, 0.1, 1000, false).is_err());
    }

    #[test]
    fn open_chain_unperturbed_ground_state_is_the_block() {
        let basis = SectorBasis::new(9, 4, DEFAULT_SECTOR_CAP).unwrap();
        let h = open_hamiltonian(&basis, 0.0, 1.0, 1.0).unwrap();
        let min = h.diagonal.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(min, 2.0);
        let at_min: Vec<u64> = basis.states().iter().zip(&h.diagonal).filter(|(_, &d)| d == 2.0).map(|(&s, _)| s).collect();
        assert_eq!(at_min, vec![0b1111]);
    }

    #[test]
    fn each_state_couples_once_per_wall() {
        let basis = SectorBasis::new(8, 3, DEFAULT_SECTOR_CAP).unwrap();
        let h = open_hamiltonian(&basis, 0.1, 1.0, 1.0).unwrap();
        for (i, &s) in basis.states().iter().enumerate() {
            let walls = (0..7).filter(|&j| (s >> j & 1) != (s >> (j + 1) & 1)).count();
            assert_eq!(h.hops[i].len(), walls);
        }
    }

    #[test]
    fn unperturbed_blocks() {
        let blocks = build_periodic_blocks(9, 3, 0.0, DEFAULT_SECTOR_CAP, false).unwrap();
        let total: usize = blocks.iter().map(|b| b.dim()).sum();
        assert_eq!(total, binomial(9, 3));
        let band = lowest_band(&blocks);
        assert_eq!(band.width, 0.0);
        for row in &band.rows {
            assert_eq!(row.lowest, 4.0);
            assert_eq!(row.gap, Some(4.0));
        }
    }

    #[test]
    fn blocks_are_hermitian_and_deterministic() {
        let a = build_periodic_blocks(9, 3, 0.2, DEFAULT_SECTOR_CAP, false).unwrap();
        let b = build_periodic_blocks(9, 3, 0.2, DEFAULT_SECTOR_CAP, false).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let herm = (&x.matrix - x.matrix.adjoint()).camax();
            assert!(herm < 1e-13, "block {} not Hermitian: {herm}", x.k_index);
            assert_eq!(x.eigenvalues, y.eigenvalues);
        }
    }

    #[test]
    fn block_union_matches_dense_spectrum() {
        for (n, m) in [(8, 2), (9, 3), (6, 3)] {
            let blocks = build_periodic_blocks(n, m, 0.1, DEFAULT_SECTOR_CAP, false).unwrap();
            let mut union: Vec<f64> = blocks.iter().flat_map(|b| b.eigenvalues.iter().copied()).collect();
            union.sort_by(f64::total_cmp);
            let dense = periodic_sector_spectrum(n, m, 0.1, DEFAULT_SECTOR_CAP).unwrap();
            assert_eq!(union.len(), dense.len());
            let worst = union.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-12, "N={n} m={m}: {worst}");
        }
    }

    #[test]
    fn one_magnon_blocks_are_cosines() {
        let n = 7;
        let eps = 0.1;
        let blocks = build_periodic_blocks(n, 1, eps, DEFAULT_SECTOR_CAP, false).unwrap();
        for b in &blocks {
            assert_eq!(b.dim(), 1);
            let expected = 4.0 + 4.0 * eps * b.momentum(n).cos();
            assert!((b.eigenvalues[0] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn sign_flip_symmetry_holds_on_even_rings_only() {
        assert!(sign_flip_defect(8, 3, 0.2, DEFAULT_SECTOR_CAP).unwrap() < 1e-12);
        assert!(sign_flip_defect(10, 2, 0.2, DEFAULT_SECTOR_CAP).unwrap() < 1e-12);
        // an odd ring is not bipartite: the one-magnon band 4 + 4ε cos k is
        // not symmetric under ε -> -ε when N is odd
        assert!(sign_flip_defect(7, 1, 0.2, DEFAULT_SECTOR_CAP).unwrap() > 1e-3);
    }

    #[test]
    fn open_spectrum_is_sign_symmetric() {
        let plus = open_spectrum(8, 4, 0.2, 1.0, 1.5, DEFAULT_SECTOR_CAP).unwrap();
        let minus = open_spectrum(8, 4, -0.2, 1.0, 1.5, DEFAULT_SECTOR_CAP).unwrap();
        let worst = plus.iter().zip(&minus).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-12);
    }

    #[test]
    fn dump_shape() {
        let blocks = build_periodic_blocks(6, 2, 0.1, DEFAULT_SECTOR_CAP, false).unwrap();
        let dump = SpectrumDump::new(6, 2, 0.1, &blocks);
        let v = serde_json::to_value(&dump).unwrap();
        assert_eq!(v["N"], 6);
        assert_eq!(v["blocks"].as_array().unwrap().len(), 6);
        assert!(v["blocks"][0]["eigenvalues"].is_array());
    }
}
