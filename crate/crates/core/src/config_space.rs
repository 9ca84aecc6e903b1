//! Configuration algebra for the spin chain.
//!
//! A configuration with `m` down spins is written as `X Δ M`, where
//! `M = {1, ..., m}` is the reference block and `X` records the sites that
//! differ from it.  Everything in the expansion solvers is indexed by such
//! modification sets `X`, so this module provides the set operations, the
//! domain-wall bookkeeping, and the breadth-first enumeration that assigns
//! every reachable `X` its perturbation order `w(X)`.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest supported chain; site sets are stored as 64-bit masks.
pub const MAX_SITES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Open,
    Periodic,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Open => f.write_str("open"),
            Topology::Periodic => f.write_str("periodic"),
        }
    }
}

/// A chain of `sites` sites labelled `1..=sites`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainGeometry {
    sites: usize,
    topology: Topology,
}

/// Nearest-neighbour bond `<j, j+1>`, identified by its left site `j`.
///
/// On a ring the bond `<N, 1>` is `Bond(N)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bond(pub usize);

/// A subset of chain sites, stored as a bit mask (site `i` is bit `i - 1`).
///
/// The mask is the canonical key: equal member sets always compare equal.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SiteSet(u64);

impl SiteSet {
    pub const EMPTY: SiteSet = SiteSet(0);

    pub fn from_bits(bits: u64) -> Self {
        SiteSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// The block `{1, ..., m}`.
    pub fn block(m: usize) -> Self {
        assert!(m <= MAX_SITES, "block size {m} exceeds {MAX_SITES}");
        if m == MAX_SITES {
            SiteSet(u64::MAX)
        } else {
            SiteSet((1u64 << m) - 1)
        }
    }

    /// Builds a set from 1-based site labels.
    ///
    /// Panics on a label outside `1..=64`.
    pub fn from_sites<I: IntoIterator<Item = usize>>(sites: I) -> Self {
        let mut bits = 0u64;
        for s in sites {
            assert!((1..=MAX_SITES).contains(&s), "site label {s} out of range");
            bits |= 1u64 << (s - 1);
        }
        SiteSet(bits)
    }

    pub fn contains(self, site: usize) -> bool {
        (1..=MAX_SITES).contains(&site) && self.0 >> (site - 1) & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Sites in exactly one of `self` and `other`.
    pub fn sym_diff(self, other: SiteSet) -> SiteSet {
        SiteSet(self.0 ^ other.0)
    }

    pub fn union(self, other: SiteSet) -> SiteSet {
        SiteSet(self.0 | other.0)
    }

    pub fn intersection(self, other: SiteSet) -> SiteSet {
        SiteSet(self.0 & other.0)
    }

    pub fn difference(self, other: SiteSet) -> SiteSet {
        SiteSet(self.0 & !other.0)
    }

    /// Member sites in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(tz + 1)
            }
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Debug for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, s) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str("}")
    }
}

/// `X Δ Y`.
pub fn sym_diff(x: SiteSet, y: SiteSet) -> SiteSet {
    x.sym_diff(y)
}

impl ChainGeometry {
    pub fn new(sites: usize, topology: Topology) -> Result<Self> {
        if sites < 2 {
            return invalid(format!("a chain needs at least 2 sites, got {sites}"));
        }
        if sites > MAX_SITES {
            return invalid(format!("at most {MAX_SITES} sites are supported, got {sites}"));
        }
        Ok(ChainGeometry { sites, topology })
    }

    pub fn open(sites: usize) -> Result<Self> {
        Self::new(sites, Topology::Open)
    }

    pub fn periodic(sites: usize) -> Result<Self> {
        Self::new(sites, Topology::Periodic)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn is_periodic(&self) -> bool {
        self.topology == Topology::Periodic
    }

    /// All bonds in ascending order of their left site.
    pub fn bonds(&self) -> impl Iterator<Item = Bond> {
        let last = match self.topology {
            Topology::Open => self.sites - 1,
            Topology::Periodic => self.sites,
        };
        (1..=last).map(Bond)
    }

    pub fn bond_sites(&self, bond: Bond) -> (usize, usize) {
        let j = bond.0;
        (j, if j == self.sites { 1 } else { j + 1 })
    }

    /// The two-site set `{j, j+1}` of a bond.
    pub fn pair(&self, bond: Bond) -> SiteSet {
        let (a, b) = self.bond_sites(bond);
        SiteSet::from_sites([a, b])
    }

    pub fn all_sites(&self) -> SiteSet {
        SiteSet::block(self.sites)
    }

    /// `X + l`: every member shifted `l` sites to the right, wrapped into `1..=N`.
    pub fn translate(&self, x: SiteSet, l: i64) -> Result<SiteSet> {
        if !self.is_periodic() {
            return invalid("translation is only defined on a periodic chain");
        }
        Ok(self.rotate(x, l))
    }

    pub(crate) fn rotate(&self, x: SiteSet, l: i64) -> SiteSet {
        let n = self.sites as i64;
        let r = l.rem_euclid(n) as u32;
        if r == 0 {
            return x;
        }
        let mask = self.all_sites().0;
        let bits = x.0 & mask;
        SiteSet(((bits << r) | (bits >> (self.sites as u32 - r))) & mask)
    }

    pub fn is_wall(&self, s: SiteSet, bond: Bond) -> bool {
        let (a, b) = self.bond_sites(bond);
        s.contains(a) != s.contains(b)
    }

    /// Bonds with exactly one endpoint in `s` (the domain walls of `|s>`).
    pub fn boundary_bonds(&self, s: SiteSet) -> Vec<Bond> {
        self.bonds().filter(|&b| self.is_wall(s, b)).collect()
    }

    pub fn wall_total(&self, s: SiteSet) -> usize {
        self.bonds().filter(|&b| self.is_wall(s, b)).count()
    }
}

/// The sector of configurations with `m` down spins on a given chain,
/// together with its reference block `M = {1, ..., m}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sector {
    geometry: ChainGeometry,
    down: usize,
    reference: SiteSet,
}

impl Sector {
    pub fn new(geometry: ChainGeometry, down: usize) -> Result<Self> {
        if down == 0 || down >= geometry.sites() {
            return invalid(format!("down-spin count must satisfy 0 < m < N, got m = {down}, N = {}", geometry.sites()));
        }
        Ok(Sector { geometry, down, reference: SiteSet::block(down) })
    }

    pub fn geometry(&self) -> ChainGeometry {
        self.geometry
    }

    pub fn down(&self) -> usize {
        self.down
    }

    /// `M = {1, ..., m}`.
    pub fn reference(&self) -> SiteSet {
        self.reference
    }

    /// The spin configuration `X Δ M` (the set of down spins).
    pub fn configuration(&self, x: SiteSet) -> SiteSet {
        x.sym_diff(self.reference)
    }

    /// Inverse of [`Sector::configuration`].
    pub fn modification(&self, config: SiteSet) -> SiteSet {
        config.sym_diff(self.reference)
    }

    /// The `X:m` constraint: `|X ∩ M| = |X ∩ Mᶜ|`.
    pub fn admits(&self, x: SiteSet) -> bool {
        x.difference(self.geometry.all_sites()).is_empty() && x.intersection(self.reference).len() == x.difference(self.reference).len()
    }

    /// `∂(X Δ M)`.
    pub fn walls(&self, x: SiteSet) -> Vec<Bond> {
        self.geometry.boundary_bonds(self.configuration(x))
    }

    /// `n(X) = |∂(X Δ M)|`; on the ring `2 n(X)` is the unperturbed energy.
    pub fn wall_count(&self, x: SiteSet) -> usize {
        self.geometry.wall_total(self.configuration(x))
    }

    /// Unperturbed open-chain energy `λ(X)`: two per domain wall, plus `2A`
    /// when site 1 is flipped up and `2B` when site `N` is flipped down.
    pub fn lambda_open(&self, x: SiteSet, a: f64, b: f64) -> Result<f64> {
        if self.geometry.is_periodic() {
            return invalid("lambda_open needs an open chain");
        }
        check_boundary_fields(a, b)?;
        Ok(self.lambda_unchecked(x, a, b))
    }

    pub(crate) fn lambda_unchecked(&self, x: SiteSet, a: f64, b: f64) -> f64 {
        let mut lambda = 2.0 * self.wall_count(x) as f64;
        if x.contains(1) {
            lambda += 2.0 * a;
        }
        if x.contains(self.geometry.sites()) {
            lambda += 2.0 * b;
        }
        lambda
    }

    /// One entry per wall of `X Δ M`: the bond and `X Δ {j, j+1}`.
    pub fn flip_neighbors(&self, x: SiteSet) -> Vec<(Bond, SiteSet)> {
        self.walls(x).into_iter().map(|b| (b, x.sym_diff(self.geometry.pair(b)))).collect()
    }

    /// `M Δ (M + n)`, the modification describing a translated block.
    pub fn translated_block(&self, n: i64) -> SiteSet {
        self.reference.sym_diff(self.geometry.rotate(self.reference, n))
    }
}

pub(crate) fn check_boundary_fields(a: f64, b: f64) -> Result<()> {
    if !(a >= 1.0 && b >= 1.0) || !a.is_finite() || !b.is_finite() {
        return invalid(format!("boundary fields must satisfy A >= 1 and B >= 1, got A = {a}, B = {b}"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Entry {
    pub sites: SiteSet,
    /// Perturbation order: BFS distance from `∅`.
    pub w: usize,
    /// Number of domain walls of `X Δ M`.
    pub walls: usize,
}

/// A flip move from one entry, with the target's index when it lies inside
/// the truncated space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Link {
    pub bond: Bond,
    pub target: Option<usize>,
}

/// Truncated configuration space: every `X:m` with `w(X) <= w_max`, in BFS
/// order.  Entry 0 is always `∅`.
///
/// Immutable after construction.
#[derive(Clone, Debug)]
pub struct ConfigSpace {
    sector: Sector,
    w_max: usize,
    entries: Vec<Entry>,
    links: Vec<Vec<Link>>,
    index: HashMap<SiteSet, usize>,
}

impl ConfigSpace {
    /// Breadth-first closure of `{∅}` under single-bond flips, truncated at
    /// depth `w_max`.  Neighbours are visited in ascending bond order, so
    /// the entry order is deterministic.
    pub fn enumerate(sector: Sector, w_max: usize) -> Self {
        let mut entries = vec![Entry { sites: SiteSet::EMPTY, w: 0, walls: sector.wall_count(SiteSet::EMPTY) }];
        let mut index = HashMap::from([(SiteSet::EMPTY, 0usize)]);
        let mut queue = VecDeque::from([0usize]);

        while let Some(i) = queue.pop_front() {
            let Entry { sites, w, .. } = entries[i];
            if w == w_max {
                continue;
            }
            for (_, next) in sector.flip_neighbors(sites) {
                if index.contains_key(&next) {
                    continue;
                }
                index.insert(next, entries.len());
                queue.push_back(entries.len());
                entries.push(Entry { sites: next, w: w + 1, walls: sector.wall_count(next) });
            }
        }

        let links = entries
            .iter()
            .map(|e| {
                sector.flip_neighbors(e.sites).into_iter().map(|(bond, next)| Link { bond, target: index.get(&next).copied() }).collect()
            })
            .collect();

        ConfigSpace { sector, w_max, entries, links, index }
    }

    pub fn sector(&self) -> &Sector {
        &self.sector
    }

    pub fn geometry(&self) -> ChainGeometry {
        self.sector.geometry()
    }

    pub fn down(&self) -> usize {
        self.sector.down()
    }

    pub fn w_max(&self) -> usize {
        self.w_max
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &Entry {
        &self.entries[i]
    }

    pub fn links(&self, i: usize) -> &[Link] {
        &self.links[i]
    }

    pub fn index_of(&self, x: SiteSet) -> Option<usize> {
        self.index.get(&x).copied()
    }

    pub fn get(&self, x: SiteSet) -> Option<&Entry> {
        self.index_of(x).map(|i| &self.entries[i])
    }

    pub fn w_of(&self, x: SiteSet) -> Option<usize> {
        self.get(x).map(|e| e.w)
    }

    /// Number of entries at each depth `0..=w_max`.
    pub fn depth_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.w_max + 1];
        for e in &self.entries {
            counts[e.w] += 1;
        }
        counts
    }

    pub fn to_dump(&self) -> ConfigSpaceDump {
        let g = self.geometry();
        ConfigSpaceDump {
            geometry: GeometryDump { sites: g.sites(), topology: g.topology() },
            m: self.down(),
            w_max: self.w_max,
            depth_counts: self.depth_counts(),
            entries: self.entries.iter().map(|e| EntryDump { sites: e.sites.to_vec(), w: e.w, walls: e.walls }).collect(),
        }
    }
}

/// Convenience wrapper: validate the sector and enumerate it.
pub fn enumerate(geometry: ChainGeometry, m: usize, w_max: usize) -> Result<ConfigSpace> {
    Ok(ConfigSpace::enumerate(Sector::new(geometry, m)?, w_max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryDump {
    pub sites: usize,
    pub topology: Topology,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryDump {
    pub sites: Vec<usize>,
    pub w: usize,
    pub walls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpaceDump {
    pub geometry: GeometryDump,
    pub m: usize,
    pub w_max: usize,
    pub depth_counts: Vec<usize>,
    pub entries: Vec<EntryDump>,
}
