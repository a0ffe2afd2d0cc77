//! Finite boxes `{0, .., L-1}^d` of the hypercubic lattice, bond and site
//! configurations on them, and the lattice shifts.
//!
//! Sites are numbered lexicographically with the first coordinate varying
//! fastest: `index = x_0 + x_1 L + ... + x_{d-1} L^{d-1}`.
//!
//! Bonds are identified by the pair (lower endpoint, direction) and numbered
//! direction-major: all bonds along axis 0 first, then axis 1, and so on.
//! Within one direction the order follows the lower endpoint's site index.
//! On a wrapped box every site is the lower endpoint of exactly one bond per
//! direction, so the bond index is `dir * L^d + site`. On a free box the sites
//! with `x_dir = L - 1` have no bond in that direction and are skipped.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of sites a box may have.
pub const MAX_SITES: usize = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Bond,
    Site,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Free,
    /// Periodic boundary; the box is a discrete torus.
    Wrapped,
}

/// Integer vector in Z^d. Used both for sites of a box and for directions.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        Site(coords.into())
    }

    pub fn zero(dim: usize) -> Self {
        Site(vec![0; dim])
    }

    /// Unit vector along `axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut v = vec![0; dim];
        v[axis] = 1;
        Site(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn l1(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).sum()
    }

    pub fn linf(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, k: i64) -> Site {
        Site(self.0.iter().map(|a| a * k).collect())
    }

    pub fn neg(&self) -> Site {
        self.scale(-1)
    }

    /// Comma-free text form for CSV cells: coordinates joined by `;`.
    pub fn csv_token(&self) -> String {
        self.0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
    }

    /// Parses the forms written by `Display` and `csv_token`.
    pub fn parse(s: &str) -> Result<Site> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        inner
            .split([',', ';'])
            .map(|c| {
                c.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::Format(format!("bad site coordinate {c:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Site)
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxSpec {
    dim: usize,
    side: usize,
    mode: Mode,
    boundary: Boundary,
}

/// Lattice neighbors of a site inside the box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighbors {
    /// In-box neighbors with the index of the connecting bond.
    pub sites: Vec<(Site, usize)>,
    /// Number of the 2d lattice directions leading out of a free box.
    pub exterior_degree: usize,
}

impl BoxSpec {
    pub fn new(dim: usize, side: usize, mode: Mode, boundary: Boundary) -> Result<Self> {
        if dim < 2 {
            return Err(Error::domain(format!("dimension must be >= 2, got {dim}")));
        }
        if side < 2 {
            return Err(Error::domain(format!("side must be >= 2, got {side}")));
        }
        let sites = (0..dim).try_fold(1usize, |acc, _| acc.checked_mul(side));
        match sites {
            Some(n) if n <= MAX_SITES => {}
            _ => {
                return Err(Error::domain(format!(
                    "box {side}^{dim} exceeds {MAX_SITES} sites"
                )))
            }
        }
        Ok(BoxSpec {
            dim,
            side,
            mode,
            boundary,
        })
    }

    /// Wrapped bond box, the default for stationary ensembles.
    pub fn torus(dim: usize, side: usize) -> Result<Self> {
        Self::new(dim, side, Mode::Bond, Boundary::Wrapped)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_wrapped(&self) -> bool {
        self.boundary == Boundary::Wrapped
    }

    pub fn num_sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// Bonds along one axis.
    pub fn bonds_per_direction(&self) -> usize {
        match self.boundary {
            Boundary::Wrapped => self.num_sites(),
            Boundary::Free => self.side.pow(self.dim as u32 - 1) * (self.side - 1),
        }
    }

    pub fn num_bonds(&self) -> usize {
        self.dim * self.bonds_per_direction()
    }

    /// Length of the state vector: bonds in bond mode, sites in site mode.
    pub fn num_states(&self) -> usize {
        match self.mode {
            Mode::Bond => self.num_bonds(),
            Mode::Site => self.num_sites(),
        }
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.side.pow(axis as u32)
    }

    #[inline]
    pub fn coord(&self, site: usize, axis: usize) -> usize {
        (site / self.stride(axis)) % self.side
    }

    pub fn contains(&self, x: &Site) -> bool {
        x.dim() == self.dim && x.0.iter().all(|&c| c >= 0 && (c as usize) < self.side)
    }

    pub fn index_of(&self, x: &Site) -> Result<usize> {
        if !self.contains(x) {
            return Err(Error::domain(format!("site {x} outside box {}^{}", self.side, self.dim)));
        }
        Ok(x.0
            .iter()
            .enumerate()
            .map(|(axis, &c)| c as usize * self.stride(axis))
            .sum())
    }

    pub fn site(&self, index: usize) -> Site {
        Site((0..self.dim).map(|a| self.coord(index, a) as i64).collect())
    }

    /// Reduces arbitrary integer coordinates modulo the side (torus embedding).
    pub fn wrap(&self, x: &Site) -> Site {
        let l = self.side as i64;
        Site(x.0.iter().map(|c| c.rem_euclid(l)).collect())
    }

    /// Index of `x` after wrapping onto the torus.
    pub fn wrapped_index(&self, x: &Site) -> usize {
        let l = self.side as i64;
        x.0.iter()
            .enumerate()
            .map(|(axis, c)| c.rem_euclid(l) as usize * self.stride(axis))
            .sum()
    }

    /// Representative of `index - origin` with coordinates in `(-L/2, L/2]` on a
    /// torus, or the plain difference on a free box.
    pub fn displacement(&self, origin: usize, index: usize) -> Site {
        let l = self.side as i64;
        Site(
            (0..self.dim)
                .map(|a| {
                    let diff = self.coord(index, a) as i64 - self.coord(origin, a) as i64;
                    if self.is_wrapped() {
                        let r = diff.rem_euclid(l);
                        if r > l / 2 {
                            r - l
                        } else {
                            r
                        }
                    } else {
                        diff
                    }
                })
                .collect(),
        )
    }

    /// Neighbor of `site` one step along `axis`, forward or backward; `None` if
    /// the step leaves a free box.
    #[inline]
    pub fn step(&self, site: usize, axis: usize, forward: bool) -> Option<usize> {
        let stride = self.stride(axis);
        let c = (site / stride) % self.side;
        if forward {
            if c + 1 < self.side {
                Some(site + stride)
            } else if self.is_wrapped() {
                Some(site + stride - self.side * stride)
            } else {
                None
            }
        } else if c > 0 {
            Some(site - stride)
        } else if self.is_wrapped() {
            Some(site + (self.side - 1) * stride)
        } else {
            None
        }
    }

    /// Index of the bond from `site` to `site + e_axis`, if that bond exists.
    #[inline]
    pub fn bond_index(&self, site: usize, axis: usize) -> Option<usize> {
        let base = axis * self.bonds_per_direction();
        match self.boundary {
            Boundary::Wrapped => Some(base + site),
            Boundary::Free => {
                let stride = self.stride(axis);
                let c = (site / stride) % self.side;
                if c + 1 >= self.side {
                    return None;
                }
                // rank among sites with x_axis < L-1: mixed radix with L-1 at `axis`
                let low = site % stride;
                let high = site / (stride * self.side);
                Some(base + low + stride * (c + (self.side - 1) * high))
            }
        }
    }

    /// Lower endpoint and axis of a bond.
    pub fn bond_endpoints(&self, bond: usize) -> (usize, usize, usize) {
        let per = self.bonds_per_direction();
        let axis = bond / per;
        let rank = bond % per;
        let lower = match self.boundary {
            Boundary::Wrapped => rank,
            Boundary::Free => {
                let stride = self.stride(axis);
                let low = rank % stride;
                let rest = rank / stride;
                let c = rest % (self.side - 1);
                let high = rest / (self.side - 1);
                low + stride * (c + self.side * high)
            }
        };
        let upper = self.step(lower, axis, true).expect("bond has an upper endpoint");
        (lower, upper, axis)
    }

    /// Lattice neighbors of `x` with connecting bond indices.
    pub fn neighbors(&self, x: &Site) -> Result<Neighbors> {
        let i = self.index_of(x)?;
        let mut sites = Vec::with_capacity(2 * self.dim);
        let mut exterior_degree = 0;
        for axis in 0..self.dim {
            for forward in [true, false] {
                match self.step(i, axis, forward) {
                    Some(j) => {
                        let bond = if forward {
                            self.bond_index(i, axis)
                        } else {
                            self.bond_index(j, axis)
                        }
                        .expect("in-box step has a bond");
                        sites.push((self.site(j), bond));
                    }
                    None => exterior_degree += 1,
                }
            }
        }
        Ok(Neighbors {
            sites,
            exterior_degree,
        })
    }

    /// Bond joining `site` and its neighbor one step along `axis`.
    #[inline]
    pub(crate) fn bond_between(&self, site: usize, axis: usize, forward: bool) -> Option<usize> {
        if forward {
            self.bond_index(site, axis)
        } else {
            self.step(site, axis, false)
                .and_then(|j| self.bond_index(j, axis))
        }
    }
}

/// Fixed-length packed bit vector.
#[derive(Clone, PartialEq, Eq, Hash)]
pub(crate) struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    pub(crate) fn zeros(len: usize) -> Self {
        Bits {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub(crate) fn ones(len: usize) -> Self {
        let mut b = Bits {
            words: vec![u64::MAX; len.div_ceil(64)],
            len,
        };
        b.clear_tail();
        b
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i & 63);
        if v {
            self.words[i >> 6] |= mask;
        } else {
            self.words[i >> 6] &= !mask;
        }
    }

    pub(crate) fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn to_le_bytes(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        self.words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(nbytes)
            .collect()
    }

    fn from_le_bytes(bytes: &[u8], len: usize) -> Self {
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        let mut bits = Bits { words, len };
        bits.clear_tail();
        bits
    }
}

/// Open/closed states of every bond (bond mode) or site (site mode) of a box.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    spec: BoxSpec,
    states: Bits,
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Configuration")
            .field("box", &self.spec)
            .field("open", &self.count_open())
            .finish()
    }
}

const MAGIC: &[u8; 4] = b"PCFG";
const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 1 + 4 + 1 + 1 + 8;

impl Configuration {
    pub fn closed(spec: BoxSpec) -> Self {
        Configuration {
            spec,
            states: Bits::zeros(spec.num_states()),
        }
    }

    pub fn open(spec: BoxSpec) -> Self {
        Configuration {
            spec,
            states: Bits::ones(spec.num_states()),
        }
    }

    /// Builds a configuration from one boolean per state.
    pub fn from_states(spec: BoxSpec, states: &[bool]) -> Result<Self> {
        if states.len() != spec.num_states() {
            return Err(Error::domain(format!(
                "expected {} states, got {}",
                spec.num_states(),
                states.len()
            )));
        }
        let mut c = Self::closed(spec);
        for (i, &s) in states.iter().enumerate() {
            c.states.set(i, s);
        }
        Ok(c)
    }

    pub fn spec(&self) -> &BoxSpec {
        &self.spec
    }

    pub fn num_states(&self) -> usize {
        self.states.len
    }

    #[inline]
    pub fn state(&self, i: usize) -> bool {
        self.states.get(i)
    }

    #[inline]
    pub fn set_state(&mut self, i: usize, open: bool) {
        self.states.set(i, open)
    }

    pub fn count_open(&self) -> usize {
        self.states.count_ones()
    }

    /// Whether a site can belong to an open cluster: always in bond mode,
    /// the site state in site mode.
    #[inline]
    pub fn site_open(&self, site: usize) -> bool {
        match self.spec.mode {
            Mode::Bond => true,
            Mode::Site => self.states.get(site),
        }
    }

    /// A bond is open if its state is open (bond mode) or if both endpoint
    /// sites are open (site mode).
    #[inline]
    pub fn bond_open(&self, bond: usize) -> bool {
        match self.spec.mode {
            Mode::Bond => self.states.get(bond),
            Mode::Site => {
                let (u, v, _) = self.spec.bond_endpoints(bond);
                self.states.get(u) && self.states.get(v)
            }
        }
    }

    /// Whether the lattice edge from `site` one step along `axis` is open.
    #[inline]
    pub fn edge_open(&self, site: usize, axis: usize, forward: bool) -> bool {
        match self.spec.mode {
            Mode::Bond => self
                .spec
                .bond_between(site, axis, forward)
                .is_some_and(|b| self.states.get(b)),
            Mode::Site => {
                self.states.get(site)
                    && self
                        .spec
                        .step(site, axis, forward)
                        .is_some_and(|j| self.states.get(j))
            }
        }
    }

    /// Calls `f` for every neighbor reachable from `site` through an open bond.
    #[inline]
    pub fn for_each_open_neighbor(&self, site: usize, mut f: impl FnMut(usize)) {
        for axis in 0..self.spec.dim {
            for forward in [true, false] {
                if let Some(j) = self.spec.step(site, axis, forward) {
                    if self.edge_open(site, axis, forward) {
                        f(j);
                    }
                }
            }
        }
    }

    pub fn open_bond_count(&self) -> usize {
        match self.spec.mode {
            Mode::Bond => self.count_open(),
            Mode::Site => (0..self.spec.num_bonds())
                .filter(|&b| self.bond_open(b))
                .count(),
        }
    }

    /// The shifted configuration `θ_x ω` with `(θ_x ω)(y) = ω(x + y)`.
    ///
    /// Only defined on a wrapped box, where the shift is a bijection.
    pub fn shift(&self, x: &Site) -> Result<Configuration> {
        if !self.spec.is_wrapped() {
            return Err(Error::Unsupported(
                "shift requires a wrapped (torus) box".into(),
            ));
        }
        if x.dim() != self.spec.dim {
            return Err(Error::domain(format!(
                "shift vector {x} has wrong dimension for {}-d box",
                self.spec.dim
            )));
        }
        let n = self.spec.num_sites();
        // translation of site indices: y -> y + x
        let offset = self.spec.wrapped_index(x);
        let translate = |y: usize| -> usize {
            let mut out = 0;
            for axis in 0..self.spec.dim {
                let stride = self.spec.stride(axis);
                let c = (self.spec.coord(y, axis) + self.spec.coord(offset, axis)) % self.spec.side;
                out += c * stride;
            }
            out
        };
        let mut out = Configuration::closed(self.spec);
        match self.spec.mode {
            Mode::Site => {
                for y in 0..n {
                    out.states.set(y, self.states.get(translate(y)));
                }
            }
            Mode::Bond => {
                for axis in 0..self.spec.dim {
                    let base = axis * n;
                    for y in 0..n {
                        out.states.set(base + y, self.states.get(base + translate(y)));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Serializes as a fixed header followed by the packed state bits.
    ///
    /// Layout (all integers little-endian):
    /// `"PCFG"`, version `u8`, `d: u8`, `L: u32`, mode `u8` (0 bond, 1 site),
    /// boundary `u8` (0 free, 1 wrapped), state count `u64`, then
    /// `ceil(count / 8)` bytes where state `i` is bit `i % 8` of byte `i / 8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.states.len.div_ceil(8));
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.push(self.spec.dim as u8);
        out.extend_from_slice(&(self.spec.side as u32).to_le_bytes());
        out.push(match self.spec.mode {
            Mode::Bond => 0,
            Mode::Site => 1,
        });
        out.push(match self.spec.boundary {
            Boundary::Free => 0,
            Boundary::Wrapped => 1,
        });
        out.extend_from_slice(&(self.states.len as u64).to_le_bytes());
        out.extend_from_slice(&self.states.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing configuration header".into()));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(Error::Format(format!("unknown format version {}", bytes[4])));
        }
        let dim = bytes[5] as usize;
        let side = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let mode = match bytes[10] {
            0 => Mode::Bond,
            1 => Mode::Site,
            m => return Err(Error::Format(format!("bad mode byte {m}"))),
        };
        let boundary = match bytes[11] {
            0 => Boundary::Free,
            1 => Boundary::Wrapped,
            b => return Err(Error::Format(format!("bad boundary byte {b}"))),
        };
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let spec = BoxSpec::new(dim, side, mode, boundary)?;
        if count != spec.num_states() {
            return Err(Error::Format(format!(
                "state count {count} does not match box ({})",
                spec.num_states()
            )));
        }
        let body = &bytes[HEADER_LEN..];
        if body.len() != count.div_ceil(8) {
            return Err(Error::Format(format!(
                "expected {} payload bytes, got {}",
                count.div_ceil(8),
                body.len()
            )));
        }
        Ok(Configuration {
            spec,
            states: Bits::from_le_bytes(body, count),
        })
    }
}
