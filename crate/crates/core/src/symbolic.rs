//! Itineraries with respect to `{R⁰_p, R¹_p}` and a brute-force cylinder
//! search that inverts them.
//!
//! The two-letter coding is many-to-one (a two-letter subshift cannot carry
//! entropy `log λ > log 2`), so inversion works on the refined coding that
//! also records, for every step, which translate of the lifted target
//! rectangle the lifted image lands in. That is the coding by the components
//! of `R_i ∩ f_p⁻¹ R_j`, and it is compatible with the conjugacy.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::torus::{dist, lift_near, PlanarPoint, TorusPoint};

/// Deepest window a double-precision search can certify.
pub const MAX_DEPTH: usize = 30;
const INITIAL_GRID: i64 = 256;
const MIN_HALF_WIDTH: f64 = 5e-14;
const BOX_BUDGET: usize = 4_000_000;
/// Discount on the boundary distance, which is only first-order accurate on the curved piece.
const TRUST_SAFETY: f64 = 0.5;
const REACH_GROWTH: f64 = 1.05;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Itinerary {
    n_back: usize,
    n_fwd: usize,
    symbols: Vec<u8>,
}

impl Itinerary {
    pub fn new(n_back: usize, n_fwd: usize, symbols: Vec<u8>) -> Result<Self> {
        if symbols.len() != n_back + n_fwd + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} symbols for window -{n_back}..{n_fwd}",
                symbols.len()
            )));
        }
        if symbols.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("symbols must be 0 or 1".into()));
        }
        Ok(Self { n_back, n_fwd, symbols })
    }

    pub fn n_back(&self) -> usize {
        self.n_back
    }

    pub fn n_fwd(&self) -> usize {
        self.n_fwd
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    /// `b_k` for `-n_back ≤ k ≤ n_fwd`.
    pub fn symbol(&self, k: isize) -> u8 {
        self.symbols[(k + self.n_back as isize) as usize]
    }

    /// The forward half `b_0, …, b_{n_fwd}`.
    pub fn forward(&self) -> &[u8] {
        &self.symbols[self.n_back..]
    }

    /// Largest `d` with `b_k = b'_k` for all `|k| ≤ d`, or `None` if `b_0` differs.
    pub fn matched_depth(&self, other: &Itinerary) -> Option<usize> {
        let reach = self.n_back.min(self.n_fwd).min(other.n_back).min(other.n_fwd);
        if self.symbol(0) != other.symbol(0) {
            return None;
        }
        let mut d = 0;
        while d < reach {
            let k = d as isize + 1;
            if self.symbol(k) != other.symbol(k) || self.symbol(-k) != other.symbol(-k) {
                break;
            }
            d += 1;
        }
        Some(d)
    }
}

/// An itinerary together with the lift translates of its transitions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefinedItinerary {
    pub itinerary: Itinerary,
    /// `shifts[k + n_back]` belongs to the step `k → k+1`.
    pub shifts: Vec<[i32; 2]>,
}

impl RefinedItinerary {
    pub fn shift(&self, k: isize) -> [i32; 2] {
        self.shifts[(k + self.itinerary.n_back as isize) as usize]
    }
}

/// The orbit window `f^k(z)`, `k = -n_back..=n_fwd`, by forward and inverse iteration.
pub fn orbit_window(partition: &Partition, z: TorusPoint, n_back: usize, n_fwd: usize) -> Vec<TorusPoint> {
    let map = partition.map();
    let mut back = Vec::with_capacity(n_back);
    let mut q = z;
    for _ in 0..n_back {
        q = map.apply_inverse(q);
        back.push(q);
    }
    back.reverse();
    let mut out = back;
    out.push(z);
    let mut q = z;
    for _ in 0..n_fwd {
        q = map.apply(q);
        out.push(q);
    }
    out
}

/// `b_k = locate(f_p^k(z))` on the window.
pub fn itinerary(partition: &Partition, z: TorusPoint, n_back: usize, n_fwd: usize) -> Itinerary {
    itinerary_of_orbit(partition, &orbit_window(partition, z, n_back, n_fwd), n_back)
}

/// Symbols of a precomputed orbit whose entry `n_back` is time 0.
pub fn itinerary_of_orbit(partition: &Partition, orbit: &[TorusPoint], n_back: usize) -> Itinerary {
    let symbols = orbit.iter().map(|&q| partition.locate(q)).collect();
    Itinerary { n_back, n_fwd: orbit.len() - 1 - n_back, symbols }
}

#[inline]
fn step_shift(partition: &Partition, from: PlanarPoint, to: PlanarPoint) -> [i32; 2] {
    let image = partition.map().apply_lift(from);
    [(image.x - to.x).round() as i32, (image.y - to.y).round() as i32]
}

/// Refined coding of a precomputed orbit (any orbit, or pseudo-orbit, of the partition's map).
pub fn refined_of_orbit(partition: &Partition, orbit: &[TorusPoint], n_back: usize) -> RefinedItinerary {
    let lifted: Vec<_> = orbit.iter().map(|&q| partition.lifted(q)).collect();
    let symbols = lifted.iter().map(|l| l.0).collect();
    let shifts = lifted.windows(2).map(|w| step_shift(partition, w[0].1, w[1].1)).collect();
    RefinedItinerary { itinerary: Itinerary { n_back, n_fwd: orbit.len() - 1 - n_back, symbols }, shifts }
}

pub fn refined_itinerary(partition: &Partition, z: TorusPoint, n_back: usize, n_fwd: usize) -> RefinedItinerary {
    refined_of_orbit(partition, &orbit_window(partition, z, n_back, n_fwd), n_back)
}

/// The set of points realizing a target word, enclosed in a disc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderBox {
    pub center: TorusPoint,
    pub radius: f64,
    pub depth: usize,
}

impl CylinderBox {
    pub fn contains(&self, z: TorusPoint) -> bool {
        dist(self.center, z) <= self.radius
    }
}

enum Verdict {
    Rejected,
    Kept,
}

enum Walk {
    Match,
    /// First mismatch found, and whether the whole box certainly shares it.
    Mismatch { certain: bool },
}

struct Search<'a> {
    partition: &'a Partition,
    target: &'a RefinedItinerary,
    depth: usize,
    lipschitz: f64,
    /// Typical growth rate of box images, used to pick the compared window.
    growth: f64,
}

/// Box images wider than this carry no usable information about a step.
const SPREAD_LIMIT: f64 = 0.1;

impl Search<'_> {
    fn spread(&self, half_width: f64, k: usize) -> f64 {
        half_width * std::f64::consts::SQRT_2 * self.lipschitz.powi(k as i32)
    }

    /// Steps `|k| ≤ reach` are compared; beyond it a typical box image is too wide.
    fn reach(&self, half_width: f64) -> usize {
        let typical = |k: usize| half_width * std::f64::consts::SQRT_2 * self.growth.powi(k as i32);
        (0..=self.depth).take_while(|&k| typical(k) <= SPREAD_LIMIT).last().unwrap_or(0)
    }

    /// Walks the orbit of `c` outwards from time 0 over `|k| ≤ reach` and
    /// stops at the first symbol or translate that differs from the target.
    fn walk(&self, c: TorusPoint, half_width: f64, reach: usize) -> Walk {
        let map = self.partition.map();
        let certain = |q: TorusPoint, k: usize| {
            self.spread(half_width, k) < TRUST_SAFETY * self.partition.boundary_distance(q)
        };
        let (b0, l0) = self.partition.lifted(c);
        if b0 != self.target.itinerary.symbol(0) {
            return Walk::Mismatch { certain: certain(c, 0) };
        }
        let (mut fwd, mut fwd_lift) = (c, l0);
        let (mut bwd, mut bwd_lift) = (c, l0);
        for j in 1..=reach {
            let k = j as isize;
            let next = map.apply(fwd);
            let (b, l) = self.partition.lifted(next);
            if b != self.target.itinerary.symbol(k) {
                return Walk::Mismatch { certain: certain(next, j) };
            }
            if step_shift(self.partition, fwd_lift, l) != self.target.shift(k - 1) {
                return Walk::Mismatch { certain: certain(fwd, j - 1) && certain(next, j) };
            }
            (fwd, fwd_lift) = (next, l);

            let prev = map.apply_inverse(bwd);
            let (b, l) = self.partition.lifted(prev);
            if b != self.target.itinerary.symbol(-k) {
                return Walk::Mismatch { certain: certain(prev, j) };
            }
            if step_shift(self.partition, l, bwd_lift) != self.target.shift(-k) {
                return Walk::Mismatch { certain: certain(prev, j) && certain(bwd, j - 1) };
            }
            (bwd, bwd_lift) = (prev, l);
        }
        Walk::Match
    }

    /// A box is kept when its centre, or failing that one of eight points
    /// on its edge, follows the target over the resolvable window. Boxes
    /// whose centre mismatches at a step where the whole box image lies on
    /// one side of the boundary are dropped without sampling.
    fn examine(&self, c: TorusPoint, half_width: f64) -> Verdict {
        let reach = self.reach(half_width);
        match self.walk(c, half_width, reach) {
            Walk::Match => return Verdict::Kept,
            Walk::Mismatch { certain: true } => return Verdict::Rejected,
            Walk::Mismatch { certain: false } => {}
        }
        let h = 0.999 * half_width;
        for (dx, dy) in [(-h, -h), (0.0, -h), (h, -h), (h, 0.0), (h, h), (0.0, h), (-h, h), (-h, 0.0)] {
            let q = TorusPoint::wrap_unchecked(
                crate::torus::reduce(c.x() + dx),
                crate::torus::reduce(c.y() + dy),
            );
            if matches!(self.walk(q, half_width, reach), Walk::Match) {
                return Verdict::Kept;
            }
        }
        Verdict::Rejected
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Connected clusters of surviving grid cells (8-neighbourhood, periodic).
fn clusters(cells: &[(i64, i64)], n: i64) -> Vec<Vec<usize>> {
    let index: HashMap<(i64, i64), usize> = cells.iter().enumerate().map(|(k, &c)| (c, k)).collect();
    let mut parent: Vec<usize> = (0..cells.len()).collect();
    for (k, &(i, j)) in cells.iter().enumerate() {
        for (di, dj) in [(1, -1), (1, 0), (1, 1), (0, 1)] {
            if let Some(&m) = index.get(&((i + di).rem_euclid(n), (j + dj).rem_euclid(n))) {
                let (a, b) = (find(&mut parent, k), find(&mut parent, m));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for k in 0..cells.len() {
        let root = find(&mut parent, k);
        groups.entry(root).or_default().push(k);
    }
    let mut out: Vec<_> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

fn cell_center(i: i64, j: i64, n: i64) -> TorusPoint {
    let nf = n as f64;
    TorusPoint::wrap_unchecked((i as f64 + 0.5) / nf, (j as f64 + 0.5) / nf)
}

/// Smallest disc (about the bounding-box centre) around a connected cluster.
fn enclose(cells: &[(i64, i64)], members: &[usize], n: i64, half_width: f64) -> (TorusPoint, f64) {
    let reference = cell_center(cells[members[0]].0, cells[members[0]].1, n).lift();
    let lifts: Vec<PlanarPoint> =
        members.iter().map(|&m| lift_near(cell_center(cells[m].0, cells[m].1, n), reference)).collect();
    let (mut lo, mut hi) = (reference, reference);
    for q in &lifts {
        lo = PlanarPoint::new(lo.x.min(q.x), lo.y.min(q.y));
        hi = PlanarPoint::new(hi.x.max(q.x), hi.y.max(q.y));
    }
    let mid = lo.add(hi).scale(0.5);
    let radius = lifts.iter().map(|q| q.sub(mid).norm()).fold(0.0, f64::max) + half_width * std::f64::consts::SQRT_2;
    (TorusPoint::wrap_unchecked(crate::torus::reduce(mid.x), crate::torus::reduce(mid.y)), radius)
}

/// Finds the cylinder of a refined word with symmetric window `N ≤ 30`.
///
/// Starts from a 256×256 grid of boxes, discards boxes for which some
/// symbol or translate is certainly wrong (the box's image at step `k`,
/// of diameter at most `diam·L^{|k|}`, stays on one side of the boundary),
/// and splits the survivors until the whole window is resolved and their
/// cluster stops shrinking compared to the box size, or until the boxes
/// reach double-precision scale.
pub fn cylinder_locate(partition: &Partition, target: &RefinedItinerary) -> Result<CylinderBox> {
    let depth = target.itinerary.n_back;
    if depth != target.itinerary.n_fwd || depth > MAX_DEPTH {
        return Err(Error::InvalidArgument(format!(
            "window -{}..{} must be symmetric with depth ≤ {MAX_DEPTH}",
            target.itinerary.n_back, target.itinerary.n_fwd
        )));
    }
    let lipschitz = partition.map().lipschitz_bound();
    let growth = lipschitz.min(REACH_GROWTH * crate::manifolds::lambda());
    let search = Search { partition, target, depth, lipschitz, growth };
    let mut n = INITIAL_GRID;
    let mut cells: Vec<(i64, i64)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let mut last_radius = f64::INFINITY;
    loop {
        let half_width = 0.5 / n as f64;
        cells = cells
            .into_par_iter()
            .filter(|&(i, j)| matches!(search.examine(cell_center(i, j, n), half_width), Verdict::Kept))
            .collect();
        if cells.is_empty() {
            return Err(Error::ItineraryNotRealized);
        }
        let groups = clusters(&cells, n);
        let enclosures: Vec<_> = groups.iter().map(|g| enclose(&cells, g, n, half_width)).collect();
        let radius = enclosures.iter().map(|e| e.1).fold(0.0, f64::max);
        let settled = groups.len() == 1
            && search.reach(half_width) == depth
            && half_width <= 0.02 * radius
            && radius > 0.7 * last_radius;
        if settled || half_width < MIN_HALF_WIDTH {
            if groups.len() > 1 {
                return Err(Error::AmbiguousCylinder { clusters: groups.len() });
            }
            let (center, radius) = enclosures[0];
            return Ok(CylinderBox { center, radius, depth });
        }
        if cells.len() * 4 > BOX_BUDGET {
            return Err(Error::CylinderBudget { limit: BOX_BUDGET });
        }
        last_radius = if groups.len() == 1 { radius } else { f64::INFINITY };
        n *= 2;
        cells = cells.into_iter().flat_map(|(i, j)| [(2 * i, 2 * j), (2 * i + 1, 2 * j), (2 * i, 2 * j + 1), (2 * i + 1, 2 * j + 1)]).collect();
    }
}
