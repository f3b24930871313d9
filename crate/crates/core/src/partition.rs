//! The two-rectangle Markov partition `{R⁰_p, R¹_p}` of `f_p`: construction
//! from manifold pieces, point location, and exact and sampled measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifolds::{
    perturbed_l11, point_segment_distance, stable_slope, trace_extension, trace_manifold, unstable_slope,
    BranchCurve, ManifoldKind, ManifoldSegment, StopRule,
};
use crate::map_family::{PerturbationProfile, PerturbedCatMap};
use crate::torus::{PlanarPoint, TorusPoint};

/// Points this close to a boundary piece get symbol 1.
pub const BOUNDARY_TIE: f64 = 1e-12;
/// Uniform samples per deterministic Monte Carlo block.
pub const MC_BLOCK: u64 = 1 << 16;
const FLOOD_GRID: usize = 256;

/// Which boundary pieces to measure distance to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundarySet {
    All,
    Stable,
    Unstable,
}

/// The five pieces the boundary cuts out of the unit square. `R¹_p` is
/// `Below ∪ Left ∪ Top`, `R⁰_p` is `UpperLeft ∪ Right`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Piece {
    /// Under `l(0,0)`.
    Below,
    /// Left of `l(0,1)`, between `l(0,0)` and its extension.
    Left,
    /// Left of `l(0,1)`, above the extension.
    UpperLeft,
    /// Right of `l(0,1)`, between `l(0,0)` and `l(1,1)`.
    Right,
    /// Above `l(1,1)`.
    Top,
}

impl Piece {
    pub fn symbol(self) -> u8 {
        match self {
            Piece::Below | Piece::Left | Piece::Top => 1,
            Piece::UpperLeft | Piece::Right => 0,
        }
    }

    /// Translation carrying the piece into the connected planar lift of its
    /// rectangle: `Below ∪ (Left + (1,0)) ∪ (Top − (0,1))` and
    /// `Right ∪ (UpperLeft + (1,0))`, both curvilinear parallelograms.
    pub fn lift_offset(self) -> PlanarPoint {
        match self {
            Piece::Below | Piece::Right => PlanarPoint::new(0.0, 0.0),
            Piece::Left | Piece::UpperLeft => PlanarPoint::new(1.0, 0.0),
            Piece::Top => PlanarPoint::new(0.0, -1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Partition {
    p: f64,
    map: PerturbedCatMap,
    l00: ManifoldSegment,
    l01: ManifoldSegment,
    l11: ManifoldSegment,
    extension: ManifoldSegment,
    curve: BranchCurve,
    vertices: [PlanarPoint; 3],
    m1_exact: f64,
    m0_exact: f64,
    su: f64,
    ss: f64,
    curve_band: f64,
}

/// Index of the polyline piece nearest to `q`.
fn cut_index(points: &[PlanarPoint], q: PlanarPoint) -> usize {
    (0..points.len() - 1)
        .min_by(|&i, &j| {
            point_segment_distance(q, points[i], points[i + 1])
                .total_cmp(&point_segment_distance(q, points[j], points[j + 1]))
        })
        .unwrap_or(0)
}

fn prefix(points: &[PlanarPoint], q: PlanarPoint) -> Vec<PlanarPoint> {
    let i = cut_index(points, q);
    let mut v = points[..=i].to_vec();
    v.push(q);
    v
}

fn suffix(points: &[PlanarPoint], q: PlanarPoint) -> Vec<PlanarPoint> {
    let i = cut_index(points, q);
    let mut v = vec![q];
    v.extend_from_slice(&points[i + 1..]);
    v
}

fn reversed(mut v: Vec<PlanarPoint>) -> Vec<PlanarPoint> {
    v.reverse();
    v
}

/// Unsigned polygon area by the shoelace formula.
pub fn shoelace(poly: &[PlanarPoint]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum();
    0.5 * twice.abs()
}

impl Partition {
    /// Builds `𝓡_p` from `l_p(0,0)`, `l_p(0,1)`, `l_p(1,1)` and the extension
    /// `l_p`, traced at resolution `max_spacing`. The profile is assumed to
    /// have passed the cone check.
    pub fn build(profile: &PerturbationProfile, p: f64, max_spacing: f64) -> Result<Self> {
        let map = profile.at(p)?;
        let origin = PlanarPoint::new(0.0, 0.0);
        let l00 = trace_manifold(&map, ManifoldKind::Unstable, origin, StopRule::SquareBoundary, max_spacing)?;
        let l01 =
            trace_manifold(&map, ManifoldKind::Stable, PlanarPoint::new(0.0, 1.0), StopRule::Hits(&l00), max_spacing)?;
        let l11 =
            trace_manifold(&map, ManifoldKind::Unstable, PlanarPoint::new(1.0, 1.0), StopRule::Hits(&l01), max_spacing)?;
        let extension = trace_extension(&map, &l01, max_spacing)?;
        let (p1, p2, p3) = (l01.end(), extension.end(), l11.end());
        let su = unstable_slope();

        let corner = |x, y| PlanarPoint::new(x, y);
        let mut t = l00.points.clone();
        t.push(corner(1.0, 0.0));
        let l01_from_p2 = suffix(&l01.points, p2);
        let mut a = prefix(&l00.points, p1);
        a.extend(reversed(prefix(&l01_from_p2, p1)));
        a.extend(reversed(extension.points.clone()));
        let mut d = prefix(&l01.points, p3);
        d.extend(reversed(l11.points.clone()));
        let mut b = extension.points.clone();
        b.extend(reversed(prefix(&l01.points, p2)));
        let mut c = suffix(&l00.points, p1);
        c.extend(l11.points.iter().copied());
        c.extend(suffix(&l01.points, p3));

        let m1_exact = shoelace(&t) + shoelace(&a) + shoelace(&d);
        let m0_exact = shoelace(&b) + shoelace(&c);
        let part = Self {
            p,
            map,
            l00,
            l01,
            l11,
            extension,
            curve: BranchCurve::new(map),
            vertices: [p1, p2, p3],
            m1_exact,
            m0_exact,
            su,
            ss: -stable_slope(),
            curve_band: (1.0 - su) * map.p().abs() * profile.eps0(),
        };
        let regions = part.region_count(FLOOD_GRID);
        if regions != 2 {
            return Err(Error::PartitionMalformed(format!("{regions} regions")));
        }
        Ok(part)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn map(&self) -> &PerturbedCatMap {
        &self.map
    }

    pub fn l00(&self) -> &ManifoldSegment {
        &self.l00
    }

    pub fn l01(&self) -> &ManifoldSegment {
        &self.l01
    }

    pub fn l11(&self) -> &ManifoldSegment {
        &self.l11
    }

    pub fn extension(&self) -> &ManifoldSegment {
        &self.extension
    }

    /// `[p₁, p₂, p₃]` as found by the construction.
    pub fn vertices(&self) -> [PlanarPoint; 3] {
        self.vertices
    }

    /// `m(R¹_p)` by polygon area.
    pub fn m1_exact(&self) -> f64 {
        self.m1_exact
    }

    /// `m(R⁰_p)`, computed from its own pieces.
    pub fn m0_exact(&self) -> f64 {
        self.m0_exact
    }

    /// Symbol of `z`: 1 on `R¹_p` and on the boundary, 0 on the interior of `R⁰_p`.
    #[inline]
    pub fn locate(&self, z: TorusPoint) -> u8 {
        self.classify_xy(z.x(), z.y()).0
    }

    #[inline]
    pub(crate) fn locate_xy(&self, x: f64, y: f64) -> u8 {
        self.classify_xy(x, y).0
    }

    /// Symbol and square piece of `z`.
    #[inline]
    pub fn classify(&self, z: TorusPoint) -> (u8, Piece) {
        self.classify_xy(z.x(), z.y())
    }

    /// Symbol of `z` and its representative in the connected planar lift of
    /// its rectangle (see [`Piece::lift_offset`]).
    #[inline]
    pub fn lifted(&self, z: TorusPoint) -> (u8, PlanarPoint) {
        let (symbol, piece) = self.classify(z);
        (symbol, z.lift().add(piece.lift_offset()))
    }

    #[inline]
    fn classify_xy(&self, x: f64, y: f64) -> (u8, Piece) {
        const NEAR: f64 = 1e-11;
        let g1 = y - self.su * x;
        let gs = y + self.ss * x - 1.0;
        let g2 = y - self.su * (1.0 + x);
        let mut suspicious = g1.abs() < NEAR
            || gs.abs() < NEAR
            || g2.abs() < NEAR
            || x < NEAR
            || x > 1.0 - NEAR
            || y < NEAR
            || y > 1.0 - NEAR;
        let piece = if g1 < 0.0 {
            Piece::Below
        } else if gs < 0.0 {
            if g2 > 0.0 {
                Piece::UpperLeft
            } else {
                Piece::Left
            }
        } else {
            let line = y - (self.su * (x - 1.0) + 1.0);
            let g3 = if line > NEAR || line < -self.curve_band - NEAR {
                line
            } else {
                y - self.curve.height_and_slope(x).0
            };
            suspicious |= g3.abs() < NEAR;
            if g3 > 0.0 {
                Piece::Top
            } else {
                Piece::Right
            }
        };
        if suspicious && self.boundary_distance_xy(x, y, BoundarySet::All) <= BOUNDARY_TIE {
            return (1, piece);
        }
        (piece.symbol(), piece)
    }

    /// Torus distance from `z` to the partition boundary.
    pub fn boundary_distance(&self, z: TorusPoint) -> f64 {
        self.boundary_distance_xy(z.x(), z.y(), BoundarySet::All)
    }

    pub fn boundary_distance_to(&self, z: TorusPoint, set: BoundarySet) -> f64 {
        self.boundary_distance_xy(z.x(), z.y(), set)
    }

    fn boundary_distance_xy(&self, x: f64, y: f64, set: BoundarySet) -> f64 {
        let [p1, p2, p3] = self.vertices;
        let o = PlanarPoint::new(0.0, 0.0);
        let u1_end = PlanarPoint::new(1.0, self.su);
        let u2_start = PlanarPoint::new(0.0, self.su);
        let s_start = PlanarPoint::new(0.0, 1.0);
        let top = PlanarPoint::new(1.0, 1.0);
        let mut best = f64::INFINITY;
        for dx in [-1.0, 0.0, 1.0] {
            for dy in [-1.0, 0.0, 1.0] {
                let q = PlanarPoint::new(x + dx, y + dy);
                let outside = (-q.x).max(q.x - 1.0).max(0.0).hypot((-q.y).max(q.y - 1.0).max(0.0));
                if outside >= best {
                    continue;
                }
                if set != BoundarySet::Unstable {
                    best = best.min(point_segment_distance(q, s_start, p1));
                }
                if set != BoundarySet::Stable {
                    best = best.min(point_segment_distance(q, o, u1_end));
                    best = best.min(point_segment_distance(q, u2_start, p2));
                    best = best.min(self.curve_distance(q, p3, top));
                }
            }
        }
        best
    }

    /// Distance to `l_p(1,1)`; first-order accurate off the straight parts.
    fn curve_distance(&self, q: PlanarPoint, p3: PlanarPoint, top: PlanarPoint) -> f64 {
        let ends = q.sub(p3).norm().min(q.sub(top).norm());
        if q.x < p3.x || q.x > 1.0 {
            return ends;
        }
        let (h, s) = self.curve.height_and_slope(q.x);
        ends.min((q.y - h).abs() / (1.0 + s * s).sqrt())
    }

    /// Connected components of the complement of the boundary, found by flood fill on a `grid × grid` torus grid.
    pub fn region_count(&self, grid: usize) -> usize {
        let h = 1.0 / grid as f64;
        let idx = |i: usize, j: usize| i * grid + j;
        let wall: Vec<bool> = (0..grid * grid)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / grid, k % grid);
                let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                self.boundary_distance_xy(x, y, BoundarySet::All) < 0.75 * h
            })
            .collect();
        let mut label = vec![usize::MAX; grid * grid];
        let mut sizes = Vec::new();
        for start in 0..grid * grid {
            if wall[start] || label[start] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let mut size = 0usize;
            let mut stack = vec![start];
            label[start] = id;
            while let Some(k) = stack.pop() {
                size += 1;
                let (i, j) = (k / grid, k % grid);
                for (ni, nj) in [
                    ((i + 1) % grid, j),
                    ((i + grid - 1) % grid, j),
                    (i, (j + 1) % grid),
                    (i, (j + grid - 1) % grid),
                ] {
                    let n = idx(ni, nj);
                    if !wall[n] && label[n] == usize::MAX {
                        label[n] = id;
                        stack.push(n);
                    }
                }
            }
            sizes.push(size);
        }
        // Slivers cut off where two boundary pieces meet at a vertex do not count.
        let min_size = (grid * grid) / 1000;
        sizes.iter().filter(|&&s| s > min_size).count()
    }
}

/// A statistical estimate of `m(R¹_p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasureEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub seed: u64,
}

/// Uniform point `index` of the Monte Carlo stream for `seed`.
fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Fraction of `n_samples` uniform points with symbol 1. The sample stream
/// is split into fixed blocks, so the result does not depend on scheduling.
pub fn measure_montecarlo(partition: &Partition, n_samples: u64, seed: u64) -> Result<MeasureEstimate> {
    if n_samples < 1000 {
        return Err(Error::InvalidArgument(format!("n_samples {n_samples} < 1000")));
    }
    let blocks = n_samples.div_ceil(MC_BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let len = MC_BLOCK.min(n_samples - b * MC_BLOCK);
            (0..len)
                .map(|_| {
                    let (x, y): (f64, f64) = (rng.gen(), rng.gen());
                    u64::from(partition.locate_xy(x, y))
                })
                .sum::<u64>()
        })
        .sum();
    let mean = hits as f64 / n_samples as f64;
    Ok(MeasureEstimate { mean, std_error: (mean * (1.0 - mean) / n_samples as f64).sqrt(), n_samples, seed })
}

/// `∫₀¹ C(x) dx` for the profile's bump.
pub fn bump_integral(profile: &PerturbationProfile) -> f64 {
    let (lo, hi) = profile.support();
    quadrature::double_exponential::integrate(|x| profile.bump_unchecked(x).value, lo, hi, 1e-14).integral
}

/// `Area_p = p·ε₀·∫C`, the area gained by `R¹_p`.
pub fn area_formula(profile: &PerturbationProfile, p: f64) -> f64 {
    p * profile.eps0() * bump_integral(profile)
}

/// Area between `l_p(1,1)` and `l_0(1,1)`, integrated over the abscissa.
pub fn area_geometric(profile: &PerturbationProfile, p: f64) -> Result<f64> {
    let curve = BranchCurve::new(profile.at(p)?);
    let su = unstable_slope();
    let (lo, hi) = curve.perturbed_range();
    let (lo, hi) = (lo - 1.0, hi - 1.0);
    let out = quadrature::double_exponential::integrate(|x| su * x - curve.shifted_height(x), lo, hi, 1e-14);
    Ok(out.integral)
}

/// `l_p(1,1)` sampled in closed form and moved into the unit square.
pub fn closed_form_l11(map: &PerturbedCatMap, resolution: usize) -> Result<ManifoldSegment> {
    Ok(perturbed_l11(map, resolution)?.translated(PlanarPoint::new(1.0, 1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_family::BumpKind;

    fn profile() -> PerturbationProfile {
        PerturbationProfile::new(0.81, 0.08, 0.01, BumpKind::SmoothExp).unwrap()
    }

    // (5+√5)/10 and ε₀·δ·∫₋₁¹ e^{1-1/(1-t²)} dt, from mpmath at 30 digits
    const M1: f64 = 0.723_606_797_749_978_969_6;
    const AREA1: f64 = 9.655_202_579_503_009_4e-4;

    #[test]
    fn unperturbed_measures() {
        let part = Partition::build(&profile(), 0.0, 1e-4).unwrap();
        assert!((part.m1_exact() - M1).abs() < 1e-8);
        assert!((part.m0_exact() - (1.0 - M1)).abs() < 1e-8);
    }

    #[test]
    fn perturbed_measures_gain_the_area() {
        let part = Partition::build(&profile(), 1.0, 1e-4).unwrap();
        assert!((part.m1_exact() - M1 - AREA1).abs() < 1e-8, "{}", part.m1_exact() - M1);
        assert!((part.m0_exact() + part.m1_exact() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn vertices_match_constants() {
        use crate::manifolds::PartitionVertices as V;
        let part = Partition::build(&profile(), 1.0, 1e-4).unwrap();
        let [p1, p2, p3] = part.vertices();
        assert!(p1.sub(V::p1()).norm() < 1e-10);
        assert!(p2.sub(V::p2()).norm() < 1e-10);
        assert!(p3.sub(V::p3()).norm() < 1e-10);
    }

    #[test]
    fn area_formula_and_geometry() {
        let prof = profile();
        assert_eq!(area_formula(&prof, 0.0), 0.0);
        assert!((area_formula(&prof, 1.0) - AREA1).abs() < 1e-15);
        assert!((area_formula(&prof, 0.5) - 0.5 * area_formula(&prof, 1.0)).abs() < 1e-12);
        for p in [0.0, 0.3, 1.0] {
            let g = area_geometric(&prof, p).unwrap();
            assert!((g - area_formula(&prof, p)).abs() < 1e-12, "p={p} {g}");
        }
        let poly = PerturbationProfile::new(0.81, 0.08, 0.01, BumpKind::Polynomial).unwrap();
        // ∫₋₁¹ (1-t²)³ dt = 32/35
        assert!((bump_integral(&poly) - 0.08 * 32.0 / 35.0).abs() < 1e-14);
        assert!((area_geometric(&poly, 1.0).unwrap() - area_formula(&poly, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn locate_examples() {
        let part = Partition::build(&profile(), 1.0, 1e-4).unwrap();
        let loc = |x, y| part.locate(TorusPoint::new(x, y).unwrap());
        assert_eq!(loc(0.0, 0.0), 1);
        assert_eq!(loc(0.5, 0.1), 1); // below l(0,0)
        assert_eq!(loc(0.1, 0.3), 1); // left piece of R¹
        assert_eq!(loc(0.05, 0.9), 0); // left piece of R⁰
        assert_eq!(loc(0.6, 0.6), 0); // right piece of R⁰
        assert_eq!(loc(0.5, 0.95), 1); // top triangle
        let z = TorusPoint::new(0.3712, 0.6178).unwrap();
        assert_eq!(part.locate(z), part.locate(z));
    }

    #[test]
    fn locate_sees_the_perturbed_curve() {
        let p0 = Partition::build(&profile(), 0.0, 1e-4).unwrap();
        let p1 = Partition::build(&profile(), 1.0, 1e-4).unwrap();
        // just below the straight l(1,1) in the middle of the pushed region
        let x = 0.5;
        let y = unstable_slope() * (x - 1.0) + 1.0 - 1e-4;
        let z = TorusPoint::new(x, y).unwrap();
        assert_eq!(p0.locate(z), 0);
        assert_eq!(p1.locate(z), 1);
    }

    #[test]
    fn monte_carlo_matches_exact_measure() {
        let part = Partition::build(&profile(), 0.0, 1e-4).unwrap();
        let est = measure_montecarlo(&part, 1_000_000, 7).unwrap();
        assert!((est.mean - M1).abs() <= 3.0 * est.std_error, "{est:?}");
        assert!((est.std_error - 4.47e-4).abs() < 1e-5);
        let small = measure_montecarlo(&part, 1000, 7).unwrap();
        assert!((small.std_error / est.std_error / 1000f64.sqrt() - 1.0).abs() < 0.1);
        assert_eq!(measure_montecarlo(&part, 1_000_000, 7).unwrap(), est);
        assert!(measure_montecarlo(&part, 999, 7).is_err());
    }

    #[test]
    fn region_count_is_two() {
        let part = Partition::build(&profile(), 1.0, 1e-4).unwrap();
        assert_eq!(part.region_count(384), 2);
    }
}
