//! Stable and unstable manifolds of the fixed point `(0,0)`, traced as
//! polylines in planar lifts, plus the closed-form image curve `l_p(1,1)`.

use crate::error::{Error, Result};
use crate::map_family::PerturbedCatMap;
use crate::torus::PlanarPoint;

/// Radius of the local manifold piece that seeds every trace.
pub const LOCAL_RADIUS: f64 = 0.05;
/// Default polyline resolution.
pub const DEFAULT_MAX_SPACING: f64 = 1e-4;
const MAX_TRACE_ITERATIONS: usize = 40;

pub fn sqrt5() -> f64 {
    5f64.sqrt()
}

/// Expansion rate `(3+√5)/2` of the cat map.
pub fn lambda() -> f64 {
    (3.0 + sqrt5()) / 2.0
}

/// Slope `(√5-1)/2` of the unstable eigenline.
pub fn unstable_slope() -> f64 {
    (sqrt5() - 1.0) / 2.0
}

/// Slope `-(√5+1)/2` of the stable eigenline.
pub fn stable_slope() -> f64 {
    -(sqrt5() + 1.0) / 2.0
}

/// `2/(5+√5)`, the x-extent of the piece of `l(0,1)` between `(0,1)` and `p₃`.
fn short_extent() -> f64 {
    2.0 / (5.0 + sqrt5())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenData {
    pub unstable: PlanarPoint,
    pub stable: PlanarPoint,
    pub lambda: f64,
    pub lambda_inv: f64,
}

/// Eigenpairs of `A = [[2,1],[1,1]]`: `ν_u = (1, (√5-1)/2)` for `λ`, `ν_s = (1, -(√5+1)/2)` for `λ⁻¹`.
pub fn eigen_directions() -> EigenData {
    EigenData {
        unstable: PlanarPoint::new(1.0, unstable_slope()),
        stable: PlanarPoint::new(1.0, stable_slope()),
        lambda: lambda(),
        lambda_inv: (3.0 - sqrt5()) / 2.0,
    }
}

/// The corner points `p₀(i,j)` and the vertices `p₁, p₂, p₃` of the unperturbed partition.
pub struct PartitionVertices;

impl PartitionVertices {
    pub fn corners() -> [PlanarPoint; 4] {
        [
            PlanarPoint::new(0.0, 0.0),
            PlanarPoint::new(1.0, 0.0),
            PlanarPoint::new(0.0, 1.0),
            PlanarPoint::new(1.0, 1.0),
        ]
    }

    pub fn p1() -> PlanarPoint {
        let s5 = sqrt5();
        PlanarPoint::new(1.0 / s5, (s5 - 1.0) / (2.0 * s5))
    }

    pub fn p2() -> PlanarPoint {
        let s5 = sqrt5();
        let x = (3.0 - s5) / (2.0 * s5);
        PlanarPoint::new(x, 1.0 + stable_slope() * x)
    }

    pub fn p3() -> PlanarPoint {
        let x = short_extent();
        PlanarPoint::new(x, 1.0 + stable_slope() * x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifoldKind {
    Stable,
    Unstable,
}

/// A polyline lift of a piece of `W^s((0,0))` or `W^u((0,0))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldSegment {
    pub kind: ManifoldKind,
    pub p: f64,
    pub points: Vec<PlanarPoint>,
    pub max_spacing: f64,
}

/// Where a segment crosses another one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub point: PlanarPoint,
    /// Index of the first vertex of the crossed piece of the first polyline.
    pub index_a: usize,
    pub t_a: f64,
    pub index_b: usize,
    pub t_b: f64,
}

impl ManifoldSegment {
    pub fn start(&self) -> PlanarPoint {
        self.points[0]
    }

    pub fn end(&self) -> PlanarPoint {
        *self.points.last().expect("segments are never empty")
    }

    pub fn translated(&self, offset: PlanarPoint) -> Self {
        Self { points: self.points.iter().map(|q| q.add(offset)).collect(), ..self.clone() }
    }

    /// Largest distance between consecutive vertices.
    pub fn max_gap(&self) -> f64 {
        self.points.windows(2).map(|w| w[1].sub(w[0]).norm()).fold(0.0, f64::max)
    }

    /// Euclidean distance from `q` to the polyline.
    pub fn distance_to(&self, q: PlanarPoint) -> f64 {
        ChunkIndex::new(&self.points).distance(&self.points, q, f64::INFINITY)
    }

    /// Symmetric Hausdorff distance between the two polylines.
    pub fn hausdorff(&self, other: &ManifoldSegment) -> f64 {
        directed_hausdorff(&self.points, &other.points).max(directed_hausdorff(&other.points, &self.points))
    }

    /// Sub-polyline from the start up to the given crossing.
    pub fn prefix_to(&self, index: usize, point: PlanarPoint) -> Vec<PlanarPoint> {
        let mut v = self.points[..=index].to_vec();
        v.push(point);
        v
    }
}

const CHUNK: usize = 64;

/// Bounding boxes of consecutive runs of polyline pieces.
struct ChunkIndex {
    boxes: Vec<(usize, usize, [f64; 4])>,
}

impl ChunkIndex {
    fn new(points: &[PlanarPoint]) -> Self {
        let mut boxes = Vec::new();
        if points.len() < 2 {
            if let Some(q) = points.first() {
                boxes.push((0, 0, [q.x, q.y, q.x, q.y]));
            }
            return Self { boxes };
        }
        let pieces = points.len() - 1;
        let mut lo = 0;
        while lo < pieces {
            let hi = (lo + CHUNK).min(pieces);
            let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
            for q in &points[lo..=hi] {
                b[0] = b[0].min(q.x);
                b[1] = b[1].min(q.y);
                b[2] = b[2].max(q.x);
                b[3] = b[3].max(q.y);
            }
            boxes.push((lo, hi, b));
            lo = hi;
        }
        Self { boxes }
    }

    fn distance(&self, points: &[PlanarPoint], q: PlanarPoint, mut best: f64) -> f64 {
        if points.len() == 1 {
            return best.min(q.sub(points[0]).norm());
        }
        for &(lo, hi, b) in &self.boxes {
            let dx = (b[0] - q.x).max(q.x - b[2]).max(0.0);
            let dy = (b[1] - q.y).max(q.y - b[3]).max(0.0);
            if dx.hypot(dy) >= best {
                continue;
            }
            for j in lo..hi {
                best = best.min(point_segment_distance(q, points[j], points[j + 1]));
            }
        }
        best
    }
}

pub(crate) fn point_segment_distance(q: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return q.sub(a).norm();
    }
    let t = (q.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    q.sub(a.add(ab.scale(t))).norm()
}

fn directed_hausdorff(a: &[PlanarPoint], b: &[PlanarPoint]) -> f64 {
    let index = ChunkIndex::new(b);
    let mut worst: f64 = 0.0;
    let mut guess = 0usize;
    for q in a {
        // Seed with the neighbourhood of the previous nearest piece.
        let lo = guess.saturating_sub(4);
        let hi = (guess + 4).min(b.len().saturating_sub(1));
        let mut seed = f64::INFINITY;
        let mut arg = guess;
        for j in lo..hi.max(lo) {
            let d = point_segment_distance(*q, b[j], b[j + 1]);
            if d < seed {
                seed = d;
                arg = j;
            }
        }
        let d = index.distance(b, *q, seed);
        if d < seed {
            // Nearest piece moved; track it for the next vertex.
            arg = nearest_piece(b, *q).unwrap_or(arg);
        }
        guess = arg;
        worst = worst.max(d);
    }
    worst
}

fn nearest_piece(b: &[PlanarPoint], q: PlanarPoint) -> Option<usize> {
    (0..b.len().saturating_sub(1)).min_by(|&i, &j| {
        point_segment_distance(q, b[i], b[i + 1]).total_cmp(&point_segment_distance(q, b[j], b[j + 1]))
    })
}

fn cross(o: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Proper crossing of `[a0,a1]` and `[b0,b1]`; returns the parameters along each.
fn segment_crossing(a0: PlanarPoint, a1: PlanarPoint, b0: PlanarPoint, b1: PlanarPoint) -> Option<(f64, f64)> {
    let d1 = cross(b0, b1, a0);
    let d2 = cross(b0, b1, a1);
    let d3 = cross(a0, a1, b0);
    let d4 = cross(a0, a1, b1);
    let straddles = |u: f64, v: f64| (u <= 0.0 && v >= 0.0 || u >= 0.0 && v <= 0.0) && u != v;
    if !(straddles(d1, d2) && straddles(d3, d4)) {
        return None;
    }
    let r = a1.sub(a0);
    let s = b1.sub(b0);
    let denom = r.x * s.y - r.y * s.x;
    if denom == 0.0 {
        return None;
    }
    let w = b0.sub(a0);
    let t = (w.x * s.y - w.y * s.x) / denom;
    let u = (w.x * r.y - w.y * r.x) / denom;
    Some((t.clamp(0.0, 1.0), u.clamp(0.0, 1.0)))
}

fn first_crossing(a: &[PlanarPoint], b: &[PlanarPoint]) -> Option<Crossing> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let index = ChunkIndex::new(b);
    for i in 0..a.len() - 1 {
        let (a0, a1) = (a[i], a[i + 1]);
        let (minx, maxx) = (a0.x.min(a1.x), a0.x.max(a1.x));
        let (miny, maxy) = (a0.y.min(a1.y), a0.y.max(a1.y));
        let mut found: Option<(f64, usize, f64)> = None;
        for &(lo, hi, bb) in &index.boxes {
            if bb[0] > maxx || bb[2] < minx || bb[1] > maxy || bb[3] < miny {
                continue;
            }
            for j in lo..hi {
                if let Some((t, u)) = segment_crossing(a0, a1, b[j], b[j + 1]) {
                    if found.map_or(true, |(bt, _, _)| t < bt) {
                        found = Some((t, j, u));
                    }
                }
            }
        }
        if let Some((t, j, u)) = found {
            return Some(Crossing {
                point: a0.add(a1.sub(a0).scale(t)),
                index_a: i,
                t_a: t,
                index_b: j,
                t_b: u,
            });
        }
    }
    None
}

/// First crossing of `a` with `b`, in the orientation of `a`.
pub fn intersect(a: &ManifoldSegment, b: &ManifoldSegment) -> Result<Crossing> {
    first_crossing(&a.points, &b.points).ok_or(Error::SegmentsDisjoint)
}

/// When to truncate a trace.
#[derive(Clone, Copy, Debug)]
pub enum StopRule<'a> {
    /// Leave the closed unit square.
    SquareBoundary,
    /// Cross the given segment.
    Hits(&'a ManifoldSegment),
    /// Cross the given segment shifted by an integer vector.
    HitsTranslated(&'a ManifoldSegment, PlanarPoint),
}

fn inside_square(q: PlanarPoint) -> bool {
    (0.0..=1.0).contains(&q.x) && (0.0..=1.0).contains(&q.y)
}

fn square_exit(points: &[PlanarPoint]) -> Option<(usize, PlanarPoint)> {
    let i = points.iter().skip(1).position(|q| !inside_square(*q))? + 1;
    let (q0, q1) = (points[i - 1], points[i]);
    let d = q1.sub(q0);
    let mut t: f64 = 1.0;
    for (v0, dv) in [(q0.x, d.x), (q0.y, d.y)] {
        if v0 + dv > 1.0 {
            t = t.min((1.0 - v0) / dv);
        }
        if v0 + dv < 0.0 {
            t = t.min(-v0 / dv);
        }
    }
    Some((i - 1, q0.add(d.scale(t.clamp(0.0, 1.0)))))
}

fn find_stop(points: &[PlanarPoint], stop: StopRule<'_>) -> Option<(usize, PlanarPoint)> {
    match stop {
        StopRule::SquareBoundary => square_exit(points),
        StopRule::Hits(seg) => first_crossing(points, &seg.points).map(|c| (c.index_a, c.point)),
        StopRule::HitsTranslated(seg, off) => {
            let moved: Vec<_> = seg.points.iter().map(|q| q.add(off)).collect();
            first_crossing(points, &moved).map(|c| (c.index_a, c.point))
        }
    }
}

/// Traces never need to leave this window around the unit square.
fn in_window(q: PlanarPoint) -> bool {
    (-2.0..=3.0).contains(&q.x) && (-2.0..=3.0).contains(&q.y)
}

/// Samples `curve` on `[0, t_end]` with image spacing at most `max_spacing`,
/// stopping after the first sample outside [`in_window`]. The flag reports
/// whether that happened.
fn sample_adaptive<F: Fn(f64) -> PlanarPoint>(curve: F, t_end: f64, max_spacing: f64) -> (Vec<PlanarPoint>, bool) {
    const SEEDS: usize = 16;
    const MAX_DEPTH: u32 = 48;
    let mut out = Vec::new();
    let mut prev_t = 0.0;
    let mut prev = curve(0.0);
    out.push(prev);
    for k in 1..=SEEDS {
        let t1 = t_end * k as f64 / SEEDS as f64;
        let q1 = curve(t1);
        // Depth-first bisection keeps the output ordered.
        let mut stack = vec![(t1, q1, 0u32)];
        while let Some(&(tb, qb, depth)) = stack.last() {
            if qb.sub(prev).norm() > max_spacing && depth < MAX_DEPTH {
                let tm = 0.5 * (prev_t + tb);
                stack.push((tm, curve(tm), depth + 1));
            } else {
                stack.pop();
                out.push(qb);
                if !in_window(qb) {
                    return (out, true);
                }
                prev_t = tb;
                prev = qb;
            }
        }
    }
    (out, false)
}

fn unit(v: PlanarPoint) -> PlanarPoint {
    v.scale(1.0 / v.norm())
}

/// Grows the branch of `W^{s/u}((0,0))` leaving `start_corner` into the unit
/// square by iterating the local eigen-segment of length [`LOCAL_RADIUS`],
/// and truncates it at the first point satisfying `stop`.
pub fn trace_manifold(
    map: &PerturbedCatMap,
    kind: ManifoldKind,
    start_corner: PlanarPoint,
    stop: StopRule<'_>,
    max_spacing: f64,
) -> Result<ManifoldSegment> {
    if !PartitionVertices::corners().contains(&start_corner) {
        return Err(Error::InvalidArgument(format!("{start_corner:?} is not a corner of the unit square")));
    }
    if !(max_spacing > 0.0 && max_spacing.is_finite()) {
        return Err(Error::InvalidArgument(format!("max_spacing {max_spacing}")));
    }
    let eig = eigen_directions();
    let base = unit(match kind {
        ManifoldKind::Unstable => eig.unstable,
        ManifoldKind::Stable => eig.stable,
    });
    let probe = |d: PlanarPoint| {
        let q = start_corner.add(d.scale(1e-3));
        q.x > 0.0 && q.x < 1.0 && q.y > 0.0 && q.y < 1.0
    };
    let dir = if probe(base) {
        base
    } else if probe(base.scale(-1.0)) {
        base.scale(-1.0)
    } else {
        return Err(Error::InvalidArgument(format!("{kind:?} branch at {start_corner:?} leaves the square")));
    };

    let step = |q: PlanarPoint| match kind {
        ManifoldKind::Unstable => map.apply_lift(q),
        ManifoldKind::Stable => map.apply_inverse_lift(q),
    };
    let image = step(start_corner);
    let shift = PlanarPoint::new((image.x - start_corner.x).round(), (image.y - start_corner.y).round());
    let recentred = |q: PlanarPoint| step(q).sub(shift);

    for n in 0..=MAX_TRACE_ITERATIONS {
        let curve = |t: f64| {
            let mut q = start_corner.add(dir.scale(t));
            for _ in 0..n {
                q = recentred(q);
            }
            q
        };
        let (mut points, escaped) = sample_adaptive(curve, LOCAL_RADIUS, max_spacing);
        if let Some((index, hit)) = find_stop(&points, stop) {
            points.truncate(index + 1);
            points.push(hit);
            return Ok(ManifoldSegment { kind, p: map.p(), points, max_spacing });
        }
        if escaped {
            return Err(Error::StopRuleUnreachable { iterations: n });
        }
    }
    Err(Error::StopRuleUnreachable { iterations: MAX_TRACE_ITERATIONS })
}

/// The continuation `l_p` of `l_p(0,0)` past the seam `x = 1`, shifted back
/// to start at `(0, (√5-1)/2)` and truncated where it meets `l_p(0,1)`.
pub fn trace_extension(map: &PerturbedCatMap, l01: &ManifoldSegment, max_spacing: f64) -> Result<ManifoldSegment> {
    let full = trace_manifold(
        map,
        ManifoldKind::Unstable,
        PlanarPoint::new(0.0, 0.0),
        StopRule::HitsTranslated(l01, PlanarPoint::new(1.0, 0.0)),
        max_spacing,
    )?;
    let (exit, seam) = square_exit(&full.points).ok_or(Error::SegmentsDisjoint)?;
    let left = PlanarPoint::new(-1.0, 0.0);
    let mut points = vec![PlanarPoint::new(0.0, seam.y)];
    points.extend(full.points[exit + 1..].iter().map(|q| q.add(left)));
    Ok(ManifoldSegment { kind: ManifoldKind::Unstable, p: map.p(), points, max_spacing })
}

/// `l_p(1,1) = f_p({(x, (√5-1)/2·x) : x ∈ [-2/(5+√5), 0]})` in the fundamental
/// domain `[-1,0]²`, sampled at `resolution` uniform parameters from `x = 0`.
pub fn perturbed_l11(map: &PerturbedCatMap, resolution: usize) -> Result<ManifoldSegment> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!("resolution {resolution} < 2")));
    }
    let curve = BranchCurve::new(*map);
    let x_end = -short_extent();
    let points: Vec<_> = (0..resolution)
        .map(|j| curve.shifted_point(x_end * j as f64 / (resolution - 1) as f64))
        .collect();
    let mut seg = ManifoldSegment { kind: ManifoldKind::Unstable, p: map.p(), points, max_spacing: 0.0 };
    seg.max_spacing = seg.max_gap();
    Ok(seg)
}

/// Closed-form description of `l_p(1,1)` used for exact point location.
#[derive(Clone, Copy, Debug)]
pub struct BranchCurve {
    map: PerturbedCatMap,
    lambda: f64,
    slope: f64,
}

impl BranchCurve {
    pub fn new(map: PerturbedCatMap) -> Self {
        Self { map, lambda: lambda(), slope: unstable_slope() }
    }

    /// Image of the eigen-point with abscissa `x ∈ [-2/(5+√5), 0]`, in `[-1,0]²`.
    pub fn shifted_point(&self, x: f64) -> PlanarPoint {
        self.map.apply_lift(PlanarPoint::new(x, self.slope * x))
    }

    /// The abscissa interval (unit-square coordinates) where the curve leaves its eigenline.
    pub fn perturbed_range(&self) -> (f64, f64) {
        let (lo, hi) = self.map.profile().support();
        (1.0 + self.lambda * (lo - 1.0), 1.0 + self.lambda * (hi - 1.0))
    }

    /// Parameter `x` with `λx - φ_p(x) = target` on the perturbed interval.
    fn invert(&self, target: f64) -> f64 {
        let (lo, hi) = self.map.profile().support();
        let (mut a, mut b) = (lo - 1.0, hi - 1.0);
        let g = |x: f64| {
            let j = self.map.phi_periodic(x);
            (self.lambda * x - j.value - target, self.lambda - j.derivative)
        };
        let mut x = (target / self.lambda).clamp(a, b);
        for _ in 0..100 {
            let (gx, dg) = g(x);
            if gx == 0.0 {
                return x;
            }
            if gx > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let mut next = x - gx / dg;
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - x).abs() <= 1e-17 * (1.0 + x.abs()) || b - a <= 4.0 * f64::EPSILON {
                return next;
            }
            x = next;
        }
        x
    }

    /// Height and slope of the curve above abscissa `x_unit ∈ [p₃.x, 1]` (unit-square lift).
    pub fn height_and_slope(&self, x_unit: f64) -> (f64, f64) {
        let (lo, hi) = self.perturbed_range();
        if x_unit <= lo || x_unit >= hi {
            return (self.slope * (x_unit - 1.0) + 1.0, self.slope);
        }
        let x = self.invert(x_unit - 1.0);
        let j = self.map.phi_periodic(x);
        let y = self.lambda * self.slope * x - j.value;
        let slope = (self.lambda * self.slope - j.derivative) / (self.lambda - j.derivative);
        (y + 1.0, slope)
    }

    /// `Y_p(X)` in `[-1,0]²` coordinates.
    pub fn shifted_height(&self, x_shifted: f64) -> f64 {
        self.height_and_slope(x_shifted + 1.0).0 - 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_family::{BumpKind, PerturbationProfile};

    fn map(p: f64) -> PerturbedCatMap {
        PerturbationProfile::new(0.81, 0.08, 0.01, BumpKind::SmoothExp).unwrap().at(p).unwrap()
    }

    fn close(a: PlanarPoint, b: PlanarPoint, tol: f64) -> bool {
        a.sub(b).norm() <= tol
    }

    #[test]
    fn eigen_data() {
        let e = eigen_directions();
        let a = crate::map_family::Differential2x2::<f64>::cat();
        let img = a.apply(e.unstable);
        assert!((img.x - e.lambda * e.unstable.x).abs() < 1e-15);
        assert!((img.y - e.lambda * e.unstable.y).abs() < 1e-15);
        let img = a.apply(e.stable);
        assert!((img.y - e.lambda_inv * e.stable.y).abs() < 1e-15);
        assert!((e.lambda * e.lambda_inv - 1.0).abs() < 1e-15);
        assert!((e.unstable.y - 0.618_034_0).abs() < 1e-7);
        assert!((e.stable.y + 1.618_034_0).abs() < 1e-7);
    }

    #[test]
    fn vertex_constants() {
        // 25-digit values evaluated independently with mpmath
        assert!(close(PartitionVertices::p1(), PlanarPoint::new(0.447_213_595_499_957_9, 0.276_393_202_250_021_0), 1e-15));
        assert!(close(PartitionVertices::p2(), PlanarPoint::new(0.170_820_393_249_936_9, 0.723_606_797_749_979_0), 1e-15));
        assert!(close(PartitionVertices::p3(), PlanarPoint::new(0.276_393_202_250_021_0, 0.552_786_404_500_042_1), 1e-15));
    }

    #[test]
    fn unperturbed_l00_is_the_eigenline() {
        let l00 = trace_manifold(&map(0.0), ManifoldKind::Unstable, PlanarPoint::new(0.0, 0.0), StopRule::SquareBoundary, 1e-3)
            .unwrap();
        assert!(close(l00.end(), PlanarPoint::new(1.0, unstable_slope()), 1e-12));
        for q in &l00.points {
            assert!((q.y - unstable_slope() * q.x).abs() < 1e-12);
        }
        assert!(l00.max_gap() <= 1e-3);
    }

    #[test]
    fn unperturbed_l01_ends_at_p1() {
        let m = map(0.0);
        let l00 = trace_manifold(&m, ManifoldKind::Unstable, PlanarPoint::new(0.0, 0.0), StopRule::SquareBoundary, 1e-4)
            .unwrap();
        let l01 = trace_manifold(&m, ManifoldKind::Stable, PlanarPoint::new(0.0, 1.0), StopRule::Hits(&l00), 1e-4).unwrap();
        assert!(close(l01.end(), PartitionVertices::p1(), 1e-10));
        let c = intersect(&l01, &l00).unwrap();
        assert!(close(c.point, PartitionVertices::p1(), 1e-10));
    }

    #[test]
    fn extension_meets_l01_at_p2() {
        for p in [0.0, 1.0] {
            let m = map(p);
            let l00 =
                trace_manifold(&m, ManifoldKind::Unstable, PlanarPoint::new(0.0, 0.0), StopRule::SquareBoundary, 1e-4).unwrap();
            let l01 = trace_manifold(&m, ManifoldKind::Stable, PlanarPoint::new(0.0, 1.0), StopRule::Hits(&l00), 1e-4).unwrap();
            let ext = trace_extension(&m, &l01, 1e-4).unwrap();
            assert!(close(ext.start(), PlanarPoint::new(0.0, unstable_slope()), 1e-12));
            assert!(close(ext.end(), PartitionVertices::p2(), 1e-10));
        }
    }

    #[test]
    fn parallel_segments_are_disjoint() {
        let a = ManifoldSegment {
            kind: ManifoldKind::Unstable,
            p: 0.0,
            points: vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(1.0, unstable_slope())],
            max_spacing: 2.0,
        };
        let b = a.translated(PlanarPoint::new(0.0, 0.1));
        assert_eq!(intersect(&a, &b), Err(Error::SegmentsDisjoint));
    }

    #[test]
    fn stable_branch_from_origin_is_rejected() {
        let r = trace_manifold(&map(0.0), ManifoldKind::Stable, PlanarPoint::new(0.0, 0.0), StopRule::SquareBoundary, 1e-3);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
        let r = trace_manifold(&map(0.0), ManifoldKind::Stable, PlanarPoint::new(0.3, 0.0), StopRule::SquareBoundary, 1e-3);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unreachable_stop_is_reported() {
        let far = ManifoldSegment {
            kind: ManifoldKind::Stable,
            p: 0.0,
            points: vec![PlanarPoint::new(50.0, 50.0), PlanarPoint::new(51.0, 50.0)],
            max_spacing: 1.0,
        };
        let r = trace_manifold(&map(0.0), ManifoldKind::Stable, PlanarPoint::new(0.0, 1.0), StopRule::Hits(&far), 0.05);
        assert!(matches!(r, Err(Error::StopRuleUnreachable { .. })));
    }

    #[test]
    fn perturbed_l11_endpoints() {
        let seg = perturbed_l11(&map(1.0), 1001).unwrap();
        assert_eq!(seg.start(), PlanarPoint::new(0.0, 0.0));
        // λ·2/(5+√5) = 1 - 2/(5+√5) = 0.7236067977…
        assert!((seg.end().x + 0.723_606_797_749_979).abs() < 1e-14);
        assert!(seg.points.windows(2).all(|w| w[1].x < w[0].x));
        let flat = perturbed_l11(&map(0.0), 101).unwrap();
        for q in &flat.points {
            assert!((q.y - unstable_slope() * q.x).abs() < 1e-15);
        }
        assert!(perturbed_l11(&map(0.0), 1).is_err());
    }

    #[test]
    fn perturbed_l11_differs_only_on_image_of_strip() {
        let a = perturbed_l11(&map(1.0), 4001).unwrap();
        let b = perturbed_l11(&map(0.0), 4001).unwrap();
        let lam = lambda();
        let (lo, hi) = (lam * (0.73 - 1.0), lam * (0.89 - 1.0));
        let mut moved = 0;
        for (qa, qb) in a.points.iter().zip(&b.points) {
            if qb.x <= lo - 1e-12 || qb.x >= hi + 1e-12 {
                assert_eq!(qa, qb);
            } else if qa != qb {
                moved += 1;
            }
        }
        assert!(moved > 100);
    }

    #[test]
    fn branch_curve_height_matches_parametric_points() {
        let m = map(1.0);
        let c = BranchCurve::new(m);
        let (lo, hi) = c.perturbed_range();
        for i in 0..=200 {
            let x = -0.723 * i as f64 / 200.0;
            let q = c.shifted_point(x);
            let (y, _) = c.height_and_slope(q.x + 1.0);
            assert!((y - 1.0 - q.y).abs() < 1e-14, "x={x}");
        }
        assert!(lo > PartitionVertices::p3().x && hi < 1.0);
    }
}
