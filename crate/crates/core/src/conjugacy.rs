//! The conjugacy `h_p` with `f_p ∘ h_p = h_p ∘ f_0`, evaluated pointwise by
//! shadowing `f_0`-orbits with true `f_p`-orbits, and the curves
//! `Γ_β = {(p, h_p(β))}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ergodic::{birkhoff_conjugate, BirkhoffResult};
use crate::manifolds::{stable_slope, unstable_slope};
use crate::map_family::PerturbedCatMap;
use crate::partition::Partition;
use crate::symbolic::{cylinder_locate, itinerary_of_orbit, orbit_window, refined_of_orbit, MAX_DEPTH};
use crate::torus::{displacement, dist, PlanarPoint, TorusPoint};

/// Newton stops once every defect `|f_p(z_k) - z_{k+1}|` is below this.
pub const SHADOW_TOL: f64 = 1e-12;
pub const SHADOW_MAX_ITERATIONS: usize = 50;
/// Orbit points closer than this to the boundary do not count for itinerary checks.
pub const ITINERARY_MARGIN: f64 = 1e-6;
/// Half-width of the window over which a result's residual is measured.
pub const RESIDUAL_WINDOW: usize = 10;
/// Extra steps shadowed on each side of the itinerary window; the truncation error at the
/// centre decays like `λ^-(N + pad)`.
pub const SHADOW_PADDING: usize = 30;

/// An `f_0`-orbit window `w_{-N}, …, w_N`, used as a pseudo-orbit of `f_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoOrbit {
    pub p: f64,
    pub n: usize,
    pub points: Vec<TorusPoint>,
}

impl PseudoOrbit {
    /// The window `f_0^k(β)`, `|k| ≤ n`, computed with the unperturbed partition's map.
    pub fn from_base(base: &Partition, p: f64, beta: TorusPoint, n: usize) -> Self {
        Self { p, n, points: orbit_window(base, beta, n, n) }
    }

    pub fn center(&self) -> TorusPoint {
        self.points[self.n]
    }

    /// Largest one-step defect with respect to `map`.
    pub fn defect(&self, map: &PerturbedCatMap) -> f64 {
        self.points.windows(2).map(|w| dist(map.apply(w[0]), w[1])).fold(0.0, f64::max)
    }
}

/// Outcome of a converged Newton solve.
#[derive(Clone, Copy, Debug)]
pub struct ShadowStats {
    pub residual: f64,
    pub iterations: usize,
}

/// A true orbit found near a pseudo-orbit.
#[derive(Clone, Debug)]
pub struct Shadow {
    pub orbit: Vec<TorusPoint>,
    pub residual: f64,
    pub iterations: usize,
}

/// Scratch space for [`shadow_into`], reusable across calls.
#[derive(Default)]
pub struct ShadowWorkspace {
    dphi: Vec<f64>,
    defect: Vec<PlanarPoint>,
    u: Vec<PlanarPoint>,
    s: Vec<PlanarPoint>,
    mu: Vec<f64>,
    nu: Vec<f64>,
    alpha: Vec<f64>,
}

fn unit(v: PlanarPoint) -> PlanarPoint {
    v.scale(1.0 / len(v))
}

// vectors in the Newton sweeps are O(1), so no hypot scaling
#[inline]
fn len(v: PlanarPoint) -> f64 {
    (v.x * v.x + v.y * v.y).sqrt()
}

/// Newton's method for `z_{k+1} = f_p(z_k)` starting from `orbit`, in place.
///
/// Each linearized step `δ_{k+1} = Df(z_k)δ_k + r_k` is solved exactly in
/// the moving frame `u_k` (pushed forward from the unstable eigenvector) and
/// `s_k` (pulled back from the stable one). The stable coefficient is swept
/// forward from 0 at the first point and the unstable one backward from 0
/// at the last, so both recursions contract.
pub fn shadow_into(map: &PerturbedCatMap, orbit: &mut [TorusPoint], tol: f64, ws: &mut ShadowWorkspace) -> Result<ShadowStats> {
    newton(map, orbit, tol, false, ws)
}

/// Like [`shadow_into`], but once `tol` is met keeps iterating until the residual
/// stops halving, so the result sits at the rounding floor.
pub fn shadow_polished_into(
    map: &PerturbedCatMap,
    orbit: &mut [TorusPoint],
    tol: f64,
    ws: &mut ShadowWorkspace,
) -> Result<ShadowStats> {
    newton(map, orbit, tol, true, ws)
}

fn newton(map: &PerturbedCatMap, orbit: &mut [TorusPoint], tol: f64, polish: bool, ws: &mut ShadowWorkspace) -> Result<ShadowStats> {
    let m = orbit.len();
    if m < 2 {
        return Err(Error::InvalidArgument("pseudo-orbit needs at least two points".into()));
    }
    for buf in [&mut ws.defect, &mut ws.u, &mut ws.s] {
        buf.resize(m, PlanarPoint::new(0.0, 0.0));
    }
    for buf in [&mut ws.dphi, &mut ws.mu, &mut ws.nu, &mut ws.alpha] {
        buf.resize(m, 0.0);
    }
    let e_u = unit(PlanarPoint::new(1.0, unstable_slope()));
    let e_s = unit(PlanarPoint::new(1.0, stable_slope()));
    let mut residual = f64::INFINITY;
    let mut previous = f64::INFINITY;
    let mut saved: Vec<TorusPoint> = Vec::new();
    for iteration in 0..=SHADOW_MAX_ITERATIONS {
        residual = 0.0;
        for k in 0..m - 1 {
            let (x, y) = (orbit[k].x(), orbit[k].y());
            let jet = map.phi_reduced(x);
            let image = TorusPoint::wrap_unchecked(2.0 * x + y - jet.value, x + y - jet.value);
            let r = displacement(image, orbit[k + 1]);
            ws.defect[k] = r;
            ws.dphi[k] = jet.derivative;
            residual = residual.max(r.x * r.x + r.y * r.y);
        }
        residual = residual.sqrt();
        if polish && previous <= tol && residual >= 0.5 * previous {
            if residual > previous {
                orbit.copy_from_slice(&saved);
                residual = previous;
            }
            return Ok(ShadowStats { residual, iterations: iteration });
        }
        if residual <= tol && !polish {
            return Ok(ShadowStats { residual, iterations: iteration });
        }
        if polish && residual <= tol {
            saved.clear();
            saved.extend_from_slice(orbit);
        }
        previous = residual;
        if polish && iteration == SHADOW_MAX_ITERATIONS && residual <= tol {
            return Ok(ShadowStats { residual, iterations: iteration });
        }
        if iteration == SHADOW_MAX_ITERATIONS || !residual.is_finite() {
            break;
        }
        // Df = [[2 - φ', 1], [1 - φ', 1]], det Df = 1
        ws.s[m - 1] = e_s;
        for k in (0..m - 1).rev() {
            let (a, c) = (2.0 - ws.dphi[k], 1.0 - ws.dphi[k]);
            let t = ws.s[k + 1];
            let v = PlanarPoint::new(t.x - t.y, -c * t.x + a * t.y);
            let l = len(v);
            ws.nu[k] = 1.0 / l;
            ws.s[k] = v.scale(1.0 / l);
        }
        ws.u[0] = e_u;
        let mut beta = 0.0;
        for k in 0..m - 1 {
            let (a, c) = (2.0 - ws.dphi[k], 1.0 - ws.dphi[k]);
            let t = ws.u[k];
            let v = PlanarPoint::new(a * t.x + t.y, c * t.x + t.y);
            ws.mu[k] = len(v);
            let u = v.scale(1.0 / ws.mu[k]);
            ws.u[k + 1] = u;
            let (s, r) = (ws.s[k + 1], ws.defect[k]);
            let det = u.x * s.y - u.y * s.x;
            // defect r = ρu·u + ρs·s; ρu parked in alpha until the backward sweep
            ws.alpha[k] = (r.x * s.y - r.y * s.x) / det;
            let rho_s = (u.x * r.y - u.y * r.x) / det;
            let delta_s = ws.s[k].scale(beta);
            let q = orbit[k].lift().add(delta_s);
            orbit[k] = TorusPoint::wrap_unchecked(q.x, q.y);
            beta = ws.nu[k] * beta + rho_s;
        }
        let mut alpha = 0.0;
        for k in (0..m).rev() {
            if k < m - 1 {
                alpha = (alpha - ws.alpha[k]) / ws.mu[k];
            }
            let mut q = orbit[k].lift().add(ws.u[k].scale(alpha));
            if k == m - 1 {
                q = q.add(ws.s[k].scale(beta));
            }
            if !q.is_finite() {
                return Err(Error::ShadowingDiverged { residual, iterations: iteration });
            }
            orbit[k] = TorusPoint::wrap_unchecked(q.x, q.y);
        }
    }
    Err(Error::ShadowingDiverged { residual, iterations: SHADOW_MAX_ITERATIONS })
}

/// Shadows a whole pseudo-orbit with a fresh workspace.
pub fn shadow_orbit(map: &PerturbedCatMap, points: &[TorusPoint], tol: f64) -> Result<Shadow> {
    let mut orbit = points.to_vec();
    let stats = shadow_into(map, &mut orbit, tol, &mut ShadowWorkspace::default())?;
    Ok(Shadow { orbit, residual: stats.residual, iterations: stats.iterations })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Shadowing,
    CylinderOracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Shadowing => "shadowing",
            Method::CylinderOracle => "cylinder_oracle",
        }
    }
}

/// An estimate of `h_p(β)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConjugacyPointResult {
    pub point: TorusPoint,
    /// Largest one-step defect of the point's orbit over `|k| ≤ 10`.
    pub residual: f64,
    pub depth: usize,
    pub method: Method,
    /// Depth to which the point's itinerary under `f_p` equals that of `β` under `f_0`.
    pub itinerary_depth_matched: usize,
}

fn window_residual(map: &PerturbedCatMap, orbit: &[TorusPoint], center: usize) -> f64 {
    let lo = center.saturating_sub(RESIDUAL_WINDOW);
    let hi = (center + RESIDUAL_WINDOW).min(orbit.len() - 1);
    (lo..hi).map(|k| dist(map.apply(orbit[k]), orbit[k + 1])).fold(0.0, f64::max)
}

/// Shadows the pseudo-orbit with `f_p` and returns the time-0 point.
pub fn shadow_solve(map: &PerturbedCatMap, pseudo: &PseudoOrbit, tol: f64) -> Result<ConjugacyPointResult> {
    let shadow = shadow_orbit(map, &pseudo.points, tol)?;
    Ok(ConjugacyPointResult {
        point: shadow.orbit[pseudo.n],
        residual: window_residual(map, &shadow.orbit, pseudo.n),
        depth: pseudo.n,
        method: Method::Shadowing,
        itinerary_depth_matched: pseudo.n,
    })
}

/// Largest `d ≤ n` such that every orbit point with `|k| ≤ d` keeps the margin.
fn margin_depth(partition: &Partition, orbit: &[TorusPoint], n: usize) -> usize {
    let ok = |k: usize| partition.boundary_distance(orbit[k]) >= ITINERARY_MARGIN;
    if !ok(n) {
        return 0;
    }
    (1..=n).take_while(|&j| ok(n + j) && ok(n - j)).last().unwrap_or(0)
}

/// `h_p(β)` from a window of half-width `n ≤ 30`.
///
/// The shadow of the `f_0`-orbit is accepted when its itinerary under
/// `f_p` agrees with that of `β` under `f_0` as deep as both orbits stay
/// [`ITINERARY_MARGIN`] away from the boundary; otherwise the cylinder
/// search is run on the refined word of `β`.
pub fn conjugacy_point(base: &Partition, target: &Partition, beta: TorusPoint, n: usize) -> Result<ConjugacyPointResult> {
    if n > MAX_DEPTH || n == 0 {
        return Err(Error::InvalidArgument(format!("window {n} outside 1..={MAX_DEPTH}")));
    }
    if target.p() == 0.0 {
        return Ok(ConjugacyPointResult {
            point: beta,
            residual: 0.0,
            depth: n,
            method: Method::Shadowing,
            itinerary_depth_matched: n,
        });
    }
    let pseudo = PseudoOrbit::from_base(base, target.p(), beta, n + SHADOW_PADDING);
    let core = &pseudo.points[SHADOW_PADDING..=SHADOW_PADDING + 2 * n];
    let word = itinerary_of_orbit(base, core, n);
    let mut shadow = pseudo.points.clone();
    let solved = shadow_polished_into(target.map(), &mut shadow, SHADOW_TOL, &mut ShadowWorkspace::default());
    let failure = match solved {
        Ok(_) => {
            let orbit = &shadow[SHADOW_PADDING..=SHADOW_PADDING + 2 * n];
            let matched = itinerary_of_orbit(target, orbit, n).matched_depth(&word);
            let needed = margin_depth(base, core, n).min(margin_depth(target, orbit, n));
            match matched {
                Some(d) if d >= needed => {
                    return Ok(ConjugacyPointResult {
                        point: orbit[n],
                        residual: window_residual(target.map(), orbit, n),
                        depth: n,
                        method: Method::Shadowing,
                        itinerary_depth_matched: d,
                    })
                }
                _ => format!("shadow itinerary diverges at depth {matched:?}, margin depth {needed}"),
            }
        }
        Err(e) => e.to_string(),
    };
    let refined = refined_of_orbit(base, core, n);
    let cylinder = cylinder_locate(target, &refined)
        .map_err(|e| Error::ConjugacyUnresolved(format!("{failure}; oracle: {e}")))?;
    let orbit = orbit_window(target, cylinder.center, n, n);
    let found = itinerary_of_orbit(target, &orbit, n);
    Ok(ConjugacyPointResult {
        point: cylinder.center,
        residual: window_residual(target.map(), &orbit, n),
        depth: n,
        method: Method::CylinderOracle,
        itinerary_depth_matched: found.matched_depth(&word).unwrap_or(0),
    })
}

/// `max_{|k| ≤ window} dist(h_p(f_0^k β), f_p^k(point))`.
pub fn commutation_residual(
    base: &Partition,
    target: &Partition,
    beta: TorusPoint,
    point: TorusPoint,
    window: usize,
    n: usize,
) -> Result<f64> {
    let betas = orbit_window(base, beta, window, window);
    let images = orbit_window(target, point, window, window);
    let mut worst: f64 = 0.0;
    for (b, q) in betas.iter().zip(&images) {
        let h = conjugacy_point(base, target, *b, n)?;
        worst = worst.max(dist(h.point, *q));
    }
    Ok(worst)
}

/// Uniform random `β` whose `f_0`-orbit over `|k| ≤ depth` stays `margin` away from the boundary.
pub fn sample_admissible_betas(base: &Partition, count: usize, seed: u64, depth: usize, margin: f64) -> Result<Vec<TorusPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let budget = 1000 * count.max(1);
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        let beta = TorusPoint::new(rng.gen(), rng.gen())?;
        if orbit_window(base, beta, depth, depth).iter().all(|&q| base.boundary_distance(q) >= margin) {
            out.push(beta);
        }
    }
    if out.len() < count {
        return Err(Error::InvalidArgument(format!("only {} admissible points in {budget} draws", out.len())));
    }
    Ok(out)
}

/// One grid point of a sampled `Γ_β`.
#[derive(Clone, Debug)]
pub struct FoliationEntry {
    pub p: f64,
    pub conjugacy: Result<ConjugacyPointResult>,
    /// Birkhoff average of `χ_{R¹_p}` along `h_p(f_0^k β)`.
    pub birkhoff: Option<BirkhoffResult>,
    /// Steps where the symbol under `f_p` differs from that of `β` under `f_0`.
    pub symbol_mismatches: u64,
    pub m1_exact: f64,
}

#[derive(Clone, Debug)]
pub struct FoliationSample {
    pub beta: TorusPoint,
    pub entries: Vec<FoliationEntry>,
}

/// Samples `Γ_β` over the given partitions; the first must be the unperturbed one.
///
/// Failures are recorded per entry. The Birkhoff average at `p` runs along
/// the shadowed orbit `h_p(f_0^k β)`, which is the `f_p`-orbit of `h_p(β)`.
pub fn gamma_curve(
    partitions: &[Partition],
    beta: TorusPoint,
    n: usize,
    birkhoff_n: u64,
    checkpoints: &[u64],
) -> Result<FoliationSample> {
    let base = partitions.first().ok_or_else(|| Error::InvalidArgument("empty p grid".into()))?;
    if base.p() != 0.0 {
        return Err(Error::InvalidArgument("the p grid must start at 0".into()));
    }
    let entries = partitions
        .par_iter()
        .map(|part| {
            let conjugacy = conjugacy_point(base, part, beta, n);
            let (birkhoff, symbol_mismatches) = match birkhoff_conjugate(base, part, beta, birkhoff_n, checkpoints) {
                Ok(run) => (Some(run.result), run.mismatches),
                Err(_) => (None, 0),
            };
            FoliationEntry { p: part.p(), conjugacy, birkhoff, symbol_mismatches, m1_exact: part.m1_exact() }
        })
        .collect();
    Ok(FoliationSample { beta, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_family::{BumpKind, PerturbationProfile};

    fn partition(p: f64) -> Partition {
        let prof = PerturbationProfile::new(0.81, 0.08, 0.01, BumpKind::SmoothExp).unwrap();
        Partition::build(&prof, p, 1e-4).unwrap()
    }

    #[test]
    fn unperturbed_shadow_is_the_orbit() {
        let base = partition(0.0);
        let beta = TorusPoint::new(0.318, 0.577).unwrap();
        let pseudo = PseudoOrbit::from_base(&base, 0.0, beta, 30);
        let r = shadow_solve(base.map(), &pseudo, SHADOW_TOL).unwrap();
        assert_eq!(r.point, beta);
        assert!(r.residual <= 1e-14);
    }

    #[test]
    fn fixed_point_is_its_own_shadow() {
        let base = partition(0.0);
        let target = partition(1.0);
        let r = conjugacy_point(&base, &target, TorusPoint::origin(), 30).unwrap();
        assert_eq!(r.point, TorusPoint::origin());
        assert_eq!(r.itinerary_depth_matched, 30);
    }

    #[test]
    fn perturbed_shadow_is_close_and_exact() {
        let base = partition(0.0);
        let target = partition(1.0);
        let betas = sample_admissible_betas(&base, 4, 17, 30, 1e-6).unwrap();
        for beta in betas {
            let pseudo = PseudoOrbit::from_base(&base, 1.0, beta, 30);
            assert!(pseudo.defect(target.map()) <= 2f64.sqrt() * 0.01 + 1e-12);
            let r = shadow_solve(target.map(), &pseudo, SHADOW_TOL).unwrap();
            assert!(r.residual <= 1e-10);
            assert!(dist(r.point, beta) <= 5.0 * 0.01);
            let c = conjugacy_point(&base, &target, beta, 30).unwrap();
            assert_eq!(c.method, Method::Shadowing);
            assert!(c.itinerary_depth_matched >= 20, "{c:?}");
        }
    }

    #[test]
    fn identity_at_zero() {
        let base = partition(0.0);
        let beta = TorusPoint::new(0.1234, 0.8765).unwrap();
        let r = conjugacy_point(&base, &base, beta, 30).unwrap();
        assert_eq!(r.point, beta);
        assert_eq!(r.residual, 0.0);
        assert_eq!(commutation_residual(&base, &base, beta, beta, 20, 30).unwrap(), 0.0);
    }

    #[test]
    fn one_step_equivariance() {
        let base = partition(0.0);
        let target = partition(0.5);
        let beta = sample_admissible_betas(&base, 1, 99, 30, 1e-6).unwrap()[0];
        let h = conjugacy_point(&base, &target, beta, 30).unwrap().point;
        let h1 = conjugacy_point(&base, &target, base.map().apply(beta), 30).unwrap().point;
        assert!(dist(h1, target.map().apply(h)) <= 1e-8);
    }

    #[test]
    fn window_bounds() {
        let base = partition(0.0);
        assert!(conjugacy_point(&base, &base, TorusPoint::origin(), 31).is_err());
        assert!(conjugacy_point(&base, &base, TorusPoint::origin(), 0).is_err());
    }
}
