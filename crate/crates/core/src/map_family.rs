//! The perturbed cat-map family `f_p(x, y) = (2x + y - φ_p(x), x + y - φ_p(x)) mod 1`
//! with `φ_p = p·ε₀·C`, its inverse and differential, and a cone-field check of
//! hyperbolicity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::torus::{reduce, PlanarPoint, TorusPoint};

/// Left end of the admissible strip, `1 - 2/(5 + √5)`.
pub fn strip_lower_bound<T: Real>() -> T {
    let s5 = T::lit(5.0).sqrt();
    T::one() - T::lit(2.0) / (T::lit(5.0) + s5)
}

/// Right end of the admissible strip, `2/√5`. Beyond it the preimage of the
/// backward unstable branch from `(1,1)` enters the strip.
pub fn strip_upper_bound<T: Real>() -> T {
    T::lit(2.0) / T::lit(5.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpKind {
    /// `exp(1 - 1/(1 - t²))`, C^∞.
    SmoothExp,
    /// `(1 - t²)³`, C².
    Polynomial,
}

/// Value and first derivative of a scalar function at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet1D<T = f64> {
    pub value: T,
    pub derivative: T,
}

impl<T: Real> Jet1D<T> {
    fn zero() -> Self {
        Self { value: T::zero(), derivative: T::zero() }
    }
}

/// Bump placement `(a, δ)`, amplitude `ε₀` and shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationProfile<T = f64> {
    a: T,
    delta: T,
    eps0: T,
    bump_kind: BumpKind,
}

impl<T: Real> PerturbationProfile<T> {
    pub fn new(a: T, delta: T, eps0: T, bump_kind: BumpKind) -> Result<Self> {
        if !(a.is_finite() && delta.is_finite() && eps0.is_finite()) {
            return Err(Error::InvalidProfile("non-finite field".into()));
        }
        if delta <= T::zero() {
            return Err(Error::InvalidProfile(format!("delta must be positive, got {delta}")));
        }
        if eps0 < T::zero() {
            return Err(Error::InvalidProfile(format!("eps0 must be non-negative, got {eps0}")));
        }
        let lo = strip_lower_bound::<T>();
        if a - delta <= lo {
            return Err(Error::InvalidProfile(format!(
                "a - delta = {} must exceed 1 - 2/(5+sqrt5) = {lo}",
                a - delta
            )));
        }
        let hi = strip_upper_bound::<T>();
        if a + delta >= hi {
            return Err(Error::InvalidProfile(format!(
                "a + delta = {} must stay below 2/sqrt5 = {hi}",
                a + delta
            )));
        }
        Ok(Self { a, delta, eps0, bump_kind })
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn eps0(&self) -> T {
        self.eps0
    }

    pub fn bump_kind(&self) -> BumpKind {
        self.bump_kind
    }

    /// Same placement and shape, different amplitude.
    pub fn with_eps0(&self, eps0: T) -> Result<Self> {
        Self::new(self.a, self.delta, eps0, self.bump_kind)
    }

    /// Open support `(a - δ, a + δ)` of the bump.
    pub fn support(&self) -> (T, T) {
        (self.a - self.delta, self.a + self.delta)
    }

    /// `C(x)` and `C'(x)` for `x ∈ [0, 1)`.
    pub fn bump_eval(&self, x: T) -> Result<Jet1D<T>> {
        if !(x >= T::zero() && x < T::one()) {
            return Err(Error::UnreducedCoordinate(x.to_f64_lossy()));
        }
        Ok(self.bump_unchecked(x))
    }

    #[inline]
    pub(crate) fn bump_unchecked(&self, x: T) -> Jet1D<T> {
        let (lo, hi) = self.support();
        if x <= lo || x >= hi {
            return Jet1D::zero();
        }
        let t = (x - self.a) / self.delta;
        let q = T::one() - t * t;
        let two = T::lit(2.0);
        match self.bump_kind {
            BumpKind::SmoothExp => {
                let value = (T::one() - T::one() / q).exp();
                let dcdt = -two * t / (q * q) * value;
                Jet1D { value, derivative: dcdt / self.delta }
            }
            BumpKind::Polynomial => {
                let value = q * q * q;
                let dcdt = -T::lit(6.0) * t * q * q;
                Jet1D { value, derivative: dcdt / self.delta }
            }
        }
    }

    /// `φ_p(x) = p·ε₀·C(x)` and its derivative.
    pub fn phi(&self, p: T, x: T) -> Result<Jet1D<T>> {
        check_parameter(p)?;
        let c = self.bump_eval(x)?;
        let k = p * self.eps0;
        Ok(Jet1D { value: k * c.value, derivative: k * c.derivative })
    }

    /// The map `f_p` for a fixed parameter.
    pub fn at(&self, p: T) -> Result<PerturbedCatMap<T>> {
        check_parameter(p)?;
        Ok(PerturbedCatMap { profile: *self, p, amplitude: p * self.eps0 })
    }

    /// Upper bound of `|C'|` over the support, from the closed form.
    pub fn max_bump_slope(&self) -> T {
        let dcdt = match self.bump_kind {
            // max |d/dt exp(1-1/(1-t²))| at t ≈ 0.759836
            BumpKind::SmoothExp => T::lit(2.170_357_085_710_339),
            // attained at t = 1/√5
            BumpKind::Polynomial => T::lit(6.0 / 5f64.sqrt() * 0.64),
        };
        dcdt / self.delta
    }
}

fn check_parameter<T: Real>(p: T) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(p.to_f64_lossy()))
    }
}

/// Row-major 2×2 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Differential2x2<T = f64> {
    pub d11: T,
    pub d12: T,
    pub d21: T,
    pub d22: T,
}

impl<T: Real> Differential2x2<T> {
    pub fn cat() -> Self {
        Self { d11: T::lit(2.0), d12: T::one(), d21: T::one(), d22: T::one() }
    }

    pub fn det(&self) -> T {
        self.d11 * self.d22 - self.d12 * self.d21
    }

    #[inline]
    pub fn apply(&self, v: PlanarPoint<T>) -> PlanarPoint<T> {
        PlanarPoint::new(self.d11 * v.x + self.d12 * v.y, self.d21 * v.x + self.d22 * v.y)
    }

    pub fn inverse(&self) -> Self {
        let d = self.det();
        Self { d11: self.d22 / d, d12: -self.d12 / d, d21: -self.d21 / d, d22: self.d11 / d }
    }

    /// Operator 2-norm.
    pub fn norm(&self) -> T {
        self.singular_values().1
    }

    /// `(σ_min, σ_max)`.
    pub fn singular_values(&self) -> (T, T) {
        let two = T::lit(2.0);
        let frob2 = self.d11 * self.d11 + self.d12 * self.d12 + self.d21 * self.d21 + self.d22 * self.d22;
        let det = self.det().abs();
        let disc = (frob2 * frob2 - T::lit(4.0) * det * det).max(T::zero()).sqrt();
        let s_max = ((frob2 + disc) / two).sqrt();
        let s_min = if s_max > T::zero() { det / s_max } else { T::zero() };
        (s_min, s_max)
    }
}

/// `f_p` for a fixed `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbedCatMap<T = f64> {
    profile: PerturbationProfile<T>,
    p: T,
    amplitude: T,
}

impl<T: Real> PerturbedCatMap<T> {
    pub fn profile(&self) -> &PerturbationProfile<T> {
        &self.profile
    }

    pub fn p(&self) -> T {
        self.p
    }

    /// `φ_p(x)` for `x` already reduced into `[0, 1)`.
    #[inline]
    pub fn phi_reduced(&self, x: T) -> Jet1D<T> {
        if self.amplitude == T::zero() {
            return Jet1D::zero();
        }
        let c = self.profile.bump_unchecked(x);
        Jet1D { value: self.amplitude * c.value, derivative: self.amplitude * c.derivative }
    }

    /// `φ_p` extended 1-periodically to the real line.
    #[inline]
    pub fn phi_periodic(&self, x: T) -> Jet1D<T> {
        self.phi_reduced(reduce(x))
    }

    #[inline]
    pub fn apply(&self, z: TorusPoint<T>) -> TorusPoint<T> {
        let (x, y) = (z.x(), z.y());
        let phi = self.phi_reduced(x).value;
        let two = T::lit(2.0);
        TorusPoint::wrap_unchecked(two * x + y - phi, x + y - phi)
    }

    #[inline]
    pub fn apply_inverse(&self, z: TorusPoint<T>) -> TorusPoint<T> {
        let (u, v) = (z.x(), z.y());
        let x = reduce(u - v);
        let phi = self.phi_reduced(x).value;
        let two = T::lit(2.0);
        TorusPoint::wrap_unchecked(x, two * v - u + phi)
    }

    /// The continuous lift of `f_p` to `R²`.
    #[inline]
    pub fn apply_lift(&self, q: PlanarPoint<T>) -> PlanarPoint<T> {
        let phi = self.phi_periodic(q.x).value;
        let two = T::lit(2.0);
        PlanarPoint::new(two * q.x + q.y - phi, q.x + q.y - phi)
    }

    /// The continuous lift of `f_p⁻¹` to `R²`.
    #[inline]
    pub fn apply_inverse_lift(&self, q: PlanarPoint<T>) -> PlanarPoint<T> {
        let x = q.x - q.y;
        let phi = self.phi_periodic(x).value;
        let two = T::lit(2.0);
        PlanarPoint::new(x, two * q.y - q.x + phi)
    }

    #[inline]
    pub fn differential(&self, z: TorusPoint<T>) -> Differential2x2<T> {
        self.differential_at_x(z.x())
    }

    /// `Df_p` depends only on the first coordinate.
    #[inline]
    pub fn differential_at_x(&self, x: T) -> Differential2x2<T> {
        let dphi = self.phi_periodic(x).derivative;
        let two = T::lit(2.0);
        Differential2x2 { d11: two - dphi, d12: T::one(), d21: T::one() - dphi, d22: T::one() }
    }

    /// Global bound on `‖Df_p‖` (and `‖Df_p⁻¹‖`, since `det = 1`).
    pub fn lipschitz_bound(&self) -> T {
        let lambda = (T::lit(3.0) + T::lit(5.0).sqrt()) / T::lit(2.0);
        lambda + T::SQRT_2() * self.amplitude.abs() * self.profile.max_bump_slope()
    }
}

/// Outcome of the constant-cone hyperbolicity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub p_grid: Vec<f64>,
    pub grid_size: usize,
    pub min_expansion: f64,
    pub min_contraction_inverse: f64,
    pub cone_halfwidth: f64,
    /// Samples at which a cone edge left the cone or flipped orientation.
    pub violations: usize,
    pub passed: bool,
}

/// Minimum of `‖Mv‖/‖v‖` over `v = (1, s)`, `s ∈ [s_lo, s_hi]`.
fn min_stretch<T: Real>(m: &Differential2x2<T>, s_lo: T, s_hi: T) -> T {
    let at = |s: T| {
        let v = PlanarPoint::new(T::one(), s);
        m.apply(v).norm() / v.norm()
    };
    let mut best = at(s_lo).min(at(s_hi));
    // Smallest right singular vector of M: eigenvector of MᵀM for its small eigenvalue.
    let a = m.d11 * m.d11 + m.d21 * m.d21;
    let b = m.d11 * m.d12 + m.d21 * m.d22;
    let c = m.d12 * m.d12 + m.d22 * m.d22;
    let tr = a + c;
    let disc = ((a - c) * (a - c) + T::lit(4.0) * b * b).sqrt();
    let mu = (tr - disc) / T::lit(2.0);
    // (a - mu) vx + b vy = 0
    if b.abs() > T::epsilon() {
        let s = (mu - a) / b;
        if s >= s_lo && s <= s_hi {
            best = best.min(at(s));
        }
    }
    best
}

/// Checks that the unstable cone `|s - (√5-1)/2| ≤ w` is mapped strictly into
/// itself by `Df_p` and the stable cone `|s + (√5+1)/2| ≤ w` by `Df_p⁻¹`, at
/// every point `(i/n, j/n)` of the grid and every `p` of `p_grid`.
pub fn verify_cones<T: Real>(
    profile: &PerturbationProfile<T>,
    p_grid: &[T],
    grid_size: usize,
    cone_halfwidth: T,
) -> Result<ConeReport> {
    if grid_size < 64 {
        return Err(Error::InvalidGrid(format!("grid_size {grid_size} < 64")));
    }
    if !(cone_halfwidth > T::zero() && cone_halfwidth < T::lit(0.5)) {
        return Err(Error::InvalidGrid(format!("cone halfwidth {cone_halfwidth} outside (0, 0.5)")));
    }
    if p_grid.is_empty() {
        return Err(Error::InvalidGrid("empty p grid".into()));
    }
    let s5 = T::lit(5.0).sqrt();
    let two = T::lit(2.0);
    let su = (s5 - T::one()) / two;
    let ss = -(s5 + T::one()) / two;
    let w = cone_halfwidth;
    let n = T::from_usize(grid_size).unwrap();

    let mut min_expansion = T::infinity();
    let mut min_contraction_inverse = T::infinity();
    let mut violations = 0usize;

    let inside = |m: &Differential2x2<T>, centre: T| {
        let mut ok = true;
        for s in [centre - w, centre + w] {
            let img = m.apply(PlanarPoint::new(T::one(), s));
            if img.x <= T::zero() {
                ok = false;
                continue;
            }
            let slope = img.y / img.x;
            if !(slope > centre - w && slope < centre + w) {
                ok = false;
            }
        }
        ok
    };

    for &p in p_grid {
        let map = profile.at(p)?;
        for i in 0..grid_size {
            let x = T::from_usize(i).unwrap() / n;
            // Df_p depends on x only, but every grid point is visited.
            let m = map.differential_at_x(x);
            let minv = m.inverse();
            for _j in 0..grid_size {
                if !inside(&m, su) {
                    violations += 1;
                }
                if !inside(&minv, ss) {
                    violations += 1;
                }
                min_expansion = min_expansion.min(min_stretch(&m, su - w, su + w));
                min_contraction_inverse = min_contraction_inverse.min(min_stretch(&minv, ss - w, ss + w));
            }
        }
    }

    let passed = violations == 0 && min_expansion > T::one() && min_contraction_inverse > T::one();
    Ok(ConeReport {
        p_grid: p_grid.iter().map(|p| p.to_f64_lossy()).collect(),
        grid_size,
        min_expansion: min_expansion.to_f64_lossy(),
        min_contraction_inverse: min_contraction_inverse.to_f64_lossy(),
        cone_halfwidth: w.to_f64_lossy(),
        violations,
        passed,
    })
}

/// Candidate amplitudes tried by [`calibrate_eps0`], largest first.
/// Half-width of the constant slope cones used by default.
pub const DEFAULT_CONE_HALFWIDTH: f64 = 0.4;

pub const EPS0_CANDIDATES: [f64; 4] = [0.1, 0.05, 0.02, 0.01];

/// Largest candidate `ε₀` for which the cone check passes at `p = 1`.
pub fn calibrate_eps0<T: Real>(
    a: T,
    delta: T,
    bump_kind: BumpKind,
    grid_size: usize,
    cone_halfwidth: T,
) -> Result<T> {
    for eps in EPS0_CANDIDATES {
        let profile = PerturbationProfile::new(a, delta, T::lit(eps), bump_kind)?;
        if verify_cones(&profile, &[T::one()], grid_size, cone_halfwidth)?.passed {
            return Ok(T::lit(eps));
        }
    }
    Err(Error::CalibrationFailed { candidates: EPS0_CANDIDATES.to_vec() })
}
