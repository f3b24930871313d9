//! End-to-end acceptance run: one line per criterion, non-zero exit on any failure.

use std::time::Instant;

use foliation_lab::conjugacy::{commutation_residual, conjugacy_point, gamma_curve, sample_admissible_betas};
use foliation_lab::ergodic::birkhoff;
use foliation_lab::manifolds::lambda;
use foliation_lab::map_family::{calibrate_eps0, verify_cones, DEFAULT_CONE_HALFWIDTH};
use foliation_lab::partition::{area_formula, area_geometric, measure_montecarlo, Partition};
use foliation_lab::symbolic::{cylinder_locate, orbit_window, refined_itinerary, refined_of_orbit};
use foliation_lab::{dist, BumpKind, PerturbationProfile, TorusPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const M1_CAT: f64 = 0.723_606_797_749_978_969_6;
const SPACING: f64 = 1e-4;
const BIRKHOFF_N: u64 = 10_000_000;
const N_BETAS: usize = 16;
const DEPTH: usize = 30;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failures += 1;
        }
        println!("{} criterion {id:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

fn random_point(rng: &mut ChaCha8Rng) -> TorusPoint {
    TorusPoint::new(rng.gen(), rng.gen()).unwrap()
}

fn admissible(part: &Partition, z: TorusPoint, n: usize) -> bool {
    orbit_window(part, z, n, n).iter().all(|&q| part.boundary_distance(q) >= 1e-6)
}

fn main() {
    let mut report = Report { failures: 0 };
    let eps0 = calibrate_eps0(0.81, 0.08, BumpKind::SmoothExp, 256, DEFAULT_CONE_HALFWIDTH).expect("calibration");
    let profile = PerturbationProfile::new(0.81, 0.08, eps0, BumpKind::SmoothExp).unwrap();
    let grid = grid();
    let parts: Vec<Partition> = grid.iter().map(|&p| Partition::build(&profile, p, SPACING).unwrap()).collect();
    let area1 = area_formula(&profile, 1.0);
    println!("calibrated eps0 = {eps0}, Area_1 = {area1:e}");

    // 1
    let err = (parts[0].m1_exact() - M1_CAT).abs();
    report.line(1, "m1 at p=0", err <= 1e-8, format!("|m1_exact(0) - (5+sqrt5)/10| = {err:e}"));

    // 2
    let worst = grid
        .iter()
        .map(|&p| (area_formula(&profile, p) - area_geometric(&profile, p).unwrap()).abs())
        .fold(0.0, f64::max);
    report.line(2, "area identity", worst <= 1e-8, format!("max |area_formula - area_geometric| = {worst:e}"));

    // 3
    let steps: Vec<f64> = parts.windows(2).map(|w| w[1].m1_exact() - w[0].m1_exact()).collect();
    let min_step = steps.iter().copied().fold(f64::INFINITY, f64::min);
    report.line(
        3,
        "strict monotonicity",
        min_step >= 0.09 * area1,
        format!("min step {min_step:e} vs 0.09*Area_1 = {:e}", 0.09 * area1),
    );

    // 4
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let f0 = profile.at(0.0).unwrap();
    let (lo, hi) = profile.support();
    let (mut det_err, mut inv_err, mut off_strip, mut fixed) = (0.0f64, 0.0f64, true, true);
    for _ in 0..10_000 {
        let map = profile.at(rng.gen()).unwrap();
        let z = random_point(&mut rng);
        det_err = det_err.max((map.differential(z).det() - 1.0).abs());
        inv_err = inv_err.max(dist(map.apply_inverse(map.apply(z)), z)).max(dist(map.apply(map.apply_inverse(z)), z));
        let x = (hi + rng.gen::<f64>() * (1.0 - (hi - lo))).rem_euclid(1.0);
        let off = TorusPoint::new(x, rng.gen()).unwrap();
        if x <= lo || x >= hi {
            off_strip &= map.apply(off) == f0.apply(off);
        }
        fixed &= map.apply(TorusPoint::origin()) == TorusPoint::origin();
    }
    fixed &= parts.iter().all(|p| p.map().apply(TorusPoint::origin()) == TorusPoint::origin());
    report.line(
        4,
        "map invariants",
        det_err <= 1e-12 && inv_err <= 1e-12 && off_strip && fixed,
        format!("det err {det_err:e}, inverse err {inv_err:e}, off-strip equal {off_strip}, origin fixed {fixed}"),
    );

    // 5
    let t = Instant::now();
    let cones = verify_cones(&profile, &grid, 256, DEFAULT_CONE_HALFWIDTH).unwrap();
    let wild = profile.with_eps0(10.0).unwrap();
    let control = verify_cones(&wild, &grid, 256, DEFAULT_CONE_HALFWIDTH).unwrap();
    let secs = t.elapsed().as_secs_f64();
    report.line(
        5,
        "cone hyperbolicity",
        cones.passed && cones.min_expansion >= 1.5 && !control.passed && secs < 60.0,
        format!(
            "passed {} min_expansion {:.4}; eps0=10 passed {} ({} violations); {secs:.1}s",
            cones.passed, cones.min_expansion, control.passed, control.violations
        ),
    );

    // 6
    let mut worst_sigma: f64 = 0.0;
    for (i, part) in parts.iter().enumerate() {
        let mc = measure_montecarlo(part, 1_000_000, 600 + i as u64).unwrap();
        worst_sigma = worst_sigma.max((mc.mean - part.m1_exact()).abs() / mc.std_error);
    }
    report.line(6, "Monte Carlo", worst_sigma <= 4.0, format!("max |mc - m1| / std_error = {worst_sigma:.3}"));

    // 7 and 8
    let t = Instant::now();
    let betas = sample_admissible_betas(&parts[0], N_BETAS, 707, DEPTH, 1e-6).unwrap();
    let (mut comm, mut agree, mut identity, mut oracle_runs) = (0.0f64, 0.0f64, true, 0);
    let mut min_depth = usize::MAX;
    let mut unresolved = 0;
    for &beta in &betas {
        let word = refined_of_orbit(&parts[0], &orbit_window(&parts[0], beta, DEPTH, DEPTH), DEPTH);
        for part in &parts {
            let h = match conjugacy_point(&parts[0], part, beta, DEPTH) {
                Ok(h) => h,
                Err(_) => {
                    unresolved += 1;
                    continue;
                }
            };
            if part.p() == 0.0 {
                identity &= h.point == beta;
                identity &= commutation_residual(&parts[0], part, beta, h.point, 20, DEPTH).unwrap() == 0.0;
                continue;
            }
            min_depth = min_depth.min(h.itinerary_depth_matched);
            match commutation_residual(&parts[0], part, beta, h.point, 20, DEPTH) {
                Ok(r) => comm = comm.max(r),
                Err(_) => unresolved += 1,
            }
            if let Ok(cyl) = cylinder_locate(part, &word) {
                oracle_runs += 1;
                agree = agree.max(dist(cyl.center, h.point));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    report.line(
        7,
        "conjugacy",
        comm <= 1e-6 && agree <= 1e-6 && identity && unresolved == 0 && secs < 300.0,
        format!(
            "max commutation {comm:e}, max oracle distance {agree:e} over {oracle_runs} oracle runs, h_0 = id {identity}, {unresolved} unresolved; {secs:.0}s"
        ),
    );
    report.line(8, "itinerary invariance", min_depth >= 20, format!("min matched depth {min_depth}"));

    // 9
    let t = Instant::now();
    let (mut worst_ratio, mut worst_se, mut worst_shift) = (0.0f64, 0.0f64, 0.0f64);
    let mut complete = true;
    for &beta in &betas {
        let sample = gamma_curve(&parts, beta, DEPTH, BIRKHOFF_N, &[]).unwrap();
        let base = sample.entries[0].birkhoff.as_ref().map(|b| b.average);
        for e in &sample.entries {
            match (&e.birkhoff, base) {
                (Some(b), Some(a0)) => {
                    let shift = (b.average - a0).abs();
                    worst_shift = worst_shift.max(shift);
                    worst_se = worst_se.max(b.std_error);
                    worst_ratio = worst_ratio.max(shift / b.std_error);
                }
                _ => complete = false,
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    report.line(
        9,
        "pathology witness",
        complete && worst_ratio <= 5.0 && area1 >= 5.0 * worst_se,
        format!(
            "max |avg_p - avg_0| = {worst_shift:e} ({worst_ratio:.3} std errors), Area_1 / max std_error = {:.2}; {secs:.0}s",
            area1 / worst_se
        ),
    );

    // 10
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut metric_ok = true;
    for _ in 0..10_000 {
        let (a, b, c) = (random_point(&mut rng), random_point(&mut rng), random_point(&mut rng));
        metric_ok &= dist(a, a) == 0.0;
        metric_ok &= dist(a, b) == dist(b, a);
        metric_ok &= dist(a, c) <= dist(a, b) + dist(b, c) + 1e-15;
        metric_ok &= dist(a, b) <= 0.5f64.sqrt() + 1e-15;
    }
    let mut round_trip_ok = true;
    let mut fit = Vec::new();
    let part = &parts[5];
    for n in [10usize, 15, 20] {
        let mut found = 0;
        while found < 4 {
            let z = random_point(&mut rng);
            if !admissible(part, z, n) {
                continue;
            }
            found += 1;
            match cylinder_locate(part, &refined_itinerary(part, z, n, n)) {
                Ok(c) => {
                    round_trip_ok &= c.contains(z) && c.radius <= lambda().powi(-(n as i32));
                    fit.push((n as f64, c.radius.ln()));
                }
                Err(_) => round_trip_ok = false,
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let xs: Vec<f64> = fit.iter().map(|q| q.0).collect();
    let ys: Vec<f64> = fit.iter().map(|q| q.1).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let slope = fit.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let decay_ok = -slope >= 0.95 * lambda().ln();
    let (mut small, mut large) = (0.0, 0.0);
    let mut individual = Vec::new();
    for seed in 0..10u64 {
        let mut r = ChaCha8Rng::seed_from_u64(2000 + seed);
        let z = random_point(&mut r);
        let a = birkhoff(&parts[0], z, 100_000, &[]).unwrap().std_error;
        let b = birkhoff(&parts[0], z, 10_000_000, &[]).unwrap().std_error;
        small += a * a;
        large += b * b;
        individual.push(a / b);
    }
    let ratio = (small / large).sqrt();
    let scaling_ok = (8.0..=12.5).contains(&ratio);
    let secs = t.elapsed().as_secs_f64();
    let (rmin, rmax) = individual.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    report.line(
        10,
        "property suites",
        metric_ok && round_trip_ok && decay_ok && scaling_ok && secs < 300.0,
        format!(
            "metric {metric_ok}, round trip {round_trip_ok}, decay rate {:.4} vs 0.95 ln(lambda) = {:.4}, \
             batch-means ratio {ratio:.3} (per seed {rmin:.2}..{rmax:.2}); {secs:.0}s",
            -slope,
            0.95 * lambda().ln()
        ),
    );

    println!("{} of 10 criteria failed", report.failures);
    std::process::exit(if report.failures == 0 { 0 } else { 1 });
}
