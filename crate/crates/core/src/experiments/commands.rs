use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::svg::{foliation_svg, partition_svg, Series};
use super::{checksum, now_rfc3339, Config, ExperimentError, RunManifest};
use crate::conjugacy::{gamma_curve, sample_admissible_betas, FoliationSample};
use crate::ergodic::{birkhoff, sweep_starts};
use crate::map_family::{verify_cones, ConeReport, PerturbationProfile};
use crate::partition::{area_formula, area_geometric, measure_montecarlo, Partition};
use crate::torus::{dist, TorusPoint};

/// Result of one command: whether its checks passed and which files it wrote.
#[derive(Clone, Debug)]
pub struct CommandOutcome {
    pub passed: bool,
    pub outputs: Vec<PathBuf>,
    /// One line per check, `PASS` or `FAIL` first.
    pub checks: Vec<String>,
}

/// Reals in 17 significant digits, so that they parse back to the same double.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

struct Checks(Vec<String>, bool);

impl Checks {
    fn new() -> Self {
        Self(Vec::new(), true)
    }

    fn add(&mut self, ok: bool, what: String) {
        self.1 &= ok;
        self.0.push(format!("{} {what}", if ok { "PASS" } else { "FAIL" }));
    }
}

struct Run<'a> {
    command: &'static str,
    config: &'a Config,
    dir: PathBuf,
    started_at: String,
    outputs: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    fn start(command: &'static str, config: &'a Config) -> Result<Self, ExperimentError> {
        let dir = config.output_dir.clone();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { command, config, dir, started_at: now_rfc3339(), outputs: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), ExperimentError> {
        let p = self.path(name);
        std::fs::write(p, contents)?;
        Ok(())
    }

    fn finish(mut self, eps0: f64, checks: Checks) -> Result<CommandOutcome, ExperimentError> {
        let outputs = self.outputs.iter().map(|p| checksum(p)).collect::<Result<Vec<_>, _>>()?;
        let manifest = RunManifest {
            command: self.command.to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            eps0,
            started_at: self.started_at,
            finished_at: now_rfc3339(),
            passed: checks.1,
            outputs,
        };
        let path = manifest.write(&self.dir)?;
        self.outputs.push(path);
        Ok(CommandOutcome { passed: checks.1, outputs: self.outputs, checks: checks.0 })
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, ExperimentError> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_path(path)?)
}

fn build_partitions(profile: &PerturbationProfile, config: &Config) -> Vec<crate::Result<Partition>> {
    config.p_grid.par_iter().map(|&p| Partition::build(profile, p, config.max_spacing)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub eps0: f64,
    pub cone_report: ConeReport,
    pub jacobian_max_err: f64,
    pub inverse_max_err: f64,
    pub strip_equality_ok: bool,
    pub fixed_point_ok: bool,
    pub passed: bool,
}

/// Map invariants at random `(p, z)` with `p` drawn from the grid, plus the cone check.
pub fn verify_report(profile: &PerturbationProfile, config: &Config) -> Result<VerifyReport, ExperimentError> {
    let tol = &config.tolerances;
    let cone_report = verify_cones(profile, &config.p_grid, config.cone_grid, config.cone_halfwidth)?;
    let maps = config.p_grid.iter().map(|&p| profile.at(p)).collect::<crate::Result<Vec<_>>>()?;
    let f0 = profile.at(0.0)?;
    let (lo, hi) = profile.support();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seeds.verify);
    let (mut jac, mut inv) = (0.0f64, 0.0f64);
    let mut strip_ok = true;
    for _ in 0..config.verify_samples {
        let map = &maps[rng.gen_range(0..maps.len())];
        let z = TorusPoint::new(rng.gen(), rng.gen())?;
        jac = jac.max((map.differential(z).det() - 1.0).abs());
        inv = inv.max(dist(map.apply_inverse(map.apply(z)), z)).max(dist(map.apply(map.apply_inverse(z)), z));
        let x = crate::torus::reduce(hi + rng.gen::<f64>() * (1.0 - (hi - lo)));
        if x > lo && x < hi {
            continue;
        }
        let off = TorusPoint::new(x, rng.gen())?;
        strip_ok &= map.apply(off) == f0.apply(off);
    }
    let fixed_point_ok = maps.iter().all(|m| m.apply(TorusPoint::origin()) == TorusPoint::origin());
    let passed = cone_report.passed
        && cone_report.min_expansion >= tol.min_expansion
        && jac <= tol.jacobian
        && inv <= tol.inverse
        && strip_ok
        && fixed_point_ok;
    Ok(VerifyReport {
        eps0: profile.eps0(),
        cone_report,
        jacobian_max_err: jac,
        inverse_max_err: inv,
        strip_equality_ok: strip_ok,
        fixed_point_ok,
        passed,
    })
}

/// Writes `verify.json`.
pub fn cmd_verify(config: &Config) -> Result<CommandOutcome, ExperimentError> {
    let profile = config.resolve_profile()?;
    let mut run = Run::start("verify", config)?;
    let report = verify_report(&profile, config)?;
    run.write("verify.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    let tol = &config.tolerances;
    let c = &report.cone_report;
    let mut checks = Checks::new();
    checks.add(
        c.passed && c.min_expansion >= tol.min_expansion,
        format!("cones: violations {} min_expansion {:.4}", c.violations, c.min_expansion),
    );
    checks.add(report.jacobian_max_err <= tol.jacobian, format!("jacobian max err {:e}", report.jacobian_max_err));
    checks.add(report.inverse_max_err <= tol.inverse, format!("inverse max err {:e}", report.inverse_max_err));
    checks.add(report.strip_equality_ok, "identity off the strip".into());
    checks.add(report.fixed_point_ok, "origin fixed".into());
    run.finish(profile.eps0(), checks)
}

/// Writes `area_sweep.csv` and one `partition_<p>.svg` per grid value.
pub fn cmd_area_sweep(config: &Config) -> Result<CommandOutcome, ExperimentError> {
    let profile = config.resolve_profile()?;
    let tol = &config.tolerances;
    let mut run = Run::start("area-sweep", config)?;
    let parts = build_partitions(&profile, config);
    let area1 = area_formula(&profile, 1.0);
    let mut checks = Checks::new();
    let mut writer = csv_writer(&run.path("area_sweep.csv"))?;
    writer.write_record([
        "p",
        "area_formula",
        "area_geometric",
        "m1_exact",
        "m1_montecarlo",
        "mc_std_error",
        "n_samples",
        "seed",
    ])?;
    let seed = config.seeds.monte_carlo;
    let mut previous: Option<(f64, f64)> = None;
    for (&p, part) in config.p_grid.iter().zip(&parts) {
        let formula = area_formula(&profile, p);
        let geometric = area_geometric(&profile, p);
        let part = match part {
            Ok(part) => part,
            Err(e) => {
                checks.add(false, format!("p={p}: partition build failed: {e}"));
                let nan = fmt_real(f64::NAN);
                let g = geometric.map(fmt_real).unwrap_or_else(|_| nan.clone());
                writer.write_record([fmt_real(p), fmt_real(formula), g, nan.clone(), nan.clone(), nan, "0".into(), seed.to_string()])?;
                previous = None;
                continue;
            }
        };
        let m1 = part.m1_exact();
        let mc = measure_montecarlo(part, config.mc_samples, seed)?;
        match &geometric {
            Ok(g) => checks.add(
                (formula - g).abs() <= tol.area_identity,
                format!("p={p}: |area_formula - area_geometric| = {:e}", (formula - g).abs()),
            ),
            Err(e) => checks.add(false, format!("p={p}: area_geometric failed: {e}")),
        }
        let gap = (mc.mean - m1).abs();
        checks.add(
            gap <= tol.monte_carlo_sigmas * mc.std_error,
            format!("p={p}: |mc - m1| = {gap:e}, std_error {:e}", mc.std_error),
        );
        if p == 0.0 {
            let exact = (5.0 + 5f64.sqrt()) / 10.0;
            checks.add((m1 - exact).abs() <= tol.m1_exact, format!("p=0: |m1 - (5+sqrt5)/10| = {:e}", (m1 - exact).abs()));
        }
        if let Some((p_prev, m_prev)) = previous {
            let need = tol.monotone_fraction * area1 * (p - p_prev) / 0.1;
            checks.add(m1 - m_prev >= need, format!("p={p_prev}->{p}: step {:e}, need {need:e}", m1 - m_prev));
        }
        previous = Some((p, m1));
        writer.write_record([
            fmt_real(p),
            fmt_real(formula),
            geometric.as_ref().map(|g| fmt_real(*g)).unwrap_or_else(|_| fmt_real(f64::NAN)),
            fmt_real(m1),
            fmt_real(mc.mean),
            fmt_real(mc.std_error),
            mc.n_samples.to_string(),
            mc.seed.to_string(),
        ])?;
    }
    writer.flush()?;
    drop(writer);
    for part in parts.iter().flatten() {
        run.write(&format!("partition_{}.svg", part.p()), &partition_svg(part))?;
    }
    run.finish(profile.eps0(), checks)
}

fn decade_checkpoints(n: u64) -> Vec<u64> {
    std::iter::successors(Some(1000u64), |c| c.checked_mul(10)).take_while(|&c| c < n).collect()
}

/// Writes `birkhoff.csv`: checkpoint averages of `n_points` seeded orbits at parameter `p`.
pub fn cmd_birkhoff(config: &Config, p: f64) -> Result<CommandOutcome, ExperimentError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ExperimentError::Config(format!("--p {p} outside [0, 1]")));
    }
    let profile = config.resolve_profile()?;
    let tol = &config.tolerances;
    let mut run = Run::start("birkhoff", config)?;
    let part = Partition::build(&profile, p, config.max_spacing)?;
    let n = config.birkhoff_n;
    let cps = decade_checkpoints(n);
    let runs = sweep_starts(config.n_points.max(1), config.seeds.birkhoff)?
        .par_iter()
        .map(|&z| birkhoff(&part, z, n, &cps))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut checks = Checks::new();
    let mut writer = csv_writer(&run.path("birkhoff.csv"))?;
    writer.write_record(["orbit", "z_x", "z_y", "p", "n_i", "partial_average", "std_error", "m1_exact"])?;
    for (i, r) in runs.iter().enumerate() {
        for &(ni, avg) in &r.checkpoints {
            writer.write_record([
                i.to_string(),
                fmt_real(r.z.x()),
                fmt_real(r.z.y()),
                fmt_real(p),
                ni.to_string(),
                fmt_real(avg),
                fmt_real(r.std_error),
                fmt_real(part.m1_exact()),
            ])?;
        }
        let gap = (r.average - part.m1_exact()).abs();
        checks.add(
            gap <= tol.birkhoff_sigmas * r.std_error,
            format!("orbit {i}: |avg - m1| = {gap:e}, std_error {:e}", r.std_error),
        );
        if let [.., (_, before), (_, last)] = r.checkpoints[..] {
            checks.add(
                (last - before).abs() <= tol.checkpoint_sigmas * r.std_error,
                format!("orbit {i}: last decade moved {:e}", (last - before).abs()),
            );
        }
    }
    writer.flush()?;
    drop(writer);
    run.finish(profile.eps0(), checks)
}

/// Samples `Γ_β` for the configured number of admissible `β`; the grid must start at 0.
pub fn foliation_samples(
    profile: &PerturbationProfile,
    config: &Config,
) -> Result<(Vec<Partition>, Vec<FoliationSample>), ExperimentError> {
    if config.p_grid[0] != 0.0 {
        return Err(ExperimentError::Config("foliation needs p_grid to start at 0".into()));
    }
    let parts = build_partitions(profile, config).into_iter().collect::<crate::Result<Vec<_>>>()?;
    let mut betas = sample_admissible_betas(&parts[0], config.n_betas, config.seeds.betas, config.depth, config.tolerances.beta_margin)?;
    if config.include_origin {
        betas.insert(0, TorusPoint::origin());
    }
    let samples = betas
        .iter()
        .map(|&beta| gamma_curve(&parts, beta, config.depth, config.birkhoff_n, &[]))
        .collect::<crate::Result<Vec<_>>>()?;
    Ok((parts, samples))
}

/// Writes `foliation.csv` and `foliation_averages.svg`.
pub fn cmd_foliation(config: &Config) -> Result<CommandOutcome, ExperimentError> {
    let profile = config.resolve_profile()?;
    let tol = &config.tolerances;
    let mut run = Run::start("foliation", config)?;
    let (parts, samples) = foliation_samples(&profile, config)?;
    let area1 = area_formula(&profile, 1.0);
    let mut checks = Checks::new();
    let mut writer = csv_writer(&run.path("foliation.csv"))?;
    writer.write_record([
        "beta_id",
        "beta_x",
        "beta_y",
        "p",
        "h_x",
        "h_y",
        "method",
        "residual",
        "itinerary_depth_matched",
        "birkhoff_avg",
        "birkhoff_std_error",
        "m1_exact",
    ])?;
    let mut series = Vec::new();
    let mut worst_se: f64 = 0.0;
    for (id, sample) in samples.iter().enumerate() {
        let base_avg = sample.entries[0].birkhoff.as_ref().map(|b| b.average);
        let mut points = Vec::new();
        let mut ok = true;
        let mut worst_shift: f64 = 0.0;
        for e in &sample.entries {
            let nan = fmt_real(f64::NAN);
            let (hx, hy, method, residual, depth) = match &e.conjugacy {
                Ok(c) => (
                    fmt_real(c.point.x()),
                    fmt_real(c.point.y()),
                    c.method.as_str().to_string(),
                    fmt_real(c.residual),
                    c.itinerary_depth_matched.to_string(),
                ),
                Err(_) => (nan.clone(), nan.clone(), "failed".to_string(), nan.clone(), "0".to_string()),
            };
            if let Ok(c) = &e.conjugacy {
                ok &= c.itinerary_depth_matched >= tol.min_itinerary_depth.min(config.depth);
            } else {
                ok = false;
            }
            let (avg, se) = match &e.birkhoff {
                Some(b) => (b.average, b.std_error),
                None => (f64::NAN, f64::NAN),
            };
            worst_se = worst_se.max(se);
            if let (Some(a0), true) = (base_avg, avg.is_finite()) {
                let shift = (avg - a0).abs();
                worst_shift = worst_shift.max(shift);
                ok &= shift <= tol.birkhoff_sigmas * se || shift == 0.0;
                points.push((e.p, avg));
            } else {
                ok = false;
            }
            writer.write_record([
                id.to_string(),
                fmt_real(sample.beta.x()),
                fmt_real(sample.beta.y()),
                fmt_real(e.p),
                hx,
                hy,
                method,
                residual,
                depth,
                fmt_real(avg),
                fmt_real(se),
                fmt_real(e.m1_exact),
            ])?;
        }
        checks.add(ok, format!("beta {id}: max |avg(p) - avg(0)| = {worst_shift:e}"));
        series.push(Series { label: format!("beta {id}"), points });
    }
    writer.flush()?;
    drop(writer);
    checks.add(
        area1 >= tol.birkhoff_sigmas * worst_se,
        format!("Area_1 = {area1:e} against largest std_error {worst_se:e}"),
    );
    let m1 = Series { label: "m1_exact".into(), points: parts.iter().map(|p| (p.p(), p.m1_exact())).collect() };
    run.write("foliation_averages.svg", &foliation_svg(&m1, &series))?;
    run.finish(profile.eps0(), checks)
}
