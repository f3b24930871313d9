use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::map_family::{calibrate_eps0, BumpKind, PerturbationProfile, DEFAULT_CONE_HALFWIDTH};

/// `ε₀` as a number or the string `"auto"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Eps0Setting {
    Value(f64),
    Named(AutoTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Eps0Setting {
    pub const AUTO: Eps0Setting = Eps0Setting::Named(AutoTag::Auto);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub a: f64,
    pub delta: f64,
    pub eps0: Eps0Setting,
    pub bump_kind: BumpKind,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { a: 0.81, delta: 0.08, eps0: Eps0Setting::AUTO, bump_kind: BumpKind::SmoothExp }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub monte_carlo: u64,
    pub betas: u64,
    pub birkhoff: u64,
    pub verify: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { monte_carlo: 1, betas: 2, birkhoff: 3, verify: 4 }
    }
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self { monte_carlo: seed, betas: seed, birkhoff: seed, verify: seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub jacobian: f64,
    pub inverse: f64,
    pub min_expansion: f64,
    pub area_identity: f64,
    pub m1_exact: f64,
    /// Required monotonicity margin per grid step, as a fraction of `Area₁`.
    pub monotone_fraction: f64,
    pub monte_carlo_sigmas: f64,
    pub birkhoff_sigmas: f64,
    pub checkpoint_sigmas: f64,
    pub min_itinerary_depth: usize,
    pub beta_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            jacobian: 1e-12,
            inverse: 1e-12,
            min_expansion: 1.5,
            area_identity: 1e-8,
            m1_exact: 1e-8,
            monotone_fraction: 0.09,
            monte_carlo_sigmas: 4.0,
            birkhoff_sigmas: 5.0,
            checkpoint_sigmas: 10.0,
            min_itinerary_depth: 20,
            beta_margin: 1e-6,
        }
    }
}

/// A run description, read from a single JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub profile: ProfileConfig,
    pub p_grid: Vec<f64>,
    pub birkhoff_n: u64,
    pub n_betas: usize,
    pub depth: usize,
    pub n_points: usize,
    pub mc_samples: u64,
    pub verify_samples: usize,
    pub cone_grid: usize,
    pub cone_halfwidth: f64,
    pub max_spacing: f64,
    pub include_origin: bool,
    pub seeds: Seeds,
    pub tolerances: Tolerances,
    pub output_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            profile: ProfileConfig::default(),
            p_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            birkhoff_n: 10_000_000,
            n_betas: 16,
            depth: 30,
            n_points: 4,
            mc_samples: 1_000_000,
            verify_samples: 10_000,
            cone_grid: 256,
            cone_halfwidth: DEFAULT_CONE_HALFWIDTH,
            max_spacing: 1e-4,
            include_origin: false,
            seeds: Seeds::default(),
            tolerances: Tolerances::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let config: Config = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.p_grid.is_empty() {
            return bad("p_grid is empty".into());
        }
        if let Some(p) = self.p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("p_grid value {p} outside [0, 1]"));
        }
        if self.p_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("p_grid must be strictly increasing".into());
        }
        if self.birkhoff_n < crate::ergodic::MIN_STEPS {
            return bad(format!("birkhoff_n must be at least {}", crate::ergodic::MIN_STEPS));
        }
        if self.depth == 0 || self.depth > crate::symbolic::MAX_DEPTH {
            return bad(format!("depth must lie in 1..={}", crate::symbolic::MAX_DEPTH));
        }
        if self.mc_samples < 1000 {
            return bad("mc_samples must be at least 1000".into());
        }
        let eps0 = match self.profile.eps0 {
            Eps0Setting::Value(e) => e,
            Eps0Setting::Named(_) => 0.0,
        };
        PerturbationProfile::new(self.profile.a, self.profile.delta, eps0, self.profile.bump_kind)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    /// The profile, running the `ε₀` calibration when requested.
    pub fn resolve_profile(&self) -> Result<PerturbationProfile, ExperimentError> {
        let pc = &self.profile;
        let eps0 = match pc.eps0 {
            Eps0Setting::Value(e) => e,
            Eps0Setting::Named(AutoTag::Auto) => {
                calibrate_eps0(pc.a, pc.delta, pc.bump_kind, self.cone_grid, self.cone_halfwidth)?
            }
        };
        PerturbationProfile::new(pc.a, pc.delta, eps0, pc.bump_kind).map_err(|e| ExperimentError::Config(e.to_string()))
    }
}
