//! Perturbed cat maps on the 2-torus, their two-rectangle Markov partitions,
//! symbolic codings, numerically computed conjugacies to the cat map, and
//! Birkhoff averages along the curves `p ↦ (p, h_p(β))`.
//!
//! The torus geometry and the map family are generic over the scalar type;
//! everything built on top of them (partitions, codings, shadowing, ergodic
//! averages) runs in `f64`, whose precision fixes the usable symbolic depth.

pub mod conjugacy;
pub mod ergodic;
pub mod error;
pub mod experiments;
pub mod manifolds;
pub mod map_family;
pub mod partition;
pub mod scalar;
pub mod symbolic;
pub mod torus;

pub use error::{Error, Result};
pub use map_family::{
    calibrate_eps0, verify_cones, BumpKind, ConeReport, Differential2x2, Jet1D, PerturbationProfile,
    PerturbedCatMap,
};
pub use scalar::Real;
pub use torus::{dist, lift_near, wrap, PlanarPoint, TorusPoint};

pub type TorusPoint32 = torus::TorusPoint<f32>;
pub type TorusPoint64 = torus::TorusPoint<f64>;
pub type PlanarPoint32 = torus::PlanarPoint<f32>;
pub type PlanarPoint64 = torus::PlanarPoint<f64>;
pub type Profile32 = map_family::PerturbationProfile<f32>;
pub type Profile64 = map_family::PerturbationProfile<f64>;
pub type CatMap32 = map_family::PerturbedCatMap<f32>;
pub type CatMap64 = map_family::PerturbedCatMap<f64>;
