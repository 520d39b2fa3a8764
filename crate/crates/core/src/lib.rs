//! Exact and approximate reduced dynamics of a qubit dephasing in an Ising
//! spin bath.
//!
//! The library computes the exact coherence factor of a single qubit coupled
//! through `sigma_z (x) sigma_z` terms to N thermal bath spins, and compares
//! it against a family of approximate master equations: Nakajima-Zwanzig and
//! time-convolutionless truncations at orders 2-4, a coarse-grained Lindblad
//! semigroup with an optimized averaging window, and a post-Markovian
//! equation with pluggable memory kernels. The `harness` module and the
//! `spinbath` binary drive comparisons, temperature sweeps, and seeded
//! random-bath ensembles, emitting CSV trajectories and JSON reports.
//!
//! Numerics are generic over the scalar type (`f32` or `f64`) through the
//! [`scalar::Real`] trait; concrete `f64` aliases live at the crate root.

// validation deliberately uses `!(x > y)` so that NaN inputs fail closed
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlations;
pub mod error;
pub mod exact;
pub mod harness;
pub mod markovian;
pub mod model;
pub mod postmarkov;
pub mod projection;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Cplx, Real};

/// Default-precision aliases.
pub type BathSpec = model::BathSpec<f64>;
pub type ThermalWeights = model::ThermalWeights<f64>;
pub type BlochVector = model::BlochVector<f64>;
pub type TimeGrid = model::TimeGrid<f64>;
pub type EnsembleSpec = model::EnsembleSpec<f64>;
pub type InverseTemperature = model::InverseTemperature<f64>;
pub type CorrelationSet = correlations::CorrelationSet<f64>;
pub type BlochTrajectory = exact::BlochTrajectory<f64>;
pub type CoherencePair = exact::CoherencePair<f64>;
pub type CumulantSet = projection::CumulantSet<f64>;
pub type CoarseGrainGenerator = markovian::CoarseGrainGenerator<f64>;
pub type KernelSpec = postmarkov::KernelSpec<f64>;

/// Single-precision aliases, for callers trading accuracy for footprint.
pub type BathSpec32 = model::BathSpec<f32>;
pub type BlochVector32 = model::BlochVector<f32>;
pub type TimeGrid32 = model::TimeGrid<f32>;
pub type BlochTrajectory32 = exact::BlochTrajectory<f32>;

#[cfg(test)]
pub(crate) mod testutil {
    /// Least-squares slope, used for log-log order-of-accuracy checks.
    pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        num / den
    }
}
