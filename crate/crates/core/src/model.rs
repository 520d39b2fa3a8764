//! Model parameterization: bath specification, thermal weights, time grids
//! and reproducible random-bath generation.
//!
//! Conventions: the Boltzmann constant is 1, `beta = 1/T` is the single
//! temperature parameter, and all times are handled as the dimensionless
//! product `alpha * t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Name of the pseudo-random generator, recorded in output metadata.
pub const GENERATOR_NAME: &str = "chacha12";

/// Inverse temperature. Zero temperature is a distinguished value rather
/// than an IEEE infinity so that the `tanh` limit stays well defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InverseTemperature<T> {
    Finite(T),
    /// beta = infinity (T = 0).
    Zero,
}

impl<T: Real> InverseTemperature<T> {
    pub fn is_zero_temperature(&self) -> bool {
        matches!(self, InverseTemperature::Zero)
    }
}

/// Full parameterization of the qubit + Ising spin bath model.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec<T> {
    n_spins: usize,
    couplings: Vec<T>,
    frequencies: Vec<T>,
    inv_temperature: InverseTemperature<T>,
    coupling_strength: T,
}

impl<T: Real> BathSpec<T> {
    /// Validates a raw parameter bundle.
    pub fn new(
        couplings: Vec<T>,
        frequencies: Vec<T>,
        inv_temperature: InverseTemperature<T>,
        coupling_strength: T,
    ) -> Result<Self> {
        let n_spins = couplings.len();
        if n_spins == 0 {
            return Err(Error::Validation {
                field: "n_spins",
                reason: "bath must have at least one spin".into(),
            });
        }
        if frequencies.len() != n_spins {
            return Err(Error::Validation {
                field: "frequencies",
                reason: format!(
                    "length mismatch: {} frequencies for {} couplings",
                    frequencies.len(),
                    n_spins
                ),
            });
        }
        let one = T::one();
        for (n, &g) in couplings.iter().enumerate() {
            if !(g >= -one && g <= one) {
                return Err(Error::Validation {
                    field: "couplings",
                    reason: format!("coupling out of range: g_{} = {}", n + 1, g),
                });
            }
        }
        for (n, &w) in frequencies.iter().enumerate() {
            if !(w >= -one && w <= one) {
                return Err(Error::Validation {
                    field: "frequencies",
                    reason: format!("frequency out of range: Omega_{} = {}", n + 1, w),
                });
            }
        }
        if let InverseTemperature::Finite(beta) = inv_temperature {
            if !(beta >= T::zero()) || !beta.is_finite() {
                return Err(Error::Validation {
                    field: "beta",
                    reason: format!("inverse temperature must satisfy beta >= 0, got {beta}"),
                });
            }
        }
        if !(coupling_strength > T::zero()) || !coupling_strength.is_finite() {
            return Err(Error::Validation {
                field: "alpha",
                reason: format!("coupling strength must be positive, got {coupling_strength}"),
            });
        }
        Ok(Self {
            n_spins,
            couplings,
            frequencies,
            inv_temperature,
            coupling_strength,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn couplings(&self) -> &[T] {
        &self.couplings
    }

    pub fn frequencies(&self) -> &[T] {
        &self.frequencies
    }

    pub fn inv_temperature(&self) -> InverseTemperature<T> {
        self.inv_temperature
    }

    pub fn alpha(&self) -> T {
        self.coupling_strength
    }

    /// Stable hexadecimal digest of the parameters, for output provenance.
    pub fn digest(&self) -> String {
        use std::hash::{Hash, Hasher};
        let mut h = std::hash::DefaultHasher::new();
        self.n_spins.hash(&mut h);
        for &g in &self.couplings {
            g.to_f64().unwrap_or(f64::NAN).to_bits().hash(&mut h);
        }
        for &w in &self.frequencies {
            w.to_f64().unwrap_or(f64::NAN).to_bits().hash(&mut h);
        }
        match self.inv_temperature {
            InverseTemperature::Finite(b) => {
                b.to_f64().unwrap_or(f64::NAN).to_bits().hash(&mut h)
            }
            InverseTemperature::Zero => u64::MAX.hash(&mut h),
        }
        self.coupling_strength
            .to_f64()
            .unwrap_or(f64::NAN)
            .to_bits()
            .hash(&mut h);
        format!("{:016x}", h.finish())
    }
}

/// Per-spin thermal weights `beta_n = tanh(-beta * Omega_n / 2)` and the
/// mean shift `theta = sum_n g_n beta_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalWeights<T> {
    pub weights: Vec<T>,
    pub mean_shift: T,
}

/// Computes the thermal weights and the mean shift for a bath.
pub fn thermal_weights<T: Real>(spec: &BathSpec<T>) -> ThermalWeights<T> {
    let half = lit::<T>(0.5);
    let weights: Vec<T> = spec
        .frequencies()
        .iter()
        .map(|&omega| match spec.inv_temperature() {
            InverseTemperature::Finite(beta) => (-beta * omega * half).tanh(),
            // beta -> inf limit of tanh(-beta omega / 2); tanh(0) = 0 for all beta.
            InverseTemperature::Zero => {
                if omega > T::zero() {
                    -T::one()
                } else if omega < T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        })
        .collect();
    let mean_shift = spec
        .couplings()
        .iter()
        .zip(&weights)
        .map(|(&g, &b)| g * b)
        .sum();
    ThermalWeights {
        weights,
        mean_shift,
    }
}

/// A Bloch sphere vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> BlochVector<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn norm_sq(&self) -> T {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    /// Physical states satisfy |v|^2 <= 1 + 1e-12.
    pub fn is_physical(&self) -> bool {
        self.norm_sq() <= T::one() + lit(1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScale {
    Linear,
    Logarithmic,
}

/// Strictly increasing grid of dimensionless times `alpha * t >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    samples: Vec<T>,
    scale: GridScale,
    t_min: T,
    t_max: T,
    count: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn scale(&self) -> GridScale {
        self.scale
    }

    pub fn bounds(&self) -> (T, T, usize) {
        (self.t_min, self.t_max, self.count)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Builds a time grid with both endpoints included.
pub fn make_time_grid<T: Real>(
    t_min: T,
    t_max: T,
    count: usize,
    scale: GridScale,
) -> Result<TimeGrid<T>> {
    if count < 2 {
        return Err(Error::DegenerateRange(format!(
            "count must be >= 2, got {count}"
        )));
    }
    if !(t_max > t_min) {
        return Err(Error::DegenerateRange(format!(
            "need t_max > t_min, got [{t_min}, {t_max}]"
        )));
    }
    match scale {
        GridScale::Linear => {
            if t_min < T::zero() {
                return Err(Error::DegenerateRange("t_min must be >= 0".into()));
            }
        }
        GridScale::Logarithmic => {
            if !(t_min > T::zero()) {
                return Err(Error::DegenerateRange(
                    "logarithmic grids need t_min > 0".into(),
                ));
            }
        }
    }
    let n1 = T::from_usize(count - 1).unwrap();
    let samples: Vec<T> = (0..count)
        .map(|i| {
            let frac = T::from_usize(i).unwrap() / n1;
            match scale {
                GridScale::Linear => t_min + (t_max - t_min) * frac,
                GridScale::Logarithmic => {
                    (t_min.ln() + (t_max.ln() - t_min.ln()) * frac).exp()
                }
            }
        })
        .collect();
    Ok(TimeGrid {
        samples,
        scale,
        t_min,
        t_max,
        count,
    })
}

/// Template + seed for a family of random baths with fixed (N, alpha, beta).
#[derive(Debug, Clone)]
pub struct EnsembleSpec<T> {
    pub member_count: usize,
    pub seed: u64,
    pub n_spins: usize,
    pub inv_temperature: InverseTemperature<T>,
    pub coupling_strength: T,
}

/// Draws member `index` of the ensemble. Deterministic in `(seed, index)`:
/// each member uses its own ChaCha12 stream.
pub fn sample_random_bath<T: Real>(
    ensemble: &EnsembleSpec<T>,
    index: usize,
) -> Result<BathSpec<T>> {
    if index >= ensemble.member_count {
        return Err(Error::IndexOutOfRange {
            index,
            count: ensemble.member_count,
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(ensemble.seed);
    rng.set_stream(index as u64);
    // Sampled in f64 and converted, so members are identical across scalar types.
    let couplings: Vec<T> = (0..ensemble.n_spins)
        .map(|_| lit(rng.random_range(-1.0..=1.0)))
        .collect();
    let frequencies: Vec<T> = (0..ensemble.n_spins)
        .map(|_| lit(rng.random_range(-1.0..=1.0)))
        .collect();
    BathSpec::new(
        couplings,
        frequencies,
        ensemble.inv_temperature,
        ensemble.coupling_strength,
    )
}
