//! Bath correlation functions `Q_k = Tr{B^k rho_B}` and the discrete
//! spectral density.
//!
//! `B = sum_n g_n sigma_n^z - theta I` is a sum of N independent two-point
//! variables shifted to zero mean, so `Q_k` is the k-th central moment of
//! that sum. The production path combines exact per-spin central moments
//! with the binomial convolution for independent sums (cost O(N k^2)); the
//! 2^N Gibbs-sum enumeration is kept as a test oracle.

use crate::error::{Error, Result};
use crate::model::{thermal_weights, BathSpec, InverseTemperature, ThermalWeights};
use crate::scalar::{lit, Real};

/// Maximum supported moment order for the production path.
pub const MAX_MOMENT_ORDER: usize = 8;
/// Maximum bath size for the 2^N enumeration oracle.
pub const MAX_ENUMERATION_SPINS: usize = 20;

/// theta, Q2, Q3, Q4 for a given bath.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSet<T> {
    pub theta: T,
    pub q2: T,
    pub q3: T,
    pub q4: T,
}

/// Binomial coefficients up to row `n`.
fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0f64; n + 1];
    for k in 1..=n {
        row[k] = row[k - 1] * (n - k + 1) as f64 / k as f64;
    }
    row
}

/// Central moments (orders 0..=k) of the two-point variable
/// X = +-g with mean g*b, i.e. P(X = g) = (1+b)/2.
fn spin_central_moments<T: Real>(g: T, b: T, k: usize) -> Vec<T> {
    let half = lit::<T>(0.5);
    let p_plus = (T::one() + b) * half;
    let p_minus = (T::one() - b) * half;
    let mean = g * b;
    let up = g - mean;
    let dn = -g - mean;
    let mut out = Vec::with_capacity(k + 1);
    let mut up_pow = T::one();
    let mut dn_pow = T::one();
    for _ in 0..=k {
        out.push(p_plus * up_pow + p_minus * dn_pow);
        up_pow = up_pow * up;
        dn_pow = dn_pow * dn;
    }
    // the first central moment vanishes identically; don't let rounding in
    // p +/- leave a stray ulp that every higher composition then drags along
    if k >= 1 {
        out[1] = T::zero();
    }
    out
}

/// Central moments of a sum of independents: binomial convolution.
fn compose<T: Real>(acc: &[T], spin: &[T], k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k + 1];
    for (j, slot) in out.iter_mut().enumerate() {
        let binom = binomial_row(j);
        let mut s = T::zero();
        for i in 0..=j {
            s = s + lit::<T>(binom[i]) * acc[i] * spin[j - i];
        }
        *slot = s;
    }
    out
}

/// Computes `Q_k` by per-spin moment composition.
pub fn moment<T: Real>(spec: &BathSpec<T>, k: usize) -> Result<T> {
    if k == 0 || k > MAX_MOMENT_ORDER {
        return Err(Error::UnsupportedMomentOrder(k));
    }
    let weights = thermal_weights(spec);
    Ok(moment_with_weights(spec, &weights, k))
}

/// Same as [`moment`] with precomputed thermal weights. `k` must be in 1..=8.
pub fn moment_with_weights<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    k: usize,
) -> T {
    assert!((1..=MAX_MOMENT_ORDER).contains(&k));
    let mut acc = vec![T::zero(); k + 1];
    acc[0] = T::one();
    for (&g, &b) in spec.couplings().iter().zip(&weights.weights) {
        let spin = spin_central_moments(g, b, k);
        acc = compose(&acc, &spin, k);
    }
    acc[k]
}

/// Gibbs weights over the 2^N bath configurations. Zero temperature puts
/// uniform weight on the ground-state manifold.
fn gibbs_weights<T: Real>(spec: &BathSpec<T>) -> Vec<T> {
    let n = spec.n_spins();
    let half = lit::<T>(0.5);
    let energies: Vec<T> = (0..1usize << n)
        .map(|l| {
            let mut e = T::zero();
            for (bit, &omega) in spec.frequencies().iter().enumerate() {
                let sign = if l >> bit & 1 == 0 { T::one() } else { -T::one() };
                e = e + half * omega * sign;
            }
            e
        })
        .collect();
    let e_min = energies.iter().cloned().fold(T::infinity(), T::min);
    let raw: Vec<T> = match spec.inv_temperature() {
        InverseTemperature::Finite(beta) => energies
            .iter()
            .map(|&e| (-beta * (e - e_min)).exp())
            .collect(),
        InverseTemperature::Zero => energies
            .iter()
            .map(|&e| {
                if (e - e_min).abs() <= lit(1e-12) {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect(),
    };
    let z: T = raw.iter().cloned().sum();
    raw.into_iter().map(|w| w / z).collect()
}

/// Shifted eigenvalues `E~_l = sum_n g_n (-1)^{l_n} - theta` for every
/// configuration, paired with their Gibbs weights.
pub(crate) fn enumerated_levels<T: Real>(
    spec: &BathSpec<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = spec.n_spins();
    if n > MAX_ENUMERATION_SPINS {
        return Err(Error::EnumerationTooLarge(n));
    }
    let theta = thermal_weights(spec).mean_shift;
    let shifted: Vec<T> = (0..1usize << n)
        .map(|l| {
            let mut s = T::zero();
            for (bit, &g) in spec.couplings().iter().enumerate() {
                let sign = if l >> bit & 1 == 0 { T::one() } else { -T::one() };
                s = s + g * sign;
            }
            s - theta
        })
        .collect();
    Ok((shifted, gibbs_weights(spec)))
}

/// Oracle: `Q_k = (1/Z) sum_l (E~_l)^k exp(-beta E_l)` over all 2^N
/// configurations. Refuses N > 20.
pub fn moment_by_enumeration<T: Real>(spec: &BathSpec<T>, k: usize) -> Result<T> {
    if k == 0 || k > MAX_MOMENT_ORDER {
        return Err(Error::UnsupportedMomentOrder(k));
    }
    let (shifted, weights) = enumerated_levels(spec)?;
    Ok(shifted
        .iter()
        .zip(&weights)
        .map(|(&e, &w)| e.powi(k as i32) * w)
        .sum())
}

/// Bundles theta and Q2..Q4.
pub fn correlation_set<T: Real>(spec: &BathSpec<T>) -> CorrelationSet<T> {
    let weights = thermal_weights(spec);
    correlation_set_with_weights(spec, &weights)
}

pub fn correlation_set_with_weights<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
) -> CorrelationSet<T> {
    CorrelationSet {
        theta: weights.mean_shift,
        q2: moment_with_weights(spec, weights, 2),
        q3: moment_with_weights(spec, weights, 3),
        q4: moment_with_weights(spec, weights, 4),
    }
}

/// Discrete spectral density: delta lines at `Omega_n` with weight `|g_n|^2`,
/// merged when frequencies coincide within 1e-12.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity<T> {
    pub lines: Vec<(T, T)>,
}

pub fn spectral_density<T: Real>(spec: &BathSpec<T>) -> SpectralDensity<T> {
    let tol = lit::<T>(1e-12);
    let mut lines: Vec<(T, T)> = Vec::new();
    let mut order: Vec<usize> = (0..spec.n_spins()).collect();
    order.sort_by(|&a, &b| {
        spec.frequencies()[a]
            .partial_cmp(&spec.frequencies()[b])
            .unwrap()
    });
    for idx in order {
        let omega = spec.frequencies()[idx];
        let g = spec.couplings()[idx];
        let weight = g * g;
        match lines.last_mut() {
            Some((w0, acc)) if (omega - *w0).abs() <= tol => *acc = *acc + weight,
            _ => lines.push((omega, weight)),
        }
    }
    // Zero-coupling spins carry no spectral weight.
    lines.retain(|&(_, w)| w > T::zero());
    SpectralDensity { lines }
}
