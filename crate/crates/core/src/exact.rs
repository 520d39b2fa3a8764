//! Exact reduced dynamics of the dephasing qubit.
//!
//! The complex coherence `w = v_x + i v_y` evolves as `w(t) = f(t) w(0)`
//! with
//!
//! ```text
//! f(t) = e^{-2 i alpha theta t} prod_n [cos(2 alpha g_n t) + i beta_n sin(2 alpha g_n t)]
//! ```
//!
//! and `C = Re f`, `S = Im f`, so that `v_x(t) = v_x(0) C - v_y(0) S` and
//! `v_y(t) = v_x(0) S + v_y(0) C`. The same pair is obtained from the Kraus
//! sums `C = sum_l lambda_l cos(2 alpha E~_l t)`,
//! `S = sum_l lambda_l sin(2 alpha E~_l t)`. The product formula is the
//! production path (O(N) per sample); the 2^N Kraus enumeration is the
//! oracle.

use num_complex::Complex;

use crate::correlations::{enumerated_levels, moment_with_weights};
use crate::error::{Error, Result};
use crate::model::{BathSpec, BlochVector, ThermalWeights, TimeGrid};
use crate::scalar::{lit, Cplx, Real};

/// Producing method for a trajectory, carried through to the output files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodTag {
    Exact,
    ShortTime,
    Nz2,
    Nz3,
    Nz4,
    Tcl2,
    Tcl3,
    Tcl4,
    Cg,
    Pm,
}

impl MethodTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodTag::Exact => "exact",
            MethodTag::ShortTime => "short_time",
            MethodTag::Nz2 => "nz2",
            MethodTag::Nz3 => "nz3",
            MethodTag::Nz4 => "nz4",
            MethodTag::Tcl2 => "tcl2",
            MethodTag::Tcl3 => "tcl3",
            MethodTag::Tcl4 => "tcl4",
            MethodTag::Cg => "cg",
            MethodTag::Pm => "pm",
        }
    }
}

/// Per-sample status flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFlag {
    Ok,
    LeftBlochSphere,
    TclInvalid,
    CpViolation,
}

impl SampleFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleFlag::Ok => "ok",
            SampleFlag::LeftBlochSphere => "left_bloch_sphere",
            SampleFlag::TclInvalid => "tcl_invalid",
            SampleFlag::CpViolation => "cp_violation",
        }
    }
}

/// Sampled (C, S) pair on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherencePair<T> {
    pub grid: TimeGrid<T>,
    pub c_values: Vec<T>,
    pub s_values: Vec<T>,
    pub method_tag: MethodTag,
}

impl<T: Real> CoherencePair<T> {
    pub fn factor(&self, i: usize) -> Cplx<T> {
        Complex::new(self.c_values[i], self.s_values[i])
    }
}

/// Bloch trajectory tagged by producing method.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochTrajectory<T> {
    pub grid: TimeGrid<T>,
    pub points: Vec<BlochVector<T>>,
    pub method_tag: MethodTag,
    pub flags: Vec<SampleFlag>,
    /// BathSpec digest for provenance.
    pub provenance: String,
}

impl<T: Real> BlochTrajectory<T> {
    /// Builds a pure-dephasing trajectory from a coherence map
    /// `w(t) = (C + iS) w(0)`; `v_z` stays constant.
    pub fn from_coherence_map(
        grid: &TimeGrid<T>,
        factors: impl Iterator<Item = Cplx<T>>,
        v0: BlochVector<T>,
        method_tag: MethodTag,
        provenance: String,
    ) -> Self {
        let points: Vec<BlochVector<T>> = factors
            .map(|f| {
                BlochVector::new(
                    v0.x * f.re - v0.y * f.im,
                    v0.x * f.im + v0.y * f.re,
                    v0.z,
                )
            })
            .collect();
        let flags = vec![SampleFlag::Ok; points.len()];
        Self {
            grid: grid.clone(),
            points,
            method_tag,
            flags,
            provenance,
        }
    }
}

/// Coherence factor at a single dimensionless time `alpha * t`, by the
/// product formula.
pub fn coherence_at<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    alpha_t: T,
) -> Cplx<T> {
    let two = lit::<T>(2.0);
    let mut f = Complex::from_polar(T::one(), -two * weights.mean_shift * alpha_t);
    for (&g, &b) in spec.couplings().iter().zip(&weights.weights) {
        let x = two * g * alpha_t;
        f = f * Complex::new(x.cos(), b * x.sin());
    }
    f
}

/// Exact coherence pair on a grid via the product formula.
pub fn coherence_factor<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    grid: &TimeGrid<T>,
) -> CoherencePair<T> {
    let mut c_values = Vec::with_capacity(grid.len());
    let mut s_values = Vec::with_capacity(grid.len());
    for &at in grid.samples() {
        let f = coherence_at(spec, weights, at);
        c_values.push(f.re);
        s_values.push(f.im);
    }
    CoherencePair {
        grid: grid.clone(),
        c_values,
        s_values,
        method_tag: MethodTag::Exact,
    }
}

/// Oracle: coherence pair by summing over all 2^N Kraus branches.
/// Refuses N > 20.
pub fn coherence_by_kraus<T: Real>(
    spec: &BathSpec<T>,
    grid: &TimeGrid<T>,
) -> Result<CoherencePair<T>> {
    let (shifted, lambdas) = enumerated_levels(spec)?;
    let norm: T = lambdas.iter().cloned().sum();
    debug_assert!((norm - T::one()).abs() < lit(1e-12));
    let two = lit::<T>(2.0);
    let mut c_values = Vec::with_capacity(grid.len());
    let mut s_values = Vec::with_capacity(grid.len());
    for &at in grid.samples() {
        let mut c = T::zero();
        let mut s = T::zero();
        for (&e, &lambda) in shifted.iter().zip(&lambdas) {
            let phase = two * e * at;
            c = c + lambda * phase.cos();
            s = s + lambda * phase.sin();
        }
        c_values.push(c);
        s_values.push(s);
    }
    Ok(CoherencePair {
        grid: grid.clone(),
        c_values,
        s_values,
        method_tag: MethodTag::Exact,
    })
}

/// Exact Bloch trajectory.
pub fn exact_trajectory<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    v0: BlochVector<T>,
    grid: &TimeGrid<T>,
) -> BlochTrajectory<T> {
    let pair = coherence_factor(spec, weights, grid);
    BlochTrajectory::from_coherence_map(
        grid,
        (0..grid.len()).map(|i| pair.factor(i)),
        v0,
        MethodTag::Exact,
        spec.digest(),
    )
}

/// Gaussian short-time (Zeno regime) approximation
/// `v_{x,y}(t) = v_{x,y}(0) exp(-2 Q2 (alpha t)^2)`.
pub fn short_time_trajectory<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    v0: BlochVector<T>,
    grid: &TimeGrid<T>,
) -> BlochTrajectory<T> {
    let q2 = moment_with_weights(spec, weights, 2);
    let two = lit::<T>(2.0);
    BlochTrajectory::from_coherence_map(
        grid,
        grid.samples()
            .iter()
            .map(|&at| Complex::new((-two * q2 * at * at).exp(), T::zero())),
        v0,
        MethodTag::ShortTime,
        spec.digest(),
    )
}

/// Per-sample validity of the Zeno approximation: `2 Q2 (alpha t)^2 <= bound`.
pub fn zeno_validity<T: Real>(q2: T, grid: &TimeGrid<T>, bound: T) -> Vec<bool> {
    let two = lit::<T>(2.0);
    grid.samples()
        .iter()
        .map(|&at| two * q2 * at * at <= bound)
        .collect()
}

/// Recurrence period of |f|.
///
/// When all |g_n| share one value g > 0 the recurrence is exact with period
/// `alpha t = pi / g` (i.e. `T = pi / (alpha g)`). Otherwise the grid is
/// scanned for the first time with `|f| >= 1 - 1e-9`; none means no
/// detectable recurrence.
pub fn recurrence_period<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    grid: &TimeGrid<T>,
) -> Option<T> {
    let tol = lit::<T>(1e-12);
    let g0 = spec.couplings()[0].abs();
    if g0 > T::zero()
        && spec
            .couplings()
            .iter()
            .all(|&g| (g.abs() - g0).abs() <= tol)
    {
        return Some(T::PI() / g0);
    }
    let threshold = T::one() - lit::<T>(1e-9);
    grid.samples()
        .iter()
        .skip(1)
        .find(|&&at| coherence_at(spec, weights, at).norm() >= threshold)
        .copied()
}

/// Times where the dynamical map is non-invertible: samples with
/// `C(t)^2 + S(t)^2 <= tol^2`, plus sub-grid dips found by fitting a
/// parabola through each interior local minimum of `|f|^2` (the squared
/// magnitude is smooth through a transversal zero, which can fall between
/// samples at any resolution).
pub fn invertibility_times<T: Real>(pair: &CoherencePair<T>, tol: T) -> Vec<T> {
    let ts = pair.grid.samples();
    let tol_sq = tol * tol;
    let mag_sq = |i: usize| {
        let c = pair.c_values[i];
        let s = pair.s_values[i];
        c * c + s * s
    };
    let mut out = Vec::new();
    for i in 0..ts.len() {
        let y1 = mag_sq(i);
        if y1 <= tol_sq {
            out.push(ts[i]);
            continue;
        }
        if i == 0 || i + 1 == ts.len() {
            continue;
        }
        let (y0, y2) = (mag_sq(i - 1), mag_sq(i + 1));
        if !(y1 <= y0 && y1 <= y2) {
            continue;
        }
        // parabola through the three bracketing samples
        let (x0, x1, x2) = (ts[i - 1], ts[i], ts[i + 1]);
        let d01 = (y1 - y0) / (x1 - x0);
        let d12 = (y2 - y1) / (x2 - x1);
        let a = (d12 - d01) / (x2 - x0);
        if a <= T::zero() {
            continue;
        }
        let half = lit::<T>(0.5);
        let xv = (x0 + x1) * half - d01 / (a + a);
        let xv = xv.max(x0).min(x2);
        let yv = y0 + d01 * (xv - x0) + a * (xv - x0) * (xv - x1);
        if yv <= tol_sq {
            out.push(xv);
        }
    }
    out
}

/// Per-group partial products `P_j(t)` for a partition of the spin indices;
/// their pointwise product times the `theta` phase recovers `f(t)`.
pub fn spectral_partition<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    grid: &TimeGrid<T>,
    groups: &[Vec<usize>],
) -> Result<Vec<CoherencePair<T>>> {
    let n = spec.n_spins();
    let mut seen = vec![false; n];
    for &idx in groups.iter().flatten() {
        if idx >= n {
            return Err(Error::NotAPartition(format!("index {idx} out of range")));
        }
        if seen[idx] {
            return Err(Error::NotAPartition(format!("index {idx} repeated")));
        }
        seen[idx] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::NotAPartition("some spins not covered".into()));
    }
    let two = lit::<T>(2.0);
    let mut out = Vec::with_capacity(groups.len());
    for group in groups {
        let mut c_values = Vec::with_capacity(grid.len());
        let mut s_values = Vec::with_capacity(grid.len());
        for &at in grid.samples() {
            let mut p = Complex::new(T::one(), T::zero());
            for &idx in group {
                let x = two * spec.couplings()[idx] * at;
                p = p * Complex::new(x.cos(), weights.weights[idx] * x.sin());
            }
            c_values.push(p.re);
            s_values.push(p.im);
        }
        out.push(CoherencePair {
            grid: grid.clone(),
            c_values,
            s_values,
            method_tag: MethodTag::Exact,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        make_time_grid, sample_random_bath, thermal_weights, BathSpec, EnsembleSpec, GridScale,
        InverseTemperature as IT,
    };
    use proptest::prelude::*;

    fn spec(g: Vec<f64>, w: Vec<f64>, beta: f64) -> BathSpec<f64> {
        BathSpec::new(g, w, IT::Finite(beta), 1.0).unwrap()
    }

    fn random_bath(seed: u64, n: usize, beta: f64) -> BathSpec<f64> {
        let ens = EnsembleSpec {
            member_count: 1,
            seed,
            n_spins: n,
            inv_temperature: IT::Finite(beta),
            coupling_strength: 1.0,
        };
        sample_random_bath(&ens, 0).unwrap()
    }

    #[test]
    fn coherence_starts_at_one() {
        let s = spec(vec![0.4, -0.9], vec![0.1, 0.7], 2.0);
        let w = thermal_weights(&s);
        let f = coherence_at(&s, &w, 0.0);
        assert_eq!(f.re, 1.0);
        assert_eq!(f.im, 0.0);
    }

    #[test]
    fn single_spin_cosine_zero() {
        // N=1, g=1, beta_1=0: f = cos(2 alpha t), zero at alpha t = pi/4.
        let s = spec(vec![1.0], vec![0.0], 1.0);
        let w = thermal_weights(&s);
        let f = coherence_at(&s, &w, std::f64::consts::FRAC_PI_4);
        assert!(f.norm() < 1e-15);
    }

    #[test]
    fn pure_phase_bath_has_unit_modulus() {
        let s = BathSpec::new(
            vec![0.7, -0.4, 0.9],
            vec![0.5, -0.2, 0.8],
            IT::<f64>::Zero,
            1.0,
        )
        .unwrap();
        let w = thermal_weights(&s);
        let grid = make_time_grid(1e-2, 10.0, 50, GridScale::Logarithmic).unwrap();
        for &at in grid.samples() {
            assert!((coherence_at(&s, &w, at).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kraus_oracle_matches_product_formula() {
        let grid = make_time_grid(1e-2, 10.0, 200, GridScale::Logarithmic).unwrap();
        for seed in 0..10u64 {
            let n = 1 + (seed as usize * 7) % 12;
            let beta = [0.1, 1.0, 10.0][seed as usize % 3];
            let s = random_bath(seed, n, beta);
            let w = thermal_weights(&s);
            let fast = coherence_factor(&s, &w, &grid);
            let slow = coherence_by_kraus(&s, &grid).unwrap();
            for i in 0..grid.len() {
                assert!(
                    (fast.c_values[i] - slow.c_values[i]).abs() < 1e-12
                        && (fast.s_values[i] - slow.s_values[i]).abs() < 1e-12,
                    "seed={seed} i={i}"
                );
            }
        }
    }

    #[test]
    fn kraus_single_spin_closed_form() {
        // N=1, beta_1=0 (Omega=0): theta=0, E~ = +-g with lambda = 1/2.
        let s = spec(vec![0.8], vec![0.0], 1.0);
        let grid = make_time_grid(0.0, 3.0, 31, GridScale::Linear).unwrap();
        let pair = coherence_by_kraus(&s, &grid).unwrap();
        for (i, &at) in grid.samples().iter().enumerate() {
            assert!((pair.c_values[i] - (1.6 * at).cos()).abs() < 1e-14);
            assert!(pair.s_values[i].abs() < 1e-14);
        }
    }

    #[test]
    fn kraus_refuses_large_baths() {
        let s = spec(vec![0.1; 21], vec![0.1; 21], 1.0);
        let grid = make_time_grid(0.0, 1.0, 2, GridScale::Linear).unwrap();
        assert!(coherence_by_kraus(&s, &grid).is_err());
    }

    #[test]
    fn trajectory_keeps_vz_constant_and_population_only_state_frozen() {
        let s = random_bath(3, 6, 1.0);
        let w = thermal_weights(&s);
        let grid = make_time_grid(0.0, 5.0, 64, GridScale::Linear).unwrap();
        let traj = exact_trajectory(&s, &w, BlochVector::new(0.0, 0.0, 1.0), &grid);
        for p in &traj.points {
            assert_eq!(p.x, 0.0);
            assert_eq!(p.y, 0.0);
            assert_eq!(p.z, 1.0);
        }
    }

    #[test]
    fn alternating_bath_gives_real_f_and_canonical_run() {
        let s = spec(vec![0.6, -0.6, 0.3, -0.3], vec![0.2, 0.2, 0.9, 0.9], 1.5);
        let w = thermal_weights(&s);
        let grid = make_time_grid(0.0, 6.0, 100, GridScale::Linear).unwrap();
        let pair = coherence_factor(&s, &w, &grid);
        for &sv in &pair.s_values {
            assert!(sv.abs() < 1e-14);
        }
        let inv = 1.0 / 2.0f64.sqrt();
        let traj = exact_trajectory(&s, &w, BlochVector::new(inv, inv, 0.0), &grid);
        for (i, p) in traj.points.iter().enumerate() {
            assert!((p.x - inv * pair.c_values[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn rotation_covariance() {
        // Evolving the rotated vector (v_y, -v_x, v_z) equals rotating the
        // evolved trajectory: direct consequence of the linear map.
        let s = random_bath(11, 5, 0.7);
        let w = thermal_weights(&s);
        let grid = make_time_grid(0.0, 4.0, 40, GridScale::Linear).unwrap();
        let v0 = BlochVector::new(0.3, -0.5, 0.2);
        let rotated0 = BlochVector::new(v0.y, -v0.x, v0.z);
        let a = exact_trajectory(&s, &w, v0, &grid);
        let b = exact_trajectory(&s, &w, rotated0, &grid);
        for (pa, pb) in a.points.iter().zip(&b.points) {
            assert!((pb.x - pa.y).abs() < 1e-14);
            assert!((pb.y + pa.x).abs() < 1e-14);
        }
    }

    #[test]
    fn short_time_envelope_tracks_exact_modulus() {
        for seed in [2u64, 5, 9] {
            let s = random_bath(seed, 8, 1.0);
            let w = thermal_weights(&s);
            let q2 = moment_with_weights(&s, &w, 2);
            let t_max = (0.01f64 / (2.0 * q2)).sqrt();
            let grid = make_time_grid(t_max / 100.0, t_max, 20, GridScale::Logarithmic).unwrap();
            for &at in grid.samples() {
                let envelope = (-2.0 * q2 * at * at).exp();
                let exact = coherence_at(&s, &w, at).norm();
                assert!((envelope - exact).abs() <= 0.01 * exact);
            }
        }
    }

    #[test]
    fn short_time_phase_is_cubic() {
        // |arg f| = O((alpha t)^3): log-log slope >= 3 on [1e-4, 1e-2].
        let s = random_bath(4, 6, 1.0);
        let w = thermal_weights(&s);
        let grid = make_time_grid(1e-4, 1e-2, 24, GridScale::Logarithmic).unwrap();
        let (xs, ys): (Vec<f64>, Vec<f64>) = grid
            .samples()
            .iter()
            .filter_map(|&at| {
                let phi = coherence_at(&s, &w, at).arg().abs();
                (phi > 1e-300).then(|| (at.ln(), phi.ln()))
            })
            .unzip();
        let slope = crate::testutil::fit_slope(&xs, &ys);
        assert!(slope >= 3.0 - 0.1, "slope = {slope}");
    }

    #[test]
    fn recurrence_uniform_and_paired() {
        let grid = make_time_grid(1e-2, 10.0, 400, GridScale::Logarithmic).unwrap();

        // paired bath with |g| = 1: T = pi (alpha = 1)
        let s = spec(vec![1.0, -1.0], vec![0.4, 0.4], 1.0);
        let w = thermal_weights(&s);
        let period = recurrence_period(&s, &w, &grid).unwrap();
        assert_eq!(period, std::f64::consts::PI);
        let f = coherence_at(&s, &w, period);
        assert!((f.re - 1.0).abs() < 1e-12 && f.im.abs() < 1e-12);

        // uniform unpaired bath: |f(pi/2)| = 1 (every factor is -1)
        let s = spec(vec![1.0; 4], vec![1.0; 4], 1.0);
        let w = thermal_weights(&s);
        let f = coherence_at(&s, &w, std::f64::consts::FRAC_PI_2);
        assert!((f.norm() - 1.0).abs() < 1e-12);

        // generic random bath, N=100: no detectable recurrence
        let s = random_bath(17, 100, 1.0);
        let w = thermal_weights(&s);
        assert!(recurrence_period(&s, &w, &grid).is_none());
    }

    #[test]
    fn invertibility_single_spin_and_pure_phase() {
        let grid = make_time_grid(0.0, 2.0, 2001, GridScale::Linear).unwrap();

        let s = spec(vec![1.0], vec![0.0], 1.0);
        let w = thermal_weights(&s);
        let pair = coherence_factor(&s, &w, &grid);
        // 1e-5 keeps the threshold above the parabolic fit's resolution
        // (~h^2 in |f|) for this grid spacing
        let times = invertibility_times(&pair, 1e-5);
        assert!(!times.is_empty());
        assert!((times[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-3);

        let s = BathSpec::new(vec![0.7, 0.2], vec![0.5, -0.9], IT::<f64>::Zero, 1.0).unwrap();
        let w = thermal_weights(&s);
        let pair = coherence_factor(&s, &w, &grid);
        assert!(invertibility_times(&pair, 1e-5).is_empty());
    }

    #[test]
    fn partition_product_identity() {
        let s = random_bath(23, 7, 1.4);
        let w = thermal_weights(&s);
        let grid = make_time_grid(1e-2, 8.0, 60, GridScale::Logarithmic).unwrap();
        let groups = vec![vec![0, 2, 4], vec![1, 3], vec![5, 6]];
        let parts = spectral_partition(&s, &w, &grid, &groups).unwrap();
        let full = coherence_factor(&s, &w, &grid);
        for (i, &at) in grid.samples().iter().enumerate() {
            let phase = Complex::from_polar(1.0, -2.0 * w.mean_shift * at);
            let mut prod = phase;
            for p in &parts {
                prod *= p.factor(i);
            }
            assert!((prod - full.factor(i)).norm() < 1e-12);
        }

        // single group recovers f up to the phase factor
        let single = spectral_partition(&s, &w, &grid, &[(0..7).collect()]).unwrap();
        for (i, &at) in grid.samples().iter().enumerate() {
            let phase = Complex::from_polar(1.0, -2.0 * w.mean_shift * at);
            assert!((single[0].factor(i) * phase - full.factor(i)).norm() < 1e-12);
        }
    }

    #[test]
    fn partition_rejects_non_partitions() {
        let s = random_bath(1, 4, 1.0);
        let w = thermal_weights(&s);
        let grid = make_time_grid(0.0, 1.0, 4, GridScale::Linear).unwrap();
        assert!(spectral_partition(&s, &w, &grid, &[vec![0, 1]]).is_err());
        assert!(spectral_partition(&s, &w, &grid, &[vec![0, 1, 2, 3, 3]]).is_err());
        assert!(spectral_partition(&s, &w, &grid, &[vec![0, 1, 2, 4]]).is_err());
    }

    proptest! {
        #[test]
        fn modulus_never_exceeds_one(seed in any::<u64>(), beta in 0.0f64..10.0) {
            let s = random_bath(seed, 6, beta);
            let w = thermal_weights(&s);
            let grid = make_time_grid(1e-2, 10.0, 50, GridScale::Logarithmic).unwrap();
            let mut strictly_below = false;
            for &at in grid.samples() {
                let m = coherence_at(&s, &w, at).norm();
                prop_assert!(m <= 1.0 + 1e-12);
                if m < 1.0 - 1e-6 {
                    strictly_below = true;
                }
            }
            // some beta_n in (-1,1) with g_n != 0 exists with overwhelming
            // probability for finite beta, so the modulus must dip below 1
            prop_assert!(strictly_below);
        }
    }
}
