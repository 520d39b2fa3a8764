//! Nakajima-Zwanzig and time-convolutionless master equations, orders 2-4.
//!
//! Everything is expressed through the complex coherence `w = v_x + i v_y`.
//! The elementary superoperators act on `w` as scalars: the dephasing part
//! `rho - sigma^z rho sigma^z` multiplies `w` by 2, the commutator part
//! `sigma^z rho - rho sigma^z` multiplies `w` by -2i (on `v_x + i v_y`).
//!
//! TCL orders have closed forms. NZ3/NZ4 reduce exactly to a constant-
//! coefficient linear system in `(w, w1, w2, w3)` where `w_j` is the j-fold
//! running integral of `w`; in dimensionless time `s = alpha t`:
//!
//! ```text
//! dw/ds = -4 Q2 w1 - 8 i Q3 w2 + 16 (Q4 - Q2^2) w3
//! ```
//!
//! solved by the matrix exponential (the reduction is exact, so the only
//! error is the machine-precision matrix exponential itself).

use num_complex::Complex;

use crate::correlations::CorrelationSet;
use crate::error::{Error, Result};
use crate::exact::{
    coherence_factor, invertibility_times, BlochTrajectory, MethodTag, SampleFlag,
};
use crate::model::{BathSpec, BlochVector, ThermalWeights, TimeGrid};
use crate::scalar::{lit, Cplx, Real};

/// Threshold on |w| beyond which a trajectory is flagged as having left the
/// Bloch sphere.
const LEFT_SPHERE_EPS: f64 = 1e-9;
/// Tolerance on C^2 + S^2 used for the TCL validity annotation.
const INVERTIBILITY_TOL: f64 = 1e-6;

/// Scalar coefficients of the cumulant expansion, acting on the coherence
/// through the dephasing superoperator `D` and the commutator `C`.
///
/// `order2` multiplies `D` (value -2 Q2), `order3` multiplies `i C`
/// (value 4 Q3). The fourth-order coefficients differ between the partial
/// (NZ) and ordered (TCL) cumulants and must not be symmetrized:
/// `order4_pc = 8 (Q4 - Q2^2)` enters the NZ kernel, while
/// `order4_oc = (8 Q4 - 24 Q2^2) / 6` multiplies `t^3 D` in the TCL4
/// generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulantSet<T> {
    pub order2: T,
    pub order3: T,
    pub order4_pc: T,
    pub order4_oc: T,
}

/// Cumulant coefficients from the bath correlation set. `<L> = 0` always
/// (the coupling operator is mean-shifted).
pub fn cumulants<T: Real>(corr: &CorrelationSet<T>) -> CumulantSet<T> {
    let two = lit::<T>(2.0);
    let four = lit::<T>(4.0);
    let eight = lit::<T>(8.0);
    CumulantSet {
        order2: -two * corr.q2,
        order3: four * corr.q3,
        order4_pc: eight * (corr.q4 - corr.q2 * corr.q2),
        order4_oc: (eight * corr.q4 - lit::<T>(24.0) * corr.q2 * corr.q2) / lit::<T>(6.0),
    }
}

fn flag_left_sphere<T: Real>(traj: &mut BlochTrajectory<T>) {
    let limit = T::one() + lit::<T>(LEFT_SPHERE_EPS);
    for (p, flag) in traj.points.iter_mut().zip(&mut traj.flags) {
        if (p.x * p.x + p.y * p.y).sqrt() > limit {
            *flag = SampleFlag::LeftBlochSphere;
        }
    }
}

fn flag_tcl_invalid<T: Real>(
    traj: &mut BlochTrajectory<T>,
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
) {
    let pair = coherence_factor(spec, weights, &traj.grid);
    let times = invertibility_times(&pair, lit(INVERTIBILITY_TOL));
    if let Some(&first) = times.first() {
        for (&at, flag) in traj.grid.samples().iter().zip(&mut traj.flags) {
            if at >= first && *flag == SampleFlag::Ok {
                *flag = SampleFlag::TclInvalid;
            }
        }
    }
}

/// Closed-form TCL solution of order 2, 3 or 4:
/// `w(t) = w(0) f_n(alpha t) exp(-i g(t))` with `g = 4 Q3 (alpha t)^3 / 3`.
pub fn tcl_trajectory<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    corr: &CorrelationSet<T>,
    v0: BlochVector<T>,
    grid: &TimeGrid<T>,
    order: usize,
) -> Result<BlochTrajectory<T>> {
    let tag = match order {
        2 => MethodTag::Tcl2,
        3 => MethodTag::Tcl3,
        4 => MethodTag::Tcl4,
        _ => return Err(Error::UnsupportedOrder(order)),
    };
    let two = lit::<T>(2.0);
    let third = lit::<T>(1.0 / 3.0);
    let quartic = (two * corr.q4 - lit::<T>(6.0) * corr.q2 * corr.q2) * third;
    let factors = grid.samples().iter().map(|&s| {
        let s2 = s * s;
        let mut log_env = -two * corr.q2 * s2;
        if order == 4 {
            log_env = log_env + quartic * s2 * s2;
        }
        let rotation = if order >= 3 {
            lit::<T>(4.0) * corr.q3 * s2 * s * third
        } else {
            T::zero()
        };
        Complex::from_polar(log_env.exp(), -rotation)
    });
    let mut traj = BlochTrajectory::from_coherence_map(
        grid,
        factors,
        v0,
        tag,
        spec.digest(),
    );
    flag_left_sphere(&mut traj);
    flag_tcl_invalid(&mut traj, spec, weights);
    Ok(traj)
}

/// Closed-form Born / NZ2 solution `v_{x,y}(t) = v_{x,y}(0) cos(2 sqrt(Q2) alpha t)`.
pub fn nz2_trajectory<T: Real>(
    spec: &BathSpec<T>,
    corr: &CorrelationSet<T>,
    v0: BlochVector<T>,
    grid: &TimeGrid<T>,
) -> BlochTrajectory<T> {
    let freq = lit::<T>(2.0) * corr.q2.sqrt();
    BlochTrajectory::from_coherence_map(
        grid,
        grid.samples()
            .iter()
            .map(|&s| Complex::new((freq * s).cos(), T::zero())),
        v0,
        MethodTag::Nz2,
        spec.digest(),
    )
}

/// Matrix exponential of a small complex matrix by scaling-and-squaring
/// with a Taylor series. `dim <= 4`.
fn expm<T: Real>(m: &[[Cplx<T>; 4]; 4], dim: usize) -> [[Cplx<T>; 4]; 4] {
    let zero = Complex::new(T::zero(), T::zero());
    let one = Complex::new(T::one(), T::zero());

    // max row sum norm
    let mut norm = T::zero();
    for row in m.iter().take(dim) {
        let s: T = row.iter().take(dim).map(|c| c.norm()).sum();
        norm = norm.max(s);
    }
    let mut squarings = 0u32;
    let mut scale = T::one();
    while norm * scale > lit::<T>(0.25) && squarings < 64 {
        scale = scale * lit::<T>(0.5);
        squarings += 1;
    }

    let mut scaled = [[zero; 4]; 4];
    for i in 0..dim {
        for j in 0..dim {
            scaled[i][j] = m[i][j] * scale;
        }
    }

    let matmul = |a: &[[Cplx<T>; 4]; 4], b: &[[Cplx<T>; 4]; 4]| {
        let mut out = [[zero; 4]; 4];
        for i in 0..dim {
            for k in 0..dim {
                let aik = a[i][k];
                for j in 0..dim {
                    out[i][j] = out[i][j] + aik * b[k][j];
                }
            }
        }
        out
    };

    // Taylor series: with norm <= 1/4, 24 terms are beyond machine epsilon.
    let mut result = [[zero; 4]; 4];
    for (i, row) in result.iter_mut().enumerate().take(dim) {
        row[i] = one;
    }
    let mut term = result;
    for k in 1..=24 {
        term = matmul(&term, &scaled);
        let inv_k = Complex::new(T::one() / T::from_usize(k).unwrap(), T::zero());
        for i in 0..dim {
            for j in 0..dim {
                term[i][j] = term[i][j] * inv_k;
                result[i][j] = result[i][j] + term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    result
}

/// Numerical NZ solution of order 2, 3 or 4 via the auxiliary-integral
/// reduction and the matrix exponential.
pub fn nz_trajectory<T: Real>(
    spec: &BathSpec<T>,
    corr: &CorrelationSet<T>,
    v0: BlochVector<T>,
    grid: &TimeGrid<T>,
    order: usize,
) -> Result<BlochTrajectory<T>> {
    let tag = match order {
        2 => MethodTag::Nz2,
        3 => MethodTag::Nz3,
        4 => MethodTag::Nz4,
        _ => return Err(Error::UnsupportedOrder(order)),
    };
    let dim = order;
    let zero = Complex::new(T::zero(), T::zero());
    let one = Complex::new(T::one(), T::zero());

    // dw/ds row, then the integrator chain w_{j}' = w_{j-1}.
    let mut gen = [[zero; 4]; 4];
    gen[0][1] = Complex::new(-lit::<T>(4.0) * corr.q2, T::zero());
    if order >= 3 {
        gen[0][2] = Complex::new(T::zero(), -lit::<T>(8.0) * corr.q3);
    }
    if order >= 4 {
        gen[0][3] = Complex::new(
            lit::<T>(16.0) * (corr.q4 - corr.q2 * corr.q2),
            T::zero(),
        );
    }
    for j in 1..dim {
        gen[j][j - 1] = one;
    }

    let factors: Vec<Cplx<T>> = grid
        .samples()
        .iter()
        .map(|&s| {
            let mut scaled = [[zero; 4]; 4];
            for i in 0..dim {
                for j in 0..dim {
                    scaled[i][j] = gen[i][j] * s;
                }
            }
            expm(&scaled, dim)[0][0]
        })
        .collect();

    let mut traj = BlochTrajectory::from_coherence_map(
        grid,
        factors.into_iter(),
        v0,
        tag,
        spec.digest(),
    );
    flag_left_sphere(&mut traj);
    Ok(traj)
}
