//! Post-Markovian master equation with pluggable memory kernels.
//!
//! The coherence response obeys `xi~(s) = 1 / (s + 2 k~(s + 2))` in physical
//! time, where `k~` is the Laplace transform of the memory kernel and the
//! shift by 2 comes from the interleaved dephasing semigroup. Rational
//! kernels are inverted analytically through repeated-root partial fractions;
//! a fixed Talbot contour provides an independent numerical inversion for
//! cross-checks. The "optimal" kernel reproduces the exact decoherence
//! envelope by construction.

use num_complex::Complex;

use crate::correlations::moment_with_weights;
use crate::error::{Error, Result};
use crate::exact::{coherence_at, BlochTrajectory, MethodTag, SampleFlag};
use crate::model::{BathSpec, BlochVector, ThermalWeights, TimeGrid};
use crate::scalar::{lit, Cplx, Real};

/// Tolerance above which `|xi| > 1` is reported as a positivity violation.
pub const CP_TOL: f64 = 1e-12;
/// Partial fractions must reproduce the original rational to this relative
/// accuracy at probe points, or the inversion is rejected.
const RECONSTRUCTION_TOL: f64 = 1e-10;

/// Real polynomial in ascending coefficient order.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<T> {
    pub coeffs: Vec<T>,
}

impl<T: Real> Poly<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        let mut p = Self { coeffs };
        p.trim();
        p
    }

    fn trim(&mut self) {
        while self.coeffs.len() > 1 && self.coeffs.last().is_some_and(|c| *c == T::zero()) {
            self.coeffs.pop();
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == T::zero())
    }

    pub fn eval(&self, s: Cplx<T>) -> Cplx<T> {
        let mut acc = Cplx::new(T::zero(), T::zero());
        for &c in self.coeffs.iter().rev() {
            acc = acc * s + Cplx::new(c, T::zero());
        }
        acc
    }

    pub fn scale(&self, k: T) -> Self {
        Self::new(self.coeffs.iter().map(|&c| c * k).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![T::zero(); n];
        for (i, &c) in self.coeffs.iter().enumerate() {
            out[i] = out[i] + c;
        }
        for (i, &c) in other.coeffs.iter().enumerate() {
            out[i] = out[i] + c;
        }
        Self::new(out)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = vec![T::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j] + a * b;
            }
        }
        Self::new(out)
    }

    /// Multiplies by the monomial `s`.
    pub fn mul_s(&self) -> Self {
        let mut out = vec![T::zero()];
        out.extend_from_slice(&self.coeffs);
        Self::new(out)
    }

    /// Taylor shift: returns `q` with `q(s) = p(s + c)` (synthetic division).
    pub fn shift(&self, c: T) -> Self {
        let mut coeffs = self.coeffs.clone();
        let n = coeffs.len();
        for i in 0..n {
            for j in (i..n - 1).rev() {
                let next = coeffs[j + 1];
                coeffs[j] = coeffs[j] + next * c;
            }
        }
        Self::new(coeffs)
    }
}

/// Complex Taylor shift used when expanding around a pole: `p(p0 + u)`.
fn shift_complex<T: Real>(coeffs: &[T], p0: Cplx<T>) -> Vec<Cplx<T>> {
    let mut out: Vec<Cplx<T>> = coeffs
        .iter()
        .map(|&c| Cplx::new(c, T::zero()))
        .collect();
    let n = out.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            let next = out[j + 1];
            out[j] = out[j] + next * p0;
        }
    }
    out
}

/// All complex roots of a real polynomial by the Durand-Kerner iteration,
/// with a scale-aware stopping rule.
pub fn polynomial_roots<T: Real>(poly: &Poly<T>) -> Result<Vec<Cplx<T>>> {
    let deg = poly.degree();
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = *poly.coeffs.last().unwrap();
    if lead == T::zero() {
        return Err(Error::RootFinding);
    }
    let monic: Vec<T> = poly.coeffs.iter().map(|&c| c / lead).collect();
    let monic_poly = Poly { coeffs: monic.clone() };

    // Cauchy bound keeps the initial polygon inside the root disk.
    let bound = T::one()
        + monic[..deg]
            .iter()
            .fold(T::zero(), |m, &c| m.max(c.abs()));
    let seed = Cplx::new(lit::<T>(0.4), lit::<T>(0.9));
    let mut roots: Vec<Cplx<T>> = (0..deg)
        .map(|k| seed.powu(k as u32 + 1) * Cplx::new(bound, T::zero()))
        .collect();

    let tol = lit::<T>(1e-14) * bound.max(T::one());
    for _ in 0..600 {
        let mut moved = T::zero();
        for i in 0..deg {
            let mut denom = Cplx::new(T::one(), T::zero());
            for j in 0..deg {
                if i != j {
                    denom = denom * (roots[i] - roots[j]);
                }
            }
            if denom.norm() == T::zero() {
                roots[i] = roots[i] + Cplx::new(lit::<T>(1e-8), lit::<T>(1e-8));
                continue;
            }
            let step = monic_poly.eval(roots[i]) / denom;
            roots[i] = roots[i] - step;
            moved = moved.max(step.norm());
        }
        if moved < tol {
            break;
        }
    }
    Ok(roots)
}

/// One pole of multiplicity `m` with expansion coefficients `c_j` such that
/// the local contribution is `sum_j c_j / (s - p)^(m - j)`, `j = 0..m-1`.
#[derive(Debug, Clone)]
pub struct PoleTerm<T> {
    pub pole: Cplx<T>,
    pub multiplicity: usize,
    pub coefficients: Vec<Cplx<T>>,
}

/// Partial-fraction expansion of a strictly proper rational `num/den`.
#[derive(Debug, Clone)]
pub struct PartialFractions<T> {
    pub terms: Vec<PoleTerm<T>>,
}

impl<T: Real> PartialFractions<T> {
    pub fn eval(&self, s: Cplx<T>) -> Cplx<T> {
        let mut acc = Cplx::new(T::zero(), T::zero());
        for term in &self.terms {
            let d = s - term.pole;
            for (j, &c) in term.coefficients.iter().enumerate() {
                let k = term.multiplicity - j;
                acc = acc + c / d.powu(k as u32);
            }
        }
        acc
    }

    /// Inverse Laplace transform at time `t >= 0`.
    pub fn inverse_at(&self, t: T) -> Cplx<T> {
        let mut acc = Cplx::new(T::zero(), T::zero());
        for term in &self.terms {
            let growth = (term.pole * Cplx::new(t, T::zero())).exp();
            for (j, &c) in term.coefficients.iter().enumerate() {
                let k = term.multiplicity - j; // power of 1/(s-p)
                let mut monomial = T::one();
                for q in 1..k {
                    monomial = monomial * t / T::from_usize(q).unwrap();
                }
                acc = acc + c * growth * Cplx::new(monomial, T::zero());
            }
        }
        acc
    }
}

/// Groups raw roots into clusters of nearby values and polishes each cluster
/// center with Newton iterations on the (m-1)-th derivative, which turns a
/// degree-m root into a simple one.
fn cluster_and_polish<T: Real>(
    den: &Poly<T>,
    roots: &[Cplx<T>],
) -> Vec<(Cplx<T>, usize)> {
    let scale = roots
        .iter()
        .fold(T::one(), |m, r| m.max(r.norm()));
    let cluster_tol = lit::<T>(1e-4) * scale;

    let mut clusters: Vec<(Cplx<T>, usize)> = Vec::new();
    let mut used = vec![false; roots.len()];
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let mut members = vec![roots[i]];
        used[i] = true;
        for j in (i + 1)..roots.len() {
            if !used[j] && (roots[j] - roots[i]).norm() < cluster_tol {
                members.push(roots[j]);
                used[j] = true;
            }
        }
        let m = members.len();
        let mean = members
            .iter()
            .fold(Cplx::new(T::zero(), T::zero()), |a, &b| a + b)
            / Cplx::new(T::from_usize(m).unwrap(), T::zero());
        clusters.push((mean, m));
    }

    // derivative table for Newton polishing
    let mut derivs: Vec<Poly<T>> = vec![den.clone()];
    for _ in 0..den.degree() {
        let prev = derivs.last().unwrap();
        let d: Vec<T> = prev
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * T::from_usize(k).unwrap())
            .collect();
        derivs.push(Poly::new(if d.is_empty() { vec![T::zero()] } else { d }));
    }

    for (pole, m) in clusters.iter_mut() {
        let f = &derivs[*m - 1];
        let fp = &derivs[*m];
        for _ in 0..40 {
            let fv = f.eval(*pole);
            let dv = fp.eval(*pole);
            if dv.norm() == T::zero() {
                break;
            }
            let step = fv / dv;
            *pole = *pole - step;
            if step.norm() < lit::<T>(1e-16) * (T::one() + pole.norm()) {
                break;
            }
        }
        // snap near-real poles of real polynomials onto the axis
        if pole.im.abs() < lit::<T>(1e-10) * (T::one() + pole.re.abs()) {
            pole.im = T::zero();
        }
    }
    clusters
}

/// Expands a strictly proper `num/den` into partial fractions, handling
/// repeated poles, and verifies the expansion against the original rational
/// at probe points.
pub fn partial_fractions<T: Real>(num: &Poly<T>, den: &Poly<T>) -> Result<PartialFractions<T>> {
    if num.degree() >= den.degree() && !num.is_zero() {
        return Err(Error::ImproperKernel);
    }
    let roots = polynomial_roots(den)?;
    let clusters = cluster_and_polish(den, &roots);

    let mut terms = Vec::new();
    for &(pole, m) in &clusters {
        // local series: num(p+u) / (den(p+u) / u^m), coefficients up to u^(m-1)
        let n_series = shift_complex(&num.coeffs, pole);
        let d_shift = shift_complex(&den.coeffs, pole);
        // the first m coefficients of den(p+u) vanish at a degree-m root;
        // drop them instead of dividing by a tiny u^m
        let d_series: Vec<Cplx<T>> = d_shift[m..].to_vec();
        if d_series.is_empty() || d_series[0].norm() == T::zero() {
            return Err(Error::RootFinding);
        }
        // truncated power-series division
        let mut coeffs = Vec::with_capacity(m);
        let mut residue_num: Vec<Cplx<T>> = (0..m)
            .map(|j| n_series.get(j).copied().unwrap_or_else(|| Cplx::new(T::zero(), T::zero())))
            .collect();
        for j in 0..m {
            let c = residue_num[j] / d_series[0];
            coeffs.push(c);
            for (k, r) in residue_num.iter_mut().enumerate().take(m).skip(j) {
                let d = d_series
                    .get(k - j)
                    .copied()
                    .unwrap_or_else(|| Cplx::new(T::zero(), T::zero()));
                *r = *r - c * d;
            }
        }
        terms.push(PoleTerm {
            pole,
            multiplicity: m,
            coefficients: coeffs,
        });
    }

    // guard against inaccurate roots or misdetected multiplicities
    let pf = PartialFractions { terms };
    let scale = clusters
        .iter()
        .fold(T::one(), |m, (p, _)| m.max(p.norm()));
    let mut worst = T::zero();
    for k in 0..5 {
        let probe = Cplx::new(
            scale * (lit::<T>(1.7) + T::from_usize(k).unwrap()),
            scale * lit::<T>(0.83),
        );
        let truth = num.eval(probe) / den.eval(probe);
        let approx = pf.eval(probe);
        let denom = T::one().max(truth.norm());
        worst = worst.max((truth - approx).norm() / denom);
    }
    if !(worst <= lit::<T>(RECONSTRUCTION_TOL)) {
        return Err(Error::ResidueReconstruction(
            worst.to_f64().unwrap_or(f64::NAN),
        ));
    }
    Ok(pf)
}

/// Fixed-contour Talbot inversion (Abate-Valko) with `M` nodes. `t > 0`.
pub fn talbot_inverse<T: Real>(
    transform: &dyn Fn(Cplx<T>) -> Cplx<T>,
    t: T,
    nodes: usize,
) -> T {
    let m = T::from_usize(nodes).unwrap();
    let r = lit::<T>(0.4) * m / t;
    let mut total = (transform(Cplx::new(r, T::zero()))
        * Cplx::new((r * t).exp(), T::zero()))
    .re
        * lit::<T>(0.5);
    for k in 1..nodes {
        let theta = T::from_usize(k).unwrap() * T::PI() / m;
        let cot = theta.cos() / theta.sin();
        let s = Cplx::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - T::one()) * cot;
        let weight = Cplx::new(T::one(), sigma);
        total = total + ((s * Cplx::new(t, T::zero())).exp() * transform(s) * weight).re;
    }
    total * r / m
}

/// Memory kernel choices. `Rational` supplies the kernel transform `k~(s)`
/// directly as `numerator/denominator` in ascending coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec<T> {
    /// Matches the lowest-order memory-kernel dynamics.
    Nz2,
    /// Second-order kernel with the semigroup shift undone.
    SecondOrder,
    /// Forces the response to equal the exact decoherence envelope.
    Optimal,
    Rational { numerator: Vec<T>, denominator: Vec<T> },
}

impl<T: Real> KernelSpec<T> {
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Nz2 => "nz2",
            KernelSpec::SecondOrder => "second_order",
            KernelSpec::Optimal => "optimal",
            KernelSpec::Rational { .. } => "rational",
        }
    }
}

/// Response function samples with positivity bookkeeping.
#[derive(Debug, Clone)]
pub struct PmResponse<T> {
    pub grid: TimeGrid<T>,
    pub xi: Vec<T>,
    pub cp_violations: Vec<bool>,
}

/// Builds the rational transform of `xi` for a rational kernel:
/// `xi~(s) = den(s+2) / (s den(s+2) + 2 num(s+2))`.
fn xi_transform<T: Real>(num: &Poly<T>, den: &Poly<T>) -> Result<(Poly<T>, Poly<T>)> {
    if num.degree() >= den.degree() && !num.is_zero() {
        return Err(Error::ImproperKernel);
    }
    let num_sh = num.shift(lit::<T>(2.0));
    let den_sh = den.shift(lit::<T>(2.0));
    let xi_den = den_sh.mul_s().add(&num_sh.scale(lit::<T>(2.0)));
    Ok((den_sh, xi_den))
}

fn kernel_rational<T: Real>(kernel: &KernelSpec<T>, q2: T, alpha: T) -> Option<(Poly<T>, Poly<T>)> {
    let a2q2 = lit::<T>(2.0) * alpha * alpha * q2;
    match kernel {
        KernelSpec::Nz2 => Some((
            Poly::new(vec![a2q2]),
            Poly::new(vec![lit::<T>(-2.0), T::one()]),
        )),
        KernelSpec::SecondOrder => Some((
            Poly::new(vec![-lit::<T>(2.0) * a2q2, a2q2]),
            Poly::new(vec![
                lit::<T>(4.0) - lit::<T>(4.0) * q2 * alpha * alpha,
                lit::<T>(-4.0),
                T::one(),
            ]),
        )),
        KernelSpec::Rational {
            numerator,
            denominator,
        } => Some((
            Poly::new(numerator.clone()),
            Poly::new(denominator.clone()),
        )),
        KernelSpec::Optimal => None,
    }
}

/// Samples `xi(t)` on the dimensionless grid (samples are `alpha * t`;
/// the kernel lives in physical time, so each sample is divided by alpha).
pub fn pm_response<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    kernel: &KernelSpec<T>,
    grid: &TimeGrid<T>,
) -> Result<PmResponse<T>> {
    let q2 = moment_with_weights(spec, weights, 2);
    let alpha = spec.alpha();

    let xi: Vec<T> = match kernel_rational(kernel, q2, alpha) {
        Some((num, den)) => {
            let (xi_num, xi_den) = xi_transform(&num, &den)?;
            let pf = partial_fractions(&xi_num, &xi_den)?;
            grid.samples()
                .iter()
                .map(|&at| pf.inverse_at(at / alpha).re)
                .collect()
        }
        None => grid
            .samples()
            .iter()
            .map(|&at| coherence_at(spec, weights, at).re)
            .collect(),
    };

    let cp_violations = xi
        .iter()
        .map(|&x| x.abs() > T::one() + lit::<T>(CP_TOL))
        .collect();
    Ok(PmResponse {
        grid: grid.clone(),
        xi,
        cp_violations,
    })
}

/// Talbot-based response; used to cross-check the analytic inversion.
pub fn pm_response_talbot<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    kernel: &KernelSpec<T>,
    grid: &TimeGrid<T>,
    nodes: usize,
) -> Result<Vec<T>> {
    let q2 = moment_with_weights(spec, weights, 2);
    let alpha = spec.alpha();
    let (num, den) = kernel_rational(kernel, q2, alpha).ok_or_else(|| {
        Error::MethodUnavailable("talbot".into(), "non-rational kernel".into())
    })?;
    let (xi_num, xi_den) = xi_transform(&num, &den)?;
    let f = move |s: Cplx<T>| xi_num.eval(s) / xi_den.eval(s);
    Ok(grid
        .samples()
        .iter()
        .map(|&at| {
            let t = at / alpha;
            if t <= T::zero() {
                T::one()
            } else {
                talbot_inverse(&f, t, nodes)
            }
        })
        .collect())
}

/// Post-Markovian Bloch trajectory; `v_z` is untouched and the transverse
/// components shrink by the real response factor.
pub fn pm_trajectory<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    kernel: &KernelSpec<T>,
    v0: BlochVector<T>,
    grid: &TimeGrid<T>,
) -> Result<BlochTrajectory<T>> {
    let resp = pm_response(spec, weights, kernel, grid)?;
    let mut traj = BlochTrajectory::from_coherence_map(
        grid,
        resp.xi.iter().map(|&x| Complex::new(x, T::zero())),
        v0,
        MethodTag::Pm,
        spec.digest(),
    );
    for (flag, &bad) in traj.flags.iter_mut().zip(&resp.cp_violations) {
        if bad {
            *flag = SampleFlag::CpViolation;
        }
    }
    Ok(traj)
}

/// Pointwise lower bound on the trace distance reachable by any real
/// response: half the exact phase amplitude times the transverse radius.
pub fn pm_min_distance<T: Real>(
    spec: &BathSpec<T>,
    weights: &ThermalWeights<T>,
    v0: BlochVector<T>,
    grid: &TimeGrid<T>,
) -> Vec<T> {
    let radius = (v0.x * v0.x + v0.y * v0.y).sqrt();
    grid.samples()
        .iter()
        .map(|&at| lit::<T>(0.5) * coherence_at(spec, weights, at).im.abs() * radius)
        .collect()
}
