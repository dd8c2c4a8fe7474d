//! Translation operator (Poincare map) over one period and its fixed points,
//! which are exactly the T-periodic mild solutions.  The map is evaluated by
//! exponential integration; its differential on a leading block of modes
//! comes from batched finite differences.  Fixed points are located by a
//! hybrid iteration - Newton on the leading block, Picard on the
//! exponentially contracting tail - and certified by residual size and
//! nondegeneracy of I - DPhi.
//!
//! Because the nonlinearity is bounded, the non-kernel component of every
//! T-periodic solution obeys an explicit a-priori radius; `apriori_bound`
//! evaluates it and every solve reports the observed counterpart.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::evolve::{Evolution, Scheme, Trajectory};
use crate::nonlinearity::Nonlinearity;
use crate::par;
use crate::spectral::SpectralDecomposition;

/// Columns of one finite-difference batch are split into at most this many
/// chunks; columns never interact, so the chunking does not change results.
const FD_CHUNKS: usize = 8;

/// Round-off in a differenced Jacobian column is of order machine epsilon
/// times the integrated state, divided by the step; this factor covers its
/// accumulation over the steps of one period.
const FD_NOISE_FACTOR: f64 = 64.0;

/// Stopping and certification parameters for the fixed-point solver.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the alpha-norm of x - Phi_T(x).
    pub tolerance: f64,
    /// Scale of finite-difference steps, relative to 1 + |x|_alpha.
    pub fd_step: f64,
    /// Smallest singular value of I - DPhi below which the fixed point is
    /// declared degenerate; raised automatically to the finite-difference
    /// noise floor, the smallest value the differenced Jacobian resolves.
    pub degenerate_tol: f64,
    /// Keep every k-th integration step when recording the final trajectory.
    pub sample_stride: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 50,
            tolerance: 1e-8,
            fd_step: 1e-6,
            degenerate_tol: 1e-10,
            sample_stride: 8,
        }
    }
}

/// Outcome of a fixed-point solve.
#[derive(Debug, Clone, PartialEq)]
pub enum Certification {
    /// Residual below tolerance and I - DPhi nondegenerate on the head block.
    Certified,
    /// Iteration budget exhausted before the residual dropped.
    NoConvergence { residual: f64, iterations: usize },
    /// I - DPhi has a singular value below the degeneracy threshold.
    Degenerate { sigma_min: f64 },
}

impl Certification {
    pub fn is_certified(&self) -> bool {
        matches!(self, Certification::Certified)
    }
}

/// A located (or attempted) T-periodic solution.
#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub epsilon: f64,
    /// Spectral coefficients of the starting state u(0).
    pub fixed_point: DVector<f64>,
    /// Alpha-norm of x - Phi_T(x) at `fixed_point`.
    pub residual: f64,
    /// One period of the orbit, sampled.
    pub trajectory: Trajectory,
    /// Sign of det(I - DPhi_T) on the head block; None unless certified.
    pub jacobian_sign: Option<i32>,
    /// Largest alpha-norm of the non-kernel component along the orbit.
    pub q_bound: f64,
    /// Largest H-norm of the kernel component along the orbit.
    pub p_range: f64,
    pub certification: Certification,
}

/// Translation operator: integrate the state over one period.
pub fn poincare_map(ev: &Evolution, period: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    let traj = ev.integrate(x, period, usize::MAX)?;
    Ok(traj.final_state().clone())
}

/// Phi_T(x) together with the finite-difference Jacobian of Phi_T restricted
/// to the first `mode_cut` modes.  All columns (base point plus one
/// perturbation per head mode) are advanced as one batch, split into chunks
/// that are integrated independently (in parallel when enabled).
pub fn poincare_differential(
    ev: &Evolution,
    period: f64,
    x: &DVector<f64>,
    mode_cut: usize,
    fd_step: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = ev.dec.mode_count();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let h = fd_step * (1.0 + ev.dec.alpha_norm_spectral(x));
    let m = mode_cut + 1;
    let mut cols = DMatrix::zeros(n, m);
    for c in 0..m {
        cols.set_column(c, x);
        if c > 0 {
            cols[(c - 1, c)] += h;
        }
    }

    let n_chunks = m.min(FD_CHUNKS);
    let base = m / n_chunks;
    let extra = m % n_chunks;
    let mut starts = Vec::with_capacity(n_chunks + 1);
    starts.push(0);
    for i in 0..n_chunks {
        starts.push(starts[i] + base + usize::from(i < extra));
    }
    let results = par::map_indexed(n_chunks, |i| {
        let (s, e) = (starts[i], starts[i + 1]);
        ev.integrate_batch(&cols.columns(s, e - s).into_owned(), period)
    });
    let mut advanced = DMatrix::zeros(n, m);
    for (i, r) in results.into_iter().enumerate() {
        advanced
            .columns_mut(starts[i], starts[i + 1] - starts[i])
            .copy_from(&r?);
    }

    let phi0 = DVector::from_column_slice(&advanced.as_slice()[0..n]);
    let mut jac = DMatrix::zeros(mode_cut, mode_cut);
    for j in 0..mode_cut {
        for i in 0..mode_cut {
            jac[(i, j)] = (advanced[(i, j + 1)] - phi0[i]) / h;
        }
    }
    Ok((jac, phi0))
}

/// Locate a fixed point of Phi_T near `x0` by Newton iteration on the first
/// `mode_cut` modes and Picard iteration on the contracting tail.  Soft
/// failures (no convergence, degeneracy) are reported in the certification;
/// only integration and configuration errors propagate as Err.
pub fn find_fixed_point(
    ev: &Evolution,
    period: f64,
    x0: &DVector<f64>,
    mode_cut: usize,
    opts: &SolveOptions,
) -> Result<PeriodicOrbit> {
    let dec = ev.dec;
    let n = dec.mode_count();
    if mode_cut < dec.modes_through_kernel() || mode_cut > n {
        return Err(Error::Config(format!(
            "mode_cut = {mode_cut} must cover kernel and below (>= {}) and fit the basis (<= {n})",
            dec.modes_through_kernel()
        )));
    }
    let mut x = x0.clone();
    let mut last_residual = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let (jac, phi) = poincare_differential(ev, period, &x, mode_cut, opts.fd_step)?;
        let r = &x - &phi;
        last_residual = dec.alpha_norm_spectral(&r);
        let system = DMatrix::identity(mode_cut, mode_cut) - &jac;
        let fd_h = opts.fd_step * (1.0 + dec.alpha_norm_spectral(&x));
        let fd_floor = FD_NOISE_FACTOR * f64::EPSILON
            * (1.0 + dec.alpha_norm_spectral(&phi))
            / fd_h;
        let degenerate_tol = opts.degenerate_tol.max(fd_floor);
        if last_residual <= opts.tolerance {
            let sigma_min = smallest_singular_value(&system);
            if sigma_min < degenerate_tol {
                return finish(ev, period, x, last_residual, None, opts, Certification::Degenerate { sigma_min });
            }
            let sign = if system.determinant() > 0.0 { 1 } else { -1 };
            return finish(ev, period, x, last_residual, Some(sign), opts, Certification::Certified);
        }
        let sigma_min = smallest_singular_value(&system);
        if sigma_min < degenerate_tol {
            return finish(ev, period, x, last_residual, None, opts, Certification::Degenerate { sigma_min });
        }
        let r_head = DVector::from_column_slice(&r.as_slice()[0..mode_cut]);
        let delta = system.lu().solve(&r_head).ok_or_else(|| {
            Error::Config("singular Newton system escaped the degeneracy check".into())
        })?;
        for j in 0..mode_cut {
            x[j] -= delta[j];
        }
        for j in mode_cut..n {
            x[j] = phi[j];
        }
    }
    let certification = Certification::NoConvergence {
        residual: last_residual,
        iterations: opts.max_iterations,
    };
    finish(ev, period, x, last_residual, None, opts, certification)
}

fn finish(
    ev: &Evolution,
    period: f64,
    x: DVector<f64>,
    residual: f64,
    jacobian_sign: Option<i32>,
    opts: &SolveOptions,
    certification: Certification,
) -> Result<PeriodicOrbit> {
    let trajectory = ev.integrate(&x, period, opts.sample_stride)?;
    let dec = ev.dec;
    let q_bound = trajectory.max_nonkernel_alpha(dec);
    let p_range = trajectory.max_kernel_h(dec);
    Ok(PeriodicOrbit {
        epsilon: ev.epsilon,
        fixed_point: x,
        residual,
        trajectory,
        jacobian_sign,
        q_bound,
        p_range,
        certification,
    })
}

fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Explicit a-priori radius for the non-kernel part of any T-periodic
/// solution with forcing eps F, |F| <= m pointwise.
#[derive(Debug, Clone)]
pub struct AprioriBound {
    /// The radius: |Q u(t)|_alpha <= radius for every T-periodic solution.
    pub radius: f64,
    /// Contribution through the forward-decaying subspace.
    pub plus_term: f64,
    /// Contribution through the backward-decaying subspace.
    pub minus_term: f64,
    /// Spectral gap below the kernel (None when X_minus is trivial).
    pub gap_minus: Option<f64>,
    /// Spectral gap above the kernel (None when X_plus is trivial).
    pub gap_plus: Option<f64>,
    /// Equivalence constant between alpha- and H-norms on X_minus.
    pub minus_alpha_constant: f64,
}

/// Evaluate the a-priori radius from the pointwise bound on F, the spectral
/// gaps, and the period.  The forward part integrates the smoothing kernel
/// t^{-alpha} e^{-c t} split at t = T; the backward part uses the group decay
/// on the finite-dimensional X_minus, where the alpha-norm is controlled by
/// the largest eigenvalue weight.
pub fn apriori_bound(
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    epsilon: f64,
    period: f64,
) -> AprioriBound {
    let force = epsilon * nl.bound_m * dec.domain().measure().sqrt();
    let alpha = dec.alpha();
    let plus_term = match dec.gap_plus() {
        Some(c_plus) => {
            force
                * period.powf(-alpha)
                * ((-c_plus * period).exp() / c_plus + period / (1.0 - alpha))
        }
        None => 0.0,
    };
    let minus_alpha_constant = (0..dec.modes_below_kernel())
        .map(|j| (dec.eigenvalues()[j] + dec.delta()).powf(alpha))
        .fold(0.0, f64::max);
    let minus_term = match dec.gap_minus() {
        Some(c_minus) => force * minus_alpha_constant / c_minus,
        None => 0.0,
    };
    AprioriBound {
        radius: plus_term + minus_term,
        plus_term,
        minus_term,
        gap_minus: dec.gap_minus(),
        gap_plus: dec.gap_plus(),
        minus_alpha_constant,
    }
}

/// One entry of an epsilon continuation.
#[derive(Debug)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub orbit: Result<PeriodicOrbit>,
}

/// Solve for fixed points along a decreasing sequence of epsilon values,
/// warm-starting each solve from the previous certified fixed point.
#[allow(clippy::too_many_arguments)]
pub fn sweep_epsilon(
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    epsilons: &[f64],
    period: f64,
    dt: f64,
    scheme: Scheme,
    mode_cut: usize,
    x0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<Vec<SweepEntry>> {
    if epsilons.is_empty() {
        return Err(Error::Config("epsilon sweep needs at least one value".into()));
    }
    for &e in epsilons {
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon values must lie in (0, 1], got {e}"
            )));
        }
    }
    let mut order: Vec<f64> = epsilons.to_vec();
    order.sort_by(|a, b| b.partial_cmp(a).expect("validated finite"));
    let mut entries = Vec::with_capacity(order.len());
    let mut start = x0.clone();
    for eps in order {
        let outcome = Evolution::new(dec, nl, eps, dt, scheme)
            .and_then(|ev| find_fixed_point(&ev, period, &start, mode_cut, opts));
        if let Ok(orbit) = &outcome {
            if orbit.certification.is_certified() {
                start = orbit.fixed_point.clone();
            }
        }
        entries.push(SweepEntry {
            epsilon: eps,
            orbit: outcome,
        });
    }
    Ok(entries)
}
