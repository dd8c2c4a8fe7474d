//! Mild-solution time stepping for u' = -Au + lambda u + eps F(t, u) in the
//! eigenbasis of A.  The linear part is diagonal with shifted rates
//! z_j = lambda - lambda_j (kernel modes exactly neutral), so exponential
//! integrators advance it exactly and only the bounded nonlinearity is
//! approximated: exponential Euler reaches first order, ETD2RK second.
//!
//! States travel as spectral coefficient vectors; nodal values are
//! reconstructed only to evaluate F.  A whole family of initial states can be
//! advanced at once (`integrate_batch`), which turns the basis transforms
//! into matrix-matrix products - the dominant cost of difference Jacobians.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::spectral::{GridFunction, Part, SpectralDecomposition};

/// Below this magnitude of z * dt the phi functions switch to 5-term Taylor
/// expansions to dodge cancellation.
pub const PHI_TAYLOR_THRESHOLD: f64 = 1e-4;
/// A state whose alpha-norm exceeds this aborts the integration.
pub const DIVERGENCE_GUARD: f64 = 1e8;
/// Relative X_plus content above which the backward semigroup is refused.
const GROUP_EXTENSION_TOL: f64 = 1e-12;

/// phi_1(z) = (e^z - 1) / z, continuously extended by 1 at z = 0.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < PHI_TAYLOR_THRESHOLD {
        1.0 + z * (1.0 / 2.0 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    } else {
        z.exp_m1() / z
    }
}

/// phi_2(z) = (e^z - 1 - z) / z^2, continuously extended by 1/2 at z = 0.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < PHI_TAYLOR_THRESHOLD {
        0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0)))
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ExponentialEuler,
    Etd2rk,
}

/// Everything needed to advance states: problem pieces plus per-mode stepping
/// tables for one fixed dt.
pub struct Evolution<'a> {
    pub dec: &'a SpectralDecomposition,
    pub nl: &'a Nonlinearity,
    pub epsilon: f64,
    pub dt: f64,
    pub scheme: Scheme,
    /// e^{z_j dt}
    exp_z: Vec<f64>,
    /// dt * phi_1(z_j dt)
    w1: Vec<f64>,
    /// dt * phi_2(z_j dt)
    w2: Vec<f64>,
}

impl<'a> Evolution<'a> {
    pub fn new(
        dec: &'a SpectralDecomposition,
        nl: &'a Nonlinearity,
        epsilon: f64,
        dt: f64,
        scheme: Scheme,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let n = dec.mode_count();
        let kr = dec.kernel_range();
        let mut exp_z = Vec::with_capacity(n);
        let mut w1 = Vec::with_capacity(n);
        let mut w2 = Vec::with_capacity(n);
        for j in 0..n {
            // Kernel modes are neutral by definition of the splitting; forcing
            // z = 0 keeps them bit-exactly constant under the linear flow.
            let z = if kr.contains(&j) {
                0.0
            } else {
                dec.lambda() - dec.eigenvalues()[j]
            };
            let zdt = z * dt;
            exp_z.push(zdt.exp());
            w1.push(dt * phi1(zdt));
            w2.push(dt * phi2(zdt));
        }
        Ok(Evolution {
            dec,
            nl,
            epsilon,
            dt,
            scheme,
            exp_z,
            w1,
            w2,
        })
    }

    /// Shifted per-mode rate z_j = lambda - lambda_j (0 on kernel modes).
    pub fn shifted_rate(&self, mode: usize) -> f64 {
        if self.dec.kernel_range().contains(&mode) {
            0.0
        } else {
            self.dec.lambda() - self.dec.eigenvalues()[mode]
        }
    }

    /// One step of the configured scheme from time `t`.
    pub fn step(&self, t: f64, state: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dec.mode_count();
        if state.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: state.len(),
            });
        }
        let mut batch = DMatrix::from_column_slice(n, 1, state.as_slice());
        let mut work = BatchWork::new(n, 1);
        self.step_batch(t, &mut batch, &mut work)?;
        Ok(DVector::from_column_slice(batch.as_slice()))
    }

    /// Advance every column of `states` by one step (shared wall clock `t`).
    fn step_batch(&self, t: f64, states: &mut DMatrix<f64>, work: &mut BatchWork) -> Result<()> {
        let n = self.dec.mode_count();
        let m = states.ncols();
        if self.epsilon == 0.0 {
            for c in 0..m {
                for j in 0..n {
                    states[(j, c)] *= self.exp_z[j];
                }
            }
            return Ok(());
        }
        let domain = self.dec.domain();
        // F(t, u) in spectral coordinates
        work.values.gemm(1.0, self.dec.basis(), states, 0.0);
        for c in 0..m {
            let (u, f) = (
                &work.values.as_slice()[c * n..(c + 1) * n],
                &mut work.fvals.as_mut_slice()[c * n..(c + 1) * n],
            );
            self.nl.apply_into(domain, t, u, f)?;
        }
        work.fhat
            .gemm_tr(self.dec.node_weight(), self.dec.basis(), &work.fvals, 0.0);

        match self.scheme {
            Scheme::ExponentialEuler => {
                for c in 0..m {
                    for j in 0..n {
                        states[(j, c)] = self.exp_z[j] * states[(j, c)]
                            + self.w1[j] * self.epsilon * work.fhat[(j, c)];
                    }
                }
            }
            Scheme::Etd2rk => {
                // predictor = exponential Euler stage
                for c in 0..m {
                    for j in 0..n {
                        work.pred[(j, c)] = self.exp_z[j] * states[(j, c)]
                            + self.w1[j] * self.epsilon * work.fhat[(j, c)];
                    }
                }
                work.values.gemm(1.0, self.dec.basis(), &work.pred, 0.0);
                for c in 0..m {
                    let (u, f) = (
                        &work.values.as_slice()[c * n..(c + 1) * n],
                        &mut work.fvals.as_mut_slice()[c * n..(c + 1) * n],
                    );
                    self.nl.apply_into(domain, t + self.dt, u, f)?;
                }
                work.fhat2
                    .gemm_tr(self.dec.node_weight(), self.dec.basis(), &work.fvals, 0.0);
                for c in 0..m {
                    for j in 0..n {
                        states[(j, c)] = work.pred[(j, c)]
                            + self.w2[j]
                                * self.epsilon
                                * (work.fhat2[(j, c)] - work.fhat[(j, c)]);
                    }
                }
            }
        }
        Ok(())
    }

    /// Integrate a single state over [0, t_end], sampling every
    /// `sample_stride` steps (the initial and final states are always kept).
    pub fn integrate(
        &self,
        u0: &DVector<f64>,
        t_end: f64,
        sample_stride: usize,
    ) -> Result<Trajectory> {
        let n_steps = checked_steps(t_end, self.dt)?;
        let stride = sample_stride.max(1);
        let n = self.dec.mode_count();
        let mut states = DMatrix::zeros(n, 1);
        states.set_column(0, u0);
        let mut work = BatchWork::new(n, 1);
        let mut times = vec![0.0];
        let mut samples = vec![u0.clone()];
        for step in 0..n_steps {
            let t = step as f64 * self.dt;
            self.step_batch(t, &mut states, &mut work)?;
            let state = DVector::from_column_slice(states.as_slice());
            let norm = self.dec.alpha_norm_spectral(&state);
            if !norm.is_finite() || norm > DIVERGENCE_GUARD {
                return Err(Error::Divergence {
                    t: t + self.dt,
                    norm,
                    guard: DIVERGENCE_GUARD,
                });
            }
            if (step + 1) % stride == 0 || step + 1 == n_steps {
                times.push(t + self.dt);
                samples.push(state);
            }
        }
        Ok(Trajectory {
            times,
            states: samples,
        })
    }

    /// Advance all columns of `states` to `t_end`, returning final states
    /// only.  Columns never interact, so results equal column-wise single
    /// integrations bit for bit.
    pub fn integrate_batch(&self, states: &DMatrix<f64>, t_end: f64) -> Result<DMatrix<f64>> {
        let n_steps = checked_steps(t_end, self.dt)?;
        let n = self.dec.mode_count();
        if states.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: states.nrows(),
            });
        }
        let mut current = states.clone();
        let mut work = BatchWork::new(n, states.ncols());
        for step in 0..n_steps {
            self.step_batch(step as f64 * self.dt, &mut current, &mut work)?;
        }
        let mut worst = 0.0f64;
        for c in 0..current.ncols() {
            let col = DVector::from_column_slice(&current.as_slice()[c * n..(c + 1) * n]);
            worst = worst.max(self.dec.alpha_norm_spectral(&col));
        }
        if !worst.is_finite() || worst > DIVERGENCE_GUARD {
            return Err(Error::Divergence {
                t: t_end,
                norm: worst,
                guard: DIVERGENCE_GUARD,
            });
        }
        Ok(current)
    }
}

struct BatchWork {
    values: DMatrix<f64>,
    fvals: DMatrix<f64>,
    fhat: DMatrix<f64>,
    fhat2: DMatrix<f64>,
    pred: DMatrix<f64>,
}

impl BatchWork {
    fn new(n: usize, m: usize) -> Self {
        BatchWork {
            values: DMatrix::zeros(n, m),
            fvals: DMatrix::zeros(n, m),
            fhat: DMatrix::zeros(n, m),
            fhat2: DMatrix::zeros(n, m),
            pred: DMatrix::zeros(n, m),
        }
    }
}

fn checked_steps(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end > 0.0) {
        return Err(Error::Config(format!(
            "integration horizon must be positive, got {t_end}"
        )));
    }
    let steps = (t_end / dt).round();
    if steps < 1.0 || (steps * dt - t_end).abs() > 1e-8 * t_end {
        return Err(Error::Config(format!(
            "t_end = {t_end} is not a multiple of dt = {dt}"
        )));
    }
    Ok(steps as usize)
}

/// Action of the analytic semigroup e^{-tA} (or its shifted version
/// e^{lambda t} e^{-tA}) on a grid function.  Negative times are admitted
/// only on X_0 + X_minus, where the flow extends to a group.
pub fn semigroup_apply(
    dec: &SpectralDecomposition,
    t: f64,
    u: &GridFunction,
    shifted: bool,
) -> Result<GridFunction> {
    let mut spectral = u.spectral().clone();
    if t < 0.0 {
        let plus_norm = dec.part_h_norm(&spectral, Part::Plus);
        let total = dec.h_norm_spectral(&spectral);
        if plus_norm > GROUP_EXTENSION_TOL * total.max(1.0) {
            return Err(Error::GroupExtensionViolation { t, plus_norm });
        }
        // X_plus content is below tolerance noise; remove it before flowing
        // backwards so it cannot blow up.
        spectral = dec.project_spectral(&spectral, Part::KernelMinus);
    }
    let kr = dec.kernel_range();
    for j in 0..spectral.len() {
        let rate = if shifted {
            if kr.contains(&j) {
                0.0
            } else {
                dec.lambda() - dec.eigenvalues()[j]
            }
        } else {
            -dec.eigenvalues()[j]
        };
        spectral[j] *= (rate * t).exp();
    }
    dec.from_spectral(spectral)
}

/// Sampled states of one integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Spectral coefficients at the sampled times.
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds >= 1 state")
    }

    /// Largest alpha-norm of the non-kernel component over the samples.
    pub fn max_nonkernel_alpha(&self, dec: &SpectralDecomposition) -> f64 {
        self.states
            .iter()
            .map(|s| dec.part_alpha_norm(s, Part::NonKernel))
            .fold(0.0, f64::max)
    }

    /// Largest H-norm of the kernel component over the samples.
    pub fn max_kernel_h(&self, dec: &SpectralDecomposition) -> f64 {
        self.states
            .iter()
            .map(|s| dec.part_h_norm(s, Part::Kernel))
            .fold(0.0, f64::max)
    }

    /// Write `time` followed by nodal values, one row per sample.
    pub fn write_values_csv(&self, dec: &SpectralDecomposition, path: &Path) -> Result<()> {
        let n = dec.node_count();
        let mut out = String::from("time");
        for i in 0..n {
            let _ = write!(out, ",u{i}");
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t}");
            let values = dec.to_values(s);
            for v in values.iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Write `time` followed by the first `head` spectral coefficients.
    pub fn write_spectral_csv(
        &self,
        dec: &SpectralDecomposition,
        head: usize,
        path: &Path,
    ) -> Result<()> {
        let head = head.min(dec.mode_count());
        let mut out = String::from("time");
        for j in 0..head {
            let _ = write!(out, ",c{j}");
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t}");
            for j in 0..head {
                let _ = write!(out, ",{}", s[j]);
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Worst alpha-energy fraction above `mode_cut` over samples at t >= t1,
/// relative to the initial alpha-energy.
pub fn tail_energy(
    dec: &SpectralDecomposition,
    traj: &Trajectory,
    mode_cut: usize,
    t1: f64,
) -> f64 {
    let denom = dec
        .alpha_norm_spectral(&traj.states[0])
        .powi(2)
        .max(1e-300);
    let mut worst = 0.0f64;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        if *t < t1 {
            continue;
        }
        let tail: f64 = (mode_cut..s.len())
            .map(|j| {
                let w = (dec.eigenvalues()[j] + dec.delta()).powf(dec.alpha()) * s[j];
                w * w
            })
            .sum();
        worst = worst.max(tail / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{Coefficient, Domain, EllipticProblem};
    use crate::spectral::decompose_by_index;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn setup_1d(n: usize, k: usize) -> SpectralDecomposition {
        let dom = Domain::Interval { length: PI, n };
        let m = EllipticProblem::new(dom.clone(), Coefficient::Constant(1.0))
            .assemble()
            .unwrap();
        decompose_by_index(&dom, &m, k, 0.8).unwrap()
    }

    #[test]
    fn phi_functions_are_continuous_across_taylor_threshold() {
        // straddle the branch switch so tightly that the true function is
        // constant to ~1e-16: any visible jump is branch disagreement
        for f in [phi1 as fn(f64) -> f64, phi2] {
            for sign in [-1.0, 1.0] {
                let z = sign * PHI_TAYLOR_THRESHOLD;
                let inside = f(z * (1.0 - 1e-12));
                let outside = f(z * (1.0 + 1e-12));
                assert_relative_eq!(inside, outside, max_relative = 1e-12);
            }
        }
        assert_relative_eq!(phi1(0.0), 1.0);
        assert_relative_eq!(phi2(0.0), 0.5);
        // direct formulas at moderate arguments
        assert_relative_eq!(phi1(1.0), 1.0f64.exp() - 1.0, max_relative = 1e-14);
    }

    #[test]
    fn shifted_semigroup_fixes_kernel_exactly() {
        let dec = setup_1d(31, 2);
        let u = dec.from_kernel_coords(&[1.25]).unwrap();
        for t in [0.1, 1.0, 7.3] {
            let v = semigroup_apply(&dec, t, &u, true).unwrap();
            assert_eq!(v.spectral(), u.spectral());
        }
    }

    #[test]
    fn plus_mode_decays_at_spectral_rate() {
        let dec = setup_1d(31, 1);
        let mut c = DVector::zeros(31);
        c[4] = 1.0;
        let u = dec.from_spectral(c).unwrap();
        let t = 0.37;
        let v = semigroup_apply(&dec, t, &u, true).unwrap();
        let expect = ((dec.lambda() - dec.eigenvalues()[4]) * t).exp();
        assert_relative_eq!(v.spectral()[4], expect, max_relative = 1e-14);
    }

    #[test]
    fn backward_flow_needs_kernel_minus_subspace() {
        let dec = setup_1d(31, 2);
        // state with X_plus content: rejected
        let mut c = DVector::zeros(31);
        c[0] = 1.0;
        c[5] = 0.5;
        let u = dec.from_spectral(c).unwrap();
        match semigroup_apply(&dec, -0.5, &u, true) {
            Err(Error::GroupExtensionViolation { .. }) => {}
            other => panic!("expected group-extension violation, got {other:?}"),
        }
        // state on X_0 + X_minus: flows backwards at the exact rate
        let mut c2 = DVector::zeros(31);
        c2[0] = 2.0;
        let w = dec.from_spectral(c2).unwrap();
        let t = -0.4;
        let v = semigroup_apply(&dec, t, &w, true).unwrap();
        let expect = 2.0 * ((dec.lambda() - dec.eigenvalues()[0]) * t).exp();
        assert_relative_eq!(v.spectral()[0], expect, max_relative = 1e-14);
        assert!(v.spectral()[0].abs() < 2.0); // shifted backward flow contracts on X_minus
    }

    #[test]
    fn zero_epsilon_step_equals_shifted_semigroup() {
        let dec = setup_1d(31, 1);
        let nl = Nonlinearity::arctan(1.0);
        let ev = Evolution::new(&dec, &nl, 0.0, 1.0 / 64.0, Scheme::Etd2rk).unwrap();
        let u0 = dec
            .from_spectral(DVector::from_fn(31, |j, _| 1.0 / (j as f64 + 1.0)))
            .unwrap();
        let stepped = ev.step(0.0, u0.spectral()).unwrap();
        let exact = semigroup_apply(&dec, ev.dt, &u0, true).unwrap();
        assert_eq!(&stepped, exact.spectral());
    }

    #[test]
    fn kernel_constant_forcing_integrates_exactly_per_step() {
        let dec = setup_1d(31, 1);
        let nl = Nonlinearity::kernel_constant(&dec, 1.0).unwrap();
        let eps = 0.7;
        for scheme in [Scheme::ExponentialEuler, Scheme::Etd2rk] {
            let ev = Evolution::new(&dec, &nl, eps, 1.0 / 32.0, scheme).unwrap();
            let u0 = dec.from_kernel_coords(&[0.3]).unwrap();
            let stepped = ev.step(0.0, u0.spectral()).unwrap();
            // kernel coefficient picks up exactly eps * dt (phi_1(0) = 1,
            // and the ETD2RK correction vanishes for state-independent F)
            assert_relative_eq!(
                stepped[0],
                0.3 + eps * ev.dt,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn zero_epsilon_integration_is_exact_for_any_dt() {
        let dec = setup_1d(31, 2);
        let nl = Nonlinearity::arctan(1.0);
        let ev = Evolution::new(&dec, &nl, 0.0, 1.0 / 512.0, Scheme::Etd2rk).unwrap();
        let u0 = dec
            .from_spectral(DVector::from_fn(31, |j, _| if j < 6 { 1.0 } else { 0.0 }))
            .unwrap();
        let traj = ev.integrate(u0.spectral(), 1.0, 512).unwrap();
        let exact = semigroup_apply(&dec, 1.0, &u0, true).unwrap();
        for j in 0..31 {
            let e = exact.spectral()[j];
            let got = traj.final_state()[j];
            assert!(
                (got - e).abs() <= 1e-12 * e.abs().max(1e-30),
                "mode {j}: {got} vs {e}"
            );
        }
    }

    #[test]
    fn kernel_coefficient_is_constant_without_forcing() {
        let dec = setup_1d(31, 1);
        let nl = Nonlinearity::arctan(1.0);
        let ev = Evolution::new(&dec, &nl, 0.0, 1.0 / 128.0, Scheme::Etd2rk).unwrap();
        let mut c = DVector::zeros(31);
        c[0] = 0.9;
        c[3] = 0.2;
        let traj = ev.integrate(&c, 1.0, 16).unwrap();
        for s in &traj.states {
            assert!((s[0] - 0.9).abs() <= 1e-12);
        }
    }

    #[test]
    fn etd2rk_reaches_second_order_exponential_euler_first() {
        let dec = setup_1d(31, 1);
        let nl = Nonlinearity::arctan(1.0);
        let u0 = dec
            .from_spectral(DVector::from_fn(31, |j, _| 0.5 / (1.0 + j as f64)))
            .unwrap();
        let mut orders = Vec::new();
        for scheme in [Scheme::Etd2rk, Scheme::ExponentialEuler] {
            // reference 16x finer than the finest grid under test, so its own
            // error perturbs the measured slopes by < 1%
            let reference = {
                let ev = Evolution::new(&dec, &nl, 1.0, 1.0 / 2048.0, scheme).unwrap();
                ev.integrate(u0.spectral(), 1.0, 4096).unwrap()
            };
            let mut errs = Vec::new();
            for steps in [32.0, 64.0, 128.0] {
                let ev = Evolution::new(&dec, &nl, 1.0, 1.0 / steps, scheme).unwrap();
                let traj = ev.integrate(u0.spectral(), 1.0, 1024).unwrap();
                errs.push((traj.final_state() - reference.final_state()).norm());
            }
            // least-squares slope of log error against log dt
            let xs: Vec<f64> = [32.0f64, 64.0, 128.0].iter().map(|s| (1.0 / s).ln()).collect();
            let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
            let xm = xs.iter().sum::<f64>() / 3.0;
            let ym = ys.iter().sum::<f64>() / 3.0;
            let slope = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - xm) * (y - ym))
                .sum::<f64>()
                / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
            orders.push(slope);
        }
        assert!(
            orders[0] > 1.6 && orders[0] < 2.4,
            "ETD2RK order {}",
            orders[0]
        );
        assert!(
            orders[1] > 0.7 && orders[1] < 1.3,
            "exponential Euler order {}",
            orders[1]
        );
    }

    #[test]
    fn batch_integration_matches_single_columns_bitwise() {
        let dec = setup_1d(24, 1);
        let nl = Nonlinearity::arctan(1.0);
        let ev = Evolution::new(&dec, &nl, 0.8, 1.0 / 64.0, Scheme::Etd2rk).unwrap();
        let mut states = DMatrix::zeros(24, 3);
        for c in 0..3 {
            for j in 0..24 {
                states[(j, c)] = ((c + 1) as f64) * 0.1 / (1.0 + j as f64);
            }
        }
        let batch = ev.integrate_batch(&states, 1.0).unwrap();
        for c in 0..3 {
            let single = ev
                .integrate(&DVector::from_column_slice(&states.as_slice()[c * 24..(c + 1) * 24]), 1.0, 1024)
                .unwrap();
            for j in 0..24 {
                assert_eq!(batch[(j, c)], single.final_state()[j], "col {c} mode {j}");
            }
        }
    }

    #[test]
    fn divergence_guard_trips_on_runaway_forcing() {
        let dec = setup_1d(24, 1);
        let nl = Nonlinearity::custom("blowup", |_t, _x, _s, _g| 1e12, 1e12, 0.0, false);
        let ev = Evolution::new(&dec, &nl, 1.0, 1.0 / 64.0, Scheme::ExponentialEuler).unwrap();
        let u0 = DVector::zeros(24);
        match ev.integrate(&u0, 1.0, 1) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn tail_energy_vanishes_below_cut_and_decays_above() {
        let dec = setup_1d(31, 1);
        let nl = Nonlinearity::arctan(1.0);
        let ev = Evolution::new(&dec, &nl, 0.0, 1.0 / 128.0, Scheme::Etd2rk).unwrap();
        // all energy below the cut: tail identically zero
        let low = dec
            .from_spectral(DVector::from_fn(31, |j, _| if j < 8 { 1.0 } else { 0.0 }))
            .unwrap();
        let traj = ev.integrate(low.spectral(), 1.0, 8).unwrap();
        assert_eq!(tail_energy(&dec, &traj, 16, 0.25), 0.0);

        // all energy on the top mode: fraction bounded by the worst decay factor
        let mut c = DVector::zeros(31);
        c[30] = 1.0;
        let traj = ev.integrate(&c, 1.0, 8).unwrap();
        let t1 = 0.25;
        let gap = dec.gap_plus().unwrap();
        let measured = tail_energy(&dec, &traj, 16, t1);
        assert!(measured <= (-2.0 * gap * t1).exp());
    }

    #[test]
    fn tail_fraction_stays_small_for_bounded_forcing() {
        let n = 31;
        let dec = setup_1d(n, 1);
        let nl = Nonlinearity::arctan(1.0);
        let ev = Evolution::new(&dec, &nl, 1.0, 1.0 / 128.0, Scheme::Etd2rk).unwrap();
        let mut rng_state = 0.4f64;
        let u0 = dec
            .from_spectral(DVector::from_fn(n, |_, _| {
                // deterministic pseudo-random coefficients in [-0.5, 0.5]
                rng_state = (rng_state * 997.0).fract();
                rng_state - 0.5
            }))
            .unwrap();
        let scale = dec.alpha_norm(&u0);
        let u0 = dec.from_spectral(u0.spectral() / scale).unwrap();
        let traj = ev.integrate(u0.spectral(), 1.0, 8).unwrap();
        let cut = (n * 4) / 5;
        assert!(tail_energy(&dec, &traj, cut, 0.5) <= 0.05);
    }

    #[test]
    fn perturbed_data_stays_within_gronwall_envelope() {
        let dec = setup_1d(31, 1);
        let nl = Nonlinearity::arctan(1.0);
        let eps = 1.0;
        let ev = Evolution::new(&dec, &nl, eps, 1.0 / 128.0, Scheme::Etd2rk).unwrap();
        let u0 = dec
            .from_spectral(DVector::from_fn(31, |j, _| 0.4 / (1.0 + j as f64)))
            .unwrap();
        let eta = 1e-6;
        let mut c = u0.spectral().clone();
        c[2] += eta; // alpha-norm of the perturbation: (lambda_3)^alpha * eta
        let eta_alpha = (dec.eigenvalues()[2] + dec.delta()).powf(dec.alpha()) * eta;

        let t_end = 1.0;
        let a = ev.integrate(u0.spectral(), t_end, 8).unwrap();
        let b = ev.integrate(&c, t_end, 8).unwrap();
        let mut c_obs = 0.0f64;
        for (sa, sb) in a.states.iter().zip(&b.states) {
            c_obs = c_obs.max(dec.alpha_norm_spectral(&(sb - sa)) / eta_alpha);
        }

        // measured alpha-Lipschitz constant of u -> eps F(t, u) on probes near
        // the trajectory
        let mut l_meas = 0.0f64;
        for (i, s) in a.states.iter().enumerate() {
            let u = dec.from_spectral(s.clone()).unwrap();
            let mut sp = s.clone();
            sp[1] += 1e-4;
            let v = dec.from_spectral(sp).unwrap();
            let fu = nl.apply(dec.domain(), a.times[i], u.values()).unwrap();
            let fv = nl.apply(dec.domain(), a.times[i], v.values()).unwrap();
            let num = dec
                .alpha_norm_spectral(&(dec.to_spectral(&fv) - dec.to_spectral(&fu)));
            let den = dec.alpha_norm_spectral(&(v.spectral() - u.spectral()));
            l_meas = l_meas.max(eps * num / den);
        }
        // shifted linear growth rate is 0 for k = 1 (kernel neutral, rest decays)
        let envelope = (l_meas * t_end).exp() * 1.05;
        assert!(
            c_obs <= envelope,
            "observed amplification {c_obs}, envelope {envelope}"
        );
    }
}
