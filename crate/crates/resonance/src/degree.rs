//! Topological degree machinery tying the periodic problem to its averaged
//! kernel equation.  The time-averaged nonlinearity restricted to kernel
//! coordinates gives a finite-dimensional map g; its Brouwer degree, combined
//! with a sign count over the non-kernel modes, predicts the fixed-point
//! index sum of the translation operator for small coupling.  The averaging
//! experiment drives the solver down a sequence of epsilon values and checks
//! location, non-kernel smallness, and index against that prediction.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::evolve::Scheme;
use crate::nonlinearity::Nonlinearity;
use crate::poincare::{apriori_bound, sweep_epsilon, PeriodicOrbit, SolveOptions};
use crate::spectral::SpectralDecomposition;

/// Boundary values smaller than this make a degree computation unreliable.
pub const BOUNDARY_FLOOR: f64 = 1e-10;
/// Samples on the circle for the planar winding number.
pub const WINDING_SAMPLES: usize = 720;
/// Largest trusted angle increment between adjacent winding samples.
const MAX_ANGLE_JUMP: f64 = std::f64::consts::FRAC_PI_2;
/// Fixed points closer than this (alpha-norm) count as one orbit.
const DEDUP_DISTANCE: f64 = 1e-5;
/// Default number of trapezoid intervals for the time average.
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// Time average of the nonlinearity over one period, restricted to the
/// kernel: g(z) = (1/T) int_0^T P F(t, sum z_i e_i) dt in kernel coordinates.
pub struct KernelMap<'a> {
    dec: &'a SpectralDecomposition,
    nl: &'a Nonlinearity,
    pub period: f64,
    /// Trapezoid intervals in time (exact for autonomous forcing).
    pub quadrature_nodes: usize,
}

impl<'a> KernelMap<'a> {
    pub fn new(dec: &'a SpectralDecomposition, nl: &'a Nonlinearity, period: f64) -> Self {
        KernelMap {
            dec,
            nl,
            period,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }

    pub fn dim(&self) -> usize {
        self.dec.dim_kernel()
    }

    /// Evaluate g at kernel coordinates `z`.
    pub fn evaluate(&self, z: &[f64]) -> Result<DVector<f64>> {
        let u = self.dec.from_kernel_coords(z)?;
        let kr = self.dec.kernel_range();
        let q = self.quadrature_nodes.max(1);
        let h = self.period / q as f64;
        let mut acc = DVector::zeros(kr.len());
        for node in 0..=q {
            let t = node as f64 * h;
            let weight = if node == 0 || node == q { 0.5 } else { 1.0 };
            let f = self.nl.apply(self.dec.domain(), t, u.values())?;
            let spectral = self.dec.to_spectral(&f);
            for (i, j) in kr.clone().enumerate() {
                acc[i] += weight * spectral[j];
            }
        }
        Ok(acc * (h / self.period))
    }
}

/// Brouwer degree of `f` on the ball of the given radius about the origin,
/// for one- and two-dimensional kernels.
pub fn brouwer_degree<F>(f: F, dim: usize, radius: f64) -> Result<i32>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    match dim {
        1 => {
            let right = f(&[radius])?[0];
            let left = f(&[-radius])?[0];
            let min_boundary = right.abs().min(left.abs());
            if min_boundary < BOUNDARY_FLOOR {
                return Err(Error::DegreeUndefined {
                    min_boundary,
                    floor: BOUNDARY_FLOOR,
                });
            }
            Ok(((right.signum() - left.signum()) / 2.0) as i32)
        }
        2 => {
            let mut args = Vec::with_capacity(WINDING_SAMPLES);
            let mut min_boundary = f64::INFINITY;
            for m in 0..WINDING_SAMPLES {
                let theta = 2.0 * std::f64::consts::PI * m as f64 / WINDING_SAMPLES as f64;
                let v = f(&[radius * theta.cos(), radius * theta.sin()])?;
                let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
                min_boundary = min_boundary.min(norm);
                args.push(v[1].atan2(v[0]));
            }
            if min_boundary < BOUNDARY_FLOOR {
                return Err(Error::DegreeUndefined {
                    min_boundary,
                    floor: BOUNDARY_FLOOR,
                });
            }
            let mut total = 0.0;
            for m in 0..WINDING_SAMPLES {
                let mut jump = args[(m + 1) % WINDING_SAMPLES] - args[m];
                while jump > std::f64::consts::PI {
                    jump -= 2.0 * std::f64::consts::PI;
                }
                while jump <= -std::f64::consts::PI {
                    jump += 2.0 * std::f64::consts::PI;
                }
                if jump.abs() > MAX_ANGLE_JUMP {
                    return Err(Error::WindingUnresolved {
                        max_jump: jump.abs(),
                    });
                }
                total += jump;
            }
            let turns = total / (2.0 * std::f64::consts::PI);
            let rounded = turns.round();
            if (turns - rounded).abs() > 0.1 {
                return Err(Error::WindingUnresolved {
                    max_jump: (turns - rounded).abs(),
                });
            }
            Ok(rounded as i32)
        }
        other => Err(Error::KernelDimension { dim: other }),
    }
}

/// Fixed-point index of the purely linear translation operator on the first
/// `mode_cut` modes: the product of sign(1 - e^{(lambda - lambda_j) T}) over
/// non-kernel modes.  Modes above the kernel contribute +1, so the value
/// stabilizes once the cut covers the kernel: (-1)^(number of modes below).
pub fn linear_degree_count(dec: &SpectralDecomposition, period: f64, mode_cut: usize) -> i32 {
    let kr = dec.kernel_range();
    let mut sign = 1i32;
    for j in 0..mode_cut.min(dec.mode_count()) {
        if kr.contains(&j) {
            continue;
        }
        let factor = 1.0 - ((dec.lambda() - dec.eigenvalues()[j]) * period).exp();
        if factor < 0.0 {
            sign = -sign;
        }
    }
    sign
}

/// Index sum over a family of located orbits.
#[derive(Debug, Clone)]
pub struct DegreeSum {
    /// Sum of fixed-point indices over the deduplicated certified orbits.
    pub degree: i32,
    /// (input index, index sign) of each orbit that contributed.
    pub contributions: Vec<(usize, i32)>,
    /// Input indices whose non-kernel size sits suspiciously close to the
    /// a-priori radius (within 5 percent either side).
    pub near_shell: Vec<usize>,
}

/// Sum the fixed-point indices of certified, pairwise-distinct orbits.  Any
/// uncertified or degenerate orbit in the list voids the certificate.
pub fn ls_degree_regular(
    dec: &SpectralDecomposition,
    orbits: &[PeriodicOrbit],
    radius: f64,
) -> Result<DegreeSum> {
    let mut kept: Vec<(usize, &PeriodicOrbit)> = Vec::new();
    let mut near_shell = Vec::new();
    for (i, orbit) in orbits.iter().enumerate() {
        if !orbit.certification.is_certified() {
            return Err(Error::Config(format!(
                "orbit {i} is not certified ({:?}); the index sum cannot be trusted",
                orbit.certification
            )));
        }
        if orbit.q_bound >= 0.95 * radius && orbit.q_bound <= 1.05 * radius {
            near_shell.push(i);
        }
        let duplicate = kept.iter().any(|(_, k)| {
            dec.alpha_norm_spectral(&(&orbit.fixed_point - &k.fixed_point)) < DEDUP_DISTANCE
        });
        if !duplicate {
            kept.push((i, orbit));
        }
    }
    let mut degree = 0;
    let mut contributions = Vec::with_capacity(kept.len());
    for (i, orbit) in kept {
        let sign = orbit.jacobian_sign.ok_or_else(|| {
            Error::Config(format!("certified orbit {i} carries no index sign"))
        })?;
        degree += sign;
        contributions.push((i, sign));
    }
    Ok(DegreeSum {
        degree,
        contributions,
        near_shell,
    })
}

/// Root of a scalar function by bisection on [a, b] (requires a sign change).
pub fn bisect_root<F>(f: F, a: f64, b: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = (a, b);
    let (mut flo, fhi) = (f(lo)?, f(hi)?);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Config(format!(
            "no sign change on [{a}, {b}]: f = {flo} and {fhi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid)?;
        if fmid == 0.0 || (hi - lo).abs() < 1e-13 * lo.abs().max(hi.abs()).max(1.0) {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One row of the averaging experiment.
#[derive(Debug, Clone)]
pub struct AveragingRow {
    pub epsilon: f64,
    pub fixed_point_found: bool,
    /// Observed alpha-norm of the non-kernel component along the orbit.
    pub qnorm: f64,
    /// A-priori radius at this epsilon (the admissible qnorm).
    pub radius: f64,
    pub kernel_coord: f64,
    /// Distance from the kernel coordinate to the root of the averaged map.
    pub g_root_distance: f64,
    pub degree_value: Option<i32>,
    pub expected_degree: i32,
    pub pass: bool,
}

/// Result of driving the solver along decreasing epsilon.
#[derive(Debug, Clone)]
pub struct AveragingReport {
    pub rows: Vec<AveragingRow>,
    /// Root of the averaged kernel map the orbits should approach.
    pub g_root: f64,
    /// Predicted index: linear count times the Brouwer degree of -g.
    pub expected_degree: i32,
    /// The experiment stands or falls with its smallest epsilon.
    pub passed: bool,
}

/// Drive fixed-point solves down a decreasing epsilon sequence and test the
/// averaging prediction: orbits exist, their non-kernel part stays inside
/// the a-priori radius (which shrinks linearly), their kernel coordinate
/// approaches a root of g, and their index matches the degree formula.
/// One-dimensional kernels only.
#[allow(clippy::too_many_arguments)]
pub fn averaging_experiment(
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    epsilons: &[f64],
    period: f64,
    dt: f64,
    scheme: Scheme,
    mode_cut: usize,
    kernel_radius: f64,
    opts: &SolveOptions,
) -> Result<AveragingReport> {
    if dec.dim_kernel() != 1 {
        return Err(Error::KernelDimension {
            dim: dec.dim_kernel(),
        });
    }
    let g = KernelMap::new(dec, nl, period);
    let g1 = |z: f64| -> Result<f64> { Ok(g.evaluate(&[z])?[0]) };
    let g_root = bisect_root(g1, -kernel_radius, kernel_radius)?;
    let minus_g = |z: &[f64]| -> Result<DVector<f64>> { Ok(-g.evaluate(z)?) };
    let expected_degree =
        linear_degree_count(dec, period, mode_cut) * brouwer_degree(minus_g, 1, kernel_radius)?;

    let x0 = dec.from_kernel_coords(&[g_root])?;
    let entries = sweep_epsilon(
        dec,
        nl,
        epsilons,
        period,
        dt,
        scheme,
        mode_cut,
        x0.spectral(),
        opts,
    )?;
    let kernel_mode = dec.kernel_range().start;
    let mut rows = Vec::with_capacity(entries.len());
    for entry in &entries {
        let radius = apriori_bound(dec, nl, entry.epsilon, period).radius;
        let row = match &entry.orbit {
            Ok(orbit) => {
                let found = orbit.certification.is_certified();
                let kernel_coord = orbit.fixed_point[kernel_mode];
                let dist = (kernel_coord - g_root).abs();
                let dist_ok = dist <= (0.05 * g_root.abs().max(kernel_coord.abs())).max(1e-6);
                let pass = found
                    && orbit.q_bound <= radius * (1.0 + 1e-9)
                    && dist_ok
                    && orbit.jacobian_sign == Some(expected_degree);
                AveragingRow {
                    epsilon: entry.epsilon,
                    fixed_point_found: found,
                    qnorm: orbit.q_bound,
                    radius,
                    kernel_coord,
                    g_root_distance: dist,
                    degree_value: orbit.jacobian_sign,
                    expected_degree,
                    pass,
                }
            }
            Err(_) => AveragingRow {
                epsilon: entry.epsilon,
                fixed_point_found: false,
                qnorm: f64::NAN,
                radius,
                kernel_coord: f64::NAN,
                g_root_distance: f64::NAN,
                degree_value: None,
                expected_degree,
                pass: false,
            },
        };
        rows.push(row);
    }
    // epsilons are swept in decreasing order; the asymptotic claim is about
    // the smallest one
    let passed = rows.last().map(|r| r.pass).unwrap_or(false);
    Ok(AveragingReport {
        rows,
        g_root,
        expected_degree,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{Coefficient, Domain, EllipticProblem};
    use crate::spectral::decompose_by_index;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const TEST_PERIOD: f64 = 2.0;

    fn setup_1d(n: usize, k: usize) -> SpectralDecomposition {
        let dom = Domain::Interval { length: PI, n };
        let m = EllipticProblem::new(dom.clone(), Coefficient::Constant(1.0))
            .assemble()
            .unwrap();
        decompose_by_index(&dom, &m, k, 0.8).unwrap()
    }

    #[test]
    fn averaged_map_is_odd_and_positive_past_the_origin() {
        let dec = setup_1d(31, 1);
        let nl = Nonlinearity::arctan(1.0);
        let g = KernelMap::new(&dec, &nl, TEST_PERIOD);
        let at3 = g.evaluate(&[3.0]).unwrap()[0];
        let atm3 = g.evaluate(&[-3.0]).unwrap()[0];
        assert!(at3 > 0.0, "kernel mode is positive, so g(3) > 0; got {at3}");
        assert_relative_eq!(at3, -atm3, max_relative = 1e-12);
        assert_relative_eq!(g.evaluate(&[0.0]).unwrap()[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn quadrature_refinement_converges_for_time_periodic_forcing() {
        let dec = setup_1d(31, 1);
        let nl = Nonlinearity::periodic_forced_arctan(1.0, TEST_PERIOD);
        let mut g = KernelMap::new(&dec, &nl, TEST_PERIOD);
        g.quadrature_nodes = 16;
        let coarse = g.evaluate(&[1.5]).unwrap()[0];
        g.quadrature_nodes = 512;
        let fine = g.evaluate(&[1.5]).unwrap()[0];
        assert_relative_eq!(coarse, fine, max_relative = 1e-4);
        // autonomous forcing: the time average is the pointwise value, any
        // node count agrees exactly
        let auto = Nonlinearity::arctan(1.0);
        let mut ga = KernelMap::new(&dec, &auto, TEST_PERIOD);
        ga.quadrature_nodes = 3;
        let a3 = ga.evaluate(&[1.5]).unwrap()[0];
        ga.quadrature_nodes = 64;
        let a64 = ga.evaluate(&[1.5]).unwrap()[0];
        assert_relative_eq!(a3, a64, max_relative = 1e-14);
    }

    #[test]
    fn scalar_degree_counts_sign_changes_and_is_radius_invariant() {
        let dec = setup_1d(31, 1);
        let nl = Nonlinearity::arctan(1.0);
        let g = KernelMap::new(&dec, &nl, TEST_PERIOD);
        let f = |z: &[f64]| g.evaluate(z);
        for radius in [1.0, 2.0, 5.0] {
            assert_eq!(brouwer_degree(&f, 1, radius).unwrap(), 1);
        }
        let neg = |z: &[f64]| -> Result<DVector<f64>> { Ok(-g.evaluate(z)?) };
        assert_eq!(brouwer_degree(neg, 1, 2.0).unwrap(), -1);
    }

    #[test]
    fn winding_number_counts_planar_degrees() {
        let identity = |z: &[f64]| -> Result<DVector<f64>> {
            Ok(DVector::from_column_slice(&[z[0], z[1]]))
        };
        assert_eq!(brouwer_degree(identity, 2, 1.0).unwrap(), 1);
        let square = |z: &[f64]| -> Result<DVector<f64>> {
            Ok(DVector::from_column_slice(&[
                z[0] * z[0] - z[1] * z[1],
                2.0 * z[0] * z[1],
            ]))
        };
        assert_eq!(brouwer_degree(square, 2, 0.7).unwrap(), 2);
        let conjugate = |z: &[f64]| -> Result<DVector<f64>> {
            Ok(DVector::from_column_slice(&[z[0], -z[1]]))
        };
        assert_eq!(brouwer_degree(conjugate, 2, 1.0).unwrap(), -1);
    }

    #[test]
    fn degenerate_boundaries_and_wild_winding_are_refused() {
        let vanishing = |z: &[f64]| -> Result<DVector<f64>> {
            // zero at angle 0 on the boundary
            Ok(DVector::from_column_slice(&[z[0] - 1.0, z[1]]))
        };
        assert!(matches!(
            brouwer_degree(vanishing, 2, 1.0),
            Err(Error::DegreeUndefined { .. })
        ));
        let spinning = |z: &[f64]| -> Result<DVector<f64>> {
            let theta = z[1].atan2(z[0]);
            Ok(DVector::from_column_slice(&[
                (200.0 * theta).cos(),
                (200.0 * theta).sin(),
            ]))
        };
        assert!(matches!(
            brouwer_degree(spinning, 2, 1.0),
            Err(Error::WindingUnresolved { .. })
        ));
        let too_big = |z: &[f64]| -> Result<DVector<f64>> {
            Ok(DVector::from_column_slice(&[z[0], z[1], 0.0]))
        };
        assert!(matches!(
            brouwer_degree(too_big, 3, 1.0),
            Err(Error::KernelDimension { dim: 3 })
        ));
    }

    #[test]
    fn linear_count_alternates_with_the_resonant_cluster() {
        for (k, expect) in [(1usize, 1i32), (2, -1), (3, 1)] {
            let dec = setup_1d(31, k);
            let count = linear_degree_count(&dec, TEST_PERIOD, 12);
            assert_eq!(count, expect, "k = {k}");
            // value settles once the cut passes the kernel
            assert_eq!(count, linear_degree_count(&dec, TEST_PERIOD, 20));
            assert_eq!(count, linear_degree_count(&dec, TEST_PERIOD, 31));
        }
    }

    #[test]
    fn scalar_translation_degree_matches_minus_g_by_brute_force() {
        // independent check on a pure kernel flow u' = eps g(u): the degree
        // of I - (time-T translation) equals the degree of -g
        let rk4 = |g: &dyn Fn(f64) -> f64, mut u: f64, t_end: f64, steps: usize| -> f64 {
            let h = t_end / steps as f64;
            for _ in 0..steps {
                let k1 = g(u);
                let k2 = g(u + 0.5 * h * k1);
                let k3 = g(u + 0.5 * h * k2);
                let k4 = g(u + h * k3);
                u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            u
        };
        let radius = 3.0;
        for (g, expected) in [
            ((|u: f64| 0.5 * u.atan()) as fn(f64) -> f64, -1i32),
            (|u: f64| -0.5 * u.atan(), 1),
        ] {
            let displacement = |z: &[f64]| -> Result<DVector<f64>> {
                let end = rk4(&g, z[0], TEST_PERIOD, 64);
                Ok(DVector::from_column_slice(&[z[0] - end]))
            };
            let translation_degree = brouwer_degree(displacement, 1, radius).unwrap();
            let minus_g = |z: &[f64]| -> Result<DVector<f64>> {
                Ok(DVector::from_column_slice(&[-g(z[0])]))
            };
            assert_eq!(
                translation_degree,
                brouwer_degree(minus_g, 1, radius).unwrap()
            );
            assert_eq!(translation_degree, expected);
        }
    }

    #[test]
    fn index_sum_deduplicates_and_demands_certificates() {
        use crate::evolve::Evolution;
        use crate::poincare::find_fixed_point;
        let dec = setup_1d(24, 1);
        let nl = Nonlinearity::arctan(1.0);
        let dt = TEST_PERIOD / 256.0;
        let ev = Evolution::new(&dec, &nl, 1.0, dt, Scheme::Etd2rk).unwrap();
        let orbit = find_fixed_point(
            &ev,
            TEST_PERIOD,
            &DVector::zeros(24),
            8,
            &SolveOptions::default(),
        )
        .unwrap();
        let radius = apriori_bound(&dec, &nl, 1.0, TEST_PERIOD).radius;
        // the same orbit twice collapses to one contribution
        let sum = ls_degree_regular(&dec, &[orbit.clone(), orbit.clone()], radius).unwrap();
        assert_eq!(sum.degree, -1);
        assert_eq!(sum.contributions.len(), 1);
        assert!(sum.near_shell.is_empty());
        // an uncertified orbit voids the certificate
        let mut bad = orbit.clone();
        bad.certification = crate::poincare::Certification::NoConvergence {
            residual: 1.0,
            iterations: 50,
        };
        assert!(ls_degree_regular(&dec, &[orbit.clone(), bad], radius).is_err());
        // an orbit sitting on the comparison shell is flagged
        let mut shelled = orbit.clone();
        shelled.q_bound = radius;
        let sum = ls_degree_regular(&dec, &[shelled], radius).unwrap();
        assert_eq!(sum.near_shell, vec![0]);
    }

    #[test]
    fn bisection_finds_roots_and_demands_sign_changes() {
        let f = |x: f64| -> Result<f64> { Ok(x * x * x - 2.0) };
        let root = bisect_root(f, 0.0, 2.0).unwrap();
        assert_relative_eq!(root, 2f64.powf(1.0 / 3.0), max_relative = 1e-10);
        assert!(bisect_root(|x| Ok(x * x + 1.0), -1.0, 1.0).is_err());
    }

    #[test]
    fn averaging_run_confirms_the_degree_prediction() {
        let dec = setup_1d(24, 1);
        let nl = Nonlinearity::arctan(1.0);
        let report = averaging_experiment(
            &dec,
            &nl,
            &[1.0, 0.5, 0.25],
            TEST_PERIOD,
            TEST_PERIOD / 256.0,
            Scheme::Etd2rk,
            8,
            3.0,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(report.expected_degree, -1);
        assert_relative_eq!(report.g_root, 0.0, epsilon = 1e-9);
        assert!(report.passed);
        for row in &report.rows {
            assert!(row.pass, "eps = {}", row.epsilon);
            assert!(row.qnorm <= row.radius);
        }
        // radius shrinks linearly with epsilon
        assert_relative_eq!(
            report.rows[0].radius,
            4.0 * report.rows[2].radius,
            max_relative = 1e-12
        );
    }

    #[test]
    fn averaging_refuses_planar_kernels() {
        let dom = Domain::Rectangle {
            lengths: (PI, PI),
            n: 12,
        };
        let m = EllipticProblem::new(dom.clone(), Coefficient::Constant(1.0))
            .assemble()
            .unwrap();
        let dec = decompose_by_index(&dom, &m, 2, 0.8).unwrap();
        assert_eq!(dec.dim_kernel(), 2);
        let nl = Nonlinearity::arctan(1.0);
        assert!(matches!(
            averaging_experiment(
                &dec,
                &nl,
                &[0.5],
                TEST_PERIOD,
                TEST_PERIOD / 128.0,
                Scheme::Etd2rk,
                6,
                2.0,
                &SolveOptions::default(),
            ),
            Err(Error::KernelDimension { dim: 2 })
        ));
    }
}
