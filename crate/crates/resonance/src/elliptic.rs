//! Discrete elliptic operators: finite-difference assembly of -div(a grad u)
//! with Dirichlet boundary on an interval or a rectangle.
//!
//! 1D uses the divergence-form three-point stencil with midpoint-averaged
//! coefficients; 2D is the five-point Kronecker-sum Laplacian with a constant
//! coefficient.  The H inner product used everywhere downstream is the
//! trapezoidal rule, which on Dirichlet interior nodes reduces to
//! `weight * dot(u, v)` with a uniform per-node weight.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Spatial domain with `n` interior nodes per axis (boundary nodes carry the
/// Dirichlet zeros and are not part of the state vector).
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Interval { length: f64, n: usize },
    Rectangle { lengths: (f64, f64), n: usize },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { .. } => 2,
        }
    }

    /// Number of interior nodes = length of all state vectors.
    pub fn node_count(&self) -> usize {
        match self {
            Domain::Interval { n, .. } => *n,
            Domain::Rectangle { n, .. } => n * n,
        }
    }

    /// Interior nodes per axis.
    pub fn nodes_per_axis(&self) -> usize {
        match self {
            Domain::Interval { n, .. } | Domain::Rectangle { n, .. } => *n,
        }
    }

    /// Mesh widths per axis.
    pub fn spacing(&self) -> (f64, f64) {
        match self {
            Domain::Interval { length, n } => {
                let h = length / (*n as f64 + 1.0);
                (h, h)
            }
            Domain::Rectangle { lengths, n } => {
                let d = *n as f64 + 1.0;
                (lengths.0 / d, lengths.1 / d)
            }
        }
    }

    /// Quadrature weight of one interior node in the trapezoidal H product.
    pub fn node_weight(&self) -> f64 {
        let (hx, hy) = self.spacing();
        match self {
            Domain::Interval { .. } => hx,
            Domain::Rectangle { .. } => hx * hy,
        }
    }

    /// Coordinates of interior node `idx` (second component 0 in 1D; 2D nodes
    /// are laid out row-major as `idx = ix * n + iy`).
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (hx, hy) = self.spacing();
        match self {
            Domain::Interval { .. } => ((idx as f64 + 1.0) * hx, 0.0),
            Domain::Rectangle { n, .. } => {
                let ix = idx / n;
                let iy = idx % n;
                ((ix as f64 + 1.0) * hx, (iy as f64 + 1.0) * hy)
            }
        }
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        match self {
            Domain::Interval { length, .. } => *length,
            Domain::Rectangle { lengths, .. } => lengths.0 * lengths.1,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes_per_axis();
        if n < 8 {
            return Err(Error::Config(format!(
                "grid_size must be at least 8 interior nodes per axis, got {n}"
            )));
        }
        let ok = match self {
            Domain::Interval { length, .. } => *length > 0.0,
            Domain::Rectangle { lengths, .. } => lengths.0 > 0.0 && lengths.1 > 0.0,
        };
        if !ok {
            return Err(Error::Config("domain lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Diffusion coefficient a(x).  `Samples` holds values on the closed 1D grid
/// (n + 2 entries, boundary nodes included) so that midpoint averages near the
/// boundary are well defined.
#[derive(Debug, Clone)]
pub enum Coefficient {
    Constant(f64),
    Samples(Vec<f64>),
}

impl Coefficient {
    /// Sample a closure on the closed 1D grid of `domain`.
    pub fn from_fn(domain: &Domain, a: impl Fn(f64) -> f64) -> Self {
        let n = domain.nodes_per_axis();
        let (h, _) = domain.spacing();
        Coefficient::Samples((0..n + 2).map(|i| a(i as f64 * h)).collect())
    }
}

/// Elliptic problem -div(a grad u) on a Dirichlet domain.
#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub domain: Domain,
    pub coefficient: Coefficient,
}

impl EllipticProblem {
    pub fn new(domain: Domain, coefficient: Coefficient) -> Self {
        Self {
            domain,
            coefficient,
        }
    }

    /// Assemble the dense symmetric stiffness matrix on interior nodes.
    pub fn assemble(&self) -> Result<DMatrix<f64>> {
        self.domain.validate()?;
        match (&self.domain, &self.coefficient) {
            (Domain::Interval { n, .. }, coeff) => {
                let n = *n;
                let (h, _) = self.domain.spacing();
                let closed = match coeff {
                    Coefficient::Constant(a) => {
                        check_positive(*a, 0.0)?;
                        vec![*a; n + 2]
                    }
                    Coefficient::Samples(s) => {
                        if s.len() != n + 2 {
                            return Err(Error::DimensionMismatch {
                                expected: n + 2,
                                got: s.len(),
                            });
                        }
                        for (i, &v) in s.iter().enumerate() {
                            check_positive(v, i as f64 * h)?;
                        }
                        s.clone()
                    }
                };
                // midpoint coefficients a_{i+1/2}, i = 0..n on the closed grid
                let mid: Vec<f64> = (0..n + 1).map(|i| 0.5 * (closed[i] + closed[i + 1])).collect();
                let inv_h2 = 1.0 / (h * h);
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    m[(i, i)] = (mid[i] + mid[i + 1]) * inv_h2;
                    if i + 1 < n {
                        m[(i, i + 1)] = -mid[i + 1] * inv_h2;
                        m[(i + 1, i)] = -mid[i + 1] * inv_h2;
                    }
                }
                Ok(m)
            }
            (Domain::Rectangle { n, .. }, Coefficient::Constant(a)) => {
                check_positive(*a, 0.0)?;
                let n = *n;
                let (hx, hy) = self.domain.spacing();
                let cx = a / (hx * hx);
                let cy = a / (hy * hy);
                let total = n * n;
                let mut m = DMatrix::zeros(total, total);
                for ix in 0..n {
                    for iy in 0..n {
                        let row = ix * n + iy;
                        m[(row, row)] = 2.0 * cx + 2.0 * cy;
                        if ix + 1 < n {
                            m[(row, row + n)] = -cx;
                            m[(row + n, row)] = -cx;
                        }
                        if iy + 1 < n {
                            m[(row, row + 1)] = -cy;
                            m[(row + 1, row)] = -cy;
                        }
                    }
                }
                Ok(m)
            }
            (Domain::Rectangle { .. }, Coefficient::Samples(_)) => Err(Error::Config(
                "2D problems support constant coefficients only".into(),
            )),
        }
    }
}

fn check_positive(a: f64, x: f64) -> Result<()> {
    if a > 0.0 {
        Ok(())
    } else {
        Err(Error::EllipticityViolation { x, value: a })
    }
}

/// Difference gradient of a grid function: second-order central stencils in
/// the interior, second-order one-sided stencils at boundary-adjacent nodes.
/// Returns one component vector per space dimension.
pub fn gradient(domain: &Domain, values: &[f64]) -> Vec<Vec<f64>> {
    let n = domain.nodes_per_axis();
    let (hx, hy) = domain.spacing();
    match domain {
        Domain::Interval { .. } => vec![gradient_line(values, n, 1, 0, hx)],
        Domain::Rectangle { .. } => {
            let mut gx = vec![0.0; n * n];
            let mut gy = vec![0.0; n * n];
            for iy in 0..n {
                let col = gradient_line(values, n, n, iy, hx);
                for ix in 0..n {
                    gx[ix * n + iy] = col[ix];
                }
            }
            for ix in 0..n {
                let row = gradient_line(values, n, 1, ix * n, hy);
                gy[ix * n..(ix + 1) * n].copy_from_slice(&row);
            }
            vec![gx, gy]
        }
    }
}

/// One-dimensional differentiation along a strided line of `len` samples
/// starting at `offset` with stride `stride`.
fn gradient_line(values: &[f64], len: usize, stride: usize, offset: usize, h: f64) -> Vec<f64> {
    let v = |i: usize| values[offset + i * stride];
    let inv2h = 1.0 / (2.0 * h);
    let mut g = vec![0.0; len];
    g[0] = (-3.0 * v(0) + 4.0 * v(1) - v(2)) * inv2h;
    for i in 1..len - 1 {
        g[i] = (v(i + 1) - v(i - 1)) * inv2h;
    }
    g[len - 1] = (3.0 * v(len - 1) - 4.0 * v(len - 2) + v(len - 3)) * inv2h;
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit_interval_pi(n: usize) -> Domain {
        Domain::Interval { length: PI, n }
    }

    #[test]
    fn constant_coefficient_laplacian_matches_closed_form_eigenvalues() {
        // Dirichlet Laplacian on (0, pi): eigenvalues (4/h^2) sin^2(j h / 2).
        let n = 31;
        let problem = EllipticProblem::new(unit_interval_pi(n), Coefficient::Constant(1.0));
        let m = problem.assemble().unwrap();
        let h = PI / (n as f64 + 1.0);
        let mut eigs: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (j, ev) in eigs.iter().enumerate() {
            let exact = 4.0 / (h * h) * ((j as f64 + 1.0) * h / 2.0).sin().powi(2);
            assert_relative_eq!(*ev, exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn assembled_matrix_is_symmetric_with_positive_diagonal() {
        let problem = EllipticProblem::new(
            unit_interval_pi(32),
            Coefficient::from_fn(&unit_interval_pi(32), |x| 1.0 + 0.5 * x.sin()),
        );
        let m = problem.assemble().unwrap();
        for i in 0..32 {
            assert!(m[(i, i)] > 0.0);
            for j in 0..32 {
                assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
    }

    #[test]
    fn variable_coefficient_keeps_quadratic_form_positive() {
        let dom = unit_interval_pi(24);
        let problem =
            EllipticProblem::new(dom.clone(), Coefficient::from_fn(&dom, |x| 2.0 + x.cos()));
        let m = problem.assemble().unwrap();
        // u^T A u = sum a_{i+1/2} (u_{i+1} - u_i)^2 / h^2 > 0 for u != 0
        let u = nalgebra::DVector::from_fn(24, |i, _| ((i as f64) * 0.7).sin() + 0.3);
        let q = (u.transpose() * &m * &u)[(0, 0)];
        assert!(q > 0.0);
    }

    #[test]
    fn nonpositive_coefficient_is_rejected() {
        let dom = unit_interval_pi(16);
        let problem = EllipticProblem::new(dom.clone(), Coefficient::from_fn(&dom, |x| x - 1.0));
        match problem.assemble() {
            Err(Error::EllipticityViolation { .. }) => {}
            other => panic!("expected ellipticity violation, got {other:?}"),
        }
    }

    #[test]
    fn rectangle_assembly_is_kronecker_sum_of_line_laplacians() {
        let n = 8;
        let dom = Domain::Rectangle {
            lengths: (PI, PI),
            n,
        };
        let m = EllipticProblem::new(dom.clone(), Coefficient::Constant(1.0))
            .assemble()
            .unwrap();
        let line = EllipticProblem::new(
            Domain::Interval { length: PI, n },
            Coefficient::Constant(1.0),
        )
        .assemble()
        .unwrap();
        let id = DMatrix::<f64>::identity(n, n);
        let kron = line.kronecker(&id) + id.kronecker(&line);
        assert_relative_eq!((m - kron).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rectangle_rejects_sampled_coefficients() {
        let dom = Domain::Rectangle {
            lengths: (PI, PI),
            n: 8,
        };
        let problem = EllipticProblem::new(dom, Coefficient::Samples(vec![1.0; 10]));
        assert!(matches!(problem.assemble(), Err(Error::Config(_))));
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        let problem = EllipticProblem::new(unit_interval_pi(4), Coefficient::Constant(1.0));
        assert!(problem.assemble().is_err());
    }

    #[test]
    fn gradient_is_second_order_on_smooth_data() {
        let errs: Vec<f64> = [40usize, 80]
            .iter()
            .map(|&n| {
                let dom = unit_interval_pi(n);
                let vals: Vec<f64> = (0..n).map(|i| dom.coords(i).0.sin()).collect();
                let g = gradient(&dom, &vals);
                (0..n)
                    .map(|i| (g[0][i] - dom.coords(i).0.cos()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.8, "observed order {order}");
    }

    #[test]
    fn gradient_2d_differentiates_each_axis() {
        let n = 20;
        let dom = Domain::Rectangle {
            lengths: (PI, PI),
            n,
        };
        let vals: Vec<f64> = (0..n * n)
            .map(|i| {
                let (x, y) = dom.coords(i);
                x.sin() * (2.0 * y).sin()
            })
            .collect();
        let g = gradient(&dom, &vals);
        let mut worst = (0.0f64, 0.0f64);
        for i in 0..n * n {
            let (x, y) = dom.coords(i);
            worst.0 = worst.0.max((g[0][i] - x.cos() * (2.0 * y).sin()).abs());
            worst.1 = worst.1.max((g[1][i] - 2.0 * x.sin() * (2.0 * y).cos()).abs());
        }
        assert!(worst.0 < 0.05 && worst.1 < 0.1, "gradient errors {worst:?}");
    }
}
