//! Spectral decomposition of the discrete elliptic operator around a resonant
//! eigenvalue: H-orthonormal eigenbasis, clustering of repeated eigenvalues,
//! the splitting X = X_minus + X_kernel + X_plus, fractional norms, and the
//! semigroup decay bounds that the splitting is supposed to deliver.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elliptic::Domain;
use crate::error::{Error, Result};

/// Relative tolerance for grouping near-equal eigenvalues into one cluster.
pub const CLUSTER_REL_TOL: f64 = 1e-8;
/// Default relative tolerance for snapping `lambda_target` onto a cluster.
pub const SNAP_REL_TOL: f64 = 1e-6;
/// Eigenvalues below this are treated as nonpositive when choosing the shift.
const POSITIVITY_FLOOR: f64 = 1e-12;
/// Two adjacent nodes both below this magnitude fail the isolated-zero audit.
const ISOLATED_ZERO_TOL: f64 = 1e-8;

/// Which part of the spectral splitting to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Kernel,
    Minus,
    Plus,
    /// Q = Q_minus + Q_plus.
    NonKernel,
    /// X_0 + X_minus, the subspace carrying the backward semigroup extension.
    KernelMinus,
}

/// Classification of a single eigenmode relative to the resonant cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeClass {
    Minus,
    Kernel,
    Plus,
}

impl ModeClass {
    fn label(self) -> &'static str {
        match self {
            ModeClass::Minus => "minus",
            ModeClass::Kernel => "kernel",
            ModeClass::Plus => "plus",
        }
    }
}

/// A group of numerically coincident eigenvalues.
#[derive(Debug, Clone)]
pub struct Cluster {
    /// Mean of the member eigenvalues.
    pub value: f64,
    /// Contiguous mode indices belonging to the cluster.
    pub modes: Range<usize>,
}

/// How to pick the resonant cluster.
#[derive(Debug, Clone, Copy)]
pub enum ResonanceTarget {
    /// Snap to the nearest cluster within [`SNAP_REL_TOL`] relative distance.
    Lambda(f64),
    /// Snap to the nearest cluster within a caller-chosen relative distance
    /// (continuum eigenvalues differ from discrete ones by O(h^2)).
    LambdaWithin { value: f64, rel_tol: f64 },
    /// 1-based cluster index.
    Index(usize),
}

/// Grid function carrying both nodal values and spectral coefficients, kept
/// consistent by construction through [`SpectralDecomposition`].
#[derive(Debug, Clone)]
pub struct GridFunction {
    values: DVector<f64>,
    spectral: DVector<f64>,
}

impl GridFunction {
    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn spectral(&self) -> &DVector<f64> {
        &self.spectral
    }
}

/// Eigenbasis of the discrete operator together with the resonant splitting.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    domain: Domain,
    /// Columns are H-orthonormal eigenvectors in ascending eigenvalue order.
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    clusters: Vec<Cluster>,
    cluster_of_mode: Vec<usize>,
    /// Cumulative multiplicity: d[0] = 0, d[l] = modes through cluster l.
    cumulative: Vec<usize>,
    /// 1-based index of the resonant cluster.
    k: usize,
    lambda: f64,
    delta: f64,
    alpha: f64,
    weight: f64,
    /// (lambda_j + delta)^alpha per mode.
    frac_weights: Vec<f64>,
}

/// Decompose with the default snap tolerance ([`SNAP_REL_TOL`]).
pub fn decompose(
    domain: &Domain,
    matrix: &DMatrix<f64>,
    lambda_target: f64,
    alpha: f64,
) -> Result<SpectralDecomposition> {
    decompose_with(domain, matrix, ResonanceTarget::Lambda(lambda_target), alpha)
}

/// Decompose selecting the resonant cluster by 1-based index.
pub fn decompose_by_index(
    domain: &Domain,
    matrix: &DMatrix<f64>,
    k: usize,
    alpha: f64,
) -> Result<SpectralDecomposition> {
    decompose_with(domain, matrix, ResonanceTarget::Index(k), alpha)
}

/// Full eigendecomposition plus resonant splitting.
pub fn decompose_with(
    domain: &Domain,
    matrix: &DMatrix<f64>,
    target: ResonanceTarget,
    alpha: f64,
) -> Result<SpectralDecomposition> {
    let n = domain.node_count();
    if matrix.nrows() != n || matrix.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: matrix.nrows(),
        });
    }
    if !(alpha > 0.75 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie strictly between 3/4 and 1, got {alpha}"
        )));
    }

    let eig = matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let weight = domain.node_weight();
    let mut basis = DMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(src).into_owned();
        // Rayleigh-quotient refinement: the QR eigenvalue carries an absolute
        // error of order eps * |A|, which for small eigenvalues is a poor
        // *relative* error; the Rayleigh quotient of the computed eigenvector
        // is accurate to the square of the eigenvector angle error.
        let av = matrix * &v;
        let refined = v.dot(&av) / v.dot(&v);
        eigenvalues.push(refined);
        // H-orthonormalize and fix a deterministic sign.
        let scale = 1.0 / (v.norm() * weight.sqrt());
        v *= scale;
        let mut max_idx = 0;
        for i in 0..n {
            if v[i].abs() > v[max_idx].abs() {
                max_idx = i;
            }
        }
        if v[max_idx] < 0.0 {
            v = -v;
        }
        basis.set_column(dst, &v);
    }

    // Refinement can nudge near-equal eigenvalues out of order; restore it.
    let mut order2: Vec<usize> = (0..n).collect();
    order2.sort_by(|&a, &b| eigenvalues[a].partial_cmp(&eigenvalues[b]).unwrap());
    if order2.iter().enumerate().any(|(i, &j)| i != j) {
        let vals: Vec<f64> = order2.iter().map(|&j| eigenvalues[j]).collect();
        let cols: Vec<DVector<f64>> = order2.iter().map(|&j| basis.column(j).into_owned()).collect();
        eigenvalues = vals;
        for (i, c) in cols.iter().enumerate() {
            basis.set_column(i, c);
        }
    }

    let max_abs = eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cluster_tol = CLUSTER_REL_TOL * max_abs;
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut start = 0usize;
    for j in 1..=n {
        if j == n || eigenvalues[j] - eigenvalues[j - 1] > cluster_tol {
            let value = eigenvalues[start..j].iter().sum::<f64>() / (j - start) as f64;
            clusters.push(Cluster {
                value,
                modes: start..j,
            });
            start = j;
        }
    }
    let mut cluster_of_mode = vec![0usize; n];
    for (c, cl) in clusters.iter().enumerate() {
        for m in cl.modes.clone() {
            cluster_of_mode[m] = c;
        }
    }
    let mut cumulative = vec![0usize; clusters.len() + 1];
    for (c, cl) in clusters.iter().enumerate() {
        cumulative[c + 1] = cl.modes.end;
    }

    let k = match target {
        ResonanceTarget::Index(k) => {
            if k == 0 || k > clusters.len() {
                return Err(Error::ClusterIndexOutOfRange {
                    k,
                    max: clusters.len(),
                });
            }
            k
        }
        ResonanceTarget::Lambda(value) => snap(&clusters, value, SNAP_REL_TOL)?,
        ResonanceTarget::LambdaWithin { value, rel_tol } => snap(&clusters, value, rel_tol)?,
    };
    let lambda = clusters[k - 1].value;
    let delta = if eigenvalues[0] > POSITIVITY_FLOOR {
        0.0
    } else {
        eigenvalues[0].abs() + 1.0
    };
    let frac_weights = eigenvalues.iter().map(|&l| (l + delta).powf(alpha)).collect();

    Ok(SpectralDecomposition {
        domain: domain.clone(),
        basis,
        eigenvalues,
        clusters,
        cluster_of_mode,
        cumulative,
        k,
        lambda,
        delta,
        alpha,
        weight,
        frac_weights,
    })
}

fn snap(clusters: &[Cluster], value: f64, rel_tol: f64) -> Result<usize> {
    let (best, cl) = clusters
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1.value - value)
                .abs()
                .partial_cmp(&(b.1.value - value).abs())
                .unwrap()
        })
        .expect("at least one cluster");
    let scale = value.abs().max(cl.value.abs()).max(1e-300);
    let rel_dist = (cl.value - value).abs() / scale;
    if rel_dist <= rel_tol {
        Ok(best + 1)
    } else {
        Err(Error::ResonanceMismatch {
            target: value,
            nearest: cl.value,
            rel_dist,
            tol: rel_tol,
        })
    }
}

impl SpectralDecomposition {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn node_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    /// 1-based index of the resonant cluster.
    pub fn k(&self) -> usize {
        self.k
    }

    /// The resonant eigenvalue (mean of its cluster).
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Quadrature weight of one node in the H inner product.
    pub fn node_weight(&self) -> f64 {
        self.weight
    }

    /// H-orthonormal eigenbasis, columns in ascending eigenvalue order.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn kernel_range(&self) -> Range<usize> {
        self.clusters[self.k - 1].modes.clone()
    }

    pub fn dim_minus(&self) -> usize {
        self.kernel_range().start
    }

    pub fn dim_kernel(&self) -> usize {
        self.kernel_range().len()
    }

    pub fn dim_plus(&self) -> usize {
        self.mode_count() - self.kernel_range().end
    }

    /// Cumulative multiplicity table: entry `l` counts the modes through the
    /// l-th cluster (entry 0 is 0).
    pub fn cumulative_multiplicity(&self) -> &[usize] {
        &self.cumulative
    }

    /// Modes at or below the resonant cluster, `d_k`.
    pub fn modes_through_kernel(&self) -> usize {
        self.cumulative[self.k]
    }

    /// Modes strictly below the resonant cluster, `d_{k-1}`.
    pub fn modes_below_kernel(&self) -> usize {
        self.cumulative[self.k - 1]
    }

    pub fn mode_class(&self, mode: usize) -> ModeClass {
        let kr = self.kernel_range();
        if mode < kr.start {
            ModeClass::Minus
        } else if mode < kr.end {
            ModeClass::Kernel
        } else {
            ModeClass::Plus
        }
    }

    fn part_contains(&self, part: Part, mode: usize) -> bool {
        match (part, self.mode_class(mode)) {
            (Part::Kernel, ModeClass::Kernel) => true,
            (Part::Minus, ModeClass::Minus) => true,
            (Part::Plus, ModeClass::Plus) => true,
            (Part::NonKernel, ModeClass::Minus | ModeClass::Plus) => true,
            (Part::KernelMinus, ModeClass::Kernel | ModeClass::Minus) => true,
            _ => false,
        }
    }

    /// Distance from the resonant eigenvalue down to the next cluster below.
    pub fn gap_minus(&self) -> Option<f64> {
        (self.k >= 2).then(|| self.lambda - self.clusters[self.k - 2].value)
    }

    /// Distance from the resonant eigenvalue up to the next cluster above.
    pub fn gap_plus(&self) -> Option<f64> {
        (self.k < self.clusters.len()).then(|| self.clusters[self.k].value - self.lambda)
    }

    /// Decay constant: the smallest applicable spectral gap.
    pub fn decay_constant(&self) -> Option<f64> {
        match (self.gap_minus(), self.gap_plus()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        }
    }

    /// Build a grid function from nodal values.
    pub fn from_values(&self, values: DVector<f64>) -> Result<GridFunction> {
        if values.len() != self.node_count() {
            return Err(Error::DimensionMismatch {
                expected: self.node_count(),
                got: values.len(),
            });
        }
        let spectral = self.basis.tr_mul(&values) * self.weight;
        Ok(GridFunction { values, spectral })
    }

    /// Build a grid function from spectral coefficients.
    pub fn from_spectral(&self, spectral: DVector<f64>) -> Result<GridFunction> {
        if spectral.len() != self.mode_count() {
            return Err(Error::DimensionMismatch {
                expected: self.mode_count(),
                got: spectral.len(),
            });
        }
        let values = &self.basis * &spectral;
        Ok(GridFunction { values, spectral })
    }

    /// Spectral coefficients of raw nodal values.
    pub fn to_spectral(&self, values: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(values) * self.weight
    }

    /// Nodal values of raw spectral coefficients.
    pub fn to_values(&self, spectral: &DVector<f64>) -> DVector<f64> {
        &self.basis * spectral
    }

    /// Trapezoidal H inner product of nodal value vectors.
    pub fn h_inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.weight * u.dot(v)
    }

    pub fn h_norm(&self, u: &GridFunction) -> f64 {
        u.spectral.norm()
    }

    pub fn h_norm_spectral(&self, spectral: &DVector<f64>) -> f64 {
        spectral.norm()
    }

    /// Fractional-power norm |u|_alpha = |A_delta^alpha u|_H via the diagonal
    /// action (lambda_j + delta)^alpha on spectral coefficients.
    pub fn alpha_norm(&self, u: &GridFunction) -> f64 {
        self.alpha_norm_spectral(&u.spectral)
    }

    pub fn alpha_norm_spectral(&self, spectral: &DVector<f64>) -> f64 {
        spectral
            .iter()
            .zip(&self.frac_weights)
            .map(|(c, w)| (c * w) * (c * w))
            .sum::<f64>()
            .sqrt()
    }

    /// Apply a spectral projection.
    pub fn project(&self, u: &GridFunction, part: Part) -> GridFunction {
        let spectral = self.project_spectral(&u.spectral, part);
        let values = &self.basis * &spectral;
        GridFunction { values, spectral }
    }

    pub fn project_spectral(&self, spectral: &DVector<f64>, part: Part) -> DVector<f64> {
        DVector::from_fn(spectral.len(), |j, _| {
            if self.part_contains(part, j) {
                spectral[j]
            } else {
                0.0
            }
        })
    }

    /// Norm of the selected component, straight from spectral coefficients.
    pub fn part_h_norm(&self, spectral: &DVector<f64>, part: Part) -> f64 {
        spectral
            .iter()
            .enumerate()
            .filter(|(j, _)| self.part_contains(part, *j))
            .map(|(_, c)| c * c)
            .sum::<f64>()
            .sqrt()
    }

    pub fn part_alpha_norm(&self, spectral: &DVector<f64>, part: Part) -> f64 {
        spectral
            .iter()
            .enumerate()
            .filter(|(j, _)| self.part_contains(part, *j))
            .map(|(j, c)| {
                let w = self.frac_weights[j] * c;
                w * w
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Kernel coordinates of a grid function (coefficients on kernel modes).
    pub fn kernel_coords(&self, u: &GridFunction) -> Vec<f64> {
        self.kernel_range().map(|j| u.spectral[j]).collect()
    }

    /// Grid function spanned by kernel coordinates.
    pub fn from_kernel_coords(&self, z: &[f64]) -> Result<GridFunction> {
        let kr = self.kernel_range();
        if z.len() != kr.len() {
            return Err(Error::DimensionMismatch {
                expected: kr.len(),
                got: z.len(),
            });
        }
        let mut spectral = DVector::zeros(self.mode_count());
        for (i, j) in kr.enumerate() {
            spectral[j] = z[i];
        }
        self.from_spectral(spectral)
    }

    /// Worst eigenpair residual |A v_j - lambda_j v_j|_H over all modes,
    /// relative to |lambda_j| (or absolute where lambda_j vanishes).
    pub fn eigen_residual(&self, matrix: &DMatrix<f64>) -> f64 {
        let av = matrix * &self.basis;
        let mut worst = 0.0f64;
        for j in 0..self.mode_count() {
            let col = av.column(j) - self.basis.column(j) * self.eigenvalues[j];
            let res = (self.weight * col.norm_squared()).sqrt();
            let scale = self.eigenvalues[j].abs().max(1.0);
            worst = worst.max(res / scale);
        }
        worst
    }

    /// Worst deviation of the H Gram matrix of the basis from the identity.
    pub fn gram_defect(&self) -> f64 {
        let gram = self.basis.tr_mul(&self.basis) * self.weight;
        let n = self.mode_count();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Interior sign changes of each kernel eigenfunction (1D only), guarding
    /// against non-isolated zeros: two adjacent nodes both within
    /// [`ISOLATED_ZERO_TOL`] of zero fail the audit.
    pub fn kernel_sign_changes(&self) -> Result<Vec<usize>> {
        if self.domain.dim() != 1 {
            return Err(Error::Config(
                "sign-change audit applies to 1D kernels only".into(),
            ));
        }
        let mut counts = Vec::new();
        for j in self.kernel_range() {
            let v = self.basis.column(j);
            for i in 0..v.len() - 1 {
                if v[i].abs() < ISOLATED_ZERO_TOL && v[i + 1].abs() < ISOLATED_ZERO_TOL {
                    return Err(Error::Config(format!(
                        "kernel mode {j} has a non-isolated zero near node {i}"
                    )));
                }
            }
            let mut changes = 0usize;
            let mut last = v[0];
            for i in 1..v.len() {
                if v[i].abs() < ISOLATED_ZERO_TOL {
                    continue;
                }
                if last != 0.0 && v[i].signum() != last.signum() {
                    changes += 1;
                }
                last = v[i];
            }
            counts.push(changes);
        }
        Ok(counts)
    }

    /// Worst projection-algebra defect over random probes: completeness
    /// (P + Q_- + Q_+ = I), idempotence, and mutual annihilation, measured in
    /// the H norm relative to |u|_H.
    pub fn projection_audit(&self, n_samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.mode_count();
        let mut worst = 0.0f64;
        for _ in 0..n_samples {
            let u = DVector::from_fn(n, |_, _| rng.gen_range(-1.0f64..1.0));
            let norm = u.norm().max(1e-300);
            let p = self.project_spectral(&u, Part::Kernel);
            let qm = self.project_spectral(&u, Part::Minus);
            let qp = self.project_spectral(&u, Part::Plus);
            let sum = &p + &qm + &qp;
            worst = worst.max((&sum - &u).norm() / norm);
            worst = worst.max((self.project_spectral(&p, Part::Kernel) - &p).norm() / norm);
            worst = worst.max(self.project_spectral(&p, Part::Minus).norm() / norm);
            worst = worst.max(self.project_spectral(&qm, Part::Plus).norm() / norm);
            worst = worst.max(self.project_spectral(&qp, Part::Kernel).norm() / norm);
        }
        worst
    }

    /// Write one row per mode: index, eigenvalue, cluster, classification.
    pub fn write_modes_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("index,eigenvalue,cluster,class\n");
        for j in 0..self.mode_count() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                j,
                self.eigenvalues[j],
                self.cluster_of_mode[j],
                self.mode_class(j).label()
            );
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Outcome of checking one decay bound.
#[derive(Debug, Clone)]
pub struct BoundCheck {
    /// True when the subspace involved is empty and nothing was checked.
    pub skipped: bool,
    pub passed: bool,
    /// Largest sampled ratio of left- to right-hand side with K = 1.
    pub sampled_constant: f64,
    /// The constant the sampled ratios are required to stay below.
    pub required_constant: f64,
}

impl BoundCheck {
    fn skipped() -> Self {
        BoundCheck {
            skipped: true,
            passed: true,
            sampled_constant: 0.0,
            required_constant: 1.0,
        }
    }
}

/// Report of [`verify_decay`].
#[derive(Debug, Clone)]
pub struct DecayReport {
    /// Smoothing bound |A_delta^alpha S(t)x| <= K e^{-(lambda+c)t} t^{-alpha} |x| on X_plus.
    /// Checked against the diagonal sharp constant (no finite K works at the
    /// full gap uniformly in t); `sampled_constant` reports the K = 1 ratio.
    pub smoothing: BoundCheck,
    /// Forward bound |e^{lambda t} S(t)x| <= e^{-ct} |x| on X_plus, K = 1 sharp.
    pub forward: BoundCheck,
    /// Backward bound |e^{lambda t} S(t)x| <= e^{ct} |x| on X_minus for t <= 0,
    /// K = 1 sharp.
    pub backward: BoundCheck,
    pub samples: usize,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.smoothing.passed && self.forward.passed && self.backward.passed
    }
}

/// Check the three semigroup decay bounds on random vectors of the relevant
/// subspaces at the given times (all strictly positive; the backward bound is
/// evaluated at the negated times).
pub fn verify_decay(
    dec: &SpectralDecomposition,
    t_samples: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<DecayReport> {
    if t_samples.iter().any(|&t| t <= 0.0) {
        return Err(Error::Config("decay check times must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = dec.lambda();
    let delta = dec.delta();
    let alpha = dec.alpha();
    let kr = dec.kernel_range();
    let plus: Vec<usize> = (kr.end..dec.mode_count()).collect();
    let minus: Vec<usize> = (0..kr.start).collect();
    let slack = 1.0 + 1e-10;

    let mut smoothing = BoundCheck::skipped();
    let mut forward = BoundCheck::skipped();
    if let Some(c) = dec.gap_plus() {
        if !plus.is_empty() {
            let mut worst_s = 0.0f64;
            let mut worst_f = 0.0f64;
            let mut sharp_s = 0.0f64;
            for &t in t_samples {
                // Exact worst case over X_plus in the diagonal setting.
                let sharp_t = plus
                    .iter()
                    .map(|&j| {
                        (dec.eigenvalues[j] + delta).powf(alpha)
                            * (-dec.eigenvalues[j] * t).exp()
                            * t.powf(alpha)
                            * ((lambda + c) * t).exp()
                    })
                    .fold(0.0f64, f64::max);
                sharp_s = sharp_s.max(sharp_t);
                for _ in 0..n_samples {
                    let x = random_on_modes(&mut rng, dec.mode_count(), &plus);
                    let norm = x.norm();
                    let mut num_s = 0.0;
                    let mut num_f = 0.0;
                    for &j in &plus {
                        let decayed = x[j] * (-dec.eigenvalues[j] * t).exp();
                        let fw = (dec.eigenvalues[j] + delta).powf(alpha) * decayed;
                        num_s += fw * fw;
                        let sh = (lambda * t).exp() * decayed;
                        num_f += sh * sh;
                    }
                    let rhs_s = (-(lambda + c) * t).exp() * t.powf(-alpha) * norm;
                    let rhs_f = (-c * t).exp() * norm;
                    worst_s = worst_s.max(num_s.sqrt() / rhs_s);
                    worst_f = worst_f.max(num_f.sqrt() / rhs_f);
                }
            }
            smoothing = BoundCheck {
                skipped: false,
                passed: worst_s <= sharp_s * slack,
                sampled_constant: worst_s,
                required_constant: sharp_s,
            };
            forward = BoundCheck {
                skipped: false,
                passed: worst_f <= slack,
                sampled_constant: worst_f,
                required_constant: 1.0,
            };
        }
    }

    let mut backward = BoundCheck::skipped();
    if let Some(c) = dec.gap_minus() {
        if !minus.is_empty() {
            let mut worst_b = 0.0f64;
            for &t in t_samples {
                let s = -t;
                for _ in 0..n_samples {
                    let x = random_on_modes(&mut rng, dec.mode_count(), &minus);
                    let norm = x.norm();
                    let mut num = 0.0;
                    for &j in &minus {
                        let v = x[j] * ((lambda - dec.eigenvalues[j]) * s).exp();
                        num += v * v;
                    }
                    let rhs = (c * s).exp() * norm;
                    worst_b = worst_b.max(num.sqrt() / rhs);
                }
            }
            backward = BoundCheck {
                skipped: false,
                passed: worst_b <= slack,
                sampled_constant: worst_b,
                required_constant: 1.0,
            };
        }
    }

    Ok(DecayReport {
        smoothing,
        forward,
        backward,
        samples: n_samples,
    })
}

fn random_on_modes(rng: &mut ChaCha8Rng, total: usize, modes: &[usize]) -> DVector<f64> {
    let mut x = DVector::zeros(total);
    for &j in modes {
        x[j] = rng.gen_range(-1.0..1.0);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{Coefficient, EllipticProblem};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    pub(crate) fn laplacian_1d(n: usize) -> (Domain, DMatrix<f64>) {
        let dom = Domain::Interval { length: PI, n };
        let m = EllipticProblem::new(dom.clone(), Coefficient::Constant(1.0))
            .assemble()
            .unwrap();
        (dom, m)
    }

    fn dec_1d(n: usize, k: usize) -> SpectralDecomposition {
        let (dom, m) = laplacian_1d(n);
        decompose_by_index(&dom, &m, k, 0.8).unwrap()
    }

    #[test]
    fn eigenvalues_match_closed_form_after_refinement() {
        let n = 63;
        let dec = dec_1d(n, 1);
        let h = PI / (n as f64 + 1.0);
        for (j, &ev) in dec.eigenvalues().iter().enumerate() {
            let exact = 4.0 / (h * h) * ((j as f64 + 1.0) * h / 2.0).sin().powi(2);
            assert_relative_eq!(ev, exact, max_relative = 1e-11);
        }
    }

    #[test]
    fn first_eigenvalue_resonance_has_empty_minus_space() {
        let dec = dec_1d(63, 1);
        assert_eq!(dec.dim_minus(), 0);
        assert_eq!(dec.dim_kernel(), 1);
        assert_eq!(dec.dim_plus(), 62);
        assert_eq!(dec.modes_below_kernel(), 0);
        assert_eq!(dec.modes_through_kernel(), 1);
        assert!(dec.gap_minus().is_none());
    }

    #[test]
    fn third_eigenvalue_resonance_counts_lower_modes() {
        let dec = dec_1d(63, 3);
        assert_eq!(dec.dim_minus(), 2);
        assert_eq!(dec.dim_kernel(), 1);
        assert_eq!(dec.modes_below_kernel(), 2);
        assert_eq!(dec.modes_through_kernel(), 3);
        let gm = dec.gap_minus().unwrap();
        let gp = dec.gap_plus().unwrap();
        assert!(gm > 0.0 && gp > 0.0);
        assert_relative_eq!(dec.decay_constant().unwrap(), gm.min(gp));
    }

    #[test]
    fn snap_accepts_discrete_eigenvalue_and_rejects_midpoint() {
        let (dom, m) = laplacian_1d(63);
        let lam2 = dec_1d(63, 2).lambda();
        let dec = decompose(&dom, &m, lam2, 0.8).unwrap();
        assert_eq!(dec.k(), 2);
        match decompose(&dom, &m, 2.5, 0.8) {
            Err(Error::ResonanceMismatch { .. }) => {}
            other => panic!("expected resonance mismatch, got {other:?}"),
        }
    }

    #[test]
    fn loose_snap_accepts_continuum_eigenvalue() {
        let (dom, m) = laplacian_1d(63);
        let dec = decompose_with(
            &dom,
            &m,
            ResonanceTarget::LambdaWithin {
                value: 4.0,
                rel_tol: 0.05,
            },
            0.8,
        )
        .unwrap();
        assert_eq!(dec.k(), 2);
    }

    #[test]
    fn alpha_outside_open_interval_is_rejected() {
        let (dom, m) = laplacian_1d(16);
        assert!(decompose_by_index(&dom, &m, 1, 0.75).is_err());
        assert!(decompose_by_index(&dom, &m, 1, 1.0).is_err());
        assert!(decompose_by_index(&dom, &m, 1, 0.8).is_ok());
    }

    #[test]
    fn shift_activates_only_for_nonpositive_spectrum() {
        let (dom, m) = laplacian_1d(16);
        let dec = decompose_by_index(&dom, &m, 1, 0.8).unwrap();
        assert_eq!(dec.delta(), 0.0);

        let lam1 = dec.eigenvalues()[0];
        let shifted = &m - DMatrix::identity(16, 16) * (lam1 + 1.0);
        let dec2 = decompose_by_index(&dom, &shifted, 2, 0.8).unwrap();
        assert!(dec2.eigenvalues()[0] < 0.0);
        assert_relative_eq!(dec2.delta(), dec2.eigenvalues()[0].abs() + 1.0);
        // fractional weights stay real and positive under the shift
        assert!(dec2.frac_weights.iter().all(|w| w.is_finite() && *w > 0.0));
    }

    #[test]
    fn rectangle_mode_five_is_a_double_cluster() {
        let n = 12;
        let dom = Domain::Rectangle {
            lengths: (PI, PI),
            n,
        };
        let m = EllipticProblem::new(dom.clone(), Coefficient::Constant(1.0))
            .assemble()
            .unwrap();
        // discrete analogue of the continuum eigenvalue 5 = 1^2 + 2^2
        let h = PI / (n as f64 + 1.0);
        let line = |j: f64| 4.0 / (h * h) * (j * h / 2.0).sin().powi(2);
        let target = line(1.0) + line(2.0);
        let dec = decompose(&dom, &m, target, 0.8).unwrap();
        // clusters: (1,1) single, then the (1,2)/(2,1) pair
        assert_eq!(dec.dim_kernel(), 2);
        assert_eq!(dec.k(), 2);
        assert_eq!(dec.dim_minus(), 1);
    }

    #[test]
    fn gram_matrix_is_identity_in_h_product() {
        let dec = dec_1d(48, 2);
        assert!(dec.gram_defect() < 1e-10, "gram defect {}", dec.gram_defect());
    }

    #[test]
    fn eigen_residuals_are_small() {
        let (dom, m) = laplacian_1d(63);
        let dec = decompose_by_index(&dom, &m, 1, 0.8).unwrap();
        assert!(dec.eigen_residual(&m) < 1e-9);
    }

    #[test]
    fn projection_algebra_holds_on_random_probes() {
        let dec = dec_1d(48, 3);
        assert!(dec.projection_audit(50, 7) < 1e-10);
    }

    #[test]
    fn fractional_norm_of_kernel_eigenvector_is_lambda_to_alpha() {
        let dec = dec_1d(48, 1);
        let e1 = dec.from_kernel_coords(&[1.0]).unwrap();
        let expect = (dec.lambda() + dec.delta()).powf(dec.alpha());
        assert_relative_eq!(dec.alpha_norm(&e1), expect, max_relative = 1e-12);
    }

    #[test]
    fn h_norm_is_dominated_by_alpha_norm() {
        let dec = dec_1d(48, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bound = (dec.eigenvalues()[0] + dec.delta()).powf(-dec.alpha());
        for _ in 0..20 {
            let u = dec
                .from_spectral(DVector::from_fn(48, |_, _| rand::Rng::gen_range(&mut rng, -1.0..1.0)))
                .unwrap();
            assert!(dec.h_norm(&u) <= bound * dec.alpha_norm(&u) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn kernel_sign_changes_count_k_minus_one() {
        for k in 1..=3 {
            let dec = dec_1d(63, k);
            let changes = dec.kernel_sign_changes().unwrap();
            assert_eq!(changes, vec![k - 1]);
        }
    }

    #[test]
    fn shifted_eigenvector_decays_at_exact_rate() {
        // e^{lambda t} S(t) e_2 = e^{(lambda_1 - lambda_2) t} e_2 for k = 1
        let dec = dec_1d(48, 1);
        let (l1, l2) = (dec.eigenvalues()[0], dec.eigenvalues()[1]);
        for &t in &[0.1, 1.0, 5.0] {
            let factor = ((dec.lambda() - l2) * t).exp();
            assert_relative_eq!(factor, ((l1 - l2) * t).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn decay_report_passes_and_skips_empty_minus_space() {
        let dec = dec_1d(63, 1);
        let report = verify_decay(&dec, &[0.1, 1.0, 5.0], 25, 11).unwrap();
        assert!(report.passed());
        assert!(report.backward.skipped);
        assert!(!report.smoothing.skipped && !report.forward.skipped);
        assert!(report.forward.sampled_constant <= 1.0 + 1e-10);
    }

    #[test]
    fn decay_report_checks_backward_bound_for_higher_resonance() {
        let dec = dec_1d(63, 3);
        let report = verify_decay(&dec, &[0.1, 1.0, 5.0], 25, 11).unwrap();
        assert!(report.passed());
        assert!(!report.backward.skipped);
        assert!(report.backward.sampled_constant <= 1.0 + 1e-10);
    }

    #[test]
    fn smoothing_bound_exceeds_unit_constant_at_late_times() {
        // The diagonal worst case (lambda_{k+1} t)^alpha grows without bound,
        // so K = 1 cannot hold uniformly; the sharp constant must.
        let dec = dec_1d(63, 1);
        let report = verify_decay(&dec, &[5.0], 40, 5).unwrap();
        assert!(report.smoothing.required_constant > 1.0);
        assert!(report.smoothing.passed);
    }

    #[test]
    fn modes_csv_lists_every_mode() {
        let dec = dec_1d(16, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("modes.csv");
        dec.write_modes_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,eigenvalue,cluster,class");
        assert_eq!(lines.len(), 17);
        assert!(lines[1].ends_with(",minus"));
        assert!(lines[2].ends_with(",kernel"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn values_spectral_roundtrip(coeffs in proptest::collection::vec(-10.0f64..10.0, 24)) {
            let dec = dec_1d(24, 1);
            let u = dec.from_spectral(DVector::from_vec(coeffs)).unwrap();
            let back = dec.from_values(u.values().clone()).unwrap();
            let diff = (back.spectral() - u.spectral()).norm();
            prop_assert!(diff <= 1e-10 * u.spectral().norm().max(1.0));
        }

        #[test]
        fn projections_are_complete_and_orthogonal(coeffs in proptest::collection::vec(-5.0f64..5.0, 24)) {
            let dec = dec_1d(24, 2);
            let u = dec.from_spectral(DVector::from_vec(coeffs)).unwrap();
            let p = dec.project(&u, Part::Kernel);
            let qm = dec.project(&u, Part::Minus);
            let qp = dec.project(&u, Part::Plus);
            let sum = p.spectral() + qm.spectral() + qp.spectral();
            prop_assert!((sum - u.spectral()).norm() <= 1e-10 * u.spectral().norm().max(1.0));
            let h2 = dec.h_norm(&p).powi(2) + dec.h_norm(&qm).powi(2) + dec.h_norm(&qp).powi(2);
            prop_assert!((h2 - dec.h_norm(&u).powi(2)).abs() <= 1e-8 * dec.h_norm(&u).powi(2).max(1.0));
        }
    }
}
