//! Resonance conditions that decide existence of periodic solutions: sampled
//! geometric sign conditions on the kernel, Landesman-Lazer integrals built
//! from the declared limits at infinity, and the strong-resonance inequality
//! for nonlinearities vanishing at infinity.  Every check returns a verdict
//! with margins and, on failure, a concrete witness sample.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nonlinearity::{Asymptotics, Nonlinearity};
use crate::par;
use crate::spectral::SpectralDecomposition;

/// Margins within this distance of zero are treated as sign-ambiguous.
pub const MARGIN_FLOOR: f64 = 1e-10;
/// Pointwise strong-resonance slack: s g(s) >= q may undershoot by this much.
const SR_TOLERANCE: f64 = 1e-10;
/// Log-spaced |s| range probed by the pointwise strong-resonance check.
const SR_S_RANGE: (f64, f64) = (1e-3, 1e3);
const SR_S_PER_SIGN: usize = 40;

/// Outcome of a sampled or quadrature check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// A concrete sample violating (or nearly violating) a condition.
#[derive(Debug, Clone)]
pub struct Witness {
    pub t: f64,
    pub kernel: Vec<f64>,
    pub margin: f64,
}

/// Sampling plan for the geometric check.
#[derive(Debug, Clone)]
pub struct GeometricOptions {
    /// Times probed across one period.
    pub t_samples: usize,
    /// Random bounded non-kernel perturbations per (t, direction, radius).
    pub y_samples: usize,
    /// H-norm bound on those perturbations.
    pub y_bound: f64,
    /// Kernel radii probed, in increasing order.
    pub radii: Vec<f64>,
    /// Directions on a planar kernel sphere (one-dimensional kernels use +/-1).
    pub sphere_samples: usize,
    pub seed: u64,
}

impl Default for GeometricOptions {
    fn default() -> Self {
        GeometricOptions {
            t_samples: 32,
            y_samples: 64,
            y_bound: 1.0,
            radii: vec![2.0, 4.0, 8.0, 16.0],
            sphere_samples: 128,
            seed: 7,
        }
    }
}

/// Verdicts for the two sign conditions on the kernel: the inner product
/// of the forcing with the kernel component keeps a definite sign for large
/// kernel amplitude - positive for the first condition, negative for the
/// second.
#[derive(Debug, Clone)]
pub struct GeometricReport {
    pub positive: Verdict,
    pub negative: Verdict,
    /// Smallest probed radius from which the holding condition's margins
    /// keep their sign (None when neither holds).
    pub stabilization_radius: Option<f64>,
    /// Most negative-margin sample at the largest radius (refutes the
    /// positive condition when its margin is definitely negative).
    pub witness_negative: Option<Witness>,
    /// Most positive-margin sample at the largest radius.
    pub witness_positive: Option<Witness>,
    /// Margin extremes at the largest radius, normalized by the kernel norm.
    pub min_margin: f64,
    pub max_margin: f64,
}

fn kernel_directions(dim: usize, sphere_samples: usize) -> Result<Vec<Vec<f64>>> {
    match dim {
        1 => Ok(vec![vec![1.0], vec![-1.0]]),
        2 => Ok((0..sphere_samples)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / sphere_samples as f64;
                vec![theta.cos(), theta.sin()]
            })
            .collect()),
        dim => Err(Error::KernelDimension { dim }),
    }
}

/// Sample the sign of <F(t, x + y), x> / |x|_H over kernel spheres of
/// growing radius, times across the period, and bounded non-kernel
/// perturbations y.
pub fn check_geometric(
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    period: f64,
    opts: &GeometricOptions,
) -> Result<GeometricReport> {
    let directions = kernel_directions(dec.dim_kernel(), opts.sphere_samples)?;
    let mut radii = opts.radii.clone();
    radii.sort_by(|a, b| a.partial_cmp(b).expect("radii must be finite"));
    if radii.is_empty() || radii[0] <= 0.0 {
        return Err(Error::Config("geometric radii must be positive".into()));
    }

    // perturbation set: none, axis extremes on the first non-kernel modes,
    // then random bounded combinations
    let n = dec.mode_count();
    let kr = dec.kernel_range();
    let non_kernel: Vec<usize> = (0..n).filter(|j| !kr.contains(j)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut ys: Vec<DVector<f64>> = vec![DVector::zeros(dec.node_count())];
    for &j in non_kernel.iter().take(4) {
        for sign in [1.0, -1.0] {
            let mut c = DVector::zeros(n);
            c[j] = sign * opts.y_bound;
            ys.push(dec.to_values(&c));
        }
    }
    for _ in 0..opts.y_samples {
        let mut c = DVector::zeros(n);
        for &j in &non_kernel {
            c[j] = rng.gen_range(-1.0..1.0);
        }
        let norm = c.norm();
        if norm > 0.0 {
            let scale = opts.y_bound * rng.gen_range(0.01..1.0f64) / norm;
            c *= scale;
        }
        ys.push(dec.to_values(&c));
    }

    let xs: Vec<(usize, DVector<f64>, Vec<f64>)> = directions
        .iter()
        .flat_map(|dir| {
            radii.iter().enumerate().map(move |(ri, r)| {
                let coords: Vec<f64> = dir.iter().map(|c| c * r).collect();
                (ri, coords)
            })
        })
        .map(|(ri, coords)| {
            let x = dec
                .from_kernel_coords(&coords)
                .expect("kernel coords match kernel dim");
            (ri, x.values().clone(), coords)
        })
        .collect();

    // worst (min, max) margin with witnesses, one slot per radius
    struct RadiusStats {
        min: (f64, f64, Vec<f64>),
        max: (f64, f64, Vec<f64>),
    }
    let per_x: Vec<Result<(usize, RadiusStats)>> = par::map_indexed(xs.len(), |xi| {
        let (ri, x_values, coords) = &xs[xi];
        let x_norm = radii[*ri];
        let mut min = (f64::INFINITY, 0.0, coords.clone());
        let mut max = (f64::NEG_INFINITY, 0.0, coords.clone());
        for ti in 0..opts.t_samples {
            let t = period * ti as f64 / opts.t_samples as f64;
            for y in &ys {
                let u = x_values + y;
                let f = nl.apply(dec.domain(), t, &u)?;
                let margin = dec.h_inner(&f, x_values) / x_norm;
                if margin < min.0 {
                    min = (margin, t, coords.clone());
                }
                if margin > max.0 {
                    max = (margin, t, coords.clone());
                }
            }
        }
        Ok((*ri, RadiusStats { min, max }))
    });

    let mut mins: Vec<(f64, f64, Vec<f64>)> =
        vec![(f64::INFINITY, 0.0, vec![]); radii.len()];
    let mut maxs: Vec<(f64, f64, Vec<f64>)> =
        vec![(f64::NEG_INFINITY, 0.0, vec![]); radii.len()];
    for item in per_x {
        let (ri, stats) = item?;
        if stats.min.0 < mins[ri].0 {
            mins[ri] = stats.min;
        }
        if stats.max.0 > maxs[ri].0 {
            maxs[ri] = stats.max;
        }
    }

    let last = radii.len() - 1;
    let (min_margin, max_margin) = (mins[last].0, maxs[last].0);
    let stab_from = |ok: &dyn Fn(usize) -> bool| -> Option<f64> {
        (0..radii.len())
            .find(|&i| (i..radii.len()).all(ok))
            .map(|i| radii[i])
    };
    let positive_from = stab_from(&|i| mins[i].0 >= MARGIN_FLOOR);
    let negative_from = stab_from(&|i| maxs[i].0 <= -MARGIN_FLOOR);

    let classify = |holds_from: Option<f64>, refuted: bool| -> Verdict {
        if holds_from.is_some() {
            Verdict::Holds
        } else if refuted {
            Verdict::Fails
        } else {
            Verdict::Inconclusive
        }
    };
    let positive = classify(positive_from, min_margin <= -MARGIN_FLOOR);
    let negative = classify(negative_from, max_margin >= MARGIN_FLOOR);
    let to_witness = |(margin, t, kernel): &(f64, f64, Vec<f64>)| Witness {
        t: *t,
        kernel: kernel.clone(),
        margin: *margin,
    };
    Ok(GeometricReport {
        positive,
        negative,
        stabilization_radius: positive_from.or(negative_from),
        witness_negative: (positive == Verdict::Fails).then(|| to_witness(&mins[last])),
        witness_positive: (negative == Verdict::Fails).then(|| to_witness(&maxs[last])),
        min_margin,
        max_margin,
    })
}

/// Landesman-Lazer functional m(v) = int_{v>0} g_plus v + int_{v<0} g_minus v
/// over the kernel sphere.  The first condition asks m > 0 for every kernel
/// direction, the second asks m < 0; the margins come from deterministic
/// nodal quadrature, so an exactly vanishing functional refutes both.
#[derive(Debug, Clone)]
pub struct LandesmanLazerReport {
    pub ll_positive: Verdict,
    pub ll_negative: Verdict,
    /// Smallest functional value over the sphere and its direction.
    pub min_margin: f64,
    pub min_direction: Vec<f64>,
    /// Largest functional value over the sphere and its direction.
    pub max_margin: f64,
    pub max_direction: Vec<f64>,
}

pub fn check_landesman_lazer(
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    sphere_samples: usize,
) -> Result<LandesmanLazerReport> {
    let (g_plus, g_minus) = match nl.asymptotics {
        Asymptotics::Limits { g_plus, g_minus } => (g_plus, g_minus),
        // vanishing at infinity: both limits are zero and the functional
        // degenerates honestly
        Asymptotics::StrongResonance { .. } => (0.0, 0.0),
        Asymptotics::None => {
            return Err(Error::MissingAsymptotics {
                family: nl.family.clone(),
            })
        }
    };
    let directions = kernel_directions(dec.dim_kernel(), sphere_samples)?;
    let w = dec.node_weight();
    let mut min = (f64::INFINITY, vec![]);
    let mut max = (f64::NEG_INFINITY, vec![]);
    for dir in &directions {
        let v = dec.from_kernel_coords(dir)?;
        let mut m = 0.0;
        for &vi in v.values().iter() {
            if vi > 0.0 {
                m += w * g_plus * vi;
            } else if vi < 0.0 {
                m += w * g_minus * vi;
            }
        }
        if m < min.0 {
            min = (m, dir.clone());
        }
        if m > max.0 {
            max = (m, dir.clone());
        }
    }
    let ll_positive = if min.0 > 0.0 {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    let ll_negative = if max.0 < 0.0 {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    Ok(LandesmanLazerReport {
        ll_positive,
        ll_negative,
        min_margin: min.0,
        min_direction: min.1,
        max_margin: max.0,
        max_direction: max.1,
    })
}

/// Strong-resonance check: s g(t, x, s) >= q pointwise (probed over a log
/// grid of s and all nodes), together with a positive integral of the
/// limit function g_inf = lim s g(s).
#[derive(Debug, Clone)]
pub struct StrongResonanceReport {
    pub sr: Verdict,
    /// Worst value of s g - q over the probe grid.
    pub min_pointwise_margin: f64,
    /// (t, s, node) achieving the worst margin.
    pub witness: (f64, f64, usize),
    /// g_inf integrated over the domain.
    pub g_inf_integral: f64,
}

pub fn check_strong_resonance(
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    period: f64,
    t_samples: usize,
) -> Result<StrongResonanceReport> {
    let (g_inf, q) = nl.strong_resonance_data()?;
    let mut s_grid = vec![0.0];
    let ratio = (SR_S_RANGE.1 / SR_S_RANGE.0).powf(1.0 / (SR_S_PER_SIGN - 1) as f64);
    for i in 0..SR_S_PER_SIGN {
        let s = SR_S_RANGE.0 * ratio.powi(i as i32);
        s_grid.push(s);
        s_grid.push(-s);
    }
    let mut min = (f64::INFINITY, (0.0, 0.0, 0usize));
    for ti in 0..t_samples.max(1) {
        let t = period * ti as f64 / t_samples.max(1) as f64;
        for &s in &s_grid {
            for node in 0..dec.node_count() {
                let coords = dec.domain().coords(node);
                let margin = s * nl.eval(t, node, coords, s, &[0.0, 0.0]) - q;
                if margin < min.0 {
                    min = (margin, (t, s, node));
                }
            }
        }
    }
    let g_inf_integral = g_inf * dec.domain().measure();
    let sr = if min.0 >= -SR_TOLERANCE && g_inf_integral > MARGIN_FLOOR {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    Ok(StrongResonanceReport {
        sr,
        min_pointwise_margin: min.0,
        witness: min.1,
        g_inf_integral,
    })
}
