//! Bounded nonlinear perturbations F(t, u) acting by pointwise substitution:
//! F(t, u)(x) = g(t, x, u(x), grad u(x)).  Each family carries the analytic
//! metadata the solvability criteria need (uniform bound, Lipschitz constant,
//! declared asymptotics); asymptotics are never inferred numerically.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elliptic::{gradient, Domain};
use crate::error::{Error, Result};
use crate::spectral::SpectralDecomposition;

/// Declared behaviour of g for large arguments, used by the Landesman-Lazer
/// and strong-resonance checks.
#[derive(Debug, Clone)]
pub enum Asymptotics {
    /// No usable limit information (geometric conditions may still apply).
    None,
    /// Pointwise limits g(t, x, s, y) -> g_plus / g_minus as s -> +/-inf,
    /// uniform in t and y.
    Limits { g_plus: f64, g_minus: f64 },
    /// Strong resonance data: g vanishes at infinity, s * g(s) >= q with
    /// integrable minorant q, and s * g(s) -> g_inf as |s| -> inf.
    StrongResonance { g_inf: f64, q: f64 },
}

#[derive(Clone)]
enum Pointwise {
    /// amplitude * arctan(s)
    Arctan { amplitude: f64 },
    /// -amplitude * arctan(s)
    NegArctan { amplitude: f64 },
    /// amplitude * (arctan(s) + 1/2); asymmetric, so the averaged root moves off zero
    ShiftedArctan { amplitude: f64 },
    /// amplitude * s / (1 + s^2)
    StrongRes { amplitude: f64 },
    /// Constant kernel-direction forcing; values sampled per node.
    KernelConstant { values: DVector<f64> },
    /// (1 + 0.5 cos(2 pi t / period)) * amplitude * arctan(s)
    PeriodicForcedArctan { amplitude: f64, period: f64 },
    /// Arbitrary g(t, coords, s, grad); bound and Lipschitz declared by caller.
    Custom(Arc<dyn Fn(f64, (f64, f64), f64, &[f64]) -> f64 + Send + Sync>),
}

/// A substitution nonlinearity together with its declared constants.
#[derive(Clone)]
pub struct Nonlinearity {
    g: Pointwise,
    /// Human-readable family name (appears in reports and errors).
    pub family: String,
    /// Uniform bound m with |F(t,u)(x)| <= m.
    pub bound_m: f64,
    /// Lipschitz constant of g in (s, y), jointly.
    pub lipschitz: f64,
    /// Declared asymptotics.
    pub asymptotics: Asymptotics,
    /// Whether g reads the gradient argument.
    pub uses_gradient: bool,
    /// Minimal period in t (None for autonomous families).
    pub time_period: Option<f64>,
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("family", &self.family)
            .field("bound_m", &self.bound_m)
            .field("lipschitz", &self.lipschitz)
            .field("uses_gradient", &self.uses_gradient)
            .finish()
    }
}

impl Nonlinearity {
    pub fn arctan(amplitude: f64) -> Self {
        Nonlinearity {
            g: Pointwise::Arctan { amplitude },
            family: "arctan".into(),
            bound_m: amplitude * std::f64::consts::FRAC_PI_2,
            lipschitz: amplitude,
            asymptotics: Asymptotics::Limits {
                g_plus: amplitude * std::f64::consts::FRAC_PI_2,
                g_minus: -amplitude * std::f64::consts::FRAC_PI_2,
            },
            uses_gradient: false,
            time_period: None,
        }
    }

    pub fn neg_arctan(amplitude: f64) -> Self {
        Nonlinearity {
            g: Pointwise::NegArctan { amplitude },
            family: "neg_arctan".into(),
            bound_m: amplitude * std::f64::consts::FRAC_PI_2,
            lipschitz: amplitude,
            asymptotics: Asymptotics::Limits {
                g_plus: -amplitude * std::f64::consts::FRAC_PI_2,
                g_minus: amplitude * std::f64::consts::FRAC_PI_2,
            },
            uses_gradient: false,
            time_period: None,
        }
    }

    /// Saturating forcing with a constant offset: both limits keep the
    /// positive sign condition, but the averaged root sits away from zero.
    pub fn shifted_arctan(amplitude: f64) -> Self {
        Nonlinearity {
            g: Pointwise::ShiftedArctan { amplitude },
            family: "shifted_arctan".into(),
            bound_m: amplitude * (std::f64::consts::FRAC_PI_2 + 0.5),
            lipschitz: amplitude,
            asymptotics: Asymptotics::Limits {
                g_plus: amplitude * (std::f64::consts::FRAC_PI_2 + 0.5),
                g_minus: amplitude * (0.5 - std::f64::consts::FRAC_PI_2),
            },
            uses_gradient: false,
            time_period: None,
        }
    }

    /// s -> amplitude * s / (1 + s^2): vanishes at infinity with
    /// s * g(s) -> amplitude, the model strong-resonance family.
    pub fn strong_res(amplitude: f64) -> Self {
        Nonlinearity {
            g: Pointwise::StrongRes { amplitude },
            family: "strong_res".into(),
            bound_m: amplitude * 0.5,
            lipschitz: amplitude,
            asymptotics: Asymptotics::StrongResonance {
                g_inf: amplitude,
                q: 0.0,
            },
            uses_gradient: false,
            time_period: None,
        }
    }

    /// Constant forcing by `amplitude` times the (first) kernel direction:
    /// the canonical obstruction to periodic solutions.
    pub fn kernel_constant(dec: &SpectralDecomposition, amplitude: f64) -> Result<Self> {
        let dim = dec.dim_kernel();
        let mut z = vec![0.0; dim];
        z[0] = amplitude;
        let y0 = dec.from_kernel_coords(&z)?;
        let bound = y0.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Nonlinearity {
            g: Pointwise::KernelConstant {
                values: y0.values().clone(),
            },
            family: "kernel_constant".into(),
            bound_m: bound,
            lipschitz: 0.0,
            asymptotics: Asymptotics::None,
            uses_gradient: false,
            time_period: None,
        })
    }

    pub fn periodic_forced_arctan(amplitude: f64, period: f64) -> Self {
        Nonlinearity {
            g: Pointwise::PeriodicForcedArctan { amplitude, period },
            family: "periodic_forced_arctan".into(),
            bound_m: 1.5 * amplitude * std::f64::consts::FRAC_PI_2,
            lipschitz: 1.5 * amplitude,
            asymptotics: Asymptotics::Limits {
                g_plus: amplitude * std::f64::consts::FRAC_PI_2,
                g_minus: -amplitude * std::f64::consts::FRAC_PI_2,
            },
            uses_gradient: false,
            time_period: Some(period),
        }
    }

    /// Wrap an arbitrary pointwise function with caller-declared constants.
    pub fn custom(
        family: impl Into<String>,
        g: impl Fn(f64, (f64, f64), f64, &[f64]) -> f64 + Send + Sync + 'static,
        bound_m: f64,
        lipschitz: f64,
        uses_gradient: bool,
    ) -> Self {
        Nonlinearity {
            g: Pointwise::Custom(Arc::new(g)),
            family: family.into(),
            bound_m,
            lipschitz,
            asymptotics: Asymptotics::None,
            uses_gradient,
            time_period: None,
        }
    }

    /// Build a named family from (amplitude, period) parameters.
    pub fn builtin(
        name: &str,
        amplitude: f64,
        period: f64,
        dec: &SpectralDecomposition,
    ) -> Result<Self> {
        match name {
            "arctan" => Ok(Self::arctan(amplitude)),
            "neg_arctan" => Ok(Self::neg_arctan(amplitude)),
            "shifted_arctan" => Ok(Self::shifted_arctan(amplitude)),
            "strong_res" => Ok(Self::strong_res(amplitude)),
            "kernel_constant" => Self::kernel_constant(dec, amplitude),
            "periodic_forced_arctan" => Ok(Self::periodic_forced_arctan(amplitude, period)),
            other => Err(Error::Config(format!(
                "unknown nonlinearity family {other:?}"
            ))),
        }
    }

    /// Evaluate g at one node.
    pub fn eval(&self, t: f64, node: usize, coords: (f64, f64), s: f64, grad: &[f64]) -> f64 {
        match &self.g {
            Pointwise::Arctan { amplitude } => amplitude * s.atan(),
            Pointwise::NegArctan { amplitude } => -amplitude * s.atan(),
            Pointwise::ShiftedArctan { amplitude } => amplitude * (s.atan() + 0.5),
            Pointwise::StrongRes { amplitude } => amplitude * s / (1.0 + s * s),
            Pointwise::KernelConstant { values } => values[node],
            Pointwise::PeriodicForcedArctan { amplitude, period } => {
                (1.0 + 0.5 * (2.0 * std::f64::consts::PI * t / period).cos()) * amplitude * s.atan()
            }
            Pointwise::Custom(f) => f(t, coords, s, grad),
        }
    }

    /// Nodal values of F(t, u) for a state given by nodal values.  The
    /// gradient is only computed for families that read it.
    pub fn apply(&self, domain: &Domain, t: f64, u_values: &DVector<f64>) -> Result<DVector<f64>> {
        let n = domain.node_count();
        if u_values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u_values.len(),
            });
        }
        let mut out = DVector::zeros(n);
        self.apply_into(domain, t, u_values.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }

    /// Allocation-light core of [`Nonlinearity::apply`] on raw node slices.
    pub fn apply_into(&self, domain: &Domain, t: f64, u: &[f64], out: &mut [f64]) -> Result<()> {
        let grads = if self.uses_gradient {
            Some(gradient(domain, u))
        } else {
            None
        };
        let mut stack = [0.0f64; 2];
        for i in 0..u.len() {
            let gslice: &[f64] = match &grads {
                Some(g) => {
                    for (c, comp) in g.iter().enumerate() {
                        stack[c] = comp[i];
                    }
                    &stack[..g.len()]
                }
                None => &[],
            };
            let v = self.eval(t, i, domain.coords(i), u[i], gslice);
            if !v.is_finite() {
                return Err(Error::NonFiniteNonlinearity { t, node: i });
            }
            out[i] = v;
        }
        Ok(())
    }

    /// The pointwise limits, or an error when this family does not declare them.
    pub fn limits(&self) -> Result<(f64, f64)> {
        match self.asymptotics {
            Asymptotics::Limits { g_plus, g_minus } => Ok((g_plus, g_minus)),
            _ => Err(Error::MissingAsymptotics {
                family: self.family.clone(),
            }),
        }
    }

    /// The strong-resonance data, or an error when not declared.
    pub fn strong_resonance_data(&self) -> Result<(f64, f64)> {
        match self.asymptotics {
            Asymptotics::StrongResonance { g_inf, q } => Ok((g_inf, q)),
            _ => Err(Error::MissingAsymptotics {
                family: self.family.clone(),
            }),
        }
    }
}

/// Probe-based audit of the declared constants: samples (t, s, grad) tuples
/// and verifies |g| <= bound_m, the (s, y)-Lipschitz estimate, and (for
/// periodic families) g(t + period) = g(t).  Returns the worst bound ratio
/// and the worst observed Lipschitz quotient relative to the declared one.
#[derive(Debug)]
pub struct ProbeReport {
    pub worst_bound_ratio: f64,
    pub worst_lipschitz_ratio: f64,
    pub periodicity_defect: f64,
    pub samples: usize,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.worst_bound_ratio <= 1.0 + 1e-12
            && self.worst_lipschitz_ratio <= 1.0 + 1e-9
            && self.periodicity_defect <= 1e-12
    }
}

pub fn probe_audit(
    nl: &Nonlinearity,
    domain: &Domain,
    n_samples: usize,
    seed: u64,
) -> ProbeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = domain.node_count();
    let mut worst_bound = 0.0f64;
    let mut worst_lip = 0.0f64;
    let mut worst_period = 0.0f64;
    for _ in 0..n_samples {
        let node = rng.gen_range(0..n);
        let coords = domain.coords(node);
        let t = rng.gen_range(0.0..10.0);
        let s = rng.gen_range(-50.0f64..50.0);
        let grad = [rng.gen_range(-5.0f64..5.0), rng.gen_range(-5.0f64..5.0)];
        let gdim = domain.dim();
        let v = nl.eval(t, node, coords, s, &grad[..gdim]);
        worst_bound = worst_bound.max(v.abs() / nl.bound_m.max(1e-300));
        // Lipschitz quotient against a nearby probe in (s, grad).
        let ds = rng.gen_range(-0.5f64..0.5);
        let mut grad2 = grad;
        if nl.uses_gradient {
            grad2[0] += rng.gen_range(-0.5..0.5);
        }
        let v2 = nl.eval(t, node, coords, s + ds, &grad2[..gdim]);
        let dist = (ds * ds + (grad2[0] - grad[0]).powi(2)).sqrt();
        if dist > 1e-9 {
            let quotient = (v2 - v).abs() / dist;
            worst_lip = worst_lip.max(quotient / nl.lipschitz.max(1e-300));
        }
        if let Some(p) = nl.time_period {
            let vp = nl.eval(t + p, node, coords, s, &grad[..gdim]);
            worst_period = worst_period.max((vp - v).abs());
        }
    }
    ProbeReport {
        worst_bound_ratio: worst_bound,
        worst_lipschitz_ratio: worst_lip,
        periodicity_defect: worst_period,
        samples: n_samples,
    }
}

/// H-operator norm of the difference gradient (largest singular value of the
/// stacked component stencils; the uniform node weight cancels).  Appears in
/// the Lipschitz bound L (1 + |D|) for gradient-using families.
pub fn gradient_operator_norm(domain: &Domain) -> f64 {
    let n = domain.node_count();
    let dim = domain.dim();
    let mut stacked = nalgebra::DMatrix::zeros(dim * n, n);
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let g = gradient(domain, &e);
        for (c, comp) in g.iter().enumerate() {
            for row in 0..n {
                stacked[(c * n + row, col)] = comp[row];
            }
        }
    }
    stacked.singular_values()[0]
}
