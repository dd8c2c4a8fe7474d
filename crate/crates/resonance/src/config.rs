//! Experiment configuration: a flat `key = value` text format with dotted
//! section prefixes and `#` comments.  Unknown keys are rejected so typos
//! surface immediately; every field has a default except the preset name.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Grid and operator description.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    /// Spatial dimension, 1 or 2.
    pub dimension: usize,
    /// Interval length, or both side lengths of the square.
    pub length: f64,
    /// Interior nodes (per axis in two dimensions).
    pub nodes: usize,
    /// Constant diffusion coefficient.
    pub coefficient: f64,
}

/// Which eigenvalue carries the resonance, and the fractional exponent.
#[derive(Debug, Clone)]
pub struct ResonanceConfig {
    /// 1-based cluster index; ignored when `lambda` is set.
    pub index: usize,
    /// Target eigenvalue to snap to (within `lambda_rel_tol`).
    pub lambda: Option<f64>,
    pub lambda_rel_tol: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct NonlinearityConfig {
    pub family: String,
    pub amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct TimeConfig {
    pub period: f64,
    /// Integration steps per period.
    pub steps: usize,
    /// "etd2rk" or "exponential_euler".
    pub scheme: String,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub mode_cut: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub kernel_radius: f64,
}

#[derive(Debug, Clone)]
pub struct ConditionsConfig {
    pub t_samples: usize,
    pub y_samples: usize,
    pub y_bound: f64,
    pub radii: Vec<f64>,
    pub sphere_samples: usize,
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    /// Leading spectral coefficients written to trajectory files.
    pub spectral_head: usize,
}

/// Everything a run needs, parsed and validated.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub preset: String,
    pub problem: ProblemConfig,
    pub resonance: ResonanceConfig,
    pub nonlinearity: NonlinearityConfig,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub sweep: SweepConfig,
    pub conditions: ConditionsConfig,
    pub output: OutputConfig,
    pub seed: u64,
}

fn parse_known<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("cannot parse {key} = {raw:?}"))),
    }
}

fn parse_list(map: &BTreeMap<String, String>, key: &str) -> Result<Option<Vec<f64>>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("cannot parse {key} entry {p:?}")))
            })
            .collect::<Result<Vec<f64>>>()
            .map(Some),
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key {key}")));
            }
        }
        Self::from_map(map)
    }

    fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        const KNOWN: &[&str] = &[
            "preset",
            "problem.dimension",
            "problem.length",
            "problem.nodes",
            "problem.coefficient",
            "resonance.index",
            "resonance.lambda",
            "resonance.lambda_rel_tol",
            "resonance.alpha",
            "nonlinearity.family",
            "nonlinearity.amplitude",
            "time.period",
            "time.steps",
            "time.scheme",
            "solver.mode_cut",
            "solver.max_iterations",
            "solver.tolerance",
            "sweep.epsilons",
            "sweep.kernel_radius",
            "conditions.t_samples",
            "conditions.y_samples",
            "conditions.y_bound",
            "conditions.radii",
            "conditions.sphere_samples",
            "output.spectral_head",
            "seed",
        ];
        let unknown: Vec<&String> = map.keys().filter(|k| !KNOWN.contains(&k.as_str())).collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!(
                "unknown configuration keys: {}",
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        let preset: String = parse_known(&map, "preset")?
            .ok_or_else(|| Error::Config("missing required key: preset".into()))?;

        let config = ExperimentConfig {
            preset,
            problem: ProblemConfig {
                dimension: parse_known(&map, "problem.dimension")?.unwrap_or(1),
                length: parse_known(&map, "problem.length")?.unwrap_or(std::f64::consts::PI),
                nodes: parse_known(&map, "problem.nodes")?.unwrap_or(199),
                coefficient: parse_known(&map, "problem.coefficient")?.unwrap_or(1.0),
            },
            resonance: ResonanceConfig {
                index: parse_known(&map, "resonance.index")?.unwrap_or(1),
                lambda: parse_known(&map, "resonance.lambda")?,
                lambda_rel_tol: parse_known(&map, "resonance.lambda_rel_tol")?.unwrap_or(0.05),
                alpha: parse_known(&map, "resonance.alpha")?.unwrap_or(0.8),
            },
            nonlinearity: NonlinearityConfig {
                family: parse_known(&map, "nonlinearity.family")?
                    .unwrap_or_else(|| "arctan".to_string()),
                amplitude: parse_known(&map, "nonlinearity.amplitude")?.unwrap_or(1.0),
            },
            time: TimeConfig {
                period: parse_known(&map, "time.period")?.unwrap_or(2.0),
                steps: parse_known(&map, "time.steps")?.unwrap_or(512),
                scheme: parse_known(&map, "time.scheme")?.unwrap_or_else(|| "etd2rk".to_string()),
            },
            solver: SolverConfig {
                mode_cut: parse_known(&map, "solver.mode_cut")?.unwrap_or(16),
                max_iterations: parse_known(&map, "solver.max_iterations")?.unwrap_or(50),
                tolerance: parse_known(&map, "solver.tolerance")?.unwrap_or(1e-8),
            },
            sweep: SweepConfig {
                epsilons: parse_list(&map, "sweep.epsilons")?
                    .unwrap_or_else(|| vec![1.0, 0.5, 0.25, 0.1, 0.05]),
                kernel_radius: parse_known(&map, "sweep.kernel_radius")?.unwrap_or(3.0),
            },
            conditions: ConditionsConfig {
                t_samples: parse_known(&map, "conditions.t_samples")?.unwrap_or(32),
                y_samples: parse_known(&map, "conditions.y_samples")?.unwrap_or(64),
                y_bound: parse_known(&map, "conditions.y_bound")?.unwrap_or(1.0),
                radii: parse_list(&map, "conditions.radii")?
                    .unwrap_or_else(|| vec![2.0, 4.0, 8.0, 16.0]),
                sphere_samples: parse_known(&map, "conditions.sphere_samples")?.unwrap_or(128),
            },
            output: OutputConfig {
                spectral_head: parse_known(&map, "output.spectral_head")?.unwrap_or(16),
            },
            seed: parse_known(&map, "seed")?.unwrap_or(12345),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !matches!(self.problem.dimension, 1 | 2) {
            return fail(format!(
                "problem.dimension must be 1 or 2, got {}",
                self.problem.dimension
            ));
        }
        if !(self.resonance.alpha > 0.75 && self.resonance.alpha < 1.0) {
            return fail(format!(
                "resonance.alpha must lie strictly between 3/4 and 1, got {}",
                self.resonance.alpha
            ));
        }
        if !matches!(self.time.scheme.as_str(), "etd2rk" | "exponential_euler") {
            return fail(format!(
                "time.scheme must be etd2rk or exponential_euler, got {:?}",
                self.time.scheme
            ));
        }
        if !(self.time.period > 0.0) || self.time.steps == 0 {
            return fail("time.period and time.steps must be positive".into());
        }
        for &e in &self.sweep.epsilons {
            if !(e > 0.0 && e <= 1.0) {
                return fail(format!("sweep.epsilons must lie in (0, 1], got {e}"));
            }
        }
        if self.resonance.index == 0 {
            return fail("resonance.index is 1-based and must be positive".into());
        }
        Ok(())
    }

    /// Step size implied by the period and step count.
    pub fn dt(&self) -> f64 {
        self.time.period / self.time.steps as f64
    }

    pub fn scheme(&self) -> crate::evolve::Scheme {
        match self.time.scheme.as_str() {
            "exponential_euler" => crate::evolve::Scheme::ExponentialEuler,
            _ => crate::evolve::Scheme::Etd2rk,
        }
    }
}
