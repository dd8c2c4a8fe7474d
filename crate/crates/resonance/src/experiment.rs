//! Preset experiments gluing the pipeline together: build the operator,
//! split the spectrum at the resonant cluster, and run one of the named
//! studies.  Every run writes its artifacts (CSV data, gnuplot scripts, a
//! human-readable summary with CHECK lines, and a manifest listing each
//! file) into one output directory, deterministically: re-running the same
//! configuration reproduces every byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::conditions::{
    check_geometric, check_landesman_lazer, check_strong_resonance, GeometricOptions, Verdict,
};
use crate::config::ExperimentConfig;
use crate::degree::{averaging_experiment, brouwer_degree, linear_degree_count, KernelMap};
use crate::elliptic::{Coefficient, Domain, EllipticProblem};
use crate::error::{Error, Result};
use crate::evolve::Evolution;
use crate::nonlinearity::{probe_audit, Asymptotics, Nonlinearity};
use crate::poincare::{find_fixed_point, Certification, SolveOptions};
use crate::spectral::{decompose_with, verify_decay, ResonanceTarget, SpectralDecomposition};

/// What a run produced.
#[derive(Debug)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    /// Files written, relative to `output_dir`.
    pub files: Vec<String>,
    /// True when every CHECK in the summary passed.
    pub passed: bool,
    /// The content of summary.txt.
    pub summary: String,
}

/// Collects summary lines, CHECK verdicts, and written files for one run.
struct Reporter {
    dir: PathBuf,
    files: Vec<String>,
    lines: Vec<String>,
    failures: usize,
}

impl Reporter {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Reporter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            lines: Vec::new(),
            failures: 0,
        })
    }

    fn note(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    fn check(&mut self, name: &str, ok: bool, detail: impl AsRef<str>) {
        if !ok {
            self.failures += 1;
        }
        self.lines.push(format!(
            "CHECK {name}: {} ({})",
            if ok { "PASS" } else { "FAIL" },
            detail.as_ref()
        ));
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Record a file that a library writer already produced.
    fn register(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    fn write_file(&mut self, name: &str, content: &str) -> Result<()> {
        std::fs::write(self.path(name), content)?;
        self.register(name);
        Ok(())
    }

    fn has_file(&self, name: &str) -> bool {
        self.files.iter().any(|f| f == name)
    }

    fn finalize(mut self, preset: &str, seed: u64) -> Result<RunArtifacts> {
        let passed = self.failures == 0;
        let mut summary = self.lines.join("\n");
        summary.push_str(&format!(
            "\nresult: {}\n",
            if passed { "PASS" } else { "FAIL" }
        ));
        std::fs::write(self.path("summary.txt"), &summary)?;
        self.files.push("summary.txt".to_string());
        let manifest = serde_json::json!({
            "preset": preset,
            "seed": seed,
            "passed": passed,
            "files": self.files,
        });
        std::fs::write(
            self.path("manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
        )?;
        self.files.push("manifest.json".to_string());
        Ok(RunArtifacts {
            output_dir: self.dir,
            files: self.files,
            passed,
            summary,
        })
    }
}

/// Run the configured preset, writing artifacts into `output_dir`.
pub fn run(
    cfg: &ExperimentConfig,
    output_dir: &Path,
    seed_override: Option<u64>,
) -> Result<RunArtifacts> {
    let seed = seed_override.unwrap_or(cfg.seed);
    let domain = match cfg.problem.dimension {
        1 => Domain::Interval {
            length: cfg.problem.length,
            n: cfg.problem.nodes,
        },
        _ => Domain::Rectangle {
            lengths: (cfg.problem.length, cfg.problem.length),
            n: cfg.problem.nodes,
        },
    };
    let matrix = EllipticProblem::new(domain.clone(), Coefficient::Constant(cfg.problem.coefficient))
        .assemble()?;
    let target = match cfg.resonance.lambda {
        Some(value) => ResonanceTarget::LambdaWithin {
            value,
            rel_tol: cfg.resonance.lambda_rel_tol,
        },
        None => ResonanceTarget::Index(cfg.resonance.index),
    };
    let dec = decompose_with(&domain, &matrix, target, cfg.resonance.alpha)?;
    let nl = Nonlinearity::builtin(
        &cfg.nonlinearity.family,
        cfg.nonlinearity.amplitude,
        cfg.time.period,
        &dec,
    )?;

    let mut rep = Reporter::new(output_dir)?;
    rep.note(format!("preset: {}", cfg.preset));
    rep.note(format!(
        "grid: {} with {} nodes",
        match domain {
            Domain::Interval { .. } => "interval",
            Domain::Rectangle { .. } => "square",
        },
        domain.node_count()
    ));
    rep.note(format!(
        "resonance: cluster {} at lambda = {}, kernel dimension {}, alpha = {}",
        dec.k(),
        dec.lambda(),
        dec.dim_kernel(),
        dec.alpha()
    ));
    rep.note(format!(
        "splitting: {} below / {} kernel / {} above, delta = {}",
        dec.dim_minus(),
        dec.dim_kernel(),
        dec.dim_plus(),
        dec.delta()
    ));
    rep.note(format!(
        "nonlinearity: {} with amplitude {}, pointwise bound {}",
        nl.family, cfg.nonlinearity.amplitude, nl.bound_m
    ));
    rep.note(format!("seed: {seed}"));
    rep.note(String::new());

    match cfg.preset.as_str() {
        "spectral_audit" => spectral_audit(cfg, &matrix, &dec, &nl, seed, &mut rep)?,
        "nonexistence" => nonexistence(cfg, &dec, &nl, &mut rep)?,
        "averaging_sweep" => averaging_sweep(cfg, &dec, &nl, &mut rep)?,
        "index_formula" => index_formula(cfg, &dec, &nl, &mut rep)?,
        "ll_criterion" => ll_criterion(cfg, &dec, &nl, &mut rep)?,
        "sr_criterion" => sr_criterion(cfg, &dec, &nl, &mut rep)?,
        "conditions_audit" => conditions_audit(cfg, &dec, &nl, seed, &mut rep)?,
        other => return Err(Error::Config(format!("unknown preset {other:?}"))),
    }

    emit_plot_scripts(&mut rep)?;
    rep.finalize(&cfg.preset, seed)
}

fn solve_options(cfg: &ExperimentConfig) -> SolveOptions {
    SolveOptions {
        max_iterations: cfg.solver.max_iterations,
        tolerance: cfg.solver.tolerance,
        ..SolveOptions::default()
    }
}

fn max_epsilon(cfg: &ExperimentConfig) -> f64 {
    cfg.sweep
        .epsilons
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn geometric_options(cfg: &ExperimentConfig, seed: u64) -> GeometricOptions {
    GeometricOptions {
        t_samples: cfg.conditions.t_samples,
        y_samples: cfg.conditions.y_samples,
        y_bound: cfg.conditions.y_bound,
        radii: cfg.conditions.radii.clone(),
        sphere_samples: cfg.conditions.sphere_samples,
        seed,
    }
}

fn spectral_audit(
    cfg: &ExperimentConfig,
    matrix: &nalgebra::DMatrix<f64>,
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    seed: u64,
    rep: &mut Reporter,
) -> Result<()> {
    dec.write_modes_csv(&rep.path("modes.csv"))?;
    rep.register("modes.csv");

    let eigen_residual = dec.eigen_residual(matrix);
    let gram = dec.gram_defect();
    let projection = dec.projection_audit(100, seed);
    let decay = verify_decay(dec, &[0.1, 1.0, 5.0], 50, seed)?;
    let probes = probe_audit(nl, dec.domain(), 10_000, seed);

    let mut csv = String::from("quantity,value\n");
    for (name, value) in [
        ("eigen_residual", eigen_residual),
        ("gram_defect", gram),
        ("projection_defect", projection),
        ("smoothing_sampled_constant", decay.smoothing.sampled_constant),
        ("smoothing_required_constant", decay.smoothing.required_constant),
        ("forward_sampled_constant", decay.forward.sampled_constant),
        ("backward_sampled_constant", decay.backward.sampled_constant),
        ("probe_bound_ratio", probes.worst_bound_ratio),
        ("probe_lipschitz_ratio", probes.worst_lipschitz_ratio),
    ] {
        let _ = writeln!(csv, "{name},{value}");
    }
    rep.write_file("audit.csv", &csv)?;

    rep.check(
        "eigenvalue residual",
        eigen_residual <= 1e-9,
        format!("worst relative |A v - lambda v| = {eigen_residual}"),
    );
    rep.check(
        "basis orthonormality",
        gram <= 1e-10,
        format!("worst Gram defect = {gram}"),
    );
    rep.check(
        "projection algebra",
        projection <= 1e-10,
        format!("worst completeness/idempotence defect = {projection}"),
    );
    rep.check(
        "semigroup decay bounds",
        decay.passed(),
        format!(
            "smoothing ratio {} (limit {}), forward {}, backward {}",
            decay.smoothing.sampled_constant,
            decay.smoothing.required_constant,
            decay.forward.sampled_constant,
            decay.backward.sampled_constant
        ),
    );
    if cfg.problem.dimension == 1 {
        let sign_changes = dec.kernel_sign_changes()?;
        let expected = dec.k() - 1;
        let ok = sign_changes.iter().all(|&c| c == expected);
        rep.check(
            "kernel oscillation count",
            ok,
            format!("sign changes {sign_changes:?}, expected {expected}"),
        );
    }
    rep.check(
        "forcing probe audit",
        probes.passed(),
        format!(
            "bound ratio {}, Lipschitz ratio {}, periodicity defect {}",
            probes.worst_bound_ratio, probes.worst_lipschitz_ratio, probes.periodicity_defect
        ),
    );
    Ok(())
}

fn nonexistence(
    cfg: &ExperimentConfig,
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    rep: &mut Reporter,
) -> Result<()> {
    let geo = check_geometric(dec, nl, cfg.time.period, &geometric_options(cfg, cfg.seed))?;
    rep.check(
        "sign conditions refuted",
        geo.positive == Verdict::Fails && geo.negative == Verdict::Fails,
        format!(
            "positive {} (margin {}), negative {} (margin {})",
            geo.positive.label(),
            geo.min_margin,
            geo.negative.label(),
            geo.max_margin
        ),
    );

    let eps = max_epsilon(cfg);
    let ev = Evolution::new(dec, nl, eps, cfg.dt(), cfg.scheme())?;
    let traj = ev.integrate(
        &DVector::zeros(dec.mode_count()),
        cfg.time.period,
        (cfg.time.steps / 64).max(1),
    )?;
    traj.write_spectral_csv(dec, cfg.output.spectral_head.max(1), &rep.path("drift.csv"))?;
    rep.register("drift.csv");
    let kernel_mode = dec.kernel_range().start;
    let drift = traj.final_state()[kernel_mode];
    let g = KernelMap::new(dec, nl, cfg.time.period);
    let origin = vec![0.0; dec.dim_kernel()];
    let predicted = eps * cfg.time.period * g.evaluate(&origin)?[0];
    rep.check(
        "kernel drift matches averaged forcing",
        (drift - predicted).abs() <= 1e-9 * predicted.abs().max(1.0),
        format!("drift over one period {drift}, averaged prediction {predicted}"),
    );

    let orbit = find_fixed_point(
        &ev,
        cfg.time.period,
        &DVector::zeros(dec.mode_count()),
        cfg.solver.mode_cut,
        &solve_options(cfg),
    )?;
    let degenerate = matches!(orbit.certification, Certification::Degenerate { .. });
    rep.check(
        "fixed-point solve degenerates",
        degenerate,
        format!("certification {:?}", orbit.certification),
    );
    if degenerate && drift.abs() > 0.0 {
        rep.note("no periodic solution: the forcing drives the kernel mode monotonically");
    }
    Ok(())
}

fn averaging_sweep(
    cfg: &ExperimentConfig,
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    rep: &mut Reporter,
) -> Result<()> {
    let report = averaging_experiment(
        dec,
        nl,
        &cfg.sweep.epsilons,
        cfg.time.period,
        cfg.dt(),
        cfg.scheme(),
        cfg.solver.mode_cut,
        cfg.sweep.kernel_radius,
        &solve_options(cfg),
    )?;
    let mut csv = String::from(
        "epsilon,fixed_point_found,qnorm,radius,kernel_coord,g_root_distance,degree_value,expected_degree,pass\n",
    );
    for row in &report.rows {
        let degree = row
            .degree_value
            .map(|d| d.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            row.epsilon,
            row.fixed_point_found,
            row.qnorm,
            row.radius,
            row.kernel_coord,
            row.g_root_distance,
            degree,
            row.expected_degree,
            row.pass
        );
    }
    rep.write_file("sweep.csv", &csv)?;
    rep.note(format!(
        "averaged kernel map root at z = {}, predicted index {}",
        report.g_root, report.expected_degree
    ));

    rep.check(
        "orbit family follows the averaged root",
        report.passed,
        format!(
            "smallest epsilon {}: {}",
            report.rows.last().map(|r| r.epsilon).unwrap_or(f64::NAN),
            if report.passed { "all checks hold" } else { "a check failed" }
        ),
    );
    let indices_ok = report
        .rows
        .iter()
        .filter(|r| r.fixed_point_found)
        .all(|r| r.degree_value == Some(r.expected_degree));
    rep.check(
        "index matches the degree prediction at every certified epsilon",
        indices_ok,
        format!("expected {}", report.expected_degree),
    );
    let shrink_ok = report
        .rows
        .iter()
        .filter(|r| r.fixed_point_found)
        .all(|r| r.qnorm <= r.radius * (1.0 + 1e-9));
    rep.check(
        "non-kernel component stays inside the shrinking radius",
        shrink_ok,
        "observed qnorm <= a-priori radius at each epsilon",
    );
    Ok(())
}

fn index_formula(
    cfg: &ExperimentConfig,
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    rep: &mut Reporter,
) -> Result<()> {
    let base_cut = dec.modes_through_kernel();
    let cuts = [
        base_cut,
        (base_cut + 4).min(dec.mode_count()),
        (base_cut + 8).min(dec.mode_count()),
    ];
    let counts: Vec<i32> = cuts
        .iter()
        .map(|&c| linear_degree_count(dec, cfg.time.period, c))
        .collect();
    let parity = if dec.modes_below_kernel() % 2 == 0 {
        1
    } else {
        -1
    };
    let mut csv = String::from("quantity,value\n");
    for (c, v) in cuts.iter().zip(&counts) {
        let _ = writeln!(csv, "linear_count_cut_{c},{v}");
    }
    let _ = writeln!(csv, "modes_below_kernel,{}", dec.modes_below_kernel());
    let _ = writeln!(csv, "parity,{parity}");

    rep.check(
        "linear index count stabilizes across cuts",
        counts.iter().all(|&c| c == counts[0]),
        format!("counts {counts:?} at cuts {cuts:?}"),
    );
    rep.check(
        "linear index count equals the parity of modes below the kernel",
        counts[0] == parity,
        format!("count {}, (-1)^{}", counts[0], dec.modes_below_kernel()),
    );

    let eps = max_epsilon(cfg);
    let ev = Evolution::new(dec, nl, eps, cfg.dt(), cfg.scheme())?;
    let start = dec.from_kernel_coords(&vec![0.1; dec.dim_kernel()])?;
    let orbit = find_fixed_point(
        &ev,
        cfg.time.period,
        start.spectral(),
        cfg.solver.mode_cut,
        &solve_options(cfg),
    )?;
    rep.check(
        "periodic orbit certified",
        orbit.certification.is_certified(),
        format!("residual {}, certification {:?}", orbit.residual, orbit.certification),
    );
    if let Some(sign) = orbit.jacobian_sign {
        let _ = writeln!(csv, "orbit_sign,{sign}");
        if dec.dim_kernel() <= 2 {
            let g = KernelMap::new(dec, nl, cfg.time.period);
            let minus_g =
                |z: &[f64]| -> Result<DVector<f64>> { Ok(-g.evaluate(z)?) };
            let expected = counts[0]
                * brouwer_degree(minus_g, dec.dim_kernel(), cfg.sweep.kernel_radius)?;
            let _ = writeln!(csv, "expected_sign,{expected}");
            rep.check(
                "orbit index agrees with the degree formula",
                sign == expected,
                format!("orbit index {sign}, linear count times averaged degree {expected}"),
            );
        }
    }
    rep.write_file("index.csv", &csv)?;
    Ok(())
}

fn ll_criterion(
    cfg: &ExperimentConfig,
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    rep: &mut Reporter,
) -> Result<()> {
    let ll = check_landesman_lazer(dec, nl, cfg.conditions.sphere_samples)?;
    let mut csv = String::from("quantity,value\n");
    let _ = writeln!(csv, "min_margin,{}", ll.min_margin);
    let _ = writeln!(csv, "max_margin,{}", ll.max_margin);
    let _ = writeln!(csv, "ll_positive,{}", ll.ll_positive.label());
    let _ = writeln!(csv, "ll_negative,{}", ll.ll_negative.label());
    rep.write_file("landesman_lazer.csv", &csv)?;

    let applies = ll.ll_positive == Verdict::Holds || ll.ll_negative == Verdict::Holds;
    rep.check(
        "limit functional keeps a sign over the kernel sphere",
        applies,
        format!(
            "positive {} (min margin {}), negative {} (max margin {})",
            ll.ll_positive.label(),
            ll.min_margin,
            ll.ll_negative.label(),
            ll.max_margin
        ),
    );

    let ev = Evolution::new(dec, nl, max_epsilon(cfg), cfg.dt(), cfg.scheme())?;
    let start = dec.from_kernel_coords(&vec![0.1; dec.dim_kernel()])?;
    let orbit = find_fixed_point(
        &ev,
        cfg.time.period,
        start.spectral(),
        cfg.solver.mode_cut,
        &solve_options(cfg),
    )?;
    rep.check(
        "periodic orbit found under the limit condition",
        orbit.certification.is_certified(),
        format!("residual {}, q-component {}", orbit.residual, orbit.q_bound),
    );
    Ok(())
}

fn sr_criterion(
    cfg: &ExperimentConfig,
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    rep: &mut Reporter,
) -> Result<()> {
    let sr = check_strong_resonance(dec, nl, cfg.time.period, cfg.conditions.t_samples)?;
    let mut csv = String::from("quantity,value\n");
    let _ = writeln!(csv, "min_pointwise_margin,{}", sr.min_pointwise_margin);
    let _ = writeln!(csv, "g_inf_integral,{}", sr.g_inf_integral);
    let _ = writeln!(csv, "verdict,{}", sr.sr.label());
    rep.write_file("strong_resonance.csv", &csv)?;

    rep.check(
        "pointwise inequality and limit integral",
        sr.sr == Verdict::Holds,
        format!(
            "min s*g - q = {} at (t, s, node) = {:?}, integral of g_inf = {}",
            sr.min_pointwise_margin, sr.witness, sr.g_inf_integral
        ),
    );

    let ev = Evolution::new(dec, nl, max_epsilon(cfg), cfg.dt(), cfg.scheme())?;
    let start = dec.from_kernel_coords(&vec![0.1; dec.dim_kernel()])?;
    let orbit = find_fixed_point(
        &ev,
        cfg.time.period,
        start.spectral(),
        cfg.solver.mode_cut,
        &solve_options(cfg),
    )?;
    rep.check(
        "periodic orbit found under strong resonance",
        orbit.certification.is_certified(),
        format!("residual {}, q-component {}", orbit.residual, orbit.q_bound),
    );
    Ok(())
}

fn conditions_audit(
    cfg: &ExperimentConfig,
    dec: &SpectralDecomposition,
    nl: &Nonlinearity,
    seed: u64,
    rep: &mut Reporter,
) -> Result<()> {
    let geo = check_geometric(dec, nl, cfg.time.period, &geometric_options(cfg, seed))?;
    let mut csv = String::from("condition,verdict,margin\n");
    let _ = writeln!(csv, "geometric_positive,{},{}", geo.positive.label(), geo.min_margin);
    let _ = writeln!(csv, "geometric_negative,{},{}", geo.negative.label(), geo.max_margin);

    rep.check(
        "geometric verdicts are exclusive",
        !(geo.positive == Verdict::Holds && geo.negative == Verdict::Holds),
        format!(
            "positive {}, negative {}",
            geo.positive.label(),
            geo.negative.label()
        ),
    );

    let ll = match nl.asymptotics {
        Asymptotics::None => None,
        _ => Some(check_landesman_lazer(dec, nl, cfg.conditions.sphere_samples)?),
    };
    if let Some(ll) = &ll {
        let _ = writeln!(csv, "ll_positive,{},{}", ll.ll_positive.label(), ll.min_margin);
        let _ = writeln!(csv, "ll_negative,{},{}", ll.ll_negative.label(), ll.max_margin);
        let implied = (ll.ll_positive != Verdict::Holds || geo.positive == Verdict::Holds)
            && (ll.ll_negative != Verdict::Holds || geo.negative == Verdict::Holds);
        rep.check(
            "limit condition implies the geometric condition",
            implied,
            format!(
                "limit positive {} -> geometric positive {}; limit negative {} -> geometric negative {}",
                ll.ll_positive.label(),
                geo.positive.label(),
                ll.ll_negative.label(),
                geo.negative.label()
            ),
        );
    } else {
        rep.note("limit condition: no declared asymptotics, skipped");
    }

    if matches!(nl.asymptotics, Asymptotics::StrongResonance { .. }) {
        let sr = check_strong_resonance(dec, nl, cfg.time.period, cfg.conditions.t_samples)?;
        let _ = writeln!(csv, "strong_resonance,{},{}", sr.sr.label(), sr.min_pointwise_margin);
        rep.check(
            "strong resonance implies the positive geometric condition",
            sr.sr != Verdict::Holds || geo.positive == Verdict::Holds,
            format!(
                "strong resonance {}, geometric positive {}",
                sr.sr.label(),
                geo.positive.label()
            ),
        );
    }
    rep.write_file("conditions.csv", &csv)?;
    if let Some(r) = geo.stabilization_radius {
        rep.note(format!("geometric margins keep their sign from radius {r} on"));
    }
    Ok(())
}

fn emit_plot_scripts(rep: &mut Reporter) -> Result<()> {
    let prelude = "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\n";
    if rep.has_file("modes.csv") {
        let script = format!(
            "{prelude}set output 'modes.png'\nset xlabel 'mode index'\nset ylabel 'eigenvalue'\nplot 'modes.csv' using 1:2 with points pt 7 ps 0.5 title 'spectrum'\n"
        );
        rep.write_file("plot_modes.gp", &script)?;
    }
    if rep.has_file("sweep.csv") {
        let script = format!(
            "{prelude}set output 'sweep.png'\nset logscale xy\nset xlabel 'epsilon'\nset ylabel 'non-kernel size'\nplot 'sweep.csv' using 1:3 with linespoints title 'observed', 'sweep.csv' using 1:4 with lines title 'a-priori radius'\n"
        );
        rep.write_file("plot_sweep.gp", &script)?;
    }
    if rep.has_file("drift.csv") {
        let script = format!(
            "{prelude}set output 'drift.png'\nset xlabel 'time'\nset ylabel 'kernel coordinate'\nplot 'drift.csv' using 1:2 with lines title 'kernel mode'\n"
        );
        rep.write_file("plot_drift.gp", &script)?;
    }
    Ok(())
}
