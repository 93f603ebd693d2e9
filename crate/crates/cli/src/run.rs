use crate::config::{Command, Kind, RunConfig};
use crate::output::{num, plot_script, sha256_hex, write_json, Table};
use crate::specfile::{parse_spec, ParsedSpec};
use bvlap_core::carleman::{
    build_weight, check_atom_inequalities, choose_phase_slope, compute_tau, constant_report, estimate_mesh,
    evaluate_estimate, PhaseSpec,
};
use bvlap_core::propagator::{bump, decay_fit, evolve, Propagator};
use bvlap_core::resolvent::{default_box, lap_sweep, resolvent_mesh, solve, weighted_norm, SweepConfig};
use bvlap_core::resonance::{find_resonances, strip_certificate, CutoffSpec, Rect, Resonance};
use bvlap_core::{form_lower_bound, CoefficientSpec, Error, GridFunction, SpectralPoint};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Machine-readable reason for a nonzero exit.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub exit_code: i32,
    pub kind: &'static str,
    pub message: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl Failure {
    fn new(exit_code: i32, kind: &'static str, message: impl Into<String>) -> Self {
        Failure {
            exit_code,
            kind,
            message: message.into(),
            line: None,
            column: None,
        }
    }

    fn to_json(&self, command: &str) -> Value {
        json!({
            "command": command,
            "exit_code": self.exit_code,
            "kind": self.kind,
            "message": self.message,
            "line": self.line,
            "column": self.column,
        })
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Invalid(_) => (EXIT_INPUT, "invalid"),
            Error::Positivity(_) => (EXIT_INPUT, "positivity"),
            Error::Hypothesis(_) => (EXIT_HYPOTHESIS, "hypothesis"),
            Error::NotInDomain { .. } => (EXIT_NUMERICAL, "domain"),
            Error::SingularMatching { .. } => (EXIT_NUMERICAL, "singular_matching"),
            Error::StepFailure { .. } => (EXIT_NUMERICAL, "step_failure"),
            Error::NoConvergence(_) => (EXIT_NUMERICAL, "no_convergence"),
        };
        Failure::new(code, kind, e.to_string())
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub failure: Option<Failure>,
    pub files: Vec<PathBuf>,
}

/// Tables, result block and an optional failure produced by one command.
#[derive(Default)]
struct Artifacts {
    tables: Vec<(&'static str, Table)>,
    results: serde_json::Map<String, Value>,
    failure: Option<Failure>,
}

fn point(e: f64, eps: f64) -> SpectralPoint {
    if eps == 0.0 {
        SpectralPoint::outgoing(e)
    } else {
        SpectralPoint::new(e, eps)
    }
}

fn h_values(cfg: &RunConfig, spec: &CoefficientSpec) -> Vec<f64> {
    cfg.h_grid.as_ref().map_or_else(|| vec![spec.h], |g| g.0.clone())
}

fn core_radius(spec: &CoefficientSpec) -> f64 {
    let (a, b) = spec.core_interval();
    let r = a.abs().max(b.abs());
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

fn parameters(cfg: &RunConfig) -> Value {
    json!({
        "s": cfg.s,
        "h_grid": cfg.h_grid.as_ref().map(|g| g.0.clone()),
        "E": cfg.energy,
        "eps": cfg.eps,
        "rect": cfg.rect.0,
        "lambda0": cfg.lambda0,
        "re_max": cfg.re_max,
        "theta_grid": cfg.theta_grid.0,
        "t_grid": cfg.t_grid.0,
        "Lambda": cfg.lambda_cut,
        "kind": format!("{:?}", cfg.kind).to_lowercase(),
        "iters": cfg.iters,
        "samples": cfg.samples,
        "r1": cfg.r1,
        "phase_slope": cfg.phase_slope,
        "eta": cfg.eta,
    })
}

fn validate(parsed: &ParsedSpec) -> Artifacts {
    let spec = &parsed.spec;
    let (lo, hi) = spec.core_interval();
    let fb = form_lower_bound(spec);
    let mut t = Table::new(&["quantity", "value"]);
    for (k, v) in [
        ("h", spec.h),
        ("inf_alpha", spec.inf_alpha()),
        ("inf_beta", spec.inf_beta()),
        ("core_lo", lo),
        ("core_hi", hi),
        ("knots", spec.knots().len() as f64),
        ("atoms", spec.atoms().len() as f64),
        ("form_mass_constant", fb.c_mass),
        ("form_gradient_constant", fb.c_grad),
    ] {
        t.push(vec![k.to_string(), num(v)]);
    }
    let mut a = Artifacts::default();
    a.results.insert("spec".into(), json!(spec));
    a.results.insert("lines".into(), json!(parsed.lines));
    a.tables.push(("validate", t));
    a
}

fn resolve(cfg: &RunConfig, spec: &CoefficientSpec) -> Result<Artifacts, Failure> {
    let mut t = Table::new(&["h", "x", "re_u", "im_u", "abs_u", "re_p", "im_p"]);
    let mut summary = vec![];
    let pt = point(cfg.energy, cfg.eps);
    for h in h_values(cfg, spec) {
        let sh = spec.with_h(h);
        let (lo, hi) = default_box(&sh, &[-1.0, 1.0]);
        let mesh = resolvent_mesh(&sh, pt.z(), lo, hi, &[-1.0, 1.0]);
        let f = GridFunction {
            u: mesh.x.iter().map(|&x| bump(x)).collect(),
            p: vec![C64::default(); mesh.len()],
            mesh: mesh.clone(),
        };
        let field = solve(&sh, &pt, &f)?;
        for (i, &x) in mesh.x.iter().enumerate() {
            let (u, p) = (field.grid.u[i], field.grid.p[i]);
            t.push(vec![num(h), num(x), num(u.re), num(u.im), num(u.norm()), num(p.re), num(p.im)]);
        }
        summary.push(json!({
            "h": h,
            "residual": field.residual,
            "condition": field.condition,
            "weighted_norm": weighted_norm(&field, cfg.s, None),
            "tail_left": field.tail_l,
            "tail_right": field.tail_r,
        }));
    }
    let mut a = Artifacts::default();
    a.results.insert("data".into(), json!("bump (1 - x^2)^8 on [-1, 1]"));
    a.results.insert("solutions".into(), Value::Array(summary));
    a.tables.push(("resolve", t));
    Ok(a)
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn sweep(cfg: &RunConfig, spec: &CoefficientSpec) -> Result<Artifacts, Failure> {
    let hs = cfg
        .h_grid
        .as_ref()
        .map_or_else(|| "log:0.05:1:10".parse::<crate::config::Grid>().unwrap().0, |g| g.0.clone());
    let sc = SweepConfig {
        iters: cfg.iters,
        seed: cfg.seed,
        ..SweepConfig::default()
    };
    let e = cfg.energy;
    let report = lap_sweep(spec, cfg.s, &hs, |_| e, cfg.eps, &sc);
    let mut t = Table::new(&[
        "h",
        "inv_h",
        "energy",
        "eps",
        "exterior_lower",
        "exterior_upper",
        "full_lower",
        "full_upper",
        "exterior_scaled",
        "log_full_scaled",
        "error",
    ]);
    let mut errors = vec![];
    for r in &report.rows {
        t.push(vec![
            num(r.h),
            num(1.0 / r.h),
            num(r.energy),
            num(r.eps),
            opt(r.exterior.as_ref().map(|n| n.lower)),
            opt(r.exterior.as_ref().map(|n| n.upper)),
            opt(r.full.as_ref().map(|n| n.lower)),
            opt(r.full.as_ref().map(|n| n.upper)),
            num(r.exterior_scaled),
            num(r.log_full_scaled),
            r.error.clone().unwrap_or_default(),
        ]);
        if let Some(err) = &r.error {
            errors.push(format!("h = {}: {err}", r.h));
        }
    }
    let mut a = Artifacts::default();
    a.results.insert("s".into(), json!(report.s));
    a.results.insert("radius".into(), json!(report.radius));
    a.results.insert("truncation".into(), json!(report.truncation));
    a.results.insert("exterior_fit".into(), json!(report.exterior_fit));
    a.results.insert("full_fit".into(), json!(report.full_fit));
    a.tables.push(("sweep", t));
    if !errors.is_empty() {
        a.failure = Some(Failure::new(EXIT_NUMERICAL, "no_convergence", errors.join("; ")));
    }
    Ok(a)
}

fn random_data(mesh: &bvlap_core::Mesh, rng: &mut ChaCha8Rng, r1: f64) -> Vec<C64> {
    let c: Vec<(f64, f64, C64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(-r1..r1),
                rng.random_range(1.0..8.0),
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            )
        })
        .collect();
    mesh.x
        .iter()
        .map(|&x| c.iter().map(|&(x0, k, a)| a * (-k * (x - x0) * (x - x0)).exp()).sum())
        .collect()
}

fn carleman(cfg: &RunConfig, spec: &CoefficientSpec) -> Result<Artifacts, Failure> {
    let e = cfg.energy;
    let r1 = cfg.r1.unwrap_or_else(|| core_radius(spec));
    let phase = match cfg.phase_slope {
        Some(k) => PhaseSpec::new(r1, k)?,
        None => choose_phase_slope(spec, e, r1, None)?,
    };
    let tau = compute_tau(spec, &phase, e);
    if !(tau > 0.0) {
        return Err(Error::Hypothesis(format!("threshold tau = {tau} is not positive")).into());
    }
    let pt = point(e, cfg.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = Table::new(&["h", "sample", "lhs", "rhs_f", "rhs_eps", "log_ratio", "log_c", "holds"]);
    let mut per_h = vec![];
    let mut violations = 0usize;
    let mut atom_failures = 0usize;
    for h in h_values(cfg, spec) {
        let sh = spec.with_h(h);
        let weight = build_weight(&sh, &phase, e, cfg.s, cfg.eta)?;
        let report = constant_report(&sh, &phase, &weight, &pt, cfg.eps.abs());
        let ineq = check_atom_inequalities(&weight);
        atom_failures += ineq.iter().filter(|a| !a.holds()).count();
        let mesh = estimate_mesh(&sh, &phase, &pt, 3.0);
        let mut worst = f64::NEG_INFINITY;
        for k in 0..cfg.samples {
            let f = GridFunction {
                u: random_data(&mesh, &mut rng, r1),
                p: vec![C64::default(); mesh.len()],
                mesh: mesh.clone(),
            };
            let sides = evaluate_estimate(&sh, &phase, &pt, cfg.s, &f)?;
            let holds = sides.holds(&report);
            violations += usize::from(!holds);
            worst = worst.max(sides.log_ratio() - report.log_c);
            t.push(vec![
                num(h),
                k.to_string(),
                num(sides.lhs),
                num(sides.rhs_f),
                num(sides.rhs_eps),
                num(sides.log_ratio()),
                num(report.log_c),
                holds.to_string(),
            ]);
        }
        per_h.push(json!({
            "h": h,
            "constant_report": report,
            "m_factor": weight.m_factor,
            "log_sup_bound": weight.log_sup_bound,
            "atom_inequalities": ineq,
            "max_log_excess": worst,
        }));
    }
    let mut a = Artifacts::default();
    a.results.insert("phase".into(), json!({"r1": phase.r1, "slope": phase.k}));
    a.results.insert("tau".into(), json!(tau));
    a.results.insert("per_h".into(), Value::Array(per_h));
    a.results.insert("violations".into(), json!(violations));
    a.tables.push(("carleman", t));
    if violations > 0 || atom_failures > 0 {
        a.failure = Some(Failure::new(
            EXIT_HYPOTHESIS,
            "certificate",
            format!("estimate violated in {violations} samples, {atom_failures} atom inequalities fail"),
        ));
    }
    Ok(a)
}

fn zero_rows(t: &mut Table, zeros: &[Resonance]) {
    for z in zeros {
        t.push(vec![
            num(z.lambda.re),
            num(z.lambda.im),
            z.multiplicity.to_string(),
            num(z.residual),
            num(z.rect.re.0),
            num(z.rect.re.1),
            num(z.rect.im.0),
            num(z.rect.im.1),
        ]);
    }
}

const ZERO_HEADER: [&str; 8] = ["re", "im", "multiplicity", "residual", "rect_re0", "rect_re1", "rect_im0", "rect_im1"];

fn resonances(cfg: &RunConfig, spec: &CoefficientSpec) -> Result<Artifacts, Failure> {
    let [a0, a1, b0, b1] = cfg.rect.0;
    let report = find_resonances(spec, &Rect::new(a0, a1, b0, b1), cfg.tol)?;
    let mut t = Table::new(&ZERO_HEADER);
    zero_rows(&mut t, &report.zeros);
    let mut a = Artifacts::default();
    a.results.insert("zeros".into(), json!(report.zeros.len()));
    a.results.insert("verified_rectangles".into(), json!(report.verified_rectangles.len()));
    a.results.insert("unresolved".into(), json!(report.unresolved));
    a.results.insert("winding_mismatches".into(), json!(report.winding_mismatches));
    a.tables.push(("resonances", t));
    if !report.unresolved.is_empty() || report.winding_mismatches > 0 {
        a.failure = Some(Failure::new(
            EXIT_NUMERICAL,
            "no_convergence",
            format!(
                "{} unresolved rectangles, {} winding mismatches",
                report.unresolved.len(),
                report.winding_mismatches
            ),
        ));
    }
    if let Some(l0) = cfg.lambda0 {
        let sr = strip_certificate(spec, l0, cfg.re_max, &cfg.theta_grid.0)?;
        let strip = sr.strip.expect("strip report");
        let mut st = Table::new(&["lambda0", "re_max", "theta0", "certified", "failed_theta"]);
        st.push(vec![
            num(strip.lambda0),
            num(strip.re_max),
            num(strip.theta0),
            strip.certified.to_string(),
            opt(strip.failed_theta),
        ]);
        let mut bt = Table::new(&ZERO_HEADER);
        zero_rows(&mut bt, &strip.blocking);
        a.results.insert("strip".into(), json!(strip));
        a.tables.push(("strip", st));
        a.tables.push(("strip_blocking", bt));
        if !strip.certified && a.failure.is_none() {
            a.failure = Some(Failure::new(
                EXIT_HYPOTHESIS,
                "certificate",
                format!("no resonance-free strip above lambda0 = {l0} on the theta grid"),
            ));
        }
    }
    Ok(a)
}

fn evolve_cmd(cfg: &RunConfig, spec: &CoefficientSpec) -> Result<Artifacts, Failure> {
    let kind = match cfg.kind {
        Kind::Schrodinger => Propagator::Schrodinger,
        Kind::Cosine => Propagator::Cosine,
        Kind::Sine => Propagator::Sine,
    };
    let cutoff = CutoffSpec::around(spec);
    let report = evolve(spec, &cutoff, bump, &cfg.t_grid.0, cfg.lambda_cut, kind)?;
    let mut t = Table::new(&["t", "value", "coarse", "error"]);
    for i in 0..report.t.len() {
        t.push(vec![
            num(report.t[i]),
            num(report.values[i]),
            num(report.coarse[i]),
            num(report.error[i]),
        ]);
    }
    let t_max = report.t.iter().copied().fold(0.0, f64::max);
    let fit = if kind == Propagator::Schrodinger {
        None
    } else {
        decay_fit(&report.t, &report.values, (t_max / 8.0, t_max)).ok()
    };
    let mut a = Artifacts::default();
    a.results.insert("cutoff".into(), json!({"inner": cutoff.chi.inner, "outer": cutoff.chi.outer}));
    a.results.insert("panels".into(), json!(report.panels));
    a.results.insert("input_mass".into(), json!(report.input_mass));
    a.results.insert("projected_mass".into(), json!(report.projected_mass));
    a.results.insert("tail_mass".into(), json!(report.tail_mass));
    a.results.insert("min_density".into(), json!(report.min_density));
    a.results.insert("threshold_resonance".into(), json!(report.threshold_resonance));
    a.results.insert("decay_fit".into(), json!(fit));
    a.results.insert("refinement_needed".into(), json!(report.refinement_needed));
    a.tables.push(("evolve", t));
    if report.refinement_needed {
        let worst = report.error.iter().copied().fold(0.0, f64::max);
        a.failure = Some(Failure::new(
            EXIT_NUMERICAL,
            "no_convergence",
            format!("spectral quadrature not resolved: relative change {worst:.3e} on halving the panels"),
        ));
    }
    Ok(a)
}

fn dispatch(cfg: &RunConfig, parsed: &ParsedSpec) -> Result<Artifacts, Failure> {
    let spec = &parsed.spec;
    match cfg.command {
        Command::Validate => Ok(validate(parsed)),
        Command::Resolve => resolve(cfg, spec),
        Command::Sweep => sweep(cfg, spec),
        Command::Carleman => carleman(cfg, spec),
        Command::Resonances => resonances(cfg, spec),
        Command::Evolve => evolve_cmd(cfg, spec),
    }
}

/// Runs one command and writes its artifacts to `cfg.output_dir`: one CSV per
/// table, `provenance.json`, `plot.py`, and `failure.json` on a nonzero exit.
pub fn run(cfg: &RunConfig) -> Outcome {
    let command = cfg.command.name();
    let text = std::fs::read(&cfg.spec_path);
    let hash = text.as_ref().ok().map(|t| sha256_hex(t));
    let computed: Result<Artifacts, Failure> = (|| {
        cfg.check().map_err(|m| Failure::new(EXIT_INPUT, "config", m))?;
        let bytes = text
            .as_ref()
            .map_err(|e| Failure::new(EXIT_INPUT, "io", format!("cannot read {}: {e}", cfg.spec_path.display())))?;
        let text =
            std::str::from_utf8(bytes).map_err(|e| Failure::new(EXIT_INPUT, "io", format!("spec file is not UTF-8: {e}")))?;
        let parsed = parse_spec(text).map_err(|e| Failure {
            exit_code: EXIT_INPUT,
            kind: if e.kind == "syntax" { "parse" } else { e.kind },
            message: e.to_string(),
            line: Some(e.line),
            column: Some(e.column),
        })?;
        dispatch(cfg, &parsed)
    })();
    let mut artifacts = computed.unwrap_or_else(|f| Artifacts {
        failure: Some(f),
        ..Artifacts::default()
    });
    let mut files = vec![];
    let written: anyhow::Result<()> = (|| {
        let dir = &cfg.output_dir;
        std::fs::create_dir_all(dir)?;
        let names: Vec<&str> = artifacts.tables.iter().map(|t| t.0).collect();
        for (name, table) in &artifacts.tables {
            let p = dir.join(format!("{name}.csv"));
            table.write(&p)?;
            files.push(p);
        }
        if !names.is_empty() {
            let p = dir.join("plot.py");
            std::fs::write(&p, plot_script(&names))?;
            files.push(p);
        }
        let failure_json = artifacts.failure.as_ref().map(|f| f.to_json(command));
        let provenance = json!({
            "tool": "bvlap",
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": bvlap_core::VERSION,
            "command": command,
            "spec": {
                "file": cfg.spec_path.file_name().map(|s| s.to_string_lossy().into_owned()),
                "sha256": hash,
            },
            "seed": cfg.seed,
            "tolerances": {"tol": cfg.tol, "iters": cfg.iters, "eta": cfg.eta},
            "parameters": parameters(cfg),
            "tables": names,
            "results": Value::Object(std::mem::take(&mut artifacts.results)),
            "failure": failure_json,
        });
        let p = dir.join("provenance.json");
        write_json(&p, &provenance)?;
        files.push(p);
        let p = dir.join("failure.json");
        match &failure_json {
            Some(f) => {
                write_json(&p, f)?;
                files.push(p);
            }
            None if p.exists() => std::fs::remove_file(&p)?,
            None => {}
        }
        Ok(())
    })();
    if let Err(e) = written {
        if artifacts.failure.is_none() {
            artifacts.failure = Some(Failure::new(EXIT_INPUT, "io", format!("cannot write outputs: {e}")));
        }
    }
    Outcome {
        exit_code: artifacts.failure.as_ref().map_or(EXIT_OK, |f| f.exit_code),
        failure: artifacts.failure,
        files,
    }
}
