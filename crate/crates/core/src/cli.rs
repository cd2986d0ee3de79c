//! The `alghelm` command line: loads a model file, runs the requested
//! checks and prints a text summary or the structured JSON run report.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or the data
//! is degenerate, 2 on usage or model errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::model::Model;
use crate::report::Report;
use crate::sode::{self, Classification};
use crate::variational::{self, RECONSTRUCTION_TOLERANCE};
use crate::{morphism, Error, PointE};

/// Identifier of the structured report layout.
pub const SCHEMA: &str = "alghelm.run-report/1";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "alghelm", version, about = "Helmholtz conditions for SODEs on Lie algebroids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Structured,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model file (TOML).
    pub model: PathBuf,
    /// Number of sample points (ignored when the model lists explicit points).
    #[arg(long)]
    pub points: Option<usize>,
    /// Residual tolerance, overriding the model.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Sampling seed, overriding the model.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the structure equations of the algebroid.
    Validate(Common),
    /// Evaluate the Helmholtz conditions and their horizontal-lift form.
    Helmholtz(Common),
    /// Classify the SODE as variational, weak variational or neither.
    Classify(Common),
    /// Derive the SODE of the model's Lagrangian.
    DeriveSode(Common),
    /// Euler-Lagrange residuals of the model's SODE for its Lagrangian.
    ElResidual(Common),
    /// Reconstruct a Lagrangian from the SODE and multiplier.
    Reconstruct(Common),
    /// Check the morphism and transfer the conditions along it.
    MorphismCheck(Common),
    /// Run every applicable check and write the structured report.
    Report {
        #[command(flatten)]
        common: Common,
        /// Write the report here instead of standard output.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

/// One check in a run report.
#[derive(Debug, Clone, Serialize)]
pub struct Section {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Largest absolute residual per condition block.
    pub maxima: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl Section {
    fn from_report(name: &str, report: Report) -> Self {
        let maxima = report
            .conditions()
            .into_iter()
            .map(|c| {
                let v = report.max_abs(&c);
                (c, v)
            })
            .collect();
        Self {
            name: name.to_string(),
            passed: report.passed,
            classification: None,
            error: None,
            maxima,
            report: Some(report),
            details: None,
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            classification: None,
            error: Some(err.to_string()),
            maxima: BTreeMap::new(),
            report: None,
            details: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub model: String,
    pub command: String,
    pub tolerance: f64,
    pub sample_count: usize,
    pub sections: Vec<Section>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    pub passed: bool,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }
}

/// Errors that end a run with exit code 2 instead of being recorded as a
/// failed check.
fn is_usage_error(err: &Error) -> bool {
    matches!(
        err,
        Error::Model(_) | Error::Parse(_) | Error::Dimension(_) | Error::Precondition(_) | Error::NotAntisymmetric { .. }
    )
}

struct Run<'a> {
    model: &'a Model,
    points: Vec<Vec<f64>>,
    tol: f64,
}

type Step<'m> = fn(&Run<'m>) -> Result<Vec<Section>, Error>;

impl Run<'_> {
    fn guarded(&self, name: &str, step: impl FnOnce() -> Result<Section, Error>) -> Result<Section, Error> {
        match step() {
            Ok(s) => Ok(s),
            Err(err) if is_usage_error(&err) => Err(err),
            Err(err) => Ok(Section::failed(name, &err)),
        }
    }

    fn base_points(&self) -> Vec<Vec<f64>> {
        let e = &self.model.system.algebroid;
        let mut out: Vec<Vec<f64>> = Vec::new();
        for p in &self.points {
            let x = p[..e.m()].to_vec();
            if !out.contains(&x) {
                out.push(x);
            }
        }
        out
    }

    fn validate(&self) -> Result<Vec<Section>, Error> {
        let e = &self.model.system.algebroid;
        let s = self.guarded("validate", || {
            Ok(Section::from_report("validate", e.validate_structure(&self.base_points(), self.tol)?))
        })?;
        Ok(vec![s])
    }

    fn helmholtz(&self) -> Result<Vec<Section>, Error> {
        let (gamma, f) = (self.model.sode()?, self.model.multiplier()?);
        let e = &self.model.system.algebroid;
        let r = self.guarded("helmholtz", || {
            Ok(Section::from_report(
                "helmholtz",
                sode::helmholtz_residuals(e, gamma, f, &self.points, self.tol)?,
            ))
        })?;
        let p = self.guarded("lift_form", || {
            Ok(Section::from_report("lift_form", sode::lift_form_residuals(e, gamma, f, &self.points, self.tol)?))
        })?;
        Ok(vec![r, p])
    }

    fn classify(&self) -> Result<Vec<Section>, Error> {
        let (gamma, f) = (self.model.sode()?, self.model.multiplier()?);
        let e = &self.model.system.algebroid;
        let mut out = vec![self.guarded("classify", || {
            let h = sode::classify(e, gamma, f, &self.points, self.tol)?;
            let mut s = Section::from_report("classify", h.report);
            s.passed = h.classification == Classification::Variational;
            s.classification = Some(h.classification);
            s.details = Some(json!({
                "max_condition": h.max_condition,
                "degenerate_at": h.degenerate_at,
                "diagnostics": h.diagnostics,
            }));
            Ok(s)
        })?];
        if e.atiyah_data().is_some() {
            out.push(self.guarded("atiyah_reduced", || {
                let a = sode::atiyah_reduced_residuals(e, gamma, f, &self.points, self.tol)?;
                let mut s = Section::from_report("atiyah_reduced", a.reduced);
                s.details = Some(json!({ "implied": a.implied, "implication_holds": a.implication_holds }));
                // informational: a non-variational SODE fails the reduced blocks too
                s.passed = a.implication_holds;
                Ok(s)
            })?);
        }
        Ok(out)
    }

    fn derive_sode(&self) -> Result<Vec<Section>, Error> {
        let l = self.model.lagrangian()?;
        let e = &self.model.system.algebroid;
        let given = self.model.system.sode.as_ref();
        let s = self.guarded("derive_sode", || {
            let mut report = Report::new(self.tol);
            let mut values = Vec::with_capacity(self.points.len());
            for p in &self.points {
                let g = variational::sode_from_lagrangian_at(e, l, p)?;
                if let Some(given) = given {
                    let other = given.values(e, &PointE::split(e, p)?)?;
                    for (a, (u, v)) in g.iter().zip(&other).enumerate() {
                        report.push("gamma", &[a], p, u - v, u.abs() + v.abs());
                    }
                }
                values.push(json!({ "point": p, "gamma": g }));
            }
            let mut s = Section::from_report("derive_sode", report);
            s.details = Some(json!({
                "components": variational::sode_from_lagrangian(e, l).components().map(|c| c.iter().map(ToString::to_string).collect::<Vec<_>>()),
                "values": values,
            }));
            Ok(s)
        })?;
        Ok(vec![s])
    }

    fn el_residual(&self) -> Result<Vec<Section>, Error> {
        let (l, gamma) = (self.model.lagrangian()?, self.model.sode()?);
        let e = &self.model.system.algebroid;
        let s = self.guarded("el_residual", || {
            let mut report = Report::new(self.tol);
            for p in &self.points {
                for (a, r) in variational::el_residual(e, l, gamma, p)?.into_iter().enumerate() {
                    report.push("EL", &[a], p, r, 0.0);
                }
            }
            Ok(Section::from_report("el_residual", report))
        })?;
        Ok(vec![s])
    }

    fn reconstruct(&self) -> Result<Vec<Section>, Error> {
        let (gamma, f) = (self.model.sode()?, self.model.multiplier()?);
        let spec = self
            .model
            .reconstruct
            .as_ref()
            .ok_or_else(|| Error::Model("missing [reconstruct] block".into()))?;
        let e = &self.model.system.algebroid;
        let s = self.guarded("reconstruct", || {
            let rec = variational::reconstruct_lagrangian(
                e,
                gamma,
                f,
                &spec.basepoint,
                &spec.fiber_basepoint,
                spec.mode,
                &self.points,
            )?;
            let mut report = rec.verification.clone();
            if let Some(l) = &self.model.system.lagrangian {
                let mut diff = Report::new(RECONSTRUCTION_TOLERANCE);
                let mut offset = None;
                for p in &self.points {
                    let pe = PointE::split(e, p)?;
                    let exact = l.expr.value_in(&e.total_env(&pe.x, &pe.y))?;
                    let d = rec.value(p)? - exact;
                    let c = *offset.get_or_insert(d);
                    diff.push("lagrangian", &[], p, d - c, exact.abs());
                }
                report.merge(diff);
            }
            let mut s = Section::from_report("reconstruct", report);
            s.details = Some(json!({ "mode": spec.mode }));
            Ok(s)
        })?;
        Ok(vec![s])
    }

    fn morphism(&self) -> Result<Vec<Section>, Error> {
        let spec = self
            .model
            .morphism
            .as_ref()
            .ok_or_else(|| Error::Model("missing [morphism] block".into()))?;
        let psi = &spec.morphism;
        let mut out = vec![self.guarded("morphism", || {
            Ok(Section::from_report(
                "morphism",
                morphism::check_morphism(psi, &self.base_points(), self.tol)?,
            ))
        })?];
        if let (Some(g), Some(g2)) = (&self.model.system.sode, &spec.target.sode) {
            out.push(self.guarded("sode_related", || {
                Ok(Section::from_report(
                    "sode_related",
                    morphism::sode_related(psi, g, g2, &self.points, self.tol)?,
                ))
            })?);
        }
        if let (Some(g2), Some(f2)) = (&spec.target.sode, &spec.target.multiplier) {
            out.push(self.guarded("reduction", || {
                let r = morphism::reduction_check(psi, g2, f2, &self.points, self.tol)?;
                let mut s = Section::from_report("reduction", r.pulled_back);
                s.passed = r.conclusion_holds;
                s.classification = Some(r.target.classification);
                s.details = Some(json!({ "target": r.target.report, "conclusion_holds": r.conclusion_holds }));
                Ok(s)
            })?);
        }
        Ok(out)
    }
}

fn execute(model: &Model, command: &str, common: &Common) -> Result<RunReport, Error> {
    if common.tol.is_some_and(|t| !(t > 0.0)) {
        return Err(Error::Model("--tol must be positive".into()));
    }
    if common.points == Some(0) {
        return Err(Error::Model("--points must be at least 1".into()));
    }
    let run = Run {
        model,
        points: model.sample(common.seed, common.points),
        tol: common.tol.unwrap_or(model.tolerance),
    };
    let steps: Vec<Step<'_>> = match command {
        "validate" => vec![Run::validate],
        "helmholtz" => vec![Run::helmholtz],
        "classify" => vec![Run::classify],
        "derive-sode" => vec![Run::derive_sode],
        "el-residual" => vec![Run::el_residual],
        "reconstruct" => vec![Run::reconstruct],
        "morphism-check" => vec![Run::morphism],
        _ => {
            let sys = &model.system;
            let mut all: Vec<Step<'_>> = vec![Run::validate];
            if sys.sode.is_some() && sys.multiplier.is_some() {
                all.extend([Run::helmholtz as Step<'_>, Run::classify]);
            }
            if sys.lagrangian.is_some() {
                all.push(Run::derive_sode);
                if sys.sode.is_some() {
                    all.push(Run::el_residual);
                }
            }
            if model.reconstruct.is_some() {
                all.push(Run::reconstruct);
            }
            if model.morphism.is_some() {
                all.push(Run::morphism);
            }
            all
        }
    };
    let mut sections = Vec::new();
    for step in steps {
        sections.extend(step(&run)?);
    }
    let classification = sections.iter().find(|s| s.name == "classify").and_then(|s| s.classification);
    // the reduced Atiyah blocks are informational in a run
    let passed = sections.iter().filter(|s| s.name != "atiyah_reduced").all(|s| s.passed)
        && sections.iter().all(|s| s.error.is_none());
    Ok(RunReport {
        schema: SCHEMA,
        model: model.name.clone(),
        command: command.to_string(),
        tolerance: run.tol,
        sample_count: run.points.len(),
        sections,
        classification,
        passed,
    })
}

fn write_text(out: &mut dyn Write, r: &RunReport) -> std::io::Result<()> {
    writeln!(out, "model {} ({} points, tolerance {:e})", r.model, r.sample_count, r.tolerance)?;
    for s in &r.sections {
        writeln!(out, "{}: {}", s.name, if s.passed { "pass" } else { "FAIL" })?;
        if let Some(c) = s.classification {
            writeln!(out, "  classification: {c}")?;
        }
        if let Some(err) = &s.error {
            writeln!(out, "  error: {err}")?;
        }
        for (block, max) in &s.maxima {
            writeln!(out, "  {block}: max |residual| = {max:.3e}")?;
        }
        if let Some(report) = &s.report {
            for e in report.errors.iter().take(3) {
                writeln!(out, "  {} not evaluated at {:?}: {}", e.condition, e.point, e.message)?;
            }
        }
    }
    if let Some(c) = r.classification {
        writeln!(out, "{c}")?;
    }
    writeln!(out, "{}", if r.passed { "PASS" } else { "FAIL" })
}

/// Parses `args` (including the program name), runs and returns the exit
/// code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let (name, common, output) = match &cli.command {
        Command::Validate(c) => ("validate", c, None),
        Command::Helmholtz(c) => ("helmholtz", c, None),
        Command::Classify(c) => ("classify", c, None),
        Command::DeriveSode(c) => ("derive-sode", c, None),
        Command::ElResidual(c) => ("el-residual", c, None),
        Command::Reconstruct(c) => ("reconstruct", c, None),
        Command::MorphismCheck(c) => ("morphism-check", c, None),
        Command::Report { common, output } => ("report", common, output.as_ref()),
    };
    let result = Model::load(&common.model).and_then(|m| execute(&m, name, common));
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return if is_usage_error(&e) { EXIT_USAGE } else { EXIT_FAIL };
        }
    };
    let structured = name == "report" || common.format == Format::Structured;
    let written = if structured {
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        match output {
            Some(path) => std::fs::write(path, text),
            None => out.write_all(text.as_bytes()),
        }
    } else {
        write_text(out, &report)
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: cannot write report: {e}");
        return EXIT_USAGE;
    }
    report.exit_code()
}
