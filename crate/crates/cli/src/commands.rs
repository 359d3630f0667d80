use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use pulsekit::optimizer::{minimum_harmonics, synthesize, Certification, OptimizationProblem, Protection};
use pulsekit::sequences::{
    composite, decoupling_order_table, format_order_table, grid, linear_fit, loglog_slope, program,
    scan_amplitude_frequency, scan_chain_length, scan_tau, EvolveOptions, OrderCell, OrderOptions, PulseFamily,
    ScanResult,
};
use pulsekit::shapes::{fmt_degrees, library, shape_params, GaussianShape, HardPulse, Shape, ShapeFile};
use pulsekit::{sample_random, CouplingRanges, Model};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::manifest::{csv_document, json_document, sha256_hex, write_output, RunManifest};

/// The search finished without meeting its tolerance; maps to its own exit code.
#[derive(Debug)]
pub struct NotConverged(pub String);

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "not converged: {}", self.0)
    }
}

impl std::error::Error for NotConverged {}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::ShapeParams(a) => shape_params_cmd(command, a),
        Command::OrderTable(a) => order_table(command, a),
        Command::Scan(s) => scan(command, s),
        Command::Synthesize(a) => synthesize_cmd(command, a),
        Command::Replay(a) => replay(a),
    }
}

fn emit_json<T: Serialize>(command: &Command, result: &T) -> Result<()> {
    if let Some(out) = command.out() {
        let doc = json_document(&RunManifest::new(command)?, result)?;
        write_output(out, &doc)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct ParamRow {
    label: String,
    phi0_degrees: f64,
    upsilon: f64,
    alpha: f64,
    zeta: f64,
}

fn load_shape(path: &PathBuf) -> Result<Shape> {
    let file = ShapeFile::load(path).with_context(|| format!("loading shape file {}", path.display()))?;
    Ok(file.to_shape()?.into())
}

fn shape_params_cmd(command: &Command, a: &ShapeParamsArgs) -> Result<()> {
    let mut shapes: Vec<Shape> = Vec::new();
    for p in &a.shape {
        shapes.push(load_shape(p)?);
    }
    for l in &a.label {
        shapes.push(library::shape(l)?);
    }
    for &d in &a.hard {
        shapes.push(HardPulse::new(d.to_radians()).into());
    }
    for &w in &a.gaussian {
        for &d in &a.angles {
            shapes.push(GaussianShape::new(d.to_radians(), w)?.into());
        }
    }
    if shapes.is_empty() {
        shapes = library::labels().map(library::shape).collect::<pulsekit::Result<_>>()?;
    }
    let rows = shapes
        .iter()
        .map(|s| {
            let p = shape_params(s, a.quad_points)?;
            Ok(ParamRow {
                label: s.label(),
                phi0_degrees: s.phi0().to_degrees(),
                upsilon: p.upsilon,
                alpha: p.alpha,
                zeta: p.zeta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // keeps round-off from printing as -0.000000
    let tidy = |v: f64| if v.abs() < 5e-7 { 0.0 } else { v };
    println!("{:<12} {:>8} {:>12} {:>12} {:>12}", "shape", "phi0", "upsilon", "alpha", "zeta");
    for r in &rows {
        println!(
            "{:<12} {:>8} {:>12.6} {:>12.6} {:>12.6}",
            r.label,
            fmt_degrees(r.phi0_degrees.to_radians()),
            tidy(r.upsilon),
            tidy(r.alpha),
            tidy(r.zeta)
        );
    }
    emit_json(command, &rows)
}

// ---------------------------------------------------------------------------

fn parse_models(names: &[String]) -> Result<Vec<Model>> {
    Ok(names.iter().map(|m| m.parse::<Model>()).collect::<pulsekit::Result<_>>()?)
}

fn order_table(command: &Command, a: &OrderTableArgs) -> Result<()> {
    let models = parse_models(&a.model)?;
    let programs = a.seq.iter().map(|s| program(s)).collect::<pulsekit::Result<Vec<_>>>()?;
    let mut families = a.family.iter().map(|f| PulseFamily::parse(f)).collect::<pulsekit::Result<Vec<_>>>()?;
    if !a.shape.is_empty() {
        let shapes = a.shape.iter().map(load_shape).collect::<Result<Vec<_>>>()?;
        families.push(PulseFamily::Custom(shapes));
    }
    if models.is_empty() || programs.is_empty() || families.is_empty() {
        bail!(pulsekit::Error::Input("order table needs at least one model, sequence and family".into()));
    }
    let opts = OrderOptions { k_max: a.kmax, steps: a.steps, rel_tol: a.rel_tol, conv_tol: a.conv_tol };
    let cells: Vec<OrderCell> = decoupling_order_table(&models, &programs, &families, a.n, a.seed, &opts)?;
    print!("{}", format_order_table(&cells, &models));
    emit_json(command, &cells)
}

// ---------------------------------------------------------------------------

fn evolve_opts(e: &Evolution) -> EvolveOptions {
    EvolveOptions { steps: e.steps, richardson: !e.no_richardson }
}

fn grid_values(g: &Grid) -> Result<Vec<f64>> {
    if g.steps == 1 && g.min != g.max {
        bail!(pulsekit::Error::Input(format!("single-point grid {g} needs min = max")));
    }
    Ok(grid(g.min, g.max, g.steps)?)
}

fn emit_scan(command: &Command, scan: &ScanResult) -> Result<()> {
    let doc = csv_document(&RunManifest::new(command)?, &scan.to_csv())?;
    match command.out() {
        Some(out) => {
            write_output(out, &doc)?;
        }
        None => print!("{doc}"),
    }
    Ok(())
}

fn report_fit(what: &str, fit: pulsekit::Result<pulsekit::sequences::LinearFit>) {
    match fit {
        Ok(f) => eprintln!("{what}: slope {:.4}, intercept {:.4}, R^2 {:.5}", f.slope, f.intercept, f.r2),
        Err(e) => eprintln!("{what}: no fit ({e})"),
    }
}

fn scan(command: &Command, s: &ScanCommand) -> Result<()> {
    match s {
        ScanCommand::AmpFreq(a) => {
            let comp = composite(&a.seq)?;
            let fam = PulseFamily::parse(&a.family)?;
            let r = scan_amplitude_frequency(&comp, &fam, &grid_values(&a.grid)?, &grid_values(&a.dtau_grid)?, &evolve_opts(&a.evolution))?;
            let inf = r.column("infidelity").unwrap_or_default();
            let good = inf.iter().filter(|&&v| v < 1e-4).count();
            eprintln!("{good} of {} grid points below 1e-4 infidelity", inf.len());
            emit_scan(command, &r)
        }
        ScanCommand::Tau(a) => {
            let prog = program(&a.seq)?;
            let fam = PulseFamily::parse(&a.family)?;
            let chain = sample_random(a.model.parse()?, a.n, a.seed, CouplingRanges::default())?;
            let taus: Vec<f64> = a.exponents.values().into_iter().map(|j| 0.5f64.powi(j as i32)).collect();
            let t = a.t.unwrap_or(128.0 * prog.len() as f64 * taus[0]);
            let r = scan_tau(&prog, &fam, &chain, t, &taus, &evolve_opts(&a.evolution))?;
            let tau = r.column("tau").unwrap_or_default();
            report_fit("log delta vs log tau (1e-8 < delta < 1e-2)", loglog_slope(&tau, &r.column("delta").unwrap_or_default(), 1e-8, 1e-2));
            report_fit(
                "log infidelity vs log tau (1e-16 < 1-F < 1e-4)",
                loglog_slope(&tau, &r.column("infidelity").unwrap_or_default(), 1e-16, 1e-4),
            );
            emit_scan(command, &r)
        }
        ScanCommand::ChainLength(a) => {
            let prog = program(&a.seq)?;
            let fam = PulseFamily::parse(&a.family)?;
            let t = a.t.unwrap_or(128.0 * a.tau);
            let ns = a.n.values();
            let r = scan_chain_length(&prog, &fam, a.model.parse()?, &ns, a.seed, a.tau, t, &evolve_opts(&a.evolution))?;
            let n = r.column("n").unwrap_or_default();
            report_fit("infidelity vs n", linear_fit(&n, &r.column("infidelity").unwrap_or_default()));
            let log2: Vec<f64> = r.column("delta2").unwrap_or_default().iter().map(|d| d.log2()).collect();
            report_fit("log2 delta^2 vs n", linear_fit(&n, &log2));
            emit_scan(command, &r)
        }
    }
}

// ---------------------------------------------------------------------------

/// JSON problem description accepted by `synthesize --problem`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub phi0_degrees: f64,
    pub k: usize,
    pub l: usize,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub protect: Protection,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_m_max() -> usize {
    10
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_epsilon() -> f64 {
    pulsekit::optimizer::DEFAULT_EPSILON
}
fn default_budget() -> usize {
    1_000_000
}
fn default_steps() -> usize {
    pulsekit::optimizer::DEFAULT_STEPS
}

impl ProblemFile {
    fn from_args(a: &SynthesizeArgs) -> Result<Self> {
        if let Some(p) = &a.problem {
            let text = fs::read_to_string(p).with_context(|| format!("reading problem file {}", p.display()))?;
            return serde_json::from_str(&text).map_err(|e| pulsekit::Error::Input(format!("problem file: {e}")).into());
        }
        Ok(ProblemFile {
            phi0_degrees: a.phi0,
            k: a.k,
            l: a.l,
            m: a.m,
            m_max: a.m_max,
            seeds: (a.seed..a.seed + a.restarts.max(1)).collect(),
            protect: Protection { dupsilon: a.protect_upsilon, dalpha: a.protect_alpha },
            epsilon: a.epsilon,
            budget: a.budget,
            steps: a.steps,
        })
    }

    fn template(&self) -> OptimizationProblem {
        let mut p = OptimizationProblem::new(self.phi0_degrees.to_radians(), self.k, self.l, self.l.max(1));
        p.protect = self.protect;
        p.epsilon = self.epsilon;
        p.budget = self.budget;
        p.steps = self.steps;
        p
    }
}

#[derive(Debug, Serialize)]
struct SynthesisOutput<'a> {
    #[serde(flatten)]
    shape: ShapeFile,
    certification: &'a Certification,
    synthesis: SynthesisSummary,
    manifest: RunManifest,
}

#[derive(Debug, Serialize)]
struct SynthesisSummary {
    converged: bool,
    seed: u64,
    m: usize,
    m_min: Option<usize>,
    objective: f64,
    first_term: f64,
    spectral_term: f64,
    evaluations: usize,
}

/// Best restart: converged first, then lowest objective, then lowest seed.
fn best_of(template: &OptimizationProblem, m: usize, seeds: &[u64]) -> Result<(u64, pulsekit::SynthesisReport)> {
    let runs = seeds
        .par_iter()
        .map(|&seed| Ok((seed, synthesize(&OptimizationProblem { m, seed, ..template.clone() })?)))
        .collect::<pulsekit::Result<Vec<_>>>()?;
    runs.into_iter()
        .min_by(|a, b| {
            (!a.1.converged, a.1.objective, a.0)
                .partial_cmp(&(!b.1.converged, b.1.objective, b.0))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .context("no seeds given")
}

fn synthesize_cmd(command: &Command, a: &SynthesizeArgs) -> Result<()> {
    let problem = ProblemFile::from_args(a)?;
    if problem.seeds.is_empty() {
        bail!(pulsekit::Error::Input("at least one seed is required".into()));
    }
    let template = problem.template();
    let (m, m_min) = match problem.m {
        Some(m) => (m, None),
        None => {
            let lo = template.l.max(1);
            match minimum_harmonics(&template, lo, problem.m_max, &problem.seeds)? {
                Some(mm) => {
                    eprintln!("smallest converging harmonic count: {mm}");
                    (mm + 1, Some(mm))
                }
                None => return Err(NotConverged(format!("no harmonic count up to {} converged", problem.m_max)).into()),
            }
        }
    };
    let (mut seed, mut report) = best_of(&template, m, &problem.seeds)?;
    if !report.converged {
        if let Some(mm) = m_min {
            (seed, report) = best_of(&template, mm, &problem.seeds)?;
        }
    }
    let mut shape = report.shape.clone();
    shape.claimed_order = Some(problem.k);
    let c = &report.certification;
    eprintln!(
        "{}: objective {:.3e}, upsilon {:.2e}, alpha {:.2e}, order {}, {} evaluations",
        shape.label, report.objective, c.upsilon, c.alpha, c.order, report.evaluations
    );
    if let Some(out) = command.out() {
        let doc = SynthesisOutput {
            shape: ShapeFile::from_shape(&shape),
            certification: c,
            synthesis: SynthesisSummary {
                converged: report.converged,
                seed,
                m: report.coeffs.len(),
                m_min,
                objective: report.objective,
                first_term: report.first_term,
                spectral_term: report.spectral_term,
                evaluations: report.evaluations,
            },
            manifest: RunManifest::new(command)?,
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        write_output(out, &text)?;
    } else {
        println!("{}", ShapeFile::from_shape(&shape).to_json());
    }
    if !(report.converged && c.passed) {
        return Err(NotConverged(format!("{} did not meet its refocusing targets", shape.label)).into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn replay(a: &ReplayArgs) -> Result<()> {
    let original = fs::read(&a.file).with_context(|| format!("reading {}", a.file.display()))?;
    let manifest = RunManifest::extract(&String::from_utf8_lossy(&original))?;
    manifest.check_inputs()?;
    let tool = format!("pulsekit {}", env!("CARGO_PKG_VERSION"));
    if manifest.tool != tool {
        eprintln!("warning: output was produced by {}, replaying with {tool}", manifest.tool);
    }
    let mut command = manifest.command.clone();
    if matches!(command, Command::Replay(_)) {
        bail!(pulsekit::Error::Input("manifest describes a replay".into()));
    }
    let out = a.out.clone().unwrap_or_else(|| {
        let mut p = a.file.clone().into_os_string();
        p.push(".replay");
        p.into()
    });
    command.set_out(out.clone());
    run(&command)?;
    let fresh = fs::read(&out)?;
    if sha256_hex(&fresh) != sha256_hex(&original) {
        bail!(pulsekit::Error::Numeric(format!("replayed output {} differs from {}", out.display(), a.file.display())));
    }
    println!("replay identical: {}", sha256_hex(&fresh));
    Ok(())
}
