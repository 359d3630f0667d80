//! Decoupling and composite-pulse programs, their compilation to control
//! schedules, order certification and infidelity scans.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::fidelity::{average_fidelity, FidelityReport};
use crate::lattice::{build_hamiltonian, sample_random, ChainSpec, CouplingRanges, Model};
use crate::linalg::{inplane_rotation, mat2_mul, ComplexMatrix, Mat2, ONE, ZERO};
use crate::qdyn::{self, ControlSchedule, OrderReport};
use crate::shapes::{fmt_degrees, library, GaussianShape, HardPulse, Shape};

/// Which qubits a pulse acts on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Sublattice 1 holds the odd sites (qubits 0, 2, ...), sublattice 2 the even ones.
    Sublattice(u8),
    All,
    Qubits(Vec<usize>),
}

impl Target {
    pub fn qubits(&self, n: usize) -> Vec<usize> {
        match self {
            Target::Sublattice(1) => (0..n).step_by(2).collect(),
            Target::Sublattice(_) => (1..n).step_by(2).collect(),
            Target::All => (0..n).collect(),
            Target::Qubits(q) => q.clone(),
        }
    }
}

/// Rotation by `angle` about the in-plane axis at `phase`; negative angles are
/// realized as positive rotations about the opposite axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseAction {
    pub target: Target,
    pub angle: f64,
    pub phase: f64,
}

impl PulseAction {
    pub fn new(target: Target, angle: f64, phase: f64) -> Self {
        Self { target, angle, phase }
    }

    /// `(|angle|, phase)` with the sign folded into the phase.
    pub fn canonical(&self) -> (f64, f64) {
        if self.angle < 0.0 {
            (-self.angle, self.phase + PI)
        } else {
            (self.angle, self.phase)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub actions: Vec<PulseAction>,
}

impl Slot {
    pub fn idle() -> Self {
        Self::default()
    }

    pub fn is_idle(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceProgram {
    pub name: String,
    pub slots: Vec<Slot>,
}

/// An ordered pulse list replacing a single pi rotation about x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeSpec {
    pub name: String,
    /// `(angle, phase)` in application order.
    pub pulses: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Builtin {
    Program(SequenceProgram),
    Composite(CompositeSpec),
}

pub const PROGRAM_NAMES: [&str; 4] = ["seq4", "seq8", "seq16", "seq32"];
pub const COMPOSITE_NAMES: [&str; 5] = ["scrofulous", "bb1_W", "bb1_CLJ", "bb1_Wp", "bb1_CLJp"];

/// The BB1 correction phase `-arccos(-1/4)`.
pub fn bb1_phase() -> f64 {
    -(-0.25f64).acos()
}

fn parse_symbol(sym: &str) -> Result<Slot> {
    if sym == "0" {
        return Ok(Slot::idle());
    }
    let mut chars = sym.chars();
    let (axis, bar) = match chars.next() {
        Some('X') => (0.0, false),
        Some('Y') => (PI / 2.0, false),
        Some('x') => (0.0, true),
        Some('y') => (PI / 2.0, true),
        _ => return input(format!("bad pulse symbol '{sym}'")),
    };
    let sub = match chars.next() {
        Some('1') => 1,
        Some('2') => 2,
        _ => return input(format!("bad sublattice in symbol '{sym}'")),
    };
    let phase = if bar { axis + PI } else { axis };
    Ok(Slot { actions: vec![PulseAction::new(Target::Sublattice(sub), PI, phase)] })
}

impl SequenceProgram {
    /// Parses space-separated symbols: `X1`, `Y2`, lowercase for the barred
    /// (inverted) pulse, and `0` for an idle slot.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let slots = text.split_whitespace().map(parse_symbol).collect::<Result<Vec<_>>>()?;
        if slots.is_empty() {
            return input("empty sequence");
        }
        Ok(Self { name: name.to_string(), slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn reversed(&self, name: &str) -> Self {
        Self { name: name.to_string(), slots: self.slots.iter().rev().cloned().collect() }
    }

    pub fn is_palindrome(&self) -> bool {
        let n = self.slots.len();
        (0..n).all(|i| self.slots[i] == self.slots[n - 1 - i])
    }

    /// Replaces every pi pulse by the composite, expanding each slot into as
    /// many slots as the composite has pulses. The first half of the program
    /// uses the composite in its printed order, the second half reversed.
    pub fn with_composite(&self, comp: &CompositeSpec) -> Result<Self> {
        let m = comp.pulses.len();
        let half = self.slots.len().div_ceil(2);
        let mut slots = Vec::with_capacity(self.slots.len() * m);
        for (i, slot) in self.slots.iter().enumerate() {
            let order: Vec<(f64, f64)> =
                if i < half { comp.pulses.clone() } else { comp.pulses.iter().rev().cloned().collect() };
            let mut expanded = vec![Slot::idle(); m];
            for act in &slot.actions {
                let (angle, phase) = act.canonical();
                if (angle - PI).abs() > 1e-12 {
                    return input(format!("composite substitution needs pi pulses, found {}", fmt_degrees(angle)));
                }
                for (j, &(a, p)) in order.iter().enumerate() {
                    expanded[j].actions.push(PulseAction::new(act.target.clone(), a, phase + p));
                }
            }
            slots.extend(expanded);
        }
        Ok(Self { name: format!("{}+{}", self.name, comp.name), slots })
    }
}

impl CompositeSpec {
    /// Ideal delta-pulse product of the composite (later pulses on the left).
    pub fn ideal(&self) -> Mat2 {
        self.pulses.iter().fold([[ONE, ZERO], [ZERO, ONE]], |acc, &(a, p)| mat2_mul(&inplane_rotation(a, p), &acc))
    }

    /// Single-qubit program applying the composite once.
    pub fn program(&self) -> SequenceProgram {
        SequenceProgram {
            name: self.name.clone(),
            slots: self
                .pulses
                .iter()
                .map(|&(a, p)| Slot { actions: vec![PulseAction::new(Target::All, a, p)] })
                .collect(),
        }
    }
}

pub fn builtin(name: &str) -> Result<Builtin> {
    let phi = bb1_phase();
    let comp = |pulses: Vec<(f64, f64)>| Ok(Builtin::Composite(CompositeSpec { name: name.to_string(), pulses }));
    let deg = |d: f64| d.to_radians();
    match name {
        "seq4" => Ok(Builtin::Program(SequenceProgram::parse(name, "X1 Y2 x1 y2")?)),
        "seq8" => Ok(Builtin::Program(SequenceProgram::parse(name, "X1 Y2 x1 y2 y2 x1 Y2 X1")?)),
        "seq16" => Ok(Builtin::Program(seq16()?)),
        "seq32" => {
            let s16 = seq16()?;
            let mut slots = s16.slots.clone();
            slots.extend(s16.slots.iter().rev().cloned());
            Ok(Builtin::Program(SequenceProgram { name: name.to_string(), slots }))
        }
        "scrofulous" => comp(vec![(PI, deg(60.0)), (PI, deg(300.0)), (PI, deg(60.0))]),
        "bb1_W" => comp(vec![(PI, 0.0), (PI, phi), (2.0 * PI, 3.0 * phi), (PI, phi)]),
        "bb1_CLJ" => comp(vec![(PI / 2.0, 0.0), (PI, phi), (2.0 * PI, 3.0 * phi), (PI, phi), (PI / 2.0, 0.0)]),
        "bb1_Wp" => comp(vec![(PI, 0.0), (PI, phi), (PI, 3.0 * phi), (PI, 3.0 * phi), (PI, phi)]),
        "bb1_CLJp" => {
            comp(vec![(PI / 2.0, 0.0), (PI, phi), (PI, 3.0 * phi), (PI, 3.0 * phi), (PI, phi), (PI / 2.0, 0.0)])
        }
        _ => input(format!(
            "unknown sequence '{name}' (expected one of {} or {})",
            PROGRAM_NAMES.join(", "),
            COMPOSITE_NAMES.join(", ")
        )),
    }
}

fn seq16() -> Result<SequenceProgram> {
    SequenceProgram::parse("seq16", "X1 Y2 Y1 0 x1 X2 Y1 0 X1 y2 Y1 0 x1 X2 Y1 0")
}

pub fn program(name: &str) -> Result<SequenceProgram> {
    match builtin(name)? {
        Builtin::Program(p) => Ok(p),
        Builtin::Composite(_) => input(format!("'{name}' is a composite pulse, not a decoupling program")),
    }
}

pub fn composite(name: &str) -> Result<CompositeSpec> {
    match builtin(name)? {
        Builtin::Composite(c) => Ok(c),
        Builtin::Program(_) => input(format!("'{name}' is a decoupling program, not a composite pulse")),
    }
}

// ---------------------------------------------------------------------------
// pulse families

/// Maps a rotation angle to the envelope realizing it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PulseFamily {
    /// Shipped shapes `{prefix}({degrees})`, e.g. prefix `Q1`.
    Library(String),
    Gaussian(f64),
    Hard,
    /// Explicit shapes matched by rotation angle.
    Custom(Vec<Shape>),
}

impl PulseFamily {
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.eq_ignore_ascii_case("hard") {
            return Ok(PulseFamily::Hard);
        }
        if let Some(w) = t.strip_prefix('G').or_else(|| t.strip_prefix('g')) {
            let w: f64 = w.parse().map_err(|_| Error::Input(format!("bad gaussian width in '{t}'")))?;
            GaussianShape::new(PI, w)?;
            return Ok(PulseFamily::Gaussian(w));
        }
        if library::labels().any(|l| l.starts_with(&format!("{t}("))) {
            return Ok(PulseFamily::Library(t.to_string()));
        }
        input(format!("unknown pulse family '{t}' (expected S1, S2, Q1, Q2, G<width> or hard)"))
    }

    pub fn label(&self) -> String {
        match self {
            PulseFamily::Library(p) => p.clone(),
            PulseFamily::Gaussian(w) => format!("G{w}"),
            PulseFamily::Hard => "hard".into(),
            PulseFamily::Custom(v) => v.first().map(|s| s.label()).unwrap_or_else(|| "custom".into()),
        }
    }

    pub fn shape_for(&self, angle: f64) -> Result<Shape> {
        match self {
            PulseFamily::Library(prefix) => library::shape(&format!("{prefix}({})", fmt_degrees(angle))),
            PulseFamily::Gaussian(w) => Ok(GaussianShape::new(angle, *w)?.into()),
            PulseFamily::Hard => Ok(HardPulse::new(angle).into()),
            PulseFamily::Custom(shapes) => shapes
                .iter()
                .find(|s| (s.phi0() - angle).abs() < 1e-9)
                .cloned()
                .ok_or_else(|| Error::Input(format!("no custom shape for rotation {}", fmt_degrees(angle)))),
        }
    }
}

/// Lays the program onto `n` qubits with slot width `tau_p`, every envelope
/// scaled by `1 + amplitude_error`.
pub fn compile(
    program: &SequenceProgram,
    family: &PulseFamily,
    n: usize,
    tau_p: f64,
    amplitude_error: f64,
) -> Result<ControlSchedule> {
    compile_with_passive(program, family, n, 1, tau_p, amplitude_error)
}

pub fn compile_with_passive(
    program: &SequenceProgram,
    family: &PulseFamily,
    n: usize,
    passive_dim: usize,
    tau_p: f64,
    amplitude_error: f64,
) -> Result<ControlSchedule> {
    if program.is_empty() {
        return input("cannot compile an empty program");
    }
    let mut sched = ControlSchedule::with_passive(n, passive_dim, tau_p, program.len())?;
    for (i, slot) in program.slots.iter().enumerate() {
        for act in &slot.actions {
            let (angle, phase) = act.canonical();
            let mut shape = family.shape_for(angle)?;
            if amplitude_error != 0.0 {
                shape = shape.amplitude_scale(amplitude_error)?;
            }
            for q in act.target.qubits(n) {
                if q >= n {
                    return input(format!("program targets qubit {q} on a {n}-qubit chain"));
                }
                sched.add_pulse(q, i, phase, shape.clone())?;
            }
        }
    }
    Ok(sched)
}

// ---------------------------------------------------------------------------
// order certification

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderOptions {
    pub k_max: usize,
    pub steps: usize,
    pub rel_tol: f64,
    /// Step-doubling tolerance on the relative correction norms.
    pub conv_tol: f64,
}

impl Default for OrderOptions {
    fn default() -> Self {
        Self { k_max: 7, steps: 128, rel_tol: qdyn::DEFAULT_REL_TOL, conv_tol: 1e-8 }
    }
}

pub fn decoupling_order(
    program: &SequenceProgram,
    family: &PulseFamily,
    chain: &ChainSpec,
    opts: &OrderOptions,
) -> Result<OrderReport> {
    let sched = compile(program, family, chain.n, 1.0, 0.0)?;
    let h = build_hamiltonian(chain)?;
    let p = qdyn::propagate_checked(&sched, &h, opts.k_max, opts.steps, opts.conv_tol)?;
    Ok(qdyn::refocusing_order(&p, opts.rel_tol))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderCell {
    pub model: Model,
    pub program: String,
    pub family: String,
    pub report: OrderReport,
}

/// Evaluates every (family, program, model) cell; results are ordered by
/// input position regardless of scheduling.
pub fn decoupling_order_table(
    models: &[Model],
    programs: &[SequenceProgram],
    families: &[PulseFamily],
    n: usize,
    seed: u64,
    opts: &OrderOptions,
) -> Result<Vec<OrderCell>> {
    if n < 2 {
        return input("order table needs a chain of at least two sites");
    }
    let cells: Vec<(usize, usize, usize)> = (0..families.len())
        .flat_map(|f| (0..programs.len()).flat_map(move |p| (0..models.len()).map(move |m| (f, p, m))))
        .collect();
    cells
        .par_iter()
        .map(|&(f, p, m)| {
            let chain = sample_random(models[m], n, seed, CouplingRanges::default())?;
            let report = decoupling_order(&programs[p], &families[f], &chain, opts)?;
            Ok(OrderCell {
                model: models[m],
                program: programs[p].name.clone(),
                family: families[f].label(),
                report,
            })
        })
        .collect()
}

/// Aligned text rendering of an order table, one row per (family, program).
pub fn format_order_table(cells: &[OrderCell], models: &[Model]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<8} {:<16}", "pulse", "sequence");
    for m in models {
        let _ = write!(out, " {:>9}", m.name());
    }
    out.push('\n');
    for row in cells.chunks(models.len().max(1)) {
        let _ = write!(out, "{:<8} {:<16}", row[0].family, row[0].program);
        for c in row {
            let mark = if c.report.saturated { ">=" } else { "" };
            let _ = write!(out, " {:>9}", format!("{mark}{}", c.report.order));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// evolution and scans

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub steps: usize,
    pub richardson: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { steps: 256, richardson: true }
    }
}

/// Single-cycle unitary and its ideal (control-only) counterpart.
pub fn cycle_unitary(
    sched: &ControlSchedule,
    h: &ComplexMatrix,
    opts: &EvolveOptions,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let u = if opts.richardson {
        qdyn::evolve_full_extrapolated(sched, h, opts.steps)?.0
    } else {
        qdyn::evolve_full(sched, h, opts.steps)?
    };
    Ok((u, sched.control_unitary()))
}

/// `U(n tau_c)` as the `n_cycles`-th power of the cycle unitary, with the ideal
/// evolution alongside.
pub fn evolve(
    program: &SequenceProgram,
    family: &PulseFamily,
    chain: &ChainSpec,
    tau_p: f64,
    n_cycles: u64,
    opts: &EvolveOptions,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if n_cycles == 0 {
        return input("n_cycles must be at least 1");
    }
    let sched = compile(program, family, chain.n, tau_p, 0.0)?;
    let (u, u0) = cycle_unitary(&sched, &build_hamiltonian(chain)?, opts)?;
    Ok((u.powi(n_cycles), u0.powi(n_cycles)))
}

/// Grid of infidelities with `# key=value` metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: BTreeMap<String, String>,
}

impl ScanResult {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.12e}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Inclusive uniform grid `min..=max` with `steps` points.
pub fn grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return input("grid needs at least one point");
    }
    if steps == 1 {
        return Ok(vec![min]);
    }
    if !(max > min) {
        return input("grid bounds must satisfy min < max");
    }
    Ok((0..steps).map(|i| min + (max - min) * i as f64 / (steps - 1) as f64).collect())
}

fn check_monotone(name: &str, g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return input(format!("{name} grid is empty"));
    }
    if g.windows(2).any(|w| !(w[1] > w[0])) {
        return input(format!("{name} grid must be strictly increasing"));
    }
    Ok(())
}

/// Single-qubit infidelity of a composite pulse against its ideal rotation
/// over a grid of amplitude errors `f` and detunings `tau_p Delta`.
pub fn scan_amplitude_frequency(
    comp: &CompositeSpec,
    family: &PulseFamily,
    f_grid: &[f64],
    dtau_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<ScanResult> {
    check_monotone("f", f_grid)?;
    check_monotone("tau*Delta", dtau_grid)?;
    let prog = comp.program();
    let ideal = ComplexMatrix::from_mat2(&comp.ideal());
    let points: Vec<(f64, f64)> = f_grid.iter().flat_map(|&f| dtau_grid.iter().map(move |&d| (f, d))).collect();
    let rows = points
        .par_iter()
        .map(|&(f, d)| {
            let sched = compile(&prog, family, 1, 1.0, f)?;
            let h = crate::linalg::sigma_z() * (0.5 * d);
            let (u, _) = cycle_unitary(&sched, &h, opts)?;
            Ok(vec![f, d, average_fidelity(&u, &ideal)?.infidelity()])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut metadata = BTreeMap::new();
    metadata.insert("kind".into(), "amp_freq".into());
    metadata.insert("composite".into(), comp.name.clone());
    metadata.insert("family".into(), family.label());
    metadata.insert("steps".into(), opts.steps.to_string());
    metadata.insert("richardson".into(), opts.richardson.to_string());
    Ok(ScanResult { columns: vec!["f".into(), "tau_delta".into(), "infidelity".into()], rows, metadata })
}

/// Infidelity at fixed total time `t_fixed` for each slot width in `tau_list`;
/// `t_fixed` must be a whole number of cycles for every entry.
pub fn scan_tau(
    program: &SequenceProgram,
    family: &PulseFamily,
    chain: &ChainSpec,
    t_fixed: f64,
    tau_list: &[f64],
    opts: &EvolveOptions,
) -> Result<ScanResult> {
    if tau_list.is_empty() {
        return input("tau list is empty");
    }
    let h = build_hamiltonian(chain)?;
    let rows = tau_list
        .par_iter()
        .map(|&tau| {
            let cycles = t_fixed / (tau * program.len() as f64);
            let n_cycles = cycles.round();
            if n_cycles < 1.0 || (cycles - n_cycles).abs() > 1e-9 * cycles {
                return input(format!("t = {t_fixed} is not a whole number of cycles at tau = {tau}"));
            }
            let sched = compile(program, family, chain.n, tau, 0.0)?;
            let (u, u0) = cycle_unitary(&sched, &h, opts)?;
            let n = n_cycles as u64;
            let rep = average_fidelity(&u.powi(n), &u0.powi(n))?;
            Ok(vec![tau, rep.infidelity(), rep.delta2.sqrt(), n_cycles])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut metadata = chain_metadata("tau", program, family, chain, opts);
    metadata.insert("t".into(), t_fixed.to_string());
    Ok(ScanResult {
        columns: vec!["tau".into(), "infidelity".into(), "delta".into(), "cycles".into()],
        rows,
        metadata,
    })
}

/// Infidelity versus chain length at fixed slot width and total time; chains
/// share the couplings of their common sites.
#[allow(clippy::too_many_arguments)]
pub fn scan_chain_length(
    program: &SequenceProgram,
    family: &PulseFamily,
    model: Model,
    n_list: &[usize],
    seed: u64,
    tau_p: f64,
    t_fixed: f64,
    opts: &EvolveOptions,
) -> Result<ScanResult> {
    if n_list.is_empty() {
        return input("chain-length list is empty");
    }
    let cycles = t_fixed / (tau_p * program.len() as f64);
    let n_cycles = cycles.round();
    if n_cycles < 1.0 || (cycles - n_cycles).abs() > 1e-9 * cycles {
        return input(format!("t = {t_fixed} is not a whole number of cycles"));
    }
    let rows = n_list
        .par_iter()
        .map(|&n| {
            let chain = sample_random(model, n, seed, CouplingRanges::default())?;
            let sched = compile(program, family, n, tau_p, 0.0)?;
            let (u, u0) = cycle_unitary(&sched, &build_hamiltonian(&chain)?, opts)?;
            let k = n_cycles as u64;
            let rep: FidelityReport = average_fidelity(&u.powi(k), &u0.powi(k))?;
            Ok(vec![n as f64, rep.infidelity(), rep.delta2])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut metadata = BTreeMap::new();
    metadata.insert("kind".into(), "chain_length".into());
    metadata.insert("program".into(), program.name.clone());
    metadata.insert("family".into(), family.label());
    metadata.insert("model".into(), model.to_string());
    metadata.insert("seed".into(), seed.to_string());
    metadata.insert("tau".into(), tau_p.to_string());
    metadata.insert("t".into(), t_fixed.to_string());
    metadata.insert("steps".into(), opts.steps.to_string());
    Ok(ScanResult { columns: vec!["n".into(), "infidelity".into(), "delta2".into()], rows, metadata })
}

fn chain_metadata(
    kind: &str,
    program: &SequenceProgram,
    family: &PulseFamily,
    chain: &ChainSpec,
    opts: &EvolveOptions,
) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("kind".into(), kind.into());
    m.insert("program".into(), program.name.clone());
    m.insert("family".into(), family.label());
    m.insert("model".into(), chain.model.to_string());
    m.insert("n".into(), chain.n.to_string());
    m.insert("seed".into(), chain.seed.to_string());
    m.insert("steps".into(), opts.steps.to_string());
    m.insert("richardson".into(), opts.richardson.to_string());
    m
}

/// Least-squares line `y = slope x + intercept` with coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return input("linear fit needs at least two paired points");
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return input("linear fit needs distinct x values");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Slope of `log y` against `log x`, restricted to points with `lo < y < hi`.
pub fn loglog_slope(x: &[f64], y: &[f64], lo: f64, hi: f64) -> Result<LinearFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) =
        x.iter().zip(y).filter(|(_, &v)| v > lo && v < hi).map(|(a, b)| (a.ln(), b.ln())).unzip();
    linear_fit(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_counts_and_palindrome() {
        assert_eq!(program("seq4").unwrap().len(), 4);
        assert_eq!(program("seq8").unwrap().len(), 8);
        assert_eq!(program("seq16").unwrap().len(), 16);
        let s32 = program("seq32").unwrap();
        assert_eq!(s32.len(), 32);
        assert!(s32.is_palindrome());
        assert!(!program("seq16").unwrap().is_palindrome());
    }

    #[test]
    fn seq8_string() {
        let p = program("seq8").unwrap();
        let sym: Vec<(u8, i64)> = p
            .slots
            .iter()
            .map(|s| match &s.actions[0].target {
                Target::Sublattice(k) => (*k, s.actions[0].phase.to_degrees().round() as i64),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(sym, vec![(1, 0), (2, 90), (1, 180), (2, 270), (2, 270), (1, 180), (2, 90), (1, 0)]);
    }

    #[test]
    fn composites_implement_pi_x() {
        let target = inplane_rotation(PI, 0.0);
        for name in COMPOSITE_NAMES {
            let ideal = composite(name).unwrap().ideal();
            // equal up to a global phase
            let ratio = if target[0][1].norm() > 0.5 { ideal[0][1] / target[0][1] } else { ideal[0][0] / target[0][0] };
            for i in 0..2 {
                for j in 0..2 {
                    assert!((ideal[i][j] - ratio * target[i][j]).norm() < 1e-12, "{name}");
                }
            }
        }
    }

    #[test]
    fn sublattices() {
        assert_eq!(Target::Sublattice(1).qubits(5), vec![0, 2, 4]);
        assert_eq!(Target::Sublattice(2).qubits(5), vec![1, 3]);
        assert_eq!(Target::Sublattice(2).qubits(1), Vec::<usize>::new());
    }

    #[test]
    fn seq4_compiles_to_alternating_slots() {
        let s = compile(&program("seq4").unwrap(), &PulseFamily::parse("Q1").unwrap(), 2, 1.0, 0.0).unwrap();
        assert_eq!(s.n_slots, 4);
        let per_slot: Vec<Vec<usize>> =
            (0..4).map(|k| s.pulses.iter().filter(|p| p.slot == k).map(|p| p.qubit).collect()).collect();
        assert_eq!(per_slot, vec![vec![0], vec![1], vec![0], vec![1]]);
        // the cycle is the identity up to sign
        let u0 = s.control_unitary();
        assert!((u0[(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!(u0.is_unitary(1e-12));
    }

    #[test]
    fn bb1_slot_angles() {
        let p = composite("bb1_W").unwrap().program();
        let angles: Vec<i64> = p.slots.iter().map(|s| s.actions[0].angle.to_degrees().round() as i64).collect();
        assert_eq!(angles, vec![180, 180, 360, 180]);
    }

    #[test]
    fn composite_substitution_reverses_second_half() {
        let seq = program("seq4").unwrap().with_composite(&composite("bb1_W").unwrap()).unwrap();
        assert_eq!(seq.len(), 16);
        let angles: Vec<i64> = seq
            .slots
            .iter()
            .map(|s| s.actions.first().map(|a| a.angle.to_degrees().round() as i64).unwrap_or(0))
            .collect();
        assert_eq!(&angles[..4], &[180, 180, 360, 180]);
        assert_eq!(&angles[12..], &[180, 360, 180, 180]);
    }

    #[test]
    fn unknown_names_rejected() {
        assert!(builtin("seq5").is_err());
        assert!(PulseFamily::parse("Z9").is_err());
        assert!(program("bb1_W").is_err());
        assert!(compile(&program("seq4").unwrap(), &PulseFamily::parse("S1").unwrap(), 2, 1.0, 0.0).is_ok());
        assert!(PulseFamily::parse("Q1").unwrap().shape_for(PI / 3.0).is_err());
    }

    #[test]
    fn fit_helpers() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let y2: Vec<f64> = x.iter().map(|v: &f64| 2.0 * v.powi(4)).collect();
        assert!((loglog_slope(&x, &y2, 0.0, 1e9).unwrap().slope - 4.0).abs() < 1e-12);
        assert!(grid(0.0, 1.0, 0).is_err());
        assert_eq!(grid(-1.0, 1.0, 3).unwrap(), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn csv_layout() {
        let mut metadata = BTreeMap::new();
        metadata.insert("seed".to_string(), "7".to_string());
        let r = ScanResult { columns: vec!["x".into(), "y".into(), "infidelity".into()], rows: vec![vec![0.0, 1.0, 0.5]], metadata };
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# seed=7");
        assert_eq!(lines[1], "x,y,infidelity");
        assert_eq!(lines.len(), 3);
    }
}
