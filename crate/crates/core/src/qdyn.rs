//! Time-dependent perturbation theory for pulse trains.
//!
//! With controls `H_c(t)` generating the exact control propagator `P(t)`, the
//! full evolution under `H_c + H_S` factors as `U(t) = P(t) W(t)` where
//! `W' = -i K(t) W` and `K = P^dagger H_S P`. Expanding `W = 1 + R_1 + R_2 + ...`
//! in powers of `H_S` gives the hierarchy `R_k' = -i K R_{k-1}`, integrated
//! here with fixed-step RK4. Controls are single-qubit in-plane rotations, so
//! `P` is a tensor product of 2x2 rotations and `K(t)` is formed by local
//! conjugations of `H_S` rather than dense products.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{inplane_rotation, mat2_adjoint, mat2_mul, ComplexMatrix, Layout, Mat2, C64, I, ONE, ZERO};
use crate::shapes::Shape;

pub const MIN_STEPS: usize = 64;
const MAX_STEPS: usize = 1 << 15;
/// Default relative threshold below which a correction counts as zero.
pub const DEFAULT_REL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledPulse {
    pub qubit: usize,
    pub slot: usize,
    /// In-plane axis phase; the control is `V/2 (cos psi X + sin psi Y)`.
    pub psi: f64,
    pub shape: Shape,
}

/// Back-to-back pulse slots of equal width on an n-qubit register, optionally
/// tensored with a passive (unpulsed) factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub n_qubits: usize,
    pub passive_dim: usize,
    pub tau_p: f64,
    pub n_slots: usize,
    pub pulses: Vec<ScheduledPulse>,
}

impl ControlSchedule {
    pub fn new(n_qubits: usize, tau_p: f64, n_slots: usize) -> Result<Self> {
        Self::with_passive(n_qubits, 1, tau_p, n_slots)
    }

    pub fn with_passive(n_qubits: usize, passive_dim: usize, tau_p: f64, n_slots: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > 10 {
            return input(format!("schedule needs 1..=10 qubits, got {n_qubits}"));
        }
        if !passive_dim.is_power_of_two() {
            return input(format!("passive dimension must be a power of two, got {passive_dim}"));
        }
        if !(tau_p > 0.0) || n_slots == 0 {
            return input("schedule needs positive slot width and at least one slot");
        }
        Ok(Self { n_qubits, passive_dim, tau_p, n_slots, pulses: Vec::new() })
    }

    /// A single pulse on a single qubit filling one slot of width `shape.tau()`.
    pub fn single(shape: Shape, psi: f64) -> Self {
        let tau = shape.tau();
        let mut s = Self::new(1, tau, 1).expect("valid single-slot schedule");
        s.pulses.push(ScheduledPulse { qubit: 0, slot: 0, psi, shape });
        s
    }

    pub fn layout(&self) -> Layout {
        Layout { n_qubits: self.n_qubits, passive_dim: self.passive_dim }
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    pub fn tau_c(&self) -> f64 {
        self.tau_p * self.n_slots as f64
    }

    pub fn add_pulse(&mut self, qubit: usize, slot: usize, psi: f64, shape: Shape) -> Result<()> {
        if qubit >= self.n_qubits {
            return input(format!("pulse on qubit {qubit} but schedule has {} qubits", self.n_qubits));
        }
        if slot >= self.n_slots {
            return input(format!("pulse in slot {slot} but schedule has {} slots", self.n_slots));
        }
        if self.pulses.iter().any(|p| p.qubit == qubit && p.slot == slot) {
            return input(format!("overlapping pulses on qubit {qubit} in slot {slot}"));
        }
        self.pulses.push(ScheduledPulse { qubit, slot, psi, shape });
        Ok(())
    }

    /// Appends the slots of `other` after this schedule.
    pub fn append(&mut self, other: &ControlSchedule) -> Result<()> {
        if other.n_qubits != self.n_qubits || other.passive_dim != self.passive_dim {
            return input("cannot append schedules on different registers");
        }
        if (other.tau_p - self.tau_p).abs() > 1e-15 * self.tau_p {
            return input("cannot append schedules with different slot widths");
        }
        let offset = self.n_slots;
        self.n_slots += other.n_slots;
        self.pulses.extend(other.pulses.iter().map(|p| ScheduledPulse { slot: p.slot + offset, ..p.clone() }));
        Ok(())
    }

    /// Exact control propagator over the whole schedule.
    pub fn control_unitary(&self) -> ComplexMatrix {
        let plan = Plan::new(self);
        let layout = self.layout();
        let mut u = ComplexMatrix::identity(layout.dim());
        for (q, g) in plan.final_rotations().iter().enumerate() {
            u.apply_left(g, layout.stride(q));
        }
        u
    }

    fn validate_hamiltonian(&self, h_s: &ComplexMatrix) -> Result<()> {
        if h_s.dim() != self.dim() {
            return input(format!("H_S has dimension {} but the register has {}", h_s.dim(), self.dim()));
        }
        if !h_s.is_hermitian(1e-10) {
            return input(format!("H_S is not Hermitian (defect {:e})", h_s.hermiticity_defect()));
        }
        Ok(())
    }
}

/// Control propagator `U0` and interaction-frame corrections `R_1..R_K` at the
/// end of a schedule.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub u0: ComplexMatrix,
    pub r: Vec<ComplexMatrix>,
    pub k_max: usize,
    pub steps: usize,
    pub tau_c: f64,
    /// Slot width; corrections are measured against `(h_norm tau_p)^k`.
    pub tau_p: f64,
    /// `||H_S||_F / sqrt(dim)`.
    pub h_norm: f64,
    /// Per-order step-doubling error estimate on the relative norms, when checked.
    pub error_estimate: Option<Vec<f64>>,
}

impl Propagator {
    /// `R_k`, with `R_0` the identity.
    pub fn correction(&self, k: usize) -> ComplexMatrix {
        if k == 0 {
            ComplexMatrix::identity(self.u0.dim())
        } else {
            self.r[k - 1].clone()
        }
    }

    /// `||R_k|| / (||H_S|| tau_p)^k` with normalized Frobenius norms.
    pub fn relative_norms(&self) -> Vec<f64> {
        let scale = self.h_norm * self.tau_p;
        self.r
            .iter()
            .enumerate()
            .map(|(i, r)| if scale == 0.0 { r.normalized_norm() } else { r.normalized_norm() / scale.powi(i as i32 + 1) })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// kernel evaluation

/// Per-slot pulse lists plus the accumulated per-qubit rotation at each slot start.
struct Plan {
    layout: Layout,
    tau_p: f64,
    slots: Vec<SlotPlan>,
}

struct SlotPlan {
    pulses: Vec<(usize, f64, Shape)>,
    impulsive: bool,
    /// Accumulated rotation `G_q` at slot start; `None` while still identity.
    start: Vec<Option<Mat2>>,
}

impl Plan {
    fn new(s: &ControlSchedule) -> Self {
        let mut acc: Vec<Option<Mat2>> = vec![None; s.n_qubits];
        let mut slots = Vec::with_capacity(s.n_slots);
        for slot in 0..s.n_slots {
            let pulses: Vec<(usize, f64, Shape)> = s
                .pulses
                .iter()
                .filter(|p| p.slot == slot)
                .map(|p| (p.qubit, p.psi, p.shape.clone()))
                .collect();
            let impulsive = pulses.iter().any(|(_, _, sh)| sh.is_impulsive());
            let start = acc.clone();
            for (q, psi, sh) in &pulses {
                let l = inplane_rotation(sh.phi0(), *psi);
                acc[*q] = Some(match acc[*q] {
                    Some(g) => mat2_mul(&l, &g),
                    None => l,
                });
            }
            slots.push(SlotPlan { pulses, impulsive, start });
        }
        Self { layout: s.layout(), tau_p: s.tau_p, slots }
    }

    fn final_rotations(&self) -> Vec<Mat2> {
        let id = [[ONE, ZERO], [ZERO, ONE]];
        let n = self.layout.n_qubits;
        let mut out = self.slots.last().map(|s| s.start.clone()).unwrap_or_else(|| vec![None; n]);
        if let Some(last) = self.slots.last() {
            for (q, psi, sh) in &last.pulses {
                let l = inplane_rotation(sh.phi0(), *psi);
                out[*q] = Some(match out[*q] {
                    Some(g) => mat2_mul(&l, &g),
                    None => l,
                });
            }
        }
        out.into_iter().map(|g| g.unwrap_or(id)).collect()
    }

    /// Integration segments of a slot in fractional time: split at the center
    /// when a delta pulse fires there.
    fn segments(&self, slot: usize) -> &'static [(f64, f64, u8)] {
        if self.slots[slot].impulsive {
            &[(0.0, 0.5, 0), (0.5, 1.0, 1)]
        } else {
            &[(0.0, 1.0, 2)]
        }
    }

    /// Writes `K = P^dagger H_S P` at fractional time `x` of `slot` into `out`.
    /// `side` selects the delta-pulse branch: 0 before the kick, 1 after, 2 no kick.
    fn kernel(&self, h_s: &ComplexMatrix, slot: usize, x: f64, side: u8, out: &mut ComplexMatrix) {
        let sp = &self.slots[slot];
        out.copy_from(h_s);
        for q in 0..self.layout.n_qubits {
            let pulse = sp.pulses.iter().find(|(pq, _, _)| *pq == q);
            let m = match (pulse, sp.start[q]) {
                (None, None) => continue,
                (None, Some(g)) => g,
                (Some((_, psi, sh)), g) => {
                    let phi = match (sh, side) {
                        (Shape::Hard(_), 0) => 0.0,
                        (Shape::Hard(h), _) => h.phi0,
                        _ => sh.phase_frac(x),
                    };
                    let l = inplane_rotation(phi, *psi);
                    match g {
                        Some(g) => mat2_mul(&l, &g),
                        None => l,
                    }
                }
            };
            let stride = self.layout.stride(q);
            out.apply_left(&mat2_adjoint(&m), stride);
            out.apply_right(&m, stride);
        }
    }

    /// Drives `stepper` across all slots with `steps` RK4 steps per slot.
    fn integrate(&self, h_s: &ComplexMatrix, steps: usize, stepper: &mut impl Stepper) {
        let dim = h_s.dim();
        let (mut k1, mut k2, mut k3) = (ComplexMatrix::zeros(dim), ComplexMatrix::zeros(dim), ComplexMatrix::zeros(dim));
        for slot in 0..self.slots.len() {
            let segs = self.segments(slot);
            let n_seg = steps / segs.len();
            for &(a, b, side) in segs {
                let dx = (b - a) / n_seg as f64;
                let h = dx * self.tau_p;
                self.kernel(h_s, slot, a, side, &mut k1);
                for j in 0..n_seg {
                    let x = a + j as f64 * dx;
                    self.kernel(h_s, slot, x + 0.5 * dx, side, &mut k2);
                    let x_end = if j + 1 == n_seg { b } else { x + dx };
                    self.kernel(h_s, slot, x_end, side, &mut k3);
                    stepper.step(&k1, &k2, &k3, h);
                    std::mem::swap(&mut k1, &mut k3);
                }
            }
        }
    }
}

trait Stepper {
    fn step(&mut self, k1: &ComplexMatrix, k2: &ComplexMatrix, k3: &ComplexMatrix, h: f64);
}

/// RK4 on the hierarchy `R_k' = -i K R_{k-1}`, `R_0 = 1`.
struct Hierarchy {
    r: Vec<ComplexMatrix>,
    a: Vec<ComplexMatrix>,
    b: Vec<ComplexMatrix>,
    c: Vec<ComplexMatrix>,
    d: Vec<ComplexMatrix>,
    tmp: ComplexMatrix,
}

impl Hierarchy {
    fn new(dim: usize, k: usize) -> Self {
        let z = || vec![ComplexMatrix::zeros(dim); k];
        Self { r: z(), a: z(), b: z(), c: z(), d: z(), tmp: ComplexMatrix::zeros(dim) }
    }
}

const MINUS_I: C64 = C64::new(0.0, -1.0);

impl Stepper for Hierarchy {
    fn step(&mut self, k1: &ComplexMatrix, k2: &ComplexMatrix, k3: &ComplexMatrix, h: f64) {
        let kk = self.r.len();
        if kk == 0 {
            return;
        }
        // order 1: R_0 = 1 is constant
        self.a[0].copy_from(k1);
        self.a[0].scale_mut(MINUS_I);
        self.b[0].copy_from(k2);
        self.b[0].scale_mut(MINUS_I);
        self.c[0].copy_from(&self.b[0]);
        self.d[0].copy_from(k3);
        self.d[0].scale_mut(MINUS_I);
        for k in 1..kk {
            let (lo_a, hi_a) = self.a.split_at_mut(k);
            let (lo_b, hi_b) = self.b.split_at_mut(k);
            let (lo_c, hi_c) = self.c.split_at_mut(k);
            let prev = &self.r[k - 1];

            hi_a[0].fill_zero();
            k1.mul_acc(prev, MINUS_I, &mut hi_a[0]);

            self.tmp.copy_from(prev);
            self.tmp.axpy(C64::new(0.5 * h, 0.0), &lo_a[k - 1]);
            hi_b[0].fill_zero();
            k2.mul_acc(&self.tmp, MINUS_I, &mut hi_b[0]);

            self.tmp.copy_from(prev);
            self.tmp.axpy(C64::new(0.5 * h, 0.0), &lo_b[k - 1]);
            hi_c[0].fill_zero();
            k2.mul_acc(&self.tmp, MINUS_I, &mut hi_c[0]);

            self.tmp.copy_from(prev);
            self.tmp.axpy(C64::new(h, 0.0), &lo_c[k - 1]);
            self.d[k].fill_zero();
            k3.mul_acc(&self.tmp, MINUS_I, &mut self.d[k]);
        }
        // update only after all stages used the old R values
        for k in 0..kk {
            let r = &mut self.r[k];
            r.axpy(C64::new(h / 6.0, 0.0), &self.a[k]);
            r.axpy(C64::new(h / 3.0, 0.0), &self.b[k]);
            r.axpy(C64::new(h / 3.0, 0.0), &self.c[k]);
            r.axpy(C64::new(h / 6.0, 0.0), &self.d[k]);
        }
    }
}

/// RK4 on the full interaction-frame evolution `W' = -i K W`.
struct Full {
    w: ComplexMatrix,
    a: ComplexMatrix,
    b: ComplexMatrix,
    c: ComplexMatrix,
    d: ComplexMatrix,
    tmp: ComplexMatrix,
}

impl Stepper for Full {
    fn step(&mut self, k1: &ComplexMatrix, k2: &ComplexMatrix, k3: &ComplexMatrix, h: f64) {
        self.a.fill_zero();
        k1.mul_acc(&self.w, MINUS_I, &mut self.a);
        self.tmp.copy_from(&self.w);
        self.tmp.axpy(C64::new(0.5 * h, 0.0), &self.a);
        self.b.fill_zero();
        k2.mul_acc(&self.tmp, MINUS_I, &mut self.b);
        self.tmp.copy_from(&self.w);
        self.tmp.axpy(C64::new(0.5 * h, 0.0), &self.b);
        self.c.fill_zero();
        k2.mul_acc(&self.tmp, MINUS_I, &mut self.c);
        self.tmp.copy_from(&self.w);
        self.tmp.axpy(C64::new(h, 0.0), &self.c);
        self.d.fill_zero();
        k3.mul_acc(&self.tmp, MINUS_I, &mut self.d);
        self.w.axpy(C64::new(h / 6.0, 0.0), &self.a);
        self.w.axpy(C64::new(h / 3.0, 0.0), &self.b);
        self.w.axpy(C64::new(h / 3.0, 0.0), &self.c);
        self.w.axpy(C64::new(h / 6.0, 0.0), &self.d);
    }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps < MIN_STEPS || !steps.is_power_of_two() {
        return input(format!("steps per slot must be a power of two >= {MIN_STEPS}, got {steps}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// public drivers

/// Integrates `R_1..R_K` with `steps` RK4 steps per slot (no convergence check).
pub fn propagate(schedule: &ControlSchedule, h_s: &ComplexMatrix, k: usize, steps: usize) -> Result<Propagator> {
    check_steps(steps)?;
    schedule.validate_hamiltonian(h_s)?;
    let plan = Plan::new(schedule);
    let mut hier = Hierarchy::new(h_s.dim(), k);
    plan.integrate(h_s, steps, &mut hier);
    Ok(Propagator {
        u0: schedule.control_unitary(),
        r: hier.r,
        k_max: k,
        steps,
        tau_c: schedule.tau_c(),
        tau_p: schedule.tau_p,
        h_norm: h_s.normalized_norm(),
        error_estimate: None,
    })
}

/// Like [`propagate`], doubling the step count until the relative norms of
/// successive results agree to `tol` (or to `tol` times the norm itself when
/// that exceeds one), then returning the Richardson-extrapolated corrections.
pub fn propagate_checked(
    schedule: &ControlSchedule,
    h_s: &ComplexMatrix,
    k: usize,
    steps: usize,
    tol: f64,
) -> Result<Propagator> {
    let mut coarse = propagate(schedule, h_s, k, steps)?;
    let scale = coarse.h_norm * coarse.tau_p;
    loop {
        let fine = propagate(schedule, h_s, k, 2 * coarse.steps)?;
        let r: Vec<ComplexMatrix> =
            coarse.r.iter().zip(&fine.r).map(|(c, f)| (f * (16.0 / 15.0)) - (c * (1.0 / 15.0))).collect();
        let rel = |m: &ComplexMatrix, i: usize| {
            if scale == 0.0 {
                m.normalized_norm()
            } else {
                m.normalized_norm() / scale.powi(i as i32 + 1)
            }
        };
        let errs: Vec<f64> =
            coarse.r.iter().zip(&fine.r).enumerate().map(|(i, (c, f))| rel(&(f - c), i) / 15.0).collect();
        let ok = errs.iter().zip(&r).enumerate().all(|(i, (e, m))| *e < tol * rel(m, i).max(1.0));
        if ok {
            return Ok(Propagator { r, error_estimate: Some(errs), ..fine });
        }
        if fine.steps >= MAX_STEPS {
            let worst = errs.iter().cloned().fold(0.0, f64::max);
            return Err(Error::Numeric(format!(
                "TDPT corrections not converged at {} steps per slot: error {worst:e}",
                fine.steps
            )));
        }
        coarse = fine;
    }
}

/// Full unitary `U = U0 W` over the schedule with `steps` RK4 steps per slot.
pub fn evolve_full(schedule: &ControlSchedule, h_s: &ComplexMatrix, steps: usize) -> Result<ComplexMatrix> {
    check_steps(steps)?;
    schedule.validate_hamiltonian(h_s)?;
    let plan = Plan::new(schedule);
    let dim = h_s.dim();
    let mut full = Full {
        w: ComplexMatrix::identity(dim),
        a: ComplexMatrix::zeros(dim),
        b: ComplexMatrix::zeros(dim),
        c: ComplexMatrix::zeros(dim),
        d: ComplexMatrix::zeros(dim),
        tmp: ComplexMatrix::zeros(dim),
    };
    plan.integrate(h_s, steps, &mut full);
    Ok(schedule.control_unitary().matmul(&full.w))
}

/// Richardson-extrapolated full unitary from `steps` and `2 steps`, with the
/// normalized difference used as an error estimate.
pub fn evolve_full_extrapolated(
    schedule: &ControlSchedule,
    h_s: &ComplexMatrix,
    steps: usize,
) -> Result<(ComplexMatrix, f64)> {
    let coarse = evolve_full(schedule, h_s, steps)?;
    let fine = evolve_full(schedule, h_s, 2 * steps)?;
    let err = (&fine - &coarse).normalized_norm() / 15.0;
    Ok(((&fine * (16.0 / 15.0)) - (&coarse * (1.0 / 15.0)), err))
}

/// Average-Hamiltonian terms from the TDPT corrections.
#[derive(Clone, Debug)]
pub struct MagnusTerms {
    pub h0: ComplexMatrix,
    pub h1: ComplexMatrix,
    pub h2: Option<ComplexMatrix>,
}

/// `-i H0 tau_c = R1`, `-i H1 tau_c = R2 - R1^2/2`,
/// `-i H2 tau_c = R3 - (R1 R2 + R2 R1)/2 + R1^3/3`.
pub fn magnus_terms(p: &Propagator, tau_c: f64) -> Result<MagnusTerms> {
    if p.k_max < 2 {
        return input(format!("magnus_terms needs K >= 2, propagator has K = {}", p.k_max));
    }
    if !(tau_c > 0.0) {
        return input("tau_c must be positive");
    }
    let to_h = |m: ComplexMatrix| m.scaled(I / tau_c);
    let r1 = &p.r[0];
    let r2 = &p.r[1];
    let r1sq = r1.matmul(r1);
    let h0 = to_h(r1.clone());
    let h1 = to_h(r2 - &(&r1sq * 0.5));
    let h2 = if p.k_max >= 3 {
        let r3 = &p.r[2];
        let anti = r1.anticommutator(r2);
        Some(to_h(&(r3 - &(&anti * 0.5)) + &(&r1sq.matmul(r1) * (1.0 / 3.0))))
    } else {
        None
    };
    Ok(MagnusTerms { h0, h1, h2 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    /// Number of leading vanishing corrections `R_1..R_K`.
    pub order: usize,
    /// All computed corrections vanish; the true order is at least `order`.
    pub saturated: bool,
    /// `||R_k|| / (||H_S|| tau_p)^k` for `k = 1..K_max`.
    pub ratios: Vec<f64>,
}

/// Largest `K` such that `R_1..R_K` all vanish relative to `(||H_S|| tau_p)^k`.
pub fn refocusing_order(p: &Propagator, rel_tol: f64) -> OrderReport {
    let ratios = p.relative_norms();
    let order = ratios.iter().take_while(|&&r| r < rel_tol).count();
    OrderReport { order, saturated: order == ratios.len(), ratios }
}

/// Brute-force first two average-Hamiltonian terms by nested Simpson
/// quadrature of `K(t)`; limited to dimension 8.
pub fn magnus_direct_oracle(
    schedule: &ControlSchedule,
    h_s: &ComplexMatrix,
    panels: usize,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if schedule.dim() > 8 {
        return input(format!("direct Magnus oracle limited to dimension 8, got {}", schedule.dim()));
    }
    if panels < 16 || panels % 4 != 0 {
        return input("panels per segment must be a multiple of 4 and at least 16");
    }
    schedule.validate_hamiltonian(h_s)?;
    let plan = Plan::new(schedule);
    let dim = h_s.dim();
    // running integral C(t) = int_0^t K, and int dt' [K(t'), C(t')]
    let mut c_run = ComplexMatrix::zeros(dim);
    let mut outer = ComplexMatrix::zeros(dim);
    let mut k_buf = ComplexMatrix::zeros(dim);
    for slot in 0..plan.slots.len() {
        for &(a, b, side) in plan.segments(slot) {
            let dx = (b - a) / panels as f64;
            let h = dx * plan.tau_p;
            let ks: Vec<ComplexMatrix> = (0..=panels)
                .map(|j| {
                    plan.kernel(h_s, slot, a + j as f64 * dx, side, &mut k_buf);
                    k_buf.clone()
                })
                .collect();
            let seg_start = c_run.clone();
            let mut cum = seg_start.clone();
            let half = panels / 2;
            for m in 0..=half {
                let j = 2 * m;
                if m > 0 {
                    cum.axpy(C64::new(h / 3.0, 0.0), &ks[j - 2]);
                    cum.axpy(C64::new(4.0 * h / 3.0, 0.0), &ks[j - 1]);
                    cum.axpy(C64::new(h / 3.0, 0.0), &ks[j]);
                }
                let w = if m == 0 || m == half { 1.0 } else if m % 2 == 1 { 4.0 } else { 2.0 };
                outer.axpy(C64::new(w * 2.0 * h / 3.0, 0.0), &ks[j].commutator(&cum));
            }
            c_run = cum;
        }
    }
    let tau_c = schedule.tau_c();
    let h0 = c_run.scaled(C64::new(1.0 / tau_c, 0.0));
    // H1 tau_c = -i/2 int dt' [K(t'), C(t')]
    let h1 = outer.scaled(C64::new(0.0, -0.5 / tau_c));
    Ok((h0, h1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sigma_x, sigma_y, sigma_z};
    use crate::shapes::{library, HardPulse};
    use std::f64::consts::PI;

    fn chem_shift(delta: f64) -> ComplexMatrix {
        sigma_z().scaled(C64::new(0.5 * delta, 0.0))
    }

    #[test]
    fn spin_echo_is_identity() {
        let mut s = ControlSchedule::new(1, 1.0, 2).unwrap();
        s.add_pulse(0, 0, 0.0, HardPulse::new(PI).into()).unwrap();
        s.add_pulse(0, 1, 0.0, HardPulse::new(PI).into()).unwrap();
        let u = evolve_full(&s, &chem_shift(0.7), 256).unwrap();
        // two pi_x kicks give -1
        assert!((&u + &ComplexMatrix::identity(2)).max_abs() < 1e-10);
    }

    #[test]
    fn zero_hamiltonian_gives_zero_corrections() {
        let s = ControlSchedule::single(library::shape("S1(180)").unwrap(), 0.3);
        let p = propagate(&s, &ComplexMatrix::zeros(2), 3, 64).unwrap();
        assert!(p.r.iter().all(|r| r.max_abs() == 0.0));
        let rot = ComplexMatrix::from_mat2(&inplane_rotation(PI, 0.3));
        assert!(p.u0.max_abs_diff(&rot) < 1e-14);
        assert!(refocusing_order(&p, DEFAULT_REL_TOL).saturated);
    }

    #[test]
    fn hierarchy_reassembles_full_evolution() {
        let s = ControlSchedule::single(library::shape("S1(90)").unwrap(), 0.0);
        let h = &chem_shift(0.05) + &sigma_x().scaled(C64::new(0.02, 0.0));
        let p = propagate(&s, &h, 6, 256).unwrap();
        let mut w = ComplexMatrix::identity(2);
        for r in &p.r {
            w += r;
        }
        let u = evolve_full(&s, &h, 256).unwrap();
        assert!(p.u0.matmul(&w).max_abs_diff(&u) < 1e-10);
    }

    #[test]
    fn non_hermitian_rejected() {
        let s = ControlSchedule::single(HardPulse::new(PI).into(), 0.0);
        let bad = sigma_x().scaled(I);
        assert!(propagate(&s, &bad, 2, 64).is_err());
        assert!(propagate(&s, &sigma_x(), 2, 100).is_err());
    }

    #[test]
    fn overlapping_pulses_rejected() {
        let mut s = ControlSchedule::new(2, 1.0, 2).unwrap();
        s.add_pulse(0, 0, 0.0, HardPulse::new(PI).into()).unwrap();
        assert!(s.add_pulse(0, 0, 1.0, HardPulse::new(PI).into()).is_err());
        assert!(s.add_pulse(2, 0, 0.0, HardPulse::new(PI).into()).is_err());
    }

    #[test]
    fn q1_pi_is_second_order_refocusing() {
        let s = ControlSchedule::single(library::shape("Q1(180)").unwrap(), 0.0);
        let p = propagate_checked(&s, &chem_shift(1.0), 3, 256, 1e-9).unwrap();
        let rep = refocusing_order(&p, DEFAULT_REL_TOL);
        assert_eq!(rep.order, 2, "{:?}", rep.ratios);
    }

    #[test]
    fn hard_pi_has_vanishing_zeroth_order() {
        let s = ControlSchedule::single(HardPulse::new(PI).into(), 0.0);
        let p = propagate(&s, &chem_shift(1.0), 2, 64).unwrap();
        let m = magnus_terms(&p, 1.0).unwrap();
        assert!(m.h0.max_abs() < 1e-12);
    }

    #[test]
    fn magnus_terms_need_two_orders() {
        let s = ControlSchedule::single(HardPulse::new(PI).into(), 0.0);
        let p = propagate(&s, &chem_shift(1.0), 1, 64).unwrap();
        assert!(magnus_terms(&p, 1.0).is_err());
    }

    #[test]
    fn oracle_matches_tdpt_on_a_two_slot_schedule() {
        let mut s = ControlSchedule::new(1, 1.0, 2).unwrap();
        s.add_pulse(0, 0, 0.0, library::shape("S1(90)").unwrap()).unwrap();
        s.add_pulse(0, 1, PI / 2.0, HardPulse::new(PI).into()).unwrap();
        let h = &(&chem_shift(0.3) + &sigma_y().scaled(C64::new(0.2, 0.0))) + &sigma_x().scaled(C64::new(-0.1, 0.0));
        let p = propagate_checked(&s, &h, 2, 256, 1e-10).unwrap();
        let m = magnus_terms(&p, s.tau_c()).unwrap();
        let (h0, h1) = magnus_direct_oracle(&s, &h, 512).unwrap();
        assert!(m.h0.max_abs_diff(&h0) < 1e-8);
        assert!(m.h1.max_abs_diff(&h1) < 1e-8);
        assert!(m.h1.is_hermitian(1e-8));
    }
}
