//! Synthesis of self-refocusing Fourier shapes.
//!
//! The target function is `f_K = sqrt(sum_{k<=K} tr R_k^dagger R_k + p) +
//! eps sum_m m^2 A_m^2` for a pulse under `H_S = (Delta/2) Z` with
//! `Delta tau_p = 1`, where `p` collects squared amplitude sensitivities of
//! protected coefficients. The endpoint constraints fix the last `L`
//! coefficients. Minimization runs simulated annealing, then steepest descent,
//! then a damped Gauss-Newton polish on the residual vector which drives the
//! square-root term to zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::sigma_z;
use crate::qdyn::{self, ControlSchedule};
use crate::shapes::{fmt_degrees, sensitivity, shape_params, PulseShape, Shape, DEFAULT_QUAD_POINTS};

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_STEPS: usize = 1024;
/// Convergence bar on the square-root term.
pub const TARGET_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Protection {
    /// `d upsilon / d f = 0`.
    #[serde(default)]
    pub dupsilon: bool,
    /// `d alpha / d f = 0`.
    #[serde(default)]
    pub dalpha: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub t0: f64,
    pub cooling: f64,
    pub t_min: f64,
    pub proposals_per_temperature: usize,
    pub sigma: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self { t0: 1.0, cooling: 0.95, t_min: 1e-4, proposals_per_temperature: 200, sigma: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    /// Rotation angle in radians.
    pub phi0: f64,
    /// Target refocusing order.
    pub k: usize,
    /// Endpoint constraint order.
    pub l: usize,
    /// Number of harmonics.
    pub m: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub protect: Protection,
    #[serde(default)]
    pub seed: u64,
    /// Maximum number of objective evaluations.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub schedule: AnnealSchedule,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_budget() -> usize {
    1_000_000
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

impl OptimizationProblem {
    pub fn new(phi0: f64, k: usize, l: usize, m: usize) -> Self {
        Self {
            phi0,
            k,
            l,
            m,
            epsilon: DEFAULT_EPSILON,
            protect: Protection::default(),
            seed: 0,
            budget: default_budget(),
            steps: DEFAULT_STEPS,
            schedule: AnnealSchedule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.k) {
            return input(format!("target order must be 1 or 2, got {}", self.k));
        }
        if self.m < self.l || self.m == 0 {
            return input(format!("need M >= max(L, 1) harmonics, got M={} L={}", self.m, self.l));
        }
        if !(self.epsilon > 0.0) {
            return input("epsilon must be positive");
        }
        if self.budget == 0 {
            return input("budget must be positive");
        }
        if !(self.phi0.is_finite() && self.phi0 != 0.0) {
            return input("rotation angle must be finite and nonzero");
        }
        let s = &self.schedule;
        if !(s.t0 > 0.0 && s.cooling > 0.0 && s.cooling < 1.0 && s.t_min > 0.0 && s.sigma > 0.0) {
            return input("invalid annealing schedule");
        }
        Ok(())
    }

    pub fn n_free(&self) -> usize {
        self.m - self.l
    }

    pub fn label(&self) -> String {
        format!("K{}L{}M{}({})", self.k, self.l, self.m, fmt_degrees(self.phi0))
    }
}

/// Solves the endpoint constraints `A0 delta_{l0} + sum_m m^{2l} A_m = 0`,
/// `l < L`, for the last `L` coefficients.
pub fn apply_constraints(problem: &OptimizationProblem, free: &[f64]) -> Result<Vec<f64>> {
    let (m, l) = (problem.m, problem.l);
    if free.len() != m - l {
        return input(format!("expected {} free coefficients, got {}", m - l, free.len()));
    }
    let mut coeffs = free.to_vec();
    if l == 0 {
        return Ok(coeffs);
    }
    let a0 = problem.phi0 / std::f64::consts::TAU;
    let fixed: Vec<f64> = ((m - l + 1)..=m).map(|j| j as f64).collect();
    let mut a = vec![vec![0.0; l]; l];
    let mut b = vec![0.0; l];
    for row in 0..l {
        for (c, &j) in fixed.iter().enumerate() {
            a[row][c] = j.powi(2 * row as i32);
        }
        let head = if row == 0 { a0 } else { 0.0 };
        b[row] = -head - free.iter().enumerate().map(|(i, x)| ((i + 1) as f64).powi(2 * row as i32) * x).sum::<f64>();
    }
    let sol = solve(a, b).ok_or_else(|| Error::Numeric("singular endpoint constraint system".into()))?;
    coeffs.extend(sol);
    Ok(coeffs)
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn build_shape(problem: &OptimizationProblem, free: &[f64]) -> Result<PulseShape> {
    let coeffs = apply_constraints(problem, free)?;
    let mut shape = PulseShape::new(problem.label(), problem.phi0, coeffs, problem.l)?;
    shape.claimed_order = Some(problem.k);
    Ok(shape)
}

/// `d upsilon/df = -<varphi sin varphi>` and `d alpha/df` by Simpson quadrature
/// of the scaled phase.
fn amplitude_derivatives(shape: &PulseShape, n: usize) -> (f64, f64) {
    let s: Shape = shape.clone().into();
    let half = 0.5 * shape.phi0;
    let h = 1.0 / n as f64;
    let w = |i: usize| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
    let phis: Vec<f64> = (0..=n).map(|i| s.phase_frac(i as f64 * h) - half).collect();
    let dups = -(0..=n).map(|i| w(i) * phis[i] * phis[i].sin()).sum::<f64>() * h / 3.0;
    // alpha = (sc - cs)/2 with x<y nesting; differentiate the integrand in f
    let (mut cum_c, mut cum_s, mut cum_dc, mut cum_ds) = (0.0, 0.0, 0.0, 0.0);
    let (mut prev_c, mut prev_s, mut prev_dc, mut prev_ds) = (0.0, 0.0, 0.0, 0.0);
    let mut acc = 0.0;
    for (i, &p) in phis.iter().enumerate() {
        let (sn, cs) = p.sin_cos();
        let (dc, ds) = (-p * sn, p * cs);
        if i > 0 {
            cum_c += 0.5 * h * (prev_c + cs);
            cum_s += 0.5 * h * (prev_s + sn);
            cum_dc += 0.5 * h * (prev_dc + dc);
            cum_ds += 0.5 * h * (prev_ds + ds);
        }
        // d/df [s(y) C(y) - c(y) S(y)]
        let g = ds * cum_c + sn * cum_dc - dc * cum_s - cs * cum_ds;
        acc += w(i) * g;
        prev_c = cs;
        prev_s = sn;
        prev_dc = dc;
        prev_ds = ds;
    }
    let dalpha = 0.5 * acc * h / 3.0;
    (dups, dalpha)
}

/// Residual vector whose norm is the square-root term of the objective.
fn residuals(problem: &OptimizationProblem, shape: &PulseShape) -> Result<Vec<f64>> {
    let sched = ControlSchedule::single(shape.clone().into(), 0.0);
    let h = sigma_z() * 0.5;
    let p = qdyn::propagate(&sched, &h, problem.k, problem.steps)?;
    let mut r = Vec::with_capacity(8 * problem.k + 2);
    for rk in &p.r {
        for z in rk.as_slice() {
            r.push(z.re);
            r.push(z.im);
        }
    }
    if problem.protect.dupsilon || problem.protect.dalpha {
        let (du, da) = amplitude_derivatives(shape, 1024);
        if problem.protect.dupsilon {
            r.push(du);
        }
        if problem.protect.dalpha {
            r.push(da);
        }
    }
    Ok(r)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The target function `f_K` at the given free coefficients.
pub fn objective(problem: &OptimizationProblem, free: &[f64]) -> Result<f64> {
    Ok(objective_parts(problem, free)?.0)
}

/// `(f_K, square-root term, spectral term)`.
pub fn objective_parts(problem: &OptimizationProblem, free: &[f64]) -> Result<(f64, f64, f64)> {
    let shape = build_shape(problem, free)?;
    let first = norm(&residuals(problem, &shape)?);
    let spectral = problem.epsilon * shape.harmonic_weight();
    Ok((first + spectral, first, spectral))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub upsilon: f64,
    pub alpha: f64,
    pub dupsilon: Option<f64>,
    /// `||R_k|| / (||H_S|| tau_p)^k` from a step-doubled propagation.
    pub ratios: Vec<f64>,
    pub order: usize,
    pub constraint_residual: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub converged: bool,
    pub objective: f64,
    pub first_term: f64,
    pub spectral_term: f64,
    pub evaluations: usize,
    pub coeffs: Vec<f64>,
    pub shape: PulseShape,
    pub certification: Certification,
}

struct Counter<'a> {
    problem: &'a OptimizationProblem,
    evals: usize,
}

impl Counter<'_> {
    fn f(&mut self, x: &[f64]) -> Result<f64> {
        self.evals += 1;
        objective(self.problem, x)
    }

    fn exhausted(&self) -> bool {
        self.evals >= self.problem.budget
    }
}

fn anneal(c: &mut Counter, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64)> {
    let p = c.problem;
    let n = p.n_free();
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut fx = c.f(&x)?;
    let (mut best, mut fbest) = (x.clone(), fx);
    let step = Normal::new(0.0, p.schedule.sigma).map_err(|e| Error::Input(e.to_string()))?;
    let mut t = p.schedule.t0;
    while t > p.schedule.t_min && !c.exhausted() {
        for _ in 0..p.schedule.proposals_per_temperature {
            if c.exhausted() {
                break;
            }
            let y: Vec<f64> = x.iter().map(|v| v + step.sample(rng)).collect();
            let fy = c.f(&y)?;
            if fy <= fx || rng.random::<f64>() < (-(fy - fx) / t).exp() {
                x = y;
                fx = fy;
                if fx < fbest {
                    best.clone_from(&x);
                    fbest = fx;
                }
            }
        }
        t *= p.schedule.cooling;
    }
    Ok((best, fbest))
}

const GRAD_H: f64 = 1e-5;

fn gradient(c: &mut Counter, x: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + GRAD_H;
        let fp = c.f(&y)?;
        y[i] = x[i] - GRAD_H;
        let fm = c.f(&y)?;
        y[i] = x[i];
        g[i] = (fp - fm) / (2.0 * GRAD_H);
    }
    Ok(g)
}

/// Steepest descent with Armijo backtracking, stopped at `|grad f| < 1e-10`,
/// on a stalled line search, or when the budget runs out.
fn descend(c: &mut Counter, mut x: Vec<f64>, mut fx: f64, max_iter: usize) -> Result<(Vec<f64>, f64)> {
    let mut step = 1e-2;
    for _ in 0..max_iter {
        if c.exhausted() {
            break;
        }
        let g = gradient(c, &x)?;
        let gn = norm(&g);
        if gn < 1e-10 {
            break;
        }
        let mut accepted = false;
        while step > 1e-14 && !c.exhausted() {
            let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b / gn).collect();
            let fy = c.f(&y)?;
            if fy <= fx - 1e-4 * step * gn {
                x = y;
                fx = fy;
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((x, fx))
}

/// Damped Gauss-Newton on the residual vector; the small damping selects the
/// near-minimal step along the solution manifold.
fn polish(c: &mut Counter, mut x: Vec<f64>, max_iter: usize) -> Result<Vec<f64>> {
    let p = c.problem;
    let n = x.len();
    let res = |x: &[f64]| -> Result<Vec<f64>> { residuals(p, &build_shape(p, x)?) };
    let mut r = res(&x)?;
    for _ in 0..max_iter {
        if norm(&r) < 1e-13 || c.exhausted() {
            break;
        }
        let mut jac = vec![vec![0.0; n]; r.len()];
        let mut y = x.clone();
        for i in 0..n {
            y[i] = x[i] + GRAD_H;
            let rp = res(&y)?;
            y[i] = x[i] - GRAD_H;
            let rm = res(&y)?;
            y[i] = x[i];
            c.evals += 2;
            for (row, (a, b)) in jac.iter_mut().zip(rp.iter().zip(&rm)) {
                row[i] = (a - b) / (2.0 * GRAD_H);
            }
        }
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..n {
                jtr[a] -= row[a] * ri;
                for b in 0..n {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let scale = (0..n).map(|i| jtj[i][i]).fold(0.0, f64::max).max(1e-300);
        for (i, row) in jtj.iter_mut().enumerate() {
            row[i] += 1e-10 * scale;
        }
        let Some(dx) = solve(jtj, jtr) else { break };
        let mut lambda = 1.0;
        let r0 = norm(&r);
        loop {
            let y: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + lambda * d).collect();
            let ry = res(&y)?;
            c.evals += 1;
            if norm(&ry) < r0 {
                x = y;
                r = ry;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return Ok(x);
            }
        }
    }
    Ok(x)
}

/// Checks a shape for the properties a problem asks for: vanishing `R_k`
/// (`k <= K`) at a converged step count, endpoint constraints and, if
/// protected, a vanishing `d upsilon/df`.
pub fn certify(shape: &PulseShape, k: usize, protect: Protection) -> Result<Certification> {
    let s: Shape = shape.clone().into();
    let params = shape_params(&s, DEFAULT_QUAD_POINTS)?;
    let sched = ControlSchedule::single(s.clone(), 0.0);
    let h = sigma_z() * 0.5;
    let p = qdyn::propagate_checked(&sched, &h, k, 256, 1e-10)?;
    let rep = qdyn::refocusing_order(&p, 1e-6);
    let constraint_residual = shape.constraint_residuals().iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let dupsilon = if protect.dupsilon { Some(sensitivity(&s, 1e-3)?.dupsilon) } else { None };
    let passed = rep.order >= k && constraint_residual < 1e-6 && dupsilon.is_none_or(|d| d.abs() < 1e-6);
    Ok(Certification {
        upsilon: params.upsilon,
        alpha: params.alpha,
        dupsilon,
        ratios: rep.ratios,
        order: rep.order,
        constraint_residual,
        passed,
    })
}

/// Runs one seeded annealing chain followed by local refinement. Running out
/// of budget yields a report with `converged == false`.
pub fn synthesize(problem: &OptimizationProblem) -> Result<SynthesisReport> {
    problem.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let mut c = Counter { problem, evals: 0 };
    let (x, fx) = anneal(&mut c, &mut rng)?;
    let (x, _) = descend(&mut c, x, fx, 200)?;
    let x = polish(&mut c, x, 50)?;
    let (objective, first_term, spectral_term) = objective_parts(problem, &x)?;
    let shape = build_shape(problem, &x)?;
    let certification = certify(&shape, problem.k, problem.protect)?;
    Ok(SynthesisReport {
        converged: first_term < TARGET_TOL && certification.passed,
        objective,
        first_term,
        spectral_term,
        evaluations: c.evals,
        coeffs: shape.coeffs.clone(),
        shape,
        certification,
    })
}

/// Smallest `M` in `m_lo..=m_hi` for which any of `seeds` converges.
pub fn minimum_harmonics(template: &OptimizationProblem, m_lo: usize, m_hi: usize, seeds: &[u64]) -> Result<Option<usize>> {
    for m in m_lo.max(template.l).max(1)..=m_hi {
        for &seed in seeds {
            let p = OptimizationProblem { m, seed, ..template.clone() };
            if synthesize(&p)?.converged {
                return Ok(Some(m));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::library;
    use std::f64::consts::PI;

    fn free_part(label: &str, l: usize) -> (OptimizationProblem, Vec<f64>) {
        let s = library::get(label).unwrap();
        let m = s.coeffs.len();
        let p = OptimizationProblem::new(s.phi0, 1, l, m);
        (p, s.coeffs[..m - l].to_vec())
    }

    #[test]
    fn constraints_reproduce_table_coefficients() {
        let s = library::get("S2(180)").unwrap();
        let (p, free) = free_part("S2(180)", s.constraint_order);
        let full = apply_constraints(&p, &free).unwrap();
        for (a, b) in full.iter().zip(&s.coeffs) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn trivial_constraint_cases() {
        let p = OptimizationProblem::new(PI, 1, 0, 3);
        assert_eq!(apply_constraints(&p, &[0.1, 0.2, 0.3]).unwrap(), vec![0.1, 0.2, 0.3]);
        let p = OptimizationProblem::new(PI, 1, 1, 1);
        assert!((apply_constraints(&p, &[]).unwrap()[0] + 0.5).abs() < 1e-15);
        assert!(apply_constraints(&p, &[1.0]).is_err());
    }

    #[test]
    fn q1_objective_first_term_vanishes() {
        let s = library::get("Q1(180)").unwrap();
        let (mut p, free) = free_part("Q1(180)", s.constraint_order);
        p.k = 2;
        let (_, first, _) = objective_parts(&p, &free).unwrap();
        assert!(first < 1e-7, "{first}");
    }

    #[test]
    fn square_pulse_is_not_refocusing() {
        let p = OptimizationProblem::new(PI, 1, 0, 1);
        assert!(objective(&p, &[0.0]).unwrap() > 0.1);
    }

    #[test]
    fn spectral_term_of_s1() {
        let s = library::get("S1(180)").unwrap();
        let (p, free) = free_part("S1(180)", s.constraint_order);
        let (_, _, spec) = objective_parts(&p, &free).unwrap();
        let expected = 1e-4 * s.harmonic_weight();
        assert!((spec - expected).abs() < 1e-12);
        assert!((spec / 1e-4 - 2.8316).abs() < 1e-3, "{}", spec / 1e-4);
    }

    #[test]
    fn upsilon_derivative_matches_stencil() {
        for label in ["S1(180)", "Q2(90)"] {
            let s = library::get(label).unwrap();
            let (du, da) = amplitude_derivatives(&s, 2048);
            let sens = sensitivity(&s.clone().into(), 1e-3).unwrap();
            assert!((du - sens.dupsilon).abs() < 1e-6, "{label}: {du} vs {}", sens.dupsilon);
            assert!((da - sens.dalpha).abs() < 1e-5, "{label}: {da} vs {}", sens.dalpha);
        }
    }

    #[test]
    fn validation() {
        let mut p = OptimizationProblem::new(PI, 3, 1, 4);
        assert!(p.validate().is_err());
        p.k = 1;
        p.m = 0;
        assert!(p.validate().is_err());
        p.m = 4;
        p.epsilon = 0.0;
        assert!(p.validate().is_err());
    }
}
