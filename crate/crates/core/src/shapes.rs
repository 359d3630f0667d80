//! Pulse envelopes and their second-order shape coefficients.
//!
//! A symmetric envelope `V(t)` on `[0, tau]` rotates a qubit about an in-plane
//! axis by the accumulated angle `phi(t) = int_0^t V`. Everything the
//! average-Hamiltonian analysis needs through second order is captured by
//! three dimensionless numbers computed from `phi`:
//!
//! * `upsilon = <cos(phi - phi0/2)>`
//! * `alpha = 1/(2 tau^2) int_0^tau dt' int_0^t' dt sin(phi(t') - phi(t))`
//! * `zeta = <(t/tau - 1/2) sin(phi - phi0/2)>`
//!
//! Time is normalized to the pulse duration internally; `tau` only affects
//! the `amplitude`/`phase` entry points.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::C64;

/// Default number of Simpson panels for shape integrals.
pub const DEFAULT_QUAD_POINTS: usize = 1 << 12;
const QUAD_CAP: usize = 1 << 16;
const QUAD_TARGET: f64 = 1e-8;
const QUAD_ACCEPT: f64 = 1e-6;

/// Fourier-parameterized symmetric envelope
/// `V(t) = Omega [A0 + sum_m A_m cos(m Omega t)]`, `Omega = 2 pi / tau`,
/// with `A0 = phi0 / (2 pi)` implied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub label: String,
    pub phi0: f64,
    pub tau: f64,
    pub coeffs: Vec<f64>,
    /// Number of endpoint constraints `L`: derivatives `0..2L-1` vanish at the ends.
    pub constraint_order: usize,
    /// Self-refocusing order the shape was designed for, if known.
    pub claimed_order: Option<usize>,
}

/// Truncated Gaussian `V ~ exp(-((t - tau/2) / (w tau))^2)` renormalized on `[0, tau]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianShape {
    pub phi0: f64,
    pub tau: f64,
    pub width: f64,
}

/// Instantaneous rotation at the center of an interval of length `tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardPulse {
    pub phi0: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Fourier(PulseShape),
    Gaussian(GaussianShape),
    Hard(HardPulse),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub upsilon: f64,
    pub alpha: f64,
    pub zeta: f64,
    pub zeta_c: f64,
    pub zeta_s: f64,
}

impl ShapeParams {
    pub fn new(phi0: f64, upsilon: f64, alpha: f64, zeta: f64) -> Self {
        let (s, c) = (0.5 * phi0).sin_cos();
        Self { upsilon, alpha, zeta, zeta_c: zeta * s, zeta_s: -zeta * c }
    }
}

/// Derivatives of the shape coefficients with respect to a uniform relative
/// amplitude error `f`, evaluated at `f = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSensitivity {
    pub dupsilon: f64,
    pub d2upsilon: f64,
    pub d3upsilon: f64,
    pub dalpha: f64,
    /// Difference between the 3- and 5-point estimates of `dupsilon`.
    pub truncation_error: f64,
}

/// The nine double averages `<f(phi(t')) g(phi(t))>` over `t < t'`, with
/// `f, g` drawn from `{1, cos, sin}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NineIntegrals {
    pub ee: f64,
    pub ec: f64,
    pub es: f64,
    pub ce: f64,
    pub se: f64,
    pub cc: f64,
    pub cs: f64,
    pub sc: f64,
    pub ss: f64,
}

impl PulseShape {
    /// Builds a shape and checks its endpoint constraints to `1e-6`.
    pub fn new(label: impl Into<String>, phi0: f64, coeffs: Vec<f64>, constraint_order: usize) -> Result<Self> {
        let shape = Self {
            label: label.into(),
            phi0,
            tau: 1.0,
            coeffs,
            constraint_order,
            claimed_order: None,
        };
        shape.check_constraints(1e-6)?;
        Ok(shape)
    }

    pub fn a0(&self) -> f64 {
        self.phi0 / TAU
    }

    pub fn omega(&self) -> f64 {
        TAU / self.tau
    }

    /// `A0 delta_{l0} + sum_m m^{2l} A_m` for `l = 0..L-1`.
    pub fn constraint_residuals(&self) -> Vec<f64> {
        (0..self.constraint_order)
            .map(|l| {
                let head = if l == 0 { self.a0() } else { 0.0 };
                head + self
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, a)| ((i + 1) as f64).powi(2 * l as i32) * a)
                    .sum::<f64>()
            })
            .collect()
    }

    pub fn check_constraints(&self, tol: f64) -> Result<()> {
        for (l, r) in self.constraint_residuals().into_iter().enumerate() {
            if r.abs() > tol {
                return input(format!("shape '{}' violates endpoint constraint l={l}: residual {r:e}", self.label));
            }
        }
        Ok(())
    }

    fn amplitude_frac(&self, x: f64) -> f64 {
        let mut v = self.a0();
        for (i, a) in self.coeffs.iter().enumerate() {
            v += a * ((i + 1) as f64 * TAU * x).cos();
        }
        TAU * v
    }

    fn phase_frac(&self, x: f64) -> f64 {
        let mut p = self.phi0 * x;
        for (i, a) in self.coeffs.iter().enumerate() {
            let m = (i + 1) as f64;
            p += a * (m * TAU * x).sin() / m;
        }
        p
    }

    /// Spectral weight `sum_m m^2 A_m^2`.
    pub fn harmonic_weight(&self) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, a)| ((i + 1) as f64 * a).powi(2)).sum()
    }
}

impl GaussianShape {
    pub fn new(phi0: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return input(format!("gaussian width must be positive, got {width}"));
        }
        Ok(Self { phi0, tau: 1.0, width })
    }

    fn half_mass(&self) -> f64 {
        libm::erf(0.5 / self.width)
    }

    fn amplitude_frac(&self, x: f64) -> f64 {
        let u = (x - 0.5) / self.width;
        self.phi0 * (-u * u).exp() / (self.width * PI.sqrt() * self.half_mass())
    }

    fn phase_frac(&self, x: f64) -> f64 {
        let h = self.half_mass();
        self.phi0 * (libm::erf((x - 0.5) / self.width) + h) / (2.0 * h)
    }
}

impl HardPulse {
    pub fn new(phi0: f64) -> Self {
        Self { phi0, tau: 1.0 }
    }

    fn phase_frac(&self, x: f64) -> f64 {
        if x < 0.5 {
            0.0
        } else if x > 0.5 {
            self.phi0
        } else {
            0.5 * self.phi0
        }
    }

    /// Closed-form coefficients of the centered delta pulse.
    pub fn params(&self) -> ShapeParams {
        let phi0 = self.phi0;
        ShapeParams::new(phi0, (0.5 * phi0).cos(), phi0.sin() / 8.0, 0.25 * (0.5 * phi0).sin())
    }
}

impl Shape {
    pub fn label(&self) -> String {
        match self {
            Shape::Fourier(p) => p.label.clone(),
            Shape::Gaussian(g) => format!("G{}({})", g.width, fmt_degrees(g.phi0)),
            Shape::Hard(h) => format!("hard({})", fmt_degrees(h.phi0)),
        }
    }

    pub fn phi0(&self) -> f64 {
        match self {
            Shape::Fourier(p) => p.phi0,
            Shape::Gaussian(g) => g.phi0,
            Shape::Hard(h) => h.phi0,
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            Shape::Fourier(p) => p.tau,
            Shape::Gaussian(g) => g.tau,
            Shape::Hard(h) => h.tau,
        }
    }

    pub fn is_impulsive(&self) -> bool {
        matches!(self, Shape::Hard(_))
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let tau = self.tau();
        if !(0.0..=tau).contains(&t) {
            return Err(Error::Domain { t, tau });
        }
        Ok(t / tau)
    }

    /// Envelope value `V(t)` in angular-frequency units.
    pub fn amplitude(&self, t: f64) -> Result<f64> {
        let x = self.check_time(t)?;
        match self {
            Shape::Fourier(p) => Ok(p.amplitude_frac(x) / p.tau),
            Shape::Gaussian(g) => Ok(g.amplitude_frac(x) / g.tau),
            Shape::Hard(_) => input("hard pulse has no pointwise amplitude"),
        }
    }

    /// Accumulated rotation angle `phi(t)`.
    pub fn phase(&self, t: f64) -> Result<f64> {
        let x = self.check_time(t)?;
        Ok(self.phase_frac(x))
    }

    /// `phi` at fractional time `x = t / tau`; no range check.
    #[inline]
    pub fn phase_frac(&self, x: f64) -> f64 {
        match self {
            Shape::Fourier(p) => p.phase_frac(x),
            Shape::Gaussian(g) => g.phase_frac(x),
            Shape::Hard(h) => h.phase_frac(x),
        }
    }

    /// Scales the envelope by `1 + f`, so the rotation angle becomes `(1 + f) phi0`.
    pub fn amplitude_scale(&self, f: f64) -> Result<Shape> {
        if !(f > -1.0) {
            return input(format!("amplitude scale requires f > -1, got {f}"));
        }
        let s = 1.0 + f;
        Ok(match self {
            Shape::Fourier(p) => Shape::Fourier(PulseShape {
                phi0: p.phi0 * s,
                coeffs: p.coeffs.iter().map(|a| a * s).collect(),
                ..p.clone()
            }),
            Shape::Gaussian(g) => Shape::Gaussian(GaussianShape { phi0: g.phi0 * s, ..g.clone() }),
            Shape::Hard(h) => Shape::Hard(HardPulse { phi0: h.phi0 * s, ..h.clone() }),
        })
    }
}

impl From<PulseShape> for Shape {
    fn from(p: PulseShape) -> Self {
        Shape::Fourier(p)
    }
}

impl From<GaussianShape> for Shape {
    fn from(g: GaussianShape) -> Self {
        Shape::Gaussian(g)
    }
}

impl From<HardPulse> for Shape {
    fn from(h: HardPulse) -> Self {
        Shape::Hard(h)
    }
}

pub fn fmt_degrees(phi: f64) -> String {
    let d = phi.to_degrees();
    if (d - d.round()).abs() < 1e-9 {
        format!("{}", d.round() as i64)
    } else {
        format!("{d:.3}")
    }
}

// ---------------------------------------------------------------------------
// quadrature

/// Samples of `cos(phi)`, `sin(phi)` and `phi - phi0/2` on a uniform grid.
struct Grid {
    n: usize,
    phi0: f64,
    phi: Vec<f64>,
}

impl Grid {
    fn new(shape: &Shape, n: usize) -> Self {
        let phi = (0..=n).map(|j| shape.phase_frac(j as f64 / n as f64)).collect();
        Self { n, phi0: shape.phi0(), phi }
    }

    fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    fn simpson(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        let n = self.n;
        let mut acc = f(0) + f(n);
        for j in 1..n {
            acc += if j % 2 == 1 { 4.0 } else { 2.0 } * f(j);
        }
        acc * self.h() / 3.0
    }

    /// `int_0^1 dx' outer(x') int_0^x' inner(x) dx` by cumulative Simpson on
    /// the even sub-grid. Requires `n % 4 == 0`.
    fn nested(&self, outer: impl Fn(usize) -> f64, inner: impl Fn(usize) -> f64) -> f64 {
        let n = self.n;
        let h = self.h();
        let mut cum = 0.0;
        let mut acc = 0.0;
        let mut idx = 0;
        for m in 0..=n / 2 {
            let j = 2 * m;
            if m > 0 {
                cum += h / 3.0 * (inner(j - 2) + 4.0 * inner(j - 1) + inner(j));
            }
            let w = if m == 0 || m == n / 2 { 1.0 } else if m % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * outer(j) * cum;
            idx += 1;
        }
        debug_assert_eq!(idx, n / 2 + 1);
        acc * 2.0 * h / 3.0
    }

    fn params(&self) -> ShapeParams {
        let half = 0.5 * self.phi0;
        let upsilon = self.simpson(|j| (self.phi[j] - half).cos());
        let zeta = self.simpson(|j| (j as f64 * self.h() - 0.5) * (self.phi[j] - half).sin());
        let sc = self.nested(|j| self.phi[j].sin(), |j| self.phi[j].cos());
        let cs = self.nested(|j| self.phi[j].cos(), |j| self.phi[j].sin());
        ShapeParams::new(self.phi0, upsilon, 0.5 * (sc - cs), zeta)
    }

    fn nine(&self) -> NineIntegrals {
        let e = |_: usize| 1.0;
        let c = |j: usize| self.phi[j].cos();
        let s = |j: usize| self.phi[j].sin();
        NineIntegrals {
            ee: self.nested(e, e),
            ec: self.nested(e, c),
            es: self.nested(e, s),
            ce: self.nested(c, e),
            se: self.nested(s, e),
            cc: self.nested(c, c),
            cs: self.nested(c, s),
            sc: self.nested(s, c),
            ss: self.nested(s, s),
        }
    }
}

fn check_quad_points(n: usize) -> Result<()> {
    if n < 256 || n % 4 != 0 {
        return input(format!("quad_points must be >= 256 and a multiple of 4, got {n}"));
    }
    Ok(())
}

fn refine<T: Copy>(
    shape: &Shape,
    quad_points: usize,
    eval: impl Fn(&Grid) -> T,
    delta: impl Fn(&T, &T) -> f64,
) -> Result<T> {
    check_quad_points(quad_points)?;
    let mut n = quad_points;
    let mut prev = eval(&Grid::new(shape, n));
    loop {
        let next_n = 2 * n;
        let next = eval(&Grid::new(shape, next_n));
        let d = delta(&prev, &next);
        if d < QUAD_TARGET {
            return Ok(next);
        }
        if next_n >= QUAD_CAP {
            if d < QUAD_ACCEPT {
                return Ok(next);
            }
            return Err(Error::Numeric(format!(
                "shape integrals for '{}' did not converge: |delta| = {d:e} at {next_n} points",
                shape.label()
            )));
        }
        prev = next;
        n = next_n;
    }
}

/// Computes `(upsilon, alpha, zeta)` by composite Simpson quadrature, doubling
/// the grid until successive estimates agree to `1e-8`.
pub fn shape_params(shape: &Shape, quad_points: usize) -> Result<ShapeParams> {
    if let Shape::Hard(h) = shape {
        return Ok(h.params());
    }
    refine(shape, quad_points, Grid::params, |a, b| {
        (a.upsilon - b.upsilon).abs().max((a.alpha - b.alpha).abs()).max((a.zeta - b.zeta).abs())
    })
}

pub fn nine_integrals(shape: &Shape, quad_points: usize) -> Result<NineIntegrals> {
    if shape.is_impulsive() {
        return input("nine_integrals needs a finite envelope");
    }
    refine(shape, quad_points, Grid::nine, |a, b| {
        [a.ec - b.ec, a.es - b.es, a.ce - b.ce, a.se - b.se, a.cc - b.cc, a.cs - b.cs, a.sc - b.sc, a.ss - b.ss]
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()))
    })
}

/// `<sin(phi - phi0/2)>`, which vanishes for symmetric envelopes.
pub fn mean_sin_symmetrized(shape: &Shape, quad_points: usize) -> Result<f64> {
    check_quad_points(quad_points)?;
    let g = Grid::new(shape, quad_points);
    let half = 0.5 * g.phi0;
    Ok(g.simpson(|j| (g.phi[j] - half).sin()))
}

/// Amplitude derivatives by central finite differences of [`shape_params`].
pub fn sensitivity(shape: &Shape, h: f64) -> Result<AmplitudeSensitivity> {
    if !(h > 0.0 && h <= 1e-2) {
        return input(format!("finite-difference step must lie in (0, 1e-2], got {h}"));
    }
    let at = |f: f64| -> Result<ShapeParams> {
        if f == 0.0 {
            shape_params(shape, DEFAULT_QUAD_POINTS)
        } else {
            shape_params(&shape.amplitude_scale(f)?, DEFAULT_QUAD_POINTS)
        }
    };
    let (m2, m1, z, p1, p2) = (at(-2.0 * h)?, at(-h)?, at(0.0)?, at(h)?, at(2.0 * h)?);
    let d1 = |g: fn(&ShapeParams) -> f64| (-g(&p2) + 8.0 * g(&p1) - 8.0 * g(&m1) + g(&m2)) / (12.0 * h);
    let up = |p: &ShapeParams| p.upsilon;
    let dupsilon = d1(up);
    let three_point = (p1.upsilon - m1.upsilon) / (2.0 * h);
    let truncation_error = (dupsilon - three_point).abs();
    if truncation_error > 1e-4 {
        return Err(Error::Numeric(format!(
            "amplitude sensitivity of '{}' not resolved at h={h}: 3/5-point disagreement {truncation_error:e}",
            shape.label()
        )));
    }
    Ok(AmplitudeSensitivity {
        dupsilon,
        d2upsilon: (p1.upsilon - 2.0 * z.upsilon + m1.upsilon) / (h * h),
        d3upsilon: (p2.upsilon - 2.0 * p1.upsilon + 2.0 * m1.upsilon - m2.upsilon) / (2.0 * h * h * h),
        dalpha: d1(|p| p.alpha),
        truncation_error,
    })
}

/// Sampled power spectrum `|V_hat(k Omega)|^2` (normalized by `n^2`), sorted
/// by frequency in units of `Omega = 2 pi / tau`.
pub fn power_spectrum(shape: &Shape, n_samples: usize) -> Result<Vec<(f64, f64)>> {
    if shape.is_impulsive() {
        return input("power spectrum of a delta pulse is flat; use a finite envelope");
    }
    if n_samples < 2 {
        return input("power spectrum needs at least two samples");
    }
    let tau = shape.tau();
    let mut buf: Vec<C64> = (0..n_samples)
        .map(|j| C64::new(shape.amplitude(j as f64 * tau / n_samples as f64).unwrap_or(0.0), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n_samples).process(&mut buf);
    let norm = (n_samples as f64).powi(2);
    let mut out: Vec<(f64, f64)> = buf
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let freq = if k <= n_samples / 2 { k as f64 } else { k as f64 - n_samples as f64 };
            (freq, z.norm_sqr() / norm)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

// ---------------------------------------------------------------------------
// shape files

/// On-disk shape description: `{label, phi0_degrees, L, K_claimed, coeffs}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeFile {
    pub label: String,
    pub phi0_degrees: f64,
    #[serde(rename = "L")]
    pub constraint_order: usize,
    #[serde(rename = "K_claimed")]
    pub claimed_order: usize,
    pub coeffs: Vec<f64>,
}

impl ShapeFile {
    pub fn to_shape(&self) -> Result<PulseShape> {
        let mut p = PulseShape::new(self.label.clone(), self.phi0_degrees.to_radians(), self.coeffs.clone(), self.constraint_order)?;
        p.claimed_order = Some(self.claimed_order);
        Ok(p)
    }

    pub fn from_shape(p: &PulseShape) -> Self {
        Self {
            label: p.label.clone(),
            phi0_degrees: p.phi0.to_degrees(),
            constraint_order: p.constraint_order,
            claimed_order: p.claimed_order.unwrap_or(0),
            coeffs: p.coeffs.clone(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("shape file serializes")
    }
}

/// The shipped coefficient tables for the first- and second-order
/// self-refocusing shapes at 90, 180 and 360 degrees.
pub mod library {
    use super::*;

    const FILES: [(&str, &str); 12] = [
        ("S1(90)", include_str!("../shapes/S1_90.json")),
        ("S2(90)", include_str!("../shapes/S2_90.json")),
        ("Q1(90)", include_str!("../shapes/Q1_90.json")),
        ("Q2(90)", include_str!("../shapes/Q2_90.json")),
        ("S1(180)", include_str!("../shapes/S1_180.json")),
        ("S2(180)", include_str!("../shapes/S2_180.json")),
        ("Q1(180)", include_str!("../shapes/Q1_180.json")),
        ("Q2(180)", include_str!("../shapes/Q2_180.json")),
        ("S1(360)", include_str!("../shapes/S1_360.json")),
        ("S2(360)", include_str!("../shapes/S2_360.json")),
        ("Q1(360)", include_str!("../shapes/Q1_360.json")),
        ("Q2(360)", include_str!("../shapes/Q2_360.json")),
    ];

    pub fn labels() -> impl Iterator<Item = &'static str> {
        FILES.iter().map(|(l, _)| *l)
    }

    pub fn files() -> Vec<ShapeFile> {
        FILES.iter().map(|(_, text)| ShapeFile::parse(text).expect("shipped shape file parses")).collect()
    }

    pub fn all() -> Vec<PulseShape> {
        files().iter().map(|f| f.to_shape().expect("shipped shape is valid")).collect()
    }

    /// Looks up a shipped shape by label, e.g. `"Q1(180)"`.
    pub fn get(label: &str) -> Result<PulseShape> {
        FILES
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, text)| ShapeFile::parse(text).and_then(|f| f.to_shape()))
            .unwrap_or_else(|| input(format!("no shipped shape '{label}'")))
    }

    pub fn shape(label: &str) -> Result<Shape> {
        get(label).map(Shape::from)
    }
}
