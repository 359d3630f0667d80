//! Closed-form average Hamiltonians of a single driven qubit and series
//! expansions of composite pulses.
//!
//! For a pulse about x the system Hamiltonian in the control frame reads
//! `E + cos(phi) C + sin(phi) S` with `E = A0 + X Ax`, `C = Y Ay + Z Az` and
//! `S = Y Az - Z Ay`. Averaging and nesting over the pulse give
//!
//! * `H0 = E + upsilon (cos(phi0/2) C + sin(phi0/2) S)`
//! * `H1 = -i tau (zeta_C [E, C] + zeta_S [E, S] - alpha [C, S])`

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::linalg::{inplane_rotation, mat2_mul, sigma_x, sigma_y, sigma_z, ComplexMatrix, Mat2, C64, I, ONE, ZERO};
use crate::qdyn::{self, ControlSchedule};
use crate::sequences::{CompositeSpec, PulseFamily};
use crate::shapes::{fmt_degrees, shape_params, ShapeParams, DEFAULT_QUAD_POINTS};

/// Couplings of the pulsed qubit to a passive `d`-dimensional system:
/// `H_S = A0 + X Ax + Y Ay + Z Az`.
#[derive(Clone, Debug)]
pub struct GeneralCoupling {
    pub a0: ComplexMatrix,
    pub ax: ComplexMatrix,
    pub ay: ComplexMatrix,
    pub az: ComplexMatrix,
}

impl GeneralCoupling {
    pub fn new(a0: ComplexMatrix, ax: ComplexMatrix, ay: ComplexMatrix, az: ComplexMatrix) -> Result<Self> {
        let d = a0.dim();
        if [&ax, &ay, &az].iter().any(|m| m.dim() != d) {
            return input("coupling operators must share one dimension");
        }
        if [&a0, &ax, &ay, &az].iter().any(|m| !m.is_hermitian(1e-12)) {
            return input("coupling operators must be Hermitian");
        }
        Ok(Self { a0, ax, ay, az })
    }

    pub fn scalar(a0: f64, ax: f64, ay: f64, az: f64) -> Self {
        let s = |v: f64| ComplexMatrix::identity(1) * v;
        Self { a0: s(a0), ax: s(ax), ay: s(ay), az: s(az) }
    }

    /// `(Delta / 2) Z`.
    pub fn chemical_shift(delta: f64) -> Self {
        Self::scalar(0.0, 0.0, 0.0, 0.5 * delta)
    }

    pub fn passive_dim(&self) -> usize {
        self.a0.dim()
    }

    /// Full Hamiltonian on qubit (x) passive space.
    pub fn hamiltonian(&self) -> ComplexMatrix {
        let id = ComplexMatrix::identity(2);
        let mut h = id.kron(&self.a0);
        h += &sigma_x().kron(&self.ax);
        h += &sigma_y().kron(&self.ay);
        h += &sigma_z().kron(&self.az);
        h
    }

    fn parts(&self) -> (ComplexMatrix, ComplexMatrix, ComplexMatrix) {
        let (x, y, z) = (sigma_x(), sigma_y(), sigma_z());
        let e = &ComplexMatrix::identity(2).kron(&self.a0) + &x.kron(&self.ax);
        let c = &y.kron(&self.ay) + &z.kron(&self.az);
        let s = &y.kron(&self.az) - &z.kron(&self.ay);
        (e, c, s)
    }
}

/// Zeroth-order average Hamiltonian of an x pulse.
pub fn h0_general(params: &ShapeParams, phi0: f64, a: &GeneralCoupling) -> ComplexMatrix {
    let (e, c, s) = a.parts();
    let (sn, cs) = (0.5 * phi0).sin_cos();
    &e + &(&(&c * (params.upsilon * cs)) + &(&s * (params.upsilon * sn)))
}

/// First-order average Hamiltonian of an x pulse of duration `tau_p`.
pub fn h1_general(params: &ShapeParams, a: &GeneralCoupling, tau_p: f64) -> ComplexMatrix {
    let (e, c, s) = a.parts();
    let inner = &(&(&e.commutator(&c) * params.zeta_c) + &(&e.commutator(&s) * params.zeta_s))
        - &(&c.commutator(&s) * params.alpha);
    inner.scaled(C64::new(0.0, -tau_p))
}

fn z_rotation(psi: f64) -> Mat2 {
    let e = C64::from_polar(1.0, -0.5 * psi);
    [[e, ZERO], [ZERO, e.conj()]]
}

fn mat2_from(m: &ComplexMatrix) -> Mat2 {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Second-order expansion `U0 (1 + R1 + R2)` of an in-plane pulse at phase
/// `psi` under the chemical shift, with `delta_tau = tau_p Delta`.
pub fn unitary_expansion(phi0: f64, psi: f64, params: &ShapeParams, delta_tau: f64) -> Result<Mat2> {
    if delta_tau.abs() > 0.5 {
        return input(format!("series expansion needs |tau Delta| <= 0.5, got {delta_tau}"));
    }
    let a = GeneralCoupling::chemical_shift(delta_tau);
    let r1 = h0_general(params, phi0, &a).scaled(-I);
    let r2 = &h1_general(params, &a, 1.0).scaled(-I) + &(&r1.matmul(&r1) * 0.5);
    let w = &(&ComplexMatrix::identity(2) + &r1) + &r2;
    let ux = mat2_mul(&inplane_rotation(phi0, 0.0), &mat2_from(&w));
    let rz = z_rotation(psi);
    let rz_dag = z_rotation(-psi);
    Ok(mat2_mul(&rz, &mat2_mul(&ux, &rz_dag)))
}

/// [`unitary_expansion`] for a pulse about x.
pub fn unitary_x_expansion(phi0: f64, params: &ShapeParams, delta_tau: f64) -> Result<Mat2> {
    unitary_expansion(phi0, 0.0, params, delta_tau)
}

/// Exact single-qubit propagator of one pulse under the chemical shift.
pub fn exact_pulse_unitary(
    family: &PulseFamily,
    phi0: f64,
    psi: f64,
    f: f64,
    delta_tau: f64,
    steps: usize,
) -> Result<Mat2> {
    let shape = family.shape_for(phi0)?.amplitude_scale(f)?;
    let mut sched = ControlSchedule::new(1, 1.0, 1)?;
    sched.add_pulse(0, 0, psi, shape)?;
    let h = sigma_z() * (0.5 * delta_tau);
    Ok(mat2_from(&qdyn::evolve_full_extrapolated(&sched, &h, steps)?.0))
}

/// Exact single-qubit propagator of a composite pulse.
pub fn exact_composite_unitary(
    comp: &CompositeSpec,
    family: &PulseFamily,
    f: f64,
    delta_tau: f64,
    steps: usize,
) -> Result<Mat2> {
    let mut u = [[ONE, ZERO], [ZERO, ONE]];
    for &(a, p) in &comp.pulses {
        u = mat2_mul(&exact_pulse_unitary(family, a, p, f, delta_tau, steps)?, &u);
    }
    Ok(u)
}

/// Coefficients `c[a][b]` of `f^a (tau Delta)^b`; detuning terms are kept to
/// second order, amplitude terms to third.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeExpansion {
    pub terms: Vec<ExpansionTerm>,
    /// Largest Richardson correction applied to any coefficient entry.
    pub stencil_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerm {
    pub f_power: usize,
    pub dtau_power: usize,
    /// Row-major 2x2 coefficient as `(re, im)` pairs.
    pub coeff: [[(f64, f64); 2]; 2],
}

impl ExpansionTerm {
    pub fn matrix(&self) -> Mat2 {
        let c = |(re, im): (f64, f64)| C64::new(re, im);
        [[c(self.coeff[0][0]), c(self.coeff[0][1])], [c(self.coeff[1][0]), c(self.coeff[1][1])]]
    }
}

impl CompositeExpansion {
    pub fn coefficient(&self, f_power: usize, dtau_power: usize) -> Option<Mat2> {
        self.terms.iter().find(|t| t.f_power == f_power && t.dtau_power == dtau_power).map(|t| t.matrix())
    }

    /// Sums the series at `(f, tau Delta)`.
    pub fn evaluate(&self, f: f64, delta_tau: f64) -> Mat2 {
        let mut out = [[ZERO; 2]; 2];
        for t in &self.terms {
            let w = f.powi(t.f_power as i32) * delta_tau.powi(t.dtau_power as i32);
            let m = t.matrix();
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] += m[i][j] * w;
                }
            }
        }
        out
    }
}

/// Product of per-pulse second-order series with amplitude-dependent shape
/// parameters.
fn series_unitary(
    comp: &CompositeSpec,
    params: &mut impl FnMut(f64, f64) -> Result<ShapeParams>,
    f: f64,
    x: f64,
) -> Result<Mat2> {
    let mut u = [[ONE, ZERO], [ZERO, ONE]];
    for &(a, p) in &comp.pulses {
        let sp = params(a, f)?;
        u = mat2_mul(&unitary_expansion(a * (1.0 + f), p, &sp, x)?, &u);
    }
    Ok(u)
}

const D: [[f64; 5]; 4] = [
    [0.0, 0.0, 1.0, 0.0, 0.0],
    [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
    [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0],
    [-0.5, 1.0, 0.0, -1.0, 0.5],
];
const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];

fn stencil_fit(samples: &[[Mat2; 5]; 5], h: f64) -> Vec<(usize, usize, Mat2)> {
    let mut out = Vec::new();
    for a in 0..=3 {
        for b in 0..=2usize {
            if a + b > 3 {
                continue;
            }
            let mut c = [[ZERO; 2]; 2];
            for (i, row) in samples.iter().enumerate() {
                for (j, m) in row.iter().enumerate() {
                    let w = D[a][i] * D[b][j];
                    if w == 0.0 {
                        continue;
                    }
                    for r in 0..2 {
                        for s in 0..2 {
                            c[r][s] += m[r][s] * w;
                        }
                    }
                }
            }
            let scale = 1.0 / (FACT[a] * FACT[b] * h.powi((a + b) as i32));
            for row in &mut c {
                for z in row.iter_mut() {
                    *z *= scale;
                }
            }
            out.push((a, b, c));
        }
    }
    out
}

/// Series coefficients of a composite pulse built from `family`, extracted by
/// central-difference stencils of radius `2h` and `h` and extrapolated.
pub fn composite_expansion(comp: &CompositeSpec, family: &PulseFamily, h: f64) -> Result<CompositeExpansion> {
    let mut cache: HashMap<(String, u64), ShapeParams> = HashMap::new();
    composite_expansion_with(
        comp,
        |angle, f| {
            let key = (fmt_degrees(angle), f.to_bits());
            if let Some(p) = cache.get(&key) {
                return Ok(*p);
            }
            let shape = family.shape_for(angle)?.amplitude_scale(f)?;
            let p = shape_params(&shape, DEFAULT_QUAD_POINTS)?;
            cache.insert(key, p);
            Ok(p)
        },
        h,
    )
}

/// [`composite_expansion`] with per-pulse parameters supplied as a function of
/// `(nominal angle, f)`.
pub fn composite_expansion_with(
    comp: &CompositeSpec,
    mut params: impl FnMut(f64, f64) -> Result<ShapeParams>,
    h: f64,
) -> Result<CompositeExpansion> {
    if !(h > 0.0 && h <= 0.05) {
        return input(format!("stencil step must lie in (0, 0.05], got {h}"));
    }
    let mut fit = |h: f64| -> Result<Vec<(usize, usize, Mat2)>> {
        let mut samples = [[[[ZERO; 2]; 2]; 5]; 5];
        for (i, row) in samples.iter_mut().enumerate() {
            for (j, m) in row.iter_mut().enumerate() {
                *m = series_unitary(comp, &mut params, (i as f64 - 2.0) * h, (j as f64 - 2.0) * h)?;
            }
        }
        Ok(stencil_fit(&samples, h))
    };
    // stencil errors are O(h^2); extrapolate and keep the correction as the estimate
    let coarse = fit(h)?;
    let fine = fit(0.5 * h)?;
    let mut stencil_error = 0.0f64;
    let terms = coarse
        .iter()
        .zip(&fine)
        .map(|((a, b, c), (_, _, f))| {
            let mut coeff = [[(0.0, 0.0); 2]; 2];
            for r in 0..2 {
                for s in 0..2 {
                    let corr = (f[r][s] - c[r][s]) / 3.0;
                    stencil_error = stencil_error.max(corr.norm());
                    let v = f[r][s] + corr;
                    coeff[r][s] = (v.re, v.im);
                }
            }
            ExpansionTerm { f_power: *a, dtau_power: *b, coeff }
        })
        .collect();
    Ok(CompositeExpansion { terms, stencil_error })
}

pub fn scrofulous_expansion(family: &PulseFamily, h: f64) -> Result<CompositeExpansion> {
    composite_expansion(&crate::sequences::composite("scrofulous")?, family, h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bb1Variant {
    W,
    Clj,
    WPrime,
    CljPrime,
}

impl Bb1Variant {
    pub fn composite_name(self) -> &'static str {
        match self {
            Bb1Variant::W => "bb1_W",
            Bb1Variant::Clj => "bb1_CLJ",
            Bb1Variant::WPrime => "bb1_Wp",
            Bb1Variant::CljPrime => "bb1_CLJp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim_start_matches("bb1_").to_ascii_lowercase().as_str() {
            "w" => Ok(Bb1Variant::W),
            "clj" => Ok(Bb1Variant::Clj),
            "wp" | "w'" => Ok(Bb1Variant::WPrime),
            "cljp" | "clj'" => Ok(Bb1Variant::CljPrime),
            _ => input(format!("unknown BB1 variant '{s}' (expected W, CLJ, Wp, CLJp)")),
        }
    }
}

pub fn bb1_expansion(variant: Bb1Variant, family: &PulseFamily, h: f64) -> Result<CompositeExpansion> {
    composite_expansion(&crate::sequences::composite(variant.composite_name())?, family, h)
}

/// Leading terms `-i X + i tau Delta upsilon Z - i (sqrt(3) pi^2 f^2 / 8) Y`
/// of the SCROFULOUS pulse.
pub fn scrofulous_leading(upsilon: f64, f: f64, delta_tau: f64) -> Mat2 {
    let a = 3f64.sqrt() * PI * PI * f * f / 8.0;
    let z = delta_tau * upsilon;
    // -i X + i z Z - i a Y
    [[I * z, -I - a * ONE], [-I + a * ONE, -I * z]]
}

/// On-resonance BB1 product through third order in `f`:
/// `-i X - (f^3 pi^3 / 64)(5 - i sqrt(15) Z)`.
pub fn bb1_amplitude_leading(f: f64) -> Mat2 {
    let k = f.powi(3) * PI.powi(3) / 64.0;
    let s15 = 15f64.sqrt();
    [[-k * (5.0 - I * s15), -I], [-I, -k * (5.0 + I * s15)]]
}

/// Second-order coefficient matrix in `tau Delta` of an exactly propagated
/// composite at amplitude error `f`, by a five-point stencil of radius `2h`.
pub fn exact_dtau_coefficients(
    comp: &CompositeSpec,
    family: &PulseFamily,
    f: f64,
    h: f64,
    steps: usize,
) -> Result<[Mat2; 3]> {
    let mut s = [[[ZERO; 2]; 2]; 5];
    for (j, m) in s.iter_mut().enumerate() {
        *m = exact_composite_unitary(comp, family, f, (j as f64 - 2.0) * h, steps)?;
    }
    let mut out = [[[ZERO; 2]; 2]; 3];
    for (b, o) in out.iter_mut().enumerate() {
        for r in 0..2 {
            for c in 0..2 {
                let v: C64 = (0..5).map(|j| s[j][r][c] * D[b][j]).sum();
                o[r][c] = v / (FACT[b] * h.powi(b as i32));
            }
        }
    }
    Ok(out)
}

pub fn mat2_norm(m: &Mat2) -> f64 {
    m.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn mat2_diff(a: &Mat2, b: &Mat2) -> f64 {
    let mut d = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            d[i][j] = a[i][j] - b[i][j];
        }
    }
    mat2_norm(&d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{library, HardPulse, Shape};

    fn params(label: &str) -> ShapeParams {
        shape_params(&library::shape(label).unwrap(), DEFAULT_QUAD_POINTS).unwrap()
    }

    #[test]
    fn chemical_shift_h0_with_vanishing_upsilon() {
        let p = params("S1(180)");
        assert!(h0_general(&p, PI, &GeneralCoupling::chemical_shift(1.0)).max_abs() < 1e-9);
    }

    #[test]
    fn chemical_shift_h1_is_along_x() {
        let p = params("S2(180)");
        let h1 = h1_general(&p, &GeneralCoupling::chemical_shift(1.0), 1.0);
        let expected = sigma_x() * (0.5 * p.alpha);
        assert!(h1.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn x_only_coupling_commutes_with_control() {
        let a = GeneralCoupling::scalar(0.3, -0.7, 0.0, 0.0);
        let h1 = h1_general(&params("Q2(90)"), &a, 1.0);
        assert!(h1.max_abs() < 1e-15);
    }

    #[test]
    fn expansion_residual_is_third_order() {
        let p = HardPulse::new(PI / 2.0).params();
        let fam = PulseFamily::Hard;
        let mut prev = None;
        for x in [0.1, 0.05] {
            let exact = exact_pulse_unitary(&fam, PI / 2.0, 0.0, 0.0, x, 256).unwrap();
            let series = unitary_x_expansion(PI / 2.0, &p, x).unwrap();
            let r = mat2_diff(&exact, &series);
            assert!(r < 5e-4, "residual {r}");
            if let Some(rp) = prev {
                let ratio: f64 = rp / r;
                assert!((ratio.log2() - 3.0).abs() < 0.2, "order {}", ratio.log2());
            }
            prev = Some(r);
        }
    }

    #[test]
    fn expansion_rejects_large_detuning() {
        assert!(unitary_x_expansion(PI, &params("S1(180)"), 0.8).is_err());
    }

    #[test]
    fn leading_forms_are_unitary_at_zero() {
        let u = scrofulous_leading(0.0, 0.0, 0.0);
        assert!(mat2_diff(&u, &inplane_rotation(PI, 0.0)) < 1e-15);
        let b = bb1_amplitude_leading(0.0);
        assert!(mat2_diff(&b, &inplane_rotation(PI, 0.0)) < 1e-15);
    }

    #[test]
    fn primed_bb1_second_order_is_free_of_alpha() {
        let comp = crate::sequences::composite("bb1_Wp").unwrap();
        let coeff = |alpha1: f64| {
            let e = composite_expansion_with(
                &comp,
                |a, _| Ok(ShapeParams::new(a, 0.0, if (a - PI).abs() < 1e-9 { alpha1 } else { 0.0 }, 0.01)),
                0.01,
            )
            .unwrap();
            e.coefficient(0, 2).unwrap()
        };
        assert!(mat2_diff(&coeff(0.0), &coeff(0.05)) < 1e-8);
        let w = crate::sequences::composite("bb1_W").unwrap();
        let c = |alpha1: f64| {
            composite_expansion_with(&w, |a, _| Ok(ShapeParams::new(a, 0.0, if (a - PI).abs() < 1e-9 { alpha1 } else { 0.0 }, 0.0)), 0.01)
                .unwrap()
                .coefficient(0, 2)
                .unwrap()
        };
        assert!(mat2_diff(&c(0.0), &c(0.05)) > 1e-3);
    }

    #[test]
    fn bb1_cubic_amplitude_term() {
        let e = bb1_expansion(Bb1Variant::W, &PulseFamily::Hard, 0.01).unwrap();
        let cubic = e.coefficient(3, 0).unwrap();
        let expected = bb1_amplitude_leading(1.0);
        let mut d = expected;
        d[0][1] = ZERO;
        d[1][0] = ZERO;
        assert!(mat2_diff(&cubic, &d) < 1e-6, "{cubic:?}");
        assert!(e.stencil_error < 1e-2);
    }

    #[test]
    fn variant_names() {
        assert_eq!(Bb1Variant::parse("W").unwrap(), Bb1Variant::W);
        assert_eq!(Bb1Variant::parse("bb1_CLJp").unwrap(), Bb1Variant::CljPrime);
        assert!(Bb1Variant::parse("X").is_err());
    }

    #[test]
    fn coupling_dimension_checks() {
        let one = ComplexMatrix::identity(1);
        assert!(GeneralCoupling::new(one.clone(), one.clone(), one.clone(), ComplexMatrix::identity(2)).is_err());
        let _: Shape = HardPulse::new(PI).into();
    }
}
