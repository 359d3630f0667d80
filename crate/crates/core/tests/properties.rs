use std::f64::consts::PI;

use proptest::prelude::*;
use pulsekit::analytic::{exact_pulse_unitary, mat2_diff, unitary_expansion};
use pulsekit::fidelity::{average_fidelity, average_fidelity_direct, random_unitary};
use pulsekit::lattice::{build_hamiltonian, sample_random, CouplingRanges, Model};
use pulsekit::linalg::{inplane_rotation, ComplexMatrix, Layout, C64};
use pulsekit::optimizer::{apply_constraints, OptimizationProblem};
use pulsekit::qdyn::{propagate, ControlSchedule};
use pulsekit::sequences::{program, PulseFamily};
use pulsekit::shapes::{library, mean_sin_symmetrized, nine_integrals, shape_params, Shape, DEFAULT_QUAD_POINTS};

fn any_label() -> impl Strategy<Value = &'static str> {
    let labels: Vec<&'static str> = library::labels().collect();
    proptest::sample::select(labels)
}

fn random_matrix(dim: usize, seed: u64) -> ComplexMatrix {
    let u = random_unitary(dim, seed);
    let v = random_unitary(dim, seed.wrapping_add(1));
    &u + &(&v * 0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adjoint_is_an_involution_and_reverses_products(seed in 0u64..1000, dim in prop::sample::select(vec![1usize, 2, 4, 8])) {
        let a = random_matrix(dim, seed);
        let b = random_matrix(dim, seed + 7);
        prop_assert!(a.adjoint().adjoint().max_abs_diff(&a) == 0.0);
        let lhs = a.matmul(&b).adjoint();
        let rhs = b.adjoint().matmul(&a.adjoint());
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn commutator_is_antisymmetric_and_traceless(seed in 0u64..1000) {
        let a = random_matrix(4, seed);
        let b = random_matrix(4, seed + 3);
        let ab = a.commutator(&b);
        prop_assert!((&ab + &b.commutator(&a)).max_abs() < 1e-13);
        prop_assert!(ab.trace().norm() < 1e-12);
    }

    #[test]
    fn kron_multiplies_dimensions_and_traces(s1 in 0u64..500, s2 in 0u64..500) {
        let a = random_matrix(2, s1);
        let b = random_matrix(4, s2);
        let k = a.kron(&b);
        prop_assert_eq!(k.dim(), 8);
        prop_assert!((k.trace() - a.trace() * b.trace()).norm() < 1e-12);
    }

    #[test]
    fn local_application_matches_embedding(seed in 0u64..500, q in 0usize..3, angle in -7.0f64..7.0, psi in -4.0f64..4.0) {
        let layout = Layout::qubits(3);
        let w = inplane_rotation(angle, psi);
        let mut m = random_matrix(8, seed);
        let dense = layout.embed(&w, q).matmul(&m);
        m.apply_left(&w, layout.stride(q));
        prop_assert!(m.max_abs_diff(&dense) < 1e-12);
    }

    #[test]
    fn inplane_rotations_are_unitary(angle in -20.0f64..20.0, psi in -7.0f64..7.0) {
        let u = ComplexMatrix::from_mat2(&inplane_rotation(angle, psi));
        prop_assert!(u.is_unitary(1e-13));
    }

    #[test]
    fn phase_reaches_scaled_target(label in any_label(), f in -0.5f64..0.5) {
        let s = library::shape(label).unwrap().amplitude_scale(f).unwrap();
        let target = s.phi0();
        prop_assert!((target - library::shape(label).unwrap().phi0() * (1.0 + f)).abs() < 1e-12);
        prop_assert!((s.phase_frac(1.0) - target).abs() < 1e-12);
        prop_assert!(s.phase_frac(0.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_shapes_have_vanishing_mean_sine(label in any_label(), f in -0.3f64..0.3) {
        let s = library::shape(label).unwrap().amplitude_scale(f).unwrap();
        prop_assert!(mean_sin_symmetrized(&s, 4096).unwrap().abs() < 1e-10);
    }

    #[test]
    fn zeta_components_match_commutator_integrals(label in any_label(), f in -0.2f64..0.2) {
        let s = library::shape(label).unwrap().amplitude_scale(f).unwrap();
        let p = shape_params(&s, DEFAULT_QUAD_POINTS).unwrap();
        let n = nine_integrals(&s, DEFAULT_QUAD_POINTS).unwrap();
        prop_assert!(((n.ec - n.ce) / 2.0 - p.zeta_c).abs() < 1e-8);
        prop_assert!(((n.es - n.se) / 2.0 - p.zeta_s).abs() < 1e-8);
        prop_assert!(((n.sc - n.cs) / 2.0 - p.alpha).abs() < 1e-8);
    }

    #[test]
    fn fidelity_is_phase_invariant_and_bounded(seed in 0u64..1000, dim in prop::sample::select(vec![2usize, 4, 8]), phase in -7.0f64..7.0) {
        let u = random_unitary(dim, seed);
        let u0 = random_unitary(dim, seed + 1);
        let a = average_fidelity(&u, &u0).unwrap();
        let b = average_fidelity(&u.scaled(C64::from_polar(1.0, phase)), &u0).unwrap();
        prop_assert!((a.fidelity - b.fidelity).abs() < 1e-13);
        let n = dim as f64;
        prop_assert!(a.fidelity >= 1.0 / (n + 1.0) - 1e-13 && a.fidelity <= 1.0 + 1e-13);
        prop_assert!((a.fidelity - average_fidelity_direct(&u, &u0)).abs() < 1e-12);
        prop_assert!((1.0 - a.fidelity - a.infidelity()).abs() < 1e-14);
    }

    #[test]
    fn chain_hamiltonians_are_hermitian_and_traceless(seed in 0u64..10_000, n in 2usize..=4, m in 0usize..5) {
        let spec = sample_random(Model::ALL[m], n, seed, CouplingRanges::default()).unwrap();
        let h = build_hamiltonian(&spec).unwrap();
        prop_assert!(h.is_hermitian(1e-14));
        prop_assert!(h.trace().norm() < 1e-12);
    }

    #[test]
    fn longer_chains_extend_shorter_ones(seed in 0u64..10_000, n in 2usize..7) {
        let r = CouplingRanges::default();
        let a = sample_random(Model::XxzVec, n, seed, r).unwrap();
        let b = sample_random(Model::XxzVec, n + 1, seed, r).unwrap();
        prop_assert_eq!(&b.jz[..n - 1], &a.jz[..]);
        prop_assert_eq!(&b.jperp[..n - 1], &a.jperp[..]);
        prop_assert_eq!(&b.delta[..n], &a.delta[..]);
    }

    #[test]
    fn endpoint_constraints_hold_after_elimination(
        free in prop::collection::vec(-3.0f64..3.0, 1..5),
        l in 0usize..4,
        phi0 in prop::sample::select(vec![PI / 2.0, PI, 2.0 * PI]),
    ) {
        let m = free.len() + l;
        let p = OptimizationProblem::new(phi0, 1, l, m);
        let full = apply_constraints(&p, &free).unwrap();
        prop_assert_eq!(&full[..free.len()], &free[..]);
        for k in 0..l {
            let head = if k == 0 { phi0 / std::f64::consts::TAU } else { 0.0 };
            let r = head + full.iter().enumerate().map(|(i, a)| ((i + 1) as f64).powi(2 * k as i32) * a).sum::<f64>();
            let scale = full.iter().enumerate().map(|(i, a)| ((i + 1) as f64).powi(2 * k as i32) * a.abs()).sum::<f64>().max(1.0);
            prop_assert!(r.abs() < 1e-12 * scale, "l={k} residual {r}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn control_propagator_stays_unitary(seed in 0u64..1000, prog in prop::sample::select(vec!["seq4", "seq8", "seq16"]), fam in prop::sample::select(vec!["Q1", "S2", "G0.1", "hard"])) {
        let sched = pulsekit::sequences::compile(&program(prog).unwrap(), &PulseFamily::parse(fam).unwrap(), 3, 0.7 + (seed % 5) as f64 * 0.1, 0.0).unwrap();
        prop_assert!(sched.control_unitary().unitarity_defect() < 1e-9);
    }

    #[test]
    fn corrections_scale_homogeneously(seed in 0u64..1000, s in 0.2f64..3.0, label in any_label()) {
        let shape: Shape = library::shape(label).unwrap();
        let sched = ControlSchedule::single(shape, 0.3);
        let h = {
            let m = random_matrix(2, seed);
            &(&m + &m.adjoint()) * 0.5
        };
        let a = propagate(&sched, &h, 3, 512).unwrap();
        let b = propagate(&sched, &(&h * s), 3, 512).unwrap();
        for k in 0..3 {
            let na = a.r[k].frobenius_norm();
            let nb = b.r[k].frobenius_norm();
            if na > 1e-8 {
                prop_assert!((nb / (na * s.powi(k as i32 + 1)) - 1.0).abs() < 1e-6, "k={} ratio {}", k + 1, nb / na);
            }
        }
    }

    #[test]
    fn series_expansion_matches_propagation(label in any_label(), psi in -3.2f64..3.2, sign in prop::bool::ANY) {
        let shape = library::shape(label).unwrap();
        let phi0 = shape.phi0();
        let prefix = &label[..2];
        let fam = PulseFamily::parse(prefix).unwrap();
        let p = shape_params(&shape, DEFAULT_QUAD_POINTS).unwrap();
        let x = if sign { 0.05 } else { -0.05 };
        let exact = exact_pulse_unitary(&fam, phi0, psi, 0.0, x, 256).unwrap();
        let series = unitary_expansion(phi0, psi, &p, x).unwrap();
        let r1 = mat2_diff(&exact, &series);
        let exact2 = exact_pulse_unitary(&fam, phi0, psi, 0.0, x / 2.0, 256).unwrap();
        let r2 = mat2_diff(&exact2, &unitary_expansion(phi0, psi, &p, x / 2.0).unwrap());
        // third-order residual: halving the detuning divides it by about eight
        prop_assert!(r1 < 1e-3, "{r1}");
        if r1 > 1e-11 {
            prop_assert!(r1 / r2 > 6.0, "ratio {}", r1 / r2);
        }
    }
}

#[test]
fn near_identity_infidelity_has_no_cancellation() {
    for eps in [1e-7, 1e-9, 1e-11] {
        let v = ComplexMatrix::from_mat2(&inplane_rotation(2.0 * eps, 0.0));
        let r = average_fidelity(&v, &ComplexMatrix::identity(2)).unwrap();
        let exact = 2.0 / 3.0 * f64::sin(eps).powi(2);
        assert!((r.infidelity() / exact - 1.0).abs() < 1e-6);
    }
}
