use pulsekit::lattice::{build_hamiltonian, sample_random, CouplingRanges, Model};
use pulsekit::linalg::{Axis, ComplexMatrix, Layout};
use pulsekit::optimizer::{certify, synthesize, OptimizationProblem, Protection};
use pulsekit::sequences::{
    composite, cycle_unitary, decoupling_order, evolve, grid, program, compile, scan_amplitude_frequency,
    EvolveOptions, OrderOptions, PulseFamily,
};
use pulsekit::shapes::{library, ShapeFile};

#[test]
fn chain_hamiltonians_only_couple_neighbours() {
    let n = 3;
    let layout = Layout::qubits(n);
    let dim = layout.dim() as f64;
    let axes = [None, Some(Axis::X), Some(Axis::Y), Some(Axis::Z)];
    for (i, model) in Model::ALL.iter().enumerate() {
        let h = build_hamiltonian(&sample_random(*model, n, 11 + i as u64, CouplingRanges::default()).unwrap()).unwrap();
        let mut rebuilt = ComplexMatrix::zeros(h.dim());
        for code in 0..64usize {
            let factors: Vec<(usize, Axis)> =
                (0..n).filter_map(|q| axes[(code >> (2 * q)) & 3].map(|a| (q, a))).collect();
            let p = layout.pauli_string(&factors);
            let c = p.matmul(&h).trace() / dim;
            if c.norm() < 1e-13 {
                continue;
            }
            assert!(factors.len() <= 2, "{}: weight {}", model.name(), factors.len());
            if factors.len() == 2 {
                assert_eq!(factors[1].0 - factors[0].0, 1, "{}: non-adjacent term", model.name());
            }
            rebuilt.axpy(c, &p);
        }
        assert!(rebuilt.max_abs_diff(&h) < 1e-12);
    }
}

#[test]
fn repeated_cycles_equal_matrix_power() {
    let chain = sample_random(Model::XxzDz, 3, 5, CouplingRanges::default()).unwrap();
    let prog = program("seq4").unwrap();
    let fam = PulseFamily::parse("Q1").unwrap();
    let opts = EvolveOptions::default();
    let (u1, _) = evolve(&prog, &fam, &chain, 0.1, 1, &opts).unwrap();
    let (u6, u06) = evolve(&prog, &fam, &chain, 0.1, 6, &opts).unwrap();
    let mut direct = ComplexMatrix::identity(u1.dim());
    for _ in 0..6 {
        direct = u1.matmul(&direct);
    }
    assert!(u6.max_abs_diff(&direct) < 1e-12);
    assert!(u06.is_unitary(1e-10));
}

#[test]
fn cycle_unitary_agrees_across_step_counts() {
    let chain = sample_random(Model::Ising, 2, 3, CouplingRanges::default()).unwrap();
    let sched = compile(&program("seq8").unwrap(), &PulseFamily::parse("S1").unwrap(), 2, 0.2, 0.0).unwrap();
    let h = build_hamiltonian(&chain).unwrap();
    let (a, _) = cycle_unitary(&sched, &h, &EvolveOptions { steps: 128, richardson: true }).unwrap();
    let (b, _) = cycle_unitary(&sched, &h, &EvolveOptions { steps: 512, richardson: true }).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-9);
}

#[test]
fn decoupling_order_depends_only_on_shape_class() {
    let opts = OrderOptions::default();
    for (model, seq) in [(Model::Ising, "seq4"), (Model::XxzDz, "seq8")] {
        let chain = sample_random(model, 3, 1, CouplingRanges::default()).unwrap();
        let prog = program(seq).unwrap();
        for (a, b) in [("Q1", "Q2"), ("S1", "S2")] {
            let ra = decoupling_order(&prog, &PulseFamily::parse(a).unwrap(), &chain, &opts).unwrap();
            let rb = decoupling_order(&prog, &PulseFamily::parse(b).unwrap(), &chain, &opts).unwrap();
            assert_eq!(ra.order, rb.order, "{a}/{b} {seq} {}", model.name());
        }
    }
}

#[test]
fn scrofulous_grid_is_symmetric_in_detuning() {
    let comp = composite("scrofulous").unwrap();
    let fam = PulseFamily::parse("Q1").unwrap();
    let f = grid(-0.1, 0.1, 3).unwrap();
    let d = grid(-0.2, 0.2, 5).unwrap();
    let scan = scan_amplitude_frequency(&comp, &fam, &f, &d, &EvolveOptions::default()).unwrap();
    let inf = scan.column("infidelity").unwrap();
    for i in 0..f.len() {
        for j in 0..d.len() {
            let a = inf[i * d.len() + j];
            let b = inf[i * d.len() + d.len() - 1 - j];
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-6), "f={} d={}: {a} vs {b}", f[i], d[j]);
        }
    }
}

#[test]
fn synthesis_is_reproducible_for_a_seed() {
    let mut p = OptimizationProblem::new(std::f64::consts::PI / 2.0, 1, 1, 3);
    p.budget = 3000;
    p.seed = 9;
    let a = synthesize(&p).unwrap();
    let b = synthesize(&p).unwrap();
    assert_eq!(a.coeffs, b.coeffs);
    assert_eq!(a.evaluations, b.evaluations);
    assert!(a.evaluations <= p.budget);
}

#[test]
fn library_shapes_recertify_after_json_round_trip() {
    for file in library::files() {
        let text = serde_json::to_string(&file).unwrap();
        let back = ShapeFile::parse(&text).unwrap();
        assert_eq!(back, file);
        let shape = back.to_shape().unwrap();
        let cert = certify(&shape, file.claimed_order, Protection::default()).unwrap();
        assert!(cert.order >= file.claimed_order, "{}: {}", file.label, cert.order);
        assert!(cert.passed && cert.constraint_residual < 1e-6, "{}: {:e}", file.label, cert.constraint_residual);
    }
}
