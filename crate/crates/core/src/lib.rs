//! Shaped-pulse design and decoupling analysis for coupled spin chains.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`]: small dense complex matrices and qubit-local operations
//! * [`shapes`]: pulse envelopes and their shape coefficients
//! * [`qdyn`]: time-dependent perturbation expansion of pulse trains
//! * [`analytic`]: closed-form average Hamiltonians and composite-pulse expansions
//! * [`lattice`]: random nearest-neighbour spin-chain Hamiltonians
//! * [`sequences`]: decoupling sequences, order tables and scans
//! * [`optimizer`]: synthesis of self-refocusing shapes
//! * [`fidelity`]: gate fidelity measures

pub mod analytic;
pub mod error;
pub mod fidelity;
pub mod lattice;
pub mod linalg;
pub mod optimizer;
pub mod qdyn;
pub mod sequences;
pub mod shapes;

pub use error::{Error, Result};
pub use linalg::{Axis, ComplexMatrix, Layout, C64};
pub use shapes::{
    library, nine_integrals, power_spectrum, sensitivity, shape_params, AmplitudeSensitivity, GaussianShape,
    HardPulse, NineIntegrals, PulseShape, Shape, ShapeFile, ShapeParams,
};
pub use analytic::{h0_general, h1_general, unitary_x_expansion, Bb1Variant, CompositeExpansion, GeneralCoupling};
pub use fidelity::{average_fidelity, mc_fidelity, FidelityReport};
pub use lattice::{build_hamiltonian, sample_random, ChainSpec, CouplingRanges, Model};
pub use optimizer::{synthesize, OptimizationProblem, SynthesisReport};
pub use qdyn::{propagate, propagate_checked, ControlSchedule, Propagator};
pub use sequences::{CompositeSpec, PulseFamily, ScanResult, SequenceProgram};
