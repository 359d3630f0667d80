//! Open nearest-neighbour spin chains with seeded random couplings.
//!
//! `H = 1/4 sum_bonds [Jz ZZ + Jperp (XX + YY)] + 1/2 sum_sites Delta . sigma`

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{Axis, ComplexMatrix, Layout, C64};

pub const MAX_SITES: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    Ising,
    IsingDz,
    Xxz,
    XxzDz,
    XxzVec,
}

impl Model {
    pub const ALL: [Model; 5] = [Model::Ising, Model::IsingDz, Model::Xxz, Model::XxzDz, Model::XxzVec];

    pub fn has_flip_flop(self) -> bool {
        matches!(self, Model::Xxz | Model::XxzDz | Model::XxzVec)
    }

    pub fn has_z_field(self) -> bool {
        matches!(self, Model::IsingDz | Model::XxzDz | Model::XxzVec)
    }

    pub fn has_transverse_field(self) -> bool {
        self == Model::XxzVec
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Ising => "ising",
            Model::IsingDz => "ising+dz",
            Model::Xxz => "xxz",
            Model::XxzDz => "xxz+dz",
            Model::XxzVec => "xxz+vec",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.to_ascii_lowercase().chars().filter(|c| !c.is_whitespace() && *c != '_').collect();
        match key.as_str() {
            "ising" => Ok(Model::Ising),
            "ising+dz" | "isingdz" | "i+dz" => Ok(Model::IsingDz),
            "xxz" => Ok(Model::Xxz),
            "xxz+dz" | "xxzdz" => Ok(Model::XxzDz),
            "xxz+vec" | "xxzvec" | "xxz+vecdz" | "xxz+vecdelta" => Ok(Model::XxzVec),
            _ => input(format!("unknown model '{s}' (expected ising, ising+dz, xxz, xxz+dz, xxz+vec)")),
        }
    }
}

/// Coupling magnitudes are drawn from `[j_min, j_max]`, field components from
/// `[-delta_max, delta_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingRanges {
    pub j_min: f64,
    pub j_max: f64,
    pub delta_max: f64,
}

impl Default for CouplingRanges {
    fn default() -> Self {
        Self { j_min: 0.5, j_max: 1.5, delta_max: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n: usize,
    pub model: Model,
    pub jz: Vec<f64>,
    pub jperp: Vec<f64>,
    /// On-site fields `(Delta_x, Delta_y, Delta_z)`.
    pub delta: Vec<[f64; 3]>,
    pub seed: u64,
}

#[derive(Clone, Copy)]
enum Class {
    Jz = 0,
    Jperp = 1,
    Dx = 2,
    Dy = 3,
    Dz = 4,
}

/// One uniform draw keyed by `(seed, class, site)`, independent of how many
/// other values are drawn.
fn draw(seed: u64, class: Class, site: usize, lo: f64, hi: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class as u64) << 32) | site as u64);
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws a chain whose couplings depend only on `(seed, site)`, so a longer
/// chain extends a shorter one with the same seed.
pub fn sample_random(model: Model, n: usize, seed: u64, ranges: CouplingRanges) -> Result<ChainSpec> {
    if !(ranges.j_min > 0.0 && ranges.j_max >= ranges.j_min && ranges.delta_max >= 0.0) {
        return input("coupling ranges must be positive and ordered");
    }
    check_sites(n)?;
    let bonds = n.saturating_sub(1);
    let (jl, jh, d) = (ranges.j_min, ranges.j_max, ranges.delta_max);
    let jz = (0..bonds).map(|b| draw(seed, Class::Jz, b, jl, jh)).collect();
    let jperp = (0..bonds)
        .map(|b| if model.has_flip_flop() { draw(seed, Class::Jperp, b, jl, jh) } else { 0.0 })
        .collect();
    let delta = (0..n)
        .map(|s| {
            let t = model.has_transverse_field();
            [
                if t { draw(seed, Class::Dx, s, -d, d) } else { 0.0 },
                if t { draw(seed, Class::Dy, s, -d, d) } else { 0.0 },
                if model.has_z_field() { draw(seed, Class::Dz, s, -d, d) } else { 0.0 },
            ]
        })
        .collect();
    Ok(ChainSpec { n, model, jz, jperp, delta, seed })
}

fn check_sites(n: usize) -> Result<()> {
    if !(1..=MAX_SITES).contains(&n) {
        return input(format!("chain length must be in 1..={MAX_SITES}, got {n}"));
    }
    Ok(())
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        check_sites(self.n)?;
        let bonds = self.n - 1;
        if self.jz.len() != bonds || self.jperp.len() != bonds || self.delta.len() != self.n {
            return input("chain coupling arrays have inconsistent lengths");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

pub fn build_hamiltonian(spec: &ChainSpec) -> Result<ComplexMatrix> {
    spec.validate()?;
    let layout = Layout::qubits(spec.n);
    let mut h = ComplexMatrix::zeros(layout.dim());
    for b in 0..spec.n - 1 {
        let pair = |a: Axis| layout.pauli_string(&[(b, a), (b + 1, a)]);
        if spec.jz[b] != 0.0 {
            h.axpy(C64::new(0.25 * spec.jz[b], 0.0), &pair(Axis::Z));
        }
        if spec.jperp[b] != 0.0 {
            h.axpy(C64::new(0.25 * spec.jperp[b], 0.0), &pair(Axis::X));
            h.axpy(C64::new(0.25 * spec.jperp[b], 0.0), &pair(Axis::Y));
        }
    }
    for (s, d) in spec.delta.iter().enumerate() {
        for (axis, v) in [(Axis::X, d[0]), (Axis::Y, d[1]), (Axis::Z, d[2])] {
            if v != 0.0 {
                h.axpy(C64::new(0.5 * v, 0.0), &layout.pauli_string(&[(s, axis)]));
            }
        }
    }
    Ok(h)
}
