//! State-averaged gate fidelity.
//!
//! For `V = U0^dagger U` on an `N`-dimensional space the fidelity averaged
//! over pure input states is `F = (N + |tr V|^2) / (N + N^2)`. Near the
//! identity this loses all precision, so it is evaluated through the
//! phase-stripped mismatch `delta^2 = ||1 - V |tr V| / tr V||_F^2`, which gives
//! `1 - F = delta^2 (4N - delta^2) / (4 (N + N^2))` without cancellation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::linalg::{ComplexMatrix, C64, ONE, ZERO};

const UNITARY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub delta2: f64,
    pub n: usize,
}

impl FidelityReport {
    pub fn infidelity(&self) -> f64 {
        let n = self.n as f64;
        self.delta2 * (4.0 * n - self.delta2) / (4.0 * (n + n * n))
    }
}

fn check_unitary(name: &str, u: &ComplexMatrix) -> Result<()> {
    let d = u.unitarity_defect();
    if d > UNITARY_TOL * (u.dim() as f64).sqrt() {
        return input(format!("{name} is not unitary (defect {d:e})"));
    }
    Ok(())
}

pub fn average_fidelity(u: &ComplexMatrix, u0: &ComplexMatrix) -> Result<FidelityReport> {
    if u.dim() != u0.dim() {
        return input(format!("dimension mismatch: {} vs {}", u.dim(), u0.dim()));
    }
    check_unitary("U", u)?;
    check_unitary("U0", u0)?;
    let v = u0.adjoint().matmul(u);
    let tr = v.trace();
    let phase = if tr.norm() > 0.0 { tr.conj() / tr.norm() } else { ONE };
    let n = v.dim();
    let mut delta2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let e = if i == j { ONE } else { ZERO } - v[(i, j)] * phase;
            delta2 += e.norm_sqr();
        }
    }
    let nf = n as f64;
    let fidelity = 1.0 - delta2 * (4.0 * nf - delta2) / (4.0 * (nf + nf * nf));
    Ok(FidelityReport { fidelity, delta2, n })
}

/// Direct-trace form of the average fidelity; loses precision near `F = 1`.
pub fn average_fidelity_direct(u: &ComplexMatrix, u0: &ComplexMatrix) -> f64 {
    let v = u0.adjoint().matmul(u);
    let n = v.dim() as f64;
    (n + v.trace().norm_sqr()) / (n + n * n)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

const MC_CHUNK: usize = 1024;

fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let mut psi: Vec<C64> =
        (0..dim).map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))).collect();
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    psi.iter_mut().for_each(|z| *z /= norm);
    psi
}

/// Averages `|<U0 psi | U psi>|^2` over Haar-random pure states. Sampling is
/// split into fixed chunks with their own streams, so the estimate does not
/// depend on the thread count.
pub fn mc_fidelity(u: &ComplexMatrix, u0: &ComplexMatrix, n_states: usize, seed: u64) -> Result<MonteCarloEstimate> {
    if n_states < 1000 {
        return input(format!("Monte Carlo fidelity needs at least 1000 states, got {n_states}"));
    }
    if u.dim() != u0.dim() {
        return input("dimension mismatch");
    }
    let v = u0.adjoint().matmul(u);
    let dim = v.dim();
    let chunks = n_states.div_ceil(MC_CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(n_states - c * MC_CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let psi = random_state(dim, &mut rng);
                let mut amp = ZERO;
                for i in 0..dim {
                    let mut vi = ZERO;
                    for j in 0..dim {
                        vi += v[(i, j)] * psi[j];
                    }
                    amp += psi[i].conj() * vi;
                }
                let f = amp.norm_sqr();
                s += f;
                s2 += f * f;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = n_states as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(MonteCarloEstimate { mean, stderr: (var / n).sqrt(), samples: n_states })
}

/// Haar-distributed unitary from Gram-Schmidt orthonormalization of a complex
/// Gaussian matrix.
pub fn random_unitary(dim: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<C64>> = (0..dim)
        .map(|_| (0..dim).map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))).collect())
        .collect();
    for k in 0..dim {
        for j in 0..k {
            let proj: C64 = (0..dim).map(|i| cols[j][i].conj() * cols[k][i]).sum();
            for i in 0..dim {
                let v = cols[j][i];
                cols[k][i] -= proj * v;
            }
        }
        let norm = cols[k].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        cols[k].iter_mut().for_each(|z| *z /= norm);
    }
    ComplexMatrix::from_fn(dim, |i, j| cols[j][i])
}
