//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code under test except for plain constructors.
#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use qnd_core::hilbert::{BasisSpec, PureState};
use qnd_core::photonics::{FockState, LinearCircuit, ModeLayout};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type C = Complex64;

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// Permanent by expansion over permutations; fine for n ≤ 4.
pub fn permanent(m: &DMatrix<C>) -> C {
    fn rec(m: &DMatrix<C>, row: usize, used: &mut Vec<bool>) -> C {
        if row == m.nrows() {
            return c(1.0, 0.0);
        }
        let mut sum = c(0.0, 0.0);
        for col in 0..m.ncols() {
            if !used[col] {
                used[col] = true;
                sum += m[(row, col)] * rec(m, row + 1, used);
                used[col] = false;
            }
        }
        sum
    }
    rec(m, 0, &mut vec![false; m.ncols()])
}

fn factorial(n: u8) -> f64 {
    (1..=n as u32).map(f64::from).product()
}

fn modes_of(pattern: &[u8]) -> Vec<usize> {
    pattern
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat(i).take(n as usize))
        .collect()
}

/// `⟨out|U|in⟩ = Per(U[out rows, in cols]) / √(Π in! Π out!)`.
pub fn transition_amplitude(u: &DMatrix<C>, input: &[u8], output: &[u8]) -> C {
    let rows = modes_of(output);
    let cols = modes_of(input);
    let sub = DMatrix::from_fn(rows.len(), cols.len(), |r, k| u[(rows[r], cols[k])]);
    let norm: f64 = input.iter().chain(output).map(|&n| factorial(n)).product();
    permanent(&sub) / norm.sqrt()
}

/// All two-photon occupation patterns over `m` modes.
pub fn two_photon_patterns(m: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for i in 0..m {
        for l in i..m {
            let mut p = vec![0u8; m];
            p[i] += 1;
            p[l] += 1;
            out.push(p);
        }
    }
    out
}

/// Output amplitudes of a two-photon state by the permanent formula.
pub fn permanent_lift(u: &DMatrix<C>, input: &BTreeMap<Vec<u8>, C>) -> BTreeMap<Vec<u8>, C> {
    let m = u.nrows();
    two_photon_patterns(m)
        .into_iter()
        .map(|out| {
            let amp = input.iter().map(|(inp, a)| a * transition_amplitude(u, inp, &out)).sum();
            (out, amp)
        })
        .collect()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<C> {
    DMatrix::from_fn(m, m, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
}

/// Unitary from the QR factor of a random complex matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<C> {
    gaussian_matrix(rng, m).qr().q()
}

pub fn random_amplitudes(rng: &mut ChaCha8Rng, n: usize) -> Vec<C> {
    let v: Vec<C> = (0..n)
        .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

pub fn random_qubit(rng: &mut ChaCha8Rng) -> PureState {
    let a = random_amplitudes(rng, 2);
    PureState::new(vec![2], a).unwrap()
}

pub fn random_fock(rng: &mut ChaCha8Rng, m: usize) -> BTreeMap<Vec<u8>, C> {
    let patterns = two_photon_patterns(m);
    let amps = random_amplitudes(rng, patterns.len());
    patterns.into_iter().zip(amps).collect()
}

pub fn circuit_from(u: DMatrix<C>) -> LinearCircuit {
    let layout = ModeLayout::new((0..u.nrows()).map(|i| format!("m{i}")).collect()).unwrap();
    LinearCircuit::from_unitary(layout, u).unwrap()
}

/// Largest amplitude difference between a library Fock state and an oracle map.
pub fn fock_distance(state: &FockState, oracle: &BTreeMap<Vec<u8>, C>) -> f64 {
    let mut worst = 0.0f64;
    for (p, a) in oracle {
        worst = worst.max((state.amplitude(p) - a).norm());
    }
    for (p, a) in state.amplitudes() {
        if !oracle.contains_key(p) {
            worst = worst.max(a.norm());
        }
    }
    worst
}

/// Explicit 4×4 CNOT QND on `signal`, with the measured basis given by the
/// columns of `basis`: `(B ⊗ I) · CNOT · (B† ⊗ I) · (ψ ⊗ m)`.
pub fn dense_cnot_joint(signal: &[C; 2], gamma: f64, basis: &DMatrix<C>) -> [C; 4] {
    let gb = (1.0 - gamma * gamma).sqrt();
    let meter = [c(gamma, 0.0), c(gb, 0.0)];
    let mut psi = [c(0.0, 0.0); 4];
    for s in 0..2 {
        for m in 0..2 {
            psi[2 * s + m] = signal[s] * meter[m];
        }
    }
    let zero = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let cnot = DMatrix::from_row_slice(
        4,
        4,
        &[
            one, zero, zero, zero, zero, one, zero, zero, zero, zero, zero, one, zero, zero, one, zero,
        ],
    );
    let lift = |b: &DMatrix<C>| {
        let mut big = DMatrix::from_element(4, 4, zero);
        for r in 0..2 {
            for k in 0..2 {
                for m in 0..2 {
                    big[(2 * r + m, 2 * k + m)] = b[(r, k)];
                }
            }
        }
        big
    };
    let rot_in = lift(&basis.adjoint());
    let rot_out = lift(basis);
    let v = nalgebra::DVector::from_column_slice(&psi);
    let out = rot_out * cnot * rot_in * v;
    [out[0], out[1], out[2], out[3]]
}

/// `|⟨b_a ⊗ k|joint⟩|²` for every signal basis vector `a` and meter outcome `k`.
pub fn dense_joint_probs(joint: &[C; 4], basis: &DMatrix<C>) -> [[f64; 2]; 2] {
    let mut q = [[0.0; 2]; 2];
    for a in 0..2 {
        for k in 0..2 {
            let amp: C = (0..2).map(|s| basis[(s, a)].conj() * joint[2 * s + k]).sum();
            q[a][k] = amp.norm_sqr();
        }
    }
    q
}

pub fn basis_matrix(b: &BasisSpec) -> DMatrix<C> {
    b.matrix().clone()
}

/// Random qubit basis: columns of a random 2×2 unitary.
pub fn random_basis(rng: &mut ChaCha8Rng) -> BasisSpec {
    BasisSpec::new(random_unitary(rng, 2)).unwrap()
}
