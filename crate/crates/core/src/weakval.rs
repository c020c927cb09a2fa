//! Post-selected weak and strong values of the logical observable
//! `n̂ = |1⟩⟨1|`, measured at variable strength with the CNOT device and
//! followed by a final measurement in the conjugate (`|±⟩`) basis.
//!
//! A meter outcome `k` at strength `γ` is described by the POVM element
//! `2Ê_k = 1 − (−1)^k (2γ²−1)(2n̂ − 1)`, so the meter record `r = ±1`
//! satisfies `⟨r⟩ = (2γ²−1)(2⟨n̂⟩ − 1)`. Post-selecting on the final outcome
//! and inverting that relation gives the post-selected mean of `n̂` at any
//! strength; as `γ → 1/√2` it tends to the weak value.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnot_qnd::{run, MeterPrep, ObservableBasis};
use crate::error::{QndError, Result};
use crate::hilbert::{born_distribution, c64, BasisSpec, CMatrix, PureState, EIGEN_TOL, ZERO_BRANCH_TOL};

/// `|⟨φ|ψ⟩|` below this makes a weak value undefined.
pub const OVERLAP_TOL: f64 = 1e-12;

/// `n̂ = diag(0, 1)`.
pub fn number_operator() -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c64(0.0, 0.0), c64(1.0, 0.0)]))
}

fn check_operator(x: &CMatrix, d: usize) -> Result<()> {
    if x.nrows() != d || x.ncols() != d {
        return Err(QndError::DimensionMismatch {
            expected: d,
            found: x.nrows(),
        });
    }
    let defect = (x - x.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if defect > EIGEN_TOL {
        return Err(QndError::InvalidDensity(format!(
            "observable is not Hermitian (deviation {defect:.3e})"
        )));
    }
    Ok(())
}

fn check_pair(psi: &PureState, phi: &PureState) -> Result<()> {
    if psi.dims() != phi.dims() {
        return Err(QndError::DimensionMismatch {
            expected: psi.dim(),
            found: phi.dim(),
        });
    }
    Ok(())
}

/// `Re ⟨φ|X|ψ⟩ / ⟨φ|ψ⟩`.
pub fn weak_value(x: &CMatrix, psi: &PureState, phi: &PureState) -> Result<f64> {
    check_pair(psi, phi)?;
    check_operator(x, psi.dim())?;
    let overlap = phi.inner(psi)?;
    if overlap.norm() <= OVERLAP_TOL {
        return Err(QndError::UndefinedWeakValue);
    }
    let x_psi = x * psi.to_column();
    let numer: Complex64 = phi.amps().iter().zip(x_psi.iter()).map(|(p, v)| p.conj() * v).sum();
    Ok((numer / overlap).re)
}

/// Spectral projectors of a Hermitian matrix, degenerate eigenvalues merged.
fn spectral_projectors(x: &CMatrix) -> Vec<(f64, CMatrix)> {
    let eig = SymmetricEigen::new(x.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out: Vec<(f64, CMatrix)> = Vec::new();
    for i in order {
        let lambda = eig.eigenvalues[i];
        let v = eig.eigenvectors.column(i);
        let proj = v * v.adjoint();
        match out.last_mut() {
            Some((l, p)) if (lambda - *l).abs() < EIGEN_TOL => *p += proj,
            _ => out.push((lambda, proj)),
        }
    }
    out
}

/// Conditional mean of `X` after a projective measurement of `X` on `ψ`,
/// given that a later measurement found `φ`:
/// `Σ_x x |⟨φ|Π_x|ψ⟩|² / Σ_x |⟨φ|Π_x|ψ⟩|²`.
pub fn strong_value_postselected(x: &CMatrix, psi: &PureState, phi: &PureState) -> Result<f64> {
    check_pair(psi, phi)?;
    check_operator(x, psi.dim())?;
    let (psi_c, phi_c) = (psi.to_column(), phi.to_column());
    let (mut num, mut den) = (0.0, 0.0);
    for (lambda, proj) in spectral_projectors(x) {
        let p = (phi_c.adjoint() * &proj * &psi_c)[(0, 0)].norm_sqr();
        num += lambda * p;
        den += p;
    }
    if den <= OVERLAP_TOL {
        return Err(QndError::EmptyPostSelection);
    }
    Ok(num / den)
}

/// Two-outcome POVM of the CNOT meter readout.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmPair {
    pub e0: CMatrix,
    pub e1: CMatrix,
}

impl PovmPair {
    /// `⟨ψ|Ê_k|ψ⟩`.
    pub fn probability(&self, k: usize, psi: &PureState) -> Result<f64> {
        let e = match k {
            0 => &self.e0,
            1 => &self.e1,
            _ => return Err(QndError::InvalidSubsystem { index: k, count: 2 }),
        };
        if psi.dims() != [2] {
            return Err(QndError::DimensionMismatch {
                expected: 2,
                found: psi.dim(),
            });
        }
        let c = psi.to_column();
        Ok((c.adjoint() * e * &c)[(0, 0)].re)
    }
}

/// `Ê_k = (1 − (−1)^k (2γ²−1)(2n̂ − 1)) / 2`.
pub fn povm(gamma: f64) -> Result<PovmPair> {
    let c = 2.0 * MeterPrep::new(gamma)?.gamma().powi(2) - 1.0;
    let diag = |a: f64, b: f64| CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c64(a, 0.0), c64(b, 0.0)]));
    Ok(PovmPair {
        e0: diag((1.0 + c) / 2.0, (1.0 - c) / 2.0),
        e1: diag((1.0 - c) / 2.0, (1.0 + c) / 2.0),
    })
}

/// Which final conjugate outcome is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PostSelect {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl PostSelect {
    fn index(self) -> usize {
        match self {
            PostSelect::Plus => 0,
            PostSelect::Minus => 1,
        }
    }

    pub fn state(self) -> PureState {
        match self {
            PostSelect::Plus => PureState::plus(),
            PostSelect::Minus => PureState::minus(),
        }
    }
}

impl std::str::FromStr for PostSelect {
    type Err = QndError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(PostSelect::Plus),
            "-" | "minus" => Ok(PostSelect::Minus),
            other => Err(QndError::config("post", format!("expected `plus` or `minus`, got `{other}`"))),
        }
    }
}

/// Post-selected means of `n̂` for both final outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostselectedMeans {
    pub plus_value: f64,
    pub minus_value: f64,
    pub p_plus: f64,
    pub p_minus: f64,
}

impl PostselectedMeans {
    pub fn value(&self, post: PostSelect) -> f64 {
        match post {
            PostSelect::Plus => self.plus_value,
            PostSelect::Minus => self.minus_value,
        }
    }

    /// `P(+)·plus + P(−)·minus`, which should equal `|β|²`.
    pub fn total(&self) -> f64 {
        self.p_plus * self.plus_value + self.p_minus * self.minus_value
    }
}

fn estimator_scale(gamma: f64) -> Result<f64> {
    let c = 2.0 * MeterPrep::new(gamma)?.gamma().powi(2) - 1.0;
    if c <= ZERO_BRANCH_TOL {
        return Err(QndError::EstimatorSingular);
    }
    Ok(c)
}

fn signal_state(alpha: Complex64, beta: Complex64) -> Result<PureState> {
    PureState::qubit(alpha, beta)
}

/// Closed form for the post-selected mean of `n̂` on `α|0⟩ + β|1⟩`:
///
/// ```text
/// ⟨n⟩₊ = (|β|² + 2γγ̄ Re[αβ*]) / (1 + 4γγ̄ Re[αβ]),   P(+) = (1 + 4γγ̄ Re[αβ]) / 2
/// ```
///
/// and the mirror expressions for `−`. The denominators carry `Re[αβ]`
/// while the numerators carry `Re[αβ*]`; for real amplitudes they agree.
/// [`postselected_mean_n_simulated`] derives the same quantity from the
/// joint state instead.
pub fn postselected_mean_n(alpha: Complex64, beta: Complex64, gamma: f64) -> Result<PostselectedMeans> {
    let psi = signal_state(alpha, beta)?;
    estimator_scale(gamma)?;
    let (a, b) = (psi.amps()[0], psi.amps()[1]);
    let gg = gamma * (1.0 - gamma * gamma).max(0.0).sqrt();
    let cross_conj = (a * b.conj()).re;
    let cross = (a * b).re;
    let beta2 = b.norm_sqr();
    let p_plus = (1.0 + 4.0 * gg * cross) / 2.0;
    let p_minus = (1.0 - 4.0 * gg * cross) / 2.0;
    if p_plus <= ZERO_BRANCH_TOL || p_minus <= ZERO_BRANCH_TOL {
        return Err(QndError::EmptyPostSelection);
    }
    Ok(PostselectedMeans {
        plus_value: (beta2 + 2.0 * gg * cross_conj) / (2.0 * p_plus),
        minus_value: (beta2 - 2.0 * gg * cross_conj) / (2.0 * p_minus),
        p_plus,
        p_minus,
    })
}

/// Exact joint probabilities `P(k, ±)` of meter outcome and final outcome.
fn joint_meter_final(psi: &PureState, gamma: f64) -> Result<[[f64; 2]; 2]> {
    let out = run(psi, MeterPrep::new(gamma)?, &ObservableBasis::z())?;
    let x = BasisSpec::qubit_x();
    let mut table = [[0.0; 2]; 2];
    for branch in &out.conditional {
        if let Some(post) = &branch.post {
            let f = born_distribution(post, &x, 0)?;
            table[branch.outcome] = [branch.prob * f.get(0), branch.prob * f.get(1)];
        }
    }
    Ok(table)
}

fn mean_from_table(table: &[[f64; 2]; 2], col: usize, c: f64) -> Result<(f64, f64)> {
    let p = table[0][col] + table[1][col];
    if p <= ZERO_BRANCH_TOL {
        return Err(QndError::EmptyPostSelection);
    }
    let r = (table[1][col] - table[0][col]) / p;
    Ok((0.5 * (1.0 + r / c), p))
}

/// Post-selected mean of `n̂` read off the simulated joint signal–meter
/// state: `½(1 + (P(1,φ) − P(0,φ)) / (P(φ)(2γ²−1)))`.
pub fn postselected_mean_n_simulated(alpha: Complex64, beta: Complex64, gamma: f64) -> Result<PostselectedMeans> {
    let c = estimator_scale(gamma)?;
    let table = joint_meter_final(&signal_state(alpha, beta)?, gamma)?;
    let (plus_value, p_plus) = mean_from_table(&table, 0, c)?;
    let (minus_value, p_minus) = mean_from_table(&table, 1, c)?;
    Ok(PostselectedMeans {
        plus_value,
        minus_value,
        p_plus,
        p_minus,
    })
}

/// Closed form next to simulation, with the largest absolute difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostselectionCrossCheck {
    pub closed_form: PostselectedMeans,
    pub simulated: PostselectedMeans,
    pub max_discrepancy: f64,
}

pub fn cross_check_postselected(alpha: Complex64, beta: Complex64, gamma: f64) -> Result<PostselectionCrossCheck> {
    let closed_form = postselected_mean_n(alpha, beta, gamma)?;
    let simulated = postselected_mean_n_simulated(alpha, beta, gamma)?;
    let max_discrepancy = [
        closed_form.plus_value - simulated.plus_value,
        closed_form.minus_value - simulated.minus_value,
        closed_form.p_plus - simulated.p_plus,
        closed_form.p_minus - simulated.p_minus,
    ]
    .iter()
    .fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(PostselectionCrossCheck {
        closed_form,
        simulated,
        max_discrepancy,
    })
}

/// Largest `γ` at which `⟨n⟩₊` is still negative for `α|0⟩ − √(1−α²)|1⟩`:
/// `√((1 + √(2α²−1)/α) / 2)`.
pub fn negativity_gamma_bound(alpha: f64) -> Result<f64> {
    if !(alpha > FRAC_1_SQRT_2 && alpha < 1.0) {
        return Err(QndError::out_of_range("alpha", alpha, FRAC_1_SQRT_2, 1.0));
    }
    let root = (2.0 * alpha * alpha - 1.0).sqrt() / alpha;
    Ok(((1.0 + root) / 2.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    Analytic,
    Sampled,
}

/// A post-selected mean of `n̂`, computed or sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakValueResult {
    pub value: f64,
    pub stderr: f64,
    pub shots: u64,
    pub gamma: f64,
    pub mode: EstimateMode,
    pub seed: Option<u64>,
    pub post: PostSelect,
    /// Shots that survived post-selection (sampled mode).
    pub retained: Option<u64>,
}

/// The closed-form value packaged like a sampled one.
pub fn analytic_result(alpha: Complex64, beta: Complex64, gamma: f64, post: PostSelect) -> Result<WeakValueResult> {
    let means = postselected_mean_n(alpha, beta, gamma)?;
    Ok(WeakValueResult {
        value: means.value(post),
        stderr: 0.0,
        shots: 0,
        gamma,
        mode: EstimateMode::Analytic,
        seed: None,
        post,
        retained: None,
    })
}

/// Shots drawn from one contiguous stretch of the key stream.
const BLOCK_SHOTS: u64 = 1 << 16;
/// Two `f64` draws of two words each.
const WORDS_PER_SHOT: u128 = 4;

/// Outcome probabilities of one shot: meter outcome `0` with `p_meter0`,
/// then the kept final outcome with `p_keep[k]`.
#[derive(Debug, Clone, Copy)]
struct ShotModel {
    p_meter0: f64,
    p_keep: [f64; 2],
}

/// Retained counts for meter outcomes 0 and 1 over shots `start..end`.
fn sample_block(model: ShotModel, seed: u64, start: u64, end: u64) -> [u64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(start as u128 * WORDS_PER_SHOT);
    let mut counts = [0u64; 2];
    for _ in start..end {
        let u_meter: f64 = rng.random();
        let u_final: f64 = rng.random();
        let k = usize::from(u_meter >= model.p_meter0);
        if u_final < model.p_keep[k] {
            counts[k] += 1;
        }
    }
    counts
}

/// Monte-Carlo estimate of the post-selected mean of `n̂`.
///
/// The CNOT device is simulated once; each shot draws the meter outcome from
/// `p_m` and then the final `±` outcome from the exact conditional signal
/// state, keeping the shot if it matches `post`. Shot `i` always uses words
/// `4i..4i+4` of the ChaCha8 stream for `seed`, so the result does not
/// depend on how shots are split across threads.
///
/// The standard error propagates the binomial spread of the retained `±1`
/// meter record through `½(1 + r̄/(2γ²−1))`. The meter frequency is smoothed
/// by half a count so that an all-one-sided record still reports a nonzero
/// error.
pub fn estimate_sampled(
    alpha: Complex64,
    beta: Complex64,
    gamma: f64,
    shots: u64,
    seed: u64,
    post: PostSelect,
) -> Result<WeakValueResult> {
    if shots == 0 {
        return Err(QndError::out_of_range("shots", 0.0, 1.0, f64::INFINITY));
    }
    let c = estimator_scale(gamma)?;
    let table = joint_meter_final(&signal_state(alpha, beta)?, gamma)?;
    let col = post.index();
    let p_meter = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let keep = |k: usize| {
        if p_meter[k] > 0.0 {
            table[k][col] / p_meter[k]
        } else {
            0.0
        }
    };
    let model = ShotModel {
        p_meter0: p_meter[0],
        p_keep: [keep(0), keep(1)],
    };

    let blocks = shots.div_ceil(BLOCK_SHOTS);
    let counts = (0..blocks)
        .into_par_iter()
        .map(|b| sample_block(model, seed, b * BLOCK_SHOTS, ((b + 1) * BLOCK_SHOTS).min(shots)))
        .reduce(|| [0, 0], |a, b| [a[0] + b[0], a[1] + b[1]]);

    let retained = counts[0] + counts[1];
    if retained == 0 {
        return Err(QndError::EmptyPostSelection);
    }
    let n = retained as f64;
    let mean_record = (counts[1] as f64 - counts[0] as f64) / n;
    let p_one = (counts[1] as f64 + 0.5) / (n + 1.0);
    let record_var = 4.0 * p_one * (1.0 - p_one);
    Ok(WeakValueResult {
        value: 0.5 * (1.0 + mean_record / c),
        stderr: 0.5 * (record_var / n).sqrt() / c,
        shots,
        gamma,
        mode: EstimateMode::Sampled,
        seed: Some(seed),
        post,
        retained: Some(retained),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn r(x: f64) -> Complex64 {
        c64(x, 0.0)
    }

    #[test]
    fn weak_value_examples() {
        let n = number_operator();
        let psi = PureState::qubit(r(0.8), r(-0.6)).unwrap();
        assert_abs_diff_eq!(weak_value(&n, &psi, &psi).unwrap(), 0.36, epsilon = 1e-12);
        assert_abs_diff_eq!(weak_value(&n, &psi, &PureState::one()).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(weak_value(&n, &psi, &PureState::zero()).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(weak_value(&n, &psi, &PureState::plus()).unwrap(), -3.0, epsilon = 1e-12);
        assert!(matches!(
            weak_value(&n, &PureState::zero(), &PureState::one()),
            Err(QndError::UndefinedWeakValue)
        ));
    }

    #[test]
    fn strong_value_examples() {
        let n = number_operator();
        let psi = PureState::qubit(r(0.8), r(-0.6)).unwrap();
        assert_abs_diff_eq!(
            strong_value_postselected(&n, &psi, &PureState::plus()).unwrap(),
            0.36,
            epsilon = 1e-12
        );
        let one = PureState::one();
        assert_abs_diff_eq!(
            strong_value_postselected(&n, &one, &PureState::minus()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(strong_value_postselected(&n, &PureState::zero(), &PureState::one()).is_err());
    }

    #[test]
    fn povm_limits() {
        let p = povm(1.0).unwrap();
        assert_abs_diff_eq!(p.e0[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.e1[(1, 1)].re, 1.0, epsilon = 1e-15);
        let p = povm(FRAC_1_SQRT_2).unwrap();
        assert_abs_diff_eq!(p.e0[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.e1[(1, 1)].re, 0.5, epsilon = 1e-15);
        let p = povm(0.8).unwrap();
        // Meter reads 1 on |0⟩ with γ̄² = 0.36.
        assert_abs_diff_eq!(p.e1[(0, 0)].re, 0.36, epsilon = 1e-12);
        assert_abs_diff_eq!(p.e1[(1, 1)].re, 0.64, epsilon = 1e-12);
        assert!(povm(0.6).is_err());
    }

    #[test]
    fn anomalous_mean() {
        let m = postselected_mean_n(r(0.8), r(-0.6), 0.8).unwrap();
        assert_abs_diff_eq!(m.plus_value, -9.0 / 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.total(), 0.36, epsilon = 1e-12);
        let strong = postselected_mean_n(r(0.8), r(-0.6), 1.0).unwrap();
        assert_abs_diff_eq!(strong.plus_value, 0.36, epsilon = 1e-12);
        let weak = postselected_mean_n(r(0.8), r(-0.6), FRAC_1_SQRT_2 + 1e-9).unwrap();
        assert_abs_diff_eq!(weak.plus_value, -3.0, epsilon = 1e-6);
        assert!(matches!(
            postselected_mean_n(r(0.8), r(-0.6), FRAC_1_SQRT_2),
            Err(QndError::EstimatorSingular)
        ));
    }

    #[test]
    fn simulation_matches_closed_form_for_real_amplitudes() {
        let x = cross_check_postselected(r(0.8), r(-0.6), 0.8).unwrap();
        assert!(x.max_discrepancy < 1e-12, "{x:?}");
    }

    #[test]
    fn complex_amplitudes_expose_printed_denominator() {
        // Re[αβ] = 0 here while Re[αβ*] = 0.48.
        let x = cross_check_postselected(c64(0.6, 0.0), c64(0.0, 0.8), 0.9).unwrap();
        assert!(x.max_discrepancy < 1e-12);
        let s = FRAC_1_SQRT_2;
        let x = cross_check_postselected(c64(s * 0.8, s * 0.8), c64(s * 0.6, -s * 0.6), 0.9).unwrap();
        assert!(x.max_discrepancy > 1e-3, "{x:?}");
        assert_abs_diff_eq!(x.closed_form.total(), 0.36, epsilon = 1e-12);
        assert_abs_diff_eq!(x.simulated.total(), 0.36, epsilon = 1e-12);
    }

    #[test]
    fn negativity_bound() {
        assert_abs_diff_eq!(negativity_gamma_bound(0.8).unwrap(), 0.911, epsilon = 1e-3);
        assert!(negativity_gamma_bound(0.7).is_err());
        assert!(negativity_gamma_bound(1.0).is_err());
        let g = negativity_gamma_bound(0.8).unwrap();
        let m = postselected_mean_n(r(0.8), r(-0.6), g).unwrap();
        assert_abs_diff_eq!(m.plus_value, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn sampled_reproducible_and_deterministic_edge() {
        let a = estimate_sampled(r(0.8), r(-0.6), 0.85, 20_000, 7, PostSelect::Plus).unwrap();
        let b = estimate_sampled(r(0.8), r(-0.6), 0.85, 20_000, 7, PostSelect::Plus).unwrap();
        assert_eq!(a, b);
        assert!(a.stderr > 0.0);
        let exact = postselected_mean_n(r(0.8), r(-0.6), 0.85).unwrap().plus_value;
        assert!((a.value - exact).abs() < 5.0 * a.stderr);

        for post in [PostSelect::Plus, PostSelect::Minus] {
            let e = estimate_sampled(r(0.0), r(1.0), 1.0, 1000, 3, post).unwrap();
            assert_eq!(e.value, 1.0);
        }
        assert!(estimate_sampled(r(0.8), r(-0.6), 0.8, 0, 1, PostSelect::Plus).is_err());
    }

    #[test]
    fn block_boundaries_do_not_shift_the_stream() {
        let model = ShotModel {
            p_meter0: 0.4,
            p_keep: [0.3, 0.7],
        };
        let whole = sample_block(model, 11, 0, 1000);
        let split = [sample_block(model, 11, 0, 337), sample_block(model, 11, 337, 1000)];
        assert_eq!(whole, [split[0][0] + split[1][0], split[0][1] + split[1][1]]);
    }
}
