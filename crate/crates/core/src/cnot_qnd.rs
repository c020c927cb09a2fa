//! Variable-strength QND measurement of a qubit with a CNOT gate.
//!
//! The signal is the control and the meter the target. With the meter
//! prepared in `γ|0⟩ + γ̄|1⟩`, `γ̄ = √(1−γ²)`, the gate maps
//! `α|0⟩ + β|1⟩` to
//!
//! ```text
//! αγ|0⟩|0⟩ + αγ̄|0⟩|1⟩ + βγ|1⟩|1⟩ + βγ̄|1⟩|0⟩
//! ```
//!
//! so `γ = 1` is a projective QND measurement and `γ = 1/√2` switches the
//! measurement off. Measuring another observable means rotating its
//! eigenbasis onto the computational basis before the gate and back after.
//!
//! [`characterize_device`] is written against the [`QndDevice`] trait so the
//! same figures of merit can be applied to the post-selected optical gate.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QndError, Result};
use crate::hilbert::{
    apply_unitary, born_distribution, c64, collapse_remainder, partial_trace, tensor_product, BasisSpec, CMatrix, DensityMatrix,
    ProbDist, PureState,
};
use crate::metrics::{
    c2_from_fqsp, correlation_c2, correlation_c2_with, distinguishability, measurement_fidelity, qnd_fidelity, qsp_fidelity,
    Centering, DistinguishabilityPair, FidelityReport, InputFidelity, JointDist,
};
use crate::report::format_significant;

/// Smallest meter amplitude `γ` (no measurement).
pub const GAMMA_MIN: f64 = FRAC_1_SQRT_2;
const GAMMA_SLACK: f64 = 1e-12;

/// Meter preparation `γ|0⟩ + γ̄|1⟩` with `γ ∈ [1/√2, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct MeterPrep {
    gamma: f64,
}

impl TryFrom<f64> for MeterPrep {
    type Error = QndError;

    fn try_from(g: f64) -> Result<Self> {
        MeterPrep::new(g)
    }
}

impl From<MeterPrep> for f64 {
    fn from(p: MeterPrep) -> f64 {
        p.gamma
    }
}

impl MeterPrep {
    /// Values below 1/√2 are rejected rather than reflected: they only
    /// duplicate the upper half with anti-correlated meter labels.
    pub fn new(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || !(GAMMA_MIN - GAMMA_SLACK..=1.0 + GAMMA_SLACK).contains(&gamma) {
            return Err(QndError::out_of_range("gamma", gamma, GAMMA_MIN, 1.0));
        }
        Ok(MeterPrep {
            gamma: gamma.clamp(GAMMA_MIN, 1.0),
        })
    }

    pub fn projective() -> Self {
        MeterPrep { gamma: 1.0 }
    }

    pub fn off() -> Self {
        MeterPrep { gamma: GAMMA_MIN }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `γ̄ = √(1 − γ²)`.
    pub fn gamma_bar(&self) -> f64 {
        (1.0 - self.gamma * self.gamma).max(0.0).sqrt()
    }
}

/// `γ|0⟩ + γ̄|1⟩`.
pub fn meter_state(prep: MeterPrep) -> PureState {
    PureState::from_unnormalized(vec![2], vec![c64(prep.gamma(), 0.0), c64(prep.gamma_bar(), 0.0)])
        .expect("meter amplitudes are normalized")
}

/// Eigenbasis of the measured signal observable; outcome `i` is read from
/// meter state `|i⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableBasis(BasisSpec);

impl ObservableBasis {
    pub fn new(basis: BasisSpec) -> Result<Self> {
        if basis.dim() != 2 {
            return Err(QndError::DimensionMismatch {
                expected: 2,
                found: basis.dim(),
            });
        }
        Ok(ObservableBasis(basis))
    }

    /// Computational basis, i.e. the observable Z.
    pub fn z() -> Self {
        ObservableBasis(BasisSpec::computational(2))
    }

    pub fn x() -> Self {
        ObservableBasis(BasisSpec::qubit_x())
    }

    pub fn y() -> Self {
        ObservableBasis(BasisSpec::qubit_y())
    }

    /// Stokes `S₁ = |H⟩⟨H| − |V⟩⟨V|` with H ↦ |0⟩ and V ↦ |1⟩.
    pub fn stokes_s1() -> Self {
        Self::z()
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "z" | "s1" => Ok(Self::z()),
            "x" => Ok(Self::x()),
            "y" => Ok(Self::y()),
            other => Err(QndError::config(
                "basis",
                format!("unknown basis `{other}` (expected z, x or y)"),
            )),
        }
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.0
    }

    /// The conjugate basis `{(b₀ ± b₁)/√2}`.
    pub fn conjugate(&self) -> BasisSpec {
        self.0.conjugate().expect("qubit basis")
    }
}

/// The CNOT in the computational basis, control first.
pub fn cnot_matrix() -> CMatrix {
    let (o, l) = (c64(0.0, 0.0), c64(1.0, 0.0));
    CMatrix::from_row_slice(
        4,
        4,
        &[
            l, o, o, o, //
            o, l, o, o, //
            o, o, o, l, //
            o, o, l, o,
        ],
    )
}

/// What the signal looks like after meter outcome `outcome`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalBranch {
    pub outcome: usize,
    pub prob: f64,
    /// Post-measurement signal state; `None` for a zero-probability outcome.
    pub post: Option<PureState>,
    /// Probability that the signal is then found in eigenstate `outcome`.
    pub p_match: Option<f64>,
}

/// Everything produced by one run of the CNOT QND measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QndOutcome {
    /// Signal ⊗ meter after the gate.
    pub joint: PureState,
    pub rho_s: DensityMatrix,
    pub rho_m: DensityMatrix,
    pub p_in: ProbDist,
    pub p_out: ProbDist,
    pub p_m: ProbDist,
    pub conditional: Vec<ConditionalBranch>,
}

/// Runs `R† ∘ CNOT ∘ (R ⊗ I)` on `signal ⊗ meter`, `R` taking `basis` onto
/// the computational basis.
pub fn run(signal: &PureState, prep: MeterPrep, basis: &ObservableBasis) -> Result<QndOutcome> {
    if signal.dims() != [2] {
        return Err(QndError::DimensionMismatch {
            expected: 2,
            found: signal.dim(),
        });
    }
    let rot = basis.spec().to_computational();
    let rotated = apply_unitary(&rot, signal, &[0])?;
    let entangled = apply_unitary(&cnot_matrix(), &tensor_product(&rotated, &meter_state(prep)), &[0, 1])?;
    let joint = apply_unitary(&rot.adjoint(), &entangled, &[0])?;
    outcome_from_joint(signal, joint, basis)
}

fn outcome_from_joint(signal: &PureState, joint: PureState, basis: &ObservableBasis) -> Result<QndOutcome> {
    let z = BasisSpec::computational(2);
    let rho = joint.to_density();
    let rho_s = partial_trace(&rho, &[0])?;
    let rho_m = partial_trace(&rho, &[1])?;
    let p_in = born_distribution(signal, basis.spec(), 0)?;
    let p_out = born_distribution(&rho_s, basis.spec(), 0)?;
    let p_m = born_distribution(&joint, &z, 1)?;
    let conditional = (0..2)
        .map(|k| conditional_branch(&joint, basis, k, p_m.get(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(QndOutcome {
        joint,
        rho_s,
        rho_m,
        p_in,
        p_out,
        p_m,
        conditional,
    })
}

fn conditional_branch(joint: &PureState, basis: &ObservableBasis, k: usize, p_k: f64) -> Result<ConditionalBranch> {
    match collapse_remainder(joint, &BasisSpec::computational(2), 1, k) {
        Ok((prob, post)) => {
            let p_match = born_distribution(&post, basis.spec(), 0)?.get(k);
            Ok(ConditionalBranch {
                outcome: k,
                prob,
                post: Some(post),
                p_match: Some(p_match),
            })
        }
        Err(QndError::ZeroProbabilityBranch(_)) => Ok(ConditionalBranch {
            outcome: k,
            prob: p_k,
            post: None,
            p_match: None,
        }),
        Err(e) => Err(e),
    }
}

/// A possibly heralded QND device acting on one signal qubit.
pub trait QndDevice {
    /// Heralding probability and the normalized heralded joint state,
    /// signal ⊗ meter. Meter outcome `i` (computational readout) reports
    /// eigenstate `i` of the measured observable.
    fn respond(&self, signal: &PureState) -> Result<(f64, PureState)>;
}

/// The deterministic CNOT device at a fixed strength and basis.
#[derive(Debug, Clone)]
pub struct CnotQnd {
    pub prep: MeterPrep,
    pub basis: ObservableBasis,
}

impl QndDevice for CnotQnd {
    fn respond(&self, signal: &PureState) -> Result<(f64, PureState)> {
        Ok((1.0, run(signal, self.prep, &self.basis)?.joint))
    }
}

/// A signal input with a human-readable name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledState {
    pub label: String,
    pub state: PureState,
}

impl LabeledState {
    pub fn new(label: impl Into<String>, state: PureState) -> Self {
        LabeledState {
            label: label.into(),
            state,
        }
    }
}

/// The six Pauli eigenstates, written relative to `basis`: the two
/// eigenstates, then `(b₀ ± b₁)/√2` and `(b₀ ± i b₁)/√2`.
pub fn default_ensemble(basis: &ObservableBasis) -> Vec<LabeledState> {
    let b = basis.spec().matrix();
    let s = FRAC_1_SQRT_2;
    let mix = |coef: num_complex::Complex64| -> PureState {
        let amps = (0..2).map(|r| (b[(r, 0)] + coef * b[(r, 1)]) * s).collect();
        PureState::from_unnormalized(vec![2], amps).expect("unit vector")
    };
    vec![
        LabeledState::new("0", basis.spec().state(0)),
        LabeledState::new("1", basis.spec().state(1)),
        LabeledState::new("+", mix(c64(1.0, 0.0))),
        LabeledState::new("-", mix(c64(-1.0, 0.0))),
        LabeledState::new("+i", mix(c64(0.0, 1.0))),
        LabeledState::new("-i", mix(c64(0.0, -1.0))),
    ]
}

/// Correlation between signal and meter outputs, computed two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C2Values {
    /// From the joint statistics with raw ±1 observables.
    pub raw: f64,
    /// `2F_QSP − 1`.
    pub shortcut: f64,
    /// Covariance form; `None` when either marginal is deterministic.
    pub mean_subtracted: Option<f64>,
}

/// Full characterization of a device against one observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characterization {
    pub report: FidelityReport,
    pub distinguishability: DistinguishabilityPair,
    pub c2: C2Values,
    /// Conjugate-identification probability behind `k_bar`.
    pub p_c: f64,
    /// Signal-outcome × meter-outcome statistics for the maximally mixed input.
    pub joint: JointDist,
}

/// Joint probability of (signal eigenstate `a` of `basis`, meter outcome `b`).
pub fn joint_outcomes(joint: &PureState, basis: &BasisSpec) -> Result<[[f64; 2]; 2]> {
    let rotated = apply_unitary(&basis.to_computational(), joint, &[0])?;
    let a = rotated.amps();
    Ok([[a[0].norm_sqr(), a[1].norm_sqr()], [a[2].norm_sqr(), a[3].norm_sqr()]])
}

/// Characterizes `device` against `basis`:
///
/// * `F_M` and `F_QND` per input of `ensemble`, aggregated as minimum and mean;
/// * `F_QSP` for the maximally mixed input, realized as the average over runs
///   on the two eigenstates (weighted by heralding probability);
/// * `K = 2F_QSP − 1`, and `K̄ = 2P_c − 1` where `P_c` is the probability of
///   identifying an injected conjugate eigenstate from the signal output.
pub fn characterize_device(
    device: &dyn QndDevice,
    basis: &ObservableBasis,
    ensemble: &[LabeledState],
) -> Result<Characterization> {
    if ensemble.is_empty() {
        return Err(QndError::EmptyEnsemble);
    }
    let z = BasisSpec::computational(2);
    let spec = basis.spec();

    let per_input = ensemble
        .iter()
        .map(|input| {
            let (_, joint) = device.respond(&input.state)?;
            let p_in = born_distribution(&input.state, spec, 0)?;
            let p_out = born_distribution(&joint, spec, 0)?;
            let p_m = born_distribution(&joint, &z, 1)?;
            Ok(InputFidelity {
                label: input.label.clone(),
                f_m: measurement_fidelity(&p_in, &p_m)?,
                f_qnd: qnd_fidelity(&p_in, &p_out)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mixed = [[0.0; 2]; 2];
    let mut weight = 0.0;
    for i in 0..2 {
        let (w, joint) = device.respond(&spec.state(i))?;
        let q = joint_outcomes(&joint, spec)?;
        for a in 0..2 {
            for b in 0..2 {
                mixed[a][b] += w * q[a][b];
            }
        }
        weight += w;
    }
    if weight <= 0.0 {
        return Err(QndError::ZeroProbabilityBranch(weight));
    }
    mixed.iter_mut().flatten().for_each(|x| *x /= weight);
    let joint = JointDist::qubit_z(mixed)?;
    let meter = ProbDist::new(joint.marginal_b())?;
    let conditional: Vec<f64> = (0..2)
        .map(|i| {
            let p = meter.get(i);
            if p > 0.0 {
                mixed[i][i] / p
            } else {
                0.0
            }
        })
        .collect();
    let f_qsp = qsp_fidelity(&meter, &conditional)?;

    let conj = basis.conjugate();
    let (mut correct, mut conj_weight) = (0.0, 0.0);
    for j in 0..2 {
        let (w, joint) = device.respond(&conj.state(j))?;
        correct += w * born_distribution(&joint, &conj, 0)?.get(j);
        conj_weight += w;
    }
    if conj_weight <= 0.0 {
        return Err(QndError::ZeroProbabilityBranch(conj_weight));
    }
    let p_c = correct / conj_weight;

    let c2 = C2Values {
        raw: correlation_c2(&joint)?,
        shortcut: c2_from_fqsp(f_qsp),
        mean_subtracted: correlation_c2_with(&joint, Centering::MeanSubtracted).ok(),
    };
    Ok(Characterization {
        report: FidelityReport::from_inputs(per_input, f_qsp)?,
        distinguishability: distinguishability(f_qsp, p_c)?,
        c2,
        p_c,
        joint,
    })
}

/// Characterizes the CNOT device at strength `prep`.
pub fn characterize(prep: MeterPrep, basis: &ObservableBasis, ensemble: &[LabeledState]) -> Result<Characterization> {
    let device = CnotQnd {
        prep,
        basis: basis.clone(),
    };
    characterize_device(&device, basis, ensemble)
}

/// CSV header of a strength sweep.
pub const SWEEP_CSV_HEADER: [&str; 9] = [
    "gamma",
    "f_m",
    "f_qnd",
    "f_qsp",
    "k",
    "k_bar",
    "englert",
    "c2_raw",
    "c2_shortcut",
];

/// One row of a strength sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub f_m: f64,
    pub f_qnd: f64,
    pub f_qsp: f64,
    pub k: f64,
    pub k_bar: f64,
    pub englert: f64,
    pub c2_raw: f64,
    pub c2_shortcut: f64,
}

impl SweepRow {
    fn values(&self) -> [f64; 9] {
        [
            self.gamma,
            self.f_m,
            self.f_qnd,
            self.f_qsp,
            self.k,
            self.k_bar,
            self.englert,
            self.c2_raw,
            self.c2_shortcut,
        ]
    }
}

/// `n` evenly spaced strengths from 1/√2 to 1 inclusive.
pub fn gamma_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![1.0],
        _ => (0..n)
            .map(|i| GAMMA_MIN + (1.0 - GAMMA_MIN) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Characterizes every strength in `gammas`; rows come back in input order.
pub fn strength_sweep(gammas: &[f64], basis: &ObservableBasis, ensemble: &[LabeledState]) -> Result<Vec<SweepRow>> {
    gammas
        .par_iter()
        .map(|&g| {
            let c = characterize(MeterPrep::new(g)?, basis, ensemble)?;
            let d = c.distinguishability;
            Ok(SweepRow {
                gamma: g,
                f_m: c.report.f_m,
                f_qnd: c.report.f_qnd,
                f_qsp: c.report.f_qsp,
                k: d.k,
                k_bar: d.k_bar,
                englert: d.englert_lhs,
                c2_raw: c.c2.raw,
                c2_shortcut: c.c2.shortcut,
            })
        })
        .collect()
}

/// Writes a sweep as CSV with 12 significant digits per value.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER)?;
    for row in rows {
        w.write_record(row.values().iter().map(|v| format_significant(*v, 12)))?;
    }
    w.flush()
}
