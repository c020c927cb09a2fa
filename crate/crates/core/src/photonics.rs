//! Heralded linear-optical QND gate for photon polarization.
//!
//! Signal and meter photons are split into polarization rails
//! `s_H, s_V, m_H, m_V`. Only the horizontal rails meet, on a beamsplitter
//! of reflectance `η`, and two-photon interference there entangles the
//! meter polarization with the signal. The gate succeeds when exactly one
//! photon leaves on each side (and none in the dump, when signal loss is
//! modeled). A half-wave plate on the meter then turns the diagonal meter
//! readout into an H/V readout.
//!
//! Passive optics act linearly on creation operators, `a†_j → Σ_i U_ij b†_i`,
//! so the two-photon sector is computed exactly by expanding the product of
//! two transformed creation operators.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cnot_qnd::{characterize_device, Characterization, LabeledState, ObservableBasis, QndDevice};
use crate::error::{QndError, Result};
use crate::hilbert::{c64, unitarity_defect, CMatrix, PureState, NORM_TOL, PROB_SUM_TOL, ZERO_BRANCH_TOL};

pub const S_H: usize = 0;
pub const S_V: usize = 1;
pub const M_H: usize = 2;
pub const M_V: usize = 3;
/// Vacuum port that collects photons removed from the signal arm.
pub const DUMP: usize = 4;

/// Reflectance that makes the gate work as a projective QND measurement.
pub const ETA_QND: f64 = 1.0 / 3.0;
/// Transmittance of the signal-arm loss element.
pub const SIGNAL_LOSS_TRANSMITTANCE: f64 = 1.0 / 3.0;
/// Largest meter `H` amplitude for the variable-strength preparation.
pub const STRENGTH_MAX: f64 = 0.866_025_403_784_438_6; // √3/2

const UNITARY_TOL: f64 = 1e-12;

/// Named optical modes, indexed from zero in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ModeLayout {
    names: Vec<String>,
}

impl TryFrom<Vec<String>> for ModeLayout {
    type Error = QndError;

    fn try_from(names: Vec<String>) -> Result<Self> {
        ModeLayout::new(names)
    }
}

impl From<ModeLayout> for Vec<String> {
    fn from(l: ModeLayout) -> Self {
        l.names
    }
}

impl ModeLayout {
    pub fn new(names: Vec<String>) -> Result<Self> {
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(QndError::config("modes", format!("duplicate mode name `{n}`")));
            }
        }
        Ok(ModeLayout { names })
    }

    /// `s_H, s_V, m_H, m_V`, plus `s_loss` when `with_dump`.
    pub fn qnd(with_dump: bool) -> Self {
        let mut names: Vec<String> = ["s_H", "s_V", "m_H", "m_V"].map(String::from).into();
        if with_dump {
            names.push("s_loss".into());
        }
        ModeLayout { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A passive optical element acting on one or two modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Element {
    /// Reflectance-`eta` beamsplitter, matrix [`bs_matrix`].
    Beamsplitter { modes: [usize; 2], eta: f64 },
    /// Beamsplitter of the given transmittance coupling `mode` to an empty
    /// `dump` mode.
    Loss { mode: usize, dump: usize, transmittance: f64 },
    /// Half-wave plate at `angle_deg` on an (H, V) pair.
    HalfWavePlate { modes: [usize; 2], angle_deg: f64 },
}

impl Element {
    fn block(&self) -> Result<([usize; 2], [[f64; 2]; 2])> {
        match *self {
            Element::Beamsplitter { modes, eta } => Ok((modes, bs_matrix(eta)?)),
            Element::Loss {
                mode,
                dump,
                transmittance,
            } => Ok(([mode, dump], bs_matrix(transmittance)?)),
            Element::HalfWavePlate { modes, angle_deg } => Ok((modes, hwp_matrix(angle_deg.to_radians()))),
        }
    }

    fn embedded(&self, modes: usize) -> Result<CMatrix> {
        let (idx, b) = self.block()?;
        if idx[0] == idx[1] || idx.iter().any(|&i| i >= modes) {
            return Err(QndError::InvalidSubsystem {
                index: idx[0].max(idx[1]),
                count: modes,
            });
        }
        let mut u = CMatrix::identity(modes, modes);
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                u[(i, j)] = c64(b[r][c], 0.0);
            }
        }
        Ok(u)
    }
}

/// `[[√η, √(1−η)], [√(1−η), −√η]]`: the first output is `√η·in₀ + √(1−η)·in₁`.
pub fn bs_matrix(eta: f64) -> Result<[[f64; 2]; 2]> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(QndError::out_of_range("eta", eta, 0.0, 1.0));
    }
    let (r, t) = (eta.sqrt(), (1.0 - eta).sqrt());
    Ok([[r, t], [t, -r]])
}

/// Jones matrix of a half-wave plate with fast axis at `theta` from H.
/// At 22.5° it maps `|D⟩ → |H⟩` and `|A⟩ → |V⟩`.
pub fn hwp_matrix(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (2.0 * theta).sin_cos();
    [[c, s], [s, -c]]
}

/// Coincidence probability behind an `η` beamsplitter with indistinguishable
/// photons, relative to distinguishable ones: `(1−2η)² / ((1−η)² + η²)`.
pub fn hom_reduction(eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(QndError::out_of_range("eta", eta, 0.0, 1.0));
    }
    let classical = (1.0 - eta).powi(2) + eta * eta;
    Ok(((1.0 - 2.0 * eta).powi(2) / classical).clamp(0.0, 1.0))
}

/// Meter preparation balancing the gate at reflectance `eta`:
/// `√(1/(1+η))|H⟩ + √(η/(1+η))|V⟩`.
pub fn meter_prep(eta: f64) -> Result<PureState> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(QndError::out_of_range("eta", eta, 0.0, 1.0));
    }
    let n = 1.0 + eta;
    PureState::qubit(c64((1.0 / n).sqrt(), 0.0), c64((eta / n).sqrt(), 0.0))
}

/// Variable-strength meter `a|H⟩ + √(1−a²)|V⟩`; `a = 0` turns the
/// measurement off and `a = √3/2` gives the projective setting.
pub fn meter_prep_strength(a: f64) -> Result<PureState> {
    if !(0.0..=STRENGTH_MAX + 1e-12).contains(&a) {
        return Err(QndError::out_of_range("strength_a", a, 0.0, STRENGTH_MAX));
    }
    let a = a.min(STRENGTH_MAX);
    PureState::qubit(c64(a, 0.0), c64((1.0 - a * a).sqrt(), 0.0))
}

/// Circuit description: mode names and elements in the order light meets them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitDescription {
    pub modes: ModeLayout,
    pub elements: Vec<Element>,
}

/// A passive linear-optical network and its mode unitary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CircuitDescription", into = "CircuitDescription")]
pub struct LinearCircuit {
    layout: ModeLayout,
    elements: Vec<Element>,
    unitary: CMatrix,
}

impl TryFrom<CircuitDescription> for LinearCircuit {
    type Error = QndError;

    fn try_from(d: CircuitDescription) -> Result<Self> {
        LinearCircuit::new(d.modes, d.elements)
    }
}

impl From<LinearCircuit> for CircuitDescription {
    fn from(c: LinearCircuit) -> Self {
        CircuitDescription {
            modes: c.layout,
            elements: c.elements,
        }
    }
}

impl LinearCircuit {
    pub fn new(layout: ModeLayout, elements: Vec<Element>) -> Result<Self> {
        let m = layout.len();
        let mut unitary = CMatrix::identity(m, m);
        for e in &elements {
            unitary = e.embedded(m)? * unitary;
        }
        let defect = unitarity_defect(&unitary);
        if defect > UNITARY_TOL {
            return Err(QndError::NotUnitary(defect));
        }
        Ok(LinearCircuit {
            layout,
            elements,
            unitary,
        })
    }

    /// Circuit from an explicit mode unitary (no element list).
    pub fn from_unitary(layout: ModeLayout, unitary: CMatrix) -> Result<Self> {
        if unitary.nrows() != layout.len() || unitary.ncols() != layout.len() {
            return Err(QndError::DimensionMismatch {
                expected: layout.len(),
                found: unitary.nrows(),
            });
        }
        let defect = unitarity_defect(&unitary);
        if defect > UNITARY_TOL {
            return Err(QndError::NotUnitary(defect));
        }
        Ok(LinearCircuit {
            layout,
            elements: Vec::new(),
            unitary,
        })
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn modes(&self) -> usize {
        self.layout.len()
    }

    pub fn unitary(&self) -> &CMatrix {
        &self.unitary
    }
}

/// The QND network: `η` beamsplitter on `(s_H, m_H)`, optional
/// transmittance-1/3 loss from `s_V` into a dump mode, then a 22.5° HWP on
/// the meter. The polarizing beamsplitters only route polarizations into
/// the rails and back, which the rail labels already express.
pub fn build_qnd_circuit(eta: f64, include_signal_loss: bool) -> Result<LinearCircuit> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(QndError::out_of_range("eta", eta, 0.0, 1.0));
    }
    let mut elements = vec![Element::Beamsplitter { modes: [S_H, M_H], eta }];
    if include_signal_loss {
        elements.push(Element::Loss {
            mode: S_V,
            dump: DUMP,
            transmittance: SIGNAL_LOSS_TRANSMITTANCE,
        });
    }
    elements.push(Element::HalfWavePlate {
        modes: [M_H, M_V],
        angle_deg: 22.5,
    });
    LinearCircuit::new(ModeLayout::qnd(include_signal_loss), elements)
}

/// Occupation pattern, one count per mode.
pub type Pattern = Vec<u8>;

/// A two-photon state in the Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    modes: usize,
    amps: BTreeMap<Pattern, Complex64>,
}

impl FockState {
    pub const PHOTONS: usize = 2;

    pub fn new(modes: usize, amps: BTreeMap<Pattern, Complex64>) -> Result<Self> {
        let mut norm = 0.0;
        for (pattern, a) in &amps {
            if pattern.len() != modes {
                return Err(QndError::DimensionMismatch {
                    expected: modes,
                    found: pattern.len(),
                });
            }
            let n: usize = pattern.iter().map(|&k| k as usize).sum();
            if n != Self::PHOTONS {
                return Err(QndError::PhotonNumber {
                    expected: Self::PHOTONS,
                    found: n,
                });
            }
            if !a.re.is_finite() || !a.im.is_finite() {
                return Err(QndError::NonFinite);
            }
            norm += a.norm_sqr();
        }
        if (norm - 1.0).abs() > PROB_SUM_TOL {
            return Err(QndError::NotNormalized(norm));
        }
        Ok(FockState { modes, amps })
    }

    /// `(Σ_j a_j a†_j)(Σ_k b_k a†_k)|0⟩`, renormalized.
    pub fn from_photons(first: &[Complex64], second: &[Complex64]) -> Result<Self> {
        if first.len() != second.len() {
            return Err(QndError::LengthMismatch {
                left: first.len(),
                right: second.len(),
            });
        }
        let m = first.len();
        let mut amps = BTreeMap::new();
        for j in 0..m {
            for k in j..m {
                let coef = if j == k {
                    first[j] * second[j] * std::f64::consts::SQRT_2
                } else {
                    first[j] * second[k] + first[k] * second[j]
                };
                if coef.norm_sqr() > 0.0 {
                    amps.insert(pair_pattern(m, j, k), coef);
                }
            }
        }
        let norm: f64 = amps.values().map(|a| a.norm_sqr()).sum();
        if norm <= ZERO_BRANCH_TOL {
            return Err(QndError::NotNormalized(norm));
        }
        let scale = norm.sqrt().recip();
        amps.values_mut().for_each(|a| *a *= scale);
        FockState::new(m, amps)
    }

    /// Signal photon in `(s_H, s_V)` with polarization `signal`, meter photon
    /// in `(m_H, m_V)` with polarization `meter`, remaining modes empty.
    pub fn signal_meter(signal: &PureState, meter: &PureState, modes: usize) -> Result<Self> {
        for q in [signal, meter] {
            if q.dims() != [2] {
                return Err(QndError::DimensionMismatch {
                    expected: 2,
                    found: q.dim(),
                });
            }
        }
        if modes < 4 {
            return Err(QndError::DimensionMismatch {
                expected: 4,
                found: modes,
            });
        }
        let zero = c64(0.0, 0.0);
        let mut a = vec![zero; modes];
        let mut b = vec![zero; modes];
        a[S_H] = signal.amps()[0];
        a[S_V] = signal.amps()[1];
        b[M_H] = meter.amps()[0];
        b[M_V] = meter.amps()[1];
        FockState::from_photons(&a, &b)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn amplitudes(&self) -> &BTreeMap<Pattern, Complex64> {
        &self.amps
    }

    pub fn amplitude(&self, pattern: &[u8]) -> Complex64 {
        self.amps.get(pattern).copied().unwrap_or_default()
    }

    pub fn probability(&self, pattern: &[u8]) -> f64 {
        self.amplitude(pattern).norm_sqr()
    }
}

fn pair_pattern(modes: usize, i: usize, l: usize) -> Pattern {
    let mut p = vec![0u8; modes];
    p[i] += 1;
    p[l] += 1;
    p
}

fn occupied_pair(pattern: &[u8]) -> (usize, usize) {
    let mut it = pattern
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat(i).take(n as usize));
    let j = it.next().expect("two photons");
    let k = it.next().expect("two photons");
    (j, k)
}

/// Propagates a two-photon state through `circuit`.
pub fn lift_two_photon(circuit: &LinearCircuit, input: &FockState) -> Result<FockState> {
    let m = circuit.modes();
    if input.modes() != m {
        return Err(QndError::DimensionMismatch {
            expected: m,
            found: input.modes(),
        });
    }
    let u = circuit.unitary();
    let mut out: BTreeMap<Pattern, Complex64> = BTreeMap::new();
    for (pattern, &c) in input.amplitudes() {
        let (j, k) = occupied_pair(pattern);
        // |pattern⟩ = a†_j a†_k |0⟩ / √(Π n!)
        let c = if j == k { c * FRAC_1_SQRT_2 } else { c };
        for i in 0..m {
            for l in i..m {
                let amp = if i == l {
                    u[(i, j)] * u[(i, k)] * std::f64::consts::SQRT_2
                } else {
                    u[(i, j)] * u[(l, k)] + u[(l, j)] * u[(i, k)]
                };
                *out.entry(pair_pattern(m, i, l)).or_default() += c * amp;
            }
        }
    }
    out.retain(|_, a| a.norm_sqr() > 0.0);
    let norm: f64 = out.values().map(|a| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > PROB_SUM_TOL {
        return Err(QndError::NotNormalized(norm));
    }
    FockState::new(m, out)
}

/// Probabilities of the non-heralded output classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureBreakdown {
    pub both_in_signal: f64,
    pub both_in_meter: f64,
    pub dump_occupied: f64,
}

impl FailureBreakdown {
    pub fn total(&self) -> f64 {
        self.both_in_signal + self.both_in_meter + self.dump_occupied
    }
}

/// Outcome of one pass through the gate with coincidence post-selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceResult {
    pub success_prob: f64,
    /// Heralded signal ⊗ meter polarization state (H ↦ |0⟩, V ↦ |1⟩), after
    /// the meter wave plate; `None` when the gate never succeeds.
    pub conditional_joint: Option<PureState>,
    pub failure_breakdown: FailureBreakdown,
}

/// Sends a signal and a meter photon through the QND network at `eta` and
/// post-selects one photon on each side with the dump empty.
pub fn run_gate(signal_pol: &PureState, meter_pol: &PureState, eta: f64, include_signal_loss: bool) -> Result<CoincidenceResult> {
    let circuit = build_qnd_circuit(eta, include_signal_loss)?;
    run_circuit(&circuit, signal_pol, meter_pol)
}

/// [`run_gate`] on an already built network with the QND mode layout.
pub fn run_circuit(circuit: &LinearCircuit, signal_pol: &PureState, meter_pol: &PureState) -> Result<CoincidenceResult> {
    let input = FockState::signal_meter(signal_pol, meter_pol, circuit.modes())?;
    let output = lift_two_photon(circuit, &input)?;

    let mut failures = FailureBreakdown::default();
    let mut joint = [c64(0.0, 0.0); 4];
    let mut success = 0.0;
    for (pattern, a) in output.amplitudes() {
        let p = a.norm_sqr();
        let signal = pattern[S_H] + pattern[S_V];
        let meter = pattern[M_H] + pattern[M_V];
        if pattern.iter().skip(4).any(|&n| n > 0) {
            failures.dump_occupied += p;
        } else if signal == 2 {
            failures.both_in_signal += p;
        } else if meter == 2 {
            failures.both_in_meter += p;
        } else {
            let sp = usize::from(pattern[S_V] == 1);
            let mp = usize::from(pattern[M_V] == 1);
            joint[2 * sp + mp] = *a;
            success += p;
        }
    }
    let conditional_joint = if success > ZERO_BRANCH_TOL {
        let scale = success.sqrt().recip();
        Some(PureState::new(vec![2, 2], joint.iter().map(|a| a * scale).collect())?)
    } else {
        None
    };
    debug_assert!((success + failures.total() - 1.0).abs() < NORM_TOL.max(PROB_SUM_TOL));
    Ok(CoincidenceResult {
        success_prob: success,
        conditional_joint,
        failure_breakdown: failures,
    })
}

/// Success probability of a signal `|H⟩` with the balanced meter at `eta`:
/// `((1−2η)² + η²) / (1+η)`.
pub fn p_h(eta: f64) -> f64 {
    ((1.0 - 2.0 * eta).powi(2) + eta * eta) / (1.0 + eta)
}

/// Success probability of a signal `|V⟩` with the balanced meter at `eta`:
/// `2η / (1+η)`.
pub fn p_v(eta: f64) -> f64 {
    2.0 * eta / (1.0 + eta)
}

/// Closed-form success probability for signal `α|H⟩ + β|V⟩` and an arbitrary
/// meter polarization at reflectance `eta`.
///
/// An `H` signal photon succeeds through `m_H` with amplitude `(1−2η)·m_H`
/// and through `m_V` with `√η·m_V`; a `V` signal photon with `−√η·m_H` and
/// `m_V`, times the loss amplitude. The two signal rails never mix.
pub fn success_for_meter(
    alpha: Complex64,
    beta: Complex64,
    meter: &PureState,
    eta: f64,
    include_signal_loss: bool,
) -> Result<f64> {
    if meter.dims() != [2] {
        return Err(QndError::DimensionMismatch {
            expected: 2,
            found: meter.dim(),
        });
    }
    let (mh, mv) = (meter.amps()[0].norm_sqr(), meter.amps()[1].norm_sqr());
    let t = if include_signal_loss { SIGNAL_LOSS_TRANSMITTANCE } else { 1.0 };
    let h = mh * (1.0 - 2.0 * eta).powi(2) + mv * eta;
    let v = t * (mh * eta + mv);
    let n = alpha.norm_sqr() + beta.norm_sqr();
    Ok((alpha.norm_sqr() * h + beta.norm_sqr() * v) / n)
}

/// Success probability of the gate at `η = 1/3` with meter `|D′⟩`:
/// `(|α|² + 3|β|²)/6` without loss, `1/6` with it.
pub fn analytic_success(alpha: Complex64, beta: Complex64, include_signal_loss: bool) -> f64 {
    let n = alpha.norm_sqr() + beta.norm_sqr();
    if include_signal_loss {
        1.0 / 6.0
    } else {
        (alpha.norm_sqr() + 3.0 * beta.norm_sqr()) / (6.0 * n)
    }
}

/// The optical gate as a heralded QND device measuring `S₁` (H ↦ |0⟩).
#[derive(Debug, Clone)]
pub struct OpticalQnd {
    circuit: LinearCircuit,
    meter: PureState,
}

impl OpticalQnd {
    pub fn new(meter: PureState, eta: f64, include_signal_loss: bool) -> Result<Self> {
        Ok(OpticalQnd {
            circuit: build_qnd_circuit(eta, include_signal_loss)?,
            meter,
        })
    }

    /// Variable-strength configuration: `η = 1/3`, meter `a|H⟩ + √(1−a²)|V⟩`,
    /// signal loss on.
    pub fn with_strength(a: f64) -> Result<Self> {
        OpticalQnd::new(meter_prep_strength(a)?, ETA_QND, true)
    }

    pub fn circuit(&self) -> &LinearCircuit {
        &self.circuit
    }
}

impl QndDevice for OpticalQnd {
    fn respond(&self, signal: &PureState) -> Result<(f64, PureState)> {
        let r = run_circuit(&self.circuit, signal, &self.meter)?;
        match r.conditional_joint {
            Some(j) => Ok((r.success_prob, j)),
            None => Err(QndError::ZeroProbabilityBranch(r.success_prob)),
        }
    }
}

/// The six polarization states H, V, D, A, R, L.
pub fn polarization_ensemble() -> Vec<LabeledState> {
    let s = FRAC_1_SQRT_2;
    let q = |a: Complex64, b: Complex64| PureState::qubit(a, b).expect("unit vector");
    vec![
        LabeledState::new("H", PureState::zero()),
        LabeledState::new("V", PureState::one()),
        LabeledState::new("D", q(c64(s, 0.0), c64(s, 0.0))),
        LabeledState::new("A", q(c64(s, 0.0), c64(-s, 0.0))),
        LabeledState::new("R", q(c64(s, 0.0), c64(0.0, -s))),
        LabeledState::new("L", q(c64(s, 0.0), c64(0.0, s))),
    ]
}

/// Polarization by name (`H`, `V`, `D`, `A`, `R`, `L`, case-insensitive).
pub fn polarization(name: &str) -> Result<PureState> {
    polarization_ensemble()
        .into_iter()
        .find(|p| p.label.eq_ignore_ascii_case(name))
        .map(|p| p.state)
        .ok_or_else(|| QndError::config("signal", format!("unknown polarization `{name}`")))
}

/// The variable-strength gate characterized like the CNOT device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthPoint {
    pub a: f64,
    /// Heralding probability; the same for every input.
    pub success_prob: f64,
    /// `√F_QSP`: the CNOT meter amplitude with the same QSP fidelity.
    pub gamma_eff: f64,
    pub characterization: Characterization,
}

pub fn characterize_strength(a: f64) -> Result<StrengthPoint> {
    let device = OpticalQnd::with_strength(a)?;
    let characterization = characterize_device(&device, &ObservableBasis::stokes_s1(), &polarization_ensemble())?;
    let success_prob = device.respond(&PureState::zero())?.0;
    Ok(StrengthPoint {
        a,
        success_prob,
        gamma_eff: characterization.report.f_qsp.sqrt(),
        characterization,
    })
}
