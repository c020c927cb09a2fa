//! Figures of merit for QND devices.
//!
//! Every fidelity compares two distributions over the measurement outcomes
//! with the classical fidelity `F(p, q) = (Σ √(p_i q_i))²`:
//!
//! * measurement fidelity `F_M = F(p_in, p_m)`, signal input vs meter readout;
//! * QND fidelity `F_QND = F(p_in, p_out)`, signal input vs signal output;
//! * QSP fidelity `F_QSP = Σ_i p_m,i · p(out = i | meter = i)`, the
//!   outcome-averaged probability that the signal is left in the eigenstate
//!   the meter reported. For qubits this is the likelihood `L`.
//!
//! Back-action is summarized by the pair `K = 2L − 1` (distinguishability of
//! the measured observable via the meter) and `K̄ = 2P_c − 1`
//! (distinguishability of conjugate eigenstates at the signal output). Any
//! device obeys `K² + K̄² ≤ 1`; a coherent one saturates it.
//!
//! For continuous-variable devices only the closed-form bridges are provided:
//! `F_M = √(2T_M/(1+T_M))` and `F_QND = √(2T_S/(1+T_S))`. The conditional
//! variance `V_s|m = ⟨δX_s,out²⟩(1 − C²(δX_s,out δM_out))` and the bound
//! `V_s|m · V_conj ≥ 1` need a Gaussian-state model and are not computed here.

use serde::{Deserialize, Serialize};

use crate::error::{QndError, Result};
use crate::hilbert::{ProbDist, PROB_SUM_TOL};

/// Absolute tolerance for comparing O(1) figures of merit.
pub const METRIC_TOL: f64 = 1e-9;

/// `(Σ_i √(p_i q_i))²`, clamped into [0, 1].
pub fn classical_fidelity(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    if p.len() != q.len() {
        return Err(QndError::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let s: f64 = p.probs().iter().zip(q.probs()).map(|(a, b)| (a * b).sqrt()).sum();
    Ok((s * s).clamp(0.0, 1.0))
}

/// `F_M = F(p_in, p_m)`.
pub fn measurement_fidelity(p_in: &ProbDist, p_m: &ProbDist) -> Result<f64> {
    classical_fidelity(p_in, p_m)
}

/// `F_QND = F(p_in, p_out)`.
pub fn qnd_fidelity(p_in: &ProbDist, p_out: &ProbDist) -> Result<f64> {
    classical_fidelity(p_in, p_out)
}

/// `F_QSP = Σ_i p_m,i · conditional_i`, where `conditional_i` is the
/// probability of finding the signal output in eigenstate `i` given meter
/// outcome `i`.
pub fn qsp_fidelity(p_m: &ProbDist, conditional: &[f64]) -> Result<f64> {
    if p_m.len() != conditional.len() {
        return Err(QndError::LengthMismatch {
            left: p_m.len(),
            right: conditional.len(),
        });
    }
    if let Some(&bad) = conditional
        .iter()
        .find(|c| !(-PROB_SUM_TOL..=1.0 + PROB_SUM_TOL).contains(*c))
    {
        return Err(QndError::out_of_range("conditional", bad, 0.0, 1.0));
    }
    let f: f64 = p_m.probs().iter().zip(conditional).map(|(p, c)| p * c.clamp(0.0, 1.0)).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Distinguishabilities of the measured observable (`k`) and its conjugate
/// (`k_bar`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistinguishabilityPair {
    pub k: f64,
    pub k_bar: f64,
    /// `k² + k̄²`.
    pub englert_lhs: f64,
    /// `|k² + k̄² − 1| < 1e-9`.
    pub saturated: bool,
}

/// Builds `K = 2L − 1`, `K̄ = 2P_c − 1` from the likelihood and the
/// conjugate-identification probability.
pub fn distinguishability(likelihood: f64, p_c: f64) -> Result<DistinguishabilityPair> {
    let unit = -1e-12..=1.0 + 1e-12;
    if !unit.contains(&likelihood) {
        return Err(QndError::out_of_range("likelihood", likelihood, 0.0, 1.0));
    }
    if !unit.contains(&p_c) {
        return Err(QndError::out_of_range("p_c", p_c, 0.0, 1.0));
    }
    let k = (2.0 * likelihood - 1.0).clamp(-1.0, 1.0);
    let k_bar = (2.0 * p_c - 1.0).clamp(-1.0, 1.0);
    let englert_lhs = k * k + k_bar * k_bar;
    Ok(DistinguishabilityPair {
        k,
        k_bar,
        englert_lhs,
        saturated: (englert_lhs - 1.0).abs() < METRIC_TOL,
    })
}

/// Joint outcome statistics of two observables: `q[i][j]` is the probability
/// of outcome `i` for observable A and `j` for observable B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDist {
    q: Vec<Vec<f64>>,
    eigen_a: Vec<f64>,
    eigen_b: Vec<f64>,
}

impl JointDist {
    pub fn new(q: Vec<Vec<f64>>, eigen_a: Vec<f64>, eigen_b: Vec<f64>) -> Result<Self> {
        Self::build(q, eigen_a, eigen_b, false)
    }

    /// Normalizes raw joint counts.
    pub fn from_counts(counts: Vec<Vec<f64>>, eigen_a: Vec<f64>, eigen_b: Vec<f64>) -> Result<Self> {
        Self::build(counts, eigen_a, eigen_b, true)
    }

    /// Two qubits read out in Z: outcome 0 ↦ +1, outcome 1 ↦ −1.
    pub fn qubit_z(q: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(q.iter().map(|r| r.to_vec()).collect(), vec![1.0, -1.0], vec![1.0, -1.0])
    }

    fn build(q: Vec<Vec<f64>>, eigen_a: Vec<f64>, eigen_b: Vec<f64>, normalize: bool) -> Result<Self> {
        if q.len() != eigen_a.len() {
            return Err(QndError::LengthMismatch {
                left: q.len(),
                right: eigen_a.len(),
            });
        }
        if let Some(row) = q.iter().find(|r| r.len() != eigen_b.len()) {
            return Err(QndError::LengthMismatch {
                left: row.len(),
                right: eigen_b.len(),
            });
        }
        let flat: Vec<f64> = q.iter().flatten().copied().collect();
        let dist = if normalize {
            ProbDist::from_weights(flat)?
        } else {
            ProbDist::new(flat)?
        };
        let cols = eigen_b.len();
        let q = dist.probs().chunks(cols).map(|c| c.to_vec()).collect();
        Ok(JointDist { q, eigen_a, eigen_b })
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.q
    }

    /// Marginal distribution of observable A.
    pub fn marginal_a(&self) -> Vec<f64> {
        self.q.iter().map(|r| r.iter().sum()).collect()
    }

    /// Marginal distribution of observable B.
    pub fn marginal_b(&self) -> Vec<f64> {
        (0..self.eigen_b.len()).map(|j| self.q.iter().map(|r| r[j]).sum()).collect()
    }

    fn moment(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (i, row) in self.q.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                acc += p * f(self.eigen_a[i], self.eigen_b[j]);
            }
        }
        acc
    }
}

/// Whether observables are used raw or as fluctuations about their means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    #[default]
    Raw,
    MeanSubtracted,
}

/// `C²(O_A O_B) = ¼|⟨O_A O_B⟩ + ⟨O_B O_A⟩|² / (⟨O_A²⟩⟨O_B²⟩)` with raw
/// observables.
pub fn correlation_c2(joint: &JointDist) -> Result<f64> {
    correlation_c2_with(joint, Centering::Raw)
}

/// [`correlation_c2`] with a choice of centering. The joint outcomes are
/// classical, so the symmetrized correlator reduces to `Σ q_ij a_i b_j`.
pub fn correlation_c2_with(joint: &JointDist, centering: Centering) -> Result<f64> {
    let (ma, mb) = match centering {
        Centering::Raw => (0.0, 0.0),
        Centering::MeanSubtracted => (joint.moment(|a, _| a), joint.moment(|_, b| b)),
    };
    let cross = joint.moment(|a, b| (a - ma) * (b - mb));
    let va = joint.moment(|a, _| (a - ma) * (a - ma));
    let vb = joint.moment(|_, b| (b - mb) * (b - mb));
    let denom = va * vb;
    if denom < 1e-15 {
        return Err(QndError::DegenerateObservable);
    }
    Ok((cross * cross / denom).clamp(0.0, 1.0))
}

/// The qubit shortcut `C² = 2F_QSP − 1`, clamped into [0, 1]. Meaningful for
/// `f_qsp ≥ 1/2`; smaller values (anti-correlated devices) clamp to 0.
pub fn c2_from_fqsp(f_qsp: f64) -> f64 {
    (2.0 * f_qsp - 1.0).clamp(0.0, 1.0)
}

fn cv_bridge(name: &'static str, t: f64) -> Result<f64> {
    // T > 1 would push the fidelity past 1 (toward √2 as T → ∞)
    if !(0.0..=1.0 + 1e-12).contains(&t) {
        return Err(QndError::out_of_range(name, t, 0.0, 1.0));
    }
    let t = t.min(1.0);
    Ok((2.0 * t / (1.0 + t)).sqrt())
}

/// `F_M = √(2T_M/(1+T_M))` from the signal-to-noise transfer to the meter.
pub fn fm_from_tm(t_m: f64) -> Result<f64> {
    cv_bridge("t_m", t_m)
}

/// `F_QND = √(2T_S/(1+T_S))` from the signal transfer coefficient.
pub fn fqnd_from_ts(t_s: f64) -> Result<f64> {
    cv_bridge("t_s", t_s)
}

/// Continuous-variable transfer coefficients and correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CVBridge {
    pub t_m: f64,
    pub t_s: f64,
    pub c2: f64,
}

impl CVBridge {
    pub fn new(t_m: f64, t_s: f64, c2: f64) -> Result<Self> {
        fm_from_tm(t_m)?;
        fqnd_from_ts(t_s)?;
        if !(0.0..=1.0).contains(&c2) {
            return Err(QndError::out_of_range("c2", c2, 0.0, 1.0));
        }
        Ok(CVBridge { t_m, t_s, c2 })
    }

    pub fn f_m(&self) -> f64 {
        fm_from_tm(self.t_m).expect("validated")
    }

    pub fn f_qnd(&self) -> f64 {
        fqnd_from_ts(self.t_s).expect("validated")
    }
}

/// Measurement and QND fidelity for one input of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFidelity {
    pub label: String,
    pub f_m: f64,
    pub f_qnd: f64,
}

/// Device-level fidelities over an input ensemble. The headline `f_m` and
/// `f_qnd` are worst-case (minimum over inputs); the means are reported too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub f_m: f64,
    pub f_qnd: f64,
    pub f_qsp: f64,
    pub f_m_mean: f64,
    pub f_qnd_mean: f64,
    pub per_input: Vec<InputFidelity>,
}

impl FidelityReport {
    pub fn from_inputs(per_input: Vec<InputFidelity>, f_qsp: f64) -> Result<Self> {
        if per_input.is_empty() {
            return Err(QndError::EmptyEnsemble);
        }
        let n = per_input.len() as f64;
        let min = |f: fn(&InputFidelity) -> f64| per_input.iter().map(f).fold(f64::INFINITY, f64::min);
        let mean = |f: fn(&InputFidelity) -> f64| per_input.iter().map(f).sum::<f64>() / n;
        Ok(FidelityReport {
            f_m: min(|x| x.f_m),
            f_qnd: min(|x| x.f_qnd),
            f_m_mean: mean(|x| x.f_m),
            f_qnd_mean: mean(|x| x.f_qnd),
            f_qsp,
            per_input,
        })
    }
}

/// Whichever fidelities a set of recorded distributions supports; used when
/// only some of `p_out`, `p_m` and the conditionals were measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedFidelities {
    pub f_m: Option<f64>,
    pub f_qnd: Option<f64>,
    pub f_qsp: Option<f64>,
}

pub fn fidelities_from_records(
    p_in: &ProbDist,
    p_out: Option<&ProbDist>,
    p_m: Option<&ProbDist>,
    conditional: Option<&[f64]>,
) -> Result<RecordedFidelities> {
    let f_m = p_m.map(|m| measurement_fidelity(p_in, m)).transpose()?;
    let f_qnd = p_out.map(|o| qnd_fidelity(p_in, o)).transpose()?;
    let f_qsp = match (p_m, conditional) {
        (Some(m), Some(c)) => Some(qsp_fidelity(m, c)?),
        _ => None,
    };
    Ok(RecordedFidelities { f_m, f_qnd, f_qsp })
}
