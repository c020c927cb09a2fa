//! C interface to `qnd-core`.
//!
//! Every fallible function returns a [`QndStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and
//! can be read with [`qnd_last_error_message`]. Results that own memory are
//! opaque handles released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use qnd_core::cnot_qnd::{self, default_ensemble, MeterPrep, ObservableBasis, SweepRow};
use qnd_core::hilbert::{ProbDist, PureState};
use qnd_core::metrics::fidelities_from_records;
use qnd_core::photonics::{self, CoincidenceResult};
use qnd_core::weakval::{self, PostSelect};
use qnd_core::QndError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QndStatus {
    Ok = 0,
    NullPointer = 1,
    OutOfRange = 2,
    InvalidArgument = 3,
    InvalidState = 4,
    EmptyPostSelection = 5,
    Singular = 6,
    InvariantViolated = 7,
    Panic = 8,
}

impl From<&QndError> for QndStatus {
    fn from(e: &QndError) -> Self {
        match e {
            QndError::OutOfRange { .. } => QndStatus::OutOfRange,
            QndError::NotNormalized(_) | QndError::NonFinite | QndError::InvalidDensity(_) | QndError::NotUnitary(_) => {
                QndStatus::InvalidState
            }
            QndError::EmptyPostSelection | QndError::ZeroProbabilityBranch(_) => QndStatus::EmptyPostSelection,
            QndError::EstimatorSingular | QndError::UndefinedWeakValue | QndError::DegenerateObservable => QndStatus::Singular,
            QndError::Invariant(_) => QndStatus::InvariantViolated,
            _ => QndStatus::InvalidArgument,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, recording any error or panic for [`qnd_last_error_message`].
fn guard(f: impl FnOnce() -> Result<(), QndStatus>) -> QndStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QndStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            QndStatus::Panic
        }
    }
}

fn fail(e: QndError) -> QndStatus {
    let status = QndStatus::from(&e);
    set_error(e.to_string());
    status
}

fn null(what: &str) -> QndStatus {
    set_error(format!("`{what}` is null"));
    QndStatus::NullPointer
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], QndStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for one write.
unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), QndStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn qnd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn qnd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QndComplex {
    pub re: f64,
    pub im: f64,
}

impl From<QndComplex> for Complex64 {
    fn from(z: QndComplex) -> Self {
        Complex64::new(z.re, z.im)
    }
}

impl From<Complex64> for QndComplex {
    fn from(z: Complex64) -> Self {
        QndComplex { re: z.re, im: z.im }
    }
}

/// Fidelities from recorded distributions; a figure is NaN when the data
/// needed for it was not given.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QndFidelities {
    pub f_m: f64,
    pub f_qnd: f64,
    pub f_qsp: f64,
}

/// Fidelities from recorded outcome weights, each normalized before use.
/// `p_out`, `p_m` and `conditional` may be null; `conditional` needs `p_m`.
///
/// # Safety
/// Non-null pointers must be valid for `len` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn qnd_fidelities(
    p_in: *const f64,
    p_out: *const f64,
    p_m: *const f64,
    conditional: *const f64,
    len: usize,
    out: *mut QndFidelities,
) -> QndStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dist = |p: *const f64, what: &str| -> Result<Option<ProbDist>, QndStatus> {
            if p.is_null() {
                return Ok(None);
            }
            ProbDist::from_weights(slice(p, len, what)?.to_vec()).map(Some).map_err(fail)
        };
        let p_in = dist(p_in, "p_in")?.ok_or_else(|| null("p_in"))?;
        let p_out = dist(p_out, "p_out")?;
        let p_m = dist(p_m, "p_m")?;
        let cond = if conditional.is_null() {
            None
        } else {
            Some(slice(conditional, len, "conditional")?)
        };
        let f = fidelities_from_records(&p_in, p_out.as_ref(), p_m.as_ref(), cond).map_err(fail)?;
        write(
            out,
            QndFidelities {
                f_m: f.f_m.unwrap_or(f64::NAN),
                f_qnd: f.f_qnd.unwrap_or(f64::NAN),
                f_qsp: f.f_qsp.unwrap_or(f64::NAN),
            },
            "out",
        )
    })
}

/// Measured observable of the CNOT device.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QndBasis {
    Z = 0,
    X = 1,
    Y = 2,
}

impl From<QndBasis> for ObservableBasis {
    fn from(b: QndBasis) -> Self {
        match b {
            QndBasis::Z => ObservableBasis::z(),
            QndBasis::X => ObservableBasis::x(),
            QndBasis::Y => ObservableBasis::y(),
        }
    }
}

/// One strength of the CNOT device, characterized on the six-state ensemble.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QndSweepRow {
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

impl From<&SweepRow> for QndSweepRow {
    fn from(r: &SweepRow) -> Self {
        QndSweepRow {
            gamma: r.gamma,
            f_m: r.f_m,
            f_qnd: r.f_qnd,
            f_qsp: r.f_qsp,
            k: r.k,
            k_bar: r.k_bar,
            englert: r.englert,
            c2_raw: r.c2_raw,
            c2_shortcut: r.c2_shortcut,
        }
    }
}

/// Characterizes the CNOT device at meter strength `gamma`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qnd_cnot_characterize(gamma: f64, basis: QndBasis, out: *mut QndSweepRow) -> QndStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let basis = ObservableBasis::from(basis);
        let prep = MeterPrep::new(gamma).map_err(fail)?;
        let c = cnot_qnd::characterize(prep, &basis, &default_ensemble(&basis)).map_err(fail)?;
        let row = QndSweepRow {
            gamma,
            f_m: c.report.f_m,
            f_qnd: c.report.f_qnd,
            f_qsp: c.report.f_qsp,
            k: c.distinguishability.k,
            k_bar: c.distinguishability.k_bar,
            englert: c.distinguishability.englert_lhs,
            c2_raw: c.c2.raw,
            c2_shortcut: c.c2.shortcut,
        };
        write(out, row, "out")
    })
}

/// Rows of a strength sweep, in input order.
pub struct QndSweep {
    rows: Vec<SweepRow>,
}

/// Sweeps the CNOT device over `len` strengths.
///
/// # Safety
/// `gammas` must be valid for `len` reads and `out` for one write. The
/// handle written to `out` must be released with [`qnd_sweep_free`].
#[no_mangle]
pub unsafe extern "C" fn qnd_sweep_new(gammas: *const f64, len: usize, basis: QndBasis, out: *mut *mut QndSweep) -> QndStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let gammas = slice(gammas, len, "gammas")?;
        let basis = ObservableBasis::from(basis);
        let rows = cnot_qnd::strength_sweep(gammas, &basis, &default_ensemble(&basis)).map_err(fail)?;
        write(out, Box::into_raw(Box::new(QndSweep { rows })), "out")
    })
}

/// Number of rows; 0 for a null handle.
///
/// # Safety
/// `sweep` must be null or a live handle from [`qnd_sweep_new`].
#[no_mangle]
pub unsafe extern "C" fn qnd_sweep_len(sweep: *const QndSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.rows.len())
}

/// # Safety
/// `sweep` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qnd_sweep_row(sweep: *const QndSweep, index: usize, out: *mut QndSweepRow) -> QndStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = sweep.as_ref().ok_or_else(|| null("sweep"))?;
        let row = s.rows.get(index).ok_or_else(|| {
            set_error(format!("row {index} out of range (sweep has {})", s.rows.len()));
            QndStatus::OutOfRange
        })?;
        write(out, QndSweepRow::from(row), "out")
    })
}

/// # Safety
/// `sweep` must be null or a handle from [`qnd_sweep_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qnd_sweep_free(sweep: *mut QndSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}

/// One pass through the optical gate.
pub struct QndCoincidence {
    result: CoincidenceResult,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QndFailureBreakdown {
    pub both_in_signal: f64,
    pub both_in_meter: f64,
    pub dump_occupied: f64,
}

/// Runs the optical gate on signal `alpha|H⟩ + beta|V⟩` with meter
/// `meter_h|H⟩ + √(1−meter_h²)|V⟩` at reflectance `eta`.
///
/// # Safety
/// `out` must be valid for one write; release the handle with
/// [`qnd_coincidence_free`].
#[no_mangle]
pub unsafe extern "C" fn qnd_optics_run(
    alpha: QndComplex,
    beta: QndComplex,
    meter_h: f64,
    eta: f64,
    signal_loss: bool,
    out: *mut *mut QndCoincidence,
) -> QndStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if !(0.0..=1.0).contains(&meter_h) {
            set_error(format!("meter_h out of range [0, 1]: {meter_h}"));
            return Err(QndStatus::OutOfRange);
        }
        let signal = PureState::qubit(alpha.into(), beta.into()).map_err(fail)?;
        let meter = PureState::qubit(
            Complex64::new(meter_h, 0.0),
            Complex64::new((1.0 - meter_h * meter_h).sqrt(), 0.0),
        )
        .map_err(fail)?;
        let result = photonics::run_gate(&signal, &meter, eta, signal_loss).map_err(fail)?;
        write(out, Box::into_raw(Box::new(QndCoincidence { result })), "out")
    })
}

/// Heralding probability; NaN for a null handle.
///
/// # Safety
/// `c` must be null or a live handle from [`qnd_optics_run`].
#[no_mangle]
pub unsafe extern "C" fn qnd_coincidence_success_prob(c: *const QndCoincidence) -> f64 {
    c.as_ref().map_or(f64::NAN, |c| c.result.success_prob)
}

/// # Safety
/// `c` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qnd_coincidence_failures(c: *const QndCoincidence, out: *mut QndFailureBreakdown) -> QndStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let f = c.as_ref().ok_or_else(|| null("coincidence"))?.result.failure_breakdown;
        write(
            out,
            QndFailureBreakdown {
                both_in_signal: f.both_in_signal,
                both_in_meter: f.both_in_meter,
                dump_occupied: f.dump_occupied,
            },
            "out",
        )
    })
}

/// Heralded signal ⊗ meter state as four amplitudes `HH, HV, VH, VV`.
/// Fails with `EmptyPostSelection` when the gate never succeeds.
///
/// # Safety
/// `c` must be a live handle and `out` valid for four writes.
#[no_mangle]
pub unsafe extern "C" fn qnd_coincidence_joint(c: *const QndCoincidence, out: *mut QndComplex) -> QndStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = c.as_ref().ok_or_else(|| null("coincidence"))?;
        let joint = c
            .result
            .conditional_joint
            .as_ref()
            .ok_or_else(|| fail(QndError::EmptyPostSelection))?;
        for (i, a) in joint.amps().iter().enumerate() {
            out.add(i).write((*a).into());
        }
        Ok(())
    })
}

/// # Safety
/// `c` must be null or a handle from [`qnd_optics_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qnd_coincidence_free(c: *mut QndCoincidence) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Post-selected means of the `|1⟩` population for both final outcomes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QndPostselected {
    pub plus_value: f64,
    pub minus_value: f64,
    pub p_plus: f64,
    pub p_minus: f64,
}

/// Closed-form post-selected means for `alpha|0⟩ + beta|1⟩` at strength `gamma`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qnd_weak_postselected(
    alpha: QndComplex,
    beta: QndComplex,
    gamma: f64,
    out: *mut QndPostselected,
) -> QndStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = weakval::postselected_mean_n(alpha.into(), beta.into(), gamma).map_err(fail)?;
        write(
            out,
            QndPostselected {
                plus_value: m.plus_value,
                minus_value: m.minus_value,
                p_plus: m.p_plus,
                p_minus: m.p_minus,
            },
            "out",
        )
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QndPost {
    Plus = 0,
    Minus = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QndWeakEstimate {
    pub value: f64,
    pub std_error: f64,
    pub shots: u64,
    pub retained: u64,
}

/// Monte-Carlo estimate of the post-selected mean; the same arguments
/// always give the same bits.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qnd_weak_sampled(
    alpha: QndComplex,
    beta: QndComplex,
    gamma: f64,
    shots: u64,
    seed: u64,
    post: QndPost,
    out: *mut QndWeakEstimate,
) -> QndStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let post = match post {
            QndPost::Plus => PostSelect::Plus,
            QndPost::Minus => PostSelect::Minus,
        };
        let r = weakval::estimate_sampled(alpha.into(), beta.into(), gamma, shots, seed, post).map_err(fail)?;
        write(
            out,
            QndWeakEstimate {
                value: r.value,
                std_error: r.stderr,
                shots: r.shots,
                retained: r.retained.unwrap_or(0),
            },
            "out",
        )
    })
}

/// Largest strength at which the `+` mean stays negative for
/// `alpha|0⟩ − √(1−alpha²)|1⟩`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn qnd_weak_negativity_bound(alpha: f64, out: *mut f64) -> QndStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = weakval::negativity_gamma_bound(alpha).map_err(fail)?;
        write(out, g, "out")
    })
}
