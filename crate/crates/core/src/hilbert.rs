//! Dense finite-dimensional state algebra.
//!
//! Composite systems are ordered big-endian: subsystem 0 is the leftmost
//! tensor factor, so for a signal–meter pair written |s⟩|m⟩ the signal is
//! subsystem 0 and the meter subsystem 1. Spaces here are tiny (at most a
//! few tens of amplitudes), so everything is stored densely.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QndError, Result};

/// A complex probability amplitude.
pub type ComplexAmp = Complex64;

/// Dense complex matrix used for operators and density matrices.
pub type CMatrix = DMatrix<Complex64>;

/// Tolerance on state normalization and basis orthonormality.
pub const NORM_TOL: f64 = 1e-12;
/// Tolerance on the sum of a probability distribution.
pub const PROB_SUM_TOL: f64 = 1e-10;
/// Most negative probability that is treated as rounding noise.
pub const NEG_PROB_TOL: f64 = 1e-12;
/// Branches less likely than this cannot be renormalized.
pub const ZERO_BRANCH_TOL: f64 = 1e-14;
/// Smallest eigenvalue accepted in a density matrix.
pub const EIGEN_TOL: f64 = 1e-10;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Row-major strides for a big-endian composite index.
#[derive(Debug, Clone)]
struct Layout {
    dims: Vec<usize>,
    strides: Vec<usize>,
}

impl Layout {
    fn new(dims: &[usize]) -> Self {
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        Layout {
            dims: dims.to_vec(),
            strides,
        }
    }

    fn total(&self) -> usize {
        self.dims.iter().product()
    }

    fn digit(&self, index: usize, k: usize) -> usize {
        (index / self.strides[k]) % self.dims[k]
    }

    /// Index with digit `k` replaced by `value`.
    fn with_digit(&self, index: usize, k: usize, value: usize) -> usize {
        index - self.digit(index, k) * self.strides[k] + value * self.strides[k]
    }

    /// Composite index of the digits listed in `subs`, big-endian in `subs` order.
    fn sub_index(&self, index: usize, subs: &[usize]) -> usize {
        subs.iter().fold(0, |acc, &k| acc * self.dims[k] + self.digit(index, k))
    }

    /// Index of `index` with every digit in `subs` zeroed; identifies the "rest".
    fn rest_index(&self, index: usize, subs: &[usize]) -> usize {
        subs.iter().fold(index, |acc, &k| acc - self.digit(acc, k) * self.strides[k])
    }

    /// Overwrite the digits in `subs` with the big-endian decomposition of `sub`.
    fn set_sub(&self, base: usize, subs: &[usize], mut sub: usize) -> usize {
        let mut index = base;
        for &k in subs.iter().rev() {
            let d = self.dims[k];
            index = self.with_digit(index, k, sub % d);
            sub /= d;
        }
        index
    }
}

fn check_subsystems(subs: &[usize], count: usize) -> Result<()> {
    for (i, &s) in subs.iter().enumerate() {
        if s >= count || subs[..i].contains(&s) {
            return Err(QndError::InvalidSubsystem { index: s, count });
        }
    }
    Ok(())
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.contains(&0) {
        return Err(QndError::DimensionMismatch { expected: 1, found: 0 });
    }
    Ok(())
}

/// Largest entry of |U†U − I|, or infinity for non-square input.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    if u.nrows() != u.ncols() {
        return f64::INFINITY;
    }
    let gram = u.adjoint() * u;
    let n = u.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - c64(target, 0.0)).norm());
        }
    }
    worst
}

/// Kronecker product of two operators, left factor first.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// A normalized pure state on a composite space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRecord", into = "StateRecord")]
pub struct PureState {
    dims: Vec<usize>,
    amps: Vec<Complex64>,
}

/// Wire form `{dims, re, im}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateRecord {
    dims: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl TryFrom<StateRecord> for PureState {
    type Error = QndError;

    fn try_from(r: StateRecord) -> Result<Self> {
        if r.re.len() != r.im.len() {
            return Err(QndError::LengthMismatch {
                left: r.re.len(),
                right: r.im.len(),
            });
        }
        let amps = r.re.iter().zip(&r.im).map(|(&x, &y)| c64(x, y)).collect();
        PureState::new(r.dims, amps)
    }
}

impl From<PureState> for StateRecord {
    fn from(s: PureState) -> Self {
        StateRecord {
            re: s.amps.iter().map(|a| a.re).collect(),
            im: s.amps.iter().map(|a| a.im).collect(),
            dims: s.dims,
        }
    }
}

impl PureState {
    /// Validated constructor; the amplitudes must already be normalized.
    pub fn new(dims: Vec<usize>, amps: Vec<Complex64>) -> Result<Self> {
        check_dims(&dims)?;
        let total: usize = dims.iter().product();
        if amps.len() != total {
            return Err(QndError::DimensionMismatch {
                expected: total,
                found: amps.len(),
            });
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(QndError::NonFinite);
        }
        let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(QndError::NotNormalized(n));
        }
        Ok(PureState { dims, amps })
    }

    /// Normalizes `amps` before validating.
    pub fn from_unnormalized(dims: Vec<usize>, amps: Vec<Complex64>) -> Result<Self> {
        let n: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !n.is_finite() {
            return Err(QndError::NonFinite);
        }
        if n < ZERO_BRANCH_TOL {
            return Err(QndError::NotNormalized(n));
        }
        let scale = 1.0 / n.sqrt();
        PureState::new(dims, amps.into_iter().map(|a| a * scale).collect())
    }

    pub fn basis_state(dims: Vec<usize>, index: usize) -> Result<Self> {
        check_dims(&dims)?;
        let total: usize = dims.iter().product();
        if index >= total {
            return Err(QndError::DimensionMismatch {
                expected: total,
                found: index,
            });
        }
        let mut amps = vec![Complex64::default(); total];
        amps[index] = c64(1.0, 0.0);
        Ok(PureState { dims, amps })
    }

    /// α|0⟩ + β|1⟩.
    pub fn qubit(alpha: Complex64, beta: Complex64) -> Result<Self> {
        PureState::new(vec![2], vec![alpha, beta])
    }

    pub fn zero() -> Self {
        Self::fixed_qubit(c64(1.0, 0.0), c64(0.0, 0.0))
    }

    pub fn one() -> Self {
        Self::fixed_qubit(c64(0.0, 0.0), c64(1.0, 0.0))
    }

    pub fn plus() -> Self {
        Self::fixed_qubit(c64(FRAC_1_SQRT_2, 0.0), c64(FRAC_1_SQRT_2, 0.0))
    }

    pub fn minus() -> Self {
        Self::fixed_qubit(c64(FRAC_1_SQRT_2, 0.0), c64(-FRAC_1_SQRT_2, 0.0))
    }

    pub fn plus_i() -> Self {
        Self::fixed_qubit(c64(FRAC_1_SQRT_2, 0.0), c64(0.0, FRAC_1_SQRT_2))
    }

    pub fn minus_i() -> Self {
        Self::fixed_qubit(c64(FRAC_1_SQRT_2, 0.0), c64(0.0, -FRAC_1_SQRT_2))
    }

    fn fixed_qubit(a: Complex64, b: Complex64) -> Self {
        PureState {
            dims: vec![2],
            amps: vec![a, b],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn subsystem_count(&self) -> usize {
        self.dims.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        if self.dims != other.dims {
            return Err(QndError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// |⟨self|other⟩|².
    pub fn overlap(&self, other: &PureState) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Equality up to a global phase: |⟨a|b⟩| ≥ 1 − tol.
    pub fn approx_eq_up_to_phase(&self, other: &PureState, tol: f64) -> bool {
        self.inner(other).map(|z| z.norm() >= 1.0 - tol).unwrap_or(false)
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }

    /// Column vector view.
    pub fn to_column(&self) -> CMatrix {
        CMatrix::from_column_slice(self.dim(), 1, &self.amps)
    }
}

/// A density operator on a composite space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRecord", into = "StateRecord")]
pub struct DensityMatrix {
    dims: Vec<usize>,
    entries: CMatrix,
}

impl TryFrom<StateRecord> for DensityMatrix {
    type Error = QndError;

    fn try_from(r: StateRecord) -> Result<Self> {
        check_dims(&r.dims)?;
        let n: usize = r.dims.iter().product();
        if r.re.len() != n * n || r.im.len() != n * n {
            return Err(QndError::DimensionMismatch {
                expected: n * n,
                found: r.re.len().min(r.im.len()),
            });
        }
        let entries = CMatrix::from_fn(n, n, |i, j| c64(r.re[i * n + j], r.im[i * n + j]));
        DensityMatrix::new(r.dims, entries)
    }
}

impl From<DensityMatrix> for StateRecord {
    fn from(d: DensityMatrix) -> Self {
        let n = d.entries.nrows();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                re.push(d.entries[(i, j)].re);
                im.push(d.entries[(i, j)].im);
            }
        }
        StateRecord { dims: d.dims, re, im }
    }
}

impl DensityMatrix {
    /// Validated constructor: Hermitian, unit trace, positive semidefinite.
    pub fn new(dims: Vec<usize>, entries: CMatrix) -> Result<Self> {
        check_dims(&dims)?;
        let n: usize = dims.iter().product();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(QndError::DimensionMismatch {
                expected: n,
                found: entries.nrows(),
            });
        }
        let rho = DensityMatrix { dims, entries };
        rho.validate()?;
        Ok(rho)
    }

    pub fn from_pure(state: &PureState) -> Self {
        let v = state.to_column();
        DensityMatrix {
            dims: state.dims.clone(),
            entries: &v * v.adjoint(),
        }
    }

    /// Probability-weighted mixture of pure states on identical spaces.
    pub fn mixture(parts: &[(f64, PureState)]) -> Result<Self> {
        let first = parts.first().ok_or(QndError::EmptyEnsemble)?;
        let n = first.1.dim();
        let mut entries = CMatrix::zeros(n, n);
        for (w, s) in parts {
            if s.dims != first.1.dims {
                return Err(QndError::DimensionMismatch {
                    expected: n,
                    found: s.dim(),
                });
            }
            entries += DensityMatrix::from_pure(s).entries * c64(*w, 0.0);
        }
        DensityMatrix::new(first.1.dims.clone(), entries)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.entries;
        if m.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(QndError::NonFinite);
        }
        let herm = (m - m.adjoint()).iter().fold(0.0_f64, |w, a| w.max(a.norm()));
        if herm > NORM_TOL {
            return Err(QndError::InvalidDensity(format!("not Hermitian (deviation {herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > NORM_TOL {
            return Err(QndError::InvalidDensity(format!("trace {tr}")));
        }
        if let Some(&lo) = self.eigenvalues().iter().min_by(|a, b| a.total_cmp(b)) {
            if lo < -EIGEN_TOL {
                return Err(QndError::InvalidDensity(format!("negative eigenvalue {lo:.3e}")));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// Tr(ρ²).
    pub fn purity(&self) -> f64 {
        (&self.entries * &self.entries).trace().re
    }

    /// Eigenvalues of the (Hermitian part of the) matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.entries + self.entries.adjoint()) * c64(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Re Tr(ρ O).
    pub fn expectation(&self, op: &CMatrix) -> Result<f64> {
        if op.nrows() != self.dim() || op.ncols() != self.dim() {
            return Err(QndError::DimensionMismatch {
                expected: self.dim(),
                found: op.nrows(),
            });
        }
        Ok((&self.entries * op).trace().re)
    }
}

/// Orthonormal measurement basis; outcome `i` corresponds to column `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    vectors: CMatrix,
}

impl BasisSpec {
    pub fn new(vectors: CMatrix) -> Result<Self> {
        if vectors.nrows() != vectors.ncols() || vectors.nrows() == 0 {
            return Err(QndError::InvalidBasis(format!(
                "expected a square matrix, got {}x{}",
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        let defect = unitarity_defect(&vectors);
        if defect > NORM_TOL {
            return Err(QndError::InvalidBasis(format!(
                "columns not orthonormal (deviation {defect:.3e})"
            )));
        }
        Ok(BasisSpec { vectors })
    }

    /// Basis from single-subsystem states, in outcome order.
    pub fn from_states(states: &[PureState]) -> Result<Self> {
        let d = states.len();
        if let Some(bad) = states.iter().find(|s| s.dim() != d) {
            return Err(QndError::DimensionMismatch {
                expected: d,
                found: bad.dim(),
            });
        }
        BasisSpec::new(CMatrix::from_fn(d, d, |i, j| states[j].amps[i]))
    }

    pub fn computational(d: usize) -> Self {
        BasisSpec {
            vectors: CMatrix::identity(d, d),
        }
    }

    /// {|+⟩, |−⟩}.
    pub fn qubit_x() -> Self {
        BasisSpec::from_states(&[PureState::plus(), PureState::minus()]).expect("X basis")
    }

    /// {|+i⟩, |−i⟩}.
    pub fn qubit_y() -> Self {
        BasisSpec::from_states(&[PureState::plus_i(), PureState::minus_i()]).expect("Y basis")
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.vectors
    }

    /// Basis vector `i` as a one-subsystem state.
    pub fn state(&self, i: usize) -> PureState {
        PureState {
            dims: vec![self.dim()],
            amps: self.vectors.column(i).iter().copied().collect(),
        }
    }

    /// Unitary taking this basis onto the computational one (B†).
    pub fn to_computational(&self) -> CMatrix {
        self.vectors.adjoint()
    }

    /// For a qubit basis {b₀, b₁}: the mutually unbiased {(b₀±b₁)/√2}.
    pub fn conjugate(&self) -> Result<BasisSpec> {
        if self.dim() != 2 {
            return Err(QndError::DimensionMismatch {
                expected: 2,
                found: self.dim(),
            });
        }
        let b0 = self.vectors.column(0);
        let b1 = self.vectors.column(1);
        let s = c64(FRAC_1_SQRT_2, 0.0);
        let plus = (b0 + b1) * s;
        let minus = (b0 - b1) * s;
        BasisSpec::new(CMatrix::from_columns(&[plus, minus]))
    }
}

/// A probability vector over measurement outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbDist {
    p: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ProbDist {
    type Error = QndError;

    fn try_from(p: Vec<f64>) -> Result<Self> {
        ProbDist::new(p)
    }
}

impl From<ProbDist> for Vec<f64> {
    fn from(d: ProbDist) -> Self {
        d.p
    }
}

impl ProbDist {
    /// Validates a probability vector. Entries down to −1e-12 are clamped to
    /// zero and the result renormalized; the sum must be 1 within 1e-10.
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let p = clamp_nonnegative(p)?;
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(QndError::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(ProbDist {
            p: p.into_iter().map(|x| x / total).collect(),
        })
    }

    /// Normalizes nonnegative weights (e.g. raw counts).
    pub fn from_weights(w: Vec<f64>) -> Result<Self> {
        let w = clamp_nonnegative(w)?;
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(QndError::InvalidDistribution("all weights are zero".into()));
        }
        Ok(ProbDist {
            p: w.into_iter().map(|x| x / total).collect(),
        })
    }

    pub fn uniform(d: usize) -> Self {
        ProbDist {
            p: vec![1.0 / d as f64; d],
        }
    }

    /// All weight on outcome `i`.
    pub fn point(d: usize, i: usize) -> Self {
        let mut p = vec![0.0; d];
        p[i] = 1.0;
        ProbDist { p }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, i: usize) -> f64 {
        self.p[i]
    }
}

fn clamp_nonnegative(p: Vec<f64>) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(QndError::InvalidDistribution("no outcomes".into()));
    }
    p.into_iter()
        .enumerate()
        .map(|(i, x)| {
            if !x.is_finite() {
                Err(QndError::InvalidDistribution(format!("entry {i} is not finite")))
            } else if x < -NEG_PROB_TOL {
                Err(QndError::InvalidDistribution(format!("entry {i} is negative: {x}")))
            } else {
                Ok(x.max(0.0))
            }
        })
        .collect()
}

/// Either kind of state, for operations that accept both.
#[derive(Debug, Clone, Copy)]
pub enum StateRef<'a> {
    Pure(&'a PureState),
    Mixed(&'a DensityMatrix),
}

impl<'a> From<&'a PureState> for StateRef<'a> {
    fn from(s: &'a PureState) -> Self {
        StateRef::Pure(s)
    }
}

impl<'a> From<&'a DensityMatrix> for StateRef<'a> {
    fn from(s: &'a DensityMatrix) -> Self {
        StateRef::Mixed(s)
    }
}

/// |a⟩ ⊗ |b⟩ with subsystem lists concatenated.
pub fn tensor_product(a: &PureState, b: &PureState) -> PureState {
    let mut amps = Vec::with_capacity(a.dim() * b.dim());
    for x in &a.amps {
        for y in &b.amps {
            amps.push(x * y);
        }
    }
    let mut dims = a.dims.clone();
    dims.extend_from_slice(&b.dims);
    PureState { dims, amps }
}

/// Reduced density matrix on the subsystems in `keep`, taken in ascending order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    check_subsystems(keep, rho.dims.len())?;
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    let layout = Layout::new(&rho.dims);
    let kept_dims: Vec<usize> = keep.iter().map(|&k| rho.dims[k]).collect();
    let n: usize = kept_dims.iter().product();
    let total = layout.total();
    let split: Vec<(usize, usize)> = (0..total)
        .map(|i| (layout.sub_index(i, &keep), layout.rest_index(i, &keep)))
        .collect();
    let mut out = CMatrix::zeros(n, n);
    for i in 0..total {
        for j in 0..total {
            if split[i].1 == split[j].1 {
                out[(split[i].0, split[j].0)] += rho.entries[(i, j)];
            }
        }
    }
    Ok(DensityMatrix {
        dims: kept_dims,
        entries: out,
    })
}

/// Born-rule outcome probabilities for measuring `subsystem` in `basis`,
/// marginalized over every other subsystem.
pub fn born_distribution<'a>(state: impl Into<StateRef<'a>>, basis: &BasisSpec, subsystem: usize) -> Result<ProbDist> {
    match state.into() {
        StateRef::Pure(psi) => {
            check_subsystems(&[subsystem], psi.dims.len())?;
            check_basis_dim(basis, psi.dims[subsystem])?;
            let p = (0..basis.dim())
                .map(|i| project_onto(psi, basis, subsystem, i).norm)
                .collect();
            ProbDist::new(p)
        }
        StateRef::Mixed(rho) => {
            check_subsystems(&[subsystem], rho.dims.len())?;
            check_basis_dim(basis, rho.dims[subsystem])?;
            let reduced = partial_trace(rho, &[subsystem])?;
            let b = basis.matrix();
            let diag = b.adjoint() * reduced.entries * b;
            ProbDist::new((0..basis.dim()).map(|i| diag[(i, i)].re).collect())
        }
    }
}

fn check_basis_dim(basis: &BasisSpec, d: usize) -> Result<()> {
    if basis.dim() != d {
        return Err(QndError::DimensionMismatch {
            expected: d,
            found: basis.dim(),
        });
    }
    Ok(())
}

/// Unnormalized remainder ⟨b_i|_k |ψ⟩ on the other subsystems.
struct Projection {
    dims: Vec<usize>,
    amps: Vec<Complex64>,
    norm: f64,
}

fn project_onto(psi: &PureState, basis: &BasisSpec, subsystem: usize, outcome: usize) -> Projection {
    let layout = Layout::new(&psi.dims);
    let rest_dims: Vec<usize> = psi
        .dims
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != subsystem)
        .map(|(_, &d)| d)
        .collect();
    let rest_subs: Vec<usize> = (0..psi.dims.len()).filter(|&k| k != subsystem).collect();
    let m: usize = rest_dims.iter().product();
    let mut amps = vec![Complex64::default(); m];
    let b = basis.matrix().column(outcome);
    for (i, a) in psi.amps.iter().enumerate() {
        let j = layout.digit(i, subsystem);
        amps[layout.sub_index(i, &rest_subs)] += b[j].conj() * a;
    }
    let norm = amps.iter().map(|a| a.norm_sqr()).sum();
    Projection {
        dims: rest_dims,
        amps,
        norm,
    }
}

/// Projective measurement of one subsystem with a known outcome.
///
/// Returns the Born probability and the renormalized post-measurement state,
/// which keeps the measured subsystem (now in the basis vector of `outcome`).
pub fn conditional_collapse(state: &PureState, basis: &BasisSpec, subsystem: usize, outcome: usize) -> Result<(f64, PureState)> {
    let (prob, rest) = collapse_remainder(state, basis, subsystem, outcome)?;
    let layout = Layout::new(&state.dims);
    let rest_subs: Vec<usize> = (0..state.dims.len()).filter(|&k| k != subsystem).collect();
    let b = basis.matrix().column(outcome);
    let amps = (0..state.dim())
        .map(|i| rest.amps[layout.sub_index(i, &rest_subs)] * b[layout.digit(i, subsystem)])
        .collect();
    Ok((
        prob,
        PureState {
            dims: state.dims.clone(),
            amps,
        },
    ))
}

/// Like [`conditional_collapse`], but returns the state of the unmeasured
/// subsystems only.
pub fn collapse_remainder(state: &PureState, basis: &BasisSpec, subsystem: usize, outcome: usize) -> Result<(f64, PureState)> {
    check_subsystems(&[subsystem], state.dims.len())?;
    check_basis_dim(basis, state.dims[subsystem])?;
    if outcome >= basis.dim() {
        return Err(QndError::DimensionMismatch {
            expected: basis.dim(),
            found: outcome,
        });
    }
    let proj = project_onto(state, basis, subsystem, outcome);
    if proj.norm < ZERO_BRANCH_TOL {
        return Err(QndError::ZeroProbabilityBranch(proj.norm));
    }
    let scale = 1.0 / proj.norm.sqrt();
    Ok((
        proj.norm,
        PureState {
            dims: proj.dims,
            amps: proj.amps.into_iter().map(|a| a * scale).collect(),
        },
    ))
}

/// Applies `u` to the listed subsystems (in the listed order) of `state`.
pub fn apply_unitary(u: &CMatrix, state: &PureState, subsystems: &[usize]) -> Result<PureState> {
    check_subsystems(subsystems, state.dims.len())?;
    let layout = Layout::new(&state.dims);
    let sub_dim: usize = subsystems.iter().map(|&k| state.dims[k]).product();
    if u.nrows() != sub_dim || u.ncols() != sub_dim {
        return Err(QndError::DimensionMismatch {
            expected: sub_dim,
            found: u.nrows(),
        });
    }
    let defect = unitarity_defect(u);
    if defect > NORM_TOL {
        return Err(QndError::NotUnitary(defect));
    }
    let mut out = vec![Complex64::default(); state.dim()];
    for (i, slot) in out.iter_mut().enumerate() {
        let row = layout.sub_index(i, subsystems);
        let base = layout.rest_index(i, subsystems);
        for col in 0..sub_dim {
            let src = layout.set_sub(base, subsystems, col);
            *slot += u[(row, col)] * state.amps[src];
        }
    }
    Ok(PureState {
        dims: state.dims.clone(),
        amps: out,
    })
}

/// Hadamard gate.
pub fn hadamard() -> CMatrix {
    let h = c64(FRAC_1_SQRT_2, 0.0);
    CMatrix::from_row_slice(2, 2, &[h, h, h, -h])
}

/// Z = |0⟩⟨0| − |1⟩⟨1|.
pub fn pauli_z() -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c64(1.0, 0.0), c64(-1.0, 0.0)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn amps_close(s: &PureState, expect: &[Complex64]) {
        assert_eq!(s.dim(), expect.len());
        for (a, b) in s.amps().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-12);
        }
    }

    fn r(x: f64) -> Complex64 {
        c64(x, 0.0)
    }

    #[test]
    fn tensor_of_basis_states() {
        let s = tensor_product(&PureState::zero(), &PureState::zero());
        assert_eq!(s.dims(), &[2, 2]);
        amps_close(&s, &[r(1.0), r(0.0), r(0.0), r(0.0)]);
    }

    #[test]
    fn tensor_is_linear_in_first_factor() {
        let (a, b) = (c64(0.6, 0.0), c64(0.0, 0.8));
        let s = tensor_product(&PureState::qubit(a, b).unwrap(), &PureState::zero());
        amps_close(&s, &[a, r(0.0), b, r(0.0)]);
    }

    #[test]
    fn tensor_of_plus_states_is_uniform() {
        let s = tensor_product(&PureState::plus(), &PureState::plus());
        amps_close(&s, &[r(0.5); 4]);
    }

    #[test]
    fn bell_reduction_is_maximally_mixed() {
        let bell = PureState::from_unnormalized(vec![2, 2], vec![r(1.0), r(0.0), r(0.0), r(1.0)]).unwrap();
        let red = partial_trace(&bell.to_density(), &[0]).unwrap();
        assert_abs_diff_eq!(red.entries()[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(red.entries()[(1, 1)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(red.entries()[(0, 1)].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn correlated_reduction_keeps_populations_only() {
        let (a, b) = (c64(0.6, 0.0), c64(0.0, -0.8));
        let s = PureState::new(vec![2, 2], vec![a, r(0.0), r(0.0), b]).unwrap();
        let red = partial_trace(&s.to_density(), &[0]).unwrap();
        assert_abs_diff_eq!(red.entries()[(0, 0)].re, 0.36, epsilon = 1e-12);
        assert_abs_diff_eq!(red.entries()[(1, 1)].re, 0.64, epsilon = 1e-12);
        assert_abs_diff_eq!(red.entries()[(1, 0)].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn product_reduction_recovers_factor() {
        let psi = PureState::qubit(c64(0.6, 0.0), c64(0.0, 0.8)).unwrap();
        let s = tensor_product(&psi, &PureState::zero());
        let red = partial_trace(&s.to_density(), &[0]).unwrap();
        let diff = red.entries() - psi.to_density().entries();
        assert!(diff.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn partial_trace_rejects_bad_index() {
        let s = tensor_product(&PureState::zero(), &PureState::one());
        assert!(matches!(
            partial_trace(&s.to_density(), &[2]),
            Err(QndError::InvalidSubsystem { index: 2, .. })
        ));
        assert!(partial_trace(&s.to_density(), &[0, 0]).is_err());
    }

    #[test]
    fn born_on_qubit() {
        let psi = PureState::qubit(c64(0.6, 0.0), c64(0.8, 0.0)).unwrap();
        let p = born_distribution(&psi, &BasisSpec::computational(2), 0).unwrap();
        assert_abs_diff_eq!(p.get(0), 0.36, epsilon = 1e-12);
        assert_abs_diff_eq!(p.get(1), 0.64, epsilon = 1e-12);
        let q = born_distribution(&PureState::zero(), &BasisSpec::qubit_x(), 0).unwrap();
        assert_abs_diff_eq!(q.get(0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(q.get(1), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn born_dimension_mismatch() {
        let err = born_distribution(&PureState::zero(), &BasisSpec::computational(3), 0);
        assert!(matches!(err, Err(QndError::DimensionMismatch { .. })));
    }

    #[test]
    fn collapse_of_correlated_pair() {
        let (a, b) = (0.6, 0.8);
        let s = PureState::new(vec![2, 2], vec![r(a), r(0.0), r(0.0), r(b)]).unwrap();
        let z = BasisSpec::computational(2);
        let (p, post) = conditional_collapse(&s, &z, 1, 0).unwrap();
        assert_abs_diff_eq!(p, a * a, epsilon = 1e-12);
        amps_close(&post, &[r(1.0), r(0.0), r(0.0), r(0.0)]);
        let (_, signal) = collapse_remainder(&s, &z, 1, 0).unwrap();
        assert!(signal.approx_eq_up_to_phase(&PureState::zero(), 1e-12));
    }

    #[test]
    fn collapse_on_eigenstate_is_certain() {
        let s = tensor_product(&PureState::plus(), &PureState::zero());
        let (p, post) = conditional_collapse(&s, &BasisSpec::qubit_x(), 0, 0).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
        assert!(post.approx_eq_up_to_phase(&s, 1e-12));
    }

    #[test]
    fn collapse_zero_branch_errors() {
        let s = tensor_product(&PureState::zero(), &PureState::zero());
        let err = conditional_collapse(&s, &BasisSpec::computational(2), 1, 1);
        assert!(matches!(err, Err(QndError::ZeroProbabilityBranch(_))));
    }

    #[test]
    fn cnot_entangles_signal_with_meter() {
        let cnot = CMatrix::from_row_slice(
            4,
            4,
            &[
                r(1.0),
                r(0.0),
                r(0.0),
                r(0.0),
                r(0.0),
                r(1.0),
                r(0.0),
                r(0.0),
                r(0.0),
                r(0.0),
                r(0.0),
                r(1.0),
                r(0.0),
                r(0.0),
                r(1.0),
                r(0.0),
            ],
        );
        let (a, b) = (c64(0.6, 0.0), c64(0.0, 0.8));
        let s = tensor_product(&PureState::qubit(a, b).unwrap(), &PureState::zero());
        let out = apply_unitary(&cnot, &s, &[0, 1]).unwrap();
        amps_close(&out, &[a, r(0.0), r(0.0), b]);
        // reversed subsystem order makes the meter the control
        let swapped = apply_unitary(&cnot, &s, &[1, 0]).unwrap();
        amps_close(&swapped, s.amps());
    }

    #[test]
    fn identity_and_hadamard_involution() {
        let psi = PureState::qubit(c64(0.6, 0.0), c64(0.0, 0.8)).unwrap();
        let same = apply_unitary(&CMatrix::identity(2, 2), &psi, &[0]).unwrap();
        amps_close(&same, psi.amps());
        let h = hadamard();
        let back = apply_unitary(&h, &apply_unitary(&h, &PureState::zero(), &[0]).unwrap(), &[0]).unwrap();
        amps_close(&back, &[r(1.0), r(0.0)]);
    }

    #[test]
    fn apply_rejects_non_unitary() {
        let m = CMatrix::from_row_slice(2, 2, &[r(1.0), r(1.0), r(0.0), r(1.0)]);
        assert!(matches!(
            apply_unitary(&m, &PureState::zero(), &[0]),
            Err(QndError::NotUnitary(_))
        ));
    }

    #[test]
    fn unitary_on_inner_subsystem() {
        // X on the middle qubit of |000⟩ gives |010⟩
        let x = CMatrix::from_row_slice(2, 2, &[r(0.0), r(1.0), r(1.0), r(0.0)]);
        let s = PureState::basis_state(vec![2, 2, 2], 0).unwrap();
        let out = apply_unitary(&x, &s, &[1]).unwrap();
        assert_abs_diff_eq!(out.amps()[2].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn state_validation() {
        assert!(matches!(
            PureState::new(vec![2], vec![r(1.0), r(1.0)]),
            Err(QndError::NotNormalized(_))
        ));
        assert!(matches!(
            PureState::new(vec![2], vec![r(1.0)]),
            Err(QndError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            PureState::new(vec![2], vec![r(f64::NAN), r(0.0)]),
            Err(QndError::NonFinite)
        ));
    }

    #[test]
    fn density_validation() {
        let bad = CMatrix::from_row_slice(2, 2, &[r(1.5), r(0.0), r(0.0), r(-0.5)]);
        assert!(DensityMatrix::new(vec![2], bad).is_err());
        let skew = CMatrix::from_row_slice(2, 2, &[r(0.5), c64(0.0, 0.1), c64(0.0, 0.1), r(0.5)]);
        assert!(DensityMatrix::new(vec![2], skew).is_err());
    }

    #[test]
    fn prob_dist_clamps_and_rejects() {
        let p = ProbDist::new(vec![1.0 + 5e-13, -5e-13]).unwrap();
        assert_eq!(p.get(1), 0.0);
        assert!(ProbDist::new(vec![0.5, 0.6]).is_err());
        assert!(ProbDist::new(vec![1.1, -0.1]).is_err());
        let c = ProbDist::from_weights(vec![90.0, 10.0]).unwrap();
        assert_abs_diff_eq!(c.get(0), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn basis_validation() {
        let m = CMatrix::from_row_slice(2, 2, &[r(1.0), r(1.0), r(0.0), r(1.0)]);
        assert!(BasisSpec::new(m).is_err());
        let conj = BasisSpec::computational(2).conjugate().unwrap();
        assert!(conj.state(0).approx_eq_up_to_phase(&PureState::plus(), 1e-12));
        assert!(conj.state(1).approx_eq_up_to_phase(&PureState::minus(), 1e-12));
    }

    #[test]
    fn json_round_trip() {
        let s = tensor_product(&PureState::plus_i(), &PureState::one());
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"dims\":[2,2]"));
        let back: PureState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let rho = s.to_density();
        let back: DensityMatrix = serde_json::from_str(&serde_json::to_string(&rho).unwrap()).unwrap();
        assert_eq!(back, rho);
        assert!(serde_json::from_str::<PureState>(r#"{"dims":[2],"re":[1,1],"im":[0,0]}"#).is_err());
    }
}
