//! Dense tensorized state vectors.
//!
//! A state over `n` factors of local dimension `d` is stored as a flat
//! amplitude vector of length `d^n`. Mode 0 is the fastest-varying index
//! (little-endian), so the multi-index `[i_0, …, i_{n-1}]` lives at
//! `Σ i_k d^k`. Contiguous mode ranges then map to strided blocks, which is
//! what makes the balanced dimension trees in [`crate::ht`] cheap to
//! matricize.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = faer::Mat<C64>;

/// Number of tensor factors and the (uniform) local dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeShape {
    n: usize,
    d: usize,
}

impl ModeShape {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("mode count must be at least 1"));
        }
        if d < 2 {
            return Err(Error::contract("local dimension must be at least 2"));
        }
        let mut total: usize = 1;
        for _ in 0..n {
            total = total
                .checked_mul(d)
                .ok_or_else(|| Error::contract(format!("{d}^{n} overflows usize")))?;
        }
        Ok(Self { n, d })
    }

    /// Shape of `n` qubits.
    pub fn qubits(n: usize) -> Result<Self> {
        Self::new(n, 2)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Total Hilbert space dimension `d^n`.
    pub fn dim(&self) -> usize {
        self.d.pow(self.n as u32)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n {
            Err(Error::contract(format!(
                "mode index {mode} out of range for {} modes",
                self.n
            )))
        } else {
            Ok(())
        }
    }
}

/// Little-endian linearization of a multi-index.
pub fn linear_index(multi_index: &[usize], shape: ModeShape) -> Result<usize> {
    if multi_index.len() != shape.n {
        return Err(Error::contract(format!(
            "multi-index has {} entries, shape has {} modes",
            multi_index.len(),
            shape.n
        )));
    }
    let mut index = 0;
    let mut stride = 1;
    for (mode, &value) in multi_index.iter().enumerate() {
        if value >= shape.d {
            return Err(Error::contract(format!(
                "mode {mode} value {value} outside [0, {})",
                shape.d
            )));
        }
        index += value * stride;
        stride *= shape.d;
    }
    Ok(index)
}

/// Inverse of [`linear_index`].
pub fn multi_index(index: usize, shape: ModeShape) -> Result<Vec<usize>> {
    if index >= shape.dim() {
        return Err(Error::contract(format!(
            "linear index {index} outside [0, {})",
            shape.dim()
        )));
    }
    let mut rest = index;
    Ok((0..shape.n)
        .map(|_| {
            let digit = rest % shape.d;
            rest /= shape.d;
            digit
        })
        .collect())
}

/// Offsets `Σ_j a_j d^{modes[j]}` for every local multi-index `a`, with
/// `modes[0]` varying fastest.
pub(crate) fn digit_offsets(modes: &[usize], d: usize) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for &mode in modes {
        let stride = d.pow(mode as u32);
        let mut next = Vec::with_capacity(offsets.len() * d);
        for digit in 0..d {
            next.extend(offsets.iter().map(|&o| o + digit * stride));
        }
        // `next` is ordered with the new digit slowest; that is exactly the
        // little-endian order over `modes`.
        offsets = next;
    }
    offsets
}

/// Row/column offset tables of a bipartition: amplitude `(row, col)` of the
/// matricization sits at linear index `rows[row] + cols[col]`.
#[derive(Debug, Clone)]
pub(crate) struct Bipartition {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl Bipartition {
    pub fn new(shape: ModeShape, subset: &[usize]) -> Result<Self> {
        let mut modes = subset.to_vec();
        modes.sort_unstable();
        modes.dedup();
        if modes.len() != subset.len() {
            return Err(Error::contract("subset contains duplicate modes"));
        }
        for &m in &modes {
            shape.check_mode(m)?;
        }
        if modes.is_empty() || modes.len() == shape.n {
            return Err(Error::contract("matricization subset must be nonempty and proper"));
        }
        let complement: Vec<usize> = (0..shape.n).filter(|m| !modes.contains(m)).collect();
        Ok(Self {
            rows: digit_offsets(&modes, shape.d),
            cols: digit_offsets(&complement, shape.d),
        })
    }
}

/// A pure-state amplitude vector over a [`ModeShape`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    shape: ModeShape,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(shape: ModeShape, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != shape.dim() {
            return Err(Error::contract(format!(
                "expected {} amplitudes, got {}",
                shape.dim(),
                amplitudes.len()
            )));
        }
        Ok(Self { shape, amplitudes })
    }

    pub fn zeros(shape: ModeShape) -> Self {
        Self {
            shape,
            amplitudes: vec![C64::new(0.0, 0.0); shape.dim()],
        }
    }

    /// Computational basis vector at `index`.
    pub fn basis(shape: ModeShape, index: usize) -> Result<Self> {
        if index >= shape.dim() {
            return Err(Error::contract(format!(
                "basis index {index} outside [0, {})",
                shape.dim()
            )));
        }
        let mut state = Self::zeros(shape);
        state.amplitudes[index] = C64::new(1.0, 0.0);
        Ok(state)
    }

    /// Tensor product of one local vector per mode (`factors[0]` is mode 0).
    pub fn product(shape: ModeShape, factors: &[Vec<C64>]) -> Result<Self> {
        if factors.len() != shape.n || factors.iter().any(|f| f.len() != shape.d) {
            return Err(Error::contract("product state needs one length-d factor per mode"));
        }
        let mut amps = vec![C64::new(1.0, 0.0)];
        // Prepend-as-slower: each new factor becomes the slowest index so far.
        for factor in factors {
            let mut next = Vec::with_capacity(amps.len() * shape.d);
            for &c in factor {
                next.extend(amps.iter().map(|&a| a * c));
            }
            amps = next;
        }
        Self::new(shape, amps)
    }

    pub fn shape(&self) -> ModeShape {
        self.shape
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            shape: self.shape,
            amplitudes: self.amplitudes.iter().map(|&a| a * factor).collect(),
        }
    }

    /// Unit vector in the same direction. Fails on the zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Numeric("cannot normalize a zero or non-finite state".into()));
        }
        Ok(self.scaled(C64::new(1.0 / norm, 0.0)))
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same_shape(self, other)?;
        Ok(Self {
            shape: self.shape,
            amplitudes: self
                .amplitudes
                .iter()
                .zip(&other.amplitudes)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same_shape(self, other)?;
        Ok(Self {
            shape: self.shape,
            amplitudes: self
                .amplitudes
                .iter()
                .zip(&other.amplitudes)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

pub(crate) fn check_same_shape(a: &StateVector, b: &StateVector) -> Result<()> {
    if a.shape != b.shape {
        Err(Error::contract(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape, b.shape
        )))
    } else {
        Ok(())
    }
}

/// `⟨a, b⟩ = Σ conj(a_i) b_i`.
pub fn inner(a: &StateVector, b: &StateVector) -> Result<C64> {
    check_same_shape(a, b)?;
    Ok(a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x.conj() * y).sum())
}

/// Euclidean norm of `a - b`.
pub fn distance(a: &StateVector, b: &StateVector) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok(a.amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Matricization `X^(t)`: rows indexed by the modes of `subset` (ascending,
/// little-endian), columns by the complement.
pub fn matricize(state: &StateVector, subset: &[usize]) -> Result<CMatrix> {
    let split = Bipartition::new(state.shape, subset)?;
    Ok(gather(&state.amplitudes, &split))
}

pub(crate) fn gather(amplitudes: &[C64], split: &Bipartition) -> CMatrix {
    CMatrix::from_fn(split.rows.len(), split.cols.len(), |r, c| {
        amplitudes[split.rows[r] + split.cols[c]]
    })
}

pub(crate) fn scatter(matrix: &CMatrix, split: &Bipartition, amplitudes: &mut [C64]) {
    for (c, &col) in split.cols.iter().enumerate() {
        for (r, &row) in split.rows.iter().enumerate() {
            amplitudes[row + col] = matrix[(r, c)];
        }
    }
}

/// Inverse of [`matricize`].
pub fn dematricize(matrix: &CMatrix, subset: &[usize], shape: ModeShape) -> Result<StateVector> {
    let split = Bipartition::new(shape, subset)?;
    if matrix.nrows() != split.rows.len() || matrix.ncols() != split.cols.len() {
        return Err(Error::contract(format!(
            "matrix is {}x{}, subset layout needs {}x{}",
            matrix.nrows(),
            matrix.ncols(),
            split.rows.len(),
            split.cols.len()
        )));
    }
    let mut state = StateVector::zeros(shape);
    scatter(matrix, &split, &mut state.amplitudes);
    Ok(state)
}

/// Hermitian operator acting on a few modes.
///
/// The local matrix index is little-endian over `support` in the given
/// order, so for two sites `support[0]` is the fast digit: the Kronecker
/// product `A ⊗ B` acts as `B` on `support[0]` and `A` on `support[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTerm {
    support: Vec<usize>,
    matrix: CMatrix,
}

/// Elementwise tolerance for the Hermiticity check.
pub const HERMITIAN_TOL: f64 = 1e-12;

impl LocalTerm {
    pub fn new(support: Vec<usize>, matrix: CMatrix, d: usize) -> Result<Self> {
        check_support(&support, None)?;
        let local_dim = d.pow(support.len() as u32);
        if matrix.nrows() != local_dim || matrix.ncols() != local_dim {
            return Err(Error::contract(format!(
                "local term on {} sites needs a {local_dim}x{local_dim} matrix",
                support.len()
            )));
        }
        let asym = hermitian_defect(&matrix);
        if asym > HERMITIAN_TOL {
            return Err(Error::contract(format!(
                "local term is not Hermitian (max |M - M†| = {asym:e})"
            )));
        }
        Ok(Self { support, matrix })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Spectral norm (largest |eigenvalue| of the Hermitian matrix).
    pub fn operator_norm(&self) -> f64 {
        crate::linalg::eigh(&self.matrix)
            .map(|(vals, _)| vals.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .unwrap_or(f64::NAN)
    }
}

pub(crate) fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_support(support: &[usize], shape: Option<ModeShape>) -> Result<()> {
    if support.is_empty() {
        return Err(Error::contract("support must not be empty"));
    }
    for (i, s) in support.iter().enumerate() {
        if support[..i].contains(s) {
            return Err(Error::contract(format!("support repeats mode {s}")));
        }
        if let Some(shape) = shape {
            shape.check_mode(*s)?;
        }
    }
    Ok(())
}

/// Precomputed gather pattern for applying a small matrix on `support`.
#[derive(Debug, Clone)]
pub(crate) struct LocalKernel {
    local: Vec<usize>,
    bases: Vec<usize>,
    // Row-major copy of the matrix.
    entries: Vec<C64>,
}

impl LocalKernel {
    pub fn new(shape: ModeShape, matrix: &CMatrix, support: &[usize]) -> Result<Self> {
        check_support(support, Some(shape))?;
        let local_dim = shape.d.pow(support.len() as u32);
        if matrix.nrows() != local_dim || matrix.ncols() != local_dim {
            return Err(Error::contract(format!(
                "matrix is {}x{}, support needs {local_dim}x{local_dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let rest: Vec<usize> = (0..shape.n).filter(|m| !support.contains(m)).collect();
        let mut entries = Vec::with_capacity(local_dim * local_dim);
        for i in 0..local_dim {
            for j in 0..local_dim {
                entries.push(matrix[(i, j)]);
            }
        }
        Ok(Self {
            local: digit_offsets(support, shape.d),
            bases: digit_offsets(&rest, shape.d),
            entries,
        })
    }

    pub fn apply(&self, amplitudes: &mut [C64]) {
        let m = self.local.len();
        let mut buf = vec![C64::new(0.0, 0.0); m];
        for &base in &self.bases {
            for (b, &off) in buf.iter_mut().zip(&self.local) {
                *b = amplitudes[base + off];
            }
            for (i, &off) in self.local.iter().enumerate() {
                let row = &self.entries[i * m..(i + 1) * m];
                amplitudes[base + off] = row.iter().zip(&buf).map(|(a, b)| a * b).sum();
            }
        }
    }
}

/// `(M ⊗ I_rest) ψ` with `M` placed on `support`. The input is not mutated.
pub fn apply_local(state: &StateVector, matrix: &CMatrix, support: &[usize]) -> Result<StateVector> {
    let kernel = LocalKernel::new(state.shape, matrix, support)?;
    let mut out = state.clone();
    kernel.apply(&mut out.amplitudes);
    Ok(out)
}

/// Applies a [`LocalTerm`]'s matrix to a state.
pub fn apply_local_term(state: &StateVector, term: &LocalTerm) -> Result<StateVector> {
    apply_local(state, &term.matrix, &term.support)
}
