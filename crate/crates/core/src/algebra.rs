//! Dense complex operators on truncated tensor-product Hilbert spaces.
//!
//! Everything here is dense: an [`OperatorMatrix`] stores its entries row-major,
//! and composite spaces are described by a [`SpaceLayout`] whose factor order
//! fixes the Kronecker embedding (first factor is the most significant index).
//!
//! Superoperators use column-stacking vectorization throughout, so that
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Entrywise tolerance on `max |ρ − ρ†|` for states.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Tolerance on `|Tr ρ − 1|` for physical states.
pub const TRACE_TOL: f64 = 1e-9;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Dense square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct OperatorMatrix {
    dim: usize,
    entries: Vec<C64>,
}

impl fmt::Debug for OperatorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "OperatorMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim.min(8) {
            write!(f, "  ")?;
            for j in 0..self.dim.min(8) {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl OperatorMatrix {
    pub fn new(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("operator dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} entries supplied for a {dim}x{dim} operator",
                entries.len()
            )));
        }
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "operator dimension must be positive");
        Self {
            dim,
            entries: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                entries.push(f(i, j));
            }
        }
        Self { dim, entries }
    }

    /// Builds a matrix from rows; every row must have the same length as the row count.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        Self::new(dim, entries)
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// `|ψ⟩⟨φ|`
    pub fn outer(ket: &[C64], bra: &[C64]) -> Result<Self> {
        if ket.len() != bra.len() {
            return Err(Error::DimensionMismatch("outer product of unequal vectors".into()));
        }
        Ok(Self::from_fn(ket.len(), |i, j| ket[i] * bra[j].conj()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [C64] {
        &mut self.entries
    }

    pub fn into_entries(self) -> Vec<C64> {
        self.entries
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&z| z * c).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    /// `self · other`. Panics on dimension mismatch.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = vec![ZERO; n * n];
        // SAFETY: Complex64 is repr(C) {re, im}, identical in layout to [f64; 2];
        // all three buffers hold n*n elements with row stride n and column stride 1.
        unsafe {
            matrixmultiply::zgemm(
                matrixmultiply::CGemmOption::Standard,
                matrixmultiply::CGemmOption::Standard,
                n,
                n,
                n,
                [1.0, 0.0],
                self.entries.as_ptr() as *const [f64; 2],
                n as isize,
                1,
                other.entries.as_ptr() as *const [f64; 2],
                n as isize,
                1,
                [0.0, 0.0],
                out.as_mut_ptr() as *mut [f64; 2],
                n as isize,
                1,
            );
        }
        Self { dim: n, entries: out }
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim, "matvec dimension mismatch");
        self.entries
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `[self, other]`
    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |A − A†|` entrywise.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.dagger()
            .matmul(self)
            .max_abs_diff(&Self::identity(self.dim))
            <= tol
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let n = self.dim;
        (0..n)
            .map(|j| (0..n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    /// Eigen-decomposition of the Hermitian part `(A + A†)/2`.
    /// Returns ascending eigenvalues and the eigenvectors as columns.
    pub fn hermitian_eigen(&self) -> (Vec<f64>, Self) {
        let h = (&self.to_nalgebra() + self.to_nalgebra().adjoint()) * C64::new(0.5, 0.0);
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = Self::from_fn(self.dim, |i, j| eig.eigenvectors[(i, order[j])]);
        (values, vectors)
    }

    /// Eigenvalues of a general complex matrix (complex Schur form).
    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        if !self.is_finite() {
            return Err(Error::NonFinite);
        }
        let schur = nalgebra::linalg::Schur::try_new(self.to_nalgebra(), f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
        let (_, t) = schur.unpack();
        Ok((0..self.dim).map(|i| t[(i, i)]).collect())
    }

    /// Solves `self · X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        let lu = self.to_nalgebra().lu();
        lu.solve(&rhs.to_nalgebra())
            .map(|x| Self::from_nalgebra(&x))
            .ok_or_else(|| Error::Numerical("singular matrix in linear solve".into()))
    }
}

impl std::ops::Index<(usize, usize)> for OperatorMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.entries[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for OperatorMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.entries[i * self.dim + j]
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        OperatorMatrix {
            dim: self.dim,
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim, rhs.dim, "sub dimension mismatch");
        OperatorMatrix {
            dim: self.dim,
            entries: self.entries.iter().zip(&rhs.entries).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Add for OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: OperatorMatrix) -> OperatorMatrix {
        &self + &rhs
    }
}

impl Sub for OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: OperatorMatrix) -> OperatorMatrix {
        &self - &rhs
    }
}

impl AddAssign<&OperatorMatrix> for OperatorMatrix {
    fn add_assign(&mut self, rhs: &OperatorMatrix) {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        for (a, b) in self.entries.iter_mut().zip(&rhs.entries) {
            *a += b;
        }
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.matmul(rhs)
    }
}

impl Mul for OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: OperatorMatrix) -> OperatorMatrix {
        self.matmul(&rhs)
    }
}

impl Mul<C64> for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: C64) -> OperatorMatrix {
        self.scale(rhs)
    }
}

impl Mul<f64> for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: f64) -> OperatorMatrix {
        self.scale_real(rhs)
    }
}

impl Neg for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn neg(self) -> OperatorMatrix {
        self.scale_real(-1.0)
    }
}

/// `a ⊗ b` with `(a⊗b)[(i·db + k), (j·db + l)] = a[i,j]·b[k,l]`.
pub fn kron(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    let (da, db) = (a.dim, b.dim);
    let n = da * db;
    let mut entries = vec![ZERO; n * n];
    for i in 0..da {
        for j in 0..da {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..db {
                let row = (i * db + k) * n + j * db;
                for l in 0..db {
                    entries[row + l] = aij * b[(k, l)];
                }
            }
        }
    }
    OperatorMatrix { dim: n, entries }
}

/// Truncated annihilation operator on Fock states `|0⟩ … |n_max−1⟩`.
pub fn annihilation(n_max: usize) -> Result<OperatorMatrix> {
    if n_max < 2 {
        return Err(Error::InvalidArgument(format!(
            "Fock truncation must be at least 2, got {n_max}"
        )));
    }
    let mut b = OperatorMatrix::zeros(n_max);
    for n in 1..n_max {
        b[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(b)
}

pub fn creation(n_max: usize) -> Result<OperatorMatrix> {
    Ok(annihilation(n_max)?.dagger())
}

pub fn number(n_max: usize) -> Result<OperatorMatrix> {
    if n_max < 2 {
        return Err(Error::InvalidArgument(format!(
            "Fock truncation must be at least 2, got {n_max}"
        )));
    }
    Ok(OperatorMatrix::from_diag(
        &(0..n_max).map(|n| C64::new(n as f64, 0.0)).collect::<Vec<_>>(),
    ))
}

pub fn pauli_x() -> OperatorMatrix {
    OperatorMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
}

pub fn pauli_y() -> OperatorMatrix {
    OperatorMatrix::from_rows(&[vec![ZERO, -I], vec![I, ZERO]]).unwrap()
}

/// `diag(1, −1)` in the basis `(|e⟩, |g⟩)`.
pub fn pauli_z() -> OperatorMatrix {
    OperatorMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap()
}

/// `|e⟩⟨g|`, raising `σ_z` from −1 to +1.
pub fn sigma_plus() -> OperatorMatrix {
    OperatorMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap()
}

pub fn sigma_minus() -> OperatorMatrix {
    sigma_plus().dagger()
}

/// Projector onto basis state `k` of a `dim`-dimensional space.
pub fn projector(dim: usize, k: usize) -> OperatorMatrix {
    let mut p = OperatorMatrix::zeros(dim);
    p[(k, k)] = ONE;
    p
}

// ---------------------------------------------------------------------------
// Layouts

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub label: String,
    pub dim: usize,
}

/// Ordered tensor factors. The first factor is the most significant index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SpaceLayout {
    factors: Vec<Factor>,
    total_dim: usize,
}

impl SpaceLayout {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument("layout needs at least one factor".into()));
        }
        for (k, f) in factors.iter().enumerate() {
            if f.dim == 0 {
                return Err(Error::InvalidArgument(format!(
                    "factor `{}` has zero dimension",
                    f.label
                )));
            }
            if factors[..k].iter().any(|g| g.label == f.label) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate factor label `{}`",
                    f.label
                )));
            }
        }
        let total_dim = factors.iter().map(|f| f.dim).product();
        Ok(Self { factors, total_dim })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(label, dim)| Factor {
                    label: label.into(),
                    dim,
                })
                .collect(),
        )
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.label == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.factors[self.position(label)?].dim)
    }

    /// Row-major strides of each factor within the total index.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.factors.len()];
        for k in (0..self.factors.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.factors[k + 1].dim;
        }
        strides
    }

    /// Occupation (local index) of factor `pos` in the total basis index `index`.
    pub fn local_index(&self, index: usize, pos: usize) -> usize {
        (index / self.strides()[pos]) % self.factors[pos].dim
    }

    /// Sub-layout of the given labels, kept in layout order.
    pub fn restrict(&self, labels: &[&str]) -> Result<Self> {
        for l in labels {
            self.position(l)?;
        }
        Self::new(
            self.factors
                .iter()
                .filter(|f| labels.contains(&f.label.as_str()))
                .cloned()
                .collect(),
        )
    }
}

/// `𝟙 ⊗ … ⊗ op ⊗ … ⊗ 𝟙` with `op` on the labelled factor.
pub fn embed(op: &OperatorMatrix, factor_label: &str, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    let pos = layout.position(factor_label)?;
    let fdim = layout.factors[pos].dim;
    if op.dim() != fdim {
        return Err(Error::DimensionMismatch(format!(
            "operator of dimension {} embedded on factor `{factor_label}` of dimension {fdim}",
            op.dim()
        )));
    }
    let before: usize = layout.factors[..pos].iter().map(|f| f.dim).product();
    let after: usize = layout.factors[pos + 1..].iter().map(|f| f.dim).product();
    let mut out = op.clone();
    if before > 1 {
        out = kron(&OperatorMatrix::identity(before), &out);
    }
    if after > 1 {
        out = kron(&out, &OperatorMatrix::identity(after));
    }
    Ok(out)
}

/// Partial trace of a general operator over every factor not in `keep_labels`.
pub fn partial_trace_operator(
    op: &OperatorMatrix,
    layout: &SpaceLayout,
    keep_labels: &[&str],
) -> Result<(OperatorMatrix, SpaceLayout)> {
    if op.dim() != layout.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator dimension {} does not match layout dimension {}",
            op.dim(),
            layout.total_dim()
        )));
    }
    let kept = layout.restrict(keep_labels)?;
    let keep_pos: Vec<usize> = kept
        .factors()
        .iter()
        .map(|f| layout.position(&f.label).unwrap())
        .collect();
    let strides = layout.strides();
    let n = layout.total_dim();

    let traced_dim = n / kept.total_dim();
    let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); traced_dim];
    for idx in 0..n {
        let mut k_index = 0;
        let mut t_index = 0;
        for (pos, f) in layout.factors().iter().enumerate() {
            let local = (idx / strides[pos]) % f.dim;
            if keep_pos.contains(&pos) {
                k_index = k_index * f.dim + local;
            } else {
                t_index = t_index * f.dim + local;
            }
        }
        groups[t_index].push((idx, k_index));
    }

    let mut out = OperatorMatrix::zeros(kept.total_dim());
    for group in &groups {
        for &(i, ki) in group {
            for &(j, kj) in group {
                out[(ki, kj)] += op[(i, j)];
            }
        }
    }
    Ok((out, kept))
}

// ---------------------------------------------------------------------------
// States

/// A density operator together with its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    layout: SpaceLayout,
    matrix: OperatorMatrix,
}

impl DensityMatrix {
    /// Physical state: Hermitian within [`HERMITICITY_TOL`], unit trace within [`TRACE_TOL`].
    pub fn new(layout: SpaceLayout, matrix: OperatorMatrix) -> Result<Self> {
        let rho = Self::unchecked(layout, matrix)?;
        let defect = rho.matrix.hermiticity_defect();
        if defect > HERMITICITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix not Hermitian (defect {defect:.3e})"
            )));
        }
        let tr = rho.matrix.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        Ok(rho)
    }

    /// Only the dimension is checked; used for the trace non-increasing
    /// intermediate objects of multi-time evaluations.
    pub fn unchecked(layout: SpaceLayout, matrix: OperatorMatrix) -> Result<Self> {
        if matrix.dim() != layout.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "matrix dimension {} does not match layout dimension {}",
                matrix.dim(),
                layout.total_dim()
            )));
        }
        Ok(Self { layout, matrix })
    }

    pub fn pure(layout: SpaceLayout, psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let psi: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Self::new(layout, OperatorMatrix::outer(&psi, &psi)?)
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> OperatorMatrix {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Product state over the concatenated layouts.
    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        let mut factors = self.layout.factors.clone();
        factors.extend(other.layout.factors.iter().cloned());
        Self::unchecked(SpaceLayout::new(factors)?, kron(&self.matrix, &other.matrix))
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> C64 {
        op.matmul(&self.matrix).trace()
    }
}

pub fn partial_trace(rho: &DensityMatrix, keep_labels: &[&str]) -> Result<DensityMatrix> {
    let (m, layout) = partial_trace_operator(&rho.matrix, &rho.layout, keep_labels)?;
    DensityMatrix::unchecked(layout, m)
}

/// `½‖ρ − σ‖₁` for Hermitian arguments.
pub fn trace_distance(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
    let (vals, _) = (a - b).hermitian_eigen();
    0.5 * vals.iter().map(|v| v.abs()).sum::<f64>()
}

// ---------------------------------------------------------------------------
// Vectorization

/// Column stacking: `v[j·d + i] = m[i, j]`.
pub fn vectorize(m: &OperatorMatrix) -> Vec<C64> {
    let d = m.dim();
    let mut v = Vec::with_capacity(d * d);
    for j in 0..d {
        for i in 0..d {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub fn devectorize(v: &[C64]) -> Result<OperatorMatrix> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d == 0 || d * d != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} is not a vectorized square matrix",
            v.len()
        )));
    }
    let mut m = OperatorMatrix::zeros(d);
    for j in 0..d {
        for i in 0..d {
            m[(i, j)] = v[j * d + i];
        }
    }
    Ok(m)
}

/// Superoperator of `X ↦ A X` (column stacking): `𝟙 ⊗ A`.
pub fn left_multiplication(a: &OperatorMatrix) -> OperatorMatrix {
    kron(&OperatorMatrix::identity(a.dim()), a)
}

/// Superoperator of `X ↦ X B` (column stacking): `Bᵀ ⊗ 𝟙`.
pub fn right_multiplication(b: &OperatorMatrix) -> OperatorMatrix {
    kron(&b.transpose(), &OperatorMatrix::identity(b.dim()))
}

/// Superoperator of `X ↦ A X B`: `Bᵀ ⊗ A`.
pub fn sandwich(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    kron(&b.transpose(), a)
}

// ---------------------------------------------------------------------------
// Matrix exponential

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a diagonal Padé approximant
/// whose degree is chosen from the 1-norm.
pub fn expm(m: &OperatorMatrix) -> Result<OperatorMatrix> {
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = m.dim();
    let norm = m.norm_one();
    let ident = OperatorMatrix::identity(n);
    if norm == 0.0 {
        return Ok(ident);
    }

    for &(degree, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match degree {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return pade_low(m, coeffs);
        }
    }

    let s = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
    let a = m.scale_real(0.5f64.powi(s));
    let mut r = pade13(&a)?;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Ok(r)
}

fn pade_low(a: &OperatorMatrix, b: &[f64]) -> Result<OperatorMatrix> {
    let n = a.dim();
    let ident = OperatorMatrix::identity(n);
    let a2 = a.matmul(a);
    // even powers A^0, A^2, A^4, ...
    let mut powers = vec![ident.clone(), a2.clone()];
    while powers.len() * 2 < b.len() {
        let next = powers.last().unwrap().matmul(&a2);
        powers.push(next);
    }
    let mut u_inner = OperatorMatrix::zeros(n);
    let mut v = OperatorMatrix::zeros(n);
    for (k, p) in powers.iter().enumerate() {
        v += &p.scale_real(b[2 * k]);
        if 2 * k + 1 < b.len() {
            u_inner += &p.scale_real(b[2 * k + 1]);
        }
    }
    let u = a.matmul(&u_inner);
    (&v - &u).solve(&(&v + &u))
}

fn pade13(a: &OperatorMatrix) -> Result<OperatorMatrix> {
    let b = &PADE13;
    let n = a.dim();
    let ident = OperatorMatrix::identity(n);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let mut u_hi = a6.scale_real(b[13]);
    u_hi += &a4.scale_real(b[11]);
    u_hi += &a2.scale_real(b[9]);
    let mut u_inner = a6.matmul(&u_hi);
    u_inner += &a6.scale_real(b[7]);
    u_inner += &a4.scale_real(b[5]);
    u_inner += &a2.scale_real(b[3]);
    u_inner += &ident.scale_real(b[1]);
    let u = a.matmul(&u_inner);

    let mut v_hi = a6.scale_real(b[12]);
    v_hi += &a4.scale_real(b[10]);
    v_hi += &a2.scale_real(b[8]);
    let mut v = a6.matmul(&v_hi);
    v += &a6.scale_real(b[6]);
    v += &a4.scale_real(b[4]);
    v += &a2.scale_real(b[2]);
    v += &ident.scale_real(b[0]);

    (&v - &u).solve(&(&v + &u))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn lcg_matrix(dim: usize, seed: u64, scale: f64) -> OperatorMatrix {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        OperatorMatrix::from_fn(dim, |_, _| c(next() * scale, next() * scale))
    }

    #[test]
    fn kron_identity_and_pauli() {
        let i2 = OperatorMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), OperatorMatrix::identity(4));
        let zz = kron(&pauli_z(), &i2);
        let expected = OperatorMatrix::from_diag(&[c(1., 0.), c(1., 0.), c(-1., 0.), c(-1., 0.)]);
        assert_eq!(zz, expected);
    }

    #[test]
    fn kron_index_formula() {
        let a = lcg_matrix(2, 1, 1.0);
        let b = lcg_matrix(2, 2, 1.0);
        let ab = kron(&a, &b);
        // (i·2+k, j·2+l) with i=0,k=1,j=1,l=0 → entry (1, 2)
        assert_eq!(ab[(1, 2)], a[(0, 1)] * b[(1, 0)]);
    }

    #[test]
    fn embed_places_operator_on_factor() {
        let layout = SpaceLayout::from_pairs([("S", 2), ("B", 3)]).unwrap();
        let x = embed(&pauli_x(), "S", &layout).unwrap();
        assert_eq!(x, kron(&pauli_x(), &OperatorMatrix::identity(3)));
        let id = embed(&OperatorMatrix::identity(3), "B", &layout).unwrap();
        assert_eq!(id, OperatorMatrix::identity(6));
    }

    #[test]
    fn embedded_mode_operators_commute() {
        let layout = SpaceLayout::from_pairs([("S", 2), ("B1", 4), ("B2", 4)]).unwrap();
        let b = annihilation(4).unwrap();
        let b1 = embed(&b, "B1", &layout).unwrap();
        let b2 = embed(&b, "B2", &layout).unwrap();
        assert!(b1.commutator(&b2).max_abs() == 0.0);
        assert!(b1.commutator(&b2.dagger()).max_abs() == 0.0);
    }

    #[test]
    fn embed_errors() {
        let layout = SpaceLayout::from_pairs([("S", 2), ("B", 3)]).unwrap();
        assert!(matches!(
            embed(&pauli_x(), "X", &layout),
            Err(Error::UnknownLabel(_))
        ));
        assert!(matches!(
            embed(&pauli_x(), "B", &layout),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn layout_rejects_duplicate_labels() {
        assert!(SpaceLayout::from_pairs([("S", 2), ("S", 3)]).is_err());
        let l = SpaceLayout::from_pairs([("S", 2), ("B", 3), ("C", 5)]).unwrap();
        assert_eq!(l.total_dim(), 30);
        assert_eq!(l.strides(), vec![15, 5, 1]);
    }

    #[test]
    fn annihilation_entries() {
        let b2 = annihilation(2).unwrap();
        assert_eq!(b2, OperatorMatrix::from_real_rows(&[&[0., 1.], &[0., 0.]]).unwrap());
        let b3 = annihilation(3).unwrap();
        assert_eq!(b3[(0, 1)], c(1.0, 0.0));
        assert_eq!(b3[(1, 2)], c(2f64.sqrt(), 0.0));
        assert_eq!(b3.entries().iter().filter(|z| z.norm() > 0.0).count(), 2);
        assert!(annihilation(1).is_err());
    }

    #[test]
    fn truncation_defect_confined_to_top_state() {
        for n_max in 2..7 {
            let b = annihilation(n_max).unwrap();
            let comm = b.commutator(&b.dagger());
            let mut expected = OperatorMatrix::identity(n_max);
            expected[(n_max - 1, n_max - 1)] = c(1.0 - n_max as f64, 0.0);
            assert!(comm.max_abs_diff(&expected) < 1e-14);
        }
    }

    #[test]
    fn expm_trivial_cases() {
        assert_eq!(expm(&OperatorMatrix::zeros(3)).unwrap(), OperatorMatrix::identity(3));
        let theta = 0.7;
        let e = expm(&pauli_z().scale(c(0.0, theta))).unwrap();
        let expected = OperatorMatrix::from_diag(&[C64::from_polar(1.0, theta), C64::from_polar(1.0, -theta)]);
        assert!(e.max_abs_diff(&expected) < 1e-15);
        let mut bad = OperatorMatrix::zeros(2);
        bad[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(expm(&bad), Err(Error::NonFinite)));
    }

    #[test]
    fn expm_inverse_property() {
        for seed in 0..6 {
            let mut a = lcg_matrix(6, seed, 1.0);
            let norm = a.norm_one();
            a = a.scale_real(5.0 / norm * (seed as f64 + 1.0) / 6.0);
            let prod = expm(&a).unwrap().matmul(&expm(&-&a).unwrap());
            assert!(prod.max_abs_diff(&OperatorMatrix::identity(6)) < 1e-11);
        }
    }

    #[test]
    fn expm_matches_eigendecomposition_for_hermitian() {
        for (seed, scale) in [(3u64, 0.01), (4, 0.3), (5, 2.0), (6, 30.0)] {
            let a = lcg_matrix(5, seed, scale);
            let h = (&a + &a.dagger()).scale_real(0.5);
            let (vals, vecs) = h.hermitian_eigen();
            let phases: Vec<C64> = vals.iter().map(|&v| C64::from_polar(1.0, -v)).collect();
            let reference = vecs.matmul(&OperatorMatrix::from_diag(&phases)).matmul(&vecs.dagger());
            let got = expm(&h.scale(c(0.0, -1.0))).unwrap();
            assert!(got.max_abs_diff(&reference) < 1e-11, "scale {scale}");
        }
    }

    #[test]
    fn expm_large_norm_relative_accuracy() {
        // diagonal with large entries: compare against scalar exponentials
        let d: Vec<C64> = (0..4).map(|k| c(-(k as f64) * 100.0, 250.0 * k as f64)).collect();
        let e = expm(&OperatorMatrix::from_diag(&d)).unwrap();
        for (k, z) in d.iter().enumerate() {
            let exact = z.exp();
            assert!((e[(k, k)] - exact).norm() <= 1e-12 * exact.norm().max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn partial_trace_of_product_and_bell_states() {
        let layout_s = SpaceLayout::from_pairs([("S", 2)]).unwrap();
        let layout_b = SpaceLayout::from_pairs([("B", 3)]).unwrap();
        let rho_s = DensityMatrix::new(
            layout_s,
            OperatorMatrix::from_rows(&[vec![c(0.7, 0.), c(0.1, 0.2)], vec![c(0.1, -0.2), c(0.3, 0.)]])
                .unwrap(),
        )
        .unwrap();
        let rho_b = DensityMatrix::new(
            layout_b,
            OperatorMatrix::from_diag(&[c(0.5, 0.), c(0.3, 0.), c(0.2, 0.)]),
        )
        .unwrap();
        let joint = rho_s.tensor(&rho_b).unwrap();
        let reduced = partial_trace(&joint, &["S"]).unwrap();
        assert!(reduced.matrix().max_abs_diff(rho_s.matrix()) < 1e-15);
        assert!((partial_trace(&joint, &["B"]).unwrap().trace() - joint.trace()).norm() < 1e-12);

        let layout = SpaceLayout::from_pairs([("A", 2), ("B", 2)]).unwrap();
        let s = 0.5f64.sqrt();
        let bell = DensityMatrix::pure(layout, &[c(s, 0.), ZERO, ZERO, c(s, 0.)]).unwrap();
        let half = OperatorMatrix::identity(2).scale_real(0.5);
        for label in ["A", "B"] {
            assert!(partial_trace(&bell, &[label]).unwrap().matrix().max_abs_diff(&half) < 1e-15);
        }
        assert!(matches!(partial_trace(&bell, &["Q"]), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn partial_trace_middle_factor() {
        let layout = SpaceLayout::from_pairs([("A", 2), ("B", 3), ("C", 2)]).unwrap();
        let a = lcg_matrix(2, 7, 1.0);
        let b = lcg_matrix(3, 8, 1.0);
        let cm = lcg_matrix(2, 9, 1.0);
        let full = kron(&kron(&a, &b), &cm);
        let (ac, sub) = partial_trace_operator(&full, &layout, &["A", "C"]).unwrap();
        assert_eq!(sub.factors().len(), 2);
        let expected = kron(&a, &cm).scale(b.trace());
        assert!(ac.max_abs_diff(&expected) < 1e-13);
    }

    #[test]
    fn vectorization_conventions() {
        assert_eq!(
            vectorize(&OperatorMatrix::identity(2)),
            vec![ONE, ZERO, ZERO, ONE]
        );
        let m = lcg_matrix(3, 11, 1.0);
        assert_eq!(devectorize(&vectorize(&m)).unwrap(), m);
        assert!(devectorize(&[ONE; 5]).is_err());
        for seed in 0..4 {
            let a = lcg_matrix(2, 20 + seed, 1.0);
            let x = lcg_matrix(2, 30 + seed, 1.0);
            let b = lcg_matrix(2, 40 + seed, 1.0);
            let lhs = vectorize(&a.matmul(&x).matmul(&b));
            let rhs = sandwich(&a, &b).matvec(&vectorize(&x));
            let diff = lhs.iter().zip(&rhs).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-14);
        }
    }

    #[test]
    fn reduced_expectation_consistency() {
        let layout = SpaceLayout::from_pairs([("S", 2), ("B", 3)]).unwrap();
        let raw = lcg_matrix(6, 51, 1.0);
        let rho = raw.matmul(&raw.dagger());
        let rho = rho.scale(ONE / rho.trace());
        let rho = DensityMatrix::new(layout.clone(), rho).unwrap();
        let o = lcg_matrix(2, 52, 1.0);
        let full = embed(&o, "S", &layout).unwrap().matmul(rho.matrix()).trace();
        let reduced = o.matmul(partial_trace(&rho, &["S"]).unwrap().matrix()).trace();
        assert!((full - reduced).norm() < 1e-12);
    }

    #[test]
    fn density_matrix_validation() {
        let layout = SpaceLayout::from_pairs([("S", 2)]).unwrap();
        let not_herm = OperatorMatrix::from_rows(&[vec![c(0.5, 0.), c(0.1, 0.)], vec![c(0.2, 0.), c(0.5, 0.)]]).unwrap();
        assert!(DensityMatrix::new(layout.clone(), not_herm).is_err());
        assert!(DensityMatrix::new(layout.clone(), OperatorMatrix::identity(2)).is_err());
        assert!(DensityMatrix::unchecked(layout, OperatorMatrix::identity(3)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix(dim: usize) -> impl Strategy<Value = OperatorMatrix> {
            proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim).prop_map(move |v| {
                OperatorMatrix::new(dim, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap()
            })
        }

        proptest! {
            #[test]
            fn kron_is_bilinear(a in matrix(2), b in matrix(2), c2 in matrix(3), s in -2.0f64..2.0) {
                let lhs = kron(&(&a + &b.scale_real(s)), &c2);
                let rhs = &kron(&a, &c2) + &kron(&b, &c2).scale_real(s);
                prop_assert!(lhs.max_abs_diff(&rhs) < 1e-14);
            }

            #[test]
            fn kron_is_associative(a in matrix(2), b in matrix(2), c2 in matrix(2)) {
                let lhs = kron(&kron(&a, &b), &c2);
                let rhs = kron(&a, &kron(&b, &c2));
                prop_assert!(lhs.max_abs_diff(&rhs) < 1e-15);
            }

            #[test]
            fn vectorize_roundtrip(m in matrix(4)) {
                prop_assert_eq!(devectorize(&vectorize(&m)).unwrap(), m);
            }
        }
    }
}
