//! Dense complex linear algebra kernel.
//!
//! Matrices are square with a power-of-two dimension no larger than
//! [`MAX_DIM`]. The tensor convention is row-major blocks with the left factor
//! indexing the front (most significant) register, so `lift(u, d)` is
//! `u ⊗ I`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen, QR, SVD};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Hard cap on matrix dimension (10 qubits).
pub const MAX_DIM: usize = 1024;
/// Tolerance on `max |MM^† - I|` for a matrix to count as unitary.
pub const UNITARY_TOL: f64 = 1e-10;
/// Eigenphases closer than this (on the circle) belong to one cluster.
pub const CLUSTER_TOL: f64 = 1e-8;

#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Maps an angle to `[0, 2π)`, snapping values within 1e-12 of 2π to 0.
pub fn canonical_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if TAU - t < 1e-12 {
        0.0
    } else {
        t
    }
}

/// Distance between two angles measured along the circle.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

pub(crate) fn is_power_of_two(d: usize) -> bool {
    d != 0 && d & (d - 1) == 0
}

pub(crate) fn log2_exact(d: usize) -> usize {
    debug_assert!(is_power_of_two(d));
    d.trailing_zeros() as usize
}

/// Eigenvector label `(x, i)`: `x` indexes the front register, `i` the rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Label {
    pub x: usize,
    pub i: usize,
}

impl Label {
    pub fn new(x: usize, i: usize) -> Self {
        Self { x, i }
    }
}

impl From<(usize, usize)> for Label {
    fn from((x, i): (usize, usize)) -> Self {
        Self { x, i }
    }
}

impl From<Label> for (usize, usize) {
    fn from(l: Label) -> Self {
        (l.x, l.i)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.i)
    }
}

/// Square complex matrix of power-of-two dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    data: DMatrix<C64>,
}

impl ComplexMatrix {
    /// Wraps a nalgebra matrix after checking shape, size cap and finiteness.
    pub fn from_dmatrix(data: DMatrix<C64>) -> Result<Self> {
        let dim = data.nrows();
        if data.ncols() != dim {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, expected square",
                data.nrows(),
                data.ncols()
            )));
        }
        if !is_power_of_two(dim) {
            return Err(Error::Dimension(format!("dimension {dim} is not a power of two")));
        }
        if dim > MAX_DIM {
            return Err(Error::SizeCap { dim, cap: MAX_DIM });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub(crate) fn from_dmatrix_unchecked(data: DMatrix<C64>) -> Self {
        debug_assert!(data.is_square() && is_power_of_two(data.nrows()));
        Self { data }
    }

    /// Builds a matrix from rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("ragged or non-square row data".into()));
        }
        Self::from_dmatrix(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
    }

    /// Identity of the given dimension.
    ///
    /// Panics if `dim` is not a power of two.
    pub fn identity(dim: usize) -> Self {
        assert!(is_power_of_two(dim), "dimension {dim} is not a power of two");
        Self { data: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(is_power_of_two(dim), "dimension {dim} is not a power of two");
        Self { data: DMatrix::zeros(dim, dim) }
    }

    pub fn diagonal(entries: &[C64]) -> Result<Self> {
        Self::from_dmatrix(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    /// Permutation matrix: column `x` carries a single 1 in row `perm[x]`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let dim = perm.len();
        let mut seen = vec![false; dim];
        for &p in perm {
            if p >= dim || std::mem::replace(&mut seen[p], true) {
                return Err(Error::NotPermutation);
            }
        }
        let mut m = DMatrix::zeros(dim, dim);
        for (x, &p) in perm.iter().enumerate() {
            m[(p, x)] = ONE;
        }
        Self::from_dmatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of qubits the matrix acts on.
    pub fn qubits(&self) -> usize {
        log2_exact(self.dim())
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[(row, col)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.data
    }

    pub fn adjoint(&self) -> Self {
        Self { data: self.data.adjoint() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { data: &self.data * s }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |MM^† - I|` over entries.
    pub fn unitarity_deviation(&self) -> f64 {
        let prod = &self.data * self.data.adjoint();
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((prod[(i, j)] - target).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    /// Largest modulus among off-diagonal entries.
    pub fn off_diagonal_max(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                if i != j {
                    worst = worst.max(self.data[(i, j)].norm());
                }
            }
        }
        worst
    }

    pub fn apply(&self, v: &ComplexVector) -> ComplexVector {
        assert_eq!(self.dim(), v.dim(), "dimension mismatch in matrix-vector product");
        ComplexVector { data: &self.data * &v.data }
    }

    /// Rows as nested vectors, mainly for serialization.
    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.dim()).map(|i| self.data.row(i).iter().copied().collect()).collect()
    }
}

impl std::ops::Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch in matrix product");
        ComplexMatrix { data: &self.data * &rhs.data }
    }
}

impl std::ops::Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch in matrix difference");
        ComplexMatrix { data: &self.data - &rhs.data }
    }
}

impl std::ops::Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch in matrix sum");
        ComplexMatrix { data: &self.data + &rhs.data }
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = self
            .to_rows()
            .into_iter()
            .map(|r| r.into_iter().map(|z| [z.re, z.im]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let rows: Vec<Vec<C64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        ComplexMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Dense complex column vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVector {
    data: DVector<C64>,
}

impl ComplexVector {
    pub fn new(entries: Vec<C64>) -> Self {
        Self { data: DVector::from_vec(entries) }
    }

    pub fn from_dvector(data: DVector<C64>) -> Self {
        Self { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { data: DVector::zeros(dim) }
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[index] = ONE;
        v
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn entries(&self) -> &[C64] {
        self.data.as_slice()
    }

    pub fn as_dvector(&self) -> &DVector<C64> {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &ComplexVector) -> C64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in inner product");
        self.data.dotc(&other.data)
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { data: &self.data * s }
    }

    pub fn tensor(&self, other: &ComplexVector) -> Self {
        let mut out = Vec::with_capacity(self.dim() * other.dim());
        for a in self.data.iter() {
            for b in other.data.iter() {
                out.push(a * b);
            }
        }
        Self::new(out)
    }

    /// Euclidean distance `‖self - other‖₂`.
    pub fn distance(&self, other: &ComplexVector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in vector distance");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }
}

impl Serialize for ComplexVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.data.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(ComplexVector::new(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect()))
    }
}

/// Eigensystem of a unitary: phases in `[0, 2π)` and orthonormal vectors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenSystem {
    pub dim: usize,
    pub phases: Vec<f64>,
    pub vectors: Vec<ComplexVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<Label>>,
}

impl EigenSystem {
    /// `max_j ‖U v_j - e^{iθ_j} v_j‖₂`.
    pub fn residual(&self, u: &ComplexMatrix) -> f64 {
        self.phases
            .iter()
            .zip(&self.vectors)
            .map(|(&theta, v)| u.apply(v).distance(&v.scale(cis(theta))))
            .fold(0.0, f64::max)
    }

    /// `max_{j,k} |⟨v_j, v_k⟩ - δ_{jk}|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.gram();
        let mut worst = 0.0f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((g[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// Gram matrix `V^† V` of the eigenvectors.
    pub fn gram(&self) -> DMatrix<C64> {
        let v = self.vector_matrix();
        v.adjoint() * v
    }

    /// Eigenvectors as the columns of a `dim × len` matrix.
    pub fn vector_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.vectors.len(), |i, j| self.vectors[j].entries()[i])
    }

    /// `Σ_j e^{iθ_j} |v_j⟩⟨v_j|`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let v = self.vector_matrix();
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.phases.len(),
            self.phases.iter().map(|&t| cis(t)),
        ));
        ComplexMatrix::from_dmatrix_unchecked(&v * d * v.adjoint())
    }

    pub fn eigenvalue(&self, j: usize) -> C64 {
        cis(self.phases[j])
    }

    /// Index of the vector carrying `label`, if labels are present.
    pub fn index_of(&self, label: Label) -> Option<usize> {
        self.labels.as_ref()?.iter().position(|&l| l == label)
    }

    /// Groups indices whose phases lie within `tol` of each other on the circle.
    ///
    /// Clusters are returned in increasing order of their smallest phase.
    pub fn clusters(&self, tol: f64) -> Vec<Vec<usize>> {
        cluster_phases(&self.phases, tol)
    }

    /// Eigensystem of `U ⊗ I_factor`: each vector `v` becomes `v ⊗ e_j` with
    /// label `(x, i·factor + j)`.
    pub fn lift(&self, factor: usize) -> EigenSystem {
        if factor == 1 {
            return self.clone();
        }
        let mut phases = Vec::with_capacity(self.phases.len() * factor);
        let mut vectors = Vec::with_capacity(self.phases.len() * factor);
        let mut labels = self.labels.as_ref().map(|_| Vec::with_capacity(self.phases.len() * factor));
        for (k, (&theta, v)) in self.phases.iter().zip(&self.vectors).enumerate() {
            for j in 0..factor {
                phases.push(theta);
                vectors.push(v.tensor(&ComplexVector::basis(factor, j)));
                if let (Some(out), Some(src)) = (labels.as_mut(), self.labels.as_ref()) {
                    out.push(Label::new(src[k].x, src[k].i * factor + j));
                }
            }
        }
        EigenSystem { dim: self.dim * factor, phases, vectors, labels }
    }
}

/// Clusters phases on the circle; adjacent sorted phases closer than `tol`
/// share a cluster, including across the 0/2π seam.
pub fn cluster_phases(phases: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..phases.len()).collect();
    order.sort_by(|&a, &b| phases[a].total_cmp(&phases[b]).then(a.cmp(&b)));
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &idx in &order {
        match clusters.last_mut() {
            Some(last) if phase_distance(phases[*last.last().unwrap()], phases[idx]) <= tol => {
                last.push(idx)
            }
            _ => clusters.push(vec![idx]),
        }
    }
    if clusters.len() > 1 {
        let first = phases[clusters[0][0]];
        let last_cluster = clusters.last().unwrap();
        let last = phases[*last_cluster.last().unwrap()];
        if phase_distance(first, last) <= tol {
            let tail = clusters.pop().unwrap();
            let head = std::mem::take(&mut clusters[0]);
            clusters[0] = tail.into_iter().chain(head).collect();
        }
    }
    clusters
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let dim = a.dim() * b.dim();
    if dim > MAX_DIM {
        return Err(Error::SizeCap { dim, cap: MAX_DIM });
    }
    Ok(ComplexMatrix::from_dmatrix_unchecked(a.data.kronecker(&b.data)))
}

/// `u ⊗ I_{target_dim / u.dim}`.
pub fn lift(u: &ComplexMatrix, target_dim: usize) -> Result<ComplexMatrix> {
    if target_dim > MAX_DIM {
        return Err(Error::SizeCap { dim: target_dim, cap: MAX_DIM });
    }
    if target_dim < u.dim() || target_dim % u.dim() != 0 || !is_power_of_two(target_dim / u.dim()) {
        return Err(Error::Dimension(format!(
            "cannot lift dimension {} to {target_dim}",
            u.dim()
        )));
    }
    if target_dim == u.dim() {
        return Ok(u.clone());
    }
    tensor(u, &ComplexMatrix::identity(target_dim / u.dim()))
}

/// Largest singular value of a matrix.
pub fn op_norm(a: &ComplexMatrix) -> f64 {
    op_norm_rect(&a.data)
}

/// Largest singular value of an arbitrary (possibly rectangular) matrix.
pub fn op_norm_rect(a: &DMatrix<C64>) -> f64 {
    if a.is_empty() || a.iter().all(|z| *z == ZERO) {
        return 0.0;
    }
    SVD::new(a.clone(), false, false).singular_values.max()
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
pub(crate) fn hermitian_eig(h: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = h.nrows();
    let sym = (h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// `exp(i H)` for Hermitian `H`.
pub fn expm_i_hermitian(h: &DMatrix<C64>) -> DMatrix<C64> {
    let (values, v) = hermitian_eig(h);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&l| cis(l)),
    ));
    &v * d * v.adjoint()
}

/// Haar-distributed random unitary via QR of a complex Gaussian matrix.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let z = DMatrix::from_fn(dim, dim, |_, _| C64::new(gaussian(rng), gaussian(rng)));
    let qr = QR::new(z);
    let q = qr.q();
    let r = qr.r();
    let mut out = q;
    for j in 0..dim {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..dim {
            out[(i, j)] *= ph;
        }
    }
    ComplexMatrix::from_dmatrix_unchecked(out)
}

/// Standard normal sample by Box-Muller.
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Full eigendecomposition of a unitary matrix.
///
/// Vectors are orthonormal; eigenphases closer than [`CLUSTER_TOL`] form a
/// cluster whose eigenspace basis is orthonormal. Output is sorted by phase.
pub fn eig_unitary(u: &ComplexMatrix) -> Result<EigenSystem> {
    let deviation = u.unitarity_deviation();
    if deviation > UNITARY_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    let dim = u.dim();
    let (phases, vecs) = eig_normal(&u.data);
    let mut vectors: Vec<ComplexVector> = vecs.into_iter().map(ComplexVector::from_dvector).collect();

    // Re-orthonormalize inside clusters so near-degenerate eigenspaces carry an
    // orthonormal basis rather than nearly parallel vectors.
    for cluster in cluster_phases(&phases, CLUSTER_TOL) {
        if cluster.len() > 1 {
            let block: Vec<DVector<C64>> =
                cluster.iter().map(|&k| vectors[k].as_dvector().clone()).collect();
            let ortho = gram_schmidt(&block);
            for (&k, v) in cluster.iter().zip(ortho) {
                vectors[k] = ComplexVector::from_dvector(v);
            }
        }
    }
    Ok(EigenSystem { dim, phases, vectors, labels: None })
}

/// Phase-sorted eigenpairs of a (nearly) unitary matrix of any size, without
/// the unitarity check or cluster re-orthonormalization.
pub(crate) fn eig_normal(b: &DMatrix<C64>) -> (Vec<f64>, Vec<DVector<C64>>) {
    let vecs = normal_eigvecs(b, 0);
    let mut pairs: Vec<(f64, DVector<C64>)> = (0..b.nrows())
        .map(|j| {
            let v = vecs.column(j).into_owned();
            let rq = v.dotc(&(b * &v));
            (canonical_phase(rq.arg()), v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

pub(crate) fn gram_schmidt(vs: &[DVector<C64>]) -> Vec<DVector<C64>> {
    let mut out: Vec<DVector<C64>> = Vec::with_capacity(vs.len());
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = q.dotc(&w);
                w -= q * c;
            }
        }
        let n = w.norm();
        out.push(w / C64::new(n, 0.0));
    }
    out
}

/// Orthonormal eigenvectors (columns) of a normal matrix with unit-modulus
/// spectrum.
///
/// Splits the space with Hermitian functions of `b` whose eigenvectors are
/// eigenvectors of `b`, recursing on any group the split leaves ambiguous.
fn normal_eigvecs(b: &DMatrix<C64>, depth: usize) -> DMatrix<C64> {
    let k = b.nrows();
    if k == 1 {
        return DMatrix::identity(1, 1);
    }
    let center = b.trace() / C64::new(k as f64, 0.0);
    let spread = (b - DMatrix::identity(k, k) * center).norm();
    if spread <= 1e-12 || depth > 48 {
        return DMatrix::identity(k, k);
    }

    let (values, vecs, group_tol) = if spread < 0.5 {
        // All eigenvalues sit on a short arc around the center, where
        // sin(θ - θ_c) is injective and nearly linear.
        let cu = center / center.norm();
        let h = (b * cu.conj() - b.adjoint() * cu) * C64::new(0.0, -0.5);
        let (values, vecs) = hermitian_eig(&h);
        (values, vecs, 1e-13)
    } else {
        // cos(θ - α) for a depth-dependent angle; reflected collisions are
        // resolved by recursion.
        let alpha = 0.618_033_988_749_895 * PI * (depth as f64 + 1.0) + 0.37;
        let ea = cis(-alpha);
        let h = (b * ea + b.adjoint() * ea.conj()) * C64::new(0.5, 0.0);
        let (values, vecs) = hermitian_eig(&h);
        (values, vecs, 1e-5)
    };

    let mut out = DMatrix::zeros(k, k);
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && values[end] - values[end - 1] <= group_tol {
            end += 1;
        }
        let group = vecs.columns(start, end - start).into_owned();
        if end - start == 1 || group_tol < 1e-12 {
            out.columns_mut(start, end - start).copy_from(&group);
        } else {
            let sub = group.adjoint() * b * &group;
            let w = normal_eigvecs(&sub, depth + 1);
            out.columns_mut(start, end - start).copy_from(&(group * w));
        }
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(entries: &[C64]) -> ComplexMatrix {
        ComplexMatrix::diagonal(entries).unwrap()
    }

    #[test]
    fn tensor_identity_and_diagonal() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(tensor(&i2, &i2).unwrap(), ComplexMatrix::identity(4));
        let z = diag(&[ONE, -ONE]);
        assert_eq!(tensor(&z, &i2).unwrap(), diag(&[ONE, ONE, -ONE, -ONE]));
        assert_eq!(tensor(&i2, &ComplexMatrix::identity(4)).unwrap().dim(), 8);
    }

    #[test]
    fn tensor_size_cap() {
        let big = ComplexMatrix::identity(64);
        assert!(matches!(tensor(&big, &big), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn lift_cases() {
        assert_eq!(lift(&ComplexMatrix::identity(2), 4).unwrap(), ComplexMatrix::identity(4));
        let u = diag(&[ONE, C64::i()]);
        assert_eq!(lift(&u, 4).unwrap(), diag(&[ONE, ONE, C64::i(), C64::i()]));
        assert_eq!(lift(&u, 2).unwrap(), u);
        assert!(lift(&u, 6).is_err());
        assert!(lift(&ComplexMatrix::identity(4), 2).is_err());
    }

    #[test]
    fn op_norm_cases() {
        assert!((op_norm(&ComplexMatrix::identity(4)) - 1.0).abs() < 1e-12);
        assert_eq!(op_norm(&ComplexMatrix::zeros(4)), 0.0);
        let d = &diag(&[ONE, -ONE]) - &ComplexMatrix::identity(2);
        assert!((op_norm(&d) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = eig_unitary(&ComplexMatrix::identity(2)).unwrap();
        assert_eq!(e.phases, vec![0.0, 0.0]);
        assert!(e.orthonormality_error() < 1e-12);

        let u = diag(&[ONE, cis(PI / 3.0)]);
        let e = eig_unitary(&u).unwrap();
        assert!(e.phases[0].abs() < 1e-12);
        assert!((e.phases[1] - PI / 3.0).abs() < 1e-12);
        assert!(e.residual(&u) < 1e-12);
    }

    #[test]
    fn eig_four_cycle() {
        // Characteristic polynomial of the cyclic shift is λ⁴ - 1.
        let u = ComplexMatrix::permutation(&[1, 2, 3, 0]).unwrap();
        let e = eig_unitary(&u).unwrap();
        let expected = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];
        for (got, want) in e.phases.iter().zip(expected) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert!(e.residual(&u) < 1e-10);
    }

    #[test]
    fn eig_rejects_non_unitary() {
        let m = diag(&[ONE, C64::new(2.0, 0.0)]);
        assert!(matches!(eig_unitary(&m), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn eig_degenerate_conjugated() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = haar_unitary(16, &mut rng);
        let phases: Vec<C64> =
            (0..16).map(|k| cis(if k < 6 { 0.4 } else if k < 11 { 0.4 + 3e-9 } else { 2.0 })).collect();
        let u = &(&v * &diag(&phases)) * &v.adjoint();
        let e = eig_unitary(&u).unwrap();
        assert!(e.residual(&u) < 1e-9);
        assert!(e.orthonormality_error() < 1e-9);
        let sizes: Vec<usize> = e.clusters(CLUSTER_TOL).iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![11, 5]);
    }

    #[test]
    fn eig_near_reflection_pairs() {
        // Phases symmetric about many angles stress the cosine splitting.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = haar_unitary(32, &mut rng);
        let phases: Vec<C64> = (0..32).map(|k| cis(TAU * (k % 8) as f64 / 8.0)).collect();
        let u = &(&v * &diag(&phases)) * &v.adjoint();
        let e = eig_unitary(&u).unwrap();
        assert!(e.residual(&u) < 1e-9);
        assert!(e.orthonormality_error() < 1e-9);
        assert_eq!(e.clusters(CLUSTER_TOL).len(), 8);
    }

    #[test]
    fn cluster_wraps_seam() {
        let cl = cluster_phases(&[1e-10, 1.0, TAU - 1e-10], 1e-8);
        assert_eq!(cl.len(), 2);
        assert!(cl.iter().any(|c| c.len() == 2));
    }

    #[test]
    fn lifted_eigensystem_doubles_multiplicity() {
        let u = ComplexMatrix::permutation(&[1, 0]).unwrap();
        let mut e = eig_unitary(&u).unwrap();
        e.labels = Some(vec![Label::new(0, 0), Label::new(0, 1)]);
        let lifted = e.lift(2);
        let lu = lift(&u, 4).unwrap();
        assert!(lifted.residual(&lu) < 1e-12);
        assert_eq!(lifted.phases.len(), 4);
        assert_eq!(lifted.labels.unwrap()[3], Label::new(0, 3));
    }
}
