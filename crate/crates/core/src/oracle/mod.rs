//! Oracle families and their analytic eigensystems.
//!
//! The standard oracle adds `f(x)` to the output register modulo `2^m`, as
//! opposed to the bitwise XOR common elsewhere in the literature. The two
//! agree for `m = 1`.

mod function;
mod glp;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

pub use function::{orbit_decomposition, FunctionTable, Orbit, OrbitDecomposition, MAX_INPUT_BITS, MAX_OUTPUT_BITS};
pub use glp::{cyclic_distance, GPreset, GlpSpec};

use crate::error::{Error, Result};
use crate::linalg::{
    canonical_phase, cis, eig_unitary, ComplexMatrix, ComplexVector, EigenSystem, Label, C64, MAX_DIM,
};

fn check_dim(bits: usize) -> Result<usize> {
    if bits >= usize::BITS as usize || (1usize << bits) > MAX_DIM {
        return Err(Error::SizeCap { dim: 1usize.checked_shl(bits as u32).unwrap_or(usize::MAX), cap: MAX_DIM });
    }
    Ok(1 << bits)
}

/// `|ψ_s⟩ = 2^{-m/2} Σ_k e^{-2πisk/2^m} |k⟩`.
pub fn fourier_state(m: usize, s: usize) -> Result<ComplexVector> {
    let size = check_dim(m)?;
    if s >= size {
        return Err(Error::OutOfRange(format!("s = {s} must be below 2^{m}")));
    }
    let norm = (size as f64).sqrt().recip();
    Ok(ComplexVector::new(
        (0..size)
            .map(|k| cis(-TAU * ((s * k) % size) as f64 / size as f64) * norm)
            .collect(),
    ))
}

/// `|x⟩|y⟩ ↦ |x⟩|y + f(x) mod 2^m⟩`.
pub fn build_standard(f: &FunctionTable) -> Result<ComplexMatrix> {
    check_dim(f.n() + f.m())?;
    let out = f.codomain_size() as usize;
    let perm: Vec<usize> = (0..f.domain_size() * out)
        .map(|idx| {
            let (x, y) = (idx / out, idx % out);
            x * out + (y + f.eval(x) as usize) % out
        })
        .collect();
    ComplexMatrix::permutation(&perm)
}

/// Phase `2π·s·f(x)/2^m` reduced exactly through integer arithmetic.
fn standard_phase(f: &FunctionTable, x: usize, s: usize) -> f64 {
    let out = f.codomain_size() as u128;
    let k = (s as u128 * f.eval(x) as u128) % out;
    canonical_phase(TAU * k as f64 / out as f64)
}

/// Eigenvectors `|x⟩|ψ_s⟩` labelled `(x, s)`.
pub fn standard_eigensystem(f: &FunctionTable) -> Result<EigenSystem> {
    let dim = check_dim(f.n() + f.m())?;
    let out = f.codomain_size() as usize;
    let psi: Vec<ComplexVector> = (0..out).map(|s| fourier_state(f.m(), s)).collect::<Result<_>>()?;
    let mut phases = Vec::with_capacity(dim);
    let mut vectors = Vec::with_capacity(dim);
    let mut labels = Vec::with_capacity(dim);
    for x in 0..f.domain_size() {
        let ex = ComplexVector::basis(f.domain_size(), x);
        for (s, p) in psi.iter().enumerate() {
            phases.push(standard_phase(f, x, s));
            vectors.push(ex.tensor(p));
            labels.push(Label::new(x, s));
        }
    }
    Ok(EigenSystem { dim, phases, vectors, labels: Some(labels) })
}

fn complex_phase_angle(f: &FunctionTable, d: i64, x: usize) -> f64 {
    let out = f.codomain_size() as i128;
    let k = (d as i128 * f.eval(x) as i128).rem_euclid(out);
    canonical_phase(TAU * k as f64 / out as f64)
}

/// `|x⟩ ↦ e^{2πi·d·f(x)/2^m} |x⟩`. Any integer `d` is accepted; only `d mod 2^m` matters.
pub fn build_complex_phase(f: &FunctionTable, d: i64) -> Result<ComplexMatrix> {
    check_dim(f.n())?;
    let diag: Vec<C64> = (0..f.domain_size()).map(|x| cis(complex_phase_angle(f, d, x))).collect();
    ComplexMatrix::diagonal(&diag)
}

/// Minimal oracle together with a flag telling whether `f` failed to be a
/// permutation, in which case the matrix is the identity.
#[derive(Clone, Debug)]
pub struct MinimalBuild {
    pub matrix: ComplexMatrix,
    pub degenerate: bool,
}

/// `|x⟩ ↦ |f(x)⟩` for permutations, the identity otherwise.
pub fn build_minimal(f: &FunctionTable) -> Result<MinimalBuild> {
    let dim = check_dim(f.n())?;
    if f.is_permutation() {
        let perm: Vec<usize> = f.values().iter().map(|&v| v as usize).collect();
        Ok(MinimalBuild { matrix: ComplexMatrix::permutation(&perm)?, degenerate: false })
    } else {
        Ok(MinimalBuild { matrix: ComplexMatrix::identity(dim), degenerate: true })
    }
}

/// `r^{-1/2} Σ_k e^{-2πisk/r} |f^k(x_ℓ)⟩` with phase `2πs/r`, labelled `(ℓ, s)`.
pub fn minimal_eigensystem(f: &FunctionTable) -> Result<EigenSystem> {
    let dim = check_dim(f.n())?;
    let orbits = f.orbits()?;
    let mut phases = Vec::with_capacity(dim);
    let mut vectors = Vec::with_capacity(dim);
    let mut labels = Vec::with_capacity(dim);
    for (l, orbit) in orbits.orbits.iter().enumerate() {
        let r = orbit.len();
        let norm = (r as f64).sqrt().recip();
        for s in 0..r {
            let mut v = vec![C64::new(0.0, 0.0); dim];
            for (k, &member) in orbit.members.iter().enumerate() {
                v[member] = cis(-TAU * ((s * k) % r) as f64 / r as f64) * norm;
            }
            phases.push(canonical_phase(TAU * s as f64 / r as f64));
            vectors.push(ComplexVector::new(v));
            labels.push(Label::new(l, s));
        }
    }
    Ok(EigenSystem { dim, phases, vectors, labels: Some(labels) })
}

/// Diagonal generic local phase oracle.
pub fn build_generic_local_phase(spec: &GlpSpec, f: &FunctionTable) -> Result<ComplexMatrix> {
    check_dim(f.n())?;
    spec.validate(f.n())?;
    let diag: Vec<C64> = (0..f.domain_size()).map(|x| cis(spec.phase(x, f))).collect();
    ComplexMatrix::diagonal(&diag)
}

fn diagonal_eigensystem(phases: Vec<f64>) -> EigenSystem {
    let dim = phases.len();
    EigenSystem {
        dim,
        vectors: (0..dim).map(|x| ComplexVector::basis(dim, x)).collect(),
        labels: Some((0..dim).map(|x| Label::new(x, 0)).collect()),
        phases,
    }
}

/// An oracle: a rule assigning a unitary `Q_f` to every function table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Oracle {
    Standard,
    ComplexPhase { d: i64 },
    Minimal,
    GenericLocalPhase { spec: GlpSpec },
    /// The same unitary for every `f`; the query carries no information.
    Fixed { matrix: ComplexMatrix },
    /// `B Q_f B^†` for an `f`-independent unitary `B`.
    Conjugated { inner: Box<Oracle>, basis: ComplexMatrix },
}

impl Oracle {
    /// Parses the short names used on the command line.
    pub fn from_kind(kind: &str, d: Option<i64>, glp: Option<GlpSpec>) -> Result<Oracle> {
        match kind {
            "std" | "standard" => Ok(Oracle::Standard),
            "cp" | "complex_phase" => Ok(Oracle::ComplexPhase { d: d.unwrap_or(1) }),
            "min" | "minimal" => Ok(Oracle::Minimal),
            "glp" | "generic_local_phase" => glp
                .map(|spec| Oracle::GenericLocalPhase { spec })
                .ok_or_else(|| Error::InvalidInput("the glp oracle needs a coefficient spec".into())),
            other => Err(Error::InvalidInput(format!("unknown oracle kind '{other}'"))),
        }
    }

    /// Short identifier, e.g. `std` or `cp2`.
    pub fn id(&self) -> String {
        match self {
            Oracle::Standard => "std".into(),
            Oracle::ComplexPhase { d } => format!("cp{d}"),
            Oracle::Minimal => "min".into(),
            Oracle::GenericLocalPhase { spec } => format!("glp-{}", serde_json::to_value(spec.g).unwrap_or_default().as_str().unwrap_or("?")),
            Oracle::Fixed { .. } => "fixed".into(),
            Oracle::Conjugated { inner, .. } => format!("conj({})", inner.id()),
        }
    }

    /// Number of qubits `Q_f` acts on for `f: B^n → B^m`.
    pub fn query_bits(&self, n: usize, m: usize) -> usize {
        match self {
            Oracle::Standard => n + m,
            Oracle::ComplexPhase { .. } | Oracle::Minimal | Oracle::GenericLocalPhase { .. } => n,
            Oracle::Fixed { matrix } => matrix.qubits(),
            Oracle::Conjugated { inner, .. } => inner.query_bits(n, m),
        }
    }

    /// Whether the eigenvectors of `Q_f` can be chosen independently of `f`.
    pub fn has_fixed_eigenbasis(&self) -> bool {
        match self {
            Oracle::Minimal => false,
            Oracle::Conjugated { inner, .. } => inner.has_fixed_eigenbasis(),
            _ => true,
        }
    }

    /// The unitary `Q_f`.
    pub fn query(&self, f: &FunctionTable) -> Result<ComplexMatrix> {
        match self {
            Oracle::Standard => build_standard(f),
            Oracle::ComplexPhase { d } => build_complex_phase(f, *d),
            Oracle::Minimal => Ok(build_minimal(f)?.matrix),
            Oracle::GenericLocalPhase { spec } => build_generic_local_phase(spec, f),
            Oracle::Fixed { matrix } => Ok(matrix.clone()),
            Oracle::Conjugated { inner, basis } => {
                let q = inner.query(f)?;
                if q.dim() != basis.dim() {
                    return Err(Error::Dimension(format!("basis is {} but query is {}", basis.dim(), q.dim())));
                }
                Ok(&(basis * &q) * &basis.adjoint())
            }
        }
    }

    /// Closed-form labelled eigensystem, when the family has one at `f`.
    pub fn analytic_eigensystem(&self, f: &FunctionTable) -> Result<Option<EigenSystem>> {
        Ok(match self {
            Oracle::Standard => Some(standard_eigensystem(f)?),
            Oracle::ComplexPhase { d } => {
                check_dim(f.n())?;
                Some(diagonal_eigensystem((0..f.domain_size()).map(|x| complex_phase_angle(f, *d, x)).collect()))
            }
            Oracle::Minimal if f.is_permutation() => Some(minimal_eigensystem(f)?),
            Oracle::Minimal => {
                check_dim(f.n())?;
                Some(diagonal_eigensystem(vec![0.0; f.domain_size()]))
            }
            Oracle::GenericLocalPhase { spec } => {
                check_dim(f.n())?;
                spec.validate(f.n())?;
                Some(diagonal_eigensystem(
                    (0..f.domain_size()).map(|x| canonical_phase(spec.phase(x, f))).collect(),
                ))
            }
            Oracle::Fixed { .. } => None,
            Oracle::Conjugated { inner, basis } => inner.analytic_eigensystem(f)?.map(|mut sys| {
                sys.vectors = sys.vectors.iter().map(|v| basis.apply(v)).collect();
                sys
            }),
        })
    }

    /// Analytic eigensystem if available, otherwise a numeric one with
    /// labels `(j, 0)` in phase order.
    pub fn eigensystem(&self, f: &FunctionTable) -> Result<EigenSystem> {
        if let Some(sys) = self.analytic_eigensystem(f)? {
            return Ok(sys);
        }
        let mut sys = eig_unitary(&self.query(f)?)?;
        sys.labels = Some((0..sys.dim).map(|j| Label::new(j, 0)).collect());
        Ok(sys)
    }

    /// Labelled phases `θ_{x,i}(f)`.
    pub fn phases(&self, f: &FunctionTable) -> Result<PhaseAssignment> {
        let sys = self.eigensystem(f)?;
        let labels = sys.labels.expect("eigensystem always labelled");
        Ok(PhaseAssignment::new(labels.into_iter().zip(sys.phases).collect()))
    }
}

/// Phases keyed by eigenvector label, sorted by label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseAssignment {
    pub entries: Vec<(Label, f64)>,
}

impl PhaseAssignment {
    pub fn new(mut entries: Vec<(Label, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        Self { entries }
    }

    pub fn get(&self, label: Label) -> Option<f64> {
        self.entries.binary_search_by_key(&label, |e| e.0).ok().map(|i| self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Labelled phases of the named oracle family at `f`.
pub fn oracle_phases(kind: &str, f: &FunctionTable, d: Option<i64>, glp: Option<GlpSpec>) -> Result<PhaseAssignment> {
    Oracle::from_kind(kind, d, glp)?.phases(f)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::linalg::{lift, ONE};

    fn table(n: usize, m: usize, v: &[u64]) -> FunctionTable {
        FunctionTable::new(n, m, v.to_vec()).unwrap()
    }

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn fourier_examples() {
        let p0 = fourier_state(1, 0).unwrap();
        assert!(p0.entries().iter().all(|&a| close(a, C64::new(FRAC_1_SQRT_2, 0.0))));
        let p1 = fourier_state(1, 1).unwrap();
        assert!(close(p1.entries()[1], C64::new(-FRAC_1_SQRT_2, 0.0)));
        assert!(fourier_state(1, 2).is_err());
        for s in 0..8 {
            for t in 0..8 {
                let a = fourier_state(3, s).unwrap();
                let b = fourier_state(3, t).unwrap();
                // Direct summation of conj(a_k) b_k.
                let ip: C64 = a.entries().iter().zip(b.entries()).map(|(x, y)| x.conj() * y).sum();
                let want = if s == t { ONE } else { C64::new(0.0, 0.0) };
                assert!((ip - want).norm() < 1e-12, "s={s} t={t}");
            }
        }
    }

    #[test]
    fn standard_not_gate() {
        let q = build_standard(&table(1, 1, &[1, 0])).unwrap();
        // Column j holds the image of |j⟩.
        let image = |j: usize| (0..4).find(|&i| q.get(i, j) == ONE).unwrap();
        assert_eq!([image(0), image(1), image(2), image(3)], [1, 0, 2, 3]);
    }

    #[test]
    fn standard_adds_mod_two_to_the_m() {
        let q = build_standard(&table(1, 2, &[3, 0])).unwrap();
        // |0⟩|2⟩ is index 2; (2 + 3) mod 4 = 1.
        assert_eq!(q.get(1, 2), ONE);
        assert_eq!(build_standard(&FunctionTable::zero(2, 2).unwrap()).unwrap().as_dmatrix(), ComplexMatrix::identity(16).as_dmatrix());
    }

    #[test]
    fn standard_eigen_examples() {
        let f = table(1, 1, &[0, 1]);
        let sys = standard_eigensystem(&f).unwrap();
        let j = sys.index_of(Label::new(1, 1)).unwrap();
        assert!((sys.phases[j] - PI).abs() < 1e-15);
        for (l, &p) in sys.labels.as_ref().unwrap().iter().zip(&sys.phases) {
            if l.i == 0 {
                assert_eq!(p, 0.0);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let f = FunctionTable::random(2, 2, &mut rng).unwrap();
            let q = build_standard(&f).unwrap();
            assert!(standard_eigensystem(&f).unwrap().residual(&q) <= 1e-10);
        }
    }

    #[test]
    fn complex_phase_examples() {
        let q = build_complex_phase(&table(1, 1, &[1, 0]), 1).unwrap();
        assert!(close(q.get(0, 0), C64::new(-1.0, 0.0)) && close(q.get(1, 1), ONE));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let f = FunctionTable::random(2, 3, &mut rng).unwrap();
            let q = build_complex_phase(&f, 8).unwrap();
            assert!((&q - &ComplexMatrix::identity(4)).max_abs() < 1e-12);
        }
        let z = build_complex_phase(&FunctionTable::zero(2, 2).unwrap(), 3).unwrap();
        assert_eq!(z.max_abs(), 1.0);
        assert!((&z - &ComplexMatrix::identity(4)).max_abs() == 0.0);
    }

    #[test]
    fn minimal_examples() {
        let b = build_minimal(&table(1, 1, &[0, 0])).unwrap();
        assert!(b.degenerate);
        assert!((&b.matrix - &ComplexMatrix::identity(2)).max_abs() == 0.0);
        let x = build_minimal(&table(1, 1, &[1, 0])).unwrap();
        assert!(!x.degenerate && x.matrix.get(1, 0) == ONE && x.matrix.get(0, 1) == ONE);
        let c = build_minimal(&table(2, 2, &[1, 2, 3, 0])).unwrap().matrix;
        for x in 0..4 {
            assert_eq!(c.get((x + 1) % 4, x), ONE);
        }
    }

    #[test]
    fn minimal_cycle_eigenvector() {
        let f = table(2, 2, &[1, 2, 3, 0]);
        let sys = minimal_eigensystem(&f).unwrap();
        let j = sys.index_of(Label::new(0, 1)).unwrap();
        let i = C64::new(0.0, 1.0);
        let want = [ONE * 0.5, -i * 0.5, -ONE * 0.5, i * 0.5];
        for (a, b) in sys.vectors[j].entries().iter().zip(want) {
            assert!(close(*a, b));
        }
        assert!(close(sys.eigenvalue(j), i));
        let ph = oracle_phases("min", &f, None, None).unwrap();
        for s in 0..4 {
            assert!((ph.get(Label::new(0, s)).unwrap() - PI * s as f64 / 2.0).abs() < 1e-15);
        }
    }

    fn permutations_of(size: usize) -> Vec<Vec<u64>> {
        let mut out = Vec::new();
        let mut cur: Vec<u64> = (0..size as u64).collect();
        fn rec(k: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
            if k == cur.len() {
                out.push(cur.clone());
                return;
            }
            for i in k..cur.len() {
                cur.swap(k, i);
                rec(k + 1, cur, out);
                cur.swap(k, i);
            }
        }
        rec(0, &mut cur, &mut out);
        out
    }

    #[test]
    fn minimal_eigensystems_of_all_n2_permutations() {
        let perms = permutations_of(4);
        assert_eq!(perms.len(), 24);
        for p in perms {
            let f = table(2, 2, &p);
            let q = build_minimal(&f).unwrap().matrix;
            let sys = minimal_eigensystem(&f).unwrap();
            assert!(sys.residual(&q) <= 1e-10);
            assert!(sys.orthonormality_error() <= 1e-9);
        }
    }

    #[test]
    fn minimal_inverse_cancels() {
        for n in 1..=3 {
            let perms = if n < 3 { permutations_of(1 << n) } else {
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                (0..50).map(|_| FunctionTable::random_permutation(3, &mut rng).unwrap().values().to_vec()).collect()
            };
            for p in perms {
                let f = table(n, n, &p);
                let prod = &build_minimal(&f).unwrap().matrix * &build_minimal(&f.inverse().unwrap()).unwrap().matrix;
                assert!((&prod - &ComplexMatrix::identity(1 << n)).max_abs() == 0.0);
            }
        }
    }

    #[test]
    fn glp_examples() {
        let f = table(2, 3, &[5, 1, 7, 2]);
        let zero = GlpSpec::diagonal(2, GPreset::Sine, 0.0).unwrap();
        assert!((&build_generic_local_phase(&zero, &f).unwrap() - &ComplexMatrix::identity(4)).max_abs() == 0.0);
        let diag = GlpSpec::diagonal(2, GPreset::Linear, 1.0).unwrap();
        let a = build_generic_local_phase(&diag, &f).unwrap();
        let b = build_complex_phase(&f, 1).unwrap();
        assert!((&a - &b).max_abs() < 1e-12);
        let banded = GlpSpec::banded(2, GPreset::Linear, 1, 0.7).unwrap();
        let z = build_generic_local_phase(&banded, &FunctionTable::zero(2, 3).unwrap()).unwrap();
        assert!((&z - &ComplexMatrix::identity(4)).max_abs() == 0.0);
    }

    #[test]
    fn phases_examples() {
        let z = oracle_phases("std", &FunctionTable::zero(2, 1).unwrap(), None, None).unwrap();
        assert_eq!(z.len(), 8);
        assert!(z.entries.iter().all(|e| e.1 == 0.0));
        let cp = oracle_phases("cp", &table(1, 1, &[1, 0]), Some(1), None).unwrap();
        assert!((cp.get(Label::new(0, 0)).unwrap() - PI).abs() < 1e-15);
        assert_eq!(cp.get(Label::new(1, 0)), Some(0.0));
        assert!(oracle_phases("xor", &table(1, 1, &[1, 0]), None, None).is_err());
    }

    #[test]
    fn lift_doubles_multiplicity() {
        let f = table(2, 2, &[1, 2, 3, 0]);
        let q = build_minimal(&f).unwrap().matrix;
        let lifted = lift(&q, 8).unwrap();
        let mut base: Vec<f64> = eig_unitary(&q).unwrap().phases;
        let mut up: Vec<f64> = eig_unitary(&lifted).unwrap().phases;
        base.sort_by(f64::total_cmp);
        up.sort_by(f64::total_cmp);
        let doubled: Vec<f64> = base.iter().flat_map(|&p| [p, p]).collect();
        for (a, b) in up.iter().zip(&doubled) {
            assert!(crate::linalg::phase_distance(*a, *b) < 1e-9);
        }
    }

    #[test]
    fn conjugated_eigensystem_follows_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let basis = crate::linalg::haar_unitary(4, &mut rng);
        let oracle = Oracle::Conjugated { inner: Box::new(Oracle::ComplexPhase { d: 1 }), basis };
        let f = table(2, 2, &[1, 3, 0, 2]);
        let q = oracle.query(&f).unwrap();
        assert!(oracle.eigensystem(&f).unwrap().residual(&q) < 1e-10);
        let fixed = Oracle::Fixed { matrix: q.clone() };
        assert!(fixed.eigensystem(&f).unwrap().residual(&q) < 1e-10);
    }

    #[test]
    fn oracle_json_round_trip() {
        let o = Oracle::ComplexPhase { d: 3 };
        let text = serde_json::to_string(&o).unwrap();
        assert_eq!(text, r#"{"kind":"complex_phase","d":3}"#);
        let back: Oracle = serde_json::from_str(&text).unwrap();
        assert_eq!(back.id(), "cp3");
    }
}
