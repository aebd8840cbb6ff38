//! Sparse multivariate trigonometric polynomials in eigenphase variables and
//! symbolic propagation of states through query circuits.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::circuit::{apply_circuit, CircuitSpec, Gate};
use crate::error::{Error, Result};
use crate::linalg::{cis, ComplexMatrix, ComplexVector, EigenSystem, Label, C64, ZERO};
use crate::oracle::{FunctionTable, Oracle};

/// Coefficients below this modulus are dropped.
pub const PRUNE_TOL: f64 = 1e-12;
/// Largest number of stored terms.
pub const TERM_LIMIT: usize = 1_000_000;

/// `Σ_j c_j e^{i(n_{j,1}φ_1 + … + n_{j,D}φ_D)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRepr", into = "PolyRepr")]
pub struct TrigPoly {
    var_count: usize,
    terms: BTreeMap<Vec<i32>, C64>,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    freq: Vec<i32>,
    c: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    #[serde(rename = "D")]
    d: usize,
    terms: Vec<TermRepr>,
}

impl TryFrom<PolyRepr> for TrigPoly {
    type Error = Error;
    fn try_from(r: PolyRepr) -> Result<Self> {
        let mut p = TrigPoly::zero(r.d);
        for t in r.terms {
            if t.freq.len() != r.d {
                return Err(Error::Dimension(format!("frequency vector of length {} in a {}-variate polynomial", t.freq.len(), r.d)));
            }
            p.accumulate(t.freq, C64::new(t.c[0], t.c[1]))?;
        }
        p.prune();
        Ok(p)
    }
}

impl From<TrigPoly> for PolyRepr {
    fn from(p: TrigPoly) -> Self {
        PolyRepr {
            d: p.var_count,
            terms: p.terms.into_iter().map(|(freq, c)| TermRepr { freq, c: [c.re, c.im] }).collect(),
        }
    }
}

impl TrigPoly {
    pub fn zero(var_count: usize) -> Self {
        Self { var_count, terms: BTreeMap::new() }
    }

    pub fn constant(var_count: usize, c: C64) -> Self {
        Self::monomial(var_count, vec![0; var_count], c).expect("zero frequency has the right length")
    }

    pub fn monomial(var_count: usize, freq: Vec<i32>, c: C64) -> Result<Self> {
        if freq.len() != var_count {
            return Err(Error::Dimension(format!("frequency vector of length {} for {var_count} variables", freq.len())));
        }
        let mut p = Self::zero(var_count);
        if c.norm() >= PRUNE_TOL {
            p.terms.insert(freq, c);
        }
        Ok(p)
    }

    pub fn var_count(&self) -> usize {
        self.var_count
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[i32], C64)> {
        self.terms.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// Largest L1 norm of a stored frequency vector.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|f| f.iter().map(|n| n.unsigned_abs()).sum()).max().unwrap_or(0)
    }

    fn accumulate(&mut self, freq: Vec<i32>, c: C64) -> Result<()> {
        *self.terms.entry(freq).or_insert(ZERO) += c;
        if self.terms.len() > TERM_LIMIT {
            return Err(Error::TermLimit { limit: TERM_LIMIT });
        }
        Ok(())
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.norm() >= PRUNE_TOL);
    }

    fn check_vars(&self, other: &TrigPoly) -> Result<()> {
        if self.var_count != other.var_count {
            return Err(Error::Dimension(format!("{} vs {} variables", self.var_count, other.var_count)));
        }
        Ok(())
    }

    pub fn add(&self, other: &TrigPoly) -> Result<TrigPoly> {
        self.check_vars(other)?;
        let mut out = self.clone();
        for (f, &c) in &other.terms {
            out.accumulate(f.clone(), c)?;
        }
        out.prune();
        Ok(out)
    }

    /// `self += s·other`.
    pub fn add_scaled(&mut self, other: &TrigPoly, s: C64) -> Result<()> {
        self.check_vars(other)?;
        if s == ZERO {
            return Ok(());
        }
        for (f, &c) in &other.terms {
            self.accumulate(f.clone(), c * s)?;
        }
        self.prune();
        Ok(())
    }

    pub fn scale(&self, s: C64) -> TrigPoly {
        let mut out = Self { var_count: self.var_count, terms: self.terms.iter().map(|(f, &c)| (f.clone(), c * s)).collect() };
        out.prune();
        out
    }

    /// Multiplies by `e^{i·shift·φ_var}`.
    pub fn mul_monomial(&self, var: usize, shift: i32) -> Result<TrigPoly> {
        if var >= self.var_count {
            return Err(Error::OutOfRange(format!("variable {var} of {}", self.var_count)));
        }
        let terms = self
            .terms
            .iter()
            .map(|(f, &c)| {
                let mut g = f.clone();
                g[var] += shift;
                (g, c)
            })
            .collect();
        Ok(Self { var_count: self.var_count, terms })
    }

    pub fn evaluate(&self, phases: &[f64]) -> Result<C64> {
        if phases.len() != self.var_count {
            return Err(Error::Dimension(format!("{} phases for {} variables", phases.len(), self.var_count)));
        }
        Ok(self
            .terms
            .iter()
            .map(|(f, &c)| c * cis(f.iter().zip(phases).map(|(&n, &p)| n as f64 * p).sum()))
            .sum())
    }
}

pub fn tp_add(a: &TrigPoly, b: &TrigPoly) -> Result<TrigPoly> {
    a.add(b)
}

pub fn tp_scale(a: &TrigPoly, s: C64) -> TrigPoly {
    a.scale(s)
}

pub fn tp_mul_monomial(a: &TrigPoly, var: usize, shift: i32) -> Result<TrigPoly> {
    a.mul_monomial(var, shift)
}

pub fn tp_evaluate(a: &TrigPoly, phases: &[f64]) -> Result<C64> {
    a.evaluate(phases)
}

/// A state written in a query eigenbasis with coefficients that are
/// trigonometric polynomials in the eigenphases.
#[derive(Clone, Debug, Serialize)]
pub struct SymbolicState {
    labels: Vec<Label>,
    var_of: Vec<usize>,
    var_labels: Vec<Label>,
    coeffs: Vec<TrigPoly>,
}

impl SymbolicState {
    /// One variable per distinct label of `eig`.
    pub fn init(state: &ComplexVector, eig: &EigenSystem) -> Result<Self> {
        let labels: Vec<Label> = match &eig.labels {
            Some(l) => l.clone(),
            None => (0..eig.dim).map(|j| Label::new(j, 0)).collect(),
        };
        let var_labels = labels.clone();
        Self::init_with_vars(state, eig, (0..labels.len()).collect(), var_labels)
    }

    /// Variables shared through `var_of[j]`, e.g. the copies a lifted query
    /// makes of one eigenphase.
    pub fn init_with_vars(state: &ComplexVector, eig: &EigenSystem, var_of: Vec<usize>, var_labels: Vec<Label>) -> Result<Self> {
        if state.dim() != eig.dim || eig.vectors.len() != eig.dim || var_of.len() != eig.dim {
            return Err(Error::Dimension(format!("state of dim {} against eigensystem of dim {}", state.dim(), eig.dim)));
        }
        if var_of.iter().any(|&v| v >= var_labels.len()) {
            return Err(Error::OutOfRange("variable index past the variable list".into()));
        }
        let d = var_labels.len();
        let labels = eig.labels.clone().unwrap_or_else(|| (0..eig.dim).map(|j| Label::new(j, 0)).collect());
        let coeffs = eig.vectors.iter().map(|v| TrigPoly::constant(d, v.inner(state))).collect();
        Ok(Self { labels, var_of, var_labels, coeffs })
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Label whose phase each variable stands for.
    pub fn var_labels(&self) -> &[Label] {
        &self.var_labels
    }

    pub fn var_of(&self) -> &[usize] {
        &self.var_of
    }

    pub fn coeffs(&self) -> &[TrigPoly] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn degree(&self) -> u32 {
        self.coeffs.iter().map(TrigPoly::degree).max().unwrap_or(0)
    }

    pub fn term_count(&self) -> usize {
        self.coeffs.iter().map(TrigPoly::len).sum()
    }

    /// `Q_f^{power}` acting diagonally in the eigenbasis.
    pub fn apply_query(&self, power: i32) -> Result<Self> {
        if power != 1 && power != -1 {
            return Err(Error::InvalidInput(format!("query power must be ±1, got {power}")));
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&self.var_of)
            .map(|(c, &v)| c.mul_monomial(v, power))
            .collect::<Result<_>>()?;
        Ok(Self { coeffs, ..self.clone() })
    }

    /// `coeff_j ← Σ_k u_jk coeff_k` for `u` written in the eigenbasis.
    pub fn apply_constant(&self, u_in_basis: &DMatrix<C64>) -> Result<Self> {
        let dim = self.dim();
        if u_in_basis.nrows() != dim || u_in_basis.ncols() != dim {
            return Err(Error::Dimension(format!("{}×{} operator on a state of dim {dim}", u_in_basis.nrows(), u_in_basis.ncols())));
        }
        let vars = self.var_labels.len();
        let mut coeffs = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut acc = TrigPoly::zero(vars);
            for (k, c) in self.coeffs.iter().enumerate() {
                let w = u_in_basis[(j, k)];
                if w != ZERO && !c.is_empty() {
                    acc.add_scaled(c, w)?;
                }
            }
            coeffs.push(acc);
        }
        Ok(Self { coeffs, ..self.clone() })
    }

    /// Numeric coefficients at the given variable values.
    pub fn evaluate(&self, phases: &[f64]) -> Result<Vec<C64>> {
        self.coeffs.iter().map(|c| c.evaluate(phases)).collect()
    }

    /// `Σ_j coeff_j(φ) |v_j⟩` in the computational basis.
    pub fn to_state(&self, eig: &EigenSystem, phases: &[f64]) -> Result<ComplexVector> {
        if eig.dim != self.dim() {
            return Err(Error::Dimension(format!("eigensystem of dim {} for a state of dim {}", eig.dim, self.dim())));
        }
        let c = self.evaluate(phases)?;
        let mut out = vec![ZERO; eig.dim];
        for (cj, v) in c.iter().zip(&eig.vectors) {
            for (o, e) in out.iter_mut().zip(v.entries()) {
                *o += cj * e;
            }
        }
        Ok(ComplexVector::new(out))
    }
}

pub fn symbolic_init(state: &ComplexVector, eig: &EigenSystem) -> Result<SymbolicState> {
    SymbolicState::init(state, eig)
}

pub fn symbolic_apply_query(s: &SymbolicState, power: i32) -> Result<SymbolicState> {
    s.apply_query(power)
}

pub fn symbolic_apply_constant(s: &SymbolicState, u_in_basis: &DMatrix<C64>) -> Result<SymbolicState> {
    s.apply_constant(u_in_basis)
}

/// `V^† U V` for the eigenvector matrix `V` of `eig`.
pub fn in_eigenbasis(u: &ComplexMatrix, eig: &EigenSystem) -> Result<DMatrix<C64>> {
    if u.dim() != eig.dim {
        return Err(Error::Dimension(format!("operator of dim {} against eigensystem of dim {}", u.dim(), eig.dim)));
    }
    let v = eig.vector_matrix();
    Ok(v.adjoint() * u.as_dmatrix() * v)
}

/// Degree and size of the symbolic state after one step of a circuit.
#[derive(Clone, Debug, Serialize)]
pub struct DegreeStep {
    /// Index of the last gate folded into this step.
    pub gate: usize,
    pub query: bool,
    pub degree: u32,
    pub terms: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeTrace {
    pub n_queries: usize,
    pub var_count: usize,
    pub steps: Vec<DegreeStep>,
    pub final_degree: u32,
    /// Largest distance between the symbolic state evaluated at each function
    /// and the numerically simulated state.
    pub max_eval_error: f64,
    pub checked_functions: usize,
}

/// Propagates basis input `input` through `c` symbolically, with variables
/// the eigenphases of `oracle` at `reference`, one per label of the unlifted
/// query. Runs of non-query gates are folded into one constant.
///
/// The symbolic state is checked against direct simulation at `reference`,
/// and also at every function of `check` when the oracle's eigenbasis does
/// not depend on the function.
pub fn degree_trace(c: &CircuitSpec, oracle: &Oracle, reference: &FunctionTable, input: usize, check: &[FunctionTable]) -> Result<DegreeTrace> {
    c.validate()?;
    let dim = 1usize << c.system_bits;
    if input >= dim {
        return Err(Error::OutOfRange(format!("input {input} on {} qubits", c.system_bits)));
    }
    let base = oracle.eigensystem(reference)?;
    let base_labels = base.labels.clone().unwrap_or_else(|| (0..base.dim).map(|j| Label::new(j, 0)).collect());
    if base.dim > dim || dim % base.dim != 0 {
        return Err(Error::Dimension(format!("query of dim {} in a circuit of dim {dim}", base.dim)));
    }
    let factor = dim / base.dim;
    let eig = base.lift(factor);
    let var_of: Vec<usize> = (0..dim).map(|j| j / factor).collect();
    let mut state = SymbolicState::init_with_vars(&ComplexVector::basis(dim, input), &eig, var_of, base_labels.clone())?;

    let mut steps = Vec::new();
    let mut pending: Vec<Gate> = Vec::new();
    let flush = |pending: &mut Vec<Gate>, state: &SymbolicState| -> Result<SymbolicState> {
        let seg = CircuitSpec::new(c.system_bits, std::mem::take(pending));
        let u = apply_circuit(&seg, oracle, reference)?;
        state.apply_constant(&in_eigenbasis(&u, &eig)?)
    };
    for (k, g) in c.gates.iter().enumerate() {
        match g {
            Gate::Query { power } => {
                if !pending.is_empty() {
                    state = flush(&mut pending, &state)?;
                    steps.push(DegreeStep { gate: k - 1, query: false, degree: state.degree(), terms: state.term_count() });
                }
                state = state.apply_query(*power)?;
                steps.push(DegreeStep { gate: k, query: true, degree: state.degree(), terms: state.term_count() });
            }
            other => pending.push(other.clone()),
        }
    }
    if !pending.is_empty() {
        state = flush(&mut pending, &state)?;
        steps.push(DegreeStep { gate: c.gates.len() - 1, query: false, degree: state.degree(), terms: state.term_count() });
    }

    let mut fs = vec![reference.clone()];
    if oracle.has_fixed_eigenbasis() {
        fs.extend(check.iter().cloned());
    }
    let mut max_eval_error: f64 = 0.0;
    for f in &fs {
        let at_f = oracle.eigensystem(f)?;
        let phases = base_labels
            .iter()
            .map(|&l| {
                at_f.index_of(l)
                    .map(|j| at_f.phases[j])
                    .ok_or_else(|| Error::Numerical(format!("label {l:?} missing at another function")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let symbolic = state.to_state(&eig, &phases)?;
        let numeric = apply_circuit(c, oracle, f)?.apply(&ComplexVector::basis(dim, input));
        max_eval_error = max_eval_error.max(symbolic.distance(&numeric));
    }
    Ok(DegreeTrace {
        n_queries: c.query_count(),
        var_count: base_labels.len(),
        final_degree: state.degree(),
        steps,
        max_eval_error,
        checked_functions: fs.len(),
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use super::*;
    use crate::linalg::ONE;

    fn mono(d: usize, f: &[i32], c: f64) -> TrigPoly {
        TrigPoly::monomial(d, f.to_vec(), C64::new(c, 0.0)).unwrap()
    }

    #[test]
    fn add_examples() {
        let t = mono(2, &[1, -1], 0.5);
        assert_eq!(tp_add(&t, &TrigPoly::zero(2)).unwrap(), t);
        let s = tp_add(&mono(1, &[1], 1.0), &mono(1, &[-1], 1.0)).unwrap();
        assert_eq!((s.len(), s.degree()), (2, 1));
        let z = tp_add(&mono(1, &[1], 1.0), &mono(1, &[1], -1.0)).unwrap();
        assert!(z.is_empty());
        assert_eq!(z.degree(), 0);
        assert!(tp_add(&mono(1, &[1], 1.0), &mono(2, &[1, 0], 1.0)).is_err());
    }

    #[test]
    fn monomial_shift_examples() {
        let one = TrigPoly::constant(2, ONE);
        let e0 = tp_mul_monomial(&one, 0, 1).unwrap();
        assert_eq!(e0, mono(2, &[1, 0], 1.0));
        assert_eq!(e0.degree(), 1);
        assert_eq!(tp_mul_monomial(&e0, 0, -1).unwrap().degree(), 0);
        let sum = tp_add(&mono(2, &[1, 0], 1.0), &mono(2, &[0, 1], 1.0)).unwrap();
        let shifted = tp_mul_monomial(&sum, 1, 1).unwrap();
        let want = tp_add(&mono(2, &[1, 1], 1.0), &mono(2, &[0, 2], 1.0)).unwrap();
        assert_eq!(shifted, want);
        assert_eq!(shifted.degree(), 2);
        assert!(tp_mul_monomial(&sum, 2, 1).is_err());
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(tp_evaluate(&TrigPoly::zero(3), &[0.1, 0.2, 0.3]).unwrap(), ZERO);
        let v = tp_evaluate(&mono(1, &[1], 1.0), &[PI]).unwrap();
        assert!((v + ONE).norm() < 1e-15);
        let p = tp_add(&mono(2, &[1, 1], 0.5), &TrigPoly::constant(2, C64::new(0.5, 0.0))).unwrap();
        assert!(tp_evaluate(&p, &[FRAC_PI_2, FRAC_PI_2]).unwrap().norm() < 1e-15);
        assert!(tp_evaluate(&p, &[0.0]).is_err());
    }

    #[test]
    fn json_shape() {
        let p = mono(2, &[1, -2], 0.25);
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["D"], 2);
        assert_eq!(v["terms"][0]["freq"], serde_json::json!([1, -2]));
        let back: TrigPoly = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<TrigPoly>(r#"{"D": 2, "terms": [{"freq": [1], "c": [1.0, 0.0]}]}"#).is_err());
    }

    fn cycle_system() -> (ComplexMatrix, EigenSystem) {
        let f = crate::oracle::FunctionTable::new(2, 2, vec![1, 2, 3, 0]).unwrap();
        (crate::oracle::build_minimal(&f).unwrap().matrix, crate::oracle::minimal_eigensystem(&f).unwrap())
    }

    #[test]
    fn init_and_query() {
        let (_, eig) = cycle_system();
        let s = symbolic_init(&eig.vectors[2], &eig).unwrap();
        assert_eq!(s.degree(), 0);
        let c = s.evaluate(&eig.phases).unwrap();
        assert!((c[2] - ONE).norm() < 1e-12 && c.iter().enumerate().all(|(j, z)| j == 2 || z.norm() < 1e-12));
        let q = symbolic_apply_query(&s, 1).unwrap();
        assert_eq!(q.degree(), 1);
        let back = symbolic_apply_query(&q, -1).unwrap();
        assert_eq!(back.coeffs(), s.coeffs());
        assert!(s.apply_query(2).is_err());
    }

    #[test]
    fn constant_does_not_raise_degree() {
        let (u, eig) = cycle_system();
        let start = ComplexVector::basis(4, 1);
        let s = symbolic_init(&start, &eig).unwrap().apply_query(1).unwrap();
        let h = crate::linalg::haar_unitary(4, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5));
        let hb = in_eigenbasis(&h, &eig).unwrap();
        let out = symbolic_apply_constant(&s, &hb).unwrap();
        assert!(out.degree() <= s.degree());
        let id = symbolic_apply_constant(&s, &DMatrix::identity(4, 4)).unwrap();
        assert_eq!(id.coeffs(), s.coeffs());
        // Numeric cross-check at the true phases.
        let numeric = h.apply(&u.apply(&start));
        let symbolic = out.to_state(&eig, &eig.phases).unwrap();
        assert!(numeric.distance(&symbolic) < 1e-9);
    }

    #[test]
    fn degree_trace_follows_query_count() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let c = crate::circuit::random_circuit(3, 3, &mut rng);
        let reference = FunctionTable::new(1, 1, vec![0, 0]).unwrap();
        let check = crate::classify::enumerate_functions(1, 1).unwrap();
        let t = degree_trace(&c, &Oracle::Standard, &reference, 0, &check).unwrap();
        assert!(t.final_degree <= 3);
        assert_eq!(t.checked_functions, 5);
        assert!(t.max_eval_error < 1e-9);
        assert!(t.steps.iter().filter(|s| s.query).zip(1..).all(|(s, k)| s.degree <= k));
        // Without a fixed eigenbasis only the reference function is checked.
        let f = FunctionTable::new(1, 1, vec![1, 0]).unwrap();
        let t = degree_trace(&c, &Oracle::Minimal, &f, 1, &check).unwrap();
        assert_eq!(t.checked_functions, 1);
        assert!(t.max_eval_error < 1e-9);
    }
}
