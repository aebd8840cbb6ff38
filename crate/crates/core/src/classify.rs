//! Exhaustive classification of small oracle instances as nonentangled,
//! basic or simple.
//!
//! Every predicate is decided over an explicit list of function tables, so
//! the verdicts are only as strong as the enumerated family. A
//! [`Oracle::Conjugated`] family is classified through its inner oracle: the
//! known base change is undone first.

use nalgebra::{DMatrix, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    cluster_phases, eig_normal, gaussian, gram_schmidt, hermitian_eig, phase_distance, ComplexMatrix, ComplexVector,
    C64, CLUSTER_TOL, ZERO,
};
use crate::oracle::{FunctionTable, Oracle};

/// Largest `m·2^n` accepted by [`enumerate_functions`].
pub const ENUMERATION_CAP_BITS: usize = 16;
/// Singular-value threshold for the commutant nullspace.
pub const COMMUTANT_TOL: f64 = 1e-9;
/// Tolerance for stability, common-basis and phase comparisons.
pub const CLASSIFY_TOL: f64 = 1e-9;
const SEARCH_ATTEMPTS: usize = 64;
const DISTINCT_TOL: f64 = 1e-6;
const CSP_NODE_BUDGET: usize = 1_000_000;
/// Entries of the commutant constraint matrix, `dim(U)^2 · 4^n`.
const COMMUTANT_ENTRY_CAP: usize = 1 << 22;

/// All tables `B^n → B^m` in lexicographic order (`f(0)` most significant).
pub fn enumerate_functions(n: usize, m: usize) -> Result<Vec<FunctionTable>> {
    let bits = n.checked_shl(0).and_then(|_| 1usize.checked_shl(n as u32)).map(|s| s * m);
    let bits = match bits {
        Some(b) if n >= 1 && m >= 1 && b <= ENUMERATION_CAP_BITS => b,
        _ => {
            return Err(Error::OutOfRange(format!(
                "enumerating B^{n} → B^{m} needs m·2^n ≤ {ENUMERATION_CAP_BITS}"
            )))
        }
    };
    let size = 1usize << n;
    let mask = (1u64 << m) - 1;
    (0..1u64 << bits)
        .map(|code| {
            let values = (0..size).map(|x| (code >> ((size - 1 - x) * m)) & mask).collect();
            FunctionTable::new(n, m, values)
        })
        .collect()
}

/// All permutations of `B^n` in lexicographic order, `n ≤ 3`.
pub fn enumerate_permutations(n: usize) -> Result<Vec<FunctionTable>> {
    if n == 0 || n > 3 {
        return Err(Error::OutOfRange(format!("permutation enumeration supports 1 ≤ n ≤ 3, got {n}")));
    }
    let mut cur: Vec<u64> = (0..1u64 << n).collect();
    let mut out = vec![FunctionTable::new(n, n, cur.clone())?];
    while next_permutation(&mut cur) {
        out.push(FunctionTable::new(n, n, cur.clone())?);
    }
    Ok(out)
}

fn next_permutation(v: &mut [u64]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Sub-family of `F_n^m` a classification runs over.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "domain")]
pub enum Domain {
    All,
    Permutations,
    /// Permutations whose every orbit has length at most `p_bound`.
    BoundedOrbits { p_bound: usize },
}

/// Tables of `domain`, in lexicographic order.
pub fn function_family(n: usize, m: usize, domain: &Domain) -> Result<Vec<FunctionTable>> {
    match domain {
        Domain::All => enumerate_functions(n, m),
        Domain::Permutations | Domain::BoundedOrbits { .. } if n != m => {
            Err(Error::InvalidInput(format!("permutation domains need n = m, got ({n}, {m})")))
        }
        Domain::Permutations => enumerate_permutations(n),
        Domain::BoundedOrbits { p_bound } => Ok(enumerate_permutations(n)?
            .into_iter()
            .filter(|f| f.orbits().map(|o| o.max_length() <= *p_bound).unwrap_or(false))
            .collect()),
    }
}

/// Basis of `{A : U(A⊗I) = (A⊗I)U}` for `A` acting on the front register.
#[derive(Clone, Debug)]
pub struct CommutantBasis {
    pub front_dim: usize,
    pub elements: Vec<DMatrix<C64>>,
}

impl CommutantBasis {
    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    /// `max_j ‖[U, A_j⊗I]‖_F`.
    pub fn max_residual(&self, u: &ComplexMatrix) -> f64 {
        self.elements.iter().map(|a| commutator_with_lift(u, a).norm()).fold(0.0, f64::max)
    }
}

fn lift_front(a: &DMatrix<C64>, back: usize) -> DMatrix<C64> {
    a.kronecker(&DMatrix::identity(back, back))
}

fn commutator_with_lift(u: &ComplexMatrix, a: &DMatrix<C64>) -> DMatrix<C64> {
    let l = lift_front(a, u.dim() / a.nrows());
    u.as_dmatrix() * &l - &l * u.as_dmatrix()
}

/// Nullspace of `A ↦ U(A⊗I) − (A⊗I)U` by singular-value thresholding.
pub fn product_commutant(u: &ComplexMatrix, front_bits: usize) -> Result<CommutantBasis> {
    let dim = u.dim();
    if front_bits > u.qubits() {
        return Err(Error::Dimension(format!("front register of {front_bits} qubits exceeds {}", u.qubits())));
    }
    let d = 1usize << front_bits;
    let back = dim / d;
    if dim * dim * d * d > COMMUTANT_ENTRY_CAP {
        return Err(Error::SizeCap { dim: dim * d, cap: (COMMUTANT_ENTRY_CAP as f64).sqrt() as usize });
    }
    let um = u.as_dmatrix();
    let mut l = DMatrix::<C64>::zeros(dim * dim, d * d);
    for a in 0..d {
        for b in 0..d {
            // X = U(E_ab⊗I) − (E_ab⊗I)U, stored column-major in column a·d + b.
            let mut x = DMatrix::<C64>::zeros(dim, dim);
            for i in 0..back {
                let (src, dst) = (a * back + i, b * back + i);
                for r in 0..dim {
                    x[(r, dst)] += um[(r, src)];
                    x[(src, r)] -= um[(dst, r)];
                }
            }
            l.column_mut(a * d + b).copy_from_slice(x.as_slice());
        }
    }
    let svd = SVD::new(l, false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let elements = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= COMMUTANT_TOL)
        .map(|(k, _)| DMatrix::from_fn(d, d, |a, b| v_t[(k, a * d + b)].conj()))
        .collect();
    Ok(CommutantBasis { front_dim: d, elements })
}

/// Outcome of the search for a nondegenerate Hermitian commutant element.
enum Split {
    /// Columns are the witness basis `{|α_x⟩}`.
    Found(DMatrix<C64>),
    /// The commutant is smaller than `2^n`, so no witness exists.
    TooSmall,
    /// No nondegenerate element turned up.
    Degenerate,
}

fn find_split(q: &ComplexMatrix, n: usize, seed: u64) -> Result<(Split, usize)> {
    let comm = product_commutant(q, n)?;
    let d = comm.front_dim;
    if comm.dim() < d {
        return Ok((Split::TooSmall, comm.dim()));
    }
    let half = C64::new(0.5, 0.0);
    let herm: Vec<DMatrix<C64>> = comm
        .elements
        .iter()
        .flat_map(|a| {
            let adj = a.adjoint();
            [(a + &adj) * half, (a - &adj) * C64::new(0.0, -0.5)]
        })
        .filter(|h| h.norm() > 1e-12)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SEARCH_ATTEMPTS {
        let mut h = DMatrix::<C64>::zeros(d, d);
        for e in &herm {
            h += e * C64::new(gaussian(&mut rng), 0.0);
        }
        let norm = h.norm();
        if norm == 0.0 {
            continue;
        }
        h /= C64::new(norm, 0.0);
        let (values, vectors) = hermitian_eig(&h);
        if values.windows(2).all(|w| w[1] - w[0] > DISTINCT_TOL) {
            return Ok((Split::Found(vectors), comm.dim()));
        }
    }
    Ok((Split::Degenerate, comm.dim()))
}

/// `(V^†⊗I) Q (V⊗I)` and the largest entry outside its diagonal blocks.
fn block_form(q: &ComplexMatrix, basis: &DMatrix<C64>) -> (DMatrix<C64>, f64) {
    let back = q.dim() / basis.nrows();
    let v = lift_front(basis, back);
    let t = v.adjoint() * q.as_dmatrix() * v;
    let mut worst = 0.0f64;
    for r in 0..t.nrows() {
        for c in 0..t.ncols() {
            if r / back != c / back {
                worst = worst.max(t[(r, c)].norm());
            }
        }
    }
    (t, worst)
}

/// Phase multiset of one eigen-block, labelled by its natural front index.
#[derive(Clone, Debug)]
struct Block {
    x: usize,
    phases: Vec<f64>,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Blocks from the closed-form eigensystem where one exists, otherwise from
/// the nonentangled witness.
fn natural_blocks(oracle: &Oracle, f: &FunctionTable, q: &ComplexMatrix, witness: Option<&DMatrix<C64>>) -> Result<Option<Vec<Block>>> {
    let n = f.n();
    let d = 1usize << n;
    let back = q.dim() / d;
    if let Some(sys) = oracle.analytic_eigensystem(f)? {
        let labels = sys.labels.as_ref().expect("analytic systems are labelled");
        if matches!(oracle, Oracle::Minimal) && f.is_permutation() {
            // Eigenvector (ℓ, s) is renumbered as x = f^s(x_ℓ).
            let orbits = f.orbits()?;
            return Ok(Some(
                labels
                    .iter()
                    .zip(&sys.phases)
                    .map(|(l, &p)| Block { x: orbits.orbits[l.x].members[l.i], phases: vec![p] })
                    .collect(),
            ));
        }
        let mut blocks: Vec<Block> = (0..d).map(|x| Block { x, phases: Vec::with_capacity(back) }).collect();
        for (l, &p) in labels.iter().zip(&sys.phases) {
            blocks[l.x].phases.push(p);
        }
        return Ok(Some(blocks.into_iter().map(|b| Block { x: b.x, phases: sorted(b.phases) }).collect()));
    }
    let Some(basis) = witness else { return Ok(None) };
    let (t, _) = block_form(q, basis);
    Ok(Some(
        (0..d)
            .map(|x| {
                let sub = t.view((x * back, x * back), (back, back)).into_owned();
                Block { x, phases: eig_normal(&sub).0 }
            })
            .collect(),
    ))
}

fn multiset_eq(a: &[f64], b: &[f64], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    a.iter().all(|&p| match (0..b.len()).find(|&j| !used[j] && phase_distance(p, b[j]) <= tol) {
        Some(j) => {
            used[j] = true;
            true
        }
        None => false,
    })
}

/// Per-function data gathered in parallel.
struct Analysis {
    split: Split,
    commutant_dim: usize,
    blocks: Option<Vec<Block>>,
}

/// Witness basis `{|α_x⟩}` for one function.
#[derive(Clone, Debug, Serialize)]
pub struct FunctionWitness {
    pub f: FunctionTable,
    pub basis: Vec<ComplexVector>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NonentangledVerdict {
    pub holds: bool,
    /// Set when the commutant is large enough but no nondegenerate element was found.
    pub inconclusive: bool,
    pub min_commutant_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failing_function: Option<FunctionTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witnesses: Option<Vec<FunctionWitness>>,
}

/// `g_{x,i}(v)` for every output value `v`; `None` where no enumerated `f` has `f(x) = v`.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseTable {
    pub x: usize,
    pub i: usize,
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Renumbering {
    /// The oracle's own eigenvector labels already work.
    Natural,
    /// A search over per-function renumberings found one.
    Searched,
    /// No renumbering exists (or none was attempted).
    None,
}

#[derive(Clone, Debug, Serialize)]
pub struct BasicVerdict {
    pub holds: bool,
    /// Set when the renumbering search ran out of budget or nonentangled was inconclusive.
    pub inconclusive: bool,
    pub renumbering: Renumbering,
    pub tables: Vec<PhaseTable>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimpleVerdict {
    /// `basic ∧ common_basis`.
    pub holds: bool,
    /// A single orthonormal basis diagonalizes every `Q_f`.
    pub common_basis: bool,
    /// Two functions whose queries do not commute.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<(FunctionTable, FunctionTable)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<ComplexVector>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub oracle: String,
    pub n: usize,
    pub m: usize,
    #[serde(flatten)]
    pub domain: Domain,
    /// True when a known base change was undone before classifying.
    pub base_change_removed: bool,
    pub enumerated_function_count: usize,
    pub nonentangled: NonentangledVerdict,
    pub basic: BasicVerdict,
    pub simple: SimpleVerdict,
}

impl ClassificationReport {
    /// Checks `simple ⇒ basic ⇒ nonentangled`.
    pub fn check_hierarchy(&self) -> Result<()> {
        if self.simple.holds && !self.basic.holds {
            return Err(Error::Numerical("report claims simple without basic".into()));
        }
        if self.basic.holds && !self.nonentangled.holds {
            return Err(Error::Numerical("report claims basic without nonentangled".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ClassifyOptions {
    /// Include witness bases in the report.
    pub witness: bool,
}

/// Runs all three detectors over `domain`.
pub fn classify(oracle: &Oracle, n: usize, m: usize, domain: &Domain, opts: ClassifyOptions) -> Result<ClassificationReport> {
    let (oracle, base_change_removed) = match oracle {
        Oracle::Conjugated { inner, .. } => (strip_conjugation(inner), true),
        other => (other, false),
    };
    if matches!(oracle, Oracle::Minimal) && n != m {
        return Err(Error::InvalidInput(format!("the minimal oracle needs n = m, got ({n}, {m})")));
    }
    let family = function_family(n, m, domain)?;
    if family.is_empty() {
        return Err(Error::InvalidInput("the function family is empty".into()));
    }

    let analyses: Vec<Analysis> = family
        .par_iter()
        .enumerate()
        .map(|(idx, f)| analyze(oracle, f, idx))
        .collect::<Result<_>>()?;

    let nonentangled = nonentangled_verdict(&family, &analyses, opts);
    let basic = if nonentangled.holds {
        basic_verdict(&family, &analyses, m)
    } else {
        BasicVerdict {
            holds: false,
            inconclusive: nonentangled.inconclusive,
            renumbering: Renumbering::None,
            tables: Vec::new(),
        }
    };
    let (common, counterexample, basis) = common_eigenbasis(oracle, &family)?;
    let simple = SimpleVerdict {
        holds: basic.holds && common,
        common_basis: common,
        counterexample,
        basis: if opts.witness { basis } else { None },
    };
    let report = ClassificationReport {
        oracle: oracle.id(),
        n,
        m,
        domain: domain.clone(),
        base_change_removed,
        enumerated_function_count: family.len(),
        nonentangled,
        basic,
        simple,
    };
    report.check_hierarchy()?;
    Ok(report)
}

fn strip_conjugation(o: &Oracle) -> &Oracle {
    match o {
        Oracle::Conjugated { inner, .. } => strip_conjugation(inner),
        other => other,
    }
}

pub fn detect_nonentangled(oracle: &Oracle, n: usize, m: usize, domain: &Domain) -> Result<NonentangledVerdict> {
    Ok(classify(oracle, n, m, domain, ClassifyOptions::default())?.nonentangled)
}

pub fn detect_basic(oracle: &Oracle, n: usize, m: usize, domain: &Domain) -> Result<BasicVerdict> {
    Ok(classify(oracle, n, m, domain, ClassifyOptions::default())?.basic)
}

pub fn detect_simple(oracle: &Oracle, n: usize, m: usize, domain: &Domain) -> Result<SimpleVerdict> {
    Ok(classify(oracle, n, m, domain, ClassifyOptions::default())?.simple)
}

fn analyze(oracle: &Oracle, f: &FunctionTable, idx: usize) -> Result<Analysis> {
    let q = oracle.query(f)?;
    let n = f.n();
    if q.qubits() < n {
        return Err(Error::Dimension(format!("query on {} qubits has no {n}-qubit front register", q.qubits())));
    }
    let (split, commutant_dim) = find_split(&q, n, 0x5eed_0000 ^ idx as u64)?;
    if let Split::Found(basis) = &split {
        let ortho = (basis.adjoint() * basis - DMatrix::identity(basis.nrows(), basis.nrows())).camax();
        let (_, leak) = block_form(&q, basis);
        if ortho > CLASSIFY_TOL || leak > CLASSIFY_TOL {
            return Err(Error::Numerical(format!(
                "witness basis check failed (orthonormality {ortho:e}, stability {leak:e})"
            )));
        }
    }
    let witness = match &split {
        Split::Found(b) => Some(b),
        _ => None,
    };
    let blocks = natural_blocks(oracle, f, &q, witness)?;
    Ok(Analysis { split, commutant_dim, blocks })
}

fn nonentangled_verdict(family: &[FunctionTable], analyses: &[Analysis], opts: ClassifyOptions) -> NonentangledVerdict {
    let min_commutant_dim = analyses.iter().map(|a| a.commutant_dim).min().unwrap_or(0);
    let too_small = analyses.iter().position(|a| matches!(a.split, Split::TooSmall));
    let degenerate = analyses.iter().position(|a| matches!(a.split, Split::Degenerate));
    let failing = too_small.or(degenerate);
    let witnesses = (opts.witness && failing.is_none()).then(|| {
        family
            .iter()
            .zip(analyses)
            .filter_map(|(f, a)| match &a.split {
                Split::Found(b) => Some(FunctionWitness {
                    f: f.clone(),
                    basis: b.column_iter().map(|c| ComplexVector::from_dvector(c.into_owned())).collect(),
                }),
                _ => None,
            })
            .collect()
    });
    NonentangledVerdict {
        holds: failing.is_none(),
        inconclusive: too_small.is_none() && degenerate.is_some(),
        min_commutant_dim,
        failing_function: failing.map(|i| family[i].clone()),
        witnesses,
    }
}

/// Multisets seen so far, identified up to [`CLASSIFY_TOL`].
#[derive(Default)]
struct ClassBook {
    reps: Vec<Vec<f64>>,
}

impl ClassBook {
    fn id(&mut self, phases: &[f64]) -> usize {
        if let Some(k) = self.reps.iter().position(|r| multiset_eq(r, phases, CLASSIFY_TOL)) {
            return k;
        }
        self.reps.push(phases.to_vec());
        self.reps.len() - 1
    }
}

fn basic_verdict(family: &[FunctionTable], analyses: &[Analysis], m: usize) -> BasicVerdict {
    let d = family[0].domain_size();
    let values = 1usize << m;
    let mut book = ClassBook::default();
    let Some(blocks) = analyses.iter().map(|a| a.blocks.as_ref()).collect::<Option<Vec<_>>>() else {
        return BasicVerdict { holds: false, inconclusive: true, renumbering: Renumbering::None, tables: Vec::new() };
    };
    // classes[f][x] = class of the block the oracle itself labels x.
    let classes: Vec<Vec<usize>> = blocks
        .iter()
        .map(|bs| {
            let mut row = vec![usize::MAX; d];
            for b in bs.iter() {
                row[b.x] = book.id(&b.phases);
            }
            row
        })
        .collect();

    let mut g = vec![vec![None; values]; d];
    let natural = family.iter().zip(&classes).all(|(f, row)| {
        (0..d).all(|x| {
            let slot = &mut g[x][f.eval(x) as usize];
            *slot.get_or_insert(row[x]) == row[x]
        })
    });
    if natural {
        return BasicVerdict { holds: true, inconclusive: false, renumbering: Renumbering::Natural, tables: tables(&g, &book) };
    }

    let mut csp = Csp::new(family, &classes, book.reps.len());
    match csp.solve() {
        Some(true) => BasicVerdict {
            holds: true,
            inconclusive: false,
            renumbering: Renumbering::Searched,
            tables: tables(&csp.g, &book),
        },
        Some(false) => BasicVerdict { holds: false, inconclusive: false, renumbering: Renumbering::None, tables: Vec::new() },
        None => BasicVerdict { holds: false, inconclusive: true, renumbering: Renumbering::None, tables: Vec::new() },
    }
}

fn tables(g: &[Vec<Option<usize>>], book: &ClassBook) -> Vec<PhaseTable> {
    let width = book.reps.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for (x, row) in g.iter().enumerate() {
        for i in 0..width {
            let values = row
                .iter()
                .map(|c| c.map(|c| sorted(book.reps[c].clone())[i]))
                .collect();
            out.push(PhaseTable { x, i, values });
        }
    }
    out
}

/// Searches per-function bijections between blocks and front labels so that
/// the block attached to `x` depends only on `f(x)`.
struct Csp<'a> {
    family: &'a [FunctionTable],
    counts: Vec<Vec<usize>>,
    allowed: Vec<Vec<Vec<usize>>>,
    g: Vec<Vec<Option<usize>>>,
    nodes: usize,
}

impl<'a> Csp<'a> {
    fn new(family: &'a [FunctionTable], classes: &[Vec<usize>], n_classes: usize) -> Self {
        let d = family[0].domain_size();
        let values = family[0].codomain_size() as usize;
        let counts: Vec<Vec<usize>> = classes
            .iter()
            .map(|row| {
                let mut c = vec![0; n_classes];
                for &k in row {
                    c[k] += 1;
                }
                c
            })
            .collect();
        // g_x(v) must be a class present at every f with f(x) = v.
        let mut allowed: Vec<Vec<Option<Vec<bool>>>> = vec![vec![None; values]; d];
        for (f, c) in family.iter().zip(&counts) {
            for (x, slot) in allowed.iter_mut().enumerate() {
                let present: Vec<bool> = c.iter().map(|&k| k > 0).collect();
                let cell = &mut slot[f.eval(x) as usize];
                match cell {
                    None => *cell = Some(present),
                    Some(prev) => prev.iter_mut().zip(present).for_each(|(a, b)| *a &= b),
                }
            }
        }
        let allowed = allowed
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|cell| cell.map_or_else(Vec::new, |p| (0..n_classes).filter(|&k| p[k]).collect()))
                    .collect()
            })
            .collect();
        Self { family, counts, allowed, g: vec![vec![None; values]; d], nodes: 0 }
    }

    /// `Some(true)` on success, `Some(false)` when no renumbering exists,
    /// `None` when the node budget ran out.
    fn solve(&mut self) -> Option<bool> {
        let start = self.counts[0].clone();
        self.step(0, 0, start)
    }

    fn step(&mut self, mut fi: usize, mut x: usize, mut left: Vec<usize>) -> Option<bool> {
        let d = self.g.len();
        loop {
            if x == d {
                fi += 1;
                x = 0;
                if fi == self.family.len() {
                    return Some(true);
                }
                left = self.counts[fi].clone();
            }
            self.nodes += 1;
            if self.nodes > CSP_NODE_BUDGET {
                return None;
            }
            let v = self.family[fi].eval(x) as usize;
            match self.g[x][v] {
                Some(c) if left[c] > 0 => {
                    left[c] -= 1;
                    x += 1;
                }
                Some(_) => return Some(false),
                None => {
                    let options: Vec<usize> = self.allowed[x][v].iter().copied().filter(|&c| left[c] > 0).collect();
                    for c in options {
                        self.g[x][v] = Some(c);
                        let mut next = left.clone();
                        next[c] -= 1;
                        match self.step(fi, x + 1, next) {
                            Some(false) => {}
                            other => {
                                if other.is_none() {
                                    self.g[x][v] = None;
                                }
                                return other;
                            }
                        }
                    }
                    self.g[x][v] = None;
                    return Some(false);
                }
            }
        }
    }
}

type CommonBasis = (bool, Option<(FunctionTable, FunctionTable)>, Option<Vec<ComplexVector>>);

/// Refines the eigenspaces of the first query by every later one.
fn common_eigenbasis(oracle: &Oracle, family: &[FunctionTable]) -> Result<CommonBasis> {
    let reference = oracle.eigensystem(&family[0])?;
    let dim = reference.dim;
    let mut spaces: Vec<DMatrix<C64>> = reference
        .clusters(CLUSTER_TOL)
        .into_iter()
        .map(|cl| DMatrix::from_fn(dim, cl.len(), |r, c| reference.vectors[cl[c]].entries()[r]))
        .collect();
    for (j, f) in family.iter().enumerate().skip(1) {
        let q = oracle.query(f)?;
        let mut next = Vec::with_capacity(spaces.len());
        for s in &spaces {
            let qs = q.as_dmatrix() * s;
            let c = s.adjoint() * &qs;
            if (&qs - s * &c).norm() > CLASSIFY_TOL {
                let other = find_noncommuting(oracle, &family[..j], &q)?;
                return Ok((false, other.map(|i| (family[i].clone(), f.clone())), None));
            }
            if s.ncols() == 1 {
                next.push(s.clone());
                continue;
            }
            let (phases, vecs) = eig_normal(&c);
            for cl in cluster_phases(&phases, CLUSTER_TOL) {
                let cols: Vec<_> = cl.iter().map(|&k| s * &vecs[k]).collect();
                let cols = gram_schmidt(&cols);
                next.push(DMatrix::from_columns(&cols));
            }
        }
        spaces = next;
    }
    let basis = DMatrix::from_columns(&spaces.iter().flat_map(|s| s.column_iter().map(|c| c.into_owned())).collect::<Vec<_>>());
    for f in family {
        let t = basis.adjoint() * oracle.query(f)?.as_dmatrix() * &basis;
        let off = (0..dim)
            .flat_map(|r| (0..dim).map(move |c| (r, c)))
            .filter(|(r, c)| r != c)
            .fold(0.0f64, |a, (r, c)| a.max(t[(r, c)].norm()));
        if off > CLASSIFY_TOL {
            return Err(Error::Numerical(format!("refined common basis leaves off-diagonal mass {off:e}")));
        }
    }
    let vectors = basis.column_iter().map(|c| ComplexVector::from_dvector(c.into_owned())).collect();
    Ok((true, None, Some(vectors)))
}

fn find_noncommuting(oracle: &Oracle, earlier: &[FunctionTable], q: &ComplexMatrix) -> Result<Option<usize>> {
    for (i, g) in earlier.iter().enumerate() {
        let p = oracle.query(g)?;
        let comm = q.as_dmatrix() * p.as_dmatrix() - p.as_dmatrix() * q.as_dmatrix();
        if comm.iter().any(|z| (*z - ZERO).norm() > CLASSIFY_TOL) {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{GPreset, GlpSpec};

    fn swap() -> ComplexMatrix {
        ComplexMatrix::permutation(&[0, 2, 1, 3]).unwrap()
    }

    #[test]
    fn enumeration_sizes_and_order() {
        assert_eq!(enumerate_functions(1, 1).unwrap().len(), 4);
        let all = enumerate_functions(2, 1).unwrap();
        assert_eq!(all.len(), 16);
        assert!(all[0].values().iter().all(|&v| v == 0));
        assert_eq!(all[1].values(), &[0, 0, 0, 1]);
        assert!(enumerate_functions(3, 3).is_err());
        assert!(all.windows(2).all(|w| w[0].values() < w[1].values()));
    }

    #[test]
    fn permutation_enumeration() {
        let p = enumerate_permutations(2).unwrap();
        assert_eq!(p.len(), 24);
        assert_eq!(p[0].values(), &[0, 1, 2, 3]);
        assert_eq!(p[23].values(), &[3, 2, 1, 0]);
        assert_eq!(enumerate_permutations(3).unwrap().len(), 40320);
        let bounded = function_family(3, 3, &Domain::BoundedOrbits { p_bound: 2 }).unwrap();
        assert!(bounded.iter().all(|f| f.orbits().unwrap().max_length() <= 2));
        // Involutions of an 8-element set.
        assert_eq!(bounded.len(), 764);
    }

    #[test]
    fn commutant_examples() {
        let c = product_commutant(&ComplexMatrix::identity(4), 1).unwrap();
        assert_eq!(c.dim(), 4);
        let q = crate::oracle::build_standard(&FunctionTable::new(1, 1, vec![1, 0]).unwrap()).unwrap();
        let c = product_commutant(&q, 1).unwrap();
        assert!(c.dim() >= 2);
        assert!(c.max_residual(&q) <= 1e-8);
        // diag(a, b)⊗I commutes with the standard query directly.
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(2.0, 0.0), C64::new(-1.0, 0.5)]));
        assert!(commutator_with_lift(&q, &a).norm() < 1e-14);
        let s = product_commutant(&swap(), 1).unwrap();
        assert_eq!(s.dim(), 1);
        let e = &s.elements[0];
        assert!((e[(0, 1)]).norm() < 1e-12 && (e[(0, 0)] - e[(1, 1)]).norm() < 1e-12);
    }

    #[test]
    fn standard_and_complex_phase_are_simple() {
        for (n, m) in [(1, 1), (2, 1), (1, 2)] {
            for oracle in [Oracle::Standard, Oracle::ComplexPhase { d: 1 }] {
                let r = classify(&oracle, n, m, &Domain::All, ClassifyOptions::default()).unwrap();
                assert!(r.nonentangled.holds && r.basic.holds && r.simple.holds, "{} at ({n},{m})", oracle.id());
                assert_eq!(r.basic.renumbering, Renumbering::Natural);
            }
        }
    }

    #[test]
    fn standard_phase_tables() {
        let r = classify(&Oracle::Standard, 1, 1, &Domain::All, ClassifyOptions::default()).unwrap();
        // Block x holds phases {0, π·v}: sorted, i = 1 carries 2π·1·v/2.
        let t = r.basic.tables.iter().find(|t| t.x == 0 && t.i == 1).unwrap();
        assert_eq!(t.values[0], Some(0.0));
        assert!((t.values[1].unwrap() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn minimal_on_permutations() {
        let r = classify(&Oracle::Minimal, 2, 2, &Domain::Permutations, ClassifyOptions { witness: true }).unwrap();
        assert!(r.nonentangled.holds);
        assert!(!r.basic.holds && !r.basic.inconclusive);
        assert!(!r.simple.holds && !r.simple.common_basis);
        let (a, b) = r.simple.counterexample.clone().unwrap();
        let qa = Oracle::Minimal.query(&a).unwrap();
        let qb = Oracle::Minimal.query(&b).unwrap();
        assert!((&(&qa * &qb) - &(&qb * &qa)).max_abs() > 0.5);
        for w in r.nonentangled.witnesses.as_ref().unwrap() {
            assert_eq!(w.basis.len(), 4);
        }
    }

    #[test]
    fn swap_family_is_entangled() {
        let r = classify(&Oracle::Fixed { matrix: swap() }, 1, 1, &Domain::All, ClassifyOptions::default()).unwrap();
        assert!(!r.nonentangled.holds && !r.nonentangled.inconclusive);
        assert!(!r.basic.holds && !r.simple.holds);
        assert!(r.simple.common_basis);
    }

    #[test]
    fn glp_is_simple_on_small_instances() {
        let spec = GlpSpec::banded(1, GPreset::Sine, 1, 0.8).unwrap();
        let r = classify(&Oracle::GenericLocalPhase { spec }, 1, 2, &Domain::All, ClassifyOptions::default()).unwrap();
        // Each phase mixes f(0) and f(1), so it is not a function of f(x) alone.
        assert!(r.nonentangled.holds && !r.basic.holds && r.simple.common_basis);
        let diag = GlpSpec::diagonal(1, GPreset::Linear, 1.0).unwrap();
        let r = classify(&Oracle::GenericLocalPhase { spec: diag }, 1, 2, &Domain::All, ClassifyOptions::default()).unwrap();
        assert!(r.simple.holds);
    }

    #[test]
    fn conjugation_keeps_verdicts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let basis = crate::linalg::haar_unitary(4, &mut rng);
        let o = Oracle::Conjugated { inner: Box::new(Oracle::Standard), basis };
        let r = classify(&o, 1, 1, &Domain::All, ClassifyOptions::default()).unwrap();
        assert!(r.base_change_removed && r.simple.holds);
    }

    #[test]
    fn identity_commutant_splits_randomly() {
        let (split, dim) = find_split(&ComplexMatrix::identity(8), 2, 1).unwrap();
        assert_eq!(dim, 16);
        assert!(matches!(split, Split::Found(_)));
    }
}
