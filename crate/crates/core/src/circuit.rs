//! Query circuits, their simulation, and the constructive simulations between
//! oracle families.
//!
//! Qubit 0 is the most significant bit of a basis index. Queries always act
//! on the leading qubits; other placements are reached with [`Gate::Wires`].
//! The last `workspace_bits` qubits are ancillas that start in `|0⟩` and must
//! be returned there, so approximation errors are measured on the subspace
//! where they are zero.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, haar_unitary, hermitian_eig, op_norm_rect, ComplexMatrix, C64, ONE, ZERO};
use crate::oracle::{FunctionTable, Oracle};

/// Largest system for dense simulation.
pub const DENSE_MAX_BITS: usize = 10;
/// Largest system for sparse simulation.
pub const SPARSE_MAX_BITS: usize = 60;
/// Amplitudes below this modulus are dropped during sparse simulation.
const SPARSE_PRUNE: f64 = 1e-15;
/// Error at or below which a simulation is reported exact.
pub const EXACT_TOL: f64 = 1e-8;

/// Reversible classical maps applied to a block of qubits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ClassicalRule {
    /// `|a⟩|y⟩ ↦ |a⟩|y ± a mod 2^n⟩` on two `n`-qubit registers.
    AddRegister {
        n: usize,
        #[serde(default)]
        subtract: bool,
    },
    /// Reads `|x_0⟩|x_1⟩…|x_p⟩` (with `x_k = f^k(x_0)`) and adds the orbit
    /// length `r` and the offset `s` of `x_0` from the orbit minimum into two
    /// trailing registers. Lists without a return to `x_0` are left alone.
    OrbitData {
        n: usize,
        p_bound: usize,
        r_bits: usize,
        s_bits: usize,
        #[serde(default)]
        inverse: bool,
    },
}

impl ClassicalRule {
    pub fn qubits(&self) -> usize {
        match *self {
            ClassicalRule::AddRegister { n, .. } => 2 * n,
            ClassicalRule::OrbitData { n, p_bound, r_bits, s_bits, .. } => n * (p_bound + 1) + r_bits + s_bits,
        }
    }

    pub fn inverse(&self) -> Self {
        match self.clone() {
            ClassicalRule::AddRegister { n, subtract } => ClassicalRule::AddRegister { n, subtract: !subtract },
            ClassicalRule::OrbitData { n, p_bound, r_bits, s_bits, inverse } => {
                ClassicalRule::OrbitData { n, p_bound, r_bits, s_bits, inverse: !inverse }
            }
        }
    }

    /// Image of a basis index of the block.
    pub fn apply(&self, b: u64) -> u64 {
        match *self {
            ClassicalRule::AddRegister { n, subtract } => {
                let mask = (1u64 << n) - 1;
                let (a, y) = (b >> n, b & mask);
                let y = if subtract { y.wrapping_sub(a) } else { y.wrapping_add(a) } & mask;
                (a << n) | y
            }
            ClassicalRule::OrbitData { n, p_bound, r_bits, s_bits, inverse } => {
                let mask = (1u64 << n) - 1;
                let tail = r_bits + s_bits;
                let list: Vec<u64> =
                    (0..=p_bound).map(|k| (b >> (tail + n * (p_bound - k))) & mask).collect();
                let Some((r, s)) = orbit_data(&list) else { return b };
                let (rm, sm) = ((1u64 << r_bits) - 1, (1u64 << s_bits) - 1);
                let (rv, sv) = ((b >> s_bits) & rm, b & sm);
                let (rv, sv) = if inverse {
                    (rv.wrapping_sub(r) & rm, sv.wrapping_sub(s) & sm)
                } else {
                    (rv.wrapping_add(r) & rm, sv.wrapping_add(s) & sm)
                };
                (b >> tail << tail) | (rv << s_bits) | sv
            }
        }
    }
}

/// `(r, s)` from `[x, f(x), …, f^p(x)]`: `r` is the first return time and
/// `x = f^s(min orbit)`.
fn orbit_data(list: &[u64]) -> Option<(u64, u64)> {
    let r = (1..list.len()).find(|&k| list[k] == list[0])?;
    let j = (0..r).min_by_key(|&k| list[k]).expect("orbit is nonempty");
    Some((r as u64, ((r - j) % r) as u64))
}

/// One step of a circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gate {
    /// `Q_f^{power}` on the leading qubits.
    Query { power: i32 },
    /// Dense unitary on qubits `offset..offset + log2(dim)`.
    Constant {
        #[serde(default)]
        offset: usize,
        matrix: ComplexMatrix,
    },
    /// Diagonal unitary keyed on the value of a register.
    Diagonal {
        #[serde(default)]
        offset: usize,
        entries: Vec<C64>,
    },
    /// Basis permutation `|j⟩ ↦ |table[j]⟩` of a register.
    Permutation {
        #[serde(default)]
        offset: usize,
        table: Vec<usize>,
    },
    Classical {
        #[serde(default)]
        offset: usize,
        rule: ClassicalRule,
    },
    /// Moves qubit `q` to position `perm[q]`.
    Wires { perm: Vec<usize> },
}

/// Borrowed view of the operator a gate applies.
#[derive(Clone, Copy)]
enum Op<'a> {
    Dense(&'a ComplexMatrix),
    Diagonal(&'a [C64]),
    Permutation(&'a [usize]),
    Classical(&'a ClassicalRule),
}

/// Owned operator used for instantiated queries.
#[derive(Clone, Debug)]
enum OwnedOp {
    Dense(ComplexMatrix),
    Diagonal(Vec<C64>),
    Permutation(Vec<usize>),
}

impl OwnedOp {
    fn as_op(&self) -> Op<'_> {
        match self {
            OwnedOp::Dense(m) => Op::Dense(m),
            OwnedOp::Diagonal(d) => Op::Diagonal(d),
            OwnedOp::Permutation(p) => Op::Permutation(p),
        }
    }

    fn qubits(&self) -> usize {
        self.as_op().qubits()
    }
}

impl Op<'_> {
    fn qubits(&self) -> usize {
        match self {
            Op::Dense(m) => m.qubits(),
            Op::Diagonal(d) => d.len().trailing_zeros() as usize,
            Op::Permutation(p) => p.len().trailing_zeros() as usize,
            Op::Classical(r) => r.qubits(),
        }
    }

    /// `(image, factor)` when the operator maps basis states to basis states.
    fn map_basis(&self, b: u64) -> Option<(u64, C64)> {
        match self {
            Op::Dense(_) => None,
            Op::Diagonal(d) => Some((b, d[b as usize])),
            Op::Permutation(p) => Some((p[b as usize] as u64, ONE)),
            Op::Classical(r) => Some((r.apply(b), ONE)),
        }
    }
}

impl Gate {
    pub fn is_query(&self) -> bool {
        matches!(self, Gate::Query { .. })
    }

    fn op(&self) -> Option<(usize, Op<'_>)> {
        match self {
            Gate::Constant { offset, matrix } => Some((*offset, Op::Dense(matrix))),
            Gate::Diagonal { offset, entries } => Some((*offset, Op::Diagonal(entries))),
            Gate::Permutation { offset, table } => Some((*offset, Op::Permutation(table))),
            Gate::Classical { offset, rule } => Some((*offset, Op::Classical(rule))),
            Gate::Query { .. } | Gate::Wires { .. } => None,
        }
    }

    pub fn inverse(&self) -> Gate {
        match self {
            Gate::Query { power } => Gate::Query { power: -power },
            Gate::Constant { offset, matrix } => Gate::Constant { offset: *offset, matrix: matrix.adjoint() },
            Gate::Diagonal { offset, entries } => {
                Gate::Diagonal { offset: *offset, entries: entries.iter().map(|z| z.conj()).collect() }
            }
            Gate::Permutation { offset, table } => Gate::Permutation { offset: *offset, table: invert(table) },
            Gate::Classical { offset, rule } => Gate::Classical { offset: *offset, rule: rule.inverse() },
            Gate::Wires { perm } => Gate::Wires { perm: invert(perm) },
        }
    }
}

fn invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

fn is_bijection(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&j| j < seen.len() && !std::mem::replace(&mut seen[j], true))
}

/// A query circuit `U_{N+1} Q^{p_N} … U_2 Q^{p_1} U_1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    #[serde(rename = "M")]
    pub system_bits: usize,
    /// Trailing ancilla qubits that start and end in `|0⟩`.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub workspace_bits: usize,
    pub gates: Vec<Gate>,
    /// Oracle the query gates call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Oracle>,
    /// Oracle the circuit is meant to reproduce.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Oracle>,
    /// Some constant gates stand in for query subroutines and are charged no queries.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub w_as_constant: bool,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl CircuitSpec {
    pub fn new(system_bits: usize, gates: Vec<Gate>) -> Self {
        Self { system_bits, workspace_bits: 0, gates, oracle: None, target: None, w_as_constant: false }
    }

    /// Empty circuit on `system_bits` qubits.
    pub fn identity(system_bits: usize) -> Self {
        Self::new(system_bits, Vec::new())
    }

    pub fn with_workspace(mut self, bits: usize) -> Self {
        self.workspace_bits = bits;
        self
    }

    pub fn with_slots(mut self, oracle: Option<Oracle>, target: Option<Oracle>) -> Self {
        self.oracle = oracle;
        self.target = target;
        self
    }

    pub fn query_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_query()).count()
    }

    /// Checks gate placement and unitarity.
    pub fn validate(&self) -> Result<()> {
        let m = self.system_bits;
        if m == 0 || m > SPARSE_MAX_BITS {
            return Err(Error::OutOfRange(format!("system of {m} qubits")));
        }
        if self.workspace_bits >= m {
            return Err(Error::InvalidInput(format!("workspace of {} qubits leaves no system qubits", self.workspace_bits)));
        }
        for (k, g) in self.gates.iter().enumerate() {
            match g {
                Gate::Query { power } if power.abs() != 1 => {
                    return Err(Error::InvalidInput(format!("gate {k}: query power {power}")));
                }
                Gate::Wires { perm } if perm.len() != m || !is_bijection(perm) => {
                    return Err(Error::InvalidInput(format!("gate {k}: wires must permute {m} qubits")));
                }
                _ => {}
            }
            if let Some((offset, op)) = g.op() {
                let len = match op {
                    Op::Diagonal(d) => d.len(),
                    Op::Permutation(p) => p.len(),
                    _ => 1 << op.qubits(),
                };
                if !len.is_power_of_two() || offset + op.qubits() > m {
                    return Err(Error::Dimension(format!("gate {k} does not fit in {m} qubits at offset {offset}")));
                }
                match op {
                    Op::Dense(u) if !u.is_unitary(1e-9) => {
                        return Err(Error::NotUnitary { deviation: u.unitarity_deviation() })
                    }
                    Op::Diagonal(d) if d.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) => {
                        return Err(Error::NotUnitary { deviation: d.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max) })
                    }
                    Op::Permutation(p) if !is_bijection(p) => {
                        return Err(Error::InvalidInput(format!("gate {k}: table is not a permutation")))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Gates reversed and inverted.
    pub fn inverse(&self) -> CircuitSpec {
        CircuitSpec { gates: self.gates.iter().rev().map(Gate::inverse).collect(), ..self.clone() }
    }

    /// Reads JSON, resolving `"matrix_file"` references relative to the file.
    pub fn load(path: &Path) -> Result<CircuitSpec> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn from_json(text: &str, base: &Path) -> Result<CircuitSpec> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        if let Some(gates) = value.get_mut("gates").and_then(|g| g.as_array_mut()) {
            for gate in gates {
                let Some(obj) = gate.as_object_mut() else { continue };
                if let Some(file) = obj.remove("matrix_file") {
                    let rel = file.as_str().ok_or_else(|| Error::InvalidInput("matrix_file must be a string".into()))?;
                    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(base.join(rel))?)?;
                    obj.insert("matrix".into(), m);
                }
            }
        }
        let spec: CircuitSpec = serde_json::from_value(value)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Operator of `Q_f^{power}`.
fn query_op(oracle: &Oracle, f: &FunctionTable, power: i32) -> Result<OwnedOp> {
    let op = match oracle {
        Oracle::Standard => {
            let out = f.codomain_size() as usize;
            let table: Vec<usize> = (0..f.domain_size() * out)
                .map(|idx| {
                    let (x, y) = (idx / out, idx % out);
                    let v = f.eval(x) as usize;
                    let y = if power > 0 { (y + v) % out } else { (y + out - v) % out };
                    x * out + y
                })
                .collect();
            OwnedOp::Permutation(table)
        }
        Oracle::Minimal => {
            if f.is_permutation() {
                let fwd: Vec<usize> = f.values().iter().map(|&v| v as usize).collect();
                OwnedOp::Permutation(if power > 0 { fwd } else { invert(&fwd) })
            } else {
                OwnedOp::Permutation((0..f.domain_size()).collect())
            }
        }
        Oracle::ComplexPhase { .. } | Oracle::GenericLocalPhase { .. } => {
            let q = oracle.query(f)?;
            let d = (0..q.dim()).map(|j| if power > 0 { q.get(j, j) } else { q.get(j, j).conj() }).collect();
            OwnedOp::Diagonal(d)
        }
        Oracle::Fixed { .. } | Oracle::Conjugated { .. } => {
            let q = oracle.query(f)?;
            OwnedOp::Dense(if power > 0 { q } else { q.adjoint() })
        }
    };
    Ok(op)
}

/// Both powers of the query at `f`, built once.
struct QueryPair {
    fwd: OwnedOp,
    inv: OwnedOp,
}

impl QueryPair {
    fn new(oracle: &Oracle, f: &FunctionTable) -> Result<Self> {
        Ok(Self { fwd: query_op(oracle, f, 1)?, inv: query_op(oracle, f, -1)? })
    }

    fn get(&self, power: i32) -> &OwnedOp {
        if power > 0 {
            &self.fwd
        } else {
            &self.inv
        }
    }
}

fn wire_map(perm: &[usize], idx: u64) -> u64 {
    let m = perm.len();
    let mut out = 0u64;
    for (q, &p) in perm.iter().enumerate() {
        out |= ((idx >> (m - 1 - q)) & 1) << (m - 1 - p);
    }
    out
}

/// Applies `op` on qubits `offset..` to every column of `s` (rows are basis indices).
fn apply_dense(op: Op<'_>, offset: usize, m: usize, s: &DMatrix<C64>) -> DMatrix<C64> {
    let k = op.qubits();
    let shift = m - offset - k;
    let mask = (1u64 << k) - 1;
    let dim = s.nrows();
    if let Op::Dense(u) = op {
        if k == m {
            return u.as_dmatrix() * s;
        }
        let kd = 1usize << k;
        let mut out = DMatrix::zeros(dim, s.ncols());
        let mut sub = DMatrix::zeros(kd, s.ncols());
        for base in (0..dim as u64).filter(|r| (r >> shift) & mask == 0) {
            for b in 0..kd {
                sub.row_mut(b).copy_from(&s.row((base | ((b as u64) << shift)) as usize));
            }
            let res = u.as_dmatrix() * &sub;
            for b in 0..kd {
                out.row_mut((base | ((b as u64) << shift)) as usize).copy_from(&res.row(b));
            }
        }
        return out;
    }
    let mut out = DMatrix::zeros(dim, s.ncols());
    for r in 0..dim as u64 {
        let b = (r >> shift) & mask;
        let (nb, c) = op.map_basis(b).expect("basis-preserving operator");
        let dst = (r & !(mask << shift)) | (nb << shift);
        let row = s.row(r as usize) * c;
        out.row_mut(dst as usize).copy_from(&row);
    }
    out
}

/// Sparse state: sorted `(index, amplitude)` pairs.
type Sparse = Vec<(u64, C64)>;

fn normalize(mut v: Vec<(u64, C64)>) -> Sparse {
    v.sort_by_key(|e| e.0);
    let mut out: Sparse = Vec::with_capacity(v.len());
    for (i, c) in v {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += c,
            _ => out.push((i, c)),
        }
    }
    out.retain(|e| e.1.norm() >= SPARSE_PRUNE);
    out
}

fn apply_sparse(op: Op<'_>, offset: usize, m: usize, s: &Sparse) -> Sparse {
    let k = op.qubits();
    let shift = m - offset - k;
    let mask = (1u64 << k) - 1;
    if let Op::Dense(u) = op {
        let mut groups: BTreeMap<u64, Vec<(u64, C64)>> = BTreeMap::new();
        for &(i, c) in s {
            groups.entry(i & !(mask << shift)).or_default().push(((i >> shift) & mask, c));
        }
        let um = u.as_dmatrix();
        let mut out = Vec::new();
        for (base, entries) in groups {
            for nb in 0..um.nrows() {
                let amp: C64 = entries.iter().map(|&(b, c)| um[(nb, b as usize)] * c).sum();
                if amp != ZERO {
                    out.push((base | ((nb as u64) << shift), amp));
                }
            }
        }
        return normalize(out);
    }
    normalize(
        s.iter()
            .map(|&(i, c)| {
                let (nb, f) = op.map_basis((i >> shift) & mask).expect("basis-preserving operator");
                ((i & !(mask << shift)) | (nb << shift), c * f)
            })
            .collect(),
    )
}

/// Gate-by-gate propagation over dense columns or sparse states.
trait Engine: Sized {
    fn op(&self, op: Op<'_>, offset: usize, m: usize) -> Self;
    fn wires(&self, perm: &[usize]) -> Self;
}

impl Engine for DMatrix<C64> {
    fn op(&self, op: Op<'_>, offset: usize, m: usize) -> Self {
        apply_dense(op, offset, m, self)
    }

    fn wires(&self, perm: &[usize]) -> Self {
        let mut out = DMatrix::zeros(self.nrows(), self.ncols());
        for r in 0..self.nrows() {
            out.row_mut(wire_map(perm, r as u64) as usize).copy_from(&self.row(r));
        }
        out
    }
}

impl Engine for Sparse {
    fn op(&self, op: Op<'_>, offset: usize, m: usize) -> Self {
        apply_sparse(op, offset, m, self)
    }

    fn wires(&self, perm: &[usize]) -> Self {
        normalize(self.iter().map(|&(i, c)| (wire_map(perm, i), c)).collect())
    }
}

fn run<E: Engine>(c: &CircuitSpec, queries: &QueryPair, mut state: E) -> Result<E> {
    let m = c.system_bits;
    for g in &c.gates {
        state = match g {
            Gate::Query { power } => {
                let op = queries.get(*power);
                if op.qubits() > m {
                    return Err(Error::Dimension(format!("query on {} qubits in a {m}-qubit circuit", op.qubits())));
                }
                state.op(op.as_op(), 0, m)
            }
            Gate::Wires { perm } => state.wires(perm),
            other => {
                let (offset, op) = other.op().expect("non-query gates carry an operator");
                state.op(op, offset, m)
            }
        };
    }
    Ok(state)
}

fn check_dense(c: &CircuitSpec) -> Result<()> {
    if c.system_bits > DENSE_MAX_BITS {
        return Err(Error::SizeCap { dim: 1 << c.system_bits.min(62), cap: 1 << DENSE_MAX_BITS });
    }
    Ok(())
}

/// Full unitary of the circuit with queries instantiated at `f`.
pub fn apply_circuit(c: &CircuitSpec, oracle: &Oracle, f: &FunctionTable) -> Result<ComplexMatrix> {
    c.validate()?;
    check_dense(c)?;
    let dim = 1usize << c.system_bits;
    let out = run(c, &QueryPair::new(oracle, f)?, DMatrix::<C64>::identity(dim, dim))?;
    ComplexMatrix::from_dmatrix(out)
}

/// Circuit output for one computational basis input.
pub fn apply_to_basis(c: &CircuitSpec, oracle: &Oracle, f: &FunctionTable, input: u64) -> Result<Vec<(u64, C64)>> {
    c.validate()?;
    if input >> c.system_bits != 0 {
        return Err(Error::OutOfRange(format!("input {input} on {} qubits", c.system_bits)));
    }
    run(c, &QueryPair::new(oracle, f)?, vec![(input, ONE)])
}

/// Errors of a circuit against a target oracle over a set of functions.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationReport {
    pub target: String,
    pub oracle: String,
    pub query_count: usize,
    pub w_as_constant: bool,
    pub functions: Vec<FunctionTable>,
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub exact: bool,
}

/// `‖(C_f − Q2_f ⊗ I) P_0‖` with `P_0` projecting onto zero workspace.
pub fn error_at(c: &CircuitSpec, q1: &Oracle, q2: &Oracle, f: &FunctionTable) -> Result<f64> {
    let m = c.system_bits;
    let w = c.workspace_bits;
    let columns = 1usize << (m - w);
    let circuit = QueryPair::new(q1, f)?;
    let target = query_op(q2, f, 1)?;
    if target.qubits() > m - w {
        return Err(Error::Dimension(format!(
            "target acts on {} qubits but only {} are outside the workspace",
            target.qubits(),
            m - w
        )));
    }
    if m <= DENSE_MAX_BITS {
        let dim = 1usize << m;
        let start = DMatrix::from_fn(dim, columns, |r, col| if r == col << w { ONE } else { ZERO });
        let got = run(c, &circuit, start.clone())?;
        let want = apply_dense(target.as_op(), 0, m, &start);
        return Ok(op_norm_rect(&(got - want)));
    }
    if columns > 1024 {
        return Err(Error::SizeCap { dim: columns, cap: 1024 });
    }
    let diffs: Vec<Sparse> = (0..columns as u64)
        .map(|col| {
            let start = vec![(col << w, ONE)];
            let got = run(c, &circuit, start.clone())?;
            let want = apply_sparse(target.as_op(), 0, m, &start);
            Ok(normalize(got.into_iter().chain(want.into_iter().map(|(i, z)| (i, -z))).collect()))
        })
        .collect::<Result<_>>()?;
    Ok(gram_norm(&diffs))
}

/// Largest singular value of the matrix whose columns are the sparse vectors.
fn gram_norm(cols: &[Sparse]) -> f64 {
    let k = cols.len();
    let mut g = DMatrix::<C64>::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let (mut i, mut j, mut acc) = (0, 0, ZERO);
            while i < cols[a].len() && j < cols[b].len() {
                match cols[a][i].0.cmp(&cols[b][j].0) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        acc += cols[a][i].1.conj() * cols[b][j].1;
                        i += 1;
                        j += 1;
                    }
                }
            }
            g[(a, b)] = acc;
            g[(b, a)] = acc.conj();
        }
    }
    let (values, _) = hermitian_eig(&g);
    values.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Per-function errors and their maximum, in the order of `fs`.
pub fn approx_error(c: &CircuitSpec, q1: &Oracle, q2: &Oracle, fs: &[FunctionTable]) -> Result<SimulationReport> {
    if fs.is_empty() {
        return Err(Error::InvalidInput("no functions to check".into()));
    }
    c.validate()?;
    let errors: Vec<f64> = fs.par_iter().map(|f| error_at(c, q1, q2, f)).collect::<Result<_>>()?;
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(SimulationReport {
        target: q2.id(),
        oracle: q1.id(),
        query_count: c.query_count(),
        w_as_constant: c.w_as_constant,
        functions: fs.to_vec(),
        errors,
        max_error,
        exact: max_error <= EXACT_TOL,
    })
}

/// Two minimal queries around a register adder reproduce the standard
/// oracle at every permutation: `|x⟩|y⟩ → |f(x)⟩|y⟩ → |f(x)⟩|y+f(x)⟩ → |x⟩|y+f(x)⟩`.
pub fn minimal_simulates_standard(n: usize) -> Result<CircuitSpec> {
    if n == 0 || n > 5 {
        return Err(Error::OutOfRange(format!("n = {n} not in 1..=5")));
    }
    Ok(CircuitSpec::new(
        2 * n,
        vec![
            Gate::Query { power: 1 },
            Gate::Classical { offset: 0, rule: ClassicalRule::AddRegister { n, subtract: false } },
            Gate::Query { power: -1 },
        ],
    )
    .with_slots(Some(Oracle::Minimal), Some(Oracle::Standard)))
}

/// Register layout of circuit V.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OrbitRegisters {
    pub n: usize,
    pub p_bound: usize,
    pub r_bits: usize,
    pub s_bits: usize,
}

fn bits_for(v: usize) -> usize {
    (usize::BITS - v.leading_zeros()).max(1) as usize
}

impl OrbitRegisters {
    /// Registers wide enough for `r ≤ p_bound` and `s < p_bound`.
    pub fn new(n: usize, p_bound: usize) -> Result<Self> {
        if n == 0 || p_bound == 0 {
            return Err(Error::OutOfRange("n and p_bound must be positive".into()));
        }
        let regs = Self { n, p_bound, r_bits: bits_for(p_bound), s_bits: bits_for(p_bound - 1) };
        if regs.total_bits() > SPARSE_MAX_BITS {
            return Err(Error::SizeCap { dim: regs.total_bits(), cap: SPARSE_MAX_BITS });
        }
        Ok(regs)
    }

    pub fn total_bits(&self) -> usize {
        self.n * (self.p_bound + 1) + self.r_bits + self.s_bits
    }

    /// First qubit of the `r` register.
    pub fn r_offset(&self) -> usize {
        self.n * (self.p_bound + 1)
    }

    pub fn s_offset(&self) -> usize {
        self.r_offset() + self.r_bits
    }

    /// Wires bringing iterate registers `k-1` and `k` to the front.
    fn front_pair(&self, k: usize) -> Vec<usize> {
        let n = self.n;
        let blocks = self.p_bound + 1;
        let mut order = vec![k - 1, k];
        order.extend((0..blocks).filter(|&b| b != k - 1 && b != k));
        let mut perm: Vec<usize> = (0..self.total_bits()).collect();
        for (pos, &b) in order.iter().enumerate() {
            for j in 0..n {
                perm[b * n + j] = pos * n + j;
            }
        }
        perm
    }

    /// Decodes `(x, iterates, r, s)` from a basis index.
    pub fn decode(&self, idx: u64) -> (u64, Vec<u64>, u64, u64) {
        let tail = self.r_bits + self.s_bits;
        let mask = (1u64 << self.n) - 1;
        let blocks: Vec<u64> = (0..=self.p_bound)
            .map(|k| (idx >> (tail + self.n * (self.p_bound - k))) & mask)
            .collect();
        let r = (idx >> self.s_bits) & ((1 << self.r_bits) - 1);
        let s = idx & ((1 << self.s_bits) - 1);
        (blocks[0], blocks[1..].to_vec(), r, s)
    }

    pub fn encode_input(&self, x: u64) -> u64 {
        x << (self.total_bits() - self.n)
    }
}

/// Circuit V: `|x⟩|0…0⟩ ↦ |x⟩|0…0⟩|r⟩|s⟩` with `2·p_bound` standard queries.
pub fn circuit_v(n: usize, p_bound: usize) -> Result<CircuitSpec> {
    let regs = OrbitRegisters::new(n, p_bound)?;
    let mut forward = Vec::new();
    for k in 1..=p_bound {
        let w = regs.front_pair(k);
        let inv = invert(&w);
        forward.push((w, inv));
    }
    let mut gates = Vec::new();
    for (w, inv) in &forward {
        gates.push(Gate::Wires { perm: w.clone() });
        gates.push(Gate::Query { power: 1 });
        gates.push(Gate::Wires { perm: inv.clone() });
    }
    gates.push(Gate::Classical {
        offset: 0,
        rule: ClassicalRule::OrbitData { n, p_bound, r_bits: regs.r_bits, s_bits: regs.s_bits, inverse: false },
    });
    for (w, inv) in forward.iter().rev() {
        gates.push(Gate::Wires { perm: w.clone() });
        gates.push(Gate::Query { power: -1 });
        gates.push(Gate::Wires { perm: inv.clone() });
    }
    Ok(CircuitSpec::new(regs.total_bits(), gates).with_slots(Some(Oracle::Standard), None))
}

/// Checks every orbit of `f` fits in `p_bound`.
fn check_orbits(f: &FunctionTable, p_bound: usize) -> Result<()> {
    let orbits = f.orbits()?;
    if orbits.max_length() > p_bound {
        return Err(Error::Precondition(format!(
            "f has an orbit of length {} > p_bound = {p_bound}",
            orbits.max_length()
        )));
    }
    Ok(())
}

/// `(r, s)` that circuit V writes for input `x`.
pub fn v_output(f: &FunctionTable, p_bound: usize, x: u64) -> Result<(u64, u64)> {
    check_orbits(f, p_bound)?;
    let regs = OrbitRegisters::new(f.n(), p_bound)?;
    let c = circuit_v(f.n(), p_bound)?;
    let out = apply_to_basis(&c, &Oracle::Standard, f, regs.encode_input(x))?;
    match out.as_slice() {
        [(idx, amp)] if (amp - ONE).norm() < 1e-12 => {
            let (x_out, iterates, r, s) = regs.decode(*idx);
            if x_out != x || iterates.iter().any(|&v| v != 0) {
                return Err(Error::Numerical("circuit V did not restore its iterate registers".into()));
            }
            Ok((r, s))
        }
        _ => Err(Error::Numerical("circuit V left a superposition".into())),
    }
}

/// Orbit-wise Fourier transform `|f^s(x_ℓ)⟩ ↦ |ψ_{ℓ,s}⟩`.
pub fn circuit_w(f: &FunctionTable) -> Result<ComplexMatrix> {
    let orbits = f.orbits()?;
    if f.n() > 4 {
        return Err(Error::OutOfRange(format!("n = {} exceeds 4", f.n())));
    }
    let dim = f.domain_size();
    let mut w = DMatrix::<C64>::zeros(dim, dim);
    for orbit in &orbits.orbits {
        let r = orbit.len();
        let norm = (r as f64).sqrt().recip();
        for (s, &col) in orbit.members.iter().enumerate() {
            for (k, &row) in orbit.members.iter().enumerate() {
                w[(row, col)] = cis(-TAU * ((s * k) % r) as f64 / r as f64) * norm;
            }
        }
    }
    ComplexMatrix::from_dmatrix(w)
}

/// `U`, then `e^{iθ(G)}` keyed on the register at `offset..offset+bits`,
/// then `U^{-1}`. Register values missing from `phase_table` get phase 0.
pub fn locally_basic_sandwich(u: &CircuitSpec, offset: usize, bits: usize, phase_table: &BTreeMap<u64, f64>) -> Result<CircuitSpec> {
    if offset + bits > u.system_bits {
        return Err(Error::Dimension(format!("register {offset}..{} outside {} qubits", offset + bits, u.system_bits)));
    }
    let entries = (0..1u64 << bits).map(|g| cis(phase_table.get(&g).copied().unwrap_or(0.0))).collect();
    let mut gates = u.gates.clone();
    gates.push(Gate::Diagonal { offset, entries });
    gates.extend(u.inverse().gates);
    Ok(CircuitSpec { gates, ..u.clone() })
}

/// `θ(r, s) = 2πs/r` on the `(r, s)` registers; `r = 0` maps to 0.
fn orbit_phase_table(regs: &OrbitRegisters) -> BTreeMap<u64, f64> {
    let mut table = BTreeMap::new();
    for r in 1..=regs.p_bound as u64 {
        for s in 0..r {
            table.insert((r << regs.s_bits) | s, TAU * s as f64 / r as f64);
        }
    }
    table
}

/// Simulates the minimal query at `f` with standard queries: `W^{-1}`, V,
/// `W`, a phase keyed on `(r, s)`, then the inverse of the first three.
///
/// `W` is a constant synthesized from the orbits of `f` and is charged no
/// queries (`w_as_constant`).
pub fn simulate_min_via_std(f: &FunctionTable, p_bound: usize) -> Result<(SimulationReport, CircuitSpec)> {
    if !f.is_permutation() {
        return Err(Error::NotPermutation);
    }
    check_orbits(f, p_bound)?;
    let regs = OrbitRegisters::new(f.n(), p_bound)?;
    let w = circuit_w(f)?;
    let v = circuit_v(f.n(), p_bound)?;
    let mut gates = vec![Gate::Constant { offset: 0, matrix: w.adjoint() }];
    gates.extend(v.gates);
    gates.push(Gate::Constant { offset: 0, matrix: w });
    let u = CircuitSpec::new(regs.total_bits(), gates);
    let mut c = locally_basic_sandwich(&u, regs.r_offset(), regs.r_bits + regs.s_bits, &orbit_phase_table(&regs))?;
    c.workspace_bits = regs.total_bits() - f.n();
    c.oracle = Some(Oracle::Standard);
    c.target = Some(Oracle::Minimal);
    c.w_as_constant = true;
    let report = approx_error(&c, &Oracle::Standard, &Oracle::Minimal, std::slice::from_ref(f))?;
    Ok((report, c))
}

/// Replaces every query of `outer` by `inner` (or its inverse). Workspace
/// qubits of `inner` are appended after those of `outer`.
pub fn compose_simulations(outer: &CircuitSpec, inner: &CircuitSpec) -> Result<CircuitSpec> {
    if let (Some(t), Some(o)) = (&inner.target, &outer.oracle) {
        if t != o {
            return Err(Error::InvalidInput(format!("inner circuit simulates {} but outer queries {}", t.id(), o.id())));
        }
    }
    if outer.query_count() == 0 {
        return Ok(CircuitSpec { oracle: inner.oracle.clone(), ..outer.clone() });
    }
    let inner_sys = inner.system_bits - inner.workspace_bits;
    if inner_sys > outer.system_bits {
        return Err(Error::Dimension(format!(
            "inner circuit needs {inner_sys} system qubits, outer has {}",
            outer.system_bits
        )));
    }
    let m = outer.system_bits + inner.workspace_bits;
    let extend = |perm: &[usize]| -> Vec<usize> { perm.iter().copied().chain(perm.len()..m).collect() };
    // Composite qubit q goes to `place[q]` in the layout the inner circuit expects.
    let mut place: Vec<usize> = (0..m).collect();
    for j in 0..inner.workspace_bits {
        place[outer.system_bits + j] = inner_sys + j;
    }
    for (q, slot) in place.iter_mut().enumerate().take(outer.system_bits).skip(inner_sys) {
        *slot = q + inner.workspace_bits;
    }
    let back = invert(&place);
    let inverse = inner.inverse();
    let mut gates = Vec::new();
    for g in &outer.gates {
        match g {
            Gate::Query { power } => {
                let body = if *power > 0 { &inner.gates } else { &inverse.gates };
                let needs_wires = inner.workspace_bits > 0 && outer.system_bits > inner_sys;
                if needs_wires {
                    gates.push(Gate::Wires { perm: place.clone() });
                }
                for ig in body {
                    gates.push(match ig {
                        Gate::Wires { perm } => Gate::Wires { perm: extend(perm) },
                        other => other.clone(),
                    });
                }
                if needs_wires {
                    gates.push(Gate::Wires { perm: back.clone() });
                }
            }
            Gate::Wires { perm } => gates.push(Gate::Wires { perm: extend(perm) }),
            other => gates.push(other.clone()),
        }
    }
    Ok(CircuitSpec {
        system_bits: m,
        workspace_bits: outer.workspace_bits + inner.workspace_bits,
        gates,
        oracle: inner.oracle.clone(),
        target: outer.target.clone(),
        w_as_constant: outer.w_as_constant || inner.w_as_constant,
    })
}

/// Probability that the last `out_bits` qubits read `expected` after running
/// the circuit on basis input `input`.
pub fn success_probability(c: &CircuitSpec, oracle: &Oracle, f: &FunctionTable, input: u64, expected: u64, out_bits: usize) -> Result<f64> {
    if out_bits == 0 || out_bits > c.system_bits || expected >> out_bits != 0 {
        return Err(Error::OutOfRange(format!("expected value {expected} on {out_bits} output qubits")));
    }
    let mask = (1u64 << out_bits) - 1;
    let out = apply_to_basis(c, oracle, f, input)?;
    Ok(out.iter().filter(|(i, _)| i & mask == expected).map(|(_, a)| a.norm_sqr()).sum())
}

/// Haar-random constants around `queries` queries of random sign.
pub fn random_circuit<R: Rng + ?Sized>(system_bits: usize, queries: usize, rng: &mut R) -> CircuitSpec {
    let dim = 1usize << system_bits;
    let mut gates = vec![Gate::Constant { offset: 0, matrix: haar_unitary(dim, rng) }];
    for _ in 0..queries {
        gates.push(Gate::Query { power: if rng.gen_bool(0.5) { 1 } else { -1 } });
        gates.push(Gate::Constant { offset: 0, matrix: haar_unitary(dim, rng) });
    }
    CircuitSpec::new(system_bits, gates)
}
