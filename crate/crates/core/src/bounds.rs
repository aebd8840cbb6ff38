//! Lower bounds on how well a query circuit over one oracle can reproduce
//! another: diagonal eigen-projections, the two-function bound, the
//! Bernstein ratio, and the closed forms for generic local phase oracles.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{apply_circuit, error_at, CircuitSpec};
use crate::error::{Error, Result};
use crate::linalg::{lift, ComplexMatrix, EigenSystem, Label, C64};
use crate::oracle::{FunctionTable, Oracle};
use crate::trig::TrigPoly;

/// Sample count for sup-norm checks of single-variable trig polynomials.
pub const SUP_SAMPLES: usize = 4096;
/// Slack on the unit sup-norm precondition.
const SUP_SLACK: f64 = 1e-9;

/// Two functions of the same shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionPair {
    pub f1: FunctionTable,
    pub f2: FunctionTable,
}

impl FunctionPair {
    pub fn new(f1: FunctionTable, f2: FunctionTable) -> Result<Self> {
        if (f1.n(), f1.m()) != (f2.n(), f2.m()) {
            return Err(Error::InvalidInput(format!(
                "pair shapes differ: ({}, {}) vs ({}, {})",
                f1.n(),
                f1.m(),
                f2.n(),
                f2.m()
            )));
        }
        Ok(Self { f1, f2 })
    }
}

/// `f1(0) = 2^{m-1}`, `f2(0) = 2^{m-1} + 1 mod 2^m`, both zero elsewhere.
/// At `m = 1` the second value wraps to 0.
pub fn adversary_pair(n: usize, m: usize) -> Result<FunctionPair> {
    if m == 0 {
        return Err(Error::OutOfRange("adversary pair needs m ≥ 1".into()));
    }
    let half = 1u64 << (m - 1);
    let top = 1u64 << m;
    let f1 = FunctionTable::from_fn(n, m, |x| if x == 0 { half } else { 0 })?;
    let f2 = FunctionTable::from_fn(n, m, |x| if x == 0 { (half + 1) % top } else { 0 })?;
    FunctionPair::new(f1, f2)
}

/// `|e^{iθ_{0,2^{m-1}}(f1)} - e^{iθ_{0,2^{m-1}}(f2)}|` for the standard oracle
/// on the adversary pair.
pub fn adversary_eigen_gap(n: usize, m: usize) -> Result<f64> {
    let pair = adversary_pair(n, m)?;
    let label = Label::new(0, 1 << (m - 1));
    let value = |f: &FunctionTable| -> Result<C64> {
        let eig = Oracle::Standard.eigensystem(f)?;
        let j = eig.index_of(label).ok_or_else(|| Error::Numerical("label missing from eigensystem".into()))?;
        Ok(eig.eigenvalue(j))
    };
    Ok((value(&pair.f1)? - value(&pair.f2)?).norm())
}

/// Result of a bound evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    /// Certified lower bound on the approximation error.
    pub bound: f64,
    pub witness_label: Option<Label>,
    pub witness_pair: Option<FunctionPair>,
    pub n_queries: usize,
    /// Fewest queries any circuit needs to reach the observed error, when a closed form applies.
    #[serde(rename = "analytic_N_min")]
    pub analytic_n_min: Option<u64>,
    /// Actual operator-norm errors of the circuit at each function considered.
    pub per_f_errors: Vec<f64>,
}

impl BoundReport {
    pub fn max_error(&self) -> f64 {
        self.per_f_errors.iter().copied().fold(0.0, f64::max)
    }

    /// The bound does not exceed the errors it claims to bound.
    pub fn is_sound(&self, tol: f64) -> bool {
        self.per_f_errors.is_empty() || self.bound <= self.max_error() + tol
    }
}

/// Reference eigensystem of `q2` at `f`, lifted to the circuit's size.
fn reference(c: &CircuitSpec, q2: &Oracle, f: &FunctionTable) -> Result<EigenSystem> {
    let eig = q2.eigensystem(f)?;
    let dim = 1usize << c.system_bits;
    if eig.dim > dim || dim % eig.dim != 0 {
        return Err(Error::Dimension(format!("reference of dimension {} in a {}-qubit circuit", eig.dim, c.system_bits)));
    }
    Ok(eig.lift(dim / eig.dim))
}

/// `V† U V` where the columns of `V` are the reference eigenvectors.
fn project(u: &DMatrix<C64>, eig: &EigenSystem) -> DMatrix<C64> {
    let v = eig.vector_matrix();
    v.adjoint() * u * v
}

/// Entry `(a, b)` is `⟨ψ_a|C_f|ψ_b⟩` for the instantiated circuit and the
/// reference eigenvectors, ordered as in `reference_eig`.
pub fn projection_coefficients(c: &CircuitSpec, q1: &Oracle, f: &FunctionTable, reference_eig: &EigenSystem) -> Result<ComplexMatrix> {
    let u = apply_circuit(c, q1, f)?;
    if reference_eig.dim != u.dim() {
        return Err(Error::Dimension(format!("reference has dimension {}, circuit {}", reference_eig.dim, u.dim())));
    }
    Ok(ComplexMatrix::from_dmatrix_unchecked(project(u.as_dmatrix(), reference_eig)))
}

/// Indices of reference vectors supported on zero workspace.
fn admissible(eig: &EigenSystem, c: &CircuitSpec, base_dim: usize) -> Vec<usize> {
    let factor = eig.dim / base_dim;
    let w = 1usize << c.workspace_bits;
    (0..eig.dim).filter(|j| c.workspace_bits == 0 || (j % factor) % w == 0).collect()
}

/// First index of the maximum, ignoring NaN.
fn argmax(values: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    values.fold(None, |best, (j, v)| match best {
        Some((_, b)) if b >= v => best,
        _ => Some((j, v)),
    })
}

/// `max_{x,i} |e^{iθ_{x,i}(f)} - T^{x,i}_{x,i}|` against the eigensystem of `q2` at `f`.
pub fn lemma1_bound(c: &CircuitSpec, q1: &Oracle, q2: &Oracle, f: &FunctionTable) -> Result<BoundReport> {
    let base = q2.eigensystem(f)?.dim;
    let eig = reference(c, q2, f)?;
    let t = projection_coefficients(c, q1, f, &eig)?;
    let (j, bound) = argmax(admissible(&eig, c, base).into_iter().map(|j| (j, (eig.eigenvalue(j) - t.get(j, j)).norm())))
        .ok_or_else(|| Error::Numerical("no admissible eigenvectors".into()))?;
    Ok(BoundReport {
        bound,
        witness_label: eig.labels.as_ref().map(|l| l[j]),
        witness_pair: None,
        n_queries: c.query_count(),
        analytic_n_min: None,
        per_f_errors: vec![error_at(c, q1, q2, f)?],
    })
}

/// Two-function bound: half the largest gap between how far the target's
/// diagonal entries move from `f1` to `f2` and how far the circuit's do,
/// all measured in the eigenbasis of `q2` at `f1`.
pub fn mainthm_bound(c: &CircuitSpec, q1: &Oracle, q2: &Oracle, pair: &FunctionPair) -> Result<BoundReport> {
    let base = q2.eigensystem(&pair.f1)?.dim;
    let eig = reference(c, q2, &pair.f1)?;
    let dim = eig.dim;
    let t1 = projection_coefficients(c, q1, &pair.f1, &eig)?;
    let t2 = projection_coefficients(c, q1, &pair.f2, &eig)?;
    // For oracles with an f-independent eigenbasis this diagonal is exactly e^{iθ(f2)}.
    let target2 = project(lift(&q2.query(&pair.f2)?, dim)?.as_dmatrix(), &eig);
    let (j, twice) = argmax(admissible(&eig, c, base).into_iter().map(|j| {
        let target = (eig.eigenvalue(j) - target2[(j, j)]).norm();
        let circuit = (t1.get(j, j) - t2.get(j, j)).norm();
        (j, (target - circuit).abs())
    }))
    .ok_or_else(|| Error::Numerical("no admissible eigenvectors".into()))?;
    let per_f_errors = vec![error_at(c, q1, q2, &pair.f1)?, error_at(c, q1, q2, &pair.f2)?];
    let mut report = BoundReport {
        bound: twice / 2.0,
        witness_label: eig.labels.as_ref().map(|l| l[j]),
        witness_pair: Some(pair.clone()),
        n_queries: c.query_count(),
        analytic_n_min: None,
        per_f_errors,
    };
    if let (Oracle::GenericLocalPhase { spec }, Oracle::Standard) = (q1, q2) {
        let canonical = adversary_pair(pair.f1.n(), pair.f1.m())?;
        let delta = report.max_error();
        if pair.f1.m() >= 2 && *pair == canonical && delta < 1.0 {
            report.analytic_n_min = Some(glp_lower_bound(pair.f1.m(), delta, spec.b, spec.c)?);
        }
    }
    Ok(report)
}

/// Largest [`mainthm_bound`] over `pairs`; ties keep the earliest pair.
pub fn mainthm_sweep(c: &CircuitSpec, q1: &Oracle, q2: &Oracle, pairs: &[FunctionPair]) -> Result<BoundReport> {
    let reports: Vec<BoundReport> = pairs.par_iter().map(|p| mainthm_bound(c, q1, q2, p)).collect::<Result<_>>()?;
    let (best, _) = argmax(reports.iter().map(|r| r.bound).enumerate())
        .ok_or_else(|| Error::InvalidInput("no pairs to sweep".into()))?;
    Ok(reports[best].clone())
}

fn eval1(t: &TrigPoly, theta: f64) -> C64 {
    t.evaluate(&[theta]).expect("single-variable polynomial")
}

fn single_variable(t: &TrigPoly) -> Result<()> {
    if t.var_count() != 1 {
        return Err(Error::InvalidInput(format!("expected one variable, polynomial has {}", t.var_count())));
    }
    Ok(())
}

/// Largest modulus of `t` over `SUP_SAMPLES` equally spaced points of `[-π, π)`.
pub fn sampled_sup(t: &TrigPoly) -> Result<f64> {
    single_variable(t)?;
    let h = 2.0 * PI / SUP_SAMPLES as f64;
    Ok((0..SUP_SAMPLES).map(|k| eval1(t, -PI + h * k as f64).norm()).fold(0.0, f64::max))
}

/// Upper bound on `sup |t|`: every point lies within `h/2` of a sample and
/// `|t'| ≤ deg·sup|t|`, so `sup ≤ sampled / (1 - deg·h/2)`.
pub fn sup_upper_bound(t: &TrigPoly) -> Result<f64> {
    let sampled = sampled_sup(t)?;
    let slope = t.degree() as f64 * PI / SUP_SAMPLES as f64;
    if slope >= 1.0 {
        return Err(Error::OutOfRange(format!("degree {} too high for {SUP_SAMPLES} samples", t.degree())));
    }
    Ok(sampled / (1.0 - slope))
}

/// `|t(θ1) - t(θ2)| / |θ1 - θ2|` for a single-variable `t` with `sup |t| ≤ 1`.
pub fn bernstein_ratio(t: &TrigPoly, theta1: f64, theta2: f64) -> Result<f64> {
    if theta1 == theta2 || !(theta1 - theta2).is_finite() {
        return Err(Error::InvalidInput("θ1 and θ2 must be distinct finite points".into()));
    }
    let sup = sampled_sup(t)?;
    if sup > 1.0 + SUP_SLACK {
        return Err(Error::Precondition(format!("sup |t| ≈ {sup} exceeds 1")));
    }
    Ok((eval1(t, theta1) - eval1(t, theta2)).norm() / (theta1 - theta2).abs())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::OutOfRange(format!("{name} = {v} must be positive")));
    }
    Ok(())
}

/// `max(1, ⌈2^{m+1}(1-δ)/(B·C)⌉)`: queries a generic local phase oracle
/// needs to approximate the standard oracle within `δ`.
pub fn glp_lower_bound(m: usize, delta: f64, b: f64, c: f64) -> Result<u64> {
    if m == 0 {
        return Err(Error::OutOfRange("m must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::OutOfRange(format!("δ = {delta} not in [0, 1)")));
    }
    check_positive("B", b)?;
    check_positive("C", c)?;
    let raw = (2f64.powi(m as i32 + 1) * (1.0 - delta) / (b * c)).ceil();
    Ok((raw as u64).max(1))
}

/// `max(0, 1 - B·C·N/2^{m+1})`: smallest error `N` queries can reach on the adversary pair.
pub fn glp_min_error(m: usize, n_queries: usize, b: f64, c: f64) -> Result<f64> {
    check_positive("B", b)?;
    check_positive("C", c)?;
    Ok((1.0 - b * c * n_queries as f64 / 2f64.powi(m as i32 + 1)).max(0.0))
}
