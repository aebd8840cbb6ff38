//! Numerical search for the best interleaving constants of an `N`-query
//! circuit, as empirical evidence next to the analytic bounds.
//!
//! Each constant is updated on the unitary group as `U ← exp(iH) U`, so the
//! search is unconstrained in the Hermitian generators and unitarity is exact.
//! The objective is a log-sum-exp smoothed maximum over the function family
//! of the normalized squared Frobenius distance to the target query.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitSpec, Gate};
use crate::error::{Error, Result};
use crate::linalg::{expm_i_hermitian, haar_unitary, lift, op_norm_rect, ComplexMatrix, C64};
use crate::oracle::{FunctionTable, Oracle};

/// Largest circuit dimension the optimizer accepts.
pub const OPT_MAX_DIM: usize = 64;
/// Sharpness of the log-sum-exp maximum.
pub const LSE_SHARPNESS: f64 = 50.0;
const ARMIJO: f64 = 1e-4;
/// Consecutive small relative decreases before a restart stops.
const PATIENCE: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub master_seed: u64,
    pub initial_step: f64,
    /// Relative objective decrease below which an iteration counts as stalled.
    pub tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { restarts: 20, max_iterations: 2000, master_seed: 0, initial_step: 0.1, tolerance: 1e-8 }
    }
}

/// Summary of one restart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub restart: usize,
    /// Generator seed; the restart uses stream `restart` of it.
    pub seed: u64,
    pub iterations: usize,
    pub surrogate: f64,
    pub final_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizationResult {
    pub best_error: f64,
    pub surrogate: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
    pub circuit: CircuitSpec,
    /// Where the circuit was written, when it was.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circuit_ref: Option<String>,
}

/// Instantiated query and target matrices for every function.
struct Problem {
    dim: usize,
    system_bits: usize,
    powers: Vec<i32>,
    /// `queries[f] = (Q_f, Q_f^{-1})` lifted to `dim`.
    queries: Vec<(DMatrix<C64>, DMatrix<C64>)>,
    targets: Vec<DMatrix<C64>>,
}

impl Problem {
    fn new(q1: &Oracle, q2: &Oracle, fs: &[FunctionTable], powers: &[i32]) -> Result<Self> {
        if fs.is_empty() {
            return Err(Error::InvalidInput("no functions to optimize over".into()));
        }
        if powers.iter().any(|p| p.abs() != 1) {
            return Err(Error::InvalidInput("query powers must be ±1".into()));
        }
        let mut targets = Vec::with_capacity(fs.len());
        let mut raw = Vec::with_capacity(fs.len());
        for f in fs {
            targets.push(q2.query(f)?);
            raw.push(q1.query(f)?);
        }
        let dim = targets.iter().chain(&raw).map(ComplexMatrix::dim).max().expect("nonempty");
        if dim > OPT_MAX_DIM {
            return Err(Error::SizeCap { dim, cap: OPT_MAX_DIM });
        }
        let lifted = |m: &ComplexMatrix| lift(m, dim).map(ComplexMatrix::into_dmatrix);
        let queries = raw
            .iter()
            .map(|q| {
                let q = lifted(q)?;
                let inv = q.adjoint();
                Ok((q, inv))
            })
            .collect::<Result<_>>()?;
        let targets = targets.iter().map(lifted).collect::<Result<_>>()?;
        Ok(Self { dim, system_bits: dim.trailing_zeros() as usize, powers: powers.to_vec(), queries, targets })
    }

    fn query(&self, f: usize, k: usize) -> &DMatrix<C64> {
        let (q, inv) = &self.queries[f];
        if self.powers[k] > 0 {
            q
        } else {
            inv
        }
    }

    /// `U_{N+1} Q^{p_N} U_N … Q^{p_1} U_1` at function `f`.
    fn circuit(&self, us: &[DMatrix<C64>], f: usize) -> DMatrix<C64> {
        let mut c = us[0].clone();
        for k in 0..self.powers.len() {
            c = &us[k + 1] * (self.query(f, k) * c);
        }
        c
    }

    /// `‖C_f − T_f‖_F² / dim` for each function.
    fn distances(&self, us: &[DMatrix<C64>]) -> Vec<f64> {
        (0..self.targets.len())
            .map(|f| (self.circuit(us, f) - &self.targets[f]).norm_squared() / self.dim as f64)
            .collect()
    }

    fn max_error(&self, us: &[DMatrix<C64>]) -> f64 {
        (0..self.targets.len())
            .map(|f| op_norm_rect(&(self.circuit(us, f) - &self.targets[f])))
            .fold(0.0, f64::max)
    }

    fn surrogate(&self, us: &[DMatrix<C64>]) -> f64 {
        smooth_max(&self.distances(us)).0
    }

    /// Surrogate and its Riemannian gradient: one Hermitian matrix per constant,
    /// the derivative along `U_k ← exp(iεH) U_k` being `tr(H·grad_k)`.
    fn gradient(&self, us: &[DMatrix<C64>]) -> (f64, Vec<DMatrix<C64>>) {
        let (value, weights) = smooth_max(&self.distances(us));
        let n = self.powers.len();
        let mut grad = vec![DMatrix::<C64>::zeros(self.dim, self.dim); n + 1];
        let scale = 2.0 / self.dim as f64;
        for (f, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            // before[k]: product applied before U_k; after[k]: product applied after U_k.
            let mut before = Vec::with_capacity(n + 1);
            before.push(DMatrix::<C64>::identity(self.dim, self.dim));
            for k in 0..n {
                let next = self.query(f, k) * (&us[k] * &before[k]);
                before.push(next);
            }
            let mut after = vec![DMatrix::<C64>::identity(self.dim, self.dim); n + 1];
            for k in (0..n).rev() {
                after[k] = &after[k + 1] * &us[k + 1] * self.query(f, k);
            }
            let t_adj = self.targets[f].adjoint();
            for k in 0..=n {
                let g = &us[k] * &before[k] * &t_adj * &after[k];
                let herm = (&g - g.adjoint()) * C64::new(0.0, -0.5);
                grad[k] += herm * C64::new(w * scale, 0.0);
            }
        }
        (value, grad)
    }
}

/// `(1/β)·ln(mean exp(β d))` and its weights `∂/∂d`.
fn smooth_max(d: &[f64]) -> (f64, Vec<f64>) {
    let top = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = d.iter().map(|&v| (LSE_SHARPNESS * (v - top)).exp()).collect();
    let sum: f64 = e.iter().sum();
    let value = top + (sum / d.len() as f64).ln() / LSE_SHARPNESS;
    (value.max(0.0), e.iter().map(|v| v / sum).collect())
}

fn step(us: &[DMatrix<C64>], grad: &[DMatrix<C64>], alpha: f64) -> Vec<DMatrix<C64>> {
    us.iter().zip(grad).map(|(u, g)| expm_i_hermitian(&(g * C64::new(-alpha, 0.0))) * u).collect()
}

struct Descent {
    us: Vec<DMatrix<C64>>,
    value: f64,
    iterations: usize,
}

fn descend(problem: &Problem, mut us: Vec<DMatrix<C64>>, cfg: &OptimizerConfig) -> Descent {
    let mut alpha = cfg.initial_step;
    let mut value = problem.surrogate(&us);
    let mut stalled = 0;
    let mut iterations = 0;
    while iterations < cfg.max_iterations && value > 0.0 {
        iterations += 1;
        let (v, grad) = problem.gradient(&us);
        value = v;
        let slope: f64 = grad.iter().map(|g| g.norm_squared()).sum();
        if slope == 0.0 {
            break;
        }
        let mut accepted = None;
        let mut trial = (alpha * 2.0).min(10.0);
        for _ in 0..60 {
            let cand = step(&us, &grad, trial);
            let cv = problem.surrogate(&cand);
            if cv <= value - ARMIJO * trial * slope {
                accepted = Some((cand, cv));
                break;
            }
            trial *= 0.5;
        }
        let Some((cand, cv)) = accepted else { break };
        alpha = trial;
        let decrease = value - cv;
        us = cand;
        stalled = if decrease <= cfg.tolerance * value { stalled + 1 } else { 0 };
        value = cv;
        if stalled >= PATIENCE {
            break;
        }
    }
    Descent { us, value, iterations }
}

fn restart_rng(master: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(restart as u64);
    rng
}

fn to_circuit(problem: &Problem, us: &[DMatrix<C64>], q1: &Oracle, q2: &Oracle) -> CircuitSpec {
    let constant = |u: &DMatrix<C64>| Gate::Constant { offset: 0, matrix: ComplexMatrix::from_dmatrix_unchecked(u.clone()) };
    let mut gates = vec![constant(&us[0])];
    for (k, &p) in problem.powers.iter().enumerate() {
        gates.push(Gate::Query { power: p });
        gates.push(constant(&us[k + 1]));
    }
    CircuitSpec::new(problem.system_bits, gates).with_slots(Some(q1.clone()), Some(q2.clone()))
}

fn run(problem: &Problem, q1: &Oracle, q2: &Oracle, cfg: &OptimizerConfig, warm: Option<&[DMatrix<C64>]>) -> Result<OptimizationResult> {
    if cfg.restarts == 0 {
        return Err(Error::InvalidInput("at least one restart is required".into()));
    }
    let slots = problem.powers.len() + 1;
    let runs: Vec<(RestartTrace, Vec<DMatrix<C64>>)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let start = match (r, warm) {
                (0, Some(w)) => w.to_vec(),
                _ => {
                    let mut rng = restart_rng(cfg.master_seed, r);
                    (0..slots).map(|_| haar_unitary(problem.dim, &mut rng).into_dmatrix()).collect()
                }
            };
            let d = descend(problem, start, cfg);
            let trace = RestartTrace {
                restart: r,
                seed: cfg.master_seed,
                iterations: d.iterations,
                surrogate: d.value,
                final_error: problem.max_error(&d.us),
            };
            (trace, d.us)
        })
        .collect();
    let best = (0..runs.len())
        .min_by(|&a, &b| runs[a].0.final_error.total_cmp(&runs[b].0.final_error).then(a.cmp(&b)))
        .expect("at least one restart");
    Ok(OptimizationResult {
        best_error: runs[best].0.final_error,
        surrogate: runs[best].0.surrogate,
        best_restart: best,
        circuit: to_circuit(problem, &runs[best].1, q1, q2),
        restarts: runs.into_iter().map(|(t, _)| t).collect(),
        circuit_ref: None,
    })
}

/// Best `N`-query approximation of `q2` by `q1` over `fs`, with the query
/// powers fixed to `powers` (`N = powers.len()`).
pub fn optimize_circuit(q1: &Oracle, q2: &Oracle, fs: &[FunctionTable], powers: &[i32], cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    let problem = Problem::new(q1, q2, fs, powers)?;
    run(&problem, q1, q2, cfg, None)
}

/// `[+1; n]` and `[+1, -1, +1, …]`, deduplicated.
pub fn canonical_patterns(n: usize) -> Vec<Vec<i32>> {
    let all = vec![1; n];
    let alt: Vec<i32> = (0..n).map(|k| if k % 2 == 0 { 1 } else { -1 }).collect();
    if all == alt {
        vec![all]
    } else {
        vec![all, alt]
    }
}

/// Every `±1` pattern of length `n`.
pub fn all_patterns(n: usize) -> Vec<Vec<i32>> {
    (0..1u32 << n).map(|bits| (0..n).map(|k| if bits >> k & 1 == 0 { 1 } else { -1 }).collect()).collect()
}

/// One row of [`error_floor`].
#[derive(Clone, Debug, Serialize)]
pub struct FloorEntry {
    pub n_queries: usize,
    /// Best error over circuits with exactly this many queries.
    pub found: f64,
    /// Best error over circuits with at most this many queries.
    pub floor: f64,
    pub powers: Vec<i32>,
}

/// Smallest error found with at most `N` queries, for `N = 0..=max_queries`.
///
/// Each length is searched over `patterns(N)`. Restart 0 of each pattern is
/// warm-started from the best shorter circuit with an identity constant
/// inserted after the new query. The floor is the running minimum, so it is
/// non-increasing by definition.
pub fn error_floor(
    q1: &Oracle,
    q2: &Oracle,
    max_queries: usize,
    fs: &[FunctionTable],
    cfg: &OptimizerConfig,
    patterns: impl Fn(usize) -> Vec<Vec<i32>>,
) -> Result<Vec<FloorEntry>> {
    let mut out: Vec<FloorEntry> = Vec::with_capacity(max_queries + 1);
    let mut prev: Option<Vec<DMatrix<C64>>> = None;
    for n in 0..=max_queries {
        let mut best: Option<(f64, Vec<i32>, Vec<DMatrix<C64>>)> = None;
        for powers in patterns(n) {
            let problem = Problem::new(q1, q2, fs, &powers)?;
            let warm = prev.as_ref().map(|p| {
                let mut w = p.clone();
                w.push(DMatrix::identity(problem.dim, problem.dim));
                w
            });
            let res = run(&problem, q1, q2, cfg, warm.as_deref())?;
            if best.as_ref().is_none_or(|b| res.best_error < b.0) {
                let us = res
                    .circuit
                    .gates
                    .iter()
                    .filter_map(|g| match g {
                        Gate::Constant { matrix, .. } => Some(matrix.as_dmatrix().clone()),
                        _ => None,
                    })
                    .collect();
                best = Some((res.best_error, powers, us));
            }
        }
        let (found, powers, us) = best.ok_or_else(|| Error::InvalidInput("no power patterns".into()))?;
        let floor = out.last().map_or(found, |e| e.floor.min(found));
        out.push(FloorEntry { n_queries: n, found, floor, powers });
        prev = Some(us);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{adversary_pair, glp_min_error, mainthm_bound};
    use crate::classify::{enumerate_functions, enumerate_permutations};
    use crate::linalg::op_norm;
    use crate::oracle::{GPreset, GlpSpec};

    fn quick(restarts: usize, iters: usize) -> OptimizerConfig {
        OptimizerConfig { restarts, max_iterations: iters, master_seed: 7, ..OptimizerConfig::default() }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fs = enumerate_permutations(1).unwrap();
        let p = Problem::new(&Oracle::Minimal, &Oracle::Standard, &fs, &[1, -1]).unwrap();
        let mut rng = restart_rng(3, 0);
        let us: Vec<_> = (0..3).map(|_| haar_unitary(4, &mut rng).into_dmatrix()).collect();
        let (_, grad) = p.gradient(&us);
        let h = DMatrix::from_fn(4, 4, |a, b| if a == b { C64::new(0.3 * a as f64, 0.0) } else { C64::new(0.1 * (a + b) as f64, 0.2 * (a as f64 - b as f64)) });
        for k in 0..3 {
            let along = |eps: f64| {
                let mut v = us.clone();
                v[k] = expm_i_hermitian(&(&h * C64::new(eps, 0.0))) * &v[k];
                p.surrogate(&v)
            };
            let numeric = (along(1e-6) - along(-1e-6)) / 2e-6;
            let analytic = (&h * &grad[k]).trace().re;
            assert!((numeric - analytic).abs() < 1e-6, "slot {k}: {numeric} vs {analytic}");
        }
    }

    #[test]
    fn identical_oracles_need_no_constants() {
        let fs = enumerate_functions(1, 1).unwrap();
        let r = optimize_circuit(&Oracle::Standard, &Oracle::Standard, &fs, &[1], &quick(3, 2000)).unwrap();
        assert!(r.best_error <= 1e-6, "{}", r.best_error);
    }

    #[test]
    fn minimal_reaches_standard_with_two_queries() {
        let fs = enumerate_permutations(1).unwrap();
        let r = optimize_circuit(&Oracle::Minimal, &Oracle::Standard, &fs, &[1, -1], &quick(4, 2000)).unwrap();
        assert!(r.best_error <= 1e-6, "{}", r.best_error);
        assert!(r.restarts.iter().all(|t| t.final_error >= r.best_error));
    }

    #[test]
    fn glp_cannot_beat_the_analytic_floor() {
        let pair = adversary_pair(1, 3).unwrap();
        let fs = [pair.f1.clone(), pair.f2.clone()];
        let glp = Oracle::GenericLocalPhase { spec: GlpSpec::diagonal(1, GPreset::Linear, 1.0).unwrap() };
        let r = optimize_circuit(&glp, &Oracle::Standard, &fs, &[1], &quick(3, 300)).unwrap();
        let floor = glp_min_error(3, 1, std::f64::consts::TAU, 1.0).unwrap();
        assert!(r.best_error >= floor - 1e-9, "{} < {floor}", r.best_error);
        let b = mainthm_bound(&r.circuit, &glp, &Oracle::Standard, &pair).unwrap();
        assert!(r.best_error >= b.bound - 1e-6);
    }

    #[test]
    fn deterministic_and_order_free() {
        let fs = enumerate_permutations(1).unwrap();
        let cfg = quick(3, 50);
        let a = optimize_circuit(&Oracle::Minimal, &Oracle::Standard, &fs, &[1], &cfg).unwrap();
        let b = optimize_circuit(&Oracle::Minimal, &Oracle::Standard, &fs, &[1], &cfg).unwrap();
        assert_eq!(a.surrogate.to_bits(), b.surrogate.to_bits());
        assert_eq!(a.restarts, b.restarts);
        // A restart's outcome does not depend on how many restarts run.
        let c = optimize_circuit(&Oracle::Minimal, &Oracle::Standard, &fs, &[1], &quick(1, 50)).unwrap();
        assert_eq!(c.restarts[0], a.restarts[0]);
    }

    #[test]
    fn floor_examples() {
        let fs = enumerate_functions(1, 1).unwrap();
        let cfg = quick(3, 300);
        let rows = error_floor(&Oracle::Standard, &Oracle::Standard, 2, &fs, &cfg, canonical_patterns).unwrap();
        // N = 0: a constant is at least half the largest gap between targets away.
        let targets: Vec<_> = fs.iter().map(|f| Oracle::Standard.query(f).unwrap()).collect();
        let mut gap: f64 = 0.0;
        for a in &targets {
            for b in &targets {
                gap = gap.max(op_norm(&(a - b)));
            }
        }
        assert!(rows[0].found >= gap / 2.0 - 1e-6);
        assert!(rows[1].floor <= 1e-6);
        for w in rows.windows(2) {
            assert!(w[1].floor <= w[0].floor + 1e-9);
        }
        assert_eq!(all_patterns(2).len(), 4);
        assert_eq!(canonical_patterns(1), vec![vec![1]]);
    }

    #[test]
    fn size_cap() {
        let fs = [FunctionTable::zero(3, 4).unwrap()];
        assert!(matches!(
            optimize_circuit(&Oracle::Standard, &Oracle::Standard, &fs, &[1], &quick(1, 1)),
            Err(Error::SizeCap { .. })
        ));
    }
}
