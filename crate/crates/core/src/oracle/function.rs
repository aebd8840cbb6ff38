//! Discrete functions `f: B^n → B^m` stored as value tables, and the cycle
//! structure of permutations.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported input width.
pub const MAX_INPUT_BITS: usize = 20;
/// Largest supported output width.
pub const MAX_OUTPUT_BITS: usize = 30;

/// Value table of a function `f: B^n → B^m`, indexed by `x` ascending.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct FunctionTable {
    n: usize,
    m: usize,
    values: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    n: usize,
    m: usize,
    table: Vec<u64>,
}

impl TryFrom<TableRepr> for FunctionTable {
    type Error = Error;
    fn try_from(r: TableRepr) -> Result<Self> {
        FunctionTable::new(r.n, r.m, r.table)
    }
}

impl From<FunctionTable> for TableRepr {
    fn from(f: FunctionTable) -> Self {
        TableRepr { n: f.n, m: f.m, table: f.values }
    }
}

impl FunctionTable {
    pub fn new(n: usize, m: usize, values: Vec<u64>) -> Result<Self> {
        if n == 0 || n > MAX_INPUT_BITS {
            return Err(Error::OutOfRange(format!("input bits n = {n} not in 1..={MAX_INPUT_BITS}")));
        }
        if m == 0 || m > MAX_OUTPUT_BITS {
            return Err(Error::OutOfRange(format!("output bits m = {m} not in 1..={MAX_OUTPUT_BITS}")));
        }
        if values.len() != 1 << n {
            return Err(Error::InvalidInput(format!(
                "table has {} entries, expected 2^{n} = {}",
                values.len(),
                1usize << n
            )));
        }
        if let Some((x, v)) = values.iter().enumerate().find(|(_, &v)| v >= 1 << m) {
            return Err(Error::OutOfRange(format!("f({x}) = {v} does not fit in {m} bits")));
        }
        Ok(Self { n, m, values })
    }

    /// The constant zero function.
    pub fn zero(n: usize, m: usize) -> Result<Self> {
        Self::new(n, m, vec![0; 1usize.checked_shl(n as u32).unwrap_or(0)])
    }

    pub fn from_fn(n: usize, m: usize, f: impl Fn(usize) -> u64) -> Result<Self> {
        Self::new(n, m, (0..1usize << n.min(MAX_INPUT_BITS)).map(f).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn domain_size(&self) -> usize {
        1 << self.n
    }

    pub fn codomain_size(&self) -> u64 {
        1 << self.m
    }

    #[inline]
    pub fn eval(&self, x: usize) -> u64 {
        self.values[x]
    }

    /// True when `n = m` and the table is a bijection.
    pub fn is_permutation(&self) -> bool {
        if self.n != self.m {
            return false;
        }
        let mut seen = vec![false; self.domain_size()];
        self.values.iter().all(|&v| !std::mem::replace(&mut seen[v as usize], true))
    }

    pub fn inverse(&self) -> Result<FunctionTable> {
        if !self.is_permutation() {
            return Err(Error::NotPermutation);
        }
        let mut inv = vec![0u64; self.domain_size()];
        for (x, &v) in self.values.iter().enumerate() {
            inv[v as usize] = x as u64;
        }
        FunctionTable::new(self.n, self.m, inv)
    }

    /// `f^k(x)` for a function with `n = m`.
    pub fn iterate(&self, x: usize, k: usize) -> usize {
        debug_assert_eq!(self.n, self.m);
        (0..k).fold(x, |y, _| self.values[y] as usize)
    }

    /// Uniformly random table.
    pub fn random<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Self> {
        let hi = 1u64 << m;
        Self::new(n, m, (0..1usize << n).map(|_| rng.gen_range(0..hi)).collect())
    }

    /// Uniformly random permutation of `B^n`.
    pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let mut v: Vec<u64> = (0..1u64 << n).collect();
        v.shuffle(rng);
        Self::new(n, n, v)
    }

    /// Orbit (cycle) decomposition of a permutation.
    pub fn orbits(&self) -> Result<OrbitDecomposition> {
        orbit_decomposition(self)
    }
}

/// One cycle of a permutation, listed from its smallest element.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orbit {
    pub representative: usize,
    /// `[x_ℓ, f(x_ℓ), …, f^{r-1}(x_ℓ)]`.
    pub members: Vec<usize>,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Complete cycle decomposition, orbits ordered by representative.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitDecomposition {
    pub orbits: Vec<Orbit>,
    /// `position[x] = (orbit index ℓ, s)` with `x = f^s(x_ℓ)`.
    #[serde(skip)]
    position: Vec<(usize, usize)>,
}

impl OrbitDecomposition {
    pub fn orbit_count(&self) -> usize {
        self.orbits.len()
    }

    pub fn max_length(&self) -> usize {
        self.orbits.iter().map(Orbit::len).max().unwrap_or(0)
    }

    /// `(ℓ, s)` such that `x = f^s(x_ℓ)`.
    pub fn locate(&self, x: usize) -> (usize, usize) {
        self.position[x]
    }
}

/// Follows every cycle of `f`, scanning start points in ascending order so
/// each representative is the minimum of its orbit.
pub fn orbit_decomposition(f: &FunctionTable) -> Result<OrbitDecomposition> {
    if !f.is_permutation() {
        return Err(Error::NotPermutation);
    }
    let size = f.domain_size();
    let mut position = vec![(usize::MAX, 0); size];
    let mut orbits = Vec::new();
    for start in 0..size {
        if position[start].0 != usize::MAX {
            continue;
        }
        let idx = orbits.len();
        let mut members = Vec::new();
        let mut x = start;
        loop {
            position[x] = (idx, members.len());
            members.push(x);
            x = f.eval(x) as usize;
            if x == start {
                break;
            }
        }
        orbits.push(Orbit { representative: start, members });
    }
    Ok(OrbitDecomposition { orbits, position })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize, values: &[u64]) -> FunctionTable {
        FunctionTable::new(n, n, values.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(FunctionTable::new(1, 1, vec![0, 2]).is_err());
        assert!(FunctionTable::new(2, 1, vec![0, 1]).is_err());
        assert!(FunctionTable::new(0, 1, vec![0]).is_err());
    }

    #[test]
    fn json_shape() {
        let f: FunctionTable = serde_json::from_str(r#"{"n": 1, "m": 2, "table": [3, 0]}"#).unwrap();
        assert_eq!(f.values(), &[3, 0]);
        let back = serde_json::to_value(&f).unwrap();
        assert_eq!(back["table"], serde_json::json!([3, 0]));
        assert!(serde_json::from_str::<FunctionTable>(r#"{"n": 1, "m": 1, "table": [3, 0]}"#).is_err());
    }

    #[test]
    fn identity_has_singleton_orbits() {
        let d = table(2, &[0, 1, 2, 3]).orbits().unwrap();
        assert_eq!(d.orbit_count(), 4);
        assert!(d.orbits.iter().all(|o| o.len() == 1));
    }

    #[test]
    fn four_cycle() {
        let d = table(2, &[1, 2, 3, 0]).orbits().unwrap();
        assert_eq!(d.orbit_count(), 1);
        assert_eq!(d.orbits[0].representative, 0);
        assert_eq!(d.orbits[0].members, vec![0, 1, 2, 3]);
        assert_eq!(d.locate(2), (0, 2));
    }

    #[test]
    fn two_transpositions() {
        let d = table(2, &[1, 0, 3, 2]).orbits().unwrap();
        assert_eq!(d.orbit_count(), 2);
        assert_eq!(d.orbits[0].representative, 0);
        assert_eq!(d.orbits[1].representative, 2);
        assert!(d.orbits.iter().all(|o| o.len() == 2));
    }

    #[test]
    fn non_permutation_rejected() {
        assert!(matches!(table(1, &[0, 0]).orbits(), Err(Error::NotPermutation)));
    }

    #[test]
    fn inverse_composes_to_identity() {
        let f = table(2, &[2, 0, 3, 1]);
        let g = f.inverse().unwrap();
        for x in 0..4 {
            assert_eq!(g.eval(f.eval(x) as usize), x as u64);
        }
    }
}
