use std::f64::consts::TAU;

use proptest::prelude::*;
use qoracle::circuit::{apply_circuit, approx_error, compose_simulations, minimal_simulates_standard, random_circuit, CircuitSpec, Gate};
use qoracle::classify::{classify, ClassifyOptions, Domain};
use qoracle::linalg::{cis, lift, op_norm, ComplexMatrix, ComplexVector, C64};
use qoracle::oracle::{build_minimal, build_standard, fourier_state, minimal_eigensystem, FunctionTable, Oracle};
use qoracle::trig::{degree_trace, TrigPoly};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn table(n: usize, m: usize) -> impl Strategy<Value = FunctionTable> {
    prop::collection::vec(0u64..(1 << m), 1 << n).prop_map(move |v| FunctionTable::new(n, m, v).unwrap())
}

fn permutation(n: usize) -> impl Strategy<Value = FunctionTable> {
    Just((0..1u64 << n).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(move |v| FunctionTable::new(n, n, v).unwrap())
}

fn shaped_table() -> impl Strategy<Value = FunctionTable> {
    (1usize..=3, 1usize..=3).prop_flat_map(|(n, m)| table(n, m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kickback(f in shaped_table(), s in 0usize..8, x in 0usize..8) {
        let (s, x) = (s % f.codomain_size() as usize, x % f.domain_size());
        let v = ComplexVector::basis(f.domain_size(), x).tensor(&fourier_state(f.m(), s).unwrap());
        let lambda = cis(TAU * (s as u64 * f.eval(x)) as f64 / f.codomain_size() as f64);
        let q = build_standard(&f).unwrap();
        prop_assert!(q.apply(&v).distance(&v.scale(lambda)) < 1e-12);
    }

    #[test]
    fn minimal_query_times_inverse_is_identity(f in (1usize..=3).prop_flat_map(permutation)) {
        let q = build_minimal(&f).unwrap().matrix;
        let qi = build_minimal(&f.inverse().unwrap()).unwrap().matrix;
        prop_assert!((&(&q * &qi) - &ComplexMatrix::identity(f.domain_size())).max_abs() == 0.0);
        let eig = minimal_eigensystem(&f).unwrap();
        prop_assert!(eig.residual(&q) < 1e-10);
        prop_assert!(eig.orthonormality_error() < 1e-10);
    }

    #[test]
    fn lift_repeats_every_phase(f in table(1, 2), extra in 1usize..=2) {
        let eig = Oracle::Standard.eigensystem(&f).unwrap();
        let factor = 1 << extra;
        let lifted = eig.lift(factor);
        let q = lift(&build_standard(&f).unwrap(), eig.dim * factor).unwrap();
        prop_assert!(lifted.residual(&q) < 1e-12);
        for (j, &p) in eig.phases.iter().enumerate() {
            let copies = lifted.phases.iter().filter(|&&l| l == p).count();
            let same = eig.phases.iter().filter(|&&l| l == p).count();
            prop_assert_eq!(copies, same * factor, "phase {} of index {}", p, j);
        }
    }

    #[test]
    fn circuit_inverse(seed in any::<u64>(), f in table(1, 1), queries in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_circuit(3, queries, &mut rng);
        let u = apply_circuit(&c, &Oracle::Standard, &f).unwrap();
        let v = apply_circuit(&c.inverse(), &Oracle::Standard, &f).unwrap();
        prop_assert!((&(&v * &u) - &ComplexMatrix::identity(8)).max_abs() < 1e-9);
    }

    #[test]
    fn degree_law(seed in any::<u64>(), reference in table(1, 1), queries in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_circuit(3, queries, &mut rng);
        let check = qoracle::classify::enumerate_functions(1, 1).unwrap();
        let t = degree_trace(&c, &Oracle::Standard, &reference, (seed % 8) as usize, &check).unwrap();
        prop_assert!(t.final_degree as usize <= queries);
        prop_assert!(t.max_eval_error < 1e-9);
    }

    #[test]
    fn evaluate_is_linear(
        a in prop::collection::vec((-3i32..=3, -3i32..=3, -1.0f64..1.0), 0..6),
        b in prop::collection::vec((-3i32..=3, -3i32..=3, -1.0f64..1.0), 0..6),
        s in -2.0f64..2.0,
        phases in prop::array::uniform2(-4.0f64..4.0),
    ) {
        let build = |terms: &[(i32, i32, f64)]| {
            terms.iter().fold(TrigPoly::zero(2), |acc, &(p, q, c)| {
                acc.add(&TrigPoly::monomial(2, vec![p, q], C64::new(c, -c / 2.0)).unwrap()).unwrap()
            })
        };
        let (pa, pb) = (build(&a), build(&b));
        let mut sum = pa.clone();
        sum.add_scaled(&pb, C64::new(s, 0.0)).unwrap();
        let lhs = sum.evaluate(&phases).unwrap();
        let rhs = pa.evaluate(&phases).unwrap() + pb.evaluate(&phases).unwrap() * s;
        prop_assert!((lhs - rhs).norm() < 1e-9);
        prop_assert!(sum.degree() <= pa.degree().max(pb.degree()));
    }

    #[test]
    fn composition_error_adds(seed in any::<u64>(), perm in permutation(1)) {
        // An approximate std-query circuit composed with the exact min->std
        // circuit keeps the outer error, within the sum of both errors.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy = random_circuit(2, 1, &mut rng);
        let outer = CircuitSpec { gates: vec![Gate::Query { power: 1 }], ..noisy.clone() }
            .with_slots(Some(Oracle::Standard), Some(Oracle::Standard));
        let outer = CircuitSpec { gates: [noisy.gates.clone(), outer.gates].concat(), ..outer };
        let inner = minimal_simulates_standard(1).unwrap();
        let comp = compose_simulations(&outer, &inner).unwrap();
        let e_outer = approx_error(&outer, &Oracle::Standard, &Oracle::Standard, &[perm.clone()]).unwrap().max_error;
        let e_inner = approx_error(&inner, &Oracle::Minimal, &Oracle::Standard, &[perm.clone()]).unwrap().max_error;
        let e_comp = approx_error(&comp, &Oracle::Minimal, &Oracle::Standard, &[perm]).unwrap().max_error;
        prop_assert!(e_comp <= e_outer + outer.query_count() as f64 * e_inner + 1e-9);
    }
}

#[test]
fn hierarchy_holds_across_oracles() {
    let cases = [
        (Oracle::Standard, 1, 1, Domain::All),
        (Oracle::ComplexPhase { d: 3 }, 2, 2, Domain::All),
        (Oracle::Minimal, 1, 1, Domain::Permutations),
        (Oracle::Minimal, 2, 2, Domain::Permutations),
    ];
    for (oracle, n, m, domain) in cases {
        let r = classify(&oracle, n, m, &domain, ClassifyOptions::default()).unwrap();
        r.check_hierarchy().unwrap();
        assert!(!r.simple.holds || r.basic.holds);
        assert!(!r.basic.holds || r.nonentangled.holds);
    }
}

#[test]
fn operator_norm_dominates_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let c = random_circuit(2, 1, &mut rng);
        let f = FunctionTable::new(1, 1, vec![1, 1]).unwrap();
        let d = &apply_circuit(&c, &Oracle::Standard, &f).unwrap() - &build_standard(&f).unwrap();
        assert!(op_norm(&d) + 1e-12 >= d.max_abs());
    }
}
