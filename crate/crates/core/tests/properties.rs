mod common;

use extinction_core::family::{FamilyGraph, IndexSubset};
use extinction_core::models::{
    build_example1, build_example2, example2_implies, example2_singleton, geometric_composition,
    geometric_composition_direct, Example1Params,
};
use extinction_core::relation::{compare_extinction_vectors, RelationKind, RELATION_TOL};
use extinction_core::solver::solve_q_on;
use extinction_core::sweep::{distinct_count, run_sweep, SweepSpec};
use extinction_core::{OffspringLaw, ProbVector, SolveConfig, TypeId, Window};
use proptest::prelude::*;

use common::{all_types, random_dag, random_spec, rng};

fn graph(seed: u64, n: usize) -> FamilyGraph {
    let (labels, edges) = random_dag(&mut rng(seed), n);
    FamilyGraph::new(labels, &edges).unwrap()
}

fn subset(n: usize, mask: u64) -> IndexSubset {
    IndexSubset::new((0..n).filter(|i| mask >> i & 1 == 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generating_function_is_monotone(seed in any::<u64>(), lo in prop::collection::vec(0.0..1.0f64, 6), bump in prop::collection::vec(0.0..1.0f64, 6)) {
        let spec = random_spec(&mut rng(seed), 6);
        let window = all_types(&spec);
        let n = window.len();
        let s: Vec<f64> = lo[..n].to_vec();
        let t: Vec<f64> = s.iter().zip(&bump).map(|(a, b)| a + (1.0 - a) * b).collect();
        let gs = spec.eval_generating_function(&ProbVector::new(window.clone(), s).unwrap(), window.types(), 1.0).unwrap();
        let gt = spec.eval_generating_function(&ProbVector::new(window.clone(), t).unwrap(), window.types(), 1.0).unwrap();
        for (a, b) in gs.values().iter().zip(gt.values()) {
            prop_assert!(*a <= b + 1e-15);
        }
        let ones = spec.eval_generating_function(&ProbVector::constant(window.clone(), 1.0), window.types(), 1.0).unwrap();
        prop_assert!(ones.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn upward_closure_is_idempotent_and_monotone(seed in any::<u64>(), n in 1usize..10, a in any::<u64>(), b in any::<u64>()) {
        let g = graph(seed, n);
        let full = (1u64 << n) - 1;
        let (a, b) = (a & full, (a | b) & full);
        let m = g.masks().unwrap();
        let up_a = m.upward_closure(a);
        prop_assert_eq!(m.upward_closure(up_a), up_a);
        prop_assert_eq!(up_a & a, a);
        prop_assert_eq!(up_a & !m.upward_closure(b), 0);
        let via_sets = g.upward_closure(&subset(n, a)).unwrap();
        prop_assert_eq!(via_sets, subset(n, up_a));
    }

    #[test]
    fn antichains_are_downward_closed(seed in any::<u64>(), n in 1usize..10) {
        let g = graph(seed, n);
        let m = g.masks().unwrap();
        for set in g.primitive_subsets(None).unwrap() {
            let mask = set.members().iter().fold(0u64, |acc, &i| acc | 1 << i);
            prop_assert!(m.is_primitive(mask));
            for &i in set.members() {
                prop_assert!(m.is_primitive(mask & !(1 << i)));
            }
        }
    }

    #[test]
    fn comparison_is_antisymmetric(a in prop::collection::vec(0.0..=1.0f64, 1..12), b in prop::collection::vec(0.0..=1.0f64, 1..12)) {
        let n = a.len().min(b.len());
        let window = Window::from_types((0..n as u64).map(TypeId::Int).collect()).unwrap();
        let qa = ProbVector::new(window.clone(), a[..n].to_vec()).unwrap();
        let qb = ProbVector::new(window, b[..n].to_vec()).unwrap();
        let ab = compare_extinction_vectors(&qa, &qb, RELATION_TOL).unwrap().kind;
        let ba = compare_extinction_vectors(&qb, &qa, RELATION_TOL).unwrap().kind;
        prop_assert_eq!(ab, ba.reversed());
        prop_assert_eq!(compare_extinction_vectors(&qa, &qa, RELATION_TOL).unwrap().kind, RelationKind::Equivalent);
    }

    #[test]
    fn distinct_count_shrinks_with_threshold(values in prop::collection::vec(0.0..1.0f64, 0..20), t in 1e-6..0.1f64) {
        let fine = distinct_count(&values, t);
        let coarse = distinct_count(&values, 2.0 * t);
        prop_assert!(coarse <= fine);
        prop_assert!(fine <= values.len());
    }

    #[test]
    fn example1_laws_sum_to_one(i in 0u64..50, j in 0u64..50, r in 0.05..2.0f64) {
        let law = Example1Params::new(0.1, 0.5, r).law(i, j);
        prop_assert!((law.pgf(|_| 1.0) - 1.0).abs() < 1e-12);
        prop_assert!(matches!(law, OffspringLaw::Product(_)));
    }
}

#[test]
fn geometric_composition_matches_direct_iteration() {
    let mut worst: f64 = 0.0;
    for i in 1..=4 {
        for j in 1..=4 {
            for r in [0.5, 1.0, 2.0] {
                for s in [0.0, 0.25, 0.5, 0.75, 0.99] {
                    let closed = geometric_composition(i, j, r, s).unwrap();
                    worst = worst.max((closed - geometric_composition_direct(i, j, r, s)).abs());
                }
            }
        }
    }
    assert!(worst < 1e-10, "largest deviation {worst}");
}

#[test]
fn sweep_count_is_nondecreasing_in_r() {
    let r = vec![0.05, 0.15, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0];
    let res = run_sweep(&SweepSpec::new(0.1, 0.5, r, 6), &SolveConfig::default()).unwrap();
    let counts: Vec<usize> = res.points.iter().map(|p| p.distinct).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "counts {counts:?}");
    assert_eq!(counts, vec![1, 2, 2, 3, 4, 5, 6, 6]);
}

#[test]
fn grid_order_matches_solved_relations() {
    let spec = build_example2();
    let cfg = SolveConfig::default();
    let cells: Vec<(u64, u64)> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).collect();
    let window = Window::from_types(cells.iter().map(|&(i, j)| TypeId::pair(i, j)).collect()).unwrap();
    let solved: Vec<ProbVector> = cells
        .iter()
        .map(|&(i, j)| solve_q_on(&spec, &example2_singleton(i, j), &window, &cfg).unwrap().vector)
        .collect();
    let mut pairs = 0;
    for a in 0..cells.len() {
        for b in a + 1..cells.len() {
            let kind = compare_extinction_vectors(&solved[a], &solved[b], RELATION_TOL).unwrap().kind;
            let expected = match (example2_implies(cells[a], cells[b]), example2_implies(cells[b], cells[a])) {
                (true, false) => RelationKind::Implies,
                (false, true) => RelationKind::ImpliedBy,
                _ => RelationKind::Incomparable,
            };
            assert_eq!(kind, expected, "{:?} vs {:?}", cells[a], cells[b]);
            pairs += 1;
        }
    }
    assert_eq!(pairs, 36);
}

#[test]
fn level_line_is_left_with_probability_one_half() {
    for r in [0.2, 1.0, 1.5] {
        let ex = build_example1(Example1Params::new(0.1, 0.5, r)).unwrap();
        let x = TypeId::pair(0, 0);
        let window = Window::from_types(vec![x.clone()]).unwrap();
        let q = solve_q_on(&ex.spec, &ex.level(1), &window, &SolveConfig::default()).unwrap();
        assert!((q.value(&x).unwrap() - 0.5).abs() < 1e-9);
    }
}
