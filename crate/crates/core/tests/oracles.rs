use extinction_core::family::{detect_ascending_chains, FamilyGraph};
use extinction_core::models::{
    build_example1, critical_level, figure1_graph, figure2_window, frozen_descendant_mean, predicted_distinct_levels,
    Example1Params,
};
use extinction_core::solver::solve_q_on;
use extinction_core::{SolveConfig, TypeId, Window};

/// `q_(0,0)(L_i)` for `i = 1..=6`, frozen from the solver at `p = 0.1`,
/// `q = 0.5`.
const LEVEL_VALUES: [(f64, [f64; 6]); 3] = [
    (0.2, [0.5, 0.737312, 0.737312, 0.737312, 0.737312, 0.737312]),
    (0.5, [0.5, 0.742153, 0.865431, 0.926209, 0.926209, 0.926209]),
    (1.0, [0.5, 0.743043, 0.867595, 0.932124, 0.965436, 0.982503]),
];

#[test]
fn frozen_level_values() {
    let x = TypeId::pair(0, 0);
    let window = Window::from_types(vec![x.clone()]).unwrap();
    for (r, expected) in LEVEL_VALUES {
        let ex = build_example1(Example1Params::new(0.1, 0.5, r)).unwrap();
        for (i, want) in (1..=6).zip(expected) {
            let got = solve_q_on(&ex.spec, &ex.level(i), &window, &SolveConfig::default()).unwrap().value(&x).unwrap();
            assert!((got - want).abs() < 2e-6, "r={r}, level {i}: {got} vs {want}");
        }
    }
}

#[test]
fn level_zero_dies_out_when_r_exceeds_one() {
    let ex = build_example1(Example1Params::new(0.1, 0.5, 1.5)).unwrap();
    let window = Window::initial(ex.spec.typeset(), 10);
    let q = solve_q_on(&ex.spec, &ex.level(0), &window, &SolveConfig::default()).unwrap();
    assert!(q.vector.values().iter().all(|v| (v - 1.0).abs() < 1e-8));
}

#[test]
fn thresholds_of_the_level_rule() {
    assert_eq!(critical_level(0.1, 0.05), Some(1));
    assert_eq!(critical_level(0.1, 0.5), Some(4));
    assert_eq!(critical_level(0.1, 1.0), None);
    assert_eq!(predicted_distinct_levels(0.1, 0.05, 6), 1);
    assert_eq!(predicted_distinct_levels(0.1, 0.2, 6), 2);
    assert_eq!(predicted_distinct_levels(0.1, 0.5, 6), 4);
    assert_eq!(predicted_distinct_levels(0.1, 1.0, 6), 6);
}

#[test]
fn descendant_series_convergence_flags() {
    assert!(frozen_descendant_mean(1, 0.1, 1.0, 200).unwrap().convergent);
    assert!(!frozen_descendant_mean(3, 0.2, 0.5, 50).unwrap().convergent);
    let p: f64 = 0.1;
    assert!(!frozen_descendant_mean(2, p, p.sqrt(), 50).unwrap().convergent);
}

#[test]
fn figure1_has_seven_primitive_subsets() {
    let g = figure1_graph();
    assert_eq!(g.enumerate_ia_finite().unwrap().len(), 7);
    assert_eq!(g.enumerate_classes_bruteforce().unwrap().len(), 7);
    let report = detect_ascending_chains(&g, &g);
    assert!(!report.probable_ascending_chain);
}

#[test]
fn small_graph_class_counts() {
    let labels = |n: usize| (1..=n).map(|i| i.to_string()).collect::<Vec<_>>();
    let edgeless = FamilyGraph::new(labels(3), &[]).unwrap();
    assert_eq!(edgeless.enumerate_classes_bruteforce().unwrap().len(), 8);
    let chain = FamilyGraph::new(labels(3), &[(0, 1), (1, 2)]).unwrap();
    assert_eq!(chain.enumerate_classes_bruteforce().unwrap().len(), 4);
    assert_eq!(chain.enumerate_ia_finite().unwrap().len(), 4);
}

#[test]
fn figure2_windows_grow_a_chain() {
    let small = figure2_window(7).unwrap();
    let large = figure2_window(12).unwrap();
    assert_eq!((small.longest_path(), large.longest_path()), (5, 10));
    assert!(detect_ascending_chains(&small, &large).probable_ascending_chain);
}
