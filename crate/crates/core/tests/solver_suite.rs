mod support;

use cadkit_core::solver::solve;
use cadkit_core::ConstraintKind;
use support::suites::{jacobian_error, run_checker_cases, solver_suite};

const KINDS: [ConstraintKind; 7] = [
    ConstraintKind::Coincident,
    ConstraintKind::Parallel,
    ConstraintKind::Equal,
    ConstraintKind::Vertical,
    ConstraintKind::Horizontal,
    ConstraintKind::Perpendicular,
    ConstraintKind::Tangent,
];

#[test]
fn generated_sketches_satisfy_their_constraints() {
    let mut r = support::rng(11);
    for n in 3..=10 {
        let s = support::satisfiable_sketch(&mut r, n);
        assert_eq!(s.len(), n);
        let res = cadkit_core::solver::total_residual(&s).unwrap();
        assert!(res < 1e-9, "n={n} residual {res}");
    }
}

#[test]
fn random_satisfiable_suite_converges() {
    let suite = solver_suite(2024, 60);
    assert!(suite.failures.is_empty(), "failures: {:?}", suite.failures);
    assert!(suite.worst_idempotence <= 1e-9, "idempotence {}", suite.worst_idempotence);
}

#[test]
fn analytic_jacobians_match_central_differences() {
    for (i, kind) in KINDS.into_iter().enumerate() {
        let err = jacobian_error(kind, 100 + i as u64, 40, 1e-6);
        assert!(err < 1e-5, "{kind}: relative error {err}");
    }
}

#[test]
fn checker_fixtures() {
    for (name, ok, observed) in run_checker_cases() {
        assert!(ok, "{name}: observed {observed:?}");
    }
}

#[test]
fn solve_leaves_input_untouched() {
    let mut r = support::rng(5);
    let s = support::perturb(&support::satisfiable_sketch(&mut r, 6), &mut r, 0.05);
    let copy = s.clone();
    let _ = solve(&s).unwrap();
    assert_eq!(s, copy);
}
