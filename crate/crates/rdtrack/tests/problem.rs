use rdtrack::problem::{
    embed, embed_marginal, reduce, restrict, validate, Labels, Marginal, ProblemError, RdProblem, SupportSet, Violation, Warning,
};

fn three_letter() -> RdProblem {
    RdProblem::checked(vec![0.5, 0.5], vec![vec![0.0, 1.0, 0.5], vec![1.0, 0.0, 0.5]]).unwrap()
}

#[test]
fn valid_problem_passes() {
    let report = validate(&three_letter());
    assert!(report.passed());
    assert!(report.warnings.is_empty());
}

#[test]
fn source_sum_is_checked() {
    let p = RdProblem::new(vec![0.5, 0.6], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let report = validate(&p);
    assert!(matches!(report.violations[..], [Violation::SourceNotNormalized { .. }]));
    assert!(RdProblem::checked(vec![0.5, 0.6], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
}

#[test]
fn source_sum_tolerance_is_tight() {
    let ok = RdProblem::new(vec![0.5, 0.5 + 5e-13], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    assert!(validate(&ok).passed());
    let bad = RdProblem::new(vec![0.5, 0.5 + 5e-12], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    assert!(!validate(&bad).passed());
}

#[test]
fn negative_entries_are_rejected() {
    let p = RdProblem::new(vec![1.2, -0.2], vec![vec![0.0, 1.0], vec![1.0, -1.0]]).unwrap();
    let v = validate(&p).violations;
    assert!(v.iter().any(|x| matches!(x, Violation::NegativeSource { index: 1, .. })));
    assert!(v.iter().any(|x| matches!(x, Violation::NegativeDistortion { row: 1, col: 1, .. })));
}

#[test]
fn non_finite_entries_are_rejected() {
    let p = RdProblem::new(vec![0.5, 0.5], vec![vec![0.0, f64::NAN], vec![1.0, 0.0]]).unwrap();
    assert!(validate(&p).violations.iter().any(|x| matches!(x, Violation::NonFiniteDistortion { row: 0, col: 1 })));
}

#[test]
fn duplicate_columns_are_rejected_and_near_duplicates_warned() {
    let dup = RdProblem::new(vec![0.5, 0.5], vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
    assert!(matches!(validate(&dup).violations[..], [Violation::DuplicateColumns { first: 0, second: 1 }]));
    let near = RdProblem::new(vec![0.5, 0.5], vec![vec![0.0, 1e-11], vec![1.0, 1.0]]).unwrap();
    let report = validate(&near);
    assert!(report.passed());
    assert!(matches!(report.warnings[..], [Warning::NearDuplicateColumns { first: 0, second: 1, .. }]));
}

#[test]
fn shape_errors() {
    assert_eq!(
        RdProblem::new(vec![0.5, 0.5], vec![vec![0.0, 1.0]]),
        Err(ProblemError::ShapeMismatch { rows: 1, source_len: 2 })
    );
    assert_eq!(
        RdProblem::new(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0]]),
        Err(ProblemError::RaggedRow { row: 1, len: 1, expected: 2 })
    );
    assert_eq!(RdProblem::new(vec![], vec![]), Err(ProblemError::Empty));
}

#[test]
fn binary_hamming_puts_p_on_letter_one() {
    let p = RdProblem::binary_hamming(0.3);
    assert_eq!(p.source(), &[0.7, 0.3]);
    assert_eq!(p.d(0, 1), 1.0);
    assert_eq!(p.d(1, 1), 0.0);
    assert_eq!(p.argmin_expected_distortion(), 0);
}

#[test]
fn labels_must_match_alphabets() {
    let labels = Labels { source: vec!["a".into(), "b".into()], reproduction: vec!["x".into(), "y".into(), "z".into()] };
    let p = three_letter().with_labels(labels).unwrap();
    let reduced = reduce(&p, &SupportSet::new(vec![0, 2], 3).unwrap()).unwrap();
    assert_eq!(reduced.labels().unwrap().reproduction, vec!["x".to_string(), "z".to_string()]);
    let bad = Labels { source: vec!["a".into()], reproduction: vec!["x".into(), "y".into(), "z".into()] };
    assert!(matches!(three_letter().with_labels(bad), Err(ProblemError::LabelCount { expected: 2, got: 1 })));
}

#[test]
fn reduce_keeps_columns_in_order_and_stays_valid() {
    let p = three_letter();
    let s = SupportSet::new(vec![0, 2], 3).unwrap();
    let r = reduce(&p, &s).unwrap();
    assert_eq!(r.m(), 2);
    assert_eq!(r.d(1, 1), 0.5);
    assert!(validate(&r).passed());
}

#[test]
fn support_set_checks() {
    assert_eq!(SupportSet::new(vec![], 3), Err(ProblemError::EmptySupport));
    assert_eq!(SupportSet::new(vec![1, 1], 3), Err(ProblemError::SupportNotIncreasing));
    assert_eq!(SupportSet::new(vec![0, 3], 3), Err(ProblemError::SupportOutOfRange { index: 3, size: 3 }));
    let outer = SupportSet::new(vec![0, 2, 3], 4).unwrap();
    let inner = SupportSet::new(vec![1, 2], 3).unwrap();
    let composed = outer.compose(&inner).unwrap();
    assert_eq!(composed.indices(), &[2, 3]);
    assert!(composed.is_subset_of(&outer));
    assert!(!outer.is_subset_of(&composed));
}

#[test]
fn embed_inverts_restrict_exactly() {
    let s = SupportSet::new(vec![1, 3], 4).unwrap();
    let v = vec![0.0, 0.25, 0.0, 0.75];
    let small = restrict(&v, &s).unwrap();
    assert_eq!(small, vec![0.25, 0.75]);
    assert_eq!(embed(&small, &s, 4).unwrap(), v);
    let m = embed_marginal(&Marginal::normalized(small).unwrap(), &s, 4).unwrap();
    assert_eq!(m.weights, v);
    assert!(m.normalized);
    assert!(matches!(embed(&[1.0], &s, 4), Err(ProblemError::LengthMismatch { got: 1, expected: 2 })));
}

#[test]
fn marginal_constructors() {
    assert!(Marginal::normalized(vec![0.5, 0.6]).is_err());
    assert_eq!(Marginal::uniform(4).weights, vec![0.25; 4]);
    let pm = Marginal::point_mass(3, 2);
    assert_eq!(pm.support(), vec![2]);
    assert_eq!(pm.min_entry(), 0.0);
    assert!(!Marginal::unnormalized(vec![0.2]).normalized);
}
