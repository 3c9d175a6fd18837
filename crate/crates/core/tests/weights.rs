use doc2ahp::agents::{MockConfig, MockProvider};
use doc2ahp::hierarchy::Criterion;
use doc2ahp::text::mix_seed;
use doc2ahp::weights::{
    aggregate_matrices, consistency_ratio, derive_leader_constraints, eigenvector_weights, elicit_matrix, objective,
    power_iteration, snap_to_saaty, solve_constrained_llsm, weigh_node, AgentJudgment, LeaderConstraint,
    PairwiseMatrix, Panel, Sibling, WeightVector, POWER_MAX_ITER, POWER_TOL,
};
use proptest::prelude::*;
use serde_json::json;

fn criterion(id: &str, label: &str) -> Criterion {
    Criterion {
        id: id.into(),
        label: label.into(),
        description: format!("About {label}."),
        parent: if id == "0" { None } else { Some("0".into()) },
        depth: usize::from(id != "0"),
        cluster_node: 0,
    }
}

fn fixture() -> (Criterion, Vec<Criterion>, Vec<usize>) {
    let parent = criterion("0", "family hotel");
    let children = vec![
        criterion("0.1", "safety pool lifeguard"),
        criterion("0.2", "breakfast buffet"),
        criterion("0.3", "room quiet"),
        criterion("0.4", "price value"),
    ];
    (parent, children, vec![3, 7, 12, 20])
}

fn siblings<'a>(children: &'a [Criterion], sizes: &[usize]) -> Vec<Sibling<'a>> {
    children
        .iter()
        .zip(sizes)
        .map(|(c, &s)| Sibling { criterion: c, evidence: vec![format!("evidence for {}", c.label)], cluster_size: s })
        .collect()
}

/// Elicit, aggregate, check, rectify and snap by hand, then compare with
/// the composed node weighting.
fn hand_pipeline(mock: &MockProvider, seed: u64) {
    let (parent, children, sizes) = fixture();
    let sib = siblings(&children, &sizes);
    let panel = Panel::of_size(3).unwrap();
    let context = "Decision goal: family hotel.";
    let record = weigh_node(&parent, &sib, context, &panel, mock, seed).unwrap();

    let judgments: Vec<AgentJudgment> = panel
        .personas
        .iter()
        .zip(&panel.gammas)
        .map(|(persona, &gamma)| AgentJudgment {
            agent_id: persona.clone(),
            matrix: elicit_matrix(&sib, context, mock, persona, mix_seed(seed, &[&parent.id, persona])).unwrap().matrix,
            gamma,
        })
        .collect();
    let consensus = aggregate_matrices(&judgments).unwrap();
    let before = consistency_ratio(&consensus).unwrap();
    let refs: Vec<&Criterion> = children.iter().collect();
    let leader = derive_leader_constraints(context, &refs, mock, mix_seed(seed, &[&parent.id, "leader"]));
    let optimize = !before.passes || !leader.constraints.is_empty();
    let weights = if optimize {
        solve_constrained_llsm(&consensus, &leader.constraints).unwrap().weights
    } else {
        eigenvector_weights(&consensus).unwrap()
    };
    let snapped = snap_to_saaty(&weights);

    assert_eq!(record.agent_matrices, judgments.iter().map(|j| j.matrix.entries().to_vec()).collect::<Vec<_>>());
    assert_eq!(record.consensus_matrix, consensus.entries());
    assert_eq!(record.cr_before, before);
    assert_eq!(record.leader_constraints, leader.constraints);
    assert_eq!(record.optimized, optimize);
    assert_eq!(record.weights, weights.weights());
    assert_eq!(record.snapped_matrix, snapped.entries());
    assert_eq!(record.cr_after, consistency_ratio(&snapped).unwrap());
    assert!(record.cr_after.cr < 0.1);
    record.validate().unwrap();
}

#[test]
fn node_weighting_equals_hand_composition() {
    hand_pipeline(&MockProvider::default(), 11);
}

#[test]
fn node_weighting_equals_hand_composition_with_leader() {
    let mock = MockProvider::new(MockConfig {
        leader_constraints: vec![json!({"i": "0.1", "j": "0.4", "beta": 3.0})],
        ..MockConfig::default()
    });
    hand_pipeline(&mock, 11);
    let (parent, children, sizes) = fixture();
    let panel = Panel::of_size(3).unwrap();
    let record = weigh_node(&parent, &siblings(&children, &sizes), "ctx", &panel, &mock, 11).unwrap();
    assert!(record.optimized);
    let w = record.weight_vector().unwrap();
    assert!(w.get("0.1").unwrap() >= 3.0 * w.get("0.4").unwrap() - 1e-9);
}

#[test]
fn invalid_leader_triples_are_dropped() {
    let mock = MockProvider::new(MockConfig {
        leader_constraints: vec![
            json!({"i": "0.1", "j": "0.2", "beta": 0.5}),
            json!({"i": "0.1", "j": "0.9", "beta": 2.0}),
            json!({"i": "0.2", "j": "0.3", "beta": 2.0}),
        ],
        ..MockConfig::default()
    });
    let (_, children, _) = fixture();
    let refs: Vec<&Criterion> = children.iter().collect();
    let out = derive_leader_constraints("ctx", &refs, &mock, 0);
    assert_eq!(out.constraints, vec![LeaderConstraint::new("0.2", "0.3", 2.0)]);
    assert_eq!(out.warnings.len(), 2);
}

#[test]
fn mock_elicitation_is_deterministic() {
    let (_, children, sizes) = fixture();
    let sib = siblings(&children, &sizes);
    let mock = MockProvider::default();
    let a = elicit_matrix(&sib, "ctx", &mock, "expert", 5).unwrap();
    let b = elicit_matrix(&sib, "ctx", &mock, "expert", 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn worked_example_matrix_matches_dense_oracle() {
    let m = PairwiseMatrix::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![vec![1.0, 2.0, 0.5], vec![0.5, 1.0, 4.0], vec![2.0, 0.25, 1.0]],
    )
    .unwrap();
    let report = consistency_ratio(&m).unwrap();
    let dense = nalgebra::DMatrix::from_fn(3, 3, |i, j| m.get(i, j));
    let lambda = dense.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let cr = (lambda - 3.0) / 2.0 / 0.58;
    assert!((report.cr - cr).abs() < 1e-6, "{} vs {cr}", report.cr);
}

fn reciprocal(n: usize) -> impl Strategy<Value = PairwiseMatrix> {
    prop::collection::vec(-9f64.ln()..9f64.ln(), n * n).prop_map(move |logs| {
        let ids = (0..n).map(|k| format!("c{k}")).collect();
        PairwiseMatrix::from_upper(ids, |i, j| logs[i * n + j].exp()).unwrap()
    })
}

fn any_reciprocal() -> impl Strategy<Value = PairwiseMatrix> {
    (3usize..=8).prop_flat_map(reciprocal)
}

fn weights(n: usize) -> impl Strategy<Value = WeightVector> {
    prop::collection::vec(0.02f64..1.0, n)
        .prop_map(move |raw| WeightVector::normalized((0..n).map(|k| format!("c{k}")).collect(), &raw).unwrap())
}

fn assert_reciprocal(m: &PairwiseMatrix) {
    for i in 0..m.n() {
        assert!((m.get(i, i) - 1.0).abs() <= 1e-9);
        for j in 0..m.n() {
            assert!((m.get(i, j) * m.get(j, i) - 1.0).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snapped_and_aggregated_matrices_are_reciprocal(m in any_reciprocal(), w in (2usize..9).prop_flat_map(weights)) {
        assert_reciprocal(&snap_to_saaty(&w));
        let judgments = vec![
            AgentJudgment { agent_id: "a".into(), matrix: m.clone(), gamma: 0.3 },
            AgentJudgment { agent_id: "b".into(), matrix: m, gamma: 0.7 },
        ];
        assert_reciprocal(&aggregate_matrices(&judgments).unwrap());
    }

    #[test]
    fn elicited_matrices_are_reciprocal(sizes in prop::collection::vec(1usize..60, 2..9), seed in any::<u64>()) {
        let children: Vec<Criterion> = (0..sizes.len()).map(|k| criterion(&format!("0.{}", k + 1), "x")).collect();
        let sib = siblings(&children, &sizes);
        let m = elicit_matrix(&sib, "ctx", &MockProvider::default(), "p", seed).unwrap().matrix;
        assert_reciprocal(&m);
    }

    #[test]
    fn aggregation_preserves_common_consistency(w in (2usize..9).prop_flat_map(weights), k in 1usize..5) {
        let consistent = PairwiseMatrix::from_weights(&w);
        let judgments: Vec<AgentJudgment> = (0..k)
            .map(|a| AgentJudgment { agent_id: format!("a{a}"), matrix: consistent.clone(), gamma: 1.0 / k as f64 })
            .collect();
        let m = aggregate_matrices(&judgments).unwrap();
        for i in 0..m.n() {
            for j in 0..m.n() {
                prop_assert!((m.get(i, j) - consistent.get(i, j)).abs() <= 1e-12 * consistent.get(i, j).max(1.0));
            }
        }
    }

    #[test]
    fn weight_induced_matrices_are_consistent(w in (3usize..11).prop_flat_map(weights)) {
        prop_assert!(consistency_ratio(&PairwiseMatrix::from_weights(&w)).unwrap().cr.abs() <= 1e-8);
    }

    #[test]
    fn llsm_is_locally_optimal(m in any_reciprocal(), pick in any::<prop::sample::Index>(), beta in 1.0f64..4.0) {
        let n = m.n();
        let i = pick.index(n);
        let j = (i + 1) % n;
        let c = LeaderConstraint::new(m.criterion_ids()[i].clone(), m.criterion_ids()[j].clone(), beta);
        for constraints in [vec![], vec![c]] {
            let sol = solve_constrained_llsm(&m, &constraints).unwrap();
            let x = sol.log_weights.clone();
            let base = objective(&m, &x);
            for k in 0..n {
                for delta in [-1e-3, 1e-3] {
                    let mut y = x.clone();
                    y[k] += delta;
                    let feasible = constraints.is_empty() || y[i] - y[j] >= beta.ln() - 1e-12;
                    if feasible {
                        prop_assert!(objective(&m, &y) >= base - 1e-9, "coordinate {k} delta {delta}");
                    }
                }
            }
            let w = sol.weights;
            for c in &constraints {
                prop_assert!(w.get(&c.i).unwrap() >= c.beta * w.get(&c.j).unwrap() - 1e-9);
            }
        }
    }

    #[test]
    fn power_iteration_is_scale_invariant(m in any_reciprocal(), c in 0.1f64..10.0) {
        let a = m.entries().to_vec();
        let scaled: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let p = power_iteration(&a, POWER_TOL, POWER_MAX_ITER).unwrap();
        let q = power_iteration(&scaled, POWER_TOL, POWER_MAX_ITER).unwrap();
        prop_assert!((q.value - c * p.value).abs() <= 1e-8 * c * p.value);
        for (x, y) in p.vector.iter().zip(&q.vector) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }
}
