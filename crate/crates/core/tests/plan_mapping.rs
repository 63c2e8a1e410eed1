mod common;

use std::collections::BTreeMap;

use common::{fixture, fixtures};
use memplan_core::graph::{Graph, Node, TensorEdge};
use memplan_core::pipeline::{plan_graph, PlanMode, PlanOptions};
use memplan_core::plan::{load_plan, map_allocation_request, save_plan, validate_plan, PlanError};

#[test]
fn chain3_requests_wrap_around_the_sequence() {
    let g = fixture("chain3");
    let report = plan_graph(&g, &PlanOptions::default()).unwrap();
    let plan = &report.plan;
    assert_eq!(plan.sequence.nodes(), ["v1", "v2", "v3"]);
    let first = map_allocation_request(0, plan, &report.graph, 1000).unwrap();
    assert_eq!(first, 1000 + plan.addresses["e1"]);
    assert_eq!(map_allocation_request(3, plan, &report.graph, 1000).unwrap(), first);
    assert_eq!(map_allocation_request(1, plan, &report.graph, 0).unwrap(), plan.addresses["e2"]);
    assert!(matches!(map_allocation_request(2, plan, &report.graph, 0), Err(PlanError::NoOutputEdge(n)) if n == "v3"));
}

#[test]
fn one_period_of_training_mini_hits_every_data_tensor_once() {
    let g = fixture("training_mini");
    let report = plan_graph(&g, &PlanOptions::default()).unwrap();
    let plan = &report.plan;
    let mut hits: BTreeMap<u64, usize> = BTreeMap::new();
    let mut no_output = Vec::new();
    for k in 0..plan.sequence.steps.len() {
        match map_allocation_request(k, plan, &report.graph, 0) {
            Ok(addr) => *hits.entry(addr).or_default() += 1,
            Err(PlanError::NoOutputEdge(node)) => no_output.push(node),
            Err(e) => panic!("{e}"),
        }
    }
    no_output.sort();
    assert_eq!(no_output, ["grad_out", "upd1"]);
    // Requests map to each planned offset with the right multiplicity.
    let mut expected: BTreeMap<u64, usize> = BTreeMap::new();
    for addr in plan.addresses.values() {
        *expected.entry(*addr).or_default() += 1;
    }
    assert_eq!(hits.values().sum::<usize>(), 6);
    assert_eq!(hits, expected);
}

#[test]
fn multi_output_nodes_are_rejected() {
    let g = Graph::new(
        vec![Node::compute("a"), Node::compute("b")],
        vec![TensorEdge::data("x", "a", &["b"], 4), TensorEdge::data("y", "a", &["b"], 4)],
    )
    .unwrap();
    let report = plan_graph(&g, &PlanOptions::default()).unwrap();
    let err = map_allocation_request(0, &report.plan, &report.graph, 0).unwrap_err();
    assert!(matches!(err, PlanError::MultiOutputUnsupported(n) if n == "a"));
}

#[test]
fn requests_without_a_plan_fail() {
    let g = fixture("chain3");
    let mut report = plan_graph(&g, &PlanOptions::default()).unwrap();
    report.plan.addresses.remove("e1");
    assert!(matches!(map_allocation_request(0, &report.plan, &report.graph, 0), Err(PlanError::MissingAddress(_))));
    report.plan.sequence.steps.clear();
    assert!(matches!(map_allocation_request(0, &report.plan, &report.graph, 0), Err(PlanError::EmptySequence)));
}

#[test]
fn planner_output_validates_and_round_trips() {
    for (name, g) in fixtures() {
        for mode in [PlanMode::Split, PlanMode::Joint] {
            let report = plan_graph(&g, &PlanOptions { mode, ..Default::default() }).unwrap();
            assert!(report.validation.is_valid(), "{name}: {:?}", report.validation);
            // The stored plan is checked against the graph the user supplied.
            assert!(validate_plan(&report.plan, &g).is_valid(), "{name}");
            let bytes = save_plan(&report.plan);
            let back = load_plan(&bytes).unwrap();
            assert_eq!(back, report.plan);
            assert_eq!(save_plan(&back), bytes);
            assert_eq!(report.plan.fragmentation(), 0.0, "{name}");
        }
    }
}

#[test]
fn garbage_plans_do_not_load() {
    assert!(matches!(load_plan(b"{}"), Err(PlanError::Parse(_))));
    assert!(matches!(load_plan(b"not json"), Err(PlanError::Parse(_))));
}
