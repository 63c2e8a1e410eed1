mod common;

use common::{fixture, fixtures, random_graphs};
use memplan_core::pipeline::{plan_graph, PlanOptions};
use memplan_core::placement::{fragmentation, run_baseline, AllocPolicy};
use memplan_core::solve::Schedule;

#[test]
fn pack3_first_fit_wastes_a_fifth() {
    let g = fixture("pack3");
    let r = run_baseline(&g, &g.program_order(), AllocPolicy::FirstFit).unwrap();
    assert_eq!((r.mr_peak, r.rs_at_peak), (10, 8));
    assert_eq!((r.fragmentation.wasted, r.fragmentation.reserved), (2, 10));
    let planned = plan_graph(&g, &PlanOptions::default()).unwrap();
    assert_eq!(planned.plan.peak_mem, 8);
    assert!(planned.plan.peak_mem < r.mr_peak);
}

#[test]
fn baseline_never_beats_the_planner() {
    for (name, g) in fixtures().into_iter().chain(random_graphs(60)) {
        let planned = plan_graph(&g, &PlanOptions::default()).unwrap();
        for policy in [AllocPolicy::FirstFit, AllocPolicy::BestFit] {
            let order = g.program_order();
            let r = run_baseline(&g, &order, policy).unwrap();
            assert!(r.mr_peak >= planned.plan.peak_mem, "{name} {policy:?}");
            // The arena always covers what is resident.
            assert!(r.mr_peak >= Schedule::from_order(&g, &order).peak_resident(&g), "{name}");
        }
    }
}

#[test]
fn best_fit_is_deterministic() {
    for (_, g) in random_graphs(20) {
        let a = run_baseline(&g, &g.program_order(), AllocPolicy::BestFit).unwrap();
        let b = run_baseline(&g, &g.program_order(), AllocPolicy::BestFit).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn baseline_rejects_bad_orders() {
    let g = fixture("chain3");
    let mut order = g.program_order();
    order.reverse();
    assert!(run_baseline(&g, &order, AllocPolicy::FirstFit).is_err());
    assert!(run_baseline(&g, &order[..1], AllocPolicy::FirstFit).is_err());
}

#[test]
fn fragmentation_needs_rs_below_mr() {
    assert!(fragmentation(4, 5).is_err());
    assert_eq!(fragmentation(0, 0).unwrap().as_f64(), 0.0);
    assert_eq!(fragmentation(10, 8).unwrap().as_f64(), 0.2);
}
