use std::collections::BTreeSet;

use proptest::prelude::*;
use sturm_core::attractor::{predicted_graph, EdgeKind, NodeRef};
use sturm_core::coeff::{build_cutoff, CoefficientSpec};
use sturm_core::config::random_field;
use sturm_core::equilibria::{adjacent, find_equilibria_with, EquilibriumSearch, Target};
use sturm_core::infinity::infinity_equilibria;
use sturm_core::integrator::{integrate, Outcome, StepController};
use sturm_core::SpatialGrid;

fn grid() -> SpatialGrid {
    SpatialGrid::new(129).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn cutoff_ball_is_absorbing(seed in any::<u64>(), amp in 1.0f64..50.0) {
        let r = 4.0;
        let c = build_cutoff(&CoefficientSpec::tanh_reaction(0.5, 1.0, 1.0).unwrap(), r).unwrap();
        let u0 = random_field(grid(), 6, amp, 1.0, seed);
        prop_assume!(u0.sup_norm() <= 10.0 * (r + 1.0));
        let ctrl = StepController { t_max: 20.0, ..StepController::default() };
        let tr = integrate(&u0, &ctrl, &c, None).unwrap();
        prop_assert!(!tr.outcome.is_growup());
        let sup: Vec<f64> = tr.snapshots.iter().map(|u| u.sup_norm()).collect();
        let entry = sup.iter().position(|&s| s <= r + 2.0);
        prop_assert!(entry.is_some(), "never entered: final sup {}", sup.last().unwrap());
        let worst = sup[entry.unwrap()..].iter().cloned().fold(0.0, f64::max);
        prop_assert!(worst <= r + 2.0, "left the ball again: {worst}");
    }

    #[test]
    fn runs_converge_or_grow_up(seed in any::<u64>(), amp in 0.1f64..4.0) {
        let c = CoefficientSpec::tanh_reaction(0.5, 1.0, 1.0).unwrap();
        let u0 = random_field(grid(), 6, amp, 1.0, seed);
        let ctrl = StepController { t_max: 400.0, ..StepController::default() };
        let tr = integrate(&u0, &ctrl, &c, None).unwrap();
        prop_assert!(
            matches!(tr.outcome, Outcome::Converged { .. } | Outcome::GrowUp { .. }),
            "{:?}", tr.outcome
        );
    }

    #[test]
    fn linear_graph_structure(b in 0.05f64..30.0) {
        let n_inf = b.sqrt().floor() as usize;
        prop_assume!((b - (n_inf * n_inf) as f64).abs() > 0.05 && ((n_inf + 1) * (n_inf + 1)) as f64 - b > 0.05);
        let c = CoefficientSpec::linear(b, 1.0).unwrap();
        let eqs = find_equilibria_with(&EquilibriumSearch::covering(&c), &c).unwrap();
        prop_assert_eq!(eqs.len(), 1);
        let e = &eqs[0];
        prop_assert_eq!(e.morse_index, n_inf + 1);
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] > w[1]));
        let inf = infinity_equilibria(1.0, b).unwrap();
        let g = predicted_graph(&eqs, &inf).unwrap();
        prop_assert!(g.topological_order().is_some());
        prop_assert_eq!(g.edges_of(EdgeKind::Hb).count(), 0);
        prop_assert_eq!(g.edges_of(EdgeKind::Hup).count(), 2 * (n_inf + 1));
        let index = |n: NodeRef| match n {
            NodeRef::Infinity { j, .. } => j,
            NodeRef::Bounded { .. } => usize::MAX,
        };
        let got: BTreeSet<(usize, usize)> =
            g.edges_of(EdgeKind::Hinf).map(|e| (index(e.source), index(e.target))).collect();
        let want: BTreeSet<(usize, usize)> =
            (0..=n_inf).flat_map(|j| (0..j).map(move |k| (j, k))).collect();
        prop_assert_eq!(got, want);
        // each index pair appears once per sign combination
        prop_assert_eq!(g.edges_of(EdgeKind::Hinf).count(), 4 * n_inf * (n_inf + 1) / 2);
    }
}

#[test]
fn hb_edges_drop_morse_index_and_adjacency_is_symmetric() {
    for (b, c_react) in [(0.5, 1.0), (2.0, 3.0), (5.0, 2.0)] {
        let c = CoefficientSpec::tanh_reaction(b, c_react, 1.0).unwrap();
        let eqs = find_equilibria_with(&EquilibriumSearch::covering(&c), &c).unwrap();
        for e in eqs.iter().filter(|e| e.hyperbolic) {
            assert!(e.eigenvalues.windows(2).all(|w| w[0] > w[1]), "b={b} e{}", e.id);
        }
        for x in &eqs {
            for y in &eqs {
                if x.id != y.id {
                    assert_eq!(
                        adjacent(x, Target::Bounded(y), &eqs).unwrap(),
                        adjacent(y, Target::Bounded(x), &eqs).unwrap()
                    );
                }
            }
        }
        if eqs.iter().all(|e| e.hyperbolic) {
            let inf = infinity_equilibria(1.0, b).unwrap();
            let g = predicted_graph(&eqs, &inf).unwrap();
            assert!(g.topological_order().is_some());
            let morse = |n: NodeRef| match n {
                NodeRef::Bounded { id } => eqs[id].morse_index,
                NodeRef::Infinity { .. } => unreachable!(),
            };
            for e in g.edges_of(EdgeKind::Hb) {
                assert!(morse(e.source) > morse(e.target));
            }
        }
    }
}
