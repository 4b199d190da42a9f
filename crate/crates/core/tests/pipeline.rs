//! End-to-end checks of the equilibrium and graph pipeline against
//! independent brute-force oracles.

use std::collections::BTreeSet;

use sturm_core::attractor::{predicted_graph, scenario_equilibria, EdgeKind, NodeRef, Scenario};
use sturm_core::coeff::{build_cutoff, CoefficientSpec};
use sturm_core::equilibria::{find_equilibria_with, shoot, sturm_permutation, EquilibriumRecord, EquilibriumSearch};
use sturm_core::field::{zero_number_default, StateField};
use sturm_core::infinity::infinity_equilibria;
use sturm_core::integrator::{integrate, StepController};

fn cutoff_scenario() -> Scenario {
    let c = build_cutoff(&CoefficientSpec::tanh_reaction(0.5, 1.0, 1.0).unwrap(), 4.0).unwrap();
    Scenario::new(c)
}

fn z(u: &StateField, v: &StateField) -> i64 {
    zero_number_default(&u.sub(v).unwrap())
}

#[test]
fn equilibrium_count_matches_dense_scan() {
    let c = CoefficientSpec::tanh_reaction(5.0, 2.0, 1.0).unwrap();
    let search = EquilibriumSearch::covering(&c);
    let found = find_equilibria_with(&search, &c).unwrap();

    let n = 100_000;
    let h = (search.eta_max - search.eta_min) / n as f64;
    let mut roots = 0;
    let mut prev = shoot(search.eta_min, &c);
    for i in 1..=n {
        let m = shoot(search.eta_min + i as f64 * h, &c);
        if m == 0.0 || (prev != 0.0 && m.signum() != prev.signum()) {
            roots += 1;
        }
        prev = m;
    }
    assert_eq!(found.len(), roots, "{:?}", found.iter().map(|e| e.eta).collect::<Vec<_>>());
    assert!(roots >= 3);
}

#[test]
fn sturm_permutation_matches_profile_ordering() {
    let s = cutoff_scenario();
    let eqs = scenario_equilibria(&s).unwrap();
    assert_eq!(eqs.len(), 3);
    let rank = |vals: Vec<f64>| -> Vec<usize> {
        (0..vals.len())
            .map(|i| 1 + vals.iter().filter(|&&v| v < vals[i]).count())
            .collect()
    };
    let left = rank(eqs.iter().map(|e| e.profile.values()[0]).collect());
    let right = rank(eqs.iter().map(|e| *e.profile.values().last().unwrap()).collect());
    let mut oracle = vec![0; eqs.len()];
    for i in 0..eqs.len() {
        oracle[left[i] - 1] = right[i];
    }
    assert_eq!(sturm_permutation(&eqs).unwrap().sigma, oracle);
}

/// Blockers of `a -> sign Phi_k`: equilibria on the `sign` side of `a` whose
/// difference with `a` has exactly `k` zeros.
fn blocked_at_infinity(a: &EquilibriumRecord, k: usize, sign: i32, eqs: &[EquilibriumRecord]) -> bool {
    eqs.iter().any(|u| {
        u.id != a.id && (u.eta - a.eta) * sign as f64 > 0.0 && z(&a.profile, &u.profile) == k as i64
    })
}

#[test]
fn cutoff_graph_matches_exhaustive_pairs() {
    let s = cutoff_scenario();
    let eqs = scenario_equilibria(&s).unwrap();
    let inf = infinity_equilibria(s.coeff.a_inf, s.coeff.b).unwrap();
    let g = predicted_graph(&eqs, &inf).unwrap();
    let got: BTreeSet<(String, String)> = g.edges.iter().map(|e| (e.source.key(), e.target.key())).collect();

    let mut want = BTreeSet::new();
    for a in &eqs {
        for b in &eqs {
            if a.id == b.id || a.morse_index <= b.morse_index {
                continue;
            }
            let (lo, hi) = (a.eta.min(b.eta), a.eta.max(b.eta));
            let zab = z(&a.profile, &b.profile);
            let blocked = eqs
                .iter()
                .any(|u| u.eta > lo && u.eta < hi && z(&a.profile, &u.profile) == zab && z(&b.profile, &u.profile) == zab);
            if !blocked {
                want.insert((format!("e{}", a.id), format!("e{}", b.id)));
            }
        }
        for phi in &inf {
            if !blocked_at_infinity(a, phi.j, phi.sign, &eqs) {
                want.insert((format!("e{}", a.id), NodeRef::from_infinity(*phi).key()));
            }
        }
    }
    for p in &inf {
        for q in &inf {
            if p.j > q.j {
                want.insert((NodeRef::from_infinity(*p).key(), NodeRef::from_infinity(*q).key()));
            }
        }
    }
    assert_eq!(got, want);
    let expected: BTreeSet<(String, String)> = [("e0", "e1"), ("e2", "e1"), ("e0", "-Phi0"), ("e2", "+Phi0")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    assert_eq!(got, expected);
    assert_eq!(g.edges_of(EdgeKind::Hinf).count(), 0);
    assert!(g.topological_order().is_some());
}

#[test]
fn equilibria_are_stationary_under_the_integrator() {
    let s = cutoff_scenario();
    let eqs = scenario_equilibria(&s).unwrap();
    let ctrl = StepController {
        t_max: 10.0,
        growup_norm_threshold: f64::INFINITY,
        ..StepController::default()
    };
    for e in &eqs {
        let tr = integrate(&e.profile, &ctrl, &s.coeff, None).unwrap();
        let drift = tr
            .snapshots
            .iter()
            .map(|u| u.sub(&e.profile).unwrap().sup_norm())
            .fold(0.0_f64, f64::max);
        assert!(drift <= 1e-6, "e{} drifts by {drift:e}", e.id);
    }
}

#[test]
fn eigenfunctions_oscillate_by_index() {
    let s = cutoff_scenario();
    for e in scenario_equilibria(&s).unwrap() {
        let cutoff = e.profile.len() / 8;
        for (k, phi) in e.eigenfunctions.iter().enumerate().take(cutoff) {
            assert_eq!(zero_number_default(phi), k as i64, "e{} eigenfunction {k}", e.id);
        }
    }
}
