use distill_core::bounds::*;
use proptest::prelude::*;

const T_ROB: f64 = 4.0 - 2.0 * std::f64::consts::SQRT_2;
const CCZ_ROB: f64 = 16.0 / 9.0;
const CCZ_FID: f64 = 9.0 / 16.0;

fn grid() -> impl Iterator<Item = f64> {
    (1..=9).map(|k| k as f64 / 10.0)
}

#[test]
fn depolarizing_floors_coincide() {
    for p in grid() {
        let rep = error_floor_unitary(4.0 - 3.0 * p, p, 0.25).unwrap();
        assert!((rep.value("epsilon_rob").unwrap() - 0.75 * p).abs() < 1e-12);
        assert!((rep.value("epsilon_weight").unwrap() - 0.75 * p).abs() < 1e-12);
        assert_eq!(rep.status("epsilon_rob"), Status::Valid);
    }
}

#[test]
fn dephasing_and_damping_floors() {
    for p in grid() {
        let rep = error_floor_unitary(2.0 + 4.0 * (p - 0.5).abs(), 0.0, 0.25).unwrap();
        let want = 0.5 - (p - 0.5).abs();
        let got = rep.value("epsilon_rob").unwrap();
        assert!((got - want).abs() < 1e-12 || (want <= 0.0 && got == 0.0));
        assert_eq!(rep.status("epsilon_weight"), Status::Inapplicable);
        assert_eq!(rep.value("epsilon_weight"), None);

        let g = p;
        let rep = error_floor_unitary(2.0 - g + 2.0 * (1.0 - g).sqrt(), 0.0, 0.25).unwrap();
        let want = (2.0 + g - 2.0 * (1.0 - g).sqrt()) / 4.0;
        assert!((rep.value("epsilon_rob").unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn free_input_is_vacuous() {
    let rep = error_floor_state(1.0, 1.0, 1.0).unwrap();
    assert_eq!(rep.status("epsilon_rob"), Status::Vacuous);
    assert_eq!(rep.value("epsilon_rob"), Some(0.0));
    let rep = error_floor_state(1.0, 1.0, 0.5).unwrap();
    assert_eq!(rep.value("epsilon_rob"), Some(0.5));
}

#[test]
fn eigenvalue_bound_needs_full_rank() {
    assert_eq!(previous_bound(0.0, 0.5).unwrap().status("epsilon_eig"), Status::Inapplicable);
    assert_eq!(previous_bound(0.2, 0.5).unwrap().value("epsilon_eig"), Some(0.1));
}

#[test]
fn t_to_ccz_gate_count() {
    let rep = transform_floor(T_ROB, CCZ_ROB, 0.0, 0.0).unwrap();
    let n = rep.value("n_rob").unwrap();
    assert!((n - 3.6335).abs() < 5e-3, "{n}");
    assert_eq!(n.ceil(), 4.0);
    assert_eq!(rep.status("n_weight"), Status::Undefined);
}

#[test]
fn transform_edge_cases() {
    let same = transform_floor(1.7, 1.7, 0.3, 0.3).unwrap();
    assert!((same.value("n_rob").unwrap() - 1.0).abs() < 1e-12);
    assert!((same.value("n_weight").unwrap() - 1.0).abs() < 1e-12);

    let pure_target = transform_floor(1.5, 2.0, 0.4, 0.0).unwrap();
    assert_eq!(pure_target.status("n_weight"), Status::Infeasible);
    assert_eq!(pure_target.value("n_weight"), Some(f64::INFINITY));

    let free_input = transform_floor(1.0, 1.2, 1.0, 0.5).unwrap();
    assert_eq!(free_input.status("n_rob"), Status::Infeasible);
    assert_eq!(free_input.status("n_weight"), Status::Infeasible);
}

#[test]
fn t_to_ccz_copy_floor() {
    for eps in [0.05, 0.09, 0.095] {
        let rep = copy_floor(T_ROB, 0.0, CCZ_FID, 1, eps).unwrap();
        assert!(rep.value("n_rob").unwrap() > 3.0, "eps = {eps}");
        assert_eq!(rep.status("n_weight"), Status::Inapplicable);
    }
    let rep = copy_floor(T_ROB, 0.0, CCZ_FID, 1, 0.1).unwrap();
    assert!(rep.value("n_rob").unwrap() < 3.0);
}

#[test]
fn weight_copy_floor_limits() {
    let (w, f) = (0.3, 0.6);
    let edge = 1.0 - f;
    let near = copy_floor(2.0, w, f, 1, edge * (1.0 - 1e-9)).unwrap().value("n_weight").unwrap();
    assert!(near < 1e-6);
    let at = copy_floor(2.0, w, f, 1, edge).unwrap();
    assert_eq!(at.status("n_weight"), Status::Vacuous);
    let a = copy_floor(2.0, w, f, 1, 0.01).unwrap().value("n_weight").unwrap();
    let b = copy_floor(2.0, w, f, 1, 0.005).unwrap().value("n_weight").unwrap();
    assert!((b - a - 1.0 / (1.0 / w).log2()).abs() < 1e-12);
}

#[test]
fn rate_ceilings() {
    for p in grid() {
        let rep = adaptive_rate_ceiling(4.0 - 3.0 * p, 0.25).unwrap();
        assert!((rep.value("rate_adaptive").unwrap() - (4.0 - 3.0 * p).log2() / 2.0).abs() < 1e-12);
    }
    let id = adaptive_rate_ceiling(4.0, 0.25).unwrap();
    assert!((id.value("rate_adaptive").unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(parallel_rate_ceiling(1.0, 1.0).unwrap().status("rate_parallel"), Status::Undefined);
    assert!((parallel_rate_ceiling(1.5, 0.25).unwrap().value("rate_parallel").unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn coherence_filter_example() {
    let rep = probabilistic_floor_state(2.0, 0.5, 0.5, 0.5, 0.0).unwrap();
    assert_eq!(rep.value("epsilon_weight_tight"), Some(0.0));
    assert_eq!(rep.status("epsilon_weight_tight"), Status::Vacuous);
}

#[test]
fn probabilistic_loose_clamps_below_threshold() {
    let (w, f) = (0.4, 0.5);
    let p = 1.0 - (1.0 - f) * w - 0.05;
    let rep = probabilistic_floor_channel(1.2, w, f, p, 0.5).unwrap();
    assert_eq!(rep.status("epsilon_weight_loose"), Status::Vacuous);
    assert_eq!(rep.value("epsilon_weight_loose"), Some(0.0));
}

#[test]
fn rejects_out_of_range() {
    assert!(error_floor_unitary(0.5, 0.1, 0.5).is_err());
    assert!(error_floor_unitary(1.5, 1.1, 0.5).is_err());
    assert!(error_floor_unitary(1.5, 0.1, 0.0).is_err());
    assert!(copy_floor(1.5, 0.1, 0.5, 0, 0.1).is_err());
    assert!(copy_floor(1.5, 0.1, 0.5, 1, 1.0).is_err());
    assert!(probabilistic_floor_state(1.5, 0.1, 0.5, 0.0, 0.5).is_err());
    assert!(probabilistic_floor_state(1.5, 0.8, 0.5, 0.2, 0.5).is_err());
    assert!(error_floor_unitary(f64::NAN, 0.1, 0.5).is_err());
}

fn floor(rep: &BoundReport, name: &str) -> f64 {
    rep.get(name).unwrap().value_or_trivial()
}

proptest! {
    #[test]
    fn floors_stay_in_range(r in 1.0f64..50.0, w in 0.0f64..=1.0, f in 1e-3f64..=1.0,
                            p in 1e-3f64..=1.0, t in 0.0f64..=1.0, m in 1u32..5, eps in 1e-4f64..0.999) {
        let t = t * (p / w.max(1e-12)).min(1.0);
        for rep in [
            error_floor_unitary(r, w, f).unwrap(),
            error_floor_state(r, w, f).unwrap(),
            probabilistic_floor_channel(r, w, f, p, t).unwrap(),
            probabilistic_floor_state(r, w, f, p, t).unwrap(),
        ] {
            for b in &rep.bounds {
                if let Some(v) = b.value {
                    prop_assert!((0.0..=1.0).contains(&v), "{} = {v}", b.name);
                }
            }
        }
        for b in &copy_floor(r, w, f, m, eps).unwrap().bounds {
            if let Some(v) = b.value {
                prop_assert!(v >= 0.0, "{} = {v}", b.name);
            }
        }
    }

    #[test]
    fn floors_are_monotone(r in 1.0f64..20.0, w in 0.01f64..=1.0, f in 0.01f64..0.99, h in 1e-3f64..0.01) {
        let base = error_floor_unitary(r, w, f).unwrap();
        let more_f = error_floor_unitary(r, w, f + h).unwrap();
        let more_r = error_floor_unitary(r + h, w, f).unwrap();
        let more_w = error_floor_unitary(r, (w + h).min(1.0), f).unwrap();
        prop_assert!(floor(&more_f, "epsilon_rob") <= floor(&base, "epsilon_rob") + 1e-15);
        prop_assert!(floor(&more_f, "epsilon_weight") <= floor(&base, "epsilon_weight") + 1e-15);
        prop_assert!(floor(&more_r, "epsilon_rob") + 1e-15 >= floor(&base, "epsilon_rob") - 2.0 * h);
        prop_assert!(floor(&more_r, "epsilon_rob") <= floor(&base, "epsilon_rob") + 1e-15);
        prop_assert!(floor(&more_w, "epsilon_weight") + 1e-15 >= floor(&base, "epsilon_weight"));
    }

    #[test]
    fn copy_floor_inverts_error_floor(r in 1.01f64..10.0, w in 0.01f64..0.99, f in 0.05f64..0.95) {
        let one = error_floor_unitary(r, w, f).unwrap();
        let er = one.value("epsilon_rob").unwrap();
        if one.status("epsilon_rob") == Status::Valid {
            let n = copy_floor(r, w, f, 1, er).unwrap().value("n_rob").unwrap();
            prop_assert!((n - 1.0).abs() < 1e-12, "{n}");
        }
        let ew = one.value("epsilon_weight").unwrap();
        let n = copy_floor(r, w, f, 1, ew).unwrap().value("n_weight").unwrap();
        prop_assert!((n - 1.0).abs() < 1e-12, "{n}");
    }

    #[test]
    fn deterministic_limit(r in 1.0f64..20.0, w in 0.0f64..=1.0, f in 0.01f64..=1.0) {
        let det = error_floor_unitary(r, w, f).unwrap();
        let prob = probabilistic_floor_channel(r, w, f, 1.0, 1.0).unwrap();
        prop_assert_eq!(det.get("epsilon_rob").unwrap().value, prob.get("epsilon_rob").unwrap().value);
        for name in ["epsilon_weight_loose", "epsilon_weight_tight"] {
            prop_assert_eq!(det.get("epsilon_weight").unwrap().value, prob.get(name).unwrap().value);
            prop_assert_eq!(det.status("epsilon_weight"), prob.status(name));
        }
        let det = error_floor_state(r, w, f).unwrap();
        let prob = probabilistic_floor_state(r, w, f, 1.0, 1.0).unwrap();
        prop_assert_eq!(det.get("epsilon_rob").unwrap().value, prob.get("epsilon_rob").unwrap().value);
        for name in ["epsilon_weight_loose", "epsilon_weight_tight"] {
            prop_assert_eq!(det.get("epsilon_weight").unwrap().value, prob.get(name).unwrap().value);
        }
    }
}
