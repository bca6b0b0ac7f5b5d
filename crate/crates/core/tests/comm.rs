use distill_core::bounds::error_floor_unitary;
use distill_core::channels::Channel;
use distill_core::comm::*;
use distill_core::conic::SolverConfig;
use distill_core::measures::{robustness, weight, Object};
use distill_core::theories::FreeSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid() -> impl Iterator<Item = f64> {
    (1..=9).map(|k| k as f64 / 10.0)
}

fn fid(e: &Channel, form: NsForm) -> f64 {
    ns_achievable_fidelity_with(e, 2, form, &SolverConfig::default()).unwrap().value
}

fn h2(x: f64) -> f64 {
    if x <= 0.0 { 0.0 } else { -x * x.log2() }
}

#[test]
fn trivial_supermap_is_feasible() {
    for e in [Channel::identity(2), Channel::dephrasure(0.3, 0.09).unwrap()] {
        let p = NsProgram::compile(&e, 2).unwrap();
        assert!(p.residual(&p.trivial_point()) < 1e-12);
        assert!(p.residual(&p.trivial_point().scale(2.0)) > 0.1);
    }
}

#[test]
fn identity_is_perfect() {
    for form in [NsForm::Full, NsForm::Reduced] {
        assert!((fid(&Channel::identity(2), form) - 1.0).abs() < 1e-6);
    }
    let id3 = ns_achievable_fidelity_with(&Channel::identity(3), 3, NsForm::Reduced, &SolverConfig::default()).unwrap();
    assert!((id3.value - 1.0).abs() < 1e-6);
}

#[test]
fn closed_forms() {
    for p in grid() {
        let d = Channel::depolarizing(p, 2).unwrap();
        let z = Channel::dephasing(p).unwrap();
        let n = Channel::amplitude_damping(p).unwrap();
        let want_d = 1.0 - 0.75 * p;
        let want_z = 1.0 - (0.5 - (p - 0.5).abs());
        let want_n = 1.0 - (2.0 + p - 2.0 * (1.0 - p).sqrt()) / 4.0;
        for form in [NsForm::Full, NsForm::Reduced] {
            assert!((fid(&d, form) - want_d).abs() < 1e-5, "D p={p} {form:?}");
            assert!((fid(&z, form) - want_z).abs() < 1e-5, "Z p={p} {form:?}");
            assert!((fid(&n, form) - want_n).abs() < 1e-5, "N g={p} {form:?}");
        }
    }
}

#[test]
fn forms_agree_on_random_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (a, b) in [(2, 2), (2, 3), (3, 2)] {
        for rank in 1..=3 {
            let e = Channel::random(a, b, rank, &mut rng);
            let full = fid(&e, NsForm::Full);
            let reduced = fid(&e, NsForm::Reduced);
            assert!((full - reduced).abs() < 1e-6, "{a}->{b} rank {rank}: {full} vs {reduced}");
        }
    }
}

#[test]
fn error_floors_hold_for_random_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let fs = FreeSet::replacement_channels(2, 2).unwrap();
    for i in 0..50 {
        let e = Channel::random(2, 2, 1 + i % 4, &mut rng);
        let o: Object = e.clone().into();
        let r = robustness(&o, &fs).unwrap().value();
        let w = weight(&o, &fs).unwrap().value();
        let rep = error_floor_unitary(r, w, 0.25).unwrap();
        let floor = rep.bounds.iter().map(|b| b.value_or_trivial()).fold(0.0, f64::max);
        let achieved = 1.0 - ns_achievable_fidelity(&e, 2).unwrap();
        assert!(achieved >= floor - 1e-6, "channel {i}: {achieved} < {floor}");
    }
}

#[test]
fn rejects_trivial_target() {
    assert!(matches!(ns_achievable_fidelity(&Channel::identity(2), 1), Err(CommError::Dimension(_))));
}

#[test]
fn mutual_information_closed_forms() {
    let id = channel_mutual_information(&Channel::identity(2)).unwrap();
    assert!((id.value - 2.0).abs() < 1e-7);
    assert!(id.certified);
    let d1 = channel_mutual_information(&Channel::depolarizing(1.0, 2).unwrap()).unwrap();
    assert!(d1.value.abs() < 1e-7);
    for p in grid() {
        let r = channel_mutual_information(&Channel::depolarizing(p, 2).unwrap()).unwrap();
        let a = 1.0 - 0.75 * p;
        let want = 2.0 - h2(a) - 3.0 * h2(p / 4.0);
        assert!((r.value - want).abs() < 1e-6, "p = {p}: {} vs {want}", r.value);
    }
}

#[test]
fn mutual_information_restarts_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for e in [Channel::amplitude_damping(0.3).unwrap(), Channel::dephrasure(0.2, 0.04).unwrap(), Channel::random(2, 3, 2, &mut rng)] {
        let base = channel_mutual_information(&e).unwrap();
        assert!(base.certified);
        for _ in 0..10 {
            let r = channel_mutual_information_random(&e, &mut rng).unwrap();
            assert!((r.value - base.value).abs() <= 1e-6, "{} vs {}", r.value, base.value);
            assert!(r.history.windows(2).all(|w| w[1] >= w[0] - 1e-10));
        }
        assert!(base.value <= base.value + base.gap);
    }
}

#[test]
fn mutual_information_dimension_limit() {
    assert!(matches!(channel_mutual_information(&Channel::identity(9)), Err(CommError::Dimension(_))));
}
