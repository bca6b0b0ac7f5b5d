use distill_core::channels::Channel;
use distill_core::conic::model::{MatExpr, Model};
use distill_core::conic::SolverConfig;
use distill_core::measures::{
    free_fidelity, injection_reduction, robustness, sep_robustness_analytic, weight, MeasureError,
    MeasureOptions, MeasureResult, Object,
};
use distill_core::qla::{fidelity, random_density, random_pure, CMatrix, DensityOperator, Hermitian, C64};
use distill_core::stab;
use distill_core::theories::FreeSet;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn ch(e: Channel) -> Object {
    Object::Channel(e)
}

fn state(v: &[C64]) -> Object {
    Object::State(DensityOperator::pure(v).unwrap())
}

fn certified(r: &MeasureResult) -> f64 {
    let check = r.diagnostics.witness_check.as_ref().expect("witness checked");
    assert!(check.passed, "witness check failed: {check:?}");
    r.value()
}

fn t_gate() -> CMatrix {
    let w = std::f64::consts::FRAC_PI_4;
    CMatrix::diag(&[c(1.0, 0.0), c(w.cos(), w.sin())])
}

fn ccz_gate() -> CMatrix {
    let mut d = vec![c(1.0, 0.0); 8];
    d[7] = c(-1.0, 0.0);
    CMatrix::diag(&d)
}

fn depolarized(p: f64, v: &[C64]) -> DensityOperator {
    let rho = Hermitian::projector(v).scale(1.0 - p);
    let mixed = Hermitian::identity(v.len()).scale(p / v.len() as f64);
    DensityOperator::from_hermitian(&rho + &mixed).unwrap()
}

#[test]
fn free_objects_have_unit_measures() {
    let ns = FreeSet::replacement_channels(2, 2).unwrap();
    let free = ch(Channel::depolarizing(1.0, 2).unwrap());
    assert!((certified(&robustness(&free, &ns).unwrap()) - 1.0).abs() < 1e-7);
    assert!((certified(&weight(&free, &ns).unwrap()) - 1.0).abs() < 1e-7);
    let stab1 = FreeSet::stab_states(1).unwrap();
    let zero = state(&[c(1.0, 0.0), c(0.0, 0.0)]);
    assert!((certified(&robustness(&zero, &stab1).unwrap()) - 1.0).abs() < 1e-7);
    assert!((certified(&weight(&zero, &stab1).unwrap()) - 1.0).abs() < 1e-7);
    assert!((free_fidelity(&zero, &stab1).unwrap().value() - 1.0).abs() < 1e-12);
}

#[test]
fn replacement_robustness_closed_forms() {
    let ns = FreeSet::replacement_channels(2, 2).unwrap();
    let r = robustness(&ch(Channel::identity(2)), &ns).unwrap();
    assert!((certified(&r) - 4.0).abs() < 1e-6);
    for &p in &[0.0, 0.1, 0.25, 0.5, 0.9] {
        let e = ch(Channel::depolarizing(p, 2).unwrap());
        assert!((certified(&robustness(&e, &ns).unwrap()) - (4.0 - 3.0 * p)).abs() < 1e-6, "R(D_{p})");
        assert!((certified(&weight(&e, &ns).unwrap()) - p).abs() < 1e-6, "W(D_{p})");
        let z = ch(Channel::dephasing(p).unwrap());
        let expected = 2.0 + 4.0 * (p - 0.5).abs();
        assert!((certified(&robustness(&z, &ns).unwrap()) - expected).abs() < 1e-6, "R(Z_{p})");
        let g = ch(Channel::amplitude_damping(p).unwrap());
        let expected = 2.0 - p + 2.0 * (1.0 - p).sqrt();
        assert!((certified(&robustness(&g, &ns).unwrap()) - expected).abs() < 1e-6, "R(N_{p})");
    }
}

#[test]
fn dephasing_has_no_free_part() {
    let ns = FreeSet::replacement_channels(2, 2).unwrap();
    for &p in &[0.1, 0.3, 0.5, 0.8] {
        let r = weight(&ch(Channel::dephasing(p).unwrap()), &ns).unwrap();
        assert!(certified(&r).abs() < 1e-8, "W(Z_{p}) = {}", r.value());
    }
}

#[test]
fn identity_weight_is_zero_with_lifted_witness() {
    let ns = FreeSet::replacement_channels(2, 2).unwrap();
    let r = weight(&ch(Channel::identity(2)), &ns).unwrap();
    assert!(certified(&r).abs() < 1e-8);
    let ppt = FreeSet::ppt_channels(2, 2).unwrap();
    let r = weight(&ch(Channel::identity(2)), &ppt).unwrap();
    assert!(certified(&r).abs() < 1e-8);
}

#[test]
fn noisy_t_state_weight_exceeds_smallest_eigenvalue() {
    let stab1 = FreeSet::stab_states(1).unwrap();
    for &p in &[0.1, 0.4, 0.7, 0.95] {
        let rho = depolarized(p, &stab::t_state());
        let w = certified(&weight(&Object::State(rho), &stab1).unwrap());
        assert!(w > p / 2.0 + 1e-6, "W = {w}, p = {p}");
        assert!(w <= 1.0 + 1e-8);
    }
}

#[test]
fn fidelity_values() {
    let stab1 = FreeSet::stab_states(1).unwrap();
    let f = free_fidelity(&state(&stab::t_state()), &stab1).unwrap().value();
    assert!((f - (2.0 + 2f64.sqrt()) / 4.0).abs() < 1e-12);
    let ppt = FreeSet::ppt_channels(2, 2).unwrap();
    let f = free_fidelity(&ch(Channel::identity(2)), &ppt).unwrap().value();
    assert!((f - 0.5).abs() < 1e-6);
    let ns = FreeSet::replacement_channels(2, 2).unwrap();
    let f = free_fidelity(&ch(Channel::identity(2)), &ns).unwrap().value();
    assert!((f - 0.25).abs() < 1e-6);
    let ns3 = FreeSet::replacement_channels(3, 3).unwrap();
    let f = free_fidelity(&ch(Channel::identity(3)), &ns3).unwrap().value();
    assert!((f - 1.0 / 9.0).abs() < 1e-6);
}

fn qubit_fidelity(rho: &Hermitian, r: [f64; 3]) -> f64 {
    let m = rho.matrix();
    let bloch = [2.0 * m[(0, 1)].re, -2.0 * m[(0, 1)].im, (m[(0, 0)] - m[(1, 1)]).re];
    let dot: f64 = bloch.iter().zip(&r).map(|(a, b)| a * b).sum();
    let det_rho = (1.0 - bloch.iter().map(|x| x * x).sum::<f64>()) / 4.0;
    let det_sigma = (1.0 - r.iter().map(|x| x * x).sum::<f64>()) / 4.0;
    (1.0 + dot) / 2.0 + 2.0 * (det_rho.max(0.0) * det_sigma.max(0.0)).sqrt()
}

#[test]
fn mixed_state_fidelity_matches_grid_search() {
    let stab1 = FreeSet::stab_states(1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..3 {
        let rho = random_density(2, 2, &mut rng);
        let r = free_fidelity(&Object::State(rho.clone()), &stab1).unwrap();
        let sdp = r.value();
        let sigma = r.decomposition.unwrap().element;
        assert!(stab1.contains(&sigma).unwrap());
        assert!((fidelity(rho.op(), &sigma).unwrap() - sdp).abs() < 1e-6);
        // Stabilizer qubit states are the Bloch octahedron |x| + |y| + |z| <= 1.
        let n: i32 = 120;
        let mut best: f64 = 0.0;
        for i in -n..=n {
            for j in -n..=n {
                let rem = n - i.abs() - j.abs();
                if rem < 0 {
                    continue;
                }
                for k in [-rem, rem] {
                    let v = [i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64];
                    best = best.max(qubit_fidelity(rho.op(), v));
                }
            }
        }
        assert!((qubit_fidelity(rho.op(), [0.0, 0.0, 0.0]) - fidelity(rho.op(), &Hermitian::identity(2).scale(0.5)).unwrap()).abs() < 1e-12);
        assert!(sdp >= best - 1e-7, "sdp {sdp} below grid {best}");
        assert!(sdp <= best + 1e-3, "sdp {sdp} far above grid {best}");
    }
}

#[test]
fn sep_formula() {
    assert!((sep_robustness_analytic(&Channel::identity(2)).unwrap() - 2.0).abs() < 1e-10);
    let half = DensityOperator::maximally_mixed(2);
    assert!((sep_robustness_analytic(&Channel::replacement(&half, 2)).unwrap() - 1.0).abs() < 1e-12);
    for &p in &[0.0, 0.3, 0.7, 1.0] {
        let r = sep_robustness_analytic(&Channel::depolarizing(p, 2).unwrap()).unwrap();
        assert!((r - (2.0 - 1.5 * p).max(1.0)).abs() < 1e-10);
    }
    assert!(matches!(
        sep_robustness_analytic(&Channel::identity(3)),
        Err(MeasureError::Unsupported(_))
    ));
}

#[test]
fn injection_values() {
    let opts = MeasureOptions::default();
    let t = injection_reduction(&t_gate(), &opts).unwrap();
    assert!((t.fidelity.value() - (2.0 + 2f64.sqrt()) / 4.0).abs() < 1e-12);
    assert!((certified(&t.robustness) - (4.0 - 2.0 * 2f64.sqrt())).abs() < 1e-6);
    let id = injection_reduction(&CMatrix::identity(4), &opts).unwrap();
    for r in [&id.robustness, &id.weight, &id.fidelity] {
        assert!((r.value() - 1.0).abs() < 1e-7);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = CMatrix::from_real(2, 2, &[s, s, s, -s]).unwrap();
    assert!(matches!(injection_reduction(&h, &opts), Err(MeasureError::Unsupported(_))));
    let ccz = injection_reduction(&ccz_gate(), &opts).unwrap();
    assert!((ccz.fidelity.value() - 9.0 / 16.0).abs() < 1e-12);
}

#[test]
fn injection_matches_channel_level_measures() {
    let csp = FreeSet::csp_channels(1, 1).unwrap();
    let gate = ch(Channel::unitary(&t_gate()).unwrap());
    let inj = injection_reduction(&t_gate(), &MeasureOptions::default()).unwrap();
    let r = certified(&robustness(&gate, &csp).unwrap());
    let w = certified(&weight(&gate, &csp).unwrap());
    let f = free_fidelity(&gate, &csp).unwrap().value();
    assert!((r - inj.robustness.value()).abs() < 1e-6, "{r} vs {}", inj.robustness.value());
    assert!((w - inj.weight.value()).abs() < 1e-6);
    assert!((f - inj.fidelity.value()).abs() < 1e-6);
}

#[test]
fn replacement_lemma_equalities() {
    let csp = FreeSet::csp_channels(1, 1).unwrap();
    let stab1 = FreeSet::stab_states(1).unwrap();
    let ns = FreeSet::replacement_channels(2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for rank in [1, 2, 2] {
        let omega = random_density(2, rank, &mut rng);
        let chan = ch(Channel::replacement(&omega, 2));
        let st = Object::State(omega.clone());
        let rc = certified(&robustness(&chan, &csp).unwrap());
        let rs = certified(&robustness(&st, &stab1).unwrap());
        assert!((rc - rs).abs() < 1e-6, "R: channel {rc}, state {rs}");
        let wc = certified(&weight(&chan, &csp).unwrap());
        let ws = certified(&weight(&st, &stab1).unwrap());
        assert!((wc - ws).abs() < 1e-6, "W: channel {wc}, state {ws}");
        // Every state is free against the full state space.
        assert!((certified(&robustness(&chan, &ns).unwrap()) - 1.0).abs() < 1e-6);
    }
}

#[test]
fn infinite_robustness_is_tagged() {
    let fs = FreeSet::diag_states(&[vec![c(1.0, 0.0), c(0.0, 0.0)]]).unwrap();
    let r = robustness(&state(&[c(0.0, 0.0), c(1.0, 0.0)]), &fs).unwrap();
    assert!(r.value.is_infinite());
    assert!(r.diagnostics.certificate.is_some());
}

#[test]
fn coherence_weight() {
    let fs = FreeSet::incoherent_states(3).unwrap();
    // |psi> = (|0> + |1>)/sqrt2 mixed equally with |2><2|.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let psi = Hermitian::projector(&[c(s, 0.0), c(s, 0.0), c(0.0, 0.0)]);
    let rho = &psi.scale(0.5) + &Hermitian::from_real_diag(&[0.0, 0.0, 0.5]);
    let w = certified(&weight(&Object::State(DensityOperator::from_hermitian(rho).unwrap()), &fs).unwrap());
    assert!((w - 0.5).abs() < 1e-6);
}

#[test]
fn space_mismatch_is_an_error() {
    let fs = FreeSet::stab_states(1).unwrap();
    assert!(matches!(
        robustness(&ch(Channel::identity(2)), &fs),
        Err(MeasureError::SpaceMismatch { .. })
    ));
}

#[test]
fn singular_product_weight_is_certified_on_its_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let e = Channel::random(2, 2, 3, &mut rng);
        let f = Channel::random(2, 2, 3, &mut rng);
        let ef = ch(e.tensor(&f));
        for fs in [FreeSet::replacement_channels(4, 4).unwrap(), FreeSet::ppt_channels(4, 4).unwrap()] {
            let w = certified(&weight(&ef, &fs).unwrap());
            assert!((-1e-9..=1.0).contains(&w));
        }
    }
}

/// `min Tr S` such that `psi_R (x) S >= (id (x) E)(psi)`.
fn replacement_image_robustness(e: &Channel, psi: &[C64]) -> f64 {
    let d = e.d_in();
    let rho_in = Hermitian::projector(psi);
    let out = Channel::identity(d).tensor(e).apply(&rho_in).unwrap();
    let psi_r = rho_in.partial_trace(&[d, d], &[0]).unwrap();
    let mut m = Model::new();
    let (s, _) = m.psd(e.d_out());
    m.add_psd(&s.kron_left(&psi_r).sub(&MatExpr::constant(&out)));
    m.minimize(&s.trace());
    m.solve(&SolverConfig::default()).unwrap().value
}

#[test]
fn minimax_lower_bound() {
    let ns = FreeSet::replacement_channels(2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..4 {
        let e = Channel::random(2, 2, 2, &mut rng);
        let r = certified(&robustness(&ch(e.clone()), &ns).unwrap());
        for _ in 0..5 {
            let psi = random_pure(4, &mut rng);
            let rs = replacement_image_robustness(&e, &psi);
            assert!(rs <= r + 1e-6, "state-level {rs} above channel {r}");
        }
    }
}

fn quick() -> MeasureOptions {
    MeasureOptions {
        verify_samples: 100,
        ..MeasureOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sandwich(seed in any::<u64>(), rank in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = ch(Channel::random(2, 2, rank, &mut rng));
        for fs in [FreeSet::replacement_channels(2, 2).unwrap(), FreeSet::ppt_channels(2, 2).unwrap()] {
            let r = distill_core::measures::robustness_with(&e, &fs, &quick()).unwrap();
            let w = distill_core::measures::weight_with(&e, &fs, &quick()).unwrap();
            prop_assert!(certified(&r) >= 1.0 - 1e-7);
            prop_assert!(certified(&w) <= 1.0 + 1e-7 && w.value() >= -1e-8);
        }
    }

    #[test]
    fn multiplicativity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = Channel::random(2, 2, 4, &mut rng);
        let f = Channel::random(2, 2, 4, &mut rng);
        let ef = ch(e.tensor(&f));
        let opts = quick();
        let sets = [
            (FreeSet::replacement_channels(2, 2).unwrap(), FreeSet::replacement_channels(4, 4).unwrap()),
            (FreeSet::ppt_channels(2, 2).unwrap(), FreeSet::ppt_channels(4, 4).unwrap()),
        ];
        for (small, big) in &sets {
            let re = distill_core::measures::robustness_with(&ch(e.clone()), small, &opts).unwrap().value();
            let rf = distill_core::measures::robustness_with(&ch(f.clone()), small, &opts).unwrap().value();
            let ref_ = distill_core::measures::robustness_with(&ef, big, &opts).unwrap().value();
            prop_assert!(ref_ <= re * rf * (1.0 + 1e-6), "{} > {} * {}", ref_, re, rf);
            let we = distill_core::measures::weight_with(&ch(e.clone()), small, &opts).unwrap().value();
            let wf = distill_core::measures::weight_with(&ch(f.clone()), small, &opts).unwrap().value();
            let wef = distill_core::measures::weight_with(&ef, big, &opts).unwrap().value();
            prop_assert!(wef >= we * wf * (1.0 - 1e-6) - 1e-9, "{} < {} * {}", wef, we, wf);
        }
    }
}
