use distill_core::channels::Channel;
use distill_core::qla::{CMatrix, DensityOperator, Hermitian, C64};
use distill_core::theories::{FreeSet, ObjectSpace, TheoryError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn t_gate() -> CMatrix {
    let w = std::f64::consts::FRAC_PI_4;
    CMatrix::diag(&[c(1.0, 0.0), c(w.cos(), w.sin())])
}

fn hadamard() -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_real(2, 2, &[s, s, s, -s]).unwrap()
}

fn midpoint(a: &Hermitian, b: &Hermitian) -> Hermitian {
    (a + b).scale(0.5)
}

#[test]
fn replacement_membership() {
    let fs = FreeSet::replacement_channels(2, 2).unwrap();
    assert!(!fs.contains(Channel::identity(2).choi()).unwrap());
    assert!(fs.contains(Channel::depolarizing(1.0, 2).unwrap().choi()).unwrap());
    let sigma = DensityOperator::pure(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
    assert!(fs.contains(Channel::replacement(&sigma, 2).choi()).unwrap());
    assert!(!fs.contains(Channel::depolarizing(0.5, 2).unwrap().choi()).unwrap());
}

#[test]
fn ppt_membership() {
    let fs = FreeSet::ppt_channels(2, 2).unwrap();
    let sigma = DensityOperator::pure(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
    assert!(fs.contains(Channel::replacement(&sigma, 2).choi()).unwrap());
    assert!(!fs.contains(Channel::identity(2).choi()).unwrap());
    // Isotropic Choi (1-p) Phi + p I/2: the partial transpose has smallest eigenvalue p/2 - (1-p).
    for &(p, inside) in &[(0.5, false), (2.0 / 3.0, true), (0.7, true), (1.0, true)] {
        let j = Channel::depolarizing(p, 2).unwrap().choi().clone();
        let pt_min = j.partial_transpose(&[2, 2], &[1]).unwrap().min_eigenvalue().unwrap();
        assert!((pt_min - (p / 2.0 - (1.0 - p))).abs() < 1e-12);
        assert_eq!(fs.contains(&j).unwrap(), inside, "p = {p}");
    }
}

#[test]
fn ppt_transpose_side_is_irrelevant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let e = Channel::random(2, 3, 2, &mut rng);
        let a = e.choi().partial_transpose(&[2, 3], &[0]).unwrap().eigenvalues().unwrap();
        let b = e.choi().partial_transpose(&[2, 3], &[1]).unwrap().eigenvalues().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn csp_membership() {
    let fs = FreeSet::csp_channels(1, 1).unwrap();
    assert_eq!(fs.vertices().unwrap().len(), 60);
    assert!(fs.contains(Channel::unitary(&hadamard()).unwrap().choi()).unwrap());
    assert!(!fs.contains(Channel::unitary(&t_gate()).unwrap().choi()).unwrap());
    assert!(fs.contains(Channel::dephasing(0.5).unwrap().choi()).unwrap());
}

#[test]
fn csp_samples_are_channels() {
    let fs = FreeSet::csp_channels(1, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let j = fs.sample(&mut rng).unwrap();
        Channel::new(2, 2, j.clone()).unwrap();
        assert!(fs.contains(&j).unwrap());
    }
}

#[test]
fn qubit_budget() {
    assert!(matches!(FreeSet::csp_channels(2, 3), Err(TheoryError::QubitBudget(5))));
    assert!(matches!(FreeSet::stab_states(5), Err(TheoryError::QubitBudget(5))));
}

#[test]
fn state_polytopes() {
    let fs = FreeSet::incoherent_states(3).unwrap();
    assert_eq!(fs.vertices().unwrap().len(), 3);
    assert_eq!(fs.space, ObjectSpace::State { dim: 3 });
    let stab1 = FreeSet::stab_states(1).unwrap();
    assert_eq!(stab1.vertices().unwrap().len(), 6);
    assert!(stab1.contains(&Hermitian::identity(2).scale(0.5)).unwrap());
    let t = DensityOperator::pure(&distill_core::stab::t_state()).unwrap();
    assert!(!stab1.contains(t.op()).unwrap());
    let plus = DensityOperator::pure(&[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)].map(|a| a / 2f64.sqrt())).unwrap();
    assert!(!fs.contains(plus.op()).unwrap());
    assert!(fs.contains(&Hermitian::from_real_diag(&[0.2, 0.3, 0.5])).unwrap());
}

#[test]
fn dimension_checks() {
    let fs = FreeSet::stab_states(1).unwrap();
    assert!(matches!(fs.contains(&Hermitian::identity(3)), Err(TheoryError::Dimension(_))));
}

#[test]
fn membership_is_convex_on_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sets = [
        FreeSet::replacement_channels(2, 2).unwrap(),
        FreeSet::ppt_channels(2, 2).unwrap(),
        FreeSet::csp_channels(1, 1).unwrap(),
        FreeSet::stab_states(2).unwrap(),
    ];
    for fs in &sets {
        for _ in 0..5 {
            let a = fs.sample(&mut rng).unwrap();
            let b = fs.sample(&mut rng).unwrap();
            assert!(fs.contains(&a).unwrap(), "{}", fs.name);
            assert!(fs.contains(&b).unwrap(), "{}", fs.name);
            assert!(fs.contains(&midpoint(&a, &b)).unwrap(), "{}", fs.name);
        }
    }
}

#[test]
fn support_function_matches_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sets = [
        FreeSet::replacement_channels(2, 2).unwrap(),
        FreeSet::ppt_channels(2, 2).unwrap(),
        FreeSet::csp_channels(1, 1).unwrap(),
    ];
    for fs in &sets {
        let x = distill_core::qla::random_hermitian(4, &mut rng);
        let (max, arg) = fs.support_function(&x, true).unwrap();
        let (min, _) = fs.support_function(&x, false).unwrap();
        assert!((arg.inner(&x) - max).abs() < 1e-6, "{}", fs.name);
        assert!(fs.contains(&arg).unwrap(), "{}", fs.name);
        for _ in 0..50 {
            let s = fs.sample(&mut rng).unwrap().inner(&x);
            assert!(s <= max + 1e-6 && s >= min - 1e-6, "{}", fs.name);
        }
    }
}
