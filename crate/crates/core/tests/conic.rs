use distill_core::conic::model::Model;
use distill_core::conic::{
    dump_program, solve, solve_ipm, solve_simplex, verify, ConicProgram, Lmi, Multiplier, SolveStatus, SolverConfig,
    SparseHermitian, VarSign,
};
use distill_core::qla::{random_hermitian, CMatrix, Hermitian, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn diag(values: &[f64]) -> SparseHermitian {
    SparseHermitian::from_entries(
        values.len(),
        values.iter().enumerate().map(|(i, &v)| (i, i, C64::new(v, 0.0))),
    )
}

fn eigenvalue_program(a: &Hermitian) -> ConicProgram {
    let d = a.dim();
    let mut p = ConicProgram::new(1);
    p.objective[0] = 1.0;
    let mut lmi = Lmi::new(d);
    lmi.constant = SparseHermitian::from_hermitian(&a.scale(-1.0));
    lmi.terms.push((0, SparseHermitian::identity(d)));
    p.add_lmi(lmi);
    p
}

fn bound_program() -> ConicProgram {
    let mut p = ConicProgram::new(1);
    p.objective[0] = 1.0;
    let mut lmi = Lmi::new(1);
    lmi.constant = diag(&[-3.0]);
    lmi.terms.push((0, diag(&[1.0])));
    p.add_lmi(lmi);
    p
}

fn cover_program() -> ConicProgram {
    let mut p = ConicProgram::new(2);
    p.objective = vec![1.0, 1.0];
    p.signs = vec![VarSign::NonNegative; 2];
    let mut lmi = Lmi::new(2);
    lmi.constant = diag(&[-0.5, -0.5]);
    lmi.terms.push((0, diag(&[1.0, 0.0])));
    lmi.terms.push((1, diag(&[0.0, 1.0])));
    p.add_lmi(lmi);
    p
}

#[test]
fn largest_eigenvalue_example() {
    let a = Hermitian::from_real_diag(&[1.0, 5.0, 2.0]);
    let p = eigenvalue_program(&a);
    for s in [solve(&p, &cfg()).unwrap(), solve_ipm(&p, &cfg()).unwrap()] {
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_value - 5.0).abs() < 1e-8, "{}", s.primal_value);
        assert!(verify(&p, &s, 1e-7).passed());
    }
}

#[test]
fn scalar_bound_example() {
    let p = bound_program();
    for s in [solve(&p, &cfg()).unwrap(), solve_ipm(&p, &cfg()).unwrap()] {
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_value - 3.0).abs() < 1e-8);
        assert!(verify(&p, &s, 1e-7).passed());
    }
}

#[test]
fn diagonal_cover_example() {
    let p = cover_program();
    for s in [solve(&p, &cfg()).unwrap(), solve_ipm(&p, &cfg()).unwrap()] {
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_value - 1.0).abs() < 1e-8);
        assert!((s.x[0] - 0.5).abs() < 1e-7 && (s.x[1] - 0.5).abs() < 1e-7);
        assert!(verify(&p, &s, 1e-7).passed());
    }
}

#[test]
fn verify_detects_primal_corruption() {
    let p = eigenvalue_program(&Hermitian::from_real_diag(&[1.0, 5.0, 2.0]));
    let mut s = solve(&p, &cfg()).unwrap();
    s.x[0] -= 1e-3;
    let r = verify(&p, &s, 1e-7);
    assert!(!r.passed());
    assert!(r.lmi_violation > 1e-4);
}

#[test]
fn verify_detects_dual_corruption() {
    let p = eigenvalue_program(&Hermitian::from_real_diag(&[1.0, 5.0, 2.0]));
    let mut s = solve(&p, &cfg()).unwrap();
    let Multiplier::Lmi(z) = &s.multipliers[0] else { panic!() };
    let bad = Hermitian::symmetrize(&(z.matrix() + &CMatrix::diag_real(&[-1e-2, 0.0, 0.0])));
    s.multipliers[0] = Multiplier::Lmi(bad);
    let r = verify(&p, &s, 1e-7);
    assert!(r.dual_violation >= 1e-2 - 1e-12);
    assert!(r.failures.iter().any(|f| f.contains("dual infeasibility")));
}

#[test]
fn infeasible_program_has_certificate() {
    // x >= 1 and x <= -1.
    let mut p = ConicProgram::new(1);
    p.objective[0] = 1.0;
    let mut lmi = Lmi::new(2);
    lmi.constant = diag(&[-1.0, -1.0]);
    lmi.terms.push((0, diag(&[1.0, -1.0])));
    p.add_lmi(lmi.clone());
    let s = solve(&p, &cfg()).unwrap();
    assert_eq!(s.status, SolveStatus::Infeasible);
    assert!(s.certificate.is_some());
    // Same program with an off-diagonal block forces the interior-point path.
    lmi.dim = 3;
    lmi.constant = SparseHermitian::from_entries(3, [(0, 0, C64::new(-1.0, 0.0)), (1, 1, C64::new(-1.0, 0.0)), (2, 2, C64::new(1.0, 0.0)), (0, 2, C64::new(0.0, 0.0))]);
    lmi.terms = vec![(0, SparseHermitian::from_entries(3, [(0, 0, C64::new(1.0, 0.0)), (1, 1, C64::new(-1.0, 0.0)), (1, 2, C64::new(1e-3, 0.0))]))];
    let mut q = ConicProgram::new(1);
    q.objective[0] = 1.0;
    q.add_lmi(lmi);
    let s = solve(&q, &cfg()).unwrap();
    assert_eq!(s.status, SolveStatus::Infeasible);
    assert!(s.certificate.is_some());
}

#[test]
fn unbounded_program_has_ray() {
    let mut p = ConicProgram::new(2);
    p.objective = vec![-1.0, 0.0];
    let mut lmi = Lmi::new(2);
    lmi.constant = SparseHermitian::identity(2);
    lmi.terms.push((0, SparseHermitian::from_entries(2, [(0, 0, C64::new(1.0, 0.0))])));
    lmi.terms.push((1, SparseHermitian::from_entries(2, [(0, 1, C64::new(1.0, 0.0))])));
    p.add_lmi(lmi);
    let s = solve(&p, &cfg()).unwrap();
    assert_eq!(s.status, SolveStatus::Unbounded, "{:?} after {} iterations", s.status, s.iterations);
    assert!(s.certificate.is_some());
}

#[test]
fn equality_constrained_trace_program() {
    // max <A, X> s.t. Tr X = 1, X >= 0 equals the top eigenvalue.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random_hermitian(4, &mut rng);
    let mut m = Model::new();
    let (x, _) = m.psd(4);
    m.add_eq(&x.trace(), 1.0);
    m.maximize(&x.inner(&a));
    let s = m.solve(&cfg()).unwrap();
    assert!(s.is_optimal());
    let top = a.max_eigenvalue().unwrap();
    assert!((s.value - top).abs() < 1e-8, "{} vs {}", s.value, top);
    assert!(verify(&s.program, &s.solution, 1e-7).passed());
}

#[test]
fn dump_has_one_line_per_block() {
    let p = cover_program();
    let text = dump_program(&p);
    let lmi_lines = text.lines().filter(|l| l.starts_with("lmi ")).count();
    assert_eq!(lmi_lines, 3);
    assert!(text.contains("5e-1,0e0"));
}

/// Random SDP `min c^T x  s.t. I + sum x_j G_j >= 0` with `c` chosen dual
/// feasible so the optimum is attained.
fn random_sdp(seed: u64, d: usize, n: usize) -> ConicProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z0 = {
        let g = random_hermitian(d, &mut rng);
        Hermitian::symmetrize(&(&g.matrix().matmul(g.matrix()) + &CMatrix::identity(d).scale_real(0.5)))
    };
    let mut p = ConicProgram::new(n);
    let mut lmi = Lmi::new(d);
    lmi.constant = SparseHermitian::identity(d);
    for j in 0..n {
        let g = random_hermitian(d, &mut rng);
        p.objective[j] = g.inner(&z0);
        lmi.terms.push((j, SparseHermitian::from_hermitian(&g)));
    }
    p.add_lmi(lmi);
    p
}

fn real_embedding(p: &ConicProgram) -> ConicProgram {
    let embed = |s: &SparseHermitian| {
        let d = s.dim();
        let m = s.to_dense();
        let e = CMatrix::from_fn(2 * d, 2 * d, |r, c| {
            let v = m[(r % d, c % d)];
            let x = match (r < d, c < d) {
                (true, true) | (false, false) => v.re,
                (true, false) => -v.im,
                (false, true) => v.im,
            };
            C64::new(x, 0.0)
        });
        SparseHermitian::from_dense(&e)
    };
    let mut q = p.clone();
    for c in q.constraints.iter_mut() {
        if let distill_core::conic::Constraint::Lmi(l) = c {
            l.dim *= 2;
            l.constant = embed(&l.constant);
            for (_, g) in l.terms.iter_mut() {
                *g = embed(g);
            }
        }
    }
    q
}

#[test]
fn weak_duality_and_certification_on_random_sdps() {
    for seed in 0..10 {
        let p = random_sdp(seed, 4, 6);
        let s = solve(&p, &cfg()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal, "seed {seed}");
        assert!(s.dual_value <= s.primal_value + 1e-9 * s.primal_value.abs().max(1.0));
        assert!(s.gap <= 1e-7);
        let r = verify(&p, &s, 1e-7);
        assert!(r.passed(), "seed {seed}: {:?}", r.failures);
    }
}

#[test]
fn real_embedding_matches_hermitian_path() {
    for seed in 20..26 {
        let p = random_sdp(seed, 3, 5);
        let a = solve(&p, &cfg()).unwrap();
        let b = solve(&real_embedding(&p), &cfg()).unwrap();
        assert!(a.is_optimal() && b.is_optimal());
        assert!((a.primal_value - b.primal_value).abs() < 1e-8, "{} vs {}", a.primal_value, b.primal_value);
    }
}

#[test]
fn scale_invariance() {
    for seed in 40..45 {
        let p = random_sdp(seed, 3, 4);
        let mut q = p.clone();
        q.objective.iter_mut().for_each(|c| *c *= 1e3);
        let a = solve(&p, &cfg()).unwrap();
        let b = solve(&q, &cfg()).unwrap();
        assert_eq!(a.status, b.status);
        let rel = (b.primal_value - 1e3 * a.primal_value).abs() / (1e3 * a.primal_value.abs()).max(1.0);
        assert!(rel < 1e-7, "seed {seed}: {rel}");
    }
}

fn random_lp(seed: u64, m: usize, n: usize) -> ConicProgram {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Feasible at x0 >= 0 and bounded because c = A^T y0 + s0 with y0, s0 >= 0.
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y0: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut p = ConicProgram::new(n);
    p.signs = vec![VarSign::NonNegative; n];
    for j in 0..n {
        p.objective[j] = (0..m).map(|i| a[i][j] * y0[i]).sum::<f64>() + rng.gen_range(0.0..1.0);
    }
    let mut lmi = Lmi::new(m);
    let slack: Vec<f64> = (0..m).map(|i| -(0..n).map(|j| a[i][j] * x0[j]).sum::<f64>() + rng.gen_range(0.0..0.5)).collect();
    lmi.constant = diag(&slack);
    for j in 0..n {
        lmi.terms.push((j, diag(&(0..m).map(|i| a[i][j]).collect::<Vec<_>>())));
    }
    p.add_lmi(lmi);
    p.add_equality((0..n).map(|j| (j, 1.0)).collect(), x0.iter().sum());
    p
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]
    #[test]
    fn lp_interior_point_matches_simplex(seed in 0u64..10_000, m in 2usize..6, n in 2usize..8) {
        let p = random_lp(seed, m, n);
        let a = solve_simplex(&p).unwrap();
        let b = solve_ipm(&p, &cfg()).unwrap();
        prop_assert_eq!(a.status, SolveStatus::Optimal);
        prop_assert_eq!(b.status, SolveStatus::Optimal);
        prop_assert!((a.primal_value - b.primal_value).abs() <= 1e-8 * a.primal_value.abs().max(1.0),
            "simplex {} ipm {}", a.primal_value, b.primal_value);
        prop_assert!(verify(&p, &a, 1e-7).passed());
        prop_assert!(verify(&p, &b, 1e-7).passed());
    }
}
