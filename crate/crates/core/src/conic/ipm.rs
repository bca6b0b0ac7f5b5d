//! Infeasible primal-dual interior-point method (HKM direction, Mehrotra
//! predictor-corrector) for the reduced problem
//!
//! ```text
//! minimize c^T z  s.t.  S_b = F0_b + sum z_j F_bj >= 0,  g + G z >= 0,  A z = b
//! ```
//!
//! with dual variables `Z_b >= 0`, `w >= 0` and free `y` satisfying
//! `c = sum_b F_b^*(Z_b) + G^T w + A^T y`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::presolve::{CoreOutcome, Problem};
use super::{CMat, SolveStatus, SolverConfig};

const CZERO: Complex64 = Complex64::new(0.0, 0.0);

struct State {
    z: Vec<f64>,
    y: Vec<f64>,
    s_blocks: Vec<CMat>,
    z_blocks: Vec<CMat>,
    s_lp: Vec<f64>,
    w_lp: Vec<f64>,
}

struct Direction {
    dz: Vec<f64>,
    dy: Vec<f64>,
    ds_blocks: Vec<CMat>,
    dz_blocks: Vec<CMat>,
    ds_lp: Vec<f64>,
    dw_lp: Vec<f64>,
}

/// Factorized Newton system.
struct Kkt {
    chol: Option<Cholesky<f64, nalgebra::Dyn>>,
    /// Fallback LU of the full KKT matrix.
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    /// Cholesky of the Schur complement `A M^{-1} A^T`.
    schur: Option<Cholesky<f64, nalgebra::Dyn>>,
    /// Unregularized Schur matrix, used for iterative refinement.
    m: DMatrix<f64>,
    n: usize,
}

fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn inner_re(a: &CMat, b: &CMat) -> f64 {
    // Re Tr(A B) for Hermitian A, B.
    let d = a.nrows();
    let mut s = 0.0;
    for r in 0..d {
        for c in 0..d {
            s += (a[(r, c)] * b[(c, r)]).re;
        }
    }
    s
}

/// Cholesky factorization of a Hermitian matrix, `None` unless positive definite.
/// The complex factorization takes square roots of arbitrary pivots, so the
/// pivots are checked explicitly.
fn cholesky_pd(m: CMat) -> Option<Cholesky<Complex64, nalgebra::Dyn>> {
    let c = Cholesky::new(m)?;
    let l = c.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-12 * d.re
    });
    ok.then_some(c)
}

fn frob(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn identity(d: usize, scale: f64) -> CMat {
    CMat::from_diagonal_element(d, d, Complex64::new(scale, 0.0))
}

/// `F_j^*(W) = Re Tr(F_j W)` for every term of block `b`, accumulated into `out`.
fn adjoint_into(p: &Problem, b: usize, w: &CMat, out: &mut [f64], sign: f64) {
    for (j, ent) in &p.blocks[b].terms {
        let mut s = 0.0;
        for &(r, c, v) in ent {
            s += (v * w[(c, r)]).re;
        }
        out[*j] += sign * s;
    }
}

fn linear_part(p: &Problem, b: usize, dz: &[f64]) -> CMat {
    let blk = &p.blocks[b];
    let mut m = CMat::zeros(blk.dim, blk.dim);
    for (j, ent) in &blk.terms {
        let s = dz[*j];
        if s == 0.0 {
            continue;
        }
        for &(r, c, v) in ent {
            m[(r, c)] += v * s;
        }
    }
    m
}

fn lp_linear(p: &Problem, dz: &[f64]) -> Vec<f64> {
    p.lp_rows
        .iter()
        .map(|row| row.iter().map(|&(j, a)| a * dz[j]).sum())
        .collect()
}

/// Largest step in `[0, cap]` keeping `x + a dx` positive definite.
fn max_step_psd(x: &CMat, dx: &CMat, cap: f64) -> f64 {
    let chol = match cholesky_pd(hermitize(x)) {
        Some(c) => c,
        None => return 0.0,
    };
    let l = chol.l();
    let x1 = match l.solve_lower_triangular(dx) {
        Some(m) => m,
        None => return 0.0,
    };
    let x2 = match l.solve_lower_triangular(&x1.adjoint()) {
        Some(m) => m,
        None => return 0.0,
    };
    let ev = SymmetricEigen::new(hermitize(&x2)).eigenvalues;
    let lo = ev.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if lo >= 0.0 {
        cap
    } else {
        (-1.0 / lo).min(cap)
    }
}

fn max_step_lp(x: &[f64], dx: &[f64], cap: f64) -> f64 {
    let mut a = cap;
    for (xi, di) in x.iter().zip(dx) {
        if *di < 0.0 {
            a = a.min(-xi / di);
        }
    }
    a
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Iterations without a 30% drop of the merit function, once near optimal,
/// before stopping at the best iterate.
const STAGNATION_LIMIT: usize = 10;

/// Largest merit (relative infeasibility and gap) at which a best iterate is
/// reported optimal when the tolerances were not reached.
const ACCEPT_MERIT: f64 = 1e-7;

fn merit_near_optimal<T>(best: &Option<(f64, T)>) -> bool {
    best.as_ref().is_some_and(|(bm, _)| *bm <= 1e-6)
}

pub(crate) fn run(p: &Problem, cfg: &SolverConfig) -> CoreOutcome {
    let nb = p.blocks.len();
    let m_eq = p.num_eq();
    let nu: f64 = p.blocks.iter().map(|b| b.dim as f64).sum::<f64>() + p.lp_rows.len() as f64;

    if nu == 0.0 {
        return trivial_outcome(p, cfg);
    }

    // Data scales for relative residuals.
    let data_norm = 1.0
        + p.blocks.iter().map(|b| frob(&b.f0)).fold(0.0, f64::max)
        + norm(&p.lp_g)
        + p.eq_b.norm();
    let c_norm = 1.0 + norm(&p.c);

    // Starting point.
    let mut st = initial_state(p);

    let mut best: Option<(f64, State)> = None;
    let mut best_iteration = 0;
    let mut progress_mark = f64::INFINITY;
    let mut stalls = 0;
    let mut iterations = 0;
    let mut status = SolveStatus::NumericalFailure;

    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        // Residuals.
        let rp_blocks: Vec<CMat> = (0..nb).map(|b| p.block_value(b, &st.z) - &st.s_blocks[b]).collect();
        let rp_lp: Vec<f64> = p.lp_value(&st.z).iter().zip(&st.s_lp).map(|(v, s)| v - s).collect();
        let rp_eq: Vec<f64> = if m_eq > 0 {
            let az = &p.eq_a * DVector::from_column_slice(&st.z);
            (0..m_eq).map(|i| p.eq_b[i] - az[i]).collect()
        } else {
            Vec::new()
        };
        let rd = dual_residual(p, &st);

        let pobj: f64 = p.c.iter().zip(&st.z).map(|(c, z)| c * z).sum();
        let dobj = dual_objective(p, &st);
        let comp: f64 = (0..nb).map(|b| inner_re(&st.s_blocks[b], &st.z_blocks[b])).sum::<f64>()
            + st.s_lp.iter().zip(&st.w_lp).map(|(s, w)| s * w).sum::<f64>();
        let mu = comp / nu;

        let pinf = (rp_blocks.iter().map(|m| frob(m).powi(2)).sum::<f64>()
            + norm(&rp_lp).powi(2)
            + norm(&rp_eq).powi(2))
        .sqrt()
            / data_norm;
        let dinf = norm(&rd) / c_norm;
        let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

        let merit = pinf.max(dinf).max(relgap);
        if mu < 0.0 && merit_near_optimal(&best) {
            break;
        }
        if merit < progress_mark {
            progress_mark = 0.7 * merit;
            best_iteration = it;
        }
        if best.as_ref().is_none_or(|(bm, _)| merit < *bm) {
            best = Some((merit, clone_state(&st)));
        } else if merit_near_optimal(&best) && it >= best_iteration + STAGNATION_LIMIT {
            break;
        }

        if pinf <= cfg.feasibility_tol && dinf <= cfg.feasibility_tol && (relgap <= cfg.gap_tol || mu <= 1e-14) {
            status = SolveStatus::Optimal;
            break;
        }

        // Divergence checks.
        let znorm = norm(&st.z);
        let dnorm = (st.z_blocks.iter().map(|m| frob(m).powi(2)).sum::<f64>()
            + norm(&st.w_lp).powi(2)
            + norm(&st.y).powi(2))
        .sqrt();
        if dnorm > cfg.divergence_bound || znorm > cfg.divergence_bound {
            if let Some(out) = classify_divergence(p, &st, iterations) {
                return out;
            }
            break;
        }

        // Newton system.
        let kkt = match factorize(p, &st) {
            Some(k) => k,
            None => break,
        };
        let s_inv: Vec<CMat> = st
            .s_blocks
            .iter()
            .map(|s| cholesky_pd(hermitize(s)).map(|c| c.inverse()).unwrap_or_else(|| s.clone()))
            .collect();

        // Predictor.
        let t_zero_blocks: Vec<CMat> = p.blocks.iter().map(|b| CMat::zeros(b.dim, b.dim)).collect();
        let t_zero_lp = vec![0.0; p.lp_rows.len()];
        let pred = direction(p, &st, &kkt, &s_inv, &rp_blocks, &rp_lp, &rp_eq, &t_zero_blocks, &t_zero_lp);
        let (ap, ad) = step_lengths(&st, &pred);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let comp_aff: f64 = (0..nb)
            .map(|b| {
                inner_re(
                    &(&st.s_blocks[b] + &pred.ds_blocks[b] * Complex64::new(ap, 0.0)),
                    &(&st.z_blocks[b] + &pred.dz_blocks[b] * Complex64::new(ad, 0.0)),
                )
            })
            .sum::<f64>()
            + (0..p.lp_rows.len())
                .map(|i| (st.s_lp[i] + ap * pred.ds_lp[i]) * (st.w_lp[i] + ad * pred.dw_lp[i]))
                .sum::<f64>();
        let mu_aff = (comp_aff / nu).max(0.0);
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).clamp(0.0, 1.0) } else { 0.0 };
        // Keep some centering while far from feasibility.
        let sigma = if pinf.max(dinf) > 1e-2 { sigma.max(0.1) } else { sigma };

        // Corrector.
        let t_blocks: Vec<CMat> = (0..nb)
            .map(|b| identity(p.blocks[b].dim, sigma * mu) - &pred.ds_blocks[b] * &pred.dz_blocks[b])
            .collect();
        let t_lp: Vec<f64> = (0..p.lp_rows.len())
            .map(|i| sigma * mu - pred.ds_lp[i] * pred.dw_lp[i])
            .collect();
        let corr = direction(p, &st, &kkt, &s_inv, &rp_blocks, &rp_lp, &rp_eq, &t_blocks, &t_lp);
        let (ap, ad) = step_lengths(&st, &corr);
        let tau = cfg.step_fraction.max(0.9);
        let ap = (tau * ap).min(1.0);
        let ad = (tau * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
        apply(&mut st, &corr, ap, ad);
    }

    if status != SolveStatus::Optimal {
        // Accept a near-optimal best iterate at the reporting tolerance.
        if let Some((merit, bst)) = best {
            let good = merit <= ACCEPT_MERIT;
            st = bst;
            if good {
                status = SolveStatus::Optimal;
            }
        }
    }
    CoreOutcome {
        status,
        z: st.z,
        block_duals: st.z_blocks.iter().map(hermitize).collect(),
        lp_duals: st.w_lp,
        eq_duals: st.y,
        iterations,
        ray_z: None,
        ray_dual: None,
    }
}

/// `c - F^*(Z) - G^T w - A^T y`.
fn dual_residual(p: &Problem, st: &State) -> Vec<f64> {
    let mut rd = p.c.clone();
    for b in 0..p.blocks.len() {
        adjoint_into(p, b, &st.z_blocks[b], &mut rd, -1.0);
    }
    for (i, row) in p.lp_rows.iter().enumerate() {
        for &(j, a) in row {
            rd[j] -= a * st.w_lp[i];
        }
    }
    if p.num_eq() > 0 {
        let aty = p.eq_a.transpose() * DVector::from_column_slice(&st.y);
        for j in 0..p.n {
            rd[j] -= aty[j];
        }
    }
    rd
}

fn clone_state(st: &State) -> State {
    State {
        z: st.z.clone(),
        y: st.y.clone(),
        s_blocks: st.s_blocks.clone(),
        z_blocks: st.z_blocks.clone(),
        s_lp: st.s_lp.clone(),
        w_lp: st.w_lp.clone(),
    }
}

fn dual_objective(p: &Problem, st: &State) -> f64 {
    let mut d = 0.0;
    for (b, blk) in p.blocks.iter().enumerate() {
        d -= inner_re(&blk.f0, &st.z_blocks[b]);
    }
    for (g, w) in p.lp_g.iter().zip(&st.w_lp) {
        d -= g * w;
    }
    for (bi, yi) in p.eq_b.iter().zip(&st.y) {
        d += bi * yi;
    }
    d
}

/// No cone constraints: minimize c^T z over the equality set.
fn trivial_outcome(p: &Problem, _cfg: &SolverConfig) -> CoreOutcome {
    let n = p.n;
    let m = p.num_eq();
    let c = DVector::from_column_slice(&p.c);
    let (z, y, status, ray) = if m == 0 {
        if c.norm() == 0.0 {
            (vec![0.0; n], Vec::new(), SolveStatus::Optimal, None)
        } else {
            let d: Vec<f64> = p.c.iter().map(|v| -v).collect();
            (vec![0.0; n], Vec::new(), SolveStatus::Unbounded, Some(d))
        }
    } else {
        let at = p.eq_a.transpose();
        let y = super::presolve::least_squares(&at, &c);
        let resid = &c - &at * &y;
        let z0 = super::presolve::least_squares(&p.eq_a, &p.eq_b);
        if resid.norm() > 1e-9 * (1.0 + c.norm()) {
            (z0.iter().copied().collect(), y.iter().copied().collect(), SolveStatus::Unbounded, Some(resid.iter().map(|v| -v).collect()))
        } else {
            (z0.iter().copied().collect(), y.iter().copied().collect(), SolveStatus::Optimal, None)
        }
    };
    CoreOutcome {
        status,
        z,
        block_duals: Vec::new(),
        lp_duals: Vec::new(),
        eq_duals: y,
        iterations: 0,
        ray_z: ray,
        ray_dual: None,
    }
}

fn initial_state(p: &Problem) -> State {
    let n = p.n;
    let mut s_blocks = Vec::new();
    let mut z_blocks = Vec::new();
    for blk in &p.blocks {
        let d = blk.dim as f64;
        let mut fmax: f64 = 0.0;
        let mut ratio: f64 = 0.0;
        for (j, ent) in &blk.terms {
            let fn_ = ent.iter().map(|(_, _, v)| v.norm_sqr()).sum::<f64>().sqrt();
            fmax = fmax.max(fn_);
            ratio = ratio.max((1.0 + p.c[*j].abs()) / (1.0 + fn_));
        }
        let xi = 10f64.max(d.sqrt()).max(d * ratio);
        let eta = 10f64.max(d.sqrt()).max(frob(&blk.f0)).max(fmax);
        s_blocks.push(identity(blk.dim, eta));
        z_blocks.push(identity(blk.dim, xi));
    }
    let mut s_lp = Vec::with_capacity(p.lp_rows.len());
    let mut w_lp = Vec::with_capacity(p.lp_rows.len());
    for (row, g) in p.lp_rows.iter().zip(&p.lp_g) {
        let amax = row.iter().fold(0.0f64, |m, (_, a)| m.max(a.abs()));
        let ratio = row.iter().fold(0.0f64, |m, (j, a)| m.max((1.0 + p.c[*j].abs()) / (1.0 + a.abs())));
        s_lp.push(10f64.max(g.abs()).max(amax));
        w_lp.push(10f64.max(ratio));
    }
    State {
        z: vec![0.0; n],
        y: vec![0.0; p.num_eq()],
        s_blocks,
        z_blocks,
        s_lp,
        w_lp,
    }
}

/// Schur matrix `M_ij = sum_b Re Tr(F_i S^{-1} F_j Z) + sum_r G_ri G_rj w_r / s_r`.
fn schur_matrix(p: &Problem, st: &State) -> Option<DMatrix<f64>> {
    let n = p.n;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (b, blk) in p.blocks.iter().enumerate() {
        let s_inv = cholesky_pd(hermitize(&st.s_blocks[b]))?.inverse();
        let z = &st.z_blocks[b];
        let d = blk.dim;
        let mut g = CMat::zeros(d, d);
        for (jj, (j, ent_j)) in blk.terms.iter().enumerate() {
            // G = S^{-1} F_j Z
            if ent_j.len() <= d {
                g.fill(CZERO);
                for &(pp, q, v) in ent_j {
                    for a in 0..d {
                        let sa = s_inv[(a, pp)] * v;
                        if sa == CZERO {
                            continue;
                        }
                        for bb in 0..d {
                            g[(a, bb)] += sa * z[(q, bb)];
                        }
                    }
                }
            } else {
                let mut f = CMat::zeros(d, d);
                for &(r, c, v) in ent_j {
                    f[(r, c)] += v;
                }
                g = &s_inv * (f * z);
            }
            for (i, ent_i) in blk.terms.iter().take(jj + 1) {
                let mut s = 0.0;
                for &(a, bb, v) in ent_i {
                    s += (v * g[(bb, a)]).re;
                }
                m[(*i, *j)] += s;
                if i != j {
                    m[(*j, *i)] += s;
                }
            }
        }
    }
    for (r, row) in p.lp_rows.iter().enumerate() {
        let dr = st.w_lp[r] / st.s_lp[r];
        for &(j, a) in row {
            for &(k, bcoef) in row {
                m[(j, k)] += dr * a * bcoef;
            }
        }
    }
    // Symmetrize against rounding.
    let mt = m.transpose();
    m += mt;
    m *= 0.5;
    Some(m)
}

fn factorize(p: &Problem, st: &State) -> Option<Kkt> {
    let n = p.n;
    let m = schur_matrix(p, st)?;
    let meq = p.num_eq();
    let dmax = (0..n).map(|i| m[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-300);
    let mut chol = None;
    for reg in [0.0, 1e-14, 1e-12, 1e-10] {
        let mut mm = m.clone();
        if reg > 0.0 {
            for i in 0..n {
                mm[(i, i)] += reg * dmax;
            }
        }
        if let Some(c) = Cholesky::new(mm) {
            chol = Some(c);
            break;
        }
    }
    if let Some(c) = chol {
        if meq == 0 {
            return Some(Kkt { chol: Some(c), lu: None, schur: None, m, n });
        }
        // A M^{-1} A^T
        let minv_at = c.solve(&p.eq_a.transpose());
        let sc = &p.eq_a * &minv_at;
        let sc = (&sc + sc.transpose()) * 0.5;
        if let Some(s) = Cholesky::new(sc) {
            return Some(Kkt { chol: Some(c), lu: None, schur: Some(s), m, n });
        }
    }
    // Full KKT matrix [[M, -A^T], [A, 0]] by LU.
    let mut k = DMatrix::<f64>::zeros(n + meq, n + meq);
    k.view_mut((0, 0), (n, n)).copy_from(&m);
    if meq > 0 {
        k.view_mut((0, n), (n, meq)).copy_from(&(-p.eq_a.transpose()));
        k.view_mut((n, 0), (meq, n)).copy_from(&p.eq_a);
    }
    for i in 0..n {
        k[(i, i)] += 1e-13 * dmax;
    }
    let lu = k.lu();
    Some(Kkt { chol: None, lu: Some(lu), schur: None, m, n })
}

/// Solves `M dz - A^T dy = h`, `A dz = r` with iterative refinement.
fn solve_kkt(kkt: &Kkt, a: &DMatrix<f64>, h: &DVector<f64>, r: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let (mut dz, mut dy) = solve_kkt_once(kkt, a, h, r);
    let scale = h.amax().max(r.amax()).max(1e-300);
    for _ in 0..3 {
        let mut res_h = h - &kkt.m * &dz;
        if !dy.is_empty() {
            res_h += a.transpose() * &dy;
        }
        let res_r = if !r.is_empty() { r - a * &dz } else { DVector::zeros(0) };
        let res = res_h.amax().max(if !r.is_empty() { res_r.amax() } else { 0.0 });
        if res <= 1e-15 * scale {
            break;
        }
        let (cz, cy) = solve_kkt_once(kkt, a, &res_h, &res_r);
        dz += cz;
        if !dy.is_empty() {
            dy += cy;
        }
    }
    (dz, dy)
}

fn solve_kkt_once(kkt: &Kkt, a: &DMatrix<f64>, h: &DVector<f64>, r: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = kkt.n;
    if let Some(c) = &kkt.chol {
        let minv_h = c.solve(h);
        if let Some(s) = &kkt.schur {
            let rhs = r - a * &minv_h;
            let dy = s.solve(&rhs);
            let dz = c.solve(&(h + a.transpose() * &dy));
            return (dz, dy);
        }
        return (minv_h, DVector::zeros(0));
    }
    let lu = kkt.lu.as_ref().expect("one factorization exists");
    let mut rhs = DVector::<f64>::zeros(n + r.len());
    rhs.rows_mut(0, n).copy_from(h);
    rhs.rows_mut(n, r.len()).copy_from(r);
    let sol = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(n + r.len()));
    (sol.rows(0, n).into_owned(), sol.rows(n, r.len()).into_owned())
}

#[allow(clippy::too_many_arguments)]
fn direction(
    p: &Problem,
    st: &State,
    kkt: &Kkt,
    s_inv: &[CMat],
    rp_blocks: &[CMat],
    rp_lp: &[f64],
    rp_eq: &[f64],
    t_blocks: &[CMat],
    t_lp: &[f64],
) -> Direction {
    let n = p.n;
    let nb = p.blocks.len();
    // h = F^*(S^{-1}(T - Rp Z)) + G^T((T - w rp)/s) - c + A^T y
    let mut h = vec![0.0; n];
    let mut w_blocks = Vec::with_capacity(nb);
    for b in 0..nb {
        let w = &s_inv[b] * (&t_blocks[b] - &rp_blocks[b] * &st.z_blocks[b]);
        adjoint_into(p, b, &w, &mut h, 1.0);
        w_blocks.push(w);
    }
    for (i, row) in p.lp_rows.iter().enumerate() {
        let v = (t_lp[i] - st.w_lp[i] * rp_lp[i]) / st.s_lp[i];
        for &(j, a) in row {
            h[j] += a * v;
        }
    }
    for j in 0..n {
        h[j] -= p.c[j];
    }
    if p.num_eq() > 0 {
        let aty = p.eq_a.transpose() * DVector::from_column_slice(&st.y);
        for j in 0..n {
            h[j] += aty[j];
        }
    }
    let (dz, dy) = solve_kkt(
        kkt,
        &p.eq_a,
        &DVector::from_column_slice(&h),
        &DVector::from_column_slice(rp_eq),
    );
    let dz: Vec<f64> = dz.iter().copied().collect();
    let dy: Vec<f64> = dy.iter().copied().collect();
    let mut ds_blocks = Vec::with_capacity(nb);
    let mut dz_blocks = Vec::with_capacity(nb);
    for b in 0..nb {
        let ds = linear_part(p, b, &dz) + &rp_blocks[b];
        let ds = hermitize(&ds);
        let dzm = &s_inv[b] * (&t_blocks[b] - &ds * &st.z_blocks[b]);
        let dzm = hermitize(&dzm) - &st.z_blocks[b];
        ds_blocks.push(ds);
        dz_blocks.push(dzm);
    }
    let gdz = lp_linear(p, &dz);
    let ds_lp: Vec<f64> = gdz.iter().zip(rp_lp).map(|(a, b)| a + b).collect();
    let dw_lp: Vec<f64> = (0..p.lp_rows.len())
        .map(|i| (t_lp[i] - st.w_lp[i] * ds_lp[i]) / st.s_lp[i] - st.w_lp[i])
        .collect();
    Direction {
        dz,
        dy,
        ds_blocks,
        dz_blocks,
        ds_lp,
        dw_lp,
    }
}

/// Maximal primal and dual steps to the cone boundary (uncapped).
fn step_lengths(st: &State, d: &Direction) -> (f64, f64) {
    let big = 1e30;
    let mut ap: f64 = big;
    let mut ad: f64 = big;
    for b in 0..st.s_blocks.len() {
        ap = ap.min(max_step_psd(&st.s_blocks[b], &d.ds_blocks[b], big));
        ad = ad.min(max_step_psd(&st.z_blocks[b], &d.dz_blocks[b], big));
    }
    ap = ap.min(max_step_lp(&st.s_lp, &d.ds_lp, big));
    ad = ad.min(max_step_lp(&st.w_lp, &d.dw_lp, big));
    (ap, ad)
}

fn apply(st: &mut State, d: &Direction, ap: f64, ad: f64) {
    for (z, dz) in st.z.iter_mut().zip(&d.dz) {
        *z += ap * dz;
    }
    for (y, dy) in st.y.iter_mut().zip(&d.dy) {
        *y += ad * dy;
    }
    for b in 0..st.s_blocks.len() {
        st.s_blocks[b] = hermitize(&(&st.s_blocks[b] + &d.ds_blocks[b] * Complex64::new(ap, 0.0)));
        st.z_blocks[b] = hermitize(&(&st.z_blocks[b] + &d.dz_blocks[b] * Complex64::new(ad, 0.0)));
    }
    for (s, ds) in st.s_lp.iter_mut().zip(&d.ds_lp) {
        *s += ap * ds;
    }
    for (w, dw) in st.w_lp.iter_mut().zip(&d.dw_lp) {
        *w += ad * dw;
    }
}

/// Turns a diverging run into a certified infeasible/unbounded outcome when
/// the normalized iterate is a valid ray.
fn classify_divergence(p: &Problem, st: &State, iterations: usize) -> Option<CoreOutcome> {
    let n = p.n;
    let nb = p.blocks.len();
    // Dual ray.
    let dnorm = (st.z_blocks.iter().map(|m| frob(m).powi(2)).sum::<f64>()
        + norm(&st.w_lp).powi(2)
        + norm(&st.y).powi(2))
    .sqrt();
    if dnorm > 0.0 {
        let zb: Vec<CMat> = st.z_blocks.iter().map(|m| hermitize(m) / Complex64::new(dnorm, 0.0)).collect();
        let w: Vec<f64> = st.w_lp.iter().map(|v| v / dnorm).collect();
        let y: Vec<f64> = st.y.iter().map(|v| v / dnorm).collect();
        let mut r = vec![0.0; n];
        for b in 0..nb {
            adjoint_into(p, b, &zb[b], &mut r, 1.0);
        }
        for (i, row) in p.lp_rows.iter().enumerate() {
            for &(j, a) in row {
                r[j] += a * w[i];
            }
        }
        if p.num_eq() > 0 {
            let aty = p.eq_a.transpose() * DVector::from_column_slice(&y);
            for j in 0..n {
                r[j] += aty[j];
            }
        }
        let ray_state = State {
            z: vec![0.0; n],
            y: y.clone(),
            s_blocks: Vec::new(),
            z_blocks: zb.clone(),
            s_lp: Vec::new(),
            w_lp: w.clone(),
        };
        let gain = dual_objective(p, &ray_state);
        let psd_ok = zb.iter().all(|m| {
            SymmetricEigen::new(m.clone()).eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v)) >= -1e-8
        }) && w.iter().all(|v| *v >= -1e-8);
        if norm(&r) <= 1e-6 && gain > 1e-8 && psd_ok {
            return Some(CoreOutcome {
                status: SolveStatus::Infeasible,
                z: st.z.clone(),
                block_duals: Vec::new(),
                lp_duals: Vec::new(),
                eq_duals: Vec::new(),
                iterations,
                ray_z: None,
                ray_dual: Some((zb, w, y)),
            });
        }
    }
    // Primal ray.
    let znorm = norm(&st.z);
    if znorm > 0.0 {
        let d: Vec<f64> = st.z.iter().map(|v| v / znorm).collect();
        let cd: f64 = p.c.iter().zip(&d).map(|(a, b)| a * b).sum();
        let blocks_ok = (0..nb).all(|b| {
            let fd = hermitize(&linear_part(p, b, &d));
            SymmetricEigen::new(fd).eigenvalues.iter().fold(f64::INFINITY, |a, v| a.min(*v)) >= -1e-8
        });
        let lp_ok = lp_linear(p, &d).iter().all(|v| *v >= -1e-8);
        let eq_ok = p.num_eq() == 0 || (&p.eq_a * DVector::from_column_slice(&d)).amax() <= 1e-8;
        if cd < -1e-8 && blocks_ok && lp_ok && eq_ok {
            return Some(CoreOutcome {
                status: SolveStatus::Unbounded,
                z: st.z.clone(),
                block_duals: Vec::new(),
                lp_duals: Vec::new(),
                eq_duals: Vec::new(),
                iterations,
                ray_z: Some(d),
                ray_dual: None,
            });
        }
    }
    None
}
