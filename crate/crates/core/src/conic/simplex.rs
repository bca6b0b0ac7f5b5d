//! Dense two-phase tableau simplex for programs whose blocks are diagonal.

use super::presolve::dual_objective;
use super::{Certificate, ConicProgram, ConicSolution, Constraint, Multiplier, SolveStatus, VarSign};
use crate::qla::Hermitian;

const PIV_TOL: f64 = 1e-11;

/// Standard form `min c^T u  s.t.  A u = b, u >= 0`.
pub(crate) struct StandardLp {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

pub(crate) enum LpOutcome {
    Optimal { u: Vec<f64>, y: Vec<f64>, iterations: usize },
    Infeasible { farkas: Vec<f64>, iterations: usize },
    Unbounded { direction: Vec<f64>, u: Vec<f64>, iterations: usize },
}

struct Tableau {
    /// `m` constraint rows then the objective row; last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    m: usize,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.t[row][col];
        let width = self.cols + 1;
        for k in 0..width {
            self.t[row][k] /= piv;
        }
        let prow = self.t[row].clone();
        for (r, line) in self.t.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for k in 0..width {
                    line[k] -= f * prow[k];
                }
                line[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations on the objective row; columns with
    /// `allowed[col] == false` never enter. Returns `Err(col)` when column
    /// `col` proves unboundedness.
    fn optimize(&mut self, allowed: &[bool], iterations: &mut usize) -> Result<(), usize> {
        let obj = self.m;
        let mut degenerate_run = 0usize;
        loop {
            let bland = degenerate_run > 50;
            let mut enter = None;
            let mut best = -PIV_TOL;
            for col in 0..self.cols {
                if !allowed[col] {
                    continue;
                }
                let rc = self.t[obj][col];
                if rc < best {
                    enter = Some(col);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(col) = enter else { return Ok(()) };
            let mut leave = None;
            let mut ratio = f64::INFINITY;
            for r in 0..self.m {
                let a = self.t[r][col];
                if a > PIV_TOL {
                    let q = self.t[r][self.cols] / a;
                    let better = q < ratio - 1e-12
                        || (q <= ratio + 1e-12 && leave.is_some_and(|l: usize| self.basis[r] < self.basis[l]));
                    if better {
                        ratio = q;
                        leave = Some(r);
                    }
                }
            }
            let Some(row) = leave else { return Err(col) };
            if ratio.abs() < 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, col);
            *iterations += 1;
            if *iterations > 100_000 {
                return Ok(());
            }
        }
    }
}

pub(crate) fn solve_standard(lp: &StandardLp) -> LpOutcome {
    let m = lp.b.len();
    let n = lp.c.len();
    // Flip rows to make b >= 0.
    let mut a = lp.a.clone();
    let mut b = lp.b.clone();
    let mut flip = vec![1.0; m];
    for i in 0..m {
        if b[i] < 0.0 {
            b[i] = -b[i];
            for v in a[i].iter_mut() {
                *v = -*v;
            }
            flip[i] = -1.0;
        }
    }
    let cols = n + m;
    let mut t = vec![vec![0.0; cols + 1]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][cols] = b[i];
    }
    // Phase I objective: sum of artificials, expressed in nonbasic terms.
    for i in 0..m {
        for k in 0..=cols {
            t[m][k] -= t[i][k];
        }
    }
    for i in 0..m {
        t[m][n + i] = 0.0;
    }
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
        m,
        cols,
    };
    let mut iterations = 0;
    let mut allowed = vec![true; cols];
    let _ = tab.optimize(&allowed, &mut iterations);
    let infeas = -tab.t[m][cols];
    let bscale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if infeas > 1e-9 * bscale {
        // Phase I duals: reduced cost of artificial i is 1 - y_i.
        let farkas: Vec<f64> = (0..m).map(|i| flip[i] * -tab.t[m][n + i]).collect();
        return LpOutcome::Infeasible { farkas, iterations };
    }
    // Drive artificials out of the basis where possible.
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(col) = (0..n).find(|&c| tab.t[r][c].abs() > 1e-9) {
                tab.pivot(r, col);
            }
        }
    }
    // Phase II objective row.
    for k in 0..=cols {
        tab.t[m][k] = 0.0;
    }
    tab.t[m][..n].copy_from_slice(&lp.c);
    for r in 0..m {
        let bc = tab.basis[r];
        let cb = if bc < n { lp.c[bc] } else { 0.0 };
        if cb != 0.0 {
            for k in 0..=cols {
                tab.t[m][k] -= cb * tab.t[r][k];
            }
        }
    }
    for a in allowed.iter_mut().skip(n) {
        *a = false;
    }
    let result = tab.optimize(&allowed, &mut iterations);
    let mut u = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            u[tab.basis[r]] = tab.t[r][cols];
        }
    }
    match result {
        Ok(()) => {
            // Reduced cost of artificial i is -y_i.
            let y: Vec<f64> = (0..m).map(|i| flip[i] * -tab.t[m][n + i]).collect();
            LpOutcome::Optimal { u, y, iterations }
        }
        Err(col) => {
            let mut d = vec![0.0; n];
            d[col] = 1.0;
            for r in 0..m {
                if tab.basis[r] < n {
                    d[tab.basis[r]] = -tab.t[r][col];
                }
            }
            LpOutcome::Unbounded { direction: d, u, iterations }
        }
    }
}

/// Row of the standard-form LP built from a conic program.
enum RowKind {
    Equality(usize),
    /// Diagonal entry `k` of LMI constraint `con`.
    Diagonal { con: usize, k: usize },
}

pub(crate) fn solve_lp(p: &ConicProgram) -> ConicSolution {
    let n = p.num_vars();
    // Column layout: for each x_j one or two nonnegative columns.
    let mut col_of: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
    let mut ncols = 0;
    for s in &p.signs {
        match s {
            VarSign::Free => {
                col_of.push((ncols, Some(ncols + 1)));
                ncols += 2;
            }
            _ => {
                col_of.push((ncols, None));
                ncols += 1;
            }
        }
    }
    let sign_factor = |j: usize| match p.signs[j] {
        VarSign::NonPositive => -1.0,
        _ => 1.0,
    };
    let mut rows: Vec<(Vec<(usize, f64)>, f64, bool)> = Vec::new(); // coeffs over x, rhs, is_ineq
    let mut kinds = Vec::new();
    for (k, con) in p.constraints.iter().enumerate() {
        match con {
            Constraint::Equality { coeffs, rhs } => {
                rows.push((coeffs.clone(), *rhs, false));
                kinds.push(RowKind::Equality(k));
            }
            Constraint::Lmi(l) => {
                let mut g0 = vec![0.0; l.dim];
                for &(r, _, v) in l.constant.entries() {
                    g0[r] += v.re;
                }
                let mut coeffs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); l.dim];
                for (j, g) in &l.terms {
                    for &(r, _, v) in g.entries() {
                        coeffs[r].push((*j, v.re));
                    }
                }
                for (d, (co, g)) in coeffs.into_iter().zip(g0).enumerate() {
                    // g + a x >= 0  <=>  a x - slack = -g
                    rows.push((co, -g, true));
                    kinds.push(RowKind::Diagonal { con: k, k: d });
                }
            }
        }
    }
    let n_ineq = rows.iter().filter(|r| r.2).count();
    let total = ncols + n_ineq;
    let mut a = vec![vec![0.0; total]; rows.len()];
    let mut b = vec![0.0; rows.len()];
    let mut slack = ncols;
    for (i, (coeffs, rhs, ineq)) in rows.iter().enumerate() {
        for &(j, v) in coeffs {
            let (pc, nc) = col_of[j];
            a[i][pc] += sign_factor(j) * v;
            if let Some(nc) = nc {
                a[i][nc] -= v;
            }
        }
        if *ineq {
            a[i][slack] = -1.0;
            slack += 1;
        }
        b[i] = *rhs;
    }
    let mut c = vec![0.0; total];
    for j in 0..n {
        let (pc, nc) = col_of[j];
        c[pc] = sign_factor(j) * p.objective[j];
        if let Some(nc) = nc {
            c[nc] = -p.objective[j];
        }
    }
    let lp = StandardLp { a, b, c };
    let to_x = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| {
                let (pc, nc) = col_of[j];
                sign_factor(j) * u[pc] - nc.map_or(0.0, |c| u[c])
            })
            .collect()
    };
    let build_mults = |y: &[f64]| -> Vec<Multiplier> {
        let mut mults: Vec<Multiplier> = p
            .constraints
            .iter()
            .map(|c| match c {
                Constraint::Equality { .. } => Multiplier::Equality(0.0),
                Constraint::Lmi(l) => Multiplier::Lmi(Hermitian::zeros(l.dim)),
            })
            .collect();
        let mut diag: Vec<Vec<f64>> = p
            .constraints
            .iter()
            .map(|c| match c {
                Constraint::Lmi(l) => vec![0.0; l.dim],
                _ => Vec::new(),
            })
            .collect();
        for (i, kind) in kinds.iter().enumerate() {
            match kind {
                RowKind::Equality(k) => mults[*k] = Multiplier::Equality(y[i]),
                RowKind::Diagonal { con, k } => diag[*con][*k] = y[i],
            }
        }
        for (k, d) in diag.into_iter().enumerate() {
            if let Constraint::Lmi(_) = p.constraints[k] {
                mults[k] = Multiplier::Lmi(Hermitian::from_real_diag(&d));
            }
        }
        mults
    };
    let sign_mults = |y: &[f64], with_c: bool| -> Vec<f64> {
        let mut aty = vec![0.0; n];
        for (i, (coeffs, _, _)) in rows.iter().enumerate() {
            for &(j, v) in coeffs {
                aty[j] += v * y[i];
            }
        }
        (0..n)
            .map(|j| match p.signs[j] {
                VarSign::Free => 0.0,
                _ => (if with_c { p.objective[j] } else { 0.0 }) - aty[j],
            })
            .collect()
    };
    match solve_standard(&lp) {
        LpOutcome::Optimal { u, y, iterations } => {
            let x = to_x(&u);
            let multipliers = build_mults(&y);
            let sign_multipliers = sign_mults(&y, true);
            let primal_value = p.objective_value(&x);
            let dual_value = dual_objective(p, &multipliers);
            ConicSolution {
                status: SolveStatus::Optimal,
                primal_value,
                dual_value,
                gap: ConicSolution::relative_gap(primal_value, dual_value),
                x,
                multipliers,
                sign_multipliers,
                iterations,
                certificate: None,
            }
        }
        LpOutcome::Infeasible { farkas, iterations } => {
            let multipliers = build_mults(&farkas);
            let sign_multipliers = sign_mults(&farkas, false);
            ConicSolution {
                status: SolveStatus::Infeasible,
                primal_value: f64::INFINITY,
                dual_value: f64::INFINITY,
                x: vec![0.0; n],
                multipliers: multipliers.clone(),
                sign_multipliers: sign_multipliers.clone(),
                gap: f64::INFINITY,
                iterations,
                certificate: Some(Certificate::Infeasibility {
                    multipliers,
                    sign_multipliers,
                }),
            }
        }
        LpOutcome::Unbounded { direction, u, iterations } => ConicSolution {
            status: SolveStatus::Unbounded,
            primal_value: f64::NEG_INFINITY,
            dual_value: f64::NEG_INFINITY,
            x: to_x(&u),
            multipliers: build_mults(&vec![0.0; rows.len()]),
            sign_multipliers: vec![0.0; n],
            gap: f64::INFINITY,
            iterations,
            certificate: Some(Certificate::Unboundedness {
                direction: to_x(&direction),
            }),
        },
    }
}
