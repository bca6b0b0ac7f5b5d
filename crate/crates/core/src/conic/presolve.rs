//! Reduction of a [`ConicProgram`] to the interior-point core problem.
//!
//! The core problem has free variables `z`, an objective `c^T z + offset`,
//! LP rows `g + G z >= 0`, dense Hermitian LMI blocks and (optionally)
//! independent equality rows. The reductions are:
//!
//! * sign constraints, 1x1 blocks and diagonal blocks become LP rows;
//! * equalities are either eliminated through `x = x0 + N z` or reduced to an
//!   orthonormal set of independent rows;
//! * every block is compressed onto the common range of its data matrices,
//!   which restores strict feasibility for problems that live on a face.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::{
    CMat, Certificate, ConicProgram, ConicSolution, Constraint, Multiplier, SolveStatus,
    SolverConfig, VarSign,
};
use crate::qla::{CMatrix, Hermitian, C64};

pub(crate) struct Block {
    pub dim: usize,
    pub f0: CMat,
    /// `(variable, full entry list)`; the entry list has both triangles.
    pub terms: Vec<(usize, Vec<(usize, usize, C64)>)>,
}

pub(crate) struct Problem {
    pub n: usize,
    pub c: Vec<f64>,
    pub blocks: Vec<Block>,
    pub lp_g: Vec<f64>,
    pub lp_rows: Vec<Vec<(usize, f64)>>,
    /// Independent equality rows `eq_a z = eq_b` kept in the Newton system.
    pub eq_a: DMatrix<f64>,
    pub eq_b: DVector<f64>,
}

impl Problem {
    pub fn num_eq(&self) -> usize {
        self.eq_a.nrows()
    }

    /// `F0 + sum z_j F_j` for block `b`.
    pub fn block_value(&self, b: usize, z: &[f64]) -> CMat {
        let blk = &self.blocks[b];
        let mut m = blk.f0.clone();
        for (j, ent) in &blk.terms {
            let s = z[*j];
            if s == 0.0 {
                continue;
            }
            for &(r, c, v) in ent {
                m[(r, c)] += v * s;
            }
        }
        m
    }

    pub fn lp_value(&self, z: &[f64]) -> Vec<f64> {
        self.lp_rows
            .iter()
            .zip(&self.lp_g)
            .map(|(row, g)| g + row.iter().map(|&(j, a)| a * z[j]).sum::<f64>())
            .collect()
    }
}

/// Outcome reported by the interior-point core.
pub(crate) struct CoreOutcome {
    pub status: SolveStatus,
    pub z: Vec<f64>,
    pub block_duals: Vec<CMat>,
    pub lp_duals: Vec<f64>,
    pub eq_duals: Vec<f64>,
    pub iterations: usize,
    /// For unbounded outcomes, an improving direction in `z`.
    pub ray_z: Option<Vec<f64>>,
    /// For infeasible outcomes, a dual ray (block, LP and equality parts).
    pub ray_dual: Option<(Vec<CMat>, Vec<f64>, Vec<f64>)>,
}

/// Where an original constraint ended up.
enum Origin {
    Equality,
    /// Kept as block `index`, optionally compressed by `V` (original = V Z V†).
    Block { index: usize, basis: Option<CMat> },
    /// Split into LP rows; `rows[k]` is the LP row of diagonal entry `k`.
    Diagonal { rows: Vec<Option<usize>> },
    /// Compressed to a single direction `v` and turned into an LP row.
    RankOne { row: Option<usize>, vector: CMat },
    /// Constant block removed during presolve.
    Dropped { dim: usize },
}

pub(crate) struct Reduced {
    pub problem: Problem,
    origins: Vec<Origin>,
    sign_rows: Vec<Option<usize>>,
    x0: Vec<f64>,
    /// `x = x0 + null_basis z` when equalities were eliminated.
    null_basis: Option<DMatrix<f64>>,
}

pub(crate) enum Presolved {
    Reduced(Box<Reduced>),
    Decided(ConicSolution),
}

/// Intermediate block description over the original variables.
struct RawBlock {
    dim: usize,
    f0: CMat,
    terms: Vec<(usize, CMat)>,
}

fn dense_of(s: &super::SparseHermitian) -> CMat {
    let mut m = CMat::zeros(s.dim(), s.dim());
    for (r, c, v) in s.full_entries() {
        m[(r, c)] += v;
    }
    m
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermitian_of(m: &CMat) -> Hermitian {
    Hermitian::symmetrize(&super::from_nalgebra(m))
}

pub(crate) fn presolve(p: &ConicProgram, cfg: &SolverConfig) -> Presolved {
    let n = p.num_vars();

    // LP rows over the original variables, and raw blocks.
    let mut lp_g: Vec<f64> = Vec::new();
    let mut lp_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut raw_blocks: Vec<RawBlock> = Vec::new();
    let mut raw_origin: Vec<Option<usize>> = Vec::new(); // raw block index per constraint
    let mut diag_rows: Vec<Option<Vec<usize>>> = Vec::new();
    let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();

    for con in &p.constraints {
        match con {
            Constraint::Equality { coeffs, rhs } => {
                eq_rows.push((coeffs.clone(), *rhs));
                raw_origin.push(None);
                diag_rows.push(None);
            }
            Constraint::Lmi(l) => {
                let diagonal = l.constant.is_diagonal() && l.terms.iter().all(|(_, g)| g.is_diagonal());
                if diagonal {
                    let mut g0 = vec![0.0; l.dim];
                    for &(r, _, v) in l.constant.entries() {
                        g0[r] += v.re;
                    }
                    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); l.dim];
                    for (j, g) in &l.terms {
                        for &(r, _, v) in g.entries() {
                            rows[r].push((*j, v.re));
                        }
                    }
                    let mut idx = Vec::with_capacity(l.dim);
                    for (g, row) in g0.into_iter().zip(rows) {
                        idx.push(lp_rows.len());
                        lp_g.push(g);
                        lp_rows.push(merge_row(row));
                    }
                    raw_origin.push(None);
                    diag_rows.push(Some(idx));
                } else {
                    let f0 = dense_of(&l.constant);
                    let mut terms: Vec<(usize, CMat)> = Vec::new();
                    for (j, g) in &l.terms {
                        if let Some(t) = terms.iter_mut().find(|(k, _)| k == j) {
                            t.1 += dense_of(g);
                        } else {
                            terms.push((*j, dense_of(g)));
                        }
                    }
                    raw_origin.push(Some(raw_blocks.len()));
                    raw_blocks.push(RawBlock { dim: l.dim, f0, terms });
                    diag_rows.push(None);
                }
            }
        }
    }
    let mut sign_rows = vec![None; n];
    for (j, s) in p.signs.iter().enumerate() {
        let a = match s {
            VarSign::Free => continue,
            VarSign::NonNegative => 1.0,
            VarSign::NonPositive => -1.0,
        };
        sign_rows[j] = Some(lp_rows.len());
        lp_g.push(0.0);
        lp_rows.push(vec![(j, a)]);
    }

    // Equalities.
    let m = eq_rows.len();
    let mut e = DMatrix::<f64>::zeros(m, n);
    let mut eb = DVector::<f64>::zeros(m);
    for (i, (coeffs, rhs)) in eq_rows.iter().enumerate() {
        for &(j, a) in coeffs {
            e[(i, j)] += a;
        }
        eb[i] = *rhs;
    }
    let eliminate = m > 0 && n <= cfg.elimination_limit;
    let mut x0 = vec![0.0; n];
    let mut null_basis: Option<DMatrix<f64>> = None;
    let mut kept_a = DMatrix::<f64>::zeros(0, n);
    let mut kept_b = DVector::<f64>::zeros(0);
    if m > 0 {
        let scale = e.amax().max(1.0);
        // Pad to a square matrix so the SVD returns a full right basis.
        let rows = m.max(n);
        let mut padded = DMatrix::<f64>::zeros(rows, n);
        padded.view_mut((0, 0), (m, n)).copy_from(&e);
        let svd = padded.svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let sv = &svd.singular_values;
        let tol = 1e-10 * scale * (m.max(n) as f64).sqrt();
        let rank_idx: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] > tol).collect();
        let null_idx: Vec<usize> = (0..vt.nrows()).filter(|k| !rank_idx.contains(k)).collect();
        // Least-squares particular solution.
        let mut xp = DVector::<f64>::zeros(n);
        for &k in &rank_idx {
            let coef = (0..m).map(|i| u[(i, k)] * eb[i]).sum::<f64>() / sv[k];
            for j in 0..n {
                xp[j] += coef * vt[(k, j)];
            }
        }
        let resid = &e * &xp - &eb;
        let bscale = eb.amax().max(1.0);
        if resid.amax() > 1e-8 * bscale {
            // y = residual direction certifies inconsistency: E^T y ~ 0, b^T y != 0.
            let y: Vec<f64> = (-resid.clone()).iter().copied().collect();
            let ynorm = resid.norm();
            let y: Vec<f64> = y.iter().map(|v| v / ynorm).collect();
            return Presolved::Decided(infeasible_solution(p, Some(y)));
        }
        if eliminate {
            x0 = xp.iter().copied().collect();
            let mut nb = DMatrix::<f64>::zeros(n, null_idx.len());
            for (col, &k) in null_idx.iter().enumerate() {
                for j in 0..n {
                    nb[(j, col)] = vt[(k, j)];
                }
            }
            null_basis = Some(nb);
        } else {
            let r = rank_idx.len();
            kept_a = DMatrix::<f64>::zeros(r, n);
            kept_b = DVector::<f64>::zeros(r);
            for (row, &k) in rank_idx.iter().enumerate() {
                for j in 0..n {
                    kept_a[(row, j)] = sv[k] * vt[(k, j)];
                }
                kept_b[row] = (0..m).map(|i| u[(i, k)] * eb[i]).sum::<f64>();
            }
        }
    }

    // Transform to the reduced variables.
    let nz = null_basis.as_ref().map_or(n, |nb| nb.ncols());
    let c: Vec<f64> = match &null_basis {
        Some(nb) => (0..nz)
            .map(|k| (0..n).map(|j| nb[(j, k)] * p.objective[j]).sum())
            .collect(),
        None => p.objective.clone(),
    };
    let (lp_g, lp_rows) = match &null_basis {
        Some(nb) => {
            let mut g2 = Vec::with_capacity(lp_rows.len());
            let mut r2 = Vec::with_capacity(lp_rows.len());
            for (g, row) in lp_g.iter().zip(&lp_rows) {
                g2.push(g + row.iter().map(|&(j, a)| a * x0[j]).sum::<f64>());
                let mut dense = vec![0.0; nz];
                for &(j, a) in row {
                    for (k, d) in dense.iter_mut().enumerate() {
                        *d += a * nb[(j, k)];
                    }
                }
                let rscale = dense.iter().fold(0.0f64, |s, v| s.max(v.abs()));
                r2.push(
                    dense
                        .into_iter()
                        .enumerate()
                        .filter(|(_, v)| v.abs() > 1e-13 * rscale.max(1e-300))
                        .collect(),
                );
            }
            (g2, r2)
        }
        None => (lp_g, lp_rows),
    };
    let raw_blocks: Vec<RawBlock> = match &null_basis {
        Some(nb) => raw_blocks.into_iter().map(|b| transform_block(b, &x0, nb)).collect(),
        None => raw_blocks,
    };

    // Compress blocks and route 1x1 / constant blocks.
    let mut lp_g = lp_g;
    let mut lp_rows = lp_rows;
    let mut blocks: Vec<Block> = Vec::new();
    let mut raw_to_origin: Vec<Origin> = Vec::new();
    for rb in raw_blocks {
        let dim = rb.dim;
        let active: Vec<&(usize, CMat)> = rb.terms.iter().filter(|(_, g)| max_abs(g) > 0.0).collect();
        if active.is_empty() {
            let h = hermitian_of(&rb.f0);
            let lo = h.min_eigenvalue().unwrap_or(f64::NEG_INFINITY);
            if lo < -1e-9 * max_abs(&rb.f0).max(1.0) {
                let e = h.eig().expect("eigensolver");
                let v = e.vector(0);
                let zray = super::to_nalgebra(&CMatrix::outer(&v));
                return Presolved::Decided(infeasible_block_solution(p, &raw_origin, raw_to_origin.len(), zray));
            }
            raw_to_origin.push(Origin::Dropped { dim });
            continue;
        }
        let basis = compression_basis(&rb);
        let (f0, terms, basis) = match basis {
            Some(v) => {
                let vh = v.adjoint();
                let f0 = &vh * &rb.f0 * &v;
                let terms: Vec<(usize, CMat)> = rb.terms.iter().map(|(j, g)| (*j, &vh * g * &v)).collect();
                (f0, terms, Some(v))
            }
            None => (rb.f0, rb.terms, None),
        };
        let d = f0.nrows();
        if d == 1 {
            let row: Vec<(usize, f64)> = terms
                .iter()
                .map(|(j, g)| (*j, g[(0, 0)].re))
                .filter(|(_, a)| *a != 0.0)
                .collect();
            let idx = lp_rows.len();
            lp_g.push(f0[(0, 0)].re);
            lp_rows.push(merge_row(row));
            let vector = basis.expect("a one-dimensional block stems from compression");
            raw_to_origin.push(Origin::RankOne { row: Some(idx), vector });
            continue;
        }
        let scale = terms.iter().map(|(_, g)| max_abs(g)).fold(max_abs(&f0), f64::max);
        let drop_tol = 1e-14 * scale;
        let terms = terms
            .into_iter()
            .filter_map(|(j, g)| {
                let mut ent = Vec::new();
                for r in 0..d {
                    for cc in 0..d {
                        let v = g[(r, cc)];
                        if v.norm() > drop_tol {
                            ent.push((r, cc, v));
                        }
                    }
                }
                if ent.is_empty() {
                    None
                } else {
                    Some((j, ent))
                }
            })
            .collect();
        raw_to_origin.push(Origin::Block {
            index: blocks.len(),
            basis,
        });
        blocks.push(Block { dim: d, f0, terms });
    }

    // Constant LP rows.
    let mut keep_rows = Vec::with_capacity(lp_rows.len());
    for (i, row) in lp_rows.iter().enumerate() {
        if row.is_empty() {
            if lp_g[i] < -1e-9 * lp_g[i].abs().max(1.0) {
                let mut lp_ray = vec![0.0; lp_rows.len()];
                lp_ray[i] = 1.0;
                return Presolved::Decided(infeasible_lp_solution(
                    p,
                    &raw_origin,
                    &diag_rows,
                    &sign_rows,
                    &lp_ray,
                ));
            }
            keep_rows.push(false);
        } else {
            keep_rows.push(true);
        }
    }
    let mut remap = vec![None; lp_rows.len()];
    let mut g_final = Vec::new();
    let mut rows_final = Vec::new();
    for (i, (g, row)) in lp_g.into_iter().zip(lp_rows).enumerate() {
        if keep_rows[i] {
            remap[i] = Some(rows_final.len());
            g_final.push(g);
            rows_final.push(row);
        }
    }

    // Assemble origins per original constraint, renumbering LP rows.
    let mut origins = Vec::with_capacity(p.constraints.len());
    let mut raw_iter = raw_to_origin.into_iter();
    for (k, con) in p.constraints.iter().enumerate() {
        match con {
            Constraint::Equality { .. } => origins.push(Origin::Equality),
            Constraint::Lmi(_) => {
                if let Some(idx) = &diag_rows[k] {
                    origins.push(Origin::Diagonal {
                        rows: idx.iter().map(|&i| remap[i]).collect(),
                    });
                } else {
                    let o = match raw_iter.next().expect("raw block origin") {
                        Origin::RankOne { row, vector } => Origin::RankOne {
                            row: row.and_then(|i| remap[i]),
                            vector,
                        },
                        other => other,
                    };
                    origins.push(o);
                }
            }
        }
    }
    let sign_rows: Vec<Option<usize>> = sign_rows.iter().map(|r| r.and_then(|i| remap[i])).collect();

    let problem = Problem {
        n: nz,
        c,
        blocks,
        lp_g: g_final,
        lp_rows: rows_final,
        eq_a: kept_a,
        eq_b: kept_b,
    };
    let reduced = Reduced {
        problem,
        origins,
        sign_rows,
        x0,
        null_basis,
    };
    Presolved::Reduced(Box::new(reduced))
}

fn merge_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (j, a) in row {
        match out.last_mut() {
            Some((k, b)) if *k == j => *b += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}

fn transform_block(b: RawBlock, x0: &[f64], nb: &DMatrix<f64>) -> RawBlock {
    let d = b.dim;
    let mut f0 = b.f0.clone();
    for (j, g) in &b.terms {
        if x0[*j] != 0.0 {
            f0 += g * Complex64::new(x0[*j], 0.0);
        }
    }
    let nz = nb.ncols();
    if nz == 0 || b.terms.is_empty() {
        return RawBlock { dim: d, f0, terms: Vec::new() };
    }
    let k = b.terms.len();
    let mut br = DMatrix::<f64>::zeros(d * d, k);
    let mut bi = DMatrix::<f64>::zeros(d * d, k);
    let mut nsub = DMatrix::<f64>::zeros(k, nz);
    for (col, (j, g)) in b.terms.iter().enumerate() {
        for r in 0..d {
            for c in 0..d {
                br[(r * d + c, col)] = g[(r, c)].re;
                bi[(r * d + c, col)] = g[(r, c)].im;
            }
        }
        nsub.row_mut(col).copy_from(&nb.row(*j));
    }
    let tr = &br * &nsub;
    let ti = &bi * &nsub;
    let scale = br.amax().max(bi.amax());
    let mut terms = Vec::new();
    for col in 0..nz {
        let colmax = tr.column(col).amax().max(ti.column(col).amax());
        if colmax <= 1e-13 * scale {
            continue;
        }
        let g = CMat::from_fn(d, d, |r, c| Complex64::new(tr[(r * d + c, col)], ti[(r * d + c, col)]));
        // Re-Hermitize against rounding.
        let gh = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
        terms.push((col, gh));
    }
    RawBlock { dim: d, f0, terms }
}

/// Orthonormal basis of the common range of the block data, or `None` when
/// the range is the whole space.
fn compression_basis(b: &RawBlock) -> Option<CMat> {
    let d = b.dim;
    let mut acc = &b.f0 * &b.f0;
    for (_, g) in &b.terms {
        acc += g * g;
    }
    let acc = (&acc + acc.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(acc);
    let vmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    if vmax <= 0.0 {
        return None;
    }
    let keep: Vec<usize> = (0..d).filter(|&k| eig.eigenvalues[k] > 1e-12 * vmax).collect();
    if keep.len() == d {
        return None;
    }
    Some(CMat::from_fn(d, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]))
}

impl Reduced {
    pub fn postsolve(&self, p: &ConicProgram, out: CoreOutcome) -> ConicSolution {
        let n = p.num_vars();
        let x = self.lift(&out.z, true);
        match out.status {
            SolveStatus::Unbounded => {
                let dir = out.ray_z.as_ref().map(|r| self.lift(r, false)).unwrap_or_else(|| vec![0.0; n]);
                return ConicSolution {
                    status: SolveStatus::Unbounded,
                    primal_value: f64::NEG_INFINITY,
                    dual_value: f64::NEG_INFINITY,
                    x,
                    multipliers: self.zero_multipliers(p),
                    sign_multipliers: vec![0.0; n],
                    gap: f64::INFINITY,
                    iterations: out.iterations,
                    certificate: Some(Certificate::Unboundedness { direction: dir }),
                };
            }
            SolveStatus::Infeasible => {
                let (bd, ld, ed) = out.ray_dual.clone().expect("dual ray");
                let (mults, signs) = self.map_duals(p, &bd, &ld, &ed, false);
                return ConicSolution {
                    status: SolveStatus::Infeasible,
                    primal_value: f64::INFINITY,
                    dual_value: f64::INFINITY,
                    x,
                    multipliers: self.zero_multipliers(p),
                    sign_multipliers: vec![0.0; n],
                    gap: f64::INFINITY,
                    iterations: out.iterations,
                    certificate: Some(Certificate::Infeasibility {
                        multipliers: mults,
                        sign_multipliers: signs,
                    }),
                };
            }
            _ => {}
        }
        let (multipliers, sign_multipliers) =
            self.map_duals(p, &out.block_duals, &out.lp_duals, &out.eq_duals, true);
        let primal_value = p.objective_value(&x);
        let dual_value = dual_objective(p, &multipliers);
        ConicSolution {
            status: out.status,
            primal_value,
            dual_value,
            gap: ConicSolution::relative_gap(primal_value, dual_value),
            x,
            multipliers,
            sign_multipliers,
            iterations: out.iterations,
            certificate: None,
        }
    }

    fn lift(&self, z: &[f64], affine: bool) -> Vec<f64> {
        match &self.null_basis {
            Some(nb) => {
                let n = nb.nrows();
                (0..n)
                    .map(|j| {
                        let base = if affine { self.x0[j] } else { 0.0 };
                        base + (0..nb.ncols()).map(|k| nb[(j, k)] * z[k]).sum::<f64>()
                    })
                    .collect()
            }
            None => z.to_vec(),
        }
    }

    fn zero_multipliers(&self, p: &ConicProgram) -> Vec<Multiplier> {
        p.constraints
            .iter()
            .map(|c| match c {
                Constraint::Equality { .. } => Multiplier::Equality(0.0),
                Constraint::Lmi(l) => Multiplier::Lmi(Hermitian::zeros(l.dim)),
            })
            .collect()
    }

    /// Maps reduced duals to the original constraints. Equality multipliers
    /// are recovered by least squares on the stationarity residual, which
    /// covers both the eliminated and the kept representation.
    fn map_duals(
        &self,
        p: &ConicProgram,
        block_duals: &[CMat],
        lp_duals: &[f64],
        _eq_duals: &[f64],
        with_objective: bool,
    ) -> (Vec<Multiplier>, Vec<f64>) {
        let n = p.num_vars();
        let mut mults: Vec<Multiplier> = Vec::with_capacity(p.constraints.len());
        for (k, con) in p.constraints.iter().enumerate() {
            let m = match (&self.origins[k], con) {
                (Origin::Equality, _) => Multiplier::Equality(0.0),
                (Origin::Block { index, basis }, Constraint::Lmi(_)) => {
                    let zr = &block_duals[*index];
                    let full = match basis {
                        Some(v) => v * zr * v.adjoint(),
                        None => zr.clone(),
                    };
                    Multiplier::Lmi(hermitian_of(&full))
                }
                (Origin::Diagonal { rows }, Constraint::Lmi(_)) => {
                    let vals: Vec<f64> = rows.iter().map(|r| r.map_or(0.0, |i| lp_duals[i])).collect();
                    Multiplier::Lmi(Hermitian::from_real_diag(&vals))
                }
                (Origin::RankOne { row, vector }, Constraint::Lmi(_)) => {
                    let zval = row.map_or(0.0, |i| lp_duals[i]);
                    let full = vector * vector.adjoint() * Complex64::new(zval, 0.0);
                    Multiplier::Lmi(hermitian_of(&full))
                }
                (Origin::Dropped { dim }, _) => Multiplier::Lmi(Hermitian::zeros(*dim)),
                _ => unreachable!("origin/constraint mismatch"),
            };
            mults.push(m);
        }
        let sign_mults: Vec<f64> = (0..n)
            .map(|j| {
                let a = match p.signs[j] {
                    VarSign::Free => 0.0,
                    VarSign::NonNegative => 1.0,
                    VarSign::NonPositive => -1.0,
                };
                self.sign_rows[j].map_or(0.0, |i| a * lp_duals[i])
            })
            .collect();
        let eq_idx: Vec<usize> = p
            .constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, Constraint::Equality { .. }))
            .map(|(k, _)| k)
            .collect();
        if !eq_idx.is_empty() {
            // residual r = c - F^*(Z) - s, solve E^T y = r.
            let mut r = DVector::<f64>::zeros(n);
            if with_objective {
                for j in 0..n {
                    r[j] = p.objective[j];
                }
            }
            for (k, con) in p.constraints.iter().enumerate() {
                if let (Constraint::Lmi(l), Multiplier::Lmi(z)) = (con, &mults[k]) {
                    for (j, g) in &l.terms {
                        r[*j] -= g.inner_dense(z.matrix());
                    }
                }
            }
            for j in 0..n {
                r[j] -= sign_mults[j];
            }
            let mut et = DMatrix::<f64>::zeros(n, eq_idx.len());
            for (col, &k) in eq_idx.iter().enumerate() {
                if let Constraint::Equality { coeffs, .. } = &p.constraints[k] {
                    for &(j, a) in coeffs {
                        et[(j, col)] += a;
                    }
                }
            }
            let y = least_squares(&et, &r);
            for (col, &k) in eq_idx.iter().enumerate() {
                mults[k] = Multiplier::Equality(y[col]);
            }
        }
        (mults, sign_mults)
    }
}

/// Minimum-norm least-squares solution of `a y = r`.
pub(crate) fn least_squares(a: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    svd.solve(r, 1e-12 * smax.max(1e-300))
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

pub(crate) fn dual_objective(p: &ConicProgram, mults: &[Multiplier]) -> f64 {
    let mut d = 0.0;
    for (con, m) in p.constraints.iter().zip(mults) {
        match (con, m) {
            (Constraint::Equality { rhs, .. }, Multiplier::Equality(y)) => d += rhs * y,
            (Constraint::Lmi(l), Multiplier::Lmi(z)) => d -= l.constant.inner_dense(z.matrix()),
            _ => {}
        }
    }
    d
}

fn infeasible_solution(p: &ConicProgram, eq_ray: Option<Vec<f64>>) -> ConicSolution {
    let n = p.num_vars();
    let mut k_eq = 0;
    let multipliers = p
        .constraints
        .iter()
        .map(|c| match c {
            Constraint::Equality { .. } => {
                let v = eq_ray.as_ref().map_or(0.0, |y| y[k_eq]);
                k_eq += 1;
                Multiplier::Equality(v)
            }
            Constraint::Lmi(l) => Multiplier::Lmi(Hermitian::zeros(l.dim)),
        })
        .collect();
    decided(SolveStatus::Infeasible, vec![0.0; n], multipliers, vec![0.0; n])
}

fn infeasible_block_solution(p: &ConicProgram, raw_origin: &[Option<usize>], raw_index: usize, z: CMat) -> ConicSolution {
    let n = p.num_vars();
    let multipliers = p
        .constraints
        .iter()
        .zip(raw_origin)
        .map(|(c, o)| match c {
            Constraint::Equality { .. } => Multiplier::Equality(0.0),
            Constraint::Lmi(l) => {
                if *o == Some(raw_index) {
                    Multiplier::Lmi(hermitian_of(&z))
                } else {
                    Multiplier::Lmi(Hermitian::zeros(l.dim))
                }
            }
        })
        .collect();
    decided(SolveStatus::Infeasible, vec![0.0; n], multipliers, vec![0.0; n])
}

fn infeasible_lp_solution(
    p: &ConicProgram,
    _raw_origin: &[Option<usize>],
    diag_rows: &[Option<Vec<usize>>],
    sign_rows: &[Option<usize>],
    lp_ray: &[f64],
) -> ConicSolution {
    let n = p.num_vars();
    let multipliers = p
        .constraints
        .iter()
        .zip(diag_rows)
        .map(|(c, d)| match c {
            Constraint::Equality { .. } => Multiplier::Equality(0.0),
            Constraint::Lmi(l) => match d {
                Some(rows) => Multiplier::Lmi(Hermitian::from_real_diag(
                    &rows.iter().map(|&i| lp_ray.get(i).copied().unwrap_or(0.0)).collect::<Vec<_>>(),
                )),
                None => Multiplier::Lmi(Hermitian::zeros(l.dim)),
            },
        })
        .collect();
    let signs = (0..n)
        .map(|j| sign_rows[j].map_or(0.0, |i| lp_ray.get(i).copied().unwrap_or(0.0)))
        .collect();
    decided(SolveStatus::Infeasible, vec![0.0; n], multipliers, signs)
}

fn decided(
    status: SolveStatus,
    x: Vec<f64>,
    multipliers: Vec<Multiplier>,
    sign_multipliers: Vec<f64>,
) -> ConicSolution {
    ConicSolution {
        status,
        primal_value: f64::INFINITY,
        dual_value: f64::INFINITY,
        x,
        multipliers: multipliers.clone(),
        sign_multipliers: sign_multipliers.clone(),
        gap: f64::INFINITY,
        iterations: 0,
        certificate: Some(Certificate::Infeasibility {
            multipliers,
            sign_multipliers,
        }),
    }
}

