//! Modelling layer: Hermitian matrix variables and affine matrix expressions
//! compiled to a [`ConicProgram`].

use std::collections::BTreeMap;

use super::{solve, ConicError, ConicProgram, ConicSolution, Constraint, Lmi, SolverConfig, SparseHermitian, VarSign};
use crate::qla::{self, CMatrix, Hermitian, C64};

/// Affine scalar expression `constant + sum coeff * x_j`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(j: usize) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(j, 1.0)],
        }
    }

    pub fn add(mut self, other: &LinExpr) -> Self {
        self.constant += other.constant;
        self.terms.extend_from_slice(&other.terms);
        self
    }

    pub fn sub(self, other: &LinExpr) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            constant: self.constant * s,
            terms: self.terms.iter().map(|&(j, a)| (j, a * s)).collect(),
        }
    }

    /// Merges duplicate variables and drops zero coefficients.
    pub fn compact(&self) -> Vec<(usize, f64)> {
        let mut map = BTreeMap::new();
        for &(j, a) in &self.terms {
            *map.entry(j).or_insert(0.0) += a;
        }
        map.into_iter().filter(|&(_, a)| a != 0.0).collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }
}

/// Affine Hermitian expression `constant + sum x_j G_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    dim: usize,
    constant: CMatrix,
    terms: Vec<(usize, SparseHermitian)>,
}

impl MatExpr {
    pub fn constant(h: &Hermitian) -> Self {
        Self {
            dim: h.dim(),
            constant: h.matrix().clone(),
            terms: Vec::new(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            constant: CMatrix::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    /// `x_j * g`.
    pub fn scalar_times(j: usize, g: &Hermitian) -> Self {
        Self {
            dim: g.dim(),
            constant: CMatrix::zeros(g.dim(), g.dim()),
            terms: vec![(j, SparseHermitian::from_hermitian(g))],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add(mut self, other: &MatExpr) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in MatExpr::add");
        self.constant = &self.constant + &other.constant;
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn sub(self, other: &MatExpr) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            constant: self.constant.scale_real(s),
            terms: self.terms.iter().map(|(j, g)| (*j, g.scale(s))).collect(),
        }
    }

    /// Adds `l * h` for a scalar expression `l` and constant `h`.
    pub fn add_scaled(mut self, l: &LinExpr, h: &Hermitian) -> Self {
        assert_eq!(self.dim, h.dim(), "dimension mismatch in MatExpr::add_scaled");
        self.constant.axpy(C64::new(l.constant, 0.0), h.matrix());
        let sh = SparseHermitian::from_hermitian(h);
        for &(j, a) in &l.terms {
            self.terms.push((j, sh.scale(a)));
        }
        self
    }

    /// Applies a linear map on Hermitian matrices to every component.
    pub fn map(&self, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let constant = f(&self.constant);
        let dim = constant.rows();
        let terms = self
            .merged_terms()
            .into_iter()
            .map(|(j, g)| (j, SparseHermitian::from_dense(&f(&g.to_dense()))))
            .filter(|(_, g)| !g.is_zero())
            .collect();
        Self { dim, constant, terms }
    }

    pub fn kron_left(&self, a: &Hermitian) -> Self {
        self.map(|m| a.matrix().kron(m))
    }

    pub fn kron_right(&self, b: &Hermitian) -> Self {
        self.map(|m| m.kron(b.matrix()))
    }

    pub fn partial_trace(&self, dims: &[usize], keep: &[usize]) -> Result<Self, ConicError> {
        check_dims(self.dim, dims)?;
        Ok(self.map(|m| qla::partial_trace(m, dims, keep).expect("dimensions checked")))
    }

    pub fn partial_transpose(&self, dims: &[usize], part: &[usize]) -> Result<Self, ConicError> {
        check_dims(self.dim, dims)?;
        Ok(self.map(|m| qla::partial_transpose(m, dims, part).expect("dimensions checked")))
    }

    pub fn permute(&self, dims: &[usize], perm: &[usize]) -> Result<Self, ConicError> {
        check_dims(self.dim, dims)?;
        Ok(self.map(|m| qla::permute_subsystems(m, dims, perm).expect("dimensions checked")))
    }

    pub fn trace(&self) -> LinExpr {
        self.inner(&Hermitian::identity(self.dim))
    }

    /// `Re Tr(self * h)` as a scalar expression.
    pub fn inner(&self, h: &Hermitian) -> LinExpr {
        LinExpr {
            constant: self.constant.inner(h.matrix()).re,
            terms: self.terms.iter().map(|(j, g)| (*j, g.inner_dense(h.matrix()))).collect(),
        }
    }

    pub fn value(&self, x: &[f64]) -> Hermitian {
        let mut m = self.constant.clone();
        for (j, g) in &self.terms {
            for (r, c, v) in g.full_entries() {
                m[(r, c)] += v * x[*j];
            }
        }
        Hermitian::symmetrize(&m)
    }

    fn merged_terms(&self) -> Vec<(usize, SparseHermitian)> {
        let mut by_var: BTreeMap<usize, Vec<(usize, usize, C64)>> = BTreeMap::new();
        for (j, g) in &self.terms {
            by_var.entry(*j).or_default().extend_from_slice(g.entries());
        }
        by_var
            .into_iter()
            .map(|(j, e)| (j, SparseHermitian::from_entries(self.dim, e)))
            .filter(|(_, g)| !g.is_zero())
            .collect()
    }

    fn to_lmi(&self) -> Lmi {
        Lmi {
            dim: self.dim,
            constant: SparseHermitian::from_dense(&self.constant),
            terms: self.merged_terms(),
        }
    }

    /// Real and imaginary parts of each upper-triangle entry as scalar expressions.
    fn entry_exprs(&self) -> Vec<LinExpr> {
        let mut entries: BTreeMap<(usize, usize), (LinExpr, LinExpr)> = BTreeMap::new();
        for r in 0..self.dim {
            for c in r..self.dim {
                let v = self.constant[(r, c)];
                entries.insert((r, c), (LinExpr::constant(v.re), LinExpr::constant(v.im)));
            }
        }
        for (j, g) in &self.terms {
            for &(r, c, v) in g.entries() {
                let e = entries.get_mut(&(r, c)).expect("upper triangle");
                e.0.terms.push((*j, v.re));
                e.1.terms.push((*j, v.im));
            }
        }
        let mut out = Vec::new();
        for ((r, c), (re, im)) in entries {
            out.push(re);
            if r != c {
                out.push(im);
            }
        }
        out
    }
}

fn check_dims(dim: usize, dims: &[usize]) -> Result<(), ConicError> {
    if dims.iter().product::<usize>() != dim {
        return Err(ConicError::Malformed(format!("subsystem dims {dims:?} do not match dimension {dim}")));
    }
    Ok(())
}

/// Handle of a constraint added to a [`Model`], used to read its multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintId(pub usize);

/// Builder for a [`ConicProgram`] stated with matrix variables.
#[derive(Debug, Clone, Default)]
pub struct Model {
    signs: Vec<VarSign>,
    constraints: Vec<Constraint>,
    objective: LinExpr,
    maximize: bool,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.signs.len()
    }

    pub fn scalar(&mut self, sign: VarSign) -> LinExpr {
        self.signs.push(sign);
        LinExpr::var(self.signs.len() - 1)
    }

    /// A free Hermitian matrix variable of dimension `dim`.
    pub fn hermitian(&mut self, dim: usize) -> MatExpr {
        let mut e = MatExpr::zeros(dim);
        for r in 0..dim {
            for c in r..dim {
                if r == c {
                    let j = self.new_var();
                    e.terms.push((j, SparseHermitian::from_entries(dim, [(r, r, C64::new(1.0, 0.0))])));
                } else {
                    let j = self.new_var();
                    e.terms.push((j, SparseHermitian::from_entries(dim, [(r, c, C64::new(1.0, 0.0))])));
                    let j = self.new_var();
                    e.terms.push((j, SparseHermitian::from_entries(dim, [(r, c, C64::new(0.0, 1.0))])));
                }
            }
        }
        e
    }

    /// A Hermitian variable constrained PSD.
    pub fn psd(&mut self, dim: usize) -> (MatExpr, ConstraintId) {
        let m = self.hermitian(dim);
        let id = self.add_psd(&m);
        (m, id)
    }

    fn new_var(&mut self) -> usize {
        self.signs.push(VarSign::Free);
        self.signs.len() - 1
    }

    pub fn add_psd(&mut self, m: &MatExpr) -> ConstraintId {
        self.constraints.push(Constraint::Lmi(m.to_lmi()));
        ConstraintId(self.constraints.len() - 1)
    }

    /// `l == rhs`.
    pub fn add_eq(&mut self, l: &LinExpr, rhs: f64) -> ConstraintId {
        self.constraints.push(Constraint::Equality {
            coeffs: l.compact(),
            rhs: rhs - l.constant,
        });
        ConstraintId(self.constraints.len() - 1)
    }

    /// `l >= 0` as a 1x1 LMI.
    pub fn add_nonneg(&mut self, l: &LinExpr) -> ConstraintId {
        let m = MatExpr::zeros(1).add_scaled(l, &Hermitian::identity(1));
        self.add_psd(&m)
    }

    /// `m == h`, imposed entrywise on the real parameters of the upper triangle.
    pub fn add_mat_eq(&mut self, m: &MatExpr, h: &Hermitian) -> Vec<ConstraintId> {
        let diff = m.clone().sub(&MatExpr::constant(h));
        diff.entry_exprs()
            .into_iter()
            .filter(|l| !l.compact().is_empty() || l.constant.abs() > 0.0)
            .map(|l| self.add_eq(&l, 0.0))
            .collect()
    }

    pub fn minimize(&mut self, l: &LinExpr) {
        self.objective = l.clone();
        self.maximize = false;
    }

    pub fn maximize(&mut self, l: &LinExpr) {
        self.objective = l.clone();
        self.maximize = true;
    }

    /// The compiled minimization program (objective negated when maximizing).
    pub fn program(&self) -> ConicProgram {
        let n = self.num_vars();
        let mut objective = vec![0.0; n];
        let s = if self.maximize { -1.0 } else { 1.0 };
        for (j, a) in self.objective.compact() {
            objective[j] += s * a;
        }
        ConicProgram {
            objective,
            constraints: self.constraints.clone(),
            signs: self.signs.clone(),
        }
    }

    pub fn solve(&self, cfg: &SolverConfig) -> Result<ModelSolution, ConicError> {
        let program = self.program();
        let solution = solve(&program, cfg)?;
        let s = if self.maximize { -1.0 } else { 1.0 };
        let value = s * solution.primal_value + self.objective.constant;
        let dual_value = s * solution.dual_value + self.objective.constant;
        Ok(ModelSolution {
            value,
            dual_value,
            maximize: self.maximize,
            program,
            solution,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ModelSolution {
    /// Objective value in the model's own sense.
    pub value: f64,
    pub dual_value: f64,
    pub maximize: bool,
    pub program: ConicProgram,
    pub solution: ConicSolution,
}

impl ModelSolution {
    pub fn is_optimal(&self) -> bool {
        self.solution.is_optimal()
    }

    pub fn scalar(&self, l: &LinExpr) -> f64 {
        l.value(&self.solution.x)
    }

    pub fn matrix(&self, m: &MatExpr) -> Hermitian {
        m.value(&self.solution.x)
    }

    pub fn lmi_multiplier(&self, id: ConstraintId) -> Option<&Hermitian> {
        self.solution.lmi_multiplier(id.0)
    }

    /// Multiplier of an equality, in the sign convention of the minimization
    /// program (negated objective when maximizing).
    pub fn equality_multiplier(&self, id: ConstraintId) -> Option<f64> {
        self.solution.equality_multiplier(id.0)
    }
}
