//! Linear and semidefinite programming with dual certificates.
//!
//! Programs are stated over real scalar variables `x`:
//!
//! ```text
//! minimize    c^T x
//! subject to  sum_j a_j x_j = b            (equalities)
//!             G_0 + sum_j x_j G_j >= 0      (LMIs, Hermitian blocks)
//!             x_j >= 0 / <= 0 / free        (sign constraints)
//! ```
//!
//! The conic dual is `maximize b^T y - sum <G_0, Z>` subject to
//! `c_j = a_j^T y + sum <G_j, Z> + s_j` with `Z >= 0` per LMI and `s_j` of the
//! sign matching the variable's sign constraint. A solution reports the
//! primal point together with `y`, `Z` and `s`.

mod dump;
mod ipm;
pub mod model;
mod presolve;
mod simplex;
mod verify;

use num_complex::Complex64;
use thiserror::Error;

use crate::qla::{CMatrix, Hermitian, C64};

pub use dump::dump_program;
pub use verify::{verify, VerifyReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("malformed program: {0}")]
    Malformed(String),
}

/// Sparse Hermitian matrix stored by its upper triangle (diagonal included).
/// The lower triangle is implied by conjugation.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseHermitian {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl SparseHermitian {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            entries: (0..dim).map(|i| (i, i, C64::new(1.0, 0.0))).collect(),
        }
    }

    /// Builds from upper-triangle entries; entries with `r > c` are mirrored
    /// into the upper triangle, duplicates are summed, diagonal entries keep
    /// only their real part.
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (usize, usize, C64)>) -> Self {
        let mut map = std::collections::BTreeMap::new();
        for (r, c, v) in entries {
            assert!(r < dim && c < dim, "entry ({r},{c}) outside dimension {dim}");
            let (r, c, v) = if r <= c { (r, c, v) } else { (c, r, v.conj()) };
            let v = if r == c { C64::new(v.re, 0.0) } else { v };
            *map.entry((r, c)).or_insert(C64::new(0.0, 0.0)) += v;
        }
        Self {
            dim,
            entries: map
                .into_iter()
                .filter(|(_, v)| *v != C64::new(0.0, 0.0))
                .map(|((r, c), v)| (r, c, v))
                .collect(),
        }
    }

    pub fn from_hermitian(h: &Hermitian) -> Self {
        Self::from_dense(h.matrix())
    }

    /// Reads the upper triangle of a square matrix assumed Hermitian.
    pub fn from_dense(m: &CMatrix) -> Self {
        let n = m.rows();
        let mut entries = Vec::new();
        for r in 0..n {
            for c in r..n {
                let v = m[(r, c)];
                let v = if r == c { C64::new(v.re, 0.0) } else { v };
                if v != C64::new(0.0, 0.0) {
                    entries.push((r, c, v));
                }
            }
        }
        Self { dim: n, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper-triangle entries.
    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries.iter().all(|&(r, c, _)| r == c)
    }

    /// Full entry list with both triangles.
    pub fn full_entries(&self) -> Vec<(usize, usize, C64)> {
        let mut out = Vec::with_capacity(2 * self.entries.len());
        for &(r, c, v) in &self.entries {
            out.push((r, c, v));
            if r != c {
                out.push((c, r, v.conj()));
            }
        }
        out
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.full_entries() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn to_hermitian(&self) -> Hermitian {
        Hermitian::symmetrize(&self.to_dense())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * s)).collect(),
        }
    }

    /// `Re Tr(self * m)` for a dense Hermitian `m`.
    pub fn inner_dense(&self, m: &CMatrix) -> f64 {
        self.entries
            .iter()
            .map(|&(r, c, v)| {
                if r == c {
                    v.re * m[(r, r)].re
                } else {
                    2.0 * (v * m[(c, r)]).re
                }
            })
            .sum()
    }
}

/// Linear matrix inequality `constant + sum_j x_j G_j >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lmi {
    pub dim: usize,
    pub constant: SparseHermitian,
    pub terms: Vec<(usize, SparseHermitian)>,
}

impl Lmi {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            constant: SparseHermitian::zeros(dim),
            terms: Vec::new(),
        }
    }

    /// Evaluates the affine map at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Hermitian {
        let mut m = self.constant.to_dense();
        for (j, g) in &self.terms {
            for (r, c, v) in g.full_entries() {
                m[(r, c)] += v * x[*j];
            }
        }
        Hermitian::symmetrize(&m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Equality { coeffs: Vec<(usize, f64)>, rhs: f64 },
    Lmi(Lmi),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarSign {
    Free,
    NonNegative,
    NonPositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub signs: Vec<VarSign>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            signs: vec![VarSign::Free; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.constraints.push(Constraint::Equality { coeffs, rhs });
    }

    pub fn add_lmi(&mut self, lmi: Lmi) {
        self.constraints.push(Constraint::Lmi(lmi));
    }

    /// True when every LMI block is diagonal, i.e. the program is an LP.
    pub fn is_lp(&self) -> bool {
        self.constraints.iter().all(|c| match c {
            Constraint::Equality { .. } => true,
            Constraint::Lmi(l) => l.constant.is_diagonal() && l.terms.iter().all(|(_, g)| g.is_diagonal()),
        })
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Structural checks: variable indices, block dimensions, vector lengths.
    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.num_vars();
        if self.signs.len() != n {
            return Err(ConicError::Malformed(format!(
                "{} sign entries for {n} variables",
                self.signs.len()
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(ConicError::Malformed("non-finite objective".into()));
        }
        for (k, con) in self.constraints.iter().enumerate() {
            match con {
                Constraint::Equality { coeffs, rhs } => {
                    if !rhs.is_finite() || coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                        return Err(ConicError::Malformed(format!("equality {k} is invalid")));
                    }
                }
                Constraint::Lmi(l) => {
                    if l.constant.dim() != l.dim {
                        return Err(ConicError::Malformed(format!("LMI {k}: constant has wrong dimension")));
                    }
                    for (j, g) in &l.terms {
                        if *j >= n {
                            return Err(ConicError::Malformed(format!("LMI {k}: variable {j} out of range")));
                        }
                        if g.dim() != l.dim {
                            return Err(ConicError::Malformed(format!("LMI {k}: term for x{j} has wrong dimension")));
                        }
                        if g.entries().iter().any(|(_, _, v)| !v.re.is_finite() || !v.im.is_finite()) {
                            return Err(ConicError::Malformed(format!("LMI {k}: non-finite entry")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Dual multiplier attached to one constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum Multiplier {
    Equality(f64),
    Lmi(Hermitian),
}

/// Certificate attached to an infeasible or unbounded status.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// Dual improving ray: multipliers with `sum <G_j, Z> + a_j y + s_j = 0`
    /// and `b^T y - sum <G_0, Z> > 0`, proving primal infeasibility.
    Infeasibility { multipliers: Vec<Multiplier>, sign_multipliers: Vec<f64> },
    /// Primal improving ray: `d` with `c^T d < 0` keeping every constraint
    /// satisfied along `x + t d`.
    Unboundedness { direction: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    pub x: Vec<f64>,
    /// One entry per constraint, in program order.
    pub multipliers: Vec<Multiplier>,
    /// Multipliers of the sign constraints (zero for free variables).
    pub sign_multipliers: Vec<f64>,
    /// `|primal - dual| / max(1, |primal|)`.
    pub gap: f64,
    pub iterations: usize,
    pub certificate: Option<Certificate>,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Hermitian multiplier of constraint `k`.
    pub fn lmi_multiplier(&self, k: usize) -> Option<&Hermitian> {
        match self.multipliers.get(k) {
            Some(Multiplier::Lmi(z)) => Some(z),
            _ => None,
        }
    }

    pub fn equality_multiplier(&self, k: usize) -> Option<f64> {
        match self.multipliers.get(k) {
            Some(Multiplier::Equality(y)) => Some(*y),
            _ => None,
        }
    }

    pub(crate) fn relative_gap(primal: f64, dual: f64) -> f64 {
        (primal - dual).abs() / primal.abs().max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Target relative primal/dual infeasibility.
    pub feasibility_tol: f64,
    /// Target relative duality gap.
    pub gap_tol: f64,
    /// Iterate norm beyond which the run is treated as diverging.
    pub divergence_bound: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Dispatch programs whose blocks are all diagonal to the simplex method.
    pub lp_fast_path: bool,
    /// Largest variable count for which equalities are eliminated by a
    /// nullspace parameterization instead of being kept in the Newton system.
    pub elimination_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 150,
            feasibility_tol: 1e-10,
            gap_tol: 1e-10,
            divergence_bound: 1e12,
            step_fraction: 0.98,
            lp_fast_path: true,
            elimination_limit: 700,
        }
    }
}

/// Solves the program. Malformed input is the only error; numerical trouble
/// is reported through the status.
pub fn solve(p: &ConicProgram, cfg: &SolverConfig) -> Result<ConicSolution, ConicError> {
    p.validate()?;
    if cfg.lp_fast_path && p.is_lp() {
        return Ok(simplex::solve_lp(p));
    }
    solve_ipm(p, cfg)
}

/// Solves with the interior-point method regardless of structure.
pub fn solve_ipm(p: &ConicProgram, cfg: &SolverConfig) -> Result<ConicSolution, ConicError> {
    p.validate()?;
    Ok(match presolve::presolve(p, cfg) {
        presolve::Presolved::Reduced(reduced) => {
            let out = ipm::run(&reduced.problem, cfg);
            reduced.postsolve(p, out)
        }
        presolve::Presolved::Decided(sol) => sol,
    })
}

/// Solves an LP with the simplex method. Panics if the program has
/// non-diagonal blocks.
pub fn solve_simplex(p: &ConicProgram) -> Result<ConicSolution, ConicError> {
    p.validate()?;
    if !p.is_lp() {
        return Err(ConicError::Malformed("simplex requires diagonal blocks".into()));
    }
    Ok(simplex::solve_lp(p))
}

pub(crate) type CMat = nalgebra::DMatrix<Complex64>;

pub(crate) fn to_nalgebra(m: &CMatrix) -> CMat {
    CMat::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)])
}

pub(crate) fn from_nalgebra(m: &CMat) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}
