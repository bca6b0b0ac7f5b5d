//! Robustness, weight and free fidelity of states and channels.
//!
//! Fidelities are squared: `F(phi, sigma) = <phi|sigma|phi>` for pure `phi`.
//! Channel quantities are computed on Choi matrices; the free fidelity of a
//! channel is the fidelity between normalized Choi states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channels::Channel;
use crate::conic::model::{ConstraintId, MatExpr, Model, ModelSolution};
use crate::conic::{Certificate, ConicError, SolveStatus, SolverConfig};
use crate::qla::{fidelity, CMatrix, DensityOperator, Hermitian, QlaError, C64};
use crate::stab::{self, StabError};
use crate::theories::{FreeSet, FreeSetKind, ObjectSpace, TheoryError};

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("object space {object:?} does not match free set {free_set}")]
    SpaceMismatch { object: ObjectSpace, free_set: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("solver ended with status {0:?}")]
    Solver(SolveStatus),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Qla(#[from] QlaError),
    #[error(transparent)]
    Stab(#[from] StabError),
}

pub type Result<T> = std::result::Result<T, MeasureError>;

#[derive(Debug, Clone)]
pub enum Object {
    State(DensityOperator),
    Channel(Channel),
}

impl Object {
    /// The state, or the unnormalized Choi matrix.
    pub fn operator(&self) -> &Hermitian {
        match self {
            Object::State(s) => s.op(),
            Object::Channel(c) => c.choi(),
        }
    }

    pub fn space(&self) -> ObjectSpace {
        match self {
            Object::State(s) => ObjectSpace::State { dim: s.dim() },
            Object::Channel(c) => ObjectSpace::Channel {
                d_in: c.d_in(),
                d_out: c.d_out(),
            },
        }
    }
}

impl From<Channel> for Object {
    fn from(c: Channel) -> Self {
        Object::Channel(c)
    }
}

impl From<DensityOperator> for Object {
    fn from(s: DensityOperator) -> Self {
        Object::State(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureValue {
    Finite(f64),
    Infinite,
}

impl MeasureValue {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            MeasureValue::Finite(v) => Some(v),
            MeasureValue::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, MeasureValue::Infinite)
    }
}

/// A free element `J_M` (state or unnormalized Choi matrix) and its coefficient.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub element: Hermitian,
    pub coefficient: f64,
}

/// Outcome of checking a witness against the free set.
#[derive(Debug, Clone)]
pub struct WitnessCheck {
    /// `max <X, J_M>` (robustness) or `min <X, J_M>` (weight) over free elements.
    pub support: f64,
    /// Extreme value of `<X, J_M>` over the random free samples.
    pub sampled: f64,
    pub samples: usize,
    /// `|<X, J> - value|`.
    pub value_residual: f64,
    pub min_eigenvalue: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub gap: f64,
    pub witness_check: Option<WitnessCheck>,
    pub certificate: Option<Certificate>,
}

impl Diagnostics {
    fn analytic() -> Self {
        Self {
            status: SolveStatus::Optimal,
            iterations: 0,
            gap: 0.0,
            witness_check: None,
            certificate: None,
        }
    }

    fn from_solution(s: &ModelSolution) -> Self {
        Self {
            status: s.solution.status,
            iterations: s.solution.iterations,
            gap: s.solution.gap,
            witness_check: None,
            certificate: s.solution.certificate.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeasureResult {
    pub value: MeasureValue,
    pub witness: Option<Hermitian>,
    pub decomposition: Option<Decomposition>,
    pub diagnostics: Diagnostics,
}

impl MeasureResult {
    /// The finite value; panics on an infinite one.
    pub fn value(&self) -> f64 {
        self.value.finite().expect("infinite measure value")
    }
}

#[derive(Debug, Clone)]
pub struct MeasureOptions {
    pub solver: SolverConfig,
    /// Random free elements used to re-check the witness.
    pub verify_samples: usize,
    pub seed: u64,
    pub witness_tol: f64,
    pub value_tol: f64,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            verify_samples: 1000,
            seed: 0x5eed,
            witness_tol: 1e-7,
            value_tol: 1e-6,
        }
    }
}

fn check_space(obj: &Object, fs: &FreeSet) -> Result<()> {
    if obj.space() != fs.space {
        return Err(MeasureError::SpaceMismatch {
            object: obj.space(),
            free_set: fs.name.clone(),
        });
    }
    Ok(())
}

fn kernel_tol(j: &Hermitian) -> Result<f64> {
    Ok(1e-9 * j.max_eigenvalue()?.max(1.0))
}

pub fn robustness(obj: &Object, fs: &FreeSet) -> Result<MeasureResult> {
    robustness_with(obj, fs, &MeasureOptions::default())
}

/// `min lambda` such that `J <= lambda J_M` for a free `M`.
pub fn robustness_with(obj: &Object, fs: &FreeSet, opts: &MeasureOptions) -> Result<MeasureResult> {
    check_space(obj, fs)?;
    let j = obj.operator();
    let mut m = Model::new();
    let el = fs.cone_element(&mut m, None);
    let id = m.add_psd(&el.k.clone().sub(&MatExpr::constant(j)));
    m.minimize(&el.scale);
    let sol = m.solve(&opts.solver)?;
    let mut diagnostics = Diagnostics::from_solution(&sol);
    match sol.solution.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Ok(MeasureResult {
                value: MeasureValue::Infinite,
                witness: None,
                decomposition: None,
                diagnostics,
            })
        }
        s => return Err(MeasureError::Solver(s)),
    }
    let value = sol.value;
    let k = sol.matrix(&el.k);
    let decomposition = (value > 0.0).then(|| Decomposition {
        element: k.scale(1.0 / value),
        coefficient: value,
    });
    let mut witness = multiplier(&sol, id)?;
    let (support, _) = fs.support_function(&witness, true)?;
    if support > 1.0 {
        witness = witness.scale(1.0 / support);
    }
    diagnostics.witness_check = Some(check_witness(&witness, j, value, fs, true, None, opts)?);
    Ok(MeasureResult {
        value: MeasureValue::Finite(value),
        witness: Some(witness),
        decomposition,
        diagnostics,
    })
}

pub fn weight(obj: &Object, fs: &FreeSet) -> Result<MeasureResult> {
    weight_with(obj, fs, &MeasureOptions::default())
}

/// `max lambda` such that `J >= lambda J_M` for a free `M`.
pub fn weight_with(obj: &Object, fs: &FreeSet, opts: &MeasureOptions) -> Result<MeasureResult> {
    check_space(obj, fs)?;
    let j = obj.operator();
    let ker = j.kernel(kernel_tol(j)?)?;
    let p_ker = Hermitian::symmetrize(&ker.matmul(&ker.adjoint()));

    // Free elements under J live in its support.
    let allowed: Option<Vec<bool>> = fs
        .vertices()
        .map(|vs| vs.iter().map(|v| ker.cols() == 0 || v.inner(&p_ker) <= 1e-9).collect());
    let any_allowed = allowed.as_ref().is_none_or(|a| a.iter().any(|&b| b));

    let (value, z, face, decomposition, mut diagnostics) = if any_allowed {
        let mut m = Model::new();
        let reduced = ker.cols() > 0 && !fs.is_polytope();
        // Facial reduction: restrict K to the support of J so the program keeps a strictly feasible point.
        let (el, id, support) = if reduced {
            let v = j.support(kernel_tol(j)?)?;
            let el = fs
                .cone_element_on(&mut m, &v)
                .ok_or_else(|| MeasureError::Unsupported(format!("weight over {}", fs.name)))?;
            let vh = v.adjoint();
            let slack = MatExpr::constant(j).sub(&el.k).map(|c| vh.matmul(c).matmul(&v));
            let id = m.add_psd(&slack);
            (el, id, Some(v))
        } else {
            let el = fs.cone_element(&mut m, allowed.as_deref());
            let id = m.add_psd(&MatExpr::constant(j).sub(&el.k));
            (el, id, None)
        };
        m.maximize(&el.scale);
        let sol = m.solve(&opts.solver)?;
        if !sol.is_optimal() {
            return Err(MeasureError::Solver(sol.solution.status));
        }
        let value = sol.value.max(0.0);
        let k = sol.matrix(&el.k);
        let decomposition = (value > 1e-12).then(|| Decomposition {
            element: k.scale(1.0 / value),
            coefficient: value,
        });
        let mut z = multiplier(&sol, id)?;
        if let Some(v) = &support {
            z = Hermitian::symmetrize(&v.matmul(z.matrix()).matmul(&v.adjoint()));
        }
        (value, z, support, decomposition, Diagnostics::from_solution(&sol))
    } else {
        (0.0, Hermitian::zeros(j.dim()), None, None, Diagnostics::analytic())
    };

    // Any M with J >= lambda J_M is supported on the range of J, so a witness
    // checked on that face certifies the weight.
    let witness = match &face {
        Some(v) => match fs.support_function_on(&z, v, false)? {
            Some((min, _)) if min > 0.0 && min < 1.0 => z.scale(1.0 / min),
            _ => z,
        },
        None => repair_weight_witness(&z, &p_ker, ker.cols() > 0, fs)?,
    };
    diagnostics.witness_check = Some(check_witness(&witness, j, value, fs, false, face.as_ref(), opts)?);
    Ok(MeasureResult {
        value: MeasureValue::Finite(value),
        witness: Some(witness),
        decomposition,
        diagnostics,
    })
}

/// Lifts `Z` off the support of `J` with a multiple of the kernel projector
/// until `<X, J_M> >= 1` holds for every free `M`.
fn repair_weight_witness(z: &Hermitian, p_ker: &Hermitian, singular: bool, fs: &FreeSet) -> Result<Hermitian> {
    let (min, _) = fs.support_function(z, false)?;
    if min >= 1.0 - 1e-9 || !singular {
        return Ok(if min > 0.0 && min < 1.0 { z.scale(1.0 / min) } else { z.clone() });
    }
    let mut t = 1.0;
    for _ in 0..80 {
        let x = z + &p_ker.scale(t);
        let (min, _) = fs.support_function(&x, false)?;
        if min >= 1.0 - 1e-9 {
            return Ok(if min < 1.0 { x.scale(1.0 / min) } else { x });
        }
        t *= 2.0;
    }
    Err(MeasureError::Unsupported("weight witness could not be lifted off the support".into()))
}

fn multiplier(sol: &ModelSolution, id: ConstraintId) -> Result<Hermitian> {
    sol.lmi_multiplier(id)
        .cloned()
        .ok_or(MeasureError::Solver(SolveStatus::NumericalFailure))
}

fn check_witness(
    x: &Hermitian,
    j: &Hermitian,
    value: f64,
    fs: &FreeSet,
    upper: bool,
    face: Option<&CMatrix>,
    opts: &MeasureOptions,
) -> Result<WitnessCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut sampled = if upper { f64::NEG_INFINITY } else { f64::INFINITY };
    let mut samples = 0;
    let support = match face {
        Some(v) => fs.support_function_on(x, v, upper)?.map_or(sampled, |s| s.0),
        None => fs.support_function(x, upper)?.0,
    };
    // Random free elements are generically off the face.
    let verify_samples = if face.is_some() { 0 } else { opts.verify_samples };
    if let Some(vs) = fs.vertices() {
        let unit = fs.space.unit_trace();
        if matches!(fs.space, ObjectSpace::State { .. }) {
            for v in vs {
                let s = v.inner(x) * unit;
                sampled = if upper { sampled.max(s) } else { sampled.min(s) };
                samples += 1;
            }
        }
    }
    for _ in 0..verify_samples {
        let e = fs.sample(&mut rng)?;
        let s = e.inner(x);
        sampled = if upper { sampled.max(s) } else { sampled.min(s) };
        samples += 1;
    }
    let value_residual = (x.inner(j) - value).abs();
    let min_eigenvalue = x.min_eigenvalue()?;
    let tol = opts.witness_tol;
    let feasible = if upper {
        support <= 1.0 + tol && (samples == 0 || sampled <= 1.0 + tol)
    } else {
        support >= 1.0 - tol && (samples == 0 || sampled >= 1.0 - tol)
    };
    let passed = feasible
        && value_residual <= opts.value_tol * value.abs().max(1.0)
        && min_eigenvalue >= -1e-8 * x.max_eigenvalue()?.abs().max(1.0);
    Ok(WitnessCheck {
        support,
        sampled,
        samples,
        value_residual,
        min_eigenvalue,
        passed,
    })
}

pub fn free_fidelity(obj: &Object, fs: &FreeSet) -> Result<MeasureResult> {
    free_fidelity_with(obj, fs, &MeasureOptions::default())
}

/// `max F(rho, sigma)` over free `sigma`; for channels, over normalized Choi states.
pub fn free_fidelity_with(obj: &Object, fs: &FreeSet, opts: &MeasureOptions) -> Result<MeasureResult> {
    check_space(obj, fs)?;
    let unit = fs.space.unit_trace();
    let rho = obj.operator().scale(1.0 / unit);
    let eig = rho.eig()?;
    let pure = eig.values.iter().rev().skip(1).all(|&v| v.abs() <= 1e-10);
    if pure {
        let (best, element) = match &fs.kind {
            FreeSetKind::VertexPolytope { vertices, .. } if matches!(fs.space, ObjectSpace::State { .. }) => {
                let (i, f) = vertices
                    .iter()
                    .map(|v| v.inner(&rho))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, f)| if f > b.1 { (i, f) } else { b });
                (f, vertices[i].clone())
            }
            _ => {
                let (s, element) = fs.support_function(&rho, true)?;
                (s / unit, element)
            }
        };
        return Ok(MeasureResult {
            value: MeasureValue::Finite(best.clamp(0.0, 1.0)),
            witness: None,
            decomposition: Some(Decomposition {
                element,
                coefficient: 1.0,
            }),
            diagnostics: Diagnostics::analytic(),
        });
    }

    let d = rho.dim();
    let mut m = Model::new();
    let el = fs.cone_element(&mut m, None);
    m.add_eq(&el.scale, 1.0);
    let sigma = el.k.scale(1.0 / unit);
    let w = m.hermitian(2 * d);
    m.add_psd(&w);
    let block = |r0: usize, c0: usize| move |c: &CMatrix| CMatrix::from_fn(d, d, |r, k| c[(r0 + r, c0 + k)]);
    m.add_mat_eq(&w.map(block(0, 0)), &rho);
    m.add_mat_eq(&w.map(block(d, d)).sub(&sigma), &Hermitian::zeros(d));
    let half = CMatrix::from_fn(2 * d, 2 * d, |r, c| {
        if r + d == c || c + d == r {
            C64::new(0.5, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    m.maximize(&w.inner(&Hermitian::symmetrize(&half)));
    let sol = m.solve(&opts.solver)?;
    if !sol.is_optimal() {
        return Err(MeasureError::Solver(sol.solution.status));
    }
    let element = sol.matrix(&el.k);
    let state = element.scale(1.0 / unit);
    let exact = fidelity(&rho, &Hermitian::symmetrize(state.matrix()))?;
    let value = exact.max(sol.value.max(0.0).powi(2)).clamp(0.0, 1.0);
    Ok(MeasureResult {
        value: MeasureValue::Finite(value),
        witness: None,
        decomposition: Some(Decomposition {
            element,
            coefficient: 1.0,
        }),
        diagnostics: Diagnostics::from_solution(&sol),
    })
}

/// Exact robustness against separable channels for `d_in <= 3`, `d_out = 2`.
pub fn sep_robustness_analytic(e: &Channel) -> Result<f64> {
    if e.d_in() > 3 || e.d_out() != 2 {
        return Err(MeasureError::Unsupported(format!(
            "separable robustness formula for {} -> {} channels",
            e.d_in(),
            e.d_out()
        )));
    }
    Ok(e.choi().max_eigenvalue()?.max(1.0))
}

/// Channel monotones of a diagonal unitary obtained from its injection state.
#[derive(Debug, Clone)]
pub struct InjectionReport {
    pub qubits: usize,
    pub state: Vec<C64>,
    pub robustness: MeasureResult,
    pub weight: MeasureResult,
    pub fidelity: MeasureResult,
}

/// `R`, `W`, `F` of the gate `u` as the stabilizer monotones of `u|+>^k`.
pub fn injection_reduction(u: &CMatrix, opts: &MeasureOptions) -> Result<InjectionReport> {
    let d = u.rows();
    if !u.is_square() || !d.is_power_of_two() || d < 2 {
        return Err(MeasureError::Unsupported(format!("gate of shape {}x{}", u.rows(), u.cols())));
    }
    let k = d.trailing_zeros() as usize;
    if k > 3 {
        return Err(MeasureError::Unsupported(format!("injection on {k} qubits")));
    }
    if !u.is_diagonal(1e-10) {
        return Err(MeasureError::Unsupported("non-diagonal gate".into()));
    }
    if (0..d).any(|i| (u[(i, i)].norm() - 1.0).abs() > 1e-10) {
        return Err(MeasureError::Unsupported("gate is not unitary".into()));
    }
    let amp = 1.0 / (d as f64).sqrt();
    let state: Vec<C64> = (0..d).map(|i| u[(i, i)] * amp).collect();
    let poly = stab::enumerate(k)?;
    let (f, idx) = stab::stabilizer_fidelity(&state, &poly)?;
    let fs = FreeSet::stab_states(k)?;
    let obj = Object::State(DensityOperator::pure(&state)?);
    let fidelity = MeasureResult {
        value: MeasureValue::Finite(f),
        witness: None,
        decomposition: Some(Decomposition {
            element: poly.vertices[idx].projector(),
            coefficient: 1.0,
        }),
        diagnostics: Diagnostics::analytic(),
    };
    Ok(InjectionReport {
        qubits: k,
        robustness: robustness_with(&obj, &fs, opts)?,
        weight: weight_with(&obj, &fs, opts)?,
        fidelity,
        state,
    })
}
