//! No-signalling assisted communication: the optimal code fidelity SDP and the
//! channel mutual information.

use crate::channels::{Channel, ChannelError};
use crate::conic::model::{LinExpr, MatExpr, Model};
use crate::conic::{ConicError, SolveStatus, SolverConfig};
use crate::qla::{CMatrix, Hermitian, QlaError, C64};
use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum CommError {
    #[error("dimension: {0}")]
    Dimension(String),
    #[error("solver ended with status {0:?}")]
    Solver(SolveStatus),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Qla(#[from] QlaError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

pub type Result<T> = std::result::Result<T, CommError>;

/// Largest supermap Choi dimension compiled in full form by default.
pub const FULL_FORM_MAX_DIM: usize = 24;

/// Which program computes the optimal no-signalling code fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NsForm {
    /// Bipartite no-signalling supermap on registers `(A', B, A, B')`.
    Full,
    /// Two-variable program: maximize `<J, W>` over `0 <= W <= rho (x) I`,
    /// `Tr rho = 1`, `Tr_A W = I / k^2`.
    Reduced,
    /// `Full` when the supermap dimension is at most [`FULL_FORM_MAX_DIM`], else `Reduced`.
    Auto,
}

/// The full-form program. `pi` is the Choi operator of the supermap with inputs
/// `A'` (code input, dimension `k`) and `B` (channel output), and outputs `A`
/// (channel input) and `B'` (code output, dimension `k`), ordered `(A', B, A, B')`.
pub struct NsProgram {
    pub model: Model,
    pub pi: MatExpr,
    pub objective: LinExpr,
    pub dims: [usize; 4],
}

impl NsProgram {
    pub fn compile(e: &Channel, k: usize) -> Result<Self> {
        check_target(k)?;
        let dims = [k, e.d_out(), e.d_in(), k];
        let mut model = Model::new();
        let (pi, _) = model.psd(dims.iter().product());
        for c in ns_constraints(&pi, dims) {
            model.add_mat_eq(&c, &Hermitian::zeros(c.dim()));
        }
        let objective = pi.inner(&link_objective(e, k)?);
        Ok(Self { model, pi, objective, dims })
    }

    /// Largest entry of any constraint residual at `pi`.
    pub fn residual(&self, pi: &Hermitian) -> f64 {
        let pi = MatExpr::constant(pi);
        ns_constraints(&pi, self.dims)
            .iter()
            .map(|c| c.value(&[]).matrix().max_abs())
            .fold(0.0, f64::max)
    }

    /// The supermap that discards both inputs and prepares maximally mixed outputs.
    pub fn trivial_point(&self) -> Hermitian {
        let [_, _, a, b_out] = self.dims;
        let n: usize = self.dims.iter().product();
        Hermitian::identity(n).scale(1.0 / (a * b_out) as f64)
    }
}

/// Supermap validity as a list of expressions that must vanish.
fn ns_constraints(pi: &MatExpr, dims: [usize; 4]) -> Vec<MatExpr> {
    let [a_in, b, a, _] = dims;
    let d = dims.to_vec();
    let id = |n: usize| Hermitian::identity(n);
    let tp = pi.partial_trace(&d, &[0, 1]).expect("dims").sub(&MatExpr::constant(&id(a_in * b)));
    // A' cannot signal to B'.
    let no_ab = pi
        .partial_trace(&d, &[0, 1, 3])
        .expect("dims")
        .sub(&pi.partial_trace(&d, &[1, 3]).expect("dims").kron_left(&id(a_in).scale(1.0 / a_in as f64)));
    // B cannot signal to A.
    let marginal = pi.partial_trace(&d, &[0, 2]).expect("dims").kron_right(&id(b).scale(1.0 / b as f64));
    let no_ba = pi
        .partial_trace(&d, &[0, 1, 2])
        .expect("dims")
        .sub(&marginal.permute(&[a_in, a, b], &[0, 2, 1]).expect("dims"));
    vec![tp, no_ab, no_ba]
}

/// `C` with `<Pi, C> = <Phi_k, J_Theta> / k^2`, where `J_Theta` is the Choi of the
/// code built from `Pi` and the channel, and `Phi_k` the unnormalized maximally
/// entangled projector.
fn link_objective(e: &Channel, k: usize) -> Result<Hermitian> {
    let (d_in, d_out) = (e.d_in(), e.d_out());
    let phi = max_entangled(k);
    let jt = e.choi().transpose();
    // (A', B', A, B) -> (A', B, A, B')
    let c = phi.kron(&jt).permute_subsystems(&[k, k, d_in, d_out], &[0, 3, 2, 1])?;
    Ok(c.scale(1.0 / (k * k) as f64))
}

fn max_entangled(k: usize) -> Hermitian {
    let v: Vec<C64> = (0..k * k).map(|i| if i % (k + 1) == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).collect();
    Hermitian::projector(&v)
}

fn check_target(k: usize) -> Result<()> {
    if k < 2 {
        return Err(CommError::Dimension(format!("target dimension {k} < 2")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct NsFidelity {
    pub value: f64,
    pub form: NsForm,
    pub status: SolveStatus,
    pub iterations: usize,
    pub gap: f64,
}

/// Optimal Choi fidelity with `id_k` of a code built from one use of `e` and a
/// no-signalling supermap.
pub fn ns_achievable_fidelity(e: &Channel, k: usize) -> Result<f64> {
    Ok(ns_achievable_fidelity_with(e, k, NsForm::Auto, &SolverConfig::default())?.value)
}

pub fn ns_achievable_fidelity_with(e: &Channel, k: usize, form: NsForm, cfg: &SolverConfig) -> Result<NsFidelity> {
    check_target(k)?;
    let form = match form {
        NsForm::Auto if k * k * e.d_in() * e.d_out() <= FULL_FORM_MAX_DIM => NsForm::Full,
        NsForm::Auto => NsForm::Reduced,
        f => f,
    };
    let (mut model, objective) = match form {
        NsForm::Full => {
            let p = NsProgram::compile(e, k)?;
            (p.model, p.objective)
        }
        _ => reduced_program(e, k),
    };
    model.maximize(&objective);
    let sol = model.solve(cfg)?;
    if !sol.is_optimal() {
        return Err(CommError::Solver(sol.solution.status));
    }
    Ok(NsFidelity {
        value: sol.value.clamp(1.0 / (k * k) as f64, 1.0),
        form,
        status: sol.solution.status,
        iterations: sol.solution.iterations,
        gap: sol.solution.gap,
    })
}

fn reduced_program(e: &Channel, k: usize) -> (Model, LinExpr) {
    let (a, b) = (e.d_in(), e.d_out());
    let mut m = Model::new();
    let (w, _) = m.psd(a * b);
    let (rho, _) = m.psd(a);
    m.add_psd(&rho.kron_right(&Hermitian::identity(b)).sub(&w));
    m.add_eq(&rho.trace(), 1.0);
    let marginal = w.partial_trace(&[a, b], &[1]).expect("dims");
    m.add_mat_eq(&marginal, &Hermitian::identity(b).scale(1.0 / (k * k) as f64));
    let objective = w.inner(e.choi());
    (m, objective)
}

/// Mutual information result in bits.
#[derive(Debug, Clone)]
pub struct MutualInfoResult {
    pub value: f64,
    pub input: Hermitian,
    pub iterations: usize,
    /// Frank-Wolfe gap at the returned input; `value + gap` bounds the optimum.
    pub gap: f64,
    pub certified: bool,
    /// Objective value after each accepted step, starting from the initial input.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MutualInfoOptions {
    pub max_iterations: usize,
    pub gap_tol: f64,
    pub stall_tol: f64,
    pub kraus_tol: f64,
}

impl Default for MutualInfoOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            gap_tol: 1e-7,
            stall_tol: 1e-15,
            kraus_tol: 1e-13,
        }
    }
}

pub const MAX_MI_DIM: usize = 8;

/// `max_rho S(rho) + S(E(rho)) - S(E^c(rho))` from the maximally mixed input.
pub fn channel_mutual_information(e: &Channel) -> Result<MutualInfoResult> {
    let d = e.d_in();
    channel_mutual_information_from(e, &Hermitian::identity(d).scale(1.0 / d as f64), &MutualInfoOptions::default())
}

/// Same as [`channel_mutual_information`] from a random full-rank input.
pub fn channel_mutual_information_random<R: Rng + ?Sized>(e: &Channel, rng: &mut R) -> Result<MutualInfoResult> {
    let d = e.d_in();
    let g = crate::qla::random_gaussian(d, d, rng);
    let rho = &Hermitian::symmetrize(&g.matmul(&g.adjoint())) + &Hermitian::identity(d).scale(1e-3);
    let rho = rho.scale(1.0 / rho.trace());
    channel_mutual_information_from(e, &rho, &MutualInfoOptions::default())
}

struct Split {
    kraus: Vec<CMatrix>,
}

impl Split {
    fn output(&self, rho: &CMatrix) -> Hermitian {
        let mut out = CMatrix::zeros(self.kraus[0].rows(), self.kraus[0].rows());
        for k in &self.kraus {
            out = &out + &k.matmul(rho).matmul(&k.adjoint());
        }
        Hermitian::symmetrize(&out)
    }

    fn output_adjoint(&self, x: &CMatrix) -> CMatrix {
        let d = self.kraus[0].cols();
        let mut out = CMatrix::zeros(d, d);
        for k in &self.kraus {
            out = &out + &k.adjoint().matmul(x).matmul(k);
        }
        out
    }

    fn environment(&self, rho: &CMatrix) -> Hermitian {
        let r = self.kraus.len();
        Hermitian::symmetrize(&CMatrix::from_fn(r, r, |i, j| {
            self.kraus[i].matmul(rho).matmul(&self.kraus[j].adjoint()).trace()
        }))
    }

    fn environment_adjoint(&self, y: &CMatrix) -> CMatrix {
        let d = self.kraus[0].cols();
        let mut out = CMatrix::zeros(d, d);
        for (i, ki) in self.kraus.iter().enumerate() {
            for (j, kj) in self.kraus.iter().enumerate() {
                let c = y[(j, i)];
                if c != C64::new(0.0, 0.0) {
                    out = &out + &kj.adjoint().matmul(ki).scale(c);
                }
            }
        }
        out
    }

    fn value(&self, rho: &Hermitian) -> Result<f64> {
        let m = rho.matrix();
        Ok(entropy(rho)? + entropy(&self.output(m))? - entropy(&self.environment(m))?)
    }

    /// Gradient in bits, up to a multiple of the identity.
    fn gradient(&self, rho: &Hermitian) -> Result<Hermitian> {
        let m = rho.matrix();
        let a = log2_support(rho)?;
        let b = self.output_adjoint(log2_support(&self.output(m))?.matrix());
        let c = self.environment_adjoint(log2_support(&self.environment(m))?.matrix());
        Ok(Hermitian::symmetrize(&(&(&c - &b) - a.matrix())))
    }
}

const EIG_FLOOR: f64 = 1e-300;

fn entropy(rho: &Hermitian) -> Result<f64> {
    Ok(rho
        .eigenvalues()?
        .into_iter()
        .filter(|&l| l > EIG_FLOOR)
        .map(|l| -l * l.log2())
        .sum())
}

/// Base-2 logarithm on the support, zero on the kernel.
fn log2_support(rho: &Hermitian) -> Result<Hermitian> {
    let scale = rho.trace().abs().max(1.0);
    Ok(rho.map_spectrum(|l| if l > 1e-14 * scale { l.log2() } else { 0.0 })?)
}

fn exp_normalized(h: &Hermitian) -> Result<Hermitian> {
    let top = h.max_eigenvalue()?;
    let e = h.map_spectrum(|l| (l - top).exp())?;
    Ok(e.scale(1.0 / e.trace()))
}

pub fn channel_mutual_information_from(e: &Channel, rho0: &Hermitian, opts: &MutualInfoOptions) -> Result<MutualInfoResult> {
    if e.d_in() > MAX_MI_DIM || e.d_out() > MAX_MI_DIM {
        return Err(CommError::Dimension(format!("{} -> {} exceeds {MAX_MI_DIM}", e.d_in(), e.d_out())));
    }
    if rho0.dim() != e.d_in() {
        return Err(CommError::Dimension(format!("input of dimension {} for {} -> {}", rho0.dim(), e.d_in(), e.d_out())));
    }
    let split = Split { kraus: e.kraus(opts.kraus_tol)? };
    let mut rho = rho0.scale(1.0 / rho0.trace());
    let mut value = split.value(&rho)?;
    let mut history = vec![value];
    let mut eta: f64 = 1.0;
    let mut gap = f64::INFINITY;
    let mut stalls = 0;
    let mut iterations = 0;
    let ln2 = std::f64::consts::LN_2;

    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let g = split.gradient(&rho)?;
        gap = (g.max_eigenvalue()? - g.inner(&rho)).max(0.0);
        if gap <= opts.gap_tol {
            break;
        }
        let log_rho = rho.map_spectrum(|l| l.max(EIG_FLOOR).ln())?;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = exp_normalized(&(&log_rho + &g.scale(eta * ln2)))?;
            let v = split.value(&trial)?;
            if v >= value {
                let gain = v - value;
                rho = trial;
                value = v;
                history.push(v);
                accepted = true;
                stalls = if gain <= opts.stall_tol { stalls + 1 } else { 0 };
                eta = (eta * 1.5).min(1e3);
                break;
            }
            eta *= 0.5;
        }
        if !accepted || stalls >= 5 {
            break;
        }
    }
    Ok(MutualInfoResult {
        value,
        input: rho,
        iterations,
        gap,
        certified: gap <= opts.gap_tol || stalls >= 5,
        history,
    })
}
