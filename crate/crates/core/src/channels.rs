//! Quantum channels stored as unnormalized Choi matrices.
//!
//! The Choi matrix of `E: A -> B` is `J = sum_ij |i><j| ⊗ E(|i><j|)` with the
//! input register first, so `Tr J = d_in` and `Tr_B J = I_A` for channels.
//! Tensor products group inputs before outputs: `E ⊗ F` lives on
//! `(A_1 A_2) ⊗ (B_1 B_2)`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::conic::model::Model;
use crate::conic::{ConicError, SolveStatus, SolverConfig};
use crate::qla::{
    self, fidelity, max_entangled, pauli_z, unitarity_defect, CMatrix, DensityOperator, Hermitian, QlaError,
    Tolerances, C64,
};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("matrix is not unitary (defect {0:.3e})")]
    NotUnitary(f64),
    #[error("not a valid channel: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("solver returned {0:?}")]
    Solver(SolveStatus),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Qla(#[from] QlaError),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ChannelError::Parameter(format!("{name} = {v} not in [0, 1]")))
    }
}

/// Completely positive trace-preserving map.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    d_in: usize,
    d_out: usize,
    choi: Hermitian,
}

/// Completely positive trace-non-increasing map.
#[derive(Debug, Clone, PartialEq)]
pub struct SubChannel {
    d_in: usize,
    d_out: usize,
    choi: Hermitian,
}

fn check_cp(d_in: usize, d_out: usize, choi: &Hermitian, tol: &Tolerances) -> Result<Hermitian> {
    if choi.dim() != d_in * d_out {
        return Err(ChannelError::Dimension(format!(
            "Choi of dimension {} for {d_in} -> {d_out}",
            choi.dim()
        )));
    }
    let min = choi.min_eigenvalue()?;
    if min < -tol.psd {
        return Err(ChannelError::Invalid(format!("Choi has eigenvalue {min:.3e}")));
    }
    Ok(choi.partial_trace(&[d_in, d_out], &[0])?)
}

impl Channel {
    /// Validates complete positivity and trace preservation with the default tolerances.
    pub fn new(d_in: usize, d_out: usize, choi: Hermitian) -> Result<Self> {
        Self::with_tolerances(d_in, d_out, choi, &Tolerances::default())
    }

    pub fn with_tolerances(d_in: usize, d_out: usize, choi: Hermitian, tol: &Tolerances) -> Result<Self> {
        let marginal = check_cp(d_in, d_out, &choi, tol)?;
        let dev = (marginal.matrix() - &CMatrix::identity(d_in)).max_abs();
        if dev > tol.trace_preserving {
            return Err(ChannelError::Invalid(format!("Tr_B J deviates from I by {dev:.3e}")));
        }
        Ok(Self { d_in, d_out, choi })
    }

    pub fn from_kraus(d_in: usize, d_out: usize, kraus: &[CMatrix]) -> Result<Self> {
        let mut j = CMatrix::zeros(d_in * d_out, d_in * d_out);
        for k in kraus {
            if k.rows() != d_out || k.cols() != d_in {
                return Err(ChannelError::Dimension(format!(
                    "Kraus operator {}x{} for {d_in} -> {d_out}",
                    k.rows(),
                    k.cols()
                )));
            }
            // (I ⊗ K) sum_i |ii>
            let v: Vec<C64> = (0..d_in)
                .flat_map(|i| (0..d_out).map(move |o| (i, o)))
                .map(|(i, o)| k[(o, i)])
                .collect();
            j = &j + &CMatrix::outer(&v);
        }
        Self::new(d_in, d_out, Hermitian::symmetrize(&j))
    }

    /// Canonical Kraus operators from the Choi eigendecomposition, dropping
    /// eigenvalues below `tol`.
    pub fn kraus(&self, tol: f64) -> Result<Vec<CMatrix>> {
        let eig = self.choi.eig()?;
        Ok(eig
            .values
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, &l)| l > tol)
            .map(|(k, &l)| {
                let s = l.sqrt();
                CMatrix::from_fn(self.d_out, self.d_in, |o, i| eig.vectors[(i * self.d_out + o, k)] * s)
            })
            .collect())
    }

    pub fn identity(d: usize) -> Self {
        Self {
            d_in: d,
            d_out: d,
            choi: max_entangled(d),
        }
    }

    pub fn unitary(u: &CMatrix) -> Result<Self> {
        let defect = unitarity_defect(u);
        if defect > 1e-10 {
            return Err(ChannelError::NotUnitary(defect));
        }
        Self::from_kraus(u.cols(), u.rows(), std::slice::from_ref(u))
    }

    /// `D_p(rho) = (1 - p) rho + p I/d`.
    pub fn depolarizing(p: f64, d: usize) -> Result<Self> {
        check_unit("p", p)?;
        let phi = max_entangled(d).scale(1.0 - p);
        let noise = Hermitian::identity(d * d).scale(p / d as f64);
        Self::new(d, d, Hermitian::symmetrize(&(phi.matrix() + noise.matrix())))
    }

    /// `Z_p(rho) = (1 - p) rho + p Z rho Z`.
    pub fn dephasing(p: f64) -> Result<Self> {
        check_unit("p", p)?;
        Self::from_kraus(
            2,
            2,
            &[CMatrix::identity(2).scale_real((1.0 - p).sqrt()), pauli_z().scale_real(p.sqrt())],
        )
    }

    /// Amplitude damping with Kraus operators `[[1, 0], [0, sqrt(1-g)]]` and
    /// `[[0, sqrt(g)], [0, 0]]`.
    pub fn amplitude_damping(gamma: f64) -> Result<Self> {
        check_unit("gamma", gamma)?;
        let k0 = CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, (1.0 - gamma).sqrt()])?;
        let k1 = CMatrix::from_real(2, 2, &[0.0, gamma.sqrt(), 0.0, 0.0])?;
        Self::from_kraus(2, 2, &[k0, k1])
    }

    /// Qubit to qutrit `(1-q)[(1-p) rho + p Z rho Z] + q Tr(rho) |2><2|`.
    pub fn dephrasure(p: f64, q: f64) -> Result<Self> {
        check_unit("p", p)?;
        check_unit("q", q)?;
        let a = ((1.0 - q) * (1.0 - p)).sqrt();
        let b = ((1.0 - q) * p).sqrt();
        let c = q.sqrt();
        let k0 = CMatrix::from_real(3, 2, &[a, 0.0, 0.0, a, 0.0, 0.0])?;
        let k1 = CMatrix::from_real(3, 2, &[b, 0.0, 0.0, -b, 0.0, 0.0])?;
        let k2 = CMatrix::from_real(3, 2, &[0.0, 0.0, 0.0, 0.0, c, 0.0])?;
        let k3 = CMatrix::from_real(3, 2, &[0.0, 0.0, 0.0, 0.0, 0.0, c])?;
        Self::from_kraus(2, 3, &[k0, k1, k2, k3])
    }

    /// Replacement channel `rho -> Tr(rho) sigma`, Choi `I ⊗ sigma`.
    pub fn replacement(sigma: &DensityOperator, d_in: usize) -> Self {
        Self {
            d_in,
            d_out: sigma.dim(),
            choi: Hermitian::identity(d_in).kron(sigma.op()),
        }
    }

    /// Random channel with `rank` Kraus operators taken from a Gaussian
    /// isometry; `rank` is raised to `ceil(d_in / d_out)` when smaller.
    pub fn random<R: rand::Rng + ?Sized>(d_in: usize, d_out: usize, rank: usize, rng: &mut R) -> Self {
        let rank = rank.max(d_in.div_ceil(d_out));
        let g = qla::random_gaussian(d_out * rank, d_in, rng);
        let gram = Hermitian::symmetrize(&g.adjoint().matmul(&g));
        let inv_sqrt = gram.map_spectrum(|x| 1.0 / x.sqrt()).expect("Gram matrix eigensolve");
        let v = g.matmul(inv_sqrt.matrix());
        let kraus: Vec<CMatrix> = (0..rank)
            .map(|k| CMatrix::from_fn(d_out, d_in, |r, c| v[(k * d_out + r, c)]))
            .collect();
        Self::from_kraus(d_in, d_out, &kraus).expect("isometry yields a channel")
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn choi(&self) -> &Hermitian {
        &self.choi
    }

    /// `J / d_in` as a density operator on `A ⊗ B`.
    pub fn choi_state(&self) -> DensityOperator {
        DensityOperator::new(self.choi.scale(1.0 / self.d_in as f64), vec![self.d_in, self.d_out])
            .expect("channel Choi is a scaled density operator")
    }

    /// Applies the channel to an arbitrary operator on the input space.
    pub fn apply_matrix(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.rows() != self.d_in || x.cols() != self.d_in {
            return Err(ChannelError::Dimension(format!(
                "{}x{} input for d_in = {}",
                x.rows(),
                x.cols(),
                self.d_in
            )));
        }
        let (di, d) = (self.d_in, self.d_out);
        let j = self.choi.matrix();
        Ok(CMatrix::from_fn(d, d, |k, l| {
            let mut s = C64::new(0.0, 0.0);
            for i in 0..di {
                for jj in 0..di {
                    s += x[(i, jj)] * j[(i * d + k, jj * d + l)];
                }
            }
            s
        }))
    }

    pub fn apply(&self, rho: &Hermitian) -> Result<Hermitian> {
        Ok(Hermitian::symmetrize(&self.apply_matrix(rho.matrix())?))
    }

    /// `E ⊗ F` on `(A_1 A_2) ⊗ (B_1 B_2)`.
    pub fn tensor(&self, other: &Channel) -> Channel {
        let raw = self.choi.kron(&other.choi);
        let dims = [self.d_in, self.d_out, other.d_in, other.d_out];
        let choi = raw.permute_subsystems(&dims, &[0, 2, 1, 3]).expect("consistent dims");
        Channel {
            d_in: self.d_in * other.d_in,
            d_out: self.d_out * other.d_out,
            choi,
        }
    }

    pub fn tensor_power(&self, n: usize) -> Channel {
        let mut out = self.clone();
        for _ in 1..n.max(1) {
            out = out.tensor(self);
        }
        out
    }

    /// `self ∘ first`: applies `first` then `self`.
    pub fn compose(&self, first: &Channel) -> Result<Channel> {
        if first.d_out != self.d_in {
            return Err(ChannelError::Dimension(format!(
                "cannot compose {} -> {} after {} -> {}",
                self.d_in, self.d_out, first.d_in, first.d_out
            )));
        }
        let (a, b, c) = (first.d_in, first.d_out, self.d_out);
        let jf = first.choi.matrix();
        let mut j = CMatrix::zeros(a * c, a * c);
        for i in 0..a {
            for k in 0..a {
                let block = CMatrix::from_fn(b, b, |r, s| jf[(i * b + r, k * b + s)]);
                let out = self.apply_matrix(&block)?;
                for r in 0..c {
                    for s in 0..c {
                        j[(i * c + r, k * c + s)] = out[(r, s)];
                    }
                }
            }
        }
        Channel::new(a, c, Hermitian::symmetrize(&j))
    }

    /// Convex combination of channels with equal dimensions.
    pub fn mix(parts: &[(f64, Channel)]) -> Result<Channel> {
        let first = parts
            .first()
            .ok_or_else(|| ChannelError::Parameter("empty mixture".into()))?;
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(ChannelError::Parameter("mixture weights are not a probability vector".into()));
        }
        let (di, d) = (first.1.d_in, first.1.d_out);
        let mut j = CMatrix::zeros(di * d, di * d);
        for (w, ch) in parts {
            if ch.d_in != di || ch.d_out != d {
                return Err(ChannelError::Dimension("mixture of channels with different dimensions".into()));
            }
            j.axpy(C64::new(*w, 0.0), ch.choi.matrix());
        }
        Channel::new(di, d, Hermitian::symmetrize(&j))
    }

    /// Plain-text form: `d_in d_out`, then one Choi row per line as
    /// `re im` pairs with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.d_in, self.d_out);
        let m = self.choi.matrix();
        for r in 0..m.rows() {
            let row: Vec<String> = (0..m.cols())
                .map(|c| format!("{:.16e} {:.16e}", m[(r, c)].re, m[(r, c)].im))
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next_usize = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| ChannelError::Parse(format!("missing {what}")))?
                .parse()
                .map_err(|e| ChannelError::Parse(format!("{what}: {e}")))
        };
        let d_in = next_usize("d_in")?;
        let d_out = next_usize("d_out")?;
        let rest: Vec<&str> = text.split_whitespace().skip(2).collect();
        let n = d_in * d_out;
        if rest.len() != 2 * n * n {
            return Err(ChannelError::Parse(format!("{} numbers for a {n}x{n} Choi", rest.len())));
        }
        let vals = rest
            .iter()
            .map(|t| t.parse::<f64>().map_err(|e| ChannelError::Parse(format!("{t}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let data = vals.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
        let m = CMatrix::from_vec(n, n, data)?;
        let h = Hermitian::new(m, 1e-9)?;
        Channel::new(d_in, d_out, h)
    }
}

impl SubChannel {
    pub fn new(d_in: usize, d_out: usize, choi: Hermitian) -> Result<Self> {
        let tol = Tolerances::default();
        let marginal = check_cp(d_in, d_out, &choi, &tol)?;
        let gap = Hermitian::identity(d_in).matrix() - marginal.matrix();
        let min = Hermitian::symmetrize(&gap).min_eigenvalue()?;
        if min < -tol.trace_preserving {
            return Err(ChannelError::Invalid(format!("I - Tr_B J has eigenvalue {min:.3e}")));
        }
        Ok(Self { d_in, d_out, choi })
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn choi(&self) -> &Hermitian {
        &self.choi
    }

    /// `Tr(J) / d_in`, the average success probability on a maximally mixed input.
    pub fn normalized_trace(&self) -> f64 {
        self.choi.trace() / self.d_in as f64
    }
}

impl From<Channel> for SubChannel {
    fn from(c: Channel) -> Self {
        Self {
            d_in: c.d_in,
            d_out: c.d_out,
            choi: c.choi,
        }
    }
}

fn check_same_dims(e: &Channel, f: &Channel) -> Result<()> {
    if e.d_in != f.d_in || e.d_out != f.d_out {
        return Err(ChannelError::Dimension(format!(
            "{} -> {} vs {} -> {}",
            e.d_in, e.d_out, f.d_in, f.d_out
        )));
    }
    Ok(())
}

/// Fidelity of the normalized Choi states.
pub fn choi_fidelity(e: &Channel, f: &Channel) -> Result<f64> {
    check_same_dims(e, f)?;
    let s = 1.0 / e.d_in as f64;
    Ok(fidelity(&e.choi.scale(s), &f.choi.scale(s))?.min(1.0))
}

/// `(1/2) ||E - F||_diamond` via `max <J_E - J_F, W>` subject to
/// `0 <= W <= rho ⊗ I`, `Tr rho = 1`.
pub fn diamond_distance_half(e: &Channel, f: &Channel) -> Result<f64> {
    check_same_dims(e, f)?;
    let (di, d) = (e.d_in, e.d_out);
    let delta = Hermitian::symmetrize(&(e.choi.matrix() - f.choi.matrix()));
    if delta.matrix().max_abs() < 1e-14 {
        return Ok(0.0);
    }
    let mut m = Model::new();
    let (w, _) = m.psd(di * d);
    let (rho, _) = m.psd(di);
    m.add_psd(&rho.kron_right(&Hermitian::identity(d)).sub(&w));
    m.add_eq(&rho.trace(), 1.0);
    m.maximize(&w.inner(&delta));
    let s = m.solve(&SolverConfig::default())?;
    if !s.is_optimal() {
        return Err(ChannelError::Solver(s.solution.status));
    }
    Ok(s.value.clamp(0.0, 1.0))
}

/// Overlap `<u|(P ⊗ I) J_N (P ⊗ I)|u>` for a rank-one target Choi `|u><u|`.
/// With `P = Y†Y` for an input `|psi> = (Y ⊗ I) sum_i |ii>`, this is the
/// output fidelity of that input.
fn overlap_for_input(j: &CMatrix, u: &[C64], p: &CMatrix, d_out: usize) -> (f64, CMatrix) {
    let pi = p.kron(&CMatrix::identity(d_out));
    let v = pi.mul_vec(u);
    let jv = j.mul_vec(&v);
    let f: C64 = v.iter().zip(&jv).map(|(a, b)| a.conj() * b).sum();
    // Gradient with respect to P: 2 Herm(Tr_B(|u><Jv|)).
    let outer = CMatrix::from_fn(u.len(), u.len(), |r, c| u[r] * jv[c].conj());
    let g = qla::partial_trace(&outer, &[p.rows(), d_out], &[0]).expect("consistent dims");
    let grad = &g + &g.adjoint();
    (f.re, grad)
}

/// Euclidean projection of a Hermitian matrix onto density operators.
fn project_density(m: &CMatrix) -> CMatrix {
    let h = Hermitian::symmetrize(m);
    let eig = h.eig().expect("Hermitian eigensolve");
    let vals = &eig.values;
    let mut sorted: Vec<f64> = vals.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    eig.reconstruct_with(|x| (x - theta).max(0.0)).into_matrix()
}

/// Multi-start projected-gradient minimization of the output fidelity with a
/// rank-one target over pure inputs. Every evaluated input is feasible, so the
/// returned value is an upper bound on the worst-case fidelity.
pub fn worst_case_fidelity_ub(n: &Channel, u: &Channel, restarts: usize, seed: u64) -> Result<f64> {
    check_same_dims(n, u)?;
    let eig = u.choi.eig()?;
    let top = *eig.values.last().expect("nonempty");
    let rest: f64 = eig.values[..eig.values.len() - 1].iter().map(|v| v.abs()).sum();
    if rest > 1e-9 * top.abs().max(1.0) {
        return Err(ChannelError::Invalid("target Choi is not rank one".into()));
    }
    let mut uvec = eig.vector(eig.values.len() - 1);
    let s = top.sqrt();
    uvec.iter_mut().for_each(|x| *x *= s);
    let (di, d) = (n.d_in, n.d_out);
    let j = n.choi.matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for r in 0..restarts.max(1) {
        let mut p = if r == 0 {
            CMatrix::identity(di).scale_real(1.0 / di as f64)
        } else {
            qla::random_density(di, di, &mut rng).into_op().into_matrix()
        };
        let (mut f, mut g) = overlap_for_input(j, &uvec, &p, d);
        best = best.min(f);
        let mut step = 0.5;
        for _ in 0..400 {
            let cand = project_density(&(&p - &g.scale_real(step)));
            let (fc, gc) = overlap_for_input(j, &uvec, &cand, d);
            best = best.min(fc);
            if fc < f - 1e-15 {
                let moved = (&cand - &p).frobenius_norm();
                p = cand;
                f = fc;
                g = gc;
                step *= 1.2;
                if moved < 1e-12 {
                    break;
                }
            } else {
                step *= 0.5;
                if step < 1e-12 {
                    break;
                }
            }
        }
    }
    Ok(best.clamp(0.0, 1.0))
}
