//! Free sets of states and channels.
//!
//! A free set is either the convex hull of finitely many vertices or a cone
//! described by semidefinite conditions. Channel free sets are stated on
//! unnormalized Choi matrices; polytope vertices of channel sets are
//! normalized Choi states and trace preservation enters as a linear
//! condition on the mixture.

use rand::Rng;
use thiserror::Error;

use crate::channels::Channel;
use crate::conic::model::{LinExpr, MatExpr, Model};
use crate::conic::{ConicError, SolveStatus, SolverConfig, VarSign};
use crate::qla::{random_density, CMatrix, DensityOperator, Hermitian, QlaError, C64};
use crate::stab::{self, StabError};

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("qubit budget exceeded: {0} qubits")]
    QubitBudget(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid free set: {0}")]
    Invalid(String),
    #[error(transparent)]
    Stab(#[from] StabError),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Qla(#[from] QlaError),
}

pub type Result<T> = std::result::Result<T, TheoryError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectSpace {
    State { dim: usize },
    Channel { d_in: usize, d_out: usize },
}

impl ObjectSpace {
    /// Dimension of the operator describing an object (state or Choi matrix).
    pub fn operator_dim(&self) -> usize {
        match *self {
            ObjectSpace::State { dim } => dim,
            ObjectSpace::Channel { d_in, d_out } => d_in * d_out,
        }
    }

    /// Trace of a normalized free element's operator: 1 for states, `d_in` for Choi matrices.
    pub fn unit_trace(&self) -> f64 {
        match *self {
            ObjectSpace::State { .. } => 1.0,
            ObjectSpace::Channel { d_in, .. } => d_in as f64,
        }
    }
}

/// Semidefinite-representable channel cones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// `J = I ⊗ sigma`, `sigma >= 0`.
    Replacement,
    /// `J >= 0`, `J^{T_B} >= 0` with the transpose on the output.
    Ppt,
}

#[derive(Debug, Clone)]
pub enum FreeSetKind {
    /// Convex hull of unit-trace PSD vertices. For channel spaces the
    /// vertices are normalized Choi states.
    VertexPolytope {
        vertices: Vec<Hermitian>,
        /// Pure-state vectors of the vertices when available.
        vectors: Option<Vec<Vec<C64>>>,
    },
    SdpCone(Cone),
}

#[derive(Debug, Clone)]
pub struct FreeSet {
    pub name: String,
    pub space: ObjectSpace,
    pub kind: FreeSetKind,
}

/// Unnormalized free element `K = lambda * J_M` expressed in a model.
pub struct ConeElement {
    pub k: MatExpr,
    /// Normalization `lambda`.
    pub scale: LinExpr,
    /// Vertex weights for polytopes, indexed like the vertex list.
    pub weights: Option<Vec<(usize, LinExpr)>>,
}

const MEMBERSHIP_TOL: f64 = 1e-7;

impl FreeSet {
    pub fn replacement_channels(d_in: usize, d_out: usize) -> Result<Self> {
        if !(d_in == 1 || (d_in >= 2 && d_out >= 2)) || d_out == 0 {
            return Err(TheoryError::Dimension(format!("replacement channels {d_in} -> {d_out}")));
        }
        Ok(Self {
            name: format!("replacement({d_in}->{d_out})"),
            space: ObjectSpace::Channel { d_in, d_out },
            kind: FreeSetKind::SdpCone(Cone::Replacement),
        })
    }

    pub fn ppt_channels(d_in: usize, d_out: usize) -> Result<Self> {
        if d_in < 2 || d_out < 2 {
            return Err(TheoryError::Dimension(format!("PPT channels {d_in} -> {d_out}")));
        }
        Ok(Self {
            name: format!("ppt({d_in}->{d_out})"),
            space: ObjectSpace::Channel { d_in, d_out },
            kind: FreeSetKind::SdpCone(Cone::Ppt),
        })
    }

    /// Completely stabilizer-preserving channels on qubits.
    pub fn csp_channels(n_in: usize, n_out: usize) -> Result<Self> {
        let n = n_in + n_out;
        if n > stab::MAX_QUBITS || n_in == 0 || n_out == 0 {
            return Err(TheoryError::QubitBudget(n));
        }
        let poly = stab::enumerate(n)?;
        Ok(Self {
            name: format!("csp({n_in}->{n_out})"),
            space: ObjectSpace::Channel {
                d_in: 1 << n_in,
                d_out: 1 << n_out,
            },
            kind: FreeSetKind::VertexPolytope {
                vertices: poly.projectors(),
                vectors: Some(poly.vertices.into_iter().map(|v| v.amplitudes).collect()),
            },
        })
    }

    pub fn stab_states(n: usize) -> Result<Self> {
        if n == 0 || n > stab::MAX_QUBITS {
            return Err(TheoryError::QubitBudget(n));
        }
        let poly = stab::enumerate(n)?;
        Ok(Self::pure_polytope(
            format!("stab({n})"),
            poly.vertices.into_iter().map(|v| v.amplitudes).collect(),
        ))
    }

    /// Convex hull of the projectors onto the given (normalized on input) vectors.
    pub fn diag_states(basis: &[Vec<C64>]) -> Result<Self> {
        let first = basis.first().ok_or_else(|| TheoryError::Invalid("empty basis list".into()))?;
        if basis.iter().any(|v| v.len() != first.len()) {
            return Err(TheoryError::Dimension("basis vectors of different lengths".into()));
        }
        let vectors = basis
            .iter()
            .map(|v| {
                let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                v.iter().map(|a| a / n).collect()
            })
            .collect();
        Ok(Self::pure_polytope(format!("diag({})", basis.len()), vectors))
    }

    /// Incoherent states of dimension `d`: the hull of the computational basis.
    pub fn incoherent_states(d: usize) -> Result<Self> {
        let basis: Vec<Vec<C64>> = (0..d)
            .map(|i| (0..d).map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
            .collect();
        Self::diag_states(&basis)
    }

    fn pure_polytope(name: String, vectors: Vec<Vec<C64>>) -> Self {
        let dim = vectors[0].len();
        Self {
            name,
            space: ObjectSpace::State { dim },
            kind: FreeSetKind::VertexPolytope {
                vertices: vectors.iter().map(|v| Hermitian::projector(v)).collect(),
                vectors: Some(vectors),
            },
        }
    }

    pub fn vertices(&self) -> Option<&[Hermitian]> {
        match &self.kind {
            FreeSetKind::VertexPolytope { vertices, .. } => Some(vertices),
            FreeSetKind::SdpCone(_) => None,
        }
    }

    pub fn is_polytope(&self) -> bool {
        matches!(self.kind, FreeSetKind::VertexPolytope { .. })
    }

    /// Checks that an operator matches the object space dimension.
    pub fn check_operator(&self, j: &Hermitian) -> Result<()> {
        if j.dim() != self.space.operator_dim() {
            return Err(TheoryError::Dimension(format!(
                "operator of dimension {} for free set {}",
                j.dim(),
                self.name
            )));
        }
        Ok(())
    }

    /// Adds variables describing an element `K` of the cone generated by the
    /// free set, with `K = lambda * J_M` for a free `M` and `lambda` returned
    /// as `scale`. `allowed` restricts polytope vertices.
    pub fn cone_element(&self, m: &mut Model, allowed: Option<&[bool]>) -> ConeElement {
        let unit = self.space.unit_trace();
        match (&self.kind, self.space) {
            (FreeSetKind::VertexPolytope { vertices, .. }, space) => {
                let d = space.operator_dim();
                let mut k = MatExpr::zeros(d);
                let mut scale = LinExpr::default();
                let mut weights = Vec::new();
                let mut tp = match space {
                    ObjectSpace::Channel { d_in, .. } => Some(MatExpr::zeros(d_in)),
                    ObjectSpace::State { .. } => None,
                };
                for (i, v) in vertices.iter().enumerate() {
                    if allowed.is_some_and(|a| !a[i]) {
                        continue;
                    }
                    let c = m.scalar(VarSign::NonNegative);
                    k = k.add_scaled(&c, &v.scale(unit));
                    scale = scale.add(&c);
                    if let (Some(t), ObjectSpace::Channel { d_in, d_out }) = (tp.take(), space) {
                        let marginal = v.partial_trace(&[d_in, d_out], &[0]).expect("vertex dims");
                        let h = Hermitian::symmetrize(
                            &(marginal.scale(unit).matrix() - &CMatrix::identity(d_in)),
                        );
                        tp = Some(t.add_scaled(&c, &h));
                    }
                    weights.push((i, c));
                }
                if let Some(t) = tp {
                    if !weights.is_empty() {
                        m.add_mat_eq(&t, &Hermitian::zeros(t.dim()));
                    }
                }
                ConeElement {
                    k,
                    scale,
                    weights: Some(weights),
                }
            }
            (FreeSetKind::SdpCone(Cone::Replacement), ObjectSpace::Channel { d_in, d_out }) => {
                let (s, _) = m.psd(d_out);
                ConeElement {
                    k: s.kron_left(&Hermitian::identity(d_in)),
                    scale: s.trace(),
                    weights: None,
                }
            }
            (FreeSetKind::SdpCone(Cone::Ppt), ObjectSpace::Channel { d_in, d_out }) => {
                let (k, _) = m.psd(d_in * d_out);
                let pt = k.partial_transpose(&[d_in, d_out], &[1]).expect("dims");
                m.add_psd(&pt);
                let t = m.scalar(VarSign::Free);
                let marginal = k.partial_trace(&[d_in, d_out], &[0]).expect("dims");
                let target = MatExpr::zeros(d_in).add_scaled(&t, &Hermitian::identity(d_in));
                m.add_mat_eq(&marginal.sub(&target), &Hermitian::zeros(d_in));
                ConeElement {
                    k,
                    scale: t,
                    weights: None,
                }
            }
            (FreeSetKind::SdpCone(_), ObjectSpace::State { .. }) => {
                unreachable!("semidefinite cones are defined on channel spaces")
            }
        }
    }

    /// Cone element restricted to the range of the isometry `v`, so that `K = V X V^dagger`
    /// with `X` PSD. Only defined for semidefinite cones.
    pub fn cone_element_on(&self, m: &mut Model, v: &CMatrix) -> Option<ConeElement> {
        let ObjectSpace::Channel { d_in, d_out } = self.space else {
            return None;
        };
        let FreeSetKind::SdpCone(cone) = &self.kind else {
            return None;
        };
        let (x, _) = m.psd(v.cols());
        let vh = v.adjoint();
        let k = x.map(|c| v.matmul(c).matmul(&vh));
        let scale = match cone {
            Cone::Replacement => {
                let s = m.hermitian(d_out);
                m.add_mat_eq(&k.clone().sub(&s.kron_left(&Hermitian::identity(d_in))), &Hermitian::zeros(k.dim()));
                s.trace()
            }
            Cone::Ppt => {
                m.add_psd(&k.partial_transpose(&[d_in, d_out], &[1]).expect("dims"));
                let t = m.scalar(VarSign::Free);
                let marginal = k.partial_trace(&[d_in, d_out], &[0]).expect("dims");
                let target = MatExpr::zeros(d_in).add_scaled(&t, &Hermitian::identity(d_in));
                m.add_mat_eq(&marginal.sub(&target), &Hermitian::zeros(d_in));
                t
            }
        };
        Some(ConeElement { k, scale, weights: None })
    }

    /// `max` (or `min`) of `<x, J_M>` over free elements supported on the range of `v`;
    /// `None` when no free element lies there. Only defined for semidefinite cones.
    pub fn support_function_on(&self, x: &Hermitian, v: &CMatrix, maximize: bool) -> Result<Option<(f64, Hermitian)>> {
        self.check_operator(x)?;
        let mut m = Model::new();
        let el = self
            .cone_element_on(&mut m, v)
            .ok_or_else(|| TheoryError::Invalid(format!("no face program for {}", self.name)))?;
        m.add_eq(&el.scale, 1.0);
        let obj = el.k.inner(x);
        if maximize {
            m.maximize(&obj);
        } else {
            m.minimize(&obj);
        }
        let sol = m.solve(&SolverConfig::default())?;
        match sol.solution.status {
            SolveStatus::Optimal => Ok(Some((sol.value, sol.matrix(&el.k)))),
            SolveStatus::Infeasible => Ok(None),
            status => Err(TheoryError::Invalid(format!("face support function solve ended with {status:?}"))),
        }
    }

    /// Membership of an operator: a state, or an unnormalized Choi matrix.
    pub fn contains(&self, j: &Hermitian) -> Result<bool> {
        self.check_operator(j)?;
        let unit = self.space.unit_trace();
        if (j.trace() - unit).abs() > MEMBERSHIP_TOL || j.min_eigenvalue()? < -MEMBERSHIP_TOL {
            return Ok(false);
        }
        if let ObjectSpace::Channel { d_in, d_out } = self.space {
            let marginal = j.partial_trace(&[d_in, d_out], &[0])?;
            if (marginal.matrix() - &CMatrix::identity(d_in)).max_abs() > MEMBERSHIP_TOL {
                return Ok(false);
            }
        }
        match (&self.kind, self.space) {
            (FreeSetKind::SdpCone(Cone::Replacement), ObjectSpace::Channel { d_in, d_out }) => {
                let sigma = j.partial_trace(&[d_in, d_out], &[1])?.scale(1.0 / d_in as f64);
                let rebuilt = Hermitian::identity(d_in).kron(&sigma);
                Ok((rebuilt.matrix() - j.matrix()).max_abs() <= MEMBERSHIP_TOL)
            }
            (FreeSetKind::SdpCone(Cone::Ppt), ObjectSpace::Channel { d_in, d_out }) => {
                Ok(j.partial_transpose(&[d_in, d_out], &[1])?.min_eigenvalue()? >= -MEMBERSHIP_TOL)
            }
            (FreeSetKind::VertexPolytope { vertices, .. }, _) => {
                let target = j.scale(1.0 / unit);
                let mut m = Model::new();
                let mut sum = MatExpr::zeros(target.dim());
                for v in vertices {
                    let c = m.scalar(VarSign::NonNegative);
                    sum = sum.add_scaled(&c, v);
                }
                m.add_mat_eq(&sum, &target);
                let s = m.solve(&SolverConfig::default())?;
                Ok(s.is_optimal())
            }
            _ => Err(TheoryError::Invalid("cone on a state space".into())),
        }
    }

    /// A random free element (state, or unnormalized Choi matrix).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Hermitian> {
        match (&self.kind, self.space) {
            (FreeSetKind::VertexPolytope { vertices, .. }, ObjectSpace::State { .. }) => {
                let k = rng.gen_range(1..=vertices.len().min(4));
                let mut acc = CMatrix::zeros(vertices[0].dim(), vertices[0].dim());
                let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
                let total: f64 = w.iter().sum();
                for wi in w {
                    let v = &vertices[rng.gen_range(0..vertices.len())];
                    acc.axpy(C64::new(wi / total, 0.0), v.matrix());
                }
                Ok(Hermitian::symmetrize(&acc))
            }
            (FreeSetKind::VertexPolytope { .. }, ObjectSpace::Channel { .. }) => {
                // Maximizer of a random linear functional: an extreme free channel.
                let d = self.space.operator_dim();
                let h = crate::qla::random_hermitian(d, rng);
                let (_, element) = self.support_function(&h, true)?;
                Ok(element)
            }
            (FreeSetKind::SdpCone(Cone::Replacement), ObjectSpace::Channel { d_in, d_out }) => {
                let rank = rng.gen_range(1..=d_out);
                let sigma = random_density(d_out, rank, rng);
                Ok(Channel::replacement(&sigma, d_in).choi().clone())
            }
            (FreeSetKind::SdpCone(Cone::Ppt), ObjectSpace::Channel { d_in, d_out }) => {
                // Mix a random channel with the completely depolarizing one until PPT.
                let e = Channel::random(d_in, d_out, rng.gen_range(1..=d_in * d_out), rng);
                let noise = Hermitian::identity(d_in * d_out).scale(1.0 / d_out as f64);
                let mut t: f64 = rng.gen_range(0.0..1.0);
                loop {
                    let j = Hermitian::symmetrize(&(e.choi().scale(1.0 - t).matrix() + noise.scale(t).matrix()));
                    if j.partial_transpose(&[d_in, d_out], &[1])?.min_eigenvalue()? >= 0.0 {
                        return Ok(j);
                    }
                    t = 0.5 * (t + 1.0);
                }
            }
            _ => Err(TheoryError::Invalid("cone on a state space".into())),
        }
    }

    /// `max` (or `min`) of `<x, J_M>` over free elements, with the optimizer.
    pub fn support_function(&self, x: &Hermitian, maximize: bool) -> Result<(f64, Hermitian)> {
        self.check_operator(x)?;
        let s = if maximize { 1.0 } else { -1.0 };
        match (&self.kind, self.space) {
            (FreeSetKind::VertexPolytope { vertices, .. }, ObjectSpace::State { .. }) => {
                let (i, v) = vertices
                    .iter()
                    .map(|v| s * v.inner(x))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b });
                Ok((s * v, vertices[i].clone()))
            }
            (FreeSetKind::SdpCone(Cone::Replacement), ObjectSpace::Channel { d_in, d_out }) => {
                let reduced = x.partial_trace(&[d_in, d_out], &[1])?;
                let eig = reduced.eig()?;
                let k = if maximize { eig.values.len() - 1 } else { 0 };
                let sigma = DensityOperator::pure(&eig.vector(k))?;
                Ok((eig.values[k], Channel::replacement(&sigma, d_in).choi().clone()))
            }
            _ => {
                let mut m = Model::new();
                let el = self.cone_element(&mut m, None);
                m.add_eq(&el.scale, 1.0);
                let obj = el.k.inner(x);
                if maximize {
                    m.maximize(&obj);
                } else {
                    m.minimize(&obj);
                }
                let sol = m.solve(&SolverConfig::default())?;
                if !sol.is_optimal() {
                    return Err(TheoryError::Invalid(format!(
                        "support function solve ended with {:?}",
                        sol.solution.status
                    )));
                }
                Ok((sol.value, sol.matrix(&el.k)))
            }
        }
    }
}
