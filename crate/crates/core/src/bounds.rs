//! Error floors, copy floors, and rate ceilings evaluated from monotone values.
//!
//! Every function is a pure scalar evaluation. Logarithms are base 2. A
//! formula that evaluates below its trivial range is reported as a `Vacuous`
//! floor at the range boundary; a formula whose hypotheses fail is reported as
//! `Inapplicable`, `Infeasible` or `Undefined` and never as a number.

use std::fmt;

/// Values this close to 0 or 1 are treated as exactly 0 or 1.
pub const EDGE_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BoundError {
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

pub type Result<T> = std::result::Result<T, BoundError>;

/// Which statement produced a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// One-shot error for a unitary target.
    UnitaryTarget,
    /// One-shot error for a pure-state replacement target or a state target.
    StateTarget,
    /// Eigenvalue bound for full-rank input states from earlier work.
    EigenvalueComparison,
    /// Copies needed to reach a target with a given error.
    CopyCount,
    /// Uses needed for an exact transformation between two objects.
    ExactTransformation,
    /// Strong converse rate for adaptive protocols.
    AdaptiveRate,
    /// Strong converse rate for parallel protocols.
    ParallelRate,
    /// Error conditioned on success of a probabilistic channel protocol.
    ProbabilisticChannel,
    /// Error conditioned on success of a probabilistic state protocol.
    ProbabilisticState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// The formula value, within its range.
    Valid,
    /// The formula fell below its range and was clamped to the boundary.
    Vacuous,
    /// The hypotheses of the statement do not hold for these inputs.
    Inapplicable,
    /// No finite number of uses suffices; the value is `+inf`.
    Infeasible,
    /// The formula is indeterminate for these inputs.
    Undefined,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Valid => "valid",
            Status::Vacuous => "vacuous",
            Status::Inapplicable => "inapplicable",
            Status::Infeasible => "infeasible",
            Status::Undefined => "undefined",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bound {
    pub name: &'static str,
    pub source: Source,
    pub status: Status,
    /// `None` exactly when the status is `Inapplicable` or `Undefined`.
    pub value: Option<f64>,
}

impl Bound {
    fn valid(name: &'static str, source: Source, value: f64) -> Self {
        Self { name, source, status: Status::Valid, value: Some(value) }
    }

    /// Clamps a floor at `lo`, flagging it vacuous if the formula fell below.
    fn floor(name: &'static str, source: Source, raw: f64, lo: f64) -> Self {
        if raw > lo {
            Self::valid(name, source, raw)
        } else {
            Self { name, source, status: Status::Vacuous, value: Some(lo) }
        }
    }

    fn flagged(name: &'static str, source: Source, status: Status) -> Self {
        let value = match status {
            Status::Infeasible => Some(f64::INFINITY),
            Status::Inapplicable | Status::Undefined => None,
            Status::Valid | Status::Vacuous => unreachable!("flagged bounds carry no formula value"),
        };
        Self { name, source, status, value }
    }

    /// The bound as a number, with inapplicable floors read as the trivial floor 0.
    pub fn value_or_trivial(&self) -> f64 {
        self.value.unwrap_or(0.0)
    }
}

/// The inputs that produced a report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inputs {
    pub robustness: Option<f64>,
    pub weight: Option<f64>,
    pub fidelity: Option<f64>,
    pub copies: Option<u32>,
    pub epsilon: Option<f64>,
    pub probability: Option<f64>,
    pub free_trace: Option<f64>,
    pub lambda_min: Option<f64>,
    pub robustness_out: Option<f64>,
    pub weight_out: Option<f64>,
    pub numerator: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub inputs: Inputs,
    pub bounds: Vec<Bound>,
}

impl BoundReport {
    pub fn get(&self, name: &str) -> Option<&Bound> {
        self.bounds.iter().find(|b| b.name == name)
    }

    /// Value of a named bound; panics if the name is unknown.
    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).unwrap_or_else(|| panic!("no bound named {name}")).value
    }

    pub fn status(&self, name: &str) -> Status {
        self.get(name).unwrap_or_else(|| panic!("no bound named {name}")).status
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bounds {
            match b.value {
                Some(v) => writeln!(f, "{:<16} {:>20.12} {} ({:?})", b.name, v, b.status, b.source)?,
                None => writeln!(f, "{:<16} {:>20} {} ({:?})", b.name, "-", b.status, b.source)?,
            }
        }
        Ok(())
    }
}

fn check(name: &'static str, value: f64, ok: bool, range: &'static str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(BoundError::OutOfRange { name, value, range })
    }
}

fn check_robustness(name: &'static str, r: f64) -> Result<f64> {
    check(name, r, r >= 1.0 - EDGE_TOL, "[1, inf)")?;
    Ok(r.max(1.0))
}

fn check_unit(name: &'static str, x: f64) -> Result<f64> {
    check(name, x, (-EDGE_TOL..=1.0 + EDGE_TOL).contains(&x), "[0, 1]")?;
    Ok(x.clamp(0.0, 1.0))
}

fn check_fidelity(f: f64) -> Result<f64> {
    check("F", f, f > 0.0 && f <= 1.0 + EDGE_TOL, "(0, 1]")?;
    Ok(f.min(1.0))
}

fn check_probability(p: f64) -> Result<f64> {
    check("p", p, p > 0.0 && p <= 1.0 + EDGE_TOL, "(0, 1]")?;
    Ok(p.min(1.0))
}

fn is_zero(x: f64) -> bool {
    x <= EDGE_TOL
}

fn is_one(x: f64) -> bool {
    x >= 1.0 - EDGE_TOL
}

fn one_shot(r: f64, w: f64, f: f64, source: Source) -> Result<BoundReport> {
    let r = check_robustness("R", r)?;
    let w = check_unit("W", w)?;
    let f = check_fidelity(f)?;
    let rob = Bound::floor("epsilon_rob", source, 1.0 - f * r, 0.0);
    let weight = if is_zero(w) {
        Bound::flagged("epsilon_weight", source, Status::Inapplicable)
    } else {
        Bound::floor("epsilon_weight", source, (1.0 - f) * w, 0.0)
    };
    Ok(BoundReport {
        inputs: Inputs { robustness: Some(r), weight: Some(w), fidelity: Some(f), ..Default::default() },
        bounds: vec![rob, weight],
    })
}

/// One-shot error floors `1 - F R` and `(1 - F) W` for a unitary target with free fidelity `F`.
pub fn error_floor_unitary(r: f64, w: f64, f: f64) -> Result<BoundReport> {
    one_shot(r, w, f, Source::UnitaryTarget)
}

/// One-shot error floors for a pure-state target with free-state fidelity `F`.
pub fn error_floor_state(r: f64, w: f64, f: f64) -> Result<BoundReport> {
    one_shot(r, w, f, Source::StateTarget)
}

/// The eigenvalue floor `(1 - F) lambda_min`, applicable only to full-rank inputs.
pub fn previous_bound(lambda_min: f64, f: f64) -> Result<BoundReport> {
    let l = check_unit("lambda_min", lambda_min)?;
    let f = check_fidelity(f)?;
    let b = if is_zero(l) {
        Bound::flagged("epsilon_eig", Source::EigenvalueComparison, Status::Inapplicable)
    } else {
        Bound::floor("epsilon_eig", Source::EigenvalueComparison, (1.0 - f) * l, 0.0)
    };
    Ok(BoundReport {
        inputs: Inputs { lambda_min: Some(l), fidelity: Some(f), ..Default::default() },
        bounds: vec![b],
    })
}

/// Lower bounds on the uses of an input needed to reach `m` copies of a target
/// with single-copy free fidelity `F` up to error `epsilon`.
pub fn copy_floor(r: f64, w: f64, f_single: f64, m: u32, epsilon: f64) -> Result<BoundReport> {
    let r = check_robustness("R", r)?;
    let w = check_unit("W", w)?;
    let f = check_fidelity(f_single)?;
    check("m", m as f64, m >= 1, "[1, inf)")?;
    check("epsilon", epsilon, epsilon > 0.0 && epsilon < 1.0, "(0, 1)")?;
    let fm = f.powi(m as i32);
    let src = Source::CopyCount;

    let weight = if is_zero(w) {
        Bound::flagged("n_weight", src, Status::Inapplicable)
    } else if epsilon >= 1.0 - fm {
        Bound::floor("n_weight", src, 0.0, 0.0)
    } else if is_one(w) {
        Bound::flagged("n_weight", src, Status::Infeasible)
    } else {
        Bound::floor("n_weight", src, ((1.0 - fm) / epsilon).log2() / (1.0 / w).log2(), 0.0)
    };

    let arg = (1.0 - epsilon) / fm;
    let rob = if r == 1.0 {
        if arg > 1.0 {
            Bound::flagged("n_rob", src, Status::Infeasible)
        } else {
            Bound::floor("n_rob", src, 0.0, 0.0)
        }
    } else {
        Bound::floor("n_rob", src, arg.log2() / r.log2(), 0.0)
    };

    Ok(BoundReport {
        inputs: Inputs {
            robustness: Some(r),
            weight: Some(w),
            fidelity: Some(f),
            copies: Some(m),
            epsilon: Some(epsilon),
            ..Default::default()
        },
        bounds: vec![rob, weight],
    })
}

/// Lower bounds on the uses of one object needed to produce another exactly.
pub fn transform_floor(r_in: f64, r_out: f64, w_in: f64, w_out: f64) -> Result<BoundReport> {
    let r_in = check_robustness("R_in", r_in)?;
    let r_out = check_robustness("R_out", r_out)?;
    let w_in = check_unit("W_in", w_in)?;
    let w_out = check_unit("W_out", w_out)?;
    let src = Source::ExactTransformation;

    let rob = if r_in == 1.0 {
        if r_out > 1.0 {
            Bound::flagged("n_rob", src, Status::Infeasible)
        } else {
            Bound::floor("n_rob", src, 0.0, 0.0)
        }
    } else {
        Bound::floor("n_rob", src, r_out.log2() / r_in.log2(), 0.0)
    };

    let weight = match (is_zero(w_in), is_zero(w_out), is_one(w_in), is_one(w_out)) {
        (true, true, _, _) => Bound::flagged("n_weight", src, Status::Undefined),
        (true, false, _, _) => Bound::floor("n_weight", src, 0.0, 0.0),
        (false, _, true, true) => Bound::floor("n_weight", src, 0.0, 0.0),
        (false, _, true, false) | (false, true, false, _) => Bound::flagged("n_weight", src, Status::Infeasible),
        (false, false, false, _) => Bound::floor("n_weight", src, w_out.log2() / w_in.log2(), 0.0),
    };

    Ok(BoundReport {
        inputs: Inputs {
            robustness: Some(r_in),
            weight: Some(w_in),
            robustness_out: Some(r_out),
            weight_out: Some(w_out),
            ..Default::default()
        },
        bounds: vec![rob, weight],
    })
}

fn rate(numerator: f64, f_single: f64, name: &'static str, source: Source) -> Result<BoundReport> {
    check("numerator", numerator, numerator >= -EDGE_TOL, "[0, inf)")?;
    let f = check_fidelity(f_single)?;
    let numerator = numerator.max(0.0);
    let b = if is_one(f) {
        Bound::flagged(name, source, Status::Undefined)
    } else {
        Bound::valid(name, source, numerator / (1.0 / f).log2())
    };
    Ok(BoundReport {
        inputs: Inputs { numerator: Some(numerator), fidelity: Some(f), ..Default::default() },
        bounds: vec![b],
    })
}

/// Strong converse ceiling `log R / log(1/F)` for adaptive protocols.
pub fn adaptive_rate_ceiling(r: f64, f_single: f64) -> Result<BoundReport> {
    let r = check_robustness("R", r)?;
    let mut rep = rate(r.log2(), f_single, "rate_adaptive", Source::AdaptiveRate)?;
    rep.inputs.robustness = Some(r);
    Ok(rep)
}

/// Strong converse ceiling `D / log(1/F)` for parallel protocols, with `D` the
/// regularized max-relative entropy of the input.
pub fn parallel_rate_ceiling(d_inf: f64, f_single: f64) -> Result<BoundReport> {
    rate(d_inf, f_single, "rate_parallel", Source::ParallelRate)
}

struct Prob {
    r: f64,
    w: f64,
    f: f64,
    p: f64,
    t: f64,
}

/// Also checks `W trM <= p`, which holds for any protocol since `J_E >= W J_M`.
fn check_prob(r: f64, w: f64, f: f64, p: f64, tr_m: f64) -> Result<Prob> {
    let a = Prob {
        r: check_robustness("R", r)?,
        w: check_unit("W", w)?,
        f: check_fidelity(f)?,
        p: check_probability(p)?,
        t: check_unit("trM", tr_m)?,
    };
    check("W trM", a.w * a.t, a.w * a.t <= a.p + EDGE_TOL, "[0, p]")?;
    Ok(a)
}

fn prob_report(a: &Prob, bounds: Vec<Bound>) -> BoundReport {
    BoundReport {
        inputs: Inputs {
            robustness: Some(a.r),
            weight: Some(a.w),
            fidelity: Some(a.f),
            probability: Some(a.p),
            free_trace: Some(a.t),
            ..Default::default()
        },
        bounds,
    }
}

/// Error floors for a protocol that succeeds with probability `p`. `tr_m` is the
/// success probability of the protocol on the optimal free component of the input.
pub fn probabilistic_floor_channel(r: f64, w: f64, f: f64, p: f64, tr_m: f64) -> Result<BoundReport> {
    let a = check_prob(r, w, f, p, tr_m)?;
    let src = Source::ProbabilisticChannel;
    let rob = Bound::floor("epsilon_rob", src, 1.0 - a.r * a.f / a.p, 0.0);
    let (loose, tight) = if is_zero(a.w) {
        (
            Bound::flagged("epsilon_weight_loose", src, Status::Inapplicable),
            Bound::flagged("epsilon_weight_tight", src, Status::Inapplicable),
        )
    } else {
        let x = (1.0 - a.f) * a.w;
        let loose = if a.p == 1.0 { x } else { 1.0 - (1.0 - x) / a.p };
        (
            Bound::floor("epsilon_weight_loose", src, loose, 0.0),
            Bound::floor("epsilon_weight_tight", src, x * a.t / a.p, 0.0),
        )
    };
    Ok(prob_report(&a, vec![rob, loose, tight]))
}

/// State-level analogue of [`probabilistic_floor_channel`].
pub fn probabilistic_floor_state(r: f64, w: f64, f: f64, p: f64, tr_m: f64) -> Result<BoundReport> {
    let a = check_prob(r, w, f, p, tr_m)?;
    let src = Source::ProbabilisticState;
    let rob = Bound::floor("epsilon_rob", src, 1.0 - a.r * a.f / a.p, 0.0);
    let (loose, tight) = if is_zero(a.w) {
        (
            Bound::flagged("epsilon_weight_loose", src, Status::Inapplicable),
            Bound::flagged("epsilon_weight_tight", src, Status::Inapplicable),
        )
    } else {
        let loose = if a.p == 1.0 { a.w } else { 1.0 - (1.0 - a.w) / a.p };
        (
            Bound::floor("epsilon_weight_loose", src, (1.0 - a.f) * loose, 0.0),
            Bound::floor("epsilon_weight_tight", src, (1.0 - a.f) * a.w * a.t / a.p, 0.0),
        )
    };
    Ok(prob_report(&a, vec![rob, loose, tight]))
}
