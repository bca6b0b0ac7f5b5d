//! The acceptance suite: each criterion recomputes its quantities through the
//! library and compares them with closed forms under pinned tolerances.

use std::fmt;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bounds::{self, Status};
use crate::channels::Channel;
use crate::comm::{self, NsForm};
use crate::figures::{noisy_t_state, FigureError};
use crate::measures::{self, MeasureOptions, MeasureResult, Object};
use crate::qla::{DensityOperator, Hermitian, C64};
use crate::stab;
use crate::theories::FreeSet;

type Result<T> = std::result::Result<T, FigureError>;

pub const CRITERIA: usize = 11;

/// Tolerances used by the criteria.
pub mod tol {
    pub const BOUND: f64 = 1e-6;
    pub const NS: f64 = 1e-5;
    pub const CHOI_FIDELITY: f64 = 1e-7;
    pub const VERTEX: f64 = 1e-9;
    pub const GATE_COUNT: f64 = 5e-3;
    pub const WEIGHT_MARGIN: f64 = 0.10;
    pub const GAP: f64 = 1e-7;
    pub const WITNESS: f64 = 1e-6;
    pub const MULTIPLICATIVITY: f64 = 1e-6;
    pub const COHERENCE: f64 = 1e-8;
    pub const MI_IDENTITY: f64 = 1e-7;
    pub const MI: f64 = 1e-6;
}

/// Runtime ceilings in seconds for criteria 1, 5 and 7.
pub const TIME_LIMITS: [(usize, f64); 3] = [(1, 30.0), (5, 300.0), (7, 60.0)];

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:>2} {:<34} {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Random channel pairs per theory in the multiplicativity criterion.
    pub pairs: usize,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self { seed: 0x5eed, pairs: 50 }
    }
}

/// Gaps and witness checks of every program solved by criteria 1 to 6.
#[derive(Debug, Default)]
struct Certificates {
    solves: usize,
    worst_gap: f64,
    failures: Vec<String>,
}

impl Certificates {
    fn gap(&mut self, label: &str, gap: f64) {
        self.solves += 1;
        self.worst_gap = self.worst_gap.max(gap);
        if !(gap <= tol::GAP) {
            self.failures.push(format!("{label}: gap {gap:.1e}"));
        }
    }

    fn measure(&mut self, label: &str, r: &MeasureResult) -> f64 {
        let d = &r.diagnostics;
        if d.iterations > 0 {
            self.gap(label, d.gap);
            match &d.witness_check {
                Some(c) if c.passed => {}
                Some(_) => self.failures.push(format!("{label}: witness rejected")),
                None => self.failures.push(format!("{label}: witness unchecked")),
            }
        }
        r.value.finite().unwrap_or(f64::INFINITY)
    }
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(failures: Vec<String>, ok: String) -> Outcome {
    if failures.is_empty() {
        Outcome { passed: true, detail: ok }
    } else {
        Outcome { passed: false, detail: failures.join("; ") }
    }
}

fn grid9() -> impl Iterator<Item = f64> {
    (1..=9).map(|k| k as f64 / 10.0)
}

fn options() -> MeasureOptions {
    MeasureOptions { witness_tol: tol::WITNESS, ..MeasureOptions::default() }
}

fn close(label: &str, got: f64, want: f64, tol: f64, failures: &mut Vec<String>) {
    if !((got - want).abs() <= tol) {
        failures.push(format!("{label}: {got:.10} vs {want:.10}"));
    }
}

fn identity_fidelity(fs: &FreeSet, d: usize, opts: &MeasureOptions, certs: &mut Certificates) -> Result<f64> {
    let r = measures::free_fidelity_with(&Channel::identity(d).into(), fs, opts)?;
    Ok(certs.measure(&format!("F({}, id_{d})", fs.name), &r))
}

fn ns_tightness(certs: &mut Certificates) -> Result<Outcome> {
    let opts = options();
    let fs = FreeSet::replacement_channels(2, 2)?;
    let f = identity_fidelity(&fs, 2, &opts, certs)?;
    let mut fail = Vec::new();
    for p in grid9() {
        let e = Channel::depolarizing(p, 2)?;
        let obj: Object = e.clone().into();
        let r = certs.measure(&format!("R(D_{p})"), &measures::robustness_with(&obj, &fs, &opts)?);
        let w = certs.measure(&format!("W(D_{p})"), &measures::weight_with(&obj, &fs, &opts)?);
        let rep = bounds::error_floor_unitary(r, w, f)?;
        for name in ["epsilon_rob", "epsilon_weight"] {
            close(&format!("{name}(D_{p})"), rep.get(name).unwrap().value_or_trivial(), 0.75 * p, tol::BOUND, &mut fail);
        }
        let ns = comm::ns_achievable_fidelity_with(&e, 2, NsForm::Auto, &opts.solver)?;
        certs.gap(&format!("NS(D_{p})"), ns.gap);
        close(&format!("F_NS(D_{p})"), ns.value, 1.0 - 0.75 * p, tol::NS, &mut fail);
    }
    Ok(outcome(fail, "eps_rob = eps_weight = 3p/4 = 1 - F_NS on 9 points".into()))
}

fn qubit_closed_forms(certs: &mut Certificates) -> Result<Outcome> {
    let opts = options();
    let fs = FreeSet::replacement_channels(2, 2)?;
    let f = identity_fidelity(&fs, 2, &opts, certs)?;
    let mut fail = Vec::new();
    for p in grid9() {
        let cases = [
            ("Z", Channel::dephasing(p)?, 0.5 - (p - 0.5).abs()),
            ("N", Channel::amplitude_damping(p)?, (2.0 + p - 2.0 * (1.0 - p).sqrt()) / 4.0),
        ];
        for (name, e, want) in cases {
            let obj: Object = e.into();
            let r = certs.measure(&format!("R({name}_{p})"), &measures::robustness_with(&obj, &fs, &opts)?);
            let w = certs.measure(&format!("W({name}_{p})"), &measures::weight_with(&obj, &fs, &opts)?);
            let rep = bounds::error_floor_unitary(r, w, f)?;
            close(&format!("eps_rob({name}_{p})"), rep.get("epsilon_rob").unwrap().value_or_trivial(), want, tol::BOUND, &mut fail);
            if rep.status("epsilon_weight") != Status::Inapplicable {
                fail.push(format!("W({name}_{p}) = {w:.2e} not flagged inapplicable"));
            }
        }
    }
    Ok(outcome(fail, "dephasing and damping floors on 9 points, weight inapplicable".into()))
}

fn choi_fidelities(certs: &mut Certificates) -> Result<Outcome> {
    let opts = options();
    let mut fail = Vec::new();
    for d in 2..=4 {
        let f = identity_fidelity(&FreeSet::replacement_channels(d, d)?, d, &opts, certs)?;
        close(&format!("F_NS(id_{d})"), f, 1.0 / (d * d) as f64, tol::CHOI_FIDELITY, &mut fail);
    }
    for d in 2..=3 {
        let f = identity_fidelity(&FreeSet::ppt_channels(d, d)?, d, &opts, certs)?;
        close(&format!("F_PPT(id_{d})"), f, 1.0 / d as f64, tol::CHOI_FIDELITY, &mut fail);
    }
    Ok(outcome(fail, "1/d^2 (d = 2, 3, 4) and 1/d (d = 2, 3)".into()))
}

fn stabilizer_fidelities(certs: &mut Certificates) -> Result<Outcome> {
    let mut fail = Vec::new();
    let t = stab::t_state();
    let ft = stab::stabilizer_fidelity(&t, &stab::enumerate(1)?)?.0;
    close("F(T)", ft, (2.0 + 2f64.sqrt()) / 4.0, tol::VERTEX, &mut fail);
    let fccz = stab::stabilizer_fidelity(&stab::ccz_state(), &stab::enumerate(3)?)?.0;
    close("F(CCZ)", fccz, 9.0 / 16.0, tol::VERTEX, &mut fail);
    let tt = stab::tensor_vectors(&t, &t);
    let obj: Object = DensityOperator::pure(&tt)?.into();
    let lp = measures::free_fidelity_with(&obj, &FreeSet::stab_states(2)?, &options())?;
    let ftt = certs.measure("F(T^2)", &lp);
    close("F(T^2)", ftt, ft * ft, tol::VERTEX, &mut fail);
    Ok(outcome(fail, format!("F(T) = {ft:.9}, F(CCZ) = {fccz:.9}, F(T^2) - F(T)^2 = {:.1e}", ftt - ft * ft)))
}

fn gate_synthesis(certs: &mut Certificates) -> Result<Outcome> {
    let opts = options();
    let mut fail = Vec::new();
    let t: Object = DensityOperator::pure(&stab::t_state())?.into();
    let ccz: Object = DensityOperator::pure(&stab::ccz_state())?.into();
    let rt = certs.measure("R(T)", &measures::robustness_with(&t, &FreeSet::stab_states(1)?, &opts)?);
    let rccz = certs.measure("R(CCZ)", &measures::robustness_with(&ccz, &FreeSet::stab_states(3)?, &opts)?);
    let n = bounds::transform_floor(rt, rccz, 0.0, 0.0)?.value("n_rob").unwrap_or(f64::NAN);
    close("log R(CCZ) / log R(T)", n, 3.6335, tol::GATE_COUNT, &mut fail);
    if n.ceil() != 4.0 {
        fail.push(format!("ceiling {} != 4", n.ceil()));
    }
    let fccz = stab::stabilizer_fidelity(&stab::ccz_state(), &stab::enumerate(3)?)?.0;
    let copies = bounds::copy_floor(rt, 0.0, fccz, 1, 0.09)?.value("n_rob").unwrap_or(f64::NAN);
    if !(copies > 3.0) {
        fail.push(format!("n_rob at eps = 0.09 is {copies}"));
    }
    Ok(outcome(fail, format!("n = {n:.4}, n_rob(0.09) = {copies:.4}")))
}

fn weight_dominance(certs: &mut Certificates) -> Result<Outcome> {
    let opts = options();
    let fs = FreeSet::stab_states(3)?;
    let f = stab::stabilizer_fidelity(&stab::ccz_state(), &stab::enumerate(3)?)?.0;
    let mut fail = Vec::new();
    let mut worst = f64::INFINITY;
    for k in 1..=5 {
        let p = k as f64 / 10.0;
        let rho = noisy_t_state(p)?;
        let rho3 = rho.op().kron(rho.op()).kron(rho.op());
        let lambda = rho3.min_eigenvalue()?;
        let obj: Object = DensityOperator::from_hermitian(rho3)?.into();
        let w = certs.measure(&format!("W(rho_{p}^3)"), &measures::weight_with(&obj, &fs, &opts)?);
        let ew = bounds::error_floor_state(1.0, w, f)?.get("epsilon_weight").unwrap().value_or_trivial();
        let ee = bounds::previous_bound(lambda.max(0.0), f)?.get("epsilon_eig").unwrap().value_or_trivial();
        worst = worst.min(ew / ee - 1.0);
        if !(ew >= (1.0 + tol::WEIGHT_MARGIN) * ee && ew > ee) {
            fail.push(format!("p = {p}: weight {ew:.3e} vs eigenvalue {ee:.3e}"));
        }
    }
    Ok(outcome(fail, format!("smallest relative margin {worst:.1}")))
}

fn enumeration_counts() -> Result<Outcome> {
    let mut fail = Vec::new();
    let mut counts = Vec::new();
    for n in 1..=4 {
        let got = stab::enumerate(n)?.len();
        let want = (1..=n).fold(1usize << n, |acc, k| acc * ((1 << k) + 1));
        if got != want || got != stab::expected_count(n) {
            fail.push(format!("n = {n}: {got} vs {want}"));
        }
        counts.push(got.to_string());
    }
    Ok(outcome(fail, counts.join(" / ")))
}

fn certification(certs: &Certificates) -> Outcome {
    let ok = format!("{} programs, largest gap {:.1e}", certs.solves, certs.worst_gap);
    outcome(certs.failures.clone(), ok)
}

fn multiplicativity(opts: &SelftestOptions) -> Result<Outcome> {
    let mopts = MeasureOptions { verify_samples: 100, ..MeasureOptions::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let sets = [
        ("NS", FreeSet::replacement_channels(2, 2)?, FreeSet::replacement_channels(4, 4)?),
        ("PPT", FreeSet::ppt_channels(2, 2)?, FreeSet::ppt_channels(4, 4)?),
    ];
    let mut fail = Vec::new();
    for i in 0..opts.pairs {
        let e = Channel::random(2, 2, 1 + i % 4, &mut rng);
        let f = Channel::random(2, 2, 1 + (i / 4) % 4, &mut rng);
        let (oe, of, oef): (Object, Object, Object) = (e.clone().into(), f.clone().into(), e.tensor(&f).into());
        for (name, small, big) in &sets {
            let rob = |o: &Object, fs: &FreeSet| measures::robustness_with(o, fs, &mopts).map(|r| r.value());
            let wt = |o: &Object, fs: &FreeSet| measures::weight_with(o, fs, &mopts).map(|r| r.value());
            let (re, rf, ref_) = (rob(&oe, small)?, rob(&of, small)?, rob(&oef, big)?);
            if ref_ > re * rf * (1.0 + tol::MULTIPLICATIVITY) {
                fail.push(format!("{name} pair {i}: R {ref_:.8} > {:.8}", re * rf));
            }
            let (we, wf, wef) = (wt(&oe, small)?, wt(&of, small)?, wt(&oef, big)?);
            if wef < we * wf * (1.0 - tol::MULTIPLICATIVITY) - 1e-9 {
                fail.push(format!("{name} pair {i}: W {wef:.8} < {:.8}", we * wf));
            }
        }
    }
    Ok(outcome(fail, format!("{} pairs in NS and PPT", opts.pairs)))
}

fn probabilistic_and_coherence(certs: &mut Certificates) -> Result<Outcome> {
    let mut fail = Vec::new();
    for &(r, w, f) in &[(1.7, 0.2, 0.25), (4.0, 0.0, 0.5), (1.0, 1.0, 0.5625), (2.3, 0.6, 0.9)] {
        let pairs = [
            (bounds::error_floor_unitary(r, w, f)?, bounds::probabilistic_floor_channel(r, w, f, 1.0, 1.0)?),
            (bounds::error_floor_state(r, w, f)?, bounds::probabilistic_floor_state(r, w, f, 1.0, 1.0)?),
        ];
        for (det, prob) in pairs {
            let same = det.get("epsilon_rob").unwrap().value == prob.get("epsilon_rob").unwrap().value
                && ["epsilon_weight_loose", "epsilon_weight_tight"]
                    .iter()
                    .all(|n| det.get("epsilon_weight").unwrap().value == prob.get(n).unwrap().value);
            if !same {
                fail.push(format!("p = 1 limit differs at R = {r}, W = {w}, F = {f}"));
            }
        }
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = Hermitian::projector(&[C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(s, 0.0)]);
    let rho = &Hermitian::from_real_diag(&[0.5, 0.0, 0.0]) + &plus.scale(0.5);
    let obj: Object = DensityOperator::from_hermitian(rho)?.into();
    let fs = FreeSet::incoherent_states(3)?;
    let w = certs.measure("W(coherence)", &measures::weight_with(&obj, &fs, &options())?);
    close("W(coherence)", w, 0.5, tol::COHERENCE, &mut fail);
    let tight = bounds::probabilistic_floor_state(2.0, w, 0.5, 0.5, 0.0)?;
    if tight.value("epsilon_weight_tight") != Some(0.0) {
        fail.push(format!("tight floor at trM = 0 is {:?}", tight.value("epsilon_weight_tight")));
    }
    Ok(outcome(fail, format!("W = {w:.10}")))
}

fn h2(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.log2()
    }
}

fn mutual_information() -> Result<Outcome> {
    let mut fail = Vec::new();
    let id = comm::channel_mutual_information(&Channel::identity(2))?;
    close("I(id_2)", id.value, 2.0, tol::MI_IDENTITY, &mut fail);
    for p in grid9() {
        let e = Channel::depolarizing(p, 2)?;
        let i = comm::channel_mutual_information(&e)?.value;
        let want = 2.0 - h2(1.0 - 0.75 * p) - 3.0 * h2(p / 4.0);
        close(&format!("I(D_{p})"), i, want, tol::MI, &mut fail);
        let parallel = bounds::parallel_rate_ceiling(i, 0.25)?.value("rate_parallel");
        let adaptive = bounds::adaptive_rate_ceiling(4.0 - 3.0 * p, 0.25)?.value("rate_adaptive");
        match (parallel, adaptive) {
            (Some(a), Some(b)) if a <= b + 1e-12 => {}
            _ => fail.push(format!("p = {p}: ceilings {parallel:?} vs {adaptive:?}")),
        }
    }
    Ok(outcome(fail, "isotropic closed form on 9 points, I/2 <= log R / 2".into()))
}

const TITLES: [&str; CRITERIA] = [
    "NS tightness for depolarizing",
    "dephasing and damping floors",
    "Choi fidelity constants",
    "stabilizer fidelities",
    "T to CCZ gate count",
    "weight beats eigenvalue bound",
    "stabilizer enumeration counts",
    "solver certification",
    "sub/supermultiplicativity",
    "probabilistic limit, coherence",
    "mutual information",
];

fn timed<F: FnOnce() -> Result<Outcome>>(id: usize, f: F) -> CriterionResult {
    let start = Instant::now();
    let res = f();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match res {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(&(_, limit)) = TIME_LIMITS.iter().find(|(i, _)| *i == id) {
        if elapsed.as_secs_f64() > limit {
            passed = false;
            detail = format!("{detail}; over {limit} s");
        }
    }
    CriterionResult { id, title: TITLES[id - 1], passed, detail, elapsed }
}

/// Runs all criteria in order, calling `report` as each one finishes.
pub fn run_with(opts: &SelftestOptions, mut report: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let mut certs = Certificates::default();
    let mut out = Vec::with_capacity(CRITERIA);
    let mut push = |r: CriterionResult| {
        report(&r);
        out.push(r);
    };
    push(timed(1, || ns_tightness(&mut certs)));
    push(timed(2, || qubit_closed_forms(&mut certs)));
    push(timed(3, || choi_fidelities(&mut certs)));
    push(timed(4, || stabilizer_fidelities(&mut certs)));
    push(timed(5, || gate_synthesis(&mut certs)));
    push(timed(6, || weight_dominance(&mut certs)));
    push(timed(7, enumeration_counts));
    push(timed(8, || Ok(certification(&certs))));
    push(timed(9, || multiplicativity(opts)));
    push(timed(10, || probabilistic_and_coherence(&mut certs)));
    push(timed(11, mutual_information));
    out
}

pub fn run(opts: &SelftestOptions) -> Vec<CriterionResult> {
    run_with(opts, |_| {})
}
