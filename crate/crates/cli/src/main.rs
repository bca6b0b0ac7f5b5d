use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use distill_core::bounds::{self, BoundError, BoundReport};
use distill_core::channels::Channel;
use distill_core::conic::SolveStatus;
use distill_core::figures::{self, FigureError, FigureId, FigureSpec};
use distill_core::measures::{self, MeasureError, MeasureOptions, MeasureResult, Object};
use distill_core::qla::{CMatrix, DensityOperator, Hermitian, C64};
use distill_core::selftest::{self, SelftestOptions};
use distill_core::stab;
use distill_core::theories::FreeSet;

#[derive(Parser)]
#[command(name = "distill", version, about = "Resource monotones and distillation bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a monotone of a channel or state.
    Measure(MeasureArgs),
    /// Evaluate a family of bounds from monotone values.
    Bound(BoundArgs),
    /// Write the data of a figure as CSV.
    Fig(FigArgs),
    /// Run the acceptance suite.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Theory {
    Ns,
    Ppt,
    Sep,
    Stab,
    Coherence,
}

#[derive(Clone, Copy, ValueEnum)]
enum Monotone {
    Robustness,
    Weight,
    Fidelity,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long, value_enum)]
    theory: Theory,
    /// Named channel `name:k=v,...` or a channel file.
    #[arg(long, conflicts_with = "state", required_unless_present = "state")]
    channel: Option<String>,
    /// Named state `name:k=v,...` or a state file.
    #[arg(long)]
    state: Option<String>,
    #[arg(long, value_enum)]
    monotone: Monotone,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Target relative duality gap.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundKind {
    /// Error floors for a unitary target: needs -r, -w, -f.
    Unitary,
    /// Error floors for a pure-state target: needs -r, -w, -f.
    State,
    /// Eigenvalue floor: needs --lambda-min, -f.
    Eigenvalue,
    /// Uses needed for m copies: needs -r, -w, -f, -m, --eps.
    Copies,
    /// Uses needed for an exact transformation: needs --r-in, --r-out, --w-in, --w-out.
    Transform,
    /// Adaptive rate ceiling: needs -r, -f.
    RateAdaptive,
    /// Parallel rate ceiling: needs --d-inf, -f.
    RateParallel,
    /// Probabilistic channel floors: needs -r, -w, -f, -p, --tr-m.
    ProbChannel,
    /// Probabilistic state floors: needs -r, -w, -f, -p, --tr-m.
    ProbState,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(value_enum)]
    kind: BoundKind,
    #[arg(short)]
    r: Option<f64>,
    #[arg(short)]
    w: Option<f64>,
    /// Free fidelity of the target.
    #[arg(short)]
    f: Option<f64>,
    #[arg(short)]
    m: Option<u32>,
    #[arg(long)]
    eps: Option<f64>,
    /// Success probability.
    #[arg(short)]
    p: Option<f64>,
    #[arg(long)]
    tr_m: Option<f64>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    r_in: Option<f64>,
    #[arg(long)]
    r_out: Option<f64>,
    #[arg(long)]
    w_in: Option<f64>,
    #[arg(long)]
    w_out: Option<f64>,
    #[arg(long)]
    d_inf: Option<f64>,
}

#[derive(Args)]
struct FigArgs {
    #[arg(long)]
    fig: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated grid replacing the default one.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Random channel pairs per theory in the multiplicativity check.
    #[arg(long, default_value_t = 50)]
    pairs: usize,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<MeasureError> for Failure {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::Solver(_) | MeasureError::Conic(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<BoundError> for Failure {
    fn from(e: BoundError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<FigureError> for Failure {
    fn from(e: FigureError) -> Self {
        match e {
            FigureError::UnknownId(_) | FigureError::Grid { .. } | FigureError::Bound(_) => Failure::Usage(e.to_string()),
            FigureError::Measure(e) => e.into(),
            FigureError::Io(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type Result<T> = std::result::Result<T, Failure>;

struct Named {
    name: String,
    params: HashMap<String, f64>,
}

impl Named {
    fn parse(spec: &str) -> Result<Self> {
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let mut params = HashMap::new();
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("expected key=value, got {kv:?}")))?;
            let v: f64 = v.trim().parse().map_err(|_| usage(format!("{k}: not a number: {v:?}")))?;
            params.insert(k.trim().to_string(), v);
        }
        Ok(Self { name: name.trim().to_ascii_lowercase(), params })
    }

    fn get(&self, key: &str) -> Result<f64> {
        self.params.get(key).copied().ok_or_else(|| usage(format!("{} needs parameter {key}", self.name)))
    }

    fn get_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.get_or(key, default as f64);
        if v < 1.0 || v.fract() != 0.0 {
            return Err(usage(format!("{key} must be a positive integer, got {v}")));
        }
        Ok(v as usize)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(usage(format!("{} takes no parameter {k}", self.name))),
            None => Ok(()),
        }
    }
}

fn ccz_gate() -> CMatrix {
    let mut d = vec![C64::new(1.0, 0.0); 8];
    d[7] = C64::new(-1.0, 0.0);
    CMatrix::diag(&d)
}

fn bad<E: std::fmt::Display>(e: E) -> Failure {
    usage(e.to_string())
}

fn parse_channel(spec: &str) -> Result<Channel> {
    if Path::new(spec).is_file() {
        let text = fs::read_to_string(spec).map_err(bad)?;
        return Channel::from_text(&text).map_err(bad);
    }
    let n = Named::parse(spec)?;
    let e = match n.name.as_str() {
        "identity" | "id" => {
            n.check_keys(&["d", "n"])?;
            Channel::identity(n.count("d", 2)?)
        }
        "depolarizing" => {
            n.check_keys(&["p", "d", "n"])?;
            Channel::depolarizing(n.get("p")?, n.count("d", 2)?).map_err(bad)?
        }
        "dephasing" => {
            n.check_keys(&["p", "n"])?;
            Channel::dephasing(n.get("p")?).map_err(bad)?
        }
        "amplitude-damping" | "damping" => {
            n.check_keys(&["gamma", "n"])?;
            Channel::amplitude_damping(n.get("gamma")?).map_err(bad)?
        }
        "dephrasure" => {
            n.check_keys(&["p", "q", "n"])?;
            Channel::dephrasure(n.get("p")?, n.get("q")?).map_err(bad)?
        }
        "t" => {
            n.check_keys(&["p", "n"])?;
            figures::noisy_t_gate(n.get_or("p", 0.0))?
        }
        "ccz" => {
            n.check_keys(&["n"])?;
            Channel::unitary(&ccz_gate()).map_err(bad)?
        }
        other => return Err(usage(format!("unknown channel {other:?}"))),
    };
    Ok(e.tensor_power(n.count("n", 1)?))
}

fn parse_state_file(text: &str) -> Result<DensityOperator> {
    let mut tokens = text.split_whitespace();
    let d: usize = tokens.next().ok_or_else(|| usage("empty state file"))?.parse().map_err(bad)?;
    let nums: Vec<f64> = tokens.map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(bad)?;
    if nums.len() != 2 * d * d {
        return Err(usage(format!("state file: expected {} numbers after the dimension, got {}", 2 * d * d, nums.len())));
    }
    let m = CMatrix::from_fn(d, d, |r, c| C64::new(nums[2 * (r * d + c)], nums[2 * (r * d + c) + 1]));
    let h = Hermitian::new(m, 1e-9).map_err(bad)?;
    DensityOperator::from_hermitian(h).map_err(bad)
}

fn parse_state(spec: &str) -> Result<DensityOperator> {
    if Path::new(spec).is_file() {
        return parse_state_file(&fs::read_to_string(spec).map_err(bad)?);
    }
    let n = Named::parse(spec)?;
    let rho = match n.name.as_str() {
        "t" => {
            n.check_keys(&["p", "n"])?;
            figures::noisy_t_state(n.get_or("p", 0.0))?
        }
        "ccz" => {
            n.check_keys(&["n"])?;
            DensityOperator::pure(&stab::ccz_state()).map_err(bad)?
        }
        "zero" | "plus" => {
            n.check_keys(&["n"])?;
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let v = if n.name == "zero" { [1.0, 0.0] } else { [s, s] };
            DensityOperator::pure(&v.map(|x| C64::new(x, 0.0))).map_err(bad)?
        }
        other => return Err(usage(format!("unknown state {other:?}"))),
    };
    let copies = n.count("n", 1)?;
    let mut op = rho.op().clone();
    for _ in 1..copies {
        op = op.kron(rho.op());
    }
    DensityOperator::from_hermitian(op).map_err(bad)
}

fn qubits(d: usize) -> Result<usize> {
    if d.is_power_of_two() && d > 1 {
        Ok(d.trailing_zeros() as usize)
    } else {
        Err(usage(format!("dimension {d} is not a qubit register")))
    }
}

fn free_set(theory: Theory, obj: &Object) -> Result<FreeSet> {
    let fs = match (theory, obj) {
        (Theory::Ns, Object::Channel(e)) => FreeSet::replacement_channels(e.d_in(), e.d_out()),
        (Theory::Ppt, Object::Channel(e)) => FreeSet::ppt_channels(e.d_in(), e.d_out()),
        (Theory::Stab, Object::Channel(e)) => FreeSet::csp_channels(qubits(e.d_in())?, qubits(e.d_out())?),
        (Theory::Stab, Object::State(s)) => FreeSet::stab_states(qubits(s.dim())?),
        (Theory::Coherence, Object::State(s)) => FreeSet::incoherent_states(s.dim()),
        _ => return Err(usage("theory does not apply to this kind of object")),
    };
    fs.map_err(bad)
}

fn print_result(out: &mut impl Write, r: &MeasureResult) -> io::Result<()> {
    match r.value.finite() {
        Some(v) => writeln!(out, "value       {}", figures::format_number(v))?,
        None => writeln!(out, "value       inf")?,
    }
    let d = &r.diagnostics;
    let cert = match &d.witness_check {
        Some(c) if c.passed => "verified",
        Some(_) => "failed",
        None if d.iterations == 0 => "analytic",
        None => "unchecked",
    };
    writeln!(out, "certificate {cert}")?;
    writeln!(out, "status      {:?}", d.status)?;
    writeln!(out, "gap         {:.3e}", d.gap)?;
    writeln!(out, "iterations  {}", d.iterations)
}

fn cmd_measure(a: &MeasureArgs) -> Result<()> {
    let obj: Object = match (&a.channel, &a.state) {
        (Some(c), None) => parse_channel(c)?.into(),
        (None, Some(s)) => parse_state(s)?.into(),
        _ => return Err(usage("give exactly one of --channel or --state")),
    };
    let mut opts = MeasureOptions { seed: a.seed, ..MeasureOptions::default() };
    if let Some(t) = a.tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(usage(format!("--tol must lie in (0, 1), got {t}")));
        }
        opts.solver.gap_tol = t;
    }
    let mut out = io::stdout().lock();
    if let Theory::Sep = a.theory {
        let Object::Channel(e) = &obj else {
            return Err(usage("sep applies to channels"));
        };
        if !matches!(a.monotone, Monotone::Robustness) {
            return Err(usage("sep supports only the robustness"));
        }
        let v = measures::sep_robustness_analytic(e)?;
        writeln!(out, "value       {}\ncertificate analytic", figures::format_number(v)).map_err(bad)?;
        return Ok(());
    }
    let fs = free_set(a.theory, &obj)?;
    let r = match a.monotone {
        Monotone::Robustness => measures::robustness_with(&obj, &fs, &opts)?,
        Monotone::Weight => measures::weight_with(&obj, &fs, &opts)?,
        Monotone::Fidelity => measures::free_fidelity_with(&obj, &fs, &opts)?,
    };
    print_result(&mut out, &r).map_err(bad)?;
    if r.diagnostics.status != SolveStatus::Optimal {
        return Err(Failure::Numerical(format!("solver ended with {:?}", r.diagnostics.status)));
    }
    Ok(())
}

fn need(v: Option<f64>, flag: &str) -> Result<f64> {
    v.ok_or_else(|| usage(format!("missing {flag}")))
}

fn cmd_bound(a: &BoundArgs) -> Result<()> {
    let rep: BoundReport = match a.kind {
        BoundKind::Unitary => bounds::error_floor_unitary(need(a.r, "-r")?, need(a.w, "-w")?, need(a.f, "-f")?)?,
        BoundKind::State => bounds::error_floor_state(need(a.r, "-r")?, need(a.w, "-w")?, need(a.f, "-f")?)?,
        BoundKind::Eigenvalue => bounds::previous_bound(need(a.lambda_min, "--lambda-min")?, need(a.f, "-f")?)?,
        BoundKind::Copies => bounds::copy_floor(
            need(a.r, "-r")?,
            need(a.w, "-w")?,
            need(a.f, "-f")?,
            a.m.ok_or_else(|| usage("missing -m"))?,
            need(a.eps, "--eps")?,
        )?,
        BoundKind::Transform => bounds::transform_floor(
            need(a.r_in, "--r-in")?,
            need(a.r_out, "--r-out")?,
            need(a.w_in, "--w-in")?,
            need(a.w_out, "--w-out")?,
        )?,
        BoundKind::RateAdaptive => bounds::adaptive_rate_ceiling(need(a.r, "-r")?, need(a.f, "-f")?)?,
        BoundKind::RateParallel => bounds::parallel_rate_ceiling(need(a.d_inf, "--d-inf")?, need(a.f, "-f")?)?,
        BoundKind::ProbChannel => bounds::probabilistic_floor_channel(
            need(a.r, "-r")?,
            need(a.w, "-w")?,
            need(a.f, "-f")?,
            need(a.p, "-p")?,
            need(a.tr_m, "--tr-m")?,
        )?,
        BoundKind::ProbState => bounds::probabilistic_floor_state(
            need(a.r, "-r")?,
            need(a.w, "-w")?,
            need(a.f, "-f")?,
            need(a.p, "-p")?,
            need(a.tr_m, "--tr-m")?,
        )?,
    };
    print!("{rep}");
    Ok(())
}

fn cmd_fig(a: &FigArgs) -> Result<()> {
    let id: FigureId = a.fig.parse()?;
    let spec = match &a.grid {
        Some(g) => FigureSpec::with_grid(id, g.clone())?,
        None => FigureSpec::new(id),
    };
    let mut opts = MeasureOptions { seed: a.seed, ..MeasureOptions::default() };
    if let Some(t) = a.tol {
        opts.solver.gap_tol = t;
    }
    let table = figures::compute(&spec, &opts)?;
    match &a.out {
        Some(path) => table.write_csv(fs::File::create(path).map_err(bad)?)?,
        None => table.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_selftest(a: &SelftestArgs) -> Result<()> {
    let opts = SelftestOptions { seed: a.seed, pairs: a.pairs };
    let results = selftest::run_with(&opts, |r| println!("{r}"));
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed} of {} criteria passed", results.len());
    if passed == results.len() {
        Ok(())
    } else {
        Err(Failure::Numerical("acceptance suite failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Measure(a) => cmd_measure(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Fig(a) => cmd_fig(a),
        Command::Selftest(a) => cmd_selftest(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Numerical(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
