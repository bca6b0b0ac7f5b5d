//! Bound curves for the communication and magic-state examples, as tables.

use std::fmt;
use std::io;
use std::str::FromStr;

use crate::bounds::{self, Bound, BoundError, BoundReport};
use crate::channels::{Channel, ChannelError};
use crate::comm::{self, CommError, NsForm};
use crate::measures::{self, MeasureError, MeasureOptions, MeasureResult, Object};
use crate::qla::{CMatrix, DensityOperator, QlaError, C64};
use crate::stab::{self, StabError};
use crate::theories::{FreeSet, TheoryError};

#[derive(Debug, thiserror::Error)]
pub enum FigureError {
    #[error("unknown figure id {0:?}")]
    UnknownId(String),
    #[error("grid value {value} outside {range}")]
    Grid { value: f64, range: &'static str },
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Stab(#[from] StabError),
    #[error(transparent)]
    Qla(#[from] QlaError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, FigureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    /// Depolarizing qubit channel to `id_2` under NS codes.
    F2a,
    /// Two uses of the depolarizing channel to `id_2`.
    F2b,
    /// Dephrasure channel with `q = p^2` to `id_2`.
    F2c,
    /// Two uses of the dephrasure channel to `id_2`.
    F2d,
    /// Depolarized T gate to the CCZ gate.
    F3a,
    /// Three copies of the depolarized T state to the CCZ state.
    F3b,
    /// Uses of the `p = 1/4` depolarized T gate needed for the CCZ gate.
    F4a,
    /// Copies of the `p = 1/4` depolarized T state needed for the CCZ state.
    F4b,
}

impl FigureId {
    pub const ALL: [FigureId; 8] = [
        FigureId::F2a,
        FigureId::F2b,
        FigureId::F2c,
        FigureId::F2d,
        FigureId::F3a,
        FigureId::F3b,
        FigureId::F4a,
        FigureId::F4b,
    ];

    /// Name of the grid parameter.
    pub fn parameter(self) -> &'static str {
        match self {
            FigureId::F4a | FigureId::F4b => "epsilon",
            _ => "p",
        }
    }

    /// The default grid: 21 noise values on `[0, 1]` (`[0, 1/2]` for state
    /// figures), or 25 log-spaced precisions on `[1e-6, 0.4]`.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            FigureId::F4a | FigureId::F4b => {
                let (lo, hi) = (1e-6f64.ln(), 0.4f64.ln());
                (0..25).map(|i| (lo + (hi - lo) * i as f64 / 24.0).exp()).collect()
            }
            FigureId::F3b => (0..=10).map(|i| i as f64 / 20.0).collect(),
            _ => (0..=20).map(|i| i as f64 / 20.0).collect(),
        }
    }

    fn check(self, x: f64) -> Result<()> {
        let (ok, range) = match self.parameter() {
            "epsilon" => (x > 0.0 && x < 1.0, "(0, 1)"),
            _ => ((0.0..=1.0).contains(&x), "[0, 1]"),
        };
        if ok {
            Ok(())
        } else {
            Err(FigureError::Grid { value: x, range })
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FigureId::F2a => "2a",
            FigureId::F2b => "2b",
            FigureId::F2c => "2c",
            FigureId::F2d => "2d",
            FigureId::F3a => "3a",
            FigureId::F3b => "3b",
            FigureId::F4a => "4a",
            FigureId::F4b => "4b",
        };
        f.write_str(s)
    }
}

impl FromStr for FigureId {
    type Err = FigureError;
    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| FigureError::UnknownId(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureSpec {
    pub id: FigureId,
    pub grid: Vec<f64>,
}

impl FigureSpec {
    pub fn new(id: FigureId) -> Self {
        Self { id, grid: id.default_grid() }
    }

    pub fn with_grid(id: FigureId, grid: Vec<f64>) -> Result<Self> {
        for &x in &grid {
            id.check(x)?;
        }
        Ok(Self { id, grid })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

/// Formats with 12 significant digits and the shortest round-trip representation.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => f.write_str(&format_number(*v)),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric value at a row and named column.
    pub fn get(&self, row: usize, name: &str) -> Option<f64> {
        self.rows.get(row)?.get(self.column(name)?)?.num()
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.columns)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|c| c.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn bound_cells(b: &Bound) -> [Cell; 2] {
    [Cell::Num(b.value_or_trivial()), Cell::Text(b.status.to_string())]
}

fn report_cells(rep: &BoundReport, names: &[&str]) -> Vec<Cell> {
    names.iter().flat_map(|n| bound_cells(rep.get(n).expect("bound present"))).collect()
}

fn certified(results: &[&MeasureResult]) -> bool {
    results
        .iter()
        .all(|r| r.diagnostics.witness_check.as_ref().is_none_or(|c| c.passed))
}

fn t_gate() -> CMatrix {
    let w = std::f64::consts::FRAC_PI_4;
    CMatrix::diag(&[C64::new(1.0, 0.0), C64::new(w.cos(), w.sin())])
}

/// `D_p` after the T gate.
pub fn noisy_t_gate(p: f64) -> Result<Channel> {
    Ok(Channel::depolarizing(p, 2)?.compose(&Channel::unitary(&t_gate())?)?)
}

/// `D_p(|T><T|)`.
pub fn noisy_t_state(p: f64) -> Result<DensityOperator> {
    let t = DensityOperator::pure(&stab::t_state())?;
    Ok(DensityOperator::from_hermitian(Channel::depolarizing(p, 2)?.apply(t.op())?)?)
}

/// Stabilizer fidelity of the CCZ state from the 3-qubit polytope.
pub fn ccz_fidelity() -> Result<f64> {
    let poly = stab::enumerate(3)?;
    Ok(stab::stabilizer_fidelity(&stab::ccz_state(), &poly)?.0)
}

fn communication(spec: &FigureSpec, opts: &MeasureOptions) -> Result<Table> {
    let copies = match spec.id {
        FigureId::F2b | FigureId::F2d => 2,
        _ => 1,
    };
    let dephrasure = matches!(spec.id, FigureId::F2c | FigureId::F2d);
    let ns_free = FreeSet::replacement_channels(2, 2)?;
    let f = measures::free_fidelity_with(&Channel::identity(2).into(), &ns_free, opts)?.value();
    let mut t = Table::new(&[
        "p",
        "epsilon_rob",
        "epsilon_rob_status",
        "epsilon_weight",
        "epsilon_weight_status",
        "epsilon_ns",
        "robustness",
        "weight",
        "certified",
    ]);
    for &p in &spec.grid {
        let single = if dephrasure { Channel::dephrasure(p, p * p)? } else { Channel::depolarizing(p, 2)? };
        let e = single.tensor_power(copies);
        let fs = FreeSet::replacement_channels(e.d_in(), e.d_out())?;
        let obj: Object = e.clone().into();
        let r = measures::robustness_with(&obj, &fs, opts)?;
        let w = measures::weight_with(&obj, &fs, opts)?;
        let rep = bounds::error_floor_unitary(r.value(), w.value(), f)?;
        let ns = comm::ns_achievable_fidelity_with(&e, 2, NsForm::Auto, &opts.solver)?.value;
        let mut row = vec![Cell::Num(p)];
        row.extend(report_cells(&rep, &["epsilon_rob", "epsilon_weight"]));
        row.extend([
            Cell::Num(1.0 - ns),
            Cell::Num(r.value()),
            Cell::Num(w.value()),
            Cell::Text(certified(&[&r, &w]).to_string()),
        ]);
        t.rows.push(row);
    }
    Ok(t)
}

fn magic_gate(spec: &FigureSpec, opts: &MeasureOptions) -> Result<Table> {
    let fs = FreeSet::csp_channels(1, 1)?;
    let f = ccz_fidelity()?;
    let mut t = Table::new(&[
        "p",
        "epsilon_rob",
        "epsilon_rob_status",
        "epsilon_weight",
        "epsilon_weight_status",
        "robustness",
        "weight",
        "certified",
    ]);
    for &p in &spec.grid {
        let obj: Object = noisy_t_gate(p)?.into();
        let r = measures::robustness_with(&obj, &fs, opts)?;
        let w = measures::weight_with(&obj, &fs, opts)?;
        let rep = bounds::error_floor_unitary(r.value(), w.value(), f)?;
        let mut row = vec![Cell::Num(p)];
        row.extend(report_cells(&rep, &["epsilon_rob", "epsilon_weight"]));
        row.extend([Cell::Num(r.value()), Cell::Num(w.value()), Cell::Text(certified(&[&r, &w]).to_string())]);
        t.rows.push(row);
    }
    Ok(t)
}

fn magic_state(spec: &FigureSpec, opts: &MeasureOptions) -> Result<Table> {
    let fs = FreeSet::stab_states(3)?;
    let f = ccz_fidelity()?;
    let mut t = Table::new(&[
        "p",
        "epsilon_rob",
        "epsilon_rob_status",
        "epsilon_weight",
        "epsilon_weight_status",
        "epsilon_eig",
        "epsilon_eig_status",
        "robustness",
        "weight",
        "lambda_min",
        "certified",
    ]);
    for &p in &spec.grid {
        let rho = noisy_t_state(p)?;
        let rho3 = rho.op().kron(rho.op()).kron(rho.op());
        let lambda_min = rho3.min_eigenvalue()?.max(0.0);
        let obj: Object = DensityOperator::from_hermitian(rho3)?.into();
        let r = measures::robustness_with(&obj, &fs, opts)?;
        let w = measures::weight_with(&obj, &fs, opts)?;
        let rep = bounds::error_floor_state(r.value(), w.value(), f)?;
        let prev = bounds::previous_bound(lambda_min, f)?;
        let mut row = vec![Cell::Num(p)];
        row.extend(report_cells(&rep, &["epsilon_rob", "epsilon_weight"]));
        row.extend(report_cells(&prev, &["epsilon_eig"]));
        row.extend([
            Cell::Num(r.value()),
            Cell::Num(w.value()),
            Cell::Num(lambda_min),
            Cell::Text(certified(&[&r, &w]).to_string()),
        ]);
        t.rows.push(row);
    }
    Ok(t)
}

fn copies(spec: &FigureSpec, opts: &MeasureOptions) -> Result<Table> {
    let (obj, fs): (Object, FreeSet) = match spec.id {
        FigureId::F4a => (noisy_t_gate(0.25)?.into(), FreeSet::csp_channels(1, 1)?),
        _ => (noisy_t_state(0.25)?.into(), FreeSet::stab_states(1)?),
    };
    let f = ccz_fidelity()?;
    let r = measures::robustness_with(&obj, &fs, opts)?;
    let w = measures::weight_with(&obj, &fs, opts)?;
    let ok = certified(&[&r, &w]).to_string();
    let mut t = Table::new(&[
        "epsilon",
        "n_rob",
        "n_rob_status",
        "n_weight",
        "n_weight_status",
        "robustness",
        "weight",
        "certified",
    ]);
    for &eps in &spec.grid {
        let rep = bounds::copy_floor(r.value(), w.value(), f, 1, eps)?;
        let mut row = vec![Cell::Num(eps)];
        row.extend(report_cells(&rep, &["n_rob", "n_weight"]));
        row.extend([Cell::Num(r.value()), Cell::Num(w.value()), Cell::Text(ok.clone())]);
        t.rows.push(row);
    }
    Ok(t)
}

/// Evaluates every curve of a figure on its grid.
pub fn compute(spec: &FigureSpec, opts: &MeasureOptions) -> Result<Table> {
    for &x in &spec.grid {
        spec.id.check(x)?;
    }
    match spec.id {
        FigureId::F2a | FigureId::F2b | FigureId::F2c | FigureId::F2d => communication(spec, opts),
        FigureId::F3a => magic_gate(spec, opts),
        FigureId::F3b => magic_state(spec, opts),
        FigureId::F4a | FigureId::F4b => copies(spec, opts),
    }
}
