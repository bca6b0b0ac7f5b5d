//! Pure stabilizer states on 1 to 4 qubits.
//!
//! Every stabilizer state has the affine form
//! `2^{-k/2} sum_y i^{l.y} (-1)^{q(y)} |s + B y>` where `B` spans a
//! `k`-dimensional subspace of `F_2^n`, `s` is a coset shift, `l` a linear
//! form and `q` a quadratic form over `F_2^k`. Enumerating `(B, s, q, l)` with
//! `B` in reduced row echelon form and `s` zero on the pivots yields each state
//! once.
//!
//! Basis index `x` is an `n`-bit integer whose most significant bit is qubit 0.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write as _};
use std::path::Path;

use thiserror::Error;

use crate::qla::{Hermitian, C64};

pub const MAX_QUBITS: usize = 4;
const CACHE_VERSION: &str = "stabilizer-polytope v1";

#[derive(Debug, Error)]
pub enum StabError {
    #[error("qubit count {0} outside 1..=4")]
    OutOfRange(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("cache file: {0}")]
    Io(#[from] io::Error),
    #[error("cache file is malformed: {0}")]
    Cache(String),
}

/// Affine-form descriptor of a stabilizer state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineForm {
    /// Basis of the subspace in reduced row echelon form.
    pub basis: Vec<u32>,
    pub shift: u32,
    /// Strictly upper triangular part of `q`: `quadratic[i]` has bit `j` set
    /// when the monomial `y_i y_j` (`i < j`) is present.
    pub quadratic: Vec<u32>,
    /// Linear part of `q` (sign flips).
    pub sign: u32,
    /// Linear form `l` (factors of `i`).
    pub imaginary: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizerState {
    pub n: usize,
    pub amplitudes: Vec<C64>,
    /// `None` for states loaded from a cache file.
    pub form: Option<AffineForm>,
}

impl StabilizerState {
    pub fn from_form(n: usize, form: AffineForm) -> Self {
        let k = form.basis.len();
        let norm = (0.5f64).powf(k as f64 / 2.0);
        let phases = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << n];
        for y in 0u32..(1 << k) {
            let mut x = form.shift;
            let mut e = 0u32;
            for (j, b) in form.basis.iter().enumerate() {
                if y >> j & 1 == 1 {
                    x ^= b;
                    e += form.imaginary >> j & 1;
                    e += 2 * (form.sign >> j & 1);
                    e += 2 * (form.quadratic[j] & y).count_ones();
                }
            }
            amplitudes[x as usize] = phases[(e % 4) as usize] * norm;
        }
        Self {
            n,
            amplitudes,
            form: Some(form),
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn projector(&self) -> Hermitian {
        Hermitian::projector(&self.amplitudes)
    }

    /// `|<self|phi>|^2`.
    pub fn overlap(&self, phi: &[C64]) -> f64 {
        self.amplitudes
            .iter()
            .zip(phi)
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            .norm_sqr()
    }
}

/// Global-phase invariant key of a state vector: amplitudes rotated so the
/// first nonzero one is positive real, then rounded to 12 decimals.
pub fn fingerprint(v: &[C64]) -> Vec<(i64, i64)> {
    let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let lead = v.iter().find(|a| a.norm() > 1e-9).copied().unwrap_or(C64::new(1.0, 0.0));
    let rot = lead.conj() / lead.norm() / norm;
    v.iter()
        .map(|a| {
            let b = a * rot;
            ((b.re * 1e12).round() as i64, (b.im * 1e12).round() as i64)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct StabilizerPolytope {
    pub n: usize,
    pub vertices: Vec<StabilizerState>,
}

impl StabilizerPolytope {
    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn projectors(&self) -> Vec<Hermitian> {
        self.vertices.iter().map(|v| v.projector()).collect()
    }

    /// Map from fingerprint to vertex index.
    pub fn index(&self) -> HashMap<Vec<(i64, i64)>, usize> {
        self.vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (fingerprint(&v.amplitudes), i))
            .collect()
    }
}

/// `2^n prod_{k=1..n} (2^k + 1)`.
pub fn expected_count(n: usize) -> usize {
    (1..=n).fold(1usize << n, |acc, k| acc * ((1 << k) + 1))
}

/// All `k`-dimensional subspaces of `F_2^n` as RREF bases. Pivot of a row is
/// its most significant set bit.
fn subspaces(n: usize, k: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for pivots in combinations(n, k) {
        // Free positions of row i: non-pivot bits below its pivot.
        let free: Vec<Vec<usize>> = pivots
            .iter()
            .map(|&p| (0..p).filter(|b| !pivots.contains(b)).collect())
            .collect();
        let total: usize = free.iter().map(Vec::len).sum();
        for bits in 0u32..(1 << total) {
            let mut offset = 0;
            let basis = pivots
                .iter()
                .zip(&free)
                .map(|(&p, f)| {
                    let mut row = 1u32 << p;
                    for (t, &b) in f.iter().enumerate() {
                        if bits >> (offset + t) & 1 == 1 {
                            row |= 1 << b;
                        }
                    }
                    offset += f.len();
                    row
                })
                .collect();
            out.push(basis);
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|b| m >> b & 1 == 1).collect())
        .collect()
}

/// Enumerates all pure stabilizer states on `n` qubits.
pub fn enumerate(n: usize) -> Result<StabilizerPolytope, StabError> {
    if n == 0 || n > MAX_QUBITS {
        return Err(StabError::OutOfRange(n));
    }
    let mut vertices = Vec::with_capacity(expected_count(n));
    let mut seen = std::collections::HashSet::new();
    for k in 0..=n {
        for basis in subspaces(n, k) {
            let pivot_mask: u32 = basis.iter().map(|b| 1u32 << (31 - b.leading_zeros())).fold(0, |a, b| a | b);
            let shifts: Vec<u32> = (0u32..(1 << n)).filter(|s| s & pivot_mask == 0).collect();
            let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
            for &shift in &shifts {
                for qbits in 0u32..(1 << pairs.len()) {
                    let mut quadratic = vec![0u32; k];
                    for (t, &(i, j)) in pairs.iter().enumerate() {
                        if qbits >> t & 1 == 1 {
                            quadratic[i] |= 1 << j;
                        }
                    }
                    for sign in 0u32..(1 << k) {
                        for imaginary in 0u32..(1 << k) {
                            let form = AffineForm {
                                basis: basis.clone(),
                                shift,
                                quadratic: quadratic.clone(),
                                sign,
                                imaginary,
                            };
                            let s = StabilizerState::from_form(n, form);
                            if seen.insert(fingerprint(&s.amplitudes)) {
                                vertices.push(s);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(StabilizerPolytope { n, vertices })
}

fn encode(a: C64, scale: f64) -> Result<char, StabError> {
    let b = a / scale;
    let close = |x: f64, y: f64| (b.re - x).abs() < 1e-9 && (b.im - y).abs() < 1e-9;
    if a.norm() < 1e-12 {
        Ok('0')
    } else if close(1.0, 0.0) {
        Ok('+')
    } else if close(-1.0, 0.0) {
        Ok('-')
    } else if close(0.0, 1.0) {
        Ok('i')
    } else if close(0.0, -1.0) {
        Ok('j')
    } else {
        Err(StabError::Cache(format!("amplitude {a} is not a stabilizer phase")))
    }
}

/// Text serialization: a version header, then one line per state with one
/// character per amplitude from `0 + - i j` (`j` is `-i`); the magnitude is
/// implied by the support size.
pub fn write_cache(poly: &StabilizerPolytope, w: &mut impl io::Write) -> Result<(), StabError> {
    writeln!(w, "{CACHE_VERSION} n={} count={}", poly.n, poly.len())?;
    for v in &poly.vertices {
        let support = v.amplitudes.iter().filter(|a| a.norm() > 1e-12).count();
        let scale = 1.0 / (support as f64).sqrt();
        let line: String = v.amplitudes.iter().map(|&a| encode(a, scale)).collect::<Result<_, _>>()?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_cache(n: usize, text: &str) -> Result<StabilizerPolytope, StabError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| StabError::Cache("empty file".into()))?;
    let expected = format!("{CACHE_VERSION} n={n} count={}", expected_count(n));
    if header != expected {
        return Err(StabError::Cache(format!("header {header:?} does not match {expected:?}")));
    }
    let mut vertices = Vec::with_capacity(expected_count(n));
    for line in lines {
        if line.len() != 1 << n {
            return Err(StabError::Cache(format!("line of length {} for n = {n}", line.len())));
        }
        let support = line.chars().filter(|&c| c != '0').count();
        if support == 0 {
            return Err(StabError::Cache("zero vector".into()));
        }
        let s = 1.0 / (support as f64).sqrt();
        let amplitudes = line
            .chars()
            .map(|c| match c {
                '0' => Ok(C64::new(0.0, 0.0)),
                '+' => Ok(C64::new(s, 0.0)),
                '-' => Ok(C64::new(-s, 0.0)),
                'i' => Ok(C64::new(0.0, s)),
                'j' => Ok(C64::new(0.0, -s)),
                other => Err(StabError::Cache(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        vertices.push(StabilizerState {
            n,
            amplitudes,
            form: None,
        });
    }
    if vertices.len() != expected_count(n) {
        return Err(StabError::Cache(format!("{} states, expected {}", vertices.len(), expected_count(n))));
    }
    Ok(StabilizerPolytope { n, vertices })
}

pub fn cache_file_name(n: usize) -> String {
    format!("stabilizer-v1-n{n}.txt")
}

/// Loads the polytope from `dir`, regenerating and rewriting the cache file
/// when it is absent or unreadable.
pub fn enumerate_cached(n: usize, dir: &Path) -> Result<StabilizerPolytope, StabError> {
    if n == 0 || n > MAX_QUBITS {
        return Err(StabError::OutOfRange(n));
    }
    let path = dir.join(cache_file_name(n));
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(p) = read_cache(n, &text) {
            return Ok(p);
        }
    }
    let poly = enumerate(n)?;
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    write_cache(&poly, &mut buf)?;
    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&buf)?;
    fs::rename(&tmp, &path)?;
    Ok(poly)
}

/// Maximum of `|<s|phi>|^2` over the vertices, with the maximizing index.
pub fn stabilizer_fidelity(phi: &[C64], poly: &StabilizerPolytope) -> Result<(f64, usize), StabError> {
    if phi.len() != poly.dim() {
        return Err(StabError::Dimension {
            expected: poly.dim(),
            got: phi.len(),
        });
    }
    let norm: f64 = phi.iter().map(|a| a.norm_sqr()).sum();
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, v) in poly.vertices.iter().enumerate() {
        let f = v.overlap(phi) / norm;
        if f > best.0 {
            best = (f, i);
        }
    }
    Ok(best)
}

/// `|T> = T|+>` with `T = diag(1, e^{i pi/4})`.
pub fn t_state() -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![C64::new(s, 0.0), C64::from_polar(s, std::f64::consts::FRAC_PI_4)]
}

/// `|CCZ> = CCZ|+++>`.
pub fn ccz_state() -> Vec<C64> {
    let s = 1.0 / 8f64.sqrt();
    (0..8).map(|x| C64::new(if x == 7 { -s } else { s }, 0.0)).collect()
}

/// Tensor product of state vectors.
pub fn tensor_vectors(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}
