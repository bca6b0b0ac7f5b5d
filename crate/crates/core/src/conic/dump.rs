//! Plain-text program dump for cross-checking with external solvers.
//!
//! ```text
//! conic-program 1
//! vars <n>
//! objective <c_0> ... <c_{n-1}>
//! signs <f|+|-> ...
//! eq <rhs> <j>:<a> ...
//! lmi <k> <dim> const re,im re,im ...
//! lmi <k> <dim> x<j> re,im re,im ...
//! ```
//!
//! Each LMI block occupies one line with its dense entries in row-major order.

use std::fmt::Write;

use super::{ConicProgram, Constraint, SparseHermitian, VarSign};

fn block_line(out: &mut String, k: usize, label: &str, m: &SparseHermitian) {
    let d = m.dim();
    let dense = m.to_dense();
    let _ = write!(out, "lmi {k} {d} {label}");
    for r in 0..d {
        for c in 0..d {
            let v = dense[(r, c)];
            let _ = write!(out, " {:e},{:e}", v.re, v.im);
        }
    }
    out.push('\n');
}

pub fn dump_program(p: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "conic-program 1");
    let _ = writeln!(out, "vars {}", p.num_vars());
    out.push_str("objective");
    for c in &p.objective {
        let _ = write!(out, " {c:e}");
    }
    out.push('\n');
    out.push_str("signs");
    for s in &p.signs {
        out.push_str(match s {
            VarSign::Free => " f",
            VarSign::NonNegative => " +",
            VarSign::NonPositive => " -",
        });
    }
    out.push('\n');
    for (k, con) in p.constraints.iter().enumerate() {
        match con {
            Constraint::Equality { coeffs, rhs } => {
                let _ = write!(out, "eq {rhs:e}");
                for (j, a) in coeffs {
                    let _ = write!(out, " {j}:{a:e}");
                }
                out.push('\n');
            }
            Constraint::Lmi(l) => {
                block_line(&mut out, k, "const", &l.constant);
                for (j, g) in &l.terms {
                    block_line(&mut out, k, &format!("x{j}"), g);
                }
            }
        }
    }
    out
}
