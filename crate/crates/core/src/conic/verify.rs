//! Independent re-check of a claimed optimal solution.

use super::{ConicProgram, ConicSolution, Constraint, Multiplier, VarSign};
use crate::qla::Hermitian;

/// Residuals recomputed from the program data. All quantities are relative
/// to the data scale described on each field.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    /// Max `|a^T x - b| / (1 + |b|)` over equalities.
    pub equality_residual: f64,
    /// Most negative eigenvalue of an LMI evaluated at `x`, over `1 + max|G_0|`.
    pub lmi_violation: f64,
    /// Sign-constraint violation of `x`.
    pub sign_violation: f64,
    /// Most negative eigenvalue of a multiplier `Z`.
    pub dual_violation: f64,
    /// Sign violation of the sign-constraint multipliers.
    pub dual_sign_violation: f64,
    /// `max_j |c_j - a_j y - <G_j, Z> - s_j| / (1 + max|c|)`.
    pub stationarity: f64,
    /// `|sum <F(x), Z> + sum x_j s_j| / max(1, |primal|)`.
    pub complementarity: f64,
    /// `|primal - dual| / max(1, |primal|)` with both values recomputed.
    pub gap: f64,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn min_eig(h: &Hermitian) -> f64 {
    h.min_eigenvalue().unwrap_or(f64::NEG_INFINITY)
}

pub fn verify(p: &ConicProgram, s: &ConicSolution, tol: f64) -> VerifyReport {
    let n = p.num_vars();
    let mut failures = Vec::new();
    if s.x.len() != n || s.multipliers.len() != p.constraints.len() || s.sign_multipliers.len() != n {
        failures.push("solution shape does not match the program".to_string());
        return VerifyReport {
            equality_residual: f64::INFINITY,
            lmi_violation: f64::INFINITY,
            sign_violation: f64::INFINITY,
            dual_violation: f64::INFINITY,
            dual_sign_violation: f64::INFINITY,
            stationarity: f64::INFINITY,
            complementarity: f64::INFINITY,
            gap: f64::INFINITY,
            failures,
        };
    }
    let x = &s.x;
    let mut eq_res: f64 = 0.0;
    let mut lmi_viol: f64 = 0.0;
    let mut dual_viol: f64 = 0.0;
    let mut comp = 0.0;
    let mut resid = p.objective.clone();
    let mut primal = 0.0;
    let mut dual = 0.0;
    for (j, c) in p.objective.iter().enumerate() {
        primal += c * x[j];
    }
    for (k, (con, mult)) in p.constraints.iter().zip(&s.multipliers).enumerate() {
        match (con, mult) {
            (Constraint::Equality { coeffs, rhs }, Multiplier::Equality(y)) => {
                let ax: f64 = coeffs.iter().map(|&(j, a)| a * x[j]).sum();
                eq_res = eq_res.max((ax - rhs).abs() / (1.0 + rhs.abs()));
                for &(j, a) in coeffs {
                    resid[j] -= a * y;
                }
                dual += rhs * y;
            }
            (Constraint::Lmi(l), Multiplier::Lmi(z)) => {
                if z.dim() != l.dim {
                    failures.push(format!("constraint {k}: multiplier has wrong dimension"));
                    continue;
                }
                let fx = l.evaluate(x);
                let scale = 1.0 + l.constant.entries().iter().fold(0.0f64, |m, e| m.max(e.2.norm()));
                lmi_viol = lmi_viol.max(-min_eig(&fx) / scale);
                dual_viol = dual_viol.max(-min_eig(z));
                comp += fx.inner(z);
                for (j, g) in &l.terms {
                    resid[*j] -= g.inner_dense(z.matrix());
                }
                dual -= l.constant.inner_dense(z.matrix());
            }
            _ => failures.push(format!("constraint {k}: multiplier kind does not match")),
        }
    }
    let mut sign_viol: f64 = 0.0;
    let mut dual_sign_viol: f64 = 0.0;
    for j in 0..n {
        let sm = s.sign_multipliers[j];
        resid[j] -= sm;
        comp += x[j] * sm;
        match p.signs[j] {
            VarSign::Free => dual_sign_viol = dual_sign_viol.max(sm.abs()),
            VarSign::NonNegative => {
                sign_viol = sign_viol.max(-x[j]);
                dual_sign_viol = dual_sign_viol.max(-sm);
            }
            VarSign::NonPositive => {
                sign_viol = sign_viol.max(x[j]);
                dual_sign_viol = dual_sign_viol.max(sm);
            }
        }
    }
    let cmax = p.objective.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let stationarity = resid.iter().fold(0.0f64, |m, r| m.max(r.abs())) / (1.0 + cmax);
    let complementarity = comp.abs() / primal.abs().max(1.0);
    let gap = ConicSolution::relative_gap(primal, dual);
    let checks = [
        ("equality residual", eq_res),
        ("LMI infeasibility", lmi_viol),
        ("sign infeasibility", sign_viol),
        ("dual infeasibility", dual_viol),
        ("dual sign infeasibility", dual_sign_viol),
        ("stationarity", stationarity),
        ("complementary slackness", complementarity),
        ("duality gap", gap),
    ];
    for (name, v) in checks {
        if !(v <= tol) {
            failures.push(format!("{name} {v:.3e} exceeds {tol:.1e}"));
        }
    }
    VerifyReport {
        equality_residual: eq_res,
        lmi_violation: lmi_viol,
        sign_violation: sign_viol,
        dual_violation: dual_viol,
        dual_sign_violation: dual_sign_viol,
        stationarity,
        complementarity,
        gap,
        failures,
    }
}
