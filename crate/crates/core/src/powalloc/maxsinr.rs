use super::{finish, AllocationOutcome, Scheme};
use crate::convex::{
    gp_log_transform, solve_from, GpProgram, Monomial, Posynomial, SolveStatus, SolverOptions,
};
use crate::error::{Error, Result};
use crate::se_eval::{NormalizedCoefficients, SECoefficients, ShareRule};

/// Max-product-SINR by geometric programming over `(p_c, p, o_c, o)`,
/// where `o` are SINR auxiliaries.
pub fn maxsinr_gp(coeffs: &SECoefficients, budget_mw: f64) -> Result<AllocationOutcome> {
    solve_gp(coeffs, budget_mw, true)
}

/// Same without the common stream.
pub fn nors_gp(coeffs: &SECoefficients, budget_mw: f64) -> Result<AllocationOutcome> {
    solve_gp(coeffs, budget_mw, false)
}

fn push_term(terms: &mut Vec<Monomial>, coef: f64, exps: Vec<(usize, f64)>) {
    if coef > 0.0 {
        terms.push(Monomial::new(coef, exps));
    }
}

fn build(n: &NormalizedCoefficients, rs: bool) -> Result<(GpProgram, Layout)> {
    let k = n.users();
    let lay = Layout::new(k, rs);
    for u in 0..k {
        if !(n.a_p[u] > 0.0) {
            return Err(Error::Modeling(format!(
                "UE {u} has no private signal gain"
            )));
        }
        if rs && !(n.a_c[u] > 0.0) {
            return Err(Error::Modeling(format!("UE {u} has no common signal gain")));
        }
    }
    let mut gp = GpProgram::new(lay.n);
    for u in 0..k {
        gp.objective[lay.o(u)] = 1.0;
    }
    if let Some(oc) = lay.o_c {
        gp.objective[oc] = 1.0;
    }
    for u in 0..k {
        let (ou, pu) = (lay.o(u), lay.p(u));
        let a = n.a_p[u];
        let mut t = Vec::new();
        for i in 0..k {
            push_term(
                &mut t,
                n.b_p[(u, i)] / a,
                vec![(ou, 1.0), (lay.p(i), 1.0), (pu, -1.0)],
            );
        }
        if let Some(pc) = lay.p_c {
            push_term(&mut t, n.i_c[u] / a, vec![(ou, 1.0), (pc, 1.0), (pu, -1.0)]);
        }
        push_term(&mut t, 1.0 / a, vec![(ou, 1.0), (pu, -1.0)]);
        gp.constraints.push(Posynomial::new(t));
    }
    if let (Some(pc), Some(oc)) = (lay.p_c, lay.o_c) {
        for u in 0..k {
            let a = n.a_c[u];
            let mut t = Vec::new();
            for i in 0..k {
                push_term(
                    &mut t,
                    n.b_c[(u, i)] / a,
                    vec![(oc, 1.0), (lay.p(i), 1.0), (pc, -1.0)],
                );
            }
            push_term(&mut t, n.i_c[u] / a, vec![(oc, 1.0)]);
            push_term(&mut t, 1.0 / a, vec![(oc, 1.0), (pc, -1.0)]);
            gp.constraints.push(Posynomial::new(t));
        }
    }
    let mut budget = Vec::new();
    if let Some(pc) = lay.p_c {
        budget.push(Monomial::new(1.0, vec![(pc, 1.0)]));
    }
    for u in 0..k {
        budget.push(Monomial::new(1.0, vec![(lay.p(u), 1.0)]));
    }
    gp.constraints.push(Posynomial::new(budget));
    Ok((gp, lay))
}

struct Layout {
    k: usize,
    n: usize,
    p_c: Option<usize>,
    o_c: Option<usize>,
}

impl Layout {
    fn new(k: usize, rs: bool) -> Self {
        if rs {
            Layout {
                k,
                n: 2 * k + 2,
                p_c: Some(2 * k),
                o_c: Some(2 * k + 1),
            }
        } else {
            Layout {
                k,
                n: 2 * k,
                p_c: None,
                o_c: None,
            }
        }
    }
    fn p(&self, u: usize) -> usize {
        u
    }
    fn o(&self, u: usize) -> usize {
        self.k + u
    }
}

fn solve_gp(coeffs: &SECoefficients, budget_mw: f64, rs: bool) -> Result<AllocationOutcome> {
    let n = coeffs.normalized(budget_mw);
    let k = n.users();
    let (gp, lay) = build(&n, rs)?;
    let prog = gp_log_transform(&gp)?;

    let share = 1.0 / (k + if rs { 2 } else { 1 }) as f64;
    let p0 = vec![share; k];
    let pc0 = if rs { share } else { 0.0 };
    let mut x = vec![0.0; lay.n];
    for (u, g) in n.gamma_p(pc0, &p0).into_iter().enumerate() {
        x[lay.p(u)] = share.ln();
        x[lay.o(u)] = (0.5 * g).ln();
    }
    if let (Some(pc), Some(oc)) = (lay.p_c, lay.o_c) {
        let gc = n
            .gamma_c(pc0, &p0)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        x[pc] = share.ln();
        x[oc] = (0.5 * gc).ln();
    }
    if !prog.strictly_feasible(&x) {
        return Err(Error::Numerical("GP start is not strictly feasible".into()));
    }
    let opts = SolverOptions {
        tolerance: 1e-9,
        ..SolverOptions::default()
    };
    let (y, report) = solve_from(&prog, &x, &opts);
    if report.status != SolveStatus::Optimal {
        return Err(Error::Solver {
            status: report.status,
            iterations: report.iterations,
            context: "max-SINR geometric program".into(),
        });
    }
    let mut p: Vec<f64> = (0..k).map(|u| y[lay.p(u)].exp()).collect();
    let mut pc = lay.p_c.map_or(0.0, |j| y[j].exp());
    // Every SINR grows when all powers scale up, so spend the full budget.
    let total = pc + p.iter().sum::<f64>();
    p.iter_mut().for_each(|v| *v /= total);
    pc /= total;
    let (scheme, rule) = if rs {
        (Scheme::RsMaxsinrGp, ShareRule::Equal)
    } else {
        (Scheme::NorsGp, ShareRule::None)
    };
    finish(
        scheme,
        coeffs,
        budget_mw,
        pc,
        &p,
        rule,
        report.iterations,
        Vec::new(),
    )
}
