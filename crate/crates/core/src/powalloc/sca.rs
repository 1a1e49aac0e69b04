//! Successive convex approximation in amplitude variables `ν = √p`.
//!
//! Each SINR `a ν_k² / χ_k` is replaced by its first-order lower bound
//! around the current point, which makes every subproblem a smooth convex
//! program. The surrogate optimum never decreases between iterations.

use super::{finish, water_fill, AllocOptions, AllocationOutcome, Scheme};
use crate::convex::{solve, Constraint, Program, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::par::map_range;
use crate::se_eval::{NormalizedCoefficients, SECoefficients, ShareRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaObjective {
    /// Max-min SE with water-filled common shares.
    MaxMin,
    /// Sum of SE.
    SumSe,
    /// Sum of log-SINR.
    SinrProduct,
}

/// One SCA run from a fixed start, in budget fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaRun {
    pub p_c: f64,
    pub p: Vec<f64>,
    /// Surrogate optimum per accepted iteration.
    pub trajectory: Vec<f64>,
    pub iterations: usize,
}

struct Layout {
    k: usize,
    obj: ScaObjective,
    rs: bool,
    n: usize,
    nu: usize,
    nu_c: usize,
    c: usize,
    a_p: usize,
    a_c: usize,
    n_ac: usize,
    r_p: usize,
    r_c: usize,
    x_p: usize,
    x_c: usize,
    t: usize,
}

impl Layout {
    fn new(k: usize, obj: ScaObjective, rs: bool) -> Self {
        let mut next = 0;
        let mut take = |len: usize| {
            let at = next;
            next += len;
            at
        };
        let maxmin = obj == ScaObjective::MaxMin;
        let rk = if rs { k } else { 0 };
        let n_ac = match (rs, maxmin) {
            (false, _) => 0,
            (true, true) => k,
            (true, false) => 1,
        };
        let nu = take(k);
        let nu_c = take(rs as usize);
        let c = take(if rs && maxmin { k } else { 0 });
        let a_p = take(k);
        let a_c = take(n_ac);
        let r_p = take(k);
        let r_c = take(rk);
        let x_p = take(k);
        let x_c = take(rk);
        let t = take(maxmin as usize);
        Layout {
            k,
            obj,
            rs,
            n: next,
            nu,
            nu_c,
            c,
            a_p,
            a_c,
            n_ac,
            r_p,
            r_c,
            x_p,
            x_c,
            t,
        }
    }

    fn alpha_c(&self, k: usize) -> usize {
        if self.n_ac == 1 {
            self.a_c
        } else {
            self.a_c + k
        }
    }

    fn offset(&self) -> f64 {
        if self.obj == ScaObjective::SinrProduct {
            0.0
        } else {
            1.0
        }
    }

    /// Amplitude indices, common last when present.
    fn amplitudes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (self.nu..self.nu + self.k).collect();
        if self.rs {
            v.push(self.nu_c);
        }
        v
    }
}

fn private_interf(n: &NormalizedCoefficients, k: usize, nu: &[f64], nu_c: f64) -> f64 {
    let s: f64 = nu
        .iter()
        .enumerate()
        .map(|(i, v)| n.b_p[(k, i)] * v * v)
        .sum();
    s + n.i_c[k] * nu_c * nu_c + 1.0
}

fn common_interf(n: &NormalizedCoefficients, k: usize, nu: &[f64], nu_c: f64) -> f64 {
    let s: f64 = nu
        .iter()
        .enumerate()
        .map(|(i, v)| n.b_c[(k, i)] * v * v)
        .sum();
    s + n.i_c[k] * nu_c * nu_c + 1.0
}

/// Lower bound of `a ν² / χ` tangent at `(ν̄, χ̄)`, as coefficients on `(ν, χ)`.
fn tangent(a: f64, nu_bar: f64, chi_bar: f64) -> (f64, f64) {
    (
        2.0 * a * nu_bar / chi_bar,
        -a * nu_bar * nu_bar / (chi_bar * chi_bar),
    )
}

struct Linearization {
    nu: Vec<f64>,
    nu_c: f64,
    chi_p: Vec<f64>,
    chi_c: Vec<f64>,
}

impl Linearization {
    fn at(n: &NormalizedCoefficients, nu: &[f64], nu_c: f64) -> Self {
        let k = nu.len();
        Linearization {
            nu: nu.to_vec(),
            nu_c,
            chi_p: (0..k).map(|u| private_interf(n, u, nu, nu_c)).collect(),
            chi_c: (0..k).map(|u| common_interf(n, u, nu, nu_c)).collect(),
        }
    }

    fn psi_p(&self, n: &NormalizedCoefficients, u: usize, nu: f64, chi: f64) -> f64 {
        let (g, h) = tangent(n.a_p[u], self.nu[u], self.chi_p[u]);
        g * nu + h * chi
    }

    fn psi_c(&self, n: &NormalizedCoefficients, u: usize, nu_c: f64, chi: f64) -> f64 {
        let (g, h) = tangent(n.a_c[u], self.nu_c, self.chi_c[u]);
        g * nu_c + h * chi
    }
}

fn subproblem(n: &NormalizedCoefficients, lay: &Layout, lin: &Linearization) -> Program {
    let k = lay.k;
    let kappa = 1.0 / n.prelog;
    let off = lay.offset();
    let mut p = Program::new(lay.n);
    match lay.obj {
        ScaObjective::MaxMin => p.objective[lay.t] = 1.0,
        _ => {
            for u in 0..k {
                p.objective[lay.a_p + u] = 1.0;
            }
            if lay.rs {
                p.objective[lay.a_c] = 1.0;
            }
        }
    }
    let amps = lay.amplitudes();
    for u in 0..k {
        let (g, h) = tangent(n.a_p[u], lin.nu[u], lin.chi_p[u]);
        p.push(Constraint::affine(
            vec![lay.r_p + u, lay.nu + u, lay.x_p + u],
            vec![1.0, -g, -h],
            -off,
        ));
        p.push(Constraint::exp2(
            vec![lay.a_p + u, lay.r_p + u],
            1.0,
            kappa,
            0,
            vec![0.0, -1.0],
            0.0,
        ));
        let mut quad: Vec<f64> = (0..k).map(|i| n.b_p[(u, i)]).collect();
        let mut bound = 1.0 + quad.iter().sum::<f64>();
        if lay.rs {
            quad.push(n.i_c[u]);
            bound += n.i_c[u];
        }
        let mut support = amps.clone();
        support.push(lay.x_p + u);
        quad.push(0.0);
        let mut coef = vec![0.0; support.len()];
        *coef.last_mut().unwrap() = -1.0;
        p.push(Constraint::quadratic(support, quad, coef, 1.0));
        // Caps χ where the tangent has no slope in it.
        p.upper_bound(lay.x_p + u, 2.0 * bound);
    }
    if lay.rs {
        for u in 0..k {
            let (g, h) = tangent(n.a_c[u], lin.nu_c, lin.chi_c[u]);
            p.push(Constraint::affine(
                vec![lay.r_c + u, lay.nu_c, lay.x_c + u],
                vec![1.0, -g, -h],
                -off,
            ));
            p.push(Constraint::exp2(
                vec![lay.alpha_c(u), lay.r_c + u],
                1.0,
                kappa,
                0,
                vec![0.0, -1.0],
                0.0,
            ));
            let mut quad: Vec<f64> = (0..k).map(|i| n.b_c[(u, i)]).collect();
            quad.push(n.i_c[u]);
            let bound = 1.0 + quad.iter().sum::<f64>();
            let mut support = amps.clone();
            support.push(lay.x_c + u);
            quad.push(0.0);
            let mut coef = vec![0.0; support.len()];
            *coef.last_mut().unwrap() = -1.0;
            p.push(Constraint::quadratic(support, quad, coef, 1.0));
            p.upper_bound(lay.x_c + u, 2.0 * bound);
        }
    }
    match (lay.obj, lay.rs) {
        (ScaObjective::MaxMin, true) => {
            for u in 0..k {
                p.push(Constraint::affine(
                    vec![lay.t, lay.a_p + u, lay.c + u],
                    vec![1.0, -1.0, -1.0],
                    0.0,
                ));
                let mut support: Vec<usize> = (lay.c..lay.c + k).collect();
                support.push(lay.alpha_c(u));
                let mut coef = vec![1.0; k];
                coef.push(-1.0);
                p.push(Constraint::affine(support, coef, 0.0));
                p.lower_bound(lay.c + u, 0.0);
            }
        }
        (ScaObjective::MaxMin, false) => {
            for u in 0..k {
                p.push(Constraint::affine(
                    vec![lay.t, lay.a_p + u],
                    vec![1.0, -1.0],
                    0.0,
                ));
            }
        }
        (ScaObjective::SumSe, true) => p.lower_bound(lay.a_c, 0.0),
        _ => {}
    }
    let quad = vec![1.0; amps.len()];
    let coef = vec![0.0; amps.len()];
    p.push(Constraint::quadratic(amps, quad, coef, -1.0));
    p
}

/// Interior point close to `(ν, χ = I(ν))` for the given linearization.
fn interior_start(n: &NormalizedCoefficients, lay: &Layout, lin: &Linearization) -> Vec<f64> {
    let k = lay.k;
    let off = lay.offset();
    let kappa = 1.0 / n.prelog;
    let energy = lin.nu.iter().map(|v| v * v).sum::<f64>() + lin.nu_c * lin.nu_c;
    let s = if energy > 0.0 {
        (energy.min(1.0 - 1e-3) / energy).sqrt()
    } else {
        1.0
    };
    let nu: Vec<f64> = lin.nu.iter().map(|v| v * s).collect();
    let nu_c = lin.nu_c * s;
    let shrink = |v: f64| v - 1e-3 * (1.0 + v.abs());
    let mut x = vec![0.0; lay.n];
    for u in 0..k {
        x[lay.nu + u] = nu[u];
    }
    if lay.rs {
        x[lay.nu_c] = nu_c;
    }
    let mut alpha_p = vec![0.0; k];
    for u in 0..k {
        let chi = private_interf(n, u, &nu, nu_c) * (1.0 + 1e-3) + 1e-3;
        let r = shrink(off + lin.psi_p(n, u, nu[u], chi));
        x[lay.x_p + u] = chi;
        x[lay.r_p + u] = r;
        alpha_p[u] = shrink(r.max(1e-300).log2() / kappa);
        x[lay.a_p + u] = alpha_p[u];
    }
    let mut alpha_c = vec![0.0; k];
    if lay.rs {
        for u in 0..k {
            let chi = common_interf(n, u, &nu, nu_c) * (1.0 + 1e-3) + 1e-3;
            // Relative margins keep a weak common rate strictly positive.
            let psi = lin.psi_c(n, u, nu_c, chi);
            let r = if psi > 0.0 {
                off + psi * (1.0 - 1e-3)
            } else {
                shrink(off + psi)
            };
            x[lay.x_c + u] = chi;
            x[lay.r_c + u] = r;
            let v = r.max(1e-300).log2() / kappa;
            alpha_c[u] = if v > 0.0 { v * (1.0 - 1e-3) } else { shrink(v) };
        }
        if lay.n_ac == 1 {
            x[lay.a_c] = alpha_c.iter().copied().fold(f64::INFINITY, f64::min);
        } else {
            for u in 0..k {
                x[lay.a_c + u] = alpha_c[u];
            }
        }
    }
    if lay.obj == ScaObjective::MaxMin {
        let mut total = alpha_p.clone();
        if lay.rs {
            let budget = alpha_c.iter().copied().fold(f64::INFINITY, f64::min) * (1.0 - 1e-6);
            let wf = water_fill(&alpha_p, budget);
            for u in 0..k {
                // Keeps every share strictly positive.
                let c = (1.0 - 1e-3) * wf[u] + 1e-3 * budget / k as f64;
                x[lay.c + u] = c;
                total[u] += c;
            }
        }
        x[lay.t] = shrink(total.iter().copied().fold(f64::INFINITY, f64::min));
    }
    x
}

/// Runs SCA from budget fractions `(p_c, p)`. `rs = false` drops the common
/// stream entirely.
pub fn sca_run(
    n: &NormalizedCoefficients,
    obj: ScaObjective,
    rs: bool,
    p_c: f64,
    p: &[f64],
    opts: &AllocOptions,
) -> Result<ScaRun> {
    let k = n.users();
    if p.len() != k {
        return Err(Error::Config("start has the wrong number of UEs".into()));
    }
    if n.a_p.iter().any(|&a| !(a > 0.0)) || (rs && n.a_c.iter().any(|&a| !(a > 0.0))) {
        return Err(Error::Modeling("a UE has no signal gain".into()));
    }
    let lay = Layout::new(k, obj, rs);
    let sopts = SolverOptions {
        tolerance: 1e-8,
        ..SolverOptions::default()
    };
    let mut nu: Vec<f64> = p.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut nu_c = if rs { p_c.max(0.0).sqrt() } else { 0.0 };
    let mut trajectory: Vec<f64> = Vec::new();
    let mut iterations = 0;
    for it in 0..opts.sca_max_iter.max(1) {
        let lin = Linearization::at(n, &nu, nu_c);
        let prog = subproblem(n, &lay, &lin);
        let x0 = interior_start(n, &lay, &lin);
        let (x, rep) = solve(&prog, Some(&x0), &sopts);
        iterations = it + 1;
        if rep.status == SolveStatus::Infeasible || !(prog.max_violation(&x) <= 0.0) {
            if it == 0 {
                return Err(Error::Solver {
                    status: rep.status,
                    iterations: rep.iterations,
                    context: "first SCA subproblem".into(),
                });
            }
            break;
        }
        let value = rep.objective;
        let prev = trajectory.last().copied();
        if prev.is_some_and(|t| value < t) {
            break;
        }
        nu = (0..k).map(|u| x[lay.nu + u]).collect();
        if rs {
            nu_c = x[lay.nu_c];
        }
        trajectory.push(value);
        if prev.is_some_and(|t| (value - t).abs() < opts.sca_tolerance) {
            break;
        }
    }
    let mut p: Vec<f64> = nu.iter().map(|v| v * v).collect();
    let mut p_c = nu_c * nu_c;
    let total = p_c + p.iter().sum::<f64>();
    if total > 1.0 {
        p.iter_mut().for_each(|v| *v /= total);
        p_c /= total;
    }
    Ok(ScaRun {
        p_c,
        p,
        trajectory,
        iterations,
    })
}

fn min_se(n: &NormalizedCoefficients, run: &ScaRun) -> f64 {
    let (se_c, se_p) = n.rates(run.p_c, &run.p);
    let c = water_fill(&se_p, se_c);
    se_p.iter()
        .zip(&c)
        .map(|(a, b)| a + b)
        .fold(f64::INFINITY, f64::min)
}

/// RS max-min SE. Every start fraction runs independently and the best
/// evaluated minimum SE wins, earlier starts on ties.
pub fn maxmin_sca(
    coeffs: &SECoefficients,
    budget_mw: f64,
    opts: &AllocOptions,
) -> Result<AllocationOutcome> {
    let n = coeffs.normalized(budget_mw);
    let k = n.users();
    let fracs = if opts.common_fractions.is_empty() {
        vec![0.0]
    } else {
        opts.common_fractions.clone()
    };
    if fracs.iter().any(|f| !(0.0..1.0).contains(f)) {
        return Err(Error::Config(
            "common start fractions must lie in [0, 1)".into(),
        ));
    }
    let runs = map_range(fracs.len(), opts.exec, |j| {
        let f = fracs[j];
        let p = vec![(1.0 - f) / k as f64; k];
        sca_run(&n, ScaObjective::MaxMin, f > 0.0, f, &p, opts)
    });
    let mut best: Option<(f64, ScaRun)> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(run) => {
                let v = min_se(&n, &run);
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, run));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some((_, run)) = best else {
        return Err(first_err.expect("at least one start"));
    };
    finish(
        Scheme::RsMaxminSca,
        coeffs,
        budget_mw,
        run.p_c,
        &run.p,
        ShareRule::WaterFill,
        run.iterations,
        run.trajectory,
    )
}

/// NoRS max-min SE from uniform powers.
pub fn nors_sca(
    coeffs: &SECoefficients,
    budget_mw: f64,
    opts: &AllocOptions,
) -> Result<AllocationOutcome> {
    let n = coeffs.normalized(budget_mw);
    let k = n.users();
    let run = sca_run(
        &n,
        ScaObjective::MaxMin,
        false,
        0.0,
        &vec![1.0 / k as f64; k],
        opts,
    )?;
    finish(
        Scheme::NorsSca,
        coeffs,
        budget_mw,
        0.0,
        &run.p,
        ShareRule::None,
        run.iterations,
        run.trajectory,
    )
}

fn rs_from_default(
    coeffs: &SECoefficients,
    budget_mw: f64,
    opts: &AllocOptions,
    obj: ScaObjective,
    scheme: Scheme,
) -> Result<AllocationOutcome> {
    let n = coeffs.normalized(budget_mw);
    let k = n.users();
    let run = sca_run(&n, obj, true, 0.1, &vec![0.9 / k as f64; k], opts)?;
    finish(
        scheme,
        coeffs,
        budget_mw,
        run.p_c,
        &run.p,
        ShareRule::Equal,
        run.iterations,
        run.trajectory,
    )
}

/// RS sum-SE by SCA from `p_c = 0.1`.
pub fn maxsumse_sca(
    coeffs: &SECoefficients,
    budget_mw: f64,
    opts: &AllocOptions,
) -> Result<AllocationOutcome> {
    rs_from_default(
        coeffs,
        budget_mw,
        opts,
        ScaObjective::SumSe,
        Scheme::RsMaxsumseSca,
    )
}

/// RS product-SINR by SCA from `p_c = 0.1`.
pub fn maxsinr_sca(
    coeffs: &SECoefficients,
    budget_mw: f64,
    opts: &AllocOptions,
) -> Result<AllocationOutcome> {
    rs_from_default(
        coeffs,
        budget_mw,
        opts,
        ScaObjective::SinrProduct,
        Scheme::RsMaxsinrSca,
    )
}
