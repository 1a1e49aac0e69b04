use nalgebra::{DMatrix, DVector};

use super::{Constraint, Program, SolveStatus, SolverOptions, SolverReport};

struct Local {
    value: f64,
    index: Vec<usize>,
    grad: Vec<f64>,
    hess: Option<DMatrix<f64>>,
}

fn eval(c: &Constraint, x: &[f64]) -> Local {
    let (value, mut grad, hess) = c.eval_local(x);
    let mut index = c.support.clone();
    if let Some(s) = c.slack {
        index.push(s);
        grad.push(-1.0);
    }
    Local {
        value,
        index,
        grad,
        hess,
    }
}

fn barrier_value(p: &Program, tau: f64, x: &[f64]) -> Option<f64> {
    let mut v = -tau * p.objective_value(x);
    for c in &p.constraints {
        let f = c.value(x);
        if !(f < 0.0) {
            return None;
        }
        v -= (-f).ln();
    }
    Some(v)
}

/// Gradient of the log barrier `-Σ log(-f_i)`.
fn barrier_gradient(p: &Program, x: &[f64]) -> DVector<f64> {
    let mut g = DVector::zeros(p.n_vars);
    for c in &p.constraints {
        let l = eval(c, x);
        for (&j, gj) in l.index.iter().zip(&l.grad) {
            g[j] -= gj / l.value;
        }
    }
    g
}

fn newton_system(p: &Program, tau: f64, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = p.n_vars;
    let mut g = DVector::from_iterator(n, p.objective.iter().map(|c| -tau * c));
    let mut h = DMatrix::zeros(n, n);
    for c in &p.constraints {
        let l = eval(c, x);
        let inv = -1.0 / l.value;
        let inv2 = inv * inv;
        for (a, &ja) in l.index.iter().enumerate() {
            g[ja] += l.grad[a] * inv;
            let ga = l.grad[a] * inv2;
            if ga == 0.0 {
                continue;
            }
            for (b, &jb) in l.index.iter().enumerate() {
                h[(ja, jb)] += ga * l.grad[b];
            }
        }
        if let Some(hl) = &l.hess {
            for (a, &ja) in c.support.iter().enumerate() {
                for (b, &jb) in c.support.iter().enumerate() {
                    h[(ja, jb)] += hl[(a, b)] * inv;
                }
            }
        }
    }
    (g, h)
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let diag = h.diagonal().iter().copied().fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += ridge;
        }
        if let Some(ch) = hr.cholesky() {
            let d = ch.solve(&(-g));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        ridge = if ridge == 0.0 {
            1e-14 * diag
        } else {
            ridge * 100.0
        };
    }
    None
}

struct Centering {
    steps: usize,
    converged: bool,
    stopped: bool,
}

fn center<S: Fn(&[f64]) -> bool>(
    p: &Program,
    tau: f64,
    x: &mut Vec<f64>,
    budget: usize,
    stop: &S,
) -> Centering {
    let mut steps = 0;
    while steps < budget {
        let (g, h) = newton_system(p, tau, x);
        let Some(d) = newton_direction(&g, &h) else {
            return Centering {
                steps,
                converged: false,
                stopped: false,
            };
        };
        let slope = g.dot(&d);
        let xmax = x.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        // Below the decrement floor, or the step no longer moves x.
        if -slope / 2.0 <= 1e-12 || (-slope / 2.0 <= 1e-6 && d.amax() <= 1e-14 * xmax) {
            return Centering {
                steps,
                converged: true,
                stopped: false,
            };
        }
        let f0 = barrier_value(p, tau, x).unwrap_or(f64::INFINITY);
        let slack = 1e-13 * f0.abs().max(1.0);
        let mut s = 1.0;
        let mut trial = x.clone();
        let mut accepted = false;
        for _ in 0..80 {
            for (t, (xi, di)) in trial.iter_mut().zip(x.iter().zip(d.iter())) {
                *t = xi + s * di;
            }
            if let Some(f1) = barrier_value(p, tau, &trial) {
                if f1 <= f0 + 0.25 * s * slope + slack {
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        steps += 1;
        if !accepted {
            // No progress possible at machine precision.
            return Centering {
                steps,
                converged: -slope / 2.0 <= 1e-6,
                stopped: false,
            };
        }
        *x = trial;
        if stop(x) {
            return Centering {
                steps,
                converged: true,
                stopped: true,
            };
        }
    }
    Centering {
        steps,
        converged: false,
        stopped: false,
    }
}

fn kkt_residual(p: &Program, tau: f64, x: &[f64]) -> f64 {
    let (g, _) = newton_system(p, tau, x);
    let cmax = p.objective.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
    let stationarity = g.amax() / (tau * cmax);
    let gap = p.constraints.len() as f64 / tau;
    let primal = p.max_violation(x).max(0.0);
    stationarity.max(gap).max(primal)
}

fn barrier_loop<S: Fn(&[f64]) -> bool>(
    p: &Program,
    x0: &[f64],
    opts: &SolverOptions,
    stop: S,
) -> (Vec<f64>, SolverReport) {
    let m = p.constraints.len().max(1) as f64;
    let tau_max = m / opts.tolerance;
    let cnorm2: f64 = p.objective.iter().map(|c| c * c).sum();
    let mut tau = if cnorm2 > 0.0 {
        let gphi = barrier_gradient(p, x0);
        let proj: f64 = p
            .objective
            .iter()
            .zip(gphi.iter())
            .map(|(c, g)| c * g)
            .sum();
        (proj / cnorm2).clamp(1.0, tau_max)
    } else {
        tau_max
    };
    let mut x = x0.to_vec();
    let mut newton = 0;
    let mut iterations = 0;
    let status = loop {
        let c = center(
            p,
            tau,
            &mut x,
            opts.max_newton.saturating_sub(newton),
            &stop,
        );
        newton += c.steps;
        iterations += 1;
        if c.stopped {
            break SolveStatus::Optimal;
        }
        if m / tau <= opts.tolerance * (1.0 + 1e-12) {
            break if c.converged {
                SolveStatus::Optimal
            } else {
                SolveStatus::MaxIter
            };
        }
        if iterations >= opts.max_iter || newton >= opts.max_newton {
            break SolveStatus::MaxIter;
        }
        tau = (tau * opts.mu).min(tau_max);
    };
    let report = SolverReport {
        status,
        iterations,
        newton_steps: newton,
        kkt_residual: kkt_residual(p, tau, &x),
        objective: p.objective_value(&x),
    };
    (x, report)
}

/// Barrier method from a strictly feasible `x0`.
pub fn solve_from(p: &Program, x0: &[f64], opts: &SolverOptions) -> (Vec<f64>, SolverReport) {
    debug_assert!(p.strictly_feasible(x0));
    barrier_loop(p, x0, opts, |_| false)
}

/// Finds a point with every constraint below `-margin`, starting anywhere.
pub fn phase_one(p: &Program, x0: &[f64], opts: &SolverOptions) -> Option<Vec<f64>> {
    let n = p.n_vars;
    let margin = opts.phase_one_margin;
    if p.max_violation(x0) < -margin {
        return Some(x0.to_vec());
    }
    let mut aux = Program::new(n + 1);
    aux.objective[n] = -1.0;
    for c in &p.constraints {
        aux.push(c.with_shift(n));
    }
    aux.lower_bound(n, -1.0);
    let mut start = x0.to_vec();
    start.push(p.max_violation(x0).max(0.0) + 1.0);
    let (sol, _) = barrier_loop(&aux, &start, opts, |z| z[n] < -margin);
    let x = sol[..n].to_vec();
    (p.max_violation(&x) < -margin).then_some(x)
}

/// Phase I if needed, then the barrier method.
pub fn solve(p: &Program, x0: Option<&[f64]>, opts: &SolverOptions) -> (Vec<f64>, SolverReport) {
    let zero = vec![0.0; p.n_vars];
    let x0 = x0.unwrap_or(&zero);
    let start = if p.strictly_feasible(x0) {
        Some(x0.to_vec())
    } else {
        phase_one(p, x0, opts)
    };
    match start {
        Some(x) => solve_from(p, &x, opts),
        None => (
            x0.to_vec(),
            SolverReport {
                status: SolveStatus::Infeasible,
                iterations: 0,
                newton_steps: 0,
                kkt_residual: p.max_violation(x0).max(0.0),
                objective: p.objective_value(x0),
            },
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_of_bounds() {
        let mut p = Program::new(1);
        p.objective[0] = 1.0;
        p.upper_bound(0, 3.0);
        p.upper_bound(0, 5.0);
        let (x, r) = solve(&p, None, &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((x[0] - 3.0).abs() < 1e-5);
        assert!(r.kkt_residual <= 1e-6);
    }

    #[test]
    fn ball_projection() {
        // maximize cᵀx over ‖x - x0‖ ≤ 1 has x* = x0 + c/‖c‖.
        let c = [0.3, -1.2, 0.5];
        let x0 = [1.0, 2.0, -0.5];
        let mut p = Program::new(3);
        p.objective = c.to_vec();
        let quad = vec![1.0; 3];
        let coef: Vec<f64> = x0.iter().map(|v| -2.0 * v).collect();
        let constant = x0.iter().map(|v| v * v).sum::<f64>() - 1.0;
        p.push(Constraint::quadratic(vec![0, 1, 2], quad, coef, constant));
        let (x, r) = solve(&p, Some(&x0), &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..3 {
            assert!((x[j] - (x0[j] + c[j] / cn)).abs() < 1e-6, "{x:?}");
        }
    }

    #[test]
    fn phase_one_reports_infeasible() {
        let mut p = Program::new(1);
        p.objective[0] = 1.0;
        p.upper_bound(0, 1.0);
        p.lower_bound(0, 2.0);
        let (_, r) = solve(&p, None, &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn phase_one_finds_interior() {
        let mut p = Program::new(2);
        p.objective = vec![1.0, 1.0];
        p.lower_bound(0, 5.0);
        p.lower_bound(1, -3.0);
        p.push(Constraint::affine(vec![0, 1], vec![1.0, 1.0], -4.0));
        let (x, r) = solve(&p, None, &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((x[0] + x[1] - 4.0).abs() < 1e-5);
    }

    #[test]
    fn resolve_is_short() {
        let mut p = Program::new(2);
        p.objective = vec![1.0, 2.0];
        p.push(Constraint::quadratic(
            vec![0, 1],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            -1.0,
        ));
        let opts = SolverOptions::default();
        let (x, _) = solve(&p, None, &opts);
        let (_, r) = solve_from(&p, &x, &opts);
        assert!(r.iterations <= 2, "{r:?}");
    }

    #[test]
    fn exponential_constraint() {
        // maximize a subject to 2^a ≤ 8.
        let mut p = Program::new(1);
        p.objective[0] = 1.0;
        p.push(Constraint::exp2(vec![0], 1.0, 1.0, 0, vec![0.0], -8.0));
        let (x, r) = solve(&p, None, &SolverOptions::default());
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((x[0] - 3.0).abs() < 1e-5);
    }

    #[test]
    fn deterministic_iterates() {
        let mut p = Program::new(2);
        p.objective = vec![1.0, 0.5];
        p.push(Constraint::quadratic(
            vec![0, 1],
            vec![2.0, 1.0],
            vec![0.0, 0.0],
            -3.0,
        ));
        let a = solve(&p, None, &SolverOptions::default());
        let b = solve(&p, None, &SolverOptions::default());
        assert_eq!(a, b);
    }
}
