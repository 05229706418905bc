//! Preconditioned limited-memory BFGS with a Wolfe line search.
//!
//! The line search accepts either the strong Wolfe conditions or the approximate
//! Wolfe conditions of Hager and Zhang; the latter rely on directional derivatives
//! only and keep working once energy differences fall below rounding error.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsSettings {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

/// One row of the iteration trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub energy: f64,
    pub grad_inf: f64,
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
/// Relative energy slack for the approximate Wolfe test.
const EPS_F: f64 = 1e-11;
const MAX_LS: usize = 40;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Point {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

/// Minimize `f` from `x0`. `eval(x, g)` returns `f(x)` and writes the gradient;
/// `precond(g)` applies the inverse of an approximate Hessian.
pub fn minimize<F, P>(x0: Vec<f64>, mut eval: F, precond: P, settings: &LbfgsSettings) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = eval(&x, &mut g);
    let mut evaluations = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut trace = vec![TraceEntry {
        iteration: 0,
        energy: f,
        grad_inf: inf_norm(&g),
        step: 0.0,
    }];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let mut iterations = 0;
    let mut fresh_restart = false;

    while iterations < settings.max_iter {
        if inf_norm(&g) <= settings.grad_tol {
            break;
        }
        let mut d = two_loop(&g, &history, &precond);
        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            history.clear();
            d = precond(&g).iter().map(|v| -v).collect();
            dphi0 = dot(&g, &d);
            if !(dphi0 < 0.0) {
                d = g.iter().map(|v| -v).collect();
                dphi0 = dot(&g, &d);
            }
        }
        iterations += 1;
        let found = line_search(&x, f, &d, dphi0, &mut eval, &mut evaluations, iterations)?;
        let Some(p) = found else {
            if history.is_empty() || fresh_restart {
                log::warn!("line search failed at iteration {iterations}; stopping");
                break;
            }
            history.clear();
            fresh_restart = true;
            continue;
        };
        fresh_restart = false;
        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == settings.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = p.x;
        f = p.f;
        g = p.g;
        trace.push(TraceEntry {
            iteration: iterations,
            energy: f,
            grad_inf: inf_norm(&g),
            step: p.alpha,
        });
    }
    let grad_inf = inf_norm(&g);
    Ok(LbfgsOutcome {
        x,
        f,
        grad_inf,
        iterations,
        evaluations,
        converged: grad_inf <= settings.grad_tol,
        trace,
    })
}

fn two_loop<P: Fn(&[f64]) -> Vec<f64>>(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, precond: &P) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let mut r = precond(&q);
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &r);
        r.iter_mut().zip(s).for_each(|(ri, si)| *ri += (a - b) * si);
    }
    r.iter_mut().for_each(|v| *v = -*v);
    r
}

fn line_search<F>(
    x: &[f64],
    f0: f64,
    d: &[f64],
    dphi0: f64,
    eval: &mut F,
    evaluations: &mut usize,
    iteration: usize,
) -> Result<Option<Point>>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let slack = EPS_F * f0.abs().max(1.0);
    let mut probe = |alpha: f64, evaluations: &mut usize| -> Result<Point> {
        let xa: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        let mut ga = vec![0.0; x.len()];
        let fa = eval(&xa, &mut ga);
        *evaluations += 1;
        if !fa.is_finite() || ga.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration });
        }
        let dphi = dot(&ga, d);
        Ok(Point {
            alpha,
            x: xa,
            f: fa,
            g: ga,
            dphi,
        })
    };
    let energy_ok = |p: &Point| {
        p.f <= f0 + C1 * p.alpha * dphi0 || (p.f <= f0 + slack && p.dphi <= (2.0 * C1 - 1.0) * dphi0)
    };
    let curvature_ok = |p: &Point| p.dphi.abs() <= C2 * dphi0.abs();

    let mut lo: Option<Point> = None;
    let mut alpha = 1.0;
    let mut hi_alpha;
    let mut hi_dphi;
    let mut count = 0;
    loop {
        count += 1;
        let p = probe(alpha, evaluations)?;
        if energy_ok(&p) && curvature_ok(&p) {
            return Ok(Some(p));
        }
        if p.dphi >= 0.0 || !energy_ok(&p) {
            hi_alpha = p.alpha;
            hi_dphi = p.dphi;
            break;
        }
        // descent continues: extend the step
        alpha *= 4.0;
        lo = Some(p);
        if count >= MAX_LS / 2 {
            return Ok(lo);
        }
    }
    let (mut lo_alpha, mut lo_dphi) = match &lo {
        Some(p) => (p.alpha, p.dphi),
        None => (0.0, dphi0),
    };
    while count < MAX_LS {
        count += 1;
        let width = hi_alpha - lo_alpha;
        // secant on the directional derivative, safeguarded into the bracket interior
        let mut a = if hi_dphi > lo_dphi && hi_dphi >= 0.0 {
            lo_alpha - lo_dphi * width / (hi_dphi - lo_dphi)
        } else {
            lo_alpha + 0.5 * width
        };
        let margin = 0.1 * width.abs();
        let (mn, mx) = if lo_alpha < hi_alpha { (lo_alpha, hi_alpha) } else { (hi_alpha, lo_alpha) };
        a = a.clamp(mn + margin, mx - margin);
        if width.abs() < 1e-14 * lo_alpha.abs().max(1e-300) || !a.is_finite() {
            break;
        }
        let p = probe(a, evaluations)?;
        if energy_ok(&p) && curvature_ok(&p) {
            return Ok(Some(p));
        }
        if p.dphi >= 0.0 || !energy_ok(&p) {
            hi_alpha = p.alpha;
            hi_dphi = p.dphi;
        } else {
            lo_alpha = p.alpha;
            lo_dphi = p.dphi;
            lo = Some(p);
        }
    }
    // fall back to the best sufficient-decrease point found
    Ok(lo.filter(|p| p.alpha > 0.0 && energy_ok(p)))
}
