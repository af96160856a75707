//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The iteration and line search follow the widely used PyTorch
//! implementation (two-loop recursion, cubic interpolation, zoom phase).
//! Convergence is judged on relative objective decrease, gradient max-norm,
//! or both.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A differentiable scalar function of a flat parameter vector.
pub trait Objective {
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> Objective for F {
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceTest {
    /// `(f_prev - f) / |f_prev| < tol`.
    RelativeDecrease,
    /// `max |grad| < tol`.
    GradientMaxNorm,
    /// Whichever of the two fires first.
    Either,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub lr: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub history: usize,
    pub convergence: ConvergenceTest,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            lr: 0.1,
            tolerance: 1e-6,
            max_iterations: 1000,
            history: 200,
            convergence: ConvergenceTest::Either,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("optimizer tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("optimizer needs at least one iteration".into()));
        }
        if !(self.lr > 0.0) || self.history == 0 {
            return Err(Error::Config("optimizer lr and history must be positive".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config("line search needs 0 < c1 < c2 < 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    ObjectiveTolerance,
    StepTolerance,
    MaxIterations,
    LineSearchFailed,
    NotDescent,
    Cancelled,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(self, StopReason::GradientTolerance | StopReason::ObjectiveTolerance | StopReason::StepTolerance)
    }
}

/// Per-iterate objective and gradient max-norm, starting at the initial point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub objective: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub trace: OptimizerTrace,
    pub evaluations: usize,
    pub stop: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Tracks the lowest objective seen over every evaluation.
struct Evaluator<'o, O: Objective + ?Sized> {
    objective: &'o mut O,
    evaluations: usize,
    best: (f64, Vec<f64>),
}

impl<O: Objective + ?Sized> Evaluator<'_, O> {
    fn at(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (f, g) = self.objective.evaluate(x)?;
        self.evaluations += 1;
        if f < self.best.0 {
            self.best = (f, x.to_vec());
        }
        Ok((f, g))
    }

    fn along(&mut self, x: &[f64], t: f64, d: &[f64]) -> Result<(f64, Vec<f64>)> {
        let p: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        self.at(&p)
    }
}

fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, bounds: Option<(f64, f64)>) -> f64 {
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if pos.is_nan() {
            return (lo + hi) / 2.0;
        }
        pos.clamp(lo, hi)
    } else {
        (lo + hi) / 2.0
    }
}

struct LineSearch {
    f: f64,
    g: Vec<f64>,
    t: f64,
}

#[allow(clippy::too_many_arguments)]
fn strong_wolfe<O: Objective + ?Sized>(
    ev: &mut Evaluator<'_, O>,
    x: &[f64],
    mut t: f64,
    d: &[f64],
    f: f64,
    g: &[f64],
    gtd: f64,
    cfg: &OptimizeConfig,
    tolerance_change: f64,
) -> Result<LineSearch> {
    let d_norm = max_abs(d);
    let (mut f_new, mut g_new) = ev.along(x, t, d)?;
    let mut gtd_new = dot(&g_new, d);
    let (mut t_prev, mut f_prev, mut g_prev, mut gtd_prev) = (0.0, f, g.to_vec(), gtd);
    let mut done = false;
    let mut ls_iter = 0;

    let mut bracket: Vec<f64>;
    let mut bracket_f: Vec<f64>;
    let mut bracket_g: Vec<Vec<f64>>;
    let mut bracket_gtd: Vec<f64>;
    loop {
        if ls_iter >= cfg.max_line_search {
            bracket = vec![0.0, t];
            bracket_f = vec![f, f_new];
            bracket_g = vec![g.to_vec(), g_new.clone()];
            bracket_gtd = vec![gtd, gtd_new];
            break;
        }
        if f_new > f + cfg.c1 * t * gtd || (ls_iter > 1 && f_new >= f_prev) {
            bracket = vec![t_prev, t];
            bracket_f = vec![f_prev, f_new];
            bracket_g = vec![g_prev, g_new.clone()];
            bracket_gtd = vec![gtd_prev, gtd_new];
            break;
        }
        if gtd_new.abs() <= -cfg.c2 * gtd {
            bracket = vec![t];
            bracket_f = vec![f_new];
            bracket_g = vec![g_new.clone()];
            bracket_gtd = vec![gtd_new];
            done = true;
            break;
        }
        if gtd_new >= 0.0 {
            bracket = vec![t_prev, t];
            bracket_f = vec![f_prev, f_new];
            bracket_g = vec![g_prev, g_new.clone()];
            bracket_gtd = vec![gtd_prev, gtd_new];
            break;
        }
        let min_step = t + 0.01 * (t - t_prev);
        let max_step = t * 10.0;
        let tmp = t;
        t = cubic_interpolate(t_prev, f_prev, gtd_prev, t, f_new, gtd_new, Some((min_step, max_step)));
        t_prev = tmp;
        f_prev = f_new;
        g_prev = g_new;
        gtd_prev = gtd_new;
        (f_new, g_new) = ev.along(x, t, d)?;
        gtd_new = dot(&g_new, d);
        ls_iter += 1;
    }

    // zoom
    let mut insuf_progress = false;
    let order = |bf: &[f64]| if bf[0] <= bf[bf.len() - 1] { (0, 1) } else { (1, 0) };
    let (mut low, mut high) = if bracket.len() == 2 { order(&bracket_f) } else { (0, 0) };
    while !done && ls_iter < cfg.max_line_search {
        if (bracket[1] - bracket[0]).abs() * d_norm < tolerance_change {
            break;
        }
        t = cubic_interpolate(
            bracket[0],
            bracket_f[0],
            bracket_gtd[0],
            bracket[1],
            bracket_f[1],
            bracket_gtd[1],
            None,
        );
        let (bmin, bmax) = (bracket[0].min(bracket[1]), bracket[0].max(bracket[1]));
        let eps = 0.1 * (bmax - bmin);
        if (bmax - t).min(t - bmin) < eps {
            if insuf_progress || t >= bmax || t <= bmin {
                t = if (t - bmax).abs() < (t - bmin).abs() { bmax - eps } else { bmin + eps };
                insuf_progress = false;
            } else {
                insuf_progress = true;
            }
        } else {
            insuf_progress = false;
        }
        (f_new, g_new) = ev.along(x, t, d)?;
        gtd_new = dot(&g_new, d);
        ls_iter += 1;
        if f_new > f + cfg.c1 * t * gtd || f_new >= bracket_f[low] {
            bracket[high] = t;
            bracket_f[high] = f_new;
            bracket_g[high] = g_new;
            bracket_gtd[high] = gtd_new;
            (low, high) = order(&bracket_f);
        } else {
            if gtd_new.abs() <= -cfg.c2 * gtd {
                done = true;
            } else if gtd_new * (bracket[high] - bracket[low]) >= 0.0 {
                bracket[high] = bracket[low];
                bracket_f[high] = bracket_f[low];
                bracket_g[high] = bracket_g[low].clone();
                bracket_gtd[high] = bracket_gtd[low];
            }
            bracket[low] = t;
            bracket_f[low] = f_new;
            bracket_g[low] = g_new;
            bracket_gtd[low] = gtd_new;
        }
    }
    Ok(LineSearch { f: bracket_f[low], g: bracket_g.swap_remove(low), t: bracket[low] })
}

/// Minimizes `objective` from `x0`. `on_iteration` sees the trace before
/// every iteration; returning `false` cancels the run.
pub fn lbfgs<O: Objective + ?Sized>(
    objective: &mut O,
    x0: &[f64],
    cfg: &OptimizeConfig,
    on_iteration: &mut dyn FnMut(&OptimizerTrace) -> bool,
) -> Result<Minimum> {
    cfg.validate()?;
    let tolerance_change = 1e-12;
    let mut ev = Evaluator { objective, evaluations: 0, best: (f64::INFINITY, x0.to_vec()) };
    let mut x = x0.to_vec();
    let (mut f, mut g) = ev.at(&x)?;
    let mut trace = OptimizerTrace { objective: vec![f], grad_norm: vec![max_abs(&g)], ..Default::default() };
    let check_grad = cfg.convergence != ConvergenceTest::RelativeDecrease;
    let check_obj = cfg.convergence != ConvergenceTest::GradientMaxNorm;

    let finish = |x: Vec<f64>, f: f64, mut trace: OptimizerTrace, stop: StopReason, evaluations: usize| {
        trace.converged = stop.converged();
        Minimum { x, f, trace, evaluations, stop }
    };

    if !f.is_finite() {
        return Err(Error::Input("objective is not finite at the starting point".into()));
    }
    if check_grad && max_abs(&g) <= cfg.tolerance {
        return Ok(finish(x, f, trace, StopReason::GradientTolerance, ev.evaluations));
    }

    let mut old_s: VecDeque<Vec<f64>> = VecDeque::new();
    let mut old_y: VecDeque<Vec<f64>> = VecDeque::new();
    let mut ro: VecDeque<f64> = VecDeque::new();
    let mut d: Vec<f64> = Vec::new();
    let mut t = 0.0;
    let mut h_diag = 1.0;
    let mut prev_g: Vec<f64> = Vec::new();
    let mut iter = 0;
    let stop = loop {
        if !on_iteration(&trace) {
            break StopReason::Cancelled;
        }
        if iter == cfg.max_iterations {
            break StopReason::MaxIterations;
        }
        iter += 1;
        if iter == 1 {
            d = g.iter().map(|v| -v).collect();
        } else {
            let y: Vec<f64> = g.iter().zip(&prev_g).map(|(a, b)| a - b).collect();
            let s: Vec<f64> = d.iter().map(|v| v * t).collect();
            let ys = dot(&y, &s);
            if ys > 1e-10 {
                if old_s.len() == cfg.history {
                    old_s.pop_front();
                    old_y.pop_front();
                    ro.pop_front();
                }
                h_diag = ys / dot(&y, &y);
                old_s.push_back(s);
                old_y.push_back(y);
                ro.push_back(1.0 / ys);
            }
            let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut al = vec![0.0; old_s.len()];
            for i in (0..old_s.len()).rev() {
                al[i] = ro[i] * dot(&old_s[i], &q);
                for (qv, yv) in q.iter_mut().zip(&old_y[i]) {
                    *qv -= al[i] * yv;
                }
            }
            for v in q.iter_mut() {
                *v *= h_diag;
            }
            for i in 0..old_s.len() {
                let be = ro[i] * dot(&old_y[i], &q);
                for (qv, sv) in q.iter_mut().zip(&old_s[i]) {
                    *qv += sv * (al[i] - be);
                }
            }
            d = q;
        }
        prev_g = g.clone();
        let prev_f = f;
        t = if iter == 1 { (1.0f64).min(1.0 / g.iter().map(|v| v.abs()).sum::<f64>()) * cfg.lr } else { cfg.lr };
        let gtd = dot(&g, &d);
        if gtd > -tolerance_change {
            break StopReason::NotDescent;
        }
        let ls = strong_wolfe(&mut ev, &x, t, &d, f, &g, gtd, cfg, tolerance_change)?;
        if !(ls.f < prev_f) {
            break StopReason::LineSearchFailed;
        }
        t = ls.t;
        for (xv, dv) in x.iter_mut().zip(&d) {
            *xv += t * dv;
        }
        f = ls.f;
        g = ls.g;
        trace.objective.push(f);
        trace.grad_norm.push(max_abs(&g));
        trace.iterations = iter;

        if check_grad && max_abs(&g) <= cfg.tolerance {
            break StopReason::GradientTolerance;
        }
        if check_obj && (prev_f - f) <= cfg.tolerance * prev_f.abs() {
            break StopReason::ObjectiveTolerance;
        }
        if max_abs(&d) * t.abs() <= tolerance_change {
            break StopReason::StepTolerance;
        }
    };
    // the accepted iterate is the best point unless the line search probed lower
    let (best_f, best_x) = ev.best;
    let evaluations = ev.evaluations;
    if best_f < f {
        return Ok(finish(best_x, best_f, trace, stop, evaluations));
    }
    Ok(finish(x, f, trace, stop, evaluations))
}
