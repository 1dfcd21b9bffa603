//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Deterministic: no randomness, fixed summation order. Termination is on the
//! infinity norm of the gradient.

use std::collections::VecDeque;

/// A smooth function to minimize.
pub trait Objective {
    fn dim(&self) -> usize;
    /// Writes the gradient at `x` into `grad` and returns the value.
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once `max |grad_i| < gtol`.
    pub gtol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_linesearch: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iter: 2000,
            gtol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_linesearch: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The line search could not make progress (typically at the limit of
    /// floating point resolution).
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Probe<'a, O: Objective> {
    obj: &'a O,
    x0: &'a [f64],
    dir: &'a [f64],
    x: Vec<f64>,
    g: Vec<f64>,
    f: f64,
    alpha: f64,
    evals: usize,
}

#[derive(Clone, Copy)]
struct Point {
    alpha: f64,
    f: f64,
    dg: f64,
}

impl<O: Objective> Probe<'_, O> {
    fn at(&mut self, alpha: f64) -> Point {
        for ((xi, &x0), &d) in self.x.iter_mut().zip(self.x0).zip(self.dir) {
            *xi = x0 + alpha * d;
        }
        let f = self.obj.eval(&self.x, &mut self.g);
        self.evals += 1;
        self.f = f;
        self.alpha = alpha;
        Point { alpha, f, dg: dot(&self.g, self.dir) }
    }
}

fn cubic_min(lo: Point, hi: Point) -> Option<f64> {
    let d1 = lo.dg + hi.dg - 3.0 * (lo.f - hi.f) / (lo.alpha - hi.alpha);
    let disc = d1 * d1 - lo.dg * hi.dg;
    if disc < 0.0 {
        return None;
    }
    let d2 = (hi.alpha - lo.alpha).signum() * disc.sqrt();
    let a = hi.alpha - (hi.alpha - lo.alpha) * (hi.dg + d2 - d1) / (hi.dg - lo.dg + 2.0 * d2);
    a.is_finite().then_some(a)
}

struct Wolfe {
    c1: f64,
    c2: f64,
    f0: f64,
    dg0: f64,
}

impl Wolfe {
    fn armijo(&self, p: Point) -> bool {
        if p.f <= self.f0 + self.c1 * p.alpha * self.dg0 {
            return true;
        }
        // Once function differences drop into rounding noise, fall back to
        // the derivative form of sufficient decrease.
        let noise = 1e-14 * self.f0.abs().max(1.0);
        p.f <= self.f0 + noise && p.dg <= (2.0 * self.c1 - 1.0) * self.dg0
    }

    fn curvature(&self, p: Point) -> bool {
        p.dg.abs() <= -self.c2 * self.dg0
    }
}

fn line_search<O: Objective>(
    probe: &mut Probe<'_, O>,
    f0: f64,
    dg0: f64,
    alpha0: f64,
    cfg: &LbfgsConfig,
) -> Option<Point> {
    let w = Wolfe { c1: cfg.c1, c2: cfg.c2, f0, dg0 };
    let mut prev = Point { alpha: 0.0, f: f0, dg: dg0 };
    let mut alpha = alpha0;
    let mut budget = cfg.max_linesearch;
    let mut first = true;
    loop {
        if budget == 0 {
            return None;
        }
        budget -= 1;
        let p = probe.at(alpha);
        if !p.f.is_finite() {
            // Step overflowed; shrink and retry.
            alpha = prev.alpha + 0.1 * (alpha - prev.alpha);
            continue;
        }
        if !w.armijo(p) || (!first && p.f >= prev.f) {
            return zoom(probe, &w, prev, p, budget);
        }
        if w.curvature(p) {
            return Some(p);
        }
        if p.dg >= 0.0 {
            return zoom(probe, &w, p, prev, budget);
        }
        first = false;
        prev = p;
        alpha *= 2.0;
    }
}

fn zoom<O: Objective>(
    probe: &mut Probe<'_, O>,
    w: &Wolfe,
    mut lo: Point,
    mut hi: Point,
    mut budget: usize,
) -> Option<Point> {
    while budget > 0 {
        budget -= 1;
        let (a, b) = if lo.alpha < hi.alpha { (lo.alpha, hi.alpha) } else { (hi.alpha, lo.alpha) };
        let width = b - a;
        if width <= f64::EPSILON * b.abs().max(1e-300) {
            break;
        }
        let alpha = match cubic_min(lo, hi) {
            Some(c) if c > a + 0.1 * width && c < b - 0.1 * width => c,
            _ => 0.5 * (a + b),
        };
        let p = probe.at(alpha);
        if !w.armijo(p) || p.f >= lo.f {
            hi = p;
        } else {
            if w.curvature(p) {
                return Some(p);
            }
            if p.dg * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
    // Best point seen, if it decreased the objective at all.
    (lo.alpha > 0.0 && lo.f < w.f0).then_some(lo)
}

/// Minimizes `obj` from `x0`.
pub fn minimize<O: Objective>(obj: &O, x0: Vec<f64>, cfg: &LbfgsConfig) -> Minimum {
    let n = obj.dim();
    assert_eq!(x0.len(), n, "starting point has wrong dimension");
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&x, &mut g);
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut dir = vec![0.0; n];
    let mut alphas = vec![0.0; cfg.memory.max(1)];
    let mut iterations = 0;

    let termination = loop {
        if inf_norm(&g) < cfg.gtol {
            break Termination::Converged;
        }
        if iterations >= cfg.max_iter {
            break Termination::MaxIterations;
        }

        // Two-loop recursion: dir = -H g.
        dir.copy_from_slice(&g);
        for (k, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alphas[k] = a;
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= a * yi);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for (k, (s, y, rho)) in history.iter().enumerate() {
            let b = rho * dot(y, &dir);
            let a = alphas[k];
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (a - b) * si);
        }
        dir.iter_mut().for_each(|d| *d = -*d);

        let mut dg0 = dot(&g, &dir);
        if dg0.is_nan() || dg0 >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            history.clear();
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            dg0 = -dot(&g, &g);
        }
        let alpha0 = if history.is_empty() {
            (1.0 / inf_norm(&g)).min(1.0)
        } else {
            1.0
        };

        let mut probe = Probe {
            obj,
            x0: &x,
            dir: &dir,
            x: vec![0.0; n],
            g: vec![0.0; n],
            f: f64::NAN,
            alpha: f64::NAN,
            evals: 0,
        };
        let step = line_search(&mut probe, f, dg0, alpha0, cfg);
        evaluations += probe.evals;
        let Some(p) = step else {
            if history.is_empty() {
                break Termination::LineSearchFailed;
            }
            history.clear();
            continue;
        };
        let (new_x, new_g, new_f) = if probe.alpha == p.alpha {
            (probe.x, probe.g, probe.f)
        } else {
            let new_x: Vec<f64> = x.iter().zip(&dir).map(|(xi, d)| xi + p.alpha * d).collect();
            let mut new_g = vec![0.0; n];
            let new_f = obj.eval(&new_x, &mut new_g);
            evaluations += 1;
            (new_x, new_g, new_f)
        };

        let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == cfg.memory.max(1) {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = new_x;
        g = new_g;
        f = new_f;
        iterations += 1;
    };

    Minimum {
        grad_inf_norm: inf_norm(&g),
        x,
        value: f,
        iterations,
        evaluations,
        termination,
    }
}
