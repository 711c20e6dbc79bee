//! Small full-batch optimizers: a first-order method with decoupled weight
//! decay, a limited-memory quasi-Newton method, a piecewise-constant learning
//! rate schedule, and a derivative-free bounded 2-D minimizer.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Adam moments with decoupled weight decay.
    FirstOrder,
    /// L-BFGS; each epoch runs up to `inner_iterations` fixed-length steps.
    QuasiNewton,
}

/// Piecewise-constant learning rates: `(epoch_count, learning_rate)` segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    segments: Vec<(usize, f64)>,
}

impl Schedule {
    pub fn new(segments: Vec<(usize, f64)>) -> Result<Self> {
        if segments.is_empty() || segments.iter().any(|&(n, lr)| n == 0 || !(lr >= 0.0)) {
            return Err(Error::InvalidConfig(
                "schedule segments need epochs > 0 and lr >= 0",
            ));
        }
        Ok(Self { segments })
    }

    /// Parses `200:0.005,400:0.003,400:0.001`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut segments = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (n, lr) = part
                .split_once(':')
                .ok_or(Error::InvalidConfig("schedule segment must be EPOCHS:LR"))?;
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig("bad schedule epoch count"))?;
            let lr: f64 = lr
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig("bad schedule learning rate"))?;
            segments.push((n, lr));
        }
        Self::new(segments)
    }

    /// The focal-loss / label-smoothing schedule: 0.005, 0.003, 0.001 for 200/400/400 epochs.
    pub fn smoothing_default() -> Self {
        Self {
            segments: vec![(200, 0.005), (400, 0.003), (400, 0.001)],
        }
    }

    pub fn segments(&self) -> &[(usize, f64)] {
        &self.segments
    }

    pub fn total_epochs(&self) -> usize {
        self.segments.iter().map(|s| s.0).sum()
    }

    /// Rate of the segment containing `epoch`; past the end the last rate holds.
    pub fn rate_at(&self, epoch: usize) -> f64 {
        let mut end = 0;
        for &(n, lr) in &self.segments {
            end += n;
            if epoch < end {
                return lr;
            }
        }
        self.segments.last().map_or(0.0, |s| s.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimSpec {
    pub method: Method,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub schedule: Option<Schedule>,
    pub seed: u64,
    /// Quasi-Newton iterations per epoch.
    pub inner_iterations: usize,
    /// Quasi-Newton curvature pairs kept.
    pub history: usize,
    /// Stop once an epoch changes the objective by less than `1e-12` relative.
    pub early_stop: bool,
}

impl Default for OptimSpec {
    fn default() -> Self {
        Self {
            method: Method::QuasiNewton,
            learning_rate: 0.02,
            weight_decay: 0.0,
            epochs: 1000,
            schedule: None,
            seed: 0,
            inner_iterations: 20,
            history: 10,
            early_stop: false,
        }
    }
}

impl OptimSpec {
    pub fn first_order() -> Self {
        Self {
            method: Method::FirstOrder,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(
                "learning rate must be finite and >= 0",
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight decay must be >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1"));
        }
        if let Some(s) = &self.schedule {
            if s.total_epochs() != self.epochs {
                return Err(Error::InvalidConfig(
                    "schedule segments must cover every epoch",
                ));
            }
        }
        if self.method == Method::QuasiNewton && (self.inner_iterations == 0 || self.history == 0) {
            return Err(Error::InvalidConfig(
                "quasi-Newton needs inner iterations and history",
            ));
        }
        Ok(())
    }

    pub fn rate_at(&self, epoch: usize) -> f64 {
        match &self.schedule {
            Some(s) => s.rate_at(epoch),
            None => self.learning_rate,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const TOLERANCE_GRAD: f64 = 1e-7;
const TOLERANCE_CHANGE: f64 = 1e-9;

#[derive(Debug, Clone)]
enum State {
    Adam {
        m: Vec<f64>,
        v: Vec<f64>,
        t: i32,
    },
    Lbfgs {
        pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
        prev: Option<(Vec<f64>, Vec<f64>)>,
        started: bool,
    },
}

/// Stepwise optimizer. The objective may change between epochs.
#[derive(Debug, Clone)]
pub struct Minimizer {
    spec: OptimSpec,
    mask: Vec<bool>,
    state: State,
}

impl Minimizer {
    pub fn new(spec: &OptimSpec, n: usize) -> Self {
        let state = match spec.method {
            Method::FirstOrder => State::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
            Method::QuasiNewton => State::Lbfgs {
                pairs: VecDeque::new(),
                prev: None,
                started: false,
            },
        };
        Self {
            spec: spec.clone(),
            mask: vec![true; n],
            state,
        }
    }

    /// Restricts updates to the parameters flagged `true`.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        self.mask = mask;
        self
    }

    fn masked(&self, g: &mut [f64]) {
        for (v, &on) in g.iter_mut().zip(&self.mask) {
            if !on {
                *v = 0.0;
            }
        }
    }

    fn decay(&self, x: &mut [f64], lr: f64) {
        let wd = self.spec.weight_decay;
        if wd == 0.0 {
            return;
        }
        for (v, &on) in x.iter_mut().zip(&self.mask) {
            if on {
                *v *= 1.0 - lr * wd;
            }
        }
    }

    /// One epoch. `objective` writes the gradient and returns the value;
    /// `project` maps an iterate back onto the feasible set. Returns the
    /// objective at the incoming `x`.
    pub fn step(
        &mut self,
        epoch: usize,
        x: &mut [f64],
        objective: &mut dyn FnMut(&[f64], &mut [f64]) -> f64,
        project: &dyn Fn(&mut [f64]),
    ) -> f64 {
        let lr = self.spec.rate_at(epoch);
        let n = x.len();
        let mut g = vec![0.0; n];
        let f0 = objective(x, &mut g);
        self.masked(&mut g);
        if !f0.is_finite() || lr == 0.0 {
            return f0;
        }
        match &mut self.state {
            State::Adam { m, v, t } => {
                *t += 1;
                let bc1 = 1.0 - libm::pow(ADAM_BETA1, *t as f64);
                let bc2 = 1.0 - libm::pow(ADAM_BETA2, *t as f64);
                for i in 0..n {
                    if !self.mask[i] {
                        continue;
                    }
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    x[i] -= lr * mhat / (sqrt(vhat) + ADAM_EPS);
                }
                self.decay(x, lr);
                project(x);
            }
            State::Lbfgs { .. } => {
                self.lbfgs_epoch(x, f0, g, lr, objective, project);
                self.decay(x, lr);
                project(x);
            }
        }
        f0
    }

    fn lbfgs_epoch(
        &mut self,
        x: &mut [f64],
        mut f: f64,
        mut g: Vec<f64>,
        lr: f64,
        objective: &mut dyn FnMut(&[f64], &mut [f64]) -> f64,
        project: &dyn Fn(&mut [f64]),
    ) {
        let history = self.spec.history;
        let inner = self.spec.inner_iterations;
        let n = x.len();
        let mask = self.mask.clone();
        let State::Lbfgs {
            pairs,
            prev,
            started,
        } = &mut self.state
        else {
            unreachable!()
        };
        if max_abs(&g) <= TOLERANCE_GRAD {
            return;
        }
        let mut g_new = vec![0.0; n];
        let mut x_new = vec![0.0; n];
        for _ in 0..inner {
            if let Some((xp, gp)) = prev.take() {
                let s: Vec<f64> = x.iter().zip(&xp).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g.iter().zip(&gp).map(|(a, b)| a - b).collect();
                let ys = dot(&y, &s);
                if ys > 1e-10 {
                    if pairs.len() == history {
                        pairs.pop_front();
                    }
                    pairs.push_back((s, y, 1.0 / ys));
                }
            }
            let (d, mut t) = if !*started || pairs.is_empty() {
                let l1: f64 = g.iter().map(|v| v.abs()).sum();
                let d: Vec<f64> = g.iter().map(|v| -v).collect();
                let t = if *started {
                    lr
                } else {
                    (1.0f64).min(1.0 / l1) * lr
                };
                (d, t)
            } else {
                (two_loop(pairs, &g), lr)
            };
            *started = true;
            let gtd = dot(&g, &d);
            if gtd >= 0.0 {
                break;
            }
            // Backtrack only when the fixed-length step would increase the objective.
            let mut f_new = f64::INFINITY;
            let mut accepted = false;
            for _ in 0..30 {
                // below this the comparison with f is decided by rounding
                if -t * gtd <= 8.0 * f64::EPSILON * f.abs() {
                    break;
                }
                for i in 0..n {
                    x_new[i] = x[i] + t * d[i];
                }
                project(&mut x_new);
                f_new = objective(&x_new, &mut g_new);
                if f_new.is_finite() && f_new <= f {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            for (v, &on) in g_new.iter_mut().zip(&mask) {
                if !on {
                    *v = 0.0;
                }
            }
            let moved = x_new
                .iter()
                .zip(x.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            *prev = Some((x.to_vec(), core::mem::replace(&mut g, g_new.clone())));
            x.copy_from_slice(&x_new);
            let change = (f_new - f).abs();
            f = f_new;
            if max_abs(&g) <= TOLERANCE_GRAD
                || change < TOLERANCE_CHANGE
                || moved <= TOLERANCE_CHANGE
            {
                break;
            }
        }
        if prev.is_none() {
            *prev = Some((x.to_vec(), g));
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `-H g` from the stored curvature pairs.
fn two_loop(pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut alphas = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[k] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    let (s, y, _) = pairs.back().expect("non-empty history");
    let gamma = dot(s, y) / dot(y, y);
    for v in &mut q {
        *v *= gamma;
    }
    for (k, (s, y, rho)) in pairs.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[k] - b) * si;
        }
    }
    q
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    /// Best parameters seen.
    pub params: Vec<f64>,
    pub value: f64,
    /// Objective at the start of every epoch, then at the final iterate.
    pub trace: Vec<f64>,
    pub diverged: bool,
}

/// Runs the full epoch budget on a fixed objective and returns the best iterate.
pub fn minimize(
    objective: &mut dyn FnMut(&[f64], &mut [f64]) -> f64,
    init: &[f64],
    spec: &OptimSpec,
) -> Result<Minimum> {
    spec.validate()?;
    let mut grad = vec![0.0; init.len()];
    if !objective(init, &mut grad).is_finite() {
        return Err(Error::NumericDomain(
            "objective is not finite at the initial point",
        ));
    }
    let mut opt = Minimizer::new(spec, init.len());
    let mut x = init.to_vec();
    let mut best = (x.clone(), f64::INFINITY);
    let mut trace = Vec::with_capacity(spec.epochs + 1);
    let mut diverged = false;
    let keep = |x: &[f64], f: f64, best: &mut (Vec<f64>, f64), trace: &mut Vec<f64>| {
        trace.push(f);
        if f < best.1 {
            best.0.copy_from_slice(x);
            best.1 = f;
        }
    };
    for epoch in 0..spec.epochs {
        let before = x.clone();
        let f = opt.step(epoch, &mut x, objective, &|_| {});
        if !f.is_finite() {
            diverged = true;
            break;
        }
        keep(&before, f, &mut best, &mut trace);
        if x.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
        if spec.early_stop && trace.len() >= 2 {
            let prev = trace[trace.len() - 2];
            if (prev - f).abs() <= 1e-12 * f.abs().max(1.0) {
                break;
            }
        }
    }
    if !diverged {
        let f = objective(&x, &mut grad);
        if f.is_finite() {
            keep(&x, f, &mut best, &mut trace);
        } else {
            diverged = true;
        }
    }
    Ok(Minimum {
        params: best.0,
        value: best.1,
        trace,
        diverged,
    })
}

/// Tuning for [`minimize_bounded_2d`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounded2dOptions {
    /// Points per axis of the coarse scan used to seed extra starts (0 disables).
    pub scan: usize,
    /// Extra starts taken from the best scan points.
    pub scan_starts: usize,
    /// Restarts of each simplex from its own optimum.
    pub restarts: usize,
    pub max_evals: usize,
    pub xtol: f64,
    pub ftol: f64,
}

impl Default for Bounded2dOptions {
    fn default() -> Self {
        Self {
            scan: 11,
            scan_starts: 3,
            restarts: 3,
            max_evals: 20_000,
            xtol: 1e-10,
            ftol: 1e-15,
        }
    }
}

/// Result of [`minimize_bounded_2d`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounded2d {
    pub point: [f64; 2],
    pub value: f64,
    pub evaluations: usize,
}

struct Counted<'a> {
    f: &'a mut dyn FnMut([f64; 2]) -> f64,
    lo: [f64; 2],
    hi: [f64; 2],
    evals: usize,
    finite: usize,
    best: ([f64; 2], f64),
}

impl Counted<'_> {
    fn clamp(&self, mut x: [f64; 2]) -> [f64; 2] {
        for (k, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lo[k], self.hi[k]);
        }
        x
    }

    fn eval(&mut self, x: [f64; 2]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if !v.is_finite() {
            return f64::INFINITY;
        }
        self.finite += 1;
        if v < self.best.1 {
            self.best = (x, v);
        }
        v
    }
}

/// Derivative-free bounded minimization of a function of two variables.
///
/// Nelder-Mead with trial points clamped into the box, restarted from its own
/// optimum, and additionally seeded from the best points of a coarse scan.
/// A point replaces `init` only when it is strictly better, so a flat
/// objective returns `init` exactly.
pub fn minimize_bounded_2d(
    objective: &mut dyn FnMut([f64; 2]) -> f64,
    init: [f64; 2],
    bounds: [(f64, f64); 2],
    options: &Bounded2dOptions,
) -> Result<Bounded2d> {
    for k in 0..2 {
        let (lo, hi) = bounds[k];
        if !(lo <= hi) || !(init[k] >= lo && init[k] <= hi) {
            return Err(Error::InvalidConfig(
                "initial point must lie within the bounds",
            ));
        }
    }
    let lo = [bounds[0].0, bounds[1].0];
    let hi = [bounds[0].1, bounds[1].1];
    let mut c = Counted {
        f: objective,
        lo,
        hi,
        evals: 0,
        finite: 0,
        best: (init, f64::INFINITY),
    };
    let f_init = c.eval(init);
    c.best = (init, f_init);

    let mut starts = vec![init];
    if options.scan >= 2 {
        let mut scanned = Vec::with_capacity(options.scan * options.scan);
        for i in 0..options.scan {
            for j in 0..options.scan {
                let u = i as f64 / (options.scan - 1) as f64;
                let v = j as f64 / (options.scan - 1) as f64;
                let x = [lo[0] + u * (hi[0] - lo[0]), lo[1] + v * (hi[1] - lo[1])];
                let fx = c.eval(x);
                scanned.push((x, fx));
            }
        }
        scanned.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal));
        starts.extend(
            scanned
                .iter()
                .filter(|s| s.1.is_finite())
                .take(options.scan_starts)
                .map(|s| s.0),
        );
    }
    let step = [0.1 * (hi[0] - lo[0]), 0.1 * (hi[1] - lo[1])];
    for start in starts {
        let mut x = start;
        for _ in 0..=options.restarts {
            let before = c.best.1;
            x = nelder_mead(&mut c, x, step, options);
            if c.evals >= options.max_evals || !(c.best.1 < before) {
                break;
            }
        }
    }
    if c.finite == 0 {
        return Err(Error::NumericDomain("every evaluation was non-finite"));
    }
    Ok(Bounded2d {
        point: c.best.0,
        value: c.best.1,
        evaluations: c.evals,
    })
}

fn nelder_mead(
    c: &mut Counted<'_>,
    start: [f64; 2],
    step: [f64; 2],
    options: &Bounded2dOptions,
) -> [f64; 2] {
    let mut simplex = [start, start, start];
    for k in 0..2 {
        let mut p = start;
        p[k] += step[k];
        if p[k] > c.hi[k] {
            p[k] = start[k] - step[k];
        }
        simplex[k + 1] = c.clamp(p);
    }
    let mut fs = [0.0; 3];
    for (f, x) in fs.iter_mut().zip(&simplex) {
        *f = c.eval(*x);
    }
    let lerp =
        |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    while c.evals < options.max_evals {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            fs[a]
                .partial_cmp(&fs[b])
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        simplex = [simplex[order[0]], simplex[order[1]], simplex[order[2]]];
        fs = [fs[order[0]], fs[order[1]], fs[order[2]]];

        let size = (1..3)
            .map(|i| {
                (simplex[i][0] - simplex[0][0])
                    .abs()
                    .max((simplex[i][1] - simplex[0][1]).abs())
            })
            .fold(0.0, f64::max);
        let spread = if fs[2].is_finite() {
            fs[2] - fs[0]
        } else {
            f64::INFINITY
        };
        if size <= options.xtol && spread <= options.ftol {
            break;
        }
        if size <= options.xtol * 1e-3 {
            break;
        }

        let centroid = lerp(simplex[0], simplex[1], 0.5);
        let xr = c.clamp(lerp(centroid, simplex[2], -1.0));
        let fr = c.eval(xr);
        if fr < fs[0] {
            let xe = c.clamp(lerp(centroid, simplex[2], -2.0));
            let fe = c.eval(xe);
            if fe < fr {
                simplex[2] = xe;
                fs[2] = fe;
            } else {
                simplex[2] = xr;
                fs[2] = fr;
            }
        } else if fr < fs[1] {
            simplex[2] = xr;
            fs[2] = fr;
        } else {
            let (xc, fc) = if fr < fs[2] {
                let xc = c.clamp(lerp(centroid, xr, 0.5));
                (xc, c.eval(xc))
            } else {
                let xc = c.clamp(lerp(centroid, simplex[2], 0.5));
                (xc, c.eval(xc))
            };
            if fc < fs[2].min(fr) {
                simplex[2] = xc;
                fs[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = c.clamp(lerp(simplex[0], simplex[i], 0.5));
                    fs[i] = c.eval(simplex[i]);
                }
            }
        }
    }
    let best = (0..3)
        .min_by(|&a, &b| {
            fs[a]
                .partial_cmp(&fs[b])
                .unwrap_or(core::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    simplex[best]
}
