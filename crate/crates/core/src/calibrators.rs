//! Temperature-family calibration maps from logits to calibrated logits.
//!
//! Every temperature is stored as an unconstrained raw parameter `theta` and
//! read through `T = softplus(theta)`, so any real parameter vector is valid.
//! Flat parameter layouts:
//!
//! | kind | layout |
//! |------|--------|
//! | TS   | `[theta]` |
//! | ETS  | `[theta, w1, w2, w3]` |
//! | CTS  | `[theta_0, .., theta_{C-1}]` |
//! | PTS  | per linear layer: weights (out x in, row-major), then biases |

use alloc::vec;
use alloc::vec::Vec;

use libm::exp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::LogitDataset;
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, sigmoid, softplus, softplus_inv};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CalibratorKind {
    /// Single temperature.
    Ts,
    /// Ensemble: `w1 * z / T + w2 * z + w3 / C`.
    Ets,
    /// Per-sample temperature predicted by a small rectifier network.
    Pts,
    /// One temperature per class.
    Cts,
}

impl CalibratorKind {
    pub const ALL: [CalibratorKind; 4] = [
        CalibratorKind::Ts,
        CalibratorKind::Ets,
        CalibratorKind::Pts,
        CalibratorKind::Cts,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CalibratorKind::Ts => "TS",
            CalibratorKind::Ets => "ETS",
            CalibratorKind::Pts => "PTS",
            CalibratorKind::Cts => "CTS",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
    }

    /// Whether the map keeps every row's argmax (CTS does not).
    pub fn preserves_argmax(self) -> bool {
        !matches!(self, CalibratorKind::Cts)
    }
}

/// Shape of the PTS temperature network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PtsArch {
    /// Number of largest logits (sorted descending) fed to the network.
    pub top_s: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl PtsArch {
    pub fn default_for(classes: usize) -> Self {
        Self {
            top_s: classes.min(10),
            hidden_layers: 2,
            hidden_width: 5,
        }
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.top_s == 0 || self.top_s > classes {
            return Err(Error::InvalidConfig("PTS top_s must lie in [1, C]"));
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::InvalidConfig(
                "PTS needs at least one hidden layer and unit",
            ));
        }
        Ok(())
    }

    /// `(inputs, outputs)` of each linear layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.top_s];
        dims.extend(core::iter::repeat_n(self.hidden_width, self.hidden_layers));
        dims.push(1);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|&(i, o)| o * (i + 1)).sum()
    }
}

/// A parametric logit-to-logit calibration map.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrator {
    kind: CalibratorKind,
    classes: usize,
    arch: Option<PtsArch>,
    params: Vec<f64>,
    fitted: bool,
    ets_sum_to_one: bool,
}

impl Calibrator {
    /// Identity-initialized calibrator (`T = 1`; ETS starts at `w = (1, 0, 0)`).
    /// PTS uses the default architecture with seed 0.
    pub fn new(kind: CalibratorKind, classes: usize) -> Result<Self> {
        match kind {
            CalibratorKind::Pts => Self::pts(classes, PtsArch::default_for(classes), 0),
            _ => {
                if classes < 2 {
                    return Err(Error::InvalidConfig(
                        "a calibrator needs at least 2 classes",
                    ));
                }
                let one = softplus_inv(1.0);
                let params = match kind {
                    CalibratorKind::Ts => vec![one],
                    CalibratorKind::Ets => vec![one, 1.0, 0.0, 0.0],
                    CalibratorKind::Cts => vec![one; classes],
                    CalibratorKind::Pts => unreachable!(),
                };
                Ok(Self {
                    kind,
                    classes,
                    arch: None,
                    params,
                    fitted: false,
                    ets_sum_to_one: false,
                })
            }
        }
    }

    /// PTS with He-initialized hidden layers and a near-zero output layer whose
    /// bias maps to `T = 1`.
    pub fn pts(classes: usize, arch: PtsArch, seed: u64) -> Result<Self> {
        arch.validate(classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch.layers();
        let last = layers.len() - 1;
        let mut params = Vec::with_capacity(arch.param_count());
        for (k, &(fan_in, fan_out)) in layers.iter().enumerate() {
            let std = if k == last {
                0.1 / libm::sqrt(fan_in as f64)
            } else {
                libm::sqrt(2.0 / fan_in as f64)
            };
            for _ in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(&mut rng);
                params.push(std * z);
            }
            if k == last {
                params.push(softplus_inv(1.0));
            } else {
                params.extend(core::iter::repeat_n(0.0, fan_out));
            }
        }
        Ok(Self {
            kind: CalibratorKind::Pts,
            classes,
            arch: Some(arch),
            params,
            fitted: false,
            ets_sum_to_one: false,
        })
    }

    /// Rebuilds a calibrator from a raw parameter vector.
    pub fn from_params(
        kind: CalibratorKind,
        classes: usize,
        arch: Option<PtsArch>,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut cal = match (kind, arch) {
            (CalibratorKind::Pts, Some(a)) => Self::pts(classes, a, 0)?,
            (CalibratorKind::Pts, None) => {
                return Err(Error::InvalidConfig("PTS requires an architecture"))
            }
            _ => Self::new(kind, classes)?,
        };
        if params.len() != cal.params.len() {
            return Err(Error::ShapeMismatch {
                what: "calibrator parameters",
                expected: cal.params.len(),
                found: params.len(),
            });
        }
        if let Some(k) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col: k });
        }
        cal.params = params;
        cal.fitted = true;
        Ok(cal)
    }

    pub fn kind(&self) -> CalibratorKind {
        self.kind
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn arch(&self) -> Option<PtsArch> {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    pub(crate) fn set_fitted(&mut self, fitted: bool) {
        self.fitted = fitted;
    }

    /// Replaces the raw parameters, projecting ETS weights onto their feasible set.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                what: "calibrator parameters",
                expected: self.params.len(),
                found: params.len(),
            });
        }
        let mut p = params.to_vec();
        self.project(&mut p);
        self.params = p;
        Ok(())
    }

    /// Constrains ETS weights to sum to one (projection onto the simplex).
    pub fn set_ets_sum_to_one(&mut self, on: bool) {
        self.ets_sum_to_one = on;
    }

    pub fn ets_sum_to_one(&self) -> bool {
        self.ets_sum_to_one
    }

    /// Positive temperature for TS and ETS.
    pub fn temperature(&self) -> Option<f64> {
        match self.kind {
            CalibratorKind::Ts | CalibratorKind::Ets => Some(softplus(self.params[0])),
            _ => None,
        }
    }

    /// Per-class temperatures for CTS.
    pub fn class_temperatures(&self) -> Option<Vec<f64>> {
        (self.kind == CalibratorKind::Cts)
            .then(|| self.params.iter().map(|&t| softplus(t)).collect())
    }

    /// `(w1, w2, w3)` for ETS.
    pub fn ets_weights(&self) -> Option<[f64; 3]> {
        (self.kind == CalibratorKind::Ets).then(|| [self.params[1], self.params[2], self.params[3]])
    }

    /// Parameters that train in the given stage. ETS trains `T` in stage 0 and
    /// the weights in stage 1; every other kind trains everything in one stage.
    pub fn stage_mask(&self, stage: usize) -> Vec<bool> {
        match self.kind {
            CalibratorKind::Ets => {
                if stage == 0 {
                    vec![true, false, false, false]
                } else {
                    vec![false, true, true, true]
                }
            }
            _ => vec![true; self.params.len()],
        }
    }

    pub fn stages(&self) -> usize {
        if self.kind == CalibratorKind::Ets {
            2
        } else {
            1
        }
    }

    /// Projects ETS weights onto `w >= 0` (or the simplex when sum-to-one is on).
    pub fn project(&self, params: &mut [f64]) {
        if self.kind != CalibratorKind::Ets {
            return;
        }
        let w = &mut params[1..4];
        if self.ets_sum_to_one {
            project_simplex(w);
        } else {
            for v in w {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }

    /// Scratch buffers for row-level evaluation.
    pub(crate) fn workspace(&self) -> Workspace {
        let (acts, offsets, width) = match self.arch {
            Some(a) => {
                let layers = a.layers();
                let mut offsets = Vec::with_capacity(layers.len());
                let mut off = 0;
                for &(i, o) in &layers {
                    offsets.push(off);
                    off += o * (i + 1);
                }
                let width = layers.iter().map(|&(i, o)| i.max(o)).max().unwrap_or(1);
                let acts = layers
                    .iter()
                    .map(|&(i, o)| (vec![0.0; i], vec![0.0; o]))
                    .collect();
                (acts, offsets, width)
            }
            None => (Vec::new(), Vec::new(), 0),
        };
        Workspace {
            sorted: vec![0.0; self.classes],
            acts,
            offsets,
            delta: vec![0.0; width],
            next: vec![0.0; width],
            temps: Vec::new(),
            slopes: Vec::new(),
            temperature: 1.0,
            raw: 0.0,
        }
    }

    /// Caches the temperatures implied by `params` (and their softplus slopes)
    /// ahead of a pass over many rows.
    pub(crate) fn prepare(&self, params: &[f64], ws: &mut Workspace) {
        let thetas = match self.kind {
            CalibratorKind::Ts | CalibratorKind::Ets => &params[..1],
            CalibratorKind::Cts => params,
            CalibratorKind::Pts => &params[..0],
        };
        ws.temps.clear();
        ws.slopes.clear();
        for &theta in thetas {
            ws.temps.push(softplus(theta));
            ws.slopes.push(sigmoid(theta));
        }
    }

    /// Calibrated logits of one row under `params`.
    pub(crate) fn forward_row(
        &self,
        params: &[f64],
        z: &[f64],
        out: &mut [f64],
        ws: &mut Workspace,
    ) {
        match self.kind {
            CalibratorKind::Ts => {
                let t = ws.temps[0];
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = v / t;
                }
            }
            CalibratorKind::Ets => {
                let t = ws.temps[0];
                let (w1, w2, w3) = (params[1], params[2], params[3]);
                let shift = w3 / self.classes as f64;
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = w1 * (v / t) + w2 * v + shift;
                }
            }
            CalibratorKind::Cts => {
                for ((o, &v), &t) in out.iter_mut().zip(z).zip(&ws.temps) {
                    *o = v / t;
                }
            }
            CalibratorKind::Pts => {
                let arch = self.arch.expect("PTS has an architecture");
                ws.sorted.copy_from_slice(z);
                ws.sorted.sort_unstable_by(|a, b| {
                    b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal)
                });
                let mut offset = 0;
                let n_layers = ws.acts.len();
                for k in 0..n_layers {
                    let (input, output) = {
                        let (before, after) = ws.acts.split_at_mut(k);
                        let (input, output) = &mut after[0];
                        if k == 0 {
                            input.copy_from_slice(&ws.sorted[..arch.top_s]);
                        } else {
                            let prev = &before[k - 1].1;
                            for (x, &a) in input.iter_mut().zip(prev) {
                                *x = if a > 0.0 { a } else { 0.0 };
                            }
                        }
                        (input, output)
                    };
                    let fan_in = input.len();
                    let fan_out = output.len();
                    let w = &params[offset..offset + fan_in * fan_out];
                    let b = &params[offset + fan_in * fan_out..offset + fan_out * (fan_in + 1)];
                    for (j, o) in output.iter_mut().enumerate() {
                        let row = &w[j * fan_in..(j + 1) * fan_in];
                        *o = b[j]
                            + row
                                .iter()
                                .zip(input.iter())
                                .map(|(a, x)| a * x)
                                .sum::<f64>();
                    }
                    offset += fan_out * (fan_in + 1);
                }
                ws.raw = ws.acts[n_layers - 1].1[0];
                ws.temperature = softplus(ws.raw);
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = v / ws.temperature;
                }
            }
        }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d out` for
    /// one row. Must follow `forward_row` on the same row with the same workspace.
    pub(crate) fn backward_row(
        &self,
        params: &[f64],
        z: &[f64],
        out: &[f64],
        grad_out: &[f64],
        grad: &mut [f64],
        ws: &mut Workspace,
    ) {
        match self.kind {
            CalibratorKind::Ts => {
                let t = ws.temps[0];
                let dt: f64 = -grad_out.iter().zip(out).map(|(g, u)| g * u).sum::<f64>() / t;
                grad[0] += dt * ws.slopes[0];
            }
            CalibratorKind::Ets => {
                let t = ws.temps[0];
                let (w1, _, _) = (params[1], params[2], params[3]);
                let mut gz = 0.0;
                let mut gsum = 0.0;
                for (&g, &v) in grad_out.iter().zip(z) {
                    gz += g * v;
                    gsum += g;
                }
                grad[1] += gz / t;
                grad[2] += gz;
                grad[3] += gsum / self.classes as f64;
                let dt = -w1 * gz / (t * t);
                grad[0] += dt * ws.slopes[0];
            }
            CalibratorKind::Cts => {
                for (j, (&g, &u)) in grad_out.iter().zip(out).enumerate() {
                    grad[j] -= g * u / ws.temps[j] * ws.slopes[j];
                }
            }
            CalibratorKind::Pts => {
                let t = ws.temperature;
                let dt: f64 = -grad_out.iter().zip(out).map(|(g, u)| g * u).sum::<f64>() / t;
                ws.delta[0] = dt * sigmoid(ws.raw);
                let layers = self.arch.expect("PTS has an architecture").layers();
                for k in (0..layers.len()).rev() {
                    let (fan_in, fan_out) = layers[k];
                    let off = ws.offsets[k];
                    let input = &ws.acts[k].0;
                    for j in 0..fan_out {
                        let d = ws.delta[j];
                        let gw = &mut grad[off + j * fan_in..off + (j + 1) * fan_in];
                        for (g, &x) in gw.iter_mut().zip(input) {
                            *g += d * x;
                        }
                        grad[off + fan_in * fan_out + j] += d;
                    }
                    if k > 0 {
                        let w = &params[off..off + fan_in * fan_out];
                        let pre = &ws.acts[k - 1].1;
                        for i in 0..fan_in {
                            ws.next[i] = if pre[i] > 0.0 {
                                (0..fan_out).map(|j| w[j * fan_in + i] * ws.delta[j]).sum()
                            } else {
                                0.0
                            };
                        }
                        core::mem::swap(&mut ws.delta, &mut ws.next);
                    }
                }
            }
        }
    }

    /// Calibrated logits for every row.
    pub fn apply(&self, logits: &Matrix) -> Result<Matrix> {
        if logits.cols() != self.classes {
            return Err(Error::ShapeMismatch {
                what: "logit columns",
                expected: self.classes,
                found: logits.cols(),
            });
        }
        if let Some((row, col)) = logits.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        let mut out = Matrix::zeros(logits.rows(), logits.cols());
        let mut ws = self.workspace();
        self.prepare(&self.params, &mut ws);
        for i in 0..logits.rows() {
            self.forward_row(&self.params, logits.row(i), out.row_mut(i), &mut ws);
        }
        if out.find_non_finite().is_some() {
            return Err(Error::NumericDomain("calibrated logits are not finite"));
        }
        Ok(out)
    }

    pub fn apply_dataset(&self, data: &LogitDataset) -> Result<Matrix> {
        self.apply(&data.logits_f64())
    }
}

/// Per-row scratch space for forward/backward passes.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    sorted: Vec<f64>,
    /// `(layer input, layer pre-activation output)` per PTS linear layer.
    acts: Vec<(Vec<f64>, Vec<f64>)>,
    /// Start of each PTS layer in the flat parameter vector.
    offsets: Vec<usize>,
    delta: Vec<f64>,
    next: Vec<f64>,
    temps: Vec<f64>,
    slopes: Vec<f64>,
    temperature: f64,
    raw: f64,
}

/// Euclidean projection onto `{w >= 0, sum w = 1}`.
fn project_simplex(w: &mut [f64]) {
    let mut sorted: Vec<f64> = w.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            tau = t;
        }
    }
    for v in w {
        *v = (*v - tau).max(0.0);
    }
}

/// Row-wise softmax with max subtraction.
pub fn probabilities(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        for (p, &z) in out.row_mut(i).iter_mut().zip(row) {
            *p = exp(z - lse);
        }
    }
    out
}
