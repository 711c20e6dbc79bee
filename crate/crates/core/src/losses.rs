//! Class-wise training losses: cross-entropy, label smoothing and focal loss,
//! each summed per ground-truth class.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log, pow};

use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::matrix::Matrix;

/// Floor applied to a probability before taking its log.
pub const PROB_FLOOR: f64 = 1e-12;
const LOG_PROB_FLOOR: f64 = -27.631021115928547;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Negative log-likelihood.
    Ce,
    /// Label smoothing with target `(1 - a) * onehot + a / C`.
    Ls,
    /// Focal loss `-(1 - p_y)^g * log p_y`.
    Fl,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub ls_alpha: f64,
    pub fl_gamma: f64,
    /// Divide each class sum by its sample count. Off by default: class losses are sums.
    pub per_class_mean: bool,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self::new(LossKind::Ce)
    }
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            ls_alpha: 0.05,
            fl_gamma: 3.0,
            per_class_mean: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ls_alpha) {
            return Err(Error::InvalidConfig(
                "label smoothing alpha must lie in [0, 1)",
            ));
        }
        if !(self.fl_gamma >= 0.0) || !self.fl_gamma.is_finite() {
            return Err(Error::InvalidConfig("focal gamma must be >= 0"));
        }
        Ok(())
    }
}

/// Per-class summed losses together with per-class sample counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassLossVector {
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
    /// Number of probabilities that hit [`PROB_FLOOR`].
    pub clamped: usize,
}

impl ClassLossVector {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Values and counts restricted to classes that have samples.
    pub fn non_empty_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.counts)
            .filter(|(_, &n)| n > 0)
            .map(|(&v, _)| v)
            .collect()
    }
}

fn clamped_log(p: f64, clamped: &mut usize) -> f64 {
    if p < PROB_FLOOR {
        *clamped += 1;
        log(PROB_FLOOR)
    } else {
        log(p)
    }
}

/// Loss of one probability row.
fn sample_loss_from_probs(p: &[f64], y: usize, spec: &LossSpec, clamped: &mut usize) -> f64 {
    match spec.kind {
        LossKind::Ce => -clamped_log(p[y], clamped),
        LossKind::Ls => {
            let c = p.len() as f64;
            let off = spec.ls_alpha / c;
            p.iter()
                .enumerate()
                .map(|(k, &pk)| {
                    let q = if k == y {
                        1.0 - spec.ls_alpha + off
                    } else {
                        off
                    };
                    if q == 0.0 {
                        0.0
                    } else {
                        -q * clamped_log(pk, clamped)
                    }
                })
                .sum()
        }
        LossKind::Fl => {
            let rest: f64 = p
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != y)
                .map(|(_, &v)| v)
                .sum();
            -pow(rest, spec.fl_gamma) * clamped_log(p[y], clamped)
        }
    }
}

/// Class-wise losses of probability rows (each row on the simplex).
pub fn class_losses(probs: &Matrix, labels: &[u32], spec: &LossSpec) -> Result<ClassLossVector> {
    if probs.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            what: "probabilities vs labels",
            expected: labels.len(),
            found: probs.rows(),
        });
    }
    let c = probs.cols();
    let mut values = vec![0.0; c];
    let mut counts = vec![0usize; c];
    let mut clamped = 0;
    for (row, &y) in probs.iter_rows().zip(labels) {
        let y = y as usize;
        if y >= c {
            return Err(Error::LabelOutOfRange {
                row: counts.iter().sum(),
                label: y as u32,
                classes: c,
            });
        }
        values[y] += sample_loss_from_probs(row, y, spec, &mut clamped);
        counts[y] += 1;
    }
    if spec.per_class_mean {
        for (v, &n) in values.iter_mut().zip(&counts) {
            if n > 0 {
                *v /= n as f64;
            }
        }
    }
    Ok(ClassLossVector {
        values,
        counts,
        clamped,
    })
}

/// Loss over the classes in `subset` only: the sum of their class-wise losses.
pub fn subset_loss(
    probs: &Matrix,
    labels: &[u32],
    spec: &LossSpec,
    subset: &[usize],
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::InvalidConfig("class subset must be non-empty"));
    }
    let losses = class_losses(probs, labels, spec)?;
    let mut total = 0.0;
    for &i in subset {
        total += *losses
            .values
            .get(i)
            .ok_or(Error::InvalidConfig("class index out of range"))?;
    }
    Ok(total)
}

/// Indices of the `k` largest losses, ties resolved toward the smaller index,
/// returned in ascending index order.
pub fn select_top_k_classes(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > values.len() {
        return Err(Error::InvalidConfig("k must lie in [1, C]"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut top = order[..k].to_vec();
    top.sort_unstable();
    Ok(top)
}

/// Negative log-likelihood of one logit row.
pub(crate) fn ce_from_logits(logits: &[f64], y: usize, clamped: &mut usize) -> f64 {
    let logp = logits[y] - log_sum_exp(logits);
    if logp < LOG_PROB_FLOOR {
        *clamped += 1;
        -LOG_PROB_FLOOR
    } else {
        -logp
    }
}

/// Loss of one calibrated-logit row and its gradient with respect to that row.
///
/// `probs` receives the softmax of `logits`; `grad` receives `d loss / d logits`.
/// Terms whose probability is clamped contribute a constant, hence no gradient.
pub(crate) fn sample_loss_and_grad(
    logits: &[f64],
    y: usize,
    spec: &LossSpec,
    probs: &mut [f64],
    grad: &mut [f64],
    clamped: &mut usize,
) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &u) in probs.iter_mut().zip(logits) {
        *p = exp(u - m);
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    let lse = m + log(sum);
    let floor = LOG_PROB_FLOOR;
    match spec.kind {
        LossKind::Ce => {
            let logp = logits[y] - lse;
            if logp < floor {
                *clamped += 1;
                grad.fill(0.0);
                return -floor;
            }
            grad.copy_from_slice(probs);
            grad[y] -= 1.0;
            -logp
        }
        LossKind::Ls => {
            let c = logits.len() as f64;
            let off = spec.ls_alpha / c;
            let mut loss = 0.0;
            let mut q_active = 0.0;
            grad.fill(0.0);
            for k in 0..logits.len() {
                let q = if k == y {
                    1.0 - spec.ls_alpha + off
                } else {
                    off
                };
                if q == 0.0 {
                    continue;
                }
                let logp = logits[k] - lse;
                if logp < floor {
                    *clamped += 1;
                    loss -= q * floor;
                } else {
                    loss -= q * logp;
                    q_active += q;
                    grad[k] -= q;
                }
            }
            for (g, &p) in grad.iter_mut().zip(probs.iter()) {
                *g += q_active * p;
            }
            loss
        }
        LossKind::Fl => {
            let gamma = spec.fl_gamma;
            let py = probs[y];
            let rest: f64 = probs
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != y)
                .map(|(_, &v)| v)
                .sum();
            let raw_logp = logits[y] - lse;
            let (logp, active) = if raw_logp < floor {
                *clamped += 1;
                (floor, false)
            } else {
                (raw_logp, true)
            };
            let focus = pow(rest, gamma);
            let loss = -focus * logp;
            // d loss / d p_y
            let mut dp = if rest > 0.0 && gamma != 0.0 {
                gamma * pow(rest, gamma - 1.0) * logp
            } else {
                0.0
            };
            // focus * (1/p_y) * p_y collapses into the softmax Jacobian below
            let mut dlogp = 0.0;
            if active {
                dlogp = -focus;
            }
            // d p_y / d u_j = p_y (delta_jy - p_j); d log p_y / d u_j = delta_jy - p_j
            dp *= py;
            let scale = dp + dlogp;
            for (j, g) in grad.iter_mut().enumerate() {
                let delta = if j == y { 1.0 } else { 0.0 };
                *g = scale * (delta - probs[j]);
            }
            loss
        }
    }
}
