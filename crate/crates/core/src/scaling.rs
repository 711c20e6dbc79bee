//! Class-wise loss scaling.
//!
//! Class losses are normalized, mapped through a bounded sigmoid to per-class
//! weights `w_i in (-beta/2, beta/2)`, and the calibrator is trained on
//! `sum_i (1 + w_i) * L_i`. The sigmoid's shape `(alpha, beta)` is chosen once,
//! before training, to minimize a first-order estimate of the spread of class
//! losses after one update, then frozen.

use alloc::vec;
use alloc::vec::Vec;

use libm::{log, sqrt, tanh};

use crate::calibrators::Calibrator;
use crate::dataset::LogitDataset;
use crate::error::{Error, Result};
use crate::losses::{ClassLossVector, LossSpec};
use crate::math::mean;
use crate::optim::{minimize_bounded_2d, Bounded2dOptions, Minimizer, OptimSpec};
use crate::train::TrainingObjective;

/// How class losses are standardized before the sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Normalization {
    /// `(x - mean) / population_std`
    #[default]
    Nd,
    /// `(x - min) / (max - min)`
    Mm,
    /// `(x - mean) / (max - min)`
    Cm,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::Nd => "ND",
            Normalization::Mm => "MM",
            Normalization::Cm => "CM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Normalization::Nd, Normalization::Mm, Normalization::Cm]
            .into_iter()
            .find(|n| n.name().eq_ignore_ascii_case(s))
    }
}

/// When the class weights are recomputed during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Refresh {
    /// Recompute from the current class losses every epoch, with `(alpha, beta)` frozen.
    #[default]
    EveryEpoch,
    /// Keep the weights computed when `(alpha, beta)` were fitted.
    FrozenAfterFit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingConfig {
    pub normalization: Normalization,
    pub alpha_init: f64,
    pub beta_init: f64,
    pub alpha_bounds: (f64, f64),
    pub beta_bounds: (f64, f64),
    pub refresh: Refresh,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            normalization: Normalization::Nd,
            alpha_init: 1.0,
            beta_init: 1.5,
            alpha_bounds: (1e-3, 1e3),
            beta_bounds: (0.0, 2.0),
            refresh: Refresh::EveryEpoch,
        }
    }
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        let (alo, ahi) = self.alpha_bounds;
        let (blo, bhi) = self.beta_bounds;
        if !(alo > 0.0 && alo <= ahi) || !(blo >= 0.0 && blo <= bhi) {
            return Err(Error::InvalidConfig(
                "scaling bounds need 0 < alpha_lo <= alpha_hi and 0 <= beta_lo <= beta_hi",
            ));
        }
        if !(self.alpha_init >= alo && self.alpha_init <= ahi)
            || !(self.beta_init >= blo && self.beta_init <= bhi)
        {
            return Err(Error::InvalidConfig(
                "scaling initial point lies outside its bounds",
            ));
        }
        Ok(())
    }
}

/// Normalized class losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    /// Spread was zero (or fewer than two classes had samples); all values are 0.
    pub degenerate: bool,
}

/// Normalizes `values`; entries whose `counts` are zero are left out of the
/// statistics and mapped to 0. `counts = None` includes every entry.
pub fn normalize(values: &[f64], counts: Option<&[usize]>, method: Normalization) -> Normalized {
    let included = |i: usize| counts.is_none_or(|c| c[i] > 0);
    let active: Vec<f64> = (0..values.len())
        .filter(|&i| included(i))
        .map(|i| values[i])
        .collect();
    let zeros = || Normalized {
        values: vec![0.0; values.len()],
        degenerate: true,
    };
    if active.len() < 2 {
        return zeros();
    }
    let m = mean(&active);
    let min = active.iter().copied().fold(f64::INFINITY, f64::min);
    let max = active.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = active
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    if max - min <= 1e-12 * scale {
        return zeros();
    }
    let (center, spread) = match method {
        Normalization::Nd => {
            let var = active.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / active.len() as f64;
            (m, sqrt(var))
        }
        Normalization::Mm => (min, max - min),
        Normalization::Cm => (m, max - min),
    };
    let out = (0..values.len())
        .map(|i| {
            if included(i) {
                (values[i] - center) / spread
            } else {
                0.0
            }
        })
        .collect();
    Normalized {
        values: out,
        degenerate: false,
    }
}

/// `beta / (1 + exp(-x / alpha)) - beta / 2`, evaluated as `beta/2 * tanh(x / (2 alpha))`
/// so that it is exactly odd and exactly zero at `x = 0`.
pub fn sigmoid_weight(normalized_loss: f64, alpha: f64, beta: f64) -> f64 {
    0.5 * beta * tanh(normalized_loss / (2.0 * alpha))
}

/// First-order estimate of the spread of class losses after one weighted update:
/// `sqrt(sum_i (L0_i - w_i * (L1_i - L0_i) - mean(L1))^2)` with
/// `w_i = sigmoid_weight(normalize(L1)_i)`.
pub fn std_objective(l0: &[f64], l1: &[f64], alpha: f64, beta: f64, method: Normalization) -> f64 {
    let norm = normalize(l1, None, method);
    let m1 = mean(l1);
    let sum: f64 = l0
        .iter()
        .zip(l1)
        .zip(&norm.values)
        .map(|((&a, &b), &n)| {
            let r = a - sigmoid_weight(n, alpha, beta) * (b - a) - m1;
            r * r
        })
        .sum();
    sqrt(sum)
}

/// Fitted sigmoid shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
    pub objective_init: f64,
    pub objective: f64,
    /// The optimizer produced no finite evaluation; the initial point was kept.
    pub fallback: bool,
}

/// Bounded local minimization of [`std_objective`] from `(alpha_init, beta_init)`.
/// Alpha is searched on a log scale.
pub fn fit_alpha_beta(l0: &[f64], l1: &[f64], config: &ScalingConfig) -> Result<AlphaBeta> {
    config.validate()?;
    if l0.len() != l1.len() {
        return Err(Error::ShapeMismatch {
            what: "L0 vs L1",
            expected: l0.len(),
            found: l1.len(),
        });
    }
    let method = config.normalization;
    let objective_init = std_objective(l0, l1, config.alpha_init, config.beta_init, method);
    let mut f = |x: [f64; 2]| std_objective(l0, l1, libm::exp(x[0]), x[1], method);
    let bounds = [
        (log(config.alpha_bounds.0), log(config.alpha_bounds.1)),
        config.beta_bounds,
    ];
    let init = [log(config.alpha_init), config.beta_init];
    match minimize_bounded_2d(&mut f, init, bounds, &Bounded2dOptions::default()) {
        Ok(r) if r.value < objective_init => Ok(AlphaBeta {
            alpha: libm::exp(r.point[0]).clamp(config.alpha_bounds.0, config.alpha_bounds.1),
            beta: r.point[1],
            objective_init,
            objective: r.value,
            fallback: false,
        }),
        Ok(_) => Ok(AlphaBeta {
            alpha: config.alpha_init,
            beta: config.beta_init,
            objective_init,
            objective: objective_init,
            fallback: false,
        }),
        Err(_) => Ok(AlphaBeta {
            alpha: config.alpha_init,
            beta: config.beta_init,
            objective_init,
            objective: objective_init,
            fallback: true,
        }),
    }
}

/// `sum_i (1 + w_i) * L_i`.
pub fn total_loss(class_losses: &[f64], weights: &[f64]) -> Result<f64> {
    if class_losses.len() != weights.len() {
        return Err(Error::ShapeMismatch {
            what: "weights vs class losses",
            expected: class_losses.len(),
            found: weights.len(),
        });
    }
    Ok(class_losses
        .iter()
        .zip(weights)
        .map(|(l, w)| (1.0 + w) * l)
        .sum())
}

/// Everything fixed before the scaled training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingState {
    pub config: ScalingConfig,
    pub alpha: f64,
    pub beta: f64,
    pub objective_init: f64,
    pub objective: f64,
    pub fallback: bool,
    /// Class losses of the initial calibrator.
    pub l0: ClassLossVector,
    /// Class losses after one unweighted training step.
    pub l1: ClassLossVector,
    /// Weights computed from `l1`.
    pub weights: Vec<f64>,
}

impl ScalingState {
    /// Per-class weights for the given class losses under the frozen `(alpha, beta)`.
    pub fn weights_for(&self, losses: &ClassLossVector) -> Vec<f64> {
        class_weights(losses, self.config.normalization, self.alpha, self.beta)
    }

    /// State with fixed shape parameters, for tests and replays.
    pub fn with_shape(
        config: ScalingConfig,
        alpha: f64,
        beta: f64,
        l0: ClassLossVector,
        l1: ClassLossVector,
    ) -> Self {
        let weights = class_weights(&l1, config.normalization, alpha, beta);
        Self {
            config,
            alpha,
            beta,
            objective_init: f64::NAN,
            objective: f64::NAN,
            fallback: false,
            l0,
            l1,
            weights,
        }
    }
}

/// Weights of every class; classes without samples get 0.
pub fn class_weights(
    losses: &ClassLossVector,
    method: Normalization,
    alpha: f64,
    beta: f64,
) -> Vec<f64> {
    let norm = normalize(&losses.values, Some(&losses.counts), method);
    norm.values
        .iter()
        .zip(&losses.counts)
        .map(|(&n, &c)| {
            if c > 0 {
                sigmoid_weight(n, alpha, beta)
            } else {
                0.0
            }
        })
        .collect()
}

/// Records `L0`, takes one unweighted training step of the configured optimizer
/// on a copy of the calibrator, records `L1`, and fits `(alpha, beta)`.
/// The calibrator itself is not modified.
pub fn prepare_scaling(
    calibrator: &Calibrator,
    data: &LogitDataset,
    loss: &LossSpec,
    config: &ScalingConfig,
    optim: &OptimSpec,
) -> Result<ScalingState> {
    config.validate()?;
    optim.validate()?;
    let objective = TrainingObjective::new(calibrator, data, loss)?;
    let init = calibrator.params().to_vec();
    let l0 = objective.class_losses(&init);

    let mut params = init.clone();
    let mut opt = Minimizer::new(optim, params.len()).with_mask(calibrator.stage_mask(0));
    opt.step(
        0,
        &mut params,
        &mut |p: &[f64], g: &mut [f64]| objective.value_and_gradient(p, g),
        &|p: &mut [f64]| calibrator.project(p),
    );
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { epoch: 0 });
    }
    let l1 = objective.class_losses(&params);

    let l0v = l0.non_empty_values();
    let l1v = l1.non_empty_values();
    let fit = fit_alpha_beta(&l0v, &l1v, config)?;
    let weights = class_weights(&l1, config.normalization, fit.alpha, fit.beta);
    Ok(ScalingState {
        config: *config,
        alpha: fit.alpha,
        beta: fit.beta,
        objective_init: fit.objective_init,
        objective: fit.objective,
        fallback: fit.fallback,
        l0,
        l1,
        weights,
    })
}
