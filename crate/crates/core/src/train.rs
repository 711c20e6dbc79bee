//! Full-batch training of a calibrator on held-out logits.

use alloc::vec;
use alloc::vec::Vec;

use crate::calibrators::Calibrator;
use crate::dataset::LogitDataset;
use crate::error::{Error, Result};
use crate::losses::{sample_loss_and_grad, ClassLossVector, LossKind, LossSpec};
use crate::math::population_std;
use crate::matrix::Matrix;
use crate::optim::{Minimizer, OptimSpec};
use crate::scaling::{prepare_scaling, Refresh, ScalingConfig, ScalingState};

/// `sum_i coef_i * L_i(params)` over a fixed dataset, with its gradient.
pub struct TrainingObjective<'a> {
    calibrator: &'a Calibrator,
    logits: Matrix,
    labels: Vec<u32>,
    counts: Vec<usize>,
    loss: LossSpec,
    coef: Vec<f64>,
}

/// Losses observed at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Weighted training objective.
    pub objective: f64,
    /// Unweighted class losses under the training loss.
    pub class_losses: ClassLossVector,
    /// Class-wise negative log-likelihood, comparable across loss kinds.
    pub class_nll: Vec<f64>,
}

impl<'a> TrainingObjective<'a> {
    pub fn new(calibrator: &'a Calibrator, data: &LogitDataset, loss: &LossSpec) -> Result<Self> {
        loss.validate()?;
        if data.class_count() != calibrator.classes() {
            return Err(Error::ShapeMismatch {
                what: "dataset classes vs calibrator classes",
                expected: calibrator.classes(),
                found: data.class_count(),
            });
        }
        Ok(Self {
            calibrator,
            logits: data.logits_f64(),
            labels: data.labels().to_vec(),
            counts: data.class_counts(),
            loss: *loss,
            coef: vec![1.0; data.class_count()],
        })
    }

    /// Per-class multipliers on the class losses.
    pub fn set_coefficients(&mut self, coef: &[f64]) {
        self.coef.copy_from_slice(coef);
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.counts
    }

    fn pass(&self, params: &[f64], mut grad: Option<&mut [f64]>) -> Evaluation {
        let c = self.logits.cols();
        let mut ws = self.calibrator.workspace();
        self.calibrator.prepare(params, &mut ws);
        let mut out = vec![0.0; c];
        let mut probs = vec![0.0; c];
        let mut gout = vec![0.0; c];
        let mut values = vec![0.0; c];
        let mut nll = vec![0.0; c];
        let mut clamped = 0;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        for (i, &y) in self.labels.iter().enumerate() {
            let y = y as usize;
            let z = self.logits.row(i);
            self.calibrator.forward_row(params, z, &mut out, &mut ws);
            let l = sample_loss_and_grad(&out, y, &self.loss, &mut probs, &mut gout, &mut clamped);
            values[y] += l;
            nll[y] += if self.loss.kind == LossKind::Ce {
                l
            } else {
                let mut scratch = 0;
                crate::losses::ce_from_logits(&out, y, &mut scratch)
            };
            if let Some(g) = grad.as_deref_mut() {
                let mut m = self.coef[y];
                if self.loss.per_class_mean {
                    m /= self.counts[y] as f64;
                }
                if m != 0.0 {
                    for v in gout.iter_mut() {
                        *v *= m;
                    }
                    self.calibrator
                        .backward_row(params, z, &out, &gout, g, &mut ws);
                }
            }
        }
        if self.loss.per_class_mean {
            for ((v, n), &k) in values.iter_mut().zip(nll.iter_mut()).zip(&self.counts) {
                if k > 0 {
                    *v /= k as f64;
                    *n /= k as f64;
                }
            }
        }
        let objective = values.iter().zip(&self.coef).map(|(v, c)| v * c).sum();
        Evaluation {
            objective,
            class_losses: ClassLossVector {
                values,
                counts: self.counts.clone(),
                clamped,
            },
            class_nll: nll,
        }
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        self.pass(params, None).objective
    }

    pub fn value_and_gradient(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        self.pass(params, Some(grad)).objective
    }

    pub fn evaluate(&self, params: &[f64]) -> Evaluation {
        self.pass(params, None)
    }

    pub fn class_losses(&self, params: &[f64]) -> ClassLossVector {
        self.pass(params, None).class_losses
    }
}

/// Gradient of the training loss with respect to the calibrator's raw parameters.
/// With a scaling state the loss is `sum_i (1 + w_i) L_i` using the state's weights.
pub fn loss_gradient(
    calibrator: &Calibrator,
    data: &LogitDataset,
    loss: &LossSpec,
    scaling: Option<&ScalingState>,
) -> Result<Vec<f64>> {
    let mut objective = TrainingObjective::new(calibrator, data, loss)?;
    if let Some(s) = scaling {
        let coef: Vec<f64> = s.weights.iter().map(|w| 1.0 + w).collect();
        objective.set_coefficients(&coef);
    }
    let mut grad = vec![0.0; calibrator.params().len()];
    objective.value_and_gradient(calibrator.params(), &mut grad);
    Ok(grad)
}

/// What to train and how.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub loss: LossSpec,
    pub scaling: Option<ScalingConfig>,
    pub optim: OptimSpec,
    /// Train on these classes' losses only.
    pub class_subset: Option<Vec<usize>>,
}

impl FitConfig {
    pub fn new(loss: LossSpec, optim: OptimSpec) -> Self {
        Self {
            loss,
            scaling: None,
            optim,
            class_subset: None,
        }
    }
}

/// State of the calibrator at the start of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// Global epoch index across stages; the last record holds the final state.
    pub epoch: usize,
    pub stage: usize,
    pub learning_rate: f64,
    pub objective: f64,
    pub nll_total: f64,
    pub class_nll: Vec<f64>,
    pub class_nll_std: f64,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub records: Vec<EpochRecord>,
    pub scaling: Option<ScalingState>,
    /// Epoch at which a non-finite loss or parameter appeared; the calibrator
    /// keeps the last finite parameters.
    pub diverged: Option<usize>,
    pub clamped: usize,
}

impl FitTrace {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Trains `calibrator` in place. See [`fit_observed`].
pub fn fit(
    calibrator: &mut Calibrator,
    data: &LogitDataset,
    config: &FitConfig,
) -> Result<FitTrace> {
    fit_observed(calibrator, data, config, &mut |_, _| {})
}

/// Trains `calibrator` in place, calling `observer` with each epoch record and
/// the parameters it describes.
///
/// ETS trains in two stages (temperature, then weights), each for the full
/// epoch budget. With scaling on, `(alpha, beta)` are fitted first by
/// [`prepare_scaling`] and stay frozen.
pub fn fit_observed(
    calibrator: &mut Calibrator,
    data: &LogitDataset,
    config: &FitConfig,
    observer: &mut dyn FnMut(&EpochRecord, &[f64]),
) -> Result<FitTrace> {
    config.optim.validate()?;
    let c = calibrator.classes();
    let mut base = vec![1.0; c];
    if let Some(subset) = &config.class_subset {
        if subset.is_empty() || subset.iter().any(|&i| i >= c) {
            return Err(Error::InvalidConfig(
                "class subset must be non-empty valid class indices",
            ));
        }
        base = vec![0.0; c];
        for &i in subset {
            base[i] = 1.0;
        }
    }
    let state = match &config.scaling {
        Some(sc) => Some(prepare_scaling(
            calibrator,
            data,
            &config.loss,
            sc,
            &config.optim,
        )?),
        None => None,
    };

    let template = calibrator.clone();
    let mut objective = TrainingObjective::new(&template, data, &config.loss)?;
    let mut params = calibrator.params().to_vec();
    let epochs = config.optim.epochs;
    let mut records = Vec::with_capacity(epochs * template.stages() + 1);
    let mut clamped = 0;
    let mut diverged = None;
    let mut coef = base.clone();

    let mut record = |epoch: usize,
                      stage: usize,
                      lr: f64,
                      objective: f64,
                      eval: &Evaluation,
                      weights: Option<Vec<f64>>,
                      params: &[f64],
                      records: &mut Vec<EpochRecord>| {
        let rec = EpochRecord {
            epoch,
            stage,
            learning_rate: lr,
            objective,
            nll_total: eval.class_nll.iter().sum(),
            class_nll_std: population_std(&eval.class_nll),
            class_nll: eval.class_nll.clone(),
            weights,
        };
        observer(&rec, params);
        records.push(rec);
    };
    // Class losses do not depend on the coefficients, so one pass yields both
    // the refreshed weights and the weighted objective.
    let weigh = |global: usize, eval: &Evaluation, coef: &mut Vec<f64>| {
        let weights = state.as_ref().map(|s| match s.config.refresh {
            Refresh::EveryEpoch if global > 0 => s.weights_for(&eval.class_losses),
            _ => s.weights.clone(),
        });
        for i in 0..c {
            coef[i] = base[i] * (1.0 + weights.as_ref().map_or(0.0, |w| w[i]));
        }
        let value: f64 = eval
            .class_losses
            .values
            .iter()
            .zip(coef.iter())
            .map(|(v, k)| v * k)
            .sum();
        (weights, value)
    };

    'stages: for stage in 0..template.stages() {
        let mut opt =
            Minimizer::new(&config.optim, params.len()).with_mask(template.stage_mask(stage));
        for e in 0..epochs {
            let global = stage * epochs + e;
            let eval = objective.evaluate(&params);
            clamped += eval.class_losses.clamped;
            let (weights, value) = weigh(global, &eval, &mut coef);
            objective.set_coefficients(&coef);
            if !value.is_finite() {
                diverged = Some(global);
                break 'stages;
            }
            record(
                global,
                stage,
                config.optim.rate_at(e),
                value,
                &eval,
                weights,
                &params,
                &mut records,
            );

            let before = params.clone();
            opt.step(
                e,
                &mut params,
                &mut |p: &[f64], g: &mut [f64]| objective.value_and_gradient(p, g),
                &|p: &mut [f64]| template.project(p),
            );
            if params.iter().any(|v| !v.is_finite()) {
                params = before;
                diverged = Some(global);
                break 'stages;
            }
        }
    }

    if diverged.is_none() {
        let stage = template.stages() - 1;
        let global = epochs * template.stages();
        let eval = objective.evaluate(&params);
        let (weights, value) = weigh(global.max(1), &eval, &mut coef);
        if value.is_finite() {
            let lr = config.optim.rate_at(epochs.saturating_sub(1));
            record(
                global,
                stage,
                lr,
                value,
                &eval,
                weights,
                &params,
                &mut records,
            );
        } else {
            diverged = Some(global);
        }
    }

    drop(objective);
    calibrator.set_params(&params)?;
    calibrator.set_fitted(true);
    Ok(FitTrace {
        records,
        scaling: state,
        diverged,
        clamped,
    })
}
