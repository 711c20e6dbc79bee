//! Accuracy, expected calibration error, NLL and class-loss statistics.

use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{Error, Result};
use crate::losses::{class_losses, ClassLossVector, LossSpec};
use crate::math::{argmax, mean, population_std};
use crate::matrix::Matrix;

pub const DEFAULT_BINS: usize = 15;

/// One equal-width confidence bin covering `(low, high]` (bin 0 also holds 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub low: f64,
    pub high: f64,
    pub mean_confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBins {
    pub bins: Vec<Bin>,
}

impl ReliabilityBins {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sample_count: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub ece: f64,
    /// Mean negative log-likelihood per sample.
    pub nll: f64,
    pub class_losses: ClassLossVector,
    pub class_loss_std: f64,
    pub bins: ReliabilityBins,
}

/// Index of the bin holding confidence `conf`, for `B` bins over `(b/B, (b+1)/B]`.
pub fn bin_index(conf: f64, bin_count: usize) -> usize {
    let b = bin_count as f64;
    let mut k = (libm::ceil(conf * b) as isize - 1).clamp(0, bin_count as isize - 1) as usize;
    // settle rounding in conf * B against the exact edge comparisons
    while k > 0 && conf <= k as f64 / b {
        k -= 1;
    }
    while k + 1 < bin_count && conf > (k + 1) as f64 / b {
        k += 1;
    }
    k
}

/// Evaluates probability rows against labels.
pub fn evaluate(probs: &Matrix, labels: &[u32], bin_count: usize) -> Result<EvalReport> {
    if bin_count == 0 {
        return Err(Error::InvalidConfig("bin count must be >= 1"));
    }
    if probs.rows() != labels.len() || probs.rows() == 0 {
        return Err(Error::ShapeMismatch {
            what: "probabilities vs labels",
            expected: labels.len(),
            found: probs.rows(),
        });
    }
    let n = labels.len();
    let mut conf_sum = vec![0.0; bin_count];
    let mut hit_count = vec![0usize; bin_count];
    let mut counts = vec![0usize; bin_count];
    let mut correct = 0;
    for (row, &y) in probs.iter_rows().zip(labels) {
        let pred = argmax(row);
        let conf = row[pred];
        let k = bin_index(conf, bin_count);
        counts[k] += 1;
        conf_sum[k] += conf;
        if pred == y as usize {
            hit_count[k] += 1;
            correct += 1;
        }
    }
    let mut ece = 0.0;
    let mut bins = Vec::with_capacity(bin_count);
    for k in 0..bin_count {
        let (mean_confidence, accuracy) = if counts[k] > 0 {
            let m = counts[k] as f64;
            (conf_sum[k] / m, hit_count[k] as f64 / m)
        } else {
            (0.0, 0.0)
        };
        if counts[k] > 0 {
            ece += counts[k] as f64 / n as f64 * (accuracy - mean_confidence).abs();
        }
        bins.push(Bin {
            low: k as f64 / bin_count as f64,
            high: (k + 1) as f64 / bin_count as f64,
            mean_confidence,
            accuracy,
            count: counts[k],
        });
    }
    let losses = class_losses(probs, labels, &LossSpec::default())?;
    Ok(EvalReport {
        sample_count: n,
        correct,
        accuracy: correct as f64 / n as f64,
        ece,
        nll: losses.total() / n as f64,
        class_loss_std: population_std(&losses.values),
        class_losses: losses,
        bins: ReliabilityBins { bins },
    })
}

/// Population standard deviation of class-wise losses.
pub fn class_loss_std(losses: &ClassLossVector) -> f64 {
    population_std(&losses.values)
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            what: "correlation series",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidConfig("correlation needs at least 2 points"));
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / sqrt(saa * sbb)).clamp(-1.0, 1.0))
}
