//! Logit datasets and the ways the toolkit builds them: synthetic generation,
//! long-tailed subsampling and stratified validation/test splitting.
//!
//! Logits are stored as `f32`, the precision of the binary file format, so a
//! save/load cycle is bit-exact. All arithmetic downstream happens in `f64`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// `N x C` raw logits with one integer label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitDataset {
    classes: usize,
    logits: Vec<f32>,
    labels: Vec<u32>,
}

impl LogitDataset {
    /// Validates and wraps row-major logits and labels.
    pub fn new(logits: Vec<f32>, labels: Vec<u32>, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidConfig("a dataset needs at least 2 classes"));
        }
        if labels.is_empty() {
            return Err(Error::InvalidConfig("a dataset needs at least 1 sample"));
        }
        if logits.len() != labels.len() * classes {
            return Err(Error::ShapeMismatch {
                what: "logits vs labels",
                expected: labels.len() * classes,
                found: logits.len(),
            });
        }
        for (row, &label) in labels.iter().enumerate() {
            if label as usize >= classes {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    classes,
                });
            }
        }
        if let Some(k) = logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / classes,
                col: k % classes,
            });
        }
        Ok(Self {
            classes,
            logits,
            labels,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.labels.len()
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn logits(&self) -> &[f32] {
        &self.logits
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.logits[i * self.classes..(i + 1) * self.classes]
    }

    /// Logits widened to `f64`.
    pub fn logits_f64(&self) -> Matrix {
        let data = self.logits.iter().map(|&v| v as f64).collect();
        Matrix::from_vec(self.sample_count(), self.classes, data).expect("validated shape")
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        counts
    }

    /// Classes with no samples. Their losses are excluded from normalization statistics.
    pub fn empty_classes(&self) -> Vec<usize> {
        self.class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == 0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Row indices grouped by label.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.classes];
        for (i, &y) in self.labels.iter().enumerate() {
            groups[y as usize].push(i);
        }
        groups
    }

    /// New dataset holding the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let mut logits = Vec::with_capacity(rows.len() * self.classes);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            logits.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        Self::new(logits, labels, self.classes)
    }

    /// Multiplies every logit by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        let logits = self.logits.iter().map(|&v| v * factor).collect();
        Self::new(logits, self.labels.clone(), self.classes)
    }

    /// Multiplies each row by the factor of its true class.
    pub fn scaled_per_class(&self, factors: &[f32]) -> Result<Self> {
        if factors.len() != self.classes {
            return Err(Error::ShapeMismatch {
                what: "per-class factors",
                expected: self.classes,
                found: factors.len(),
            });
        }
        let mut logits = self.logits.clone();
        for (i, &y) in self.labels.iter().enumerate() {
            let f = factors[y as usize];
            for v in &mut logits[i * self.classes..(i + 1) * self.classes] {
                *v *= f;
            }
        }
        Self::new(logits, self.labels.clone(), self.classes)
    }
}

/// Parameters of the synthetic logit generator.
///
/// A sample of class `i` gets `scale_i * (margin_i * e_i + noise)` with
/// `noise ~ N(0, noise_std^2)` per coordinate, where
/// `scale_i = overconfidence_scale * class_scale[i]`. With
/// `margin == noise_std^2` and unit scale the logits are the exact Bayes
/// log-posterior up to a per-row constant, i.e. perfectly calibrated.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub samples_per_class: Vec<usize>,
    pub class_mean_margin: Vec<f64>,
    pub overconfidence_scale: f64,
    /// Extra per-class multiplier on top of `overconfidence_scale`; empty means all ones.
    pub class_scale: Vec<f64>,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Balanced spec with a shared margin.
    pub fn balanced(
        class_count: usize,
        per_class: usize,
        margin: f64,
        noise_std: f64,
        seed: u64,
    ) -> Self {
        Self {
            class_count,
            samples_per_class: vec![per_class; class_count],
            class_mean_margin: vec![margin; class_count],
            overconfidence_scale: 1.0,
            class_scale: Vec::new(),
            noise_std,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::InvalidConfig("synthetic class_count must be >= 2"));
        }
        if self.samples_per_class.len() != self.class_count {
            return Err(Error::ShapeMismatch {
                what: "samples_per_class",
                expected: self.class_count,
                found: self.samples_per_class.len(),
            });
        }
        if self.class_mean_margin.len() != self.class_count {
            return Err(Error::ShapeMismatch {
                what: "class_mean_margin",
                expected: self.class_count,
                found: self.class_mean_margin.len(),
            });
        }
        if !self.class_scale.is_empty() && self.class_scale.len() != self.class_count {
            return Err(Error::ShapeMismatch {
                what: "class_scale",
                expected: self.class_count,
                found: self.class_scale.len(),
            });
        }
        if !(self.overconfidence_scale > 0.0) || self.class_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidConfig("overconfidence scale must be > 0"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig("noise_std must be >= 0"));
        }
        if self.samples_per_class.iter().sum::<usize>() == 0 {
            return Err(Error::InvalidConfig("synthetic dataset would be empty"));
        }
        Ok(())
    }
}

/// Draws a synthetic dataset. Rows are ordered by class, deterministic in `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<LogitDataset> {
    spec.validate()?;
    let c = spec.class_count;
    let n: usize = spec.samples_per_class.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut logits = Vec::with_capacity(n * c);
    let mut labels = Vec::with_capacity(n);
    for (class, &count) in spec.samples_per_class.iter().enumerate() {
        let scale = spec.overconfidence_scale * spec.class_scale.get(class).copied().unwrap_or(1.0);
        for _ in 0..count {
            for k in 0..c {
                let z: f64 = StandardNormal.sample(&mut rng);
                let base = if k == class {
                    spec.class_mean_margin[class]
                } else {
                    0.0
                };
                logits.push((scale * (base + spec.noise_std * z)) as f32);
            }
            labels.push(class as u32);
        }
    }
    LogitDataset::new(logits, labels, c)
}

/// Rounding applied to the long-tailed per-class targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    Floor,
    Round,
    Ceil,
}

impl Rounding {
    fn apply(self, x: f64) -> f64 {
        match self {
            Rounding::Floor => libm::floor(x),
            Rounding::Round => libm::round(x),
            Rounding::Ceil => libm::ceil(x),
        }
    }
}

/// Long-tailed subsampling: class `i` keeps `round(base_count * rho^(i/(c-1)))` samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtSpec {
    pub base_count: usize,
    pub rho: f64,
    pub class_count: usize,
    pub rounding: Rounding,
    pub seed: u64,
}

impl LtSpec {
    /// Floor rounding; at rho = 0.1 it gives 20431 rows for (5000, 10 classes) and 19573 for (500, 100 classes).
    pub fn new(base_count: usize, rho: f64, class_count: usize, seed: u64) -> Self {
        Self {
            base_count,
            rho,
            class_count,
            rounding: Rounding::Floor,
            seed,
        }
    }

    /// Per-class target counts `t_i`.
    pub fn counts(&self) -> Result<Vec<usize>> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidConfig("rho must lie in (0, 1]"));
        }
        if self.class_count < 2 {
            return Err(Error::InvalidConfig(
                "long-tailed split needs at least 2 classes",
            ));
        }
        let last = (self.class_count - 1) as f64;
        let counts: Vec<usize> = (0..self.class_count)
            .map(|i| {
                let t = self.base_count as f64 * libm::pow(self.rho, i as f64 / last);
                self.rounding.apply(t) as usize
            })
            .collect();
        if counts.contains(&0) {
            return Err(Error::InvalidConfig("long-tailed target count rounds to 0"));
        }
        Ok(counts)
    }
}

/// Keeps exactly `t_i` randomly chosen samples of every class, in original row order.
pub fn make_lt_split(dataset: &LogitDataset, spec: &LtSpec) -> Result<LogitDataset> {
    if spec.class_count != dataset.class_count() {
        return Err(Error::ShapeMismatch {
            what: "long-tailed class count",
            expected: dataset.class_count(),
            found: spec.class_count,
        });
    }
    let targets = spec.counts()?;
    let mut groups = dataset.class_indices();
    for (class, (group, &t)) in groups.iter().zip(&targets).enumerate() {
        if group.len() < t {
            return Err(Error::InsufficientSamples {
                class,
                available: group.len(),
                required: t,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut keep = Vec::with_capacity(targets.iter().sum());
    for (group, &t) in groups.iter_mut().zip(&targets) {
        group.shuffle(&mut rng);
        keep.extend_from_slice(&group[..t]);
    }
    keep.sort_unstable();
    dataset.select(&keep)
}

/// Two disjoint parts of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub first: LogitDataset,
    pub second: LogitDataset,
    /// False when some class had a single sample and a global shuffle was used instead.
    pub stratified: bool,
}

/// Splits `dataset` so that `first` receives `round(N * fraction)` rows.
///
/// Each class contributes `floor(n_i * fraction)` rows plus one extra for the
/// classes with the largest remainders until the total matches. A class with a
/// single sample forces a global (unstratified) shuffle.
pub fn split(dataset: &LogitDataset, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig("split fraction must lie in (0, 1)"));
    }
    let n = dataset.sample_count();
    if n < 2 {
        return Err(Error::InvalidConfig("cannot split fewer than 2 samples"));
    }
    let target = (libm::round(n as f64 * fraction) as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = dataset.class_indices();
    let stratified = groups.iter().all(|g| g.len() != 1);

    let mut first = Vec::with_capacity(target);
    let mut second = Vec::with_capacity(n - target);
    if stratified {
        let mut take: Vec<usize> = groups
            .iter()
            .map(|g| libm::floor(g.len() as f64 * fraction) as usize)
            .collect();
        let mut order: Vec<usize> = (0..groups.len()).collect();
        let remainder = |i: usize| groups[i].len() as f64 * fraction - take[i] as f64;
        order.sort_by(|&a, &b| {
            remainder(b)
                .partial_cmp(&remainder(a))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut missing = target.saturating_sub(take.iter().sum());
        for &i in order.iter().cycle().take(groups.len() * 2) {
            if missing == 0 {
                break;
            }
            if take[i] < groups[i].len() {
                take[i] += 1;
                missing -= 1;
            }
        }
        for (group, &t) in groups.iter_mut().zip(&take) {
            group.shuffle(&mut rng);
            first.extend_from_slice(&group[..t]);
            second.extend_from_slice(&group[t..]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        first.extend_from_slice(&all[..target]);
        second.extend_from_slice(&all[target..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok(Split {
        first: dataset.select(&first)?,
        second: dataset.select(&second)?,
        stratified,
    })
}
