//! End-to-end runs: calibrate, evaluate, sweeps and the class-subset analysis.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lossscale_core::math::{mean, population_std};
use lossscale_core::{
    correlation, evaluate, fit, fit_observed, probabilities, select_top_k_classes, Calibrator,
    CalibratorKind, EvalReport, FitConfig, FitTrace, LogitDataset, LossKind, LossSpec, OptimSpec,
    PtsArch, ScalingConfig, Schedule, TrainingObjective,
};
use rayon::prelude::*;

use crate::calfile::write_calibrator;
use crate::error::{Error, Phase, Result};
use crate::io::{read_dataset, write_dataset, write_file, Format};
use crate::report::{bins_table, eval_doc, scaling_doc, trace_table, KvDoc};

/// Training recipe of one sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ce,
    Ls,
    Fl,
    /// Cross-entropy with class-wise loss scaling.
    Ours,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ce, Method::Ls, Method::Fl, Method::Ours];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ce => "CE",
            Method::Ls => "LS",
            Method::Fl => "FL",
            Method::Ours => "Ours",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }

    pub fn loss_kind(self) -> LossKind {
        match self {
            Method::Ce | Method::Ours => LossKind::Ce,
            Method::Ls => LossKind::Ls,
            Method::Fl => LossKind::Fl,
        }
    }

    pub fn scaled(self) -> bool {
        self == Method::Ours
    }
}

/// Optimizer used when none is given: first-order with weight decay for PTS,
/// the scheduled first-order recipe for LS/FL, quasi-Newton otherwise.
pub fn default_optim(kind: CalibratorKind, loss: LossKind) -> OptimSpec {
    if kind == CalibratorKind::Pts {
        return OptimSpec {
            weight_decay: 0.002,
            ..OptimSpec::first_order()
        };
    }
    match loss {
        LossKind::Ls | LossKind::Fl => {
            let schedule = Schedule::smoothing_default();
            OptimSpec {
                learning_rate: schedule.rate_at(0),
                epochs: schedule.total_epochs(),
                schedule: Some(schedule),
                ..OptimSpec::first_order()
            }
        }
        LossKind::Ce => OptimSpec::default(),
    }
}

/// Optimizer settings given explicitly; the rest come from [`default_optim`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimOverrides {
    pub method: Option<lossscale_core::Method>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub weight_decay: Option<f64>,
    pub schedule: Option<Schedule>,
}

impl OptimOverrides {
    /// An explicit schedule sets the epoch count; an explicit epoch count or
    /// learning rate without one drops the default schedule.
    pub fn apply(&self, mut spec: OptimSpec) -> OptimSpec {
        if let Some(m) = self.method {
            spec.method = m;
        }
        if let Some(wd) = self.weight_decay {
            spec.weight_decay = wd;
        }
        match &self.schedule {
            Some(s) => {
                spec.epochs = s.total_epochs();
                spec.learning_rate = s.rate_at(0);
                spec.schedule = Some(s.clone());
            }
            None if self.epochs.is_some() || self.learning_rate.is_some() => spec.schedule = None,
            None => {}
        }
        if let Some(e) = self.epochs {
            spec.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            spec.learning_rate = lr;
        }
        spec
    }
}

/// Everything that defines one calibration fit, independent of files.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub kind: CalibratorKind,
    pub arch: Option<PtsArch>,
    pub ets_sum_to_one: bool,
    pub loss: LossSpec,
    pub scaling: Option<ScalingConfig>,
    pub optim: OptimSpec,
}

impl CellSpec {
    pub fn new(kind: CalibratorKind, loss: LossSpec, scaling: Option<ScalingConfig>) -> Self {
        Self {
            kind,
            arch: None,
            ets_sum_to_one: false,
            loss,
            scaling,
            optim: default_optim(kind, loss.kind),
        }
    }

    /// Fresh calibrator; `seed` drives the PTS initialization.
    pub fn calibrator(&self, classes: usize, seed: u64) -> lossscale_core::Result<Calibrator> {
        let mut cal = match self.kind {
            CalibratorKind::Pts => Calibrator::pts(
                classes,
                self.arch.unwrap_or(PtsArch::default_for(classes)),
                seed,
            )?,
            kind => Calibrator::new(kind, classes)?,
        };
        cal.set_ets_sum_to_one(self.ets_sum_to_one);
        Ok(cal)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub calibrator: Calibrator,
    pub before: EvalReport,
    pub after: EvalReport,
    pub trace: FitTrace,
    /// Calibrated test logits, narrowed to `f32`.
    pub calibrated: LogitDataset,
}

pub fn eval_logits(data: &LogitDataset, bins: usize) -> lossscale_core::Result<EvalReport> {
    evaluate(&probabilities(&data.logits_f64()), data.labels(), bins)
}

fn narrow(matrix: &lossscale_core::Matrix, labels: &[u32]) -> lossscale_core::Result<LogitDataset> {
    let logits = matrix.as_slice().iter().map(|&v| v as f32).collect();
    LogitDataset::new(logits, labels.to_vec(), matrix.cols())
}

/// Fits on `val`, evaluates on `test`. A diverged fit is returned as is; the
/// caller decides what to do with its trace.
pub fn calibrate(
    val: &LogitDataset,
    test: &LogitDataset,
    spec: &CellSpec,
    seed: u64,
    bins: usize,
) -> Result<Outcome> {
    if val.class_count() != test.class_count() {
        return Err(Error::Config(format!(
            "validation has {} classes but test has {}",
            val.class_count(),
            test.class_count()
        )));
    }
    let mut calibrator = spec.calibrator(val.class_count(), seed).phase("setup")?;
    let config = FitConfig {
        loss: spec.loss,
        scaling: spec.scaling,
        optim: OptimSpec {
            seed,
            ..spec.optim.clone()
        },
        class_subset: None,
    };
    let trace = fit(&mut calibrator, val, &config).phase("fit")?;
    let before = eval_logits(test, bins).phase("evaluate")?;
    let logits = calibrator.apply_dataset(test).phase("apply")?;
    let after = evaluate(&probabilities(&logits), test.labels(), bins).phase("evaluate")?;
    let calibrated = narrow(&logits, test.labels()).phase("apply")?;
    Ok(Outcome {
        calibrator,
        before,
        after,
        trace,
        calibrated,
    })
}

/// Files and settings of a `calibrate` run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub val: PathBuf,
    pub test: PathBuf,
    pub cell: CellSpec,
    pub bins: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub format: Format,
}

fn require_file(path: &Path) -> Result<()> {
    std::fs::metadata(path)
        .map(|_| ())
        .map_err(|e| Error::io(path, e))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bin count must be >= 1".into()));
        }
        self.cell.optim.validate().phase("config")?;
        self.cell.loss.validate().phase("config")?;
        if let Some(s) = &self.cell.scaling {
            s.validate().phase("config")?;
        }
        for path in self.train.iter().chain([&self.val, &self.test]) {
            require_file(path)?;
        }
        Ok(())
    }

    fn seed_dir(&self, seed: u64) -> PathBuf {
        if self.seeds.len() == 1 {
            self.out.clone()
        } else {
            self.out.join(format!("seed-{seed}"))
        }
    }
}

/// Writes every artifact of one fit into `dir`.
pub fn write_outcome(outcome: &Outcome, dir: &Path, format: Format) -> Result<()> {
    write_calibrator(&outcome.calibrator, &dir.join("calibrator.txt"))?;
    write_file(
        &dir.join("report_uncalibrated.txt"),
        eval_doc(&outcome.before).render().as_bytes(),
    )?;
    write_file(
        &dir.join("report_calibrated.txt"),
        eval_doc(&outcome.after).render().as_bytes(),
    )?;
    write_file(
        &dir.join("bins_uncalibrated.csv"),
        bins_table(&outcome.before).as_bytes(),
    )?;
    write_file(
        &dir.join("bins_calibrated.csv"),
        bins_table(&outcome.after).as_bytes(),
    )?;
    write_file(
        &dir.join("trace.csv"),
        trace_table(&outcome.trace, None).as_bytes(),
    )?;
    if let Some(s) = &outcome.trace.scaling {
        write_file(&dir.join("scaling.txt"), scaling_doc(s).render().as_bytes())?;
    }
    write_dataset(
        &outcome.calibrated,
        &dir.join(format!("calibrated_test.{}", format.extension())),
        format,
    )
}

/// Runs one fit per seed and writes its artifacts. With several seeds each
/// goes to its own `seed-<n>` directory.
pub fn run_calibrate(config: &RunConfig) -> Result<Vec<Outcome>> {
    config.validate()?;
    let val = read_dataset(&config.val, None)?;
    let test = read_dataset(&config.test, None)?;
    let train = config
        .train
        .as_deref()
        .map(|p| read_dataset(p, None))
        .transpose()?;
    let mut outcomes = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let dir = config.seed_dir(seed);
        let outcome = calibrate(&val, &test, &config.cell, seed, config.bins)?;
        if let Some(epoch) = outcome.trace.diverged {
            write_file(
                &dir.join("trace.csv"),
                trace_table(&outcome.trace, None).as_bytes(),
            )?;
            return Err(Error::Diverged {
                phase: "fit",
                epoch,
            });
        }
        write_outcome(&outcome, &dir, config.format)?;
        if let Some(train) = &train {
            let logits = outcome.calibrator.apply_dataset(train).phase("apply")?;
            let report =
                evaluate(&probabilities(&logits), train.labels(), config.bins).phase("evaluate")?;
            write_file(
                &dir.join("report_train.txt"),
                eval_doc(&report).render().as_bytes(),
            )?;
        }
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Evaluates logits, optionally through a saved calibrator, and writes
/// `report.txt` and `bins.csv` into `out`.
pub fn run_evaluate(
    logits: &Path,
    calibrator: Option<&Path>,
    bins: usize,
    out: &Path,
) -> Result<EvalReport> {
    if bins == 0 {
        return Err(Error::Config("bin count must be >= 1".into()));
    }
    let data = read_dataset(logits, None)?;
    let report = match calibrator {
        Some(path) => {
            let cal = crate::calfile::read_calibrator(path)?;
            let z = cal.apply_dataset(&data).phase("apply")?;
            evaluate(&probabilities(&z), data.labels(), bins).phase("evaluate")?
        }
        None => eval_logits(&data, bins).phase("evaluate")?,
    };
    write_file(
        &out.join("report.txt"),
        eval_doc(&report).render().as_bytes(),
    )?;
    write_file(&out.join("bins.csv"), bins_table(&report).as_bytes())?;
    Ok(report)
}

/// Grid of a sweep: every method × calibrator × seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub kinds: Vec<CalibratorKind>,
    pub seeds: Vec<u64>,
    pub arch: Option<PtsArch>,
    pub ls_alpha: f64,
    pub fl_gamma: f64,
    pub scaling: ScalingConfig,
    /// Applied on top of each cell's default optimizer.
    pub optim: OptimOverrides,
    pub bins: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.kinds.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "a sweep needs methods, calibrators and seeds".into(),
            ));
        }
        if self.bins == 0 {
            return Err(Error::Config("bin count must be >= 1".into()));
        }
        self.scaling.validate().phase("config")?;
        for m in &self.methods {
            self.loss(*m).validate().phase("config")?;
            for k in &self.kinds {
                self.cell(*m, *k).optim.validate().phase("config")?;
            }
        }
        Ok(())
    }

    fn loss(&self, method: Method) -> LossSpec {
        LossSpec {
            ls_alpha: self.ls_alpha,
            fl_gamma: self.fl_gamma,
            ..LossSpec::new(method.loss_kind())
        }
    }

    pub fn cell(&self, method: Method, kind: CalibratorKind) -> CellSpec {
        let loss = self.loss(method);
        let mut cell = CellSpec::new(kind, loss, method.scaled().then_some(self.scaling));
        cell.arch = self.arch;
        cell.optim = self.optim.apply(cell.optim);
        cell
    }
}

/// What a sweep keeps of one successful fit.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub before: EvalReport,
    pub after: EvalReport,
    pub final_objective: f64,
    pub final_class_nll_std: f64,
    pub epochs: usize,
    /// `(alpha, beta, fallback)` when scaling was on.
    pub scaling: Option<(f64, f64, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub method: Method,
    pub kind: CalibratorKind,
    pub seed: u64,
    pub result: std::result::Result<CellSummary, String>,
}

/// Mean and population std over the successful seeds of one (method, calibrator) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub kind: CalibratorKind,
    pub succeeded: usize,
    pub failed: usize,
    pub ece_mean: f64,
    pub ece_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    /// Against the CE row of the same calibrator, when present.
    pub ece_delta: Option<f64>,
    pub accuracy_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub aggregates: Vec<Aggregate>,
}

fn summarize(outcome: Outcome) -> std::result::Result<CellSummary, String> {
    if let Some(epoch) = outcome.trace.diverged {
        return Err(format!("training diverged at epoch {epoch}"));
    }
    let last = outcome.trace.last().ok_or("empty trace")?;
    Ok(CellSummary {
        final_objective: last.objective,
        final_class_nll_std: last.class_nll_std,
        epochs: last.epoch,
        scaling: outcome
            .trace
            .scaling
            .as_ref()
            .map(|s| (s.alpha, s.beta, s.fallback)),
        before: outcome.before,
        after: outcome.after,
    })
}

/// Runs the grid in parallel; a failing cell is recorded and the rest continue.
pub fn sweep(val: &LogitDataset, test: &LogitDataset, config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let mut grid = Vec::new();
    for &method in &config.methods {
        for &kind in &config.kinds {
            for &seed in &config.seeds {
                grid.push((method, kind, seed));
            }
        }
    }
    let cells: Vec<SweepCell> = grid
        .into_par_iter()
        .map(|(method, kind, seed)| {
            let spec = config.cell(method, kind);
            let result = calibrate(val, test, &spec, seed, config.bins)
                .map_err(|e| e.to_string())
                .and_then(summarize);
            SweepCell {
                method,
                kind,
                seed,
                result,
            }
        })
        .collect();
    let aggregates = aggregate(&cells, &config.methods, &config.kinds);
    Ok(SweepResult { cells, aggregates })
}

pub fn aggregate(
    cells: &[SweepCell],
    methods: &[Method],
    kinds: &[CalibratorKind],
) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    for &method in methods {
        for &kind in kinds {
            let group: Vec<&SweepCell> = cells
                .iter()
                .filter(|c| c.method == method && c.kind == kind)
                .collect();
            let ok: Vec<&CellSummary> = group
                .iter()
                .filter_map(|c| c.result.as_ref().ok())
                .collect();
            let ece: Vec<f64> = ok.iter().map(|s| s.after.ece).collect();
            let acc: Vec<f64> = ok.iter().map(|s| s.after.accuracy).collect();
            let stat = |v: &[f64], f: fn(&[f64]) -> f64| if v.is_empty() { f64::NAN } else { f(v) };
            out.push(Aggregate {
                method,
                kind,
                succeeded: ok.len(),
                failed: group.len() - ok.len(),
                ece_mean: stat(&ece, mean),
                ece_std: stat(&ece, population_std),
                accuracy_mean: stat(&acc, mean),
                accuracy_std: stat(&acc, population_std),
                ece_delta: None,
                accuracy_delta: None,
            });
        }
    }
    let baselines: Vec<(CalibratorKind, f64, f64)> = out
        .iter()
        .filter(|a| a.method == Method::Ce)
        .map(|a| (a.kind, a.ece_mean, a.accuracy_mean))
        .collect();
    for a in &mut out {
        if let Some(&(_, ece, acc)) = baselines.iter().find(|b| b.0 == a.kind) {
            a.ece_delta = Some(a.ece_mean - ece);
            a.accuracy_delta = Some(a.accuracy_mean - acc);
        }
    }
    out
}

fn signed(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |d| format!("{:+.2}", 100.0 * d))
}

/// `ECE (Accuracy)` in percent per method and calibrator, each row followed by
/// its change against the CE row.
pub fn sweep_table(result: &SweepResult, methods: &[Method], kinds: &[CalibratorKind]) -> String {
    let mut out = String::from("method");
    for k in kinds {
        write!(out, "\t{}", k.name()).unwrap();
    }
    out.push('\n');
    for &m in methods {
        let row: Vec<&Aggregate> = kinds
            .iter()
            .filter_map(|&k| {
                result
                    .aggregates
                    .iter()
                    .find(|a| a.method == m && a.kind == k)
            })
            .collect();
        out.push_str(m.name());
        for a in &row {
            write!(
                out,
                "\t{:.2} ({:.2})",
                100.0 * a.ece_mean,
                100.0 * a.accuracy_mean
            )
            .unwrap();
        }
        out.push('\n');
        out.push_str("  delta");
        for a in &row {
            write!(
                out,
                "\t{} ({})",
                signed(a.ece_delta),
                signed(a.accuracy_delta)
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn aggregates_csv(result: &SweepResult) -> String {
    let mut out =
        String::from("method,calibrator,succeeded,failed,ece_mean,ece_std,acc_mean,acc_std,ece_delta,acc_delta\n");
    let opt = |v: Option<f64>| v.map_or_else(String::new, |d| d.to_string());
    for a in &result.aggregates {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            a.method.name(),
            a.kind.name(),
            a.succeeded,
            a.failed,
            a.ece_mean,
            a.ece_std,
            a.accuracy_mean,
            a.accuracy_std,
            opt(a.ece_delta),
            opt(a.accuracy_delta)
        )
        .unwrap();
    }
    out
}

pub fn cells_csv(result: &SweepResult) -> String {
    let mut out = String::from(
        "method,calibrator,seed,status,ece_before,ece_after,acc_before,acc_after,nll_after,class_loss_std_after,final_objective,alpha,beta\n",
    );
    for c in &result.cells {
        match &c.result {
            Ok(s) => {
                let (alpha, beta) = s
                    .scaling
                    .map_or((String::new(), String::new()), |(a, b, _)| {
                        (a.to_string(), b.to_string())
                    });
                writeln!(
                    out,
                    "{},{},{},ok,{},{},{},{},{},{},{},{},{}",
                    c.method.name(),
                    c.kind.name(),
                    c.seed,
                    s.before.ece,
                    s.after.ece,
                    s.before.accuracy,
                    s.after.accuracy,
                    s.after.nll,
                    s.after.class_loss_std,
                    s.final_objective,
                    alpha,
                    beta
                )
                .unwrap();
            }
            Err(e) => {
                writeln!(
                    out,
                    "{},{},{},\"failed: {}\",,,,,,,,,",
                    c.method.name(),
                    c.kind.name(),
                    c.seed,
                    e.replace('"', "'")
                )
                .unwrap();
            }
        }
    }
    out
}

/// Reads the two datasets, runs the sweep and writes `sweep_cells.csv`,
/// `sweep_summary.csv` and `sweep_table.txt`.
pub fn run_sweep(val: &Path, test: &Path, config: &SweepConfig, out: &Path) -> Result<SweepResult> {
    config.validate()?;
    let val = read_dataset(val, None)?;
    let test = read_dataset(test, None)?;
    let result = sweep(&val, &test, config)?;
    write_file(&out.join("sweep_cells.csv"), cells_csv(&result).as_bytes())?;
    write_file(
        &out.join("sweep_summary.csv"),
        aggregates_csv(&result).as_bytes(),
    )?;
    write_file(
        &out.join("sweep_table.txt"),
        sweep_table(&result, &config.methods, &config.kinds).as_bytes(),
    )?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyAnalysis {
    pub classes: Vec<usize>,
    pub trace: FitTrace,
    pub ece: Vec<f64>,
    /// Correlation of class-loss std with ECE across epochs.
    pub level_correlation: Option<f64>,
    /// Correlation of their epoch-to-epoch changes.
    pub change_correlation: Option<f64>,
}

fn diffs(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Trains a temperature on the summed losses of the `k` classes with the
/// highest initial loss, tracking ECE on `data` after every epoch.
pub fn toy_analysis(
    data: &LogitDataset,
    k: usize,
    optim: &OptimSpec,
    bins: usize,
) -> Result<ToyAnalysis> {
    if k == 0 || k > data.class_count() {
        return Err(Error::Config(format!(
            "k must lie in [1, {}]",
            data.class_count()
        )));
    }
    let mut cal = Calibrator::new(CalibratorKind::Ts, data.class_count()).phase("setup")?;
    let loss = LossSpec::default();
    let initial = TrainingObjective::new(&cal, data, &loss)
        .phase("setup")?
        .class_losses(cal.params());
    let classes = select_top_k_classes(&initial.values, k).phase("setup")?;
    let config = FitConfig {
        class_subset: Some(classes.clone()),
        ..FitConfig::new(loss, optim.clone())
    };
    let logits = data.logits_f64();
    let mut probe = cal.clone();
    let mut ece = Vec::with_capacity(optim.epochs + 1);
    let mut failure = None;
    let trace = fit_observed(&mut cal, data, &config, &mut |_, params| {
        if failure.is_some() {
            return;
        }
        let r = probe
            .set_params(params)
            .and_then(|_| probe.apply(&logits))
            .and_then(|z| evaluate(&probabilities(&z), data.labels(), bins));
        match r {
            Ok(r) => ece.push(r.ece),
            Err(e) => failure = Some(e),
        }
    })
    .phase("fit")?;
    if let Some(e) = failure {
        return Err(e).phase("evaluate");
    }
    if let Some(epoch) = trace.diverged {
        return Err(Error::Diverged {
            phase: "fit",
            epoch,
        });
    }
    let std: Vec<f64> = trace.records.iter().map(|r| r.class_nll_std).collect();
    let level_correlation = correlation(&std, &ece).ok();
    let change_correlation = correlation(&diffs(&std), &diffs(&ece)).ok();
    Ok(ToyAnalysis {
        classes,
        trace,
        ece,
        level_correlation,
        change_correlation,
    })
}

fn summary_doc(t: &ToyAnalysis) -> KvDoc {
    let show = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |c| c.to_string());
    let mut doc = KvDoc::new();
    doc.push(
        "classes",
        t.classes
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    )
    .push("epochs", t.trace.records.len().saturating_sub(1))
    .push("std_ece_correlation", show(t.level_correlation))
    .push("std_ece_change_correlation", show(t.change_correlation));
    doc
}

/// Writes `toy_trace.csv` and `toy_summary.txt`.
pub fn run_toy_analysis(
    data: &Path,
    k: usize,
    optim: &OptimSpec,
    bins: usize,
    out: &Path,
) -> Result<ToyAnalysis> {
    optim.validate().phase("config")?;
    let data = read_dataset(data, None)?;
    let t = toy_analysis(&data, k, optim, bins)?;
    write_file(
        &out.join("toy_trace.csv"),
        trace_table(&t.trace, Some(&t.ece)).as_bytes(),
    )?;
    write_file(
        &out.join("toy_summary.txt"),
        summary_doc(&t).render().as_bytes(),
    )?;
    Ok(t)
}
