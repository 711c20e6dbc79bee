use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lossscale::core::{
    generate_synthetic, make_lt_split, split, CalibratorKind, LossKind, LossSpec, LtSpec,
    Normalization, OptimSpec, PtsArch, Refresh, Rounding, ScalingConfig, Schedule, SyntheticSpec,
};
use lossscale::harness::{
    run_calibrate, run_evaluate, run_sweep, run_toy_analysis, CellSpec, RunConfig, SweepConfig,
};
use lossscale::report::KvDoc;
use lossscale::{read_dataset, write_dataset, Error, Format, Method, OptimOverrides, Result};

#[derive(Parser)]
#[command(
    name = "lossscale",
    version,
    about = "Post-hoc calibration of classifier logits"
)]
struct Cli {
    /// Seed for random draws and the default seed list.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of equal-width confidence bins.
    #[arg(long, global = true, default_value_t = 15)]
    bins: usize,
    /// Format of written datasets (inputs are detected).
    #[arg(long, global = true, default_value = "binary")]
    format: Format,
    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "LOSSSCALE_OUT",
        default_value = "lossscale-out"
    )]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a calibrator on validation logits and evaluate it on test logits.
    Calibrate(CalibrateArgs),
    /// Report accuracy, ECE and class losses of logits, optionally calibrated.
    Evaluate {
        #[arg(long)]
        logits: PathBuf,
        /// Calibrator file written by `calibrate`.
        #[arg(long)]
        calibrator: Option<PathBuf>,
    },
    /// Run every method x calibrator x seed and tabulate ECE (accuracy).
    Sweep(SweepArgs),
    /// Train a temperature on the k highest-loss classes and trace ECE.
    ToyAnalysis {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[command(flatten)]
        optim: OptimArgs,
    },
    /// Draw synthetic logits.
    GenSynthetic(SyntheticArgs),
    /// Subsample a dataset to long-tailed class counts.
    MakeLtSplit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        rho: f64,
        /// Count of the head class; defaults to the largest class in the input.
        #[arg(long)]
        base_count: Option<usize>,
        #[arg(long, value_enum, default_value = "floor")]
        rounding: RoundingArg,
        #[arg(long, default_value = "lt")]
        name: String,
    },
    /// Split a dataset in two, stratified by class.
    Split {
        #[arg(long)]
        input: PathBuf,
        /// Share of rows going to the first part.
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long, default_value = "first")]
        first: String,
        #[arg(long, default_value = "second")]
        second: String,
    },
    /// Tabulate key/value reports side by side.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Keys to include.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "sample_count,accuracy,ece,nll,class_loss_std"
        )]
        keys: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Ts,
    Ets,
    Pts,
    Cts,
}

impl From<KindArg> for CalibratorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Ts => CalibratorKind::Ts,
            KindArg::Ets => CalibratorKind::Ets,
            KindArg::Pts => CalibratorKind::Pts,
            KindArg::Cts => CalibratorKind::Cts,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Ce,
    Ls,
    Fl,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ce,
    Ls,
    Fl,
    Ours,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ce => Method::Ce,
            MethodArg::Ls => Method::Ls,
            MethodArg::Fl => Method::Fl,
            MethodArg::Ours => Method::Ours,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Nd,
    Mm,
    Cm,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefreshArg {
    EveryEpoch,
    Frozen,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    QuasiNewton,
    FirstOrder,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoundingArg {
    Floor,
    Round,
    Ceil,
}

#[derive(Args)]
struct OptimArgs {
    #[arg(long, value_enum)]
    optimizer: Option<OptimizerArg>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Piecewise learning rates, e.g. 200:0.005,400:0.003,400:0.001.
    #[arg(long)]
    schedule: Option<String>,
}

impl OptimArgs {
    fn overrides(&self) -> Result<OptimOverrides> {
        let schedule = match &self.schedule {
            Some(s) => {
                Some(Schedule::parse(s).map_err(|e| Error::Config(format!("--schedule: {e}")))?)
            }
            None => None,
        };
        Ok(OptimOverrides {
            method: self.optimizer.map(|o| match o {
                OptimizerArg::QuasiNewton => lossscale::core::Method::QuasiNewton,
                OptimizerArg::FirstOrder => lossscale::core::Method::FirstOrder,
            }),
            learning_rate: self.lr,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            schedule,
        })
    }
}

#[derive(Args)]
struct LossArgs {
    /// Label smoothing strength.
    #[arg(long, default_value_t = 0.05)]
    ls_alpha: f64,
    /// Focal loss exponent.
    #[arg(long, default_value_t = 3.0)]
    fl_gamma: f64,
    /// Average each class loss over its samples instead of summing.
    #[arg(long)]
    per_class_mean: bool,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, value_enum, default_value = "nd")]
    normalization: NormArg,
    #[arg(long, default_value_t = 1.0)]
    alpha_init: f64,
    #[arg(long, default_value_t = 1.5)]
    beta_init: f64,
    #[arg(long, default_value_t = 1e-3)]
    alpha_min: f64,
    #[arg(long, default_value_t = 1e3)]
    alpha_max: f64,
    #[arg(long, default_value_t = 0.0)]
    beta_min: f64,
    #[arg(long, default_value_t = 2.0)]
    beta_max: f64,
    #[arg(long, value_enum, default_value = "every-epoch")]
    refresh: RefreshArg,
}

impl ScalingArgs {
    fn config(&self) -> ScalingConfig {
        ScalingConfig {
            normalization: match self.normalization {
                NormArg::Nd => Normalization::Nd,
                NormArg::Mm => Normalization::Mm,
                NormArg::Cm => Normalization::Cm,
            },
            alpha_init: self.alpha_init,
            beta_init: self.beta_init,
            alpha_bounds: (self.alpha_min, self.alpha_max),
            beta_bounds: (self.beta_min, self.beta_max),
            refresh: match self.refresh {
                RefreshArg::EveryEpoch => Refresh::EveryEpoch,
                RefreshArg::Frozen => Refresh::FrozenAfterFit,
            },
        }
    }
}

#[derive(Args)]
struct ArchArgs {
    /// PTS: number of sorted logits fed to the network.
    #[arg(long)]
    top_s: Option<usize>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    hidden_width: Option<usize>,
}

impl ArchArgs {
    fn arch(&self, classes: Option<usize>) -> Option<PtsArch> {
        if self.top_s.is_none() && self.hidden_layers.is_none() && self.hidden_width.is_none() {
            return None;
        }
        let base = PtsArch::default_for(classes.unwrap_or(10));
        Some(PtsArch {
            top_s: self.top_s.unwrap_or(base.top_s),
            hidden_layers: self.hidden_layers.unwrap_or(base.hidden_layers),
            hidden_width: self.hidden_width.unwrap_or(base.hidden_width),
        })
    }
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Also report the calibrated training logits.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ts")]
    calibrator: KindArg,
    #[arg(long, value_enum, default_value = "ce")]
    loss: LossArg,
    /// Enable class-wise loss scaling.
    #[arg(long)]
    scaling: bool,
    /// ETS: keep the weights on the simplex.
    #[arg(long)]
    ets_sum_to_one: bool,
    /// Seeds to run; defaults to --seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[command(flatten)]
    loss_args: LossArgs,
    #[command(flatten)]
    scaling_args: ScalingArgs,
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "ce,ls,fl,ours"
    )]
    methods: Vec<MethodArg>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "ts,ets,pts,cts"
    )]
    calibrators: Vec<KindArg>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[command(flatten)]
    loss_args: LossArgs,
    #[command(flatten)]
    scaling_args: ScalingArgs,
    #[command(flatten)]
    arch: ArchArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Samples of every class.
    #[arg(long, default_value_t = 500)]
    per_class: usize,
    /// Per-class sample counts; overrides --per-class.
    #[arg(long, value_delimiter = ',')]
    samples_per_class: Vec<usize>,
    /// Mean logit margin of the true class.
    #[arg(long, default_value_t = 4.0)]
    margin: f64,
    /// Per-class margins; overrides --margin.
    #[arg(long, value_delimiter = ',')]
    class_margins: Vec<f64>,
    /// Multiplier on all logits; above 1 makes the model overconfident.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Extra per-class multipliers.
    #[arg(long, value_delimiter = ',')]
    class_scale: Vec<f64>,
    #[arg(long, default_value_t = 2.0)]
    noise_std: f64,
    #[arg(long, default_value = "synthetic")]
    name: String,
}

fn dataset_path(out: &Path, name: &str, format: Format) -> PathBuf {
    out.join(format!("{name}.{}", format.extension()))
}

fn loss_spec(kind: LossKind, args: &LossArgs) -> LossSpec {
    LossSpec {
        ls_alpha: args.ls_alpha,
        fl_gamma: args.fl_gamma,
        per_class_mean: args.per_class_mean,
        ..LossSpec::new(kind)
    }
}

fn seeds(given: &[u64], default: u64) -> Vec<u64> {
    if given.is_empty() {
        vec![default]
    } else {
        given.to_vec()
    }
}

fn calibrate_cmd(cli: &Cli, a: &CalibrateArgs) -> Result<()> {
    let kind = a.calibrator.into();
    let loss_kind = match a.loss {
        LossArg::Ce => LossKind::Ce,
        LossArg::Ls => LossKind::Ls,
        LossArg::Fl => LossKind::Fl,
    };
    let mut cell = CellSpec::new(
        kind,
        loss_spec(loss_kind, &a.loss_args),
        a.scaling.then(|| a.scaling_args.config()),
    );
    cell.optim = a.optim.overrides()?.apply(cell.optim);
    cell.ets_sum_to_one = a.ets_sum_to_one;
    if kind == CalibratorKind::Pts {
        let classes = read_dataset(&a.val, None).ok().map(|d| d.class_count());
        cell.arch = a.arch.arch(classes);
    }
    let config = RunConfig {
        train: a.train.clone(),
        val: a.val.clone(),
        test: a.test.clone(),
        cell,
        bins: cli.bins,
        seeds: seeds(&a.seeds, cli.seed),
        out: cli.out.clone(),
        format: cli.format,
    };
    for (seed, o) in config.seeds.iter().zip(run_calibrate(&config)?) {
        println!(
            "seed {seed}: test ece {} -> {}, accuracy {} -> {}",
            o.before.ece, o.after.ece, o.before.accuracy, o.after.accuracy
        );
    }
    Ok(())
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let config = SweepConfig {
        methods: a.methods.iter().map(|&m| m.into()).collect(),
        kinds: a.calibrators.iter().map(|&k| k.into()).collect(),
        seeds: seeds(&a.seeds, cli.seed),
        arch: a
            .arch
            .arch(read_dataset(&a.val, None).ok().map(|d| d.class_count())),
        ls_alpha: a.loss_args.ls_alpha,
        fl_gamma: a.loss_args.fl_gamma,
        scaling: a.scaling_args.config(),
        optim: a.optim.overrides()?,
        bins: cli.bins,
    };
    let result = run_sweep(&a.val, &a.test, &config, &cli.out)?;
    print!(
        "{}",
        lossscale::harness::sweep_table(&result, &config.methods, &config.kinds)
    );
    for c in result.cells.iter().filter(|c| c.result.is_err()) {
        eprintln!(
            "{} {} seed {}: {}",
            c.method.name(),
            c.kind.name(),
            c.seed,
            c.result.as_ref().unwrap_err()
        );
    }
    Ok(())
}

fn synthetic_cmd(cli: &Cli, a: &SyntheticArgs) -> Result<()> {
    let c = a.classes;
    let spec = SyntheticSpec {
        class_count: c,
        samples_per_class: if a.samples_per_class.is_empty() {
            vec![a.per_class; c]
        } else {
            a.samples_per_class.clone()
        },
        class_mean_margin: if a.class_margins.is_empty() {
            vec![a.margin; c]
        } else {
            a.class_margins.clone()
        },
        overconfidence_scale: a.scale,
        class_scale: a.class_scale.clone(),
        noise_std: a.noise_std,
        seed: cli.seed,
    };
    let data = generate_synthetic(&spec).map_err(|e| Error::Core {
        phase: "generate",
        source: e,
    })?;
    let path = dataset_path(&cli.out, &a.name, cli.format);
    write_dataset(&data, &path, cli.format)?;
    println!(
        "{}: {} samples, {} classes",
        path.display(),
        data.sample_count(),
        c
    );
    Ok(())
}

fn core_err(phase: &'static str) -> impl Fn(lossscale::core::Error) -> Error {
    move |source| Error::Core { phase, source }
}

fn run(cli: &Cli) -> Result<()> {
    if cli.bins == 0 {
        return Err(Error::Config("--bins must be >= 1".into()));
    }
    match &cli.command {
        Command::Calibrate(a) => calibrate_cmd(cli, a),
        Command::Evaluate { logits, calibrator } => {
            let r = run_evaluate(logits, calibrator.as_deref(), cli.bins, &cli.out)?;
            print!("{}", lossscale::report::eval_doc(&r).render());
            Ok(())
        }
        Command::Sweep(a) => sweep_cmd(cli, a),
        Command::ToyAnalysis { data, k, optim } => {
            let spec = optim.overrides()?.apply(OptimSpec {
                seed: cli.seed,
                ..OptimSpec::default()
            });
            let t = run_toy_analysis(data, *k, &spec, cli.bins, &cli.out)?;
            let show =
                |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |c| c.to_string());
            println!("classes {:?}", t.classes);
            println!("std/ece correlation {}", show(t.level_correlation));
            println!("std/ece change correlation {}", show(t.change_correlation));
            Ok(())
        }
        Command::GenSynthetic(a) => synthetic_cmd(cli, a),
        Command::MakeLtSplit {
            input,
            rho,
            base_count,
            rounding,
            name,
        } => {
            let data = read_dataset(input, None)?;
            let spec = LtSpec {
                base_count: base_count
                    .unwrap_or_else(|| data.class_counts().into_iter().max().unwrap_or(0)),
                rho: *rho,
                class_count: data.class_count(),
                rounding: match rounding {
                    RoundingArg::Floor => Rounding::Floor,
                    RoundingArg::Round => Rounding::Round,
                    RoundingArg::Ceil => Rounding::Ceil,
                },
                seed: cli.seed,
            };
            let lt = make_lt_split(&data, &spec).map_err(core_err("long-tailed split"))?;
            let path = dataset_path(&cli.out, name, cli.format);
            write_dataset(&lt, &path, cli.format)?;
            println!(
                "{}: {} samples, counts {:?}",
                path.display(),
                lt.sample_count(),
                lt.class_counts()
            );
            Ok(())
        }
        Command::Split {
            input,
            fraction,
            first,
            second,
        } => {
            let data = read_dataset(input, None)?;
            let parts = split(&data, *fraction, cli.seed).map_err(core_err("split"))?;
            write_dataset(
                &parts.first,
                &dataset_path(&cli.out, first, cli.format),
                cli.format,
            )?;
            write_dataset(
                &parts.second,
                &dataset_path(&cli.out, second, cli.format),
                cli.format,
            )?;
            if !parts.stratified {
                eprintln!("warning: a class has a single sample; split is not stratified");
            }
            println!(
                "{} + {} samples",
                parts.first.sample_count(),
                parts.second.sample_count()
            );
            Ok(())
        }
        Command::Report { files, keys } => {
            let mut table = format!("file,{}\n", keys.join(","));
            for f in files {
                let text = std::fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
                let doc = KvDoc::parse(&text).ok_or_else(|| {
                    Error::format(
                        f,
                        lossscale::FormatError::Malformed("expected `key = value` lines".into()),
                    )
                })?;
                let values: Vec<&str> = keys.iter().map(|k| doc.get(k).unwrap_or("")).collect();
                table.push_str(&format!("{},{}\n", f.display(), values.join(",")));
            }
            lossscale::io::write_file(&cli.out.join("report.csv"), table.as_bytes())?;
            print!("{table}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
