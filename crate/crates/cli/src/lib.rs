//! The `hetnet-ee` command line.
//!
//! Relative file paths are resolved against `--out-dir`, which defaults to
//! the `HETNET_EE_OUT_DIR` environment variable and otherwise to the current
//! directory.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hetnet_ee::dataset::{generate_dataset_with_progress, load_dataset, save_dataset, Dataset, OracleParams};
use hetnet_ee::eval::{bench_runtime, evaluate, BenchMethod, EvalOptions};
use hetnet_ee::nn::gradcheck::{gradient_check, random_check_case};
use hetnet_ee::nn::{
    build_cnn, build_dnn, load_model, save_model, AdamParams, EpochStats, LossWeights, Model, NetDims, PowerDecoding,
    TrainingConfig, DEFAULT_KERNEL,
};
use hetnet_ee::{NetworkConfig, RateFormula};

pub const OUT_DIR_ENV: &str = "HETNET_EE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "hetnet-ee",
    version,
    about = "Energy-efficient resource allocation for two-tier HetNets"
)]
pub struct Cli {
    /// Directory that relative file paths are resolved against.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate channel realizations labeled by the exhaustive oracle.
    Datagen(DatagenArgs),
    /// Train a CNN or DNN allocator on a labeled dataset.
    Train(TrainArgs),
    /// Score models and baselines against the oracle labels of a dataset.
    Eval(EvalArgs),
    /// Time the oracle, models and baselines one instance at a time.
    Bench(BenchArgs),
    /// Finite-difference check of the backpropagation code on random models.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Power levels per base station in the oracle's grid.
    #[arg(long, default_value_t = hetnet_ee::solver::DEFAULT_GRID_LEVELS)]
    pub grid_levels: u32,
    /// Network configuration as JSON (defaults to the built-in scenario).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the minimum spectral efficiency (bit/s/Hz).
    #[arg(long)]
    pub se_target: Option<f64>,
    #[arg(long, value_enum)]
    pub rate_formula: Option<RateArg>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RateArg {
    Shannon,
    LogSinr,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ArchArg {
    Cnn,
    Dnn,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub arch: ArchArg,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV (default: `<out stem>.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Convolution kernel size (CNN only).
    #[arg(long, default_value_t = DEFAULT_KERNEL)]
    pub kernel: usize,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ce_weight: f64,
    /// Weight of the power error. Oracle powers are mostly zero or one grid
    /// step, so the default weights this term well above the cross-entropy.
    #[arg(long, default_value_t = 100.0)]
    pub mse_weight: f64,
    /// Keep the last epoch's parameters instead of the best validation epoch's.
    #[arg(long)]
    pub last_epoch: bool,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DecodingArg {
    /// Snap decoded powers onto the dataset's oracle grid.
    Grid,
    /// Keep decoded powers continuous.
    Continuous,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file; repeat for several models.
    #[arg(long)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_report: PathBuf,
    /// Seed of the RandomPower baseline.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DecodingArg::Grid)]
    pub decoding: DecodingArg,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Oracle grid levels (default: the dataset's).
    #[arg(long)]
    pub grid_levels: Option<u32>,
    /// Only time the first N samples.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, value_enum, default_value_t = DecodingArg::Grid)]
    pub decoding: DecodingArg,
    /// Runtime table CSV (printed to stdout either way).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    pub cases: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    /// Fail if any relative error reaches this value.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

/// Parses `args` (program name first) and executes the subcommand.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| {
        if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) {
            let _ = e.print();
            std::process::exit(0);
        }
        anyhow::anyhow!(e.render().to_string().trim_end().to_string())
    })?;
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let paths = Paths {
        base: cli.out_dir.clone(),
    };
    match &cli.command {
        Command::Datagen(a) => datagen(a, &paths),
        Command::Train(a) => train(a, &paths),
        Command::Eval(a) => eval(a, &paths),
        Command::Bench(a) => bench(a, &paths),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

struct Paths {
    base: Option<PathBuf>,
}

impl Paths {
    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_owned(),
        }
    }

    fn output(&self, p: &Path) -> Result<PathBuf> {
        let p = self.resolve(p);
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(p)
    }

    fn dataset(&self, p: &Path) -> Result<Dataset> {
        let p = self.resolve(p);
        load_dataset(&p).with_context(|| format!("loading dataset {}", p.display()))
    }

    fn model(&self, p: &Path) -> Result<Model> {
        let p = self.resolve(p);
        load_model(&p).with_context(|| format!("loading model {}", p.display()))
    }
}

fn datagen(a: &DatagenArgs, paths: &Paths) -> Result<()> {
    ensure!(a.count > 0, "--count must be positive");
    let mut cfg = match &a.config {
        Some(p) => {
            let p = paths.resolve(p);
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<NetworkConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => NetworkConfig::reference_scenario(),
    };
    if let Some(se) = a.se_target {
        cfg.se_target_bps_per_hz = se;
    }
    if let Some(r) = a.rate_formula {
        cfg.rate_formula = match r {
            RateArg::Shannon => RateFormula::Shannon,
            RateArg::LogSinr => RateFormula::LogSinr,
        };
    }
    let out = paths.output(&a.out)?;
    let step = (a.count / 20).max(1);
    let quiet = a.quiet;
    let ds = generate_dataset_with_progress(
        &cfg,
        a.count,
        a.seed,
        OracleParams {
            grid_levels: a.grid_levels,
        },
        |done| {
            if !quiet && done % step == 0 {
                eprintln!("labeled {done}/{}", a.count);
            }
        },
    )?;
    save_dataset(&ds, &out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "wrote {} samples to {} ({} infeasible realizations skipped)",
        ds.len(),
        out.display(),
        ds.metadata.skipped_infeasible
    );
    Ok(())
}

fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,validation_loss\n");
    for h in history {
        let v = h.validation_loss.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", h.epoch, h.train_loss, v));
    }
    out
}

fn train(a: &TrainArgs, paths: &Paths) -> Result<()> {
    let ds = paths.dataset(&a.data)?;
    ensure!(!ds.is_empty(), "dataset {} has no samples", a.data.display());
    let dims = NetDims::from_config(ds.config());
    let mut model = match a.arch {
        ArchArg::Cnn => {
            ensure!(a.kernel % 2 == 1, "--kernel must be odd");
            build_cnn(dims, a.kernel)
        }
        ArchArg::Dnn => build_dnn(dims),
    };
    model.initialize(a.seed);
    let tc = TrainingConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        adam: AdamParams {
            learning_rate: a.lr,
            ..AdamParams::default()
        },
        seed: a.seed,
        loss_weights: LossWeights {
            ce: a.ce_weight,
            mse: a.mse_weight,
        },
        validation_fraction: a.validation_fraction,
        restore_best: !a.last_epoch,
    };
    if !a.quiet {
        eprintln!("{model}");
    }
    let history = hetnet_ee::nn::train(&mut model, &ds, &tc)?;
    if !a.quiet {
        for h in &history {
            match h.validation_loss {
                Some(v) => eprintln!("epoch {:>4}  train {:.6}  validation {:.6}", h.epoch, h.train_loss, v),
                None => eprintln!("epoch {:>4}  train {:.6}", h.epoch, h.train_loss),
            }
        }
    }
    let out = paths.output(&a.out)?;
    save_model(&model, &out).with_context(|| format!("writing {}", out.display()))?;
    let hist_path = match &a.history {
        Some(p) => paths.output(p)?,
        None => out.with_extension("history.csv"),
    };
    std::fs::write(&hist_path, history_csv(&history)).with_context(|| format!("writing {}", hist_path.display()))?;
    println!(
        "wrote {} model ({} parameters) to {} and history to {}",
        model.arch.name(),
        model.count_params(),
        out.display(),
        hist_path.display()
    );
    Ok(())
}

fn decoding(arg: DecodingArg, ds: &Dataset) -> PowerDecoding {
    match arg {
        DecodingArg::Grid => PowerDecoding::Grid {
            levels: ds.metadata.oracle.grid_levels,
        },
        DecodingArg::Continuous => PowerDecoding::Continuous,
    }
}

fn eval(a: &EvalArgs, paths: &Paths) -> Result<()> {
    let ds = paths.dataset(&a.data)?;
    ensure!(!ds.is_empty(), "dataset {} has no samples", a.data.display());
    let models = a.model.iter().map(|p| paths.model(p)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Model> = models.iter().collect();
    let opts = EvalOptions {
        seed: a.seed,
        decoding: decoding(a.decoding, &ds),
    };
    let report = evaluate(&ds, &refs, opts)?;
    let out = paths.output(&a.out_report)?;
    let meta = serde_json::json!({
        "data": a.data,
        "models": a.model,
        "random_seed": a.seed,
        "decoding": format!("{:?}", opts.decoding),
        "dataset_master_seed": ds.metadata.master_seed,
        "oracle_grid_levels": ds.metadata.oracle.grid_levels,
    });
    let written = report.write(&out, meta)?;
    for m in &report.methods {
        let xi = report.xi(m);
        let median = hetnet_ee::eval::quantile(&xi, 0.5).unwrap_or(f64::NAN);
        println!(
            "{m:>10}  mean EE {:.6e} bit/J  median xi {:.4}",
            report.mean_ee(m),
            median
        );
    }
    println!("oracle dominates every row: {}", report.all_oracle_dominates());
    println!("wrote {} files next to {}", written.len(), out.display());
    Ok(())
}

fn bench(a: &BenchArgs, paths: &Paths) -> Result<()> {
    let mut ds = paths.dataset(&a.data)?;
    if let Some(n) = a.limit {
        ds = ds.truncated(n.min(ds.len()));
    }
    let models = a.model.iter().map(|p| paths.model(p)).collect::<Result<Vec<_>>>()?;
    let levels = a.grid_levels.unwrap_or(ds.metadata.oracle.grid_levels);
    let mut methods = vec![BenchMethod::Oracle { levels }];
    methods.extend(models.iter().map(BenchMethod::Model));
    methods.push(BenchMethod::Random);
    methods.push(BenchMethod::MaxPower);
    let table = bench_runtime(&methods, &ds, decoding(a.decoding, &ds))?;
    let csv = table.to_csv();
    print!("{csv}");
    if let Some(p) = &a.out {
        let out = paths.output(p)?;
        std::fs::write(&out, csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    ensure!(a.cases > 0, "--cases must be positive");
    ensure!(a.step > 0.0, "--step must be positive");
    let mut worst = 0.0f64;
    for i in 0..a.cases {
        let seed = a.seed.wrapping_add(i);
        let (model, x, targets) = random_check_case(seed);
        let r = gradient_check(&model, &x, &targets, LossWeights::default(), a.step)?;
        println!(
            "case {i:>3} (seed {seed}): {} params, {} checked, {} skipped at kinks, max rel error {:.3e}",
            r.params, r.checked, r.skipped_kinks, r.max_rel_error
        );
        worst = worst.max(r.max_rel_error);
    }
    println!("worst relative error {worst:.3e} (tolerance {:.1e})", a.tolerance);
    if worst >= a.tolerance {
        bail!("gradient check failed: {worst:.3e} >= {:.1e}", a.tolerance);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn relative_paths_follow_the_base() {
        let p = Paths {
            base: Some(PathBuf::from("/tmp/base")),
        };
        assert_eq!(p.resolve(Path::new("a.ds")), PathBuf::from("/tmp/base/a.ds"));
        assert_eq!(p.resolve(Path::new("/abs/a.ds")), PathBuf::from("/abs/a.ds"));
        let none = Paths { base: None };
        assert_eq!(none.resolve(Path::new("a.ds")), PathBuf::from("a.ds"));
    }
}
