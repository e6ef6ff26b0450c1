//! Command-line front end: train, predict, eval, benchmark, synth, grid.
//!
//! Exit codes: 0 success, 2 invalid flags, 3 data error, 4 numerical
//! failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use lrlssvm::data::{
    generate_two_class_mixture, load_benchmark_suite, load_csv, write_csv, LabelConvention,
    MixtureSpec,
};
use lrlssvm::trainer::{evaluate, fit, round_sig, run_benchmark, TrainConfig};
use lrlssvm::{BasisFamily, Error, Objective, Result, SparseModel};

#[derive(Parser)]
#[command(name = "lrlssvm", version, about = "Sparse low-rank kernel LSSVM classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Sbf,
    RobustRbf,
}

impl From<FamilyArg> for BasisFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Sbf => BasisFamily::Sbf,
            FamilyArg::RobustRbf => BasisFamily::RobustRbf,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Abs,
    Square,
    Target,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Abs => Objective::Abs,
            ObjectiveArg::Square => Objective::Square,
            ObjectiveArg::Target => Objective::Target,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConventionArg {
    Signed,
    ZeroOne,
}

impl From<ConventionArg> for LabelConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Signed => LabelConvention::Signed,
            ConventionArg::ZeroOne => LabelConvention::ZeroOne,
        }
    }
}

/// Training hyperparameters shared by `train` and `benchmark`.
#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long)]
    family: FamilyArg,
    #[arg(long = "M")]
    m: usize,
    #[arg(long)]
    mu0: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    iters: usize,
    #[arg(long)]
    objective: ObjectiveArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standardize features with train-fitted statistics.
    #[arg(long)]
    normalize: bool,
    /// Compute all unit gradients in a sweep from the sweep-start kernel
    /// instead of refreshing after each unit.
    #[arg(long)]
    no_refresh: bool,
}

impl TrainFlags {
    fn to_config(&self) -> TrainConfig {
        TrainConfig {
            m: self.m,
            family: self.family.into(),
            mu0: self.mu0,
            gamma: self.gamma,
            eta: self.eta,
            iters: self.iters,
            objective: self.objective.into(),
            seed: self.seed,
            normalize: self.normalize,
            refresh_within_sweep: !self.no_refresh,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write model JSON plus a history CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        header: bool,
        #[arg(long, value_enum, default_value_t = ConventionArg::Signed)]
        label_convention: ConventionArg,
    },
    /// Score a dataset with a trained model; writes score,label rows.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        header: bool,
        #[arg(long, value_enum, default_value_t = ConventionArg::Signed)]
        label_convention: ConventionArg,
    },
    /// Report misclassification metrics of a model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        header: bool,
        #[arg(long, value_enum, default_value_t = ConventionArg::Signed)]
        label_convention: ConventionArg,
    },
    /// Train and evaluate over every realization of a benchmark suite.
    Benchmark {
        #[arg(long)]
        suite: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Realization range `a..b` (1-based, inclusive).
        #[arg(long)]
        range: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a two-class Gaussian-mixture train/test pair.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 250)]
        n_train: usize,
        #[arg(long, default_value_t = 1000)]
        n_test: usize,
        /// Mixture spec: path to a JSON file or an inline JSON document.
        /// Defaults to the Ripley synthetic mixture.
        #[arg(long)]
        params: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Export a decision-surface grid as x1,x2,score rows (D = 2 models).
    Grid {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        xmin: f64,
        #[arg(long, allow_negative_numbers = true)]
        xmax: f64,
        #[arg(long, allow_negative_numbers = true)]
        ymin: f64,
        #[arg(long, allow_negative_numbers = true)]
        ymax: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_model(path: &Path) -> Result<SparseModel> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SparseModel::from_json_str(&text)
}

fn write_output(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_range(text: &str) -> Result<(usize, usize)> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| Error::Config(format!("range must look like a..b, got {text:?}")))?;
    let lo = a
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad range start {a:?}")))?;
    let hi = b
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad range end {b:?}")))?;
    Ok((lo, hi))
}

fn parse_mixture(params: Option<&str>) -> Result<MixtureSpec> {
    let Some(text) = params else {
        return Ok(MixtureSpec::ripley());
    };
    let doc = if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        std::fs::read_to_string(text).map_err(|source| Error::Io {
            path: PathBuf::from(text),
            source,
        })?
    };
    let spec: MixtureSpec = serde_json::from_str(&doc)
        .map_err(|e| Error::Config(format!("invalid mixture spec: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            data,
            flags,
            out,
            header,
            label_convention,
        } => {
            let cfg = flags.to_config();
            cfg.validate()?;
            let train = load_csv(&data, label_convention.into(), header)?;
            let (model, history) = fit(&train, &cfg)?;
            write_output(&out, &model.to_json_string())?;
            let hist_path = PathBuf::from(format!("{}.history.csv", out.display()));
            write_output(&hist_path, &history.to_csv_string())?;
        }
        Command::Predict {
            model,
            data,
            out,
            header,
            label_convention,
        } => {
            let model = read_model(&model)?;
            let dataset = load_csv(&data, label_convention.into(), header)?;
            let mut rows = String::new();
            for n in 0..dataset.n() {
                let score = model.predict_score(&dataset.row(n))?;
                let label = if score >= 0.0 { 1 } else { -1 };
                let _ = writeln!(rows, "{score},{label}");
            }
            write_output(&out, &rows)?;
        }
        Command::Eval {
            model,
            data,
            header,
            label_convention,
        } => {
            let model = read_model(&model)?;
            let dataset = load_csv(&data, label_convention.into(), header)?;
            let metrics = evaluate(&model, &dataset)?;
            println!(
                "{}",
                serde_json::json!({
                    "misclassification_rate_pct":
                        round_sig(metrics.misclassification_rate * 100.0, 4),
                    "n_errors": metrics.n_errors,
                    "n_total": metrics.n_total,
                })
            );
        }
        Command::Benchmark {
            suite,
            flags,
            jobs,
            range,
            out,
        } => {
            if jobs < 1 {
                return Err(Error::Config("jobs must be >= 1".into()));
            }
            let cfg = flags.to_config();
            cfg.validate()?;
            let suite = load_benchmark_suite(&suite)?;
            let range = range.as_deref().map(parse_range).transpose()?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            let report = pool.install(|| run_benchmark(&suite, &cfg, range))?;
            let text = report.to_json_string();
            match out {
                Some(path) => write_output(&path, &text)?,
                None => println!("{text}"),
            }
        }
        Command::Synth {
            seed,
            n_train,
            n_test,
            params,
            out_dir,
        } => {
            let spec = parse_mixture(params.as_deref())?;
            let (train, test) = generate_two_class_mixture(seed, n_train, n_test, &spec)?;
            std::fs::create_dir_all(&out_dir).map_err(|source| Error::Io {
                path: out_dir.clone(),
                source,
            })?;
            write_csv(&train, out_dir.join("train.csv"))?;
            write_csv(&test, out_dir.join("test.csv"))?;
        }
        Command::Grid {
            model,
            xmin,
            xmax,
            ymin,
            ymax,
            steps,
            out,
        } => {
            let model = read_model(&model)?;
            if model.d() != 2 {
                return Err(Error::Config(format!(
                    "grid export needs a D = 2 model, got D = {}",
                    model.d()
                )));
            }
            if steps < 1 {
                return Err(Error::Config("steps must be >= 1".into()));
            }
            let mut rows = String::new();
            for iy in 0..=steps {
                let x2 = ymin + (ymax - ymin) * iy as f64 / steps as f64;
                for ix in 0..=steps {
                    let x1 = xmin + (xmax - xmin) * ix as f64 / steps as f64;
                    let score = model.predict_score(&DVector::from_column_slice(&[x1, x2]))?;
                    let _ = writeln!(rows, "{x1},{x2},{score}");
                }
            }
            match out {
                Some(path) => write_output(&path, &rows)?,
                None => print!("{rows}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
