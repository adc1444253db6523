use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use radpl::baselines::NearestClassMean;
use radpl::classify::{evaluate, evaluate_with};
use radpl::data::{
    load_dataset, make_synthetic, normalize_unit_l2, random_projection_features, save_labels,
    save_matrix, split, LabeledDataset, SyntheticSpec,
};
use radpl::metrics::{
    atom_similarity, block_diagonal_energy, format_psnr, psnr, reconstruct, to_csv, to_pgm,
};
use radpl::model::{load_model, save_model, Hyperparams, Preset};
use radpl::solver::oracle::{run_oracle_suite, FaultInjection};
use radpl::solver::{train_with_mode, TrainMode};
use radpl::Error;

const EXIT_CHECK: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "radpl", version, about = "Robust adaptive dictionary pair learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Train a dictionary pair model.
    Train(TrainArgs),
    /// Classify a labeled set and print accuracy and confusion as CSV.
    Eval(EvalArgs),
    /// Accuracy of the full model against the alpha=0, beta=0 and lambda=0 variants.
    Ablate(AblateArgs),
    /// Export atom similarity maps and reconstruction statistics.
    Inspect(InspectArgs),
    /// Run the numerical self-checks of the solver.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    corrupt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_prefix: PathBuf,
    /// Also write `<prefix>.train.*` and `<prefix>.test.*` with this many
    /// training samples per class.
    #[arg(long)]
    split: Option<usize>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureOrder {
    ProjectFirst,
    NormalizeFirst,
}

#[derive(Args, Clone)]
struct FeatureArgs {
    /// Random-feature projection to this many dimensions.
    #[arg(long)]
    project: Option<usize>,
    #[arg(long, default_value_t = 0)]
    projection_seed: u64,
    /// Scale every sample to unit l2 norm.
    #[arg(long)]
    normalize: bool,
    #[arg(long, value_enum, default_value_t = FeatureOrder::ProjectFirst)]
    order: FeatureOrder,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Reduced,
    Frobenius,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => TrainMode::Full,
            ModeArg::Reduced => TrainMode::Reduced,
            ModeArg::Frobenius => TrainMode::Frobenius,
        }
    }
}

#[derive(Args, Clone)]
struct HyperArgs {
    /// Named (alpha, beta, lambda) setting; explicit flags override it.
    #[arg(long, default_value = "yaleb")]
    preset: Preset,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    tau: f64,
    #[arg(long, default_value_t = 5)]
    atoms: usize,
    #[arg(long, default_value_t = 30)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    /// Print the resolved parameters as key=value lines before running.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long)]
    model_out: PathBuf,
    #[arg(long)]
    history_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long)]
    model: PathBuf,
    /// Also report the nearest-class-mean floor fitted on this training set.
    #[arg(long, requires = "baseline_labels")]
    baseline_data: Option<PathBuf>,
    #[arg(long, requires = "baseline_data")]
    baseline_labels: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long, requires = "test_labels", conflicts_with = "train_per_class")]
    test_data: Option<PathBuf>,
    #[arg(long, requires = "test_data")]
    test_labels: Option<PathBuf>,
    /// Split the data set instead, keeping this many samples per class for
    /// training (split seeded by --seed).
    #[arg(long, required_unless_present = "test_data")]
    train_per_class: Option<usize>,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Negate the weight update inside the checks (harness sanity test).
    #[arg(long, hide = true)]
    inject_sign_flip: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() {
            EXIT_NUMERICAL
        } else {
            EXIT_USAGE
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type CliResult = std::result::Result<(), Failure>;

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

impl FeatureArgs {
    fn apply(&self, ds: LabeledDataset) -> radpl::Result<LabeledDataset> {
        let project = |x| match self.project {
            Some(d) => random_projection_features(&x, d, self.projection_seed),
            None => Ok(x),
        };
        let normalize = |x| {
            if self.normalize {
                normalize_unit_l2(&x)
            } else {
                Ok(x)
            }
        };
        let x = ds.x().clone();
        let x = match self.order {
            FeatureOrder::ProjectFirst => normalize(project(x)?)?,
            FeatureOrder::NormalizeFirst => project(normalize(x)?)?,
        };
        ds.with_features(x)
    }

    fn load(&self, data: &Path, labels: &Path) -> radpl::Result<LabeledDataset> {
        self.apply(load_dataset(data, labels)?)
    }
}

impl HyperArgs {
    fn resolve(&self) -> std::result::Result<(Hyperparams, TrainMode), Failure> {
        let mode = TrainMode::from(self.mode);
        let (pa, pb, pl) = self.preset.triple();
        // The reduced modes drop the locality and mean terms, so the preset's
        // beta and lambda do not apply; explicit nonzero values are rejected.
        let (pb, pl) = if mode == TrainMode::Full {
            (pb, pl)
        } else {
            (0.0, 0.0)
        };
        let hp = Hyperparams {
            alpha: self.alpha.unwrap_or(pa),
            beta: self.beta.unwrap_or(pb),
            lambda: self.lambda.unwrap_or(pl),
            tau: self.tau,
            atoms_per_class: self.atoms,
            max_iter: self.max_iter,
            tol: self.tol,
            seed: self.seed,
        };
        hp.validate()?;
        radpl::solver::check_mode(&hp, mode)?;
        if self.print_config {
            println!("preset={}", self.preset);
            println!("mode={mode}");
            for (k, v) in hp.key_values() {
                println!("{k}={v}");
            }
        }
        Ok((hp, mode))
    }
}

fn run_synth(a: &SynthArgs) -> CliResult {
    let spec = SyntheticSpec {
        classes: a.classes,
        dim: a.dim,
        per_class: a.per_class,
        noise_sigma: a.noise,
        corrupt_frac: a.corrupt,
        seed: a.seed,
    };
    let ds = make_synthetic(&spec)?;
    let save = |suffix: &str, ds: &LabeledDataset| -> radpl::Result<()> {
        save_matrix(with_suffix(&a.out_prefix, &format!("{suffix}.mat")), ds.x())?;
        save_labels(with_suffix(&a.out_prefix, &format!("{suffix}.labels")), ds.labels())
    };
    save("", &ds)?;
    if let Some(n) = a.split {
        let (train, test) = split(&ds, n, a.seed)?;
        save(".train", &train)?;
        save(".test", &test)?;
    }
    info!("wrote {} samples of dimension {}", ds.len(), ds.dim());
    Ok(())
}

fn run_train(a: &TrainArgs) -> CliResult {
    let (hp, mode) = a.hyper.resolve()?;
    let ds = a.features.load(&a.data.data, &a.data.labels)?;
    let out = train_with_mode(&ds, &hp, mode)?;
    info!(
        "{} iterations, converged={}, final objective {:e}",
        out.history.iterations_run(),
        out.history.converged,
        out.history.final_objective_eq6()
    );
    save_model(&a.model_out, &out.state.pair, &hp)?;
    if let Some(path) = &a.history_out {
        write_file(path, &out.history.to_csv())?;
    }
    Ok(())
}

fn run_eval(a: &EvalArgs) -> CliResult {
    let (pair, _) = load_model(&a.model)?;
    let test = a.features.load(&a.data.data, &a.data.labels)?;
    let report = evaluate(&test, &pair)?;
    print!("{}", report.to_csv());
    if let (Some(d), Some(l)) = (&a.baseline_data, &a.baseline_labels) {
        let train = a.features.load(d, l)?;
        let floor = evaluate_with(&NearestClassMean::fit(&train), &test)?;
        println!("nearest_class_mean,{:.6}", floor.accuracy);
    }
    Ok(())
}

fn run_ablate(a: &AblateArgs) -> CliResult {
    let (hp, mode) = a.hyper.resolve()?;
    let ds = a.features.load(&a.data.data, &a.data.labels)?;
    let (train, test) = match (&a.test_data, &a.test_labels, a.train_per_class) {
        (Some(d), Some(l), _) => (ds, a.features.load(d, l)?),
        (_, _, Some(n)) => split(&ds, n, hp.seed)?,
        _ => return Err(usage("need --test-data/--test-labels or --train-per-class")),
    };
    let variants = [
        ("alpha=0", Hyperparams { alpha: 0.0, ..hp }),
        ("beta=0", Hyperparams { beta: 0.0, ..hp }),
        ("lambda=0", Hyperparams { lambda: 0.0, ..hp }),
        ("full", hp),
    ];
    println!("variant,alpha,beta,lambda,accuracy");
    for (name, v) in variants {
        let out = train_with_mode(&train, &v, mode)?;
        let acc = evaluate(&test, &out.state.pair)?.accuracy;
        println!("{name},{},{},{},{acc:.6}", v.alpha, v.beta, v.lambda);
    }
    Ok(())
}

fn run_inspect(a: &InspectArgs) -> CliResult {
    let (pair, _) = load_model(&a.model)?;
    let ds = a.features.load(&a.data.data, &a.data.labels)?;
    if ds.dim() != pair.dim() {
        return Err(Error::DimensionMismatch {
            expected: pair.dim(),
            found: ds.dim(),
        }
        .into());
    }
    let similarity = atom_similarity(&pair.assembled_synthesis());
    write_file(&with_suffix(&a.out_prefix, ".similarity.pgm"), &to_pgm(&similarity))?;
    write_file(&with_suffix(&a.out_prefix, ".similarity.csv"), &to_csv(&similarity))?;

    let codes = pair.assembled_analysis() * ds.x();
    let energy = block_diagonal_energy(&codes, &pair.atom_classes(), ds.labels())?;
    let recon = reconstruct(ds.x(), &pair)?;
    let error = (ds.x() - &recon).norm();
    let psnr = psnr(ds.x(), &recon)?;
    let report = format!(
        "block_diagonal_energy,{energy:.12}\nreconstruction_error,{error:.12}\npsnr_db,{}\n",
        format_psnr(psnr)
    );
    write_file(&with_suffix(&a.out_prefix, ".report.csv"), &report)?;
    print!("{report}");
    Ok(())
}

fn run_gradcheck(a: &GradcheckArgs) -> CliResult {
    let faults = FaultInjection {
        flip_w_sign: a.inject_sign_flip,
    };
    let results = run_oracle_suite(a.seed, faults);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure {
            code: EXIT_CHECK,
            message: format!("{failed} of {} checks failed", results.len()),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Ablate(a) => run_ablate(a),
        Command::Inspect(a) => run_inspect(a),
        Command::Gradcheck(a) => run_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
