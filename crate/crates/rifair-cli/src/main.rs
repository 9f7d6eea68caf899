//! `rifair` — adversarial accuracy/fairness testing for tabular
//! classifiers. Subcommands cover the full pipeline: generate or ingest a
//! dataset, train a checkpoint, attack the test set, aggregate the
//! results, and manipulate a test set from the attack pool.
//!
//! Exit codes: 0 success, 1 usage error, 2 schema/data error, 3 numeric
//! abort.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use rifair::dataset::SimilarConfig;
use rifair::evaluation::RifCheckConfig;
use rifair::manipulation::Strategy;
use rifair::model::TrainConfig;
use rifair::runner::{
    run_attack, run_evaluate, run_manipulate, run_synth, run_train, AttackRunConfig,
    ManipulateRunConfig, ModeSelection, TrainRunConfig,
};
use rifair::schema::FeatureSchema;
use rifair::synth::DatasetKind;
use rifair::{Error, Result};

#[derive(Parser)]
#[command(
    name = "rifair",
    version,
    about = "Adversarial accuracy/fairness testing for tabular classifiers",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an MLP checkpoint on a CSV under a schema and write the
    /// split halves next to it.
    Train(TrainArgs),
    /// Run the joint attack and the baselines over a test CSV.
    Attack(AttackArgs),
    /// Aggregate attack results into the evaluation report.
    Evaluate(EvaluateArgs),
    /// Replace test items with adversarial counterparts and report the
    /// metric shift.
    Manipulate(ManipulateArgs),
    /// Generate a synthetic benchmark dataset and its schema.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Feature schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Dataset CSV to split and train on.
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Training seed (initialization, shuffling, and the split draw).
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "64,32")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    /// L2 regularization strength.
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Fraction of rows held out as the test split.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
}

#[derive(Args)]
struct AttackArgs {
    /// Feature schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Test CSV to attack (one bundle per row).
    #[arg(long)]
    data: PathBuf,
    /// Model checkpoint to attack.
    #[arg(long)]
    model: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Which attacks to run: tb, fb, ff, fgsm, adf, or all.
    #[arg(long, default_value = "all", value_parser = parse_mode)]
    mode: ModeSelection,
    /// Perturbation step budget T.
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Decision threshold.
    #[arg(long, default_value_t = 0.5)]
    tau_dec: f64,
    /// Grid resolution for continuous replacement candidates.
    #[arg(long, default_value_t = 5)]
    grid_points: usize,
    /// Step size of the gradient-sign baseline, in normalized units.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Maximum similar-set size (larger products are subsampled).
    #[arg(long, default_value_t = 64)]
    similar_cap: usize,
    /// Seed of the similar-set subsampling draw.
    #[arg(long, default_value_t = 0)]
    similar_seed: u64,
    /// Seed recorded in the run manifest.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Export trajectory CSV/SVG files for this many instances.
    #[arg(long, default_value_t = 8)]
    trajectories: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Attack results JSON-lines (a full `--mode all` run).
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Disagreement tolerance of the robustness check.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Nearest-rank percentile of the empirical sensitivity bound.
    #[arg(long, default_value_t = 0.95)]
    percentile: f64,
}

#[derive(Args)]
struct ManipulateArgs {
    /// Feature schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Model checkpoint (for re-evaluating the manipulated set).
    #[arg(long)]
    model: PathBuf,
    /// Attack results JSON-lines (a full `--mode all` run).
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replacement strategy: acc_up, fair_up, both_up,
    /// acc_up_fair_down, or acc_down_fair_up.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Strategy,
    /// Maximum number of test items to replace.
    #[arg(long)]
    budget: usize,
    /// Seed of the replacement scan order.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Decision threshold for re-evaluation.
    #[arg(long, default_value_t = 0.5)]
    tau_dec: f64,
    /// Similar-set cap; must match the attack run.
    #[arg(long, default_value_t = 64)]
    similar_cap: usize,
    /// Similar-set subsampling seed; must match the attack run.
    #[arg(long, default_value_t = 0)]
    similar_seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// Benchmark to generate: adult, bank, compas, or employment.
    #[arg(long, value_parser = parse_dataset)]
    dataset: DatasetKind,
    #[arg(long, default_value_t = 4000)]
    rows: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> std::result::Result<ModeSelection, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_dataset(s: &str) -> std::result::Result<DatasetKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not errors.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Manipulate(args) => cmd_manipulate(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let schema = FeatureSchema::from_path(&args.schema)?;
    let config = TrainRunConfig {
        train: TrainConfig {
            hidden_dims: args.hidden,
            epochs: args.epochs,
            batch_size: args.batch_size,
            learning_rate: args.learning_rate,
            l2: args.l2,
            seed: args.seed,
        },
        test_fraction: args.test_fraction,
    };
    let summary = run_train(&schema, &args.data, &args.out, &config)?;
    println!(
        "loaded {} rows ({} rejected); split {} train / {} test",
        summary.rows_accepted, summary.rows_rejected, summary.train_size, summary.test_size
    );
    println!(
        "final epoch loss {:.6}; accuracy train {:.4}, test {:.4}",
        summary.final_loss, summary.train_accuracy, summary.test_accuracy
    );
    println!("checkpoint: {}", summary.model_path.display());
    println!("test split: {}", summary.test_path.display());
    Ok(())
}

fn cmd_attack(args: AttackArgs) -> Result<()> {
    let schema = FeatureSchema::from_path(&args.schema)?;
    let config = AttackRunConfig {
        selection: args.mode,
        max_steps: args.steps,
        grid_points: args.grid_points,
        tau_dec: args.tau_dec,
        fgsm_epsilon: args.epsilon,
        similar: SimilarConfig {
            cap: args.similar_cap,
            seed: args.similar_seed,
        },
        seed: args.seed,
        trajectory_exports: args.trajectories,
    };
    let output = run_attack(&schema, &args.model, &args.data, &args.out, &config)?;
    if output.partial.is_empty() {
        let n = output.bundles.len();
        let count = |f: &dyn Fn(&rifair::evaluation::InstanceBundle) -> bool| {
            output.bundles.iter().filter(|b| f(b)).count()
        };
        let succ = |i: usize| count(&|b| b.modes[i].success);
        println!(
            "attacked {n} instances: tb {}/{n}, fb {}/{n}, ff {}/{n}, fgsm {}/{n}, adf {}/{n}",
            succ(0),
            succ(1),
            succ(2),
            count(&|b| b.fgsm_flip),
            count(&|b| b.adf_success),
        );
    } else {
        let n = output.partial.len();
        let succ = output.partial.iter().filter(|r| r.success).count();
        println!(
            "attacked {n} instances with {}: {succ}/{n} successful",
            args.mode.tag()
        );
    }
    println!("results: {}", output.results_path.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let config = RifCheckConfig {
        tau: args.tau,
        percentile: args.percentile,
    };
    let report = run_evaluate(&args.data, &args.out, &config)?;
    println!(
        "{} instances: acc {:.4}, fta {:.4}",
        report.n_instances, report.acc, report.fta
    );
    println!(
        "attack rates: rif {:.4} (ar {:.4}, if {:.4}); tbr {:.4}, fbr {:.4}, ffr {:.4}, tfr {:.4}",
        report.rif_attack,
        report.ar_attack,
        report.if_attack,
        report.tbr,
        report.fbr,
        report.ffr,
        report.tfr
    );
    println!(
        "n_attack histogram {:?}; k_emp {:.4}; rif pass rate {:.4}",
        report.n_attack_hist, report.k_emp, report.rif_pass_rate
    );
    println!("report: {}", args.out.join("eval_report.json").display());
    Ok(())
}

fn cmd_manipulate(args: ManipulateArgs) -> Result<()> {
    let schema = FeatureSchema::from_path(&args.schema)?;
    let config = ManipulateRunConfig {
        strategy: args.strategy,
        budget: args.budget,
        seed: args.seed,
        similar: SimilarConfig {
            cap: args.similar_cap,
            seed: args.similar_seed,
        },
        tau_dec: args.tau_dec,
    };
    let report = run_manipulate(&schema, &args.model, &args.data, &args.out, &config)?;
    println!(
        "{}: replaced {} of {} budgeted",
        report.strategy, report.budget_used, report.budget
    );
    if let Some(warning) = &report.warning {
        println!("warning: {warning}");
    }
    println!(
        "ACC {:.4} -> {:.4}; FTA {:.4} -> {:.4}",
        report.before.acc, report.after.acc, report.before.fta, report.after.fta
    );
    println!(
        "report: {}",
        args.out.join("manipulation_report.json").display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let summary = run_synth(args.dataset, args.rows, args.seed, &args.out)?;
    println!(
        "wrote {} rows (positive rate {:.4})",
        summary.rows, summary.positive_rate
    );
    println!("schema: {}", summary.schema_path.display());
    println!("data: {}", summary.data_path.display());
    Ok(())
}
