//! End-to-end pipeline stages shared by the command-line binary and the
//! integration tests: train a checkpoint, attack a test set, evaluate the
//! resulting bundles, manipulate a test set from an attack pool, and
//! generate synthetic benchmark data. Every stage reads and writes plain
//! files (JSON / JSON-lines / CSV / SVG) under an output directory, and
//! each writes a manifest whose only non-reproducible field is the
//! timestamp, so identical inputs and seeds give byte-identical artifacts
//! otherwise.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{
    adf_baseline, choose_counterpart, fgsm_baseline, rifair_attack, AttackConfig, AttackMode,
    AttackResult,
};
use crate::dataset::{encode, load_csv, split, to_csv, Instance, LoadReport, SimilarConfig};
use crate::diagnostics::shared_pid_fraction;
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate, observe_instance, EvalReport, InstanceBundle, ModeRecord, RifCheckConfig,
};
use crate::manipulation::{
    build_pool, evaluate_manipulated, evaluate_set, manipulate, Strategy, Table7Row,
};
use crate::model::{accuracy, train, MlpParams, TrainConfig};
use crate::schema::FeatureSchema;
use crate::svg::trajectory_chart;
use crate::synth::{generate, DatasetKind};

/// Model checkpoint written by the train stage.
pub const MODEL_FILE: &str = "model.json";
/// Per-epoch mean training loss, CSV.
pub const TRAIN_LOSS_FILE: &str = "train_loss.csv";
/// Training half of the split, CSV.
pub const TRAIN_SPLIT_FILE: &str = "train.csv";
/// Held-out half of the split, CSV; the attack stage's usual input.
pub const TEST_SPLIT_FILE: &str = "test.csv";
/// Row-level accept/reject report of the CSV load.
pub const LOAD_REPORT_FILE: &str = "load_report.json";
/// JSON-lines attack results, one line per test instance.
pub const RESULTS_FILE: &str = "results.jsonl";
/// Subdirectory holding per-pair trajectory CSVs and SVG charts.
pub const TRAJECTORY_DIR: &str = "trajectories";
/// Aggregated evaluation report, JSON.
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
/// Per-instance evaluation rows, CSV.
pub const PER_INSTANCE_FILE: &str = "per_instance.csv";
/// Before/after metric table of a manipulation run, JSON.
pub const MANIPULATION_REPORT_FILE: &str = "manipulation_report.json";
/// Original/replaced provenance of a manipulated set, CSV.
pub const PROVENANCE_FILE: &str = "provenance.csv";
/// Schema emitted by the synth stage, JSON.
pub const SCHEMA_FILE: &str = "schema.json";
/// Data emitted by the synth stage, CSV.
pub const DATA_FILE: &str = "data.csv";

/// Run manifest written by every stage. All fields derive from the
/// inputs except `timestamp_unix`, which is the single place wall-clock
/// time appears in any artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Attack-mode selection, or "-" when not applicable.
    pub mode: String,
    /// Step budget `T`, or 0 when not applicable.
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
    pub schema_hash: String,
    pub model_checkpoint_hash: Option<String>,
    pub dataset_hash: Option<String>,
    /// Stage-specific knobs, recorded verbatim.
    pub params: serde_json::Value,
    /// Seconds since the Unix epoch at write time; the only field that
    /// differs between identical runs.
    pub timestamp_unix: u64,
}

impl RunManifest {
    /// File name used for a stage's manifest, e.g. `train_manifest.json`.
    pub fn file_name(command: &str) -> String {
        format!("{command}_manifest.json")
    }
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Hex SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes =
        fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json + "\n").map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(())
}

fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = out_dir.join(RunManifest::file_name(&manifest.command));
    write_json(&path, manifest)?;
    Ok(path)
}

/// Verify that a checkpoint was trained under the given schema.
fn check_schema_binding(params: &MlpParams, schema: &FeatureSchema) -> Result<()> {
    let expected = schema.hash();
    if params.schema_hash != expected {
        return Err(Error::Schema(format!(
            "checkpoint was trained under schema {} but the given schema hashes to {}",
            params.schema_hash, expected
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Knobs of the train stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub train: TrainConfig,
    /// Fraction of rows held out as the test split (stratified by label,
    /// drawn with the training seed).
    pub test_fraction: f64,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            train: TrainConfig::default(),
            test_fraction: 0.2,
        }
    }
}

/// What the train stage produced and where.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model_path: PathBuf,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub rows_accepted: usize,
    pub rows_rejected: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Train a checkpoint: load the CSV under the schema, split it, fit the
/// MLP, and write the checkpoint, both split halves, the load report,
/// the per-epoch loss curve, and a manifest into `out_dir`.
pub fn run_train(
    schema: &FeatureSchema,
    data_path: &Path,
    out_dir: &Path,
    config: &TrainRunConfig,
) -> Result<TrainSummary> {
    let dataset = load_csv(data_path, schema)?;
    let (train_set, test_set) = split(&dataset.instances, config.test_fraction, config.train.seed)?;
    let output = train(&train_set, schema, &config.train)?;

    ensure_dir(out_dir)?;
    let model_path = out_dir.join(MODEL_FILE);
    output.params.save(&model_path)?;
    let train_path = out_dir.join(TRAIN_SPLIT_FILE);
    write_text(&train_path, &to_csv(&train_set, schema))?;
    let test_path = out_dir.join(TEST_SPLIT_FILE);
    write_text(&test_path, &to_csv(&test_set, schema))?;
    write_json(&out_dir.join(LOAD_REPORT_FILE), &dataset.report)?;

    let mut loss_csv = String::from("epoch,mean_loss\n");
    for (epoch, loss) in output.epoch_loss.iter().enumerate() {
        loss_csv.push_str(&format!("{epoch},{loss}\n"));
    }
    write_text(&out_dir.join(TRAIN_LOSS_FILE), &loss_csv)?;

    let summary = TrainSummary {
        model_path: model_path.clone(),
        train_path,
        test_path,
        rows_accepted: dataset.report.accepted,
        rows_rejected: dataset.report.rejected.len(),
        train_size: train_set.len(),
        test_size: test_set.len(),
        final_loss: *output.epoch_loss.last().expect("at least one epoch"),
        train_accuracy: accuracy(&output.params, &train_set, schema)?,
        test_accuracy: accuracy(&output.params, &test_set, schema)?,
    };

    write_manifest(
        out_dir,
        &RunManifest {
            command: "train".into(),
            mode: "-".into(),
            t: 0,
            seed: config.train.seed,
            schema_hash: schema.hash(),
            model_checkpoint_hash: Some(file_sha256(&model_path)?),
            dataset_hash: Some(file_sha256(data_path)?),
            params: serde_json::json!({
                "config": config,
                "rows_accepted": summary.rows_accepted,
                "rows_rejected": summary.rows_rejected,
                "train_size": summary.train_size,
                "test_size": summary.test_size,
                "train_accuracy": summary.train_accuracy,
                "test_accuracy": summary.test_accuracy,
            }),
            timestamp_unix: now_unix(),
        },
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

/// Which attacks the attack stage executes. `All` runs the gradient-sign
/// and gradient-agreement baselines plus all three joint-attack modes and
/// is the only selection that yields complete result bundles; a narrower
/// selection emits one summary line per instance instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    All,
    Rifair(AttackMode),
    Fgsm,
    Adf,
}

impl ModeSelection {
    pub fn tag(self) -> &'static str {
        match self {
            ModeSelection::All => "all",
            ModeSelection::Rifair(m) => m.tag(),
            ModeSelection::Fgsm => "fgsm",
            ModeSelection::Adf => "adf",
        }
    }
}

impl FromStr for ModeSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(ModeSelection::All),
            "fgsm" => Ok(ModeSelection::Fgsm),
            "adf" => Ok(ModeSelection::Adf),
            other => AttackMode::from_str(other).map(ModeSelection::Rifair),
        }
    }
}

/// Knobs of the attack stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRunConfig {
    pub selection: ModeSelection,
    /// Step budget `T` for the joint attack and the agreement baseline.
    pub max_steps: usize,
    /// Grid resolution for continuous replacement candidates.
    pub grid_points: usize,
    /// Decision threshold.
    pub tau_dec: f64,
    /// Step size of the gradient-sign baseline, in normalized units.
    pub fgsm_epsilon: f64,
    /// Similar-set enumeration shared by every attack and observation in
    /// the run (and expected by downstream stages).
    pub similar: SimilarConfig,
    pub seed: u64,
    /// Trajectory CSV/SVG files are written for this many instances
    /// (from the start of the test set); 0 disables the export.
    pub trajectory_exports: usize,
}

impl Default for AttackRunConfig {
    fn default() -> Self {
        AttackRunConfig {
            selection: ModeSelection::All,
            max_steps: 10,
            grid_points: 5,
            tau_dec: 0.5,
            fgsm_epsilon: 0.1,
            similar: SimilarConfig::default(),
            seed: 42,
            trajectory_exports: 8,
        }
    }
}

impl AttackRunConfig {
    fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("steps must be >= 1".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidArgument("grid points must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.tau_dec) {
            return Err(Error::InvalidArgument("tau_dec must lie in [0, 1]".into()));
        }
        if self.fgsm_epsilon < 0.0 {
            return Err(Error::InvalidArgument("epsilon must be >= 0".into()));
        }
        if self.similar.cap < 2 {
            return Err(Error::InvalidArgument(
                "the similar-set cap must be >= 2 so every instance has a counterpart".into(),
            ));
        }
        Ok(())
    }
}

/// One JSON line of a narrowed (non-`all`) attack run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialRecord {
    pub id: usize,
    pub y: usize,
    /// Which attack ran: `tb`, `fb`, `ff`, `fgsm`, or `adf`.
    pub attack: String,
    pub success: bool,
    /// Perturbation rounds executed (1 for the single-shot baseline).
    pub n_steps: usize,
}

/// In-memory view of an attack run. Exactly one of `bundles` and
/// `partial` is non-empty, matching the selection.
#[derive(Debug, Clone)]
pub struct AttackOutput {
    pub bundles: Vec<InstanceBundle>,
    pub partial: Vec<PartialRecord>,
    /// Joint-attack results with full trajectories, one inner vector per
    /// instance in input order (three entries under `All`, one under a
    /// single joint mode, none under a baseline selection).
    pub rifair_results: Vec<Vec<AttackResult>>,
    pub results_path: PathBuf,
}

/// Everything the attack stage measures about one instance under the
/// `All` selection.
fn attack_instance(
    params: &MlpParams,
    inst: &Instance,
    schema: &FeatureSchema,
    config: &AttackRunConfig,
) -> Result<(InstanceBundle, Vec<AttackResult>)> {
    let clean = observe_instance(params, inst, schema, config.similar, config.tau_dec)?;
    let set = config.similar.enumerate(inst, schema)?;
    let vp = choose_counterpart(params, &set, schema)?
        .ok_or_else(|| Error::Data(format!("instance {} has no similar counterpart", inst.id)))?;

    let fgsm_adv = fgsm_baseline(params, inst, schema, config.fgsm_epsilon)?;
    let fgsm_label = params.predict_label(&encode(&fgsm_adv, schema)?.dense, config.tau_dec)?;
    let fgsm_flip = fgsm_label != clean.label;
    let adf = adf_baseline(
        params,
        &set,
        schema,
        config.max_steps,
        config.grid_points,
        config.tau_dec,
    )?;

    let mut modes = Vec::with_capacity(AttackMode::ALL.len());
    let mut results = Vec::with_capacity(AttackMode::ALL.len());
    for mode in AttackMode::ALL {
        let (record, result) = run_one_mode(params, inst, &vp, schema, config, mode)?;
        modes.push(record);
        results.push(result);
    }

    let bundle = InstanceBundle {
        id: inst.id,
        y: inst.label,
        clean_v: inst.clone(),
        clean_label: clean.label,
        clean_positive: clean.positive,
        clean_members: clean.members,
        clean_outcome: clean.outcome,
        fgsm_flip,
        adf_success: adf.success,
        modes,
    };
    Ok((bundle, results))
}

/// Run one joint-attack mode and classify its final state under the
/// full similar set.
fn run_one_mode(
    params: &MlpParams,
    inst: &Instance,
    vp: &Instance,
    schema: &FeatureSchema,
    config: &AttackRunConfig,
    mode: AttackMode,
) -> Result<(ModeRecord, AttackResult)> {
    let mut attack_config = AttackConfig::new(mode, inst.label);
    attack_config.max_steps = config.max_steps;
    attack_config.grid_points = config.grid_points;
    attack_config.tau_dec = config.tau_dec;
    attack_config.seed = config.seed;

    let mut result = rifair_attack(params, inst, vp, schema, &attack_config)?;
    let obs = observe_instance(
        params,
        &result.adv_v,
        schema,
        config.similar,
        config.tau_dec,
    )?;
    result.outcome = Some(obs.outcome);
    let record = ModeRecord {
        mode,
        success: result.success,
        n_steps: result.steps.len(),
        adv_v: result.adv_v.clone(),
        adv_label: obs.label,
        adv_positive: obs.positive,
        members: obs.members,
        outcome: obs.outcome,
        shared_pid: shared_pid_fraction(&result.trajectory_v, &result.trajectory_vp),
    };
    Ok((record, result))
}

/// Export the trajectory CSV and SVG chart of one joint-attack result.
fn export_trajectory(
    dir: &Path,
    result: &AttackResult,
    schema: &FeatureSchema,
    params: &MlpParams,
    tau_dec: f64,
) -> Result<()> {
    let id = result.base_v.id;
    let tag = result.mode.tag();
    write_text(
        &dir.join(format!("trajectory_{id:05}_{tag}.csv")),
        &result.to_trajectory_csv(schema),
    )?;
    let f_v = params
        .forward(&encode(&result.base_v, schema)?.dense)?
        .positive();
    let f_vp = params
        .forward(&encode(&result.base_vp, schema)?.dense)?
        .positive();
    let title = format!("instance {id}, {tag} trajectory");
    let chart = trajectory_chart(
        &title,
        f_v,
        &result.trajectory_v,
        f_vp,
        &result.trajectory_vp,
        tau_dec,
    );
    write_text(&dir.join(format!("trajectory_{id:05}_{tag}.svg")), &chart)
}

/// Attack every instance of a test CSV with the selected attacks and
/// stream one JSON line per instance into `results.jsonl`. Under the
/// `All` selection each line is a complete bundle (the format the
/// evaluate and manipulate stages consume); under a narrower selection
/// each line is a [`PartialRecord`]. Trajectory CSV/SVG exports cover
/// the first `trajectory_exports` instances.
pub fn run_attack(
    schema: &FeatureSchema,
    model_path: &Path,
    data_path: &Path,
    out_dir: &Path,
    config: &AttackRunConfig,
) -> Result<AttackOutput> {
    config.validate()?;
    let params = MlpParams::load(model_path)?;
    check_schema_binding(&params, schema)?;
    let dataset = load_csv(data_path, schema)?;
    if dataset.is_empty() {
        return Err(Error::Data(format!(
            "no usable instances in {}",
            data_path.display()
        )));
    }

    ensure_dir(out_dir)?;
    let trajectory_dir = out_dir.join(TRAJECTORY_DIR);

    let mut bundles = Vec::new();
    let mut partial = Vec::new();
    let mut rifair_results: Vec<Vec<AttackResult>> = Vec::new();

    match config.selection {
        ModeSelection::All => {
            let outcomes: Vec<(InstanceBundle, Vec<AttackResult>)> = dataset
                .instances
                .par_iter()
                .map(|inst| attack_instance(&params, inst, schema, config))
                .collect::<Result<_>>()?;
            for (bundle, results) in outcomes {
                bundles.push(bundle);
                rifair_results.push(results);
            }
        }
        ModeSelection::Rifair(mode) => {
            let outcomes: Vec<(PartialRecord, AttackResult)> = dataset
                .instances
                .par_iter()
                .map(|inst| {
                    let set = config.similar.enumerate(inst, schema)?;
                    let vp = choose_counterpart(&params, &set, schema)?.ok_or_else(|| {
                        Error::Data(format!("instance {} has no similar counterpart", inst.id))
                    })?;
                    let (record, result) = run_one_mode(&params, inst, &vp, schema, config, mode)?;
                    Ok((
                        PartialRecord {
                            id: inst.id,
                            y: inst.label,
                            attack: mode.tag().into(),
                            success: record.success,
                            n_steps: record.n_steps,
                        },
                        result,
                    ))
                })
                .collect::<Result<_>>()?;
            for (record, result) in outcomes {
                partial.push(record);
                rifair_results.push(vec![result]);
            }
        }
        ModeSelection::Fgsm => {
            partial = dataset
                .instances
                .par_iter()
                .map(|inst| {
                    let x = encode(inst, schema)?.dense;
                    let clean_label = params.predict_label(&x, config.tau_dec)?;
                    let adv = fgsm_baseline(&params, inst, schema, config.fgsm_epsilon)?;
                    let adv_label =
                        params.predict_label(&encode(&adv, schema)?.dense, config.tau_dec)?;
                    Ok(PartialRecord {
                        id: inst.id,
                        y: inst.label,
                        attack: "fgsm".into(),
                        success: adv_label != clean_label,
                        n_steps: 1,
                    })
                })
                .collect::<Result<_>>()?;
        }
        ModeSelection::Adf => {
            partial = dataset
                .instances
                .par_iter()
                .map(|inst| {
                    let set = config.similar.enumerate(inst, schema)?;
                    let adf = adf_baseline(
                        &params,
                        &set,
                        schema,
                        config.max_steps,
                        config.grid_points,
                        config.tau_dec,
                    )?;
                    Ok(PartialRecord {
                        id: inst.id,
                        y: inst.label,
                        attack: "adf".into(),
                        success: adf.success,
                        n_steps: adf.steps,
                    })
                })
                .collect::<Result<_>>()?;
        }
    }

    let results_path = out_dir.join(RESULTS_FILE);
    let mut lines = String::new();
    if partial.is_empty() {
        for bundle in &bundles {
            lines.push_str(&serde_json::to_string(bundle)?);
            lines.push('\n');
        }
    } else {
        for record in &partial {
            lines.push_str(&serde_json::to_string(record)?);
            lines.push('\n');
        }
    }
    write_text(&results_path, &lines)?;

    if config.trajectory_exports > 0 && !rifair_results.is_empty() {
        ensure_dir(&trajectory_dir)?;
        for results in rifair_results.iter().take(config.trajectory_exports) {
            for result in results {
                export_trajectory(&trajectory_dir, result, schema, &params, config.tau_dec)?;
            }
        }
    }

    write_manifest(
        out_dir,
        &RunManifest {
            command: "attack".into(),
            mode: config.selection.tag().into(),
            t: config.max_steps,
            seed: config.seed,
            schema_hash: schema.hash(),
            model_checkpoint_hash: Some(file_sha256(model_path)?),
            dataset_hash: Some(file_sha256(data_path)?),
            params: serde_json::json!({
                "grid_points": config.grid_points,
                "tau_dec": config.tau_dec,
                "fgsm_epsilon": config.fgsm_epsilon,
                "similar_cap": config.similar.cap,
                "similar_seed": config.similar.seed,
                "trajectory_exports": config.trajectory_exports,
                "n_instances": dataset.len(),
            }),
            timestamp_unix: now_unix(),
        },
    )?;

    Ok(AttackOutput {
        bundles,
        partial,
        rifair_results,
        results_path,
    })
}

/// Read a `results.jsonl` of complete bundles, with line numbers in
/// error messages.
pub fn read_bundles(path: &Path) -> Result<Vec<InstanceBundle>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read results {}: {e}", path.display())))?;
    let mut bundles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bundle: InstanceBundle = serde_json::from_str(line).map_err(|e| {
            Error::Data(format!(
                "{}:{}: not a result bundle (was the attack run with a narrowed mode?): {e}",
                path.display(),
                i + 1
            ))
        })?;
        bundles.push(bundle);
    }
    if bundles.is_empty() {
        return Err(Error::Data(format!(
            "no result bundles in {}",
            path.display()
        )));
    }
    Ok(bundles)
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Aggregate a results file into the evaluation report and write the
/// report JSON, the per-instance CSV, and a manifest.
pub fn run_evaluate(
    results_path: &Path,
    out_dir: &Path,
    config: &RifCheckConfig,
) -> Result<EvalReport> {
    let bundles = read_bundles(results_path)?;
    let report = aggregate(&bundles, config)?;
    ensure_dir(out_dir)?;
    write_json(&out_dir.join(EVAL_REPORT_FILE), &report)?;
    write_text(&out_dir.join(PER_INSTANCE_FILE), &report.per_instance_csv())?;
    write_manifest(
        out_dir,
        &RunManifest {
            command: "evaluate".into(),
            mode: "-".into(),
            t: 0,
            seed: 0,
            schema_hash: String::new(),
            model_checkpoint_hash: None,
            dataset_hash: Some(file_sha256(results_path)?),
            params: serde_json::json!({
                "tau": config.tau,
                "percentile": config.percentile,
                "n_instances": report.n_instances,
            }),
            timestamp_unix: now_unix(),
        },
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// manipulate
// ---------------------------------------------------------------------------

/// Knobs of the manipulate stage. The similar-set parameters must match
/// the attack run that produced the results file, otherwise the recorded
/// outcome classes and the re-evaluation disagree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManipulateRunConfig {
    pub strategy: Strategy,
    pub budget: usize,
    pub seed: u64,
    pub similar: SimilarConfig,
    pub tau_dec: f64,
}

/// Before/after metric table of one manipulation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManipulationReport {
    pub strategy: String,
    pub budget: usize,
    pub budget_used: usize,
    pub warning: Option<String>,
    pub before: Table7Row,
    pub after: Table7Row,
}

/// Rebuild the test set from an attack results file, replace up to
/// `budget` items per the strategy, and report the headline metrics
/// before and after, plus a provenance CSV.
pub fn run_manipulate(
    schema: &FeatureSchema,
    model_path: &Path,
    results_path: &Path,
    out_dir: &Path,
    config: &ManipulateRunConfig,
) -> Result<ManipulationReport> {
    let params = MlpParams::load(model_path)?;
    check_schema_binding(&params, schema)?;
    let mut bundles = read_bundles(results_path)?;
    bundles.sort_by_key(|b| b.id);

    let test_set: Vec<Instance> = bundles.iter().map(|b| b.clean_v.clone()).collect();
    let outcomes: Vec<_> = bundles.iter().map(|b| b.clean_outcome).collect();
    let pool = build_pool(&bundles);
    let manipulated = manipulate(
        &test_set,
        &outcomes,
        &pool,
        config.strategy,
        config.budget,
        config.seed,
    )?;

    let before = evaluate_set(&params, &test_set, schema, config.similar, config.tau_dec)?;
    let after = evaluate_manipulated(
        &params,
        &manipulated,
        schema,
        config.similar,
        config.tau_dec,
    )?;

    let report = ManipulationReport {
        strategy: config.strategy.tag().into(),
        budget: config.budget,
        budget_used: manipulated.budget_used,
        warning: manipulated.warning.clone(),
        before,
        after,
    };

    ensure_dir(out_dir)?;
    write_json(&out_dir.join(MANIPULATION_REPORT_FILE), &report)?;
    write_text(
        &out_dir.join(PROVENANCE_FILE),
        &manipulated.provenance_csv(),
    )?;
    write_manifest(
        out_dir,
        &RunManifest {
            command: "manipulate".into(),
            mode: "-".into(),
            t: 0,
            seed: config.seed,
            schema_hash: schema.hash(),
            model_checkpoint_hash: Some(file_sha256(model_path)?),
            dataset_hash: Some(file_sha256(results_path)?),
            params: serde_json::json!({
                "strategy": config.strategy.tag(),
                "budget": config.budget,
                "budget_used": report.budget_used,
                "similar_cap": config.similar.cap,
                "similar_seed": config.similar.seed,
                "tau_dec": config.tau_dec,
            }),
            timestamp_unix: now_unix(),
        },
    )?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

/// What the synth stage produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSummary {
    pub schema_path: PathBuf,
    pub data_path: PathBuf,
    pub rows: usize,
    pub positive_rate: f64,
}

/// Generate a synthetic benchmark dataset and write its schema JSON and
/// data CSV.
pub fn run_synth(
    kind: DatasetKind,
    rows: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<SynthSummary> {
    let schema = crate::synth::schema(kind);
    let instances = generate(kind, rows, seed)?;
    ensure_dir(out_dir)?;
    let schema_path = out_dir.join(SCHEMA_FILE);
    schema.to_path(&schema_path)?;
    let data_path = out_dir.join(DATA_FILE);
    write_text(&data_path, &to_csv(&instances, &schema))?;
    let positive_rate =
        instances.iter().filter(|i| i.label == 1).count() as f64 / instances.len() as f64;

    write_manifest(
        out_dir,
        &RunManifest {
            command: "synth".into(),
            mode: "-".into(),
            t: 0,
            seed,
            schema_hash: schema.hash(),
            model_checkpoint_hash: None,
            dataset_hash: Some(file_sha256(&data_path)?),
            params: serde_json::json!({
                "dataset": kind.tag(),
                "rows": rows,
                "positive_rate": positive_rate,
            }),
            timestamp_unix: now_unix(),
        },
    )?;
    Ok(SynthSummary {
        schema_path,
        data_path,
        rows: instances.len(),
        positive_rate,
    })
}

/// Copy of a load report kept for readers of this module's outputs.
pub type RunLoadReport = LoadReport;
