//! Seeded synthetic tabular data shaped like the four benchmark
//! datasets (Adult, Bank, COMPAS, Employment).
//!
//! The real corpora cannot be redistributed here, so each generator
//! reproduces the benchmark's *shape*: the same feature count, the same
//! sensitive attributes, and a planted label rule with three
//! properties that matter downstream:
//!
//! 1. **Learnable but noisy** — the label is a thresholded nonlinear
//!    score plus Gaussian noise, so a small MLP lands in the mid-0.8
//!    accuracy range rather than memorizing.
//! 2. **Mildly biased** — sensitive attributes carry small score
//!    offsets, so trained models acquire the sensitive-attribute
//!    dependence the fairness attacks need to exercise.
//! 3. **Deterministic** — one `ChaCha8` stream per call; the same
//!    `(kind, rows, seed)` always produces byte-identical CSVs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Instance, Value};
use crate::error::{Error, Result};
use crate::schema::{FeatureSchema, FeatureSpec};

/// Which benchmark shape to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Adult,
    Bank,
    Compas,
    Employment,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 4] = [
        DatasetKind::Adult,
        DatasetKind::Bank,
        DatasetKind::Compas,
        DatasetKind::Employment,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            DatasetKind::Adult => "adult",
            DatasetKind::Bank => "bank",
            DatasetKind::Compas => "compas",
            DatasetKind::Employment => "employment",
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adult" => Ok(DatasetKind::Adult),
            "bank" => Ok(DatasetKind::Bank),
            "compas" => Ok(DatasetKind::Compas),
            "employment" => Ok(DatasetKind::Employment),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset kind '{other}' (expected adult, bank, compas, or employment)"
            ))),
        }
    }
}

/// The schema of one benchmark shape.
pub fn schema(kind: DatasetKind) -> FeatureSchema {
    let result = match kind {
        DatasetKind::Adult => FeatureSchema::new(
            vec![
                FeatureSpec::continuous("age", 17.0, 90.0, false),
                FeatureSpec::categorical(
                    "workclass",
                    &[
                        "private",
                        "self_employed",
                        "federal_gov",
                        "state_gov",
                        "local_gov",
                        "unemployed",
                    ],
                    false,
                ),
                FeatureSpec::categorical(
                    "education",
                    &[
                        "hs_grad",
                        "some_college",
                        "bachelors",
                        "masters",
                        "doctorate",
                        "assoc",
                        "prof_school",
                        "no_diploma",
                    ],
                    false,
                ),
                FeatureSpec::continuous("education_num", 1.0, 16.0, false),
                FeatureSpec::categorical(
                    "marital_status",
                    &[
                        "married",
                        "never_married",
                        "divorced",
                        "separated",
                        "widowed",
                    ],
                    false,
                ),
                FeatureSpec::categorical(
                    "occupation",
                    &[
                        "exec_managerial",
                        "prof_specialty",
                        "tech_support",
                        "sales",
                        "craft_repair",
                        "adm_clerical",
                        "machine_op",
                        "other_service",
                    ],
                    false,
                ),
                FeatureSpec::categorical(
                    "relationship",
                    &[
                        "husband",
                        "wife",
                        "own_child",
                        "not_in_family",
                        "other_relative",
                        "unmarried",
                    ],
                    false,
                ),
                FeatureSpec::categorical(
                    "race",
                    &[
                        "white",
                        "black",
                        "asian_pac_islander",
                        "amer_indian_eskimo",
                        "other",
                    ],
                    true,
                ),
                FeatureSpec::categorical("gender", &["female", "male"], true),
                FeatureSpec::continuous("capital_gain", 0.0, 20000.0, false),
                FeatureSpec::continuous("capital_loss", 0.0, 5000.0, false),
                FeatureSpec::continuous("hours_per_week", 1.0, 99.0, false),
                FeatureSpec::categorical(
                    "native_country",
                    &["united_states", "mexico", "philippines", "other"],
                    false,
                ),
            ],
            "income",
            &["lte_50k", "gt_50k"],
        ),
        DatasetKind::Bank => FeatureSchema::new(
            vec![
                FeatureSpec::continuous("age", 18.0, 95.0, true),
                FeatureSpec::categorical(
                    "job",
                    &[
                        "admin",
                        "blue_collar",
                        "entrepreneur",
                        "management",
                        "retired",
                        "services",
                        "technician",
                        "unemployed",
                    ],
                    false,
                ),
                FeatureSpec::categorical("marital", &["married", "single", "divorced"], false),
                FeatureSpec::categorical(
                    "education",
                    &["primary", "secondary", "tertiary", "unknown"],
                    false,
                ),
                FeatureSpec::categorical("default", &["no", "yes"], false),
                FeatureSpec::continuous("balance", -2000.0, 100000.0, false),
                FeatureSpec::categorical("housing", &["no", "yes"], false),
                FeatureSpec::categorical("loan", &["no", "yes"], false),
                FeatureSpec::categorical("contact", &["cellular", "telephone", "unknown"], false),
                FeatureSpec::continuous("day", 1.0, 31.0, false),
                FeatureSpec::categorical(
                    "month",
                    &[
                        "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct",
                        "nov", "dec",
                    ],
                    false,
                ),
                FeatureSpec::continuous("duration", 0.0, 3000.0, false),
                FeatureSpec::continuous("campaign", 1.0, 40.0, false),
                FeatureSpec::continuous("pdays", -1.0, 900.0, false),
                FeatureSpec::continuous("previous", 0.0, 30.0, false),
                FeatureSpec::categorical(
                    "poutcome",
                    &["failure", "success", "other", "unknown"],
                    false,
                ),
            ],
            "subscribed",
            &["no", "yes"],
        ),
        DatasetKind::Compas => FeatureSchema::new(
            vec![
                FeatureSpec::categorical("gender", &["female", "male"], true),
                FeatureSpec::categorical(
                    "race",
                    &[
                        "african_american",
                        "caucasian",
                        "hispanic",
                        "asian",
                        "native_american",
                        "other",
                    ],
                    true,
                ),
                FeatureSpec::continuous("age", 18.0, 80.0, false),
                FeatureSpec::continuous("juv_fel_count", 0.0, 10.0, false),
                FeatureSpec::continuous("juv_misd_count", 0.0, 10.0, false),
                FeatureSpec::continuous("juv_other_count", 0.0, 10.0, false),
                FeatureSpec::continuous("priors_count", 0.0, 30.0, false),
                FeatureSpec::categorical("charge_degree", &["felony", "misdemeanor"], false),
                FeatureSpec::categorical(
                    "charge_desc",
                    &[
                        "battery",
                        "theft",
                        "drug_possession",
                        "dui",
                        "fraud",
                        "other",
                    ],
                    false,
                ),
                FeatureSpec::continuous("decile_score", 1.0, 10.0, false),
                FeatureSpec::categorical("score_text", &["low", "medium", "high"], false),
                FeatureSpec::continuous("v_decile_score", 1.0, 10.0, false),
                FeatureSpec::categorical("v_score_text", &["low", "medium", "high"], false),
                FeatureSpec::continuous("days_in_jail", 0.0, 1000.0, false),
                FeatureSpec::categorical("is_violent_recid", &["no", "yes"], false),
                FeatureSpec::categorical(
                    "custody_status",
                    &["released", "probation", "jail"],
                    false,
                ),
                FeatureSpec::categorical(
                    "marital_status",
                    &["single", "married", "divorced", "separated", "widowed"],
                    false,
                ),
                FeatureSpec::categorical(
                    "supervision_level",
                    &["none", "low", "medium", "high"],
                    false,
                ),
            ],
            "two_year_recid",
            &["no", "yes"],
        ),
        DatasetKind::Employment => FeatureSchema::new(
            vec![
                FeatureSpec::continuous("age", 16.0, 90.0, false),
                FeatureSpec::categorical(
                    "education",
                    &[
                        "grade_10",
                        "hs_diploma",
                        "some_college",
                        "associate",
                        "bachelors",
                        "masters",
                        "doctorate",
                        "no_schooling",
                    ],
                    false,
                ),
                FeatureSpec::categorical(
                    "marital_status",
                    &[
                        "never_married",
                        "married",
                        "divorced",
                        "separated",
                        "widowed",
                    ],
                    false,
                ),
                FeatureSpec::categorical(
                    "relationship",
                    &[
                        "self",
                        "spouse",
                        "biological_child",
                        "adopted_child",
                        "parent",
                        "other",
                    ],
                    false,
                ),
                FeatureSpec::categorical("disability", &["without", "with"], false),
                FeatureSpec::categorical(
                    "parents_employment",
                    &["both_in_labor_force", "one_in_labor_force", "neither"],
                    false,
                ),
                FeatureSpec::categorical(
                    "citizenship",
                    &["born_in_us", "naturalized", "not_citizen"],
                    false,
                ),
                FeatureSpec::categorical("mobility", &["same_house", "moved"], false),
                FeatureSpec::categorical(
                    "military",
                    &["never_served", "active_duty", "veteran"],
                    false,
                ),
                FeatureSpec::categorical("ancestry", &["single", "multiple"], false),
                FeatureSpec::categorical("nativity", &["native", "foreign_born"], false),
                FeatureSpec::categorical("hearing_difficulty", &["no", "yes"], false),
                FeatureSpec::categorical("vision_difficulty", &["no", "yes"], false),
                FeatureSpec::categorical("cognitive_difficulty", &["no", "yes"], false),
                FeatureSpec::categorical("gender", &["female", "male"], true),
                FeatureSpec::categorical(
                    "race",
                    &[
                        "white",
                        "black_or_african_american",
                        "asian",
                        "american_indian",
                        "two_or_more_races",
                        "other",
                    ],
                    true,
                ),
            ],
            "employed",
            &["no", "yes"],
        ),
    };
    result.expect("built-in schema is valid")
}

/// Standard normal draw via Box–Muller on the shared uniform stream.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn uniform(rng: &mut ChaCha8Rng, min: f64, max: f64) -> f64 {
    min + (max - min) * rng.gen::<f64>()
}

fn cat(rng: &mut ChaCha8Rng, k: usize) -> usize {
    rng.gen_range(0..k)
}

/// Normalized position of a continuous value within declared bounds.
fn norm(v: f64, min: f64, max: f64) -> f64 {
    (v - min) / (max - min)
}

struct Row {
    values: Vec<Value>,
    score: f64,
}

fn adult_row(rng: &mut ChaCha8Rng) -> Row {
    let age = uniform(rng, 17.0, 90.0);
    let workclass = cat(rng, 6);
    let education = cat(rng, 8);
    let edu_num = uniform(rng, 1.0, 16.0);
    let marital = cat(rng, 5);
    let occupation = cat(rng, 8);
    let relationship = cat(rng, 6);
    let race = cat(rng, 5);
    let gender = cat(rng, 2);
    let gain = if rng.gen::<f64>() < 0.75 {
        0.0
    } else {
        20000.0 * rng.gen::<f64>().powi(2)
    };
    let loss = if rng.gen::<f64>() < 0.85 {
        0.0
    } else {
        5000.0 * rng.gen::<f64>()
    };
    let hours = uniform(rng, 1.0, 99.0);
    let country = cat(rng, 4);

    let e = norm(edu_num, 1.0, 16.0);
    let h = norm(hours, 1.0, 99.0);
    let a = norm(age, 17.0, 90.0);
    let g = norm(gain, 0.0, 20000.0);
    // Non-sensitive leverage is kept moderate relative to the planted
    // group offsets, so a model fit to this data can be split on a
    // sensitive attribute far more easily than it can be pushed across
    // the decision boundary outright.
    const OCC_W: [f64; 8] = [0.32, 0.22, 0.10, 0.03, -0.06, -0.13, -0.22, -0.32];
    const MAR_W: [f64; 5] = [0.32, -0.22, -0.06, -0.10, -0.06];
    const RACE_W: [f64; 5] = [0.30, -0.23, 0.19, -0.21, -0.04];
    const GEN_W: [f64; 2] = [-0.45, 0.45];
    let score = 1.28 * e
        + 0.89 * h
        + 0.57 * a
        + 0.83 * g
        + 0.64 * e * h
        + OCC_W[occupation]
        + MAR_W[marital]
        + RACE_W[race]
        + GEN_W[gender]
        - 1.57;

    Row {
        values: vec![
            Value::Num(age),
            Value::Cat(workclass),
            Value::Cat(education),
            Value::Num(edu_num),
            Value::Cat(marital),
            Value::Cat(occupation),
            Value::Cat(relationship),
            Value::Cat(race),
            Value::Cat(gender),
            Value::Num(gain),
            Value::Num(loss),
            Value::Num(hours),
            Value::Cat(country),
        ],
        score,
    }
}

fn bank_row(rng: &mut ChaCha8Rng) -> Row {
    let age = uniform(rng, 18.0, 95.0);
    let job = cat(rng, 8);
    let marital = cat(rng, 3);
    let education = cat(rng, 4);
    let default = cat(rng, 2);
    let balance = uniform(rng, -2000.0, 100000.0);
    let housing = cat(rng, 2);
    let loan = cat(rng, 2);
    let contact = cat(rng, 3);
    let day = uniform(rng, 1.0, 31.0);
    let month = cat(rng, 12);
    let duration = 3000.0 * rng.gen::<f64>().powi(2);
    let campaign = uniform(rng, 1.0, 40.0);
    let pdays = uniform(rng, -1.0, 900.0);
    let previous = uniform(rng, 0.0, 30.0);
    let poutcome = cat(rng, 4);

    let dur = norm(duration, 0.0, 3000.0);
    let bal = norm(balance, -2000.0, 100000.0);
    let cam = norm(campaign, 1.0, 40.0);
    let prev = norm(previous, 0.0, 30.0);
    // Older customers (the >= 40 sensitive group) subscribe slightly
    // more often, planting the age dependence.
    let senior = f64::from(age >= 40.0);
    const POUT_W: [f64; 4] = [-0.35, 0.80, 0.05, 0.00];
    const EDU_W: [f64; 4] = [-0.15, 0.00, 0.25, -0.05];
    let score = 2.4 * dur + 1.1 * bal - 0.9 * cam
        + 0.8 * prev * dur
        + POUT_W[poutcome]
        + EDU_W[education]
        + 0.30 * senior
        - 0.55 * f64::from(loan == 1)
        - 0.25 * f64::from(default == 1)
        - 1.05;

    Row {
        values: vec![
            Value::Num(age),
            Value::Cat(job),
            Value::Cat(marital),
            Value::Cat(education),
            Value::Cat(default),
            Value::Num(balance),
            Value::Cat(housing),
            Value::Cat(loan),
            Value::Cat(contact),
            Value::Num(day),
            Value::Cat(month),
            Value::Num(duration),
            Value::Num(campaign),
            Value::Num(pdays),
            Value::Num(previous),
            Value::Cat(poutcome),
        ],
        score,
    }
}

fn compas_row(rng: &mut ChaCha8Rng) -> Row {
    let gender = cat(rng, 2);
    let race = cat(rng, 6);
    let age = uniform(rng, 18.0, 80.0);
    let juv_fel = 10.0 * rng.gen::<f64>().powi(3);
    let juv_misd = 10.0 * rng.gen::<f64>().powi(3);
    let juv_other = 10.0 * rng.gen::<f64>().powi(3);
    let priors = 30.0 * rng.gen::<f64>().powi(2);
    let charge_degree = cat(rng, 2);
    let charge_desc = cat(rng, 6);
    let decile = uniform(rng, 1.0, 10.0);
    let score_text = cat(rng, 3);
    let v_decile = uniform(rng, 1.0, 10.0);
    let v_score_text = cat(rng, 3);
    let jail = 1000.0 * rng.gen::<f64>().powi(2);
    let violent = cat(rng, 2);
    let custody = cat(rng, 3);
    let marital = cat(rng, 5);
    let supervision = cat(rng, 4);

    let a = norm(age, 18.0, 80.0);
    let p = norm(priors, 0.0, 30.0);
    let d = norm(decile, 1.0, 10.0);
    let j = norm(jail, 0.0, 1000.0);
    const RACE_W: [f64; 6] = [0.12, -0.10, 0.02, -0.08, 0.04, 0.00];
    const GEN_W: [f64; 2] = [-0.18, 0.18];
    let score = 1.8 * p + 1.5 * d - 1.2 * a
        + 0.8 * j
        + 0.9 * p * d
        + 0.35 * f64::from(violent == 1)
        + 0.25 * f64::from(charge_degree == 0)
        + RACE_W[race]
        + GEN_W[gender]
        - 1.35;

    Row {
        values: vec![
            Value::Cat(gender),
            Value::Cat(race),
            Value::Num(age),
            Value::Num(juv_fel),
            Value::Num(juv_misd),
            Value::Num(juv_other),
            Value::Num(priors),
            Value::Cat(charge_degree),
            Value::Cat(charge_desc),
            Value::Num(decile),
            Value::Cat(score_text),
            Value::Num(v_decile),
            Value::Cat(v_score_text),
            Value::Num(jail),
            Value::Cat(violent),
            Value::Cat(custody),
            Value::Cat(marital),
            Value::Cat(supervision),
        ],
        score,
    }
}

fn employment_row(rng: &mut ChaCha8Rng) -> Row {
    let age = uniform(rng, 16.0, 90.0);
    let education = cat(rng, 8);
    let marital = cat(rng, 5);
    let relationship = cat(rng, 6);
    let disability = cat(rng, 2);
    let parents = cat(rng, 3);
    let citizenship = cat(rng, 3);
    let mobility = cat(rng, 2);
    let military = cat(rng, 3);
    let ancestry = cat(rng, 2);
    let nativity = cat(rng, 2);
    let hearing = cat(rng, 2);
    let vision = cat(rng, 2);
    let cognitive = cat(rng, 2);
    let gender = cat(rng, 2);
    let race = cat(rng, 6);

    let a = norm(age, 16.0, 90.0);
    // Employment peaks in mid-life: a quadratic in age.
    let prime = 1.0 - 4.0 * (a - 0.45) * (a - 0.45);
    const EDU_W: [f64; 8] = [-0.55, -0.10, 0.10, 0.20, 0.40, 0.50, 0.55, -0.70];
    const RACE_W: [f64; 6] = [0.08, -0.12, 0.05, -0.08, -0.04, 0.00];
    const GEN_W: [f64; 2] = [-0.20, 0.20];
    let score = 1.9 * prime + EDU_W[education]
        - 0.80 * f64::from(disability == 1)
        - 0.30 * f64::from(cognitive == 1)
        - 0.15 * f64::from(vision == 1)
        - 0.15 * f64::from(hearing == 1)
        + 0.20 * f64::from(marital == 1)
        + RACE_W[race]
        + GEN_W[gender]
        - 0.95;

    Row {
        values: vec![
            Value::Num(age),
            Value::Cat(education),
            Value::Cat(marital),
            Value::Cat(relationship),
            Value::Cat(disability),
            Value::Cat(parents),
            Value::Cat(citizenship),
            Value::Cat(mobility),
            Value::Cat(military),
            Value::Cat(ancestry),
            Value::Cat(nativity),
            Value::Cat(hearing),
            Value::Cat(vision),
            Value::Cat(cognitive),
            Value::Cat(gender),
            Value::Cat(race),
        ],
        score,
    }
}

/// Label noise scale shared by all four generators.
const NOISE_SIGMA: f64 = 0.5;

/// Generate `rows` seeded instances of the given shape, ids `1..=rows`.
pub fn generate(kind: DatasetKind, rows: usize, seed: u64) -> Result<Vec<Instance>> {
    if rows == 0 {
        return Err(Error::InvalidArgument("rows must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(rows);
    for id in 1..=rows {
        let row = match kind {
            DatasetKind::Adult => adult_row(&mut rng),
            DatasetKind::Bank => bank_row(&mut rng),
            DatasetKind::Compas => compas_row(&mut rng),
            DatasetKind::Employment => employment_row(&mut rng),
        };
        let label = usize::from(row.score + NOISE_SIGMA * gauss(&mut rng) > 0.0);
        out.push(Instance {
            id,
            values: row.values,
            label,
        });
    }
    Ok(out)
}
