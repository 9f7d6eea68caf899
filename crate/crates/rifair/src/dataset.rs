//! Dataset ingestion, encoding, and similar-set machinery.
//!
//! CSV rows are parsed into [`Instance`]s under a [`FeatureSchema`]; rows
//! that violate the schema are rejected individually and collected in a
//! [`LoadReport`] rather than failing the whole load. Instances encode to
//! dense vectors (one-hot blocks plus min-max-normalized scalars) for the
//! model, and each instance induces a [`SimilarSet`]: the individuals that
//! agree with it on every non-sensitive attribute while ranging over the
//! sensitive domains.

use std::ops::Range;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Domain, FeatureSchema, FeatureSpec};

/// One raw attribute value: a category index or a continuous scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Cat(usize),
    Num(f64),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<usize> {
        match self {
            Value::Cat(i) => Some(*i),
            Value::Num(_) => None,
        }
    }

    /// Human-readable form under the feature's domain (category label or
    /// plain number), suitable for CSV output.
    pub fn render(&self, spec: &FeatureSpec) -> String {
        match (self, &spec.domain) {
            (Value::Cat(i), Domain::Categorical(labels)) => labels
                .get(*i)
                .cloned()
                .unwrap_or_else(|| format!("<cat {i}>")),
            (Value::Num(x), _) => format!("{x}"),
            (Value::Cat(i), _) => format!("<cat {i}>"),
        }
    }
}

/// One data point: raw per-feature values plus its class label index.
///
/// `id` is the 1-based data-row number from the source CSV (synthetic
/// variants built from an instance keep its id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: usize,
    pub values: Vec<Value>,
    pub label: usize,
}

/// Dense numeric encoding of an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVector {
    /// One-hot blocks for categoricals, normalized scalars for continuous
    /// features, in schema feature order.
    pub dense: Vec<f64>,
    /// Feature index -> slice of `dense`; the slices partition the vector.
    pub group_map: Vec<Range<usize>>,
    /// Features whose continuous value fell outside its declared bounds and
    /// was clamped into [0, 1].
    pub clamped: Vec<usize>,
}

/// Per-row rejection recorded while loading a CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowIssue {
    /// 1-based data-row number (the header is row 0).
    pub row: usize,
    pub reason: String,
}

/// Outcome of a CSV load: how many rows were accepted and why the rest
/// were not.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub accepted: usize,
    pub rejected: Vec<RowIssue>,
}

/// Parsed dataset plus its load report.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    pub report: LoadReport,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Enumeration parameters for similar sets, bundled so every stage of a
/// run enumerates identically (classification is only reproducible when
/// the cap and subsampling seed match).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarConfig {
    /// Maximum similar-set size; larger cartesian products are
    /// subsampled (the base is always retained).
    pub cap: usize,
    /// Seed for the subsampling draw.
    pub seed: u64,
}

impl Default for SimilarConfig {
    fn default() -> Self {
        SimilarConfig { cap: 64, seed: 0 }
    }
}

impl SimilarConfig {
    pub fn enumerate(&self, instance: &Instance, schema: &FeatureSchema) -> Result<SimilarSet> {
        enumerate_similar(instance, schema, self.cap, self.seed)
    }
}

/// The individuals similar to a base instance: all combinations of
/// sensitive-attribute groups, holding non-sensitive attributes fixed.
/// The base itself is always a member.
#[derive(Debug, Clone)]
pub struct SimilarSet {
    pub members: Vec<Instance>,
    /// Position of the base instance within `members`.
    pub base_pos: usize,
}

impl SimilarSet {
    pub fn base(&self) -> &Instance {
        &self.members[self.base_pos]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members other than the base.
    pub fn counterparts(&self) -> impl Iterator<Item = &Instance> {
        self.members
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != self.base_pos)
            .map(|(_, m)| m)
    }
}

/// Load a CSV file under a schema. Column order is free (matched by
/// header name); rows violating the schema are rejected individually.
/// Fails only when the file or a required column is missing, or when
/// every data row is invalid.
pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .clone();
    let column_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let feature_cols: Vec<usize> = schema
        .features
        .iter()
        .map(|f| column_of(&f.name))
        .collect::<Result<_>>()?;
    let label_col = column_of(&schema.label_name)?;

    let mut instances = Vec::new();
    let mut rejected = Vec::new();
    let mut total_rows = 0usize;

    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        total_rows += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RowIssue {
                    row,
                    reason: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        match parse_row(&record, schema, &feature_cols, label_col) {
            Ok((values, label)) => instances.push(Instance {
                id: row,
                values,
                label,
            }),
            Err(reason) => rejected.push(RowIssue { row, reason }),
        }
    }

    if total_rows > 0 && instances.is_empty() {
        return Err(Error::Data(format!(
            "all {total_rows} data rows in {} violate the schema (first: row {}: {})",
            path.display(),
            rejected[0].row,
            rejected[0].reason
        )));
    }

    Ok(Dataset {
        report: LoadReport {
            accepted: instances.len(),
            rejected,
        },
        instances,
    })
}

/// Inverse of [`load_csv`]: render instances as a CSV document whose
/// header follows schema order with the label last. Continuous values
/// use Rust's shortest round-trip float formatting, so loading the
/// output reproduces the instances bit-for-bit.
pub fn to_csv(instances: &[Instance], schema: &FeatureSchema) -> String {
    let mut out = String::new();
    let names: Vec<&str> = schema
        .features
        .iter()
        .map(|f| f.name.as_str())
        .chain(std::iter::once(schema.label_name.as_str()))
        .collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for inst in instances {
        let mut fields: Vec<String> = inst
            .values
            .iter()
            .zip(&schema.features)
            .map(|(v, spec)| v.render(spec))
            .collect();
        fields.push(schema.label_domain[inst.label].clone());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn parse_row(
    record: &csv::StringRecord,
    schema: &FeatureSchema,
    feature_cols: &[usize],
    label_col: usize,
) -> std::result::Result<(Vec<Value>, usize), String> {
    let field = |col: usize| record.get(col).unwrap_or("");
    let mut values = Vec::with_capacity(schema.features.len());
    for (spec, &col) in schema.features.iter().zip(feature_cols) {
        let raw = field(col);
        let value = match &spec.domain {
            Domain::Categorical(_) => {
                let i = spec.category_index(raw).ok_or_else(|| {
                    format!("unknown category '{raw}' for feature '{}'", spec.name)
                })?;
                Value::Cat(i)
            }
            Domain::Continuous { .. } => {
                let x: f64 = raw.parse().map_err(|_| {
                    format!("non-numeric value '{raw}' for feature '{}'", spec.name)
                })?;
                if !x.is_finite() {
                    return Err(format!("non-finite value for feature '{}'", spec.name));
                }
                Value::Num(x)
            }
        };
        values.push(value);
    }
    let raw_label = field(label_col);
    let label = schema
        .label_index(raw_label)
        .ok_or_else(|| format!("unknown label '{raw_label}'"))?;
    Ok((values, label))
}

/// Encode an instance densely: one-hot blocks for categoricals and
/// `(x - min) / (max - min)` for continuous features. Out-of-bounds
/// continuous values are clamped into [0, 1] and flagged, never silently
/// altered.
pub fn encode(instance: &Instance, schema: &FeatureSchema) -> Result<EncodedVector> {
    if instance.values.len() != schema.features.len() {
        return Err(Error::Dimension(format!(
            "instance {} has {} values, schema declares {} features",
            instance.id,
            instance.values.len(),
            schema.features.len()
        )));
    }
    let group_map = schema.encoding_layout();
    let mut dense = vec![0.0; schema.encoded_dim()];
    let mut clamped = Vec::new();
    for (i, (spec, value)) in schema.features.iter().zip(&instance.values).enumerate() {
        let slice = group_map[i].clone();
        match (&spec.domain, value) {
            (Domain::Categorical(labels), Value::Cat(c)) => {
                if *c >= labels.len() {
                    return Err(Error::Data(format!(
                        "instance {}: category index {c} out of domain for '{}'",
                        instance.id, spec.name
                    )));
                }
                dense[slice.start + c] = 1.0;
            }
            (Domain::Continuous { min, max }, Value::Num(x)) => {
                let scaled = (x - min) / (max - min);
                if !(0.0..=1.0).contains(&scaled) {
                    clamped.push(i);
                }
                dense[slice.start] = scaled.clamp(0.0, 1.0);
            }
            _ => {
                return Err(Error::Data(format!(
                    "instance {}: value kind mismatch for feature '{}'",
                    instance.id, spec.name
                )));
            }
        }
    }
    Ok(EncodedVector {
        dense,
        group_map,
        clamped,
    })
}

/// Recover raw values from a dense vector: argmax per one-hot block
/// (lowest index on ties) and de-normalization for scalars.
pub fn decode(dense: &[f64], schema: &FeatureSchema) -> Result<Vec<Value>> {
    if dense.len() != schema.encoded_dim() {
        return Err(Error::Dimension(format!(
            "dense vector has {} positions, schema encodes {}",
            dense.len(),
            schema.encoded_dim()
        )));
    }
    let mut values = Vec::with_capacity(schema.features.len());
    for (spec, slice) in schema.features.iter().zip(schema.encoding_layout()) {
        let block = &dense[slice];
        let value = match spec.domain {
            Domain::Categorical(_) => {
                let mut best = 0;
                for (i, &x) in block.iter().enumerate() {
                    if x > block[best] {
                        best = i;
                    }
                }
                Value::Cat(best)
            }
            Domain::Continuous { min, max } => Value::Num(min + block[0] * (max - min)),
        };
        values.push(value);
    }
    Ok(values)
}

/// Enumerate the similar set of `instance`: the cartesian product of
/// sensitive-attribute groups (category labels, or bin representatives for
/// binned continuous features), holding all non-sensitive values fixed.
///
/// Members appear in lexicographic order of their sensitive-group
/// combination (first sensitive feature most significant). When the
/// product exceeds `cap`, a seeded uniform subsample of size `cap` is
/// taken; the base instance is always retained.
pub fn enumerate_similar(
    instance: &Instance,
    schema: &FeatureSchema,
    cap: usize,
    seed: u64,
) -> Result<SimilarSet> {
    if cap == 0 {
        return Err(Error::InvalidArgument(
            "similar-set cap must be >= 1".into(),
        ));
    }
    if instance.values.len() != schema.features.len() {
        return Err(Error::Dimension(format!(
            "instance {} has {} values, schema declares {} features",
            instance.id,
            instance.values.len(),
            schema.features.len()
        )));
    }

    let sensitive = schema.sensitive_indexes();
    // Per sensitive feature: the candidate values (one per group) and the
    // base instance's own group.
    let mut variants: Vec<Vec<Value>> = Vec::with_capacity(sensitive.len());
    let mut base_digits: Vec<usize> = Vec::with_capacity(sensitive.len());
    for &fi in &sensitive {
        let spec = &schema.features[fi];
        match (&spec.domain, &instance.values[fi]) {
            (Domain::Categorical(labels), Value::Cat(c)) => {
                variants.push((0..labels.len()).map(Value::Cat).collect());
                base_digits.push(*c);
            }
            (Domain::Continuous { .. }, Value::Num(x)) => {
                let base_bin = spec.bin_of(*x);
                let groups = spec.sensitive_group_count();
                let vals = (0..groups)
                    .map(|b| {
                        if b == base_bin {
                            Value::Num(*x)
                        } else {
                            Value::Num(spec.bin_representative(b).expect("continuous has bins"))
                        }
                    })
                    .collect();
                variants.push(vals);
                base_digits.push(base_bin);
            }
            _ => {
                return Err(Error::Data(format!(
                    "instance {}: value kind mismatch for feature '{}'",
                    instance.id, spec.name
                )));
            }
        }
    }

    let total = variants
        .iter()
        .try_fold(1usize, |acc, v| acc.checked_mul(v.len()))
        .ok_or_else(|| Error::InvalidArgument("similar-set size overflows".into()))?;

    // Mixed-radix strides, first sensitive feature most significant.
    let k = variants.len();
    let mut strides = vec![1usize; k];
    for j in (0..k.saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * variants[j + 1].len();
    }
    let base_index: usize = base_digits.iter().zip(&strides).map(|(d, s)| d * s).sum();

    let chosen: Vec<usize> = if total <= cap {
        (0..total).collect()
    } else {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (instance.id as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let mut picks = sample(&mut rng, total, cap).into_vec();
        if !picks.contains(&base_index) {
            picks[0] = base_index;
        }
        picks.sort_unstable();
        picks
    };

    let mut members = Vec::with_capacity(chosen.len());
    let mut base_pos = 0;
    for (pos, &combo) in chosen.iter().enumerate() {
        if combo == base_index {
            base_pos = pos;
        }
        let mut values = instance.values.clone();
        for (j, &fi) in sensitive.iter().enumerate() {
            let digit = (combo / strides[j]) % variants[j].len();
            values[fi] = variants[j][digit];
        }
        members.push(Instance {
            id: instance.id,
            values,
            label: instance.label,
        });
    }

    Ok(SimilarSet { members, base_pos })
}

/// Distance between two similar instances: the fraction of sensitive
/// attributes on which they differ. Errors when the instances disagree on
/// any non-sensitive attribute (they are not similar, so the distance is
/// undefined).
pub fn distance_d(a: &Instance, b: &Instance, schema: &FeatureSchema) -> Result<f64> {
    if a.values.len() != schema.features.len() || b.values.len() != schema.features.len() {
        return Err(Error::Dimension(
            "instances do not match schema feature count".into(),
        ));
    }
    let mut differing = 0usize;
    for (i, spec) in schema.features.iter().enumerate() {
        let same = a.values[i] == b.values[i];
        if spec.sensitive {
            if !same {
                differing += 1;
            }
        } else if !same {
            return Err(Error::NotSimilar(format!(
                "instances {} and {} differ on non-sensitive feature '{}'",
                a.id, b.id, spec.name
            )));
        }
    }
    Ok(differing as f64 / schema.n() as f64)
}

/// Seeded, label-stratified split into (train, test). Both halves come
/// back sorted by instance id; their union is the input and they are
/// disjoint.
pub fn split(
    instances: &[Instance],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<Instance>, Vec<Instance>)> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot split an empty dataset".into(),
        ));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }

    let mut labels: Vec<usize> = instances.iter().map(|i| i.label).collect();
    labels.sort_unstable();
    labels.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_ids: Vec<usize> = Vec::new();
    for label in labels {
        let mut positions: Vec<usize> = (0..instances.len())
            .filter(|&i| instances[i].label == label)
            .collect();
        use rand::seq::SliceRandom;
        positions.shuffle(&mut rng);
        let n_test = ((positions.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.min(positions.len());
        test_ids.extend(positions[..n_test].iter().map(|&i| instances[i].id));
    }
    test_ids.sort_unstable();

    let mut train: Vec<Instance> = Vec::new();
    let mut test: Vec<Instance> = Vec::new();
    for inst in instances {
        if test_ids.binary_search(&inst.id).is_ok() {
            test.push(inst.clone());
        } else {
            train.push(inst.clone());
        }
    }
    train.sort_by_key(|i| i.id);
    test.sort_by_key(|i| i.id);
    Ok((train, test))
}
