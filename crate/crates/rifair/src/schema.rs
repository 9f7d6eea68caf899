//! Feature schemas for tabular datasets.
//!
//! A schema declares each attribute's kind (categorical or continuous), its
//! domain, and whether it is sensitive. Sensitive attributes define the
//! similar-individual sets; non-sensitive attributes are the only ones an
//! attack may perturb. Schemas are loaded from JSON files of the form:
//!
//! ```json
//! {
//!   "features": [
//!     {"name": "age", "kind": "continuous", "domain": [17, 90], "sensitive": false},
//!     {"name": "gender", "kind": "categorical", "domain": ["Female", "Male"], "sensitive": true}
//!   ],
//!   "label_name": "income",
//!   "label_domain": ["<=50K", ">50K"]
//! }
//! ```
//!
//! A sensitive continuous feature is binned into groups at declared cut
//! thresholds (`"bins": [40]` gives `<40` / `>=40`) so the similar set stays
//! finite. When `bins` is omitted and 40 lies inside the bounds, the default
//! cut at 40 is used.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default bin threshold for sensitive continuous features (the `<40 / >=40`
/// age split).
pub const DEFAULT_SENSITIVE_BIN: f64 = 40.0;

/// Attribute domain: category labels or continuous bounds.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Categorical(Vec<String>),
    Continuous { min: f64, max: f64 },
}

impl Domain {
    pub fn is_categorical(&self) -> bool {
        matches!(self, Domain::Categorical(_))
    }

    /// Number of encoded positions this domain occupies (one-hot width or 1).
    pub fn encoded_width(&self) -> usize {
        match self {
            Domain::Categorical(labels) => labels.len(),
            Domain::Continuous { .. } => 1,
        }
    }
}

/// One declared attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub domain: Domain,
    pub sensitive: bool,
    /// Cut thresholds grouping a sensitive continuous feature into bins.
    /// `None` means undeclared (the default cut applies at schema build);
    /// `Some(vec![])` declares a single group explicitly.
    pub bins: Option<Vec<f64>>,
}

impl FeatureSpec {
    pub fn categorical(name: &str, labels: &[&str], sensitive: bool) -> Self {
        FeatureSpec {
            name: name.to_string(),
            domain: Domain::Categorical(labels.iter().map(|s| s.to_string()).collect()),
            sensitive,
            bins: None,
        }
    }

    pub fn continuous(name: &str, min: f64, max: f64, sensitive: bool) -> Self {
        FeatureSpec {
            name: name.to_string(),
            domain: Domain::Continuous { min, max },
            sensitive,
            bins: None,
        }
    }

    pub fn with_bins(mut self, bins: &[f64]) -> Self {
        self.bins = Some(bins.to_vec());
        self
    }

    /// Declared bin thresholds (empty when none apply).
    pub fn bin_thresholds(&self) -> &[f64] {
        self.bins.as_deref().unwrap_or(&[])
    }

    pub fn is_categorical(&self) -> bool {
        self.domain.is_categorical()
    }

    pub fn category_labels(&self) -> Option<&[String]> {
        match &self.domain {
            Domain::Categorical(labels) => Some(labels),
            Domain::Continuous { .. } => None,
        }
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.domain {
            Domain::Continuous { min, max } => Some((min, max)),
            Domain::Categorical(_) => None,
        }
    }

    /// Index of a category label in the declared domain.
    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.category_labels()
            .and_then(|labels| labels.iter().position(|l| l == label))
    }

    /// Number of groups the sensitive domain splits into: category count for
    /// categorical features, threshold count + 1 for binned continuous ones.
    pub fn sensitive_group_count(&self) -> usize {
        match &self.domain {
            Domain::Categorical(labels) => labels.len(),
            Domain::Continuous { .. } => self.bin_thresholds().len() + 1,
        }
    }

    /// Bin index of a continuous value: the number of thresholds at or below it.
    pub fn bin_of(&self, value: f64) -> usize {
        self.bin_thresholds()
            .iter()
            .filter(|&&t| value >= t)
            .count()
    }

    /// Bounds of the i-th bin within the declared continuous range.
    pub fn bin_bounds(&self, bin: usize) -> Option<(f64, f64)> {
        let (min, max) = self.bounds()?;
        let thresholds = self.bin_thresholds();
        let lo = if bin == 0 { min } else { thresholds[bin - 1] };
        let hi = if bin == thresholds.len() {
            max
        } else {
            thresholds[bin]
        };
        Some((lo, hi))
    }

    /// A concrete continuous value representing the i-th bin (its midpoint).
    pub fn bin_representative(&self, bin: usize) -> Option<f64> {
        let (lo, hi) = self.bin_bounds(bin)?;
        Some(0.5 * (lo + hi))
    }

    fn validate(&self) -> Result<()> {
        match &self.domain {
            Domain::Categorical(labels) => {
                let mut uniq = labels.clone();
                uniq.sort();
                uniq.dedup();
                if uniq.len() < 2 || uniq.len() != labels.len() {
                    return Err(Error::Schema(format!(
                        "feature '{}': categorical domain needs >= 2 distinct labels",
                        self.name
                    )));
                }
                if self.bins.is_some() {
                    return Err(Error::Schema(format!(
                        "feature '{}': bins are only valid for continuous features",
                        self.name
                    )));
                }
            }
            Domain::Continuous { min, max } => {
                if min >= max || !min.is_finite() || !max.is_finite() {
                    return Err(Error::Schema(format!(
                        "feature '{}': continuous bounds must satisfy min < max",
                        self.name
                    )));
                }
                let thresholds = self.bin_thresholds();
                if thresholds.iter().any(|t| !t.is_finite()) {
                    return Err(Error::Schema(format!(
                        "feature '{}': bin thresholds must be finite",
                        self.name
                    )));
                }
                for w in thresholds.windows(2) {
                    if w[0] >= w[1] {
                        return Err(Error::Schema(format!(
                            "feature '{}': bin thresholds must be strictly increasing",
                            self.name
                        )));
                    }
                }
                if let (Some(&first), Some(&last)) = (thresholds.first(), thresholds.last()) {
                    if first <= *min || last >= *max {
                        return Err(Error::Schema(format!(
                            "feature '{}': bin thresholds must lie strictly inside ({min}, {max})",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Ordered feature declarations plus the label column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub label_name: String,
    pub label_domain: Vec<String>,
}

impl FeatureSchema {
    /// Build and validate a schema. Sensitive continuous features without
    /// declared bins receive the default cut at 40 when it lies inside their
    /// bounds; otherwise the schema must declare bins explicitly.
    pub fn new(
        features: Vec<FeatureSpec>,
        label_name: &str,
        label_domain: &[&str],
    ) -> Result<Self> {
        let mut schema = FeatureSchema {
            features,
            label_name: label_name.to_string(),
            label_domain: label_domain.iter().map(|s| s.to_string()).collect(),
        };
        schema.apply_default_bins()?;
        schema.validate()?;
        Ok(schema)
    }

    fn apply_default_bins(&mut self) -> Result<()> {
        for spec in &mut self.features {
            if spec.sensitive && !spec.is_categorical() && spec.bins.is_none() {
                let (min, max) = spec.bounds().expect("continuous feature has bounds");
                if min < DEFAULT_SENSITIVE_BIN && DEFAULT_SENSITIVE_BIN < max {
                    spec.bins = Some(vec![DEFAULT_SENSITIVE_BIN]);
                } else {
                    return Err(Error::Schema(format!(
                        "sensitive continuous feature '{}' needs declared bins \
                         (default cut {DEFAULT_SENSITIVE_BIN} is outside its bounds)",
                        spec.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema declares no features".into()));
        }
        let mut names: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.features.len() {
            return Err(Error::Schema("feature names must be unique".into()));
        }
        if self.features.iter().any(|f| f.name == self.label_name) {
            return Err(Error::Schema(format!(
                "label '{}' must not be listed among features",
                self.label_name
            )));
        }
        if self.label_domain.len() != 2 {
            return Err(Error::Schema(
                "label domain must be binary (exactly 2 classes)".into(),
            ));
        }
        if self.m() == 0 {
            return Err(Error::Schema(
                "at least one feature must be non-sensitive".into(),
            ));
        }
        if self.n() == 0 {
            return Err(Error::Schema(
                "at least one feature must be sensitive".into(),
            ));
        }
        for spec in &self.features {
            spec.validate()?;
        }
        Ok(())
    }

    /// Count of non-sensitive features.
    pub fn m(&self) -> usize {
        self.features.iter().filter(|f| !f.sensitive).count()
    }

    /// Count of sensitive features.
    pub fn n(&self) -> usize {
        self.features.iter().filter(|f| f.sensitive).count()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn sensitive_indexes(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&i| self.features[i].sensitive)
            .collect()
    }

    pub fn non_sensitive_indexes(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&i| !self.features[i].sensitive)
            .collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_domain.iter().position(|l| l == label)
    }

    /// Width of the dense encoding (one-hot blocks plus scalars).
    pub fn encoded_dim(&self) -> usize {
        self.features.iter().map(|f| f.domain.encoded_width()).sum()
    }

    /// Per-feature slices of the dense encoding; the slices partition it.
    pub fn encoding_layout(&self) -> Vec<Range<usize>> {
        let mut layout = Vec::with_capacity(self.features.len());
        let mut offset = 0;
        for spec in &self.features {
            let width = spec.domain.encoded_width();
            layout.push(offset..offset + width);
            offset += width;
        }
        layout
    }

    /// SHA-256 of the canonical JSON form; binds model checkpoints to the
    /// encoding this schema induces.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read schema file {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut schema: FeatureSchema = serde_json::from_str(text)?;
        schema.apply_default_bins()?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_path(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

// JSON mirror types: the on-disk format carries an explicit `kind` tag and a
// polymorphic `domain` array.

#[derive(Serialize, Deserialize)]
struct FeatureSpecRaw {
    name: String,
    kind: String,
    domain: serde_json::Value,
    sensitive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bins: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct FeatureSchemaRaw {
    features: Vec<FeatureSpecRaw>,
    label_name: String,
    label_domain: Vec<String>,
}

impl Serialize for FeatureSchema {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let raw = FeatureSchemaRaw {
            features: self
                .features
                .iter()
                .map(|f| {
                    let (kind, domain) = match &f.domain {
                        Domain::Categorical(labels) => ("categorical", serde_json::json!(labels)),
                        Domain::Continuous { min, max } => {
                            ("continuous", serde_json::json!([min, max]))
                        }
                    };
                    FeatureSpecRaw {
                        name: f.name.clone(),
                        kind: kind.to_string(),
                        domain,
                        sensitive: f.sensitive,
                        bins: f.bins.clone(),
                    }
                })
                .collect(),
            label_name: self.label_name.clone(),
            label_domain: self.label_domain.clone(),
        };
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FeatureSchema {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let raw = FeatureSchemaRaw::deserialize(deserializer)?;
        let mut features = Vec::with_capacity(raw.features.len());
        for f in raw.features {
            let domain = match f.kind.as_str() {
                "categorical" => {
                    let labels: Vec<String> = serde_json::from_value(f.domain)
                        .map_err(|e| DeError::custom(format!("feature '{}': {e}", f.name)))?;
                    Domain::Categorical(labels)
                }
                "continuous" => {
                    let bounds: [f64; 2] = serde_json::from_value(f.domain)
                        .map_err(|e| DeError::custom(format!("feature '{}': {e}", f.name)))?;
                    Domain::Continuous {
                        min: bounds[0],
                        max: bounds[1],
                    }
                }
                other => {
                    return Err(DeError::custom(format!(
                        "feature '{}': unknown kind '{other}'",
                        f.name
                    )))
                }
            };
            features.push(FeatureSpec {
                name: f.name,
                domain,
                sensitive: f.sensitive,
                bins: f.bins,
            });
        }
        Ok(FeatureSchema {
            features,
            label_name: raw.label_name,
            label_domain: raw.label_domain,
        })
    }
}
