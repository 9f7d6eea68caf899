//! Outcome taxonomy, headline metrics, and the empirical robustness
//! check.
//!
//! Every attacked instance lands in one cell of a 2×2 fairness–accuracy
//! confusion matrix ([`OutcomeClass`]): *true/false* records whether the
//! adversarial instance keeps its ground-truth label, *fair/biased*
//! whether every member of its similar set receives one prediction.
//! [`aggregate`] folds per-instance attack bundles into an
//! [`EvalReport`] with accuracy, fairness-through-awareness, per-mode
//! attack rates, the success-count histogram, and the empirical
//! Lipschitz bound `K_emp` used by [`check_rif`].

use serde::{Deserialize, Serialize};

use crate::attack::AttackMode;
use crate::dataset::{distance_d, encode, Instance, SimilarConfig};
use crate::error::{Error, Result};
use crate::model::{threshold_label, MlpParams};
use crate::schema::FeatureSchema;

/// Cell of the fairness–accuracy confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    TrueFair,
    TrueBias,
    FalseBias,
    FalseFair,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 4] = [
        OutcomeClass::TrueFair,
        OutcomeClass::TrueBias,
        OutcomeClass::FalseBias,
        OutcomeClass::FalseFair,
    ];

    /// Position in [`Self::ALL`]; used to index count arrays.
    pub fn index(self) -> usize {
        match self {
            OutcomeClass::TrueFair => 0,
            OutcomeClass::TrueBias => 1,
            OutcomeClass::FalseBias => 2,
            OutcomeClass::FalseFair => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            OutcomeClass::TrueFair => "tf",
            OutcomeClass::TrueBias => "tb",
            OutcomeClass::FalseBias => "fb",
            OutcomeClass::FalseFair => "ff",
        }
    }

    /// "True" half: the instance keeps its ground-truth label.
    pub fn is_accurate(self) -> bool {
        matches!(self, OutcomeClass::TrueFair | OutcomeClass::TrueBias)
    }

    /// "Fair" half: the whole similar set shares one prediction.
    pub fn is_fair(self) -> bool {
        matches!(self, OutcomeClass::TrueFair | OutcomeClass::FalseFair)
    }

    fn from_flags(accurate: bool, fair: bool) -> Self {
        match (accurate, fair) {
            (true, true) => OutcomeClass::TrueFair,
            (true, false) => OutcomeClass::TrueBias,
            (false, false) => OutcomeClass::FalseBias,
            (false, true) => OutcomeClass::FalseFair,
        }
    }
}

/// Map an instance to its confusion-matrix cell from its ground truth,
/// its own predicted label, and the predicted labels over its whole
/// similar set (which must include the instance's own label).
pub fn classify_outcome(
    y: usize,
    pred_label_adv: usize,
    similar_labels: &[usize],
) -> Result<OutcomeClass> {
    if similar_labels.is_empty() {
        return Err(Error::InvalidArgument(
            "similar_labels must cover the similar set (it always contains the instance itself)"
                .into(),
        ));
    }
    let fair = similar_labels.iter().all(|&l| l == similar_labels[0]);
    Ok(OutcomeClass::from_flags(pred_label_adv == y, fair))
}

/// Empirical Lipschitz bound: the nearest-rank `percentile` of the
/// finite sensitivity ratios `r = D/d`. Pairs with `d = 0` are excluded
/// (their ratio is undefined or infinite).
pub fn estimate_k_emp(pairs: &[(f64, f64)], percentile: f64) -> Result<f64> {
    if percentile <= 0.0 || percentile >= 1.0 || percentile.is_nan() {
        return Err(Error::InvalidArgument(
            "percentile must lie strictly between 0 and 1".into(),
        ));
    }
    let mut ratios: Vec<f64> = pairs
        .iter()
        .filter(|(_, d)| *d > 0.0)
        .map(|(big_d, d)| big_d / d)
        .filter(|r| r.is_finite())
        .collect();
    if ratios.is_empty() {
        return Err(Error::Data(
            "no finite sensitivity ratios: every pair has d = 0".into(),
        ));
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = ratios.len();
    let rank = ((percentile * m as f64).ceil() as usize).clamp(1, m);
    Ok(ratios[rank - 1])
}

/// One observed member of a similar set: its predicted label and its
/// sensitive-attribute distance from the base instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberObs {
    pub label: usize,
    pub d: f64,
}

/// Robust-individual-fairness check for one adversarial instance: every
/// member `v'` of its similar set must satisfy
/// `D(y, f(v')) <= min(k_emp * d, tau)` with `D` the 0/1 label
/// disagreement against the ground truth. The base instance itself
/// appears with `d = 0`, forcing its own prediction to match `y`.
pub fn check_rif(members: &[MemberObs], y: usize, k_emp: f64, tau: f64) -> bool {
    members.iter().all(|m| {
        let big_d = if m.label == y { 0.0 } else { 1.0 };
        big_d <= (k_emp * m.d).min(tau)
    })
}

/// The two consequences robust individual fairness implies for a
/// passing instance: the instance keeps its ground-truth label, and any
/// member predicted differently from it sits at a distance where
/// `k_emp * d` covers a full label flip. Returns false only on a
/// contradiction, which indicates a bug (or a fabricated record).
pub fn check_theorem_3_1(y: usize, adv_label: usize, members: &[MemberObs], k_emp: f64) -> bool {
    adv_label == y
        && members
            .iter()
            .all(|m| m.label == adv_label || 1.0 <= k_emp * m.d)
}

/// Everything the metrics need to know about one instance under one
/// model: its own thresholded prediction and the labeled, distanced
/// members of its similar set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceObservation {
    pub label: usize,
    pub positive: f64,
    pub outcome: OutcomeClass,
    pub members: Vec<MemberObs>,
}

/// Observe an instance: predict it, enumerate and predict its similar
/// set, and classify the result against the instance's ground truth
/// (its `label` field).
pub fn observe_instance(
    params: &MlpParams,
    instance: &Instance,
    schema: &FeatureSchema,
    similar: SimilarConfig,
    tau_dec: f64,
) -> Result<InstanceObservation> {
    let pred = params.forward(&encode(instance, schema)?.dense)?;
    let label = threshold_label(pred.positive(), tau_dec);
    let set = similar.enumerate(instance, schema)?;
    let mut members = Vec::with_capacity(set.len());
    let mut labels = Vec::with_capacity(set.len());
    for m in &set.members {
        let ml = threshold_label(
            params.forward(&encode(m, schema)?.dense)?.positive(),
            tau_dec,
        );
        members.push(MemberObs {
            label: ml,
            d: distance_d(instance, m, schema)?,
        });
        labels.push(ml);
    }
    let outcome = classify_outcome(instance.label, label, &labels)?;
    Ok(InstanceObservation {
        label,
        positive: pred.positive(),
        outcome,
        members,
    })
}

/// Parameters of the empirical robustness check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RifCheckConfig {
    /// Absolute tolerance on the 0/1 label-disagreement metric; any
    /// value below 1 means "no disagreement tolerated".
    pub tau: f64,
    /// Nearest-rank percentile defining `k_emp`.
    pub percentile: f64,
}

impl Default for RifCheckConfig {
    fn default() -> Self {
        RifCheckConfig {
            tau: 0.5,
            percentile: 0.95,
        }
    }
}

impl RifCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 || self.tau.is_nan() {
            return Err(Error::InvalidArgument("tau must be > 0".into()));
        }
        if self.percentile <= 0.0 || self.percentile >= 1.0 || self.percentile.is_nan() {
            return Err(Error::InvalidArgument(
                "percentile must lie strictly between 0 and 1".into(),
            ));
        }
        Ok(())
    }
}

/// Final state of one attack mode against one instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeRecord {
    pub mode: AttackMode,
    pub success: bool,
    pub n_steps: usize,
    /// The perturbed base instance (its `label` field still holds `y`).
    pub adv_v: Instance,
    /// Thresholded prediction for `adv_v`.
    pub adv_label: usize,
    /// Positive-class probability for `adv_v`.
    pub adv_positive: f64,
    /// Predicted label and distance for every member of `I(adv_v)`.
    pub members: Vec<MemberObs>,
    /// Confusion-matrix cell of the final state under its full similar
    /// set.
    pub outcome: OutcomeClass,
    /// Fraction of attack steps where both trajectories moved in the
    /// same direction; `None` when no step had a defined direction.
    pub shared_pid: Option<f64>,
}

/// Everything measured about one test instance: its clean state plus
/// the five attack results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceBundle {
    pub id: usize,
    pub y: usize,
    /// The unperturbed test instance.
    pub clean_v: Instance,
    pub clean_label: usize,
    pub clean_positive: f64,
    pub clean_members: Vec<MemberObs>,
    pub clean_outcome: OutcomeClass,
    /// Whether the gradient-sign baseline flipped the clean prediction.
    pub fgsm_flip: bool,
    /// Whether the gradient-agreement baseline split the pair.
    pub adf_success: bool,
    /// One record per mode, in [`AttackMode::ALL`] order.
    pub modes: Vec<ModeRecord>,
}

impl InstanceBundle {
    /// Number of modes realized against this instance, in `{0,1,2,3}`.
    pub fn n_attack(&self) -> usize {
        self.modes.iter().filter(|m| m.success).count()
    }

    fn mode(&self, mode: AttackMode) -> Result<&ModeRecord> {
        self.modes.iter().find(|m| m.mode == mode).ok_or_else(|| {
            Error::Data(format!(
                "instance {} is missing its {} attack record",
                self.id,
                mode.tag()
            ))
        })
    }

    fn success(&self, mode: AttackMode) -> Result<bool> {
        Ok(self.mode(mode)?.success)
    }
}

/// Per-instance line of the report CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: usize,
    pub clean_label: usize,
    pub y: usize,
    pub tb_success: bool,
    pub fb_success: bool,
    pub ff_success: bool,
    pub n_attack: usize,
    pub rif_pass: bool,
}

/// Aggregated metrics over one evaluated test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_instances: usize,
    /// Clean accuracy.
    pub acc: f64,
    /// Fairness through awareness: fraction of instances whose whole
    /// clean similar set shares one predicted label.
    pub fta: f64,
    /// Gradient-sign baseline flip rate.
    pub ar_attack: f64,
    /// Gradient-agreement baseline success rate.
    pub if_attack: f64,
    /// Fraction of instances with at least one successful mode.
    pub rif_attack: f64,
    pub tbr: f64,
    pub fbr: f64,
    pub ffr: f64,
    /// Fraction with zero successful modes (= `n_attack_hist[0] / N`).
    pub tfr: f64,
    /// Fraction where some mode left the instance mislabeled (a
    /// false-bias or false-fair success): the accuracy-violation rate
    /// within the main attack.
    pub ar_within: f64,
    /// Fraction where some mode split the pair (a true-bias or
    /// false-bias success): the fairness-violation rate within the main
    /// attack.
    pub if_within: f64,
    /// Instance counts by number of successful modes (0, 1, 2, 3).
    pub n_attack_hist: [usize; 4],
    /// Empirical Lipschitz bound pooled over every mode-final similar
    /// set.
    pub k_emp: f64,
    /// Fraction of instances whose three mode-final states all satisfy
    /// the empirical robustness inequality.
    pub rif_pass_rate: f64,
    /// Implication-check failures among passing records; always 0
    /// unless something is broken.
    pub thm31_violations: usize,
    /// Clean confusion-matrix cell counts in [`OutcomeClass::ALL`]
    /// order (TF, TB, FB, FF).
    pub clean_outcome_counts: [usize; 4],
    /// Mean shared-direction fraction over true-bias trajectories.
    pub mean_shared_pid_tb: Option<f64>,
    pub tau: f64,
    pub percentile: f64,
    pub rows: Vec<InstanceRow>,
}

impl EvalReport {
    /// CSV export of the per-instance rows.
    pub fn per_instance_csv(&self) -> String {
        let mut out =
            String::from("id,clean_label,y,tb_success,fb_success,ff_success,n_attack,rif_pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.id,
                r.clean_label,
                r.y,
                r.tb_success,
                r.fb_success,
                r.ff_success,
                r.n_attack,
                r.rif_pass
            ));
        }
        out
    }
}

fn mean<I: IntoIterator<Item = bool>>(it: I) -> (f64, usize) {
    let mut hits = 0usize;
    let mut total = 0usize;
    for b in it {
        hits += usize::from(b);
        total += 1;
    }
    (hits as f64 / total as f64, hits)
}

/// Fold per-instance bundles into the full report. Order-independent:
/// rows are sorted by instance id and every metric is a mean or count.
pub fn aggregate(bundles: &[InstanceBundle], config: &RifCheckConfig) -> Result<EvalReport> {
    config.validate()?;
    if bundles.is_empty() {
        return Err(Error::Data("no instances to aggregate".into()));
    }
    let mut sorted: Vec<&InstanceBundle> = bundles.iter().collect();
    sorted.sort_by_key(|b| b.id);

    let n = sorted.len();
    let (acc, _) = mean(sorted.iter().map(|b| b.clean_label == b.y));
    let (fta, _) = mean(sorted.iter().map(|b| {
        b.clean_members
            .iter()
            .all(|m| m.label == b.clean_members[0].label)
    }));
    let (ar_attack, _) = mean(sorted.iter().map(|b| b.fgsm_flip));
    let (if_attack, _) = mean(sorted.iter().map(|b| b.adf_success));

    let mut rates = [0.0f64; 3];
    for (i, mode) in AttackMode::ALL.iter().enumerate() {
        let mut hits = 0usize;
        for b in &sorted {
            hits += usize::from(b.success(*mode)?);
        }
        rates[i] = hits as f64 / n as f64;
    }
    let [tbr, fbr, ffr] = rates;

    let mut ar_hits = 0usize;
    let mut if_hits = 0usize;
    for b in &sorted {
        let tb = b.success(AttackMode::TrueBias)?;
        let fb = b.success(AttackMode::FalseBias)?;
        let ff = b.success(AttackMode::FalseFair)?;
        ar_hits += usize::from(fb || ff);
        if_hits += usize::from(tb || fb);
    }
    let ar_within = ar_hits as f64 / n as f64;
    let if_within = if_hits as f64 / n as f64;

    let mut n_attack_hist = [0usize; 4];
    for b in &sorted {
        n_attack_hist[b.n_attack()] += 1;
    }
    let rif_attack = (n - n_attack_hist[0]) as f64 / n as f64;
    let tfr = n_attack_hist[0] as f64 / n as f64;

    let mut clean_outcome_counts = [0usize; 4];
    for b in &sorted {
        clean_outcome_counts[b.clean_outcome.index()] += 1;
    }

    // K_emp pools the (D, d) observations of every mode-final state.
    let mut pairs = Vec::new();
    for b in &sorted {
        for rec in &b.modes {
            for m in &rec.members {
                let big_d = if m.label == b.y { 0.0 } else { 1.0 };
                pairs.push((big_d, m.d));
            }
        }
    }
    let k_emp = estimate_k_emp(&pairs, config.percentile)?;

    let mut rif_hits = 0usize;
    let mut thm31_violations = 0usize;
    let mut rows = Vec::with_capacity(n);
    for b in &sorted {
        let mut all_pass = true;
        for rec in &b.modes {
            let pass = check_rif(&rec.members, b.y, k_emp, config.tau);
            all_pass &= pass;
            if pass && !check_theorem_3_1(b.y, rec.adv_label, &rec.members, k_emp) {
                thm31_violations += 1;
            }
        }
        rif_hits += usize::from(all_pass);
        rows.push(InstanceRow {
            id: b.id,
            clean_label: b.clean_label,
            y: b.y,
            tb_success: b.success(AttackMode::TrueBias)?,
            fb_success: b.success(AttackMode::FalseBias)?,
            ff_success: b.success(AttackMode::FalseFair)?,
            n_attack: b.n_attack(),
            rif_pass: all_pass,
        });
    }

    let shared: Vec<f64> = sorted
        .iter()
        .filter_map(|b| b.mode(AttackMode::TrueBias).ok().and_then(|r| r.shared_pid))
        .collect();
    let mean_shared_pid_tb = if shared.is_empty() {
        None
    } else {
        Some(shared.iter().sum::<f64>() / shared.len() as f64)
    };

    Ok(EvalReport {
        n_instances: n,
        acc,
        fta,
        ar_attack,
        if_attack,
        rif_attack,
        tbr,
        fbr,
        ffr,
        tfr,
        ar_within,
        if_within,
        n_attack_hist,
        k_emp,
        rif_pass_rate: rif_hits as f64 / n as f64,
        thm31_violations,
        clean_outcome_counts,
        mean_shared_pid_tb,
        tau: config.tau,
        percentile: config.percentile,
        rows,
    })
}
