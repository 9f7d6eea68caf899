//! Adversarial instance generation against a similar pair.
//!
//! The main attack perturbs a pair of similar instances `(v, v')` — equal
//! on every non-sensitive attribute — by repeatedly choosing the
//! non-sensitive feature with the largest summed gradient magnitude and
//! replacing its value *in both instances at once* with the realistic
//! candidate that most reduces a mode-specific joint loss:
//!
//! - [`AttackMode::TrueBias`]: keep `v` at its true label `y`, push `v'`
//!   to `y_diff` (accurate but unfair).
//! - [`AttackMode::FalseBias`]: push `v` to `y_diff`, hold `v'` at `y`
//!   (inaccurate and unfair).
//! - [`AttackMode::FalseFair`]: push both to `y_diff` (inaccurate but
//!   consistent).
//!
//! Because both instances always receive the same feature/value update,
//! the pair stays similar at every step, and sensitive attributes are
//! never touched. Two simpler baselines are included for comparison: a
//! gradient-sign attack on a single instance ([`fgsm_baseline`]) and a
//! gradient-direction-agreement attack on the pair ([`adf_baseline`]).

use serde::{Deserialize, Serialize};

use crate::dataset::{encode, Instance, Value};
use crate::diagnostics::TrajectoryStep;
use crate::error::{Error, Result};
use crate::evaluation::OutcomeClass;
use crate::model::{cross_entropy, threshold_label, MlpParams, Prediction};
use crate::schema::{Domain, FeatureSchema, FeatureSpec};

/// Which outcome the attack drives the pair toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    TrueBias,
    FalseBias,
    FalseFair,
}

impl AttackMode {
    pub const ALL: [AttackMode; 3] = [
        AttackMode::TrueBias,
        AttackMode::FalseBias,
        AttackMode::FalseFair,
    ];

    /// Loss targets `(L_v, L_v')` steering the pair.
    pub fn loss_targets(self, y: usize, y_diff: usize) -> (usize, usize) {
        match self {
            AttackMode::TrueBias => (y, y_diff),
            AttackMode::FalseBias => (y_diff, y),
            AttackMode::FalseFair => (y_diff, y_diff),
        }
    }

    /// Whether the pair's predicted labels realize this mode's outcome.
    pub fn satisfied(self, label_v: usize, label_vp: usize, y: usize, y_diff: usize) -> bool {
        let (target_v, target_vp) = self.loss_targets(y, y_diff);
        label_v == target_v && label_vp == target_vp
    }

    /// Short lowercase tag used in file names and CLI flags.
    pub fn tag(self) -> &'static str {
        match self {
            AttackMode::TrueBias => "tb",
            AttackMode::FalseBias => "fb",
            AttackMode::FalseFair => "ff",
        }
    }
}

impl std::str::FromStr for AttackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tb" | "true_bias" => Ok(AttackMode::TrueBias),
            "fb" | "false_bias" => Ok(AttackMode::FalseBias),
            "ff" | "false_fair" => Ok(AttackMode::FalseFair),
            other => Err(Error::InvalidArgument(format!(
                "unknown attack mode '{other}' (expected tb, fb, or ff)"
            ))),
        }
    }
}

/// One accepted perturbation: the same feature set to the same value in
/// both instances of the pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStep {
    pub step_index: usize,
    pub feature_index: usize,
    pub old_value: Value,
    pub new_value: Value,
    /// 1 for a categorical flip; |new − old| / (max − min) for a
    /// continuous move.
    pub delta_norm: f64,
}

/// Attack hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub mode: AttackMode,
    /// Maximum number of perturbation steps `T`.
    pub max_steps: usize,
    /// Grid resolution for continuous replacement candidates.
    pub grid_points: usize,
    /// The adversarial target class (must differ from the ground truth).
    pub y_diff: usize,
    /// Decision threshold for success checks.
    pub tau_dec: f64,
    /// Seed recorded in run manifests; the attack itself is deterministic.
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(mode: AttackMode, y: usize) -> Self {
        AttackConfig {
            mode,
            max_steps: 10,
            grid_points: 5,
            y_diff: 1 - y,
            tau_dec: 0.5,
            seed: 0,
        }
    }

    fn validate(&self, y: usize) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be >= 1".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidArgument("grid_points must be >= 2".into()));
        }
        if self.y_diff == y {
            return Err(Error::InvalidArgument(
                "adversarial target must differ from the true label".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.tau_dec) {
            return Err(Error::InvalidArgument("tau_dec must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Full record of one attack on one pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackResult {
    pub mode: AttackMode,
    pub y: usize,
    pub y_diff: usize,
    pub base_v: Instance,
    pub base_vp: Instance,
    pub adv_v: Instance,
    pub adv_vp: Instance,
    pub steps: Vec<PerturbationStep>,
    pub success: bool,
    pub trajectory_v: Vec<TrajectoryStep>,
    pub trajectory_vp: Vec<TrajectoryStep>,
    /// Full-similar-set classification of the final state; filled by the
    /// evaluation pipeline, not by the attack itself.
    pub outcome: Option<OutcomeClass>,
}

impl AttackResult {
    /// Positive-class probability of `v_adv` at the end of the attack.
    pub fn final_positive_v(&self) -> f64 {
        self.trajectory_v
            .last()
            .map(|s| s.f_after)
            .unwrap_or(self.initial_positive_v())
    }

    pub fn initial_positive_v(&self) -> f64 {
        self.trajectory_v
            .first()
            .map(|s| s.f_before)
            .unwrap_or(f64::NAN)
    }

    /// CSV export of the per-step movement of both trajectories.
    pub fn to_trajectory_csv(&self, schema: &FeatureSchema) -> String {
        let mut out =
            String::from("step,feature,old,new,delta_norm,f_v,f_vp,pii_v,pid_v,pii_vp,pid_vp\n");
        for (i, step) in self.steps.iter().enumerate() {
            let spec = &schema.features[step.feature_index];
            let tv = &self.trajectory_v[i];
            let tp = &self.trajectory_vp[i];
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                step.step_index,
                spec.name,
                step.old_value.render(spec),
                step.new_value.render(spec),
                step.delta_norm,
                tv.f_after,
                tp.f_after,
                tv.pii,
                render_pid(tv.pid),
                tp.pii,
                render_pid(tp.pid),
            ));
        }
        out
    }
}

fn render_pid(pid: Option<i8>) -> &'static str {
    match pid {
        Some(1) => "+1",
        Some(_) => "-1",
        None => "",
    }
}

/// Mode-specific joint loss over a pair of predictions: the sum of the
/// clipped cross-entropies toward the mode's targets.
pub fn joint_loss(
    mode: AttackMode,
    pred_v: &Prediction,
    pred_vp: &Prediction,
    y: usize,
    y_diff: usize,
) -> Result<f64> {
    if y == y_diff {
        return Err(Error::InvalidArgument(
            "y_diff must differ from the true label".into(),
        ));
    }
    let n = pred_v.probs.len();
    if y >= n || y_diff >= n {
        return Err(Error::InvalidArgument("label out of range".into()));
    }
    let (target_v, target_vp) = mode.loss_targets(y, y_diff);
    Ok(cross_entropy(&pred_v.probs, target_v) + cross_entropy(&pred_vp.probs, target_vp))
}

/// Pick the non-sensitive feature whose dense slice holds the largest
/// magnitude of the summed gradient `grad_v + grad_vp`. Ties go to the
/// lowest feature index; sensitive features are never considered.
pub fn select_feature(grad_v: &[f64], grad_vp: &[f64], schema: &FeatureSchema) -> Result<usize> {
    if grad_v.len() != grad_vp.len() || grad_v.len() != schema.encoded_dim() {
        return Err(Error::Dimension(
            "gradient dimensions do not match the schema encoding".into(),
        ));
    }
    let layout = schema.encoding_layout();
    let mut best: Option<(usize, f64)> = None;
    for i in schema.non_sensitive_indexes() {
        let score = layout[i]
            .clone()
            .map(|k| (grad_v[k] + grad_vp[k]).abs())
            .fold(0.0, f64::max);
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((i, score)),
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::Schema("schema has no non-sensitive features".into()))
}

/// The realistic replacement candidates for a feature, excluding its
/// current value: every other category, or a uniform grid over the
/// declared bounds plus the current value's one-grid-step neighbors.
pub fn candidate_values(
    spec: &FeatureSpec,
    current: &Value,
    grid_points: usize,
) -> Result<Vec<Value>> {
    match (&spec.domain, current) {
        (Domain::Categorical(labels), Value::Cat(c)) => Ok((0..labels.len())
            .filter(|i| i != c)
            .map(Value::Cat)
            .collect()),
        (Domain::Continuous { min, max }, Value::Num(x)) => {
            let step = (max - min) / (grid_points - 1) as f64;
            let mut points: Vec<f64> = (0..grid_points).map(|j| min + j as f64 * step).collect();
            points.push((x - step).clamp(*min, *max));
            points.push((x + step).clamp(*min, *max));
            points.sort_by(|a, b| a.partial_cmp(b).unwrap());
            points.dedup();
            Ok(points
                .into_iter()
                .filter(|p| p != x)
                .map(Value::Num)
                .collect())
        }
        _ => Err(Error::Data(format!(
            "value kind mismatch for feature '{}'",
            spec.name
        ))),
    }
}

/// Evaluate every candidate substituted into *both* instances and return
/// the one minimizing the joint loss, or `None` when no candidate
/// strictly improves on the current loss.
#[allow(clippy::too_many_arguments)]
pub fn select_replacement(
    params: &MlpParams,
    v: &Instance,
    vp: &Instance,
    feature: usize,
    mode: AttackMode,
    y: usize,
    y_diff: usize,
    schema: &FeatureSchema,
    grid_points: usize,
) -> Result<Option<(Value, f64)>> {
    let spec = &schema.features[feature];
    if spec.sensitive {
        return Err(Error::InvalidArgument(format!(
            "feature '{}' is sensitive and cannot be perturbed",
            spec.name
        )));
    }
    let pair_loss = |a: &Instance, b: &Instance| -> Result<f64> {
        let pred_a = params.forward(&encode(a, schema)?.dense)?;
        let pred_b = params.forward(&encode(b, schema)?.dense)?;
        joint_loss(mode, &pred_a, &pred_b, y, y_diff)
    };
    let current_loss = pair_loss(v, vp)?;
    let candidates = candidate_values(spec, &v.values[feature], grid_points)?;
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "feature '{}' has no replacement candidates",
            spec.name
        )));
    }
    let mut best: Option<(Value, f64)> = None;
    for cand in candidates {
        let mut cv = v.clone();
        let mut cvp = vp.clone();
        cv.values[feature] = cand;
        cvp.values[feature] = cand;
        let loss = pair_loss(&cv, &cvp)?;
        match &best {
            Some((_, l)) if loss >= *l => {}
            _ => best = Some((cand, loss)),
        }
    }
    Ok(best.filter(|(_, l)| *l < current_loss))
}

/// Per-step perturbation norm: 1 for a categorical flip, the normalized
/// move size for a continuous change.
fn step_norm(spec: &FeatureSpec, old: &Value, new: &Value) -> f64 {
    match (spec.bounds(), old, new) {
        (Some((min, max)), Value::Num(a), Value::Num(b)) => (b - a).abs() / (max - min),
        _ => 1.0,
    }
}

/// Run the greedy joint-gradient attack on a similar pair. Stops early on
/// success (the mode's label pattern holds under `tau_dec`) or when no
/// candidate improves the joint loss; never runs more than `max_steps`
/// perturbations.
pub fn rifair_attack(
    params: &MlpParams,
    v: &Instance,
    vp: &Instance,
    schema: &FeatureSchema,
    config: &AttackConfig,
) -> Result<AttackResult> {
    let y = v.label;
    config.validate(y)?;
    // Errors if the pair differs on any non-sensitive attribute.
    let d = crate::dataset::distance_d(v, vp, schema)?;
    if d == 0.0 {
        return Err(Error::InvalidArgument(
            "the counterpart must differ from the base instance".into(),
        ));
    }
    let y_diff = config.y_diff;
    let (target_v, target_vp) = config.mode.loss_targets(y, y_diff);

    let mut cur_v = v.clone();
    let mut cur_vp = vp.clone();
    let mut pred_v = params.forward(&encode(&cur_v, schema)?.dense)?;
    let mut pred_vp = params.forward(&encode(&cur_vp, schema)?.dense)?;
    let mut steps = Vec::new();
    let mut trajectory_v = Vec::new();
    let mut trajectory_vp = Vec::new();
    let mut success = false;

    loop {
        let label_v = threshold_label(pred_v.positive(), config.tau_dec);
        let label_vp = threshold_label(pred_vp.positive(), config.tau_dec);
        if config.mode.satisfied(label_v, label_vp, y, y_diff) {
            success = true;
            break;
        }
        if steps.len() >= config.max_steps {
            break;
        }

        let enc_v = encode(&cur_v, schema)?;
        let enc_vp = encode(&cur_vp, schema)?;
        let grad_v = params.input_gradient(&enc_v.dense, target_v)?;
        let grad_vp = params.input_gradient(&enc_vp.dense, target_vp)?;
        let feature = select_feature(&grad_v, &grad_vp, schema)?;

        let Some((replacement, _)) = select_replacement(
            params,
            &cur_v,
            &cur_vp,
            feature,
            config.mode,
            y,
            y_diff,
            schema,
            config.grid_points,
        )?
        else {
            break;
        };

        let spec = &schema.features[feature];
        let old = cur_v.values[feature];
        let delta_norm = step_norm(spec, &old, &replacement);
        cur_v.values[feature] = replacement;
        cur_vp.values[feature] = replacement;
        let new_pred_v = params.forward(&encode(&cur_v, schema)?.dense)?;
        let new_pred_vp = params.forward(&encode(&cur_vp, schema)?.dense)?;
        trajectory_v.push(TrajectoryStep::new(
            pred_v.positive(),
            new_pred_v.positive(),
            delta_norm,
        )?);
        trajectory_vp.push(TrajectoryStep::new(
            pred_vp.positive(),
            new_pred_vp.positive(),
            delta_norm,
        )?);
        steps.push(PerturbationStep {
            step_index: steps.len(),
            feature_index: feature,
            old_value: old,
            new_value: replacement,
            delta_norm,
        });
        pred_v = new_pred_v;
        pred_vp = new_pred_vp;
    }

    Ok(AttackResult {
        mode: config.mode,
        y,
        y_diff,
        base_v: v.clone(),
        base_vp: vp.clone(),
        adv_v: cur_v,
        adv_vp: cur_vp,
        steps,
        success,
        trajectory_v,
        trajectory_vp,
        outcome: None,
    })
}

/// Brute-force verifier: does *any* sequence of at most `max_steps`
/// same-feature pair perturbations realize the mode's outcome? Explores
/// the full candidate tree, so keep the feature and candidate counts
/// small. A greedy success must always be confirmed by this search.
pub fn exhaustive_attack_success(
    params: &MlpParams,
    v: &Instance,
    vp: &Instance,
    schema: &FeatureSchema,
    config: &AttackConfig,
) -> Result<bool> {
    let y = v.label;
    config.validate(y)?;

    fn satisfied(
        params: &MlpParams,
        v: &Instance,
        vp: &Instance,
        schema: &FeatureSchema,
        config: &AttackConfig,
        y: usize,
    ) -> Result<bool> {
        let lv = threshold_label(
            params.forward(&encode(v, schema)?.dense)?.positive(),
            config.tau_dec,
        );
        let lvp = threshold_label(
            params.forward(&encode(vp, schema)?.dense)?.positive(),
            config.tau_dec,
        );
        Ok(config.mode.satisfied(lv, lvp, y, config.y_diff))
    }

    fn dfs(
        params: &MlpParams,
        v: &Instance,
        vp: &Instance,
        schema: &FeatureSchema,
        config: &AttackConfig,
        y: usize,
        depth: usize,
    ) -> Result<bool> {
        if satisfied(params, v, vp, schema, config, y)? {
            return Ok(true);
        }
        if depth == config.max_steps {
            return Ok(false);
        }
        for feature in schema.non_sensitive_indexes() {
            let spec = &schema.features[feature];
            for cand in candidate_values(spec, &v.values[feature], config.grid_points)? {
                let mut cv = v.clone();
                let mut cvp = vp.clone();
                cv.values[feature] = cand;
                cvp.values[feature] = cand;
                if dfs(params, &cv, &cvp, schema, config, y, depth + 1)? {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    dfs(params, v, vp, schema, config, y, 0)
}

/// Gradient-sign baseline on a single instance: every non-sensitive
/// continuous feature moves by `epsilon` (in normalized units) along the
/// loss-gradient sign; every non-sensitive categorical feature flips to
/// the category with the steepest positive gradient when that beats the
/// current category's gradient. `epsilon = 0` returns the input untouched.
pub fn fgsm_baseline(
    params: &MlpParams,
    v: &Instance,
    schema: &FeatureSchema,
    epsilon: f64,
) -> Result<Instance> {
    if epsilon < 0.0 {
        return Err(Error::InvalidArgument("epsilon must be >= 0".into()));
    }
    if epsilon == 0.0 {
        return Ok(v.clone());
    }
    let enc = encode(v, schema)?;
    let grad = params.input_gradient(&enc.dense, v.label)?;
    let layout = schema.encoding_layout();
    let mut out = v.clone();
    for i in schema.non_sensitive_indexes() {
        let spec = &schema.features[i];
        let slice = layout[i].clone();
        match (&spec.domain, &v.values[i]) {
            (Domain::Continuous { min, max }, Value::Num(_)) => {
                let g = grad[slice.start];
                if g == 0.0 {
                    continue;
                }
                let moved = (enc.dense[slice.start] + epsilon * g.signum()).clamp(0.0, 1.0);
                out.values[i] = Value::Num(min + moved * (max - min));
            }
            (Domain::Categorical(_), Value::Cat(c)) => {
                let block = &grad[slice];
                let mut best = 0;
                for (k, &g) in block.iter().enumerate() {
                    if g > block[best] {
                        best = k;
                    }
                }
                if best != *c && block[best] > block[*c] {
                    out.values[i] = Value::Cat(best);
                }
            }
            _ => {
                return Err(Error::Data(format!(
                    "value kind mismatch for feature '{}'",
                    spec.name
                )))
            }
        }
    }
    Ok(out)
}

/// Outcome of the gradient-direction-agreement baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdfResult {
    pub adv_v: Instance,
    pub adv_vp: Instance,
    pub success: bool,
    pub steps: usize,
}

/// Choose the similar-set counterpart with the largest clean prediction
/// gap from the base (first one on ties, in enumeration order). `None`
/// when the set has no counterpart.
pub fn choose_counterpart(
    params: &MlpParams,
    similar: &crate::dataset::SimilarSet,
    schema: &FeatureSchema,
) -> Result<Option<Instance>> {
    let base_pos = params
        .forward(&encode(similar.base(), schema)?.dense)?
        .positive();
    let mut best: Option<(f64, &Instance)> = None;
    for member in similar.counterparts() {
        let gap = (params.forward(&encode(member, schema)?.dense)?.positive() - base_pos).abs();
        match best {
            Some((g, _)) if gap <= g => {}
            _ => best = Some((gap, member)),
        }
    }
    Ok(best.map(|(_, m)| m.clone()))
}

/// Gradient-direction-agreement baseline: pick the counterpart with the
/// widest clean prediction gap, then repeatedly perturb the non-sensitive
/// feature whose positive-class gradients agree in sign across the pair
/// with the largest combined magnitude, stepping to the candidate that
/// widens the prediction gap. Succeeds when the pair's predicted labels
/// differ.
pub fn adf_baseline(
    params: &MlpParams,
    similar: &crate::dataset::SimilarSet,
    schema: &FeatureSchema,
    max_steps: usize,
    grid_points: usize,
    tau_dec: f64,
) -> Result<AdfResult> {
    if similar.len() < 2 {
        return Err(Error::InvalidArgument(
            "the similar set has no counterpart to compare against".into(),
        ));
    }
    let mut cur_v = similar.base().clone();
    let mut cur_vp =
        choose_counterpart(params, similar, schema)?.expect("non-singleton set has a counterpart");
    let layout = schema.encoding_layout();
    let mut steps = 0usize;
    let mut success = false;

    loop {
        let f_v = params.forward(&encode(&cur_v, schema)?.dense)?.positive();
        let f_vp = params.forward(&encode(&cur_vp, schema)?.dense)?.positive();
        if threshold_label(f_v, tau_dec) != threshold_label(f_vp, tau_dec) {
            success = true;
            break;
        }
        if steps >= max_steps {
            break;
        }

        let grad_v = params.prob_gradient(&encode(&cur_v, schema)?.dense, 1)?;
        let grad_vp = params.prob_gradient(&encode(&cur_vp, schema)?.dense, 1)?;
        let mut best: Option<(usize, f64)> = None;
        for i in schema.non_sensitive_indexes() {
            for k in layout[i].clone() {
                if grad_v[k] * grad_vp[k] > 0.0 {
                    let score = grad_v[k].abs() + grad_vp[k].abs();
                    match best {
                        Some((_, s)) if score <= s => {}
                        _ => best = Some((i, score)),
                    }
                }
            }
        }
        let Some((feature, _)) = best else { break };

        let spec = &schema.features[feature];
        let gap = (f_v - f_vp).abs();
        let mut best_cand: Option<(Value, f64)> = None;
        for cand in candidate_values(spec, &cur_v.values[feature], grid_points)? {
            let mut cv = cur_v.clone();
            let mut cvp = cur_vp.clone();
            cv.values[feature] = cand;
            cvp.values[feature] = cand;
            let new_gap = (params.forward(&encode(&cv, schema)?.dense)?.positive()
                - params.forward(&encode(&cvp, schema)?.dense)?.positive())
            .abs();
            match &best_cand {
                Some((_, g)) if new_gap <= *g => {}
                _ => best_cand = Some((cand, new_gap)),
            }
        }
        let Some((cand, new_gap)) = best_cand else {
            break;
        };
        if new_gap <= gap {
            break;
        }
        cur_v.values[feature] = cand;
        cur_vp.values[feature] = cand;
        steps += 1;
    }

    Ok(AdfResult {
        adv_v: cur_v,
        adv_vp: cur_vp,
        success,
        steps,
    })
}
