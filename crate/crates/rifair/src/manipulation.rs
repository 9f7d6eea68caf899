//! Test-set manipulation: replacing selected test items with
//! adversarial counterparts to steer reported metrics.
//!
//! A deceptive reporter can make a model look better (or selectively
//! worse) without touching the model at all: swap test items whose
//! outcome class hurts the target metric for adversarial instances
//! realizing a flattering class. Five [`Strategy`] values cover the
//! directions of interest; [`manipulate`] applies one under a budget,
//! and [`evaluate_manipulated`] recomputes the headline table so the
//! shift can be demonstrated (and audited via provenance records).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::AttackMode;
use crate::dataset::{Instance, SimilarConfig};
use crate::error::{Error, Result};
use crate::evaluation::{observe_instance, InstanceBundle, OutcomeClass};
use crate::model::MlpParams;
use crate::schema::FeatureSchema;

/// A metric-shifting replacement policy: which outcome classes to
/// remove from the test set and which to inject in their place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Replace inaccurate items (FB/FF) with accurate ones: reported
    /// accuracy rises.
    AccUp,
    /// Replace unfair items (TB/FB) with fair ones: reported fairness
    /// rises.
    FairUp,
    /// Replace every non-TF item with TF: both metrics rise.
    BothUp,
    /// Inject true-bias items everywhere: accuracy rises while
    /// fairness falls.
    AccUpFairDown,
    /// Inject false-fair items everywhere: fairness rises while
    /// accuracy falls.
    AccDownFairUp,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::AccUp,
        Strategy::FairUp,
        Strategy::BothUp,
        Strategy::AccUpFairDown,
        Strategy::AccDownFairUp,
    ];

    /// Outcome classes this strategy removes.
    pub fn source_classes(self) -> &'static [OutcomeClass] {
        use OutcomeClass::*;
        match self {
            Strategy::AccUp => &[FalseBias, FalseFair],
            Strategy::FairUp => &[TrueBias, FalseBias],
            Strategy::BothUp => &[TrueBias, FalseBias, FalseFair],
            Strategy::AccUpFairDown => &[TrueFair, FalseBias, FalseFair],
            Strategy::AccDownFairUp => &[TrueFair, TrueBias, FalseBias],
        }
    }

    /// Outcome classes this strategy injects, in preference order.
    pub fn target_classes(self) -> &'static [OutcomeClass] {
        use OutcomeClass::*;
        match self {
            Strategy::AccUp => &[TrueBias, TrueFair],
            Strategy::FairUp => &[FalseFair, TrueFair],
            Strategy::BothUp => &[TrueFair],
            Strategy::AccUpFairDown => &[TrueBias],
            Strategy::AccDownFairUp => &[FalseFair],
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::AccUp => "acc_up",
            Strategy::FairUp => "fair_up",
            Strategy::BothUp => "both_up",
            Strategy::AccUpFairDown => "acc_up_fair_down",
            Strategy::AccDownFairUp => "acc_down_fair_up",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "acc_up" => Ok(Strategy::AccUp),
            "fair_up" => Ok(Strategy::FairUp),
            "both_up" => Ok(Strategy::BothUp),
            "acc_up_fair_down" => Ok(Strategy::AccUpFairDown),
            "acc_down_fair_up" => Ok(Strategy::AccDownFairUp),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy '{other}' (expected acc_up, fair_up, both_up, \
                 acc_up_fair_down, or acc_down_fair_up)"
            ))),
        }
    }
}

/// One candidate replacement: an attack's final state together with the
/// outcome class it realizes under its full similar set. The instance's
/// `label` field carries the source item's ground truth and its `id`
/// the source item's id, so re-evaluating a pool item reproduces its
/// recorded class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolItem {
    pub class: OutcomeClass,
    pub instance: Instance,
    pub mode: AttackMode,
    pub success: bool,
}

/// All replacement candidates from one attack run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Pool {
    pub items: Vec<PoolItem>,
}

impl Pool {
    pub fn count(&self, class: OutcomeClass) -> usize {
        self.items.iter().filter(|i| i.class == class).count()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Collect every mode-final adversarial state, keyed by the outcome
/// class it realizes. Failed attacks contribute too: their final states
/// are still realizable test items (often true-fair ones, which are
/// exactly what the both-up strategy needs).
pub fn build_pool(bundles: &[InstanceBundle]) -> Pool {
    let mut items = Vec::new();
    for b in bundles {
        for rec in &b.modes {
            items.push(PoolItem {
                class: rec.outcome,
                instance: rec.adv_v.clone(),
                mode: rec.mode,
                success: rec.success,
            });
        }
    }
    Pool { items }
}

/// Where a manipulated test item came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Replaced {
        source_id: usize,
        mode: AttackMode,
        class: OutcomeClass,
    },
}

/// A test set after manipulation, with an audit trail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManipulatedSet {
    pub strategy: Strategy,
    pub items: Vec<Instance>,
    /// Per-position origin, aligned with `items`.
    pub provenance: Vec<Provenance>,
    pub budget_used: usize,
    /// Set when the pool ran out of target-class items before the
    /// budget was spent.
    pub warning: Option<String>,
}

impl ManipulatedSet {
    pub fn replaced_positions(&self) -> Vec<usize> {
        self.provenance
            .iter()
            .enumerate()
            .filter(|(_, p)| !matches!(p, Provenance::Original))
            .map(|(i, _)| i)
            .collect()
    }

    /// CSV audit trail: one row per test position.
    pub fn provenance_csv(&self) -> String {
        let mut out = String::from("position,id,origin,mode,class,source_id\n");
        for (pos, (item, prov)) in self.items.iter().zip(&self.provenance).enumerate() {
            match prov {
                Provenance::Original => {
                    out.push_str(&format!("{pos},{},original,,,\n", item.id));
                }
                Provenance::Replaced {
                    source_id,
                    mode,
                    class,
                } => {
                    out.push_str(&format!(
                        "{pos},{},replaced,{},{},{source_id}\n",
                        item.id,
                        mode.tag(),
                        class.tag()
                    ));
                }
            }
        }
        out
    }
}

/// Apply a strategy: scan test items whose current outcome class (given
/// in `outcomes`, aligned with `test_set`) matches the strategy's
/// sources, in a seeded order, and replace up to `budget` of them with
/// pool items of a target class. A replacement derived from the very
/// item being replaced is preferred over a foreign one; each pool item
/// is used at most once. Running out of target-class items stops early
/// with a warning rather than failing.
pub fn manipulate(
    test_set: &[Instance],
    outcomes: &[OutcomeClass],
    pool: &Pool,
    strategy: Strategy,
    budget: usize,
    seed: u64,
) -> Result<ManipulatedSet> {
    if outcomes.len() != test_set.len() {
        return Err(Error::Dimension(format!(
            "{} outcomes for {} test items",
            outcomes.len(),
            test_set.len()
        )));
    }
    if budget > test_set.len() {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} exceeds the test-set size {}",
            test_set.len()
        )));
    }

    let mut candidates: Vec<usize> = (0..test_set.len())
        .filter(|&i| strategy.source_classes().contains(&outcomes[i]))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);

    let mut items = test_set.to_vec();
    let mut provenance = vec![Provenance::Original; test_set.len()];
    let mut used = vec![false; pool.items.len()];
    let mut budget_used = 0usize;
    let mut starved = false;

    let find = |used: &[bool], pred: &dyn Fn(&PoolItem) -> bool| -> Option<usize> {
        pool.items
            .iter()
            .enumerate()
            .find(|(k, it)| !used[*k] && pred(it))
            .map(|(k, _)| k)
    };

    for &pos in &candidates {
        if budget_used == budget {
            break;
        }
        let base_id = test_set[pos].id;
        let pick = strategy
            .target_classes()
            .iter()
            .find_map(|&t| find(&used, &|it| it.class == t && it.instance.id == base_id))
            .or_else(|| {
                strategy
                    .target_classes()
                    .iter()
                    .find_map(|&t| find(&used, &|it| it.class == t))
            });
        let Some(k) = pick else {
            starved = true;
            break;
        };
        used[k] = true;
        let item = &pool.items[k];
        items[pos] = item.instance.clone();
        provenance[pos] = Provenance::Replaced {
            source_id: item.instance.id,
            mode: item.mode,
            class: item.class,
        };
        budget_used += 1;
    }

    let warning = starved.then(|| {
        format!(
            "pool has no unused {} item left; stopped after {budget_used} of {budget} \
             replacements",
            strategy
                .target_classes()
                .iter()
                .map(|c| c.tag())
                .collect::<Vec<_>>()
                .join("/")
        )
    });

    Ok(ManipulatedSet {
        strategy,
        items,
        provenance,
        budget_used,
        warning,
    })
}

/// The six headline columns recomputed on one test set. Unlike the
/// attack report's per-mode success rates, the four class rates here
/// are outcome-class proportions of the set and sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table7Row {
    pub acc: f64,
    pub fta: f64,
    pub fbr: f64,
    pub ffr: f64,
    pub tbr: f64,
    pub tfr: f64,
}

/// Evaluate a plain set of test items (each item's `label` field is its
/// ground truth).
pub fn evaluate_set(
    params: &MlpParams,
    items: &[Instance],
    schema: &FeatureSchema,
    similar: SimilarConfig,
    tau_dec: f64,
) -> Result<Table7Row> {
    if items.is_empty() {
        return Err(Error::Data("cannot evaluate an empty test set".into()));
    }
    let mut counts = [0usize; 4];
    for item in items {
        let obs = observe_instance(params, item, schema, similar, tau_dec)?;
        counts[obs.outcome.index()] += 1;
    }
    let n = items.len() as f64;
    let rate = |c: OutcomeClass| counts[c.index()] as f64 / n;
    let (tf, tb, fb, ff) = (
        rate(OutcomeClass::TrueFair),
        rate(OutcomeClass::TrueBias),
        rate(OutcomeClass::FalseBias),
        rate(OutcomeClass::FalseFair),
    );
    Ok(Table7Row {
        acc: tf + tb,
        fta: tf + ff,
        fbr: fb,
        ffr: ff,
        tbr: tb,
        tfr: tf,
    })
}

/// Recompute the headline columns on a manipulated set. Ground truth
/// for replaced items is the source item's label, carried in the pool
/// instance itself.
pub fn evaluate_manipulated(
    params: &MlpParams,
    manipulated: &ManipulatedSet,
    schema: &FeatureSchema,
    similar: SimilarConfig,
    tau_dec: f64,
) -> Result<Table7Row> {
    evaluate_set(params, &manipulated.items, schema, similar, tau_dec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Value;
    use crate::schema::FeatureSpec;

    /// job {A,B} non-sensitive, group {g0,g1} sensitive.
    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![
                FeatureSpec::categorical("job", &["A", "B"], false),
                FeatureSpec::categorical("group", &["g0", "g1"], true),
            ],
            "y",
            &["no", "yes"],
        )
        .unwrap()
    }

    /// Positive-logit advantage: -A + B - g0 + g1. Predictions:
    /// (A,g0) -> 0, (A,g1) -> 1 (p = 0.5 inclusive), (B,g0) -> 1,
    /// (B,g1) -> 1. So job A is an unfair region and job B a fair one.
    fn model(schema: &FeatureSchema) -> MlpParams {
        MlpParams {
            layer_dims: vec![4, 2],
            weights: vec![vec![0.0, 0.0, 0.0, 0.0, -1.0, 1.0, -1.0, 1.0]],
            biases: vec![vec![0.0, 0.0]],
            seed: 0,
            schema_hash: schema.hash(),
        }
    }

    fn inst(id: usize, job: usize, group: usize, y: usize) -> Instance {
        Instance {
            id,
            values: vec![Value::Cat(job), Value::Cat(group)],
            label: y,
        }
    }

    fn outcomes(
        params: &MlpParams,
        items: &[Instance],
        schema: &FeatureSchema,
    ) -> Vec<OutcomeClass> {
        items
            .iter()
            .map(|i| {
                observe_instance(params, i, schema, SimilarConfig::default(), 0.5)
                    .unwrap()
                    .outcome
            })
            .collect()
    }

    /// One test item of each class under the fixture model:
    /// id 1 (A,g0,y=0) TB; id 2 (A,g1,y=0) FB; id 3 (B,g0,y=0) FF;
    /// id 4 (B,g1,y=1) TF.
    fn test_set() -> Vec<Instance> {
        vec![
            inst(1, 0, 0, 0),
            inst(2, 0, 1, 0),
            inst(3, 1, 0, 0),
            inst(4, 1, 1, 1),
        ]
    }

    fn pool_item(id: usize, job: usize, group: usize, y: usize, class: OutcomeClass) -> PoolItem {
        PoolItem {
            class,
            instance: inst(id, job, group, y),
            mode: AttackMode::TrueBias,
            success: true,
        }
    }

    /// A pool holding one instance of each class, none sharing a base
    /// with the test set (ids 10x).
    fn pool() -> Pool {
        Pool {
            items: vec![
                pool_item(101, 0, 0, 0, OutcomeClass::TrueBias),
                pool_item(102, 0, 1, 0, OutcomeClass::FalseBias),
                pool_item(103, 1, 0, 0, OutcomeClass::FalseFair),
                pool_item(104, 1, 1, 1, OutcomeClass::TrueFair),
            ],
        }
    }

    #[test]
    fn fixture_covers_all_four_classes() {
        let s = schema();
        let m = model(&s);
        let got = outcomes(&m, &test_set(), &s);
        assert_eq!(
            got,
            vec![
                OutcomeClass::TrueBias,
                OutcomeClass::FalseBias,
                OutcomeClass::FalseFair,
                OutcomeClass::TrueFair,
            ]
        );
        // Pool items re-evaluate to their recorded classes.
        for item in pool().items {
            let obs =
                observe_instance(&m, &item.instance, &s, SimilarConfig::default(), 0.5).unwrap();
            assert_eq!(obs.outcome, item.class);
        }
    }

    #[test]
    fn budget_zero_is_identity() {
        let s = schema();
        let m = model(&s);
        let items = test_set();
        let out = manipulate(
            &items,
            &outcomes(&m, &items, &s),
            &pool(),
            Strategy::BothUp,
            0,
            7,
        )
        .unwrap();
        assert_eq!(out.items, items);
        assert_eq!(out.budget_used, 0);
        assert!(out.warning.is_none());
        assert!(out.provenance.iter().all(|p| *p == Provenance::Original));
    }

    #[test]
    fn budget_above_test_size_is_rejected() {
        let s = schema();
        let m = model(&s);
        let items = test_set();
        let oc = outcomes(&m, &items, &s);
        assert!(manipulate(&items, &oc, &pool(), Strategy::AccUp, 5, 7).is_err());
        assert!(manipulate(&items, &oc[..3], &pool(), Strategy::AccUp, 1, 7).is_err());
    }

    fn metrics(params: &MlpParams, items: &[Instance], s: &FeatureSchema) -> Table7Row {
        evaluate_set(params, items, s, SimilarConfig::default(), 0.5).unwrap()
    }

    #[test]
    fn directionality_of_all_five_strategies() {
        let s = schema();
        let m = model(&s);
        let items = test_set();
        let oc = outcomes(&m, &items, &s);
        let clean = metrics(&m, &items, &s);
        assert_eq!(clean.acc, 0.5); // TB + TF accurate
        assert_eq!(clean.fta, 0.5); // FF + TF fair

        for strategy in Strategy::ALL {
            let out = manipulate(&items, &oc, &pool(), strategy, 4, 7).unwrap();
            assert!(out.budget_used >= 1, "{:?} never replaced", strategy);
            let after = evaluate_manipulated(&m, &out, &s, SimilarConfig::default(), 0.5).unwrap();
            let class_sum = after.tfr + after.tbr + after.fbr + after.ffr;
            assert!((class_sum - 1.0).abs() < 1e-12);
            match strategy {
                Strategy::AccUp => assert!(after.acc > clean.acc),
                Strategy::FairUp => assert!(after.fta > clean.fta),
                Strategy::BothUp => {
                    assert!(after.acc >= clean.acc && after.fta >= clean.fta);
                    assert!(after.acc > clean.acc || after.fta > clean.fta);
                }
                Strategy::AccUpFairDown => {
                    assert!(after.acc >= clean.acc && after.fta <= clean.fta);
                    assert!(after.acc > clean.acc || after.fta < clean.fta);
                }
                Strategy::AccDownFairUp => {
                    assert!(after.acc <= clean.acc && after.fta >= clean.fta);
                    assert!(after.acc < clean.acc || after.fta > clean.fta);
                }
            }
        }
    }

    #[test]
    fn acc_up_leaves_no_false_bias_among_replaced() {
        let s = schema();
        let m = model(&s);
        let items = test_set();
        let oc = outcomes(&m, &items, &s);
        let out = manipulate(&items, &oc, &pool(), Strategy::AccUp, 4, 7).unwrap();
        assert_eq!(out.budget_used, 2); // the FB and FF items
        for pos in out.replaced_positions() {
            let obs =
                observe_instance(&m, &out.items[pos], &s, SimilarConfig::default(), 0.5).unwrap();
            assert_ne!(obs.outcome, OutcomeClass::FalseBias);
            assert!(obs.outcome.is_accurate());
        }
    }

    #[test]
    fn same_base_replacements_are_preferred() {
        let s = schema();
        let m = model(&s);
        // One source item only, so the seeded scan order is trivial.
        let items = vec![inst(1, 0, 0, 0)]; // TB
        let oc = outcomes(&m, &items, &s);
        // Two FF candidates: a foreign one listed first, then the
        // perturbed version of item 1 itself (job flipped to B).
        let pool = Pool {
            items: vec![
                pool_item(103, 1, 0, 0, OutcomeClass::FalseFair),
                pool_item(1, 1, 0, 0, OutcomeClass::FalseFair),
            ],
        };
        let out = manipulate(&items, &oc, &pool, Strategy::AccDownFairUp, 1, 0).unwrap();
        assert_eq!(
            out.provenance[0],
            Provenance::Replaced {
                source_id: 1,
                mode: AttackMode::TrueBias,
                class: OutcomeClass::FalseFair,
            }
        );
        // Without a same-base candidate the foreign one is taken.
        let foreign_only = Pool {
            items: vec![pool_item(103, 1, 0, 0, OutcomeClass::FalseFair)],
        };
        let out = manipulate(&items, &oc, &foreign_only, Strategy::AccDownFairUp, 1, 0).unwrap();
        assert_eq!(
            out.provenance[0],
            Provenance::Replaced {
                source_id: 103,
                mode: AttackMode::TrueBias,
                class: OutcomeClass::FalseFair,
            }
        );
    }

    #[test]
    fn starved_pool_truncates_with_warning() {
        let s = schema();
        let m = model(&s);
        let items = test_set();
        let oc = outcomes(&m, &items, &s);
        // Only one TF item for three both-up sources.
        let pool = Pool {
            items: vec![pool_item(104, 1, 1, 1, OutcomeClass::TrueFair)],
        };
        let out = manipulate(&items, &oc, &pool, Strategy::BothUp, 3, 7).unwrap();
        assert_eq!(out.budget_used, 1);
        assert!(out.warning.is_some());
    }

    #[test]
    fn manipulation_is_deterministic() {
        let s = schema();
        let m = model(&s);
        let items = test_set();
        let oc = outcomes(&m, &items, &s);
        let a = manipulate(&items, &oc, &pool(), Strategy::FairUp, 2, 9).unwrap();
        let b = manipulate(&items, &oc, &pool(), Strategy::FairUp, 2, 9).unwrap();
        assert_eq!(a.items, b.items);
        assert_eq!(a.provenance, b.provenance);
    }

    #[test]
    fn provenance_csv_lists_every_position() {
        let s = schema();
        let m = model(&s);
        let items = test_set();
        let oc = outcomes(&m, &items, &s);
        let out = manipulate(&items, &oc, &pool(), Strategy::AccUp, 4, 7).unwrap();
        let csv = out.provenance_csv();
        assert_eq!(csv.lines().count(), 1 + items.len());
        assert_eq!(
            csv.lines().filter(|l| l.contains(",replaced,")).count(),
            out.budget_used
        );
    }

    #[test]
    fn unmanipulated_metrics_match_direct_evaluation() {
        let s = schema();
        let m = model(&s);
        let items = test_set();
        let out = manipulate(
            &items,
            &outcomes(&m, &items, &s),
            &pool(),
            Strategy::AccUp,
            0,
            7,
        )
        .unwrap();
        let direct = metrics(&m, &items, &s);
        let via = evaluate_manipulated(&m, &out, &s, SimilarConfig::default(), 0.5).unwrap();
        assert_eq!(direct, via);
    }
}
