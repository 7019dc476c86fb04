//! Interestingness of (subgroup, antichain) pairs: information content,
//! description length and their ratio, plus the CWRAcc and KL baselines.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::background::BackgroundModel;
use crate::error::{Error, Result};
use crate::hierarchy::{scale, Bucket, ConceptId, ConceptTree};
use crate::ingestion::{Dataset, PriorTable};
use crate::language::{Antichain, Pattern, SubgroupPattern};

pub const DL_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IcMode {
    /// `Pr(Y >= q)` under the current beliefs.
    #[default]
    Tail,
    /// Point mass of the pristine geometric at `q`.
    Printed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasureParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub theta: f64,
    pub ic_mode: IcMode,
}

impl Default for MeasureParams {
    fn default() -> Self {
        MeasureParams {
            alpha: 0.2,
            beta: 0.8,
            gamma: 0.2,
            eta: 1.0,
            theta: 1.0,
            ic_mode: IcMode::Tail,
        }
    }
}

impl MeasureParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::Config("beta and gamma must be non-negative".into()));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !self.theta.is_finite() {
            return Err(Error::Config("theta must be finite".into()));
        }
        Ok(())
    }
}

/// Dense per-(object, concept) counters and their scale buckets.
#[derive(Clone, Debug)]
pub struct Observations {
    concepts: usize,
    counts: Vec<u64>,
    buckets: Vec<Bucket>,
}

impl Observations {
    /// Buckets beyond `cap` are clamped into the closing bucket.
    pub fn new(dataset: &Dataset, cap: Bucket) -> Observations {
        let concepts = dataset.tree.len();
        let mut counts = Vec::with_capacity(concepts * dataset.len());
        for o in &dataset.objects {
            counts.extend(o.counters.to_dense(concepts));
        }
        let buckets = counts.iter().map(|x| scale(*x).min(cap)).collect();
        Observations {
            concepts,
            counts,
            buckets,
        }
    }

    pub fn count(&self, object: usize, concept: ConceptId) -> u64 {
        self.counts[object * self.concepts + concept.index()]
    }

    pub fn bucket(&self, object: usize, concept: ConceptId) -> Bucket {
        self.buckets[object * self.concepts + concept.index()]
    }
}

/// Element at 1-based rank `floor(alpha*n) + 1` of the sorted values.
pub fn quantile<T: Ord + Copy>(values: &[T], alpha: f64) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Config("quantile of an empty multiset".into()));
    }
    let mut v = values.to_vec();
    Ok(quantile_in_place(&mut v, alpha))
}

pub(crate) fn quantile_in_place<T: Ord + Copy>(values: &mut [T], alpha: f64) -> T {
    let n = values.len();
    // the epsilon keeps exact products such as 0.2 * 5 from rounding down
    let rank = ((alpha * n as f64 + 1e-9).floor() as usize + 1).min(n);
    *values.select_nth_unstable(rank - 1).1
}

/// Information content in bits of one concept over `objects`, with the
/// quantile bucket it was measured at.
pub fn concept_ic(
    model: &BackgroundModel,
    obs: &Observations,
    objects: &[usize],
    concept: ConceptId,
    params: &MeasureParams,
) -> (f64, Bucket) {
    let mut buckets: Vec<Bucket> = objects.iter().map(|o| obs.bucket(*o, concept)).collect();
    let q = quantile_in_place(&mut buckets, params.alpha);
    let nats = match params.ic_mode {
        IcMode::Tail => objects.iter().map(|o| -model.log_tail(*o, concept, q)).sum::<f64>(),
        IcMode::Printed => -model.prior(concept).log_probs()[(q + 1) as usize] * objects.len() as f64,
    };
    (nats / LN_2 + 0.0, q)
}

/// Total information content in bits and the per-concept quantile buckets.
pub fn information_content(
    model: &BackgroundModel,
    obs: &Observations,
    objects: &[usize],
    concepts: &[ConceptId],
    params: &MeasureParams,
) -> Result<(f64, Vec<(ConceptId, Bucket)>)> {
    if objects.is_empty() {
        return Err(Error::Config("information content of an empty subgroup".into()));
    }
    let mut ic = 0.0;
    let mut quantiles = Vec::with_capacity(concepts.len());
    for c in concepts {
        let (bits, q) = concept_ic(model, obs, objects, *c, params);
        ic += bits;
        quantiles.push((*c, q));
    }
    Ok((ic, quantiles))
}

/// `1 + log2(depth_count)`: the cost of naming one antichain member.
pub fn concept_cost(tree: &ConceptTree, concept: ConceptId) -> f64 {
    1.0 + (tree.depth_count(concept) as f64).log2()
}

/// Description cost of the subgroup part alone.
pub fn subgroup_cost(norm: usize, extent_size: usize, params: &MeasureParams) -> f64 {
    params.beta * (extent_size.max(1) as f64).log2() + params.gamma * norm as f64
}

pub fn description_length(
    norm: usize,
    extent_size: usize,
    tree: &ConceptTree,
    concepts: &[ConceptId],
    params: &MeasureParams,
) -> f64 {
    let members: f64 = concepts.iter().map(|c| concept_cost(tree, *c)).sum();
    (subgroup_cost(norm, extent_size, params) * params.eta * members).max(DL_FLOOR)
}

/// Scores a subgroup with a fixed antichain. `None` marks a rejected
/// candidate: empty extent, empty antichain, or an infinite IC.
pub fn si_score(
    model: &BackgroundModel,
    obs: &Observations,
    tree: &ConceptTree,
    subgroup: &SubgroupPattern,
    extent: &[usize],
    concepts: &[ConceptId],
    params: &MeasureParams,
) -> Option<Pattern> {
    if extent.is_empty() || concepts.is_empty() {
        return None;
    }
    let (ic, quantiles) = information_content(model, obs, extent, concepts, params).ok()?;
    if !ic.is_finite() {
        log::debug!("infinite information content for {subgroup}");
        return None;
    }
    let dl = description_length(subgroup.norm(), extent.len(), tree, concepts, params);
    let si = ic / dl;
    Some(Pattern {
        subgroup: subgroup.clone(),
        antichain: Antichain::new(tree, quantiles).ok()?,
        extent: extent.to_vec(),
        ic,
        dl,
        si,
        score: si,
    })
}

/// Mean observed counter minus the prior mean.
pub fn concept_deviation(obs: &Observations, priors: &PriorTable, objects: &[usize], concept: ConceptId) -> f64 {
    let sum: f64 = objects.iter().map(|o| obs.count(*o, concept) as f64).sum();
    sum / objects.len() as f64 - priors.mean(concept)
}

pub fn cwracc(obs: &Observations, priors: &PriorTable, objects: &[usize], concepts: &[ConceptId], theta: f64) -> f64 {
    if objects.is_empty() || concepts.is_empty() {
        return f64::NEG_INFINITY;
    }
    let total: f64 = concepts.iter().map(|c| concept_deviation(obs, priors, objects, *c)).sum();
    total / (concepts.len() as f64).powf(theta)
}

/// KL divergence in bits from the subgroup's bucket histogram to the prior
/// bucket distribution. Both sides receive one pseudo-count per bucket so
/// that far tail buckets with negligible prior mass cannot dominate.
pub fn concept_kl(model: &BackgroundModel, obs: &Observations, objects: &[usize], concept: ConceptId) -> f64 {
    let prior = model.prior(concept).probs();
    let k = prior.len() as f64;
    let n = objects.len() as f64;
    let mut counts = vec![0usize; prior.len()];
    for o in objects {
        counts[(obs.bucket(*o, concept) + 1) as usize] += 1;
    }
    counts
        .iter()
        .zip(&prior)
        .map(|(c, p)| {
            let e = (*c as f64 + 1.0) / (n + k);
            let q = (n * p + 1.0) / (n + k);
            e * (e / q).log2()
        })
        .sum::<f64>()
        .max(0.0)
}

pub fn kl_score(model: &BackgroundModel, obs: &Observations, objects: &[usize], concepts: &[ConceptId]) -> f64 {
    if objects.is_empty() || concepts.is_empty() {
        return f64::NEG_INFINITY;
    }
    concepts.iter().map(|c| concept_kl(model, obs, objects, *c)).sum()
}

/// `Σ (m - x̄) / m` over the antichain, `m` being the subgroup mean. Terms
/// with a zero subgroup mean contribute nothing.
pub fn contrast(obs: &Observations, priors: &PriorTable, pattern: &Pattern) -> f64 {
    let n = pattern.extent.len() as f64;
    pattern
        .antichain
        .concepts()
        .iter()
        .map(|c| {
            let m = pattern.extent.iter().map(|o| obs.count(*o, *c) as f64).sum::<f64>() / n;
            if m == 0.0 {
                log::warn!("zero subgroup mean on concept {c}; contrast term skipped");
                0.0
            } else {
                (m - priors.mean(*c)) / m
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::DEFAULT_BUCKET_CAP;
    use crate::language::Selector;
    use crate::testkit::toy_table_with_priors;
    use proptest::prelude::*;

    fn model_for(ds: &Dataset, priors: &PriorTable) -> BackgroundModel {
        let ids = ds.objects.iter().map(|o| o.id.clone()).collect();
        BackgroundModel::new(priors, DEFAULT_BUCKET_CAP, ids).unwrap()
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[2980, 3003, 2814, 1577], 0.25).unwrap(), 2814);
        assert_eq!(quantile(&[11, 11, 11, 10], 0.25).unwrap(), 11);
        assert_eq!(quantile(&[1, 2, 3, 4, 5], 0.2).unwrap(), 2);
        assert_eq!(quantile(&[7, 7, 7], 0.9).unwrap(), 7);
        assert_eq!(quantile(&[-1, 3], 0.2).unwrap(), -1);
        assert!(quantile::<i32>(&[], 0.2).is_err());
    }

    #[test]
    fn description_length_examples() {
        let (ds, _) = toy_table_with_priors();
        let t = &ds.tree;
        let p = MeasureParams::default();
        let reflect = t.require("java.lang.reflect").unwrap();
        assert_eq!(t.depth_count(reflect), 4);
        assert!((description_length(2, 4, t, &[reflect], &p) - 6.0).abs() < 1e-12);
        assert_eq!(description_length(0, 1, t, &[reflect], &p), DL_FLOOR);
        let java = t.require("java").unwrap();
        let members = concept_cost(t, java) + concept_cost(t, reflect);
        assert!((members - 5.0).abs() < 1e-12);
    }

    #[test]
    fn information_content_is_zero_when_quantile_is_empty_bucket() {
        let (ds, priors) = toy_table_with_priors();
        let mut ds = ds;
        for o in &mut ds.objects {
            o.counters = crate::hierarchy::CounterVector::default();
        }
        let model = model_for(&ds, &priors);
        let obs = Observations::new(&ds, DEFAULT_BUCKET_CAP);
        let all: Vec<usize> = (0..ds.len()).collect();
        let c: Vec<ConceptId> = ds.tree.ids().collect();
        let (ic, q) = information_content(&model, &obs, &all, &c, &MeasureParams::default()).unwrap();
        assert_eq!(ic, 0.0);
        assert!(q.iter().all(|(_, b)| *b == -1));
    }

    #[test]
    fn sales_v3_reflect_scores() {
        let (ds, priors) = toy_table_with_priors();
        let model = model_for(&ds, &priors);
        let obs = Observations::new(&ds, DEFAULT_BUCKET_CAP);
        let sub = SubgroupPattern::new(vec![
            Selector::equals("softType", "Sales"),
            Selector::equals("softVersion", "V_3"),
        ])
        .unwrap();
        let extent = sub.extent(&ds).unwrap();
        let reflect = ds.tree.require("java.lang.reflect").unwrap();
        let params = MeasureParams {
            alpha: 0.25,
            ..MeasureParams::default()
        };
        let p = si_score(&model, &obs, &ds.tree, &sub, &extent, &[reflect], &params).unwrap();
        assert_eq!(p.antichain.quantiles(), [(reflect, 11)]);
        // Pr(X >= 2048) with mean 1250, four objects
        let log_tail = 2048.0 * (1.0 - 1.0 / 1251.0f64).ln();
        assert!((p.ic - 4.0 * -log_tail / LN_2).abs() < 1e-9);
        assert!((p.dl - 6.0).abs() < 1e-12);
        assert!((p.si - p.ic / 6.0).abs() < 1e-12);

        assert!(si_score(&model, &obs, &ds.tree, &sub, &[], &[reflect], &params).is_none());
        assert!(si_score(&model, &obs, &ds.tree, &sub, &extent, &[], &params).is_none());
    }

    #[test]
    fn update_lowers_the_score_of_the_communicated_pattern() {
        let (ds, priors) = toy_table_with_priors();
        let mut model = model_for(&ds, &priors);
        let obs = Observations::new(&ds, DEFAULT_BUCKET_CAP);
        let sub = SubgroupPattern::new(vec![Selector::equals("softType", "Sales")]).unwrap();
        let extent = sub.extent(&ds).unwrap();
        let reflect = ds.tree.require("java.lang.reflect").unwrap();
        let params = MeasureParams::default();
        let before = si_score(&model, &obs, &ds.tree, &sub, &extent, &[reflect], &params).unwrap();
        model
            .apply_pattern_update(&ds.tree, &extent, &before.antichain.quantiles(), params.alpha)
            .unwrap();
        model.propagate(&ds.tree, &extent).unwrap();
        let after = si_score(&model, &obs, &ds.tree, &sub, &extent, &[reflect], &params).unwrap();
        assert!(after.si < before.si);
        let bound = extent.len() as f64 * -(1.0 - params.alpha).log2();
        assert!(after.ic <= bound + 1e-9);
    }

    #[test]
    fn printed_mode_uses_point_mass() {
        let (ds, priors) = toy_table_with_priors();
        let model = model_for(&ds, &priors);
        let obs = Observations::new(&ds, DEFAULT_BUCKET_CAP);
        let reflect = ds.tree.require("java.lang.reflect").unwrap();
        let params = MeasureParams {
            ic_mode: IcMode::Printed,
            alpha: 0.25,
            ..MeasureParams::default()
        };
        let objects = [0usize, 1, 6, 8];
        let (bits, q) = concept_ic(&model, &obs, &objects, reflect, &params);
        assert_eq!(q, 11);
        let keep = 1.0 - 1.0 / 1251.0f64;
        let mass = keep.powf(2048.0) - keep.powf(4096.0);
        assert!((bits - 4.0 * -mass.log2()).abs() < 1e-9);
    }

    #[test]
    fn cwracc_examples() {
        let (ds, priors) = toy_table_with_priors();
        let obs = Observations::new(&ds, DEFAULT_BUCKET_CAP);
        let reflect = ds.tree.require("java.lang.reflect").unwrap();
        let objects = [0usize, 1, 6, 8];
        assert!((cwracc(&obs, &priors, &objects, &[reflect], 1.0) - 1343.5).abs() < 1e-9);

        let field = ds.tree.require("java.lang.reflect.Field").unwrap();
        let string = ds.tree.require("java.lang.String").unwrap();
        let d1 = concept_deviation(&obs, &priors, &objects, field);
        let d2 = concept_deviation(&obs, &priors, &objects, string);
        let both = cwracc(&obs, &priors, &objects, &[field, string], 1.0);
        assert!((both - (d1 + d2) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn kl_point_mass_is_largest_on_least_likely_bucket() {
        // three buckets: -1, 0 and the closing bucket 1
        let dist = crate::background::BucketDistribution::geometric(0.5, 1).unwrap();
        let probs = dist.probs();
        let least = (0..probs.len()).min_by(|a, b| probs[*a].total_cmp(&probs[*b])).unwrap();
        let n = 6.0;
        let k = probs.len() as f64;
        let kl_at = |j: usize| -> f64 {
            (0..probs.len())
                .map(|i| {
                    let e = (if i == j { n + 1.0 } else { 1.0 }) / (n + k);
                    let q = (n * probs[i] + 1.0) / (n + k);
                    e * (e / q).log2()
                })
                .sum()
        };
        let best = (0..probs.len()).max_by(|a, b| kl_at(*a).total_cmp(&kl_at(*b))).unwrap();
        assert_eq!(best, least);
    }

    #[test]
    fn contrast_examples() {
        let (ds, priors) = toy_table_with_priors();
        let obs = Observations::new(&ds, DEFAULT_BUCKET_CAP);
        let model = model_for(&ds, &priors);
        let reflect = ds.tree.require("java.lang.reflect").unwrap();
        let sub = SubgroupPattern::new(vec![Selector::equals("softType", "Sales")]).unwrap();
        let extent = sub.extent(&ds).unwrap();
        let p = si_score(&model, &obs, &ds.tree, &sub, &extent, &[reflect], &MeasureParams::default()).unwrap();
        let m = extent.iter().map(|o| obs.count(*o, reflect) as f64).sum::<f64>() / extent.len() as f64;
        assert!((contrast(&obs, &priors, &p) - (m - 1250.0) / m).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(MeasureParams::default().validate().is_ok());
        assert!(MeasureParams { alpha: 1.0, ..Default::default() }.validate().is_err());
        assert!(MeasureParams { eta: 0.0, ..Default::default() }.validate().is_err());
        assert!(MeasureParams { beta: -1.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn quantile_leaves_enough_mass_above(values in prop::collection::vec(-1i32..20, 1..40), alpha in 0.01f64..0.99) {
            let q = quantile(&values, alpha).unwrap();
            let above = values.iter().filter(|v| **v >= q).count();
            let need = ((1.0 - alpha) * values.len() as f64 - 1e-9).ceil() as usize;
            prop_assert!(above >= need);
            prop_assert!(values.contains(&q));
        }

        #[test]
        fn description_length_is_monotone(norm in 0usize..6, extent in 1usize..500, extra in 1usize..4) {
            let (ds, _) = toy_table_with_priors();
            let t = &ds.tree;
            let p = MeasureParams::default();
            let field = t.require("java.lang.reflect.Field").unwrap();
            let string = t.require("java.lang.String").unwrap();
            let reflect = t.require("java.lang.reflect").unwrap();
            let base = description_length(norm, extent + 1, t, &[field], &p);
            prop_assert!(description_length(norm + extra, extent + 1, t, &[field], &p) > base);
            prop_assert!(description_length(norm, extent + 1 + extra, t, &[field], &p) > base);
            prop_assert!(description_length(norm, extent + 1, t, &[field, string], &p) > base);
            prop_assert!(description_length(norm, extent + 1, t, &[reflect], &p) < base);
        }

        #[test]
        fn kl_is_non_negative(buckets in prop::collection::vec(-1i32..14, 1..30)) {
            let priors = PriorTable::from_means(vec![300.0]).unwrap();
            let model = BackgroundModel::new(&priors, DEFAULT_BUCKET_CAP, vec![]).unwrap();
            let obs = Observations {
                concepts: 1,
                counts: buckets.iter().map(|b| if *b < 0 { 0 } else { 1u64 << b }).collect(),
                buckets: buckets.clone(),
            };
            let objects: Vec<usize> = (0..buckets.len()).collect();
            prop_assert!(kl_score(&model, &obs, &objects, &[ConceptId::ROOT]) >= 0.0);
        }
    }
}
