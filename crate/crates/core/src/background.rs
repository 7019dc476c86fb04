//! Analyst beliefs about counter scales.
//!
//! Every (object, concept) pair carries a distribution over scale buckets
//! `-1..=cap`. Before anything is communicated the distributions are the
//! maximum-entropy geometrics implied by the prior means and are shared by
//! all objects. Communicating a pattern conditions the covered objects'
//! distributions on "at least `1-α` of the mass lies at or above the
//! quantile bucket"; the object's concepts are then tied together by a tree
//! model with factors `[y_parent >= y_child]` and exact marginals are
//! recovered by two-pass sum-product.
//!
//! All probabilities are held as natural logarithms so that extremely
//! surprising observations keep a finite information content.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Bucket, ConceptId, ConceptTree};
use crate::ingestion::PriorTable;

pub const DEFAULT_BUCKET_CAP: Bucket = 50;

/// Largest tolerated mass beyond the closing bucket's lower edge doubled.
const CAP_TAIL_LIMIT: f64 = 1e-12;
/// Tail mismatch below which a communicated constraint counts as satisfied.
const CONSTRAINT_TOLERANCE: f64 = 1e-12;
const MAX_FITTING_SWEEPS: usize = 200;

#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_sum(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
fn slot(b: Bucket) -> usize {
    (b + 1) as usize
}

/// Probability mass over buckets `-1..=cap`, stored as log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketDistribution {
    log_probs: Vec<f64>,
    // log of the mass at or above each bucket
    log_tails: Vec<f64>,
}

impl BucketDistribution {
    /// Bucketed geometric law with mean `mean`: `Pr(X = x) = (1-p)^x p`
    /// with `p = 1/(1+mean)`. Bucket `-1` holds `X = 0`, bucket `q` holds
    /// `2^q <= X < 2^(q+1)` and the last bucket absorbs the rest.
    pub fn geometric(mean: f64, cap: Bucket) -> Result<BucketDistribution> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::Config(format!("geometric mean must be positive, got {mean}")));
        }
        if cap < 1 {
            return Err(Error::Config(format!("bucket cap must be at least 1, got {cap}")));
        }
        let p = 1.0 / (1.0 + mean);
        let log_q = (-p).ln_1p();
        let mut log_probs = Vec::with_capacity(slot(cap) + 1);
        log_probs.push(p.ln());
        for q in 0..cap {
            // log((1-p)^(2^q) - (1-p)^(2^(q+1)))
            let lo = 2f64.powi(q) * log_q;
            log_probs.push(lo + (-lo.exp_m1()).ln());
        }
        log_probs.push(2f64.powi(cap) * log_q);
        Ok(Self::from_log_weights(log_probs).expect("geometric mass is positive"))
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_probs(probs: &[f64]) -> Result<BucketDistribution> {
        if probs.len() < 3 || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Config(format!("invalid bucket probabilities {probs:?}")));
        }
        Self::from_log_weights(probs.iter().map(|p| p.ln()).collect())
            .ok_or_else(|| Error::Config("bucket probabilities sum to zero".into()))
    }

    fn from_log_weights(mut log_probs: Vec<f64>) -> Option<BucketDistribution> {
        let total = log_sum(&log_probs);
        if !total.is_finite() {
            return None;
        }
        for lp in &mut log_probs {
            *lp -= total;
        }
        let mut log_tails = vec![f64::NEG_INFINITY; log_probs.len()];
        let mut acc = f64::NEG_INFINITY;
        for i in (0..log_probs.len()).rev() {
            acc = log_add(acc, log_probs[i]);
            log_tails[i] = acc;
        }
        Some(BucketDistribution { log_probs, log_tails })
    }

    pub fn cap(&self) -> Bucket {
        self.log_probs.len() as Bucket - 2
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }

    pub fn prob(&self, b: Bucket) -> f64 {
        self.log_probs.get(slot(b)).map_or(0.0, |lp| lp.exp())
    }

    /// Natural log of `Pr(Y >= t)`.
    pub fn log_tail(&self, t: Bucket) -> f64 {
        if t <= -1 {
            0.0
        } else if t > self.cap() {
            f64::NEG_INFINITY
        } else {
            self.log_tails[slot(t)]
        }
    }

    /// `Pr(Y >= t)`; exactly 1 for `t = -1`.
    pub fn tail(&self, t: Bucket) -> f64 {
        self.log_tail(t).exp()
    }

    /// Natural log of `Pr(Y < t)`.
    pub fn log_lower(&self, t: Bucket) -> f64 {
        if t <= -1 {
            return f64::NEG_INFINITY;
        }
        let end = slot(t).min(self.log_probs.len());
        log_sum(&self.log_probs[..end])
    }

    /// Log factors that move the mass at or above `t` to exactly `1 - alpha`,
    /// or `None` when one side of the split holds no mass.
    fn conditioning_factors(&self, t: Bucket, alpha: f64) -> Option<(f64, f64)> {
        let upper = self.log_tail(t);
        let lower = self.log_lower(t);
        if upper == f64::NEG_INFINITY || lower == f64::NEG_INFINITY {
            return None;
        }
        Some(((1.0 - alpha).ln() - upper, alpha.ln() - lower))
    }

    fn scaled(&self, t: Bucket, (up, low): (f64, f64)) -> BucketDistribution {
        let weights = self
            .log_probs
            .iter()
            .enumerate()
            .map(|(i, lp)| lp + if i >= slot(t) { up } else { low })
            .collect();
        Self::from_log_weights(weights).expect("scaling keeps positive mass")
    }

    /// The distribution conditioned so that `Pr(Y >= t) = 1 - alpha`.
    /// `None` when `Pr(Y >= t)` is 0 or 1 and conditioning is meaningless.
    pub fn conditioned(&self, t: Bucket, alpha: f64) -> Option<BucketDistribution> {
        self.conditioning_factors(t, alpha).map(|f| self.scaled(t, f))
    }
}

/// A (concept, quantile bucket, order) constraint communicated for an object.
#[derive(Clone, Copy, Debug, PartialEq)]
struct TailConstraint {
    concept: ConceptId,
    bucket: Bucket,
    alpha: f64,
}

#[derive(Clone, Debug)]
struct ObjectBeliefs {
    // node factors that differ from the shared prior
    potentials: BTreeMap<ConceptId, BucketDistribution>,
    marginals: Vec<BucketDistribution>,
    coupled: bool,
}

/// A skipped (object, concept) conditioning whose tail was already 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateWarning {
    pub object: String,
    pub concept: ConceptId,
    pub tail: f64,
}

#[derive(Clone, Debug)]
pub struct BackgroundModel {
    cap: Bucket,
    object_ids: Vec<String>,
    prior_means: Vec<f64>,
    priors: Vec<BucketDistribution>,
    overrides: BTreeMap<usize, ObjectBeliefs>,
    pending: BTreeMap<usize, Vec<TailConstraint>>,
}

impl BackgroundModel {
    pub fn new(priors: &PriorTable, cap: Bucket, object_ids: Vec<String>) -> Result<BackgroundModel> {
        let dists = priors
            .means()
            .iter()
            .map(|m| {
                let d = BucketDistribution::geometric(*m, cap)?;
                // Pr(X >= 2^(cap+1)) = (1-p)^(2^(cap+1))
                let log_beyond = 2f64.powi(cap + 1) * (-1.0 / (1.0 + m)).ln_1p();
                if log_beyond >= CAP_TAIL_LIMIT.ln() {
                    return Err(Error::Config(format!(
                        "bucket cap {cap} too small for prior mean {m}"
                    )));
                }
                Ok(d)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BackgroundModel {
            cap,
            object_ids,
            prior_means: priors.means().to_vec(),
            priors: dists,
            overrides: BTreeMap::new(),
            pending: BTreeMap::new(),
        })
    }

    pub fn cap(&self) -> Bucket {
        self.cap
    }

    pub fn concept_count(&self) -> usize {
        self.priors.len()
    }

    pub fn object_count(&self) -> usize {
        self.object_ids.len()
    }

    pub fn prior(&self, concept: ConceptId) -> &BucketDistribution {
        &self.priors[concept.index()]
    }

    pub fn prior_mean(&self, concept: ConceptId) -> f64 {
        self.prior_means[concept.index()]
    }

    /// Whether any belief about `object` departs from the shared prior.
    pub fn is_pristine(&self, object: usize) -> bool {
        !self.overrides.contains_key(&object)
    }

    pub fn distribution(&self, object: usize, concept: ConceptId) -> &BucketDistribution {
        match self.overrides.get(&object) {
            Some(beliefs) => &beliefs.marginals[concept.index()],
            None => &self.priors[concept.index()],
        }
    }

    pub fn tail_probability(&self, object: usize, concept: ConceptId, t: Bucket) -> f64 {
        self.distribution(object, concept).tail(t)
    }

    pub fn log_tail(&self, object: usize, concept: ConceptId, t: Bucket) -> f64 {
        self.distribution(object, concept).log_tail(t)
    }

    fn beliefs_mut(&mut self, object: usize) -> &mut ObjectBeliefs {
        let priors = &self.priors;
        self.overrides.entry(object).or_insert_with(|| ObjectBeliefs {
            potentials: BTreeMap::new(),
            marginals: priors.clone(),
            coupled: false,
        })
    }

    /// Conditions every covered object so that `Pr(Y >= t) = 1 - alpha` for
    /// each `(concept, t)` in `quantiles`. Pairs whose tail is already 0 or 1
    /// are skipped and reported.
    pub fn apply_pattern_update(
        &mut self,
        tree: &ConceptTree,
        objects: &[usize],
        quantiles: &[(ConceptId, Bucket)],
        alpha: f64,
    ) -> Result<Vec<UpdateWarning>> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("quantile order must lie in (0, 1), got {alpha}")));
        }
        if tree.len() != self.priors.len() {
            return Err(Error::Consistency("tree does not match the model's concepts".into()));
        }
        for &(concept, t) in quantiles {
            if concept.index() >= self.priors.len() || !(-1..=self.cap).contains(&t) {
                return Err(Error::Consistency(format!("invalid quantile {concept}@{t}")));
            }
        }
        let concepts: Vec<ConceptId> = quantiles.iter().map(|q| q.0).collect();
        if !tree.is_antichain(&concepts) {
            return Err(Error::Consistency("quantile concepts do not form an antichain".into()));
        }
        if let Some(o) = objects.iter().find(|o| **o >= self.object_ids.len()) {
            return Err(Error::Consistency(format!("object index {o} out of range")));
        }

        let mut warnings = Vec::new();
        for &object in objects {
            for &(concept, t) in quantiles {
                let current = self.distribution(object, concept);
                let Some(factors) = current.conditioning_factors(t, alpha) else {
                    let tail = current.tail(t);
                    log::warn!(
                        "skipping update of {} at {}: tail probability is {tail}",
                        self.object_ids[object],
                        tree.name(concept)
                    );
                    warnings.push(UpdateWarning {
                        object: self.object_ids[object].clone(),
                        concept,
                        tail,
                    });
                    continue;
                };
                let prior = self.priors[concept.index()].clone();
                let beliefs = self.beliefs_mut(object);
                let marginal = beliefs.marginals[concept.index()].scaled(t, factors);
                let potential = beliefs.potentials.get(&concept).unwrap_or(&prior).scaled(t, factors);
                beliefs.marginals[concept.index()] = marginal;
                beliefs.potentials.insert(concept, potential);
                self.pending.entry(object).or_default().push(TailConstraint {
                    concept,
                    bucket: t,
                    alpha,
                });
            }
        }
        Ok(warnings)
    }

    /// Recomputes every marginal of the given objects as exact marginals of
    /// the tree model, refitting node factors until the constraints of the
    /// most recent updates hold again. Objects still on the shared prior are
    /// left untouched.
    pub fn propagate(&mut self, tree: &ConceptTree, objects: &[usize]) -> Result<()> {
        if tree.len() != self.priors.len() {
            return Err(Error::Consistency("tree does not match the model's concepts".into()));
        }
        for &object in objects {
            if !self.overrides.contains_key(&object) {
                continue;
            }
            let constraints = self.pending.remove(&object).unwrap_or_default();
            let name = self.object_ids[object].clone();
            let priors = &self.priors;
            let beliefs = self.overrides.get_mut(&object).expect("checked above");
            let mut potentials: Vec<&BucketDistribution> = priors.iter().collect();
            for (c, d) in &beliefs.potentials {
                potentials[c.index()] = d;
            }
            let mut marginals = tree_marginals(tree, &potentials).map_err(|concept| Error::Propagation {
                object: name.clone(),
                concept: tree.name(concept).to_string(),
            })?;

            for _ in 0..MAX_FITTING_SWEEPS {
                let mut adjusted: Vec<(ConceptId, BucketDistribution)> = Vec::new();
                for c in &constraints {
                    let marginal = &marginals[c.concept.index()];
                    if (marginal.tail(c.bucket) - (1.0 - c.alpha)).abs() <= CONSTRAINT_TOLERANCE {
                        continue;
                    }
                    if let Some(factors) = marginal.conditioning_factors(c.bucket, c.alpha) {
                        let base = adjusted
                            .iter()
                            .rev()
                            .find(|(id, _)| *id == c.concept)
                            .map(|(_, d)| d)
                            .unwrap_or(potentials[c.concept.index()]);
                        adjusted.push((c.concept, base.scaled(c.bucket, factors)));
                    }
                }
                if adjusted.is_empty() {
                    break;
                }
                for (c, d) in adjusted {
                    beliefs.potentials.insert(c, d);
                }
                potentials = priors.iter().collect();
                for (c, d) in &beliefs.potentials {
                    potentials[c.index()] = d;
                }
                marginals = tree_marginals(tree, &potentials).map_err(|concept| Error::Propagation {
                    object: name.clone(),
                    concept: tree.name(concept).to_string(),
                })?;
            }
            beliefs.marginals = marginals;
            beliefs.coupled = true;
        }
        Ok(())
    }

    pub fn to_snapshot(&self, tree: &ConceptTree) -> ModelSnapshot {
        let named = |d: &BucketDistribution| d.probs();
        ModelSnapshot {
            priors: tree.ids().map(|id| (tree.name(id).to_string(), named(&self.priors[id.index()]))).collect(),
            overrides: self
                .overrides
                .iter()
                .map(|(o, b)| {
                    (
                        self.object_ids[*o].clone(),
                        tree.ids().map(|id| (tree.name(id).to_string(), named(&b.marginals[id.index()]))).collect(),
                    )
                })
                .collect(),
            potentials: self
                .overrides
                .iter()
                .map(|(o, b)| {
                    (
                        self.object_ids[*o].clone(),
                        b.potentials.iter().map(|(id, d)| (tree.name(*id).to_string(), named(d))).collect(),
                    )
                })
                .collect(),
        }
    }

    /// Restores overrides from a snapshot taken on the same dataset and priors.
    pub fn restore(&mut self, tree: &ConceptTree, snapshot: &ModelSnapshot) -> Result<()> {
        let object_index = |id: &str| {
            self.object_ids
                .iter()
                .position(|o| o == id)
                .ok_or_else(|| Error::Consistency(format!("snapshot object {id:?} not in dataset")))
        };
        let width = slot(self.cap) + 1;
        let read = |probs: &Vec<f64>| {
            if probs.len() != width {
                return Err(Error::Consistency(format!("snapshot distribution has {} buckets, expected {width}", probs.len())));
            }
            BucketDistribution::from_probs(probs)
        };
        let mut overrides = BTreeMap::new();
        for (object, named) in &snapshot.overrides {
            let index = object_index(object)?;
            let mut marginals = self.priors.clone();
            for (name, probs) in named {
                marginals[tree.require(name)?.index()] = read(probs)?;
            }
            let mut potentials = BTreeMap::new();
            if let Some(named) = snapshot.potentials.get(object) {
                for (name, probs) in named {
                    potentials.insert(tree.require(name)?, read(probs)?);
                }
            }
            overrides.insert(index, ObjectBeliefs {
                potentials,
                marginals,
                coupled: true,
            });
        }
        self.overrides = overrides;
        self.pending.clear();
        Ok(())
    }
}

/// Serializable model state for resuming a mining session.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct ModelSnapshot {
    pub priors: BTreeMap<String, Vec<f64>>,
    pub overrides: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    #[serde(default)]
    pub potentials: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

/// Exact marginals of `∏ φ_v(y_v) · ∏_edges [y_parent >= y_child]`.
///
/// Upward messages are prefix sums of the child's subtree belief, downward
/// messages suffix sums of the parent's belief without the receiving child,
/// so each edge costs O(buckets). On failure returns the concept whose
/// belief vanished.
pub fn tree_marginals(
    tree: &ConceptTree,
    potentials: &[&BucketDistribution],
) -> std::result::Result<Vec<BucketDistribution>, ConceptId> {
    let n = tree.len();
    let k = potentials[0].log_probs.len();
    // subtree belief of v (potential times messages from its children)
    let mut inward: Vec<Vec<f64>> = potentials.iter().map(|p| p.log_probs.clone()).collect();
    // message v -> parent, indexed by the parent's bucket
    let mut to_parent: Vec<Vec<f64>> = vec![Vec::new(); n];

    for id in tree.ids().rev() {
        let v = id.index();
        for &c in tree.children(id) {
            for (acc, m) in inward[v].iter_mut().zip(&to_parent[c.index()]) {
                *acc += m;
            }
        }
        if id == tree.root() {
            break;
        }
        let mut msg = Vec::with_capacity(k);
        let mut acc = f64::NEG_INFINITY;
        for &b in &inward[v] {
            acc = log_add(acc, b);
            msg.push(acc);
        }
        let norm = msg[k - 1];
        if norm == f64::NEG_INFINITY {
            return Err(id);
        }
        for m in &mut msg {
            *m -= norm;
        }
        to_parent[v] = msg;
    }

    // message parent -> v, indexed by v's bucket
    let mut from_parent: Vec<Vec<f64>> = vec![vec![0.0; k]; n];
    let mut marginals = Vec::with_capacity(n);
    for id in tree.ids() {
        let v = id.index();
        let children = tree.children(id);
        if !children.is_empty() {
            let base: Vec<f64> = potentials[v]
                .log_probs
                .iter()
                .zip(&from_parent[v])
                .map(|(a, b)| a + b)
                .collect();
            // prefix[i] = base + messages of children before i
            let mut prefix = Vec::with_capacity(children.len());
            let mut running = base;
            for &c in children {
                prefix.push(running.clone());
                for (r, m) in running.iter_mut().zip(&to_parent[c.index()]) {
                    *r += m;
                }
            }
            let mut suffix = vec![0.0; k];
            for (i, &c) in children.iter().enumerate().rev() {
                let mut msg = vec![f64::NEG_INFINITY; k];
                let mut acc = f64::NEG_INFINITY;
                for b in (0..k).rev() {
                    acc = log_add(acc, prefix[i][b] + suffix[b]);
                    msg[b] = acc;
                }
                let norm = msg[0];
                if norm == f64::NEG_INFINITY {
                    return Err(id);
                }
                for m in &mut msg {
                    *m -= norm;
                }
                from_parent[c.index()] = msg;
                for (s, m) in suffix.iter_mut().zip(&to_parent[c.index()]) {
                    *s += m;
                }
            }
        }
        let belief: Vec<f64> = inward[v].iter().zip(&from_parent[v]).map(|(a, b)| a + b).collect();
        marginals.push(BucketDistribution::from_log_weights(belief).ok_or(id)?);
    }
    Ok(marginals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn geometric_mean_one() {
        let d = BucketDistribution::geometric(1.0, 50).unwrap();
        assert!(close(d.prob(-1), 0.5, 1e-15));
        assert!(close(d.prob(0), 0.25, 1e-15));
        assert!(close(d.prob(1), 0.1875, 1e-15));
        assert!(close(d.probs().iter().sum::<f64>(), 1.0, 1e-12));
    }

    #[test]
    fn geometric_large_mean_has_no_zero_mass() {
        let d = BucketDistribution::geometric(1e12, 50).unwrap();
        assert!(d.prob(-1) < 1e-11);
        assert!(close(d.probs().iter().sum::<f64>(), 1.0, 1e-12));
        assert!(BucketDistribution::geometric(0.0, 50).is_err());
        assert!(BucketDistribution::geometric(-3.0, 50).is_err());
    }

    #[test]
    fn geometric_tail_closed_form() {
        // Pr(X >= 2048) = (1-p)^2048, p = 1/1251
        let d = BucketDistribution::geometric(1250.0, 50).unwrap();
        let expected = (1250.0f64 / 1251.0).powi(2048);
        assert!(close(d.tail(11), expected, 1e-12));
        assert!(close(expected, 0.1944, 1e-4));
        assert_eq!(d.tail(-1), 1.0);
    }

    #[test]
    fn extreme_observations_keep_finite_log_tails() {
        let d = BucketDistribution::geometric(1.0, 50).unwrap();
        let lt = d.log_tail(30);
        assert!(lt.is_finite() && lt < -1e8);
    }

    #[test]
    fn conditioning_scales_both_sides() {
        let d = BucketDistribution::from_probs(&[0.3, 0.3, 0.25, 0.15]).unwrap();
        assert!(close(d.tail(1), 0.4, 1e-15));
        let u = d.conditioned(1, 0.25).unwrap();
        let p = u.probs();
        assert!(close(p[2], 0.25 * 1.875, 1e-12));
        assert!(close(p[3], 0.15 * 1.875, 1e-12));
        assert!(close(p[0], 0.3 * 0.25 / 0.6, 1e-12));
        assert!(close(u.tail(1), 0.75, 1e-12));
        let again = u.conditioned(1, 0.25).unwrap();
        for (a, b) in again.probs().iter().zip(u.probs()) {
            assert!(close(*a, b, 1e-12));
        }
        // tail already 1 - alpha
        let same = d.conditioned(1, 0.6).unwrap();
        for (a, b) in same.probs().iter().zip(d.probs()) {
            assert!(close(*a, b, 1e-12));
        }
        assert!(d.conditioned(-1, 0.25).is_none());
        let point = BucketDistribution::from_probs(&[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(point.conditioned(1, 0.25).is_none());
    }

    fn chain() -> ConceptTree {
        ConceptTree::build(["a"]).unwrap()
    }

    #[test]
    fn two_node_chain_marginals() {
        let tree = chain();
        // buckets {-1, 0, 1}; uniform over {0, 1}
        let u = BucketDistribution::from_probs(&[0.0, 0.5, 0.5]).unwrap();
        let m = tree_marginals(&tree, &[&u, &u]).unwrap();
        assert!(close(m[0].prob(1), 2.0 / 3.0, 1e-12));
        assert!(close(m[1].prob(0), 2.0 / 3.0, 1e-12));
    }

    #[test]
    fn consistent_potentials_are_unchanged() {
        let tree = chain();
        let parent = BucketDistribution::from_probs(&[0.0, 0.0, 0.3, 0.7]).unwrap();
        let child = BucketDistribution::from_probs(&[0.6, 0.4, 0.0, 0.0]).unwrap();
        let m = tree_marginals(&tree, &[&parent, &child]).unwrap();
        for (a, b) in m[0].probs().iter().zip(parent.probs()) {
            assert!(close(*a, b, 1e-12));
        }
        for (a, b) in m[1].probs().iter().zip(child.probs()) {
            assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn contradiction_is_reported() {
        let tree = chain();
        let parent = BucketDistribution::from_probs(&[1.0, 0.0, 0.0]).unwrap();
        let child = BucketDistribution::from_probs(&[0.0, 0.0, 1.0]).unwrap();
        assert!(tree_marginals(&tree, &[&parent, &child]).is_err());
    }

    fn model(tree: &ConceptTree, means: Vec<f64>, objects: usize) -> BackgroundModel {
        let priors = PriorTable::from_means(means).unwrap();
        let ids = (0..objects).map(|i| format!("o{i}")).collect();
        let m = BackgroundModel::new(&priors, 20, ids).unwrap();
        assert_eq!(m.concept_count(), tree.len());
        m
    }

    #[test]
    fn update_then_propagate_keeps_constraint_and_order() {
        let tree = ConceptTree::build(["j.l.r.F", "j.l.r.M", "j.l.S"]).unwrap();
        let means: Vec<f64> = tree.ids().map(|id| 1000.0 / tree.depth_count(id) as f64).collect();
        let mut m = model(&tree, means, 3);
        let r = tree.require("j.l.r").unwrap();
        let warnings = m.apply_pattern_update(&tree, &[0, 2], &[(r, 11)], 0.25).unwrap();
        assert!(warnings.is_empty());
        assert!(close(m.tail_probability(0, r, 11), 0.75, 1e-9));
        m.propagate(&tree, &[0, 2]).unwrap();
        assert!(close(m.tail_probability(0, r, 11), 0.75, 1e-9));
        let parent = tree.require("j.l").unwrap();
        assert!(m.tail_probability(0, parent, 11) >= 0.75 - 1e-12);
        // untouched object keeps the prior
        assert!(m.is_pristine(1));
        assert_eq!(m.distribution(1, r), m.prior(r));

        let before: Vec<Vec<f64>> = tree.ids().map(|c| m.distribution(0, c).probs()).collect();
        m.propagate(&tree, &[0]).unwrap();
        for c in tree.ids() {
            for (a, b) in m.distribution(0, c).probs().iter().zip(&before[c.index()]) {
                assert!(close(*a, *b, 1e-12));
            }
        }
    }

    #[test]
    fn update_rejects_structural_errors_without_mutation() {
        let tree = ConceptTree::build(["a.b"]).unwrap();
        let mut m = model(&tree, vec![10.0, 5.0, 5.0], 2);
        let a = tree.require("a").unwrap();
        let b = tree.require("a.b").unwrap();
        assert!(m.apply_pattern_update(&tree, &[0], &[(a, 3), (b, 2)], 0.2).is_err());
        assert!(m.apply_pattern_update(&tree, &[0], &[(b, 2)], 1.0).is_err());
        assert!(m.apply_pattern_update(&tree, &[5], &[(b, 2)], 0.2).is_err());
        assert!(m.apply_pattern_update(&tree, &[0], &[(b, 99)], 0.2).is_err());
        assert!(m.is_pristine(0));
        let w = m.apply_pattern_update(&tree, &[0], &[(b, -1)], 0.2).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].tail, 1.0);
    }

    #[test]
    fn snapshot_round_trip() {
        let tree = ConceptTree::build(["a.b", "a.c"]).unwrap();
        let mut m = model(&tree, vec![20.0, 10.0, 5.0, 5.0], 2);
        let b = tree.require("a.b").unwrap();
        m.apply_pattern_update(&tree, &[1], &[(b, 4)], 0.2).unwrap();
        m.propagate(&tree, &[1]).unwrap();
        let snap = m.to_snapshot(&tree);
        let json = serde_json::to_string(&snap).unwrap();
        let mut restored = model(&tree, vec![20.0, 10.0, 5.0, 5.0], 2);
        restored.restore(&tree, &serde_json::from_str(&json).unwrap()).unwrap();
        for c in tree.ids() {
            for (x, y) in m.distribution(1, c).probs().iter().zip(restored.distribution(1, c).probs()) {
                assert!(close(*x, y, 1e-12));
            }
        }
        assert!(restored.is_pristine(0));
    }
}
