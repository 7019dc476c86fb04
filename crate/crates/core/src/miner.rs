//! The mine, communicate, update loop and the beam search behind it.

use std::cmp::Ordering;
use std::collections::HashSet;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{BackgroundModel, UpdateWarning, DEFAULT_BUCKET_CAP};
use crate::error::{Error, Result};
use crate::hierarchy::{Bucket, ConceptId};
use crate::ingestion::{Dataset, PriorTable};
use crate::language::{generate_selectors, Pattern, Selector, SubgroupPattern};
use crate::measures::{
    concept_cost, concept_deviation, concept_ic, concept_kl, si_score, subgroup_cost, MeasureParams, Observations,
    DL_FLOOR,
};

/// Largest tree the exhaustive antichain search accepts.
pub const EXHAUSTIVE_LIMIT: usize = 32;
const IMPROVEMENT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[default]
    Si,
    SiNoUpdate,
    Cwracc,
    Kl,
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "si" => Ok(Measure::Si),
            "si_no_update" => Ok(Measure::SiNoUpdate),
            "cwracc" => Ok(Measure::Cwracc),
            "kl" => Ok(Measure::Kl),
            other => Err(Error::Config(format!("unknown measure {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntichainSearch {
    #[default]
    Greedy,
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinerConfig {
    /// Beam width; `usize::MAX` keeps every candidate.
    pub width: usize,
    pub depth: usize,
    /// Maximum number of patterns to emit.
    pub threshold: usize,
    pub measure: Measure,
    pub params: MeasureParams,
    pub bins: usize,
    pub jaccard_threshold: f64,
    pub bucket_cap: Bucket,
    pub antichain: AntichainSearch,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            width: 50,
            depth: 4,
            threshold: 20,
            measure: Measure::Si,
            params: MeasureParams::default(),
            bins: 5,
            jaccard_threshold: 0.5,
            bucket_cap: DEFAULT_BUCKET_CAP,
            antichain: AntichainSearch::Greedy,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 || self.threshold == 0 {
            return Err(Error::Config("width, depth and threshold must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.jaccard_threshold) {
            return Err(Error::Config("jaccard threshold must lie in [0, 1]".into()));
        }
        if self.bucket_cap < 1 {
            return Err(Error::Config("bucket cap must be at least 1".into()));
        }
        self.params.validate()
    }
}

/// Per-concept contributions of one extent under the configured measure.
struct ConceptScores {
    values: Vec<f64>,
    costs: Vec<f64>,
    subgroup_cost: f64,
}

#[derive(Clone, Debug, Default)]
pub struct BeamOutcome {
    pub best: Option<Pattern>,
    /// Every scored candidate, best first.
    pub pool: Vec<Pattern>,
    pub evaluated: usize,
}

#[derive(Debug)]
pub struct MiningResult {
    pub patterns: Vec<Pattern>,
    pub warnings: Vec<UpdateWarning>,
    /// Set when propagation failed; `patterns` holds what was found before.
    pub aborted: Option<Error>,
    pub model: BackgroundModel,
}

struct Candidate {
    subgroup: SubgroupPattern,
    text: String,
    extent: FixedBitSet,
    pattern: Option<Pattern>,
}

impl Candidate {
    fn score(&self) -> f64 {
        self.pattern.as_ref().map_or(f64::NEG_INFINITY, |p| p.score)
    }
}

fn rank(a_score: f64, a_norm: usize, a_text: &str, b_score: f64, b_norm: usize, b_text: &str) -> Ordering {
    b_score
        .total_cmp(&a_score)
        .then(a_norm.cmp(&b_norm))
        .then_with(|| a_text.cmp(b_text))
}

/// Orders patterns best first: score, then shorter description, then text.
pub fn pattern_order(a: &Pattern, b: &Pattern) -> Ordering {
    rank(
        a.score,
        a.subgroup.norm(),
        &a.subgroup.to_string(),
        b.score,
        b.subgroup.norm(),
        &b.subgroup.to_string(),
    )
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    rank(a.score(), a.subgroup.norm(), &a.text, b.score(), b.subgroup.norm(), &b.text)
}

pub struct Miner<'a> {
    dataset: &'a Dataset,
    priors: &'a PriorTable,
    config: MinerConfig,
    obs: Observations,
    universe: Vec<Selector>,
    covers: Vec<FixedBitSet>,
    costs: Vec<f64>,
}

impl<'a> Miner<'a> {
    pub fn new(dataset: &'a Dataset, priors: &'a PriorTable, config: MinerConfig) -> Result<Miner<'a>> {
        config.validate()?;
        if priors.means().len() != dataset.tree.len() {
            return Err(Error::Consistency(format!(
                "prior table has {} concepts, tree has {}",
                priors.means().len(),
                dataset.tree.len()
            )));
        }
        if config.antichain == AntichainSearch::Exhaustive && dataset.tree.len() > EXHAUSTIVE_LIMIT {
            return Err(Error::Config(format!(
                "exhaustive antichain search is limited to {EXHAUSTIVE_LIMIT} concepts"
            )));
        }
        let universe = generate_selectors(dataset, config.bins)?;
        let covers = universe.iter().map(|s| s.cover(dataset)).collect::<Result<Vec<_>>>()?;
        let costs = dataset.tree.ids().map(|c| concept_cost(&dataset.tree, c)).collect();
        Ok(Miner {
            obs: Observations::new(dataset, config.bucket_cap),
            dataset,
            priors,
            config,
            universe,
            covers,
            costs,
        })
    }

    pub fn config(&self) -> &MinerConfig {
        &self.config
    }

    pub fn universe(&self) -> &[Selector] {
        &self.universe
    }

    pub fn observations(&self) -> &Observations {
        &self.obs
    }

    pub fn initial_model(&self) -> Result<BackgroundModel> {
        let ids = self.dataset.objects.iter().map(|o| o.id.clone()).collect();
        BackgroundModel::new(self.priors, self.config.bucket_cap, ids)
    }

    fn concept_scores(&self, model: &BackgroundModel, norm: usize, extent: &[usize]) -> ConceptScores {
        let params = &self.config.params;
        let values = self
            .dataset
            .tree
            .ids()
            .map(|c| match self.config.measure {
                Measure::Si | Measure::SiNoUpdate => concept_ic(model, &self.obs, extent, c, params).0,
                Measure::Cwracc => concept_deviation(&self.obs, self.priors, extent, c),
                Measure::Kl => concept_kl(model, &self.obs, extent, c),
            })
            .collect();
        ConceptScores {
            values,
            costs: self.costs.clone(),
            subgroup_cost: subgroup_cost(norm, extent.len(), params),
        }
    }

    fn objective(&self, scores: &ConceptScores, value: f64, cost: f64, len: usize) -> f64 {
        match self.config.measure {
            Measure::Si | Measure::SiNoUpdate => {
                value / (scores.subgroup_cost * self.config.params.eta * cost).max(DL_FLOOR)
            }
            Measure::Cwracc => value / (len as f64).powf(self.config.params.theta),
            Measure::Kl => value,
        }
    }

    fn greedy(&self, scores: &ConceptScores) -> Vec<ConceptId> {
        let tree = &self.dataset.tree;
        let mut available: Vec<bool> = scores.values.iter().map(|v| v.is_finite()).collect();
        let mut chosen = Vec::new();
        let (mut value, mut cost) = (0.0, 0.0);
        let mut current = 0.0;
        loop {
            let mut best: Option<(usize, f64)> = None;
            for (i, ok) in available.iter().enumerate() {
                if !ok {
                    continue;
                }
                let s = self.objective(scores, value + scores.values[i], cost + scores.costs[i], chosen.len() + 1);
                let threshold = current + IMPROVEMENT_TOLERANCE * f64::max(1.0, f64::abs(current));
                if s.is_finite() && s > threshold && best.map_or(true, |(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
            let Some((i, s)) = best else { break };
            let id = ConceptId(i as u32);
            chosen.push(id);
            value += scores.values[i];
            cost += scores.costs[i];
            current = s;
            for j in tree.subtree_range(id) {
                available[j as usize] = false;
            }
            let mut up = tree.parent(id);
            while let Some(p) = up {
                available[p.index()] = false;
                up = tree.parent(p);
            }
        }
        chosen.sort();
        chosen
    }

    fn exhaustive(&self, scores: &ConceptScores) -> Vec<ConceptId> {
        let tree = &self.dataset.tree;
        let mut best: (f64, Vec<ConceptId>) = (0.0, Vec::new());
        let mut stack: Vec<ConceptId> = Vec::new();
        // preorder ids: including a concept skips its whole subtree
        fn walk(
            miner: &Miner<'_>,
            scores: &ConceptScores,
            pos: u32,
            acc: (f64, f64),
            stack: &mut Vec<ConceptId>,
            best: &mut (f64, Vec<ConceptId>),
        ) {
            let n = scores.values.len() as u32;
            if pos == n {
                if !stack.is_empty() {
                    let s = miner.objective(scores, acc.0, acc.1, stack.len());
                    if s.is_finite() && s > best.0 {
                        *best = (s, stack.clone());
                    }
                }
                return;
            }
            let id = ConceptId(pos);
            let v = scores.values[pos as usize];
            if v.is_finite() {
                stack.push(id);
                let end = miner.dataset.tree.subtree_range(id).end;
                walk(miner, scores, end, (acc.0 + v, acc.1 + scores.costs[pos as usize]), stack, best);
                stack.pop();
            }
            walk(miner, scores, pos + 1, acc, stack, best);
        }
        walk(self, scores, 0, (0.0, 0.0), &mut stack, &mut best);
        debug_assert!(tree.is_antichain(&best.1));
        best.1
    }

    /// The antichain chosen for `extent` under the configured strategy.
    pub fn antichain_for(&self, model: &BackgroundModel, subgroup: &SubgroupPattern, extent: &[usize]) -> Vec<ConceptId> {
        if extent.is_empty() {
            return Vec::new();
        }
        let scores = self.concept_scores(model, subgroup.norm(), extent);
        match self.config.antichain {
            AntichainSearch::Greedy => self.greedy(&scores),
            AntichainSearch::Exhaustive => self.exhaustive(&scores),
        }
    }

    /// Scores a subgroup together with its best antichain; `None` when no
    /// antichain scores positively.
    pub fn evaluate(&self, model: &BackgroundModel, subgroup: &SubgroupPattern, extent: &[usize]) -> Option<Pattern> {
        let concepts = self.antichain_for(model, subgroup, extent);
        let mut pattern = si_score(model, &self.obs, &self.dataset.tree, subgroup, extent, &concepts, &self.config.params)?;
        pattern.score = match self.config.measure {
            Measure::Si | Measure::SiNoUpdate => pattern.si,
            Measure::Cwracc => crate::measures::cwracc(&self.obs, self.priors, extent, &concepts, self.config.params.theta),
            Measure::Kl => crate::measures::kl_score(model, &self.obs, extent, &concepts),
        };
        Some(pattern)
    }

    fn score_all(&self, model: &BackgroundModel, fresh: Vec<(SubgroupPattern, String, FixedBitSet)>) -> Vec<Candidate> {
        fresh
            .into_par_iter()
            .map(|(subgroup, text, extent)| {
                let objects: Vec<usize> = extent.ones().collect();
                let pattern = self.evaluate(model, &subgroup, &objects);
                Candidate {
                    subgroup,
                    text,
                    extent,
                    pattern,
                }
            })
            .collect()
    }

    /// Level-wise refinement keeping the `width` best candidates per level.
    pub fn beam_search(&self, model: &BackgroundModel) -> BeamOutcome {
        let mut visited: HashSet<String> = HashSet::new();
        let mut outcome = BeamOutcome::default();
        let mut all: Vec<Candidate> = Vec::new();

        let mut fresh = Vec::new();
        for (s, cover) in self.universe.iter().zip(&self.covers) {
            if cover.count_ones(..) == 0 {
                continue;
            }
            let subgroup = SubgroupPattern::default().refined(s).expect("single selector");
            let text = subgroup.to_string();
            if visited.insert(text.clone()) {
                fresh.push((subgroup, text, cover.clone()));
            }
        }
        let mut level = 1;
        loop {
            outcome.evaluated += fresh.len();
            let mut scored = self.score_all(model, fresh);
            scored.sort_by(candidate_order);
            if scored.is_empty() {
                break;
            }
            let keep = scored.len().min(self.config.width);
            let rest = scored.split_off(keep);
            let beam = scored;
            all.extend(rest.into_iter().filter(|c| c.pattern.is_some()));
            if level == self.config.depth {
                all.extend(beam.into_iter().filter(|c| c.pattern.is_some()));
                break;
            }
            fresh = Vec::new();
            for member in &beam {
                for (s, cover) in self.universe.iter().zip(&self.covers) {
                    let Some(subgroup) = member.subgroup.refined(s) else { continue };
                    let text = subgroup.to_string();
                    if visited.contains(&text) {
                        continue;
                    }
                    let mut extent = member.extent.clone();
                    extent.intersect_with(cover);
                    if extent.count_ones(..) == 0 {
                        continue;
                    }
                    visited.insert(text.clone());
                    fresh.push((subgroup, text, extent));
                }
            }
            all.extend(beam.into_iter().filter(|c| c.pattern.is_some()));
            level += 1;
        }
        all.sort_by(candidate_order);
        outcome.pool = all.into_iter().filter_map(|c| c.pattern).collect();
        outcome.best = outcome.pool.first().cloned();
        outcome
    }

    pub fn run(&self) -> Result<MiningResult> {
        self.run_from(self.initial_model()?)
    }

    /// Mines starting from an existing model, e.g. one restored from a
    /// snapshot of an earlier session.
    pub fn run_from(&self, mut model: BackgroundModel) -> Result<MiningResult> {
        let tree = &self.dataset.tree;
        let mut patterns = Vec::new();
        let mut warnings = Vec::new();
        let mut aborted = None;
        match self.config.measure {
            Measure::Si => {
                while patterns.len() < self.config.threshold {
                    // a communicated pair keeps a residual surprise of
                    // -log2(1-alpha) bits per cell, so it is never re-elected
                    let Some(best) = self
                        .beam_search(&model)
                        .pool
                        .into_iter()
                        .find(|p| !patterns.iter().any(|q: &Pattern| same_statement(p, q)))
                    else {
                        break;
                    };
                    log::info!("pattern {}: {} (SI {:.4})", patterns.len() + 1, best.render(tree), best.si);
                    warnings.extend(model.apply_pattern_update(
                        tree,
                        &best.extent,
                        &best.antichain.quantiles(),
                        self.config.params.alpha,
                    )?);
                    let propagated = model.propagate(tree, &best.extent);
                    patterns.push(best);
                    if let Err(e) = propagated {
                        log::error!("stopping early: {e}");
                        aborted = Some(e);
                        break;
                    }
                }
            }
            Measure::SiNoUpdate | Measure::Cwracc | Measure::Kl => {
                let outcome = self.beam_search(&model);
                patterns = outcome.pool.into_iter().take(self.config.threshold).collect();
            }
        }
        Ok(MiningResult {
            patterns,
            warnings,
            aborted,
            model,
        })
    }

    /// The full ranked pool of a single beam pass, as used before
    /// redundancy filtering.
    pub fn ranked_pool(&self, model: &BackgroundModel) -> Vec<Pattern> {
        self.beam_search(model).pool
    }
}

fn same_statement(a: &Pattern, b: &Pattern) -> bool {
    a.subgroup == b.subgroup && a.antichain == b.antichain
}

pub fn sca_miner(dataset: &Dataset, priors: &PriorTable, config: &MinerConfig) -> Result<MiningResult> {
    Miner::new(dataset, priors, config.clone())?.run()
}

/// Jaccard similarity of two ascending index lists.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    common as f64 / (a.len() + b.len() - common) as f64
}

/// Drops every pattern whose extent is at least `threshold`-similar to an
/// earlier kept one.
pub fn jaccard_postprocess(patterns: &[Pattern], threshold: f64) -> Vec<Pattern> {
    let mut kept: Vec<Pattern> = Vec::new();
    for p in patterns {
        if kept.iter().all(|k| jaccard(&k.extent, &p.extent) < threshold) {
            kept.push(p.clone());
        }
    }
    kept
}
