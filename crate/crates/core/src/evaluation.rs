//! Comparison metrics, a synthetic generator with planted anomalies, and
//! the harness that runs every method on the same data.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{ConceptTree, CounterVector};
use crate::ingestion::{AttrValue, Attribute, AttributeKind, DataObject, Dataset, PriorTable};
use crate::language::{Pattern, SelectorForm};
use crate::measures::{contrast, Observations};
use crate::miner::{jaccard, jaccard_postprocess, Measure, Miner, MinerConfig};

/// Mean over patterns of the strongest overlap with any other pattern:
/// extent Jaccard times the share of antichain members that have a
/// comparable member in the other antichain.
pub fn redundancy(patterns: &[Pattern], tree: &ConceptTree) -> f64 {
    if patterns.len() < 2 {
        return 0.0;
    }
    let total: f64 = patterns
        .iter()
        .enumerate()
        .map(|(i, p)| {
            patterns
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| pair_redundancy(p, q, tree))
                .fold(0.0, f64::max)
        })
        .sum();
    total / patterns.len() as f64
}

fn pair_redundancy(p: &Pattern, q: &Pattern, tree: &ConceptTree) -> f64 {
    let j = jaccard(&p.extent, &q.extent);
    if j == 0.0 {
        return 0.0;
    }
    let mine = p.antichain.concepts();
    let theirs = q.antichain.concepts();
    let related = mine
        .iter()
        .filter(|e| theirs.iter().any(|f| tree.comparable(**e, *f)))
        .count();
    let union: BTreeSet<_> = mine.iter().chain(theirs).collect();
    if union.is_empty() {
        return 0.0;
    }
    j * related as f64 / union.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SyntheticAttribute {
    Categorical { name: String, categories: Vec<String> },
    Numeric { name: String, min: f64, max: f64 },
    Boolean { name: String },
}

impl SyntheticAttribute {
    fn schema(&self) -> Attribute {
        let (name, kind) = match self {
            SyntheticAttribute::Categorical { name, .. } => (name, AttributeKind::Categorical),
            SyntheticAttribute::Numeric { name, .. } => (name, AttributeKind::Numeric),
            SyntheticAttribute::Boolean { name } => (name, AttributeKind::Boolean),
        };
        Attribute {
            name: name.clone(),
            kind,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> AttrValue {
        match self {
            SyntheticAttribute::Categorical { categories, .. } => {
                AttrValue::Category(categories[rng.gen_range(0..categories.len())].clone())
            }
            SyntheticAttribute::Numeric { min, max, .. } => {
                AttrValue::Number((rng.gen_range(*min..=*max) * 100.0).round() / 100.0)
            }
            SyntheticAttribute::Boolean { .. } => AttrValue::Flag(rng.gen_bool(0.5)),
        }
    }
}

/// A literal of a planted description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedLiteral {
    pub attribute: String,
    pub form: SelectorForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedPattern {
    pub literals: Vec<PlantedLiteral>,
    /// Concepts whose subtree leaves are inflated; must be incomparable.
    pub targets: Vec<String>,
    pub inflation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub objects: usize,
    pub attributes: Vec<SyntheticAttribute>,
    /// Children per node at each level below the root.
    pub branching: Vec<usize>,
    /// Leaf means are drawn log-uniformly from this range.
    pub leaf_mean_range: (f64, f64),
    /// Leaves listed here get this mean instead of a random one.
    #[serde(default)]
    pub fixed_means: BTreeMap<String, f64>,
    pub planted: Vec<PlantedPattern>,
    /// Every object draws one load factor uniformly from
    /// `[1-noise, 1+noise]` that scales all of its leaf draws.
    pub noise: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub description: String,
    pub targets: Vec<String>,
    pub extent: Vec<String>,
}

fn level_name(depth: usize, index: usize, leaf: bool) -> String {
    if leaf {
        format!("C{index}")
    } else {
        format!("p{}{index}", (b'a' + depth as u8) as char)
    }
}

impl SyntheticSpec {
    fn leaf_names(&self) -> Vec<String> {
        let mut names = vec![String::new()];
        let levels = self.branching.len();
        for (depth, b) in self.branching.iter().enumerate() {
            let leaf = depth + 1 == levels;
            names = names
                .iter()
                .flat_map(|prefix| {
                    (0..*b).map(move |i| {
                        let seg = level_name(depth, i, leaf);
                        if prefix.is_empty() {
                            seg
                        } else {
                            format!("{prefix}.{seg}")
                        }
                    })
                })
                .collect();
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects == 0 || self.branching.is_empty() || self.branching.contains(&0) {
            return Err(Error::Config("synthetic spec needs objects and a non-empty tree shape".into()));
        }
        if self.branching.len() > 20 {
            return Err(Error::Config("synthetic tree is too deep".into()));
        }
        let (lo, hi) = self.leaf_mean_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config("leaf mean range must be positive and ordered".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config("noise must lie in [0, 1]".into()));
        }
        for p in &self.planted {
            if !(p.inflation > 1.0) {
                return Err(Error::Config(format!("inflation {} must exceed 1", p.inflation)));
            }
            if p.targets.is_empty() {
                return Err(Error::Config("planted pattern without targets".into()));
            }
        }
        Ok(())
    }

    /// About 300 objects over a 206-concept tree with three overlapping
    /// anomalies on small packages next to large, stable ones.
    pub fn comparison_preset(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            objects: 300,
            attributes: default_attributes(),
            branching: vec![5, 5, 7],
            leaf_mean_range: (64.0, 65536.0),
            fixed_means: BTreeMap::new(),
            planted: vec![
                planted(&[("softType", SelectorForm::Equals("Sales".into()))], &["pa1.pb2"], 4.0),
                planted(
                    &[("softVersion", SelectorForm::Equals("V_3".into()))],
                    &["pa3.pb0.C4", "pa0.pb4"],
                    4.0,
                ),
                planted(
                    &[("softType", SelectorForm::Equals("Sales".into())), ("weekDay", SelectorForm::IsTrue)],
                    &["pa2.pb1"],
                    4.0,
                ),
            ],
            noise: 1.0,
            seed,
        }
    }

    /// Three anomalies on disjoint subgroups, inflation 4.
    pub fn disjoint_preset(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            objects: 240,
            attributes: default_attributes(),
            branching: vec![4, 4, 5],
            leaf_mean_range: (64.0, 16384.0),
            fixed_means: BTreeMap::new(),
            planted: vec![
                planted(&[("softType", SelectorForm::Equals("Sales".into()))], &["pa0.pb1"], 4.0),
                planted(&[("softType", SelectorForm::Equals("Factory".into()))], &["pa2.pb3.C0", "pa3.pb0"], 4.0),
                planted(&[("softType", SelectorForm::Equals("EDI".into()))], &["pa1.pb2"], 4.0),
            ],
            noise: 0.0,
            seed,
        }
    }
}

fn planted(literals: &[(&str, SelectorForm)], targets: &[&str], inflation: f64) -> PlantedPattern {
    PlantedPattern {
        literals: literals
            .iter()
            .map(|(a, f)| PlantedLiteral {
                attribute: a.to_string(),
                form: f.clone(),
            })
            .collect(),
        targets: targets.iter().map(|t| t.to_string()).collect(),
        inflation,
    }
}

fn default_attributes() -> Vec<SyntheticAttribute> {
    let cats = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
    vec![
        SyntheticAttribute::Categorical {
            name: "softType".into(),
            categories: cats(&["Sales", "Factory", "EDI", "Manager", "Logistics"]),
        },
        SyntheticAttribute::Categorical {
            name: "softVersion".into(),
            categories: cats(&["V_1", "V_2", "V_3", "V_4"]),
        },
        SyntheticAttribute::Numeric {
            name: "Xmx".into(),
            min: 1.0,
            max: 16.0,
        },
        SyntheticAttribute::Boolean { name: "weekDay".into() },
    ]
}

/// Dataset, priors and ground truth drawn deterministically from `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, PriorTable, Vec<PlantedTruth>)> {
    spec.validate()?;
    let leaves = spec.leaf_names();
    let tree = ConceptTree::build(&leaves)?;
    let schema: Vec<Attribute> = spec.attributes.iter().map(SyntheticAttribute::schema).collect();
    let column = |name: &str| {
        schema
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    };

    // resolve planted patterns before drawing anything
    let mut plans = Vec::new();
    for p in &spec.planted {
        let literals = p
            .literals
            .iter()
            .map(|l| Ok((column(&l.attribute)?, l.form.clone())))
            .collect::<Result<Vec<_>>>()?;
        let targets = p.targets.iter().map(|t| tree.require(t)).collect::<Result<Vec<_>>>()?;
        let mut sorted = targets.clone();
        sorted.sort();
        if !tree.is_antichain(&sorted) {
            return Err(Error::Config(format!("planted targets {:?} are not an antichain", p.targets)));
        }
        let inflated: BTreeSet<_> = targets
            .iter()
            .flat_map(|t| tree.subtree_range(*t))
            .collect();
        plans.push((literals, inflated));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.leaf_mean_range;
    let mut leaf_means = Vec::with_capacity(leaves.len());
    for name in &leaves {
        let drawn = (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp().round();
        leaf_means.push(spec.fixed_means.get(name).copied().unwrap_or(drawn));
    }
    let leaf_ids: Vec<_> = leaves.iter().map(|n| tree.require(n)).collect::<Result<_>>()?;
    let samplers = leaf_means
        .iter()
        .map(|m| Geometric::new(1.0 / (1.0 + m)).map_err(|e| Error::Generation(e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let width = spec.objects.to_string().len();
    let mut objects = Vec::with_capacity(spec.objects);
    let mut members: Vec<Vec<String>> = vec![Vec::new(); plans.len()];
    for i in 0..spec.objects {
        let id = format!("s{:0width$}", i + 1);
        let values: Vec<Option<AttrValue>> = spec.attributes.iter().map(|a| Some(a.draw(&mut rng))).collect();
        let mut factors = vec![1.0; tree.len()];
        for (k, (literals, inflated)) in plans.iter().enumerate() {
            if literals.iter().all(|(col, form)| form.matches(values[*col].as_ref())) {
                members[k].push(id.clone());
                for c in inflated {
                    factors[*c as usize] *= spec.planted[k].inflation;
                }
            }
        }
        let load = if spec.noise > 0.0 {
            rng.gen_range(1.0 - spec.noise..=1.0 + spec.noise)
        } else {
            1.0
        };
        let mut dense = vec![0u64; tree.len()];
        for (l, sampler) in samplers.iter().enumerate() {
            let draw = sampler.sample(&mut rng) as f64;
            dense[leaf_ids[l].index()] = (draw * load * factors[leaf_ids[l].index()]).round() as u64;
        }
        let counters = CounterVector::from_self_contributions(&tree, dense);
        objects.push(DataObject { id, values, counters });
    }

    let mut means = vec![0.0; tree.len()];
    for (l, m) in leaf_ids.iter().zip(&leaf_means) {
        let mut at = Some(*l);
        while let Some(c) = at {
            means[c.index()] += m;
            at = tree.parent(c);
        }
    }
    let priors = PriorTable::from_means(means.into_iter().map(|m| m.max(crate::ingestion::PRIOR_FLOOR)).collect())?;

    let mut truth = Vec::with_capacity(plans.len());
    for (k, p) in spec.planted.iter().enumerate() {
        let description = p
            .literals
            .iter()
            .map(|l| crate::language::Selector::new(&l.attribute, l.form.clone()).to_string())
            .collect::<Vec<_>>()
            .join(" ∧ ");
        if members[k].is_empty() {
            return Err(Error::Generation(format!("planted description ({description}) covers no object")));
        }
        truth.push(PlantedTruth {
            description: format!("({description})"),
            targets: p.targets.clone(),
            extent: std::mem::take(&mut members[k]),
        });
    }
    Ok((Dataset { schema, objects, tree }, priors, truth))
}

/// Whether `pattern` recovers `truth`: extent Jaccard at least `min_jaccard`
/// and every antichain member comparable to some planted target.
pub fn recovers(pattern: &Pattern, truth: &PlantedTruth, dataset: &Dataset, min_jaccard: f64) -> Result<bool> {
    let mut planted: Vec<usize> = truth
        .extent
        .iter()
        .map(|id| {
            dataset
                .object_index(id)
                .ok_or_else(|| Error::Consistency(format!("unknown object {id:?}")))
        })
        .collect::<Result<_>>()?;
    planted.sort_unstable();
    let targets = truth
        .targets
        .iter()
        .map(|t| dataset.tree.require(t))
        .collect::<Result<Vec<_>>>()?;
    let related = pattern
        .antichain
        .concepts()
        .iter()
        .all(|c| targets.iter().any(|t| dataset.tree.comparable(*c, *t)));
    Ok(!pattern.antichain.is_empty() && related && jaccard(&pattern.extent, &planted) >= min_jaccard)
}

pub const METHODS: [&str; 6] = ["SI", "SI no update", "CWRAcc", "CWRAcc+PP", "KL", "KL+PP"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatternRow {
    pub rank: usize,
    pub description: String,
    pub antichain: String,
    pub extent_size: usize,
    pub score: f64,
    pub si: f64,
    pub contrast: f64,
}

#[derive(Clone, Debug)]
pub struct MethodResult {
    pub method: String,
    pub patterns: Vec<Pattern>,
    pub rows: Vec<PatternRow>,
    pub mean_contrast: f64,
    pub redundancy: f64,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub methods: Vec<MethodResult>,
}

fn summarize(method: &str, patterns: Vec<Pattern>, dataset: &Dataset, obs: &Observations, priors: &PriorTable) -> MethodResult {
    let rows: Vec<PatternRow> = patterns
        .iter()
        .enumerate()
        .map(|(i, p)| PatternRow {
            rank: i + 1,
            description: p.subgroup.to_string(),
            antichain: p.antichain.render(&dataset.tree),
            extent_size: p.extent_size(),
            score: p.score,
            si: p.si,
            contrast: contrast(obs, priors, p),
        })
        .collect();
    let mean_contrast = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.contrast).sum::<f64>() / rows.len() as f64
    };
    MethodResult {
        method: method.to_string(),
        redundancy: redundancy(&patterns, &dataset.tree),
        patterns,
        rows,
        mean_contrast,
    }
}

/// Mines the top `k` patterns with every method under the shared search
/// settings of `base`.
pub fn run_comparison(dataset: &Dataset, priors: &PriorTable, base: &MinerConfig, k: usize) -> Result<ComparisonReport> {
    let with = |measure| MinerConfig {
        measure,
        threshold: k,
        ..base.clone()
    };
    let mut methods = Vec::new();

    let si = Miner::new(dataset, priors, with(Measure::Si))?;
    let obs = si.observations().clone();
    let result = si.run()?;
    if let Some(e) = result.aborted {
        return Err(e);
    }
    methods.push(summarize(METHODS[0], result.patterns, dataset, &obs, priors));

    let mut pools = Vec::new();
    for measure in [Measure::SiNoUpdate, Measure::Cwracc, Measure::Kl] {
        let miner = Miner::new(dataset, priors, with(measure))?;
        pools.push(miner.ranked_pool(&miner.initial_model()?));
    }
    let top = |pool: &[Pattern]| pool.iter().take(k).cloned().collect::<Vec<_>>();
    let filtered = |pool: &[Pattern]| {
        jaccard_postprocess(pool, base.jaccard_threshold)
            .into_iter()
            .take(k)
            .collect::<Vec<_>>()
    };
    methods.push(summarize(METHODS[1], top(&pools[0]), dataset, &obs, priors));
    methods.push(summarize(METHODS[2], top(&pools[1]), dataset, &obs, priors));
    methods.push(summarize(METHODS[3], filtered(&pools[1]), dataset, &obs, priors));
    methods.push(summarize(METHODS[4], top(&pools[2]), dataset, &obs, priors));
    methods.push(summarize(METHODS[5], filtered(&pools[2]), dataset, &obs, priors));
    Ok(ComparisonReport { methods })
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

impl ComparisonReport {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn patterns_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "rank", "description", "antichain", "extent_size", "score", "si", "contrast"])?;
        for m in &self.methods {
            for r in &m.rows {
                w.write_record([
                    m.method.clone(),
                    r.rank.to_string(),
                    r.description.clone(),
                    r.antichain.clone(),
                    r.extent_size.to_string(),
                    num(r.score),
                    num(r.si),
                    num(r.contrast),
                ])?;
            }
        }
        finish(w)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "patterns", "mean_contrast", "redundancy"])?;
        for m in &self.methods {
            w.write_record([
                m.method.clone(),
                m.rows.len().to_string(),
                num(m.mean_contrast),
                num(m.redundancy),
            ])?;
        }
        finish(w)
    }

    pub fn markdown(&self) -> String {
        let mut out = String::from("| method | patterns | mean contrast | redundancy |\n|---|---:|---:|---:|\n");
        for m in &self.methods {
            out.push_str(&format!(
                "| {} | {} | {:.4} | {:.4} |\n",
                m.method,
                m.rows.len(),
                m.mean_contrast,
                m.redundancy
            ));
        }
        out
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Consistency(e.to_string()))
}
