//! Subgroup descriptions over descriptive attributes and the antichains
//! paired with them.

use std::cmp::Ordering;
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Bucket, ConceptId, ConceptTree};
use crate::ingestion::{AttrValue, Attribute, AttributeKind, Dataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", content = "value", rename_all = "camelCase")]
pub enum SelectorForm {
    Equals(String),
    IsTrue,
    IsFalse,
    GreaterThan(f64),
    AtMost(f64),
}

impl SelectorForm {
    fn rank(&self) -> u8 {
        match self {
            SelectorForm::Equals(_) => 0,
            SelectorForm::IsTrue => 1,
            SelectorForm::IsFalse => 2,
            SelectorForm::GreaterThan(_) => 3,
            SelectorForm::AtMost(_) => 4,
        }
    }

    fn fits(&self, kind: AttributeKind) -> bool {
        matches!(
            (self, kind),
            (SelectorForm::Equals(_), AttributeKind::Categorical)
                | (SelectorForm::IsTrue | SelectorForm::IsFalse, AttributeKind::Boolean)
                | (SelectorForm::GreaterThan(_) | SelectorForm::AtMost(_), AttributeKind::Numeric)
        )
    }

    /// Whether a second restriction of this form on the same attribute is
    /// ruled out.
    fn clashes_with(&self, other: &SelectorForm) -> bool {
        use SelectorForm::*;
        match (self, other) {
            (Equals(_), Equals(_)) => true,
            (IsTrue | IsFalse, IsTrue | IsFalse) => true,
            (GreaterThan(_), GreaterThan(_)) => true,
            (AtMost(_), AtMost(_)) => true,
            _ => false,
        }
    }

    pub fn matches(&self, value: Option<&AttrValue>) -> bool {
        match (self, value) {
            (SelectorForm::Equals(c), Some(AttrValue::Category(v))) => c == v,
            (SelectorForm::IsTrue, Some(AttrValue::Flag(b))) => *b,
            (SelectorForm::IsFalse, Some(AttrValue::Flag(b))) => !*b,
            (SelectorForm::GreaterThan(t), Some(AttrValue::Number(x))) => x > t,
            (SelectorForm::AtMost(t), Some(AttrValue::Number(x))) => x <= t,
            _ => false,
        }
    }

    /// Whether every value this form admits is also admitted by `self`
    /// being implied by `narrower`.
    fn contains(&self, narrower: &SelectorForm) -> bool {
        use SelectorForm::*;
        match (self, narrower) {
            (Equals(a), Equals(b)) => a == b,
            (IsTrue, IsTrue) | (IsFalse, IsFalse) => true,
            (AtMost(a), AtMost(b)) => b <= a,
            (GreaterThan(a), GreaterThan(b)) => b >= a,
            _ => false,
        }
    }
}

/// One restriction on one attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selector {
    pub attribute: String,
    pub form: SelectorForm,
}

impl Selector {
    pub fn new(attribute: impl Into<String>, form: SelectorForm) -> Selector {
        Selector {
            attribute: attribute.into(),
            form,
        }
    }

    pub fn equals(attribute: &str, value: &str) -> Selector {
        Selector::new(attribute, SelectorForm::Equals(value.into()))
    }

    pub fn at_most(attribute: &str, threshold: f64) -> Selector {
        Selector::new(attribute, SelectorForm::AtMost(threshold))
    }

    pub fn greater_than(attribute: &str, threshold: f64) -> Selector {
        Selector::new(attribute, SelectorForm::GreaterThan(threshold))
    }

    pub fn flag(attribute: &str, value: bool) -> Selector {
        Selector::new(attribute, if value { SelectorForm::IsTrue } else { SelectorForm::IsFalse })
    }

    fn canonical_cmp(&self, other: &Selector) -> Ordering {
        self.attribute
            .cmp(&other.attribute)
            .then(self.form.rank().cmp(&other.form.rank()))
            .then_with(|| match (&self.form, &other.form) {
                (SelectorForm::Equals(a), SelectorForm::Equals(b)) => a.cmp(b),
                (SelectorForm::AtMost(a), SelectorForm::AtMost(b))
                | (SelectorForm::GreaterThan(a), SelectorForm::GreaterThan(b)) => a.total_cmp(b),
                _ => Ordering::Equal,
            })
    }

    fn check(&self, schema: &[Attribute]) -> Result<usize> {
        let index = schema
            .iter()
            .position(|a| a.name == self.attribute)
            .ok_or_else(|| Error::UnknownAttribute(self.attribute.clone()))?;
        if !self.form.fits(schema[index].kind) {
            return Err(Error::Config(format!(
                "selector {self} does not apply to {:?} attribute",
                schema[index].kind
            )));
        }
        Ok(index)
    }

    /// Objects satisfying the selector; missing values never match.
    pub fn cover(&self, dataset: &Dataset) -> Result<FixedBitSet> {
        let index = self.check(&dataset.schema)?;
        let mut bits = FixedBitSet::with_capacity(dataset.len());
        for (i, o) in dataset.objects.iter().enumerate() {
            if self.form.matches(o.values[index].as_ref()) {
                bits.insert(i);
            }
        }
        Ok(bits)
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = &self.attribute;
        match &self.form {
            SelectorForm::Equals(v) => write!(f, "{a}={v}"),
            SelectorForm::IsTrue => write!(f, "{a}=true"),
            SelectorForm::IsFalse => write!(f, "{a}=false"),
            SelectorForm::GreaterThan(t) => write!(f, "{a}>{t}"),
            SelectorForm::AtMost(t) => write!(f, "{a}≤{t}"),
        }
    }
}

/// A conjunction of selectors kept in canonical order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SubgroupPattern {
    selectors: Vec<Selector>,
}

impl SubgroupPattern {
    pub fn new(selectors: Vec<Selector>) -> Result<SubgroupPattern> {
        let mut pattern = SubgroupPattern::default();
        for s in selectors {
            pattern = pattern
                .refined(&s)
                .ok_or_else(|| Error::Config(format!("selector {s} contradicts the description")))?;
        }
        Ok(pattern)
    }

    pub fn selectors(&self) -> &[Selector] {
        &self.selectors
    }

    /// `‖P_s‖`: the number of listed selectors.
    pub fn norm(&self) -> usize {
        self.selectors.len()
    }

    /// Adds a selector, or `None` if it repeats or contradicts an existing
    /// restriction on the same attribute.
    pub fn refined(&self, selector: &Selector) -> Option<SubgroupPattern> {
        if self
            .selectors
            .iter()
            .any(|s| s.attribute == selector.attribute && s.form.clashes_with(&selector.form))
        {
            return None;
        }
        let mut selectors = self.selectors.clone();
        let at = selectors
            .binary_search_by(|s| s.canonical_cmp(selector))
            .unwrap_or_else(|e| e);
        selectors.insert(at, selector.clone());
        Some(SubgroupPattern { selectors })
    }

    /// `self ⊑ other`: every restriction of `self` is implied by one of `other`.
    pub fn refines_to(&self, other: &SubgroupPattern) -> bool {
        self.selectors.iter().all(|s| {
            other
                .selectors
                .iter()
                .any(|o| o.attribute == s.attribute && s.form.contains(&o.form))
        })
    }

    pub fn covers(&self, dataset: &Dataset, object: usize) -> Result<bool> {
        for s in &self.selectors {
            let index = s.check(&dataset.schema)?;
            if !s.form.matches(dataset.objects[object].values[index].as_ref()) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn extent_bits(&self, dataset: &Dataset) -> Result<FixedBitSet> {
        let mut bits = FixedBitSet::with_capacity(dataset.len());
        bits.insert_range(..);
        for s in &self.selectors {
            bits.intersect_with(&s.cover(dataset)?);
        }
        Ok(bits)
    }

    /// `ext(P_s)` as ascending object indices.
    pub fn extent(&self, dataset: &Dataset) -> Result<Vec<usize>> {
        Ok(self.extent_bits(dataset)?.ones().collect())
    }
}

impl fmt::Display for SubgroupPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, s) in self.selectors.iter().enumerate() {
            if i > 0 {
                f.write_str(" ∧ ")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str(")")
    }
}

/// Whether `p ⊑ q`.
pub fn refines(p: &SubgroupPattern, q: &SubgroupPattern) -> bool {
    p.refines_to(q)
}

/// Midpoint rounded to 12 significant digits when that still separates `lo`
/// from `hi`, so `4.3` does not print as `4.300000000000001`.
fn tidy_midpoint(lo: f64, hi: f64) -> f64 {
    let mid = (lo + hi) / 2.0;
    match format!("{mid:.11e}").parse::<f64>() {
        Ok(r) if r >= lo && r < hi => r,
        _ => mid,
    }
}

/// Equal-frequency cut points between sorted values, skipping cuts that
/// would not split the observed range.
fn cut_points(sorted: &[f64], bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let max = sorted[n - 1];
    let mut cuts: Vec<f64> = Vec::new();
    for k in 1..bins {
        let i = ((k * n) as f64 / bins as f64).round() as usize;
        let i = i.clamp(1, n - 1);
        let cut = tidy_midpoint(sorted[i - 1], sorted[i]);
        if cut < max && cuts.last().map_or(true, |c| *c < cut) {
            cuts.push(cut);
        }
    }
    cuts
}

/// The selector universe: one equality per observed category, both flag
/// values, and threshold pairs at equal-frequency cuts of numeric values.
pub fn generate_selectors(dataset: &Dataset, bins: usize) -> Result<Vec<Selector>> {
    if bins < 2 {
        return Err(Error::Config(format!("bins must be at least 2, got {bins}")));
    }
    let mut out = Vec::new();
    for (index, attr) in dataset.schema.iter().enumerate() {
        let present = dataset.objects.iter().filter_map(|o| o.values[index].as_ref());
        let before = out.len();
        match attr.kind {
            AttributeKind::Categorical => {
                let mut cats: Vec<&str> = present
                    .filter_map(|v| match v {
                        AttrValue::Category(c) => Some(c.as_str()),
                        _ => None,
                    })
                    .collect();
                cats.sort_unstable();
                cats.dedup();
                if cats.len() > 1 {
                    out.extend(cats.iter().map(|c| Selector::equals(&attr.name, c)));
                }
            }
            AttributeKind::Boolean => {
                let flags: Vec<bool> = present
                    .filter_map(|v| match v {
                        AttrValue::Flag(b) => Some(*b),
                        _ => None,
                    })
                    .collect();
                if flags.contains(&true) && flags.contains(&false) {
                    out.push(Selector::flag(&attr.name, true));
                    out.push(Selector::flag(&attr.name, false));
                }
            }
            AttributeKind::Numeric => {
                let mut values: Vec<f64> = present
                    .filter_map(|v| match v {
                        AttrValue::Number(x) => Some(*x),
                        _ => None,
                    })
                    .collect();
                values.sort_by(f64::total_cmp);
                values.dedup();
                if values.len() > 1 {
                    let mut all: Vec<f64> = dataset
                        .objects
                        .iter()
                        .filter_map(|o| match o.values[index] {
                            Some(AttrValue::Number(x)) => Some(x),
                            _ => None,
                        })
                        .collect();
                    all.sort_by(f64::total_cmp);
                    for cut in cut_points(&all, bins) {
                        out.push(Selector::at_most(&attr.name, cut));
                        out.push(Selector::greater_than(&attr.name, cut));
                    }
                }
            }
        }
        if out.len() == before {
            log::warn!("attribute {:?} has a single observed value; no selectors", attr.name);
        }
    }
    Ok(out)
}

/// `δ(O)`: the most restrictive description over `universe` covering
/// every object in `objects`.
pub fn closure_delta(dataset: &Dataset, universe: &[Selector], objects: &[usize]) -> Result<SubgroupPattern> {
    if objects.is_empty() {
        return Err(Error::Config("closure of an empty object set".into()));
    }
    let mut selectors = Vec::new();
    for (index, attr) in dataset.schema.iter().enumerate() {
        let values: Option<Vec<&AttrValue>> = objects
            .iter()
            .map(|o| dataset.objects[*o].values[index].as_ref())
            .collect();
        let Some(values) = values else { continue };
        let in_universe = |form: &SelectorForm| universe.iter().any(|s| s.attribute == attr.name && &s.form == form);
        match attr.kind {
            AttributeKind::Categorical | AttributeKind::Boolean => {
                let form = match values[0] {
                    AttrValue::Category(c) => SelectorForm::Equals(c.clone()),
                    AttrValue::Flag(true) => SelectorForm::IsTrue,
                    AttrValue::Flag(false) => SelectorForm::IsFalse,
                    AttrValue::Number(_) => continue,
                };
                if values.iter().all(|v| form.matches(Some(v))) && in_universe(&form) {
                    selectors.push(Selector::new(&attr.name, form));
                }
            }
            AttributeKind::Numeric => {
                let nums: Vec<f64> = values
                    .iter()
                    .filter_map(|v| match v {
                        AttrValue::Number(x) => Some(*x),
                        _ => None,
                    })
                    .collect();
                let lo = nums.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = nums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut lower: Option<f64> = None;
                let mut upper: Option<f64> = None;
                for s in universe.iter().filter(|s| s.attribute == attr.name) {
                    match s.form {
                        SelectorForm::GreaterThan(c) if c < lo => lower = Some(lower.map_or(c, |l| l.max(c))),
                        SelectorForm::AtMost(c) if c >= hi => upper = Some(upper.map_or(c, |u| u.min(c))),
                        _ => {}
                    }
                }
                if let Some(c) = lower {
                    selectors.push(Selector::greater_than(&attr.name, c));
                }
                if let Some(c) = upper {
                    selectors.push(Selector::at_most(&attr.name, c));
                }
            }
        }
    }
    SubgroupPattern::new(selectors)
}

/// Pairwise incomparable concepts with the scale bucket communicated for each.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Antichain {
    concepts: Vec<ConceptId>,
    buckets: Vec<Bucket>,
}

impl Antichain {
    pub fn new(tree: &ConceptTree, mut members: Vec<(ConceptId, Bucket)>) -> Result<Antichain> {
        members.sort_by_key(|m| m.0);
        let concepts: Vec<ConceptId> = members.iter().map(|m| m.0).collect();
        if !tree.is_antichain(&concepts) || concepts.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Consistency("concepts do not form an antichain".into()));
        }
        Ok(Antichain {
            buckets: members.iter().map(|m| m.1).collect(),
            concepts,
        })
    }

    pub fn concepts(&self) -> &[ConceptId] {
        &self.concepts
    }

    pub fn quantiles(&self) -> Vec<(ConceptId, Bucket)> {
        self.concepts.iter().copied().zip(self.buckets.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn render(&self, tree: &ConceptTree) -> String {
        let members: Vec<String> = self
            .quantiles()
            .iter()
            .map(|(c, b)| format!("{}@{b}", tree.name(*c)))
            .collect();
        format!("{{{}}}", members.join(", "))
    }
}

/// A scored (subgroup, antichain) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub subgroup: SubgroupPattern,
    pub antichain: Antichain,
    /// Covered objects, ascending indices into the dataset.
    pub extent: Vec<usize>,
    pub ic: f64,
    pub dl: f64,
    pub si: f64,
    /// Value of the measure the pattern was ranked by.
    pub score: f64,
}

impl Pattern {
    pub fn extent_size(&self) -> usize {
        self.extent.len()
    }

    /// `(attr=val ∧ …) ⇒ {concept@scale, …}`
    pub fn render(&self, tree: &ConceptTree) -> String {
        format!("{} ⇒ {}", self.subgroup, self.antichain.render(tree))
    }
}
