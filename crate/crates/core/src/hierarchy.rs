//! The global concept tree: packages as internal nodes, classes as leaves,
//! hung below a synthetic root that stands for the whole heap.
//!
//! Ids are assigned in depth-first preorder over lexicographically sorted
//! segments, so every subtree occupies a contiguous id range. Ancestor tests
//! reduce to a range check.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved name of the synthetic root.
pub const ROOT_NAME: &str = "<heap>";
/// Reserved package holding JVM array classes such as `[C`.
pub const ARRAYS_PACKAGE: &str = "<arrays>";

/// Scale bucket `⌊log₂ x⌋`, with `-1` for an empty counter.
pub type Bucket = i32;

/// Bucket of the empty counter, ordered below every other bucket.
pub const EMPTY_BUCKET: Bucket = -1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConceptId(pub u32);

impl ConceptId {
    pub const ROOT: ConceptId = ConceptId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug)]
pub struct Concept {
    pub name: String,
    pub parent: Option<ConceptId>,
    pub children: Vec<ConceptId>,
}

#[derive(Clone, Debug)]
pub struct ConceptTree {
    concepts: Vec<Concept>,
    // |⇑{e}|, root counts 1
    depth: Vec<u32>,
    // exclusive end of the preorder range covered by each subtree
    subtree_end: Vec<u32>,
    by_name: HashMap<String, ConceptId>,
}

/// Splits a qualified name into its tree segments.
///
/// Array classes live under [`ARRAYS_PACKAGE`] and keep their JVM encoding
/// (which may itself contain dots) as a single leaf segment.
pub fn split_name(name: &str) -> Result<Vec<&str>> {
    if name.is_empty() || name == ROOT_NAME {
        return Err(Error::InvalidName(name.to_string()));
    }
    if name == ARRAYS_PACKAGE {
        return Ok(vec![ARRAYS_PACKAGE]);
    }
    if let Some(rest) = name.strip_prefix(ARRAYS_PACKAGE) {
        return match rest.strip_prefix('.') {
            Some(leaf) if !leaf.is_empty() => Ok(vec![ARRAYS_PACKAGE, leaf]),
            _ => Err(Error::InvalidName(name.to_string())),
        };
    }
    let segments: Vec<&str> = name.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidName(name.to_string()));
    }
    Ok(segments)
}

/// Maps a class name as printed by `jmap` to its concept name.
pub fn concept_name_for_class(class_name: &str) -> String {
    if class_name.starts_with('[') {
        format!("{ARRAYS_PACKAGE}.{class_name}")
    } else {
        class_name.to_string()
    }
}

#[derive(Default)]
struct TrieNode {
    children: BTreeMap<String, TrieNode>,
}

impl ConceptTree {
    /// Builds the tree holding every distinct dotted prefix of `names`.
    pub fn build<I, S>(names: I) -> Result<ConceptTree>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut trie = TrieNode::default();
        for name in names {
            let mut node = &mut trie;
            for segment in split_name(name.as_ref())? {
                node = node.children.entry(segment.to_string()).or_default();
            }
        }

        let mut tree = ConceptTree {
            concepts: Vec::new(),
            depth: Vec::new(),
            subtree_end: Vec::new(),
            by_name: HashMap::new(),
        };
        tree.push(ROOT_NAME.to_string(), None);
        tree.insert_children(&trie, ConceptId::ROOT);
        Ok(tree)
    }

    fn push(&mut self, name: String, parent: Option<ConceptId>) -> ConceptId {
        let id = ConceptId(self.concepts.len() as u32);
        let depth = parent.map_or(1, |p| self.depth[p.index()] + 1);
        if let Some(p) = parent {
            self.concepts[p.index()].children.push(id);
        }
        self.by_name.insert(name.clone(), id);
        self.concepts.push(Concept {
            name,
            parent,
            children: Vec::new(),
        });
        self.depth.push(depth);
        self.subtree_end.push(id.0 + 1);
        id
    }

    fn insert_children(&mut self, node: &TrieNode, parent: ConceptId) {
        for (segment, child) in &node.children {
            let name = if parent == ConceptId::ROOT {
                segment.clone()
            } else {
                format!("{}.{}", self.concepts[parent.index()].name, segment)
            };
            let id = self.push(name, Some(parent));
            self.insert_children(child, id);
            self.subtree_end[id.index()] = self.concepts.len() as u32;
        }
        if parent == ConceptId::ROOT {
            self.subtree_end[0] = self.concepts.len() as u32;
        }
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.len() <= 1
    }

    pub fn root(&self) -> ConceptId {
        ConceptId::ROOT
    }

    pub fn ids(&self) -> impl DoubleEndedIterator<Item = ConceptId> + ExactSizeIterator {
        (0..self.concepts.len() as u32).map(ConceptId)
    }

    pub fn concept(&self, id: ConceptId) -> &Concept {
        &self.concepts[id.index()]
    }

    pub fn name(&self, id: ConceptId) -> &str {
        &self.concepts[id.index()].name
    }

    pub fn parent(&self, id: ConceptId) -> Option<ConceptId> {
        self.concepts[id.index()].parent
    }

    pub fn children(&self, id: ConceptId) -> &[ConceptId] {
        &self.concepts[id.index()].children
    }

    pub fn is_leaf(&self, id: ConceptId) -> bool {
        self.concepts[id.index()].children.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ConceptId> {
        self.by_name.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<ConceptId> {
        self.id(name)
            .ok_or_else(|| Error::UnknownConcept(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.concepts.iter().map(|c| c.name.as_str())
    }

    /// `a ≤ b`: `a` lies on the root path of `b` (or equals it).
    #[inline]
    pub fn is_ancestor_or_self(&self, a: ConceptId, b: ConceptId) -> bool {
        a.0 <= b.0 && b.0 < self.subtree_end[a.index()]
    }

    #[inline]
    pub fn comparable(&self, a: ConceptId, b: ConceptId) -> bool {
        self.is_ancestor_or_self(a, b) || self.is_ancestor_or_self(b, a)
    }

    /// Preorder id range `[id, end)` spanned by the subtree of `id`.
    pub fn subtree_range(&self, id: ConceptId) -> std::ops::Range<u32> {
        id.0..self.subtree_end[id.index()]
    }

    /// `|⇑{e}|`, the number of concepts on the root path including `e`.
    pub fn depth_count(&self, id: ConceptId) -> usize {
        self.depth[id.index()] as usize
    }

    /// `⇑S`: every member together with all of its ancestors.
    pub fn predecessors<I>(&self, set: I) -> BTreeSet<ConceptId>
    where
        I: IntoIterator<Item = ConceptId>,
    {
        let mut out = BTreeSet::new();
        for start in set {
            let mut cursor = Some(start);
            while let Some(id) = cursor {
                if !out.insert(id) {
                    break;
                }
                cursor = self.parent(id);
            }
        }
        out
    }

    /// `⇓S`: every member together with all of its descendants.
    pub fn successors<I>(&self, set: I) -> BTreeSet<ConceptId>
    where
        I: IntoIterator<Item = ConceptId>,
    {
        let mut out = BTreeSet::new();
        for start in set {
            out.extend(self.subtree_range(start).map(ConceptId));
        }
        out
    }

    pub fn is_antichain(&self, set: &[ConceptId]) -> bool {
        let mut sorted: Vec<ConceptId> = set.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        // In preorder, an ancestor is always immediately followed by a
        // member of its own subtree if it has any.
        sorted
            .windows(2)
            .all(|w| !self.is_ancestor_or_self(w[0], w[1]))
    }
}

/// `⌊log₂ x⌋`, or [`EMPTY_BUCKET`] for zero.
pub fn scale(x: u64) -> Bucket {
    if x == 0 {
        EMPTY_BUCKET
    } else {
        63 - x.leading_zeros() as Bucket
    }
}

/// Sparse per-object counters over the concept tree; a missing entry is zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CounterVector {
    entries: BTreeMap<ConceptId, u64>,
}

impl CounterVector {
    /// Sums leaf counters up the tree. A value given on an internal concept
    /// counts as that concept's own contribution on top of its subtree.
    pub fn aggregate<'a, I>(tree: &ConceptTree, leaf_counters: I) -> Result<CounterVector>
    where
        I: IntoIterator<Item = (&'a str, u64)>,
    {
        let mut dense = vec![0u64; tree.len()];
        for (name, value) in leaf_counters {
            let id = tree.require(name)?;
            dense[id.index()] += value;
        }
        Ok(Self::from_self_contributions(tree, dense))
    }

    pub(crate) fn from_self_contributions(tree: &ConceptTree, mut dense: Vec<u64>) -> CounterVector {
        for id in tree.ids().rev() {
            if let Some(parent) = tree.parent(id) {
                dense[parent.index()] += dense[id.index()];
            }
        }
        Self::from_dense(&dense)
    }

    /// Loads counters as tabulated externally: missing internal concepts are
    /// filled with the sum of their children, explicit ones must cover it.
    pub fn from_explicit<I>(tree: &ConceptTree, values: I) -> Result<CounterVector>
    where
        I: IntoIterator<Item = (ConceptId, u64)>,
    {
        let mut explicit: Vec<Option<u64>> = vec![None; tree.len()];
        for (id, value) in values {
            explicit[id.index()] = Some(value);
        }
        let mut child_sum = vec![0u64; tree.len()];
        let mut dense = vec![0u64; tree.len()];
        for id in tree.ids().rev() {
            let i = id.index();
            let value = match explicit[i] {
                Some(v) if v < child_sum[i] => {
                    return Err(Error::Counters {
                        concept: tree.name(id).to_string(),
                        message: format!("value {v} is below the sum {} of its children", child_sum[i]),
                    })
                }
                Some(v) => v,
                None => child_sum[i],
            };
            dense[i] = value;
            if let Some(parent) = tree.parent(id) {
                child_sum[parent.index()] += value;
            }
        }
        Ok(Self::from_dense(&dense))
    }

    pub fn from_dense(dense: &[u64]) -> CounterVector {
        CounterVector {
            entries: dense
                .iter()
                .enumerate()
                .filter(|(_, v)| **v > 0)
                .map(|(i, v)| (ConceptId(i as u32), *v))
                .collect(),
        }
    }

    pub fn get(&self, id: ConceptId) -> u64 {
        self.entries.get(&id).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ConceptId, u64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn to_dense(&self, len: usize) -> Vec<u64> {
        let mut out = vec![0; len];
        for (id, v) in self.iter() {
            out[id.index()] = v;
        }
        out
    }

    /// Re-keys the vector onto another tree that contains every named concept.
    pub fn remap(&self, from: &ConceptTree, to: &ConceptTree) -> Result<CounterVector> {
        let mut entries = BTreeMap::new();
        for (id, v) in self.iter() {
            entries.insert(to.require(from.name(id))?, v);
        }
        Ok(CounterVector { entries })
    }
}
