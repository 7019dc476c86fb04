//! Turning `jmap -histo` output and attribute tables into a [`Dataset`],
//! plus the prior table derived from healthy reference histograms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{concept_name_for_class, ConceptId, ConceptTree, CounterVector, ROOT_NAME};

/// Smallest prior mean; keeps the geometric parameter inside `(0, 1)`.
pub const PRIOR_FLOOR: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassRecord {
    pub rank: u32,
    pub instances: u64,
    pub bytes: u64,
    pub class_name: String,
    /// Module suffix printed by recent JDKs, e.g. `java.base@25.0.2`.
    pub module: Option<String>,
}

const JMAP_HEADER: &str = " num     #instances         #bytes  class name (module)\n\
                           -------------------------------------------------------\n";

/// Parses the numbered rows of a class histogram. Header, footer and the
/// `pid:` line that `jcmd GC.class_histogram` prepends are skipped.
pub fn parse_jmap(text: &str) -> Result<Vec<ClassRecord>> {
    let mut records = Vec::new();
    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        let Some((rank, rest)) = line.trim().split_once(':') else {
            continue;
        };
        if rank.is_empty() || !rank.bytes().all(|b| b.is_ascii_digit()) || rest.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let rank: u32 = rank
            .parse()
            .map_err(|_| parse_err(format!("rank {rank:?} out of range")))?;
        let mut fields = rest.split_whitespace();
        let mut number = |what: &str| -> Result<u64> {
            let field = fields.next().unwrap_or("");
            field
                .parse()
                .map_err(|_| parse_err(format!("{what} field {field:?} is not a count")))
        };
        let instances = number("instances")?;
        let bytes = number("bytes")?;
        let class_name = fields
            .next()
            .ok_or_else(|| parse_err("missing class name".into()))?
            .to_string();
        let module = fields.collect::<Vec<_>>().join(" ");
        let module = module
            .strip_prefix('(')
            .and_then(|m| m.strip_suffix(')'))
            .map(str::to_string)
            .or_else(|| (!module.is_empty()).then_some(module));
        records.push(ClassRecord {
            rank,
            instances,
            bytes,
            class_name,
            module,
        });
    }
    Ok(records)
}

/// Renders records in the layout `jmap -histo` prints.
pub fn render_jmap(records: &[ClassRecord]) -> String {
    let mut out = String::from(JMAP_HEADER);
    let (mut instances, mut bytes) = (0u64, 0u64);
    for r in records {
        instances += r.instances;
        bytes += r.bytes;
        let _ = write!(out, "{:>4}: {:>13} {:>14}  {}", r.rank, r.instances, r.bytes, r.class_name);
        if let Some(module) = &r.module {
            let _ = write!(out, " ({module})");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "Total{instances:>14} {bytes:>14}");
    out
}

/// Keeps the `k` classes retaining the most bytes; ties go to the
/// lexicographically smaller class name.
pub fn truncate_top_k(records: &[ClassRecord], k: usize) -> Result<Vec<ClassRecord>> {
    if k == 0 {
        return Err(Error::Config("top-k class count must be at least 1".into()));
    }
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| b.bytes.cmp(&a.bytes).then_with(|| a.class_name.cmp(&b.class_name)));
    sorted.truncate(k);
    Ok(sorted)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Categorical,
    Numeric,
    Boolean,
}

impl std::str::FromStr for AttributeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "categorical" | "nominal" => Ok(AttributeKind::Categorical),
            "numeric" | "numerical" => Ok(AttributeKind::Numeric),
            "boolean" | "bool" => Ok(AttributeKind::Boolean),
            other => Err(Error::Config(format!("unknown attribute kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Flag(bool),
    Number(f64),
    Category(String),
}

impl AttrValue {
    fn parse(raw: &str, kind: AttributeKind) -> Option<Result<AttrValue>> {
        let raw = raw.trim();
        if raw.is_empty() {
            return None;
        }
        Some(match kind {
            AttributeKind::Categorical => Ok(AttrValue::Category(raw.to_string())),
            AttributeKind::Numeric => raw
                .parse::<f64>()
                .map(AttrValue::Number)
                .map_err(|_| Error::Consistency(format!("{raw:?} is not numeric"))),
            AttributeKind::Boolean => match raw.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" | "t" => Ok(AttrValue::Flag(true)),
                "false" | "0" | "no" | "f" => Ok(AttrValue::Flag(false)),
                _ => Err(Error::Consistency(format!("{raw:?} is not a boolean"))),
            },
        })
    }

    fn matches_kind(&self, kind: AttributeKind) -> bool {
        matches!(
            (self, kind),
            (AttrValue::Flag(_), AttributeKind::Boolean)
                | (AttrValue::Number(_), AttributeKind::Numeric)
                | (AttrValue::Category(_), AttributeKind::Categorical)
        )
    }
}

/// Descriptive attributes per object, as read from the attribute CSV.
///
/// The header row is `objectId,name:kind,name:kind,...`; empty cells are
/// missing values.
#[derive(Clone, Debug, Default)]
pub struct AttributeTable {
    pub schema: Vec<Attribute>,
    pub rows: BTreeMap<String, Vec<Option<AttrValue>>>,
}

impl AttributeTable {
    pub fn from_csv<R: Read>(reader: R) -> Result<AttributeTable> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = csv.headers()?.clone();
        let mut schema = Vec::new();
        for column in header.iter().skip(1) {
            let (name, kind) = column
                .rsplit_once(':')
                .ok_or_else(|| Error::Config(format!("column {column:?} lacks a `:kind` suffix")))?;
            schema.push(Attribute {
                name: name.trim().to_string(),
                kind: kind.parse()?,
            });
        }
        let mut rows = BTreeMap::new();
        for (index, record) in csv.records().enumerate() {
            let record = record?;
            let line = index + 2;
            let id = record.get(0).unwrap_or("").to_string();
            if id.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: "empty object id".into(),
                });
            }
            let mut values = Vec::with_capacity(schema.len());
            for (column, attr) in schema.iter().enumerate() {
                let raw = record.get(column + 1).unwrap_or("");
                values.push(AttrValue::parse(raw, attr.kind).transpose().map_err(|e| Error::Parse {
                    line,
                    message: format!("{}: {e}", attr.name),
                })?);
            }
            if rows.insert(id.clone(), values).is_some() {
                return Err(Error::Consistency(format!("object {id:?} listed twice")));
            }
        }
        Ok(AttributeTable { schema, rows })
    }
}

#[derive(Clone, Debug)]
pub struct DataObject {
    pub id: String,
    pub values: Vec<Option<AttrValue>>,
    pub counters: CounterVector,
}

/// Snapshots with their descriptive attributes and counters over one shared
/// concept tree.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub schema: Vec<Attribute>,
    pub objects: Vec<DataObject>,
    pub tree: ConceptTree,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn object_index(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    /// Re-keys all counters onto `tree`, which must contain every concept
    /// present in the current tree.
    pub fn with_tree(self, tree: ConceptTree) -> Result<Dataset> {
        let objects = self
            .objects
            .into_iter()
            .map(|o| {
                Ok(DataObject {
                    counters: o.counters.remap(&self.tree, &tree)?,
                    ..o
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            schema: self.schema,
            objects,
            tree,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            schema: self.schema.clone(),
            objects: self
                .objects
                .iter()
                .map(|o| ObjectEntry {
                    id: o.id.clone(),
                    attrs: self
                        .schema
                        .iter()
                        .zip(&o.values)
                        .map(|(a, v)| (a.name.clone(), v.clone()))
                        .collect(),
                    counters: o
                        .counters
                        .iter()
                        .map(|(id, v)| (self.tree.name(id).to_string(), v))
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Loads the canonical dataset JSON. Counters are read as explicit
    /// values; missing packages are filled with their children's sum.
    pub fn from_json(text: &str) -> Result<Dataset> {
        let file: DatasetFile = serde_json::from_str(text)?;
        let names: BTreeSet<&str> = file
            .objects
            .iter()
            .flat_map(|o| o.counters.keys().map(String::as_str))
            .filter(|n| *n != ROOT_NAME)
            .collect();
        let tree = ConceptTree::build(names)?;
        let mut objects = Vec::with_capacity(file.objects.len());
        let mut seen = BTreeSet::new();
        for entry in file.objects {
            if !seen.insert(entry.id.clone()) {
                return Err(Error::Consistency(format!("object {:?} listed twice", entry.id)));
            }
            let mut values = Vec::with_capacity(file.schema.len());
            for attr in &file.schema {
                let value = entry.attrs.get(&attr.name).ok_or_else(|| {
                    Error::Consistency(format!("object {:?} has no value for {:?}", entry.id, attr.name))
                })?;
                let value = match value {
                    // integral JSON numbers deserialize into Number regardless
                    Some(AttrValue::Number(n)) if attr.kind == AttributeKind::Categorical => {
                        Some(AttrValue::Category(n.to_string()))
                    }
                    Some(v) if !v.matches_kind(attr.kind) => {
                        return Err(Error::Consistency(format!(
                            "object {:?}: value {v:?} does not fit {:?} attribute {:?}",
                            entry.id, attr.kind, attr.name
                        )))
                    }
                    other => other.clone(),
                };
                values.push(value);
            }
            let explicit = entry
                .counters
                .iter()
                .map(|(name, v)| Ok((tree.require(name)?, *v)))
                .collect::<Result<Vec<_>>>()?;
            objects.push(DataObject {
                id: entry.id,
                values,
                counters: CounterVector::from_explicit(&tree, explicit)?,
            });
        }
        Ok(Dataset {
            schema: file.schema,
            objects,
            tree,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    schema: Vec<Attribute>,
    objects: Vec<ObjectEntry>,
}

#[derive(Serialize, Deserialize)]
struct ObjectEntry {
    id: String,
    attrs: BTreeMap<String, Option<AttrValue>>,
    counters: BTreeMap<String, u64>,
}

fn leaf_values<'a>(records: &'a [ClassRecord], unit: u64) -> impl Iterator<Item = (String, u64)> + 'a {
    records
        .iter()
        .map(move |r| (concept_name_for_class(&r.class_name), r.bytes / unit))
}

fn aggregate_records(tree: &ConceptTree, records: &[ClassRecord], unit: u64) -> Result<CounterVector> {
    let leaves: Vec<(String, u64)> = leaf_values(records, unit).collect();
    CounterVector::aggregate(tree, leaves.iter().map(|(n, v)| (n.as_str(), *v)))
}

/// Joins attribute rows with per-object histograms. Byte counts are divided
/// by `unit` (rounding down) before aggregation.
pub fn assemble_dataset(
    table: &AttributeTable,
    histograms: &BTreeMap<String, Vec<ClassRecord>>,
    unit: u64,
) -> Result<Dataset> {
    assemble_with_extra_concepts(table, histograms, unit, std::iter::empty::<String>())
}

/// Like [`assemble_dataset`], with extra class names folded into the tree
/// (e.g. classes only seen in reference histograms).
pub fn assemble_with_extra_concepts<I, S>(
    table: &AttributeTable,
    histograms: &BTreeMap<String, Vec<ClassRecord>>,
    unit: u64,
    extra_names: I,
) -> Result<Dataset>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if unit == 0 {
        return Err(Error::Config("counter unit must be at least 1".into()));
    }
    let missing_rows: Vec<&String> = histograms.keys().filter(|id| !table.rows.contains_key(*id)).collect();
    let missing_histos: Vec<&String> = table.rows.keys().filter(|id| !histograms.contains_key(*id)).collect();
    if !missing_rows.is_empty() || !missing_histos.is_empty() {
        return Err(Error::Consistency(format!(
            "histograms without attributes: {missing_rows:?}; attributes without histograms: {missing_histos:?}"
        )));
    }

    let mut names: BTreeSet<String> = histograms
        .values()
        .flat_map(|records| records.iter().map(|r| concept_name_for_class(&r.class_name)))
        .collect();
    names.extend(extra_names.into_iter().map(|s| s.as_ref().to_string()));
    let tree = ConceptTree::build(&names)?;

    let objects = histograms
        .iter()
        .map(|(id, records)| {
            Ok(DataObject {
                id: id.clone(),
                values: table.rows[id].clone(),
                counters: aggregate_records(&tree, records, unit)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        schema: table.schema.clone(),
        objects,
        tree,
    })
}

/// Expected counter value `x̄` of every concept.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorTable {
    means: Vec<f64>,
}

impl PriorTable {
    pub fn from_means(means: Vec<f64>) -> Result<PriorTable> {
        if let Some(bad) = means.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::Config(format!("prior mean {bad} is not positive")));
        }
        Ok(PriorTable { means })
    }

    /// Prior for each tree concept taken from `named`; concepts without an
    /// entry, or below the floor, get [`PRIOR_FLOOR`].
    pub fn from_named(tree: &ConceptTree, named: &BTreeMap<String, f64>) -> PriorTable {
        PriorTable {
            means: tree
                .ids()
                .map(|id| named.get(tree.name(id)).copied().unwrap_or(0.0).max(PRIOR_FLOOR))
                .collect(),
        }
    }

    pub fn mean(&self, id: ConceptId) -> f64 {
        self.means[id.index()]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn to_named(&self, tree: &ConceptTree) -> BTreeMap<String, f64> {
        tree.ids().map(|id| (tree.name(id).to_string(), self.mean(id))).collect()
    }

    pub fn to_json(&self, tree: &ConceptTree) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_named(tree))?)
    }

    pub fn parse_named(text: &str) -> Result<BTreeMap<String, f64>> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Mean aggregated counter per concept over healthy reference histograms.
pub fn build_prior_table(
    references: &[(String, Vec<ClassRecord>)],
    tree: &ConceptTree,
    unit: u64,
) -> Result<PriorTable> {
    if references.is_empty() {
        return Err(Error::Config("at least one reference histogram is required".into()));
    }
    if unit == 0 {
        return Err(Error::Config("counter unit must be at least 1".into()));
    }
    let mut sums = vec![0f64; tree.len()];
    for (_, records) in references {
        for (id, v) in aggregate_records(tree, records, unit)?.iter() {
            sums[id.index()] += v as f64;
        }
    }
    let n = references.len() as f64;
    Ok(PriorTable {
        means: sums.into_iter().map(|s| (s / n).max(PRIOR_FLOOR)).collect(),
    })
}

/// Builds one tree covering both the dataset and a named prior table, and
/// returns the dataset re-keyed onto it alongside the aligned priors.
pub fn unify(dataset: Dataset, priors: &BTreeMap<String, f64>) -> Result<(Dataset, PriorTable)> {
    let names: BTreeSet<&str> = dataset
        .tree
        .names()
        .chain(priors.keys().map(String::as_str))
        .filter(|n| *n != ROOT_NAME)
        .collect();
    let tree = ConceptTree::build(names)?;
    let priors = PriorTable::from_named(&tree, priors);
    Ok((dataset.with_tree(tree)?, priors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(rank: u32, bytes: u64, name: &str) -> ClassRecord {
        ClassRecord {
            rank,
            instances: 1,
            bytes,
            class_name: name.into(),
            module: None,
        }
    }

    #[test]
    fn parses_plain_rows() {
        let recs = parse_jmap("   1:  176346  36216976  [C\n").unwrap();
        assert_eq!(recs, vec![ClassRecord {
            rank: 1,
            instances: 176346,
            bytes: 36216976,
            class_name: "[C".into(),
            module: None
        }]);
        let recs = parse_jmap("  9:  1024  65536  java.util.LinkedHashMap").unwrap();
        assert_eq!((recs[0].rank, recs[0].instances, recs[0].bytes), (9, 1024, 65536));
        assert_eq!(recs[0].class_name, "java.util.LinkedHashMap");
    }

    #[test]
    fn header_and_footer_only() {
        let text = format!("{JMAP_HEADER}Total             0              0\n");
        assert!(parse_jmap(&text).unwrap().is_empty());
        assert!(parse_jmap("").unwrap().is_empty());
    }

    #[test]
    fn module_suffix_is_split_off() {
        let recs = parse_jmap("   5:          4193         100632  java.lang.String (java.base@25.0.2)").unwrap();
        assert_eq!(recs[0].class_name, "java.lang.String");
        assert_eq!(recs[0].module.as_deref(), Some("java.base@25.0.2"));
    }

    #[test]
    fn non_numeric_counts_report_the_line() {
        let err = parse_jmap(&format!("{JMAP_HEADER}   1:  12  34  a.B\n   2:  1x  34  a.C\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_jmap("   1:  12  abc  a.B"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn top_k_truncation() {
        let recs: Vec<ClassRecord> = (0..500).map(|i| record(i + 1, (i as u64 * 7919) % 1000, &format!("c.C{i}"))).collect();
        let kept = truncate_top_k(&recs, 200).unwrap();
        assert_eq!(kept.len(), 200);
        let min_kept = kept.iter().map(|r| r.bytes).min().unwrap();
        let kept_names: BTreeSet<&str> = kept.iter().map(|r| r.class_name.as_str()).collect();
        for r in &recs {
            if !kept_names.contains(r.class_name.as_str()) {
                assert!(r.bytes <= min_kept);
            }
        }
        assert_eq!(truncate_top_k(&recs[..3], 200).unwrap().len(), 3);

        let tie = [record(1, 10, "b.B"), record(2, 10, "a.A"), record(3, 20, "z.Z")];
        let kept = truncate_top_k(&tie, 2).unwrap();
        assert_eq!(kept[1].class_name, "a.A");

        assert!(matches!(truncate_top_k(&tie, 0), Err(Error::Config(_))));
    }

    fn table(ids: &[&str]) -> AttributeTable {
        let mut csv = String::from("objectId,softType:categorical,Xmx:numeric,weekDay:boolean\n");
        for (i, id) in ids.iter().enumerate() {
            csv.push_str(&format!("{id},T{},{}e9,{}\n", i % 2, i + 1, i % 2 == 0));
        }
        AttributeTable::from_csv(csv.as_bytes()).unwrap()
    }

    #[test]
    fn attribute_csv_schema() {
        let t = AttributeTable::from_csv("id,a:categorical,b:numeric,c:boolean\no1,x,,yes\n".as_bytes()).unwrap();
        assert_eq!(t.schema.len(), 3);
        assert_eq!(t.schema[1].kind, AttributeKind::Numeric);
        assert_eq!(t.rows["o1"], vec![Some(AttrValue::Category("x".into())), None, Some(AttrValue::Flag(true))]);
        assert!(AttributeTable::from_csv("id,a\n".as_bytes()).is_err());
        assert!(AttributeTable::from_csv("id,a:numeric\no1,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn single_object_single_class() {
        let t = table(&["s1;t1"]);
        let mut h = BTreeMap::new();
        h.insert("s1;t1".to_string(), vec![record(1, 42, "a.b.C")]);
        let ds = assemble_dataset(&t, &h, 1).unwrap();
        assert_eq!(ds.tree.len(), 4);
        assert!(ds.tree.ids().all(|id| ds.objects[0].counters.get(id) == 42));
    }

    #[test]
    fn sparse_missing_classes_and_units() {
        let t = table(&["a", "b"]);
        let mut h = BTreeMap::new();
        h.insert("a".to_string(), vec![record(1, 3 << 20, "x.Y"), record(2, 5 << 20, "x.Z")]);
        h.insert("b".to_string(), vec![record(1, (1 << 20) + 7, "x.Y")]);
        let ds = assemble_dataset(&t, &h, 1 << 20).unwrap();
        let z = ds.tree.require("x.Z").unwrap();
        let x = ds.tree.require("x").unwrap();
        assert_eq!(ds.objects[0].counters.get(x), 8);
        assert_eq!(ds.objects[1].counters.get(z), 0);
        assert_eq!(ds.objects[1].counters.get(x), 1);
    }

    #[test]
    fn orphans_are_reported() {
        let t = table(&["a", "b"]);
        let mut h = BTreeMap::new();
        h.insert("a".to_string(), vec![record(1, 3, "x.Y")]);
        h.insert("c".to_string(), vec![record(1, 3, "x.Y")]);
        match assemble_dataset(&t, &h, 1) {
            Err(Error::Consistency(msg)) => assert!(msg.contains("\"c\"") && msg.contains("\"b\"")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn assembly_ignores_input_order() {
        let t = table(&["a", "b", "c"]);
        let histos = [
            ("c", vec![record(1, 9, "q.R"), record(2, 1, "p.S")]),
            ("a", vec![record(1, 4, "p.S")]),
            ("b", vec![record(1, 2, "[C")]),
        ];
        let forward: BTreeMap<String, Vec<ClassRecord>> = histos.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        let backward: BTreeMap<String, Vec<ClassRecord>> = histos.iter().rev().map(|(k, v)| (k.to_string(), v.clone())).collect();
        let d1 = assemble_dataset(&t, &forward, 1).unwrap();
        let d2 = assemble_dataset(&t, &backward, 1).unwrap();
        assert_eq!(d1.to_json().unwrap(), d2.to_json().unwrap());
    }

    #[test]
    fn priors_average_references() {
        let mb = 1u64 << 20;
        let refs = vec![
            ("h1".to_string(), vec![record(1, 150 * mb, "java.lang.String")]),
            ("h2".to_string(), vec![record(1, 170 * mb, "java.lang.String"), record(2, 3 * mb, "a.B")]),
        ];
        let tree = ConceptTree::build(["java.lang.String", "a.B", "never.Seen"]).unwrap();
        let priors = build_prior_table(&refs, &tree, mb).unwrap();
        assert_eq!(priors.mean(tree.require("java.lang.String").unwrap()), 160.0);
        assert_eq!(priors.mean(tree.require("a.B").unwrap()), 1.5);
        assert_eq!(priors.mean(tree.require("never.Seen").unwrap()), PRIOR_FLOOR);

        let single = build_prior_table(&refs[..1], &tree, mb).unwrap();
        assert_eq!(single.mean(tree.require("java.lang.String").unwrap()), 150.0);
        assert!(matches!(build_prior_table(&[], &tree, mb), Err(Error::Config(_))));
        assert!(priors.means().iter().all(|m| *m >= PRIOR_FLOOR));
    }

    #[test]
    fn dataset_json_round_trip() {
        let t = table(&["a", "b"]);
        let mut h = BTreeMap::new();
        h.insert("a".to_string(), vec![record(1, 3, "x.Y"), record(2, 5, "[I")]);
        h.insert("b".to_string(), vec![record(1, 4, "x.Y")]);
        let ds = assemble_dataset(&t, &h, 1).unwrap();
        let json = ds.to_json().unwrap();
        let back = Dataset::from_json(&json).unwrap();
        assert_eq!(back.to_json().unwrap(), json);
        assert_eq!(back.objects[0].values, ds.objects[0].values);
    }

    #[test]
    fn unify_adds_prior_only_concepts() {
        let t = table(&["a"]);
        let mut h = BTreeMap::new();
        h.insert("a".to_string(), vec![record(1, 3, "x.Y")]);
        let ds = assemble_dataset(&t, &h, 1).unwrap();
        let mut named = BTreeMap::new();
        named.insert("x.Y".to_string(), 2.0);
        named.insert("z.W".to_string(), 7.0);
        let (ds, priors) = unify(ds, &named).unwrap();
        assert_eq!(ds.tree.len(), 5);
        assert_eq!(priors.mean(ds.tree.require("z.W").unwrap()), 7.0);
        assert_eq!(priors.mean(ds.tree.require("x").unwrap()), PRIOR_FLOOR);
        assert_eq!(ds.objects[0].counters.get(ds.tree.require("x.Y").unwrap()), 3);
    }
}
