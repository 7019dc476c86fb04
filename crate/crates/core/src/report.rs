//! Human and machine readable summaries of a mining run.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hierarchy::Bucket;
use crate::ingestion::{Dataset, PriorTable};
use crate::language::Pattern;
use crate::measures::{contrast, quantile, Observations};
use crate::miner::{MinerConfig, MiningResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptSummary {
    pub concept: String,
    /// Quantile bucket; values in it are at least `2^bucket`.
    pub bucket: Bucket,
    pub min: u64,
    /// The alpha-quantile of the subgroup's raw values.
    pub quantile: u64,
    pub mean: f64,
    pub max: u64,
    pub expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSummary {
    pub rank: usize,
    pub description: String,
    pub antichain: String,
    pub objects: Vec<String>,
    pub concepts: Vec<ConceptSummary>,
    pub ic: f64,
    pub dl: f64,
    pub si: f64,
    pub score: f64,
    pub contrast: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub measure: String,
    pub alpha: f64,
    pub objects: usize,
    pub concepts: usize,
    pub patterns: Vec<PatternSummary>,
    /// Skipped updates, as `object/concept (tail t)`.
    pub warnings: Vec<String>,
    pub aborted: Option<String>,
}

fn summarize(
    rank: usize,
    p: &Pattern,
    dataset: &Dataset,
    priors: &PriorTable,
    obs: &Observations,
    alpha: f64,
) -> Result<PatternSummary> {
    let tree = &dataset.tree;
    let concepts = p
        .antichain
        .quantiles()
        .into_iter()
        .map(|(c, bucket)| {
            let values: Vec<u64> = p.extent.iter().map(|o| obs.count(*o, c)).collect();
            Ok(ConceptSummary {
                concept: tree.name(c).to_string(),
                bucket,
                min: values.iter().copied().min().unwrap_or(0),
                quantile: quantile(&values, alpha)?,
                mean: values.iter().sum::<u64>() as f64 / values.len() as f64,
                max: values.iter().copied().max().unwrap_or(0),
                expected: priors.mean(c),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PatternSummary {
        rank,
        description: p.subgroup.to_string(),
        antichain: p.antichain.render(tree),
        objects: p.extent.iter().map(|o| dataset.objects[*o].id.clone()).collect(),
        concepts,
        ic: p.ic,
        dl: p.dl,
        si: p.si,
        score: p.score,
        contrast: contrast(obs, priors, p),
    })
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("1 {word}")
    } else {
        format!("{n} {word}s")
    }
}

impl MiningReport {
    pub fn new(dataset: &Dataset, priors: &PriorTable, config: &MinerConfig, result: &MiningResult) -> Result<MiningReport> {
        let obs = Observations::new(dataset, config.bucket_cap);
        let alpha = config.params.alpha;
        let patterns = result
            .patterns
            .iter()
            .enumerate()
            .map(|(i, p)| summarize(i + 1, p, dataset, priors, &obs, alpha))
            .collect::<Result<Vec<_>>>()?;
        let warnings = result
            .warnings
            .iter()
            .map(|w| format!("{}/{} (tail {})", w.object, dataset.tree.name(w.concept), w.tail))
            .collect();
        Ok(MiningReport {
            measure: serde_json::to_value(config.measure)?
                .as_str()
                .unwrap_or_default()
                .to_string(),
            alpha,
            objects: dataset.len(),
            concepts: dataset.tree.len(),
            patterns,
            warnings,
            aborted: result.aborted.as_ref().map(|e| e.to_string()),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn markdown(&self) -> String {
        let mut out = format!(
            "# Mining report\n\n{}, measure `{}`, alpha {}, {} objects, {} concepts.\n",
            plural(self.patterns.len(), "pattern"),
            self.measure,
            self.alpha,
            self.objects,
            self.concepts
        );
        for p in &self.patterns {
            out.push_str(&format!(
                "\n## {}. {} ⇒ {}\n\nSI {:.4} (IC {:.4} bits, DL {:.4}), score {:.4}, contrast {:.4}, {}: {}\n\n",
                p.rank,
                p.description,
                p.antichain,
                p.si,
                p.ic,
                p.dl,
                p.score,
                p.contrast,
                plural(p.objects.len(), "object"),
                p.objects.join(", ")
            ));
            out.push_str("| concept | bucket | min | quantile | mean | max | expected |\n|---|---:|---:|---:|---:|---:|---:|\n");
            for c in &p.concepts {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {:.1} | {} | {:.1} |\n",
                    c.concept, c.bucket, c.min, c.quantile, c.mean, c.max, c.expected
                ));
            }
        }
        if !self.warnings.is_empty() {
            out.push_str("\n## Skipped updates\n\n");
            for w in &self.warnings {
                out.push_str(&format!("- {w}\n"));
            }
        }
        if let Some(e) = &self.aborted {
            out.push_str(&format!("\nMining stopped early: {e}\n"));
        }
        out
    }
}
