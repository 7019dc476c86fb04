//! Browser bindings: explore the bucketed geometric law and its update, watch
//! propagation on the small `java.lang` tree, and mine the toy dataset.
//!
//! Everything crosses the boundary as JSON strings. The `demo` module holds
//! the plain Rust versions used by the native tests.

use wasm_bindgen::prelude::*;

pub mod demo {
    use std::collections::BTreeMap;

    use heapgroups::ingestion::unify;
    use heapgroups::{BackgroundModel, BucketDistribution, Dataset, Miner, MinerConfig, MiningReport, PriorTable};
    use serde::{Deserialize, Serialize};

    pub const TOY_DATASET: &str = include_str!("../../../data/toy/dataset.json");
    pub const TOY_PRIORS: &str = include_str!("../../../data/toy/priors.json");

    type Result<T> = std::result::Result<T, String>;

    fn err(e: impl std::fmt::Display) -> String {
        e.to_string()
    }

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    pub struct UpdateView {
        /// Bucket labels, `-1` for zero.
        pub buckets: Vec<i32>,
        pub before: Vec<f64>,
        pub after: Vec<f64>,
        pub tail_before: f64,
        pub tail_after: f64,
    }

    /// Bucket masses of a geometric prior before and after communicating
    /// that the value is at least `2^t` with order `alpha`.
    pub fn update_view(mean: f64, cap: i32, t: i32, alpha: f64) -> Result<UpdateView> {
        if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
            return Err(format!("alpha must lie in (0, 1), got {alpha}"));
        }
        if !(-1..=cap).contains(&t) {
            return Err(format!("bucket {t} outside -1..={cap}"));
        }
        let prior = BucketDistribution::geometric(mean, cap).map_err(err)?;
        let after = prior
            .conditioned(t, alpha)
            .ok_or_else(|| format!("Pr(Y >= {t}) is 0 or 1; nothing to update"))?;
        Ok(UpdateView {
            buckets: (-1..=cap).collect(),
            before: prior.probs(),
            after: after.probs(),
            tail_before: prior.tail(t),
            tail_after: after.tail(t),
        })
    }

    #[derive(Debug, Deserialize)]
    pub struct Statement {
        pub concept: String,
        pub bucket: i32,
        #[serde(default = "default_alpha")]
        pub alpha: f64,
    }

    fn default_alpha() -> f64 {
        0.2
    }

    #[derive(Debug, Serialize, PartialEq)]
    pub struct ConceptView {
        pub concept: String,
        pub parent: Option<String>,
        pub prior_mean: f64,
        /// `Pr(Y >= b)` for every bucket `b` from `-1` to the cap.
        pub tails: Vec<f64>,
    }

    /// Beliefs about one snapshot of the toy tree after the given statements
    /// have been communicated and propagated.
    pub fn propagate_toy(statements_json: &str, cap: i32) -> Result<Vec<ConceptView>> {
        let statements: Vec<Statement> = serde_json::from_str(statements_json).map_err(err)?;
        let (ds, priors) = toy()?;
        let tree = &ds.tree;
        let mut model = BackgroundModel::new(&priors, cap, vec!["snapshot".into()]).map_err(err)?;
        for s in &statements {
            let c = tree.require(&s.concept).map_err(err)?;
            model.apply_pattern_update(tree, &[0], &[(c, s.bucket)], s.alpha).map_err(err)?;
        }
        if !statements.is_empty() {
            model.propagate(tree, &[0]).map_err(err)?;
        }
        Ok(tree
            .ids()
            .map(|c| ConceptView {
                concept: tree.name(c).to_string(),
                parent: tree.parent(c).map(|p| tree.name(p).to_string()),
                prior_mean: priors.mean(c),
                tails: (-1..=cap).map(|b| model.tail_probability(0, c, b)).collect(),
            })
            .collect())
    }

    fn toy() -> Result<(Dataset, PriorTable)> {
        let ds = Dataset::from_json(TOY_DATASET).map_err(err)?;
        let priors: BTreeMap<String, f64> = PriorTable::parse_named(TOY_PRIORS).map_err(err)?;
        unify(ds, &priors).map_err(err)
    }

    /// Mines `dataset_json` against `priors_json`; `config_json` may set any
    /// miner field. Returns the report as JSON.
    pub fn mine(dataset_json: &str, priors_json: &str, config_json: &str) -> Result<MiningReport> {
        let ds = Dataset::from_json(dataset_json).map_err(err)?;
        let named = PriorTable::parse_named(priors_json).map_err(err)?;
        let (ds, priors) = unify(ds, &named).map_err(err)?;
        let config: MinerConfig = if config_json.trim().is_empty() {
            MinerConfig::default()
        } else {
            serde_json::from_str(config_json).map_err(err)?
        };
        let result = Miner::new(&ds, &priors, config.clone()).map_err(err)?.run().map_err(err)?;
        MiningReport::new(&ds, &priors, &config, &result).map_err(err)
    }

    pub fn mine_toy(config_json: &str) -> Result<MiningReport> {
        mine(TOY_DATASET, TOY_PRIORS, config_json)
    }
}

fn js<T: serde::Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = updateView)]
pub fn update_view(mean: f64, cap: i32, t: i32, alpha: f64) -> Result<String, JsError> {
    js(demo::update_view(mean, cap, t, alpha))
}

#[wasm_bindgen(js_name = propagateToy)]
pub fn propagate_toy(statements_json: &str, cap: i32) -> Result<String, JsError> {
    js(demo::propagate_toy(statements_json, cap))
}

#[wasm_bindgen(js_name = mineToy)]
pub fn mine_toy(config_json: &str) -> Result<String, JsError> {
    js(demo::mine_toy(config_json))
}

#[wasm_bindgen]
pub fn mine(dataset_json: &str, priors_json: &str, config_json: &str) -> Result<String, JsError> {
    js(demo::mine(dataset_json, priors_json, config_json))
}

#[wasm_bindgen(js_name = toyDataset)]
pub fn toy_dataset() -> String {
    demo::TOY_DATASET.to_string()
}

#[wasm_bindgen(js_name = toyPriors)]
pub fn toy_priors() -> String {
    demo::TOY_PRIORS.to_string()
}
