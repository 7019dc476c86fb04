//! Subgroup discovery over hierarchical heap histograms.
//!
//! Snapshots carry descriptive attributes and byte counters over a package
//! tree. The miner finds attribute descriptions whose snapshots are
//! unexpectedly large on a set of incomparable packages or classes, scoring
//! them against a background model that absorbs each reported pattern.

pub mod background;
pub mod error;
pub mod evaluation;
pub mod hierarchy;
pub mod ingestion;
pub mod language;
pub mod measures;
pub mod miner;
pub mod report;

pub use background::{BackgroundModel, BucketDistribution, ModelSnapshot, UpdateWarning};
pub use error::{Error, Result};
pub use hierarchy::{scale, Bucket, ConceptId, ConceptTree, CounterVector};
pub use ingestion::{AttrValue, Attribute, AttributeKind, ClassRecord, Dataset, PriorTable};
pub use language::{Antichain, Pattern, Selector, SelectorForm, SubgroupPattern};
pub use measures::{IcMode, MeasureParams, Observations};
pub use miner::{sca_miner, AntichainSearch, Measure, Miner, MinerConfig, MiningResult};
pub use report::MiningReport;
