//! Hyperparameters from a TOML file, overridden by command-line flags.

use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use heapgroups::{AntichainSearch, IcMode, Measure, MinerConfig};
use serde::Deserialize;

/// Keys accepted in the config file; names match the long flags with `-`
/// replaced by `_`.
#[derive(Clone, Debug, Default, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Tuning {
    /// Beam width
    #[arg(long)]
    pub width: Option<usize>,
    /// Maximum number of selectors per description
    #[arg(long)]
    pub depth: Option<usize>,
    /// Number of patterns to report
    #[arg(long)]
    pub top: Option<usize>,
    /// Interestingness measure: si, si-no-update, cwracc, kl
    #[arg(long)]
    pub measure: Option<String>,
    /// Antichain search: greedy or exhaustive
    #[arg(long)]
    pub antichain: Option<String>,
    /// Quantile order of the communicated lower bounds
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the subgroup size in the description length
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight of the description size in the description length
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Weight of the antichain term in the description length
    #[arg(long)]
    pub eta: Option<f64>,
    /// Size exponent of the weighted relative accuracy baseline
    #[arg(long)]
    pub theta: Option<f64>,
    /// Information content per cell: tail or printed
    #[arg(long)]
    pub ic_mode: Option<String>,
    /// Equal-frequency bins for numeric attributes
    #[arg(long)]
    pub bins: Option<usize>,
    /// Largest log2 bucket of the background model
    #[arg(long)]
    pub bucket_cap: Option<i32>,
    /// Extent overlap at which post-processing drops a pattern
    #[arg(long)]
    pub jaccard_threshold: Option<f64>,
}

impl Tuning {
    pub fn load(path: &Path) -> Result<Tuning> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Flags set on `self` win over `file`.
    pub fn over(self, file: Tuning) -> Tuning {
        Tuning {
            width: self.width.or(file.width),
            depth: self.depth.or(file.depth),
            top: self.top.or(file.top),
            measure: self.measure.or(file.measure),
            antichain: self.antichain.or(file.antichain),
            alpha: self.alpha.or(file.alpha),
            beta: self.beta.or(file.beta),
            gamma: self.gamma.or(file.gamma),
            eta: self.eta.or(file.eta),
            theta: self.theta.or(file.theta),
            ic_mode: self.ic_mode.or(file.ic_mode),
            bins: self.bins.or(file.bins),
            bucket_cap: self.bucket_cap.or(file.bucket_cap),
            jaccard_threshold: self.jaccard_threshold.or(file.jaccard_threshold),
        }
    }

    pub fn miner_config(&self) -> Result<MinerConfig> {
        let mut c = MinerConfig::default();
        if let Some(v) = self.width {
            c.width = v;
        }
        if let Some(v) = self.depth {
            c.depth = v;
        }
        if let Some(v) = self.top {
            c.threshold = v;
        }
        if let Some(v) = &self.measure {
            c.measure = v.parse::<Measure>()?;
        }
        if let Some(v) = &self.antichain {
            c.antichain = match v.as_str() {
                "greedy" => AntichainSearch::Greedy,
                "exhaustive" => AntichainSearch::Exhaustive,
                other => return Err(heapgroups::Error::Config(format!("unknown antichain search {other:?}")).into()),
            };
        }
        if let Some(v) = &self.ic_mode {
            c.params.ic_mode = match v.as_str() {
                "tail" => IcMode::Tail,
                "printed" => IcMode::Printed,
                other => return Err(heapgroups::Error::Config(format!("unknown ic mode {other:?}")).into()),
            };
        }
        let p = &mut c.params;
        for (slot, v) in [
            (&mut p.alpha, self.alpha),
            (&mut p.beta, self.beta),
            (&mut p.gamma, self.gamma),
            (&mut p.eta, self.eta),
            (&mut p.theta, self.theta),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(v) = self.bins {
            c.bins = v;
        }
        if let Some(v) = self.bucket_cap {
            c.bucket_cap = v;
        }
        if let Some(v) = self.jaccard_threshold {
            c.jaccard_threshold = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: Tuning = toml::from_str("width = 10\nalpha = 0.3\nmeasure = \"kl\"").unwrap();
        let flags = Tuning {
            width: Some(7),
            ..Tuning::default()
        };
        let c = flags.over(file).miner_config().unwrap();
        assert_eq!(c.width, 7);
        assert_eq!(c.params.alpha, 0.3);
        assert_eq!(c.measure, Measure::Kl);
        assert_eq!(c.depth, 4);
    }

    #[test]
    fn defaults_match_the_reference_setup() {
        let c = Tuning::default().miner_config().unwrap();
        assert_eq!((c.width, c.depth, c.threshold), (50, 4, 20));
        assert_eq!((c.params.alpha, c.params.beta, c.params.gamma, c.params.eta), (0.2, 0.8, 0.2, 1.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Tuning>("beam = 3").is_err());
        assert!(Tuning {
            alpha: Some(1.5),
            ..Tuning::default()
        }
        .miner_config()
        .is_err());
    }
}
