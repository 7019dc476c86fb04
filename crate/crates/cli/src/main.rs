//! `heapgroups`: parse heap histograms, mine contrastive subgroups, compare
//! measures on synthetic data.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use heapgroups::evaluation::{generate_synthetic, run_comparison, SyntheticSpec};
use heapgroups::ingestion::{
    assemble_with_extra_concepts, build_prior_table, parse_jmap, truncate_top_k, AttributeTable,
};
use heapgroups::{ClassRecord, Dataset, Miner, MiningReport, ModelSnapshot, PriorTable};

use config::Tuning;

#[derive(Parser)]
#[command(name = "heapgroups", version, about = "Contrastive subgroup mining over JVM heap histograms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset (and optionally priors) from `jmap -histo` outputs
    Parse(ParseArgs),
    /// Mine the top patterns of a dataset
    Mine(MineArgs),
    /// Compare interestingness measures and write CSV reports
    Eval(EvalArgs),
    /// Generate a synthetic dataset with planted anomalies
    Synth(SynthArgs),
}

#[derive(Args)]
struct ParseArgs {
    /// Directory of histograms; each file's stem is its object id
    #[arg(long = "in")]
    input: PathBuf,
    /// Attribute CSV with header `objectId,name:kind,...`
    #[arg(long)]
    attrs: PathBuf,
    /// Classes kept per histogram, largest first
    #[arg(long, default_value_t = 200)]
    top_classes: usize,
    /// Byte counts are divided by this before aggregation
    #[arg(long, default_value_t = 1)]
    unit: u64,
    /// Directory of histograms from healthy servers, averaged into priors
    #[arg(long, requires = "priors_out")]
    reference: Option<PathBuf>,
    #[arg(long)]
    priors_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    dataset: PathBuf,
    /// JSON object mapping concept names to expected values
    #[arg(long)]
    priors: PathBuf,
    /// TOML file of hyperparameters; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

impl Inputs {
    fn load(&self) -> Result<(Dataset, PriorTable, heapgroups::MinerConfig)> {
        let text = fs::read_to_string(&self.dataset).with_context(|| format!("reading {}", self.dataset.display()))?;
        let dataset = Dataset::from_json(&text).with_context(|| format!("loading {}", self.dataset.display()))?;
        let text = fs::read_to_string(&self.priors).with_context(|| format!("reading {}", self.priors.display()))?;
        let named = PriorTable::parse_named(&text).with_context(|| format!("loading {}", self.priors.display()))?;
        let (dataset, priors) = heapgroups::ingestion::unify(dataset, &named)?;
        let file = match &self.config {
            Some(path) => Tuning::load(path)?,
            None => Tuning::default(),
        };
        let config = self.tuning.clone().over(file).miner_config()?;
        Ok((dataset, priors, config))
    }
}

#[derive(Args)]
struct MineArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Write the JSON report here
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the markdown report here instead of standard output
    #[arg(long)]
    markdown: Option<PathBuf>,
    /// Continue from a saved background model
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Save the final background model
    #[arg(long)]
    save_model: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Directory for patterns.csv, summary.csv and summary.md
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Overlapping anomalies on a tree of about 200 concepts
    Comparison,
    /// Three disjoint anomalies
    Disjoint,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "comparison")]
    preset: Preset,
    /// JSON generator spec; overrides --preset
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for dataset.json, priors.json, truth.json and spec.json
    #[arg(long)]
    out: PathBuf,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_histograms(dir: &Path) -> Result<BTreeMap<String, Vec<ClassRecord>>> {
    let mut out = BTreeMap::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.sort();
    for path in paths.into_iter().filter(|p| p.is_file()) {
        let Some(id) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let records = parse_jmap(&text).with_context(|| format!("parsing {}", path.display()))?;
        out.insert(id.to_string(), records);
    }
    if out.is_empty() {
        bail!(heapgroups::Error::Config(format!("no histograms in {}", dir.display())));
    }
    Ok(out)
}

fn parse(args: ParseArgs) -> Result<()> {
    let table = AttributeTable::from_csv(
        fs::File::open(&args.attrs).with_context(|| format!("opening {}", args.attrs.display()))?,
    )?;
    let mut by_stem = read_histograms(&args.input)?;
    // file names carry object ids with ';' replaced by '_'
    let mut histograms = BTreeMap::new();
    for id in table.rows.keys() {
        if let Some(records) = by_stem.remove(&id.replace(';', "_")) {
            histograms.insert(id.clone(), truncate_top_k(&records, args.top_classes)?);
        }
    }
    for (stem, records) in by_stem {
        histograms.insert(stem, records);
    }
    let references: Vec<(String, Vec<ClassRecord>)> = match &args.reference {
        Some(dir) => read_histograms(dir)?.into_iter().collect(),
        None => Vec::new(),
    };
    let extra = references
        .iter()
        .flat_map(|(_, records)| records.iter().map(|r| heapgroups::hierarchy::concept_name_for_class(&r.class_name)));
    let dataset = assemble_with_extra_concepts(&table, &histograms, args.unit, extra)?;
    write(&args.out, &dataset.to_json()?)?;
    log::info!("{} objects, {} concepts written to {}", dataset.len(), dataset.tree.len(), args.out.display());
    if let (Some(path), false) = (&args.priors_out, references.is_empty()) {
        let priors = build_prior_table(&references, &dataset.tree, args.unit)?;
        write(path, &priors.to_json(&dataset.tree)?)?;
    }
    Ok(())
}

fn mine(args: MineArgs) -> Result<ExitCode> {
    let (dataset, priors, config) = args.inputs.load()?;
    let miner = Miner::new(&dataset, &priors, config.clone())?;
    let mut model = miner.initial_model()?;
    if let Some(path) = &args.resume {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let snapshot: ModelSnapshot = serde_json::from_str(&text).with_context(|| format!("loading {}", path.display()))?;
        model.restore(&dataset.tree, &snapshot)?;
    }
    let result = miner.run_from(model)?;
    let report = MiningReport::new(&dataset, &priors, &config, &result)?;
    if let Some(path) = &args.report {
        write(path, &report.to_json()?)?;
    }
    match &args.markdown {
        Some(path) => write(path, &report.markdown())?,
        None => print!("{}", report.markdown()),
    }
    if let Some(path) = &args.save_model {
        write(path, &serde_json::to_string_pretty(&result.model.to_snapshot(&dataset.tree))?)?;
    }
    if let Some(e) = result.aborted {
        log::error!("mining stopped after {} patterns: {e}", result.patterns.len());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(args: EvalArgs) -> Result<()> {
    let (dataset, priors, config) = args.inputs.load()?;
    let report = run_comparison(&dataset, &priors, &config, config.threshold)?;
    write(&args.out.join("patterns.csv"), &report.patterns_csv()?)?;
    write(&args.out.join("summary.csv"), &report.summary_csv()?)?;
    write(&args.out.join("summary.md"), &report.markdown())?;
    print!("{}", report.markdown());
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("loading {}", path.display()))?
        }
        None => match args.preset {
            Preset::Comparison => SyntheticSpec::comparison_preset(args.seed),
            Preset::Disjoint => SyntheticSpec::disjoint_preset(args.seed),
        },
    };
    let (dataset, priors, truth) = generate_synthetic(&spec)?;
    write(&args.out.join("dataset.json"), &dataset.to_json()?)?;
    write(&args.out.join("priors.json"), &priors.to_json(&dataset.tree)?)?;
    write(&args.out.join("truth.json"), &serde_json::to_string_pretty(&truth)?)?;
    write(&args.out.join("spec.json"), &serde_json::to_string_pretty(&spec)?)?;
    Ok(())
}

/// 1 for bad input, 2 for internal faults.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<heapgroups::Error>() {
        return if e.is_input_error() { 1 } else { 2 };
    }
    let input = err.chain().any(|c| {
        c.is::<std::io::Error>() || c.is::<serde_json::Error>() || c.is::<toml::de::Error>()
    });
    if input {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Parse(a) => parse(a).map(|_| ExitCode::SUCCESS),
        Command::Mine(a) => mine(a),
        Command::Eval(a) => eval(a).map(|_| ExitCode::SUCCESS),
        Command::Synth(a) => synth(a).map(|_| ExitCode::SUCCESS),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(exit_code(&e))
    })
}
